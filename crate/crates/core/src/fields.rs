//! Coordinate charts and evaluable fields.
//!
//! A field is a map from chart points to components, evaluable at plain f64
//! points and at nested dual-number points so that exterior derivatives and
//! Lie brackets come out of forward-mode AD exactly (to rounding), never from
//! finite differences.
//!
//! Concrete field types implement [`SmoothEval`] once, generically over the
//! scalar level; the [`smooth_map_obj!`] macro wires that into the
//! object-safe [`SmoothMap`] used for storage and composition.

use std::sync::Arc;

use crate::linalg::{self, Mat};
use crate::scalar::{AdScalar, Scalar, D1, D2, D3, D4};
use crate::{Error, Result};

/// A coordinate chart: just a dimension and coordinate labels.
#[derive(Clone, Debug)]
pub struct Chart {
    pub dim: usize,
    pub labels: Vec<String>,
}

impl Chart {
    pub fn new(dim: usize, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), dim);
        Chart { dim, labels }
    }

    pub fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "point of dimension {} on a chart of dimension {}",
                p.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Object-safe evaluation interface at each supported dual level.
pub trait SmoothMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval0(&self, p: &[f64], out: &mut [f64]);
    fn eval1(&self, p: &[D1], out: &mut [D1]);
    fn eval2(&self, p: &[D2], out: &mut [D2]);
    fn eval3(&self, p: &[D3], out: &mut [D3]);
    fn eval4(&self, p: &[D4], out: &mut [D4]);
}

/// Generic evaluation, implemented by each concrete field type.
pub trait SmoothEval {
    fn dims(&self) -> (usize, usize);
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]);
}

/// Implements [`SmoothMap`] for a type implementing [`SmoothEval`].
#[macro_export]
macro_rules! smooth_map_obj {
    ($t:ty) => {
        impl $crate::fields::SmoothMap for $t {
            fn dim_in(&self) -> usize {
                $crate::fields::SmoothEval::dims(self).0
            }
            fn dim_out(&self) -> usize {
                $crate::fields::SmoothEval::dims(self).1
            }
            fn eval0(&self, p: &[f64], out: &mut [f64]) {
                $crate::fields::SmoothEval::eval_generic(self, p, out)
            }
            fn eval1(&self, p: &[$crate::scalar::D1], out: &mut [$crate::scalar::D1]) {
                $crate::fields::SmoothEval::eval_generic(self, p, out)
            }
            fn eval2(&self, p: &[$crate::scalar::D2], out: &mut [$crate::scalar::D2]) {
                $crate::fields::SmoothEval::eval_generic(self, p, out)
            }
            fn eval3(&self, p: &[$crate::scalar::D3], out: &mut [$crate::scalar::D3]) {
                $crate::fields::SmoothEval::eval_generic(self, p, out)
            }
            fn eval4(&self, p: &[$crate::scalar::D4], out: &mut [$crate::scalar::D4]) {
                $crate::fields::SmoothEval::eval_generic(self, p, out)
            }
        }
    };
}

/// Shared handle to an evaluable map.
pub type MapRef = Arc<dyn SmoothMap>;

/// Evaluates a map handle at any supported scalar level.
pub fn eval_at<S: AdScalar>(f: &dyn SmoothMap, p: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); f.dim_out()];
    S::eval_map(f, p, &mut out);
    out
}

/// Value and directional derivative of `f` at `p` along `dir`, one dual
/// level above the calling level.
pub fn dir_deriv<S: AdScalar>(f: &dyn SmoothMap, p: &[S], dir: &[S]) -> (Vec<S>, Vec<S>) {
    let dp: Vec<S::Up> = p.iter().zip(dir).map(|(&a, &b)| S::up(a, b)).collect();
    let o = eval_at::<S::Up>(f, &dp);
    (
        o.iter().map(|&u| S::down_re(u)).collect(),
        o.iter().map(|&u| S::down_eps(u)).collect(),
    )
}

/// Partial derivatives ∂_μ f^i at `p`, as a dim_out × dim_in row-major table.
pub fn jacobian<S: AdScalar>(f: &dyn SmoothMap, p: &[S]) -> Vec<S> {
    let din = f.dim_in();
    let dout = f.dim_out();
    let mut jac = vec![S::zero(); dout * din];
    let mut dir = vec![S::zero(); din];
    for mu in 0..din {
        dir[mu] = S::one();
        let (_, d) = dir_deriv(f, p, &dir);
        dir[mu] = S::zero();
        for i in 0..dout {
            jac[i * din + mu] = d[i];
        }
    }
    jac
}

// ---------------------------------------------------------------------------
// Field wrappers
// ---------------------------------------------------------------------------

/// Scalar-valued field (dim_out = 1).
#[derive(Clone)]
pub struct ScalarField(pub MapRef);

/// Vector field in chart coordinates (dim_out = dim_in).
#[derive(Clone)]
pub struct VectorField(pub MapRef);

/// 1-form; components are the covector entries (dim_out = dim_in).
#[derive(Clone)]
pub struct OneForm(pub MapRef);

/// 2-form; components (dθ)_{μν} stored row-major (dim_out = dim_in²).
#[derive(Clone)]
pub struct TwoForm(pub MapRef);

impl ScalarField {
    pub fn eval<S: AdScalar>(&self, p: &[S]) -> S {
        eval_at(self.0.as_ref(), p)[0]
    }
}

impl VectorField {
    pub fn dim(&self) -> usize {
        self.0.dim_in()
    }
    pub fn eval<S: AdScalar>(&self, p: &[S]) -> Vec<S> {
        eval_at(self.0.as_ref(), p)
    }
}

impl OneForm {
    pub fn dim(&self) -> usize {
        self.0.dim_in()
    }
    pub fn components<S: AdScalar>(&self, p: &[S]) -> Vec<S> {
        eval_at(self.0.as_ref(), p)
    }
    /// Pairs the form with a vector value at a point.
    pub fn apply<S: AdScalar>(&self, p: &[S], v: &[S]) -> S {
        let c = self.components(p);
        pair(&c, v)
    }
}

impl TwoForm {
    pub fn dim(&self) -> usize {
        self.0.dim_in()
    }
    /// Evaluates ω(v, w) at a point.
    pub fn apply<S: AdScalar>(&self, p: &[S], v: &[S], w: &[S]) -> S {
        let d = self.dim();
        let c = eval_at(self.0.as_ref(), p);
        let mut acc = S::zero();
        for mu in 0..d {
            for nu in 0..d {
                acc += c[mu * d + nu] * v[mu] * w[nu];
            }
        }
        acc
    }
}

pub fn pair<S: Scalar>(covec: &[S], vec: &[S]) -> S {
    covec
        .iter()
        .zip(vec)
        .fold(S::zero(), |acc, (&c, &v)| acc + c * v)
}

// ---------------------------------------------------------------------------
// Basic concrete fields
// ---------------------------------------------------------------------------

/// Multivariate polynomial: sum of coeff · Π u_i^{e_i} terms.
#[derive(Clone, Debug)]
pub struct Poly {
    pub dim: usize,
    pub terms: Vec<(f64, Vec<(usize, u32)>)>,
}

impl Poly {
    pub fn constant(dim: usize, c: f64) -> Self {
        Poly {
            dim,
            terms: vec![(c, vec![])],
        }
    }

    /// Affine polynomial c0 + Σ c_i u_i.
    pub fn affine(dim: usize, c0: f64, linear: &[(usize, f64)]) -> Self {
        let mut terms = vec![(c0, vec![])];
        for &(i, c) in linear {
            terms.push((c, vec![(i, 1)]));
        }
        Poly { dim, terms }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(c, m)| *c == 0.0 || m.is_empty())
    }
}

impl SmoothEval for Poly {
    fn dims(&self) -> (usize, usize) {
        (self.dim, 1)
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        let mut acc = S::zero();
        for (c, monomial) in &self.terms {
            let mut t = S::from_f64(*c);
            for &(i, e) in monomial {
                t = t * p[i].powi(e as i32);
            }
            acc += t;
        }
        out[0] = acc;
    }
}
smooth_map_obj!(Poly);

/// Vector field with polynomial components.
pub struct PolyVec {
    pub dim: usize,
    pub comps: Vec<Poly>,
}

impl SmoothEval for PolyVec {
    fn dims(&self) -> (usize, usize) {
        (self.dim, self.comps.len())
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        let mut o = [S::zero()];
        for (i, c) in self.comps.iter().enumerate() {
            c.eval_generic(p, &mut o);
            out[i] = o[0];
        }
    }
}
smooth_map_obj!(PolyVec);

/// 1-form with polynomial components.
pub struct PolyForm {
    pub dim: usize,
    pub comps: Vec<Poly>,
}

impl SmoothEval for PolyForm {
    fn dims(&self) -> (usize, usize) {
        (self.dim, self.comps.len())
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        let mut o = [S::zero()];
        for (i, c) in self.comps.iter().enumerate() {
            c.eval_generic(p, &mut o);
            out[i] = o[0];
        }
    }
}
smooth_map_obj!(PolyForm);

/// Product of two scalar fields.
pub struct ProductField(pub ScalarField, pub ScalarField);

impl SmoothEval for ProductField {
    fn dims(&self) -> (usize, usize) {
        (self.0 .0.dim_in(), 1)
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        out[0] = self.0.eval(p) * self.1.eval(p);
    }
}
smooth_map_obj!(ProductField);

/// c / f for a scalar field f.
pub struct RecipField {
    pub numerator: f64,
    pub field: ScalarField,
}

impl SmoothEval for RecipField {
    fn dims(&self) -> (usize, usize) {
        (self.field.0.dim_in(), 1)
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        out[0] = S::from_f64(self.numerator) / self.field.eval(p);
    }
}
smooth_map_obj!(RecipField);

/// Constant-coefficient linear combination Σ cᵢ·fᵢ of equally-shaped maps.
pub struct LinComb {
    pub terms: Vec<(f64, MapRef)>,
}

impl SmoothEval for LinComb {
    fn dims(&self) -> (usize, usize) {
        (self.terms[0].1.dim_in(), self.terms[0].1.dim_out())
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for (c, f) in &self.terms {
            let v = eval_at(f.as_ref(), p);
            for (o, x) in out.iter_mut().zip(v) {
                *o += S::from_f64(*c) * x;
            }
        }
    }
}
smooth_map_obj!(LinComb);

/// Pointwise scalar-field multiple of a map: s(p) · f(p).
pub struct Scaled {
    pub factor: ScalarField,
    pub base: MapRef,
}

impl SmoothEval for Scaled {
    fn dims(&self) -> (usize, usize) {
        (self.base.dim_in(), self.base.dim_out())
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        let s = self.factor.eval(p);
        let v = eval_at(self.base.as_ref(), p);
        for (o, x) in out.iter_mut().zip(v) {
            *o = s * x;
        }
    }
}
smooth_map_obj!(Scaled);

// ---------------------------------------------------------------------------
// Exterior derivative and Lie bracket
// ---------------------------------------------------------------------------

struct DScalar(ScalarField);

impl SmoothEval for DScalar {
    fn dims(&self) -> (usize, usize) {
        let d = self.0 .0.dim_in();
        (d, d)
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        let j = jacobian(self.0 .0.as_ref(), p);
        out.copy_from_slice(&j);
    }
}
smooth_map_obj!(DScalar);

struct DOneForm(OneForm);

impl SmoothEval for DOneForm {
    fn dims(&self) -> (usize, usize) {
        let d = self.0 .0.dim_in();
        (d, d * d)
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        let d = self.0 .0.dim_in();
        // jac[nu * d + mu] = ∂_mu θ_nu
        let jac = jacobian(self.0 .0.as_ref(), p);
        for mu in 0..d {
            for nu in 0..d {
                out[mu * d + nu] = jac[nu * d + mu] - jac[mu * d + nu];
            }
        }
    }
}
smooth_map_obj!(DOneForm);

/// Exterior derivative of a scalar field: (df)_μ = ∂_μ f.
pub fn exterior_derivative_scalar(f: &ScalarField) -> OneForm {
    OneForm(Arc::new(DScalar(f.clone())))
}

/// Exterior derivative of a 1-form: (dθ)_{μν} = ∂_μ θ_ν − ∂_ν θ_μ.
pub fn exterior_derivative(theta: &OneForm) -> TwoForm {
    TwoForm(Arc::new(DOneForm(theta.clone())))
}

struct Bracket(VectorField, VectorField);

impl SmoothEval for Bracket {
    fn dims(&self) -> (usize, usize) {
        let d = self.0 .0.dim_in();
        (d, d)
    }
    fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
        let av = self.0.eval(p);
        let bv = self.1.eval(p);
        // [A,B]^μ = A^ν ∂_ν B^μ − B^ν ∂_ν A^μ, via one directional derivative each.
        let (_, db_along_a) = dir_deriv(self.1 .0.as_ref(), p, &av);
        let (_, da_along_b) = dir_deriv(self.0 .0.as_ref(), p, &bv);
        for i in 0..out.len() {
            out[i] = db_along_a[i] - da_along_b[i];
        }
    }
}
smooth_map_obj!(Bracket);

/// Lie bracket of two vector fields, computed by dual-number directional
/// derivatives of the component functions.
pub fn lie_bracket(a: &VectorField, b: &VectorField) -> VectorField {
    assert_eq!(a.0.dim_in(), b.0.dim_in());
    VectorField(Arc::new(Bracket(a.clone(), b.clone())))
}

// ---------------------------------------------------------------------------
// Signature of symmetric matrices
// ---------------------------------------------------------------------------

/// Inertia of a symmetric matrix: eigenvalue counts above, below, and within
/// the zero tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub pos: usize,
    pub neg: usize,
    pub zero: usize,
}

/// Default tolerance separating zero eigenvalues from signed ones.
pub const SIGNATURE_ZERO_TOL: f64 = 1e-7;

/// Signature of a symmetric matrix. Rejects matrices whose symmetry residual
/// exceeds `tol`; eigenvalues in [−tol_zero, tol_zero] count as zero where
/// `tol_zero = tol`.
pub fn signature(s: &Mat, tol: f64) -> Result<Signature> {
    if s.rows != s.cols {
        return Err(Error::InvalidInput(format!(
            "signature of a {}x{} matrix",
            s.rows, s.cols
        )));
    }
    let sym_res = s.sym_residual();
    if sym_res > tol {
        return Err(Error::constraint(
            "signature",
            "input must be symmetric",
            sym_res,
        ));
    }
    let (ev, _) = linalg::sym_eigen(s);
    let mut sig = Signature {
        pos: 0,
        neg: 0,
        zero: 0,
    };
    for e in ev {
        if e > tol {
            sig.pos += 1;
        } else if e < -tol {
            sig.neg += 1;
        } else {
            sig.zero += 1;
        }
    }
    Ok(sig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coord_field(dim: usize, i: usize) -> ScalarField {
        ScalarField(Arc::new(Poly {
            dim,
            terms: vec![(1.0, vec![(i, 1)])],
        }))
    }

    #[test]
    fn d_of_df_is_zero_on_product() {
        // f = u1·u2 on a 3-dim chart; d(df)(∂1, ∂2) = 0.
        let f = ScalarField(Arc::new(Poly {
            dim: 3,
            terms: vec![(1.0, vec![(0, 1), (1, 1)])],
        }));
        let ddf = exterior_derivative(&exterior_derivative_scalar(&f));
        let p = [0.3, -1.2, 0.5];
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        assert!(ddf.apply(&p, &e1, &e2).abs() < 1e-14);
    }

    #[test]
    fn d_of_linear_form() {
        // θ = u1 du2 on ℝ²: dθ(∂1, ∂2) = 1.
        let theta = OneForm(Arc::new(PolyForm {
            dim: 2,
            comps: vec![
                Poly::constant(2, 0.0),
                Poly {
                    dim: 2,
                    terms: vec![(1.0, vec![(0, 1)])],
                },
            ],
        }));
        let dth = exterior_derivative(&theta);
        let v = dth.apply(&[0.7, 0.1], &[1.0, 0.0], &[0.0, 1.0]);
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bracket_of_coordinate_fields_vanishes() {
        let a = VectorField(Arc::new(PolyVec {
            dim: 2,
            comps: vec![Poly::constant(2, 1.0), Poly::constant(2, 0.0)],
        }));
        let b = VectorField(Arc::new(PolyVec {
            dim: 2,
            comps: vec![Poly::constant(2, 0.0), Poly::constant(2, 1.0)],
        }));
        let br = lie_bracket(&a, &b).eval(&[0.2, 0.4]);
        assert!(br.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn bracket_linear_coefficient() {
        // [u1 ∂2, ∂1] = −∂2.
        let a = VectorField(Arc::new(PolyVec {
            dim: 2,
            comps: vec![
                Poly::constant(2, 0.0),
                Poly {
                    dim: 2,
                    terms: vec![(1.0, vec![(0, 1)])],
                },
            ],
        }));
        let b = VectorField(Arc::new(PolyVec {
            dim: 2,
            comps: vec![Poly::constant(2, 1.0), Poly::constant(2, 0.0)],
        }));
        let br = lie_bracket(&a, &b).eval(&[0.9, -0.3]);
        assert!(br[0].abs() < 1e-15);
        assert!((br[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn signature_examples() {
        let d = Mat::from_rows(&[
            vec![-1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let s = signature(&d, 1e-9).unwrap();
        assert_eq!(
            s,
            Signature {
                pos: 1,
                neg: 2,
                zero: 0
            }
        );
        let z = Mat::zeros(4, 4);
        let s = signature(&z, 1e-9).unwrap();
        assert_eq!(
            s,
            Signature {
                pos: 0,
                neg: 0,
                zero: 4
            }
        );
        // Asymmetric input rejected.
        let mut bad = Mat::zeros(2, 2);
        bad[(0, 1)] = 1.0;
        assert!(signature(&bad, 1e-9).is_err());
    }

    #[test]
    fn signature_of_levi_block_matrix() {
        // The 4×4 vertical block of the Levi form with h = l = 0.5 has
        // eigenvalues (h ± √(h² + 4l²))/2, each twice. Frozen from the
        // eigen-decomposition oracle below.
        let (h, l) = (0.5, 0.5);
        let m = Mat::from_rows(&[
            vec![h, 0.0, 0.0, l],
            vec![0.0, h, -l, 0.0],
            vec![0.0, -l, 0.0, 0.0],
            vec![l, 0.0, 0.0, 0.0],
        ]);
        let s = signature(&m, 1e-9).unwrap();
        assert_eq!(
            s,
            Signature {
                pos: 2,
                neg: 2,
                zero: 0
            }
        );
        let (ev, _) = linalg::sym_eigen(&m);
        let lo = (h - (h * h + 4.0 * l * l).sqrt()) / 2.0;
        let hi = (h + (h * h + 4.0 * l * l).sqrt()) / 2.0;
        assert!((ev[0] - lo).abs() < 1e-12 && (ev[1] - lo).abs() < 1e-12);
        assert!((ev[2] - hi).abs() < 1e-12 && (ev[3] - hi).abs() < 1e-12);
    }

    #[test]
    fn one_form_cartan_formula_cross_validates_bracket() {
        // dθ(A,B) = A(θ(B)) − B(θ(A)) − θ([A,B]) on polynomial data.
        let dim = 3;
        let theta = OneForm(Arc::new(PolyForm {
            dim,
            comps: vec![
                Poly {
                    dim,
                    terms: vec![(1.0, vec![(1, 2)])],
                },
                Poly {
                    dim,
                    terms: vec![(-0.5, vec![(0, 1), (2, 1)])],
                },
                Poly {
                    dim,
                    terms: vec![(2.0, vec![(0, 1)]), (1.0, vec![])],
                },
            ],
        }));
        let a = VectorField(Arc::new(PolyVec {
            dim,
            comps: vec![
                Poly {
                    dim,
                    terms: vec![(1.0, vec![(2, 1)])],
                },
                Poly::constant(dim, 1.0),
                Poly {
                    dim,
                    terms: vec![(1.0, vec![(0, 1), (1, 1)])],
                },
            ],
        }));
        let b = VectorField(Arc::new(PolyVec {
            dim,
            comps: vec![
                Poly::constant(dim, 0.5),
                Poly {
                    dim,
                    terms: vec![(1.0, vec![(0, 2)])],
                },
                Poly {
                    dim,
                    terms: vec![(-1.0, vec![(1, 1)])],
                },
            ],
        }));
        let p = [0.4, -0.2, 0.8];
        let dth = exterior_derivative(&theta);
        let av = a.eval(&p);
        let bv = b.eval(&p);
        let lhs = dth.apply(&p, &av, &bv);

        // A(θ(B)): directional derivative of the scalar u ↦ θ_u(B_u) along A.
        struct PairField(OneForm, VectorField);
        impl SmoothEval for PairField {
            fn dims(&self) -> (usize, usize) {
                (self.0 .0.dim_in(), 1)
            }
            fn eval_generic<S: AdScalar>(&self, p: &[S], out: &mut [S]) {
                let c = self.0.components(p);
                let v = self.1.eval(p);
                out[0] = pair(&c, &v);
            }
        }
        smooth_map_obj!(PairField);
        let theta_b = PairField(theta.clone(), b.clone());
        let theta_a = PairField(theta.clone(), a.clone());
        let (_, d1) = dir_deriv(&theta_b, &p, &av);
        let (_, d2) = dir_deriv(&theta_a, &p, &bv);
        let br = lie_bracket(&a, &b).eval(&p);
        let rhs = d1[0] - d2[0] - theta.apply(&p, &br);
        assert!(
            (lhs - rhs).abs() < 1e-9,
            "Cartan formula residual {}",
            (lhs - rhs).abs()
        );
    }

    proptest! {
        #[test]
        fn dd_vanishes_on_random_quadratics(
            c in proptest::collection::vec(-2.0f64..2.0, 9),
            p in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            // f = c0 u0² + c1 u1² + c2 u2² + c3 u0u1 + c4 u0u2 + c5 u1u2 + linear
            let f = ScalarField(Arc::new(Poly {
                dim: 3,
                terms: vec![
                    (c[0], vec![(0, 2)]),
                    (c[1], vec![(1, 2)]),
                    (c[2], vec![(2, 2)]),
                    (c[3], vec![(0, 1), (1, 1)]),
                    (c[4], vec![(0, 1), (2, 1)]),
                    (c[5], vec![(1, 1), (2, 1)]),
                    (c[6], vec![(0, 1)]),
                    (c[7], vec![(1, 1)]),
                    (c[8], vec![(2, 1)]),
                ],
            }));
            let ddf = exterior_derivative(&exterior_derivative_scalar(&f));
            for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let mut ei = [0.0; 3];
                let mut ej = [0.0; 3];
                ei[i] = 1.0;
                ej[j] = 1.0;
                prop_assert!(ddf.apply(&p[..], &ei, &ej).abs() < 1e-10);
            }
        }

        #[test]
        fn jacobi_identity_on_random_linear_fields(
            m1 in proptest::collection::vec(-1.0f64..1.0, 9),
            m2 in proptest::collection::vec(-1.0f64..1.0, 9),
            m3 in proptest::collection::vec(-1.0f64..1.0, 9),
            p in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            // Linear fields X^i = Σ M_ij u_j; their brackets are again linear,
            // so nesting stays well-conditioned.
            let mk = |m: &Vec<f64>| {
                VectorField(Arc::new(PolyVec {
                    dim: 3,
                    comps: (0..3)
                        .map(|i| Poly {
                            dim: 3,
                            terms: (0..3).map(|j| (m[3 * i + j], vec![(j, 1)])).collect(),
                        })
                        .collect(),
                }))
            };
            let (a, b, c) = (mk(&m1), mk(&m2), mk(&m3));
            let t1 = lie_bracket(&lie_bracket(&a, &b), &c).eval(&p[..]);
            let t2 = lie_bracket(&lie_bracket(&b, &c), &a).eval(&p[..]);
            let t3 = lie_bracket(&lie_bracket(&c, &a), &b).eval(&p[..]);
            for i in 0..3 {
                prop_assert!((t1[i] + t2[i] + t3[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn sylvester_inertia_is_congruence_invariant(
            d in proptest::collection::vec(-3.0f64..3.0, 4),
            m in proptest::collection::vec(-1.0f64..1.0, 16),
        ) {
            // signature(MᵀDM) = signature(D) for invertible M.
            let diag = Mat::from_fn(4, 4, |i, j| if i == j { d[i] } else { 0.0 });
            let mut mm = Mat::from_fn(4, 4, |i, j| m[4 * i + j]);
            // Nudge towards invertibility; skip if still near-singular.
            for i in 0..4 {
                mm[(i, i)] += 2.0;
            }
            let sv = linalg::singular_values(&mm);
            prop_assume!(sv[3] > 0.2);
            // Keep eigenvalues of D away from the zero tolerance.
            prop_assume!(d.iter().all(|x| x.abs() > 0.05));
            let congr = mm.transpose().matmul(&diag).matmul(&mm);
            let s1 = signature(&diag, 1e-9).unwrap();
            let s2 = signature(&congr, 1e-9).unwrap();
            prop_assert_eq!(s1, s2);
        }
    }
}

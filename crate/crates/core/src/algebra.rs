//! The split quaternion algebra 𝔹 and its structure maps.
//!
//! Basis {1, j1, j2, j3} with j1² = j2² = 1, j3² = −1 and
//! j1 j2 = −j2 j1 = j3. The imaginary part Im(𝔹) ≅ ℝ³ carries the inner
//! product ⟨a,b⟩ = −a1b1 − a2b2 + a3b3 of signature (−,−,+) and a cross
//! product with ⟨a×b, c⟩ = det[a|b|c].
//!
//! Arithmetic is generic over [`Scalar`] so the same kernels run on plain
//! reals and on dual numbers inside field evaluations.

use crate::linalg::{self, Mat};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Element of 𝔹: a0 + a1 j1 + a2 j2 + a3 j3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitQuat<S> {
    pub a0: S,
    pub a1: S,
    pub a2: S,
    pub a3: S,
}

/// The f64 instantiation used by most call sites.
pub type SplitQuaternion = SplitQuat<f64>;

/// Imaginary vector (a1, a2, a3) with the signature ε = (−1, −1, +1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImVec<S> {
    pub x1: S,
    pub x2: S,
    pub x3: S,
}

pub type ImVector = ImVec<f64>;

impl<S: Scalar> SplitQuat<S> {
    pub fn new(a0: S, a1: S, a2: S, a3: S) -> Self {
        SplitQuat { a0, a1, a2, a3 }
    }

    pub fn from_f64(a0: f64, a1: f64, a2: f64, a3: f64) -> Self {
        SplitQuat::new(
            S::from_f64(a0),
            S::from_f64(a1),
            S::from_f64(a2),
            S::from_f64(a3),
        )
    }

    pub fn zero() -> Self {
        Self::from_f64(0.0, 0.0, 0.0, 0.0)
    }
    pub fn one() -> Self {
        Self::from_f64(1.0, 0.0, 0.0, 0.0)
    }
    /// Basis element j_s for s in 1..=3.
    pub fn j(s: usize) -> Self {
        match s {
            1 => Self::from_f64(0.0, 1.0, 0.0, 0.0),
            2 => Self::from_f64(0.0, 0.0, 1.0, 0.0),
            3 => Self::from_f64(0.0, 0.0, 0.0, 1.0),
            _ => panic!("basis index must be 1, 2 or 3"),
        }
    }

    pub fn from_im(v: ImVec<S>) -> Self {
        SplitQuat::new(S::zero(), v.x1, v.x2, v.x3)
    }

    pub fn add(self, o: Self) -> Self {
        SplitQuat::new(
            self.a0 + o.a0,
            self.a1 + o.a1,
            self.a2 + o.a2,
            self.a3 + o.a3,
        )
    }

    pub fn sub(self, o: Self) -> Self {
        SplitQuat::new(
            self.a0 - o.a0,
            self.a1 - o.a1,
            self.a2 - o.a2,
            self.a3 - o.a3,
        )
    }

    pub fn scale(self, c: S) -> Self {
        SplitQuat::new(self.a0 * c, self.a1 * c, self.a2 * c, self.a3 * c)
    }

    pub fn neg(self) -> Self {
        self.scale(S::from_f64(-1.0))
    }

    /// Product in 𝔹 from the multiplication table
    /// j1² = j2² = 1, j3² = −1, j1j2 = −j2j1 = j3,
    /// j2j3 = −j3j2 = −j1, j3j1 = −j1j3 = −j2.
    pub fn mul(self, o: Self) -> Self {
        let (a0, a1, a2, a3) = (self.a0, self.a1, self.a2, self.a3);
        let (b0, b1, b2, b3) = (o.a0, o.a1, o.a2, o.a3);
        SplitQuat::new(
            a0 * b0 + a1 * b1 + a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 - a2 * b3 + a3 * b2,
            a0 * b2 + a2 * b0 + a1 * b3 - a3 * b1,
            a0 * b3 + a3 * b0 + a1 * b2 - a2 * b1,
        )
    }

    /// Conjugate a0 − a1 j1 − a2 j2 − a3 j3.
    pub fn conj(self) -> Self {
        SplitQuat::new(
            self.a0,
            -self.a1,
            -self.a2,
            -self.a3,
        )
    }

    pub fn re(self) -> S {
        self.a0
    }

    pub fn im(self) -> ImVec<S> {
        ImVec {
            x1: self.a1,
            x2: self.a2,
            x3: self.a3,
        }
    }

    pub fn max_abs(self) -> f64 {
        self.a0
            .value()
            .abs()
            .max(self.a1.value().abs())
            .max(self.a2.value().abs())
            .max(self.a3.value().abs())
    }
}

/// Conjugate together with the real/imaginary split a = re + im.
pub fn sq_conj_re_im<S: Scalar>(a: SplitQuat<S>) -> (SplitQuat<S>, S, ImVec<S>) {
    (a.conj(), a.re(), a.im())
}

impl<S: Scalar> ImVec<S> {
    pub fn new(x1: S, x2: S, x3: S) -> Self {
        ImVec { x1, x2, x3 }
    }

    pub fn from_f64(x1: f64, x2: f64, x3: f64) -> Self {
        ImVec::new(S::from_f64(x1), S::from_f64(x2), S::from_f64(x3))
    }

    pub fn comp(self, s: usize) -> S {
        match s {
            0 => self.x1,
            1 => self.x2,
            2 => self.x3,
            _ => panic!("imaginary component index out of range"),
        }
    }
}

/// ⟨a,b⟩ = −a1b1 − a2b2 + a3b3 = −Re(ab).
pub fn im_inner<S: Scalar>(a: ImVec<S>, b: ImVec<S>) -> S {
    -a.x1 * b.x1 - a.x2 * b.x2 + a.x3 * b.x3
}

/// Cross product: the imaginary part of the product of two imaginary
/// elements; satisfies ⟨a×b, c⟩ = det[a|b|c].
pub fn im_cross<S: Scalar>(a: ImVec<S>, b: ImVec<S>) -> ImVec<S> {
    SplitQuat::from_im(a).mul(SplitQuat::from_im(b)).im()
}

// ---------------------------------------------------------------------------
// SO(1,2) and the basis-triple correspondence
// ---------------------------------------------------------------------------

/// Metric matrix of the Im(𝔹) inner product.
pub fn eta_metric3() -> Mat {
    Mat::from_rows(&[
        vec![-1.0, 0.0, 0.0],
        vec![0.0, -1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ])
}

/// Residual of SO(1,2) membership: max of |MᵀηM − η| entries and |det M − 1|.
pub fn so12_residual(m: &Mat) -> f64 {
    let e = eta_metric3();
    let r = m.transpose().matmul(&e).matmul(m).sub(&e).max_abs();
    r.max((linalg::det3(m) - 1.0).abs())
}

pub fn is_so12(m: &Mat, tol: f64) -> bool {
    so12_residual(m) <= tol
}

/// Maximum residual of the defining triple relations
/// γ1² = γ2² = 1, γ1γ2 = −γ2γ1 = γ3.
pub fn triple_relation_residual(g: &[SplitQuaternion; 3]) -> f64 {
    let one = SplitQuaternion::one();
    let r1 = g[0].mul(g[0]).sub(one).max_abs();
    let r2 = g[1].mul(g[1]).sub(one).max_abs();
    let g12 = g[0].mul(g[1]);
    let r3 = g12.sub(g[2]).max_abs();
    let r4 = g12.add(g[1].mul(g[0])).max_abs();
    r1.max(r2).max(r3).max(r4)
}

/// Basis triple γ_s = Σ_t M_st j_t from an SO(1,2) matrix. The relations
/// γ1² = γ2² = 1, γ1γ2 = −γ2γ1 = γ3 hold exactly when M ∈ SO(1,2); a
/// non-member is rejected with the offending relation residual.
pub fn gamma_from_so12(m: &Mat, tol: f64) -> Result<[SplitQuaternion; 3]> {
    let g = [
        SplitQuaternion::from_f64(0.0, m[(0, 0)], m[(0, 1)], m[(0, 2)]),
        SplitQuaternion::from_f64(0.0, m[(1, 0)], m[(1, 1)], m[(1, 2)]),
        SplitQuaternion::from_f64(0.0, m[(2, 0)], m[(2, 1)], m[(2, 2)]),
    ];
    let res = triple_relation_residual(&g);
    if res > tol {
        return Err(Error::constraint(
            "gamma_from_so12",
            "rows must satisfy the basis-triple relations (input not in SO(1,2))",
            res,
        ));
    }
    Ok(g)
}

/// Recovers the SO(1,2) matrix from a valid basis triple (the inverse of
/// [`gamma_from_so12`]). Rejects triples violating the relations and triples
/// with a real part.
pub fn so12_from_gamma(g: &[SplitQuaternion; 3], tol: f64) -> Result<Mat> {
    let re = g[0].a0.abs().max(g[1].a0.abs()).max(g[2].a0.abs());
    if re > tol {
        return Err(Error::constraint(
            "so12_from_gamma",
            "triple must be imaginary",
            re,
        ));
    }
    let res = triple_relation_residual(g);
    if res > tol {
        return Err(Error::constraint(
            "so12_from_gamma",
            "triple relations violated",
            res,
        ));
    }
    let m = Mat::from_rows(&[
        vec![g[0].a1, g[0].a2, g[0].a3],
        vec![g[1].a1, g[1].a2, g[1].a3],
        vec![g[2].a1, g[2].a2, g[2].a3],
    ]);
    let so_res = so12_residual(&m);
    if so_res > tol {
        return Err(Error::constraint(
            "so12_from_gamma",
            "recovered matrix must preserve the (−,−,+) inner product",
            so_res,
        ));
    }
    Ok(m)
}

/// so(1,2) basis: one rotation (in the −,− plane) and two boosts.
pub fn so12_generator(coeffs: [f64; 3]) -> Mat {
    let [a, b, c] = coeffs;
    Mat::from_rows(&[
        vec![0.0, -a, b],
        vec![a, 0.0, c],
        vec![b, c, 0.0],
    ])
}

/// An SO(1,2) element from Lie algebra coefficients via the exponential map;
/// defining relations hold to machine precision.
pub fn so12_exp(coeffs: [f64; 3]) -> Mat {
    linalg::expm3(&so12_generator(coeffs))
}

// ---------------------------------------------------------------------------
// The 2×2 real matrix representation
// ---------------------------------------------------------------------------

/// Algebra isomorphism 𝔹 ≅ M₂(ℝ):
/// j1 ↦ [[1,0],[0,−1]], j2 ↦ [[0,1],[1,0]], j3 ↦ [[0,1],[−1,0]].
pub fn mat2_rep(a: SplitQuaternion) -> [[f64; 2]; 2] {
    [
        [a.a0 + a.a1, a.a2 + a.a3],
        [a.a2 - a.a3, a.a0 - a.a1],
    ]
}

pub fn mat2_mul(x: [[f64; 2]; 2], y: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for (yk, yrow) in y.iter().enumerate() {
                out[i][j] += x[i][yk] * yrow[j];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Sp(n,𝔹) × Sp(1,𝔹) action on 𝔹ⁿ
// ---------------------------------------------------------------------------

/// Square matrix over 𝔹, row-major.
#[derive(Clone, Debug)]
pub struct BMatrix {
    pub n: usize,
    pub a: Vec<SplitQuaternion>,
}

impl BMatrix {
    pub fn identity(n: usize) -> Self {
        let mut a = vec![SplitQuaternion::zero(); n * n];
        for i in 0..n {
            a[i * n + i] = SplitQuaternion::one();
        }
        BMatrix { n, a }
    }

    pub fn at(&self, i: usize, j: usize) -> SplitQuaternion {
        self.a[i * self.n + j]
    }

    /// Residual of ĀᵀA = 1 (Sp(n,𝔹) membership).
    pub fn sp_residual(&self) -> f64 {
        let n = self.n;
        let mut res: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut acc = SplitQuaternion::zero();
                for k in 0..n {
                    acc = acc.add(self.at(k, i).conj().mul(self.at(k, j)));
                }
                let expect = if i == j {
                    SplitQuaternion::one()
                } else {
                    SplitQuaternion::zero()
                };
                res = res.max(acc.sub(expect).max_abs());
            }
        }
        res
    }
}

/// ⟨x,y⟩ = Re(x̄ᵀ y) on 𝔹ⁿ.
pub fn bvec_inner(x: &[SplitQuaternion], y: &[SplitQuaternion]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| a.conj().mul(*b).re())
        .sum()
}

/// Residual of z ∈ Sp(1,𝔹): |z0² − z1² − z2² + z3² − 1|.
pub fn unit_residual(z: SplitQuaternion) -> f64 {
    (z.conj().mul(z).re() - 1.0).abs()
}

/// The action (A, z)·x = A x z̄ of Sp(n,𝔹) × Sp(1,𝔹) on 𝔹ⁿ. Preserves
/// Re(x̄ᵀy); inputs failing the membership residuals are rejected.
pub fn sp_action(
    a: &BMatrix,
    z: SplitQuaternion,
    x: &[SplitQuaternion],
    tol: f64,
) -> Result<Vec<SplitQuaternion>> {
    if x.len() != a.n {
        return Err(Error::InvalidInput(format!(
            "vector of length {} with a {n}x{n} matrix",
            x.len(),
            n = a.n
        )));
    }
    let ra = a.sp_residual();
    if ra > tol {
        return Err(Error::constraint(
            "sp_action",
            "matrix must satisfy conj(A)ᵀ A = 1",
            ra,
        ));
    }
    let rz = unit_residual(z);
    if rz > tol {
        return Err(Error::constraint(
            "sp_action",
            "z must be a unit split quaternion: z0² − z1² − z2² + z3² = 1",
            rz,
        ));
    }
    let zc = z.conj();
    let n = a.n;
    let mut out = vec![SplitQuaternion::zero(); n];
    for i in 0..n {
        let mut acc = SplitQuaternion::zero();
        for j in 0..n {
            acc = acc.add(a.at(i, j).mul(x[j]));
        }
        out[i] = acc.mul(zc);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Casimir decomposition of endomorphisms
// ---------------------------------------------------------------------------

/// Residual of the structure relations I1² = I2² = id, I1I2 = −I2I1 = I3
/// for a matrix triple.
pub fn triple_axiom_residual(i1: &Mat, i2: &Mat, i3: &Mat) -> f64 {
    let id = Mat::identity(i1.rows);
    let r1 = i1.matmul(i1).sub(&id).max_abs();
    let r2 = i2.matmul(i2).sub(&id).max_abs();
    let i12 = i1.matmul(i2);
    let r3 = i12.sub(i3).max_abs();
    let r4 = i12.add(&i2.matmul(i1)).max_abs();
    r1.max(r2).max(r3).max(r4)
}

/// The Casimir operator Ψ ↦ I1ΨI1 + I2ΨI2 − I3ΨI3.
pub fn casimir_op(psi: &Mat, i1: &Mat, i2: &Mat, i3: &Mat) -> Mat {
    i1.matmul(psi)
        .matmul(i1)
        .add(&i2.matmul(psi).matmul(i2))
        .sub(&i3.matmul(psi).matmul(i3))
}

/// Four-component split of an endomorphism by commutation type:
///
/// 4Ψ⁺⁺⁺ = Ψ + I1ΨI1 + I2ΨI2 − I3ΨI3, and the remaining three components
/// flip the sign of one I1/I2 term (or both signs of the I3 term). The
/// components sum to Ψ; Ψ⁺⁺⁺ commutes with every I_s and spans the
/// eigenvalue-3 space of the Casimir operator, the rest its eigenvalue-(−1)
/// space.
pub fn casimir_split(
    psi: &Mat,
    i1: &Mat,
    i2: &Mat,
    i3: &Mat,
    tol: f64,
) -> Result<[Mat; 4]> {
    let res = triple_axiom_residual(i1, i2, i3);
    if res > tol {
        return Err(Error::constraint(
            "casimir_split",
            "triple must satisfy I1² = I2² = id, I1I2 = −I2I1 = I3",
            res,
        ));
    }
    let t1 = i1.matmul(psi).matmul(i1);
    let t2 = i2.matmul(psi).matmul(i2);
    let t3 = i3.matmul(psi).matmul(i3);
    let comp = |s1: f64, s2: f64, s3: f64| {
        psi.add(&t1.scale(s1))
            .add(&t2.scale(s2))
            .add(&t3.scale(-s3))
            .scale(0.25)
    };
    Ok([
        comp(1.0, 1.0, 1.0),   // +++
        comp(1.0, -1.0, -1.0), // +−−
        comp(-1.0, 1.0, -1.0), // −+−
        comp(-1.0, -1.0, 1.0), // −−+
    ])
}

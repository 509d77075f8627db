//! Verification suites.
//!
//! Each check draws its own PRNG stream, derived from (seed, check id) by a
//! splittable construction, so adding or reordering checks never perturbs
//! another check's samples and reports are bit-reproducible. Checks run on a
//! small worker pool (capped by the VERIFY_THREADS environment variable);
//! results are assembled in registration order, so determinism does not
//! depend on scheduling.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{self, SplitQuaternion};
use crate::bundle::{
    self, bar_chi_display, bar_lift_display, chi_vec, deta_analytic, deta_numeric, eta_covector,
    j_apply_split_route, j_apply_vec, k_frame, lift_vec, phi_covectors, reassemble_tangent,
    QPoint,
};
use crate::fields::{self, pair, Poly, PolyForm, VectorField};
use crate::linalg::{self, Mat};
use crate::pqc::{
    self, bilinear, check_axioms, conformal_change, connection_forms, heisenberg_model,
    rotate_structure, solve_reeb, Factor, Structure,
};
use crate::report::{CheckResult, Report};
use crate::twistor::{
    self, frobenius_para, hyperboloid_point, invariance_check, levi_signature_check, nijenhuis,
    reeb_property_check, NVariant,
};
use crate::{Error, Result, EPS};

/// Which checks to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Algebra,
    Model,
    Twistor,
    Reflector,
    Conformal,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algebra" => Ok(Suite::Algebra),
            "model" => Ok(Suite::Model),
            "twistor" => Ok(Suite::Twistor),
            "reflector" => Ok(Suite::Reflector),
            "conformal" => Ok(Suite::Conformal),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidInput(format!(
                "unknown suite '{other}' (expected algebra|model|twistor|reflector|conformal|all)"
            ))),
        }
    }
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Model => "model",
            Suite::Twistor => "twistor",
            Suite::Reflector => "reflector",
            Suite::Conformal => "conformal",
            Suite::All => "all",
        }
    }
}

/// Conformal factor specification, parseable from "const:<c>" or
/// "poly:<c0,c1,...>" (c0 + c1·u_0 + c2·u_1 + ...).
#[derive(Clone, Debug, PartialEq)]
pub enum FactorSpec {
    Const(f64),
    Affine(Vec<f64>),
}

impl FactorSpec {
    pub fn parse(s: &str) -> Result<FactorSpec> {
        if let Some(c) = s.strip_prefix("const:") {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad constant factor '{c}'")))?;
            if v == 0.0 {
                return Err(Error::InvalidInput("factor must be non-vanishing".into()));
            }
            return Ok(FactorSpec::Const(v));
        }
        if let Some(c) = s.strip_prefix("poly:") {
            let coeffs: Vec<f64> = c
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad coefficient '{t}'")))
                })
                .collect::<Result<_>>()?;
            if coeffs.is_empty() {
                return Err(Error::InvalidInput("empty polynomial factor".into()));
            }
            return Ok(FactorSpec::Affine(coeffs));
        }
        Err(Error::InvalidInput(format!(
            "factor must be 'const:<c>' or 'poly:<coeffs>', got '{s}'"
        )))
    }

    pub fn to_factor(&self, dim: usize) -> Result<Factor> {
        match self {
            FactorSpec::Const(c) => Ok(Factor::constant(dim, *c)),
            FactorSpec::Affine(coeffs) => {
                let c0 = coeffs[0];
                let rest: Vec<(usize, f64)> = coeffs[1..]
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(i, &c)| (i, c))
                    .collect();
                if rest.iter().map(|(_, c)| c.abs()).sum::<f64>() >= c0.abs() {
                    return Err(Error::InvalidInput(
                        "affine factor may vanish on the sampled domain [-1,1]^d".into(),
                    ));
                }
                if rest.iter().any(|(i, _)| *i >= dim) {
                    return Err(Error::InvalidInput(format!(
                        "factor references coordinate beyond chart dimension {dim}"
                    )));
                }
                Ok(Factor::affine(dim, c0, &rest))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            FactorSpec::Const(_) => true,
            FactorSpec::Affine(c) => c[1..].iter().all(|x| *x == 0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub n: usize,
    pub samples: usize,
    /// Multiplies every check's calibrated threshold.
    pub tol_scale: f64,
    pub seed: u64,
    pub factor: FactorSpec,
    pub mutate_j: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            suite: Suite::All,
            n: 1,
            samples: 100,
            tol_scale: 1.0,
            seed: 7,
            factor: FactorSpec::Affine(vec![1.0, 0.1]),
            mutate_j: false,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidInput("samples must be positive".into()));
        }
        if !(self.tol_scale > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        self.factor.to_factor(4 * self.n + 3)?;
        Ok(())
    }
}

/// Per-check context: configuration plus the check's private RNG stream.
pub struct CheckCtx {
    pub cfg: SuiteConfig,
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl CheckCtx {
    /// Splittable per-check stream: the key mixes the global seed with a
    /// hash of the check id, so streams are independent of registration
    /// order and of each other.
    pub fn rng(&self, check_id: &str) -> ChaCha8Rng {
        let h = fnv1a64(check_id);
        let mut key = [0u8; 32];
        let mut state = self.cfg.seed ^ h;
        for chunk in key.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    fn factor(&self, dim: usize) -> Factor {
        self.cfg
            .factor
            .to_factor(dim)
            .expect("factor validated with the config")
    }
}

struct CheckSpec {
    id: &'static str,
    statement: &'static str,
    threshold: f64,
    run: fn(&CheckCtx, &mut ChaCha8Rng) -> Result<(f64, usize)>,
}

// ---------------------------------------------------------------------------
// Sampling helpers
// ---------------------------------------------------------------------------

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_qpoint(rng: &mut ChaCha8Rng, d: usize) -> QPoint {
    loop {
        let u = random_point(rng, d);
        let x = [
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
        ];
        let q = QPoint::new(u, x);
        if q.inner().abs() > 0.3 {
            return q;
        }
    }
}

fn random_hyperboloid(rng: &mut ChaCha8Rng, d: usize, sigma: f64) -> twistor::HyperboloidPoint {
    let u = random_point(rng, d);
    let r = rng.random_range(0.2..1.2);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let upper = rng.random_range(0..2u8) == 0;
    hyperboloid_point(sigma, u, r, theta, upper)
}

fn random_tangent(rng: &mut ChaCha8Rng, dd: usize) -> Vec<f64> {
    (0..dd).map(|_| rng.random_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------------------
// Algebra checks
// ---------------------------------------------------------------------------

fn chk_mult_table(_ctx: &CheckCtx, _rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let one = SplitQuaternion::one();
    let j = |s| SplitQuaternion::j(s);
    let basis = [one, j(1), j(2), j(3)];
    let expect = |a: usize, b: usize| -> SplitQuaternion {
        match (a, b) {
            (0, x) | (x, 0) => basis[x],
            (1, 1) | (2, 2) => one,
            (3, 3) => one.neg(),
            (1, 2) => j(3),
            (2, 1) => j(3).neg(),
            (2, 3) => j(1).neg(),
            (3, 2) => j(1),
            (3, 1) => j(2).neg(),
            (1, 3) => j(2),
            _ => unreachable!(),
        }
    };
    let mut res: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            res = res.max(basis[a].mul(basis[b]).sub(expect(a, b)).max_abs());
        }
    }
    Ok((res, 16))
}

fn chk_cross_triple(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let n = ctx.cfg.samples.max(100);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let v: Vec<f64> = (0..9).map(|_| rng.random_range(-1.5..1.5)).collect();
        let a = algebra::ImVector::new(v[0], v[1], v[2]);
        let b = algebra::ImVector::new(v[3], v[4], v[5]);
        let c = algebra::ImVector::new(v[6], v[7], v[8]);
        let lhs = algebra::im_inner(algebra::im_cross(a, b), c);
        let m = Mat::from_rows(&[
            vec![v[0], v[3], v[6]],
            vec![v[1], v[4], v[7]],
            vec![v[2], v[5], v[8]],
        ]);
        res = res.max((lhs - linalg::det3(&m)).abs());
    }
    Ok((res, n))
}

fn chk_mat2_hom(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let n = ctx.cfg.samples.max(100);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = |rng: &mut ChaCha8Rng| {
            SplitQuaternion::from_f64(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            )
        };
        let x = q(rng);
        let y = q(rng);
        let lhs = algebra::mat2_rep(x.mul(y));
        let rhs = algebra::mat2_mul(algebra::mat2_rep(x), algebra::mat2_rep(y));
        for i in 0..2 {
            for jj in 0..2 {
                res = res.max((lhs[i][jj] - rhs[i][jj]).abs());
            }
        }
    }
    Ok((res, n))
}

fn chk_so12_roundtrip(_ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let n = 50;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let m = algebra::so12_exp([
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ]);
        let g = algebra::gamma_from_so12(&m, 1e-9)?;
        res = res.max(algebra::triple_relation_residual(&g));
        let back = algebra::so12_from_gamma(&g, 1e-9)?;
        res = res.max(back.sub(&m).max_abs());
    }
    Ok((res, n))
}

fn chk_sp_action(_ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let n = 50;
    let a = algebra::BMatrix::identity(1);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        // Random unit z by rejection on the indefinite norm.
        let z = loop {
            let z = SplitQuaternion::from_f64(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let nrm = z.conj().mul(z).re();
            if nrm > 0.1 {
                break z.scale(1.0 / nrm.sqrt());
            }
        };
        let mk = |rng: &mut ChaCha8Rng| {
            vec![SplitQuaternion::from_f64(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )]
        };
        let x = mk(rng);
        let y = mk(rng);
        let xz = algebra::sp_action(&a, z, &x, 1e-9)?;
        let yz = algebra::sp_action(&a, z, &y, 1e-9)?;
        res = res.max((algebra::bvec_inner(&xz, &yz) - algebra::bvec_inner(&x, &y)).abs());
    }
    Ok((res, n))
}

fn chk_casimir(_ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    // Model fiber triple for n = 1.
    let p = heisenberg_model(1);
    let origin = vec![0.0; p.dim()];
    let imats = p.i_end_at::<f64>(&origin);
    let sub = |m: &Vec<f64>| Mat::from_fn(4, 4, |i, j| m[i * p.dim() + j]);
    let i1 = sub(&imats[0]);
    let i2 = sub(&imats[1]);
    let i3 = sub(&imats[2]);
    let n = 20;
    let mut res: f64 = 0.0;
    let signs: [[f64; 3]; 4] = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    for _ in 0..n {
        let psi = Mat::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let parts = algebra::casimir_split(&psi, &i1, &i2, &i3, 1e-9)?;
        let sum = parts[0].add(&parts[1]).add(&parts[2]).add(&parts[3]);
        res = res.max(sum.sub(&psi).max_abs());
        for (part, s) in parts.iter().zip(signs.iter()) {
            for (i_mat, sign) in [&i1, &i2, &i3].into_iter().zip(s) {
                let r = part
                    .matmul(i_mat)
                    .sub(&i_mat.matmul(part).scale(*sign))
                    .max_abs();
                res = res.max(r);
            }
        }
        let cas = algebra::casimir_op(&psi, &i1, &i2, &i3);
        let expect = parts[0].scale(3.0).sub(&psi.sub(&parts[0]));
        res = res.max(cas.sub(&expect).max_abs());
    }
    Ok((res, n))
}

// ---------------------------------------------------------------------------
// Model checks
// ---------------------------------------------------------------------------

fn chk_model_axioms(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let pts: Vec<Vec<f64>> = (0..ctx.cfg.samples)
        .map(|_| random_point(rng, p.dim()))
        .collect();
    let rep = check_axioms(&p, &pts, 1e-9);
    if rep.eta_rank_margin < 1e-8 {
        return Err(Error::Degenerate {
            what: "model axioms",
            detail: "η matrix rank-deficient".into(),
        });
    }
    Ok((rep.max_residual(), pts.len()))
}

fn chk_model_signature(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let pts: Vec<Vec<f64>> = (0..ctx.cfg.samples.min(50))
        .map(|_| random_point(rng, p.dim()))
        .collect();
    let mut mismatches = 0usize;
    for u in &pts {
        let rep = check_axioms(&p, std::slice::from_ref(u), 1e-9);
        if !rep.signature_ok {
            mismatches += 1;
        }
    }
    Ok((mismatches as f64, pts.len()))
}

fn chk_model_coneforms(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let alphas = connection_forms(&p);
    let n = ctx.cfg.samples;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let u = random_point(rng, p.dim());
        for a in &alphas {
            for c in a.components::<f64>(&u) {
                res = res.max(c.abs());
            }
        }
    }
    Ok((res, n))
}

fn chk_model_reeb(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let d = p.dim();
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let u = random_point(rng, d);
        let sol = solve_reeb(&p, &u, 1e-8)?;
        res = res.max(sol.residual);
        for s in 0..3 {
            let expect = p.xi[s].eval(&u);
            for mu in 0..d {
                res = res.max((sol.xi[s][mu] - expect[mu]).abs());
            }
        }
        // Both displayed Reeb conditions, evaluated directly.
        let eta = p.eta_at::<f64>(&u);
        let deta = p.deta_at::<f64>(&u);
        let frame: Vec<Vec<f64>> = p.h_frame.iter().map(|e| e.eval(&u)).collect();
        for s in 0..3 {
            for t in 0..3 {
                let want = if s == t { EPS[s] } else { 0.0 };
                res = res.max((pair(&eta[s], &sol.xi[t]) - want).abs());
                for e in &frame {
                    let v = bilinear(&deta[s], d, &sol.xi[t], e)
                        + bilinear(&deta[t], d, &sol.xi[s], e);
                    res = res.max(v.abs());
                }
            }
        }
    }
    Ok((res, n))
}

fn chk_model_decomposition(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.max(200);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let t = random_tangent(rng, p.dim() + 3);
        let r = reassemble_tangent(p.as_ref(), &coords, &t);
        for mu in 0..t.len() {
            res = res.max((r[mu] - t[mu]).abs());
        }
    }
    Ok((res, n))
}

fn chk_model_phi(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let phi = phi_covectors(p.as_ref(), &coords);
        for s in 0..3 {
            for t in 0..3 {
                let mut fiber = vec![0.0; p.dim() + 3];
                fiber[p.dim() + t] = 1.0;
                let want = if s == t { EPS[s] } else { 0.0 };
                res = res.max((pair(&phi[s], &fiber) - want).abs());
            }
            let a = random_point(rng, p.dim());
            let l = lift_vec(p.as_ref(), &coords, &a);
            res = res.max(pair(&phi[s], &l).abs());
        }
    }
    Ok((res, n))
}

fn chk_model_deta(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let numeric = deta_numeric(&p);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let t1 = random_tangent(rng, p.dim() + 3);
        let t2 = random_tangent(rng, p.dim() + 3);
        let a = deta_analytic(p.as_ref(), &coords, &t1, &t2);
        let b = numeric.apply(&coords, &t1, &t2);
        res = res.max((a - b).abs());
    }
    Ok((res, n))
}

fn chk_model_eta_chi(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let eta = eta_covector(p.as_ref(), &coords);
        let chi = chi_vec(p.as_ref(), &coords);
        res = res.max((pair(&eta, &chi) - q.inner()).abs());
        for t in 0..3 {
            let mut fiber = vec![0.0; p.dim() + 3];
            fiber[p.dim() + t] = 1.0;
            let v = deta_analytic(p.as_ref(), &coords, &chi, &fiber);
            res = res.max((v + EPS[t] * q.x[t]).abs());
        }
        // χ⌟dη has no horizontal component either.
        let a = random_point(rng, p.dim());
        let l = lift_vec(p.as_ref(), &coords, &a);
        res = res.max(deta_analytic(p.as_ref(), &coords, &chi, &l).abs());
    }
    Ok((res, n))
}

fn chk_model_j_squared(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let kf = k_frame(&p, &q)?;
        let mut t = vec![0.0; p.dim() + 3];
        for b in &kf.basis {
            let c: f64 = rng.random_range(-1.0..1.0);
            for mu in 0..t.len() {
                t[mu] += c * b[mu];
            }
        }
        let jt = j_apply_vec(p.as_ref(), &coords, &t, 1.0);
        let jjt = j_apply_vec(p.as_ref(), &coords, &jt, 1.0);
        for mu in 0..t.len() {
            res = res.max((jjt[mu] + q.inner() * t[mu]).abs());
        }
    }
    Ok((res, n))
}

fn chk_model_j_split(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let kf = k_frame(&p, &q)?;
        let coeffs: Vec<f64> = (0..kf.dim_k())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mut t = vec![0.0; p.dim() + 3];
        for (c, b) in coeffs.iter().zip(&kf.basis) {
            for mu in 0..t.len() {
                t[mu] += c * b[mu];
            }
        }
        let d1 = j_apply_vec(p.as_ref(), &coords, &t, 1.0);
        let d2 = j_apply_split_route(&p, &kf, &coeffs);
        for mu in 0..t.len() {
            res = res.max((d1[mu] - d2[mu]).abs());
        }
    }
    Ok((res, n))
}

fn chk_model_levi_identities(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let kf = k_frame(&p, &q)?;
        let mk = |rng: &mut ChaCha8Rng| {
            let mut t = vec![0.0; p.dim() + 3];
            for b in &kf.basis {
                let c: f64 = rng.random_range(-1.0..1.0);
                for mu in 0..t.len() {
                    t[mu] += c * b[mu];
                }
            }
            t
        };
        let t1 = mk(rng);
        let t2 = mk(rng);
        let g12 = bundle::levi_g_val(p.as_ref(), &coords, &t1, &t2);
        let g21 = bundle::levi_g_val(p.as_ref(), &coords, &t2, &t1);
        res = res.max((g12 - g21).abs());
        let jt1 = j_apply_vec(p.as_ref(), &coords, &t1, 1.0);
        let jt2 = j_apply_vec(p.as_ref(), &coords, &t2, 1.0);
        let a = bundle::levi_g_val(p.as_ref(), &coords, &jt1, &t2);
        let b = bundle::levi_g_val(p.as_ref(), &coords, &t1, &jt2);
        res = res.max((a + b).abs());
        res = res.max((deta_analytic(p.as_ref(), &coords, &t1, &t2) - 2.0 * a).abs());
    }
    Ok((res, n))
}

fn chk_model_levi_block(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let mut res: f64 = 0.0;
    let lams = [0.5, 0.8, 1.3];
    for &lam in &lams {
        let u = random_point(rng, p.dim());
        let q = QPoint::new(u.clone(), [0.0, 0.0, lam]);
        let coords = q.coords();
        let l = 1.0 / (2.0 * lam);
        let h = 0.0; // Scal ≡ 0
        let mut vecs: Vec<Vec<f64>> = Vec::new();
        for s in 0..2 {
            let xi = p.xi[s].eval(&u);
            vecs.push(lift_vec(p.as_ref(), &coords, &xi));
        }
        for s in 0..2 {
            let mut v = vec![0.0; p.dim() + 3];
            v[p.dim() + s] = 1.0;
            vecs.push(v);
        }
        let expect = [
            [h, 0.0, 0.0, l],
            [0.0, h, -l, 0.0],
            [0.0, -l, 0.0, 0.0],
            [l, 0.0, 0.0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                let g = bundle::levi_g_val(p.as_ref(), &coords, &vecs[i], &vecs[j]);
                res = res.max((g - expect[i][j]).abs());
            }
        }
    }
    Ok((res, lams.len() * 16))
}

fn chk_model_lift_commutator(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let mk = |rng: &mut ChaCha8Rng| {
            let terms: Vec<(f64, fields::MapRef)> = p
                .h_frame
                .iter()
                .map(|e| (rng.random_range(-1.0..1.0), e.0.clone()))
                .collect();
            VectorField(std::sync::Arc::new(fields::LinComb { terms }))
        };
        let a = mk(rng);
        let b = mk(rng);
        let defect = bundle::lift_commutator_defect(&p, &a, &b, &q);
        for v in &defect {
            res = res.max(v.abs());
        }
    }
    Ok((res, n))
}

fn chk_model_mutation(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    // Control: η1 + u_0 du_1 must break axiom (ii) detectably.
    let p = heisenberg_model(ctx.cfg.n);
    let d = p.dim();
    let mut comps = vec![Poly::constant(d, 0.0); d];
    comps[1] = Poly {
        dim: d,
        terms: vec![(1.0, vec![(0, 1)])],
    };
    let extra = fields::OneForm(std::sync::Arc::new(PolyForm { dim: d, comps }));
    let bad = pqc::perturb_eta(&p, 0, extra);
    let pts: Vec<Vec<f64>> = (0..20).map(|_| random_point(rng, d)).collect();
    let rep = check_axioms(&bad, &pts, 1e-9);
    let detected = rep.compat > 0.1;
    Ok((if detected { 0.0 } else { 1.0 }, pts.len()))
}

fn chk_model_rotation(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let s = algebra::so12_exp([
        rng.random_range(-0.8..0.8),
        rng.random_range(-0.8..0.8),
        rng.random_range(-0.8..0.8),
    ]);
    let n = ctx.cfg.samples.min(30);
    let mut res: f64 = 0.0;
    for f in [1.0, 2.0] {
        let rot = rotate_structure(&p, &s, &Factor::constant(p.dim(), f))?;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| random_point(rng, p.dim())).collect();
        let rep = check_axioms(&rot, &pts, 1e-8);
        res = res.max(rep.max_residual());
        if !rep.signature_ok {
            res = res.max(1.0);
        }
        // Reeb frame of the rotated structure passes the solver.
        let sol = solve_reeb(&rot, &pts[0], 1e-8)?;
        for t in 0..3 {
            let expect = rot.xi[t].eval(&pts[0]);
            for mu in 0..p.dim() {
                res = res.max((sol.xi[t][mu] - expect[mu]).abs());
            }
        }
    }
    Ok((res, 2 * n))
}

// ---------------------------------------------------------------------------
// Twistor / reflector checks
// ---------------------------------------------------------------------------

fn sigma_of(variant: NVariant) -> f64 {
    match variant {
        NVariant::TwistorZ => 1.0,
        NVariant::ReflectorR => -1.0,
        NVariant::Ambient => 1.0,
    }
}

fn levi_signature_on(ctx: &CheckCtx, rng: &mut ChaCha8Rng, sigma: f64) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(50);
    let want = 2 * ctx.cfg.n + 2;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), sigma);
        let rep = levi_signature_check(&p, &hp.q)?;
        if rep.signature.pos != want || rep.signature.neg != want || rep.signature.zero != 0 {
            res = res.max(1.0);
        }
        if rep.margin < 1e-7 {
            res = res.max(1.0);
        }
        res = res.max(rep.consistency);
    }
    Ok((res, n))
}

fn chk_twistor_levi(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    levi_signature_on(ctx, rng, 1.0)
}

fn chk_reflector_levi(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    levi_signature_on(ctx, rng, -1.0)
}

fn reeb_property_on(ctx: &CheckCtx, rng: &mut ChaCha8Rng, sigma: f64) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), sigma);
        let rep = reeb_property_check(&p, &hp)?;
        res = res.max(rep.eta_chi).max(rep.contraction).max(rep.fiber_tangency);
    }
    Ok((res, n))
}

fn chk_twistor_reeb(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    reeb_property_on(ctx, rng, 1.0)
}

fn chk_reflector_reeb(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    reeb_property_on(ctx, rng, -1.0)
}

fn chk_twistor_contact(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    // Contact certificate: dη nondegenerate on 𝒦 and η(χ) = ⟨I,I⟩ ≠ 0.
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for sigma in [1.0, -1.0] {
        for _ in 0..n / 2 {
            let hp = random_hyperboloid(rng, p.dim(), sigma);
            let rep = levi_signature_check(&p, &hp.q)?;
            res = res.max((1e-7 - rep.deta_margin).max(0.0));
        }
    }
    Ok((res, n))
}

fn nijenhuis_on(
    ctx: &CheckCtx,
    rng: &mut ChaCha8Rng,
    p: &Structure,
    variant: NVariant,
    mutate: bool,
) -> Result<(f64, usize)> {
    let n = ctx.cfg.samples;
    let wsign = if mutate { -1.0 } else { 1.0 };
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), sigma_of(variant));
        let kf = k_frame(p, &hp.q)?;
        let (_, a) = twistor::random_section(p, &kf, rng);
        let (_, b) = twistor::random_section(p, &kf, rng);
        let sample = nijenhuis(p, &kf, &a, &b, variant, wsign)?;
        res = res.max(sample.residual).max(sample.k_residual);
    }
    Ok((res, n))
}

fn chk_twistor_nijenhuis(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    nijenhuis_on(ctx, rng, &p, NVariant::TwistorZ, ctx.cfg.mutate_j)
}

fn chk_reflector_nijenhuis(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    nijenhuis_on(ctx, rng, &p, NVariant::ReflectorR, ctx.cfg.mutate_j)
}

fn chk_twistor_n_ambient(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(25);
    let mut res: f64 = 0.0;
    for sigma in [1.0, -1.0] {
        let variant = if sigma > 0.0 {
            NVariant::TwistorZ
        } else {
            NVariant::ReflectorR
        };
        for _ in 0..n / 2 {
            let hp = random_hyperboloid(rng, p.dim(), sigma);
            let kf = k_frame(&p, &hp.q)?;
            let (_, a) = twistor::random_section(&p, &kf, rng);
            let (_, b) = twistor::random_section(&p, &kf, rng);
            let s1 = nijenhuis(&p, &kf, &a, &b, variant, 1.0)?;
            let s2 = nijenhuis(&p, &kf, &a, &b, NVariant::Ambient, 1.0)?;
            for (x, y) in s1.n_vec.iter().zip(&s2.n_vec) {
                res = res.max((x - y).abs());
            }
        }
    }
    Ok((res, n))
}

fn chk_twistor_tensorial(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = 10;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), 1.0);
        let kf = k_frame(&p, &hp.q)?;
        let ca: Vec<f64> = (0..kf.dim_k())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let cb: Vec<f64> = (0..kf.dim_k())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        res = res.max(twistor::nijenhuis_extension_comparison(
            &p,
            &kf,
            &ca,
            &cb,
            NVariant::TwistorZ,
        )?);
    }
    Ok((res, n))
}

fn chk_twistor_sheet_symmetry(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = 10;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), 1.0);
        let anti = QPoint::new(hp.q.u.clone(), [-hp.q.x[0], -hp.q.x[1], -hp.q.x[2]]);
        let kf1 = k_frame(&p, &hp.q)?;
        let kf2 = k_frame(&p, &anti)?;
        let ca: Vec<f64> = (0..kf1.dim_k())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let cb: Vec<f64> = (0..kf1.dim_k())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let a1 = bundle::section_from_coeffs(&p, &kf1, &ca);
        let b1 = bundle::section_from_coeffs(&p, &kf1, &cb);
        let a2 = bundle::section_from_coeffs(&p, &kf2, &ca);
        let b2 = bundle::section_from_coeffs(&p, &kf2, &cb);
        let s1 = nijenhuis(&p, &kf1, &a1, &b1, NVariant::TwistorZ, 1.0)?;
        let s2 = nijenhuis(&p, &kf2, &a2, &b2, NVariant::TwistorZ, 1.0)?;
        res = res.max((s1.residual - s2.residual).abs());
    }
    Ok((res, n))
}

fn chk_twistor_mutation_control(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    // The integrability check must have power: with the 𝒲-cross sign of J
    // flipped, N must exceed 1e−2 somewhere.
    let p = heisenberg_model(ctx.cfg.n);
    let n = 10;
    let mut max_res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), 1.0);
        let kf = k_frame(&p, &hp.q)?;
        let (_, a) = twistor::random_section(&p, &kf, rng);
        let (_, b) = twistor::random_section(&p, &kf, rng);
        let sample = nijenhuis(&p, &kf, &a, &b, NVariant::TwistorZ, -1.0)?;
        max_res = max_res.max(sample.residual);
    }
    Ok((if max_res > 1e-2 { 0.0 } else { 1.0 }, n))
}

fn chk_reflector_frobenius(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let n = ctx.cfg.samples.min(10);
    let want = 2 * ctx.cfg.n + 2;
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), -1.0);
        let rep = frobenius_para(&p, &hp)?;
        if rep.plus_dim != want || rep.minus_dim != want {
            res = res.max(1.0);
        }
        res = res.max(rep.j_sq_residual).max(rep.closed_residual);
    }
    Ok((res, n))
}

fn chk_reflector_frobenius_power(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    // The mixed-bracket pairing must be nondegenerate, showing the closure
    // test distinguishes involutive from non-involutive distributions.
    let p = heisenberg_model(ctx.cfg.n);
    let n = 5;
    let mut ok = true;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), -1.0);
        let rep = frobenius_para(&p, &hp)?;
        ok &= rep.mixed_eta_min > 1e-3;
    }
    Ok((if ok { 0.0 } else { 1.0 }, n))
}

// ---------------------------------------------------------------------------
// Conformal checks
// ---------------------------------------------------------------------------

fn chk_conformal_axioms(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let bar = conformal_change(&p, &ctx.factor(p.dim()))?;
    let n = ctx.cfg.samples.min(50);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| random_point(rng, p.dim())).collect();
    let rep = check_axioms(&bar, &pts, 1e-8);
    let mut res = rep.max_residual();
    if !rep.signature_ok {
        res = res.max(1.0);
    }
    Ok((res, n))
}

fn chk_conformal_xi_bar(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let bar = conformal_change(&p, &ctx.factor(p.dim()))?;
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let u = random_point(rng, p.dim());
        let sol = solve_reeb(&bar, &u, 1e-7)?;
        for s in 0..3 {
            let expect = bar.xi[s].eval(&u);
            for mu in 0..p.dim() {
                res = res.max((sol.xi[s][mu] - expect[mu]).abs());
            }
        }
    }
    Ok((res, n))
}

fn chk_conformal_alpha_routes(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let bar = conformal_change(&p, &ctx.factor(p.dim()))?;
    let recomputed = connection_forms(&bar);
    let n = ctx.cfg.samples.min(20);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let u = random_point(rng, p.dim());
        for s in 0..3 {
            let a = bar.alpha[s].components::<f64>(&u);
            let b = recomputed[s].components::<f64>(&u);
            for mu in 0..p.dim() {
                res = res.max((a[mu] - b[mu]).abs());
            }
        }
    }
    Ok((res, n))
}

fn chk_conformal_scal(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let factor = ctx.factor(p.dim());
    let s0 = pqc::bar_scal_variant(&p, &factor, 0)?;
    let s1 = pqc::bar_scal_variant(&p, &factor, 1)?;
    let s2 = pqc::bar_scal_variant(&p, &factor, 2)?;
    let n = ctx.cfg.samples.min(20);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let u = random_point(rng, p.dim());
        let v = [s0.eval::<f64>(&u), s1.eval::<f64>(&u), s2.eval::<f64>(&u)];
        res = res.max((v[0] - v[1]).abs()).max((v[0] - v[2]).abs());
    }
    Ok((res, n))
}

fn chk_conformal_deta(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let bar = conformal_change(&p, &ctx.factor(p.dim()))?;
    let numeric = deta_numeric(&bar);
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, bar.dim());
        let coords = q.coords();
        let t1 = random_tangent(rng, bar.dim() + 3);
        let t2 = random_tangent(rng, bar.dim() + 3);
        let a = deta_analytic(bar.as_ref(), &coords, &t1, &t2);
        let b = numeric.apply(&coords, &t1, &t2);
        res = res.max((a - b).abs());
    }
    Ok((res, n))
}

fn chk_conformal_bar_lift(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let factor = ctx.factor(p.dim());
    let bar = conformal_change(&p, &factor)?;
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let mut xm = vec![0.0; p.dim()];
        for e in &p.h_frame {
            let c: f64 = rng.random_range(-1.0..1.0);
            let ev = e.eval(&q.u);
            for mu in 0..p.dim() {
                xm[mu] += c * ev[mu];
            }
        }
        let display = bar_lift_display(&p, &factor.field, &q, &xm);
        let direct = lift_vec(bar.as_ref(), &coords, &xm);
        for mu in 0..display.len() {
            res = res.max((display[mu] - direct[mu]).abs());
        }
        // The correction is pure fiber.
        let base = lift_vec(p.as_ref(), &coords, &xm);
        for mu in 0..p.dim() {
            res = res.max((display[mu] - base[mu]).abs());
        }
    }
    Ok((res, n))
}

fn chk_conformal_chi_bar(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let factor = ctx.factor(p.dim());
    let bar = conformal_change(&p, &factor)?;
    let n = ctx.cfg.samples.min(25);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, p.dim());
        let coords = q.coords();
        let display = bar_chi_display(&p, &factor.field, &q);
        let chi_bar = chi_vec(bar.as_ref(), &coords);
        for mu in 0..display.len() {
            res = res.max((display[mu] - chi_bar[mu]).abs());
        }
    }
    Ok((res, n))
}

fn chk_conformal_invariance(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let factor = ctx.factor(p.dim());
    let n = ctx.cfg.samples.min(50);
    let mut res: f64 = 0.0;
    for i in 0..n {
        let sigma = if i % 2 == 0 { 1.0 } else { -1.0 };
        let hp = random_hyperboloid(rng, p.dim(), sigma);
        let rep = invariance_check(&p, &factor, &hp.q)?;
        res = res.max(rep.max_angle).max(rep.j_diff);
    }
    Ok((res, n))
}

fn chk_conformal_invariance_const(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let factor = Factor::constant(p.dim(), 0.8);
    let n = ctx.cfg.samples.min(20);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let hp = random_hyperboloid(rng, p.dim(), 1.0);
        let rep = invariance_check(&p, &factor, &hp.q)?;
        res = res.max(rep.max_angle).max(rep.j_diff);
    }
    Ok((res, n))
}

fn chk_conformal_nijenhuis_z(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let bar = conformal_change(&p, &ctx.factor(p.dim()))?;
    let mut ctx2 = CheckCtx {
        cfg: ctx.cfg.clone(),
    };
    ctx2.cfg.samples = ctx.cfg.samples.min(40);
    nijenhuis_on(&ctx2, rng, &bar, NVariant::TwistorZ, false)
}

fn chk_conformal_nijenhuis_r(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let p = heisenberg_model(ctx.cfg.n);
    let bar = conformal_change(&p, &ctx.factor(p.dim()))?;
    let mut ctx2 = CheckCtx {
        cfg: ctx.cfg.clone(),
    };
    ctx2.cfg.samples = ctx.cfg.samples.min(40);
    nijenhuis_on(&ctx2, rng, &bar, NVariant::ReflectorR, false)
}

fn chk_conformal_group(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    // g → g/(2f) → g/(4 f f') with f' = 1/(4f) returns the original metric
    // and Reeb frame.
    let p = heisenberg_model(ctx.cfg.n);
    let factor = ctx.factor(p.dim());
    let bar = conformal_change(&p, &factor)?;
    let f_inv = Factor {
        field: fields::ScalarField(std::sync::Arc::new(fields::RecipField {
            numerator: 0.25,
            field: factor.field.clone(),
        })),
        constant: factor.constant.map(|c| 0.25 / c),
    };
    let back = conformal_change(&bar, &f_inv)?;
    let n = ctx.cfg.samples.min(20);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let u = random_point(rng, p.dim());
        let g0 = p.metric_at::<f64>(&u);
        let g1 = back.metric_at::<f64>(&u);
        for (a, b) in g0.iter().zip(&g1) {
            res = res.max((a - b).abs());
        }
        for s in 0..3 {
            let xa = p.xi[s].eval(&u);
            let xb = back.xi[s].eval(&u);
            for mu in 0..p.dim() {
                res = res.max((xa[mu] - xb[mu]).abs());
            }
        }
    }
    Ok((res, n))
}

fn chk_conformal_defect_vertical(ctx: &CheckCtx, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    // On the conformal structure the lift-commutator defect is nonzero but
    // must stay vertical.
    let p = heisenberg_model(ctx.cfg.n);
    let bar = conformal_change(&p, &ctx.factor(p.dim()))?;
    let n = ctx.cfg.samples.min(20);
    let mut res: f64 = 0.0;
    for _ in 0..n {
        let q = random_qpoint(rng, bar.dim());
        let a = VectorField(bar.h_frame[0].0.clone());
        let b = VectorField(bar.h_frame[1].0.clone());
        let defect = bundle::lift_commutator_defect(&bar, &a, &b, &q);
        for v in &defect[..bar.dim()] {
            res = res.max(v.abs());
        }
    }
    Ok((res, n))
}

// ---------------------------------------------------------------------------
// Registry and runner
// ---------------------------------------------------------------------------

fn registry(suite: Suite) -> Vec<CheckSpec> {
    let mut checks: Vec<CheckSpec> = Vec::new();
    let mut add = |id, statement, threshold, run| {
        checks.push(CheckSpec {
            id,
            statement,
            threshold,
            run,
        })
    };
    let want = |s: Suite| suite == Suite::All || suite == s;
    if want(Suite::Algebra) {
        add(
            "algebra.mult_table",
            "multiplication table: j1² = j2² = 1, j3² = −1, j1j2 = −j2j1 = j3",
            0.0,
            chk_mult_table as fn(&CheckCtx, &mut ChaCha8Rng) -> Result<(f64, usize)>,
        );
        add(
            "algebra.cross_triple",
            "⟨a×b, c⟩ = det[a|b|c] on Im(B)",
            1e-12,
            chk_cross_triple,
        );
        add(
            "algebra.mat2_hom",
            "B → M2(R) is an algebra homomorphism",
            1e-12,
            chk_mat2_hom,
        );
        add(
            "algebra.so12_roundtrip",
            "SO(1,2) matrices ↔ basis triples γ_s = Σ M_st j_t",
            1e-9,
            chk_so12_roundtrip,
        );
        add(
            "algebra.sp_action",
            "(A,z)·x = A x z̄ preserves Re(x̄ᵀ y)",
            1e-12,
            chk_sp_action,
        );
        add(
            "algebra.casimir",
            "Casimir split: Σ components = Ψ; eigenvalues 3 and −1",
            1e-12,
            chk_casimir,
        );
    }
    if want(Suite::Model) {
        add(
            "model.axioms",
            "pqc axioms (i)–(iii) hold on the flat model",
            1e-9,
            chk_model_axioms,
        );
        add(
            "model.metric_signature",
            "g has signature (2n,2n) on H",
            0.5,
            chk_model_signature,
        );
        add(
            "model.coneforms_flat",
            "connection 1-forms vanish on the flat model",
            1e-9,
            chk_model_coneforms,
        );
        add(
            "model.reeb",
            "Reeb frame: η_s(ξ_t) = ε_sδ_st and dη_s(ξ_t,X) + dη_t(ξ_s,X) = 0",
            1e-8,
            chk_model_reeb,
        );
        add(
            "model.decomposition",
            "A = ((π_*A)_H)^h + Σ ε_s(η_s(A) ξ_s^h + φ_s(A) ∂/∂x_s)",
            1e-10,
            chk_model_decomposition,
        );
        add(
            "model.phi",
            "φ_s(∂/∂x_t) = ε_sδ_st and φ_s vanishes on horizontal lifts",
            1e-12,
            chk_model_phi,
        );
        add(
            "model.deta",
            "analytic dη equals the dual-number exterior derivative of η = Σ x_s π*(η_s)",
            1e-8,
            chk_model_deta,
        );
        add(
            "model.eta_chi",
            "η(χ) = Σ ε_s x_s² and χ⌟dη = −Σ ε_s x_s dx_s",
            1e-10,
            chk_model_eta_chi,
        );
        add(
            "model.j_squared",
            "J² = −⟨I,I⟩ id on 𝒦",
            1e-9,
            chk_model_j_squared,
        );
        add(
            "model.j_split_route",
            "coordinate J equals (I π_*X)^h + χ×U + 𝒩×W",
            1e-9,
            chk_model_j_split,
        );
        add(
            "model.levi_identities",
            "G symmetric, G(JA,B) = −G(A,JB), dη(A,B) = 2G(JA,B)",
            1e-9,
            chk_model_levi_identities,
        );
        add(
            "model.levi_block",
            "Levi Gram at x = (0,0,λ) equals the h/l block matrix, l = 1/(2λ)",
            1e-12,
            chk_model_levi_block,
        );
        add(
            "model.lift_commutator",
            "[A^h,B^h] − [A,B]^h vanishes on the flat model",
            1e-8,
            chk_model_lift_commutator,
        );
        add(
            "model.axioms_mutated",
            "control: η1 + u0 du1 breaks axiom (ii)",
            0.5,
            chk_model_mutation,
        );
        add(
            "model.rotation",
            "(η,I,g) ↦ (f ηS, IS, f g) preserves the axioms and Reeb conditions",
            1e-7,
            chk_model_rotation,
        );
    }
    if want(Suite::Twistor) {
        add(
            "twistor.levi_signature",
            "Levi form signature (2n+2, 2n+2) on 𝒵",
            1e-9,
            chk_twistor_levi,
        );
        add(
            "twistor.reeb_property",
            "η(χ) = ⟨I,I⟩ = 1 and χ⌟dη = 0 on T𝒵",
            1e-8,
            chk_twistor_reeb,
        );
        add(
            "twistor.contact",
            "dη nondegenerate on 𝒦 (contact property η ∧ dη^{2n} ≠ 0)",
            1e-12,
            chk_twistor_contact,
        );
        add(
            "twistor.nijenhuis",
            "N(A,B) = 0 for sections of 𝒦 (CR integrability on 𝒵)",
            1e-6,
            chk_twistor_nijenhuis,
        );
        add(
            "twistor.n_ambient",
            "ambient N agrees with N^𝒵 on 𝒵 and N^ℛ on ℛ",
            1e-8,
            chk_twistor_n_ambient,
        );
        add(
            "twistor.n_tensorial",
            "N(A,B) is extension-independent (tensoriality)",
            1e-6,
            chk_twistor_tensorial,
        );
        add(
            "twistor.sheet_symmetry",
            "antipodal map x ↦ −x preserves the residuals on 𝒵±",
            1e-9,
            chk_twistor_sheet_symmetry,
        );
        add(
            "twistor.mutation_control",
            "control: flipped 𝒲-cross sign in J drives N above 1e−2",
            0.5,
            chk_twistor_mutation_control,
        );
    }
    if want(Suite::Reflector) {
        add(
            "reflector.levi_signature",
            "Levi form signature (2n+2, 2n+2) on ℛ",
            1e-9,
            chk_reflector_levi,
        );
        add(
            "reflector.reeb_property",
            "η(χ) = ⟨I,I⟩ = −1 and χ⌟dη = 0 on Tℛ",
            1e-8,
            chk_reflector_reeb,
        );
        add(
            "reflector.nijenhuis",
            "N(A,B) = 0 for sections of 𝒦 (para-CR integrability on ℛ)",
            1e-6,
            chk_reflector_nijenhuis,
        );
        add(
            "reflector.frobenius",
            "J eigenbundles 𝒦±1 have rank 2n+2 with closed brackets",
            1e-6,
            chk_reflector_frobenius,
        );
        add(
            "reflector.frobenius_power",
            "control: mixed brackets [𝒦+1, 𝒦−1] leave 𝒦 nondegenerately",
            0.5,
            chk_reflector_frobenius_power,
        );
    }
    if want(Suite::Conformal) {
        add(
            "conformal.axioms",
            "(η/(2f), I, g/(2f)) satisfies the pqc axioms",
            1e-8,
            chk_conformal_axioms,
        );
        add(
            "conformal.xi_bar",
            "ξ̄_s = 2f ξ_s + I_s∇f matches the Reeb solver on the new structure",
            1e-7,
            chk_conformal_xi_bar,
        );
        add(
            "conformal.alpha_routes",
            "displayed ᾱ equals the connection forms recomputed from (η̄, ξ̄, S̄cal)",
            1e-7,
            chk_conformal_alpha_routes,
        );
        add(
            "conformal.scal",
            "the three diagonal inversions of S̄cal agree",
            1e-7,
            chk_conformal_scal,
        );
        add(
            "conformal.deta",
            "analytic dη̄ equals the dual-number exterior derivative (conformal)",
            1e-8,
            chk_conformal_deta,
        );
        add(
            "conformal.bar_lift",
            "X^h̄ = X^h + (1/f) 𝒩 × Σ ε_t df(I_tX) ∂/∂x_t",
            1e-9,
            chk_conformal_bar_lift,
        );
        add(
            "conformal.chi_bar",
            "χ̄ display equals Σ x_s ξ̄_s^h̄",
            1e-7,
            chk_conformal_chi_bar,
        );
        add(
            "conformal.invariance",
            "(𝒦, J) does not depend on the choice of g and ∇",
            1e-6,
            chk_conformal_invariance,
        );
        add(
            "conformal.invariance_const",
            "constant rescaling leaves (𝒦, J) exactly unchanged",
            1e-9,
            chk_conformal_invariance_const,
        );
        add(
            "conformal.nijenhuis_z",
            "N^𝒵 = 0 on the conformally changed structure",
            1e-5,
            chk_conformal_nijenhuis_z,
        );
        add(
            "conformal.nijenhuis_r",
            "N^ℛ = 0 on the conformally changed structure",
            1e-5,
            chk_conformal_nijenhuis_r,
        );
        add(
            "conformal.group",
            "rescalings compose: the 1/(4ff') change returns the original g",
            1e-7,
            chk_conformal_group,
        );
        add(
            "conformal.defect_vertical",
            "lift-commutator defect stays vertical under conformal change",
            1e-8,
            chk_conformal_defect_vertical,
        );
    }
    checks
}

/// Worker cap: VERIFY_THREADS, defaulting to the available parallelism.
fn worker_count(total: usize) -> usize {
    let cap = std::env::var("VERIFY_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    cap.min(total).max(1)
}

/// Runs a suite and assembles the report. Deterministic for a fixed
/// (config, seed) regardless of scheduling.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Report> {
    cfg.validate()?;
    let checks = registry(cfg.suite);
    let ctx = CheckCtx { cfg: cfg.clone() };
    let results: Vec<Mutex<Option<(CheckResult, Option<String>)>>> =
        (0..checks.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = worker_count(checks.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= checks.len() {
                    break;
                }
                let spec = &checks[i];
                let mut rng = ctx.rng(spec.id);
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| (spec.run)(&ctx, &mut rng)));
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let threshold = spec.threshold * ctx.cfg.tol_scale;
                let (result, warning) = match outcome {
                    Ok(Ok((residual, samples))) => (
                        CheckResult {
                            id: spec.id.to_string(),
                            statement: spec.statement.to_string(),
                            max_residual: residual,
                            threshold,
                            passed: residual <= threshold,
                            samples,
                            wall_ms,
                        },
                        None,
                    ),
                    Ok(Err(e)) => (
                        CheckResult {
                            id: spec.id.to_string(),
                            statement: spec.statement.to_string(),
                            max_residual: f64::MAX,
                            threshold,
                            passed: false,
                            samples: 0,
                            wall_ms,
                        },
                        Some(format!("{}: {e}", spec.id)),
                    ),
                    Err(_) => (
                        CheckResult {
                            id: spec.id.to_string(),
                            statement: spec.statement.to_string(),
                            max_residual: f64::MAX,
                            threshold,
                            passed: false,
                            samples: 0,
                            wall_ms,
                        },
                        Some(format!("{}: panicked", spec.id)),
                    ),
                };
                *results[i].lock().unwrap() = Some((result, warning));
            });
        }
    });
    let mut report = Report::new(cfg.suite.name(), cfg.n, cfg.samples, cfg.seed);
    for cell in results {
        let (check, warning) = cell.into_inner().unwrap().expect("check executed");
        if let Some(w) = warning {
            report.warnings.push(w);
        }
        report.push(check);
    }
    report.finalize();
    Ok(report)
}

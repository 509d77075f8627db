//! The twistor space 𝒵 (⟨I,I⟩ = 1) and reflector space ℛ (⟨I,I⟩ = −1).
//!
//! Fiberwise, 𝒵 is the two-sheeted hyperboloid x1² + x2² − x3² = −1 and ℛ
//! the one-sheeted hyperboloid x1² + x2² − x3² = 1. On both, η restricts to
//! a contact form with Reeb field χ, and (𝒦, J) is an almost CR (J² = −id)
//! respectively almost para-CR (J² = +id) structure whose integrability is
//! measured by the Nijenhuis tensor
//!
//!   N(A,B) = −⟨I,I⟩[A,B] + [JA,JB] − J([JA,B] + [A,JB]),
//!
//! which restricts to N^𝒵 (coefficient −1) on 𝒵 and N^ℛ (coefficient +1)
//! on ℛ. The checks here evaluate N on extended sections of 𝒦, test the
//! Frobenius condition for the real eigenbundles of J on ℛ, compare (𝒦, J)
//! across conformal changes of the underlying structure, and compute the
//! Levi form signature.

use std::sync::Arc;

use crate::bundle::{
    chi_vec, deta_analytic, eta_covector, j_apply_vec, k_frame, phi_covectors,
    section_from_coeffs, KFrame, QJ, QPoint,
};
use crate::fields::{self, lie_bracket, pair, MapRef, Poly, Scaled, ScalarField, VectorField};
use crate::linalg::{self, Mat};
use crate::pqc::{conformal_change, Factor, Structure};
use crate::{Error, Result};

/// A point on 𝒵 (sigma = +1) or ℛ (sigma = −1), carrying its fiber
/// parameters.
#[derive(Clone, Debug)]
pub struct HyperboloidPoint {
    pub q: QPoint,
    pub sigma: f64,
    pub r: f64,
    pub theta: f64,
    pub upper: bool,
}

/// Parametrizes the hyperboloid fibers:
/// 𝒵: x = (sinh r cosθ, sinh r sinθ, ±cosh r); ℛ: x = (cosh r cosθ, cosh r sinθ, sinh r).
/// The constraint Σ ε_s x_s² = σ holds to rounding and the point lies in 𝒬°.
pub fn hyperboloid_point(
    sigma: f64,
    u: Vec<f64>,
    r: f64,
    theta: f64,
    upper: bool,
) -> HyperboloidPoint {
    let x = if sigma > 0.0 {
        let sign = if upper { 1.0 } else { -1.0 };
        [
            r.sinh() * theta.cos(),
            r.sinh() * theta.sin(),
            sign * r.cosh(),
        ]
    } else {
        [
            r.cosh() * theta.cos(),
            r.cosh() * theta.sin(),
            r.sinh(),
        ]
    };
    HyperboloidPoint {
        q: QPoint::new(u, x),
        sigma,
        r,
        theta,
        upper,
    }
}

impl HyperboloidPoint {
    /// The fiber tangents ∂/∂r and ∂/∂θ pushed to x-space.
    pub fn fiber_tangents(&self) -> [[f64; 3]; 2] {
        let (r, th) = (self.r, self.theta);
        if self.sigma > 0.0 {
            let sign = if self.upper { 1.0 } else { -1.0 };
            [
                [r.cosh() * th.cos(), r.cosh() * th.sin(), sign * r.sinh()],
                [-r.sinh() * th.sin(), r.sinh() * th.cos(), 0.0],
            ]
        } else {
            [
                [r.sinh() * th.cos(), r.sinh() * th.sin(), r.cosh()],
                [-r.cosh() * th.sin(), r.cosh() * th.cos(), 0.0],
            ]
        }
    }
}

// ---------------------------------------------------------------------------
// Contact / Reeb properties of η on 𝒵 and ℛ
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ReebPropertyReport {
    /// |η(χ) − ⟨I,I⟩|.
    pub eta_chi: f64,
    /// max |dη(χ, T)| over a tangent basis of 𝒵 / ℛ.
    pub contraction: f64,
    /// max |Σ x_s φ_s(T)| over the fiber tangents (tangency of the
    /// hyperboloid to the kernel of Σ x_s φ_s).
    pub fiber_tangency: f64,
}

/// η(χ) = ⟨I,I⟩ and χ⌟dη = 0 on T𝒵 / Tℛ, evaluated on the frame of 𝒦
/// together with χ itself (which spans the rest of the tangent space).
pub fn reeb_property_check(p: &Structure, hp: &HyperboloidPoint) -> Result<ReebPropertyReport> {
    let q = &hp.q;
    let coords = q.coords();
    let eta = eta_covector(p.as_ref(), &coords);
    let chi = chi_vec(p.as_ref(), &coords);
    let eta_chi = (pair(&eta, &chi) - q.inner()).abs();
    let kf = k_frame(p, q)?;
    let mut contraction: f64 = 0.0;
    for b in kf.basis.iter().chain(std::iter::once(&chi)) {
        contraction = contraction.max(deta_analytic(p.as_ref(), &coords, &chi, b).abs());
    }
    let d = p.dim();
    let phi = phi_covectors(p.as_ref(), &coords);
    let mut fiber_tangency: f64 = 0.0;
    for t in hp.fiber_tangents() {
        let mut v = vec![0.0; d + 3];
        for s in 0..3 {
            v[d + s] = t[s];
        }
        let mut acc = 0.0;
        for s in 0..3 {
            acc += q.x[s] * pair(&phi[s], &v);
        }
        fiber_tangency = fiber_tangency.max(acc.abs());
    }
    Ok(ReebPropertyReport {
        eta_chi,
        contraction,
        fiber_tangency,
    })
}

// ---------------------------------------------------------------------------
// Levi form signature
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LeviReport {
    pub signature: fields::Signature,
    /// Smallest |eigenvalue| of the Levi Gram matrix.
    pub margin: f64,
    /// max |dη(JA,B) + 2⟨I,I⟩ G(A,B)| over the frame.
    pub consistency: f64,
    /// Smallest singular value of dη restricted to 𝒦 (contact
    /// nondegeneracy certificate).
    pub deta_margin: f64,
}

/// Signature of the Levi form G on 𝒦 at a point, with the consistency check
/// dη(J·,·) = −2⟨I,I⟩ G and the nondegeneracy margin of dη on 𝒦.
pub fn levi_signature_check(p: &Structure, q: &QPoint) -> Result<LeviReport> {
    let kf = k_frame(p, q)?;
    let k = kf.dim_k();
    let coords = q.coords();
    let signature = fields::signature(&kf.g_mat, fields::SIGNATURE_ZERO_TOL)?;
    let (ev, _) = linalg::sym_eigen(&kf.g_mat);
    let margin = ev.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    let inner = q.inner();
    let mut consistency: f64 = 0.0;
    let mut deta_gram = Mat::zeros(k, k);
    for i in 0..k {
        let jb = j_apply_vec(p.as_ref(), &coords, &kf.basis[i], 1.0);
        for j in 0..k {
            let de = deta_analytic(p.as_ref(), &coords, &jb, &kf.basis[j]);
            consistency = consistency.max((de + 2.0 * inner * kf.g_mat[(i, j)]).abs());
            deta_gram[(i, j)] = deta_analytic(p.as_ref(), &coords, &kf.basis[i], &kf.basis[j]);
        }
    }
    let sv = linalg::singular_values(&deta_gram);
    let deta_margin = *sv.last().unwrap();
    Ok(LeviReport {
        signature,
        margin,
        consistency,
        deta_margin,
    })
}

// ---------------------------------------------------------------------------
// Nijenhuis tensor
// ---------------------------------------------------------------------------

/// Which bracket coefficient to use in the first term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NVariant {
    /// −⟨I,I⟩ [A,B] (defined on all of 𝒬°).
    Ambient,
    /// −[A,B] (the CR tensor on 𝒵).
    TwistorZ,
    /// +[A,B] (the para-CR tensor on ℛ).
    ReflectorR,
}

#[derive(Clone, Debug)]
pub struct NijenhuisSample {
    /// Euclidean norm of N(A,B) in frame coefficients (𝒦, χ and 𝒩 parts).
    pub residual: f64,
    /// |η| and |Σ x_s φ_s| components of [JA,B] + [A,JB] (must lie in 𝒦 for
    /// the final J application to be well defined).
    pub k_residual: f64,
    /// The raw N vector in ambient coordinates.
    pub n_vec: Vec<f64>,
}

/// Evaluates N(A,B) at the frame's base point for two extended sections of
/// 𝒦 given as fields on 𝒬. `wsign` propagates the J mutation control.
pub fn nijenhuis(
    p: &Structure,
    frame: &KFrame,
    a: &MapRef,
    b: &MapRef,
    variant: NVariant,
    wsign: f64,
) -> Result<NijenhuisSample> {
    frame.q.gate()?;
    let coords = frame.q.coords();
    let coef = match variant {
        NVariant::Ambient => -frame.q.inner(),
        NVariant::TwistorZ => -1.0,
        NVariant::ReflectorR => 1.0,
    };
    let ja = Arc::new(QJ {
        p: p.clone(),
        a: a.clone(),
        wsign,
    }) as MapRef;
    let jb = Arc::new(QJ {
        p: p.clone(),
        a: b.clone(),
        wsign,
    }) as MapRef;
    let va = VectorField(a.clone());
    let vb = VectorField(b.clone());
    let vja = VectorField(ja);
    let vjb = VectorField(jb);
    let ab = lie_bracket(&va, &vb).eval(&coords);
    let jajb = lie_bracket(&vja, &vjb).eval(&coords);
    let jab = lie_bracket(&vja, &vb).eval(&coords);
    let ajb = lie_bracket(&va, &vjb).eval(&coords);
    let c: Vec<f64> = jab.iter().zip(&ajb).map(|(x, y)| x + y).collect();
    // [JA,B] + [A,JB] must be a section of 𝒦.
    let eta = eta_covector(p.as_ref(), &coords);
    let phi = phi_covectors(p.as_ref(), &coords);
    let mut k_residual = pair(&eta, &c).abs();
    let mut xphi = 0.0;
    for s in 0..3 {
        xphi += frame.q.x[s] * pair(&phi[s], &c);
    }
    k_residual = k_residual.max(xphi.abs());
    let jc = j_apply_vec(p.as_ref(), &coords, &c, wsign);
    let n_vec: Vec<f64> = (0..coords.len())
        .map(|mu| coef * ab[mu] + jajb[mu] - jc[mu])
        .collect();
    let (kc, chi_c, nu_c) = frame.expand(&n_vec);
    let mut norm2: f64 = kc.iter().map(|x| x * x).sum();
    norm2 += chi_c * chi_c + nu_c * nu_c;
    Ok(NijenhuisSample {
        residual: norm2.sqrt(),
        k_residual,
        n_vec,
    })
}

/// Random 𝒦-section coefficients plus the section itself.
pub fn random_section(
    p: &Structure,
    frame: &KFrame,
    rng: &mut impl rand::Rng,
) -> (Vec<f64>, MapRef) {
    let coeffs: Vec<f64> = (0..frame.dim_k())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let sec = section_from_coeffs(p, frame, &coeffs);
    (coeffs, sec)
}

/// Compares N computed with two different extensions of the same 𝒦 vectors
/// (tensoriality of N): the second extension rescales by a factor equal to 1
/// at the base point and adds a section vanishing there.
pub fn nijenhuis_extension_comparison(
    p: &Structure,
    frame: &KFrame,
    coeffs_a: &[f64],
    coeffs_b: &[f64],
    variant: NVariant,
) -> Result<f64> {
    let dd = p.dim() + 3;
    let d = p.dim();
    let a1 = section_from_coeffs(p, frame, coeffs_a);
    let b1 = section_from_coeffs(p, frame, coeffs_b);
    // Scalar field 1 + (x_1 − x_1(q0)) on 𝒬.
    let bump = |s: usize| -> ScalarField {
        ScalarField(Arc::new(Poly {
            dim: dd,
            terms: vec![
                (1.0, vec![]),
                (1.0, vec![(d + s, 1)]),
                (-frame.q.x[s], vec![]),
            ],
        }))
    };
    let a2 = Arc::new(Scaled {
        factor: bump(0),
        base: a1.clone(),
    }) as MapRef;
    // Additive perturbation vanishing at q0: (x_2 − x_2(q0)) · (first frame
    // extension).
    let w = crate::bundle::frame_extension(p, frame, 0);
    let zero_at_q0 = ScalarField(Arc::new(Poly {
        dim: dd,
        terms: vec![(1.0, vec![(d + 1, 1)]), (-frame.q.x[1], vec![])],
    }));
    let b2 = Arc::new(fields::LinComb {
        terms: vec![
            (1.0, Arc::new(Scaled {
                factor: bump(2),
                base: b1.clone(),
            }) as MapRef),
            (1.0, Arc::new(Scaled {
                factor: zero_at_q0,
                base: w,
            }) as MapRef),
        ],
    }) as MapRef;
    let s1 = nijenhuis(p, frame, &a1, &b1, variant, 1.0)?;
    let s2 = nijenhuis(p, frame, &a2, &b2, variant, 1.0)?;
    let diff = s1
        .n_vec
        .iter()
        .zip(&s2.n_vec)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(diff)
}

// ---------------------------------------------------------------------------
// Frobenius test for the real eigenbundles on ℛ
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FrobeniusReport {
    pub plus_dim: usize,
    pub minus_dim: usize,
    /// ‖J² − id‖ on the frame of 𝒦.
    pub j_sq_residual: f64,
    /// max over eigen-pairs of the complementary-eigenspace, η and Σx_sφ_s
    /// components of [A±, B±].
    pub closed_residual: f64,
    /// Smallest singular value of the matrix η([A₊_i, B₋_j]) over all mixed
    /// pairs: the mixed brackets must leave 𝒦 nondegenerately (this is the
    /// contact pairing of the eigenbundles), so the check has power.
    pub mixed_eta_min: f64,
}

/// Frobenius integrability of the ±1 eigenbundles of J on the reflector
/// space: each has rank 2n+2 and closed brackets.
pub fn frobenius_para(p: &Structure, hp: &HyperboloidPoint) -> Result<FrobeniusReport> {
    if hp.sigma >= 0.0 {
        return Err(Error::InvalidInput(
            "frobenius_para needs a reflector point (⟨I,I⟩ = −1)".into(),
        ));
    }
    let q = &hp.q;
    let kf = k_frame(p, q)?;
    let k = kf.dim_k();
    let id = Mat::identity(k);
    let j_sq_residual = kf.j_mat.matmul(&kf.j_mat).sub(&id).max_abs();
    if j_sq_residual > 1e-6 {
        return Err(Error::constraint(
            "frobenius_para",
            "J² = id fails on the reflector frame",
            j_sq_residual,
        ));
    }
    let p_plus = id.add(&kf.j_mat).scale(0.5);
    let p_minus = id.sub(&kf.j_mat).scale(0.5);
    // Projector ranks: eigenvalues are 0/1, so count singular values > 1/2.
    let rank = |m: &Mat| {
        linalg::singular_values(m)
            .iter()
            .filter(|s| **s > 0.5)
            .count()
    };
    let plus_dim = rank(&p_plus);
    let minus_dim = rank(&p_minus);
    if plus_dim + minus_dim != k {
        return Err(Error::Degenerate {
            what: "frobenius_para",
            detail: format!("defective J: eigenbundle ranks {plus_dim} + {minus_dim} != {k}"),
        });
    }
    let basis_plus = linalg::orthonormal_columns(&p_plus, 1e-8);
    let basis_minus = linalg::orthonormal_columns(&p_minus, 1e-8);
    let coords = q.coords();
    let eta = eta_covector(p.as_ref(), &coords);
    let phi = phi_covectors(p.as_ref(), &coords);
    // Eigen-section through an eigenvector v: ½(A + JA) where A extends v.
    let eigen_section = |col: &[f64], sign: f64| -> MapRef {
        let a = section_from_coeffs(p, &kf, col);
        let ja = Arc::new(QJ {
            p: p.clone(),
            a: a.clone(),
            wsign: 1.0,
        }) as MapRef;
        Arc::new(fields::LinComb {
            terms: vec![(0.5, a), (0.5 * sign, ja)],
        })
    };
    let mut closed_residual: f64 = 0.0;
    let pairs_to_test = 3.min(plus_dim);
    for (proj_other, basis, sign) in [(&p_minus, &basis_plus, 1.0), (&p_plus, &basis_minus, -1.0)]
    {
        for i in 0..pairs_to_test {
            for j in (i + 1)..pairs_to_test {
                let a = eigen_section(&basis.col(i), sign);
                let b = eigen_section(&basis.col(j), sign);
                let br = lie_bracket(&VectorField(a), &VectorField(b)).eval(&coords);
                closed_residual = closed_residual.max(pair(&eta, &br).abs());
                let mut xphi = 0.0;
                for s in 0..3 {
                    xphi += q.x[s] * pair(&phi[s], &br);
                }
                closed_residual = closed_residual.max(xphi.abs());
                let (kc, chi_c, nu_c) = kf.expand(&br);
                closed_residual = closed_residual.max(chi_c.abs()).max(nu_c.abs());
                let off = proj_other.matvec(&kc);
                for v in off {
                    closed_residual = closed_residual.max(v.abs());
                }
            }
        }
    }
    let mut mixed = Mat::zeros(plus_dim, minus_dim);
    for i in 0..plus_dim {
        for j in 0..minus_dim {
            let a = eigen_section(&basis_plus.col(i), 1.0);
            let b = eigen_section(&basis_minus.col(j), -1.0);
            let br = lie_bracket(&VectorField(a), &VectorField(b)).eval(&coords);
            mixed[(i, j)] = pair(&eta, &br);
        }
    }
    let mixed_eta_min = *linalg::singular_values(&mixed).last().unwrap();
    Ok(FrobeniusReport {
        plus_dim,
        minus_dim,
        j_sq_residual,
        closed_residual,
        mixed_eta_min,
    })
}

// ---------------------------------------------------------------------------
// Conformal invariance of (𝒦, J)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct InvarianceReport {
    /// Largest principal angle between 𝒦 and 𝒦̄ at the point.
    pub max_angle: f64,
    /// max over the 𝒦-frame of ‖J̄(b) − J(b)‖∞.
    pub j_diff: f64,
}

/// Compares the distribution 𝒦 and the endomorphism J built from a
/// structure and from its conformal change at the same point of 𝒬°.
pub fn invariance_check(p: &Structure, factor: &Factor, q: &QPoint) -> Result<InvarianceReport> {
    let pbar = conformal_change(p, factor)?;
    let kf = k_frame(p, q)?;
    let kfb = k_frame(&pbar, q)?;
    let dd = p.dim() + 3;
    let k = kf.dim_k();
    let mut ma = Mat::zeros(dd, k);
    let mut mb = Mat::zeros(dd, k);
    for j in 0..k {
        for i in 0..dd {
            ma[(i, j)] = kf.basis[j][i];
            mb[(i, j)] = kfb.basis[j][i];
        }
    }
    // Sine route: resolves coincident subspaces to machine precision, where
    // the acos of a singular value bottoms out near 1e-8.
    let max_angle = linalg::subspace_gap(&ma, &mb).clamp(-1.0, 1.0).asin();
    let coords = q.coords();
    let mut j_diff: f64 = 0.0;
    for b in &kf.basis {
        let j1 = j_apply_vec(p.as_ref(), &coords, b, 1.0);
        let j2 = j_apply_vec(pbar.as_ref(), &coords, b, 1.0);
        for (x, y) in j1.iter().zip(&j2) {
            j_diff = j_diff.max((x - y).abs());
        }
    }
    Ok(InvarianceReport { max_angle, j_diff })
}

/// J computed on a constant-rotated structure agrees with the original after
/// transporting the fiber coordinates with x' = (εSε) x and matching
/// tangents accordingly. Returns the max component difference.
pub fn rotation_equivariance_check(
    p: &Structure,
    s_mat: &Mat,
    q: &QPoint,
    t: &[f64],
) -> Result<f64> {
    let rot = crate::pqc::rotate_structure(p, s_mat, &Factor::constant(p.dim(), 1.0))?;
    let e = crate::algebra::eta_metric3();
    let m = e.matmul(s_mat).matmul(&e);
    let xr = m.matvec(&q.x.to_vec());
    let qr = QPoint::new(q.u.clone(), [xr[0], xr[1], xr[2]]);
    let d = p.dim();
    // dΦ = diag(id, εSε) on tangents.
    let push = |v: &[f64]| -> Vec<f64> {
        let mut out = v[..d].to_vec();
        let xv = m.matvec(&v[d..].to_vec());
        out.extend(xv);
        out
    };
    let j1 = j_apply_vec(p.as_ref(), &q.coords(), t, 1.0);
    let j2 = j_apply_vec(rot.as_ref(), &qr.coords(), &push(t), 1.0);
    let j1p = push(&j1);
    Ok(j1p
        .iter()
        .zip(&j2)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pqc::heisenberg_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hyperboloid(
        rng: &mut ChaCha8Rng,
        d: usize,
        sigma: f64,
    ) -> HyperboloidPoint {
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rng.random_range(0.2..1.2);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let upper = rng.random_range(0..2u8) == 0;
        hyperboloid_point(sigma, u, r, theta, upper)
    }

    #[test]
    fn hyperboloid_constraint_and_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for sigma in [1.0, -1.0] {
            for _ in 0..50 {
                let hp = random_hyperboloid(&mut rng, 7, sigma);
                assert!((hp.q.inner() - sigma).abs() < 1e-12);
                assert!(hp.q.gate().is_ok());
            }
        }
        // Poles: σ = +1, r = 0 gives x = (0,0,±1); σ = −1, r = 0, θ = 0 gives (1,0,0).
        let hp = hyperboloid_point(1.0, vec![0.0; 7], 0.0, 0.0, true);
        assert_eq!(hp.q.x, [0.0, 0.0, 1.0]);
        assert!((hp.q.inner() - 1.0).abs() < 1e-15);
        let hp = hyperboloid_point(-1.0, vec![0.0; 7], 0.0, 0.0, true);
        assert_eq!(hp.q.x, [1.0, 0.0, 0.0]);
        assert!((hp.q.inner() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn reeb_property_on_both_spaces() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for sigma in [1.0, -1.0] {
            for _ in 0..25 {
                let hp = random_hyperboloid(&mut rng, p.dim(), sigma);
                let rep = reeb_property_check(&p, &hp).unwrap();
                assert!(rep.eta_chi < 1e-10, "η(χ) residual {}", rep.eta_chi);
                assert!(rep.contraction < 1e-8, "χ⌟dη residual {}", rep.contraction);
                assert!(rep.fiber_tangency < 1e-10);
            }
        }
    }

    #[test]
    fn levi_signature_is_split_on_z_and_r() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        for sigma in [1.0, -1.0] {
            for _ in 0..20 {
                let hp = random_hyperboloid(&mut rng, p.dim(), sigma);
                let rep = levi_signature_check(&p, &hp.q).unwrap();
                assert_eq!(rep.signature.pos, 4, "{:?}", rep);
                assert_eq!(rep.signature.neg, 4, "{:?}", rep);
                assert_eq!(rep.signature.zero, 0);
                assert!(rep.margin > 1e-7);
                assert!(rep.consistency < 1e-9, "dη(J·,·) = −2⟨I,I⟩G residual");
                assert!(rep.deta_margin > 1e-7);
            }
        }
    }

    #[test]
    fn levi_rejects_null_cone() {
        let p = heisenberg_model(1);
        let q = QPoint::new(vec![0.0; 7], [1.0, 0.0, 1.0]);
        assert!(levi_signature_check(&p, &q).is_err());
    }

    #[test]
    fn nijenhuis_vanishes_on_flat_model() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for sigma in [1.0, -1.0] {
            let variant = if sigma > 0.0 {
                NVariant::TwistorZ
            } else {
                NVariant::ReflectorR
            };
            for _ in 0..25 {
                let hp = random_hyperboloid(&mut rng, p.dim(), sigma);
                let kf = k_frame(&p, &hp.q).unwrap();
                let (_, a) = random_section(&p, &kf, &mut rng);
                let (_, b) = random_section(&p, &kf, &mut rng);
                let sample = nijenhuis(&p, &kf, &a, &b, variant, 1.0).unwrap();
                assert!(
                    sample.residual < 1e-6,
                    "N residual {} on sigma {}",
                    sample.residual,
                    sigma
                );
                assert!(sample.k_residual < 1e-7);
                // Ambient tensor agrees on the hyperboloids.
                let amb = nijenhuis(&p, &kf, &a, &b, NVariant::Ambient, 1.0).unwrap();
                for (x, y) in sample.n_vec.iter().zip(&amb.n_vec) {
                    assert!((x - y).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn nijenhuis_antisymmetric_arguments_give_zero() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let hp = random_hyperboloid(&mut rng, p.dim(), 1.0);
        let kf = k_frame(&p, &hp.q).unwrap();
        let (_, a) = random_section(&p, &kf, &mut rng);
        let sample = nijenhuis(&p, &kf, &a, &a, NVariant::TwistorZ, 1.0).unwrap();
        assert_eq!(sample.residual, 0.0);
    }

    #[test]
    fn nijenhuis_mutated_j_is_detected() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let mut max_res: f64 = 0.0;
        for _ in 0..10 {
            let hp = random_hyperboloid(&mut rng, p.dim(), 1.0);
            let kf = k_frame(&p, &hp.q).unwrap();
            let (_, a) = random_section(&p, &kf, &mut rng);
            let (_, b) = random_section(&p, &kf, &mut rng);
            let sample = nijenhuis(&p, &kf, &a, &b, NVariant::TwistorZ, -1.0).unwrap();
            max_res = max_res.max(sample.residual);
        }
        assert!(
            max_res > 1e-2,
            "mutated J must break integrability, got {max_res}"
        );
    }

    #[test]
    fn nijenhuis_is_tensorial_across_extensions() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..10 {
            let hp = random_hyperboloid(&mut rng, p.dim(), 1.0);
            let kf = k_frame(&p, &hp.q).unwrap();
            let ca: Vec<f64> = (0..kf.dim_k()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cb: Vec<f64> = (0..kf.dim_k()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let diff =
                nijenhuis_extension_comparison(&p, &kf, &ca, &cb, NVariant::TwistorZ).unwrap();
            assert!(diff < 1e-6, "extension dependence {diff}");
        }
    }

    #[test]
    fn nijenhuis_vanishes_on_conformal_structure() {
        let p = heisenberg_model(1);
        let f = Factor::affine(p.dim(), 1.0, &[(0, 0.1)]);
        let bar = conformal_change(&p, &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        for sigma in [1.0, -1.0] {
            let variant = if sigma > 0.0 {
                NVariant::TwistorZ
            } else {
                NVariant::ReflectorR
            };
            for _ in 0..10 {
                let hp = random_hyperboloid(&mut rng, bar.dim(), sigma);
                let kf = k_frame(&bar, &hp.q).unwrap();
                let (_, a) = random_section(&bar, &kf, &mut rng);
                let (_, b) = random_section(&bar, &kf, &mut rng);
                let sample = nijenhuis(&bar, &kf, &a, &b, variant, 1.0).unwrap();
                assert!(
                    sample.residual < 1e-5,
                    "conformal N residual {}",
                    sample.residual
                );
            }
        }
    }

    #[test]
    fn sheet_symmetry_of_residuals() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        for _ in 0..10 {
            let hp = random_hyperboloid(&mut rng, p.dim(), 1.0);
            let anti = QPoint::new(hp.q.u.clone(), [-hp.q.x[0], -hp.q.x[1], -hp.q.x[2]]);
            let kf1 = k_frame(&p, &hp.q).unwrap();
            let kf2 = k_frame(&p, &anti).unwrap();
            let ca: Vec<f64> = (0..kf1.dim_k()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cb: Vec<f64> = (0..kf1.dim_k()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a1 = section_from_coeffs(&p, &kf1, &ca);
            let b1 = section_from_coeffs(&p, &kf1, &cb);
            let a2 = section_from_coeffs(&p, &kf2, &ca);
            let b2 = section_from_coeffs(&p, &kf2, &cb);
            let s1 = nijenhuis(&p, &kf1, &a1, &b1, NVariant::TwistorZ, 1.0).unwrap();
            let s2 = nijenhuis(&p, &kf2, &a2, &b2, NVariant::TwistorZ, 1.0).unwrap();
            assert!(
                (s1.residual - s2.residual).abs() < 1e-9,
                "antipodal residuals {} vs {}",
                s1.residual,
                s2.residual
            );
        }
    }

    #[test]
    fn frobenius_eigenbundles_close_on_reflector() {
        let p = heisenberg_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        for _ in 0..10 {
            let hp = random_hyperboloid(&mut rng, p.dim(), -1.0);
            let rep = frobenius_para(&p, &hp).unwrap();
            assert_eq!(rep.plus_dim, 4);
            assert_eq!(rep.minus_dim, 4);
            assert!(rep.j_sq_residual < 1e-9);
            assert!(
                rep.closed_residual < 1e-6,
                "closed bracket residual {}",
                rep.closed_residual
            );
            assert!(
                rep.mixed_eta_min > 1e-3,
                "mixed bracket pairing degenerate: {}",
                rep.mixed_eta_min
            );
        }
    }

    #[test]
    fn frobenius_rejects_twistor_points() {
        let p = heisenberg_model(1);
        let hp = hyperboloid_point(1.0, vec![0.0; 7], 0.3, 0.1, true);
        assert!(frobenius_para(&p, &hp).is_err());
    }

    #[test]
    fn invariance_constant_factor_exact() {
        let p = heisenberg_model(1);
        let f = Factor::constant(p.dim(), 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..10 {
            let hp = random_hyperboloid(&mut rng, p.dim(), 1.0);
            let rep = invariance_check(&p, &f, &hp.q).unwrap();
            assert!(rep.max_angle < 1e-12, "angle {}", rep.max_angle);
            assert!(rep.j_diff < 1e-10, "J diff {}", rep.j_diff);
        }
    }

    #[test]
    fn invariance_nonconstant_factor() {
        let p = heisenberg_model(1);
        let f = Factor::affine(p.dim(), 1.0, &[(0, 0.1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        for sigma in [1.0, -1.0] {
            for _ in 0..10 {
                let hp = random_hyperboloid(&mut rng, p.dim(), sigma);
                let rep = invariance_check(&p, &f, &hp.q).unwrap();
                assert!(rep.max_angle < 1e-6, "angle {}", rep.max_angle);
                assert!(rep.j_diff < 1e-6, "J diff {}", rep.j_diff);
            }
        }
    }

    #[test]
    fn rotation_equivariance_of_j() {
        let p = heisenberg_model(1);
        let s = crate::algebra::so12_exp([0.4, 0.2, -0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..10 {
            let hp = random_hyperboloid(&mut rng, p.dim(), 1.0);
            let kf = k_frame(&p, &hp.q).unwrap();
            let mut t = vec![0.0; p.dim() + 3];
            for b in &kf.basis {
                let c: f64 = rng.random_range(-1.0..1.0);
                for mu in 0..t.len() {
                    t[mu] += c * b[mu];
                }
            }
            let diff = rotation_equivariance_check(&p, &s, &hp.q, &t).unwrap();
            assert!(diff < 1e-9, "rotation equivariance residual {diff}");
        }
    }
}

//! Small dense linear algebra over f64.
//!
//! Everything here operates on matrices of dimension at most a few dozen
//! (4n+6 with n ∈ {1, 2}), so simple O(d³) algorithms are used throughout:
//! Householder QR for least squares, cyclic Jacobi for symmetric
//! eigenvalues, and scaling-and-squaring Taylor series for the 3×3
//! exponential.

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            a: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            m.a[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, o: &Mat) -> Mat {
        assert_eq!(self.cols, o.rows);
        let mut m = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let v = self[(i, k)];
                if v == 0.0 {
                    continue;
                }
                for j in 0..o.cols {
                    m[(i, j)] += v * o[(k, j)];
                }
            }
        }
        m
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn add(&self, o: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, o: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            a: self.a.iter().map(|x| x * s).collect(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sym_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                r = r.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        r
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * self.cols + j]
    }
}

/// Least-squares solution of A x = b by Householder QR, for rows ≥ cols.
///
/// Returns (x, residual_norm, min_abs_r_diag) where the last entry is the
/// smallest |R_ii|, a cheap rank indicator.
pub fn lstsq(a: &Mat, b: &[f64]) -> (Vec<f64>, f64, f64) {
    let m = a.rows;
    let n = a.cols;
    assert!(m >= n, "lstsq needs rows >= cols");
    assert_eq!(b.len(), m);
    let mut r = a.clone();
    let mut y = b.to_vec();
    for k in 0..n {
        // Householder vector for column k.
        let mut norm: f64 = 0.0;
        for i in k..m {
            norm += r[(i, k)] * r[(i, k)];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - k];
        v[0] = r[(k, k)] - alpha;
        for i in k + 1..m {
            v[i - k] = r[(i, k)];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        // Apply H = I − 2vvᵀ/vᵀv to the remaining columns and to y.
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            let c = 2.0 * dot / vtv;
            for i in k..m {
                r[(i, j)] -= c * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * y[i]).sum();
        let c = 2.0 * dot / vtv;
        for i in k..m {
            y[i] -= c * v[i - k];
        }
        r[(k, k)] = alpha;
    }
    // Back substitution.
    let mut x = vec![0.0; n];
    let mut min_diag = f64::INFINITY;
    for k in (0..n).rev() {
        min_diag = min_diag.min(r[(k, k)].abs());
        let mut s = y[k];
        for j in k + 1..n {
            s -= r[(k, j)] * x[j];
        }
        x[k] = if r[(k, k)] != 0.0 { s / r[(k, k)] } else { 0.0 };
    }
    let resid: f64 = (n..m).map(|i| y[i] * y[i]).sum::<f64>().sqrt();
    (x, resid, min_diag)
}

/// Solves the square system A x = b; wraps [`lstsq`].
pub fn solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    lstsq(a, b).0
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix
/// by the cyclic Jacobi method.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.rows;
    assert_eq!(n, m.cols);
    let mut a = m.clone();
    let mut v = Mat::identity(n);
    let scale = a.max_abs().max(1e-300);
    for _sweep in 0..200 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off < 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-18 * scale {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    idx.sort_by(|&i, &j| eig[i].partial_cmp(&eig[j]).unwrap());
    let evals: Vec<f64> = idx.iter().map(|&i| eig[i]).collect();
    let evecs = Mat::from_fn(n, n, |i, j| v[(i, idx[j])]);
    (evals, evecs)
}

/// Singular values (descending) of an arbitrary matrix via eigenvalues of AᵀA.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    let ata = a.transpose().matmul(a);
    let (ev, _) = sym_eigen(&ata);
    let mut sv: Vec<f64> = ev.iter().map(|x| x.max(0.0).sqrt()).collect();
    sv.reverse();
    sv
}

/// Euclidean orthonormalization of the columns of `a` (modified Gram-Schmidt).
/// Columns with remaining norm below `tol` are dropped.
pub fn orthonormal_columns(a: &Mat, tol: f64) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..a.cols {
        let mut v = a.col(j);
        for u in &cols {
            let d: f64 = v.iter().zip(u.iter()).map(|(x, y)| x * y).sum();
            for (vi, ui) in v.iter_mut().zip(u.iter()) {
                *vi -= d * ui;
            }
        }
        let nrm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > tol {
            for vi in v.iter_mut() {
                *vi /= nrm;
            }
            cols.push(v);
        }
    }
    let mut m = Mat::zeros(a.rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for i in 0..a.rows {
            m[(i, j)] = c[i];
        }
    }
    m
}

/// Principal angles (radians, ascending) between the column spans of `a` and `b`.
///
/// The cosine route through `acos` cannot resolve angles below ~1e-8; use
/// [`subspace_gap`] when near-zero angles must be measured exactly.
pub fn principal_angles(a: &Mat, b: &Mat) -> Vec<f64> {
    let qa = orthonormal_columns(a, 1e-12);
    let qb = orthonormal_columns(b, 1e-12);
    assert_eq!(qa.cols, qb.cols, "subspaces of different dimensions");
    let m = qa.transpose().matmul(&qb);
    let sv = singular_values(&m);
    let mut ang: Vec<f64> = sv.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect();
    ang.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ang
}

/// Sine of the largest principal angle between two column spans, computed as
/// the spectral norm of the difference of orthogonal projectors. Resolves
/// coincident subspaces to machine precision.
pub fn subspace_gap(a: &Mat, b: &Mat) -> f64 {
    let qa = orthonormal_columns(a, 1e-12);
    let qb = orthonormal_columns(b, 1e-12);
    assert_eq!(qa.cols, qb.cols, "subspaces of different dimensions");
    let pa = qa.matmul(&qa.transpose());
    let pb = qb.matmul(&qb.transpose());
    singular_values(&pa.sub(&pb))[0]
}

/// 3×3 matrix exponential by scaling and squaring with a Taylor series.
pub fn expm3(a: &Mat) -> Mat {
    assert_eq!((a.rows, a.cols), (3, 3));
    let norm = a.max_abs();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = a.scale(0.5f64.powi(s));
    let mut term = Mat::identity(3);
    let mut sum = Mat::identity(3);
    for k in 1..=16 {
        term = term.matmul(&b).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    let mut r = sum;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    r
}

pub fn det3(m: &Mat) -> f64 {
    assert_eq!((m.rows, m.cols), (3, 3));
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_square_exact() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let (x, r, _) = lstsq(&a, &[5.0, 10.0]);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        assert!(r < 1e-12);
    }

    #[test]
    fn lstsq_overdetermined() {
        // Fit y = 2t + 1 through noisy-free samples; residual exactly 0.
        let a = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0]]);
        let (x, r, _) = lstsq(&a, &[1.0, 3.0, 5.0]);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
        assert!(r < 1e-12);
    }

    #[test]
    fn jacobi_eigen_diag() {
        let m = Mat::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, -1.0],
        ]);
        let (ev, vecs) = sym_eigen(&m);
        assert!((ev[0] + 1.0).abs() < 1e-12);
        assert!((ev[1] - 1.0).abs() < 1e-12);
        assert!((ev[2] - 3.0).abs() < 1e-12);
        // Residual of M v = λ v for the top eigenpair.
        let v = vecs.col(2);
        let mv = m.matvec(&v);
        for i in 0..3 {
            assert!((mv[i] - 3.0 * v[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn expm_rotation() {
        // exp of a rotation generator gives cos/sin entries.
        let a = Mat::from_rows(&[
            vec![0.0, -1.3, 0.0],
            vec![1.3, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ]);
        let e = expm3(&a);
        assert!((e[(0, 0)] - 1.3f64.cos()).abs() < 1e-12);
        assert!((e[(1, 0)] - 1.3f64.sin()).abs() < 1e-12);
        assert!((det3(&e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn principal_angles_of_rotated_plane() {
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let th = 0.3f64;
        // Rotate the plane's second basis vector towards e3.
        let b = Mat::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, th.cos()],
            vec![0.0, th.sin()],
        ]);
        let ang = principal_angles(&a, &b);
        assert!(ang[0].abs() < 1e-9);
        assert!((ang[1] - th).abs() < 1e-9);
    }
}

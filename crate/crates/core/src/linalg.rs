//! Small dense linear-algebra helpers on top of nalgebra.

use crate::C64;
use nalgebra::{DMatrix, DVector, Matrix2};

pub type CMat = DMatrix<C64>;
pub type M2 = Matrix2<C64>;

/// Moore–Penrose pseudo-inverse with relative singular-value cutoff `rcond`.
/// Returns the pseudo-inverse and the condition number of the retained part.
pub fn pinv(a: &DMatrix<f64>, rcond: f64) -> (DMatrix<f64>, f64) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let mut out = DMatrix::<f64>::zeros(a.ncols(), a.nrows());
    let mut smin = smax;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rcond * smax {
            smin = smin.min(s);
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk / s) * uk.transpose();
        }
    }
    (out, smax / smin)
}

/// Singular values in descending order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Unit vector spanning the (approximate) null space of a wide real matrix:
/// the right singular vector of the smallest singular value.
pub fn null_vector(a: &DMatrix<f64>) -> (DVector<f64>, Vec<f64>) {
    let (r, c) = a.shape();
    // pad to square so the SVD returns a full right basis
    let mut sq = DMatrix::<f64>::zeros(c.max(r), c);
    sq.view_mut((0, 0), (r, c)).copy_from(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let k = (0..s.len()).min_by(|&i, &j| s[i].total_cmp(&s[j])).unwrap();
    (vt.row(k).transpose(), s)
}

/// Determinant of a real square matrix.
pub fn det(a: &DMatrix<f64>) -> f64 {
    a.clone().lu().determinant()
}

/// Spectral norm of a complex matrix.
pub fn norm2(a: &CMat) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn m2_norm(a: &M2) -> f64 {
    // largest singular value of a 2×2 matrix in closed form
    let f = a.iter().map(|x| x.norm_sqr()).sum::<f64>();
    let d = (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).norm();
    (0.5 * (f + (f * f - 4.0 * d * d).max(0.0).sqrt())).sqrt()
}

pub fn m2_to_dyn(a: &M2) -> CMat {
    CMat::from_fn(2, 2, |i, j| a[(i, j)])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let e = a.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(a.nrows(), a.ncols(), |r, c| e.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Roots of the monic polynomial `z^N + c[N-1] z^{N-1} + ... + c[0]` via companion eigenvalues.
pub fn monic_roots(c: &[C64]) -> Vec<C64> {
    let n = c.len();
    if n == 0 {
        return vec![];
    }
    let mut m = CMat::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i];
    }
    complex_eigenvalues(&m)
}

/// Eigenvalues of a general complex matrix by shifted QR iteration on the Hessenberg form.
pub fn complex_eigenvalues(a: &CMat) -> Vec<C64> {
    let n = a.nrows();
    let mut h = a.clone();
    let mut out = Vec::with_capacity(n);
    let mut hi = n;
    let mut iter = 0;
    while hi > 0 {
        if hi == 1 {
            out.push(h[(0, 0)]);
            break;
        }
        let k = hi - 1;
        let scale = h[(k, k)].norm() + h[(k - 1, k - 1)].norm();
        if h[(k, k - 1)].norm() <= 1e-15 * scale.max(1e-300) || iter > 500 {
            out.push(h[(k, k)]);
            hi -= 1;
            iter = 0;
            continue;
        }
        // Wilkinson shift from the trailing 2×2 block
        let (a11, a12, a21, a22) = (h[(k - 1, k - 1)], h[(k - 1, k)], h[(k, k - 1)], h[(k, k)]);
        let tr = a11 + a22;
        let dt = a11 * a22 - a12 * a21;
        let disc = (tr * tr - dt * 4.0).sqrt();
        let (l1, l2) = ((tr + disc) * 0.5, (tr - disc) * 0.5);
        let mu = if (l1 - a22).norm() < (l2 - a22).norm() { l1 } else { l2 };
        let mu = if iter % 11 == 10 { mu + a21.norm() } else { mu };
        let mut sub = h.view((0, 0), (hi, hi)).clone_owned();
        for i in 0..hi {
            sub[(i, i)] -= mu;
        }
        let qr = sub.qr();
        let mut next = qr.r() * qr.q();
        for i in 0..hi {
            next[(i, i)] += mu;
        }
        h.view_mut((0, 0), (hi, hi)).copy_from(&next);
        iter += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_cubic() {
        let r = [C64::new(0.5, 0.2), C64::new(-0.3, 0.0), C64::new(0.1, -0.7)];
        // (z - r0)(z - r1)(z - r2)
        let e1 = r[0] + r[1] + r[2];
        let e2 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
        let e3 = r[0] * r[1] * r[2];
        let got = monic_roots(&[-e3, e2, -e1]);
        for x in r {
            assert!(got.iter().any(|g| (g - x).norm() < 1e-12));
        }
    }

    #[test]
    fn pinv_recovers_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let (p, cond) = pinv(&a, 1e-14);
        let x = &p * DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!((cond - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn null_vector_of_wide() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let (v, _) = null_vector(&a);
        assert!((v[0] - v[1]).abs() < 1e-14);
    }

    #[test]
    fn m2_norm_matches_svd() {
        let a = M2::new(C64::new(1.0, 2.0), C64::new(0.0, -1.0), C64::new(0.3, 0.0), C64::new(-2.0, 0.5));
        let s = singular_values(&m2_to_dyn(&a));
        assert!((m2_norm(&a) - s[0]).abs() < 1e-12);
    }
}

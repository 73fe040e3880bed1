//! Kernel vectors, canonical analytic functions `f_p` and scalar test
//! functions `ψ_p = (f_p − 1)/(f_p + 1)`.
//!
//! `f_p = Σ τ_j H(·, p_j)` where `H(·, q)` is the analytic completion of the
//! Poisson kernel at boundary point `q`, and `τ` is the positive kernel
//! vector of `M(p) = (Q_j(p_i))` rescaled so that `Re f_p(b) = 1`.

use crate::domain::CircularDomain;
use crate::harmonic::{BoundaryPoint, HarmonicBasis, HarmonicError, PointKernel, Series};
use crate::linalg::{det, null_vector};
use crate::zeros::{find_zeros, Zero, ZeroError};
use crate::C64;
use nalgebra::DMatrix;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestFnError {
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error(transparent)]
    Zeros(#[from] ZeroError),
    #[error("point {index} is not on curve {index} (found curve {curve})")]
    NotOnCurve { index: usize, curve: usize },
    #[error("expected {expected} support points, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("kernel of M(p) is not one-dimensional (singular values {0:?})")]
    Degenerate(Vec<f64>),
    #[error("kernel vector has a non-positive entry: {0:?}")]
    NotPositive(Vec<f64>),
    #[error("log charge {0:.3e} of the combined remainder exceeds the period gate")]
    Period(f64),
    #[error("no admissible parameters found after {0} candidates")]
    SearchExhausted(usize),
}

/// One boundary point per curve, `p_i ∈ B_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiPoint {
    pub points: Vec<BoundaryPoint>,
}

impl PiPoint {
    pub fn new(points: Vec<BoundaryPoint>) -> Self {
        Self { points }
    }

    /// Points at the given angles, curve `i` taking `angles[i]`.
    pub fn from_angles(angles: &[f64]) -> Self {
        Self::new(angles.iter().enumerate().map(|(i, &t)| BoundaryPoint::new(i, t)).collect())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.points.iter().map(|p| p.conj()).collect())
    }

    /// Whether `p_0` is the leftmost point of the outer circle.
    pub fn is_constrained(&self, domain: &CircularDomain) -> bool {
        let base = C64::new(domain.fixed_points().base, 0.0);
        (self.points[0].point(domain) - base).norm() < 1e-12
    }

    pub fn validate(&self, domain: &CircularDomain) -> Result<(), TestFnError> {
        if self.points.len() != domain.n() + 1 {
            return Err(TestFnError::WrongLength {
                expected: domain.n() + 1,
                got: self.points.len(),
            });
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.curve != i {
                return Err(TestFnError::NotOnCurve { index: i, curve: p.curve });
            }
        }
        Ok(())
    }
}

/// `M(p)`: rows `j = 1..=n`, columns `i = 0..=n`, entries `Q_j(p_i)`.
pub fn m_matrix(basis: &HarmonicBasis, p: &PiPoint) -> Result<DMatrix<f64>, TestFnError> {
    p.validate(basis.domain())?;
    let n = basis.n();
    Ok(DMatrix::from_fn(n, n + 1, |r, c| basis.q(r + 1, p.points[c])))
}

/// Generalized cross product of the rows of an `n × (n+1)` matrix.
pub fn cofactor_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, c) = m.shape();
    (0..c)
        .map(|i| {
            let minor = m.clone().remove_column(i);
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * if n == 0 { 1.0 } else { det(&minor) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelVector {
    /// Positive kernel vector of `M(p)`, summing to 1.
    pub kappa: Vec<f64>,
    /// `κ / k_p(b)` with `k_p(b) = Σ κ_j 𝕡(b, p_j)`.
    pub tau: Vec<f64>,
    /// `max |M κ|`.
    pub residual: f64,
    /// Cosine similarity between the SVD and cofactor constructions.
    pub cofactor_cosine: f64,
    /// `σ_n / σ_1` of `M(p)`.
    pub rank_margin: f64,
}

/// Kernel vector from precomputed point kernels (`kernels[i]` at `p_i`).
pub fn kernel_vector_with(
    basis: &HarmonicBasis,
    p: &PiPoint,
    kernels: &[PointKernel],
    b: C64,
) -> Result<KernelVector, TestFnError> {
    let m = m_matrix(basis, p)?;
    let (v, s) = null_vector(&m);
    let smax = s.iter().copied().fold(0.0, f64::max);
    let mut sorted = s.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = basis.n();
    // the padded square SVD has n+1 values; the last is the null direction
    let rank_margin = sorted[n - 1] / smax;
    if rank_margin < 1e-8 || sorted[n] > 1e-6 * smax {
        return Err(TestFnError::Degenerate(sorted));
    }
    let sum: f64 = v.iter().sum();
    let kappa: Vec<f64> = v.iter().map(|x| x / sum).collect();
    if kappa.iter().any(|&k| k <= 0.0) {
        return Err(TestFnError::NotPositive(kappa));
    }
    let cof = cofactor_vector(&m);
    let dot: f64 = cof.iter().zip(&kappa).map(|(a, b)| a * b).sum();
    let na = cof.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = kappa.iter().map(|a| a * a).sum::<f64>().sqrt();
    let cofactor_cosine = dot / (na * nb);
    let residual = (0..n)
        .map(|r| (0..=n).map(|c| m[(r, c)] * kappa[c]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let kb: f64 = kappa.iter().zip(kernels).map(|(k, pk)| k * pk.value(b)).sum();
    let tau = kappa.iter().map(|k| k / kb).collect();
    Ok(KernelVector {
        kappa,
        tau,
        residual,
        cofactor_cosine,
        rank_margin,
    })
}

pub fn point_kernels(basis: &HarmonicBasis, p: &PiPoint) -> Result<Vec<PointKernel>, TestFnError> {
    p.validate(basis.domain())?;
    Ok(p.points.iter().map(|&q| basis.point_kernel(q)).collect::<Result<Vec<_>, _>>()?)
}

pub fn kernel_vector(basis: &HarmonicBasis, p: &PiPoint, b: C64) -> Result<KernelVector, TestFnError> {
    let kernels = point_kernels(basis, p)?;
    kernel_vector_with(basis, p, &kernels, b)
}

/// `Σ c_j H(·, q_j)`: a finite positive combination of completed Poisson
/// kernels, single-valued once the log charges cancel, normalized so that
/// `Im f(anchor) = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct HerglotzSum {
    pub terms: Vec<(f64, PointKernel)>,
    pub smooth: Series,
    /// Largest log charge dropped from the combined remainder.
    pub dropped_charge: f64,
}

impl HerglotzSum {
    pub fn new(
        domain: &CircularDomain,
        degree: usize,
        terms: Vec<(f64, PointKernel)>,
        anchor: C64,
        gate: f64,
    ) -> Result<Self, TestFnError> {
        let mut smooth = Series::zero(domain, degree);
        for (c, pk) in &terms {
            smooth.axpy(C64::new(*c, 0.0), &pk.remainder.series);
        }
        let dropped_charge = smooth.max_log_charge();
        if dropped_charge > gate {
            return Err(TestFnError::Period(dropped_charge));
        }
        smooth.logs.iter_mut().for_each(|a| *a = 0.0);
        let mut f = Self {
            terms,
            smooth,
            dropped_charge,
        };
        let shift = f.eval(anchor).im;
        f.smooth.constant -= C64::new(0.0, shift);
        Ok(f)
    }

    pub fn eval(&self, z: C64) -> C64 {
        let mut v = self.smooth.eval(z);
        for (c, pk) in &self.terms {
            v += pk.singular(z) * *c;
        }
        v
    }

    pub fn deriv(&self, z: C64) -> C64 {
        let mut v = self.smooth.deriv(z);
        for (c, pk) in &self.terms {
            v += pk.singular_deriv(z) * *c;
        }
        v
    }

    /// Distance from `z` to the nearest pole.
    pub fn pole_distance(&self, z: C64) -> f64 {
        self.terms.iter().map(|(_, pk)| (pk.q - z).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// A scalar test function `ψ_p` with base point `b`.
#[derive(Debug, Clone, Serialize)]
pub struct TestFunction {
    pub p: PiPoint,
    pub b: C64,
    pub kernel: KernelVector,
    pub f: HerglotzSum,
    /// Unimodular factor; `1` for the canonical construction.
    pub rotation: C64,
    pub zeros: Vec<Zero>,
    pub winding: i64,
}

impl TestFunction {
    pub fn eval(&self, z: C64) -> C64 {
        if self.f.pole_distance(z) < 1e-14 {
            return self.rotation;
        }
        let f = self.f.eval(z);
        self.rotation * (f - 1.0) / (f + 1.0)
    }

    pub fn deriv(&self, z: C64) -> C64 {
        let f = self.f.eval(z);
        self.rotation * self.f.deriv(z) * 2.0 / ((f + 1.0) * (f + 1.0))
    }

    pub fn zero_points(&self) -> Vec<C64> {
        self.zeros
            .iter()
            .flat_map(|z| std::iter::repeat(z.z).take(z.multiplicity))
            .collect()
    }

    pub fn support(&self, domain: &CircularDomain) -> Vec<C64> {
        self.p.points.iter().map(|q| q.point(domain)).collect()
    }
}

/// Settings shared by test-function constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFnConfig {
    /// Gate on the log charges of the combined remainder.
    pub period_gate: f64,
    /// Locate zeros (argument principle) when building.
    pub find_zeros: bool,
}

impl Default for TestFnConfig {
    fn default() -> Self {
        Self {
            period_gate: 1e-7,
            find_zeros: true,
        }
    }
}

/// `f_p` for precomputed point kernels.
pub fn canonical_f_with(
    basis: &HarmonicBasis,
    kernels: &[PointKernel],
    tau: &[f64],
    b: C64,
    gate: f64,
) -> Result<HerglotzSum, TestFnError> {
    let terms = tau.iter().copied().zip(kernels.iter().cloned()).collect();
    HerglotzSum::new(basis.domain(), basis.solver().config().degree, terms, b, gate)
}

pub fn canonical_f(basis: &HarmonicBasis, p: &PiPoint, b: C64) -> Result<HerglotzSum, TestFnError> {
    let kernels = point_kernels(basis, p)?;
    let kv = kernel_vector_with(basis, p, &kernels, b)?;
    canonical_f_with(basis, &kernels, &kv.tau, b, TestFnConfig::default().period_gate)
}

pub fn test_function_with(
    basis: &HarmonicBasis,
    p: &PiPoint,
    b: C64,
    cfg: TestFnConfig,
) -> Result<TestFunction, TestFnError> {
    let kernels = point_kernels(basis, p)?;
    let kernel = kernel_vector_with(basis, p, &kernels, b)?;
    let f = canonical_f_with(basis, &kernels, &kernel.tau, b, cfg.period_gate)?;
    let mut t = TestFunction {
        p: p.clone(),
        b,
        kernel,
        f,
        rotation: C64::new(1.0, 0.0),
        zeros: vec![],
        winding: 0,
    };
    if cfg.find_zeros {
        let n = basis.n();
        let ev = |z: C64| t.eval(z);
        let dv = |z: C64| t.deriv(z);
        let rep = find_zeros(basis.domain(), &ev, Some(&dv), Some(n + 1))?;
        t.winding = rep.winding;
        t.zeros = rep.zeros;
    }
    Ok(t)
}

pub fn test_function(basis: &HarmonicBasis, p: &PiPoint, b: C64) -> Result<TestFunction, TestFnError> {
    test_function_with(basis, p, b, TestFnConfig::default())
}

/// Angle on curve `curve` where `g` (unimodular on that curve) takes the value 1.
fn unit_preimage(domain: &CircularDomain, curve: usize, g: &dyn Fn(C64) -> C64) -> Option<f64> {
    let c = domain.curve(curve);
    let m = 512;
    let arg = |t: f64| g(c.point(t)).arg();
    let ts: Vec<f64> = (0..=m).map(|k| -PI + 2.0 * PI * (k as f64 + 0.37) / m as f64).collect();
    for w in ts.windows(2) {
        let (a, b) = (arg(w[0]), arg(w[1]));
        if a.signum() != b.signum() && (a - b).abs() < PI {
            let (mut lo, mut hi, mut flo) = (w[0], w[1], a);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = arg(mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            return Some(0.5 * (lo + hi));
        }
    }
    None
}

/// Outcome of the off-axis parameter search.
#[derive(Debug, Clone, Serialize)]
pub struct OffAxisSelection {
    pub b: C64,
    /// Constrained parameters: `p_0` is the leftmost outer point.
    pub p: PiPoint,
    pub psi: TestFunction,
    /// Unconstrained parameters of the seed function `φ`.
    pub seed_p: PiPoint,
    /// Base point of `φ`.
    pub seed_b: C64,
    /// Value `y = φ(b)` sent to 0 by the Möbius map.
    pub y: C64,
    /// Max deviation between the Möbius-composed `φ` and the canonical `ψ_p`.
    pub mobius_residual: f64,
    /// Separation score: the smallest of boundary distance, `|Im z|`, and pairwise gaps.
    pub score: f64,
    pub candidates: usize,
}

/// Separation score of a zero list containing exactly one real zero: the
/// smallest of the boundary distances and `|Im z|` of the non-real zeros and
/// the gaps `|z − w|`, `|z − w̄|` between distinct zeros.
pub fn separation_score(domain: &CircularDomain, zeros: &[C64]) -> Option<f64> {
    let real = zeros.iter().filter(|z| z.im.abs() < 1e-9).count();
    if real != 1 {
        return None;
    }
    let mut s = f64::INFINITY;
    for (i, z) in zeros.iter().enumerate() {
        if z.im.abs() >= 1e-9 {
            s = s.min(domain.boundary_distance(*z)).min(z.im.abs());
        }
        for w in &zeros[i + 1..] {
            s = s.min((z - w).norm()).min((z - w.conj()).norm());
        }
    }
    Some(s)
}

/// Search for `b ∈ 𝕏` with `h_0(b) > 1/2` and `ψ ∈ Θ̃` whose zeros are `b`
/// plus `n` distinct points off the real axis, none conjugate to another.
///
/// For each candidate `p` (angles in the upper half) the seed `φ_p` is built
/// at base `b_0`; for each admissible `x ∈ 𝕏` its value `y = φ(x)` is sent to
/// 0 by `m(w) = (w − y)/(1 − ȳ w)`; the composition is rotated so it equals 1
/// at `p̃_0`. The candidate with the best separation score wins and is rebuilt
/// canonically from its preimages of 1.
pub fn select_off_axis(basis: &HarmonicBasis) -> Result<OffAxisSelection, TestFnError> {
    let domain = basis.domain();
    let n = basis.n();
    let fx = domain.fixed_points();
    let seed_b = C64::new(0.5 * (fx.segments[1].0 + fx.segments[1].1), 0.0);
    let angles = [0.5, 1.2, 1.9, 2.6];
    let h0 = basis.h(0)?;
    let mut xs = vec![];
    for &(a, b) in &fx.segments {
        for k in 1..=7 {
            let x = a + (b - a) * k as f64 / 8.0;
            let z = C64::new(x, 0.0);
            if h0.value(z) > 0.5 && domain.boundary_distance(z) >= 0.08 {
                xs.push(z);
            }
        }
    }
    let base = C64::new(fx.base, 0.0);
    let cfg = TestFnConfig {
        find_zeros: false,
        ..Default::default()
    };
    let mut best: Option<(f64, PiPoint, C64, C64)> = None;
    let mut candidates = 0;
    let mut idx = vec![0usize; n + 1];
    loop {
        let p = PiPoint::from_angles(&idx.iter().map(|&k| angles[k]).collect::<Vec<_>>());
        if let Ok(phi) = test_function_with(basis, &p, seed_b, cfg) {
            for &x in &xs {
                candidates += 1;
                let y = phi.eval(x);
                let g = |z: C64| {
                    let w = phi.eval(z);
                    (w - y) / (1.0 - y.conj() * w)
                };
                let Ok(rep) = find_zeros(domain, &g, None, Some(n + 1)) else {
                    continue;
                };
                let zs = rep.expanded();
                if let Some(s) = separation_score(domain, &zs) {
                    if best.as_ref().is_none_or(|b| s > b.0) {
                        best = Some((s, p.clone(), x, y));
                    }
                }
            }
        }
        // odometer over angle indices
        let mut k = 0;
        while k <= n {
            idx[k] += 1;
            if idx[k] < angles.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k > n {
            break;
        }
    }
    let Some((score, seed_p, b, y)) = best else {
        return Err(TestFnError::SearchExhausted(candidates));
    };
    let phi = test_function_with(basis, &seed_p, seed_b, cfg)?;
    let mobius = |z: C64| {
        let w = phi.eval(z);
        (w - y) / (1.0 - y.conj() * w)
    };
    let u0 = mobius(base);
    let rot = u0.conj() / u0.norm();
    let composed = |z: C64| rot * mobius(z);
    let mut pts = vec![BoundaryPoint::new(0, PI)];
    for i in 1..=n {
        let t = unit_preimage(domain, i, &composed).ok_or(TestFnError::SearchExhausted(candidates))?;
        pts.push(BoundaryPoint::new(i, t));
    }
    let p = PiPoint::new(pts);
    let psi = test_function(basis, &p, b)?;
    let probes = [
        C64::new(0.1, 0.3),
        C64::new(-0.2, -0.6),
        C64::new(0.75, 0.1),
        C64::new(-0.8, 0.3),
        C64::new(0.0, 0.8),
    ];
    let mobius_residual = probes
        .iter()
        .filter(|z| domain.contains(**z))
        .map(|&z| (psi.eval(z) - composed(z)).norm())
        .fold(0.0, f64::max);
    Ok(OffAxisSelection {
        b,
        p,
        psi,
        seed_p,
        seed_b,
        y,
        mobius_residual,
        score,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::HarmonicConfig;

    fn basis() -> HarmonicBasis {
        HarmonicBasis::new(&CircularDomain::reference(), HarmonicConfig::default()).unwrap()
    }

    #[test]
    fn cofactor_of_simple_matrix() {
        let m = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        assert_eq!(cofactor_vector(&m), vec![-1.0, -2.0]);
    }

    #[test]
    fn m_matrix_sign_pattern() {
        let b = basis();
        let p = PiPoint::from_angles(&[0.3, 2.0, -1.0]);
        let m = m_matrix(&b, &p).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(m[(r, c)] > 0.0, c == r + 1);
            }
        }
        let right = m.clone().remove_column(0);
        assert!(det(&right) > 0.0);
    }

    #[test]
    fn wrong_curve_rejected() {
        let b = basis();
        let p = PiPoint::new(vec![
            BoundaryPoint::new(0, 0.1),
            BoundaryPoint::new(2, 0.1),
            BoundaryPoint::new(2, 0.1),
        ]);
        assert!(matches!(m_matrix(&b, &p), Err(TestFnError::NotOnCurve { index: 1, curve: 2 })));
    }

    #[test]
    fn psi_basic_properties() {
        let b = basis();
        let p = PiPoint::from_angles(&[2.0, 1.2, 1.9]);
        let t = test_function(&b, &p, C64::new(0.0, 0.0)).unwrap();
        assert!(t.eval(C64::new(0.0, 0.0)).norm() < 1e-8);
        assert!((t.f.eval(C64::new(0.0, 0.0)) - 1.0).norm() < 1e-9);
        assert_eq!(t.winding, 3);
        let h: f64 = t
            .kernel
            .tau
            .iter()
            .zip(&p.points)
            .map(|(tau, q)| tau * b.point_kernel(*q).unwrap().value(C64::new(0.0, 0.0)))
            .sum();
        assert!((h - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constrained_member_is_one_at_base() {
        let b = basis();
        let p = PiPoint::from_angles(&[PI, 0.4, 2.2]);
        assert!(p.is_constrained(b.domain()));
        let t = test_function(&b, &p, C64::new(0.0, 0.0)).unwrap();
        let near = C64::new(-1.0 + 1e-7, 0.0);
        assert!((t.eval(near) - 1.0).norm() < 1e-5);
    }
}

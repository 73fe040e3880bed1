//! The reproducing kernel `K^b` of `H²(R, ω_b)` by two independent routes:
//! orthonormalization of a rational basis in `L²(ω_b)` and the theta-function
//! formula on the Schottky double. Also the critical points of the Green's
//! function, residues of `K^b(·, a)` at the poles `P_j = J z_j` and the
//! residue-matrix invertibility test.

use crate::domain::CircularDomain;
use crate::harmonic::{GreenFunction, HarmonicBasis, HarmonicError};
use crate::jacobian::{interior_samples, DoublePoint, Jacobian};
use crate::linalg::hermitian_eigh;
use crate::C64;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FayError {
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error("base point {0} is not on the fixed-point set")]
    NotOnFixedSet(f64),
    #[error("no sign change of ∂g/∂x on segment {segment}")]
    NoSignChange { segment: usize },
    #[error("{count} sign changes of ∂g/∂x on segment {segment}")]
    ManySignChanges { segment: usize, count: usize },
    #[error("Gram matrix numerically singular (pivot ratio {0:.3e}); reduce the degree")]
    SingularGram(f64),
    #[error("pole condition for e has no solution (best residual {0:.3e})")]
    NoPoleSolution(f64),
    #[error("theta and gram backends disagree by {0:.3e} for every candidate e")]
    Disagreement(f64),
    #[error("residue contour around P_{j} cannot be separated from other singularities")]
    ContourCrowded { j: usize },
    #[error("points are not distinct (gap {0:.3e})")]
    NotDistinct(f64),
}

/// A kernel on `R × R`.
pub trait Kernel {
    fn k(&self, x: C64, y: C64) -> C64;
    fn base(&self) -> C64;

    /// `(K(z_i, z_j))_{ij}`.
    fn gram(&self, pts: &[C64]) -> DMatrix<C64> {
        DMatrix::from_fn(pts.len(), pts.len(), |i, j| self.k(pts[i], pts[j]))
    }
}

/// Critical points `z_i` of `g(·, b)`, one on each fixed-point segment not containing `b`.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoints {
    pub base: f64,
    pub points: Vec<f64>,
    /// Segment index of each point.
    pub segments: Vec<usize>,
    /// `|∇g|` at each point.
    pub gradients: Vec<f64>,
}

pub fn critical_points(green: &GreenFunction, domain: &CircularDomain) -> Result<CriticalPoints, FayError> {
    let b = green.pole;
    let fp = domain.fixed_points();
    let own = match fp.segment_of(b.re) {
        Some(s) if b.im == 0.0 => s,
        _ => return Err(FayError::NotOnFixedSet(b.re)),
    };
    let dgx = |x: f64| green.deriv(C64::new(x, 0.0)).re;
    let mut points = vec![];
    let mut segments = vec![];
    for (s, &(lo, hi)) in fp.segments.iter().enumerate() {
        if s == own {
            continue;
        }
        let m = 400;
        let eps = 1e-6 * (hi - lo);
        let xs: Vec<f64> = (0..=m).map(|k| lo + eps + (hi - lo - 2.0 * eps) * k as f64 / m as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| dgx(x)).collect();
        let brackets: Vec<usize> = (0..m).filter(|&k| vals[k].signum() != vals[k + 1].signum()).collect();
        if brackets.is_empty() {
            return Err(FayError::NoSignChange { segment: s });
        }
        if brackets.len() > 1 {
            return Err(FayError::ManySignChanges {
                segment: s,
                count: brackets.len(),
            });
        }
        let (mut a, mut c) = (xs[brackets[0]], xs[brackets[0] + 1]);
        let fa = dgx(a);
        for _ in 0..200 {
            let mid = 0.5 * (a + c);
            if mid == a || mid == c {
                break;
            }
            if dgx(mid).signum() == fa.signum() {
                a = mid;
            } else {
                c = mid;
            }
        }
        points.push(0.5 * (a + c));
        segments.push(s);
    }
    let gradients = points.iter().map(|&x| green.gradient(C64::new(x, 0.0)).norm()).collect();
    Ok(CriticalPoints {
        base: b.re,
        points,
        segments,
        gradients,
    })
}

/// Gram-backend configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramConfig {
    pub degree: usize,
    /// Quadrature nodes per boundary curve.
    pub nodes: usize,
}

impl Default for GramConfig {
    fn default() -> Self {
        Self { degree: 48, nodes: 800 }
    }
}

/// `K^b` from an orthonormal basis of `{1, ((z − c_0)/r_0)^k, (r_i/(z − c_i))^k}` in `L²(ω_b)`.
#[derive(Debug, Clone)]
pub struct FayGram {
    domain: CircularDomain,
    base: C64,
    cfg: GramConfig,
    /// `R^{-1}` from the QR factorization of the weighted basis matrix.
    rinv: DMatrix<C64>,
    /// Smallest to largest `|R_kk|`.
    pub pivot_ratio: f64,
    green: GreenFunction,
}

fn rational_basis(domain: &CircularDomain, d: usize, z: C64) -> DVector<C64> {
    let n = domain.n();
    let mut v = DVector::<C64>::zeros(1 + (n + 1) * d);
    v[0] = C64::new(1.0, 0.0);
    let oc = domain.outer();
    let t = (z - oc.center) / oc.radius;
    let mut p = C64::new(1.0, 0.0);
    for k in 0..d {
        p *= t;
        v[1 + k] = p;
    }
    for (i, h) in domain.holes().iter().enumerate() {
        let s = h.radius / (z - h.center);
        let mut p = C64::new(1.0, 0.0);
        for k in 0..d {
            p *= s;
            v[1 + (i + 1) * d + k] = p;
        }
    }
    v
}

/// Boundary nodes with `ω_b` weights: `(point, weight)`.
pub fn harmonic_measure_nodes(domain: &CircularDomain, green: &GreenFunction, m: usize, offset: f64) -> Vec<(C64, f64)> {
    let mut out = Vec::with_capacity(m * (domain.n() + 1));
    for (i, c) in domain.curves().enumerate() {
        for k in 0..m {
            let t = 2.0 * PI * (k as f64 + offset) / m as f64;
            let q = c.point(t);
            let nrm = domain.outward_normal(i, t);
            out.push((q, green.poisson_density(q, nrm) * c.circumference() / m as f64));
        }
    }
    out
}

impl FayGram {
    pub fn new(basis: &HarmonicBasis, b: f64, cfg: GramConfig) -> Result<Self, FayError> {
        let domain = basis.domain().clone();
        if domain.fixed_points().segment_of(b).is_none() {
            return Err(FayError::NotOnFixedSet(b));
        }
        let base = C64::new(b, 0.0);
        let green = basis.green(base)?;
        let nodes = harmonic_measure_nodes(&domain, &green, cfg.nodes, 0.0);
        let cols = 1 + (domain.n() + 1) * cfg.degree;
        let mut v = DMatrix::<C64>::zeros(nodes.len(), cols);
        for (r, (q, w)) in nodes.iter().enumerate() {
            let row = rational_basis(&domain, cfg.degree, *q) * C64::new(w.max(0.0).sqrt(), 0.0);
            v.row_mut(r).copy_from(&row.transpose());
        }
        let r = v.qr().r();
        let diag: Vec<f64> = (0..cols).map(|k| r[(k, k)].norm()).collect();
        let pivot_ratio = diag.iter().copied().fold(f64::INFINITY, f64::min) / diag.iter().copied().fold(0.0, f64::max);
        if !(pivot_ratio > 1e-13) {
            return Err(FayError::SingularGram(pivot_ratio));
        }
        let rinv = r
            .solve_upper_triangular(&DMatrix::identity(cols, cols))
            .ok_or(FayError::SingularGram(pivot_ratio))?;
        Ok(Self {
            domain,
            base,
            cfg,
            rinv,
            pivot_ratio,
            green,
        })
    }

    pub fn config(&self) -> GramConfig {
        self.cfg
    }

    pub fn green(&self) -> &GreenFunction {
        &self.green
    }

    /// Orthonormal basis values `φ_k(z)`.
    pub fn phi(&self, z: C64) -> DVector<C64> {
        self.rinv.transpose() * rational_basis(&self.domain, self.cfg.degree, z)
    }

    /// `∫ f conj(K(·, y)) dω_b` on an independent half-offset node set.
    pub fn reproduce(&self, f: &dyn Fn(C64) -> C64, y: C64) -> C64 {
        let py = self.phi(y);
        harmonic_measure_nodes(&self.domain, &self.green, 1024, 0.5)
            .iter()
            .map(|(q, w)| f(*q) * self.phi(*q).dotc(&py) * *w)
            .sum()
    }
}

impl Kernel for FayGram {
    fn k(&self, x: C64, y: C64) -> C64 {
        // Σ φ_k(x) conj φ_k(y)
        self.phi(y).dotc(&self.phi(x))
    }

    fn base(&self) -> C64 {
        self.base
    }
}

/// Result of determining the vector `e` of the theta formula.
#[derive(Debug, Clone, Serialize)]
pub struct EFit {
    pub e: Vec<C64>,
    /// `max |θ(−conj χ(z_i) + conj χ(b) + e)|` at the chosen `e`.
    pub pole_residual: f64,
    /// Largest relative theta-vs-gram difference over the fit pairs.
    pub misfit: f64,
    /// Distinct pole-condition solutions (mod the lattice) with their misfits.
    pub families: Vec<(Vec<C64>, f64)>,
}

/// `K^b` from the theta-function formula.
#[derive(Debug, Clone)]
pub struct FayTheta {
    jac: Jacobian,
    base: C64,
    e: DVector<C64>,
    chi_b: DVector<C64>,
    /// `θ(χ(b) + conj χ(b) + e)`.
    c_theta: C64,
    /// `ϑ_*(χ(b) + conj χ(b))`.
    c_odd: C64,
}

fn conj_vec(v: &DVector<C64>) -> DVector<C64> {
    v.map(|x| x.conj())
}

impl FayTheta {
    fn with_e(jac: &Jacobian, b: f64, e: DVector<C64>) -> Self {
        let base = C64::new(b, 0.0);
        let chi_b = jac.differentials.chi(base);
        let cs = &chi_b + conj_vec(&chi_b);
        let c_theta = jac.theta.theta(&(&cs + &e));
        let c_odd = jac.odd.eval(&cs);
        Self {
            jac: jac.clone(),
            base,
            e,
            chi_b,
            c_theta,
            c_odd,
        }
    }

    /// Solves the pole condition `θ(−conj χ(z_i) + conj χ(b) + e) = 0`, `i = 1..n`,
    /// from starts at the half-periods shifted by the critical divisor, and keeps the
    /// solution family that agrees best with `oracle` on `pairs`.
    pub fn fit(
        jac: &Jacobian,
        crit: &CriticalPoints,
        oracle: &dyn Kernel,
        pairs: &[(C64, C64)],
    ) -> Result<(Self, EFit), FayError> {
        let n = jac.theta.n();
        let b = crit.base;
        let db = &jac.differentials;
        let cb = conj_vec(&db.chi(C64::new(b, 0.0)));
        let shifts: Vec<DVector<C64>> = crit
            .points
            .iter()
            .map(|&z| -conj_vec(&db.chi(C64::new(z, 0.0))) + &cb)
            .collect();
        let resid = |e: &DVector<C64>| -> DVector<C64> {
            DVector::from_fn(n, |i, _| jac.theta.theta(&(&shifts[i] + e)))
        };
        let guess0: DVector<C64> = shifts.iter().fold(DVector::zeros(n), |a, s| a - s) / C64::new(n as f64, 0.0);
        let mut sols: Vec<DVector<C64>> = vec![];
        let mut best_resid = f64::INFINITY;
        for ubits in 0..(1u32 << n) {
            for vbits in 0..(1u32 << n) {
                let u = DVector::from_fn(n, |i, _| C64::new(if ubits >> i & 1 == 1 { 0.5 } else { 0.0 }, 0.0));
                let v = DVector::from_fn(n, |i, _| C64::new(if vbits >> i & 1 == 1 { 0.5 } else { 0.0 }, 0.0));
                let mut e = &guess0 + u + &jac.theta.omega * v;
                for _ in 0..60 {
                    let f = resid(&e);
                    let h = 1e-6;
                    let mut jm = DMatrix::<C64>::zeros(n, n);
                    for j in 0..n {
                        let mut ep = e.clone();
                        let mut em = e.clone();
                        ep[j] += h;
                        em[j] -= h;
                        let col = (resid(&ep) - resid(&em)) / C64::new(2.0 * h, 0.0);
                        jm.set_column(j, &col);
                    }
                    let step = match jm.lu().solve(&f) {
                        Some(s) => s,
                        None => break,
                    };
                    // damp large steps to stay in one basin
                    let sn = step.norm();
                    e -= if sn > 0.25 { step * C64::new(0.25 / sn, 0.0) } else { step };
                    if sn < 1e-14 {
                        break;
                    }
                }
                let r = resid(&e).camax();
                best_resid = best_resid.min(r);
                if r < 1e-10 {
                    let e = reduce_mod_lattice(jac, &e);
                    if !sols.iter().any(|s| lattice_distance(jac, s, &e) < 1e-6) {
                        sols.push(e);
                    }
                }
            }
        }
        if sols.is_empty() {
            return Err(FayError::NoPoleSolution(best_resid));
        }
        let mut families = vec![];
        for e in &sols {
            let ft = FayTheta::with_e(jac, b, e.clone());
            let mis = pairs
                .iter()
                .map(|&(x, y)| {
                    let g = oracle.k(x, y);
                    (ft.k(x, y) - g).norm() / g.norm()
                })
                .fold(0.0, |a: f64, v| if v.is_finite() { a.max(v) } else { f64::INFINITY });
            families.push((e.iter().copied().collect::<Vec<_>>(), mis));
        }
        let (bi, _) = families
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("non-empty");
        let misfit = families[bi].1;
        if !(misfit < 1e-2) {
            return Err(FayError::Disagreement(misfit));
        }
        let e = sols[bi].clone();
        let pole_residual = resid(&e).camax();
        let ft = FayTheta::with_e(jac, b, e.clone());
        Ok((
            ft,
            EFit {
                e: e.iter().copied().collect(),
                pole_residual,
                misfit,
                families,
            },
        ))
    }

    pub fn e(&self) -> &DVector<C64> {
        &self.e
    }

    /// `K^b(x, y)` for `x` anywhere on the double and `y ∈ R`.
    pub fn k_double(&self, x: DoublePoint, y: C64) -> C64 {
        let th = &self.jac.theta;
        let odd = &self.jac.odd;
        let cx = self.jac.differentials.abel_jacobi(x);
        let cy = conj_vec(&self.jac.differentials.chi(y));
        let ca = &self.chi_b;
        let cas = conj_vec(ca);
        let num = th.theta(&(&cx + &cy + &self.e)) * self.c_theta * odd.eval(&(ca + &cy)) * odd.eval(&(&cx + &cas));
        let den = th.theta(&(ca + &cy + &self.e)) * th.theta(&(&cx + &cas + &self.e)) * odd.eval(&(&cx + &cy)) * self.c_odd;
        num / den
    }

    /// `K^b(x, a)` at the mirror-chart coordinate `ζ`, i.e. at `x = J conj(ζ)`.
    pub fn k_mirror_chart(&self, zeta: C64, a: C64) -> C64 {
        self.k_double(DoublePoint::Mirror(zeta.conj()), a)
    }

    pub fn jacobian(&self) -> &Jacobian {
        &self.jac
    }
}

impl Kernel for FayTheta {
    fn k(&self, x: C64, y: C64) -> C64 {
        self.k_double(DoublePoint::Front(x), y)
    }

    fn base(&self) -> C64 {
        self.base
    }
}

fn reduce_mod_lattice(jac: &Jacobian, e: &DVector<C64>) -> DVector<C64> {
    let (a, beta) = jac.theta.split(e);
    let a = a.map(|v| v - v.round());
    let beta = beta.map(|v| v - v.round());
    a.map(|v| C64::new(v, 0.0)) + &jac.theta.omega * beta.map(|v| C64::new(v, 0.0))
}

fn lattice_distance(jac: &Jacobian, a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    let (x, beta) = jac.theta.split(&(a - b));
    let x = x.map(|v| v - v.round());
    let beta = beta.map(|v| v - v.round());
    x.norm() + beta.norm()
}

/// Deterministic interior pairs for backend comparison.
pub fn sample_pairs(domain: &CircularDomain, count: usize, seed: u64) -> Vec<(C64, C64)> {
    let pts = interior_samples(domain, 2 * count, 0.1, seed);
    (0..count).map(|k| (pts[2 * k], pts[2 * k + 1])).collect()
}

/// Both backends with their cross-check data.
#[derive(Debug, Clone)]
pub struct FayPair {
    pub crit: CriticalPoints,
    pub gram: FayGram,
    pub theta: FayTheta,
    pub efit: EFit,
}

impl FayPair {
    pub fn new(basis: &HarmonicBasis, jac: &Jacobian, b: f64, cfg: GramConfig, seed: u64) -> Result<Self, FayError> {
        let gram = FayGram::new(basis, b, cfg)?;
        let crit = critical_points(gram.green(), basis.domain())?;
        let pairs = sample_pairs(basis.domain(), 30, seed);
        let (theta, efit) = FayTheta::fit(jac, &crit, &gram, &pairs)?;
        Ok(Self { crit, gram, theta, efit })
    }
}

/// Residue `R_j(a)` of `K^b(·, a)` at `P_j`, by the trapezoidal rule on a circle
/// of `radius` around the mirror-chart coordinate of `P_j`.
pub fn residue(ft: &FayTheta, crit: &CriticalPoints, j: usize, a: C64, radius: f64, nodes: usize) -> Result<C64, FayError> {
    let center = C64::new(crit.points[j], 0.0);
    let mut r = radius;
    let mut others: Vec<C64> = crit
        .points
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, &z)| C64::new(z, 0.0))
        .collect();
    others.push(a.conj());
    let mut tries = 0;
    while others.iter().any(|o| (o - center).norm() < 3.0 * r) {
        r *= 0.5;
        tries += 1;
        if tries > 6 {
            return Err(FayError::ContourCrowded { j });
        }
    }
    let mut s = C64::new(0.0, 0.0);
    for k in 0..nodes {
        let u = C64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / nodes as f64);
        let zeta = center + u * r;
        s += ft.k_mirror_chart(zeta, a) * u * r;
    }
    Ok(s / nodes as f64)
}

/// `(R_1(a), …, R_n(a))`.
pub fn residues(ft: &FayTheta, crit: &CriticalPoints, a: C64) -> Result<Vec<C64>, FayError> {
    (0..crit.points.len()).map(|j| residue(ft, crit, j, a, 1e-2, 64)).collect()
}

/// Residue matrices and the invertibility verdict.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonReport {
    pub det_r1: C64,
    pub det_r2: C64,
    pub det_f: C64,
    pub cond_f: f64,
    /// `| |det F_0| − |det ℛ_1 det ℛ_2| |` for the unperturbed directions.
    pub permutation_gap: f64,
    pub holds: bool,
}

fn cond(m: &DMatrix<C64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    s.max() / s.min()
}

/// Builds `ℛ_1`, `ℛ_2` from the residues at `a_1..a_2n` and `F` with directions `γ_j`.
pub fn epsilon_matrices(
    ft: &FayTheta,
    crit: &CriticalPoints,
    a: &[C64],
    gamma: &[[C64; 2]],
) -> Result<EpsilonReport, FayError> {
    let n = crit.points.len();
    assert_eq!(a.len(), 2 * n);
    assert_eq!(gamma.len(), 2 * n);
    let mut chart: Vec<C64> = crit.points.iter().map(|&z| C64::new(z, 0.0)).collect();
    chart.push(C64::new(crit.base, 0.0));
    chart.extend(a.iter().map(|z| z.conj()));
    let mut gap = f64::INFINITY;
    for i in 0..chart.len() {
        for k in i + 1..chart.len() {
            gap = gap.min((chart[i] - chart[k]).norm());
        }
    }
    if gap < 1e-8 {
        return Err(FayError::NotDistinct(gap));
    }
    let res: Vec<Vec<C64>> = a.iter().map(|&aj| residues(ft, crit, aj)).collect::<Result<_, _>>()?;
    let r1 = DMatrix::from_fn(n, n, |k, j| res[j][k]);
    let r2 = DMatrix::from_fn(n, n, |k, j| res[n + j][k]);
    let build = |g: &dyn Fn(usize) -> [C64; 2]| {
        DMatrix::from_fn(2 * n, 2 * n, |row, j| res[j][row / 2] * g(j)[row % 2])
    };
    let f = build(&|j| gamma[j]);
    let e1 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let e2 = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let f0 = build(&|j| if j < n { e1 } else { e2 });
    let det_r1 = r1.clone().determinant();
    let det_r2 = r2.clone().determinant();
    let det_f = f.clone().determinant();
    let permutation_gap = (f0.determinant().norm() - (det_r1 * det_r2).norm()).abs();
    let cond_f = cond(&f);
    Ok(EpsilonReport {
        det_r1,
        det_r2,
        det_f,
        cond_f,
        permutation_gap,
        holds: cond_f < 1e8 && det_r1.norm() > 1e-10 && det_r2.norm() > 1e-10,
    })
}

/// Smallest eigenvalue of a kernel's Gram matrix.
pub fn min_gram_eigenvalue(k: &dyn Kernel, pts: &[C64]) -> f64 {
    let g = k.gram(pts);
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    hermitian_eigh(&h).0[0]
}

/// `max |K(x, y) − conj K(y, x)|` over pairs.
pub fn hermitian_defect(k: &dyn Kernel, pairs: &[(C64, C64)]) -> f64 {
    pairs
        .iter()
        .map(|&(x, y)| (k.k(x, y) - k.k(y, x).conj()).norm())
        .fold(0.0, f64::max)
}

//! Dirichlet solver, Green's functions, Poisson kernels, harmonic measures
//! `h_j`, their normal derivatives `Q_j`, and period functionals.
//!
//! Harmonic functions are represented by a constant, one logarithmic charge
//! per hole and truncated circular-harmonic series (positive powers on the
//! outer circle, negative powers on each hole). Fits are least squares on an
//! equi-angular collocation grid, solved through a precomputed pseudo-inverse.

use crate::domain::{BoundarySample, Circle, CircularDomain};
use crate::linalg::pinv;
use crate::C64;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicError {
    #[error("boundary residual {residual:.3e} exceeds tolerance {tol:.1e}")]
    Residual { residual: f64, tol: f64 },
    #[error("collocation matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("harmonic index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("point {re}{im:+}i is within {dist:.3e} of the boundary")]
    TooCloseToBoundary { re: f64, im: f64, dist: f64 },
    #[error("periods do not vanish: {0:?}")]
    NonvanishingPeriod(Vec<f64>),
}

/// A point on boundary curve `curve` at polar angle `angle` about the curve's center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub curve: usize,
    pub angle: f64,
}

impl BoundaryPoint {
    pub fn new(curve: usize, angle: f64) -> Self {
        Self { curve, angle }
    }

    pub fn point(&self, d: &CircularDomain) -> C64 {
        d.curve(self.curve).point(self.angle)
    }

    pub fn normal(&self, d: &CircularDomain) -> C64 {
        d.outward_normal(self.curve, self.angle)
    }

    /// The mirror image under complex conjugation.
    pub fn conj(&self) -> Self {
        Self::new(self.curve, -self.angle)
    }
}

/// Truncated Laurent-type expansion
/// `c + Σ a_i log(z − c_i) + Σ_k C_k ((z − c_0)/r_0)^k + Σ_i Σ_k C_ik (r_i/(z − c_i))^k`.
///
/// Used both as the analytic completion of a [`HarmonicRep`] and as a
/// single-valued analytic function once the log charges vanish.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    outer_circle: Circle,
    hole_circles: Vec<Circle>,
    pub constant: C64,
    pub logs: Vec<f64>,
    pub outer: Vec<C64>,
    pub holes: Vec<Vec<C64>>,
}

fn horner(c: &[C64], x: C64) -> C64 {
    let mut p = C64::new(0.0, 0.0);
    for ck in c.iter().rev() {
        p = (p + ck) * x;
    }
    p
}

fn horner_deriv(c: &[C64], x: C64) -> C64 {
    // Σ k c_k x^(k-1)
    let mut p = C64::new(0.0, 0.0);
    for (k, ck) in c.iter().enumerate().rev() {
        p = p * x + ck * (k + 1) as f64;
    }
    p
}

impl Series {
    pub fn zero(domain: &CircularDomain, degree: usize) -> Self {
        let n = domain.n();
        Self {
            outer_circle: domain.outer(),
            hole_circles: domain.holes().to_vec(),
            constant: C64::new(0.0, 0.0),
            logs: vec![0.0; n],
            outer: vec![C64::new(0.0, 0.0); degree],
            holes: vec![vec![C64::new(0.0, 0.0); degree]; n],
        }
    }

    pub fn degree(&self) -> usize {
        self.outer.len()
    }

    fn smooth(&self, z: C64) -> C64 {
        let oc = self.outer_circle;
        let mut v = self.constant + horner(&self.outer, (z - oc.center) / oc.radius);
        for (h, c) in self.hole_circles.iter().zip(&self.holes) {
            v += horner(c, h.radius / (z - h.center));
        }
        v
    }

    /// Real part of the completion, with `Re log = ln|·|` (single-valued).
    pub fn real_value(&self, z: C64) -> f64 {
        let mut v = self.smooth(z).re;
        for (h, a) in self.hole_circles.iter().zip(&self.logs) {
            v += a * (z - h.center).norm().ln();
        }
        v
    }

    /// Completion with principal-branch logarithms.
    pub fn eval(&self, z: C64) -> C64 {
        let mut v = self.smooth(z);
        for (h, a) in self.hole_circles.iter().zip(&self.logs) {
            v += (z - h.center).ln() * *a;
        }
        v
    }

    /// Complex derivative of the completion (single-valued).
    pub fn deriv(&self, z: C64) -> C64 {
        let oc = self.outer_circle;
        let mut v = horner_deriv(&self.outer, (z - oc.center) / oc.radius) / oc.radius;
        for ((h, c), a) in self.hole_circles.iter().zip(&self.holes).zip(&self.logs) {
            let s = 1.0 / (z - h.center);
            let eta = s * h.radius;
            v -= horner_deriv(c, eta) * eta * s;
            v += s * *a;
        }
        v
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: C64, other: &Series) {
        self.constant += alpha * other.constant;
        for (a, b) in self.logs.iter_mut().zip(&other.logs) {
            // log charges only combine with real weights
            *a += alpha.re * b;
        }
        for (a, b) in self.outer.iter_mut().zip(&other.outer) {
            *a += alpha * b;
        }
        for (ha, hb) in self.holes.iter_mut().zip(&other.holes) {
            for (a, b) in ha.iter_mut().zip(hb) {
                *a += alpha * b;
            }
        }
    }

    pub fn max_log_charge(&self) -> f64 {
        self.logs.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Harmonic function `h = Re(series)` with the fit residual that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicRep {
    pub series: Series,
    pub residual: f64,
}

impl HarmonicRep {
    pub fn value(&self, z: C64) -> f64 {
        self.series.real_value(z)
    }

    /// `∂h/∂x + i ∂h/∂y`.
    pub fn gradient(&self, z: C64) -> C64 {
        self.series.deriv(z).conj()
    }

    pub fn constant(&self) -> f64 {
        self.series.constant.re
    }

    pub fn log_charges(&self) -> &[f64] {
        &self.series.logs
    }

    /// Flux `∮_{B_j} ∂h/∂n ds` through each hole `j = 1..=n`, in closed form.
    pub fn fluxes(&self) -> Vec<f64> {
        self.series.logs.iter().map(|a| -2.0 * PI * a).collect()
    }

    /// The same fluxes by trapezoidal quadrature of the normal derivative on each hole.
    pub fn fluxes_quadrature(&self, domain: &CircularDomain, m: usize) -> Vec<f64> {
        (1..=domain.n())
            .map(|j| {
                let c = domain.curve(j);
                (0..m)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / m as f64;
                        let nrm = domain.outward_normal(j, t);
                        let g = self.gradient(c.point(t));
                        (g * nrm.conj()).re * c.circumference() / m as f64
                    })
                    .sum()
            })
            .collect()
    }

    pub fn scaled(&self, alpha: f64) -> HarmonicRep {
        let mut s = Series::zero_like(&self.series);
        s.axpy(C64::new(alpha, 0.0), &self.series);
        HarmonicRep {
            series: s,
            residual: self.residual * alpha.abs(),
        }
    }
}

impl Series {
    pub fn zero_like(other: &Series) -> Series {
        Series {
            outer_circle: other.outer_circle,
            hole_circles: other.hole_circles.clone(),
            constant: C64::new(0.0, 0.0),
            logs: vec![0.0; other.logs.len()],
            outer: vec![C64::new(0.0, 0.0); other.outer.len()],
            holes: vec![vec![C64::new(0.0, 0.0); other.outer.len()]; other.holes.len()],
        }
    }
}

/// Solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicConfig {
    /// Series degree per circle.
    pub degree: usize,
    /// Collocation points per curve; `None` means `4 * degree + 16`.
    pub colloc: Option<usize>,
    /// Maximum boundary residual accepted from a fit.
    pub tol: f64,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        Self {
            degree: 32,
            colloc: None,
            tol: 1e-8,
        }
    }
}

/// Least-squares Dirichlet solver with a precomputed pseudo-inverse.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    domain: CircularDomain,
    cfg: HarmonicConfig,
    nodes: Vec<BoundarySample>,
    check: Vec<BoundarySample>,
    pinv: DMatrix<f64>,
    cond: f64,
}

fn basis_row(domain: &CircularDomain, degree: usize, z: C64, row: &mut [f64]) {
    let n = domain.n();
    row[0] = 1.0;
    for (i, h) in domain.holes().iter().enumerate() {
        row[1 + i] = (z - h.center).norm().ln();
    }
    let oc = domain.outer();
    let zeta = (z - oc.center) / oc.radius;
    let mut w = C64::new(1.0, 0.0);
    let base = 1 + n;
    for k in 0..degree {
        w *= zeta;
        row[base + 2 * k] = w.re;
        row[base + 2 * k + 1] = w.im;
    }
    for (i, h) in domain.holes().iter().enumerate() {
        let eta = h.radius / (z - h.center);
        let off = base + 2 * degree * (i + 1);
        let mut w = C64::new(1.0, 0.0);
        for k in 0..degree {
            w *= eta;
            row[off + 2 * k] = w.re;
            row[off + 2 * k + 1] = w.im;
        }
    }
}

impl DirichletSolver {
    pub fn new(domain: &CircularDomain, cfg: HarmonicConfig) -> Result<Self, HarmonicError> {
        let n = domain.n();
        let d = cfg.degree;
        let m = cfg.colloc.unwrap_or(4 * d + 16);
        let nodes = domain.boundary_grid(m).expect("collocation grid size is at least 8");
        let ncol = 1 + n + 2 * d * (n + 1);
        let mut a = DMatrix::<f64>::zeros(nodes.len(), ncol);
        let mut row = vec![0.0; ncol];
        for (r, s) in nodes.iter().enumerate() {
            basis_row(domain, d, s.point, &mut row);
            for (c, v) in row.iter().enumerate() {
                a[(r, c)] = *v;
            }
        }
        let (pinv, cond) = pinv(&a, 1e-13);
        if cond > 1e10 {
            return Err(HarmonicError::IllConditioned(cond));
        }
        let check = nodes
            .iter()
            .map(|s| {
                let angle = s.angle + PI / m as f64;
                BoundarySample {
                    angle,
                    point: domain.curve(s.curve).point(angle),
                    outward_normal: domain.outward_normal(s.curve, angle),
                    ..*s
                }
            })
            .collect();
        Ok(Self {
            domain: domain.clone(),
            cfg,
            nodes,
            check,
            pinv,
            cond,
        })
    }

    pub fn domain(&self) -> &CircularDomain {
        &self.domain
    }

    pub fn config(&self) -> HarmonicConfig {
        self.cfg
    }

    pub fn condition_number(&self) -> f64 {
        self.cond
    }

    fn unpack(&self, x: &DVector<f64>) -> Series {
        let n = self.domain.n();
        let d = self.cfg.degree;
        let mut s = Series::zero(&self.domain, d);
        s.constant = C64::new(x[0], 0.0);
        for i in 0..n {
            s.logs[i] = x[1 + i];
        }
        let base = 1 + n;
        for k in 0..d {
            s.outer[k] = C64::new(x[base + 2 * k], -x[base + 2 * k + 1]);
        }
        for i in 0..n {
            let off = base + 2 * d * (i + 1);
            for k in 0..d {
                s.holes[i][k] = C64::new(x[off + 2 * k], -x[off + 2 * k + 1]);
            }
        }
        s
    }

    /// Fit without enforcing the residual tolerance; the residual is still measured.
    pub fn fit(&self, data: &dyn Fn(usize, C64) -> f64) -> HarmonicRep {
        let b = DVector::from_iterator(self.nodes.len(), self.nodes.iter().map(|s| data(s.curve, s.point)));
        let x = &self.pinv * b;
        let series = self.unpack(&x);
        let residual = self
            .check
            .iter()
            .chain(&self.nodes)
            .map(|s| (series.real_value(s.point) - data(s.curve, s.point)).abs())
            .fold(0.0, f64::max);
        HarmonicRep { series, residual }
    }

    /// Fit and reject if the boundary residual exceeds the configured tolerance.
    pub fn solve(&self, data: &dyn Fn(usize, C64) -> f64) -> Result<HarmonicRep, HarmonicError> {
        let h = self.fit(data);
        if h.residual > self.cfg.tol {
            return Err(HarmonicError::Residual {
                residual: h.residual,
                tol: self.cfg.tol,
            });
        }
        Ok(h)
    }
}

/// `g(z) = −log|z − pole| + log|r_0² − (p̄ − c_0)(z − c_0)| − log r_0 + regular(z)`,
/// vanishing on the boundary.
///
/// The middle term completes the Green's function of the outer disk, so the
/// fitted regular part stays smooth even when the pole is near the outer circle.
#[derive(Debug, Clone, Serialize)]
pub struct GreenFunction {
    pub pole: C64,
    outer_circle: Circle,
    pub regular: HarmonicRep,
}

impl GreenFunction {
    fn image_factor(&self, z: C64) -> C64 {
        let (c0, r0) = (self.outer_circle.center, self.outer_circle.radius);
        r0 * r0 - (self.pole.conj() - c0) * (z - c0)
    }

    /// Green's function of the outer disk alone.
    fn disk(&self, z: C64) -> f64 {
        -(z - self.pole).norm().ln() + self.image_factor(z).norm().ln() - self.outer_circle.radius.ln()
    }

    pub fn value(&self, z: C64) -> f64 {
        self.disk(z) + self.regular.value(z)
    }

    /// Complex derivative of the multivalued analytic completion.
    pub fn deriv(&self, z: C64) -> C64 {
        let c0 = self.outer_circle.center;
        -1.0 / (z - self.pole) - (self.pole.conj() - c0) / self.image_factor(z) + self.regular.series.deriv(z)
    }

    pub fn gradient(&self, z: C64) -> C64 {
        self.deriv(z).conj()
    }

    /// Poisson density `−(1/2π) ∂g/∂n_out` at a boundary point with outward normal `nrm`.
    pub fn poisson_density(&self, q: C64, nrm: C64) -> f64 {
        -(self.deriv(q) * nrm).re / (2.0 * PI)
    }
}

/// Density of harmonic measure at `base` against arc length, sampled on a boundary grid.
#[derive(Debug, Clone, Serialize)]
pub struct PoissonKernelField {
    pub base: C64,
    pub samples: Vec<BoundarySample>,
    pub values: Vec<f64>,
}

impl PoissonKernelField {
    pub fn mass(&self) -> f64 {
        self.samples.iter().zip(&self.values).map(|(s, v)| s.weight * v).sum()
    }

    pub fn curve_mass(&self, curve: usize) -> f64 {
        self.samples
            .iter()
            .zip(&self.values)
            .filter(|(s, _)| s.curve == curve)
            .map(|(s, v)| s.weight * v)
            .sum()
    }

    /// Quadrature weights of `ω_base` at the samples.
    pub fn measure(&self) -> Vec<f64> {
        self.samples.iter().zip(&self.values).map(|(s, v)| s.weight * v).collect()
    }
}

/// Poisson kernel `𝕡(·, q)` for a boundary point `q`, split into the Herglotz
/// kernel of the circle through `q` (carrying the boundary singularity) plus
/// a smooth harmonic remainder.
///
/// For `q` on a hole the Herglotz kernel is paired with its reflection across
/// the outer circle, so the singular part has zero real part on the outer
/// circle as well and the remainder data stays far from any singularity.
#[derive(Debug, Clone, Serialize)]
pub struct PointKernel {
    pub at: BoundaryPoint,
    pub q: C64,
    circle: Circle,
    outer_circle: Circle,
    outer: bool,
    pub remainder: HarmonicRep,
}

impl PointKernel {
    fn herglotz(&self, w: C64) -> (C64, C64) {
        let c = self.circle;
        let (q, w) = (self.q - c.center, w - c.center);
        let s = if self.outer { 1.0 } else { -1.0 } / (2.0 * PI * c.radius);
        ((q + w) / (q - w) * s, q * 2.0 / ((q - w) * (q - w)) * s)
    }

    fn image(&self, w: C64) -> (C64, C64) {
        // -conj(K(σ(w))) with σ the reflection in the outer circle, as one rational function
        let (c0, r0) = (self.outer_circle.center, self.outer_circle.radius);
        let c = self.circle;
        let a = self.q.conj() - c.center;
        let t = w - c0;
        let (na, da) = (a + c0 - c.center, a - c0 + c.center);
        let num = na * t + r0 * r0;
        let den = da * t - r0 * r0;
        let s = 1.0 / (2.0 * PI * c.radius);
        (num / den * s, (na * den - num * da) / (den * den) * s)
    }

    /// Analytic singular part; its real part carries the point mass at `q`.
    pub fn singular(&self, w: C64) -> C64 {
        let (k, _) = self.herglotz(w);
        if self.outer {
            k
        } else {
            k + self.image(w).0
        }
    }

    pub fn singular_deriv(&self, w: C64) -> C64 {
        let (_, dk) = self.herglotz(w);
        if self.outer {
            dk
        } else {
            dk + self.image(w).1
        }
    }

    /// `𝕡(w, q)`.
    pub fn value(&self, w: C64) -> f64 {
        self.singular(w).re + self.remainder.value(w)
    }
}

/// Harmonic measures `h_0..h_n` of the boundary curves together with the solver that built them.
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    solver: DirichletSolver,
    h: Vec<HarmonicRep>,
}

impl HarmonicBasis {
    pub fn new(domain: &CircularDomain, cfg: HarmonicConfig) -> Result<Self, HarmonicError> {
        let solver = DirichletSolver::new(domain, cfg)?;
        let h = (0..=domain.n())
            .map(|j| solver.solve(&move |c, _| if c == j { 1.0 } else { 0.0 }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { solver, h })
    }

    pub fn solver(&self) -> &DirichletSolver {
        &self.solver
    }

    pub fn domain(&self) -> &CircularDomain {
        self.solver.domain()
    }

    pub fn n(&self) -> usize {
        self.domain().n()
    }

    /// `h_j`, equal to 1 on curve `j` and 0 on the others.
    pub fn h(&self, j: usize) -> Result<&HarmonicRep, HarmonicError> {
        self.h.get(j).ok_or(HarmonicError::IndexOutOfRange(j))
    }

    /// `Q_j(p)`, the outward normal derivative of `h_j` at a boundary point.
    pub fn q(&self, j: usize, p: BoundaryPoint) -> f64 {
        let d = self.domain();
        let g = self.h[j].gradient(p.point(d));
        (g * p.normal(d).conj()).re
    }

    /// Periods `P_j(μ) = ∫ Q_j dμ`, `j = 1..=n`, of a discrete measure.
    pub fn periods(&self, mu: &[(BoundaryPoint, f64)]) -> Vec<f64> {
        (1..=self.n())
            .map(|j| mu.iter().map(|(p, w)| w * self.q(j, *p)).sum())
            .collect()
    }

    fn check_interior(&self, b: C64, margin: f64) -> Result<(), HarmonicError> {
        let dist = self.domain().boundary_distance(b);
        if dist < margin {
            return Err(HarmonicError::TooCloseToBoundary {
                re: b.re,
                im: b.im,
                dist,
            });
        }
        Ok(())
    }

    pub fn green(&self, b: C64) -> Result<GreenFunction, HarmonicError> {
        self.check_interior(b, 0.01)?;
        let mut g = GreenFunction {
            pole: b,
            outer_circle: self.domain().outer(),
            regular: HarmonicRep {
                series: Series::zero(self.domain(), self.solver.cfg.degree),
                residual: 0.0,
            },
        };
        let disk = g.clone();
        g.regular = self
            .solver
            .solve(&move |c, z| if c == 0 { 0.0 } else { -disk.disk(z) })?;
        Ok(g)
    }

    pub fn poisson(&self, b: C64, samples: &[BoundarySample]) -> Result<PoissonKernelField, HarmonicError> {
        let g = self.green(b)?;
        let values = samples.iter().map(|s| g.poisson_density(s.point, s.outward_normal)).collect();
        Ok(PoissonKernelField {
            base: b,
            samples: samples.to_vec(),
            values,
        })
    }

    pub fn point_kernel(&self, at: BoundaryPoint) -> Result<PointKernel, HarmonicError> {
        let d = self.domain();
        let circle = d.curve(at.curve);
        let mut pk = PointKernel {
            at,
            q: at.point(d),
            circle,
            outer_circle: d.outer(),
            outer: at.curve == 0,
            remainder: HarmonicRep {
                series: Series::zero(d, self.solver.cfg.degree),
                residual: 0.0,
            },
        };
        let sing = pk.clone();
        pk.remainder = self.solver.solve(&move |c, z| {
            if c == 0 && !sing.outer {
                0.0
            } else if c == sing.at.curve {
                // the Herglotz part is purely imaginary on its own circle
                if sing.outer {
                    0.0
                } else {
                    -sing.image(z).0.re
                }
            } else {
                -sing.singular(z).re
            }
        })?;
        Ok(pk)
    }
}

/// Analytic `f` with `Re f = h` and `Im f(anchor) = 0`.
///
/// Rejects `h` when any hole flux exceeds `gate`; the flux is measured both
/// from the log charges and by quadrature of the normal derivative.
pub fn harmonic_conjugate(
    domain: &CircularDomain,
    h: &HarmonicRep,
    anchor: C64,
    gate: f64,
) -> Result<Series, HarmonicError> {
    let closed = h.fluxes();
    let quad = h.fluxes_quadrature(domain, 256);
    let worst = closed.iter().chain(&quad).fold(0.0f64, |m, p| m.max(p.abs()));
    if worst > gate {
        return Err(HarmonicError::NonvanishingPeriod(quad));
    }
    let mut f = h.series.clone();
    f.logs.iter_mut().for_each(|a| *a = 0.0);
    let shift = f.eval(anchor).im;
    f.constant -= C64::new(0.0, shift);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> HarmonicBasis {
        HarmonicBasis::new(&CircularDomain::reference(), HarmonicConfig::default()).unwrap()
    }

    #[test]
    fn constant_data_gives_constant() {
        let b = basis();
        let h = b.solver().solve(&|_, _| 1.0).unwrap();
        assert!((h.constant() - 1.0).abs() < 1e-12);
        assert!(h.log_charges().iter().all(|a| a.abs() < 1e-12));
        assert!(h.series.outer.iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn fit_degree_24_meets_tolerance() {
        let d = CircularDomain::reference();
        let cfg = HarmonicConfig {
            degree: 24,
            ..Default::default()
        };
        let b = HarmonicBasis::new(&d, cfg).unwrap();
        assert!(b.h(1).unwrap().residual <= 1e-8);
    }

    #[test]
    fn flux_routes_agree() {
        let b = basis();
        let h = b.h(1).unwrap();
        for (a, q) in h.fluxes().iter().zip(h.fluxes_quadrature(b.domain(), 256)) {
            assert!((a - q).abs() < 1e-9);
        }
    }

    #[test]
    fn conjugate_of_real_part() {
        let b = basis();
        let h = b.solver().solve(&|_, z| z.re).unwrap();
        let f = harmonic_conjugate(b.domain(), &h, C64::new(0.0, 0.0), 1e-7).unwrap();
        for z in [C64::new(0.1, 0.3), C64::new(-0.8, -0.2), C64::new(0.0, 0.7)] {
            assert!((f.eval(z) - z).norm() < 1e-10);
        }
    }

    #[test]
    fn conjugate_rejects_harmonic_measure() {
        let b = basis();
        let e = harmonic_conjugate(b.domain(), b.h(1).unwrap(), C64::new(0.0, 0.0), 1e-7);
        match e {
            Err(HarmonicError::NonvanishingPeriod(p)) => assert!(p[0] > 1e-3),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn green_rejects_near_boundary() {
        let b = basis();
        assert!(matches!(
            b.green(C64::new(0.995, 0.0)),
            Err(HarmonicError::TooCloseToBoundary { .. })
        ));
    }

    #[test]
    fn point_kernel_matches_green_route() {
        let b = basis();
        let d = b.domain().clone();
        let w = C64::new(0.1, 0.05);
        let g = b.green(w).unwrap();
        for at in [BoundaryPoint::new(0, 2.0), BoundaryPoint::new(2, 0.7), BoundaryPoint::new(1, -2.5)] {
            let pk = b.point_kernel(at).unwrap();
            let via_green = g.poisson_density(at.point(&d), at.normal(&d));
            assert!((pk.value(w) - via_green).abs() < 1e-9);
            let h = 1e-6;
            let fd = (pk.singular(w + h) - pk.singular(w - h)) / (2.0 * h);
            assert!((fd - pk.singular_deriv(w)).norm() < 1e-6);
        }
    }

    #[test]
    fn green_near_outer_circle() {
        let b = basis();
        let g = b.green(C64::new(-0.95, 0.0)).unwrap();
        assert!(g.regular.residual < 1e-10);
        for s in b.domain().boundary_grid(64).unwrap() {
            assert!(g.value(s.point).abs() < 1e-10);
        }
        assert!(g.value(C64::new(0.0, 0.3)) > 0.0);
    }

    #[test]
    fn index_out_of_range() {
        assert_eq!(basis().h(3).unwrap_err(), HarmonicError::IndexOutOfRange(3));
    }
}

//! Holomorphic differentials of the Schottky double, the Abel–Jacobi map,
//! the period matrix and theta functions with characteristics.
//!
//! `α_i = ½ Σ_k N_ik g_k′(z) dz` where `g_k` is the analytic completion of the
//! harmonic measure `h_k` and `N` normalizes the A-periods to the identity.
//! The A-cycle `A_j` runs from `B_0` to `B_j` along the fixed-point segments
//! and returns on the mirror sheet, so `∫_{A_j} α_i = 2 Re ∫ α_i`. The B-cycle
//! `B_j` is the boundary curve `B_j` with the orientation it has as part of `∂R`.
//!
//! `χ` is evaluated on the chart `R ∖ (𝕏_1 ∪ … ∪ 𝕏_n)`: points in the upper
//! and lower half are reached from `p_0^-` through their own half plane, and
//! real points on the cut take the limit from above.

use crate::domain::CircularDomain;
use crate::harmonic::{HarmonicBasis, HarmonicError, Series};
use crate::quad::gauss_legendre;
use crate::{C64, I};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JacobianError {
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error("no admissible path from the base point to {0}")]
    PathBlocked(C64),
    #[error("path quadrature did not converge towards {0}")]
    Quadrature(C64),
    #[error("point {0} is not in the closed domain")]
    OutsideDomain(C64),
    #[error("A-period matrix is singular")]
    SingularPeriods,
    #[error("Im Ω is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("theta tolerance {tol:.1e} unattainable within truncation {cap}")]
    Truncation { tol: f64, cap: usize },
    #[error("no odd half-period passes: {0:?}")]
    NoOddCharacteristic(Vec<CharacteristicReport>),
    #[error("ϑ_*(χ(·) − χ({0})) vanishes identically")]
    Exceptional(C64),
}

/// A point of the Schottky double: `Front(y)` is `y ∈ R`, `Mirror(y)` is `J y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DoublePoint {
    Front(C64),
    Mirror(C64),
}

fn cvec_to_vec(v: &DVector<C64>) -> Vec<C64> {
    v.iter().copied().collect()
}

pub fn cmat_to_rows(m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Normalized holomorphic differentials `α_1..α_n`.
#[derive(Debug, Clone)]
pub struct DifferentialBasis {
    domain: CircularDomain,
    g: Vec<Series>,
    /// Normalization `N`, real since the raw A-periods are differences of `h_k`.
    norm: DMatrix<f64>,
    raw_a_periods: DMatrix<f64>,
    base: C64,
    base_values: DVector<C64>,
    /// Log charge of `α_i`-completion at hole `c`: `Σ_k N_ik a_kc`.
    charges: DMatrix<f64>,
}

const LEG_ORDER: usize = 16;

impl DifferentialBasis {
    pub fn new(basis: &HarmonicBasis) -> Result<Self, JacobianError> {
        let domain = basis.domain().clone();
        let n = domain.n();
        let g = (1..=n)
            .map(|k| basis.h(k).map(|h| h.series.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let base = C64::new(domain.fixed_points().base, 0.0);
        let mut db = Self {
            domain,
            g,
            norm: DMatrix::identity(n, n),
            raw_a_periods: DMatrix::identity(n, n),
            base,
            base_values: DVector::zeros(n),
            charges: DMatrix::zeros(n, n),
        };
        let raw = db.a_periods_quadrature()?;
        let norm = raw.clone().try_inverse().ok_or(JacobianError::SingularPeriods)?;
        let charges = DMatrix::from_fn(n, n, |i, c| (0..n).map(|k| norm[(i, k)] * db.g[k].logs[c]).sum());
        db.raw_a_periods = raw;
        db.norm = norm;
        db.charges = charges;
        db.base_values = db.completion(base);
        Ok(db)
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn domain(&self) -> &CircularDomain {
        &self.domain
    }

    /// A-periods before normalization.
    pub fn raw_a_periods(&self) -> &DMatrix<f64> {
        &self.raw_a_periods
    }

    pub fn normalization(&self) -> &DMatrix<f64> {
        &self.norm
    }

    /// Log charges of the normalized completions, row `i` for `α_i`.
    pub fn charges(&self) -> &DMatrix<f64> {
        &self.charges
    }

    /// Coefficients of `dz` in `α_1..α_n` at `z`.
    pub fn alpha(&self, z: C64) -> DVector<C64> {
        let raw: Vec<C64> = self.g.iter().map(|g| g.deriv(z) * 0.5).collect();
        DVector::from_fn(self.n(), |i, _| {
            (0..self.n()).map(|k| raw[k] * self.norm[(i, k)]).sum()
        })
    }

    /// `½ N g(z)` with principal-branch logarithms.
    fn completion(&self, z: C64) -> DVector<C64> {
        let raw: Vec<C64> = self.g.iter().map(|g| g.eval(z) * 0.5).collect();
        DVector::from_fn(self.n(), |i, _| {
            (0..self.n()).map(|k| raw[k] * self.norm[(i, k)]).sum()
        })
    }

    /// A-periods of the current (normalized) basis by quadrature along the
    /// fixed-point segments: `A_j = Σ_{k<j} (𝕏_k + J𝕏_k reversed)`.
    pub fn a_periods_quadrature(&self) -> Result<DMatrix<f64>, JacobianError> {
        let n = self.n();
        let segs = self.domain.fixed_points().segments;
        let mut out = DMatrix::zeros(n, n);
        let mut acc = DVector::<f64>::zeros(n);
        for j in 0..n {
            let (a, b) = segs[j];
            let leg = self.integrate_leg(C64::new(a, 0.0), C64::new(b, 0.0))?;
            // the mirrored return contributes conj of the forward integral
            acc += leg.map(|v| 2.0 * v.re);
            out.set_column(j, &acc);
        }
        Ok(out)
    }

    fn leg_sum(&self, a: C64, b: C64, panels: usize, reflected: bool) -> DVector<C64> {
        let (x, w) = gauss_legendre(LEG_ORDER);
        let mut s = DVector::<C64>::zeros(self.n());
        let d = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + d * p as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let z = lo + d * (0.5 * (xi + 1.0));
                if reflected {
                    // `z` is the chart coordinate ζ = conj y on J(R): α = −conj(α(conj ζ)) dζ
                    let dzeta = d * (0.5 * wi);
                    s += self.alpha(z.conj()).map(|v| -v.conj() * dzeta);
                } else {
                    s += self.alpha(z) * (d * (0.5 * wi));
                }
            }
        }
        s
    }

    fn integrate_leg_with(&self, a: C64, b: C64, reflected: bool) -> Result<DVector<C64>, JacobianError> {
        let mut panels = 2;
        let mut prev = self.leg_sum(a, b, panels, reflected);
        while panels <= 512 {
            panels *= 2;
            let next = self.leg_sum(a, b, panels, reflected);
            let diff = (&next - &prev).norm();
            if diff <= 1e-13 * (1.0 + next.norm()) {
                return Ok(next);
            }
            prev = next;
        }
        Err(JacobianError::Quadrature(b))
    }

    fn integrate_leg(&self, a: C64, b: C64) -> Result<DVector<C64>, JacobianError> {
        self.integrate_leg_with(a, b, false)
    }

    fn inside(&self, z: C64) -> bool {
        self.domain.contains(z) || self.domain.boundary_distance(z) < 1e-12
    }

    fn leg_ok(&self, a: C64, b: C64) -> bool {
        (0..=64).all(|k| {
            let z = a + (b - a) * (k as f64 / 64.0);
            self.inside(z) && (k == 0 || k == 64 || self.domain.contains(z))
        })
    }

    /// Polygonal path from `p_0^-` to `y` inside the half plane of `y`.
    pub fn route(&self, y: C64) -> Result<Vec<C64>, JacobianError> {
        let y = canonical_real(y);
        if !self.inside(y) {
            return Err(JacobianError::OutsideDomain(y));
        }
        let fp = self.domain.fixed_points();
        let (a0, b0) = fp.segments[0];
        if y.im == 0.0 && y.re >= a0 && y.re <= b0 {
            return Ok(vec![self.base, y]);
        }
        let m0 = C64::new(0.5 * (a0 + b0), 0.0);
        let sign = if y.im < 0.0 { -1.0 } else { 1.0 };
        let rmax = self.domain.max_hole_radius();
        let oc = self.domain.outer();
        for scale in [2.0, 1.5, 1.25, 3.0] {
            let h = sign * scale * rmax;
            let w1 = m0 + C64::new(0.0, h);
            // clip the horizontal leg so it stays inside the outer circle
            let reach = (oc.radius * 0.98).powi(2) - h * h;
            if reach <= 0.0 {
                continue;
            }
            let xmax = oc.center + reach.sqrt();
            let xmin = oc.center - reach.sqrt();
            let w2 = C64::new(y.re.clamp(xmin, xmax), h);
            let pts = vec![self.base, m0, w1, w2, y];
            if pts.windows(2).all(|p| self.leg_ok(p[0], p[1])) {
                return Ok(pts);
            }
        }
        Err(JacobianError::PathBlocked(y))
    }

    /// `χ(y)` by adaptive Gauss–Legendre quadrature of `α` along [`Self::route`].
    pub fn chi_path(&self, y: C64) -> Result<DVector<C64>, JacobianError> {
        self.chi_path_with(y, false)
    }

    /// `χ(Jy)` by integrating the mirror-chart form along the reflected route.
    pub fn chi_mirror_path(&self, y: C64) -> Result<DVector<C64>, JacobianError> {
        self.chi_path_with(y, true)
    }

    fn chi_path_with(&self, y: C64, reflected: bool) -> Result<DVector<C64>, JacobianError> {
        let pts = self.route(y)?;
        let mut s = DVector::<C64>::zeros(self.n());
        for p in pts.windows(2) {
            let (a, b) = if reflected { (p[0].conj(), p[1].conj()) } else { (p[0], p[1]) };
            if (b - a).norm() > 0.0 {
                s += self.integrate_leg_with(a, b, reflected)?;
            }
        }
        Ok(s)
    }

    /// `χ(y)` in closed form from the completions, on the same chart as [`Self::chi_path`].
    pub fn chi(&self, y: C64) -> DVector<C64> {
        let y = canonical_real(y);
        let mut v = self.completion(y) - &self.base_values;
        if y.im < 0.0 {
            // continuation through 𝕏_0 instead of across the principal cuts
            for i in 0..self.n() {
                let s: f64 = self.charges.row(i).iter().sum();
                v[i] += I * (PI * s);
            }
        }
        v
    }

    /// Abel–Jacobi image of a point of the double; `χ(Jy) = −conj χ(y)`.
    pub fn abel_jacobi(&self, p: DoublePoint) -> DVector<C64> {
        match p {
            DoublePoint::Front(y) => self.chi(y),
            DoublePoint::Mirror(y) => self.chi(y).map(|v| -v.conj()),
        }
    }

    /// `∮ α_i` around hole `j` (oriented as part of `∂R`) on the circle of radius `r_j + offset`.
    pub fn loop_integrals(&self, m: usize, offset: f64) -> DMatrix<C64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let c = self.domain.holes()[j];
            let r = c.radius + offset;
            let mut s = DVector::<C64>::zeros(n);
            for k in 0..m {
                let t = 2.0 * PI * k as f64 / m as f64;
                let u = C64::from_polar(1.0, t);
                let z = c.center + u * r;
                // clockwise around the hole
                let dz = -I * u * (r * 2.0 * PI / m as f64);
                s += self.alpha(z) * dz;
            }
            out.set_column(j, &s);
        }
        out
    }

    /// `−πi` times the normalized log charges: the closed-form B-periods.
    pub fn omega_closed(&self) -> DMatrix<C64> {
        self.charges.map(|a| -I * (PI * a))
    }
}

/// Replaces a negative-zero imaginary part so that real points use the upper limit.
fn canonical_real(y: C64) -> C64 {
    if y.im == 0.0 {
        C64::new(y.re, 0.0)
    } else {
        y
    }
}

/// The period matrix with its verification data.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodMatrix {
    #[serde(serialize_with = "ser_cmat")]
    pub omega: DMatrix<C64>,
    /// `max |Ω − Ωᵀ|`.
    pub symmetry: f64,
    /// Smallest eigenvalue of `Im Ω`.
    pub min_eig_im: f64,
    /// `max |A-periods − I|` after normalization, by quadrature.
    pub a_residual: f64,
    /// `max |A-periods − I|` before normalization.
    pub raw_a_residual: f64,
    /// Change of `Ω` when the loop quadrature is doubled.
    pub refinement: f64,
    /// Difference to the closed form `−πi N a`.
    pub closed_form_gap: f64,
    /// Difference to a homologous loop pushed off the hole.
    pub homologous_gap: f64,
}

pub fn ser_cmat<S: serde::Serializer>(m: &DMatrix<C64>, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&cmat_to_rows(m), s)
}

pub fn ser_cvec<S: serde::Serializer>(v: &DVector<C64>, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&cvec_to_vec(v), s)
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.norm()))
}

pub fn period_matrix(db: &DifferentialBasis) -> Result<PeriodMatrix, JacobianError> {
    let n = db.n();
    let omega = db.loop_integrals(512, 0.0);
    let coarse = db.loop_integrals(256, 0.0);
    // push the loop halfway to the nearest other curve
    let offset = db
        .domain()
        .holes()
        .iter()
        .map(|h| {
            let probe = h.center + C64::new(0.0, h.radius);
            let mut gap = f64::INFINITY;
            for c in db.domain().curves() {
                if (c.center - h.center).abs() < 1e-15 && (c.radius - h.radius).abs() < 1e-15 {
                    continue;
                }
                gap = gap.min(((probe - c.center).norm() - c.radius).abs());
            }
            gap
        })
        .fold(f64::INFINITY, f64::min)
        * 0.5;
    let pushed = db.loop_integrals(1024, offset);
    let a = db.a_periods_quadrature()?;
    let eye = DMatrix::<f64>::identity(n, n);
    let im = omega.map(|v| v.im);
    let sym_im = (&im + im.transpose()) * 0.5;
    let min_eig_im = sym_im.symmetric_eigen().eigenvalues.min();
    if !(min_eig_im > 0.0) {
        return Err(JacobianError::NotPositive(min_eig_im));
    }
    Ok(PeriodMatrix {
        symmetry: max_abs(&(&omega - omega.transpose())),
        min_eig_im,
        a_residual: (a - &eye).amax(),
        raw_a_residual: (db.raw_a_periods() - &eye).amax(),
        refinement: max_abs(&(&omega - coarse)),
        closed_form_gap: max_abs(&(&omega - db.omega_closed())),
        homologous_gap: max_abs(&(&omega - pushed)),
        omega,
    })
}

/// Theta lattice sums for a fixed `Ω` with a truncation chosen for a tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaContext {
    #[serde(serialize_with = "ser_cmat")]
    pub omega: DMatrix<C64>,
    #[serde(skip)]
    im_inv: DMatrix<f64>,
    /// Truncation radius `M` in the sup norm.
    pub m: usize,
    pub tol: f64,
    pub lambda_min: f64,
    /// Lattice points ordered by shell, then lexicographically.
    #[serde(skip)]
    points: Vec<Vec<i64>>,
}

pub const THETA_CAP: usize = 40;

fn shell_points(n: usize, m: usize) -> Vec<Vec<i64>> {
    let mut all: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &all {
            for k in -(m as i64)..=(m as i64) {
                let mut q = p.clone();
                q.push(k);
                next.push(q);
            }
        }
        all = next;
    }
    all.sort_by(|a, b| {
        let sa = a.iter().map(|v| v.abs()).max().unwrap_or(0);
        let sb = b.iter().map(|v| v.abs()).max().unwrap_or(0);
        sa.cmp(&sb).then(a.cmp(b))
    });
    all
}

impl ThetaContext {
    pub fn new(omega: &DMatrix<C64>, tol: f64) -> Result<Self, JacobianError> {
        let n = omega.nrows();
        let im = omega.map(|v| v.im);
        let sym = (&im + im.transpose()) * 0.5;
        let lambda_min = sym.clone().symmetric_eigen().eigenvalues.min();
        if !(lambda_min > 0.0) {
            return Err(JacobianError::NotPositive(lambda_min));
        }
        let im_inv = sym.try_inverse().ok_or(JacobianError::NotPositive(lambda_min))?;
        let mut ctx = Self {
            omega: omega.clone(),
            im_inv,
            m: 0,
            tol,
            lambda_min,
            points: vec![],
        };
        let m = (1..=THETA_CAP)
            .find(|&m| ctx.tail_bound(m) < tol)
            .ok_or(JacobianError::Truncation { tol, cap: THETA_CAP })?;
        ctx.m = m;
        ctx.points = shell_points(n, m);
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    /// Bound on the terms outside `‖m‖_∞ ≤ M` for a reduced argument, relative
    /// to the largest term size `exp(π βᵀ Im Ω β)` with `β ∈ [−½, ½]^n`.
    pub fn tail_bound(&self, m: usize) -> f64 {
        let n = self.n() as i32;
        let mut s = 0.0;
        for k in (m + 1)..(m + 60) {
            let count = (2.0 * k as f64 + 1.0).powi(n) - (2.0 * k as f64 - 1.0).powi(n);
            let r = k as f64 - 0.5;
            s += count * (-PI * self.lambda_min * r * r).exp();
        }
        s
    }

    /// Splits `z = a + Ω β` with real `a`, `β`.
    pub fn split(&self, z: &DVector<C64>) -> (DVector<f64>, DVector<f64>) {
        let beta = &self.im_inv * z.map(|v| v.im);
        let ob = self.omega.map(|v| v.re) * &beta;
        let a = z.map(|v| v.re) - ob;
        (a, beta)
    }

    fn raw(&self, z: &DVector<C64>, points: &[Vec<i64>]) -> C64 {
        let n = self.n();
        let mut s = C64::new(0.0, 0.0);
        for m in points {
            let mut q = C64::new(0.0, 0.0);
            for i in 0..n {
                let mut row = C64::new(0.0, 0.0);
                for j in 0..n {
                    row += self.omega[(i, j)] * m[j] as f64;
                }
                q += row * m[i] as f64;
            }
            let mut lin = C64::new(0.0, 0.0);
            for i in 0..n {
                lin += z[i] * m[i] as f64;
            }
            s += (I * PI * q + I * 2.0 * PI * lin).exp();
        }
        s
    }

    /// Plain lattice sum over `‖m‖_∞ ≤ m` without range reduction.
    pub fn theta_raw(&self, z: &DVector<C64>, m: usize) -> C64 {
        self.raw(z, &shell_points(self.n(), m))
    }

    /// `θ(z) = Σ exp(πi mᵀΩm + 2πi mᵀz)`, range-reduced to the fundamental cell first.
    pub fn theta(&self, z: &DVector<C64>) -> C64 {
        let (_, beta) = self.split(z);
        let k = beta.map(|b| b.round());
        let ok = self.omega.map(|v| v) * k.map(|v| C64::new(v, 0.0));
        let zr = z - &ok;
        // θ(z′ + Ωk) = exp(−πi kᵀΩk − 2πi kᵀz′) θ(z′)
        let kc = k.map(|v| C64::new(v, 0.0));
        let q = (kc.transpose() * &ok)[(0, 0)];
        let lin = (kc.transpose() * &zr)[(0, 0)];
        let a = zr.map(|v| C64::new(v.re - v.re.round(), v.im));
        (-I * PI * q - I * 2.0 * PI * lin).exp() * self.raw(&a, &self.points)
    }

    /// `θ[u; v](z) = exp(πi vᵀΩv + 2πi (z + u)ᵀv) θ(z + u + Ωv)`.
    pub fn theta_char(&self, u: &DVector<f64>, v: &DVector<f64>, z: &DVector<C64>) -> C64 {
        let vc = v.map(|x| C64::new(x, 0.0));
        let ov = &self.omega * &vc;
        let q = (vc.transpose() * &ov)[(0, 0)];
        let zu = z + u.map(|x| C64::new(x, 0.0));
        let lin = (zu.transpose() * &vc)[(0, 0)];
        (I * PI * q + I * 2.0 * PI * lin).exp() * self.theta(&(zu + ov))
    }
}

/// Candidate half-period with the values that decided it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacteristicReport {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value_at_zero: f64,
    pub section_max: f64,
}

/// An odd half-period `e_* = u_* + Ω v_*` and `ϑ_* = θ[e_*]`.
#[derive(Debug, Clone, Serialize)]
pub struct OddHalfPeriod {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub e: Vec<C64>,
    pub value_at_zero: f64,
    pub section_max: f64,
    pub candidates: Vec<CharacteristicReport>,
    #[serde(skip)]
    ctx: Option<ThetaContext>,
}

impl OddHalfPeriod {
    pub fn eval(&self, z: &DVector<C64>) -> C64 {
        let ctx = self.ctx.as_ref().expect("context attached at construction");
        ctx.theta_char(&DVector::from_vec(self.u.clone()), &DVector::from_vec(self.v.clone()), z)
    }
}

/// Deterministic interior sample points.
pub fn interior_samples(domain: &CircularDomain, count: usize, margin: f64, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oc = domain.outer();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = oc.center + C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * oc.radius;
        if domain.contains(z) && domain.boundary_distance(z) > margin {
            out.push(z);
        }
    }
    out
}

pub fn odd_half_period(
    ctx: &ThetaContext,
    db: &DifferentialBasis,
    seed: u64,
) -> Result<OddHalfPeriod, JacobianError> {
    let n = ctx.n();
    let pts = interior_samples(db.domain(), 20, 0.05, seed);
    let chis: Vec<DVector<C64>> = pts.iter().map(|&z| db.chi(z)).collect();
    let mut reports = Vec::new();
    for ubits in 0..(1u32 << n) {
        for vbits in 0..(1u32 << n) {
            let u: Vec<f64> = (0..n).map(|i| if ubits >> i & 1 == 1 { 0.5 } else { 0.0 }).collect();
            let v: Vec<f64> = (0..n).map(|i| if vbits >> i & 1 == 1 { 0.5 } else { 0.0 }).collect();
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            if (4.0 * dot).round() as i64 % 2 != 1 {
                continue;
            }
            let (uv, vv) = (DVector::from_vec(u.clone()), DVector::from_vec(v.clone()));
            let zero = DVector::<C64>::zeros(n);
            let value_at_zero = ctx.theta_char(&uv, &vv, &zero).norm();
            let e = uv.map(|x| C64::new(x, 0.0)) + &ctx.omega * vv.map(|x| C64::new(x, 0.0));
            let section_max = (0..10)
                .map(|k| {
                    let arg = &chis[2 * k + 1] - &chis[2 * k] + &e;
                    ctx.theta(&arg).norm()
                })
                .fold(0.0, f64::max);
            let rep = CharacteristicReport {
                u,
                v,
                value_at_zero,
                section_max,
            };
            reports.push(rep.clone());
            if value_at_zero < 1e-8 && section_max > 1e-6 {
                return Ok(OddHalfPeriod {
                    u: rep.u,
                    v: rep.v,
                    e: cvec_to_vec(&e),
                    value_at_zero,
                    section_max,
                    candidates: reports,
                    ctx: Some(ctx.clone()),
                });
            }
        }
    }
    Err(JacobianError::NoOddCharacteristic(reports))
}

/// Real characteristic `(u, v)` with `e = u + Ω v`.
pub fn split_characteristic(ctx: &ThetaContext, e: &DVector<C64>) -> (DVector<f64>, DVector<f64>) {
    let n = ctx.n();
    // [I  Re Ω; 0  Im Ω] (u; v) = (Re e; Im e)
    let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut rhs = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        for j in 0..n {
            a[(i, n + j)] = ctx.omega[(i, j)].re;
            a[(n + i, n + j)] = ctx.omega[(i, j)].im;
        }
        rhs[i] = e[i].re;
        rhs[n + i] = e[i].im;
    }
    let x = a.lu().solve(&rhs).expect("Im Ω is invertible");
    (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
}

/// `ϑ_*(χ(·) − χ(z)) / ϑ_*(χ(·) − χ(w))` on the chart of [`DifferentialBasis::chi`].
#[derive(Debug, Clone)]
pub struct PrimeRatio {
    pub z: C64,
    pub w: C64,
    chi_z: DVector<C64>,
    chi_w: DVector<C64>,
}

pub const EXCEPTIONAL_FLOOR: f64 = 1e-10;

impl PrimeRatio {
    pub fn new(
        odd: &OddHalfPeriod,
        db: &DifferentialBasis,
        z: C64,
        w: C64,
        seed: u64,
    ) -> Result<Self, JacobianError> {
        let probes = interior_samples(db.domain(), 4, 0.05, seed);
        for p in [z, w] {
            let cp = db.chi(p);
            let worst = probes
                .iter()
                .map(|&x| odd.eval(&(db.chi(x) - &cp)).norm())
                .fold(0.0, f64::max);
            if worst < EXCEPTIONAL_FLOOR {
                return Err(JacobianError::Exceptional(p));
            }
        }
        Ok(Self {
            z,
            w,
            chi_z: db.chi(z),
            chi_w: db.chi(w),
        })
    }

    pub fn eval(&self, odd: &OddHalfPeriod, db: &DifferentialBasis, x: C64) -> C64 {
        if (self.z - self.w).norm() == 0.0 {
            return C64::new(1.0, 0.0);
        }
        let cx = db.chi(x);
        odd.eval(&(&cx - &self.chi_z)) / odd.eval(&(&cx - &self.chi_w))
    }
}

/// Everything the theta side needs, built once per domain.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub differentials: DifferentialBasis,
    pub period: PeriodMatrix,
    pub theta: ThetaContext,
    pub odd: OddHalfPeriod,
}

impl Jacobian {
    pub fn new(basis: &HarmonicBasis, tol: f64, seed: u64) -> Result<Self, JacobianError> {
        let differentials = DifferentialBasis::new(basis)?;
        let period = period_matrix(&differentials)?;
        let theta = ThetaContext::new(&period.omega, tol)?;
        let odd = odd_half_period(&theta, &differentials, seed)?;
        Ok(Self {
            differentials,
            period,
            theta,
            odd,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::HarmonicConfig;
    use std::sync::OnceLock;

    fn jac() -> &'static Jacobian {
        static J: OnceLock<Jacobian> = OnceLock::new();
        J.get_or_init(|| {
            let b = HarmonicBasis::new(&CircularDomain::reference(), HarmonicConfig::default()).unwrap();
            Jacobian::new(&b, 1e-14, 7).unwrap()
        })
    }

    fn cv(v: &[C64]) -> DVector<C64> {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn period_matrix_properties() {
        let p = &jac().period;
        assert!(p.symmetry < 1e-6);
        assert!(p.min_eig_im > 0.0);
        assert!(p.a_residual < 1e-6);
        assert!(p.refinement < 1e-8);
        assert!(p.closed_form_gap < 1e-8);
        assert!(p.homologous_gap < 1e-6);
        // reference value of the symmetric configuration
        assert!((p.omega[(0, 0)] - C64::new(0.0, 2.00796)).norm() < 1e-4);
        assert!((p.omega[(0, 1)] - C64::new(0.0, -0.25908)).norm() < 1e-4);
    }

    #[test]
    fn chi_routes_agree() {
        let j = jac();
        let db = &j.differentials;
        assert!(db.chi(C64::new(-1.0, 0.0)).norm() < 1e-14);
        for y in [
            C64::new(0.3, 0.2),
            C64::new(-0.2, -0.5),
            C64::new(0.9, -0.1),
            C64::new(0.0, 0.0),
            C64::new(0.8, 0.0),
            C64::new(-0.8, 0.0),
            C64::new(0.0, -0.99),
        ] {
            let a = db.chi(y);
            let b = db.chi_path(y).unwrap();
            assert!((&a - &b).norm() < 1e-9, "{y}: {a} vs {b}");
        }
    }

    #[test]
    fn mirror_rule_matches_reflected_path() {
        let db = &jac().differentials;
        let y = C64::new(0.2, 0.45);
        let a = db.abel_jacobi(DoublePoint::Mirror(y));
        let b = db.chi_mirror_path(y).unwrap();
        assert!((&a - &b).norm() < 1e-6);
    }

    #[test]
    fn theta_periodicity_and_evenness() {
        let ctx = &jac().theta;
        let z = cv(&[C64::new(0.31, -0.4), C64::new(-0.2, 0.77)]);
        let t = ctx.theta(&z);
        let zm = &z + cv(&[C64::new(1.0, 0.0), C64::new(-2.0, 0.0)]);
        assert!((ctx.theta(&zm) - t).norm() < 1e-9 * t.norm().max(1.0));
        assert!((ctx.theta(&(-&z)) - t).norm() < 1e-9 * t.norm().max(1.0));
        let m = cv(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        let om = &ctx.omega * &m;
        let q = (m.transpose() * &om)[(0, 0)];
        let lin = (z.transpose() * &m)[(0, 0)];
        let expect = (-I * PI * q - I * 2.0 * PI * lin).exp() * t;
        let got = ctx.theta(&(&z + &om));
        assert!((got - expect).norm() < 1e-8 * expect.norm());
        // range reduction agrees with the plain sum
        assert!((ctx.theta_raw(&z, 12) - t).norm() < 1e-12 * t.norm());
    }

    #[test]
    fn odd_characteristic() {
        let j = jac();
        let odd = &j.odd;
        assert!(odd.value_at_zero < 1e-8);
        assert!(odd.section_max > 1e-6);
        let z = cv(&[C64::new(0.13, 0.2), C64::new(-0.4, 0.05)]);
        assert!((odd.eval(&z) + odd.eval(&(-&z))).norm() < 1e-8);
        let (u, v) = split_characteristic(&j.theta, &cv(&odd.e));
        for i in 0..2 {
            assert!((u[i] - odd.u[i]).abs() < 1e-12 && (v[i] - odd.v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn prime_ratio_zero_and_pole() {
        let j = jac();
        let (z, w) = (C64::new(0.1, 0.3), C64::new(-0.3, -0.4));
        let pr = PrimeRatio::new(&j.odd, &j.differentials, z, w, 3).unwrap();
        let slope = |c: C64| {
            let (t1, t2) = (1e-3, 1e-4);
            let a = pr.eval(&j.odd, &j.differentials, c + t1).norm();
            let b = pr.eval(&j.odd, &j.differentials, c + t2).norm();
            (a / b).ln() / (t1 / t2).ln()
        };
        assert!((slope(z) - 1.0).abs() < 0.05);
        assert!((slope(w) + 1.0).abs() < 0.05);
        let same = PrimeRatio::new(&j.odd, &j.differentials, z, z, 3).unwrap();
        assert_eq!(same.eval(&j.odd, &j.differentials, C64::new(0.5, 0.5)), C64::new(1.0, 0.0));
    }
}

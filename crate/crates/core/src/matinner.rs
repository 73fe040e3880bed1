//! Teams of projections and the 2×2 matrix inner functions
//! `Ψ_{S,p} = (G − I)(G + I)^{-1}`, where `G` is the analytic completion of
//! `H_{S,p} = τ_0 𝕡(·, p_0^-) I + Σ τ_i [𝕡(·, p_i) P^{i+} + 𝕡(·, p̄_i) P^{i−}]`
//! normalized by `G(b) = I`.

use crate::domain::CircularDomain;
use crate::fay::{epsilon_matrices, CriticalPoints, EpsilonReport, FayError, FayTheta, Kernel};
use crate::harmonic::{BoundaryPoint, HarmonicBasis, PointKernel};
use crate::jacobian::interior_samples;
use crate::linalg::{hermitian_eigh, m2_norm, singular_values, CMat, M2};
use crate::testfn::{kernel_vector_with, point_kernels, HerglotzSum, PiPoint, TestFnError, TestFunction};
use crate::zeros::{find_zeros, ZeroError, ZeroReport};
use crate::C64;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatInnerError {
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Zeros(#[from] ZeroError),
    #[error(transparent)]
    Fay(#[from] FayError),
    #[error("Poisson kernel symmetry fails: max |Q_j(p) − Q_j(p̄)| = {0:.3e}")]
    Symmetry(f64),
    #[error("team has {got} pairs, expected {expected}")]
    TeamSize { expected: usize, got: usize },
    #[error("G + I is singular at {0}")]
    Singular(C64),
    #[error("no t in the scan passes (last failure: {0})")]
    ScanExhausted(String),
    #[error("fewer than 6 sample points")]
    TooFewSamples,
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn eye() -> M2 {
    M2::identity()
}

fn rot(t: f64) -> M2 {
    M2::new(c(t.cos()), c(-t.sin()), c(t.sin()), c(t.cos()))
}

/// `n` pairs `(P^{j+}, P^{j−})` of complementary orthogonal projections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Team {
    #[serde(serialize_with = "ser_pairs")]
    pub pairs: Vec<(M2, M2)>,
}

fn ser_pairs<S: serde::Serializer>(pairs: &[(M2, M2)], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(pairs.len()))?;
    for (p, _) in pairs {
        seq.serialize_element(&to_arr(p))?;
    }
    seq.end()
}

impl Team {
    pub fn trivial(n: usize) -> Self {
        let p = M2::new(c(1.0), c(0.0), c(0.0), c(0.0));
        Self {
            pairs: vec![(p, eye() - p); n],
        }
    }

    /// `S_t`: `P^{2+}` is `P^{1+}` conjugated by the rotation through `t`.
    pub fn rotated(n: usize, t: f64) -> Self {
        let mut s = Self::trivial(n);
        if n >= 2 {
            let r = rot(t);
            let p = r * s.pairs[0].0 * r.transpose();
            s.pairs[1] = (p, eye() - p);
        }
        s
    }

    /// `max_{j±} ‖P_1^{j±} − P_2^{j±}‖`.
    pub fn distance(&self, other: &Team) -> f64 {
        self.pairs
            .iter()
            .zip(&other.pairs)
            .map(|((a, b), (x, y))| m2_norm(&(a - x)).max(m2_norm(&(b - y))))
            .fold(0.0, f64::max)
    }

    /// Largest defect in idempotence, self-adjointness and complementarity.
    pub fn defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (p, q) in &self.pairs {
            for m in [p, q] {
                d = d.max(m2_norm(&(m * m - m))).max(m2_norm(&(m.adjoint() - m)));
            }
            d = d.max(m2_norm(&(p + q - eye())));
        }
        d
    }
}

/// `Ψ_{S,p}` with the data it was built from.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixInner {
    pub team: Team,
    pub p: PiPoint,
    pub b: C64,
    pub tau: Vec<f64>,
    /// Entries of `G`, row-major.
    #[serde(skip)]
    entries: Vec<HerglotzSum>,
    /// Terms of `H` as `(weight, point, projection)`.
    #[serde(skip)]
    terms: Vec<(f64, PointKernel, M2)>,
}

/// `max_{j,i} |Q_j(p_i) − Q_j(p̄_i)|`.
pub fn symmetry_defect(basis: &HarmonicBasis, p: &PiPoint) -> f64 {
    let mut d: f64 = 0.0;
    for j in 1..=basis.n() {
        for q in &p.points {
            d = d.max((basis.q(j, *q) - basis.q(j, q.conj())).abs());
        }
    }
    d
}

impl MatrixInner {
    pub fn build(basis: &HarmonicBasis, team: &Team, p: &PiPoint, b: C64) -> Result<Self, MatInnerError> {
        let n = basis.n();
        if team.pairs.len() != n {
            return Err(MatInnerError::TeamSize {
                expected: n,
                got: team.pairs.len(),
            });
        }
        let sym = symmetry_defect(basis, p);
        if sym > 1e-8 {
            return Err(MatInnerError::Symmetry(sym));
        }
        let kernels = point_kernels(basis, p)?;
        let kv = kernel_vector_with(basis, p, &kernels, b)?;
        let tau = kv.tau.clone();
        let mut terms = vec![(tau[0], kernels[0].clone(), eye())];
        for i in 1..=n {
            let conj = basis.point_kernel(p.points[i].conj()).map_err(TestFnError::from)?;
            terms.push((tau[i], kernels[i].clone(), team.pairs[i - 1].0));
            terms.push((tau[i], conj, team.pairs[i - 1].1));
        }
        let degree = basis.solver().config().degree;
        let mut entries = Vec::with_capacity(4);
        for k in 0..2 {
            for l in 0..2 {
                let t: Vec<(f64, PointKernel)> = terms
                    .iter()
                    .filter(|(_, _, pr)| pr[(k, l)].norm() > 0.0)
                    .map(|(w, pk, pr)| (w * pr[(k, l)].re, pk.clone()))
                    .collect();
                entries.push(HerglotzSum::new(basis.domain(), degree, t, b, 1e-7)?);
            }
        }
        Ok(Self {
            team: team.clone(),
            p: p.clone(),
            b,
            tau,
            entries,
            terms,
        })
    }

    /// `H_{S,p}(z)`.
    pub fn h(&self, z: C64) -> M2 {
        let mut m = M2::zeros();
        for (w, pk, pr) in &self.terms {
            m += pr * c(w * pk.value(z));
        }
        m
    }

    /// Periods of `⟨H x, x⟩` for a unit vector `x`.
    pub fn periods(&self, basis: &HarmonicBasis, x: [C64; 2]) -> Vec<f64> {
        let xv = nalgebra::Vector2::new(x[0], x[1]);
        (1..=basis.n())
            .map(|j| {
                self.terms
                    .iter()
                    .map(|(w, pk, pr)| w * basis.q(j, pk.at) * (xv.adjoint() * pr * xv)[(0, 0)].re)
                    .sum()
            })
            .collect()
    }

    pub fn g(&self, z: C64) -> M2 {
        M2::new(
            self.entries[0].eval(z),
            self.entries[1].eval(z),
            self.entries[2].eval(z),
            self.entries[3].eval(z),
        )
    }

    pub fn eval(&self, z: C64) -> M2 {
        let g = self.g(z);
        match (g + eye()).try_inverse() {
            Some(inv) => (g - eye()) * inv,
            None => M2::from_element(c(f64::NAN)),
        }
    }

    pub fn det(&self, z: C64) -> C64 {
        self.eval(z).determinant()
    }

    /// Boundary points where `G` has poles: `p_0^-`, `p_i`, `p̄_i`.
    pub fn support(&self) -> Vec<BoundaryPoint> {
        self.terms.iter().map(|(_, pk, _)| pk.at).collect()
    }

    /// Boundary value at `q` by three-level Richardson extrapolation along the inward
    /// normal; the first step is `h0` times the radius of the carrying circle.
    pub fn radial_limit(&self, domain: &CircularDomain, q: BoundaryPoint, h0: f64) -> M2 {
        let h0 = h0 * domain.curve(q.curve).radius;
        let z = q.point(domain);
        let inward = -q.normal(domain);
        let f = |h: f64| self.eval(z + inward * h);
        let (f1, f2, f4) = (f(h0), f(h0 / 2.0), f(h0 / 4.0));
        (f4 * c(8.0) - f2 * c(6.0) + f1) / c(3.0)
    }
}

/// Verification data for a built `Ψ`.
#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    /// `‖H(b) − I‖`.
    pub h_at_b: f64,
    /// Largest period of `⟨Hx, x⟩` over sample unit vectors.
    pub period: f64,
    /// `max ‖Ψ Ψ* − I‖` on boundary samples away from the support.
    pub unitarity: f64,
    pub psi_b: f64,
    /// `‖Ψ(p_0^-) − I‖` from the radial limit.
    pub psi_base: f64,
    /// `max ‖Ψ(p_i) P^{i+} − P^{i+}‖`, `‖Ψ(p̄_i) P^{i−} − P^{i−}‖` from radial limits.
    pub pinning: f64,
    /// `max ‖Ψ(z)‖` over interior samples.
    pub max_norm: f64,
}

pub fn check_psi(basis: &HarmonicBasis, psi: &MatrixInner) -> PsiReport {
    let d = basis.domain();
    let xs = [
        [c(1.0), c(0.0)],
        [c(0.0), c(1.0)],
        [c(0.6), C64::new(0.0, 0.8)],
        [c(0.8), c(-0.6)],
    ];
    let period = xs
        .iter()
        .flat_map(|x| psi.periods(basis, *x))
        .fold(0.0, |a: f64, v| a.max(v.abs()));
    let support: Vec<C64> = psi.support().iter().map(|q| q.point(d)).collect();
    let mut unitarity: f64 = 0.0;
    for s in d.boundary_grid(64).expect("grid size") {
        if support.iter().all(|q| (q - s.point).norm() > 0.05) {
            let m = psi.eval(s.point);
            unitarity = unitarity.max(m2_norm(&(m * m.adjoint() - eye())));
        }
    }
    let h0 = 1e-3;
    let psi_base = m2_norm(&(psi.radial_limit(d, psi.p.points[0], h0) - eye()));
    let mut pinning: f64 = 0.0;
    for i in 1..=basis.n() {
        let (pp, pm) = psi.team.pairs[i - 1];
        let a = psi.radial_limit(d, psi.p.points[i], h0);
        let b = psi.radial_limit(d, psi.p.points[i].conj(), h0);
        pinning = pinning.max(m2_norm(&(a * pp - pp))).max(m2_norm(&(b * pm - pm)));
    }
    let max_norm = interior_samples(d, 100, 1e-3, 21)
        .iter()
        .map(|&z| m2_norm(&psi.eval(z)))
        .fold(0.0, f64::max);
    PsiReport {
        h_at_b: m2_norm(&(psi.h(psi.b) - eye())),
        period,
        unitarity,
        psi_b: m2_norm(&psi.eval(psi.b)),
        psi_base,
        pinning,
        max_norm,
    }
}

/// Zeros of `det Ψ` with multiplicity; `2n + 2` of them.
pub fn det_zeros(basis: &HarmonicBasis, psi: &MatrixInner) -> Result<ZeroReport, MatInnerError> {
    let f = |z: C64| psi.det(z);
    Ok(find_zeros(basis.domain(), &f, None, Some(2 * basis.n() + 2))?)
}

/// Zero data of a matrix inner function and the three genericity conditions.
#[derive(Debug, Clone, Serialize)]
pub struct StandardZeroSet {
    pub b: C64,
    pub a: Vec<C64>,
    pub gamma: Vec<[C64; 2]>,
    /// Smallest gap between distinct zeros, including `b`.
    pub distinct_margin: f64,
    /// Multiplicity of `b` and whether the other zeros are simple.
    pub b_multiplicity: usize,
    pub simple: bool,
    /// Largest smallest singular value of `Ψ(a_j)`.
    pub null_sigma: f64,
    /// Largest number of `γ_j` on one complex line.
    pub max_collinear: usize,
    /// `min |a_j − z_i|`.
    pub critical_margin: f64,
    pub pass: bool,
    pub violations: Vec<String>,
}

/// Unit left-singular vector of `m` for its smallest singular value, and that value.
fn left_null(m: &M2) -> ([C64; 2], f64) {
    let svd = m.svd(true, false);
    let u = svd.u.expect("u requested");
    let k = if svd.singular_values[0] <= svd.singular_values[1] { 0 } else { 1 };
    let mut g = [u[(0, k)], u[(1, k)]];
    // fix the phase so the larger entry is real positive
    let big = if g[0].norm() >= g[1].norm() { g[0] } else { g[1] };
    let ph = big.conj() / big.norm();
    g = [g[0] * ph, g[1] * ph];
    (g, svd.singular_values[k])
}

pub fn standard_zero_set(
    psi: &MatrixInner,
    zeros: &ZeroReport,
    crit: &CriticalPoints,
) -> StandardZeroSet {
    let n = crit.points.len();
    let mut violations = vec![];
    let (bz, others): (Vec<&crate::zeros::Zero>, Vec<&crate::zeros::Zero>) =
        zeros.zeros.iter().partition(|z| (z.z - psi.b).norm() < 1e-6);
    let b_multiplicity: usize = bz.iter().map(|z| z.multiplicity).sum();
    if b_multiplicity != 2 {
        violations.push(format!("b has multiplicity {b_multiplicity}, expected 2"));
    }
    let simple = others.iter().all(|z| z.multiplicity == 1);
    if !simple {
        violations.push("a zero of det Ψ away from b is not simple".into());
    }
    let a: Vec<C64> = others.iter().map(|z| z.z).collect();
    if a.len() != 2 * n {
        violations.push(format!("{} zeros away from b, expected {}", a.len(), 2 * n));
    }
    let mut all = a.clone();
    all.push(psi.b);
    let mut distinct_margin = f64::INFINITY;
    for i in 0..all.len() {
        for k in i + 1..all.len() {
            distinct_margin = distinct_margin.min((all[i] - all[k]).norm());
        }
    }
    if !(distinct_margin > 1e-6) {
        violations.push(format!("zeros not distinct (gap {distinct_margin:.3e})"));
    }
    let mut gamma = vec![];
    let mut null_sigma: f64 = 0.0;
    for &aj in &a {
        let (g, s) = left_null(&psi.eval(aj));
        gamma.push(g);
        null_sigma = null_sigma.max(s);
    }
    if null_sigma > 1e-6 {
        violations.push(format!("Ψ(a_j) not singular (σ_min {null_sigma:.3e})"));
    }
    let line = |x: &[C64; 2], y: &[C64; 2]| (x[0] * y[1] - x[1] * y[0]).norm() < 1e-6;
    let max_collinear = gamma
        .iter()
        .map(|g| gamma.iter().filter(|h| line(g, h)).count())
        .max()
        .unwrap_or(0);
    if max_collinear > n {
        violations.push(format!("{max_collinear} null vectors on one line"));
    }
    let critical_margin = a
        .iter()
        .flat_map(|aj| crit.points.iter().map(move |z| (aj - z).norm()))
        .fold(f64::INFINITY, f64::min);
    if !(critical_margin > 1e-3) {
        violations.push(format!("a zero is within {critical_margin:.3e} of a critical point"));
    }
    StandardZeroSet {
        b: psi.b,
        a,
        gamma,
        distinct_margin,
        b_multiplicity,
        simple,
        null_sigma,
        max_collinear,
        critical_margin,
        pass: violations.is_empty(),
        violations,
    }
}

/// Orders the zero set so the `n` null vectors closest to `e_1` come first.
pub fn split_by_direction(szs: &StandardZeroSet) -> (Vec<C64>, Vec<[C64; 2]>) {
    let mut idx: Vec<usize> = (0..szs.a.len()).collect();
    idx.sort_by(|&i, &j| szs.gamma[j][0].norm().total_cmp(&szs.gamma[i][0].norm()).then(i.cmp(&j)));
    (idx.iter().map(|&i| szs.a[i]).collect(), idx.iter().map(|&i| szs.gamma[i]).collect())
}

/// One step of the perturbation scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanEntry {
    pub t: f64,
    pub zero_count: usize,
    pub szs_pass: bool,
    pub violations: Vec<String>,
    pub epsilon: Option<EpsilonReport>,
}

/// Outcome of the downward scan over `t`.
#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    pub selected: f64,
    pub szs: StandardZeroSet,
    pub zeros: ZeroReport,
    pub epsilon: EpsilonReport,
}

/// Largest `t` in `ts` (scanned in the given order) whose `Ψ_{S_t}` has a standard
/// zero set and passes the residue-matrix condition.
pub fn perturbation_scan(
    basis: &HarmonicBasis,
    p: &PiPoint,
    b: C64,
    theta: &FayTheta,
    crit: &CriticalPoints,
    ts: &[f64],
) -> Result<(ScanReport, MatrixInner), MatInnerError> {
    let n = basis.n();
    let mut entries = vec![];
    let mut last = String::from("empty scan");
    for &t in ts {
        let psi = MatrixInner::build(basis, &Team::rotated(n, t), p, b)?;
        let zeros = match det_zeros(basis, &psi) {
            Ok(z) => z,
            Err(e) => {
                last = format!("t = {t}: {e}");
                entries.push(ScanEntry {
                    t,
                    zero_count: 0,
                    szs_pass: false,
                    violations: vec![e.to_string()],
                    epsilon: None,
                });
                continue;
            }
        };
        let szs = standard_zero_set(&psi, &zeros, crit);
        let mut entry = ScanEntry {
            t,
            zero_count: zeros.total(),
            szs_pass: szs.pass,
            violations: szs.violations.clone(),
            epsilon: None,
        };
        if szs.pass {
            let (a, g) = split_by_direction(&szs);
            match epsilon_matrices(theta, crit, &a, &g) {
                Ok(eps) => {
                    entry.epsilon = Some(eps.clone());
                    if eps.holds {
                        entries.push(entry);
                        return Ok((
                            ScanReport {
                                entries,
                                selected: t,
                                szs,
                                zeros,
                                epsilon: eps,
                            },
                            psi,
                        ));
                    }
                    last = format!("t = {t}: residue condition fails (cond {:.3e})", eps.cond_f);
                }
                Err(e) => last = format!("t = {t}: {e}"),
            }
        } else {
            last = format!("t = {t}: {}", szs.violations.join("; "));
        }
        entries.push(entry);
    }
    Err(MatInnerError::ScanExhausted(last))
}

/// Default scan: `0.10, 0.09, …, 0.01`.
pub fn default_scan() -> Vec<f64> {
    (1..=10).rev().map(|k| k as f64 / 100.0).collect()
}

/// Outcome of the joint-diagonalization attempt.
#[derive(Debug, Clone, Serialize)]
pub enum Diagonalization {
    Success {
        u: [[C64; 2]; 2],
        v: [[C64; 2]; 2],
        /// `(φ_1(z), φ_2(z))` at the samples.
        diagonal: Vec<[C64; 2]>,
        /// Largest off-diagonal residual of `U* C(z,w) U`.
        residual: f64,
    },
    Witness {
        /// Largest `‖[C(z,w), C(z′,w′)]‖`.
        commutator: f64,
        residual: f64,
    },
    Inconclusive {
        gap: f64,
    },
}

impl Diagonalization {
    pub fn is_success(&self) -> bool {
        matches!(self, Diagonalization::Success { .. })
    }
}

fn to_arr(m: &M2) -> [[C64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Tries to write `F(z) = U diag(φ_1, φ_2)(z) V` with constant unitaries.
pub fn attempt_diagonalize(f: &dyn Fn(C64) -> M2, samples: &[C64]) -> Result<Diagonalization, MatInnerError> {
    if samples.len() < 6 {
        return Err(MatInnerError::TooFewSamples);
    }
    let vals: Vec<M2> = samples.iter().map(|&z| f(z)).collect();
    let mut cs = vec![];
    for x in &vals {
        for y in &vals {
            cs.push(x * y.adjoint());
        }
    }
    // Hermitian members C(z, z) carry the eigenbasis
    let mut best: Option<(f64, CMat)> = None;
    for x in &vals {
        let h = x * x.adjoint();
        let hd = CMat::from_fn(2, 2, |i, j| h[(i, j)]);
        let (ev, vecs) = hermitian_eigh(&hd);
        let gap = ev[1] - ev[0];
        if best.as_ref().is_none_or(|b| gap > b.0) {
            best = Some((gap, vecs));
        }
    }
    let (gap, vecs) = best.expect("non-empty samples");
    if gap < 1e-8 {
        return Ok(Diagonalization::Inconclusive { gap });
    }
    let u = M2::new(vecs[(0, 0)], vecs[(0, 1)], vecs[(1, 0)], vecs[(1, 1)]);
    let residual = cs
        .iter()
        .map(|cm| {
            let d = u.adjoint() * cm * u;
            d[(0, 1)].norm().max(d[(1, 0)].norm())
        })
        .fold(0.0, f64::max);
    if residual < 1e-6 {
        // rows of U* F(z) are φ_k(z) times the rows of V
        let mut v = M2::zeros();
        for k in 0..2 {
            let (row, _) = vals
                .iter()
                .map(|x| {
                    let r = u.adjoint() * x;
                    let row = [r[(k, 0)], r[(k, 1)]];
                    let nrm = (row[0].norm_sqr() + row[1].norm_sqr()).sqrt();
                    (row, nrm)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty samples");
            let nrm = (row[0].norm_sqr() + row[1].norm_sqr()).sqrt();
            let big = if row[0].norm() >= row[1].norm() { row[0] } else { row[1] };
            let ph = big.conj() / big.norm();
            v[(k, 0)] = row[0] * ph / nrm;
            v[(k, 1)] = row[1] * ph / nrm;
        }
        let diagonal = vals
            .iter()
            .map(|x| {
                let d = u.adjoint() * x * v.adjoint();
                [d[(0, 0)], d[(1, 1)]]
            })
            .collect();
        return Ok(Diagonalization::Success {
            u: to_arr(&u),
            v: to_arr(&v),
            diagonal,
            residual,
        });
    }
    let mut commutator: f64 = 0.0;
    for a in &cs {
        for b in &cs {
            commutator = commutator.max(m2_norm(&(a * b - b * a)));
        }
    }
    Ok(Diagonalization::Witness { commutator, residual })
}

/// The Pick matrix `((I − F(z)F(w)*) K(z, w))_{z,w ∈ S}` and its numerical rank.
#[derive(Debug, Clone, Serialize)]
pub struct PickReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub min_eigenvalue: f64,
    pub threshold: f64,
}

pub fn pick_matrix(f: &dyn Fn(C64) -> M2, k: &dyn Kernel, s: &[C64]) -> (CMat, PickReport) {
    let n = s.len();
    let fv: Vec<M2> = s.iter().map(|&z| f(z)).collect();
    let mut m = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let blk = (eye() - fv[i] * fv[j].adjoint()) * k.k(s[i], s[j]);
            for a in 0..2 {
                for b in 0..2 {
                    m[(2 * i + a, 2 * j + b)] = blk[(a, b)];
                }
            }
        }
    }
    let sv = singular_values(&m);
    let threshold = 1e-8;
    let rank = sv.iter().filter(|&&x| x > threshold * sv[0]).count();
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let min_eigenvalue = hermitian_eigh(&h).0[0];
    (
        m,
        PickReport {
            singular_values: sv,
            rank,
            min_eigenvalue,
            threshold,
        },
    )
}

/// Both scalar members of the trivial-team function: `ψ_p` and `ψ_{ϖ(p)}`.
pub fn diagonal_members(
    basis: &HarmonicBasis,
    p: &PiPoint,
    b: C64,
) -> Result<(TestFunction, TestFunction), MatInnerError> {
    let a = crate::testfn::test_function(basis, p, b)?;
    let w = crate::testfn::test_function(basis, &p.conj(), b)?;
    Ok((a, w))
}

/// `max ‖Ψ_1(z) − Ψ_2(z)‖` over points.
pub fn uniform_gap(a: &MatrixInner, b: &MatrixInner, pts: &[C64]) -> f64 {
    pts.iter().map(|&z| m2_norm(&(a.eval(z) - b.eval(z)))).fold(0.0, f64::max)
}

/// Unimodular multiple of a matrix function.
pub fn rotated_fn(u: C64, f: &MatrixInner) -> impl Fn(C64) -> M2 + '_ {
    move |z| f.eval(z) * u
}

/// Angle of a phase used in checks.
pub fn unit(theta: f64) -> C64 {
    C64::from_polar(1.0, theta * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::HarmonicConfig;
    use std::sync::OnceLock;

    struct Fx {
        basis: HarmonicBasis,
        p: PiPoint,
        b: C64,
    }

    fn fx() -> &'static Fx {
        static F: OnceLock<Fx> = OnceLock::new();
        F.get_or_init(|| {
            let basis = HarmonicBasis::new(&CircularDomain::reference(), HarmonicConfig::default()).unwrap();
            let p = PiPoint::from_angles(&[PI, 1.9, 1.2]);
            Fx {
                basis,
                p,
                b: C64::new(0.0, 0.0),
            }
        })
    }

    #[test]
    fn team_geometry() {
        let s0 = Team::trivial(2);
        assert!(s0.defect() < 1e-12);
        let st = Team::rotated(2, 0.05);
        assert!(st.defect() < 1e-12);
        assert!(st.distance(&s0) >= 1e-3);
        let slope = Team::rotated(2, 0.01).distance(&s0) / 0.01;
        assert!((slope - 1.0).abs() < 0.2);
    }

    #[test]
    fn trivial_team_is_diagonal() {
        let f = fx();
        let psi = MatrixInner::build(&f.basis, &Team::trivial(2), &f.p, f.b).unwrap();
        let (a, w) = diagonal_members(&f.basis, &f.p, f.b).unwrap();
        for z in interior_samples(f.basis.domain(), 50, 0.02, 3) {
            let m = psi.eval(z);
            assert!((m[(0, 0)] - a.eval(z)).norm() < 1e-6);
            assert!((m[(1, 1)] - w.eval(z)).norm() < 1e-6);
            assert!(m[(0, 1)].norm() < 1e-6 && m[(1, 0)].norm() < 1e-6);
        }
        let rep = check_psi(&f.basis, &psi);
        assert!(rep.h_at_b < 1e-8 && rep.period < 1e-7);
        assert!(rep.unitarity < 1e-6 && rep.psi_b < 1e-8);
        assert!(rep.psi_base < 1e-6 && rep.pinning < 1e-6, "{rep:?}");
        assert!(rep.max_norm <= 1.0 + 1e-8);
    }

    #[test]
    fn perturbed_team_properties() {
        let f = fx();
        let psi = MatrixInner::build(&f.basis, &Team::rotated(2, 0.05), &f.p, f.b).unwrap();
        let rep = check_psi(&f.basis, &psi);
        assert!(rep.unitarity < 1e-6 && rep.psi_b < 1e-8);
        assert!(rep.psi_base < 1e-6 && rep.pinning < 1e-6, "{rep:?}");
        let z = det_zeros(&f.basis, &psi).unwrap();
        assert_eq!(z.total(), 6);
        let samples = interior_samples(f.basis.domain(), 8, 0.1, 4);
        let d = attempt_diagonalize(&|z| psi.eval(z), &samples).unwrap();
        match d {
            Diagonalization::Witness { commutator, .. } => assert!(commutator >= 1e-4),
            other => panic!("expected a witness, got {other:?}"),
        }
    }

    #[test]
    fn trivial_team_diagonalizes() {
        let f = fx();
        let psi = MatrixInner::build(&f.basis, &Team::trivial(2), &f.p, f.b).unwrap();
        let samples = interior_samples(f.basis.domain(), 8, 0.1, 4);
        let u = C64::from_polar(1.0, 0.7);
        let plain = |z: C64| psi.eval(z);
        let turned = |z: C64| psi.eval(z) * u;
        assert!(attempt_diagonalize(&plain, &samples).unwrap().is_success());
        assert!(attempt_diagonalize(&turned, &samples).unwrap().is_success());
    }
}

//! Discretized Agler cone: feasibility of `I − ρ² F(z)F(w)*` as a positive
//! combination of `(1 − ψ_k(z) conj ψ_k(w)) ⊙ Γ_k(z, w)` over a family of test
//! functions and a finite node set, the `ρ` bisection, scalar decompositions,
//! and unitary colligations realizing `F` as a transfer function.

use crate::harmonic::HarmonicBasis;
use crate::jacobian::{interior_samples, ser_cmat};
use crate::linalg::{hermitian_eigh, CMat};
use crate::sdp::{inner, HadamardSdp, SdpConfig, SdpStatus};
use crate::testfn::{test_function, PiPoint, TestFunction};
use crate::C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("node set has {got} points, at least {min} required")]
    TooFewNodes { min: usize, got: usize },
    #[error("no test function could be built")]
    EmptyFamily,
    #[error("function values have inconsistent shape")]
    Shape,
    #[error("infeasible at the lower bisection end ρ = {rho} (residual {residual:.3e})")]
    LowerInfeasible { rho: f64, residual: f64 },
    #[error("Gram mismatch {0:.3e} exceeds 1e-8")]
    GramMismatch(f64),
    #[error("|ρ| exceeds 1 on the nodes ({0:.6})")]
    NotContractive(f64),
    #[error("resolvent is near-singular at {0}")]
    Resolvent(C64),
}

/// A test function of the family, with its values on the nodes.
#[derive(Debug, Clone, Serialize)]
pub struct ConeMember {
    pub label: String,
    pub p: PiPoint,
    pub values: Vec<C64>,
}

/// Test-function family and node set.
#[derive(Debug, Clone, Serialize)]
pub struct ConeDiscretization {
    pub nodes: Vec<C64>,
    pub members: Vec<ConeMember>,
    pub skipped: Vec<String>,
    pub grid: usize,
    #[serde(skip)]
    functions: Vec<TestFunction>,
}

impl ConeDiscretization {
    /// Grid `(p̃_0, q_1, …, q_n)` with `grid` half-offset angles per hole, followed by
    /// the distinguished `ψ_p` and `ψ_{ϖ(p)}`; nodes are `zero_set` plus `extra`
    /// seeded interior points.
    pub fn build(
        basis: &HarmonicBasis,
        b: C64,
        p: &PiPoint,
        zero_set: &[C64],
        grid: usize,
        extra: usize,
        seed: u64,
    ) -> Result<Self, ConeError> {
        let n = basis.n();
        let domain = basis.domain();
        let mut nodes = zero_set.to_vec();
        if !nodes.iter().any(|z| (z - b).norm() < 1e-12) {
            nodes.push(b);
        }
        let mut added = 0;
        for z in interior_samples(domain, 4 * extra + 8, 0.05, seed) {
            if added == extra {
                break;
            }
            if nodes.iter().all(|w| (z - w).norm() > 0.05) {
                nodes.push(z);
                added += 1;
            }
        }
        if nodes.len() < 2 * n + 3 {
            return Err(ConeError::TooFewNodes {
                min: 2 * n + 3,
                got: nodes.len(),
            });
        }
        let p0 = p.points[0].angle;
        let mut params: Vec<(String, PiPoint)> = vec![];
        let total = grid.pow(n as u32);
        for idx in 0..total {
            let mut angles = vec![p0];
            let mut r = idx;
            let mut tag = vec![];
            for _ in 0..n {
                let k = r % grid;
                r /= grid;
                angles.push(2.0 * PI * (k as f64 + 0.5) / grid as f64);
                tag.push(k.to_string());
            }
            params.push((format!("grid[{}]", tag.join(",")), PiPoint::from_angles(&angles)));
        }
        params.push(("psi_p".into(), p.clone()));
        params.push(("psi_conj_p".into(), p.conj()));
        let built: Vec<_> = params
            .par_iter()
            .map(|(label, q)| (label.clone(), q.clone(), test_function(basis, q, b)))
            .collect();
        let mut members = vec![];
        let mut functions = vec![];
        let mut skipped = vec![];
        for (label, q, f) in built {
            match f {
                Ok(f) => {
                    members.push(ConeMember {
                        label,
                        p: q,
                        values: nodes.iter().map(|&z| f.eval(z)).collect(),
                    });
                    functions.push(f);
                }
                Err(e) => skipped.push(format!("{label}: {e}")),
            }
        }
        if members.is_empty() {
            return Err(ConeError::EmptyFamily);
        }
        Ok(Self {
            nodes,
            members,
            skipped,
            grid,
            functions,
        })
    }

    /// Same family restricted to the given member indices.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            nodes: self.nodes.clone(),
            members: keep.iter().map(|&k| self.members[k].clone()).collect(),
            skipped: self.skipped.clone(),
            grid: self.grid,
            functions: keep.iter().map(|&k| self.functions[k].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Index of a member by label.
    pub fn find(&self, label: &str) -> Option<usize> {
        self.members.iter().position(|m| m.label == label)
    }

    pub fn member_eval(&self, k: usize, z: C64) -> C64 {
        self.functions[k].eval(z)
    }

    /// `1 − ψ_k(z_i) conj ψ_k(z_j)`.
    pub fn weight(&self, k: usize) -> CMat {
        let v = &self.members[k].values;
        CMat::from_fn(v.len(), v.len(), |i, j| C64::new(1.0, 0.0) - v[i] * v[j].conj())
    }
}

/// Values of `F` on the nodes, each `m × m`.
pub type Values = Vec<CMat>;

fn block_dim(f: &Values) -> Result<usize, ConeError> {
    let m = f.first().ok_or(ConeError::Shape)?.nrows();
    if f.iter().any(|x| x.nrows() != m || x.ncols() != m) {
        return Err(ConeError::Shape);
    }
    Ok(m)
}

/// `I − ρ² F(z_i)F(z_j)*` as an `Nm × Nm` block matrix.
pub fn target(f: &Values, rho: f64) -> CMat {
    let m = f[0].nrows();
    let n = f.len();
    let mut t = CMat::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..n {
            let blk = CMat::identity(m, m) - &f[i] * f[j].adjoint() * C64::new(rho * rho, 0.0);
            t.view_mut((i * m, j * m), (m, m)).copy_from(&blk);
        }
    }
    t
}

fn hadamard_expanded(w: &CMat, x: &CMat, m: usize) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |a, b| w[(a / m, b / m)] * x[(a, b)])
}

/// `Σ_k W_k ⊙ Γ_k` over the certificate's members.
pub fn combination(disc: &ConeDiscretization, m: usize, gammas: &[(usize, CMat)]) -> CMat {
    let nm = disc.nodes.len() * m;
    let mut acc = CMat::zeros(nm, nm);
    for (k, g) in gammas {
        acc += hadamard_expanded(&disc.weight(*k), g, m);
    }
    acc
}

/// PSD blocks `Γ_k` with the relative residual they achieve.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub rho: f64,
    pub m: usize,
    /// `(member index, Γ_k)` for members with nonzero trace.
    #[serde(serialize_with = "ser_gammas")]
    pub gammas: Vec<(usize, CMat)>,
    /// `‖Σ_k W_k ⊙ Γ_k − T‖_F / ‖T‖_F`.
    pub residual: f64,
    /// Smallest eigenvalue over all `Γ_k`.
    pub min_eigenvalue: f64,
}

fn ser_gammas<S: serde::Serializer>(g: &[(usize, CMat)], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    #[derive(Serialize)]
    struct Entry<'a> {
        member: usize,
        #[serde(serialize_with = "ser_cmat")]
        gamma: &'a CMat,
    }
    let mut seq = s.serialize_seq(Some(g.len()))?;
    for (k, m) in g {
        seq.serialize_element(&Entry { member: *k, gamma: m })?;
    }
    seq.end()
}

/// Relative residual of `gammas` against `I − ρ²FF*`.
pub fn certificate_residual(disc: &ConeDiscretization, f: &Values, rho: f64, gammas: &[(usize, CMat)]) -> f64 {
    let m = f[0].nrows();
    let t = target(f, rho);
    (combination(disc, m, gammas) - &t).norm() / t.norm()
}

/// Recomputes a certificate's residual from its blocks.
pub fn verify(disc: &ConeDiscretization, f: &Values, cert: &Certificate) -> f64 {
    certificate_residual(disc, f, cert.rho, &cert.gammas)
}

fn min_eig(gammas: &[(usize, CMat)]) -> f64 {
    gammas
        .iter()
        .map(|(_, g)| hermitian_eigh(&((g + g.adjoint()) * C64::new(0.5, 0.0))).0[0])
        .fold(f64::INFINITY, f64::min)
}

fn make_certificate(disc: &ConeDiscretization, f: &Values, rho: f64, gammas: Vec<(usize, CMat)>) -> Certificate {
    let residual = certificate_residual(disc, f, rho, &gammas);
    Certificate {
        rho,
        m: f[0].nrows(),
        min_eigenvalue: min_eig(&gammas),
        gammas,
        residual,
    }
}

/// Exact certificate when `F` is a member (scalar) or the diagonal of two members.
pub fn member_certificate(disc: &ConeDiscretization, f: &Values, rho: f64) -> Option<Certificate> {
    let m = f[0].nrows();
    let n = disc.nodes.len();
    let close = |k: usize, r: usize| {
        f.iter()
            .zip(&disc.members[k].values)
            .all(|(x, v)| (x[(r, r)] - v).norm() < 1e-6)
    };
    let offdiag = f.iter().all(|x| {
        (0..m).all(|a| (0..m).all(|c| a == c || x[(a, c)].norm() < 1e-6))
    });
    if !offdiag {
        return None;
    }
    let mut gammas = vec![];
    for r in 0..m {
        let k = (0..disc.len()).find(|&k| close(k, r))?;
        let mut g = CMat::zeros(n * m, n * m);
        for i in 0..n {
            for j in 0..n {
                g[(i * m + r, j * m + r)] = C64::new(rho * rho, 0.0);
            }
        }
        gammas.push((k, g));
    }
    // I − ρ² ψψ̄ = (1 − ρ²) + ρ²(1 − ψψ̄); the constant part needs its own generator
    if rho < 1.0 {
        return None;
    }
    Some(make_certificate(disc, f, rho, gammas))
}

/// Settings for the interior-point solve, certificate extraction and bisection.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub sdp: SdpConfig,
    /// Feasible iff the relative residual is below this.
    pub feasible_tol: f64,
    /// Face polishing stops once the relative residual is below this.
    pub target_tol: f64,
    pub width: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sdp: SdpConfig::default(),
            feasible_tol: 1e-6,
            target_tol: 1e-11,
            width: 0.005,
        }
    }
}

/// `max s` with `Σ_k W_k ⊙ Γ_k + s·FF* = J ⊗ I`; `ρ̂² = s*` on the discretization.
#[derive(Debug, Clone, Serialize)]
pub struct ConeSolve {
    pub s_star: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    #[serde(skip)]
    pub gammas: Vec<(usize, CMat)>,
    /// Separating kernel `Y`: `⟨FF*, Y⟩ = 1`, `W̄_k ⊙ Y ⪰ 0`, `⟨J ⊗ I, Y⟩ = s*`.
    #[serde(serialize_with = "ser_cmat")]
    pub kernel: CMat,
    /// `min_k λ_min(W̄_k ⊙ Y) / ‖Y‖_F`.
    pub kernel_min_eigenvalue: f64,
    /// `⟨J ⊗ I, Y⟩ / ⟨FF*, Y⟩`, an upper bound on `ρ̂²` whenever `Y` is dual feasible.
    pub dual_bound: f64,
}

impl ConeSolve {
    /// Upper bound on `ρ̂` from the separating kernel, when it is dual feasible.
    pub fn rho_upper_bound(&self) -> Option<f64> {
        (self.kernel_min_eigenvalue >= -KERNEL_TOL && self.dual_bound > 0.0).then(|| self.dual_bound.sqrt())
    }
}

/// Relative eigenvalue slack tolerated in `W̄_k ⊙ Y ⪰ 0`.
pub const KERNEL_TOL: f64 = 1e-12;

fn expanded_values(disc: &ConeDiscretization, k: usize, m: usize) -> Vec<C64> {
    disc.members[k].values.iter().flat_map(|&v| std::iter::repeat(v).take(m)).collect()
}

/// Solves the cone program for `F` on the discretization.
pub fn cone_solve(disc: &ConeDiscretization, f: &Values, cfg: &SolverConfig) -> Result<ConeSolve, ConeError> {
    let m = block_dim(f)?;
    if f.len() != disc.nodes.len() {
        return Err(ConeError::Shape);
    }
    let u: Vec<Vec<C64>> = (0..disc.len()).map(|k| expanded_values(disc, k, m)).collect();
    let t = target(f, 0.0);
    let g = &t - target(f, 1.0);
    let sol = HadamardSdp { u: &u, g: &g, t: &t }.solve(&cfg.sdp);
    let ynorm = sol.y.norm().max(1e-300);
    let kernel_min_eigenvalue = (0..disc.len())
        .map(|k| {
            let z = hadamard_expanded(&disc.weight(k).map(|v| v.conj()), &sol.y, m);
            hermitian_eigh(&z).0[0] / ynorm
        })
        .fold(f64::INFINITY, f64::min);
    let dual_bound = inner(&t, &sol.y) / inner(&g, &sol.y);
    let gammas = sol
        .x
        .into_iter()
        .enumerate()
        .filter(|(_, x)| x.trace().re > 0.0)
        .collect();
    Ok(ConeSolve {
        s_star: sol.s,
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        gammas,
        kernel: sol.y,
        kernel_min_eigenvalue,
        dual_bound,
    })
}

/// Member with the smallest node supremum, for the exact certificate of `J ⊗ I`.
fn szego_member(disc: &ConeDiscretization) -> usize {
    let sup = |k: usize| disc.members[k].values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    (0..disc.len()).min_by(|&a, &b| sup(a).total_cmp(&sup(b))).expect("nonempty family")
}

/// `(1 − ψ(z)conj ψ(w))^{-1} ⊗ I`, whose weighted image is `J ⊗ I`.
fn szego_block(disc: &ConeDiscretization, k: usize, m: usize) -> CMat {
    let u = expanded_values(disc, k, m);
    CMat::from_fn(u.len(), u.len(), |a, b| {
        if a % m == b % m {
            C64::new(1.0, 0.0) / (C64::new(1.0, 0.0) - u[a] * u[b].conj())
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Certificate at `ρ`: for `ρ² ≤ s*` the exact blend `(ρ²/s*)Γ* + (1 − ρ²/s*)·(J ⊗ I certificate)`,
/// otherwise `Γ*` itself; then polished on its dominant face when that lowers the rank.
pub fn certificate_at(
    disc: &ConeDiscretization,
    f: &Values,
    solve: &ConeSolve,
    rho: f64,
    cfg: &SolverConfig,
) -> Certificate {
    let m = f[0].nrows();
    let r2 = rho * rho;
    let mut gammas = solve.gammas.clone();
    if solve.s_star > 0.0 && r2 < solve.s_star {
        let lam = r2 / solve.s_star;
        for (_, g) in gammas.iter_mut() {
            *g *= C64::new(lam, 0.0);
        }
        let k0 = szego_member(disc);
        let extra = szego_block(disc, k0, m) * C64::new(1.0 - lam, 0.0);
        match gammas.iter_mut().find(|(k, _)| *k == k0) {
            Some((_, g)) => *g += extra,
            None => gammas.push((k0, extra)),
        }
    }
    let mut cert = make_certificate(disc, f, rho, gammas);
    let t = target(f, rho);
    let goal = 0.1 * cfg.target_tol * t.norm();
    for delta in [1e-5, 1e-7] {
        if let Some(g) = polish_on_face(disc, &t, m, &cert.gammas, delta, goal) {
            let c = make_certificate(disc, f, rho, g);
            if c.residual <= cfg.target_tol.max(cert.residual) && c.min_eigenvalue >= -1e-12 {
                cert = c;
                break;
            }
        }
    }
    cert
}

/// Lower bound on the relative distance from `I − ρ²FF*` to the discretized cone,
/// from the separating kernel: `−⟨T, Y⟩ / (‖T‖_F ‖Y‖_F)`, clipped at zero.
pub fn residual_floor(f: &Values, solve: &ConeSolve, rho: f64) -> f64 {
    let t = target(f, rho);
    let v = -inner(&t, &solve.kernel) / (t.norm() * solve.kernel.norm());
    v.max(0.0)
}

/// Real coordinates of a Hermitian matrix: diagonal, then real and imaginary parts of
/// the strict upper triangle, row by row.
fn hermitian_coords(x: &CMat, out: &mut Vec<f64>) {
    let nm = x.nrows();
    for a in 0..nm {
        out.push(x[(a, a)].re);
        for b in a + 1..nm {
            out.push(x[(a, b)].re);
            out.push(x[(a, b)].im);
        }
    }
}

/// Levenberg–Marquardt on the factors restricted to the face spanned by the eigenvectors
/// of `gammas` above `delta` times the largest eigenvalue. Sublinear descent stalls on
/// rigid low-rank certificates; on the correct face this converges quadratically.
fn polish_on_face(
    disc: &ConeDiscretization,
    t: &CMat,
    m: usize,
    gammas: &[(usize, CMat)],
    delta: f64,
    target: f64,
) -> Option<Vec<(usize, CMat)>> {
    let nm = t.nrows();
    let eig: Vec<(usize, Vec<f64>, CMat)> = gammas
        .iter()
        .map(|(k, g)| {
            let (ev, v) = hermitian_eigh(g);
            (*k, ev, v)
        })
        .collect();
    let top = eig.iter().flat_map(|(_, ev, _)| ev.iter().copied()).fold(0.0, f64::max);
    if top <= 0.0 {
        return None;
    }
    let mut ls: Vec<(usize, CMat)> = eig
        .iter()
        .filter_map(|(k, ev, v)| {
            let cols: Vec<usize> = (0..ev.len()).filter(|&c| ev[c] > delta * top).collect();
            (!cols.is_empty()).then(|| {
                (*k, CMat::from_fn(nm, cols.len(), |i, c| v[(i, cols[c])] * ev[cols[c]].sqrt()))
            })
        })
        .collect();
    let params: usize = ls.iter().map(|(_, l)| 2 * nm * l.ncols()).sum();
    if params == 0 || params > 4 * nm * nm {
        return None;
    }
    let weights: Vec<CMat> = ls.iter().map(|(k, _)| disc.weight(*k)).collect();
    let residual = |ls: &[(usize, CMat)]| {
        let mut r = -t.clone();
        for ((_, l), w) in ls.iter().zip(&weights) {
            r += hadamard_expanded(w, &(l * l.adjoint()), m);
        }
        let mut out = Vec::with_capacity(nm * nm);
        hermitian_coords(&r, &mut out);
        nalgebra::DVector::from_vec(out)
    };
    let mut r = residual(&ls);
    let mut lambda = 1e-6;
    for _ in 0..60 {
        if r.norm() < target {
            break;
        }
        let mut data = Vec::with_capacity(nm * nm * params);
        for ((_, l), w) in ls.iter().zip(&weights) {
            for i in 0..nm {
                for c in 0..l.ncols() {
                    for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                        // dL = unit·E_ic: dL L* has row i equal to unit·conj(L[:, c])
                        let mut x = CMat::zeros(nm, nm);
                        for j in 0..nm {
                            x[(i, j)] += unit * l[(j, c)].conj();
                        }
                        let x = &x + x.adjoint();
                        hermitian_coords(&hadamard_expanded(w, &x, m), &mut data);
                    }
                }
            }
        }
        let jac = nalgebra::DMatrix::<f64>::from_column_slice(nm * nm, params, &data);
        // minimal-norm damped step through the row space: δ = −Jᵀ(JJᵀ + λ diag)⁻¹ r
        let jjt = &jac * jac.transpose();
        let mut improved = false;
        for _ in 0..8 {
            let mut a = jjt.clone();
            for d in 0..nm * nm {
                a[(d, d)] += lambda * (1.0 + jjt[(d, d)]);
            }
            let step = match a.cholesky() {
                Some(ch) => -(jac.transpose() * ch.solve(&r)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = ls.clone();
            let mut o = 0;
            for (_, l) in trial.iter_mut() {
                for i in 0..nm {
                    for c in 0..l.ncols() {
                        l[(i, c)] += C64::new(step[o], step[o + 1]);
                        o += 2;
                    }
                }
            }
            let rt = residual(&trial);
            if rt.norm() < r.norm() {
                ls = trial;
                r = rt;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Some(ls.into_iter().map(|(k, l)| (k, &l * l.adjoint())).collect())
}

/// Outcome of one feasibility check.
#[derive(Debug, Clone, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub certificate: Certificate,
    /// Certified lower bound on the achievable relative residual.
    pub floor: f64,
    pub s_star: f64,
}

fn feasibility(disc: &ConeDiscretization, f: &Values, solve: &ConeSolve, rho: f64, cfg: &SolverConfig) -> Feasibility {
    let certificate = certificate_at(disc, f, solve, rho, cfg);
    Feasibility {
        feasible: certificate.residual < cfg.feasible_tol && certificate.min_eigenvalue >= -1e-9,
        floor: residual_floor(f, solve, rho),
        certificate,
        s_star: solve.s_star,
    }
}

/// Decides whether `I − ρ²FF*` lies in the discretized cone.
pub fn cone_feasible(
    disc: &ConeDiscretization,
    f: &Values,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<Feasibility, ConeError> {
    let solve = cone_solve(disc, f, cfg)?;
    Ok(feasibility(disc, f, &solve, rho, cfg))
}

/// One bisection probe.
#[derive(Debug, Clone, Serialize)]
pub struct RhoProbe {
    pub rho: f64,
    pub feasible: bool,
    pub residual: f64,
    pub floor: f64,
}

/// Largest feasible probe, and the smaller of the smallest infeasible probe and the
/// dual bound.
#[derive(Debug, Clone, Serialize)]
pub struct RhoEstimate {
    pub rho_lower: f64,
    pub rho_upper: Option<f64>,
    pub trace: Vec<RhoProbe>,
    pub certificate: Certificate,
    pub solve: ConeSolve,
}

/// Bisection for `ρ̂` on `[0.5, 1]` against a single cone solve.
pub fn rho_estimate(disc: &ConeDiscretization, f: &Values, cfg: &SolverConfig) -> Result<RhoEstimate, ConeError> {
    let solve = cone_solve(disc, f, cfg)?;
    let mut trace = vec![];
    let probe = |rho: f64, trace: &mut Vec<RhoProbe>| {
        let r = feasibility(disc, f, &solve, rho, cfg);
        trace.push(RhoProbe {
            rho,
            feasible: r.feasible,
            residual: r.certificate.residual,
            floor: r.floor,
        });
        r
    };
    let top = probe(1.0, &mut trace);
    if top.feasible {
        return Ok(RhoEstimate {
            rho_lower: 1.0,
            rho_upper: None,
            trace,
            certificate: top.certificate,
            solve,
        });
    }
    let bottom = probe(0.5, &mut trace);
    if !bottom.feasible {
        return Err(ConeError::LowerInfeasible {
            rho: 0.5,
            residual: bottom.certificate.residual,
        });
    }
    let (mut lo, mut hi) = (0.5, 1.0);
    let mut cert = bottom.certificate;
    while hi - lo > cfg.width {
        let mid = 0.5 * (lo + hi);
        let r = probe(mid, &mut trace);
        if r.feasible {
            lo = mid;
            cert = r.certificate;
        } else {
            hi = mid;
        }
    }
    let hi = solve.rho_upper_bound().map_or(hi, |u| u.min(hi));
    Ok(RhoEstimate {
        rho_lower: lo,
        rho_upper: Some(hi),
        trace,
        certificate: cert,
        solve,
    })
}

/// One term `w_k h_k(z)(1 − ψ_k(z)conj ψ_k(w)) conj h_k(w)` of a scalar decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct AglerTerm {
    pub member: usize,
    pub weight: f64,
    pub h: Vec<C64>,
}

/// Discrete scalar decomposition of `1 − ρ(z)conj ρ(w)` on the nodes.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarAgler {
    pub terms: Vec<AglerTerm>,
    pub residual: f64,
    /// `ρ(b)` removed by the Möbius reduction.
    pub shift: C64,
}

/// Fits `1 − ρρ̄` after Möbius-reducing `ρ(b)` to zero; `b_index` locates `b` in the nodes.
pub fn scalar_agler(
    disc: &ConeDiscretization,
    rho_vals: &[C64],
    b_index: usize,
    cfg: &SolverConfig,
) -> Result<ScalarAgler, ConeError> {
    let sup = rho_vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if sup > 1.0 + 1e-12 {
        return Err(ConeError::NotContractive(sup));
    }
    let mut a = rho_vals[b_index];
    if a.norm() < 1e-8 {
        a = C64::new(0.0, 0.0);
    }
    let reduced: Values = rho_vals
        .iter()
        .map(|&v| CMat::from_element(1, 1, (v - a) / (C64::new(1.0, 0.0) - a.conj() * v)))
        .collect();
    let fit = cone_feasible(disc, &reduced, 1.0, cfg)?;
    let s = (1.0 - a.norm_sqr()).sqrt();
    let lift: Vec<C64> = rho_vals.iter().map(|&v| (C64::new(1.0, 0.0) - a.conj() * v) / s).collect();
    let mut terms = vec![];
    for (k, g) in &fit.certificate.gammas {
        let (ev, v) = hermitian_eigh(g);
        let top = ev.last().copied().unwrap_or(0.0);
        for (c, &lam) in ev.iter().enumerate() {
            if lam <= 1e-14 * top.max(1e-300) {
                continue;
            }
            let col: Vec<C64> = (0..v.nrows()).map(|i| v[(i, c)]).collect();
            let anchor = if col[b_index].norm() > 1e-8 {
                col[b_index]
            } else {
                *col.iter().max_by(|x, y| x.norm().total_cmp(&y.norm())).expect("nonempty")
            };
            let h: Vec<C64> = col.iter().zip(&lift).map(|(x, l)| x / anchor * l).collect();
            terms.push(AglerTerm {
                member: *k,
                weight: lam * anchor.norm_sqr(),
                h,
            });
        }
    }
    let residual = agler_residual(disc, rho_vals, &terms);
    Ok(ScalarAgler { terms, residual, shift: a })
}

/// Relative residual of a scalar decomposition against `1 − ρρ̄`.
pub fn agler_residual(disc: &ConeDiscretization, rho_vals: &[C64], terms: &[AglerTerm]) -> f64 {
    let n = rho_vals.len();
    let t = CMat::from_fn(n, n, |i, j| C64::new(1.0, 0.0) - rho_vals[i] * rho_vals[j].conj());
    let mut acc = CMat::zeros(n, n);
    for term in terms {
        let w = disc.weight(term.member);
        for i in 0..n {
            for j in 0..n {
                acc[(i, j)] += w[(i, j)] * term.h[i] * term.h[j].conj() * term.weight;
            }
        }
    }
    (acc - &t).norm() / t.norm()
}

/// Unitary colligation `U = [[A, B], [C, D]]` on `K ⊕ C^m`, with `Φ(z)` acting on `K`
/// as `ψ_k(z)` on the block of member `k`.
#[derive(Debug, Clone, Serialize)]
pub struct Colligation {
    #[serde(serialize_with = "ser_cmat")]
    pub u: CMat,
    pub aux: usize,
    pub m: usize,
    /// Member index of each coordinate of `K`.
    pub coords: Vec<usize>,
    /// `(member, trace Γ_k)`.
    pub weights: Vec<(usize, f64)>,
    pub gram_mismatch: f64,
}

impl Colligation {
    fn blocks(&self) -> (CMat, CMat, CMat, CMat) {
        let k = self.aux;
        let m = self.m;
        (
            self.u.view((0, 0), (k, k)).into_owned(),
            self.u.view((0, k), (k, m)).into_owned(),
            self.u.view((k, 0), (m, k)).into_owned(),
            self.u.view((k, k), (m, m)).into_owned(),
        )
    }

    pub fn phi(&self, disc: &ConeDiscretization, z: C64) -> CMat {
        let vals: Vec<C64> = self.coords.iter().map(|&k| disc.member_eval(k, z)).collect();
        CMat::from_diagonal(&nalgebra::DVector::from_vec(vals))
    }

    pub fn unitarity(&self) -> f64 {
        (self.u.adjoint() * &self.u - CMat::identity(self.u.nrows(), self.u.ncols())).norm()
    }

    /// `C(I − Φ(z)A)^{-1}`.
    fn left(&self, disc: &ConeDiscretization, z: C64) -> Result<CMat, ConeError> {
        let (a, _, c, _) = self.blocks();
        let phi = self.phi(disc, z);
        let res = CMat::identity(self.aux, self.aux) - &phi * &a;
        let inv = res.try_inverse().ok_or(ConeError::Resolvent(z))?;
        Ok(c * inv)
    }

    /// `W(z) = D + C(I − Φ(z)A)^{-1}Φ(z)B`.
    pub fn transfer_eval(&self, disc: &ConeDiscretization, z: C64) -> Result<CMat, ConeError> {
        let (_, b, _, d) = self.blocks();
        let phi = self.phi(disc, z);
        Ok(d + self.left(disc, z)? * phi * b)
    }

    /// `‖I − W(z)W(w)* − C(I−Φ(z)A)^{-1}(I − Φ(z)Φ(w)*)(I − A*Φ(w)*)^{-1}C*‖`.
    pub fn identity_residual(&self, disc: &ConeDiscretization, z: C64, w: C64) -> Result<f64, ConeError> {
        let wz = self.transfer_eval(disc, z)?;
        let ww = self.transfer_eval(disc, w)?;
        let lz = self.left(disc, z)?;
        let lw = self.left(disc, w)?;
        let pz = self.phi(disc, z);
        let pw = self.phi(disc, w);
        let mid = CMat::identity(self.aux, self.aux) - pz * pw.adjoint();
        let lhs = CMat::identity(self.m, self.m) - wz * ww.adjoint();
        Ok((lhs - lz * mid * lw.adjoint()).norm())
    }
}

/// Orthonormal basis of the complement of the column space of an isometry `y`.
fn complement(y: &CMat) -> CMat {
    let d = y.nrows();
    let k = y.ncols();
    let proj = CMat::identity(d, d) - y * y.adjoint();
    let (_, v) = hermitian_eigh(&proj);
    v.columns(k, d - k).into_owned()
}

/// Lurking-isometry colligation from a certificate at `ρ = 1` with residual small
/// enough that the two Gram matrices agree.
pub fn build_colligation(
    disc: &ConeDiscretization,
    f: &Values,
    cert: &Certificate,
) -> Result<Colligation, ConeError> {
    let m = block_dim(f)?;
    let n = disc.nodes.len();
    let top = cert
        .gammas
        .iter()
        .flat_map(|(_, g)| hermitian_eigh(g).0)
        .fold(0.0, f64::max);
    let mut coords = vec![];
    let mut cols: Vec<nalgebra::DVector<C64>> = vec![];
    let mut weights = vec![];
    for (k, g) in &cert.gammas {
        let (ev, v) = hermitian_eigh(g);
        weights.push((*k, g.trace().re));
        for (c, &lam) in ev.iter().enumerate() {
            if lam > 1e-10 * top {
                coords.push(*k);
                cols.push(v.column(c).into_owned() * C64::new(lam.sqrt(), 0.0));
            }
        }
    }
    let aux = coords.len();
    // L has rows indexed by (node, component) and one column per coordinate of K
    let l = CMat::from_fn(n * m, aux, |i, c| cols[c][i]);
    let dim = aux + m;
    let mut uu = CMat::zeros(dim, n * m);
    let mut uv = CMat::zeros(dim, n * m);
    for i in 0..n {
        let li = l.rows(i * m, m).into_owned();
        let phi_conj: Vec<C64> = coords.iter().map(|&k| disc.members[k].values[i].conj()).collect();
        let lstar = li.adjoint();
        for c in 0..m {
            for a in 0..aux {
                uu[(a, i * m + c)] = phi_conj[a] * lstar[(a, c)];
                uv[(a, i * m + c)] = lstar[(a, c)];
            }
            uu[(aux + c, i * m + c)] = C64::new(1.0, 0.0);
            for r in 0..m {
                uv[(aux + r, i * m + c)] = f[i][(c, r)].conj();
            }
        }
    }
    let gram_mismatch = (uu.adjoint() * &uu - uv.adjoint() * &uv).norm();
    if gram_mismatch > 1e-8 {
        return Err(ConeError::GramMismatch(gram_mismatch));
    }
    let svd = uu.clone().svd(true, true);
    let su = svd.u.expect("u requested");
    let sv = svd.v_t.expect("v requested").adjoint();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-9 * smax)
        .collect();
    let pk = CMat::from_fn(dim, keep.len(), |r, c| su[(r, keep[c])]);
    let y = CMat::from_fn(dim, keep.len(), |r, c| {
        let col = keep[c];
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n * m {
            acc += uv[(r, j)] * sv[(j, col)];
        }
        acc / svd.singular_values[col]
    });
    let ysvd = y.svd(true, true);
    let y = ysvd.u.expect("u requested") * ysvd.v_t.expect("v requested");
    let v = &y * pk.adjoint() + complement(&y) * complement(&pk).adjoint();
    Ok(Colligation {
        u: v.adjoint(),
        aux,
        m,
        coords,
        weights,
        gram_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CircularDomain;
    use crate::harmonic::HarmonicConfig;
    use crate::matinner::{det_zeros, MatrixInner, Team};
    use std::sync::OnceLock;

    struct Fx {
        basis: HarmonicBasis,
        p: PiPoint,
        b: C64,
        disc: ConeDiscretization,
        s0: MatrixInner,
    }

    fn fx() -> &'static Fx {
        static F: OnceLock<Fx> = OnceLock::new();
        F.get_or_init(|| {
            let basis = HarmonicBasis::new(&CircularDomain::reference(), HarmonicConfig::default()).unwrap();
            let p = PiPoint::from_angles(&[PI, 1.9, 1.2]);
            let b = C64::new(0.0, 0.0);
            let s0 = MatrixInner::build(&basis, &Team::trivial(2), &p, b).unwrap();
            let zeros: Vec<C64> = det_zeros(&basis, &s0).unwrap().zeros.iter().map(|z| z.z).collect();
            let disc = ConeDiscretization::build(&basis, b, &p, &zeros, 4, 2, 7).unwrap();
            Fx { basis, p, b, disc, s0 }
        })
    }

    fn values(f: &dyn Fn(C64) -> CMat, nodes: &[C64]) -> Values {
        nodes.iter().map(|&z| f(z)).collect()
    }

    #[test]
    fn member_certificate_is_exact() {
        let f = fx();
        let k = f.disc.find("psi_p").unwrap();
        let vals = values(&|z| CMat::from_element(1, 1, f.disc.member_eval(k, z)), &f.disc.nodes);
        let c = member_certificate(&f.disc, &vals, 1.0).unwrap();
        assert!(c.residual < 1e-10);
        assert_eq!(verify(&f.disc, &vals, &c), c.residual);
    }

    #[test]
    fn solver_finds_diagonal_certificate() {
        let f = fx();
        let vals = values(&|z| crate::linalg::m2_to_dyn(&f.s0.eval(z)), &f.disc.nodes);
        let cfg = SolverConfig::default();
        let r = cone_feasible(&f.disc, &vals, 1.0, &cfg).unwrap();
        assert!(r.feasible, "{} {}", r.s_star, r.certificate.residual);
        assert!(r.certificate.min_eigenvalue >= -1e-9);
        assert!((verify(&f.disc, &vals, &r.certificate) - r.certificate.residual).abs() < 1e-12);
    }

    #[test]
    fn scalar_fits() {
        let f = fx();
        let kp = f.disc.find("psi_p").unwrap();
        let kq = f.disc.find("psi_conj_p").unwrap();
        let cfg = SolverConfig::default();
        let bi = f.disc.nodes.iter().position(|z| (z - f.b).norm() < 1e-12).unwrap();
        let own = f.disc.members[kp].values.clone();
        let one = scalar_agler(&f.disc, &own, bi, &cfg).unwrap();
        assert!(one.residual < 1e-10);
        assert_eq!(one.terms.len(), 1);
        assert!(one.terms[0].h.iter().all(|h| (h - C64::new(1.0, 0.0)).norm() < 1e-8));
        let avg: Vec<C64> = own
            .iter()
            .zip(&f.disc.members[kq].values)
            .map(|(a, b)| (a + b) * 0.5)
            .collect();
        assert!(scalar_agler(&f.disc, &avg, bi, &cfg).unwrap().residual < 1e-6);
        let shifted: Vec<C64> = own
            .iter()
            .map(|v| {
                let a = C64::new(0.3, 0.1);
                (v + a) / (C64::new(1.0, 0.0) + a.conj() * v)
            })
            .collect();
        let fit = scalar_agler(&f.disc, &shifted, bi, &cfg).unwrap();
        assert!(fit.residual < 1e-6 && (fit.shift - C64::new(0.3, 0.1)).norm() < 1e-8);
    }

    #[test]
    fn colligation_realizes_trivial_team() {
        let f = fx();
        let vals = values(&|z| crate::linalg::m2_to_dyn(&f.s0.eval(z)), &f.disc.nodes);
        let r = cone_feasible(&f.disc, &vals, 1.0, &SolverConfig::default()).unwrap();
        let col = build_colligation(&f.disc, &vals, &r.certificate).unwrap();
        assert!(col.unitarity() < 1e-10);
        assert!(col.aux <= 4 * f.basis.n() + 6);
        for (i, z) in f.disc.nodes.iter().enumerate() {
            let w = col.transfer_eval(&f.disc, *z).unwrap();
            assert!((w - &vals[i]).norm() < 1e-6);
        }
        let pts = interior_samples(f.basis.domain(), 40, 0.05, 9);
        for pair in pts.chunks(2) {
            assert!(col.identity_residual(&f.disc, pair[0], pair[1]).unwrap() < 1e-8);
        }
        let _ = &f.p;
    }
}

//! Primal–dual interior-point solver for the Hadamard-weighted cone program
//!
//! ```text
//! max s   s.t.  Σ_k W_k ⊙ X_k + s·G = T,   X_k ⪰ 0,
//! min ⟨T, Y⟩  s.t.  ⟨G, Y⟩ = 1,   W̄_k ⊙ Y ⪰ 0,
//! ```
//!
//! with `W_k(r, c) = 1 − u_k(r) conj u_k(c)` and all matrices Hermitian `d × d`.
//! HKM search direction with Mehrotra predictor–corrector; the Schur complement
//! is `d² × d²` and is assembled as a real GEMM over the separable expansion of
//! the weights.

use crate::linalg::CMat;
use crate::C64;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// `Re tr(a* b)`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn weight(u: &[C64]) -> CMat {
    CMat::from_fn(u.len(), u.len(), |r, c| C64::new(1.0, 0.0) - u[r] * u[c].conj())
}

fn sym(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Real coordinates of a Hermitian matrix: diagonal, then `(Re, Im)` of the strict upper triangle.
fn coords(x: &CMat) -> Vec<f64> {
    let d = x.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(x[(i, i)].re);
    }
    for c in 0..d {
        for r in 0..c {
            out.push(x[(r, c)].re);
            out.push(x[(r, c)].im);
        }
    }
    out
}

fn from_coords(v: &[f64], d: usize) -> CMat {
    let mut x = CMat::zeros(d, d);
    for i in 0..d {
        x[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = d;
    for c in 0..d {
        for r in 0..c {
            let z = C64::new(v[k], v[k + 1]);
            x[(r, c)] = z;
            x[(c, r)] = z.conj();
            k += 2;
        }
    }
    x
}

/// Largest `α ≤ cap` with `x + α dx ⪰ 0`, for `x ≻ 0`.
fn max_step(x: &CMat, dx: &CMat, cap: f64) -> f64 {
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(a) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(b) = l.solve_lower_triangular(&a.adjoint()) else {
        return 0.0;
    };
    let lam = sym(&b).symmetric_eigenvalues().min();
    if lam < 0.0 {
        cap.min(-1.0 / lam)
    } else {
        cap
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step: f64,
    pub stall: usize,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            max_iters: 80,
            tol: 1e-9,
            step: 0.9,
            stall: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    /// No improvement of the worst residual for `stall` iterations; best iterate returned.
    Stalled,
    MaxIterations,
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub s: f64,
    pub x: Vec<CMat>,
    pub y: CMat,
    pub status: SdpStatus,
    pub iterations: usize,
    /// `‖T − Σ W_k ⊙ X_k − sG‖_F / (1 + ‖T‖_F)`.
    pub primal_residual: f64,
    /// `max_k ‖W̄_k ⊙ Y − Z_k‖_F` relative to `1 + ‖Y‖_F`.
    pub dual_residual: f64,
    /// `|⟨T, Y⟩ − s| / (1 + |s|)`.
    pub gap: f64,
}

/// Problem data: multiplier values `u[k]` (length `d` each), `G`, `T`.
pub struct HadamardSdp<'a> {
    pub u: &'a [Vec<C64>],
    pub g: &'a CMat,
    pub t: &'a CMat,
}

impl HadamardSdp<'_> {
    fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn apply(&self, x: &[CMat]) -> CMat {
        let mut acc = CMat::zeros(self.dim(), self.dim());
        for (u, xk) in self.u.iter().zip(x) {
            acc += weight(u).component_mul(xk);
        }
        acc
    }

    /// Real Schur matrix of `V ↦ Σ_k W_k ⊙ sym(X_k (W̄_k ⊙ V) Z_k^{-1})` on Hermitian coordinates.
    fn schur(&self, x: &[CMat], zinv: &[CMat]) -> DMatrix<f64> {
        let d = self.dim();
        let kk = self.u.len();
        // N[(r,c),(a,b)] = Σ_k Σ_t A_kt[r,a] B_kt[b,c] from
        // W[r,c] W̄[a,b] = 1 − u_r ū_c − ū_a u_b + u_r ū_a ū_c u_b.
        let cols = 4 * kk;
        let mut ar = DMatrix::<f64>::zeros(d * d, cols);
        let mut ai = DMatrix::<f64>::zeros(d * d, cols);
        let mut br = DMatrix::<f64>::zeros(d * d, cols);
        let mut bi = DMatrix::<f64>::zeros(d * d, cols);
        for k in 0..kk {
            let u = &self.u[k];
            for t in 0..4 {
                let col = 4 * k + t;
                let sign = if t == 1 || t == 2 { -1.0 } else { 1.0 };
                for a in 0..d {
                    for r in 0..d {
                        let mut v = x[k][(r, a)] * sign;
                        if t == 1 || t == 3 {
                            v *= u[r];
                        }
                        if t == 2 || t == 3 {
                            v *= u[a].conj();
                        }
                        ar[(r * d + a, col)] = v.re;
                        ai[(r * d + a, col)] = v.im;
                    }
                }
                for b in 0..d {
                    for c in 0..d {
                        let mut v = zinv[k][(b, c)];
                        if t == 1 || t == 3 {
                            v *= u[c].conj();
                        }
                        if t == 2 || t == 3 {
                            v *= u[b];
                        }
                        br[(c * d + b, col)] = v.re;
                        bi[(c * d + b, col)] = v.im;
                    }
                }
            }
        }
        // P[(r,a),(c,b)] = N[(r,c),(a,b)]
        let pr = &ar * br.transpose() - &ai * bi.transpose();
        let pi = &ar * bi.transpose() + &ai * br.transpose();
        drop((ar, ai, br, bi));
        let n_at = |r: usize, c: usize, a: usize, b: usize| -> C64 {
            C64::new(pr[(r * d + a, c * d + b)], pi[(r * d + a, c * d + b)])
        };
        // image of a basis element under N, as a closure over (r, c)
        let dim = d * d;
        let mut basis: Vec<(usize, usize, u8)> = (0..d).map(|i| (i, i, 0)).collect();
        for c in 0..d {
            for r in 0..c {
                basis.push((r, c, 1));
                basis.push((r, c, 2));
            }
        }
        let mut out = DMatrix::<f64>::zeros(dim, dim);
        let mut img = CMat::zeros(d, d);
        for (j, &(a, b, kind)) in basis.iter().enumerate() {
            for c in 0..d {
                for r in 0..d {
                    img[(r, c)] = match kind {
                        0 => n_at(r, c, a, a),
                        1 => n_at(r, c, a, b) + n_at(r, c, b, a),
                        _ => (n_at(r, c, a, b) - n_at(r, c, b, a)) * C64::new(0.0, 1.0),
                    };
                }
            }
            let col = coords(&sym(&img));
            out.column_mut(j).copy_from_slice(&col);
        }
        out
    }

    /// Solves with `G` normalized to unit Frobenius norm, so that the dual
    /// constraint `⟨G, Y⟩ = 1` does not force `Y` to the scale `1/‖G‖`.
    pub fn solve(&self, cfg: &SdpConfig) -> SdpSolution {
        let gs = self.g.norm();
        if !(gs.is_finite() && gs > 0.0) || (gs - 1.0).abs() < 1e-12 {
            return self.solve_scaled(cfg);
        }
        let g = self.g.unscale(gs);
        let inner_sol = HadamardSdp { u: self.u, g: &g, t: self.t }.solve_scaled(cfg);
        let s = inner_sol.s / gs;
        let y = inner_sol.y.unscale(gs);
        let rp = self.t - self.apply(&inner_sol.x) - self.g * C64::new(s, 0.0);
        SdpSolution {
            primal_residual: rp.norm() / (1.0 + self.t.norm()),
            // `Z_k = W̄_k ⊙ Y` exactly, so only the normalization can be violated
            dual_residual: (1.0 - inner(self.g, &y)).abs(),
            gap: (inner(self.t, &y) - s).abs() / (1.0 + s.abs()),
            s,
            y,
            ..inner_sol
        }
    }

    fn solve_scaled(&self, cfg: &SdpConfig) -> SdpSolution {
        let d = self.dim();
        let kk = self.u.len();
        let ws: Vec<CMat> = self.u.iter().map(|u| weight(u)).collect();
        let wbar: Vec<CMat> = ws.iter().map(|w| w.map(|z| z.conj())).collect();
        let tnorm = self.t.norm();
        let mut x: Vec<CMat> = vec![CMat::identity(d, d); kk];
        let mut z: Vec<CMat> = vec![CMat::identity(d, d); kk];
        let mut y = CMat::zeros(d, d);
        let mut s = 0.0;
        let gvec = coords(self.g);
        let gw: Vec<f64> = gvec
            .iter()
            .enumerate()
            .map(|(i, v)| if i < d { *v } else { 2.0 * v })
            .collect();
        let nu = (kk * d) as f64;
        let mut status = SdpStatus::MaxIterations;
        let mut iterations = 0;
        let mut best = (f64::INFINITY, x.clone(), y.clone(), s);
        let mut since_best = 0;
        let residuals = |x: &[CMat], z: &[CMat], y: &CMat, s: f64| {
            let rp = self.t - self.apply(x) - self.g * C64::new(s, 0.0);
            let rd: Vec<CMat> = (0..kk).map(|k| wbar[k].component_mul(y) - &z[k]).collect();
            let rs = 1.0 - inner(self.g, y);
            (rp, rd, rs)
        };
        for it in 0..cfg.max_iters {
            iterations = it;
            let (rp, rd, rs) = residuals(&x, &z, &y, s);
            let mu = (0..kk).map(|k| inner(&x[k], &z[k])).sum::<f64>() / nu;
            let pinf = rp.norm() / (1.0 + tnorm);
            let dinf = rd.iter().map(|r| r.norm()).fold(0.0, f64::max) / (1.0 + y.norm()) + rs.abs();
            let gap = (inner(self.t, &y) - s).abs() / (1.0 + s.abs());
            let merit = pinf.max(dinf).max(gap);
            if merit < best.0 {
                best = (merit, x.clone(), y.clone(), s);
                since_best = 0;
            } else {
                since_best += 1;
            }
            if pinf < cfg.tol && dinf < cfg.tol && gap < cfg.tol && mu < cfg.tol {
                status = SdpStatus::Optimal;
                break;
            }
            // past the conditioning limit the Schur solves stop making progress
            if since_best >= cfg.stall {
                status = SdpStatus::Stalled;
                break;
            }
            let zinv: Vec<CMat> = match z.iter().map(|zk| zk.clone().cholesky().map(|c| c.inverse())).collect() {
                Some(v) => v,
                None => {
                    status = SdpStatus::Breakdown;
                    break;
                }
            };
            let m = self.schur(&x, &zinv);
            let mut sys = DMatrix::<f64>::zeros(d * d + 1, d * d + 1);
            sys.view_mut((0, 0), (d * d, d * d)).copy_from(&m);
            for i in 0..d * d {
                sys[(i, d * d)] = -gvec[i];
                sys[(d * d, i)] = gw[i];
            }
            let lu = sys.lu();
            let xrdz: Vec<CMat> = (0..kk).map(|k| sym(&(&x[k] * &rd[k] * &zinv[k]))).collect();
            let direction = |c: &[CMat]| -> Option<(Vec<CMat>, f64, CMat, Vec<CMat>)> {
                let mut r1 = -&rp;
                for k in 0..kk {
                    r1 += ws[k].component_mul(&c[k]);
                }
                let mut rhs = coords(&r1);
                rhs.push(rs);
                let mut sol = lu.solve(&DVector::from_vec(rhs))?;
                let primal_dx = |dy: &CMat| -> Vec<CMat> {
                    (0..kk)
                        .map(|k| &c[k] - sym(&(&x[k] * wbar[k].component_mul(dy) * &zinv[k])))
                        .collect()
                };
                // iterative refinement against the directly evaluated linearized equations
                for _ in 0..2 {
                    let dy = from_coords(&sol.as_slice()[..d * d], d);
                    let e1 = self.apply(&primal_dx(&dy)) + self.g * C64::new(sol[d * d], 0.0) - &rp;
                    let mut corr = coords(&e1);
                    corr.push(rs - inner(self.g, &dy));
                    sol += lu.solve(&DVector::from_vec(corr))?;
                }
                let dy = from_coords(&sol.as_slice()[..d * d], d);
                let ds = sol[d * d];
                let dz: Vec<CMat> = (0..kk).map(|k| wbar[k].component_mul(&dy) + &rd[k]).collect();
                Some((primal_dx(&dy), ds, dy, dz))
            };
            let c_aff: Vec<CMat> = (0..kk).map(|k| -&x[k] - &xrdz[k]).collect();
            let Some((dxa, _, _, dza)) = direction(&c_aff) else {
                status = SdpStatus::Breakdown;
                break;
            };
            let ap = (0..kk).map(|k| max_step(&x[k], &dxa[k], 1.0)).fold(1.0, f64::min);
            let ad = (0..kk).map(|k| max_step(&z[k], &dza[k], 1.0)).fold(1.0, f64::min);
            let mu_aff = (0..kk)
                .map(|k| inner(&(&x[k] + &dxa[k] * C64::new(ap, 0.0)), &(&z[k] + &dza[k] * C64::new(ad, 0.0))))
                .sum::<f64>()
                / nu;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let c_cor: Vec<CMat> = (0..kk)
                .map(|k| {
                    &zinv[k] * C64::new(sigma * mu, 0.0) - &x[k] - &xrdz[k] - sym(&(&dxa[k] * &dza[k] * &zinv[k]))
                })
                .collect();
            let Some((dx, ds, dy, dz)) = direction(&c_cor) else {
                status = SdpStatus::Breakdown;
                break;
            };
            let ap = (0..kk).map(|k| max_step(&x[k], &dx[k], 1.0 / cfg.step)).fold(1.0 / cfg.step, f64::min) * cfg.step;
            let ad = (0..kk).map(|k| max_step(&z[k], &dz[k], 1.0 / cfg.step)).fold(1.0 / cfg.step, f64::min) * cfg.step;
            if ap < 1e-12 && ad < 1e-12 {
                status = SdpStatus::Breakdown;
                break;
            }
            for k in 0..kk {
                x[k] = sym(&(&x[k] + &dx[k] * C64::new(ap, 0.0)));
                z[k] = sym(&(&z[k] + &dz[k] * C64::new(ad, 0.0)));
            }
            s += ap * ds;
            y = sym(&(&y + &dy * C64::new(ad, 0.0)));
            iterations = it + 1;
        }
        let (_, x, y, s) = best;
        let z: Vec<CMat> = wbar.iter().map(|w| w.component_mul(&y)).collect();
        let (rp, rd, rs) = residuals(&x, &z, &y, s);
        SdpSolution {
            primal_residual: rp.norm() / (1.0 + tnorm),
            dual_residual: rd.iter().map(|r| r.norm()).fold(0.0, f64::max) / (1.0 + y.norm()) + rs.abs(),
            gap: (inner(self.t, &y) - s).abs() / (1.0 + s.abs()),
            s,
            x,
            y,
            status,
            iterations,
        }
    }
}

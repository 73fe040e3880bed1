//! Zeros of analytic functions in a circular domain by the argument principle.
//!
//! The boundary winding gives the zero count `N`. Contour moments
//! `s_k = (1/2πi) ∮ z^k f'/f dz`, `k = 1..N`, give the power sums of the
//! zeros; Newton's identities turn them into a monic polynomial whose roots
//! are polished by Newton's method on `f` itself.

use crate::domain::CircularDomain;
use crate::linalg::monic_roots;
use crate::C64;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeroError {
    #[error("function is not finite on the boundary near {0}")]
    NonFinite(C64),
    #[error("boundary winding {winding} does not match the expected count {expected}")]
    CountMismatch { winding: i64, expected: usize },
    #[error("negative boundary winding {0}")]
    NegativeWinding(i64),
    #[error("zero refinement failed near {0}")]
    Refinement(C64),
}

/// A zero and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Zero {
    pub z: C64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroReport {
    pub zeros: Vec<Zero>,
    pub winding: i64,
    /// Largest `|f|` at the returned zeros.
    pub residual: f64,
}

impl ZeroReport {
    pub fn total(&self) -> usize {
        self.zeros.iter().map(|z| z.multiplicity).sum()
    }

    /// Zeros listed with repetition according to multiplicity.
    pub fn expanded(&self) -> Vec<C64> {
        self.zeros
            .iter()
            .flat_map(|z| std::iter::repeat(z.z).take(z.multiplicity))
            .collect()
    }
}

/// Central-difference derivative of an analytic function.
pub fn numeric_deriv(f: &dyn Fn(C64) -> C64, z: C64) -> C64 {
    let h = 1e-5;
    (f(z + h) - f(z - h)) / (2.0 * h)
}

/// Boundary contour nodes: outer circle counterclockwise, holes clockwise.
/// Returns `(point, dz)` with `dz` the trapezoidal line element.
fn contour(domain: &CircularDomain, m: usize) -> Vec<(C64, C64)> {
    let mut out = Vec::with_capacity(m * (domain.n() + 1));
    for (i, c) in domain.curves().enumerate() {
        let sign = if i == 0 { 1.0 } else { -1.0 };
        for k in 0..m {
            // half-step offset keeps nodes off the real axis
            let t = 2.0 * PI * (k as f64 + 0.5) / m as f64;
            let u = C64::from_polar(1.0, t);
            let dz = C64::new(0.0, 1.0) * u * (c.radius * 2.0 * PI / m as f64 * sign);
            out.push((c.point(t), dz));
        }
    }
    out
}

fn unwrapped_turns(values: &[C64]) -> Option<f64> {
    let mut total = 0.0;
    for k in 0..values.len() {
        let a = values[k];
        let b = values[(k + 1) % values.len()];
        let d = (b / a).arg();
        if d.abs() > PI / 3.0 {
            return None;
        }
        total += d;
    }
    Some(total / (2.0 * PI))
}

/// Winding number of `f` along the positively oriented boundary, with adaptive refinement.
pub fn boundary_winding(domain: &CircularDomain, f: &dyn Fn(C64) -> C64) -> Result<i64, ZeroError> {
    let mut m = 256;
    loop {
        let mut total = 0.0;
        let mut ok = true;
        for (i, c) in domain.curves().enumerate() {
            let vals: Vec<C64> = (0..m)
                .map(|k| {
                    let t = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    f(c.point(t))
                })
                .collect();
            if let Some(bad) = vals.iter().position(|v| !v.is_finite() || v.norm() == 0.0) {
                let t = 2.0 * PI * (bad as f64 + 0.5) / m as f64;
                return Err(ZeroError::NonFinite(c.point(t)));
            }
            match unwrapped_turns(&vals) {
                Some(w) => total += if i == 0 { w } else { -w },
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(total.round() as i64);
        }
        if m >= 1 << 16 {
            return Err(ZeroError::NonFinite(C64::new(f64::NAN, f64::NAN)));
        }
        m *= 2;
    }
}

fn polish(f: &dyn Fn(C64) -> C64, df: &dyn Fn(C64) -> C64, z0: C64, mult: usize) -> C64 {
    let mut z = z0;
    let mut fz = f(z).norm();
    for _ in 0..50 {
        let d = df(z);
        if d.norm() == 0.0 {
            break;
        }
        let step = f(z) / d * mult as f64;
        let cand = z - step;
        let fc = f(cand).norm();
        if !(fc <= fz) {
            break;
        }
        z = cand;
        fz = fc;
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// All zeros of `f` inside the domain.
///
/// `df` may be omitted, in which case a central difference is used.
/// If `expected` is given, a different boundary winding is an error.
pub fn find_zeros(
    domain: &CircularDomain,
    f: &dyn Fn(C64) -> C64,
    df: Option<&dyn Fn(C64) -> C64>,
    expected: Option<usize>,
) -> Result<ZeroReport, ZeroError> {
    let winding = boundary_winding(domain, f)?;
    if winding < 0 {
        return Err(ZeroError::NegativeWinding(winding));
    }
    if let Some(e) = expected {
        if winding as usize != e {
            return Err(ZeroError::CountMismatch { winding, expected: e });
        }
    }
    let n = winding as usize;
    if n == 0 {
        return Ok(ZeroReport {
            zeros: vec![],
            winding,
            residual: 0.0,
        });
    }
    let nd = |z: C64| numeric_deriv(f, z);
    let df: &dyn Fn(C64) -> C64 = match df {
        Some(d) => d,
        None => &nd,
    };
    let m = 1024;
    let mut s = vec![C64::new(0.0, 0.0); n + 1];
    for (z, dz) in contour(domain, m) {
        let g = df(z) / f(z) * dz;
        let mut zk = C64::new(1.0, 0.0);
        for sk in s.iter_mut() {
            *sk += g * zk;
            zk *= z;
        }
    }
    for sk in s.iter_mut() {
        *sk /= C64::new(0.0, 2.0 * PI);
    }
    // Newton identities: k e_k = Σ_{i=1..k} (-1)^{i-1} e_{k-i} s_i
    let mut e = vec![C64::new(1.0, 0.0); n + 1];
    for k in 1..=n {
        let mut acc = C64::new(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[k - i] * s[i] * sign;
        }
        e[k] = acc / k as f64;
    }
    // monic coefficients, constant term first
    let coeffs: Vec<C64> = (0..n)
        .map(|j| {
            let k = n - j;
            if k % 2 == 0 {
                e[k]
            } else {
                -e[k]
            }
        })
        .collect();
    let roots = monic_roots(&coeffs);
    // cluster near-coincident roots
    let mut clusters: Vec<(C64, usize)> = vec![];
    for r in roots {
        if let Some(c) = clusters.iter_mut().find(|(c, k)| (*c / *k as f64 - r).norm() < 1e-4) {
            c.0 += r;
            c.1 += 1;
        } else {
            clusters.push((r, 1));
        }
    }
    let mut zeros: Vec<Zero> = clusters
        .into_iter()
        .map(|(sum, k)| {
            let z0 = sum / k as f64;
            Zero {
                z: polish(f, df, z0, k),
                multiplicity: k,
            }
        })
        .collect();
    zeros.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    let residual = zeros.iter().map(|z| f(z.z).norm()).fold(0.0, f64::max);
    for z in &zeros {
        if !domain.contains(z.z) {
            return Err(ZeroError::Refinement(z.z));
        }
    }
    Ok(ZeroReport {
        zeros,
        winding,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_zeros_found() {
        let d = CircularDomain::reference();
        let r = [C64::new(0.1, 0.4), C64::new(-0.8, -0.1), C64::new(0.8, 0.3)];
        // 1.5 lies outside the domain and must not be counted
        let f = move |z: C64| (z - r[0]) * (z - r[1]) * (z - r[2]) * (z - 1.5);
        let rep = find_zeros(&d, &f, None, Some(3)).unwrap();
        assert_eq!(rep.total(), 3);
        for x in r {
            assert!(rep.zeros.iter().any(|z| (z.z - x).norm() < 1e-12));
        }
    }

    #[test]
    fn zeros_in_hole_not_counted() {
        let d = CircularDomain::reference();
        let f = |z: C64| (z - 0.5) * (z - C64::new(0.0, 0.5));
        assert_eq!(boundary_winding(&d, &f).unwrap(), 1);
    }

    #[test]
    fn double_zero_multiplicity() {
        let d = CircularDomain::reference();
        let f = |z: C64| (z - 0.1) * (z - 0.1) * (z + C64::new(0.2, 0.6));
        let rep = find_zeros(&d, &f, None, None).unwrap();
        assert_eq!(rep.winding, 3);
        let dbl = rep.zeros.iter().find(|z| z.multiplicity == 2).unwrap();
        assert!((dbl.z - 0.1).norm() < 1e-7);
    }

    #[test]
    fn count_mismatch_reported() {
        let d = CircularDomain::reference();
        let f = |z: C64| z;
        assert!(matches!(
            find_zeros(&d, &f, None, Some(2)),
            Err(ZeroError::CountMismatch { winding: 1, expected: 2 })
        ));
    }
}

//! Conjugation-symmetric circular domains.
//!
//! A domain is the open outer disk minus the closed hole disks. All centers
//! sit on the real axis, so complex conjugation maps the domain onto itself
//! and its fixed-point set is a union of real segments.

use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("at least two holes are required, got {0}")]
    TooFewHoles(usize),
    #[error("circle {index} has non-positive radius {radius}")]
    BadRadius { index: usize, radius: f64 },
    #[error("circle {index} has non-real center {re}{im:+}i")]
    NonRealCenter { index: usize, re: f64, im: f64 },
    #[error("holes {a} and {b} overlap")]
    Overlap { a: usize, b: usize },
    #[error("hole {0} is not contained in the open outer disk")]
    OutsideOuter(usize),
    #[error("grid needs at least 8 points per curve, got {0}")]
    GridTooSmall(usize),
}

/// A circle with a real center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: f64,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: f64, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn point(&self, angle: f64) -> C64 {
        C64::new(self.center, 0.0) + C64::from_polar(self.radius, angle)
    }

    pub fn contains_closed(&self, z: C64) -> bool {
        (z - self.center).norm() <= self.radius
    }

    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.radius
    }
}

/// A center given either as a real number or as a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CenterSpec {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleSpec {
    pub center: CenterSpec,
    pub radius: f64,
}

impl CircleSpec {
    pub fn real(center: f64, radius: f64) -> Self {
        Self {
            center: CenterSpec::Real(center),
            radius,
        }
    }
}

/// JSON geometry description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub outer: CircleSpec,
    pub holes: Vec<CircleSpec>,
}

impl DomainConfig {
    pub fn reference() -> Self {
        Self {
            outer: CircleSpec::real(0.0, 1.0),
            holes: vec![CircleSpec::real(-0.5, 0.15), CircleSpec::real(0.5, 0.15)],
        }
    }
}

/// Validated domain: the outer disk minus `n >= 2` hole disks, holes sorted left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularDomain {
    outer: Circle,
    holes: Vec<Circle>,
}

/// One quadrature node on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySample {
    pub curve: usize,
    pub angle: f64,
    pub point: C64,
    pub outward_normal: C64,
    pub weight: f64,
}

/// The `2n + 2` real boundary points and the real segments of the domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointData {
    /// `(p_i^-, p_i^+)` for each curve `i = 0..=n`.
    pub pairs: Vec<(f64, f64)>,
    /// Open real intervals `X_0, ..., X_n`, left to right.
    pub segments: Vec<(f64, f64)>,
    /// Base point `p_0^-`, the leftmost point of the outer circle.
    pub base: f64,
}

impl FixedPointData {
    /// Index of the segment containing `x`.
    pub fn segment_of(&self, x: f64) -> Option<usize> {
        self.segments.iter().position(|&(a, b)| a < x && x < b)
    }

    /// Fixed points ordered left to right.
    pub fn ordered(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.segments.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }
}

fn resolve(index: usize, spec: &CircleSpec) -> Result<Circle, DomainError> {
    let center = match spec.center {
        CenterSpec::Real(x) => x,
        CenterSpec::Complex([re, im]) => {
            if im != 0.0 {
                return Err(DomainError::NonRealCenter { index, re, im });
            }
            re
        }
    };
    if !(spec.radius > 0.0) || !spec.radius.is_finite() || !center.is_finite() {
        return Err(DomainError::BadRadius {
            index,
            radius: spec.radius,
        });
    }
    Ok(Circle::new(center, spec.radius))
}

impl CircularDomain {
    pub fn build(config: &DomainConfig) -> Result<Self, DomainError> {
        let outer = resolve(0, &config.outer)?;
        let mut holes = config
            .holes
            .iter()
            .enumerate()
            .map(|(i, h)| resolve(i + 1, h))
            .collect::<Result<Vec<_>, _>>()?;
        for a in 0..holes.len() {
            for b in a + 1..holes.len() {
                let (ha, hb) = (holes[a], holes[b]);
                if (ha.center - hb.center).abs() <= ha.radius + hb.radius {
                    return Err(DomainError::Overlap { a: a + 1, b: b + 1 });
                }
            }
        }
        for (i, h) in holes.iter().enumerate() {
            if (h.center - outer.center).abs() + h.radius >= outer.radius {
                return Err(DomainError::OutsideOuter(i + 1));
            }
        }
        if holes.len() < 2 {
            return Err(DomainError::TooFewHoles(holes.len()));
        }
        holes.sort_by(|a, b| a.center.total_cmp(&b.center));
        Ok(Self { outer, holes })
    }

    /// Unit disk minus disks of radius 0.15 at -0.5 and 0.5.
    pub fn reference() -> Self {
        Self::build(&DomainConfig::reference()).expect("reference geometry is valid")
    }

    /// Number of holes.
    pub fn n(&self) -> usize {
        self.holes.len()
    }

    pub fn outer(&self) -> Circle {
        self.outer
    }

    pub fn holes(&self) -> &[Circle] {
        &self.holes
    }

    /// Curve `0` is the outer circle, curve `i >= 1` is hole `i`.
    pub fn curve(&self, i: usize) -> Circle {
        if i == 0 {
            self.outer
        } else {
            self.holes[i - 1]
        }
    }

    pub fn curves(&self) -> impl Iterator<Item = Circle> + '_ {
        std::iter::once(self.outer).chain(self.holes.iter().copied())
    }

    pub fn contains(&self, z: C64) -> bool {
        (z - self.outer.center).norm() < self.outer.radius
            && self.holes.iter().all(|h| !h.contains_closed(z))
    }

    /// Signed distance to the boundary: positive inside, negative outside.
    pub fn boundary_distance(&self, z: C64) -> f64 {
        let mut d = self.outer.radius - (z - self.outer.center).norm();
        for h in &self.holes {
            d = d.min((z - h.center).norm() - h.radius);
        }
        d
    }

    /// Curve nearest to `z` and the distance to it.
    pub fn nearest_curve(&self, z: C64) -> (usize, f64) {
        let mut best = (0, (self.outer.radius - (z - self.outer.center).norm()).abs());
        for (i, h) in self.holes.iter().enumerate() {
            let d = ((z - h.center).norm() - h.radius).abs();
            if d < best.1 {
                best = (i + 1, d);
            }
        }
        best
    }

    /// Unit normal at the point of curve `i` with polar angle `angle`, pointing out of the domain.
    pub fn outward_normal(&self, i: usize, angle: f64) -> C64 {
        let u = C64::from_polar(1.0, angle);
        if i == 0 {
            u
        } else {
            -u
        }
    }

    /// Angle of `z` as seen from the center of curve `i`.
    pub fn angle_on(&self, i: usize, z: C64) -> f64 {
        (z - self.curve(i).center).arg()
    }

    pub fn fixed_points(&self) -> FixedPointData {
        let n = self.n();
        let left = self.outer.center - self.outer.radius;
        let right = self.outer.center + self.outer.radius;
        let mut pairs = vec![(left, right)];
        let mut segments = Vec::with_capacity(n + 1);
        let mut start = left;
        for h in &self.holes {
            let (plus, minus) = (h.center - h.radius, h.center + h.radius);
            segments.push((start, plus));
            pairs.push((minus, plus));
            start = minus;
        }
        segments.push((start, right));
        FixedPointData {
            pairs,
            segments,
            base: left,
        }
    }

    /// Equi-angular trapezoidal nodes, ordered by curve and then by angle.
    pub fn boundary_grid(&self, m: usize) -> Result<Vec<BoundarySample>, DomainError> {
        if m < 8 {
            return Err(DomainError::GridTooSmall(m));
        }
        let mut out = Vec::with_capacity(m * (self.n() + 1));
        for (i, c) in self.curves().enumerate() {
            let w = c.circumference() / m as f64;
            for k in 0..m {
                let angle = 2.0 * PI * k as f64 / m as f64;
                out.push(BoundarySample {
                    curve: i,
                    angle,
                    point: c.point(angle),
                    outward_normal: self.outward_normal(i, angle),
                    weight: w,
                });
            }
        }
        Ok(out)
    }

    /// Largest hole radius, used to route paths around holes.
    pub fn max_hole_radius(&self) -> f64 {
        self.holes.iter().map(|h| h.radius).fold(0.0, f64::max)
    }
}

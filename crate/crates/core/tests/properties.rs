//! Property tests for invariants that hold for every admissible input.

use mcdlab::cli::PipelineConfig;
use mcdlab::domain::CircularDomain;
use mcdlab::harmonic::{HarmonicBasis, HarmonicConfig};
use mcdlab::jacobian::Jacobian;
use mcdlab::linalg::{hermitian_eigh, CMat};
use mcdlab::matinner::Team;
use mcdlab::sdp::{inner, HadamardSdp, SdpConfig};
use mcdlab::testfn::{kernel_vector, test_function, PiPoint};
use mcdlab::C64;
use nalgebra::DVector;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn basis() -> &'static HarmonicBasis {
    static B: OnceLock<HarmonicBasis> = OnceLock::new();
    B.get_or_init(|| HarmonicBasis::new(&CircularDomain::reference(), HarmonicConfig::default()).unwrap())
}

fn jac() -> &'static Jacobian {
    static J: OnceLock<Jacobian> = OnceLock::new();
    J.get_or_init(|| Jacobian::new(basis(), 1e-12, 7).unwrap())
}

fn disk_point() -> impl Strategy<Value = C64> {
    (0.0..0.7f64, -PI..PI).prop_map(|(r, t)| C64::from_polar(r, t))
}

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    // the Schur-class bound for λz on the disk is attained exactly: s* = 1/λ²
    #[test]
    fn disk_pick_bound_is_attained(pts in prop::collection::vec(disk_point(), 3), lam in 0.3..0.95f64) {
        let sep = (0..3).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| (pts[i] - pts[j]).norm()).fold(1.0, f64::min);
        prop_assume!(sep > 0.05);
        let u = vec![pts.clone()];
        let fv: Vec<C64> = pts.iter().map(|z| z * lam).collect();
        let g = CMat::from_fn(3, 3, |i, j| fv[i] * fv[j].conj());
        let t = CMat::from_element(3, 3, C64::new(1.0, 0.0));
        let sol = HadamardSdp { u: &u, g: &g, t: &t }.solve(&SdpConfig::default());
        prop_assert!((sol.s - 1.0 / (lam * lam)).abs() < 1e-6 / (lam * lam), "s = {}", sol.s);
        // weak duality: a dual-feasible kernel bounds the exact optimum from above
        let kernel = CMat::from_fn(3, 3, |i, j| (C64::new(1.0, 0.0) - pts[i].conj() * pts[j]) * sol.y[(i, j)]);
        let (eigs, _) = hermitian_eigh(&kernel);
        let dual = inner(&t, &sol.y) / inner(&g, &sol.y);
        if eigs.iter().all(|&e| e >= 0.0) {
            prop_assert!(dual >= (1.0 - 1e-12) / (lam * lam), "dual {dual}");
        }
        prop_assert!((dual - 1.0 / (lam * lam)).abs() < 1e-6 / (lam * lam), "dual {dual}");
    }

    #[test]
    fn rotated_teams_are_projection_pairs(t in 0.0..1.5f64, n in 1usize..4) {
        let team = Team::rotated(n, t);
        prop_assert!(team.defect() < 1e-12);
        prop_assert_eq!(team.pairs.len(), n);
    }

    #[test]
    fn team_distance_grows_with_angle(a in 0.0..0.7f64, b in 0.0..0.7f64) {
        prop_assume!((a - b).abs() > 1e-6);
        let s0 = Team::trivial(2);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(Team::rotated(2, lo).distance(&s0) < Team::rotated(2, hi).distance(&s0));
    }

    #[test]
    fn kernel_vector_is_positive(a0 in angle(), a1 in angle(), a2 in angle()) {
        let k = kernel_vector(basis(), &PiPoint::from_angles(&[a0, a1, a2]), C64::new(0.0, 0.0)).unwrap();
        prop_assert!(k.kappa.iter().all(|&v| v > 0.0));
        prop_assert!((k.kappa.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(k.residual < 1e-8);
        prop_assert!(k.tau.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn config_round_trips(grid in 1usize..40, extra in 0usize..12, seed in any::<u64>(), tol in 1e-12..1e-2f64) {
        let mut cfg = PipelineConfig { grid, extra_nodes: extra, seed, ..PipelineConfig::default() };
        cfg.tolerances.feasible = tol;
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn theta_is_even_and_periodic(re in prop::collection::vec(-2.0..2.0f64, 2), im in prop::collection::vec(-0.6..0.6f64, 2), k0 in -3i32..4, k1 in -3i32..4) {
        let ctx = &jac().theta;
        let z = DVector::from_fn(2, |i, _| C64::new(re[i], im[i]));
        let t = ctx.theta(&z);
        let shift = DVector::from_vec(vec![C64::new(k0 as f64, 0.0), C64::new(k1 as f64, 0.0)]);
        prop_assert!((ctx.theta(&(&z + shift)) - t).norm() < 1e-9 * t.norm());
        prop_assert!((ctx.theta(&(-&z)) - t).norm() < 1e-9 * t.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    // ψ_p is inner with one zero per curve-parameter and a zero at the base point
    #[test]
    fn test_function_is_inner(a0 in angle(), a1 in angle(), a2 in angle(), s in angle()) {
        let b = basis();
        let d = b.domain();
        let psi = test_function(b, &PiPoint::from_angles(&[a0, a1, a2]), C64::new(0.0, 0.0)).unwrap();
        prop_assert_eq!(psi.winding, 3);
        prop_assert!(psi.eval(C64::new(0.0, 0.0)).norm() < 1e-8);
        let support = psi.support(d);
        for curve in 0..3 {
            let q = d.curve(curve).point(s);
            if support.iter().all(|p| (p - q).norm() > 0.05) {
                prop_assert!((psi.eval(q).norm() - 1.0).abs() < 1e-6);
            }
        }
        for z in [C64::new(0.1, 0.6), C64::new(-0.8, -0.1), C64::new(0.0, -0.4)] {
            prop_assert!(psi.eval(z).norm() < 1.0);
        }
    }
}

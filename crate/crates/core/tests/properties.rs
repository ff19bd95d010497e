//! Invariants checked on generated inputs.

use std::f64::consts::PI;
use std::sync::Arc;

use necklab::grid::{build_annulus, DiskGrid, LogPolarGrid};
use necklab::harmonic_tools::{fourier_split_capped, whitney_extend, AnnulusFourierDecomposition};
use necklab::lorentz::lorentz_norms;
use necklab::maps::{MapDomain, RationalMapSpec, SphereMap, SphereMesh};
use necklab::series::randomized_suite;
use necklab::spectral::{annulus_hardy_eigen, assemble_jacobi, solve_weighted_eigen, HardyVariant, SolveOptions};
use necklab::wente::{dyadic_decompose, max_depth, solve_dirichlet};
use num_complex::Complex64;
use proptest::prelude::*;

fn annulus_field(g: &LogPolarGrid, c: &[f64]) -> Vec<f64> {
    let c = c.to_vec();
    g.sample(move |r, t| c[0] * r.ln() + c[1] * r * t.cos() + c[2] * (2.0 * t).sin() / (r * r) + c[3] * (5.0 * r).sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inner_and_outer_weights_share_lambda1(eta in 0.05f64..1.0, l in 2.0f64..20.0, beta in 0.05f64..0.95) {
        let delta = eta * eta * (-l).exp();
        let i = annulus_hardy_eigen(eta, delta, HardyVariant::Inner, beta, 256).unwrap();
        let o = annulus_hardy_eigen(eta, delta, HardyVariant::Outer, beta, 256).unwrap();
        prop_assert!(i.numeric > 0.0);
        prop_assert!((i.numeric - o.numeric).abs() <= 1e-9 * i.numeric);
    }

    #[test]
    fn hardy_eigenvalue_tracks_modulus(l in 2.0f64..24.0) {
        let h = annulus_hardy_eigen(1.0, (-l).exp(), HardyVariant::Hardy, 0.5, 256).unwrap();
        prop_assert!(h.rel_err().unwrap() < 1e-4);
        prop_assert!((h.numeric * l * l - PI * PI).abs() < 1e-3);
    }

    #[test]
    fn lorentz_norms_are_homogeneous(c in prop::array::uniform4(-2.0f64..2.0), k in -5.0f64..5.0) {
        prop_assume!(c.iter().any(|x| x.abs() > 1e-3) && k.abs() > 1e-3);
        let g = build_annulus(1.0, 1e-2, 48, 32).unwrap();
        let f = annulus_field(&g, &c);
        let kf: Vec<f64> = f.iter().map(|x| k * x).collect();
        let (a, b) = (lorentz_norms(&g, &f).unwrap(), lorentz_norms(&g, &kf).unwrap());
        for (x, y) in [(a.weak, b.weak), (a.l2, b.l2), (a.l21, b.l21)] {
            prop_assert!((y - k.abs() * x).abs() <= 1e-12 * y.max(1.0));
        }
        prop_assert!(a.weak <= a.l2 * (1.0 + 1e-12));
    }

    #[test]
    fn dyadic_pieces_sum_to_the_field(c in prop::array::uniform4(-1.0f64..1.0), m in 0usize..4) {
        let d = DiskGrid::new(1.0, 64, 16).unwrap();
        let b = d.sample(|r, t| c[0] * r * r + c[1] * r.powi(m as i32 + 1) * ((m + 1) as f64 * t).cos() + c[2] * (4.0 * r).sin() + c[3] * t.sin() * r);
        let p = dyadic_decompose(&d, &b, max_depth(&d)).unwrap();
        prop_assert!(p.reconstruction_error < 1e-10);
        prop_assert!(p.support_violation < 1e-12);
        prop_assert!(p.energy_ratios.iter().all(|e| e.is_finite() && *e >= 0.0));
    }

    #[test]
    fn dirichlet_solve_is_linear(k in -3.0f64..3.0, c in prop::array::uniform3(-1.0f64..1.0)) {
        let d = DiskGrid::new(1.0, 48, 16).unwrap();
        let f = d.sample(|r, t| c[0] + c[1] * r * t.cos());
        let g = d.sample(|r, t| c[2] * (3.0 * t).sin() * r * r);
        let sum: Vec<f64> = f.iter().zip(&g).map(|(x, y)| k * x + y).collect();
        let (pf, pg, ps) = (
            solve_dirichlet(&d, &f).unwrap().phi,
            solve_dirichlet(&d, &g).unwrap().phi,
            solve_dirichlet(&d, &sum).unwrap().phi,
        );
        let scale = ps.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..ps.len() {
            prop_assert!((ps[i] - k * pf[i] - pg[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn whitney_extension_is_linear(c in prop::array::uniform4(-1.0f64..1.0), e in prop::array::uniform4(-1.0f64..1.0), k in -3.0f64..3.0) {
        let g = LogPolarGrid::from_radii(1e-2, 1.0, 96, 16).unwrap();
        let (f, h) = (annulus_field(&g, &c), annulus_field(&g, &e));
        let sum: Vec<f64> = f.iter().zip(&h).map(|(x, y)| k * x + y).collect();
        let (ef, eh, es) = (whitney_extend(&g, &f).unwrap(), whitney_extend(&g, &h).unwrap(), whitney_extend(&g, &sum).unwrap());
        prop_assert!(es.support_violation < 1e-12);
        let scale = es.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..es.values.len() {
            prop_assert!((es.values[i] - k * ef.values[i] - eh.values[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn fourier_split_recovers_synthesized_coefficients(
        c0 in -1.0f64..1.0,
        c_log in -1.0f64..1.0,
        pos in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
        neg in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
    ) {
        let (rin, rout): (f64, f64) = (1e-2, 1.0);
        let pos: Vec<Complex64> = pos.iter().enumerate().map(|(n, &(a, b))| Complex64::new(a, b) / rout.powi(n as i32 + 1)).collect();
        let neg: Vec<Complex64> = neg.iter().enumerate().map(|(n, &(a, b))| Complex64::new(a, b) * rin.powi(n as i32 + 1)).collect();
        let dec = AnnulusFourierDecomposition::from_coefficients(rin, rout, c0, c_log, pos.clone(), neg.clone());
        let g = LogPolarGrid::from_radii(rin, rout, 64, 32).unwrap();
        let back = fourier_split_capped(&g, &dec.reconstruct(&g), 4).unwrap();
        prop_assert!((back.constant - c0).abs() < 1e-8);
        prop_assert!((back.log_coeff - c_log).abs() < 1e-8);
        for n in 0..4 {
            prop_assert!((back.positive_coeffs[n] - pos[n]).norm() * rout.powi(n as i32 + 1) < 1e-8);
            prop_assert!((back.negative_coeffs[n] - neg[n]).norm() / rin.powi(n as i32 + 1) < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn series_suite_has_no_violations(seed in any::<u64>()) {
        let s = randomized_suite(40, seed);
        prop_assert_eq!(s.violations, 0);
        prop_assert!(s.checks > 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn weight_scaling_rescales_eigenvalues(c in 0.25f64..4.0) {
        let mesh = SphereMesh::uniform(12, 12).unwrap();
        let map = SphereMap::sample(&RationalMapSpec::identity(), Arc::new(MapDomain::Sphere(mesh)));
        let form = assemble_jacobi(&map).unwrap();
        let base = solve_weighted_eigen(&form, 10, &SolveOptions::default()).unwrap();
        let scaled = solve_weighted_eigen(&form.scale_weight(c).unwrap(), 10, &SolveOptions::default()).unwrap();
        prop_assert_eq!((base.index, base.nullity), (scaled.index, scaled.nullity));
        for (a, b) in base.eigenvalues.iter().zip(&scaled.eigenvalues) {
            prop_assert!((b * c - a).abs() <= 1e-6 * a.abs().max(1e-3));
        }
    }
}

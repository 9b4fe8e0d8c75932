//! Property tests of the structural invariants: exterior algebra, gauges and
//! boundary points, minimal-basis radii, the Leray identity, the reflection
//! extensions, the Schur checker and the exponent fits.

use dbar_core::cforms::{projection_identities, Form, Gen, Var};
use dbar_core::domains::{random_sphere, DefiningDomain};
use dbar_core::kernels::{bm_kernel, bm_wedge_n2};
use dbar_core::littlewood_paley::ReflectionExt;
use dbar_core::minimal_basis::minimal_basis;
use dbar_core::domains::ModelKind;
use dbar_core::quadrature_estimates::{exponent_identity, fit_exponent, operator_norm, schur_discrete};
use dbar_core::solver::{ExperimentConfig, Extension, ExtensionConfig, FieldKind, FormField};
use dbar_core::support_leray::{sample_interior, sample_level_band, Support, SupportKind, SupportParams};
use dbar_core::{c64, C64};
use proptest::prelude::*;

fn domains() -> Vec<DefiningDomain> {
    vec![DefiningDomain::ball(2, 1.0), DefiningDomain::ellipsoid(2)]
}

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c64(a, b))
}

fn one_form(var_bar: fn(usize) -> Gen) -> impl Strategy<Value = Form> {
    (complex(), complex()).prop_map(move |(a, b)| Form::one_form(2, var_bar, &[a, b]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_forms_anticommute(a in one_form(Gen::Dzetab), b in one_form(Gen::Dzb)) {
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        prop_assert!(ab.add(&ba).unwrap().max_abs() <= 1e-15);
        prop_assert!(a.wedge(&a).is_zero());
    }

    #[test]
    fn wedge_is_associative(a in one_form(Gen::Dzetab), b in one_form(Gen::Dzeta), c in one_form(Gen::Dzb)) {
        let left = a.wedge(&b).wedge(&c);
        let right = a.wedge(&b.wedge(&c));
        prop_assert!(left.dist(&right) <= 1e-14);
    }

    #[test]
    fn projections_split_and_are_idempotent(f in one_form(Gen::Dzetab), t in (complex(), complex())) {
        prop_assume!(t.0.norm() + t.1.norm() > 1e-3);
        let nrm = (t.0.norm_sqr() + t.1.norm_sqr()).sqrt();
        let theta = [t.0 / nrm, t.1 / nrm];
        let top = f.project_top_with(Var::Zeta, &theta);
        let bot = f.project_bot_with(Var::Zeta, &theta);
        prop_assert!(top.add(&bot).unwrap().dist(&f) <= 1e-14);
        prop_assert!(top.project_top_with(Var::Zeta, &theta).dist(&top) <= 1e-14);
        prop_assert!(top.project_bot_with(Var::Zeta, &theta).max_abs() <= 1e-14);
    }

    #[test]
    fn projection_identities_hold_for_any_seed(seed in any::<u64>()) {
        let rep = projection_identities(20, seed).unwrap();
        prop_assert!(rep.worst() <= 1e-12, "{:?}", rep);
    }

    #[test]
    fn boundary_points_lie_on_the_boundary(seed in any::<u64>(), scale in 0.2f64..3.0) {
        let mut rng = dbar_core::rng(seed);
        for d in domains() {
            let theta = random_sphere(&mut rng, 2);
            let p = d.boundary_point(&theta);
            prop_assert!(d.rho_f(&p).abs() <= 1e-12);
            prop_assert!((d.gauge(&p) - 1.0).abs() <= 1e-12);
            let scaled: Vec<C64> = theta.iter().map(|c| c * scale).collect();
            prop_assert!((d.gauge(&scaled) - scale * d.gauge(&theta)).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn minimal_radii_grow_with_eps(j in 4i32..11) {
        for d in domains() {
            let p = d.boundary_point(&[c64(1.0, 0.0), c64(0.0, 0.0)]);
            let small = minimal_basis(&d, &p, 2f64.powi(-j - 1)).unwrap();
            let large = minimal_basis(&d, &p, 2f64.powi(-j)).unwrap();
            for k in 0..2 {
                prop_assert!(small.taus[k] < large.taus[k]);
            }
            prop_assert!(large.taus[0] <= large.taus[1]);
            let ip: C64 = large.vectors[0].iter().zip(&large.vectors[1]).map(|(a, b)| a.conj() * b).sum();
            prop_assert!(ip.norm() <= 1e-10);
        }
    }

    #[test]
    fn leray_identity_on_random_pairs(seed in any::<u64>()) {
        let mut rng = dbar_core::rng(seed);
        for d in domains() {
            let params = SupportParams::for_domain(&d).with_constants(1.0, 8.0, 2.0);
            for kind in [SupportKind::DiederichFornaess(params), SupportKind::HenkinRamirez] {
                if kind == SupportKind::HenkinRamirez && d.name() != "ball" {
                    continue;
                }
                let s = Support::new(&d, kind).unwrap();
                let z = sample_interior(&d, &mut rng);
                let zeta = sample_level_band(&d, 0.0, d.collar_width, &mut rng);
                let l = s.leray(&z, &zeta).unwrap();
                let dot: C64 = (0..2).map(|j| l.q[j] * (z[j] - zeta[j])).sum();
                prop_assert!((dot - l.s).norm() <= 1e-12);
                let fast = s.at_zeta(&zeta).unwrap().leray(&z);
                prop_assert!((fast.s - l.s).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn bm_closed_form_matches_form_route(z in (complex(), complex()), w in (complex(), complex()), f in (complex(), complex())) {
        let z = [z.0 * 0.5, z.1 * 0.5];
        let zeta = [z[0] + w.0, z[1] + w.1];
        prop_assume!((w.0.norm_sqr() + w.1.norm_sqr()).sqrt() > 1e-2);
        let k = bm_kernel(&z, &zeta, 0).unwrap();
        let g = Form::one_form(2, Gen::Dzetab, &[f.0, f.1]);
        let top = k.wedge(&g).zeta_top_part();
        let value = top.coeff(&[]) * dbar_core::cforms::zeta_volume_factor(2);
        let closed = bm_wedge_n2(&z, &zeta, [f.0, f.1]).unwrap();
        prop_assert!((value - closed).norm() <= 1e-10 * closed.norm().max(1.0));
    }

    #[test]
    fn reflection_reproduces_polynomials(order in 0usize..4, shift in 0.0f64..0.5, c in prop::collection::vec(-1.0f64..1.0, 5)) {
        let b: Vec<f64> = (1..=2 * order + 1).map(|j| j as f64 + shift * (j % 2) as f64).collect();
        let ext = ReflectionExt::new(order, b).unwrap();
        prop_assert!(ext.residual <= 1e-8);
        let poly = |x: f64| (0..=order).map(|k| c[k] * x.powi(k as i32)).sum::<f64>();
        let x = -0.3;
        let e: f64 = ext.a.iter().zip(&ext.b).map(|(a, bj)| a * poly(-bj * x)).sum();
        prop_assert!((e - poly(x)).abs() <= 1e-8 * ext.amplification());
    }

    #[test]
    fn radial_extension_is_exact_on_low_degree_data(t in 0.0f64..0.95, theta in (complex(), complex())) {
        prop_assume!(theta.0.norm() + theta.1.norm() > 1e-2);
        let d = DefiningDomain::ball(2, 1.0);
        let ext = Extension::new(&d, &ExtensionConfig::default()).unwrap();
        let f = FormField::new(FieldKind::PolynomialSolution).unwrap();
        let p = d.boundary_point(&[theta.0, theta.1]);
        let z: Vec<C64> = p.iter().map(|c| c * (1.0 + t * ext.cut_lo)).collect();
        let e = ext.apply(&f, &d, &z);
        let v = f.eval(&d, &z);
        for k in 0..2 {
            prop_assert!((e[k] - v[k]).norm() <= 1e-7, "{:?} vs {:?}", e[k], v[k]);
        }
    }

    #[test]
    fn schur_bound_dominates_the_operator_norm(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7) {
        let mut rng = dbar_core::rng(seed);
        let g: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| dbar_core::normal(&mut rng)).collect()).collect();
        for (gamma, p, q) in [(1.0, 1.0, 1.0), (1.0, f64::INFINITY, f64::INFINITY), (2.0, 1.0, 2.0)] {
            let a = schur_discrete(&g, gamma).unwrap().a;
            prop_assert!(a - operator_norm(&g, p, q) >= 0.0);
        }
    }

    #[test]
    fn exponent_fit_recovers_power_laws(c in 0.1f64..10.0, slope in -3.0f64..3.0) {
        let series: Vec<(f64, f64)> = (2..10).map(|j| {
            let d = 2f64.powi(-j);
            (d, c * d.powf(slope))
        }).collect();
        let fit = fit_exponent(&series).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() <= 1e-9);
    }

    #[test]
    fn exponent_identity_vanishes(n in 2usize..9, p in 1usize..8, half_m in 1u32..8) {
        prop_assume!(p <= n);
        prop_assert_eq!(exponent_identity(n, p, 2 * half_m), num_rational::Ratio::from_integer(0));
    }

    #[test]
    fn configs_survive_a_json_roundtrip(m in 1u32..5, q in 1usize..3, seed in any::<u64>(), points in 1usize..100_000) {
        let mut cfg = ExperimentConfig::for_domain(ModelKind::Ellipsoid { m: 2 * m });
        cfg.q = q;
        cfg.solver.seed = seed;
        cfg.solver.bm_points = points;
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

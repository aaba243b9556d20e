use std::io::BufReader;

use proptest::prelude::*;

use delaywarp::abel::{exact_transform, g};
use delaywarp::dde_sim::ProbeTarget;
use delaywarp::presets::{gu_system, preset};
use delaywarp::roots::RootOptions;
use delaywarp::{
    assemble_pie, compute_hdot_bounds, fit_seed, g_inverse, propagate, stability_probe, verify_equivalence,
    DelayProfile, ExpansionOrder, PeriodicDelay, ProbeVerdict, PropagatedTransform, PropagationOptions, TimeTransform,
};

fn delay(eps: f64) -> PeriodicDelay {
    PeriodicDelay::sinusoid(3.0, 5.0, eps).unwrap()
}

#[test]
fn second_order_equivalence_error_is_cubic() {
    let sys = gu_system();
    let sup = |eps: f64| {
        let d = delay(eps);
        let tt = TimeTransform::perturbative(&d, 3.0, ExpansionOrder::Second).unwrap();
        verify_equivalence(&sys, &d, &tt, 30.0, 0.01).unwrap().sup
    };
    let ratio = sup(0.02) / sup(0.01);
    assert!((5.0..=11.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn equivalence_improves_with_step() {
    let d = delay(0.01);
    let tt = TimeTransform::Exact(exact_transform(&d, 3.0, 30.0, &PropagationOptions::default()).unwrap());
    let sups: Vec<f64> = [0.03, 0.01, 0.003]
        .iter()
        .map(|s| verify_equivalence(&gu_system(), &d, &tt, 30.0, *s).unwrap().sup)
        .collect();
    assert!(sups.windows(2).all(|w| w[1] < w[0]), "{sups:?}");
}

#[test]
fn profile_file_to_exact_transform() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("delay.toml");
    std::fs::write(&path, "tau0 = 3.0\neps = 0.05\nomega = 5.0\nkind = \"sin\"\n").unwrap();
    let d = DelayProfile::from_path(&path).unwrap().to_delay().unwrap();
    assert_eq!(d.tau(0.1), delay(0.05).tau(0.1));

    let target = TimeTransform::perturbative(&d, 3.0, ExpansionOrder::Second).unwrap();
    let seed = fit_seed(&d, 3.0, &target).unwrap();
    let p = propagate(&seed, &d, 12.0, &PropagationOptions::default()).unwrap();

    let csv = dir.path().join("knots.csv");
    p.write_csv(std::fs::File::create(&csv).unwrap()).unwrap();
    let back = PropagatedTransform::read_csv(BufReader::new(std::fs::File::open(&csv).unwrap())).unwrap();
    for l in [-2.5, 0.0, 1.7, 11.9] {
        assert_eq!(back.eval(l).unwrap(), p.eval(l).unwrap());
        assert_eq!(back.eval_dot(l).unwrap(), p.eval_dot(l).unwrap());
    }
}

#[test]
fn exact_bounds_approach_second_order_bounds() {
    let gap = |eps: f64| {
        let d = delay(eps);
        let exact = TimeTransform::Exact(exact_transform(&d, 3.0, 30.0, &PropagationOptions::default()).unwrap());
        let approx = TimeTransform::perturbative(&d, 3.0, ExpansionOrder::Second).unwrap();
        let be = compute_hdot_bounds(&exact, (0.0, 30.0)).unwrap();
        let ba = compute_hdot_bounds(&approx, (0.0, 2.0)).unwrap();
        assert!(be.h_l > 0.0);
        (be.gamma - ba.gamma).abs()
    };
    let (g1, g2) = (gap(0.01), gap(0.02));
    assert!(g1 < 2e-4, "gap {g1}");
    assert!(g2 / g1 > 4.0, "{g2} / {g1}");
}

#[test]
fn gu_preset_pipeline() {
    let p = preset("gu-example").unwrap();
    let sys = p.system().unwrap();
    let d = p.delay().unwrap();
    let r = stability_probe(&sys, ProbeTarget::Original(&d), 200.0, &Default::default()).unwrap();
    assert_eq!(r.verdict, ProbeVerdict::Decayed);
    let tt = TimeTransform::perturbative(&d, p.tau_star, ExpansionOrder::Second).unwrap();
    let r = stability_probe(&sys, ProbeTarget::Transformed(&tt), 200.0, &Default::default()).unwrap();
    assert_eq!(r.verdict, ProbeVerdict::Decayed);
    let pie = assemble_pie(&sys, &compute_hdot_bounds(&tt, (0.0, 2.0)).unwrap(), p.tau_star);
    assert_eq!(pie.n, 2);
    assert!(pie.gamma > 0.0 && pie.gamma < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn g_round_trip(x in -100.0f64..100.0, eps in 0.0f64..0.19) {
        let d = delay(eps);
        let t = g_inverse(&d, x, &RootOptions::default()).unwrap();
        prop_assert!((g(&d, t) - x).abs() < 1e-10);
    }

    #[test]
    fn perturbative_h_is_increasing(eps in 0.0f64..0.19, a in -3.0f64..20.0, w in 1e-3f64..1.0) {
        for order in [ExpansionOrder::First, ExpansionOrder::Second] {
            let tt = TimeTransform::perturbative(&delay(eps), 3.0, order).unwrap();
            prop_assert!(tt.h(a + w).unwrap() > tt.h(a).unwrap());
        }
    }
}

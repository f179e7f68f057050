use langevin_core::decay::{max_r_beta, PhiTransform, RateFunction};
use langevin_core::model::{deterministic_flow, generator_apply, GeneratorInput};
use langevin_core::sde::{
    simulate, simulate_with_noise, Mirrored, Scheme, SeededNoise, SimConfig, StoppingRule,
};
use langevin_core::stability::decay_rate;
use langevin_core::{DiffusionSpec, PotentialParams};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PotentialParams> {
    (0.2f64..5.0, 0.2f64..5.0, 0.2f64..5.0)
        .prop_map(|(a, b, l)| PotentialParams::new(a, b, l).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn transform() -> impl Strategy<Value = PhiTransform> {
    prop_oneof![
        (0.1f64..4.0, 0.1f64..4.0).prop_map(|(r, c)| (RateFunction::linear_capped(r), c)),
        (1.2f64..4.0, 0.1f64..4.0).prop_map(|(b, c)| (RateFunction::super_geometric_max(b), c)),
        (0.2f64..3.0, 0.1f64..4.0)
            .prop_map(|(r, c)| (RateFunction::smoothed(RateFunction::linear_capped(r)), c)),
    ]
    .prop_map(|(r, c)| PhiTransform::new(r, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_semigroup(p in params(), x0 in -4.0f64..4.0, s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let a = deterministic_flow(&p, deterministic_flow(&p, x0, s).unwrap(), t).unwrap();
        let b = deterministic_flow(&p, x0, s + t).unwrap();
        prop_assert!(close(a, b, 1e-10), "{a} vs {b}");
    }

    #[test]
    fn drift_is_odd(p in params(), x in -10.0f64..10.0) {
        prop_assert_eq!(p.drift(-x), -p.drift(x));
    }

    #[test]
    fn generator_is_linear(
        p in params(), x in -3.0f64..3.0, s in 0.0f64..2.0,
        f in prop::array::uniform3(-5.0f64..5.0), g in prop::array::uniform3(-5.0f64..5.0),
        u in -3.0f64..3.0, v in -3.0f64..3.0,
    ) {
        let d = DiffusionSpec::constant(s);
        let gi = |h: [f64; 3]| GeneratorInput { x, f: h[0], fp: h[1], fpp: h[2] };
        let mix = [0, 1, 2].map(|i| u * f[i] + v * g[i]);
        let lhs = generator_apply(&p, &d, &gi(mix));
        let rhs = u * generator_apply(&p, &d, &gi(f)) + v * generator_apply(&p, &d, &gi(g));
        prop_assert!(close(lhs, rhs, 1e-9), "{lhs} vs {rhs}");
    }

    #[test]
    fn euler_converges_with_order_one(p in params(), x0 in -2.5f64..2.5) {
        prop_assume!(x0.abs() > 0.05);
        let err = |dt: f64| {
            let cfg = SimConfig::new(dt, 2.0, 0);
            let tr = simulate(&p, &DiffusionSpec::constant(0.0), x0, &cfg, &StoppingRule::None).unwrap();
            tr.times.iter().zip(&tr.states)
                .map(|(&t, &x)| (x - deterministic_flow(&p, x0, t).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(2e-3), err(1e-3));
        prop_assume!(e1 > 1e-12);
        let order = (e1 / e2).log2();
        prop_assert!(order >= 0.9, "order {order}");
    }

    #[test]
    fn mirrored_noise_mirrors_paths(
        p in params(), x0 in -2.0f64..2.0, seed in any::<u64>(), kappa in 0.0f64..2.0, milstein in any::<bool>(),
    ) {
        let d = DiffusionSpec::linear_at_root(0.0, kappa, 1.0);
        let mut cfg = SimConfig::new(1e-3, 1.0, seed);
        if milstein {
            cfg = cfg.with_scheme(Scheme::Milstein);
        }
        let a = simulate_with_noise(&p, &d, x0, &cfg, &StoppingRule::None, &mut SeededNoise::new(seed)).unwrap();
        let b = simulate_with_noise(&p, &d, -x0, &cfg, &StoppingRule::None, &mut Mirrored(SeededNoise::new(seed)))
            .unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn wider_interval_exits_later(seed in any::<u64>(), x0 in -0.2f64..0.2, h in 0.3f64..1.0, extra in 0.0f64..1.0) {
        let p = PotentialParams::new(1.0, 1.0, 1.0).unwrap();
        let d = DiffusionSpec::constant(1.0);
        let cfg = SimConfig::new(1e-3, 20.0, seed);
        let stop = |w: f64| {
            simulate(&p, &d, x0, &cfg, &StoppingRule::ExitInterval { lo: -w, hi: w })
                .unwrap()
                .stopped
                .map_or(f64::INFINITY, |s| s.time)
        };
        prop_assert!(stop(h) <= stop(h + extra));
    }

    #[test]
    fn phi_inverse_round_trips(tr in transform(), lt in -12.0f64..12.0) {
        let t = lt.exp();
        let back = tr.phi_c_inverse(tr.phi_c(t).unwrap()).unwrap();
        prop_assert!((back - t).abs() <= 1e-9 * t, "{back} vs {t}");
    }

    #[test]
    fn phi_matches_quadrature(tr in transform(), lt in -12.0f64..12.0) {
        let t = lt.exp();
        let (a, b) = (tr.phi_c(t).unwrap(), tr.phi_c_quadrature(t).unwrap());
        prop_assert!(close(a, b, 1e-9), "{a} vs {b}");
    }

    #[test]
    fn envelope_semigroup(tr in transform(), v0 in 0.01f64..3.0, s in 0.0f64..5.0, t in 0.0f64..5.0) {
        let mid = tr.envelope(v0, s).unwrap();
        prop_assume!(mid.is_normal());
        let a = tr.envelope_ln(mid, t).unwrap();
        let b = tr.envelope_ln(v0, s + t).unwrap();
        prop_assert!(close(a, b, 1e-8), "{a} vs {b}");
    }

    #[test]
    fn envelope_solves_rate_equation(tr in transform(), v0 in 0.05f64..3.0, t in 0.05f64..3.0) {
        // d/dt v = −c φ(v), checked by central differences
        let h = 1e-5 * t.max(1.0);
        let v = tr.envelope(v0, t).unwrap();
        prop_assume!(v > 1e-100);
        let fd = (tr.envelope(v0, t + h).unwrap() - tr.envelope(v0, t - h).unwrap()) / (2.0 * h);
        let want = -tr.c * tr.rate.eval(v);
        prop_assert!((fd - want).abs() <= 1e-5 * want.abs().max(v), "{fd} vs {want}");
    }

    #[test]
    fn phi_derivative_is_reciprocal_rate(tr in transform(), lt in -6.0f64..6.0) {
        let t = lt.exp();
        let h = 1e-6 * t;
        let fd = (tr.phi_c(t + h).unwrap() - tr.phi_c(t - h).unwrap()) / (2.0 * h);
        let want = 1.0 / (tr.c * tr.rate.eval(t));
        prop_assert!(close(fd, want, 1e-5), "{fd} vs {want}");
    }

    #[test]
    fn smoothed_rate_is_concave(r in 0.2f64..4.0, x in 0.0f64..8.0, h in 1e-3f64..0.5, sg in any::<bool>()) {
        let base = if sg { RateFunction::super_geometric_max(2.0) } else { RateFunction::linear_capped(r) };
        let cap = base.cap();
        let f = RateFunction::smoothed(base);
        let x = x * cap + h;
        let second = f.eval(x + h) - 2.0 * f.eval(x) + f.eval(x - h);
        prop_assert!(second <= 1e-12 * f.eval(x).max(1.0), "second difference {second} at {x}");
    }

    #[test]
    fn decay_rate_is_continuous_in_alpha(beta in 0.1f64..1.2, alpha in 0.3f64..3.0) {
        let p = PotentialParams::new(1.0, 1.0, 1.0).unwrap();
        let d = DiffusionSpec::linear_at_root(1.0, beta, 5.0);
        let da = 1e-4;
        let c0 = decay_rate(&p, &d, 1.0, alpha).unwrap().c;
        let c1 = decay_rate(&p, &d, 1.0, alpha + da).unwrap().c;
        // c(α) = α(2 − (α−1)β²/2) here, so its slope stays below 10 + β²α
        prop_assert!((c1 - c0).abs() <= da * (10.0 + beta * beta * alpha), "{c0} -> {c1}");
    }
}

#[test]
fn super_geometric_cap_is_the_rate_maximizer() {
    for beta in [1.5, 2.0, 3.0] {
        let f = RateFunction::super_geometric_max(beta);
        let r = max_r_beta(beta);
        assert!(f.eval(r) >= f.eval(r * 0.99) && f.eval(r) >= f.eval(r * 1.01));
    }
}

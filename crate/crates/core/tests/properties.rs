use std::f64::consts::PI;

use negdelay_core::analysis::{distortion, measure_advance, wavefront_time};
use negdelay_core::blocks::{
    allpass, bessel2, bessel_cascade, design_stage, gain, nd, nd_practical, neg_allpass, rect_source,
};
use negdelay_core::dsl::{parse_chain, parse_expr, BlockCall, BlockKind, ChainSpec, Expr, Factor, Stage, Term};
use negdelay_core::poly::Polynomial;
use negdelay_core::timesim::{simulate_fft, simulate_ode};
use negdelay_core::{cascade, Complex64, RationalTF, SourceParams, Stability, Waveform};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config() -> Config {
    Config {
        cases: 128,
        rng_seed: RngSeed::Fixed(0x5eed_0001),
        failure_persistence: None,
        ..Config::default()
    }
}

fn time_constant() -> impl Strategy<Value = f64> {
    0.02f64..1.5
}

fn block() -> impl Strategy<Value = BlockCall> {
    prop_oneof![
        time_constant().prop_map(|t| BlockCall::new(BlockKind::Nd, vec![("T", t)])),
        (time_constant(), 1.0f64..2.5)
            .prop_map(|(t, a)| BlockCall::new(BlockKind::Bessel2, vec![("T", t), ("alpha", a)])),
        time_constant().prop_map(|t| BlockCall::new(BlockKind::Allpass, vec![("T", t)])),
        time_constant().prop_map(|t| BlockCall::new(BlockKind::Napass, vec![("T", t)])),
        (-3.0f64..3.0).prop_map(|k| BlockCall::new(BlockKind::Gain, vec![("k", k)])),
        (time_constant(), 0.01f64..0.1, 0.01f64..0.1)
            .prop_map(|(t, a, b)| BlockCall::new(BlockKind::Ndp, vec![("T", t), ("tau_in", a * t), ("tau_fb", b * t)])),
        (1u32..4, 0.3f64..3.0)
            .prop_map(|(h, wc)| BlockCall::new(BlockKind::Bessel, vec![("m", 2.0 * h as f64), ("wc", wc)])),
        // Optional parameter left at its default.
        time_constant().prop_map(|t| BlockCall::new(BlockKind::Bessel2, vec![("T", t)])),
    ]
}

fn stage_list() -> impl Strategy<Value = Vec<RationalTF>> {
    prop::collection::vec(block().prop_map(|b| b.to_tf().unwrap()), 1..5)
}

fn expr() -> impl Strategy<Value = Expr> {
    let term = |factor: BoxedStrategy<Factor>| {
        (factor, prop_oneof![Just(1u32), 1u32..5]).prop_map(|(factor, power)| Term { factor, power })
    };
    let leaf =
        prop::collection::vec(term(block().prop_map(Factor::Block).boxed()), 1..4).prop_map(|terms| Expr { terms });
    leaf.prop_recursive(3, 24, 3, move |inner| {
        let factor = prop_oneof![block().prop_map(Factor::Block), inner.prop_map(Factor::Group)].boxed();
        prop::collection::vec(term(factor), 1..4).prop_map(|terms| Expr { terms })
    })
}

fn chain() -> impl Strategy<Value = ChainSpec> {
    let line = "[a-z0-9]{1,6}( [a-z0-9]{1,6}){0,3}|";
    (
        (0.01f64..10.0, -5.0f64..5.0, -2.0f64..2.0),
        prop::option::of(Just("src")),
        prop::collection::vec((expr(), any::<bool>()), 0..4),
        prop::collection::vec(line, 0..3),
    )
        .prop_map(|((w, h, t0), source_tap, stages, lines)| {
            let mut source = SourceParams::new(w);
            source.height = h;
            source.t0 = t0;
            let mut c = ChainSpec::new(source);
            c.source_tap = source_tap.map(str::to_string);
            c.description = lines.join("\n");
            for (i, (e, tapped)) in stages.into_iter().enumerate() {
                let tap = tapped.then(|| format!("n{i}"));
                c.stages.push(Stage::new(e, tap.as_deref()));
            }
            c
        })
}

/// Stable, proper, relative degree at least `min_rel`.
fn lowpassed_tf(min_rel: u32) -> impl Strategy<Value = RationalTF> {
    (
        1u32..3,
        0.1f64..0.8,
        prop::collection::vec(0.02f64..0.3, 0..5),
        prop::option::of(0.02f64..0.5),
        0.2f64..2.0,
    )
        .prop_map(move |(sections, t_lp, nds, ap, k)| {
            let allowed = (2 * sections - min_rel) as usize;
            let mut parts = vec![bessel2(t_lp, 1.268).unwrap().powi(sections)];
            parts.extend(nds.iter().take(allowed).map(|&t| nd(t).unwrap()));
            parts.extend(ap.map(|t| allpass(t).unwrap()));
            parts.push(gain(k).unwrap());
            cascade(&parts)
        })
}

fn signal(len: usize, lead: usize) -> impl Strategy<Value = Waveform> {
    prop::collection::vec(-1.0f64..1.0, len - lead).prop_map(move |v| {
        let mut samples = vec![0.0; lead];
        samples.extend(v);
        Waveform::new(0.0, 1e-2, samples).unwrap()
    })
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn max_dev(a: &Waveform, b: &Waveform) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn cascade_phase_and_delay_add(parts in stage_list(), w in 0.01f64..10.0) {
        let whole = cascade(&parts);
        let mut phase = 0.0;
        let mut delay = 0.0;
        let mut scale = 1.0;
        for p in &parts {
            phase += p.phase(w).unwrap();
            let d = p.group_delay(w).unwrap();
            delay += d;
            scale += d.abs();
        }
        let dphi = wrap(whole.phase(w).unwrap() - phase);
        prop_assert!(dphi.abs().min(2.0 * PI - dphi.abs()) <= 1e-9);
        prop_assert!((whole.group_delay(w).unwrap() - delay).abs() <= 1e-9 * scale);
    }

    #[test]
    fn numeric_delay_converges_quadratically(parts in stage_list(), w in 0.0f64..3.0) {
        let tf = cascade(&parts);
        let exact = tf.group_delay(w).unwrap();
        let h = 2e-2;
        let e1 = (tf.group_delay_numeric(w, h).unwrap() - exact).abs();
        let e2 = (tf.group_delay_numeric(w, h / 2.0).unwrap() - exact).abs();
        prop_assert!(e2 <= 1e-10 * (1.0 + exact.abs()) || e2 <= 0.3 * e1, "{e1} {e2}");
    }

    #[test]
    fn cascade_evaluates_as_product(parts in stage_list(), ws in prop::collection::vec(0.0f64..20.0, 100)) {
        let whole = cascade(&parts);
        for w in ws {
            let product = parts.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * p.eval(w).unwrap());
            let got = whole.eval(w).unwrap();
            prop_assert!((got - product).norm() <= 1e-12 * product.norm());
        }
    }

    #[test]
    fn classification_ignores_common_scale(parts in stage_list(), k in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let tf = cascade(&parts);
        let scaled = RationalTF::new(tf.num().scale(k), tf.den().scale(k)).unwrap();
        prop_assert_eq!(tf.poles().classification, scaled.poles().classification);
    }

    #[test]
    fn roots_reconstruct_polynomial(roots in prop::collection::vec((-3.0f64..-0.05, 0.0f64..3.0), 1..10)) {
        // Conjugate pairs of stable roots, degree up to 18.
        let mut p = Polynomial::one();
        for &(re, im) in &roots {
            p = &p * &Polynomial::new(vec![re * re + im * im, -2.0 * re, 1.0]);
        }
        let tf = RationalTF::new(Polynomial::one(), p.clone()).unwrap();
        let verdict = tf.poles();
        prop_assert_eq!(verdict.poles.len(), 2 * roots.len());
        prop_assert_eq!(verdict.classification, Stability::Stable);
        for z in &verdict.poles {
            let d = p.derivative().eval(*z).norm().max(1e-300);
            // Newton step size: how far the computed root is from a true root.
            prop_assert!(p.eval(*z).norm() / d <= 1e-6 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn single_stage_small_frequency_expansion(t in 0.01f64..10.0) {
        let tf = nd(t).unwrap();
        for x in [1e-2, 5e-3, 2e-3] {
            let w = x / t;
            let a = (tf.amplitude(w).unwrap() - 1.0) / (x * x);
            let p = (tf.phase(w).unwrap() - x) / (x * x * x);
            prop_assert!((a - 0.5).abs() < 1e-2, "{a}");
            prop_assert!((p + 1.0 / 3.0).abs() < 1e-2, "{p}");
        }
    }

    #[test]
    fn cascade_excess_gain_is_fourth_order(t in 0.01f64..2.0, n in 1u32..12) {
        let tf = nd(t).unwrap().powi(n);
        let ratios: Vec<f64> = [1e-2, 5e-3].iter().map(|x| {
            let w = x / t;
            (tf.amplitude(w).unwrap() - 1.0 - n as f64 * x * x / 2.0) / x.powi(4)
        }).collect();
        prop_assert!(ratios.iter().all(|r| r.abs() < (n * n) as f64));
    }

    #[test]
    fn practical_stage_converges_to_ideal(t in 0.05f64..1.0) {
        let ideal = nd(t).unwrap();
        let mut last = f64::INFINITY;
        for scale in [1e-1, 1e-2, 1e-3, 1e-4] {
            let prac = nd_practical(t, scale * t, scale * t).unwrap();
            let dev = (0..=200).map(|k| {
                let w = 10.0 / t * k as f64 / 200.0;
                (prac.eval(w).unwrap() - ideal.eval(w).unwrap()).norm()
            }).fold(0.0, f64::max);
            prop_assert!(dev < last);
            last = dev;
        }
        prop_assert!(last < 0.05);
    }

    #[test]
    fn design_is_monotone(gamma in 0.01f64..1.0, wc in 0.1f64..10.0, n in 1u32..40) {
        let a = design_stage(n, gamma, wc).unwrap();
        let b = design_stage(n + 1, gamma, wc).unwrap();
        prop_assert!(b.t_total > a.t_total);
        prop_assert!(b.t < a.t);
        prop_assert!(a.m >= a.n && a.m % 2 == 0 && a.m <= a.n + 1);
    }

    #[test]
    fn bessel_cascade_delay_adds(h in 1u32..6, wc in 0.1f64..10.0) {
        let section = bessel_cascade(2, wc, 1.268).unwrap().group_delay(0.0).unwrap();
        let whole = bessel_cascade(2 * h, wc, 1.268).unwrap().group_delay(0.0).unwrap();
        prop_assert!(section > 0.0);
        prop_assert!((whole - h as f64 * section).abs() <= 1e-12 * whole);
    }

    #[test]
    fn allpass_pair_over_decades(log_t in -2.0f64..1.0, w in 0.0f64..100.0) {
        let t = 10f64.powf(log_t);
        prop_assert!((allpass(t).unwrap().amplitude(w).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((neg_allpass(t).unwrap().amplitude(w).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(neg_allpass(t).unwrap().poles().classification, Stability::Unstable);
        prop_assert_eq!(allpass(t).unwrap().poles().classification, Stability::Stable);
    }

    #[test]
    fn ode_output_is_causal(tf in lowpassed_tf(0), width in 0.2f64..3.0) {
        let input = rect_source(&SourceParams::new(width), 1e-2, 10.0).unwrap();
        let y = simulate_ode(&tf, &input, 2).unwrap();
        for (t, v) in y.times().zip(y.samples()) {
            if t < -1e-9 {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn methods_agree_on_smooth_chains(tf in lowpassed_tf(2), width in 0.5f64..2.0) {
        let input = rect_source(&SourceParams::new(width), 1e-3, 20.0).unwrap();
        let fft = simulate_fft(&tf, &input).unwrap();
        let ode = simulate_ode(&tf, &input, 4).unwrap();
        prop_assert!(fft.rel_linf_distance(&ode).unwrap() <= 1e-3);
    }

    #[test]
    fn simulation_is_linear(tf in lowpassed_tf(0), x in signal(300, 0), y in signal(300, 0), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let combo = x.combine(a, &y, b).unwrap();
        let ode = |w: &Waveform| simulate_ode(&tf, w, 2).unwrap();
        let rhs = ode(&x).combine(a, &ode(&y), b).unwrap();
        prop_assert!(max_dev(&ode(&combo), &rhs) <= 1e-10 * rhs.max_abs().max(1e-300));
        let fft = |w: &Waveform| simulate_fft(&tf, w);
        if let (Ok(fx), Ok(fy), Ok(fc)) = (fft(&x), fft(&y), fft(&combo)) {
            let rhs = fx.combine(a, &fy, b).unwrap();
            prop_assert!(max_dev(&fc, &rhs) <= 1e-10 * rhs.max_abs().max(1e-300));
        }
    }

    #[test]
    fn simulation_is_time_invariant(tf in lowpassed_tf(0), x in signal(300, 1), k in 1isize..100) {
        let lhs = simulate_ode(&tf, &x.shifted(k), 2).unwrap();
        let rhs = simulate_ode(&tf, &x, 2).unwrap().shifted(k);
        prop_assert!(max_dev(&lhs, &rhs) <= 1e-9 * rhs.max_abs().max(1e-300));
    }

    #[test]
    fn long_pulse_settles_to_dc_gain(tf in lowpassed_tf(0), height in 0.1f64..5.0) {
        let mut source = SourceParams::new(40.0);
        source.height = height;
        let input = rect_source(&source, 1e-2, 41.0).unwrap();
        let y = simulate_ode(&tf, &input, 2).unwrap();
        let k = y.times().position(|t| t >= 39.9).unwrap();
        let want = tf.dc_gain().unwrap() * height;
        prop_assert!((y.samples()[k] - want).abs() <= 1e-3 * want.abs());
    }

    #[test]
    fn advance_is_antisymmetric_and_scale_free(
        tf in lowpassed_tf(1), width in 0.5f64..2.0, ka in 0.1f64..10.0, kb in 0.1f64..10.0,
    ) {
        let input = rect_source(&SourceParams::new(width), 1e-2, 30.0).unwrap();
        let lp = bessel2(0.5, 1.268).unwrap();
        let a = simulate_ode(&lp, &input, 2).unwrap();
        let b = simulate_ode(&cascade(&[lp, tf]), &input, 2).unwrap();
        let (Ok(fwd), Ok(back)) = (measure_advance(&a, &b, true), measure_advance(&b, &a, true)) else {
            return Ok(());
        };
        prop_assert_eq!(fwd.advance, -back.advance);
        let scaled = measure_advance(&a.scaled(ka), &b.scaled(kb), false).unwrap();
        prop_assert!((scaled.advance - fwd.advance).abs() <= 1e-9);
        prop_assert!((scaled.advance_fraction - fwd.advance_fraction).abs() <= 1e-9);
    }

    #[test]
    fn exact_shift_has_no_distortion(width in 0.5f64..2.0, k in -100isize..300, c in 0.1f64..10.0) {
        let input = rect_source(&SourceParams::new(width), 1e-2, 30.0).unwrap();
        let a = simulate_ode(&bessel_cascade(4, 1.0, 1.268).unwrap(), &input, 2).unwrap();
        let b = a.shifted(k).scaled(c);
        let r = measure_advance(&a, &b, true).unwrap();
        prop_assert!(r.distortion <= 1e-12, "{}", r.distortion);
        prop_assert!((r.best_shift - k as f64 * 1e-2).abs() <= 1e-9);
        let (d, _) = distortion(&a, &a.shifted(k).combine(1.0, &a, 1e-2).unwrap()).unwrap();
        prop_assert!(d > 0.0);
    }

    #[test]
    fn wavefront_is_monotone_in_threshold(tf in lowpassed_tf(0), width in 0.2f64..2.0, f1 in 1e-8f64..0.99, f2 in 1e-8f64..0.99) {
        let input = rect_source(&SourceParams::new(width), 1e-2, 20.0).unwrap();
        let y = simulate_ode(&tf, &input, 2).unwrap();
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        prop_assert!(wavefront_time(&y, lo).unwrap() <= wavefront_time(&y, hi).unwrap());
    }

    #[test]
    fn chain_round_trips(c in chain()) {
        let text = c.to_string();
        let again = parse_chain(&text).map_err(|d| TestCaseError::fail(format!("{text}\n{d:?}")))?;
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(again.to_string(), text);
    }

    #[test]
    fn repeat_equals_spelled_out(b in block(), k in 1usize..7) {
        let power = parse_expr(&format!("{b}^{k}")).unwrap().to_tf().unwrap();
        let spelled = parse_expr(&vec![b.to_string(); k].join(" * ")).unwrap().to_tf().unwrap();
        prop_assert!(power.equivalent(&spelled, 1e-12));
    }

    #[test]
    fn parse_is_total_on_arbitrary_text(text in "\\PC{0,200}") {
        if let Err(d) = parse_chain(&text) {
            prop_assert!(!d.is_empty());
        }
        if let Err(d) = parse_expr(&text) {
            prop_assert!(!d.is_empty());
        }
    }

    #[test]
    fn parse_is_total_on_token_soup(tokens in prop::collection::vec(prop_oneof![
        Just("source"), Just("stage"), Just("rect"), Just("as"), Just("nd"), Just("bessel"), Just("bessel2"),
        Just("gain"), Just("("), Just(")"), Just(","), Just("="), Just("*"), Just("^"), Just("T"), Just("width"),
        Just("m"), Just("wc"), Just("k"), Just("1"), Just("-0.5"), Just("3e400"), Just("2"), Just("\n"), Just("#"),
        Just("out"), Just("0"), Just("300"), Just("1.5"),
    ], 0..40)) {
        let text = tokens.join(" ");
        if let Err(d) = parse_chain(&text) {
            prop_assert!(!d.is_empty());
            for diag in &d {
                prop_assert!(diag.line >= 1 && diag.column >= 1);
                prop_assert!(diag.line <= text.lines().count().max(1) + 1);
            }
        }
    }
}

//! Cross-checks of the fast paths against independent computations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use resetlab::analysis::{extract_harmonic, l2_error_ratio};
use resetlab::linalg::expm;
use resetlab::reset::ResetElement;
use resetlab::sim::{run, simulate, LoopSpec, Signal, SimConfig, TraceSignal};
use resetlab::stability::assemble_closed_loop;
use resetlab::tuning::{
    build_controller, crossover_frequency, mass_plant, phase_margin_df, ControllerSpec,
};
use resetlab::LtiSystem;

fn open_loop_lti(l: &LoopSpec) -> LtiSystem {
    let mut parts: Vec<LtiSystem> = l.blocks().iter().map(|b| b.linear_part().clone()).collect();
    parts.push(l.plant().clone());
    LtiSystem::chain(parts.iter()).unwrap()
}

#[test]
fn identity_reset_matches_exact_discretisation() {
    let spec = ControllerSpec::cr_pind(2);
    let built = build_controller(&spec, &mass_plant()).unwrap();
    let lin = built.loop_spec.with_gammas(vec![1.0]).unwrap();
    let cfg = SimConfig::for_crossover(100.0).with_duration(0.4);
    let tr = simulate(&lin, &Signal::unit_step(), &cfg).unwrap();

    // unit feedback around the open-loop cascade
    let g = open_loop_lti(&lin);
    let n = g.order();
    let a = g.a() - g.b() * g.c();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * cfg.dt));
    aug.view_mut((0, n), (n, 1)).copy_from(&(g.b() * cfg.dt));
    let phi = expm(&aug);
    let mut z = DVector::zeros(n + 1);
    z[n] = 1.0;
    let y_max = tr.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..tr.len() {
        let y = (g.c() * z.rows(0, n))[(0, 0)];
        assert!(
            (y - tr.y[k]).abs() <= 1e-6 * y_max,
            "sample {k}: {y} vs {}",
            tr.y[k]
        );
        z = &phi * z;
    }
}

#[test]
fn fore_fundamental_from_simulation() {
    let elem = ResetElement::fore(110.0, 0.0).unwrap();
    let w = 100.0;
    let period = 2.0 * PI / w;
    let l = LoopSpec::open(vec![elem.clone().into()], LtiSystem::identity()).unwrap();
    let cfg = SimConfig::new(period / 2000.0, 20.0 * period);
    let tr = simulate(&l, &Signal::sine(w), &cfg).unwrap();
    let sim = extract_harmonic(&tr, TraceSignal::Y, w, 1, 10).unwrap();
    let df = elem.hosidf(w, 1).unwrap();
    assert!((sim - df).norm() / df.norm() < 0.01, "{sim} vs {df}");
}

#[test]
fn linear_sensitivity_from_simulation() {
    let built = build_controller(&ControllerSpec::pind(1), &mass_plant()).unwrap();
    for w in [2.0, 20.0, 50.0] {
        let period = 2.0 * PI / w;
        let periods = if w < 10.0 { 40.0 } else { 200.0 };
        let cfg = SimConfig::for_crossover(100.0).with_duration(periods * period);
        let r = Signal::sine(w);
        let tr = simulate(&built.loop_spec, &r, &cfg).unwrap();
        let ratio = l2_error_ratio(&tr, &r, 0.5).unwrap();
        let s = 1.0 / (Complex64::new(1.0, 0.0) + built.loop_spec.open_loop_df(w).unwrap());
        assert!((ratio / s.norm() - 1.0).abs() < 0.005, "ω={w}: {ratio} vs {}", s.norm());
    }
}

#[test]
fn lti_closed_loop_stability_agrees_with_simulation() {
    // Acl eigenvalues vs bounded or divergent time response of the γ = 1 loop
    for (gain, stable) in [(1.0, true), (1e6, false)] {
        let spec = ControllerSpec::cr_pind(1);
        let built = build_controller(&spec, &mass_plant()).unwrap();
        let kp = built.kp * gain;
        let lin = build_controller(&ControllerSpec { kp: Some(kp), ..spec }, &mass_plant())
            .unwrap()
            .loop_spec
            .with_gammas(vec![1.0])
            .unwrap();
        let m = assemble_closed_loop(&lin).unwrap();
        let hurwitz = m.acl.complex_eigenvalues().iter().all(|z| z.re < 0.0);
        assert_eq!(hurwitz, stable);
        let cfg = SimConfig::for_crossover(100.0).with_duration(1.0).with_dt(1e-6);
        let out = run(&lin, &Signal::unit_step(), &cfg).unwrap();
        assert_eq!(matches!(out.status, resetlab::sim::SimStatus::Completed), stable);
    }
}

#[test]
fn each_pi_stage_costs_about_five_degrees() {
    let plant = mass_plant();
    for cr in [false, true] {
        let pms: Vec<f64> = (1..=4)
            .map(|n| {
                let spec = ControllerSpec { n, cr_enabled: cr, ..ControllerSpec::default() };
                phase_margin_df(&build_controller(&spec, &plant).unwrap().loop_spec, 100.0).unwrap()
            })
            .collect();
        for p in pms.windows(2) {
            let loss = p[0] - p[1];
            assert!((4.0..=6.0).contains(&loss), "{pms:?}");
        }
    }
}

#[test]
fn gain_scaling_moves_kp_only() {
    let spec = ControllerSpec::cr_pind(2);
    let plant = mass_plant();
    let doubled = plant.scaled(2.0);
    let a = build_controller(&spec, &plant).unwrap();
    let b = build_controller(&spec, &doubled).unwrap();
    assert!((a.kp / b.kp - 2.0).abs() < 1e-9);
    let wa = crossover_frequency(&a.loop_spec, 100.0).unwrap();
    let wb = crossover_frequency(&b.loop_spec, 100.0).unwrap();
    assert!((wa / wb - 1.0).abs() < 1e-9);
}

#[test]
fn removing_cr_keeps_crossover() {
    let built = build_controller(&ControllerSpec::cr_pind(3), &mass_plant()).unwrap();
    // drop R, D, the reset element and L (indices 3..=0)
    let mut l = built.loop_spec.clone();
    for i in (0..4).rev() {
        l = l.without_block(i).unwrap();
    }
    let w = crossover_frequency(&l, 100.0).unwrap();
    assert!((w / 100.0 - 1.0).abs() < 0.01, "{w}");
}

fn abs_diffs(u: &[f64]) -> Vec<f64> {
    u.windows(2).map(|p| (p[1] - p[0]).abs()).collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// Largest ratio between the step across a reset and the median step in
/// the surrounding ±25 samples.
fn worst_local_jump(u: &[f64], resets: &[f64], dt: f64) -> f64 {
    let d = abs_diffs(u);
    resets
        .iter()
        .filter(|&&te| te > 0.0)
        .map(|&te| {
            let k = ((te / dt).ceil() as usize).clamp(1, d.len()) - 1;
            let lo = k.saturating_sub(25);
            let hi = (k + 26).min(d.len());
            let mut nbhd: Vec<f64> = d[lo..hi].to_vec();
            nbhd.remove(k - lo);
            d[k] / median(&nbhd)
        })
        .fold(0.0, f64::max)
}

#[test]
fn cr_output_is_continuous() {
    let w = 100.0;
    let r = Signal::sine(w);
    let cfg = SimConfig::for_crossover(100.0).with_duration(10.0 * 2.0 * PI / w);
    let fine = cfg.with_dt(cfg.dt / 2.0);
    for n in 1..=4 {
        let built = build_controller(&ControllerSpec::cr_pind(n), &mass_plant()).unwrap();
        let tr = simulate(&built.loop_spec, &r, &cfg).unwrap();
        assert!(tr.reset_times.len() > 10);
        let local = worst_local_jump(&tr.u, &tr.reset_times, cfg.dt);
        assert!(local <= 10.0, "n={n}: local ratio {local}");

        // steps shrink with dt, so there is no jump
        let max = |u: &[f64]| abs_diffs(u).into_iter().fold(0.0, f64::max);
        let half = simulate(&built.loop_spec, &r, &fine).unwrap();
        let shrink = max(&half.u) / max(&tr.u);
        assert!(shrink < 0.6, "n={n}: {shrink}");

        // without R(s) the reset jump reaches u
        let raw = built.loop_spec.without_block(3).unwrap();
        let out = run(&raw, &r, &cfg).unwrap();
        let d = abs_diffs(&out.trace.u);
        let med = median(&d);
        let at_reset = out
            .trace
            .reset_times
            .iter()
            .filter(|&&te| te > 0.0)
            .map(|&te| d[((te / cfg.dt).ceil() as usize).clamp(1, d.len()) - 1])
            .fold(0.0, f64::max);
        assert!(at_reset > 100.0 * med, "n={n}: {at_reset} vs {med}");
    }
}

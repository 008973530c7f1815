use num_complex::Complex64;

use super::AnalysisError;
use crate::sim::{Signal, Trace, TraceSignal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub overshoot_pct: f64,
    /// Time after which `y` stays inside the 2% band around its final value.
    pub settling_time: f64,
    pub peak_control: f64,
    pub steady_state_error: f64,
    pub y_final: f64,
}

const SETTLE_BAND: f64 = 0.02;

fn tail_start(len: usize, fraction: f64) -> usize {
    let n = ((len as f64) * fraction).ceil() as usize;
    len - n.clamp(1, len)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Overshoot, settling time, peak control effort and final error of a step
/// response. The run counts as settled when the standard deviation of `y`
/// over the last 10% is below 1% of the reference.
pub fn step_metrics(trace: &Trace) -> Result<StepMetrics, AnalysisError> {
    let len = trace.len();
    if len < 20 {
        return Err(AnalysisError::WindowTooShort { have: len as f64, need: 20.0 });
    }
    let r_final = trace.r[len - 1];
    if r_final == 0.0 || !r_final.is_finite() {
        return Err(AnalysisError::NotAStep);
    }

    let w10 = &trace.y[tail_start(len, 0.10)..];
    let m10 = mean(w10);
    let sd = (w10.iter().map(|v| (v - m10).powi(2)).sum::<f64>() / w10.len() as f64).sqrt();
    if !(sd < 0.01 * r_final.abs()) {
        return Err(AnalysisError::Unsettled { final_std: sd });
    }

    let tail5 = tail_start(len, 0.05);
    let y_final = mean(&trace.y[tail5..]);
    let steady_state_error = mean(&trace.e[tail5..].iter().map(|v| v.abs()).collect::<Vec<_>>());

    let y_max = trace.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_min = trace.y.iter().copied().fold(f64::INFINITY, f64::min);
    // Overshoot is measured in the direction of travel.
    let peak = if y_final >= 0.0 { y_max } else { y_min };
    let overshoot_pct = ((peak - y_final) / y_final * 100.0).max(0.0);

    let band = SETTLE_BAND * y_final.abs();
    let outside = |k: usize| (trace.y[k] - y_final).abs() > band;
    let settling_time = match (0..len).rev().find(|&k| outside(k)) {
        None => trace.t[0],
        Some(k) if k + 1 >= len => trace.t[len - 1],
        Some(k) => {
            // Interpolate the band exit between samples k and k+1.
            let d0 = (trace.y[k] - y_final).abs() - band;
            let d1 = (trace.y[k + 1] - y_final).abs() - band;
            let frac = if d0 - d1 != 0.0 { d0 / (d0 - d1) } else { 1.0 };
            trace.t[k] + frac.clamp(0.0, 1.0) * (trace.t[k + 1] - trace.t[k])
        }
    };

    let peak_control = trace.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(StepMetrics {
        overshoot_pct,
        settling_time,
        peak_control,
        steady_state_error,
        y_final,
    })
}

/// `‖e‖₂ / ‖r‖₂` over the part of the trace after `discard_fraction`.
/// The kept window must span at least 20 periods of the slowest tone.
pub fn l2_error_ratio(
    trace: &Trace,
    reference: &Signal,
    discard_fraction: f64,
) -> Result<f64, AnalysisError> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(AnalysisError::InvalidArgument(format!(
            "discard_fraction = {discard_fraction} outside [0, 1)"
        )));
    }
    let period = reference.base_period().ok_or(AnalysisError::NotPeriodic)?;
    let len = trace.len();
    let start = ((len as f64) * discard_fraction).floor() as usize;
    if len < 2 || start + 1 >= len {
        return Err(AnalysisError::WindowTooShort { have: 0.0, need: 20.0 });
    }
    let span = trace.t[len - 1] - trace.t[start] + trace.dt();
    let periods = span / period;
    if periods < 20.0 - 1e-9 {
        return Err(AnalysisError::WindowTooShort { have: periods, need: 20.0 });
    }
    let e2: f64 = trace.e[start..].iter().map(|v| v * v).sum();
    let r2: f64 = trace.r[start..].iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(AnalysisError::NotPeriodic);
    }
    Ok((e2 / r2).sqrt())
}

/// Complex coefficient `c` of the `n`-th harmonic of `which` over the last
/// `periods` base periods of the trace, so that the harmonic reads
/// `|c|·sin(nωt + ∠c)`. The window must hold a whole number of samples.
pub fn extract_harmonic(
    trace: &Trace,
    which: TraceSignal,
    base_omega: f64,
    n: u32,
    periods: usize,
) -> Result<Complex64, AnalysisError> {
    if !(base_omega > 0.0) || n == 0 {
        return Err(AnalysisError::InvalidArgument(format!(
            "base_omega = {base_omega}, n = {n}"
        )));
    }
    let dt = trace.dt();
    let window = periods as f64 * 2.0 * std::f64::consts::PI / base_omega;
    let samples = window / dt;
    let count = samples.round();
    if periods < 10 || (samples - count).abs() > 1e-6 * samples.max(1.0) {
        return Err(AnalysisError::NonIntegerPeriods { periods: window / dt });
    }
    let count = count as usize;
    let len = trace.len();
    if count + 1 > len {
        return Err(AnalysisError::WindowTooShort {
            have: (len.saturating_sub(1)) as f64 * dt / (window / periods as f64),
            need: periods as f64,
        });
    }
    let s = trace.signal(which);
    let start = len - 1 - count;
    let w = n as f64 * base_omega;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in start..len - 1 {
        let th = w * trace.t[k];
        acc += Complex64::new(th.cos(), -th.sin()) * s[k];
    }
    Ok(Complex64::new(0.0, 2.0 / count as f64) * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn trace_from(t: Vec<f64>, y: Vec<f64>, r: f64) -> Trace {
        let n = t.len();
        Trace {
            r: vec![r; n],
            e: y.iter().map(|v| r - v).collect(),
            u: vec![0.0; n],
            x1: vec![f64::NAN; n],
            x2: vec![f64::NAN; n],
            y,
            t,
            reset_times: vec![],
            reset_levels: vec![],
        }
    }

    fn grid(dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn constant_output() {
        let t = grid(0.01, 1000);
        let m = step_metrics(&trace_from(t, vec![1.0; 1000], 1.0)).unwrap();
        assert_eq!(m.overshoot_pct, 0.0);
        assert_eq!(m.settling_time, 0.0);
    }

    #[test]
    fn thirty_percent_peak() {
        let t = grid(0.01, 2000);
        let y: Vec<f64> = t.iter().map(|&tt| if (0.5..0.6).contains(&tt) { 1.3 } else { 1.0 }).collect();
        let m = step_metrics(&trace_from(t, y, 1.0)).unwrap();
        assert!((m.overshoot_pct - 30.0).abs() < 1e-9);
    }

    #[test]
    fn first_order_settling() {
        let t = grid(1e-3, 40001);
        let y: Vec<f64> = t.iter().map(|&tt| 1.0 - (-tt).exp()).collect();
        let m = step_metrics(&trace_from(t, y, 1.0)).unwrap();
        assert!((m.settling_time - (-(0.02f64).ln())).abs() < 2e-3, "{}", m.settling_time);
    }

    #[test]
    fn unsettled_detected() {
        let t = grid(0.01, 1000);
        let y: Vec<f64> = t.iter().map(|&tt| 1.0 + 0.5 * (20.0 * tt).sin()).collect();
        assert!(matches!(
            step_metrics(&trace_from(t, y, 1.0)),
            Err(AnalysisError::Unsettled { .. })
        ));
    }

    #[test]
    fn l2_ratio_extremes() {
        let sig = Signal::sine(2.0);
        let dt = PI / 1000.0;
        let t = grid(dt, 40_000);
        let r: Vec<f64> = t.iter().map(|&tt| sig.eval(tt)).collect();
        let mut tr = trace_from(t.clone(), vec![0.0; t.len()], 0.0);
        tr.r = r.clone();
        tr.e = r.clone();
        assert!((l2_error_ratio(&tr, &sig, 0.5).unwrap() - 1.0).abs() < 1e-12);
        tr.e = vec![0.0; t.len()];
        assert_eq!(l2_error_ratio(&tr, &sig, 0.5).unwrap(), 0.0);
        assert!(matches!(
            l2_error_ratio(&tr, &sig, 0.99),
            Err(AnalysisError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn harmonic_projection() {
        let w = 10.0;
        let dt = 2.0 * PI / w / 400.0;
        let t = grid(dt, 400 * 12 + 1);
        let y: Vec<f64> = t
            .iter()
            .map(|&tt| 3.0 * (w * tt).sin() + 0.2 * (3.0 * w * tt - PI / 2.0).sin())
            .collect();
        let tr = trace_from(t, y, 0.0);
        let c1 = extract_harmonic(&tr, TraceSignal::Y, w, 1, 10).unwrap();
        assert!((c1.norm() - 3.0).abs() < 1e-9 && c1.arg().abs() < 1e-9);
        let c3 = extract_harmonic(&tr, TraceSignal::Y, w, 3, 10).unwrap();
        assert!((c3.norm() - 0.2).abs() < 1e-3);
        assert!((c3.arg().to_degrees() + 90.0).abs() < 1e-3);
        assert!(matches!(
            extract_harmonic(&tr, TraceSignal::Y, 10.3, 1, 10),
            Err(AnalysisError::NonIntegerPeriods { .. })
        ));
    }
}

use super::{Block, LoopSpec, ResetTrigger, Signal, SimConfig, SimError, Trace};
use crate::lti::LtiSystem;
use crate::reset::ResetElement;

/// Resets beyond this count abort the run.
const MAX_RESETS: usize = 1_000_000;
/// A run is abandoned early once |y| passes this multiple of the
/// instability bound, or becomes non-finite.
const HARD_BLOWUP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimStatus {
    Completed,
    /// `t` is the first instant |y| crossed the instability bound.
    Diverged { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trace: Trace,
    pub status: SimStatus,
}

/// Simulate, returning the trace even when the loop diverges.
pub fn run(spec: &LoopSpec, reference: &Signal, cfg: &SimConfig) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    if !reference.is_finite() {
        return Err(SimError::InvalidReference);
    }
    let mut engine = Engine::new(spec, reference, cfg);
    engine.run()
}

/// Simulate; a diverging loop is reported as [`SimError::Diverged`].
pub fn simulate(spec: &LoopSpec, reference: &Signal, cfg: &SimConfig) -> Result<Trace, SimError> {
    let out = run(spec, reference, cfg)?;
    match out.status {
        SimStatus::Completed => Ok(out.trace),
        SimStatus::Diverged { t } => Err(SimError::Diverged { t }),
    }
}

/// Flattened SISO block.
struct Compiled {
    offset: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

impl Compiled {
    fn new(sys: &LtiSystem, offset: usize) -> Self {
        let n = sys.order();
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a.push(sys.a()[(i, j)]);
            }
        }
        Self {
            offset,
            n,
            a,
            b: sys.b().column(0).iter().copied().collect(),
            c: sys.c().row(0).iter().copied().collect(),
            d: sys.feedthrough(),
        }
    }

    #[inline]
    fn output(&self, x: &[f64], input: f64) -> f64 {
        let xs = &x[self.offset..self.offset + self.n];
        let mut y = self.d * input;
        for (c, v) in self.c.iter().zip(xs) {
            y += c * v;
        }
        y
    }

    #[inline]
    fn derivative(&self, x: &[f64], input: f64, dx: &mut [f64]) {
        let xs = &x[self.offset..self.offset + self.n];
        for i in 0..self.n {
            let mut v = self.b[i] * input;
            let row = &self.a[i * self.n..(i + 1) * self.n];
            for (a, s) in row.iter().zip(xs) {
                v += a * s;
            }
            dx[self.offset + i] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Signals {
    e: f64,
    u: f64,
    y: f64,
    x1: f64,
    x2: f64,
    trigger: f64,
}

struct Engine<'a> {
    blocks: Vec<Compiled>,
    plant: Compiled,
    reset: Option<(usize, &'a ResetElement)>,
    saturation: Option<f64>,
    closed: bool,
    trigger: ResetTrigger,
    reference: &'a Signal,
    cfg: &'a SimConfig,
    n: usize,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a LoopSpec, reference: &'a Signal, cfg: &'a SimConfig) -> Self {
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(spec.blocks().len());
        let mut reset = None;
        for (i, b) in spec.blocks().iter().enumerate() {
            blocks.push(Compiled::new(b.linear_part(), offset));
            if let Block::Reset(e) = b {
                reset = Some((i, e));
            }
            offset += b.order();
        }
        let plant = Compiled::new(spec.plant(), offset);
        let n = offset + spec.plant().order();
        Self {
            blocks,
            plant,
            reset,
            saturation: spec.saturation(),
            closed: spec.is_closed(),
            trigger: spec.trigger(),
            reference,
            cfg,
            n,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    /// Evaluate signals and, when `dx` is given, the state derivative.
    fn eval(&self, t: f64, x: &[f64], dx: Option<&mut [f64]>) -> Signals {
        let r = self.reference.eval(t);
        let mut s = Signals::default();
        let mut dx = dx;
        // closed loop requires a strictly proper plant, so y needs no u
        let y_fb = if self.closed { self.plant.output(x, 0.0) } else { 0.0 };
        s.e = if self.closed { r - y_fb } else { r };
        let mut sig = s.e;
        for (i, blk) in self.blocks.iter().enumerate() {
            let is_reset = matches!(self.reset, Some((ri, _)) if ri == i);
            if is_reset {
                s.x1 = sig;
            }
            if let Some(dx) = dx.as_deref_mut() {
                blk.derivative(x, sig, dx);
            }
            sig = blk.output(x, sig);
            if is_reset {
                s.x2 = sig;
            }
        }
        s.u = match self.saturation {
            Some(level) => sig.clamp(-level, level),
            None => sig,
        };
        if let Some(dx) = dx {
            self.plant.derivative(x, s.u, dx);
        }
        s.y = if self.closed { y_fb } else { self.plant.output(x, s.u) };
        s.trigger = match self.trigger {
            ResetTrigger::ElementInput => s.x1,
            ResetTrigger::LoopError => s.e,
        };
        s
    }

    fn trigger_value(&self, t: f64, x: &[f64]) -> f64 {
        self.eval(t, x, None).trigger
    }

    /// One classic RK4 step of length `h` from `(t, x)` into `out`.
    fn rk4(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) {
        let n = self.n;
        let mut k = std::mem::take(&mut self.k);
        let mut tmp = std::mem::take(&mut self.tmp);

        self.eval(t, x, Some(&mut k[0]));
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k[0][i];
        }
        self.eval(t + 0.5 * h, &tmp, Some(&mut k[1]));
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k[1][i];
        }
        self.eval(t + 0.5 * h, &tmp, Some(&mut k[2]));
        for i in 0..n {
            tmp[i] = x[i] + h * k[2][i];
        }
        self.eval(t + h, &tmp, Some(&mut k[3]));
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }

        self.k = k;
        self.tmp = tmp;
    }

    fn apply_jump(&self, x: &mut [f64]) {
        if let Some((ri, elem)) = self.reset {
            let blk = &self.blocks[ri];
            elem.jump_in_place(&mut x[blk.offset..blk.offset + blk.n]);
        }
    }

    /// Advance `x` from `t0` to `t1`, firing resets on the way.
    fn advance(
        &mut self,
        t0: f64,
        t1: f64,
        x: &mut Vec<f64>,
        resets: &mut Vec<f64>,
        levels: &mut Vec<f64>,
    ) -> Result<(), SimError> {
        let mut ts = t0;
        let mut x_new = vec![0.0; self.n];
        let mut g_s = self.trigger_value(ts, x);
        loop {
            let h = t1 - ts;
            if h <= 0.0 {
                return Ok(());
            }
            self.rk4(ts, x, h, &mut x_new);
            if self.reset.is_none() {
                std::mem::swap(x, &mut x_new);
                return Ok(());
            }
            let g_new = self.trigger_value(t1, &x_new);
            if !crosses(g_s, g_new) {
                std::mem::swap(x, &mut x_new);
                return Ok(());
            }

            // bracket the crossing in (lo, hi]
            let (mut lo, mut hi) = (0.0, h);
            let mut g_lo = g_s;
            let mut x_mid = vec![0.0; self.n];
            while hi - lo > self.cfg.event_tol {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                self.rk4(ts, x, mid, &mut x_mid);
                let g_mid = self.trigger_value(ts + mid, &x_mid);
                if g_mid != 0.0 && g_mid.signum() == g_lo.signum() {
                    lo = mid;
                    g_lo = g_mid;
                } else {
                    hi = mid;
                }
            }
            let te = ts + hi;
            if hi < h {
                self.rk4(ts, x, hi, &mut x_mid);
            } else {
                x_mid.copy_from_slice(&x_new);
            }
            let coalesced = resets
                .last()
                .is_some_and(|&last| te - last <= self.cfg.event_tol);
            if !coalesced {
                levels.push(self.trigger_value(te, &x_mid));
                self.apply_jump(&mut x_mid);
                resets.push(te);
                if resets.len() > MAX_RESETS {
                    return Err(SimError::EventStorm(MAX_RESETS));
                }
            }
            std::mem::swap(x, &mut x_mid);
            ts = te;
            g_s = self.trigger_value(ts, x);
        }
    }

    fn run(&mut self) -> Result<SimOutcome, SimError> {
        let cfg = *self.cfg;
        let steps = cfg.steps();
        let stride = cfg.record_stride;
        let dt = cfg.dt;

        let r_max = (0..=steps)
            .map(|k| self.reference.eval(k as f64 * dt).abs())
            .fold(0.0, f64::max);
        let bound = cfg.instability_bound * if r_max > 0.0 { r_max } else { 1.0 };
        let hard = HARD_BLOWUP * bound;

        let cap = steps / stride + 1;
        let mut trace = Trace {
            t: Vec::with_capacity(cap),
            r: Vec::with_capacity(cap),
            e: Vec::with_capacity(cap),
            u: Vec::with_capacity(cap),
            y: Vec::with_capacity(cap),
            x1: Vec::with_capacity(cap),
            x2: Vec::with_capacity(cap),
            reset_times: Vec::new(),
            reset_levels: Vec::new(),
        };
        let has_reset = self.reset.is_some();
        let mut x = vec![0.0; self.n];

        // an exact zero of the trigger at t = 0 counts as a crossing
        if has_reset && self.trigger_value(0.0, &x) == 0.0 {
            self.apply_jump(&mut x);
            trace.reset_times.push(0.0);
            trace.reset_levels.push(0.0);
        }
        self.record(&mut trace, 0.0, &x);

        let mut first_exceed: Option<f64> = None;
        let mut aborted = false;
        for k in 0..steps {
            let t0 = k as f64 * dt;
            let t1 = (k + 1) as f64 * dt;
            self.advance(t0, t1, &mut x, &mut trace.reset_times, &mut trace.reset_levels)?;
            let s = self.eval(t1, &x, None);
            if first_exceed.is_none() && s.y.abs() > bound {
                first_exceed = Some(t1);
            }
            let blown = !s.y.is_finite() || s.y.abs() > hard || x.iter().any(|v| !v.is_finite());
            if (k + 1) % stride == 0 || blown {
                self.push(&mut trace, t1, &s);
            }
            if blown {
                first_exceed.get_or_insert(t1);
                aborted = true;
                break;
            }
        }

        let status = match first_exceed {
            None => SimStatus::Completed,
            Some(t) if aborted || still_growing(&trace, bound) => SimStatus::Diverged { t },
            Some(_) => SimStatus::Completed,
        };
        Ok(SimOutcome { trace, status })
    }

    fn record(&self, trace: &mut Trace, t: f64, x: &[f64]) {
        let s = self.eval(t, x, None);
        self.push(trace, t, &s);
    }

    fn push(&self, trace: &mut Trace, t: f64, s: &Signals) {
        let has_reset = self.reset.is_some();
        trace.t.push(t);
        trace.r.push(self.reference.eval(t));
        trace.e.push(s.e);
        trace.u.push(s.u);
        trace.y.push(s.y);
        trace.x1.push(if has_reset { s.x1 } else { f64::NAN });
        trace.x2.push(if has_reset { s.x2 } else { f64::NAN });
    }
}

#[inline]
fn crosses(before: f64, after: f64) -> bool {
    (before < 0.0 && after > 0.0) || (before > 0.0 && after < 0.0) || (after == 0.0 && before != 0.0)
}

/// A bound excursion counts as divergence when |y| is still beyond the
/// bound at the end, or the tracking error envelope over the last 10% of
/// the horizon has not shrunk relative to the 10% before it.
fn still_growing(trace: &Trace, bound: f64) -> bool {
    let n = trace.len();
    let w = (n / 10).max(1);
    if n < 2 * w {
        return true;
    }
    let peak = |range: std::ops::Range<usize>, v: &[f64]| {
        v[range].iter().map(|x| x.abs()).fold(0.0, f64::max)
    };
    let tail_y = peak(n - w..n, &trace.y);
    if tail_y > bound {
        return true;
    }
    let tail_e = peak(n - w..n, &trace.e);
    let prev_e = peak(n - 2 * w..n - w, &trace.e);
    tail_e >= prev_e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reset::ResetElement;
    use std::f64::consts::PI;

    fn integrator() -> LtiSystem {
        LtiSystem::first_order(None, Some(0.0), 1.0).unwrap()
    }

    #[test]
    fn clegg_open_loop_sine() {
        let w = 10.0;
        let spec = LoopSpec::open(vec![ResetElement::clegg().into()], LtiSystem::identity()).unwrap();
        let period = 2.0 * PI / w;
        let cfg = SimConfig::new(period / 2000.0, 5.0 * period);
        let tr = simulate(&spec, &Signal::sine(w), &cfg).unwrap();
        // peaks at 2/ω, resets every π/ω
        let peak = tr.y.iter().copied().fold(0.0, f64::max);
        assert!((peak - 2.0 / w).abs() < 1e-8, "{peak}");
        assert_eq!(tr.reset_times[0], 0.0);
        for pair in tr.reset_times.windows(2) {
            assert!((pair[1] - pair[0] - PI / w).abs() < 1e-9);
        }
        assert_eq!(tr.reset_times.len(), 10);
    }

    #[test]
    fn deterministic() {
        let e = ResetElement::fore(110.0, 0.0).unwrap();
        let plant = LtiSystem::series(&integrator(), &integrator()).unwrap();
        let lead = LtiSystem::first_order(Some(33.3), Some(300.0), 3000.0).unwrap();
        let spec = LoopSpec::closed(vec![e.into(), lead.into()], plant).unwrap();
        let cfg = SimConfig::for_crossover(100.0).with_duration(0.5);
        let a = simulate(&spec, &Signal::unit_step(), &cfg).unwrap();
        let b = simulate(&spec, &Signal::unit_step(), &cfg).unwrap();
        assert!(a.bit_identical(&b));
    }

    #[test]
    fn unstable_loop_diverges() {
        // positive real pole in the loop
        let plant = LtiSystem::series(&integrator(), &integrator()).unwrap();
        let spec = LoopSpec::closed(vec![LtiSystem::gain(1.0).into()], plant.clone()).unwrap();
        // pure gain on a double integrator oscillates forever but stays bounded
        let cfg = SimConfig::new(1e-3, 20.0);
        assert!(simulate(&spec, &Signal::unit_step(), &cfg).is_ok());
        let neg = LoopSpec::closed(vec![LtiSystem::gain(-1.0).into()], plant).unwrap();
        assert!(matches!(
            simulate(&neg, &Signal::unit_step(), &cfg),
            Err(SimError::Diverged { .. })
        ));
    }

    #[test]
    fn stride_keeps_uniform_grid() {
        let plant = integrator();
        let spec = LoopSpec::closed(vec![LtiSystem::gain(5.0).into()], plant).unwrap();
        let cfg = SimConfig::new(1e-3, 1.0).with_stride(10);
        let tr = simulate(&spec, &Signal::unit_step(), &cfg).unwrap();
        assert_eq!(tr.len(), 101);
        for w in tr.t.windows(2) {
            assert!((w[1] - w[0] - 1e-2).abs() < 1e-12);
        }
        // first-order loop: y = 1 - e^{-5t}
        let want = 1.0 - (-5.0f64).exp();
        assert!((tr.y[100] - want).abs() < 1e-10);
    }
}

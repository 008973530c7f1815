use std::f64::consts::PI;

/// One sinusoidal component `amplitude · sin(omega t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Tone {
    pub fn new(amplitude: f64, omega: f64) -> Self {
        Self {
            amplitude,
            omega,
            phase: 0.0,
        }
    }
}

/// Reference signals.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    /// `amplitude` for all `t ≥ 0`.
    Step { amplitude: f64 },
    Sine(Tone),
    Multisine(Vec<Tone>),
}

impl Signal {
    pub fn unit_step() -> Self {
        Signal::Step { amplitude: 1.0 }
    }

    pub fn step(amplitude: f64) -> Self {
        Signal::Step { amplitude }
    }

    pub fn sine(omega: f64) -> Self {
        Signal::Sine(Tone::new(1.0, omega))
    }

    /// Unit-amplitude tones at the given frequencies.
    pub fn multisine(omegas: &[f64]) -> Self {
        Signal::Multisine(omegas.iter().map(|&w| Tone::new(1.0, w)).collect())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Step { amplitude } => *amplitude,
            Signal::Sine(tone) => tone.amplitude * (tone.omega * t + tone.phase).sin(),
            Signal::Multisine(tones) => tones
                .iter()
                .map(|tone| tone.amplitude * (tone.omega * t + tone.phase).sin())
                .sum(),
        }
    }

    /// Slowest angular frequency present, `None` for a step.
    pub fn slowest_omega(&self) -> Option<f64> {
        match self {
            Signal::Step { .. } => None,
            Signal::Sine(tone) => Some(tone.omega),
            Signal::Multisine(tones) => tones.iter().map(|t| t.omega).reduce(f64::min),
        }
    }

    /// Period of the slowest component.
    pub fn base_period(&self) -> Option<f64> {
        self.slowest_omega().map(|w| 2.0 * PI / w)
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Signal::Step { amplitude } => amplitude.is_finite(),
            Signal::Sine(t) => t.amplitude.is_finite() && t.omega > 0.0 && t.phase.is_finite(),
            Signal::Multisine(ts) => ts
                .iter()
                .all(|t| t.amplitude.is_finite() && t.omega > 0.0 && t.phase.is_finite()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_constant() {
        let s = Signal::unit_step();
        assert_eq!(s.eval(0.0), 1.0);
        assert_eq!(s.eval(123.4), 1.0);
        assert_eq!(Signal::step(2.5).eval(1.0), 2.5);
    }

    #[test]
    fn sine_value() {
        let s = Signal::sine(2.0);
        assert!((s.eval(PI / 4.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn multisine_sum() {
        let s = Signal::multisine(&[1.0, 2.0, 4.0]);
        for t in [0.0f64, 0.3, 1.7, 12.0] {
            let want = t.sin() + (2.0 * t).sin() + (4.0 * t).sin();
            assert!((s.eval(t) - want).abs() < 1e-14);
        }
        assert_eq!(s.slowest_omega(), Some(1.0));
        assert!((s.base_period().unwrap() - 2.0 * PI).abs() < 1e-15);
    }
}

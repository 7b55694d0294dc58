//! Control functions and their chopped-random-basis parametrization.
//!
//! A control is a scalar function of time driving either the position or the
//! depth of a well. The optimizable flavor is a truncated Fourier series with
//! randomized ("dressed") frequencies riding on top of a guess, windowed by an
//! envelope that vanishes at both ends of the protocol so the control always
//! starts and ends on the guess.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar control function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Control {
    Zero,
    Constant(f64),
    /// Piecewise-linear interpolation through samples; clamped to the end
    /// values outside the sampled range.
    Samples(SampledControl),
    Crab(Box<CrabWaveform>),
    /// `inner` up to `t_end`, zero afterwards. Used to carry a shorter
    /// protocol's control into a longer one as a warm start.
    Truncated { inner: Box<Control>, t_end: f64 },
    /// Position of one well of a symmetrically shaken pair:
    /// `sign * max(half_separation + shake(t), min_half)`.
    PairPosition {
        shake: Box<Control>,
        half_separation: f64,
        min_half: f64,
        sign: f64,
    },
}

impl Control {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Control::Zero => 0.0,
            Control::Constant(c) => *c,
            Control::Samples(s) => s.value(t),
            Control::Crab(w) => w.value(t),
            Control::Truncated { inner, t_end } => {
                if t <= *t_end {
                    inner.value(t)
                } else {
                    0.0
                }
            }
            Control::PairPosition { shake, half_separation, min_half, sign } => {
                sign * (half_separation + shake.value(t)).max(*min_half)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Control::Zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledControl {
    ts: Vec<f64>,
    vals: Vec<f64>,
}

impl SampledControl {
    pub fn new(ts: Vec<f64>, vals: Vec<f64>) -> Result<Self> {
        if ts.len() != vals.len() || ts.is_empty() {
            return Err(Error::Config("sampled control needs matching, nonempty arrays".into()));
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sampled control times must be strictly increasing".into()));
        }
        Ok(Self { ts, vals })
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if t <= self.ts[0] {
            return self.vals[0];
        }
        if t >= self.ts[n - 1] {
            return self.vals[n - 1];
        }
        let hi = self.ts.partition_point(|&s| s < t).min(n - 1);
        let lo = hi - 1;
        let (t0, t1) = (self.ts[lo], self.ts[hi]);
        // exact at the nodes, so replayed controls reproduce the original
        // samples to the bit
        if t == t0 {
            return self.vals[lo];
        }
        if t == t1 {
            return self.vals[hi];
        }
        let w = (t - t0) / (t1 - t0);
        self.vals[lo] + w * (self.vals[hi] - self.vals[lo])
    }
}

/// One set of dressed harmonics: detunings `r_k` and coefficients `(a_k, b_k)`
/// for frequencies `2 pi k (1 + r_k) / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicBlock {
    pub detunings: Vec<f64>,
    pub coeffs: Vec<(f64, f64)>,
}

impl HarmonicBlock {
    fn flat(n: usize) -> Self {
        Self { detunings: vec![0.0; n], coeffs: vec![(0.0, 0.0); n] }
    }

    fn sum_at(&self, t: f64, duration: f64) -> f64 {
        let mut acc = 0.0;
        for (k, (&r, &(a, b))) in self.detunings.iter().zip(&self.coeffs).enumerate() {
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let w = 2.0 * PI * (k as f64 + 1.0) * (1.0 + r) / duration;
            let (s, c) = (w * t).sin_cos();
            acc += a * s + b * c;
        }
        acc
    }

    fn max_freq(&self, duration: f64) -> f64 {
        self.detunings
            .iter()
            .enumerate()
            .map(|(k, &r)| 2.0 * PI * (k as f64 + 1.0) * (1.0 + r) / duration)
            .fold(0.0, f64::max)
    }
}

/// Truncated randomized-frequency Fourier control with boundary envelope and
/// amplitude bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrabWaveform {
    pub duration: f64,
    pub n_harmonics: usize,
    pub amplitude_bound: f64,
    /// High-frequency cutoff in units of the trap frequency (rad per time unit).
    pub freq_cutoff: f64,
    /// Fraction of the duration spent ramping the envelope at each end, as a
    /// Tukey window: 0.5 gives the pure sin^2 (Hann) window, smaller values
    /// hold the envelope flat at one in between.
    #[serde(default = "default_envelope_ramp")]
    pub envelope_ramp: f64,
    pub guess: Control,
    /// Blocks absorbed by earlier dressing iterations; evaluated as part of
    /// the effective guess.
    pub history: Vec<HarmonicBlock>,
    /// The block currently exposed to the optimizer.
    pub block: HarmonicBlock,
}

impl CrabWaveform {
    /// A waveform with zero coefficients and undetuned frequencies. If the
    /// requested harmonic count cannot respect the cutoff even at the lowest
    /// admissible detuning, it is capped.
    pub fn new(
        duration: f64,
        n_harmonics: usize,
        amplitude_bound: f64,
        freq_cutoff: f64,
        guess: Control,
    ) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::NonPositive { what: "duration", value: duration });
        }
        if !(amplitude_bound > 0.0) {
            return Err(Error::NonPositive { what: "amplitude_bound", value: amplitude_bound });
        }
        if !(freq_cutoff > 0.0) {
            return Err(Error::NonPositive { what: "freq_cutoff", value: freq_cutoff });
        }
        // Highest k whose dressed frequency stays below the cutoff for every
        // detuning in [-1/2, 1/2].
        let k_max = (freq_cutoff * duration / (3.0 * PI)).floor() as usize;
        if k_max == 0 {
            return Err(Error::Config(format!(
                "cutoff {freq_cutoff} admits no harmonics over duration {duration}"
            )));
        }
        let n = n_harmonics.min(k_max).max(1);
        Ok(Self {
            duration,
            n_harmonics: n,
            amplitude_bound,
            freq_cutoff,
            envelope_ramp: default_envelope_ramp(),
            guess,
            history: Vec::new(),
            block: HarmonicBlock::flat(n),
        })
    }

    fn envelope(&self, t: f64) -> f64 {
        let ramp = self.envelope_ramp.clamp(0.01, 0.5) * self.duration;
        let edge = t.min(self.duration - t);
        if edge >= ramp {
            1.0
        } else {
            let s = (0.5 * PI * edge / ramp).sin();
            s * s
        }
    }

    /// Pre-clamp value: guess plus the windowed harmonic sum.
    pub fn raw_value(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for b in &self.history {
            s += b.sum_at(t, self.duration);
        }
        s += self.block.sum_at(t, self.duration);
        self.guess.value(t) + self.envelope(t) * s
    }

    /// Largest |raw value| over a uniform time sample; above the amplitude
    /// bound it means the sampled control is being flattened by the clamp.
    pub fn max_abs_raw(&self, n_samples: usize) -> f64 {
        (0..=n_samples)
            .map(|i| self.raw_value(self.duration * i as f64 / n_samples as f64).abs())
            .fold(0.0, f64::max)
    }

    fn value_unchecked(&self, t: f64) -> f64 {
        self.raw_value(t).clamp(-self.amplitude_bound, self.amplitude_bound)
    }

    pub(crate) fn value(&self, t: f64) -> f64 {
        self.value_unchecked(t)
    }

    /// Evaluate the control at `t in [0, T]`.
    pub fn sample(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::ControlOutOfRange { t, t_max: self.duration });
        }
        Ok(self.value_unchecked(t))
    }

    /// Largest dressed frequency currently in play (history included; absorbed
    /// blocks still oscillate inside the effective guess).
    pub fn max_dressed_freq(&self) -> f64 {
        self.history
            .iter()
            .chain(std::iter::once(&self.block))
            .map(|b| b.max_freq(self.duration))
            .fold(0.0, f64::max)
    }

    /// Absorb the current block into the guess and draw a fresh set of
    /// detunings, leaving all new coefficients at zero: sampling the dressed
    /// waveform with zero coefficients reproduces the previous control exactly.
    pub fn dress(&mut self, rng: &mut ChaCha8Rng) {
        let old = std::mem::replace(&mut self.block, HarmonicBlock::flat(self.n_harmonics));
        if old.coeffs.iter().any(|&(a, b)| a != 0.0 || b != 0.0) {
            self.history.push(old);
        }
        for (k, r) in self.block.detunings.iter_mut().enumerate() {
            let base = 2.0 * PI * (k as f64 + 1.0) / self.duration;
            // Keep the dressed frequency under the cutoff; the constructor
            // guarantees r = -1/2 always qualifies.
            let r_hi = (self.freq_cutoff / base - 1.0).min(0.5);
            *r = rng.gen_range(-0.5..=r_hi);
        }
    }

    /// A fresh waveform whose guess replays `prev` over its own duration and
    /// holds still afterwards. The workhorse of warm-started duration sweeps:
    /// with zero coefficients the longer protocol reproduces the shorter one.
    pub fn warm_started(
        duration: f64,
        n_harmonics: usize,
        amplitude_bound: f64,
        freq_cutoff: f64,
        prev: &CrabWaveform,
    ) -> Result<Self> {
        let guess = Control::Truncated {
            inner: Box::new(Control::Crab(Box::new(prev.clone()))),
            t_end: prev.duration,
        };
        let mut wf = Self::new(duration, n_harmonics, amplitude_bound, freq_cutoff, guess)?;
        wf.envelope_ramp = prev.envelope_ramp;
        Ok(wf)
    }

    pub fn param_count(&self) -> usize {
        2 * self.n_harmonics
    }

    /// Current block coefficients flattened as `[a_1, b_1, a_2, b_2, ...]`.
    pub fn params(&self) -> Vec<f64> {
        self.block.coeffs.iter().flat_map(|&(a, b)| [a, b]).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        for (c, ab) in self.block.coeffs.iter_mut().zip(p.chunks_exact(2)) {
            *c = (ab[0], ab[1]);
        }
    }
}

/// True iff every frequency the waveform can currently produce lies at or
/// below `omega_max`.
pub fn bandwidth_check(waveform: &CrabWaveform, omega_max: f64) -> bool {
    waveform.max_dressed_freq() <= omega_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn wf(t_over_2pi: f64, n: usize) -> CrabWaveform {
        CrabWaveform::new(2.0 * PI * t_over_2pi, n, 3.0, 4.0, Control::Zero).unwrap()
    }

    #[test]
    fn zero_coefficients_reproduce_guess() {
        let mut w = wf(6.0, 12);
        w.guess = Control::Constant(0.7);
        for t in [0.0, 1.0, 10.0, w.duration] {
            assert_eq!(w.sample(t).unwrap(), 0.7);
        }
    }

    #[test]
    fn flat_top_envelope_holds_at_one_inside_the_ramps() {
        let mut w = wf(6.0, 1);
        w.envelope_ramp = 0.1;
        w.set_params(&[0.0, 1.0]); // pure cosine rides the envelope
        let probe = |frac: f64| w.sample(frac * w.duration).unwrap();
        // deep inside the window the cosine has unit envelope wherever it peaks
        let t_peak = w.duration / 2.0; // cos(2 pi t / T) = -1 there
        assert!((probe(0.5) - (2.0 * PI * t_peak / w.duration).cos()).abs() < 1e-12);
        assert!(probe(0.0).abs() < 1e-12);
        assert!(probe(1.0).abs() < 1e-12);
    }

    #[test]
    fn endpoints_pin_to_guess() {
        let mut w = wf(6.0, 12);
        let mut rng = stream_rng(1, "dressing", 0);
        w.dress(&mut rng);
        let p: Vec<f64> = (0..w.param_count()).map(|i| 0.3 * (i as f64 + 1.0)).collect();
        w.set_params(&p);
        assert!(w.sample(0.0).unwrap().abs() < 1e-12);
        assert!(w.sample(w.duration).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_harmonic_matches_closed_form() {
        let mut w = wf(6.0, 1);
        w.envelope_ramp = 0.5; // pure sin^2 window
        w.set_params(&[1.0, 0.0]);
        let t = w.duration / 4.0;
        let env = (PI * t / w.duration).sin().powi(2);
        let expect = env * (2.0 * PI * t / w.duration).sin();
        assert!((w.sample(t).unwrap() - expect).abs() < 1e-15);
        // quarter period of the fundamental: env = 1/2, sin = 1
        assert!((w.sample(t).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sample_rejects_out_of_range() {
        let w = wf(6.0, 4);
        assert!(w.sample(-0.1).is_err());
        assert!(w.sample(w.duration + 0.1).is_err());
    }

    #[test]
    fn dressing_is_deterministic_and_bounded() {
        let mut a = wf(6.0, 12);
        let mut b = wf(6.0, 12);
        let mut rng_a = stream_rng(7, "dressing", 3);
        let mut rng_b = stream_rng(7, "dressing", 3);
        a.dress(&mut rng_a);
        b.dress(&mut rng_b);
        assert_eq!(a.block.detunings, b.block.detunings);
        for &r in &a.block.detunings {
            assert!((-0.5..=0.5).contains(&r));
        }
    }

    #[test]
    fn dressing_absorbs_previous_optimum() {
        let mut w = wf(6.0, 6);
        let mut rng = stream_rng(9, "dressing", 0);
        w.dress(&mut rng);
        w.set_params(&[0.4, -0.2, 0.1, 0.0, 0.0, 0.3, -0.5, 0.2, 0.0, 0.0, 0.7, 0.1]);
        let before: Vec<f64> = (0..=50)
            .map(|i| w.sample(w.duration * i as f64 / 50.0).unwrap())
            .collect();
        w.dress(&mut rng);
        // fresh block has zero coefficients, so the sampled control is unchanged
        let after: Vec<f64> = (0..=50)
            .map(|i| w.sample(w.duration * i as f64 / 50.0).unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn amplitude_bound_clamps() {
        let mut w = wf(6.0, 1);
        w.amplitude_bound = 0.2;
        w.set_params(&[5.0, 5.0]);
        for i in 0..=100 {
            let v = w.sample(w.duration * i as f64 / 100.0).unwrap();
            assert!(v.abs() <= 0.2);
        }
    }

    #[test]
    fn bandwidth_checks() {
        // n = 10, T = 2 pi * 6, undetuned: max frequency 10/6 of the trap
        let w = wf(6.0, 10);
        assert!(bandwidth_check(&w, 3.0));
        assert!(!bandwidth_check(&w, 0.0));

        let mut d = wf(6.0, 10);
        let mut rng = stream_rng(11, "dressing", 0);
        d.dress(&mut rng);
        assert!(d.max_dressed_freq() <= 1.5 * w.max_dressed_freq() + 1e-12);
    }

    #[test]
    fn constructor_caps_harmonics_to_cutoff() {
        // T/2pi = 2 and cutoff 4: k = 12 base tones would overshoot when dressed up
        let w = CrabWaveform::new(2.0 * PI * 2.0, 12, 3.0, 4.0, Control::Zero).unwrap();
        assert!(w.n_harmonics < 12);
        let mut d = w.clone();
        let mut rng = stream_rng(3, "dressing", 0);
        for _ in 0..32 {
            d.dress(&mut rng);
            assert!(bandwidth_check(&d, 4.0));
        }
    }

    #[test]
    fn serialization_round_trips_bit_exactly() {
        let mut w = wf(6.0, 8);
        let mut rng = stream_rng(5, "dressing", 1);
        w.dress(&mut rng);
        let p: Vec<f64> = (0..w.param_count())
            .map(|i| (i as f64 * 0.7311).sin() * 2.3)
            .collect();
        w.set_params(&p);
        let json = serde_json::to_string(&w).unwrap();
        let back: CrabWaveform = serde_json::from_str(&json).unwrap();
        assert_eq!(w, back);
        assert_eq!(w.params(), back.params());
    }

    #[test]
    fn sampled_control_interpolates() {
        let s = SampledControl::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, -2.0]).unwrap();
        assert_eq!(s.value(0.0), 0.0);
        assert_eq!(s.value(0.5), 1.0);
        assert_eq!(s.value(1.0), 2.0);
        assert_eq!(s.value(2.0), 0.0);
        assert_eq!(s.value(5.0), -2.0);
        assert_eq!(s.value(-1.0), 0.0);
    }

    #[test]
    fn truncated_control_windows_its_inner() {
        let c = Control::Truncated {
            inner: Box::new(Control::Constant(1.5)),
            t_end: 2.0,
        };
        assert_eq!(c.value(1.0), 1.5);
        assert_eq!(c.value(2.0), 1.5);
        assert_eq!(c.value(2.1), 0.0);
    }

    #[test]
    fn pair_position_enforces_floor_symmetrically() {
        let shake = Control::Constant(-4.0);
        let left = Control::PairPosition {
            shake: Box::new(shake.clone()),
            half_separation: 5.0,
            min_half: 3.0,
            sign: -1.0,
        };
        let right = Control::PairPosition {
            shake: Box::new(shake),
            half_separation: 5.0,
            min_half: 3.0,
            sign: 1.0,
        };
        // 5 - 4 = 1 would breach the floor; clamps to 3 on both sides
        assert_eq!(left.value(0.0), -3.0);
        assert_eq!(right.value(0.0), 3.0);
        assert_eq!(left.value(0.0), -right.value(0.0));
    }
}

fn default_envelope_ramp() -> f64 {
    0.15
}

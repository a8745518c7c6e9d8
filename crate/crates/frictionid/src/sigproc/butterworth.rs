//! Discrete Butterworth low-pass filters as biquad cascades.
//!
//! Designed by bilinear transform with frequency prewarping, so the digital
//! magnitude response hits exactly 1/sqrt(2) at the requested cutoff. Offline
//! use is zero-phase (forward-backward with odd-reflection padding); a
//! single-pass mode serves the causal online path.

use nalgebra::Complex;

use crate::error::{Error, Result};

/// One second-order section in transposed direct form II.
#[derive(Clone, Copy, Debug)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Low-pass section from the prewarped analog frequency `k = tan(pi·fc/fs)`
    /// and prototype quality factor `q`.
    fn lowpass(k: f64, q: f64) -> Self {
        let k2 = k * k;
        let d = k2 + k / q + 1.0;
        let b0 = k2 / d;
        Biquad {
            b0,
            b1: 2.0 * b0,
            b2: b0,
            a1: 2.0 * (k2 - 1.0) / d,
            a2: (k2 - k / q + 1.0) / d,
        }
    }

    /// Steady-state internal state for a constant input of 1 (scaled by the
    /// actual first sample to avoid a startup transient).
    fn unit_zi(&self) -> (f64, f64) {
        let z2 = self.b2 - self.a2;
        let z1 = self.b1 - self.a1 + z2;
        (z1, z2)
    }

    /// Filters `x` in place with state initialized for `x[0]` held constant.
    fn run(&self, x: &mut [f64]) {
        let (zi1, zi2) = self.unit_zi();
        let (mut z1, mut z2) = (zi1 * x[0], zi2 * x[0]);
        for v in x.iter_mut() {
            let y = self.b0 * *v + z1;
            z1 = self.b1 * *v - self.a1 * y + z2;
            z2 = self.b2 * *v - self.a2 * y;
            *v = y;
        }
    }

    fn response(&self, omega: f64) -> Complex<f64> {
        let zinv = Complex::new(omega.cos(), -omega.sin());
        let num = Complex::new(self.b0, 0.0) + (Complex::new(self.b1, 0.0) + self.b2 * zinv) * zinv;
        let den = Complex::new(1.0, 0.0) + (Complex::new(self.a1, 0.0) + self.a2 * zinv) * zinv;
        num / den
    }
}

/// Butterworth low-pass filter of order 2 or 4.
#[derive(Clone, Debug)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    order: usize,
}

impl Butterworth {
    pub fn lowpass(rate: f64, cutoff: f64, order: usize) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < rate / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff must lie in (0, rate/2): got {cutoff} Hz at {rate} Hz"
            )));
        }
        if order != 2 && order != 4 {
            return Err(Error::invalid(format!("order must be 2 or 4, got {order}")));
        }
        let k = (std::f64::consts::PI * cutoff / rate).tan();
        // Prototype pole pairs: Q_j = 1 / (2·sin((2j+1)·pi/(2n))).
        let sections = (0..order / 2)
            .map(|j| {
                let q = 1.0
                    / (2.0 * ((2 * j + 1) as f64 * std::f64::consts::PI / (2 * order) as f64).sin());
                Biquad::lowpass(k, q)
            })
            .collect();
        Ok(Butterworth { sections, order })
    }

    /// Single (causal) pass; state initialized as if `x[0]` had been applied
    /// forever, so constants pass through unchanged.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        if y.is_empty() {
            return y;
        }
        for sec in &self.sections {
            sec.run(&mut y);
        }
        y
    }

    /// Zero-phase forward-backward pass with odd-reflection padding.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        if n < 3 * self.order {
            return Err(Error::invalid(format!(
                "need at least {} samples for order {}, got {n}",
                3 * self.order,
                self.order
            )));
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in 0..pad {
            ext.push(2.0 * x[0] - x[pad - i]);
        }
        ext.extend_from_slice(x);
        for i in 0..pad {
            ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
        }
        for sec in &self.sections {
            sec.run(&mut ext);
        }
        ext.reverse();
        for sec in &self.sections {
            sec.run(&mut ext);
        }
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }

    /// Analytic single-pass magnitude response at frequency `f` (Hz).
    pub fn magnitude(&self, f: f64, rate: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * f / rate;
        self.sections
            .iter()
            .map(|s| s.response(omega).norm())
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fits amplitude of a steady sinusoid from its RMS over whole cycles.
    fn amplitude(y: &[f64], rate: f64, f: f64, skip: f64) -> f64 {
        let start = (skip * rate) as usize;
        let cycles = ((y.len() - start) as f64 / rate * f).floor();
        let n = (cycles / f * rate) as usize;
        let seg = &y[start..start + n];
        let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt();
        rms * std::f64::consts::SQRT_2
    }

    fn sine(rate: f64, f: f64, secs: f64) -> Vec<f64> {
        (0..(secs * rate) as usize)
            .map(|k| (2.0 * std::f64::consts::PI * f * k as f64 / rate).sin())
            .collect()
    }

    #[test]
    fn constant_passes_unchanged() {
        let filt = Butterworth::lowpass(500.0, 20.0, 2).unwrap();
        let x = vec![0.7; 300];
        for y in filt.filter(&x) {
            assert!((y - 0.7).abs() < 1e-12);
        }
        for y in filt.filtfilt(&x).unwrap() {
            assert!((y - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gain_at_cutoff_is_half_power() {
        for order in [2, 4] {
            let filt = Butterworth::lowpass(500.0, 20.0, order).unwrap();
            let mag = filt.magnitude(20.0, 500.0);
            assert!(
                (mag - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12,
                "order {order}: {mag}"
            );
            let db = 20.0 * mag.log10();
            assert!((db + 3.0103).abs() < 0.001);
        }
    }

    #[test]
    fn single_pass_sine_at_cutoff_measures_half_power() {
        let rate = 500.0;
        let filt = Butterworth::lowpass(rate, 20.0, 2).unwrap();
        let y = filt.filter(&sine(rate, 20.0, 10.0));
        let amp = amplitude(&y, rate, 20.0, 2.0);
        assert!(
            (amp - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.02,
            "measured {amp}"
        );
    }

    #[test]
    fn order2_rolloff_at_ten_times_cutoff() {
        let rate = 500.0;
        let filt = Butterworth::lowpass(rate, 2.0, 2).unwrap();
        let y = filt.filter(&sine(rate, 20.0, 10.0));
        let amp = amplitude(&y, rate, 20.0, 2.0);
        assert!(amp < 0.012, "residual {amp}");
    }

    #[test]
    fn order4_matches_analog_prototype_shape() {
        // Prewarping pins the response at the cutoff; nearby the digital
        // curve follows 1/sqrt(1 + (f/fc)^(2n)) closely.
        let filt = Butterworth::lowpass(500.0, 10.0, 4).unwrap();
        let analog = |f: f64| 1.0 / (1.0 + (f / 10.0_f64).powi(8)).sqrt();
        for f in [2.0, 5.0, 20.0] {
            let mag = filt.magnitude(f, 500.0);
            assert!((mag - analog(f)).abs() < 5e-3, "f={f}: {mag} vs {}", analog(f));
        }
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let rate = 500.0;
        let x = sine(rate, 5.0, 4.0);
        let filt = Butterworth::lowpass(rate, 20.0, 2).unwrap();
        let y = filt.filtfilt(&x).unwrap();
        // Cross-correlation over the central window must peak at lag 0 ± 1.
        let core = 200..x.len() - 200;
        let mut best = (0i64, f64::MIN);
        for lag in -5i64..=5 {
            let c: f64 = core
                .clone()
                .map(|i| x[i] * y[(i as i64 + lag) as usize])
                .sum();
            if c > best.1 {
                best = (lag, c);
            }
        }
        assert!(best.0.abs() <= 1, "peak at lag {}", best.0);
    }

    #[test]
    fn invalid_designs_are_rejected() {
        assert!(Butterworth::lowpass(500.0, 250.0, 2).is_err());
        assert!(Butterworth::lowpass(500.0, 0.0, 2).is_err());
        assert!(Butterworth::lowpass(500.0, 20.0, 3).is_err());
        let filt = Butterworth::lowpass(500.0, 20.0, 4).unwrap();
        assert!(filt.filtfilt(&[1.0; 11]).is_err());
    }
}

//! First-notch (N1) extraction from a head-related impulse response.
//!
//! The HRIR is clipped by a short window centered on its absolute maximum,
//! which keeps the pinna response and drops later head and torso reflections.
//! The windowed segment is zero-padded and transformed; P1 is the spectral
//! maximum above DC and N1 is the lowest-frequency local minimum above P1 that
//! is deep enough to count as a notch.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guards the dB conversion against exact zeros.
pub const DB_EPSILON: f64 = 1e-12;

/// Levels within this many dB of the spectral maximum tie for P1.
pub const P1_TIE_DB: f64 = 0.01;

/// One ear's impulse response for one source direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Hrir {
    pub samples: Vec<f32>,
    pub sample_rate_hz: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Hrir {
    /// Frontal HRIR (azimuth 0, elevation 0).
    pub fn frontal(samples: Vec<f32>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            sample_rate_hz,
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Rectangular,
    Hann,
    #[serde(rename = "blackman_harris_4term")]
    BlackmanHarris4Term,
}

impl WindowKind {
    /// Periodic (DFT-even) window of length `len`; its maximum sits at `len / 2`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / n;
                match self {
                    WindowKind::Rectangular => 1.0,
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::BlackmanHarris4Term => {
                        0.35875 - 0.48829 * x.cos() + 0.14128 * (2.0 * x).cos()
                            - 0.01168 * (3.0 * x).cos()
                    }
                }
            })
            .collect()
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::Rectangular => "rectangular",
            WindowKind::Hann => "hann",
            WindowKind::BlackmanHarris4Term => "blackman_harris_4term",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionParams {
    pub window_length_ms: f64,
    pub window_kind: WindowKind,
    pub fft_size: usize,
    pub prominence_db: f64,
    pub search_max_hz: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            window_length_ms: 2.0,
            window_kind: WindowKind::BlackmanHarris4Term,
            fft_size: 4096,
            prominence_db: 5.0,
            search_max_hz: 16_000.0,
        }
    }
}

impl ExtractionParams {
    /// Window length in samples at `fs`.
    pub fn window_samples(&self, fs: f64) -> usize {
        (self.window_length_ms * fs / 1000.0).round() as usize
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(fs > 0.0) {
            return Err(Error::InvalidInput(format!("sample rate {fs} Hz")));
        }
        let len = self.window_samples(fs);
        if len == 0 {
            return Err(Error::InvalidInput("window is shorter than one sample".into()));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < len {
            return Err(Error::InvalidInput(format!(
                "fft_size {} must be a power of two >= window length {len}",
                self.fft_size
            )));
        }
        if !(self.search_max_hz > 0.0) || self.search_max_hz > fs / 2.0 {
            return Err(Error::InvalidInput(format!(
                "search_max_hz {} outside (0, Nyquist]",
                self.search_max_hz
            )));
        }
        if !(self.prominence_db >= 0.0) {
            return Err(Error::InvalidInput("prominence_db must be >= 0".into()));
        }
        Ok(())
    }
}

/// One-sided magnitude spectrum, bins 0..=fft_size/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitude_db: Vec<f64>,
    pub bin_hz: f64,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    pub fn len(&self) -> usize {
        self.magnitude_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitude_db.is_empty()
    }

    /// Highest bin index whose frequency does not exceed `hz`.
    fn last_bin_at_or_below(&self, hz: f64) -> usize {
        let k = (hz / self.bin_hz + 1e-9).floor() as usize;
        k.min(self.len().saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPeak {
    pub hz: f64,
    pub db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Notch {
    pub hz: f64,
    pub db: f64,
    /// Depth below the lower of the two flanking maxima.
    pub depth_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotchFeatures {
    pub p1_hz: f64,
    pub p1_db: f64,
    /// `None` when no minimum above P1 is prominent enough.
    pub n1: Option<Notch>,
}

impl NotchFeatures {
    pub fn prominent(&self) -> bool {
        self.n1.is_some()
    }

    pub fn n1_hz(&self) -> Option<f64> {
        self.n1.map(|n| n.hz)
    }
}

/// Clips `h` to a window centered on the index of max |h|, zero-padding past the edges.
pub fn window_around_peak(h: &Hrir, p: &ExtractionParams) -> Result<Vec<f64>> {
    p.validate(h.sample_rate_hz)?;
    let len = p.window_samples(h.sample_rate_hz);
    if h.len() < 2 * len {
        return Err(Error::InvalidInput(format!(
            "HRIR has {} samples, need at least {} (twice the window)",
            h.len(),
            2 * len
        )));
    }

    let mut peak = 0usize;
    let mut peak_abs = 0.0f32;
    for (i, s) in h.samples.iter().enumerate() {
        if s.abs() > peak_abs {
            peak_abs = s.abs();
            peak = i;
        }
    }
    if peak_abs == 0.0 {
        return Err(Error::NoPeak);
    }

    let start = peak as isize - (len / 2) as isize;
    let window = p.window_kind.coefficients(len);
    Ok(window
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let j = start + i as isize;
            if j < 0 || j as usize >= h.len() {
                0.0
            } else {
                w * h.samples[j as usize] as f64
            }
        })
        .collect())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Zero-pads `w` to `fft_size` and returns 20·log10(|X_k| + ε) for bins 0..=fft_size/2.
pub fn magnitude_spectrum(w: &[f64], fft_size: usize, fs: f64) -> Result<Spectrum> {
    if !fft_size.is_power_of_two() || fft_size < w.len() {
        return Err(Error::InvalidInput(format!(
            "fft_size {fft_size} must be a power of two >= {}",
            w.len()
        )));
    }
    if !(fs > 0.0) {
        return Err(Error::InvalidInput(format!("sample rate {fs} Hz")));
    }
    let mut buf: Vec<Complex<f64>> = w.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(fft_size, Complex::new(0.0, 0.0));
    PLANNER.with(|planner| {
        let fft = planner.borrow_mut().plan_fft_forward(fft_size);
        fft.process(&mut buf);
    });
    let magnitude_db = buf[..=fft_size / 2]
        .iter()
        .map(|c| 20.0 * (c.norm() + DB_EPSILON).log10())
        .collect();
    Ok(Spectrum {
        magnitude_db,
        bin_hz: fs / fft_size as f64,
    })
}

/// Global maximum over (0, search_max_hz]; DC is excluded and ties go to the lower bin.
pub fn find_p1(s: &Spectrum, search_max_hz: f64) -> SpectralPeak {
    let last = s.last_bin_at_or_below(search_max_hz).max(1).min(s.len() - 1);
    let first = 1.min(last);
    let max = s.magnitude_db[first..=last]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    // Equal analytic maxima land on the bin grid at slightly different levels.
    let best = (first..=last)
        .find(|&k| s.magnitude_db[k] >= max - P1_TIE_DB)
        .unwrap_or(first);
    SpectralPeak {
        hz: s.frequency(best),
        db: s.magnitude_db[best],
    }
}

/// First strict local minimum above P1 whose depth reaches the prominence threshold.
///
/// Depth is measured against the highest point reachable on each side before
/// the spectrum drops below the minimum again (bounded by P1 on the left and by
/// Nyquist on the right); the lower of the two sides counts.
pub fn find_n1(s: &Spectrum, p1: SpectralPeak, p: &ExtractionParams) -> NotchFeatures {
    let y = &s.magnitude_db;
    let p1_bin = (p1.hz / s.bin_hz).round() as usize;
    let last = s.last_bin_at_or_below(p.search_max_hz).min(y.len().saturating_sub(2));

    let mut n1 = None;
    for k in p1_bin + 1..=last {
        if !(y[k] < y[k - 1] && y[k] < y[k + 1]) {
            continue;
        }
        let mut left = y[k - 1];
        for j in (p1_bin..k).rev() {
            if y[j] < y[k] {
                break;
            }
            left = left.max(y[j]);
        }
        let mut right = y[k + 1];
        for &v in &y[k + 1..] {
            if v < y[k] {
                break;
            }
            right = right.max(v);
        }
        let depth = left.min(right) - y[k];
        if depth < p.prominence_db {
            continue;
        }

        let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
        let curvature = a - 2.0 * b + c;
        let offset = if curvature > 0.0 {
            (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        n1 = Some(Notch {
            hz: (k as f64 + offset) * s.bin_hz,
            db: b - 0.25 * (a - c) * offset,
            depth_db: depth,
        });
        break;
    }

    NotchFeatures {
        p1_hz: p1.hz,
        p1_db: p1.db,
        n1,
    }
}

/// Window, transform, and pick P1 then N1.
pub fn extract_n1(h: &Hrir, p: &ExtractionParams) -> Result<NotchFeatures> {
    let segment = window_around_peak(h, p)?;
    let spectrum = magnitude_spectrum(&segment, p.fft_size, h.sample_rate_hz)?;
    let p1 = find_p1(&spectrum, p.search_max_hz);
    Ok(find_n1(&spectrum, p1, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 48_000.0;

    fn impulse_at(len: usize, idx: usize) -> Hrir {
        let mut s = vec![0.0f32; len];
        s[idx] = 1.0;
        Hrir::frontal(s, FS)
    }

    fn rect() -> ExtractionParams {
        ExtractionParams {
            window_kind: WindowKind::Rectangular,
            ..Default::default()
        }
    }

    /// |1 + a·e^{-jωτ}|² in dB, evaluated per bin.
    fn comb_db(a: f64, tau: f64, fft_size: usize) -> Spectrum {
        let bin_hz = FS / fft_size as f64;
        let magnitude_db = (0..=fft_size / 2)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let p = 1.0 + a * a + 2.0 * a * (2.0 * PI * f * tau / FS).cos();
                10.0 * p.log10()
            })
            .collect();
        Spectrum {
            magnitude_db,
            bin_hz,
        }
    }

    #[test]
    fn impulse_lands_at_window_center() {
        let w = window_around_peak(&impulse_at(256, 100), &rect()).unwrap();
        assert_eq!(w.len(), 96);
        assert_eq!(w[48], 1.0);
        assert_eq!(w.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn peak_near_start_is_zero_padded() {
        let mut h = impulse_at(256, 10);
        h.samples.iter_mut().for_each(|s| *s += 0.01);
        h.samples[10] = 1.0;
        let w = window_around_peak(&h, &rect()).unwrap();
        assert!(w[..38].iter().all(|&x| x == 0.0));
        assert_eq!(w[38], 0.01f32 as f64);
        assert_eq!(w[48], 1.0);
    }

    #[test]
    fn comb_taps_both_inside_window() {
        let mut h = impulse_at(256, 100);
        h.samples[103] = 0.9;
        let w = window_around_peak(&h, &rect()).unwrap();
        assert_eq!(w[48], 1.0);
        assert_eq!(w[51], 0.9f32 as f64);
    }

    #[test]
    fn all_zero_hrir_has_no_peak() {
        let h = Hrir::frontal(vec![0.0; 256], FS);
        assert!(matches!(
            window_around_peak(&h, &ExtractionParams::default()),
            Err(Error::NoPeak)
        ));
    }

    #[test]
    fn short_hrir_rejected() {
        let h = impulse_at(150, 20);
        assert!(window_around_peak(&h, &ExtractionParams::default()).is_err());
    }

    #[test]
    fn blackman_harris_peaks_at_center_with_unit_gain() {
        let w = WindowKind::BlackmanHarris4Term.coefficients(96);
        assert!((w[48] - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x <= w[48] + 1e-15));
    }

    #[test]
    fn impulse_spectrum_is_flat() {
        let mut w = vec![0.0; 96];
        w[0] = 1.0;
        let s = magnitude_spectrum(&w, 4096, FS).unwrap();
        assert_eq!(s.len(), 2049);
        assert!(s.magnitude_db.iter().all(|&v| (v - s.magnitude_db[0]).abs() < 1e-9));
        assert!((s.bin_hz - 11.71875).abs() < 1e-12);
    }

    #[test]
    fn comb_spectrum_matches_closed_form() {
        let mut w = vec![0.0; 96];
        w[0] = 1.0;
        w[3] = 0.9;
        let s = magnitude_spectrum(&w, 4096, FS).unwrap();
        let oracle = comb_db(0.9, 3.0, 4096);
        for (a, b) in s.magnitude_db.iter().zip(&oracle.magnitude_db) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn bin_centered_cosine_has_one_dominant_bin() {
        let n = 256;
        let k0 = 20;
        let w: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * k0 as f64 * i as f64 / n as f64).cos())
            .collect();
        let s = magnitude_spectrum(&w, n, FS).unwrap();
        let p = find_p1(&s, FS / 2.0);
        assert_eq!(p.hz, s.frequency(k0));
        let second = s
            .magnitude_db
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != k0)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(p.db - second > 100.0);
    }

    #[test]
    fn non_power_of_two_fft_rejected() {
        assert!(magnitude_spectrum(&[1.0; 10], 1000, FS).is_err());
        assert!(magnitude_spectrum(&[1.0; 10], 8, FS).is_err());
    }

    #[test]
    fn comb_maxima_tie_toward_lowest_bin() {
        // Maxima of the comb with τ = 3 sit at multiples of 16 kHz, all equal.
        let s = comb_db(0.9, 3.0, 4096);
        let near_16k = (16_000.0 / s.bin_hz).round() as usize;
        assert!(s.magnitude_db[near_16k] > s.magnitude_db[1]);
        assert!(s.magnitude_db[near_16k] - s.magnitude_db[1] < P1_TIE_DB);
        for max_hz in [16_000.0, 14_000.0] {
            assert_eq!(find_p1(&s, max_hz).hz, s.bin_hz);
        }
    }

    #[test]
    fn p1_tie_tolerance_does_not_swallow_real_peaks() {
        let mut s = Spectrum {
            magnitude_db: vec![0.0; 1025],
            bin_hz: 20.0,
        };
        s.magnitude_db[200] = 2.0 * P1_TIE_DB;
        assert_eq!(find_p1(&s, 16_000.0).hz, 4000.0);
    }

    #[test]
    fn flat_spectrum_p1_is_lowest_candidate() {
        let s = Spectrum {
            magnitude_db: vec![0.0; 2049],
            bin_hz: 11.71875,
        };
        assert_eq!(find_p1(&s, 16_000.0).hz, 11.71875);
    }

    #[test]
    fn injected_peak_found() {
        let mut s = Spectrum {
            magnitude_db: vec![-20.0; 1025],
            bin_hz: 20.0,
        };
        s.magnitude_db[200] = 3.0;
        let p = find_p1(&s, 16_000.0);
        assert_eq!((p.hz, p.db), (4000.0, 3.0));
    }

    #[test]
    fn comb_notch_at_half_inverse_delay() {
        let s = comb_db(0.9, 3.0, 4096);
        let p = ExtractionParams::default();
        let f = find_n1(&s, find_p1(&s, p.search_max_hz), &p);
        let n1 = f.n1.expect("notch");
        assert!((n1.hz - 8000.0).abs() <= 25.0, "{}", n1.hz);
        let expected_depth = 20.0 * (1.9f64 / 0.1).log10();
        assert!(n1.depth_db > 20.0 && n1.depth_db <= expected_depth + 1e-9);
        assert!(n1.hz > f.p1_hz);
    }

    #[test]
    fn monotone_spectrum_has_no_notch() {
        let s = Spectrum {
            magnitude_db: (0..2049).map(|k| -(k as f64) * 0.01).collect(),
            bin_hz: 11.71875,
        };
        let p = ExtractionParams::default();
        assert!(!find_n1(&s, find_p1(&s, p.search_max_hz), &p).prominent());
    }

    #[test]
    fn shallow_comb_is_not_prominent() {
        let a: f64 = 0.05;
        let depth = 20.0 * ((1.0 + a) / (1.0 - a)).log10();
        assert!((depth - 0.869).abs() < 1e-3);
        let s = comb_db(a, 3.0, 4096);
        let p = ExtractionParams::default();
        assert!(!find_n1(&s, find_p1(&s, p.search_max_hz), &p).prominent());
        let lax = ExtractionParams {
            prominence_db: 0.5,
            ..p
        };
        assert!(find_n1(&s, find_p1(&s, lax.search_max_hz), &lax).prominent());
    }

    #[test]
    fn unit_impulse_extraction_not_prominent() {
        let f = extract_n1(&impulse_at(256, 64), &ExtractionParams::default()).unwrap();
        assert!(!f.prominent());
        assert!(f.n1_hz().is_none());
    }

    #[test]
    fn integer_comb_extraction() {
        let mut h = impulse_at(256, 64);
        h.samples[67] = 0.9;
        let f = extract_n1(&h, &ExtractionParams::default()).unwrap();
        assert!((f.n1_hz().unwrap() - 8000.0).abs() <= 25.0);
    }

    #[test]
    fn parabolic_offset_within_one_bin() {
        let mut s = Spectrum {
            magnitude_db: vec![0.0; 64],
            bin_hz: 10.0,
        };
        s.magnitude_db[30] = -20.0;
        s.magnitude_db[31] = -19.9;
        s.magnitude_db[29] = -1.0;
        let p = ExtractionParams {
            search_max_hz: 600.0,
            ..Default::default()
        };
        let f = find_n1(&s, SpectralPeak { hz: 10.0, db: 0.0 }, &p);
        let hz = f.n1_hz().unwrap();
        assert!(hz > 300.0 && hz <= 310.0, "{hz}");
    }
}

//! Daubechies-4 discrete wavelet decomposition and per-scale energies.
//!
//! Boundary handling is periodic, which makes the transform exactly
//! orthonormal: the summed band energies equal the signal energy to rounding
//! error. Level j at source rate fs covers the nominal band
//! [fs/2^(j+1), fs/2^j] Hz; the final approximation covers [0, fs/2^(J+1)].

use crate::error::{Error, Result};
use crate::Scalar;

/// 8-tap db4 analysis lowpass (scaling) filter; sums to sqrt(2), unit energy.
pub const DB4_LOWPASS: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

/// Quadrature mirror highpass: g[k] = (-1)^k * h[7-k].
pub fn db4_highpass() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (k, v) in g.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *v = sign * DB4_LOWPASS[7 - k];
    }
    g
}

/// Multi-level decomposition: detail coefficients per scale plus the final
/// approximation.
#[derive(Debug, Clone)]
pub struct WaveletDecomposition<T> {
    /// Details for scales j = 1..=levels (index 0 is scale 1, the finest).
    pub detail_coeffs: Vec<Vec<T>>,
    pub approx_coeffs: Vec<T>,
    pub levels: usize,
    /// Source sample rate, used for band labels.
    pub fs: f64,
}

/// Per-scale energies with nominal band labels.
#[derive(Debug, Clone)]
pub struct BandEnergies<T> {
    /// Detail energies for scales 1..=J followed by the approximation energy.
    pub energies: Vec<T>,
    /// Nominal (lo, hi) Hz per entry, same order as `energies`.
    pub bands_hz: Vec<(f64, f64)>,
}

impl<T: Scalar> BandEnergies<T> {
    pub fn total(&self) -> T {
        self.energies.iter().copied().sum()
    }
}

/// One analysis step: periodic convolution with the db4 pair, downsampled by
/// two. Odd-length inputs are extended by repeating the final sample.
pub fn dwt_step_db4<T: Scalar>(signal: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if signal.len() < 8 {
        return Err(Error::invalid(format!(
            "dwt step needs at least 8 samples, got {}",
            signal.len()
        )));
    }
    let mut extended;
    let x: &[T] = if signal.len() % 2 == 1 {
        extended = Vec::with_capacity(signal.len() + 1);
        extended.extend_from_slice(signal);
        extended.push(*signal.last().unwrap());
        &extended
    } else {
        signal
    };
    let n = x.len();
    let half = n / 2;
    let g = db4_highpass();
    let mut approx = vec![T::zero(); half];
    let mut detail = vec![T::zero(); half];
    for m in 0..half {
        let mut a = T::zero();
        let mut d = T::zero();
        for k in 0..8 {
            let idx = (2 * m + k) % n;
            let v = x[idx];
            a += v * T::cast(DB4_LOWPASS[k]);
            d += v * T::cast(g[k]);
        }
        approx[m] = a;
        detail[m] = d;
    }
    Ok((approx, detail))
}

/// Inverse of [`dwt_step_db4`] for even-length outputs (the adjoint of the
/// orthonormal analysis operator).
pub fn idwt_step_db4<T: Scalar>(approx: &[T], detail: &[T]) -> Result<Vec<T>> {
    if approx.len() != detail.len() {
        return Err(Error::invalid(format!(
            "approx/detail length mismatch: {} vs {}",
            approx.len(),
            detail.len()
        )));
    }
    let half = approx.len();
    let n = 2 * half;
    if n < 8 {
        return Err(Error::invalid("idwt step needs at least 4 coefficient pairs"));
    }
    let g = db4_highpass();
    let mut x = vec![T::zero(); n];
    for m in 0..half {
        for k in 0..8 {
            let idx = (2 * m + k) % n;
            x[idx] += approx[m] * T::cast(DB4_LOWPASS[k]) + detail[m] * T::cast(g[k]);
        }
    }
    Ok(x)
}

/// J-level decomposition by recursing on the approximation branch.
pub fn wavedec<T: Scalar>(signal: &[T], levels: usize, fs: f64) -> Result<WaveletDecomposition<T>> {
    if levels == 0 {
        return Err(Error::invalid("need at least one decomposition level"));
    }
    if signal.len() < (1usize << levels) {
        return Err(Error::invalid(format!(
            "signal of length {} too short for {} levels (need >= {})",
            signal.len(),
            levels,
            1usize << levels
        )));
    }
    let mut detail_coeffs = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let (approx, detail) = dwt_step_db4(&current)?;
        detail_coeffs.push(detail);
        current = approx;
    }
    Ok(WaveletDecomposition {
        detail_coeffs,
        approx_coeffs: current,
        levels,
        fs,
    })
}

/// Inverse of [`wavedec`]; exact for inputs whose length halves evenly at
/// every level.
pub fn waverec<T: Scalar>(dec: &WaveletDecomposition<T>) -> Result<Vec<T>> {
    let mut current = dec.approx_coeffs.clone();
    for detail in dec.detail_coeffs.iter().rev() {
        current = idwt_step_db4(&current, detail)?;
    }
    Ok(current)
}

/// Sum of squared coefficients per scale, plus the approximation energy.
pub fn band_energies<T: Scalar>(dec: &WaveletDecomposition<T>) -> BandEnergies<T> {
    let mut energies = Vec::with_capacity(dec.levels + 1);
    let mut bands_hz = Vec::with_capacity(dec.levels + 1);
    for (j, coeffs) in dec.detail_coeffs.iter().enumerate() {
        energies.push(coeffs.iter().map(|c| *c * *c).sum());
        let level = (j + 1) as f64;
        bands_hz.push((dec.fs / 2f64.powf(level + 1.0), dec.fs / 2f64.powf(level)));
    }
    energies.push(dec.approx_coeffs.iter().map(|c| *c * *c).sum());
    bands_hz.push((0.0, dec.fs / 2f64.powf(dec.levels as f64 + 1.0)));
    BandEnergies { energies, bands_hz }
}

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::SubbandPlan;
use crate::error::{invalid, Result};
use crate::sigcore::cis;

/// Unit-power FIR subband filter with its transmit normalization factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandFilter {
    taps: Vec<C64>,
    subband: usize,
    rho: f64,
}

impl SubbandFilter {
    /// Normalizes `taps` to unit power and computes `rho` for subband `m`.
    pub fn from_taps(taps: Vec<C64>, plan: &SubbandPlan, m: usize) -> Result<Self> {
        if taps.is_empty() {
            return invalid("filter taps empty");
        }
        let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
        if !(energy > 0.0) || !energy.is_finite() {
            return invalid("filter taps have no energy");
        }
        let s = 1.0 / energy.sqrt();
        let taps: Vec<C64> = taps.into_iter().map(|t| t * s).collect();
        let rho = power_normalization_factor(&taps, plan, m)?;
        Ok(Self { taps, subband: m, rho })
    }

    /// Single unit tap: the OFDM special case.
    pub fn unit(plan: &SubbandPlan, m: usize) -> Result<Self> {
        Self::from_taps(vec![C64::new(1.0, 0.0)], plan, m)
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn subband(&self) -> usize {
        self.subband
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rho_sq(&self) -> f64 {
        self.rho * self.rho
    }

    /// `F(n) = Σ_l f(l)·exp(−j2πnl/N)` for `n = 0..N`.
    pub fn freq_response(&self, n_grid: usize) -> Vec<C64> {
        filter_freq_response(&self.taps, n_grid)
    }
}

/// `F(n) = Σ_l f(l)·exp(−j2πnl/N)` for `n = 0..N`.
pub fn filter_freq_response(taps: &[C64], n_grid: usize) -> Vec<C64> {
    (0..n_grid).map(|n| freq_response_at(taps, n as f64, n_grid)).collect()
}

/// Filter response at a (possibly fractional) grid frequency.
pub fn freq_response_at(taps: &[C64], n: f64, n_grid: usize) -> C64 {
    taps.iter()
        .enumerate()
        .map(|(l, &f)| f * cis(-n * l as f64 / n_grid as f64))
        .sum()
}

/// Dolph-Chebyshev window of length `len` with `atten_db` sidelobe
/// attenuation, peak-normalized to 1 (same construction as the classic
/// frequency-sampling design used by scipy's `chebwin`).
pub fn chebyshev_window(len: usize, atten_db: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return invalid("window length must be >= 1");
    }
    if !(atten_db > 0.0) {
        return invalid("sidelobe attenuation must be positive");
    }
    if len == 1 {
        return Ok(vec![1.0]);
    }
    let order = (len - 1) as f64;
    let beta = ((10f64.powf(atten_db / 20.0)).acosh() / order).cosh();
    let cheb = |x: f64| -> f64 {
        if x > 1.0 {
            (order * x.acosh()).cosh()
        } else if x < -1.0 {
            let sign = if (len - 1) % 2 == 0 { 1.0 } else { -1.0 };
            sign * (order * (-x).acosh()).cosh()
        } else {
            (order * x.acos()).cos()
        }
    };
    let m = len as f64;
    let p: Vec<C64> = (0..len)
        .map(|k| {
            let v = cheb(beta * (PI * k as f64 / m).cos());
            if len % 2 == 0 {
                C64::from_polar(v, PI * k as f64 / m)
            } else {
                C64::new(v, 0.0)
            }
        })
        .collect();
    // Plain DFT; window lengths are a few hundred taps at most.
    let spectrum: Vec<f64> = (0..len)
        .map(|i| {
            p.iter()
                .enumerate()
                .map(|(k, &v)| v * cis(-(((i * k) % len) as f64) / m))
                .sum::<C64>()
                .re
        })
        .collect();
    let half = len / 2 + 1;
    let mut w: Vec<f64> = if len % 2 == 1 {
        spectrum[1..half].iter().rev().chain(&spectrum[..half]).copied().collect()
    } else {
        spectrum[1..half].iter().rev().chain(&spectrum[1..half]).copied().collect()
    };
    let peak = w.iter().copied().fold(f64::MIN, f64::max);
    w.iter_mut().for_each(|v| *v /= peak);
    Ok(w)
}

/// Chebyshev prototype modulated to the centre of subband `m`
/// (`(first + last)/2` in grid units), normalized to unit power.
pub fn design_chebyshev_filter(len: usize, atten_db: f64, plan: &SubbandPlan, m: usize) -> Result<SubbandFilter> {
    if m >= plan.num_subbands() {
        return invalid(format!("subband index {m} out of range"));
    }
    let w = chebyshev_window(len, atten_db)?;
    let range = plan.subband_range(m);
    let centre = (range.start + range.end - 1) as f64 / 2.0;
    let n = plan.n_grid() as f64;
    let taps = w.iter().enumerate().map(|(l, &v)| cis(centre * l as f64 / n) * v).collect();
    SubbandFilter::from_taps(taps, plan, m)
}

/// `ρ_m = sqrt(trace(D_mᴴ A_mᴴ A_m D_m) / N_m)`: the mean energy of a
/// subband IDFT column after filtering.
///
/// Uses `‖f * d_n‖² = Σ_k r(k)·(N−|k|)/N·exp(−j2πkn/N)` with `r` the
/// autocorrelation of the taps.
pub fn power_normalization_factor(taps: &[C64], plan: &SubbandPlan, m: usize) -> Result<f64> {
    if m >= plan.num_subbands() {
        return invalid(format!("subband index {m} out of range"));
    }
    if taps.is_empty() {
        return invalid("filter taps empty");
    }
    let n = plan.n_grid();
    let lags = taps.len().min(n);
    let r: Vec<C64> = (0..lags)
        .map(|k| (0..taps.len() - k).map(|i| taps[i + k] * taps[i].conj()).sum())
        .collect();
    let range = plan.subband_range(m);
    let nf = n as f64;
    let mut total = 0.0;
    for sc in range.clone() {
        let mut e = r[0].re;
        for (k, rk) in r.iter().enumerate().skip(1) {
            let w = (nf - k as f64) / nf;
            e += 2.0 * w * (rk * cis(-(((sc * k) % n) as f64) / nf)).re;
        }
        total += e;
    }
    Ok((total / range.len() as f64).sqrt())
}

//! Closed-form link analysis: ideal SNR, the impaired desired/ICI/ISI
//! power split, SINR, capacity, the exponential BER approximation and the
//! PBGR filter-length rule.

mod coupling;
mod pbgr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use coupling::{CouplingEngine, SourceKernel, UserLink};
pub use pbgr::{filter_length_for_pbgr, linear_fit, pbgr, pbgr_for_length, LinearFit};

pub use crate::waveform::filter_freq_response;
use crate::waveform::{FrameConfig, SubbandPlan};

/// Per active carrier powers in symbol-power units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    /// Grid indices of the active carriers, in order.
    pub carriers: Vec<usize>,
    pub p_d: Vec<f64>,
    pub p_ici: Vec<f64>,
    pub p_isi: Vec<f64>,
    /// Thermal noise after the receive DFT: `(window/N_os)·σ²`.
    pub noise: Vec<f64>,
    pub n_grid: usize,
    pub l3: usize,
}

impl PowerBreakdown {
    pub fn len(&self) -> usize {
        self.carriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carriers.is_empty()
    }

    /// Position of grid carrier `n` in the per-carrier vectors.
    pub fn index_of(&self, n: usize) -> Option<usize> {
        self.carriers.iter().position(|&c| c == n)
    }

    /// `P_ICI + P_ISI + noise` at position `i`.
    pub fn effective_noise(&self, i: usize) -> f64 {
        self.p_ici[i] + self.p_isi[i] + self.noise[i]
    }

    pub fn interference(&self, i: usize) -> f64 {
        self.p_ici[i] + self.p_isi[i]
    }

    /// SINR at position `i` (not the grid index).
    pub fn sinr_at(&self, i: usize) -> f64 {
        self.p_d[i] / self.effective_noise(i)
    }

    pub fn sinr_all(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.sinr_at(i)).collect()
    }

    /// `(N/L3)·Σ log2(1 + SINR)` over the active carriers.
    pub fn capacity(&self) -> f64 {
        let sum: f64 = (0..self.len()).map(|i| (1.0 + self.sinr_at(i)).log2()).sum();
        self.n_grid as f64 / self.l3 as f64 * sum
    }
}

/// SINR of grid carrier `n`.
pub fn sinr(breakdown: &PowerBreakdown, n: usize) -> Option<f64> {
    breakdown.index_of(n).map(|i| breakdown.sinr_at(i))
}

/// Capacity in bit/s/Hz of a breakdown computed for `config`.
pub fn capacity(breakdown: &PowerBreakdown, config: &FrameConfig) -> f64 {
    let sum: f64 = (0..breakdown.len()).map(|i| (1.0 + breakdown.sinr_at(i)).log2()).sum();
    config.n() as f64 / config.l3() as f64 * sum
}

/// Interference-free SNR of one carrier:
/// `(N/L2)·(ρ²_sym/σ²)·ρ²_CH·|F(n)|²/ρ²`.
pub fn ideal_snr(f_n: C64, rho: f64, rho_sym_sq: f64, noise_var: f64, channel_gain: f64, n_grid: usize, l2: usize) -> f64 {
    n_grid as f64 / l2 as f64 * rho_sym_sq / noise_var * channel_gain * f_n.norm_sqr() / (rho * rho)
}

/// Ideal SNR on every carrier of subband `m` of `config`.
pub fn subband_ideal_snr(config: &FrameConfig, m: usize, snr_linear: f64, channel_gain: f64, l_ch: usize) -> Vec<f64> {
    let f = &config.filters()[m];
    let l2 = config.l2(l_ch);
    let resp = f.freq_response(config.n());
    config
        .plan()
        .subband_range(m)
        .map(|n| ideal_snr(resp[n], f.rho(), snr_linear, 1.0, channel_gain, config.n(), l2))
        .collect()
}

/// Two-exponential BER model for square `M`-QAM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerModel {
    pub order: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub w1: f64,
    pub w2: f64,
}

impl BerModel {
    pub fn new(order: usize) -> Self {
        let m = order as f64;
        let a = 1.0 - 1.0 / m.sqrt();
        Self { order, phi1: 3.0 / (2.0 * (m - 1.0)), phi2: 2.0 / (m - 1.0), w1: a / 6.0, w2: a / 3.0 }
    }

    pub fn ber(&self, snr: f64) -> f64 {
        ber_approx(snr, self)
    }
}

/// `ϖ1·exp(−φ1·SNR) + ϖ2·exp(−φ2·SNR)`.
pub fn ber_approx(snr: f64, model: &BerModel) -> f64 {
    model.w1 * (-model.phi1 * snr).exp() + model.w2 * (-model.phi2 * snr).exp()
}

/// `Q(x) ≈ exp(−x²/2)/12 + exp(−2x²/3)/6`.
pub fn q_approx(x: f64) -> f64 {
    (-x * x / 2.0).exp() / 12.0 + (-2.0 * x * x / 3.0).exp() / 6.0
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn subband_avg_snr(snr: &[f64]) -> f64 {
    mean(snr.iter().copied())
}

pub fn subband_avg_capacity(snr: &[f64]) -> f64 {
    mean(snr.iter().map(|s| (1.0 + s).log2()))
}

pub fn subband_avg_ber(snr: &[f64], model: &BerModel) -> f64 {
    mean(snr.iter().map(|&s| ber_approx(s, model)))
}

/// Values of a grid-indexed vector restricted to subband `m`.
pub fn subband_values(values: &[f64], plan: &SubbandPlan, m: usize) -> Vec<f64> {
    values[plan.subband_range(m)].to_vec()
}

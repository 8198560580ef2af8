//! Oversampled DFT front end, one-tap ZF/MMSE equalization and hard
//! decisions.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sigcore::{cis, UnitaryDft};
use crate::waveform::{Qam, SubbandPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EqualizerKind {
    Zf,
    Mmse,
}

impl EqualizerKind {
    /// Regularization weight: 0 for ZF, 1 for MMSE.
    pub fn nu(self) -> f64 {
        match self {
            EqualizerKind::Zf => 0.0,
            EqualizerKind::Mmse => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    /// Oversampling exponent: the DFT has `2^eta·N` points.
    pub eta: u32,
    pub equalizer: EqualizerKind,
}

impl ReceiverConfig {
    pub fn oversampled_len(&self, n: usize) -> usize {
        n << self.eta
    }
}

/// Zero-pads `y` to `2^η·N`, applies the unitary DFT and keeps every
/// `2^η`-th bin.
pub fn dft_downsample(y: &[C64], n: usize, eta: u32) -> Result<Vec<C64>> {
    let n_os = n.checked_shl(eta).filter(|v| *v >= n).ok_or_else(|| Error::InvalidArgument("eta too large".into()))?;
    if y.len() > n_os {
        return invalid(format!("window of {} samples exceeds the {n_os}-point DFT", y.len()));
    }
    let dft = UnitaryDft::new(n_os)?;
    let mut buf = y.to_vec();
    buf.resize(n_os, C64::new(0.0, 0.0));
    dft.forward(&mut buf);
    Ok(buf.into_iter().step_by(1 << eta).collect())
}

/// Selected bins of [`dft_downsample`] evaluated directly:
/// `z(n) = 2^{−η/2}·N^{−1/2}·Σ_r y(r)·exp(−j2πnr/N)`.
pub fn dft_bins(y: &[C64], n: usize, eta: u32, bins: impl IntoIterator<Item = usize>) -> Vec<C64> {
    let scale = 1.0 / ((n << eta) as f64).sqrt();
    bins.into_iter()
        .map(|k| {
            let step = cis(-(k as f64) / n as f64);
            let mut ph = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for (r, &v) in y.iter().enumerate() {
                // Re-anchor the phasor periodically to bound drift.
                if r % 64 == 0 {
                    ph = cis(-(((k * r) % n) as f64) / n as f64);
                }
                acc += v * ph;
                ph *= step;
            }
            acc * scale
        })
        .collect()
}

/// Coupling of an interference-free link: `H(n)·F(n)/(ρ·2^{η/2})`.
pub fn ideal_coupling(h: C64, f: C64, rho: f64, eta: u32) -> C64 {
    h * f / (rho * 2f64.powf(eta as f64 / 2.0))
}

/// Per-subcarrier one-tap weights and the effective noise they assume.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerTaps {
    pub weights: Vec<C64>,
    pub sigma_eff: Vec<f64>,
}

/// `W(n) = β*/(|β|² + ν·σ²_eff(n)/ρ²_sym)` on the active carriers of
/// `plan`; `coupling` and `sigma_eff` are indexed by grid subcarrier.
pub fn build_equalizer(
    coupling: &[C64],
    sigma_eff: &[f64],
    rho_sym_sq: f64,
    kind: EqualizerKind,
    plan: &SubbandPlan,
) -> Result<EqualizerTaps> {
    let n = plan.n_grid();
    if coupling.len() != n || sigma_eff.len() != n {
        return invalid("coupling and noise vectors must cover the grid");
    }
    if sigma_eff.iter().any(|s| !(*s >= 0.0)) {
        return invalid("effective noise must be non-negative");
    }
    let nu = kind.nu();
    let mut weights = vec![C64::new(0.0, 0.0); n];
    for k in plan.active_range() {
        let b = coupling[k];
        let den = b.norm_sqr() + nu * sigma_eff[k] / rho_sym_sq;
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::SingularChannel(k));
        }
        weights[k] = b.conj() / den;
    }
    Ok(EqualizerTaps { weights, sigma_eff: sigma_eff.to_vec() })
}

/// Equalized soft values, hard decisions and bits for the active carriers.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub soft: Vec<C64>,
    pub indices: Vec<usize>,
    pub bits: Vec<u8>,
}

/// Equalizes `z` (grid-indexed) on the active carriers and slices to the
/// nearest point of `qam` (unit-power constellation scaled by
/// `sqrt(rho_sym_sq)`).
pub fn detect(z: &[C64], taps: &EqualizerTaps, plan: &SubbandPlan, qam: &Qam, rho_sym_sq: f64) -> Detection {
    let s = rho_sym_sq.sqrt();
    let soft: Vec<C64> = plan.active_range().map(|k| taps.weights[k] * z[k] / s).collect();
    let indices: Vec<usize> = soft.iter().map(|&v| qam.decide(v)).collect();
    let bits = qam.demap(&soft);
    Detection { soft, indices, bits }
}

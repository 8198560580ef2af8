//! Tapped-delay-line Rayleigh block-fading channels and propagation of a
//! symbol stream with timing offset, inter-symbol overlap and noise.
//!
//! Seeding: every random draw in a Monte-Carlo trial comes from
//! [`trial_rng`], a ChaCha8 generator keyed by the root seed with the trial
//! index as its stream number, so trials can run in any order.

use std::path::Path;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const EPA: &str = include_str!("../data/profiles/epa.json");
const EVA: &str = include_str!("../data/profiles/eva.json");
const ETU: &str = include_str!("../data/profiles/etu.json");
const HT: &str = include_str!("../data/profiles/ht.json");

/// Power-delay profile of a tapped-delay-line channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub name: String,
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
    /// Total linear gain after normalization.
    #[serde(default = "unit_gain")]
    pub total_gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

fn unit_gain() -> f64 {
    1.0
}

impl ChannelProfile {
    pub fn new(name: &str, delays_ns: Vec<f64>, powers_db: Vec<f64>) -> Result<Self> {
        let p = Self { name: name.to_string(), delays_ns, powers_db, total_gain: 1.0, source: None };
        p.validate()?;
        Ok(p)
    }

    /// Single tap with unit gain.
    pub fn flat() -> Self {
        Self { name: "flat".into(), delays_ns: vec![0.0], powers_db: vec![0.0], total_gain: 1.0, source: None }
    }

    /// Built-in profiles: EPA, EVA, ETU and HT (case-insensitive).
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name.to_ascii_uppercase().as_str() {
            "EPA" => EPA,
            "EVA" => EVA,
            "ETU" => ETU,
            "HT" => HT,
            "FLAT" => return Ok(Self::flat()),
            _ => return Err(Error::NotFound(format!("channel profile '{name}'"))),
        };
        Self::from_json(text)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["EPA", "EVA", "ETU", "HT", "flat"]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("channel profile: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays_ns.is_empty() {
            return invalid(format!("profile '{}' has no taps", self.name));
        }
        if self.delays_ns.len() != self.powers_db.len() {
            return invalid(format!("profile '{}': delay and power lists differ in length", self.name));
        }
        if self.delays_ns.iter().chain(&self.powers_db).any(|v| !v.is_finite()) {
            return invalid(format!("profile '{}': non-finite entry", self.name));
        }
        if self.delays_ns[0] < 0.0 || self.delays_ns.windows(2).any(|w| w[1] <= w[0]) {
            return invalid(format!("profile '{}': delays must be non-negative and strictly increasing", self.name));
        }
        if !(self.total_gain > 0.0) {
            return invalid(format!("profile '{}': total gain must be positive", self.name));
        }
        Ok(())
    }

    /// Expected power per sample-spaced tap: each delay goes to the
    /// nearest sample, colliding powers add, and the total is scaled to
    /// `total_gain`.
    pub fn tap_powers(&self, sample_rate_hz: f64) -> Result<Vec<f64>> {
        if !(sample_rate_hz > 0.0) {
            return invalid("sample rate must be positive");
        }
        self.validate()?;
        let idx: Vec<usize> = self.delays_ns.iter().map(|d| (d * 1e-9 * sample_rate_hz).round() as usize).collect();
        let mut p = vec![0.0; idx.iter().max().unwrap() + 1];
        for (&i, &db) in idx.iter().zip(&self.powers_db) {
            p[i] += 10f64.powf(db / 10.0);
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v *= self.total_gain / total);
        Ok(p)
    }
}

/// One block-fading realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<C64>,
    pub tap_powers: Vec<f64>,
}

impl ChannelRealization {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `H(n) = Σ_l h(l)·exp(−j2πnl/N)`.
    pub fn freq_response(&self, n: usize, n_grid: usize) -> C64 {
        crate::waveform::freq_response_at(&self.taps, n as f64, n_grid)
    }
}

/// Per-subband CFO (fraction of subcarrier spacing), per-user integer TO
/// (samples, receiver late) and noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentSet {
    pub cfo: Vec<f64>,
    pub to: Vec<usize>,
    pub noise_var: f64,
}

impl ImpairmentSet {
    pub fn ideal(users: usize, noise_var: f64) -> Self {
        Self { cfo: vec![0.0; users], to: vec![0; users], noise_var }
    }

    pub fn validate(&self, subbands: usize) -> Result<()> {
        if self.cfo.len() != subbands || self.to.len() != subbands {
            return invalid(format!(
                "{} CFO and {} TO values for {subbands} subbands",
                self.cfo.len(),
                self.to.len()
            ));
        }
        if let Some(e) = self.cfo.iter().find(|e| !(e.abs() < 0.5)) {
            return invalid(format!("CFO {e} outside (-0.5, 0.5)"));
        }
        if !(self.noise_var >= 0.0) {
            return invalid("noise variance must be non-negative");
        }
        Ok(())
    }
}

/// Generator for trial `trial` under `root_seed`.
pub fn trial_rng(root_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(trial);
    rng
}

/// Circular complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// Rayleigh taps drawn from an existing generator.
pub fn draw_channel<R: Rng + ?Sized>(tap_powers: &[f64], rng: &mut R) -> ChannelRealization {
    let taps = tap_powers
        .iter()
        .map(|&p| if p > 0.0 { complex_gaussian(rng, p) } else { C64::new(0.0, 0.0) })
        .collect();
    ChannelRealization { taps, tap_powers: tap_powers.to_vec() }
}

/// Rayleigh block-fading realization of `profile`, deterministic in `seed`.
pub fn realize_channel(profile: &ChannelProfile, sample_rate_hz: f64, seed: u64) -> Result<ChannelRealization> {
    let p = profile.tap_powers(sample_rate_hz)?;
    Ok(draw_channel(&p, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Convolves the concatenated stream with `h`, adds white noise, and cuts
/// one window of `window_len` samples per block starting `tau` samples
/// after the block start.
pub fn propagate_stream<R: Rng + ?Sized>(
    blocks: &[Vec<C64>],
    h: &[C64],
    tau: usize,
    noise_var: f64,
    window_len: usize,
    rng: &mut R,
) -> Result<Vec<Vec<C64>>> {
    let l3 = match blocks.first() {
        Some(b) if !b.is_empty() => b.len(),
        _ => return invalid("empty symbol stream"),
    };
    if blocks.iter().any(|b| b.len() != l3) {
        return invalid("symbol blocks differ in length");
    }
    if h.is_empty() {
        return invalid("empty channel");
    }
    let total = (blocks.len() - 1) * l3 + tau + window_len;
    let mut y = vec![C64::new(0.0, 0.0); total.max(blocks.len() * l3 + h.len() - 1)];
    for (s, block) in blocks.iter().enumerate() {
        for (i, &x) in block.iter().enumerate() {
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, &t) in y[s * l3 + i..].iter_mut().zip(h) {
                *o += x * t;
            }
        }
    }
    if noise_var > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, noise_var);
        }
    }
    Ok((0..blocks.len()).map(|s| y[s * l3 + tau..s * l3 + tau + window_len].to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::linear_convolve;

    #[test]
    fn builtin_profiles_load() {
        for name in ChannelProfile::builtin_names() {
            let p = ChannelProfile::builtin(name).unwrap();
            let taps = p.tap_powers(7.68e6).unwrap();
            assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(ChannelProfile::builtin("XYZ").is_err());
    }

    #[test]
    fn tap_lengths_at_desk_rate() {
        let len = |n| ChannelProfile::builtin(n).unwrap().tap_powers(7.68e6).unwrap().len();
        assert_eq!(len("ETU"), 39);
        assert_eq!(len("EPA"), 4);
        assert_eq!(len("HT"), 155);
        assert_eq!(len("flat"), 1);
    }

    #[test]
    fn colliding_taps_merge() {
        let p = ChannelProfile::new("t", vec![0.0, 30.0, 200.0], vec![0.0, 0.0, 0.0]).unwrap();
        let taps = p.tap_powers(7.68e6).unwrap();
        assert_eq!(taps.len(), 3);
        assert!((taps[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((taps[2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn profile_validation() {
        assert!(ChannelProfile::new("e", vec![], vec![]).is_err());
        assert!(ChannelProfile::new("e", vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(ChannelProfile::new("e", vec![0.0], vec![0.0, 1.0]).is_err());
        let p = ChannelProfile::flat();
        assert!(p.tap_powers(0.0).is_err());
    }

    #[test]
    fn tap_power_moments() {
        let p = ChannelProfile::builtin("EPA").unwrap();
        let want = p.tap_powers(7.68e6).unwrap();
        let mut acc = vec![0.0; want.len()];
        for seed in 0..10_000 {
            let h = realize_channel(&p, 7.68e6, seed).unwrap();
            acc.iter_mut().zip(&h.taps).for_each(|(a, t)| *a += t.norm_sqr());
        }
        for (a, w) in acc.iter().zip(&want) {
            if *w > 0.0 {
                assert!((a / 10_000.0 / w - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn realization_is_deterministic() {
        let p = ChannelProfile::builtin("ETU").unwrap();
        assert_eq!(realize_channel(&p, 7.68e6, 9).unwrap(), realize_channel(&p, 7.68e6, 9).unwrap());
    }

    #[test]
    fn identity_channel_window() {
        let q: Vec<C64> = (0..6).map(|i| C64::new(i as f64 + 1.0, 0.0)).collect();
        let mut rng = trial_rng(0, 0);
        let w = propagate_stream(&[q.clone()], &[C64::new(1.0, 0.0)], 0, 0.0, 8, &mut rng).unwrap();
        let mut want = q;
        want.resize(8, C64::new(0.0, 0.0));
        assert_eq!(w[0], want);
    }

    #[test]
    fn windows_match_full_convolution() {
        let mut rng = trial_rng(1, 0);
        let blocks: Vec<Vec<C64>> = (0..3).map(|_| (0..10).map(|_| complex_gaussian(&mut rng, 1.0)).collect()).collect();
        let h: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng, 0.25)).collect();
        let tau = 2;
        let wl = 13;
        let w = propagate_stream(&blocks, &h, tau, 0.0, wl, &mut rng).unwrap();
        let full = linear_convolve(&blocks.concat(), &h).unwrap();
        for (s, win) in w.iter().enumerate() {
            for (r, v) in win.iter().enumerate() {
                let want = full.get(s * 10 + tau + r).copied().unwrap_or_default();
                assert!((v - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sufficient_guard_has_no_leakage() {
        // Block of 6 data samples followed by 3 zeros, channel of 4 taps.
        let mut rng = trial_rng(2, 0);
        let mut blocks = vec![vec![C64::new(0.0, 0.0); 9]; 3];
        for v in blocks[0].iter_mut().take(6) {
            *v = complex_gaussian(&mut rng, 1.0);
        }
        let h: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng, 0.25)).collect();
        let w = propagate_stream(&blocks, &h, 0, 0.0, 9, &mut rng).unwrap();
        assert!(w[1].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn noise_calibration() {
        let mut rng = trial_rng(3, 0);
        let n = 1_000_000;
        let var = 0.3;
        let p: f64 = (0..n).map(|_| complex_gaussian(&mut rng, var).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p / var - 1.0).abs() < 0.02);
    }

    #[test]
    fn mismatched_blocks_rejected() {
        let mut rng = trial_rng(0, 0);
        let b = vec![vec![C64::new(1.0, 0.0); 4], vec![C64::new(1.0, 0.0); 5]];
        assert!(propagate_stream(&b, &[C64::new(1.0, 0.0)], 0, 0.0, 4, &mut rng).is_err());
    }

    #[test]
    fn impairment_validation() {
        let mut i = ImpairmentSet::ideal(3, 0.1);
        assert!(i.validate(3).is_ok());
        i.cfo[1] = 0.5;
        assert!(i.validate(3).is_err());
        assert!(ImpairmentSet::ideal(2, 0.1).validate(3).is_err());
    }
}

//! Serializable experiment description, built-in presets and the resolved
//! runtime form ([`LinkSetup`]) consumed by the simulators and solvers.
//!
//! Units: CFO as a fraction of the subcarrier spacing, timing offsets in
//! samples, channel delays in nanoseconds, attenuation and SNR in dB.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{CouplingEngine, PowerBreakdown, UserLink};
use crate::channel::ChannelProfile;
use crate::error::{Error, Result};
use crate::receiver::EqualizerKind;
use crate::waveform::{design_chebyshev_filter, FrameConfig, Qam, SubbandFilter, SubbandPlan};

/// Subcarrier spacing used to derive the default sample rate.
pub const SUBCARRIER_SPACING_HZ: f64 = 15e3;

/// Channel of one user: a built-in profile name, a profile file, or an
/// inline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Named(String),
    File { file: PathBuf },
    Inline(ChannelProfile),
}

impl ChannelSpec {
    pub fn resolve(&self) -> Result<ChannelProfile> {
        match self {
            ChannelSpec::Named(name) => ChannelProfile::builtin(name),
            ChannelSpec::File { file } => ChannelProfile::from_file(file),
            ChannelSpec::Inline(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

/// One subband and the user it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubbandSpec {
    /// Number of consecutive subcarriers.
    pub size: usize,
    /// Filter length in taps.
    pub filter_length: usize,
    /// Chebyshev sidelobe attenuation in dB.
    #[serde(default = "default_attenuation")]
    pub attenuation_db: f64,
    /// Carrier frequency offset, fraction of the subcarrier spacing.
    #[serde(default)]
    pub cfo: f64,
    /// Receive timing offset in samples (receiver late).
    #[serde(default)]
    pub timing_offset: usize,
    pub channel: ChannelSpec,
}

fn default_attenuation() -> f64 {
    50.0
}

fn default_symbol_power() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialCounts {
    /// Monte-Carlo trials for the power decomposition.
    pub power: usize,
    /// Upper bound on BER trials per SNR point.
    pub ber_max: usize,
    /// BER trials stop once this many bit errors accumulate.
    pub ber_target_errors: u64,
}

impl Default for TrialCounts {
    fn default() -> Self {
        Self { power: 10_000, ber_max: 20_000, ber_target_errors: 10_000 }
    }
}

/// Inclusive integer range with a stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntRange {
    pub start: i64,
    pub end: i64,
    #[serde(default = "unit_step")]
    pub step: i64,
}

fn unit_step() -> i64 {
    1
}

impl IntRange {
    pub fn new(start: i64, end: i64, step: i64) -> Self {
        Self { start, end, step }
    }

    pub fn single(v: i64) -> Self {
        Self { start: v, end: v, step: 1 }
    }

    pub fn values(&self) -> Vec<i64> {
        if self.step <= 0 || self.end < self.start {
            return Vec::new();
        }
        (self.start..=self.end).step_by(self.step as usize).collect()
    }
}

/// Search bounds for the length optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBounds {
    /// Smallest admissible filter length.
    pub min_filter_length: usize,
    /// Smallest admissible guard length (negative allows tail cutting).
    pub min_zp_length: i64,
    pub filter_lengths: IntRange,
    pub zp_lengths: IntRange,
    /// Overhead budgets `L_F + L_ZP` for the budget problems.
    pub budgets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// DFT grid size N.
    pub grid_size: usize,
    /// Sample rate in Hz; defaults to `N × 15 kHz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
    /// First active subcarrier; defaults to centring the subbands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_active: Option<usize>,
    pub subbands: Vec<SubbandSpec>,
    /// Guard length in samples; negative values cut the filter tails.
    pub zp_length: i64,
    /// Per-subband guard lengths; overrides `zp_length` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zp_per_subband: Option<Vec<i64>>,
    /// DFT oversampling exponent; defaults to the smallest covering the
    /// longest receive window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<u32>,
    /// Operating SNR `ρ²_sym/σ²` in dB.
    pub snr_db: f64,
    /// SNR grid for BER curves, dB.
    #[serde(default)]
    pub snr_grid_db: Vec<f64>,
    pub modulation_order: usize,
    #[serde(default = "default_symbol_power")]
    pub symbol_power: f64,
    pub equalizer: EqualizerKind,
    pub seed: u64,
    #[serde(default)]
    pub trials: TrialCounts,
    pub optimizer: OptimizerBounds,
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

impl Scenario {
    /// Parses JSON, reporting the failing field path on error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            cfg_err(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
        })?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate_hz.unwrap_or(self.grid_size as f64 * SUBCARRIER_SPACING_HZ)
    }

    pub fn first_active_index(&self) -> usize {
        let total: usize = self.subbands.iter().map(|s| s.size).sum();
        self.first_active.unwrap_or((self.grid_size.saturating_sub(total)) / 2)
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Checks every field and resolves it into a [`LinkSetup`].
    pub fn validate(&self) -> Result<LinkSetup> {
        self.build()
    }

    pub fn build(&self) -> Result<LinkSetup> {
        if self.grid_size == 0 {
            return Err(cfg_err("grid_size", "must be >= 1"));
        }
        if self.subbands.is_empty() {
            return Err(cfg_err("subbands", "at least one subband required"));
        }
        if let Some(r) = self.sample_rate_hz {
            if !(r > 0.0) {
                return Err(cfg_err("sample_rate_hz", "must be positive"));
            }
        }
        for (m, s) in self.subbands.iter().enumerate() {
            let p = |f: &str| format!("subbands[{m}].{f}");
            if s.size == 0 {
                return Err(cfg_err(p("size"), "must be >= 1"));
            }
            if s.filter_length == 0 {
                return Err(cfg_err(p("filter_length"), "must be >= 1"));
            }
            if !(s.attenuation_db > 0.0) {
                return Err(cfg_err(p("attenuation_db"), "must be positive"));
            }
            if !(s.cfo.abs() < 0.5) {
                return Err(cfg_err(p("cfo"), "must lie in (-0.5, 0.5)"));
            }
        }
        let sizes: Vec<usize> = self.subbands.iter().map(|s| s.size).collect();
        let plan = SubbandPlan::new(self.grid_size, &sizes, self.first_active_index())
            .map_err(|e| cfg_err(if self.first_active.is_some() { "first_active" } else { "subbands" }, e.to_string()))?;
        let filters = self
            .subbands
            .iter()
            .enumerate()
            .map(|(m, s)| {
                design_chebyshev_filter(s.filter_length, s.attenuation_db, &plan, m)
                    .map_err(|e| cfg_err(format!("subbands[{m}].filter_length"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let config = match &self.zp_per_subband {
            Some(z) => FrameConfig::per_subband(plan, filters, z.clone())
                .map_err(|e| cfg_err("zp_per_subband", e.to_string()))?,
            None => FrameConfig::new(plan, filters, self.zp_length).map_err(|e| cfg_err("zp_length", e.to_string()))?,
        };
        let fs = self.sample_rate();
        let mut profiles = Vec::new();
        for (m, s) in self.subbands.iter().enumerate() {
            let profile = s.channel.resolve().map_err(|e| cfg_err(format!("subbands[{m}].channel"), e.to_string()))?;
            profiles.push(profile);
        }
        let links = profiles
            .iter()
            .zip(&self.subbands)
            .map(|(p, s)| Ok(UserLink { tap_powers: p.tap_powers(fs)?, tau: s.timing_offset }))
            .collect::<Result<Vec<_>>>()?;
        let min_eta = links.iter().map(|l| config.min_eta(l.tap_powers.len())).max().unwrap_or(0);
        let eta = match self.eta {
            Some(e) => {
                let widest = links.iter().map(|l| config.receive_window_len(l.tap_powers.len())).max().unwrap_or(0);
                if e > 16 || (self.grid_size << e) < widest {
                    return Err(cfg_err("eta", format!("2^eta·N must cover the {widest}-sample receive window")));
                }
                e
            }
            None => min_eta,
        };
        Qam::new(self.modulation_order).map_err(|e| cfg_err("modulation_order", e.to_string()))?;
        if !(self.symbol_power > 0.0) {
            return Err(cfg_err("symbol_power", "must be positive"));
        }
        if !self.snr_db.is_finite() {
            return Err(cfg_err("snr_db", "must be finite"));
        }
        if let Some(i) = self.snr_grid_db.iter().position(|v| !v.is_finite()) {
            return Err(cfg_err(format!("snr_grid_db[{i}]"), "must be finite"));
        }
        if self.trials.power == 0 {
            return Err(cfg_err("trials.power", "must be >= 1"));
        }
        if self.optimizer.min_filter_length == 0 {
            return Err(cfg_err("optimizer.min_filter_length", "must be >= 1"));
        }
        for (name, r) in [("filter_lengths", &self.optimizer.filter_lengths), ("zp_lengths", &self.optimizer.zp_lengths)] {
            if r.step <= 0 {
                return Err(cfg_err(format!("optimizer.{name}.step"), "must be positive"));
            }
            if r.end < r.start {
                return Err(cfg_err(format!("optimizer.{name}"), "end before start"));
            }
        }
        if self.optimizer.filter_lengths.start < 1 {
            return Err(cfg_err("optimizer.filter_lengths.start", "must be >= 1"));
        }
        Ok(LinkSetup {
            config,
            cfo: self.subbands.iter().map(|s| s.cfo).collect(),
            attenuation_db: self.subbands.iter().map(|s| s.attenuation_db).collect(),
            links,
            profiles,
            rho_sym_sq: self.symbol_power,
            noise_var: self.symbol_power / self.snr_linear(),
            eta,
            modulation: self.modulation_order,
            equalizer: self.equalizer,
            sample_rate_hz: fs,
        })
    }
}

/// Fully resolved link: frame, impairments, users and receiver settings.
#[derive(Debug, Clone)]
pub struct LinkSetup {
    pub config: FrameConfig,
    /// CFO per subband (source side).
    pub cfo: Vec<f64>,
    /// Chebyshev sidelobe attenuation per subband, used when filters are
    /// redesigned at another length.
    pub attenuation_db: Vec<f64>,
    /// Channel power profile and timing offset of the user on each subband.
    pub links: Vec<UserLink>,
    pub profiles: Vec<ChannelProfile>,
    pub rho_sym_sq: f64,
    pub noise_var: f64,
    pub eta: u32,
    pub modulation: usize,
    pub equalizer: EqualizerKind,
    pub sample_rate_hz: f64,
}

impl LinkSetup {
    pub fn engine(&self) -> Result<CouplingEngine> {
        CouplingEngine::new(&self.config, &self.cfo)
    }

    pub fn breakdown(&self) -> Result<PowerBreakdown> {
        self.engine()?.power_breakdown(&self.config, &self.links, self.rho_sym_sq, self.noise_var, self.eta)
    }

    pub fn max_channel_len(&self) -> usize {
        self.links.iter().map(|l| l.tap_powers.len()).max().unwrap_or(1)
    }

    /// Smallest η covering every user's receive window for `config`.
    pub fn eta_for(&self, config: &FrameConfig) -> u32 {
        self.links.iter().map(|l| config.min_eta(l.tap_powers.len())).max().unwrap_or(0).max(self.eta)
    }

    /// Same link with the frame replaced.
    pub fn with_config(&self, config: FrameConfig) -> LinkSetup {
        let mut out = self.clone();
        out.eta = out.eta_for(&config);
        out.config = config;
        out
    }

    pub fn with_noise_var(&self, noise_var: f64) -> LinkSetup {
        LinkSetup { noise_var, ..self.clone() }
    }

    /// No CFO, no timing offset and a guard covering the longest channel.
    pub fn idealized(&self) -> Result<LinkSetup> {
        let l_zp = (self.max_channel_len() as i64 - 1).max(self.config.l_zp().unwrap_or(0));
        let config = FrameConfig::new(self.config.plan().clone(), self.config.filters().to_vec(), l_zp)?;
        let mut out = self.with_config(config);
        out.cfo.iter_mut().for_each(|e| *e = 0.0);
        out.links.iter_mut().for_each(|l| l.tau = 0);
        Ok(out)
    }

    /// OFDM with the same impairments and a guard equal to the UFMC
    /// overhead `L_F,max − 1 + L_ZP`, so both symbols have equal length.
    pub fn ofdm_reference(&self) -> Result<LinkSetup> {
        let plan = self.config.plan();
        let filters = (0..plan.num_subbands())
            .map(|m| SubbandFilter::unit(plan, m))
            .collect::<Result<Vec<_>>>()?;
        let l_zp = self.config.l3() as i64 - plan.n_grid() as i64;
        let config = FrameConfig::new(plan.clone(), filters, l_zp)?;
        Ok(self.with_config(config))
    }
}

/// Names of the built-in presets.
pub const PRESETS: [&str; 6] =
    ["ufmc-paper-va", "ufmc-paper-vb-epa", "ufmc-paper-vb-etu", "ufmc-paper-vb-ht", "ufmc-paper-vc-low", "ufmc-paper-vc-high"];

struct UserSpec {
    filter: usize,
    cfo: f64,
    tau: usize,
    channel: &'static str,
}

fn assemble(name: &str, scale: usize, users: [UserSpec; 3], zp: i64, optimizer: OptimizerBounds) -> Scenario {
    let n = 512 * scale;
    Scenario {
        name: name.to_string(),
        grid_size: n,
        sample_rate_hz: None,
        first_active: Some(n / 2 - 18),
        subbands: users
            .into_iter()
            .map(|u| SubbandSpec {
                size: 12,
                filter_length: u.filter,
                attenuation_db: 50.0,
                cfo: u.cfo,
                timing_offset: u.tau,
                channel: ChannelSpec::Named(u.channel.to_string()),
            })
            .collect(),
        zp_length: zp,
        zp_per_subband: None,
        eta: None,
        snr_db: 15.0,
        snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        modulation_order: 16,
        symbol_power: 1.0,
        equalizer: EqualizerKind::Mmse,
        seed: 20_160_101,
        trials: TrialCounts::default(),
        optimizer,
    }
}

/// Built-in scenario. The default grid is N = 512 (7.68 MHz); with
/// `paper_grid` every sample-denominated quantity except the
/// signal-model study's filter and guard is scaled by 4 for N = 2048.
pub fn preset(name: &str, paper_grid: bool) -> Result<Scenario> {
    let s = if paper_grid { 4 } else { 1 };
    let si = s as i64;
    let optimizer = OptimizerBounds {
        min_filter_length: 16 * s,
        min_zp_length: 0,
        filter_lengths: IntRange::new(16 * si, 100 * si, 1),
        zp_lengths: IntRange::new(0, 100 * si, 1),
        budgets: vec![20 * s, 44 * s, 64 * s, 84 * s],
    };
    let u = |filter, cfo, tau, channel| UserSpec { filter, cfo, tau, channel };
    let vb = |channel: &'static str| {
        let users = [u(49 * s, 0.02, 16 * s, channel), u(49 * s, 0.02, 16 * s, channel), u(49 * s, 0.02, 16 * s, channel)];
        (users, 0)
    };
    let (users, zp) = match name {
        "ufmc-paper-va" => ([u(128, 0.06, 40 * s, "EVA"), u(128, 0.15, 64 * s, "ETU"), u(128, 0.04, 20 * s, "EPA")], 16),
        "ufmc-paper-vb-epa" => vb("EPA"),
        "ufmc-paper-vb-etu" => vb("ETU"),
        "ufmc-paper-vb-ht" => vb("HT"),
        "ufmc-paper-vc-low" => (
            [u(16 * s, 0.01, 4 * s, "HT"), u(16 * s, 0.03, 8 * s, "HT"), u(16 * s, 0.02, 4 * s, "HT")],
            12 * si,
        ),
        "ufmc-paper-vc-high" => (
            [u(16 * s, 0.05, 8 * s, "HT"), u(16 * s, 0.1, 16 * s, "HT"), u(16 * s, 0.1, 12 * s, "HT")],
            36 * si,
        ),
        _ => return Err(Error::NotFound(format!("preset '{name}' (known: {})", PRESETS.join(", ")))),
    };
    Ok(assemble(name, s, users, zp, optimizer))
}

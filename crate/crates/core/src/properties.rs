//! Randomized checks of the structural properties of the ideal and
//! impaired link: interference-free reception, the ideal SNR expression,
//! the SNR/capacity/BER orderings against OFDM, filter-length
//! monotonicity and the linear PBGR rule.
//!
//! Each check returns a [`Check`] instead of panicking so the suite can
//! back both the test harness and the command-line `verify` report.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    filter_length_for_pbgr, ideal_snr, linear_fit, subband_avg_ber, subband_avg_capacity, subband_avg_snr, BerModel,
    UserLink,
};
use crate::channel::ChannelProfile;
use crate::error::Result;
use crate::montecarlo::run_power_trials;
use crate::receiver::EqualizerKind;
use crate::scenario::LinkSetup;
use crate::waveform::{design_chebyshev_filter, FrameConfig, SubbandFilter, SubbandPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    /// Random configurations per ordering suite.
    pub configs: usize,
    /// Random interference-free scenarios.
    pub free_scenarios: usize,
    /// Monte-Carlo trials per interference-free scenario.
    pub free_trials: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { seed: 20160101, configs: 100, free_scenarios: 20, free_trials: 1000 }
    }
}

/// Leakage bound for interference-free links, relative to `P_D`.
pub const FREE_LEAKAGE: f64 = 1e-6;
/// Tolerance of the full-band equality case.
pub const EQUALITY_TOL: f64 = 1e-6;

/// A random multi-subband frame with an interference-free guard, no CFO
/// and no timing offset.
fn random_free_link(rng: &mut ChaCha8Rng) -> Result<LinkSetup> {
    let n = *[32usize, 64, 128].choose(rng).expect("non-empty");
    let m = rng.gen_range(1..=3);
    let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=n / 8)).collect();
    let span: usize = sizes.iter().sum();
    let first = rng.gen_range(0..=n - span);
    let plan = SubbandPlan::new(n, &sizes, first)?;
    let atten = rng.gen_range(30.0..70.0);
    let filters = (0..m)
        .map(|i| design_chebyshev_filter(rng.gen_range(1..=n / 4), atten, &plan, i))
        .collect::<Result<Vec<_>>>()?;
    let mut links = Vec::new();
    let mut profiles = Vec::new();
    for _ in 0..m {
        let l_ch = rng.gen_range(1..=8);
        let db: Vec<f64> = (0..l_ch).map(|j| -(j as f64) * rng.gen_range(0.5..3.0)).collect();
        let profile = ChannelProfile::new("random", (0..l_ch).map(|j| j as f64 * 1e3).collect(), db)?;
        links.push(UserLink { tap_powers: profile.tap_powers(1e6)?, tau: 0 });
        profiles.push(profile);
    }
    let l_ch_max = links.iter().map(|l| l.tap_powers.len()).max().unwrap_or(1);
    let l_zp = l_ch_max as i64 - 1 + rng.gen_range(0..=3);
    let config = FrameConfig::new(plan, filters, l_zp)?;
    let eta = config.min_eta(l_ch_max);
    Ok(LinkSetup {
        config,
        cfo: vec![0.0; m],
        attenuation_db: vec![atten; m],
        links,
        profiles,
        rho_sym_sq: 1.0,
        noise_var: 0.0,
        eta,
        modulation: 16,
        equalizer: EqualizerKind::Mmse,
        sample_rate_hz: 1e6,
    })
}

/// Interference-free reception: with a guard covering the channel, an
/// oversampled DFT covering `L2` and no CFO/TO, `(P_ICI + P_ISI)/P_D`
/// stays below [`FREE_LEAKAGE`] analytically and in simulation.
pub fn check_interference_free(opts: &CheckOptions) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst_analytic = 0.0f64;
    let mut worst_mc = 0.0f64;
    for s in 0..opts.free_scenarios {
        let setup = random_free_link(&mut rng)?;
        let bd = setup.breakdown()?;
        for i in 0..bd.len() {
            worst_analytic = worst_analytic.max(bd.interference(i) / bd.p_d[i]);
        }
        let mc = run_power_trials(&setup, opts.free_trials.max(2), opts.seed.wrapping_add(s as u64))?;
        for i in 0..mc.carriers.len() {
            worst_mc = worst_mc.max((mc.p_ici.mean[i] + mc.p_isi.mean[i]) / mc.p_d.mean[i]);
        }
    }
    let pass = worst_analytic < FREE_LEAKAGE && worst_mc < FREE_LEAKAGE;
    Ok(Check::new(
        "interference-free",
        pass,
        format!(
            "{} scenarios, {} trials each: worst leakage analytic {worst_analytic:.2e}, simulated {worst_mc:.2e} (bound {FREE_LEAKAGE:.0e})",
            opts.free_scenarios, opts.free_trials
        ),
    ))
}

/// The closed-form SINR of an interference-free link equals the ideal SNR
/// expression `(N/L2)·(ρ²_sym/σ²)·ρ²_CH·|F(n)|²/ρ²` on every carrier.
pub fn check_ideal_snr(opts: &CheckOptions) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..opts.free_scenarios {
        let mut setup = random_free_link(&mut rng)?;
        setup.noise_var = 10f64.powf(-rng.gen_range(0.0..3.0));
        let bd = setup.breakdown()?;
        let plan = setup.config.plan();
        for (i, &n) in bd.carriers.iter().enumerate() {
            let m = plan.subband_of(n).expect("active carrier");
            let f = &setup.config.filters()[m];
            let l_ch = setup.links[m].tap_powers.len();
            let gain: f64 = setup.links[m].tap_powers.iter().sum();
            let want = ideal_snr(f.freq_response(plan.n_grid())[n], f.rho(), 1.0, setup.noise_var, gain, plan.n_grid(), setup.config.l2(l_ch));
            worst = worst.max((bd.sinr_at(i) / want - 1.0).abs());
        }
    }
    Ok(Check::new("ideal-snr", worst < 1e-9, format!("worst relative deviation {worst:.2e}")))
}

/// One random single-subband setting for the OFDM comparisons.
struct Ordering {
    ufmc: Vec<f64>,
    ofdm: f64,
}

/// Ideal per-carrier SNRs of a random subband, each link at its own
/// `L2` (UFMC `N + L_F + L_CH − 2`, OFDM `N + L_CH − 1`), plus the
/// OFDM value.
fn random_ordering(rng: &mut ChaCha8Rng, snr_db: f64) -> Result<Ordering> {
    let n = *[64usize, 128, 256, 512].choose(rng).expect("non-empty");
    let n_m = rng.gen_range(2..=n / 4);
    let first = rng.gen_range(0..=n - n_m);
    let plan = SubbandPlan::new(n, &[n_m], first)?;
    let l_f = rng.gen_range(2..=n / 2);
    let f = design_chebyshev_filter(l_f, rng.gen_range(30.0..70.0), &plan, 0)?;
    let l_ch = rng.gen_range(1..=40);
    let snr = 10f64.powf(snr_db / 10.0);
    let resp = f.freq_response(n);
    let l2 = n + l_f + l_ch - 2;
    let ufmc = plan.subband_range(0).map(|k| ideal_snr(resp[k], f.rho(), snr, 1.0, 1.0, n, l2)).collect();
    let ofdm = ideal_snr(num_complex::Complex64::new(1.0, 0.0), 1.0, snr, 1.0, 1.0, n, n + l_ch - 1);
    Ok(Ordering { ufmc, ofdm })
}

/// Full-band equality case: one subband covering the grid, compared at a
/// common `L2`. The filter gain then averages to exactly one.
fn full_band_deviation(rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = *[64usize, 128, 256].choose(rng).expect("non-empty");
    let plan = SubbandPlan::new(n, &[n], 0)?;
    let l_f = rng.gen_range(2..=n / 2);
    let f = design_chebyshev_filter(l_f, 50.0, &plan, 0)?;
    let resp = f.freq_response(n);
    let l2 = n + l_f;
    let ufmc: Vec<f64> = (0..n).map(|k| ideal_snr(resp[k], f.rho(), 100.0, 1.0, 1.0, n, l2)).collect();
    let ofdm = ideal_snr(num_complex::Complex64::new(1.0, 0.0), 1.0, 100.0, 1.0, 1.0, n, l2);
    Ok((subband_avg_snr(&ufmc) / ofdm - 1.0).abs())
}

/// Subband-average ideal SNR never exceeds the OFDM SNR.
pub fn check_snr_ordering(opts: &CheckOptions) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 3);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..opts.configs {
        let snr_db = rng.gen_range(0.0..30.0);
        let o = random_ordering(&mut rng, snr_db)?;
        let r = subband_avg_snr(&o.ufmc) / o.ofdm;
        worst_ratio = worst_ratio.max(r);
        if r > 1.0 {
            violations += 1;
        }
    }
    let mut worst_eq = 0.0f64;
    for _ in 0..10 {
        worst_eq = worst_eq.max(full_band_deviation(&mut rng)?);
    }
    Ok(Check::new(
        "snr-ordering",
        violations == 0 && worst_eq < EQUALITY_TOL,
        format!(
            "{} configs, {violations} violations, largest UFMC/OFDM ratio {worst_ratio:.4}; full-band deviation {worst_eq:.2e}",
            opts.configs
        ),
    ))
}

/// At high SNR on a flat channel, the subband-average capacity per
/// carrier does not exceed the OFDM value.
pub fn check_capacity_ordering(opts: &CheckOptions) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 4);
    let mut violations = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..opts.configs {
        let snr_db = rng.gen_range(30.0..50.0);
        let o = random_ordering(&mut rng, snr_db)?;
        let gap = subband_avg_capacity(&o.ufmc) - (1.0 + o.ofdm).log2();
        worst_gap = worst_gap.max(gap);
        if gap > 0.0 {
            violations += 1;
        }
    }
    Ok(Check::new(
        "capacity-ordering",
        violations == 0,
        format!("{} configs, {violations} violations, largest UFMC−OFDM gap {worst_gap:.4} bit", opts.configs),
    ))
}

/// The subband-average approximate BER is never below the OFDM value.
pub fn check_ber_ordering(opts: &CheckOptions) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 5);
    let mut violations = 0;
    let mut worst_ratio = f64::INFINITY;
    for _ in 0..opts.configs {
        let model = BerModel::new(*[4usize, 16, 64].choose(&mut rng).expect("non-empty"));
        let snr_db = rng.gen_range(0.0..30.0);
        let o = random_ordering(&mut rng, snr_db)?;
        let ofdm = model.ber(o.ofdm);
        let r = subband_avg_ber(&o.ufmc, &model) / ofdm;
        worst_ratio = worst_ratio.min(r);
        if r < 1.0 {
            violations += 1;
        }
    }
    Ok(Check::new(
        "ber-ordering",
        violations == 0,
        format!("{} configs, {violations} violations, smallest UFMC/OFDM ratio {worst_ratio:.4}", opts.configs),
    ))
}

/// Longer Chebyshev filters give a lower subband-average SNR.
pub fn check_length_monotonicity(opts: &CheckOptions) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 6);
    let lengths = [16usize, 32, 64, 128];
    let mut violations = 0;
    let runs = 20;
    for _ in 0..runs {
        let n = 512;
        let n_m = rng.gen_range(4..=64);
        let plan = SubbandPlan::new(n, &[n_m], rng.gen_range(0..=n - n_m))?;
        let l_ch = rng.gen_range(1..=40);
        let avg: Vec<f64> = lengths
            .iter()
            .map(|&l| {
                let f = design_chebyshev_filter(l, 50.0, &plan, 0)?;
                Ok(subband_avg_snr(&subband_snr(&f, &plan, n + l + l_ch - 2)))
            })
            .collect::<Result<_>>()?;
        if avg.windows(2).any(|w| w[1] > w[0]) {
            violations += 1;
        }
    }
    Ok(Check::new(
        "length-monotonicity",
        violations == 0,
        format!("{runs} plans over L_F ∈ {lengths:?}, {violations} violations"),
    ))
}

fn subband_snr(f: &SubbandFilter, plan: &SubbandPlan, l2: usize) -> Vec<f64> {
    let resp = f.freq_response(plan.n_grid());
    plan.subband_range(f.subband()).map(|k| ideal_snr(resp[k], f.rho(), 1.0, 1.0, 1.0, plan.n_grid(), l2)).collect()
}

/// PBGR targets and grid ratios of the linear filter-length rule.
pub const PBGR_TARGETS_DB: [f64; 3] = [1.0, 3.0, 10.0];
pub const PBGR_RATIOS: [usize; 9] = [4, 6, 8, 10, 12, 14, 16, 18, 20];

/// Least-squares fit of the PBGR-selected filter length against `N/N_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbgrFit {
    pub target_db: f64,
    pub ratios: Vec<f64>,
    pub lengths: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Selected filter lengths over `N/N_m ∈ {4, 6, …, 20}` (N = 512,
/// `N_m = round(N/ratio)`) and their linear fit, per PBGR target.
pub fn pbgr_fits(n: usize, atten_db: f64) -> Result<Vec<PbgrFit>> {
    PBGR_TARGETS_DB
        .iter()
        .map(|&target| {
            let mut ratios = Vec::new();
            let mut lengths = Vec::new();
            for &r in &PBGR_RATIOS {
                let n_m = (n as f64 / r as f64).round() as usize;
                ratios.push(n as f64 / n_m as f64);
                lengths.push(filter_length_for_pbgr(target, n, n_m, atten_db, n)?);
            }
            let y: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
            let fit = linear_fit(&ratios, &y)?;
            Ok(PbgrFit { target_db: target, ratios, lengths, slope: fit.slope, intercept: fit.intercept, r2: fit.r2 })
        })
        .collect()
}

/// The PBGR-selected length grows linearly with `N/N_m` (R² > 0.99).
pub fn check_pbgr_linearity() -> Result<Check> {
    let fits = pbgr_fits(512, 50.0)?;
    let pass = fits.iter().all(|f| f.r2 > 0.99);
    let detail = fits
        .iter()
        .map(|f| format!("{} dB: L_F ≈ {:.2}·N/N_m {:+.2}, R² {:.4}", f.target_db, f.slope, f.intercept, f.r2))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Check::new("pbgr-linearity", pass, detail))
}

/// Runs every check in a fixed order.
pub fn run_all(opts: &CheckOptions) -> Result<Vec<Check>> {
    Ok(vec![
        check_interference_free(opts)?,
        check_ideal_snr(opts)?,
        check_snr_ordering(opts)?,
        check_capacity_ordering(opts)?,
        check_ber_ordering(opts)?,
        check_length_monotonicity(opts)?,
        check_pbgr_linearity()?,
    ])
}

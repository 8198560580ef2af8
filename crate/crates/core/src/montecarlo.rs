//! Seeded Monte-Carlo harness.
//!
//! Trial `i` draws everything from [`trial_rng`]`(root_seed, i)`, trials
//! run in parallel, and results are reduced sequentially in trial order,
//! so reports do not depend on the thread count.
//!
//! The received value on each carrier is split by rerunning the linear
//! chain with selectively zeroed inputs: only `a_0(n)` (desired), all of
//! symbol 0 (desired + ICI), only the neighbouring symbols (ISI), and the
//! full stream with noise.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{CouplingEngine, PowerBreakdown};
use crate::channel::{complex_gaussian, draw_channel, propagate_stream, trial_rng, ChannelRealization};
use crate::error::{invalid, Result};
use crate::receiver::{build_equalizer, detect, dft_bins, ideal_coupling, EqualizerKind};
use crate::scenario::LinkSetup;
use crate::waveform::{Qam, Synthesizer};

/// Mean and standard error per active carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: usize,
    pub root_seed: u64,
    pub carriers: Vec<usize>,
    pub p_d: Estimate,
    pub p_ici: Estimate,
    pub p_isi: Estimate,
    pub noise: Estimate,
    /// Power of the full received value.
    pub total: Estimate,
    /// `P_D/(P_ICI + P_ISI + noise)` from the mean powers.
    pub sinr: Vec<f64>,
}

impl TrialReport {
    /// Largest `|total − (P_D+P_ICI+P_ISI+noise)|` in units of the total's
    /// standard error.
    pub fn additivity_z(&self) -> f64 {
        (0..self.carriers.len())
            .map(|i| {
                let sum = self.p_d.mean[i] + self.p_ici.mean[i] + self.p_isi.mean[i] + self.noise.mean[i];
                (self.total.mean[i] - sum).abs() / self.total.se[i].max(1e-300)
            })
            .fold(0.0, f64::max)
    }
}

/// Symbol offsets simulated around symbol 0: wide enough to contain every
/// symbol whose samples can reach any user's window.
fn stream_offsets(setup: &LinkSetup) -> (i64, i64) {
    let l3 = setup.config.l3() as i64;
    let reach_back = setup.config.l1() as i64 + setup.max_channel_len() as i64;
    let tau_max = setup.links.iter().map(|l| l.tau).max().unwrap_or(0) as i64;
    let reach_fwd = tau_max + setup.config.l2(setup.max_channel_len()) as i64;
    (-(reach_back / l3 + 1), reach_fwd / l3 + 1)
}

struct Chain<'a> {
    setup: &'a LinkSetup,
    synth: Synthesizer,
    qam: Qam,
    offsets: (i64, i64),
}

impl<'a> Chain<'a> {
    fn new(setup: &'a LinkSetup) -> Result<Self> {
        Ok(Self {
            setup,
            synth: Synthesizer::new(setup.config.clone())?,
            qam: Qam::new(setup.modulation)?,
            offsets: stream_offsets(setup),
        })
    }

    fn n_symbols(&self) -> usize {
        (self.offsets.1 - self.offsets.0 + 1) as usize
    }

    fn zero_index(&self) -> usize {
        (-self.offsets.0) as usize
    }

    fn draw_symbols<R: Rng>(&self, rng: &mut R) -> (Vec<Vec<C64>>, Vec<Vec<usize>>) {
        let plan = self.setup.config.plan();
        let s = self.setup.rho_sym_sq.sqrt();
        let mut all = Vec::new();
        let mut idx = Vec::new();
        for _ in 0..self.n_symbols() {
            let mut a = vec![C64::new(0.0, 0.0); plan.n_grid()];
            let mut ids = Vec::with_capacity(plan.active_count());
            for k in plan.active_range() {
                let i = rng.gen_range(0..self.qam.order());
                a[k] = self.qam.point(i) * s;
                ids.push(i);
            }
            all.push(a);
            idx.push(ids);
        }
        (all, idx)
    }

    fn transmit(&self, symbols: &[C64]) -> Vec<C64> {
        self.synth.transmit(symbols, &self.setup.cfo)
    }

    /// Window of symbol 0 at user `k` for the given stream blocks.
    fn receive<R: Rng>(&self, blocks: &[Vec<C64>], h: &ChannelRealization, k: usize, noise_var: f64, rng: &mut R) -> Vec<C64> {
        let link = &self.setup.links[k];
        let w = self.setup.config.receive_window_len(h.len());
        let mut win = propagate_stream(blocks, &h.taps, link.tau, noise_var, w, rng).expect("consistent stream");
        win.swap_remove(self.zero_index())
    }

    fn bins(&self, window: &[C64], k: usize) -> Vec<C64> {
        let plan = self.setup.config.plan();
        dft_bins(window, plan.n_grid(), self.setup.eta, plan.subband_range(k))
    }
}

struct PowerSample {
    d: Vec<f64>,
    ici: Vec<f64>,
    isi: Vec<f64>,
    noise: Vec<f64>,
    total: Vec<f64>,
}

fn power_trial(chain: &Chain, root_seed: u64, trial: u64) -> PowerSample {
    let setup = chain.setup;
    let plan = setup.config.plan();
    let mut rng = trial_rng(root_seed, trial);
    let channels: Vec<ChannelRealization> = setup.links.iter().map(|l| draw_channel(&l.tap_powers, &mut rng)).collect();
    let (symbols, _) = chain.draw_symbols(&mut rng);
    let z0 = chain.zero_index();
    let l3 = setup.config.l3();
    let zero_block = vec![C64::new(0.0, 0.0); l3];
    let tx: Vec<Vec<C64>> = symbols.iter().map(|a| chain.transmit(a)).collect();
    let only_zero: Vec<Vec<C64>> =
        (0..tx.len()).map(|e| if e == z0 { tx[e].clone() } else { zero_block.clone() }).collect();
    let without_zero: Vec<Vec<C64>> =
        (0..tx.len()).map(|e| if e == z0 { zero_block.clone() } else { tx[e].clone() }).collect();

    let a = plan.active_count();
    let mut out = PowerSample { d: vec![0.0; a], ici: vec![0.0; a], isi: vec![0.0; a], noise: vec![0.0; a], total: vec![0.0; a] };
    for (k, h) in channels.iter().enumerate() {
        let range = plan.subband_range(k);
        let sym0 = chain.bins(&chain.receive(&only_zero, h, k, 0.0, &mut rng), k);
        let isi = chain.bins(&chain.receive(&without_zero, h, k, 0.0, &mut rng), k);
        let full = chain.bins(&chain.receive(&tx, h, k, setup.noise_var, &mut rng), k);
        for (j, n) in range.clone().enumerate() {
            let single = symbols[z0].iter().enumerate().map(|(t, &v)| if t == n { v } else { C64::new(0.0, 0.0) }).collect::<Vec<_>>();
            let mut blocks = vec![zero_block.clone(); tx.len()];
            blocks[z0] = chain.transmit(&single);
            let win = chain.receive(&blocks, h, k, 0.0, &mut rng);
            let desired = dft_bins(&win, plan.n_grid(), setup.eta, [n])[0];
            let i = n - plan.first_active();
            out.d[i] = desired.norm_sqr();
            out.ici[i] = (sym0[j] - desired).norm_sqr();
            out.isi[i] = isi[j].norm_sqr();
            out.noise[i] = (full[j] - sym0[j] - isi[j]).norm_sqr();
            out.total[i] = full[j].norm_sqr();
        }
    }
    out
}

fn estimate(samples: &[&[f64]], len: usize) -> Estimate {
    let n = samples.len() as f64;
    let mut mean = vec![0.0; len];
    for s in samples {
        mean.iter_mut().zip(s.iter()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; len];
    for s in samples {
        var.iter_mut().zip(s.iter()).zip(&mean).for_each(|((acc, v), m)| *acc += (v - m).powi(2));
    }
    let se = var.iter().map(|v| (v / (n - 1.0).max(1.0) / n).sqrt()).collect();
    Estimate { mean, se }
}

/// Empirical per-carrier desired/ICI/ISI/noise powers over `n_trials`.
pub fn run_power_trials(setup: &LinkSetup, n_trials: usize, root_seed: u64) -> Result<TrialReport> {
    if n_trials < 2 {
        return invalid("at least two trials are needed for standard errors");
    }
    let chain = Chain::new(setup)?;
    let samples: Vec<PowerSample> =
        (0..n_trials as u64).into_par_iter().map(|t| power_trial(&chain, root_seed, t)).collect();
    let a = setup.config.plan().active_count();
    let pick = |f: fn(&PowerSample) -> &[f64]| estimate(&samples.iter().map(f).collect::<Vec<_>>(), a);
    let p_d = pick(|s| &s.d);
    let p_ici = pick(|s| &s.ici);
    let p_isi = pick(|s| &s.isi);
    let noise = pick(|s| &s.noise);
    let total = pick(|s| &s.total);
    let sinr = (0..a).map(|i| p_d.mean[i] / (p_ici.mean[i] + p_isi.mean[i] + noise.mean[i])).collect();
    Ok(TrialReport {
        trials: n_trials,
        root_seed,
        carriers: setup.config.plan().active_range().collect(),
        p_d,
        p_ici,
        p_isi,
        noise,
        total,
        sinr,
    })
}

/// Largest `|analytic − MC|/SE` over carriers for each component
/// (desired, ICI, ISI).
pub fn agreement_z(analytic: &PowerBreakdown, mc: &TrialReport) -> [f64; 3] {
    // Differences at roundoff level of the desired power count as agreement;
    // interference-free links otherwise divide noise by noise.
    let z = |a: &[f64], e: &Estimate| {
        a.iter()
            .zip(&e.mean)
            .zip(&e.se)
            .zip(&analytic.p_d)
            .map(|(((a, m), se), pd)| {
                let d = (a - m).abs();
                if d <= 1e-12 * pd.abs().max(a.abs()) {
                    0.0
                } else if *se > 0.0 {
                    d / se
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    };
    [z(&analytic.p_d, &mc.p_d), z(&analytic.p_ici, &mc.p_ici), z(&analytic.p_isi, &mc.p_isi)]
}

/// How the one-tap equalizer is designed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BerMode {
    /// Link without CFO/TO and with a guard covering the channel; the
    /// equalizer uses the ideal coupling, which is exact there.
    IdealModel,
    /// Impaired link, equalizer built from the ideal coupling and thermal
    /// noise only.
    Naive,
    /// Impaired link, equalizer built from the realized coupling
    /// `β(n,n,0)` and the analytic ICI + ISI + noise power.
    InterferenceAware,
}

impl BerMode {
    pub fn label(self) -> &'static str {
        match self {
            BerMode::IdealModel => "ideal-model",
            BerMode::Naive => "naive",
            BerMode::InterferenceAware => "interference-aware",
        }
    }
}

/// Stopping rule for BER runs: trials run in fixed batches until either
/// `target_errors` bit errors or `max_trials` trials are reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BerLimits {
    pub max_trials: usize,
    pub target_errors: u64,
    pub batch: usize,
}

impl Default for BerLimits {
    fn default() -> Self {
        Self { max_trials: 20_000, target_errors: 10_000, batch: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub mode: String,
    pub ber: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub trials: usize,
    /// True when the trial cap stopped the run before the error target.
    pub capped: bool,
}

/// Equalizer ingredients that do not change between trials.
struct BerPlan {
    mode: BerMode,
    engine: Option<CouplingEngine>,
    /// `P_ICI + P_ISI` per grid carrier (analytic, ensemble).
    interference: Vec<f64>,
    filter_resp: Vec<C64>,
    rho: Vec<f64>,
}

impl BerPlan {
    fn new(setup: &LinkSetup, mode: BerMode) -> Result<Self> {
        let plan = setup.config.plan();
        let n = plan.n_grid();
        let mut filter_resp = vec![C64::new(0.0, 0.0); n];
        let mut rho = vec![1.0; n];
        for (m, f) in setup.config.filters().iter().enumerate() {
            let resp = f.freq_response(n);
            for k in plan.subband_range(m) {
                filter_resp[k] = resp[k];
                rho[k] = f.rho();
            }
        }
        let mut interference = vec![0.0; n];
        let engine = if mode == BerMode::InterferenceAware {
            let engine = setup.engine()?;
            let bd = engine.power_breakdown(&setup.config, &setup.links, setup.rho_sym_sq, 0.0, setup.eta)?;
            for (i, &k) in bd.carriers.iter().enumerate() {
                interference[k] = bd.interference(i);
            }
            Some(engine)
        } else {
            None
        };
        Ok(Self { mode, engine, interference, filter_resp, rho })
    }
}

fn ber_trial(chain: &Chain, plan: &BerPlan, noise_var: f64, root_seed: u64, trial: u64) -> (u64, u64) {
    let setup = chain.setup;
    let grid = setup.config.plan();
    let n = grid.n_grid();
    let mut rng = trial_rng(root_seed, trial);
    let channels: Vec<ChannelRealization> = setup.links.iter().map(|l| draw_channel(&l.tap_powers, &mut rng)).collect();
    let (symbols, indices) = chain.draw_symbols(&mut rng);
    let tx: Vec<Vec<C64>> = symbols.iter().map(|a| chain.transmit(a)).collect();
    let mut z = vec![C64::new(0.0, 0.0); n];
    let mut coupling = vec![C64::new(0.0, 0.0); n];
    let mut sigma = vec![0.0; n];
    for (k, h) in channels.iter().enumerate() {
        let win = chain.receive(&tx, h, k, noise_var, &mut rng);
        let w_len = setup.config.receive_window_len(h.len()) as f64;
        let thermal = w_len / (n << setup.eta) as f64 * noise_var;
        let bins = chain.bins(&win, k);
        for (j, t) in grid.subband_range(k).enumerate() {
            z[t] = bins[j];
            coupling[t] = match (&plan.engine, plan.mode) {
                (Some(engine), BerMode::InterferenceAware) => engine
                    .beta(&setup.config, t, t, 0, &h.taps, setup.links[k].tau, setup.eta)
                    .expect("active carrier"),
                _ => ideal_coupling(h.freq_response(t, n), plan.filter_resp[t], plan.rho[t], setup.eta),
            };
            sigma[t] = thermal + plan.interference[t];
        }
    }
    let bits_per = chain.qam.bits_per_symbol() as u64;
    let taps = match build_equalizer(&coupling, &sigma, setup.rho_sym_sq, setup.equalizer, grid) {
        Ok(t) => t,
        // A zero coupling can only come from a null channel draw; every
        // symbol then counts as lost.
        Err(_) => return (grid.active_count() as u64 * bits_per / 2, grid.active_count() as u64 * bits_per),
    };
    let det = detect(&z, &taps, grid, &chain.qam, setup.rho_sym_sq);
    let sent = &indices[chain.zero_index()];
    let errors: u64 = det.indices.iter().zip(sent).map(|(a, b)| (a ^ b).count_ones() as u64).sum();
    (errors, grid.active_count() as u64 * bits_per)
}

/// BER of symbol 0 on all active carriers at each SNR (`ρ²_sym/σ²`, dB).
pub fn run_ber_trials(setup: &LinkSetup, snr_grid_db: &[f64], mode: BerMode, limits: BerLimits, root_seed: u64) -> Result<Vec<BerPoint>> {
    if limits.batch == 0 || limits.max_trials == 0 {
        return invalid("BER limits must allow at least one trial");
    }
    let link = if mode == BerMode::IdealModel { setup.idealized()? } else { setup.clone() };
    let chain = Chain::new(&link)?;
    let plan = BerPlan::new(&link, mode)?;
    let mut out = Vec::new();
    for &snr_db in snr_grid_db {
        let noise_var = link.rho_sym_sq / 10f64.powf(snr_db / 10.0);
        let (mut errors, mut bits, mut trials) = (0u64, 0u64, 0usize);
        while trials < limits.max_trials && errors < limits.target_errors {
            let batch = limits.batch.min(limits.max_trials - trials);
            let results: Vec<(u64, u64)> = (trials as u64..(trials + batch) as u64)
                .into_par_iter()
                .map(|t| ber_trial(&chain, &plan, noise_var, root_seed, t))
                .collect();
            for (e, b) in results {
                errors += e;
                bits += b;
            }
            trials += batch;
        }
        out.push(BerPoint {
            snr_db,
            mode: mode.label().to_string(),
            ber: errors as f64 / bits as f64,
            bit_errors: errors,
            bits,
            trials,
            capped: errors < limits.target_errors,
        });
    }
    Ok(out)
}

/// Noise-free equalizer output MSE per active carrier for ZF and MMSE,
/// averaged over trials (used to check MMSE optimality).
pub fn equalizer_mse(setup: &LinkSetup, n_trials: usize, root_seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let chain = Chain::new(setup)?;
    let grid = setup.config.plan();
    let n = grid.n_grid();
    let plan = BerPlan::new(setup, BerMode::Naive)?;
    let mut zf = vec![0.0; grid.active_count()];
    let mut mmse = vec![0.0; grid.active_count()];
    for trial in 0..n_trials as u64 {
        let mut rng = trial_rng(root_seed, trial);
        let channels: Vec<ChannelRealization> = setup.links.iter().map(|l| draw_channel(&l.tap_powers, &mut rng)).collect();
        let (symbols, _) = chain.draw_symbols(&mut rng);
        let tx: Vec<Vec<C64>> = symbols.iter().map(|a| chain.transmit(a)).collect();
        for (k, h) in channels.iter().enumerate() {
            let win = chain.receive(&tx, h, k, setup.noise_var, &mut rng);
            let w_len = setup.config.receive_window_len(h.len()) as f64;
            let sigma = w_len / (n << setup.eta) as f64 * setup.noise_var;
            let bins = chain.bins(&win, k);
            for (j, t) in grid.subband_range(k).enumerate() {
                let z = bins[j];
                let b = ideal_coupling(h.freq_response(t, n), plan.filter_resp[t], plan.rho[t], setup.eta);
                let a = symbols[chain.zero_index()][t];
                let i = t - grid.first_active();
                for (kind, acc) in [(EqualizerKind::Zf, &mut zf), (EqualizerKind::Mmse, &mut mmse)] {
                    let w = b.conj() / (b.norm_sqr() + kind.nu() * sigma / setup.rho_sym_sq);
                    acc[i] += (w * z - a).norm_sqr() / n_trials as f64;
                }
            }
        }
    }
    Ok((zf, mmse))
}

/// Additive white noise helper for tests of the receive path.
pub fn noise_vector<R: Rng>(len: usize, var: f64, rng: &mut R) -> Vec<C64> {
    (0..len).map(|_| complex_gaussian(rng, var)).collect()
}

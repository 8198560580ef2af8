//! Integer grid searches for the capacity-maximizing filter length and
//! guard length.
//!
//! The objective is the analytic capacity `(N/L3)·Σ log2(1 + SINR)`.
//! Candidates are evaluated in parallel and reduced in candidate order,
//! preferring at equal capacity the smaller total filter length and then
//! the smaller total `|L_ZP|`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{CouplingEngine, SourceKernel};
use crate::error::{invalid, Error, Result};
use crate::scenario::LinkSetup;
use crate::waveform::{design_chebyshev_filter, FrameConfig, SubbandFilter};

/// Relative capacity difference below which two candidates tie.
const TIE_TOL: f64 = 1e-12;

/// Largest exhaustive per-subband search: `M <= 3` and `L̄_OH <= 64`.
pub const EXHAUSTIVE_MAX_SUBBANDS: usize = 3;
pub const EXHAUSTIVE_MAX_BUDGET: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    FixedFilter,
    FixedZp,
    Joint,
    Budget,
    PerSubbandBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Exhaustive,
    CoordinateDescent,
}

/// One evaluated point. Common-length problems use single-element vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub filter_lengths: Vec<usize>,
    pub zp_lengths: Vec<i64>,
    pub capacity: f64,
}

impl Sample {
    fn overhead_key(&self) -> (usize, u64) {
        (self.filter_lengths.iter().sum(), self.zp_lengths.iter().map(|z| z.unsigned_abs()).sum())
    }

    /// True when `self` should replace `best`.
    fn beats(&self, best: &Sample) -> bool {
        let scale = best.capacity.abs().max(1.0);
        if self.capacity > best.capacity + TIE_TOL * scale {
            true
        } else if self.capacity < best.capacity - TIE_TOL * scale {
            false
        } else {
            self.overhead_key() < best.overhead_key()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub kind: ProblemKind,
    pub best: Sample,
    /// Every evaluated point in evaluation order.
    pub samples: Vec<Sample>,
    /// Set when coordinate descent was cross-checked against the
    /// exhaustive search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_exhaustive: Option<bool>,
}

fn pick_best(samples: &[Sample]) -> Result<Sample> {
    let mut iter = samples.iter();
    let mut best = iter.next().ok_or_else(|| Error::InvalidArgument("empty search range".into()))?.clone();
    for s in iter {
        if s.beats(&best) {
            best = s.clone();
        }
    }
    Ok(best)
}

/// Capacity evaluator with source kernels cached per (subband, filter
/// length); the kernels do not depend on the guard.
pub struct Evaluator {
    setup: LinkSetup,
    cache: Mutex<HashMap<(usize, usize), (SubbandFilter, Arc<SourceKernel>)>>,
}

impl Evaluator {
    pub fn new(setup: &LinkSetup) -> Result<Self> {
        if setup.attenuation_db.len() != setup.config.plan().num_subbands() {
            return invalid("one attenuation per subband required");
        }
        Ok(Self { setup: setup.clone(), cache: Mutex::new(HashMap::new()) })
    }

    pub fn setup(&self) -> &LinkSetup {
        &self.setup
    }

    pub fn num_subbands(&self) -> usize {
        self.setup.config.plan().num_subbands()
    }

    fn kernel(&self, m: usize, len: usize) -> Result<(SubbandFilter, Arc<SourceKernel>)> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&(m, len)) {
            return Ok(hit.clone());
        }
        let plan = self.setup.config.plan();
        let filter = design_chebyshev_filter(len, self.setup.attenuation_db[m], plan, m)?;
        let kernel = Arc::new(SourceKernel::new(plan, &filter, self.setup.cfo[m]));
        let entry = (filter, kernel);
        self.cache.lock().expect("cache lock").insert((m, len), entry.clone());
        Ok(entry)
    }

    /// Frame with the given per-subband filter lengths and guards. A single
    /// guard value gives a common guard.
    pub fn frame(&self, filter_lengths: &[usize], zp_lengths: &[i64]) -> Result<(FrameConfig, CouplingEngine)> {
        let m = self.num_subbands();
        if filter_lengths.len() != m {
            return invalid(format!("{} filter lengths for {m} subbands", filter_lengths.len()));
        }
        let plan = self.setup.config.plan();
        let (filters, kernels): (Vec<_>, Vec<_>) =
            filter_lengths.iter().enumerate().map(|(i, &l)| self.kernel(i, l)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let config = match zp_lengths {
            [z] => FrameConfig::new(plan.clone(), filters, *z)?,
            z if z.len() == m => FrameConfig::per_subband(plan.clone(), filters, z.to_vec())?,
            z => return invalid(format!("{} guard lengths for {m} subbands", z.len())),
        };
        Ok((config, CouplingEngine::from_kernels(plan, kernels)?))
    }

    pub fn capacity(&self, filter_lengths: &[usize], zp_lengths: &[i64]) -> Result<f64> {
        let (config, engine) = self.frame(filter_lengths, zp_lengths)?;
        let link = self.setup.with_config(config);
        let bd = engine.power_breakdown(&link.config, &link.links, link.rho_sym_sq, link.noise_var, link.eta)?;
        Ok(bd.capacity())
    }

    fn common(&self, l_f: usize, l_zp: i64) -> Result<Sample> {
        let lf = vec![l_f; self.num_subbands()];
        Ok(Sample { capacity: self.capacity(&lf, &[l_zp])?, filter_lengths: vec![l_f], zp_lengths: vec![l_zp] })
    }

    fn split(&self, filter_lengths: Vec<usize>, budget: i64) -> Result<Sample> {
        let zp: Vec<i64> = filter_lengths.iter().map(|&l| budget - l as i64).collect();
        Ok(Sample { capacity: self.capacity(&filter_lengths, &zp)?, filter_lengths, zp_lengths: zp })
    }

    /// Builds the kernels for these lengths up front, one subband/length
    /// pair per task, so candidate evaluation never races to fill the cache.
    fn warm(&self, lengths: &[usize]) -> Result<()> {
        let pairs: Vec<(usize, usize)> =
            (0..self.num_subbands()).flat_map(|m| lengths.iter().map(move |&l| (m, l))).collect();
        pairs.par_iter().try_for_each(|&(m, l)| self.kernel(m, l).map(|_| ()))
    }
}

fn check_filter_range(lengths: &[usize], min_filter: usize) -> Result<()> {
    if lengths.is_empty() {
        return invalid("empty filter-length range");
    }
    if let Some(l) = lengths.iter().find(|&&l| l < min_filter) {
        return invalid(format!("filter length {l} below the minimum {min_filter}"));
    }
    Ok(())
}

fn check_zp_range(lengths: &[i64], min_zp: i64) -> Result<()> {
    if lengths.is_empty() {
        return invalid("empty guard-length range");
    }
    if let Some(z) = lengths.iter().find(|&&z| z < min_zp) {
        return invalid(format!("guard length {z} below the minimum {min_zp}"));
    }
    Ok(())
}

fn finish(kind: ProblemKind, samples: Vec<Sample>) -> Result<OptimizationResult> {
    Ok(OptimizationResult { kind, best: pick_best(&samples)?, samples, matches_exhaustive: None })
}

/// Best guard for a fixed common filter length.
pub fn optimize_zp(eval: &Evaluator, filter_length: usize, zp_lengths: &[i64], min_zp: i64) -> Result<OptimizationResult> {
    check_zp_range(zp_lengths, min_zp)?;
    eval.warm(&[filter_length])?;
    let samples = zp_lengths.par_iter().map(|&z| eval.common(filter_length, z)).collect::<Result<Vec<_>>>()?;
    finish(ProblemKind::FixedFilter, samples)
}

/// Best common filter length for a fixed guard.
pub fn optimize_filter(eval: &Evaluator, zp_length: i64, filter_lengths: &[usize], min_filter: usize) -> Result<OptimizationResult> {
    check_filter_range(filter_lengths, min_filter)?;
    eval.warm(filter_lengths)?;
    let samples = filter_lengths.par_iter().map(|&l| eval.common(l, zp_length)).collect::<Result<Vec<_>>>()?;
    finish(ProblemKind::FixedZp, samples)
}

/// Full grid over common filter length and guard.
pub fn optimize_joint(
    eval: &Evaluator,
    filter_lengths: &[usize],
    zp_lengths: &[i64],
    min_filter: usize,
    min_zp: i64,
) -> Result<OptimizationResult> {
    check_filter_range(filter_lengths, min_filter)?;
    check_zp_range(zp_lengths, min_zp)?;
    eval.warm(filter_lengths)?;
    let grid: Vec<(usize, i64)> = filter_lengths.iter().flat_map(|&l| zp_lengths.iter().map(move |&z| (l, z))).collect();
    let samples = grid.par_iter().map(|&(l, z)| eval.common(l, z)).collect::<Result<Vec<_>>>()?;
    finish(ProblemKind::Joint, samples)
}

/// Filter lengths allowed by an overhead budget: `L_F >= L̄_F`,
/// `L_ZP = L̄_OH − L_F >= L̄_ZP` and any tail cut within the filter ramp.
pub fn budget_filter_lengths(budget: usize, min_filter: usize, min_zp: i64, stride: usize) -> Vec<usize> {
    let b = budget as i64;
    let upper = (b - min_zp).min(b + 1);
    (min_filter as i64..=upper)
        .step_by(stride.max(1))
        .filter(|&l| l >= 1 && b - l >= -(l - 1))
        .map(|l| l as usize)
        .collect()
}

/// Best split of `L̄_OH = L_F + L_ZP` with a common filter length.
pub fn optimize_budget(eval: &Evaluator, budget: usize, min_filter: usize, min_zp: i64, stride: usize) -> Result<OptimizationResult> {
    let lengths = budget_filter_lengths(budget, min_filter, min_zp, stride);
    if lengths.is_empty() {
        return invalid(format!("budget {budget} leaves no feasible split with L_F >= {min_filter} and L_ZP >= {min_zp}"));
    }
    eval.warm(&lengths)?;
    let samples = lengths.par_iter().map(|&l| eval.common(l, budget as i64 - l as i64)).collect::<Result<Vec<_>>>()?;
    finish(ProblemKind::Budget, samples)
}

/// Best per-subband split of a common overhead budget.
pub fn optimize_per_subband(
    eval: &Evaluator,
    budget: usize,
    min_filter: usize,
    min_zp: i64,
    strategy: Strategy,
) -> Result<OptimizationResult> {
    let lengths = budget_filter_lengths(budget, min_filter, min_zp, 1);
    if lengths.is_empty() {
        return invalid(format!("budget {budget} leaves no feasible split with L_F >= {min_filter} and L_ZP >= {min_zp}"));
    }
    let m = eval.num_subbands();
    eval.warm(&lengths)?;
    match strategy {
        Strategy::Exhaustive => {
            if m > EXHAUSTIVE_MAX_SUBBANDS || budget > EXHAUSTIVE_MAX_BUDGET {
                return Err(Error::Refused(format!(
                    "exhaustive per-subband search limited to M <= {EXHAUSTIVE_MAX_SUBBANDS} and budget <= {EXHAUSTIVE_MAX_BUDGET} (got M = {m}, budget {budget})"
                )));
            }
            let mut grid: Vec<Vec<usize>> = vec![Vec::new()];
            for _ in 0..m {
                grid = grid.into_iter().flat_map(|p| lengths.iter().map(move |&l| [p.clone(), vec![l]].concat())).collect();
            }
            let samples = grid.into_par_iter().map(|lf| eval.split(lf, budget as i64)).collect::<Result<Vec<_>>>()?;
            finish(ProblemKind::PerSubbandBudget, samples)
        }
        Strategy::CoordinateDescent => {
            let start = optimize_budget(eval, budget, min_filter, min_zp, 1)?;
            let mut samples = Vec::new();
            let mut best = eval.split(vec![start.best.filter_lengths[0]; m], budget as i64)?;
            samples.push(best.clone());
            for _sweep in 0..64 {
                let mut moved = false;
                for sub in 0..m {
                    let cands: Vec<Sample> = lengths
                        .par_iter()
                        .map(|&l| {
                            let mut lf = best.filter_lengths.clone();
                            lf[sub] = l;
                            eval.split(lf, budget as i64)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let winner = pick_best(&cands)?;
                    samples.extend(cands);
                    if winner.beats(&best) {
                        best = winner;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            let matches_exhaustive = if m <= EXHAUSTIVE_MAX_SUBBANDS && budget <= EXHAUSTIVE_MAX_BUDGET {
                let full = optimize_per_subband(eval, budget, min_filter, min_zp, Strategy::Exhaustive)?;
                Some(full.best.filter_lengths == best.filter_lengths)
            } else {
                None
            };
            Ok(OptimizationResult { kind: ProblemKind::PerSubbandBudget, best, samples, matches_exhaustive })
        }
    }
}

//! Transmit chain: subband plan, filters, QAM, UFMC synthesis and
//! zero padding / tail cutting.

mod filter;
mod qam;

use std::ops::Range;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use filter::{
    chebyshev_window, design_chebyshev_filter, filter_freq_response, freq_response_at, power_normalization_factor,
    SubbandFilter,
};
pub use qam::{qam_demap, qam_map, Qam};

use crate::error::{invalid, Result};
use crate::sigcore::{cis, UnitaryDft};

/// Consecutive subbands placed on an `n_grid`-point DFT grid. Carriers
/// outside the subbands are inactive and carry zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubbandPlan {
    n_grid: usize,
    sizes: Vec<usize>,
    first: usize,
}

impl SubbandPlan {
    pub fn new(n_grid: usize, sizes: &[usize], first_active: usize) -> Result<Self> {
        if n_grid == 0 {
            return invalid("grid size must be >= 1");
        }
        if sizes.is_empty() || sizes.contains(&0) {
            return invalid("subband sizes must be non-empty and positive");
        }
        let total: usize = sizes.iter().sum();
        if total + first_active > n_grid {
            return invalid(format!(
                "subbands span {first_active}..{} beyond a {n_grid}-point grid",
                first_active + total
            ));
        }
        Ok(Self { n_grid, sizes: sizes.to_vec(), first: first_active })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn num_subbands(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn first_active(&self) -> usize {
        self.first
    }

    /// Index set `U_m`.
    pub fn subband_range(&self, m: usize) -> Range<usize> {
        let start = self.first + self.sizes[..m].iter().sum::<usize>();
        start..start + self.sizes[m]
    }

    pub fn active_range(&self) -> Range<usize> {
        self.first..self.first + self.sizes.iter().sum::<usize>()
    }

    pub fn active_count(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.active_range().contains(&n)
    }

    pub fn active_mask(&self) -> Vec<bool> {
        (0..self.n_grid).map(|n| self.is_active(n)).collect()
    }

    pub fn subband_of(&self, n: usize) -> Option<usize> {
        (0..self.num_subbands()).find(|&m| self.subband_range(m).contains(&n))
    }
}

/// One symbol's worth of subcarrier values, zero on inactive carriers.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    symbols: Vec<C64>,
    rho_sym_sq: f64,
}

impl SymbolBlock {
    pub fn new(symbols: Vec<C64>, plan: &SubbandPlan, rho_sym_sq: f64) -> Result<Self> {
        if symbols.len() != plan.n_grid() {
            return invalid(format!("{} symbols for a {}-point grid", symbols.len(), plan.n_grid()));
        }
        if symbols.iter().enumerate().any(|(n, s)| !plan.is_active(n) && *s != C64::new(0.0, 0.0)) {
            return invalid("nonzero symbol on an inactive subcarrier");
        }
        Ok(Self { symbols, rho_sym_sq })
    }

    /// Places unit-power `values` on the active carriers, scaled to
    /// `rho_sym_sq`.
    pub fn from_active(values: &[C64], plan: &SubbandPlan, rho_sym_sq: f64) -> Result<Self> {
        if values.len() != plan.active_count() {
            return invalid(format!("{} values for {} active carriers", values.len(), plan.active_count()));
        }
        let mut symbols = vec![C64::new(0.0, 0.0); plan.n_grid()];
        let s = rho_sym_sq.sqrt();
        for (slot, v) in symbols[plan.active_range()].iter_mut().zip(values) {
            *slot = v * s;
        }
        Ok(Self { symbols, rho_sym_sq })
    }

    pub fn zeros(plan: &SubbandPlan, rho_sym_sq: f64) -> Self {
        Self { symbols: vec![C64::new(0.0, 0.0); plan.n_grid()], rho_sym_sq }
    }

    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn rho_sym_sq(&self) -> f64 {
        self.rho_sym_sq
    }

    /// Copy keeping only the carriers selected by `keep`.
    pub fn masked(&self, keep: impl Fn(usize) -> bool) -> Self {
        let symbols = self
            .symbols
            .iter()
            .enumerate()
            .map(|(n, &s)| if keep(n) { s } else { C64::new(0.0, 0.0) })
            .collect();
        Self { symbols, rho_sym_sq: self.rho_sym_sq }
    }
}

/// Guard handling after filtering: zero padding (`>= 0`) or tail cutting
/// (`< 0`) in samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overhead {
    /// One `L_ZP` applied to the summed filtered symbol.
    Common(i64),
    /// Per-subband `L_ZP,m`; all subbands must share one symbol length.
    PerSubband(Vec<i64>),
}

/// Front/back tail-cut split: `(⌊|L|/2⌋, |L| − ⌊|L|/2⌋)` for `L < 0`.
pub fn tail_cut_split(l_zp: i64) -> (usize, usize) {
    if l_zp >= 0 {
        (0, 0)
    } else {
        let cut = l_zp.unsigned_abs() as usize;
        (cut / 2, cut - cut / 2)
    }
}

/// Frame geometry: plan, subband filters and the guard policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    plan: SubbandPlan,
    filters: Vec<SubbandFilter>,
    overhead: Overhead,
    l3: usize,
}

impl FrameConfig {
    pub fn new(plan: SubbandPlan, filters: Vec<SubbandFilter>, l_zp: i64) -> Result<Self> {
        Self::check_filters(&plan, &filters)?;
        let l_f_max = filters.iter().map(SubbandFilter::len).max().unwrap_or(1);
        let l1 = (plan.n_grid() + l_f_max - 1) as i64;
        if l_zp < 0 && l_zp.unsigned_abs() as usize > l_f_max - 1 {
            return invalid(format!(
                "tail cut of {} samples exceeds the filter ramp of {} samples",
                l_zp.unsigned_abs(),
                l_f_max - 1
            ));
        }
        let l3 = (l1 + l_zp) as usize;
        Ok(Self { plan, filters, overhead: Overhead::Common(l_zp), l3 })
    }

    /// Per-subband split of a common overhead: `L_F,m + L_ZP,m` must be
    /// the same for every subband so all symbols share one length.
    pub fn per_subband(plan: SubbandPlan, filters: Vec<SubbandFilter>, l_zp: Vec<i64>) -> Result<Self> {
        Self::check_filters(&plan, &filters)?;
        if l_zp.len() != plan.num_subbands() {
            return invalid(format!("{} guard lengths for {} subbands", l_zp.len(), plan.num_subbands()));
        }
        let budget = filters[0].len() as i64 + l_zp[0];
        for (m, (f, &z)) in filters.iter().zip(&l_zp).enumerate() {
            if f.len() as i64 + z != budget {
                return invalid(format!("subband {m}: L_F + L_ZP = {} differs from {budget}", f.len() as i64 + z));
            }
            if z < 0 && z.unsigned_abs() as usize > f.len() - 1 {
                return invalid(format!("subband {m}: tail cut exceeds the filter ramp"));
            }
        }
        let l3 = (plan.n_grid() as i64 + budget - 1) as usize;
        Ok(Self { plan, filters, overhead: Overhead::PerSubband(l_zp), l3 })
    }

    fn check_filters(plan: &SubbandPlan, filters: &[SubbandFilter]) -> Result<()> {
        if filters.len() != plan.num_subbands() {
            return invalid(format!("{} filters for {} subbands", filters.len(), plan.num_subbands()));
        }
        if let Some(m) = filters.iter().enumerate().position(|(m, f)| f.subband() != m) {
            return invalid(format!("filter {m} designed for subband {}", filters[m].subband()));
        }
        Ok(())
    }

    pub fn plan(&self) -> &SubbandPlan {
        &self.plan
    }

    pub fn filters(&self) -> &[SubbandFilter] {
        &self.filters
    }

    pub fn overhead(&self) -> &Overhead {
        &self.overhead
    }

    /// Common `L_ZP`, if the frame uses one.
    pub fn l_zp(&self) -> Option<i64> {
        match self.overhead {
            Overhead::Common(z) => Some(z),
            Overhead::PerSubband(_) => None,
        }
    }

    pub fn subband_l_zp(&self, m: usize) -> i64 {
        match &self.overhead {
            Overhead::Common(z) => *z,
            Overhead::PerSubband(z) => z[m],
        }
    }

    pub fn n(&self) -> usize {
        self.plan.n_grid()
    }

    pub fn l_f_max(&self) -> usize {
        self.filters.iter().map(SubbandFilter::len).max().unwrap_or(1)
    }

    /// Filtered symbol length `N + L_F,max − 1`.
    pub fn l1(&self) -> usize {
        self.n() + self.l_f_max() - 1
    }

    /// Received window length `L1 + L_CH − 1` for a channel of `l_ch` taps.
    pub fn l2(&self, l_ch: usize) -> usize {
        self.l1() + l_ch.max(1) - 1
    }

    /// Transmitted symbol length including the guard.
    pub fn l3(&self) -> usize {
        self.l3
    }

    /// Samples of the receive window that enter the DFT: `min(L2, L3)`.
    /// With a sufficient guard this is the whole `L2` response; otherwise
    /// the window stops at the next symbol boundary.
    pub fn receive_window_len(&self, l_ch: usize) -> usize {
        self.l2(l_ch).min(self.l3)
    }

    /// Samples of the subband-`m` filtered signal that are transmitted,
    /// in filtered-signal coordinates. Sample `l` of the range goes out at
    /// offset `l − range.start` of the symbol.
    pub fn kept_range(&self, m: usize) -> Range<usize> {
        match &self.overhead {
            Overhead::Common(z) => {
                let (u, d) = tail_cut_split(*z);
                u..self.l1() - d
            }
            Overhead::PerSubband(z) => {
                let (u, d) = tail_cut_split(z[m]);
                u..self.n() + self.filters[m].len() - 1 - d
            }
        }
    }

    /// Smallest oversampling exponent with `2^η·N >= L2`.
    pub fn min_eta(&self, l_ch: usize) -> u32 {
        let mut eta = 0;
        while (self.n() << eta) < self.l2(l_ch) {
            eta += 1;
        }
        eta
    }
}

/// Reusable synthesis state (FFT plan) for one frame configuration.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    config: FrameConfig,
    dft: UnitaryDft,
}

impl Synthesizer {
    pub fn new(config: FrameConfig) -> Result<Self> {
        let dft = UnitaryDft::new(config.n())?;
        Ok(Self { config, dft })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    /// Filtered subband-`m` signal `(1/ρ_m)·f_m * (D_m^ε a_m)`, length L1.
    /// Returns `None` when the subband carries only zeros.
    pub fn subband_signal(&self, symbols: &[C64], m: usize, eps: f64) -> Option<Vec<C64>> {
        let plan = self.config.plan();
        let range = plan.subband_range(m);
        if symbols[range.clone()].iter().all(|s| *s == C64::new(0.0, 0.0)) {
            return None;
        }
        let n = plan.n_grid();
        let mut x = vec![C64::new(0.0, 0.0); n];
        x[range.clone()].copy_from_slice(&symbols[range]);
        self.dft.inverse(&mut x);
        if eps != 0.0 {
            for (i, v) in x.iter_mut().enumerate() {
                *v *= cis(i as f64 * eps / n as f64);
            }
        }
        let filter = &self.config.filters()[m];
        let scale = 1.0 / filter.rho();
        let mut q = vec![C64::new(0.0, 0.0); self.config.l1()];
        for (i, &xi) in x.iter().enumerate() {
            let xs = xi * scale;
            for (o, &f) in q[i..].iter_mut().zip(filter.taps()) {
                *o += xs * f;
            }
        }
        Some(q)
    }

    /// Filtered symbol `q` of length L1 (before guard handling).
    pub fn filtered(&self, symbols: &[C64], cfo: &[f64]) -> Vec<C64> {
        let mut q = vec![C64::new(0.0, 0.0); self.config.l1()];
        for m in 0..self.config.plan().num_subbands() {
            if let Some(part) = self.subband_signal(symbols, m, cfo[m]) {
                q.iter_mut().zip(part).for_each(|(a, b)| *a += b);
            }
        }
        q
    }

    /// Transmitted symbol of length L3 with zero padding or tail cutting
    /// applied per subband.
    pub fn transmit(&self, symbols: &[C64], cfo: &[f64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.config.l3()];
        for m in 0..self.config.plan().num_subbands() {
            if let Some(part) = self.subband_signal(symbols, m, cfo[m]) {
                let kept = self.config.kept_range(m);
                out.iter_mut().zip(&part[kept]).for_each(|(a, b)| *a += b);
            }
        }
        out
    }

    fn check(&self, symbols: &SymbolBlock, cfo: &[f64]) -> Result<()> {
        if symbols.symbols().len() != self.config.n() {
            return invalid("symbol block does not match the grid");
        }
        if cfo.len() != self.config.plan().num_subbands() {
            return invalid(format!("{} CFO values for {} subbands", cfo.len(), self.config.plan().num_subbands()));
        }
        Ok(())
    }
}

/// Filtered UFMC symbol `q` (length L1) with per-subband CFO applied
/// inside the IDFT.
pub fn synthesize(symbols: &SymbolBlock, config: &FrameConfig, cfo: &[f64]) -> Result<Vec<C64>> {
    let synth = Synthesizer::new(config.clone())?;
    synth.check(symbols, cfo)?;
    Ok(synth.filtered(symbols.symbols(), cfo))
}

/// Appends `L_ZP` zeros, or cuts `⌊|L_ZP|/2⌋` samples from the front and
/// the rest from the back when `L_ZP < 0`.
pub fn apply_zp_or_tc(q: &[C64], l_zp: i64) -> Result<Vec<C64>> {
    if l_zp >= 0 {
        let mut out = q.to_vec();
        out.resize(q.len() + l_zp as usize, C64::new(0.0, 0.0));
        return Ok(out);
    }
    let (u, d) = tail_cut_split(l_zp);
    if u + d >= q.len() {
        return invalid(format!("tail cut of {} samples on a length-{} symbol", u + d, q.len()));
    }
    Ok(q[u..q.len() - d].to_vec())
}

/// Full transmit path for one symbol: synthesis plus guard handling.
pub fn transmit_symbol(symbols: &SymbolBlock, config: &FrameConfig, cfo: &[f64]) -> Result<Vec<C64>> {
    let synth = Synthesizer::new(config.clone())?;
    synth.check(symbols, cfo)?;
    Ok(synth.transmit(symbols.symbols(), cfo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcore::{dft_matrix, toeplitz_conv_matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_symbols(plan: &SubbandPlan, rng: &mut ChaCha8Rng) -> SymbolBlock {
        let qam = Qam::new(16).unwrap();
        let v: Vec<C64> = (0..plan.active_count()).map(|_| qam.point(rng.gen_range(0..16))).collect();
        SymbolBlock::from_active(&v, plan, 1.0).unwrap()
    }

    #[test]
    fn plan_examples() {
        let p = SubbandPlan::new(512, &[12, 12, 12], 238).unwrap();
        assert_eq!(p.active_range(), 238..274);
        assert_eq!(p.active_mask().iter().filter(|&&b| b).count(), 36);
        let p = SubbandPlan::new(4, &[4], 0).unwrap();
        assert_eq!(p.num_subbands(), 1);
        assert!(p.active_mask().iter().all(|&b| b));
        let p = SubbandPlan::new(8, &[2, 2], 2).unwrap();
        assert_eq!(p.subband_range(0), 2..4);
        assert_eq!(p.subband_range(1), 4..6);
        assert_eq!(p.subband_of(5), Some(1));
        assert_eq!(p.subband_of(6), None);
        assert!(SubbandPlan::new(8, &[4, 4], 1).is_err());
    }

    #[test]
    fn guard_examples() {
        let q: Vec<C64> = (0..10).map(|i| c(i as f64, 0.0)).collect();
        assert_eq!(apply_zp_or_tc(&q, 0).unwrap(), q);
        let z = apply_zp_or_tc(&q, 3).unwrap();
        assert_eq!(z.len(), 13);
        assert!(z[10..].iter().all(|v| *v == c(0.0, 0.0)));
        let t = apply_zp_or_tc(&q, -4).unwrap();
        assert_eq!(t, q[2..8].to_vec());
        assert_eq!(tail_cut_split(-5), (2, 3));
    }

    #[test]
    fn frame_lengths() {
        let plan = SubbandPlan::new(64, &[8, 8], 20).unwrap();
        let filters: Vec<_> = (0..2).map(|m| design_chebyshev_filter(9, 50.0, &plan, m).unwrap()).collect();
        for l_zp in [-8, -3, 0, 5] {
            let f = FrameConfig::new(plan.clone(), filters.clone(), l_zp).unwrap();
            assert_eq!(f.l1(), 72);
            assert_eq!(f.l3() as i64, 64 + 9 - 1 + l_zp);
            assert_eq!(f.kept_range(0).len(), f.l3().min(f.l1()));
        }
        assert!(FrameConfig::new(plan.clone(), filters.clone(), -9).is_err());
        assert!(FrameConfig::new(plan, filters[..1].to_vec(), 0).is_err());
    }

    #[test]
    fn ofdm_degenerate_case() {
        let plan = SubbandPlan::new(16, &[16], 0).unwrap();
        let f = FrameConfig::new(plan.clone(), vec![SubbandFilter::unit(&plan, 0).unwrap()], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_symbols(&plan, &mut rng);
        let q = synthesize(&a, &f, &[0.0]).unwrap();
        let want = dft_matrix(16).unwrap().matvec(a.symbols()).unwrap();
        assert_eq!(q.len(), 16);
        for (x, y) in q.iter().zip(&want) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn synthesis_matches_matrix_form() {
        let plan = SubbandPlan::new(8, &[4, 4], 0).unwrap();
        let filters: Vec<_> = (0..2).map(|m| design_chebyshev_filter(3, 50.0, &plan, m).unwrap()).collect();
        let cfg = FrameConfig::new(plan.clone(), filters.clone(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_symbols(&plan, &mut rng);
        let q = synthesize(&a, &cfg, &[0.0, 0.0]).unwrap();
        assert_eq!(q.len(), 10);
        let d = dft_matrix(8).unwrap();
        let mut want = vec![c(0.0, 0.0); 10];
        for (m, f) in filters.iter().enumerate() {
            let am = a.masked(|n| plan.subband_range(m).contains(&n));
            let x = d.matvec(am.symbols()).unwrap();
            let y = toeplitz_conv_matrix(f.taps(), 8, 10).unwrap().matvec(&x).unwrap();
            want.iter_mut().zip(y).for_each(|(w, v)| *w += v / f.rho());
        }
        for (x, y) in q.iter().zip(&want) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn per_subband_frame_shares_symbol_length() {
        let plan = SubbandPlan::new(32, &[4, 4], 8).unwrap();
        let filters = vec![
            design_chebyshev_filter(5, 50.0, &plan, 0).unwrap(),
            design_chebyshev_filter(9, 50.0, &plan, 1).unwrap(),
        ];
        let f = FrameConfig::per_subband(plan.clone(), filters.clone(), vec![4, 0]).unwrap();
        assert_eq!(f.l3(), 32 + 8);
        assert_eq!(f.kept_range(0), 0..36);
        let f = FrameConfig::per_subband(plan.clone(), filters.clone(), vec![-2, -6]).unwrap();
        assert_eq!(f.l3(), 34);
        assert_eq!(f.kept_range(1), 3..37);
        assert!(FrameConfig::per_subband(plan, filters, vec![0, 0]).is_err());
    }

    #[test]
    fn transmit_power_per_active_carrier() {
        let plan = SubbandPlan::new(128, &[6, 6, 6], 50).unwrap();
        let filters: Vec<_> = (0..3).map(|m| design_chebyshev_filter(33, 50.0, &plan, m).unwrap()).collect();
        let cfg = FrameConfig::new(plan.clone(), filters, 4).unwrap();
        let synth = Synthesizer::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 4000;
        let energies: Vec<f64> = (0..trials)
            .map(|_| {
                let a = random_symbols(&plan, &mut rng);
                synth.transmit(a.symbols(), &[0.0; 3]).iter().map(|v| v.norm_sqr()).sum::<f64>() / 18.0
            })
            .collect();
        let mean = energies.iter().sum::<f64>() / trials as f64;
        let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se + 1e-12, "mean {mean} se {se}");
    }
}

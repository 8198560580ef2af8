use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::PowerBreakdown;
use crate::error::{invalid, Result};
use crate::sigcore::cis;
use crate::waveform::{FrameConfig, SubbandFilter, SubbandPlan};

/// Prefix sums of `b_t(l)·exp(−j2πnl/N)` over `l` for every observed
/// active carrier `n` and every source carrier `t` of one subband, where
/// `b_t(l) = (1/ρ)(1/√N) Σ_i f(l−i)·exp(j2πi(t+ε)/N)` is the filtered
/// waveform of carrier `t`.
#[derive(Debug, Clone)]
pub struct SourceKernel {
    subband: usize,
    filter_len: usize,
    carriers: std::ops::Range<usize>,
    observed: std::ops::Range<usize>,
    len: usize,
    prefix: Vec<C64>,
}

impl SourceKernel {
    pub fn new(plan: &SubbandPlan, filter: &SubbandFilter, eps: f64) -> Self {
        let n = plan.n_grid();
        let nf = n as f64;
        let m = filter.subband();
        let carriers = plan.subband_range(m);
        let observed = plan.active_range();
        let len = n + filter.len() - 1;
        let twiddle: Vec<C64> = (0..n).map(|k| cis(-(k as f64) / nf)).collect();
        let scale = 1.0 / (filter.rho() * nf.sqrt());
        let mut prefix = vec![C64::new(0.0, 0.0); observed.len() * carriers.len() * (len + 1)];
        let mut b = vec![C64::new(0.0, 0.0); len];
        for (bi, t) in carriers.clone().enumerate() {
            b.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            let step = cis((t as f64 + eps) / nf);
            let mut x = C64::new(scale, 0.0);
            for i in 0..n {
                if i % 64 == 0 {
                    x = cis(i as f64 * (t as f64 + eps) / nf) * scale;
                }
                for (o, &f) in b[i..].iter_mut().zip(filter.taps()) {
                    *o += x * f;
                }
                x *= step;
            }
            for (ai, obs) in observed.clone().enumerate() {
                let base = (ai * carriers.len() + bi) * (len + 1);
                let row = &mut prefix[base..base + len + 1];
                let mut acc = C64::new(0.0, 0.0);
                for (l, &v) in b.iter().enumerate() {
                    acc += v * twiddle[(obs * l) % n];
                    row[l + 1] = acc;
                }
            }
        }
        Self { subband: m, filter_len: filter.len(), carriers, observed, len, prefix }
    }

    pub fn subband(&self) -> usize {
        self.subband
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn carriers(&self) -> std::ops::Range<usize> {
        self.carriers.clone()
    }

    fn row(&self, n: usize, t: usize) -> &[C64] {
        let ai = n - self.observed.start;
        let bi = t - self.carriers.start;
        let base = (ai * self.carriers.len() + bi) * (self.len + 1);
        &self.prefix[base..base + self.len + 1]
    }
}

/// Observed-user link parameters: tap power profile (or realized taps)
/// and timing offset.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLink {
    pub tap_powers: Vec<f64>,
    pub tau: usize,
}

/// Closed-form coupling `β(n, t, e)` between source carrier `t` of symbol
/// offset `e` and observed carrier `n` of symbol 0, and its expectation
/// over block-fading Rayleigh channels.
#[derive(Debug, Clone)]
pub struct CouplingEngine {
    plan: SubbandPlan,
    kernels: Vec<Arc<SourceKernel>>,
}

struct Geometry {
    start: i64,
    end: i64,
    l3: i64,
    window: i64,
}

impl CouplingEngine {
    pub fn new(config: &FrameConfig, cfo: &[f64]) -> Result<Self> {
        if cfo.len() != config.plan().num_subbands() {
            return invalid("one CFO value per subband required");
        }
        let kernels = config
            .filters()
            .par_iter()
            .zip(cfo)
            .map(|(f, &e)| Arc::new(SourceKernel::new(config.plan(), f, e)))
            .collect();
        Ok(Self { plan: config.plan().clone(), kernels })
    }

    /// Assembles an engine from precomputed kernels, one per subband.
    pub fn from_kernels(plan: &SubbandPlan, kernels: Vec<Arc<SourceKernel>>) -> Result<Self> {
        if kernels.len() != plan.num_subbands() || kernels.iter().enumerate().any(|(m, k)| k.subband != m) {
            return invalid("one kernel per subband, in order");
        }
        Ok(Self { plan: plan.clone(), kernels })
    }

    pub fn plan(&self) -> &SubbandPlan {
        &self.plan
    }

    fn check(&self, config: &FrameConfig) -> Result<()> {
        if config.plan() != &self.plan {
            return invalid("frame plan differs from the engine plan");
        }
        for (k, f) in self.kernels.iter().zip(config.filters()) {
            if k.filter_len != f.len() {
                return invalid(format!("subband {}: engine built for length {}, frame uses {}", k.subband, k.filter_len, f.len()));
            }
        }
        Ok(())
    }

    fn geometry(&self, config: &FrameConfig, m: usize, l_ch: usize) -> Geometry {
        let kept = config.kept_range(m);
        Geometry {
            start: kept.start as i64,
            end: kept.end as i64,
            l3: config.l3() as i64,
            window: config.receive_window_len(l_ch) as i64,
        }
    }

    /// Symbol offsets that can reach the window of symbol 0.
    fn offsets(g: &Geometry, tau: i64, l_ch: usize) -> std::ops::RangeInclusive<i64> {
        let k = g.end - g.start;
        let lo = (tau - l_ch as i64 + 1 - k).div_euclid(g.l3) + 1;
        let hi = (tau + g.window + g.l3 - 1).div_euclid(g.l3) - 1;
        lo..=hi
    }

    fn span(g: &Geometry, tau: i64, e: i64, j: usize) -> (usize, usize) {
        let raw = g.start + tau - e * g.l3 - j as i64;
        let lo = raw.clamp(g.start, g.end);
        let hi = (raw + g.window).clamp(g.start, g.end);
        (lo as usize, hi as usize)
    }

    fn row_value(row: &[C64], lo: usize, hi: usize) -> C64 {
        let last = row.len() - 1;
        row[hi.min(last)] - row[lo.min(last)]
    }

    /// `β(n, t, e)` for realized taps `h` and timing offset `tau`.
    pub fn beta(&self, config: &FrameConfig, n: usize, t: usize, e: i64, h: &[C64], tau: usize, eta: u32) -> Result<C64> {
        self.check(config)?;
        let (m, row) = self.locate(n, t)?;
        let g = self.geometry(config, m, h.len());
        let nn = self.plan.n_grid();
        let mut acc = C64::new(0.0, 0.0);
        for (j, &hj) in h.iter().enumerate() {
            let (lo, hi) = Self::span(&g, tau as i64, e, j);
            if lo >= hi {
                continue;
            }
            let shift = (j as i64 + e * g.l3 - g.start - tau as i64).rem_euclid(nn as i64) as usize;
            let phase = cis(-(((n * shift) % nn) as f64) / nn as f64);
            acc += hj * phase * Self::row_value(row, lo, hi);
        }
        Ok(acc / ((nn << eta) as f64).sqrt())
    }

    /// `E|β(n, t, e)|²` over uncorrelated taps with powers `link.tap_powers`.
    pub fn expected_beta_power(&self, config: &FrameConfig, n: usize, t: usize, e: i64, link: &UserLink, eta: u32) -> Result<f64> {
        self.check(config)?;
        let (m, row) = self.locate(n, t)?;
        let g = self.geometry(config, m, link.tap_powers.len());
        Ok(Self::power_sum(row, &g, link, e) / (self.plan.n_grid() << eta) as f64)
    }

    fn power_sum(row: &[C64], g: &Geometry, link: &UserLink, e: i64) -> f64 {
        let mut s = 0.0;
        for (j, &p) in link.tap_powers.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (lo, hi) = Self::span(g, link.tau as i64, e, j);
            if lo < hi {
                s += p * Self::row_value(row, lo, hi).norm_sqr();
            }
        }
        s
    }

    fn locate(&self, n: usize, t: usize) -> Result<(usize, &[C64])> {
        if !self.plan.is_active(n) || !self.plan.is_active(t) {
            return invalid(format!("subcarriers {n}, {t} must be active"));
        }
        let m = self.plan.subband_of(t).expect("active carrier");
        Ok((m, self.kernels[m].row(n, t)))
    }

    /// Desired / ICI / ISI / noise power on every active carrier.
    /// `links[k]` describes the user served by subband `k`.
    pub fn power_breakdown(
        &self,
        config: &FrameConfig,
        links: &[UserLink],
        rho_sym_sq: f64,
        noise_var: f64,
        eta: u32,
    ) -> Result<PowerBreakdown> {
        self.check(config)?;
        if links.len() != self.plan.num_subbands() {
            return invalid(format!("{} links for {} subbands", links.len(), self.plan.num_subbands()));
        }
        if links.iter().any(|l| l.tap_powers.is_empty()) {
            return invalid("empty channel profile");
        }
        let n_os = (self.plan.n_grid() << eta) as f64;
        for (k, l) in links.iter().enumerate() {
            if (config.receive_window_len(l.tap_powers.len()) as f64) > n_os {
                return invalid(format!("user {k}: receive window exceeds the {n_os}-point DFT"));
            }
        }
        let carriers: Vec<usize> = self.plan.active_range().collect();
        let rows: Vec<[f64; 4]> = carriers
            .par_iter()
            .map(|&n| {
                let k = self.plan.subband_of(n).expect("active carrier");
                let link = &links[k];
                let l_ch = link.tap_powers.len();
                let (mut d, mut ici, mut isi) = (0.0, 0.0, 0.0);
                for kernel in &self.kernels {
                    let g = self.geometry(config, kernel.subband, l_ch);
                    for e in Self::offsets(&g, link.tau as i64, l_ch) {
                        for t in kernel.carriers() {
                            let p = Self::power_sum(kernel.row(n, t), &g, link, e);
                            if e != 0 {
                                isi += p;
                            } else if t == n {
                                d += p;
                            } else {
                                ici += p;
                            }
                        }
                    }
                }
                let w = config.receive_window_len(l_ch) as f64;
                [d * rho_sym_sq / n_os, ici * rho_sym_sq / n_os, isi * rho_sym_sq / n_os, w / n_os * noise_var]
            })
            .collect();
        Ok(PowerBreakdown {
            carriers,
            p_d: rows.iter().map(|r| r[0]).collect(),
            p_ici: rows.iter().map(|r| r[1]).collect(),
            p_isi: rows.iter().map(|r| r[2]).collect(),
            noise: rows.iter().map(|r| r[3]).collect(),
            n_grid: self.plan.n_grid(),
            l3: config.l3(),
        })
    }
}

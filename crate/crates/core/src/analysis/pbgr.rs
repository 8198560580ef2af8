use crate::error::{invalid, Error, Result};
use crate::waveform::{design_chebyshev_filter, freq_response_at, SubbandFilter, SubbandPlan};

/// Peak-to-bottom gain ratio in dB: filter power gain at the subband's
/// middle carrier (`first + ⌈N_m/2⌉`) over the gain at its edge carrier.
pub fn pbgr(filter: &SubbandFilter, plan: &SubbandPlan) -> Result<f64> {
    let range = plan.subband_range(filter.subband());
    if range.len() < 2 {
        return invalid("PBGR needs at least two carriers in the subband");
    }
    let n = plan.n_grid();
    let mid = range.start + range.len().div_ceil(2);
    let peak = freq_response_at(filter.taps(), mid as f64, n).norm_sqr();
    let edge = freq_response_at(filter.taps(), range.start as f64, n).norm_sqr();
    Ok(10.0 * (peak / edge).log10())
}

/// PBGR of a Chebyshev filter of length `len` for a single `n_m`-carrier
/// subband on an `n`-point grid.
pub fn pbgr_for_length(len: usize, n: usize, n_m: usize, atten_db: f64) -> Result<f64> {
    let plan = SubbandPlan::new(n, &[n_m], 0)?;
    pbgr(&design_chebyshev_filter(len, atten_db, &plan, 0)?, &plan)
}

/// Smallest filter length in `1..=max_len` whose PBGR reaches `target_db`.
///
/// Doubles the length until the target is met, then bisects inside that
/// bracket, where the PBGR grows monotonically with length.
pub fn filter_length_for_pbgr(target_db: f64, n: usize, n_m: usize, atten_db: f64, max_len: usize) -> Result<usize> {
    let meets = |len: usize| pbgr_for_length(len, n, n_m, atten_db).map(|v| v >= target_db);
    if meets(1)? {
        return Ok(1);
    }
    let mut lo = 1;
    let mut hi = 2;
    loop {
        if hi > max_len {
            if lo < max_len && meets(max_len)? {
                hi = max_len;
                break;
            }
            return Err(Error::NotFound(format!("no filter length <= {max_len} reaches PBGR {target_db} dB")));
        }
        if meets(hi)? {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if meets(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Least-squares line `y = slope·x + intercept` with its R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("linear fit needs two or more paired points");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("degenerate abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r2 })
}

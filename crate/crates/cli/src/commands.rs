use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use ufmc::montecarlo::{agreement_z, run_ber_trials, run_power_trials, BerLimits, BerMode, BerPoint};
use ufmc::optimizer::{
    optimize_budget, optimize_filter, optimize_joint, optimize_per_subband, optimize_zp, Evaluator, OptimizationResult,
    ProblemKind,
};
use ufmc::properties::{pbgr_fits, run_all, Check, CheckOptions};
use ufmc::scenario::{preset, IntRange, LinkSetup, Scenario, PRESETS};

use crate::{Axis, Command, Failure, ScenarioArgs};

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Agreement bound in standard errors for the closed-form comparison.
const Z_BOUND: f64 = 3.0;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Verify { scenario, trials, no_properties } => verify(&scenario, trials, no_properties),
        Command::Sweep { scenario, axis, filter_range, zp_range } => {
            sweep(&scenario, axis, filter_range.as_deref(), zp_range.as_deref())
        }
        Command::Optimize { scenario, kind, budget, strategy, stride } => {
            optimize(&scenario, kind.into(), budget, strategy.into(), stride)
        }
        Command::Ber { scenario, modes, snr, no_ofdm, max_trials, target_errors } => {
            let modes: Vec<BerMode> = modes.into_iter().map(Into::into).collect();
            ber(&scenario, &modes, snr, !no_ofdm, max_trials, target_errors)
        }
        Command::Filterlen { n, attenuation_db, out } => filterlen(n, attenuation_db, &out),
        Command::Show { list, preset: name, config, paper_grid } => {
            if list {
                PRESETS.iter().for_each(|p| println!("{p}"));
                return Ok(());
            }
            let sc = match (name, config) {
                (Some(p), _) => preset(&p, paper_grid)?,
                (None, Some(path)) => read_scenario(&path)?,
                (None, None) => return Err(Failure::Config("give --list, --preset or --config".into())),
            };
            println!("{}", sc.to_json());
            Ok(())
        }
    }
}

fn read_scenario(path: &Path) -> Outcome<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Scenario::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

struct Loaded {
    scenario: Scenario,
    setup: LinkSetup,
    out: PathBuf,
}

fn load(args: &ScenarioArgs) -> Outcome<Loaded> {
    let mut scenario = match (&args.preset, &args.config) {
        (Some(p), _) => preset(p, args.paper_grid)?,
        (None, Some(path)) => read_scenario(path)?,
        (None, None) => return Err(Failure::Config("give --preset or --config".into())),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let setup = scenario.validate()?;
    fs::create_dir_all(&args.out)?;
    Ok(Loaded { scenario, setup, out: args.out.clone() })
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    fs::write(path, serde_json::to_string_pretty(value).expect("serializable") + "\n")?;
    Ok(())
}

fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

fn verify(args: &ScenarioArgs, trials: Option<usize>, no_properties: bool) -> Outcome {
    let Loaded { scenario, setup, out } = load(args)?;
    let trials = trials.unwrap_or(scenario.trials.power);
    let bd = setup.breakdown()?;
    let mc = run_power_trials(&setup, trials, scenario.seed)?;
    let plan = setup.config.plan();

    let mut w = csv::Writer::from_path(out.join("powers.csv"))?;
    w.write_record([
        "subcarrier",
        "P_D_analytical",
        "P_D_mc",
        "P_ICI_analytical",
        "P_ICI_mc",
        "P_ISI_analytical",
        "P_ISI_mc",
        "se_P_D",
        "se_P_ICI",
        "se_P_ISI",
        "noise_analytical",
        "noise_mc",
        "se_noise",
        "subband",
    ])?;
    for (i, &n) in bd.carriers.iter().enumerate() {
        let j = mc.carriers.iter().position(|&c| c == n).expect("same carrier set");
        let row = [
            bd.p_d[i],
            mc.p_d.mean[j],
            bd.p_ici[i],
            mc.p_ici.mean[j],
            bd.p_isi[i],
            mc.p_isi.mean[j],
            mc.p_d.se[j],
            mc.p_ici.se[j],
            mc.p_isi.se[j],
            bd.noise[i],
            mc.noise.mean[j],
            mc.noise.se[j],
        ];
        let mut rec = vec![n.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        rec.push(plan.subband_of(n).expect("active carrier").to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("sinr.csv"))?;
    w.write_record(["subcarrier", "subband", "sinr_analytical_db", "sinr_mc_db"])?;
    for (i, &n) in bd.carriers.iter().enumerate() {
        let j = mc.carriers.iter().position(|&c| c == n).expect("same carrier set");
        w.serialize((n, plan.subband_of(n), to_db(bd.sinr_at(i)), to_db(mc.sinr[j])))?;
    }
    w.flush()?;

    let z = agreement_z(&bd, &mc);
    let additivity = mc.additivity_z();
    let mut checks = vec![Check {
        name: "closed-form-vs-monte-carlo".into(),
        pass: z.iter().all(|&v| v < Z_BOUND) && additivity < Z_BOUND,
        detail: format!(
            "{trials} trials: max |z| P_D {:.2}, P_ICI {:.2}, P_ISI {:.2}; additivity {:.2} (bound {Z_BOUND})",
            z[0], z[1], z[2], additivity
        ),
    }];
    if !no_properties {
        checks.extend(run_all(&CheckOptions { seed: scenario.seed, ..CheckOptions::default() })?);
    }
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let pass = checks.iter().all(|c| c.pass);
    write_json(
        &out.join("summary.json"),
        &json!({
            "scenario": scenario.name,
            "seed": scenario.seed,
            "trials": trials,
            "capacity": bd.capacity(),
            "max_z": { "p_d": z[0], "p_ici": z[1], "p_isi": z[2] },
            "additivity_z": additivity,
            "checks": checks,
            "pass": pass,
        }),
    )?;
    if pass {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(Failure::Check(failed.join(", ")))
    }
}

/// Parses `start:end[:step]` (a bare number is a single point).
fn parse_range(text: &str, what: &str) -> Outcome<Vec<i64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.trim().parse::<i64>().map_err(|e| Failure::Config(format!("{what} `{text}`: {e}")));
    let range = match parts.as_slice() {
        [v] => IntRange::single(num(v)?),
        [a, b] => IntRange::new(num(a)?, num(b)?, 1),
        [a, b, s] => IntRange::new(num(a)?, num(b)?, num(s)?),
        _ => return Err(Failure::Config(format!("{what} `{text}`: expected start:end[:step]"))),
    };
    non_empty(range.values(), what)
}

fn non_empty(values: Vec<i64>, what: &str) -> Outcome<Vec<i64>> {
    if values.is_empty() {
        return Err(Failure::Config(format!("{what} is empty")));
    }
    Ok(values)
}

fn lengths(values: &[i64], what: &str) -> Outcome<Vec<usize>> {
    values
        .iter()
        .map(|&v| usize::try_from(v).ok().filter(|&l| l >= 1).ok_or_else(|| Failure::Config(format!("{what}: length {v} < 1"))))
        .collect()
}

fn filter_grid(sc: &Scenario, text: Option<&str>) -> Outcome<Vec<usize>> {
    let values = match text {
        Some(t) => parse_range(t, "filter range")?,
        None => non_empty(sc.optimizer.filter_lengths.values(), "optimizer.filter_lengths")?,
    };
    lengths(&values, "filter range")
}

fn zp_grid(sc: &Scenario, text: Option<&str>) -> Outcome<Vec<i64>> {
    match text {
        Some(t) => parse_range(t, "zp range"),
        None => non_empty(sc.optimizer.zp_lengths.values(), "optimizer.zp_lengths"),
    }
}

fn common_filter_length(sc: &Scenario) -> Outcome<usize> {
    let first = sc.subbands.first().map(|s| s.filter_length).unwrap_or(1);
    match sc.subbands.iter().position(|s| s.filter_length != first) {
        Some(i) => Err(Failure::Config(format!("subbands[{i}].filter_length: a common filter length is required"))),
        None => Ok(first),
    }
}

fn sweep(args: &ScenarioArgs, axis: Axis, filter_range: Option<&str>, zp_range: Option<&str>) -> Outcome {
    let Loaded { scenario, setup, out } = load(args)?;
    let eval = Evaluator::new(&setup)?;
    let m = scenario.subbands.len();
    let fixed_filters: Vec<usize> = scenario.subbands.iter().map(|s| s.filter_length).collect();
    let filters: Vec<Vec<usize>> = match axis {
        Axis::ZpLength => vec![fixed_filters],
        _ => filter_grid(&scenario, filter_range)?.into_iter().map(|l| vec![l; m]).collect(),
    };
    let zps: Vec<i64> = match axis {
        Axis::FilterLength => vec![scenario.zp_length],
        _ => zp_grid(&scenario, zp_range)?,
    };
    let grid: Vec<(&Vec<usize>, i64)> = filters.iter().flat_map(|f| zps.iter().map(move |&z| (f, z))).collect();
    let caps = grid.par_iter().map(|&(f, z)| eval.capacity(f, &[z])).collect::<ufmc::Result<Vec<f64>>>()?;

    let mut w = csv::Writer::from_path(out.join("capacity.csv"))?;
    w.write_record(["filter_length", "zp_length", "capacity"])?;
    let mut best = 0;
    for (i, (&(f, z), &c)) in grid.iter().zip(&caps).enumerate() {
        if c > caps[best] {
            best = i;
        }
        let f_text = if f.iter().all(|&l| l == f[0]) {
            f[0].to_string()
        } else {
            f.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("/")
        };
        w.write_record([f_text, z.to_string(), c.to_string()])?;
    }
    w.flush()?;
    let (f, z) = grid[best];
    println!("{} points; peak capacity {:.4} at L_F {:?}, L_ZP {z}", grid.len(), caps[best], f);
    Ok(())
}

#[derive(Serialize)]
struct OptimizeRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<usize>,
    #[serde(flatten)]
    result: OptimizationResult,
}

fn optimize(
    args: &ScenarioArgs,
    kind: ProblemKind,
    budget: Option<usize>,
    strategy: ufmc::optimizer::Strategy,
    stride: usize,
) -> Outcome {
    let Loaded { scenario, setup, out } = load(args)?;
    let eval = Evaluator::new(&setup)?;
    let o = &scenario.optimizer;
    let budgets = || match budget {
        Some(b) => Ok(vec![b]),
        None if o.budgets.is_empty() => Err(Failure::Config("optimizer.budgets: give --budget or list budgets".into())),
        None => Ok(o.budgets.clone()),
    };
    let runs: Vec<OptimizeRun> = match kind {
        ProblemKind::FixedFilter => {
            let r = optimize_zp(&eval, common_filter_length(&scenario)?, &zp_grid(&scenario, None)?, o.min_zp_length)?;
            vec![OptimizeRun { budget: None, result: r }]
        }
        ProblemKind::FixedZp => {
            let r = optimize_filter(&eval, scenario.zp_length, &filter_grid(&scenario, None)?, o.min_filter_length)?;
            vec![OptimizeRun { budget: None, result: r }]
        }
        ProblemKind::Joint => {
            let r = optimize_joint(
                &eval,
                &filter_grid(&scenario, None)?,
                &zp_grid(&scenario, None)?,
                o.min_filter_length,
                o.min_zp_length,
            )?;
            vec![OptimizeRun { budget: None, result: r }]
        }
        ProblemKind::Budget => budgets()?
            .into_iter()
            .map(|b| {
                let r = optimize_budget(&eval, b, o.min_filter_length, o.min_zp_length, stride)?;
                Ok(OptimizeRun { budget: Some(b), result: r })
            })
            .collect::<Outcome<_>>()?,
        ProblemKind::PerSubbandBudget => budgets()?
            .into_iter()
            .map(|b| {
                let r = optimize_per_subband(&eval, b, o.min_filter_length, o.min_zp_length, strategy)?;
                Ok(OptimizeRun { budget: Some(b), result: r })
            })
            .collect::<Outcome<_>>()?,
    };
    for run in &runs {
        let b = &run.result.best;
        let prefix = run.budget.map(|v| format!("budget {v}: ")).unwrap_or_default();
        println!("{prefix}L_F {:?}, L_ZP {:?}, capacity {:.4}", b.filter_lengths, b.zp_lengths, b.capacity);
    }
    write_json(&out.join("optimize.json"), &json!({ "scenario": scenario.name, "runs": runs }))
}

fn ber(
    args: &ScenarioArgs,
    modes: &[BerMode],
    snr: Option<Vec<f64>>,
    with_ofdm: bool,
    max_trials: Option<usize>,
    target_errors: Option<u64>,
) -> Outcome {
    let Loaded { scenario, setup, out } = load(args)?;
    let grid = snr.unwrap_or_else(|| scenario.snr_grid_db.clone());
    if grid.is_empty() || grid.iter().any(|v| v.is_nan()) {
        return Err(Failure::Config("snr grid must be non-empty numbers".into()));
    }
    let limits = BerLimits {
        max_trials: max_trials.unwrap_or(scenario.trials.ber_max),
        target_errors: target_errors.unwrap_or(scenario.trials.ber_target_errors),
        ..BerLimits::default()
    };
    let mut rows: Vec<(&str, BerPoint)> = Vec::new();
    for &mode in modes {
        for p in run_ber_trials(&setup, &grid, mode, limits, scenario.seed)? {
            rows.push(("ufmc", p));
        }
    }
    if with_ofdm {
        for p in run_ber_trials(&setup.ofdm_reference()?, &grid, BerMode::Naive, limits, scenario.seed)? {
            rows.push(("ofdm", p));
        }
    }
    let mut w = csv::Writer::from_path(out.join("ber.csv"))?;
    w.write_record(["snr_db", "mode", "ber", "bit_errors", "trials", "system", "bits", "capped"])?;
    for (system, p) in &rows {
        w.serialize((p.snr_db, &p.mode, p.ber, p.bit_errors, p.trials, system, p.bits, p.capped))?;
        println!("{system:>4} {:<18} {:>6} dB  BER {:.3e}  ({} errors / {} trials)", p.mode, p.snr_db, p.ber, p.bit_errors, p.trials);
    }
    w.flush()?;
    Ok(())
}

fn filterlen(n: usize, attenuation_db: f64, out: &Path) -> Outcome {
    fs::create_dir_all(out)?;
    let fits = pbgr_fits(n, attenuation_db)?;
    let mut w = csv::Writer::from_path(out.join("filterlen.csv"))?;
    w.write_record(["target_db", "ratio", "subband_size", "filter_length", "fitted_length"])?;
    for f in &fits {
        for (&r, &l) in f.ratios.iter().zip(&f.lengths) {
            let size = (n as f64 / r).round() as usize;
            w.serialize((f.target_db, r, size, l, f.slope * r + f.intercept))?;
        }
        println!("PBGR {} dB: L_F ≈ {:.3}·N/N_m + {:.3} (R² {:.4})", f.target_db, f.slope, f.intercept, f.r2);
    }
    w.flush()?;
    Ok(())
}

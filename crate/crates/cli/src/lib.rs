//! Experiment driver behind the `punitive` binary: config parsing, figure
//! presets, analyses and CSV emission.

pub mod analysis;
pub mod config;
pub mod error;
pub mod presets;
pub mod table;

use std::path::{Path, PathBuf};

use punitive_core::sim::{replicate, run, write_trace_csv, TraceSummary};
use punitive_core::SimConfig;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::presets::{final_value, PENALTIES};
use crate::table::{fmt6, Table};

/// Overrides shared by `run --preset` and `run --config`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

pub fn run_preset(name: &str, opts: &RunOptions) -> Result<RunOutput, CliError> {
    let seed = opts.seed.unwrap_or(0);
    let reps = opts.replications.unwrap_or(presets::DEFAULT_REPLICATIONS);
    match name {
        "fig2-left" => {
            let pts = presets::fig2_left(seed, reps, presets::LEFT_HORIZON)?;
            let file = presets::fig2_left_table(&pts).write_csv(&opts.out, "fig2_left.csv")?;
            let mut summary = vec![format!("fig2-left: T = {}, {reps} replication(s), seed {seed}", presets::LEFT_HORIZON)];
            for pi in PENALTIES {
                let curve: Vec<_> = pts.iter().filter(|p| p.pi == pi).collect();
                let best = curve.iter().fold(curve[0], |b, p| if p.mean > b.mean { p } else { b });
                summary.push(format!(
                    "pi = {pi:>4}: u_m_bar(r21=0) = {:.3}, u_m_bar(r21=1) = {:.3}, max at r21 = {}",
                    curve[0].mean,
                    curve[curve.len() - 1].mean,
                    best.r21
                ));
            }
            Ok(RunOutput { files: vec![file], summary })
        }
        "fig2-right" => {
            let pts = presets::fig2_right(seed, reps, presets::RIGHT_HORIZON)?;
            let file = presets::fig2_right_table(&pts).write_csv(&opts.out, "fig2_right.csv")?;
            let mut summary = vec![format!("fig2-right: T = {}, {reps} replication(s), seed {seed}", presets::RIGHT_HORIZON)];
            for pi in PENALTIES {
                let honest = final_value(&pts, pi, "truthful").unwrap_or(f64::NAN);
                let cheat = final_value(&pts, pi, "misreport").unwrap_or(f64::NAN);
                summary.push(format!("pi = {pi:>4}: final truthful = {honest:.3}, final misreport = {cheat:.3}"));
            }
            Ok(RunOutput { files: vec![file], summary })
        }
        other => Err(CliError::Usage(format!(
            "unknown preset `{other}` (available: {})",
            presets::PRESETS.join(", ")
        ))),
    }
}

fn summary_row(seed: u64, s: &TraceSummary) -> Vec<String> {
    vec![
        seed.to_string(),
        s.horizon.to_string(),
        s.u_m_bar.to_string(),
        s.u_s_bar.to_string(),
        s.phi_bar.to_string(),
        s.f_t.to_string(),
        s.u_m_bar_nominal.map_or(String::new(), |x| x.to_string()),
    ]
}

/// Simulates an arbitrary config: the per-slot trace of the base seed plus
/// one summary row per replication.
pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput, CliError> {
    let policy = cfg
        .policy
        .ok_or_else(|| CliError::Usage("running a simulation needs a [policy] block".into()))?;
    let seed = opts.seed.unwrap_or(cfg.sim.seed);
    let reps = opts.replications.unwrap_or(cfg.sim.replications);
    let sim = SimConfig::new(cfg.model.clone(), cfg.report.clone(), policy, cfg.sim.horizon, seed)
        .with_noise(cfg.sim.noise);
    sim.validate()?;

    let trace = run(&sim, true)?;
    std::fs::create_dir_all(&opts.out)?;
    let trace_path = opts.out.join("trace.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&trace_path)?);
    write_trace_csv(&mut w, &trace.records, cfg.model.len())?;
    std::io::Write::flush(&mut w)?;

    let mut table = Table::new(&["seed", "horizon", "u_m_bar", "u_s_bar", "phi_bar", "f_t", "u_m_bar_nominal"]);
    let mut summary = vec![format!(
        "policy {} with pi = {}, T = {}, seed {seed}",
        policy.label(),
        policy.pi(),
        cfg.sim.horizon
    )];
    if reps >= 2 {
        let rep = replicate(&sim, reps)?;
        for (k, s) in rep.runs.iter().enumerate() {
            table.push(summary_row(seed.wrapping_add(k as u64), s));
        }
        summary.push(format!(
            "u_m_bar = {} +/- {} over {reps} seeds",
            fmt6(rep.u_m_bar.mean),
            fmt6(rep.u_m_bar.stderr)
        ));
        summary.push(format!("u_s_bar = {} +/- {}", fmt6(rep.u_s_bar.mean), fmt6(rep.u_s_bar.stderr)));
    } else {
        table.push(summary_row(seed, &trace.summary));
        summary.push(format!("u_m_bar = {}", fmt6(trace.summary.u_m_bar)));
        summary.push(format!("u_s_bar = {}", fmt6(trace.summary.u_s_bar)));
    }
    for (j, d) in trace.summary.d_bar.iter().enumerate() {
        if let Some(d) = d {
            summary.push(format!("d_bar[{}] = {}", j + 1, fmt6(*d)));
        }
    }
    let summary_path = table.write_csv(&opts.out, "summary.csv")?;
    Ok(RunOutput { files: vec![trace_path, summary_path], summary })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path)
}

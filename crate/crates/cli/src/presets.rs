//! Named experiments reproducing the two published figure panels.

use rayon::prelude::*;

use punitive_core::greedy::report_lowest_policy;
use punitive_core::sim::{replicate, run, PunitiveSpec, SimConfig};
use punitive_core::{MarketModel, PolicyClass, ReportPolicy, Result};

use crate::table::Table;

pub const PRESETS: [&str; 2] = ["fig2-left", "fig2-right"];
pub const PENALTIES: [f64; 3] = [1.0, 5.0, 10.0];

pub const LEFT_HORIZON: u64 = 10_000;
pub const RIGHT_HORIZON: u64 = 400;
pub const DEFAULT_REPLICATIONS: usize = 10;

/// Sweep values `0, 0.1, ..., 1` for the common probability of reporting the
/// lowest state.
pub fn sweep_values() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub r21: f64,
    pub pi: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Three-state sweep with `r21 = r31 = x`, `r32 = 0`, policy I at each
/// penalty. Every cell reuses the same seeds so curves share randomness.
pub fn fig2_left(seed: u64, replications: usize, horizon: u64) -> Result<Vec<SweepPoint>> {
    let model = MarketModel::three_state_example();
    let cells: Vec<(f64, f64)> =
        PENALTIES.iter().flat_map(|&pi| sweep_values().into_iter().map(move |x| (pi, x))).collect();
    cells
        .into_par_iter()
        .map(|(pi, x)| {
            let report = report_lowest_policy(3, x)?;
            let cfg = SimConfig::new(model.clone(), report, PunitiveSpec::PolicyI { pi }, horizon, seed);
            let (mean, stderr) = if replications >= 2 {
                let rep = replicate(&cfg, replications)?;
                (rep.u_m_bar.mean, rep.u_m_bar.stderr)
            } else {
                (run(&cfg, false)?.summary.u_m_bar, 0.0)
            };
            Ok(SweepPoint { r21: x, pi, mean, stderr })
        })
        .collect()
}

pub fn fig2_left_table(points: &[SweepPoint]) -> Table {
    let mut t = Table::new(&["r21", "pi", "u_m_bar_mean", "u_m_bar_stderr"]);
    for p in points {
        t.push(vec![p.r21.to_string(), p.pi.to_string(), p.mean.to_string(), p.stderr.to_string()]);
    }
    t
}

/// Misreporting used against truth in the five-state panel: every state above
/// the lowest reports one level lower half of the time.
pub fn one_level_down(n: usize) -> ReportPolicy {
    let rows = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if i == 0 {
                row[0] = 1.0;
            } else {
                row[i - 1] = 0.5;
                row[i] = 0.5;
            }
            row
        })
        .collect();
    ReportPolicy::new(rows, PolicyClass::Greedy).expect("valid greedy rows")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub t: u64,
    pub pi: f64,
    pub label: &'static str,
    pub u_m_bar: f64,
}

/// Running manufacturer revenue on the five-state market for truthful and
/// misreporting behavior, averaged pointwise over `replications` seeds.
pub fn fig2_right(seed: u64, replications: usize, horizon: u64) -> Result<Vec<CurvePoint>> {
    let model = MarketModel::five_state_example();
    let behaviors = [("truthful", ReportPolicy::identity(model.len())), ("misreport", one_level_down(model.len()))];
    let cells: Vec<(f64, &'static str, &ReportPolicy)> = PENALTIES
        .iter()
        .flat_map(|&pi| behaviors.iter().map(move |(label, r)| (pi, *label, r)))
        .collect();
    let curves = cells
        .into_par_iter()
        .map(|(pi, label, report)| {
            let base = SimConfig::new(model.clone(), report.clone(), PunitiveSpec::PolicyI { pi }, horizon, seed);
            let mut sum = vec![0.0; horizon as usize];
            for k in 0..replications.max(1) as u64 {
                let trace = run(&base.with_seed(seed.wrapping_add(k)), true)?;
                for (acc, rec) in sum.iter_mut().zip(&trace.records) {
                    *acc += rec.u_m_bar;
                }
            }
            let n = replications.max(1) as f64;
            Ok(sum
                .into_iter()
                .enumerate()
                .map(|(t, s)| CurvePoint { t: t as u64 + 1, pi, label, u_m_bar: s / n })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(curves.into_iter().flatten().collect())
}

pub fn fig2_right_table(points: &[CurvePoint]) -> Table {
    let mut t = Table::new(&["t", "pi", "policy_label", "u_m_bar"]);
    for p in points {
        t.push(vec![p.t.to_string(), p.pi.to_string(), p.label.to_string(), p.u_m_bar.to_string()]);
    }
    t
}

/// Final running value of a curve.
pub fn final_value(points: &[CurvePoint], pi: f64, label: &str) -> Option<f64> {
    points.iter().filter(|p| p.pi == pi && p.label == label).max_by_key(|p| p.t).map(|p| p.u_m_bar)
}

//! `analyze` subcommands: threshold searches, attractors and the algebraic
//! identity check.

use std::fmt;
use std::str::FromStr;

use punitive_core::strategic::{asymptotic_utility, truthful_demand, truthful_utility};
use punitive_core::{find_pi_bar, find_pi_bar_strategic, fixed_points, identity_check, Error as CoreError};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::table::{fmt6, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    PiBarGreedy,
    PiBarStrategic,
    FixedPoint,
    IdentityCheck,
}

impl Analysis {
    pub const ALL: [Analysis; 4] =
        [Analysis::PiBarGreedy, Analysis::PiBarStrategic, Analysis::FixedPoint, Analysis::IdentityCheck];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::PiBarGreedy => "pi-bar-greedy",
            Analysis::PiBarStrategic => "pi-bar-strategic",
            Analysis::FixedPoint => "fixed-point",
            Analysis::IdentityCheck => "identity-check",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown analysis `{s}`"))
    }
}

/// Table plus headline lines. `failure` carries a non-success status that
/// should still show the partial table.
#[derive(Debug)]
pub struct AnalysisReport {
    pub analysis: Analysis,
    pub table: Table,
    pub summary: Vec<String>,
    pub failure: Option<CliError>,
}

impl AnalysisReport {
    pub fn csv_name(&self) -> String {
        format!("{}.csv", self.analysis.name().replace('-', "_"))
    }
}

pub fn run_analysis(which: Analysis, cfg: &ExperimentConfig) -> Result<AnalysisReport, CliError> {
    match which {
        Analysis::PiBarGreedy => pi_bar_greedy(cfg),
        Analysis::PiBarStrategic => pi_bar_strategic(cfg),
        Analysis::FixedPoint => fixed_point_table(cfg),
        Analysis::IdentityCheck => Ok(identity(cfg)),
    }
}

fn pi_bar_greedy(cfg: &ExperimentConfig) -> Result<AnalysisReport, CliError> {
    let a = &cfg.analysis;
    let mut table = Table::new(&["pi", "truthful", "best_alternative", "truth_revealing"]);
    match find_pi_bar(&cfg.model, a.grid_step, a.pi_max, a.pi_step) {
        Ok(search) => {
            for c in &search.scan {
                table.push(vec![c.pi.to_string(), fmt6(c.truthful_value), fmt6(c.best_alternative_value), c.truth_revealing.to_string()]);
            }
            let summary = vec![
                format!("pi_bar = {}", search.pi_bar),
                format!("verified at pi_bar: {}", search.verified_at_pi_bar),
                format!("verified at 2 pi_bar: {}", search.verified_at_double),
                format!("grid step {} ({} candidates)", a.grid_step, search.scan.first().map_or(0, |c| c.candidates)),
            ];
            Ok(AnalysisReport { analysis: Analysis::PiBarGreedy, table, summary, failure: None })
        }
        Err(CoreError::ThresholdNotFound { pi_max }) => Ok(not_found(Analysis::PiBarGreedy, table, pi_max)),
        Err(e) => Err(e.into()),
    }
}

fn pi_bar_strategic(cfg: &ExperimentConfig) -> Result<AnalysisReport, CliError> {
    let pi_max = cfg.analysis.pi_max;
    let mut table = Table::new(&["pi", "asymptotic_utility", "truthful"]);
    let truthful = truthful_utility(&cfg.model);
    match find_pi_bar_strategic(&cfg.report, &cfg.model, pi_max) {
        Ok(th) => {
            for (pi, u) in &th.scan {
                table.push(vec![pi.to_string(), fmt6(*u), fmt6(truthful)]);
            }
            let at_double = asymptotic_utility(&cfg.report, 2.0 * th.pi_bar, &cfg.model)?;
            let summary = vec![
                format!("pi_bar = {:.6}", th.pi_bar),
                format!("utility at 2 pi_bar = {at_double:.6} (truthful {truthful:.6})"),
            ];
            Ok(AnalysisReport { analysis: Analysis::PiBarStrategic, table, summary, failure: None })
        }
        Err(CoreError::ThresholdNotFound { pi_max }) => {
            let mut pi = 1.0;
            while pi <= pi_max {
                let u = asymptotic_utility(&cfg.report, pi, &cfg.model)?;
                table.push(vec![pi.to_string(), fmt6(u), fmt6(truthful)]);
                pi *= 2.0;
            }
            Ok(not_found(Analysis::PiBarStrategic, table, pi_max))
        }
        Err(e) => Err(e.into()),
    }
}

fn not_found(analysis: Analysis, table: Table, pi_max: f64) -> AnalysisReport {
    let msg = format!("status: threshold not found up to pi = {pi_max}");
    AnalysisReport {
        analysis,
        table,
        summary: vec![msg.clone()],
        failure: Some(CliError::ThresholdNotFound(msg)),
    }
}

fn fixed_point_table(cfg: &ExperimentConfig) -> Result<AnalysisReport, CliError> {
    let pi = cfg
        .policy
        .map(|p| p.pi())
        .ok_or_else(|| CliError::Usage("fixed-point needs a [policy] block with `pi`".into()))?;
    let fp = fixed_points(&cfg.report, pi, &cfg.model)?;
    let mut table =
        Table::new(&["state", "phi", "report_prob", "d_star", "truthful_target", "cutoff", "residual"]);
    for s in &fp.states {
        table.push(vec![
            (s.state + 1).to_string(),
            cfg.model.phi(s.state).to_string(),
            fmt6(s.report_prob),
            format!("{:.10}", s.d_star),
            format!("{:.10}", truthful_demand(s.state, &cfg.model)),
            s.n_index.map_or("-".to_string(), |n| (n + 1).to_string()),
            format!("{:.3e}", s.residual),
        ]);
    }
    let u = asymptotic_utility(&cfg.report, pi, &cfg.model)?;
    let summary = vec![
        format!("pi = {pi}"),
        format!("asymptotic utility = {u:.6} (truthful {:.6})", truthful_utility(&cfg.model)),
        format!("max residual = {:.3e}", fp.max_residual()),
    ];
    Ok(AnalysisReport { analysis: Analysis::FixedPoint, table, summary, failure: None })
}

fn identity(cfg: &ExperimentConfig) -> AnalysisReport {
    let worst = identity_check(&cfg.model);
    let mut table = Table::new(&["states", "max_residual"]);
    table.push(vec![cfg.model.len().to_string(), format!("{worst:.3e}")]);
    AnalysisReport {
        analysis: Analysis::IdentityCheck,
        table,
        summary: vec![format!("max residual = {worst:.3e}")],
        failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(extra: &str) -> ExperimentConfig {
        let text = format!("[model]\nalpha = 0.5\ncs = 10\ncm = 10\nsupport = 40 60 80\nprobs = 0.2 0.5 0.3\n{extra}");
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for a in Analysis::ALL {
            assert_eq!(a.name().parse::<Analysis>().unwrap(), a);
        }
        assert!("pi-bar".parse::<Analysis>().is_err());
    }

    #[test]
    fn identity_residual_is_tiny() {
        let rep = run_analysis(Analysis::IdentityCheck, &example("")).unwrap();
        assert!(rep.summary[0].starts_with("max residual"));
        let worst = identity_check(&example("").model);
        assert!(worst < 1e-12);
    }

    #[test]
    fn truthful_fixed_points() {
        let rep = run_analysis(Analysis::FixedPoint, &example("[policy]\nkind = II\npi = 3\n")).unwrap();
        let d: Vec<f64> = rep.table.rows.iter().map(|r| r[3].parse().unwrap()).collect();
        assert_eq!(d.len(), 3);
        for (got, want) in d.iter().zip([7.5, 12.5, 17.5]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(run_analysis(Analysis::FixedPoint, &example("")).is_err());
    }

    #[test]
    fn greedy_threshold_bracket() {
        let rep = run_analysis(Analysis::PiBarGreedy, &example("")).unwrap();
        assert!(rep.failure.is_none());
        let pi_bar: f64 = rep.summary[0].trim_start_matches("pi_bar = ").parse().unwrap();
        assert!(pi_bar > 1.0 && pi_bar <= 10.0);
    }

    #[test]
    fn threshold_not_found_is_a_status() {
        let rep = run_analysis(Analysis::PiBarGreedy, &example("[analysis]\npi_max = 1\n")).unwrap();
        assert!(matches!(rep.failure, Some(CliError::ThresholdNotFound(_))));
        assert_eq!(rep.failure.unwrap().exit_code(), crate::error::exit::THRESHOLD_NOT_FOUND);
    }
}

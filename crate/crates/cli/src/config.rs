//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [model]
//! alpha = 0.5
//! cs = 10
//! cm = 10
//! support = 40 60 80
//! probs = 0.2 0.5 0.3
//! allow_boundary = false
//!
//! [report]
//! class = greedy
//! 1.0 0.0 0.0
//! 0.5 0.5 0.0
//! 0.5 0.0 0.5
//!
//! [policy]
//! kind = I
//! pi = 5
//!
//! [sim]
//! horizon = 10000
//! seed = 1
//! noise = 0
//! replications = 10
//!
//! [analysis]
//! grid_step = 0.25
//! pi_max = 20
//! pi_step = 0.5
//! ```
//!
//! Lists accept whitespace or commas. `[report]` defaults to the truthful
//! matrix, `[sim]` and `[analysis]` fields default as shown except `seed`
//! (0) and `replications` (1).

use std::collections::BTreeMap;
use std::fmt;

use punitive_core::sim::PunitiveSpec;
use punitive_core::{Error as CoreError, MarketModel, PolicyClass, PolicyViolation, ReportPolicy};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDiagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub horizon: u64,
    pub seed: u64,
    pub noise: f64,
    pub replications: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { horizon: 10_000, seed: 0, noise: 0.0, replications: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    pub grid_step: f64,
    pub pi_max: f64,
    pub pi_step: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { grid_step: 0.25, pi_max: 20.0, pi_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: MarketModel,
    pub report: ReportPolicy,
    pub policy: Option<PunitiveSpec>,
    pub sim: SimSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Block {
    Model,
    Report,
    Policy,
    Sim,
    Analysis,
}

impl Block {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "model" => Block::Model,
            "report" => Block::Report,
            "policy" => Block::Policy,
            "sim" => Block::Sim,
            "analysis" => Block::Analysis,
            _ => return None,
        })
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Block::Model => &["alpha", "cs", "cm", "support", "probs", "allow_boundary"],
            Block::Report => &["class"],
            Block::Policy => &["kind", "pi"],
            Block::Sim => &["horizon", "seed", "noise", "replications"],
            Block::Analysis => &["grid_step", "pi_max", "pi_step"],
        }
    }
}

#[derive(Default)]
struct Section {
    header: usize,
    fields: BTreeMap<String, (usize, String)>,
    rows: Vec<(usize, String)>,
}

impl Section {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.fields.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn require(&self, block: &str, key: &str) -> Result<(usize, &str), ConfigDiagnostic> {
        self.raw(key).ok_or_else(|| diag(self.header, format!("[{block}] is missing required field `{key}`")))
    }
}

fn diag(line: usize, message: impl Into<String>) -> ConfigDiagnostic {
    ConfigDiagnostic { line, message: message.into() }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, text: &str) -> Result<T, ConfigDiagnostic> {
    text.trim()
        .parse()
        .map_err(|_| diag(line, format!("field `{key}`: cannot parse `{}`", text.trim())))
}

fn list(line: usize, key: &str, text: &str) -> Result<Vec<f64>, ConfigDiagnostic> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| number(line, key, s))
        .collect()
}

fn boolean(line: usize, key: &str, text: &str) -> Result<bool, ConfigDiagnostic> {
    match text.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(diag(line, format!("field `{key}`: expected true or false, got `{other}`"))),
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<Block, Section>, ConfigDiagnostic> {
    let mut sections: BTreeMap<Block, Section> = BTreeMap::new();
    let mut current: Option<Block> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| diag(line_no, format!("malformed block header `{line}`")))?
                .trim();
            let block = Block::parse(name).ok_or_else(|| diag(line_no, format!("unknown block [{name}]")))?;
            if sections.contains_key(&block) {
                return Err(diag(line_no, format!("block [{name}] appears twice")));
            }
            sections.insert(block, Section { header: line_no, ..Section::default() });
            current = Some(block);
            continue;
        }
        let block = current.ok_or_else(|| diag(line_no, "content before the first block header"))?;
        let section = sections.get_mut(&block).expect("inserted on header");
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim();
                if !block.keys().contains(&key) {
                    return Err(diag(line_no, format!("unknown field `{key}`")));
                }
                if let Some((first, _)) = section.fields.get(key) {
                    return Err(diag(line_no, format!("field `{key}` already set on line {first}")));
                }
                section.fields.insert(key.to_string(), (line_no, value.trim().to_string()));
            }
            None if block == Block::Report => section.rows.push((line_no, line.to_string())),
            None => return Err(diag(line_no, format!("expected `key = value`, got `{line}`"))),
        }
    }
    Ok(sections)
}

fn parse_model(s: &Section) -> Result<MarketModel, CliError> {
    let field = |k: &str| -> Result<(usize, f64), ConfigDiagnostic> {
        let (l, v) = s.require("model", k)?;
        Ok((l, number(l, k, v)?))
    };
    let (_, alpha) = field("alpha")?;
    let (_, cs) = field("cs")?;
    let (_, cm) = field("cm")?;
    let (support_line, support_text) = s.require("model", "support")?;
    let support = list(support_line, "support", support_text)?;
    let (probs_line, probs_text) = s.require("model", "probs")?;
    let probs = list(probs_line, "probs", probs_text)?;
    let boundary = match s.raw("allow_boundary") {
        Some((l, v)) => boolean(l, "allow_boundary", v)?,
        None => false,
    };
    let built = if boundary {
        MarketModel::with_boundary(alpha, cs, cm, support, probs)
    } else {
        MarketModel::new(alpha, cs, cm, support, probs)
    };
    built.map_err(|e| {
        let line = match &e {
            CoreError::InvalidModel { field, .. } => s.raw(field).map_or(s.header, |(l, _)| l),
            CoreError::Assumption { .. } => support_line,
            _ => s.header,
        };
        CliError::from_core_at(e, line)
    })
}

fn parse_report(s: Option<&Section>, n: usize) -> Result<ReportPolicy, CliError> {
    let Some(s) = s else {
        return Ok(ReportPolicy::identity(n));
    };
    let class = match s.raw("class") {
        Some((l, v)) => v.parse::<PolicyClass>().map_err(|e| diag(l, format!("field `class`: {e}")))?,
        None => PolicyClass::General,
    };
    if s.rows.is_empty() {
        if class == PolicyClass::Identity {
            return Ok(ReportPolicy::identity(n));
        }
        return Err(diag(s.header, "[report] has no matrix rows").into());
    }
    let rows = s
        .rows
        .iter()
        .enumerate()
        .map(|(k, (l, text))| list(*l, &format!("report row {}", k + 1), text))
        .collect::<Result<Vec<_>, _>>()?;
    if rows.len() != n {
        return Err(diag(s.header, format!("[report] has {} rows but the model has {n} states", rows.len())).into());
    }
    ReportPolicy::new(rows, class).map_err(|e| {
        let line = match &e {
            CoreError::InvalidPolicy(v) => s.rows.get(violation_row(&v[0])).map_or(s.header, |(l, _)| *l),
            _ => s.header,
        };
        CliError::from_core_at(e, line)
    })
}

fn violation_row(v: &PolicyViolation) -> usize {
    match *v {
        PolicyViolation::NotSquare { row, .. }
        | PolicyViolation::Negative { row, .. }
        | PolicyViolation::AboveOne { row, .. }
        | PolicyViolation::RowSum { row, .. }
        | PolicyViolation::OverReport { row, .. }
        | PolicyViolation::NotIdentity { row, .. } => row,
    }
}

fn parse_policy(s: Option<&Section>) -> Result<Option<PunitiveSpec>, ConfigDiagnostic> {
    let Some(s) = s else { return Ok(None) };
    let (kind_line, kind) = s.require("policy", "kind")?;
    let (pi_line, pi_text) = s.require("policy", "pi")?;
    let pi: f64 = number(pi_line, "pi", pi_text)?;
    if !(pi.is_finite() && pi >= 0.0) {
        return Err(diag(pi_line, format!("field `pi`: {pi} must be finite and nonnegative")));
    }
    match kind {
        "I" | "1" | "greedy" => Ok(Some(PunitiveSpec::PolicyI { pi })),
        "II" | "2" | "strategic" => Ok(Some(PunitiveSpec::PolicyII { pi })),
        other => Err(diag(kind_line, format!("field `kind`: expected I or II, got `{other}`"))),
    }
}

fn parse_sim(s: Option<&Section>) -> Result<SimSection, ConfigDiagnostic> {
    let mut out = SimSection::default();
    let Some(s) = s else { return Ok(out) };
    if let Some((l, v)) = s.raw("horizon") {
        out.horizon = number(l, "horizon", v)?;
        if out.horizon == 0 {
            return Err(diag(l, "field `horizon`: must be at least 1"));
        }
    }
    if let Some((l, v)) = s.raw("seed") {
        out.seed = number(l, "seed", v)?;
    }
    if let Some((l, v)) = s.raw("noise") {
        out.noise = number(l, "noise", v)?;
        if !(out.noise.is_finite() && out.noise >= 0.0) {
            return Err(diag(l, "field `noise`: must be finite and nonnegative"));
        }
    }
    if let Some((l, v)) = s.raw("replications") {
        out.replications = number(l, "replications", v)?;
        if out.replications == 0 {
            return Err(diag(l, "field `replications`: must be at least 1"));
        }
    }
    Ok(out)
}

fn parse_analysis(s: Option<&Section>) -> Result<AnalysisSection, ConfigDiagnostic> {
    let mut out = AnalysisSection::default();
    let Some(s) = s else { return Ok(out) };
    for (key, slot) in [("grid_step", &mut out.grid_step), ("pi_max", &mut out.pi_max), ("pi_step", &mut out.pi_step)] {
        if let Some((l, v)) = s.raw(key) {
            *slot = number(l, key, v)?;
            if !(slot.is_finite() && *slot > 0.0) {
                return Err(diag(l, format!("field `{key}`: must be positive")));
            }
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let sections = split_sections(text)?;
        let model_section = sections.get(&Block::Model).ok_or_else(|| diag(1, "missing [model] block"))?;
        let model = parse_model(model_section)?;
        let report = parse_report(sections.get(&Block::Report), model.len())?;
        let policy = parse_policy(sections.get(&Block::Policy))?;
        let sim = parse_sim(sections.get(&Block::Sim))?;
        if let (Some(PunitiveSpec::PolicyI { .. }), true) = (policy, sim.noise > 0.0) {
            let line = sections[&Block::Sim].raw("noise").map_or(1, |(l, _)| l);
            return Err(diag(line, "field `noise`: demand noise applies to policy II only").into());
        }
        let analysis = parse_analysis(sections.get(&Block::Analysis))?;
        Ok(Self { model, report, policy, sim, analysis })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nalpha = 0.5\ncs = 10\ncm = 10\nsupport = 40 60 80\nprobs = 0.2, 0.5, 0.3\n";

    fn err_line(text: &str) -> (usize, String) {
        match ExperimentConfig::parse(text).unwrap_err() {
            CliError::Config(d) => (d.line, d.message),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minimal_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model, MarketModel::three_state_example());
        assert!(c.report.is_truthful());
        assert_eq!(c.policy, None);
        assert_eq!(c.sim, SimSection::default());
        assert_eq!(c.analysis, AnalysisSection::default());
    }

    #[test]
    fn full_config() {
        let text = format!(
            "{MINIMAL}\n[report]\nclass = greedy\n1 0 0\n0.5 0.5 0 # half\n0.5,0,0.5\n[policy]\nkind = II\npi = 2.5\n[sim]\nhorizon=100\nseed=7\nnoise=2\nreplications=3\n[analysis]\npi_max = 50\n"
        );
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c.report.class(), PolicyClass::Greedy);
        assert_eq!(c.report.prob(1, 0), 0.5);
        assert_eq!(c.policy, Some(PunitiveSpec::PolicyII { pi: 2.5 }));
        assert_eq!(c.sim, SimSection { horizon: 100, seed: 7, noise: 2.0, replications: 3 });
        assert_eq!(c.analysis.pi_max, 50.0);
    }

    #[test]
    fn probs_error_names_field_and_line() {
        let text = MINIMAL.replace("0.2, 0.5, 0.3", "0.2 0.4 0.3");
        let (line, msg) = err_line(&text);
        assert_eq!(line, 6);
        assert!(msg.contains("probs"), "{msg}");
    }

    #[test]
    fn greedy_over_report_names_entry() {
        let text = format!("{MINIMAL}[report]\nclass = greedy\n1 0 0\n0 0.5 0.5\n0 0 1\n");
        let (line, msg) = err_line(&text);
        assert_eq!(line, 10);
        assert!(msg.contains("r(2,3)"), "{msg}");
    }

    #[test]
    fn assumption_is_distinct() {
        let text = MINIMAL.replace("40 60 80", "10 60 80");
        assert!(matches!(ExperimentConfig::parse(&text), Err(CliError::Assumption { line: 5, .. })));
        let ok = format!("{}allow_boundary = true\n", text);
        assert!(ExperimentConfig::parse(&ok).is_ok());
    }

    #[test]
    fn schema_errors() {
        assert_eq!(err_line("alpha = 1\n").0, 1);
        assert!(err_line("[model]\nalpha = 0.5\n").1.contains("cs"));
        assert!(err_line(&format!("{MINIMAL}[bogus]\n")).1.contains("bogus"));
        assert_eq!(err_line(&format!("{MINIMAL}beta = 3\n")).0, 7);
        assert_eq!(err_line(&MINIMAL.replace("cs = 10", "cs = ten")).0, 3);
        assert!(err_line(&format!("{MINIMAL}alpha = 0.4\n")).1.contains("already set"));
        assert!(err_line(&format!("{MINIMAL}[policy]\nkind = III\npi = 1\n")).1.contains("kind"));
        assert!(err_line(&format!("{MINIMAL}[policy]\nkind = I\npi = 1\n[sim]\nnoise = 1\n")).1.contains("noise"));
        assert!(err_line(&format!("{MINIMAL}[report]\n1 0\n0 1\n")).1.contains("rows"));
    }
}

//! Seeded slot-by-slot simulation of the dynamic supply chain.
//!
//! Each slot draws a market potential, lets the manufacturer report through
//! its [`ReportPolicy`], quotes a raw-material price with the selected
//! punitive policy, and realizes demand at the manufacturer's best-response
//! selling price. Market draws, report draws and demand noise use three
//! separate ChaCha streams derived from one master seed.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greedy::slot_gain;
use crate::market::{best_response_price, raw_demand, MarketModel};
use crate::misreport::{sample_index, sample_report, ReportPolicy};
use crate::strategic::truthful_demand;

const MARKET_STREAM: u64 = 0;
const REPORT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Supplier pricing rule used in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PunitiveSpec {
    /// `Q_t = q*(reported) + pi f_t` with `f_t = (E[phi] - mean report)^+`.
    PolicyI { pi: f64 },
    /// `Q_t = q*(phi_j) + 2 pi (Dbar_j - sqrt(alpha) h_jj)` for report `j`.
    PolicyII { pi: f64 },
}

impl PunitiveSpec {
    pub fn pi(&self) -> f64 {
        match *self {
            PunitiveSpec::PolicyI { pi } | PunitiveSpec::PolicyII { pi } => pi,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PunitiveSpec::PolicyI { .. } => "I",
            PunitiveSpec::PolicyII { .. } => "II",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: MarketModel,
    pub report: ReportPolicy,
    pub policy: PunitiveSpec,
    pub horizon: u64,
    pub seed: u64,
    /// Half-width of the uniform demand noise; policy II only.
    pub noise_halfwidth: f64,
}

impl SimConfig {
    pub fn new(model: MarketModel, report: ReportPolicy, policy: PunitiveSpec, horizon: u64, seed: u64) -> Self {
        Self { model, report, policy, horizon, seed, noise_halfwidth: 0.0 }
    }

    pub fn with_noise(mut self, halfwidth: f64) -> Self {
        self.noise_halfwidth = halfwidth;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.report.check_dimension(&self.model)?;
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        let pi = self.policy.pi();
        if !(pi.is_finite() && pi >= 0.0) {
            return Err(Error::InvalidConfig(format!("penalty pi = {pi} must be finite and nonnegative")));
        }
        if !(self.noise_halfwidth.is_finite() && self.noise_halfwidth >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise half-width {} must be nonnegative", self.noise_halfwidth)));
        }
        if matches!(self.policy, PunitiveSpec::PolicyI { .. }) && self.noise_halfwidth != 0.0 {
            return Err(Error::InvalidConfig("demand noise applies to policy II only".into()));
        }
        Ok(())
    }
}

/// Everything that happened in one slot (1-based `t`).
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub true_state: usize,
    pub reported_state: usize,
    pub phi: f64,
    pub phi_hat: f64,
    pub quote: f64,
    pub price: f64,
    pub demand: f64,
    pub u_m: f64,
    pub u_s: f64,
    pub phi_bar: f64,
    pub f_t: f64,
    pub u_m_bar: f64,
    /// Per-report demand averages after this slot; empty for policy I.
    pub d_bar: Vec<f64>,
}

/// Running statistics at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub horizon: u64,
    pub phi_bar: f64,
    pub f_t: f64,
    /// Time-averaged realized manufacturer revenue.
    pub u_m_bar: f64,
    /// Time average of `([h(true, reported) - pi f_t]^+)^2` (policy I only).
    pub u_m_bar_nominal: Option<f64>,
    pub u_s_bar: f64,
    /// Per-report demand averages (policy II only); `None` for never-reported states.
    pub d_bar: Vec<Option<f64>>,
    pub report_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub summary: TraceSummary,
    pub records: Vec<SlotRecord>,
}

struct Streams {
    market: ChaCha8Rng,
    report: ChaCha8Rng,
    noise: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Self { market: stream(MARKET_STREAM), report: stream(REPORT_STREAM), noise: stream(NOISE_STREAM) }
    }
}

/// Runs a configuration, dispatching on its punitive policy.
pub fn run(config: &SimConfig, keep_records: bool) -> Result<Trace> {
    match config.policy {
        PunitiveSpec::PolicyI { .. } => run_policy_one(config, keep_records),
        PunitiveSpec::PolicyII { .. } => run_policy_two(config, keep_records),
    }
}

pub fn run_policy_one(config: &SimConfig, keep_records: bool) -> Result<Trace> {
    config.validate()?;
    let PunitiveSpec::PolicyI { pi } = config.policy else {
        return Err(Error::InvalidConfig("run_policy_one needs policy I".into()));
    };
    let m = &config.model;
    let r = &config.report;
    let n = m.len();
    let mean_phi = m.mean_potential();
    let mut rng = Streams::new(config.seed);

    let mut phi_bar = 0.0;
    let mut f_t = 0.0;
    let mut u_m_bar = 0.0;
    let mut u_m_nominal = 0.0;
    let mut u_s_bar = 0.0;
    let mut counts = vec![0u64; n];
    let mut records = Vec::with_capacity(if keep_records { config.horizon as usize } else { 0 });

    for t in 1..=config.horizon {
        let step = 1.0 / t as f64;
        let i = sample_index(m.probs(), &mut rng.market);
        let j = sample_report(i, r, &mut rng.report);
        counts[j] += 1;
        let (phi, phi_hat) = (m.phi(i), m.phi(j));

        phi_bar += (phi_hat - phi_bar) * step;
        f_t = (mean_phi - phi_bar).max(0.0);
        let quote = m.equilibrium_quote(phi_hat) + pi * f_t;
        let price = best_response_price(phi, quote, m);
        let demand = raw_demand(price, phi, m.alpha());
        let u_m = demand * (price - quote - m.cm());
        let u_s = demand * (quote - m.cs());

        u_m_bar += (u_m - u_m_bar) * step;
        u_s_bar += (u_s - u_s_bar) * step;
        let nominal = (slot_gain(m, i, j) - pi * f_t).max(0.0).powi(2);
        u_m_nominal += (nominal - u_m_nominal) * step;

        if keep_records {
            records.push(SlotRecord {
                t,
                true_state: i,
                reported_state: j,
                phi,
                phi_hat,
                quote,
                price,
                demand,
                u_m,
                u_s,
                phi_bar,
                f_t,
                u_m_bar,
                d_bar: Vec::new(),
            });
        }
    }

    Ok(Trace {
        summary: TraceSummary {
            horizon: config.horizon,
            phi_bar,
            f_t,
            u_m_bar,
            u_m_bar_nominal: Some(u_m_nominal),
            u_s_bar,
            d_bar: Vec::new(),
            report_counts: counts,
        },
        records,
    })
}

pub fn run_policy_two(config: &SimConfig, keep_records: bool) -> Result<Trace> {
    config.validate()?;
    let PunitiveSpec::PolicyII { pi } = config.policy else {
        return Err(Error::InvalidConfig("run_policy_two needs policy II".into()));
    };
    let m = &config.model;
    let r = &config.report;
    let n = m.len();
    let mean_phi = m.mean_potential();
    let noise = config.noise_halfwidth;
    let mut rng = Streams::new(config.seed);

    let targets: Vec<f64> = (0..n).map(|j| truthful_demand(j, m)).collect();
    // zero initial penalty: averages start at their truthful targets
    let mut d_bar = targets.clone();
    let mut counts = vec![0u64; n];
    let mut phi_bar = 0.0;
    let mut f_t = 0.0;
    let mut u_m_bar = 0.0;
    let mut u_s_bar = 0.0;
    let mut records = Vec::with_capacity(if keep_records { config.horizon as usize } else { 0 });

    for t in 1..=config.horizon {
        let step = 1.0 / t as f64;
        let i = sample_index(m.probs(), &mut rng.market);
        let j = sample_report(i, r, &mut rng.report);
        let (phi, phi_hat) = (m.phi(i), m.phi(j));

        let quote = m.equilibrium_quote(phi_hat) + 2.0 * pi * (d_bar[j] - targets[j]);
        let price = best_response_price(phi, quote, m);
        let base = raw_demand(price, phi, m.alpha());
        let eps = if noise > 0.0 { rng.noise.gen_range(-noise..=noise) } else { 0.0 };
        let demand = if base > 0.0 { (base + eps).max(0.0) } else { 0.0 };
        let u_m = demand * (price - quote - m.cm());
        let u_s = demand * (quote - m.cs());

        counts[j] += 1;
        d_bar[j] += (demand - d_bar[j]) / counts[j] as f64;
        phi_bar += (phi_hat - phi_bar) * step;
        f_t = (mean_phi - phi_bar).max(0.0);
        u_m_bar += (u_m - u_m_bar) * step;
        u_s_bar += (u_s - u_s_bar) * step;

        if keep_records {
            records.push(SlotRecord {
                t,
                true_state: i,
                reported_state: j,
                phi,
                phi_hat,
                quote,
                price,
                demand,
                u_m,
                u_s,
                phi_bar,
                f_t,
                u_m_bar,
                d_bar: d_bar.clone(),
            });
        }
    }

    let d_bar = d_bar.iter().zip(&counts).map(|(&d, &c)| (c > 0).then_some(d)).collect();
    Ok(Trace {
        summary: TraceSummary {
            horizon: config.horizon,
            phi_bar,
            f_t,
            u_m_bar,
            u_m_bar_nominal: None,
            u_s_bar,
            d_bar,
            report_counts: counts,
        },
        records,
    })
}

/// Sample mean and standard error across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, stderr: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub runs: Vec<TraceSummary>,
    pub u_m_bar: Estimate,
    pub u_s_bar: Estimate,
    pub phi_bar: Estimate,
    pub f_t: Estimate,
    /// Per-state demand averages over the runs that reported the state.
    pub d_bar: Vec<Option<Estimate>>,
}

/// Runs seeds `seed, seed + 1, ...` in parallel and summarizes each statistic.
pub fn replicate(config: &SimConfig, n_seeds: usize) -> Result<ReplicationSummary> {
    if n_seeds < 2 {
        return Err(Error::InvalidConfig("replicate needs at least two seeds".into()));
    }
    config.validate()?;
    let runs = (0..n_seeds as u64)
        .into_par_iter()
        .map(|k| run(&config.with_seed(config.seed.wrapping_add(k)), false).map(|t| t.summary))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&TraceSummary) -> f64| Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
    let n = config.model.len();
    let d_bar = (0..n)
        .map(|j| {
            let xs: Vec<f64> = runs.iter().filter_map(|s| s.d_bar.get(j).copied().flatten()).collect();
            (!xs.is_empty()).then(|| Estimate::from_samples(&xs))
        })
        .collect();
    Ok(ReplicationSummary {
        u_m_bar: pick(|s| s.u_m_bar),
        u_s_bar: pick(|s| s.u_s_bar),
        phi_bar: pick(|s| s.phi_bar),
        f_t: pick(|s| s.f_t),
        d_bar,
        runs,
    })
}

/// Writes the per-slot stream as CSV. Policy II traces (non-empty `d_bar`)
/// get one trailing `d_bar_j` column per state.
pub fn write_trace_csv<W: Write>(out: &mut W, records: &[SlotRecord], n_states: usize) -> std::io::Result<()> {
    let with_d = records.first().is_some_and(|r| !r.d_bar.is_empty());
    write!(out, "t,phi,phi_hat,Q,P,D,u_m,u_s,phi_bar,f_t")?;
    if with_d {
        for j in 1..=n_states {
            write!(out, ",d_bar_{j}")?;
        }
    }
    writeln!(out)?;
    for r in records {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t, r.phi, r.phi_hat, r.quote, r.price, r.demand, r.u_m, r.u_s, r.phi_bar, r.f_t
        )?;
        for d in &r.d_bar {
            write!(out, ",{d}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::market::sbe_dynamic;
    use crate::misreport::PolicyClass;

    fn ex1() -> MarketModel {
        MarketModel::three_state_example()
    }

    fn truthful_one(pi: f64, horizon: u64, seed: u64) -> SimConfig {
        SimConfig::new(ex1(), ReportPolicy::identity(3), PunitiveSpec::PolicyI { pi }, horizon, seed)
    }

    #[test]
    fn single_slot_bootstraps() {
        let t = run_policy_one(&truthful_one(5.0, 1, 9), true).unwrap();
        let rec = &t.records[0];
        assert_eq!(rec.phi_bar, rec.phi_hat);
        assert_eq!(t.summary.u_m_bar, rec.u_m);
        // truthful with one report: f_1 = (E phi - phi_hat)^+
        assert_eq!(rec.f_t, (ex1().mean_potential() - rec.phi_hat).max(0.0));
    }

    #[test]
    fn truthful_policy_one_tracks_equilibrium() {
        let cfg = truthful_one(5.0, 10_000, 100);
        let rep = replicate(&cfg, 10).unwrap();
        let target = sbe_dynamic(&ex1()).expected_u_m;
        assert!((rep.u_m_bar.mean - target).abs() < 0.05 * target, "{:?}", rep.u_m_bar);
        assert!(rep.u_m_bar.stderr < 0.02 * rep.u_m_bar.mean);
    }

    #[test]
    fn misreporting_loses_under_strong_penalty() {
        let r = ReportPolicy::new(
            vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            PolicyClass::Greedy,
        )
        .unwrap();
        let honest = run_policy_one(&truthful_one(10.0, 10_000, 3), false).unwrap();
        let cheat = SimConfig { report: r, ..truthful_one(10.0, 10_000, 3) };
        let cheat = run_policy_one(&cheat, false).unwrap();
        assert!(cheat.summary.u_m_bar < honest.summary.u_m_bar);
    }

    #[test]
    fn zero_penalty_matches_equilibrium_lln() {
        let target = sbe_dynamic(&ex1());
        let rep = replicate(&truthful_one(0.0, 10_000, 77), 10).unwrap();
        assert!((rep.u_m_bar.mean - target.expected_u_m).abs() < 0.05 * target.expected_u_m);
        assert!((rep.u_s_bar.mean - target.expected_u_s).abs() < 0.05 * target.expected_u_s);
        assert!((rep.u_s_bar.mean / rep.u_m_bar.mean - 2.0).abs() < 0.1);
    }

    #[test]
    fn determinism() {
        let cfg = SimConfig::new(
            ex1(),
            ReportPolicy::identity(3),
            PunitiveSpec::PolicyII { pi: 3.0 },
            500,
            5,
        )
        .with_noise(2.0);
        assert_eq!(run(&cfg, true).unwrap(), run(&cfg, true).unwrap());
        assert_ne!(run(&cfg, true).unwrap(), run(&cfg.with_seed(6), true).unwrap());
    }

    #[test]
    fn recursions_match_batch_sums() {
        let r = ReportPolicy::new(
            vec![vec![1.0, 0.0, 0.0], vec![0.3, 0.7, 0.0], vec![0.2, 0.3, 0.5]],
            PolicyClass::Greedy,
        )
        .unwrap();
        let cfg = SimConfig::new(ex1(), r, PunitiveSpec::PolicyII { pi: 2.0 }, 10_000, 1).with_noise(1.0);
        let t = run(&cfg, true).unwrap();
        let n = t.records.len() as f64;
        let phi_mean = t.records.iter().map(|r| r.phi_hat).sum::<f64>() / n;
        assert!((t.summary.phi_bar - phi_mean).abs() < 1e-9);
        let um = t.records.iter().map(|r| r.u_m).sum::<f64>() / n;
        assert!((t.summary.u_m_bar - um).abs() < 1e-9 * um.abs().max(1.0));
        for j in 0..3 {
            let (s, c) = t
                .records
                .iter()
                .filter(|r| r.reported_state == j)
                .fold((0.0, 0.0), |(s, c), r| (s + r.demand, c + 1.0));
            assert!((t.summary.d_bar[j].unwrap() - s / c).abs() < 1e-9);
        }
    }

    #[test]
    fn policy_two_truthful_limits() {
        let cfg = SimConfig::new(ex1(), ReportPolicy::identity(3), PunitiveSpec::PolicyII { pi: 5.0 }, 100_000, 21);
        let t = run(&cfg, false).unwrap();
        for (j, want) in [7.5, 12.5, 17.5].into_iter().enumerate() {
            let got = t.summary.d_bar[j].unwrap();
            assert!((got - want).abs() < 0.02 * want, "j={j} got {got}");
        }
        let noisy = run(&cfg.clone().with_noise(2.0), false).unwrap();
        for (j, want) in [7.5, 12.5, 17.5].into_iter().enumerate() {
            let got = noisy.summary.d_bar[j].unwrap();
            assert!((got - want).abs() < 0.03 * want, "j={j} got {got}");
        }
    }

    #[test]
    fn report_frequencies_match_marginals() {
        let r = ReportPolicy::new(
            vec![vec![0.2, 0.8, 0.0], vec![0.1, 0.6, 0.3], vec![0.5, 0.0, 0.5]],
            PolicyClass::General,
        )
        .unwrap();
        let m = ex1();
        let cfg = SimConfig::new(m.clone(), r.clone(), PunitiveSpec::PolicyI { pi: 1.0 }, 100_000, 8);
        let t = run(&cfg, false).unwrap();
        let probs = r.report_probabilities(&m);
        let n = 100_000.0;
        for j in 0..3 {
            let sd = (n * probs[j] * (1.0 - probs[j])).sqrt();
            assert!((t.summary.report_counts[j] as f64 - n * probs[j]).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = truthful_one(1.0, 0, 1);
        assert!(cfg.validate().is_err());
        cfg.horizon = 10;
        assert!(cfg.clone().with_noise(1.0).validate().is_err());
        let bad = SimConfig { report: ReportPolicy::identity(2), ..cfg.clone() };
        assert!(matches!(bad.validate(), Err(Error::DimensionMismatch { .. })));
        assert!(replicate(&cfg, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let cfg = SimConfig::new(ex1(), ReportPolicy::identity(3), PunitiveSpec::PolicyII { pi: 1.0 }, 3, 1);
        let t = run(&cfg, true).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &t.records, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,phi,phi_hat,Q,P,D,u_m,u_s,phi_bar,f_t,d_bar_1,d_bar_2,d_bar_3");
        assert_eq!(lines.clone().count(), 3);
        assert_eq!(lines.next().unwrap().split(',').count(), 13);
    }
}

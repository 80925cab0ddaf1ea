//! Punitive policy II: penalties driven by per-report demand averages.
//!
//! After each report `j` the supplier quotes
//! `q*(phi_j) + 2 pi (Dbar_j - sqrt(alpha) h_jj)` where `Dbar_j` is the mean
//! demand observed in slots that reported `j`. The running mean is a
//! stochastic-approximation recursion whose mean drift `g` is strictly
//! decreasing, so each `Dbar_j` settles at the unique zero of `g`.

use crate::error::{Error, Result};
use crate::greedy::{h_matrix, slot_gain};
use crate::market::{sbe_dynamic, MarketModel};
use crate::misreport::ReportPolicy;

const BISECTION_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 400;

/// `sqrt(alpha) h_jj`, the per-report mean demand under truthful reporting.
pub fn truthful_demand(j: usize, model: &MarketModel) -> f64 {
    model.alpha().sqrt() * slot_gain(model, j, j)
}

/// Mean demand in true state `i` after report `j` when the supplier's running
/// average for `j` sits at `d`. Negative values mean the manufacturer shuts
/// the market.
#[inline]
pub fn limit_demand(i: usize, j: usize, d: f64, pi: f64, model: &MarketModel) -> f64 {
    let sa = model.alpha().sqrt();
    sa * slot_gain(model, i, j) - pi * model.alpha() * (d - truthful_demand(j, model))
}

fn check_state(j: usize, model: &MarketModel) -> Result<()> {
    if j >= model.len() {
        return Err(Error::Domain(format!("state index {} out of range 1..={}", j + 1, model.len())));
    }
    Ok(())
}

fn check_pi(pi: f64) -> Result<()> {
    if !(pi.is_finite() && pi >= 0.0) {
        return Err(Error::Domain(format!("penalty pi = {pi} must be finite and nonnegative")));
    }
    Ok(())
}

/// First true state that still buys after report `j` at average `d`, i.e.
/// `min { i : h_ij > sqrt(alpha) pi (d - sqrt(alpha) h_jj) }`. `None` when
/// every state shuts the market.
pub fn n_index(d: f64, j: usize, pi: f64, model: &MarketModel) -> Option<usize> {
    let sa = model.alpha().sqrt();
    let threshold = sa * pi * (d - sa * slot_gain(model, j, j));
    (0..model.len()).find(|&i| slot_gain(model, i, j) > threshold)
}

fn report_mass(j: usize, r: &ReportPolicy, model: &MarketModel) -> f64 {
    (0..model.len()).map(|i| model.sigma(i) * r.prob(i, j)).sum()
}

/// Mean drift of the per-report demand average.
pub fn ode_rhs(d: f64, j: usize, r: &ReportPolicy, pi: f64, model: &MarketModel) -> Result<f64> {
    r.check_dimension(model)?;
    check_state(j, model)?;
    check_pi(pi)?;
    let mass = report_mass(j, r, model);
    if mass <= 0.0 {
        return Err(Error::NeverReported(j));
    }
    Ok(drift(d, j, r, pi, model, mass))
}

fn drift(d: f64, j: usize, r: &ReportPolicy, pi: f64, model: &MarketModel, mass: f64) -> f64 {
    let inflow = match n_index(d, j, pi, model) {
        Some(first) => (first..model.len())
            .map(|i| model.sigma(i) * r.prob(i, j) * limit_demand(i, j, d, pi, model))
            .sum(),
        None => 0.0,
    };
    inflow / mass - d
}

/// Attractor formula evaluated with a given cutoff `first` (`None` = empty set).
pub fn closed_form_attractor(j: usize, first: Option<usize>, r: &ReportPolicy, pi: f64, model: &MarketModel) -> f64 {
    let a = model.alpha();
    let h = |i| slot_gain(model, i, j);
    let mass = report_mass(j, r, model);
    let (num, tail) = match first {
        Some(n) => (n..model.len()).fold((0.0, 0.0), |(num, tail), i| {
            let w = model.sigma(i) * r.prob(i, j);
            (num + w * (h(i) + pi * a * h(j)), tail + w)
        }),
        None => (0.0, 0.0),
    };
    a.sqrt() * num / (mass + pi * a * tail)
}

/// Solved attractor for one reported state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFixedPoint {
    pub state: usize,
    pub d_star: f64,
    /// Cutoff `N_j(d*)`; `None` when no true state buys.
    pub n_index: Option<usize>,
    pub report_prob: f64,
    /// `|g(d*)|`.
    pub residual: f64,
    /// Closed-form attractor re-evaluated at `n_index`.
    pub closed_form: f64,
}

/// Attractors for every state reported with positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub pi: f64,
    pub states: Vec<StateFixedPoint>,
    /// Report probability of every state, including never-reported ones.
    pub report_prob: Vec<f64>,
}

impl FixedPointResult {
    pub fn get(&self, j: usize) -> Option<&StateFixedPoint> {
        self.states.iter().find(|s| s.state == j)
    }

    pub fn max_residual(&self) -> f64 {
        self.states.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

/// Unique zero of the drift on `[0, phi_L]` by bisection, polished with the
/// closed form on the linear piece containing it.
pub fn fixed_point(j: usize, r: &ReportPolicy, pi: f64, model: &MarketModel) -> Result<StateFixedPoint> {
    r.check_dimension(model)?;
    check_state(j, model)?;
    check_pi(pi)?;
    let mass = report_mass(j, r, model);
    if mass <= 0.0 {
        return Err(Error::NeverReported(j));
    }
    let g = |d: f64| drift(d, j, r, pi, model, mass);
    let mut lo = 0.0;
    let mut hi = model.phi(model.len() - 1);
    let g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo < 0.0 || g_hi >= 0.0 {
        return Err(Error::SignCondition { state: j, g_low: g_lo, g_high: g_hi });
    }

    let root = if g_lo == 0.0 {
        0.0
    } else {
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= BISECTION_TOL || mid <= lo || mid >= hi {
                break;
            }
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let bisected = 0.5 * (lo + hi);
        let first = n_index(bisected, j, pi, model);
        let polished = closed_form_attractor(j, first, r, pi, model);
        // keep the polished value only if it stays on the same linear piece
        if n_index(polished, j, pi, model) == first && g(polished).abs() <= g(bisected).abs() {
            polished
        } else {
            bisected
        }
    };

    let first = n_index(root, j, pi, model);
    Ok(StateFixedPoint {
        state: j,
        d_star: root,
        n_index: first,
        report_prob: mass,
        residual: g(root).abs(),
        closed_form: closed_form_attractor(j, first, r, pi, model),
    })
}

pub fn fixed_points(r: &ReportPolicy, pi: f64, model: &MarketModel) -> Result<FixedPointResult> {
    r.check_dimension(model)?;
    let report_prob = r.report_probabilities(model);
    let states = (0..model.len())
        .filter(|&j| report_prob[j] > 0.0)
        .map(|j| fixed_point(j, r, pi, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedPointResult { pi, states, report_prob })
}

/// Limit of the manufacturer's time-averaged revenue under policy II.
///
/// In true state `i` after report `j` the limit demand is
/// `W_ij = sqrt(alpha) h_ij - pi alpha (d*_j - sqrt(alpha) h_jj)` when
/// positive, and the best-response margin equals demand / alpha, so the
/// revenue rate is `sum sigma_i r_ij (W_ij^+)^2 / alpha`.
pub fn asymptotic_utility(r: &ReportPolicy, pi: f64, model: &MarketModel) -> Result<f64> {
    let fp = fixed_points(r, pi, model)?;
    Ok(revenue_from(&fp, r, pi, model).0)
}

/// Returns `(utility, upper_bound)` where the bound replaces one demand factor
/// by the unpenalized `sqrt(alpha) h_ij`.
fn revenue_from(fp: &FixedPointResult, r: &ReportPolicy, pi: f64, model: &MarketModel) -> (f64, f64) {
    let a = model.alpha();
    let mut u = 0.0;
    let mut bound = 0.0;
    for s in &fp.states {
        let j = s.state;
        for i in 0..model.len() {
            let w = model.sigma(i) * r.prob(i, j);
            if w == 0.0 {
                continue;
            }
            let demand = limit_demand(i, j, s.d_star, pi, model).max(0.0);
            u += w * demand * demand / a;
            bound += w * demand * a.sqrt() * slot_gain(model, i, j) / a;
        }
    }
    (u, bound)
}

/// Upper bound on [`asymptotic_utility`]: strict whenever some bought state
/// faces a positive penalty (`d*_j > sqrt(alpha) h_jj`).
pub fn revenue_upper_bound(r: &ReportPolicy, pi: f64, model: &MarketModel) -> Result<f64> {
    let fp = fixed_points(r, pi, model)?;
    Ok(revenue_from(&fp, r, pi, model).1)
}

/// Revenue rate of the truthful manufacturer, independent of `pi`.
pub fn truthful_utility(model: &MarketModel) -> f64 {
    sbe_dynamic(model).expected_u_m
}

/// Geometric scan `1, 2, 4, ... <= pi_max` for the first penalty pushing the
/// revenue of `r` below the truthful value, refined by bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategicThreshold {
    pub pi_bar: f64,
    /// `(pi, asymptotic utility)` at every scanned point.
    pub scan: Vec<(f64, f64)>,
    pub truthful_value: f64,
}

pub fn find_pi_bar_strategic(r: &ReportPolicy, model: &MarketModel, pi_max: f64) -> Result<StrategicThreshold> {
    r.check_dimension(model)?;
    if r.is_truthful() {
        return Err(Error::TruthfulPolicy);
    }
    if pi_max.is_nan() || pi_max < 1.0 {
        return Err(Error::Domain(format!("pi_max = {pi_max} must be at least 1")));
    }
    let target = truthful_utility(model);
    let below = |pi: f64| -> Result<(bool, f64)> {
        let u = asymptotic_utility(r, pi, model)?;
        Ok((u < target, u))
    };

    let mut scan = Vec::new();
    let mut prev = 0.0;
    let mut pi = 1.0;
    while pi <= pi_max * (1.0 + 1e-12) {
        let (ok, u) = below(pi)?;
        scan.push((pi, u));
        if ok {
            let (mut lo, mut hi) = (prev, pi);
            while hi - lo > 1e-3 {
                let mid = 0.5 * (lo + hi);
                if below(mid)?.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(StrategicThreshold { pi_bar: hi, scan, truthful_value: target });
        }
        prev = pi;
        pi *= 2.0;
    }
    Err(Error::ThresholdNotFound { pi_max })
}

/// Largest deviation from `16 alpha (h_jj h_ij - h_ii^2) = -(phi_j - phi_i)^2`
/// over all state pairs.
pub fn identity_check(model: &MarketModel) -> f64 {
    let h = h_matrix(model);
    let a = model.alpha();
    let n = model.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let lhs = 16.0 * a * (h[j][j] * h[i][j] - h[i][i] * h[i][i]);
            let d = model.phi(j) - model.phi(i);
            worst = worst.max((lhs + d * d).abs());
        }
    }
    worst
}

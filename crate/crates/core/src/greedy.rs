//! Punitive policy I against under-reporting manufacturers.
//!
//! The supplier adds a penalty proportional to the long-run deviation
//! `f(r)` between the true and the reported mean potential. In the limit game
//! the manufacturer's utility depends on `r` only through the slot gains
//! `h[i][j]` and `f(r)`, which makes an exhaustive search over a grid of
//! under-reporting policies cheap.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::misreport::{expected_deviation, PolicyClass, ReportPolicy};

/// Strictness margin for "truthful is the unique maximizer".
pub const STRICT_MARGIN: f64 = 1e-9;
/// Upper bound on enumerated grid policies.
pub const MAX_GRID_CANDIDATES: u64 = 50_000_000;

/// Slot gains `h[i][j] = (2 phi_i - phi_j - alpha (cm + cs)) / (4 sqrt(alpha))`:
/// the square root of the manufacturer's best-response utility when the true
/// potential is `phi_i`, the reported one is `phi_j`, and no penalty applies.
pub fn h_matrix(model: &MarketModel) -> Vec<Vec<f64>> {
    let n = model.len();
    (0..n).map(|i| (0..n).map(|j| slot_gain(model, i, j)).collect()).collect()
}

#[inline]
pub fn slot_gain(model: &MarketModel, i: usize, j: usize) -> f64 {
    (2.0 * model.phi(i) - model.phi(j) - model.viability_floor()) / (4.0 * model.alpha().sqrt())
}

/// Policy I quote for report `reported`: `q*(phi_j) + (pi / sqrt(alpha)) f`.
pub fn punitive_quote(reported: usize, pi: f64, f_value: f64, model: &MarketModel) -> f64 {
    model.equilibrium_quote(model.phi(reported)) + pi / model.alpha().sqrt() * f_value
}

/// Reduction of the slot gain caused by the policy I penalty.
///
/// Raising the quote by `(pi / sqrt(alpha)) f` lowers the manufacturer's
/// best-response demand by `sqrt(alpha) pi f / 2`, i.e. the slot gain by
/// `pi f / 2`.
#[inline]
pub fn gain_penalty(pi: f64, f_value: f64) -> f64 {
    0.5 * pi * f_value
}

/// Best-response utility in true state `i` after reporting `j`, facing the
/// policy I quote: `([h_ij - pi f / 2]^+)^2`.
pub fn conditional_utility(i: usize, j: usize, pi: f64, f_value: f64, model: &MarketModel) -> f64 {
    let g = (slot_gain(model, i, j) - gain_penalty(pi, f_value)).max(0.0);
    g * g
}

/// Snapshot of the policy I limit quantities for one `(r, pi)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIAnalysis {
    pub pi: f64,
    pub h: Vec<Vec<f64>>,
    pub f_value: f64,
}

impl PolicyIAnalysis {
    pub fn new(r: &ReportPolicy, pi: f64, model: &MarketModel) -> Result<Self> {
        r.check_dimension(model)?;
        Ok(Self { pi, h: h_matrix(model), f_value: expected_deviation(r, model) })
    }

    pub fn conditional(&self, i: usize, j: usize) -> f64 {
        let g = (self.h[i][j] - gain_penalty(self.pi, self.f_value)).max(0.0);
        g * g
    }
}

/// Manufacturer's limit utility under policy I when it reports with `r`.
pub fn partial_info_utility(r: &ReportPolicy, pi: f64, model: &MarketModel) -> Result<f64> {
    r.check_dimension(model)?;
    if !r.is_under_reporting() {
        return Err(Error::NotGreedy);
    }
    let h = h_matrix(model);
    let f = expected_deviation(r, model);
    Ok(utility_from_rows(r.rows(), &h, model.probs(), pi, f))
}

fn utility_from_rows(rows: &[Vec<f64>], h: &[Vec<f64>], sigma: &[f64], pi: f64, f: f64) -> f64 {
    let shift = gain_penalty(pi, f);
    let mut u = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let mut ui = 0.0;
        for j in 0..=i {
            let p = row[j];
            if p != 0.0 {
                let g = (h[i][j] - shift).max(0.0);
                ui += p * g * g;
            }
        }
        u += sigma[i] * ui;
    }
    u
}

/// Discretized set of under-reporting policies.
///
/// Row `i` puts a multiple of `step` on every `j < i` (total at most one) and
/// the remainder on the diagonal. Candidates are ordered lexicographically by
/// row choices; index 0 is the truthful policy.
#[derive(Debug, Clone)]
pub struct GreedyGrid {
    step: f64,
    rows: Vec<Vec<Vec<f64>>>,
    total: u64,
}

impl GreedyGrid {
    pub fn new(n_states: usize, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 0.5) {
            return Err(Error::Domain(format!("grid step {step} must lie in (0, 0.5]")));
        }
        if n_states > 6 && step < 0.1 {
            return Err(Error::GridTooLarge(format!(
                "{n_states} states at step {step}; use step >= 0.1 or at most 6 states"
            )));
        }
        let units = (1.0 / step + 1e-9).floor() as u64;
        let mut total: u64 = 1;
        for i in 0..n_states as u64 {
            total = total.saturating_mul(binomial(units + i, i));
            if total > MAX_GRID_CANDIDATES {
                return Err(Error::GridTooLarge(format!(
                    "more than {MAX_GRID_CANDIDATES} candidate policies ({n_states} states, step {step})"
                )));
            }
        }
        let rows = (0..n_states).map(|i| row_options(i, n_states, units, step)).collect();
        Ok(Self { step, rows, total })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    fn row_choice(&self, mut index: u64, out: &mut [usize]) {
        // last row varies fastest
        for i in (0..self.rows.len()).rev() {
            let k = self.rows[i].len() as u64;
            out[i] = (index % k) as usize;
            index /= k;
        }
    }

    /// Materializes candidate `index`.
    pub fn policy(&self, index: u64) -> ReportPolicy {
        let mut choice = vec![0; self.rows.len()];
        self.row_choice(index, &mut choice);
        let rows = choice.iter().enumerate().map(|(i, &c)| self.rows[i][c].clone()).collect();
        ReportPolicy::classify(rows).expect("grid rows are valid")
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for t in 0..k {
        acc = acc.saturating_mul(n - t) / (t + 1);
    }
    acc
}

fn row_options(i: usize, n: usize, units: u64, step: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut counts = vec![0u64; i];
    loop {
        let used: u64 = counts.iter().sum();
        if used <= units {
            let mut row = vec![0.0; n];
            let mut mass = 0.0;
            for (j, &c) in counts.iter().enumerate() {
                row[j] = c as f64 * step;
                mass += row[j];
            }
            let diag = 1.0 - mass;
            row[i] = if diag.abs() < 1e-12 { 0.0 } else { diag };
            if row[i] == 0.0 && mass != 1.0 {
                // absorb rounding so the row sums to one
                let last = counts.iter().rposition(|&c| c > 0).unwrap();
                row[last] += 1.0 - mass;
            }
            out.push(row);
        }
        // odometer over counts, skipping overflowing prefixes
        let mut pos = i;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            counts[pos] += 1;
            if counts.iter().sum::<u64>() <= units {
                break;
            }
            counts[pos] = 0;
        }
    }
}

/// Outcome of a truth-revelation check at one penalty level.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthCheck {
    pub pi: f64,
    pub truthful_value: f64,
    /// True iff every non-truthful grid policy is worse by more than [`STRICT_MARGIN`].
    pub truth_revealing: bool,
    /// Best non-truthful candidate (lowest grid index among ties).
    pub best_alternative: Option<ReportPolicy>,
    pub best_alternative_value: f64,
    pub candidates: u64,
}

/// Searches the grid of under-reporting policies for one that matches or
/// beats truthful reporting at penalty `pi`.
pub fn verify_truth_revealing(pi: f64, model: &MarketModel, grid_step: f64) -> Result<TruthCheck> {
    let grid = GreedyGrid::new(model.len(), grid_step)?;
    Ok(check_on_grid(pi, model, &grid))
}

pub fn check_on_grid(pi: f64, model: &MarketModel, grid: &GreedyGrid) -> TruthCheck {
    let h = h_matrix(model);
    let sigma = model.probs();
    let truthful_value: f64 = (0..model.len()).map(|i| sigma[i] * h[i][i].max(0.0).powi(2)).sum();
    let n = model.len();

    // per-row deviation contributions and slot gains are reused across candidates
    let row_dev: Vec<Vec<f64>> = grid
        .rows
        .iter()
        .enumerate()
        .map(|(i, opts)| {
            opts.iter()
                .map(|row| (0..=i).map(|j| sigma[i] * (model.phi(i) - model.phi(j)) * row[j]).sum())
                .collect()
        })
        .collect();

    let best = (1..grid.total)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |choice, idx| {
                grid.row_choice(idx, choice);
                let f: f64 = choice.iter().enumerate().map(|(i, &c)| row_dev[i][c]).sum();
                let shift = gain_penalty(pi, f);
                let mut u = 0.0;
                for (i, &c) in choice.iter().enumerate() {
                    let row = &grid.rows[i][c];
                    let mut ui = 0.0;
                    for j in 0..=i {
                        if row[j] != 0.0 {
                            let g = (h[i][j] - shift).max(0.0);
                            ui += row[j] * g * g;
                        }
                    }
                    u += sigma[i] * ui;
                }
                (u, idx)
            },
        )
        .reduce_with(|a, b| {
            if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                a
            } else {
                b
            }
        });

    match best {
        Some((value, idx)) => TruthCheck {
            pi,
            truthful_value,
            truth_revealing: value < truthful_value - STRICT_MARGIN,
            best_alternative: Some(grid.policy(idx)),
            best_alternative_value: value,
            candidates: grid.total,
        },
        None => TruthCheck {
            pi,
            truthful_value,
            truth_revealing: true,
            best_alternative: None,
            best_alternative_value: f64::NEG_INFINITY,
            candidates: grid.total,
        },
    }
}

/// Result of the empirical threshold scan.
#[derive(Debug, Clone)]
pub struct PiBarSearch {
    pub pi_bar: f64,
    pub scan: Vec<TruthCheck>,
    /// Re-verification at `pi_bar` and `2 pi_bar`.
    pub verified_at_pi_bar: bool,
    pub verified_at_double: bool,
}

/// Smallest scanned penalty from which truthful reporting stays the unique
/// best grid response for every larger scanned penalty up to `pi_max`.
/// The scan visits `pi_step, 2 pi_step, ...` up to `pi_max`.
pub fn find_pi_bar(model: &MarketModel, grid_step: f64, pi_max: f64, pi_step: f64) -> Result<PiBarSearch> {
    if !(pi_step > 0.0 && pi_max >= pi_step) {
        return Err(Error::Domain(format!("need 0 < pi_step <= pi_max (got {pi_step}, {pi_max})")));
    }
    let grid = GreedyGrid::new(model.len(), grid_step)?;
    let count = (pi_max / pi_step + 1e-9).floor() as usize;
    let scan: Vec<TruthCheck> = (1..=count).map(|k| check_on_grid(k as f64 * pi_step, model, &grid)).collect();

    let first_of_tail = scan.iter().rposition(|c| !c.truth_revealing).map_or(0, |k| k + 1);
    if first_of_tail >= scan.len() {
        return Err(Error::ThresholdNotFound { pi_max });
    }
    let pi_bar = scan[first_of_tail].pi;
    let verified_at_pi_bar = check_on_grid(pi_bar, model, &grid).truth_revealing;
    let verified_at_double = check_on_grid(2.0 * pi_bar, model, &grid).truth_revealing;
    Ok(PiBarSearch { pi_bar, scan, verified_at_pi_bar, verified_at_double })
}

/// Convenience for building the under-reporting policy with a common
/// probability `x` of reporting the lowest state from every higher state.
pub fn report_lowest_policy(n_states: usize, x: f64) -> Result<ReportPolicy> {
    let rows = (0..n_states)
        .map(|i| {
            let mut row = vec![0.0; n_states];
            if i == 0 {
                row[0] = 1.0;
            } else {
                row[0] = x;
                row[i] = 1.0 - x;
            }
            row
        })
        .collect();
    ReportPolicy::new(rows, PolicyClass::Greedy)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::market::{best_response_price, raw_demand, sbe_dynamic};
    use proptest::prelude::*;

    fn ex1() -> MarketModel {
        MarketModel::three_state_example()
    }

    fn greedy(rows: Vec<Vec<f64>>) -> ReportPolicy {
        ReportPolicy::new(rows, PolicyClass::Greedy).unwrap()
    }

    #[test]
    fn h_values() {
        let h = h_matrix(&ex1());
        assert!((h[1][1] - 50.0 / (4.0 * 0.5f64.sqrt())).abs() < 1e-12);
        assert!((h[1][1] - 17.677_669_529_663_69).abs() < 1e-9);
        assert!((h[2][0] - 38.890_872_965_260_11).abs() < 1e-9);
        let m = ex1();
        for i in 0..3 {
            let d = (m.phi(i) - m.viability_floor()) / (4.0 * 0.5f64.sqrt());
            assert!((h[i][i] - d).abs() < 1e-12);
            assert!(h[i][i] > 0.0);
        }
    }

    #[test]
    fn h_monotonicity() {
        let h = h_matrix(&ex1());
        for j in 0..3 {
            for i in 1..3 {
                assert!(h[i][j] > h[i - 1][j]);
                assert!(h[j][i] < h[j][i - 1]);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!(h[i][j] <= h[2][0]);
            }
        }
    }

    #[test]
    fn quote_examples() {
        let m = ex1();
        assert_eq!(punitive_quote(1, 5.0, 0.0, &m), 60.0);
        assert!((punitive_quote(1, 5.0, 11.0, &m) - 137.781_745_930_520_2).abs() < 1e-9);
        assert!(punitive_quote(1, 6.0, 11.0, &m) > punitive_quote(1, 5.0, 11.0, &m));
    }

    #[test]
    fn conditional_utility_examples() {
        let m = ex1();
        assert!((conditional_utility(1, 1, 3.0, 0.0, &m) - 312.5).abs() < 1e-9);
        let h20 = slot_gain(&m, 2, 0);
        assert_eq!(conditional_utility(2, 0, 2.0, h20, &m), 0.0);
    }

    #[test]
    fn conditional_utility_matches_brute_force_best_response() {
        let m = ex1();
        for &(i, j, pi, f) in &[(1usize, 1usize, 0.0, 0.0), (2, 0, 1.0, 11.0), (2, 1, 0.5, 3.0), (1, 0, 5.0, 2.0), (0, 0, 2.0, 12.0)] {
            let q = punitive_quote(j, pi, f, &m);
            let phi = m.phi(i);
            let hi = phi / m.alpha();
            let step = 1e-4;
            let mut best: f64 = 0.0;
            let mut p = 0.0;
            while p <= hi {
                best = best.max(raw_demand(p, phi, m.alpha()) * (p - q - m.cm()));
                p += step;
            }
            let c = conditional_utility(i, j, pi, f, &m);
            assert!((c - best).abs() < 1e-3, "C({i},{j}) = {c} vs grid {best}");
            let pb = best_response_price(phi, q, &m);
            let exact = raw_demand(pb, phi, m.alpha()) * (pb - q - m.cm());
            assert!((c - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn partial_info_truthful_is_pi_invariant() {
        let m = ex1();
        let target = sbe_dynamic(&m).expected_u_m;
        let id = ReportPolicy::identity(3);
        for pi in [0.0, 1.0, 5.0, 10.0, 100.0] {
            assert!((partial_info_utility(&id, pi, &m).unwrap() - target).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_info_examples() {
        let m = ex1();
        let h = h_matrix(&m);
        let r31 = greedy(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let want = 0.2 * h[0][0].powi(2) + 0.5 * h[1][1].powi(2) + 0.3 * h[2][0].powi(2);
        assert!((partial_info_utility(&r31, 0.0, &m).unwrap() - want).abs() < 1e-10);

        // penalty beyond the largest gain wipes every term
        let r = greedy(vec![vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0], vec![0.5, 0.0, 0.5]]);
        let f = expected_deviation(&r, &m);
        let pi = 2.0 * h[2][0] / f + 1.0;
        assert_eq!(partial_info_utility(&r, pi, &m).unwrap(), 0.0);

        let general = ReportPolicy::new(
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            PolicyClass::General,
        )
        .unwrap();
        assert!(matches!(partial_info_utility(&general, 1.0, &m), Err(Error::NotGreedy)));
    }

    #[test]
    fn grid_enumeration_counts() {
        let g = GreedyGrid::new(3, 0.1).unwrap();
        assert_eq!(g.len(), 11 * 66);
        assert!(g.policy(0).is_truthful());
        let g = GreedyGrid::new(3, 0.25).unwrap();
        assert_eq!(g.len(), 5 * 15);
        for k in 0..g.len() {
            let p = g.policy(k);
            assert!(p.is_under_reporting());
        }
        assert!(GreedyGrid::new(7, 0.05).is_err());
        assert!(GreedyGrid::new(3, 0.0).is_err());
        assert!(GreedyGrid::new(3, 0.6).is_err());
        // steps not dividing one leave the remainder on the diagonal
        let g = GreedyGrid::new(2, 0.3).unwrap();
        assert_eq!(g.len(), 4);
        assert!((g.policy(3).prob(1, 1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn truth_revealing_examples() {
        let m = ex1();
        let strong = verify_truth_revealing(10.0, &m, 0.1).unwrap();
        assert!(strong.truth_revealing);
        let weak = verify_truth_revealing(1.0, &m, 0.1).unwrap();
        assert!(!weak.truth_revealing);
        assert!(weak.best_alternative.unwrap().is_under_reporting());
        assert!(weak.best_alternative_value > weak.truthful_value);
        let none = verify_truth_revealing(0.0, &m, 0.1).unwrap();
        assert!(!none.truth_revealing);
    }

    #[test]
    fn pi_bar_search() {
        let m = ex1();
        let s = find_pi_bar(&m, 0.1, 20.0, 0.5).unwrap();
        assert!(s.pi_bar > 1.0 && s.pi_bar <= 10.0, "pi_bar = {}", s.pi_bar);
        assert!(s.verified_at_pi_bar && s.verified_at_double);

        let single = MarketModel::new(0.5, 10.0, 10.0, vec![60.0], vec![1.0]).unwrap();
        let s = find_pi_bar(&single, 0.1, 5.0, 0.5).unwrap();
        assert_eq!(s.pi_bar, 0.5);

        assert!(matches!(find_pi_bar(&m, 0.1, 1.0, 0.5), Err(Error::ThresholdNotFound { .. })));
    }

    #[test]
    fn grid_search_agrees_with_direct_evaluation() {
        let m = ex1();
        let g = GreedyGrid::new(3, 0.25).unwrap();
        let c = check_on_grid(2.0, &m, &g);
        let direct = (1..g.len())
            .map(|k| partial_info_utility(&g.policy(k), 2.0, &m).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((c.best_alternative_value - direct).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn conditional_non_increasing_in_pi(i in 0usize..3, j in 0usize..3, pi in 0.0f64..20.0, dpi in 0.0f64..20.0, f in 0.0f64..20.0) {
            let m = ex1();
            prop_assert!(conditional_utility(i, j, pi + dpi, f, &m) <= conditional_utility(i, j, pi, f, &m));
        }
    }
}

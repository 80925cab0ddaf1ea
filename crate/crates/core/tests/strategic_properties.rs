use proptest::prelude::*;

use punitive_core::strategic::{
    asymptotic_utility, closed_form_attractor, fixed_point, ode_rhs, revenue_upper_bound, truthful_demand,
    truthful_utility,
};
use punitive_core::{sbe_dynamic, MarketModel, PolicyClass, ReportPolicy};

fn arb_model() -> impl Strategy<Value = MarketModel> {
    (2usize..=5)
        .prop_flat_map(|n| {
            (
                0.05f64..=1.0,
                0.0f64..20.0,
                0.0f64..20.0,
                prop::collection::vec(0.5f64..30.0, n),
                prop::collection::vec(0.05f64..1.0, n),
            )
        })
        .prop_map(|(alpha, cs, cm, gaps, weights)| {
            let mut phi = alpha * (cs + cm);
            let support = gaps
                .iter()
                .map(|g| {
                    phi += g;
                    phi
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let tail: f64 = probs[1..].iter().sum();
            probs[0] = 1.0 - tail;
            MarketModel::new(alpha, cs, cm, support, probs).unwrap()
        })
}

/// Model with a general policy whose rows all have full support.
fn arb_case() -> impl Strategy<Value = (MarketModel, ReportPolicy)> {
    arb_model().prop_flat_map(|m| {
        let n = m.len();
        let rows = prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n);
        (Just(m), rows).prop_map(|(m, rows)| {
            let rows = rows
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|x| x / s).collect()
                })
                .collect();
            (m, ReportPolicy::new(rows, PolicyClass::General).unwrap())
        })
    })
}

/// Under-reporting policy (zero mass above the diagonal) with positive
/// mass on every allowed entry.
fn arb_greedy_case() -> impl Strategy<Value = (MarketModel, ReportPolicy)> {
    arb_case().prop_map(|(m, r)| {
        let rows = r
            .rows()
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row[..=i].iter().sum();
                (0..row.len()).map(|j| if j <= i { row[j] / s } else { 0.0 }).collect()
            })
            .collect();
        (m, ReportPolicy::new(rows, PolicyClass::Greedy).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn drift_decreasing_with_unique_root((m, r) in arb_case(), log_pi in -2.0f64..3.0, pick in 0usize..100) {
        let pi = 10f64.powf(log_pi);
        let j = pick % m.len();
        let top = m.phi(m.len() - 1);
        let g: Vec<f64> = (0..=200).map(|k| ode_rhs(top * k as f64 / 200.0, j, &r, pi, &m).unwrap()).collect();
        prop_assert!(g[0] > 0.0);
        prop_assert!(g[200] < 0.0);
        prop_assert!(g.windows(2).all(|w| w[1] < w[0]));
        let fp = fixed_point(j, &r, pi, &m).unwrap();
        prop_assert!(fp.residual < 1e-10);
        prop_assert!((fp.d_star - fp.closed_form).abs() < 1e-8);
        prop_assert!((fp.closed_form - closed_form_attractor(j, fp.n_index, &r, pi, &m)).abs() < 1e-15);
    }

    #[test]
    fn truthful_limit_is_penalty_free(m in arb_model(), log_pi in -2.0f64..4.0) {
        let pi = 10f64.powf(log_pi);
        let r = ReportPolicy::identity(m.len());
        let u = asymptotic_utility(&r, pi, &m).unwrap();
        let target = sbe_dynamic(&m).expected_u_m;
        prop_assert!((u - target).abs() < 1e-10 * target.max(1.0));
        prop_assert!((truthful_utility(&m) - target).abs() < 1e-12 * target.max(1.0));
        for j in 0..m.len() {
            let d = fixed_point(j, &r, pi, &m).unwrap().d_star;
            prop_assert!((d - truthful_demand(j, &m)).abs() < 1e-9 * d.max(1.0));
        }
    }

    #[test]
    fn attractors_approach_truthful_demand((m, r) in arb_case(), pick in 0usize..100) {
        let j = pick % m.len();
        let target = truthful_demand(j, &m);
        let gaps: Vec<f64> = [10.0, 1e2, 1e3, 1e4]
            .iter()
            .map(|&pi| (fixed_point(j, &r, pi, &m).unwrap().d_star - target).abs())
            .collect();
        prop_assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gaps:?}");
    }

    #[test]
    fn revenue_below_unpenalized_bound((m, r) in arb_greedy_case(), log_pi in -1.0f64..3.0) {
        let pi = 10f64.powf(log_pi);
        let gaps: Vec<f64> = (0..m.len())
            .map(|j| fixed_point(j, &r, pi, &m).unwrap().d_star - truthful_demand(j, &m))
            .collect();
        // under-reporting never pushes an average below its truthful level
        prop_assert!(gaps.iter().all(|g| *g >= -1e-9), "{gaps:?}");
        prop_assume!(gaps.iter().any(|g| *g > 1e-9));
        let u = asymptotic_utility(&r, pi, &m).unwrap();
        let bound = revenue_upper_bound(&r, pi, &m).unwrap();
        prop_assert!(u < bound, "u = {u}, bound = {bound}");
    }
}

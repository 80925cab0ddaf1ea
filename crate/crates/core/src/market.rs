//! Economy primitives and perfect-information Stackelberg equilibria.
//!
//! The supplier (leader) quotes a raw-material price `q`, the manufacturer
//! (follower) answers with a selling price `p`, and the market attracts the
//! linear demand `(phi - alpha * p)^+` out of the potential `phi`.

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Costs, price sensitivity and the finite distribution of market potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    alpha: f64,
    cs: f64,
    cm: f64,
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl MarketModel {
    /// Builds a model, requiring `support[0] > alpha * (cs + cm)`.
    pub fn new(alpha: f64, cs: f64, cm: f64, support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let model = Self::build(alpha, cs, cm, support, probs)?;
        let floor = model.viability_floor();
        if model.support[0] <= floor {
            return Err(Error::Assumption { phi_min: model.support[0], floor });
        }
        Ok(model)
    }

    /// Like [`MarketModel::new`] but accepts a lowest potential sitting exactly
    /// on the viability floor, where that state yields zero equilibrium margin.
    pub fn with_boundary(
        alpha: f64,
        cs: f64,
        cm: f64,
        support: Vec<f64>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let model = Self::build(alpha, cs, cm, support, probs)?;
        let floor = model.viability_floor();
        if model.support[0] < floor {
            return Err(Error::Assumption { phi_min: model.support[0], floor });
        }
        Ok(model)
    }

    fn build(alpha: f64, cs: f64, cm: f64, support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid_model("alpha", format!("alpha = {alpha} must lie in (0, 1]")));
        }
        for (field, cost) in [("cs", cs), ("cm", cm)] {
            if !(cost.is_finite() && cost >= 0.0) {
                return Err(Error::invalid_model(field, format!("{field} = {cost} must be finite and nonnegative")));
            }
        }
        if support.is_empty() {
            return Err(Error::invalid_model("support", "support is empty".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::invalid_model("probs", format!(
                "support has {} values but probs has {}",
                support.len(),
                probs.len()
            )));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid_model("support", "support contains a non-finite value".into()));
        }
        if let Some(w) = support.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::invalid_model("support", format!(
                "support must be strictly increasing (positions {} and {})",
                w + 1,
                w + 2
            )));
        }
        if let Some(i) = probs.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::invalid_model("probs", format!("probs[{}] = {} must lie in (0, 1]", i + 1, probs[i])));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::invalid_model("probs", format!("probs sum to {total}, expected 1")));
        }
        Ok(Self { alpha, cs, cm, support, probs })
    }

    /// Three potentials {40, 60, 80} with probabilities {0.2, 0.5, 0.3},
    /// `cs = cm = 10`, `alpha = 0.5`.
    pub fn three_state_example() -> Self {
        Self::new(0.5, 10.0, 10.0, vec![40.0, 60.0, 80.0], vec![0.2, 0.5, 0.3])
            .expect("reference model is valid")
    }

    /// Five potentials {10, 40, 60, 70, 80} with probabilities
    /// {0.1, 0.2, 0.3, 0.2, 0.2} and the same costs. The lowest state sits on
    /// the viability floor.
    pub fn five_state_example() -> Self {
        Self::with_boundary(
            0.5,
            10.0,
            10.0,
            vec![10.0, 40.0, 60.0, 70.0, 80.0],
            vec![0.1, 0.2, 0.3, 0.2, 0.2],
        )
        .expect("reference model is valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cs(&self) -> f64 {
        self.cs
    }

    pub fn cm(&self) -> f64 {
        self.cm
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of potential states.
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn phi(&self, i: usize) -> f64 {
        self.support[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// `alpha * (cs + cm)`: potentials at or below this make the chain unprofitable.
    pub fn viability_floor(&self) -> f64 {
        self.alpha * (self.cs + self.cm)
    }

    /// Expected market potential.
    pub fn mean_potential(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(phi, s)| phi * s).sum()
    }

    /// Equilibrium raw-material price for a (reported) potential.
    pub fn equilibrium_quote(&self, phi: f64) -> f64 {
        (phi + self.alpha * (self.cs - self.cm)) / (2.0 * self.alpha)
    }
}

fn check_price(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} must be finite and nonnegative")))
    }
}

/// Demand attracted at selling price `p`: `(phi - alpha p)^+`.
pub fn demand(p: f64, phi: f64, alpha: f64) -> Result<f64> {
    check_price("price", p)?;
    if !(phi.is_finite() && phi > 0.0) {
        return Err(Error::Domain(format!("potential = {phi} must be positive")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    Ok(raw_demand(p, phi, alpha))
}

#[inline]
pub(crate) fn raw_demand(p: f64, phi: f64, alpha: f64) -> f64 {
    (phi - alpha * p).max(0.0)
}

pub fn manufacturer_utility(p: f64, q: f64, phi: f64, model: &MarketModel) -> Result<f64> {
    check_price("quote", q)?;
    Ok(demand(p, phi, model.alpha)? * (p - q - model.cm))
}

pub fn supplier_utility(p: f64, q: f64, phi: f64, model: &MarketModel) -> Result<f64> {
    check_price("quote", q)?;
    Ok(demand(p, phi, model.alpha)? * (q - model.cs))
}

/// Manufacturer's optimal selling price against quote `q`.
///
/// The interior optimum `(phi + alpha (q + cm)) / (2 alpha)` is used when it
/// leaves a positive margin. When `phi <= alpha (q + cm)` no price earns a
/// positive margin and the market is shut with `p = phi / alpha`. A negative
/// interior optimum (possible only for negative quotes) is clamped to zero.
pub fn best_response_price(phi: f64, q: f64, model: &MarketModel) -> f64 {
    let a = model.alpha;
    if phi <= a * (q + model.cm) {
        phi / a
    } else {
        ((phi + a * (q + model.cm)) / (2.0 * a)).max(0.0)
    }
}

/// One-shot Stackelberg equilibrium for a known potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageEquilibrium {
    pub p_star: f64,
    pub q_star: f64,
    pub u_m: f64,
    pub u_s: f64,
}

pub fn sbe_single(phi: f64, model: &MarketModel) -> Result<StageEquilibrium> {
    let floor = model.viability_floor();
    if phi.is_nan() || phi <= floor {
        return Err(Error::Assumption { phi_min: phi, floor });
    }
    Ok(stage_equilibrium(phi, model))
}

fn stage_equilibrium(phi: f64, model: &MarketModel) -> StageEquilibrium {
    let a = model.alpha;
    let q_star = model.equilibrium_quote(phi);
    let p_star = (phi + a * (q_star + model.cm)) / (2.0 * a);
    let margin = phi - model.viability_floor();
    let u_m = margin * margin / (16.0 * a);
    StageEquilibrium { p_star, q_star, u_m, u_s: 2.0 * u_m }
}

/// Per-state equilibrium of the dynamic game with perfect information.
#[derive(Debug, Clone, PartialEq)]
pub struct SbeOutcome {
    pub p_star: Vec<f64>,
    pub q_star: Vec<f64>,
    pub u_m: Vec<f64>,
    pub u_s: Vec<f64>,
    pub expected_u_m: f64,
    pub expected_u_s: f64,
}

/// Applies the one-shot equilibrium to every state and averages under the
/// potential distribution. A boundary state (potential on the floor) gets
/// zero utilities.
pub fn sbe_dynamic(model: &MarketModel) -> SbeOutcome {
    let stages: Vec<StageEquilibrium> = model.support.iter().map(|&phi| stage_equilibrium(phi, model)).collect();
    let expected_u_m = stages.iter().zip(&model.probs).map(|(s, p)| p * s.u_m).sum();
    let expected_u_s = stages.iter().zip(&model.probs).map(|(s, p)| p * s.u_s).sum();
    SbeOutcome {
        p_star: stages.iter().map(|s| s.p_star).collect(),
        q_star: stages.iter().map(|s| s.q_star).collect(),
        u_m: stages.iter().map(|s| s.u_m).collect(),
        u_s: stages.iter().map(|s| s.u_s).collect(),
        expected_u_m,
        expected_u_s,
    }
}

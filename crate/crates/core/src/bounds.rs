//! Evaluation of the finite-sample bounds for averaged projected SGD under
//! mixing data, and the GTD value-error orders derived from them.

use crate::error::{Error, Result};
use crate::saddle::StepSchedule;

/// Inputs shared by the high-probability and expectation bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Diameter `D` of the product domain.
    pub diameter: f64,
    pub l1: f64,
    pub l2: f64,
    pub schedule: StepSchedule,
    pub horizon: usize,
    /// Mixing time `τ(η)`; zero for i.i.d. data.
    pub tau: usize,
    pub eta: f64,
    pub delta: f64,
    /// Largest step size; [`BoundInputs::new`] takes the schedule's first step.
    pub alpha0: f64,
}

impl BoundInputs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(diameter: f64, l1: f64, l2: f64, schedule: StepSchedule, horizon: usize, tau: usize, eta: f64, delta: f64) -> Self {
        Self { diameter, l1, l2, schedule, horizon, tau, eta, delta, alpha0: schedule.initial() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("D", self.diameter), ("L1", self.l1), ("L2", self.l2), ("alpha0", self.alpha0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if 2 * self.tau > self.horizon {
            return Err(Error::Precondition(format!("mixing time {} exceeds half the horizon {}", self.tau, self.horizon)));
        }
        Ok(())
    }
}

/// `A = D²`, `B = 2.5 L₁²`, `C = 6 L₁² + 2 L₁ L₂ D`, `F = 2 L₁ D`, `H = 6 L₁ D α₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub f: f64,
    pub h: f64,
}

impl BoundConstants {
    pub fn new(diameter: f64, l1: f64, l2: f64, alpha0: f64) -> Self {
        Self {
            a: diameter * diameter,
            b: 2.5 * l1 * l1,
            c: 6.0 * l1 * l1 + 2.0 * l1 * l2 * diameter,
            f: 2.0 * l1 * diameter,
            h: 6.0 * l1 * diameter * alpha0,
        }
    }
}

/// Additive terms of the bracket, before division by `Σα_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub constants: BoundConstants,
    pub step_sum: f64,
    pub step_sq_sum: f64,
    pub initial: f64,
    pub variance: f64,
    pub mixing: f64,
    pub bias: f64,
    pub burn_in: f64,
    /// `8 D L₁ √(2τ log(τ/δ)(Σα² + τα₀))`; zero when `τ = 0`.
    pub deviation: f64,
}

impl BoundTerms {
    pub fn lemma1(&self) -> f64 {
        (self.initial + self.variance + self.mixing + self.bias + self.burn_in) / self.step_sum
    }

    pub fn theorem1(&self) -> f64 {
        self.lemma1() + self.deviation / self.step_sum
    }
}

pub fn bound_terms(inputs: &BoundInputs) -> Result<BoundTerms> {
    inputs.validate()?;
    let k = BoundConstants::new(inputs.diameter, inputs.l1, inputs.l2, inputs.alpha0);
    let sums = inputs.schedule.sums(inputs.horizon);
    let tau = inputs.tau as f64;
    let deviation = if inputs.tau == 0 {
        0.0
    } else {
        let log = (tau / inputs.delta).ln();
        8.0 * inputs.diameter * inputs.l1 * (2.0 * tau * log * (sums.sum_sq + tau * inputs.alpha0)).sqrt()
    };
    Ok(BoundTerms {
        constants: k,
        step_sum: sums.sum,
        step_sq_sum: sums.sum_sq,
        initial: k.a,
        variance: k.b * sums.sum_sq,
        mixing: k.c * tau * sums.sum_sq,
        bias: k.f * inputs.eta * sums.sum,
        burn_in: k.h * tau,
        deviation,
    })
}

/// High-probability bound on the primal-dual gap of the averaged iterate.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<f64> {
    Ok(bound_terms(inputs)?.theorem1())
}

/// Bound on the expected primal-dual gap of the averaged iterate.
pub fn lemma1_bound(inputs: &BoundInputs) -> Result<f64> {
    Ok(bound_terms(inputs)?.lemma1())
}

/// Problem constants entering the GTD bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtdConstants {
    pub gamma: f64,
    pub rho_max: f64,
    /// Feature bound `L`.
    pub feature_bound: f64,
    pub dim: usize,
    pub reward_max: f64,
    /// Largest singular value of `M`.
    pub lambda_m: f64,
    /// Largest singular value of `C`.
    pub lambda_c: f64,
    /// Smallest eigenvalue of `C`.
    pub nu_c: f64,
    /// Smallest eigenvalue of `AᵀM⁻¹A`.
    pub nu_atma: f64,
    pub pi_max: f64,
}

/// Lipschitz and smoothness coefficients of the GTD saddle gradient:
///
/// `L₁ = √2 (2D(1+γ)ρ_max L² d + ρ_max L R_max + λ_M)`,
/// `L₂ = √2 (2(1+γ)ρ_max L² d + λ_M)`.
pub fn proposition1_constants(k: &GtdConstants, diameter: f64) -> (f64, f64) {
    let a_term = (1.0 + k.gamma) * k.rho_max * k.feature_bound.powi(2) * k.dim as f64;
    let l1 = std::f64::consts::SQRT_2 * (2.0 * diameter * a_term + k.rho_max * k.feature_bound * k.reward_max + k.lambda_m);
    let l2 = std::f64::consts::SQRT_2 * (2.0 * a_term + k.lambda_m);
    (l1, l2)
}

/// `o₁(T) = Σα²/Σα`.
pub fn o1(schedule: &StepSchedule, horizon: usize) -> f64 {
    let s = schedule.sums(horizon);
    s.sum_sq / s.sum
}

/// `o₂(T) = √(Σα²)/Σα`.
pub fn o2(schedule: &StepSchedule, horizon: usize) -> f64 {
    let s = schedule.sums(horizon);
    s.sum_sq.sqrt() / s.sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderKind {
    Expectation,
    HighProbability,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderValue {
    pub value: f64,
    pub o1: f64,
    pub o2: f64,
}

/// Value-error order expressions for GTD with the hidden absolute constant
/// set to 1. These are orders, not bounds.
///
/// On-policy, expectation: `L √(L⁴ d³ λ_M π_max (1+τ) π_max o₁) / ν_C`; the
/// repeated `π_max` is kept as stated.
pub fn theorem2_order(
    k: &GtdConstants,
    schedule: &StepSchedule,
    horizon: usize,
    tau: usize,
    delta: f64,
    policy: crate::gtd::PolicyMode,
    kind: OrderKind,
) -> Result<OrderValue> {
    use crate::gtd::PolicyMode;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let (o1, o2) = (o1(schedule, horizon), o2(schedule, horizon));
    let (l, d) = (k.feature_bound, k.dim as f64);
    let t = tau as f64;
    let mix = 1.0 + t;
    let dev = if tau == 0 { 0.0 } else { (t * (t / delta).ln()).sqrt() * o2 };
    let value = match (policy, kind) {
        (PolicyMode::OnPolicy, OrderKind::Expectation) => {
            l * (l.powi(4) * d.powi(3) * k.lambda_m * k.pi_max * mix * k.pi_max * o1).sqrt() / k.nu_c
        }
        (PolicyMode::OnPolicy, OrderKind::HighProbability) => {
            (l.powi(4) * d * d * k.lambda_m * k.pi_max).sqrt() / k.nu_c * (mix * l * l * d * o1 + dev).sqrt()
        }
        (PolicyMode::OffPolicy, OrderKind::Expectation) => {
            l * l * d * (2.0 * k.lambda_c * k.lambda_m * k.pi_max * mix * o1).sqrt() / k.nu_atma
        }
        (PolicyMode::OffPolicy, OrderKind::HighProbability) => {
            (2.0 * k.lambda_c * k.lambda_m * k.pi_max).sqrt() / k.nu_atma * (l.powi(4) * d * d * mix * o1 + dev).sqrt()
        }
    };
    Ok(OrderValue { value, o1, o2 })
}

/// `η ∈ {2⁻¹, …, 2⁻²⁰}`.
pub fn eta_grid() -> Vec<f64> {
    (1..=20).map(|k| 0.5f64.powi(k)).collect()
}

/// How the data source mixes, for choosing `η`.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingProfile {
    /// i.i.d. data: `τ(η) = 0` for every `η ≥ 0`.
    Iid,
    /// `curve[Δ] = max_s ‖P^Δ(s,·) − π‖₁`.
    Curve(Vec<f64>),
}

impl MixingProfile {
    pub fn tau(&self, eta: f64) -> Option<usize> {
        match self {
            MixingProfile::Iid => Some(0),
            MixingProfile::Curve(c) => c.iter().position(|&d| d <= eta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestBound {
    pub value: f64,
    pub eta: f64,
    pub tau: usize,
    pub terms: BoundTerms,
}

/// Minimizes the expectation (or high-probability) bound over the `η` grid, using only
/// `η` whose mixing time satisfies `τ(η) ≤ T/2`. i.i.d. data uses `η = 0`.
pub fn best_over_eta(template: &BoundInputs, profile: &MixingProfile, high_probability: bool) -> Result<BestBound> {
    let etas = match profile {
        MixingProfile::Iid => vec![0.0],
        MixingProfile::Curve(_) => eta_grid(),
    };
    let mut best: Option<BestBound> = None;
    for eta in etas {
        let Some(tau) = profile.tau(eta) else { continue };
        if 2 * tau > template.horizon {
            continue;
        }
        let terms = bound_terms(&BoundInputs { tau, eta, ..*template })?;
        let value = if high_probability { terms.theorem1() } else { terms.lemma1() };
        if best.is_none_or(|b| value < b.value) {
            best = Some(BestBound { value, eta, tau, terms });
        }
    }
    best.ok_or_else(|| Error::Precondition(format!("no η on the grid has τ(η) ≤ T/2 = {}", template.horizon / 2)))
}

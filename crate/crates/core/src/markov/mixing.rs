//! Mixing-time measurement in the L1 (twice total-variation) distance.

use nalgebra::DMatrix;

use super::chain::FiniteChain;
use super::spectral::second_eigenvalue_modulus;
use crate::error::{Error, Result};

pub const DEFAULT_LAG_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub second_eigenvalue_modulus: f64,
    /// `tv_curve[Δ] = max_s ‖P^Δ(s,·) − π‖₁` for `Δ = 0, 1, …`.
    pub tv_curve: Vec<f64>,
    /// `(η, τ(η))` in the order requested.
    pub taus: Vec<(f64, usize)>,
    pub warnings: Vec<String>,
}

impl MixingReport {
    pub fn tau(&self, eta: f64) -> Option<usize> {
        self.taus.iter().find(|(e, _)| *e == eta).map(|&(_, t)| t)
    }
}

/// Worst-case L1 distance to stationarity over start states.
pub fn max_l1_distance(power: &DMatrix<f64>, chain: &FiniteChain) -> f64 {
    let pi = chain.stationary();
    power
        .row_iter()
        .map(|row| row.iter().zip(pi.iter()).map(|(p, q)| (p - q).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn mixing_time(chain: &FiniteChain, etas: &[f64]) -> Result<MixingReport> {
    mixing_time_capped(chain, etas, DEFAULT_LAG_CAP)
}

/// `τ(η) = min{Δ : max_s ‖P^Δ(s,·) − π‖₁ ≤ η}` for every requested `η`,
/// by forming successive powers of `P` until the smallest `η` is reached.
pub fn mixing_time_capped(chain: &FiniteChain, etas: &[f64], cap: usize) -> Result<MixingReport> {
    if let Some(&bad) = etas.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("mixing level must be a nonnegative real, got {bad}")));
    }
    let modulus = second_eigenvalue_modulus(chain)?;
    if modulus >= 1.0 - 1e-12 {
        return Err(Error::NotErgodic { modulus });
    }
    let target = etas.iter().copied().fold(f64::INFINITY, f64::min);
    let n = chain.states();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut curve = vec![max_l1_distance(&power, chain)];
    let mut warnings = Vec::new();
    while curve[curve.len() - 1] > target {
        let lag = curve.len();
        if lag > cap {
            return Err(Error::MixingTooSlow { cap, eta: target, distance: curve[lag - 1], partial: curve });
        }
        power = &power * chain.transition();
        let d = max_l1_distance(&power, chain);
        if d > curve[lag - 1] * (1.0 + 1e-12) + 1e-15 {
            warnings.push(format!("distance increased at lag {lag}: {:e} -> {d:e}", curve[lag - 1]));
        }
        curve.push(d);
    }
    let taus = etas
        .iter()
        .map(|&eta| (eta, curve.iter().position(|&d| d <= eta).expect("curve extended to smallest eta")))
        .collect();
    Ok(MixingReport { second_eigenvalue_modulus: modulus, tv_curve: curve, taus, warnings })
}

/// `max_s ‖P^Δ(s,·) − π‖₁ = 2·max(π₁, π₂)·|1 − p − q|^Δ` for the chain
/// `[[1−p, p], [q, 1−q]]`.
pub fn two_state_distance(p: f64, q: f64, lag: usize) -> f64 {
    let pi_max = p.max(q) / (p + q);
    if lag == 0 {
        return 2.0 * pi_max;
    }
    2.0 * pi_max * (1.0 - p - q).abs().powi(lag as i32)
}

pub fn two_state_tau(p: f64, q: f64, eta: f64) -> usize {
    (0..).find(|&lag| two_state_distance(p, q, lag) <= eta).expect("distance decays geometrically")
}

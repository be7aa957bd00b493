//! Second-eigenvalue estimation and spectral-gap tuning.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::chain::{metropolis_hastings, window_proposal, FiniteChain};
use crate::error::{Error, Result};

pub const MAX_POWER_ITERATIONS: usize = 100_000;

/// Stopping rule for the Rayleigh-quotient iterations used while tuning;
/// the tuned chain is re-measured with the strict power iteration.
const RAYLEIGH_TOL: f64 = 1e-12;

/// Inner product on signed measures in which a reversible chain's left
/// action `x ↦ xP` is self-adjoint: `⟨x, y⟩ = Σ x_i y_i / π_i`.
struct Deflated<'a> {
    chain: &'a FiniteChain,
    weights: DVector<f64>,
}

impl<'a> Deflated<'a> {
    fn new(chain: &'a FiniteChain) -> Self {
        let pi = chain.stationary();
        let weights = if pi.iter().all(|&p| p > 0.0) {
            pi.map(|p| 1.0 / p)
        } else {
            DVector::from_element(pi.len(), 1.0)
        };
        Self { chain, weights }
    }

    fn dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(self.weights.iter()).map(|((x, y), w)| x * y * w).sum()
    }

    fn norm(&self, a: &DVector<f64>) -> f64 {
        self.dot(a, a).sqrt()
    }

    /// Removes the component along π so iterates stay in `{Σx = 0}`.
    fn deflate(&self, x: &mut DVector<f64>) {
        let s = x.sum();
        x.axpy(-s, self.chain.stationary(), 1.0);
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = self.chain.transition().tr_mul(x);
        self.deflate(&mut y);
        y
    }

    fn start(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DVector::from_fn(self.chain.states(), |_, _| rng.random_range(-1.0..1.0));
        self.deflate(&mut x);
        let n = self.norm(&x);
        if n > 0.0 {
            x /= n;
        }
        x
    }
}

/// Modulus of the largest non-unit eigenvalue of `P`, by power iteration on
/// `x ↦ xP` restricted to signed measures of total mass zero.
///
/// Returns 1 for reducible or periodic chains.
pub fn second_eigenvalue_modulus(chain: &FiniteChain) -> Result<f64> {
    second_eigenvalue_modulus_with(chain, MAX_POWER_ITERATIONS, 1e-14)
}

pub fn second_eigenvalue_modulus_with(chain: &FiniteChain, max_iterations: usize, tol: f64) -> Result<f64> {
    if chain.states() == 1 {
        return Ok(0.0);
    }
    let op = Deflated::new(chain);
    let mut x = op.start(0x5eed);
    let mut history = [f64::NAN; 3];
    for k in 0..max_iterations {
        let y = op.apply(&x);
        let n = op.norm(&y);
        if n <= 1e-300 {
            return Ok(0.0);
        }
        history = [history[1], history[2], n];
        // Compare against both previous estimates so oscillating
        // (complex-pair) iterates do not stop early.
        if k >= 3 && (history[2] - history[1]).abs() <= tol && (history[2] - history[0]).abs() <= tol {
            return Ok(n.min(1.0));
        }
        x = y / n;
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual: (history[2] - history[1]).abs(),
    })
}

/// Reference value from a full (complex) eigendecomposition; intended for
/// small chains in tests.
pub fn second_eigenvalue_modulus_dense(chain: &FiniteChain) -> f64 {
    let eig = chain.transition().clone().complex_eigenvalues();
    let mut moduli: Vec<(f64, f64)> = eig.iter().map(|c| ((c - 1.0).norm(), c.norm())).collect();
    // drop the eigenvalue closest to 1
    moduli.sort_by(|a, b| a.0.total_cmp(&b.0));
    moduli.iter().skip(1).map(|m| m.1).fold(0.0, f64::max)
}

/// Largest and smallest eigenvalues of a reversible chain on the mass-zero
/// subspace. Iterates stop early once the top estimate exceeds `stop_above`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversibleExtremes {
    pub top: f64,
    pub bottom: f64,
}

fn rayleigh_extreme(chain: &FiniteChain, sign: f64, stop_above: Option<f64>) -> Result<f64> {
    let op = Deflated::new(chain);
    let mut x = op.start(if sign > 0.0 { 0x70b } else { 0xb07 });
    let mut prev = f64::NAN;
    for k in 0..MAX_POWER_ITERATIONS {
        let px = op.apply(&x);
        let rayleigh = op.dot(&px, &x);
        if let Some(limit) = stop_above {
            if sign > 0.0 && rayleigh > limit {
                return Ok(rayleigh);
            }
        }
        if k >= 3 && (rayleigh - prev).abs() <= RAYLEIGH_TOL {
            return Ok(rayleigh);
        }
        prev = rayleigh;
        // ½(I ± P) has a nonnegative spectrum for reversible P
        let mut y = &x + px * sign;
        y *= 0.5;
        op.deflate(&mut y);
        let n = op.norm(&y);
        if n <= 1e-300 {
            return Ok(rayleigh);
        }
        x = y / n;
    }
    Err(Error::NonConvergence { iterations: MAX_POWER_ITERATIONS, residual: f64::NAN })
}

pub fn reversible_extremes(chain: &FiniteChain, stop_above: Option<f64>) -> Result<ReversibleExtremes> {
    if chain.states() == 1 {
        return Ok(ReversibleExtremes { top: 0.0, bottom: 0.0 });
    }
    let top = rayleigh_extreme(chain, 1.0, stop_above)?;
    if stop_above.is_some_and(|l| top > l) {
        return Ok(ReversibleExtremes { top, bottom: f64::NAN });
    }
    let bottom = rayleigh_extreme(chain, -1.0, None)?;
    Ok(ReversibleExtremes { top, bottom })
}

/// Result of [`tune_spectral_gap`].
#[derive(Debug, Clone)]
pub struct TunedChain {
    pub chain: FiniteChain,
    /// Measured second-eigenvalue modulus of `chain`.
    pub lambda2: f64,
    pub laziness: f64,
    /// Half-width of the reflecting random-walk proposal.
    pub window: usize,
}

fn lazy_modulus(ext: ReversibleExtremes, laziness: f64) -> f64 {
    let shift = |l: f64| laziness + (1.0 - laziness) * l;
    shift(ext.top).abs().max(shift(ext.bottom).abs())
}

/// Builds a Metropolis–Hastings chain with stationary distribution `pi`
/// whose second-eigenvalue modulus is within `tolerance` of `target`.
///
/// The proposal is the reflecting window walk; the most local window whose
/// chain can reach `target` is chosen, then the laziness is bisected using
/// `λ(lazy) = lazy + (1 − lazy)·λ(0)`.
pub fn tune_spectral_gap(pi: &DVector<f64>, target: f64, tolerance: f64) -> Result<TunedChain> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target eigenvalue must lie in (0, 1), got {target}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let states = pi.len();
    if states < 2 {
        return Err(Error::InvalidArgument("tuning needs at least two states".into()));
    }

    let base = |window: usize| metropolis_hastings(pi, &window_proposal(states, window)?, 0.0);
    // Feasible iff the top eigenvalue is at most the target and, at the
    // laziness that lifts the top eigenvalue onto the target, the bottom
    // eigenvalue is not larger in modulus.
    let probe = |window: usize| -> Result<Option<(FiniteChain, ReversibleExtremes)>> {
        let chain = base(window)?;
        let ext = reversible_extremes(&chain, Some(target))?;
        if ext.top > target {
            return Ok(None);
        }
        let lazy = laziness_for(ext, target);
        if lazy_modulus(ext, lazy) > target + 0.5 * tolerance {
            return Ok(None);
        }
        Ok(Some((chain, ext)))
    };

    // Feasibility is monotone in the window: wider proposals mix faster.
    let max_window = states - 1;
    let (mut lo, mut hi) = (1usize, max_window);
    let mut best = None;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match probe(mid)? {
            Some(found) => {
                best = Some((mid, found));
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    if best.as_ref().is_none_or(|(w, _)| *w != lo) {
        best = probe(lo)?.map(|found| (lo, found));
    }
    let Some((best_window, (_, ext))) = best else {
        let chain = base(max_window)?;
        let ext = reversible_extremes(&chain, None)?;
        let low = golden_min(|l| lazy_modulus(ext, l), 0.0, 1.0);
        return Err(Error::TargetUnreachable { target, low, high: 1.0 });
    };
    let laziness = laziness_for(ext, target);
    let q = window_proposal(states, best_window)?;
    let chain = metropolis_hastings(pi, &q, laziness)?;
    let lambda2 = second_eigenvalue_modulus(&chain)?;
    if (lambda2 - target).abs() > tolerance {
        return Err(Error::NonConvergence { iterations: 0, residual: (lambda2 - target).abs() });
    }
    Ok(TunedChain { chain, lambda2, laziness, window: best_window })
}

/// Bisection for `lazy + (1 − lazy)·top = target` on `[0, 1)`.
fn laziness_for(ext: ReversibleExtremes, target: f64) -> f64 {
    let f = |l: f64| l + (1.0 - l) * ext.top - target;
    if f(0.0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

/// Uniform distribution on `states` states.
pub fn uniform(states: usize) -> DVector<f64> {
    DVector::from_element(states, 1.0 / states as f64)
}

/// Uniform-row chain `P[i][j] = 1/S`; rank one, second eigenvalue zero.
pub fn uniform_chain(states: usize) -> FiniteChain {
    FiniteChain::new(DMatrix::from_element(states, states, 1.0 / states as f64), uniform(states))
        .expect("uniform chain is valid")
}

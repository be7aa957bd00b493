//! The synthetic study problem
//! `min_x max_y ⟨b − Ax, y⟩ + ½‖x‖² − ½‖y‖²` with state-indexed data
//! `(Â(s), b̂(s))` whose stationary mean is `(A, b)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::gap::{primal_dual_gap, spectral_norm, BilinearQuadraticProblem};
use crate::markov::chain::FiniteChain;
use crate::markov::stream::{derive_rng, ChainSampler, SampleStream, StartState};
use crate::saddle::{run_sgd, AveragedTrajectory, BallDomain, PartialGradient, SaddlePoint, StepSchedule, StochasticSaddleProblem};

/// Generation parameters; everything is derived from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub dim: usize,
    pub states: usize,
    pub seed: u64,
    pub radius: f64,
    /// Largest spectral norm of `Â(s) − A` (and Euclidean norm of `b̂(s) − b`).
    pub perturbation: f64,
    /// Number of cosine modes in the perturbation family.
    pub modes: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self { dim: 10, states: 1001, seed: 2017, radius: 10.0, perturbation: 0.5, modes: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationInstance {
    spec: SimulationSpec,
    expected: BilinearQuadraticProblem,
    a_family: Vec<DMatrix<f64>>,
    b_family: Vec<DVector<f64>>,
    a_max: f64,
    b_max: f64,
}

impl SimulationInstance {
    /// `A` has i.i.d. standard normal entries rescaled to spectral norm 1, `b`
    /// is standard normal rescaled to unit norm. State `s` perturbs both by
    /// `Σ_j j⁻² cos(πj(s + ½)/S) G_j` with Gaussian `G_j`, centered under `π`
    /// and scaled so the largest perturbation has norm `spec.perturbation`.
    ///
    /// The cosine modes are the slowest-decaying eigenvectors of the
    /// reflecting window walks used for the chains, so the perturbations are
    /// strongly autocorrelated along slow paths.
    pub fn generate(spec: SimulationSpec, pi: &DVector<f64>) -> Result<Self> {
        let (n, states) = (spec.dim, spec.states);
        if n == 0 || states == 0 {
            return Err(Error::InvalidArgument("simulation needs positive dimension and state count".into()));
        }
        check_dim(states, pi.len())?;
        if !(spec.perturbation >= 0.0) {
            return Err(Error::InvalidArgument("perturbation size must be nonnegative".into()));
        }
        let mut rng = derive_rng(spec.seed, 0x51);
        let mut gauss = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut a = gauss(n, n);
        a /= spectral_norm(&a);
        let mut b: DVector<f64> = gauss(n, 1).column(0).into();
        b /= b.norm();

        let modes: Vec<(DMatrix<f64>, DVector<f64>)> =
            (0..spec.modes).map(|_| (gauss(n, n), gauss(n, 1).column(0).into())).collect();
        let mut da: Vec<DMatrix<f64>> = Vec::with_capacity(states);
        let mut db: Vec<DVector<f64>> = Vec::with_capacity(states);
        for s in 0..states {
            let mut ma = DMatrix::zeros(n, n);
            let mut mb = DVector::zeros(n);
            for (j, (ga, gb)) in modes.iter().enumerate() {
                let k = (j + 1) as f64;
                let w = (std::f64::consts::PI * k * (s as f64 + 0.5) / states as f64).cos() / (k * k);
                ma += ga * w;
                mb.axpy(w, gb, 1.0);
            }
            da.push(ma);
            db.push(mb);
        }
        let mean_a = da.iter().zip(pi.iter()).fold(DMatrix::zeros(n, n), |acc, (m, p)| acc + m * *p);
        let mean_b = db.iter().zip(pi.iter()).fold(DVector::zeros(n), |acc, (v, p)| acc + v * *p);
        for (m, v) in da.iter_mut().zip(db.iter_mut()) {
            *m -= &mean_a;
            *v -= &mean_b;
        }
        let scale_a = da.iter().map(spectral_norm).fold(0.0, f64::max);
        let scale_b = db.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let fa = if scale_a > 0.0 { spec.perturbation / scale_a } else { 0.0 };
        let fb = if scale_b > 0.0 { spec.perturbation / scale_b } else { 0.0 };
        let a_family: Vec<DMatrix<f64>> = da.into_iter().map(|m| &a + m * fa).collect();
        let b_family: Vec<DVector<f64>> = db.into_iter().map(|v| &b + v * fb).collect();
        let a_max = a_family.iter().map(spectral_norm).fold(0.0, f64::max);
        let b_max = b_family.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let expected = BilinearQuadraticProblem::regularized_form(a, b, spec.radius, spec.radius)?;
        Ok(Self { spec, expected, a_family, b_family, a_max, b_max })
    }

    pub fn spec(&self) -> &SimulationSpec {
        &self.spec
    }

    pub fn expected(&self) -> &BilinearQuadraticProblem {
        &self.expected
    }

    pub fn sample_a(&self, s: usize) -> &DMatrix<f64> {
        &self.a_family[s]
    }

    pub fn sample_b(&self, s: usize) -> &DVector<f64> {
        &self.b_family[s]
    }

    /// `max_s ‖Â(s)‖₂` and `max_s ‖b̂(s)‖₂`.
    pub fn sample_norms(&self) -> (f64, f64) {
        (self.a_max, self.b_max)
    }

    /// Diameter of the product of the two balls.
    pub fn diameter(&self) -> f64 {
        let (rx, ry) = (self.expected.domain_x().radius(), self.expected.domain_y().radius());
        2.0 * (rx * rx + ry * ry).sqrt()
    }

    /// Gradient bound `L₁` and smoothness `L₂` valid for every sample over the
    /// domains: `‖G‖ ≤ √(Gx² + Gy²)` with `Gx ≤ ‖Â‖R_y + R_x`,
    /// `Gy ≤ ‖b̂‖ + ‖Â‖R_x + R_y`; the Jacobian blocks are bounded by
    /// `1 + ‖Â‖`, giving `L₂ = √2 (1 + ‖Â‖)`.
    pub fn lipschitz_constants(&self) -> (f64, f64) {
        let (rx, ry) = (self.expected.domain_x().radius(), self.expected.domain_y().radius());
        let gx = self.a_max * ry + rx;
        let gy = self.b_max + self.a_max * rx + ry;
        let l1 = (gx * gx + gy * gy).sqrt();
        let l2 = std::f64::consts::SQRT_2 * (1.0 + self.a_max);
        (l1, l2)
    }
}

impl StochasticSaddleProblem for SimulationInstance {
    fn domain_x(&self) -> &BallDomain {
        self.expected.domain_x()
    }

    fn domain_y(&self) -> &BallDomain {
        self.expected.domain_y()
    }

    /// `g_x = x − Â(s)ᵀy`, `g_y = b̂(s) − Â(s)x − y`.
    fn sample_gradient(&self, z: &SaddlePoint, xi: usize, out: &mut PartialGradient) {
        let a = &self.a_family[xi];
        out.x.copy_from(&z.x);
        out.x.gemv_tr(-1.0, a, &z.y, 1.0);
        out.y.copy_from(&self.b_family[xi]);
        out.y.gemv(-1.0, a, &z.x, 1.0);
        out.y -= &z.y;
    }

    fn expected_gradient(&self, z: &SaddlePoint) -> Option<PartialGradient> {
        self.expected.expected_gradient(z)
    }
}

/// Data source for one cell of the study.
#[derive(Debug, Clone)]
pub enum Regime {
    Iid,
    Chain(Arc<ChainSampler>),
}

/// Experience replay over the base stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplaySettings {
    pub capacity: Option<usize>,
    /// Stored samples required before the first emission.
    pub warmup: usize,
}

/// Builds the sample stream for one run. Stream ids are fixed so that the
/// base path of a replay run is the path of the matching non-replay run.
pub fn build_stream(regime: &Regime, sampler_iid: &Arc<ChainSampler>, replay: Option<ReplaySettings>, seed: u64) -> Result<SampleStream> {
    let base = match regime {
        Regime::Iid => SampleStream::iid(sampler_iid.clone(), derive_rng(seed, 1)),
        Regime::Chain(s) => SampleStream::markov(s.clone(), StartState::Stationary, derive_rng(seed, 1))?,
    };
    match replay {
        None => Ok(base),
        Some(r) => SampleStream::replay(base, r.capacity, r.warmup, derive_rng(seed, 2)),
    }
}

/// Gap of the averaged iterate at each checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCurve {
    pub checkpoints: Vec<usize>,
    pub gaps: Vec<f64>,
}

pub fn gap_curve(instance: &SimulationInstance, trajectory: &AveragedTrajectory) -> Result<GapCurve> {
    let mut checkpoints = Vec::with_capacity(trajectory.checkpoints.len());
    let mut gaps = Vec::with_capacity(trajectory.checkpoints.len());
    for c in &trajectory.checkpoints {
        checkpoints.push(c.t);
        gaps.push(primal_dual_gap(instance.expected(), &c.average)?.gap);
    }
    Ok(GapCurve { checkpoints, gaps })
}

/// One run of averaged SGD from the origin, returning the gap curve.
pub fn run_cell(
    instance: &SimulationInstance,
    stream: &mut SampleStream,
    schedule: &StepSchedule,
    horizon: usize,
    checkpoints: &[usize],
) -> Result<GapCurve> {
    let start = SaddlePoint::zeros(instance.spec.dim, instance.spec.dim);
    let trajectory = run_sgd(instance, stream, schedule, horizon, &start, checkpoints)?;
    gap_curve(instance, &trajectory)
}

/// i.i.d. sampler over `π` (the chain's rows are irrelevant for i.i.d. draws).
pub fn iid_sampler(pi: &DVector<f64>) -> Result<Arc<ChainSampler>> {
    let n = pi.len();
    let rows = DMatrix::from_fn(n, n, |_, j| pi[j]);
    Ok(Arc::new(ChainSampler::new(&FiniteChain::new(rows, pi.clone())?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::spectral::uniform;

    fn small() -> SimulationInstance {
        let spec = SimulationSpec { dim: 4, states: 51, seed: 3, radius: 10.0, perturbation: 0.5, modes: 4 };
        SimulationInstance::generate(spec, &uniform(51)).unwrap()
    }

    #[test]
    fn family_has_exact_mean() {
        let inst = small();
        let pi = uniform(51);
        let mean_a = (0..51).fold(DMatrix::zeros(4, 4), |acc, s| acc + inst.sample_a(s) * pi[s]);
        let mean_b = (0..51).fold(DVector::zeros(4), |acc, s| acc + inst.sample_b(s) * pi[s]);
        assert!((mean_a - inst.expected().a()).amax() < 1e-14);
        assert!((mean_b - inst.expected().b()).amax() < 1e-14);
    }

    #[test]
    fn perturbations_are_bounded() {
        let inst = small();
        let worst = (0..51).map(|s| spectral_norm(&(inst.sample_a(s) - inst.expected().a()))).fold(0.0, f64::max);
        assert!((worst - 0.5).abs() < 1e-12);
        let worst_b = (0..51).map(|s| (inst.sample_b(s) - inst.expected().b()).norm()).fold(0.0, f64::max);
        assert!((worst_b - 0.5).abs() < 1e-12);
        assert!((spectral_norm(inst.expected().a()) - 1.0).abs() < 1e-12);
        assert!((inst.expected().b().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_oracle_matches_state_average() {
        let inst = small();
        let pi = uniform(51);
        let z = SaddlePoint::new(DVector::from_element(4, 0.3), DVector::from_fn(4, |i, _| i as f64 - 1.0));
        let mut g = PartialGradient::zeros(4, 4);
        let mut mean = PartialGradient::zeros(4, 4);
        for s in 0..51 {
            inst.sample_gradient(&z, s, &mut g);
            mean.x.axpy(pi[s], &g.x, 1.0);
            mean.y.axpy(pi[s], &g.y, 1.0);
        }
        let exact = inst.expected_gradient(&z).unwrap();
        assert!((mean.x - exact.x).amax() < 1e-13 && (mean.y - exact.y).amax() < 1e-13);
    }

    #[test]
    fn gradients_respect_l1() {
        let inst = small();
        let (l1, _) = inst.lipschitz_constants();
        let r = 10.0 / 2f64.sqrt();
        let z = SaddlePoint::new(DVector::from_element(4, r / 2.0), DVector::from_element(4, -r / 2.0));
        let mut g = PartialGradient::zeros(4, 4);
        for s in 0..51 {
            inst.sample_gradient(&z, s, &mut g);
            assert!((g.x.norm_squared() + g.y.norm_squared()).sqrt() <= l1);
        }
    }
}

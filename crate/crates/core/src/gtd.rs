//! Linear GTD/GTD2 policy evaluation as a stochastic saddle problem.
//!
//! The saddle form is `min_θ max_y ⟨b − Aθ, y⟩ − ½‖y‖²_M` with
//! `A = E[ρ φ(s)(φ(s) − γφ(s′))ᵀ]`, `b = E[ρ φ(s) r]`, `C = E[φ φᵀ]` and
//! `M = I` (GTD) or `M = C` (GTD2). Expectations are over the stationary
//! distribution of the behavior policy's transition process.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::bounds::GtdConstants;
use crate::error::{check_dim, Error, Result};
use crate::gap::BilinearQuadraticProblem;
use crate::markov::chain::{validate_distribution, FiniteChain};
use crate::markov::stream::derive_rng;
use crate::saddle::{BallDomain, PartialGradient, SaddlePoint, StochasticSaddleProblem};

/// Finite MDP with a target and a behavior policy.
///
/// `transition[a]` is the `S×S` kernel of action `a`; `reward`, `target` and
/// `behavior` are `S×A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    transition: Vec<DMatrix<f64>>,
    reward: DMatrix<f64>,
    gamma: f64,
    target: DMatrix<f64>,
    behavior: DMatrix<f64>,
}

impl MdpSpec {
    pub fn new(
        transition: Vec<DMatrix<f64>>,
        reward: DMatrix<f64>,
        gamma: f64,
        target: DMatrix<f64>,
        behavior: DMatrix<f64>,
    ) -> Result<Self> {
        let actions = transition.len();
        if actions == 0 {
            return Err(Error::InvalidArgument("MDP needs at least one action".into()));
        }
        let states = transition[0].nrows();
        if states == 0 {
            return Err(Error::InvalidArgument("MDP needs at least one state".into()));
        }
        for p in &transition {
            if p.shape() != (states, states) {
                return Err(Error::InvalidArgument(format!("transition kernel has shape {:?}", p.shape())));
            }
            crate::markov::chain::validate_stochastic(p)?;
        }
        for (name, m) in [("reward", &reward), ("target policy", &target), ("behavior policy", &behavior)] {
            if m.shape() != (states, actions) {
                return Err(Error::InvalidArgument(format!("{name} has shape {:?}, expected ({states}, {actions})", m.shape())));
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("rewards must be finite".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("discount must lie in (0, 1), got {gamma}")));
        }
        for s in 0..states {
            validate_distribution(&target.row(s).transpose(), actions)?;
            validate_distribution(&behavior.row(s).transpose(), actions)?;
            for a in 0..actions {
                if target[(s, a)] > 0.0 && behavior[(s, a)] <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "behavior policy never takes action {a} in state {s} but the target policy does"
                    )));
                }
            }
        }
        Ok(Self { transition, reward, gamma, target, behavior })
    }

    pub fn states(&self) -> usize {
        self.reward.nrows()
    }

    pub fn actions(&self) -> usize {
        self.reward.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self, action: usize) -> &DMatrix<f64> {
        &self.transition[action]
    }

    pub fn reward(&self) -> &DMatrix<f64> {
        &self.reward
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn behavior(&self) -> &DMatrix<f64> {
        &self.behavior
    }

    /// Same MDP with the behavior policy replaced by the target policy.
    pub fn on_policy(&self) -> Self {
        Self { behavior: self.target.clone(), ..self.clone() }
    }

    pub fn with_target(&self, target: DMatrix<f64>) -> Result<Self> {
        Self::new(self.transition.clone(), self.reward.clone(), self.gamma, target, self.behavior.clone())
    }

    /// `ρ(s, a) = μ(a|s) / μ_b(a|s)`, zero where the behavior policy never acts.
    pub fn importance_weight(&self, s: usize, a: usize) -> f64 {
        let b = self.behavior[(s, a)];
        if b > 0.0 {
            self.target[(s, a)] / b
        } else {
            0.0
        }
    }

    pub fn rho_max(&self) -> f64 {
        (0..self.states())
            .flat_map(|s| (0..self.actions()).map(move |a| (s, a)))
            .map(|(s, a)| self.importance_weight(s, a))
            .fold(0.0, f64::max)
    }

    pub fn reward_max(&self) -> f64 {
        self.reward.amax()
    }

    /// Policy-averaged kernel `P^μ` and reward `R^μ`.
    pub fn policy_kernel(&self, policy: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let (n, k) = (self.states(), self.actions());
        let mut p = DMatrix::zeros(n, n);
        let mut r = DVector::zeros(n);
        for s in 0..n {
            for a in 0..k {
                let w = policy[(s, a)];
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.reward[(s, a)];
                for s2 in 0..n {
                    p[(s, s2)] += w * self.transition[a][(s, s2)];
                }
            }
        }
        (p, r)
    }

    /// State chain under the behavior policy.
    pub fn behavior_chain(&self) -> Result<FiniteChain> {
        FiniteChain::from_transition(self.policy_kernel(&self.behavior).0)
    }

    /// Plain-text form; see [`MdpSpec::read_text`].
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let row = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "# saddlemix-mdp v1")?;
        writeln!(w, "states {}", self.states())?;
        writeln!(w, "actions {}", self.actions())?;
        writeln!(w, "gamma {:.16e}", self.gamma)?;
        writeln!(w, "transition")?;
        for s in 0..self.states() {
            for a in 0..self.actions() {
                writeln!(w, "{}", row(&mut self.transition[a].row(s).iter().copied()))?;
            }
        }
        for (name, m) in [("reward", &self.reward), ("target", &self.target), ("behavior", &self.behavior)] {
            writeln!(w, "{name}")?;
            for s in 0..self.states() {
                writeln!(w, "{}", row(&mut m.row(s).iter().copied()))?;
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`MdpSpec::write_text`]:
    ///
    /// ```text
    /// states S
    /// actions A
    /// gamma γ
    /// transition        S·A rows of S entries, row (s, a) = P(·|s, a)
    /// reward            S rows of A entries
    /// target            S rows of A entries
    /// behavior          S rows of A entries
    /// ```
    ///
    /// Blank lines and lines starting with `#` are ignored.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                lines.push((i + 1, t.to_string()));
            }
        }
        let mut it = lines.into_iter();
        let mut next = |what: &str| it.next().ok_or(Error::Parse { line: 0, message: format!("missing {what}") });
        let keyed = |(line, text): (usize, String), key: &str| -> Result<String> {
            let mut parts = text.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse { line, message: format!("expected `{key}`") });
            }
            parts.next().map(str::to_string).ok_or(Error::Parse { line, message: format!("`{key}` needs a value") })
        };
        let parse_num = |line: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("bad number `{s}`: {e}") })
        };
        let states_line = next("states")?;
        let line = states_line.0;
        let states: usize = keyed(states_line, "states")?
            .parse()
            .map_err(|e| Error::Parse { line, message: format!("bad state count: {e}") })?;
        let actions_line = next("actions")?;
        let line = actions_line.0;
        let actions: usize = keyed(actions_line, "actions")?
            .parse()
            .map_err(|e| Error::Parse { line, message: format!("bad action count: {e}") })?;
        let gamma_line = next("gamma")?;
        let line = gamma_line.0;
        let gamma = parse_num(line, &keyed(gamma_line, "gamma")?)?;

        let mut read_rows = |header: &str, rows: usize, cols: usize| -> Result<Vec<Vec<f64>>> {
            let (line, text) = next(header)?;
            if text != header {
                return Err(Error::Parse { line, message: format!("expected section `{header}`") });
            }
            (0..rows)
                .map(|_| {
                    let (line, text) = next(header)?;
                    let row = text.split_whitespace().map(|s| parse_num(line, s)).collect::<Result<Vec<_>>>()?;
                    if row.len() != cols {
                        return Err(Error::Parse { line, message: format!("expected {cols} entries, found {}", row.len()) });
                    }
                    Ok(row)
                })
                .collect()
        };
        let t_rows = read_rows("transition", states * actions, states)?;
        let mut transition = vec![DMatrix::zeros(states, states); actions];
        for s in 0..states {
            for a in 0..actions {
                for s2 in 0..states {
                    transition[a][(s, s2)] = t_rows[s * actions + a][s2];
                }
            }
        }
        let to_matrix = |rows: Vec<Vec<f64>>| DMatrix::from_fn(states, actions, |s, a| rows[s][a]);
        let reward = to_matrix(read_rows("reward", states, actions)?);
        let target = to_matrix(read_rows("target", states, actions)?);
        let behavior = to_matrix(read_rows("behavior", states, actions)?);
        Self::new(transition, reward, gamma, target, behavior)
    }
}

/// Two states, one action, deterministic swap, reward `r[s]`.
pub fn swap2(gamma: f64, r: [f64; 2]) -> Result<MdpSpec> {
    let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let one = DMatrix::from_element(2, 1, 1.0);
    MdpSpec::new(vec![p], DMatrix::from_column_slice(2, 1, &r), gamma, one.clone(), one)
}

/// Five-state walk with actions left/right; a move past either end stays
/// put. Reward 1 for arriving at (or staying in) the right end, −1 for the
/// left end. Both policies are uniform.
pub fn walk5(gamma: f64) -> Result<MdpSpec> {
    let n = 5;
    let mut left = DMatrix::zeros(n, n);
    let mut right = DMatrix::zeros(n, n);
    let mut reward = DMatrix::zeros(n, 2);
    for s in 0..n {
        let (l, r) = (s.saturating_sub(1), (s + 1).min(n - 1));
        left[(s, l)] = 1.0;
        right[(s, r)] = 1.0;
        let edge = |t: usize| if t == 0 { -1.0 } else if t == n - 1 { 1.0 } else { 0.0 };
        reward[(s, 0)] = edge(l);
        reward[(s, 1)] = edge(r);
    }
    let uniform = DMatrix::from_element(n, 2, 0.5);
    MdpSpec::new(vec![left, right], reward, gamma, uniform.clone(), uniform)
}

/// Random MDP: transition rows are flat-Dirichlet draws, rewards uniform on
/// `[−1, 1]`, the target policy is a softmax of Gaussian logits and the
/// behavior policy is uniform.
pub fn random_mdp(states: usize, actions: usize, gamma: f64, seed: u64) -> Result<MdpSpec> {
    if states == 0 || actions == 0 {
        return Err(Error::InvalidArgument("random MDP needs states and actions".into()));
    }
    let mut rng = derive_rng(seed, 0x3d9);
    let dirichlet = |rng: &mut ChaCha8Rng, n: usize| {
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = g.iter().sum();
        g.into_iter().map(|v| v / total).collect::<Vec<_>>()
    };
    let mut transition = vec![DMatrix::zeros(states, states); actions];
    for s in 0..states {
        for p in transition.iter_mut() {
            let row = dirichlet(&mut rng, states);
            for (s2, v) in row.into_iter().enumerate() {
                p[(s, s2)] = v;
            }
        }
    }
    let reward = DMatrix::from_fn(states, actions, |_, _| rng.random_range(-1.0..=1.0));
    let mut target = DMatrix::from_fn(states, actions, |_, _| rng.sample::<f64, _>(StandardNormal).exp());
    for s in 0..states {
        let total: f64 = target.row(s).sum();
        target.row_mut(s).scale_mut(1.0 / total);
    }
    let behavior = DMatrix::from_element(states, actions, 1.0 / actions as f64);
    MdpSpec::new(transition, reward, gamma, target, behavior)
}

/// Linear features; row `s` of the matrix is `φ(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    features: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(features: DMatrix<f64>) -> Result<Self> {
        if features.ncols() == 0 || features.nrows() == 0 {
            return Err(Error::InvalidArgument("feature matrix is empty".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        Ok(Self { features })
    }

    pub fn tabular(states: usize) -> Self {
        Self { features: DMatrix::identity(states, states) }
    }

    /// Gaussian features, each row scaled to unit Euclidean norm.
    pub fn random(states: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = derive_rng(seed, 0xfea);
        let mut f = DMatrix::from_fn(states, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut row in f.row_iter_mut() {
            let n = row.norm();
            row /= n;
        }
        Self::new(f)
    }

    pub fn states(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn phi(&self, s: usize) -> DVector<f64> {
        self.features.row(s).transpose()
    }

    /// `max_s ‖φ(s)‖_∞`.
    pub fn max_norm(&self) -> f64 {
        self.features.amax()
    }

    /// Feature bound `L` used by the norm bounds: `max_s ‖φ(s)‖₂`. It dominates
    /// the max-norm bound, and `‖b̂‖₂ ≤ ρ L R_max` needs the Euclidean norm.
    pub fn bound(&self) -> f64 {
        self.features.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GtdMode {
    Gtd,
    Gtd2,
}

impl GtdMode {
    pub fn name(self) -> &'static str {
        match self {
            GtdMode::Gtd => "gtd",
            GtdMode::Gtd2 => "gtd2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyMode {
    OnPolicy,
    OffPolicy,
}

impl PolicyMode {
    pub fn name(self) -> &'static str {
        match self {
            PolicyMode::OnPolicy => "on",
            PolicyMode::OffPolicy => "off",
        }
    }
}

/// One observed transition `(s, a, r, s′)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub next: usize,
}

/// Per-sample estimators `(Â, b̂, Ĉ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEstimators {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
}

/// Precomputed pieces of one transition: `Â = ρ φ ψᵀ`, `b̂ = ρ r φ`.
#[derive(Debug, Clone)]
struct Compiled {
    phi: DVector<f64>,
    psi: DVector<f64>,
    rho: f64,
    r: f64,
}

#[derive(Debug, Clone)]
pub struct GtdInstance {
    mdp: MdpSpec,
    features: FeatureMap,
    mode: GtdMode,
    policy: PolicyMode,
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DMatrix<f64>,
    m: DMatrix<f64>,
    state_distribution: DVector<f64>,
    transitions: Vec<TransitionSample>,
    compiled: Vec<Compiled>,
    chain: Arc<FiniteChain>,
    constants: GtdConstants,
    condition_a: f64,
    condition_c: f64,
}

fn singular_values(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    (sv.max(), sv.min())
}

/// Exact `A, b, C, M` by summing over all transitions with positive
/// probability, weighted by `π(s) μ_b(a|s) P(s′|s, a)`.
///
/// In on-policy mode the behavior policy is replaced by the target policy.
pub fn exact_instance_matrices(mdp: &MdpSpec, features: &FeatureMap, mode: GtdMode, policy: PolicyMode) -> Result<GtdInstance> {
    check_dim(mdp.states(), features.states())?;
    let mdp = match policy {
        PolicyMode::OnPolicy => mdp.on_policy(),
        PolicyMode::OffPolicy => mdp.clone(),
    };
    let (n, k, d) = (mdp.states(), mdp.actions(), features.dim());
    let gamma = mdp.gamma();
    let state_chain = mdp.behavior_chain()?;
    let pi = state_chain.stationary().clone();

    let mut transitions = Vec::new();
    let mut weights = Vec::new();
    for s in 0..n {
        for a in 0..k {
            let pa = mdp.behavior()[(s, a)];
            if pa == 0.0 {
                continue;
            }
            for s2 in 0..n {
                let p = mdp.transition(a)[(s, s2)];
                if p > 0.0 {
                    transitions.push(TransitionSample { s, a, r: mdp.reward()[(s, a)], next: s2 });
                    weights.push(pi[s] * pa * p);
                }
            }
        }
    }
    let compiled: Vec<Compiled> = transitions
        .iter()
        .map(|t| {
            let phi = features.phi(t.s);
            let psi = &phi - features.phi(t.next) * gamma;
            Compiled { phi, psi, rho: mdp.importance_weight(t.s, t.a), r: t.r }
        })
        .collect();

    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    let mut c = DMatrix::zeros(d, d);
    for (w, t) in weights.iter().zip(&compiled) {
        a.ger(w * t.rho, &t.phi, &t.psi, 1.0);
        b.axpy(w * t.rho * t.r, &t.phi, 1.0);
        c.ger(*w, &t.phi, &t.phi, 1.0);
    }

    let (a_max, a_min) = singular_values(&a);
    let condition_a = a_max / a_min;
    if !(a_min > 1e-12 * a_max.max(1e-300)) {
        return Err(Error::Singular { matrix: "A", condition: condition_a });
    }
    let (c_max, c_min) = singular_values(&c);
    let condition_c = c_max / c_min;
    if !(c_min > 1e-12 * c_max.max(1e-300)) {
        return Err(Error::Singular { matrix: "C", condition: condition_c });
    }
    let m = match mode {
        GtdMode::Gtd => DMatrix::identity(d, d),
        GtdMode::Gtd2 => c.clone(),
    };
    let lambda_m = singular_values(&m).0;
    let m_inv = m.clone().try_inverse().ok_or(Error::Singular { matrix: "M", condition: f64::INFINITY })?;
    let atma = a.transpose() * m_inv * &a;
    let atma = (&atma + atma.transpose()) * 0.5;
    let nu_atma = atma.symmetric_eigenvalues().min();

    // Transition process on (s, a, s′): the next triple starts at s′.
    let count = transitions.len();
    let mut p = DMatrix::zeros(count, count);
    for (i, ti) in transitions.iter().enumerate() {
        for (j, tj) in transitions.iter().enumerate() {
            if tj.s == ti.next {
                p[(i, j)] = mdp.behavior()[(tj.s, tj.a)] * mdp.transition(tj.a)[(tj.s, tj.next)];
            }
        }
    }
    let stationary = DVector::from_vec(weights);
    let chain = FiniteChain::new(p, stationary.clone() / stationary.sum())?;

    let constants = GtdConstants {
        gamma,
        rho_max: mdp.rho_max(),
        feature_bound: features.bound(),
        dim: d,
        reward_max: mdp.reward_max(),
        lambda_m,
        lambda_c: c_max,
        nu_c: c.symmetric_eigenvalues().min(),
        nu_atma,
        pi_max: pi.max(),
    };
    Ok(GtdInstance {
        mdp,
        features: features.clone(),
        mode,
        policy,
        a,
        b,
        c,
        m,
        state_distribution: pi,
        transitions,
        compiled,
        chain: Arc::new(chain),
        constants,
        condition_a,
        condition_c,
    })
}

impl GtdInstance {
    pub fn mdp(&self) -> &MdpSpec {
        &self.mdp
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn mode(&self) -> GtdMode {
        self.mode
    }

    pub fn policy(&self) -> PolicyMode {
        self.policy
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn lambda_m(&self) -> f64 {
        self.constants.lambda_m
    }

    pub fn constants(&self) -> &GtdConstants {
        &self.constants
    }

    pub fn condition_numbers(&self) -> (f64, f64) {
        (self.condition_a, self.condition_c)
    }

    /// Stationary state distribution of the behavior policy.
    pub fn state_distribution(&self) -> &DVector<f64> {
        &self.state_distribution
    }

    /// Transitions with positive probability; stream samples index this list.
    pub fn transitions(&self) -> &[TransitionSample] {
        &self.transitions
    }

    /// Markov chain over [`GtdInstance::transitions`] generated by the
    /// behavior policy.
    pub fn transition_chain(&self) -> &Arc<FiniteChain> {
        &self.chain
    }

    /// `A⁻¹ b`, the fixed point of the expected update.
    pub fn solution(&self) -> Result<DVector<f64>> {
        self.a.clone().lu().solve(&self.b).ok_or(Error::Singular { matrix: "A", condition: self.condition_a })
    }

    /// `‖Ā θ − b‖₂`.
    pub fn residual(&self, theta: &DVector<f64>) -> f64 {
        (&self.a * theta - &self.b).norm()
    }

    /// `max ‖Â_t‖₂ ≤ (1+γ) ρ_max L² d`.
    pub fn a_hat_bound(&self) -> f64 {
        let k = &self.constants;
        (1.0 + k.gamma) * k.rho_max * k.feature_bound.powi(2) * k.dim as f64
    }

    /// `max ‖b̂_t‖₂ ≤ ρ_max L R_max`.
    pub fn b_hat_bound(&self) -> f64 {
        let k = &self.constants;
        k.rho_max * k.feature_bound * k.reward_max
    }

    /// Saddle problem over balls of the given radii.
    pub fn saddle_problem(&self, radius_x: f64, radius_y: f64) -> Result<GtdProblem<'_>> {
        let d = self.features.dim();
        Ok(GtdProblem { instance: self, domain_x: BallDomain::new(d, radius_x)?, domain_y: BallDomain::new(d, radius_y)? })
    }

    /// The expected problem `⟨b − Aθ, y⟩ − ½‖y‖²_M`, for gap evaluation.
    pub fn expected_problem(&self, radius_x: f64, radius_y: f64) -> Result<BilinearQuadraticProblem> {
        BilinearQuadraticProblem::gtd_form(self.a.clone(), self.b.clone(), self.m.clone(), radius_x, radius_y)
    }
}

/// Per-sample estimators for transition `ξ`.
pub fn sample_gradients(instance: &GtdInstance, xi: &TransitionSample) -> SampleEstimators {
    let f = &instance.features;
    let phi = f.phi(xi.s);
    let psi = &phi - f.phi(xi.next) * instance.mdp.gamma();
    let rho = instance.mdp.importance_weight(xi.s, xi.a);
    SampleEstimators { a: &phi * psi.transpose() * rho, b: &phi * (rho * xi.r), c: &phi * phi.transpose() }
}

/// Stochastic oracle for [`GtdInstance`]; samples index the instance's
/// transition list.
#[derive(Debug, Clone)]
pub struct GtdProblem<'a> {
    instance: &'a GtdInstance,
    domain_x: BallDomain,
    domain_y: BallDomain,
}

impl GtdProblem<'_> {
    pub fn instance(&self) -> &GtdInstance {
        self.instance
    }
}

impl StochasticSaddleProblem for GtdProblem<'_> {
    fn domain_x(&self) -> &BallDomain {
        &self.domain_x
    }

    fn domain_y(&self) -> &BallDomain {
        &self.domain_y
    }

    /// `g_x = −Âᵀy`, `g_y = b̂ − Âx − M̂y` with `M̂ = I` or `Ĉ`.
    fn sample_gradient(&self, z: &SaddlePoint, xi: usize, out: &mut PartialGradient) {
        let t = &self.instance.compiled[xi];
        debug_assert!({
            let a_norm = t.rho * t.phi.norm() * t.psi.norm();
            let b_norm = (t.rho * t.r).abs() * t.phi.norm();
            a_norm <= self.instance.a_hat_bound() * (1.0 + 1e-12) && b_norm <= self.instance.b_hat_bound() * (1.0 + 1e-12)
        });
        let phi_y = t.phi.dot(&z.y);
        let psi_x = t.psi.dot(&z.x);
        out.x.copy_from(&t.psi);
        out.x *= -t.rho * phi_y;
        out.y.copy_from(&t.phi);
        out.y *= t.rho * (t.r - psi_x);
        match self.instance.mode {
            GtdMode::Gtd => out.y -= &z.y,
            GtdMode::Gtd2 => out.y.axpy(-phi_y, &t.phi, 1.0),
        }
    }

    fn expected_gradient(&self, z: &SaddlePoint) -> Option<PartialGradient> {
        let i = self.instance;
        Some(PartialGradient { x: -(i.a.transpose() * &z.y), y: &i.b - &i.a * &z.x - &i.m * &z.y })
    }
}

/// `V^μ = (I − γ P^μ)⁻¹ R^μ`.
pub fn exact_value(mdp: &MdpSpec, policy: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (p, r) = mdp.policy_kernel(policy);
    let n = mdp.states();
    let system = DMatrix::identity(n, n) - p * mdp.gamma();
    system.lu().solve(&r).ok_or(Error::Singular { matrix: "I - γP", condition: f64::INFINITY })
}

/// `‖V − Φθ‖_π` with `V` the target policy's value and `π` the behavior
/// stationary distribution.
pub fn value_error(instance: &GtdInstance, theta: &DVector<f64>) -> Result<f64> {
    let v = exact_value(&instance.mdp, instance.mdp.target())?;
    Ok(weighted_error(&v, instance.features.matrix(), theta, &instance.state_distribution))
}

pub(crate) fn weighted_error(v: &DVector<f64>, features: &DMatrix<f64>, theta: &DVector<f64>, pi: &DVector<f64>) -> f64 {
    let diff = v - features * theta;
    diff.iter().zip(pi.iter()).map(|(e, p)| p * e * e).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn swap_instance(mode: GtdMode) -> GtdInstance {
        exact_instance_matrices(&swap2(0.5, [1.0, 0.0]).unwrap(), &FeatureMap::tabular(2), mode, PolicyMode::OnPolicy).unwrap()
    }

    #[test]
    fn swap_instance_matrices() {
        let inst = swap_instance(GtdMode::Gtd);
        let a = DMatrix::from_row_slice(2, 2, &[0.5, -0.25, -0.25, 0.5]);
        assert!((inst.a() - a).amax() < 1e-15);
        assert!((inst.b() - DVector::from_row_slice(&[0.5, 0.0])).amax() < 1e-15);
        let x = inst.solution().unwrap();
        assert_relative_eq!(x[0], 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(inst.m(), &DMatrix::identity(2, 2));
        assert_eq!(inst.lambda_m(), 1.0);
        assert!((inst.c() - DMatrix::from_diagonal(&DVector::from_element(2, 0.5))).amax() < 1e-15);
    }

    #[test]
    fn swap_value_function() {
        let mdp = swap2(0.5, [1.0, 0.0]).unwrap();
        let v = exact_value(&mdp, mdp.target()).unwrap();
        assert_relative_eq!(v[0], 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 2.0 / 3.0, epsilon = 1e-14);
        let inst = swap_instance(GtdMode::Gtd);
        let err = value_error(&inst, &DVector::from_row_slice(&[4.0 / 3.0, 0.0])).unwrap();
        assert_relative_eq!(err, (2.0 / 3.0) * 0.5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(value_error(&inst, &v).unwrap(), 0.0, epsilon = 1e-14);
        let norm_v = (0.5 * v[0] * v[0] + 0.5 * v[1] * v[1]).sqrt();
        assert_relative_eq!(value_error(&inst, &DVector::zeros(2)).unwrap(), norm_v, epsilon = 1e-14);
    }

    #[test]
    fn constant_reward_values() {
        let mdp = random_mdp(4, 3, 0.9, 1).unwrap();
        let ones = MdpSpec::new(
            (0..3).map(|a| mdp.transition(a).clone()).collect(),
            DMatrix::from_element(4, 3, 1.0),
            0.9,
            mdp.target().clone(),
            mdp.behavior().clone(),
        )
        .unwrap();
        let v = exact_value(&ones, ones.target()).unwrap();
        assert!(v.iter().all(|x| (x - 10.0).abs() < 1e-12));
        let zeros = MdpSpec::new(
            (0..3).map(|a| mdp.transition(a).clone()).collect(),
            DMatrix::zeros(4, 3),
            0.9,
            mdp.target().clone(),
            mdp.behavior().clone(),
        )
        .unwrap();
        assert_eq!(exact_value(&zeros, zeros.target()).unwrap(), DVector::zeros(4));
    }

    #[test]
    fn per_sample_estimator_example() {
        let inst = swap_instance(GtdMode::Gtd);
        let xi = TransitionSample { s: 0, a: 0, r: 0.0, next: 1 };
        let e = sample_gradients(&inst, &xi);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.0, 0.0]);
        assert_eq!(e.a, expected);
        assert_eq!(e.b, DVector::zeros(2));
    }

    #[test]
    fn tabular_fixed_point_is_value_function() {
        for (seed, policy) in [(3, PolicyMode::OnPolicy), (4, PolicyMode::OffPolicy)] {
            let mdp = random_mdp(6, 2, 0.8, seed).unwrap();
            let inst = exact_instance_matrices(&mdp, &FeatureMap::tabular(6), GtdMode::Gtd2, policy).unwrap();
            let v = exact_value(inst.mdp(), inst.mdp().target()).unwrap();
            let x = inst.solution().unwrap();
            assert!((x - &v).amax() <= 1e-10 * v.amax());
            // tabular on-policy: C = diag(π)
            if policy == PolicyMode::OnPolicy {
                let c = DMatrix::from_diagonal(inst.state_distribution());
                assert!((inst.c() - c).amax() < 1e-14);
            }
        }
    }

    #[test]
    fn oracle_vanishes_at_fixed_point_in_expectation() {
        let mdp = random_mdp(5, 2, 0.7, 11).unwrap();
        let inst = exact_instance_matrices(&mdp, &FeatureMap::random(5, 3, 2).unwrap(), GtdMode::Gtd, PolicyMode::OffPolicy).unwrap();
        let problem = inst.saddle_problem(100.0, 100.0).unwrap();
        let z = SaddlePoint::new(inst.solution().unwrap(), DVector::zeros(3));
        let pi = inst.transition_chain().stationary();
        let mut mean = PartialGradient::zeros(3, 3);
        let mut g = PartialGradient::zeros(3, 3);
        for i in 0..inst.transitions().len() {
            problem.sample_gradient(&z, i, &mut g);
            mean.x.axpy(pi[i], &g.x, 1.0);
            mean.y.axpy(pi[i], &g.y, 1.0);
        }
        assert!(mean.x.amax() < 1e-12 && mean.y.amax() < 1e-12);
        let exact = problem.expected_gradient(&z).unwrap();
        assert!(exact.y.amax() < 1e-12);
    }

    #[test]
    fn gtd_and_gtd2_differ_only_in_m_term() {
        let mdp = walk5(0.9).unwrap();
        let f = FeatureMap::tabular(5);
        let g1 = exact_instance_matrices(&mdp, &f, GtdMode::Gtd, PolicyMode::OnPolicy).unwrap();
        let g2 = exact_instance_matrices(&mdp, &f, GtdMode::Gtd2, PolicyMode::OnPolicy).unwrap();
        let (p1, p2) = (g1.saddle_problem(10.0, 10.0).unwrap(), g2.saddle_problem(10.0, 10.0).unwrap());
        let z = SaddlePoint::new(DVector::from_element(5, 0.3), DVector::from_fn(5, |i, _| i as f64 * 0.1));
        let (mut a, mut b) = (PartialGradient::zeros(5, 5), PartialGradient::zeros(5, 5));
        for xi in 0..g1.transitions().len() {
            p1.sample_gradient(&z, xi, &mut a);
            p2.sample_gradient(&z, xi, &mut b);
            assert_eq!(a.x, b.x);
            let t = g1.transitions()[xi];
            let phi = f.phi(t.s);
            let diff = &a.y - &b.y;
            let expected = -&z.y + &phi * phi.dot(&z.y);
            assert!((diff - expected).amax() < 1e-15);
        }
    }

    #[test]
    fn text_round_trip() {
        let mdp = random_mdp(3, 2, 0.95, 5).unwrap();
        let mut buf = Vec::new();
        mdp.write_text(&mut buf).unwrap();
        assert_eq!(MdpSpec::read_text(&buf[..]).unwrap(), mdp);
        let bad = String::from_utf8(buf).unwrap().replacen("gamma", "gama", 1);
        assert!(matches!(MdpSpec::read_text(bad.as_bytes()), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn off_policy_requires_coverage() {
        let mdp = walk5(0.9).unwrap();
        let target = DMatrix::from_fn(5, 2, |_, a| if a == 1 { 1.0 } else { 0.0 });
        let det_behavior = MdpSpec::new(
            vec![mdp.transition(0).clone(), mdp.transition(1).clone()],
            mdp.reward().clone(),
            0.9,
            target.clone(),
            DMatrix::from_fn(5, 2, |_, a| if a == 0 { 1.0 } else { 0.0 }),
        );
        assert!(det_behavior.is_err());
        let ok = mdp.with_target(target).unwrap();
        assert_eq!(ok.rho_max(), 2.0);
    }

    #[test]
    fn singular_features_are_rejected() {
        let f = FeatureMap::new(DMatrix::from_fn(5, 2, |_, j| j as f64 + 1.0)).unwrap();
        let err = exact_instance_matrices(&walk5(0.9).unwrap(), &f, GtdMode::Gtd, PolicyMode::OnPolicy).unwrap_err();
        assert!(matches!(err, Error::Singular { matrix: "A", .. }));
    }
}

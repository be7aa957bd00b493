//! Projected stochastic gradient descent-ascent for convex-concave saddle
//! problems, with step-size weighted iterate averaging.
//!
//! Sign convention: a problem's oracle returns `(g_x, g_y)` such that the
//! update is `x ← P(x − α g_x)` and `y ← P(y + α g_y)`, i.e. descent on the
//! minimizing block and ascent on the maximizing block.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};

/// Euclidean ball `{v : ‖v − center‖ ≤ radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallDomain {
    radius: f64,
    center: DVector<f64>,
}

impl BallDomain {
    /// Origin-centered ball.
    pub fn new(dimension: usize, radius: f64) -> Result<Self> {
        Self::with_center(DVector::zeros(dimension), radius)
    }

    pub fn with_center(center: DVector<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidArgument("ball dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("ball center must be finite".into()));
        }
        Ok(Self { radius, center })
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// `true` when `v` lies in the ball up to a relative slack of `1e-12`.
    pub fn contains(&self, v: &DVector<f64>) -> bool {
        v.len() == self.dimension() && (v - &self.center).norm() <= self.radius * (1.0 + 1e-12)
    }

    /// Euclidean projection onto the ball.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dimension(), v.len())?;
        let mut out = v.clone();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Projection without the dimension check; the caller guarantees sizes.
    pub fn project_in_place(&self, v: &mut DVector<f64>) {
        debug_assert_eq!(v.len(), self.dimension());
        let norm = (&*v - &self.center).norm();
        // A rescaled point can land a few ulps outside; leaving those alone
        // keeps the projection exactly idempotent.
        if norm > self.radius * (1.0 + 4.0 * f64::EPSILON) {
            *v -= &self.center;
            *v *= self.radius / norm;
            *v += &self.center;
        }
    }
}

/// A point `z = (x, y)` of the product domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl SaddlePoint {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(dim_x: usize, dim_y: usize) -> Self {
        Self { x: DVector::zeros(dim_x), y: DVector::zeros(dim_y) }
    }

    /// Euclidean norm of the stacked vector.
    pub fn distance(&self, other: &SaddlePoint) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.y - &other.y).norm_squared()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScheduleKind {
    /// `α_t = c`
    Constant,
    /// `α_t = c / √t`
    InvSqrt,
    /// `α_t = c / t`
    Inv,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::InvSqrt => "inv_sqrt",
            ScheduleKind::Inv => "inv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" | "const" | "c" => Some(ScheduleKind::Constant),
            "inv_sqrt" | "invsqrt" | "1/sqrt(t)" => Some(ScheduleKind::InvSqrt),
            "inv" | "1/t" => Some(ScheduleKind::Inv),
            _ => None,
        }
    }
}

/// Non-increasing step-size sequence indexed from `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    kind: ScheduleKind,
    coefficient: f64,
}

impl StepSchedule {
    pub fn new(kind: ScheduleKind, coefficient: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step coefficient must be positive, got {coefficient}"
            )));
        }
        Ok(Self { kind, coefficient })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, c)
    }

    pub fn inv_sqrt(c: f64) -> Result<Self> {
        Self::new(ScheduleKind::InvSqrt, c)
    }

    pub fn inv(c: f64) -> Result<Self> {
        Self::new(ScheduleKind::Inv, c)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// Step size at 1-based iteration `t` (`t = 0` is treated as `t = 1`).
    pub fn alpha(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match self.kind {
            ScheduleKind::Constant => self.coefficient,
            ScheduleKind::InvSqrt => self.coefficient / t.sqrt(),
            ScheduleKind::Inv => self.coefficient / t,
        }
    }

    /// Largest step, `α_1`.
    pub fn initial(&self) -> f64 {
        self.coefficient
    }

    /// `Σ α_t` and `Σ α_t²` over `t = 1..=horizon`.
    pub fn sums(&self, horizon: usize) -> StepSums {
        if self.kind == ScheduleKind::Constant {
            let n = horizon as f64;
            return StepSums {
                sum: n * self.coefficient,
                sum_sq: n * self.coefficient * self.coefficient,
            };
        }
        let mut sum = CompensatedSum::default();
        let mut sum_sq = CompensatedSum::default();
        for t in 1..=horizon {
            let a = self.alpha(t);
            sum.add(a);
            sum_sq.add(a * a);
        }
        StepSums { sum: sum.value(), sum_sq: sum_sq.value() }
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.kind.name(), self.coefficient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSums {
    pub sum: f64,
    pub sum_sq: f64,
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Partial gradients returned by a stochastic oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialGradient {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl PartialGradient {
    pub fn zeros(dim_x: usize, dim_y: usize) -> Self {
        Self { x: DVector::zeros(dim_x), y: DVector::zeros(dim_y) }
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }
}

/// `min_x max_y E_ξ[Φ(x, y, ξ)]` over a product of balls, accessed through
/// a per-sample gradient oracle. Samples are indices emitted by a
/// [`crate::markov::SampleStream`].
pub trait StochasticSaddleProblem {
    fn domain_x(&self) -> &BallDomain;
    fn domain_y(&self) -> &BallDomain;

    /// Writes `(g_x, g_y)` at `z` for sample `xi` into `out`.
    fn sample_gradient(&self, z: &SaddlePoint, xi: usize, out: &mut PartialGradient);

    /// Expected gradient, when the problem knows it in closed form.
    fn expected_gradient(&self, _z: &SaddlePoint) -> Option<PartialGradient> {
        None
    }
}

impl<P: StochasticSaddleProblem + ?Sized> StochasticSaddleProblem for &P {
    fn domain_x(&self) -> &BallDomain {
        (**self).domain_x()
    }
    fn domain_y(&self) -> &BallDomain {
        (**self).domain_y()
    }
    fn sample_gradient(&self, z: &SaddlePoint, xi: usize, out: &mut PartialGradient) {
        (**self).sample_gradient(z, xi, out)
    }
    fn expected_gradient(&self, z: &SaddlePoint) -> Option<PartialGradient> {
        (**self).expected_gradient(z)
    }
}

fn check_point<P: StochasticSaddleProblem + ?Sized>(problem: &P, z: &SaddlePoint) -> Result<()> {
    check_dim(problem.domain_x().dimension(), z.x.len())?;
    check_dim(problem.domain_y().dimension(), z.y.len())
}

fn apply_step<P: StochasticSaddleProblem + ?Sized>(
    problem: &P,
    z: &mut SaddlePoint,
    grad: &PartialGradient,
    alpha: f64,
) {
    z.x.axpy(-alpha, &grad.x, 1.0);
    z.y.axpy(alpha, &grad.y, 1.0);
    problem.domain_x().project_in_place(&mut z.x);
    problem.domain_y().project_in_place(&mut z.y);
    debug_assert!(problem.domain_x().contains(&z.x) && problem.domain_y().contains(&z.y));
}

/// One projected descent-ascent step. `t` only labels errors.
pub fn sgd_step<P: StochasticSaddleProblem + ?Sized>(
    problem: &P,
    z: &SaddlePoint,
    xi: usize,
    alpha: f64,
    t: usize,
) -> Result<SaddlePoint> {
    check_point(problem, z)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {alpha}")));
    }
    let mut grad = PartialGradient::zeros(z.x.len(), z.y.len());
    problem.sample_gradient(z, xi, &mut grad);
    if !grad.is_finite() {
        return Err(Error::NonFinite { t, sample: xi });
    }
    let mut next = z.clone();
    apply_step(problem, &mut next, &grad, alpha);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    /// `z̃_1^t = Σ_{s≤t} α_s z_s / Σ_{s≤t} α_s`
    pub average: SaddlePoint,
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedTrajectory {
    pub checkpoints: Vec<Checkpoint>,
    /// `z̃_1^T`
    pub average: SaddlePoint,
    pub weight_sum: f64,
    /// `z_{T+1}`, the iterate after the final update.
    pub last: SaddlePoint,
}

/// Running weighted average `z̃ ← z̃ + (α_t / Γ_t)(z_t − z̃)` with `Γ_t`
/// accumulated by compensated summation.
#[derive(Debug, Clone)]
pub struct WeightedAverage {
    average: SaddlePoint,
    weight: CompensatedSum,
}

impl WeightedAverage {
    pub fn new(dim_x: usize, dim_y: usize) -> Self {
        Self { average: SaddlePoint::zeros(dim_x, dim_y), weight: CompensatedSum::default() }
    }

    pub fn push(&mut self, z: &SaddlePoint, alpha: f64) {
        self.weight.add(alpha);
        let ratio = alpha / self.weight.value();
        self.average.x.zip_apply(&z.x, |a, v| *a += ratio * (v - *a));
        self.average.y.zip_apply(&z.y, |a, v| *a += ratio * (v - *a));
    }

    pub fn average(&self) -> &SaddlePoint {
        &self.average
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight.value()
    }
}

/// Runs `horizon` projected SGD steps from `start`, drawing one sample per
/// step, and records the weighted average at each checkpoint.
pub fn run_sgd<P, I>(
    problem: &P,
    stream: &mut I,
    schedule: &StepSchedule,
    horizon: usize,
    start: &SaddlePoint,
    checkpoints: &[usize],
) -> Result<AveragedTrajectory>
where
    P: StochasticSaddleProblem + ?Sized,
    I: Iterator<Item = usize> + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    check_point(problem, start)?;
    if !problem.domain_x().contains(&start.x) || !problem.domain_y().contains(&start.y) {
        return Err(Error::InvalidArgument("start point lies outside the domain".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("checkpoints must be strictly increasing".into()));
    }
    if let (Some(&first), Some(&last)) = (checkpoints.first(), checkpoints.last()) {
        if first == 0 || last > horizon {
            return Err(Error::InvalidArgument(format!(
                "checkpoints must lie in [1, {horizon}]"
            )));
        }
    }

    let (nx, ny) = (start.x.len(), start.y.len());
    let mut z = start.clone();
    let mut grad = PartialGradient::zeros(nx, ny);
    let mut avg = WeightedAverage::new(nx, ny);
    let mut recorded = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = checkpoints.iter().peekable();

    for t in 1..=horizon {
        let xi = stream
            .next()
            .ok_or(Error::StreamExhausted { drawn: t - 1, needed: horizon })?;
        let alpha = schedule.alpha(t);
        avg.push(&z, alpha);
        if next_checkpoint.peek() == Some(&&t) {
            next_checkpoint.next();
            recorded.push(Checkpoint { t, average: avg.average().clone(), weight_sum: avg.weight_sum() });
        }
        problem.sample_gradient(&z, xi, &mut grad);
        if !grad.is_finite() {
            return Err(Error::NonFinite { t, sample: xi });
        }
        apply_step(problem, &mut z, &grad, alpha);
    }

    Ok(AveragedTrajectory {
        checkpoints: recorded,
        average: avg.average().clone(),
        weight_sum: avg.weight_sum(),
        last: z,
    })
}

/// `count` log-spaced integer checkpoints in `[low, high]`, deduplicated.
pub fn log_spaced_checkpoints(low: usize, high: usize, count: usize) -> Vec<usize> {
    let low = low.max(1);
    if high <= low || count <= 1 {
        return vec![high.max(1)];
    }
    let (a, b) = ((low as f64).ln(), (high as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .map(|t| t.clamp(low, high))
        .collect();
    out.dedup();
    if out.last() != Some(&high) {
        out.push(high);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Linear problem with a fixed gradient regardless of the point.
    struct Fixed {
        dx: BallDomain,
        dy: BallDomain,
        gx: DVector<f64>,
        gy: DVector<f64>,
    }

    impl StochasticSaddleProblem for Fixed {
        fn domain_x(&self) -> &BallDomain {
            &self.dx
        }
        fn domain_y(&self) -> &BallDomain {
            &self.dy
        }
        fn sample_gradient(&self, _z: &SaddlePoint, _xi: usize, out: &mut PartialGradient) {
            out.x.copy_from(&self.gx);
            out.y.copy_from(&self.gy);
        }
    }

    fn fixed(gx: &[f64], gy: &[f64], radius: f64) -> Fixed {
        Fixed {
            dx: BallDomain::new(gx.len(), radius).unwrap(),
            dy: BallDomain::new(gy.len(), radius).unwrap(),
            gx: DVector::from_row_slice(gx),
            gy: DVector::from_row_slice(gy),
        }
    }

    /// Gradient depends on the sample: a random walk the averaging must track.
    struct Noisy {
        d: BallDomain,
    }

    impl StochasticSaddleProblem for Noisy {
        fn domain_x(&self) -> &BallDomain {
            &self.d
        }
        fn domain_y(&self) -> &BallDomain {
            &self.d
        }
        fn sample_gradient(&self, z: &SaddlePoint, xi: usize, out: &mut PartialGradient) {
            let s = (xi as f64 * 0.37).sin();
            out.x.fill(s);
            out.x += &z.x * 0.5;
            out.y.fill(-s);
            out.y -= &z.y * 0.5;
        }
    }

    #[test]
    fn projection_examples() {
        let ball = BallDomain::new(2, 1.0).unwrap();
        let zero = DVector::zeros(2);
        assert_eq!(ball.project(&zero).unwrap(), zero);
        let p = ball.project(&DVector::from_row_slice(&[3.0, 4.0])).unwrap();
        assert_relative_eq!(p[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.8, epsilon = 1e-15);
        assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-15);
        let ball2 = BallDomain::new(2, 2.0).unwrap();
        let inside = DVector::from_row_slice(&[0.0, 1.0]);
        assert_eq!(ball2.project(&inside).unwrap(), inside);
        assert_eq!(ball.diameter(), 2.0);
    }

    #[test]
    fn projection_respects_center() {
        let ball = BallDomain::with_center(DVector::from_row_slice(&[1.0, 1.0]), 1.0).unwrap();
        let p = ball.project(&DVector::from_row_slice(&[4.0, 5.0])).unwrap();
        assert_relative_eq!(p[0], 1.6, epsilon = 1e-15);
        assert_relative_eq!(p[1], 1.8, epsilon = 1e-15);
    }

    #[test]
    fn projection_rejects_wrong_dimension() {
        let ball = BallDomain::new(3, 1.0).unwrap();
        assert_eq!(
            ball.project(&DVector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        );
        assert!(BallDomain::new(2, 0.0).is_err());
        assert!(BallDomain::new(0, 1.0).is_err());
    }

    #[test]
    fn schedules_start_at_coefficient() {
        for kind in [ScheduleKind::Constant, ScheduleKind::InvSqrt, ScheduleKind::Inv] {
            let s = StepSchedule::new(kind, 0.3).unwrap();
            assert_eq!(s.alpha(1), 0.3);
            assert_eq!(s.initial(), 0.3);
        }
        assert_relative_eq!(StepSchedule::inv_sqrt(0.015).unwrap().alpha(4), 0.0075);
        assert_relative_eq!(StepSchedule::inv(0.03).unwrap().alpha(3), 0.01);
        assert!(StepSchedule::constant(-1.0).is_err());
    }

    #[test]
    fn schedule_monotone_to_a_million() {
        for kind in [ScheduleKind::Constant, ScheduleKind::InvSqrt, ScheduleKind::Inv] {
            let s = StepSchedule::new(kind, 0.7).unwrap();
            let mut prev = s.alpha(1);
            for t in 2..=1_000_000 {
                let a = s.alpha(t);
                assert!(a <= prev, "{kind:?} increases at t = {t}");
                prev = a;
            }
        }
    }

    #[test]
    fn schedule_sums_match_direct_loops() {
        let s = StepSchedule::inv(0.5).unwrap();
        let sums = s.sums(1000);
        let direct: f64 = (1..=1000).map(|t| 0.5 / t as f64).sum();
        assert_relative_eq!(sums.sum, direct, max_relative = 1e-13);
        let c = StepSchedule::constant(0.25).unwrap().sums(400);
        assert_eq!(c.sum, 100.0);
        assert_eq!(c.sum_sq, 25.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let p = fixed(&[0.0, 0.0], &[0.0], 1.0);
        let z = SaddlePoint::new(DVector::from_row_slice(&[0.3, -0.2]), DVector::from_row_slice(&[0.1]));
        assert_eq!(sgd_step(&p, &z, 0, 0.5, 1).unwrap(), z);
    }

    #[test]
    fn one_dimensional_hand_step() {
        let p = fixed(&[1.0], &[0.0], 1.0);
        let z = SaddlePoint::zeros(1, 1);
        let next = sgd_step(&p, &z, 0, 0.1, 1).unwrap();
        assert_relative_eq!(next.x[0], -0.1, epsilon = 1e-15);
        // ascent on y
        let q = fixed(&[0.0], &[2.0], 1.0);
        assert_relative_eq!(sgd_step(&q, &z, 0, 0.1, 1).unwrap().y[0], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_gradient_reports_step_and_sample() {
        let p = fixed(&[f64::NAN], &[0.0], 1.0);
        let z = SaddlePoint::zeros(1, 1);
        assert_eq!(sgd_step(&p, &z, 7, 0.1, 42), Err(Error::NonFinite { t: 42, sample: 7 }));
        let mut stream = std::iter::repeat(3usize);
        let sched = StepSchedule::constant(0.1).unwrap();
        assert_eq!(
            run_sgd(&p, &mut stream, &sched, 5, &z, &[]).unwrap_err(),
            Error::NonFinite { t: 1, sample: 3 }
        );
    }

    #[test]
    fn single_step_average_is_start() {
        let p = fixed(&[1.0], &[1.0], 5.0);
        let z1 = SaddlePoint::new(DVector::from_row_slice(&[0.4]), DVector::from_row_slice(&[-0.4]));
        let mut stream = 0..;
        let traj =
            run_sgd(&p, &mut stream, &StepSchedule::constant(0.1).unwrap(), 1, &z1, &[1]).unwrap();
        assert_eq!(traj.average, z1);
        assert_eq!(traj.checkpoints[0].average, z1);
        assert_relative_eq!(traj.last.x[0], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn zero_gradients_keep_average_at_start() {
        let p = fixed(&[0.0, 0.0], &[0.0, 0.0], 1.0);
        let z1 = SaddlePoint::new(DVector::from_row_slice(&[0.5, 0.1]), DVector::from_row_slice(&[0.0, -0.3]));
        let mut stream = 0..;
        let traj = run_sgd(&p, &mut stream, &StepSchedule::constant(0.01).unwrap(), 500, &z1, &[10, 100, 500])
            .unwrap();
        for cp in &traj.checkpoints {
            assert!(cp.average.distance(&z1) < 1e-14);
        }
    }

    #[test]
    fn stream_exhaustion_is_reported() {
        let p = fixed(&[0.0], &[0.0], 1.0);
        let mut stream = vec![0usize, 1, 2].into_iter();
        let err = run_sgd(&p, &mut stream, &StepSchedule::constant(0.1).unwrap(), 5, &SaddlePoint::zeros(1, 1), &[])
            .unwrap_err();
        assert_eq!(err, Error::StreamExhausted { drawn: 3, needed: 5 });
    }

    #[test]
    fn rejects_bad_checkpoints() {
        let p = fixed(&[0.0], &[0.0], 1.0);
        let s = StepSchedule::constant(0.1).unwrap();
        let z = SaddlePoint::zeros(1, 1);
        assert!(run_sgd(&p, &mut (0..), &s, 5, &z, &[3, 2]).is_err());
        assert!(run_sgd(&p, &mut (0..), &s, 5, &z, &[6]).is_err());
        assert!(run_sgd(&p, &mut (0..), &s, 0, &z, &[]).is_err());
    }

    #[test]
    fn running_average_matches_batch_formula() {
        let p = Noisy { d: BallDomain::new(3, 0.8).unwrap() };
        for sched in [StepSchedule::constant(0.2).unwrap(), StepSchedule::inv_sqrt(0.9).unwrap(), StepSchedule::inv(1.5).unwrap()] {
            let horizon = 10_000;
            // batch recomputation over stored iterates
            let mut z = SaddlePoint::zeros(3, 3);
            let mut num_x = DVector::zeros(3);
            let mut num_y = DVector::zeros(3);
            let mut den = 0.0;
            for t in 1..=horizon {
                let a = sched.alpha(t);
                num_x += &z.x * a;
                num_y += &z.y * a;
                den += a;
                z = sgd_step(&p, &z, t - 1, a, t).unwrap();
            }
            let traj = run_sgd(&p, &mut (0..), &sched, horizon, &SaddlePoint::zeros(3, 3), &[horizon]).unwrap();
            let batch = SaddlePoint::new(num_x / den, num_y / den);
            let rel = traj.average.distance(&batch) / batch.distance(&SaddlePoint::zeros(3, 3));
            assert!(rel <= 1e-10, "{sched:?}: relative error {rel}");
            assert_eq!(traj.last, z);
        }
    }

    #[test]
    fn checkpoints_are_log_spaced_and_bounded() {
        let c = log_spaced_checkpoints(10, 200_000, 30);
        assert_eq!(c.first(), Some(&10));
        assert_eq!(c.last(), Some(&200_000));
        assert!(c.len() <= 30 && c.len() >= 25);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_spaced_checkpoints(10, 10, 30), vec![10]);
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_inside(v in prop::collection::vec(-50.0f64..50.0, 4), r in 0.1f64..10.0) {
            let ball = BallDomain::new(4, r).unwrap();
            let p = ball.project(&DVector::from_vec(v)).unwrap();
            prop_assert!(ball.contains(&p));
            prop_assert_eq!(ball.project(&p).unwrap(), p);
        }

        #[test]
        fn projection_non_expansive(
            u in prop::collection::vec(-20.0f64..20.0, 3),
            v in prop::collection::vec(-20.0f64..20.0, 3),
            c in prop::collection::vec(-2.0f64..2.0, 3),
            r in 0.1f64..5.0,
        ) {
            let ball = BallDomain::with_center(DVector::from_vec(c), r).unwrap();
            let (u, v) = (DVector::from_vec(u), DVector::from_vec(v));
            let d = (ball.project(&u).unwrap() - ball.project(&v).unwrap()).norm();
            prop_assert!(d <= (u - v).norm() + 1e-12);
        }
    }
}

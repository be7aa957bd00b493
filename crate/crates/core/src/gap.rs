//! Exact primal-dual gap for bilinear-quadratic saddle functions
//!
//! `φ(x, y) = ⟨b − A x, y⟩ + (μ/2)‖x‖² − ½ yᵀ M y`
//!
//! over a product of balls. Both inner problems have closed forms (or a
//! one-dimensional secular equation), so the gap carries no solver noise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::saddle::{BallDomain, PartialGradient, SaddlePoint, StochasticSaddleProblem};

const MAX_BISECTION: usize = 200;

#[derive(Debug, Clone)]
pub struct BilinearQuadraticProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    quad_x: f64,
    m_y: DMatrix<f64>,
    domain_x: BallDomain,
    domain_y: BallDomain,
    m_identity: bool,
    m_eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl BilinearQuadraticProblem {
    /// `a` is `dim_y × dim_x`, `b` has length `dim_y`, `m_y` is symmetric
    /// positive semidefinite `dim_y × dim_y`.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        quad_x: f64,
        m_y: DMatrix<f64>,
        domain_x: BallDomain,
        domain_y: BallDomain,
    ) -> Result<Self> {
        let (ny, nx) = a.shape();
        check_dim(domain_x.dimension(), nx)?;
        check_dim(domain_y.dimension(), ny)?;
        check_dim(ny, b.len())?;
        check_dim(ny, m_y.nrows())?;
        check_dim(ny, m_y.ncols())?;
        if !(quad_x >= 0.0 && quad_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("quadratic coefficient must be >= 0, got {quad_x}")));
        }
        let scale = m_y.amax().max(1.0);
        if (&m_y - m_y.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("M_y must be symmetric".into()));
        }
        let m_eigen = SymmetricEigen::new(m_y.clone());
        if m_eigen.eigenvalues.min() < -1e-12 * scale {
            return Err(Error::InvalidArgument("M_y must be positive semidefinite".into()));
        }
        let m_identity = m_y == DMatrix::identity(ny, ny);
        Ok(Self { a, b, quad_x, m_y, domain_x, domain_y, m_identity, m_eigen })
    }

    /// GTD form `⟨b − A x, y⟩ − ½‖y‖²_M`.
    pub fn gtd_form(a: DMatrix<f64>, b: DVector<f64>, m: DMatrix<f64>, radius_x: f64, radius_y: f64) -> Result<Self> {
        let (ny, nx) = a.shape();
        Self::new(a, b, 0.0, m, BallDomain::new(nx, radius_x)?, BallDomain::new(ny, radius_y)?)
    }

    /// `⟨b − A x, y⟩ + ½‖x‖² − ½‖y‖²`.
    pub fn regularized_form(a: DMatrix<f64>, b: DVector<f64>, radius_x: f64, radius_y: f64) -> Result<Self> {
        let (ny, nx) = a.shape();
        Self::new(a, b, 1.0, DMatrix::identity(ny, ny), BallDomain::new(nx, radius_x)?, BallDomain::new(ny, radius_y)?)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn quad_x(&self) -> f64 {
        self.quad_x
    }

    pub fn m_y(&self) -> &DMatrix<f64> {
        &self.m_y
    }

    pub fn dim_x(&self) -> usize {
        self.a.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.a.nrows()
    }

    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let r = &self.b - &self.a * x;
        r.dot(y) + 0.5 * self.quad_x * x.norm_squared() - 0.5 * y.dot(&(&self.m_y * y))
    }

    /// Bound on `‖∇φ‖` over the domain, combined as `√2·√(L_x² + L_y²)`.
    pub fn lipschitz_bound(&self) -> f64 {
        let rx = self.domain_x.center().norm() + self.domain_x.radius();
        let ry = self.domain_y.center().norm() + self.domain_y.radius();
        let a_norm = spectral_norm(&self.a);
        let m_norm = self.m_eigen.eigenvalues.amax();
        let lx = a_norm * ry + self.quad_x * rx;
        let ly = self.b.norm() + a_norm * rx + m_norm * ry;
        std::f64::consts::SQRT_2 * (lx * lx + ly * ly).sqrt()
    }

    /// Unconstrained saddle point: solves the stationarity system
    /// `μ x = Aᵀ y`, `b − A x = M y`. `None` when the system is singular.
    pub fn unconstrained_saddle(&self) -> Option<SaddlePoint> {
        let (ny, nx) = self.a.shape();
        let mut k = DMatrix::zeros(nx + ny, nx + ny);
        k.view_mut((0, 0), (nx, nx)).copy_from(&(DMatrix::identity(nx, nx) * self.quad_x));
        k.view_mut((0, nx), (nx, ny)).copy_from(&(-self.a.transpose()));
        k.view_mut((nx, 0), (ny, nx)).copy_from(&self.a);
        k.view_mut((nx, nx), (ny, ny)).copy_from(&self.m_y);
        let mut rhs = DVector::zeros(nx + ny);
        rhs.rows_mut(nx, ny).copy_from(&self.b);
        let sol = k.lu().solve(&rhs)?;
        Some(SaddlePoint::new(sol.rows(0, nx).into_owned(), sol.rows(nx, ny).into_owned()))
    }

    pub fn domain_x(&self) -> &BallDomain {
        &self.domain_x
    }

    pub fn domain_y(&self) -> &BallDomain {
        &self.domain_y
    }
}

impl StochasticSaddleProblem for BilinearQuadraticProblem {
    fn domain_x(&self) -> &BallDomain {
        &self.domain_x
    }

    fn domain_y(&self) -> &BallDomain {
        &self.domain_y
    }

    fn sample_gradient(&self, z: &SaddlePoint, _xi: usize, out: &mut PartialGradient) {
        // g_x = μ x − Aᵀ y ; g_y = b − A x − M y
        out.x.copy_from(&z.x);
        out.x.gemv_tr(-1.0, &self.a, &z.y, self.quad_x);
        out.y.copy_from(&self.b);
        out.y.gemv(-1.0, &self.a, &z.x, 1.0);
        out.y.gemv(-1.0, &self.m_y, &z.y, 1.0);
    }

    fn expected_gradient(&self, z: &SaddlePoint) -> Option<PartialGradient> {
        let mut g = PartialGradient::zeros(self.dim_x(), self.dim_y());
        self.sample_gradient(z, 0, &mut g);
        Some(g)
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub argopt: DVector<f64>,
    pub value: f64,
    /// Bisection steps spent on the secular equation (0 for closed forms).
    pub iterations: usize,
    /// Lagrange multiplier of the ball constraint on the y side.
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub gap: f64,
    pub inner_max_y: DVector<f64>,
    pub inner_min_x: DVector<f64>,
    pub max_value: f64,
    pub min_value: f64,
    pub iterations: usize,
}

/// `argmax_{y ∈ 𝒳_y} φ(x̃, y)`.
pub fn inner_max_y(problem: &BilinearQuadraticProblem, x: &DVector<f64>) -> Result<InnerSolution> {
    check_dim(problem.dim_x(), x.len())?;
    let dom = &problem.domain_y;
    let center = dom.center();
    let radius = dom.radius();
    // In u = y − center the objective is c'ᵀu − ½uᵀMu + const.
    let c = &problem.b - &problem.a * x - &problem.m_y * center;

    let (u, iterations, multiplier) = if problem.m_identity {
        let mut u = c.clone();
        let n = u.norm();
        let mult = if n > radius {
            u *= radius / n;
            n / radius - 1.0
        } else {
            0.0
        };
        (u, 0, mult)
    } else {
        secular_maximizer(&problem.m_eigen, &c, radius)?
    };
    let y = u + center;
    let value = problem.value(x, &y);
    Ok(InnerSolution { argopt: y, value, iterations, multiplier })
}

/// Maximizes `cᵀu − ½uᵀMu` over `‖u‖ ≤ radius` through the eigenbasis of M.
fn secular_maximizer(
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    c: &DVector<f64>,
    radius: f64,
) -> Result<(DVector<f64>, usize, f64)> {
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let coeffs = q.tr_mul(c);
    let c_norm = coeffs.norm();
    if c_norm == 0.0 {
        return Ok((DVector::zeros(c.len()), 0, 0.0));
    }
    let lam_tol = 1e-14 * lam.amax().max(1.0);
    let coeff_tol = 1e-14 * c_norm;

    let norm_at = |mu: f64| -> f64 {
        coeffs
            .iter()
            .zip(lam.iter())
            .map(|(ci, li)| {
                let d = li.max(0.0) + mu;
                if d <= lam_tol && ci.abs() <= coeff_tol {
                    0.0
                } else {
                    (ci / d).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let solution_at = |mu: f64| -> DVector<f64> {
        let scaled = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(lam.iter()).map(|(ci, li)| {
                let d = li.max(0.0) + mu;
                if d <= lam_tol && ci.abs() <= coeff_tol {
                    0.0
                } else {
                    ci / d
                }
            }),
        );
        q * scaled
    };

    // Unconstrained maximizer exists (pseudo-inverse) when c has no
    // component along the null space of M.
    let bounded = coeffs.iter().zip(lam.iter()).all(|(ci, li)| *li > lam_tol || ci.abs() <= coeff_tol);
    if bounded && norm_at(0.0) <= radius {
        return Ok((solution_at(0.0), 0, 0.0));
    }

    let tol = 1e-12 * radius.max(1.0);
    let mut lo = 0.0;
    let mut hi = c_norm / radius;
    let mut iterations = 0;
    while norm_at(hi) > radius {
        hi *= 2.0;
        iterations += 1;
        if iterations >= MAX_BISECTION {
            return Err(Error::Solver { residual: norm_at(hi) - radius });
        }
    }
    let mut residual = norm_at(hi) - radius;
    while residual.abs() > tol {
        if iterations >= MAX_BISECTION {
            return Err(Error::Solver { residual });
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let n = norm_at(mid);
        if n > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        residual = norm_at(hi) - radius;
    }
    if residual.abs() > 1e-10 * radius.max(1.0) {
        return Err(Error::Solver { residual });
    }
    let mut u = solution_at(hi);
    let n = u.norm();
    if n > radius {
        u *= radius / n;
    }
    Ok((u, iterations, hi))
}

/// `argmin_{x ∈ 𝒳_x} φ(x, ỹ)`.
pub fn inner_min_x(problem: &BilinearQuadraticProblem, y: &DVector<f64>) -> Result<InnerSolution> {
    check_dim(problem.dim_y(), y.len())?;
    let dom = &problem.domain_x;
    // x-dependent part: −dᵀx + (μ/2)‖x‖² with d = Aᵀỹ
    let d = problem.a.tr_mul(y);
    let x = if problem.quad_x > 0.0 {
        let mut v = d / problem.quad_x;
        dom.project_in_place(&mut v);
        v
    } else {
        let n = d.norm();
        if n == 0.0 {
            dom.center().clone()
        } else {
            dom.center() + d * (dom.radius() / n)
        }
    };
    let value = problem.value(&x, y);
    Ok(InnerSolution { argopt: x, value, iterations: 0, multiplier: 0.0 })
}

/// `Err_φ(z̃) = max_y φ(x̃, y) − min_x φ(x, ỹ)`.
pub fn primal_dual_gap(problem: &BilinearQuadraticProblem, z: &SaddlePoint) -> Result<GapReport> {
    let max = inner_max_y(problem, &z.x)?;
    let min = inner_min_x(problem, &z.y)?;
    Ok(GapReport {
        gap: max.value - min.value,
        inner_max_y: max.argopt,
        inner_min_x: min.argopt,
        max_value: max.value,
        min_value: min.value,
        iterations: max.iterations + min.iterations,
    })
}

/// Grid points (per-axis uniform, `resolution` per axis) inside a ball.
fn ball_grid(dom: &BallDomain, resolution: usize) -> Vec<DVector<f64>> {
    let dim = dom.dimension();
    let r = dom.radius();
    let step = 2.0 * r / (resolution - 1) as f64;
    let total = resolution.pow(dim as u32);
    let mut out = Vec::new();
    for flat in 0..total {
        let mut rem = flat;
        let mut offset = DVector::zeros(dim);
        for k in 0..dim {
            offset[k] = -r + step * (rem % resolution) as f64;
            rem /= resolution;
        }
        if offset.norm() <= r * (1.0 + 1e-12) {
            out.push(offset + dom.center());
        }
    }
    out
}

/// Grid-search estimate of the gap; exponential in dimension, so limited to
/// at most three coordinates per block.
pub fn brute_force_gap(problem: &BilinearQuadraticProblem, z: &SaddlePoint, resolution: usize) -> Result<f64> {
    check_dim(problem.dim_x(), z.x.len())?;
    check_dim(problem.dim_y(), z.y.len())?;
    if problem.dim_x() > 3 || problem.dim_y() > 3 {
        return Err(Error::InvalidArgument(format!(
            "grid oracle limited to 3 dimensions per block, got ({}, {})",
            problem.dim_x(),
            problem.dim_y()
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
    }
    let max = ball_grid(&problem.domain_y, resolution)
        .iter()
        .map(|y| problem.value(&z.x, y))
        .fold(f64::NEG_INFINITY, f64::max);
    let min = ball_grid(&problem.domain_x, resolution)
        .iter()
        .map(|x| problem.value(x, &z.y))
        .fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

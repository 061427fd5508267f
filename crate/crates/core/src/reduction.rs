//! Saddle point reduction of Az = F'(z) onto the finite-dimensional middle
//! spectral subspace H⁰ of A.
//!
//! With the split of A at l, the outer components z± solve the contraction
//! z± = (A±)⁻¹P±F'(z± + x) for each x ∈ H⁰, and critical points of
//! a(x) = ½(Az, z) − F(z) are exactly the solutions of the full equation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{spectral_split, SpectralSplit, TruncatedOperator};

/// Gradient F' and potential F of a nonlinearity on coefficient vectors.
pub trait NonlinearMap: Send + Sync {
    fn dim(&self) -> usize;
    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>>;
    fn value(&self, z: &DVector<f64>) -> Result<f64>;
    /// Claimed Lipschitz constant l_F of the gradient.
    fn lipschitz_bound(&self) -> f64;

    fn origin_norm(&self) -> Result<f64> {
        Ok(self.gradient(&DVector::zeros(self.dim()))?.norm())
    }
}

/// F(z) = ½(Bz, z) + (h, z).
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub b: DMatrix<f64>,
    pub h: DVector<f64>,
    norm: f64,
}

impl LinearMap {
    pub fn new(b: &TruncatedOperator, h: Option<DVector<f64>>) -> Result<Self> {
        let h = h.unwrap_or_else(|| DVector::zeros(b.dim()));
        if h.len() != b.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("forcing of length {}", b.dim()),
                found: format!("{}", h.len()),
            });
        }
        Ok(Self {
            b: b.matrix.clone(),
            h,
            norm: b.norm(),
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            b: DMatrix::zeros(dim, dim),
            h: DVector::zeros(dim),
            norm: 0.0,
        }
    }
}

impl NonlinearMap for LinearMap {
    fn dim(&self) -> usize {
        self.h.len()
    }
    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.b * z + &self.h)
    }
    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * z.dot(&(&self.b * z)) + self.h.dot(z))
    }
    fn lipschitz_bound(&self) -> f64 {
        self.norm
    }
}

type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Nonlinearity given by a pair of closures.
pub struct FnMap {
    dim: usize,
    lipschitz: f64,
    gradient: Box<GradFn>,
    value: Box<ValueFn>,
}

impl FnMap {
    pub fn new(
        dim: usize,
        lipschitz: f64,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            lipschitz,
            gradient: Box::new(gradient),
            value: Box::new(value),
        }
    }
}

impl NonlinearMap for FnMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.gradient)(z))
    }
    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        Ok((self.value)(z))
    }
    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
}

/// ½(Bz, z) added to another nonlinearity.
struct WithQuadratic {
    quad: LinearMap,
    quad_weight: f64,
    inner: Arc<dyn NonlinearMap>,
    inner_weight: f64,
}

impl NonlinearMap for WithQuadratic {
    fn dim(&self) -> usize {
        self.quad.dim()
    }
    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = self.quad.gradient(z)? * self.quad_weight;
        if self.inner_weight != 0.0 {
            g += self.inner.gradient(z)? * self.inner_weight;
        }
        Ok(g)
    }
    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        let mut v = self.quad.value(z)? * self.quad_weight;
        if self.inner_weight != 0.0 {
            v += self.inner.value(z)? * self.inner_weight;
        }
        Ok(v)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.quad_weight.abs() * self.quad.lipschitz_bound()
            + self.inner_weight.abs() * self.inner.lipschitz_bound()
    }
}

/// F_λ(z) = (1−λ)·½(B₁z, z) + λ·F(z).
pub fn homotopy_map(
    b1: &TruncatedOperator,
    f: Arc<dyn NonlinearMap>,
    lambda: f64,
) -> Result<Arc<dyn NonlinearMap>> {
    Ok(Arc::new(WithQuadratic {
        quad: LinearMap::new(b1, None)?,
        quad_weight: 1.0 - lambda,
        inner: f,
        inner_weight: lambda,
    }))
}

/// ½(B∞z, z) + R(z) with R' = r.
pub fn asymptotically_linear_map(
    b_inf: &TruncatedOperator,
    r: Arc<dyn NonlinearMap>,
) -> Result<Arc<dyn NonlinearMap>> {
    Ok(Arc::new(WithQuadratic {
        quad: LinearMap::new(b_inf, None)?,
        quad_weight: 1.0,
        inner: r,
        inner_weight: 1.0,
    }))
}

pub const DEFAULT_CONTRACTION_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Consecutive expanding updates after which the iteration is abandoned.
const EXPANSION_PATIENCE: usize = 50;

/// The operator A split at l, together with the nonlinearity.
#[derive(Clone)]
pub struct ReducedProblem {
    pub a: TruncatedOperator,
    pub split: SpectralSplit,
    pub f: Arc<dyn NonlinearMap>,
    pub contraction_tol: f64,
    pub max_iter: usize,
    resolvent: DMatrix<f64>,
    e0: DMatrix<f64>,
}

impl std::fmt::Debug for ReducedProblem {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("ReducedProblem")
            .field("l", &self.split.l)
            .field("l_f", &self.f.lipschitz_bound())
            .field("dim", &self.a.dim())
            .field("dim_h0", &self.e0.ncols())
            .finish()
    }
}

impl ReducedProblem {
    /// Requires l_F < l and ±l off σ(A).
    pub fn new(a: TruncatedOperator, f: Arc<dyn NonlinearMap>, l: f64) -> Result<Self> {
        let l_f = f.lipschitz_bound();
        if !(l_f < l) {
            return Err(Error::HypothesisFailure {
                condition: "l_F < l".into(),
                detail: format!("l_F = {l_f}, l = {l}"),
            });
        }
        Self::new_unchecked(a, f, l)
    }

    /// Skips the l_F < l check. Convergence of the fixed point iteration is
    /// then only observed, not guaranteed.
    pub fn new_unchecked(a: TruncatedOperator, f: Arc<dyn NonlinearMap>, l: f64) -> Result<Self> {
        if f.dim() != a.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("nonlinearity of dimension {}", a.dim()),
                found: format!("{}", f.dim()),
            });
        }
        let split = spectral_split(&a, l)?;
        let resolvent = split.outer_resolvent(0.0);
        let e0 = split.zero_basis();
        Ok(Self {
            a,
            split,
            f,
            contraction_tol: DEFAULT_CONTRACTION_TOL,
            max_iter: DEFAULT_MAX_ITER,
            resolvent,
            e0,
        })
    }

    pub fn with_nonlinearity(&self, f: Arc<dyn NonlinearMap>) -> Result<Self> {
        let mut next = self.clone();
        if f.dim() != self.a.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("nonlinearity of dimension {}", self.a.dim()),
                found: format!("{}", f.dim()),
            });
        }
        next.f = f;
        Ok(next)
    }

    pub fn l(&self) -> f64 {
        self.split.l
    }

    pub fn dim_h0(&self) -> usize {
        self.e0.ncols()
    }

    /// Orthonormal eigenbasis of H⁰, one column per coordinate of x.
    pub fn h0_basis(&self) -> &DMatrix<f64> {
        &self.e0
    }

    /// l_F/l, the contraction factor of the outer fixed point map.
    pub fn contraction_factor(&self) -> f64 {
        self.f.lipschitz_bound() / self.l()
    }

    /// Embed H⁰ coordinates into the full coefficient space.
    pub fn embed(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.e0 * x
    }

    /// H⁰ coordinates of a full coefficient vector.
    pub fn coordinates(&self, z: &DVector<f64>) -> DVector<f64> {
        self.e0.tr_mul(z)
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim_h0() {
            return Err(Error::ShapeMismatch {
                expected: format!("H0 coordinates of length {}", self.dim_h0()),
                found: format!("{}", x.len()),
            });
        }
        Ok(())
    }

    /// ‖Az − F'(z)‖.
    pub fn residual(&self, z: &DVector<f64>) -> Result<f64> {
        Ok((self.a.apply(z) - self.f.gradient(z)?).norm())
    }

    /// ‖|A|^{1/2} w‖.
    pub fn energy_norm(&self, w: &DVector<f64>) -> f64 {
        let eig = &self.split.eig;
        let coords = eig.vectors.tr_mul(w);
        coords
            .iter()
            .zip(eig.values.iter())
            .map(|(c, v)| c * c * v.abs())
            .sum::<f64>()
            .sqrt()
    }
}

/// Outer fixed point z⁺(x) + z⁻(x) and its iteration history.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub z_plus: DVector<f64>,
    pub z_minus: DVector<f64>,
    /// Full field x + z⁺ + z⁻.
    pub z: DVector<f64>,
    pub iterations: usize,
    /// ‖w_{k+1} − w_k‖ / ‖w_k − w_{k−1}‖ for k ≥ 1.
    pub update_ratios: Vec<f64>,
}

impl FixedPoint {
    pub fn outer(&self) -> DVector<f64> {
        &self.z_plus + &self.z_minus
    }
}

/// Fixed point z±(x) from the zero initial iterate.
pub fn fixed_point_z(prob: &ReducedProblem, x: &DVector<f64>) -> Result<FixedPoint> {
    fixed_point_z_from(prob, x, None)
}

/// Fixed point z±(x) from an arbitrary outer initial iterate.
pub fn fixed_point_z_from(
    prob: &ReducedProblem,
    x: &DVector<f64>,
    initial: Option<&DVector<f64>>,
) -> Result<FixedPoint> {
    prob.check_x(x)?;
    let base = prob.embed(x);
    let mut w = match initial {
        Some(w0) => &prob.split.plus * w0 + &prob.split.minus * w0,
        None => DVector::zeros(prob.a.dim()),
    };
    let mut update_ratios = Vec::new();
    let mut previous: Option<f64> = None;
    let mut expanding = 0usize;
    for iteration in 1..=prob.max_iter {
        let next = &prob.resolvent * prob.f.gradient(&(&base + &w))?;
        let update = (&next - &w).norm();
        w = next;
        if let Some(prev) = previous {
            if prev > 0.0 {
                let ratio = update / prev;
                update_ratios.push(ratio);
                expanding = if ratio > 1.0 { expanding + 1 } else { 0 };
            }
        }
        if !update.is_finite() || expanding >= EXPANSION_PATIENCE {
            return Err(Error::NonContraction {
                iterations: iteration,
                last_update: update,
            });
        }
        if update <= prob.contraction_tol * w.norm().max(1.0) {
            let z_plus = &prob.split.plus * &w;
            let z_minus = &prob.split.minus * &w;
            return Ok(FixedPoint {
                z: base + &w,
                z_plus,
                z_minus,
                iterations: iteration,
                update_ratios,
            });
        }
        previous = Some(update);
    }
    Err(Error::NonContraction {
        iterations: prob.max_iter,
        last_update: previous.unwrap_or(f64::NAN),
    })
}

/// a(x) = ½(Az, z) − F(z).
pub fn reduced_value(prob: &ReducedProblem, x: &DVector<f64>) -> Result<f64> {
    let fp = fixed_point_z(prob, x)?;
    value_at(prob, &fp.z)
}

fn value_at(prob: &ReducedProblem, z: &DVector<f64>) -> Result<f64> {
    Ok(0.5 * z.dot(&prob.a.apply(z)) - prob.f.value(z)?)
}

/// a'(x) = P⁰(Az − F'(z)) in H⁰ coordinates.
pub fn reduced_gradient(prob: &ReducedProblem, x: &DVector<f64>) -> Result<DVector<f64>> {
    let fp = fixed_point_z(prob, x)?;
    gradient_at(prob, &fp.z)
}

fn gradient_at(prob: &ReducedProblem, z: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(prob.coordinates(&(prob.a.apply(z) - prob.f.gradient(z)?)))
}

/// Threshold l: midpoint of the widest gap of |σ(A)| inside (l_F, upper).
/// When l_F ≥ upper the search interval falls back to (0, upper).
pub fn choose_threshold(a: &TruncatedOperator, l_f: f64, upper: f64) -> Result<f64> {
    if !(upper > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold upper bound must be positive, got {upper}"
        )));
    }
    let lower = if l_f < upper { l_f.max(0.0) } else { 0.0 };
    let mut points: Vec<f64> = a
        .eigenvalues()
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > lower && v < upper)
        .collect();
    points.push(lower);
    points.push(upper);
    points.sort_by(f64::total_cmp);
    let (lo, hi) = points
        .windows(2)
        .map(|w| (w[0], w[1]))
        .max_by(|p, q| (p.1 - p.0).total_cmp(&(q.1 - q.0)))
        .expect("at least two points");
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Maximize,
    MultistartNewton,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub strategy: Strategy,
    /// Cap on reduced gradient and value evaluations across all starts.
    pub budget: usize,
    pub seed: u64,
    /// Number of starting points, the origin and axis points included.
    pub starts: usize,
    /// Half-width of the box the random starts are drawn from.
    pub radius: f64,
    pub grad_tol: f64,
    pub dedup_tol: f64,
    pub max_newton_iter: usize,
    pub parallel: bool,
    /// Starting points tried before the generated ones.
    pub initial: Vec<DVector<f64>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::MultistartNewton,
            budget: 200_000,
            seed: 0,
            starts: 24,
            radius: 4.0,
            grad_tol: 1e-8,
            dedup_tol: 1e-4,
            max_newton_iter: 60,
            parallel: true,
            initial: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CriticalPointReport {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub residual: f64,
    /// (negative, zero, positive) eigenvalue counts of the finite-difference
    /// Hessian of a.
    pub hessian_signature: (usize, usize, usize),
}

impl CriticalPointReport {
    pub fn z_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.z)
    }

    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct SearchDiagnostics {
    pub starts: usize,
    pub converged_starts: usize,
    pub failed_starts: usize,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    /// First failure message per distinct kind.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchOutcome {
    pub points: Vec<CriticalPointReport>,
    pub diagnostics: SearchDiagnostics,
}

struct Budget {
    used: AtomicUsize,
    limit: usize,
}

impl Budget {
    fn spend(&self, n: usize) -> Result<()> {
        let before = self.used.fetch_add(n, Ordering::Relaxed);
        if before + n > self.limit {
            Err(Error::NoConvergence("evaluation budget exhausted".into()))
        } else {
            Ok(())
        }
    }
}

/// Gradient of a with the outer fixed point warm started.
struct Evaluator<'a> {
    prob: &'a ReducedProblem,
    budget: &'a Budget,
}

impl Evaluator<'_> {
    fn point(&self, x: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.budget.spend(1)?;
        let fp = fixed_point_z_from(self.prob, x, warm)?;
        let g = gradient_at(self.prob, &fp.z)?;
        Ok((g, fp.outer()))
    }

    fn value(&self, x: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<(f64, DVector<f64>)> {
        self.budget.spend(1)?;
        let fp = fixed_point_z_from(self.prob, x, warm)?;
        Ok((value_at(self.prob, &fp.z)?, fp.outer()))
    }

    fn hessian(&self, x: &DVector<f64>, warm: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = x.len();
        let h = f64::EPSILON.cbrt() * (1.0 + x.norm());
        let mut hess = DMatrix::zeros(d, d);
        for i in 0..d {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (gp, _) = self.point(&xp, Some(warm))?;
            let (gm, _) = self.point(&xm, Some(warm))?;
            hess.set_column(i, &((gp - gm) / (2.0 * h)));
        }
        Ok((&hess + hess.transpose()) * 0.5)
    }
}

/// Finite-difference Hessian of a at x: central differences of a' with step
/// cbrt(eps)·(1 + ‖x‖).
pub fn reduced_hessian(prob: &ReducedProblem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    prob.check_x(x)?;
    let budget = Budget {
        used: AtomicUsize::new(0),
        limit: usize::MAX / 2,
    };
    let eval = Evaluator { prob, budget: &budget };
    let warm = fixed_point_z(prob, x)?.outer();
    eval.hessian(x, &warm)
}

/// (negative, zero, positive) counts with zero window 1e-6·max(1, ‖H‖).
pub fn signature(h: &DMatrix<f64>) -> (usize, usize, usize) {
    if h.is_empty() {
        return (0, 0, 0);
    }
    let values = h.clone().symmetric_eigenvalues();
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = 1e-6 * scale;
    let neg = values.iter().filter(|&&v| v < -tol).count();
    let pos = values.iter().filter(|&&v| v > tol).count();
    (neg, values.len() - neg - pos, pos)
}

struct Converged {
    x: DVector<f64>,
    outer: DVector<f64>,
    grad_norm: f64,
}

/// Damped Newton on the merit ‖a'‖², Levenberg damping when the Newton step
/// does not decrease it. After reaching `grad_tol`, polishing continues while
/// the gradient norm keeps decreasing.
fn newton(eval: &Evaluator<'_>, x0: &DVector<f64>, opts: &SearchOptions) -> Result<Converged> {
    let mut x = x0.clone();
    let (mut g, mut outer) = eval.point(&x, None)?;
    let mut gn = g.norm();
    let mut mu = 0.0_f64;
    let mut reached = gn <= opts.grad_tol;
    for _ in 0..opts.max_newton_iter {
        if reached && gn == 0.0 {
            break;
        }
        let hess = eval.hessian(&x, &outer)?;
        let mut improved = false;
        for _ in 0..12 {
            let step = levenberg_step(&hess, &g, mu);
            let Some(step) = step else {
                mu = next_mu(mu, &hess);
                continue;
            };
            let mut t = 1.0;
            for _ in 0..4 {
                let trial = &x + &step * t;
                if let Ok((gt, ot)) = eval.point(&trial, Some(&outer)) {
                    let gtn = gt.norm();
                    if gtn < gn {
                        x = trial;
                        g = gt;
                        gn = gtn;
                        outer = ot;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if improved {
                mu *= 0.1;
                if mu < 1e-12 {
                    mu = 0.0;
                }
                break;
            }
            mu = next_mu(mu, &hess);
        }
        if gn <= opts.grad_tol {
            if reached && !improved {
                break;
            }
            reached = true;
        }
        if !improved {
            break;
        }
    }
    if gn <= opts.grad_tol {
        Ok(Converged {
            x,
            outer,
            grad_norm: gn,
        })
    } else {
        Err(Error::NoConvergence(format!(
            "Newton stalled with |a'| = {gn:e}"
        )))
    }
}

fn next_mu(mu: f64, hess: &DMatrix<f64>) -> f64 {
    if mu == 0.0 {
        1e-6 * hess.norm().max(1.0)
    } else {
        mu * 10.0
    }
}

/// Solves (HᵀH + μI)δ = −Hᵀg, which is the Newton step for μ = 0.
fn levenberg_step(hess: &DMatrix<f64>, g: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    if mu == 0.0 {
        let step = hess.clone().lu().solve(&(-g))?;
        return step.iter().all(|v| v.is_finite()).then_some(step);
    }
    let d = g.len();
    let normal = hess.tr_mul(hess) + DMatrix::identity(d, d) * mu;
    let rhs = -hess.tr_mul(g);
    normal.cholesky().map(|c| c.solve(&rhs))
}

/// Armijo gradient ascent on a, then a Newton polish.
fn ascend(eval: &Evaluator<'_>, x0: &DVector<f64>, opts: &SearchOptions) -> Result<Converged> {
    let mut x = x0.clone();
    let (mut g, mut outer) = eval.point(&x, None)?;
    let (mut value, _) = eval.value(&x, Some(&outer))?;
    let mut step = 1.0;
    let switch = (opts.grad_tol * 1e3).max(1e-6);
    for _ in 0..500 {
        let gn2 = g.norm_squared();
        if gn2.sqrt() <= switch {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x + &g * step;
            if let Ok((vt, ot)) = eval.value(&trial, Some(&outer)) {
                if vt >= value + 1e-4 * step * gn2 {
                    x = trial;
                    value = vt;
                    outer = ot;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
        let (gx, ox) = eval.point(&x, Some(&outer))?;
        g = gx;
        outer = ox;
    }
    newton(eval, &x, opts)
}

/// Origin, ±r·eᵢ for r ∈ {radius/2, radius}, then uniform draws in the box.
pub fn start_lattice(dim: usize, count: usize, radius: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut starts = vec![DVector::zeros(dim)];
    for scale in [0.5, 1.0] {
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut v = DVector::zeros(dim);
                v[i] = sign * scale * radius;
                starts.push(v);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < count {
        starts.push(DVector::from_fn(dim, |_, _| rng.random_range(-radius..=radius)));
    }
    starts.truncate(count.max(1));
    starts
}

/// Critical points of the reduced functional a.
pub fn find_critical_points(prob: &ReducedProblem, opts: &SearchOptions) -> Result<SearchOutcome> {
    let dim = prob.dim_h0();
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "H0 is trivial; the reduced functional has no variables".into(),
        ));
    }
    if let Some(bad) = opts.initial.iter().find(|x| x.len() != dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("start of length {dim}"),
            found: format!("{}", bad.len()),
        });
    }
    let mut starts = opts.initial.clone();
    starts.extend(start_lattice(dim, opts.starts, opts.radius, opts.seed));

    let budget = Budget {
        used: AtomicUsize::new(0),
        limit: opts.budget,
    };
    let eval = Evaluator { prob, budget: &budget };
    let run = |x0: &DVector<f64>| match opts.strategy {
        Strategy::MultistartNewton => newton(&eval, x0, opts),
        Strategy::Maximize => ascend(&eval, x0, opts),
    };
    let results: Vec<Result<Converged>> = if opts.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };

    let mut diagnostics = SearchDiagnostics {
        starts: starts.len(),
        ..Default::default()
    };
    let mut kept: Vec<Converged> = Vec::new();
    for r in results {
        match r {
            Ok(c) => {
                diagnostics.converged_starts += 1;
                if kept.iter().all(|k| (&k.x - &c.x).norm() > opts.dedup_tol) {
                    kept.push(c);
                }
            }
            Err(e) => {
                diagnostics.failed_starts += 1;
                let msg = e.to_string();
                let kind = msg.split(':').next().unwrap_or("").to_string();
                if !diagnostics.failures.iter().any(|f| f.starts_with(&kind)) {
                    diagnostics.failures.push(msg);
                }
            }
        }
    }

    let mut points = Vec::with_capacity(kept.len());
    for c in kept {
        points.push(report(prob, &eval, c)?);
    }
    points.sort_by(|p, q| {
        p.value
            .total_cmp(&q.value)
            .then_with(|| lexicographic(&p.x, &q.x))
    });
    diagnostics.evaluations = budget.used.load(Ordering::Relaxed);
    diagnostics.budget_exhausted = diagnostics.evaluations > budget.limit;
    Ok(SearchOutcome { points, diagnostics })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn report(prob: &ReducedProblem, eval: &Evaluator<'_>, c: Converged) -> Result<CriticalPointReport> {
    let z = prob.embed(&c.x) + &c.outer;
    let value = value_at(prob, &z)?;
    let residual = prob.residual(&z)?;
    // the Hessian is diagnostic only, so it may overrun the budget
    let unlimited = Budget {
        used: AtomicUsize::new(0),
        limit: usize::MAX / 2,
    };
    let hess = Evaluator {
        prob: eval.prob,
        budget: &unlimited,
    }
    .hessian(&c.x, &c.outer)?;
    Ok(CriticalPointReport {
        x: c.x.iter().copied().collect(),
        z: z.iter().copied().collect(),
        value,
        grad_norm: c.grad_norm,
        residual,
        hessian_signature: signature(&hess),
    })
}

/// Newton from a single start, with the origin-to-lattice fallback.
fn solve_near(prob: &ReducedProblem, x0: &DVector<f64>, opts: &SearchOptions) -> Result<CriticalPointReport> {
    let budget = Budget {
        used: AtomicUsize::new(0),
        limit: opts.budget,
    };
    let eval = Evaluator { prob, budget: &budget };
    match newton(&eval, x0, opts) {
        Ok(c) => report(prob, &eval, c),
        Err(first) => {
            let mut fallback = opts.clone();
            fallback.strategy = Strategy::MultistartNewton;
            fallback.initial = vec![x0.clone()];
            let found = find_critical_points(prob, &fallback)?;
            found
                .points
                .into_iter()
                .min_by(|p, q| {
                    (&p.x_vector() - x0)
                        .norm()
                        .total_cmp(&(&q.x_vector() - x0).norm())
                })
                .ok_or(first)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegularizationOptions {
    /// Decreasing positive ε values, each below η.
    pub eps: Vec<f64>,
    /// Largest admissible kernel component ‖u_ε‖.
    pub kernel_ceiling: f64,
    /// Eigenvalues of A − B∞ below this magnitude span the kernel.
    pub kernel_tol: f64,
    /// Side of the shift: the step problem is (A + sign·ε) − B∞.
    pub sign: f64,
    pub search: SearchOptions,
}

impl Default for RegularizationOptions {
    fn default() -> Self {
        Self {
            eps: vec![1e-1, 1e-2, 1e-3, 1e-4],
            kernel_ceiling: 1e6,
            kernel_tol: 1e-8,
            sign: 1.0,
            search: SearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegularizedStep {
    pub eps: f64,
    pub z: Vec<f64>,
    /// ‖u_ε‖, the component in ker(A − B∞).
    pub kernel_norm: f64,
    /// ‖v_ε‖, the component in the complement.
    pub complement_norm: f64,
    /// Residual of sign·εz + (A − B∞)z − r(z).
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegularizedPath {
    /// Distance from 0 to σ(A − B∞) \ {0}.
    pub eta: f64,
    pub kernel_dim: usize,
    pub steps: Vec<RegularizedStep>,
    /// ‖z_{ε_{n+1}} − z_{ε_n}‖ for consecutive steps.
    pub cauchy: Vec<f64>,
    pub limit: CriticalPointReport,
}

/// Solve sign·εz + (A − B∞)z = r(z) along decreasing ε and pass to the limit.
///
/// Each ε is handled by the reduction of A + ε with nonlinearity B∞z + r(z)
/// at the common threshold `l`, warm started from the previous step. The
/// limit is a Newton solve of the unregularized problem started from the last
/// regularized solution.
pub fn regularized_solve(
    a: &TruncatedOperator,
    b_inf: &TruncatedOperator,
    r: Arc<dyn NonlinearMap>,
    l: f64,
    opts: &RegularizationOptions,
) -> Result<RegularizedPath> {
    a.check_compatible(b_inf)?;
    if opts.eps.is_empty() {
        return Err(Error::InvalidArgument("empty eps sequence".into()));
    }
    if opts.eps.windows(2).any(|w| !(w[1] < w[0])) || opts.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "eps sequence must be positive and strictly decreasing".into(),
        ));
    }
    if opts.sign.abs() != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "regularization sign must be 1 or -1, got {}",
            opts.sign
        )));
    }
    let linear = a.minus(b_inf)?;
    let eig = linear.eigen();
    let kernel: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i].abs() < opts.kernel_tol)
        .collect();
    let eta = eig
        .values
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v >= opts.kernel_tol)
        .fold(f64::INFINITY, f64::min);
    if let Some(&bad) = opts.eps.iter().find(|&&e| e >= eta) {
        return Err(Error::InvalidArgument(format!(
            "eps = {bad} is not below eta = {eta}"
        )));
    }
    let mut kernel_basis = DMatrix::zeros(a.dim(), kernel.len());
    for (c, &i) in kernel.iter().enumerate() {
        kernel_basis.set_column(c, &eig.vectors.column(i));
    }
    let full = asymptotically_linear_map(b_inf, r.clone())?;

    let mut steps: Vec<RegularizedStep> = Vec::with_capacity(opts.eps.len());
    let mut previous: Option<DVector<f64>> = None;
    for &eps in &opts.eps {
        let prob = ReducedProblem::new(a.shifted(opts.sign * eps), full.clone(), l)?;
        let x0 = previous
            .as_ref()
            .map(|z| prob.coordinates(z))
            .unwrap_or_else(|| DVector::zeros(prob.dim_h0()));
        let sol = solve_near(&prob, &x0, &opts.search)?;
        let z = sol.z_vector();
        let u = kernel_basis.tr_mul(&z).norm();
        let v = (&z - &kernel_basis * kernel_basis.tr_mul(&z)).norm();
        if u > opts.kernel_ceiling {
            return Err(Error::NoConvergence(format!(
                "kernel component {u:e} exceeds the ceiling {:e} at eps = {eps}",
                opts.kernel_ceiling
            )));
        }
        steps.push(RegularizedStep {
            eps,
            z: sol.z.clone(),
            kernel_norm: u,
            complement_norm: v,
            residual: sol.residual,
        });
        previous = Some(z);
    }
    let cauchy = steps
        .windows(2)
        .map(|w| {
            let a = DVector::from_column_slice(&w[0].z);
            let b = DVector::from_column_slice(&w[1].z);
            (a - b).norm()
        })
        .collect();

    let prob = ReducedProblem::new(a.clone(), full, l)?;
    let last = previous.expect("eps sequence is non-empty");
    let limit = solve_near(&prob, &prob.coordinates(&last), &opts.search)?;
    Ok(RegularizedPath {
        eta,
        kernel_dim: kernel.len(),
        steps,
        cauchy,
        limit,
    })
}

#[derive(Debug, Clone)]
pub struct HomotopyOptions {
    /// Number of uniform λ steps from 0 to 1.
    pub steps: usize,
    /// Radius R the path must stay inside.
    pub radius: f64,
    /// How often a failed step may be halved.
    pub max_halvings: usize,
    pub search: SearchOptions,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self {
            steps: 21,
            radius: 1e6,
            max_halvings: 8,
            search: SearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HomotopyPoint {
    pub lambda: f64,
    pub x: Vec<f64>,
    pub norm: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HomotopyPath {
    pub points: Vec<HomotopyPoint>,
    pub endpoint: CriticalPointReport,
}

/// Continue the solution of Az = F_λ'(z) from λ = 0 (where it is z = 0) to
/// λ = 1, with F_λ = (1−λ)·½(B₁z, z) + λF.
pub fn homotopy_solve(
    a: &TruncatedOperator,
    b1: &TruncatedOperator,
    f: Arc<dyn NonlinearMap>,
    l: f64,
    opts: &HomotopyOptions,
) -> Result<HomotopyPath> {
    a.check_compatible(b1)?;
    let b1_index = crate::index::relative_morse_index(a, b1)?;
    if b1_index.nullity != 0 {
        return Err(Error::HypothesisFailure {
            condition: "nu_A(B1) = 0".into(),
            detail: format!("nu_A(B1) = {}", b1_index.nullity),
        });
    }
    if opts.steps == 0 {
        return Err(Error::InvalidArgument("homotopy needs at least one step".into()));
    }
    let l_hat = b1.norm().max(f.lipschitz_bound());
    if !(l_hat < l) {
        return Err(Error::HypothesisFailure {
            condition: "max(|B1|, l_F) < l".into(),
            detail: format!("{l_hat} >= {l}"),
        });
    }
    let at = |lambda: f64| -> Result<ReducedProblem> {
        ReducedProblem::new(a.clone(), homotopy_map(b1, f.clone(), lambda)?, l)
    };
    let prob0 = at(0.0)?;
    let mut x = DVector::zeros(prob0.dim_h0());
    let mut z = DVector::zeros(a.dim());
    let mut points = vec![HomotopyPoint {
        lambda: 0.0,
        x: x.iter().copied().collect(),
        norm: 0.0,
        residual: prob0.residual(&z)?,
    }];
    let base_step = 1.0 / opts.steps as f64;
    let mut lambda = 0.0;
    let mut endpoint: Option<CriticalPointReport> = None;
    if prob0.dim_h0() == 0 {
        // a is a function on a point; the path is the outer fixed point alone
        for i in 1..=opts.steps {
            let lam = i as f64 / opts.steps as f64;
            let prob = at(lam)?;
            let fp = fixed_point_z_from(&prob, &x, Some(&z))?;
            z = fp.z;
            check_radius(&z, opts.radius, lam)?;
            points.push(HomotopyPoint {
                lambda: lam,
                x: Vec::new(),
                norm: z.norm(),
                residual: prob.residual(&z)?,
            });
        }
        let prob = at(1.0)?;
        endpoint = Some(CriticalPointReport {
            x: Vec::new(),
            z: z.iter().copied().collect(),
            value: value_at(&prob, &z)?,
            grad_norm: 0.0,
            residual: prob.residual(&z)?,
            hessian_signature: (0, 0, 0),
        });
        return Ok(HomotopyPath {
            points,
            endpoint: endpoint.expect("set above"),
        });
    }
    while lambda < 1.0 {
        let mut step = base_step.min(1.0 - lambda);
        let mut halvings = 0;
        let sol = loop {
            let target = if lambda + step >= 1.0 - 1e-12 { 1.0 } else { lambda + step };
            let prob = at(target)?;
            let mut search = opts.search.clone();
            search.parallel = false;
            let budget = Budget {
                used: AtomicUsize::new(0),
                limit: search.budget,
            };
            let eval = Evaluator { prob: &prob, budget: &budget };
            match newton(&eval, &x, &search) {
                Ok(c) => break (target, report(&prob, &eval, c)?),
                Err(e) if halvings >= opts.max_halvings => {
                    return Err(Error::NoConvergence(format!(
                        "continuation failed at lambda = {target}: {e}"
                    )))
                }
                Err(_) => {
                    step *= 0.5;
                    halvings += 1;
                }
            }
        };
        let (target, rep) = sol;
        let zt = rep.z_vector();
        check_radius(&zt, opts.radius, target)?;
        x = rep.x_vector();
        points.push(HomotopyPoint {
            lambda: target,
            x: rep.x.clone(),
            norm: zt.norm(),
            residual: rep.residual,
        });
        lambda = target;
        endpoint = Some(rep);
    }
    Ok(HomotopyPath {
        points,
        endpoint: endpoint.expect("at least one step"),
    })
}

fn check_radius(z: &DVector<f64>, radius: f64, lambda: f64) -> Result<()> {
    let norm = z.norm();
    if norm > radius {
        return Err(Error::BoundednessViolation {
            radius,
            norm,
            lambda,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> TruncatedOperator {
        TruncatedOperator::from_diagonal(v)
    }

    fn random_sym(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> TruncatedOperator {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let op = TruncatedOperator::from_matrix(m).unwrap();
        op.scaled(scale / op.norm())
    }

    /// F(z) = Σ scale·ln cosh(zᵢ), gradient scale·tanh, Lipschitz scale.
    fn tanh_map(dim: usize, scale: f64, shift: f64) -> Arc<dyn NonlinearMap> {
        Arc::new(FnMap::new(
            dim,
            scale,
            move |z| z.map(|v| scale * v.tanh() + shift),
            move |z| z.iter().map(|v| scale * v.cosh().ln() + shift * v).sum(),
        ))
    }

    #[test]
    fn zero_map_gives_zero_outer_part() {
        let a = diag(&[-3.0, 0.5, 2.0]);
        let prob = ReducedProblem::new(a, Arc::new(LinearMap::zero(3)), 1.0).unwrap();
        assert_eq!(prob.dim_h0(), 1);
        let fp = fixed_point_z(&prob, &DVector::from_element(1, 2.0)).unwrap();
        assert_eq!(fp.outer().norm(), 0.0);
        let v = reduced_value(&prob, &DVector::from_element(1, 2.0)).unwrap();
        assert!((v - 0.5 * 0.5 * 4.0).abs() < 1e-14);
        let g = reduced_gradient(&prob, &DVector::from_element(1, 2.0)).unwrap();
        assert!((g[0].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn construction_checks_threshold() {
        let a = diag(&[-3.0, 0.5, 2.0]);
        let f: Arc<dyn NonlinearMap> = Arc::new(LinearMap::new(&diag(&[1.5, 0.0, 0.0]), None).unwrap());
        assert!(matches!(
            ReducedProblem::new(a.clone(), f.clone(), 1.0),
            Err(Error::HypothesisFailure { .. })
        ));
        assert!(ReducedProblem::new_unchecked(a.clone(), f, 1.0).is_ok());
        assert!(matches!(
            ReducedProblem::new(a, Arc::new(LinearMap::zero(3)), 2.0),
            Err(Error::ThresholdOnSpectrum { .. })
        ));
    }

    #[test]
    fn linear_fixed_point_matches_block_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = diag(&[-4.0, -2.5, -0.3, 0.2, 0.7, 3.0, 5.0]);
        let b = random_sym(7, 0.8, &mut rng);
        let h = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        let f = Arc::new(LinearMap::new(&b, Some(h.clone())).unwrap());
        let prob = ReducedProblem::new(a.clone(), f, 1.5).unwrap();
        assert_eq!(prob.dim_h0(), 3);
        let x = DVector::from_vec(vec![0.3, -1.2, 0.8]);
        let fp = fixed_point_z(&prob, &x).unwrap();
        // w = P_out w solves (A − P_out B) w = P_out (B E0 x + h) on the outer block
        let e0 = prob.h0_basis().clone();
        let p_out = &prob.split.plus + &prob.split.minus;
        let lhs = &a.matrix - &p_out * &b.matrix + &prob.split.zero;
        let rhs = &p_out * (&b.matrix * &e0 * &x + &h);
        let w = lhs.lu().solve(&rhs).unwrap();
        assert!((fp.outer() - w).norm() < 1e-10);
    }

    #[test]
    fn a_priori_and_lipschitz_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = diag(&[-3.0, -2.0, -0.4, 0.1, 0.6, 1.8, 2.5, 4.0]);
        let f = tanh_map(8, 0.7, 0.3);
        let prob = ReducedProblem::new(a, f.clone(), 1.2).unwrap();
        let (l, lf) = (prob.l(), f.lipschitz_bound());
        let origin = f.origin_norm().unwrap();
        for _ in 0..100 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
            let h = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let p = fixed_point_z(&prob, &x).unwrap();
            let q = fixed_point_z(&prob, &(&x + &h)).unwrap();
            let bound = lf / (l - lf) * x.norm() + origin / (l - lf);
            assert!(p.z_plus.norm() <= bound + 1e-8);
            assert!(p.z_minus.norm() <= bound + 1e-8);
            let lip = lf / (l - lf) * h.norm() + 1e-8;
            assert!((&q.z_plus - &p.z_plus).norm() <= lip);
            assert!((&q.z_minus - &p.z_minus).norm() <= lip);
            let energy = prob.energy_norm(&(q.outer() - p.outer()));
            assert!(energy <= lf * l.sqrt() / (l - lf) * h.norm() + 1e-8);
            assert!(p.update_ratios.iter().all(|&r| r <= lf / l + 0.05));
        }
    }

    #[test]
    fn warm_start_reaches_same_fixed_point() {
        let a = diag(&[-3.0, -0.4, 0.6, 2.5]);
        let prob = ReducedProblem::new(a, tanh_map(4, 0.9, 0.2), 1.2).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let cold = fixed_point_z(&prob, &x).unwrap();
        let guess = DVector::from_vec(vec![5.0, 0.0, 1.0, -3.0]);
        let warm = fixed_point_z_from(&prob, &x, Some(&guess)).unwrap();
        assert!((cold.z - warm.z).norm() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = diag(&[-3.0, -0.4, 0.6, 2.5, 3.5]);
        let prob = ReducedProblem::new(a, tanh_map(5, 0.9, 0.2), 1.2).unwrap();
        for _ in 0..20 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let g = reduced_gradient(&prob, &x).unwrap();
            let h = 1e-5;
            for i in 0..2 {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (reduced_value(&prob, &xp).unwrap() - reduced_value(&prob, &xm).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g.norm().max(1.0));
            }
        }
    }

    #[test]
    fn quadratic_reduced_value_matches_linear_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = diag(&[-4.0, -0.3, 0.2, 0.7, 3.0]);
        let b = random_sym(5, 0.8, &mut rng);
        let prob = ReducedProblem::new(a.clone(), Arc::new(LinearMap::new(&b, None).unwrap()), 1.5).unwrap();
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let z = fixed_point_z(&prob, &x).unwrap().z;
        let diff = a.minus(&b).unwrap();
        let expected = 0.5 * z.dot(&diff.apply(&z));
        assert!((reduced_value(&prob, &x).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn quadratic_problem_has_single_critical_point() {
        let a = diag(&[-3.0, -0.5, 0.4, 2.0]);
        let prob = ReducedProblem::new(a, Arc::new(LinearMap::zero(4)), 1.0).unwrap();
        let out = find_critical_points(&prob, &SearchOptions::default()).unwrap();
        assert_eq!(out.points.len(), 1);
        assert!(out.points[0].x.iter().all(|v| v.abs() < 1e-8));
        assert_eq!(out.points[0].hessian_signature, (1, 0, 1));
    }

    /// H⁰ = span(e₀) with A = 1 there and F'(z) = 3z − z³ on e₀ (so
    /// a'(x) = x³ − 2x), plus inert outer modes.
    fn double_well() -> ReducedProblem {
        let a = diag(&[1.0, 5.0, -5.0]);
        let f = FnMap::new(
            3,
            0.0,
            |z| DVector::from_vec(vec![3.0 * z[0] - z[0].powi(3), 0.0, 0.0]),
            |z| 1.5 * z[0] * z[0] - 0.25 * z[0].powi(4),
        );
        ReducedProblem::new_unchecked(a, Arc::new(f), 2.0).unwrap()
    }

    #[test]
    fn double_well_has_three_critical_points() {
        let prob = double_well();
        let out = find_critical_points(&prob, &SearchOptions::default()).unwrap();
        let mut xs: Vec<f64> = out.points.iter().map(|p| p.x[0].abs()).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(out.points.len(), 3, "{out:?}");
        assert!(xs[0] < 1e-8);
        assert!((xs[1] - 2f64.sqrt()).abs() < 1e-8 && (xs[2] - 2f64.sqrt()).abs() < 1e-8);
        for p in &out.points {
            let expected = if p.x[0].abs() < 1e-3 { (1, 0, 0) } else { (0, 0, 1) };
            assert_eq!(p.hessian_signature, expected);
        }
        // a(x) = x⁴/4 − x² is bounded below, so -a ascends to the origin
        let mut opts = SearchOptions {
            strategy: Strategy::Maximize,
            ..Default::default()
        };
        opts.starts = 5;
        opts.radius = 1.0;
        let out = find_critical_points(&prob, &opts).unwrap();
        assert!(out.points.iter().any(|p| p.x[0].abs() < 1e-8));
    }

    #[test]
    fn parallel_and_serial_searches_agree() {
        let prob = double_well();
        let mut opts = SearchOptions::default();
        let par = find_critical_points(&prob, &opts).unwrap();
        opts.parallel = false;
        let ser = find_critical_points(&prob, &opts).unwrap();
        assert_eq!(par.points, ser.points);
    }

    #[test]
    fn threshold_choice() {
        let a = diag(&[-3.0, -0.5, 0.4, 2.0]);
        let l = choose_threshold(&a, 0.1, 2.5).unwrap();
        assert!((l - 1.25).abs() < 1e-12);
        let forced = choose_threshold(&a, 3.0, 2.5).unwrap();
        assert!((forced - 1.25).abs() < 1e-12);
    }

    #[test]
    fn regularization_with_zero_remainder() {
        let a = diag(&[-2.0, 0.3, 1.0, 3.0]);
        let b_inf = diag(&[0.0, 0.3, 0.0, 0.0]);
        let path = regularized_solve(
            &a,
            &b_inf,
            Arc::new(LinearMap::zero(4)),
            1.5,
            &RegularizationOptions::default(),
        )
        .unwrap();
        assert_eq!(path.kernel_dim, 1);
        assert!((path.eta - 1.0).abs() < 1e-12);
        assert!(path.steps.iter().all(|s| s.z.iter().all(|v| v.abs() < 1e-10)));
        assert!(path.limit.z.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn scalar_regularization_tends_to_root() {
        // εz = −arctan z + 0.3, whose ε → 0 limit is tan 0.3
        let a = diag(&[0.0]);
        let r = FnMap::new(
            1,
            1.0,
            |z| z.map(|v| -v.atan() + 0.3),
            |z| {
                let v = z[0];
                -(v * v.atan() - 0.5 * (1.0 + v * v).ln()) + 0.3 * v
            },
        );
        let opts = RegularizationOptions::default();
        let path = regularized_solve(&a, &diag(&[0.0]), Arc::new(r), 1.5, &opts).unwrap();
        for (s, &eps) in path.steps.iter().zip(&opts.eps) {
            // oracle: bisection on εz + arctan z − 0.3
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if eps * mid + f64::atan(mid) - 0.3 > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((s.z[0] - lo).abs() < 1e-8);
        }
        assert!(path.cauchy.windows(2).all(|w| w[1] < w[0]));
        assert!((path.limit.z[0] - 0.3f64.tan()).abs() < 1e-8);
        assert!(path.limit.residual < 1e-8);
    }

    #[test]
    fn regularization_rejects_eps_above_eta() {
        let a = diag(&[0.0, 0.05]);
        let opts = RegularizationOptions::default();
        assert!(regularized_solve(&a, &diag(&[0.0, 0.0]), Arc::new(LinearMap::zero(2)), 1.0, &opts).is_err());
    }

    #[test]
    fn homotopy_of_quadratic_is_constant() {
        let a = diag(&[-3.0, -0.5, 0.4, 2.0]);
        let b1 = diag(&[0.2, 0.1, -0.1, 0.3]);
        let f = Arc::new(LinearMap::new(&b1, None).unwrap());
        let path = homotopy_solve(&a, &b1, f, 1.0, &HomotopyOptions::default()).unwrap();
        assert_eq!(path.points.len(), 22);
        assert!(path.points.iter().all(|p| p.norm < 1e-10));
    }

    #[test]
    fn homotopy_linear_endpoint_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = diag(&[-3.0, -0.6, 0.5, 0.8, 2.5, 4.0]);
        let b1 = diag(&[0.1; 6]);
        // B2 keeps the same eigenvalue counts relative to A
        let b2 = random_sym(6, 0.3, &mut rng).plus(&diag(&[0.1; 6])).unwrap();
        let h = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let f = Arc::new(LinearMap::new(&b2, Some(h.clone())).unwrap());
        let path = homotopy_solve(&a, &b1, f, 1.0, &HomotopyOptions::default()).unwrap();
        let direct = a.minus(&b2).unwrap().matrix.lu().solve(&h).unwrap();
        assert!((path.endpoint.z_vector() - direct).norm() < 1e-8);
    }

    #[test]
    fn homotopy_escape_is_reported() {
        let a = diag(&[-3.0, -0.6, 0.5, 2.5]);
        let b1 = diag(&[0.1; 4]);
        let h = DVector::from_element(4, 5.0);
        let f = Arc::new(LinearMap::new(&b1, Some(h)).unwrap());
        let opts = HomotopyOptions {
            radius: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            homotopy_solve(&a, &b1, f, 1.0, &opts),
            Err(Error::BoundednessViolation { .. })
        ));
    }
}

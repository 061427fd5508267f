//! Index pair (i_A(B), ν_A(B)), projection indices between spectral
//! subspaces, and spectral flow along the path t ↦ A − tB.
//!
//! At finite dimension the relative Morse index is the Fredholm index of the
//! orthogonal projection from the negative subspace of A − B onto the
//! negative subspace of A, which reduces to m⁻(A − B) − m⁻(A). Spectral flow
//! counts branches crossing zero, positive to negative counted +1, so that it
//! equals the same Morse-count difference on nondegenerate endpoints.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::TruncationSpec;
use crate::operator::{sorted_eigenvalues, TruncatedOperator};

/// Default kernel window before scaling.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;

/// Kernel window scaled to the size of `m`: 1e-8·max(1, ‖m‖).
pub fn default_kernel_tol(m: &TruncatedOperator) -> f64 {
    DEFAULT_KERNEL_TOL * m.norm().max(1.0)
}

fn spectral_radius(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Kernel dimension of A − B together with a conditioning warning.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NullityResult {
    pub nullity: usize,
    pub kernel_tol: f64,
    /// Eigenvalues whose magnitude sits between tol/10 and 10·tol, where the
    /// kernel/non-kernel classification is not trustworthy.
    pub ill_conditioned: Vec<f64>,
}

impl NullityResult {
    pub fn warning(&self) -> Option<String> {
        if self.ill_conditioned.is_empty() {
            None
        } else {
            Some(format!(
                "eigenvalues {:?} lie within a decade of the kernel window {:e}",
                self.ill_conditioned, self.kernel_tol
            ))
        }
    }
}

fn classify_nullity(values: &[f64], kernel_tol: f64) -> NullityResult {
    let nullity = values.iter().filter(|v| v.abs() < kernel_tol).count();
    let ill_conditioned = values
        .iter()
        .copied()
        .filter(|v| {
            let a = v.abs();
            a > 0.1 * kernel_tol && a < 10.0 * kernel_tol
        })
        .collect();
    NullityResult {
        nullity,
        kernel_tol,
        ill_conditioned,
    }
}

/// Number of eigenvalues of A − B in (−kernel_tol, kernel_tol).
pub fn nullity(
    a: &TruncatedOperator,
    b: &TruncatedOperator,
    kernel_tol: f64,
) -> Result<NullityResult> {
    if !(kernel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel_tol must be positive, got {kernel_tol}"
        )));
    }
    let diff = a.minus(b)?;
    Ok(classify_nullity(&diff.eigenvalues(), kernel_tol))
}

/// Index and nullity, tagged with the truncation used.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndexPair {
    pub index: i64,
    pub nullity: usize,
    pub spec: Option<TruncationSpec>,
    pub kernel_tol: f64,
    /// Set once a recomputation at (J+2, K+2) agreed.
    pub stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl IndexPair {
    /// Mark as stable when `refined` reproduces index and nullity.
    pub fn confirm_with(mut self, refined: &IndexPair) -> Self {
        self.stable = self.index == refined.index && self.nullity == refined.nullity;
        self
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IndexOptions {
    /// Absolute kernel window; scaled default when `None`.
    pub kernel_tol: Option<f64>,
    /// Gap (lower, upper) that the perturbation must lie strictly inside.
    pub gap: Option<(f64, f64)>,
}

/// Count of eigenvalues ≤ −tol.
fn negative_count(values: &[f64], tol: f64) -> usize {
    values.iter().filter(|&&v| v <= -tol).count()
}

/// i*_A(B) = m⁻(A − B) − m⁻(A) with ν_A(B) = dim ker(A − B).
pub fn relative_morse_index(a: &TruncatedOperator, b: &TruncatedOperator) -> Result<IndexPair> {
    relative_morse_index_with(a, b, &IndexOptions::default())
}

pub fn relative_morse_index_with(
    a: &TruncatedOperator,
    b: &TruncatedOperator,
    options: &IndexOptions,
) -> Result<IndexPair> {
    let diff = a.minus(b)?;
    if let Some((lower, upper)) = options.gap {
        let vals = b.eigenvalues();
        if let Some(&bad) = vals.iter().find(|&&v| !(v > lower && v < upper)) {
            return Err(Error::GapViolation {
                lower,
                upper,
                eigenvalue: bad,
            });
        }
    }
    let diff_vals = diff.eigenvalues();
    let a_vals = a.eigenvalues();
    let kernel_tol = options
        .kernel_tol
        .unwrap_or_else(|| DEFAULT_KERNEL_TOL * spectral_radius(&diff_vals).max(1.0));
    let a_tol = options
        .kernel_tol
        .unwrap_or_else(|| DEFAULT_KERNEL_TOL * spectral_radius(&a_vals).max(1.0));
    let null = classify_nullity(&diff_vals, kernel_tol);
    let index = negative_count(&diff_vals, kernel_tol) as i64 - negative_count(&a_vals, a_tol) as i64;
    Ok(IndexPair {
        index,
        nullity: null.nullity,
        spec: a.spec.or(b.spec),
        kernel_tol,
        stable: false,
        warning: null.warning(),
    })
}

/// Compute the index pair at `spec` and at `spec.refined(2)` from an
/// operator builder, and set the stability flag.
pub fn stable_relative_morse_index<F>(
    spec: &TruncationSpec,
    options: &IndexOptions,
    mut build: F,
) -> Result<IndexPair>
where
    F: FnMut(&TruncationSpec) -> Result<(TruncatedOperator, TruncatedOperator)>,
{
    let (a, b) = build(spec)?;
    let coarse = relative_morse_index_with(&a, &b, options)?;
    let refined_spec = spec.refined(2);
    let (a2, b2) = build(&refined_spec)?;
    let fine = relative_morse_index_with(&a2, &b2, options)?;
    Ok(coarse.confirm_with(&fine))
}

/// Fredholm data of the orthogonal projection from span(V) onto span(W).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct ProjectionIndexResult {
    pub dim_domain: usize,
    pub dim_codomain: usize,
    pub dim_kernel: usize,
    pub dim_cokernel: usize,
    pub index: i64,
}

const ORTHONORMAL_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-8;

fn check_orthonormal(cols: &DMatrix<f64>) -> Result<()> {
    if cols.ncols() == 0 {
        return Ok(());
    }
    let gram = cols.tr_mul(cols);
    let deviation = (gram - DMatrix::identity(cols.ncols(), cols.ncols())).amax();
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Index of P_W restricted to span(V), from the singular values of WᵀV.
pub fn projection_index(domain: &DMatrix<f64>, codomain: &DMatrix<f64>) -> Result<ProjectionIndexResult> {
    if domain.nrows() != codomain.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("ambient dimension {}", domain.nrows()),
            found: format!("{}", codomain.nrows()),
        });
    }
    check_orthonormal(domain)?;
    check_orthonormal(codomain)?;
    let dim_domain = domain.ncols();
    let dim_codomain = codomain.ncols();
    let rank = if dim_domain == 0 || dim_codomain == 0 {
        0
    } else {
        let map = codomain.tr_mul(domain);
        let sv = map.singular_values();
        let scale = sv.max().max(1.0);
        sv.iter().filter(|&&s| s >= SINGULAR_TOL * scale).count()
    };
    let dim_kernel = dim_domain - rank;
    let dim_cokernel = dim_codomain - rank;
    Ok(ProjectionIndexResult {
        dim_domain,
        dim_codomain,
        dim_kernel,
        dim_cokernel,
        index: dim_kernel as i64 - dim_cokernel as i64,
    })
}

/// One eigenvalue branch passing through zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Crossing {
    pub t: f64,
    /// Position of the branch in the ascending eigenvalue order.
    pub branch: usize,
    /// +1 for positive to negative, −1 for negative to positive.
    pub sign: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlowResult {
    pub flow: i64,
    pub crossings: Vec<Crossing>,
    pub partition: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    /// Absolute kernel window; scaled default when `None`.
    pub kernel_tol: Option<f64>,
    /// Intervals shorter than this fraction of |t1 − t0| are never split.
    pub min_width_fraction: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            kernel_tol: None,
            min_width_fraction: 1e-13,
        }
    }
}

struct Slice {
    t: f64,
    values: Vec<f64>,
}

/// Spectral flow of t ↦ A − tB over [t0, t1] starting from `steps` uniform
/// intervals.
pub fn spectral_flow(
    a: &TruncatedOperator,
    b: &TruncatedOperator,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<FlowResult> {
    spectral_flow_with(a, b, t0, t1, steps, &FlowOptions::default())
}

/// Branches are matched by ascending order, which is continuous in t for a
/// symmetric path. An interval is bisected while some branch is not
/// certified away from zero by Weyl's bound |λᵢ(t) − λᵢ(s)| ≤ ‖B‖·|t − s|
/// and still moves by at least kernel_tol/2 across it.
pub fn spectral_flow_with(
    a: &TruncatedOperator,
    b: &TruncatedOperator,
    t0: f64,
    t1: f64,
    steps: usize,
    options: &FlowOptions,
) -> Result<FlowResult> {
    a.check_compatible(b)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "flow interval needs t0 < t1, got [{t0}, {t1}]"
        )));
    }
    let b_norm = b.norm();
    let kernel_tol = options.kernel_tol.unwrap_or_else(|| {
        DEFAULT_KERNEL_TOL * (a.norm() + b_norm * t0.abs().max(t1.abs())).max(1.0)
    });
    let slice = |t: f64| Slice {
        t,
        values: sorted_eigenvalues(&(&a.matrix - &b.matrix * t)),
    };
    let min_width = options.min_width_fraction * (t1 - t0);

    for end in [t0, t1] {
        let s = slice(end);
        if let Some(&v) = s.values.iter().find(|v| v.abs() < kernel_tol) {
            return Err(Error::DegenerateEndpoint { t: end, eigenvalue: v });
        }
    }

    let needs_split = |l: &Slice, r: &Slice| -> bool {
        if r.t - l.t <= min_width {
            return false;
        }
        let reach = b_norm * (r.t - l.t);
        l.values.iter().zip(&r.values).any(|(&x, &y)| {
            let certified_away = if x > 0.0 && y > 0.0 {
                x + y > reach
            } else if x < 0.0 && y < 0.0 {
                -(x + y) > reach
            } else {
                false
            };
            !certified_away && (x - y).abs() >= kernel_tol / 2.0
        })
    };

    let mut done: Vec<Slice> = Vec::new();
    let mut stack: Vec<Slice> = (0..=steps)
        .rev()
        .map(|i| {
            let t = if i == steps {
                t1
            } else {
                t0 + (t1 - t0) * i as f64 / steps as f64
            };
            slice(t)
        })
        .collect();
    // stack holds pending right endpoints; `done` is the processed prefix
    done.push(stack.pop().expect("at least two slices"));
    while let Some(right) = stack.pop() {
        let left = done.last().expect("prefix is non-empty");
        if needs_split(left, &right) {
            let mid = slice(0.5 * (left.t + right.t));
            stack.push(right);
            stack.push(mid);
        } else {
            done.push(right);
        }
    }

    let mut crossings = Vec::new();
    for pair in done.windows(2) {
        let (l, r) = (&pair[0], &pair[1]);
        for (branch, (&x, &y)) in l.values.iter().zip(&r.values).enumerate() {
            let sign = match (x > 0.0, y > 0.0) {
                (true, false) => 1,
                (false, true) => -1,
                _ => 0,
            };
            if sign != 0 {
                let frac = if x != y { x / (x - y) } else { 0.5 };
                crossings.push(Crossing {
                    t: l.t + (r.t - l.t) * frac.clamp(0.0, 1.0),
                    branch,
                    sign,
                });
            }
        }
    }
    let flow = crossings.iter().map(|c| i64::from(c.sign)).sum();
    Ok(FlowResult {
        flow,
        crossings,
        partition: done.iter().map(|s| s.t).collect(),
    })
}

/// Outcome of sampling perturbations between B1 and B2.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GapCheck {
    Certified {
        epsilon_estimate: f64,
        /// (sample id, distance from σ(A − B) to zero), smallest first.
        witnesses: Vec<(usize, f64)>,
    },
    HypothesisViolated {
        hypothesis: String,
        detail: String,
    },
}

impl GapCheck {
    pub fn epsilon(&self) -> Option<f64> {
        match self {
            GapCheck::Certified { epsilon_estimate, .. } => Some(*epsilon_estimate),
            GapCheck::HypothesisViolated { .. } => None,
        }
    }
}

fn distance_to_zero(m: &DMatrix<f64>) -> f64 {
    sorted_eigenvalues(m)
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    g.qr().q()
}

/// Check the hypotheses B1 ≤ B2, i_A(B1) = i_A(B2), ν_A(B2) = 0, then sample
/// B with B1 ≤ B ≤ B2 and report the smallest distance from σ(A − B) to 0.
///
/// Samples are B1 + D^{1/2} C D^{1/2} with D = B2 − B1 and C a random
/// symmetric matrix with spectrum in [0, 1]; the first two samples are the
/// endpoints themselves.
pub fn gap_nondegeneracy_check(
    a: &TruncatedOperator,
    b1: &TruncatedOperator,
    b2: &TruncatedOperator,
    samples: usize,
    seed: u64,
) -> Result<GapCheck> {
    let n = a.dim();
    let d = b2.minus(b1)?;
    a.check_compatible(b1)?;
    let d_eig = d.eigen();
    let lowest = d_eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if lowest < -1e-10 {
        return Ok(GapCheck::HypothesisViolated {
            hypothesis: "B1 <= B2".into(),
            detail: format!("smallest eigenvalue of B2 - B1 is {lowest:e}"),
        });
    }
    let i1 = relative_morse_index(a, b1)?;
    let i2 = relative_morse_index(a, b2)?;
    if i1.index != i2.index {
        return Ok(GapCheck::HypothesisViolated {
            hypothesis: "i_A(B1) = i_A(B2)".into(),
            detail: format!("i_A(B1) = {}, i_A(B2) = {}", i1.index, i2.index),
        });
    }
    if i2.nullity != 0 {
        return Ok(GapCheck::HypothesisViolated {
            hypothesis: "nu_A(B2) = 0".into(),
            detail: format!("nu_A(B2) = {}", i2.nullity),
        });
    }
    let sqrt_d = {
        let mut scaled = d_eig.vectors.clone();
        for (i, v) in d_eig.values.iter().enumerate() {
            let s = v.max(0.0).sqrt();
            scaled.column_mut(i).scale_mut(s);
        }
        &scaled * d_eig.vectors.transpose()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut witnesses = Vec::with_capacity(samples.max(2));
    for id in 0..samples.max(2) {
        let b = match id {
            0 => b1.matrix.clone(),
            1 => b2.matrix.clone(),
            _ => {
                let q = random_orthogonal(n, &mut rng);
                let mut c = q.clone();
                for mut col in c.column_iter_mut() {
                    col *= rng.random::<f64>();
                }
                let c = c * q.transpose();
                &b1.matrix + &sqrt_d * c * &sqrt_d
            }
        };
        witnesses.push((id, distance_to_zero(&(&a.matrix - b))));
    }
    witnesses.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    Ok(GapCheck::Certified {
        epsilon_estimate: witnesses[0].1,
        witnesses,
    })
}

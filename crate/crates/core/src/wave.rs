//! The periodic wave problem u_tt − u_xx = f(x, t, u) on [0, π] × S¹ as a
//! reduced problem for A = □ − b·I, the example nonlinearities, hypothesis
//! checks and residual-certified solving.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FourierBasis, FourierField, TruncationSpec};
use crate::index::{stable_relative_morse_index, IndexOptions, IndexPair};
use crate::operator::{box_levels, multiplication_operator_flat, wave_operator, TruncatedOperator};
use crate::reduction::{
    choose_threshold, find_critical_points, homotopy_solve,
    regularized_solve, CriticalPointReport, HomotopyOptions, HomotopyPath, NonlinearMap,
    ReducedProblem, RegularizationOptions, RegularizedPath, SearchDiagnostics, SearchOptions,
};

/// Sublinear Lipschitz term h(u) = sign(u)·ln(1 + |u|).
pub fn h(u: f64) -> f64 {
    u.signum() * u.abs().ln_1p()
}

/// H(u) = ∫₀ᵘ h = (1 + |u|)·ln(1 + |u|) − |u|.
pub fn h_primitive(u: f64) -> f64 {
    let a = u.abs();
    (1.0 + a) * a.ln_1p() - a
}

pub fn h_derivative(u: f64) -> f64 {
    1.0 / (1.0 + u.abs())
}

/// Shape of the optional forcing term: sin(x)·(1 + ½cos(ωt)).
pub fn forcing_shape(x: f64, t: f64, omega: f64) -> f64 {
    x.sin() * (1.0 + 0.5 * (omega * t).cos())
}

/// Shipped example families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleName {
    ExThm41,
    ExThm42Plus,
    ExThm42Minus,
    ExThm43,
    Linear,
}

impl ExampleName {
    pub const ALL: [ExampleName; 5] = [
        ExampleName::ExThm41,
        ExampleName::ExThm42Plus,
        ExampleName::ExThm42Minus,
        ExampleName::ExThm43,
        ExampleName::Linear,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExampleName::ExThm41 => "ex_thm41",
            ExampleName::ExThm42Plus => "ex_thm42_plus",
            ExampleName::ExThm42Minus => "ex_thm42_minus",
            ExampleName::ExThm43 => "ex_thm43",
            ExampleName::Linear => "linear",
        }
    }

    /// Parameters that must be supplied.
    pub fn required(&self) -> &'static [&'static str] {
        match self {
            ExampleName::ExThm41 => &["b", "alpha", "beta", "eps1", "eps2"],
            ExampleName::ExThm42Plus | ExampleName::ExThm42Minus => &["b", "g_inf", "eps"],
            ExampleName::ExThm43 => &["k", "g0", "eps1", "eps2"],
            ExampleName::Linear => &["b", "g_mean"],
        }
    }

    /// Optional parameters with their defaults.
    pub fn defaults(&self) -> &'static [(&'static str, f64)] {
        match self {
            ExampleName::ExThm41 => &[("forcing", 0.0)],
            ExampleName::ExThm42Plus | ExampleName::ExThm42Minus => &[("forcing", 0.0)],
            ExampleName::ExThm43 => &[("delta3", 0.1)],
            ExampleName::Linear => &[("g_amp", 0.0), ("forcing", 0.0)],
        }
    }
}

impl fmt::Display for ExampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExampleName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown nonlinearity `{s}`; expected one of {}",
                    ExampleName::ALL.map(|e| e.as_str()).join(", ")
                ))
            })
    }
}

type PointFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Law {
    Thm41 {
        alpha: f64,
        beta: f64,
        eps1: f64,
        eps2: f64,
        forcing: f64,
    },
    Thm42 {
        sign: f64,
        g_inf: f64,
        eps: f64,
        forcing: f64,
    },
    Thm43 {
        lambda_k: f64,
        g0: f64,
        eps1: f64,
        eps2: f64,
        g3: f64,
    },
    Linear {
        g_mean: f64,
        g_amp: f64,
        forcing: f64,
    },
    Custom {
        f_b: Arc<PointFn>,
    },
}

/// Pointwise nonlinearity f(x, t, u) with its shift b and claimed l_F.
#[derive(Clone)]
pub struct Nonlinearity {
    pub name: String,
    pub b: f64,
    pub lipschitz_claimed: f64,
    pub params: BTreeMap<String, f64>,
    omega: f64,
    law: Law,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("b", &self.b)
            .field("lipschitz_claimed", &self.lipschitz_claimed)
            .field("params", &self.params)
            .finish()
    }
}

fn finite_params(params: &BTreeMap<String, f64>) -> Result<()> {
    if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("parameter {k} = {v} is not finite")));
    }
    Ok(())
}

/// max over s ≥ 0 of arctan(s) + 2s/(1 + s²), the largest value of
/// d/du[u·arctan(εu²)] with s = εu², found by golden section.
fn arctan_slope_peak() -> f64 {
    let phi = |s: f64| s.atan() + 2.0 * s / (1.0 + s * s);
    let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if phi(a) < phi(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    phi(0.5 * (lo + hi))
}

/// Build one of the shipped example nonlinearities on a truncation.
///
/// For `ex_thm43`, λ_k is the k-th positive level of □ on `spec` and
/// b = λ_k/2; the comparison field g₃ is b − ε₁ − δ₃.
pub fn example_nonlinearity(
    name: ExampleName,
    params: &BTreeMap<String, f64>,
    spec: &TruncationSpec,
) -> Result<Nonlinearity> {
    spec.validate()?;
    finite_params(params)?;
    let missing: Vec<String> = name
        .required()
        .iter()
        .filter(|k| !params.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingParameters(missing));
    }
    let mut params = params.clone();
    for (k, v) in name.defaults() {
        params.entry(k.to_string()).or_insert(*v);
    }
    let p = |k: &str| params[k];
    let mut derived: Vec<(&str, f64)> = Vec::new();
    let omega = spec.omega();
    let (b, lipschitz_claimed, law) = match name {
        ExampleName::ExThm41 => {
            let (alpha, beta, eps1, eps2) = (p("alpha"), p("beta"), p("eps1"), p("eps2"));
            if alpha > beta {
                return Err(Error::InvalidArgument(format!(
                    "ex_thm41 needs alpha <= beta, got {alpha} > {beta}"
                )));
            }
            let l_f = alpha.abs().max(beta.abs()) + (beta - alpha) * eps1.abs() / 2.0 + eps2.abs();
            let law = Law::Thm41 {
                alpha,
                beta,
                eps1,
                eps2,
                forcing: p("forcing"),
            };
            (p("b"), l_f, law)
        }
        ExampleName::ExThm42Plus | ExampleName::ExThm42Minus => {
            let sign = if name == ExampleName::ExThm42Plus { 1.0 } else { -1.0 };
            let (g_inf, eps) = (p("g_inf"), p("eps"));
            let law = Law::Thm42 {
                sign,
                g_inf,
                eps,
                forcing: p("forcing"),
            };
            (p("b"), g_inf.abs() + eps.abs(), law)
        }
        ExampleName::ExThm43 => {
            let k = p("k");
            if k.fract() != 0.0 || k < 2.0 {
                return Err(Error::InvalidArgument(format!(
                    "ex_thm43 needs an integer k >= 2, got {k}"
                )));
            }
            let positive: Vec<f64> = box_levels(spec).into_iter().filter(|&v| v > 0.0).collect();
            let k = k as usize;
            let lambda_k = *positive.get(k - 1).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "the truncation has only {} positive levels, k = {k}",
                    positive.len()
                ))
            })?;
            let (g0, eps1, eps2) = (p("g0"), p("eps1"), p("eps2"));
            let b = lambda_k / 2.0;
            let c = lambda_k - g0 - eps1;
            let top = g0 - b + eps2.abs() + c.max(0.0) * (2.0 / PI) * arctan_slope_peak();
            let bottom = g0 - b - eps2.abs() + c.min(0.0) * (2.0 / PI) * arctan_slope_peak();
            let l_f = top.abs().max(bottom.abs()).max((g0 - b).abs());
            let g3 = b - eps1 - p("delta3");
            derived.extend([
                ("b", b),
                ("lambda_k", lambda_k),
                ("lambda_k_minus_1", positive[k - 2]),
                ("g3", g3),
            ]);
            let law = Law::Thm43 {
                lambda_k,
                g0,
                eps1,
                eps2,
                g3,
            };
            (b, l_f, law)
        }
        ExampleName::Linear => {
            let (g_mean, g_amp) = (p("g_mean"), p("g_amp"));
            let law = Law::Linear {
                g_mean,
                g_amp,
                forcing: p("forcing"),
            };
            (p("b"), g_mean.abs() + g_amp.abs(), law)
        }
    };
    for (k, v) in derived {
        params.insert(k.to_string(), v);
    }
    Ok(Nonlinearity {
        name: name.as_str().to_string(),
        b,
        lipschitz_claimed,
        params,
        omega,
        law,
    })
}

impl Nonlinearity {
    /// Nonlinearity from a closure for f_b; F_b is integrated numerically and
    /// f_b' is a central difference.
    pub fn custom(
        name: &str,
        b: f64,
        lipschitz_claimed: f64,
        spec: &TruncationSpec,
        f_b: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.to_string(),
            b,
            lipschitz_claimed,
            params: BTreeMap::new(),
            omega: spec.omega(),
            law: Law::Custom { f_b: Arc::new(f_b) },
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// f(x, t, u) = f_b(x, t, u) + b·u.
    pub fn f(&self, x: f64, t: f64, u: f64) -> f64 {
        self.f_b(x, t, u) + self.b * u
    }

    pub fn f_b(&self, x: f64, t: f64, u: f64) -> f64 {
        match &self.law {
            Law::Thm41 {
                eps2, forcing, ..
            } => {
                self.thm41_g(x, t, u) * u + eps2 * h(u) + forcing * forcing_shape(x, t, self.omega)
            }
            Law::Thm42 {
                sign,
                g_inf,
                eps,
                forcing,
            } => g_inf * u + sign * eps * u.atan() + forcing * forcing_shape(x, t, self.omega),
            Law::Thm43 { eps2, .. } => (self.thm43_g(u) - self.b) * u + eps2 * h(u),
            Law::Linear { forcing, .. } => {
                self.linear_g(x, t) * u + forcing * forcing_shape(x, t, self.omega)
            }
            Law::Custom { f_b } => f_b(x, t, u),
        }
    }

    /// ∂f_b/∂u.
    pub fn f_b_derivative(&self, x: f64, t: f64, u: f64) -> f64 {
        match &self.law {
            Law::Thm41 {
                alpha,
                beta,
                eps1,
                eps2,
                ..
            } => {
                let r = x.abs() + t.abs() + u.abs() + 1.0;
                let dg = 0.5 * (beta - alpha) * (eps1 * r.ln()).cos() * eps1 * u.signum() / r;
                self.thm41_g(x, t, u) + u * dg + eps2 * h_derivative(u)
            }
            Law::Thm42 { sign, g_inf, eps, .. } => g_inf + sign * eps / (1.0 + u * u),
            Law::Thm43 {
                lambda_k,
                g0,
                eps1,
                eps2,
                ..
            } => {
                let c = lambda_k - g0 - eps1;
                let s = eps1 * u * u;
                let dg = c * (2.0 / PI) * 2.0 * eps1 * u / (1.0 + s * s);
                self.thm43_g(u) + u * dg - self.b + eps2 * h_derivative(u)
            }
            Law::Linear { .. } => self.linear_g(x, t),
            Law::Custom { f_b } => {
                let step = f64::EPSILON.cbrt() * (1.0 + u.abs());
                (f_b(x, t, u + step) - f_b(x, t, u - step)) / (2.0 * step)
            }
        }
    }

    /// F_b(x, t, u) = ∫₀ᵘ f_b(x, t, s) ds, in closed form where available.
    pub fn primitive(&self, x: f64, t: f64, u: f64) -> Result<f64> {
        match &self.law {
            Law::Thm41 {
                alpha,
                beta,
                eps1,
                eps2,
                forcing,
            } => {
                let quad = if *eps1 == 0.0 {
                    0.25 * (alpha + beta) * u * u
                } else {
                    integrate(|s| self.thm41_g(x, t, s) * s, u)?
                };
                Ok(quad + eps2 * h_primitive(u) + forcing * forcing_shape(x, t, self.omega) * u)
            }
            Law::Thm42 {
                sign,
                g_inf,
                eps,
                forcing,
            } => Ok(0.5 * g_inf * u * u
                + sign * eps * (u * u.atan() - 0.5 * (u * u).ln_1p())
                + forcing * forcing_shape(x, t, self.omega) * u),
            Law::Thm43 {
                lambda_k,
                g0,
                eps1,
                eps2,
                ..
            } => {
                let c = lambda_k - g0 - eps1;
                let w = u * u;
                let arctan_part = if *eps1 == 0.0 {
                    0.0
                } else {
                    0.5 * (w * (eps1 * w).atan() - (eps1 * eps1 * w * w).ln_1p() / (2.0 * eps1))
                };
                Ok(0.5 * (g0 - self.b) * w + c * (2.0 / PI) * arctan_part + eps2 * h_primitive(u))
            }
            Law::Linear { forcing, .. } => Ok(0.5 * self.linear_g(x, t) * u * u
                + forcing * forcing_shape(x, t, self.omega) * u),
            Law::Custom { f_b } => integrate(|s| f_b(x, t, s), u),
        }
    }

    fn thm41_g(&self, x: f64, t: f64, u: f64) -> f64 {
        match &self.law {
            Law::Thm41 {
                alpha, beta, eps1, ..
            } => {
                0.5 * (beta - alpha) * (eps1 * (x.abs() + t.abs() + u.abs() + 1.0).ln()).sin()
                    + 0.5 * (alpha + beta)
            }
            _ => unreachable!("only called for ex_thm41"),
        }
    }

    fn thm43_g(&self, u: f64) -> f64 {
        match &self.law {
            Law::Thm43 {
                lambda_k, g0, eps1, ..
            } => g0 + (lambda_k - g0 - eps1) * (2.0 / PI) * (eps1 * u * u).atan(),
            _ => unreachable!("only called for ex_thm43"),
        }
    }

    fn linear_g(&self, x: f64, t: f64) -> f64 {
        match &self.law {
            Law::Linear { g_mean, g_amp, .. } => g_mean + g_amp * x.cos() * (self.omega * t).cos(),
            _ => unreachable!("only called for the linear example"),
        }
    }

    /// Comparison coefficient field by name: `g1`, `g2`, `g_inf`, `g3` or
    /// `g0`. `g0` is f_b'(x, t, 0), the derivative taken at u = 0.
    pub fn comparison_field(&self, name: &str) -> Result<Box<dyn Fn(f64, f64) -> f64 + Send + Sync + '_>> {
        let missing = || Error::MissingComparisonField(name.to_string());
        if name == "g0" {
            return Ok(Box::new(move |x, t| self.f_b_derivative(x, t, 0.0)));
        }
        match (&self.law, name) {
            (Law::Thm41 { alpha, .. }, "g1") => {
                let a = *alpha;
                Ok(Box::new(move |_, _| a))
            }
            (Law::Thm41 { beta, .. }, "g2") => {
                let b = *beta;
                Ok(Box::new(move |_, _| b))
            }
            (Law::Thm42 { g_inf, .. }, "g_inf") => {
                let g = *g_inf;
                Ok(Box::new(move |_, _| g))
            }
            (Law::Thm43 { g3, .. }, "g3") => {
                let g = *g3;
                Ok(Box::new(move |_, _| g))
            }
            (Law::Linear { .. }, "g1" | "g2" | "g_inf") => {
                Ok(Box::new(move |x, t| self.linear_g(x, t)))
            }
            _ => Err(missing()),
        }
    }

    /// Lipschitz constant of f_b − g∞·u.
    pub fn remainder_lipschitz(&self) -> f64 {
        match &self.law {
            Law::Thm42 { eps, .. } => eps.abs(),
            Law::Linear { .. } => 0.0,
            _ => f64::INFINITY,
        }
    }

    /// Sign s of the (f₂±) condition the example is built for.
    pub fn growth_sign(&self) -> Option<f64> {
        match &self.law {
            Law::Thm42 { sign, .. } => Some(*sign),
            _ => None,
        }
    }

    /// Whether f_b(x, t, −u) = −f_b(x, t, u) by construction.
    pub fn is_odd(&self) -> bool {
        match &self.law {
            Law::Thm41 { forcing, .. } | Law::Thm42 { forcing, .. } | Law::Linear { forcing, .. } => {
                *forcing == 0.0
            }
            Law::Thm43 { .. } => true,
            Law::Custom { .. } => false,
        }
    }
}

/// ∫₀ᵘ f by double exponential quadrature.
fn integrate(f: impl Fn(f64) -> f64, u: f64) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.0);
    }
    let probe = f(u).abs().max(f(0.5 * u).abs()).max(1.0);
    let target = 1e-14 * probe * u.abs();
    let out = quadrature::integrate(&f, 0.0, u, target);
    if !out.integral.is_finite() || out.error_estimate > 1e3 * target {
        return Err(Error::Quadrature {
            upper: u,
            estimate: out.error_estimate,
        });
    }
    Ok(out.integral)
}

/// F'(z) = P f_b(·, ·, u) and F(z) = Σ w·F_b(·, ·, u) on the grid, with an
/// optional linear part g·u removed.
pub struct NemytskiiMap {
    basis: Arc<FourierBasis>,
    nl: Arc<Nonlinearity>,
    subtract: Option<DVector<f64>>,
    nodes: Vec<(f64, f64)>,
    lipschitz: f64,
}

impl NemytskiiMap {
    pub fn new(basis: Arc<FourierBasis>, nl: Arc<Nonlinearity>) -> Self {
        let nodes = (0..basis.spec().grid_len()).map(|i| basis.node(i)).collect();
        let lipschitz = nl.lipschitz_claimed;
        Self {
            basis,
            nl,
            subtract: None,
            nodes,
            lipschitz,
        }
    }

    /// The remainder f_b − g·u for a tabulated field g.
    pub fn remainder(basis: Arc<FourierBasis>, nl: Arc<Nonlinearity>, g: DVector<f64>, lipschitz: f64) -> Self {
        let mut map = Self::new(basis, nl);
        map.subtract = Some(g);
        map.lipschitz = lipschitz;
        map
    }

    fn pointwise(&self, i: usize, u: f64) -> Result<f64> {
        let (x, t) = self.nodes[i];
        let mut value = self.nl.f_b(x, t, u);
        if let Some(g) = &self.subtract {
            value -= g[i] * u;
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { x, t, u, value });
        }
        Ok(value)
    }

    /// f_b on the grid for coefficients `z`.
    pub fn grid_values(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.basis.synthesize(z);
        let mut out = DVector::zeros(u.len());
        for (i, &ui) in u.iter().enumerate() {
            out[i] = self.pointwise(i, ui)?;
        }
        Ok(out)
    }
}

impl NonlinearMap for NemytskiiMap {
    fn dim(&self) -> usize {
        self.basis.modes().len()
    }

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.basis.analyze(&self.grid_values(z)?))
    }

    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        let u = self.basis.synthesize(z);
        let mut total = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            let (x, t) = self.nodes[i];
            let mut v = self.nl.primitive(x, t, ui)?;
            if let Some(g) = &self.subtract {
                v -= 0.5 * g[i] * ui * ui;
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { x, t, u: ui, value: v });
            }
            total += v;
        }
        Ok(total * self.basis.weight())
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
}

/// u ↦ f_b(·, ·, u) as a field on the same truncation.
pub fn nemytskii_gradient(nl: &Nonlinearity, u: &FourierField) -> Result<FourierField> {
    let basis = FourierBasis::shared(u.spec)?;
    let map = NemytskiiMap::new(basis, Arc::new(nl.clone()));
    FourierField::new(u.spec, map.gradient(&u.coeffs)?)
}

/// ∫ F_b(x, t, u(x, t)) dx dt by the grid rule.
pub fn nemytskii_value(nl: &Nonlinearity, u: &FourierField) -> Result<f64> {
    let basis = FourierBasis::shared(u.spec)?;
    NemytskiiMap::new(basis, Arc::new(nl.clone())).value(&u.coeffs)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Witness {
    pub x: f64,
    pub t: f64,
    pub u: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LipschitzEstimate {
    pub estimate: f64,
    pub samples: usize,
    pub witness: Witness,
}

/// Largest sampled |f_b(x,t,u+v) − f_b(x,t,u)|/|v|.
///
/// Draws x ∈ [0, π], t ∈ [0, T), u = ±10^U(−2,4), v = ±10^U(−3,1) from one
/// seeded stream, so the samples for n are a prefix of those for n + 1 and
/// the estimate never decreases with the sample count. The increment is
/// taken as the representable (u + v) − u, and |v| ≥ 1e−3 keeps rounding in
/// the quotient far below the curvature deficit of smooth laws.
pub fn estimate_lipschitz(nl: &Nonlinearity, sample_count: usize, seed: u64) -> Result<LipschitzEstimate> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = nl.period();
    let mut best = LipschitzEstimate {
        estimate: 0.0,
        samples: sample_count,
        witness: Witness {
            x: 0.0,
            t: 0.0,
            u: 0.0,
            v: Some(0.0),
            value: 0.0,
        },
    };
    let signed = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        let mag = 10f64.powf(rng.random_range(lo..hi));
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    };
    for i in 0..sample_count {
        let x = rng.random_range(0.0..PI);
        let t = rng.random_range(0.0..period);
        let u = signed(&mut rng, -2.0, 4.0);
        let v = (u + signed(&mut rng, -3.0, 1.0)) - u;
        let q = (nl.f_b(x, t, u + v) - nl.f_b(x, t, u)).abs() / v.abs();
        if !q.is_finite() {
            return Err(Error::NonFinite { x, t, u, value: q });
        }
        if q > best.estimate || i == 0 {
            best.estimate = q;
            best.witness = Witness {
                x,
                t,
                u,
                v: Some(v),
                value: q,
            };
        }
    }
    Ok(best)
}

/// Hypothesis tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    F1,
    F2,
    F2pm,
    F3plus,
    F3minus,
    F4plus,
    F4minus,
}

impl Condition {
    pub const ALL: [Condition; 7] = [
        Condition::F1,
        Condition::F2,
        Condition::F2pm,
        Condition::F3plus,
        Condition::F3minus,
        Condition::F4plus,
        Condition::F4minus,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::F1 => "f1",
            Condition::F2 => "f2",
            Condition::F2pm => "f2pm",
            Condition::F3plus => "f3plus",
            Condition::F3minus => "f3minus",
            Condition::F4plus => "f4plus",
            Condition::F4minus => "f4minus",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown condition `{s}`")))
    }
}

/// One piece of evidence in a hypothesis report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Evidence {
    Flag(bool),
    Integer(i64),
    Real(f64),
    Text(String),
    Index(IndexPair),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HypothesisReport {
    pub condition: Condition,
    pub holds: bool,
    pub evidence: BTreeMap<String, Evidence>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub seed: u64,
    pub lipschitz_samples: usize,
    /// The u sweep is ±10^m for m in this inclusive range.
    pub sweep_exponents: (i32, i32),
    /// Lower bound accepted for the constant c in (f₃±).
    pub c3_floor: f64,
    /// Largest excess of f_b/u over [g₁, g₂] accepted at the top of the sweep.
    pub tail_tol: f64,
    /// |u| from which the (f₂±) growth inequality is checked.
    pub m2: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            lipschitz_samples: 20_000,
            sweep_exponents: (-2, 4),
            c3_floor: -1e3,
            tail_tol: 1e-3,
            m2: 10.0,
        }
    }
}

impl CheckOptions {
    fn sweep(&self) -> Vec<f64> {
        let (lo, hi) = self.sweep_exponents;
        (lo..=hi)
            .flat_map(|m| {
                let v = 10f64.powi(m);
                [v, -v]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WaveOptions {
    /// Split threshold; chosen inside (l_F, |b|) when `None`.
    pub l: Option<f64>,
    /// Build even when 0 < l_F < l < |b| fails.
    pub force: bool,
}

/// □u = f(x, t, u) on a truncation, with A = □ − b·I.
#[derive(Clone)]
pub struct WaveProblem {
    pub spec: TruncationSpec,
    pub nonlinearity: Arc<Nonlinearity>,
    pub basis: Arc<FourierBasis>,
    pub a: TruncatedOperator,
    pub reduced: ReducedProblem,
    pub forced: bool,
}

impl fmt::Debug for WaveProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveProblem")
            .field("spec", &self.spec)
            .field("nonlinearity", &self.nonlinearity)
            .field("reduced", &self.reduced)
            .field("forced", &self.forced)
            .finish()
    }
}

impl WaveProblem {
    pub fn new(spec: TruncationSpec, nl: Nonlinearity, opts: WaveOptions) -> Result<Self> {
        spec.validate()?;
        let b = nl.b.abs();
        let l_f = nl.lipschitz_claimed;
        if !opts.force && !(l_f > 0.0 && l_f < b) {
            return Err(Error::HypothesisFailure {
                condition: "f1".into(),
                detail: format!("claimed l_F = {l_f} must lie in (0, |b|) with |b| = {b}"),
            });
        }
        let a = wave_operator(&spec)?.shifted(-nl.b);
        let l = match opts.l {
            Some(l) => l,
            None => choose_threshold(&a, l_f, b)?,
        };
        if !opts.force && !(l > l_f && l < b) {
            return Err(Error::HypothesisFailure {
                condition: "l_F < l < |b|".into(),
                detail: format!("l = {l}, l_F = {l_f}, |b| = {b}"),
            });
        }
        let basis = FourierBasis::shared(spec)?;
        let nl = Arc::new(nl);
        let map: Arc<dyn NonlinearMap> = Arc::new(NemytskiiMap::new(basis.clone(), nl.clone()));
        let reduced = if opts.force {
            ReducedProblem::new_unchecked(a.clone(), map, l)?
        } else {
            ReducedProblem::new(a.clone(), map, l)?
        };
        Ok(Self {
            spec,
            nonlinearity: nl,
            basis,
            a,
            reduced,
            forced: opts.force,
        })
    }

    /// Grid values of a comparison field.
    pub fn field_values(&self, name: &str) -> Result<DVector<f64>> {
        let g = self.nonlinearity.comparison_field(name)?;
        Ok(self.basis.sample(g))
    }

    /// Multiplication operator of a comparison field.
    pub fn field_operator(&self, name: &str) -> Result<TruncatedOperator> {
        multiplication_operator_flat(&self.basis, &self.field_values(name)?)
    }

    /// (i_A(g), ν_A(g)) for a comparison field, with the stability flag set
    /// by recomputation at (J + 2, K + 2).
    pub fn field_index(&self, name: &str) -> Result<IndexPair> {
        let b = self.nonlinearity.b;
        let nl = &self.nonlinearity;
        let g = nl.comparison_field(name)?;
        let opts = IndexOptions {
            kernel_tol: None,
            gap: Some((-b.abs(), b.abs())),
        };
        stable_relative_morse_index(&self.spec, &opts, |s| {
            let basis = FourierBasis::new(*s)?;
            let a = wave_operator(s)?.shifted(-b);
            let m = multiplication_operator_flat(&basis, &basis.sample(&g))?;
            Ok((a, m))
        })
    }

    /// ‖Az − F'(z)‖ on the problem grid, which is ‖□u − f(·,·,u)‖ on the
    /// truncation.
    pub fn residual(&self, z: &DVector<f64>) -> Result<f64> {
        self.reduced.residual(z)
    }

    /// The same residual with F' evaluated on a grid twice as fine.
    pub fn oversampled_residual(&self, z: &DVector<f64>) -> Result<f64> {
        let fine = FourierBasis::shared(self.spec.oversampled())?;
        let map = NemytskiiMap::new(fine, self.nonlinearity.clone());
        Ok((self.a.apply(z) - map.gradient(z)?).norm())
    }

    /// (x, t, u) rows of a solution on the problem grid.
    pub fn grid_rows(&self, z: &DVector<f64>) -> Vec<(f64, f64, f64)> {
        let u = self.basis.synthesize(z);
        u.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (x, t) = self.basis.node(i);
                (x, t, v)
            })
            .collect()
    }

    pub fn check_hypotheses(&self, which: &[Condition], opts: &CheckOptions) -> Result<Vec<HypothesisReport>> {
        which.iter().map(|c| self.check(*c, opts)).collect()
    }

    fn check(&self, condition: Condition, opts: &CheckOptions) -> Result<HypothesisReport> {
        let mut report = HypothesisReport {
            condition,
            holds: false,
            evidence: BTreeMap::new(),
            seed: opts.seed,
            witness: None,
        };
        let ev = &mut report.evidence;
        let nl = &self.nonlinearity;
        let b = nl.b.abs();
        match condition {
            Condition::F1 => {
                let est = estimate_lipschitz(nl, opts.lipschitz_samples, opts.seed)?;
                let claimed = nl.lipschitz_claimed;
                ev.insert("claimed".into(), Evidence::Real(claimed));
                ev.insert("sampled_max".into(), Evidence::Real(est.estimate));
                ev.insert("samples".into(), Evidence::Integer(est.samples as i64));
                ev.insert("abs_b".into(), Evidence::Real(b));
                let bound_ok = est.estimate <= claimed + 1e-9;
                let range_ok = claimed > 0.0 && claimed < b;
                ev.insert("sampled_within_claim".into(), Evidence::Flag(bound_ok));
                ev.insert("claim_below_abs_b".into(), Evidence::Flag(range_ok));
                ev.insert("sampled_below_abs_b".into(), Evidence::Flag(est.estimate < b));
                report.holds = bound_ok && range_ok && est.estimate < b;
                report.witness = Some(est.witness);
            }
            Condition::F2 => {
                let g1 = nl.comparison_field("g1")?;
                let g2 = nl.comparison_field("g2")?;
                let (excess, witness, tail) = self.bracket_excess(&g1, &g2, opts);
                let order_ok = self.basis.sample(|x, t| g2(x, t) - g1(x, t)).min() >= 0.0;
                let i1 = self.field_index("g1")?;
                let i2 = self.field_index("g2")?;
                let decaying = tail.windows(2).all(|w| w[1] <= w[0] + 1e-15);
                let tail_small = tail.last().copied().unwrap_or(0.0) <= opts.tail_tol;
                ev.insert("g1_le_g2".into(), Evidence::Flag(order_ok));
                ev.insert("max_excess".into(), Evidence::Real(excess));
                ev.insert("tail_excess".into(), Evidence::Real(*tail.last().unwrap_or(&0.0)));
                ev.insert("tail_decaying".into(), Evidence::Flag(decaying));
                ev.insert("index_g1".into(), Evidence::Index(i1.clone()));
                ev.insert("index_g2".into(), Evidence::Index(i2.clone()));
                report.holds = order_ok
                    && tail_small
                    && decaying
                    && i1.index == i2.index
                    && i2.nullity == 0;
                report.witness = witness;
            }
            Condition::F2pm => {
                let g = self.field_values("g_inf")?;
                let sign = nl.growth_sign();
                let mut m1: f64 = 0.0;
                let mut c_plus = f64::INFINITY;
                let mut c_minus = f64::INFINITY;
                let mut witness = None;
                for u in opts.sweep() {
                    for i in 0..self.spec.grid_len() {
                        let (x, t) = self.basis.node(i);
                        let r = nl.f_b(x, t, u) - g[i] * u;
                        if r.abs() > m1 {
                            m1 = r.abs();
                            witness = Some(Witness {
                                x,
                                t,
                                u,
                                v: None,
                                value: r,
                            });
                        }
                        if u.abs() >= opts.m2 {
                            c_plus = c_plus.min(r * u.signum());
                            c_minus = c_minus.min(-r * u.signum());
                        }
                    }
                }
                let top = opts.sweep_exponents.1;
                let bounded = {
                    let at = |m: i32| {
                        let u = 10f64.powi(m);
                        (0..self.spec.grid_len())
                            .map(|i| {
                                let (x, t) = self.basis.node(i);
                                (nl.f_b(x, t, u) - g[i] * u)
                                    .abs()
                                    .max((nl.f_b(x, t, -u) + g[i] * u).abs())
                            })
                            .fold(0.0_f64, f64::max)
                    };
                    at(top) <= 1.1 * at(top - 1) + 1e-12
                };
                let g_max = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                let kernel = self.field_index("g_inf")?;
                ev.insert("m1".into(), Evidence::Real(m1));
                ev.insert("m2".into(), Evidence::Real(opts.m2));
                ev.insert("remainder_bounded".into(), Evidence::Flag(bounded));
                ev.insert("c_plus".into(), Evidence::Real(c_plus));
                ev.insert("c_minus".into(), Evidence::Real(c_minus));
                ev.insert("g_inf_sup".into(), Evidence::Real(g_max));
                ev.insert("index_g_inf".into(), Evidence::Index(kernel));
                let c = match sign {
                    Some(s) if s > 0.0 => {
                        ev.insert("sign".into(), Evidence::Text("plus".into()));
                        c_plus
                    }
                    Some(_) => {
                        ev.insert("sign".into(), Evidence::Text("minus".into()));
                        c_minus
                    }
                    None => {
                        ev.insert("sign".into(), Evidence::Text("either".into()));
                        c_plus.max(c_minus)
                    }
                };
                report.holds = bounded && c > 0.0 && g_max < b;
                report.witness = witness;
            }
            Condition::F3plus | Condition::F3minus => {
                let s = if condition == Condition::F3plus { 1.0 } else { -1.0 };
                let g3 = self.field_values("g3")?;
                let threshold_l = nl.lipschitz_claimed.min(self.reduced.l());
                let top = self
                    .a
                    .eigenvalues()
                    .iter()
                    .map(|v| s * v)
                    .filter(|&v| v < threshold_l)
                    .fold(f64::NEG_INFINITY, f64::max);
                let margin = g3.iter().map(|g| s * g - top).fold(f64::INFINITY, f64::min);
                let mut c = f64::INFINITY;
                let mut witness = None;
                for u in opts.sweep().into_iter().chain([0.0]) {
                    for i in 0..self.spec.grid_len() {
                        let (x, t) = self.basis.node(i);
                        let v = s * nl.primitive(x, t, u)? - 0.5 * g3[i] * u * u;
                        if v < c {
                            c = v;
                            witness = Some(Witness {
                                x,
                                t,
                                u,
                                v: None,
                                value: v,
                            });
                        }
                    }
                }
                let g3_sup = g3.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                ev.insert("threshold_l".into(), Evidence::Real(threshold_l));
                ev.insert("spectral_max_below_l".into(), Evidence::Real(top));
                ev.insert("g3_margin".into(), Evidence::Real(margin));
                ev.insert("c_sampled".into(), Evidence::Real(c));
                ev.insert("c_floor".into(), Evidence::Real(opts.c3_floor));
                ev.insert("g3_sup".into(), Evidence::Real(g3_sup));
                report.holds = margin > 0.0 && c >= opts.c3_floor && g3_sup < b;
                report.witness = witness;
            }
            Condition::F4plus | Condition::F4minus => {
                let s: i64 = if condition == Condition::F4plus { 1 } else { -1 };
                let at_zero = self
                    .basis
                    .sample(|x, t| nl.f(x, t, 0.0))
                    .iter()
                    .fold(0.0_f64, |a, v| a.max(v.abs()));
                let i0 = self.field_index("g0")?;
                let i3 = self.field_index("g3")?;
                let lhs = s * (i0.index + i0.nullity as i64);
                let rhs = s * i3.index;
                ev.insert("f_at_zero_sup".into(), Evidence::Real(at_zero));
                ev.insert("index_g0".into(), Evidence::Index(i0.clone()));
                ev.insert("index_g3".into(), Evidence::Index(i3.clone()));
                ev.insert("nu_g0_zero".into(), Evidence::Flag(i0.nullity == 0));
                ev.insert(
                    "g0_evaluation".into(),
                    Evidence::Text("g0 = f_b'(x, t, 0), derivative taken at u = 0".into()),
                );
                report.holds = at_zero <= 1e-14 && lhs < rhs;
            }
        }
        Ok(report)
    }

    /// Largest distance of f_b/u from [g₁, g₂] over the sweep, and the same
    /// per sweep magnitude (ascending) for the decay test.
    fn bracket_excess(
        &self,
        g1: &dyn Fn(f64, f64) -> f64,
        g2: &dyn Fn(f64, f64) -> f64,
        opts: &CheckOptions,
    ) -> (f64, Option<Witness>, Vec<f64>) {
        let nl = &self.nonlinearity;
        let mut worst = 0.0_f64;
        let mut witness = None;
        let (lo, hi) = opts.sweep_exponents;
        let mut per_level = Vec::new();
        for m in lo..=hi {
            let mag = 10f64.powi(m);
            let mut level = 0.0_f64;
            for u in [mag, -mag] {
                for i in 0..self.spec.grid_len() {
                    let (x, t) = self.basis.node(i);
                    let q = nl.f_b(x, t, u) / u;
                    let excess = (g1(x, t) - q).max(q - g2(x, t)).max(0.0);
                    level = level.max(excess);
                    if excess > worst {
                        worst = excess;
                        witness = Some(Witness {
                            x,
                            t,
                            u,
                            v: None,
                            value: q,
                        });
                    }
                }
            }
            per_level.push(level);
        }
        // only the tail above |u| = 1 has to decay
        let tail = per_level
            .into_iter()
            .zip(lo..=hi)
            .filter(|(_, m)| *m >= 0)
            .map(|(v, _)| v)
            .collect();
        (worst, witness, tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ReduceDirect,
    Homotopy,
    Regularized,
}

impl Method {
    /// Conditions checked before solving unless forced.
    pub fn prerequisites(&self) -> &'static [Condition] {
        match self {
            Method::ReduceDirect => &[Condition::F1],
            Method::Homotopy => &[Condition::F1, Condition::F2],
            Method::Regularized => &[Condition::F1, Condition::F2pm],
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduce_direct" => Ok(Method::ReduceDirect),
            "homotopy" => Ok(Method::Homotopy),
            "regularized" => Ok(Method::Regularized),
            other => Err(Error::InvalidArgument(format!(
                "unknown method `{other}`; expected reduce_direct, homotopy or regularized"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub search: SearchOptions,
    pub homotopy: HomotopyOptions,
    pub regularization: RegularizationOptions,
    pub check: CheckOptions,
    /// Solve even when a prerequisite condition fails.
    pub force: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            search: SearchOptions::default(),
            homotopy: HomotopyOptions::default(),
            regularization: RegularizationOptions::default(),
            check: CheckOptions::default(),
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertifiedSolution {
    pub point: CriticalPointReport,
    pub norm: f64,
    /// ‖□u − f(·,·,u)‖ on the truncation.
    pub residual: f64,
    /// The same residual with the nonlinearity sampled on the doubled grid.
    pub oversampled_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WaveSolution {
    pub method: Method,
    pub solutions: Vec<CertifiedSolution>,
    pub hypotheses: Vec<HypothesisReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<SearchDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homotopy: Option<HomotopyPath>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularization: Option<RegularizedPath>,
}

impl WaveProblem {
    pub fn certify(&self, point: CriticalPointReport) -> Result<CertifiedSolution> {
        let z = point.z_vector();
        Ok(CertifiedSolution {
            norm: z.norm(),
            residual: self.residual(&z)?,
            oversampled_residual: self.oversampled_residual(&z)?,
            point,
        })
    }
}

/// Solve the wave problem by the chosen method, refusing when a
/// prerequisite hypothesis fails unless `opts.force` is set.
pub fn solve_wave(problem: &WaveProblem, method: Method, opts: &SolveOptions) -> Result<WaveSolution> {
    let hypotheses = problem.check_hypotheses(method.prerequisites(), &opts.check)?;
    if !opts.force {
        if let Some(failed) = hypotheses.iter().find(|r| !r.holds) {
            return Err(Error::HypothesisFailure {
                condition: failed.condition.to_string(),
                detail: format!("evidence {:?}", failed.evidence),
            });
        }
    }
    let mut out = WaveSolution {
        method,
        solutions: Vec::new(),
        hypotheses,
        diagnostics: None,
        homotopy: None,
        regularization: None,
    };
    match method {
        Method::ReduceDirect => {
            let found = find_critical_points(&problem.reduced, &opts.search)?;
            for p in found.points {
                out.solutions.push(problem.certify(p)?);
            }
            out.diagnostics = Some(found.diagnostics);
        }
        Method::Homotopy => {
            let b1 = problem.field_operator("g1")?;
            let path = homotopy_solve(
                &problem.a,
                &b1,
                problem.reduced.f.clone(),
                problem.reduced.l(),
                &opts.homotopy,
            )?;
            out.solutions.push(problem.certify(path.endpoint.clone())?);
            out.homotopy = Some(path);
        }
        Method::Regularized => {
            let g = problem.field_values("g_inf")?;
            let b_inf = multiplication_operator_flat(&problem.basis, &g)?;
            let nl = problem.nonlinearity.clone();
            let lip = nl.remainder_lipschitz();
            let r: Arc<dyn NonlinearMap> = Arc::new(NemytskiiMap::remainder(problem.basis.clone(), nl.clone(), g, lip));
            let mut reg = opts.regularization.clone();
            // the shift opposes the growth sign so the kernel part stays bounded
            reg.sign = -nl.growth_sign().unwrap_or(-1.0);
            let path = regularized_solve(&problem.a, &b_inf, r, problem.reduced.l(), &reg)?;
            out.solutions.push(problem.certify(path.limit.clone())?);
            out.regularization = Some(path);
        }
    }
    Ok(out)
}

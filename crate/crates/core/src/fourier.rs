//! Truncated Fourier model of L²([0,π]×S¹).
//!
//! Functions vanish at x = 0 and x = π and are T-periodic in t with
//! T = 2πq/p. The real basis is `sin(jx)·cos(kωt)` and `sin(jx)·sin(kωt)`
//! with ω = p/q, each scaled to unit L² norm on [0,π]×[0,T], so coefficient
//! vectors are isometric to the truncated subspace of L².
//!
//! Grid values live on the tensor grid x_m = π(m+½)/Nx, t_n = T·n/Nt. The
//! midpoint rule in x and the uniform rule in t integrate every product of two
//! basis functions exactly as long as Nx > J and Nt > 2K, which the
//! oversampling invariant guarantees with room to spare.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coprime period pair, mode cutoffs and quadrature sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub p: u32,
    pub q: u32,
    #[serde(rename = "J")]
    pub j_max: usize,
    #[serde(rename = "K")]
    pub k_max: usize,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

impl TruncationSpec {
    /// Validated constructor.
    pub fn new(p: u32, q: u32, j_max: usize, k_max: usize, nx: usize, nt: usize) -> Result<Self> {
        let spec = Self {
            p,
            q,
            j_max,
            k_max,
            nx,
            nt,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Smallest admissible grid for the given modes.
    pub fn with_min_grid(p: u32, q: u32, j_max: usize, k_max: usize) -> Result<Self> {
        Self::new(p, q, j_max, k_max, 4 * j_max, 4 * k_max + 4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::InvalidSpec(format!(
                "p and q must be positive (p = {}, q = {})",
                self.p, self.q
            )));
        }
        if gcd(self.p, self.q) != 1 {
            return Err(Error::InvalidSpec(format!(
                "p = {} and q = {} are not coprime",
                self.p, self.q
            )));
        }
        if self.j_max == 0 {
            return Err(Error::InvalidSpec("J must be at least 1".into()));
        }
        if self.nx < 4 * self.j_max {
            return Err(Error::InvalidSpec(format!(
                "Nx = {} is below 4J = {}",
                self.nx,
                4 * self.j_max
            )));
        }
        if self.nt < 4 * self.k_max + 4 {
            return Err(Error::InvalidSpec(format!(
                "Nt = {} is below 4K+4 = {}",
                self.nt,
                4 * self.k_max + 4
            )));
        }
        Ok(())
    }

    /// Period T = 2πq/p.
    pub fn period(&self) -> f64 {
        2.0 * PI * f64::from(self.q) / f64::from(self.p)
    }

    /// Temporal frequency ω = p/q.
    pub fn omega(&self) -> f64 {
        f64::from(self.p) / f64::from(self.q)
    }

    /// Number of modes N = J·(2K+1).
    pub fn mode_count(&self) -> usize {
        self.j_max * (2 * self.k_max + 1)
    }

    pub fn grid_len(&self) -> usize {
        self.nx * self.nt
    }

    /// Same modes `extra` steps further out in J and K, with the grid grown
    /// only as far as the oversampling invariant requires.
    pub fn refined(&self, extra: usize) -> Self {
        let j_max = self.j_max + extra;
        let k_max = self.k_max + extra;
        Self {
            j_max,
            k_max,
            nx: self.nx.max(4 * j_max),
            nt: self.nt.max(4 * k_max + 4),
            ..*self
        }
    }

    /// Same modes on a grid twice as fine in both directions.
    pub fn oversampled(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            nt: 2 * self.nt,
            ..*self
        }
    }

    pub fn x_node(&self, m: usize) -> f64 {
        PI * (m as f64 + 0.5) / self.nx as f64
    }

    pub fn t_node(&self, n: usize) -> f64 {
        self.period() * n as f64 / self.nt as f64
    }

    /// Quadrature weight of every grid node.
    pub fn node_weight(&self) -> f64 {
        (PI / self.nx as f64) * (self.period() / self.nt as f64)
    }
}

impl fmt::Display for TruncationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={} q={} J={} K={} Nx={} Nt={}",
            self.p, self.q, self.j_max, self.k_max, self.nx, self.nt
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

/// One real basis function `sin(jx)·{cos,sin}(kωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub j: usize,
    pub k: usize,
    pub phase: Phase,
}

impl ModeIndex {
    pub fn new(j: usize, k: usize, phase: Phase) -> Self {
        Self { j, k, phase }
    }

    /// Factor turning the unnormalized product `sin(jx)·cos(kωt)` into a unit
    /// vector of L²([0,π]×[0,T]).
    pub fn normalization(&self, period: f64) -> f64 {
        let time_norm_sq = if self.k == 0 { period } else { period / 2.0 };
        1.0 / (PI / 2.0 * time_norm_sq).sqrt()
    }

    /// Unnormalized value at (x, t).
    pub fn shape(&self, x: f64, t: f64, omega: f64) -> f64 {
        let arg = self.k as f64 * omega * t;
        let time = match self.phase {
            Phase::Cos => arg.cos(),
            Phase::Sin => arg.sin(),
        };
        (self.j as f64 * x).sin() * time
    }
}

/// Modes in the fixed order: ascending j, then ascending k, cos before sin.
pub fn mode_table(spec: &TruncationSpec) -> Result<Vec<ModeIndex>> {
    spec.validate()?;
    let mut modes = Vec::with_capacity(spec.mode_count());
    for j in 1..=spec.j_max {
        modes.push(ModeIndex::new(j, 0, Phase::Cos));
        for k in 1..=spec.k_max {
            modes.push(ModeIndex::new(j, k, Phase::Cos));
            modes.push(ModeIndex::new(j, k, Phase::Sin));
        }
    }
    Ok(modes)
}

/// Real coefficient vector in the orthonormal basis of a truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    pub spec: TruncationSpec,
    pub coeffs: DVector<f64>,
}

impl FourierField {
    pub fn new(spec: TruncationSpec, coeffs: DVector<f64>) -> Result<Self> {
        spec.validate()?;
        if coeffs.len() != spec.mode_count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coefficients", spec.mode_count()),
                found: format!("{}", coeffs.len()),
            });
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coefficient {i} is not finite"
            )));
        }
        Ok(Self { spec, coeffs })
    }

    pub fn zeros(spec: TruncationSpec) -> Self {
        Self {
            spec,
            coeffs: DVector::zeros(spec.mode_count()),
        }
    }

    /// Build from amplitudes of the unnormalized products `sin(jx)·cos(kωt)`.
    pub fn from_amplitudes(spec: TruncationSpec, amplitudes: &DVector<f64>) -> Result<Self> {
        let modes = mode_table(&spec)?;
        if amplitudes.len() != modes.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} amplitudes", modes.len()),
                found: format!("{}", amplitudes.len()),
            });
        }
        let period = spec.period();
        let coeffs = DVector::from_iterator(
            modes.len(),
            modes
                .iter()
                .zip(amplitudes.iter())
                .map(|(m, a)| a / m.normalization(period)),
        );
        Self::new(spec, coeffs)
    }

    /// Amplitudes with respect to the unnormalized products.
    pub fn amplitudes(&self) -> DVector<f64> {
        let period = self.spec.period();
        let modes = mode_table(&self.spec).expect("field spec was validated");
        DVector::from_iterator(
            modes.len(),
            modes
                .iter()
                .zip(self.coeffs.iter())
                .map(|(m, c)| c * m.normalization(period)),
        )
    }

    /// L² inner product (u, w)₂.
    pub fn inner(&self, other: &FourierField) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }
}

/// Cached synthesis matrix of a truncation: row `m·Nt + n` holds every
/// normalized basis function evaluated at (x_m, t_n).
#[derive(Debug, Clone)]
pub struct FourierBasis {
    spec: TruncationSpec,
    modes: Vec<ModeIndex>,
    synthesis: DMatrix<f64>,
    weight: f64,
}

impl FourierBasis {
    pub fn new(spec: TruncationSpec) -> Result<Self> {
        let modes = mode_table(&spec)?;
        let period = spec.period();
        let omega = spec.omega();
        let xs: Vec<f64> = (0..spec.nx).map(|m| spec.x_node(m)).collect();
        let ts: Vec<f64> = (0..spec.nt).map(|n| spec.t_node(n)).collect();
        let mut synthesis = DMatrix::zeros(spec.grid_len(), modes.len());
        for (col, mode) in modes.iter().enumerate() {
            let scale = mode.normalization(period);
            let spatial: Vec<f64> = xs.iter().map(|&x| (mode.j as f64 * x).sin()).collect();
            let temporal: Vec<f64> = ts
                .iter()
                .map(|&t| {
                    let arg = mode.k as f64 * omega * t;
                    match mode.phase {
                        Phase::Cos => arg.cos(),
                        Phase::Sin => arg.sin(),
                    }
                })
                .collect();
            for (m, sx) in spatial.iter().enumerate() {
                for (n, st) in temporal.iter().enumerate() {
                    synthesis[(m * spec.nt + n, col)] = scale * sx * st;
                }
            }
        }
        Ok(Self {
            spec,
            modes,
            synthesis,
            weight: spec.node_weight(),
        })
    }

    pub fn shared(spec: TruncationSpec) -> Result<Arc<Self>> {
        Self::new(spec).map(Arc::new)
    }

    pub fn spec(&self) -> &TruncationSpec {
        &self.spec
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Grid-major synthesis matrix (grid_len × N).
    pub fn synthesis(&self) -> &DMatrix<f64> {
        &self.synthesis
    }

    /// Grid values as a flat vector in `m·Nt + n` order.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.synthesis * coeffs
    }

    /// Discrete L² projection of flat grid values onto the basis.
    pub fn analyze(&self, values: &DVector<f64>) -> DVector<f64> {
        self.synthesis.tr_mul(values) * self.weight
    }

    pub fn to_grid(&self, u: &FourierField) -> Result<DMatrix<f64>> {
        self.check_field(u)?;
        Ok(self.reshape(&self.synthesize(&u.coeffs)))
    }

    pub fn from_grid(&self, v: &DMatrix<f64>) -> Result<FourierField> {
        if v.shape() != (self.spec.nx, self.spec.nt) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} grid", self.spec.nx, self.spec.nt),
                found: format!("{}x{}", v.nrows(), v.ncols()),
            });
        }
        let flat = self.flatten(v);
        Ok(FourierField {
            spec: self.spec,
            coeffs: self.analyze(&flat),
        })
    }

    /// Flat `m·Nt + n` vector from an Nx × Nt matrix.
    pub fn flatten(&self, v: &DMatrix<f64>) -> DVector<f64> {
        let nt = self.spec.nt;
        DVector::from_fn(self.spec.grid_len(), |i, _| v[(i / nt, i % nt)])
    }

    /// Nx × Nt matrix from a flat `m·Nt + n` vector.
    pub fn reshape(&self, flat: &DVector<f64>) -> DMatrix<f64> {
        let nt = self.spec.nt;
        DMatrix::from_fn(self.spec.nx, nt, |m, n| flat[m * nt + n])
    }

    /// Tabulate a function of (x, t) on the grid (flat layout).
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        let nt = self.spec.nt;
        DVector::from_fn(self.spec.grid_len(), |i, _| {
            f(self.spec.x_node(i / nt), self.spec.t_node(i % nt))
        })
    }

    /// (x, t) of a flat grid index.
    pub fn node(&self, index: usize) -> (f64, f64) {
        let nt = self.spec.nt;
        (self.spec.x_node(index / nt), self.spec.t_node(index % nt))
    }

    fn check_field(&self, u: &FourierField) -> Result<()> {
        if u.spec != self.spec {
            return Err(Error::ShapeMismatch {
                expected: format!("field on {}", self.spec),
                found: format!("field on {}", u.spec),
            });
        }
        Ok(())
    }
}

/// Evaluate a field on the tensor grid (Nx × Nt).
pub fn to_grid(u: &FourierField) -> Result<DMatrix<f64>> {
    FourierBasis::new(u.spec)?.to_grid(u)
}

/// Discrete L² projection of grid values onto the truncated basis.
pub fn from_grid(v: &DMatrix<f64>, spec: &TruncationSpec) -> Result<FourierField> {
    FourierBasis::new(*spec)?.from_grid(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(p: u32, q: u32, j: usize, k: usize) -> TruncationSpec {
        TruncationSpec::with_min_grid(p, q, j, k).unwrap()
    }

    fn random_field(spec: TruncationSpec, rng: &mut ChaCha8Rng) -> FourierField {
        let c = DVector::from_fn(spec.mode_count(), |_, _| rng.random_range(-1.0..1.0));
        FourierField::new(spec, c).unwrap()
    }

    #[test]
    fn single_mode_table() {
        let modes = mode_table(&spec(1, 1, 1, 0)).unwrap();
        assert_eq!(modes, vec![ModeIndex::new(1, 0, Phase::Cos)]);
    }

    #[test]
    fn enumeration_order() {
        let modes = mode_table(&spec(1, 1, 2, 1)).unwrap();
        let expected = vec![
            ModeIndex::new(1, 0, Phase::Cos),
            ModeIndex::new(1, 1, Phase::Cos),
            ModeIndex::new(1, 1, Phase::Sin),
            ModeIndex::new(2, 0, Phase::Cos),
            ModeIndex::new(2, 1, Phase::Cos),
            ModeIndex::new(2, 1, Phase::Sin),
        ];
        assert_eq!(modes, expected);
    }

    #[test]
    fn mode_count_matches_formula() {
        let s = spec(2, 3, 3, 2);
        assert_eq!(mode_table(&s).unwrap().len(), 15);
        assert_eq!(s.mode_count(), 3 * (2 * 2 + 1));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(matches!(
            TruncationSpec::new(2, 4, 2, 1, 8, 8),
            Err(Error::InvalidSpec(_))
        ));
        assert!(TruncationSpec::new(1, 1, 4, 1, 15, 8).is_err());
        assert!(TruncationSpec::new(1, 1, 4, 1, 16, 7).is_err());
        assert!(TruncationSpec::new(1, 1, 0, 1, 16, 8).is_err());
        assert!(TruncationSpec::new(0, 1, 1, 1, 16, 8).is_err());
        assert!(TruncationSpec::new(1, 1, 4, 1, 16, 8).is_ok());
    }

    #[test]
    fn zero_field_maps_to_zero_grid() {
        let s = spec(1, 1, 3, 2);
        let g = to_grid(&FourierField::zeros(s)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_amplitude_is_sin_x() {
        let s = spec(1, 1, 2, 2);
        let mut amp = DVector::zeros(s.mode_count());
        amp[0] = 1.0;
        let u = FourierField::from_amplitudes(s, &amp).unwrap();
        let g = to_grid(&u).unwrap();
        for m in 0..s.nx {
            for n in 0..s.nt {
                assert!((g[(m, n)] - s.x_node(m).sin()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sin_x_projects_to_first_mode() {
        let s = spec(1, 1, 3, 2);
        let v = DMatrix::from_fn(s.nx, s.nt, |m, _| s.x_node(m).sin());
        let amp = from_grid(&v, &s).unwrap().amplitudes();
        assert!((amp[0] - 1.0).abs() < 1e-12);
        assert!(amp.iter().skip(1).all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn sin_x_cos_omega_t_projects_to_its_mode() {
        let s = spec(2, 3, 3, 2);
        let omega = s.omega();
        let v = DMatrix::from_fn(s.nx, s.nt, |m, n| {
            s.x_node(m).sin() * (omega * s.t_node(n)).cos()
        });
        let amp = from_grid(&v, &s).unwrap().amplitudes();
        assert!((amp[1] - 1.0).abs() < 1e-12);
        for (i, a) in amp.iter().enumerate() {
            if i != 1 {
                assert!(a.abs() < 1e-12, "mode {i} = {a}");
            }
        }
    }

    #[test]
    fn round_trip_and_linearity() {
        let s = spec(2, 3, 4, 3);
        let basis = FourierBasis::new(s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_field(s, &mut rng);
        let w = random_field(s, &mut rng);
        let back = basis.from_grid(&basis.to_grid(&u).unwrap()).unwrap();
        assert!((back.coeffs - &u.coeffs).amax() < 1e-12);
        let sum = basis.to_grid(&u).unwrap() + basis.to_grid(&w).unwrap();
        let proj = basis.from_grid(&sum).unwrap();
        assert!((proj.coeffs - (&u.coeffs + &w.coeffs)).amax() < 1e-12);
    }

    #[test]
    fn parseval_on_random_pairs() {
        let s = spec(1, 2, 3, 3);
        let basis = FourierBasis::new(s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = random_field(s, &mut rng);
            let w = random_field(s, &mut rng);
            let gu = basis.to_grid(&u).unwrap();
            let gw = basis.to_grid(&w).unwrap();
            let discrete = gu.component_mul(&gw).sum() * basis.weight();
            assert!((discrete - u.inner(&w)).abs() < 1e-10);
        }
    }

    #[test]
    fn from_grid_rejects_wrong_shape() {
        let s = spec(1, 1, 2, 1);
        let v = DMatrix::zeros(s.nx + 1, s.nt);
        assert!(matches!(from_grid(&v, &s), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn refinement_keeps_oversampling() {
        let s = spec(1, 1, 8, 8);
        let r = s.refined(2);
        assert_eq!((r.j_max, r.k_max), (10, 10));
        assert!(r.validate().is_ok());
        assert_eq!(s.oversampled().nx, 2 * s.nx);
    }
}

//! Truncated self-adjoint operators and their spectral splittings.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{mode_table, FourierBasis, TruncationSpec};

/// Half-width of the exclusion zone around ±l in [`spectral_split`].
pub const THRESHOLD_WINDOW: f64 = 1e-9;

/// Real symmetric matrix acting on coefficient vectors. Operators built from
/// raw matrices carry no truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    pub spec: Option<TruncationSpec>,
    pub matrix: DMatrix<f64>,
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenBasis {
    pub fn of(matrix: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(matrix.clone());
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    /// Columns `range` of the eigenvector matrix.
    pub fn columns(&self, range: std::ops::Range<usize>) -> DMatrix<f64> {
        self.vectors.columns(range.start, range.len()).into_owned()
    }
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sorted_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = matrix.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

fn symmetrized(matrix: DMatrix<f64>) -> DMatrix<f64> {
    let t = matrix.transpose();
    (matrix + t) * 0.5
}

impl TruncatedOperator {
    /// Abstract operator from a square matrix, symmetrized.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        Self::build(None, matrix)
    }

    pub fn with_spec(spec: TruncationSpec, matrix: DMatrix<f64>) -> Result<Self> {
        spec.validate()?;
        if matrix.nrows() != spec.mode_count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0} matrix", spec.mode_count()),
                found: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        Self::build(Some(spec), matrix)
    }

    fn build(spec: Option<TruncationSpec>, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                found: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        Ok(Self {
            spec,
            matrix: symmetrized(matrix),
        })
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        Self {
            spec: None,
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(values)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec,
            matrix: DMatrix::zeros(self.dim(), self.dim()),
        }
    }

    pub fn identity_like(&self) -> Self {
        Self {
            spec: self.spec,
            matrix: DMatrix::identity(self.dim(), self.dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut matrix = self.matrix.clone();
        for i in 0..self.dim() {
            matrix[(i, i)] += c;
        }
        Self {
            spec: self.spec,
            matrix,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            spec: self.spec,
            matrix: &self.matrix * c,
        }
    }

    /// `self − other`, checking compatibility.
    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            spec: self.spec.or(other.spec),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            spec: self.spec.or(other.spec),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("dimension {}", self.dim()),
                found: format!("dimension {}", other.dim()),
            });
        }
        if let (Some(a), Some(b)) = (self.spec, other.spec) {
            if a != b {
                return Err(Error::ShapeMismatch {
                    expected: format!("operator on {a}"),
                    found: format!("operator on {b}"),
                });
            }
        }
        Ok(())
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    pub fn eigen(&self) -> EigenBasis {
        EigenBasis::of(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.matrix)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn record(&self) -> OperatorRecord {
        OperatorRecord {
            spec: self.spec,
            dim: self.dim(),
            matrix: rows(&self.matrix),
            eigenvalues: self.eigenvalues(),
        }
    }
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Serialized form of an operator: truncation, row-major matrix, ascending
/// eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OperatorRecord {
    pub spec: Option<TruncationSpec>,
    pub dim: usize,
    pub matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl OperatorRecord {
    pub fn into_operator(self) -> Result<TruncatedOperator> {
        let n = self.matrix.len();
        if self.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n} matrix"),
                found: "ragged rows".into(),
            });
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| self.matrix[i][j]);
        match self.spec {
            Some(spec) => TruncatedOperator::with_spec(spec, matrix),
            None => TruncatedOperator::from_matrix(matrix),
        }
    }
}

/// The wave operator u_tt − u_xx on the truncation: diagonal with
/// λ_{j,k} = j² − (kp/q)² on both phases of (j, k).
pub fn wave_operator(spec: &TruncationSpec) -> Result<TruncatedOperator> {
    let modes = mode_table(spec)?;
    let diag: Vec<f64> = modes
        .iter()
        .map(|m| box_eigenvalue(spec, m.j, m.k))
        .collect();
    Ok(TruncatedOperator {
        spec: Some(*spec),
        matrix: DMatrix::from_diagonal(&DVector::from_vec(diag)),
    })
}

/// λ_{j,k} = j² − (kp/q)², computed over the common denominator q².
pub fn box_eigenvalue(spec: &TruncationSpec, j: usize, k: usize) -> f64 {
    let q = i128::from(spec.q);
    let p = i128::from(spec.p);
    let num = q * q * (j as i128).pow(2) - p * p * (k as i128).pow(2);
    num as f64 / (q * q) as f64
}

/// Distinct eigenvalue levels of the wave operator on a truncation, ascending.
pub fn box_levels(spec: &TruncationSpec) -> Vec<f64> {
    let mut levels: Vec<f64> = (1..=spec.j_max)
        .flat_map(|j| (0..=spec.k_max).map(move |k| (j, k)))
        .map(|(j, k)| box_eigenvalue(spec, j, k))
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    levels
}

/// Compression of multiplication by the grid function `g` (Nx × Nt).
pub fn multiplication_operator(g: &DMatrix<f64>, spec: &TruncationSpec) -> Result<TruncatedOperator> {
    let basis = FourierBasis::new(*spec)?;
    if g.shape() != (spec.nx, spec.nt) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} grid", spec.nx, spec.nt),
            found: format!("{}x{}", g.nrows(), g.ncols()),
        });
    }
    multiplication_operator_flat(&basis, &basis.flatten(g))
}

/// Same as [`multiplication_operator`] for flat grid values on a cached basis.
pub fn multiplication_operator_flat(
    basis: &FourierBasis,
    g: &DVector<f64>,
) -> Result<TruncatedOperator> {
    if g.len() != basis.spec().grid_len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} grid values", basis.spec().grid_len()),
            found: format!("{}", g.len()),
        });
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        let (x, t) = basis.node(i);
        return Err(Error::NonFinite {
            x,
            t,
            u: f64::NAN,
            value: g[i],
        });
    }
    let phi = basis.synthesis();
    let mut weighted = phi.clone();
    let w = basis.weight();
    for (mut row, gi) in weighted.row_iter_mut().zip(g.iter()) {
        row *= w * gi;
    }
    let matrix = phi.tr_mul(&weighted);
    Ok(TruncatedOperator {
        spec: Some(*basis.spec()),
        matrix: symmetrized(matrix),
    })
}

/// Orthogonal projections onto the spectral subspaces of (−∞,−l), (−l,l)
/// and (l,∞).
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub l: f64,
    pub minus: DMatrix<f64>,
    pub zero: DMatrix<f64>,
    pub plus: DMatrix<f64>,
    pub eig: EigenBasis,
    /// Eigenvalue index ranges of the three subspaces.
    pub minus_range: std::ops::Range<usize>,
    pub zero_range: std::ops::Range<usize>,
    pub plus_range: std::ops::Range<usize>,
}

impl SpectralSplit {
    pub fn ranks(&self) -> (usize, usize, usize) {
        (
            self.minus_range.len(),
            self.zero_range.len(),
            self.plus_range.len(),
        )
    }

    /// Orthonormal basis of the middle subspace, one eigenvector per column.
    pub fn zero_basis(&self) -> DMatrix<f64> {
        self.eig.columns(self.zero_range.clone())
    }

    pub fn zero_eigenvalues(&self) -> Vec<f64> {
        self.eig.values.as_slice()[self.zero_range.clone()].to_vec()
    }

    /// (A⁺)⁻¹P⁺ + (A⁻)⁻¹P⁻ as a full matrix, with the operator shifted by
    /// `shift` (eigenvalue λ becomes λ + shift).
    pub fn outer_resolvent(&self, shift: f64) -> DMatrix<f64> {
        let n = self.eig.values.len();
        let mut scaled = DMatrix::zeros(n, n);
        for i in self.minus_range.clone().chain(self.plus_range.clone()) {
            let inv = 1.0 / (self.eig.values[i] + shift);
            scaled.set_column(i, &(self.eig.vectors.column(i) * inv));
        }
        scaled * self.eig.vectors.transpose()
    }

    pub fn record(&self) -> SplitRecord {
        SplitRecord {
            l: self.l,
            eigenvalues: self.eig.values.iter().copied().collect(),
            rank_minus: self.minus_range.len(),
            rank_zero: self.zero_range.len(),
            rank_plus: self.plus_range.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitRecord {
    pub l: f64,
    pub eigenvalues: Vec<f64>,
    pub rank_minus: usize,
    pub rank_zero: usize,
    pub rank_plus: usize,
}

fn projector(eig: &EigenBasis, range: std::ops::Range<usize>) -> DMatrix<f64> {
    let v = eig.columns(range);
    &v * v.transpose()
}

/// Split `op` at the threshold `l`. Fails when ±l is within
/// [`THRESHOLD_WINDOW`] of an eigenvalue.
pub fn spectral_split(op: &TruncatedOperator, l: f64) -> Result<SpectralSplit> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "split threshold must be positive, got {l}"
        )));
    }
    let eig = op.eigen();
    if let Some(&bad) = eig
        .values
        .iter()
        .find(|v| (v.abs() - l).abs() <= THRESHOLD_WINDOW)
    {
        return Err(Error::ThresholdOnSpectrum {
            threshold: l,
            eigenvalue: bad,
            window: THRESHOLD_WINDOW,
        });
    }
    let n = eig.values.len();
    let lo = eig.values.iter().take_while(|&&v| v < -l).count();
    let hi = lo + eig.values.iter().skip(lo).take_while(|&&v| v < l).count();
    let minus_range = 0..lo;
    let zero_range = lo..hi;
    let plus_range = hi..n;
    Ok(SpectralSplit {
        l,
        minus: projector(&eig, minus_range.clone()),
        zero: projector(&eig, zero_range.clone()),
        plus: projector(&eig, plus_range.clone()),
        eig,
        minus_range,
        zero_range,
        plus_range,
    })
}

/// Eigenvalues inside an interval and the distance of the spectrum to its
/// endpoints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GapReport {
    pub interval: (f64, f64),
    pub eigenvalues_inside: Vec<f64>,
    pub min_distance_to_endpoints: f64,
}

pub fn gap_report(op: &TruncatedOperator, a: f64, b: f64) -> Result<GapReport> {
    if !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "gap interval needs a < b, got ({a}, {b})"
        )));
    }
    let values = op.eigenvalues();
    let eigenvalues_inside = values.iter().copied().filter(|&v| v > a && v < b).collect();
    let min_distance_to_endpoints = values
        .iter()
        .map(|&v| (v - a).abs().min((v - b).abs()))
        .fold(f64::INFINITY, f64::min);
    Ok(GapReport {
        interval: (a, b),
        eigenvalues_inside,
        min_distance_to_endpoints,
    })
}

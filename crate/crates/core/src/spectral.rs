//! Dense real spectral computations: eigenvalues, spectral abscissa and
//! radius, and Perron data for irreducible Metzler matrices.
//!
//! Full spectra come from a real Schur decomposition. Perron pairs are
//! computed by power iteration on a diagonally shifted (hence primitive)
//! copy of the matrix, with inverse iteration on the Schur eigenvalue as a
//! fallback when the power method stalls.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum gap between the Perron eigenvalue and the next real part.
pub const PERRON_SIMPLICITY_GAP: f64 = 1e-8;

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITER: usize = 20_000;

/// A finite, real, square matrix of dimension at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix(DMatrix<f64>);

impl SquareMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "square matrix",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::Precondition(
                "matrix dimension must be at least 1".into(),
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("matrix entries must be finite".into()));
        }
        Ok(Self(m))
    }

    /// Builds a matrix from row vectors; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: n,
                    got: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&v| v >= 0.0)
    }

    /// Off-diagonal entries nonnegative.
    pub fn is_metzler(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)] >= 0.0))
    }
}

/// Eigenvalues of a real matrix together with abscissa and radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    /// Largest real part.
    pub abscissa: f64,
    /// Largest modulus.
    pub radius: f64,
}

impl Spectrum {
    /// Sorts by decreasing real part (then imaginary part) and derives the
    /// abscissa and radius from the list.
    pub fn from_eigenvalues(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        let abscissa = eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Self {
            eigenvalues,
            abscissa,
            radius,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of eigenvalues with strictly negative real part.
    pub fn count_stable(&self) -> usize {
        self.eigenvalues.iter().filter(|z| z.re < 0.0).count()
    }

    /// Number of eigenvalues with strictly positive real part.
    pub fn count_unstable(&self) -> usize {
        self.eigenvalues.iter().filter(|z| z.re > 0.0).count()
    }

    /// Distance of the spectrum from the imaginary axis.
    pub fn hyperbolic_margin(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// All eigenvalues via real Schur decomposition, capped at `100 * n` QR sweeps.
pub fn eigenvalues(m: &SquareMatrix) -> Result<Spectrum> {
    let n = m.dim();
    let max_iter = 100 * n.max(1);
    let schur = nalgebra::linalg::Schur::try_new(m.as_matrix().clone(), f64::EPSILON, max_iter)
        .ok_or_else(|| Error::EigenNonConvergence {
            matrix: m.as_matrix().clone(),
            max_iter,
        })?;
    let eigs = schur.complex_eigenvalues();
    Ok(Spectrum::from_eigenvalues(eigs.iter().copied().collect()))
}

/// Strong connectivity of the graph with an edge `j -> i` whenever
/// `m[i][j] > 0` (`i != j`), checked by forward and backward reachability
/// from node 0. A 1x1 matrix counts as irreducible.
pub fn irreducible(m: &SquareMatrix) -> bool {
    let n = m.dim();
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for (v, seen_v) in seen.iter_mut().enumerate() {
                if v == u || *seen_v {
                    continue;
                }
                // forward: edge u -> v exists iff m[v][u] > 0
                let w = if forward { m.get(v, u) } else { m.get(u, v) };
                if w > 0.0 {
                    *seen_v = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    };
    reach(true) == n && reach(false) == n
}

/// Perron eigenvalue and unit-sum positive eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub value: f64,
    pub right: DVector<f64>,
    pub left: DVector<f64>,
}

/// Perron data of an irreducible Metzler matrix.
pub fn perron_vectors(m: &SquareMatrix) -> Result<PerronPair> {
    if !m.is_metzler() {
        return Err(Error::Precondition(
            "Perron vectors require a Metzler matrix".into(),
        ));
    }
    if !irreducible(m) {
        return Err(Error::Precondition(
            "Perron vectors require an irreducible matrix".into(),
        ));
    }

    let spectrum = eigenvalues(m)?;
    if spectrum.len() > 1 {
        let gap = spectrum.eigenvalues[0].re - spectrum.eigenvalues[1].re;
        if gap < PERRON_SIMPLICITY_GAP {
            return Err(Error::PerronDegenerate { gap });
        }
    }

    let a = m.as_matrix();
    let right = dominant_vector(a, spectrum.abscissa)?;
    let left = dominant_vector(&a.transpose(), spectrum.abscissa)?;

    // Two-sided Rayleigh quotient.
    let value = left.dot(&(a * &right)) / left.dot(&right);

    if right.iter().chain(left.iter()).any(|&v| v <= 0.0) {
        return Err(Error::Inconsistent(
            "Perron eigenvector has a non-positive entry".into(),
        ));
    }
    Ok(PerronPair { value, right, left })
}

/// Spectral radius of an irreducible nonnegative matrix.
pub fn spectral_radius_nonneg(m: &SquareMatrix) -> Result<f64> {
    if !m.is_nonnegative() {
        return Err(Error::Precondition(
            "spectral_radius_nonneg requires a nonnegative matrix".into(),
        ));
    }
    if !irreducible(m) {
        return Err(Error::Precondition(
            "spectral_radius_nonneg requires an irreducible matrix".into(),
        ));
    }
    Ok(perron_vectors(m)?.value)
}

/// Unit-sum dominant eigenvector of a Metzler matrix. Power iteration on
/// `a + c I` (primitive for irreducible `a`), falling back to inverse
/// iteration seeded with `abscissa`.
fn dominant_vector(a: &DMatrix<f64>, abscissa: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let min_diag = (0..n).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min);
    let shift = (-min_diag).max(0.0) + 1.0;
    let shifted = a + DMatrix::identity(n, n) * shift;

    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_MAX_ITER {
        let mut w = &shifted * &v;
        let s = w.sum();
        if s.is_nan() || s <= 0.0 {
            break;
        }
        w /= s;
        let delta = (&w - &v).amax();
        v = w;
        if delta <= POWER_TOL {
            return Ok(v);
        }
    }

    inverse_iteration(a, abscissa)
}

fn inverse_iteration(a: &DMatrix<f64>, eigenvalue: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mu = eigenvalue + 1e-10 * eigenvalue.abs().max(1.0);
    let lu = (a - DMatrix::identity(n, n) * mu).lu();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..20 {
        let mut w = lu
            .solve(&v)
            .ok_or_else(|| Error::Inconsistent("inverse iteration hit a singular shift".into()))?;
        let s = w.sum();
        if s == 0.0 || !s.is_finite() {
            break;
        }
        w /= s;
        let delta = (&w - &v).amax();
        v = w;
        if delta <= POWER_TOL {
            break;
        }
    }
    Ok(v)
}

/// Sign of the determinant from an LU factorisation with partial pivoting.
/// Returns 0 for an exactly singular matrix.
pub fn determinant_sign(m: &DMatrix<f64>) -> i8 {
    let det = m.clone().lu().determinant();
    if det > 0.0 {
        1
    } else if det < 0.0 {
        -1
    } else {
        0
    }
}

//! The bivirus SIS model: parameters, states in the region of interest,
//! the vector field and its analytic Jacobian.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectral::{self, SquareMatrix};

/// Tolerance for membership in the region of interest.
pub const REGION_TOL: f64 = 1e-9;

/// Healing rates (diagonal of `D`) and infection matrix `B` for one virus.
#[derive(Debug, Clone, PartialEq)]
pub struct VirusParams {
    healing: DVector<f64>,
    infection: SquareMatrix,
}

impl VirusParams {
    /// Checks dimensions and finiteness only; positivity and irreducibility
    /// are reported by [`validate`].
    pub fn new(healing: Vec<f64>, infection: SquareMatrix) -> Result<Self> {
        if healing.len() != infection.dim() {
            return Err(Error::DimensionMismatch {
                context: "healing rates vs infection matrix",
                expected: infection.dim(),
                got: healing.len(),
            });
        }
        if healing.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidModel("healing rates must be finite".into()));
        }
        Ok(Self {
            healing: DVector::from_vec(healing),
            infection,
        })
    }

    pub fn dim(&self) -> usize {
        self.healing.len()
    }

    pub fn healing(&self) -> &DVector<f64> {
        &self.healing
    }

    pub fn infection(&self) -> &SquareMatrix {
        &self.infection
    }

    pub fn healing_positive(&self) -> bool {
        self.healing.iter().all(|&d| d > 0.0)
    }

    /// `D^{-1} B`. Requires positive healing rates.
    pub fn next_generation(&self) -> Result<SquareMatrix> {
        if !self.healing_positive() {
            return Err(Error::Precondition("healing rates must be positive".into()));
        }
        let b = self.infection.as_matrix();
        SquareMatrix::new(DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            b[(i, j)] / self.healing[i]
        }))
    }

    /// `-D + B`.
    pub fn linearization_at_zero(&self) -> DMatrix<f64> {
        let mut m = self.infection.as_matrix().clone();
        for i in 0..self.dim() {
            m[(i, i)] -= self.healing[i];
        }
        m
    }

    /// Same healing rates with infection matrix `(I - diag(w)) B`.
    pub fn restricted(&self, w: &DVector<f64>) -> Result<Self> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "restriction vector",
                expected: self.dim(),
                got: w.len(),
            });
        }
        let b = self.infection.as_matrix();
        let eff = DMatrix::from_fn(self.dim(), self.dim(), |i, j| (1.0 - w[i]) * b[(i, j)]);
        Ok(Self {
            healing: self.healing.clone(),
            infection: SquareMatrix::new(eff)?,
        })
    }

    /// Reproduction number `rho(D^{-1} B)`.
    pub fn reproduction_number(&self) -> Result<f64> {
        let ng = self.next_generation()?;
        if ng.is_nonnegative() && spectral::irreducible(&ng) {
            spectral::spectral_radius_nonneg(&ng)
        } else {
            Ok(spectral::eigenvalues(&ng)?.radius)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Virus {
    One,
    Two,
}

impl fmt::Display for Virus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Virus::One => write!(f, "virus 1"),
            Virus::Two => write!(f, "virus 2"),
        }
    }
}

/// Parameter tuple `(n, D1, D2, B1, B2)`. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BivirusModel {
    virus1: VirusParams,
    virus2: VirusParams,
}

impl BivirusModel {
    pub fn new(virus1: VirusParams, virus2: VirusParams) -> Result<Self> {
        if virus1.dim() != virus2.dim() {
            return Err(Error::DimensionMismatch {
                context: "virus dimensions",
                expected: virus1.dim(),
                got: virus2.dim(),
            });
        }
        Ok(Self { virus1, virus2 })
    }

    /// Convenience constructor from raw rows.
    pub fn from_parts(
        d1: Vec<f64>,
        b1: &[Vec<f64>],
        d2: Vec<f64>,
        b2: &[Vec<f64>],
    ) -> Result<Self> {
        Self::new(
            VirusParams::new(d1, SquareMatrix::from_rows(b1)?)?,
            VirusParams::new(d2, SquareMatrix::from_rows(b2)?)?,
        )
    }

    pub fn n(&self) -> usize {
        self.virus1.dim()
    }

    pub fn virus(&self, v: Virus) -> &VirusParams {
        match v {
            Virus::One => &self.virus1,
            Virus::Two => &self.virus2,
        }
    }

    pub fn virus1(&self) -> &VirusParams {
        &self.virus1
    }

    pub fn virus2(&self) -> &VirusParams {
        &self.virus2
    }

    /// Sub-model on the given node subset (no coupling to the rest).
    pub fn restrict_to(&self, nodes: &[usize]) -> Result<Self> {
        let pick = |p: &VirusParams| -> Result<VirusParams> {
            let b = p.infection.as_matrix();
            let m = nodes.len();
            VirusParams::new(
                nodes.iter().map(|&i| p.healing[i]).collect(),
                SquareMatrix::new(DMatrix::from_fn(m, m, |i, j| b[(nodes[i], nodes[j])]))?,
            )
        };
        Self::new(pick(&self.virus1)?, pick(&self.virus2)?)
    }

    /// Copy with every infection entry `(i, j)` multiplied by `scale(i, j)`.
    pub fn scale_infection(&self, scale: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let apply = |p: &VirusParams| -> Result<VirusParams> {
            let b = p.infection.as_matrix();
            VirusParams::new(
                p.healing.iter().copied().collect(),
                SquareMatrix::new(DMatrix::from_fn(p.dim(), p.dim(), |i, j| {
                    b[(i, j)] * scale(i, j)
                }))?,
            )
        };
        Self::new(apply(&self.virus1)?, apply(&self.virus2)?)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            n: self.n(),
            d1: self.virus1.healing.iter().copied().collect(),
            d2: self.virus2.healing.iter().copied().collect(),
            b1: self.virus1.infection.to_rows(),
            b2: self.virus2.infection.to_rows(),
        }
    }

    /// SHA-256 of the canonical JSON encoding; equal models hash equal.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_string(&self.to_file()).expect("model serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk model schema: `{"n", "D1", "D2", "B1", "B2"}`. Row `i`, column
/// `j` of `Bk` is the rate of transmission from node `j` to node `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    #[serde(rename = "D1")]
    pub d1: Vec<f64>,
    #[serde(rename = "D2")]
    pub d2: Vec<f64>,
    #[serde(rename = "B1")]
    pub b1: Vec<Vec<f64>>,
    #[serde(rename = "B2")]
    pub b2: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<BivirusModel> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidModel("field \"n\" must be at least 1".into()));
        }
        for (name, d) in [("D1", &self.d1), ("D2", &self.d2)] {
            if d.len() != n {
                return Err(Error::InvalidModel(format!(
                    "field \"{name}\" has {} entries, expected {n}",
                    d.len()
                )));
            }
        }
        for (name, b) in [("B1", &self.b1), ("B2", &self.b2)] {
            if b.len() != n {
                return Err(Error::InvalidModel(format!(
                    "field \"{name}\" has {} rows, expected {n}",
                    b.len()
                )));
            }
            for (i, row) in b.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "field \"{name}\" row {i} has {} entries, expected {n}",
                        row.len()
                    )));
                }
            }
        }
        BivirusModel::from_parts(self.d1, &self.b1, self.d2, &self.b2)
    }
}

/// A point `(x1, x2)`; membership in the region of interest is not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRepr", try_from = "StateRepr")]
pub struct State {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRepr {
    x1: Vec<f64>,
    x2: Vec<f64>,
}

impl From<State> for StateRepr {
    fn from(s: State) -> Self {
        Self {
            x1: s.x1.iter().copied().collect(),
            x2: s.x2.iter().copied().collect(),
        }
    }
}

impl TryFrom<StateRepr> for State {
    type Error = Error;

    fn try_from(r: StateRepr) -> Result<Self> {
        State::from_slices(&r.x1, &r.x2)
    }
}

impl State {
    pub fn new(x1: DVector<f64>, x2: DVector<f64>) -> Result<Self> {
        if x1.len() != x2.len() {
            return Err(Error::DimensionMismatch {
                context: "state halves",
                expected: x1.len(),
                got: x2.len(),
            });
        }
        Ok(Self { x1, x2 })
    }

    pub fn from_slices(x1: &[f64], x2: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(x1),
            DVector::from_column_slice(x2),
        )
    }

    pub fn healthy(n: usize) -> Self {
        Self {
            x1: DVector::zeros(n),
            x2: DVector::zeros(n),
        }
    }

    /// Splits a stacked `2n` vector `(x1, x2)`.
    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        Self {
            x1: v.rows(0, n).into_owned(),
            x2: v.rows(n, n).into_owned(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(
            2 * n,
            |k, _| if k < n { self.x1[k] } else { self.x2[k - n] },
        )
    }

    pub fn n(&self) -> usize {
        self.x1.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x1.iter().chain(self.x2.iter()).all(|v| v.is_finite())
    }

    /// Largest amount by which any constraint of the region is violated
    /// (0 inside the region).
    pub fn region_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n() {
            worst = worst
                .max(-self.x1[i])
                .max(-self.x2[i])
                .max(self.x1[i] + self.x2[i] - 1.0);
        }
        worst
    }

    pub fn in_region(&self, tol: f64) -> bool {
        self.region_violation() <= tol
    }

    /// All coordinates strictly positive and every node total strictly below one.
    pub fn strictly_interior(&self, margin: f64) -> bool {
        (0..self.n()).all(|i| {
            self.x1[i] > margin && self.x2[i] > margin && self.x1[i] + self.x2[i] < 1.0 - margin
        })
    }

    pub fn distance_inf(&self, other: &State) -> f64 {
        (&self.x1 - &other.x1)
            .amax()
            .max((&self.x2 - &other.x2).amax())
    }
}

fn check_dim(model: &BivirusModel, s: &State) -> Result<()> {
    if s.n() != model.n() || s.x2.len() != model.n() {
        return Err(Error::DimensionMismatch {
            context: "state vs model",
            expected: model.n(),
            got: s.n(),
        });
    }
    Ok(())
}

/// Outcome of the standing-assumption checks, one entry per virus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub healing_positive: [bool; 2],
    pub infection_nonnegative: [bool; 2],
    pub infection_irreducible: [bool; 2],
    /// `rho(D^{-1} B)`; absent when healing rates are not positive.
    pub reproduction: [Option<f64>; 2],
}

impl ValidationReport {
    /// Positive healing, nonnegative and irreducible infection for both viruses.
    pub fn assumption1_holds(&self) -> bool {
        (0..2).all(|k| {
            self.healing_positive[k]
                && self.infection_nonnegative[k]
                && self.infection_irreducible[k]
        })
    }

    /// Both reproduction numbers exceed one.
    pub fn assumption2_holds(&self) -> bool {
        self.reproduction
            .iter()
            .all(|r| matches!(r, Some(r) if *r > 1.0))
    }

    pub fn all_pass(&self) -> bool {
        self.assumption1_holds() && self.assumption2_holds()
    }

    /// Human-readable list of failed checks.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, v) in [Virus::One, Virus::Two].into_iter().enumerate() {
            let other = if v == Virus::One {
                Virus::Two
            } else {
                Virus::One
            };
            if !self.healing_positive[k] {
                out.push(format!("{v}: healing rates must all be strictly positive"));
            }
            if !self.infection_nonnegative[k] {
                out.push(format!("{v}: infection matrix has a negative entry"));
            }
            if !self.infection_irreducible[k] {
                out.push(format!(
                    "{v}: infection matrix is reducible (graph not strongly connected)"
                ));
            }
            match self.reproduction[k] {
                Some(r) if r <= 1.0 => out.push(format!(
                    "{v}: reproduction number {r:.6} <= 1; {v} dies out regardless of {other} and the \
                     system reduces to the single-virus model for {other}"
                )),
                None => out.push(format!("{v}: reproduction number undefined")),
                _ => {}
            }
        }
        out
    }
}

/// Checks positivity of `D`, nonnegativity and irreducibility of `B`, and
/// the reproduction numbers, collecting every failure.
pub fn validate(model: &BivirusModel) -> ValidationReport {
    let mut report = ValidationReport {
        healing_positive: [false; 2],
        infection_nonnegative: [false; 2],
        infection_irreducible: [false; 2],
        reproduction: [None; 2],
    };
    for (k, v) in [Virus::One, Virus::Two].into_iter().enumerate() {
        let p = model.virus(v);
        report.healing_positive[k] = p.healing_positive();
        report.infection_nonnegative[k] = p.infection.is_nonnegative();
        report.infection_irreducible[k] = spectral::irreducible(&p.infection);
        report.reproduction[k] = p.reproduction_number().ok();
    }
    report
}

/// `(R1, R2)`.
pub fn reproduction_numbers(model: &BivirusModel) -> Result<(f64, f64)> {
    Ok((
        model.virus1.reproduction_number()?,
        model.virus2.reproduction_number()?,
    ))
}

/// Writes the stacked field into `out` (length `2n`) without dimension checks.
pub(crate) fn field_into(model: &BivirusModel, x1: &[f64], x2: &[f64], out: &mut [f64]) {
    let n = model.n();
    let b1 = model.virus1.infection.as_matrix();
    let b2 = model.virus2.infection.as_matrix();
    let d1 = &model.virus1.healing;
    let d2 = &model.virus2.healing;
    for i in 0..n {
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        for j in 0..n {
            p1 += b1[(i, j)] * x1[j];
            p2 += b2[(i, j)] * x2[j];
        }
        let s = 1.0 - x1[i] - x2[i];
        out[i] = -d1[i] * x1[i] + s * p1;
        out[n + i] = -d2[i] * x2[i] + s * p2;
    }
}

/// `([-D1 + (I - X1 - X2) B1] x1, [-D2 + (I - X1 - X2) B2] x2)` stacked.
pub fn vector_field(model: &BivirusModel, s: &State) -> Result<DVector<f64>> {
    check_dim(model, s)?;
    let mut out = DVector::zeros(2 * model.n());
    field_into(model, s.x1.as_slice(), s.x2.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub(crate) fn jacobian_matrix(model: &BivirusModel, s: &State) -> DMatrix<f64> {
    let n = model.n();
    let b1 = model.virus1.infection.as_matrix();
    let b2 = model.virus2.infection.as_matrix();
    let p1 = b1 * &s.x1;
    let p2 = b2 * &s.x2;
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let si = 1.0 - s.x1[i] - s.x2[i];
        for k in 0..n {
            j[(i, k)] = si * b1[(i, k)];
            j[(n + i, n + k)] = si * b2[(i, k)];
        }
        j[(i, i)] -= model.virus1.healing[i] + p1[i];
        j[(i, n + i)] = -p1[i];
        j[(n + i, i)] = -p2[i];
        j[(n + i, n + i)] -= model.virus2.healing[i] + p2[i];
    }
    j
}

/// Analytic `2n x 2n` Jacobian of [`vector_field`].
pub fn jacobian(model: &BivirusModel, s: &State) -> Result<SquareMatrix> {
    check_dim(model, s)?;
    if !s.is_finite() {
        return Err(Error::Precondition("state must be finite".into()));
    }
    SquareMatrix::new(jacobian_matrix(model, s))
}

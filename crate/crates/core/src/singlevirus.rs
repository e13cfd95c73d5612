//! Single-virus SIS equilibria: regime decision and the endemic point.
//!
//! The endemic equilibrium is reached by the monotone map
//! `x -> Bx / (delta + Bx)` iterated down from the all-ones vector, then
//! polished with Newton's method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VirusParams;

pub const FIXED_POINT_TOL: f64 = 1e-8;
pub const FIXED_POINT_MAX_ITER: usize = 10_000;
pub const ENDEMIC_RESIDUAL_TOL: f64 = 1e-12;
/// `|R - 1|` at or below this counts as the healthy regime.
pub const THRESHOLD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    HealthyGlobal,
    Endemic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleVirusResult {
    pub regime: Regime,
    pub endemic: Option<DVector<f64>>,
    pub reproduction: f64,
    /// Fixed-point iterations plus Newton iterations.
    pub iterations: usize,
}

/// One step of the monotone map: node `i` takes the equilibrium value
/// for its incoming pressure `(Bx)_i`.
pub fn fixed_point_step(params: &VirusParams, x: &DVector<f64>) -> DVector<f64> {
    let pressure = params.infection().as_matrix() * x;
    DVector::from_fn(x.len(), |i, _| {
        let p = pressure[i];
        if p == 0.0 {
            0.0
        } else {
            p / (params.healing()[i] + p)
        }
    })
}

/// `-D x + (I - X) B x`.
pub fn single_field(params: &VirusParams, x: &DVector<f64>) -> DVector<f64> {
    let pressure = params.infection().as_matrix() * x;
    DVector::from_fn(x.len(), |i, _| {
        -params.healing()[i] * x[i] + (1.0 - x[i]) * pressure[i]
    })
}

/// `-D + (I - X) B - diag(Bx)`.
pub fn single_jacobian(params: &VirusParams, x: &DVector<f64>) -> DMatrix<f64> {
    let b = params.infection().as_matrix();
    let pressure = b * x;
    let n = x.len();
    let mut j = DMatrix::from_fn(n, n, |i, k| (1.0 - x[i]) * b[(i, k)]);
    for i in 0..n {
        j[(i, i)] -= params.healing()[i] + pressure[i];
    }
    j
}

/// Newton's method on the single-virus field from `x0`, with backtracking
/// on the residual norm. Returns the limit and the iteration count, or
/// `None` if it stalls or the Jacobian is singular.
pub fn newton_polish(
    params: &VirusParams,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Option<(DVector<f64>, usize)> {
    let mut x = x0.clone();
    let mut f = single_field(params, &x);
    for it in 0..max_iter {
        if f.amax() <= tol {
            return Some((x, it));
        }
        let step = single_jacobian(params, &x).lu().solve(&(-&f))?;
        let f2 = f.norm_squared();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &x + &step * lambda;
            let ft = single_field(params, &trial);
            if ft.norm_squared() < f2 {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return (f.amax() <= tol).then_some((x, it));
        }
    }
    (f.amax() <= tol).then_some((x, max_iter))
}

/// Regime and endemic equilibrium for `params`, optionally with infection
/// damped to `(I - diag(w)) B`.
pub fn solve_endemic(
    params: &VirusParams,
    restriction: Option<&DVector<f64>>,
) -> Result<SingleVirusResult> {
    let effective;
    let params = match restriction {
        Some(w) => {
            if w.iter().any(|&v| !(0.0..1.0).contains(&v)) {
                return Err(Error::Precondition(
                    "restriction entries must lie in [0, 1)".into(),
                ));
            }
            effective = params.restricted(w)?;
            &effective
        }
        None => params,
    };
    if !params.healing_positive() {
        return Err(Error::Precondition("healing rates must be positive".into()));
    }
    if !params.infection().is_nonnegative() {
        return Err(Error::Precondition(
            "infection matrix must be nonnegative".into(),
        ));
    }

    let reproduction = params.reproduction_number()?;
    if reproduction <= 1.0 + THRESHOLD_TOL {
        return Ok(SingleVirusResult {
            regime: Regime::HealthyGlobal,
            endemic: None,
            reproduction,
            iterations: 0,
        });
    }

    let n = params.dim();
    let mut x = DVector::from_element(n, 1.0);
    let mut iterations = 0;
    loop {
        if iterations >= FIXED_POINT_MAX_ITER {
            return Err(Error::SingleVirusNonConvergence {
                iterations,
                last: x.iter().copied().collect(),
            });
        }
        let next = fixed_point_step(params, &x);
        iterations += 1;
        let delta = (&next - &x).amax();
        x = next;
        if delta <= FIXED_POINT_TOL {
            break;
        }
    }

    let (x, newton_iters) =
        newton_polish(params, &x, ENDEMIC_RESIDUAL_TOL, 50).ok_or_else(|| {
            Error::SingleVirusNonConvergence {
                iterations,
                last: x.iter().copied().collect(),
            }
        })?;
    if x.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Inconsistent(
            "endemic equilibrium left the open unit box".into(),
        ));
    }

    Ok(SingleVirusResult {
        regime: Regime::Endemic,
        endemic: Some(x),
        reproduction,
        iterations: iterations + newton_iters,
    })
}

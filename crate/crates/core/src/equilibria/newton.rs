use nalgebra::DVector;
use rayon::prelude::*;

use super::{classify, merge_into, Equilibrium, Provenance, SearchStats, ROOT_TOL};
use crate::error::{Error, Result};
use crate::model::{self, BivirusModel, State, REGION_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Backtracking halvings on `||f||^2` per iteration.
    pub max_halvings: usize,
    /// Iterates are clamped to `[-box_margin, 1 + box_margin]` per coordinate.
    pub box_margin: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: ROOT_TOL,
            max_halvings: 30,
            box_margin: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SeedOutcome {
    Root(State),
    Outside,
    Failed,
}

pub(crate) fn stacked_field(model: &BivirusModel, x: &DVector<f64>) -> DVector<f64> {
    let n = model.n();
    let mut out = DVector::zeros(2 * n);
    let (x1, x2) = x.as_slice().split_at(n);
    model::field_into(model, x1, x2, out.as_mut_slice());
    out
}

/// Damped Newton from `x0`; `None` on a singular Jacobian, a failed line
/// search, or the iteration cap.
pub(crate) fn damped_newton(
    model: &BivirusModel,
    x0: &DVector<f64>,
    opts: &NewtonOptions,
) -> Option<DVector<f64>> {
    let (lo, hi) = (-opts.box_margin, 1.0 + opts.box_margin);
    let mut x = x0.map(|v| v.clamp(lo, hi));
    let mut f = stacked_field(model, &x);
    for _ in 0..opts.max_iter {
        if f.amax() <= opts.tol {
            return Some(x);
        }
        let jac = model::jacobian_matrix(model, &State::from_stacked(&x));
        let step = jac.lu().solve(&(-&f))?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        let f2 = f.norm_squared();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = (&x + &step * lambda).map(|v| v.clamp(lo, hi));
            let ft = stacked_field(model, &trial);
            if ft.norm_squared() < f2 {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (f.amax() <= opts.tol).then_some(x)
}

pub(crate) fn solve_seed(model: &BivirusModel, seed: &State, opts: &NewtonOptions) -> SeedOutcome {
    match damped_newton(model, &seed.stacked(), opts) {
        None => SeedOutcome::Failed,
        Some(x) => {
            let s = State::from_stacked(&x);
            if s.in_region(REGION_TOL) {
                SeedOutcome::Root(s)
            } else {
                SeedOutcome::Outside
            }
        }
    }
}

/// Runs every seed in parallel; the output keeps seed order.
pub(crate) fn solve_seeds(
    model: &BivirusModel,
    seeds: &[State],
    opts: &NewtonOptions,
) -> Vec<SeedOutcome> {
    seeds
        .par_iter()
        .map(|s| solve_seed(model, s, opts))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSearchOutcome {
    pub equilibria: Vec<Equilibrium>,
    pub stats: SearchStats,
}

/// Damped Newton from each seed; accepted roots are in the region,
/// deduplicated, and classified. Per-seed failures are only counted, but a
/// degenerate root aborts the search.
pub fn newton_search(
    model: &BivirusModel,
    seeds: &[State],
    opts: &NewtonOptions,
) -> Result<NewtonSearchOutcome> {
    let mut stats = SearchStats::default();
    let mut diagnostics = Vec::new();
    let mut equilibria = Vec::new();
    for outcome in solve_seeds(model, seeds, opts) {
        stats.seeds_tried += 1;
        match outcome {
            SeedOutcome::Failed => stats.newton_failures += 1,
            SeedOutcome::Outside => stats.outside_region += 1,
            SeedOutcome::Root(s) => match classify(model, &s, Provenance::NewtonSeed) {
                Ok(e) => {
                    merge_into(&mut equilibria, e, &mut stats, &mut diagnostics);
                }
                Err(Error::OffTaxonomy { .. }) => stats.off_taxonomy += 1,
                Err(e) => return Err(e),
            },
        }
    }
    Ok(NewtonSearchOutcome { equilibria, stats })
}

/// Deduplicated in-region roots without classification.
pub(crate) fn find_roots(
    model: &BivirusModel,
    seeds: &[State],
    opts: &NewtonOptions,
) -> Vec<State> {
    let mut roots: Vec<State> = Vec::new();
    for outcome in solve_seeds(model, seeds, opts) {
        if let SeedOutcome::Root(s) = outcome {
            if !roots.iter().any(|r| r.distance_inf(&s) <= super::DEDUP_TOL) {
                roots.push(s);
            }
        }
    }
    roots
}

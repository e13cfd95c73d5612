//! Enumeration and spectral classification of equilibria in the region of
//! interest.
//!
//! The healthy state and both boundary equilibria are known in closed form
//! (via the single-virus solver). Coexistence equilibria are found by a
//! union of damped Newton runs from structured and random seeds and, when
//! the network splits into weakly coupled blocks, by continuation from the
//! decoupled system.

mod homotopy;
mod newton;

pub use homotopy::{detect_blocks, homotopy_enumerate, HomotopyOutcome};
pub use newton::{newton_search, NewtonOptions, NewtonSearchOutcome};

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counting;
use crate::error::{Error, Result};
use crate::model::{self, BivirusModel, State, Virus};
use crate::singlevirus::{self, Regime};
use crate::spectral::{self, Spectrum, SquareMatrix};

/// Residual accepted for a polished root.
pub const ROOT_TOL: f64 = 1e-12;
/// Residual required before classification.
pub const CLASSIFY_RESIDUAL_TOL: f64 = 1e-10;
/// Two roots closer than this in the infinity norm are the same equilibrium.
pub const DEDUP_TOL: f64 = 1e-6;
/// Spectra closer than this to the imaginary axis are degenerate.
pub const HYPERBOLIC_TOL: f64 = 1e-8;
/// Coordinates at or below this are treated as zero when assigning a class.
pub const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquilibriumClass {
    Healthy,
    BoundaryVirus1,
    BoundaryVirus2,
    Coexistence,
}

impl fmt::Display for EquilibriumClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Healthy => "healthy",
            Self::BoundaryVirus1 => "boundary-1",
            Self::BoundaryVirus2 => "boundary-2",
            Self::Coexistence => "coexistence",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Analytic,
    NewtonSeed,
    Homotopy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: State,
    pub class: EquilibriumClass,
    /// Spectrum of the `2n x 2n` Jacobian.
    pub spectrum: Spectrum,
    /// Eigenvalues with strictly negative real part.
    pub n_k: usize,
    /// `(-1)^{n_k}`.
    pub index: i8,
    pub hyperbolic_margin: f64,
    pub residual: f64,
    pub provenance: Provenance,
}

impl Equilibrium {
    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    pub fn is_stable(&self) -> bool {
        self.n_k == self.dim()
    }

    pub fn unstable_count(&self) -> usize {
        self.dim() - self.n_k
    }

    pub fn is_boundary(&self) -> bool {
        matches!(
            self.class,
            EquilibriumClass::BoundaryVirus1 | EquilibriumClass::BoundaryVirus2
        )
    }
}

/// Classifies a root of the vector field: class by taxonomy, Jacobian
/// spectrum, stable count, index, and an LU determinant cross-check.
///
/// The healthy state is snapped to exact zero and the extinct half of a
/// boundary state to exact zeros before the spectrum is computed.
pub fn classify(model: &BivirusModel, s: &State, provenance: Provenance) -> Result<Equilibrium> {
    let f = model::vector_field(model, s)?;
    if f.amax() > CLASSIFY_RESIDUAL_TOL {
        return Err(Error::Precondition(format!(
            "classify requires a root; residual is {:e}",
            f.amax()
        )));
    }

    let n = model.n();
    let x1_zero = s.x1.iter().all(|v| v.abs() <= ZERO_TOL);
    let x2_zero = s.x2.iter().all(|v| v.abs() <= ZERO_TOL);
    let (class, state) = if x1_zero && x2_zero {
        (EquilibriumClass::Healthy, State::healthy(n))
    } else if x2_zero {
        (
            EquilibriumClass::BoundaryVirus1,
            State::new(s.x1.clone(), DVector::zeros(n))?,
        )
    } else if x1_zero {
        (
            EquilibriumClass::BoundaryVirus2,
            State::new(DVector::zeros(n), s.x2.clone())?,
        )
    } else if s.strictly_interior(ZERO_TOL) {
        (EquilibriumClass::Coexistence, s.clone())
    } else {
        return Err(Error::OffTaxonomy {
            state: Box::new(s.clone()),
        });
    };

    let residual = model::vector_field(model, &state)?.amax();
    let jac = model::jacobian(model, &state)?;
    let spectrum = spectral::eigenvalues(&jac)?;
    let margin = spectrum.hyperbolic_margin();
    if margin < HYPERBOLIC_TOL {
        return Err(Error::DegenerateEquilibrium {
            state: Box::new(state),
            eigenvalues: spectrum.eigenvalues,
            margin,
        });
    }
    let n_k = spectrum.count_stable();
    let index: i8 = if n_k % 2 == 0 { 1 } else { -1 };
    let det_sign = spectral::determinant_sign(jac.as_matrix());
    if det_sign != index {
        return Err(Error::Inconsistent(format!(
            "index {index} from {n_k} stable eigenvalues disagrees with det sign {det_sign}"
        )));
    }

    Ok(Equilibrium {
        state,
        class,
        spectrum,
        n_k,
        index,
        hyperbolic_margin: margin,
        residual,
        provenance,
    })
}

/// `(xbar1, 0)` and `(0, xbar2)`, classified through the full Jacobian and
/// cross-checked against the block-triangular stability shortcut.
pub fn boundary_equilibria(model: &BivirusModel) -> Result<(Equilibrium, Equilibrium)> {
    let n = model.n();
    let mut out = Vec::with_capacity(2);
    for v in [Virus::One, Virus::Two] {
        let sol = singlevirus::solve_endemic(model.virus(v), None)?;
        let xbar = match (sol.regime, sol.endemic) {
            (Regime::Endemic, Some(x)) => x,
            _ => {
                return Err(Error::Precondition(format!(
                    "{v} has reproduction number {:.6} <= 1, no boundary equilibrium",
                    sol.reproduction
                )))
            }
        };
        let state = match v {
            Virus::One => State::new(xbar, DVector::zeros(n))?,
            Virus::Two => State::new(DVector::zeros(n), xbar)?,
        };
        let eq = classify(model, &state, Provenance::Analytic)?;
        check_boundary_shortcut(model, v, &eq)?;
        out.push(eq);
    }
    let e2 = out.pop().expect("two entries");
    let e1 = out.pop().expect("two entries");
    Ok((e1, e2))
}

/// Stability of a boundary point from the invading virus' block alone:
/// `sigma(-D2 + (I - Xbar1) B2)` for `(xbar1, 0)` and its mirror.
pub fn boundary_invasion_abscissa(
    model: &BivirusModel,
    resident: Virus,
    xbar: &DVector<f64>,
) -> Result<f64> {
    let invader = match resident {
        Virus::One => model.virus2(),
        Virus::Two => model.virus1(),
    };
    let w = xbar.clone();
    let block = invader.restricted(&w)?.linearization_at_zero();
    Ok(spectral::eigenvalues(&SquareMatrix::new(block)?)?.abscissa)
}

fn check_boundary_shortcut(model: &BivirusModel, resident: Virus, eq: &Equilibrium) -> Result<()> {
    let (xbar, params) = match resident {
        Virus::One => (&eq.state.x1, model.virus1()),
        Virus::Two => (&eq.state.x2, model.virus2()),
    };
    let resident_block = singlevirus::single_jacobian(params, xbar);
    let resident_sigma = spectral::eigenvalues(&SquareMatrix::new(resident_block)?)?.abscissa;
    if resident_sigma >= 0.0 {
        return Err(Error::Inconsistent(format!(
            "resident block of the {resident} boundary equilibrium is not stable (abscissa {resident_sigma:e})"
        )));
    }
    let invasion = boundary_invasion_abscissa(model, resident, xbar)?;
    if (invasion < 0.0) != eq.is_stable() {
        return Err(Error::Inconsistent(format!(
            "block shortcut (abscissa {invasion:e}) disagrees with full spectrum ({} stable of {})",
            eq.n_k,
            eq.dim()
        )));
    }
    Ok(())
}

/// Search settings for [`enumerate_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBudget {
    /// Levels per virus in the boundary-profile seed grid.
    pub grid_levels: usize,
    pub random_seeds: usize,
    /// The search counts as saturated when the last `saturation_window`
    /// random seeds found nothing new.
    pub saturation_window: usize,
    pub rng_seed: u64,
    pub homotopy_steps: usize,
    /// Explicit block partition for the coupling homotopy.
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Look for weakly coupled blocks when `blocks` is not given.
    pub detect_blocks: bool,
    pub newton: NewtonOptions,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            grid_levels: 5,
            random_seeds: 500,
            saturation_window: 200,
            rng_seed: 42,
            homotopy_steps: 20,
            blocks: None,
            detect_blocks: true,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub seeds_tried: usize,
    pub newton_failures: usize,
    pub outside_region: usize,
    pub duplicates_merged: usize,
    pub off_taxonomy: usize,
    pub homotopy_paths: usize,
    pub homotopy_failures: usize,
    /// No new equilibrium among the final `saturation_window` random seeds.
    pub saturated: bool,
}

impl SearchStats {
    fn absorb(&mut self, other: &SearchStats) {
        self.seeds_tried += other.seeds_tried;
        self.newton_failures += other.newton_failures;
        self.outside_region += other.outside_region;
        self.duplicates_merged += other.duplicates_merged;
        self.off_taxonomy += other.off_taxonomy;
        self.homotopy_paths += other.homotopy_paths;
        self.homotopy_failures += other.homotopy_failures;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumAtlas {
    pub model: BivirusModel,
    pub equilibria: Vec<Equilibrium>,
    pub complete: bool,
    pub search_stats: SearchStats,
    pub diagnostics: Vec<String>,
}

impl EquilibriumAtlas {
    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn of_class(&self, class: EquilibriumClass) -> impl Iterator<Item = &Equilibrium> {
        self.equilibria.iter().filter(move |e| e.class == class)
    }

    pub fn coexistence_count(&self) -> usize {
        self.of_class(EquilibriumClass::Coexistence).count()
    }

    pub fn boundary(&self, v: Virus) -> Option<&Equilibrium> {
        let class = match v {
            Virus::One => EquilibriumClass::BoundaryVirus1,
            Virus::Two => EquilibriumClass::BoundaryVirus2,
        };
        self.of_class(class).next()
    }

    /// Index of the equilibrium within `tol` of `s`, if any.
    pub fn locate(&self, s: &State, tol: f64) -> Option<usize> {
        self.equilibria
            .iter()
            .position(|e| e.state.distance_inf(s) <= tol)
    }

    /// Sorts by class, then decreasing `n_k`, then lexicographic state.
    pub fn sort(&mut self) {
        self.equilibria.sort_by(compare_equilibria);
    }
}

fn compare_equilibria(a: &Equilibrium, b: &Equilibrium) -> Ordering {
    a.class.cmp(&b.class).then(b.n_k.cmp(&a.n_k)).then_with(|| {
        let sa = a.state.stacked();
        let sb = b.state.stacked();
        sa.iter()
            .zip(sb.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    })
}

/// Adds `e` unless an entry within [`DEDUP_TOL`] exists. Returns whether it was new.
pub(crate) fn merge_into(
    list: &mut Vec<Equilibrium>,
    e: Equilibrium,
    stats: &mut SearchStats,
    diagnostics: &mut Vec<String>,
) -> bool {
    if list
        .iter()
        .any(|x| x.state.distance_inf(&e.state) <= DEDUP_TOL)
    {
        stats.duplicates_merged += 1;
        return false;
    }
    if e.class != EquilibriumClass::Coexistence && list.iter().any(|x| x.class == e.class) {
        // Healthy and boundary points are unique; a second one means a
        // spurious root.
        stats.off_taxonomy += 1;
        diagnostics.push(format!(
            "discarded a second {} root at distance {:.3e} from the known one",
            e.class,
            list.iter()
                .filter(|x| x.class == e.class)
                .map(|x| x.state.distance_inf(&e.state))
                .fold(f64::INFINITY, f64::min)
        ));
        return false;
    }
    list.push(e);
    true
}

/// Uniform sample from the interior of the region (per-node rejection on
/// the triangle `x1 + x2 < 1`).
pub fn random_interior_state<R: Rng>(rng: &mut R, n: usize) -> State {
    let mut x1 = DVector::zeros(n);
    let mut x2 = DVector::zeros(n);
    for i in 0..n {
        loop {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            if a > 0.0 && b > 0.0 && a + b < 1.0 {
                x1[i] = a;
                x2[i] = b;
                break;
            }
        }
    }
    State { x1, x2 }
}

/// Mixtures `(alpha xbar1, gamma xbar2)` on a `levels x levels` grid in
/// `[0, 1]^2`, keeping those inside the region node by node.
pub fn profile_grid_seeds(xbar1: &DVector<f64>, xbar2: &DVector<f64>, levels: usize) -> Vec<State> {
    let mut seeds = Vec::new();
    if levels < 2 {
        return seeds;
    }
    let step = 1.0 / (levels - 1) as f64;
    for a in 0..levels {
        for g in 0..levels {
            let (alpha, gamma) = (a as f64 * step, g as f64 * step);
            let x1 = xbar1 * alpha;
            let x2 = xbar2 * gamma;
            if (0..x1.len()).all(|i| x1[i] + x2[i] <= 1.0) {
                seeds.push(State { x1, x2 });
            }
        }
    }
    seeds
}

/// Healthy, both boundary equilibria, and every coexistence equilibrium
/// reached by the configured search.
///
/// `complete` is set when the random phase saturated and the atlas passes
/// the Poincaré–Hopf identity and the sphere Morse inequalities.
pub fn enumerate_all(model: &BivirusModel, budget: &SearchBudget) -> Result<EquilibriumAtlas> {
    let report = model::validate(model);
    if !report.all_pass() {
        return Err(Error::Precondition(format!(
            "model fails the standing assumptions: {}",
            report.failures().join("; ")
        )));
    }
    let n = model.n();
    let mut stats = SearchStats::default();
    let mut diagnostics = Vec::new();

    let healthy = classify(model, &State::healthy(n), Provenance::Analytic)?;
    let (e1, e2) = boundary_equilibria(model)?;
    let xbar1 = e1.state.x1.clone();
    let xbar2 = e2.state.x2.clone();
    let mut list = vec![healthy, e1, e2];

    let blocks = match &budget.blocks {
        Some(b) => Some(b.clone()),
        None if budget.detect_blocks => detect_blocks(model),
        None => None,
    };
    if let Some(blocks) = blocks.filter(|b| b.len() > 1) {
        let h = homotopy_enumerate(model, &blocks, budget.homotopy_steps)?;
        stats.homotopy_paths += h.paths;
        stats.homotopy_failures += h.failures;
        if h.failures > 0 {
            diagnostics.push(format!(
                "{} of {} continuation paths failed",
                h.failures, h.paths
            ));
        }
        for e in h.equilibria {
            merge_into(&mut list, e, &mut stats, &mut diagnostics);
        }
    }

    let grid = profile_grid_seeds(&xbar1, &xbar2, budget.grid_levels);
    let out = newton_search(model, &grid, &budget.newton)?;
    stats.absorb(&out.stats);
    for e in out.equilibria {
        merge_into(&mut list, e, &mut stats, &mut diagnostics);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
    let random: Vec<State> = (0..budget.random_seeds)
        .map(|_| random_interior_state(&mut rng, n))
        .collect();
    let roots = newton::solve_seeds(model, &random, &budget.newton);
    let mut last_new: Option<usize> = None;
    for (i, r) in roots.into_iter().enumerate() {
        stats.seeds_tried += 1;
        match r {
            newton::SeedOutcome::Failed => stats.newton_failures += 1,
            newton::SeedOutcome::Outside => stats.outside_region += 1,
            newton::SeedOutcome::Root(s) => match classify(model, &s, Provenance::NewtonSeed) {
                Ok(e) => {
                    if merge_into(&mut list, e, &mut stats, &mut diagnostics) {
                        last_new = Some(i);
                    }
                }
                Err(Error::OffTaxonomy { .. }) => stats.off_taxonomy += 1,
                Err(e) => return Err(e),
            },
        }
    }
    stats.saturated = budget.random_seeds >= budget.saturation_window
        && budget.saturation_window > 0
        && last_new.is_none_or(|i| i < budget.random_seeds - budget.saturation_window);

    let mut atlas = EquilibriumAtlas {
        model: model.clone(),
        equilibria: list,
        complete: false,
        search_stats: stats,
        diagnostics,
    };
    atlas.sort();

    let laws_hold = counting::counting_laws_hold(&atlas)?;
    atlas.complete = atlas.search_stats.saturated && laws_hold;
    if !atlas.complete {
        atlas.diagnostics.push(format!(
            "warning: atlas may be incomplete (search saturated: {}, counting laws hold: {})",
            atlas.search_stats.saturated, laws_hold
        ));
    }
    Ok(atlas)
}

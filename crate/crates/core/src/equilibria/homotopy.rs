//! Coupling homotopy: scale the cross-block infection entries by `t`,
//! enumerate each decoupled block at `t = 0`, and continue every product
//! of block equilibria to `t = 1`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::newton::{find_roots, stacked_field, NewtonOptions};
use super::{
    classify, merge_into, profile_grid_seeds, random_interior_state, Equilibrium, Provenance,
    SearchStats, ROOT_TOL,
};
use crate::error::{Error, Result};
use crate::model::{self, BivirusModel, State, REGION_TOL};
use crate::singlevirus::{self, Regime};

pub const MIN_STEP: f64 = 1e-5;
/// Entries below this fraction of the largest infection rate are weak links.
pub const WEAK_COUPLING_RATIO: f64 = 1e-2;

const CORRECTOR_MAX_ITER: usize = 12;
const CORRECTOR_TOL: f64 = ROOT_TOL;
/// A corrector that moves further than this from the prediction is
/// treated as having jumped paths.
const CORRECTOR_MAX_SHIFT: f64 = 5e-2;
const BLOCK_GRID_DIVISIONS: usize = 10;
const BLOCK_RANDOM_SEEDS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyOutcome {
    pub equilibria: Vec<Equilibrium>,
    pub paths: usize,
    pub failures: usize,
}

/// Strongly connected components of the graph of strong links (either
/// virus), when there is more than one and every block satisfies the
/// standing assumptions on its own.
pub fn detect_blocks(model: &BivirusModel) -> Option<Vec<Vec<usize>>> {
    let n = model.n();
    if n < 2 {
        return None;
    }
    let b1 = model.virus1().infection().as_matrix();
    let b2 = model.virus2().infection().as_matrix();
    let scale = b1.amax().max(b2.amax());
    let thr = WEAK_COUPLING_RATIO * scale;
    let strong = |i: usize, j: usize| i != j && (b1[(i, j)] > thr || b2[(i, j)] > thr);

    // reach[u][v]: v reachable from u along edges j -> i for strong (i, j)
    let mut reach = vec![vec![false; n]; n];
    for (u, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![u];
        row[u] = true;
        while let Some(a) = stack.pop() {
            for (v, reached) in row.iter_mut().enumerate() {
                if !*reached && strong(v, a) {
                    *reached = true;
                    stack.push(v);
                }
            }
        }
    }
    let mut assigned = vec![false; n];
    let mut blocks = Vec::new();
    for u in 0..n {
        if assigned[u] {
            continue;
        }
        let block: Vec<usize> = (0..n).filter(|&v| reach[u][v] && reach[v][u]).collect();
        for &v in &block {
            assigned[v] = true;
        }
        blocks.push(block);
    }
    if blocks.len() < 2 {
        return None;
    }
    let ok = blocks.iter().all(|b| {
        model
            .restrict_to(b)
            .map(|m| model::validate(&m).all_pass())
            .unwrap_or(false)
    });
    ok.then_some(blocks)
}

fn check_partition(n: usize, blocks: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in blocks.iter().flatten() {
        if i >= n || seen[i] {
            return Err(Error::Precondition(format!(
                "blocks must partition 0..{n}; node {i} is out of range or repeated"
            )));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) || blocks.iter().any(|b| b.is_empty()) {
        return Err(Error::Precondition(format!(
            "blocks must partition 0..{n} into non-empty sets"
        )));
    }
    Ok(())
}

/// Seeds covering the per-node triangles `x1 + x2 <= 1` on a regular grid.
fn triangle_grid(m: usize, divisions: usize) -> Vec<State> {
    let h = 1.0 / divisions as f64;
    let cell: Vec<(f64, f64)> = (0..=divisions)
        .flat_map(|a| (0..=divisions - a).map(move |b| (a as f64 * h, b as f64 * h)))
        .collect();
    let total = cell.len().pow(m as u32);
    let mut seeds = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut s = State::healthy(m);
        for i in 0..m {
            let (a, b) = cell[c % cell.len()];
            c /= cell.len();
            s.x1[i] = a;
            s.x2[i] = b;
        }
        seeds.push(s);
    }
    seeds
}

/// All equilibria of a small standalone model found by exhaustive seeding.
fn block_equilibria(block: &BivirusModel) -> Vec<State> {
    let m = block.n();
    let opts = NewtonOptions::default();
    let mut seeds = vec![State::healthy(m)];
    let endemic = |p| match singlevirus::solve_endemic(p, None) {
        Ok(r) if r.regime == Regime::Endemic => r.endemic,
        _ => None,
    };
    let e1 = endemic(block.virus1());
    let e2 = endemic(block.virus2());
    if let (Some(x1), Some(x2)) = (&e1, &e2) {
        seeds.push(State::new(x1.clone(), DVector::zeros(m)).expect("same length"));
        seeds.push(State::new(DVector::zeros(m), x2.clone()).expect("same length"));
        seeds.extend(profile_grid_seeds(x1, x2, 9));
    }
    if m <= 2 {
        seeds.extend(triangle_grid(m, BLOCK_GRID_DIVISIONS));
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        seeds.extend((0..BLOCK_RANDOM_SEEDS).map(|_| random_interior_state(&mut rng, m)));
    }
    find_roots(block, &seeds, &opts)
}

fn corrector(model: &BivirusModel, pred: &DVector<f64>) -> Option<DVector<f64>> {
    let mut x = pred.clone();
    for _ in 0..CORRECTOR_MAX_ITER {
        let f = stacked_field(model, &x);
        if f.amax() <= CORRECTOR_TOL {
            return ((&x - pred).amax() <= CORRECTOR_MAX_SHIFT).then_some(x);
        }
        let jac = model::jacobian_matrix(model, &State::from_stacked(&x));
        let step = jac.lu().solve(&(-f))?;
        x += step;
        if !x.iter().all(|v| v.is_finite()) || (&x - pred).amax() > CORRECTOR_MAX_SHIFT {
            return None;
        }
    }
    (stacked_field(model, &x).amax() <= CORRECTOR_TOL).then_some(x)
}

/// Secant predictor, Newton corrector, step halving down to [`MIN_STEP`].
fn track(
    family: &dyn Fn(f64) -> BivirusModel,
    start: DVector<f64>,
    steps: usize,
) -> Option<DVector<f64>> {
    let base = 1.0 / steps.max(1) as f64;
    let mut h = base;
    let mut t = 0.0;
    let mut x = start;
    let mut prev: Option<(f64, DVector<f64>)> = None;
    while t < 1.0 {
        let dt = h.min(1.0 - t);
        let t_next = if dt == 1.0 - t { 1.0 } else { t + dt };
        let pred = match &prev {
            Some((tp, xp)) => &x + (&x - xp) * (dt / (t - tp)),
            None => x.clone(),
        };
        match corrector(&family(t_next), &pred) {
            Some(xn) => {
                prev = Some((t, std::mem::replace(&mut x, xn)));
                t = t_next;
                h = (h * 2.0).min(base);
            }
            None => {
                h *= 0.5;
                if h < MIN_STEP {
                    return None;
                }
            }
        }
    }
    Some(x)
}

/// Continues every product of block equilibria from the decoupled system
/// to the full coupling. Failed paths are counted, not fatal.
pub fn homotopy_enumerate(
    model: &BivirusModel,
    blocks: &[Vec<usize>],
    steps: usize,
) -> Result<HomotopyOutcome> {
    let n = model.n();
    check_partition(n, blocks)?;
    let mut block_of = vec![0usize; n];
    for (k, b) in blocks.iter().enumerate() {
        for &i in b {
            block_of[i] = k;
        }
    }

    let mut per_block = Vec::with_capacity(blocks.len());
    for b in blocks {
        let sub = model.restrict_to(b)?;
        let report = model::validate(&sub);
        if !report.all_pass() {
            return Err(Error::Precondition(format!(
                "block {b:?} fails the standing assumptions: {}",
                report.failures().join("; ")
            )));
        }
        per_block.push(block_equilibria(&sub));
    }

    // Cartesian product of block roots, composed into full states at t = 0.
    let mut starts: Vec<State> = vec![State::healthy(n)];
    for (k, roots) in per_block.iter().enumerate() {
        let mut next = Vec::with_capacity(starts.len() * roots.len());
        for s in &starts {
            for r in roots {
                let mut c = s.clone();
                for (local, &global) in blocks[k].iter().enumerate() {
                    c.x1[global] = r.x1[local];
                    c.x2[global] = r.x2[local];
                }
                next.push(c);
            }
        }
        starts = next;
    }

    let family = |t: f64| {
        model
            .scale_infection(|i, j| if block_of[i] == block_of[j] { 1.0 } else { t })
            .expect("scaling preserves shape")
    };
    let ends: Vec<Option<DVector<f64>>> = starts
        .par_iter()
        .map(|s| track(&family, s.stacked(), steps))
        .collect();

    let mut stats = SearchStats::default();
    let mut diagnostics = Vec::new();
    let mut equilibria = Vec::new();
    let mut failures = 0;
    for end in ends {
        let Some(x) = end else {
            failures += 1;
            continue;
        };
        let s = State::from_stacked(&x);
        if !s.in_region(REGION_TOL) {
            continue;
        }
        match classify(model, &s, Provenance::Homotopy) {
            Ok(e) => {
                merge_into(&mut equilibria, e, &mut stats, &mut diagnostics);
            }
            Err(Error::OffTaxonomy { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(HomotopyOutcome {
        equilibria,
        paths: starts.len(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::EquilibriumClass;
    use crate::fixtures;

    #[test]
    fn detects_the_weakly_coupled_pairs() {
        assert_eq!(
            detect_blocks(&fixtures::example1()),
            Some(vec![vec![0, 1], vec![2, 3]])
        );
        assert_eq!(
            detect_blocks(&fixtures::example2()),
            Some(vec![vec![0, 1], vec![2, 3]])
        );
        assert_eq!(detect_blocks(&fixtures::mixed_n2()), None);
    }

    #[test]
    fn rejects_bad_partitions() {
        let m = fixtures::example1();
        assert!(homotopy_enumerate(&m, &[vec![0, 1], vec![1, 2, 3]], 10).is_err());
        assert!(homotopy_enumerate(&m, &[vec![0, 1], vec![2]], 10).is_err());
    }

    #[test]
    fn healthy_path_stays_healthy() {
        let m = fixtures::example1();
        let out = homotopy_enumerate(&m, &[vec![0, 1], vec![2, 3]], 20).unwrap();
        assert_eq!(out.failures, 0);
        assert_eq!(
            out.equilibria
                .iter()
                .filter(|e| e.class == EquilibriumClass::Healthy)
                .count(),
            1
        );
    }

    #[test]
    fn triangle_grid_size() {
        // 66 points per node triangle at 10 divisions
        assert_eq!(triangle_grid(1, 10).len(), 66);
        assert_eq!(triangle_grid(2, 4).len(), 15 * 15);
    }
}

//! Time integration of the single- and two-virus fields, convergence
//! detection against known equilibria, and basin sampling.
//!
//! The integrator is the Dormand–Prince 5(4) pair with PI step-size
//! control. States are never projected back into the region; the largest
//! excursion is recorded and anything beyond [`REGION_VIOLATION_LIMIT`]
//! is an error.

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{random_interior_state, EquilibriumAtlas};
use crate::error::{Error, Result};
use crate::model::{self, BivirusModel, State, VirusParams, REGION_TOL};
use crate::singlevirus::{self, Regime};

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
pub const DEFAULT_T_MAX: f64 = 2000.0;
pub const CONVERGENCE_DISTANCE: f64 = 1e-7;
pub const CONVERGENCE_FIELD: f64 = 1e-9;
pub const REGION_VIOLATION_LIMIT: f64 = 1e-6;
/// Upper bound on the step. Without it the controller settles at the edge
/// of the stability region near an attracting equilibrium and the error
/// stalls at tolerance level instead of decaying.
pub const DEFAULT_MAX_STEP: f64 = 0.25;
/// Basin runs with more unresolved samples than this fraction get a warning.
pub const UNRESOLVED_WARNING_FRACTION: f64 = 0.1;

/// Target ids used by [`integrate_single`].
pub const SINGLE_HEALTHY: usize = 0;
pub const SINGLE_ENDEMIC: usize = 1;

// Dormand–Prince coefficients; the field is autonomous so the nodes c_i are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants.
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Keep every accepted step; otherwise only the first and last state.
    pub record: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            max_step: DEFAULT_MAX_STEP,
            record: true,
        }
    }
}

impl IntegratorOptions {
    fn check(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.rtol.is_finite() && self.atol.is_finite()) {
            return Err(Error::Precondition(
                "integrator tolerances must be positive".into(),
            ));
        }
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            return Err(Error::Precondition("max_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    /// Index into the target list.
    ConvergedTo(usize),
    MaxTimeReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S = State> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub terminal: Terminal,
    pub max_region_violation: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl<S> Trajectory<S> {
    pub fn final_state(&self) -> &S {
        self.states
            .last()
            .expect("a trajectory has at least one state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("a trajectory has at least one time")
    }
}

impl Trajectory<State> {
    /// Header `t,x1_1..x1_n,x2_1..x2_n`, one row per stored step.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, State::n);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x1_{i}")));
        header.extend((1..=n).map(|i| format!("x2_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(*t)
                .chain(s.x1.iter().copied())
                .chain(s.x2.iter().copied())
                .map(|v| v.to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

impl Trajectory<DVector<f64>> {
    /// Header `t,x_1..x_n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(*t)
                .chain(x.iter().copied())
                .map(|v| v.to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

struct RawRun {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    terminal: Terminal,
    max_violation: f64,
    accepted: usize,
    rejected: usize,
}

fn error_norm(
    err: &DVector<f64>,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    opts: &IntegratorOptions,
) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = (0..err.len())
        .map(|i| {
            let sk = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(
    f: &F,
    y0: &DVector<f64>,
    f0: &DVector<f64>,
    t_max: f64,
    opts: &IntegratorOptions,
) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let scale = y0.map(|v| opts.atol + opts.rtol * v.abs());
    let rms = |v: &DVector<f64>| (v.component_div(&scale).norm_squared() / v.len() as f64).sqrt();
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = y0 + f0 * h0;
    let d2 = rms(&(f(&y1) - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_max)
}

/// Adaptive Dormand–Prince run of `y' = f(y)` on `[0, t_max]`.
///
/// After every accepted step `converged(y, f(y))` may end the run, and
/// `violation(y)` is recorded and checked against the limit.
fn dopri<F, V, C>(
    f: F,
    y0: DVector<f64>,
    t_max: f64,
    opts: &IntegratorOptions,
    violation: V,
    converged: C,
) -> Result<RawRun>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    V: Fn(&DVector<f64>) -> f64,
    C: Fn(&DVector<f64>, &DVector<f64>) -> Option<usize>,
{
    opts.check()?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Precondition(
            "t_max must be positive and finite".into(),
        ));
    }
    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = f(&y);
    let mut max_violation = violation(&y).max(0.0);
    let mut run = RawRun {
        times: vec![0.0],
        states: vec![y.clone()],
        terminal: Terminal::MaxTimeReached,
        max_violation,
        accepted: 0,
        rejected: 0,
    };
    if let Some(id) = converged(&y, &k1) {
        run.terminal = Terminal::ConvergedTo(id);
        return Ok(run);
    }

    let mut h = initial_step(&f, &y, &k1, t_max, opts).min(opts.max_step);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    loop {
        if t >= t_max {
            break;
        }
        let min_step = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < min_step {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + h >= t_max;
        if last {
            h = t_max - t;
        }

        let k2 = f(&(&y + &k1 * (h * A21)));
        let k3 = f(&(&y + (&k1 * A31 + &k2 * A32) * h));
        let k4 = f(&(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h));
        let k5 = f(&(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
        let k6 = f(&(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
        let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
        let k7 = f(&y_new);
        let err = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let err = error_norm(&err, &y, &y_new, opts);

        if !err.is_finite() {
            h *= FAC_MIN;
            run.rejected += 1;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(EXPO);
        if err <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            t = if last { t_max } else { t + h };
            y = y_new;
            k1 = k7;
            run.accepted += 1;
            last_rejected = false;

            let v = violation(&y);
            max_violation = max_violation.max(v);
            if v > REGION_VIOLATION_LIMIT {
                return Err(Error::RegionViolation { t, violation: v });
            }
            if opts.record {
                run.times.push(t);
                run.states.push(y.clone());
            }
            if let Some(id) = converged(&y, &k1) {
                run.terminal = Terminal::ConvergedTo(id);
                break;
            }
            h = h_new.min(opts.max_step);
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            run.rejected += 1;
            last_rejected = true;
        }
    }
    if !opts.record && run.times.last() != Some(&t) {
        run.times.push(t);
        run.states.push(y);
    }
    run.max_violation = max_violation;
    Ok(run)
}

fn nearest_target(targets: &[State], s: &State) -> Option<usize> {
    targets
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.distance_inf(s)))
        .filter(|&(_, d)| d <= CONVERGENCE_DISTANCE)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Integrates the two-virus field from `s0`; `ConvergedTo(i)` refers to
/// `targets[i]`.
pub fn integrate(
    model: &BivirusModel,
    s0: &State,
    t_max: f64,
    targets: &[State],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    let n = model.n();
    if s0.n() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: n,
            got: s0.n(),
        });
    }
    if !s0.in_region(REGION_TOL) {
        return Err(Error::Precondition(format!(
            "initial state leaves the region by {:e}",
            s0.region_violation()
        )));
    }
    let field = |y: &DVector<f64>| {
        let mut out = DVector::zeros(2 * n);
        let (x1, x2) = y.as_slice().split_at(n);
        model::field_into(model, x1, x2, out.as_mut_slice());
        out
    };
    let violation = |y: &DVector<f64>| State::from_stacked(y).region_violation();
    let converged = |y: &DVector<f64>, fy: &DVector<f64>| {
        if fy.amax() > CONVERGENCE_FIELD {
            return None;
        }
        nearest_target(targets, &State::from_stacked(y))
    };
    let run = dopri(field, s0.stacked(), t_max, opts, violation, converged)?;
    Ok(Trajectory {
        times: run.times,
        states: run.states.iter().map(State::from_stacked).collect(),
        terminal: run.terminal,
        max_region_violation: run.max_violation,
        steps_accepted: run.accepted,
        steps_rejected: run.rejected,
    })
}

/// Integrates the single-virus field. Targets are the healthy state
/// ([`SINGLE_HEALTHY`]) and, when it exists, the endemic equilibrium
/// ([`SINGLE_ENDEMIC`]).
pub fn integrate_single(
    params: &VirusParams,
    x0: &DVector<f64>,
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory<DVector<f64>>> {
    let n = params.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    if x0
        .iter()
        .any(|&v| !(-REGION_TOL..=1.0 + REGION_TOL).contains(&v))
    {
        return Err(Error::Precondition(
            "initial state must lie in [0, 1]^n".into(),
        ));
    }
    let mut targets = vec![DVector::zeros(n)];
    let sol = singlevirus::solve_endemic(params, None)?;
    if let (Regime::Endemic, Some(x)) = (sol.regime, sol.endemic) {
        targets.push(x);
    }
    let violation = |y: &DVector<f64>| {
        y.iter()
            .map(|&v| (-v).max(v - 1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let converged = |y: &DVector<f64>, fy: &DVector<f64>| {
        if fy.amax() > CONVERGENCE_FIELD {
            return None;
        }
        targets
            .iter()
            .position(|e| (e - y).amax() <= CONVERGENCE_DISTANCE)
    };
    let field = |y: &DVector<f64>| singlevirus::single_field(params, y);
    let run = dopri(field, x0.clone(), t_max, opts, violation, converged)?;
    Ok(Trajectory {
        times: run.times,
        states: run.states,
        terminal: run.terminal,
        max_region_violation: run.max_violation,
        steps_accepted: run.accepted,
        steps_rejected: run.rejected,
    })
}

/// Random interior state number `index` of the stream seeded by `seed`;
/// independent of how samples are scheduled across threads.
pub fn basin_initial_state(seed: u64, index: u64, n: usize) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    random_interior_state(&mut rng, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinSample {
    pub initial_conditions: Vec<State>,
    /// Atlas index of the equilibrium reached, `None` when unresolved.
    pub attractors: Vec<Option<usize>>,
    pub unresolved: usize,
    /// Samples that converged to an equilibrium that is not stable.
    pub saddle_hits: Vec<usize>,
    pub diagnostics: Vec<String>,
}

impl BasinSample {
    /// Hits per atlas index.
    pub fn tally(&self) -> BTreeMap<usize, usize> {
        let mut t = BTreeMap::new();
        for id in self.attractors.iter().flatten() {
            *t.entry(*id).or_insert(0) += 1;
        }
        t
    }

    pub fn distinct_attractors(&self) -> usize {
        self.tally().len()
    }
}

/// Integrates `count` uniform interior initial conditions and records
/// which atlas equilibrium each reaches. Every atlas entry is a target, so
/// convergence to a saddle is caught rather than missed.
pub fn basin_sample(
    model: &BivirusModel,
    atlas: &EquilibriumAtlas,
    count: usize,
    seed: u64,
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<BasinSample> {
    let n = model.n();
    if atlas.n() != n {
        return Err(Error::DimensionMismatch {
            context: "atlas",
            expected: n,
            got: atlas.n(),
        });
    }
    let targets: Vec<State> = atlas.equilibria.iter().map(|e| e.state.clone()).collect();
    let run_opts = IntegratorOptions {
        record: false,
        ..opts.clone()
    };
    let runs: Vec<(State, Terminal)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let s0 = basin_initial_state(seed, i, n);
            integrate(model, &s0, t_max, &targets, &run_opts).map(|tr| (s0, tr.terminal))
        })
        .collect::<Result<_>>()?;

    let mut sample = BasinSample {
        initial_conditions: Vec::with_capacity(count),
        attractors: Vec::with_capacity(count),
        unresolved: 0,
        saddle_hits: Vec::new(),
        diagnostics: Vec::new(),
    };
    for (i, (s0, terminal)) in runs.into_iter().enumerate() {
        let id = match terminal {
            Terminal::ConvergedTo(id) => Some(id),
            Terminal::MaxTimeReached => None,
        };
        match id {
            Some(id) if !atlas.equilibria[id].is_stable() => sample.saddle_hits.push(i),
            None => sample.unresolved += 1,
            _ => {}
        }
        sample.initial_conditions.push(s0);
        sample.attractors.push(id);
    }
    if !sample.saddle_hits.is_empty() {
        sample.diagnostics.push(format!(
            "{} samples converged to unstable equilibria",
            sample.saddle_hits.len()
        ));
    }
    if count > 0 && sample.unresolved as f64 > UNRESOLVED_WARNING_FRACTION * count as f64 {
        sample.diagnostics.push(format!(
            "warning: {} of {count} samples unresolved at t = {t_max}; an attractor may be missing from the atlas or nearly degenerate",
            sample.unresolved
        ));
    }
    Ok(sample)
}

//! Equilibrium-counting certification of an atlas.
//!
//! Stable counts are re-derived from the stored eigenvalues; nothing cached
//! by the solver is trusted.

use serde::{Deserialize, Serialize};

use crate::equilibria::{EquilibriumAtlas, EquilibriumClass, HYPERBOLIC_TOL};
use crate::error::{Error, Result};
use crate::model::{State, Virus};
use crate::spectral::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryConfiguration {
    BothBoundaryUnstable,
    BothBoundaryStable,
    MixedBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

/// Stable and unstable counts of a hyperbolic spectrum.
fn signature(spectrum: &Spectrum, state: &State) -> Result<(usize, usize)> {
    let margin = spectrum.hyperbolic_margin();
    if margin < HYPERBOLIC_TOL {
        return Err(Error::DegenerateEquilibrium {
            state: Box::new(state.clone()),
            eigenvalues: spectrum.eigenvalues.clone(),
            margin,
        });
    }
    Ok((spectrum.count_stable(), spectrum.count_unstable()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountedEquilibrium {
    pub atlas_index: usize,
    pub class: EquilibriumClass,
    pub n_k: usize,
    pub sign: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoincareHopf {
    pub sum: i64,
    pub holds: bool,
    pub counted: Vec<CountedEquilibrium>,
}

/// `sum (-1)^{n_k}` over coexistence and stable boundary equilibria (the
/// healthy point and unstable boundary points are excluded); holds iff 1.
pub fn poincare_hopf_sum(atlas: &EquilibriumAtlas) -> Result<PoincareHopf> {
    let mut counted = Vec::new();
    for (i, e) in atlas.equilibria.iter().enumerate() {
        let (n_k, unstable) = signature(&e.spectrum, &e.state)?;
        let include = match e.class {
            EquilibriumClass::Healthy => false,
            EquilibriumClass::BoundaryVirus1 | EquilibriumClass::BoundaryVirus2 => unstable == 0,
            EquilibriumClass::Coexistence => true,
        };
        if include {
            counted.push(CountedEquilibrium {
                atlas_index: i,
                class: e.class,
                n_k,
                sign: if n_k % 2 == 0 { 1 } else { -1 },
            });
        }
    }
    let sum = counted.iter().map(|c| c.sign).sum();
    Ok(PoincareHopf {
        sum,
        holds: !counted.is_empty() && sum == 1,
        counted,
    })
}

/// Stability pattern of the two boundary equilibria.
pub fn configuration(atlas: &EquilibriumAtlas) -> Result<BoundaryConfiguration> {
    let mut stable = [false; 2];
    for (k, v) in [Virus::One, Virus::Two].into_iter().enumerate() {
        let e = atlas.boundary(v).ok_or_else(|| {
            Error::Precondition(format!("atlas has no boundary equilibrium for {v}"))
        })?;
        let (_, unstable) = signature(&e.spectrum, &e.state)?;
        stable[k] = unstable == 0;
    }
    Ok(match stable {
        [true, true] => BoundaryConfiguration::BothBoundaryStable,
        [false, false] => BoundaryConfiguration::BothBoundaryUnstable,
        _ => BoundaryConfiguration::MixedBoundary,
    })
}

/// Lower bounds on the coexistence equilibria implied by the boundary
/// configuration and a number of already known stable coexistence points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoexistenceBounds {
    pub configuration: BoundaryConfiguration,
    pub parity: Parity,
    pub min_total: usize,
    /// Minimum number with an even count of stable eigenvalues.
    pub min_even_nk: usize,
    /// Minimum number with an odd count of stable eigenvalues (all unstable).
    pub min_odd_nk: usize,
    pub stable_coexistence_guaranteed: bool,
}

impl CoexistenceBounds {
    /// Whether an observed split into even/odd stable counts is admissible.
    pub fn admits(&self, even_nk: usize, odd_nk: usize) -> bool {
        let k = even_nk + odd_nk;
        let parity_ok = match self.parity {
            Parity::Odd => k % 2 == 1,
            Parity::Even => k.is_multiple_of(2),
        };
        let balance_ok = match self.configuration {
            BoundaryConfiguration::BothBoundaryUnstable => even_nk == odd_nk + 1,
            BoundaryConfiguration::BothBoundaryStable => odd_nk == even_nk + 1,
            BoundaryConfiguration::MixedBoundary => even_nk == odd_nk,
        };
        parity_ok && balance_ok && k >= self.min_total
    }
}

/// Stable coexistence points have `n_k = 2n` (even), which sets the
/// minimum size of the even class and hence of `k`.
pub fn coexistence_bounds(
    config: BoundaryConfiguration,
    known_stable_coexistence: usize,
) -> CoexistenceBounds {
    let s = known_stable_coexistence;
    let (parity, min_total, guaranteed) = match config {
        // k_e - k_o = 1, k_e >= s, k >= 1
        BoundaryConfiguration::BothBoundaryUnstable => {
            (Parity::Odd, (2 * s).saturating_sub(1).max(1), true)
        }
        // k_o - k_e = 1, k_e >= s
        BoundaryConfiguration::BothBoundaryStable => (Parity::Odd, 2 * s + 1, false),
        // k_e = k_o, k_e >= s
        BoundaryConfiguration::MixedBoundary => (Parity::Even, 2 * s, false),
    };
    let (min_even_nk, min_odd_nk) = match config {
        BoundaryConfiguration::BothBoundaryUnstable => (min_total.div_ceil(2), (min_total - 1) / 2),
        BoundaryConfiguration::BothBoundaryStable => ((min_total - 1) / 2, min_total.div_ceil(2)),
        BoundaryConfiguration::MixedBoundary => (min_total / 2, min_total / 2),
    };
    CoexistenceBounds {
        configuration: config,
        parity,
        min_total,
        min_even_nk,
        min_odd_nk,
        stable_coexistence_guaranteed: guaranteed,
    }
}

/// Counts `c_0 .. c_{2n}` of equilibria by number of stable eigenvalues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorseVector {
    pub c: Vec<usize>,
    pub n: usize,
}

impl MorseVector {
    pub fn new(c: Vec<usize>) -> Result<Self> {
        if c.len() < 3 || c.len().is_multiple_of(2) {
            return Err(Error::Precondition(format!(
                "a Morse vector has 2n + 1 entries, got {}",
                c.len()
            )));
        }
        let n = (c.len() - 1) / 2;
        Ok(Self { c, n })
    }

    pub fn total(&self) -> usize {
        self.c.iter().sum()
    }
}

/// Coexistence and stable boundary equilibria by stable count, plus a
/// single source in `c_0` standing for the healthy point together with any
/// unstable boundary points. Coexistence sources enter through their own
/// `n_k = 0` and are not counted twice.
pub fn morse_vector(atlas: &EquilibriumAtlas) -> Result<MorseVector> {
    let dim = 2 * atlas.n();
    let mut c = vec![0usize; dim + 1];
    for e in &atlas.equilibria {
        let (n_k, unstable) = signature(&e.spectrum, &e.state)?;
        match e.class {
            EquilibriumClass::Healthy => {}
            EquilibriumClass::BoundaryVirus1 | EquilibriumClass::BoundaryVirus2 => {
                if unstable == 0 {
                    c[n_k] += 1;
                }
            }
            EquilibriumClass::Coexistence => c[n_k] += 1,
        }
    }
    c[0] += 1;
    MorseVector::new(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    GreaterEq,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorseVerdict {
    /// Highest index `lambda` in the alternating partial sum.
    pub index: usize,
    pub lhs: i64,
    pub rhs: i64,
    pub relation: Relation,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorseVerdicts {
    pub verdicts: Vec<MorseVerdict>,
    pub all_hold: bool,
    /// Every inequality is tight.
    pub all_equalities: bool,
}

impl MorseVerdicts {
    pub fn final_sum(&self) -> i64 {
        self.verdicts.last().map_or(0, |v| v.lhs)
    }

    pub fn first_violation(&self) -> Option<&MorseVerdict> {
        self.verdicts.iter().find(|v| !v.holds)
    }
}

/// Alternating partial sums `sum_{j <= lambda} (-1)^{lambda - j} c_j`
/// against the same sums of Betti numbers; the top one is an equality.
pub(crate) fn morse_inequalities_with_betti(c: &[usize], betti: &[i64]) -> MorseVerdicts {
    assert_eq!(c.len(), betti.len(), "one Betti number per Morse count");
    let top = c.len() - 1;
    let mut verdicts = Vec::with_capacity(c.len());
    let (mut lhs, mut rhs) = (0i64, 0i64);
    for lambda in 0..=top {
        lhs = c[lambda] as i64 - lhs;
        rhs = betti[lambda] - rhs;
        let relation = if lambda == top {
            Relation::Equal
        } else {
            Relation::GreaterEq
        };
        let holds = match relation {
            Relation::GreaterEq => lhs >= rhs,
            Relation::Equal => lhs == rhs,
        };
        verdicts.push(MorseVerdict {
            index: lambda,
            lhs,
            rhs,
            relation,
            holds,
        });
    }
    let all_hold = verdicts.iter().all(|v| v.holds);
    let all_equalities = verdicts.iter().all(|v| v.lhs == v.rhs);
    MorseVerdicts {
        verdicts,
        all_hold,
        all_equalities,
    }
}

/// Betti numbers of the even sphere `S^{2n}`.
pub fn sphere_betti(n: usize) -> Vec<i64> {
    let mut r = vec![0; 2 * n + 1];
    r[0] = 1;
    r[2 * n] = 1;
    r
}

/// The sphere inequalities: `c_0 >= 1`, `c_1 - c_0 >= -1`, ..., with the
/// final alternating sum equal to 2.
pub fn morse_inequalities(m: &MorseVector) -> MorseVerdicts {
    morse_inequalities_with_betti(&m.c, &sphere_betti(m.n))
}

/// Admissible `(c_0, .., c_4)` for two-node networks.
pub const N2_ADMISSIBLE: [[usize; 5]; 5] = [
    [1, 0, 0, 0, 1],
    [1, 0, 0, 1, 2],
    [2, 1, 0, 0, 1],
    [1, 1, 1, 0, 1],
    [1, 0, 1, 1, 1],
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct N2Verdict {
    pub observed: [usize; 5],
    pub matched: bool,
}

pub fn n2_configuration_check_vector(m: &MorseVector) -> Result<N2Verdict> {
    if m.n != 2 {
        return Err(Error::Precondition(format!(
            "two-node configuration check on an n = {} Morse vector",
            m.n
        )));
    }
    let observed: [usize; 5] = m.c.clone().try_into().expect("length 5");
    Ok(N2Verdict {
        observed,
        matched: N2_ADMISSIBLE.contains(&observed),
    })
}

pub fn n2_configuration_check(atlas: &EquilibriumAtlas) -> Result<N2Verdict> {
    if atlas.n() != 2 {
        return Err(Error::Precondition(format!(
            "two-node configuration check on an n = {} model",
            atlas.n()
        )));
    }
    n2_configuration_check_vector(&morse_vector(atlas)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountReport {
    pub ph_sum: i64,
    pub ph_holds: bool,
    pub counted: Vec<CountedEquilibrium>,
    pub configuration: BoundaryConfiguration,
    pub morse: MorseVector,
    pub morse_verdicts: MorseVerdicts,
    pub coexistence_count: usize,
    pub stable_coexistence: usize,
    pub coexistence_bounds: CoexistenceBounds,
    /// Observed coexistence split satisfies the bounds.
    pub bounds_consistent: bool,
    pub n2_check: Option<N2Verdict>,
    pub atlas_complete: bool,
    pub atlas_saturated: bool,
}

impl CountReport {
    /// Poincaré–Hopf, every Morse relation, and (for n = 2) the
    /// configuration family all hold.
    pub fn all_hold(&self) -> bool {
        self.ph_holds
            && self.morse_verdicts.all_hold
            && self.bounds_consistent
            && self.n2_check.as_ref().is_none_or(|v| v.matched)
    }
}

pub fn count_report(atlas: &EquilibriumAtlas) -> Result<CountReport> {
    let ph = poincare_hopf_sum(atlas)?;
    let config = configuration(atlas)?;
    let morse = morse_vector(atlas)?;
    let verdicts = morse_inequalities(&morse);

    let dim = 2 * atlas.n();
    let mut even = 0;
    let mut odd = 0;
    let mut stable = 0;
    for e in atlas.of_class(EquilibriumClass::Coexistence) {
        let (n_k, _) = signature(&e.spectrum, &e.state)?;
        if n_k % 2 == 0 {
            even += 1;
        } else {
            odd += 1;
        }
        if n_k == dim {
            stable += 1;
        }
    }
    let bounds = coexistence_bounds(config, stable);
    let n2_check = if atlas.n() == 2 {
        Some(n2_configuration_check_vector(&morse)?)
    } else {
        None
    };
    Ok(CountReport {
        ph_sum: ph.sum,
        ph_holds: ph.holds,
        counted: ph.counted,
        configuration: config,
        morse,
        bounds_consistent: bounds.admits(even, odd),
        morse_verdicts: verdicts,
        coexistence_count: even + odd,
        stable_coexistence: stable,
        coexistence_bounds: bounds,
        n2_check,
        atlas_complete: atlas.complete,
        atlas_saturated: atlas.search_stats.saturated,
    })
}

/// Poincaré–Hopf and the sphere Morse relations both hold.
pub fn counting_laws_hold(atlas: &EquilibriumAtlas) -> Result<bool> {
    let ph = poincare_hopf_sum(atlas)?;
    let verdicts = morse_inequalities(&morse_vector(atlas)?);
    Ok(ph.holds && verdicts.all_hold)
}

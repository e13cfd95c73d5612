//! Random instances and independent reference computations shared by the
//! integration suites. Nothing here calls into the solver internals being
//! checked.

#![allow(dead_code)]

use bivirus_core::model::{self, BivirusModel, State};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Dense positive infection matrices with both reproduction numbers above
/// one, redrawn until the model validates.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> BivirusModel {
    loop {
        let d1: Vec<f64> = (0..n).map(|_| uniform(rng, 0.5, 1.5)).collect();
        let d2: Vec<f64> = (0..n).map(|_| uniform(rng, 0.5, 1.5)).collect();
        let mut b = || -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            if i == j {
                                uniform(rng, 0.5, 2.5)
                            } else {
                                uniform(rng, 0.05, 1.5)
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let b1 = b();
        let b2 = b();
        let m = BivirusModel::from_parts(d1, &b1, d2, &b2).unwrap();
        if model::validate(&m).all_pass() {
            return m;
        }
    }
}

/// Scalar model with both reproduction numbers in `[1.2, 4]`.
pub fn random_scalar_model(rng: &mut ChaCha8Rng) -> BivirusModel {
    let d1 = uniform(rng, 0.5, 2.0);
    let d2 = uniform(rng, 0.5, 2.0);
    let b1 = d1 * uniform(rng, 1.2, 4.0);
    let b2 = d2 * uniform(rng, 1.2, 4.0);
    BivirusModel::from_parts(vec![d1], &[vec![b1]], vec![d2], &[vec![b2]]).unwrap()
}

/// Uniform point of the region: per node, uniform on the triangle.
pub fn random_region_state(rng: &mut ChaCha8Rng, n: usize) -> State {
    let mut x1 = vec![0.0; n];
    let mut x2 = vec![0.0; n];
    for i in 0..n {
        let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        x1[i] = a;
        x2[i] = b;
    }
    State::from_slices(&x1, &x2).unwrap()
}

/// The bivirus field written out term by term.
pub fn field_by_hand(m: &BivirusModel, s: &State) -> DVector<f64> {
    let n = m.n();
    let mut out = DVector::zeros(2 * n);
    for (k, (xk, p)) in [(&s.x1, m.virus1()), (&s.x2, m.virus2())]
        .into_iter()
        .enumerate()
    {
        let b = p.infection().as_matrix();
        for i in 0..n {
            let mut pressure = 0.0;
            for j in 0..n {
                pressure += b[(i, j)] * xk[j];
            }
            out[k * n + i] = -p.healing()[i] * xk[i] + (1.0 - s.x1[i] - s.x2[i]) * pressure;
        }
    }
    out
}

/// Central differences of the hand-written field.
pub fn fd_jacobian(m: &BivirusModel, s: &State, h: f64) -> DMatrix<f64> {
    let n2 = 2 * m.n();
    let x = s.stacked();
    let mut jac = DMatrix::zeros(n2, n2);
    for c in 0..n2 {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let fp = field_by_hand(m, &State::from_stacked(&xp));
        let fm = field_by_hand(m, &State::from_stacked(&xm));
        jac.set_column(c, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Sign of the determinant by Gaussian elimination with partial pivoting.
pub fn lu_det_sign(m: &DMatrix<f64>) -> i8 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut sign: i8 = 1;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
            .unwrap();
        if a[(p, k)] == 0.0 {
            return 0;
        }
        if p != k {
            a.swap_rows(p, k);
            sign = -sign;
        }
        if a[(k, k)] < 0.0 {
            sign = -sign;
        }
        for i in k + 1..n {
            let f = a[(i, k)] / a[(k, k)];
            for j in k..n {
                a[(i, j)] -= f * a[(k, j)];
            }
        }
    }
    sign
}

/// Root of the scalar two-virus field with its stable-eigenvalue count.
#[derive(Debug, Clone, Copy)]
pub struct ScalarRoot {
    pub x1: f64,
    pub x2: f64,
    pub n_stable: usize,
}

/// Exhaustive root finder for n = 1: every point of a `step` grid on the
/// triangle whose residual is small seeds a 2x2 Newton polish to `1e-12`;
/// stability from the trace and determinant of the hand-derived Jacobian.
pub fn scalar_brute_force(m: &BivirusModel, step: f64) -> Vec<ScalarRoot> {
    let d1 = m.virus1().healing()[0];
    let d2 = m.virus2().healing()[0];
    let b1 = m.virus1().infection().get(0, 0);
    let b2 = m.virus2().infection().get(0, 0);
    let f = |x: f64, y: f64| {
        let s = 1.0 - x - y;
        (x * (-d1 + s * b1), y * (-d2 + s * b2))
    };
    let jac = |x: f64, y: f64| {
        let s = 1.0 - x - y;
        (
            -d1 + s * b1 - x * b1,
            -x * b1,
            -y * b2,
            -d2 + s * b2 - y * b2,
        )
    };
    let polish = |mut x: f64, mut y: f64| -> Option<(f64, f64)> {
        for _ in 0..100 {
            let (f1, f2) = f(x, y);
            if f1.abs().max(f2.abs()) <= 1e-12 {
                return Some((x, y));
            }
            let (a, b, c, d) = jac(x, y);
            let det = a * d - b * c;
            if det == 0.0 {
                return None;
            }
            x -= (d * f1 - b * f2) / det;
            y -= (a * f2 - c * f1) / det;
        }
        None
    };

    let steps = (1.0 / step).round() as usize;
    let mut roots: Vec<ScalarRoot> = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps - i {
            let (x, y) = (i as f64 * step, j as f64 * step);
            let (f1, f2) = f(x, y);
            if f1.abs().max(f2.abs()) > 20.0 * step {
                continue;
            }
            let Some((rx, ry)) = polish(x, y) else {
                continue;
            };
            if rx < -1e-9 || ry < -1e-9 || rx + ry > 1.0 + 1e-9 {
                continue;
            }
            if roots
                .iter()
                .any(|r| (r.x1 - rx).abs().max((r.x2 - ry).abs()) <= 1e-8)
            {
                continue;
            }
            let (a, b, c, d) = jac(rx, ry);
            let (tr, det) = (a + d, a * d - b * c);
            let n_stable = if det < 0.0 {
                1
            } else if tr < 0.0 {
                2
            } else {
                0
            };
            roots.push(ScalarRoot {
                x1: rx,
                x2: ry,
                n_stable,
            });
        }
    }
    roots
}

/// Log-uniform healing rates in `[0.3, 3]` and infection rates in
/// `[0.01, 5]`, redrawn until the model validates.
pub fn random_model_log_uniform(rng: &mut ChaCha8Rng, n: usize) -> BivirusModel {
    let mut lu = |lo: f64, hi: f64| (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp();
    loop {
        let d1: Vec<f64> = (0..n).map(|_| lu(0.3, 3.0)).collect();
        let d2: Vec<f64> = (0..n).map(|_| lu(0.3, 3.0)).collect();
        let b1: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| lu(0.01, 5.0)).collect())
            .collect();
        let b2: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| lu(0.01, 5.0)).collect())
            .collect();
        let m = BivirusModel::from_parts(d1, &b1, d2, &b2).unwrap();
        if model::validate(&m).all_pass() {
            return m;
        }
    }
}

/// Every rate of `base` scaled by an independent factor in
/// `[1 - spread, 1 + spread]`, redrawn until the model validates.
pub fn perturbed_model(rng: &mut ChaCha8Rng, base: &BivirusModel, spread: f64) -> BivirusModel {
    let mut f = || 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0);
    loop {
        let scaled = |rows: Vec<Vec<f64>>, f: &mut dyn FnMut() -> f64| -> Vec<Vec<f64>> {
            rows.into_iter()
                .map(|r| r.into_iter().map(|v| v * f()).collect())
                .collect()
        };
        let b1 = scaled(base.virus1().infection().to_rows(), &mut f);
        let b2 = scaled(base.virus2().infection().to_rows(), &mut f);
        let d1: Vec<f64> = base.virus1().healing().iter().map(|d| d * f()).collect();
        let d2: Vec<f64> = base.virus2().healing().iter().map(|d| d * f()).collect();
        let m = BivirusModel::from_parts(d1, &b1, d2, &b2).unwrap();
        if model::validate(&m).all_pass() {
            return m;
        }
    }
}

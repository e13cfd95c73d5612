//! Built-in models.
//!
//! `example1` and `example2` are two weakly coupled pairs of two-node
//! networks with identity healing; `scalar1` is a single node; `mixed-n2`
//! is a two-node network with `B1 > B2` entrywise.

use crate::model::BivirusModel;

pub const FIXTURE_NAMES: [&str; 4] = ["example1", "example2", "scalar1", "mixed-n2"];

const EPS: f64 = 0.001;

pub fn example1() -> BivirusModel {
    BivirusModel::from_parts(
        vec![1.0; 4],
        &[
            vec![1.6, 1.0, EPS, EPS],
            vec![1.0, 1.6, EPS, EPS],
            vec![EPS, EPS, 2.1, 0.156],
            vec![EPS, EPS, 3.0659, 1.1],
        ],
        vec![1.0; 4],
        &[
            vec![2.1, 0.156, EPS, EPS],
            vec![3.0659, 1.1, EPS, EPS],
            vec![EPS, EPS, 1.0, 1.6],
            vec![EPS, EPS, 1.6, 1.0],
        ],
    )
    .expect("fixture is well formed")
}

pub fn example2() -> BivirusModel {
    BivirusModel::from_parts(
        vec![1.0; 4],
        &[
            vec![1.6, 1.0, EPS, EPS],
            vec![1.0, 1.6, EPS, EPS],
            vec![EPS, EPS, 1.7, 1.0],
            vec![EPS, EPS, 1.2, 0.5],
        ],
        vec![1.0; 4],
        &[
            vec![2.1, 0.156, EPS, EPS],
            vec![3.0659, 1.1, EPS, EPS],
            vec![EPS, EPS, 1.6, 1.0],
            vec![EPS, EPS, 1.2, 0.0],
        ],
    )
    .expect("fixture is well formed")
}

pub fn scalar1() -> BivirusModel {
    BivirusModel::from_parts(vec![1.0], &[vec![2.0]], vec![1.0], &[vec![3.0]])
        .expect("fixture is well formed")
}

pub fn mixed_n2() -> BivirusModel {
    BivirusModel::from_parts(
        vec![1.0, 1.0],
        &[vec![2.0, 0.5], vec![0.5, 2.0]],
        vec![1.0, 1.0],
        &[vec![1.5, 0.3], vec![0.3, 1.5]],
    )
    .expect("fixture is well formed")
}

pub fn fixture(name: &str) -> Option<BivirusModel> {
    match name {
        "example1" => Some(example1()),
        "example2" => Some(example2()),
        "scalar1" => Some(scalar1()),
        "mixed-n2" => Some(mixed_n2()),
        _ => None,
    }
}

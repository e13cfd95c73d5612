//! Criterion benchmarks for the solver stages live in `benches/`.

//! Criterion benchmarks for `delaywarp`; see `benches/`.

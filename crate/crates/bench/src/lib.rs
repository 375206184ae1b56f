//! Criterion benchmarks for tbdsim; see `benches/`.

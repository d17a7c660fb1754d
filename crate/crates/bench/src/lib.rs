//! Criterion benchmarks for `lossgrid-core`; see `benches/`.

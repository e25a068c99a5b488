//! Criterion benchmarks for the core operators and the forward pass; see `benches/`.

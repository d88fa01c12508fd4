//! Criterion benchmarks for the pilotwave kernels live in `benches/`.

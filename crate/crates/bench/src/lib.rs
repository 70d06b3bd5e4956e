//! Criterion benchmarks for the training kernels live in `benches/`.

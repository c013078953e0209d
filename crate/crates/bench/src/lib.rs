//! Criterion benchmarks for the mmctr kernels live in `benches/`.

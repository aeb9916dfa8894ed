//! Criterion benchmarks for the certification, derivative and solver kernels;
//! see `benches/kernels.rs`.

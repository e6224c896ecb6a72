//! Benchmarks for dfsim live under `benches/`.

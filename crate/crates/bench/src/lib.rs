//! Benchmarks for the dimension library live under `benches/`.

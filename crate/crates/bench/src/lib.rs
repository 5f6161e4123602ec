//! Criterion benchmarks for `isac-doppler`; see `benches/`.

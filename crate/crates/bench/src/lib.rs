//! Criterion benchmarks for the executor and the grounding matcher live
//! under `benches/`; run them with `cargo bench -p kgqa-bench`.

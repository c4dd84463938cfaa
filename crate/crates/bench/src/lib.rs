//! Benchmark-only crate; see `benches/codec.rs` for the criterion suites.
//! Kept as a separate workspace member so heavy benchmark dependencies stay
//! out of the core library's dependency graph.

//! Benchmark-only crate. The measurements live in `benches/`; this library
//! is intentionally empty.

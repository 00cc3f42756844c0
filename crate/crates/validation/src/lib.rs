//! Acceptance checks for `subharm` live in `tests/acceptance.rs`; run them with
//! `cargo test -p subharm-validation --test acceptance`.

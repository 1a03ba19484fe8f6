//! Acceptance suite for `fieldroad`.
//!
//! Everything lives in `tests/acceptance.rs`, a harness-free test target that
//! prints one `PASS`/`FAIL` line per criterion and exits non-zero if any
//! criterion fails. It is a separate package so that it runs after the
//! `fieldroad` unit and integration tests.

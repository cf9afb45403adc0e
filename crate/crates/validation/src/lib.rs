//! Acceptance suite for `coopsense`; everything lives in
//! `tests/acceptance.rs`. Kept as its own package so it runs after the
//! unit, oracle and property suites.

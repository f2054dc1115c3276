//! Holds the `acceptance` test target for the workspace. Run it with
//! `cargo test -p runchart-validation --test acceptance`; set
//! `ACCEPTANCE_ONLY=<n>` to run a single criterion.

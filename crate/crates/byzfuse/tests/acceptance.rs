//! End-to-end acceptance suite. Populated alongside the harness module;
//! each check prints one pass/fail line with its measured quantities.

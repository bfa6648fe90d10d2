//! Command line driver: argument parsing, subcommand dispatch, progress
//! reporting, and the exit-code contract (0 success, 1 validation error,
//! 2 numeric failure).

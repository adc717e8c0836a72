//! Post-processing and metrics.

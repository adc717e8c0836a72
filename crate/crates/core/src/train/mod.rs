//! Optimization engine.

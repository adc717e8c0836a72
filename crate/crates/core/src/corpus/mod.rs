//! Corpus manifests and toy synthesis.

//! Experiment machinery (placeholder).

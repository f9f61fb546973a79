//! Windowed-attribution analytics for recommendation widgets on e-commerce
//! event logs: through-rate metrics (CTR, ATC-TR, BTR and their corrected
//! variants), customer-behavior indicators, two-sample significance tests,
//! Pearson correlation, recommendation filters, and a seeded synthetic-log
//! generator with analytic ground truth.

pub mod attribution;
pub mod behavior;
pub mod events;
pub mod filters;
pub mod generator;
pub mod metrics;
pub mod report;
pub mod stats;

//! Rate-equation simulator for the decay of a continuously monitored
//! unstable level (quantum Zeno and anti-Zeno effects).

pub mod analytic;
pub mod dynamics;
pub mod generator;
pub mod model;
pub mod oracle;
pub mod spectrum;

//! Experiment platform for AI-assisted cognitive reappraisal studies.

pub mod analysis;
pub mod cli;
pub mod clients;
pub mod clock;
pub mod conditioning;
pub mod domain;
pub mod protocol;
pub mod simulator;
pub mod storage;

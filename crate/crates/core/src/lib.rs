//! Exact and Monte Carlo machinery for Glauber dynamics on monotone spin
//! systems, built around the question of whether skipping updates can ever
//! speed up convergence.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact;
pub mod flow;
pub mod mc;
pub mod models;
pub mod schedules;
pub mod system;
pub mod transport;

pub use error::{Error, Result};
pub use exact::{DistVector, DominanceCertificate, Dynamics, ExactModel, MixingTime, Start};
pub use models::{GraphFamily, ModelSpec};
pub use schedules::{Schedule, ScheduleSpec, Target};
pub use system::{Configuration, GibbsSystem, SiteGraph, StateSpace};

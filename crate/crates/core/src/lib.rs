//! Age of incorrect information and state-dependent penalties for
//! energy-harvesting devices reporting two-state Markov processes over
//! slotted ALOHA without feedback.
//!
//! The crate provides:
//!
//! - [`analysis`]: closed-form average penalty, average AoII, wrong/correct
//!   estimate duration laws and misdetection probability, computed on a
//!   reduced `(x, x_hat, b)` Markov chain;
//! - [`simulator`]: a slot-level Monte Carlo of the full protocol;
//! - [`optimizer`]: multi-start Nelder-Mead over transmission strategies;
//! - [`device_chain`]: exact single-device, profile and full chains used as
//!   small-scale oracles;
//! - [`markov`]: the dense Markov-chain and phase-type numerics underneath.
//!
//! ```no_run
//! use aoii_aloha::prelude::*;
//!
//! let scenario = Scenario::symmetric_reference(0.1);
//! let strategy = Strategy::constant(StrategyClass::Random, 8, 0.05);
//! let report = analyze(&scenario, &strategy, &PenaltySpec::AOII, &NormalApproximation).unwrap();
//! println!("average AoII {:.2}, MEP {:.4}", report.average_aoii, report.misdetection_probability);
//! ```

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod device_chain;
pub mod error;
pub mod faulhaber;
pub mod markov;
pub mod model;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::analysis::{analyze, AnalysisReport, Metric};
    pub use crate::channel::{DecodingModel, NormalApproximation};
    pub use crate::error::{Error, Result};
    pub use crate::model::{PenaltySpec, Scenario, Strategy, StrategyClass};
}

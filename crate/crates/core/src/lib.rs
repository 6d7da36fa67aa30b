//! Robust downlink design for cell-free MIMO with finite-capacity fronthaul
//! and imperfect CSI: SDMA, NOMA and rate-splitting (RSMA) beamforming and
//! quantization-noise optimization by majorization-minimization, plus a
//! Monte Carlo rate oracle and sweep tooling.

pub mod bounds;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod model;
pub mod optimizer;

pub use bounds::{BeamDesign, SchemeKind, SchemeSpec};
pub use error::{Error, Result};
pub use model::{ChannelSet, SystemConfig, Topology};
pub use optimizer::{MmState, RateAllocation, SolverSettings};
pub use evaluation::{EvalSettings, Mode, RateReport, Scheme};
pub use experiments::SweepSpec;

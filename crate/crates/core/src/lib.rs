//! Quantum secret sharing over weighted continuous-variable graph states.
//!
//! Quadratures are tracked exactly as affine forms over independent
//! standard-normal latents, so analytic moments and Monte Carlo samples
//! come from the same objects.

pub mod conditioning;
pub mod cpubc;
pub mod cpvtc;
pub mod error;
pub mod feasibility;
pub mod gaussian;
pub mod graph_state;
pub mod players;
pub mod qpvtq;
pub mod threshold;

pub use error::{Error, Result};
pub use feasibility::{FeasibilityResult, FeasibilityStatus, RankCertificate};
pub use gaussian::{AffineForm, LatentBasis, MomentSummary};
pub use graph_state::{build_cvgs, GraphFile, GraphSpec, GraphState, SqueezingSpec};
pub use players::PlayerSet;
pub use threshold::{Scheme, Strategy, ThresholdDesign, VerificationReport};

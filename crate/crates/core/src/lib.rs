//! Certified induced-ℓ2 gain bounds for discrete-time Lurye interconnections.
//!
//! The feedback loop is an LTI plant `G` with inputs `(w, d)` and outputs
//! `(v, e)`, closed through a repeated static nonlinearity `w = F(v)` that is
//! either the repeated ReLU or any repeated nonlinearity slope-restricted to
//! `[0, 1]`. A gain bound is certified by
//!
//! 1. filtering `(v, w)` through the FIR stack [`filter::build_psi`],
//! 2. augmenting the plant with that filter ([`lmi::augment`]),
//! 3. assembling the dissipation matrix inequality with a dynamic multiplier
//!    from [`multiplier`] ([`lmi::assemble_l`]),
//! 4. minimising `γ²` with a conic solver ([`sdp::solve_gain`]).
//!
//! [`analysis`] ties these together into horizon sweeps and [`oracle`] checks
//! every certificate from the time domain.

// Links the system OpenBLAS used by the conic solver's dense PSD kernels.
use openblas_src as _;

pub mod analysis;
pub mod filter;
pub mod lmi;
pub mod lti;
pub mod multiplier;
pub mod oracle;
pub mod sdp;

mod linalg;

pub use analysis::{certify, AnalysisReport, AnalysisRequest, NonlinearityClass};
pub use filter::{build_psi, stacked_output, FilterRealization};
pub use lmi::{assemble_l, augment, AugmentedPlant, LmiAssembly};
pub use lti::{Channel, StateSpace, Trajectory};
pub use multiplier::{MiddleMatrix, Multiplier, ReluMultiplier, SlopeMultiplier};
pub use sdp::{Certificate, SolveStatus, SolverOptions};

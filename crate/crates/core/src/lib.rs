//! Numerics for step-2 sub-Finsler Carnot groups.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs:
//!
//! * [`algebra`]: the group law in exponential coordinates (exact BCH in step 2).
//! * [`norms`]: norms on the horizontal layer, their duals, subdifferentials of
//!   the squared norm and the Legendre feedback `argmax_v a(v) - ½‖v‖²`.
//! * [`control`]: piecewise-constant controls, their development into curves,
//!   dilations and integral averages.
//! * [`pmp`]: the normal extremal system `ȧ = B(u, ·)` closed by the feedback.
//! * [`asymptotics`]: decay of B-paired averages, blowdown kernel checks, affinity.
//! * [`oracle`]: an independent direct-transcription upper bound on the distance.
#![no_std]
// `!(x <= tol)` is used on purpose: NaN must fail every check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod algebra;
pub mod asymptotics;
pub mod control;
mod error;
mod linalg;
pub mod norms;
pub mod oracle;
pub mod pmp;

pub use algebra::{GroupPoint, HorizontalVector, StepTwoAlgebra, StructureTensor};
pub use control::{ControlSignal, Trajectory};
pub use error::{Error, Result};
pub use norms::{Covector, Feedback, NormModel, Selection};
pub use pmp::{BForm, Extremal, ExtremalState};

//! Binary erasure channel analysis of GLDPC ensembles whose constraint nodes
//! are single parity checks or punctured recursive convolutional codes,
//! uncoupled or spatially coupled.
//!
//! * [`trellis`]: generator parsing, trellis construction, terminated encoding.
//! * [`transfer`]: exact erasure transfer function of the BCJR decoder.
//! * [`de`]: density evolution, uncoupled and coupled.
//! * [`thresholds`]: BP thresholds by bisection and MAP thresholds from the area theorem.
//! * [`weights`]: component and ensemble-average weight enumerators, `d_min` bounds.

pub mod de;
pub mod ensemble;
pub mod exec;
mod linalg;
pub mod table;
pub mod thresholds;
pub mod transfer;
pub mod trellis;
pub mod weights;

pub use de::{DeConfig, DeError, DeOutcome, DeResult, Ensemble};
pub use ensemble::{Component, Coupling, EnsembleSpec, SpecError};
pub use exec::Execution;
pub use thresholds::{
    bp_threshold, exit_curve, map_threshold, Diagnostics, ExitCurve, ExitGrid, ThresholdError, ThresholdKind,
    ThresholdResult,
};
pub use transfer::{mc_transfer_oracle, McEstimate, TransferError, TransferFunction};
pub use trellis::{GeneratorSpec, Trellis, TrellisError};
pub use weights::{dmin_bound, dmin_curve, CapPolicy, DminPoint, WeightError, WeightSpectrum};

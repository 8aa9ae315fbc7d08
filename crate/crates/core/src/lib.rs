//! Self-contracted polylines in finite-dimensional normed spaces.
//!
//! A polyline A_1, ..., A_r is self-contracted when d(A_k, A_j) ≤ d(A_k, A_i)
//! for all i ≤ j ≤ k. The crate checks that property for arbitrary gauges,
//! builds the boundary partitions and angle constants used to bound the
//! length ℓ by C·|A_1A_r|, and emits machine-checkable certificates of that
//! bound for concrete instances.

pub mod certify;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod io;
pub mod linalg;
pub mod norms;
pub mod partition;
pub mod polyline;

pub use certify::{certify_easycase, certify_general, check_certificate, Certificate, CheckReport, GeneralSetup, Mode};
pub use error::{Error, Result};
pub use linalg::Subspace;
pub use norms::{Gauge, GaugeKind};
pub use partition::{build_partition, Constants, Estimates, Partition, PatchId};
pub use polyline::{is_self_contracted, length, Polyline, SelfContracted};

// Guards of the form `!(x > eps)` are deliberate: they fail closed on NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod det;
pub mod error;
pub mod experiment;
pub mod fd;
pub mod kkt;
pub mod ldlt;
pub mod lipschitz;
pub mod merit;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod record;
pub mod stoch;
pub mod subgrad;
pub mod suite;

pub use error::{Result, SolverError};
pub use problem::{Evaluation, Problem};
pub use record::{RunRecord, RunStatus};

//! Certified ℓ∞ robustness for feed-forward networks with S-shaped
//! activations (sigmoid, tanh, arctan).
//!
//! The pipeline is: relax each hidden neuron on its pre-activation interval
//! with a pair of lines ([`strategy`]), push symbolic input-linear bounds
//! through the network ([`propagate`]), decide robustness at a radius and
//! binary-search the largest certified radius ([`certify`]). For networks
//! with a single hidden layer, [`optimizer`] searches tangent points that
//! tighten the output bounds directly. [`oracle`] provides falsification
//! and exhaustive enclosures used to check all of the above.

pub mod activation;
pub mod certify;
pub mod error;
pub mod exec;
pub mod format;
pub mod generate;
pub mod linalg;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod propagate;
pub mod report;
pub mod strategy;

pub use activation::ActivationKind;
pub use certify::{
    batch_certify, certified_lower_bound, verify_at_epsilon, BatchReport, CertifiedBound, MarginMode, Method,
    SearchParams, VerifyOutcome, VerifyStatus,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::{AffineForm, Matrix, Vector};
pub use network::{InputSpec, Network};
pub use propagate::{propagate, PropagationResult};
pub use strategy::{LinearBoundPair, StrategyId};

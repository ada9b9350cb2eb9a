//! Multi-dimensional preference scoring and group-relative policy
//! optimization with a drift-controlled weight schedule.
//!
//! * [`preference_core`]: unit-sphere embeddings and skew-symmetric subspace scores.
//! * [`advantage`]: scalar and per-dimension group advantages, the clipped
//!   surrogate, and the single-axis hacking test.
//! * [`drift`]: variance profiles, the drift metric and the controller.
//! * [`policy_sim`]: a softmax policy over a synthetic catalog, trained online.
//! * [`oracle`]: slow reference implementations and the verification suite.
//!
//! ```
//! use gprl::preference_core::{phase_embed, score_tensor};
//! use gprl::advantage::{population_scores, normalize_per_dimension, aggregate_advantage};
//!
//! let group: Vec<_> = [[0.5, -0.2], [1.0, 0.3], [-0.4, 0.0]]
//!     .iter()
//!     .map(|q| phase_embed(q, 0.4).unwrap())
//!     .collect();
//! let s_hat = population_scores(&score_tensor(&group).unwrap()).unwrap();
//! let adv = aggregate_advantage(&normalize_per_dimension(&s_hat, 1e-8).unwrap(), &[1.0, 1.0]).unwrap();
//! assert!(adv.aggregate.iter().sum::<f64>().abs() < 1e-12);
//! ```

pub mod advantage;
pub mod drift;
pub mod error;
pub mod oracle;
pub mod policy_sim;
pub mod preference_core;

pub use error::{GprlError, Result};

// Run the guide's code blocks as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/scores.md")]
    mod scores {}
    #[doc = include_str!("../../../book/src/advantages.md")]
    mod advantages {}
    #[doc = include_str!("../../../book/src/drift.md")]
    mod drift {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}

//! Latent-space data anonymization with invariant coordinate selection.
//!
//! Spectral anonymization (SA) permutes each principal-component score
//! column independently and reconstructs; it fails to mask strong outliers.
//! ICSA generalizes the latent space to an invariant coordinate selection
//! transform with a selectable pair of scatter matrices, so the whole
//! procedure inherits the robustness of the chosen estimators.
//!
//! Modules:
//! - [`matrix`]: symmetric eigen kernel, matrix powers, Haar orthogonals.
//! - [`scatter`]: location/scatter estimators across breakdown classes.
//! - [`ics`]: the whiten-rotate-invert transform.
//! - [`anonymize`]: SA and ICSA draws plus binary rediscretization.
//! - [`metrics`]: ORE, OLS/lasso utility, selection stability, RPE.
//! - [`simulate`]: scenario generators and the replication grid.
//! - [`theory`]: executable checks of the SA privacy bound and its lemmas.
//! - [`io`], [`evaluate`]: CSV ingestion and the real-data pipeline.

pub mod anonymize;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod ics;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod scatter;
pub mod simulate;
pub mod theory;

pub use data::{ColumnKind, DataMatrix};
pub use error::{Error, Result};
pub use rng::RngStream;

//! Volumetric transport under the Poisson-process view of radiance fields.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: rays, pinhole cameras and the three-view rig.
//! * [`fields`]: analytic density/color fields and positional encoding.
//! * [`transport`]: transmittance, depth distributions and hierarchical rendering.
//! * [`compose`]: superposition of fields, component marginals and segmentation.
//! * [`losses`]: RGB-D depth/color likelihoods and the overlap penalty.
//! * [`fitting`]: gradients, finite-difference checks and the Adam fitting loop.
//! * [`estimlab`]: estimator bias/variance measurement and the thin-slab counterexample.
//! * [`scenegen`]: synthetic multi-object scenes with analytic ground truth.
//! * [`metrics`]: ARI, foreground ARI and masked MSE.
//! * [`imageio`] and [`scenedoc`]: on-disk formats shared with the CLI.

pub mod compose;
pub mod error;
pub mod estimlab;
pub mod fields;
pub mod fitting;
pub mod geometry;
pub mod imageio;
pub mod losses;
pub mod metrics;
pub mod rng;
pub mod scenedoc;
pub mod scenegen;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{Camera, Ray, Vec3};

/// Linear RGB triple, nominally in `[0, 1]`.
pub type Rgb = [f64; 3];

//! Bounded Tricomi relaxation blocks.
//!
//! The crate is organised bottom-up:
//!
//! * [`special`] and [`quad`]: gamma function and adaptive quadrature.
//! * [`hypergeom`]: Kummer `M` and Tricomi `U` on the principal branch, and
//!   the boundary values of `U` on its branch cut.
//! * [`kernel`]: time-domain kernels (Tricomi impulse kernel, impulse and step
//!   responses of the bounded block).
//! * [`bounded_model`]: the normalised mapping `F = 1 - 1/(1+U)`, anchored
//!   two-plateau responses and impedance elements.
//! * [`spectral`]: the nonnegative cut density of `F` and its log-rate form.
//! * [`realization`]: Gauss–Stieltjes Foster models and diagonal state space.
//! * [`fitting`]: tissue permittivity and battery impedance fitting.
//! * [`io`]: CSV/JSON ingestion and persistence used by the CLI.
//!
//! Batch loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and plain iterators otherwise.

pub mod bounded_model;
pub mod error;
pub mod fitting;
pub mod hypergeom;
pub mod io;
pub mod kernel;
pub mod par;
pub mod quad;
pub mod realization;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use hypergeom::ShapeParams;
pub use num_complex::Complex64;

//! Data-driven color augmentation for image datasets.
//!
//! Illuminants are estimated per training image with the Minkowski-norm
//! family of color-constancy estimators ([`constancy`]), removed with a
//! diagonal von Kries transform ([`color`]), and collected into an
//! [`IlluminantBank`](bank::IlluminantBank). At training time a
//! white-balanced image is re-lit with an illuminant drawn uniformly from the
//! bank, then gamma-jittered and geometrically distorted ([`augment`]).
//!
//! ```
//! use illumaug::color::{Encoding, Illuminant, ImageBuffer, von_kries_cast, von_kries_correct};
//! use illumaug::constancy::{estimate_illuminant, EstimatorConfig};
//!
//! let img = ImageBuffer::filled(4, 4, [0.5, 0.25, 0.25], Encoding::EncodedSRGB)?;
//! let tau = estimate_illuminant(&img, &EstimatorConfig::default())?;
//! let wb = von_kries_correct(&img, &tau)?;
//! let back = von_kries_cast(&wb, &tau);
//! assert!((back.pixel(0, 0)[0] - 0.5).abs() < 1e-12);
//! # Ok::<(), illumaug::Error>(())
//! ```

pub mod augment;
pub mod bank;
pub mod cli;
pub mod color;
pub mod constancy;
pub mod error;
pub mod filter;
pub mod io;
pub mod metrics;

pub use error::{Error, Result};

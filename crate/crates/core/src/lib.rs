//! Synthesis and analysis of phased arrays conformal to a polynomial skin.
//!
//! The modules follow the pipeline: [`surface`] models the skin,
//! [`geometry`] places elements and their local frames, [`pattern`] holds
//! the element laws, [`farfield`] sums steered fields over the sphere,
//! [`metrics`] extracts lobes and sweeps, and [`optimize`] synthesizes
//! low-sidelobe amplitudes.
//!
//! ```
//! use conformal_array::farfield::{ArrayModel, RadioConfig, SteeringVector};
//! use conformal_array::geometry::{layout, ArraySpec, LayoutOptions};
//! use conformal_array::pattern::ElementPattern;
//! use conformal_array::surface::PolynomialSurface;
//!
//! let placed = layout(&ArraySpec::table_two(), &PolynomialSurface::table_one(), &LayoutOptions::default())?;
//! let model = ArrayModel::with_pattern(placed.elements, &ElementPattern::cos_squared(), RadioConfig::default())?;
//! let steer = SteeringVector::from_degrees(0.0, -40.0);
//! let grid = model.sample_sphere(&model.uniform_excitation(steer), 4.0)?;
//! println!("D = {:.2} dBi", grid.directivity(steer.direction())?);
//! # Ok::<(), conformal_array::Error>(())
//! ```

pub mod error;
pub mod farfield;
pub mod geometry;
pub mod metrics;
pub mod optimize;
pub mod pattern;
pub mod surface;

pub use error::{Error, Result};

// The book's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/surface.md")]
    mod surface {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/patterns.md")]
    mod patterns {}
    #[doc = include_str!("../../../book/src/farfield.md")]
    mod farfield {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

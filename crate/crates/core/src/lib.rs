//! Dotsenko–Fateev integrals: direct evaluation in the convergent region, the Pochhammer-type
//! regularizing multicontour on the double of the blown-up cube, and meromorphic continuation.

pub mod branch;
pub mod contour;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod quad;
pub mod signature;

pub use error::{Error, Result};

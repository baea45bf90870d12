//! Cantor dynamical systems, tower decompositions, groupoids, comparison and
//! crossed-product numerics.

pub mod error;
pub mod exact;
pub mod group;
pub mod system;
pub mod clopen;
pub mod window;
pub mod measure;
pub mod towers;
pub mod linalg;
pub mod crossed;
pub mod groupoid;
pub mod partition;
pub mod tsdg;
pub mod comparison;

pub use error::{Error, Result};

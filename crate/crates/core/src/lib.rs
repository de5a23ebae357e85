//! Numerics for unfoldings of antiholomorphic parabolic germs.

pub mod analysis;
pub mod cli;
pub mod des;
pub mod error;
pub mod fatou;
pub mod germ;
pub mod multicorn;
pub mod numerics;
pub mod poly;
pub mod prepare;
pub mod vfield;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use poly::CPoly;

//! Finite site and sheaf engine.
//!
//! Categories are stored as total tables over integer ids, topologies as
//! fully saturated sets of sieves, and every construction (sheafification,
//! Kan extensions, fibered and oriented sites, points, Cech cohomology) is
//! computed exhaustively at finite scale. A step guard bounds all search
//! work and turns runaway inputs into a typed error instead of a hang.

pub mod abelian;
pub mod error;
pub mod fibered;
pub mod fincat;
pub mod fixtures;
pub mod guard;
pub mod oriented;
pub mod points;
pub mod samples;
pub mod sheaves;
pub mod sites;

pub use error::Error;
pub use guard::{Guard, DEFAULT_GUARD_LIMIT};

pub type Result<T> = std::result::Result<T, Error>;

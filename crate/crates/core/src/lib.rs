pub mod entops;
pub mod equilibria;
pub mod error;
pub mod experiments;
pub mod netmodel;
pub mod optimize;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Werner parameter in double precision.
pub type WernerParam = entops::WernerParam<f64>;
/// Edge response table in double precision.
pub type EdgeResponseTable = entops::EdgeResponseTable<f64>;
/// Edge response in double precision.
pub type EdgeResponse = entops::EdgeResponse<f64>;
/// Feasible-set block structure in double precision.
pub type Blocks = optimize::Blocks<f64>;

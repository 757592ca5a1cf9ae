//! Autoregressive models for tensor-valued time series.

pub mod config;
pub mod error;
pub mod estimate;
pub mod forecast;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod perm;
pub mod selection;
pub mod series;
pub mod simulate;
pub mod tensor;

pub use error::{Result, TenArError};
pub use model::{ModelSpec, NoiseSpec, TenArModel};
pub use series::TensorSeries;
pub use tensor::{DenseMatrix, DenseTensor};

use crate::error::{Result, TenArError};
use crate::tensor::DenseTensor;

/// A tensor-valued time series. Index `t` is 0-based: `obs(0)` is the first
/// observation.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorSeries {
    dims: Vec<usize>,
    observations: Vec<DenseTensor>,
}

impl TensorSeries {
    pub fn new(dims: Vec<usize>, observations: Vec<DenseTensor>) -> Result<Self> {
        if observations.is_empty() {
            return Err(TenArError::InvalidArgument(
                "a series needs at least one observation".into(),
            ));
        }
        if let Some((t, x)) = observations
            .iter()
            .enumerate()
            .find(|(_, x)| x.dims() != dims.as_slice())
        {
            return Err(TenArError::ShapeMismatch(format!(
                "observation {t} has dims {:?}, series dims are {dims:?}",
                x.dims()
            )));
        }
        Ok(Self { dims, observations })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of entries per observation, `d = prod d_k`.
    pub fn entries(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn obs(&self, t: usize) -> &DenseTensor {
        &self.observations[t]
    }

    pub fn observations(&self) -> &[DenseTensor] {
        &self.observations
    }

    pub fn iter(&self) -> impl Iterator<Item = &DenseTensor> {
        self.observations.iter()
    }

    /// Observations `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(TenArError::InvalidArgument(format!(
                "slice {start}..{end} of a series of length {}",
                self.len()
            )));
        }
        Ok(Self {
            dims: self.dims.clone(),
            observations: self.observations[start..end].to_vec(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            observations: self.observations.iter().map(|x| x.scaled(c)).collect(),
        }
    }

    /// Observations `start..end` stacked into one tensor with time as an
    /// extra last mode, dims `(d_1, ..., d_K, end - start)`.
    pub fn stack(&self, start: usize, end: usize) -> DenseTensor {
        let mut dims = self.dims.clone();
        dims.push(end - start);
        let mut data = Vec::with_capacity(self.entries() * (end - start));
        for x in &self.observations[start..end] {
            data.extend_from_slice(x.data());
        }
        DenseTensor::new(dims, data).expect("stacked length matches")
    }

    /// `sum_{t >= start} ||X_t||_F^2`.
    pub fn sum_squares_from(&self, start: usize) -> f64 {
        self.observations[start..]
            .iter()
            .map(DenseTensor::norm_squared)
            .sum()
    }
}

//! Random model generation and series simulation.
//!
//! Randomness comes from ChaCha20 seeded with a 64-bit seed. Each purpose
//! draws from its own stream of that seed (see the `*_STREAM` constants), so
//! passing the same seed to [`random_model`] and [`simulate_series`] does not
//! correlate them. Replications should use distinct seeds, e.g.
//! [`replication_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TenArError};
use crate::linalg;
use crate::model::{normalize_factors, ModelSpec, NoiseSpec, TenArModel};
use crate::series::TensorSeries;
use crate::tensor::{DenseMatrix, DenseTensor};

pub const MODEL_STREAM: u64 = 1;
pub const NOISE_STREAM: u64 = 2;
pub const SERIES_STREAM: u64 = 3;

/// Default number of discarded initial steps.
pub const DEFAULT_BURN_IN: usize = 500;

/// Target accuracy of the spectral radius in [`random_model`].
pub const RADIUS_TOL: f64 = 1e-6;

const MAX_DRAWS: usize = 10;

/// The three noise settings of the simulation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSetting {
    /// Identity covariance.
    I,
    /// Dense `Q Λ Q'` with Haar `Q` and `|N(0,1)|` eigenvalues.
    II,
    /// Separable, each factor drawn as in setting II.
    III,
}

impl std::str::FromStr for NoiseSetting {
    type Err = TenArError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            _ => Err(TenArError::InvalidArgument(format!(
                "unknown noise setting {s:?} (expected I, II or III)"
            ))),
        }
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replication `rep` derived from `base`.
pub fn replication_seed(base: u64, rep: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Draws i.i.d. standard normal factors and rescales all `A_K` by one
/// common scalar so the companion spectral radius equals `rho`.
pub fn random_model(spec: &ModelSpec, rho: f64, seed: u64) -> Result<TenArModel> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(TenArError::InvalidArgument(format!(
            "rho must lie in (0, 1), got {rho}"
        )));
    }
    let mut rng = rng_for(seed, MODEL_STREAM);
    for _ in 0..MAX_DRAWS {
        let coeffs = spec
            .kranks()
            .iter()
            .map(|&r| {
                (0..r)
                    .map(|_| {
                        spec.dims()
                            .iter()
                            .map(|&d| gaussian_matrix(d, d, &mut rng))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let raw = TenArModel::new(spec.clone(), coeffs, NoiseSpec::Identity)?;
        let Ok(base) = raw.normalize() else { continue };
        let radius_at = |c: f64| -> Result<f64> { Ok(scale_last(&base, c).causality()?.radius) };
        let r1 = radius_at(1.0)?;
        if r1 <= 1e-12 {
            continue;
        }
        let c = match spec.order() {
            1 => rho / r1,
            _ => bisect_scale(rho, r1, &radius_at)?,
        };
        let model = scale_last(&base, c);
        let radius = model.causality()?.radius;
        if (radius - rho).abs() <= RADIUS_TOL {
            return Ok(model);
        }
        let c = bisect_scale(rho, r1, &radius_at)?;
        let model = scale_last(&base, c);
        if (model.causality()?.radius - rho).abs() <= RADIUS_TOL {
            return Ok(model);
        }
    }
    Err(TenArError::DegenerateDraw(format!(
        "no usable model after {MAX_DRAWS} draws"
    )))
}

fn scale_last(m: &TenArModel, c: f64) -> TenArModel {
    let mut out = m.clone();
    let last = m.spec().modes() - 1;
    for (i, r) in m.spec().terms().collect::<Vec<_>>() {
        *out.coeff_mut(i, r, last) *= c;
    }
    out
}

fn bisect_scale(rho: f64, r1: f64, radius_at: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = (rho / r1).max(1e-3);
    let mut grow = 0;
    while radius_at(hi)? < rho {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(TenArError::DegenerateDraw(
                "spectral radius does not grow with the scale".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = radius_at(mid)?;
        if (r - rho).abs() <= 0.1 * RADIUS_TOL {
            return Ok(mid);
        }
        if r < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn spectral_cov(n: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    let q = linalg::haar_orthogonal(n, rng);
    let lambda = nalgebra::DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z.abs()
    });
    linalg::symmetrize(&(&q * DenseMatrix::from_diagonal(&lambda) * q.transpose()))
}

/// Innovation covariance for one of the simulation settings.
pub fn noise_cov(setting: NoiseSetting, dims: &[usize], seed: u64) -> NoiseSpec {
    let mut rng = rng_for(seed, NOISE_STREAM);
    match setting {
        NoiseSetting::I => NoiseSpec::Identity,
        NoiseSetting::II => NoiseSpec::Dense(spectral_cov(dims.iter().product(), &mut rng)),
        NoiseSetting::III => {
            let factors: Vec<DenseMatrix> =
                dims.iter().map(|&d| spectral_cov(d, &mut rng)).collect();
            NoiseSpec::Separable(normalize_factors(&factors))
        }
    }
}

/// Draws innovations with covariance given by a [`NoiseSpec`].
pub struct NoiseSampler {
    dims: Vec<usize>,
    kind: SamplerKind,
}

enum SamplerKind {
    Identity,
    Dense(DenseMatrix),
    Separable(Vec<DenseMatrix>),
}

impl NoiseSampler {
    pub fn new(noise: &NoiseSpec, dims: &[usize]) -> Result<Self> {
        noise.validate(dims)?;
        let kind = match noise {
            NoiseSpec::Identity => SamplerKind::Identity,
            NoiseSpec::Dense(s) => SamplerKind::Dense(
                s.clone()
                    .cholesky()
                    .ok_or_else(|| {
                        TenArError::NotPositiveDefinite("dense noise covariance".into())
                    })?
                    .unpack(),
            ),
            NoiseSpec::Separable(f) => {
                SamplerKind::Separable(f.iter().map(linalg::sym_sqrt_clamped).collect())
            }
        };
        Ok(Self {
            dims: dims.to_vec(),
            kind,
        })
    }

    pub fn sample(&self, rng: &mut ChaCha20Rng) -> DenseTensor {
        let d: usize = self.dims.iter().product();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let z = DenseTensor::new(self.dims.clone(), z).expect("length matches dims");
        match &self.kind {
            SamplerKind::Identity => z,
            SamplerKind::Dense(l) => {
                let v = l * z.vec();
                DenseTensor::new(self.dims.clone(), v.as_slice().to_vec()).expect("same length")
            }
            SamplerKind::Separable(roots) => z
                .multi_mode_product(roots, None)
                .expect("factor shapes validated"),
        }
    }
}

/// Simulates `T` observations after `burn_in` discarded steps, starting from
/// a zero pre-sample.
pub fn simulate_series(m: &TenArModel, t: usize, burn_in: usize, seed: u64) -> Result<TensorSeries> {
    let dims = m.spec().dims();
    let init = vec![DenseTensor::zeros(dims); m.spec().order()];
    let mut obs = simulate_from(m, &init, burn_in + t, seed)?;
    obs.drain(..burn_in);
    TensorSeries::new(dims.to_vec(), obs)
}

/// Runs the recursion for `steps` steps from the pre-sample `init`
/// (oldest first, length `p`) and returns the new observations only.
pub fn simulate_from(
    m: &TenArModel,
    init: &[DenseTensor],
    steps: usize,
    seed: u64,
) -> Result<Vec<DenseTensor>> {
    if steps == 0 {
        return Err(TenArError::InvalidArgument("series length must be positive".into()));
    }
    let p = m.spec().order();
    if init.len() != p {
        return Err(TenArError::ShapeMismatch(format!(
            "pre-sample of length {} for an order-{p} model",
            init.len()
        )));
    }
    let causality = m.causality()?;
    if !causality.causal {
        return Err(TenArError::NotCausal {
            radius: causality.radius,
        });
    }
    let sampler = NoiseSampler::new(m.noise(), m.spec().dims())?;
    let mut rng = rng_for(seed, SERIES_STREAM);
    let mut all: Vec<DenseTensor> = init.to_vec();
    all.reserve(steps);
    for _ in 0..steps {
        let n = all.len();
        let window: Vec<&DenseTensor> = (1..=p).map(|i| &all[n - i]).collect();
        let mut x = m.conditional_mean(&window)?;
        x.axpy(1.0, &sampler.sample(&mut rng));
        all.push(x);
    }
    all.drain(..p);
    Ok(all)
}

//! TenAR(p) model representation.
//!
//! Lags, terms and modes are 0-based: `coeff(i, r, k)` is the coefficient
//! matrix of lag `i + 1`, term `r + 1`, mode `k + 1`.

use nalgebra::DVector;

use crate::error::{Result, TenArError};
use crate::linalg::{self, SPECTRAL_TOL};
use crate::tensor::{kron_chain, DenseMatrix, DenseTensor};

/// Entries with magnitude at or below this are skipped when fixing signs.
pub const SIGN_THRESHOLD: f64 = 1e-10;

/// Companion spectral radius must stay below `1 - CAUSAL_MARGIN`.
pub const CAUSAL_MARGIN: f64 = 1e-10;

/// Singular values above this fraction of the largest count toward rank.
pub const RANK_TOL: f64 = 1e-8;

/// Dimensions, order and K-ranks of a TenAR(p) model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    dims: Vec<usize>,
    kranks: Vec<usize>,
}

impl ModelSpec {
    /// `kranks[i]` is the number of terms at lag `i + 1`; the order is
    /// `kranks.len()` and the last entry must be positive.
    pub fn new(dims: Vec<usize>, kranks: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(TenArError::InvalidSpec(format!(
                "dims must be non-empty and positive, got {dims:?}"
            )));
        }
        match kranks.last() {
            None => return Err(TenArError::InvalidSpec("order must be at least 1".into())),
            Some(0) => {
                return Err(TenArError::InvalidSpec(format!(
                    "the last lag must have at least one term, got kranks {kranks:?}"
                )))
            }
            _ => {}
        }
        Ok(Self { dims, kranks })
    }

    /// Drops trailing zero K-ranks; `None` if every lag is empty.
    pub fn trimmed(dims: Vec<usize>, kranks: &[usize]) -> Result<Option<Self>> {
        let end = kranks.iter().rposition(|&r| r > 0).map_or(0, |i| i + 1);
        if end == 0 {
            return Ok(None);
        }
        Self::new(dims, kranks[..end].to_vec()).map(Some)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn kranks(&self) -> &[usize] {
        &self.kranks
    }

    pub fn order(&self) -> usize {
        self.kranks.len()
    }

    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    /// `d = prod d_k`.
    pub fn entries(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn total_terms(&self) -> usize {
        self.kranks.iter().sum()
    }

    /// Length of the stacked parameter vector, `sum_i R_i (d_1^2 + ... + d_K^2)`.
    pub fn parameter_len(&self) -> usize {
        self.total_terms() * self.block_len()
    }

    /// `d_1^2 + ... + d_K^2`.
    pub fn block_len(&self) -> usize {
        self.dims.iter().map(|d| d * d).sum()
    }

    /// Iterates `(lag, term)` pairs in the canonical sweep order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.kranks
            .iter()
            .enumerate()
            .flat_map(|(i, &r)| (0..r).map(move |t| (i, t)))
    }
}

/// Covariance of `vec(E_t)`.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec {
    Identity,
    Dense(DenseMatrix),
    /// Factors `Σ_1..Σ_K` with `Cov(vec E_t) = Σ_K ⊗ ... ⊗ Σ_1`.
    Separable(Vec<DenseMatrix>),
}

impl NoiseSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            NoiseSpec::Identity => "identity",
            NoiseSpec::Dense(_) => "dense",
            NoiseSpec::Separable(_) => "separable",
        }
    }

    /// Checks shapes, symmetry and positive semi-definiteness.
    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        match self {
            NoiseSpec::Identity => Ok(()),
            NoiseSpec::Dense(s) => {
                let d: usize = dims.iter().product();
                if s.nrows() != d || s.ncols() != d {
                    return Err(TenArError::ShapeMismatch(format!(
                        "dense covariance is {}x{}, expected {d}x{d}",
                        s.nrows(),
                        s.ncols()
                    )));
                }
                linalg::check_sym_psd(s, "dense covariance")
            }
            NoiseSpec::Separable(factors) => {
                if factors.len() != dims.len() {
                    return Err(TenArError::ShapeMismatch(format!(
                        "{} separable factors for {} modes",
                        factors.len(),
                        dims.len()
                    )));
                }
                for (k, (s, &dk)) in factors.iter().zip(dims).enumerate() {
                    if s.nrows() != dk || s.ncols() != dk {
                        return Err(TenArError::ShapeMismatch(format!(
                            "covariance factor {k} is {}x{}, expected {dk}x{dk}",
                            s.nrows(),
                            s.ncols()
                        )));
                    }
                    linalg::check_sym_psd(s, &format!("covariance factor {k}"))?;
                }
                Ok(())
            }
        }
    }

    /// Rescales separable factors so `||Σ_k||_F = 1` for every mode but the
    /// last, which absorbs the scale.
    pub fn normalized(&self) -> Self {
        match self {
            NoiseSpec::Separable(factors) => NoiseSpec::Separable(normalize_factors(factors)),
            other => other.clone(),
        }
    }

    /// The full `d x d` covariance matrix.
    pub fn covariance(&self, dims: &[usize]) -> DenseMatrix {
        let d: usize = dims.iter().product();
        match self {
            NoiseSpec::Identity => DenseMatrix::identity(d, d),
            NoiseSpec::Dense(s) => s.clone(),
            NoiseSpec::Separable(f) => kron_chain(f).expect("non-empty factor list"),
        }
    }
}

/// Frobenius normalization of covariance factors, scale carried by the last.
pub fn normalize_factors(factors: &[DenseMatrix]) -> Vec<DenseMatrix> {
    let mut out = factors.to_vec();
    let last = out.len() - 1;
    let mut scale = 1.0;
    for f in out.iter_mut().take(last) {
        let n = f.norm();
        if n > 0.0 {
            *f /= n;
            scale *= n;
        }
    }
    out[last] *= scale;
    out
}

/// Result of the causality check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Causality {
    pub causal: bool,
    /// Spectral radius of the companion matrix.
    pub radius: f64,
    /// `1 - radius`.
    pub margin: f64,
}

/// Identifiability diagnostics for one lag.
#[derive(Clone, Debug, PartialEq)]
pub struct LagIdentifiability {
    pub lag: usize,
    pub terms: usize,
    /// Numerical rank of `[vec A_k^(i1), ..., vec A_k^(iR)]` for each mode.
    pub ranks: Vec<usize>,
    /// `max_{r != l} |tr(A_k^(r) A_k^(l)')|` over modes; reported for K = 2.
    pub orthogonality_residual: Option<f64>,
    pub sufficient: bool,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TenArModel {
    spec: ModelSpec,
    coeffs: Vec<Vec<Vec<DenseMatrix>>>,
    noise: NoiseSpec,
}

impl TenArModel {
    /// `coeffs[i][r][k]` must be `d_k x d_k` for every term of the spec.
    pub fn new(
        spec: ModelSpec,
        coeffs: Vec<Vec<Vec<DenseMatrix>>>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        if coeffs.len() != spec.order() {
            return Err(TenArError::ShapeMismatch(format!(
                "{} lags of coefficients for order {}",
                coeffs.len(),
                spec.order()
            )));
        }
        for (i, lag) in coeffs.iter().enumerate() {
            if lag.len() != spec.kranks()[i] {
                return Err(TenArError::ShapeMismatch(format!(
                    "lag {i} has {} terms, spec says {}",
                    lag.len(),
                    spec.kranks()[i]
                )));
            }
            for (r, term) in lag.iter().enumerate() {
                if term.len() != spec.modes() {
                    return Err(TenArError::ShapeMismatch(format!(
                        "term ({i},{r}) has {} matrices for {} modes",
                        term.len(),
                        spec.modes()
                    )));
                }
                for (k, (a, &dk)) in term.iter().zip(spec.dims()).enumerate() {
                    if a.nrows() != dk || a.ncols() != dk {
                        return Err(TenArError::ShapeMismatch(format!(
                            "coefficient ({i},{r},{k}) is {}x{}, expected {dk}x{dk}",
                            a.nrows(),
                            a.ncols()
                        )));
                    }
                }
            }
        }
        noise.validate(spec.dims())?;
        Ok(Self {
            spec,
            coeffs,
            noise,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Vec<Vec<DenseMatrix>>] {
        &self.coeffs
    }

    pub fn term(&self, lag: usize, term: usize) -> &[DenseMatrix] {
        &self.coeffs[lag][term]
    }

    pub fn coeff(&self, lag: usize, term: usize, mode: usize) -> &DenseMatrix {
        &self.coeffs[lag][term][mode]
    }

    pub(crate) fn coeff_mut(&mut self, lag: usize, term: usize, mode: usize) -> &mut DenseMatrix {
        &mut self.coeffs[lag][term][mode]
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Result<Self> {
        noise.validate(self.spec.dims())?;
        self.noise = noise;
        Ok(self)
    }

    /// `Φ^(i) = sum_r A_K^(ir) ⊗ ... ⊗ A_1^(ir)` for each lag.
    pub fn var_coefficients(&self) -> Vec<DenseMatrix> {
        let d = self.spec.entries();
        self.coeffs
            .iter()
            .map(|lag| {
                lag.iter().fold(DenseMatrix::zeros(d, d), |acc, term| {
                    acc + kron_chain(term).expect("K >= 1")
                })
            })
            .collect()
    }

    /// `pd x pd` companion matrix of the VAR(p) form.
    pub fn companion(&self) -> DenseMatrix {
        companion_matrix(&self.var_coefficients())
    }

    pub fn causality(&self) -> Result<Causality> {
        let radius = linalg::spectral_radius(&self.companion(), SPECTRAL_TOL)?;
        Ok(Causality {
            causal: radius < 1.0 - CAUSAL_MARGIN,
            radius,
            margin: 1.0 - radius,
        })
    }

    /// `X ×_1 A_1^(ir) ×_2 ... ×_K A_K^(ir)`.
    pub fn apply_term(&self, x: &DenseTensor, lag: usize, term: usize) -> DenseTensor {
        x.multi_mode_product(&self.coeffs[lag][term], None)
            .expect("model and observation shapes agree")
    }

    /// Conditional mean of the next observation given `window`, most recent
    /// first (`window[i]` is the observation at lag `i + 1`).
    pub fn conditional_mean(&self, window: &[&DenseTensor]) -> Result<DenseTensor> {
        if window.len() != self.spec.order() {
            return Err(TenArError::ShapeMismatch(format!(
                "window of length {} for an order-{} model",
                window.len(),
                self.spec.order()
            )));
        }
        let mut out = DenseTensor::zeros(self.spec.dims());
        for (i, x) in window.iter().enumerate() {
            if x.dims() != self.spec.dims() {
                return Err(TenArError::ShapeMismatch(format!(
                    "observation dims {:?}, model dims {:?}",
                    x.dims(),
                    self.spec.dims()
                )));
            }
            for r in 0..self.spec.kranks()[i] {
                out.axpy(1.0, &self.apply_term(x, i, r));
            }
        }
        Ok(out)
    }

    /// Rescales every term so `||A_k||_F = 1` for `k < K`, fixes signs so the
    /// first entry of `vec(A_k)` above [`SIGN_THRESHOLD`] is positive, pushes
    /// scale and sign into `A_K`, and orders terms within each lag by
    /// descending `||A_K||_F`.
    pub fn normalize(&self) -> Result<Self> {
        let last = self.spec.modes() - 1;
        let mut coeffs = self.coeffs.clone();
        for (i, lag) in coeffs.iter_mut().enumerate() {
            for (r, term) in lag.iter_mut().enumerate() {
                for (k, a) in term.iter().enumerate() {
                    if a.norm() == 0.0 {
                        return Err(TenArError::InvalidArgument(format!(
                            "coefficient ({i},{r},{k}) is zero"
                        )));
                    }
                }
                let mut scale = 1.0;
                for a in term.iter_mut().take(last) {
                    let mut n = a.norm();
                    if leading_sign(a) < 0.0 {
                        n = -n;
                    }
                    *a /= n;
                    scale *= n;
                }
                term[last] *= scale;
            }
            lag.sort_by(|a, b| b[last].norm().total_cmp(&a[last].norm()));
        }
        Ok(Self {
            spec: self.spec.clone(),
            coeffs,
            noise: self.noise.normalized(),
        })
    }

    /// Permutes terms within each lag and flips paired signs so the factors
    /// line up with `reference` as closely as possible. The represented
    /// operator is unchanged.
    pub fn align_to(&self, reference: &TenArModel) -> Self {
        let mut out = self.clone();
        if reference.spec != self.spec {
            return out;
        }
        let last = self.spec.modes() - 1;
        for (i, lag) in out.coeffs.iter_mut().enumerate() {
            let refs = &reference.coeffs[i];
            let perm = best_assignment(lag, refs);
            let mut permuted: Vec<Vec<DenseMatrix>> = perm.iter().map(|&j| lag[j].clone()).collect();
            for (term, target) in permuted.iter_mut().zip(refs) {
                for k in 0..last {
                    if term[k].dot(&target[k]) < 0.0 {
                        term[k] *= -1.0;
                        term[last] *= -1.0;
                    }
                }
            }
            *lag = permuted;
        }
        out
    }

    /// Stacks `vec(A_1^(11)), ..., vec(A_K^(11)), ..., vec(A_K^(pR_p))`.
    pub fn parameter_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.spec.parameter_len());
        for lag in &self.coeffs {
            for term in lag {
                for a in term {
                    v.extend_from_slice(a.as_slice());
                }
            }
        }
        DVector::from_vec(v)
    }

    /// Rank-based sufficient identifiability check for each lag (requires
    /// K >= 2).
    pub fn identifiability(&self) -> Result<Vec<LagIdentifiability>> {
        let modes = self.spec.modes();
        if modes < 2 {
            return Err(TenArError::InvalidArgument(
                "identifiability check needs at least two modes".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.spec.order());
        for (i, lag) in self.coeffs.iter().enumerate() {
            let terms = lag.len();
            let mut ranks = Vec::with_capacity(modes);
            let mut reason = None;
            for (k, &dk) in self.spec.dims().iter().enumerate() {
                if terms > dk * dk {
                    reason.get_or_insert_with(|| {
                        format!("{terms} terms exceed d_{}^2 = {}", k + 1, dk * dk)
                    });
                }
                let cols: Vec<DVector<f64>> = lag
                    .iter()
                    .map(|t| DVector::from_column_slice(t[k].as_slice()))
                    .collect();
                ranks.push(numerical_rank(&DenseMatrix::from_columns(&cols))?);
            }
            let full_rank = ranks.iter().all(|&r| r == terms);
            if !full_rank && reason.is_none() {
                reason = Some(format!("factor ranks {ranks:?} below {terms}"));
            }
            let orthogonality_residual = (modes == 2).then(|| {
                let mut worst: f64 = 0.0;
                for k in 0..modes {
                    for r in 0..terms {
                        for l in 0..terms {
                            if r != l {
                                worst = worst.max(lag[r][k].dot(&lag[l][k]).abs());
                            }
                        }
                    }
                }
                worst
            });
            let orthogonal = orthogonality_residual.is_none_or(|w| w <= RANK_TOL);
            if full_rank && !orthogonal {
                reason = Some(format!(
                    "terms are not orthogonal (residual {:e})",
                    orthogonality_residual.unwrap_or(0.0)
                ));
            }
            out.push(LagIdentifiability {
                lag: i,
                terms,
                ranks,
                orthogonality_residual,
                sufficient: full_rank && orthogonal && reason.is_none(),
                reason,
            });
        }
        Ok(out)
    }
}

/// Builds the companion matrix of `x_t = sum_i Φ_i x_{t-i} + e_t`.
pub fn companion_matrix(phis: &[DenseMatrix]) -> DenseMatrix {
    let p = phis.len();
    let d = phis[0].nrows();
    let mut c = DenseMatrix::zeros(p * d, p * d);
    for (i, phi) in phis.iter().enumerate() {
        c.view_mut((0, i * d), (d, d)).copy_from(phi);
    }
    for i in 1..p {
        c.view_mut((i * d, (i - 1) * d), (d, d))
            .copy_from(&DenseMatrix::identity(d, d));
    }
    c
}

fn leading_sign(a: &DenseMatrix) -> f64 {
    a.iter()
        .find(|x| x.abs() > SIGN_THRESHOLD)
        .map_or(1.0, |x| x.signum())
}

fn numerical_rank(m: &DenseMatrix) -> Result<usize> {
    let svd = linalg::svd_sorted(m)?;
    let top = svd.s.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(svd.s.iter().filter(|&&s| s > RANK_TOL * top).count())
}

/// Term assignment maximizing factor similarity (exhaustive for small R,
/// greedy beyond).
fn best_assignment(est: &[Vec<DenseMatrix>], refs: &[Vec<DenseMatrix>]) -> Vec<usize> {
    let n = est.len();
    let sim = |a: &[DenseMatrix], b: &[DenseMatrix]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let nn = x.norm() * y.norm();
                if nn == 0.0 {
                    0.0
                } else {
                    x.dot(y).abs() / nn
                }
            })
            .sum()
    };
    let score: Vec<Vec<f64>> = refs
        .iter()
        .map(|r| est.iter().map(|e| sim(e, r)).collect())
        .collect();
    if n <= 6 {
        let mut best = (f64::NEG_INFINITY, (0..n).collect::<Vec<_>>());
        let mut perm: Vec<usize> = (0..n).collect();
        permutations(&mut perm, 0, &mut |p| {
            let s: f64 = p.iter().enumerate().map(|(r, &j)| score[r][j]).sum();
            if s > best.0 {
                best = (s, p.to_vec());
            }
        });
        best.1
    } else {
        let mut used = vec![false; n];
        (0..n)
            .map(|r| {
                let j = (0..n)
                    .filter(|&j| !used[j])
                    .max_by(|&a, &b| score[r][a].total_cmp(&score[r][b]))
                    .expect("unused term left");
                used[j] = true;
                j
            })
            .collect()
    }
}

fn permutations(p: &mut Vec<usize>, start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permutations(p, start + 1, f);
        p.swap(start, i);
    }
}

//! Low-rank CP approximation of a tensor.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TenArError};
use crate::linalg;
use crate::simulate::rng_for;
use crate::tensor::{DenseMatrix, DenseTensor};

const MAX_ITERS: usize = 1000;
const ITER_TOL: f64 = 1e-12;

/// `sum_r weights[r] * factors[r][0] ∘ ... ∘ factors[r][K-1]` with unit
/// factor vectors and weights in descending order.
#[derive(Clone, Debug)]
pub struct CpDecomposition {
    pub weights: Vec<f64>,
    pub factors: Vec<Vec<DVector<f64>>>,
    /// `||t - approximation||_F`.
    pub residual: f64,
}

impl CpDecomposition {
    pub fn reconstruct(&self, dims: &[usize]) -> DenseTensor {
        let mut out = DenseTensor::zeros(dims);
        for (w, vs) in self.weights.iter().zip(&self.factors) {
            let slices: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
            out.axpy(*w, &DenseTensor::outer(&slices));
        }
        out
    }
}

/// Best rank-`rank` approximation: truncated SVD for matrices, CP-ALS with
/// one HOSVD start plus `restarts` random starts for higher orders.
pub fn cp_rank_r(t: &DenseTensor, rank: usize, restarts: usize, seed: u64) -> Result<CpDecomposition> {
    let dims = t.dims();
    let total = t.len();
    if rank == 0 {
        return Err(TenArError::InvalidArgument("CP rank must be at least 1".into()));
    }
    if let Some((k, &n)) = dims.iter().enumerate().find(|(_, &n)| rank > total / n) {
        return Err(TenArError::InvalidArgument(format!(
            "rank {rank} exceeds the {} columns of the mode-{k} unfolding (dims {dims:?}, n_k = {n})",
            total / n
        )));
    }
    let mut out = match dims.len() {
        1 => {
            let norm = t.frobenius_norm();
            let v = if norm > 0.0 {
                DVector::from_column_slice(t.data()) / norm
            } else {
                let mut e = DVector::zeros(t.len());
                e[0] = 1.0;
                e
            };
            CpDecomposition {
                weights: vec![norm],
                factors: vec![vec![v]],
                residual: 0.0,
            }
        }
        2 => truncated_svd(t, rank)?,
        _ => cp_als_best(t, rank, restarts, seed)?,
    };
    out.residual = t.sub(&out.reconstruct(dims)).frobenius_norm();
    Ok(out)
}

fn truncated_svd(t: &DenseTensor, rank: usize) -> Result<CpDecomposition> {
    let m = t.matricize(0)?;
    let svd = linalg::svd_sorted(&m)?;
    let weights = svd.s.iter().take(rank).copied().collect();
    let factors = (0..rank)
        .map(|r| vec![svd.u.column(r).into_owned(), svd.v.column(r).into_owned()])
        .collect();
    Ok(CpDecomposition {
        weights,
        factors,
        residual: 0.0,
    })
}

fn cp_als_best(t: &DenseTensor, rank: usize, restarts: usize, seed: u64) -> Result<CpDecomposition> {
    let mut starts = vec![hosvd_start(t, rank, seed)?];
    for s in 0..restarts {
        let mut rng = rng_for(seed, 100 + s as u64);
        starts.push(
            t.dims()
                .iter()
                .map(|&n| DenseMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(&mut rng)))
                .collect(),
        );
    }
    let mut best: Option<(f64, Vec<DenseMatrix>)> = None;
    for start in starts {
        let (fit, factors) = cp_als(t, start)?;
        if best.as_ref().is_none_or(|(b, _)| fit < *b) {
            best = Some((fit, factors));
        }
    }
    let (_, factors) = best.expect("at least the HOSVD start");
    Ok(to_decomposition(&factors, rank))
}

fn hosvd_start(t: &DenseTensor, rank: usize, seed: u64) -> Result<Vec<DenseMatrix>> {
    let mut rng = rng_for(seed, 99);
    (0..t.order())
        .map(|k| {
            let svd = linalg::svd_sorted(&t.matricize(k)?)?;
            let n = t.dims()[k];
            Ok(DenseMatrix::from_fn(n, rank, |i, r| {
                if r < svd.u.ncols() {
                    svd.u[(i, r)]
                } else {
                    StandardNormal.sample(&mut rng)
                }
            }))
        })
        .collect()
}

/// Khatri-Rao product of every factor but `skip`, with earlier modes varying
/// fastest to match the unfolding column order.
fn khatri_rao(factors: &[DenseMatrix], skip: usize) -> DenseMatrix {
    let rank = factors[0].ncols();
    let mut kr = DenseMatrix::from_element(1, rank, 1.0);
    for (s, u) in factors.iter().enumerate() {
        if s == skip {
            continue;
        }
        let rows = kr.nrows();
        let mut next = DenseMatrix::zeros(rows * u.nrows(), rank);
        for r in 0..rank {
            for b in 0..u.nrows() {
                for a in 0..rows {
                    next[(a + rows * b, r)] = kr[(a, r)] * u[(b, r)];
                }
            }
        }
        kr = next;
    }
    kr
}

/// Alternating least squares from `factors`; returns the final squared
/// residual and the factors.
fn cp_als(t: &DenseTensor, mut factors: Vec<DenseMatrix>) -> Result<(f64, Vec<DenseMatrix>)> {
    let order = t.order();
    let rank = factors[0].ncols();
    let unfoldings: Vec<DenseMatrix> = (0..order).map(|k| t.matricize(k)).collect::<Result<_>>()?;
    let norm_sq = t.norm_squared();
    let mut prev = f64::INFINITY;
    let mut fit = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        for k in 0..order {
            let m = &unfoldings[k] * khatri_rao(&factors, k);
            let mut v = DenseMatrix::from_element(rank, rank, 1.0);
            for (s, u) in factors.iter().enumerate() {
                if s != k {
                    v.component_mul_assign(&(u.transpose() * u));
                }
            }
            let shift = 1e-14 * v.trace().max(f64::MIN_POSITIVE) / rank as f64;
            for i in 0..rank {
                v[(i, i)] += shift;
            }
            let uk = match linalg::solve_right_spd(&v, &m, "CP normal equations") {
                Ok(u) => u,
                Err(_) => &m * v.clone().pseudo_inverse(1e-14).map_err(|e| TenArError::Singular(e.into()))?,
            };
            if k == order - 1 {
                let inner: f64 = m.component_mul(&uk).sum();
                let gram = v.component_mul(&(uk.transpose() * &uk));
                fit = (norm_sq - 2.0 * inner + gram.sum()).max(0.0);
            }
            factors[k] = uk;
        }
        // Keep column scales balanced so nothing over- or underflows.
        balance(&mut factors);
        if (prev - fit).abs() <= ITER_TOL * norm_sq || fit <= ITER_TOL * norm_sq {
            break;
        }
        prev = fit;
    }
    Ok((fit, factors))
}

fn balance(factors: &mut [DenseMatrix]) {
    let order = factors.len() as f64;
    for r in 0..factors[0].ncols() {
        let norms: Vec<f64> = factors.iter().map(|u| u.column(r).norm()).collect();
        if norms.iter().any(|&n| n == 0.0) {
            continue;
        }
        let geo = norms.iter().map(|n| n.ln()).sum::<f64>() / order;
        for (u, n) in factors.iter_mut().zip(&norms) {
            let mut col = u.column_mut(r);
            col *= geo.exp() / n;
        }
    }
}

fn to_decomposition(factors: &[DenseMatrix], rank: usize) -> CpDecomposition {
    let mut comps: Vec<(f64, Vec<DVector<f64>>)> = (0..rank)
        .map(|r| {
            let mut w = 1.0;
            let vs = factors
                .iter()
                .map(|u| {
                    let c = u.column(r).into_owned();
                    let n = c.norm();
                    w *= n;
                    if n > 0.0 {
                        c / n
                    } else {
                        c
                    }
                })
                .collect();
            (w, vs)
        })
        .collect();
    comps.sort_by(|a, b| b.0.total_cmp(&a.0));
    CpDecomposition {
        weights: comps.iter().map(|c| c.0).collect(),
        factors: comps.into_iter().map(|c| c.1).collect(),
        residual: 0.0,
    }
}

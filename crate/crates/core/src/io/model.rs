use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TenArError};
use crate::model::{ModelSpec, NoiseSpec, TenArModel};
use crate::tensor::DenseMatrix;

use super::{read_bytes, write_atomic};

pub const MODEL_FORMAT: &str = "tenar-model";
pub const MODEL_VERSION: u32 = 1;

/// Matrices are stored as lists of rows.
type Rows = Vec<Vec<f64>>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    dims: Vec<usize>,
    kranks: Vec<usize>,
    /// `coefficients[lag][term][mode]`.
    coefficients: Vec<Vec<Vec<Rows>>>,
    noise: NoiseDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum NoiseDoc {
    Identity,
    Dense { matrix: Rows },
    Separable { factors: Vec<Rows> },
}

fn to_rows(m: &DenseMatrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &Rows, key: &str) -> Result<DenseMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(TenArError::InvalidArgument(format!("{key}: empty matrix")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != m) {
        return Err(TenArError::InvalidArgument(format!(
            "{key}[{i}]: row has {} entries, expected {m}",
            rows[i].len()
        )));
    }
    Ok(DenseMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn model_to_json(m: &TenArModel) -> String {
    let doc = ModelDoc {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        dims: m.spec().dims().to_vec(),
        kranks: m.spec().kranks().to_vec(),
        coefficients: m
            .coeffs()
            .iter()
            .map(|lag| lag.iter().map(|term| term.iter().map(to_rows).collect()).collect())
            .collect(),
        noise: match m.noise() {
            NoiseSpec::Identity => NoiseDoc::Identity,
            NoiseSpec::Dense(s) => NoiseDoc::Dense { matrix: to_rows(s) },
            NoiseSpec::Separable(f) => NoiseDoc::Separable {
                factors: f.iter().map(to_rows).collect(),
            },
        },
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("model serializes");
    out.push('\n');
    out
}

/// Parses and validates a model document. Schema errors name the offending
/// key path; shape and covariance problems are reported after parsing.
pub fn model_from_json(text: &str, path: &str) -> Result<TenArModel> {
    let err = |msg: String| TenArError::format(path, msg);
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(MODEL_FORMAT) => {}
        other => return Err(err(format!("format must be {MODEL_FORMAT:?}, found {other:?}"))),
    }
    match value.get("version") {
        Some(v) if v.as_u64() == Some(MODEL_VERSION as u64) => {}
        Some(v) => {
            return Err(TenArError::UnsupportedVersion {
                found: v.to_string(),
                expected: MODEL_VERSION.to_string(),
            })
        }
        None => return Err(err("missing key version".into())),
    }
    let doc: ModelDoc = serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        err(format!("at {key}: {}", e.into_inner()))
    })?;

    let wrap = |e: TenArError| err(e.to_string());
    let spec = ModelSpec::new(doc.dims, doc.kranks).map_err(wrap)?;
    let mut coeffs = Vec::with_capacity(doc.coefficients.len());
    for (i, lag) in doc.coefficients.iter().enumerate() {
        let mut terms = Vec::with_capacity(lag.len());
        for (r, term) in lag.iter().enumerate() {
            let mats = term
                .iter()
                .enumerate()
                .map(|(k, rows)| from_rows(rows, &format!("coefficients[{i}][{r}][{k}]")))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            terms.push(mats);
        }
        coeffs.push(terms);
    }
    let noise = match &doc.noise {
        NoiseDoc::Identity => NoiseSpec::Identity,
        NoiseDoc::Dense { matrix } => NoiseSpec::Dense(from_rows(matrix, "noise.matrix").map_err(wrap)?),
        NoiseDoc::Separable { factors } => NoiseSpec::Separable(
            factors
                .iter()
                .enumerate()
                .map(|(k, rows)| from_rows(rows, &format!("noise.factors[{k}]")))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?,
        ),
    };
    TenArModel::new(spec, coeffs, noise).map_err(wrap)
}

pub fn write_model(path: &Path, m: &TenArModel) -> Result<()> {
    write_atomic(path, model_to_json(m).as_bytes())
}

pub fn read_model(path: &Path) -> Result<TenArModel> {
    let bytes = read_bytes(path)?;
    let name = path.display().to_string();
    let text = String::from_utf8(bytes).map_err(|e| TenArError::format(&name, e.to_string()))?;
    model_from_json(&text, &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{noise_cov, random_model, NoiseSetting};

    fn sample() -> TenArModel {
        let dims = vec![2, 3, 2];
        let spec = ModelSpec::new(dims.clone(), vec![2, 1]).unwrap();
        random_model(&spec, 0.8, 3)
            .unwrap()
            .normalize()
            .unwrap()
            .with_noise(noise_cov(NoiseSetting::III, &dims, 3))
            .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let back = model_from_json(&model_to_json(&m), "mem").unwrap();
        assert_eq!(back, m);
        let dense = m.clone().with_noise(NoiseSpec::Dense(m.noise().covariance(&[2, 3, 2]))).unwrap();
        assert_eq!(model_from_json(&model_to_json(&dense), "mem").unwrap(), dense);
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> Result<TenArModel> {
        let mut v: serde_json::Value = serde_json::from_str(&model_to_json(&sample())).unwrap();
        f(&mut v);
        model_from_json(&v.to_string(), "m.json")
    }

    #[test]
    fn rejects_non_psd_factor() {
        let e = edit(|v| v["noise"]["factors"][0] = serde_json::json!([[1.0, 0.0], [0.0, -1.0]]))
            .unwrap_err()
            .to_string();
        assert!(e.contains("m.json") && e.contains("positive semi-definite"), "{e}");
    }

    #[test]
    fn version_mismatch() {
        let e = edit(|v| v["version"] = serde_json::json!(2)).unwrap_err();
        assert!(matches!(e, TenArError::UnsupportedVersion { .. }), "{e}");
    }

    #[test]
    fn schema_errors_name_the_key() {
        let e = edit(|v| v["extra"] = serde_json::json!(1)).unwrap_err().to_string();
        assert!(e.contains("extra"), "{e}");
        let e = edit(|v| v["coefficients"][0][1][2][0][1] = serde_json::json!("x"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("coefficients[0][1][2][0][1]"), "{e}");
        let e = edit(|v| v["noise"]["kind"] = serde_json::json!("diagonal")).unwrap_err().to_string();
        assert!(e.contains("noise"), "{e}");
        let e = edit(|v| v["coefficients"][1][0][0] = serde_json::json!([[1.0]])).unwrap_err().to_string();
        assert!(e.contains("coefficient (1,0,0) is 1x1"), "{e}");
    }
}

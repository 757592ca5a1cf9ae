use std::path::Path;

use crate::error::{Result, TenArError};
use crate::series::TensorSeries;
use crate::tensor::DenseTensor;

use super::{read_bytes, write_atomic};

/// Layout tag: entries in column-major order (first index fastest), one
/// observation after another.
pub const LAYOUT: &str = "canonical-v1";
pub const BINARY_MAGIC: &[u8] = b"TENAR1\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesFormat {
    Csv,
    Binary,
}

impl std::str::FromStr for SeriesFormat {
    type Err = TenArError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "bin" | "binary" => Ok(Self::Binary),
            _ => Err(TenArError::InvalidArgument(format!(
                "unknown series format {s:?} (expected csv or bin)"
            ))),
        }
    }
}

impl SeriesFormat {
    /// `.bin` means binary; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => SeriesFormat::Binary,
            _ => SeriesFormat::Csv,
        }
    }
}

/// Multi-index of flat position `flat`, first index fastest.
fn unflatten(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .map(|&n| {
            let i = flat % n;
            flat /= n;
            i
        })
        .collect()
}

fn one_based(index: &[usize]) -> String {
    let parts: Vec<String> = index.iter().map(|i| (i + 1).to_string()).collect();
    format!("({})", parts.join(", "))
}

/// Long CSV: a `#` header line, a column header, then one row per cell.
/// Times and indices are 1-based; values carry 17 significant digits.
pub fn series_to_csv(series: &TensorSeries) -> String {
    let dims = series.dims();
    let dims_txt: Vec<String> = dims.iter().map(usize::to_string).collect();
    let mut out = format!(
        "# tenar layout={LAYOUT} K={} dims={} T={}\n",
        dims.len(),
        dims_txt.join(","),
        series.len()
    );
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=dims.len()).map(|k| format!("i{k}")));
    header.push("value".into());
    wtr.write_record(&header).expect("in-memory write");
    let mut row = Vec::with_capacity(dims.len() + 2);
    for (t, x) in series.iter().enumerate() {
        for (flat, v) in x.data().iter().enumerate() {
            row.clear();
            row.push((t + 1).to_string());
            row.extend(unflatten(flat, dims).iter().map(|i| (i + 1).to_string()));
            row.push(format!("{v:.16e}"));
            wtr.write_record(&row).expect("in-memory write");
        }
    }
    out.push_str(&String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("ascii"));
    out
}

struct Header {
    dims: Vec<usize>,
    t: usize,
}

fn parse_header(line: &str, path: &str) -> Result<Header> {
    let err = |msg: String| TenArError::format(format!("{path}:1"), msg);
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| err("expected a '# tenar ...' header line".into()))?;
    let mut tokens = body.split_whitespace();
    if tokens.next() != Some("tenar") {
        return Err(err("header must start with '# tenar'".into()));
    }
    let (mut layout, mut k, mut dims, mut t) = (None, None, None, None);
    for tok in tokens {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| err(format!("malformed header field {tok:?}")))?;
        let bad = |_| err(format!("malformed header value {key}={value}"));
        match key {
            "layout" => layout = Some(value.to_string()),
            "K" => k = Some(value.parse::<usize>().map_err(bad)?),
            "dims" => {
                dims = Some(
                    value
                        .split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(bad)?,
                )
            }
            "T" => t = Some(value.parse::<usize>().map_err(bad)?),
            _ => return Err(err(format!("unknown header field {key:?}"))),
        }
    }
    match layout.as_deref() {
        Some(LAYOUT) => {}
        Some(other) => {
            return Err(TenArError::UnsupportedVersion {
                found: other.into(),
                expected: LAYOUT.into(),
            })
        }
        None => return Err(err("header lacks layout".into())),
    }
    let dims = dims.ok_or_else(|| err("header lacks dims".into()))?;
    let t = t.ok_or_else(|| err("header lacks T".into()))?;
    if k != Some(dims.len()) {
        return Err(err(format!("K = {k:?} disagrees with {} dims", dims.len())));
    }
    if dims.contains(&0) || t == 0 {
        return Err(err("dims and T must be positive".into()));
    }
    Ok(Header { dims, t })
}

/// Parses the CSV layout written by [`series_to_csv`]; rows may come in any
/// order but every cell must appear exactly once.
pub fn series_from_csv(text: &str, path: &str) -> Result<TensorSeries> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let Header { dims, t } = parse_header(first.trim_end_matches('\r'), path)?;
    let k = dims.len();
    let d: usize = dims.iter().product();
    let total = t * d;
    let mut data = vec![0.0; total];
    // Line of the first row that filled each cell; 0 = not yet seen.
    let mut seen = vec![0u64; total];

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let at = |line: u64| format!("{path}:{}", line + 1);
    let headers = rdr
        .headers()
        .map_err(|e| TenArError::format(at(1), e.to_string()))?
        .clone();
    let mut expected = vec!["t".to_string()];
    expected.extend((1..=k).map(|i| format!("i{i}")));
    expected.push("value".into());
    if headers.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(TenArError::format(
            at(1),
            format!("column header must be {}", expected.join(",")),
        ));
    }

    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            TenArError::format(at(line), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != k + 2 {
            return Err(TenArError::format(
                at(line),
                format!("expected {} fields, found {}", k + 2, rec.len()),
            ));
        }
        let mut idx = Vec::with_capacity(k + 1);
        for (j, field) in rec.iter().take(k + 1).enumerate() {
            let v: usize = field.trim().parse().map_err(|_| {
                TenArError::format(at(line), format!("column {} is not a positive integer: {field:?}", expected[j]))
            })?;
            let upper = if j == 0 { t } else { dims[j - 1] };
            if v == 0 || v > upper {
                return Err(TenArError::format(
                    at(line),
                    format!("{} = {v} is out of range 1..={upper}", expected[j]),
                ));
            }
            idx.push(v - 1);
        }
        let value_txt = rec[k + 1].trim();
        let value: f64 = value_txt
            .parse()
            .map_err(|_| TenArError::format(at(line), format!("value {value_txt:?} is not a number")))?;
        let mut flat = 0;
        for j in (0..k).rev() {
            flat = flat * dims[j] + idx[j + 1];
        }
        let cell = idx[0] * d + flat;
        if seen[cell] != 0 {
            return Err(TenArError::format(
                at(line),
                format!(
                    "duplicate cell t = {}, index = {} (first given on line {})",
                    idx[0] + 1,
                    one_based(&idx[1..]),
                    seen[cell] + 1
                ),
            ));
        }
        seen[cell] = line;
        data[cell] = value;
        rows += 1;
    }
    if rows != total {
        let gap = seen.iter().position(|&l| l == 0).expect("fewer rows than cells");
        return Err(TenArError::format(
            path,
            format!(
                "expected {total} cells, found {rows}; missing t = {}, index = {}",
                gap / d + 1,
                one_based(&unflatten(gap % d, &dims))
            ),
        ));
    }
    build(dims, t, data)
}

fn build(dims: Vec<usize>, t: usize, data: Vec<f64>) -> Result<TensorSeries> {
    let d: usize = dims.iter().product();
    let obs = (0..t)
        .map(|s| DenseTensor::new(dims.clone(), data[s * d..(s + 1) * d].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    TensorSeries::new(dims, obs)
}

/// Magic, layout line, `K`, `dims`, `T` as little-endian `u64`, then the
/// values as little-endian `f64`.
pub fn series_to_binary(series: &TensorSeries) -> Vec<u8> {
    let dims = series.dims();
    let mut out = Vec::with_capacity(64 + 8 * series.len() * series.entries());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(LAYOUT.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&(dims.len() as u64).to_le_bytes());
    for &n in dims {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    out.extend_from_slice(&(series.len() as u64).to_le_bytes());
    for x in series.iter() {
        for v in x.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn series_from_binary(bytes: &[u8], path: &str) -> Result<TensorSeries> {
    let at = |offset: usize, msg: String| TenArError::format(format!("{path}@{offset}"), msg);
    if !bytes.starts_with(BINARY_MAGIC) {
        return Err(at(0, "missing TENAR1 magic".into()));
    }
    let mut pos = BINARY_MAGIC.len();
    let nl = bytes[pos..]
        .iter()
        .take(64)
        .position(|&b| b == b'\n')
        .ok_or_else(|| at(pos, "unterminated layout tag".into()))?;
    let layout = String::from_utf8_lossy(&bytes[pos..pos + nl]).into_owned();
    if layout != LAYOUT {
        return Err(TenArError::UnsupportedVersion {
            found: layout,
            expected: LAYOUT.into(),
        });
    }
    pos += nl + 1;
    let mut next_u64 = |what: &str| -> Result<usize> {
        let chunk = bytes
            .get(pos..pos + 8)
            .ok_or_else(|| at(pos, format!("file ends before {what}")))?;
        let v = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        pos += 8;
        usize::try_from(v).map_err(|_| at(pos - 8, format!("{what} = {v} is too large")))
    };
    let k = next_u64("K")?;
    if k == 0 || k > 64 {
        return Err(at(pos - 8, format!("implausible tensor order K = {k}")));
    }
    let dims = (0..k).map(|i| next_u64(&format!("d_{}", i + 1))).collect::<Result<Vec<_>>>()?;
    let t = next_u64("T")?;
    if dims.contains(&0) || t == 0 {
        return Err(at(pos, "dims and T must be positive".into()));
    }
    let d = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| at(pos, "dims overflow".into()))?;
    let need = t
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| at(pos, "size overflow".into()))?;
    let body = &bytes[pos..];
    if body.len() != need {
        return Err(at(
            pos,
            format!(
                "expected {} values ({need} bytes) after the header, found {} bytes",
                need / 8,
                body.len()
            ),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    build(dims, t, data)
}

/// Reads either format; files starting with the binary magic are binary.
pub fn read_series(path: &Path) -> Result<TensorSeries> {
    let bytes = read_bytes(path)?;
    let name = path.display().to_string();
    if bytes.starts_with(BINARY_MAGIC) {
        series_from_binary(&bytes, &name)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|e| TenArError::format(&name, format!("not UTF-8 text: {e}")))?;
        series_from_csv(&text, &name)
    }
}

pub fn write_series(path: &Path, series: &TensorSeries, format: SeriesFormat) -> Result<()> {
    match format {
        SeriesFormat::Csv => write_atomic(path, series_to_csv(series).as_bytes()),
        SeriesFormat::Binary => write_atomic(path, &series_to_binary(series)),
    }
}

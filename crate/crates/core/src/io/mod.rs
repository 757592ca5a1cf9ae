//! File formats: series (CSV or packed binary), model JSON and reports.

mod model;
mod report;
mod series;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TenArError};

pub use model::{model_from_json, model_to_json, read_model, write_model, MODEL_FORMAT, MODEL_VERSION};
pub use report::{
    fit_report_json, forecast_steps_csv, forecast_summary_csv, selection_report_json, write_text,
};
pub use series::{
    read_series, series_from_binary, series_from_csv, series_to_binary, series_to_csv, write_series,
    SeriesFormat, BINARY_MAGIC, LAYOUT,
};

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> TenArError {
    TenArError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| TenArError::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

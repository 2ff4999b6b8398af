//! File helpers shared by the commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ebm_core::data::save_image_grid;
use ebm_core::{Error, Result, Tensor};

pub const GRID_COLUMNS: usize = 10;

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// One value per line under a single header.
pub fn column_csv(header: &str, values: &[f64]) -> String {
    let mut s = format!("{header}\n");
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    s
}

/// Saves a batch of samples. Image batches (`[N,C,H,W]`) become a PNG grid;
/// anything else becomes a CSV with one state per row. Returns the file name
/// that was written.
pub fn save_samples(batch: &Tensor, dir: &Path, stem: &str) -> Result<String> {
    ensure_dir(dir)?;
    if batch.shape().len() == 4 {
        let name = format!("{stem}.png");
        save_image_grid(batch, GRID_COLUMNS, &dir.join(&name))?;
        Ok(name)
    } else {
        let name = format!("{stem}.csv");
        let n = batch.sample_len();
        let mut s: String = (0..n).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for x in batch.samples() {
            let row: Vec<String> = x.iter().map(f64::to_string).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        write_text(&dir.join(&name), &s)?;
        Ok(name)
    }
}

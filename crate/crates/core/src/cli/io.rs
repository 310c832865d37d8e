//! Image, matrix and CSV files, and all-or-nothing output staging.

use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma};

use super::CliError;
use crate::grid::{quantize_16bit, RealField, MAX_16BIT};
use crate::metrics::IterationRecord;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ImageKind {
    Png,
    Tiff,
}

impl ImageKind {
    pub fn extension(self) -> &'static str {
        match self {
            ImageKind::Png => "png",
            ImageKind::Tiff => "tif",
        }
    }

    fn format(self) -> ImageFormat {
        match self {
            ImageKind::Png => ImageFormat::Png,
            ImageKind::Tiff => ImageFormat::Tiff,
        }
    }
}

/// Loads a grayscale image (8- or 16-bit, PNG or TIFF) scaled to `[0, 1]`.
/// Color images are converted to luma.
pub fn read_image(path: &Path) -> Result<RealField, CliError> {
    let img = image::open(path)
        .map_err(|e| CliError::usage(format!("cannot read image {}: {e}", path.display())))?;
    let luma = img.to_luma16();
    let (w, h) = luma.dimensions();
    let samples = luma.into_raw().into_iter().map(|v| v as f64 / MAX_16BIT).collect();
    RealField::new(w as usize, h as usize, samples)
        .map_err(|e| CliError::usage(format!("image {}: {e}", path.display())))
}

/// Encodes a non-negative field as a 16-bit grayscale image, scaled so its
/// maximum is full scale.
pub fn encode_image(field: &RealField, kind: ImageKind) -> Result<Vec<u8>, CliError> {
    let q = quantize_16bit(field).map_err(CliError::solver)?;
    let raw: Vec<u16> = q.samples().iter().map(|&v| v as u16).collect();
    let buffer: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(field.width() as u32, field.height() as u32, raw)
            .expect("buffer length matches dimensions");
    let mut bytes = Cursor::new(Vec::new());
    buffer
        .write_to(&mut bytes, kind.format())
        .map_err(|e| CliError::io(format!("cannot encode image: {e}")))?;
    Ok(bytes.into_inner())
}

/// Lossless text form of a matrix: a commented header then one row per
/// line, values in shortest round-trip notation.
pub fn encode_matrix(field: &RealField, layout: &str) -> Vec<u8> {
    let mut out = format!(
        "# format_version = {FORMAT_VERSION}\n# width = {}\n# height = {}\n# layout = {layout}\n",
        field.width(),
        field.height()
    );
    for row in field.samples().chunks(field.width()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn read_matrix(path: &Path) -> Result<RealField, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read matrix {}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|msg| CliError::usage(format!("{}: {msg}", path.display())))
}

pub fn parse_matrix(text: &str) -> Result<RealField, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err("rows have unequal lengths".into());
    }
    let height = rows.len();
    RealField::new(width, height, rows.concat()).map_err(|e| e.to_string())
}

/// Trace rows with columns `scenario_id, iteration, residual, psnr_db`.
/// `psnr_db` is empty when no ground truth was supplied.
pub fn encode_traces<'a>(
    traces: impl IntoIterator<Item = (usize, &'a [IterationRecord])>,
) -> Result<Vec<u8>, CliError> {
    let mut out = format!("# format_version = {FORMAT_VERSION}\n").into_bytes();
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        writer
            .write_record(["scenario_id", "iteration", "residual", "psnr_db"])
            .map_err(csv_error)?;
        for (id, records) in traces {
            for r in records {
                let psnr = r.psf_psnr_db.map_or(String::new(), |p| p.to_string());
                writer
                    .write_record([id.to_string(), r.iteration.to_string(), r.residual.to_string(), psnr])
                    .map_err(csv_error)?;
            }
        }
        writer.flush().map_err(|e| CliError::io(e.to_string()))?;
    }
    Ok(out)
}

pub fn csv_error(e: csv::Error) -> CliError {
    CliError::io(format!("csv: {e}"))
}

/// Flat `key = value` run record, readable back through `--config`.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("format_version", FORMAT_VERSION);
        m.set("tool_version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.into_bytes()
    }
}

/// Output files held in memory until every one of them is ready.
#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file to a temporary next to its destination, then
    /// renames them into place. A failure while staging leaves no output
    /// behind.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut temps = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
            let mut tmp = staging_builder()
                .tempfile_in(&dir)
                .map_err(|e| CliError::io(format!("cannot stage {}: {e}", path.display())))?;
            tmp.write_all(bytes)
                .and_then(|_| tmp.flush())
                .map_err(|e| CliError::io(format!("cannot stage {}: {e}", path.display())))?;
            temps.push((tmp, path.clone()));
        }
        let mut written = Vec::with_capacity(temps.len());
        for (tmp, path) in temps {
            tmp.persist(&path)
                .map_err(|e| CliError::io(format!("cannot write {}: {}", path.display(), e.error)))?;
            written.push(path);
        }
        Ok(written)
    }
}

// Temporaries default to owner-only access; outputs should not.
fn staging_builder() -> tempfile::Builder<'static, 'static> {
    let mut builder = tempfile::Builder::new();
    builder.prefix(".sftip-");
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    builder
}

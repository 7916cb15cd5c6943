//! Output formats: resolved config, CSV time series, JSON reports and
//! binary checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::CliError;
use crate::binio;
use crate::dirac::TwistedSpinorField;
use crate::flow::{FlowState, SeriesRow};
use crate::geometry::{Geometry, MapField, SpinStructure};

/// Version tag of the output directory layout.
pub const OUTPUT_FORMAT: &str = "dhflow-output/1";
pub const CHECKPOINT_FORMAT: &str = "dhflow-checkpoint/1";

pub const CSV_HEADER: &str =
    "t,E_alpha,E_dirichlet,dissipation,gap_lambda,kernel_dim,psi_l2,map_residual,spinor_residual,event";

/// Seventeen significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn csv_line(row: &SeriesRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        fmt_f64(row.t),
        fmt_f64(row.energy_alpha),
        fmt_f64(row.dirichlet),
        fmt_f64(row.dissipation),
        fmt_opt(row.gap),
        row.kernel_dim.map(|k| k.to_string()).unwrap_or_default(),
        fmt_opt(row.psi_l2),
        fmt_f64(row.map_residual),
        fmt_opt(row.spinor_residual),
        row.event
    )
}

/// The time series, keeping every `stride`-th row, rows with events and the
/// last row.
pub fn series_csv(rows: &[SeriesRow], stride: usize) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        if i % stride == 0 || !row.event.is_empty() || i + 1 == rows.len() {
            let _ = writeln!(out, "{}", csv_line(row));
        }
    }
    out
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

/// Creates the output directory with the resolved config (which can be fed
/// back as `--config`), the format tag and a manifest.
pub fn prepare_output(config: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    let dir = config
        .output
        .directory
        .clone()
        .unwrap_or_else(|| PathBuf::from("dhflow-out"));
    create_dir(&dir)?;
    write_text(&dir.join("FORMAT"), &format!("{OUTPUT_FORMAT}\n"))?;
    write_json(&dir.join("resolved_config.json"), config)?;
    let manifest = serde_json::json!({
        "output_format": OUTPUT_FORMAT,
        "command": command,
        "seed": config.seed(),
        "config_hash": config.config_hash(),
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub t: f64,
    pub step: usize,
    pub alpha: f64,
    pub n1: usize,
    pub n2: usize,
    pub lengths: [f64; 2],
    pub spin: SpinStructure,
    pub ambient_dim: usize,
    pub config_hash: String,
    pub reference_energy: f64,
    pub has_spinor: bool,
    pub layout: String,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub u: MapField,
    pub psi: Option<TwistedSpinorField>,
}

pub fn write_checkpoint(
    path: &Path,
    state: &FlowState,
    geometry: &Geometry,
    config_hash: &str,
    reference_energy: f64,
) -> Result<(), CliError> {
    let d = &geometry.domain;
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        t: state.t,
        step: state.step,
        alpha: state.alpha,
        n1: d.n1(),
        n2: d.n2(),
        lengths: d.lengths(),
        spin: d.spin(),
        ambient_dim: geometry.q(),
        config_hash: config_hash.into(),
        reference_energy,
        has_spinor: state.psi.is_some(),
        layout: "u[node][A] then psi[node][s][A] as (re, im); node = i1 * n2 + i2".into(),
    };
    let mut payload = state.u.values().to_vec();
    if let Some(psi) = &state.psi {
        payload.reserve(2 * psi.values().len());
        for c in psi.values() {
            payload.push(c.re);
            payload.push(c.im);
        }
    }
    binio::write(path, &header, &payload).map_err(|e| io_error(path, e))
}

pub fn read_checkpoint(path: &Path, geometry: &Geometry) -> Result<Checkpoint, CliError> {
    let (header, payload): (CheckpointHeader, Vec<f64>) =
        binio::read(path).map_err(|e| io_error(path, e))?;
    let bad = |msg: String| CliError::Config {
        message: format!("checkpoint {}: {msg}", path.display()),
        line: None,
        column: None,
    };
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unknown format {}", header.format)));
    }
    let d = &geometry.domain;
    let q = geometry.q();
    if header.n1 != d.n1()
        || header.n2 != d.n2()
        || header.lengths != d.lengths()
        || header.spin != d.spin()
        || header.ambient_dim != q
    {
        return Err(bad(
            "grid, spin structure or target does not match the config".into(),
        ));
    }
    let nodes = geometry.nodes();
    let map_len = nodes * q;
    let expected = if header.has_spinor {
        map_len + 4 * nodes * q
    } else {
        map_len
    };
    if payload.len() != expected {
        return Err(bad(format!(
            "payload holds {} values, expected {expected}",
            payload.len()
        )));
    }
    let u = MapField::from_values(q, payload[..map_len].to_vec());
    let psi = header.has_spinor.then(|| {
        let values = payload[map_len..]
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        TwistedSpinorField::from_values(q, values)
    });
    Ok(Checkpoint { header, u, psi })
}

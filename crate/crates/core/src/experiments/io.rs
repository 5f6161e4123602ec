//! Records CSV, summaries JSON and panel CSV formats.
//!
//! A panel file starts with `# key=value` metadata lines (`period_s`,
//! `wavelength_m`, and optionally the truth `f_d_target`, `eta`, `v_rx`),
//! followed by the header `k,path_id,phase,aoa` and one row per frame and
//! path. `path_id` 0 is the LoS, 1 the target, 2.. the statics; `aoa` repeats
//! the path's measured AoA on every row.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{CellSummary, SweepAxis, TrialRecord};
use crate::error::{Error, Result};
use crate::phase_model::PhasePanel;

pub const RECORDS_HEADER: [&str; 9] = [
    "profile",
    "axis",
    "axis_value",
    "trial",
    "eps_fd",
    "eps_eta",
    "eps_v",
    "converged",
    "nls_micros",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORDS_HEADER)?;
    for r in records {
        w.write_record([
            r.profile.as_str().to_string(),
            r.axis.as_str().to_string(),
            r.axis_value.to_string(),
            r.trial.to_string(),
            opt(r.eps_fd),
            opt(r.eps_eta),
            opt(r.eps_v),
            r.converged.to_string(),
            opt(r.nls_micros),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        field
            .parse()
            .map(Some)
            .map_err(|_| Error::PanelFormat(format!("bad number {field:?}")))
    }
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != RECORDS_HEADER {
        return Err(Error::PanelFormat(format!(
            "unexpected records header {header:?}"
        )));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let bad = |what: &str| Error::PanelFormat(format!("bad {what} in {row:?}"));
        out.push(TrialRecord {
            profile: row[0].parse().map_err(|_| bad("profile"))?,
            axis: row[1].parse().map_err(|_| bad("axis"))?,
            axis_value: row[2].parse().map_err(|_| bad("axis_value"))?,
            trial: row[3].parse().map_err(|_| bad("trial"))?,
            eps_fd: parse_opt(&row[4])?,
            eps_eta: parse_opt(&row[5])?,
            eps_v: parse_opt(&row[6])?,
            converged: row[7].parse().map_err(|_| bad("converged"))?,
            nls_micros: parse_opt(&row[8])?,
        });
    }
    Ok(out)
}

pub fn write_records_file(path: &Path, records: &[TrialRecord]) -> Result<()> {
    write_records(std::fs::File::create(path)?, records)
}

pub fn write_summaries_file(path: &Path, summaries: &[CellSummary]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, summaries)?;
    writeln!(f)?;
    Ok(())
}

pub fn write_panel<W: Write>(mut out: W, panel: &PhasePanel, wavelength_m: f64) -> Result<()> {
    writeln!(out, "# period_s={}", panel.period_s)?;
    writeln!(out, "# wavelength_m={wavelength_m}")?;
    if let Some([f, eta, v]) = panel.true_theta {
        writeln!(out, "# f_d_target={f}")?;
        writeln!(out, "# eta={eta}")?;
        writeln!(out, "# v_rx={v}")?;
    }
    writeln!(out, "k,path_id,phase,aoa")?;
    for k in 0..panel.n_frames {
        for i in 0..panel.n_paths {
            writeln!(out, "{k},{i},{},{}", panel.phase(k, i), panel.aoa_meas[i])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Panel parsed from a file together with the wavelength it declares.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelFile {
    pub panel: PhasePanel,
    pub wavelength_m: f64,
}

pub fn read_panel<R: Read>(input: R) -> Result<PanelFile> {
    let reader = BufReader::new(input);
    let mut period = None;
    let mut wavelength = None;
    let mut truth = [None; 3];
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let bad = |msg: &str| Error::PanelFormat(format!("line {}: {msg}", lineno + 1));
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (key, value) = meta
                .split_once('=')
                .ok_or_else(|| bad("expected key=value"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad("non-numeric metadata"))?;
            match key.trim() {
                "period_s" => period = Some(value),
                "wavelength_m" => wavelength = Some(value),
                "f_d_target" => truth[0] = Some(value),
                "eta" => truth[1] = Some(value),
                "v_rx" => truth[2] = Some(value),
                _ => {}
            }
            continue;
        }
        if !seen_header {
            if line != "k,path_id,phase,aoa" {
                return Err(bad("expected header k,path_id,phase,aoa"));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        rows.push((
            fields[0].parse().map_err(|_| bad("bad k"))?,
            fields[1].parse().map_err(|_| bad("bad path_id"))?,
            fields[2].parse().map_err(|_| bad("bad phase"))?,
            fields[3].parse().map_err(|_| bad("bad aoa"))?,
        ));
    }
    let period = period.ok_or_else(|| Error::PanelFormat("missing period_s".into()))?;
    let wavelength = wavelength.ok_or_else(|| Error::PanelFormat("missing wavelength_m".into()))?;
    let n_frames = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n_paths = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != n_frames * n_paths {
        return Err(Error::PanelFormat(format!(
            "{} rows do not fill a {n_frames} x {n_paths} panel",
            rows.len()
        )));
    }
    let mut phases = vec![f64::NAN; n_frames * n_paths];
    let mut aoa = vec![f64::NAN; n_paths];
    for (k, i, ph, a) in rows {
        let slot = &mut phases[k * n_paths + i];
        if !slot.is_nan() {
            return Err(Error::PanelFormat(format!(
                "duplicate entry k={k} path_id={i}"
            )));
        }
        *slot = ph;
        aoa[i] = a;
    }
    let true_theta = match truth {
        [Some(f), Some(e), Some(v)] => Some([f, e, v]),
        _ => None,
    };
    let panel = PhasePanel {
        n_frames,
        period_s: period,
        n_paths,
        phases,
        aoa_meas: aoa,
        true_theta,
        path_gains: Vec::new(),
    };
    panel.validate()?;
    Ok(PanelFile {
        panel,
        wavelength_m: wavelength,
    })
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis {s:?}")))
    }
}

//! CSV and JSON files. Floats are written as `{:.16e}` (17 significant
//! digits), which parses back to the identical `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{FieldGrid, FieldMeta};
use crate::branch::{BranchPoint, BranchState};
use crate::dispersion::DispersionScan;
use crate::error::{Error, Result};
use crate::seqalg::OddSpectrum;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not an integer: {s:?}")))
}

const FIXED: [&str; 4] = ["eps", "lambda", "residual", "iters"];

/// Writes a branch file. Mode-grid points go to sibling files
/// `<stem>_pNNN.csv` (columns `y, u_1..u_K`) referenced from the
/// `mode_grid` column; `ys` gives their node positions.
pub fn write_branch_csv(path: &Path, points: &[BranchPoint], ys: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k_max = points.iter().find_map(|p| p.spectrum().map(OddSpectrum::k_max));
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    match k_max {
        Some(k) => header.extend((1..=k).map(|i| format!("a_{i}"))),
        None => header.push("mode_grid".into()),
    }
    w.write_record(&header)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("branch");
    for (idx, p) in points.iter().enumerate() {
        let mut rec = vec![fmt_f64(p.eps), fmt_f64(p.lambda), fmt_f64(p.residual_norm), p.newton_iters.to_string()];
        match &p.state {
            BranchState::Spectrum(a) => {
                if Some(a.k_max()) != k_max {
                    return Err(Error::Mismatch { left: a.k_max(), right: k_max.unwrap_or(0) });
                }
                rec.extend(a.coeffs().iter().map(|&v| fmt_f64(v)));
            }
            BranchState::ModeGrid { values } => {
                let ys = ys.ok_or_else(|| Error::Parse("mode-grid export needs node positions".into()))?;
                let name = format!("{stem}_p{idx:03}.csv");
                write_mode_grid(&path.with_file_name(&name), ys, values)?;
                rec.push(name);
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_mode_grid(path: &Path, ys: &[f64], values: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend((1..=values.len()).map(|k| format!("u_{k}")));
    w.write_record(&header)?;
    for (j, &y) in ys.iter().enumerate() {
        let mut rec = vec![fmt_f64(y)];
        for row in values {
            let v = row.get(j).ok_or(Error::Mismatch { left: row.len(), right: ys.len() })?;
            rec.push(fmt_f64(*v));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_mode_grid(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let k_max = r.headers()?.len().saturating_sub(1);
    let mut values = vec![Vec::new(); k_max];
    for rec in r.records() {
        let rec = rec?;
        for (k, row) in values.iter_mut().enumerate() {
            row.push(parse_f64(&rec[k + 1])?);
        }
    }
    Ok(values)
}

/// Reads a branch file. Newton histories are not stored; each point gets
/// `[residual]` as history and a zero truncation residual.
pub fn read_branch_csv(path: &Path) -> Result<Vec<BranchPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 5 || header[..4] != FIXED {
        return Err(Error::Parse(format!("unexpected branch header {header:?}")));
    }
    let grid_ref = header[4] == "mode_grid";
    if !grid_ref {
        for (i, h) in header[4..].iter().enumerate() {
            if *h != format!("a_{}", i + 1) {
                return Err(Error::Parse(format!("unexpected column {h:?}")));
            }
        }
    }
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let residual = parse_f64(&rec[2])?;
        let state = if grid_ref {
            BranchState::ModeGrid { values: read_mode_grid(&dir.join(&rec[4]))? }
        } else {
            BranchState::Spectrum(OddSpectrum::from_coeffs(
                rec.iter().skip(4).map(parse_f64).collect::<Result<Vec<_>>>()?,
            ))
        };
        out.push(BranchPoint {
            eps: parse_f64(&rec[0])?,
            lambda: parse_f64(&rec[1])?,
            state,
            residual_norm: residual,
            newton_iters: parse_usize(&rec[3])?,
            history: vec![residual],
            truncation_residual: 0.0,
        });
    }
    Ok(out)
}

/// Field matrix: first row `y\x, x_0..`, then one row per `y_j`.
/// Metadata and `λ` go to a sibling `.json` file.
pub fn write_field(path: &Path, field: &FieldGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y\\x".to_string()];
    header.extend(field.x_nodes.iter().map(|&x| fmt_f64(x)));
    w.write_record(&header)?;
    for (j, &y) in field.y_nodes.iter().enumerate() {
        let mut rec = vec![fmt_f64(y)];
        rec.extend(field.values.iter().map(|col| fmt_f64(col[j])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_json(&path.with_extension("json"), &FieldSidecar { lambda: field.lambda, meta: field.meta.clone() })
}

#[derive(Serialize, serde::Deserialize)]
struct FieldSidecar {
    lambda: f64,
    meta: FieldMeta,
}

pub fn read_field(path: &Path) -> Result<FieldGrid> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = r.records();
    let header = rows.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
    let x_nodes = header.iter().skip(1).map(parse_f64).collect::<Result<Vec<_>>>()?;
    let mut y_nodes = Vec::new();
    let mut values = vec![Vec::new(); x_nodes.len()];
    for rec in rows {
        let rec = rec?;
        if rec.len() != x_nodes.len() + 1 {
            return Err(Error::Mismatch { left: rec.len(), right: x_nodes.len() + 1 });
        }
        y_nodes.push(parse_f64(&rec[0])?);
        for (col, v) in values.iter_mut().zip(rec.iter().skip(1)) {
            col.push(parse_f64(v)?);
        }
    }
    let side: FieldSidecar = read_json(&path.with_extension("json"))?;
    Ok(FieldGrid { x_nodes, y_nodes, values, lambda: side.lambda, meta: side.meta })
}

/// Long-format scan: `k, lambda, A`.
pub fn write_scan_csv(path: &Path, scan: &DispersionScan) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "lambda", "A"])?;
    for (k, row) in scan.ks.iter().zip(&scan.residuals) {
        for (l, a) in scan.lambdas.iter().zip(row) {
            w.write_record([k.to_string(), fmt_f64(*l), fmt_f64(*a)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON in declaration order of the serialized types.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldio::FieldSpec;
    use proptest::prelude::*;

    fn point(eps: f64, coeffs: Vec<f64>) -> BranchPoint {
        BranchPoint {
            eps,
            lambda: -0.5 * eps * eps,
            state: BranchState::Spectrum(OddSpectrum::from_coeffs(coeffs)),
            residual_norm: 3.0e-17,
            newton_iters: 3,
            history: vec![3.0e-17],
            truncation_residual: 0.0,
        }
    }

    proptest! {
        #[test]
        fn float_format_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(parse_f64(&fmt_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn spectral_branch_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let pts = vec![point(0.1, vec![0.1, 0.0, 1.0 / 3.0]), point(-0.2, vec![-0.2, 1e-300, std::f64::consts::PI])];
        write_branch_csv(&path, &pts, None).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("eps,lambda,residual,iters,a_1,a_2,a_3\n"));
        assert_eq!(read_branch_csv(&path).unwrap(), pts);
    }

    #[test]
    fn mode_grid_branch_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.csv");
        let ys = vec![-0.5, 0.0, 0.5];
        let mut p = point(0.1, vec![]);
        p.state = BranchState::ModeGrid { values: vec![vec![0.1, 0.2, 0.1], vec![0.0, -1e-5, 0.0]] };
        write_branch_csv(&path, std::slice::from_ref(&p), Some(&ys)).unwrap();
        assert!(dir.path().join("reg_p000.csv").exists());
        assert_eq!(read_branch_csv(&path).unwrap(), vec![p]);
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        fs::write(&path, "eps,lam,residual,iters,a_1\n0,0,0,0,0\n").unwrap();
        assert!(matches!(read_branch_csv(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let fs_ = FieldSpec { n_x: 4, y_max: 1.0, n_y: 3 };
        let field = FieldGrid {
            x_nodes: fs_.x_nodes(),
            y_nodes: fs_.y_nodes(),
            values: (0..4).map(|i| (0..5).map(|j| (i * 5 + j) as f64 / 7.0).collect()).collect(),
            lambda: -0.01,
            meta: FieldMeta { spec_digest: "abc".into(), eps: 0.1, k_max: 1 },
        };
        write_field(&path, &field).unwrap();
        let first = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert!(first.starts_with("y\\x,"));
        assert_eq!(read_field(&path).unwrap(), field);
    }
}

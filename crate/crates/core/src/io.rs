//! CSV and JSON artifacts: field and reduced snapshots, trajectory indexes,
//! radiation profiles.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldState, RadialGrid, ReducedState};
use crate::params::ModelParams;
use crate::radiation::{EtaGrid, RadiationProfile};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })
}

/// Renders a table with a header row; every cell is written in shortest
/// round-trip form.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::State(format!("csv encoding failed: {e}")))
}

/// Header line and numeric rows of a CSV file; empty cells read as NaN.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let parse_err = |message: String| Error::Parse { path: path.into(), message };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(format!("{other:?}")),
    })?;
    let header: Vec<String> = r.headers().map_err(|e| parse_err(e.to_string()))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let row = rec
            .iter()
            .map(|c| {
                if c.trim().is_empty() {
                    Ok(f64::NAN)
                } else {
                    c.trim().parse::<f64>().map_err(|_| parse_err(format!("line {}: bad number {c:?}", i + 2)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn expect_columns(path: &Path, header: &[String], want: &[&str]) -> Result<()> {
    if header.len() != want.len() || header.iter().zip(want).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("expected columns {}, found {}", want.join(","), header.join(",")),
        });
    }
    Ok(())
}

/// Rebuilds the grid from an `r` column, which must start at 0 and be evenly spaced.
fn grid_from_nodes(path: &Path, r: &[f64]) -> Result<RadialGrid> {
    let bad = |m: String| Error::Parse { path: path.into(), message: m };
    if r.len() < 2 || r[0] != 0.0 {
        return Err(bad("r column must start at 0 and hold at least two nodes".into()));
    }
    let n = r.len() - 1;
    let grid = RadialGrid::new(r[n], n)?;
    for (j, &x) in r.iter().enumerate() {
        if (x - grid.r(j)).abs() > 1e-9 * grid.r_max {
            return Err(bad(format!("r column is not evenly spaced at row {}", j + 2)));
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateHeader {
    pub schema_version: u32,
    pub t: f64,
    pub params: ModelParams,
    pub grid: RadialGrid,
}

fn header_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn field_state_csv(state: &FieldState, grid: &RadialGrid) -> Result<Vec<u8>> {
    csv_bytes(&["r", "u", "ut"], (0..grid.len()).map(|j| vec![grid.r(j), state.u[j], state.ut[j]]))
}

pub fn reduced_state_csv(state: &ReducedState, grid: &RadialGrid) -> Result<Vec<u8>> {
    csv_bytes(
        &["r", "w", "v_plus", "v_minus"],
        (0..grid.len()).map(|j| vec![grid.r(j), state.w[j], state.v_plus[j], state.v_minus[j]]),
    )
}

/// `path` (columns `r,u,ut`) plus a JSON header next to it.
pub fn write_field_state(path: &Path, state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> Result<()> {
    write_atomic(path, &field_state_csv(state, grid)?)?;
    let header = StateHeader { schema_version: SCHEMA_VERSION, t: state.t, params: *params, grid: *grid };
    write_json(&header_path(path), &header)
}

/// Reads a `r,u,ut` file; `t` comes from the JSON header when present, else 0.
pub fn read_field_state(path: &Path) -> Result<(FieldState, RadialGrid)> {
    let (header, rows) = read_csv(path)?;
    expect_columns(path, &header, &["r", "u", "ut"])?;
    let r: Vec<f64> = rows.iter().map(|x| x[0]).collect();
    let grid = grid_from_nodes(path, &r)?;
    let hp = header_path(path);
    let t = if hp.exists() { read_json::<StateHeader>(&hp)?.t } else { 0.0 };
    let state = FieldState { t, u: rows.iter().map(|x| x[1]).collect(), ut: rows.iter().map(|x| x[2]).collect() };
    state.check(&grid)?;
    Ok((state, grid))
}

pub fn write_reduced_state(path: &Path, state: &ReducedState, grid: &RadialGrid, params: &ModelParams) -> Result<()> {
    write_atomic(path, &reduced_state_csv(state, grid)?)?;
    let header = StateHeader { schema_version: SCHEMA_VERSION, t: state.t, params: *params, grid: *grid };
    write_json(&header_path(path), &header)
}

pub fn read_reduced_state(path: &Path) -> Result<(ReducedState, RadialGrid)> {
    let (header, rows) = read_csv(path)?;
    expect_columns(path, &header, &["r", "w", "v_plus", "v_minus"])?;
    let r: Vec<f64> = rows.iter().map(|x| x[0]).collect();
    let grid = grid_from_nodes(path, &r)?;
    let hp = header_path(path);
    let t = if hp.exists() { read_json::<StateHeader>(&hp)?.t } else { 0.0 };
    let col = |k: usize| rows.iter().map(|x| x[k]).collect::<Vec<f64>>();
    Ok((ReducedState { t, w: col(1), v_plus: col(2), v_minus: col(3) }, grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub t: f64,
    pub file: String,
}

/// Index of a trajectory export: one CSV per snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryIndex {
    pub schema_version: u32,
    pub code_version: String,
    pub solver: String,
    pub columns: Vec<String>,
    pub params: ModelParams,
    pub grid: RadialGrid,
    pub config: serde_json::Value,
    pub snapshots: Vec<IndexEntry>,
}

/// Writes `dir/snap_XXXXX.csv` for each state plus `dir/index.json`.
pub fn write_field_trajectory<'a>(
    dir: &Path,
    states: impl IntoIterator<Item = &'a FieldState>,
    grid: &RadialGrid,
    params: &ModelParams,
    solver: &str,
    config: serde_json::Value,
) -> Result<TrajectoryIndex> {
    let mut entries = Vec::new();
    for (i, s) in states.into_iter().enumerate() {
        let file = format!("snap_{i:05}.csv");
        write_atomic(&dir.join(&file), &field_state_csv(s, grid)?)?;
        entries.push(IndexEntry { t: s.t, file });
    }
    let index = TrajectoryIndex {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        solver: solver.into(),
        columns: vec!["r".into(), "u".into(), "ut".into()],
        params: *params,
        grid: *grid,
        config,
        snapshots: entries,
    };
    write_json(&dir.join("index.json"), &index)?;
    Ok(index)
}

/// Same layout as [`write_field_trajectory`], with columns `r,w,v_plus,v_minus`.
pub fn write_reduced_trajectory<'a>(
    dir: &Path,
    states: impl IntoIterator<Item = &'a ReducedState>,
    grid: &RadialGrid,
    params: &ModelParams,
    config: serde_json::Value,
) -> Result<TrajectoryIndex> {
    let mut entries = Vec::new();
    for (i, s) in states.into_iter().enumerate() {
        let file = format!("snap_{i:05}.csv");
        write_atomic(&dir.join(&file), &reduced_state_csv(s, grid)?)?;
        entries.push(IndexEntry { t: s.t, file });
    }
    let index = TrajectoryIndex {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        solver: "char".into(),
        columns: ["r", "w", "v_plus", "v_minus"].iter().map(|s| s.to_string()).collect(),
        params: *params,
        grid: *grid,
        config,
        snapshots: entries,
    };
    write_json(&dir.join("index.json"), &index)?;
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileHeader {
    pub schema_version: u32,
    pub t_extract: Option<f64>,
    pub params: Option<ModelParams>,
    pub eta_min: f64,
    pub d_eta: f64,
    pub n: usize,
    pub norm_sq: f64,
    pub integral: f64,
    pub max_quality: f64,
}

/// `path` (columns `eta,g,quality`) plus a JSON header next to it.
pub fn write_profile(path: &Path, g: &RadiationProfile, params: Option<&ModelParams>) -> Result<()> {
    let bytes = csv_bytes(&["eta", "g", "quality"], (0..g.eta.len()).map(|i| vec![g.eta.eta(i), g.g[i], g.quality[i]]))?;
    write_atomic(path, &bytes)?;
    let header = ProfileHeader {
        schema_version: SCHEMA_VERSION,
        t_extract: g.t_extract,
        params: params.copied(),
        eta_min: g.eta.eta_min,
        d_eta: g.eta.d_eta,
        n: g.eta.n,
        norm_sq: g.norm_sq(),
        integral: g.integral(),
        max_quality: g.max_quality(),
    };
    write_json(&header_path(path), &header)
}

/// Reads an `eta,g[,quality]` file with evenly spaced `eta`.
pub fn read_profile(path: &Path) -> Result<RadiationProfile> {
    let (header, rows) = read_csv(path)?;
    let bad = |m: String| Error::Parse { path: path.into(), message: m };
    if header.len() < 2 || header[0] != "eta" || header[1] != "g" {
        return Err(bad(format!("expected columns eta,g[,quality], found {}", header.join(","))));
    }
    if rows.len() < 2 {
        return Err(bad("a profile needs at least two rows".into()));
    }
    let eta0 = rows[0][0];
    let d_eta = rows[1][0] - eta0;
    let n = rows.len() - 1;
    if !(d_eta > 0.0) {
        return Err(bad("eta must increase".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if (row[0] - (eta0 + i as f64 * d_eta)).abs() > 1e-9 * (1.0 + row[0].abs()) {
            return Err(bad(format!("eta is not evenly spaced at row {}", i + 2)));
        }
        if !row[1].is_finite() {
            return Err(bad(format!("non-finite g at row {}", i + 2)));
        }
    }
    let hp = header_path(path);
    let t_extract = if hp.exists() { read_json::<ProfileHeader>(&hp)?.t_extract } else { None };
    let eta = EtaGrid::new(eta0, rows[n][0], d_eta)?;
    if eta.len() != rows.len() {
        return Err(bad("eta column does not match its own spacing".into()));
    }
    Ok(RadiationProfile {
        eta,
        g: rows.iter().map(|r| r[1]).collect(),
        quality: rows.iter().map(|r| r.get(2).copied().filter(|q| q.is_finite()).unwrap_or(0.0)).collect(),
        t_extract,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams { d: 4, p: 7.0 / 3.0, zeta: -1 }
    }

    #[test]
    fn field_state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = RadialGrid::new(5.0, 50).unwrap();
        let s = FieldState::from_fns(&g, 1.25, |r| (-r * r).exp() / 3.0, |r| r.sin());
        let path = dir.path().join("s.csv");
        write_field_state(&path, &s, &g, &params()).unwrap();
        let (back, g2) = read_field_state(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(g2.len(), g.len());
        assert!((g2.h - g.h).abs() < 1e-15);
    }

    #[test]
    fn reduced_state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = RadialGrid::new(2.0, 20).unwrap();
        let mut s = ReducedState::zeros(&g, 0.5);
        s.w[3] = 0.1;
        s.v_plus[4] = -2.0 / 3.0;
        let path = dir.path().join("r.csv");
        write_reduced_state(&path, &s, &g, &params()).unwrap();
        assert_eq!(read_reduced_state(&path).unwrap().0, s);
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let eta = EtaGrid::new(-2.0, 3.0, 0.1).unwrap();
        let mut g = RadiationProfile::from_fn(eta, |e| (-e * e).exp());
        g.t_extract = Some(40.0);
        let path = dir.path().join("g.csv");
        write_profile(&path, &g, Some(&params())).unwrap();
        let back = read_profile(&path).unwrap();
        assert_eq!(back.g, g.g);
        assert_eq!(back.t_extract, Some(40.0));
        assert_eq!(back.eta.len(), g.eta.len());
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "r,u,ut\n0,1,0\n0.1,x,0\n").unwrap();
        assert!(matches!(read_field_state(&path), Err(Error::Parse { .. })));
        fs::write(&path, "r,u\n0,1\n").unwrap();
        assert!(matches!(read_field_state(&path), Err(Error::Parse { .. })));
        fs::write(&path, "eta,g\n0,1\n0.1,2\n0.3,1\n").unwrap();
        assert!(matches!(read_profile(&path), Err(Error::Parse { .. })));
        assert!(matches!(read_field_state(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/a.txt");
        write_atomic(&path, b"x").unwrap();
        let names: Vec<_> = fs::read_dir(dir.path().join("sub")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.txt")]);
    }
}

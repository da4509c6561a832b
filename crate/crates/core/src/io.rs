//! CSV and JSON file formats. All writes go through a temporary file and
//! a rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::WarpingGrid;
use crate::density::{truncate_normalize, DensityGrid, GridFunction, SupportInterval};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lqd::LqdFunction;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Digest over the relative names and contents of every file under `dir`,
/// visited in sorted order.
pub fn directory_digest(dir: &Path) -> Result<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                out.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(dir.join(&f)).map_err(|e| Error::io(dir.join(&f), e))?);
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

fn parse_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Reads a CSV with the given header into rows of floats (the first
/// `text_columns` columns are kept as text).
fn read_table(path: &Path, header: &[&str], text_columns: usize) -> Result<Vec<(Vec<String>, Vec<f64>)>> {
    let mut rdr = open_csv(path)?;
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}, found {}", header.join(","), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut text = Vec::with_capacity(text_columns);
        let mut nums = Vec::with_capacity(header.len() - text_columns);
        for (i, field) in rec.iter().enumerate() {
            if i < text_columns {
                text.push(field.to_owned());
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {} is not a number: {field:?}", header[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {} is not finite", header[i]),
                });
            }
            nums.push(v);
        }
        rows.push((text, nums));
    }
    Ok(rows)
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Samples grouped by segment id, in order of first appearance.
pub type Segments = Vec<(String, Vec<f64>)>;

/// Reads `segment_id,value` rows, or a bare `value` column as one segment
/// with an empty id.
pub fn read_samples(path: &Path) -> Result<Segments> {
    let columns = open_csv(path)?
        .headers()
        .map_err(|e| parse_error(path, e))?
        .len();
    let rows = if columns == 1 {
        read_table(path, &["value"], 0)?
    } else {
        read_table(path, &["segment_id", "value"], 1)?
    };
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut out: Segments = Vec::new();
    for (text, nums) in rows {
        let id = text.into_iter().next().unwrap_or_default();
        let k = *index.entry(id.clone()).or_insert_with(|| {
            out.push((id, Vec::new()));
            out.len() - 1
        });
        out[k].1.push(nums[0]);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "no samples".into(),
        });
    }
    Ok(out)
}

pub fn write_samples(path: &Path, segments: &[(String, &[f64])]) -> Result<()> {
    let rows = segments
        .iter()
        .flat_map(|(id, vs)| vs.iter().map(move |v| vec![id.clone(), v.to_string()]));
    write_table(path, &["segment_id", "value"], rows)
}

/// Metadata stored next to a density CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DensitySidecar {
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub support: Option<SupportInterval>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub segment: Option<String>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn grid_column(path: &Path, ts: &[f64]) -> Result<Grid> {
    let grid = Grid::new(ts.len()).map_err(|_| Error::Format {
        path: path.to_path_buf(),
        message: format!("{} grid points is too few", ts.len()),
    })?;
    for (l, &t) in ts.iter().enumerate() {
        if (t - grid.node(l)).abs() > 1e-9 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("row {} has t = {t}, expected {}", l + 1, grid.node(l)),
            });
        }
    }
    Ok(grid)
}

fn two_columns(path: &Path, header: &[&str]) -> Result<(Grid, Vec<f64>)> {
    let rows = read_table(path, header, 0)?;
    let ts: Vec<f64> = rows.iter().map(|r| r.1[0]).collect();
    let grid = grid_column(path, &ts)?;
    Ok((grid, rows.into_iter().map(|r| r.1[1]).collect()))
}

/// Reads a `t,f` density CSV; values are renormalized to unit mass.
pub fn read_density(path: &Path) -> Result<DensityGrid> {
    let (grid, f) = two_columns(path, &["t", "f"])?;
    truncate_normalize(grid, &f).map_err(|e| match e {
        Error::InvalidDensity(message) => Error::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn write_density(path: &Path, f: &DensityGrid, sidecar: &DensitySidecar) -> Result<()> {
    let g = f.grid();
    write_table(
        path,
        &["t", "f"],
        f.values()
            .iter()
            .enumerate()
            .map(|(l, v)| vec![g.node(l).to_string(), v.to_string()]),
    )?;
    write_json(&sidecar_path(path), sidecar)
}

pub fn read_lqd(path: &Path) -> Result<LqdFunction> {
    let (grid, psi) = two_columns(path, &["t", "psi"])?;
    LqdFunction::new(grid, psi)
}

pub fn write_lqd(path: &Path, psi: &LqdFunction) -> Result<()> {
    let g = psi.grid();
    write_table(
        path,
        &["t", "psi"],
        psi.values()
            .iter()
            .enumerate()
            .map(|(l, v)| vec![g.node(l).to_string(), v.to_string()]),
    )
}

pub fn write_warping(path: &Path, w: &WarpingGrid) -> Result<()> {
    let g = w.grid();
    write_table(
        path,
        &["x", "gamma", "dgamma"],
        (0..g.len()).map(|l| {
            vec![
                g.node(l).to_string(),
                w.gamma()[l].to_string(),
                w.derivative()[l].to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_round_trip_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_samples(&p, &[("A".into(), &[0.1, 0.2][..]), ("B".into(), &[0.3][..])]).unwrap();
        let back = read_samples(&p).unwrap();
        assert_eq!(back, vec![("A".into(), vec![0.1, 0.2]), ("B".into(), vec![0.3])]);

        fs::write(&p, "segment_id,value\nA,0.1\nA,oops\n").unwrap();
        match read_samples(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "value\n0.5\n0.7\n").unwrap();
        assert_eq!(read_samples(&p).unwrap(), vec![(String::new(), vec![0.5, 0.7])]);
        fs::write(&p, "id,v\nA,0.1\n").unwrap();
        assert!(matches!(read_samples(&p), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            read_samples(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn density_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let g = Grid::new(101).unwrap();
        let f = DensityGrid::from_fn(g, |x| 1.0 + 0.5 * (x - 0.5)).unwrap();
        let side = DensitySidecar {
            grid_points: 101,
            alpha: Some(0.5),
            ..Default::default()
        };
        write_density(&p, &f, &side).unwrap();
        let back = read_density(&p).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let s: DensitySidecar = read_json(&sidecar_path(&p)).unwrap();
        assert_eq!(s, side);
    }

    #[test]
    fn digest_tracks_contents() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a.txt"), b"x").unwrap();
        write_atomic(&dir.path().join("sub/b.txt"), b"y").unwrap();
        let d1 = directory_digest(dir.path()).unwrap();
        assert_eq!(d1, directory_digest(dir.path()).unwrap());
        write_atomic(&dir.path().join("a.txt"), b"z").unwrap();
        assert_ne!(d1, directory_digest(dir.path()).unwrap());
    }
}

//! Observation series and ground-truth path files.

use anyhow::{anyhow, bail, Context, Result};
use ishmm::path::{FullState, LatentPath};
use std::io::{Read, Write};
use std::path::Path;

/// Parses one numeric column. A first row that is not a number is taken
/// as a header. With `integers` set every value must be a nonnegative
/// integer. Errors name the 1-based row.
pub fn parse_series(reader: impl Read, integers: bool) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.with_context(|| format!("row {row}"))?;
        if rec.len() != 1 {
            bail!("row {row}: expected one column, found {}", rec.len());
        }
        let field = &rec[0];
        let value = match field.parse::<f64>() {
            Ok(v) => v,
            Err(_) if row == 1 => continue,
            Err(_) => bail!("row {row}: `{field}` is not a number"),
        };
        if !value.is_finite() {
            bail!("row {row}: value must be finite");
        }
        if integers && (value < 0.0 || value.fract() != 0.0) {
            bail!("row {row}: `{field}` is not a nonnegative integer count");
        }
        ys.push(value);
    }
    if ys.is_empty() {
        bail!("series has no observations");
    }
    Ok(ys)
}

pub fn read_series(path: &Path, integers: bool) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_series(f, integers).with_context(|| format!("in {}", path.display()))
}

pub fn write_series(path: &Path, ys: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["y"])?;
    for y in ys {
        w.write_record([y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per time step: `t,state,remaining`.
pub fn write_path(path: &Path, z: &LatentPath) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["t", "state", "remaining"])?;
    for (t, s) in z.z.iter().enumerate() {
        w.write_record([t.to_string(), s.s.to_string(), s.r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path(path: &Path) -> Result<LatentPath> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut z = Vec::new();
    for (i, rec) in rdr.deserialize::<(usize, usize, usize)>().enumerate() {
        let (t, s, r) = rec.map_err(|e| anyhow!("{}: row {}: {e}", path.display(), i + 2))?;
        if t != i {
            bail!("{}: row {}: time {t} out of order", path.display(), i + 2);
        }
        z.push(FullState::new(s, r));
    }
    let z = LatentPath::new(z);
    z.validate()?;
    Ok(z)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

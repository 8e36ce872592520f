//! Trace ingestion, model documents and report files.
//!
//! CSV reports print floats with 17 significant digits so identical runs
//! give byte-identical files. JSON uses the shortest representation that
//! parses back to the same double.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::aggregate::ConvergenceRow;
use crate::counting::{CountingDist, SweepTable};
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::map2::{CanonicalMap2, Map2};
use crate::persistence::{PersistenceRow, SpellDist};
use crate::stats;

/// Inter-loss durations with optional aligned severities.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub severities: Option<Vec<f64>>,
    pub source: PathBuf,
}

impl Trace {
    pub fn n(&self) -> usize {
        self.times.len()
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .collect()
}

/// Rows of one or two nonnegative numbers. Blank lines and `#` comments are
/// skipped; a first line with no numeric field is taken as a header.
fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_fields(trimmed);
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if rows.is_empty() && width.is_none() && parsed.iter().all(Option::is_none) {
            width = Some(fields.len());
            continue;
        }
        let bad = || Error::Parse {
            line: lineno,
            text: line.clone(),
        };
        if fields.is_empty() || fields.len() > 2 {
            return Err(bad());
        }
        let values: Vec<f64> = parsed
            .into_iter()
            .map(|v| v.filter(|x| x.is_finite()).ok_or_else(bad))
            .collect::<Result<_>>()?;
        if let Some(&value) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::NegativeValue { line: lineno, value });
        }
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(bad());
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(rows)
}

/// Read a trace of inter-loss times, optionally with a second column of
/// severities, and log its mean, median, CV and maximum.
pub fn ingest(path: &Path) -> Result<Trace> {
    let rows = read_rows(path)?;
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let severities = (rows[0].len() == 2).then(|| rows.iter().map(|r| r[1]).collect());
    if times.len() > 1 {
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = stats::mean(&times);
        log::info!(
            "{}: n={} mean={:.4} median={:.4} cv={:.4} max={:.4}",
            path.display(),
            times.len(),
            mean,
            sorted[(sorted.len() - 1) / 2],
            stats::variance(&times).sqrt() / mean,
            sorted[sorted.len() - 1]
        );
    }
    Ok(Trace {
        times,
        severities,
        source: path.to_path_buf(),
    })
}

/// Read severities, one positive value per line.
pub fn ingest_severities(path: &Path) -> Result<Vec<f64>> {
    let rows = read_rows(path)?;
    if rows[0].len() != 1 {
        return Err(Error::InvalidArgument(
            "severity file must have one value per line".into(),
        ));
    }
    let values: Vec<f64> = rows.into_iter().map(|r| r[0]).collect();
    if let Some(&x) = values.iter().find(|v| **v <= 0.0) {
        return Err(Error::NonpositiveX(x));
    }
    Ok(values)
}

/// JSON form of a MAP₂: rate matrices plus optional canonical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub d0: Mat2,
    pub d1: Mat2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<CanonicalMap2>,
}

impl ModelDocument {
    pub fn from_map2(m: &Map2, canonical: Option<CanonicalMap2>) -> Self {
        ModelDocument {
            d0: m.d0(),
            d1: m.d1(),
            canonical,
        }
    }

    /// Validate the matrices; when canonical parameters are present they
    /// must expand to the same matrices.
    pub fn to_map2(&self) -> Result<Map2> {
        let m = Map2::new(self.d0, self.d1)?;
        if let Some(c) = &self.canonical {
            let (d0, d1) = c.matrices();
            let tol = 1e-12 * (m.d0().norm_inf() + 1.0);
            if d0.max_abs_diff(&m.d0()) > tol || d1.max_abs_diff(&m.d1()) > tol {
                return Err(Error::InvalidArgument(
                    "canonical parameters disagree with d0/d1".into(),
                ));
            }
        }
        Ok(m)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<Map2> {
    read_json::<ModelDocument>(path)?.to_map2()
}

/// Float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// Columns `s, quantity, analytic, empirical, n_events`; `empirical` is
/// empty when there was nothing to condition on.
pub fn write_persistence_csv(path: &Path, rows: &[PersistenceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["s", "quantity", "analytic", "empirical", "n_events"])?;
    for r in rows {
        w.write_record([
            fmt17(r.s),
            r.quantity.clone(),
            fmt17(r.analytic),
            r.empirical.map(fmt17).unwrap_or_default(),
            r.n_events.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `n, probability`; a final `residual` row carries the tail.
pub fn write_spells_csv(path: &Path, d: &SpellDist) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["n", "probability"])?;
    for (n, p) in d.mass.iter().enumerate() {
        w.write_record([n.to_string(), fmt17(*p)])?;
    }
    w.write_record(["residual".to_string(), fmt17(d.residual)])?;
    w.flush()?;
    Ok(())
}

/// Columns `n, probability` for the count law.
pub fn write_counting_csv(path: &Path, d: &CountingDist) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["n", "probability"])?;
    for (n, p) in d.mass.iter().enumerate() {
        w.write_record([n.to_string(), fmt17(*p)])?;
    }
    w.write_record(["residual".to_string(), fmt17(d.truncation_mass)])?;
    w.flush()?;
    Ok(())
}

/// Long format: `index, form, x, y, u, v, tau, vtm`; rejected draws are
/// omitted.
pub fn write_sweep_csv(path: &Path, t: &SweepTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["index", "form", "x", "y", "u", "v", "tau", "vtm"])?;
    for r in &t.rows {
        for (tau, vtm) in t.taus.iter().zip(&r.vtm) {
            w.write_record([
                r.index.to_string(),
                r.model.form.as_str().to_string(),
                fmt17(r.model.x),
                fmt17(r.model.y),
                fmt17(r.model.u),
                fmt17(r.model.v),
                fmt17(*tau),
                fmt17(*vtm),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `K, repeat, var_999`.
pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["K", "repeat", "var_999"])?;
    for r in rows {
        w.write_record([r.k.to_string(), r.repeat.to_string(), fmt17(r.var_999)])?;
    }
    w.flush()?;
    Ok(())
}

/// One loss per line under a `loss` header.
pub fn write_losses_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "loss")?;
    for z in losses {
        writeln!(w, "{}", fmt17(*z))?;
    }
    w.flush()?;
    Ok(())
}

/// Raw little-endian `f64` values, no header.
pub fn write_losses_bin(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for z in losses {
        w.write_all(&z.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_losses_bin(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidArgument(
            "binary loss file length is not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    fn file_with(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn one_and_two_columns() {
        let t = ingest(file_with("1\n2\n3\n").path()).unwrap();
        assert_eq!(t.times, vec![1.0, 2.0, 3.0]);
        assert!(t.severities.is_none());
        let t = ingest(file_with("time,severity\n1,10\n2.5,20\n").path()).unwrap();
        assert_eq!(t.severities, Some(vec![10.0, 20.0]));
    }

    #[test]
    fn ingest_errors() {
        assert!(matches!(
            ingest(file_with("1\n-1\n").path()),
            Err(Error::NegativeValue { line: 2, .. })
        ));
        assert!(matches!(
            ingest(file_with("1\nabc\n").path()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(ingest(file_with("\n\n").path()), Err(Error::EmptyFile)));
        assert!(matches!(
            ingest(file_with("1,2\n3\n").path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn model_roundtrip_is_bit_stable() {
        let m = reference::ESTIMATED_CANONICAL.expand().unwrap();
        let doc = ModelDocument::from_map2(&m, Some(reference::ESTIMATED_CANONICAL));
        let text = serde_json::to_string(&doc).unwrap();
        let back: ModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        for (a, b) in doc.d0.0.iter().flatten().zip(back.d0.0.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(text.contains("\"gamma_positive\""));
    }

    #[test]
    fn binary_losses_roundtrip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let v = vec![0.0, 1.5, 1e300, 3.25e-7];
        write_losses_bin(f.path(), &v).unwrap();
        assert_eq!(read_losses_bin(f.path()).unwrap(), v);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }
}

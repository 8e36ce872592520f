use std::fs;
use std::path::{Path, PathBuf};

use map2risk::io;
use serde::Serialize;

use crate::Format;

/// Files written by one command. Unless [`OutputSet::commit`] is called,
/// everything registered here is deleted when the set is dropped.
pub struct OutputSet {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
    created_dir: bool,
    committed: bool,
}

impl OutputSet {
    pub fn new(dir: &Path, format: Format) -> map2risk::Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
            created_dir,
            committed: false,
        })
    }

    pub fn format(&self) -> Format {
        self.format
    }

    /// Register `name` under the output directory and return its path.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> map2risk::Result<()> {
        let p = self.path(name);
        io::write_json(&p, value)
    }

    /// Write a table as `<stem>.csv` with the given writer, or as
    /// `<stem>.json` from its serializable form.
    pub fn table<T, F>(&mut self, stem: &str, value: &T, csv: F) -> map2risk::Result<()>
    where
        T: Serialize + ?Sized,
        F: FnOnce(&Path) -> map2risk::Result<()>,
    {
        match self.format {
            Format::Csv => {
                let p = self.path(&format!("{stem}.csv"));
                csv(&p)
            }
            Format::Json => self.json(&format!("{stem}.json"), value),
        }
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            if p.exists() {
                if let Err(e) = fs::remove_file(p) {
                    log::warn!("could not remove partial output {}: {e}", p.display());
                }
            }
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Write rows of pre-formatted fields under a header.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> map2risk::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(map2risk::Error::from)?;
    w.write_record(header).map_err(map2risk::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(map2risk::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// File-name friendly rendering of a threshold or window length.
pub fn tag(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

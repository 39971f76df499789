//! Output-file writers: CSV tables with a fingerprint header line, summary
//! JSON, and SVG files. Floats are written with Rust's shortest round-trip
//! formatting so re-reading a table reproduces the values bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::plot::Plot;

pub struct OutputContext {
    pub dir: PathBuf,
    pub fingerprint: u64,
    pub deterministic: bool,
    pub plots: bool,
}

impl OutputContext {
    pub fn new(
        dir: &Path,
        fingerprint: u64,
        deterministic: bool,
        plots: bool,
    ) -> std::io::Result<OutputContext> {
        fs::create_dir_all(dir)?;
        Ok(OutputContext {
            dir: dir.to_path_buf(),
            fingerprint,
            deterministic,
            plots,
        })
    }

    pub fn subdir(&self, name: &str) -> std::io::Result<OutputContext> {
        OutputContext::new(
            &self.dir.join(name),
            self.fingerprint,
            self.deterministic,
            self.plots,
        )
    }

    fn header(&self, kind: &str) -> String {
        format!(
            "# bundle-sim {} {kind} fingerprint={:#018x}\n",
            env!("CARGO_PKG_VERSION"),
            self.fingerprint
        )
    }

    /// CSV with one comment line and a single header row.
    pub fn write_table(
        &self,
        name: &str,
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path)?;
        file.write_all(self.header("table").as_bytes())?;
        writeln!(file, "{}", columns.join(","))?;
        for row in rows {
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(path)
    }

    pub fn write_json(&self, name: &str, value: &serde_json::Value) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path)?;
        let text = serde_json::to_string_pretty(value).expect("json serialization");
        file.write_all(text.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(path)
    }

    pub fn write_plot(&self, name: &str, plot: &Plot) -> std::io::Result<Option<PathBuf>> {
        if !self.plots {
            return Ok(None);
        }
        let path = self.dir.join(name);
        fs::write(&path, plot.render(self.deterministic))?;
        Ok(Some(path))
    }

    pub fn write_raw(&self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        Ok(path)
    }
}

/// Shortest round-trip float rendering.
pub fn fmt(value: f64) -> String {
    format!("{value}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 6.5e-4, std::f64::consts::PI, 1e-300] {
            let parsed: f64 = fmt(v).parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }
}

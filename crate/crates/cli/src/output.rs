//! Artifact writers. Floats use the shortest round-trip representation so
//! reruns produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kinrelax::solver::PhaseDensity;
use serde::Serialize;

/// Output directory that remembers what was written to it.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, table: &Csv) -> std::io::Result<()> {
        self.write(name, table.text.as_bytes())
    }

    /// Flat little-endian `f64` values plus a JSON sidecar.
    pub fn grid(&mut self, stem: &str, f: &PhaseDensity, requested_time: f64) -> std::io::Result<()> {
        let bytes: Vec<u8> = f.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let bin = format!("{stem}.bin");
        self.write(&bin, &bytes)?;
        let sidecar = GridSidecar {
            data: &bin,
            dtype: "f64-le",
            layout: "velocity-major: value[j * cells_x + i], x-index i row-major over axes",
            requested_time,
            time: f.time,
            mass: f.mass(),
            min: f.min(),
            shape: &f.shape,
        };
        self.json(&format!("{stem}.json"), &sidecar)
    }
}

#[derive(Serialize)]
struct GridSidecar<'a> {
    data: &'a str,
    dtype: &'a str,
    layout: &'a str,
    requested_time: f64,
    time: f64,
    mass: f64,
    min: f64,
    shape: &'a kinrelax::solver::GridShape,
}

/// Shortest round-trip decimal; non-finite values as `nan`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite floats serialize")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        Csv {
            text: header.join(",") + "\n",
            width: header.len(),
        }
    }

    pub fn with_columns(columns: &[&str]) -> Self {
        Self::new(&columns.iter().map(|c| c.to_string()).collect::<Vec<_>>())
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            self.text.push_str(c);
        }
        self.text.push('\n');
    }

    pub fn floats(&mut self, cells: &[f64]) {
        let mut line = String::new();
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "{}", fmt_f64(*c));
        }
        debug_assert_eq!(cells.len(), self.width);
        self.text.push_str(&line);
        self.text.push('\n');
    }
}

/// Column names `prefix0, prefix1, ...`.
pub fn axis_columns(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("{prefix}{k}")).collect()
}

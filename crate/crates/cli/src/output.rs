use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::commands::CliError;

/// Collects the files a command writes and the manifest describing them.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize, E: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    seed: u64,
    config: &'a C,
    options: &'a E,
    outputs: &'a [String],
    duration_s: f64,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.text(name, &text)
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, format!("{text}\n")).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    }

    /// CSV with a one-line header.
    pub fn csv<R, I>(&mut self, name: &str, header: &[String], rows: I) -> Result<(), CliError>
    where
        R: IntoIterator,
        R::Item: ToString,
        I: IntoIterator<Item = R>,
    {
        let p = self.path(name);
        let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", p.display()));
        let mut w = csv::Writer::from_path(&p).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row.into_iter().map(|x| x.to_string())).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Runtime(e.to_string()))
    }

    /// Writes manifest.json, listing every file written so far.
    pub fn finish<C: Serialize, E: Serialize>(
        mut self,
        command: &str,
        seed: u64,
        config: &C,
        options: &E,
    ) -> Result<(), CliError> {
        self.files.push("manifest.json".into());
        let m = Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            options,
            outputs: &self.files,
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))?;
        let p = self.dir.join("manifest.json");
        std::fs::write(&p, format!("{text}\n")).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    }
}

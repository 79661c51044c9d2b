//! Result files. Payloads are deterministic; anything that varies between
//! identical runs (wall clock, timings, thread count) goes to the metadata
//! sidecar only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

/// One documented field of an output file.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Field {
    pub name: &'static str,
    pub unit: &'static str,
    pub description: &'static str,
}

pub const fn field(name: &'static str, unit: &'static str, description: &'static str) -> Field {
    Field {
        name,
        unit,
        description,
    }
}

/// A CSV cell. Floats use the shortest round-trip form.
pub enum Cell {
    F(f64),
    I(usize),
    B(bool),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::F(x) => write!(f, "{x:?}"),
            Cell::I(i) => write!(f, "{i}"),
            Cell::B(b) => write!(f, "{}", u8::from(*b)),
        }
    }
}

#[derive(Serialize)]
struct FileSchema {
    format: &'static str,
    fields: Vec<Field>,
}

pub struct Emitter {
    dir: PathBuf,
    subcommand: &'static str,
    config: Value,
    schema: BTreeMap<String, FileSchema>,
    started: Instant,
    pub timings: Vec<(String, f64)>,
}

impl Emitter {
    pub fn new(dir: &Path, subcommand: &'static str, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let config_value = serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?;
        let toml_text = toml::to_string(config).map_err(|e| CliError::Io(e.to_string()))?;
        let emitter = Emitter {
            dir: dir.to_path_buf(),
            subcommand,
            config: config_value,
            schema: BTreeMap::new(),
            started: Instant::now(),
            timings: Vec::new(),
        };
        emitter.write_raw("resolved_config.toml", &toml_text)?;
        Ok(emitter)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_raw(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    /// `{"config": …, "result": …}`, pretty-printed.
    pub fn json(&mut self, name: &str, fields: &[Field], result: Value) -> Result<(), CliError> {
        let doc = json!({ "config": self.config, "result": result });
        let mut text =
            serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.schema.insert(
            name.to_string(),
            FileSchema {
                format: "json",
                fields: fields.to_vec(),
            },
        );
        self.write_raw(name, &text)
    }

    /// Header lines `# key = value`, then `# config = <json>`, then the
    /// column row and the data.
    pub fn csv(
        &mut self,
        name: &str,
        meta: &[(&str, String)],
        columns: &[Field],
        rows: &[Vec<Cell>],
    ) -> Result<(), CliError> {
        let mut text = String::new();
        for (k, v) in meta {
            let _ = writeln!(text, "# {k} = {v}");
        }
        let _ = writeln!(text, "# config = {}", self.config);
        let names: Vec<&str> = columns.iter().map(|c| c.name).collect();
        let _ = writeln!(text, "{}", names.join(","));
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(text, "{}", cells.join(","));
        }
        self.schema.insert(
            name.to_string(),
            FileSchema {
                format: "csv",
                fields: columns.to_vec(),
            },
        );
        self.write_raw(name, &text)
    }

    pub fn binary(&mut self, name: &str, description: &'static str) {
        self.schema.insert(
            name.to_string(),
            FileSchema {
                format: "binary",
                fields: vec![field("state", "", description)],
            },
        );
    }

    /// Writes `schema.json` and the metadata sidecar.
    pub fn finish(self, extra: Value) -> Result<(), CliError> {
        let mut schema = serde_json::to_string_pretty(&json!({
            "subcommand": self.subcommand,
            "files": self.schema,
        }))
        .map_err(|e| CliError::Io(e.to_string()))?;
        schema.push('\n');
        self.write_raw("schema.json", &schema)?;
        write_metadata(
            &self.dir,
            self.subcommand,
            self.started,
            &self.timings,
            extra,
        )
    }
}

/// `<subcommand>.meta.json`: wall clock, version, command line, threads.
pub fn write_metadata(
    dir: &Path,
    subcommand: &str,
    started: Instant,
    timings: &[(String, f64)],
    extra: Value,
) -> Result<(), CliError> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64());
    let meta = json!({
        "subcommand": subcommand,
        "timestamp_unix": now,
        "elapsed_seconds": started.elapsed().as_secs_f64(),
        "version": env!("CARGO_PKG_VERSION"),
        "argv": std::env::args().collect::<Vec<_>>(),
        "threads": rayon::current_num_threads(),
        "timings": timings.iter().map(|(k, v)| json!({ "name": k, "seconds": v })).collect::<Vec<_>>(),
        "status": extra,
    });
    let p = dir.join(format!("{subcommand}.meta.json"));
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

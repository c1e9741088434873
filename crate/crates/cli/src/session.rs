//! Output directory, field cache and run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use confocal_core::debye::{simulate_field_with, FieldGrid, FieldOptions};
use confocal_core::io::{load_field, save_field};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

pub struct Session {
    pub config: RunConfig,
    out: PathBuf,
    cache: bool,
    field: Option<FieldGrid>,
    written: Vec<PathBuf>,
    commands: Vec<String>,
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    commands: &'a [String],
    config_sha256: String,
    field_sha256: String,
    files: Vec<ManifestEntry>,
}

fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = std::fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl Session {
    pub fn new(config: RunConfig, out: Option<PathBuf>, no_cache: bool) -> Result<Self, CliError> {
        let out = out.unwrap_or_else(|| config.output.dir.clone());
        std::fs::create_dir_all(&out)?;
        let cache = config.output.cache && !no_cache;
        Ok(Session { config, out, cache, field: None, written: Vec::new(), commands: Vec::new() })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn begin(&mut self, command: &str) {
        self.commands.push(command.to_string());
    }

    pub fn cache_path(&self) -> PathBuf {
        self.out.join("cache").join(format!("field-{}.bin", self.config.field_key()))
    }

    /// The focal field, from the cache when a dump for the same aperture and
    /// grid exists.
    pub fn field(&mut self) -> Result<&FieldGrid, CliError> {
        if self.field.is_none() {
            let path = self.cache_path();
            let cached = if self.cache && path.exists() {
                match load_field(&path) {
                    Ok(f) if f.spec == self.config.grid_spec() => {
                        eprintln!("field: cache hit {}", path.display());
                        Some(f)
                    }
                    _ => {
                        eprintln!("field: ignoring unreadable cache {}", path.display());
                        None
                    }
                }
            } else {
                None
            };
            let field = match cached {
                Some(f) => f,
                None => {
                    let opts = FieldOptions { node_budget: self.config.grid.node_budget, ..Default::default() };
                    let f = simulate_field_with(&self.config.aperture_spec(), &self.config.grid_spec(), &opts)?;
                    if self.cache {
                        self.store_field(&f, &path)?;
                    }
                    f
                }
            };
            self.field = Some(field);
        }
        Ok(self.field.as_ref().unwrap())
    }

    fn store_field(&self, field: &FieldGrid, path: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(path.parent().unwrap())?;
        let tmp = path.with_extension("tmp");
        save_field(field, &tmp)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Writes the field dump and lists it as an output.
    pub fn emit_field(&mut self) -> Result<PathBuf, CliError> {
        let path = self.cache_path();
        self.field()?;
        if !path.exists() {
            let field = self.field.as_ref().unwrap();
            self.store_field(field, &path)?;
        }
        self.written.push(path.clone());
        Ok(path)
    }

    /// Creates `name` under the output directory and records it for the manifest.
    pub fn emit<F>(&mut self, name: &str, write: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> confocal_core::Result<()>,
    {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        write(&mut w)?;
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn record(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    /// Writes the resolved config and a manifest of every emitted file.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        let resolved = toml::to_string(&self.config).map_err(|e| CliError::Config(e.to_string()))?;
        let config_path = self.out.join("config.resolved.toml");
        std::fs::write(&config_path, resolved)?;
        self.written.push(config_path);

        self.written.sort();
        self.written.dedup();
        let mut files = Vec::with_capacity(self.written.len());
        for p in &self.written {
            let (sha256, bytes) = sha256_file(p)?;
            let rel = p.strip_prefix(&self.out).unwrap_or(p);
            files.push(ManifestEntry { path: rel.to_string_lossy().replace('\\', "/"), sha256, bytes });
        }
        let manifest = Manifest {
            commands: &self.commands,
            config_sha256: self.config.run_key(),
            field_sha256: self.config.field_key(),
            files,
        };
        let path = self.out.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

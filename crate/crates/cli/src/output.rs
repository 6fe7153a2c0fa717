use std::fs;
use std::path::{Path, PathBuf};

use rabisim::config::OutputFormat;
use rabisim::Result;

/// Writes artifacts into one directory, skipping disabled formats.
pub struct Emitter {
    dir: PathBuf,
    csv: bool,
    json: bool,
    svg: bool,
    written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: &Path, formats: &[OutputFormat], svg: Option<bool>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            csv: formats.contains(&OutputFormat::Csv),
            json: formats.contains(&OutputFormat::Json),
            svg: svg.unwrap_or(formats.contains(&OutputFormat::Svg)),
            written: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.put(name, &buf)
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn json_text(&mut self, name: &str, text: &str) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        let mut text = text.to_string();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        self.put(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, render: impl FnOnce() -> String) -> Result<()> {
        if !self.svg {
            return Ok(());
        }
        self.put(name, render().as_bytes())
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

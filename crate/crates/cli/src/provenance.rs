//! Provenance stamps: a comment line in text outputs, a `.prov` sidecar next
//! to binary outputs. No timestamps, so reruns stay byte-identical.

use std::path::{Path, PathBuf};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Provenance {
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# config_hash={} seed={} version={}\n",
            self.config_hash, self.seed, self.version
        )
    }

    fn sidecar_text(&self) -> String {
        format!(
            "config_hash={}\nseed={}\nversion={}\n",
            self.config_hash, self.seed, self.version
        )
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".prov");
        PathBuf::from(s)
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<(), Failure> {
        let p = Self::sidecar_path(path);
        std::fs::write(&p, self.sidecar_text()).map_err(|e| Failure::io(&p, e))
    }

    pub fn read_sidecar(path: &Path) -> Result<Self, Failure> {
        let p = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&p).map_err(|e| Failure::io(&p, e))?;
        let field = |key: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
        };
        match (field("config_hash"), field("seed").and_then(|s| s.parse().ok()), field("version")) {
            (Some(config_hash), Some(seed), Some(version)) => Ok(Provenance {
                config_hash,
                seed,
                version,
            }),
            _ => Err(Failure::new("format", format!("malformed provenance file {}", p.display()))),
        }
    }
}

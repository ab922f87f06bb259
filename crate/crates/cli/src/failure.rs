use std::fmt;
use std::path::Path;

/// A command failure reported as `error: <class>: <detail>`.
#[derive(Debug)]
pub struct Failure {
    pub class: &'static str,
    pub detail: String,
}

impl Failure {
    pub fn new(class: &'static str, detail: impl Into<String>) -> Self {
        Failure {
            class,
            detail: detail.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        vtriplet::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    }
}

impl From<vtriplet::Error> for Failure {
    fn from(e: vtriplet::Error) -> Self {
        Failure {
            class: e.class(),
            detail: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep the report on a single line
        let detail = self.detail.replace('\n', " ");
        write!(f, "error: {}: {}", self.class, detail)
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Named file contents produced by a command.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file to a temporary name first and renames only when
    /// all writes succeeded, so a failure leaves no partial artifacts.
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        let io = |path: &Path, source| CliError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let mut failure = None;
        for (name, body) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            let res = fs::File::create(&tmp).and_then(|mut f| f.write_all(body.as_bytes()).and_then(|_| f.sync_all()));
            match res {
                Ok(()) => staged.push((tmp, dir.join(name))),
                Err(e) => {
                    let _ = fs::remove_file(&tmp);
                    failure = Some(io(&tmp, e));
                    break;
                }
            }
        }
        if let Some(err) = failure {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(err);
        }
        for (tmp, dst) in &staged {
            fs::rename(tmp, dst).map_err(|e| io(dst, e))?;
        }
        Ok(())
    }
}

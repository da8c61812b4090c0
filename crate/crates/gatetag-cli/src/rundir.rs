//! Run-directory bookkeeping: artifact writes and the checksum manifest.
//!
//! `manifest.tsv` lists every artifact as `name<TAB>bytes<TAB>fnv1a64`,
//! sorted by name. Entries accumulate across commands sharing one run
//! directory and are replaced when a file is rewritten, so rerunning a
//! command on unchanged inputs leaves both the artifacts and the manifest
//! byte-identical.

use crate::CliError;
use gatetag::util::fnv1a64;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.tsv";

pub struct RunDir {
    root: PathBuf,
    entries: BTreeMap<String, (usize, u64)>,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<RunDir, CliError> {
        fs::create_dir_all(root).map_err(|e| {
            CliError::Data(format!("cannot create run directory {}: {e}", root.display()))
        })?;
        let mut entries = BTreeMap::new();
        let mpath = root.join(MANIFEST);
        if mpath.exists() {
            let text = fs::read_to_string(&mpath).map_err(|e| {
                CliError::Data(format!("cannot read {}: {e}", mpath.display()))
            })?;
            for (i, line) in text.lines().enumerate() {
                let row = parse_row(line).ok_or_else(|| {
                    CliError::Data(format!(
                        "{}:{}: malformed manifest row",
                        mpath.display(),
                        i + 1
                    ))
                })?;
                entries.insert(row.0, row.1);
            }
        }
        Ok(RunDir { root: root.to_path_buf(), entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write an artifact under the run directory and record its checksum.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| {
                CliError::Data(format!("cannot create {}: {e}", dir.display()))
            })?;
        }
        fs::write(&path, bytes)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        self.entries.insert(rel.to_string(), (bytes.len(), fnv1a64(bytes)));
        Ok(())
    }

    /// Persist the manifest; call once after the command's final write.
    pub fn finish(&self) -> Result<(), CliError> {
        let mut out = String::new();
        for (name, (len, hash)) in &self.entries {
            out.push_str(&format!("{name}\t{len}\t{hash:016x}\n"));
        }
        let path = self.root.join(MANIFEST);
        fs::write(&path, out)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }
}

fn parse_row(line: &str) -> Option<(String, (usize, u64))> {
    let mut parts = line.split('\t');
    let name = parts.next()?;
    let len = parts.next()?.parse().ok()?;
    let hash = u64::from_str_radix(parts.next()?, 16).ok()?;
    if name.is_empty() || parts.next().is_some() {
        return None;
    }
    Some((name.to_string(), (len, hash)))
}

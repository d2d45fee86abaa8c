use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::index::CorpusFile;

/// Lists `.wav` files under `root`, sorted by relative path. A file's id is
/// its relative path; its group is the first directory below `root`, if any.
pub fn scan_corpus(root: &Path) -> Result<Vec<CorpusFile>> {
    let mut found = Vec::new();
    walk(root, &mut found)?;
    found.sort();
    Ok(found
        .into_iter()
        .map(|path| {
            let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
            let mut parts = rel.components();
            let group = if rel.components().count() > 1 {
                parts.next().map(|c| c.as_os_str().to_string_lossy().into_owned())
            } else {
                None
            };
            CorpusFile {
                id: rel.to_string_lossy().replace('\\', "/"),
                path,
                group,
            }
        })
        .collect())
}

fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let ty = entry.file_type().map_err(|e| Error::io(&path, e))?;
        if ty.is_dir() {
            walk(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

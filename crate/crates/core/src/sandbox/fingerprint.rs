use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

/// SHA-256 over every entry below `root` in sorted path order: relative
/// path, entry type and contents (or link target). `.git` directories are
/// skipped.
pub fn fingerprint_dir(root: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    visit(root, root, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

fn visit(root: &Path, dir: &Path, hasher: &mut Sha256) -> io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if entry.file_name() == ".git" {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(&path);
        let rel = rel.to_string_lossy();
        let kind = entry.file_type()?;
        if kind.is_symlink() {
            hasher.update(b"L\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
            hasher.update(fs::read_link(&path)?.to_string_lossy().as_bytes());
        } else if kind.is_dir() {
            hasher.update(b"D\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
            visit(root, &path, hasher)?;
        } else {
            let data = fs::read(&path)?;
            hasher.update(b"F\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
            hasher.update((data.len() as u64).to_le_bytes());
            hasher.update(&data);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_and_names_matter_but_git_does_not() {
        let a = tempfile::tempdir().unwrap();
        fs::write(a.path().join("x"), "1").unwrap();
        let f1 = fingerprint_dir(a.path()).unwrap();
        fs::create_dir(a.path().join(".git")).unwrap();
        fs::write(a.path().join(".git/HEAD"), "ref").unwrap();
        assert_eq!(fingerprint_dir(a.path()).unwrap(), f1);
        fs::write(a.path().join("x"), "2").unwrap();
        assert_ne!(fingerprint_dir(a.path()).unwrap(), f1);
        fs::write(a.path().join("x"), "1").unwrap();
        fs::create_dir(a.path().join("d")).unwrap();
        assert_ne!(fingerprint_dir(a.path()).unwrap(), f1);
    }
}

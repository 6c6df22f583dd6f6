//! Artifacts are written to a staging directory next to the output directory
//! and moved into place only when the command finishes.

use std::path::{Path, PathBuf};

use tempfile::TempDir;

pub struct Staging {
    dir: TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> std::io::Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent)?;
        let dir = tempfile::Builder::new().prefix(".staging-").tempdir_in(&parent)?;
        Ok(Self { dir, target: target.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn dir(&self) -> &Path {
        self.dir.path()
    }

    /// Moves every staged file into the target directory, replacing files of
    /// the same name.
    pub fn commit(self) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.target)?;
        let mut names: Vec<_> = std::fs::read_dir(self.dir.path())?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
        names.sort();
        let mut moved = Vec::with_capacity(names.len());
        for name in names {
            let dest = self.target.join(&name);
            std::fs::rename(self.dir.path().join(&name), &dest)?;
            moved.push(dest);
        }
        Ok(moved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        {
            let s = Staging::new(&target).unwrap();
            std::fs::write(s.path("a.txt"), "x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_moves_files() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        let s = Staging::new(&target).unwrap();
        std::fs::write(s.path("b.txt"), "y").unwrap();
        std::fs::write(s.path("a.txt"), "x").unwrap();
        let moved = s.commit().unwrap();
        assert_eq!(moved, vec![target.join("a.txt"), target.join("b.txt")]);
        assert_eq!(std::fs::read_to_string(target.join("b.txt")).unwrap(), "y");
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 1);
    }
}

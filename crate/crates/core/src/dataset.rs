//! On-disk dataset layout: one subdirectory per class, image files inside.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    /// `"<class dir>/<file name>"` — unique across the dataset and safe to
    /// embed in CSV.
    pub id: String,
    pub path: PathBuf,
    /// Index into `LabeledDataset::class_names`.
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    /// Ordered by class, then file name.
    pub samples: Vec<LabeledSample>,
    /// Class directory names, sorted lexicographically; the sort position is
    /// the class id used everywhere downstream.
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for s in &self.samples {
            counts[s.class] += 1;
        }
        counts
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
}

/// Characters that would break the one-line-per-sample CSV contract.
fn check_id(id: &str) -> Result<()> {
    if id.contains([',', '"', '\n', '\r']) {
        return Err(Error::Data(format!(
            "file name `{id}` contains CSV metacharacters; rename it"
        )));
    }
    Ok(())
}

/// Scan `root` for class subdirectories and their image files (`.pgm` /
/// `.png`, case-insensitive). Class ids follow lexicographic directory
/// order; files are sorted by name within each class, so the listing is
/// deterministic for a given tree. Non-directory entries at the root are
/// ignored; a class directory without a single image file is an error.
pub fn ingest_dataset(root: &Path) -> Result<LabeledDataset> {
    let read_dir = |dir: &Path| -> Result<Vec<PathBuf>> {
        let entries = std::fs::read_dir(dir).map_err(|source| Error::FileRead {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| Error::FileRead {
                path: dir.to_path_buf(),
                source,
            })?;
            paths.push(entry.path());
        }
        paths.sort();
        Ok(paths)
    };

    let mut class_dirs: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in read_dir(root)? {
        if path.is_dir() {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| {
                    Error::Data(format!("class directory `{}` is not UTF-8", path.display()))
                })?
                .to_string();
            check_id(&name)?;
            class_dirs.insert(name, path);
        }
    }
    if class_dirs.is_empty() {
        return Err(Error::Data(format!(
            "`{}` contains no class subdirectories",
            root.display()
        )));
    }

    let class_names: Vec<String> = class_dirs.keys().cloned().collect();
    let mut samples = Vec::new();
    for (class, (name, dir)) in class_dirs.iter().enumerate() {
        let mut found = 0usize;
        for path in read_dir(dir)? {
            if !path.is_file() || !is_image_file(&path) {
                continue;
            }
            let file = path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| {
                    Error::Data(format!("image file `{}` is not UTF-8", path.display()))
                })?;
            let id = format!("{name}/{file}");
            check_id(&id)?;
            samples.push(LabeledSample { id, path, class });
            found += 1;
        }
        if found == 0 {
            return Err(Error::Data(format!(
                "class directory `{}` holds no image files",
                dir.display()
            )));
        }
    }
    Ok(LabeledDataset {
        samples,
        class_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) {
        std::fs::write(path, b"x").unwrap();
    }

    #[test]
    fn two_class_tree_lists_five_samples() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir(root.join("CTL")).unwrap();
        std::fs::create_dir(root.join("PNEU")).unwrap();
        touch(&root.join("CTL/b.pgm"));
        touch(&root.join("CTL/a.pgm"));
        touch(&root.join("PNEU/x.png"));
        touch(&root.join("PNEU/y.PGM"));
        touch(&root.join("PNEU/z.pgm"));
        touch(&root.join("PNEU/notes.txt"));
        touch(&root.join("stray_root_file.pgm"));
        let ds = ingest_dataset(root).unwrap();
        assert_eq!(ds.class_names, vec!["CTL", "PNEU"]);
        assert_eq!(ds.samples.len(), 5);
        assert_eq!(ds.class_counts(), vec![2, 3]);
        // Sorted within class, class-major overall.
        let ids: Vec<&str> = ds.samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["CTL/a.pgm", "CTL/b.pgm", "PNEU/x.png", "PNEU/y.PGM", "PNEU/z.pgm"]);
        assert!(ds.samples.iter().all(|s| s.path.is_file()));
    }

    #[test]
    fn four_directories_sort_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for name in ["VIR", "BAC", "CVD19", "CTL"] {
            std::fs::create_dir(root.join(name)).unwrap();
            touch(&root.join(name).join("one.pgm"));
        }
        let ds = ingest_dataset(root).unwrap();
        assert_eq!(ds.class_names, vec!["BAC", "CTL", "CVD19", "VIR"]);
        assert_eq!(ds.n_classes(), 4);
    }

    #[test]
    fn empty_class_directory_is_named_in_the_error() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir(root.join("full")).unwrap();
        std::fs::create_dir(root.join("hollow")).unwrap();
        touch(&root.join("full/a.pgm"));
        let err = ingest_dataset(root).unwrap_err();
        assert!(err.to_string().contains("hollow"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn missing_root_and_bare_root_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest_dataset(&dir.path().join("nope")).is_err());
        assert!(ingest_dataset(dir.path()).is_err());
    }

    #[test]
    fn csv_metacharacters_in_names_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir(root.join("ok")).unwrap();
        touch(&root.join("ok").join("a,b.pgm"));
        assert!(ingest_dataset(root).is_err());
    }
}

//! Manifest-backed dataset loading and deterministic splitting.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// One labeled snippet: 0 = non-vulnerable, 1 = vulnerable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSnippet {
    pub id: String,
    pub source: String,
    pub label: u8,
    /// Precomputed embedding file for the file-backed provider.
    pub css_path: Option<PathBuf>,
}

/// Load a dataset manifest: UTF-8 CSV with header `path,label[,css]`,
/// one snippet per row. Paths are resolved relative to the manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<LabeledSnippet>> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(manifest_path)
        .map_err(|e| Error::Dataset {
            row: 0,
            message: format!("{}: {e}", manifest_path.display()),
        })?;
    {
        let headers = reader.headers().map_err(|e| Error::Dataset {
            row: 0,
            message: e.to_string(),
        })?;
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "path" || cols[1] != "label" {
            return Err(Error::Dataset {
                row: 0,
                message: format!("expected header 'path,label[,css]', got '{}'", cols.join(",")),
            });
        }
    }

    let mut out = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Dataset {
            row,
            message: e.to_string(),
        })?;
        let path_field = record
            .get(0)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Dataset {
                row,
                message: "missing path".to_string(),
            })?;
        let label_field = record.get(1).map(str::trim).unwrap_or_default();
        let label: u8 = match label_field {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Dataset {
                    row,
                    message: format!("label out of range at row {row}: '{other}'"),
                })
            }
        };
        if !seen.insert(path_field.to_string()) {
            return Err(Error::Dataset {
                row,
                message: format!("duplicate id '{path_field}'"),
            });
        }
        let full = base.join(path_field);
        let source = std::fs::read_to_string(&full).map_err(|e| Error::Dataset {
            row,
            message: format!("cannot read '{}': {e}", full.display()),
        })?;
        let css_path = record
            .get(2)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| base.join(s));
        if let Some(css) = &css_path {
            if !css.exists() {
                return Err(Error::Dataset {
                    row,
                    message: format!("css file '{}' does not exist", css.display()),
                });
            }
        }
        out.push(LabeledSnippet {
            id: path_field.to_string(),
            source,
            label,
            css_path,
        });
    }
    Ok(out)
}

/// Split ratios plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train,
            val,
            test,
            seed,
        };
        if [train, val, test].iter().any(|r| *r <= 0.0 || !r.is_finite()) {
            return Err(Error::config("split ratios must be positive"));
        }
        if (train + val + test - 1.0).abs() > 1e-9 {
            return Err(Error::config("split ratios must sum to 1"));
        }
        Ok(spec)
    }
}

/// Seeded Fisher-Yates shuffle, then a contiguous partition of sizes
/// floor(train*N) / floor(val*N) / remainder.
pub fn split<T: Clone>(data: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let n = data.len();
    if n < 3 {
        return Err(Error::config(format!("dataset of {n} items is too small to split")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (spec.train * n as f64).floor() as usize;
    let n_val = (spec.val * n as f64).floor() as usize;
    let train = order[..n_train].iter().map(|&i| data[i].clone()).collect();
    let val = order[n_train..n_train + n_val]
        .iter()
        .map(|&i| data[i].clone())
        .collect();
    let test = order[n_train + n_val..]
        .iter()
        .map(|&i| data[i].clone())
        .collect();
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;
    use tempfile::tempdir;

    fn write_manifest(dir: &Path, rows: &[(&str, &str)]) -> PathBuf {
        let manifest = dir.join("manifest.csv");
        let mut f = std::fs::File::create(&manifest).unwrap();
        writeln!(f, "path,label").unwrap();
        for (path, label) in rows {
            writeln!(f, "{path},{label}").unwrap();
            std::fs::write(dir.join(path), "int f() { return 0; }").unwrap();
        }
        manifest
    }

    #[test]
    fn two_row_manifest_loads_in_order() {
        let dir = tempdir().unwrap();
        let m = write_manifest(dir.path(), &[("a.java", "1"), ("b.java", "0")]);
        let ds = load_dataset(&m).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!((ds[0].id.as_str(), ds[0].label), ("a.java", 1));
        assert_eq!((ds[1].id.as_str(), ds[1].label), ("b.java", 0));
    }

    #[test]
    fn out_of_range_label_names_the_row() {
        let dir = tempdir().unwrap();
        let m = write_manifest(dir.path(), &[("a.java", "2")]);
        let err = load_dataset(&m).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempdir().unwrap();
        let manifest = dir.path().join("manifest.csv");
        std::fs::write(dir.path().join("a.java"), "x").unwrap();
        std::fs::write(&manifest, "path,label\na.java,0\na.java,1\n").unwrap();
        let err = load_dataset(&manifest).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn missing_file_is_reported_with_row() {
        let dir = tempdir().unwrap();
        let manifest = dir.path().join("manifest.csv");
        std::fs::write(&manifest, "path,label\nnope.java,0\n").unwrap();
        let err = load_dataset(&manifest).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn split_273_gives_table_sizes() {
        let data: Vec<usize> = (0..273).collect();
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 42).unwrap();
        let (tr, va, te) = split(&data, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (218, 27, 28));
    }

    #[test]
    fn split_ten_gives_eight_one_one() {
        let data: Vec<usize> = (0..10).collect();
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 7).unwrap();
        let (tr, va, te) = split(&data, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_membership_different_seed_different_shuffle() {
        let data: Vec<usize> = (0..100).collect();
        let a = split(&data, &SplitSpec::new(0.8, 0.1, 0.1, 1).unwrap()).unwrap();
        let b = split(&data, &SplitSpec::new(0.8, 0.1, 0.1, 1).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = split(&data, &SplitSpec::new(0.8, 0.1, 0.1, 2).unwrap()).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn too_small_dataset_errors() {
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 1).unwrap();
        assert!(split(&[1, 2], &spec).is_err());
    }

    proptest! {
        /// Disjoint, exhaustive, deterministic for any size in range.
        #[test]
        fn split_partitions(n in 3usize..1000, seed in any::<u64>()) {
            let data: Vec<usize> = (0..n).collect();
            let spec = SplitSpec::new(0.8, 0.1, 0.1, seed).unwrap();
            let (tr, va, te) = split(&data, &spec).unwrap();
            prop_assert_eq!(tr.len() + va.len() + te.len(), n);
            let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(tr.len(), (0.8 * n as f64).floor() as usize);
            prop_assert_eq!(va.len(), (0.1 * n as f64).floor() as usize);
        }
    }
}

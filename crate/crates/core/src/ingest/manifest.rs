use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dataset description, stored as TOML.
///
/// ```toml
/// name = "toy"
/// shared_relation_schema = true
///
/// [[kg]]
/// name = "en"
/// train = "en/train.tsv"
/// valid = "en/valid.tsv"
/// test = "en/test.tsv"
///
/// [[alignment]]
/// kgs = ["en", "fr"]
/// path = "align/en_fr.tsv"
/// ```
///
/// Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default)]
    pub shared_relation_schema: bool,
    #[serde(rename = "kg")]
    pub kgs: Vec<KgEntry>,
    #[serde(rename = "alignment", default)]
    pub alignments: Vec<AlignmentEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgEntry {
    pub name: String,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_count_hint: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentEntry {
    /// `[left_kg, right_kg]`: column 1 of the file belongs to `left_kg`.
    pub kgs: [String; 2],
    pub path: PathBuf,
}

impl DatasetManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let manifest: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        manifest.check()?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Copy whose file paths are all absolute, so it can be stored anywhere.
    pub fn absolutized(&self) -> Result<Self> {
        let base = if self.base_dir.as_os_str().is_empty() {
            std::env::current_dir().map_err(|e| Error::io(".", e))?
        } else {
            std::path::absolute(&self.base_dir).map_err(|e| Error::io(&self.base_dir, e))?
        };
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let mut out = self.clone();
        for kg in &mut out.kgs {
            kg.train = abs(&kg.train);
            kg.valid = abs(&kg.valid);
            kg.test = abs(&kg.test);
        }
        for a in &mut out.alignments {
            a.path = abs(&a.path);
        }
        out.base_dir = base;
        Ok(out)
    }

    fn check(&self) -> Result<()> {
        if self.kgs.is_empty() {
            return Err(Error::Config("manifest declares no [[kg]] entries".into()));
        }
        let mut names = HashSet::new();
        for kg in &self.kgs {
            if !names.insert(kg.name.as_str()) {
                return Err(Error::Config(format!("duplicate KG name `{}`", kg.name)));
            }
        }
        for a in &self.alignments {
            for k in &a.kgs {
                if !names.contains(k.as_str()) {
                    return Err(Error::Config(format!(
                        "alignment file {} references undeclared KG `{k}`",
                        a.path.display()
                    )));
                }
            }
            if a.kgs[0] == a.kgs[1] {
                return Err(Error::Config(format!(
                    "alignment file {} aligns KG `{}` with itself",
                    a.path.display(),
                    a.kgs[0]
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let m = DatasetManifest::from_toml(
            r#"
name = "toy"
shared_relation_schema = true
[[kg]]
name = "a"
train = "a/train.tsv"
valid = "a/valid.tsv"
test = "/abs/test.tsv"
[[kg]]
name = "b"
train = "b/train.tsv"
valid = "b/valid.tsv"
test = "b/test.tsv"
entity_count_hint = 12
[[alignment]]
kgs = ["a", "b"]
path = "ab.tsv"
"#,
        )
        .unwrap();
        assert_eq!(m.kgs.len(), 2);
        assert_eq!(m.kgs[1].entity_count_hint, Some(12));
        assert_eq!(m.resolve(Path::new("/abs/test.tsv")), PathBuf::from("/abs/test.tsv"));
        let round = DatasetManifest::from_toml(&m.to_toml()).unwrap();
        assert_eq!(round, m);
    }

    #[test]
    fn unknown_kg_in_alignment_is_rejected() {
        let err = DatasetManifest::from_toml(
            r#"
name = "toy"
[[kg]]
name = "a"
train = "t"
valid = "v"
test = "s"
[[alignment]]
kgs = ["a", "zz"]
path = "ab.tsv"
"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("zz"));
    }
}

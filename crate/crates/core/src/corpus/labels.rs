use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// The outside label carried by lines that belong to no section.
pub const OUTSIDE: &str = "<none>";

const MEDSECID: &str = include_str!("../../../../labels/medsecid.labels");
const ONC: &str = include_str!("../../../../labels/onc.labels");

fn slug_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"^[a-z0-9<>][a-z0-9<>-]*$").unwrap())
}

/// Closed, ordered set of section-header slugs, always including [`OUTSIDE`].
///
/// Label indices follow file order, so they are stable for a given file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelSetRepr", into = "LabelSetRepr")]
pub struct LabelSet {
    name: String,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct LabelSetRepr {
    name: String,
    labels: Vec<String>,
}

impl TryFrom<LabelSetRepr> for LabelSet {
    type Error = CorpusError;

    fn try_from(repr: LabelSetRepr) -> Result<Self, Self::Error> {
        LabelSet::new(repr.name, repr.labels)
    }
}

impl From<LabelSet> for LabelSetRepr {
    fn from(set: LabelSet) -> Self {
        LabelSetRepr {
            name: set.name,
            labels: set.labels,
        }
    }
}

impl LabelSet {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self, CorpusError> {
        let name = name.into();
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if !slug_pattern().is_match(label) {
                return Err(CorpusError::InvalidLabelSet(format!(
                    "'{label}' is not a valid slug"
                )));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(CorpusError::InvalidLabelSet(format!(
                    "duplicate label '{label}'"
                )));
            }
        }
        if !index.contains_key(OUTSIDE) {
            return Err(CorpusError::InvalidLabelSet(format!(
                "label set '{name}' does not contain {OUTSIDE}"
            )));
        }
        Ok(Self {
            name,
            labels,
            index,
        })
    }

    /// Parses the one-slug-per-line text format. Blank lines are skipped.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let labels = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self::new(name, labels)
    }

    /// Loads a label-set file; the set is named after the file stem.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "labels".to_string());
        Self::parse(name, &text)
    }

    /// The 51-label MedSecId schema.
    pub fn medsecid() -> Self {
        Self::parse("medsecid", MEDSECID).expect("bundled label set is valid")
    }

    /// The obstetrics note schema, before consolidation.
    pub fn onc() -> Self {
        Self::parse("onc", ONC).expect("bundled label set is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn outside_index(&self) -> usize {
        self.index[OUTSIDE]
    }

    /// A copy of this set with every label in `excluded` removed (the outside
    /// label is always kept).
    pub fn without(&self, name: impl Into<String>, excluded: &[&str]) -> Self {
        let labels = self
            .labels
            .iter()
            .filter(|l| l.as_str() == OUTSIDE || !excluded.contains(&l.as_str()))
            .cloned()
            .collect();
        Self::new(name, labels).expect("subset of a valid label set is valid")
    }
}

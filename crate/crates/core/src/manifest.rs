//! Dataset manifest: which rater annotations and algorithm predictions belong to each case.
//!
//! ```json
//! {
//!   "cases": [
//!     {
//!       "case_id": "case_001",
//!       "group": "A",
//!       "rater_annotations": ["case_001/rater_1.nii.gz", "case_001/rater_2.nii.gz"],
//!       "algorithm_predictions": { "team_x": "case_001/team_x.nii.gz" }
//!     }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the directory containing the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Clinical difficulty stratum of a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
    C,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::A, Group::B, Group::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::A => "A",
            Group::B => "B",
            Group::C => "C",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Group::A),
            "B" => Ok(Group::B),
            "C" => Ok(Group::C),
            other => Err(Error::validation(format!("unknown group '{other}' (expected A, B or C)"))),
        }
    }
}

/// On-disk form of the manifest, with paths as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub cases: Vec<CaseDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub case_id: String,
    pub group: String,
    pub rater_annotations: Vec<String>,
    pub algorithm_predictions: BTreeMap<String, String>,
}

/// A validated case with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEntry {
    pub case_id: String,
    pub group: Group,
    pub rater_annotations: Vec<PathBuf>,
    pub algorithm_predictions: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub cases: Vec<CaseEntry>,
    /// SHA-256 of the manifest bytes, hex encoded.
    pub sha256: String,
}

impl DatasetManifest {
    pub fn rater_count(&self) -> usize {
        self.cases.first().map_or(0, |c| c.rater_annotations.len())
    }

    pub fn case(&self, case_id: &str) -> Option<&CaseEntry> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// Union of algorithm names over all cases, sorted.
    pub fn algorithms(&self) -> Vec<String> {
        let set: BTreeSet<&String> =
            self.cases.iter().flat_map(|c| c.algorithm_predictions.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn group_of(&self, case_id: &str) -> Option<Group> {
        self.case(case_id).map(|c| c.group)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let doc: ManifestDocument = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(format!("{}: manifest JSON: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    validate(doc, base_dir, sha256)
}

/// Validates a parsed manifest. Problems are collected and reported together.
pub fn validate(doc: ManifestDocument, base_dir: PathBuf, sha256: String) -> Result<DatasetManifest> {
    let mut problems = Vec::new();
    if doc.cases.is_empty() {
        problems.push("manifest lists no cases".to_string());
    }
    let mut seen = BTreeSet::new();
    let expected_raters = doc.cases.first().map(|c| c.rater_annotations.len());
    let mut cases = Vec::with_capacity(doc.cases.len());
    for case in doc.cases {
        let id = case.case_id.clone();
        if id.is_empty() {
            problems.push("empty case_id".to_string());
        }
        if !seen.insert(id.clone()) {
            problems.push(format!("duplicate case_id '{id}'"));
        }
        let group = match case.group.parse::<Group>() {
            Ok(g) => g,
            Err(_) => {
                problems.push(format!("case '{id}': unknown group '{}' (expected A, B or C)", case.group));
                Group::A
            }
        };
        let raters = case.rater_annotations.len();
        if raters < 2 {
            problems.push(format!("case '{id}': needs at least 2 rater annotations, has {raters}"));
        }
        if let Some(expected) = expected_raters {
            if raters != expected {
                problems.push(format!(
                    "case '{id}': has {raters} rater annotations, other cases have {expected}"
                ));
            }
        }
        let mut check = |rel: &str| {
            let p = base_dir.join(rel);
            if !p.is_file() {
                problems.push(format!("case '{id}': missing file {}", p.display()));
            }
            p
        };
        let rater_annotations: Vec<PathBuf> = case.rater_annotations.iter().map(|r| check(r)).collect();
        let algorithm_predictions: BTreeMap<String, PathBuf> = case
            .algorithm_predictions
            .iter()
            .map(|(name, rel)| (name.clone(), check(rel)))
            .collect();
        if algorithm_predictions.keys().any(String::is_empty) {
            problems.push(format!("case '{id}': empty algorithm name"));
        }
        cases.push(CaseEntry { case_id: id, group, rater_annotations, algorithm_predictions });
    }
    if problems.is_empty() {
        Ok(DatasetManifest { base_dir, cases, sha256 })
    } else {
        Err(Error::validation(problems.join("; ")))
    }
}

/// Writes a manifest document as pretty JSON.
pub fn write_manifest(doc: &ManifestDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(doc).expect("manifest serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::ExpansionCandidate;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::GroupId;

/// One expansion run: the seeds used and the ranked output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Snapshot<F: Scalar> {
    pub seeds: Vec<GroupId>,
    pub expanded: Vec<ExpansionCandidate<F>>,
}

/// A named semantic class under construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Category<F: Scalar> {
    pub name: String,
    /// Seeds chosen by the user for the first expansion.
    pub seeds: Vec<GroupId>,
    /// Latest ranked expansion.
    pub expanded: Vec<ExpansionCandidate<F>>,
    /// Members excluded from groups while this category was edited.
    #[serde(default)]
    pub exclusions: BTreeMap<GroupId, BTreeSet<String>>,
    /// Every expansion run, oldest first; the last entry mirrors `expanded`.
    #[serde(default)]
    pub history: Vec<Snapshot<F>>,
}

impl<F: Scalar> Category<F> {
    pub fn new(name: impl Into<String>, seeds: Vec<GroupId>, expanded: Vec<ExpansionCandidate<F>>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::Config("category name must not be empty".into()));
        }
        let mut c = Category {
            name,
            seeds: seeds.clone(),
            expanded: Vec::new(),
            exclusions: BTreeMap::new(),
            history: Vec::new(),
        };
        c.record(seeds, expanded);
        Ok(c)
    }

    /// Makes `expanded` the current result and appends it to the history.
    pub fn record(&mut self, seeds: Vec<GroupId>, expanded: Vec<ExpansionCandidate<F>>) {
        self.history.push(Snapshot {
            seeds,
            expanded: expanded.clone(),
        });
        self.expanded = expanded;
    }

    /// Sets the "completed" flag of an expanded term.
    pub fn validate(&mut self, gid: GroupId, completed: bool) -> Result<()> {
        let c = self
            .expanded
            .iter_mut()
            .find(|c| c.group_id == gid)
            .ok_or_else(|| Error::NotFound(format!("term {gid} is not in category {:?}", self.name)))?;
        c.validated = completed;
        if let Some(last) = self.history.last_mut() {
            if let Some(h) = last.expanded.iter_mut().find(|c| c.group_id == gid) {
                h.validated = completed;
            }
        }
        Ok(())
    }

    pub fn validated(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.expanded.iter().filter(|c| c.validated).map(|c| c.group_id)
    }
}

/// Filesystem-safe form of a category name.
pub fn slug(name: &str) -> Result<String> {
    let mut out = String::new();
    for ch in name.trim().chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            out.push(ch);
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_matches('-').to_string();
    if out.is_empty() {
        return Err(Error::Config(format!(
            "category name {name:?} has no usable characters"
        )));
    }
    Ok(out)
}

/// Categories stored as one pretty-printed JSON file each.
#[derive(Debug)]
pub struct CategoryStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl CategoryStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(CategoryStore {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, slug: &str) -> PathBuf {
        self.dir.join(format!("{slug}.json"))
    }

    fn lock(&self, slug: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(slug.to_string()).or_default().clone()
    }

    pub fn save<F: Scalar>(&self, category: &Category<F>, overwrite: bool) -> Result<()> {
        let slug = slug(&category.name)?;
        let lock = self.lock(&slug);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.path(&slug);
        if path.exists() {
            let existing: Category<F> = read_json(&path)?;
            if !overwrite || existing.name != category.name {
                return Err(Error::Conflict(format!("category {:?} already exists", existing.name)));
            }
        }
        let text = serde_json::to_string_pretty(category).map_err(|e| Error::Format(e.to_string()))?;
        let tmp = self.dir.join(format!(".{slug}.json.tmp"));
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn load<F: Scalar>(&self, name: &str) -> Result<Category<F>> {
        let slug = slug(name).map_err(|_| Error::NotFound(format!("category {name:?}")))?;
        let path = self.path(&slug);
        if !path.exists() {
            return Err(Error::NotFound(format!("category {name:?}")));
        }
        let lock = self.lock(&slug);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        read_json(&path)
    }

    /// Names of all saved categories, sorted.
    pub fn names(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&self.dir, e))?.path();
            let is_json = path.extension().is_some_and(|x| x == "json");
            let hidden = path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
            if is_json && !hidden {
                let v: serde_json::Value = read_json(&path)?;
                if let Some(n) = v.get("name").and_then(|n| n.as_str()) {
                    names.push(n.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::FeatureVector;

    fn cand(id: GroupId, certainty: f32, is_seed: bool) -> ExpansionCandidate<f32> {
        ExpansionCandidate {
            group_id: id,
            features: FeatureVector {
                values: [0.25; 10],
                presence_count: 10,
            },
            certainty,
            is_seed,
            validated: false,
        }
    }

    fn sample(name: &str) -> Category<f32> {
        let mut c = Category::new(
            name,
            vec![1, 2],
            vec![cand(1, 1.0, true), cand(2, 1.0, true), cand(9, 0.73, false)],
        )
        .unwrap();
        c.validate(9, true).unwrap();
        c.exclusions.insert(4, BTreeSet::from(["ny".to_string()]));
        c.record(
            vec![1, 2, 9],
            vec![cand(1, 1.0, true), cand(2, 1.0, true), cand(9, 1.0, true)],
        );
        c
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Programming Languages").unwrap(), "programming-languages");
        assert_eq!(slug("  C/C++ tools!! ").unwrap(), "c-c-tools");
        assert!(slug("!!!").is_err());
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let store = CategoryStore::open(dir.path()).unwrap();
        let c = sample("Programming Languages");
        store.save(&c, false).unwrap();
        let back: Category<f32> = store.load("Programming Languages").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.history.len(), 2);
        assert!(back.history[0].expanded[2].validated);
    }

    #[test]
    fn conflict_and_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = CategoryStore::open(dir.path()).unwrap();
        let c = sample("fruit");
        store.save(&c, false).unwrap();
        assert!(matches!(store.save(&c, false), Err(Error::Conflict(_))));
        store.save(&c, true).unwrap();
        // a different name that maps to the same file is still a conflict
        assert!(matches!(store.save(&sample("Fruit"), true), Err(Error::Conflict(_))));
        assert!(matches!(store.load::<f32>("nonexistent"), Err(Error::NotFound(_))));
    }

    #[test]
    fn predefined_and_custom_names_persist() {
        let dir = tempfile::tempdir().unwrap();
        let store = CategoryStore::open(dir.path()).unwrap();
        store.save(&sample("Programming Languages"), false).unwrap();
        store.save(&sample("my odd category #7"), false).unwrap();
        assert_eq!(store.names().unwrap(), ["Programming Languages", "my odd category #7"]);
    }

    #[test]
    fn validate_unknown_term() {
        let mut c = sample("x");
        assert!(matches!(c.validate(1234, true), Err(Error::NotFound(_))));
        assert!(Category::<f32>::new(" ", vec![1], vec![]).is_err());
    }
}

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize::{initialisms, normalize_term, strip_dots};
use crate::error::{Error, Result};
use crate::GroupId;

/// A set of term variants treated as one unit for embedding and display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermGroup {
    pub id: GroupId,
    pub members: BTreeSet<String>,
    pub display_name: String,
    pub excluded: BTreeSet<String>,
}

impl TermGroup {
    pub fn singleton(id: GroupId, member: impl Into<String>) -> Self {
        let m = member.into();
        TermGroup {
            id,
            display_name: m.clone(),
            members: BTreeSet::from([m]),
            excluded: BTreeSet::new(),
        }
    }

    pub fn active_members(&self) -> impl Iterator<Item = &String> {
        self.members.iter().filter(|m| !self.excluded.contains(*m))
    }

    pub fn is_multi(&self) -> bool {
        self.active_members().nth(1).is_some()
    }

    /// Marks `members` as excluded. Fails when nothing would remain.
    pub fn exclude<I, S>(&mut self, members: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut excluded = self.excluded.clone();
        for m in members {
            let m = normalize_term(m.as_ref())?;
            if !self.members.contains(&m) {
                return Err(Error::NotFound(format!("member {m:?} of group {}", self.id)));
            }
            excluded.insert(m);
        }
        if excluded.len() == self.members.len() {
            return Err(Error::EmptyGroup(self.id));
        }
        self.excluded = excluded;
        Ok(())
    }
}

/// Similarity between two normalized terms, used by the edit-distance rule.
pub trait TermSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Option<f64>;
}

/// Disables the edit-distance rule.
pub struct NoSimilarity;

impl TermSimilarity for NoSimilarity {
    fn similarity(&self, _: &str, _: &str) -> Option<f64> {
        None
    }
}

impl<F: Fn(&str, &str) -> Option<f64>> TermSimilarity for F {
    fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        self(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    /// Maximum normalized Levenshtein distance for the edit rule.
    pub edit_threshold: f64,
    /// Minimum embedding cosine for the edit rule.
    pub sim_threshold: f64,
    /// (abbreviation, expansion) pairs, merged in addition to computed initialisms.
    pub abbreviations: Vec<(String, String)>,
    /// User-supplied alias groups.
    pub aliases: Vec<Vec<String>>,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            edit_threshold: 0.15,
            sim_threshold: 0.5,
            abbreviations: bundled_abbreviations(),
            aliases: Vec::new(),
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("edit_threshold", self.edit_threshold),
            ("sim_threshold", self.sim_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

const ABBREVIATIONS: &[(&str, &str)] = &[
    ("ai", "artificial intelligence"),
    ("eu", "european union"),
    ("la", "los angeles"),
    ("ml", "machine learning"),
    ("nlp", "natural language processing"),
    ("sf", "san francisco"),
    ("uk", "united kingdom"),
    ("un", "united nations"),
    ("us", "united states"),
    ("usa", "united states"),
    ("usa", "united states of america"),
];

pub fn bundled_abbreviations() -> Vec<(String, String)> {
    ABBREVIATIONS
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Reads an alias file: one group per line, members tab-separated.
pub fn load_aliases(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| {
            l.split('\t')
                .map(str::trim)
                .filter(|m| !m.is_empty())
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .filter(|g| g.len() > 1)
        .collect())
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index wins so roots are order independent
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / max as f64
}

/// Partitions raw terms into groups of variants.
///
/// Two terms are merged when they normalize identically, when one is an
/// initialism or tabled abbreviation of the other, when they are within
/// `edit_threshold` normalized edit distance and `prelim` rates them at
/// least `sim_threshold` similar, or when an alias line lists both.
/// Groups are numbered in order of their lexicographically smallest member.
pub fn group_terms(
    term_counts: &BTreeMap<String, usize>,
    prelim: &dyn TermSimilarity,
    cfg: &GroupingConfig,
) -> Result<Vec<TermGroup>> {
    cfg.validate()?;

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (raw, &c) in term_counts {
        if let Ok(n) = normalize_term(raw) {
            *counts.entry(n).or_default() += c;
        }
    }
    let terms: Vec<&String> = counts.keys().collect();
    let pos: HashMap<&str, usize> = terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut uf = UnionFind::new(terms.len());

    let mut by_dotless: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, t) in terms.iter().enumerate() {
        if !t.contains(' ') {
            by_dotless.entry(strip_dots(t)).or_default().push(i);
        }
    }
    for (i, t) in terms.iter().enumerate() {
        for abbr in initialisms(t) {
            if abbr.chars().count() < 2 {
                continue;
            }
            if let Some(js) = by_dotless.get(&abbr) {
                for &j in js {
                    uf.union(i, j);
                }
            }
        }
    }
    for (abbr, expansion) in &cfg.abbreviations {
        let (Ok(a), Ok(e)) = (normalize_term(abbr), normalize_term(expansion)) else {
            continue;
        };
        let Some(&ei) = pos.get(e.as_str()) else { continue };
        if let Some(js) = by_dotless.get(&strip_dots(&a)) {
            for &j in js {
                uf.union(ei, j);
            }
        }
    }

    // Edit rule: only pairs whose length difference can fit under the threshold.
    let mut by_len: Vec<(usize, usize)> = terms.iter().enumerate().map(|(i, t)| (t.chars().count(), i)).collect();
    by_len.sort_unstable();
    for a in 0..by_len.len() {
        let (la, ia) = by_len[a];
        for &(lb, ib) in &by_len[a + 1..] {
            if (lb - la) as f64 > cfg.edit_threshold * lb as f64 {
                break;
            }
            if normalized_levenshtein(terms[ia], terms[ib]) > cfg.edit_threshold {
                continue;
            }
            if prelim
                .similarity(terms[ia], terms[ib])
                .is_some_and(|s| s >= cfg.sim_threshold)
            {
                uf.union(ia, ib);
            }
        }
    }

    for alias in &cfg.aliases {
        let present: Vec<usize> = alias
            .iter()
            .filter_map(|m| normalize_term(m).ok())
            .filter_map(|m| pos.get(m.as_str()).copied())
            .collect();
        for w in present.windows(2) {
            uf.union(w[0], w[1]);
        }
    }

    let mut roots: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..terms.len() {
        let r = uf.find(i);
        roots.entry(r).or_default().push(i);
    }
    // Roots are the smallest index of each class, so BTreeMap order is the
    // order of each group's smallest member.
    Ok(roots
        .into_values()
        .enumerate()
        .map(|(gid, idxs)| {
            let members: BTreeSet<String> = idxs.iter().map(|&i| terms[i].clone()).collect();
            let display_name = idxs
                .iter()
                .map(|&i| (counts[terms[i]], terms[i]))
                .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)))
                .map(|(_, t)| t.clone())
                .expect("non-empty group");
            TermGroup {
                id: gid as GroupId,
                members,
                display_name,
                excluded: BTreeSet::new(),
            }
        })
        .collect())
}

/// Writes groups as `id \t display \t member ... \t !excluded ...` lines.
pub fn save_groups(path: &Path, groups: &[TermGroup]) -> Result<()> {
    let mut out = String::new();
    for g in groups {
        out.push_str(&g.id.to_string());
        let ordered = std::iter::once(&g.display_name).chain(g.members.iter().filter(|m| **m != g.display_name));
        for m in ordered {
            out.push('\t');
            if g.excluded.contains(m) {
                out.push('!');
            }
            out.push_str(m);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_groups(path: &Path) -> Result<Vec<TermGroup>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut groups = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |message: &str| Error::Parse {
            line: i + 1,
            message: message.to_string(),
        };
        let mut fields = line.split('\t');
        let id: GroupId = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("missing group id"))?;
        let mut members = BTreeSet::new();
        let mut excluded = BTreeSet::new();
        let mut display = None;
        for f in fields {
            let (name, ex) = match f.strip_prefix('!') {
                Some(n) => (n, true),
                None => (f, false),
            };
            if name.is_empty() {
                return Err(bad("empty member"));
            }
            display.get_or_insert_with(|| name.to_string());
            members.insert(name.to_string());
            if ex {
                excluded.insert(name.to_string());
            }
        }
        let display_name = display.ok_or_else(|| bad("group has no members"))?;
        groups.push(TermGroup {
            id,
            members,
            display_name,
            excluded,
        });
    }
    Ok(groups)
}

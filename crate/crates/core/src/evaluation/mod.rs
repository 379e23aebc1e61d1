//! MAP@n scoring and synthetic corpora with known classes.

mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use synthetic::{generate_synthetic_corpus, write_synthetic_corpus, ClassSpec, SyntheticCorpus, SyntheticSpec};

use crate::error::{Error, Result};
use crate::terms::{normalize_term, TermIndex};
use crate::GroupId;

/// A gold class given by raw member strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldClassSpec {
    pub name: String,
    pub members: Vec<String>,
}

/// A gold class resolved to term groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldClass {
    pub name: String,
    pub members: BTreeSet<GroupId>,
}

/// Reads `class_name \t member \t member ...` lines.
pub fn parse_gold(text: &str) -> Result<Vec<GoldClassSpec>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t').map(str::trim).filter(|c| !c.is_empty());
        let name = cols.next().unwrap_or_default().to_string();
        let members: Vec<String> = cols.map(str::to_string).collect();
        if members.len() < 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("class {name:?} needs at least two members"),
            });
        }
        out.push(GoldClassSpec { name, members });
    }
    Ok(out)
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldClassSpec>> {
    parse_gold(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn format_gold(classes: &[GoldClassSpec]) -> String {
    let mut s = String::new();
    for c in classes {
        writeln!(s, "{}\t{}", c.name, c.members.join("\t")).expect("write to String");
    }
    s
}

/// Maps member strings to groups; unknown members are dropped with a
/// warning and classes left with fewer than two members are skipped.
pub fn resolve_gold(specs: &[GoldClassSpec], index: &TermIndex) -> Vec<GoldClass> {
    let mut out = Vec::new();
    for spec in specs {
        let mut members = BTreeSet::new();
        for m in &spec.members {
            match normalize_term(m).ok().and_then(|n| index.lookup(&n)) {
                Some(g) => {
                    members.insert(g);
                }
                None => warn!("gold member {m:?} of {:?} is not a known term", spec.name),
            }
        }
        if members.len() >= 2 {
            out.push(GoldClass {
                name: spec.name.clone(),
                members,
            });
        } else {
            warn!("gold class {:?} resolves to fewer than two terms; skipped", spec.name);
        }
    }
    out
}

/// Average precision over the top `n`, normalized by
/// `min(|relevant|, n)`. `ranked` must not contain the seeds.
pub fn average_precision_at_n(ranked: &[GroupId], relevant: &BTreeSet<GroupId>, n: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::UndefinedMetric("no relevant items".into()));
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("n must be at least 1".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, g) in ranked.iter().take(n).enumerate() {
        if relevant.contains(g) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(n) as f64)
}

/// Anything that can rank terms for a seed set.
pub trait Ranker: Sync {
    /// Up to `n` non-seed terms, best first.
    fn rank(&self, seeds: &[GroupId], n: usize) -> Result<Vec<GroupId>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub queries_per_class: usize,
    pub min_seeds: usize,
    pub max_seeds: usize,
    pub cutoffs: Vec<usize>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            queries_per_class: 20,
            min_seeds: 2,
            max_seeds: 10,
            cutoffs: vec![10, 20, 50],
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub class: String,
    pub seeds: Vec<GroupId>,
    pub relevant: BTreeSet<GroupId>,
}

/// Draws evaluation queries; each keeps at least one relevant member.
pub fn sample_queries(gold: &[GoldClass], cfg: &EvalConfig) -> Result<Vec<EvalQuery>> {
    if cfg.min_seeds == 0 || cfg.min_seeds > cfg.max_seeds {
        return Err(Error::Config("seed size range is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for class in gold {
        let members: Vec<GroupId> = class.members.iter().copied().collect();
        if members.len() <= cfg.min_seeds {
            warn!("class {:?} is too small to query; skipped", class.name);
            continue;
        }
        for _ in 0..cfg.queries_per_class {
            let hi = cfg.max_seeds.min(members.len() - 1);
            let size = rng.random_range(cfg.min_seeds..=hi);
            let seeds: Vec<GroupId> = members.choose_multiple(&mut rng, size).copied().collect();
            let relevant = members.iter().copied().filter(|m| !seeds.contains(m)).collect();
            out.push(EvalQuery {
                class: class.name.clone(),
                seeds,
                relevant,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub queries: usize,
    pub map: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: usize,
    pub map: BTreeMap<usize, f64>,
    pub per_class: Vec<ClassReport>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (n, v) in &self.map {
            writeln!(s, "MAP@{n}\t{v:.4}").expect("write to String");
        }
        writeln!(s, "queries\t{}", self.queries).expect("write to String");
        writeln!(s).expect("write to String");
        let header: Vec<String> = self.map.keys().map(|n| format!("AP@{n}")).collect();
        writeln!(s, "class\tqueries\t{}", header.join("\t")).expect("write to String");
        for c in &self.per_class {
            let vals: Vec<String> = c.map.values().map(|v| format!("{v:.4}")).collect();
            writeln!(s, "{}\t{}\t{}", c.class, c.queries, vals.join("\t")).expect("write to String");
        }
        s
    }
}

/// Scores `queries` in parallel and averages AP per cutoff.
pub fn evaluate_queries<R: Ranker + ?Sized>(
    ranker: &R,
    queries: &[EvalQuery],
    cutoffs: &[usize],
) -> Result<EvalReport> {
    let depth = cutoffs.iter().copied().max().unwrap_or(0);
    let scored: Vec<Option<Vec<f64>>> = queries
        .par_iter()
        .map(|q| -> Result<Option<Vec<f64>>> {
            let ranked = ranker.rank(&q.seeds, depth)?;
            let ranked: Vec<GroupId> = ranked.into_iter().filter(|g| !q.seeds.contains(g)).collect();
            let mut aps = Vec::with_capacity(cutoffs.len());
            for &n in cutoffs {
                match average_precision_at_n(&ranked, &q.relevant, n) {
                    Ok(v) => aps.push(v),
                    Err(Error::UndefinedMetric(m)) => {
                        warn!("query on {:?} skipped: {m}", q.class);
                        return Ok(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(aps))
        })
        .collect::<Result<_>>()?;

    let mut by_class: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
    let mut total = vec![0.0; cutoffs.len()];
    let mut count = 0usize;
    for (q, aps) in queries.iter().zip(&scored) {
        let Some(aps) = aps else { continue };
        let entry = by_class
            .entry(q.class.as_str())
            .or_insert_with(|| (0, vec![0.0; cutoffs.len()]));
        entry.0 += 1;
        for (k, a) in aps.iter().enumerate() {
            entry.1[k] += a;
            total[k] += a;
        }
        count += 1;
    }
    let avg = |sums: &[f64], n: usize| -> BTreeMap<usize, f64> {
        cutoffs
            .iter()
            .zip(sums)
            .map(|(&c, s)| (c, if n == 0 { 0.0 } else { s / n as f64 }))
            .collect()
    };
    Ok(EvalReport {
        queries: count,
        map: avg(&total, count),
        per_class: by_class
            .into_iter()
            .map(|(class, (n, sums))| ClassReport {
                class: class.to_string(),
                queries: n,
                map: avg(&sums, n),
            })
            .collect(),
    })
}

/// MAP at each cutoff over sampled queries.
pub fn map_at_n<R: Ranker + ?Sized>(ranker: &R, gold: &[GoldClass], cfg: &EvalConfig) -> Result<EvalReport> {
    let queries = sample_queries(gold, cfg)?;
    evaluate_queries(ranker, &queries, &cfg.cutoffs)
}

/// Ranks a fixed vocabulary uniformly at random; useful as a baseline.
pub struct RandomRanker {
    pub vocab: Vec<GroupId>,
    pub seed: u64,
}

impl Ranker for RandomRanker {
    fn rank(&self, seeds: &[GroupId], n: usize) -> Result<Vec<GroupId>> {
        let mut key = self.seed;
        for s in seeds {
            key = key.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(u64::from(*s));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut v: Vec<GroupId> = self.vocab.iter().copied().filter(|g| !seeds.contains(g)).collect();
        v.shuffle(&mut rng);
        v.truncate(n);
        Ok(v)
    }
}

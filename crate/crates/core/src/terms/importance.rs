use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::grouping::TermGroup;
use super::index::OccurrenceIndex;
use crate::GroupId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub group_id: GroupId,
    pub tfidf: f64,
    /// Raw occurrence count, used to break ties.
    pub frequency: usize,
    pub df: usize,
}

#[derive(Default)]
struct Tally {
    frequency: usize,
    docs: HashSet<usize>,
}

fn tfidf(frequency: usize, df: usize, n_docs: usize) -> f64 {
    // sum over documents of tf * idf, with idf constant per group
    frequency as f64 * (n_docs as f64 / df as f64).ln()
}

/// TF-IDF with raw term frequency and `ln(N / df)` idf, one score per
/// group that occurs at least once (excluded members do not count).
/// Sorted by score, then frequency, then display name.
pub fn score_importance(index: &OccurrenceIndex, groups: &[TermGroup]) -> Vec<ImportanceScore> {
    let n_docs = index.documents().len();
    let by_id: HashMap<GroupId, &TermGroup> = groups.iter().map(|g| (g.id, g)).collect();
    let mut tallies: BTreeMap<GroupId, Tally> = BTreeMap::new();
    for (di, doc) in index.documents().iter().enumerate() {
        for occ in doc.iter().flatten() {
            let Some(g) = by_id.get(&occ.group) else { continue };
            if g.excluded.contains(&occ.member) {
                continue;
            }
            let t = tallies.entry(occ.group).or_default();
            t.frequency += 1;
            t.docs.insert(di);
        }
    }
    let mut scores: Vec<ImportanceScore> = tallies
        .into_iter()
        .map(|(group_id, t)| ImportanceScore {
            group_id,
            tfidf: tfidf(t.frequency, t.docs.len(), n_docs),
            frequency: t.frequency,
            df: t.docs.len(),
        })
        .collect();
    sort_scores(&mut scores, &by_id);
    scores
}

fn sort_scores(scores: &mut [ImportanceScore], groups: &HashMap<GroupId, &TermGroup>) {
    let name = |id: GroupId| groups.get(&id).map_or("", |g| g.display_name.as_str());
    scores.sort_by(|a, b| {
        b.tfidf
            .total_cmp(&a.tfidf)
            .then(b.frequency.cmp(&a.frequency))
            .then_with(|| name(a.group_id).cmp(name(b.group_id)))
            .then(a.group_id.cmp(&b.group_id))
    });
}

/// Sets each group's display name to its most important active member.
pub fn assign_display_names(index: &OccurrenceIndex, groups: &mut [TermGroup]) {
    let n_docs = index.documents().len();
    let mut tallies: HashMap<(GroupId, &str), Tally> = HashMap::new();
    for (di, doc) in index.documents().iter().enumerate() {
        for occ in doc.iter().flatten() {
            let t = tallies.entry((occ.group, occ.member.as_str())).or_default();
            t.frequency += 1;
            t.docs.insert(di);
        }
    }
    for g in groups.iter_mut() {
        let best = g
            .active_members()
            .map(|m| {
                let (score, freq) = tallies
                    .get(&(g.id, m.as_str()))
                    .map_or((0.0, 0), |t| (tfidf(t.frequency, t.docs.len(), n_docs), t.frequency));
                (score, freq, m)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| b.2.cmp(a.2)))
            .map(|(_, _, m)| m.clone());
        if let Some(best) = best {
            g.display_name = best;
        }
    }
}

/// The `n` highest-scoring groups, optionally restricted to groups with an
/// active member containing `filter` (case-insensitive).
pub fn top_groups<'a>(
    scores: &'a [ImportanceScore],
    groups: &'a [TermGroup],
    n: usize,
    filter: Option<&str>,
) -> Vec<(&'a TermGroup, &'a ImportanceScore)> {
    let by_id: HashMap<GroupId, &TermGroup> = groups.iter().map(|g| (g.id, g)).collect();
    let needle = filter.map(str::to_lowercase).filter(|f| !f.is_empty());
    let mut ranked: Vec<&ImportanceScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.tfidf
            .total_cmp(&a.tfidf)
            .then(b.frequency.cmp(&a.frequency))
            .then_with(|| {
                let na = by_id.get(&a.group_id).map_or("", |g| g.display_name.as_str());
                let nb = by_id.get(&b.group_id).map_or("", |g| g.display_name.as_str());
                na.cmp(nb)
            })
            .then(a.group_id.cmp(&b.group_id))
    });
    ranked
        .into_iter()
        .filter_map(|s| by_id.get(&s.group_id).map(|g| (*g, s)))
        .filter(|(g, _)| match &needle {
            Some(f) => g.active_members().any(|m| m.to_lowercase().contains(f.as_str())),
            None => true,
        })
        .take(n)
        .collect()
}

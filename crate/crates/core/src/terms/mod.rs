//! Candidate term extraction, variant grouping, occurrence indexing and
//! TF-IDF importance.

mod chunk;
mod grouping;
mod importance;
mod index;
mod normalize;

use std::collections::BTreeMap;

pub use chunk::{chunk_noun_phrases, is_stopword, TermSpan, MAX_CHUNK_TOKENS, STOPWORDS};
pub use grouping::{
    bundled_abbreviations, group_terms, load_aliases, load_groups, save_groups, GroupingConfig, NoSimilarity,
    TermGroup, TermSimilarity,
};
pub use importance::{assign_display_names, score_importance, top_groups, ImportanceScore};
pub use index::{Occurrence, OccurrenceIndex, Posting, TermIndex};
pub use normalize::normalize_term;

use crate::corpus::Corpus;

/// Counts candidate term surfaces across the corpus. Chunks of tagged
/// sentences are all kept; unigram/bigram fallback candidates from untagged
/// sentences must reach `fallback_min_count`.
pub fn candidate_term_counts(corpus: &Corpus, fallback_min_count: usize) -> BTreeMap<String, usize> {
    let mut tagged: BTreeMap<String, usize> = BTreeMap::new();
    let mut fallback: BTreeMap<String, usize> = BTreeMap::new();
    for s in corpus.sentences() {
        let target = if s.is_tagged() { &mut tagged } else { &mut fallback };
        for span in chunk_noun_phrases(s) {
            *target.entry(span.surface).or_default() += 1;
        }
    }
    // frequency is judged on the normalized form so case variants pool
    let mut pooled: BTreeMap<String, usize> = BTreeMap::new();
    for (surface, c) in &fallback {
        if let Ok(n) = normalize_term(surface) {
            *pooled.entry(n).or_default() += c;
        }
    }
    for (surface, c) in fallback {
        let keep = normalize_term(&surface)
            .ok()
            .and_then(|n| pooled.get(&n))
            .is_some_and(|&total| total >= fallback_min_count);
        if keep {
            *tagged.entry(surface).or_default() += c;
        }
    }
    tagged
}

use std::collections::HashMap;

use super::grouping::TermGroup;
use super::normalize::normalize_term;
use crate::corpus::{Corpus, Sentence};
use crate::GroupId;

/// One resolved occurrence of a term group inside a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occurrence {
    pub group: GroupId,
    /// Normalized member that matched.
    pub member: String,
    pub start: usize,
    pub end: usize,
}

/// Dictionary from normalized member to group, used to resolve term
/// occurrences by greedy longest match.
#[derive(Debug, Clone, Default)]
pub struct TermIndex {
    dict: HashMap<String, GroupId>,
    max_words: usize,
}

impl TermIndex {
    /// Excluded members are left out, so their occurrences read as plain words.
    pub fn new(groups: &[TermGroup]) -> Self {
        let mut dict = HashMap::new();
        let mut max_words = 0;
        for g in groups {
            for m in g.active_members() {
                // treebanks split clitics and hyphens, so one word may span two tokens
                max_words = max_words.max(2 * m.split(' ').count());
                dict.insert(m.clone(), g.id);
            }
        }
        TermIndex { dict, max_words }
    }

    pub fn lookup(&self, normalized: &str) -> Option<GroupId> {
        self.dict.get(normalized).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.dict.is_empty()
    }

    /// Non-overlapping occurrences, leftmost-longest first. Spans never
    /// begin or end on a punctuation token.
    pub fn resolve(&self, sentence: &Sentence) -> Vec<Occurrence> {
        let toks = &sentence.tokens;
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            if toks[i].is_punct() {
                i += 1;
                continue;
            }
            let longest = (1..=self.max_words.min(toks.len() - i)).rev().find_map(|len| {
                let end = i + len;
                if toks[end - 1].is_punct() {
                    return None;
                }
                let key = normalize_term(&sentence.span_text(i, end)).ok()?;
                self.dict.get(&key).map(|&g| (end, g, key))
            });
            match longest {
                Some((end, group, member)) => {
                    out.push(Occurrence {
                        group,
                        member,
                        start: i,
                        end,
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Document position within the corpus.
    pub doc: usize,
    /// Sentence position within the document.
    pub sent: usize,
    /// Position within that sentence's occurrence list.
    pub slot: usize,
}

/// Occurrences of every group across a corpus.
#[derive(Debug, Clone, Default)]
pub struct OccurrenceIndex {
    by_sentence: Vec<Vec<Vec<Occurrence>>>,
    postings: HashMap<GroupId, Vec<Posting>>,
}

impl OccurrenceIndex {
    pub fn build(corpus: &Corpus, index: &TermIndex) -> Self {
        let mut by_sentence = Vec::with_capacity(corpus.documents().len());
        let mut postings: HashMap<GroupId, Vec<Posting>> = HashMap::new();
        for (di, doc) in corpus.documents().iter().enumerate() {
            let mut sents = Vec::with_capacity(doc.sentences.len());
            for (si, s) in doc.sentences.iter().enumerate() {
                let occ = index.resolve(s);
                for (slot, o) in occ.iter().enumerate() {
                    postings.entry(o.group).or_default().push(Posting {
                        doc: di,
                        sent: si,
                        slot,
                    });
                }
                sents.push(occ);
            }
            by_sentence.push(sents);
        }
        OccurrenceIndex { by_sentence, postings }
    }

    pub fn sentence_occurrences(&self, doc: usize, sent: usize) -> &[Occurrence] {
        &self.by_sentence[doc][sent]
    }

    /// `None` when the group never occurs.
    pub fn postings(&self, group: GroupId) -> Option<&[Posting]> {
        self.postings.get(&group).map(Vec::as_slice)
    }

    pub fn documents(&self) -> &[Vec<Vec<Occurrence>>] {
        &self.by_sentence
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_plain_text, IngestConfig};

    fn sentence(text: &str) -> Sentence {
        parse_plain_text(text, "d", &IngestConfig::default())[0].sentences[0].clone()
    }

    fn groups(members: &[&[&str]]) -> Vec<TermGroup> {
        members
            .iter()
            .enumerate()
            .map(|(i, ms)| TermGroup {
                id: i as GroupId,
                members: ms.iter().map(|m| m.to_string()).collect(),
                display_name: ms[0].to_string(),
                excluded: Default::default(),
            })
            .collect()
    }

    #[test]
    fn longest_match_wins() {
        let idx = TermIndex::new(&groups(&[&["new york"], &["new york city"], &["york"]]));
        let occ = idx.resolve(&sentence("I left New York City for York."));
        let found: Vec<(GroupId, usize, usize)> = occ.iter().map(|o| (o.group, o.start, o.end)).collect();
        assert_eq!(found, [(1, 2, 5), (2, 6, 7)]);
    }

    #[test]
    fn hyphenated_token_matches_spaced_member() {
        let idx = TermIndex::new(&groups(&[&["new york"]]));
        let occ = idx.resolve(&sentence("Welcome to New-York ."));
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[0].member, "new york");
        assert_eq!((occ[0].start, occ[0].end), (2, 3));
    }

    #[test]
    fn excluded_members_do_not_resolve() {
        let mut g = groups(&[&["ny", "new york"]]);
        g[0].excluded.insert("ny".into());
        let idx = TermIndex::new(&g);
        assert!(idx.resolve(&sentence("NY is big.")).is_empty());
        assert_eq!(idx.resolve(&sentence("New York is big.")).len(), 1);
    }

    #[test]
    fn punctuation_never_bounds_a_span() {
        let idx = TermIndex::new(&groups(&[&["alaska"]]));
        let occ = idx.resolve(&sentence("In Alaska ."));
        assert_eq!((occ[0].start, occ[0].end), (1, 2));
    }
}

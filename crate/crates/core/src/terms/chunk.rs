use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;

/// Longest noun phrase the chunker emits, in tokens.
pub const MAX_CHUNK_TOKENS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpan {
    pub doc_id: String,
    pub sent_index: usize,
    /// Half-open token range.
    pub token_range: (usize, usize),
    pub surface: String,
}

fn is_nominal(pos: &str) -> bool {
    matches!(pos, "NOUN" | "PROPN")
}

fn is_modifier(pos: &str) -> bool {
    pos == "ADJ" || is_nominal(pos)
}

/// Noun phrase chunks matching `(ADJ|NOUN|PROPN)* (NOUN|PROPN)+`, at most
/// [`MAX_CHUNK_TOKENS`] long. Untagged sentences fall back to every unigram
/// and bigram without stopword or punctuation boundaries; those overlap and
/// are meant to be frequency-filtered by the caller.
pub fn chunk_noun_phrases(sentence: &Sentence) -> Vec<TermSpan> {
    if !sentence.is_tagged() {
        return fallback_ngrams(sentence);
    }
    let toks = &sentence.tokens;
    let mut spans = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if !is_modifier(&toks[i].pos) {
            i += 1;
            continue;
        }
        let mut run_end = i;
        while run_end < toks.len() && is_modifier(&toks[run_end].pos) {
            run_end += 1;
        }
        let mut s = i;
        while s < run_end {
            let mut e = (s + MAX_CHUNK_TOKENS).min(run_end);
            while e > s && !is_nominal(&toks[e - 1].pos) {
                e -= 1;
            }
            if e == s {
                s += 1;
                continue;
            }
            spans.push(span(sentence, s, e));
            s = e;
        }
        i = run_end;
    }
    spans
}

fn span(sentence: &Sentence, start: usize, end: usize) -> TermSpan {
    TermSpan {
        doc_id: sentence.doc_id.clone(),
        sent_index: sentence.sent_index,
        token_range: (start, end),
        surface: sentence.span_text(start, end),
    }
}

pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "either", "few", "for", "from", "further", "had", "has", "have",
    "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "may",
    "me", "more", "most", "must", "my", "neither", "no", "nor", "not", "of", "off", "on", "once", "only", "or",
    "other", "our", "ours", "out", "over", "own", "rather", "same", "she", "should", "so", "some", "such", "than",
    "that", "the", "their", "theirs", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "well", "were", "what", "when", "where", "which", "while",
    "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
];

pub fn is_stopword(word: &str) -> bool {
    let lower = word.to_lowercase();
    STOPWORDS.binary_search(&lower.as_str()).is_ok()
}

fn fallback_ngrams(sentence: &Sentence) -> Vec<TermSpan> {
    let toks = &sentence.tokens;
    let content = |i: usize| !toks[i].is_punct() && !is_stopword(&toks[i].surface);
    let mut spans = Vec::new();
    for i in 0..toks.len() {
        if !content(i) {
            continue;
        }
        spans.push(span(sentence, i, i + 1));
        if i + 1 < toks.len() && content(i + 1) {
            spans.push(span(sentence, i, i + 2));
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn tagged(words: &[(&str, &str)]) -> Sentence {
        let mut pos = 0;
        let tokens = words
            .iter()
            .map(|(w, p)| {
                let t = Token {
                    surface: w.to_string(),
                    lemma: w.to_lowercase(),
                    pos: p.to_string(),
                    head: None,
                    deprel: None,
                    char_span: (pos, pos + w.len()),
                };
                pos += w.len() + 1;
                t
            })
            .collect();
        Sentence {
            tokens,
            doc_id: "d".into(),
            sent_index: 0,
        }
    }

    fn surfaces(spans: &[TermSpan]) -> Vec<&str> {
        spans.iter().map(|s| s.surface.as_str()).collect()
    }

    #[test]
    fn stopword_table_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn adjective_noun_compound() {
        let s = tagged(&[
            ("a", "DET"),
            ("natural", "ADJ"),
            ("language", "NOUN"),
            ("user", "NOUN"),
            ("interface", "NOUN"),
        ]);
        assert_eq!(surfaces(&chunk_noun_phrases(&s)), ["natural language user interface"]);
    }

    #[test]
    fn coordination_terminates_chunk() {
        let s = tagged(&[
            ("Siri", "PROPN"),
            ("uses", "VERB"),
            ("voice", "NOUN"),
            ("queries", "NOUN"),
            ("and", "CCONJ"),
            ("a", "DET"),
            ("natural", "ADJ"),
            ("language", "NOUN"),
        ]);
        assert_eq!(
            surfaces(&chunk_noun_phrases(&s)),
            ["Siri", "voice queries", "natural language"]
        );
    }

    #[test]
    fn all_verbs_yield_nothing() {
        let s = tagged(&[("run", "VERB"), ("jump", "VERB")]);
        assert!(chunk_noun_phrases(&s).is_empty());
    }

    #[test]
    fn trailing_adjectives_dropped_and_cap_applied() {
        let s = tagged(&[("red", "ADJ"), ("car", "NOUN"), ("fast", "ADJ"), ("VERB", "VERB")]);
        assert_eq!(surfaces(&chunk_noun_phrases(&s)), ["red car"]);
        let long = tagged(&[("a", "NOUN"); 7]);
        let spans = chunk_noun_phrases(&long);
        assert_eq!(spans[0].token_range, (0, 5));
        assert_eq!(spans[1].token_range, (5, 7));
    }

    #[test]
    fn untagged_fallback() {
        let s = tagged(&[("the", "X"), ("red", "X"), ("car", "X"), (".", "X")]);
        assert_eq!(surfaces(&chunk_noun_phrases(&s)), ["red", "red car", "car"]);
    }
}

//! Extraction of (focus term, context unit) pairs for the five context
//! types: linear window, explicit lists, dependency arcs, symmetric
//! patterns and unary patterns.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::terms::{is_stopword, Occurrence, TermIndex};
use crate::GroupId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextType {
    Linear,
    List,
    Dep,
    #[serde(rename = "SP")]
    Sp,
    #[serde(rename = "UP")]
    Up,
}

impl ContextType {
    /// Canonical order, also the order of feature slots.
    pub const ALL: [ContextType; 5] = [
        ContextType::Linear,
        ContextType::List,
        ContextType::Dep,
        ContextType::Sp,
        ContextType::Up,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextType::Linear => "Linear",
            ContextType::List => "List",
            ContextType::Dep => "Dep",
            ContextType::Sp => "SP",
            ContextType::Up => "UP",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ContextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContextType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown context type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextPair {
    pub ctx_type: ContextType,
    pub focus: GroupId,
    pub context: String,
}

impl ContextPair {
    fn new(ctx_type: ContextType, focus: GroupId, context: impl Into<String>) -> Self {
        ContextPair {
            ctx_type,
            focus,
            context: context.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Slot {
    X,
    Y,
    Word(String),
}

/// Symmetric pattern templates such as `X rather than Y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternInventory {
    patterns: Vec<Vec<Slot>>,
}

pub const DEFAULT_PATTERNS: &[&str] = &[
    "X and Y",
    "X or Y",
    "X rather than Y",
    "X as well as Y",
    "X but not Y",
    "from X to Y",
    "either X or Y",
    "neither X nor Y",
];

impl PatternInventory {
    pub fn parse<S: AsRef<str>>(templates: &[S]) -> Result<Self> {
        let mut patterns = Vec::with_capacity(templates.len());
        for t in templates {
            let t = t.as_ref();
            let slots: Vec<Slot> = t
                .split_whitespace()
                .map(|w| match w {
                    "X" => Slot::X,
                    "Y" => Slot::Y,
                    w => Slot::Word(w.to_lowercase()),
                })
                .collect();
            let xs = slots.iter().filter(|s| **s == Slot::X).count();
            let ys = slots.iter().filter(|s| **s == Slot::Y).count();
            if xs != 1 || ys != 1 {
                return Err(Error::Config(format!(
                    "pattern {t:?} needs exactly one X and one Y slot"
                )));
            }
            patterns.push(slots);
        }
        Ok(PatternInventory { patterns })
    }
}

impl Default for PatternInventory {
    fn default() -> Self {
        PatternInventory::parse(DEFAULT_PATTERNS).expect("default patterns are valid")
    }
}

#[derive(Debug, Clone)]
pub struct ExtractConfig {
    pub window: usize,
    /// Words dropped from Linear contexts. `None` keeps function words.
    pub linear_stoplist: Option<HashSet<String>>,
    pub patterns: PatternInventory,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            window: 5,
            linear_stoplist: None,
            patterns: PatternInventory::default(),
        }
    }
}

/// A position in the unit sequence of a sentence: a whole term occurrence
/// or one non-punctuation word.
#[derive(Debug, Clone)]
struct Unit {
    group: Option<GroupId>,
    text: String,
}

fn units(sentence: &Sentence, occs: &[Occurrence]) -> Vec<Unit> {
    let mut out = Vec::with_capacity(sentence.len());
    let mut next = occs.iter().peekable();
    let mut i = 0;
    while i < sentence.len() {
        if let Some(o) = next.peek().filter(|o| o.start == i) {
            out.push(Unit {
                group: Some(o.group),
                text: sentence.span_text(o.start, o.end),
            });
            i = o.end;
            next.next();
            continue;
        }
        let t = &sentence.tokens[i];
        if !t.is_punct() {
            out.push(Unit {
                group: None,
                text: t.surface.clone(),
            });
        }
        i += 1;
    }
    out
}

pub fn extract_linear(sentence: &Sentence, index: &TermIndex, win: usize) -> Vec<ContextPair> {
    linear_pairs(&units(sentence, &index.resolve(sentence)), win)
}

fn linear_pairs(units: &[Unit], win: usize) -> Vec<ContextPair> {
    let mut out = Vec::new();
    if win == 0 {
        return out;
    }
    for (p, u) in units.iter().enumerate() {
        let Some(focus) = u.group else { continue };
        let lo = p.saturating_sub(win);
        let hi = (p + win + 1).min(units.len());
        for (q, c) in units.iter().enumerate().take(hi).skip(lo) {
            if q != p {
                out.push(ContextPair::new(ContextType::Linear, focus, c.text.clone()));
            }
        }
    }
    out
}

/// Drops single function words, leaving the content units.
pub fn content_units(pairs: &[ContextPair]) -> Vec<&str> {
    pairs
        .iter()
        .map(|p| p.context.as_str())
        .filter(|c| !is_stopword(c))
        .collect()
}

/// Inline lists: three or more term occurrences separated only by commas or
/// semicolons, optionally closed by `, and`/`, or`/`and`/`or` before the
/// last item.
pub fn extract_lists(sentence: &Sentence, index: &TermIndex) -> Vec<ContextPair> {
    list_pairs(sentence, &index.resolve(sentence))
}

fn list_pairs(sentence: &Sentence, occs: &[Occurrence]) -> Vec<ContextPair> {
    let mut out = Vec::new();
    let mut run: Vec<&Occurrence> = Vec::new();
    let mut closed = false;
    let flush = |run: &mut Vec<&Occurrence>, out: &mut Vec<ContextPair>| {
        if run.len() >= 3 {
            let members: Vec<(GroupId, String)> = run
                .iter()
                .map(|o| (o.group, sentence.span_text(o.start, o.end)))
                .collect();
            emit_all_pairs(&members, out);
        }
        run.clear();
    };
    for o in occs {
        if let Some(prev) = run.last() {
            let gap: Vec<String> = sentence.tokens[prev.end..o.start]
                .iter()
                .map(|t| t.surface.to_lowercase())
                .collect();
            let gap: Vec<&str> = gap.iter().map(String::as_str).collect();
            match gap.as_slice() {
                [","] | [";"] if !closed => {
                    run.push(o);
                    continue;
                }
                [",", "and"] | [",", "or"] | ["and"] | ["or"] if !closed => {
                    run.push(o);
                    closed = true;
                    continue;
                }
                _ => flush(&mut run, &mut out),
            }
        }
        closed = false;
        run.push(o);
    }
    flush(&mut run, &mut out);
    out
}

fn emit_all_pairs(members: &[(GroupId, String)], out: &mut Vec<ContextPair>) {
    for (i, (fg, _)) in members.iter().enumerate() {
        for (j, (cg, ctext)) in members.iter().enumerate() {
            if i != j && fg != cg {
                out.push(ContextPair::new(ContextType::List, *fg, ctext.clone()));
            }
        }
    }
}

/// Bullet lists: runs of at least three consecutive bullet sentences of one
/// document, each contributing its first term occurrence.
pub fn extract_bullet_lists(sentences: &[Sentence], index: &TermIndex) -> Vec<ContextPair> {
    let occs: Vec<Vec<Occurrence>> = sentences.iter().map(|s| index.resolve(s)).collect();
    bullet_pairs(sentences, &occs)
}

fn bullet_pairs(sentences: &[Sentence], occs: &[Vec<Occurrence>]) -> Vec<ContextPair> {
    let mut out = Vec::new();
    let mut run: Vec<(GroupId, String)> = Vec::new();
    let mut last_index: Option<usize> = None;
    for (s, o) in sentences.iter().zip(occs) {
        let item = s.bullet_marker_len().and_then(|skip| {
            o.iter()
                .find(|o| o.start >= skip)
                .map(|o| (o.group, s.span_text(o.start, o.end)))
        });
        let consecutive = last_index.is_some_and(|l| l + 1 == s.sent_index);
        match item {
            Some(item) => {
                if !consecutive && run.len() >= 3 {
                    emit_all_pairs(&run, &mut out);
                }
                if !consecutive {
                    run.clear();
                }
                run.push(item);
                last_index = Some(s.sent_index);
            }
            None => {
                if run.len() >= 3 {
                    emit_all_pairs(&run, &mut out);
                }
                run.clear();
                last_index = None;
            }
        }
    }
    if run.len() >= 3 {
        emit_all_pairs(&run, &mut out);
    }
    out
}

/// Dependency contexts. Prepositions are collapsed: a dependent `d` with a
/// `case` child `p` (or a Stanford-style `prep` head with a `pobj`) is
/// related to its head by `prep_<p.lemma>`. The focus's own head is emitted
/// with the inverse marker `-1`.
pub fn extract_dependency(sentence: &Sentence, index: &TermIndex) -> Vec<ContextPair> {
    dep_pairs(sentence, &index.resolve(sentence))
}

fn is_marker_rel(rel: &str) -> bool {
    rel == "case" || rel == "prep"
}

fn dep_pairs(sentence: &Sentence, occs: &[Occurrence]) -> Vec<ContextPair> {
    if !sentence.has_dependencies() {
        return Vec::new();
    }
    let toks = &sentence.tokens;
    let n = toks.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, t) in toks.iter().enumerate() {
        if let Some(h) = t.head {
            children[h].push(i);
        }
    }
    let mut owner: Vec<Option<&Occurrence>> = vec![None; n];
    for o in occs {
        for slot in &mut owner[o.start..o.end] {
            *slot = Some(o);
        }
    }
    let rel = |i: usize| toks[i].deprel.as_deref().unwrap_or("dep");
    let unit_text = |i: usize| match owner[i] {
        Some(o) => sentence.span_text(o.start, o.end),
        None => toks[i].surface.clone(),
    };
    // relation of token i to its head, after collapsing its case marker
    let collapsed = |i: usize| -> String {
        let own = rel(i);
        if own.starts_with("prep_") {
            return own.to_string();
        }
        match children[i].iter().find(|&&c| rel(c) == "case") {
            Some(&c) => format!("prep_{}", toks[c].lemma.to_lowercase()),
            None => own.to_string(),
        }
    };

    let mut out = Vec::new();
    for o in occs {
        let Some(f) = (o.start..o.end).find(|&i| toks[i].head.is_none_or(|h| h < o.start || h >= o.end)) else {
            continue;
        };
        let in_focus = |i: usize| i >= o.start && i < o.end;

        if let Some(g) = toks[f].head {
            let r = rel(f);
            if r == "pobj" && rel(g) == "prep" {
                if let Some(gg) = toks[g].head {
                    let label = format!("prep_{}", toks[g].lemma.to_lowercase());
                    out.push(ContextPair::new(
                        ContextType::Dep,
                        o.group,
                        format!("{}/{label}-1", unit_text(gg)),
                    ));
                }
            } else if r != "punct" && !is_marker_rel(r) {
                out.push(ContextPair::new(
                    ContextType::Dep,
                    o.group,
                    format!("{}/{}-1", unit_text(g), collapsed(f)),
                ));
            }
        }

        for &c in &children[f] {
            if in_focus(c) {
                continue;
            }
            let r = rel(c);
            if r == "punct" || r == "case" {
                continue;
            }
            if r == "prep" {
                for &obj in children[c].iter().filter(|&&x| rel(x) == "pobj") {
                    out.push(ContextPair::new(
                        ContextType::Dep,
                        o.group,
                        format!("{}/prep_{}", unit_text(obj), toks[c].lemma.to_lowercase()),
                    ));
                }
                continue;
            }
            out.push(ContextPair::new(
                ContextType::Dep,
                o.group,
                format!("{}/{}", unit_text(c), collapsed(c)),
            ));
        }
    }
    out
}

/// Symmetric pattern contexts; every match of X and Y yields both directions.
pub fn extract_symmetric(sentence: &Sentence, index: &TermIndex, patterns: &PatternInventory) -> Vec<ContextPair> {
    sp_pairs(&units(sentence, &index.resolve(sentence)), patterns)
}

fn sp_pairs(units: &[Unit], patterns: &PatternInventory) -> Vec<ContextPair> {
    let mut matches: BTreeSet<(usize, usize)> = BTreeSet::new();
    for start in 0..units.len() {
        'pattern: for pat in &patterns.patterns {
            if start + pat.len() > units.len() {
                continue;
            }
            let (mut x, mut y) = (0, 0);
            for (k, slot) in pat.iter().enumerate() {
                let u = &units[start + k];
                match slot {
                    Slot::X | Slot::Y if u.group.is_none() => continue 'pattern,
                    Slot::X => x = start + k,
                    Slot::Y => y = start + k,
                    Slot::Word(w) => {
                        if u.text.to_lowercase() != *w {
                            continue 'pattern;
                        }
                    }
                }
            }
            matches.insert((x, y));
        }
    }
    let mut out = Vec::new();
    for (x, y) in matches {
        let (gx, gy) = (units[x].group.expect("slot"), units[y].group.expect("slot"));
        if gx == gy {
            continue;
        }
        out.push(ContextPair::new(ContextType::Sp, gx, units[y].text.clone()));
        out.push(ContextPair::new(ContextType::Sp, gy, units[x].text.clone()));
    }
    out
}

/// (left, right) context widths of the six unary n-gram templates.
pub const UNARY_TEMPLATES: [(usize, usize); 6] = [(3, 1), (2, 2), (2, 1), (1, 3), (1, 2), (1, 1)];

pub const PLACEHOLDER: &str = "__";

/// Unary pattern contexts: up to six n-grams around each focus occurrence,
/// with the focus replaced by `__`. Templates that would run past the
/// sentence are dropped.
pub fn extract_unary(sentence: &Sentence, index: &TermIndex) -> Vec<ContextPair> {
    up_pairs(&units(sentence, &index.resolve(sentence)))
}

fn up_pairs(units: &[Unit]) -> Vec<ContextPair> {
    let mut out = Vec::new();
    for (p, u) in units.iter().enumerate() {
        let Some(focus) = u.group else { continue };
        let right_avail = units.len() - p - 1;
        for (left, right) in UNARY_TEMPLATES {
            if left > p || right > right_avail {
                continue;
            }
            let gram: Vec<&str> = units[p - left..p]
                .iter()
                .map(|u| u.text.as_str())
                .chain(std::iter::once(PLACEHOLDER))
                .chain(units[p + 1..=p + right].iter().map(|u| u.text.as_str()))
                .collect();
            out.push(ContextPair::new(ContextType::Up, focus, gram.join(" ")));
        }
    }
    out
}

/// Pairs of one context type with frequency tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairStream {
    pub pairs: Vec<ContextPair>,
    pub focus_counts: BTreeMap<GroupId, usize>,
    pub context_counts: HashMap<String, usize>,
}

impl PairStream {
    pub fn from_pairs(pairs: Vec<ContextPair>) -> Self {
        let mut focus_counts = BTreeMap::new();
        let mut context_counts = HashMap::new();
        for p in &pairs {
            *focus_counts.entry(p.focus).or_default() += 1;
            *context_counts.entry(p.context.clone()).or_default() += 1;
        }
        PairStream {
            pairs,
            focus_counts,
            context_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextStreams {
    streams: [PairStream; 5],
}

impl ContextStreams {
    pub fn get(&self, t: ContextType) -> &PairStream {
        &self.streams[t.index()]
    }

    pub fn into_streams(self) -> [PairStream; 5] {
        self.streams
    }
}

/// Runs every extractor over the corpus. Documents are processed in
/// parallel; output order follows corpus order.
pub fn extract_all(corpus: &Corpus, index: &TermIndex, cfg: &ExtractConfig) -> ContextStreams {
    let per_doc: Vec<[Vec<ContextPair>; 5]> = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let mut acc: [Vec<ContextPair>; 5] = Default::default();
            let occs: Vec<Vec<Occurrence>> = doc.sentences.iter().map(|s| index.resolve(s)).collect();
            for (s, o) in doc.sentences.iter().zip(&occs) {
                let u = units(s, o);
                let mut linear = linear_pairs(&u, cfg.window);
                if let Some(stop) = &cfg.linear_stoplist {
                    linear.retain(|p| !stop.contains(&p.context.to_lowercase()));
                }
                acc[0].extend(linear);
                acc[1].extend(list_pairs(s, o));
                acc[2].extend(dep_pairs(s, o));
                acc[3].extend(sp_pairs(&u, &cfg.patterns));
                acc[4].extend(up_pairs(&u));
            }
            acc[1].extend(bullet_pairs(&doc.sentences, &occs));
            acc
        })
        .collect();
    let mut merged: [Vec<ContextPair>; 5] = Default::default();
    for doc in per_doc {
        for (m, d) in merged.iter_mut().zip(doc) {
            m.extend(d);
        }
    }
    ContextStreams {
        streams: merged.map(PairStream::from_pairs),
    }
}

/// Writes `ctx_type \t focus \t context` lines.
pub fn write_pairs<W: Write>(w: &mut W, pairs: &[ContextPair]) -> std::io::Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.ctx_type, p.focus, p.context)?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(r: R) -> Result<Vec<ContextPair>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| Error::Parse {
            line: i + 1,
            message: m,
        };
        let mut f = line.splitn(3, '\t');
        let (Some(t), Some(g), Some(c)) = (f.next(), f.next(), f.next()) else {
            return Err(bad("expected three tab-separated fields".into()));
        };
        let ctx_type = t.parse().map_err(|e: Error| bad(e.to_string()))?;
        let focus = g.parse().map_err(|_| bad(format!("bad group id {g:?}")))?;
        out.push(ContextPair::new(ctx_type, focus, c));
    }
    Ok(out)
}

//! Generator for dependency-annotated corpora with known term classes.
//!
//! Each sentence is drawn for one class and uses a frame that exercises a
//! context type: comma lists, paired coordination, a class-specific carrier
//! noun ("the <noun> of X ..."), class-specific verbs, or neutral noise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GoldClassSpec;
use crate::corpus::{parse_conllu, Document};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Members introduced by this class; members of subclasses are added
    /// to it implicitly.
    pub members: Vec<String>,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSpec>,
    pub sentences: usize,
    pub seed: u64,
    /// Share of sentences that mention one random term in a neutral frame.
    pub noise: f64,
    pub sentences_per_doc: usize,
    /// Every member is topped up to at least this many mentions.
    pub min_mentions: usize,
}

const CONSONANTS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "l", "s", "k"];

const OBJECTS: &[&str] = &["plan", "report", "box", "note", "sample", "list"];
const ADJECTIVES: &[&str] = &["fine", "good", "odd", "new"];
const NOISE_VERBS: &[&str] = &["mentioned", "described", "noted", "covered"];
const CONNECTIVES: &[&[&str]] = &[
    &["and"],
    &["or"],
    &["rather", "than"],
    &["as", "well", "as"],
    &["but", "not"],
];

/// Invented, mutually dissimilar words.
struct Namer {
    rng: ChaCha8Rng,
    taken: Vec<String>,
}

impl Namer {
    fn new(seed: u64, reserved: &[&str]) -> Self {
        Namer {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_4a3e),
            taken: reserved.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(CONSONANTS.choose(&mut self.rng).expect("non-empty"));
                w.push_str(VOWELS.choose(&mut self.rng).expect("non-empty"));
            }
            w.push_str(CODAS.choose(&mut self.rng).expect("non-empty"));
            let distinct = self.taken.iter().all(|t| {
                let d = strsim::levenshtein(t, &w) as f64 / t.len().max(w.len()) as f64;
                d > 0.34
            });
            if distinct {
                self.taken.push(w.clone());
                return w;
            }
        }
    }

    /// A term of one word, or two words one time in five.
    fn term(&mut self) -> String {
        if self.rng.random_range(0..5) == 0 {
            format!("{} {}", self.word(), self.word())
        } else {
            self.word()
        }
    }
}

fn fixed_words() -> Vec<&'static str> {
    let mut v = vec!["we", "the", "of", "with", "looks", "here"];
    v.extend(OBJECTS);
    v.extend(ADJECTIVES);
    v.extend(NOISE_VERBS);
    v.extend(CONNECTIVES.iter().flat_map(|c| c.iter().copied()));
    v
}

impl SyntheticSpec {
    fn with_classes(classes: Vec<ClassSpec>, sentences: usize, seed: u64) -> Self {
        SyntheticSpec {
            classes,
            sentences,
            seed,
            noise: 0.15,
            sentences_per_doc: 20,
            min_mentions: 5,
        }
    }

    /// `c` flat classes of `m` invented members each.
    pub fn uniform(c: usize, m: usize, sentences: usize, seed: u64) -> Result<Self> {
        if c < 2 || m < 5 {
            return Err(Error::Config(format!(
                "need at least 2 classes of 5 members, got {c} x {m}"
            )));
        }
        let mut namer = Namer::new(seed, &fixed_words());
        let classes = (0..c)
            .map(|i| ClassSpec {
                name: format!("class{i:02}"),
                members: (0..m).map(|_| namer.term()).collect(),
                parent: None,
            })
            .collect();
        Ok(Self::with_classes(classes, sentences, seed))
    }

    /// Fruit with a citrus subclass, plus `extra` invented classes of `m`
    /// members.
    pub fn fruit_citrus(extra: usize, m: usize, sentences: usize, seed: u64) -> Result<Self> {
        if m < 5 {
            return Err(Error::Config("members per class must be at least 5".into()));
        }
        let citrus = [
            "orange",
            "lemon",
            "grapefruit",
            "lime",
            "mandarin",
            "tangerine",
            "pomelo",
            "citron",
            "kumquat",
            "yuzu",
        ];
        let other = [
            "apple", "banana", "pear", "plum", "cherry", "mango", "peach", "kiwi", "papaya", "apricot",
        ];
        let mut reserved = fixed_words();
        reserved.extend(citrus);
        reserved.extend(other);
        let mut namer = Namer::new(seed, &reserved);
        let mut classes = vec![
            ClassSpec {
                name: "fruit".into(),
                members: other.iter().map(|s| s.to_string()).collect(),
                parent: None,
            },
            ClassSpec {
                name: "citrus".into(),
                members: citrus.iter().map(|s| s.to_string()).collect(),
                parent: Some(0),
            },
        ];
        for i in 0..extra {
            classes.push(ClassSpec {
                name: format!("class{i:02}"),
                members: (0..m).map(|_| namer.term()).collect(),
                parent: None,
            });
        }
        Ok(Self::with_classes(classes, sentences, seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.parent.is_some_and(|p| p >= i) {
                return Err(Error::Config(format!("class {:?} must follow its parent", c.name)));
            }
        }
        let pools = self.pools();
        if let Some((c, _)) = self.classes.iter().zip(&pools).find(|(_, p)| p.len() < 5) {
            return Err(Error::Config(format!("class {:?} has fewer than 5 members", c.name)));
        }
        if self.sentences == 0 || self.sentences_per_doc == 0 {
            return Err(Error::Config("sentence counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config("noise must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Members of each class including those of its subclasses.
    fn pools(&self) -> Vec<Vec<String>> {
        let mut pools: Vec<Vec<String>> = self.classes.iter().map(|c| c.members.clone()).collect();
        for i in (0..self.classes.len()).rev() {
            if let Some(p) = self.classes[i].parent {
                let child = pools[i].clone();
                pools[p].extend(child);
            }
        }
        pools
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub conllu: String,
    pub gold: Vec<GoldClassSpec>,
}

impl SyntheticCorpus {
    pub fn documents(&self) -> Result<Vec<Document>> {
        parse_conllu(&self.conllu, "synthetic")
    }
}

struct Tok {
    form: String,
    upos: &'static str,
    head: usize,
    rel: &'static str,
}

#[derive(Default)]
struct Builder {
    toks: Vec<Tok>,
}

impl Builder {
    fn word(&mut self, form: &str, upos: &'static str) -> usize {
        self.toks.push(Tok {
            form: form.to_string(),
            upos,
            head: 0,
            rel: "root",
        });
        self.toks.len()
    }

    /// Pushes a possibly multi-word term; returns its head word.
    fn term(&mut self, term: &str) -> usize {
        let ids: Vec<usize> = term.split(' ').map(|w| self.word(w, "NOUN")).collect();
        let head = *ids.last().expect("terms are non-empty");
        for &i in &ids[..ids.len() - 1] {
            self.attach(i, head, "compound");
        }
        head
    }

    fn attach(&mut self, id: usize, head: usize, rel: &'static str) {
        let t = &mut self.toks[id - 1];
        t.head = head;
        t.rel = rel;
    }

    fn punct(&mut self, form: &str, head: usize) {
        let id = self.word(form, "PUNCT");
        self.attach(id, head, "punct");
    }

    fn write(&self, out: &mut String) {
        for (i, t) in self.toks.iter().enumerate() {
            let next_is_punct = self.toks.get(i + 1).is_some_and(|n| n.upos == "PUNCT");
            let misc = if next_is_punct { "SpaceAfter=No" } else { "_" };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t{}",
                i + 1,
                t.form,
                t.form.to_lowercase(),
                t.upos,
                t.head,
                t.rel,
                misc
            )
            .expect("write to String");
        }
        out.push('\n');
    }
}

struct ClassVocab {
    noun: String,
    verbs: Vec<String>,
}

fn list_sentence(b: &mut Builder, verb: &str, items: &[&String]) {
    let we = b.word("we", "PRON");
    let v = b.word(verb, "VERB");
    b.attach(we, v, "nsubj");
    let first = b.term(items[0]);
    b.attach(first, v, "obj");
    let last = items.len() - 1;
    for (k, item) in items.iter().enumerate().skip(1) {
        let (sep, rel): (&str, &'static str) = if k == last { ("and", "cc") } else { (",", "punct") };
        let s = b.word(sep, if k == last { "CCONJ" } else { "PUNCT" });
        let t = b.term(item);
        b.attach(s, t, rel);
        b.attach(t, first, "conj");
    }
    b.punct(".", v);
}

fn pair_sentence(b: &mut Builder, verb: &str, x: &str, y: &str, connective: &[&str]) {
    let we = b.word("we", "PRON");
    let v = b.word(verb, "VERB");
    b.attach(we, v, "nsubj");
    let tx = b.term(x);
    b.attach(tx, v, "obj");
    let ids: Vec<usize> = connective
        .iter()
        .map(|w| {
            let pos = match *w {
                "and" | "or" | "but" => "CCONJ",
                "not" => "PART",
                "than" => "ADP",
                _ => "ADV",
            };
            b.word(w, pos)
        })
        .collect();
    let ty = b.term(y);
    b.attach(ty, tx, "conj");
    b.attach(ids[0], ty, "cc");
    for &i in &ids[1..] {
        b.attach(i, ids[0], "fixed");
    }
    b.punct(".", v);
}

fn carrier_sentence(b: &mut Builder, noun: &str, x: &str, adj: &str) {
    let the = b.word("the", "DET");
    let n = b.word(noun, "NOUN");
    b.attach(the, n, "det");
    let of = b.word("of", "ADP");
    let t = b.term(x);
    b.attach(of, t, "case");
    b.attach(t, n, "nmod");
    let looks = b.word("looks", "VERB");
    b.attach(n, looks, "nsubj");
    let a = b.word(adj, "ADJ");
    b.attach(a, looks, "xcomp");
    b.punct(".", looks);
}

fn subject_sentence(b: &mut Builder, x: &str, verb: &str, object: &str) {
    let t = b.term(x);
    let v = b.word(verb, "VERB");
    b.attach(t, v, "nsubj");
    let the = b.word("the", "DET");
    let o = b.word(object, "NOUN");
    b.attach(the, o, "det");
    b.attach(o, v, "obj");
    b.punct(".", v);
}

fn oblique_sentence(b: &mut Builder, verb: &str, x: &str) {
    let we = b.word("we", "PRON");
    let v = b.word(verb, "VERB");
    b.attach(we, v, "nsubj");
    let with = b.word("with", "ADP");
    let t = b.term(x);
    b.attach(with, t, "case");
    b.attach(t, v, "obl");
    let here = b.word("here", "ADV");
    b.attach(here, v, "advmod");
    b.punct(".", v);
}

/// Generates the corpus text and its gold classes. Output is a pure
/// function of `spec`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pools = spec.pools();
    let mut reserved = fixed_words();
    let all_members: Vec<String> = pools
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    reserved.extend(all_members.iter().flat_map(|m| m.split(' ')));
    let mut namer = Namer::new(spec.seed.wrapping_add(1), &reserved);
    let vocab: Vec<ClassVocab> = spec
        .classes
        .iter()
        .map(|_| ClassVocab {
            noun: namer.word(),
            verbs: (0..3).map(|_| format!("{}ed", namer.word())).collect(),
        })
        .collect();

    let mut mentions: BTreeMap<&str, usize> = all_members.iter().map(|m| (m.as_str(), 0)).collect();
    let mut sentences: Vec<Builder> = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        let mut b = Builder::default();
        if rng.random::<f64>() < spec.noise {
            let t = all_members.choose(&mut rng).expect("non-empty");
            let verb = *NOISE_VERBS.choose(&mut rng).expect("non-empty");
            let obj = *OBJECTS.choose(&mut rng).expect("non-empty");
            subject_sentence(&mut b, t, verb, obj);
            *mentions.get_mut(t.as_str()).expect("known member") += 1;
            sentences.push(b);
            continue;
        }
        let c = rng.random_range(0..spec.classes.len());
        let pool = &pools[c];
        let voc = &vocab[c];
        let verb = voc.verbs.choose(&mut rng).expect("three verbs");
        let used: Vec<&String> = match rng.random_range(0..5) {
            0 | 1 => {
                let k = rng.random_range(3..=6.min(pool.len()));
                let items: Vec<&String> = pool.choose_multiple(&mut rng, k).collect();
                list_sentence(&mut b, verb, &items);
                items
            }
            2 => {
                let pair: Vec<&String> = pool.choose_multiple(&mut rng, 2).collect();
                let conn = CONNECTIVES.choose(&mut rng).expect("non-empty");
                pair_sentence(&mut b, verb, pair[0], pair[1], conn);
                pair
            }
            3 => {
                let t = pool.choose(&mut rng).expect("non-empty");
                let adj = ADJECTIVES.choose(&mut rng).expect("non-empty");
                carrier_sentence(&mut b, &voc.noun, t, adj);
                vec![t]
            }
            _ => {
                let t = pool.choose(&mut rng).expect("non-empty");
                if rng.random_bool(0.5) {
                    let obj = OBJECTS.choose(&mut rng).expect("non-empty");
                    subject_sentence(&mut b, t, verb, obj);
                } else {
                    oblique_sentence(&mut b, verb, t);
                }
                vec![t]
            }
        };
        for t in used {
            *mentions.get_mut(t.as_str()).expect("known member") += 1;
        }
        sentences.push(b);
    }

    // top up rare members with class-specific frames
    for (c, pool) in pools.iter().enumerate() {
        for t in pool {
            while mentions[t.as_str()] < spec.min_mentions {
                let mut b = Builder::default();
                carrier_sentence(&mut b, &vocab[c].noun, t, ADJECTIVES[0]);
                *mentions.get_mut(t.as_str()).expect("known member") += 1;
                let at = rng.random_range(0..=sentences.len());
                sentences.insert(at, b);
            }
        }
    }

    let mut conllu = String::new();
    for (i, chunk) in sentences.chunks(spec.sentences_per_doc).enumerate() {
        writeln!(conllu, "# newdoc id = synth-{i:05}").expect("write to String");
        for b in chunk {
            b.write(&mut conllu);
        }
    }
    let gold = spec
        .classes
        .iter()
        .zip(&pools)
        .map(|(c, p)| {
            let mut members = p.clone();
            members.sort();
            GoldClassSpec {
                name: c.name.clone(),
                members,
            }
        })
        .collect();
    Ok(SyntheticCorpus { conllu, gold })
}

/// Writes `corpus.conllu` and `gold.tsv` into `dir`.
pub fn write_synthetic_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let c = dir.join("corpus.conllu");
    fs::write(&c, &corpus.conllu).map_err(|e| Error::io(&c, e))?;
    let g = dir.join("gold.tsv");
    fs::write(&g, super::format_gold(&corpus.gold)).map_err(|e| Error::io(&g, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    #[test]
    fn too_small_specs_rejected() {
        assert!(matches!(SyntheticSpec::uniform(1, 10, 100, 1), Err(Error::Config(_))));
        assert!(matches!(SyntheticSpec::uniform(3, 4, 100, 1), Err(Error::Config(_))));
    }

    #[test]
    fn byte_identical_under_seed() {
        let spec = SyntheticSpec::uniform(3, 6, 300, 9).unwrap();
        let a = generate_synthetic_corpus(&spec).unwrap();
        let b = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic_corpus(&SyntheticSpec::uniform(3, 6, 300, 10).unwrap()).unwrap();
        assert_ne!(a.conllu, other.conllu);
    }

    #[test]
    fn gold_lists_every_class_and_member() {
        let spec = SyntheticSpec::uniform(4, 7, 200, 2).unwrap();
        let out = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(out.gold.len(), 4);
        assert!(out.gold.iter().all(|g| g.members.len() == 7));
        let all: BTreeSet<&String> = out.gold.iter().flat_map(|g| &g.members).collect();
        assert_eq!(all.len(), 28);
    }

    #[test]
    fn nested_pools_include_subclass() {
        let spec = SyntheticSpec::fruit_citrus(2, 8, 500, 3).unwrap();
        let out = generate_synthetic_corpus(&spec).unwrap();
        let fruit = out.gold.iter().find(|g| g.name == "fruit").unwrap();
        let citrus = out.gold.iter().find(|g| g.name == "citrus").unwrap();
        assert_eq!(fruit.members.len(), 20);
        assert!(citrus.members.iter().all(|m| fruit.members.contains(m)));
    }

    #[test]
    fn corpus_parses_and_every_member_is_frequent() {
        let spec = SyntheticSpec::uniform(3, 8, 150, 4).unwrap();
        let out = generate_synthetic_corpus(&spec).unwrap();
        let corpus = Corpus::new(out.documents().unwrap()).unwrap();
        assert!(corpus.has_dependencies());
        let text: Vec<String> = corpus
            .sentences()
            .map(|s| {
                let words: Vec<&str> = s.tokens.iter().map(|t| t.surface.as_str()).collect();
                format!(" {} ", words.join(" "))
            })
            .collect();
        for g in &out.gold {
            for m in &g.members {
                let needle = format!(" {m} ");
                let n: usize = text.iter().map(|t| t.matches(&needle).count()).sum();
                assert!(n >= spec.min_mentions, "{m}: {n}");
            }
        }
    }

    #[test]
    fn same_class_co_occurrence_dominates() {
        let spec = SyntheticSpec::uniform(10, 20, 5000, 5).unwrap();
        let out = generate_synthetic_corpus(&spec).unwrap();
        let class_of: BTreeMap<&str, usize> = out
            .gold
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.members.iter().map(move |m| (m.as_str(), i)))
            .collect();
        let corpus = Corpus::new(out.documents().unwrap()).unwrap();
        let (mut same, mut cross) = (0usize, 0usize);
        for s in corpus.sentences() {
            // single-word members are enough to observe the pattern
            let found: Vec<usize> = s
                .tokens
                .iter()
                .filter_map(|t| class_of.get(t.surface.as_str()).copied())
                .collect();
            for i in 0..found.len() {
                for j in i + 1..found.len() {
                    if found[i] == found[j] {
                        same += 1;
                    } else {
                        cross += 1;
                    }
                }
            }
        }
        assert!(same > 100 * (cross + 1), "same {same} cross {cross}");
    }
}

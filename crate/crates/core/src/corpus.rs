//! Corpus loading: plain text with rule-based segmentation, CoNLL-U with
//! dependency annotations, and a line-delimited cache format.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terms::{OccurrenceIndex, TermGroup};

pub const CORPUS_MAGIC: &str = "SETEXP-CORPUS-v1";

/// POS tag assigned when no annotation is available.
pub const UNTAGGED: &str = "X";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: String,
    /// Sentence-local index of the syntactic head; `None` for the root or
    /// when the sentence carries no dependency annotation.
    pub head: Option<usize>,
    pub deprel: Option<String>,
    /// Byte offsets into the source document.
    pub char_span: (usize, usize),
}

impl Token {
    pub fn is_punct(&self) -> bool {
        self.pos == "PUNCT" || !self.surface.chars().any(char::is_alphanumeric)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub doc_id: String,
    pub sent_index: usize,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_dependencies(&self) -> bool {
        self.tokens.iter().any(|t| t.deprel.is_some())
    }

    pub fn is_tagged(&self) -> bool {
        self.tokens.iter().any(|t| t.pos != UNTAGGED)
    }

    /// Joins `tokens[start..end]`, inserting a space wherever the source had a gap.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for i in start..end {
            if i > start && self.tokens[i - 1].char_span.1 < self.tokens[i].char_span.0 {
                out.push(' ');
            }
            out.push_str(&self.tokens[i].surface);
        }
        out
    }

    pub fn text(&self) -> String {
        self.span_text(0, self.tokens.len())
    }

    /// Whether the sentence is an item of a bullet list: it starts with `-`,
    /// `*`, `•` or an ordinal such as `1.`.
    pub fn bullet_marker_len(&self) -> Option<usize> {
        let first = self.tokens.first()?;
        match first.surface.as_str() {
            "-" | "*" | "•" => Some(1),
            s if s.chars().all(|c| c.is_ascii_digit()) => match self.tokens.get(1) {
                Some(t) if t.surface == "." || t.surface == ")" => Some(2),
                _ => None,
            },
            _ => None,
        }
    }

    fn validate(&self, line: usize) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidTree {
                line,
                message: "empty sentence".into(),
            });
        }
        if !self.has_dependencies() {
            return Ok(());
        }
        let n = self.tokens.len();
        let mut roots = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            match t.head {
                Some(h) if h >= n => {
                    return Err(Error::InvalidTree {
                        line,
                        message: format!("head {} out of range for token {}", h + 1, i + 1),
                    })
                }
                Some(h) if h == i => {
                    return Err(Error::InvalidTree {
                        line,
                        message: format!("token {} is its own head", i + 1),
                    })
                }
                Some(_) => {}
                None => roots += 1,
            }
        }
        if roots != 1 {
            return Err(Error::InvalidTree {
                line,
                message: format!("expected exactly one root, found {roots}"),
            });
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = self.tokens[cur].head {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidTree {
                        line,
                        message: format!("cycle through token {}", start + 1),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub tokens: usize,
    pub sentences: usize,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<Document>,
    stats: CorpusStats,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Config(format!("duplicate document id {:?}", d.id)));
            }
        }
        let stats = CorpusStats {
            tokens: documents.iter().flat_map(|d| &d.sentences).map(Sentence::len).sum(),
            sentences: documents.iter().map(|d| d.sentences.len()).sum(),
            documents: documents.len(),
        };
        if stats.sentences == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus { documents, stats })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn stats(&self) -> CorpusStats {
        self.stats
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn sentence(&self, doc: usize, sent: usize) -> Option<&Sentence> {
        self.documents.get(doc)?.sentences.get(sent)
    }

    pub fn has_dependencies(&self) -> bool {
        self.sentences().any(Sentence::has_dependencies)
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            writeln!(w, "{CORPUS_MAGIC}")?;
            for doc in &self.documents {
                serde_json::to_writer(&mut *w, doc)?;
                writeln!(w)?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(magic)) if magic == CORPUS_MAGIC => {}
            Some(Err(e)) => return Err(Error::io(path, e)),
            _ => return Err(Error::Format(format!("{} is not a corpus cache", path.display()))),
        }
        let mut documents = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            documents.push(doc);
        }
        Corpus::new(documents)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Treat every blank-line-separated block as its own document.
    pub doc_per_block: bool,
}

/// Loads a plain text file, or every `.txt` file of a directory in name order.
pub fn load_plain_text(path: &Path, cfg: &IngestConfig) -> Result<Corpus> {
    let mut documents = Vec::new();
    for file in input_files(path, "txt")? {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let stem = file_stem(&file);
        documents.extend(parse_plain_text(&text, &stem, cfg));
    }
    Corpus::new(documents)
}

/// Loads a CoNLL-U file, or every `.conllu` file of a directory in name order.
pub fn load_conllu(path: &Path) -> Result<Corpus> {
    let mut documents: Vec<Document> = Vec::new();
    for file in input_files(path, "conllu")? {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        documents.extend(parse_conllu(&text, &file_stem(&file))?);
    }
    Corpus::new(documents)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "doc".to_string())
}

fn input_files(path: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn parse_plain_text(text: &str, doc_prefix: &str, cfg: &IngestConfig) -> Vec<Document> {
    // (start, end, is_bullet) byte ranges; `None` marks a blank line.
    let mut segments: Vec<Option<(usize, usize, bool)>> = Vec::new();
    let mut para: Option<(usize, usize)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        let end = start + content.len();
        if content.trim().is_empty() {
            if let Some((s, e)) = para.take() {
                segments.push(Some((s, e, false)));
            }
            segments.push(None);
        } else if is_bullet_line(content) {
            if let Some((s, e)) = para.take() {
                segments.push(Some((s, e, false)));
            }
            segments.push(Some((start, end, true)));
        } else {
            para = Some(match para {
                Some((s, _)) => (s, end),
                None => (start, end),
            });
        }
    }
    if let Some((s, e)) = para {
        segments.push(Some((s, e, false)));
    }

    let mut blocks: Vec<Vec<Vec<Token>>> = vec![Vec::new()];
    for seg in segments {
        match seg {
            None => {
                if cfg.doc_per_block && !blocks.last().is_some_and(Vec::is_empty) {
                    blocks.push(Vec::new());
                }
            }
            Some((s, e, bullet)) => {
                let tokens = tokenize(&text[s..e], s);
                let sentences = if bullet {
                    vec![tokens]
                } else {
                    split_sentences(text, tokens)
                };
                blocks
                    .last_mut()
                    .expect("at least one block")
                    .extend(sentences.into_iter().filter(|s| !s.is_empty()));
            }
        }
    }
    blocks.retain(|b| !b.is_empty());

    let multi = blocks.len() > 1;
    blocks
        .into_iter()
        .enumerate()
        .map(|(bi, sents)| {
            let id = if multi {
                format!("{doc_prefix}#{}", bi + 1)
            } else {
                doc_prefix.to_string()
            };
            let sentences = sents
                .into_iter()
                .enumerate()
                .map(|(si, tokens)| Sentence {
                    tokens,
                    doc_id: id.clone(),
                    sent_index: si,
                })
                .collect();
            Document { id, sentences }
        })
        .collect()
}

fn is_bullet_line(line: &str) -> bool {
    let t = line.trim_start();
    for marker in ["- ", "* ", "• "] {
        if t.starts_with(marker) {
            return true;
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && (t[digits..].starts_with(". ") || t[digits..].starts_with(") "))
}

/// Whitespace and punctuation-boundary tokenizer. Leading and trailing
/// punctuation is split off; internal punctuation (`King's`, `3.5`) stays,
/// as does the final period of dotted abbreviations (`U.S.`).
pub fn tokenize(text: &str, base: usize) -> Vec<Token> {
    let mut out = Vec::new();
    let mut push = |s: usize, e: usize| {
        let surface = &text[s..e];
        out.push(Token {
            surface: surface.to_string(),
            lemma: surface.to_lowercase(),
            pos: UNTAGGED.to_string(),
            head: None,
            deprel: None,
            char_span: (base + s, base + e),
        });
    };

    let mut chunks = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                chunks.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        chunks.push((s, text.len()));
    }

    for (s, e) in chunks {
        let chunk = &text[s..e];
        let first_alnum = chunk.char_indices().find(|(_, c)| c.is_alphanumeric());
        let Some((core_start, _)) = first_alnum else {
            punct_runs(chunk, s, &mut push);
            continue;
        };
        let (last_idx, last_c) = chunk
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .expect("alphanumeric char exists");
        let mut core_end = last_idx + last_c.len_utf8();
        if chunk[core_end..].starts_with('.') && is_dotted_abbreviation(&chunk[core_start..core_end]) {
            core_end += 1;
        }
        punct_runs(&chunk[..core_start], s, &mut push);
        push(s + core_start, s + core_end);
        punct_runs(&chunk[core_end..], s + core_end, &mut push);
    }
    out
}

fn is_dotted_abbreviation(core: &str) -> bool {
    core.contains('.')
        && core
            .split('.')
            .all(|p| !p.is_empty() && p.len() <= 3 && p.chars().all(char::is_alphabetic))
}

fn punct_runs(s: &str, base: usize, push: &mut impl FnMut(usize, usize)) {
    let mut iter = s.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = iter.peek() {
            if d != c {
                break;
            }
            end = j + d.len_utf8();
            iter.next();
        }
        push(base + i, base + end);
    }
}

fn split_sentences(text: &str, tokens: Vec<Token>) -> Vec<Vec<Token>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let n = tokens.len();
    let mut iter = tokens.into_iter().peekable();
    for _ in 0..n {
        let tok = iter.next().expect("length checked");
        let terminal = tok.surface.chars().all(|c| matches!(c, '.' | '!' | '?'));
        let end = tok.char_span.1;
        cur.push(tok);
        if terminal {
            if let Some(next) = iter.peek() {
                let gap = next.char_span.0 > end;
                let starts_upper = text[next.char_span.0..]
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit());
                if gap && starts_upper {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Parses CoNLL-U text. `# newdoc id = ...` comments start new documents;
/// sentences before the first such comment belong to `default_doc`.
pub fn parse_conllu(text: &str, default_doc: &str) -> Result<Vec<Document>> {
    let mut documents: Vec<Document> = Vec::new();
    let mut current = Document {
        id: default_doc.to_string(),
        sentences: Vec::new(),
    };
    let mut rows: Vec<(Token, bool)> = Vec::new();
    let mut doc_offset = 0usize;

    let flush =
        |rows: &mut Vec<(Token, bool)>, current: &mut Document, line: usize, doc_offset: &mut usize| -> Result<()> {
            if rows.is_empty() {
                return Ok(());
            }
            let mut tokens = Vec::with_capacity(rows.len());
            let mut pos = *doc_offset;
            for (mut tok, space_after) in rows.drain(..) {
                let len = tok.surface.len();
                tok.char_span = (pos, pos + len);
                pos += len + usize::from(space_after);
                tokens.push(tok);
            }
            // sentences are separated by one space in the reconstructed document
            *doc_offset = tokens.last().map_or(pos, |t| t.char_span.1 + 1);
            let sentence = Sentence {
                tokens,
                doc_id: current.id.clone(),
                sent_index: current.sentences.len(),
            };
            sentence.validate(line)?;
            current.sentences.push(sentence);
            Ok(())
        };

    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut rows, &mut current, line_no, &mut doc_offset)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment
                .trim()
                .strip_prefix("newdoc id")
                .map(|r| r.trim_start_matches([' ', '=']).trim())
            {
                flush(&mut rows, &mut current, line_no, &mut doc_offset)?;
                let next = Document {
                    id: id.to_string(),
                    sentences: Vec::new(),
                };
                let prev = std::mem::replace(&mut current, next);
                if !prev.sentences.is_empty() {
                    documents.push(prev);
                }
                doc_offset = 0;
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad token id {:?}", cols[0]),
        })?;
        if id != rows.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("token id {id} out of sequence"),
            });
        }
        let surface = cols[1].to_string();
        if surface.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty FORM".into(),
            });
        }
        let lemma = match cols[2] {
            "_" | "" => surface.to_lowercase(),
            l => l.to_string(),
        };
        let pos = match cols[3] {
            "_" | "" => UNTAGGED.to_string(),
            p => p.to_string(),
        };
        let (head, deprel) = match cols[6] {
            "_" => (None, None),
            h => {
                let h: usize = h.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad head {h:?}"),
                })?;
                let rel = match cols[7] {
                    "_" => "dep".to_string(),
                    r => r.to_string(),
                };
                ((h > 0).then(|| h - 1), Some(rel))
            }
        };
        let space_after = !cols[9].split('|').any(|m| m == "SpaceAfter=No");
        rows.push((
            Token {
                surface,
                lemma,
                pos,
                head,
                deprel,
                char_span: (0, 0),
            },
            space_after,
        ));
    }
    flush(&mut rows, &mut current, last_line + 1, &mut doc_offset)?;
    if !current.sentences.is_empty() {
        documents.push(current);
    }
    Ok(documents)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub sent_index: usize,
    pub text: String,
    /// Half-open token index ranges.
    pub highlight_spans: Vec<(usize, usize)>,
}

/// Sentences containing non-excluded members of `group`, in corpus order.
pub fn snippets_for_group(
    corpus: &Corpus,
    index: &OccurrenceIndex,
    group: &TermGroup,
    max: usize,
) -> Result<Vec<Snippet>> {
    let postings = index.postings(group.id).ok_or(Error::UnknownTerm(group.id))?;
    let mut out: Vec<Snippet> = Vec::new();
    for p in postings {
        let occ = &index.sentence_occurrences(p.doc, p.sent)[p.slot];
        if group.excluded.contains(&occ.member) {
            continue;
        }
        let sentence = corpus.sentence(p.doc, p.sent).expect("occurrence index matches corpus");
        match out.last_mut() {
            Some(s) if s.doc_id == sentence.doc_id && s.sent_index == sentence.sent_index => {
                s.highlight_spans.push((occ.start, occ.end));
            }
            _ => {
                if out.len() == max {
                    break;
                }
                out.push(Snippet {
                    doc_id: sentence.doc_id.clone(),
                    sent_index: sentence.sent_index,
                    text: sentence.text(),
                    highlight_spans: vec![(occ.start, occ.end)],
                });
            }
        }
    }
    Ok(out)
}

//! Skip-gram with negative sampling over arbitrary (focus, context) pairs,
//! one model per context type, plus cosine queries and a versioned binary
//! model file.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::contexts::{ContextPair, ContextType};
use crate::error::{Error, Result};
use crate::scalar::{cosine_of, dot, norm, sigmoid, Scalar};
use crate::GroupId;

pub const EMBEDDING_MAGIC: &str = "SETEXP-EMB-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    /// Initial learning rate, decayed linearly to `alpha / 10000`.
    pub alpha: f64,
    /// Frequent-context subsampling threshold (Linear models only).
    pub subsample: f64,
    pub min_count: usize,
    pub seed: u64,
    /// Worker threads. Above 1, updates race without locks and runs are
    /// no longer reproducible.
    pub threads: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            dim: 100,
            epochs: 5,
            negatives: 5,
            alpha: 0.025,
            subsample: 1e-4,
            min_count: 5,
            seed: 1,
            threads: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("negatives must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("subsample must be in (0, 1]".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Term vectors for one context type.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEmbeddingModel<F: Scalar> {
    ctx_type: ContextType,
    hyper: Hyperparams,
    focus_ids: Vec<GroupId>,
    focus_pos: HashMap<GroupId, usize>,
    focus_counts: Vec<u64>,
    focus: Vec<F>,
    contexts: Vec<String>,
    context_counts: Vec<u64>,
    context: Vec<F>,
    /// Mean loss per epoch.
    loss_history: Vec<f64>,
}

impl<F: Scalar> ContextEmbeddingModel<F> {
    /// A model with no vocabulary, standing in for a context type the
    /// corpus gave no data for.
    pub fn empty(ctx_type: ContextType, hyper: Hyperparams) -> Self {
        Self::from_parts(
            ctx_type,
            hyper,
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        )
    }

    /// Builds a model directly from focus vectors, in the given order.
    pub fn from_vectors(ctx_type: ContextType, vectors: Vec<(GroupId, Vec<F>)>) -> Result<Self> {
        let dim = vectors.first().map_or(1, |(_, v)| v.len());
        if dim == 0 || vectors.iter().any(|(_, v)| v.len() != dim) {
            return Err(Error::Config("vectors must share a non-zero dimension".into()));
        }
        let hyper = Hyperparams {
            dim,
            ..Hyperparams::default()
        };
        let mut ids = Vec::with_capacity(vectors.len());
        let mut flat = Vec::with_capacity(vectors.len() * dim);
        for (id, v) in vectors {
            ids.push(id);
            flat.extend(v);
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
            return Err(Error::Config("duplicate focus id".into()));
        }
        let counts = vec![0; ids.len()];
        Ok(Self::from_parts(
            ctx_type,
            hyper,
            ids,
            counts,
            flat,
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        ctx_type: ContextType,
        hyper: Hyperparams,
        focus_ids: Vec<GroupId>,
        focus_counts: Vec<u64>,
        focus: Vec<F>,
        contexts: Vec<String>,
        context_counts: Vec<u64>,
        context: Vec<F>,
        loss_history: Vec<f64>,
    ) -> Self {
        let focus_pos = focus_ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        ContextEmbeddingModel {
            ctx_type,
            hyper,
            focus_ids,
            focus_pos,
            focus_counts,
            focus,
            contexts,
            context_counts,
            context,
            loss_history,
        }
    }

    pub fn ctx_type(&self) -> ContextType {
        self.ctx_type
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    pub fn len(&self) -> usize {
        self.focus_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.focus_ids.is_empty()
    }

    pub fn ids(&self) -> &[GroupId] {
        &self.focus_ids
    }

    pub fn contains(&self, id: GroupId) -> bool {
        self.focus_pos.contains_key(&id)
    }

    pub fn vector(&self, id: GroupId) -> Option<&[F]> {
        let d = self.dim();
        self.focus_pos.get(&id).map(|&i| &self.focus[i * d..(i + 1) * d])
    }

    pub fn context_vector(&self, context: &str) -> Option<&[F]> {
        let d = self.dim();
        let i = self.contexts.iter().position(|c| c == context)?;
        Some(&self.context[i * d..(i + 1) * d])
    }

    pub fn context_vocab(&self) -> &[String] {
        &self.contexts
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Multiplies every focus vector by `factor`.
    pub fn scale(&mut self, factor: F) {
        for x in &mut self.focus {
            *x *= factor;
        }
    }

    /// Replaces one focus vector; the dimension must match.
    pub fn set_vector(&mut self, id: GroupId, v: &[F]) -> Result<()> {
        let d = self.dim();
        if v.len() != d {
            return Err(Error::Shape {
                expected: d,
                actual: v.len(),
            });
        }
        let i = *self.focus_pos.get(&id).ok_or(Error::MissingTerm(id))?;
        self.focus[i * d..(i + 1) * d].copy_from_slice(v);
        Ok(())
    }

    pub fn cosine(&self, a: GroupId, b: GroupId) -> Result<F> {
        let va = self.vector(a).ok_or(Error::MissingTerm(a))?;
        let vb = self.vector(b).ok_or(Error::MissingTerm(b))?;
        if a == b {
            return Ok(F::one());
        }
        Ok(cosine_of(va, vb).unwrap_or_else(F::zero))
    }

    /// Top-`k` focus terms by cosine to `query`, skipping `exclude`.
    /// Ties are broken by ascending group id.
    pub fn nearest(&self, query: &[F], k: usize, exclude: &BTreeSet<GroupId>) -> Vec<(GroupId, F)> {
        if k == 0 || query.len() != self.dim() {
            return Vec::new();
        }
        let qn = norm(query);
        if qn <= F::zero() {
            return Vec::new();
        }
        let d = self.dim();
        let mut scored: Vec<(GroupId, F)> = self
            .focus_ids
            .iter()
            .enumerate()
            .filter(|(_, g)| !exclude.contains(g))
            .map(|(i, &g)| {
                let v = &self.focus[i * d..(i + 1) * d];
                let n = norm(v);
                let c = if n > F::zero() {
                    dot(query, v) / (qn * n)
                } else {
                    F::zero()
                };
                (g, c)
            })
            .collect();
        let cmp = |a: &(GroupId, F), b: &(GroupId, F)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header = Header {
            ctx_type: self.ctx_type,
            scalar: F::NAME.to_string(),
            dim: self.dim(),
            focus_vocab: self.focus_ids.len(),
            context_vocab: self.contexts.len(),
            hyper: self.hyper.clone(),
            loss_history: self.loss_history.clone(),
        };
        writeln!(w, "{EMBEDDING_MAGIC}")?;
        serde_json::to_writer(&mut *w, &header)?;
        writeln!(w)?;
        let d = self.dim();
        for (i, &id) in self.focus_ids.iter().enumerate() {
            w.write_all(&id.to_le_bytes())?;
            w.write_all(&self.focus_counts[i].to_le_bytes())?;
            for &x in &self.focus[i * d..(i + 1) * d] {
                x.write_le(w)?;
            }
        }
        for (i, c) in self.contexts.iter().enumerate() {
            w.write_all(&(c.len() as u32).to_le_bytes())?;
            w.write_all(c.as_bytes())?;
            w.write_all(&self.context_counts[i].to_le_bytes())?;
            for &x in &self.context[i * d..(i + 1) * d] {
                x.write_le(w)?;
            }
        }
        w.flush()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    fn read_from<R: std::io::BufRead>(r: &mut R) -> Result<Self> {
        let truncated = |e: std::io::Error| Error::Format(format!("truncated model file: {e}"));
        let mut magic = String::new();
        r.read_line(&mut magic).map_err(truncated)?;
        let magic = magic.trim_end();
        if magic != EMBEDDING_MAGIC {
            return Err(Error::Format(if magic.starts_with("SETEXP-EMB-") {
                format!("unsupported model version {magic:?}")
            } else {
                "not an embedding model file".to_string()
            }));
        }
        let mut line = String::new();
        r.read_line(&mut line).map_err(truncated)?;
        let header: Header = serde_json::from_str(&line).map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.scalar != F::NAME {
            return Err(Error::Format(format!(
                "model stores {} values, expected {}",
                header.scalar,
                F::NAME
            )));
        }
        let d = header.dim;
        let mut focus_ids = Vec::with_capacity(header.focus_vocab);
        let mut focus_counts = Vec::with_capacity(header.focus_vocab);
        let mut focus = Vec::with_capacity(header.focus_vocab * d);
        for _ in 0..header.focus_vocab {
            focus_ids.push(u32::from_le_bytes(read_array(r).map_err(truncated)?));
            focus_counts.push(u64::from_le_bytes(read_array(r).map_err(truncated)?));
            for _ in 0..d {
                focus.push(F::read_le(r).map_err(truncated)?);
            }
        }
        let mut contexts = Vec::with_capacity(header.context_vocab);
        let mut context_counts = Vec::with_capacity(header.context_vocab);
        let mut context = Vec::with_capacity(header.context_vocab * d);
        for _ in 0..header.context_vocab {
            let len = u32::from_le_bytes(read_array(r).map_err(truncated)?) as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(truncated)?;
            contexts.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
            context_counts.push(u64::from_le_bytes(read_array(r).map_err(truncated)?));
            for _ in 0..d {
                context.push(F::read_le(r).map_err(truncated)?);
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(truncated)? != 0 {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let mut hyper = header.hyper;
        hyper.dim = d;
        Ok(Self::from_parts(
            header.ctx_type,
            hyper,
            focus_ids,
            focus_counts,
            focus,
            contexts,
            context_counts,
            context,
            header.loss_history,
        ))
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize, Deserialize)]
struct Header {
    ctx_type: ContextType,
    scalar: String,
    dim: usize,
    focus_vocab: usize,
    context_vocab: usize,
    hyper: Hyperparams,
    loss_history: Vec<f64>,
}

/// Shared parameter tables for lock-free multi-threaded updates.
struct Tables<F> {
    focus: *mut F,
    context: *mut F,
}

// SAFETY: workers write overlapping rows without synchronization; lost or
// torn updates are tolerated by the optimizer, and the tables outlive the
// scoped threads that use them.
unsafe impl<F: Send> Send for Tables<F> {}
unsafe impl<F: Send> Sync for Tables<F> {}

/// Trains SGNS vectors from the pairs of `ctx_type` in `pairs`.
///
/// Focus and context vocabularies keep items seen at least `min_count`
/// times; pairs touching pruned items are dropped. Noise contexts are drawn
/// from the unigram distribution raised to 0.75.
pub fn train_sgns<F: Scalar>(
    ctx_type: ContextType,
    pairs: &[ContextPair],
    hyper: &Hyperparams,
) -> Result<ContextEmbeddingModel<F>> {
    hyper.validate()?;
    let pairs: Vec<&ContextPair> = pairs.iter().filter(|p| p.ctx_type == ctx_type).collect();

    let mut fcount: HashMap<GroupId, u64> = HashMap::new();
    let mut ccount: HashMap<&str, u64> = HashMap::new();
    for p in &pairs {
        *fcount.entry(p.focus).or_default() += 1;
        *ccount.entry(p.context.as_str()).or_default() += 1;
    }
    let min = hyper.min_count as u64;
    let mut focus_ids: Vec<GroupId> = fcount.iter().filter(|(_, &c)| c >= min).map(|(&g, _)| g).collect();
    focus_ids.sort_unstable();
    let mut contexts: Vec<(&str, u64)> = ccount
        .iter()
        .filter(|(_, &c)| c >= min)
        .map(|(&s, &c)| (s, c))
        .collect();
    contexts.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let fpos: HashMap<GroupId, u32> = focus_ids.iter().enumerate().map(|(i, &g)| (g, i as u32)).collect();
    let cpos: HashMap<&str, u32> = contexts.iter().enumerate().map(|(i, (s, _))| (*s, i as u32)).collect();
    let encoded: Vec<(u32, u32)> = pairs
        .iter()
        .filter_map(|p| Some((*fpos.get(&p.focus)?, *cpos.get(p.context.as_str())?)))
        .collect();
    if encoded.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {ctx_type} pairs survive min_count = {}",
            hyper.min_count
        )));
    }

    // Keep probability per context for frequent-word subsampling.
    let total: f64 = contexts.iter().map(|(_, c)| *c as f64).sum();
    let keep: Vec<f64> = if ctx_type == ContextType::Linear {
        let t = hyper.subsample * total;
        contexts
            .iter()
            .map(|(_, c)| {
                let f = *c as f64;
                (((f / t).sqrt() + 1.0) * t / f).min(1.0)
            })
            .collect()
    } else {
        vec![1.0; contexts.len()]
    };
    let noise = WeightedAliasIndex::new(contexts.iter().map(|(_, c)| (*c as f64).powf(0.75)).collect())
        .map_err(|e| Error::InsufficientData(format!("noise distribution: {e}")))?;

    let dim = hyper.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let half = 0.5 / dim as f64;
    let mut focus: Vec<F> = (0..focus_ids.len() * dim)
        .map(|_| F::of(rng.random_range(-half..half)))
        .collect();
    let mut context: Vec<F> = vec![F::zero(); contexts.len() * dim];

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let total_steps = (hyper.epochs * encoded.len()).max(1) as f64;
    let mut loss_history = Vec::with_capacity(hyper.epochs);
    let floor = hyper.alpha * 1e-4;
    let ctx = TrainCtx {
        dim,
        negatives: hyper.negatives,
        alpha: hyper.alpha,
        floor,
        total_steps,
        encoded: &encoded,
        keep: &keep,
        noise: &noise,
    };

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let done_before = epoch * encoded.len();
        let (loss_sum, n) = if hyper.threads <= 1 {
            let mut grad = vec![F::zero(); dim];
            ctx.run(
                &order,
                done_before,
                &mut rng,
                focus.as_mut_ptr(),
                context.as_mut_ptr(),
                &mut grad,
            )
        } else {
            let tables = Tables {
                focus: focus.as_mut_ptr(),
                context: context.as_mut_ptr(),
            };
            let chunk = order.len().div_ceil(hyper.threads);
            let seeds: Vec<u64> = (0..hyper.threads).map(|_| rng.random()).collect();
            std::thread::scope(|s| {
                let handles: Vec<_> = order
                    .chunks(chunk)
                    .zip(&seeds)
                    .enumerate()
                    .map(|(ti, (part, &seed))| {
                        let tables = &tables;
                        let ctx = &ctx;
                        s.spawn(move || {
                            let mut trng = ChaCha8Rng::seed_from_u64(seed);
                            let mut grad = vec![F::zero(); dim];
                            // progress is approximated per worker
                            let start = done_before + ti * chunk;
                            ctx.run(part, start, &mut trng, tables.focus, tables.context, &mut grad)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .fold((0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1))
            })
        };
        let mean = if n > 0 { loss_sum / n as f64 } else { 0.0 };
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        debug!("{ctx_type} epoch {epoch}: mean loss {mean:.4} over {n} pairs");
        loss_history.push(mean);
    }

    let model = ContextEmbeddingModel::from_parts(
        ctx_type,
        hyper.clone(),
        focus_ids.to_vec(),
        focus_ids.iter().map(|g| fcount[g]).collect(),
        focus,
        contexts.iter().map(|(s, _)| s.to_string()).collect(),
        contexts.iter().map(|(_, c)| *c).collect(),
        context,
        loss_history,
    );
    if model.focus.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            epoch: hyper.epochs.saturating_sub(1),
        });
    }
    Ok(model)
}

struct TrainCtx<'a> {
    dim: usize,
    negatives: usize,
    alpha: f64,
    floor: f64,
    total_steps: f64,
    encoded: &'a [(u32, u32)],
    keep: &'a [f64],
    noise: &'a WeightedAliasIndex<f64>,
}

impl TrainCtx<'_> {
    /// Processes `order`, returning (summed loss, pairs used).
    fn run<F: Scalar, R: Rng>(
        &self,
        order: &[usize],
        done_before: usize,
        rng: &mut R,
        focus: *mut F,
        context: *mut F,
        grad: &mut [F],
    ) -> (f64, usize) {
        let d = self.dim;
        let mut loss = 0.0;
        let mut used = 0;
        for (step, &pi) in order.iter().enumerate() {
            let (f, c) = self.encoded[pi];
            let keep = self.keep[c as usize];
            if keep < 1.0 && rng.random::<f64>() >= keep {
                continue;
            }
            let progress = (done_before + step) as f64 / self.total_steps;
            let lr = F::of((self.alpha * (1.0 - progress)).max(self.floor));
            // SAFETY: indices come from the vocabulary sizes the tables were
            // allocated with; concurrent workers may alias rows (see Tables).
            let v = unsafe { std::slice::from_raw_parts_mut(focus.add(f as usize * d), d) };
            grad.fill(F::zero());
            for s in 0..=self.negatives {
                let (target, label) = if s == 0 {
                    (c as usize, F::one())
                } else {
                    let n = self.noise.sample(rng);
                    if n == c as usize {
                        continue;
                    }
                    (n, F::zero())
                };
                let u = unsafe { std::slice::from_raw_parts_mut(context.add(target * d), d) };
                let score = dot(v, u);
                let p = sigmoid(score);
                let pf = p.as_f64();
                loss -= if s == 0 {
                    pf.max(1e-12).ln()
                } else {
                    (1.0 - pf).max(1e-12).ln()
                };
                let g = (label - p) * lr;
                for k in 0..d {
                    grad[k] += g * u[k];
                    u[k] += g * v[k];
                }
            }
            for k in 0..d {
                v[k] += grad[k];
            }
            used += 1;
        }
        (loss, used)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(f: GroupId, c: &str) -> ContextPair {
        ContextPair {
            ctx_type: ContextType::List,
            focus: f,
            context: c.to_string(),
        }
    }

    fn clustered_pairs() -> Vec<ContextPair> {
        let mut pairs = Vec::new();
        for i in 0..1000 {
            pairs.push(pair(0, "X"));
            pairs.push(pair(1, "X"));
            pairs.push(pair(2, "Y"));
            // background contexts so the noise distribution is not degenerate
            pairs.push(pair(3 + (i % 5), &format!("bg{}", i % 7)));
        }
        pairs
    }

    fn small(seed: u64) -> Hyperparams {
        Hyperparams {
            dim: 16,
            epochs: 3,
            seed,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn shared_context_makes_terms_similar() {
        let pairs = clustered_pairs();
        for seed in [1, 2, 3] {
            let m = train_sgns::<f32>(ContextType::List, &pairs, &small(seed)).unwrap();
            let ab = m.cosine(0, 1).unwrap();
            let az = m.cosine(0, 2).unwrap();
            assert!(ab > az, "seed {seed}: {ab} <= {az}");
        }
    }

    #[test]
    fn unique_pairs_are_insufficient() {
        let pairs: Vec<ContextPair> = (0..100).map(|i| pair(i, &format!("c{i}"))).collect();
        assert!(matches!(
            train_sgns::<f32>(ContextType::List, &pairs, &Hyperparams::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn dimension_one_smoke() {
        let hyper = Hyperparams { dim: 1, ..small(5) };
        let m = train_sgns::<f64>(ContextType::List, &clustered_pairs(), &hyper).unwrap();
        assert!(m.loss_history().iter().all(|l| l.is_finite()));
        assert_eq!(m.vector(0).unwrap().len(), 1);
    }

    #[test]
    fn divergence_reported() {
        let hyper = Hyperparams {
            alpha: 1e300,
            ..small(1)
        };
        assert!(matches!(
            train_sgns::<f64>(ContextType::List, &clustered_pairs(), &hyper),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn hyperparams_validated() {
        for bad in [
            Hyperparams {
                dim: 0,
                ..Hyperparams::default()
            },
            Hyperparams {
                negatives: 0,
                ..Hyperparams::default()
            },
            Hyperparams {
                alpha: 0.0,
                ..Hyperparams::default()
            },
            Hyperparams {
                subsample: 0.0,
                ..Hyperparams::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn single_thread_training_is_deterministic() {
        let a = train_sgns::<f32>(ContextType::List, &clustered_pairs(), &small(9)).unwrap();
        let b = train_sgns::<f32>(ContextType::List, &clustered_pairs(), &small(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_thread_training_runs() {
        let hyper = Hyperparams { threads: 4, ..small(3) };
        let m = train_sgns::<f32>(ContextType::List, &clustered_pairs(), &hyper).unwrap();
        assert!(m.cosine(0, 1).unwrap() > m.cosine(0, 2).unwrap());
    }

    #[test]
    fn only_pairs_of_requested_type_are_used() {
        let pairs = clustered_pairs();
        assert!(matches!(
            train_sgns::<f32>(ContextType::Dep, &pairs, &small(1)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn min_count_prunes_focus_vocab() {
        let mut pairs = clustered_pairs();
        pairs.push(pair(99, "X"));
        let m = train_sgns::<f32>(ContextType::List, &pairs, &small(1)).unwrap();
        assert!(!m.contains(99));
        assert!(m.ids().iter().all(|&g| g < 99));
    }

    fn toy() -> ContextEmbeddingModel<f64> {
        ContextEmbeddingModel::from_vectors(
            ContextType::Linear,
            vec![
                (1, vec![1.0, 0.0]),
                (2, vec![1.0, 1.0]),
                (3, vec![-1.0, 0.0]),
                (4, vec![1.0, 0.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        let m = toy();
        assert_abs_diff_eq!(m.cosine(1, 1).unwrap(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.cosine(1, 4).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.cosine(1, 3).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            m.cosine(1, 2).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2 as _,
            epsilon = 1e-4
        );
        assert_eq!(m.cosine(1, 2).unwrap(), m.cosine(2, 1).unwrap());
        assert!(matches!(m.cosine(1, 42), Err(Error::MissingTerm(42))));
    }

    #[test]
    fn nearest_excludes_and_breaks_ties_by_id() {
        let m = toy();
        let q = m.vector(1).unwrap().to_vec();
        let r = m.nearest(&q, 10, &BTreeSet::from([1]));
        let ids: Vec<GroupId> = r.iter().map(|x| x.0).collect();
        assert_eq!(ids, [4, 2, 3]);
        let r = m.nearest(&q, 2, &BTreeSet::new());
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), [1, 4]);
        assert!(m.nearest(&q, 0, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = train_sgns::<f32>(ContextType::List, &clustered_pairs(), &small(4)).unwrap();
        let path = dir.path().join("list.emb");
        m.save(&path).unwrap();
        let back = ContextEmbeddingModel::<f32>::load(&path).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.vector(0).unwrap().iter().zip(m.vector(0).unwrap()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.ctx_type(), ContextType::List);

        assert!(matches!(
            ContextEmbeddingModel::<f64>::load(&path),
            Err(Error::Format(_))
        ));

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            ContextEmbeddingModel::<f32>::load(&path),
            Err(Error::Format(_))
        ));

        let mut v2 = bytes.clone();
        v2[12] = b'2';
        fs::write(&path, &v2).unwrap();
        assert!(matches!(
            ContextEmbeddingModel::<f32>::load(&path),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn every_context_type_tag_survives_save() {
        let dir = tempfile::tempdir().unwrap();
        for t in ContextType::ALL {
            let m = ContextEmbeddingModel::<f32>::from_vectors(t, vec![(0, vec![1.0, 2.0])]).unwrap();
            let p = dir.path().join(format!("{t}.emb"));
            m.save(&p).unwrap();
            assert_eq!(ContextEmbeddingModel::<f32>::load(&p).unwrap().ctx_type(), t);
        }
    }
}

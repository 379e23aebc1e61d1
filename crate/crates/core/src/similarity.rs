//! Ten similarity features of a candidate against a seed set: centroid and
//! average pairwise cosine under each of the five context models.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::contexts::ContextType;
use crate::embedding::ContextEmbeddingModel;
use crate::error::{Error, Result};
use crate::scalar::{cosine_of, norm, Scalar};
use crate::GroupId;

pub const FEATURE_WIDTH: usize = 10;
pub const MAX_SEEDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    seeds: Vec<GroupId>,
    pub category_name: Option<String>,
}

impl SeedSet {
    pub fn new(seeds: Vec<GroupId>) -> Result<Self> {
        if seeds.is_empty() || seeds.len() > MAX_SEEDS {
            return Err(Error::Config(format!(
                "seed set must hold 1..={MAX_SEEDS} terms, got {}",
                seeds.len()
            )));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(Error::Config("duplicate seed".into()));
        }
        Ok(SeedSet {
            seeds,
            category_name: None,
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.category_name = Some(name.into());
        self
    }

    pub fn ids(&self) -> &[GroupId] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn contains(&self, id: GroupId) -> bool {
        self.seeds.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct FeatureVector<F: Scalar> {
    pub values: [F; FEATURE_WIDTH],
    /// Number of slots that could be computed; the rest hold 0.
    pub presence_count: u8,
}

impl<F: Scalar> FeatureVector<F> {
    pub fn zeros() -> Self {
        FeatureVector {
            values: [F::zero(); FEATURE_WIDTH],
            presence_count: 0,
        }
    }
}

fn normalized<F: Scalar>(v: &[F]) -> Option<Vec<F>> {
    let n = norm(v);
    (n > F::zero()).then(|| v.iter().map(|&x| x / n).collect())
}

/// Mean of the normalized vectors of the seeds present in `model`.
pub fn centroid<F: Scalar>(model: &ContextEmbeddingModel<F>, seeds: &SeedSet) -> Option<Vec<F>> {
    centroid_of(&seed_vectors(model, seeds))
}

fn seed_vectors<F: Scalar>(model: &ContextEmbeddingModel<F>, seeds: &SeedSet) -> Vec<Vec<F>> {
    // sorted so float sums do not depend on seed order
    let mut ids = seeds.ids().to_vec();
    ids.sort_unstable();
    ids.into_iter()
        .filter_map(|s| model.vector(s).and_then(normalized))
        .collect()
}

fn centroid_of<F: Scalar>(vectors: &[Vec<F>]) -> Option<Vec<F>> {
    let first = vectors.first()?;
    let mut c = vec![F::zero(); first.len()];
    for v in vectors {
        for (a, &b) in c.iter_mut().zip(v) {
            *a += b;
        }
    }
    let n = F::of(vectors.len() as f64);
    for a in &mut c {
        *a /= n;
    }
    Some(c)
}

pub fn centroid_score<F: Scalar>(model: &ContextEmbeddingModel<F>, seeds: &SeedSet, cand: GroupId) -> Option<F> {
    SeedProfile::new(model, seeds).centroid_score(model, cand)
}

pub fn pairwise_score<F: Scalar>(model: &ContextEmbeddingModel<F>, seeds: &SeedSet, cand: GroupId) -> Option<F> {
    SeedProfile::new(model, seeds).pairwise_score(model, cand)
}

/// Seed-side quantities for one model, computed once per query.
#[derive(Debug, Clone)]
pub struct SeedProfile<F: Scalar> {
    seeds: Vec<Vec<F>>,
    centroid: Option<Vec<F>>,
}

impl<F: Scalar> SeedProfile<F> {
    pub fn new(model: &ContextEmbeddingModel<F>, seeds: &SeedSet) -> Self {
        let seeds = seed_vectors(model, seeds);
        let centroid = centroid_of(&seeds);
        SeedProfile { seeds, centroid }
    }

    pub fn centroid(&self) -> Option<&[F]> {
        self.centroid.as_deref()
    }

    pub fn centroid_score(&self, model: &ContextEmbeddingModel<F>, cand: GroupId) -> Option<F> {
        cosine_of(self.centroid.as_ref()?, model.vector(cand)?)
    }

    pub fn pairwise_score(&self, model: &ContextEmbeddingModel<F>, cand: GroupId) -> Option<F> {
        let v = model.vector(cand)?;
        if self.seeds.is_empty() {
            return None;
        }
        let mut sum = F::zero();
        for s in &self.seeds {
            sum += cosine_of(s, v).unwrap_or_else(F::zero);
        }
        Some(sum / F::of(self.seeds.len() as f64))
    }
}

/// One model per context type, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet<F: Scalar> {
    models: [ContextEmbeddingModel<F>; 5],
}

impl<F: Scalar> ModelSet<F> {
    pub fn new(models: Vec<ContextEmbeddingModel<F>>) -> Result<Self> {
        let mut slots: [Option<ContextEmbeddingModel<F>>; 5] = Default::default();
        for m in models {
            let slot = &mut slots[m.ctx_type().index()];
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate {} model", m.ctx_type())));
            }
            *slot = Some(m);
        }
        if let Some(i) = slots.iter().position(Option::is_none) {
            return Err(Error::Config(format!("missing {} model", ContextType::ALL[i])));
        }
        Ok(ModelSet {
            models: slots.map(|m| m.expect("all slots checked")),
        })
    }

    pub fn get(&self, t: ContextType) -> &ContextEmbeddingModel<F> {
        &self.models[t.index()]
    }

    pub fn get_mut(&mut self, t: ContextType) -> &mut ContextEmbeddingModel<F> {
        &mut self.models[t.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ContextEmbeddingModel<F>> {
        self.models.iter()
    }

    pub fn into_vec(self) -> Vec<ContextEmbeddingModel<F>> {
        self.models.into()
    }

    /// Every id known to at least one model.
    pub fn vocabulary(&self) -> BTreeSet<GroupId> {
        self.models.iter().flat_map(|m| m.ids().iter().copied()).collect()
    }

    pub fn profile(&self, seeds: &SeedSet) -> QueryProfile<F> {
        QueryProfile {
            profiles: std::array::from_fn(|i| SeedProfile::new(&self.models[i], seeds)),
        }
    }
}

/// Seed profiles for all five models.
#[derive(Debug, Clone)]
pub struct QueryProfile<F: Scalar> {
    profiles: [SeedProfile<F>; 5],
}

impl<F: Scalar> QueryProfile<F> {
    pub fn get(&self, t: ContextType) -> &SeedProfile<F> {
        &self.profiles[t.index()]
    }

    /// True when no seed is known to any model.
    pub fn is_blind(&self) -> bool {
        self.profiles.iter().all(|p| p.centroid.is_none())
    }

    pub fn features(&self, models: &ModelSet<F>, cand: GroupId) -> FeatureVector<F> {
        let mut fv = FeatureVector::zeros();
        for t in ContextType::ALL {
            let (m, p) = (models.get(t), self.get(t));
            let i = 2 * t.index();
            if let Some(c) = p.centroid_score(m, cand) {
                fv.values[i] = c;
                fv.presence_count += 1;
            }
            if let Some(c) = p.pairwise_score(m, cand) {
                fv.values[i + 1] = c;
                fv.presence_count += 1;
            }
        }
        fv
    }
}

pub fn feature_vector<F: Scalar>(models: &ModelSet<F>, seeds: &SeedSet, cand: GroupId) -> FeatureVector<F> {
    models.profile(seeds).features(models, cand)
}

/// A labeled feature row for MLP training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Example<F: Scalar> {
    pub seeds: Vec<GroupId>,
    pub cand: GroupId,
    pub features: FeatureVector<F>,
    pub label: bool,
}

/// Writes `seed_ids \t cand_id \t f1..f10 \t label`, seeds comma-joined.
pub fn write_feature_dump<F: Scalar, W: Write>(w: &mut W, rows: &[Example<F>]) -> std::io::Result<()> {
    for r in rows {
        let mut line = r.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
        write!(line, "\t{}", r.cand).expect("write to String");
        for v in &r.features.values {
            write!(line, "\t{v}").expect("write to String");
        }
        writeln!(w, "{line}\t{}", u8::from(r.label))?;
    }
    Ok(())
}

pub fn read_feature_dump<F: Scalar, R: BufRead>(r: R) -> Result<Vec<Example<F>>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != FEATURE_WIDTH + 3 {
            return Err(bad(format!(
                "expected {} columns, got {}",
                FEATURE_WIDTH + 3,
                cols.len()
            )));
        }
        let seeds = cols[0]
            .split(',')
            .map(|s| s.parse::<GroupId>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let cand = cols[1]
            .parse()
            .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
        let mut features = FeatureVector::zeros();
        for (k, c) in cols[2..2 + FEATURE_WIDTH].iter().enumerate() {
            let v: f64 = c.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            features.values[k] = F::of(v);
            if v != 0.0 {
                features.presence_count += 1;
            }
        }
        let label = match cols[FEATURE_WIDTH + 2] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("label must be 0 or 1, got {other:?}"))),
        };
        out.push(Example {
            seeds,
            cand,
            features,
            label,
        });
    }
    Ok(out)
}

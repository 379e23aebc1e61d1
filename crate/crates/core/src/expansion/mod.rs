//! Candidate generation, MLP scoring, ranked expansion and categories.

mod category;
mod mlp;

use std::collections::BTreeSet;

use log::warn;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use category::{slug, Category, CategoryStore, Snapshot};
pub use mlp::{predict_certainty, train_mlp, MlpHyper, MlpModel};

use crate::error::{Error, Result};
use crate::evaluation::GoldClass;
use crate::scalar::Scalar;
use crate::similarity::{Example, FeatureVector, ModelSet, QueryProfile, SeedSet};
use crate::GroupId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ExpansionCandidate<F: Scalar> {
    pub group_id: GroupId,
    pub features: FeatureVector<F>,
    pub certainty: F,
    pub is_seed: bool,
    /// Marked by the user as belonging to the category.
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandConfig {
    pub k: usize,
    pub threshold: Option<f64>,
    pub per_model_n: usize,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        ExpandConfig {
            k: 50,
            threshold: None,
            per_model_n: 500,
        }
    }
}

fn candidates_from_profile<F: Scalar>(
    models: &ModelSet<F>,
    profile: &QueryProfile<F>,
    seeds: &SeedSet,
    per_model_n: usize,
) -> BTreeSet<GroupId> {
    let exclude: BTreeSet<GroupId> = seeds.ids().iter().copied().collect();
    let mut out = BTreeSet::new();
    for m in models.iter() {
        if let Some(c) = profile.get(m.ctx_type()).centroid() {
            out.extend(m.nearest(c, per_model_n, &exclude).into_iter().map(|(g, _)| g));
        }
    }
    out
}

/// Union over the five models of the `per_model_n` nearest terms to the
/// seed centroid, without the seeds.
pub fn generate_candidates<F: Scalar>(
    models: &ModelSet<F>,
    seeds: &SeedSet,
    per_model_n: usize,
) -> Result<BTreeSet<GroupId>> {
    let profile = models.profile(seeds);
    if profile.is_blind() {
        return Err(Error::NoSignal);
    }
    Ok(candidates_from_profile(models, &profile, seeds, per_model_n))
}

fn rank_key<F: Scalar>(a: &ExpansionCandidate<F>, b: &ExpansionCandidate<F>) -> std::cmp::Ordering {
    b.certainty
        .partial_cmp(&a.certainty)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.group_id.cmp(&b.group_id))
}

/// Ranked expansion: the seeds first at certainty 1, then up to `k`
/// candidates by certainty (ties by group id).
pub fn expand<F: Scalar>(
    models: &ModelSet<F>,
    mlp: &MlpModel<F>,
    seeds: &SeedSet,
    cfg: &ExpandConfig,
) -> Result<Vec<ExpansionCandidate<F>>> {
    let profile = models.profile(seeds);
    if profile.is_blind() {
        return Err(Error::NoSignal);
    }
    let pool: Vec<GroupId> = candidates_from_profile(models, &profile, seeds, cfg.per_model_n)
        .into_iter()
        .collect();
    let mut scored: Vec<ExpansionCandidate<F>> = pool
        .par_iter()
        .map(|&g| {
            let features = profile.features(models, g);
            let certainty = mlp.predict(&features.values)?;
            Ok(ExpansionCandidate {
                group_id: g,
                features,
                certainty,
                is_seed: false,
                validated: false,
            })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(rank_key);
    if let Some(t) = cfg.threshold {
        scored.retain(|c| c.certainty.as_f64() >= t);
    }
    scored.truncate(cfg.k);

    let mut out: Vec<ExpansionCandidate<F>> = seeds
        .ids()
        .iter()
        .map(|&s| ExpansionCandidate {
            group_id: s,
            features: profile.features(models, s),
            certainty: F::one(),
            is_seed: true,
            validated: false,
        })
        .collect();
    out.extend(scored);
    Ok(out)
}

/// Expands again from the original seeds plus the validated terms (or all
/// current results when `validated_only` is false), recording the run in
/// the category history.
pub fn reexpand<F: Scalar>(
    category: &mut Category<F>,
    models: &ModelSet<F>,
    mlp: &MlpModel<F>,
    cfg: &ExpandConfig,
    validated_only: bool,
) -> Result<Vec<ExpansionCandidate<F>>> {
    let mut ids = category.seeds.clone();
    for c in &category.expanded {
        if (c.validated || !validated_only) && !ids.contains(&c.group_id) {
            ids.push(c.group_id);
        }
    }
    if ids.is_empty() {
        return Err(Error::NoSignal);
    }
    let validated: BTreeSet<GroupId> = category.validated().collect();
    let seeds = SeedSet::new(ids.clone())?;
    let mut result = expand(models, mlp, &seeds, cfg)?;
    for c in &mut result {
        c.validated = validated.contains(&c.group_id);
    }
    category.record(ids, result.clone());
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSetConfig {
    pub min_class_size: usize,
    pub queries_per_class: usize,
    pub min_seeds: usize,
    pub max_seeds: usize,
    pub max_positives: usize,
    /// Neighbors per model searched for hard negatives.
    pub hard_pool: usize,
    pub seed: u64,
}

impl Default for TrainingSetConfig {
    fn default() -> Self {
        TrainingSetConfig {
            min_class_size: 5,
            queries_per_class: 20,
            min_seeds: 2,
            max_seeds: 10,
            max_positives: 10,
            hard_pool: 50,
            seed: 13,
        }
    }
}

/// Labeled feature rows drawn from gold classes. Each query contributes
/// held-out members as positives and as many negatives, half random
/// non-members and half the non-members closest to the seeds.
pub fn build_training_set<F: Scalar>(
    gold: &[GoldClass],
    models: &ModelSet<F>,
    cfg: &TrainingSetConfig,
) -> Result<Vec<Example<F>>> {
    if cfg.min_seeds == 0 || cfg.min_seeds > cfg.max_seeds {
        return Err(Error::Config("seed size range is empty".into()));
    }
    let vocab: Vec<GroupId> = models.vocabulary().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let mut used_classes = 0;
    for class in gold {
        let members: Vec<GroupId> = class
            .members
            .iter()
            .copied()
            .filter(|g| vocab.binary_search(g).is_ok())
            .collect();
        if members.len() < cfg.min_class_size.max(cfg.min_seeds + 1) {
            warn!(
                "class {:?} has {} terms in vocabulary; skipped",
                class.name,
                members.len()
            );
            continue;
        }
        let outsiders: Vec<GroupId> = vocab.iter().copied().filter(|g| !class.members.contains(g)).collect();
        if outsiders.is_empty() {
            warn!("class {:?} covers the whole vocabulary; skipped", class.name);
            continue;
        }
        used_classes += 1;
        for _ in 0..cfg.queries_per_class {
            let size = rng.random_range(cfg.min_seeds..=cfg.max_seeds.min(members.len() - 1));
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            let (seed_ids, rest) = shuffled.split_at(size);
            let positives: Vec<GroupId> = rest.iter().copied().take(cfg.max_positives).collect();
            let seeds = SeedSet::new(seed_ids.to_vec())?;
            let profile = models.profile(&seeds);

            let hard_count = positives.len() / 2;
            let mut hard: Vec<(GroupId, FeatureVector<F>)> =
                candidates_from_profile(models, &profile, &seeds, cfg.hard_pool)
                    .into_iter()
                    .filter(|g| !class.members.contains(g))
                    .map(|g| (g, profile.features(models, g)))
                    .collect();
            let closeness = |f: &FeatureVector<F>| f.values.iter().step_by(2).fold(0.0, |a, v| a + v.as_f64());
            hard.sort_by(|a, b| closeness(&b.1).total_cmp(&closeness(&a.1)).then(a.0.cmp(&b.0)));
            hard.truncate(hard_count);

            let mut negatives: BTreeSet<GroupId> = hard.iter().map(|h| h.0).collect();
            let wanted = positives.len().min(outsiders.len());
            while negatives.len() < wanted {
                negatives.insert(*outsiders.choose(&mut rng).expect("non-empty"));
            }

            let ids = seeds.ids().to_vec();
            for &p in &positives {
                rows.push(Example {
                    seeds: ids.clone(),
                    cand: p,
                    features: profile.features(models, p),
                    label: true,
                });
            }
            for &n in &negatives {
                rows.push(Example {
                    seeds: ids.clone(),
                    cand: n,
                    features: profile.features(models, n),
                    label: false,
                });
            }
        }
    }
    if used_classes == 0 {
        return Err(Error::InsufficientData("no gold class is large enough".into()));
    }
    rows.shuffle(&mut rng);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contexts::ContextType;
    use crate::embedding::ContextEmbeddingModel;

    /// Two clusters around the axes plus scattered terms.
    fn toy_models(scale_sp: f64, skip: &[ContextType]) -> ModelSet<f64> {
        let mut vs: Vec<(GroupId, Vec<f64>)> = Vec::new();
        for i in 0..8u32 {
            let t = i as f64 * 0.02;
            vs.push((i, vec![1.0, t, 0.1]));
            vs.push((100 + i, vec![t, 1.0, 0.1]));
        }
        for i in 0..6u32 {
            vs.push((200 + i, vec![0.3, 0.3, 1.0 + i as f64]));
        }
        ModelSet::new(
            ContextType::ALL
                .iter()
                .map(|&t| {
                    let mut m = if skip.contains(&t) {
                        ContextEmbeddingModel::from_vectors(t, vec![(999, vec![0.0, 0.0, 1.0])]).unwrap()
                    } else {
                        ContextEmbeddingModel::from_vectors(t, vs.clone()).unwrap()
                    };
                    if t == ContextType::Sp {
                        m.scale(scale_sp);
                    }
                    m
                })
                .collect(),
        )
        .unwrap()
    }

    fn gold() -> Vec<GoldClass> {
        vec![
            GoldClass {
                name: "a".into(),
                members: (0..8).collect(),
            },
            GoldClass {
                name: "b".into(),
                members: (100..108).collect(),
            },
        ]
    }

    fn seeds(ids: &[GroupId]) -> SeedSet {
        SeedSet::new(ids.to_vec()).unwrap()
    }

    fn trained(models: &ModelSet<f64>) -> MlpModel<f64> {
        let data = build_training_set(&gold(), models, &TrainingSetConfig::default()).unwrap();
        train_mlp(&data, &MlpHyper::default()).unwrap()
    }

    #[test]
    fn candidates_are_union_of_neighbors() {
        let models = toy_models(1.0, &[]);
        let s = seeds(&[0, 1]);
        assert!(generate_candidates(&models, &s, 0).unwrap().is_empty());
        let got = generate_candidates(&models, &s, 3).unwrap();
        let mut brute = BTreeSet::new();
        for m in models.iter() {
            let c = crate::similarity::centroid(m, &s).unwrap();
            let mut all: Vec<(GroupId, f64)> = m
                .ids()
                .iter()
                .filter(|g| !s.contains(**g))
                .map(|&g| (g, crate::scalar::cosine_of(&c, m.vector(g).unwrap()).unwrap()))
                .collect();
            all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            brute.extend(all.iter().take(3).map(|x| x.0));
        }
        assert_eq!(got, brute);
        assert!(!got.contains(&0) && !got.contains(&1));
    }

    #[test]
    fn candidates_from_single_informed_model() {
        let skip = [
            ContextType::Linear,
            ContextType::List,
            ContextType::Dep,
            ContextType::Up,
        ];
        let models = toy_models(1.0, &skip);
        let got = generate_candidates(&models, &seeds(&[0, 1]), 100).unwrap();
        assert!(!got.contains(&999));
        assert_eq!(got.len(), 20);
        assert!(matches!(
            generate_candidates(&models, &seeds(&[5000]), 10),
            Err(Error::NoSignal)
        ));
    }

    #[test]
    fn small_classes_skipped() {
        let models = toy_models(1.0, &[]);
        let tiny = vec![GoldClass {
            name: "tiny".into(),
            members: (0..4).collect(),
        }];
        assert!(matches!(
            build_training_set(&tiny, &models, &TrainingSetConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn training_set_is_balanced() {
        let models = toy_models(1.0, &[]);
        let cfg = TrainingSetConfig {
            queries_per_class: 5,
            ..TrainingSetConfig::default()
        };
        let data = build_training_set(&gold(), &models, &cfg).unwrap();
        let pos = data.iter().filter(|e| e.label).count();
        assert_eq!(pos * 2, data.len());
        for e in &data {
            assert!(!e.seeds.contains(&e.cand));
        }
    }

    #[test]
    fn expansion_shape() {
        let models = toy_models(1.0, &[]);
        let mlp = trained(&models);
        let s = seeds(&[3, 0]);
        let out = expand(&models, &mlp, &s, &ExpandConfig::default()).unwrap();
        assert_eq!(out[0].group_id, 3);
        assert_eq!(out[1].group_id, 0);
        assert!(out[..2].iter().all(|c| c.is_seed && c.certainty == 1.0));
        let tail = &out[2..];
        assert!(tail.iter().all(|c| !c.is_seed && !s.contains(c.group_id)));
        assert!(tail.windows(2).all(|w| rank_key(&w[0], &w[1]).is_le()));
        let ids: BTreeSet<GroupId> = out.iter().map(|c| c.group_id).collect();
        assert_eq!(ids.len(), out.len());
        // the rest of cluster a comes first
        let top: BTreeSet<GroupId> = tail[..6].iter().map(|c| c.group_id).collect();
        assert_eq!(top, [1, 2, 4, 5, 6, 7].into());

        let cfg = ExpandConfig {
            k: 0,
            ..ExpandConfig::default()
        };
        assert_eq!(expand(&models, &mlp, &s, &cfg).unwrap().len(), 2);
        let cfg = ExpandConfig {
            threshold: Some(0.5),
            ..ExpandConfig::default()
        };
        let thr = expand(&models, &mlp, &s, &cfg).unwrap();
        assert!(thr[2..].iter().all(|c| c.certainty >= 0.5));
    }

    #[test]
    fn ranking_invariant_to_model_scale_and_seed_order() {
        let models = toy_models(1.0, &[]);
        let mlp = trained(&models);
        let scaled = toy_models(37.5, &[]);
        let cfg = ExpandConfig::default();
        let ids = |v: Vec<ExpansionCandidate<f64>>| -> Vec<(GroupId, f64)> {
            v.into_iter()
                .filter(|c| !c.is_seed)
                .map(|c| (c.group_id, c.certainty))
                .collect()
        };
        let a = ids(expand(&models, &mlp, &seeds(&[0, 1, 2]), &cfg).unwrap());
        let b = ids(expand(&scaled, &mlp, &seeds(&[0, 1, 2]), &cfg).unwrap());
        let c = ids(expand(&models, &mlp, &seeds(&[2, 0, 1]), &cfg).unwrap());
        assert_eq!(
            a.iter().map(|x| x.0).collect::<Vec<_>>(),
            b.iter().map(|x| x.0).collect::<Vec<_>>()
        );
        assert_eq!(a, c);
    }

    #[test]
    fn reexpansion_grows_history_and_reuses_seeds() {
        let models = toy_models(1.0, &[]);
        let mlp = trained(&models);
        let cfg = ExpandConfig::default();
        let s = seeds(&[0, 1]);
        let first = expand(&models, &mlp, &s, &cfg).unwrap();
        let mut cat = Category::new("a", s.ids().to_vec(), first.clone()).unwrap();
        let again = reexpand(&mut cat, &models, &mlp, &cfg, true).unwrap();
        assert_eq!(again, first);
        assert_eq!(cat.history.len(), 2);
        assert_eq!(cat.history[1].seeds, [0, 1]);

        let pick = again[2].group_id;
        cat.validate(pick, true).unwrap();
        let third = reexpand(&mut cat, &models, &mlp, &cfg, true).unwrap();
        assert_eq!(cat.history.len(), 3);
        assert_eq!(cat.history[2].seeds, [0, 1, pick]);
        let p = third.iter().find(|c| c.group_id == pick).unwrap();
        assert!(p.is_seed && p.validated && p.certainty == 1.0);
    }
}

//! End-to-end training and the query-side engine.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contexts::{
    extract_all, extract_linear, ContextPair, ContextStreams, ContextType, ExtractConfig, PairStream, PatternInventory,
    DEFAULT_PATTERNS,
};
use crate::corpus::{snippets_for_group, Corpus, Snippet};
use crate::embedding::{train_sgns, ContextEmbeddingModel, Hyperparams};
use crate::error::{Error, Result};
use crate::evaluation::{resolve_gold, GoldClass, GoldClassSpec, Ranker};
use crate::expansion::{
    build_training_set, expand, reexpand, train_mlp, Category, ExpandConfig, ExpansionCandidate, MlpHyper, MlpModel,
    TrainingSetConfig,
};
use crate::scalar::Scalar;
use crate::similarity::{ModelSet, SeedSet};
use crate::terms::{
    assign_display_names, candidate_term_counts, group_terms, load_groups, normalize_term, save_groups,
    score_importance, top_groups, GroupingConfig, ImportanceScore, OccurrenceIndex, TermGroup, TermIndex, STOPWORDS,
};
use crate::GroupId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Minimum count for unigram/bigram candidates of untagged text.
    pub fallback_min_count: usize,
    pub grouping: GroupingConfig,
    pub window: usize,
    /// Drop stopwords from Linear contexts.
    pub linear_stoplist: bool,
    pub patterns: Vec<String>,
    pub embedding: Hyperparams,
    pub mlp: MlpHyper,
    pub training_set: TrainingSetConfig,
    pub expand: ExpandConfig,
    /// Largest number of list-derived classes used when no gold is given.
    pub max_pseudo_classes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            fallback_min_count: 5,
            grouping: GroupingConfig::default(),
            window: 5,
            linear_stoplist: false,
            patterns: DEFAULT_PATTERNS.iter().map(|s| s.to_string()).collect(),
            embedding: Hyperparams::default(),
            mlp: MlpHyper::default(),
            training_set: TrainingSetConfig::default(),
            expand: ExpandConfig::default(),
            max_pseudo_classes: 50,
        }
    }
}

impl TrainConfig {
    pub fn extract_config(&self) -> Result<ExtractConfig> {
        let linear_stoplist = self
            .linear_stoplist
            .then(|| STOPWORDS.iter().map(|s| s.to_string()).collect::<HashSet<String>>());
        Ok(ExtractConfig {
            window: self.window,
            linear_stoplist,
            patterns: PatternInventory::parse(&self.patterns)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grouping.validate()?;
        self.embedding.validate()?;
        self.mlp.validate()?;
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        PatternInventory::parse(&self.patterns).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Terms,
    Grouping,
    Indexing,
    Contexts,
    Embedding(ContextType),
    Mlp,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Terms => f.write_str("terms"),
            Stage::Grouping => f.write_str("grouping"),
            Stage::Indexing => f.write_str("indexing"),
            Stage::Contexts => f.write_str("contexts"),
            Stage::Embedding(t) => write!(f, "embedding:{t}"),
            Stage::Mlp => f.write_str("mlp"),
        }
    }
}

/// Progress events: a stage starting (`done = false`) or finishing.
pub type Progress<'a> = &'a (dyn Fn(Stage, bool) + Sync);

/// Error tagged with the stage it came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn at<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

/// A term-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub group_id: GroupId,
    pub display_name: String,
    pub members: Vec<String>,
    pub excluded: Vec<String>,
    pub tfidf: f64,
    pub frequency: usize,
    pub is_multi: bool,
}

fn term_row(g: &TermGroup, s: &ImportanceScore) -> TermRow {
    TermRow {
        group_id: g.id,
        display_name: g.display_name.clone(),
        members: g.members.iter().cloned().collect(),
        excluded: g.excluded.iter().cloned().collect(),
        tfidf: s.tfidf,
        frequency: s.frequency,
        is_multi: g.is_multi(),
    }
}

/// Trained artifacts for one corpus.
#[derive(Debug, Clone)]
pub struct SetExpander<F: Scalar> {
    corpus: Corpus,
    groups: Vec<TermGroup>,
    term_index: TermIndex,
    occurrences: OccurrenceIndex,
    importance: Vec<ImportanceScore>,
    models: ModelSet<F>,
    mlp: MlpModel<F>,
    config: TrainConfig,
}

/// Ids of normalized candidates and a Linear model over them.
type Preliminary<F> = (BTreeMap<String, GroupId>, ContextEmbeddingModel<F>);

/// Trains a linear model on ungrouped terms; it only serves the edit
/// distance rule of grouping.
fn preliminary_similarity<F: Scalar>(
    corpus: &Corpus,
    counts: &BTreeMap<String, usize>,
    cfg: &TrainConfig,
) -> Option<Preliminary<F>> {
    let normalized: BTreeSet<String> = counts.keys().filter_map(|t| normalize_term(t).ok()).collect();
    let ids: BTreeMap<String, GroupId> = normalized
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, i as GroupId))
        .collect();
    let groups: Vec<TermGroup> = ids.iter().map(|(t, &i)| TermGroup::singleton(i, t.clone())).collect();
    let index = TermIndex::new(&groups);
    let pairs: Vec<ContextPair> = corpus
        .sentences()
        .collect::<Vec<_>>()
        .par_iter()
        .flat_map_iter(|s| extract_linear(s, &index, cfg.window))
        .collect();
    match train_sgns::<F>(ContextType::Linear, &pairs, &cfg.embedding) {
        Ok(m) => Some((ids, m)),
        Err(e) => {
            warn!("preliminary model unavailable ({e}); edit-distance grouping disabled");
            None
        }
    }
}

/// Classes read off explicit lists: each frequent list member together with
/// the terms it is listed with at least twice. Overlapping candidates are
/// dropped greedily.
pub fn pseudo_gold_from_lists(
    list: &PairStream,
    index: &TermIndex,
    min_size: usize,
    max_classes: usize,
) -> Vec<GoldClass> {
    let mut mates: BTreeMap<GroupId, BTreeMap<GroupId, usize>> = BTreeMap::new();
    for p in &list.pairs {
        let Some(other) = normalize_term(&p.context).ok().and_then(|n| index.lookup(&n)) else {
            continue;
        };
        if other != p.focus {
            *mates.entry(p.focus).or_default().entry(other).or_default() += 1;
        }
    }
    let mut focus: Vec<(GroupId, usize)> = list.focus_counts.iter().map(|(&g, &c)| (g, c)).collect();
    focus.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<GoldClass> = Vec::new();
    for (g, _) in focus {
        if out.len() >= max_classes {
            break;
        }
        let Some(m) = mates.get(&g) else { continue };
        let mut members: BTreeSet<GroupId> = m.iter().filter(|(_, &c)| c >= 2).map(|(&o, _)| o).collect();
        members.insert(g);
        if members.len() < min_size {
            continue;
        }
        let overlaps = out.iter().any(|c| {
            let inter = c.members.intersection(&members).count();
            let union = c.members.union(&members).count();
            inter * 2 > union
        });
        if !overlaps {
            out.push(GoldClass {
                name: format!("list-{g}"),
                members,
            });
        }
    }
    out
}

impl<F: Scalar> SetExpander<F> {
    /// Runs the full pipeline. Without `gold`, MLP labels come from
    /// explicit lists in the corpus.
    pub fn train(
        corpus: Corpus,
        gold: Option<&[GoldClassSpec]>,
        cfg: &TrainConfig,
        progress: Progress<'_>,
    ) -> std::result::Result<Self, StageError> {
        at(Stage::Terms, cfg.validate())?;
        progress(Stage::Terms, false);
        let counts = candidate_term_counts(&corpus, cfg.fallback_min_count);
        if counts.is_empty() {
            return Err(StageError {
                stage: Stage::Terms,
                error: Error::InsufficientData("no candidate terms".into()),
            });
        }
        progress(Stage::Terms, true);

        progress(Stage::Grouping, false);
        let prelim: OnceCell<Option<Preliminary<F>>> = OnceCell::new();
        let similarity = |a: &str, b: &str| -> Option<f64> {
            let (ids, model) = prelim
                .get_or_init(|| preliminary_similarity(&corpus, &counts, cfg))
                .as_ref()?;
            model.cosine(*ids.get(a)?, *ids.get(b)?).ok().map(|c| c.as_f64())
        };
        let groups = at(Stage::Grouping, group_terms(&counts, &similarity, &cfg.grouping))?;
        info!("{} candidate terms in {} groups", counts.len(), groups.len());
        progress(Stage::Grouping, true);

        progress(Stage::Indexing, false);
        let mut engine_groups = groups;
        let term_index = TermIndex::new(&engine_groups);
        let occurrences = OccurrenceIndex::build(&corpus, &term_index);
        assign_display_names(&occurrences, &mut engine_groups);
        let importance = score_importance(&occurrences, &engine_groups);
        progress(Stage::Indexing, true);

        progress(Stage::Contexts, false);
        let extract = at(Stage::Contexts, cfg.extract_config())?;
        let streams: ContextStreams = extract_all(&corpus, &term_index, &extract);
        for t in ContextType::ALL {
            info!("{t}: {} pairs", streams.get(t).len());
        }
        progress(Stage::Contexts, true);

        let models: Vec<ContextEmbeddingModel<F>> = ContextType::ALL
            .par_iter()
            .map(|&t| {
                progress(Stage::Embedding(t), false);
                let hyper = Hyperparams {
                    seed: cfg.embedding.seed.wrapping_add(t.index() as u64),
                    ..cfg.embedding.clone()
                };
                let m = match train_sgns::<F>(t, &streams.get(t).pairs, &hyper) {
                    Ok(m) => m,
                    Err(Error::InsufficientData(why)) => {
                        warn!("{t} model left empty: {why}");
                        ContextEmbeddingModel::empty(t, hyper)
                    }
                    Err(e) => {
                        return Err(StageError {
                            stage: Stage::Embedding(t),
                            error: e,
                        })
                    }
                };
                progress(Stage::Embedding(t), true);
                Ok(m)
            })
            .collect::<std::result::Result<_, _>>()?;
        let models = at(Stage::Mlp, ModelSet::new(models))?;

        progress(Stage::Mlp, false);
        let classes = match gold {
            Some(g) => resolve_gold(g, &term_index),
            None => pseudo_gold_from_lists(
                streams.get(ContextType::List),
                &term_index,
                cfg.training_set.min_class_size,
                cfg.max_pseudo_classes,
            ),
        };
        let data = at(Stage::Mlp, build_training_set(&classes, &models, &cfg.training_set))?;
        let mlp = at(Stage::Mlp, train_mlp(&data, &cfg.mlp))?;
        info!(
            "mlp trained on {} rows, loss {:.4} -> {:.4}",
            data.len(),
            mlp.initial_loss,
            mlp.loss_curve.last().copied().unwrap_or(f64::NAN)
        );
        progress(Stage::Mlp, true);

        Ok(SetExpander {
            corpus,
            groups: engine_groups,
            term_index,
            occurrences,
            importance,
            models,
            mlp,
            config: cfg.clone(),
        })
    }

    pub fn from_parts(
        corpus: Corpus,
        groups: Vec<TermGroup>,
        models: ModelSet<F>,
        mlp: MlpModel<F>,
        config: TrainConfig,
    ) -> Self {
        let term_index = TermIndex::new(&groups);
        let occurrences = OccurrenceIndex::build(&corpus, &term_index);
        let importance = score_importance(&occurrences, &groups);
        SetExpander {
            corpus,
            groups,
            term_index,
            occurrences,
            importance,
            models,
            mlp,
            config,
        }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn groups(&self) -> &[TermGroup] {
        &self.groups
    }

    pub fn group(&self, id: GroupId) -> Option<&TermGroup> {
        self.groups
            .binary_search_by_key(&id, |g| g.id)
            .ok()
            .map(|i| &self.groups[i])
    }

    pub fn term_index(&self) -> &TermIndex {
        &self.term_index
    }

    pub fn importance(&self) -> &[ImportanceScore] {
        &self.importance
    }

    pub fn models(&self) -> &ModelSet<F> {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut ModelSet<F> {
        &mut self.models
    }

    pub fn mlp(&self) -> &MlpModel<F> {
        &self.mlp
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Group id of a surface form.
    pub fn lookup(&self, term: &str) -> Option<GroupId> {
        self.term_index.lookup(&normalize_term(term).ok()?)
    }

    pub fn terms(&self, filter: Option<&str>, limit: usize, offset: usize) -> Vec<TermRow> {
        top_groups(&self.importance, &self.groups, offset.saturating_add(limit), filter)
            .into_iter()
            .skip(offset)
            .map(|(g, s)| term_row(g, s))
            .collect()
    }

    /// Table row of one group.
    pub fn term_row(&self, gid: GroupId) -> Result<TermRow> {
        let g = self.group(gid).ok_or(Error::UnknownTerm(gid))?;
        let s = self
            .importance
            .iter()
            .find(|s| s.group_id == gid)
            .cloned()
            .unwrap_or(ImportanceScore {
                group_id: gid,
                tfidf: 0.0,
                frequency: 0,
                df: 0,
            });
        Ok(term_row(g, &s))
    }

    pub fn snippets(&self, gid: GroupId, max: usize) -> Result<Vec<Snippet>> {
        let g = self.group(gid).ok_or(Error::UnknownTerm(gid))?;
        snippets_for_group(&self.corpus, &self.occurrences, g, max)
    }

    /// Excludes members from a group and refreshes indexes and names.
    pub fn exclude(&mut self, gid: GroupId, members: &[String]) -> Result<&TermGroup> {
        let i = self
            .groups
            .binary_search_by_key(&gid, |g| g.id)
            .map_err(|_| Error::UnknownTerm(gid))?;
        let mut updated = self.groups[i].clone();
        updated.exclude(members.iter().cloned())?;
        self.groups[i] = updated;
        self.term_index = TermIndex::new(&self.groups);
        self.occurrences = OccurrenceIndex::build(&self.corpus, &self.term_index);
        let old_names: Vec<String> = self.groups.iter().map(|g| g.display_name.clone()).collect();
        assign_display_names(&self.occurrences, &mut self.groups);
        // only the edited group may change its name
        for (j, (g, old)) in self.groups.iter_mut().zip(old_names).enumerate() {
            if j != i && !g.excluded.contains(&old) {
                g.display_name = old;
            }
        }
        self.importance = score_importance(&self.occurrences, &self.groups);
        Ok(&self.groups[i])
    }

    fn check_known(&self, ids: &[GroupId]) -> Result<()> {
        match ids.iter().find(|&&g| self.group(g).is_none()) {
            Some(&g) => Err(Error::UnknownTerm(g)),
            None => Ok(()),
        }
    }

    pub fn expand(&self, seeds: &SeedSet, cfg: &ExpandConfig) -> Result<Vec<ExpansionCandidate<F>>> {
        self.check_known(seeds.ids())?;
        expand(&self.models, &self.mlp, seeds, cfg)
    }

    pub fn reexpand(
        &self,
        category: &mut Category<F>,
        cfg: &ExpandConfig,
        validated_only: bool,
    ) -> Result<Vec<ExpansionCandidate<F>>> {
        reexpand(category, &self.models, &self.mlp, cfg, validated_only)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let models = dir.join("models");
        fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
        self.corpus.save_cache(&dir.join("corpus.cache"))?;
        save_groups(&dir.join("groups.tsv"), &self.groups)?;
        for m in self.models.iter() {
            m.save(&models.join(format!("{}.emb", m.ctx_type())))?;
        }
        write_json(&dir.join("mlp.json"), &self.mlp)?;
        write_json(&dir.join("config.json"), &self.config)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let corpus = Corpus::load_cache(&dir.join("corpus.cache"))?;
        let groups = load_groups(&dir.join("groups.tsv"))?;
        let models = ContextType::ALL
            .iter()
            .map(|t| ContextEmbeddingModel::load(&dir.join("models").join(format!("{t}.emb"))))
            .collect::<Result<Vec<_>>>()?;
        let mlp = read_json(&dir.join("mlp.json"))?;
        let config = read_json(&dir.join("config.json"))?;
        Ok(Self::from_parts(corpus, groups, ModelSet::new(models)?, mlp, config))
    }
}

impl<F: Scalar> Ranker for SetExpander<F> {
    fn rank(&self, seeds: &[GroupId], n: usize) -> Result<Vec<GroupId>> {
        let seeds = SeedSet::new(seeds.to_vec())?;
        let cfg = ExpandConfig {
            k: n,
            threshold: None,
            ..self.config.expand.clone()
        };
        Ok(expand(&self.models, &self.mlp, &seeds, &cfg)?
            .into_iter()
            .filter(|c| !c.is_seed)
            .map(|c| c.group_id)
            .collect())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

//! Projects on disk: one directory per ingested corpus holding the corpus
//! cache, trained artifacts and the category stores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use log::info;
use serde::{Deserialize, Serialize};

use setexpand::corpus::{load_conllu, load_plain_text, Corpus, CorpusStats, IngestConfig, Snippet};
use setexpand::evaluation::{map_at_n, resolve_gold, EvalConfig, EvalReport, GoldClassSpec};
use setexpand::expansion::{CategoryStore, ExpandConfig};
use setexpand::pipeline::{Stage, TermRow, TrainConfig};
use setexpand::similarity::SeedSet;
use setexpand::terms::save_groups;
use setexpand::{Candidate, Category, ContextType, Engine, Error, GroupId};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("models of project {0} are not ready")]
    NotReady(String),
    #[error("project {0} is already training")]
    Busy(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{stage} stage failed: {error}")]
    Stage { stage: String, error: Error },
}

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Conllu,
    Text,
}

impl CorpusFormat {
    /// `.conllu` files, or directories holding any, read as CoNLL-U.
    pub fn detect(path: &Path) -> CorpusFormat {
        let is_conllu = |p: &Path| p.extension().is_some_and(|e| e == "conllu");
        if path.is_dir() {
            let any = fs::read_dir(path)
                .map(|rd| rd.flatten().any(|e| is_conllu(&e.path())))
                .unwrap_or(false);
            if any {
                return CorpusFormat::Conllu;
            }
            return CorpusFormat::Text;
        }
        if is_conllu(path) {
            CorpusFormat::Conllu
        } else {
            CorpusFormat::Text
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conllu" | "conll-u" | "conll" => Ok(CorpusFormat::Conllu),
            "text" | "txt" | "plain" => Ok(CorpusFormat::Text),
            other => Err(ServiceError::BadRequest(format!(
                "unknown corpus format {other:?}; expected conllu or text"
            ))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Conllu => "conllu",
            CorpusFormat::Text => "text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub project_id: String,
    pub corpus_path: PathBuf,
    pub format: CorpusFormat,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelState {
    Absent,
    Training,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectStatus {
    pub models: BTreeMap<ContextType, ModelState>,
    pub mlp: ModelState,
    pub training: bool,
}

impl ProjectStatus {
    fn all(state: ModelState) -> Self {
        ProjectStatus {
            models: ContextType::ALL.iter().map(|t| (*t, state)).collect(),
            mlp: state,
            training: false,
        }
    }

    pub fn ready(&self) -> bool {
        self.mlp == ModelState::Ready && self.models.values().all(|s| *s == ModelState::Ready)
    }

    fn apply(&mut self, stage: Stage, done: bool) {
        let state = if done { ModelState::Ready } else { ModelState::Training };
        match stage {
            Stage::Embedding(t) => {
                self.models.insert(t, state);
            }
            Stage::Mlp => self.mlp = state,
            _ => {}
        }
    }

    fn fail(&mut self, stage: Stage) {
        let failed: Vec<ContextType> = match stage {
            Stage::Embedding(t) => vec![t],
            Stage::Mlp => Vec::new(),
            _ => ContextType::ALL.to_vec(),
        };
        for t in failed {
            self.models.insert(t, ModelState::Failed);
        }
        self.mlp = ModelState::Failed;
        for s in self.models.values_mut() {
            if *s == ModelState::Training {
                *s = ModelState::Absent;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectInfo {
    #[serde(flatten)]
    pub meta: ProjectMeta,
    pub status: ProjectStatus,
}

/// One expanded term as shown to users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub group_id: GroupId,
    pub display_name: String,
    pub certainty: f32,
    pub is_seed: bool,
    pub validated: bool,
    pub is_multi: bool,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryView {
    pub name: String,
    pub seeds: Vec<GroupId>,
    pub expanded: Vec<ExpansionRow>,
    pub exclusions: BTreeMap<GroupId, BTreeSet<String>>,
    pub history_length: usize,
    pub history: Vec<setexpand::expansion::Snapshot<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandRequest {
    pub seed_gids: Vec<GroupId>,
    #[serde(default)]
    pub category_name: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandResponse {
    pub category_name: Option<String>,
    pub expanded: Vec<ExpansionRow>,
}

/// A corpus with its trained engine and categories.
#[derive(Debug)]
pub struct Project {
    meta: ProjectMeta,
    dir: PathBuf,
    corpus: Corpus,
    engine: RwLock<Option<Engine>>,
    status: Mutex<ProjectStatus>,
    saved: CategoryStore,
    working: CategoryStore,
}

impl Project {
    pub fn id(&self) -> &str {
        &self.meta.project_id
    }

    pub fn meta(&self) -> &ProjectMeta {
        &self.meta
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn info(&self) -> ProjectInfo {
        ProjectInfo {
            meta: self.meta.clone(),
            status: self.status.lock().unwrap_or_else(|e| e.into_inner()).clone(),
        }
    }

    fn model_dir(&self) -> PathBuf {
        self.dir.join("model")
    }

    /// Marks the project as training; fails if a run is in progress.
    pub fn begin_training(&self) -> ServiceResult<()> {
        let mut st = self.status.lock().unwrap_or_else(|e| e.into_inner());
        if st.training {
            return Err(ServiceError::Busy(self.id().to_string()));
        }
        st.training = true;
        Ok(())
    }

    /// Runs the pipeline; call [`Project::begin_training`] first. The new
    /// engine replaces the old one only on success.
    pub fn train(
        &self,
        cfg: &TrainConfig,
        gold: Option<&[GoldClassSpec]>,
        progress: &(dyn Fn(Stage, bool) + Sync),
    ) -> ServiceResult<()> {
        let track = |stage: Stage, done: bool| {
            self.status.lock().unwrap_or_else(|e| e.into_inner()).apply(stage, done);
            progress(stage, done);
        };
        let result = Engine::train(self.corpus.clone(), gold, cfg, &track);
        let mut outcome = Ok(());
        match result {
            Ok(engine) => {
                if let Err(e) = engine.save(&self.model_dir()) {
                    outcome = Err(ServiceError::Core(e));
                } else {
                    *self.engine.write().unwrap_or_else(|e| e.into_inner()) = Some(engine);
                }
            }
            Err(e) => {
                self.status.lock().unwrap_or_else(|e| e.into_inner()).fail(e.stage);
                outcome = Err(ServiceError::Stage {
                    stage: e.stage.to_string(),
                    error: e.error,
                });
            }
        }
        let mut st = self.status.lock().unwrap_or_else(|e| e.into_inner());
        st.training = false;
        if outcome.is_ok() {
            *st = ProjectStatus::all(ModelState::Ready);
        } else if st.ready() {
            st.mlp = ModelState::Failed;
        }
        outcome
    }

    fn with_engine<R>(&self, f: impl FnOnce(&Engine) -> ServiceResult<R>) -> ServiceResult<R> {
        let guard = self.engine.read().unwrap_or_else(|e| e.into_inner());
        match guard.as_ref() {
            Some(e) if !self.status.lock().unwrap_or_else(|e| e.into_inner()).training => f(e),
            _ => Err(ServiceError::NotReady(self.id().to_string())),
        }
    }

    /// Resolves a group id or a surface form.
    pub fn resolve_term(&self, term: &str) -> ServiceResult<GroupId> {
        self.with_engine(|e| {
            if let Ok(id) = term.parse::<GroupId>() {
                if e.group(id).is_some() {
                    return Ok(id);
                }
            }
            e.lookup(term)
                .ok_or_else(|| ServiceError::NotFound(format!("term {term:?}")))
        })
    }

    pub fn terms(&self, filter: Option<&str>, limit: usize, offset: usize) -> ServiceResult<Vec<TermRow>> {
        self.with_engine(|e| Ok(e.terms(filter, limit, offset)))
    }

    pub fn term(&self, gid: GroupId) -> ServiceResult<TermRow> {
        self.with_engine(|e| Ok(e.term_row(gid)?))
    }

    pub fn contexts(&self, gid: GroupId, max: usize) -> ServiceResult<Vec<Snippet>> {
        self.with_engine(|e| Ok(e.snippets(gid, max)?))
    }

    /// Excludes members from a group, optionally noting it in a category.
    pub fn exclude(&self, gid: GroupId, members: &[String], category: Option<&str>) -> ServiceResult<TermRow> {
        let mut guard = self.engine.write().unwrap_or_else(|e| e.into_inner());
        let engine = guard
            .as_mut()
            .ok_or_else(|| ServiceError::NotReady(self.id().to_string()))?;
        let mut trial = engine.clone();
        trial.exclude(gid, members)?;
        save_groups(&self.model_dir().join("groups.tsv"), trial.groups())?;
        *engine = trial;
        if let Some(name) = category {
            let mut cat = self.working_category(name)?;
            let group = engine.group(gid).expect("group was just edited");
            cat.exclusions.insert(gid, group.excluded.clone());
            self.working.save(&cat, true)?;
        }
        Ok(engine.term_row(gid)?)
    }

    fn rows(&self, engine: &Engine, cands: &[Candidate]) -> Vec<ExpansionRow> {
        cands
            .iter()
            .map(|c| {
                let g = engine.group(c.group_id);
                ExpansionRow {
                    group_id: c.group_id,
                    display_name: g.map(|g| g.display_name.clone()).unwrap_or_default(),
                    certainty: c.certainty,
                    is_seed: c.is_seed,
                    validated: c.validated,
                    is_multi: g.is_some_and(|g| g.is_multi()),
                    features: c.features.values.to_vec(),
                }
            })
            .collect()
    }

    fn expand_config(engine: &Engine, k: Option<usize>, threshold: Option<f64>) -> ExpandConfig {
        let mut cfg = engine.config().expand.clone();
        if let Some(k) = k {
            cfg.k = k;
        }
        if threshold.is_some() {
            cfg.threshold = threshold;
        }
        cfg
    }

    /// Expands a seed set; with a category name the result starts a fresh
    /// working category.
    pub fn expand(&self, req: &ExpandRequest) -> ServiceResult<ExpandResponse> {
        self.with_engine(|engine| {
            let seeds = SeedSet::new(req.seed_gids.clone())?;
            let cfg = Self::expand_config(engine, req.k, req.threshold);
            let out = engine.expand(&seeds, &cfg)?;
            if let Some(name) = &req.category_name {
                let cat = Category::new(name.clone(), req.seed_gids.clone(), out.clone())?;
                self.working.save(&cat, true)?;
            }
            Ok(ExpandResponse {
                category_name: req.category_name.clone(),
                expanded: self.rows(engine, &out),
            })
        })
    }

    fn working_category(&self, name: &str) -> ServiceResult<Category> {
        match self.working.load(name) {
            Ok(c) => Ok(c),
            Err(Error::NotFound(_)) => Ok(self.saved.load(name)?),
            Err(e) => Err(e.into()),
        }
    }

    fn view(&self, engine: &Engine, cat: &Category) -> CategoryView {
        CategoryView {
            name: cat.name.clone(),
            seeds: cat.seeds.clone(),
            expanded: self.rows(engine, &cat.expanded),
            exclusions: cat.exclusions.clone(),
            history_length: cat.history.len(),
            history: cat.history.clone(),
        }
    }

    pub fn validate(&self, name: &str, gid: GroupId, completed: bool) -> ServiceResult<CategoryView> {
        self.with_engine(|engine| {
            let mut cat = self.working_category(name)?;
            cat.validate(gid, completed)?;
            self.working.save(&cat, true)?;
            Ok(self.view(engine, &cat))
        })
    }

    pub fn reexpand(
        &self,
        name: &str,
        validated_only: bool,
        k: Option<usize>,
        threshold: Option<f64>,
    ) -> ServiceResult<CategoryView> {
        self.with_engine(|engine| {
            let mut cat = self.working_category(name)?;
            let cfg = Self::expand_config(engine, k, threshold);
            engine.reexpand(&mut cat, &cfg, validated_only)?;
            self.working.save(&cat, true)?;
            Ok(self.view(engine, &cat))
        })
    }

    /// Current state of a category: the working copy if any, else the saved one.
    pub fn category(&self, name: &str) -> ServiceResult<CategoryView> {
        self.with_engine(|engine| Ok(self.view(engine, &self.working_category(name)?)))
    }

    /// Persists the working copy of a category.
    pub fn save_category(&self, name: &str, overwrite: bool) -> ServiceResult<CategoryView> {
        self.with_engine(|engine| {
            let cat: Category = self.working.load(name)?;
            self.saved.save(&cat, overwrite)?;
            Ok(self.view(engine, &cat))
        })
    }

    /// Loads a saved category, replacing its working copy.
    pub fn load_category(&self, name: &str) -> ServiceResult<CategoryView> {
        self.with_engine(|engine| {
            let cat: Category = self.saved.load(name)?;
            self.working.save(&cat, true)?;
            Ok(self.view(engine, &cat))
        })
    }

    /// Saved category names; they double as the list offered for naming.
    pub fn category_names(&self) -> ServiceResult<Vec<String>> {
        Ok(self.saved.names()?)
    }

    pub fn evaluate(&self, gold: &[GoldClassSpec], cfg: &EvalConfig) -> ServiceResult<EvalReport> {
        self.with_engine(|engine| {
            let resolved = resolve_gold(gold, engine.term_index());
            if resolved.is_empty() {
                return Err(ServiceError::Core(Error::InsufficientData(
                    "no gold class has known members".into(),
                )));
            }
            Ok(map_at_n(engine, &resolved, cfg)?)
        })
    }
}

/// All projects under a store directory.
#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    defaults: TrainConfig,
    projects: Mutex<BTreeMap<String, Arc<Project>>>,
    create_lock: Mutex<()>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> ServiceResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> ServiceResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?)
}

fn io_err(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>, defaults: TrainConfig) -> ServiceResult<Self> {
        let root = root.into();
        let projects = root.join("projects");
        fs::create_dir_all(&projects).map_err(|e| io_err(&projects, e))?;
        defaults.validate()?;
        Ok(Workspace {
            root,
            defaults,
            projects: Mutex::new(BTreeMap::new()),
            create_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn defaults(&self) -> &TrainConfig {
        &self.defaults
    }

    fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join("projects").join(id)
    }

    /// Loads a corpus and registers it as a new project.
    pub fn create_project(&self, path: &Path, format: Option<CorpusFormat>) -> ServiceResult<Arc<Project>> {
        if !path.exists() {
            return Err(ServiceError::NotFound(format!("corpus path {}", path.display())));
        }
        let format = format.unwrap_or_else(|| CorpusFormat::detect(path));
        let corpus = match format {
            CorpusFormat::Conllu => load_conllu(path)?,
            CorpusFormat::Text => load_plain_text(path, &IngestConfig::default())?,
        };
        let _guard = self.create_lock.lock().unwrap_or_else(|e| e.into_inner());
        let id = self.next_id()?;
        let dir = self.project_dir(&id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let meta = ProjectMeta {
            project_id: id.clone(),
            corpus_path: fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()),
            format,
            stats: corpus.stats(),
        };
        corpus.save_cache(&dir.join("corpus.cache"))?;
        write_json(&dir.join("project.json"), &meta)?;
        info!(
            "project {id}: {} sentences from {}",
            meta.stats.sentences,
            path.display()
        );
        let project = Arc::new(Project {
            saved: CategoryStore::open(dir.join("categories"))?,
            working: CategoryStore::open(dir.join("working"))?,
            meta,
            dir,
            corpus,
            engine: RwLock::new(None),
            status: Mutex::new(ProjectStatus::all(ModelState::Absent)),
        });
        self.projects
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, project.clone());
        Ok(project)
    }

    fn next_id(&self) -> ServiceResult<String> {
        let dir = self.root.join("projects");
        let mut max = 0u64;
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(n) = name.strip_prefix('p').and_then(|n| n.parse::<u64>().ok()) {
                max = max.max(n);
            }
        }
        Ok(format!("p{}", max + 1))
    }

    /// A project, loading it from disk on first use.
    pub fn project(&self, id: &str) -> ServiceResult<Arc<Project>> {
        if let Some(p) = self.projects.lock().unwrap_or_else(|e| e.into_inner()).get(id) {
            return Ok(p.clone());
        }
        let valid = id.starts_with('p') && id.len() > 1 && id[1..].bytes().all(|b| b.is_ascii_digit());
        let dir = self.project_dir(id);
        if !valid || !dir.join("project.json").exists() {
            return Err(ServiceError::NotFound(format!("project {id}")));
        }
        let meta: ProjectMeta = read_json(&dir.join("project.json"))?;
        let corpus = Corpus::load_cache(&dir.join("corpus.cache"))?;
        let model = dir.join("model");
        let (engine, status) = if model.join("config.json").exists() {
            (Some(Engine::load(&model)?), ProjectStatus::all(ModelState::Ready))
        } else {
            (None, ProjectStatus::all(ModelState::Absent))
        };
        let project = Arc::new(Project {
            saved: CategoryStore::open(dir.join("categories"))?,
            working: CategoryStore::open(dir.join("working"))?,
            meta,
            dir,
            corpus,
            engine: RwLock::new(engine),
            status: Mutex::new(status),
        });
        let mut map = self.projects.lock().unwrap_or_else(|e| e.into_inner());
        Ok(map.entry(id.to_string()).or_insert(project).clone())
    }

    /// Ids of every project on disk, oldest first.
    pub fn project_ids(&self) -> ServiceResult<Vec<String>> {
        let dir = self.root.join("projects");
        let mut ids: Vec<(u64, String)> = fs::read_dir(&dir)
            .map_err(|e| io_err(&dir, e))?
            .flatten()
            .filter(|e| e.path().join("project.json").exists())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_prefix('p')?.parse::<u64>().ok().map(|n| (n, name))
            })
            .collect();
        ids.sort();
        Ok(ids.into_iter().map(|(_, n)| n).collect())
    }
}

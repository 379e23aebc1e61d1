use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use setexpand::evaluation::{generate_synthetic_corpus, load_gold, write_synthetic_corpus, EvalConfig, SyntheticSpec};
use setexpand_service::config::{apply_overrides, resolve_defaults, store_dir, STORE_ENV};
use setexpand_service::workspace::{CategoryView, ExpandRequest, ExpansionRow, Project, ServiceResult};
use setexpand_service::{router, AppState, CorpusFormat, ServiceError, Workspace};

#[derive(Parser)]
#[command(name = "setexpand", version, about = "Corpus-based term set expansion")]
struct Cli {
    /// Directory holding projects.
    #[arg(long, global = true, env = STORE_ENV)]
    store: Option<PathBuf>,
    /// TOML file with default hyperparameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Register a corpus file or directory as a new project.
    Ingest {
        path: PathBuf,
        /// conllu or text; detected from the extension when omitted.
        #[arg(long)]
        format: Option<CorpusFormat>,
    },
    /// List projects.
    Projects,
    /// Train every model of a project.
    Train {
        project: String,
        /// Gold classes (`name<TAB>member<TAB>...`) used to train the classifier.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// JSON object of hyperparameter overrides, e.g. '{"embedding":{"epochs":3}}'.
        #[arg(long)]
        set: Option<String>,
    },
    /// Browse the term table.
    Terms {
        project: String,
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 50)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Show sentences mentioning a term.
    Contexts {
        project: String,
        term: String,
        #[arg(long, default_value_t = 20)]
        max: usize,
    },
    /// Drop surface forms from a term group.
    Exclude {
        project: String,
        term: String,
        #[arg(required = true)]
        members: Vec<String>,
        #[arg(long)]
        category: Option<String>,
    },
    /// Expand a seed set of terms or group ids.
    Expand {
        project: String,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<String>,
        /// Keep the result as a working category under this name.
        #[arg(long)]
        category: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Mark a term of a category as a confirmed member.
    Validate {
        project: String,
        category: String,
        term: String,
        /// Record the term as wrong instead.
        #[arg(long)]
        reject: bool,
    },
    /// Expand a category again from its seeds and validated terms.
    Reexpand {
        project: String,
        category: String,
        /// Also use unvalidated terms above the threshold.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Save the working copy of a category.
    Save {
        project: String,
        category: String,
        #[arg(long)]
        overwrite: bool,
    },
    /// Restore a saved category into the working copy.
    Load { project: String, category: String },
    /// List saved categories.
    Categories { project: String },
    /// Mean average precision over sampled seed sets.
    Eval {
        project: String,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 20)]
        queries: usize,
        #[arg(long, default_value_t = 2)]
        min_seeds: usize,
        #[arg(long, default_value_t = 10)]
        max_seeds: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 50])]
        cutoffs: Vec<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Write a synthetic CoNLL-U corpus with its gold classes.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        members: usize,
        #[arg(long, default_value_t = 6000)]
        sentences: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn print_rows(rows: &[ExpansionRow]) {
    println!("rank\tgid\tcertainty\tflag\tterm");
    for (i, r) in rows.iter().enumerate() {
        let flag = match (r.is_seed, r.validated) {
            (true, true) => "validated",
            (true, false) => "seed",
            _ => "",
        };
        println!(
            "{}\t{}\t{:.4}\t{}\t{}",
            i + 1,
            r.group_id,
            r.certainty,
            flag,
            r.display_name
        );
    }
}

fn print_category(v: &CategoryView, json: bool) {
    if json {
        return print_json(v);
    }
    println!("{} (history {})", v.name, v.history_length);
    print_rows(&v.expanded);
}

fn run(cli: Cli) -> ServiceResult<()> {
    let store = store_dir(cli.store);
    let defaults = resolve_defaults(cli.config.as_deref(), &store)?;
    let ws = Workspace::open(&store, defaults)?;
    let json = cli.json;
    let open = |id: &str| -> ServiceResult<Arc<Project>> { ws.project(id) };

    match cli.cmd {
        Cmd::Ingest { path, format } => {
            let p = ws.create_project(&path, format)?;
            if json {
                print_json(&p.info());
            } else {
                let s = &p.meta().stats;
                println!(
                    "{}\t{} documents\t{} sentences\t{} tokens",
                    p.id(),
                    s.documents,
                    s.sentences,
                    s.tokens
                );
            }
        }
        Cmd::Projects => {
            let infos = ws
                .project_ids()?
                .iter()
                .map(|id| Ok(ws.project(id)?.info()))
                .collect::<ServiceResult<Vec<_>>>()?;
            if json {
                print_json(&infos);
            } else {
                for i in infos {
                    let state = if i.status.ready() { "ready" } else { "untrained" };
                    println!("{}\t{}\t{}", i.meta.project_id, state, i.meta.corpus_path.display());
                }
            }
        }
        Cmd::Train { project, gold, set } => {
            let p = open(&project)?;
            let overrides = match set {
                Some(s) => serde_json::from_str(&s).map_err(|e| ServiceError::BadRequest(format!("--set: {e}")))?,
                None => serde_json::Value::Null,
            };
            let cfg = apply_overrides(ws.defaults(), &overrides)?;
            let gold = gold.map(|g| load_gold(&g)).transpose()?;
            p.begin_training()?;
            let t0 = Instant::now();
            p.train(&cfg, gold.as_deref(), &|stage, done| {
                if done {
                    eprintln!("[{:>7.1}s] {stage} done", t0.elapsed().as_secs_f64());
                } else {
                    eprintln!("[{:>7.1}s] {stage} ...", t0.elapsed().as_secs_f64());
                }
            })?;
            println!("{} trained in {:.1}s", p.id(), t0.elapsed().as_secs_f64());
        }
        Cmd::Terms {
            project,
            filter,
            limit,
            offset,
        } => {
            let rows = open(&project)?.terms(filter.as_deref(), limit, offset)?;
            if json {
                print_json(&rows);
            } else {
                println!("gid\ttfidf\tfreq\tterm\tmembers");
                for r in rows {
                    println!(
                        "{}\t{:.3}\t{}\t{}\t{}",
                        r.group_id,
                        r.tfidf,
                        r.frequency,
                        r.display_name,
                        r.members.join(" | ")
                    );
                }
            }
        }
        Cmd::Contexts { project, term, max } => {
            let p = open(&project)?;
            let snippets = p.contexts(p.resolve_term(&term)?, max)?;
            if json {
                print_json(&snippets);
            } else {
                for s in snippets {
                    println!("{}:{}\t{}", s.doc_id, s.sent_index, s.text);
                }
            }
        }
        Cmd::Exclude {
            project,
            term,
            members,
            category,
        } => {
            let p = open(&project)?;
            let row = p.exclude(p.resolve_term(&term)?, &members, category.as_deref())?;
            if json {
                print_json(&row);
            } else {
                println!(
                    "{}\t{}\tkept: {}\texcluded: {}",
                    row.group_id,
                    row.display_name,
                    row.members.join(" | "),
                    row.excluded.join(" | ")
                );
            }
        }
        Cmd::Expand {
            project,
            seeds,
            category,
            k,
            threshold,
        } => {
            let p = open(&project)?;
            let seed_gids = seeds
                .iter()
                .map(|s| p.resolve_term(s.trim()))
                .collect::<ServiceResult<_>>()?;
            let out = p.expand(&ExpandRequest {
                seed_gids,
                category_name: category,
                k,
                threshold,
            })?;
            if json {
                print_json(&out);
            } else {
                print_rows(&out.expanded);
            }
        }
        Cmd::Validate {
            project,
            category,
            term,
            reject,
        } => {
            let p = open(&project)?;
            let view = p.validate(&category, p.resolve_term(&term)?, !reject)?;
            print_category(&view, json);
        }
        Cmd::Reexpand {
            project,
            category,
            all,
            k,
            threshold,
        } => {
            let view = open(&project)?.reexpand(&category, !all, k, threshold)?;
            print_category(&view, json);
        }
        Cmd::Save {
            project,
            category,
            overwrite,
        } => {
            let view = open(&project)?.save_category(&category, overwrite)?;
            println!("saved {}", view.name);
        }
        Cmd::Load { project, category } => {
            let view = open(&project)?.load_category(&category)?;
            print_category(&view, json);
        }
        Cmd::Categories { project } => {
            let names = open(&project)?.category_names()?;
            if json {
                print_json(&names);
            } else {
                names.iter().for_each(|n| println!("{n}"));
            }
        }
        Cmd::Eval {
            project,
            gold,
            queries,
            min_seeds,
            max_seeds,
            cutoffs,
            seed,
        } => {
            let cfg = EvalConfig {
                queries_per_class: queries,
                min_seeds,
                max_seeds,
                cutoffs,
                seed,
            };
            let report = open(&project)?.evaluate(&load_gold(&gold)?, &cfg)?;
            if json {
                print_json(&report);
            } else {
                print!("{}", report.to_text());
            }
        }
        Cmd::Synth {
            out,
            classes,
            members,
            sentences,
            seed,
        } => {
            let corpus = generate_synthetic_corpus(&SyntheticSpec::uniform(classes, members, sentences, seed)?)?;
            write_synthetic_corpus(&out, &corpus)?;
            println!("{}", out.join("corpus.conllu").display());
            println!("{}", out.join("gold.tsv").display());
        }
        Cmd::Serve { addr } => {
            let rt = tokio::runtime::Runtime::new()
                .map_err(|e| ServiceError::BadRequest(format!("cannot start runtime: {e}")))?;
            rt.block_on(serve(ws, addr))?;
        }
    }
    std::io::stdout().flush().ok();
    Ok(())
}

async fn serve(ws: Workspace, addr: SocketAddr) -> ServiceResult<()> {
    let app = router(AppState::new(ws));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::BadRequest(format!("bind {addr}: {e}")))?;
    log::info!("listening on {addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await
        .map_err(|e| ServiceError::BadRequest(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

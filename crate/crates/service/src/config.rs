//! Store location and default hyperparameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use setexpand::pipeline::TrainConfig;
use setexpand::Error;

/// Environment variable naming the store directory.
pub const STORE_ENV: &str = "SETEXPAND_STORE";
/// Environment variable naming the TOML file of default hyperparameters.
pub const CONFIG_ENV: &str = "SETEXPAND_CONFIG";
pub const DEFAULT_STORE: &str = "setexpand-store";

/// Explicit path, else `$SETEXPAND_STORE`, else `./setexpand-store`.
pub fn store_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(STORE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE))
}

/// Reads a TOML file shaped like [`TrainConfig`]; missing keys keep their
/// defaults.
pub fn load_defaults(path: &Path) -> Result<TrainConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let cfg: TrainConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Explicit file, else `$SETEXPAND_CONFIG`, else `config.toml` in the store
/// if present, else built-in defaults.
pub fn resolve_defaults(explicit: Option<&Path>, store: &Path) -> Result<TrainConfig, Error> {
    if let Some(p) = explicit {
        return load_defaults(p);
    }
    if let Some(p) = std::env::var_os(CONFIG_ENV) {
        return load_defaults(Path::new(&p));
    }
    let in_store = store.join("config.toml");
    if in_store.exists() {
        return load_defaults(&in_store);
    }
    Ok(TrainConfig::default())
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Applies a partial JSON object of overrides, e.g.
/// `{"embedding": {"epochs": 3}}`. Unknown keys are rejected.
pub fn apply_overrides(base: &TrainConfig, overrides: &Value) -> Result<TrainConfig, Error> {
    if overrides.is_null() {
        return Ok(base.clone());
    }
    if !overrides.is_object() {
        return Err(Error::Config("hyperparameter overrides must be an object".into()));
    }
    let mut merged = serde_json::to_value(base).map_err(|e| Error::Config(e.to_string()))?;
    let shape = merged.clone();
    check_keys(&shape, overrides, "")?;
    merge(&mut merged, overrides);
    let cfg: TrainConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_keys(shape: &Value, over: &Value, prefix: &str) -> Result<(), Error> {
    let (Value::Object(s), Value::Object(o)) = (shape, over) else {
        return Ok(());
    };
    for (k, v) in o {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match s.get(k) {
            Some(inner) => check_keys(inner, v, &path)?,
            None => return Err(Error::Config(format!("unknown hyperparameter {path:?}"))),
        }
    }
    Ok(())
}

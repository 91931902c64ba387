//! Experiment configuration: a flat JSON document with dotted keys (e.g.
//! `"train.lr": 0.001`), merged with repeatable `--set key=value` overrides,
//! then strictly deserialized (unknown keys are rejected).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use pagerec_core::corpus::{PreprocessConfig, SplitStrategy};
use pagerec_core::evalharness::EvalProtocol;
use pagerec_core::seqmodel::{BackendConfig, ReprMode, ReprStrategy, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub out_dir: String,
    pub seeds: Vec<u64>,
    pub dataset: DatasetCfg,
    pub preprocess: PreprocessCfg,
    pub split: SplitCfg,
    pub strategy: StrategyCfg,
    pub train: TrainCfg,
    pub eval: EvalCfg,
    pub hyptrails: HyptrailsCfg,
    pub noise: NoiseCfg,
    pub analyze: AnalyzeCfg,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "exp".into(),
            out_dir: "runs".into(),
            seeds: vec![212, 6, 10, 404, 42],
            dataset: DatasetCfg::default(),
            preprocess: PreprocessCfg::default(),
            split: SplitCfg::default(),
            strategy: StrategyCfg::default(),
            train: TrainCfg::default(),
            eval: EvalCfg::default(),
            hyptrails: HyptrailsCfg::default(),
            noise: NoiseCfg::default(),
            analyze: AnalyzeCfg::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetCfg {
    /// "jsonl" (session log) or "synth" (generated from a ratings file).
    pub kind: String,
    pub path: String,
    pub dense_dim: Option<usize>,
    pub ratings: String,
    pub metadata: String,
    /// "prev" | "group" | "random"
    pub variant: String,
    pub shuffle_ratio: f64,
    /// Drop all non-item interactions (items-only baselines).
    pub items_only: bool,
}

impl Default for DatasetCfg {
    fn default() -> Self {
        Self {
            kind: "jsonl".into(),
            path: String::new(),
            dense_dim: None,
            ratings: String::new(),
            metadata: String::new(),
            variant: "prev".into(),
            shuffle_ratio: 0.0,
            items_only: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessCfg {
    pub enabled: bool,
    pub dedupe: bool,
    pub min_occurrence: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub end_with_item: bool,
}

impl Default for PreprocessCfg {
    fn default() -> Self {
        Self {
            enabled: true,
            dedupe: true,
            min_occurrence: 5,
            min_len: 2,
            max_len: 200,
            end_with_item: true,
        }
    }
}

impl PreprocessCfg {
    pub fn to_core(&self) -> PreprocessConfig {
        PreprocessConfig {
            dedupe: self.dedupe,
            min_occurrence: self.min_occurrence,
            min_len: self.min_len,
            max_len: self.max_len,
            end_with_item: self.end_with_item,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitCfg {
    /// "by_user" | "by_time"
    pub strategy: String,
    pub train: f64,
    pub valid: f64,
}

impl Default for SplitCfg {
    fn default() -> Self {
        Self { strategy: "by_user".into(), train: 0.8, valid: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyCfg {
    /// "upid" | "cpid" | "pe"
    pub mode: String,
    pub pe_attrs: bool,
    pub pe_dense: bool,
    pub item_attrs: bool,
}

impl Default for StrategyCfg {
    fn default() -> Self {
        Self { mode: "cpid".into(), pe_attrs: true, pe_dense: false, item_attrs: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCfg {
    /// "self_attention" | "gru"
    pub backend: String,
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    pub inner: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub non_item_targets: bool,
}

impl Default for TrainCfg {
    fn default() -> Self {
        Self {
            backend: "self_attention".into(),
            d: 64,
            heads: 2,
            layers: 2,
            inner: 256,
            dropout: 0.2,
            max_len: 200,
            lr: 1e-3,
            batch_size: 64,
            epochs: 100,
            patience: 10,
            non_item_targets: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalCfg {
    /// "auto" picks per split strategy: last_item for by_user,
    /// all_item_targets for by_time.
    pub protocol: String,
    pub ks: Vec<usize>,
    /// "test" | "valid"
    pub split: String,
    /// Checkpoint path for `eval`.
    pub checkpoint: String,
    /// Evaluate the attribute-conditioned popularity baseline instead of a
    /// checkpoint.
    pub genre_pop: bool,
}

impl Default for EvalCfg {
    fn default() -> Self {
        Self {
            protocol: "auto".into(),
            ks: vec![1, 5, 10],
            split: "test".into(),
            checkpoint: String::new(),
            genre_pop: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyptrailsCfg {
    pub k_values: Vec<f64>,
}

impl Default for HyptrailsCfg {
    fn default() -> Self {
        Self { k_values: pagerec_core::hyptrails::DEFAULT_K_SWEEP.to_vec() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseCfg {
    pub ratios: Vec<f64>,
}

impl Default for NoiseCfg {
    fn default() -> Self {
        Self { ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeCfg {
    pub checkpoints: Vec<String>,
    pub labels: Vec<String>,
    pub random_baseline: bool,
    pub random_seed: u64,
    pub export: bool,
}

impl Default for AnalyzeCfg {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            labels: Vec::new(),
            random_baseline: true,
            random_seed: 1,
            export: false,
        }
    }
}

/// Loads the flat config file (if any), applies `--set` overrides, and
/// validates. Returns the resolved config plus its canonical JSON echo.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig, String> {
    let mut flat: BTreeMap<String, Value> = BTreeMap::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| format!("{}: invalid JSON: {e}", path.display()))?;
        let Value::Object(map) = doc else {
            return Err(format!("{}: top level must be a JSON object", path.display()));
        };
        for (k, v) in map {
            flat.insert(k, v);
        }
    }
    for kv in overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| format!("--set needs key=value, got `{kv}`"))?;
        // JSON literal when it parses, bare string otherwise
        let value = serde_json::from_str::<Value>(value)
            .unwrap_or_else(|_| Value::String(value.to_string()));
        flat.insert(key.to_string(), value);
    }

    let nested = unflatten(&flat)?;
    let cfg: ExperimentConfig =
        serde_json::from_value(nested).map_err(|e| format!("invalid config: {e}"))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Result<Value, String> {
    let mut root = serde_json::Map::new();
    for (key, value) in flat {
        let mut cursor = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            let entry = cursor
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(serde_json::Map::new()));
            cursor = entry
                .as_object_mut()
                .ok_or_else(|| format!("key `{key}` conflicts with a scalar value"))?;
        }
        cursor.insert(parts[parts.len() - 1].to_string(), value.clone());
    }
    Ok(Value::Object(root))
}

fn validate(cfg: &ExperimentConfig) -> Result<(), String> {
    match cfg.dataset.kind.as_str() {
        "jsonl" | "synth" => {}
        other => return Err(format!("dataset.kind must be jsonl or synth, got `{other}`")),
    }
    match cfg.dataset.variant.as_str() {
        "prev" | "group" | "random" => {}
        other => {
            return Err(format!("dataset.variant must be prev, group or random, got `{other}`"))
        }
    }
    if !(0.0..=1.0).contains(&cfg.dataset.shuffle_ratio) {
        return Err("dataset.shuffle_ratio must be in [0, 1]".into());
    }
    match cfg.split.strategy.as_str() {
        "by_user" | "by_time" => {}
        other => return Err(format!("split.strategy must be by_user or by_time, got `{other}`")),
    }
    if !(cfg.split.train > 0.0 && cfg.split.valid > 0.0 && cfg.split.train + cfg.split.valid < 1.0)
    {
        return Err("split fractions must be positive and sum below 1".into());
    }
    match cfg.strategy.mode.as_str() {
        "upid" | "cpid" | "pe" => {}
        other => return Err(format!("strategy.mode must be upid, cpid or pe, got `{other}`")),
    }
    if cfg.strategy.mode == "pe" && !cfg.strategy.pe_attrs && !cfg.strategy.pe_dense {
        return Err("strategy.mode pe needs pe_attrs and/or pe_dense".into());
    }
    match cfg.train.backend.as_str() {
        "self_attention" | "gru" => {}
        other => {
            return Err(format!("train.backend must be self_attention or gru, got `{other}`"))
        }
    }
    if cfg.train.d == 0 || cfg.train.d % cfg.train.heads != 0 {
        return Err("train.d must be a positive multiple of train.heads".into());
    }
    if cfg.train.max_len < 2 {
        return Err("train.max_len must be at least 2".into());
    }
    if cfg.preprocess.min_occurrence < 1 || cfg.preprocess.min_len < 1 {
        return Err("preprocess.min_occurrence and min_len must be at least 1".into());
    }
    if cfg.preprocess.max_len < cfg.preprocess.min_len {
        return Err("preprocess.max_len must be >= preprocess.min_len".into());
    }
    match cfg.eval.protocol.as_str() {
        "auto" | "last_item" | "all_item_targets" => {}
        other => return Err(format!(
            "eval.protocol must be auto, last_item or all_item_targets, got `{other}`"
        )),
    }
    match cfg.eval.split.as_str() {
        "test" | "valid" => {}
        other => return Err(format!("eval.split must be test or valid, got `{other}`")),
    }
    if cfg.eval.ks.is_empty() || cfg.eval.ks.iter().any(|&k| k == 0) {
        return Err("eval.ks must be non-empty positive integers".into());
    }
    if cfg.hyptrails.k_values.iter().any(|&k| k < 0.0) {
        return Err("hyptrails.k_values must be non-negative".into());
    }
    if cfg.noise.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err("noise.ratios must lie in [0, 1]".into());
    }
    if cfg.seeds.is_empty() {
        return Err("seeds must not be empty".into());
    }
    if !cfg.analyze.labels.is_empty()
        && cfg.analyze.labels.len() != cfg.analyze.checkpoints.len()
    {
        return Err("analyze.labels must match analyze.checkpoints in length".into());
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn split_strategy(&self) -> SplitStrategy {
        match self.split.strategy.as_str() {
            "by_time" => SplitStrategy::ByTime {
                frac_train: self.split.train,
                frac_valid: self.split.valid,
            },
            _ => SplitStrategy::ByUser {
                frac_train: self.split.train,
                frac_valid: self.split.valid,
            },
        }
    }

    pub fn repr_strategy(&self) -> ReprStrategy {
        let mode = match self.strategy.mode.as_str() {
            "upid" => ReprMode::Upid,
            "pe" => ReprMode::Pe,
            _ => ReprMode::Cpid,
        };
        ReprStrategy {
            mode,
            attr_multihot: mode == ReprMode::Pe && self.strategy.pe_attrs,
            dense_vec: mode == ReprMode::Pe && self.strategy.pe_dense,
            include_item_attrs: self.strategy.item_attrs,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let backend = match self.train.backend.as_str() {
            "gru" => BackendConfig::Gru { layers: self.train.layers },
            _ => BackendConfig::SelfAttention {
                layers: self.train.layers,
                heads: self.train.heads,
                inner: self.train.inner,
                dropout: self.train.dropout,
            },
        };
        TrainConfig {
            backend,
            d: self.train.d,
            max_len: self.train.max_len,
            lr: self.train.lr,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed,
            train_on_non_item_targets: self.train.non_item_targets,
            early_stopping_patience: self.train.patience,
        }
    }

    pub fn eval_protocol(&self) -> EvalProtocol {
        match self.eval.protocol.as_str() {
            "last_item" => EvalProtocol::LastItem,
            "all_item_targets" => EvalProtocol::AllItemTargets,
            // auto: session-final targets for user splits, every item target
            // for time splits
            _ => match self.split.strategy.as_str() {
                "by_time" => EvalProtocol::AllItemTargets,
                _ => EvalProtocol::LastItem,
            },
        }
    }

    /// Canonical JSON echo embedded in artifacts.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_cfg(json: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "{json}").unwrap();
        f
    }

    #[test]
    fn defaults_apply_and_dotted_keys_nest() {
        let f = write_cfg(r#"{"train.lr": 0.01, "dataset.kind": "synth", "dataset.ratings": "r.csv", "dataset.metadata": "m.csv"}"#);
        let cfg = load_config(Some(f.path()), &[]).unwrap();
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.dataset.kind, "synth");
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.seeds, vec![212, 6, 10, 404, 42]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write_cfg(r#"{"train.learning_rate": 0.01}"#);
        let err = load_config(Some(f.path()), &[]).unwrap_err();
        assert!(err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn overrides_win_and_parse_json() {
        let f = write_cfg(r#"{"train.lr": 0.01}"#);
        let cfg = load_config(
            Some(f.path()),
            &["train.lr=0.5".into(), "experiment=abc".into(), "seeds=[1,2]".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.lr, 0.5);
        assert_eq!(cfg.experiment, "abc");
        assert_eq!(cfg.seeds, vec![1, 2]);
    }

    #[test]
    fn validation_catches_bad_values() {
        for (kv, needle) in [
            ("split.train=0.9", "sum below 1"),
            ("strategy.mode=foo", "strategy.mode"),
            ("train.d=63", "multiple"),
            ("dataset.shuffle_ratio=1.5", "shuffle_ratio"),
            ("eval.ks=[]", "eval.ks"),
        ] {
            let err = load_config(None, &[kv.to_string()]).unwrap_err();
            assert!(err.contains(needle), "{kv}: {err}");
        }
    }

    #[test]
    fn echo_is_deterministic() {
        let cfg = load_config(None, &[]).unwrap();
        let a = serde_json::to_string(&cfg.echo()).unwrap();
        let b = serde_json::to_string(&cfg.echo()).unwrap();
        assert_eq!(a, b);
    }
}

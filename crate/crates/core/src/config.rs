//! Flat run/train configuration files.
//!
//! Either a JSON object or `key = value` lines (`#` starts a comment). Keys
//! are the field names of [`RunConfig`] and [`TrainConfig`] plus the LMNN
//! settings; anything else is an error.

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::engine::TrainConfig;
use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::harness::{Method, RunConfig};
use crate::stats::DistributionSpec;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum MethodList {
    List(Vec<String>),
    Joined(String),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    methods: Option<MethodList>,
    pub reps: Option<usize>,
    pub n: Option<usize>,
    pub calibration_reps: Option<usize>,
    pub master_seed: Option<u64>,
    pub alpha: Option<f64>,
    pub h0_pool: Option<usize>,
    pub h0_keep_fraction: Option<f64>,
    pub h1_count: Option<usize>,
    pub h1_dist: Option<String>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub push_weight: Option<f64>,
    pub max_iters: Option<usize>,
    pub step_size: Option<f64>,
    pub tolerance: Option<f64>,
    pub fresh_null_reps: Option<usize>,
    pub extractor: Option<String>,
}

const STRING_KEYS: [&str; 2] = ["h1_dist", "extractor"];
const NUMERIC_KEYS: [&str; 15] = [
    "reps",
    "n",
    "calibration_reps",
    "master_seed",
    "alpha",
    "h0_pool",
    "h0_keep_fraction",
    "h1_count",
    "d",
    "k",
    "push_weight",
    "max_iters",
    "step_size",
    "tolerance",
    "fresh_null_reps",
];

fn kv_to_json(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Data {
            line: line_no,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let json = if key == "methods" || STRING_KEYS.contains(&key) {
            Value::String(value.to_string())
        } else if NUMERIC_KEYS.contains(&key) {
            let parsed = value
                .parse::<u64>()
                .map(Value::from)
                .ok()
                .or_else(|| value.parse::<f64>().ok().and_then(serde_json::Number::from_f64).map(Value::Number));
            parsed.ok_or_else(|| Error::Data {
                line: line_no,
                message: format!("`{key}`: malformed number `{value}`"),
            })?
        } else {
            return Err(Error::Config(format!("unknown key `{key}` on line {line_no}")));
        };
        if map.insert(key.to_string(), json).is_some() {
            return Err(Error::Config(format!("duplicate key `{key}` on line {line_no}")));
        }
    }
    Ok(map)
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str::<Value>(text).map_err(|e| Error::Data {
                line: e.line(),
                message: e.to_string(),
            })?
        } else {
            Value::Object(kv_to_json(text)?)
        };
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{}: {}", path, e.into_inner()))
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn methods(&self) -> Result<Option<Vec<Method>>> {
        let names: Vec<String> = match &self.methods {
            None => return Ok(None),
            Some(MethodList::List(v)) => v.clone(),
            Some(MethodList::Joined(s)) => s.split(',').map(str::to_string).collect(),
        };
        names
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse())
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Overlays the file on `base`.
    pub fn apply_train(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut cfg = base;
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.n, self.n);
        set(&mut cfg.h0_pool, self.h0_pool);
        set(&mut cfg.h1_count, self.h1_count);
        set(&mut cfg.d, self.d);
        set(&mut cfg.lmnn.k, self.k);
        set(&mut cfg.lmnn.max_iters, self.max_iters);
        let setf = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        setf(&mut cfg.h0_keep_fraction, self.h0_keep_fraction);
        setf(&mut cfg.alpha, self.alpha);
        setf(&mut cfg.lmnn.push_weight, self.push_weight);
        setf(&mut cfg.lmnn.step_size, self.step_size);
        setf(&mut cfg.lmnn.tolerance, self.tolerance);
        if let Some(seed) = self.master_seed {
            cfg.master_seed = seed;
        }
        if self.fresh_null_reps.is_some() {
            cfg.fresh_null_reps = self.fresh_null_reps;
        }
        if let Some(label) = &self.h1_dist {
            cfg.h1_spec = DistributionSpec::parse_label(label)?;
        }
        if let Some(name) = &self.extractor {
            cfg.extractor = name.parse::<Extractor>().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        self.apply_train(TrainConfig::default())
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            train: self.apply_train(TrainConfig::default())?,
            ..RunConfig::default()
        };
        if let Some(methods) = self.methods()? {
            cfg.methods = methods;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.calibration_reps {
            cfg.calibration_reps = v;
        }
        cfg.n = cfg.train.n;
        cfg.alpha = cfg.train.alpha;
        cfg.master_seed = cfg.train.master_seed;
        Ok(cfg)
    }
}

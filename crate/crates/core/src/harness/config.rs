//! Experiment configuration: a flat `section.key = value` text format with
//! bracketed lists, strict key validation, and CLI-style overrides.

use crate::error::{Error, Result};
use crate::optim::ProjectionSpec;
use crate::problems::{ProblemKind, ProblemSpec};
use crate::sched::{ScheduleKind, ScheduleSpec};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Sgdm,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sgd" => OptimizerKind::Sgd,
            "sgdm" => OptimizerKind::Sgdm,
            "adam" => OptimizerKind::Adam,
            other => return Err(Error::Config(format!("unknown optimizer kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum: f64,
    /// Step-decay with Adam-state restart; the run's learning rate is the
    /// initial stepsize of the plan.
    pub decay_alpha_star: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifySpec {
    /// Instrument every step (not just evaluation points).
    pub enabled: bool,
    pub hp: bool,
    pub eta: bool,
    pub recursion: bool,
    pub pg: bool,
    pub delta: f64,
    pub reps: u32,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            enabled: false,
            hp: false,
            eta: false,
            recursion: false,
            pg: false,
            delta: 0.1,
            reps: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub batch: usize,
    pub drift: ScheduleSpec,
    pub noise: ScheduleSpec,
    pub horizon: u64,
    pub eval_every: u64,
    pub seeds: Vec<u64>,
    pub lr_grid: Vec<f64>,
    pub clip_norm: f64,
    pub optimizers: Vec<OptimizerSpec>,
    pub box_bounds: Option<(f64, f64)>,
    pub verify: VerifySpec,
    pub sweep: Option<SweepSpec>,
    /// Normalized key/value pairs the config was built from; canonical
    /// serialization and the run-directory hash derive from this.
    pub raw: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "problem.kind",
    "problem.d",
    "problem.n",
    "problem.rank",
    "problem.lambda",
    "problem.mu",
    "problem.width",
    "problem.val_size",
    "problem.sparsity",
    "problem.init_dist",
    "problem.batch",
    "drift.kind",
    "drift.scale",
    "drift.offset",
    "noise.kind",
    "noise.scale",
    "noise.offset",
    "run.T",
    "run.eval_every",
    "run.seeds",
    "run.lr_grid",
    "run.clip_norm",
    "optim.kind",
    "optim.alpha",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "optim.momentum",
    "optim.box",
    "optim.decay.enable",
    "optim.decay.alpha_star",
    "verify.enable",
    "verify.hp",
    "verify.eta",
    "verify.recursion",
    "verify.pg",
    "verify.delta",
    "verify.reps",
    "sweep.param",
    "sweep.values",
];

fn parse_kv_lines(text: &str, map: &mut BTreeMap<String, String>) -> Result<()> {
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        insert_pair(map, key.trim(), value.trim())?;
    }
    Ok(())
}

fn insert_pair(map: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<()> {
    if !KNOWN_KEYS.contains(&key) {
        return Err(Error::Config(format!("unknown config key `{key}`")));
    }
    if value.is_empty() {
        return Err(Error::Config(format!("empty value for key `{key}`")));
    }
    map.insert(key.to_string(), value.to_string());
    Ok(())
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number"))),
    }
}

fn get_u64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<u64>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not an integer"))),
    }
}

fn get_bool(map: &BTreeMap<String, String>, key: &str) -> Result<Option<bool>> {
    match map.get(key).map(|s| s.as_str()) {
        None => Ok(None),
        Some("true") => Ok(Some(true)),
        Some("false") => Ok(Some(false)),
        Some(v) => Err(Error::Config(format!(
            "key `{key}`: `{v}` is not `true`/`false`"
        ))),
    }
}

fn split_list(key: &str, v: &str) -> Result<Vec<String>> {
    let inner = v
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Config(format!("key `{key}`: expected a `[a, b, ...]` list")))?;
    Ok(inner
        .split(',')
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect())
}

fn get_f64_list(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<f64>>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => {
            let items = split_list(key, v)?;
            items
                .iter()
                .map(|x| {
                    x.parse::<f64>()
                        .map_err(|_| Error::Config(format!("key `{key}`: `{x}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some)
        }
    }
}

fn get_u64_list(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<u64>>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => {
            let items = split_list(key, v)?;
            items
                .iter()
                .map(|x| {
                    x.parse::<u64>()
                        .map_err(|_| Error::Config(format!("key `{key}`: `{x}` is not an integer")))
                })
                .collect::<Result<Vec<u64>>>()
                .map(Some)
        }
    }
}

fn schedule_from(map: &BTreeMap<String, String>, section: &str) -> Result<ScheduleSpec> {
    let kind_key = format!("{section}.kind");
    let kind = match map.get(&kind_key).map(|s| s.as_str()) {
        None | Some("constant") => ScheduleKind::Constant,
        Some("log") => ScheduleKind::Log,
        Some(other) => {
            return Err(Error::Config(format!(
                "key `{kind_key}`: unknown schedule kind `{other}`"
            )))
        }
    };
    let scale = get_f64(map, &format!("{section}.scale"))?.unwrap_or(0.0);
    let offset = get_f64(map, &format!("{section}.offset"))?.unwrap_or(0.0);
    if scale < 0.0 || offset < 0.0 {
        return Err(Error::Config(format!(
            "section `{section}`: schedule values must be non-negative"
        )));
    }
    Ok(ScheduleSpec {
        kind,
        scale,
        offset,
    })
}

fn default_batch(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Quadratic | ProblemKind::LeastSquares => 1,
        ProblemKind::Lasso => 32,
        _ => 256,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        parse_kv_lines(text, &mut map)?;
        for (k, v) in overrides {
            insert_pair(&mut map, k, v)?;
        }
        Self::from_map(map)
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let kind_str = map
            .get("problem.kind")
            .ok_or_else(|| Error::Config("missing required key `problem.kind`".into()))?;
        let kind = ProblemKind::parse(kind_str)?;
        let mut problem = ProblemSpec::defaults(kind);
        if let Some(v) = get_u64(&map, "problem.d")? {
            problem.d = v as usize;
        }
        if let Some(v) = get_u64(&map, "problem.n")? {
            problem.n = v as usize;
        }
        if let Some(v) = get_u64(&map, "problem.rank")? {
            problem.rank = v as usize;
        }
        if let Some(v) = get_f64(&map, "problem.lambda")? {
            problem.lambda = v;
        }
        if let Some(v) = get_f64(&map, "problem.mu")? {
            problem.mu = v;
        }
        if let Some(v) = get_u64(&map, "problem.width")? {
            problem.width = v as usize;
        }
        if let Some(v) = get_u64(&map, "problem.val_size")? {
            problem.val_size = v as usize;
        }
        if let Some(v) = get_u64(&map, "problem.sparsity")? {
            problem.sparsity = v as usize;
        }
        if let Some(v) = get_f64(&map, "problem.init_dist")? {
            problem.init_dist = v;
        }
        let batch = get_u64(&map, "problem.batch")?
            .map(|v| v as usize)
            .unwrap_or_else(|| default_batch(kind));
        if batch == 0 {
            return Err(Error::Config("problem.batch must be at least 1".into()));
        }

        let drift = schedule_from(&map, "drift")?;
        let noise = schedule_from(&map, "noise")?;

        let horizon = get_u64(&map, "run.T")?.unwrap_or(500);
        if horizon == 0 {
            return Err(Error::Config("run.T must be at least 1".into()));
        }
        let eval_every = get_u64(&map, "run.eval_every")?.unwrap_or(20).max(1);
        let seeds = get_u64_list(&map, "run.seeds")?.unwrap_or_else(|| vec![0, 1, 2]);
        if seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        let mut lr_grid = match get_f64_list(&map, "run.lr_grid")? {
            Some(grid) => grid,
            None => match get_f64(&map, "optim.alpha")? {
                Some(a) => vec![a],
                None => vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2],
            },
        };
        if lr_grid.is_empty() {
            return Err(Error::Config("run.lr_grid must not be empty".into()));
        }
        lr_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let clip_norm = get_f64(&map, "run.clip_norm")?.unwrap_or(10.0);
        if clip_norm <= 0.0 {
            return Err(Error::Config("run.clip_norm must be positive".into()));
        }

        let kinds: Vec<OptimizerKind> = match map.get("optim.kind") {
            None => vec![OptimizerKind::Sgd, OptimizerKind::Adam],
            Some(v) if v.starts_with('[') => split_list("optim.kind", v)?
                .iter()
                .map(|s| OptimizerKind::parse(s))
                .collect::<Result<Vec<_>>>()?,
            Some(v) => vec![OptimizerKind::parse(v)?],
        };
        let beta1 = get_f64(&map, "optim.beta1")?.unwrap_or(0.9);
        let beta2 = get_f64(&map, "optim.beta2")?.unwrap_or(0.999);
        let eps = get_f64(&map, "optim.eps")?.unwrap_or(1e-8);
        let momentum = get_f64(&map, "optim.momentum")?.unwrap_or(0.9);
        let decay_enable = get_bool(&map, "optim.decay.enable")?.unwrap_or(false);
        let decay_alpha_star = if decay_enable {
            Some(get_f64(&map, "optim.decay.alpha_star")?.ok_or_else(|| {
                Error::Config("optim.decay.enable needs optim.decay.alpha_star".into())
            })?)
        } else {
            None
        };
        let optimizers = kinds
            .into_iter()
            .map(|kind| OptimizerSpec {
                kind,
                beta1,
                beta2,
                eps,
                momentum,
                decay_alpha_star: if kind == OptimizerKind::Adam {
                    decay_alpha_star
                } else {
                    None
                },
            })
            .collect();

        let box_bounds = match get_f64_list(&map, "optim.box")? {
            None => None,
            Some(v) if v.len() == 2 && v[0] < v[1] => Some((v[0], v[1])),
            Some(v) => {
                return Err(Error::Config(format!(
                    "optim.box needs `[lo, hi]` with lo < hi, got {v:?}"
                )))
            }
        };

        let verify = VerifySpec {
            enabled: get_bool(&map, "verify.enable")?.unwrap_or(false),
            hp: get_bool(&map, "verify.hp")?.unwrap_or(false),
            eta: get_bool(&map, "verify.eta")?.unwrap_or(false),
            recursion: get_bool(&map, "verify.recursion")?.unwrap_or(false),
            pg: get_bool(&map, "verify.pg")?.unwrap_or(false),
            delta: get_f64(&map, "verify.delta")?.unwrap_or(0.1),
            reps: get_u64(&map, "verify.reps")?.unwrap_or(50) as u32,
        };
        if !(verify.delta > 0.0 && verify.delta < 1.0) {
            return Err(Error::Config("verify.delta must lie in (0, 1)".into()));
        }
        let verify = VerifySpec {
            enabled: verify.enabled || verify.hp || verify.eta || verify.recursion || verify.pg,
            ..verify
        };

        let sweep = match (map.get("sweep.param"), map.get("sweep.values")) {
            (None, None) => None,
            (Some(param), Some(values)) => Some(SweepSpec {
                param: param.clone(),
                values: split_list("sweep.values", values)?,
            }),
            _ => {
                return Err(Error::Config(
                    "sweep.param and sweep.values must be set together".into(),
                ))
            }
        };
        if let Some(s) = &sweep {
            if !KNOWN_KEYS.contains(&s.param.as_str()) {
                return Err(Error::Config(format!(
                    "sweep.param `{}` is not a config key",
                    s.param
                )));
            }
        }

        Ok(ExperimentConfig {
            problem,
            batch,
            drift,
            noise,
            horizon,
            eval_every,
            seeds,
            lr_grid,
            clip_norm,
            optimizers,
            box_bounds,
            verify,
            sweep,
            raw: map,
        })
    }

    pub fn projection(&self) -> ProjectionSpec {
        match self.box_bounds {
            Some((lo, hi)) => ProjectionSpec::Box { lo, hi },
            None => ProjectionSpec::None,
        }
    }

    /// Apply one `key=value` override and rebuild.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut map = self.raw.clone();
        insert_pair(&mut map, key, value)?;
        Self::from_map(map)
    }

    /// Sorted `key = value` lines; the manifest embeds this and the run
    /// directory name hashes it.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.raw {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn config_hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Parse a `section.key=value` CLI override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}`: expected `key=value`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

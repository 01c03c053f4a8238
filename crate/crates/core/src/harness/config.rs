use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::envs::{AblationMode, CournotParams, NavParams};
use crate::error::{Error, Result};
use crate::learners::TrainConfig;
use crate::potential::{ConsensusConfig, Topology};

pub const ENV_NAMES: [&str; 4] = ["cournot", "routing", "nav", "ablation"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingParams {
    /// `braess`, `layered`, or a path to a network JSON file.
    pub network: String,
    pub agents: usize,
    /// Per-agent demands; defaults to an equal split of one unit.
    pub demands: Option<Vec<f64>>,
    /// Defaults to the longest source-sink path length.
    pub horizon: Option<usize>,
    pub discount: f64,
    pub layers: usize,
    pub width: usize,
    pub net_seed: u64,
    /// Reward every agent with the potential.
    pub team: bool,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            network: "braess".into(),
            agents: 2,
            demands: None,
            horizon: None,
            discount: 0.99,
            layers: 5,
            width: 6,
            net_seed: 0,
            team: false,
        }
    }
}

/// Cournot base game with an extra reward term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationParams {
    pub agents: usize,
    pub mode: AblationMode,
    pub c: f64,
}

impl Default for AblationParams {
    fn default() -> Self {
        Self {
            agents: 2,
            mode: AblationMode::NonPotential,
            c: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvSpec {
    Cournot(CournotParams),
    Routing(RoutingParams),
    Nav(NavParams),
    Ablation(AblationParams),
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Cournot(_) => "cournot",
            EnvSpec::Routing(_) => "routing",
            EnvSpec::Nav(_) => "nav",
            EnvSpec::Ablation(_) => "ablation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoName {
    Spotac,
    Spotq,
    Independent,
}

impl AlgoName {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgoName::Spotac => "spotac",
            AlgoName::Spotq => "spotq",
            AlgoName::Independent => "independent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgoSpec {
    pub name: AlgoName,
    /// Estimate the potential with the distributed gradient-tracking scheme.
    pub consensus: bool,
    pub consensus_cfg: ConsensusConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploitMode {
    /// Closed-form best response when the game has one, learned otherwise.
    Auto,
    Analytic,
    Learned,
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub exploitability: ExploitMode,
    /// Training steps per learned best response.
    pub br_steps: usize,
    pub eval_episodes: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            exploitability: ExploitMode::Auto,
            br_steps: 5000,
            eval_episodes: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Record real elapsed time in `wall_ms`; off keeps CSVs byte-reproducible.
    pub wall_clock: bool,
    pub checkpoints: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            out: PathBuf::from("runs"),
            wall_clock: false,
            checkpoints: true,
        }
    }
}

/// Parameter sweep: `key` is a dotted path such as `env.c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<toml::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub algo: AlgoSpec,
    pub eval: EvalSpec,
    pub run: RunSpec,
    pub sweep: Option<SweepSpec>,
    #[serde(skip)]
    raw: toml::Table,
}

/// One `(config, seed)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDescriptor {
    pub run_id: String,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn runs(&self) -> Vec<RunDescriptor> {
        self.runs_labelled("")
    }

    pub(crate) fn runs_labelled(&self, label: &str) -> Vec<RunDescriptor> {
        self.run
            .seeds
            .iter()
            .map(|&seed| RunDescriptor {
                run_id: format!("{}{}-{}-s{seed}", label, self.env.name(), self.algo.name.as_str()),
                seed,
            })
            .collect()
    }

    /// One config per sweep value, labelled `key=value`. Without a sweep
    /// section this is the config itself with an empty label.
    pub fn expand_sweep(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(String::new(), self.clone())]);
        };
        let path: Vec<&str> = sweep.key.split('.').collect();
        let mut out = Vec::with_capacity(sweep.values.len());
        for v in &sweep.values {
            let mut raw = self.raw.clone();
            raw.remove("sweep");
            set_path(&mut raw, &path, v.clone())?;
            let text = toml::to_string(&raw).map_err(|e| Error::Config {
                line: 0,
                msg: e.to_string(),
            })?;
            let label = format!("{}={}/", path.last().copied().unwrap_or(""), v);
            out.push((label, parse_config(&text)?));
        }
        Ok(out)
    }
}

fn set_path(table: &mut toml::Table, path: &[&str], v: toml::Value) -> Result<()> {
    let bad = || Error::Config {
        line: 0,
        msg: format!("sweep key `{}` does not name a config entry", path.join(".")),
    };
    match path {
        [] => Err(bad()),
        [last] => {
            table.insert((*last).to_string(), v);
            Ok(())
        }
        [head, rest @ ..] => {
            let entry = table
                .entry(head.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => set_path(t, rest, v),
                _ => Err(bad()),
            }
        }
    }
}

/// Best-effort source line of `key` inside `[section]`, falling back to the
/// section header and then to line 1.
fn locate(text: &str, section: &str, key: Option<&str>) -> usize {
    let json = text.trim_start().starts_with('{');
    let mut in_section = json;
    let mut header = None;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if !json && t.starts_with('[') {
            let name = t.trim_matches(|c| c == '[' || c == ']').trim();
            in_section = name == section || name.starts_with(&format!("{section}."));
            if name == section {
                header = Some(n + 1);
            }
            continue;
        }
        if json && t.starts_with(&format!("\"{section}\"")) {
            header = Some(n + 1);
        }
        if let Some(k) = key {
            let hit = if json {
                t.starts_with(&format!("\"{k}\""))
            } else {
                t.strip_prefix(k).is_some_and(|r| r.trim_start().starts_with('='))
            };
            if in_section && hit {
                return n + 1;
            }
        }
    }
    header.unwrap_or(1)
}

fn backticked(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

fn section<T: DeserializeOwned>(text: &str, name: &str, table: toml::Table) -> Result<T> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| {
        let msg = e.message().to_string();
        Error::Config {
            line: locate(text, name, backticked(&msg)),
            msg: format!("[{name}] {msg}"),
        }
    })
}

fn take_table(root: &mut toml::Table, text: &str, name: &str) -> Result<toml::Table> {
    match root.remove(name) {
        None => Ok(toml::Table::new()),
        Some(toml::Value::Table(t)) => Ok(t),
        Some(_) => Err(Error::Config {
            line: locate(text, name, None),
            msg: format!("`{name}` must be a section"),
        }),
    }
}

fn take<T: DeserializeOwned>(table: &mut toml::Table, text: &str, section_name: &str, key: &str) -> Result<Option<T>> {
    table
        .remove(key)
        .map(|v| {
            T::deserialize(v).map_err(|e| Error::Config {
                line: locate(text, section_name, Some(key)),
                msg: format!("[{section_name}] {key}: {}", e.message()),
            })
        })
        .transpose()
}

fn parse_env(text: &str, mut t: toml::Table) -> Result<EnvSpec> {
    let name: String = take(&mut t, text, "env", "name")?.ok_or_else(|| Error::Config {
        line: locate(text, "env", None),
        msg: "[env] missing `name`".into(),
    })?;
    Ok(match name.as_str() {
        "cournot" => EnvSpec::Cournot(section(text, "env", t)?),
        "routing" => EnvSpec::Routing(section(text, "env", t)?),
        "nav" => EnvSpec::Nav(section(text, "env", t)?),
        "ablation" => EnvSpec::Ablation(section(text, "env", t)?),
        _ => {
            return Err(Error::UnknownEnv {
                name,
                available: ENV_NAMES.join(", "),
            })
        }
    })
}

fn parse_algo(text: &str, mut t: toml::Table) -> Result<AlgoSpec> {
    let name = take(&mut t, text, "algo", "name")?.unwrap_or(AlgoName::Spotac);
    let consensus = take(&mut t, text, "algo", "consensus")?.unwrap_or(false);
    let mut consensus_cfg: ConsensusConfig = match take::<toml::Table>(&mut t, text, "algo", "consensus_options")? {
        Some(c) => section(text, "algo.consensus_options", c)?,
        None => ConsensusConfig::default(),
    };
    if let Some(topology) = take::<Topology>(&mut t, text, "algo", "topology")? {
        consensus_cfg.topology = topology;
    }
    let train: TrainConfig = section(text, "algo", t)?;
    train.validate().map_err(|e| {
        let msg = match &e {
            Error::InvalidParam(m) => m.clone(),
            other => other.to_string(),
        };
        // validation messages lead with the offending field name
        let key = msg.split_whitespace().next().unwrap_or("");
        Error::Config {
            line: locate(text, "algo", Some(key)),
            msg: format!("[algo] {msg}"),
        }
    })?;
    Ok(AlgoSpec {
        name,
        consensus,
        consensus_cfg,
        train,
    })
}

/// Parses a TOML (or JSON, when the text starts with `{`) experiment config.
/// Missing entries take their defaults; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut root: toml::Table = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config {
            line: e.line(),
            msg: e.to_string(),
        })?
    } else {
        text.parse().map_err(|e: toml::de::Error| Error::Config {
            line: e.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1),
            msg: e.message().to_string(),
        })?
    };
    let raw = root.clone();
    let env = parse_env(text, take_table(&mut root, text, "env")?)?;
    let algo = parse_algo(text, take_table(&mut root, text, "algo")?)?;
    let eval: EvalSpec = section(text, "eval", take_table(&mut root, text, "eval")?)?;
    let run: RunSpec = section(text, "run", take_table(&mut root, text, "run")?)?;
    let sweep = match root.remove("sweep") {
        Some(toml::Value::Table(t)) => Some(section(text, "sweep", t)?),
        Some(_) => {
            return Err(Error::Config {
                line: locate(text, "sweep", None),
                msg: "`sweep` must be a section".into(),
            })
        }
        None => None,
    };
    if let Some(key) = root.keys().next() {
        return Err(Error::Config {
            line: locate(text, key, None),
            msg: format!("unknown section `{key}`"),
        });
    }
    if run.seeds.is_empty() {
        return Err(Error::Config {
            line: locate(text, "run", Some("seeds")),
            msg: "[run] seeds must not be empty".into(),
        });
    }
    Ok(ExperimentConfig {
        env,
        algo,
        eval,
        run,
        sweep,
        raw,
    })
}

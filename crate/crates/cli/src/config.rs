//! Experiment config: a TOML document with `[federation]`, `[model]` and
//! `[data]` sections. Federation fields may hold lists; with `--sweep` the
//! lists expand into a cross-product of runs, without it they are rejected.

use serde::Deserialize;

use fedrd_core::data::SynthConfig;
use fedrd_core::{Error, FederationConfig, ModelSpec, Result, Strategy};

/// A field that is either one value or a list of values to sweep over.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SweepVal<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> SweepVal<T> {
    fn values(&self, field: &str) -> Result<Vec<T>> {
        match self {
            SweepVal::One(v) => Ok(vec![v.clone()]),
            SweepVal::Many(vs) if vs.is_empty() => Err(Error::InvalidConfig(format!(
                "field `{field}` is an empty list"
            ))),
            SweepVal::Many(vs) => Ok(vs.clone()),
        }
    }

    fn single(&self, field: &str) -> Result<T> {
        match self {
            SweepVal::One(v) => Ok(v.clone()),
            SweepVal::Many(_) => Err(Error::InvalidConfig(format!(
                "field `{field}` is list-valued; pass --sweep to expand it"
            ))),
        }
    }
}

fn default_strategy() -> SweepVal<Strategy> {
    SweepVal::One(Strategy::FedRd)
}

fn default_tau() -> SweepVal<f64> {
    SweepVal::One(0.5)
}

fn default_mu() -> SweepVal<f64> {
    SweepVal::One(0.01)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub num_clients: SweepVal<usize>,
    pub rounds: SweepVal<usize>,
    pub local_epochs: SweepVal<usize>,
    pub batch_size: SweepVal<usize>,
    pub learning_rate: SweepVal<f64>,
    #[serde(default = "default_strategy")]
    pub strategy: SweepVal<Strategy>,
    #[serde(default = "default_tau")]
    pub tau: SweepVal<f64>,
    #[serde(default = "default_mu")]
    pub mu: SweepVal<f64>,
    pub seed: u64,
    pub held_out_domain: SweepVal<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub federation: FederationSection,
    pub model: ModelSpec,
    pub data: SynthConfig,
}

pub fn parse_config(text: &str) -> Result<ConfigDoc> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Resolves the document into concrete run configs. Without `sweep`, any
/// list-valued field is an error and exactly one config comes back; with
/// it, the cross-product of all list fields is expanded in declaration
/// order (the last field varies fastest).
pub fn expand(doc: &ConfigDoc, sweep: bool, seed_override: Option<u64>) -> Result<Vec<FederationConfig>> {
    doc.data.validate()?;
    doc.model.validate()?;

    let fed = &doc.federation;
    let seed = seed_override.unwrap_or(fed.seed);
    let base = FederationConfig {
        num_clients: 0,
        rounds: 0,
        local_epochs: 0,
        batch_size: 0,
        learning_rate: 0.0,
        strategy: Strategy::FedRd,
        tau: 0.5,
        mu: 0.01,
        model: doc.model.clone(),
        seed,
        held_out_domain: 0,
    };

    let mut runs = vec![base];
    if sweep {
        runs = by(runs, fed.num_clients.values("num_clients")?, |c, v| c.num_clients = v);
        runs = by(runs, fed.rounds.values("rounds")?, |c, v| c.rounds = v);
        runs = by(runs, fed.local_epochs.values("local_epochs")?, |c, v| {
            c.local_epochs = v
        });
        runs = by(runs, fed.batch_size.values("batch_size")?, |c, v| c.batch_size = v);
        runs = by(runs, fed.learning_rate.values("learning_rate")?, |c, v| {
            c.learning_rate = v
        });
        runs = by(runs, fed.strategy.values("strategy")?, |c, v| c.strategy = v);
        runs = by(runs, fed.tau.values("tau")?, |c, v| c.tau = v);
        runs = by(runs, fed.mu.values("mu")?, |c, v| c.mu = v);
        runs = by(runs, fed.held_out_domain.values("held_out_domain")?, |c, v| {
            c.held_out_domain = v
        });
    } else {
        let cfg = &mut runs[0];
        cfg.num_clients = fed.num_clients.single("num_clients")?;
        cfg.rounds = fed.rounds.single("rounds")?;
        cfg.local_epochs = fed.local_epochs.single("local_epochs")?;
        cfg.batch_size = fed.batch_size.single("batch_size")?;
        cfg.learning_rate = fed.learning_rate.single("learning_rate")?;
        cfg.strategy = fed.strategy.single("strategy")?;
        cfg.tau = fed.tau.single("tau")?;
        cfg.mu = fed.mu.single("mu")?;
        cfg.held_out_domain = fed.held_out_domain.single("held_out_domain")?;
    }

    for cfg in &runs {
        cfg.validate()?;
        check_cross(cfg, doc)?;
    }
    Ok(runs)
}

fn by<T: Clone>(
    runs: Vec<FederationConfig>,
    vals: Vec<T>,
    set: impl Fn(&mut FederationConfig, T),
) -> Vec<FederationConfig> {
    let mut out = Vec::with_capacity(runs.len() * vals.len());
    for run in runs {
        for v in &vals {
            let mut cfg = run.clone();
            set(&mut cfg, v.clone());
            out.push(cfg);
        }
    }
    out
}

/// Consistency across the three sections.
fn check_cross(cfg: &FederationConfig, doc: &ConfigDoc) -> Result<()> {
    let data = &doc.data;
    if cfg.model.input_dim != data.feature_dim {
        return Err(Error::InvalidConfig(format!(
            "model input_dim {} does not match data feature_dim {}",
            cfg.model.input_dim, data.feature_dim
        )));
    }
    if cfg.model.num_classes != data.num_classes {
        return Err(Error::InvalidConfig(format!(
            "model num_classes {} does not match data num_classes {}",
            cfg.model.num_classes, data.num_classes
        )));
    }
    if cfg.held_out_domain >= data.num_domains {
        return Err(Error::InvalidConfig(format!(
            "held_out_domain {} out of range for {} domains",
            cfg.held_out_domain, data.num_domains
        )));
    }
    let train_domains = data.num_domains - 1;
    if !cfg.num_clients.is_multiple_of(train_domains) {
        return Err(Error::InvalidConfig(format!(
            "num_clients {} is not divisible by the {} training domains",
            cfg.num_clients, train_domains
        )));
    }
    Ok(())
}

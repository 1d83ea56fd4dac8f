//! Round-based federation: broadcast the global model, train every client
//! locally (debiased loss where enabled), aggregate with the configured
//! strategy, and evaluate on the held-out domain each round.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate, betas_from_distances, fedavg_weights, gamma, gap_value, gga_weights, prox_penalty,
    ClientUpdate,
};
use crate::data::{
    build_client_shards, leave_one_out_split, samples_to_tensor, ClientShard, DomainDataset,
};
use crate::debias::{few_shot_set, DebiasState, FewShotSet};
use crate::error::{Error, Result};
use crate::exec::{map_ordered, ExecMode};
use crate::nn::{loss_and_grads, mlp_init, sgd_step, ModelParams, ModelSpec, LOG_CLAMP};
use crate::rng::{derive_seed, rng_from, TAG_CLIENT, TAG_INIT};
use crate::tensor::{frobenius_distance, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    #[serde(rename = "fedrd")]
    FedRd,
    /// Full aggregation rule but no class reweighting (α ≡ 1).
    #[serde(rename = "fedrd_no_dc")]
    FedRdNoDc,
    /// Class reweighting on, but plain sample-proportional aggregation.
    #[serde(rename = "fedrd_no_gga")]
    FedRdNoGga,
}

impl Strategy {
    /// Does local training use the debiased class weights?
    pub fn uses_dc(self) -> bool {
        matches!(self, Strategy::FedRd | Strategy::FedRdNoGga)
    }

    /// Does the server use the generalization-aware mixing weights?
    pub fn uses_gga(self) -> bool {
        matches!(self, Strategy::FedRd | Strategy::FedRdNoDc)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx => "fedprox",
            Strategy::FedRd => "fedrd",
            Strategy::FedRdNoDc => "fedrd_no_dc",
            Strategy::FedRdNoGga => "fedrd_no_gga",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub num_clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub strategy: Strategy,
    /// Few-shot threshold: class c is few-shot when its count is below
    /// `tau * (K / C)`.
    pub tau: f64,
    /// Proximal coefficient, used only by the fedprox strategy.
    pub mu: f64,
    pub model: ModelSpec,
    pub seed: u64,
    pub held_out_domain: usize,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::InvalidConfig("num_clients must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be positive".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::InvalidConfig("local_epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must be in (0, 1], got {}",
                self.tau
            )));
        }
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mu must be finite and non-negative, got {}",
                self.mu
            )));
        }
        self.model.validate()
    }
}

/// One client's standing state across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: ClientShard,
    /// Static per run: the shard never changes.
    pub few_shot: FewShotSet,
    /// Last trained local model (diagnostic; rounds always restart from the
    /// broadcast global).
    pub model: ModelParams,
}

impl ClientState {
    pub fn new(
        client_id: usize,
        shard: ClientShard,
        tau: f64,
        model: ModelParams,
    ) -> Result<Self> {
        let few_shot = few_shot_set(&shard.label_counts, tau)?;
        Ok(Self {
            client_id,
            shard,
            few_shot,
            model,
        })
    }
}

/// Everything recorded about one client in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundRecord {
    pub client_id: usize,
    pub d: f64,
    pub gap: f64,
    pub gamma: f64,
    pub beta: f64,
    pub weight: f64,
    pub lambda_last: f64,
    pub local_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub clients: Vec<ClientRoundRecord>,
    pub mean_participant_acc: f64,
    pub unseen_acc: f64,
    pub unseen_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationReport {
    pub rounds: Vec<RoundMetrics>,
    pub final_unseen_acc: f64,
    pub best_unseen_acc: f64,
    /// 1-based round index of the best unseen accuracy (earliest on ties).
    pub best_round: usize,
}

fn gather_batch(xs: &Tensor, ys: &[usize], idxs: &[usize]) -> (Tensor, Vec<usize>) {
    let dim = xs.shape()[1];
    let mut data = Vec::with_capacity(idxs.len() * dim);
    let mut labels = Vec::with_capacity(idxs.len());
    for &i in idxs {
        data.extend_from_slice(&xs.data()[i * dim..(i + 1) * dim]);
        labels.push(ys[i]);
    }
    (
        Tensor::new(vec![idxs.len(), dim], data).expect("batch shape"),
        labels,
    )
}

fn eval_tensor(model: &ModelParams, xs: &Tensor, ys: &[usize]) -> Result<(f64, f64)> {
    let probs = crate::nn::forward(model, xs)?;
    let c = model.spec.num_classes;
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for (j, &y) in ys.iter().enumerate() {
        if y >= c {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes: c,
            });
        }
        let row = &probs.data()[j * c..(j + 1) * c];
        let mut best = 0usize;
        for (m, &p) in row.iter().enumerate().skip(1) {
            // Strict comparison breaks ties toward the lowest class index.
            if p > row[best] {
                best = m;
            }
        }
        if best == y {
            correct += 1;
        }
        loss_sum += -(row[y].max(LOG_CLAMP)).ln();
    }
    let n = ys.len() as f64;
    Ok((correct as f64 / n, loss_sum / n))
}

/// Accuracy (argmax, ties to the lowest class) and unweighted mean
/// cross-entropy of a model on a sample list.
pub fn evaluate_samples(
    model: &ModelParams,
    samples: &[crate::data::Sample],
) -> Result<(f64, f64)> {
    let (xs, ys) = samples_to_tensor(samples)?;
    eval_tensor(model, &xs, &ys)
}

/// Accuracy and mean loss on a whole domain.
pub fn evaluate(model: &ModelParams, dataset: &DomainDataset) -> Result<(f64, f64)> {
    evaluate_samples(model, &dataset.samples)
}

/// One client's local training pass for one round: measure the broadcast
/// model's local loss, train E epochs of mini-batch SGD (recomputing the
/// drift weights at each epoch start when the debiased classifier is on),
/// then report the trained model with its distance and gap diagnostics.
pub fn local_update(
    client: &ClientState,
    global: &ModelParams,
    cfg: &FederationConfig,
    round: usize,
) -> Result<ClientUpdate> {
    if client.shard.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "client {} has an empty shard",
            client.client_id
        )));
    }
    let c = cfg.model.num_classes;
    let (xs, ys) = samples_to_tensor(&client.shard.samples)?;
    let (_, global_loss) = eval_tensor(global, &xs, &ys)?;

    let mut rng = rng_from(
        cfg.seed,
        &[TAG_CLIENT, client.client_id as u64, round as u64],
    );
    let mut local = global.clone();
    let ones = vec![1.0; c];
    let mut lambda_last = 0.0;
    let mut order: Vec<usize> = (0..client.shard.len()).collect();

    for _epoch in 0..cfg.local_epochs {
        let alpha = if cfg.strategy.uses_dc() {
            let state = DebiasState::compute(
                global.classifier_weight(),
                local.classifier_weight(),
                &client.few_shot,
                c,
            )?;
            lambda_last = state.lambda;
            state.alpha
        } else {
            ones.clone()
        };
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (bx, by) = gather_batch(&xs, &ys, batch);
            let (_, mut grads) = loss_and_grads(&local, &bx, &by, &alpha)?;
            grads.scale(1.0 / batch.len() as f64);
            if cfg.strategy == Strategy::FedProx {
                let (_, prox_grads) = prox_penalty(&local, global, cfg.mu)?;
                grads.add_scaled(&prox_grads, 1.0)?;
            }
            local = sgd_step(&local, &grads, cfg.learning_rate)?;
        }
    }

    let (local_acc, local_loss) = eval_tensor(&local, &xs, &ys)?;
    let d = frobenius_distance(local.domain_layer_weight(), global.domain_layer_weight())?;
    let gap = gap_value(global_loss, local_loss)?;
    Ok(ClientUpdate {
        client_id: client.client_id,
        model: local,
        num_samples: client.shard.len(),
        d,
        gap,
        lambda_last,
        local_loss,
        local_acc,
    })
}

/// One communication round: fan out local updates from the same broadcast
/// global, aggregate by strategy, evaluate on the held-out domain.
pub fn run_round(
    global: &ModelParams,
    clients: &mut [ClientState],
    cfg: &FederationConfig,
    round: usize,
    test: &DomainDataset,
    mode: ExecMode,
) -> Result<(ModelParams, RoundMetrics)> {
    if clients.is_empty() {
        return Err(Error::InvalidConfig("no clients".into()));
    }
    let results = map_ordered(mode, clients, |cl| local_update(cl, global, cfg, round));
    let mut updates = results.into_iter().collect::<Result<Vec<_>>>()?;
    updates.sort_by_key(|u| u.client_id);

    let n = updates.len();
    let d: Vec<f64> = updates.iter().map(|u| u.d).collect();
    let gammas: Vec<f64> = updates.iter().map(|u| gamma(u.gap)).collect();
    let betas = betas_from_distances(&d)?;
    let weights: Vec<f64> = if n == 1 {
        // A single client: the aggregate is that client's model.
        vec![1.0]
    } else if cfg.strategy.uses_gga() {
        gga_weights(&d, &gammas)?.weights
    } else {
        let sizes: Vec<usize> = updates.iter().map(|u| u.num_samples).collect();
        fedavg_weights(&sizes)?
    };
    let models: Vec<ModelParams> = updates.iter().map(|u| u.model.clone()).collect();
    let new_global = aggregate(&models, &weights)?;

    let mean_participant_acc = updates.iter().map(|u| u.local_acc).sum::<f64>() / n as f64;
    let (unseen_acc, unseen_loss) = evaluate(&new_global, test)?;

    let records = updates
        .iter()
        .enumerate()
        .map(|(i, u)| ClientRoundRecord {
            client_id: u.client_id,
            d: u.d,
            gap: u.gap,
            gamma: gammas[i],
            beta: betas[i],
            weight: weights[i],
            lambda_last: u.lambda_last,
            local_loss: u.local_loss,
        })
        .collect();

    for (state, update) in clients.iter_mut().zip(updates) {
        debug_assert_eq!(state.client_id, update.client_id);
        state.model = update.model;
    }

    Ok((
        new_global,
        RoundMetrics {
            round,
            clients: records,
            mean_participant_acc,
            unseen_acc,
            unseen_loss,
        },
    ))
}

/// Full leave-one-domain-out run: shard the training domains, run all
/// rounds, evaluate the aggregated model on the held-out domain each round.
pub fn run_federation(
    cfg: &FederationConfig,
    domains: &[DomainDataset],
    partition_alpha: f64,
    mode: ExecMode,
) -> Result<FederationReport> {
    cfg.validate()?;
    for dom in domains {
        if dom.num_classes != cfg.model.num_classes {
            return Err(Error::InvalidConfig(format!(
                "domain {} has {} classes, model expects {}",
                dom.domain_id, dom.num_classes, cfg.model.num_classes
            )));
        }
        if dom.feature_dim() != cfg.model.input_dim {
            return Err(Error::InvalidConfig(format!(
                "domain {} has width {}, model expects {}",
                dom.domain_id,
                dom.feature_dim(),
                cfg.model.input_dim
            )));
        }
    }
    let (train, test) = leave_one_out_split(domains, cfg.held_out_domain)?;
    let shards = build_client_shards(&train, cfg.num_clients, partition_alpha, cfg.seed)?;
    let global0 = mlp_init(&cfg.model, derive_seed(cfg.seed, &[TAG_INIT]))?;
    let mut clients = shards
        .into_iter()
        .enumerate()
        .map(|(id, shard)| ClientState::new(id, shard, cfg.tau, global0.clone()))
        .collect::<Result<Vec<_>>>()?;

    let mut global = global0;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut best_unseen_acc = f64::NEG_INFINITY;
    let mut best_round = 0;
    for t in 1..=cfg.rounds {
        let (next, metrics) = run_round(&global, &mut clients, cfg, t, test, mode)?;
        global = next;
        if metrics.unseen_acc > best_unseen_acc {
            best_unseen_acc = metrics.unseen_acc;
            best_round = t;
        }
        rounds.push(metrics);
    }
    let final_unseen_acc = rounds.last().expect("at least one round").unseen_acc;
    Ok(FederationReport {
        rounds,
        final_unseen_acc,
        best_unseen_acc,
        best_round,
    })
}

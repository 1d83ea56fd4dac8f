//! Synthetic multi-domain data. Each domain shows the same C-class blob
//! task under its own feature rotation (covariate shift); Dirichlet
//! partitioning then skews label proportions across the clients within a
//! domain (label shift). CSV import/export uses 17-significant-digit
//! decimals so values survive a write/read cycle bit-for-bit.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, TAG_DATA, TAG_PARTITION};
use crate::tensor::Tensor;
use crate::util::{fmt_f64, write_atomic};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: usize,
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

impl DomainDataset {
    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// One client's local dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub domain_id: usize,
    pub samples: Vec<Sample>,
    /// Per-class sample counts, length `num_classes`.
    pub label_counts: Vec<usize>,
}

impl ClientShard {
    pub fn new(domain_id: usize, samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("empty client shard".into()));
        }
        let mut label_counts = vec![0usize; num_classes];
        for s in &samples {
            if s.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    num_classes,
                });
            }
            label_counts[s.label] += 1;
        }
        Ok(Self {
            domain_id,
            samples,
            label_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn default_feature_dim() -> usize {
    2
}

/// Generator parameters for the rotated-blobs task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_domains: usize,
    pub num_classes: usize,
    pub samples_per_domain: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    /// One rotation angle per domain, applied in the first two feature
    /// dimensions.
    pub domain_rotation_degrees: Vec<f64>,
    pub class_center_radius: f64,
    pub noise_sigma: f64,
    /// Label-skew strength for the within-domain client partition.
    pub dirichlet_alpha: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_domains must be at least 2, got {}",
                self.num_domains
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.samples_per_domain < self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "samples_per_domain {} is below num_classes {}",
                self.samples_per_domain, self.num_classes
            )));
        }
        if self.feature_dim < 2 {
            return Err(Error::InvalidConfig(
                "feature_dim must be at least 2 (rotations act on the first two dims)".into(),
            ));
        }
        if self.domain_rotation_degrees.len() != self.num_domains {
            return Err(Error::InvalidConfig(format!(
                "{} rotation angles for {} domains",
                self.domain_rotation_degrees.len(),
                self.num_domains
            )));
        }
        for (i, a) in self.domain_rotation_degrees.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("rotation angle {a}")));
            }
            if self.domain_rotation_degrees[..i].contains(a) {
                return Err(Error::InvalidConfig(format!(
                    "rotation angle {a} appears for more than one domain"
                )));
            }
        }
        if !self.class_center_radius.is_finite() || self.class_center_radius <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "class_center_radius must be positive, got {}",
                self.class_center_radius
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        if !self.dirichlet_alpha.is_finite() || self.dirichlet_alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "dirichlet_alpha must be positive, got {}",
                self.dirichlet_alpha
            )));
        }
        Ok(())
    }

    /// Class `c`'s blob center: evenly spaced on a circle in dims (0, 1),
    /// zero elsewhere.
    pub fn class_center(&self, class: usize) -> Vec<f64> {
        let theta = 2.0 * std::f64::consts::PI * class as f64 / self.num_classes as f64;
        let mut center = vec![0.0; self.feature_dim];
        center[0] = self.class_center_radius * theta.cos();
        center[1] = self.class_center_radius * theta.sin();
        center
    }
}

/// Generates every domain: Gaussian blobs around the class centers with
/// labels assigned round-robin, then the domain's rotation applied in dims
/// (0, 1). Each domain draws from its own derived random stream.
pub fn gen_domains(cfg: &SynthConfig, seed: u64) -> Result<Vec<DomainDataset>> {
    cfg.validate()?;
    let mut domains = Vec::with_capacity(cfg.num_domains);
    for d in 0..cfg.num_domains {
        let mut rng = rng_from(seed, &[TAG_DATA, d as u64]);
        let phi = cfg.domain_rotation_degrees[d].to_radians();
        let (sin, cos) = phi.sin_cos();
        let mut samples = Vec::with_capacity(cfg.samples_per_domain);
        for j in 0..cfg.samples_per_domain {
            let label = j % cfg.num_classes;
            let mut features = cfg.class_center(label);
            for f in features.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *f += cfg.noise_sigma * z;
            }
            if cfg.domain_rotation_degrees[d] != 0.0 {
                let (x, y) = (features[0], features[1]);
                features[0] = x * cos - y * sin;
                features[1] = x * sin + y * cos;
            }
            samples.push(Sample { features, label });
        }
        domains.push(DomainDataset {
            domain_id: d,
            samples,
            num_classes: cfg.num_classes,
        });
    }
    Ok(domains)
}

/// Splits sample indices across clients with per-class proportions drawn
/// from a symmetric Dirichlet(alpha). Redraws the whole allocation (up to
/// 100 attempts) if any client would end up empty.
pub fn dirichlet_partition(
    labels: &[usize],
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n_clients == 0 {
        return Err(Error::InvalidConfig("n_clients must be positive".into()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidConfig("no samples to partition".into()));
    }
    if n_clients > labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{n_clients} clients cannot share {} samples",
            labels.len()
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "dirichlet alpha must be positive, got {alpha}"
        )));
    }
    if n_clients == 1 {
        return Ok(vec![(0..labels.len()).collect()]);
    }

    let num_classes = labels.iter().max().expect("non-empty") + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let gamma_dist = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::InvalidConfig(format!("dirichlet alpha {alpha}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _attempt in 0..100 {
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
        for base in &by_class {
            if base.is_empty() {
                continue;
            }
            let mut idxs = base.clone();
            idxs.shuffle(&mut rng);
            // Dirichlet draw via normalized Gamma variates.
            let draws: Vec<f64> = (0..n_clients).map(|_| gamma_dist.sample(&mut rng)).collect();
            let sum: f64 = draws.iter().sum();
            let props: Vec<f64> = if sum > 0.0 && sum.is_finite() {
                draws.iter().map(|&g| g / sum).collect()
            } else {
                // All draws underflowed to zero (tiny alpha): fall back to
                // a uniform split rather than dividing by zero.
                vec![1.0 / n_clients as f64; n_clients]
            };
            let m = idxs.len();
            let mut cum = 0.0;
            let mut prev = 0usize;
            for (k, &p) in props.iter().enumerate() {
                cum += p;
                let bound = if k + 1 == n_clients {
                    m
                } else {
                    ((cum * m as f64).round() as usize).clamp(prev, m)
                };
                sets[k].extend_from_slice(&idxs[prev..bound]);
                prev = bound;
            }
        }
        if sets.iter().all(|s| !s.is_empty()) {
            for s in &mut sets {
                s.sort_unstable();
            }
            return Ok(sets);
        }
    }
    Err(Error::InvalidConfig(format!(
        "dirichlet partition left a client empty in 100 consecutive draws \
         (alpha {alpha}, {n_clients} clients, {} samples)",
        labels.len()
    )))
}

/// Leave-one-domain-out split: the held-out domain untouched, the rest in
/// their original order.
pub fn leave_one_out_split(
    domains: &[DomainDataset],
    held_out: usize,
) -> Result<(Vec<&DomainDataset>, &DomainDataset)> {
    let test = domains
        .iter()
        .find(|d| d.domain_id == held_out)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown held-out domain {held_out}")))?;
    let train: Vec<&DomainDataset> = domains.iter().filter(|d| d.domain_id != held_out).collect();
    if train.is_empty() {
        return Err(Error::InvalidConfig(
            "holding out the only domain leaves nothing to train on".into(),
        ));
    }
    Ok((train, test))
}

/// Shards the training domains across clients: `num_clients` must divide
/// evenly over the domains, and each domain is Dirichlet-split among its
/// share of clients. Client ids are dense, grouped by domain order.
pub fn build_client_shards(
    train_domains: &[&DomainDataset],
    num_clients: usize,
    alpha: f64,
    master_seed: u64,
) -> Result<Vec<ClientShard>> {
    if train_domains.is_empty() {
        return Err(Error::InvalidConfig("no training domains".into()));
    }
    if num_clients == 0 {
        return Err(Error::InvalidConfig("num_clients must be positive".into()));
    }
    let d = train_domains.len();
    if !num_clients.is_multiple_of(d) {
        return Err(Error::InvalidConfig(format!(
            "num_clients {num_clients} is not divisible by the {d} training domains"
        )));
    }
    let num_classes = train_domains[0].num_classes;
    let width = train_domains[0].feature_dim();
    for dom in train_domains {
        if dom.num_classes != num_classes || dom.feature_dim() != width {
            return Err(Error::InvalidConfig(format!(
                "domain {} disagrees on classes/feature width",
                dom.domain_id
            )));
        }
    }
    let per = num_clients / d;
    let mut shards = Vec::with_capacity(num_clients);
    for dom in train_domains {
        let seed = derive_seed(master_seed, &[TAG_PARTITION, dom.domain_id as u64]);
        let sets = dirichlet_partition(&dom.labels(), per, alpha, seed)?;
        for set in sets {
            let samples = set.iter().map(|&i| dom.samples[i].clone()).collect();
            shards.push(ClientShard::new(dom.domain_id, samples, num_classes)?);
        }
    }
    Ok(shards)
}

/// Packs samples into a `[n, feature_dim]` tensor plus a label vector.
pub fn samples_to_tensor(samples: &[Sample]) -> Result<(Tensor, Vec<usize>)> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("empty sample list".into()));
    }
    let dim = samples[0].features.len();
    let mut data = Vec::with_capacity(samples.len() * dim);
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} vs {dim}",
                s.features.len()
            )));
        }
        data.extend_from_slice(&s.features);
        labels.push(s.label);
    }
    Ok((Tensor::new(vec![samples.len(), dim], data)?, labels))
}

/// Writes one domain as CSV: header `domain,label,f0,...`, one sample per
/// row, decimals precise enough to reload bit-identically.
pub fn save_csv_dataset(dataset: &DomainDataset, path: &Path) -> Result<()> {
    let width = dataset.feature_dim();
    let mut out = String::from("domain,label");
    for k in 0..width {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    for s in &dataset.samples {
        out.push_str(&format!("{},{}", dataset.domain_id, s.label));
        for f in &s.features {
            out.push(',');
            out.push_str(&fmt_f64(*f));
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::MalformedData {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Loads a single-domain CSV written in the `save_csv_dataset` schema.
/// The class count is inferred as `max label + 1`.
pub fn load_csv_dataset(path: &Path) -> Result<DomainDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "domain" || cols[1] != "label" {
        return Err(malformed(
            path,
            1,
            format!("header must be `domain,label,f0,...`, got `{header}`"),
        ));
    }
    let width = cols.len() - 2;
    for (k, col) in cols[2..].iter().enumerate() {
        if *col != format!("f{k}") {
            return Err(malformed(path, 1, format!("unexpected column `{col}`")));
        }
    }

    let mut domain_id: Option<usize> = None;
    let mut samples = Vec::new();
    let mut max_label = 0usize;
    for (idx, row) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != width + 2 {
            return Err(malformed(
                path,
                line_no,
                format!("expected {} fields, got {}", width + 2, fields.len()),
            ));
        }
        let dom: usize = fields[0]
            .parse()
            .map_err(|_| malformed(path, line_no, format!("bad domain id `{}`", fields[0])))?;
        match domain_id {
            None => domain_id = Some(dom),
            Some(d) if d != dom => {
                return Err(malformed(
                    path,
                    line_no,
                    format!("mixed domain ids {d} and {dom}"),
                ))
            }
            _ => {}
        }
        let label: usize = fields[1]
            .parse()
            .map_err(|_| malformed(path, line_no, format!("bad label `{}`", fields[1])))?;
        max_label = max_label.max(label);
        let mut features = Vec::with_capacity(width);
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|_| malformed(path, line_no, format!("bad feature `{f}`")))?;
            if !v.is_finite() {
                return Err(malformed(path, line_no, format!("non-finite feature `{f}`")));
            }
            features.push(v);
        }
        samples.push(Sample { features, label });
    }
    let domain_id = domain_id.ok_or_else(|| malformed(path, 1, "file contains no data rows"))?;
    Ok(DomainDataset {
        domain_id,
        samples,
        num_classes: max_label + 1,
    })
}

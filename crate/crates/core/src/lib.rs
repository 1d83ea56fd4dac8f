//! Deterministic desk-scale simulator of federated learning across
//! heterogeneous clients.
//!
//! Clients hold shards of rotated-blob synthetic domains with
//! Dirichlet-skewed label proportions. Each round the server broadcasts a
//! global MLP, clients train locally, and the server aggregates:
//!
//! * `fedavg` — sample-proportional weighted averaging;
//! * `fedprox` — fedavg plus a proximal penalty on local drift;
//! * `fedrd` — class reweighting driven by classifier drift on the client,
//!   plus generalization-aware mixing weights (domain-layer distance and
//!   local performance gap) on the server;
//! * `fedrd_no_dc`, `fedrd_no_gga` — the two single-component ablations.
//!
//! Generalization is measured leave-one-domain-out: the held-out domain is
//! evaluated every round and never trains. Every run is a pure function of
//! its config and seed; with the `parallel` feature (default), client
//! updates fan out across threads and still reproduce the sequential
//! results bit-for-bit.

pub mod aggregation;
pub mod data;
pub mod debias;
mod error;
pub mod exec;
pub mod federation;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod util;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use federation::{FederationConfig, FederationReport, Strategy};
pub use nn::{ModelParams, ModelSpec};
pub use tensor::{frobenius_distance, Tensor};

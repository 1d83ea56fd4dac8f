//! Run artifacts: metrics and trace CSVs, a summary document, and the run
//! manifest. All floats use 17 significant digits so files are
//! byte-reproducible and parse back to the same bits; every file is
//! written atomically (temp then rename).

use std::path::Path;

use serde::Serialize;

use fedrd_core::data::SynthConfig;
use fedrd_core::federation::FederationReport;
use fedrd_core::util::{fmt_f64, write_atomic};
use fedrd_core::{Error, FederationConfig, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Per-round metrics: `round,unseen_acc,unseen_loss,mean_participant_acc`.
pub fn write_metrics_csv(path: &Path, report: &FederationReport) -> Result<()> {
    let mut out = String::from("round,unseen_acc,unseen_loss,mean_participant_acc\n");
    for m in &report.rounds {
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.round,
            fmt_f64(m.unseen_acc),
            fmt_f64(m.unseen_loss),
            fmt_f64(m.mean_participant_acc)
        ));
    }
    write_atomic(path, &out)
}

/// Per-round, per-client diagnostics:
/// `round,client_id,d,gap,gamma,beta,weight,lambda_last,local_loss`.
pub fn write_trace_csv(path: &Path, report: &FederationReport) -> Result<()> {
    let mut out = String::from("round,client_id,d,gap,gamma,beta,weight,lambda_last,local_loss\n");
    for m in &report.rounds {
        for c in &m.clients {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                m.round,
                c.client_id,
                fmt_f64(c.d),
                fmt_f64(c.gap),
                fmt_f64(c.gamma),
                fmt_f64(c.beta),
                fmt_f64(c.weight),
                fmt_f64(c.lambda_last),
                fmt_f64(c.local_loss)
            ));
        }
    }
    write_atomic(path, &out)
}

/// Final/best unseen accuracy plus enough identifying fields to compare
/// sweep entries side by side.
pub fn write_summary(path: &Path, cfg: &FederationConfig, report: &FederationReport) -> Result<()> {
    let out = format!(
        "{{\n  \"strategy\": \"{}\",\n  \"seed\": {},\n  \"held_out_domain\": {},\n  \
         \"rounds\": {},\n  \"local_epochs\": {},\n  \"final_unseen_acc\": {},\n  \
         \"best_unseen_acc\": {},\n  \"best_round\": {}\n}}\n",
        cfg.strategy,
        cfg.seed,
        cfg.held_out_domain,
        cfg.rounds,
        cfg.local_epochs,
        fmt_f64(report.final_unseen_acc),
        fmt_f64(report.best_unseen_acc),
        report.best_round
    );
    write_atomic(path, &out)
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub artifact_version: &'a str,
    pub seed: u64,
    pub federation: &'a FederationConfig,
    pub data: &'a SynthConfig,
    /// Wall-clock timestamps; not covered by the determinism contract.
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
    write_atomic(path, &format!("{text}\n"))
}

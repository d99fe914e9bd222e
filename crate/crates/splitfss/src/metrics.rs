//! Experiment records: append-only JSON lines, a CSV summary, and an
//! aligned text table for variant comparisons.

use crate::protocol::RunOutcome;
use crate::transport::{bytes_to_mb, ByteMeter};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartyReport {
    pub party: String,
    pub sent_bytes: [u64; 3],
    pub received_bytes: [u64; 3],
    pub sent_mb_total: f64,
}

impl PartyReport {
    pub fn new(party: &str, meter: &ByteMeter) -> Self {
        Self {
            party: party.to_string(),
            sent_bytes: meter.sent,
            received_bytes: meter.received,
            sent_mb_total: bytes_to_mb(meter.sent_total()),
        }
    }

    pub fn training_sent(&self) -> u64 {
        self.sent_bytes[1]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub variant: String,
    /// Hash of the full experiment config, for provenance.
    pub config_hash: String,
    pub code_version: String,
    pub ring_bits: u32,
    pub frac_bits: u32,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_batches_per_epoch: usize,
    pub test_batches: usize,
    pub epoch_accuracy: Vec<f64>,
    pub wall_seconds: f64,
    pub parties: Vec<PartyReport>,
    pub preprocessing_bytes_per_batch: u64,
    pub preprocessing_mb_per_batch: f64,
    pub revealed_losses: Vec<f64>,
}

impl MetricsRecord {
    pub fn from_outcome(
        outcome: &RunOutcome,
        config_hash: u64,
        hp: &crate::protocol::Hyperparams,
    ) -> Self {
        Self {
            variant: outcome.variant.name().to_string(),
            config_hash: format!("{config_hash:016x}"),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            ring_bits: hp.fixed.ring_bits,
            frac_bits: hp.fixed.frac_bits,
            epochs: hp.epochs,
            batch_size: hp.batch_size,
            train_batches_per_epoch: outcome.train_batches_per_epoch,
            test_batches: outcome.test_batches,
            epoch_accuracy: outcome.epoch_accuracy.clone(),
            wall_seconds: outcome.wall.as_secs_f64(),
            parties: vec![
                PartyReport::new("client", &outcome.client_meter),
                PartyReport::new("server0", &outcome.server0_meter),
                PartyReport::new("server1", &outcome.server1_meter),
                PartyReport::new("dealer", &outcome.dealer_meter),
            ],
            preprocessing_bytes_per_batch: outcome.preprocessing_bytes_per_batch,
            preprocessing_mb_per_batch: bytes_to_mb(outcome.preprocessing_bytes_per_batch),
            revealed_losses: outcome.revealed_losses.clone(),
        }
    }

    pub fn party(&self, name: &str) -> Option<&PartyReport> {
        self.parties.iter().find(|p| p.party == name)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }

    pub fn csv_header() -> &'static str {
        "variant,final_accuracy,wall_seconds,client_sent_mb,server0_sent_mb,server1_sent_mb,dealer_sent_mb,preprocessing_mb_per_batch"
    }

    pub fn to_csv_row(&self) -> String {
        let acc = self.epoch_accuracy.last().copied().unwrap_or(f64::NAN);
        let mb = |name: &str| self.party(name).map(|p| p.sent_mb_total).unwrap_or(0.0);
        format!(
            "{},{:.4},{:.3},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.variant,
            acc,
            self.wall_seconds,
            mb("client"),
            mb("server0"),
            mb("server1"),
            mb("dealer"),
            self.preprocessing_mb_per_batch,
        )
    }

    pub fn append_json_line(&self, path: &std::path::Path) -> crate::Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        writeln!(f, "{}", self.to_json_line())?;
        Ok(())
    }
}

/// Aligned text table over a set of records (one row per variant).
pub fn comparison_table(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<17} {:>9} {:>11} {:>13} {:>13} {:>13} {:>15}\n",
        "variant",
        "accuracy",
        "time (s)",
        "client (MB)",
        "servers (MB)",
        "dealer (MB)",
        "preproc/batch"
    ));
    for r in records {
        let acc = r.epoch_accuracy.last().copied().unwrap_or(f64::NAN);
        let servers = r.party("server0").map(|p| p.sent_mb_total).unwrap_or(0.0)
            + r.party("server1").map(|p| p.sent_mb_total).unwrap_or(0.0);
        out.push_str(&format!(
            "{:<17} {:>8.2}% {:>11.2} {:>13.4} {:>13.4} {:>13.4} {:>12.4} MB\n",
            r.variant,
            acc * 100.0,
            r.wall_seconds,
            r.party("client").map(|p| p.sent_mb_total).unwrap_or(0.0),
            servers,
            r.party("dealer").map(|p| p.sent_mb_total).unwrap_or(0.0),
            r.preprocessing_mb_per_batch,
        ));
    }
    out
}

/// The derived comparisons the harness gates on.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub client_train_ratio_private_local_over_vanilla: f64,
    pub preprocessing_ratio_private_local_over_vanilla: f64,
    pub client_train_ratio_public_local_over_vanilla: f64,
    pub wall_ratio_private_local_over_vanilla: f64,
    pub accuracy_gap_public_private_vanilla: f64,
}

pub fn compare(records: &[MetricsRecord]) -> Option<ComparisonReport> {
    let find = |v: &str| records.iter().find(|r| r.variant == v);
    let (pl, pv, ql, qv) = (
        find("private-local")?,
        find("private-vanilla")?,
        find("public-local")?,
        find("public-vanilla")?,
    );
    let train_sent = |r: &MetricsRecord| r.party("client").map(|p| p.training_sent()).unwrap_or(0);
    let acc = |r: &MetricsRecord| r.epoch_accuracy.last().copied().unwrap_or(f64::NAN);
    Some(ComparisonReport {
        client_train_ratio_private_local_over_vanilla: train_sent(pl) as f64
            / train_sent(pv).max(1) as f64,
        preprocessing_ratio_private_local_over_vanilla: pl.preprocessing_bytes_per_batch as f64
            / pv.preprocessing_bytes_per_batch.max(1) as f64,
        client_train_ratio_public_local_over_vanilla: train_sent(ql) as f64
            / train_sent(qv).max(1) as f64,
        wall_ratio_private_local_over_vanilla: pl.wall_seconds / pv.wall_seconds.max(1e-9),
        accuracy_gap_public_private_vanilla: acc(qv) - acc(pv),
    })
}

//! CSV traces and run summaries.

use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::{AggregateRecord, ExperimentResult, ReplicationResult};
use crate::metrics::TraceRecord;

/// Column header shared by aggregated and per-replication traces.
pub const CSV_HEADER: &str = "step,mean_dist_ne,mean_belief_err,link_utilization,coverage";

fn row(out: &mut String, step: u64, values: [f64; 4]) {
    write!(out, "{step}").unwrap();
    for v in values {
        write!(out, ",{v}").unwrap();
    }
    out.push('\n');
}

/// Aggregated trace, one row per recorded step.
pub fn aggregate_csv(records: &[AggregateRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        row(&mut out, r.step, [r.mean_dist_ne, r.mean_belief_err, r.link_utilization, r.coverage]);
    }
    out
}

/// Per-replication traces stacked with a leading `replication` column.
pub fn replications_csv(results: &[ReplicationResult]) -> String {
    let mut out = format!("replication,{CSV_HEADER}\n");
    for r in results {
        for t in &r.trace {
            let TraceRecord {
                step,
                mean_dist_ne,
                mean_belief_err,
                link_utilization,
                coverage,
            } = *t;
            write!(out, "{},", r.rep_index).unwrap();
            row(&mut out, step, [mean_dist_ne, mean_belief_err, link_utilization, coverage as f64]);
        }
    }
    out
}

/// Headline numbers of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<C: Serialize> {
    pub seed: u64,
    pub replications: u64,
    pub final_step: Option<u64>,
    pub final_mean_dist_ne: Option<f64>,
    pub final_mean_belief_err: Option<f64>,
    pub final_coverage: Option<f64>,
    /// Link utilization averaged over every recorded row.
    pub mean_link_utilization: Option<f64>,
    /// Replications whose final profile is a pure equilibrium.
    pub converged: u64,
    pub converged_steps_mean: Option<f64>,
    pub early_stopped: u64,
    pub attempts_total: u64,
    pub successes_total: u64,
    pub acks_total: u64,
    pub config: C,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl<C: Serialize> Summary<C> {
    pub fn new(result: &ExperimentResult, seed: u64, t_final: u64, config: C) -> Self {
        let last = result.aggregate.last();
        let reps = &result.replications;
        let converged: Vec<u64> = reps.iter().filter_map(|r| r.converged_at).collect();
        let util: Vec<f64> = result.aggregate.iter().map(|r| r.link_utilization).collect();
        Self {
            seed,
            replications: reps.len() as u64,
            final_step: last.map(|r| r.step),
            final_mean_dist_ne: last.and_then(|r| finite(r.mean_dist_ne)),
            final_mean_belief_err: last.and_then(|r| finite(r.mean_belief_err)),
            final_coverage: last.map(|r| r.coverage),
            mean_link_utilization: (!util.is_empty()).then(|| util.iter().sum::<f64>() / util.len() as f64),
            converged: converged.len() as u64,
            converged_steps_mean: (!converged.is_empty())
                .then(|| converged.iter().sum::<u64>() as f64 / converged.len() as f64),
            early_stopped: reps.iter().filter(|r| r.steps_run < t_final).count() as u64,
            attempts_total: reps.iter().map(|r| r.attempts_total).sum(),
            successes_total: reps.iter().map(|r| r.successes_total).sum(),
            acks_total: reps.iter().map(|r| r.acks_total).sum(),
            config,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let recs = [AggregateRecord {
            step: 10,
            mean_dist_ne: 0.5,
            mean_belief_err: f64::NAN,
            link_utilization: 1.0,
            coverage: 3.0,
            replications: 2,
        }];
        assert_eq!(aggregate_csv(&recs), format!("{CSV_HEADER}\n10,0.5,NaN,1,3\n"));
        assert_eq!(aggregate_csv(&[]), format!("{CSV_HEADER}\n"));
    }
}

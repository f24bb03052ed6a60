//! Metrics rows and their CSV/JSON encodings.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed CSV schema, one row per evaluation point per seed.
pub const CSV_HEADER: &str =
    "step,controller,seed,return_norm,offline_count,online_count,entropy_off,entropy_on,switches";

/// One evaluation point of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub controller: String,
    pub seed: u64,
    pub return_norm: f64,
    /// Cumulative environment steps taken by the offline policy.
    pub offline_count: u64,
    /// Cumulative environment steps taken by the online policy.
    pub online_count: u64,
    pub entropy_off: f64,
    pub entropy_on: f64,
    /// Switch events during this eval interval.
    pub switches: u64,
}

/// Rescales a raw episodic return to 0 (random policy) .. 100 (optimal).
pub fn normalize_return(raw: f64, random_return: f64, optimal_return: f64) -> Result<f64> {
    if optimal_return <= random_return {
        return Err(Error::InvalidConfig(format!(
            "degenerate normalization: optimal {optimal_return} <= random {random_return}"
        )));
    }
    Ok(100.0 * (raw - random_return) / (optimal_return - random_return))
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{},{},{:.6},{:.6},{}\n",
            r.step,
            r.controller,
            r.seed,
            r.return_norm,
            r.offline_count,
            r.online_count,
            r.entropy_off,
            r.entropy_on,
            r.switches
        ));
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(Error::MalformedFile {
            path: "metrics csv".into(),
            reason: format!("unexpected header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::MalformedFile {
                path: "metrics csv".into(),
                reason: format!("row {i} has {} fields", fields.len()),
            });
        }
        let parse_err = |what: &str| Error::MalformedFile {
            path: "metrics csv".into(),
            reason: format!("row {i}: bad {what}"),
        };
        rows.push(MetricsRow {
            step: fields[0].parse().map_err(|_| parse_err("step"))?,
            controller: fields[1].to_string(),
            seed: fields[2].parse().map_err(|_| parse_err("seed"))?,
            return_norm: fields[3].parse().map_err(|_| parse_err("return_norm"))?,
            offline_count: fields[4].parse().map_err(|_| parse_err("offline_count"))?,
            online_count: fields[5].parse().map_err(|_| parse_err("online_count"))?,
            entropy_off: fields[6].parse().map_err(|_| parse_err("entropy_off"))?,
            entropy_on: fields[7].parse().map_err(|_| parse_err("entropy_on"))?,
            switches: fields[8].parse().map_err(|_| parse_err("switches"))?,
        });
    }
    Ok(rows)
}

pub fn rows_to_json(rows: &[MetricsRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

pub fn rows_from_json(text: &str) -> Result<Vec<MetricsRow>> {
    serde_json::from_str(text).map_err(|e| Error::MalformedFile {
        path: "metrics json".into(),
        reason: e.to_string(),
    })
}

pub fn write_rows_csv(rows: &[MetricsRow], w: &mut impl Write, path: &str) -> Result<()> {
    w.write_all(rows_to_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))
}

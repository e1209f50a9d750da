//! CSV summaries of experiment records: residual profiles and per-method
//! timing breakdowns.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::experiment::{Method, TrialRecord};
use crate::problem::{relative_residual_profile, PhaseTimings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Method,
    Kind,
    M,
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "method" => Ok(GroupKey::Method),
            "kind" | "sketch" => Ok(GroupKey::Kind),
            "m" => Ok(GroupKey::M),
            other => Err(Error::InvalidInput(format!("unknown group key `{other}`"))),
        }
    }
}

pub fn parse_group_keys(s: &str) -> Result<Vec<GroupKey>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// Group label such as `pcls/ros/m=750`; sketch-free records use `-`.
pub fn group_label(record: &TrialRecord, keys: &[GroupKey]) -> String {
    keys.iter()
        .map(|k| match k {
            GroupKey::Method => record.method.to_string(),
            GroupKey::Kind => record.sketch_kind().map_or("-".into(), |k| k.to_string()),
            GroupKey::M => record.m().map_or("-".into(), |m| format!("m={m}")),
        })
        .collect::<Vec<_>>()
        .join("/")
}

/// Reads newline-delimited JSON records, skipping blank lines.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("record on line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Profile rows `group,fraction,value` for already-computed relative
/// residuals `‖Ax̂ − b‖/‖Ax_ls − b‖`.
pub fn emit_values_profile(groups: &BTreeMap<String, Vec<f64>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "fraction", "value"]).map_err(csv_err)?;
    for (label, values) in groups {
        for (f, v) in relative_residual_profile(values)? {
            w.write_record([label.clone(), f.to_string(), v.to_string()]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Profile of `1 + relative accuracy` per group. Failed records and
/// non-finite accuracies are left out.
pub fn emit_profile(records: &[TrialRecord], keys: &[GroupKey]) -> Result<String> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(acc) = r.relative_accuracy.filter(|a| a.is_finite()) {
            groups.entry(group_label(r, keys)).or_default().push(1.0 + acc.max(0.0));
        }
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput("no successful records to profile".into()));
    }
    emit_values_profile(&groups)
}

/// Mean wall time per phase for each method over successful records:
/// `method,count,sketch,factor,solve,total`, with `total` the phase sum.
pub fn emit_timing_breakdown(records: &[TrialRecord]) -> Result<String> {
    let mut sums: BTreeMap<Method, (usize, PhaseTimings)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.succeeded()) {
        let e = sums.entry(r.method).or_default();
        e.0 += 1;
        e.1.sketch += r.timings.sketch;
        e.1.factor += r.timings.factor;
        e.1.solve += r.timings.solve;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "count", "sketch", "factor", "solve", "total"]).map_err(csv_err)?;
    for (method, (n, t)) in sums {
        let k = n as f64;
        let mean = PhaseTimings { sketch: t.sketch / k, factor: t.factor / k, solve: t.solve / k };
        w.write_record([
            method.to_string(),
            n.to_string(),
            mean.sketch.to_string(),
            mean.factor.to_string(),
            mean.solve.to_string(),
            mean.total().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

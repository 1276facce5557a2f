//! CSV and JSON outputs. Every CSV has a header row and a fixed column
//! order; tasks and layers are numbered from 1.

use std::io::Write;

use serde::Serialize;
use sgp_core::trainer::{compute_metrics, compute_relative_fwt, RunResult};
use sgp_core::{AccuracyMatrix, BasisMemory};

use crate::config::{ExperimentConfig, MethodName};
use crate::error::Result;

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

/// `after_task,task_1,…,task_T`; row `i` holds test accuracies right after
/// training task `i`, blank above the diagonal.
pub fn metrics_csv(r: &AccuracyMatrix) -> Result<Vec<u8>> {
    let t = r.tasks();
    let mut w = writer(Vec::new());
    let mut header = vec!["after_task".to_string()];
    header.extend((1..=t).map(|j| format!("task_{j}")));
    w.write_record(&header)?;
    for i in 0..t {
        let mut row = vec![(i + 1).to_string()];
        row.extend((0..t).map(|j| opt(r.get(i, j))));
        w.write_record(&row)?;
    }
    finish(w)
}

/// `task,basis_index,lambda` for one layer across all memory snapshots.
pub fn importance_csv(snapshots: &[BasisMemory], layer: usize) -> Result<Vec<u8>> {
    let mut w = writer(Vec::new());
    w.write_record(["task", "basis_index", "lambda"])?;
    for (t, snap) in snapshots.iter().enumerate() {
        for (b, l) in snap.layers[layer].lambda().iter().enumerate() {
            w.write_record([(t + 1).to_string(), (b + 1).to_string(), num(*l)])?;
        }
    }
    finish(w)
}

/// Per-layer state of one memory snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub layer: usize,
    pub dim: usize,
    pub bases: usize,
    pub saturated: usize,
    pub saturated_fraction: f64,
    pub histogram: Vec<usize>,
}

pub fn layer_reports(mem: &BasisMemory, bins: usize) -> Vec<LayerReport> {
    mem.layers
        .iter()
        .enumerate()
        .map(|(l, m)| LayerReport {
            layer: l + 1,
            dim: m.dim(),
            bases: m.len(),
            saturated: m.saturated_count(),
            saturated_fraction: m.saturated_fraction(),
            histogram: m.importance_histogram(bins),
        })
        .collect()
}

/// `checkpoint,tasks_seen,layer,dim,bases,saturated,saturated_fraction`.
pub fn memory_report_csv(rows: &[(String, usize, Vec<LayerReport>)]) -> Result<Vec<u8>> {
    let mut w = writer(Vec::new());
    w.write_record(["checkpoint", "tasks_seen", "layer", "dim", "bases", "saturated", "saturated_fraction"])?;
    for (name, tasks, layers) in rows {
        for l in layers {
            w.write_record([
                name.clone(),
                tasks.to_string(),
                l.layer.to_string(),
                l.dim.to_string(),
                l.bases.to_string(),
                l.saturated.to_string(),
                num(l.saturated_fraction),
            ])?;
        }
    }
    finish(w)
}

/// `checkpoint,layer,bin_start,bin_end,count` with equal-width bins over
/// `[0, 1]`; λ = 1 falls in the last bin.
pub fn histogram_csv(rows: &[(String, usize, Vec<LayerReport>)]) -> Result<Vec<u8>> {
    let mut w = writer(Vec::new());
    w.write_record(["checkpoint", "layer", "bin_start", "bin_end", "count"])?;
    for (name, _, layers) in rows {
        for l in layers {
            let bins = l.histogram.len();
            for (b, c) in l.histogram.iter().enumerate() {
                w.write_record([
                    name.clone(),
                    l.layer.to_string(),
                    num(b as f64 / bins as f64),
                    num((b + 1) as f64 / bins as f64),
                    c.to_string(),
                ])?;
            }
        }
    }
    finish(w)
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub method: &'a str,
    pub seed: u64,
    pub tasks: usize,
    pub acc: f64,
    /// `null` for a single task.
    pub bwt: Option<f64>,
    pub accuracy: Vec<Vec<f64>>,
    pub epochs_run: &'a [usize],
    pub bases_per_layer: Vec<usize>,
    pub saturated_fraction_per_layer: Vec<f64>,
    pub dataset: &'a str,
    pub config: &'a ExperimentConfig,
}

pub fn summary_json(method: MethodName, cfg: &ExperimentConfig, provenance: &str, res: &RunResult) -> Result<Vec<u8>> {
    let m = compute_metrics(&res.accuracy)?;
    let t = res.accuracy.tasks();
    let summary = Summary {
        method: method.method().name(),
        seed: cfg.seed,
        tasks: t,
        acc: m.acc,
        bwt: m.bwt,
        accuracy: (0..t)
            .map(|i| (0..=i).map(|j| res.accuracy.get(i, j).unwrap_or(f64::NAN)).collect())
            .collect(),
        epochs_run: &res.epochs_run,
        bases_per_layer: res.memory.layers.iter().map(|l| l.len()).collect(),
        saturated_fraction_per_layer: res.memory.layers.iter().map(|l| l.saturated_fraction()).collect(),
        dataset: provenance,
        config: cfg,
    };
    let mut out = serde_json::to_vec_pretty(&summary)?;
    out.push(b'\n');
    Ok(out)
}

/// `method_a,method_b,acc_a,acc_b,acc_diff,bwt_a,bwt_b,bwt_diff,relative_fwt`
/// for every pair in list order; differences are `a − b`.
pub fn comparison_csv(runs: &[(MethodName, &AccuracyMatrix)]) -> Result<Vec<u8>> {
    let mut w = writer(Vec::new());
    w.write_record([
        "method_a", "method_b", "acc_a", "acc_b", "acc_diff", "bwt_a", "bwt_b", "bwt_diff", "relative_fwt",
    ])?;
    for (i, (ma, ra)) in runs.iter().enumerate() {
        for (mb, rb) in &runs[i + 1..] {
            let a = compute_metrics(ra)?;
            let b = compute_metrics(rb)?;
            let bwt_diff = a.bwt.zip(b.bwt).map(|(x, y)| x - y);
            w.write_record([
                ma.method().name().to_string(),
                mb.method().name().to_string(),
                num(a.acc),
                num(b.acc),
                num(a.acc - b.acc),
                opt(a.bwt),
                opt(b.bwt),
                opt(bwt_diff),
                num(compute_relative_fwt(ra, rb)?),
            ])?;
        }
    }
    finish(w)
}

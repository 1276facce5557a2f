//! Runs every configured method on the same seeded task sequence and writes
//! the per-method outputs.
//!
//! Output layout under the output directory:
//!
//! ```text
//! comparison.csv
//! <method>/summary.json
//! <method>/metrics.csv
//! <method>/importance_<layer>.csv
//! <method>/network.sgpn
//! <method>/memory/task_<t>.sgpm
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sgp_core::data::TaskSequence;
use sgp_core::rng::{stream, Stream};
use sgp_core::trainer::{train_continual, RunResult};
use sgp_core::Network;

use crate::checkpoint::{encode_memory, encode_network, MemoryCheckpoint};
use crate::config::{ExperimentConfig, MethodName};
use crate::error::{Error, Result};
use crate::report;

/// Everything a run needs, checked before any training starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub sequence: TaskSequence,
    pub initial: Network,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let sequence = config.load_sequence()?;
    let specs = config.network.layer_specs(sequence.input_shape)?;
    for &m in &config.methods {
        config
            .train_config_for(m)?
            .validate(specs.len(), sequence.tasks.len())
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let initial = Network::new(&specs, &mut stream(config.seed, Stream::Init))?;
    Ok(Prepared {
        config: config.clone(),
        sequence,
        initial,
    })
}

pub fn run_method(p: &Prepared, method: MethodName) -> Result<RunResult> {
    let cfg = p.config.train_config_for(method)?;
    Ok(train_continual(p.initial.clone(), &p.sequence, &cfg)?)
}

/// Files for one method, keyed by path relative to the method directory.
pub fn method_files(p: &Prepared, method: MethodName, res: &RunResult) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = vec![
        (
            PathBuf::from("summary.json"),
            report::summary_json(method, &p.config, &p.sequence.provenance, res)?,
        ),
        (PathBuf::from("metrics.csv"), report::metrics_csv(&res.accuracy)?),
        (PathBuf::from("network.sgpn"), encode_network(&res.net)?),
    ];
    for l in 0..res.memory.layers.len() {
        files.push((
            PathBuf::from(format!("importance_{}.csv", l + 1)),
            report::importance_csv(&res.snapshots, l)?,
        ));
    }
    for (t, snap) in res.snapshots.iter().enumerate() {
        let ckpt = MemoryCheckpoint {
            tasks_seen: t + 1,
            memory: snap.clone(),
        };
        files.push((PathBuf::from(format!("memory/task_{}.sgpm", t + 1)), encode_memory(&ckpt)?));
    }
    Ok(files)
}

/// Writes `files` into a scratch directory next to `target`, then swaps it
/// in with a rename so readers never see a half-written method directory.
pub fn write_dir_atomic(target: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let parent = target.parent().unwrap_or(Path::new("."));
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let scratch = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if scratch.exists() {
        fs::remove_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
    }
    for (rel, bytes) in files {
        let path = scratch.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    if target.exists() {
        fs::remove_dir_all(target).map_err(|e| Error::io(target, e))?;
    }
    fs::rename(&scratch, target).map_err(|e| Error::io(target, e))
}

pub fn write_file_atomic(target: &Path, bytes: &[u8]) -> Result<()> {
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = target.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, target).map_err(|e| Error::io(target, e))
}

#[derive(Debug)]
pub struct Outcome {
    pub method: MethodName,
    pub result: RunResult,
}

/// Runs all methods in parallel, one thread each. A method's directory is
/// written as soon as it finishes; `comparison.csv` only when all succeed.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<Outcome>> {
    let p = prepare(config)?;
    let shared = &p;
    let results: Vec<Result<RunResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = p.config.methods.iter().map(|&m| s.spawn(move || run_method(shared, m))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Format("training thread panicked".into()))))
            .collect()
    });

    let mut outcomes = Vec::new();
    let mut first_err = None;
    for (&method, res) in p.config.methods.iter().zip(results) {
        match res {
            Ok(result) => outcomes.push(Outcome { method, result }),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if outcomes.is_empty() {
        if let Some(e) = first_err {
            return Err(e);
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for o in &outcomes {
        write_dir_atomic(&out_dir.join(o.method.method().name()), &method_files(&p, o.method, &o.result)?)?;
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let runs: Vec<_> = outcomes.iter().map(|o| (o.method, &o.result.accuracy)).collect();
    write_file_atomic(&out_dir.join("comparison.csv"), &report::comparison_csv(&runs)?)?;
    Ok(outcomes)
}

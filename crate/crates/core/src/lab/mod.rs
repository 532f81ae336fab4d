//! Config-driven experiment runner behind the `anosov-lab` binary.
//!
//! A run resolves the map, certifies it unless only `certify` experiments are
//! selected (with the cone angles of the first declared `certify` experiment),
//! and executes the experiments in declared order. Each experiment
//! draws its randomness from a substream keyed by its name, writes CSV tables
//! ending in a `# config_hash=... version=...` line, and contributes one
//! record to `summary.json` in the output directory.

pub mod config;
pub mod experiments;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::{ExperimentKind, ExperimentParams, LabConfig, MapSpec, Tolerances};
pub use experiments::{LIVSHITZ_TOL, RATIO_SLACK, SMOOTH_SLOPE_BAND};

use crate::error::{LabError, Result};
use crate::stats::substream_seed;
use crate::torus_map::{certify_hyperbolicity, CertificateParams};
use config::Experiment;
use experiments::{run_experiment, Context};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SUMMARY_FILE: &str = "summary.json";

/// Process exit code for an error that aborts a run.
pub fn exit_code(err: &LabError) -> u8 {
    match err {
        LabError::Config(_) => 2,
        LabError::CertificationFailed { .. } | LabError::ExpandingMap | LabError::NotHyperbolic => 3,
        _ => 1,
    }
}

fn is_certification_error(err: &LabError) -> bool {
    exit_code(err) == 3
}

/// Which experiments of a config to run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selection {
    /// Only experiments of this kind; a default one when the config has none.
    pub kind: Option<ExperimentKind>,
    pub name: Option<String>,
}

impl Selection {
    pub fn resolve(&self, config: &LabConfig) -> Result<Vec<Experiment>> {
        if let Some(name) = &self.name {
            let e = config
                .experiments
                .iter()
                .find(|e| &e.name == name)
                .ok_or_else(|| LabError::Config(format!("no experiment named `{name}`")))?;
            if let Some(k) = self.kind {
                if e.params.kind() != k {
                    return Err(LabError::Config(format!(
                        "experiment `{name}` is of kind `{}`, not `{}`",
                        e.params.kind().as_str(),
                        k.as_str()
                    )));
                }
            }
            return Ok(vec![e.clone()]);
        }
        match self.kind {
            Some(k) => {
                let chosen: Vec<_> = config.experiments.iter().filter(|e| e.params.kind() == k).cloned().collect();
                Ok(if chosen.is_empty() {
                    vec![Experiment {
                        name: k.as_str().to_string(),
                        params: ExperimentParams::default_for(k),
                    }]
                } else {
                    chosen
                })
            }
            None if config.experiments.is_empty() => Err(LabError::Config("config declares no experiments".into())),
            None => Ok(config.experiments.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub kind: ExperimentKind,
    pub status: Status,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    pub metrics: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub version: String,
    pub map: MapSpec,
    /// One record per selected experiment, in declared order.
    pub experiments: Vec<ExperimentRecord>,
}

impl RunReport {
    pub fn exit_code(&self) -> u8 {
        if self.experiments.iter().all(|e| e.status == Status::Ok) {
            0
        } else {
            1
        }
    }

    pub fn failed(&self) -> Vec<&str> {
        self.experiments
            .iter()
            .filter(|e| e.status == Status::Failed)
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn experiment(&self, name: &str) -> Option<&ExperimentRecord> {
        self.experiments.iter().find(|e| e.name == name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LabError::Config(format!("{}: line {}: {e}", path.display(), e.line())))
    }
}

fn csv_trailer(hash: &str) -> String {
    format!("# config_hash={hash} version={VERSION}\n")
}

/// Runs the selected experiments with the current rayon pool and writes all
/// outputs under `config.out_dir`.
pub fn run(config: &LabConfig, selection: &Selection) -> Result<RunReport> {
    let f = config.map.build().map_err(|e| match e {
        LabError::Config(m) => LabError::Config(m),
        other => LabError::Config(format!("map: {other}")),
    })?;
    let chosen = selection.resolve(config)?;
    if chosen.iter().any(|e| e.params.kind() != ExperimentKind::Certify) {
        // cone angles of the first declared `certify` experiment, if any
        let cones = config
            .experiments
            .iter()
            .find_map(|e| match &e.params {
                ExperimentParams::Certify(c) => Some(*c),
                _ => None,
            })
            .unwrap_or_default();
        certify_hyperbolicity(
            &f,
            &CertificateParams {
                grid_n: config.tolerances.cert_grid,
                theta_u: cones.theta_u,
                theta_s: cones.theta_s,
            },
        )?;
    }
    let hash = config.config_hash();
    std::fs::create_dir_all(&config.out_dir)?;
    let mut records = Vec::with_capacity(chosen.len());
    for e in &chosen {
        let ctx = Context {
            f: &f,
            tol: &config.tolerances,
            seed: substream_seed(config.seed, &e.name),
        };
        let start = Instant::now();
        let result = run_experiment(&ctx, &e.params);
        let wall_time_s = start.elapsed().as_secs_f64();
        let record = match result {
            Ok(out) => {
                let mut outputs = Vec::with_capacity(out.tables.len());
                for (suffix, body) in out.tables {
                    let path = config.out_dir.join(format!("{}{suffix}.csv", e.name));
                    std::fs::write(&path, body + &csv_trailer(&hash))?;
                    outputs.push(path);
                }
                ExperimentRecord {
                    name: e.name.clone(),
                    kind: e.params.kind(),
                    status: Status::Ok,
                    wall_time_s,
                    outputs,
                    metrics: out.metrics,
                    error: None,
                }
            }
            Err(err) if is_certification_error(&err) => return Err(err),
            Err(err) => ExperimentRecord {
                name: e.name.clone(),
                kind: e.params.kind(),
                status: Status::Failed,
                wall_time_s,
                outputs: Vec::new(),
                metrics: json!({}),
                error: Some(err.to_string()),
            },
        };
        records.push(record);
    }
    let report = RunReport {
        config_hash: hash,
        version: VERSION.to_string(),
        map: config.map.clone(),
        experiments: records,
    };
    std::fs::write(config.out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Runs inside a dedicated pool of `config.threads` threads (0: rayon's
/// default), so concurrent runs do not share the global pool.
pub fn run_with_threads(config: &LabConfig, selection: &Selection) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| LabError::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run(config, selection))
}

/// One document over several run summaries, with the rigidity and
/// bounded-density verdicts of each map.
pub fn merge_reports(reports: &[RunReport]) -> Value {
    let first_metric = |r: &RunReport, kind: ExperimentKind, key: &str| {
        r.experiments
            .iter()
            .find(|e| e.kind == kind && e.status == Status::Ok)
            .map(|e| e.metrics[key].clone())
            .unwrap_or(Value::Null)
    };
    let families: Vec<Value> = reports
        .iter()
        .map(|r| {
            let theorem_b = first_metric(r, ExperimentKind::Ubd, "theorem_b");
            json!({
                "config_hash": r.config_hash,
                "map": r.map,
                "theorem_a": first_metric(r, ExperimentKind::Rigidity, "theorem_a"),
                "theorem_b": if theorem_b.is_null() { Value::Null } else { theorem_b["verdict"].clone() },
                "failed": r.failed(),
                "experiments": r.experiments.iter().map(|e| json!({
                    "name": e.name,
                    "kind": e.kind,
                    "status": e.status,
                    "metrics": e.metrics,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "version": VERSION,
        "families": families,
    })
}

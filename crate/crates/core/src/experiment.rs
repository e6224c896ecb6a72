//! Experiment configuration and the end-to-end run pipeline.
//!
//! A run is fully described by its [`ExperimentConfig`]. The manifest
//! written next to the outputs embeds the config, so a manifest can be fed
//! back as a config to reproduce the run.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Binding;
use crate::engine::{self, EngineConfig, EngineError, Job, RunOutput};
use crate::metrics::{Summary, DEFAULT_WINDOW_NS};
use crate::network::{Network, NetworkError, Routing, TopologyConfig};
use crate::placement::{place, Placement, PlacementError, Policy};
use crate::rng::{stream, workload_seed, Stream};
use crate::skeleton::registry::Instance;
use crate::skeleton::{skeletonize, RegistryError, SkeletonProgram};
use crate::workloads::shipped_registry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// Shipped workload name, or a path to a `.u` file.
    pub workload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks: Option<u32>,
    #[serde(default, skip_serializing_if = "Binding::is_empty")]
    pub params: Binding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_window() -> u64 {
    DEFAULT_WINDOW_NS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    pub routing: Routing,
    pub placement: Policy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<u64>,
    pub jobs: Vec<JobConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub window_ns: u64,
    /// Overrides the topology's packet size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_size: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("job {job}: {source}")]
    Workload {
        job: String,
        #[source]
        source: RegistryError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::Network(_)
            | ExperimentError::Placement(_)
            | ExperimentError::Workload { .. } => 2,
            ExperimentError::Engine(EngineError::Deadlock { .. }) => 3,
            ExperimentError::Engine(_) | ExperimentError::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub trace_hash: String,
    pub placement_fallbacks: Vec<String>,
    pub outputs: Vec<String>,
    pub config: ExperimentConfig,
}

/// Everything a run produced, before anything is written to disk.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub labels: Vec<String>,
    pub placement: Placement,
    pub output: RunOutput,
    pub network: Network,
    pub summary: Summary,
}

impl ExperimentConfig {
    /// Parses a config file, or the `config` member of a manifest.
    pub fn from_json(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let value = match value.get("config") {
            Some(inner) if value.get("trace_hash").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            ExperimentError::Config(m) => ExperimentError::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        // Workload paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        for job in &mut cfg.jobs {
            if job.workload.ends_with(".u") && Path::new(&job.workload).is_relative() {
                let p = base.join(&job.workload);
                if p.exists() {
                    job.workload = p.to_string_lossy().into_owned();
                }
            }
        }
        Ok(cfg)
    }

    fn topology(&self) -> TopologyConfig {
        let mut t = self.topology.clone();
        if let Some(p) = self.packet_size {
            t.packet_size = p;
        }
        t
    }

    /// Job labels: explicit ones, else the workload name, numbered when
    /// a name repeats.
    pub fn labels(&self) -> Result<Vec<String>, ExperimentError> {
        let base: Vec<String> = self
            .jobs
            .iter()
            .map(|j| {
                j.label.clone().unwrap_or_else(|| {
                    Path::new(&j.workload).file_stem().map_or(j.workload.clone(), |s| s.to_string_lossy().into_owned())
                })
            })
            .collect();
        let mut labels = Vec::new();
        for (i, b) in base.iter().enumerate() {
            let repeated = self.jobs[i].label.is_none() && base.iter().filter(|x| *x == b).count() > 1;
            labels.push(if repeated { format!("{b}-{i}") } else { b.clone() });
        }
        let unique: BTreeSet<_> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(ExperimentError::Config("job labels must be unique".into()));
        }
        Ok(labels)
    }

    /// Builds every job's skeleton without running anything.
    pub fn programs(&self) -> Result<Vec<SkeletonProgram>, ExperimentError> {
        if self.jobs.is_empty() {
            return Err(ExperimentError::Config("jobs: at least one job is required".into()));
        }
        if self.window_ns == 0 {
            return Err(ExperimentError::Config("window_ns must be positive".into()));
        }
        let labels = self.labels()?;
        let registry = shipped_registry();
        let mut out = Vec::new();
        for (i, job) in self.jobs.iter().enumerate() {
            let label = &labels[i];
            let seed = workload_seed(self.seed, i);
            let program = if job.workload.ends_with(".u") {
                let werr = |source: RegistryError| ExperimentError::Workload { job: label.clone(), source };
                let path = Path::new(&job.workload);
                let src = fs::read_to_string(path).map_err(io_err(path))?;
                let ranks = job.ranks.ok_or_else(|| {
                    ExperimentError::Config(format!("jobs[{i}].ranks is required for workload files"))
                })?;
                let parsed = crate::dsl::parse_source(&src).map_err(|e| werr(e.into()))?;
                let v = crate::dsl::check(&parsed, ranks, &job.params).map_err(|e| werr(e.into()))?.with_seed(seed);
                skeletonize(label, &v).map_err(|crate::skeleton::SkeletonError::Dsl(e)| werr(e.into()))?
            } else {
                registry
                    .build(&job.workload, &Instance { ranks: job.ranks, params: job.params.clone(), seed })
                    .map_err(|source| ExperimentError::Workload { job: label.clone(), source })?
            };
            out.push(program);
        }
        Ok(out)
    }

    /// Builds, places and simulates the experiment.
    pub fn execute(&self, trace: bool) -> Result<RunResult, ExperimentError> {
        let topology = self.topology();
        let mut network = Network::build(&topology)?;
        let programs = self.programs()?;
        let labels = self.labels()?;
        let sizes: Vec<(String, u32)> = labels.iter().cloned().zip(programs.iter().map(|p| p.num_tasks())).collect();
        let placement = place(self.placement, &sizes, &network, &mut stream(self.seed, Stream::Placement))?;
        let jobs: Vec<Job> = programs
            .into_iter()
            .zip(&placement.maps)
            .zip(&labels)
            .map(|((program, nodes), label)| Job { label: label.clone(), program, nodes: nodes.clone() })
            .collect();
        let cfg = EngineConfig {
            routing: self.routing,
            seed: self.seed,
            end_time: self.end_time,
            window_ns: self.window_ns,
            trace,
        };
        let output = engine::run(&jobs, &mut network, cfg)?;
        let summary = output.metrics.summarize();
        Ok(RunResult { labels, placement, output, network, summary })
    }

    /// Runs the experiment and writes its outputs into `dir`, or the
    /// configured output directory.
    pub fn run_to_dir(&self, dir: Option<&Path>, trace: bool) -> Result<(PathBuf, RunResult), ExperimentError> {
        let dir = match (dir, &self.output_dir) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(d)) => d.clone(),
            (None, None) => return Err(ExperimentError::Config("output_dir is not set".into())),
        };
        let result = self.execute(trace)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let m = &result.output.metrics;
        let mut files: Vec<(&str, String)> = vec![
            ("latency_box.csv", m.latency_box_csv()),
            ("comm_time.csv", m.comm_time_csv()),
            ("router_windows.csv", m.router_windows_csv()),
            ("link_load.csv", m.link_load_csv()),
            ("placement.csv", result.placement.to_csv(&result.labels, &result.network)),
            ("log.csv", m.log_csv()),
            ("summary.json", serde_json::to_string_pretty(&result.summary).unwrap() + "\n"),
        ];
        if let Some(lines) = &result.output.trace {
            let mut t = String::from(engine::TRACE_HEADER);
            t.push('\n');
            for l in lines {
                t.push_str(l);
                t.push('\n');
            }
            files.push(("trace.csv", t));
        }
        let manifest = Manifest {
            tool: "dfsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            trace_hash: result.output.trace_hash.clone(),
            placement_fallbacks: result.placement.fallbacks.clone(),
            outputs: files.iter().map(|(n, _)| n.to_string()).collect(),
            config: self.clone(),
        };
        files.push(("manifest.json", serde_json::to_string_pretty(&manifest).unwrap() + "\n"));
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io_err(&p))?;
        }
        Ok((dir, result))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"{
        "topology": {"variant": "1d", "num_groups": 3, "routers_per_group": 4,
                     "nodes_per_router": 2, "global_links_per_router": 1},
        "routing": "adaptive",
        "placement": "rr",
        "seed": 3,
        "jobs": [
            {"workload": "cosmoflow", "ranks": 4, "params": {"iters": 1, "interval": 10}},
            {"workload": "ur", "ranks": 6, "params": {"duration": 3000}}
        ]
    }"#;

    #[test]
    fn parses_and_runs() {
        let cfg = ExperimentConfig::from_json(MINI).unwrap();
        assert_eq!(cfg.window_ns, DEFAULT_WINDOW_NS);
        let r = cfg.execute(false).unwrap();
        assert_eq!(r.labels, ["cosmoflow", "ur"]);
        for a in &r.summary.apps {
            assert_eq!(a.totals.messages_injected, a.totals.messages_delivered);
        }
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let err = ExperimentConfig::from_json(&MINI.replace("\"seed\"", "\"sede\"")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn too_many_ranks_is_a_config_error() {
        let cfg = ExperimentConfig::from_json(&MINI.replace("\"ranks\": 6", "\"ranks\": 600")).unwrap();
        let err = cfg.execute(false).unwrap_err();
        assert!(matches!(err, ExperimentError::Placement(PlacementError::InsufficientNodes { .. })));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_workload() {
        let cfg = ExperimentConfig::from_json(&MINI.replace("cosmoflow", "hpl")).unwrap();
        let err = cfg.execute(false).unwrap_err();
        assert!(err.to_string().contains("hpl"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn manifest_reproduces_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(MINI).unwrap();
        let (out, _) = cfg.run_to_dir(Some(&dir.path().join("a")), false).unwrap();
        let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
        let again = ExperimentConfig::from_json(&manifest).unwrap();
        assert_eq!(again, cfg);
        let (out2, _) = again.run_to_dir(Some(&dir.path().join("b")), false).unwrap();
        for f in ["latency_box.csv", "comm_time.csv", "router_windows.csv", "link_load.csv", "placement.csv"] {
            assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{f}");
        }
    }
}

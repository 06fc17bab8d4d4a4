//! Scenario configuration files and the workflows behind the `dlperf`
//! binary.
//!
//! A config is TOML with `schema_version = 1`. Bandwidths are in GiB/s,
//! sizes in MiB, durations in seconds. See `configs/` for examples.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;

use crate::analytic::{
    io_time, h2d_time, iter_time_overlapped, iter_time_pipelined_io, iter_time_sequential, rank_bottlenecks,
    speedup_overlapped, speedup_sequential_comm, Bottleneck, EstimateMode, IterationEstimate, Phase, SpeedupReport,
};
use crate::comm::{layer_comm_times, modeled_comm_time, CommMethod, CommModelSpec};
use crate::error::{Error, Result};
use crate::model::{
    fmt_secs, validate_layer_profile, ClusterSpec, Framework, HostMemory, LayerProfile, MultiGpuRun, Network,
    OverlapCase, OverlapPolicy, PhaseProfile, PrefetchMode, ScalingScenario, SingleGpuRun, Validation, WorkloadSpec,
};
use crate::reference::{missing_cells, validate_model, CrossCheck, Metric, Prediction, ReferenceRecord, ScenarioId, ValidationReport};
use crate::sim::{simulate_iteration, steady_state_iter_time, FrontPhases, SimTrace, SteadyState};
use crate::units::{gib_per_s, mib, IMAGENET_SAMPLE_BYTES};

pub const SCHEMA_VERSION: i64 = 1;

/// Iterations simulated for steady-state figures.
pub const STEADY_STATE_ITERS: usize = 50;

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<toml::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[allow(dead_code)]
    schema_version: i64,
    name: Option<String>,
    framework: Option<Framework>,
    network: Option<Network>,
    cluster: Option<RawCluster>,
    workload: Option<RawWorkload>,
    policy: Option<RawPolicy>,
    phases: Option<RawPhases>,
    #[serde(default)]
    layers: Vec<RawLayer>,
    comm: Option<RawComm>,
    #[serde(default)]
    scale: Vec<RawScale>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCluster {
    nodes: Option<u32>,
    gpus_per_node: Option<u32>,
    b_cache_gib_s: Option<f64>,
    b_disk_gib_s: Option<f64>,
    b_pcie_pinned_gib_s: Option<f64>,
    b_pcie_pageable_gib_s: Option<f64>,
    b_net_gib_s: Option<f64>,
    net_latency_s: Option<f64>,
    intra_latency_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    per_gpu_batch: u64,
    sample_bytes: Option<f64>,
    grad_mib: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    io_prefetch: Option<PrefetchMode>,
    prefetch_depth: Option<u32>,
    comm_overlap: Option<bool>,
    h2d_memory: Option<HostMemory>,
    buffer_mib: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPhases {
    t_io: Option<f64>,
    t_h2d: Option<f64>,
    t_f: Option<f64>,
    t_b: Option<f64>,
    t_u: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    t_b: f64,
    #[serde(default)]
    t_comm: f64,
    #[serde(default)]
    t_u: f64,
    grad_mib: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComm {
    method: CommMethod,
    efficiency: Option<f64>,
    latency_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    gpus: u32,
    t_io: Option<f64>,
    t_comm: Option<f64>,
    layer_comm: Option<Vec<f64>>,
}

/// Measurements supplied for one GPU count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEntry {
    pub gpus: u32,
    /// Per-node I/O time at this scale.
    pub t_io: Option<f64>,
    /// Aggregate gradient aggregation time.
    pub t_comm: Option<f64>,
    /// Per-layer aggregation times, layer 1 first.
    pub layer_comm: Option<Vec<f64>>,
}

/// A fully resolved scenario: every single-GPU phase is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub framework: Option<Framework>,
    pub network: Option<Network>,
    pub cluster: ClusterSpec,
    pub workload: Option<WorkloadSpec>,
    pub policy: OverlapPolicy,
    /// Single-GPU phases; `t_comm` is zero.
    pub phases: PhaseProfile,
    pub layers: Option<LayerProfile>,
    pub comm: CommModelSpec,
    pub scales: Vec<ScaleEntry>,
}

struct Resolver<'a> {
    source: &'a str,
}

impl Resolver<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::config(self.source, message)
    }

    fn check(&self, v: Validation) -> Result<()> {
        if v.is_ok() {
            return Ok(());
        }
        let msg = v.violations.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ");
        Err(self.err(msg))
    }

    fn toml_error(&self, text: &str, e: toml::de::Error) -> Error {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let message = e.message().replace('\n', " ");
        match line {
            Some(l) => self.err(format!("line {l}: {message}")),
            None => self.err(message),
        }
    }

    fn resolve(&self, text: &str) -> Result<ScenarioConfig> {
        let probe: VersionProbe = toml::from_str(text).map_err(|e| self.toml_error(text, e))?;
        match probe.schema_version {
            None => return Err(self.err("missing schema_version")),
            Some(toml::Value::Integer(SCHEMA_VERSION)) => {}
            Some(other) => {
                return Err(self.err(format!(
                    "unsupported schema_version {other}, this build reads {SCHEMA_VERSION}"
                )))
            }
        }
        let raw: RawConfig = toml::from_str(text).map_err(|e| self.toml_error(text, e))?;

        let cluster = self.cluster(raw.cluster.unwrap_or_default())?;
        let grad_given = raw.workload.as_ref().is_some_and(|w| w.grad_mib.is_some());
        let workload = raw.workload.map(|w| WorkloadSpec {
            per_gpu_batch: w.per_gpu_batch,
            sample_bytes: w.sample_bytes.unwrap_or(IMAGENET_SAMPLE_BYTES),
            grad_bytes: w.grad_mib.map(mib).unwrap_or(0.0),
        });
        if let Some(w) = &workload {
            if w.per_gpu_batch == 0 {
                return Err(self.err("workload.per_gpu_batch must be at least 1"));
            }
            self.check(w.validate())?;
        }

        let policy = self.policy(raw.framework, raw.policy.unwrap_or_default())?;
        let layers = self.layers(&raw.layers)?;
        let phases = self.phases(raw.phases, layers.as_ref(), workload.as_ref(), &policy, &cluster)?;
        if let Some(l) = &layers {
            self.check(validate_layer_profile(l, Some(&phases)))?;
        }

        let comm = match raw.comm {
            None => CommModelSpec::default(),
            Some(c) => CommModelSpec {
                method: c.method,
                efficiency: c.efficiency.unwrap_or(1.0),
                latency: c.latency_s,
            },
        };
        comm.validate().map_err(|e| self.err(format!("comm: {e}")))?;
        if comm.method != CommMethod::Measured {
            let layer_sizes = layers
                .as_ref()
                .is_some_and(|l| l.layers.iter().all(|x| x.grad_bytes.is_some()));
            if !grad_given && !layer_sizes {
                return Err(self.err("a modeled comm method needs workload.grad_mib or grad_mib on every layer"));
            }
        }

        let scales = self.scales(raw.scale, layers.as_ref(), &cluster)?;
        Ok(ScenarioConfig {
            name: raw.name.unwrap_or_else(|| self.source.to_string()),
            framework: raw.framework,
            network: raw.network,
            cluster,
            workload,
            policy,
            phases,
            layers,
            comm,
            scales,
        })
    }

    fn cluster(&self, c: RawCluster) -> Result<ClusterSpec> {
        let d = ClusterSpec::default();
        let bw = |v: Option<f64>, default: f64| v.map(gib_per_s).unwrap_or(default);
        let out = ClusterSpec {
            nodes: c.nodes.unwrap_or(d.nodes),
            gpus_per_node: c.gpus_per_node.unwrap_or(d.gpus_per_node),
            b_cache: bw(c.b_cache_gib_s, d.b_cache),
            b_disk: bw(c.b_disk_gib_s, d.b_disk),
            b_pcie_pinned: bw(c.b_pcie_pinned_gib_s, d.b_pcie_pinned),
            b_pcie_pageable: bw(c.b_pcie_pageable_gib_s, d.b_pcie_pageable),
            b_net: bw(c.b_net_gib_s, d.b_net),
            net_latency: c.net_latency_s.unwrap_or(d.net_latency),
            intra_latency: c.intra_latency_s.unwrap_or(d.intra_latency),
        };
        self.check(out.validate())?;
        Ok(out)
    }

    fn policy(&self, framework: Option<Framework>, p: RawPolicy) -> Result<OverlapPolicy> {
        let base = framework.map(OverlapPolicy::for_framework).unwrap_or_else(OverlapPolicy::sequential);
        let io_prefetch = p.io_prefetch.unwrap_or(base.io_prefetch);
        let default_depth = if io_prefetch == PrefetchMode::None { 0 } else { base.prefetch_depth.max(1) };
        let out = OverlapPolicy {
            io_prefetch,
            prefetch_depth: p.prefetch_depth.unwrap_or(default_depth),
            comm_overlap: p.comm_overlap.unwrap_or(base.comm_overlap),
            h2d_memory: p.h2d_memory.unwrap_or(base.h2d_memory),
            buffer_bytes: p.buffer_mib.map(mib).or(base.buffer_bytes),
        };
        self.check(out.validate())?;
        Ok(out)
    }

    fn layers(&self, raw: &[RawLayer]) -> Result<Option<LayerProfile>> {
        if raw.is_empty() {
            return Ok(None);
        }
        let t_b: Vec<f64> = raw.iter().map(|l| l.t_b).collect();
        let t_comm: Vec<f64> = raw.iter().map(|l| l.t_comm).collect();
        let t_u: Vec<f64> = raw.iter().map(|l| l.t_u).collect();
        let mut profile = LayerProfile::from_times(&t_b, &t_comm, &t_u);
        let sizes: Vec<f64> = raw.iter().filter_map(|l| l.grad_mib).map(mib).collect();
        if !sizes.is_empty() {
            if sizes.len() != raw.len() {
                return Err(self.err("grad_mib must be given on every layer or on none"));
            }
            profile = profile.with_grad_bytes(&sizes);
        }
        self.check(validate_layer_profile(&profile, None))?;
        Ok(Some(profile))
    }

    fn phases(
        &self,
        raw: Option<RawPhases>,
        layers: Option<&LayerProfile>,
        workload: Option<&WorkloadSpec>,
        policy: &OverlapPolicy,
        cluster: &ClusterSpec,
    ) -> Result<PhaseProfile> {
        let raw = raw.ok_or_else(|| self.err("missing [phases] table (t_f is required)"))?;
        let t_f = raw.t_f.ok_or_else(|| self.err("phases.t_f is required"))?;
        let t_io = match (raw.t_io, workload) {
            (Some(t), _) => t,
            (None, Some(w)) => io_time(w.per_gpu_batch, 1, w.sample_bytes, cluster.b_cache)?,
            (None, None) => return Err(self.err("phases.t_io is required without a [workload] table")),
        };
        let t_h2d = match (raw.t_h2d, workload) {
            (Some(t), _) => t,
            (None, Some(w)) => h2d_time(w.per_gpu_batch as f64 * w.sample_bytes, policy.h2d_memory, cluster)?,
            (None, None) => return Err(self.err("phases.t_h2d is required without a [workload] table")),
        };
        let t_b = raw
            .t_b
            .or(layers.map(LayerProfile::backward_total))
            .ok_or_else(|| self.err("phases.t_b is required without [[layers]]"))?;
        let t_u = raw
            .t_u
            .or(layers.map(LayerProfile::update_total))
            .ok_or_else(|| self.err("phases.t_u is required without [[layers]]"))?;
        let p = PhaseProfile::single_gpu(t_io, t_h2d, t_f, t_b, t_u);
        self.check(p.validate())?;
        Ok(p)
    }

    fn scales(&self, raw: Vec<RawScale>, layers: Option<&LayerProfile>, cluster: &ClusterSpec) -> Result<Vec<ScaleEntry>> {
        let mut out: Vec<ScaleEntry> = Vec::with_capacity(raw.len());
        for (k, s) in raw.into_iter().enumerate() {
            let at = format!("scale[{k}]");
            check_gpus(s.gpus, cluster).map_err(|e| self.err(format!("{at}: {e}")))?;
            if out.iter().any(|e| e.gpus == s.gpus) {
                return Err(self.err(format!("{at}: duplicate entry for {} GPUs", s.gpus)));
            }
            for (name, v) in [("t_io", s.t_io), ("t_comm", s.t_comm)] {
                if let Some(v) = v {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(self.err(format!("{at}.{name}: must be non-negative seconds, got {v}")));
                    }
                }
            }
            if let Some(lc) = &s.layer_comm {
                let n = layers.map_or(0, LayerProfile::len);
                if lc.len() != n {
                    return Err(self.err(format!("{at}.layer_comm: expected {n} values (one per layer), got {}", lc.len())));
                }
                if lc.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(self.err(format!("{at}.layer_comm: values must be non-negative seconds")));
                }
            }
            out.push(ScaleEntry {
                gpus: s.gpus,
                t_io: s.t_io,
                t_comm: s.t_comm,
                layer_comm: s.layer_comm,
            });
        }
        Ok(out)
    }
}

fn check_gpus(gpus: u32, cluster: &ClusterSpec) -> Result<()> {
    if gpus < 1 || gpus > cluster.total_gpus() {
        return Err(Error::InvalidParameter {
            name: "gpus",
            reason: format!(
                "{gpus} GPUs requested, the cluster has {} x {}",
                cluster.nodes, cluster.gpus_per_node
            ),
        });
    }
    Ok(())
}

/// Inputs of one scenario evaluated at a given GPU count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleInputs {
    pub gpus: u32,
    pub nodes: u32,
    /// Per-node I/O time.
    pub t_io: f64,
    pub t_comm: f64,
    /// Layer profile with this scale's aggregation times.
    pub layers: Option<LayerProfile>,
    pub batch_bytes: Option<f64>,
}

impl ScaleInputs {
    pub fn front(&self, phases: &PhaseProfile) -> FrontPhases {
        FrontPhases {
            t_io: self.t_io,
            t_h2d: phases.t_h2d,
            t_f: phases.t_f,
            batch_bytes: self.batch_bytes,
        }
    }
}

/// Iteration estimate and speedup at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEstimate {
    pub inputs: ScaleInputs,
    pub estimate: IterationEstimate,
    pub speedup: SpeedupReport,
    pub bottlenecks: Vec<Bottleneck>,
}

impl ScaleEstimate {
    pub fn exposed_comm(&self) -> f64 {
        self.estimate.term(Phase::Comm)
    }
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        Resolver { source }.resolve(text)
    }

    /// GPU counts listed in the config, or a single GPU when none are.
    pub fn scale_list(&self) -> Vec<u32> {
        if self.scales.is_empty() {
            vec![1]
        } else {
            self.scales.iter().map(|s| s.gpus).collect()
        }
    }

    fn entry(&self, gpus: u32) -> Option<&ScaleEntry> {
        self.scales.iter().find(|s| s.gpus == gpus)
    }

    /// Scenario id for `gpus` when framework and network are set.
    pub fn scenario_id(&self, gpus: u32) -> Option<ScenarioId> {
        Some(ScenarioId {
            framework: self.framework?,
            network: self.network?,
            gpus,
            nodes: self.cluster.nodes_for(gpus),
        })
    }

    /// Resolves I/O and aggregation inputs at `gpus`. Measured scale
    /// entries take precedence over models.
    pub fn inputs_at(&self, gpus: u32) -> Result<ScaleInputs> {
        check_gpus(gpus, &self.cluster)?;
        let entry = self.entry(gpus);
        let local = self.cluster.local_gpus(gpus);
        let t_io = match (entry.and_then(|e| e.t_io), &self.workload) {
            (Some(t), _) => t,
            (None, Some(w)) if gpus > 1 => io_time(w.per_gpu_batch, local, w.sample_bytes, self.cluster.b_cache)?,
            _ => self.phases.t_io * local as f64,
        };
        let batch_bytes = self.workload.map(|w| w.batch_bytes_per_node(local));
        let modeled = self.comm.method != CommMethod::Measured;

        let layers = match &self.layers {
            None => None,
            Some(l) if gpus == 1 => Some(l.with_comm_times(std::iter::repeat(0.0))),
            Some(l) => Some(match entry.and_then(|e| e.layer_comm.as_ref()) {
                Some(lc) => l.with_comm_times(lc.iter().copied()),
                None if modeled => layer_comm_times(l, &self.comm, &self.cluster, gpus)?,
                None => l.clone(),
            }),
        };

        let t_comm = if gpus == 1 {
            0.0
        } else if let Some(t) = entry.and_then(|e| e.t_comm) {
            t
        } else if let (true, Some(l)) = (modeled, layers.as_ref().filter(|l| l.layers.iter().all(|x| x.grad_bytes.is_some()))) {
            l.comm_total()
        } else if let (true, Some(w)) = (modeled, &self.workload) {
            modeled_comm_time(w.grad_bytes, &self.comm, &self.cluster, gpus)?.unwrap_or(0.0)
        } else if let Some(l) = &layers {
            l.comm_total()
        } else {
            return Err(Error::InvalidParameter {
                name: "t_comm",
                reason: format!("no aggregation time for {gpus} GPUs: give scale.t_comm, [[layers]] t_comm or a comm model"),
            });
        };

        Ok(ScaleInputs {
            gpus,
            nodes: self.cluster.nodes_for(gpus),
            t_io,
            t_comm,
            layers,
            batch_bytes,
        })
    }

    /// Picks the closed form by policy: pipelined aggregation uses the
    /// per-layer overlap forms, otherwise I/O prefetch decides between the
    /// pipelined and the sequential form.
    pub fn estimate_at(&self, gpus: u32) -> Result<ScaleEstimate> {
        let inputs = self.inputs_at(gpus)?;
        let single = SingleGpuRun {
            t_io: self.phases.t_io,
            phases: self.phases,
        };
        let (estimate, speedup) = if self.policy.comm_overlap && gpus > 1 {
            let layers = inputs
                .layers
                .clone()
                .ok_or(Error::MissingLayers("comm_overlap needs [[layers]] beyond one GPU"))?;
            let est = iter_time_overlapped(inputs.t_io, self.phases.t_h2d, self.phases.t_f, &layers)?;
            let scenario = ScalingScenario {
                single,
                multi: MultiGpuRun {
                    gpus,
                    t_io: inputs.t_io,
                    t_comm: layers.comm_total(),
                    layers: Some(layers),
                },
            };
            let s = speedup_overlapped(&scenario, self.phases.t_h2d, self.phases.t_f)?;
            (est, s)
        } else {
            let p = self.phases.with_io(inputs.t_io).with_comm(inputs.t_comm);
            let est = if self.policy.prefetches(inputs.batch_bytes) {
                iter_time_pipelined_io(&p)
            } else {
                iter_time_sequential(&p)
            };
            let scenario = ScalingScenario {
                single,
                multi: MultiGpuRun {
                    gpus,
                    t_io: inputs.t_io,
                    t_comm: inputs.t_comm,
                    layers: None,
                },
            };
            (est, speedup_sequential_comm(&scenario)?)
        };
        let bottlenecks = rank_bottlenecks(&estimate);
        Ok(ScaleEstimate {
            inputs,
            estimate,
            speedup,
            bottlenecks,
        })
    }

    /// Layer profile the simulator runs at this scale.
    fn sim_layers(&self, inputs: &ScaleInputs) -> LayerProfile {
        inputs
            .layers
            .clone()
            .unwrap_or_else(|| LayerProfile::aggregate(&self.phases.with_comm(inputs.t_comm)))
    }

    pub fn simulate_at(&self, gpus: u32) -> Result<SimulationRun> {
        let inputs = self.inputs_at(gpus)?;
        let layers = self.sim_layers(&inputs);
        let front = inputs.front(&self.phases);
        let trace = simulate_iteration(&front, &layers, &self.policy)?;
        let steady = steady_state_iter_time(&front, &layers, &self.policy, STEADY_STATE_ITERS)?;
        let analytic = match self.estimate_at(gpus) {
            Ok(e) => Some(e.estimate),
            Err(Error::IrregularOverlap) => None,
            Err(e) => return Err(e),
        };
        Ok(SimulationRun {
            inputs,
            trace,
            steady,
            analytic,
        })
    }

    /// Copy with per-GPU batch `m`; batch-proportional phases scale by
    /// `m / m0`, update and aggregation times stay fixed.
    pub fn with_batch(&self, m: u64) -> Result<ScenarioConfig> {
        let w = self.workload.ok_or(Error::InvalidParameter {
            name: "batch",
            reason: "batch sweep needs a [workload] table".into(),
        })?;
        if m == 0 {
            return Err(Error::InvalidParameter {
                name: "batch",
                reason: "batch must be at least 1".into(),
            });
        }
        let r = m as f64 / w.per_gpu_batch as f64;
        let mut out = self.clone();
        out.workload = Some(WorkloadSpec { per_gpu_batch: m, ..w });
        let p = &mut out.phases;
        p.t_io *= r;
        p.t_h2d *= r;
        p.t_f *= r;
        p.t_b *= r;
        if let Some(l) = &mut out.layers {
            for layer in &mut l.layers {
                layer.t_b *= r;
            }
            out.phases.t_b = l.backward_total();
        }
        for s in &mut out.scales {
            if let Some(t) = &mut s.t_io {
                *t *= r;
            }
        }
        Ok(out)
    }
}

/// Single-iteration schedule and steady-state run at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub inputs: ScaleInputs,
    pub trace: SimTrace,
    pub steady: SteadyState,
    /// Closed-form estimate for the same inputs; `None` when irregular.
    pub analytic: Option<IterationEstimate>,
}

/// Estimates at `scales`, or at every configured scale.
pub fn run_estimate(config: &ScenarioConfig, scales: Option<&[u32]>) -> Result<Vec<ScaleEstimate>> {
    let list = scales.map(<[u32]>::to_vec).unwrap_or_else(|| config.scale_list());
    list.into_iter().map(|g| config.estimate_at(g)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepDimension {
    Gpus,
    /// Network bandwidth in GiB/s.
    BNet,
    /// Per-GPU batch size.
    Batch,
    /// All-reduce efficiency.
    Efficiency,
}

impl SweepDimension {
    pub fn name(self) -> &'static str {
        match self {
            SweepDimension::Gpus => "gpus",
            SweepDimension::BNet => "b_net",
            SweepDimension::Batch => "batch",
            SweepDimension::Efficiency => "efficiency",
        }
    }
}

impl fmt::Display for SweepDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gpus" => Ok(SweepDimension::Gpus),
            "b_net" | "bnet" => Ok(SweepDimension::BNet),
            "batch" | "m" => Ok(SweepDimension::Batch),
            "efficiency" => Ok(SweepDimension::Efficiency),
            _ => Err(format!("unknown sweep dimension {s:?} (gpus, b_net, batch, efficiency)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub gpus: u32,
    pub iter_time: f64,
    pub speedup: f64,
    pub efficiency: f64,
    pub exposed_comm: f64,
}

fn whole(dim: SweepDimension, v: f64) -> Result<u64> {
    if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        Err(Error::InvalidParameter {
            name: "values",
            reason: format!("{dim} values must be positive integers, got {v}"),
        })
    }
}

/// Varies one input over `values` with everything else fixed. Non-GPU
/// dimensions are evaluated at `gpus`, defaulting to the last configured
/// scale. Rows follow the order of `values`.
pub fn run_sweep(config: &ScenarioConfig, dim: SweepDimension, values: &[f64], gpus: Option<u32>) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: "sweep needs at least one value".into(),
        });
    }
    let fixed = gpus.unwrap_or_else(|| *config.scale_list().last().expect("scale list is never empty"));
    match dim {
        SweepDimension::BNet | SweepDimension::Efficiency if config.comm.method == CommMethod::Measured => {
            return Err(Error::InvalidParameter {
                name: "dimension",
                reason: format!("{dim} sweep needs a modeled comm method, the config uses measured times"),
            })
        }
        SweepDimension::Efficiency if config.comm.method != CommMethod::AllreduceRing => {
            return Err(Error::InvalidParameter {
                name: "dimension",
                reason: "efficiency sweep applies to the ring all-reduce model".into(),
            })
        }
        SweepDimension::Batch if config.workload.is_none() => {
            return Err(Error::InvalidParameter {
                name: "dimension",
                reason: "batch sweep needs a [workload] table".into(),
            })
        }
        _ => {}
    }
    values
        .par_iter()
        .map(|&v| {
            let (cfg, g) = match dim {
                SweepDimension::Gpus => (config.clone(), whole(dim, v)? as u32),
                SweepDimension::BNet => {
                    let mut c = config.clone();
                    c.cluster.b_net = gib_per_s(v);
                    c.cluster.validate().into_result()?;
                    (c, fixed)
                }
                SweepDimension::Efficiency => {
                    let mut c = config.clone();
                    c.comm.efficiency = v;
                    c.comm.validate()?;
                    (c, fixed)
                }
                SweepDimension::Batch => (config.with_batch(whole(dim, v)?)?, fixed),
            };
            let e = cfg.estimate_at(g)?;
            Ok(SweepRow {
                value: v,
                gpus: g,
                iter_time: e.estimate.total,
                speedup: e.speedup.speedup,
                efficiency: e.speedup.efficiency,
                exposed_comm: e.exposed_comm(),
            })
        })
        .collect()
}

/// Above this relative gap an input drift note is attached.
const DRIFT_TOL: f64 = 1e-9;

fn drift_notes(config: &ScenarioConfig, rec: &ReferenceRecord) -> Vec<String> {
    let Some(measured) = rec.phases() else {
        return Vec::new();
    };
    let mut diffs = Vec::new();
    for ((name, ours), (_, theirs)) in config.phases.fields().iter().zip(measured.fields()) {
        if (ours - theirs).abs() > DRIFT_TOL * theirs.abs().max(1e-12) {
            diffs.push(format!("{name} {} vs {}", fmt_secs(*ours), fmt_secs(theirs)));
        }
    }
    if diffs.is_empty() {
        return Vec::new();
    }
    vec![format!(
        "config inputs differ from reference: {} (t_gpu {} vs {})",
        diffs.join(", "),
        fmt_secs(config.phases.t_gpu()),
        fmt_secs(measured.t_gpu())
    )]
}

/// Closed form against the simulator at every scale of `config`.
pub fn cross_check(config: &ScenarioConfig, notes: &mut Vec<String>) -> Result<Vec<CrossCheck>> {
    let mut out = Vec::new();
    for g in config.scale_list() {
        let est = match config.estimate_at(g) {
            Ok(e) => e,
            Err(e @ (Error::IrregularOverlap | Error::MissingLayers(_))) => {
                notes.push(format!("{} at {g} GPUs: no closed form ({e})", config.name));
                continue;
            }
            Err(e) => return Err(e),
        };
        let inputs = &est.inputs;
        let layers = config.sim_layers(inputs);
        let front = inputs.front(&config.phases);
        let (formula, simulated) = match est.estimate.mode {
            EstimateMode::Overlapped => {
                let case = est.estimate.overlap_case.unwrap_or(OverlapCase::Case1);
                let trace = simulate_iteration(&front, &layers, &config.policy)?;
                (format!("overlapped {case} vs one simulated iteration"), trace.makespan)
            }
            mode => {
                let s = steady_state_iter_time(&front, &layers, &config.policy, STEADY_STATE_ITERS)?;
                (format!("{mode} vs simulated steady state"), s.mean)
            }
        };
        out.push(CrossCheck {
            scenario: format!("{} @ {g} GPUs", config.name),
            formula,
            analytic: est.estimate.total,
            simulated,
        });
    }
    Ok(out)
}

/// Predicts every reference-backed quantity of every config and joins the
/// predictions to `records`. Configs without framework and network only
/// contribute cross-checks.
pub fn run_validate(records: &[ReferenceRecord], configs: &[ScenarioConfig]) -> Result<ValidationReport> {
    let mut predictions = Vec::new();
    let mut cross_checks = Vec::new();
    let mut notes = Vec::new();
    for cfg in configs {
        cross_checks.extend(cross_check(cfg, &mut notes)?);
        if cfg.scenario_id(1).is_none() {
            notes.push(format!("{}: no framework/network, cross-checks only", cfg.name));
            continue;
        }
        let mut scales = cfg.scale_list();
        if !scales.contains(&1) {
            scales.insert(0, 1);
        }
        for g in scales {
            let id = cfg.scenario_id(g).expect("checked above");
            match cfg.estimate_at(g) {
                Ok(e) => {
                    let mut p = Prediction::new(id, Metric::TIter, e.estimate.total);
                    p.notes.push(format!("{}", e.estimate.mode));
                    if g == 1 {
                        if let Some(rec) = records.iter().find(|r| r.id == id) {
                            p.notes.extend(drift_notes(cfg, rec));
                        }
                    }
                    predictions.push(p);
                }
                Err(e @ (Error::IrregularOverlap | Error::MissingLayers(_))) => {
                    notes.push(format!("{id}: t_iter not predicted ({e})"));
                }
                Err(e) => return Err(e),
            }
            if g > 1 {
                let inputs = cfg.inputs_at(g)?;
                let mut p = Prediction::new(id, Metric::TComm, inputs.t_comm);
                let given = cfg.entry(g).is_some_and(|e| e.t_comm.is_some());
                p.notes.push(if given { "config input".into() } else { format!("{} model", cfg.comm.method.name()) });
                predictions.push(p);
            }
        }
    }
    let mut report = validate_model(records, &predictions)?;
    report.cross_checks = cross_checks;
    report.missing = missing_cells(records);
    report.notes = notes;
    Ok(report)
}

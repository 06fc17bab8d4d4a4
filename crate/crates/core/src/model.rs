//! Domain types shared by the estimators, the simulator and the CLI.
//!
//! Durations are seconds, sizes are bytes and bandwidths are bytes per
//! second, all as `f64`. Types are plain values with public fields; call
//! `validate` (or [`validate_layer_profile`]) before trusting foreign input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::units::gib_per_s;

/// A single structural problem found while validating an input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Outcome of a structural validation. Violations are data, not failures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> crate::Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(crate::Error::Invalid(self.violations))
        }
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation::new(path, message));
    }

    fn check_duration(&mut self, path: impl Into<String>, value: f64, what: impl fmt::Display) {
        if value.is_nan() || value.is_infinite() {
            self.push(path, format!("non-finite duration {what}"));
        } else if value < 0.0 {
            self.push(path, format!("negative duration {what}"));
        }
    }
}

/// Rounds to nine decimals for messages so `0.06` does not print as
/// `0.060000000000000005`.
pub(crate) fn fmt_secs(x: f64) -> String {
    // adding 0.0 turns -0 into 0
    let r = (x * 1e9).round() / 1e9 + 0.0;
    format!("{r}")
}

/// Per-iteration phase durations of one replica.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub t_io: f64,
    pub t_h2d: f64,
    pub t_f: f64,
    pub t_b: f64,
    pub t_u: f64,
    /// Gradient aggregation; zero on a single GPU.
    #[serde(default)]
    pub t_comm: f64,
}

impl PhaseProfile {
    pub fn new(t_io: f64, t_h2d: f64, t_f: f64, t_b: f64, t_u: f64, t_comm: f64) -> Self {
        PhaseProfile {
            t_io,
            t_h2d,
            t_f,
            t_b,
            t_u,
            t_comm,
        }
    }

    pub fn single_gpu(t_io: f64, t_h2d: f64, t_f: f64, t_b: f64, t_u: f64) -> Self {
        Self::new(t_io, t_h2d, t_f, t_b, t_u, 0.0)
    }

    /// Time the GPU is busy: `t_h2d + t_f + t_b + t_u`.
    pub fn t_gpu(&self) -> f64 {
        self.t_h2d + self.t_f + self.t_b + self.t_u
    }

    pub fn with_comm(self, t_comm: f64) -> Self {
        PhaseProfile { t_comm, ..self }
    }

    pub fn with_io(self, t_io: f64) -> Self {
        PhaseProfile { t_io, ..self }
    }

    pub fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("t_io", self.t_io),
            ("t_h2d", self.t_h2d),
            ("t_f", self.t_f),
            ("t_b", self.t_b),
            ("t_u", self.t_u),
            ("t_comm", self.t_comm),
        ]
    }

    pub fn validate(&self) -> Validation {
        let mut v = Validation::default();
        for (name, value) in self.fields() {
            v.check_duration(format!("phases.{name}"), value, format!("in {name}"));
        }
        v
    }
}

/// One learnable layer. Index 1 is closest to the input; backward
/// propagation visits layers from L down to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub index: usize,
    pub t_b: f64,
    pub t_comm: f64,
    pub t_u: f64,
    pub grad_bytes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub layers: Vec<Layer>,
}

impl LayerProfile {
    /// Builds a profile from parallel per-layer slices, indexing from 1.
    /// Missing update times default to zero.
    pub fn from_times(t_b: &[f64], t_comm: &[f64], t_u: &[f64]) -> Self {
        let layers = t_b
            .iter()
            .enumerate()
            .map(|(k, &b)| Layer {
                index: k + 1,
                t_b: b,
                t_comm: t_comm.get(k).copied().unwrap_or(0.0),
                t_u: t_u.get(k).copied().unwrap_or(0.0),
                grad_bytes: None,
            })
            .collect();
        LayerProfile { layers }
    }

    pub fn with_grad_bytes(mut self, grad_bytes: &[f64]) -> Self {
        for (layer, &g) in self.layers.iter_mut().zip(grad_bytes) {
            layer.grad_bytes = Some(g);
        }
        self
    }

    /// A one-layer profile carrying aggregate phase times.
    pub fn aggregate(phases: &PhaseProfile) -> Self {
        Self::from_times(&[phases.t_b], &[phases.t_comm], &[phases.t_u])
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Layer by 1-based index.
    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i - 1]
    }

    pub fn backward_total(&self) -> f64 {
        self.layers.iter().map(|l| l.t_b).sum()
    }

    pub fn comm_total(&self) -> f64 {
        self.layers.iter().map(|l| l.t_comm).sum()
    }

    pub fn update_total(&self) -> f64 {
        self.layers.iter().map(|l| l.t_u).sum()
    }

    pub fn with_comm_times(&self, t_comm: impl IntoIterator<Item = f64>) -> Self {
        let mut out = self.clone();
        for (layer, t) in out.layers.iter_mut().zip(t_comm) {
            layer.t_comm = t;
        }
        out
    }
}

/// Checks every structural invariant of a layer profile, optionally against
/// the aggregate phases measured for the same scenario.
pub fn validate_layer_profile(layers: &LayerProfile, phases: Option<&PhaseProfile>) -> Validation {
    let mut v = Validation::default();
    if layers.is_empty() {
        v.push("layers", "profile must contain at least one layer");
    }
    for (k, layer) in layers.layers.iter().enumerate() {
        let expected = k + 1;
        if layer.index != expected {
            v.push(
                format!("layers[{k}].index"),
                format!("expected contiguous index {expected}, found {}", layer.index),
            );
        }
        let i = layer.index;
        for (name, value) in [("t_b", layer.t_b), ("t_comm", layer.t_comm), ("t_u", layer.t_u)] {
            v.check_duration(format!("layers[{i}].{name}"), value, format!("at layer {i}"));
        }
        if let Some(g) = layer.grad_bytes {
            if !(g.is_finite() && g >= 0.0) {
                v.push(format!("layers[{i}].grad_bytes"), format!("invalid gradient size at layer {i}"));
            }
        }
    }
    if let Some(p) = phases {
        v.violations.extend(p.validate().violations);
        let sum = layers.backward_total();
        let tol = 1e-9 * sum.abs().max(p.t_b.abs());
        if (sum - p.t_b).abs() > tol {
            v.push(
                "layers.t_b",
                format!(
                    "layer backward sum {} ≠ aggregate {}",
                    fmt_secs(sum),
                    fmt_secs(p.t_b)
                ),
            );
        }
    }
    v
}

/// Node count, GPUs per node and link characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub nodes: u32,
    pub gpus_per_node: u32,
    pub b_cache: f64,
    pub b_disk: f64,
    pub b_pcie_pinned: f64,
    pub b_pcie_pageable: f64,
    pub b_net: f64,
    pub net_latency: f64,
    pub intra_latency: f64,
}

impl Default for ClusterSpec {
    /// Four nodes of four Tesla P40s on 56 Gbps InfiniBand.
    fn default() -> Self {
        ClusterSpec {
            nodes: 4,
            gpus_per_node: 4,
            b_cache: gib_per_s(3.5),
            b_disk: gib_per_s(0.5),
            b_pcie_pinned: gib_per_s(11.4),
            b_pcie_pageable: gib_per_s(8.7),
            b_net: gib_per_s(7.0),
            net_latency: 0.0,
            intra_latency: 0.0,
        }
    }
}

impl ClusterSpec {
    pub fn total_gpus(&self) -> u32 {
        self.nodes * self.gpus_per_node
    }

    /// Nodes needed to host `gpus` GPUs when nodes are filled first.
    pub fn nodes_for(&self, gpus: u32) -> u32 {
        gpus.div_ceil(self.gpus_per_node).max(1)
    }

    /// GPUs that a single node contributes when `gpus` are in use.
    pub fn local_gpus(&self, gpus: u32) -> u32 {
        gpus.min(self.gpus_per_node).max(1)
    }

    pub fn validate(&self) -> Validation {
        let mut v = Validation::default();
        if self.nodes < 1 {
            v.push("cluster.nodes", "must be at least 1");
        }
        if self.gpus_per_node < 1 {
            v.push("cluster.gpus_per_node", "must be at least 1");
        }
        for (name, b) in [
            ("b_cache", self.b_cache),
            ("b_disk", self.b_disk),
            ("b_pcie_pinned", self.b_pcie_pinned),
            ("b_pcie_pageable", self.b_pcie_pageable),
            ("b_net", self.b_net),
        ] {
            if !(b.is_finite() && b > 0.0) {
                v.push(format!("cluster.{name}"), format!("bandwidth must be positive, got {b}"));
            }
        }
        v.check_duration("cluster.net_latency", self.net_latency, "in net_latency");
        v.check_duration("cluster.intra_latency", self.intra_latency, "in intra_latency");
        v
    }
}

/// Per-GPU workload shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub per_gpu_batch: u64,
    pub sample_bytes: f64,
    /// Gradient bytes of one model replica.
    pub grad_bytes: f64,
}

impl WorkloadSpec {
    /// Bytes one node reads per iteration: `M * n_g * sample_bytes`.
    pub fn batch_bytes_per_node(&self, gpus_per_node: u32) -> f64 {
        self.per_gpu_batch as f64 * gpus_per_node as f64 * self.sample_bytes
    }

    pub fn validate(&self) -> Validation {
        let mut v = Validation::default();
        if !(self.sample_bytes.is_finite() && self.sample_bytes > 0.0) {
            v.push("workload.sample_bytes", "must be positive");
        }
        if !(self.grad_bytes.is_finite() && self.grad_bytes >= 0.0) {
            v.push("workload.grad_bytes", "must be non-negative");
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefetchMode {
    /// Batches are staged in GPU memory ahead of time.
    GpuBuffered,
    /// Reader threads stage batches in host memory.
    HostBuffered,
    /// Host staging with a byte-capacity limit; oversize batches block.
    LimitedBuffer,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostMemory {
    Pinned,
    Pageable,
}

/// How a framework pipelines I/O and gradient aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPolicy {
    pub io_prefetch: PrefetchMode,
    pub prefetch_depth: u32,
    /// Gradient aggregation of layer i runs while layer i-1 computes its
    /// backward pass.
    pub comm_overlap: bool,
    pub h2d_memory: HostMemory,
    /// Staging capacity for [`PrefetchMode::LimitedBuffer`].
    #[serde(default)]
    pub buffer_bytes: Option<f64>,
}

impl OverlapPolicy {
    pub fn sequential() -> Self {
        OverlapPolicy {
            io_prefetch: PrefetchMode::None,
            prefetch_depth: 0,
            comm_overlap: false,
            h2d_memory: HostMemory::Pageable,
            buffer_bytes: None,
        }
    }

    pub fn for_framework(framework: Framework) -> Self {
        match framework {
            Framework::CaffeMpi => OverlapPolicy {
                io_prefetch: PrefetchMode::GpuBuffered,
                prefetch_depth: 1,
                comm_overlap: true,
                h2d_memory: HostMemory::Pinned,
                buffer_bytes: None,
            },
            Framework::Cntk => OverlapPolicy {
                io_prefetch: PrefetchMode::LimitedBuffer,
                prefetch_depth: 1,
                comm_overlap: false,
                h2d_memory: HostMemory::Pinned,
                buffer_bytes: Some(crate::units::mib(256.0)),
            },
            Framework::Mxnet | Framework::Tensorflow => OverlapPolicy {
                io_prefetch: PrefetchMode::HostBuffered,
                prefetch_depth: 1,
                comm_overlap: true,
                h2d_memory: HostMemory::Pageable,
                buffer_bytes: None,
            },
        }
    }

    /// Whether I/O for the next batch actually overlaps compute when a
    /// batch occupies `batch_bytes`.
    pub fn prefetches(&self, batch_bytes: Option<f64>) -> bool {
        match self.io_prefetch {
            PrefetchMode::None => false,
            PrefetchMode::LimitedBuffer => match (self.buffer_bytes, batch_bytes) {
                (Some(cap), Some(bytes)) => bytes <= cap && self.prefetch_depth > 0,
                _ => self.prefetch_depth > 0,
            },
            _ => self.prefetch_depth > 0,
        }
    }

    pub fn validate(&self) -> Validation {
        let mut v = Validation::default();
        let none = self.io_prefetch == PrefetchMode::None;
        if none != (self.prefetch_depth == 0) {
            v.push(
                "policy.prefetch_depth",
                "prefetch_depth must be 0 exactly when io_prefetch is none",
            );
        }
        if let Some(b) = self.buffer_bytes {
            if !(b.is_finite() && b >= 0.0) {
                v.push("policy.buffer_bytes", "must be non-negative");
            }
        }
        v
    }
}

/// Which closed form describes a layer profile's overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OverlapCase {
    /// Every layer's communication hides behind the next backward step.
    Case1,
    /// Layers `c..=L` expose their communication; `2..c` hide it.
    Case2 { c: usize },
    Irregular,
}

impl fmt::Display for OverlapCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverlapCase::Case1 => f.write_str("case1"),
            OverlapCase::Case2 { c } => write!(f, "case2(C={c})"),
            OverlapCase::Irregular => f.write_str("irregular"),
        }
    }
}

/// Single-GPU baseline used as the speedup numerator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleGpuRun {
    pub t_io: f64,
    pub phases: PhaseProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiGpuRun {
    pub gpus: u32,
    pub t_io: f64,
    pub t_comm: f64,
    pub layers: Option<LayerProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingScenario {
    pub single: SingleGpuRun,
    pub multi: MultiGpuRun,
}

impl ScalingScenario {
    pub fn validate(&self) -> Validation {
        let mut v = self.single.phases.validate();
        v.check_duration("single.t_io", self.single.t_io, "in single.t_io");
        v.check_duration("multi.t_io", self.multi.t_io, "in multi.t_io");
        v.check_duration("multi.t_comm", self.multi.t_comm, "in multi.t_comm");
        if self.multi.gpus < 1 {
            v.push("multi.gpus", "must be at least 1");
        }
        if let Some(layers) = &self.multi.layers {
            v.violations.extend(validate_layer_profile(layers, None).violations);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Framework {
    #[serde(rename = "caffe-mpi")]
    CaffeMpi,
    #[serde(rename = "cntk")]
    Cntk,
    #[serde(rename = "mxnet")]
    Mxnet,
    #[serde(rename = "tensorflow")]
    Tensorflow,
}

impl Framework {
    pub const ALL: [Framework; 4] = [
        Framework::CaffeMpi,
        Framework::Cntk,
        Framework::Mxnet,
        Framework::Tensorflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Framework::CaffeMpi => "caffe-mpi",
            Framework::Cntk => "cntk",
            Framework::Mxnet => "mxnet",
            Framework::Tensorflow => "tensorflow",
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Framework::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown framework {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    AlexNet,
    GoogleNet,
    ResNet50,
}

impl Network {
    pub const ALL: [Network; 3] = [Network::AlexNet, Network::GoogleNet, Network::ResNet50];

    pub fn name(self) -> &'static str {
        match self {
            Network::AlexNet => "alexnet",
            Network::GoogleNet => "googlenet",
            Network::ResNet50 => "resnet50",
        }
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Network {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Network::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| format!("unknown network {s:?}"))
    }
}

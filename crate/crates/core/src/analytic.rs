//! Closed-form iteration-time, speedup and efficiency models.
//!
//! The overlap formulas are evaluated exactly as published, including the
//! threshold-layer form that leaves `t_b` of the last layer off the critical
//! path. The simulator in [`crate::sim`] computes the exact schedule; the
//! validate workflow reports the difference between the two.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{check_bandwidth, Error, Result};
use crate::model::{ClusterSpec, HostMemory, LayerProfile, OverlapCase, PhaseProfile, ScalingScenario};

/// Phases of one iteration, in canonical pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Phase {
    Io,
    H2d,
    Forward,
    Backward,
    Comm,
    Update,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Io,
        Phase::H2d,
        Phase::Forward,
        Phase::Backward,
        Phase::Comm,
        Phase::Update,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Io => "io",
            Phase::H2d => "h2d",
            Phase::Forward => "forward",
            Phase::Backward => "backward",
            Phase::Comm => "comm_exposed",
            Phase::Update => "update",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Sequential,
    PipelinedIo,
    Overlapped,
}

impl fmt::Display for EstimateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateMode::Sequential => "sequential",
            EstimateMode::PipelinedIo => "pipelined_io",
            EstimateMode::Overlapped => "overlapped",
        })
    }
}

/// Predicted iteration time with its per-phase exposed contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationEstimate {
    pub mode: EstimateMode,
    pub total: f64,
    /// Exposed time per phase; every phase is present.
    pub terms: BTreeMap<Phase, f64>,
    /// I/O time hidden behind compute (pipelined mode only).
    pub hidden_io: f64,
    /// Communication time hidden behind backward computation.
    pub hidden_comm: f64,
    pub overlap_case: Option<OverlapCase>,
}

impl IterationEstimate {
    fn new(mode: EstimateMode, total: f64, terms: [f64; 6]) -> Self {
        IterationEstimate {
            mode,
            total,
            terms: Phase::ALL.into_iter().zip(terms).collect(),
            hidden_io: 0.0,
            hidden_comm: 0.0,
            overlap_case: None,
        }
    }

    pub fn term(&self, phase: Phase) -> f64 {
        self.terms.get(&phase).copied().unwrap_or(0.0)
    }

    pub fn terms_sum(&self) -> f64 {
        self.terms.values().sum()
    }

    /// Recomputes the total from the stored terms using the mode's formula.
    pub fn rederive_total(&self) -> f64 {
        match self.mode {
            EstimateMode::Sequential | EstimateMode::Overlapped => self.terms_sum(),
            EstimateMode::PipelinedIo => {
                let busy: f64 = self
                    .terms
                    .iter()
                    .filter(|(p, _)| **p != Phase::Io)
                    .map(|(_, t)| t)
                    .sum();
                busy.max(self.term(Phase::Io) + self.hidden_io)
            }
        }
    }
}

/// `t_io + t_h2d + t_f + t_b + t_comm + t_u`.
pub fn iter_time_sequential(p: &PhaseProfile) -> IterationEstimate {
    let total = p.t_io + p.t_h2d + p.t_f + p.t_b + p.t_comm + p.t_u;
    IterationEstimate::new(
        EstimateMode::Sequential,
        total,
        [p.t_io, p.t_h2d, p.t_f, p.t_b, p.t_comm, p.t_u],
    )
}

/// `max{t_gpu + t_comm, t_io}`: reading the next batch overlaps compute.
pub fn iter_time_pipelined_io(p: &PhaseProfile) -> IterationEstimate {
    let busy = p.t_gpu() + p.t_comm;
    let total = busy.max(p.t_io);
    let exposed_io = (p.t_io - busy).max(0.0);
    let mut est = IterationEstimate::new(
        EstimateMode::PipelinedIo,
        total,
        [exposed_io, p.t_h2d, p.t_f, p.t_b, p.t_comm, p.t_u],
    );
    est.hidden_io = p.t_io - exposed_io;
    est
}

/// Time to read `m * n_g` samples from the page cache.
pub fn io_time(m: u64, n_g: u32, sample_bytes: f64, b_cache: f64) -> Result<f64> {
    check_bandwidth("b_cache", b_cache)?;
    Ok(m as f64 * n_g as f64 * sample_bytes / b_cache)
}

/// Host-to-device copy time over PCIe for the given host allocation kind.
pub fn h2d_time(bytes: f64, memory: HostMemory, cluster: &ClusterSpec) -> Result<f64> {
    let (name, b) = match memory {
        HostMemory::Pinned => ("b_pcie_pinned", cluster.b_pcie_pinned),
        HostMemory::Pageable => ("b_pcie_pageable", cluster.b_pcie_pageable),
    };
    check_bandwidth(name, b)?;
    Ok(bytes / b)
}

/// Classifies which overlap template a profile follows.
///
/// Layer `i` hides its communication when `t_comm(i) <= t_b(i-1)`. All
/// hidden is Case 1 (also for `L = 1`). A hidden prefix `2..C` followed by an
/// exposed suffix `C..=L` is Case 2. Anything else is irregular.
pub fn classify_overlap(layers: &LayerProfile) -> OverlapCase {
    let l = layers.len();
    let hidden = |i: usize| layers.layer(i).t_comm <= layers.layer(i - 1).t_b;
    let Some(c) = (2..=l).find(|&i| !hidden(i)) else {
        return OverlapCase::Case1;
    };
    if (c..=l).all(|i| !hidden(i)) {
        OverlapCase::Case2 { c }
    } else {
        OverlapCase::Irregular
    }
}

/// Iteration time when gradient aggregation is pipelined with backward.
///
/// Case 1: `t_io + t_h2d + t_f + t_b + t_comm(1) + t_u(1)`.
/// Case 2: `t_io + t_h2d + t_f + sum_{C..L} t_comm + sum_{1..C-1} t_b + t_comm(1) + t_u(1)`.
pub fn iter_time_overlapped(
    t_io: f64,
    t_h2d: f64,
    t_f: f64,
    layers: &LayerProfile,
) -> Result<IterationEstimate> {
    if layers.is_empty() {
        return Err(Error::MissingLayers("overlap estimate needs at least one layer"));
    }
    let case = classify_overlap(layers);
    let first = layers.layer(1);
    let (total, backward, comm) = match case {
        OverlapCase::Case1 => {
            let t_b = layers.backward_total();
            let total = t_io + t_h2d + t_f + t_b + first.t_comm + first.t_u;
            (total, t_b, first.t_comm)
        }
        OverlapCase::Case2 { c } => {
            let exposed_chain: f64 = (c..=layers.len()).map(|i| layers.layer(i).t_comm).sum();
            let leading_backward: f64 = (1..c).map(|i| layers.layer(i).t_b).sum();
            let total = t_io + t_h2d + t_f + exposed_chain + leading_backward + first.t_comm + first.t_u;
            (total, leading_backward, exposed_chain + first.t_comm)
        }
        OverlapCase::Irregular => return Err(Error::IrregularOverlap),
    };
    let mut est = IterationEstimate::new(
        EstimateMode::Overlapped,
        total,
        [t_io, t_h2d, t_f, backward, comm, first.t_u],
    );
    est.hidden_comm = (layers.comm_total() - comm).max(0.0);
    est.overlap_case = Some(case);
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedupFormula {
    SequentialComm,
    OverlappedCase1,
    OverlappedCase2,
}

impl fmt::Display for SpeedupFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeedupFormula::SequentialComm => "sequential_comm",
            SpeedupFormula::OverlappedCase1 => "overlapped_case1",
            SpeedupFormula::OverlappedCase2 => "overlapped_case2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupReport {
    pub speedup: f64,
    /// `speedup / gpus`.
    pub efficiency: f64,
    pub gpus: u32,
    pub formula: SpeedupFormula,
}

impl SpeedupReport {
    fn from_ratio(gpus: u32, single: f64, multi: f64, formula: SpeedupFormula) -> Result<Self> {
        if multi == 0.0 || !multi.is_finite() {
            return Err(Error::ZeroDenominator("speedup"));
        }
        if single <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "single",
                reason: "single-GPU iteration time must be positive".into(),
            });
        }
        // N_g * (a / b) keeps S == N_g bit-exact when a == b.
        let speedup = gpus as f64 * (single / multi);
        Ok(SpeedupReport {
            speedup,
            efficiency: speedup / gpus as f64,
            gpus,
            formula,
        })
    }
}

/// `S = N_g (t_io_1 + t_gpu) / (t_io_ng + t_gpu + t_comm)`.
pub fn speedup_sequential_comm(scenario: &ScalingScenario) -> Result<SpeedupReport> {
    scenario.validate().into_result()?;
    let t_gpu = scenario.single.phases.t_gpu();
    let single = scenario.single.t_io + t_gpu;
    let multi = scenario.multi.t_io + t_gpu + scenario.multi.t_comm;
    SpeedupReport::from_ratio(scenario.multi.gpus, single, multi, SpeedupFormula::SequentialComm)
}

/// Speedup when aggregation is pipelined with backward; the denominator is
/// [`iter_time_overlapped`] evaluated with the multi-GPU I/O time.
pub fn speedup_overlapped(scenario: &ScalingScenario, t_h2d: f64, t_f: f64) -> Result<SpeedupReport> {
    scenario.validate().into_result()?;
    let layers = scenario
        .multi
        .layers
        .as_ref()
        .ok_or(Error::MissingLayers("overlapped speedup"))?;
    let est = iter_time_overlapped(scenario.multi.t_io, t_h2d, t_f, layers)?;
    let formula = match est.overlap_case {
        Some(OverlapCase::Case2 { .. }) => SpeedupFormula::OverlappedCase2,
        _ => SpeedupFormula::OverlappedCase1,
    };
    // summed in the denominator's order so equal inputs give exactly N_g
    let p = &scenario.single.phases;
    let single = scenario.single.t_io + p.t_h2d + p.t_f + p.t_b + p.t_u;
    SpeedupReport::from_ratio(scenario.multi.gpus, single, est.total, formula)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllreduceEfficiency {
    pub ratio: f64,
    /// Set when the ratio exceeds 1, i.e. the measurement claims more than
    /// the link can carry.
    pub exceeds_link_capacity: bool,
}

/// `E = S_g / (t_comm * B)`, with `S_g` the bytes of every participant.
pub fn allreduce_efficiency(total_bytes: f64, t_comm: f64, b_net: f64) -> Result<AllreduceEfficiency> {
    if !(t_comm.is_finite() && t_comm > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_comm",
            reason: format!("must be positive, got {t_comm}"),
        });
    }
    check_bandwidth("b_net", b_net)?;
    let ratio = total_bytes / (t_comm * b_net);
    Ok(AllreduceEfficiency {
        ratio,
        exceeds_link_capacity: ratio > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bottleneck {
    pub phase: Phase,
    pub seconds: f64,
    pub share: f64,
}

/// Non-zero exposed phases, largest first; ties keep pipeline order.
pub fn rank_bottlenecks(estimate: &IterationEstimate) -> Vec<Bottleneck> {
    let sum = estimate.terms_sum();
    let mut out: Vec<Bottleneck> = estimate
        .terms
        .iter()
        .filter(|(_, &t)| t > 0.0)
        .map(|(&phase, &seconds)| Bottleneck {
            phase,
            seconds,
            share: seconds / sum,
        })
        .collect();
    out.sort_by(|a, b| b.seconds.total_cmp(&a.seconds));
    out
}

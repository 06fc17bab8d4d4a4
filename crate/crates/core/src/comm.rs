//! Gradient aggregation cost models.
//!
//! Decentralized aggregation uses a ring all-reduce model scaled by an
//! efficiency factor; centralized aggregation pushes and pulls every
//! worker's gradients through one parameter-server link.

use serde::{Deserialize, Serialize};

use crate::error::{check_bandwidth, Error, Result};
use crate::model::{ClusterSpec, LayerProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMethod {
    AllreduceRing,
    ParameterServer,
    /// Use supplied measurements as-is.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommModelSpec {
    pub method: CommMethod,
    /// Fraction of link bandwidth the collective achieves, in (0, 1].
    pub efficiency: f64,
    /// Per-hop latency; `None` takes the latency of the selected link.
    pub latency: Option<f64>,
}

impl Default for CommModelSpec {
    fn default() -> Self {
        CommModelSpec {
            method: CommMethod::Measured,
            efficiency: 1.0,
            latency: None,
        }
    }
}

impl CommMethod {
    pub fn name(self) -> &'static str {
        match self {
            CommMethod::AllreduceRing => "allreduce_ring",
            CommMethod::ParameterServer => "parameter_server",
            CommMethod::Measured => "measured",
        }
    }
}

impl CommModelSpec {
    pub fn validate(&self) -> Result<()> {
        check_efficiency(self.efficiency)?;
        if let Some(l) = self.latency {
            check_latency(l)?;
        }
        Ok(())
    }
}

/// Bandwidth and latency of the slowest link `p` participants traverse:
/// the network once they span nodes, PCIe otherwise.
pub fn link_for(cluster: &ClusterSpec, p: u32) -> (f64, f64) {
    if p > cluster.gpus_per_node {
        (cluster.b_net, cluster.net_latency)
    } else {
        (cluster.b_pcie_pinned, cluster.intra_latency)
    }
}

fn check_efficiency(e: f64) -> Result<()> {
    if e.is_finite() && e > 0.0 && e <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "efficiency",
            reason: format!("must lie in (0, 1], got {e}"),
        })
    }
}

fn check_latency(l: f64) -> Result<()> {
    if l.is_finite() && l >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "latency",
            reason: format!("must be non-negative, got {l}"),
        })
    }
}

fn check_participants(p: u32) -> Result<()> {
    if p >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "p",
            reason: "need at least one participant".into(),
        })
    }
}

fn check_bytes(g: f64) -> Result<()> {
    if g.is_finite() && g >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "grad_bytes",
            reason: format!("must be non-negative, got {g}"),
        })
    }
}

/// Bytes each participant sends in a ring all-reduce: `2 (p - 1) / p * g`.
pub fn ring_wire_bytes(grad_bytes: f64, p: u32) -> f64 {
    let p = p as f64;
    2.0 * (p - 1.0) / p * grad_bytes
}

/// Ring all-reduce time: `2 (p-1)/p * g / (B e) + 2 (p-1) latency`, zero for
/// a single participant.
pub fn allreduce_time(grad_bytes: f64, p: u32, bandwidth: f64, latency: f64, efficiency: f64) -> Result<f64> {
    check_participants(p)?;
    check_bandwidth("bandwidth", bandwidth)?;
    check_efficiency(efficiency)?;
    check_latency(latency)?;
    check_bytes(grad_bytes)?;
    if p == 1 {
        return Ok(0.0);
    }
    let hops = 2.0 * (p as f64 - 1.0);
    Ok(ring_wire_bytes(grad_bytes, p) / (bandwidth * efficiency) + hops * latency)
}

/// Efficiency that makes [`allreduce_time`] produce `t_comm`.
pub fn invert_ring_efficiency(grad_bytes: f64, p: u32, bandwidth: f64, latency: f64, t_comm: f64) -> Result<f64> {
    check_participants(p)?;
    check_bandwidth("bandwidth", bandwidth)?;
    check_latency(latency)?;
    let transfer = t_comm - 2.0 * (p as f64 - 1.0) * latency;
    if p == 1 || transfer <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "t_comm",
            reason: "no transfer time left to attribute to bandwidth".into(),
        });
    }
    Ok(ring_wire_bytes(grad_bytes, p) / (bandwidth * transfer))
}

/// Parameter-server push and pull through one server link:
/// `2 p g / B + 2 latency`.
pub fn ps_time(grad_bytes: f64, p: u32, server_bandwidth: f64, latency: f64) -> Result<f64> {
    check_participants(p)?;
    check_bandwidth("server_bandwidth", server_bandwidth)?;
    check_latency(latency)?;
    check_bytes(grad_bytes)?;
    Ok(2.0 * p as f64 * grad_bytes / server_bandwidth + 2.0 * latency)
}

/// Aggregation time of `grad_bytes` among `p` GPUs under `spec`. Returns
/// `None` for the measured method, which has nothing to model.
pub fn modeled_comm_time(grad_bytes: f64, spec: &CommModelSpec, cluster: &ClusterSpec, p: u32) -> Result<Option<f64>> {
    let (bandwidth, link_latency) = link_for(cluster, p);
    let latency = spec.latency.unwrap_or(link_latency);
    match spec.method {
        CommMethod::Measured => Ok(None),
        CommMethod::AllreduceRing => allreduce_time(grad_bytes, p, bandwidth, latency, spec.efficiency).map(Some),
        CommMethod::ParameterServer => ps_time(grad_bytes, p, bandwidth, latency).map(Some),
    }
}

/// Fills every layer's `t_comm` from its gradient size. The measured method
/// returns the profile unchanged.
pub fn layer_comm_times(layers: &LayerProfile, spec: &CommModelSpec, cluster: &ClusterSpec, p: u32) -> Result<LayerProfile> {
    if spec.method == CommMethod::Measured {
        return Ok(layers.clone());
    }
    let times = layers
        .layers
        .iter()
        .map(|l| {
            let g = l.grad_bytes.ok_or(Error::MissingGradientSize { layer: l.index })?;
            Ok(modeled_comm_time(g, spec, cluster, p)?.unwrap_or(l.t_comm))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(layers.with_comm_times(times))
}

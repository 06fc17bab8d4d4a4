//! Deterministic discrete-event simulation of synchronous data-parallel
//! training iterations.
//!
//! Each iteration reads a batch, copies it to the device, runs forward,
//! then backward from layer L down to 1. Every layer's gradients go through
//! one serialized channel (FIFO in backward completion order), and each
//! layer's update starts as soon as its aggregation finishes. The next
//! iteration's copy waits for every update of the previous one. With
//! prefetching, batch `k` may be read once batch `k - depth` has been handed
//! to the device.

mod engine;

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_layer_profile, LayerProfile, OverlapPolicy, PhaseProfile, Validation};
use engine::{Activity, Dep, Task};

/// The phases that precede backward propagation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontPhases {
    pub t_io: f64,
    pub t_h2d: f64,
    pub t_f: f64,
    /// Bytes of one batch, checked against a limited prefetch buffer.
    #[serde(default)]
    pub batch_bytes: Option<f64>,
}

impl FrontPhases {
    pub fn new(t_io: f64, t_h2d: f64, t_f: f64) -> Self {
        FrontPhases {
            t_io,
            t_h2d,
            t_f,
            batch_bytes: None,
        }
    }

    fn validate(&self) -> Validation {
        PhaseProfile::new(self.t_io, self.t_h2d, self.t_f, 0.0, 0.0, 0.0).validate()
    }
}

impl From<&PhaseProfile> for FrontPhases {
    fn from(p: &PhaseProfile) -> Self {
        FrontPhases::new(p.t_io, p.t_h2d, p.t_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    IoStart,
    IoEnd,
    H2dStart,
    H2dEnd,
    ForwardStart,
    ForwardEnd,
    BackwardStart(usize),
    BackwardEnd(usize),
    CommStart(usize),
    CommEnd(usize),
    UpdateStart(usize),
    UpdateEnd(usize),
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::IoStart => "io_start",
            EventKind::IoEnd => "io_end",
            EventKind::H2dStart => "h2d_start",
            EventKind::H2dEnd => "h2d_end",
            EventKind::ForwardStart => "forward_start",
            EventKind::ForwardEnd => "forward_end",
            EventKind::BackwardStart(_) => "backward_start",
            EventKind::BackwardEnd(_) => "backward_end",
            EventKind::CommStart(_) => "comm_start",
            EventKind::CommEnd(_) => "comm_end",
            EventKind::UpdateStart(_) => "update_start",
            EventKind::UpdateEnd(_) => "update_end",
        }
    }

    pub fn layer(self) -> Option<usize> {
        match self {
            EventKind::BackwardStart(i)
            | EventKind::BackwardEnd(i)
            | EventKind::CommStart(i)
            | EventKind::CommEnd(i)
            | EventKind::UpdateStart(i)
            | EventKind::UpdateEnd(i) => Some(i),
            _ => None,
        }
    }

    fn is_start(self) -> bool {
        matches!(
            self,
            EventKind::IoStart
                | EventKind::H2dStart
                | EventKind::ForwardStart
                | EventKind::BackwardStart(_)
                | EventKind::CommStart(_)
                | EventKind::UpdateStart(_)
        )
    }

    /// Start and end of one activity share a pairing key.
    fn pair_key(self) -> (u8, usize) {
        let class = match self {
            EventKind::IoStart | EventKind::IoEnd => 0,
            EventKind::H2dStart | EventKind::H2dEnd => 1,
            EventKind::ForwardStart | EventKind::ForwardEnd => 2,
            EventKind::BackwardStart(_) | EventKind::BackwardEnd(_) => 3,
            EventKind::CommStart(_) | EventKind::CommEnd(_) => 4,
            EventKind::UpdateStart(_) | EventKind::UpdateEnd(_) => 5,
        };
        (class, self.layer().unwrap_or(0))
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer() {
            Some(i) => write!(f, "{}({i})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub kind: EventKind,
    /// Virtual seconds since the start of the run.
    pub time: f64,
    pub iteration: usize,
}

/// Timestamped schedule of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub events: Vec<SimEvent>,
    pub makespan: f64,
    /// Earliest communication start and latest communication end.
    pub comm_span: (f64, f64),
    pub exposed_comm: f64,
    pub hidden_comm: f64,
}

impl SimTrace {
    fn from_events(events: Vec<SimEvent>) -> Result<Self> {
        let makespan = events.iter().map(|e| e.time).fold(0.0, f64::max);
        let comm_start = events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::CommStart(_)))
            .map(|e| e.time)
            .fold(f64::INFINITY, f64::min);
        let comm_end = events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::CommEnd(_)))
            .map(|e| e.time)
            .fold(f64::NEG_INFINITY, f64::max);
        let comm_span = if comm_start.is_finite() {
            (comm_start, comm_end)
        } else {
            (0.0, 0.0)
        };
        let mut trace = SimTrace {
            events,
            makespan,
            comm_span,
            exposed_comm: 0.0,
            hidden_comm: 0.0,
        };
        let intervals = Intervals::collect(&trace)?;
        trace.exposed_comm = intervals.exposed();
        trace.hidden_comm = intervals.channel_total() - trace.exposed_comm;
        Ok(trace)
    }

    /// Start and end time of the given activity.
    pub fn span_of(&self, start: EventKind) -> Option<(f64, f64)> {
        let key = start.pair_key();
        let s = self.events.iter().find(|e| e.kind == start)?;
        let e = self
            .events
            .iter()
            .find(|e| !e.kind.is_start() && e.kind.pair_key() == key)?;
        Some((s.time, e.time))
    }

    pub fn to_csv(&self) -> String {
        events_to_csv(&self.events)
    }
}

/// Trace export: `iteration,kind,layer,time_s`, one row per event.
pub fn events_to_csv(events: &[SimEvent]) -> String {
    let mut out = String::from("iteration,kind,layer,time_s\n");
    for e in events {
        let layer = e.kind.layer().map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", e.iteration, e.kind.name(), layer, e.time);
    }
    out
}

struct Intervals {
    compute: Vec<(f64, f64)>,
    channel: Vec<(f64, f64)>,
}

impl Intervals {
    fn collect(trace: &SimTrace) -> Result<Self> {
        let mut open: HashMap<(usize, (u8, usize)), f64> = HashMap::new();
        let mut compute = Vec::new();
        let mut channel = Vec::new();
        for e in &trace.events {
            let key = (e.iteration, e.kind.pair_key());
            if e.kind.is_start() {
                if open.insert(key, e.time).is_some() {
                    return Err(Error::MalformedTrace(format!(
                        "{} started twice in iteration {}",
                        e.kind, e.iteration
                    )));
                }
                continue;
            }
            let start = open.remove(&key).ok_or_else(|| {
                Error::MalformedTrace(format!("{} without a start in iteration {}", e.kind, e.iteration))
            })?;
            if e.time < start {
                return Err(Error::MalformedTrace(format!("{} ends before it starts", e.kind)));
            }
            match e.kind {
                EventKind::H2dEnd | EventKind::ForwardEnd | EventKind::BackwardEnd(_) => compute.push((start, e.time)),
                EventKind::CommEnd(_) => channel.push((start, e.time)),
                _ => {}
            }
        }
        if let Some(((iteration, _), _)) = open.iter().next() {
            return Err(Error::MalformedTrace(format!(
                "unterminated activity in iteration {iteration}"
            )));
        }
        compute.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(compute.len());
        for (s, e) in compute {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        Ok(Intervals {
            compute: merged,
            channel,
        })
    }

    fn channel_total(&self) -> f64 {
        self.channel.iter().map(|(s, e)| e - s).sum()
    }

    fn exposed(&self) -> f64 {
        self.channel
            .iter()
            .map(|&(s, e)| {
                let covered: f64 = self
                    .compute
                    .iter()
                    .map(|&(cs, ce)| (e.min(ce) - s.max(cs)).max(0.0))
                    .sum();
                (e - s) - covered
            })
            .sum()
    }
}

/// Channel-busy time that does not overlap compute (copy, forward or
/// backward) in the trace.
pub fn exposed_comm(trace: &SimTrace) -> Result<f64> {
    Ok(Intervals::collect(trace)?.exposed())
}

fn validate_inputs(front: &FrontPhases, layers: &LayerProfile, policy: &OverlapPolicy) -> Result<()> {
    let mut v = validate_layer_profile(layers, None);
    v.violations.extend(front.validate().violations);
    v.violations.extend(policy.validate().violations);
    v.into_result()
}

fn build_tasks(front: &FrontPhases, layers: &LayerProfile, policy: &OverlapPolicy, iterations: usize) -> Vec<Task> {
    let l = layers.len();
    let prefetch = policy.prefetches(front.batch_bytes);
    let depth = policy.prefetch_depth as usize;
    let per_iter = 3 + 3 * l;
    let mut tasks = Vec::with_capacity(per_iter * iterations);

    // ids within iteration k (0-based base offset)
    let io = |base: usize| base;
    let h2d = |base: usize| base + 1;
    let fwd = |base: usize| base + 2;
    let bwd = |base: usize, i: usize| base + 3 + (l - i);
    let comm = |base: usize, i: usize| base + 3 + l + (l - i);
    let upd = |base: usize, i: usize| base + 3 + 2 * l + (l - i);

    for k in 1..=iterations {
        let base = (k - 1) * per_iter;
        let prev_updates: Vec<Dep> = if k > 1 {
            let pb = base - per_iter;
            (1..=l).map(|i| Dep::End(upd(pb, i))).collect()
        } else {
            Vec::new()
        };

        let io_deps = if prefetch {
            if k > depth {
                vec![Dep::Start(h2d(base - depth * per_iter))]
            } else {
                Vec::new()
            }
        } else {
            prev_updates.clone()
        };
        tasks.push(Task {
            activity: Activity::Io,
            iteration: k,
            duration: front.t_io,
            deps: io_deps,
        });

        let mut h2d_deps = vec![Dep::End(io(base))];
        h2d_deps.extend(prev_updates);
        tasks.push(Task {
            activity: Activity::H2d,
            iteration: k,
            duration: front.t_h2d,
            deps: h2d_deps,
        });
        tasks.push(Task {
            activity: Activity::Forward,
            iteration: k,
            duration: front.t_f,
            deps: vec![Dep::End(h2d(base))],
        });
        for i in (1..=l).rev() {
            let dep = if i == l { fwd(base) } else { bwd(base, i + 1) };
            tasks.push(Task {
                activity: Activity::Backward(i),
                iteration: k,
                duration: layers.layer(i).t_b,
                deps: vec![Dep::End(dep)],
            });
        }
        for i in (1..=l).rev() {
            let ready_after = if policy.comm_overlap { bwd(base, i) } else { bwd(base, 1) };
            tasks.push(Task {
                activity: Activity::Comm(i),
                iteration: k,
                duration: layers.layer(i).t_comm,
                deps: vec![Dep::End(ready_after)],
            });
        }
        for i in (1..=l).rev() {
            tasks.push(Task {
                activity: Activity::Update(i),
                iteration: k,
                duration: layers.layer(i).t_u,
                deps: vec![Dep::End(comm(base, i))],
            });
        }
        debug_assert_eq!(tasks.len(), base + per_iter);
    }
    tasks
}

fn check_trace(trace: &SimTrace, layers: &LayerProfile) -> Result<()> {
    for i in 1..=layers.len() {
        let (b, c) = (
            trace.span_of(EventKind::BackwardStart(i)),
            trace.span_of(EventKind::CommStart(i)),
        );
        if let (Some((_, b_end)), Some((c_start, _))) = (b, c) {
            if c_start < b_end {
                return Err(Error::SimulationInvariant(format!(
                    "layer {i} communicates before its gradients exist"
                )));
            }
        }
    }
    Ok(())
}

/// Simulates one iteration, I/O included.
pub fn simulate_iteration(front: &FrontPhases, layers: &LayerProfile, policy: &OverlapPolicy) -> Result<SimTrace> {
    validate_inputs(front, layers, policy)?;
    let events = engine::run(&build_tasks(front, layers, policy, 1))?;
    let trace = SimTrace::from_events(events)?;
    check_trace(&trace, layers)?;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Mean of iterations 2..=n.
    pub mean: f64,
    /// Time between consecutive iteration completions; the first entry is
    /// the first iteration's completion time.
    pub per_iteration: Vec<f64>,
    pub final_trace: SimTrace,
    /// Every event of the run.
    pub events: Vec<SimEvent>,
}

/// Simulates `n_iters` back-to-back iterations. The first iteration is a
/// warm-up and is excluded from the mean.
pub fn steady_state_iter_time(
    front: &FrontPhases,
    layers: &LayerProfile,
    policy: &OverlapPolicy,
    n_iters: usize,
) -> Result<SteadyState> {
    if n_iters < 2 {
        return Err(Error::InvalidParameter {
            name: "n_iters",
            reason: format!("need at least 2 iterations, got {n_iters}"),
        });
    }
    validate_inputs(front, layers, policy)?;
    let events = engine::run(&build_tasks(front, layers, policy, n_iters))?;

    let mut ends = vec![0.0f64; n_iters + 1];
    for e in &events {
        ends[e.iteration] = ends[e.iteration].max(e.time);
    }
    let per_iteration: Vec<f64> = (1..=n_iters).map(|k| ends[k] - ends[k - 1]).collect();
    let mean = per_iteration[1..].iter().sum::<f64>() / (n_iters - 1) as f64;

    let last: Vec<SimEvent> = events.iter().filter(|e| e.iteration == n_iters).copied().collect();
    let final_trace = SimTrace::from_events(last)?;
    check_trace(&final_trace, layers)?;
    Ok(SteadyState {
        mean,
        per_iteration,
        final_trace,
        events,
    })
}

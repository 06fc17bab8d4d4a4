//! Event-driven list scheduler over four resources.
//!
//! I/O, compute and the gradient channel each run one task at a time;
//! updates run on an unbounded pool. Ready tasks wait FIFO per resource,
//! ties broken by layer index descending and then creation order, so a run
//! is a pure function of its task list.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use super::{EventKind, SimEvent};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Resource {
    Io,
    Compute,
    Channel,
    Update,
}

impl Resource {
    const ALL: [Resource; 4] = [Resource::Io, Resource::Compute, Resource::Channel, Resource::Update];

    fn exclusive(self) -> bool {
        self != Resource::Update
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Activity {
    Io,
    H2d,
    Forward,
    Backward(usize),
    Comm(usize),
    Update(usize),
}

impl Activity {
    fn resource(self) -> Resource {
        match self {
            Activity::Io => Resource::Io,
            Activity::H2d | Activity::Forward | Activity::Backward(_) => Resource::Compute,
            Activity::Comm(_) => Resource::Channel,
            Activity::Update(_) => Resource::Update,
        }
    }

    fn layer(self) -> usize {
        match self {
            Activity::Backward(i) | Activity::Comm(i) | Activity::Update(i) => i,
            _ => 0,
        }
    }

    fn start_event(self) -> EventKind {
        match self {
            Activity::Io => EventKind::IoStart,
            Activity::H2d => EventKind::H2dStart,
            Activity::Forward => EventKind::ForwardStart,
            Activity::Backward(i) => EventKind::BackwardStart(i),
            Activity::Comm(i) => EventKind::CommStart(i),
            Activity::Update(i) => EventKind::UpdateStart(i),
        }
    }

    fn end_event(self) -> EventKind {
        match self {
            Activity::Io => EventKind::IoEnd,
            Activity::H2d => EventKind::H2dEnd,
            Activity::Forward => EventKind::ForwardEnd,
            Activity::Backward(i) => EventKind::BackwardEnd(i),
            Activity::Comm(i) => EventKind::CommEnd(i),
            Activity::Update(i) => EventKind::UpdateEnd(i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dep {
    Start(usize),
    End(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Task {
    pub activity: Activity,
    pub iteration: usize,
    pub duration: f64,
    pub deps: Vec<Dep>,
}

/// Virtual time ordered by `total_cmp`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

type ReadyKey = (Time, Reverse<usize>, usize);
type EndKey = Reverse<(Time, Resource, Reverse<usize>, usize)>;

struct State {
    waiting: usize,
    on_start: Vec<usize>,
    on_end: Vec<usize>,
    done: bool,
}

/// Runs the task graph to completion and returns the chronological event log.
pub(crate) fn run(tasks: &[Task]) -> Result<Vec<SimEvent>> {
    let mut states: Vec<State> = tasks
        .iter()
        .map(|t| State {
            waiting: t.deps.len(),
            on_start: Vec::new(),
            on_end: Vec::new(),
            done: false,
        })
        .collect();
    for (id, task) in tasks.iter().enumerate() {
        for dep in &task.deps {
            match *dep {
                Dep::Start(d) => states[d].on_start.push(id),
                Dep::End(d) => states[d].on_end.push(id),
            }
        }
    }

    let mut ready: [BTreeSet<ReadyKey>; 4] = Default::default();
    let mut busy = [false; 4];
    let mut ends: BinaryHeap<EndKey> = BinaryHeap::new();
    let mut log = Vec::with_capacity(tasks.len() * 2);
    let mut now = 0.0f64;

    let key = |id: usize, at: f64| (Time(at), Reverse(tasks[id].activity.layer()), id);

    for (id, s) in states.iter().enumerate() {
        if s.waiting == 0 {
            ready[tasks[id].activity.resource().slot()].insert(key(id, now));
        }
    }

    let release = |deps: &[usize], states: &mut Vec<State>, ready: &mut [BTreeSet<ReadyKey>; 4], at: f64| {
        for &d in deps {
            states[d].waiting -= 1;
            if states[d].waiting == 0 {
                ready[tasks[d].activity.resource().slot()].insert(key(d, at));
            }
        }
    };

    loop {
        loop {
            let mut progressed = false;
            for res in Resource::ALL {
                let slot = res.slot();
                while !(res.exclusive() && busy[slot]) {
                    let Some((_, _, id)) = ready[slot].pop_first() else {
                        break;
                    };
                    let task = &tasks[id];
                    log.push(SimEvent {
                        kind: task.activity.start_event(),
                        time: now,
                        iteration: task.iteration,
                    });
                    busy[slot] = res.exclusive();
                    ends.push(Reverse((
                        Time(now + task.duration),
                        res,
                        Reverse(task.activity.layer()),
                        id,
                    )));
                    let deps = std::mem::take(&mut states[id].on_start);
                    release(&deps, &mut states, &mut ready, now);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }

        let Some(&Reverse((Time(t), ..))) = ends.peek() else {
            break;
        };
        now = t;
        while let Some(&Reverse((Time(t), res, _, id))) = ends.peek() {
            if t != now {
                break;
            }
            ends.pop();
            let task = &tasks[id];
            log.push(SimEvent {
                kind: task.activity.end_event(),
                time: now,
                iteration: task.iteration,
            });
            if res.exclusive() {
                busy[res.slot()] = false;
            }
            states[id].done = true;
            let deps = std::mem::take(&mut states[id].on_end);
            release(&deps, &mut states, &mut ready, now);
        }
    }

    if let Some(stuck) = states.iter().position(|s| !s.done) {
        return Err(Error::SimulationInvariant(format!(
            "task {:?} of iteration {} never ran",
            tasks[stuck].activity, tasks[stuck].iteration
        )));
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(activity: Activity, duration: f64, deps: Vec<Dep>) -> Task {
        Task {
            activity,
            iteration: 1,
            duration,
            deps,
        }
    }

    #[test]
    fn exclusive_resource_serializes_ready_tasks() {
        // two comms ready at t=0; layer 2 goes first
        let tasks = vec![
            task(Activity::Comm(1), 1.0, vec![]),
            task(Activity::Comm(2), 2.0, vec![]),
        ];
        let log = run(&tasks).unwrap();
        let kinds: Vec<_> = log.iter().map(|e| (e.kind, e.time)).collect();
        assert_eq!(
            kinds,
            [
                (EventKind::CommStart(2), 0.0),
                (EventKind::CommEnd(2), 2.0),
                (EventKind::CommStart(1), 2.0),
                (EventKind::CommEnd(1), 3.0),
            ]
        );
    }

    #[test]
    fn update_pool_is_unbounded() {
        let tasks = vec![
            task(Activity::Update(1), 1.0, vec![]),
            task(Activity::Update(2), 1.0, vec![]),
        ];
        let log = run(&tasks).unwrap();
        assert!(log.iter().all(|e| e.time == 0.0 || e.time == 1.0));
        assert_eq!(log.iter().filter(|e| e.time == 0.0).count(), 2);
    }

    #[test]
    fn start_dependency_releases_at_start() {
        let tasks = vec![
            task(Activity::Forward, 5.0, vec![]),
            task(Activity::Io, 1.0, vec![Dep::Start(0)]),
        ];
        let log = run(&tasks).unwrap();
        assert_eq!(log[1].kind, EventKind::IoStart);
        assert_eq!(log[1].time, 0.0);
    }

    #[test]
    fn cyclic_graph_is_reported() {
        let tasks = vec![
            task(Activity::Forward, 1.0, vec![Dep::End(1)]),
            task(Activity::H2d, 1.0, vec![Dep::End(0)]),
        ];
        assert!(matches!(run(&tasks), Err(Error::SimulationInvariant(_))));
    }
}

//! Generators shared by the property suites.

#![allow(dead_code)]

use dlperf::model::{LayerProfile, OverlapPolicy, PrefetchMode};
use dlperf::sim::FrontPhases;
use proptest::prelude::*;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn front() -> impl Strategy<Value = FrontPhases> {
    (0.0..1.0f64, 0.0..0.1f64, 0.001..0.3f64).prop_map(|(io, h2d, f)| FrontPhases::new(io, h2d, f))
}

/// Update times of layers 2..L never exceed layer 1's, so layer 1's update
/// closes the iteration.
fn updates(l: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.0..0.01f64).prop_flat_map(move |u1| {
        prop::collection::vec(0.0..=u1, l - 1).prop_map(move |rest| {
            let mut v = vec![u1];
            v.extend(rest);
            v
        })
    })
}

/// Arbitrary overlap pattern.
pub fn layers(max_layers: usize) -> impl Strategy<Value = LayerProfile> {
    (1..=max_layers).prop_flat_map(|l| {
        (
            prop::collection::vec(0.001..0.1f64, l),
            prop::collection::vec(0.0..0.1f64, l),
            updates(l),
        )
            .prop_map(|(b, c, u)| LayerProfile::from_times(&b, &c, &u))
    })
}

/// Every layer above the first hides its aggregation behind the next
/// backward step.
pub fn case1_layers(max_layers: usize) -> impl Strategy<Value = LayerProfile> {
    (1..=max_layers).prop_flat_map(|l| {
        (
            prop::collection::vec(0.001..0.1f64, l),
            prop::collection::vec(0.0..=1.0f64, l),
            0.0..0.1f64,
            updates(l),
        )
            .prop_map(|(b, frac, c1, u)| {
                let c: Vec<f64> = (0..b.len())
                    .map(|k| if k == 0 { c1 } else { frac[k] * b[k - 1] })
                    .collect();
                LayerProfile::from_times(&b, &c, &u)
            })
    })
}

pub fn overlap_policy() -> OverlapPolicy {
    OverlapPolicy {
        comm_overlap: true,
        ..OverlapPolicy::sequential()
    }
}

pub fn prefetch_policy(comm_overlap: bool) -> OverlapPolicy {
    OverlapPolicy {
        io_prefetch: PrefetchMode::HostBuffered,
        prefetch_depth: 1,
        comm_overlap,
        ..OverlapPolicy::sequential()
    }
}

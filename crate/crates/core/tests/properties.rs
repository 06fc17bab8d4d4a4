mod common;

use dlperf::analytic::{
    classify_overlap, iter_time_overlapped, iter_time_pipelined_io, iter_time_sequential, Phase,
};
use dlperf::model::{Framework, LayerProfile, Network, OverlapCase, PhaseProfile};
use dlperf::reference::{
    merge_records, missing_cells, parse_reference, validate_model, write_hidden_csv, write_metrics_csv, Measurement,
    Metric, Prediction, ReferenceRecord, ScenarioId,
};
use dlperf::scenario::{run_sweep, ScenarioConfig, SweepDimension};
use proptest::prelude::*;

use common::rel_close;

fn phases() -> impl Strategy<Value = PhaseProfile> {
    prop::array::uniform6(0.0..1.0f64).prop_map(|[a, b, c, d, e, f]| PhaseProfile::new(a, b, c, d, e, f))
}

fn bump(p: PhaseProfile, field: usize, delta: f64) -> PhaseProfile {
    let mut q = p;
    match field {
        0 => q.t_io += delta,
        1 => q.t_h2d += delta,
        2 => q.t_f += delta,
        3 => q.t_b += delta,
        4 => q.t_u += delta,
        _ => q.t_comm += delta,
    }
    q
}

fn scenario_id() -> impl Strategy<Value = ScenarioId> {
    (0usize..4, 0usize..3, 1u32..=16, 1u32..=4).prop_map(|(f, n, gpus, nodes)| ScenarioId {
        framework: Framework::ALL[f],
        network: Network::ALL[n],
        gpus,
        nodes,
    })
}

fn cell() -> impl Strategy<Value = Option<Measurement>> {
    prop_oneof![
        1 => Just(None),
        3 => (0.0..10.0f64, prop::option::of(0.0..1.0f64)).prop_map(|(mean, std)| Some(Measurement { mean, std })),
    ]
}

fn records() -> impl Strategy<Value = Vec<ReferenceRecord>> {
    prop::collection::btree_map(
        scenario_id(),
        (prop::collection::btree_map(0usize..7, cell(), 1..7), prop::option::of(any::<bool>())),
        0..12,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|(id, (cells, hidden))| ReferenceRecord {
                id,
                metrics: cells.into_iter().map(|(k, c)| (Metric::ALL[k], c)).collect(),
                hidden,
            })
            .collect()
    })
}

fn reload(recs: &[ReferenceRecord]) -> Vec<ReferenceRecord> {
    merge_records([
        parse_reference(&write_metrics_csv(recs), "metrics").unwrap(),
        parse_reference(&write_hidden_csv(recs), "hidden").unwrap(),
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sequential_and_pipelined_are_monotone(p in phases(), field in 0usize..6, delta in 0.0..0.5f64) {
        let q = bump(p, field, delta);
        prop_assert!(iter_time_sequential(&q).total >= iter_time_sequential(&p).total);
        prop_assert!(iter_time_pipelined_io(&q).total >= iter_time_pipelined_io(&p).total);
    }

    #[test]
    fn pipelined_never_exceeds_sequential(p in phases()) {
        prop_assert!(iter_time_pipelined_io(&p).total <= iter_time_sequential(&p).total);
    }

    #[test]
    fn estimate_terms_rederive_the_total(p in phases()) {
        let seq = iter_time_sequential(&p);
        prop_assert!(rel_close(seq.rederive_total(), seq.total, 1e-12));
        let pipe = iter_time_pipelined_io(&p);
        prop_assert!(rel_close(pipe.rederive_total(), pipe.total, 1e-12));
        prop_assert!(rel_close(pipe.term(Phase::Io) + pipe.hidden_io, p.t_io, 1e-12));
    }

    #[test]
    fn overlapped_is_monotone_within_a_case(
        front in common::front(),
        layers in common::layers(6),
        which in 0usize..64,
        delta in 0.0..0.02f64,
    ) {
        let base = iter_time_overlapped(front.t_io, front.t_h2d, front.t_f, &layers);
        let mut bumped = layers.clone();
        let k = which % (3 * layers.len());
        let layer = &mut bumped.layers[k / 3];
        match k % 3 {
            0 => layer.t_b += delta,
            1 => layer.t_comm += delta,
            _ => layer.t_u += delta,
        }
        prop_assume!(base.is_ok() && classify_overlap(&bumped) == classify_overlap(&layers));
        let after = iter_time_overlapped(front.t_io, front.t_h2d, front.t_f, &bumped).unwrap();
        prop_assert!(after.total >= base.unwrap().total - 1e-12);
    }

    #[test]
    fn analytic_comm_is_exposed_or_hidden(front in common::front(), layers in common::layers(6)) {
        if let Ok(est) = iter_time_overlapped(front.t_io, front.t_h2d, front.t_f, &layers) {
            let total = layers.comm_total();
            prop_assert!((est.term(Phase::Comm) + est.hidden_comm - total).abs() <= 1e-12 * total.max(1.0));
        }
    }

    #[test]
    fn reference_round_trips(recs in records()) {
        prop_assert_eq!(reload(&recs), recs);
    }

    #[test]
    fn absent_cells_never_become_zero(recs in records()) {
        let again = reload(&recs);
        for (id, m) in missing_cells(&recs) {
            let rec = again.iter().find(|r| r.id == id).unwrap();
            prop_assert_eq!(rec.get(m), None);
            prop_assert_eq!(rec.metrics.get(&m), Some(&None));
        }
        prop_assert_eq!(missing_cells(&again), missing_cells(&recs));
    }

    #[test]
    fn aggregates_ignore_row_order(recs in records(), values in prop::collection::vec(0.0..10.0f64, 1..40), seed in any::<u64>()) {
        prop_assume!(!recs.is_empty());
        let preds: Vec<Prediction> = values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let r = &recs[k % recs.len()];
                Prediction::new(r.id, Metric::ALL[k % 7], v)
            })
            .collect();
        let mut shuffled = preds.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = validate_model(&recs, &preds).unwrap();
        let b = validate_model(&recs, &shuffled).unwrap();
        prop_assert_eq!(a.mean_rel_error(), b.mean_rel_error());
        prop_assert_eq!(a.max_rel_error(), b.max_rel_error());
        for row in &a.rows {
            if let (Some(m), Some(rel)) = (row.measured, row.rel_error) {
                prop_assert_eq!(rel, (row.predicted - m.mean).abs() / m.mean);
            }
            if row.measured.is_none() {
                prop_assert!(row.notes.iter().any(|n| n == "no reference"));
            }
        }
    }

    #[test]
    fn sweep_keeps_input_order(values in prop::collection::vec(prop::sample::select(vec![1u32, 2, 4, 8, 16]), 1..12)) {
        let cfg = ScenarioConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/zero-comm.toml")).unwrap();
        let v: Vec<f64> = values.iter().map(|&g| g as f64).collect();
        let rows = run_sweep(&cfg, SweepDimension::Gpus, &v, None).unwrap();
        prop_assert_eq!(rows.len(), v.len());
        for (r, &g) in rows.iter().zip(&values) {
            prop_assert_eq!(r.gpus, g);
            prop_assert_eq!(r.speedup, g as f64);
        }
    }
}

#[test]
fn threshold_layer_form_can_drop_across_a_case_boundary() {
    // lengthening layer 1's backward hides layer 2 and moves the threshold
    // from C = 2 to C = 3, which drops the closed form by 0.04 s
    let before = LayerProfile::from_times(&[0.05, 0.01, 0.01], &[0.0, 0.06, 0.5], &[]);
    let after = LayerProfile::from_times(&[0.06, 0.01, 0.01], &[0.0, 0.06, 0.5], &[]);
    assert_eq!(classify_overlap(&before), OverlapCase::Case2 { c: 2 });
    assert_eq!(classify_overlap(&after), OverlapCase::Case2 { c: 3 });
    let a = iter_time_overlapped(0.0, 0.0, 0.1, &before).unwrap().total;
    let b = iter_time_overlapped(0.0, 0.0, 0.1, &after).unwrap().total;
    assert!((a - b - 0.04).abs() < 1e-12, "{a} {b}");
    // the simulated schedule does not drop
    let pol = common::overlap_policy();
    let front = dlperf::sim::FrontPhases::new(0.0, 0.0, 0.1);
    let sa = dlperf::sim::simulate_iteration(&front, &before, &pol).unwrap().makespan;
    let sb = dlperf::sim::simulate_iteration(&front, &after, &pol).unwrap().makespan;
    assert!(sb >= sa);
}

//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};

use dlperf::analytic::{
    allreduce_efficiency, io_time, iter_time_overlapped, speedup_overlapped, speedup_sequential_comm,
};
use dlperf::model::{LayerProfile, MultiGpuRun, PhaseProfile, ScalingScenario, SingleGpuRun};
use dlperf::render::{self, Format};
use dlperf::scenario::{run_estimate, ScenarioConfig};
use dlperf::sim::{events_to_csv, simulate_iteration, steady_state_iter_time, FrontPhases};
use dlperf::units::{gib_per_s, mib, IMAGENET_SAMPLE_BYTES};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use common::rel_close;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn dlperf(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dlperf"))
        .args(args)
        .output()
        .expect("run dlperf");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn speedups() -> Outcome {
    let phases = PhaseProfile::single_gpu(0.223, 0.0527, 0.1684, 0.2918, 0.0086);
    ensure(rel_close(phases.t_gpu(), 0.5215, 1e-12), || format!("t_gpu {}", phases.t_gpu()))?;
    let mut got = Vec::new();
    for (g, t_io, t_comm, want) in [(2, 0.45, 0.0359, 1.478), (4, 0.72, 0.042, 2.32)] {
        let s = speedup_sequential_comm(&ScalingScenario {
            single: SingleGpuRun { t_io: 0.223, phases },
            multi: MultiGpuRun {
                gpus: g,
                t_io,
                t_comm,
                layers: None,
            },
        })
        .map_err(|e| e.to_string())?;
        ensure((s.speedup - want).abs() <= 0.005, || format!("{g} GPUs: {} vs {want}", s.speedup))?;
        got.push(s.speedup);
    }
    let cfg = ScenarioConfig::load(configs_dir().join("cntk-alexnet.toml")).map_err(|e| e.to_string())?;
    let est = run_estimate(&cfg, None).map_err(|e| e.to_string())?;
    let cli: Vec<f64> = est.iter().map(|e| e.speedup.speedup).collect();
    ensure(cli.len() == 3 && cli[0] == 1.0, || format!("config speedups {cli:?}"))?;
    ensure(cli[1] == got[0] && cli[2] == got[1], || format!("config {cli:?} vs {got:?}"))?;
    Ok(format!("S(2) = {:.4}, S(4) = {:.4}", got[0], got[1]))
}

fn allreduce() -> Outcome {
    let b = gib_per_s(7.0);
    let mut got = Vec::new();
    for (g, t, want) in [(8.0, 0.0906, 77.61), (16.0, 0.236, 59.59)] {
        let e = allreduce_efficiency(mib(63.0) * g, t, b).map_err(|e| e.to_string())?;
        let pct = e.ratio * 100.0;
        ensure((pct - want).abs() <= 0.05, || format!("{g} GPUs: {pct:.4}% vs {want}%"))?;
        ensure(!e.exceeds_link_capacity, || "flagged as over capacity".into())?;
        got.push(pct);
    }
    Ok(format!("E(8) = {:.2}%, E(16) = {:.2}%", got[0], got[1]))
}

fn io_model() -> Outcome {
    let b = gib_per_s(3.5);
    let one = io_time(1024, 1, IMAGENET_SAMPLE_BYTES, b).map_err(|e| e.to_string())?;
    let four = io_time(1024, 4, IMAGENET_SAMPLE_BYTES, b).map_err(|e| e.to_string())?;
    ensure((one - 0.164).abs() <= 0.001, || format!("one GPU {one}"))?;
    ensure((four - 0.656).abs() <= 0.001, || format!("four GPUs {four}"))?;
    ensure(rel_close(four, 4.0 * one, 1e-15), || "not linear in N_g".into())?;
    Ok(format!("{one:.5} s, x4 = {four:.5} s"))
}

fn steady_state() -> Outcome {
    let strategy = (common::front(), common::layers(6), any::<bool>());
    runner(100)
        .run(&strategy, |(front, layers, overlap)| {
            let policy = common::prefetch_policy(overlap);
            let s = steady_state_iter_time(&front, &layers, &policy, 50).unwrap();
            let t_gpu = front.t_h2d + front.t_f + layers.backward_total() + layers.layer(1).t_u;
            let expected = (t_gpu + s.final_trace.exposed_comm).max(front.t_io);
            prop_assert!(rel_close(s.mean, expected, 1e-9), "mean {} vs {}", s.mean, expected);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("100 random inputs, 50 iterations, depth 1".into())
}

fn case1_equivalence() -> Outcome {
    let strategy = (common::front(), common::case1_layers(8));
    runner(100)
        .run(&strategy, |(front, layers)| {
            let est = iter_time_overlapped(front.t_io, front.t_h2d, front.t_f, &layers).unwrap();
            let trace = simulate_iteration(&front, &layers, &common::overlap_policy()).unwrap();
            prop_assert!(rel_close(trace.makespan, est.total, 1e-12), "sim {} vs {}", trace.makespan, est.total);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("100 random Case 1 profiles".into())
}

fn case2_dual() -> Outcome {
    let layers = LayerProfile::from_times(&[0.02, 0.01, 0.03], &[0.005, 0.05, 0.04], &[0.001]);
    let front = FrontPhases::new(0.0, 0.0, 0.1);
    let est = iter_time_overlapped(0.0, 0.0, 0.1, &layers).map_err(|e| e.to_string())?;
    let trace = simulate_iteration(&front, &layers, &common::overlap_policy()).map_err(|e| e.to_string())?;
    ensure(rel_close(est.total, 0.216, 1e-12), || format!("analytic {}", est.total))?;
    ensure(rel_close(trace.makespan, 0.226, 1e-12), || format!("simulated {}", trace.makespan))?;
    let cfg = configs_dir().join("case2-toy.toml");
    let (code, out, err) = dlperf(&["validate", "--config", cfg.to_str().unwrap()]);
    ensure(code == 0, || format!("validate exit {code}: {err}"))?;
    let line = out
        .lines()
        .find(|l| l.starts_with("case2-toy") && l.contains("analytic_vs_sim"))
        .ok_or("no cross-check row in validate output")?;
    ensure(line.contains("0.216") && line.contains("0.226") && line.contains("gap 0.01 s"), || line.to_string())?;
    Ok(format!("analytic {:.3}, simulated {:.3}, gap reported", est.total, trace.makespan))
}

fn validation_harness() -> Outcome {
    let cfg = configs_dir().join("caffe-mpi-alexnet.toml");
    let (code, out, err) = dlperf(&["validate", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    ensure(code == 0, || format!("validate exit {code}: {err}"))?;
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let row = rows
        .iter()
        .find(|r| &r[0] == "caffe-mpi/alexnet/1g1n" && &r[1] == "t_iter")
        .ok_or("no Caffe-MPI AlexNet row")?;
    let predicted: f64 = row[2].parse().map_err(|_| "predicted")?;
    let measured: f64 = row[3].parse().map_err(|_| "measured")?;
    let rel: f64 = row[6].parse().map_err(|_| "rel_error")?;
    ensure(predicted == 0.5866 && measured == 0.5772, || format!("{predicted} vs {measured}"))?;
    ensure((rel - 0.016).abs() <= 0.001, || format!("rel error {rel}"))?;
    let blanks: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[7] == "no reference").collect();
    let want = ["alexnet", "googlenet", "resnet50"]
        .iter()
        .flat_map(|n| ["8g2n", "16g4n"].map(|s| format!("tensorflow/{n}/{s}")))
        .collect::<Vec<_>>();
    for id in &want {
        ensure(blanks.iter().any(|r| &r[0] == id && &r[1] == "t_comm"), || format!("{id} t_comm not surfaced"))?;
    }
    ensure(blanks.len() == want.len(), || format!("{} no-reference rows", blanks.len()))?;
    Ok(format!("rel error {:.2}%, {} no-reference cells", rel * 100.0, blanks.len()))
}

fn invariants() -> Outcome {
    // determinism
    let strategy = (common::front(), common::layers(6), any::<bool>());
    runner(100)
        .run(&strategy, |(front, layers, overlap)| {
            let policy = common::prefetch_policy(overlap);
            let a = steady_state_iter_time(&front, &layers, &policy, 5).unwrap();
            let b = steady_state_iter_time(&front, &layers, &policy, 5).unwrap();
            prop_assert_eq!(events_to_csv(&a.events), events_to_csv(&b.events));
            Ok(())
        })
        .map_err(|e| format!("determinism: {e}"))?;
    let cfg = ScenarioConfig::load(configs_dir().join("tensorflow-resnet50.toml")).map_err(|e| e.to_string())?;
    let csv_a = render::estimate(&cfg.name, &run_estimate(&cfg, None).map_err(|e| e.to_string())?, Format::Csv);
    let csv_b = render::estimate(&cfg.name, &run_estimate(&cfg, None).map_err(|e| e.to_string())?, Format::Csv);
    ensure(csv_a == csv_b, || "estimate CSV differs between runs".into())?;

    // monotonicity of the simulated iteration in every phase input
    let strategy = (common::front(), common::layers(5), 0usize..64, 0.0001..0.05f64, any::<bool>());
    runner(100)
        .run(&strategy, |(front, layers, which, delta, overlap)| {
            let policy = common::prefetch_policy(overlap);
            let base = steady_state_iter_time(&front, &layers, &policy, 4).unwrap();
            let (mut f2, mut l2) = (front, layers.clone());
            let l = layers.len();
            match which % (3 + 3 * l) {
                0 => f2.t_io += delta,
                1 => f2.t_h2d += delta,
                2 => f2.t_f += delta,
                k => {
                    let k = k - 3;
                    let layer = &mut l2.layers[k / 3];
                    match k % 3 {
                        0 => layer.t_b += delta,
                        1 => layer.t_comm += delta,
                        _ => layer.t_u += delta,
                    }
                }
            }
            let bumped = steady_state_iter_time(&f2, &l2, &policy, 4).unwrap();
            let end = |s: &dlperf::sim::SteadyState| s.per_iteration.iter().sum::<f64>();
            prop_assert!(end(&bumped) >= end(&base) - 1e-12);
            Ok(())
        })
        .map_err(|e| format!("monotonicity: {e}"))?;

    // perfect scaling without aggregation cost
    let strategy = (common::front(), common::layers(4), 1u32..=64);
    runner(100)
        .run(&strategy, |(front, layers, g)| {
            let phases = PhaseProfile::single_gpu(
                front.t_io,
                front.t_h2d,
                front.t_f,
                layers.backward_total(),
                layers.layer(1).t_u,
            );
            let single = SingleGpuRun { t_io: front.t_io, phases };
            let multi = MultiGpuRun {
                gpus: g,
                t_io: front.t_io,
                t_comm: 0.0,
                layers: None,
            };
            let s = speedup_sequential_comm(&ScalingScenario { single, multi }).unwrap();
            prop_assert_eq!(s.speedup, g as f64);
            Ok(())
        })
        .map_err(|e| format!("zero-comm speedup: {e}"))?;
    let zero = LayerProfile::from_times(&[0.3], &[0.0], &[0.01]);
    let s = speedup_overlapped(
        &ScalingScenario {
            single: SingleGpuRun {
                t_io: 0.1,
                phases: PhaseProfile::single_gpu(0.1, 0.05, 0.17, 0.3, 0.01),
            },
            multi: MultiGpuRun {
                gpus: 16,
                t_io: 0.1,
                t_comm: 0.0,
                layers: Some(zero),
            },
        },
        0.05,
        0.17,
    )
    .map_err(|e| e.to_string())?;
    ensure(s.speedup == 16.0, || format!("overlapped zero-comm speedup {}", s.speedup))?;

    // comm conservation
    let strategy = (common::front(), common::layers(8), any::<bool>());
    runner(100)
        .run(&strategy, |(front, layers, overlap)| {
            let policy = if overlap { common::overlap_policy() } else { common::prefetch_policy(false) };
            let t = simulate_iteration(&front, &layers, &policy).unwrap();
            let total = layers.comm_total();
            prop_assert!((t.exposed_comm + t.hidden_comm - total).abs() <= 1e-12 * total.max(1.0));
            Ok(())
        })
        .map_err(|e| format!("comm conservation: {e}"))?;
    Ok("determinism, monotonicity, zero-comm scaling, comm conservation (100 cases each)".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("speedup reproduction", speedups),
        ("all-reduce efficiency", allreduce),
        ("I/O model", io_model),
        ("pipelined steady state", steady_state),
        ("Case 1 oracle equivalence", case1_equivalence),
        ("Case 2 dual computation", case2_dual),
        ("validation harness", validation_harness),
        ("invariant suite", invariants),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {why}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p aeps-cli --test acceptance`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use aeps::benchmark::{evaluate_backends, run_benchmark, BenchmarkConfig, BenchmarkOutput, EvalConfig};
use aeps::geom::Vec3;
use aeps::plant::{allocate, step, PlantSpec, PlantState};
use aeps::powermodel::{instant_demand, DemandParams};
use aeps::predictor::dataset::{generate_dataset, DatasetConfig};
use aeps::predictor::train::{train, TrainConfig};
use aeps::predictor::Mlp;
use aeps::trajectory::Trajectory;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {:.1} s, limit {:.0} s", took.as_secs_f64(), limit.as_secs_f64()))
    }
}

fn c1_allocator() -> Outcome {
    let start = Instant::now();
    let spec = PlantSpec::<f64>::paper_defaults();
    let dt = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let edge = |rng: &mut ChaCha8Rng| match rng.random_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random::<f64>(),
    };
    let mut worst_rel = 0.0f64;
    for case in 0..100_000 {
        let s = PlantState::new(spec, edge(&mut rng), edge(&mut rng), edge(&mut rng)).map_err(|e| e.to_string())?;
        let load = rng.random_range(0.0..=100.0);
        let d = allocate(load, &s, dt).map_err(|e| e.to_string())?;
        let next = step(&s, &d, dt).map_err(|e| e.to_string())?;
        let fail = |what: &str| Err(format!("case {case}: {what} (load {load}, state {s:?}, decision {d:?})"));

        let cells_avail = spec.fuel_cell.max_output.min(s.fuel_cell_energy() / dt)
            + spec.battery.max_output.min(s.battery_energy() / dt);
        let uc_avail = spec.ultracap.max_output.min(s.ultracap_energy() / dt);
        if d.brownout {
            if !(d.supplied() < load && (d.supplied() - cells_avail.min(load) - uc_avail).abs() < 1e-9) {
                return fail("brownout without exhausting the sources");
            }
        } else if d.supplied() != load {
            return fail("supply does not match load");
        }
        if d.p_fc_batt > 16.0 || d.p_uc > 30.0 || d.p_fc_batt < 0.0 || d.p_uc < 0.0 || d.p_charge < 0.0 {
            return fail("source cap violated");
        }
        if d.p_fc_batt + d.p_charge > cells_avail + 1e-9 {
            return fail("cells asked for more than they hold");
        }
        if d.p_uc > 0.0 && d.p_charge > 0.0 {
            return fail("ultracapacitor charged and discharged in one step");
        }
        for soc in [next.soc_fc, next.soc_batt, next.soc_uc] {
            if !(0.0..=1.0).contains(&soc) {
                return fail("soc left [0, 1]");
            }
        }
        let lost = (1.0 - spec.charge_efficiency) * d.p_charge * dt;
        let expected = s.total_energy() - (d.supplied() * dt + lost);
        let clamped = next.clamped_energy - s.clamped_energy;
        let rel = (next.total_energy() - expected).abs().max(0.0) / s.total_energy().max(1.0);
        if clamped == 0.0 {
            worst_rel = worst_rel.max(rel);
            if rel > 1e-9 {
                return fail(&format!("energy not conserved: relative error {rel:e}"));
            }
        }
    }
    within(Duration::from_secs(5), start.elapsed())?;
    Ok(format!(
        "1e5 cases, worst relative energy error {worst_rel:.1e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn c2_demand() -> Outcome {
    type Q = Ratio<i128>;
    let params = DemandParams {
        k_curv: Q::new(1, 10_000),
        k_dist_curv: Q::new(2, 100_000),
    };
    // (baseline centiwatts, |C| in 1e-3/m, D in dm, mean |C| in 1e-3/m)
    let vectors: [(i128, i128, i128, i128); 20] = [
        (600, 0, 0, 0),
        (600, 0, 400, 0),
        (1460, 250, 400, 125),
        (1000, 1000, 10, 1000),
        (1234, 567, 890, 123),
        (1600, 2000, 250, 1500),
        (987, 3, 7, 5),
        (2500, 4000, 600, 3900),
        (700, 125, 1200, 80),
        (1800, 90_000, 350, 2_000),
        (650, 1, 1, 1),
        (999, 999, 999, 999),
        (1500, 0, 500, 250),
        (1111, 2222, 333, 444),
        (3000, 50, 50, 50),
        (820, 7_600, 410, 1_530),
        (600, 80, 380, 80),
        (2048, 1024, 512, 256),
        (1750, 333, 666, 999),
        (4000, 12_345, 6_789, 4_321),
    ];
    for (i, &(b, c, d, m)) in vectors.iter().enumerate() {
        let got = instant_demand(Q::new(b, 100), Q::new(c, 1000), Q::new(d, 10), Q::new(m, 1000), &params);
        // Common denominator 5e8: b/100 + c/(1e3·1e4) + d·m/(10·1e3·5e4).
        let want = Q::new(b * 5_000_000 + c * 50 + d * m, 500_000_000);
        if got != want {
            return Err(format!("vector {i}: got {got}, expected {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let paper = DemandParams::<f64>::paper();
    for _ in 0..100_000 {
        let b = rng.random_range(0.0..200.0);
        let d = rng.random_range(0.0..1e4);
        if instant_demand(b, 0.0, d, 0.0, &paper) != b {
            return Err(format!("zero curvature changed baseline {b} (D {d})"));
        }
    }
    Ok("20 rational vectors exact, 1e5 zero-curvature cases reduce to baseline".into())
}

fn c3_gradient() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for model in 0..100 {
        let mut sizes = vec![rng.random_range(1..=4)];
        for _ in 0..rng.random_range(1..=3) {
            sizes.push(rng.random_range(1..=6));
        }
        sizes.push(rng.random_range(1..=2));
        let mlp = Mlp::<f64>::init(&sizes, model).map_err(|e| e.to_string())?;
        let batch = rng.random_range(1..=5);
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..*sizes.last().unwrap()).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let (_, grad) = mlp.loss_and_grad(&xs, &ys).map_err(|e| e.to_string())?;
        for j in 0..grad.len() {
            let at = |delta: f64| {
                let mut p = mlp.params().to_vec();
                p[j] += delta;
                Mlp::from_params(&sizes, p).unwrap().batch_loss(&xs, &ys).unwrap()
            };
            // Five-point central difference: O(h⁴) truncation keeps roundoff small too.
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            // Relative error with a floor so vanishing gradients compare absolutely.
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
            if rel > 1e-5 {
                return Err(format!("model {model} {sizes:?}, param {j}: backprop {} vs fd {fd}", grad[j]));
            }
        }
    }
    within(Duration::from_secs(30), start.elapsed())?;
    Ok(format!(
        "100 models, {checked} parameters, worst relative error {worst:.1e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn c4_learnability() -> Outcome {
    let start = Instant::now();
    let data = generate_dataset(2000, 4, &DatasetConfig::default()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train(&data, &cfg).map_err(|e| e.to_string())?;
    let mean = out.validation.label_mean();
    let pct = 100.0 * out.val_mae / mean;
    let took = start.elapsed();
    within(Duration::from_secs(60), took)?;
    check(
        cfg.epochs <= 500 && pct <= 5.0,
        format!(
            "validation MAE {:.4} W = {pct:.2}% of mean label {mean:.3} W after {} epochs, {:.1} s",
            out.val_mae,
            cfg.epochs,
            took.as_secs_f64()
        ),
    )
}

fn c5_curvature() -> Outcome {
    let mut worst = 0.0f64;
    for r in [2.0, 4.0, 8.0] {
        for v in 3..=8 {
            let omega = v as f64 / r;
            let pts: Vec<Vec3<f64>> = (0..200)
                .map(|i| {
                    let a = omega * 0.1 * i as f64;
                    Vec3::new(r * a.cos(), r * a.sin(), 5.0)
                })
                .collect();
            let traj = Trajectory::from_uniform(&pts, 0.0, 0.1).map_err(|e| e.to_string())?;
            for k in traj.curvature_series().map_err(|e| e.to_string())? {
                worst = worst.max((k - 1.0 / r).abs());
            }
        }
    }
    check(worst <= 1e-3, format!("R in {{2, 4, 8}} m, 3 to 8 m/s: worst |κ - 1/R| = {worst:.1e}"))
}

fn c6_benchmark(full: &BenchmarkOutput, took: Duration) -> Outcome {
    let c = &full.report.comparison;
    let h = &c.headline;
    let r = &c.reference;
    let pct = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let safety = pct(h.safety.mean_change_pct);
    let complexity = pct(h.complexity.mean_change_pct);
    let agility = pct(h.agility.mean_change_pct);
    let agility_norm = pct(h.agility_norm.mean_change_pct);
    let duration = pct(h.duration.mean_change_pct);
    let detail = format!(
        "safety {safety:+.1}% (ref {:+.2}%), complexity {complexity:+.1}% (ref {:+.2}%), agility {agility:+.1}% / normalized {agility_norm:+.1}% (ref {:+.2}%), flight duration {duration:+.1}% (ref {:+.2}% / {:+.2}%), with precharge {:+.1}%, success {}/{} vs {}/{}, {:.1} s",
        r.safety_change_pct,
        r.complexity_change_pct,
        r.agility_change_pct,
        r.duration_change_pct[0],
        r.duration_change_pct[1],
        pct(h.duration_with_precharge.mean_change_pct),
        c.enhanced.successes,
        c.enhanced.runs,
        c.normal.successes,
        c.normal.runs,
        took.as_secs_f64()
    );
    within(Duration::from_secs(300), took)?;
    check(
        c.pairs.len() == 20
            && safety > 0.0
            && complexity > 0.0
            && agility > 0.0
            && agility_norm > 0.0
            && duration < 0.0
            && c.enhanced.success_rate >= c.normal.success_rate,
        detail,
    )
}

fn c7_ablation(cfg: &BenchmarkConfig, full: &BenchmarkOutput) -> Outcome {
    let mut off = cfg.clone();
    off.mission.plant.ultracap.energy_capacity = 0.0;
    let ablated = run_benchmark(&off, Some(full.model.clone())).map_err(|e| e.to_string())?;
    let with_uc = full.report.comparison.enhanced.mean_safety;
    let without = ablated.report.comparison.enhanced.mean_safety;
    check(
        without < with_uc,
        format!("enhanced mean min-distance {without:.3} m without UC vs {with_uc:.3} m with full UC, 20 matched runs"),
    )
}

fn c8_backends() -> Outcome {
    let cfg = EvalConfig::default();
    let out = evaluate_backends(&cfg).map_err(|e| e.to_string())?;
    let rep = &out.report;
    let names: Vec<&str> = rep.backends.iter().map(|b| b.name.as_str()).collect();
    let finite = rep
        .backends
        .iter()
        .all(|b| b.mae.is_finite() && b.max_error.is_finite() && b.peak_window_error.is_finite());
    if !(finite && names.len() == 2 && names.contains(&"mlp") && rep.peak_rows > 0 && !rep.ratios.is_empty()) {
        return Err(format!("incomplete report: {rep:?}"));
    }
    let single = evaluate_backends(&EvalConfig { members: 1, ..cfg.clone() }).map_err(|e| e.to_string())?;
    let (a, b) = (&single.report.backends[0], &single.report.backends[1]);
    let e = &rep.backends[0];
    let m = &rep.backends[1];
    check(
        a.mae == b.mae,
        format!(
            "noise {} W: {} MAE {:.4} W peak {:.4} W, {} MAE {:.4} W peak {:.4} W (ref ratios {:.2}% / {:.2}%); 1 member {} vs mlp {}",
            cfg.noise_std,
            e.name,
            e.mae,
            e.peak_window_error,
            m.name,
            m.mae,
            m.peak_window_error,
            rep.reference_ratio_pct[0],
            rep.reference_ratio_pct[1],
            a.mae,
            b.mae
        ),
    )
}

fn run_cli(out: &Path) -> Result<Vec<u8>, String> {
    let run = Command::new(env!("CARGO_BIN_EXE_aeps"))
        .args(["benchmark", "--seed", "7", "--out"])
        .arg(out)
        .env_remove("AEPS_SEED")
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if !run.status.success() {
        return Err(format!("aeps benchmark exited with {}: {}", run.status, String::from_utf8_lossy(&run.stderr)));
    }
    std::fs::read(out.join("report.json")).map_err(|e| e.to_string())
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = run_cli(&dir.path().join("a"))?;
    let b = run_cli(&dir.path().join("b"))?;
    check(a == b, format!("two CLI benchmark runs, report.json {} bytes each, identical: {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, r: Outcome| {
        match r {
            Ok(d) => println!("criterion {n} {name}: PASS ({d})"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({d})");
            }
        }
    };
    report(1, "allocator fuzz", c1_allocator());
    report(2, "demand arithmetic", c2_demand());
    report(3, "gradient check", c3_gradient());
    report(4, "predictor learnability", c4_learnability());
    report(5, "curvature oracle", c5_curvature());

    let cfg = BenchmarkConfig::default();
    let start = Instant::now();
    match run_benchmark(&cfg, None) {
        Ok(full) => {
            let took = start.elapsed();
            report(6, "paired benchmark", c6_benchmark(&full, took));
            report(7, "ultracapacitor ablation", c7_ablation(&cfg, &full));
        }
        Err(e) => {
            report(6, "paired benchmark", Err(e.to_string()));
            report(7, "ultracapacitor ablation", Err("benchmark failed".into()));
        }
    }
    report(8, "backend comparison", c8_backends());
    report(9, "determinism", c9_determinism());

    if failed == 0 {
        println!("acceptance: all 9 criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria FAIL");
        ExitCode::FAILURE
    }
}

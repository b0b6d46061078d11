//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so every line is printed; exits non-zero on any FAIL.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use plcbf::constraints::Primitive;
use plcbf::dynamics::{step_rk4, DoubleIntegrator, Quadrotor, QuadrotorParams};
use plcbf::filter::BarrierForm;
use plcbf::metric::{completeness_check, language_metric, AdmissibleFamily};
use plcbf::policies::{DiGoalPd, DiStop, PiecewiseConstant};
use plcbf::qp::{kkt_residual, qp_min_norm, Row};
use plcbf::rollout::rollout_value;
use plcbf::scenarios::{
    benchmark_timing, parallel_speedup, run_analysis, run_scenario, CellClass, ScenarioOutcome, ScenarioSpec,
    FULL_LIBRARY,
};
use plcbf::{
    filter_step, flow, ConstraintSnapshot, ControlAffine, FilterParams, PerceptionSchedule, Policy, PolicyLibrary,
    QpStatus, RolloutParams, Workers,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{cbf_qp_direct, exhaustive_qp, load_config, perturbed_pwc, pwc_values, random_pwc};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn di() -> DoubleIntegrator {
    DoubleIntegrator::new(1.0).unwrap()
}

fn within(limit_s: f64, start: Instant) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    ensure(s < limit_s, format!("took {s:.1} s, limit {limit_s} s"))?;
    Ok(s)
}

fn c1_clearance_identity() -> Check {
    let start = Instant::now();
    let cfg = load_config("di_grid.json");
    let p = cfg.prepare().map_err(|e| e.to_string())?;
    let snapshot = &p.schedule.snapshots()[0];
    let model = p.model.as_ref();
    let params = cfg.filter.rollout;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 1000;
    for k in 0..n {
        let policy = &p.library.policies()[rng.gen_range(0..p.library.len())];
        let x = [
            rng.gen_range(0.0..20.0),
            rng.gen_range(0.0..20.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ];
        let r = rollout_value(model, policy, snapshot, &x, 0.0, &params, true).map_err(|e| e.to_string())?;
        let traj = r.trajectory.as_ref().ok_or("trajectory not retained")?;
        let offset = traj.t0 - snapshot.t;
        let oracle = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, s)| snapshot.evaluate_at(s, offset + t))
            .fold(f64::INFINITY, f64::min);
        ensure(
            r.value.to_bits() == oracle.to_bits(),
            format!("pair {k}: H = {} but min over samples = {oracle}", r.value),
        )?;
    }
    let s = within(10.0, start)?;
    Ok(format!("{n} pairs bitwise equal, {s:.2} s"))
}

fn c2_constructive_soundness() -> Check {
    let start = Instant::now();
    let model = di();
    let (horizon, dt) = (2.0, 0.02);
    let workers = Workers::sequential();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100;
    let mut certified = 0;
    for k in 0..n {
        let x = [
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let star_values = pwc_values(&mut rng, 5, 0.9);
        let star = Policy::new("star", 0, PiecewiseConstant::new(horizon / 5.0, star_values.clone()).unwrap());
        let traj = flow(&model, &star, &x, 0.0, horizon, dt).map_err(|e| e.to_string())?;
        // a ball placed off the path with clearance γ* in [0.3, 1]
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let center = vec![x[0] + 8.0 * angle.cos(), x[1] + 8.0 * angle.sin()];
        let nearest = traj
            .states
            .iter()
            .map(|s| ((s[0] - center[0]).powi(2) + (s[1] - center[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        let gamma_target = rng.gen_range(0.3..1.0);
        let radius = nearest - gamma_target;
        ensure(radius > 0.5, format!("instance {k}: degenerate obstacle"))?;
        let snapshot = ConstraintSnapshot::new(
            0.0,
            vec![Primitive::Ball { center, radius, velocity: None }],
            &[0, 1],
            4,
        )
        .map_err(|e| e.to_string())?;
        let close = perturbed_pwc(&mut rng, "close", &star_values, horizon, 1e-3);
        let library = PolicyLibrary::new(vec![
            Policy::new("nom", 0, DiGoalPd { goal: [0.0, 0.0], ..Default::default() }),
            close,
        ])
        .map_err(|e| e.to_string())?;
        let family = AdmissibleFamily::fixed(vec![star]).map_err(|e| e.to_string())?;
        let report = completeness_check(&model, &library, &family, &snapshot, &x, horizon, dt, 1, k as u64, &workers)
            .map_err(|e| format!("instance {k}: {e}"))?;
        ensure(report.delta_hat < report.threshold, format!("instance {k}: construction gave δ ≥ γ*/L_h"))?;
        let w = report.witness.as_ref().ok_or(format!("instance {k}: no witness"))?;
        if report.certified && w.library_value > 0.0 {
            certified += 1;
        }
    }
    ensure(certified == n, format!("certified with a safe witness in {certified}/{n}"))?;
    let boundary = run_analysis(&load_config("analyze_boundary.json"), &workers).map_err(|e| e.to_string())?;
    ensure(
        !boundary.certified && boundary.delta_hat == boundary.threshold,
        format!(
            "boundary case: certified={} δ={} γ*/L_h={}",
            boundary.certified, boundary.delta_hat, boundary.threshold
        ),
    )?;
    let s = within(60.0, start)?;
    Ok(format!("{certified}/{n} certified with H > 0; boundary δ = γ*/L_h = {} not certified; {s:.1} s", boundary.threshold))
}

fn c3_lipschitz_transfer() -> Check {
    let model = di();
    let (horizon, dt) = (2.0, 0.02);
    // every primitive is a 1-Lipschitz signed distance in position
    let lipschitz = 1.0;
    let snapshot = ConstraintSnapshot::new(
        0.0,
        vec![
            Primitive::Ball { center: vec![2.0, 1.0], radius: 1.0, velocity: None },
            Primitive::Box { center: vec![-2.0, -1.5], half_extents: vec![1.0, 0.5], velocity: None },
            Primitive::HalfSpace { normal: vec![0.0, 1.0], offset: -4.0 },
        ],
        &[0, 1],
        4,
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1000;
    let mut worst = f64::INFINITY;
    for k in 0..n {
        let x = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let star_values = pwc_values(&mut rng, 5, 1.0);
        let star = Policy::new("star", 0, PiecewiseConstant::new(horizon / 5.0, star_values.clone()).unwrap());
        let eta = rng.gen_range(0.0..0.5);
        let other = perturbed_pwc(&mut rng, "k", &star_values, horizon, eta);
        let delta = language_metric(&model, &star, &other, &x, horizon, dt).map_err(|e| e.to_string())?;
        let a = flow(&model, &star, &x, 0.0, horizon, dt).map_err(|e| e.to_string())?;
        let b = flow(&model, &other, &x, 0.0, horizon, dt).map_err(|e| e.to_string())?;
        for ((t, sa), sb) in a.times.iter().zip(&a.states).zip(&b.states) {
            let slack = snapshot.evaluate_at(sb, *t) - (snapshot.evaluate_at(sa, *t) - lipschitz * delta);
            worst = worst.min(slack);
            ensure(slack >= -1e-9, format!("pair {k} at τ = {t}: bound violated by {}", -slack))?;
        }
    }
    Ok(format!("{n} pairs, smallest slack {worst:.3e}"))
}

fn c4_qp() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let (mut worst_diff, mut worst_kkt, mut inactive) = (0.0f64, 0.0f64, 0);
    for k in 0..n {
        let m = rng.gen_range(1..=4);
        let lower: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..-0.2)).collect();
        let upper: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..2.0)).collect();
        let z: Vec<f64> = (0..m).map(|i| rng.gen_range(lower[i]..upper[i])).collect();
        let loose = rng.gen_bool(0.2);
        let rows: Vec<Row> = (0..rng.gen_range(0..=3))
            .map(|_| {
                let a: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let b = a.iter().zip(&z).map(|(a, z)| a * z).sum::<f64>() - rng.gen_range(0.0..0.3) - if loose { 10.0 } else { 0.0 };
                Row::new(a, b)
            })
            .collect();
        let u0: Vec<f64> = if loose {
            (0..m).map(|i| rng.gen_range(lower[i]..upper[i])).collect()
        } else {
            (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect()
        };
        let sol = qp_min_norm(&u0, &rows, &lower, &upper).map_err(|e| format!("instance {k}: {e}"))?;
        let oracle = exhaustive_qp(&u0, &rows, &lower, &upper).ok_or(format!("instance {k}: oracle infeasible"))?;
        let diff = sol.u.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_diff = worst_diff.max(diff);
        ensure(diff <= 1e-8, format!("instance {k}: differs from oracle by {diff:.3e}"))?;
        let kkt = kkt_residual(&u0, &rows, &lower, &upper, &sol);
        worst_kkt = worst_kkt.max(kkt);
        ensure(kkt <= 1e-8, format!("instance {k}: KKT residual {kkt:.3e}"))?;
        let satisfied = rows.iter().all(|r| r.a.iter().zip(&u0).map(|(a, u)| a * u).sum::<f64>() >= r.b)
            && (0..m).all(|i| lower[i] <= u0[i] && u0[i] <= upper[i]);
        if satisfied {
            inactive += 1;
            ensure(sol.u == u0, format!("instance {k}: inactive instance did not return u_nom exactly"))?;
        }
    }
    let s = within(30.0, start)?;
    Ok(format!(
        "{n} QPs, max |u − oracle| {worst_diff:.1e}, max KKT {worst_kkt:.1e}, {inactive} inactive returned exactly, {s:.1} s"
    ))
}

fn c5_vanilla_reduction() -> Check {
    let model = di();
    let (w, offset) = ([-0.3, 0.2, -0.8, 0.5], 3.0);
    let snapshot = ConstraintSnapshot::new(
        0.0,
        vec![Primitive::StateLinear { weights: w.to_vec(), offset }],
        &[0, 1],
        4,
    )
    .map_err(|e| e.to_string())?;
    let schedule = PerceptionSchedule::single(snapshot);
    let library = PolicyLibrary::new(vec![
        Policy::new("nom", 0, DiGoalPd { goal: [4.0, -2.0], ..Default::default() }),
        Policy::new("stop", 1, DiStop::default()),
    ])
    .map_err(|e| e.to_string())?;
    let alpha = 1.3;
    let params = FilterParams {
        rollout: RolloutParams { horizon: 0.0, ..Default::default() },
        alpha,
        ..Default::default()
    };
    let workers = Workers::sequential();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut n, mut active, mut worst) = (0, 0, 0.0f64);
    while n < 1000 {
        let x = [
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ];
        let h: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + offset;
        if h <= params.rollout.safety_margin {
            continue;
        }
        n += 1;
        let d = filter_step(&model, &x, 0.0, &library, &schedule, &params, &workers).map_err(|e| e.to_string())?;
        // ḣ = w_p·v + w_v·u ≥ −α h
        let a = [w[2], w[3]];
        let b = -alpha * h - (w[0] * x[2] + w[1] * x[3]);
        let u_nom = library.nominal().action(&model, &x, 0.0);
        let direct = cbf_qp_direct(&u_nom, &a, b, model.input_lower(), model.input_upper())
            .ok_or("direct CBF-QP infeasible")?;
        let diff = d.u_out.iter().zip(&direct).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
        ensure(diff <= 1e-8, format!("state {x:?}: filter {:?} vs CBF-QP {direct:?}", d.u_out))?;
        if d.qp_status == QpStatus::Active {
            active += 1;
        }
    }
    Ok(format!("{n} states ({active} with the row active), max difference {worst:.1e}"))
}

struct DiSweep {
    outcome: ScenarioOutcome,
    seconds: f64,
}

fn di_sweep() -> Result<DiSweep, String> {
    let cfg = load_config("di_grid.json");
    let workers = Workers::available().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let outcome = run_scenario(&cfg, &workers).map_err(|e| e.to_string())?;
    Ok(DiSweep { outcome, seconds: start.elapsed().as_secs_f64() })
}

fn c6_coverage(sweep: &DiSweep) -> Check {
    let ScenarioOutcome::GridSweep { maps, .. } = &sweep.outcome else {
        return Err("DI config is not a grid sweep".into());
    };
    let map = |v: &str| maps.iter().find(|m| m.variant == v).ok_or(format!("variant {v} missing"));
    let full = map(FULL_LIBRARY)?;

    // (a) union of per-policy certification sets, recomputed per cell
    let cfg = load_config("di_grid.json");
    let p = cfg.prepare().map_err(|e| e.to_string())?;
    let snapshot = &p.schedule.snapshots()[0];
    let mut mismatched = 0;
    for d in &full.diagnostics {
        let union = p.library.policies().iter().any(|pol| {
            rollout_value(p.model.as_ref(), pol, snapshot, &d.x0, 0.0, &cfg.filter.rollout, false)
                .map(|r| r.value > cfg.filter.rollout.safety_margin)
                .unwrap_or(false)
        });
        if union != d.certified_t0 {
            mismatched += 1;
        }
    }
    ensure(mismatched == 0, format!("(a) {mismatched} cells differ from the union of policy certification sets"))?;

    // (b) coverage against single-fallback filters
    let (stop, up) = (map("stop")?, map("up")?);
    ensure(
        full.fraction >= stop.fraction - 0.02 && full.fraction >= up.fraction - 0.02,
        format!("(b) coverage {:.3} vs stop {:.3}, up {:.3}", full.fraction, stop.fraction, up.fraction),
    )?;

    // (c) cells classified safe never dip below −1e-3
    for m in maps {
        for d in &m.diagnostics {
            if m.class_at(d.i, d.j) == Some(CellClass::Safe) {
                ensure(d.min_margin >= -1e-3, format!("(c) {} cell ({}, {}) min margin {}", m.variant, d.i, d.j, d.min_margin))?;
            }
        }
    }
    ensure(sweep.seconds < 300.0, format!("sweep took {:.0} s", sweep.seconds))?;
    Ok(format!(
        "(a) {} cells match; (b) coverage PL-CBF {:.3}, stop {:.3}, up {:.3}; (c) ok; sweep {:.0} s",
        full.diagnostics.len(),
        full.fraction,
        stop.fraction,
        up.fraction,
        sweep.seconds
    ))
}

fn c7_viability(sweep: &DiSweep) -> Check {
    let ScenarioOutcome::GridSweep { viability, .. } = &sweep.outcome else {
        return Err("DI config is not a grid sweep".into());
    };
    let v = viability.as_ref().ok_or("no viability summary")?;
    ensure(v.history.windows(2).all(|w| w[1] <= w[0]), format!("viable set grew: {:?}", v.history))?;
    ensure(v.counterexamples == 0, format!("{} oracle-viable certified cells violated", v.counterexamples))?;
    ensure(sweep.seconds < 600.0, format!("took {:.0} s", sweep.seconds))?;
    Ok(format!(
        "{} / {} nodes viable after {} sweeps, 0 counterexamples, {} certified cells outside the kernel",
        v.viable_nodes,
        v.nodes,
        v.history.len(),
        v.horizon_gap
    ))
}

fn c8_pseudometric() -> Check {
    let model = di();
    let (horizon, dt) = (2.0, 0.02);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1000;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..n {
        let x = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let a = random_pwc(&mut rng, "a", 5, horizon, 1.0);
        let b = random_pwc(&mut rng, "b", 5, horizon, 1.0);
        let c = random_pwc(&mut rng, "c", 5, horizon, 1.0);
        let d = |p: &Policy, q: &Policy| language_metric(&model, p, q, &x, horizon, dt).unwrap();
        ensure(d(&a, &a) == 0.0, format!("triple {k}: d(a, a) ≠ 0"))?;
        ensure(d(&a, &b).to_bits() == d(&b, &a).to_bits(), format!("triple {k}: asymmetric"))?;
        let gap = d(&a, &c) - d(&a, &b) - d(&b, &c);
        worst = worst.max(gap);
        ensure(gap <= 1e-12, format!("triple {k}: triangle inequality off by {gap:.3e}"))?;
    }
    Ok(format!("{n} triples, largest triangle excess {worst:.2e}"))
}

fn c9_rk4_order() -> Check {
    let q = Quadrotor::new(QuadrotorParams::default()).map_err(|e| e.to_string())?;
    let mut x0 = vec![0.0; 12];
    x0[2] = 2.0;
    x0[3..6].copy_from_slice(&[0.5, -0.3, 0.2]);
    x0[6..9].copy_from_slice(&[0.1, -0.05, 0.2]);
    x0[9..12].copy_from_slice(&[0.3, 0.2, -0.1]);
    let u = [q.hover_thrust() * 1.05, 0.01, -0.015, 0.004];
    let horizon = 1.0;
    let integrate = |dt: f64| -> Vec<f64> {
        let steps = (horizon / dt).round() as usize;
        (0..steps).fold(x0.clone(), |x, _| step_rk4(&q, &x, &u, dt).unwrap())
    };
    let reference = integrate(1e-4);
    let err = |dt: f64| {
        integrate(dt).iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (coarse, fine) = (err(1e-2), err(5e-3));
    let ratio = coarse / fine;
    ensure(ratio >= 12.0, format!("error ratio {ratio:.2} ({coarse:.2e} → {fine:.2e})"))?;
    Ok(format!("terminal error {coarse:.2e} → {fine:.2e}, ratio {ratio:.2}"))
}

fn c10_runtime() -> Check {
    let cfg = load_config("di_grid.json");
    let p = cfg.prepare().map_err(|e| e.to_string())?;
    ensure(
        p.library.len() == 4 && cfg.filter.rollout.horizon == 2.0 && cfg.filter.rollout.dt == 0.02,
        "shipped DI config is not |Π| = 4, T = 2, dt = 0.02",
    )?;
    let spec = cfg.bench.clone().unwrap_or_default();
    let states = cfg.bench_states();
    let params = FilterParams { measure_time: true, ..cfg.filter };
    let report = benchmark_timing(
        p.model.as_ref(),
        &p.library,
        &p.schedule,
        &params,
        &states,
        spec.n_steps,
        spec.warmup,
        &Workers::sequential(),
    )
    .map_err(|e| e.to_string())?;
    let median = report.filter_step.median.ok_or("no timing samples")?;
    let batch: Vec<Vec<f64>> = (0..100).map(|i| states[i % states.len()].clone()).collect();
    let speed = parallel_speedup(
        p.model.as_ref(),
        &p.library,
        &p.schedule.snapshots()[0],
        &batch,
        &cfg.filter.rollout,
        4,
        spec.repeats,
    )
    .map_err(|e| e.to_string())?;
    let summary = format!(
        "median filter_step {:.3} ms, speedup {:.2}x at 4 workers on {} logical cores, bitwise equal {}",
        median * 1e3,
        speed.speedup,
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        speed.bitwise_equal
    );
    ensure(median < 5e-3 && speed.speedup >= 1.5 && speed.bitwise_equal, summary.clone())?;
    Ok(summary)
}

fn c11_closed_loop(sweep: &DiSweep) -> Check {
    let mut checked = 0;
    let ScenarioOutcome::GridSweep { maps, .. } = &sweep.outcome else {
        return Err("DI config is not a grid sweep".into());
    };
    // a single snapshot: the only perception update is t = 0
    for m in maps {
        for d in m.diagnostics.iter().filter(|d| d.certified_t0) {
            checked += 1;
            ensure(
                d.min_margin >= -1e-3 && d.failure.is_none(),
                format!("DI {} cell ({}, {}) certified yet min margin {}", m.variant, d.i, d.j, d.min_margin),
            )?;
        }
    }
    let workers = Workers::available().map_err(|e| e.to_string())?;
    for name in ["highway.json", "quadrotor.json"] {
        let cfg = load_config(name);
        let outcome = run_scenario(&cfg, &workers).map_err(|e| e.to_string())?;
        for run in outcome.runs() {
            if run.log.certified_at_updates {
                checked += 1;
                ensure(
                    run.log.min_margin >= -1e-3,
                    format!("{name} {}: certified at every update yet min margin {}", run.variant, run.log.min_margin),
                )?;
            }
        }
        if let ScenarioOutcome::Quadrotor { sweep: Some(s), .. } = &outcome {
            for e in s.entries.iter().filter(|e| e.certified_at_updates) {
                checked += 1;
                ensure(
                    e.min_margin >= -1e-3,
                    format!("quadrotor N={} seed {} {}: min margin {}", e.count, e.seed, e.variant, e.min_margin),
                )?;
            }
        }
    }
    Ok(format!("{checked} certified runs, all with h ≥ −1e-3 at every logged step"))
}

fn c12_determinism() -> Check {
    let mut replays = 0;
    for name in ["highway.json", "quadrotor.json"] {
        let mut cfg = load_config(name);
        if let ScenarioSpec::Quadrotor(q) = &mut cfg.scenario {
            q.sweep = None;
        }
        let mut reference: Option<String> = None;
        for n in [1, 2, 4] {
            let workers = Workers::new(n).map_err(|e| e.to_string())?;
            let outcome = run_scenario(&cfg, &workers).map_err(|e| e.to_string())?;
            let text = serde_json::to_string(&outcome).map_err(|e| e.to_string())?;
            match &reference {
                None => reference = Some(text),
                Some(r) => ensure(*r == text, format!("{name}: log at {n} workers differs"))?,
            }
            replays += 1;
        }
    }
    Ok(format!("{replays} replays of highway and quadrotor logs bitwise identical at 1, 2 and 4 workers"))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("criterion {n:>2} {name}: PASS ({detail})");
            true
        }
        Err(detail) => {
            println!("criterion {n:>2} {name}: FAIL ({detail})");
            false
        }
    }
}

fn main() {
    // the filter default is the piecewise row form; the reduction check pins T = 0
    assert_eq!(FilterParams::default().barrier, BarrierForm::Pieces);
    let mut ok = true;
    ok &= run(1, "clearance identity", c1_clearance_identity);
    ok &= run(2, "constructive soundness", c2_constructive_soundness);
    ok &= run(3, "Lipschitz transfer", c3_lipschitz_transfer);
    ok &= run(4, "QP correctness", c4_qp);
    ok &= run(5, "vanilla CBF reduction", c5_vanilla_reduction);
    let sweep = di_sweep();
    let sweep = &sweep;
    let with_sweep = |f: fn(&DiSweep) -> Check| -> Box<dyn FnOnce() -> Check + '_> {
        Box::new(move || match sweep {
            Ok(s) => f(s),
            Err(e) => Err(format!("DI sweep failed: {e}")),
        })
    };
    ok &= run(6, "wall-with-gap coverage", with_sweep(c6_coverage));
    ok &= run(7, "viability oracle consistency", with_sweep(c7_viability));
    ok &= run(8, "pseudometric axioms", c8_pseudometric);
    ok &= run(9, "RK4 order", c9_rk4_order);
    ok &= run(10, "runtime and parallel speedup", c10_runtime);
    ok &= run(11, "closed-loop safety", with_sweep(c11_closed_loop));
    ok &= run(12, "determinism replay", c12_determinism);
    if !ok {
        std::process::exit(1);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p oscnet --test acceptance`. Set `OSCNET_ACCEPT` to a
//! comma-separated list of criterion numbers to run a subset.


use std::f64::consts::{FRAC_PI_3, TAU};
use std::fs;
use std::time::Instant;

use common_fd::{central, close, loss_fd, second_difference, Lcg};
use oscnet::cli::{cmd_bench, BenchRow};
use oscnet::integrators::{integrate_ab4, integrate_dopri45, integrate_rk4, resample_hermite};
use oscnet::network::{forward_jet, init_params, DEFAULT_WIDTHS};
use oscnet::problem::{equispaced, trial_jet, Objective, OscillatorProblem, TrialTransformKind};
use oscnet::training::{evaluate_on_grid, train, TrainConfig};
use oscnet::{loss_and_grad, ActivationKind};

// Tolerances, pinned.
const ACT_FD_STEP: f64 = 1e-4;
const ACT_REL_TOL: f64 = 1e-5;
const ACT_ABS_FLOOR: f64 = 1e-7;
const JET_REL_TOL: f64 = 1e-5;
const JET_ABS_FLOOR: f64 = 1e-7;
const JET_POINTS: usize = 100;
const GRAD_FD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_ABS_FLOOR: f64 = 1e-6;
const GRAD_SAMPLES: usize = 50;
const DOPRI_COS_TOL: f64 = 1e-8;
const FIXED_STEP_COS_TOL: f64 = 1e-6;
const CROSS_INTEGRATOR_TOL: f64 = 1e-5;
const SOLVE_LOSS: f64 = 1e-4;
const SOLVE_EPOCHS: usize = 10_000;
const SOLVE_MAX_ERR: f64 = 5e-3;
const BENCH_THRESHOLD: f64 = 1e-3;
const BENCH_BUDGET: usize = 50_000;
const BENCH_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const BENCH_MIN_ORDERED: usize = 3;
const IC_TOL: f64 = 1e-14;
const IC_PARAM_SETS: u64 = 100;

type Outcome = Result<String, String>;

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    for kind in ActivationKind::ALL {
        for i in -50..=50 {
            let z = i as f64 * 0.1;
            for order in 1..=3u8 {
                let fd = central(|x| kind.eval(x, order - 1).unwrap(), z, ACT_FD_STEP);
                let exact = kind.eval(z, order).unwrap();
                if !close(fd, exact, ACT_REL_TOL, ACT_ABS_FLOOR) {
                    return Err(format!("{kind} order {order} at z = {z}: fd {fd} vs {exact}"));
                }
                worst = worst.max((fd - exact).abs() / exact.abs().max(ACT_ABS_FLOOR / ACT_REL_TOL));
            }
        }
    }
    Ok(format!("5 activations x orders 1-3 x 101 points, worst scaled error {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let problem = OscillatorProblem::default_mems();
    let mut rng = Lcg(2024);
    let mut checks = 0;
    for kind in ActivationKind::ALL {
        let params = init_params(&[1, 8, 8, 1], kind, 7).unwrap();
        let net_v = |t: f64| forward_jet(&params, t).unwrap().v;
        for transform in [TrialTransformKind::FirstOrder, TrialTransformKind::SecondOrder] {
            let trial_v =
                |t: f64| trial_jet(transform, &problem, forward_jet(&params, t).unwrap(), t).v;
            for _ in 0..JET_POINTS {
                // stay a step inside the domain so the stencil is well defined
                let t = rng.uniform(problem.t0() + 0.05, problem.t_end() - 0.05);
                let net = forward_jet(&params, t).unwrap();
                let trial = trial_jet(transform, &problem, net, t);
                let pairs = [
                    ("network d1", central(net_v, t, 1e-4), net.d1),
                    ("network d2", second_difference(net_v, t, 1e-2), net.d2),
                    ("trial d1", central(trial_v, t, 1e-4), trial.d1),
                    ("trial d2", second_difference(trial_v, t, 1e-2), trial.d2),
                ];
                for (what, fd, exact) in pairs {
                    if !close(fd, exact, JET_REL_TOL, JET_ABS_FLOOR) {
                        return Err(format!("{kind} {transform:?} {what} at t = {t}: fd {fd} vs {exact}"));
                    }
                    checks += 1;
                }
            }
        }
    }
    Ok(format!("{checks} derivative slots checked on [1,8,8,1] networks"))
}

fn criterion_3() -> Outcome {
    let points = equispaced(25, 0.0, 10.0);
    let mut rng = Lcg(77);
    let mut checks = 0;
    for kind in ActivationKind::ALL {
        let params = init_params(&[1, 8, 8, 1], kind, 3).unwrap();
        for transform in [TrialTransformKind::FirstOrder, TrialTransformKind::SecondOrder] {
            let objective = Objective::new(OscillatorProblem::default_mems(), transform);
            let (_, grads) = loss_and_grad(&params, &objective, &points).map_err(|e| e.to_string())?;
            for _ in 0..GRAD_SAMPLES {
                let i = rng.below(params.len());
                let fd = loss_fd(&params, &objective, &points, i, GRAD_FD_STEP);
                if !close(fd, grads.get(i), GRAD_REL_TOL, GRAD_ABS_FLOOR) {
                    return Err(format!("{kind} {transform:?} param {i}: fd {fd} vs {}", grads.get(i)));
                }
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} parameter derivatives match central differences"))
}

fn criterion_4() -> Outcome {
    let harmonic = OscillatorProblem::harmonic(TAU);
    let cos_err = |tr: &oscnet::integrators::SolutionTrace| {
        tr.times.iter().zip(&tr.values).map(|(t, u)| (u - t.cos()).abs()).fold(0.0, f64::max)
    };
    let n = (TAU / 1e-3).ceil() as usize;
    let h = TAU / n as f64;
    let dopri = integrate_dopri45(&harmonic, 1e-10, 1e-12, TAU).map_err(|e| e.to_string())?;
    let rk4 = integrate_rk4(&harmonic, h, n).map_err(|e| e.to_string())?;
    let ab4 = integrate_ab4(&harmonic, h, n).map_err(|e| e.to_string())?;
    let (e_d, e_r, e_a) = (cos_err(&dopri), cos_err(&rk4), cos_err(&ab4));
    if e_d >= DOPRI_COS_TOL || e_r >= FIXED_STEP_COS_TOL || e_a >= FIXED_STEP_COS_TOL {
        return Err(format!("harmonic errors dopri {e_d:.2e}, rk4 {e_r:.2e}, ab4 {e_a:.2e}"));
    }

    let mems = OscillatorProblem::default_mems();
    let dopri = integrate_dopri45(&mems, 1e-10, 1e-12, 10.0).map_err(|e| e.to_string())?;
    let rk4 = integrate_rk4(&mems, 1e-3, 10_000).map_err(|e| e.to_string())?;
    let ab4 = integrate_ab4(&mems, 1e-3, 10_000).map_err(|e| e.to_string())?;
    let dopri_on_grid = resample_hermite(&dopri, &rk4.times).map_err(|e| e.to_string())?;
    let cross = [
        rk4.max_abs_difference(&dopri_on_grid),
        ab4.max_abs_difference(&dopri_on_grid),
        rk4.max_abs_difference(&ab4),
    ];
    let worst = cross.iter().copied().fold(0.0, f64::max);
    if worst >= CROSS_INTEGRATOR_TOL {
        return Err(format!("MEMS cross-integrator max difference {worst:.2e}"));
    }
    Ok(format!(
        "cos errors dopri {e_d:.1e}, rk4 {e_r:.1e}, ab4 {e_a:.1e}; MEMS pairwise max {worst:.1e}"
    ))
}

fn criterion_5() -> Outcome {
    let problem = OscillatorProblem::harmonic(TAU);
    let mut cfg = TrainConfig::new(ActivationKind::Asu, problem.clone());
    cfg.seed = 1;
    cfg.n_train = 200;
    cfg.epochs_max = SOLVE_EPOCHS;
    cfg.loss_threshold = Some(SOLVE_LOSS);
    cfg.record_every = 100;
    let record = train(&cfg).map_err(|e| e.to_string())?;
    if !record.converged {
        return Err(format!("loss {:.3e} after {} epochs", record.final_train_loss(), record.epochs_run));
    }
    let trace = evaluate_on_grid(&record.final_params, &problem, cfg.transform, 1001).unwrap();
    let err = trace.times.iter().zip(&trace.values).map(|(t, u)| (u - t.cos()).abs()).fold(0.0, f64::max);
    if err >= SOLVE_MAX_ERR {
        return Err(format!("converged in {} epochs but max |u - cos t| = {err:.3e}", record.epochs_run));
    }
    Ok(format!(
        "loss {:.3e} at epoch {}, max |u - cos t| = {err:.3e}, {:.1}s",
        record.final_train_loss(),
        record.epochs_run,
        record.wall_time_seconds
    ))
}

fn ordered(rows: &[BenchRow]) -> (bool, bool) {
    let epochs = |k: ActivationKind| {
        rows.iter()
            .find(|r| r.activation == k)
            .and_then(|r| r.epochs_to_threshold)
            .unwrap_or(usize::MAX)
    };
    use ActivationKind::*;
    let (asu, gcu, sine, mish, tanh) = (epochs(Asu), epochs(Gcu), epochs(Sine), epochs(Mish), epochs(Tanh));
    let chain = asu < gcu && gcu <= sine && sine < mish && mish <= tanh;
    let asu_fastest = [gcu, sine, mish, tanh].iter().all(|&e| asu < e);
    (chain, asu_fastest)
}

fn criterion_6() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut n_chain = 0;
    let mut n_fastest = 0;
    let mut lines = Vec::new();
    for seed in BENCH_SEEDS {
        let cfg_path = tmp.path().join(format!("bench-{seed}.toml"));
        let text = format!(
            "[training]\nseed = {seed}\nloss_threshold = {BENCH_THRESHOLD:e}\nepochs_max = {BENCH_BUDGET}\nrecord_every = 100\n"
        );
        fs::write(&cfg_path, text).map_err(|e| e.to_string())?;
        let (_, rows) = cmd_bench(&cfg_path, Some(&tmp.path().join(format!("seed-{seed}"))))
            .map_err(|e| e.to_string())?;
        let (chain, fastest) = ordered(&rows);
        n_chain += chain as usize;
        n_fastest += fastest as usize;
        let summary: Vec<String> = rows
            .iter()
            .map(|r| {
                let e = r.epochs_to_threshold.map_or("-".into(), |e| e.to_string());
                format!("{}={e}", r.activation)
            })
            .collect();
        let line = format!("seed {seed}: {} (ordered: {chain})", summary.join(" "));
        println!("    {line}");
        lines.push(line);
    }
    let msg = format!("ordering held for {n_chain}/5 seeds, ASU fastest in {n_fastest}/5");
    if n_chain >= BENCH_MIN_ORDERED && n_fastest * 2 > BENCH_SEEDS.len() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_7() -> Outcome {
    let mut cfg = TrainConfig::new(ActivationKind::Gcu, OscillatorProblem::default_mems());
    cfg.widths = vec![1, 32, 32, 1];
    cfg.epochs_max = 300;
    cfg.record_every = 1;
    let a = train(&cfg).map_err(|e| e.to_string())?;
    let b = train(&cfg).map_err(|e| e.to_string())?;
    let bits = |r: &oscnet::training::TrainRecord| {
        r.train_loss_history
            .iter()
            .chain(&r.valid_loss_history)
            .map(|p| (p.epoch, p.loss.to_bits()))
            .collect::<Vec<_>>()
    };
    if bits(&a) != bits(&b) || a.final_params != b.final_params {
        return Err("training histories differ between identical runs".into());
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = tmp.path().join("bench.toml");
    fs::write(
        &cfg_path,
        "[network]\nwidths = [1, 24, 24, 1]\n[training]\nepochs_max = 2000\nloss_threshold = 2e-2\nrecord_every = 50\n",
    )
    .map_err(|e| e.to_string())?;
    let epochs_column = |dir: &str| -> Result<Vec<String>, String> {
        let (path, _) = cmd_bench(&cfg_path, Some(&tmp.path().join(dir))).map_err(|e| e.to_string())?;
        let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
        Ok(text.lines().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect())
    };
    let (c1, c2) = (epochs_column("first")?, epochs_column("second")?);
    if c1 != c2 {
        return Err(format!("bench epoch columns differ: {c1:?} vs {c2:?}"));
    }
    Ok(format!("{} history rows bit-identical; bench epochs {}", a.train_loss_history.len(), c1[1..].join(" ")))
}

fn criterion_8() -> Outcome {
    let problem = OscillatorProblem::default_mems();
    let t0 = problem.t0();
    let mut worst = 0.0f64;
    for seed in 0..IC_PARAM_SETS {
        let kind = ActivationKind::ALL[(seed % 5) as usize];
        let widths: &[usize] = if seed % 2 == 0 { &DEFAULT_WIDTHS } else { &[1, 8, 8, 1] };
        let mut params = init_params(widths, kind, seed).unwrap();
        // non-zero biases so the network output at t0 is generic
        let mut rng = Lcg(seed + 1);
        for layer in &mut params.layers {
            layer.biases.mapv_inplace(|_| rng.uniform(-1.0, 1.0));
        }
        let net = forward_jet(&params, t0).map_err(|e| e.to_string())?;
        let u = trial_jet(TrialTransformKind::SecondOrder, &problem, net, t0);
        worst = worst.max((u.v - FRAC_PI_3).abs()).max(u.d1.abs());
        if (u.v - FRAC_PI_3).abs() > IC_TOL || u.d1.abs() > IC_TOL {
            return Err(format!("seed {seed}: u(t0) = {}, u'(t0) = {}", u.v, u.d1));
        }
    }
    Ok(format!("{IC_PARAM_SETS} parameter sets, worst deviation {worst:.1e}"))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "activation derivatives vs finite differences", criterion_1),
        (2, "network and trial jets vs finite differences", criterion_2),
        (3, "loss gradient vs finite differences", criterion_3),
        (4, "integrators vs analytic and each other", criterion_4),
        (5, "end-to-end harmonic solve with ASU", criterion_5),
        (6, "activation ordering on the MEMS benchmark", criterion_6),
        (7, "determinism of histories and bench epochs", criterion_7),
        (8, "second-order transform meets initial conditions", criterion_8),
    ];
    let selected: Option<Vec<usize>> = std::env::var("OSCNET_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    // libtest-style flags from `cargo test` are ignored
    let mut failures = 0;
    for (id, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {id}: {name} ({secs:.1}s) - {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] criterion {id}: {name} ({secs:.1}s) - {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}

//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use fprc_core::config::{ExperimentConfig, SeedStream};
use fprc_core::control::{disturbance_report, run_suite, summarize_run, ControllerMode, RunLog, ScenarioRun};
use fprc_core::dataset::{simulate_experiment, Dataset};
use fprc_core::esn::{EsnModel, EsnParams};
use fprc_core::experiment::{train_model, ModelArtifact, ModelKind};
use fprc_core::fuzzy::{fcm_cluster, with_bias, FcmConfig, FuzzyParams, FuzzyRuleSet};
use fprc_core::plant::{ActuatorParams, PlayOperatorStack, ReservoirParams};
use fprc_core::signals::{SignalSpec, Unit};
use fprc_core::training::{benchmark_execution, ridge_solve};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn c1_ridge_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d, alpha) = (500, 12, 1e-3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let got = ridge_solve(&x, &y, alpha, Some(&w)).map_err(err)?;
        let mut a = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        for k in 0..n {
            for i in 0..d {
                b[i] += w[k] * x[(k, i)] * y[k];
                for j in 0..d {
                    a[i][j] += w[k] * x[(k, i)] * x[(k, j)];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += alpha;
        }
        let want = gauss_solve(a, b);
        let num: f64 = got.iter().zip(&want).map(|(g, w)| (g - w).powi(2)).sum::<f64>().sqrt();
        let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-8, format!("max relative error {worst:e}"))?;
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("20 systems, max relative error {worst:.1e}, {secs:.2} s"))
}

fn c2_fcm() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let centers = [[0.0, 0.0], [5.0, 4.0]];
    let per = 300;
    let mut data = DMatrix::zeros(2 * per, 2);
    let mut labels = Vec::new();
    for (c, ctr) in centers.iter().enumerate() {
        for k in 0..per {
            let row = c * per + k;
            data[(row, 0)] = ctr[0] + noise.sample(&mut rng);
            data[(row, 1)] = ctr[1] + noise.sample(&mut rng);
            labels.push(c);
        }
    }
    let res = fcm_cluster(&data, &FcmConfig { clusters: 2, seed: 3, ..FcmConfig::default() }).map_err(err)?;
    let u = res.memberships.matrix();
    let row_err = u.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max);
    ensure(row_err < 1e-9, format!("membership row sum off by {row_err:e}"))?;
    let rises = res.objective.windows(2).filter(|w| w[1] > w[0]).count();
    ensure(rises == 0, format!("objective increased {rises} times: {:?}", res.objective))?;
    let dom: Vec<usize> = (0..2 * per).map(|k| res.memberships.dominant(k)).collect();
    let same = dom.iter().zip(&labels).filter(|(a, b)| a == b).count();
    let agree = same.max(2 * per - same) as f64 / (2 * per) as f64;
    ensure(agree >= 0.99, format!("label recovery {:.1}%", 100.0 * agree))?;
    Ok(format!("row sums within {row_err:.1e}, objective monotone over {} iterations, {:.1}% labels", res.objective.len(), 100.0 * agree))
}

fn c3_esn() -> Check {
    let params = EsnParams::default();
    let mut a = EsnModel::new(params.clone()).map_err(err)?;
    let mut b = EsnModel::new(params.clone()).map_err(err)?;
    let r = params.reservoir_size;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    a.set_state(DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0))).map_err(err)?;
    b.set_state(DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0))).map_err(err)?;
    let input = SignalSpec::Multisine {
        frequencies: vec![0.12, 0.04, 0.31, 0.29, 0.25],
        amplitude: 6.5,
        offset: 32.5,
        phase: -std::f64::consts::FRAC_PI_2,
        duration: 0.5,
    }
    .generate(0.005, Unit::Deg)
    .map_err(err)?;
    let mut reached = None;
    let mut gap = f64::INFINITY;
    for (k, th) in input.values.iter().take(100).enumerate() {
        a.update(*th).map_err(err)?;
        b.update(*th).map_err(err)?;
        gap = (a.state() - b.state()).amax();
        if gap < 1e-6 && reached.is_none() {
            reached = Some(k + 1);
        }
    }
    let rho = a.recurrent_weights().clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    ensure(reached.is_some(), format!("state gap after 100 steps {gap:e}"))?;
    ensure((rho - params.spectral_radius).abs() < 1e-6, format!("spectral radius {rho}"))?;
    Ok(format!("gap < 1e-6 after {} steps (final {gap:.1e}), spectral radius {rho:.9}", reached.unwrap()))
}

fn c4_fuzzy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (n, d) = (400, 4);
    let x: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0));
    let y: Vec<f64> = (0..n).map(|k| (3.0 * x[(k, 0)]).sin() + x[(k, 1)] * x[(k, 2)] - x[(k, 3)]).collect();
    let params = FuzzyParams { clusters: 6, sigma: 0.3, ..FuzzyParams::default() };
    let (rules, _) = FuzzyRuleSet::train(&x, &y, &params, 1).map_err(err)?;
    let mut outside = 0;
    for _ in 0..10_000 {
        let s: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..1.5)).collect();
        let out = rules.infer(&s).map_err(err)?;
        let p = rules.rule_outputs(&s);
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if out < lo - slack || out > hi + slack {
            outside += 1;
        }
    }
    ensure(outside == 0, format!("{outside} outputs outside the rule envelope"))?;

    let single = FuzzyParams { clusters: 1, ..params };
    let (one, _) = FuzzyRuleSet::train(&x, &y, &single, 1).map_err(err)?;
    let w = ridge_solve(&with_bias(&x), &y, single.alpha, None).map_err(err)?;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let row: Vec<f64> = x.row(k).iter().copied().collect();
        let plain = w[0] + row.iter().zip(w.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>();
        worst = worst.max((one.infer(&row).map_err(err)? - plain).abs());
    }
    ensure(worst < 1e-10, format!("single-rule model differs from ridge by {worst:e}"))?;
    Ok(format!("10^4 states inside envelope, single rule matches ridge within {worst:.1e}"))
}

fn datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), String> {
    let run = |spec: &SignalSpec, stream| {
        let p = spec.generate(cfg.dt, Unit::KPa).map_err(err)?;
        simulate_experiment(&p, &cfg.actuator, &cfg.models.reservoir, cfg.models.fprc.k_in, cfg.noise, cfg.seed_for(stream))
            .map_err(err)
    };
    Ok((run(&cfg.signals.train, SeedStream::TrainData)?, run(&cfg.signals.test, SeedStream::TestData)?))
}

fn c5_ordering() -> Check {
    let mut lines = Vec::new();
    for seed in 0..5 {
        let cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
        let (train, test) = datasets(&cfg)?;
        let s = cfg.seed_for(SeedStream::Model);
        let fprc = train_model(ModelKind::Fprc, &train, &cfg.models, s).map_err(err)?.artifact.evaluate(&test).map_err(err)?;
        let fl = train_model(ModelKind::FuzzyLinear, &train, &cfg.models, s).map_err(err)?.artifact.evaluate(&test).map_err(err)?;
        lines.push(format!("seed {seed}: {fprc:.2} < {fl:.2}"));
        ensure(fprc < fl, format!("seed {seed}: FPRC {fprc} >= fuzzy-linear {fl}"))?;
    }
    Ok(format!("test RMSE [kPa] {}", lines.join(", ")))
}

fn c6_timing(train: &Dataset, test: &Dataset, cfg: &ExperimentConfig) -> Check {
    let seed = cfg.seed_for(SeedStream::Model);
    let esn = train_model(ModelKind::Esn, train, &cfg.models, seed).map_err(err)?.artifact;
    let fprc = train_model(ModelKind::Fprc, train, &cfg.models, seed).map_err(err)?.artifact;
    let start = Instant::now();
    let t_esn = benchmark_execution(test.len(), 10, || esn.run_inference(test).map(|_| ())).map_err(err)?;
    let t_fprc = benchmark_execution(test.len(), 10, || fprc.run_inference(test).map(|_| ())).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let ratio = t_esn.mean_ms / t_fprc.mean_ms;
    ensure(test.len() == 16000, format!("test series has {} steps", test.len()))?;
    ensure(ratio >= 5.0, format!("speed-up only {ratio:.1}x"))?;
    ensure(secs < 120.0, format!("benchmark took {secs:.1} s"))?;
    Ok(format!(
        "ESN {:.3} us/step, FPRC {:.3} us/step, {ratio:.0}x faster, benchmark {secs:.1} s",
        t_esn.per_step_us(),
        t_fprc.per_step_us()
    ))
}

fn log_of<'a>(runs: &'a [ScenarioRun], scenario: &str, mode: ControllerMode) -> Result<&'a RunLog, String> {
    let run = runs
        .iter()
        .find(|r| r.scenario == scenario && r.mode == mode)
        .ok_or_else(|| format!("missing run {scenario} {mode:?}"))?;
    run.result.as_ref().map_err(|e| format!("{scenario} {mode:?} aborted: {e}"))
}

struct Suite {
    runs: Vec<ScenarioRun>,
    secs: f64,
}

fn control_suite(artifact: &ModelArtifact, cfg: &ExperimentConfig) -> Suite {
    let start = Instant::now();
    let runs = run_suite(&cfg.simulation.scenarios, &ControllerMode::ALL, artifact, &cfg.simulation_settings());
    Suite { runs, secs: start.elapsed().as_secs_f64() }
}

fn c7_control(suite: &Suite, cfg: &ExperimentConfig) -> Check {
    let settle = cfg.simulation.settle;
    let mut parts = Vec::new();
    for s in ["sine-0.2", "sine-0.5", "chirp", "complex"] {
        let ff = log_of(&suite.runs, s, ControllerMode::Feedforward)?.tracking_rmse(settle).map_err(err)?;
        let fb = log_of(&suite.runs, s, ControllerMode::FeedforwardPd)?.tracking_rmse(settle).map_err(err)?;
        ensure(fb < ff, format!("{s}: FPRC+PD RMSE {fb} >= FPRC {ff}"))?;
        parts.push(format!("{s} {fb:.3}<{ff:.3}"));
    }
    for s in ["sine-0.5", "chirp"] {
        let area = |mode| -> Result<f64, String> {
            let log = log_of(&suite.runs, s, mode)?;
            summarize_run(s, "", log, settle).map_err(err)?.loop_area.ok_or_else(|| format!("{s}: no loop extracted"))
        };
        let (a_fb, a_pd) = (area(ControllerMode::FeedforwardPd)?, area(ControllerMode::Pd)?);
        ensure(a_fb < a_pd, format!("{s}: FPRC+PD loop area {a_fb} >= PD {a_pd}"))?;
        parts.push(format!("{s} area {a_fb:.1}<{a_pd:.1}"));
    }
    ensure(suite.secs < 300.0, format!("suite took {:.1} s", suite.secs))?;
    Ok(format!("{} deg / deg^2, suite {:.1} s", parts.join(", "), suite.secs))
}

fn c8_dominance(suite: &Suite, cfg: &ExperimentConfig) -> Check {
    let settle = cfg.simulation.settle;
    let mut worst: f64 = 0.0;
    for s in &cfg.simulation.scenarios {
        let log = log_of(&suite.runs, &s.name, ControllerMode::FeedforwardPd)?;
        let (ff, fb) = (log.rms(settle, |r| r.p_ff), log.rms(settle, |r| r.p_fb));
        ensure(fb < ff, format!("{}: RMS(P_fb) {fb} >= RMS(P_ff) {ff}", s.name))?;
        worst = worst.max(fb / ff);
    }
    Ok(format!("{} runs, max RMS(P_fb)/RMS(P_ff) = {worst:.4}", cfg.simulation.scenarios.len()))
}

fn c9_disturbance(suite: &Suite, cfg: &ExperimentConfig) -> Check {
    let s = cfg.simulation.scenarios.iter().find(|s| s.disturbance.is_some()).ok_or("no disturbance scenario")?;
    let log = log_of(&suite.runs, &s.name, ControllerMode::FeedforwardPd)?;
    let rep = disturbance_report("FPRC+PD", log, s.disturbance.as_ref().unwrap(), cfg.simulation.settle).map_err(err)?;
    ensure(rep.relative_increase < 0.25, format!("RMSE increase {:.1}%", 100.0 * rep.relative_increase))?;
    Ok(format!(
        "clean {:.3} deg, disturbed {:.3} deg, change {:+.1}%",
        rep.clean_rmse,
        rep.disturbed_rmse,
        100.0 * rep.relative_increase
    ))
}

fn fprc_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fprc")).args(args).output().map_err(err)?;
    ensure(out.status.success(), format!("fprc {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn tree(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut all = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                all.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    all.sort();
    all
}

fn c10_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut cfg = ExperimentConfig::default();
    // Shorter experiments so the full command set runs twice in reasonable time.
    for spec in [&mut cfg.signals.train, &mut cfg.signals.test] {
        if let SignalSpec::ChirpLinear { duration, .. } | SignalSpec::Multisine { duration, .. } = spec {
            *duration /= 6.0;
        }
    }
    cfg.bench.repetitions = 2;
    let path = tmp.path().join("run.toml");
    std::fs::write(&path, cfg.to_toml().map_err(err)?).map_err(err)?;
    let c = path.to_str().unwrap();
    let mut commands: Vec<Vec<&str>> = vec![vec!["generate"]];
    for m in ["esn", "fprc", "fuzzy-linear"] {
        commands.push(vec!["train", "--model", m]);
        commands.push(vec!["evaluate", "--model", m]);
    }
    commands.push(vec!["simulate"]);
    for axis in ["epsilon", "clusters", "taps"] {
        commands.push(vec!["sweep", "--axis", axis]);
    }
    commands.push(vec!["bench"]);
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        for cmd in &commands {
            let mut args = vec!["--config", c, "--seed", "7", "--out", out.to_str().unwrap()];
            args.extend(cmd);
            fprc_cli(&args)?;
        }
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let files = tree(&a);
    ensure(files == tree(&b), "runs wrote different file sets")?;
    let mut compared = 0;
    for f in files.iter().filter(|f| !f.to_string_lossy().contains("timing")) {
        let same = std::fs::read(a.join(f)).map_err(err)? == std::fs::read(b.join(f)).map_err(err)?;
        ensure(same, format!("{} differs", f.display()))?;
        compared += 1;
    }
    Ok(format!("{} commands, {compared} output files byte-identical (timing files excluded)", commands.len()))
}

fn shoelace(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    (0..n).map(|i| x[i] * y[(i + 1) % n] - x[(i + 1) % n] * y[i]).sum::<f64>().abs() / 2.0
}

fn triangle(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let up = (0..steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64);
    let down = (0..steps).map(|k| hi - (hi - lo) * k as f64 / steps as f64);
    up.chain(down).collect()
}

fn c11_plant() -> Check {
    let stacks: Vec<(&str, PlayOperatorStack)> = vec![
        ("actuator", ActuatorParams::default().hysteresis.build().map_err(err)?),
        ("reservoir", ReservoirParams::default().hysteresis.build().map_err(err)?),
    ];
    for (name, proto) in &stacks {
        // Same value path at half speed: midpoints inserted between samples.
        let path = SignalSpec::Multisine {
            frequencies: vec![0.3, 0.11, 0.7],
            amplitude: 70.0,
            offset: 225.0,
            phase: 0.0,
            duration: 20.0,
        }
        .generate(0.005, Unit::KPa)
        .map_err(err)?
        .values;
        let (mut fast, mut slow) = (proto.clone(), proto.clone());
        let mut max_diff: f64 = 0.0;
        for k in 0..path.len() {
            let yf = fast.step(path[k]).map_err(err)?;
            if k > 0 {
                slow.step(0.5 * (path[k - 1] + path[k])).map_err(err)?;
            }
            let ys = slow.step(path[k]).map_err(err)?;
            max_diff = max_diff.max((yf - ys).abs());
        }
        ensure(max_diff == 0.0, format!("{name}: rescaled output differs by {max_diff:e}"))?;

        let cycle = triangle(0.0, 450.0, 500);
        let mut s = proto.clone();
        let mut outs = Vec::new();
        for _ in 0..3 {
            outs.push(cycle.iter().map(|u| s.step(*u)).collect::<Result<Vec<f64>, _>>().map_err(err)?);
        }
        let gap = outs[1].iter().zip(&outs[2]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(gap < 1e-12, format!("{name}: triangle loop does not close ({gap:e})"))?;
    }

    let dt = 0.005;
    let slow = triangle(0.0, 350.0, 4000);
    let mut act = ActuatorParams::default().build().map_err(err)?;
    let mut res = ReservoirParams::default().build().map_err(err)?;
    let (mut th, mut po) = (Vec::new(), Vec::new());
    for rep in 0..2 {
        for u in &slow {
            let a = act.step(*u, dt).map_err(err)?.value;
            let p = res.step(*u, dt).map_err(err)?.value;
            if rep == 1 {
                th.push(a);
                po.push(p);
            }
        }
    }
    let area_act = shoelace(&slow, &th);
    let area_res = shoelace(&slow, &po);
    ensure(area_act > 0.0, "actuator loop has zero area")?;
    ensure(area_res > 0.0, "reservoir loop has zero area")?;
    Ok(format!(
        "rate-independent (exact), loops close within 1e-12, areas: actuator {area_act:.0} kPa*deg, reservoir {area_res:.0} kPa^2"
    ))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    let mut record = |id, name, res: Check| {
        let tag = if res.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &res {
            Ok(s) | Err(s) => s.clone(),
        };
        println!("criterion {id:>2} {tag} {name}: {detail}");
        results.push((id, name, res));
    };

    record(1, "ridge oracle", c1_ridge_oracle());
    record(2, "FCM correctness", c2_fcm());
    record(3, "ESN washout and spectral radius", c3_esn());
    record(4, "fuzzy convexity and single-rule collapse", c4_fuzzy());
    record(5, "FPRC beats fuzzy-linear on 5 seeds", c5_ordering());

    let cfg = ExperimentConfig::default();
    match datasets(&cfg) {
        Ok((train, test)) => {
            record(6, "FPRC inference >= 5x faster than ESN", c6_timing(&train, &test, &cfg));
            match train_model(ModelKind::Fprc, &train, &cfg.models, cfg.seed_for(SeedStream::Model)) {
                Ok(outcome) => {
                    let suite = control_suite(&outcome.artifact, &cfg);
                    record(7, "control benefit", c7_control(&suite, &cfg));
                    record(8, "feedforward dominance", c8_dominance(&suite, &cfg));
                    record(9, "disturbance robustness", c9_disturbance(&suite, &cfg));
                }
                Err(e) => {
                    for (id, name) in [(7, "control benefit"), (8, "feedforward dominance"), (9, "disturbance robustness")] {
                        record(id, name, Err(format!("training failed: {e}")));
                    }
                }
            }
        }
        Err(e) => {
            for (id, name) in [(6, "timing"), (7, "control benefit"), (8, "feedforward dominance"), (9, "disturbance robustness")] {
                record(id, name, Err(format!("dataset generation failed: {e}")));
            }
        }
    }
    record(10, "CLI determinism", c10_determinism());
    record(11, "plant surrogate properties", c11_plant());

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! The benchmark criteria (4 to 7) train width-128/depth-8 models, which
//! takes hours on one core at the full budget. By default they run at a short
//! budget and are reported without failing the run; set
//! `HIPNET_ACCEPTANCE=full` to run the full protocol and enforce them, or
//! `HIPNET_ACCEPTANCE=oracles` to skip them.
//! `HIPNET_ACCEPTANCE_EPOCHS` overrides the full-budget epoch count.

use std::path::Path;
use std::time::Instant;

use hipnet::assignment::assign;
use hipnet::cli::{self, FrameSelect};
use hipnet::evalmesh::{chamfer_l1, extract_mesh, per_joint_miou, uniform_miou, EvalConfig, MetricReport};
use hipnet::geom::{Aabb, P3};
use hipnet::model::{HipnetModel, ModelConfig};
use hipnet::pipeline::{evaluate_model, every_nth, subject_beta, train_on_dataset};
use hipnet::skeleton::{flatten, Pose};
use hipnet::synthdata::{
    desk_limits, desk_skeleton, make_dataset, random_motion, sample_surface, subject_figure, Dataset, DatasetConfig,
    FrameRecord, Split, DESK_BONE_RADIUS,
};
use hipnet::training::losses::{batch_objective, eikonal_loss, eikonal_points, Scaled};
use hipnet::training::{fit_subject, train, Batch, CodeSource, FitConfig, LossWeights, TrainConfig};
use hipnet::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn tiny(d_beta: usize) -> ModelConfig {
    ModelConfig {
        hidden: 16,
        depth: 4,
        skip_at: 2,
        encoder_hidden: 16,
        encoder_layers: 2,
        d_phi: 6,
        d_beta,
        hierarchical: true,
        init_radius: 0.5,
    }
}

fn desk_pose(seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_motion(&desk_skeleton(), &desk_limits(), 3, &mut rng).unwrap().remove(2)
}

// ---------------------------------------------------------------- 1

/// Central difference refined by one Richardson step.
fn fd(mut f: impl FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let mut central = |h: f64| -> Result<f64> { Ok((f(h)? - f(-h)?) / (2.0 * h)) };
    let (coarse, fine) = (central(h)?, central(h / 2.0)?);
    Ok((4.0 * fine - coarse) / 3.0)
}

fn gradients() -> Result<Outcome> {
    let t = Instant::now();
    let sk = desk_skeleton();
    let fig = subject_figure(&sk, &DESK_BONE_RADIUS, 0, 1, 0)?;
    // (lambda_eikonal, lambda_normal, sub-network terms): each term alone on
    // top of the surface term, then all of them
    let settings = [(0.0, 0.0, false), (0.0, 1.0, false), (1.0, 0.0, false), (0.0, 0.0, true), (0.1, 0.1, true)];
    let h = 2e-6;
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    for c in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + c);
        let mut model = HipnetModel::new(&sk, 2, tiny(4), c)?;
        // away from the geometric init, where many paths are exactly zero
        let jitter = Normal::new(0.0, 0.2).unwrap();
        for t in model.params_mut() {
            for v in t.data_mut() {
                *v += jitter.sample(&mut rng);
            }
        }
        let pose = desk_pose(c);
        let pv = flatten(&pose);
        let cloud = sample_surface(&fig, &pose, 10, c)?;
        let batch = Batch {
            surface: cloud.points.clone(),
            normals: cloud.normals.clone(),
            labels: (0..10).map(|_| rng.random_range(0..6)).collect(),
            eikonal: eikonal_points(&cloud.points, 10, 0.05, &mut rng),
        };
        let (le, ln, sub) = settings[c as usize % settings.len()];
        let w = LossWeights {
            lambda_eikonal: le,
            lambda_normal: ln,
            subnetworks: sub,
        };
        // round-off in the loss values limits what a difference quotient
        // can resolve to roughly 1e-10 |L| / h; smaller slopes are compared
        // against that floor instead of their own size
        let mut rel = |a: f64, n: f64, loss: f64, what: String| {
            let floor = 1e-5 * loss.abs().max(1.0);
            let e = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if e > worst.0 {
                worst = (e, format!("{what} in configuration {c}: {a:.6e} vs {n:.6e}"));
            }
            checked += 1;
        };
        // network weights and the code table, one coordinate per tensor
        let code = CodeSource::Table((c % 2) as usize);
        let (loss, grads) = batch_objective(&model, &pv, code, &batch, &w, 4)?;
        let mut probe = model.clone();
        for (g, grad) in grads.iter().enumerate() {
            let i = rng.random_range(0..grad.len());
            let x = probe.params()[g].data()[i];
            let n = fd(
                |d| {
                    probe.params_mut()[g].data_mut()[i] = x + d;
                    let v = batch_objective(&probe, &pv, code, &batch, &w, 4)?.0.total;
                    probe.params_mut()[g].data_mut()[i] = x;
                    Ok(v)
                },
                h,
            )?;
            rel(grad.data()[i], n, loss.total, format!("{}[{i}]", model.param_names()[g]));
        }
        // a free code, as in test-time fitting
        let free: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (loss, cg) = batch_objective(&model, &pv, CodeSource::Free(&free), &batch, &w, 4)?;
        for i in 0..free.len() {
            let n = fd(
                |d| {
                    let mut b = free.clone();
                    b[i] += d;
                    Ok(batch_objective(&model, &pv, CodeSource::Free(&b), &batch, &w, 4)?.0.total)
                },
                h,
            )?;
            rel(cg[0].data()[i], n, loss.total, format!("free code[{i}]"));
        }
    }
    outcome(
        worst.0 <= 1e-4,
        format!(
            "max relative error {:.2e} over {checked} coordinates, at {} ({:.0}s)",
            worst.0,
            worst.1,
            t.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn eikonal() -> Result<Outcome> {
    let fig = subject_figure(&desk_skeleton(), &DESK_BONE_RADIUS, 0, 1, 2)?;
    let pose = desk_pose(4);
    let posed = fig.posed(&pose);
    let cloud = sample_surface(&fig, &pose, 5000, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = eikonal_points(&cloud.points, 10_000, 0.05, &mut rng);
    let exact = eikonal_loss(&posed, &pts)?;
    let doubled = eikonal_loss(&Scaled(&posed, 2.0), &pts)?;
    outcome(
        exact < 1e-6 && (doubled - 1.0).abs() <= 1e-9,
        format!("exact {exact:.2e}, doubled {doubled:.12}"),
    )
}

// ---------------------------------------------------------------- 3

fn recombination() -> Result<Outcome> {
    let sk = desk_skeleton();
    let figs: Vec<_> = (0..2).map(|s| subject_figure(&sk, &DESK_BONE_RADIUS, s, 2, 5).unwrap()).collect();
    let mut frames = Vec::new();
    for (s, fig) in figs.iter().enumerate() {
        for f in 0..3 {
            let mut pose = desk_pose(20 + (s * 3 + f) as u64);
            pose.subject = s as u32;
            let mut cloud = sample_surface(fig, &pose, 300, f as u64)?;
            cloud.labels = assign(&cloud.points, &pose, 8)?;
            frames.push(FrameRecord { pose, cloud });
        }
    }
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for (le, ln) in [(0.1, 0.1), (0.37, 2.5)] {
        let c = TrainConfig {
            lambda_eikonal: le,
            lambda_normal: ln,
            surface_points: 200,
            eikonal_points: 200,
            lr: 1e-3,
            epochs: 3,
            chunk_rows: 64,
            model: tiny(4),
            ..TrainConfig::default()
        };
        let model = HipnetModel::new(&sk, 2, c.model.clone(), 1)?;
        let (_, history) = train(model, &frames, &c)?;
        for r in &history {
            worst = worst.max((r.loss.total - r.loss.recombine(&c.weights())).abs());
        }
        steps += history.len();
    }
    outcome(worst <= 1e-12, format!("max |total - weighted sum| {worst:.2e} over {steps} steps"))
}

// ---------------------------------------------------------------- 4 to 7

struct Budget {
    full: bool,
    points: usize,
    batch: usize,
    epochs: usize,
    /// Step cap for the multi-subject models (single-subject get half).
    max_steps: Option<usize>,
    eval: EvalConfig,
    eval_stride: usize,
    fit_iterations: usize,
}

impl Budget {
    fn from_env() -> Self {
        let full = std::env::var("HIPNET_ACCEPTANCE").is_ok_and(|v| v == "full");
        let eval = |samples, resolution| EvalConfig {
            uniform_samples: samples,
            surface_samples: samples,
            chamfer_samples: samples,
            resolution,
            seed: 7,
            ..EvalConfig::default()
        };
        if full {
            let epochs = std::env::var("HIPNET_ACCEPTANCE_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(20);
            Budget {
                full,
                points: 5000,
                batch: 500,
                epochs,
                max_steps: None,
                eval: eval(100_000, 96),
                eval_stride: 10,
                fit_iterations: 100,
            }
        } else {
            Budget {
                full,
                points: 2000,
                batch: 500,
                epochs: 1,
                max_steps: Some(48),
                eval: eval(5000, 48),
                eval_stride: 20,
                fit_iterations: 10,
            }
        }
    }

    fn describe(&self) -> String {
        match self.max_steps {
            Some(m) => format!("short budget: {m} steps"),
            None => format!("{} epochs", self.epochs),
        }
    }
}

struct Bench {
    ds: Dataset,
    full: MetricReport,
    flat: MetricReport,
    base: MetricReport,
    single: Vec<MetricReport>,
    model: HipnetModel,
    seconds: f64,
}

fn run_benchmark(b: &Budget, dir: &Path) -> Result<Bench> {
    let t = Instant::now();
    let data = dir.join("data");
    make_dataset(
        &DatasetConfig {
            subjects: 2,
            sequences: 8,
            frames: 20,
            points: b.points,
            seed: 7,
            neighbors: 8,
        },
        &data,
    )?;
    let ds = Dataset::open(&data)?;
    let base_config = TrainConfig {
        surface_points: b.batch,
        eikonal_points: b.batch,
        lr: 1e-3,
        epochs: b.epochs,
        seed: 7,
        model: ModelConfig {
            hidden: 128,
            depth: 8,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let refs = every_nth(ds.frames(Split::Test), b.eval_stride);
    let score = |name: &str, config: &TrainConfig, subject: Option<usize>| -> Result<(MetricReport, HipnetModel)> {
        let out = dir.join(name);
        let cap = if subject.is_some() { b.max_steps.map(|m| m / 2) } else { b.max_steps };
        train_on_dataset(&ds, config, &out, None, subject, cap, |_| {})?;
        let (m, _) = HipnetModel::load(&out.join("model.hipw"), &ds.skeleton)?;
        let mine: Vec<_> = refs.iter().filter(|r| subject.is_none_or(|s| r.subject == s)).cloned().collect();
        let report = evaluate_model(&m, &ds, &mine, &b.eval, |s| subject_beta(&m, s))?;
        println!(
            "  {name}: uniform {:.2} near {:.2} chamfer {:.4} ({:.0}s so far)",
            report.uniform_miou,
            report.near_surface_miou,
            report.chamfer_l1,
            t.elapsed().as_secs_f64()
        );
        Ok((report, m))
    };
    let (full, model) = score("full", &base_config, None)?;
    let mut flat_config = base_config.clone();
    flat_config.model.hierarchical = false;
    let (flat, _) = score("flat", &flat_config, None)?;
    let mut base = flat_config.clone();
    base.subnetwork_losses = false;
    let (base, _) = score("base", &base, None)?;
    let mut single_config = base_config.clone();
    single_config.model = single_config.model.single_subject();
    let mut single = Vec::new();
    for s in 0..2 {
        single.push(score(&format!("single{s}"), &single_config, Some(s))?.0);
    }
    Ok(Bench {
        ds,
        full,
        flat,
        base,
        single,
        model,
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn benchmark_scores(bench: &Bench) -> Result<Outcome> {
    let r = &bench.full;
    outcome(
        r.uniform_miou >= 95.0 && r.near_surface_miou >= 90.0 && r.chamfer_l1 <= 0.05,
        format!(
            "uniform {:.2}% (>= 95), near-surface {:.2}% (>= 90), chamfer {:.4} (<= 0.05), {:.0}s total",
            r.uniform_miou, r.near_surface_miou, r.chamfer_l1, bench.seconds
        ),
    )
}

fn ablation(bench: &Bench) -> Result<Outcome> {
    let (f, h, b) = (bench.full.uniform_miou, bench.flat.uniform_miou, bench.base.uniform_miou);
    let (hier_gap, sub_gap) = (f - h, h - b);
    outcome(
        f >= h && h >= b && sub_gap >= hier_gap,
        format!("full {f:.2} >= flat {h:.2} >= base {b:.2}; sub-network gap {sub_gap:.2} vs hierarchy gap {hier_gap:.2}"),
    )
}

fn multi_vs_single(bench: &Bench) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, single) in bench.single.iter().enumerate() {
        let multi: Vec<f64> = bench.full.frames.iter().filter(|f| f.subject as usize == s).map(|f| f.chamfer_l1).collect();
        let multi = multi.iter().sum::<f64>() / multi.len() as f64;
        pass &= multi <= 1.2 * single.chamfer_l1;
        parts.push(format!("subject {s}: multi {multi:.4} vs single {:.4}", single.chamfer_l1));
    }
    outcome(pass, parts.join("; "))
}

fn fitting(bench: &Bench, b: &Budget) -> Result<Outcome> {
    let ds = &bench.ds;
    let test = ds.frames(Split::Test);
    let r = &test[test.len() / 4];
    let sel = FrameSelect {
        subject: r.subject,
        sequence: r.sequence,
        frame: r.frame,
    };
    let rec = cli::resample_frame(ds, &sel, 10_000, 11)?;
    let pv = flatten(&rec.pose);
    let posed = ds.figures[r.subject].posed(&rec.pose);
    let gt = |p: &[P3]| Ok(posed.sdf_batch(p));
    let fit = FitConfig {
        iterations: b.fit_iterations,
        ..FitConfig::default()
    };
    let score = |cloud: &hipnet::synthdata::OrientedCloud| -> Result<f64> {
        let code = fit_subject(&bench.model, cloud, &pv, &fit)?;
        uniform_miou(
            |p: &[P3]| bench.model.eval_sdf(p, &pv, &code),
            gt,
            &posed.bounds(),
            b.eval.uniform_samples,
            3,
        )
    };
    let first = |cloud: &hipnet::synthdata::OrientedCloud, n: usize| cloud.subset(&(0..n.min(cloud.len())).collect::<Vec<_>>());
    let mut curve = Vec::new();
    for n in [0, 1000, 5000, 10_000] {
        curve.push(score(&first(&rec.cloud, n))?);
    }
    let front = score(&first(&rec.cloud.front_only(), 1000))?;
    let monotone = curve.windows(2).all(|w| w[1] >= w[0]);
    outcome(
        monotone && (front - curve[3]).abs() <= 3.0,
        format!(
            "mIoU at 0/1k/5k/10k points {:.2}/{:.2}/{:.2}/{:.2}; 1k front-only {front:.2}",
            curve[0], curve[1], curve[2], curve[3]
        ),
    )
}

// ---------------------------------------------------------------- 8

fn per_joint() -> Result<Outcome> {
    let sk = desk_skeleton();
    let fig = subject_figure(&sk, &DESK_BONE_RADIUS, 0, 1, 9)?;
    let pose = desk_pose(8);
    let posed = fig.posed(&pose);
    let cloud = sample_surface(&fig, &pose, 20_000, 2)?;
    let labels = assign(&cloud.points, &pose, 8)?;
    let gt = |p: &[P3]| Ok(posed.sdf_batch(p));
    // shrink the field inside a ball around the left hand
    let hand = pose.position(3);
    let corrupt = |p: &[P3]| {
        Ok(p.iter()
            .map(|q| {
                let d = (hipnet::geom::v3(q) - hand).norm();
                let w = (1.0 - (d / 0.3).powi(2)).max(0.0).powi(2);
                posed.sdf(q) + 0.08 * w
            })
            .collect())
    };
    let clean = per_joint_miou(gt, gt, &cloud.points, &labels, 6, 0.03, 1)?;
    let bad = per_joint_miou(corrupt, gt, &cloud.points, &labels, 6, 0.03, 1)?;
    let all = clean.iter().chain(&bad).all(Option::is_some);
    if !all {
        return outcome(false, format!("missing joints: {bad:?}"));
    }
    let delta: Vec<f64> = clean.iter().zip(&bad).map(|(a, b)| a.unwrap() - b.unwrap()).collect();
    // the hand's only neighbour is the left shoulder (2)
    let far_ok = [0, 1, 4, 5].iter().all(|&k| delta[k].abs() < 2.0);
    outcome(
        delta[3] >= 10.0 && far_ok,
        format!(
            "drop per joint {:?}",
            delta.iter().map(|d| (d * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn metric_oracles() -> Result<Outcome> {
    let fig = subject_figure(&desk_skeleton(), &DESK_BONE_RADIUS, 0, 1, 3)?;
    let pose = desk_pose(1);
    let posed = fig.posed(&pose);
    let gt = |p: &[P3]| Ok(posed.sdf_batch(p));
    let selfiou = uniform_miou(gt, gt, &posed.bounds(), 100_000, 1)?;
    let mesh = extract_mesh(gt, 96, &posed.bounds().padded(0.1))?;
    let chamfer = chamfer_l1(&mesh, &mesh, 100_000, 2)?;
    let (r_in, r_out) = (0.4, 0.5);
    let ball = |r: f64| move |p: &[P3]| Ok(p.iter().map(|q| (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt() - r).collect());
    let nested = uniform_miou(ball(r_in), ball(r_out), &Aabb::cube(r_out), 200_000, 5)?;
    let closed = 100.0 * (r_in / r_out).powi(3);
    outcome(
        selfiou == 100.0 && chamfer < 1e-3 && (nested - closed).abs() <= 0.5,
        format!("self IoU {selfiou}%, self chamfer {chamfer:.2e}, nested spheres {nested:.2}% vs {closed:.2}%"),
    )
}

// ---------------------------------------------------------------- 10

fn reproducibility(dir: &Path) -> Result<Outcome> {
    let data = dir.join("data");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    cli::run([
        "hipnet", "gen-data", "--subjects", "2", "--sequences", "4", "--frames", "3", "--points", "400", "--out", &s(&data),
    ])?;
    let config = dir.join("tiny.json");
    std::fs::write(
        &config,
        r#"{"epochs": 2, "surface_points": 200, "eikonal_points": 200,
            "model": {"hidden": 16, "depth": 4, "skip_at": 2, "encoder_hidden": 16, "d_phi": 6}}"#,
    )
    .unwrap();
    let mut ckpts = Vec::new();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        cli::run(["hipnet", "train", "--data", &s(&data), "--config", &s(&config), "--out", &s(&out)])?;
        ckpts.push(std::fs::read(out.join("model.hipw")).unwrap());
        let report = dir.join(format!("{run}.json"));
        cli::run([
            "hipnet", "eval", "--data", &s(&data), "--checkpoint", &s(&dir.join("a")), "--samples", "3000",
            "--resolution", "32", "--out", &s(&report),
        ])?;
        reports.push(std::fs::read(report).unwrap());
    }
    outcome(
        ckpts[0] == ckpts[1] && reports[0] == reports[1],
        format!(
            "checkpoints {} ({} bytes), reports {}",
            if ckpts[0] == ckpts[1] { "identical" } else { "differ" },
            ckpts[0].len(),
            if reports[0] == reports[1] { "identical" } else { "differ" }
        ),
    )
}

fn benchmark(budget: &Budget, dir: &Path, report: &mut impl FnMut(usize, bool, Result<Outcome>)) {
    println!("benchmark ({}):", budget.describe());
    match run_benchmark(budget, &dir.join("bench")) {
        Ok(bench) => {
            report(4, budget.full, benchmark_scores(&bench));
            report(5, budget.full, ablation(&bench));
            report(6, budget.full, multi_vs_single(&bench));
            report(7, budget.full, fitting(&bench, budget));
        }
        Err(e) => {
            for n in 4..=7 {
                report(n, budget.full, Err(hipnet::HipError::Input(format!("benchmark failed: {e}"))));
            }
        }
    }
}

fn main() {
    let budget = Budget::from_env();
    let tmp = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    let mut report = |n: usize, enforced: bool, r: Result<Outcome>| {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if enforced { "" } else { " [not enforced]" };
        println!("criterion {n:2}: {tag} {detail}{note}");
        if !pass && enforced {
            failed.push(n);
        }
    };
    report(1, true, gradients());
    report(2, true, eikonal());
    report(3, true, recombination());
    if std::env::var("HIPNET_ACCEPTANCE").is_ok_and(|v| v == "oracles") {
        for n in 4..=7 {
            println!("criterion {n:2}: SKIP benchmark not run");
        }
    } else {
        benchmark(&budget, tmp.path(), &mut report);
    }
    report(8, true, per_joint());
    report(9, true, metric_oracles());
    let repro = tmp.path().join("repro");
    std::fs::create_dir_all(&repro).unwrap();
    report(10, true, reproducibility(&repro));
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

//! Acceptance suite. Runs every criterion in order at its stated tolerance
//! and prints one PASS/FAIL line per criterion; exits non-zero if any fail.
//!
//! Run with `cargo test -p cvgebd --test acceptance`. A single criterion can
//! be selected by number: `cargo test -p cvgebd --test acceptance -- 7`.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use cvgebd::accumulate::{accumulate_gop, reconstruct_from_accumulated};
use cvgebd::codec::{decode_sequential, encode_video, read_container_bytes, write_container_bytes, CodecParams, CompressedVideo, RawVideo};
use cvgebd::head::{contrast_features, gaussian_soft_labels, parse_predictions, BoundaryHead};
use cvgebd::metrics::{match_one_to_one, read_annotations, score_corpus, thresholds, uniform_baseline, Annotation};
use cvgebd::model::{pooled_aux, ConvEncoder, GopInput, Model, ModelConfig, PFrameInput, ScceBranch};
use cvgebd::pipeline::{self, PipelineConfig};
use cvgebd::tensor::{gradient_check, Conv1d, Conv2d, Dense, GradCheckOptions, Initializer, ParamSet, Tensor};
use cvgebd::head::Prediction;
use rand::RngExt;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------- 1 and 2

struct CodecCase {
    raw: RawVideo,
    cv: CompressedVideo,
}

fn codec_corpus() -> Vec<RawVideo> {
    let mut r = rng(0xc0dec);
    (0..50)
        .map(|i| {
            let w = r.random_range(16..=64);
            let h = r.random_range(16..=64);
            let frames = r.random_range(24..=48);
            let noise = if i % 2 == 0 { 0 } else { r.random_range(1..=40) };
            random_video(&mut r, w, h, frames, noise)
        })
        .collect()
}

fn criterion_codec(cases: &mut Vec<CodecCase>) -> Outcome {
    let raws = codec_corpus();
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for (i, raw) in raws.into_iter().enumerate() {
        let cv = encode_video(&raw, &CodecParams::default()).expect("encode");
        let bytes = write_container_bytes(&cv).expect("serialize");
        let parsed = read_container_bytes(&bytes).expect("parse");
        let decoded = decode_sequential(&parsed).expect("decode");
        if decoded.frames != raw.frames || parsed != cv {
            mismatches.push(i);
        }
        cases.push(CodecCase { raw, cv: parsed });
    }
    let elapsed = start.elapsed();
    let frames: usize = cases.iter().map(|c| c.raw.frames.len()).sum();
    outcome(
        mismatches.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "50 videos ({frames} frames) encode→container→decode, {} mismatching, {} (limit 60s)",
            mismatches.len(),
            secs(elapsed)
        ),
    )
}

fn criterion_accumulation(cases: &[CodecCase]) -> Outcome {
    let (mut checked, mut bad) = (0usize, 0usize);
    for c in cases {
        let decoded = decode_sequential(&c.cv).expect("decode");
        for (gop, start) in c.cv.gops.iter().zip(c.cv.gop_starts()) {
            let acc = accumulate_gop(gop, c.cv.block_size).expect("accumulate");
            for a in &acc {
                let rec = reconstruct_from_accumulated(&gop.iframe, a).expect("reconstruct");
                checked += 1;
                if rec != decoded.frames[start + a.t] {
                    bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0 && checked > 0,
        format!("{checked} P-frames rebuilt from the I-frame alone, {bad} differ from sequential decode"),
    )
}

// ---------------------------------------------------------------- 3

/// Loss `Σ r ⊙ y` for a random projection `r`, so every output entry
/// contributes to the gradient.
fn projection(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn layer_checks(seed: u64, opts: &GradCheckOptions) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut r = rng(seed);

    // conv2d
    {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        let layer = Conv2d::new(&mut ps, &mut init, "conv", 3, 4, 3).unwrap();
        randomize_biases(&mut ps, &mut r);
        let x = random_tensor(&[3, 5, 6], &mut r);
        let proj = random_tensor(&[4, 5, 6], &mut r);
        let rep = gradient_check(
            |p| {
                let y = layer.forward(p, &x)?;
                let mut g = p.grad_buffer();
                layer.backward(p, &x, &proj, &mut g, false)?;
                Ok((projection(&y, &proj), g))
            },
            &ps,
            opts,
        )
        .unwrap();
        out.push(("conv2d", rep.max_rel_err));
    }
    // conv1d
    {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        let layer = Conv1d::new(&mut ps, &mut init, "conv1d", 5, 3, 3).unwrap();
        randomize_biases(&mut ps, &mut r);
        let x = random_tensor(&[5, 9], &mut r);
        let proj = random_tensor(&[3, 9], &mut r);
        let rep = gradient_check(
            |p| {
                let y = layer.forward(p, &x)?;
                let mut g = p.grad_buffer();
                layer.backward(p, &x, &proj, &mut g)?;
                Ok((projection(&y, &proj), g))
            },
            &ps,
            opts,
        )
        .unwrap();
        out.push(("conv1d", rep.max_rel_err));
    }
    // dense
    {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        let layer = Dense::new(&mut ps, &mut init, "dense", 7, 4).unwrap();
        randomize_biases(&mut ps, &mut r);
        let x = random_tensor(&[7], &mut r);
        let proj = random_tensor(&[4], &mut r);
        let rep = gradient_check(
            |p| {
                let y = layer.forward(p, &x)?;
                let mut g = p.grad_buffer();
                layer.backward(p, &x, &proj, &mut g)?;
                Ok((projection(&y, &proj), g))
            },
            &ps,
            opts,
        )
        .unwrap();
        out.push(("dense", rep.max_rel_err));
    }
    // feature encoder (conv, relu, average pooling)
    {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        let enc = ConvEncoder::new(&mut ps, &mut init, "enc", &[2, 4, 8], 2).unwrap();
        randomize_biases(&mut ps, &mut r);
        let x = random_tensor(&[2, 16, 16], &mut r);
        let proj = random_tensor(&[8, 2, 2], &mut r);
        let rep = gradient_check(
            |p| {
                let (y, cache) = enc.forward_cached(p, &x)?;
                let mut g = p.grad_buffer();
                enc.backward(p, &cache, &proj, &mut g)?;
                Ok((projection(&y, &proj), g))
            },
            &ps,
            opts,
        )
        .unwrap();
        out.push(("encoder", rep.max_rel_err));
    }
    // gated branch (trunk, channel gate, spatial gate, refinement)
    {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        let branch = ScceBranch::new(&mut ps, &mut init, "scce", 8, 2).unwrap();
        randomize_biases(&mut ps, &mut r);
        let x_i = random_tensor(&[8, 3, 4], &mut r);
        let x_aux = random_tensor(&[8, 3, 4], &mut r);
        let aux_ds = random_tensor(&[2, 3, 4], &mut r);
        let proj = random_tensor(&[8], &mut r);
        let rep = gradient_check(
            |p| {
                let (o, cache) = branch.forward_cached(p, &x_i, &x_aux, &aux_ds)?;
                let mut g = p.grad_buffer();
                branch.backward(p, &x_i, &o, &cache, &proj, &mut g)?;
                Ok((projection(&o.v, &proj), g))
            },
            &ps,
            opts,
        )
        .unwrap();
        out.push(("scce_branch", rep.max_rel_err));
    }
    // contrast + classifier
    {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(seed);
        let head = BoundaryHead::new(&mut ps, &mut init, 8, 3).unwrap();
        randomize_biases(&mut ps, &mut r);
        let seq = random_tensor(&[8, 10], &mut r);
        let proj = random_tensor(&[1, 10], &mut r);
        let rep = gradient_check(
            |p| {
                let (y, cache) = head.logits_cached(p, &seq)?;
                let mut g = p.grad_buffer();
                head.backward(p, &seq, &cache, &proj, &mut g)?;
                Ok((projection(&y, &proj), g))
            },
            &ps,
            opts,
        )
        .unwrap();
        out.push(("contrast_head", rep.max_rel_err));
    }
    out
}

fn randomize_biases(ps: &mut ParamSet, r: &mut rand_xoshiro::Xoshiro256PlusPlus) {
    for p in ps.iter_mut() {
        if p.name.ends_with(".bias") {
            for v in p.value.data_mut() {
                *v = r.random_range(-0.3..0.3);
            }
        }
    }
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let opts = GradCheckOptions::default();
    let mut worst_layer = ("", 0.0f64);
    for seed in 0..5 {
        for (name, err) in layer_checks(seed, &opts) {
            if err > worst_layer.1 {
                worst_layer = (name, err);
            }
        }
    }
    let cfg = PipelineConfig::default();
    let composite = pipeline::run_gradcheck(&cfg).expect("composite gradient check");
    let elapsed = start.elapsed();
    let passed = worst_layer.1 < 1e-6 && composite.passed() && composite.max_rel_err() < 1e-5 && elapsed < Duration::from_secs(300);
    outcome(
        passed,
        format!(
            "layers max rel err {:.2e} ({}) < 1e-6; full model on {} toy videos max rel err {:.2e} < 1e-5; {} (limit 300s)",
            worst_layer.1,
            worst_layer.0,
            composite.reports.len(),
            composite.max_rel_err(),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 4

fn avg_pool_loop(x: &Tensor, f: usize) -> Tensor {
    let (c, h, w) = (x.dim(0), x.dim(1), x.dim(2));
    let (oh, ow) = (h / f, w / f);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut s = 0.0;
                for dy in 0..f {
                    for dx in 0..f {
                        s += x.data()[(ch * h + y * f + dy) * w + xx * f + dx];
                    }
                }
                out[(ch * oh + y) * ow + xx] = s / (f * f) as f64;
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], out).unwrap()
}

fn criterion_fidelity() -> Outcome {
    let mut scce_err = 0.0f64;
    let mut contrast_err = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(1000 + seed);
        let model = Model::new(
            ModelConfig {
                channels: 8,
                ..ModelConfig::default()
            },
            seed,
        )
        .unwrap();
        let mut params = model.params.clone();
        randomize_biases(&mut params, &mut r);
        let (bm, br) = model.branches.as_ref().unwrap();
        let gop = GopInput {
            start_frame: 0,
            iframe: random_tensor(&[3, 16, 24], &mut r),
            pframes: (1..=2)
                .map(|t| PFrameInput {
                    t,
                    motion: random_tensor(&[2, 16, 24], &mut r),
                    residual: random_tensor(&[3, 16, 24], &mut r),
                })
                .collect(),
        };
        let emb = model.encode_gop(&params, &gop).unwrap();
        let x_i = model.f_i.forward(&params, &gop.iframe).unwrap();
        let e_i: Vec<f64> = (0..8).map(|ch| x_i.data()[ch * 6..(ch + 1) * 6].iter().sum::<f64>() / 6.0).collect();
        scce_err = scce_err.max(max_rel_err(emb.e_i.data(), &e_i));
        for (p, pe) in gop.pframes.iter().zip(&emb.pframes) {
            let x_m = model.f_m.forward(&params, &p.motion).unwrap();
            let x_r = model.f_r.forward(&params, &p.residual).unwrap();
            let om = branch_oracle(&params, "scce_m", &x_i, &x_m, &avg_pool_loop(&p.motion, 8));
            let or = branch_oracle(&params, "scce_r", &x_i, &x_r, &avg_pool_loop(&p.residual, 8));
            let v_tilde: Vec<f64> = om.v.iter().zip(&or.v).map(|(a, b)| a + b).collect();
            scce_err = scce_err.max(max_rel_err(pe.v_tilde.data(), &v_tilde));
            let lib_m = pe.motion.as_ref().unwrap();
            scce_err = scce_err
                .max(max_rel_err(lib_m.channel_gate.data(), &om.w_cha))
                .max(max_rel_err(lib_m.spatial_gate.data(), &om.w_spa))
                .max(max_rel_err(lib_m.v_hat.data(), &om.v_hat));
            // the same branch called directly on the pooled planes
            let direct = bm.forward(&params, &x_i, &x_m, &pooled_aux(&p.motion, 8).unwrap()).unwrap();
            scce_err = scce_err.max(max_rel_err(direct.v.data(), &om.v));
            let direct = br.forward(&params, &x_i, &x_r, &pooled_aux(&p.residual, 8).unwrap()).unwrap();
            scce_err = scce_err.max(max_rel_err(direct.v.data(), &or.v));
        }

        let c = r.random_range(1..=6);
        let len = r.random_range(1..=20);
        let k = (seed % 10) as usize;
        let seq = random_tensor(&[c, len], &mut r);
        let left = random_tensor(&[k, c], &mut r);
        let right = random_tensor(&[k, c], &mut r);
        let lib = contrast_features(&seq, &left, &right).unwrap();
        let oracle = contrast_loop(seq.data(), c, len, left.data(), right.data(), k);
        contrast_err = contrast_err.max(max_rel_err(lib.data(), &oracle));
    }
    outcome(
        scce_err < 1e-10 && contrast_err < 1e-10,
        format!(
            "gated encoder vs straight-line evaluation: max rel err {scce_err:.2e}; contrast features vs loop: {contrast_err:.2e} (20 instances each, limit 1e-10)"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_labels() -> Outcome {
    let mut r = rng(55);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for i in 0..200 {
        let len = r.random_range(1..=40);
        let n = r.random_range(0..=4usize);
        let mut pos: Vec<usize> = (0..n).map(|_| r.random_range(0..len)).collect();
        pos.sort_unstable();
        let alpha = if i % 2 == 0 { 1.0 } else { r.random_range(0.3..3.0) };
        let lib = gaussian_soft_labels(&pos, len, alpha).unwrap();
        let direct = soft_labels_direct(&pos, len, alpha);
        worst = worst.max(lib.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        cases += 1;
    }
    let default_alpha = PipelineConfig::default().label_alpha;
    outcome(
        worst <= 1e-12 && default_alpha == 1.0,
        format!("{cases} random label tracks, max abs diff {worst:.2e} (limit 1e-12); default alpha = {default_alpha}"),
    )
}

// ---------------------------------------------------------------- 6

fn random_times(r: &mut rand_xoshiro::Xoshiro256PlusPlus, n: usize, duration: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| (r.random_range(0.0..duration) * 8.0).round() / 8.0).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn random_corpus(r: &mut rand_xoshiro::Xoshiro256PlusPlus, videos: usize) -> (Vec<Prediction>, Vec<Annotation>) {
    let mut preds = Vec::new();
    let mut anns = Vec::new();
    for i in 0..videos {
        let duration = r.random_range(2..=12) as f64;
        let id = format!("v{i}");
        let np = r.random_range(0..=5);
        let ng = r.random_range(0..=5);
        preds.push(Prediction {
            video_id: id.clone(),
            boundaries_sec: random_times(r, np, duration),
            scores: Vec::new(),
        });
        anns.push(Annotation {
            video_id: id,
            fps: 8.0,
            num_frames: (duration * 8.0) as usize,
            boundaries_sec: random_times(r, ng, duration),
        });
    }
    (preds, anns)
}

fn scaled(preds: &[Prediction], anns: &[Annotation], s: f64) -> (Vec<Prediction>, Vec<Annotation>) {
    let p = preds
        .iter()
        .map(|p| Prediction {
            boundaries_sec: p.boundaries_sec.iter().map(|t| t * s).collect(),
            ..p.clone()
        })
        .collect();
    let a = anns
        .iter()
        .map(|a| Annotation {
            fps: a.fps / s,
            boundaries_sec: a.boundaries_sec.iter().map(|t| t * s).collect(),
            ..a.clone()
        })
        .collect();
    (p, a)
}

fn criterion_metrics() -> Outcome {
    let mut r = rng(66);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let duration = r.random_range(1.0..20.0);
        let np = r.random_range(0..=7);
        let ng = r.random_range(0..=7);
        let preds = random_times(&mut r, np, duration);
        let gts = random_times(&mut r, ng, duration);
        let tau = thresholds()[r.random_range(0..10)];
        let m = match_one_to_one(&preds, &gts, duration, tau).unwrap();
        let best = exhaustive_matching(&preds, &gts, duration, tau);
        if m.tp != best || m.tp + m.fp != np || m.tp + m.fn_ != ng {
            mismatches += 1;
        }
    }

    let mut monotone_failures = 0;
    let mut scale_failures = 0;
    for _ in 0..50 {
        let (preds, anns) = random_corpus(&mut r, 6);
        let rep = score_corpus(&preds, &anns).unwrap();
        let ok = rep.rows.windows(2).all(|w| {
            w[0].counts.tp <= w[1].counts.tp && w[0].precision <= w[1].precision && w[0].recall <= w[1].recall && w[0].f1 <= w[1].f1
        });
        monotone_failures += usize::from(!ok);
        for s in [0.25, 2.0, 8.0] {
            let (p2, a2) = scaled(&preds, &anns, s);
            let rep2 = score_corpus(&p2, &a2).unwrap();
            scale_failures += usize::from(rep2.rows != rep.rows || rep2.avg_f1 != rep.avg_f1);
        }
    }
    outcome(
        mismatches == 0 && monotone_failures == 0 && scale_failures == 0,
        format!(
            "greedy vs exhaustive matching: {mismatches}/1000 differ; monotonicity failures {monotone_failures}/50; scale-invariance failures {scale_failures}/150"
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_end_to_end(dir: &Path) -> Outcome {
    let cfg = PipelineConfig {
        data_dir: dir.join("data"),
        checkpoint: dir.join("runs/model.ckpt"),
        train_log: dir.join("runs/train_log.jsonl"),
        predictions: dir.join("runs/predictions.jsonl"),
        report: dir.join("runs/report.json"),
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    pipeline::run_synth(&cfg).expect("synth");
    let logs = pipeline::run_train(&cfg).expect("train");
    pipeline::run_infer(&cfg, &[]).expect("infer");
    let report = pipeline::run_eval(&cfg).expect("eval");
    let elapsed = start.elapsed();

    let anns = read_annotations(cfg.split_dir("test").join(pipeline::ANNOTATIONS_FILE)).unwrap();
    let baseline = score_corpus(&uniform_baseline(&anns, 1.0), &anns).unwrap();
    let f1 = report.rows[0].f1;
    let base = baseline.rows[0].f1;
    let (first, last) = (logs[0].mean_loss, logs.last().unwrap().mean_loss);
    let time_ok = elapsed < Duration::from_secs(15 * 60);
    let f1_ok = f1 >= 0.8;
    let margin_ok = f1 - base >= 0.3;
    let loss_ok = last < 0.5 * first;
    println!("    test report:\n{}", indent(&report.to_table()));
    println!("    uniform 1 s baseline:\n{}", indent(&baseline.to_table()));
    outcome(
        time_ok && f1_ok && margin_ok && loss_ok,
        format!(
            "{} train / {} test videos, {} epochs in {} [{}]; F1@0.05 {f1:.3} >= 0.8 [{}]; baseline {base:.3}, margin {:.3} >= 0.3 [{}]; loss {first:.4} -> {last:.4}, ratio {:.3} < 0.5 [{}]",
            cfg.train_videos,
            cfg.test_videos,
            logs.len(),
            secs(elapsed),
            ok(time_ok),
            ok(f1_ok),
            f1 - base,
            ok(margin_ok),
            last / first,
            ok(loss_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn indent(s: &str) -> String {
    s.lines().map(|l| format!("      {l}")).collect::<Vec<_>>().join("\n")
}

// ---------------------------------------------------------------- 8

fn criterion_ablation() -> Outcome {
    let cfg = PipelineConfig::default();
    let start = Instant::now();
    let report = pipeline::run_ablate(&cfg).expect("ablate");
    println!("{}", indent(&report.to_table()));
    let seeds = cfg.ablate_seeds.len();
    outcome(
        report.ordering_flips.is_empty() && seeds >= 3,
        format!(
            "gated vs vanilla encoder on {seeds} seeds ({} train / {} test videos, {} epochs): ordering flipped on {:?}; {} (soft criterion)",
            cfg.ablate_train_videos,
            cfg.ablate_test_videos,
            cfg.ablate_epochs,
            report.ordering_flips,
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------- 9

fn small_config(dir: &Path) -> PipelineConfig {
    PipelineConfig {
        channels: 8,
        window: 2,
        epochs: 3,
        decay_epochs: vec![2],
        train_videos: 12,
        test_videos: 6,
        num_frames: 30,
        width: 32,
        height: 32,
        event_spacing: 8,
        data_dir: dir.join("data"),
        checkpoint: dir.join("model.ckpt"),
        train_log: dir.join("train_log.jsonl"),
        predictions: dir.join("predictions.jsonl"),
        report: dir.join("report.json"),
        ..PipelineConfig::default()
    }
}

fn full_run(dir: &Path, threads: usize) -> [Vec<u8>; 4] {
    let cfg = small_config(dir);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        pipeline::run_synth(&cfg).unwrap();
        pipeline::run_train(&cfg).unwrap();
        pipeline::run_infer(&cfg, &[]).unwrap();
        pipeline::run_eval(&cfg).unwrap();
    });
    let read = |p: &Path| std::fs::read(p).unwrap();
    [read(&cfg.checkpoint), read(&cfg.predictions), read(&cfg.report), read(&cfg.train_log)]
}

fn criterion_determinism(dir: &Path) -> Outcome {
    let runs: Vec<[Vec<u8>; 4]> = [1, 1, 3]
        .iter()
        .enumerate()
        .map(|(i, &t)| full_run(&dir.join(format!("run{i}")), t))
        .collect();
    let names = ["checkpoint", "predictions", "report", "train log"];
    let mut differing = Vec::new();
    for (k, name) in names.iter().enumerate() {
        if runs.iter().any(|r| r[k] != runs[0][k]) {
            differing.push(*name);
        }
    }
    let preds = parse_predictions(std::str::from_utf8(&runs[0][1]).unwrap()).unwrap();
    outcome(
        differing.is_empty() && !preds.is_empty(),
        format!(
            "3 full synth/train/infer/eval runs (1, 1 and 3 worker threads): differing artifacts {:?}; {} bytes of checkpoint compared",
            differing,
            runs[0][0].len()
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| selected.is_empty() || selected.contains(&n);
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut cases = Vec::new();

    let mut record = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if !run(n) {
            return;
        }
        let start = Instant::now();
        let o = f();
        println!(
            "{} criterion {n} ({name}): {} [{}]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            secs(start.elapsed())
        );
        results.push((n, name, o));
    };

    record(1, "codec exactness", &mut || criterion_codec(&mut cases));
    if run(2) && cases.is_empty() {
        let raws = codec_corpus();
        for raw in raws {
            let cv = encode_video(&raw, &CodecParams::default()).unwrap();
            cases.push(CodecCase { raw, cv });
        }
    }
    record(2, "accumulation oracle", &mut || criterion_accumulation(&cases));
    record(3, "gradient suite", &mut criterion_gradients);
    record(4, "model fidelity", &mut criterion_fidelity);
    record(5, "label fidelity", &mut criterion_labels);
    record(6, "metric oracle", &mut criterion_metrics);
    record(7, "end-to-end", &mut || criterion_end_to_end(&tmp.path().join("e2e")));
    record(8, "ablation direction", &mut criterion_ablation);
    record(9, "determinism", &mut || criterion_determinism(&tmp.path().join("det")));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" (criteria {failed:?})")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

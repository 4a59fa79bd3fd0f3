//! End-to-end acceptance checks. Runs every criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any failed.

use std::time::Instant;

use hcnn_core::bayes::GaussianCrackModel;
use hcnn_core::data::{augment, expand, expansion_plan, synth_crack, AugmentConfig, Sample};
use hcnn_core::metrics::{confusion, f_score, q_measure};
use hcnn_core::net::{load_checkpoint, predict, save_checkpoint, CheckpointMeta, Network, NetworkConfig};
use hcnn_core::ops::{max_unpool2x2, maxpool2x2, sigmoid};
use hcnn_core::train::{grad_check, image_loss, train, GroundTruth, OptimizerConfig, TrainOptions};
use hcnn_core::{Shape4, SideOutputsd, Tensor4};
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

fn tiny_config() -> NetworkConfig {
    NetworkConfig::scaled(Ratio::new(1, 16))
}

fn gradient_fidelity() -> Outcome {
    let net = Network::<f64>::build(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(11)).map_err(|e| e.to_string())?;
    let s = synth_crack(11, 32, 0.05).map_err(|e| e.to_string())?;
    let r = grad_check(&net, &s.image.cast(), &s.mask, 200, 1e-5, &mut ChaCha8Rng::seed_from_u64(12))
        .map_err(|e| e.to_string())?;
    check(
        r.checked == 200 && r.max_relative_error < 1e-4,
        format!("max relative error {:.3e} over {} parameters (limit 1e-4)", r.max_relative_error, r.checked),
    )
}

fn topology_conformance() -> Outcome {
    let net = Network::<f32>::zeroed(&NetworkConfig::default()).map_err(|e| e.to_string())?;
    let t = net.topology();
    let input = Shape4::new(1, 3, 32, 32);
    let (out, _) = net.forward(&Tensor4::zeros(input)).map_err(|e| e.to_string())?;
    let maps: Vec<Shape4> = out.maps().map(|m| m.shape()).collect();
    let full_res = maps.len() == 6 && maps.iter().all(|&s| s == Shape4::new(1, 1, 32, 32));
    check(
        t.encoder_conv_layers == 13 && t.pool_layers == 5 && t.unpool_layers == 5 && full_res,
        format!(
            "{} encoder convs, {} pools, {} unpools, {} output maps at full resolution: {full_res}",
            t.encoder_conv_layers,
            t.pool_layers,
            t.unpool_layers,
            maps.len()
        ),
    )
}

fn naive_bce(f: f64, y: u8) -> f64 {
    let p = 1.0 / (1.0 + (-f).exp());
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn loss_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = Shape4::new(1, 1, 8, 8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let maps: Vec<Tensor4<f64>> = (0..6)
            .map(|_| Tensor4::from_fn(s, |_, _, _, _| rng.random_range(-8.0..8.0)))
            .collect();
        let labels: Vec<u8> = (0..64).map(|_| rng.random_range(0..2)).collect();
        let gt = GroundTruth::new(s, labels.clone()).map_err(|e| e.to_string())?;
        let oracle: f64 = maps
            .iter()
            .flat_map(|m| m.data().iter().zip(&labels).map(|(&f, &y)| naive_bce(f, y)))
            .sum();
        let mut side = maps;
        let fused = side.pop().unwrap();
        let got = image_loss(&SideOutputsd { side, fused }, &gt).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs() / oracle);
    }
    let zeros = SideOutputsd {
        side: vec![Tensor4::zeros(s); 5],
        fused: Tensor4::zeros(s),
    };
    let gt = GroundTruth::new(s, (0..64).map(|i| u8::from(i % 4 == 0)).collect()).map_err(|e| e.to_string())?;
    let zero_loss = image_loss(&zeros, &gt).map_err(|e| e.to_string())?;
    let expected = 6.0 * 64.0 * std::f64::consts::LN_2;
    let zero_dev = (zero_loss - expected).abs() / expected;
    check(
        worst < 1e-9 && zero_dev < 1e-14,
        format!("max relative deviation from naive oracle {worst:.2e} (limit 1e-9); zero logits {zero_loss} vs 6*64*ln2 = {expected} (rel {zero_dev:.1e})"),
    )
}

fn linearity_theorem() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_post, mut worst_log): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let m = GaussianCrackModel::new(
            rng.random_range(0.0..255.0),
            rng.random_range(0.0..255.0),
            rng.random_range(50.0..5000.0),
            rng.random_range(0.01..0.99),
        )
        .map_err(|e| e.to_string())?;
        let (w, w0) = m.linear_weights();
        let density = |x: f64, mu: f64| (-(x - mu).powi(2) / (2.0 * m.sigma2)).exp() / (2.0 * std::f64::consts::PI * m.sigma2).sqrt();
        for i in 0..10_000 {
            let x = 255.0 * i as f64 / 9_999.0;
            let (n1, n0) = (m.prior1 * density(x, m.mu1), m.prior0 * density(x, m.mu0));
            let direct = n1 / (n1 + n0);
            worst_post = worst_post.max((sigmoid(w * x + w0) - direct).abs());
            let ratio = n1.ln() - n0.ln();
            worst_log = worst_log.max((m.log_odds(x) - ratio).abs() / ratio.abs().max(1.0));
        }
    }
    check(
        worst_post < 1e-12,
        format!("max |sigmoid(w*x+w0) - Bayes posterior| {worst_post:.2e} over 10^7 points (limit 1e-12); log-odds vs log-density-ratio {worst_log:.2e}"),
    )
}

fn overfit_convergence() -> Outcome {
    let data: Vec<Sample> = (0..8).map(|i| synth_crack(1000 + i, 32, 0.05)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut net = Network::<f32>::build(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(5)).map_err(|e| e.to_string())?;
    let total_loss = |net: &Network<f32>| -> Result<f64, String> {
        data.iter()
            .map(|s| image_loss(&net.forward(&s.image).map_err(|e| e.to_string())?.0, &s.mask).map_err(|e| e.to_string()))
            .sum()
    };
    let before = total_loss(&net)?;
    let opts = TrainOptions {
        epochs: usize::MAX,
        batch_size: 2,
        optimizer: OptimizerConfig {
            learning_rate: 4e-5,
            ..OptimizerConfig::default()
        },
        seed: 6,
        max_steps: Some(600),
        warmup_steps: 100,
        ..TrainOptions::default()
    };
    let log = train(&mut net, &data, &opts).map_err(|e| e.to_string())?;
    let after = total_loss(&net)?;
    let mut counts = hcnn_core::metrics::ConfusionCounts::default();
    for s in &data {
        let mask = predict(&net, &s.image, 0.5).map_err(|e| e.to_string())?;
        counts = counts + confusion(&mask.data, s.mask.data()).map_err(|e| e.to_string())?;
    }
    let f = counts.f_score();
    let ratio = after / before;
    check(
        log.records.len() <= 600 && ratio < 0.1 && f >= 0.95,
        format!(
            "{} steps; training-set loss {before:.1} -> {after:.1} (ratio {ratio:.4}, limit 0.1); F at 0.5 = {f:.4} (limit 0.95)",
            log.records.len()
        ),
    )
}

fn naive_q(img: &[f64], labels: &[u8]) -> f64 {
    let mut total = 0.0;
    let areas: Vec<usize> = (0..2u8).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    for c in 0..2u8 {
        let vals: Vec<f64> = img.iter().zip(labels).filter(|p| *p.1 == c).map(|p| *p.0).collect();
        let a = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / a;
        let e2: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum();
        let same = areas.iter().filter(|&&b| b == vals.len()).count() as f64;
        total += e2 / (1.0 + a.log10()) + (same / a) * (same / a);
    }
    2f64.sqrt() / (10_000.0 * img.len() as f64) * total
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut count_mismatch = 0;
    let mut f_dev: f64 = 0.0;
    for _ in 0..1000 {
        let density = rng.random_range(0.0..1.0);
        let pred: Vec<u8> = (0..256).map(|_| u8::from(rng.random_bool(density))).collect();
        let gt: Vec<u8> = (0..256).map(|_| u8::from(rng.random_bool(density))).collect();
        let (mut tp, mut fp, mut fneg, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for y in 0..16 {
            for x in 0..16 {
                let (p, g) = (pred[y * 16 + x], gt[y * 16 + x]);
                if p == 1 && g == 1 {
                    tp += 1;
                } else if p == 1 {
                    fp += 1;
                } else if g == 1 {
                    fneg += 1;
                } else {
                    tn += 1;
                }
            }
        }
        let c = confusion(&pred, &gt).map_err(|e| e.to_string())?;
        if (c.tp, c.fp, c.fn_, c.tn) != (tp, fp, fneg, tn) {
            count_mismatch += 1;
        }
        let oracle_f = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 };
        f_dev = f_dev.max((f_score(&c).f_score - oracle_f).abs());
    }
    let mut q_dev: f64 = 0.0;
    let mut q_cases = 0;
    while q_cases < 200 {
        let (h, w) = (rng.random_range(2..20), rng.random_range(2..20));
        let img: Vec<f64> = (0..h * w).map(|_| rng.random_range(0..256) as f64).collect();
        let labels: Vec<u8> = (0..h * w).map(|_| rng.random_range(0..2)).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        let q = q_measure(&img, &labels).map_err(|e| e.to_string())?;
        let o = naive_q(&img, &labels);
        q_dev = q_dev.max((q - o).abs() / o);
        q_cases += 1;
    }
    let labels: Vec<u8> = (0..10_000).map(|i| u8::from(i % 100 == 0)).collect();
    let img: Vec<f64> = labels.iter().map(|&l| if l == 1 { 40.0 } else { 180.0 }).collect();
    let hand = q_measure(&img, &labels).map_err(|e| e.to_string())?;
    let hand_dev = (hand - 1.4157e-12).abs() / 1.4157e-12;
    check(
        count_mismatch == 0 && f_dev < 1e-15 && q_dev < 1e-12 && hand_dev < 1e-3,
        format!(
            "{count_mismatch} count mismatches in 1000 pairs, max F deviation {f_dev:.1e}; Q vs naive max rel {q_dev:.1e} over 200 images; uniform two-region Q {hand:.6e} (rel {hand_dev:.1e} from 1.4157e-12)"
        ),
    )
}

fn pool_and_augment_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pool_fail = 0;
    for _ in 0..10_000 {
        let s = Shape4::new(rng.random_range(1..3), rng.random_range(1..4), 2 * rng.random_range(1..5), 2 * rng.random_range(1..5));
        let x = Tensor4::from_fn(s, |_, _, _, _| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-3.0f64..3.0) });
        let (p, idx) = maxpool2x2(&x).map_err(|e| e.to_string())?;
        let up = max_unpool2x2(&p, &idx, s).map_err(|e| e.to_string())?;
        let nz = |d: &[f64]| {
            let mut v: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        if nz(up.data()) != nz(p.data()) {
            pool_fail += 1;
        }
    }
    let source = synth_crack(9, 96, 0.1).map_err(|e| e.to_string())?;
    let cfg = AugmentConfig {
        crop: Some((32, 32)),
        ..AugmentConfig::default()
    };
    let mut non_binary = 0;
    let mut wrong_size = 0;
    for _ in 0..1000 {
        let a = augment(&source, &cfg, &mut rng).map_err(|e| e.to_string())?;
        non_binary += usize::from(a.mask.data().iter().any(|&m| m > 1));
        wrong_size += usize::from((a.height(), a.width()) != (32, 32));
    }
    let plan = expansion_plan(118, 100).len();
    let small = expand(
        &[source.clone(), synth_crack(10, 64, 0.1).map_err(|e| e.to_string())?],
        &cfg,
        3,
    )
    .map_err(|e| e.to_string())?
    .len();
    check(
        pool_fail == 0 && non_binary == 0 && wrong_size == 0 && plan == 11_800 && small == 200,
        format!("{pool_fail}/10000 pool round-trip failures; {non_binary}/1000 non-binary masks, {wrong_size} wrong crop sizes; 118 x 100 plan = {plan}, 2 x 100 expansion = {small}"),
    )
}

fn determinism() -> Outcome {
    let data: Vec<Sample> = (0..4).map(|i| synth_crack(20 + i, 32, 0.05)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<(Vec<f64>, String, Network<f32>), String> {
        let mut net = Network::<f32>::build(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(13)).map_err(|e| e.to_string())?;
        let out = dir.path().join(name);
        let opts = TrainOptions {
            epochs: 3,
            batch_size: 2,
            seed: 14,
            out_dir: Some(out.clone()),
            ..TrainOptions::default()
        };
        let log = train(&mut net, &data, &opts).map_err(|e| e.to_string())?;
        let text = std::fs::read_to_string(out.join("train.log")).map_err(|e| e.to_string())?;
        Ok((log.losses(), text, net))
    };
    let (la, ta, net) = run("a")?;
    let (lb, tb, _) = run("b")?;
    let same_bits = la.iter().map(|v| v.to_bits()).eq(lb.iter().map(|v| v.to_bits()));
    let ckpt = dir.path().join("net.hcnn");
    save_checkpoint(&net, CheckpointMeta::default(), &ckpt).map_err(|e| e.to_string())?;
    let (loaded, _) = load_checkpoint::<f32>(&ckpt).map_err(|e| e.to_string())?;
    let mut forward_same = true;
    for s in &data {
        let (a, _) = net.forward(&s.image).map_err(|e| e.to_string())?;
        let (b, _) = loaded.forward(&s.image).map_err(|e| e.to_string())?;
        forward_same &= a.maps().zip(b.maps()).all(|(x, y)| x.data().iter().map(|v| v.to_bits()).eq(y.data().iter().map(|v| v.to_bits())));
    }
    check(
        same_bits && ta == tb && forward_same,
        format!(
            "{} logged losses identical: {same_bits}, log files identical: {}; reloaded checkpoint forward bit-identical: {forward_same}",
            la.len(),
            ta == tb
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("topology conformance", topology_conformance),
        ("loss identity", loss_identity),
        ("linear posterior", linearity_theorem),
        ("overfit convergence", overfit_convergence),
        ("metric oracles", metric_oracles),
        ("pool/unpool and augmentation invariants", pool_and_augment_invariants),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {}. {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {}. {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hcnn_core::data::{
    augment_indexed, list_images, load_pairs, read_image, synth_crack, write_gray_png, write_rgb_png, AugmentConfig,
};
use hcnn_core::metrics::{evaluate_dir, write_report_csv};
use hcnn_core::net::{load_checkpoint, load_into, parse_channel_scale, ChannelScale, Network, NetworkConfig};
use hcnn_core::ops::sigmoid;
use hcnn_core::train::{grad_check, train, OptimizerConfig, TrainOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "hcnn", version, about = "Crack segmentation with a hierarchical encoder-decoder network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on image/mask pairs and write checkpoints plus a training log
    Train(TrainArgs),
    /// Write probability maps and thresholded masks for a directory of images
    Infer(InferArgs),
    /// Score predicted masks against ground truth and write a metrics CSV
    Eval(EvalArgs),
    /// Expand a dataset with rotations, flips and random crops
    Augment(AugmentArgs),
    /// Generate seeded synthetic crack images with exact masks
    Synth(SynthArgs),
    /// Compare backpropagated gradients with finite differences
    Gradcheck(GradcheckArgs),
}

fn scale_arg(s: &str) -> Result<ChannelScale, String> {
    parse_channel_scale(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    /// Directory for checkpoints, train.log and train.jsonl
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.0005)]
    weight_decay: f64,
    /// Width multiplier for every block, e.g. 1/16 or 0.0625
    #[arg(long, default_value = "1", value_parser = scale_arg)]
    channel_scale: ChannelScale,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    warmup_steps: usize,
    /// Keep the dataset order fixed instead of reshuffling every epoch
    #[arg(long)]
    no_shuffle: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    images: PathBuf,
    /// Receives prob/<stem>.png and mask/<stem>.png
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Build this architecture and load the checkpoint into it instead of
    /// taking the architecture from the checkpoint
    #[arg(long, value_parser = scale_arg)]
    channel_scale: Option<ChannelScale>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted binary masks
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth masks
    #[arg(long)]
    gt: PathBuf,
    /// Original images, used by the Q measure
    #[arg(long)]
    images: PathBuf,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    /// Receives images/<stem>_<copy>.png and masks/<stem>_<copy>.png
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    factor: usize,
    /// Side of the square random crop; 0 disables cropping
    #[arg(long, default_value_t = 256)]
    crop: usize,
    #[arg(long, default_value_t = 90.0)]
    max_angle: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Receives images/ and masks/
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of randomly chosen parameters to check
    #[arg(long, default_value_t = 200)]
    params: usize,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Side of the synthetic input image
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value = "1/16", value_parser = scale_arg)]
    channel_scale: ChannelScale,
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let data = load_pairs(&a.images, &a.masks).context("loading training pairs")?;
    if data.is_empty() {
        bail!("no image/mask pairs found in {}", a.images.display());
    }
    let config = NetworkConfig::scaled(a.channel_scale);
    let mut net = Network::<f32>::build(&config, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let opts = TrainOptions {
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer: OptimizerConfig {
            learning_rate: a.lr,
            momentum: a.momentum,
            weight_decay: a.weight_decay,
        },
        seed: a.seed,
        shuffle: !a.no_shuffle,
        max_steps: a.max_steps,
        warmup_steps: a.warmup_steps,
        out_dir: Some(a.out.clone()),
    };
    let log = train(&mut net, &data, &opts)?;
    let last = log.records.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} steps on {} samples, last loss {last}; output in {}",
        log.records.len(),
        data.len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_infer(a: InferArgs) -> Result<ExitCode> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        bail!("threshold {} outside (0, 1)", a.threshold);
    }
    let net = match a.channel_scale {
        None => load_checkpoint::<f32>(&a.checkpoint)?.0,
        Some(scale) => {
            let mut net = Network::<f32>::zeroed(&NetworkConfig::scaled(scale))?;
            load_into(&mut net, &a.checkpoint)
                .with_context(|| format!("checkpoint {} does not fit the requested network", a.checkpoint.display()))?;
            net
        }
    };
    let (prob_dir, mask_dir) = (a.out.join("prob"), a.out.join("mask"));
    for d in [&prob_dir, &mask_dir] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let images = list_images(&a.images)?;
    for (stem, path) in &images {
        let image = read_image(path)?;
        let s = image.shape();
        let (out, _) = net.forward(&image).with_context(|| format!("image {}", path.display()))?;
        let probs: Vec<f64> = out.fused.data().iter().map(|&f| sigmoid(f as f64)).collect();
        let prob_px: Vec<u8> = probs.iter().map(|p| (p * 255.0 + 0.5).floor() as u8).collect();
        let mask_px: Vec<u8> = probs.iter().map(|&p| if p > a.threshold { 255 } else { 0 }).collect();
        write_gray_png(&prob_dir.join(format!("{stem}.png")), s.w, s.h, &prob_px)?;
        write_gray_png(&mask_dir.join(format!("{stem}.png")), s.w, s.h, &mask_px)?;
    }
    println!("wrote {} probability maps and masks to {}", images.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let report = evaluate_dir(&a.pred, &a.gt, &a.images)?;
    write_report_csv(&report, &a.out)?;
    let r = &report.aggregate;
    let q = r.q_value.map_or_else(|| "undefined".to_string(), |q| q.to_string());
    println!(
        "{} images: precision {} recall {} F {} Q {q}",
        report.images.len(),
        r.precision,
        r.recall,
        r.f_score
    );
    Ok(ExitCode::SUCCESS)
}

fn stems(dir: &Path) -> Result<Vec<String>> {
    Ok(list_images(dir)?.into_keys().collect())
}

fn cmd_augment(a: AugmentArgs) -> Result<ExitCode> {
    let config = AugmentConfig {
        max_angle_deg: a.max_angle,
        crop: (a.crop > 0).then_some((a.crop, a.crop)),
        factor: a.factor,
        ..AugmentConfig::default()
    };
    config.validate()?;
    let sources = load_pairs(&a.images, &a.masks)?;
    let names = stems(&a.images)?;
    let (img_dir, mask_dir) = (a.out.join("images"), a.out.join("masks"));
    for d in [&img_dir, &mask_dir] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    for (i, (src, stem)) in sources.iter().zip(&names).enumerate() {
        for copy in 0..a.factor {
            let s = augment_indexed(src, &config, a.seed, i, copy).with_context(|| format!("augmenting `{stem}`"))?;
            let file = format!("{stem}_{copy}.png");
            write_rgb_png(&img_dir.join(&file), &s.image)?;
            let mask: Vec<u8> = s.mask.data().iter().map(|&m| m * 255).collect();
            write_gray_png(&mask_dir.join(&file), s.width(), s.height(), &mask)?;
        }
    }
    println!("wrote {} pairs to {}", sources.len() * a.factor, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(a: SynthArgs) -> Result<ExitCode> {
    let (img_dir, mask_dir) = (a.out.join("images"), a.out.join("masks"));
    for d in [&img_dir, &mask_dir] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(a.seed);
    for i in 0..a.count {
        let s = synth_crack(seeds.random(), a.size, a.noise)?;
        let file = format!("synth_{i:05}.png");
        write_rgb_png(&img_dir.join(&file), &s.image)?;
        let mask: Vec<u8> = s.mask.data().iter().map(|&m| m * 255).collect();
        write_gray_png(&mask_dir.join(&file), a.size, a.size, &mask)?;
    }
    println!("wrote {} synthetic samples to {}", a.count, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let net = Network::<f64>::build(&NetworkConfig::scaled(a.channel_scale), &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let sample = synth_crack(a.seed, a.size, 0.05)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(1));
    let r = grad_check(&net, &sample.image.cast(), &sample.mask, a.params, a.epsilon, &mut rng)?;
    let worst = r
        .worst
        .map(|p| format!(" (worst: {} value {})", net.layer_names()[p.layer], p.offset))
        .unwrap_or_default();
    println!("max relative error {:e} over {} parameters{worst}", r.max_relative_error, r.checked);
    if r.max_relative_error < a.tolerance {
        Ok(ExitCode::SUCCESS)
    } else {
        println!("above tolerance {:e}", a.tolerance);
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

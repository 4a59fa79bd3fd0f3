use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{image_loss_with_grad, GroundTruth};
use super::optim::{sgd_step, OptimizerConfig, OptimizerState};
use crate::data::Sample;
use crate::error::{io_err, Error, Result};
use crate::net::{save_checkpoint, CheckpointMeta, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Reshuffle the sample order every epoch.
    pub shuffle: bool,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    /// Linear learning-rate ramp over the first steps; 0 disables it.
    pub warmup_steps: usize,
    /// Receives `train.log`, `train.jsonl`, and `epoch_NNN.hcnn` checkpoints.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            batch_size: 1,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            shuffle: true,
            max_steps: None,
            warmup_steps: 0,
            out_dir: None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// Batch loss before the update.
    pub loss: f64,
}

impl StepRecord {
    pub fn log_line(&self) -> String {
        format!("step {} epoch {} loss {}", self.step, self.epoch, self.loss)
    }
}

#[derive(Clone, PartialEq, Debug, Default)]
pub struct TrainingLog {
    pub records: Vec<StepRecord>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

struct LogSink {
    text: BufWriter<File>,
    json: BufWriter<File>,
}

impl LogSink {
    fn create(dir: &Path, opts: &TrainOptions) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let p = dir.join(name);
            File::create(&p).map(BufWriter::new).map_err(io_err(p))
        };
        let mut sink = LogSink {
            text: open("train.log")?,
            json: open("train.jsonl")?,
        };
        let o = &opts.optimizer;
        let header = format!(
            "# lr={:e} momentum={} weight_decay={} epochs={} batch_size={} seed={} warmup_steps={}",
            o.learning_rate, o.momentum, o.weight_decay, opts.epochs, opts.batch_size, opts.seed, opts.warmup_steps
        );
        writeln!(sink.text, "{header}").map_err(io_err(dir.join("train.log")))?;
        Ok(sink)
    }

    fn append(&mut self, r: &StepRecord) -> std::io::Result<()> {
        writeln!(self.text, "{}", r.log_line())?;
        writeln!(self.json, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
        self.text.flush()?;
        self.json.flush()
    }
}

fn validate<T: Scalar>(net: &Network<T>, dataset: &[Sample]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    for (id, s) in dataset.iter().enumerate() {
        let shape = s.image.shape();
        net.check_input(shape).map_err(|e| Error::Sample { id, reason: e.to_string() })?;
        let m = s.mask.shape();
        if (m.n, m.h, m.w) != (shape.n, shape.h, shape.w) {
            return Err(Error::Sample {
                id,
                reason: format!("mask {m} does not match image {shape}"),
            });
        }
    }
    Ok(())
}

/// Learning-rate multiplier for 0-based step `step`.
pub fn lr_factor(opts: &TrainOptions, step: usize) -> f64 {
    if step < opts.warmup_steps {
        (step + 1) as f64 / opts.warmup_steps as f64
    } else {
        1.0
    }
}

/// Runs forward, loss, backward and one SGD update per batch.
///
/// All randomness comes from `opts.seed`, so equal options and data give an
/// identical loss sequence.
pub fn train<T: Scalar>(net: &mut Network<T>, dataset: &[Sample], opts: &TrainOptions) -> Result<TrainingLog> {
    let mut log = TrainingLog::default();
    if opts.epochs == 0 {
        return Ok(log);
    }
    validate(net, dataset)?;
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut sink = opts.out_dir.as_deref().map(|d| LogSink::create(d, opts)).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = OptimizerState::new(opts.optimizer, net.layers());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0;

    'epochs: for epoch in 1..=opts.epochs {
        if opts.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(opts.batch_size) {
            if opts.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
            let images: Vec<Tensor4<T>> = batch.iter().map(|&i| dataset[i].image.cast::<T>()).collect();
            let image = Tensor4::stack(&images.iter().collect::<Vec<_>>())
                .map_err(|e| Error::Sample { id: batch[0], reason: e.to_string() })?;
            let gt = GroundTruth::stack(&batch.iter().map(|&i| &dataset[i].mask).collect::<Vec<_>>())?;

            let (outputs, cache) = net.forward(&image)?;
            let (loss, grad) = image_loss_with_grad(&outputs, &gt)?;
            let grads = net.backward(&cache, &grad)?;
            state.config.learning_rate = opts.optimizer.learning_rate * lr_factor(opts, step);
            sgd_step(net.layers_mut(), &grads.params.layers, &mut state)?;

            step += 1;
            let record = StepRecord { step, epoch, loss };
            if let Some(s) = sink.as_mut() {
                let dir = opts.out_dir.as_deref().expect("sink implies out_dir");
                s.append(&record).map_err(io_err(dir.join("train.log")))?;
            }
            log.records.push(record);
        }
        if let Some(dir) = &opts.out_dir {
            let meta = CheckpointMeta {
                epoch: epoch as u64,
                step: step as u64,
                seed: opts.seed,
            };
            save_checkpoint(net, meta, &dir.join(format!("epoch_{epoch:03}.hcnn")))?;
        }
    }
    if let Some(dir) = &opts.out_dir {
        let meta = CheckpointMeta {
            epoch: log.records.last().map_or(0, |r| r.epoch as u64),
            step: step as u64,
            seed: opts.seed,
        };
        save_checkpoint(net, meta, &dir.join("final.hcnn"))?;
    }
    Ok(log)
}

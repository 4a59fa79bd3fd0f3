//! Binary checkpoint format.
//!
//! ```text
//! "HCNN"                      4 bytes
//! version                     u32
//! epoch, step, seed           u64 x 3
//! input_channels, blocks      u32 x 2
//! per block: channels, convs  u32 x 2
//! use_batchnorm               u8
//! input_offset                f64
//! record count                u32
//! per record:
//!   name length, name         u32, UTF-8 bytes
//!   shape                     u32 x 4
//!   values                    f32 x product(shape)
//! ```
//!
//! All integers and floats are little-endian. Block channels are stored after
//! scaling, so a loaded network carries `channel_scale = 1`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_rational::Ratio;

use super::config::NetworkConfig;
use super::network::Network;
use crate::error::{CheckpointError, Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HCNN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training position stored next to the parameters.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct CheckpointMeta {
    pub epoch: u64,
    pub step: u64,
    pub seed: u64,
}

struct Record {
    name: String,
    shape: [usize; 4],
    values: Vec<f32>,
}

/// Writes `net` to `path` atomically (temporary file, then rename).
pub fn save_checkpoint<T: Scalar>(net: &Network<T>, meta: CheckpointMeta, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for v in [meta.epoch, meta.step, meta.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        let cfg = net.config();
        w.write_all(&(cfg.input_channels as u32).to_le_bytes())?;
        w.write_all(&(net.num_scales() as u32).to_le_bytes())?;
        for (c, n) in net.block_channels().iter().zip(&cfg.convs_per_block) {
            w.write_all(&(*c as u32).to_le_bytes())?;
            w.write_all(&(*n as u32).to_le_bytes())?;
        }
        w.write_all(&[u8::from(cfg.use_batchnorm)])?;
        w.write_all(&cfg.input_offset.to_le_bytes())?;
        w.write_all(&(2 * net.layers().len() as u32).to_le_bytes())?;
        for (name, layer) in net.layer_names().iter().zip(net.layers()) {
            let bias_shape = [layer.bias.len(), 1, 1, 1];
            write_record(&mut w, &format!("{name}.weight"), layer.weights.shape().dims(), layer.weights.data())?;
            write_record(&mut w, &format!("{name}.bias"), bias_shape, &layer.bias)?;
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    };
    write().map_err(crate::error::io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(crate::error::io_err(path))
}

fn write_record<T: Scalar>(w: &mut impl Write, name: &str, shape: [usize; 4], values: &[T]) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    for d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in values {
        w.write_all(&(v.acc() as f32).to_le_bytes())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], CheckpointError> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => CheckpointError::Truncated(what),
            _ => CheckpointError::Io(e),
        })?;
        Ok(b)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }
}

fn read_all(path: &Path) -> Result<(NetworkConfig, CheckpointMeta, Vec<Record>)> {
    let file = File::open(path).map_err(crate::error::io_err(path))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    let magic = r.bytes::<4>("magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic(magic).into());
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        }
        .into());
    }
    let meta = CheckpointMeta {
        epoch: r.u64("metadata")?,
        step: r.u64("metadata")?,
        seed: r.u64("metadata")?,
    };
    let input_channels = r.u32("config")? as usize;
    let blocks = r.u32("config")? as usize;
    if blocks > 64 {
        return Err(CheckpointError::Malformed(format!("{blocks} blocks")).into());
    }
    let mut channels_per_block = Vec::with_capacity(blocks);
    let mut convs_per_block = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        channels_per_block.push(r.u32("config")? as usize);
        convs_per_block.push(r.u32("config")? as usize);
    }
    let use_batchnorm = r.bytes::<1>("config")?[0] != 0;
    let input_offset = f64::from_le_bytes(r.bytes("config")?);
    let config = NetworkConfig {
        input_channels,
        channels_per_block,
        convs_per_block,
        use_batchnorm,
        channel_scale: Ratio::from_integer(1),
        input_offset,
    };

    let count = r.u32("record count")? as usize;
    let mut records = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32("record name")? as usize;
        if len > 4096 {
            return Err(CheckpointError::Malformed(format!("record name of {len} bytes")).into());
        }
        let mut name = vec![0u8; len];
        r.inner.read_exact(&mut name).map_err(|_| CheckpointError::Truncated("record name"))?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Malformed("record name is not UTF-8".into()))?;
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = r.u32("record shape")? as usize;
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| CheckpointError::Malformed(format!("record `{name}` has implausible shape {shape:?}")))?;
        let mut raw = vec![0u8; n * 4];
        r.inner.read_exact(&mut raw).map_err(|_| CheckpointError::Truncated("record values"))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(Record { name, shape, values });
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(CheckpointError::Io)? != 0 {
        return Err(CheckpointError::Malformed("trailing bytes after last record".into()).into());
    }
    Ok((config, meta, records))
}

fn fill<T: Scalar>(net: &mut Network<T>, records: &[Record]) -> Result<()> {
    if records.len() != 2 * net.layers().len() {
        return Err(CheckpointError::Layout(format!(
            "{} records, network has {} tensors",
            records.len(),
            2 * net.layers().len()
        ))
        .into());
    }
    let names: Vec<String> = net.layer_names().to_vec();
    for (i, name) in names.iter().enumerate() {
        let (wr, br) = (&records[2 * i], &records[2 * i + 1]);
        let layer = &mut net.layers_mut()[i];
        for (rec, suffix, expected) in [
            (wr, "weight", layer.weights.shape().dims()),
            (br, "bias", [layer.bias.len(), 1, 1, 1]),
        ] {
            let want = format!("{name}.{suffix}");
            if rec.name != want {
                return Err(CheckpointError::Layout(format!("expected record `{want}`, found `{}`", rec.name)).into());
            }
            if rec.shape != expected {
                return Err(CheckpointError::ShapeMismatch {
                    name: want,
                    found: rec.shape,
                    expected,
                }
                .into());
            }
        }
        for (d, &v) in layer.weights.data_mut().iter_mut().zip(&wr.values) {
            *d = T::from_acc(v as f64);
        }
        for (d, &v) in layer.bias.iter_mut().zip(&br.values) {
            *d = T::from_acc(v as f64);
        }
    }
    Ok(())
}

/// Rebuilds a network from the architecture stored in the checkpoint.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Network<T>, CheckpointMeta)> {
    let (config, meta, records) = read_all(path)?;
    let mut net = Network::zeroed(&config).map_err(|e| match e {
        Error::Config(m) => Error::Checkpoint(CheckpointError::Malformed(m)),
        other => other,
    })?;
    fill(&mut net, &records)?;
    Ok((net, meta))
}

/// Loads parameter values into an existing network, rejecting any shape
/// difference.
pub fn load_into<T: Scalar>(net: &mut Network<T>, path: &Path) -> Result<CheckpointMeta> {
    let (_, meta, records) = read_all(path)?;
    let mut staged = net.clone();
    fill(&mut staged, &records)?;
    *net = staged;
    Ok(meta)
}

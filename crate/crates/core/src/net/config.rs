use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform multiplier on every block width, kept exact so scaled widths are
/// integers or rejected.
pub type ChannelScale = Ratio<u32>;

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub channels_per_block: Vec<usize>,
    pub convs_per_block: Vec<usize>,
    /// Not supported; building with this set is a config error.
    pub use_batchnorm: bool,
    #[serde(with = "ratio_serde")]
    pub channel_scale: ChannelScale,
    /// Subtracted from every input value before the first convolution, so
    /// images in [0, 1] enter roughly centred.
    pub input_offset: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_channels: 3,
            channels_per_block: vec![64, 128, 256, 512, 512],
            convs_per_block: vec![2, 2, 3, 3, 3],
            use_batchnorm: false,
            channel_scale: Ratio::from_integer(1),
            input_offset: 0.5,
        }
    }
}

impl NetworkConfig {
    /// Default topology with every width multiplied by `scale`.
    pub fn scaled(scale: ChannelScale) -> Self {
        NetworkConfig {
            channel_scale: scale,
            ..Default::default()
        }
    }

    pub fn num_scales(&self) -> usize {
        self.channels_per_block.len()
    }

    /// Block widths after applying `channel_scale`.
    pub fn block_channels(&self) -> Result<Vec<usize>> {
        let s = self.channel_scale;
        if *s.numer() == 0 {
            return Err(Error::Config("channel scale must be positive".into()));
        }
        self.channels_per_block
            .iter()
            .map(|&c| {
                let scaled = Ratio::from_integer(c as u32) * s;
                if !scaled.is_integer() || scaled.to_integer() == 0 {
                    Err(Error::Config(format!(
                        "channel scale {s} turns {c} channels into {scaled}, not a positive integer"
                    )))
                } else {
                    Ok(scaled.to_integer() as usize)
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.use_batchnorm {
            return Err(Error::Config("batch normalization is not implemented".into()));
        }
        if !self.input_offset.is_finite() {
            return Err(Error::Config("input_offset must be finite".into()));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("input_channels must be positive".into()));
        }
        let s = self.num_scales();
        if s == 0 || s > 5 {
            return Err(Error::Config(format!("1 to 5 blocks supported, got {s}")));
        }
        if self.convs_per_block.len() != s {
            return Err(Error::Config(format!(
                "{} conv counts for {s} blocks",
                self.convs_per_block.len()
            )));
        }
        if self.convs_per_block.iter().any(|&n| n == 0) {
            return Err(Error::Config("every block needs at least one convolution".into()));
        }
        self.block_channels().map(|_| ())
    }

    /// Spatial dimensions must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.num_scales()
    }
}

/// Parses `"1/16"`, `"0.0625"` or `"2"` into an exact scale.
pub fn parse_channel_scale(s: &str) -> Result<ChannelScale> {
    let s = s.trim();
    let parsed = if let Some((n, d)) = s.split_once('/') {
        match (n.trim().parse::<u32>(), d.trim().parse::<u32>()) {
            (Ok(n), Ok(d)) if d != 0 => Some(Ratio::new(n, d)),
            _ => None,
        }
    } else {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v > 0.0)
            .and_then(Ratio::<i64>::approximate_float)
            .and_then(|r| Some(Ratio::new(u32::try_from(*r.numer()).ok()?, u32::try_from(*r.denom()).ok()?)))
    };
    match parsed {
        Some(r) if *r.numer() > 0 => Ok(r),
        _ => Err(Error::Config(format!("invalid channel scale `{s}`"))),
    }
}

mod ratio_serde {
    use super::ChannelScale;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &ChannelScale, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ChannelScale, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_channel_scale(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_thirteen_encoder_convs() {
        let c = NetworkConfig::default();
        assert_eq!(c.convs_per_block.iter().sum::<usize>(), 13);
        assert_eq!(c.num_scales(), 5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn widths_grow_then_plateau() {
        let ch = NetworkConfig::default().channels_per_block;
        assert!(ch.windows(2).all(|w| w[1] >= w[0]));
        assert!(ch[..4].windows(2).all(|w| w[1] > w[0]));
        assert_eq!(ch[3], ch[4]);
    }

    #[test]
    fn sixteenth_scale() {
        let c = NetworkConfig::scaled(Ratio::new(1, 16));
        assert_eq!(c.block_channels().unwrap(), vec![4, 8, 16, 32, 32]);
    }

    #[test]
    fn non_integral_scale_rejected() {
        let c = NetworkConfig::scaled(Ratio::new(1, 128));
        assert!(matches!(c.block_channels(), Err(Error::Config(_))));
    }

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_channel_scale("1/16").unwrap(), Ratio::new(1, 16));
        assert_eq!(parse_channel_scale("0.0625").unwrap(), Ratio::new(1, 16));
        assert_eq!(parse_channel_scale("0.125").unwrap(), Ratio::new(1, 8));
        assert_eq!(parse_channel_scale("1").unwrap(), Ratio::from_integer(1));
        assert!(parse_channel_scale("-1").is_err());
        assert!(parse_channel_scale("1/0").is_err());
        assert!(parse_channel_scale("abc").is_err());
    }

    #[test]
    fn batchnorm_flag_is_rejected() {
        let c = NetworkConfig {
            use_batchnorm: true,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}

use serde::{Deserialize, Serialize};

use crate::beat::{BEAT_LEADS, BEAT_SAMPLES};
use crate::nn::{LayerSpec, NetworkSpec};

/// Latent noise: 400 steps of 12 i.i.d. standard-normal features.
pub const LATENT_STEPS: usize = BEAT_SAMPLES;
pub const LATENT_FEATURES: usize = 12;

/// Layer widths of the generator/discriminator pair.
///
/// [`ArchConfig::full`] reproduces the published layer tables; smaller
/// widths keep the same topology, kernel and strides for desk-scale runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Hidden units per LSTM direction. `2 * lstm_hidden` must divide by 8 so
    /// each time step reshapes to 8 leads × channels.
    pub lstm_hidden: usize,
    /// Output channels of generator convolutions 1–4 (the fifth emits 1).
    pub gen_channels: [usize; 4],
    /// Output channels of the four discriminator convolutions.
    pub disc_channels: [usize; 4],
    pub leaky_alpha: f64,
}

impl ArchConfig {
    pub fn full() -> Self {
        Self {
            lstm_hidden: 64,
            gen_channels: [128, 64, 32, 16],
            disc_channels: [32, 64, 128, 256],
            leaky_alpha: 0.2,
        }
    }

    /// Reduced widths for single-core training runs.
    pub fn desk() -> Self {
        Self {
            lstm_hidden: 4,
            gen_channels: [2, 2, 2, 2],
            disc_channels: [2, 2, 2, 2],
            leaky_alpha: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.lstm_hidden == 0 || (2 * self.lstm_hidden) % BEAT_LEADS != 0 {
            return Err(format!(
                "lstm_hidden {} must be positive with 2*hidden divisible by {BEAT_LEADS}",
                self.lstm_hidden
            ));
        }
        if self.gen_channels.contains(&0) || self.disc_channels.contains(&0) {
            return Err("channel widths must be positive".into());
        }
        if !(self.leaky_alpha.is_finite() && self.leaky_alpha >= 0.0) {
            return Err("leaky_alpha must be finite and non-negative".into());
        }
        Ok(())
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Discriminator convolutions 2 and 4 halve the time axis.
pub const DISC_STRIDES: [(usize, usize); 4] = [(1, 1), (2, 1), (1, 1), (2, 1)];

pub fn build_generator_with(arch: &ArchConfig) -> NetworkSpec {
    let lrelu = LayerSpec::LeakyRelu {
        alpha: arch.leaky_alpha,
    };
    let bridge = 2 * arch.lstm_hidden / BEAT_LEADS;
    let [c1, c2, c3, c4] = arch.gen_channels;
    NetworkSpec::new(vec![LATENT_STEPS, LATENT_FEATURES])
        .push(
            "BiLSTM",
            LayerSpec::BiLstm {
                input: LATENT_FEATURES,
                hidden: arch.lstm_hidden,
            },
        )
        .push(
            "reshape",
            LayerSpec::Reshape {
                shape: vec![BEAT_SAMPLES, BEAT_LEADS, bridge],
            },
        )
        .push("Conv2d_1", LayerSpec::conv(bridge, c1, (1, 1)))
        .push("LeakyReLU_1", lrelu.clone())
        .push("Conv2d_2", LayerSpec::conv(c1, c2, (1, 1)))
        .push("LeakyReLU_2", lrelu.clone())
        .push("Conv2d_3", LayerSpec::conv(c2, c3, (1, 1)))
        .push("LeakyReLU_3", lrelu.clone())
        .push("Conv2d_4", LayerSpec::conv(c3, c4, (1, 1)))
        .push("LeakyReLU_4", lrelu)
        .push("Conv2d_5", LayerSpec::conv(c4, 1, (1, 1)))
}

pub fn build_discriminator_with(arch: &ArchConfig) -> NetworkSpec {
    let lrelu = LayerSpec::LeakyRelu {
        alpha: arch.leaky_alpha,
    };
    let [d1, d2, d3, d4] = arch.disc_channels;
    let time_out = DISC_STRIDES
        .iter()
        .fold(BEAT_SAMPLES, |t, s| t.div_ceil(s.0));
    let flat = time_out * BEAT_LEADS * d4;
    NetworkSpec::new(vec![BEAT_SAMPLES, BEAT_LEADS, 1])
        .push("Conv2d_1", LayerSpec::conv(1, d1, DISC_STRIDES[0]))
        .push("LeakyReLU_1", lrelu.clone())
        .push("Conv2d_2", LayerSpec::conv(d1, d2, DISC_STRIDES[1]))
        .push("LeakyReLU_2", lrelu.clone())
        .push("Conv2d_3", LayerSpec::conv(d2, d3, DISC_STRIDES[2]))
        .push("LeakyReLU_3", lrelu.clone())
        .push("Conv2d_4", LayerSpec::conv(d3, d4, DISC_STRIDES[3]))
        .push("LeakyReLU_4", lrelu)
        .push("flatten", LayerSpec::Reshape { shape: vec![flat] })
        .push(
            "Dense",
            LayerSpec::Dense {
                inputs: flat,
                outputs: 1,
            },
        )
        .push("Sigmoid", LayerSpec::Sigmoid)
}

/// Generator at the published widths.
pub fn build_generator() -> NetworkSpec {
    build_generator_with(&ArchConfig::full())
}

/// Discriminator at the published widths.
pub fn build_discriminator() -> NetworkSpec {
    build_discriminator_with(&ArchConfig::full())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_table() {
        let spec = build_generator();
        let rows = spec.param_table().unwrap();
        let counts: Vec<usize> = rows.iter().map(|r| r.1).collect();
        assert_eq!(counts, vec![39_424, 98_432, 393_280, 98_336, 24_592, 769]);
        assert_eq!(spec.total_params().unwrap(), 654_833);
        assert_eq!(spec.output_shape().unwrap(), vec![400, 8, 1]);
    }

    #[test]
    fn discriminator_table() {
        let spec = build_discriminator();
        let counts: Vec<usize> = spec.param_table().unwrap().iter().map(|r| r.1).collect();
        assert_eq!(counts, vec![1_568, 98_368, 393_344, 1_573_120, 204_801]);
        assert_eq!(spec.total_params().unwrap(), 2_271_201);
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[shapes.len() - 3], vec![204_800]);
        assert_eq!(spec.output_shape().unwrap(), vec![1]);
    }

    #[test]
    fn desk_widths_are_consistent() {
        let a = ArchConfig::desk();
        a.validate().unwrap();
        assert_eq!(build_generator_with(&a).output_shape().unwrap(), vec![400, 8, 1]);
        assert_eq!(build_discriminator_with(&a).output_shape().unwrap(), vec![1]);
    }

    #[test]
    fn odd_bridge_rejected() {
        let mut a = ArchConfig::desk();
        a.lstm_hidden = 3;
        assert!(a.validate().is_err());
    }
}

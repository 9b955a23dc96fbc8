use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::arch::{build_discriminator_with, build_generator_with, ArchConfig, LATENT_FEATURES, LATENT_STEPS};
use super::GanError;
use crate::beat::{BeatMatrix, BEAT_LEADS, BEAT_SAMPLES};
use crate::derive_seed;
use crate::nn::{bce_loss, Adam, AdamConfig, Checkpoint, Gradients, Network, NnError, Tensor};
use crate::par::*;

const INIT_STREAM: u64 = 1;

/// RNG seed behind initialisation `init_index` of a campaign.
pub fn init_seed(seed: u64, init_index: u64) -> u64 {
    derive_seed(seed, &[INIT_STREAM, init_index])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Start again from fresh weights after every verified beat.
    #[default]
    #[serde(rename = "relearn")]
    Relearning,
    /// Keep training the same networks for the whole campaign.
    #[serde(rename = "accumulate")]
    AccumulativeLearning,
}

impl FromStr for Mode {
    type Err = GanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relearn" | "relearning" => Ok(Mode::Relearning),
            "accumulate" | "accumulative" => Ok(Mode::AccumulativeLearning),
            _ => Err(GanError::InvalidConfig(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Relearning => "relearn",
            Mode::AccumulativeLearning => "accumulate",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub batch_size: usize,
    /// Epoch budget of a whole campaign, summed over re-initialisations.
    pub epochs_max: u64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub mode: Mode,
    pub arch: ArchConfig,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs_max: 200,
            seed: 0,
            adam: AdamConfig::default(),
            mode: Mode::Relearning,
            arch: ArchConfig::full(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if self.batch_size == 0 {
            return Err(GanError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs_max == 0 {
            return Err(GanError::InvalidConfig("epochs_max must be at least 1".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite() && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(GanError::InvalidConfig("adam hyperparameters out of range".into()));
        }
        self.arch.validate().map_err(GanError::InvalidConfig)
    }
}

/// Per-epoch averages over batches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub epoch: u64,
    pub g_loss: f64,
    pub d_loss: f64,
    /// Share of each mixed real/fake batch the discriminator classified
    /// correctly at 0.5.
    pub d_acc: f64,
}

/// Both networks, their optimisers and the training RNG.
#[derive(Clone, Debug, PartialEq)]
pub struct GanState {
    pub config: GanConfig,
    pub generator: Network,
    pub discriminator: Network,
    pub g_opt: Adam,
    pub d_opt: Adam,
    pub rng: ChaCha8Rng,
    /// Epochs trained since this initialisation.
    pub epoch: u64,
    /// Which initialisation of the campaign this is (0 for the first).
    pub init_index: u64,
}

fn layout(net: &Network) -> Vec<usize> {
    net.layers().iter().map(|l| l.params().len()).collect()
}

fn noise(rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..LATENT_STEPS * LATENT_FEATURES)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(vec![LATENT_STEPS, LATENT_FEATURES], data).expect("latent shape")
}

fn beat_tensor(beat: &BeatMatrix) -> Tensor {
    Tensor::new(vec![BEAT_SAMPLES, BEAT_LEADS, 1], beat.as_slice().to_vec()).expect("beat shape")
}

fn scalar(t: &Tensor) -> f64 {
    t.data()[0]
}

fn accuracy(probs: &[f64], labels: &[f64]) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count();
    hits as f64 / probs.len() as f64
}

impl GanState {
    /// Fresh networks for initialisation `init_index`; the same index always
    /// yields the same weights.
    pub fn new(config: &GanConfig, init_index: u64) -> Result<Self, GanError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed(config.seed, init_index));
        let generator = Network::new(build_generator_with(&config.arch), &mut rng)?;
        let discriminator = Network::new(build_discriminator_with(&config.arch), &mut rng)?;
        Ok(Self {
            config: config.clone(),
            g_opt: Adam::new(config.adam, &layout(&generator)),
            d_opt: Adam::new(config.adam, &layout(&discriminator)),
            generator,
            discriminator,
            rng,
            epoch: 0,
            init_index,
        })
    }

    /// Replaces everything with initialisation `init_index + 1`.
    pub fn reinitialize(&mut self) -> Result<(), GanError> {
        *self = Self::new(&self.config, self.init_index + 1)?;
        Ok(())
    }

    /// One discriminator step on `real` against fresh fakes. Returns the
    /// batch loss and accuracy measured before the update.
    fn discriminator_step(&mut self, real: &[&BeatMatrix]) -> Result<(f64, f64), GanError> {
        let b = real.len();
        let zs: Vec<Tensor> = (0..b).map(|_| noise(&mut self.rng)).collect();
        let gen = &self.generator;
        let fakes: Vec<Tensor> = zs.par_iter().map(|z| gen.forward(z)).collect::<Result<_, NnError>>()?;
        let mut inputs: Vec<(Tensor, f64)> = real.iter().map(|r| (beat_tensor(r), 1.0)).collect();
        inputs.extend(fakes.into_iter().map(|f| (f, 0.0)));
        let n = inputs.len() as f64;
        let disc = &self.discriminator;
        let per: Vec<(f64, Gradients)> = inputs
            .par_iter()
            .map(|(x, y)| {
                let (p, tape) = disc.forward_recorded(x)?;
                let p = scalar(&p);
                let g = Tensor::new(vec![1], vec![(p - y) / n])?;
                let (_, grads) = disc.backward_logits(&tape, &g)?;
                Ok((p, grads))
            })
            .collect::<Result<_, NnError>>()?;
        let probs: Vec<f64> = per.iter().map(|p| p.0).collect();
        let labels: Vec<f64> = inputs.iter().map(|i| i.1).collect();
        let loss = bce_loss(&probs, &labels)?;
        let acc = accuracy(&probs, &labels);
        let grads = sum_grads(disc, per.into_iter().map(|p| p.1));
        self.d_opt.apply(&mut self.discriminator.param_vectors_mut(), &grads)?;
        Ok((loss, acc))
    }

    /// One generator step with the non-saturating loss `-ln D(G(z))`.
    fn generator_step(&mut self, b: usize) -> Result<f64, GanError> {
        let zs: Vec<Tensor> = (0..b).map(|_| noise(&mut self.rng)).collect();
        let (gen, disc) = (&self.generator, &self.discriminator);
        let n = b as f64;
        let per: Vec<(f64, Gradients)> = zs
            .par_iter()
            .map(|z| {
                let (x, gtape) = gen.forward_recorded(z)?;
                let (p, dtape) = disc.forward_recorded(&x)?;
                let p = scalar(&p);
                let g = Tensor::new(vec![1], vec![(p - 1.0) / n])?;
                let gx = disc.input_gradient_logits(&dtape, &g)?;
                let (_, grads) = gen.backward(&gtape, &gx)?;
                Ok((p, grads))
            })
            .collect::<Result<_, NnError>>()?;
        let probs: Vec<f64> = per.iter().map(|p| p.0).collect();
        let loss = bce_loss(&probs, &vec![1.0; b])?;
        let grads = sum_grads(gen, per.into_iter().map(|p| p.1));
        self.g_opt.apply(&mut self.generator.param_vectors_mut(), &grads)?;
        Ok(loss)
    }

    fn shuffled_batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect()
    }

    /// Discriminator accuracy on `real` plus as many generated beats, without
    /// updating anything.
    pub fn discriminator_accuracy(&self, real: &[BeatMatrix], noise_seed: u64) -> Result<f64, GanError> {
        if real.is_empty() {
            return Err(GanError::EmptyTrainingSet);
        }
        let fakes = generate(self, real.len(), noise_seed)?;
        let disc = &self.discriminator;
        let labelled: Vec<(&BeatMatrix, f64)> = real
            .iter()
            .map(|r| (r, 1.0))
            .chain(fakes.iter().map(|f| (f, 0.0)))
            .collect();
        let probs: Vec<f64> = labelled
            .par_iter()
            .map(|(x, _)| disc.forward(&beat_tensor(x)).map(|p| scalar(&p)))
            .collect::<Result<_, NnError>>()?;
        let labels: Vec<f64> = labelled.iter().map(|l| l.1).collect();
        Ok(accuracy(&probs, &labels))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (prefix, net, opt) in [
            ("generator", &self.generator, &self.g_opt),
            ("discriminator", &self.discriminator, &self.d_opt),
        ] {
            for (k, p) in net.param_vectors().into_iter().enumerate() {
                ck.push_array(format!("{prefix}.{k}.params"), vec![p.len()], p);
                ck.push_array(format!("{prefix}.{k}.adam_m"), vec![p.len()], &opt.m[k]);
                ck.push_array(format!("{prefix}.{k}.adam_v"), vec![p.len()], &opt.v[k]);
            }
            ck.push_scalar(format!("{prefix}.adam_step"), opt.step);
        }
        let seed = self.rng.get_seed();
        for (k, word) in seed.chunks(8).enumerate() {
            ck.push_scalar(format!("rng.seed.{k}"), u64::from_le_bytes(word.try_into().unwrap()));
        }
        ck.push_scalar("rng.stream", self.rng.get_stream());
        let pos = self.rng.get_word_pos();
        ck.push_scalar("rng.word_pos.lo", pos as u64);
        ck.push_scalar("rng.word_pos.hi", (pos >> 64) as u64);
        ck.push_scalar("epoch", self.epoch);
        ck.push_scalar("init_index", self.init_index);
        ck
    }

    /// Rebuilds a state saved by [`GanState::to_checkpoint`] under the same
    /// configuration.
    pub fn from_checkpoint(config: &GanConfig, ck: &Checkpoint) -> Result<Self, GanError> {
        let init_index = ck.scalar("init_index")?;
        let mut state = Self::new(config, init_index)?;
        for (prefix, net, opt) in [
            ("generator", &mut state.generator, &mut state.g_opt),
            ("discriminator", &mut state.discriminator, &mut state.d_opt),
        ] {
            for (k, p) in net.param_vectors_mut().into_iter().enumerate() {
                ck.restore_into(&format!("{prefix}.{k}.params"), p)?;
                ck.restore_into(&format!("{prefix}.{k}.adam_m"), &mut opt.m[k])?;
                ck.restore_into(&format!("{prefix}.{k}.adam_v"), &mut opt.v[k])?;
            }
            opt.step = ck.scalar(&format!("{prefix}.adam_step"))?;
        }
        let mut seed = [0u8; 32];
        for k in 0..4 {
            seed[8 * k..8 * k + 8].copy_from_slice(&ck.scalar(&format!("rng.seed.{k}"))?.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(ck.scalar("rng.stream")?);
        let pos = (ck.scalar("rng.word_pos.hi")? as u128) << 64 | ck.scalar("rng.word_pos.lo")? as u128;
        rng.set_word_pos(pos);
        state.rng = rng;
        state.epoch = ck.scalar("epoch")?;
        Ok(state)
    }
}

fn sum_grads(net: &Network, parts: impl Iterator<Item = Gradients>) -> Gradients {
    let mut total = Gradients::zeros_like(net);
    for g in parts {
        total.add_assign(&g);
    }
    total
}

/// One pass over `train` in shuffled batches, each a discriminator update
/// followed by a generator update.
pub fn train_epoch(state: &mut GanState, train: &[BeatMatrix]) -> Result<TrainMetrics, GanError> {
    if train.is_empty() {
        return Err(GanError::EmptyTrainingSet);
    }
    let batches = state.shuffled_batches(train.len());
    let (mut g_sum, mut d_sum, mut acc_sum) = (0.0, 0.0, 0.0);
    for idx in &batches {
        let real: Vec<&BeatMatrix> = idx.iter().map(|&i| &train[i]).collect();
        let (d_loss, d_acc) = state.discriminator_step(&real)?;
        let g_loss = state.generator_step(real.len())?;
        d_sum += d_loss;
        acc_sum += d_acc;
        g_sum += g_loss;
    }
    state.epoch += 1;
    let nb = batches.len() as f64;
    let m = TrainMetrics {
        epoch: state.epoch,
        g_loss: g_sum / nb,
        d_loss: d_sum / nb,
        d_acc: acc_sum / nb,
    };
    if !(m.g_loss.is_finite() && m.d_loss.is_finite()) {
        return Err(GanError::Diverged(state.epoch));
    }
    Ok(m)
}

/// One pass that updates only the discriminator, the generator held fixed.
/// Returns every batch loss in order.
pub fn train_discriminator_epoch(state: &mut GanState, train: &[BeatMatrix]) -> Result<Vec<f64>, GanError> {
    if train.is_empty() {
        return Err(GanError::EmptyTrainingSet);
    }
    let batches = state.shuffled_batches(train.len());
    let mut losses = Vec::with_capacity(batches.len());
    for idx in &batches {
        let real: Vec<&BeatMatrix> = idx.iter().map(|&i| &train[i]).collect();
        losses.push(state.discriminator_step(&real)?.0);
    }
    Ok(losses)
}

/// `n` beats from noise drawn with `noise_seed`; the training RNG is not
/// touched.
pub fn generate(state: &GanState, n: usize, noise_seed: u64) -> Result<Vec<BeatMatrix>, GanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let zs: Vec<Tensor> = (0..n).map(|_| noise(&mut rng)).collect();
    let gen = &state.generator;
    let outs: Vec<Tensor> = zs.par_iter().map(|z| gen.forward(z)).collect::<Result<_, NnError>>()?;
    outs.into_iter()
        .map(|t| BeatMatrix::new(t.into_data()).map_err(|e| GanError::InvalidOutput(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GanConfig {
        GanConfig {
            batch_size: 4,
            epochs_max: 3,
            seed: 11,
            arch: ArchConfig {
                lstm_hidden: 4,
                gen_channels: [1, 1, 1, 1],
                disc_channels: [1, 1, 1, 1],
                leaky_alpha: 0.2,
            },
            ..GanConfig::default()
        }
    }

    fn data(n: usize) -> Vec<BeatMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..n)
            .map(|_| {
                let v = (0..BEAT_SAMPLES * BEAT_LEADS).map(|_| rng.random_range(-1.0..1.0)).collect();
                BeatMatrix::new(v).unwrap()
            })
            .collect()
    }

    #[test]
    fn config_invariants() {
        let mut c = tiny();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.epochs_max = 0;
        assert!(c.validate().is_err());
        assert_eq!("relearn".parse::<Mode>().unwrap(), Mode::Relearning);
        assert_eq!("accumulate".parse::<Mode>().unwrap(), Mode::AccumulativeLearning);
        assert!("sometimes".parse::<Mode>().is_err());
    }

    #[test]
    fn empty_training_set() {
        let mut s = GanState::new(&tiny(), 0).unwrap();
        assert!(matches!(train_epoch(&mut s, &[]), Err(GanError::EmptyTrainingSet)));
    }

    #[test]
    fn epoch_is_deterministic_and_moves_weights() {
        let d = data(6);
        let mut a = GanState::new(&tiny(), 0).unwrap();
        let mut b = a.clone();
        let before = a.generator.clone();
        let ma = train_epoch(&mut a, &d).unwrap();
        let mb = train_epoch(&mut b, &d).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a, b);
        assert_ne!(a.generator, before);
        assert_eq!(a.epoch, 1);
        assert!((0.0..=1.0).contains(&ma.d_acc));
    }

    #[test]
    fn generate_is_seeded() {
        let s = GanState::new(&tiny(), 0).unwrap();
        let x = generate(&s, 2, 5).unwrap();
        assert_eq!(x, generate(&s, 2, 5).unwrap());
        assert_ne!(x[0], x[1]);
        assert_ne!(x[0], generate(&s, 1, 6).unwrap()[0]);
    }

    #[test]
    fn reinitialize_equals_fresh_init() {
        let d = data(5);
        let mut s = GanState::new(&tiny(), 0).unwrap();
        train_epoch(&mut s, &d).unwrap();
        s.reinitialize().unwrap();
        assert_eq!(s, GanState::new(&tiny(), 1).unwrap());
        assert_ne!(s.generator, GanState::new(&tiny(), 0).unwrap().generator);
    }

    #[test]
    fn checkpoint_round_trip_continues_identically() {
        let d = data(5);
        let mut s = GanState::new(&tiny(), 2).unwrap();
        train_epoch(&mut s, &d).unwrap();
        let bytes = s.to_checkpoint().to_bytes();
        let mut r = GanState::from_checkpoint(&tiny(), &Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(r, s);
        assert_eq!(train_epoch(&mut r, &d).unwrap(), train_epoch(&mut s, &d).unwrap());
        assert_eq!(r, s);
    }
}

use rand::Rng;

use super::layers::{Cache, Layer};
use super::spec::NetworkSpec;
use super::{NnError, Tensor};

/// Instantiated network: a spec plus one parameter vector per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

/// Forward-pass record consumed by [`Network::backward`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    caches: Vec<Cache>,
    output_shape: Vec<usize>,
}

impl Tape {
    pub fn is_recorded(&self) -> bool {
        !self.caches.is_empty()
    }
}

/// Parameter gradients, one flat vector per layer (empty for parameter-free
/// layers).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients(net.layers.iter().map(|l| vec![0.0; l.params().len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= k);
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&v| v == 0.0)
    }

    /// Sums gradients in slice order.
    pub fn sum(net: &Network, parts: &[Gradients]) -> Self {
        let mut total = Self::zeros_like(net);
        for p in parts {
            total.add_assign(p);
        }
        total
    }
}

impl Network {
    pub fn new(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.shapes()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| Layer::from_spec(&l.spec, rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_vectors(&self) -> Vec<&[f64]> {
        self.layers.iter().map(Layer::params).collect()
    }

    pub fn param_vectors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().map(Layer::params_mut).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.params().len()).sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        if input.shape() != self.spec.input_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: self.spec.input_shape.clone(),
                got: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_recorded(&self, input: &Tensor) -> Result<(Tensor, Tape), NnError> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward_cached(x)?;
            caches.push(cache);
            x = y;
        }
        let tape = Tape {
            caches,
            output_shape: x.shape().to_vec(),
        };
        Ok((x, tape))
    }

    /// Reverse pass: returns the gradient with respect to the input and every
    /// layer's parameters.
    pub fn backward(&self, tape: &Tape, upstream: &Tensor) -> Result<(Tensor, Gradients), NnError> {
        self.check_tape(tape)?;
        if upstream.shape() != tape.output_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: tape.output_shape.clone(),
                got: upstream.shape().to_vec(),
            });
        }
        self.backward_below(tape, self.layers.len(), upstream.clone(), true)
    }

    /// Reverse pass for a network ending in a sigmoid, seeded with the
    /// gradient with respect to the sigmoid's input.
    pub fn backward_logits(&self, tape: &Tape, grad_logits: &Tensor) -> Result<(Tensor, Gradients), NnError> {
        self.check_tape(tape)?;
        if !matches!(self.layers.last(), Some(Layer::Sigmoid)) {
            return Err(NnError::UnsupportedLayer("backward_logits needs a final sigmoid".into()));
        }
        if grad_logits.shape() != tape.output_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: tape.output_shape.clone(),
                got: grad_logits.shape().to_vec(),
            });
        }
        self.backward_below(tape, self.layers.len() - 1, grad_logits.clone(), true)
    }

    /// Input gradient only, seeded below a final sigmoid; parameter gradients
    /// are not formed.
    pub fn input_gradient_logits(&self, tape: &Tape, grad_logits: &Tensor) -> Result<Tensor, NnError> {
        self.check_tape(tape)?;
        if !matches!(self.layers.last(), Some(Layer::Sigmoid)) {
            return Err(NnError::UnsupportedLayer("backward_logits needs a final sigmoid".into()));
        }
        if grad_logits.shape() != tape.output_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: tape.output_shape.clone(),
                got: grad_logits.shape().to_vec(),
            });
        }
        Ok(self.backward_below(tape, self.layers.len() - 1, grad_logits.clone(), false)?.0)
    }

    fn check_tape(&self, tape: &Tape) -> Result<(), NnError> {
        if !tape.is_recorded() || tape.caches.len() != self.layers.len() {
            return Err(NnError::NotRecorded);
        }
        Ok(())
    }

    fn backward_below(&self, tape: &Tape, top: usize, mut g: Tensor, params: bool) -> Result<(Tensor, Gradients), NnError> {
        let mut grads: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.params().len()]).collect();
        for k in (0..top).rev() {
            let (gi, gp) = self.layers[k].backward(&tape.caches[k], &g, params)?;
            grads[k] = gp;
            g = gi;
        }
        Ok((g, Gradients(grads)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_chain() -> Network {
        let spec = NetworkSpec::new(vec![3])
            .push("d1", LayerSpec::Dense { inputs: 3, outputs: 4 })
            .push("d2", LayerSpec::Dense { inputs: 4, outputs: 2 });
        Network::new(spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn backward_without_forward() {
        let net = dense_chain();
        let r = net.backward(&Tape::default(), &Tensor::zeros(vec![2]));
        assert_eq!(r.unwrap_err(), NnError::NotRecorded);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let net = dense_chain();
        let x = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let (_, tape) = net.forward_recorded(&x).unwrap();
        let (gx, gp) = net.backward(&tape, &Tensor::zeros(vec![2])).unwrap();
        assert!(gp.is_zero());
        assert!(gx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_chain_input_gradient_is_weight_product() {
        let net = dense_chain();
        let x = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let (_, tape) = net.forward_recorded(&x).unwrap();
        let up = [0.7, -0.4];
        let (gx, _) = net
            .backward(&tape, &Tensor::new(vec![2], up.to_vec()).unwrap())
            .unwrap();
        let w1 = net.layers()[0].params();
        let w2 = net.layers()[1].params();
        // W1 (3×4) · W2 (4×2) · up
        let mut h = [0.0; 4];
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = (0..2).map(|o| w2[j * 2 + o] * up[o]).sum();
        }
        for i in 0..3 {
            let expected: f64 = (0..4).map(|j| w1[i * 4 + j] * h[j]).sum();
            assert!((gx.data()[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn upstream_shape_checked() {
        let net = dense_chain();
        let x = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let (_, tape) = net.forward_recorded(&x).unwrap();
        assert!(matches!(
            net.backward(&tape, &Tensor::zeros(vec![3])),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn logit_backward_skips_sigmoid() {
        let spec = NetworkSpec::new(vec![3])
            .push("d", LayerSpec::Dense { inputs: 3, outputs: 1 })
            .push("s", LayerSpec::Sigmoid);
        let net = Network::new(spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = Tensor::new(vec![3], vec![0.3, -1.0, 2.0]).unwrap();
        let (p, tape) = net.forward_recorded(&x).unwrap();
        let p = p.data()[0];
        let g = 0.37;
        let (gx_logit, gp_logit) = net
            .backward_logits(&tape, &Tensor::new(vec![1], vec![g]).unwrap())
            .unwrap();
        let up = g / (p * (1.0 - p));
        let (gx, gp) = net.backward(&tape, &Tensor::new(vec![1], vec![up]).unwrap()).unwrap();
        for (a, b) in gx_logit.data().iter().zip(gx.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in gp_logit.0[0].iter().zip(&gp.0[0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let gx_only = net
            .input_gradient_logits(&tape, &Tensor::new(vec![1], vec![g]).unwrap())
            .unwrap();
        assert_eq!(gx_only, gx_logit);
        assert!(dense_chain().backward_logits(&tape, &Tensor::zeros(vec![1])).is_err());
    }
}

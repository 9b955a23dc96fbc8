use serde::{Deserialize, Serialize};

use super::NnError;

/// Every convolution in this crate uses a 16 (time) × 3 (lead) kernel.
pub const CONV_KERNEL: (usize, usize) = (16, 3);

/// Architecture description of a single layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Bidirectional LSTM over `[T, input]`, output `[T, 2 * hidden]`.
    BiLstm { input: usize, hidden: usize },
    /// Same-padded cross-correlation over `[T, L, in_channels]`.
    Conv2d {
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
    },
    /// Fully connected layer; any input whose element count is `inputs`.
    Dense { inputs: usize, outputs: usize },
    LeakyRelu { alpha: f64 },
    Sigmoid,
    Reshape { shape: Vec<usize> },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, stride: (usize, usize)) -> Self {
        LayerSpec::Conv2d {
            kernel: CONV_KERNEL,
            in_channels,
            out_channels,
            stride,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        match self {
            LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
                stride,
            } => {
                if *kernel != CONV_KERNEL {
                    return Err(NnError::UnsupportedLayer(format!(
                        "conv kernel {kernel:?}, only {CONV_KERNEL:?} is supported"
                    )));
                }
                if *in_channels == 0 || *out_channels == 0 || stride.0 == 0 || stride.1 == 0 {
                    return Err(NnError::UnsupportedLayer(format!("degenerate conv {self:?}")));
                }
            }
            LayerSpec::BiLstm { input, hidden } if *input == 0 || *hidden == 0 => {
                return Err(NnError::UnsupportedLayer(format!("degenerate lstm {self:?}")));
            }
            LayerSpec::Dense { inputs, outputs } if *inputs == 0 || *outputs == 0 => {
                return Err(NnError::UnsupportedLayer(format!("degenerate dense {self:?}")));
            }
            LayerSpec::LeakyRelu { alpha } if !alpha.is_finite() => {
                return Err(NnError::UnsupportedLayer("non-finite leaky relu slope".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        self.validate()?;
        let mismatch = |expected: Vec<usize>| NnError::ShapeMismatch {
            expected,
            got: input.to_vec(),
        };
        match self {
            LayerSpec::BiLstm { input: f, hidden } => match input {
                [t, x] if x == f => Ok(vec![*t, 2 * hidden]),
                _ => Err(mismatch(vec![0, *f])),
            },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                stride,
                ..
            } => match input {
                [t, l, c] if c == in_channels => Ok(vec![
                    t.div_ceil(stride.0),
                    l.div_ceil(stride.1),
                    *out_channels,
                ]),
                _ => Err(mismatch(vec![0, 0, *in_channels])),
            },
            LayerSpec::Dense { inputs, outputs } => {
                if input.iter().product::<usize>() == *inputs {
                    Ok(vec![*outputs])
                } else {
                    Err(mismatch(vec![*inputs]))
                }
            }
            LayerSpec::LeakyRelu { .. } | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() == input.iter().product::<usize>() {
                    Ok(shape.clone())
                } else {
                    Err(mismatch(shape.clone()))
                }
            }
        }
    }
}

/// Trainable parameter count of a layer.
///
/// Conv2d: `kh·kw·in·out + out`; Dense: `in·out + out`;
/// BiLSTM: `2 · 4 · ((in + hidden)·hidden + hidden)`.
pub fn param_count(layer: &LayerSpec) -> Result<usize, NnError> {
    layer.validate()?;
    Ok(match *layer {
        LayerSpec::BiLstm { input, hidden } => 2 * 4 * ((input + hidden) * hidden + hidden),
        LayerSpec::Conv2d {
            kernel: (kh, kw),
            in_channels,
            out_channels,
            ..
        } => kh * kw * in_channels * out_channels + out_channels,
        LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
        LayerSpec::LeakyRelu { .. } | LayerSpec::Sigmoid | LayerSpec::Reshape { .. } => 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedLayer {
    pub name: String,
    pub spec: LayerSpec,
}

/// Ordered layer list plus the input shape it accepts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<NamedLayer>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            input_shape,
            layers: Vec::new(),
        }
    }

    pub fn push(mut self, name: &str, spec: LayerSpec) -> Self {
        self.layers.push(NamedLayer {
            name: name.to_string(),
            spec,
        });
        self
    }

    /// Shapes after every layer; fails on the first incompatible pair.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.spec.output_shape(&shape)?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NnError> {
        Ok(self.shapes()?.pop().unwrap_or_else(|| self.input_shape.clone()))
    }

    /// `(layer name, parameter count)` for every layer that has parameters.
    pub fn param_table(&self) -> Result<Vec<(String, usize)>, NnError> {
        let mut rows = Vec::new();
        for l in &self.layers {
            let n = param_count(&l.spec)?;
            if n > 0 {
                rows.push((l.name.clone(), n));
            }
        }
        Ok(rows)
    }

    pub fn total_params(&self) -> Result<usize, NnError> {
        Ok(self.param_table()?.iter().map(|(_, n)| n).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_from_tables() {
        assert_eq!(param_count(&LayerSpec::conv(16, 128, (1, 1))).unwrap(), 98_432);
        assert_eq!(
            param_count(&LayerSpec::Dense {
                inputs: 204_800,
                outputs: 1
            })
            .unwrap(),
            204_801
        );
        assert_eq!(
            param_count(&LayerSpec::BiLstm {
                input: 12,
                hidden: 64
            })
            .unwrap(),
            39_424
        );
        assert_eq!(param_count(&LayerSpec::Sigmoid).unwrap(), 0);
    }

    #[test]
    fn rejects_other_kernels() {
        let spec = LayerSpec::Conv2d {
            kernel: (3, 3),
            in_channels: 1,
            out_channels: 1,
            stride: (1, 1),
        };
        assert!(matches!(param_count(&spec), Err(NnError::UnsupportedLayer(_))));
    }

    #[test]
    fn stride_shapes() {
        let s1 = LayerSpec::conv(4, 8, (1, 1));
        assert_eq!(s1.output_shape(&[400, 8, 4]).unwrap(), vec![400, 8, 8]);
        let s2 = LayerSpec::conv(4, 8, (2, 1));
        assert_eq!(s2.output_shape(&[400, 8, 4]).unwrap(), vec![200, 8, 8]);
        assert_eq!(s2.output_shape(&[201, 8, 4]).unwrap(), vec![101, 8, 8]);
        assert!(s2.output_shape(&[400, 8, 3]).is_err());
    }

    #[test]
    fn incompatible_network_detected() {
        let spec = NetworkSpec::new(vec![10, 3])
            .push("lstm", LayerSpec::BiLstm { input: 3, hidden: 4 })
            .push("dense", LayerSpec::Dense { inputs: 81, outputs: 1 });
        assert!(matches!(spec.shapes(), Err(NnError::ShapeMismatch { .. })));
    }
}

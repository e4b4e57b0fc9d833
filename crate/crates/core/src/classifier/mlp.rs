use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
        }));
    }
}

/// Dense head: rectified hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

/// Gradients share the parameter layout.
pub type Gradients = MlpParams;

/// Per-layer inputs recorded by a forward pass; `inputs[l]` feeds layer `l`.
pub(crate) struct ForwardCache {
    pub inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl MlpParams {
    /// Uniform fan-in initialisation (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`),
    /// zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], outputs: usize, rng: &mut impl Rng) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(outputs);
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f64).sqrt();
                let mut layer = Dense::zeros(w[0], w[1]);
                for x in &mut layer.weights {
                    *x = rng.random_range(-limit..limit);
                }
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Layer shapes as `(outputs, inputs)`.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.outputs, l.inputs)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters in layer order, weights before bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }

    /// Checks that consecutive layers chain and buffers match their shapes.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.layers.is_empty() {
            return Err(ClassifierError::InvalidConfig("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ClassifierError::InvalidConfig(format!(
                    "layer {i} buffers do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].outputs != w[1].inputs {
                return Err(ClassifierError::ShapeMismatch {
                    expected: w[0].outputs,
                    got: w[1].inputs,
                    context: format!("layer {} input", i + 1),
                });
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ClassifierError> {
        if x.len() != self.input_dim() {
            return Err(ClassifierError::ShapeMismatch {
                expected: self.input_dim(),
                got: x.len(),
                context: "input features".into(),
            });
        }
        Ok(())
    }

    /// Logit vector for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache, ClassifierError> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        let last = self.layers.len() - 1;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.outputs);
            layer.apply(&inputs[i], &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
                inputs.push(next);
            } else {
                out = next;
            }
        }
        Ok(ForwardCache {
            inputs,
            logits: out,
        })
    }

    /// Accumulates `scale * d(loss)/d(params)` into `grads`, given the loss
    /// gradient with respect to the logits.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) {
        let mut delta: Vec<f64> = dlogits.iter().map(|d| d * scale).collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // rectifier derivative: the recorded input to layer l is relu output
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

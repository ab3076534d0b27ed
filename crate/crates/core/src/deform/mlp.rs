//! Small fully-connected networks: ReLU hidden layers, identity output.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Linear {
        Linear { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    /// Uniform init in `+-1/sqrt(in_dim)`.
    pub fn small_uniform<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Linear {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Linear {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x.iter()) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    pub layers: Vec<Linear>,
}

/// Per-layer activations retained for the backward pass; `inputs[0]` is the
/// network input, `inputs[i]` the post-ReLU input of layer `i`.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation outputs of every layer.
    pub pre_activations: Vec<Vec<f64>>,
}

/// Gradients with the same layer shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &TinyMlp) -> MlpGrads {
        MlpGrads {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }
}

impl TinyMlp {
    /// `widths` = [input, hidden .., output]; hidden layers small-uniform.
    /// `zero_output` zeroes the final layer for residual-identity starts.
    pub fn new<R: Rng>(widths: &[usize], zero_output: bool, rng: &mut R) -> TinyMlp {
        assert!(widths.len() >= 2);
        let mut layers = Vec::new();
        for i in 0..widths.len() - 1 {
            let last = i == widths.len() - 2;
            layers.push(if last && zero_output {
                Linear::zeros(widths[i], widths[i + 1])
            } else {
                Linear::small_uniform(widths[i], widths[i + 1], rng)
            });
        }
        TinyMlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_traced(x).0
    }

    pub fn forward_traced(&self, x: &[f64]) -> (Vec<f64>, MlpTrace) {
        let mut trace = MlpTrace { inputs: Vec::new(), pre_activations: Vec::new() };
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            trace.inputs.push(cur.clone());
            let mut out = Vec::new();
            layer.apply(&cur, &mut out);
            trace.pre_activations.push(out.clone());
            if i != last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            cur = out;
        }
        (cur, trace)
    }

    /// Backward pass: accumulates parameter gradients into `grads` and
    /// returns dL/dinput.
    pub fn backward(&self, trace: &MlpTrace, upstream: &[f64], grads: &mut MlpGrads) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i != last {
                // ReLU gate on this layer's outputs.
                for (d, pre) in delta.iter_mut().zip(trace.pre_activations[i].iter()) {
                    if *pre <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.inputs[i];
            let gw = &mut grads.weights[i];
            let gb = &mut grads.biases[i];
            for o in 0..layer.out_dim {
                gb[o] += delta[o];
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, v) in row.iter_mut().zip(input.iter()) {
                    *g += delta[o] * v;
                }
            }
            let mut next = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (n, w) in next.iter_mut().zip(row.iter()) {
                    *n += delta[o] * w;
                }
            }
            delta = next;
        }
        delta
    }
}

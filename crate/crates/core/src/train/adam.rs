//! Moment-based adaptive parameter updates.

/// First/second moment accumulators for one flat parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamTensor {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamTensor {
    pub fn zeros(len: usize) -> AdamTensor {
        AdamTensor { m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

/// One Adam step on a flat tensor. A zero learning rate leaves parameters
/// and moments untouched so the whole training state stays bit-identical.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamTensor,
    lr: f64,
    hp: &AdamParams,
    step: u64,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    if lr == 0.0 {
        return;
    }
    let b1 = hp.beta1;
    let b2 = hp.beta2;
    let bias1 = 1.0 - b1.powi(step as i32);
    let bias2 = 1.0 - b2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

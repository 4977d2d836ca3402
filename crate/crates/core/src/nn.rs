//! Dense ReLU networks with exact reverse-mode gradients, and Adam.
//!
//! Parameters live in one flat vector per network: for each layer the
//! `out x in` weight matrix (row-major) followed by the `out` biases.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-layer perceptron: ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer inputs cached by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] })
    }

    /// He-uniform weights `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, biases
    /// `U(-1 / sqrt(fan_in), 1 / sqrt(fan_in))`.
    pub fn he_uniform<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = (6.0 / w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            let bias_bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off + w[0] * w[1]..off + w[1] * (w[0] + 1)] {
                *p = rng.random_range(-bias_bound..bias_bound);
            }
            off += w[1] * (w[0] + 1);
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters given, layers {sizes:?} need {}",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> impl Iterator<Item = (ArrayView2<'_, f64>, ArrayView1<'_, f64>)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let (n_in, n_out) = (w[0], w[1]);
            let wm = ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_out * n_in])
                .expect("layer shape");
            let b = ArrayView1::from(&self.params[off + n_out * n_in..off + n_out * (n_in + 1)]);
            off += n_out * (n_in + 1);
            (wm, b)
        })
    }

    /// Output for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.forward_batch(xs)?.output.into_raw_vec_and_offset().0)
    }

    /// Outputs for the rows of `x`, keeping what the backward pass needs.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Activations> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let n_layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut h = x.to_owned();
        for (l, (w, b)) in self.layers().enumerate() {
            let mut z = h.dot(&w.t());
            z += &b;
            if l + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        Ok(Activations { inputs, output: h })
    }

    /// Adds the parameter gradient of `sum(upstream * output)` to `grad` and
    /// returns the gradient with respect to the inputs.
    pub fn backward_batch(
        &self,
        acts: &Activations,
        upstream: ArrayView2<'_, f64>,
        grad: &mut [f64],
    ) -> Result<Array2<f64>> {
        if upstream.dim() != acts.output.dim() {
            return Err(Error::Shape(format!(
                "upstream {:?} does not match output {:?}",
                upstream.dim(),
                acts.output.dim()
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer size mismatch".into()));
        }
        let layers: Vec<_> = self.layers().collect();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[1] * (w[0] + 1);
        }
        let mut delta = upstream.to_owned();
        for l in (0..layers.len()).rev() {
            let (w, _) = &layers[l];
            let input = &acts.inputs[l];
            let (n_out, n_in) = w.dim();
            let o = offsets[l];
            {
                let mut gw = ArrayViewMut2::from_shape((n_out, n_in), &mut grad[o..o + n_out * n_in])
                    .expect("layer shape");
                gw += &delta.t().dot(input);
            }
            for (g, s) in grad[o + n_out * n_in..o + n_out * (n_in + 1)]
                .iter_mut()
                .zip(delta.sum_axis(Axis(0)))
            {
                *g += s;
            }
            let mut prev = delta.dot(w);
            if l > 0 {
                prev.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Parameter and input gradients of `upstream . forward(x)`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let acts = self.forward_batch(xs)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let mut grad = vec![0.0; self.params.len()];
        let gx = self.backward_batch(&acts, up, &mut grad)?;
        Ok((grad, gx.into_raw_vec_and_offset().0))
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update with learning rate `lr`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("Adam state and parameter sizes differ".into()));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training {
                step: self.t as usize + 1,
                detail: format!("non-finite gradient at parameter {i}"),
            });
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let n = net.n_params();
        net.params_mut()[n - 1] = 0.7;
        assert_eq!(net.forward(&[0.0; 3]).unwrap(), vec![0.0, 0.7]);
    }

    #[test]
    fn relu_kills_negative() {
        // w1, b1, w2, b2
        let net = Mlp::from_params(&[1, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn linear_input_gradient() {
        let net = Mlp::from_params(&[1, 1], vec![2.0, 0.5]).unwrap();
        let (g, gx) = net.backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(gx, vec![2.0]);
        assert_eq!(g, vec![3.0, 1.0]);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[2, 3, 1]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(Mlp::zeros(&[2]).is_err());
        assert!(Mlp::from_params(&[1, 1], vec![1.0]).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(1, AdamConfig::default());
        let mut p = [1.0];
        adam.step(&mut p, &[1.0], 0.1).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6);
        adam.step(&mut p, &[1.0], 0.1).unwrap();
        assert!(p[0] < 0.9);
        let mut q = [0.3, -0.2];
        let mut adam = Adam::new(2, AdamConfig::default());
        adam.step(&mut q, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(q, [0.3, -0.2]);
        assert!(matches!(adam.step(&mut q, &[f64::NAN, 0.0], 0.1), Err(Error::Training { step: 2, .. })));
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::he_uniform(&[3, 5, 4, 2], &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.2);
        let acts = net.forward_batch(x.view()).unwrap();
        for i in 0..4 {
            let row = net.forward(x.row(i).as_slice().unwrap()).unwrap();
            assert_eq!(acts.output.row(i).to_vec(), row);
        }
    }
}

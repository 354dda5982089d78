//! Fully connected tanh networks with hand-written reverse-mode gradients and Adam.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! (`out × in`, column-major) followed by its bias.

use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of every layer for one batch, samples as columns.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[L]` the linear output.
    pub acts: Vec<DMatrix<f64>>,
}

impl Trace {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("at least the input")
    }
}

fn count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; count(sizes)],
        }
    }

    /// Glorot-uniform weights, zero biases. `out_gain` scales the last layer.
    pub fn init(sizes: &[usize], out_gain: f64, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == layers {
                a *= out_gain;
            }
            let (w, _) = net.offsets(l);
            for p in &mut net.params[w..w + fan_in * fan_out] {
                *p = rng.random_range(-a..a);
            }
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.iter().all(|&s| s > 0) && params.len() == count(sizes)).then(|| Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Start of the weight block and of the bias of layer `l`.
    pub fn offsets(&self, l: usize) -> (usize, usize) {
        let w = count(&self.sizes[..=l]);
        (w, w + self.sizes[l] * self.sizes[l + 1])
    }

    fn weight(&self, l: usize) -> DMatrixView<'_, f64> {
        let (w, _) = self.offsets(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        DMatrixView::from_slice(&self.params[w..w + i * o], o, i)
    }

    fn bias(&self, l: usize) -> DVectorView<'_, f64> {
        let (_, b) = self.offsets(l);
        DVectorView::from_slice(&self.params[b..b + self.sizes[l + 1]], self.sizes[l + 1])
    }

    pub fn forward_batch(&self, x: DMatrix<f64>) -> Trace {
        assert_eq!(x.nrows(), self.input_dim(), "input width");
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x);
        for l in 0..self.layers() {
            let mut z = self.weight(l) * &acts[l];
            let b = self.bias(l);
            for mut col in z.column_iter_mut() {
                col += &b;
            }
            if l + 1 < self.layers() {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Trace { acts }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let t = self.forward_batch(DMatrix::from_column_slice(x.len(), 1, x));
        t.output().as_slice().to_vec()
    }

    /// Gradient of a scalar loss with respect to the parameters (flat, same
    /// layout) and to the input, given `d_out = ∂loss/∂output`.
    pub fn backward(&self, trace: &Trace, d_out: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out.clone();
        for l in (0..self.layers()).rev() {
            let (w_off, b_off) = self.offsets(l);
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let gw = &delta * trace.acts[l].transpose();
            grad[w_off..w_off + i * o].copy_from_slice(gw.as_slice());
            for (r, g) in grad[b_off..b_off + o].iter_mut().enumerate() {
                *g = delta.row(r).sum();
            }
            let mut prev = self.weight(l).transpose() * &delta;
            if l > 0 {
                prev.zip_apply(&trace.acts[l], |d, h| *d *= 1.0 - h * h);
            }
            delta = prev;
        }
        (grad, delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if n > max_norm && n > 0.0 {
        let s = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]);
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]), vec![0.0, 0.0]);
        assert_eq!(net.params().len(), 3 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&[3, 5, 2], 1.0, &mut rng);
        let x = [0.3, -0.2, 0.8];
        let t = net.forward_batch(DMatrix::from_column_slice(3, 1, &x));
        let (_, dx) = net.backward(&t, &DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        for k in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            let fd = (net.forward(&xp)[0] - net.forward(&xm)[0]) / 2e-6;
            assert!((fd - dx[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = vec![1.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-3 && p[1].abs() < 1e-3);
    }
}

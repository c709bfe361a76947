//! Fully connected ReLU network with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Weights are stored `(fan_in, fan_out)` so a layer computes `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Layer inputs saved by [`Mlp::forward_cached`]; entry `l` is the input of
/// layer `l` (post-activation for hidden layers).
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform(−1/√fan_in, 1/√fan_in) initialization for weights and biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || dist.sample(rng)));
            biases.push(Array1::from_shape_simple_fn(w[1], || dist.sample(rng)));
        }
        Self { weights, biases }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            weights: sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: sizes.windows(2).map(|w| Array1::zeros(w[1])).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.weights.iter().map(|w| w.nrows()).collect();
        s.push(self.output_dim());
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map(|w| w.ncols()).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(w) + b;
            if l < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        (h, MlpCache { inputs })
    }

    /// Gradients of a scalar loss given `d_out = ∂loss/∂output`. Returns the
    /// parameter gradients (same shape as `self`) and `∂loss/∂input`.
    pub fn backward(&self, cache: &MlpCache, d_out: Array2<f64>) -> (Mlp, Array2<f64>) {
        let n = self.weights.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = d_out;
        for l in (0..n).rev() {
            let a = &cache.inputs[l];
            gw.push(a.t().dot(&delta).as_standard_layout().into_owned());
            gb.push(delta.sum_axis(Axis(0)));
            let mut d_in = delta.dot(&self.weights[l].t());
            if l > 0 {
                d_in.zip_mut_with(a, |d, &h| {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = d_in;
        }
        gw.reverse();
        gb.reverse();
        (Mlp { weights: gw, biases: gb }, delta)
    }

    /// Parameter tensors in declaration order: W0, b0, W1, b1, ...
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn tensor_lens(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut i = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[i..i + t.len()]);
            i += t.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self ← τ·src + (1−τ)·self`, kept inside the interval spanned by the
    /// two operands.
    pub fn soft_update_from(&mut self, src: &Mlp, tau: f64) {
        for (dst, s) in self.tensors_mut().into_iter().zip(src.tensors()) {
            for (d, &o) in dst.iter_mut().zip(s) {
                *d = if tau == 1.0 {
                    o
                } else {
                    let v = *d + tau * (o - *d);
                    v.clamp(d.min(o), d.max(o))
                };
            }
        }
    }

    /// Elementwise `self += other`, for accumulating gradients.
    pub fn add_assign(&mut self, other: &Mlp) {
        for (d, s) in self.tensors_mut().into_iter().zip(other.tensors()) {
            d.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_forward() {
        let net = Mlp {
            weights: vec![array![[1.0, -1.0]], array![[2.0], [3.0]]],
            biases: vec![array![0.0, 0.5], array![0.25]],
        };
        // x = 2: hidden = relu(2, -1.5) = (2, 0); out = 4 + 0.25
        let y = net.forward(array![[2.0]].view());
        assert_eq!(y[[0, 0]], 4.25);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 5, 4, 2], &mut rng);
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let target = Array2::from_shape_fn((6, 2), |(i, j)| (i as f64 - j as f64) * 0.1);
        let loss = |n: &Mlp, x: &Array2<f64>| {
            let y = n.forward(x.view());
            0.5 * (&y - &target).mapv(|v| v * v).sum()
        };
        let (y, cache) = net.forward_cached(x.view());
        let (g, dx) = net.backward(&cache, &y - &target);
        let h = 1e-6;
        let base = net.flat();
        let gflat = g.flat();
        for i in 0..base.len() {
            let mut p = net.clone();
            let mut v = base.clone();
            v[i] += h;
            p.set_flat(&v);
            let up = loss(&p, &x);
            v[i] -= 2.0 * h;
            p.set_flat(&v);
            let down = loss(&p, &x);
            assert!(((up - down) / (2.0 * h) - gflat[i]).abs() < 1e-6, "param {i}");
        }
        for idx in [(0, 0), (3, 2), (5, 1)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let up = loss(&net, &xp);
            xp[idx] -= 2.0 * h;
            let down = loss(&net, &xp);
            assert!(((up - down) / (2.0 * h) - dx[idx]).abs() < 1e-6);
        }
    }

    #[test]
    fn soft_update_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mlp::new(&[2, 3, 1], &mut rng);
        let b = Mlp::new(&[2, 3, 1], &mut rng);
        let mut t = b.clone();
        t.soft_update_from(&a, 0.0);
        assert_eq!(t, b);
        t.soft_update_from(&a, 1.0);
        assert_eq!(t, a);
    }
}

//! Multilayer perceptron with a flat parameter vector.
//!
//! Parameters are stored layer-major; within a layer the `out x in` weight
//! matrix (row-major) comes first, followed by the `out` biases. This ordering
//! is the checkpoint ordering as well, so it must not change.

use rand::Rng;

use crate::error::{check_len, NnError, Result};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-layer activations recorded by [`Network::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `layers[0]` is the input, `layers[k]` the output of layer `k`.
    layers: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network output, row-major `batch x out`.
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("cache always holds the input")
    }
}

/// Result of a reverse-mode pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Gradient with respect to the flat parameter vector, summed over the batch.
    pub params: Vec<f64>,
    /// Gradient with respect to the inputs (`batch x in`), if requested.
    pub input: Option<Vec<f64>>,
}

/// Number of parameters implied by `layer_sizes`.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(NnError::InvalidArchitecture(
            "need at least an input and an output layer".into(),
        ));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(NnError::InvalidArchitecture(
            "layer sizes must be positive".into(),
        ));
    }
    Ok(())
}

impl Network {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Uniform fan-in initialization `U(-1/sqrt(in), 1/sqrt(in))` for weights and biases.
    pub fn init<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activation)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * out + out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * out + out;
        }
        Ok(net)
    }

    pub fn from_params(
        layer_sizes: &[usize],
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        check_len("parameter vector", param_count(layer_sizes), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFinite("parameters"));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameters. Callers are responsible for keeping them finite.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// (weights, biases) slices of layer `k`.
    pub fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let (offset, fan_in, out) = self.layer_offset(k);
        let (w, rest) = self.params[offset..].split_at(fan_in * out);
        (w, &rest[..out])
    }

    fn layer_offset(&self, k: usize) -> (usize, usize, usize) {
        let offset = self.layer_sizes[..k + 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (offset, self.layer_sizes[k], self.layer_sizes[k + 1])
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_batch(input, 1)?;
        Ok(cache.layers.into_iter().last().unwrap())
    }

    /// Batched forward pass over a row-major `batch x in` input.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<ForwardCache> {
        check_len("input", batch * self.input_dim(), input.len())?;
        let mut layers = Vec::with_capacity(self.layer_sizes.len());
        layers.push(input.to_vec());
        let last = self.num_layers() - 1;
        for k in 0..self.num_layers() {
            let (w, b) = self.layer(k);
            let (fan_in, out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let x = layers.last().unwrap();
            let mut z = Vec::with_capacity(batch * out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            // z += x * w^T
            gemm(
                batch, fan_in, out, x, fan_in, 1, w, 1, fan_in, &mut z, out, 1.0,
            );
            if k != last {
                let act = self.activation;
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            layers.push(z);
        }
        Ok(ForwardCache { batch, layers })
    }

    /// Reverse-mode pass: gradient of `sum(upstream * output)` over the cached batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        want_input: bool,
    ) -> Result<Gradients> {
        let batch = cache.batch;
        check_len("upstream", batch * self.output_dim(), upstream.len())?;
        check_len(
            "cache",
            self.layer_sizes.len(),
            cache.layers.len(),
        )?;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.to_vec();
        let mut input_grad = None;
        for k in (0..self.num_layers()).rev() {
            let (offset, fan_in, out) = self.layer_offset(k);
            let x = &cache.layers[k];
            let (gw, rest) = grads[offset..].split_at_mut(fan_in * out);
            // dW = delta^T x
            gemm(
                out, batch, fan_in, &delta, 1, out, x, fan_in, 1, gw, fan_in, 0.0,
            );
            let gb = &mut rest[..out];
            for row in delta.chunks_exact(out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if k == 0 && !want_input {
                break;
            }
            let (w, _) = self.layer(k);
            let mut dx = vec![0.0; batch * fan_in];
            // dX = delta W
            gemm(batch, out, fan_in, &delta, out, 1, w, fan_in, 1, &mut dx, fan_in, 0.0);
            if k > 0 {
                let act = self.activation;
                for (d, y) in dx.iter_mut().zip(x) {
                    *d *= act.derivative_from_output(*y);
                }
                delta = dx;
            } else {
                input_grad = Some(dx);
            }
        }
        Ok(Gradients {
            params: grads,
            input: input_grad,
        })
    }

    /// Single-sample gradient of `upstream . forward(input)` with respect to the parameters.
    pub fn gradients(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_batch(input, 1)?;
        Ok(self.backward(&cache, upstream, false)?.params)
    }

    /// Slow target tracking: `self <- (1 - tau) * self + tau * online`.
    pub fn polyak_update(&mut self, online: &Network, tau: f64) -> Result<()> {
        if self.layer_sizes != online.layer_sizes {
            return Err(NnError::InvalidArchitecture(format!(
                "polyak shapes differ: {:?} vs {:?}",
                self.layer_sizes, online.layer_sizes
            )));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(NnError::InvalidArchitecture(format!(
                "polyak factor {tau} outside [0, 1]"
            )));
        }
        if tau == 1.0 {
            self.params.copy_from_slice(&online.params);
            return Ok(());
        }
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t += tau * (o - *t);
        }
        Ok(())
    }
}

/// `c = beta * c + a * b` for strided row/column layouts (`m x k` times `k x n`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    beta: f64,
) {
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!(m == 0 || n == 0 || (m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the debug assertions above describe the bounds every call site
    // satisfies; all strides come from the matrix shapes of the same network.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

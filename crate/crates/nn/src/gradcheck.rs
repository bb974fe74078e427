//! Central finite-difference checks of analytic gradients, with ReLU kinks
//! detected from activation patterns rather than guessed from tolerances.

use crate::network::{Activation, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdTolerance {
    pub rel: f64,
    pub abs: f64,
    pub step: f64,
}

impl Default for FdTolerance {
    fn default() -> Self {
        Self {
            rel: 1e-4,
            abs: 1e-7,
            step: 1e-6,
        }
    }
}

impl FdTolerance {
    pub fn accepts(&self, analytic: f64, numeric: f64) -> bool {
        (analytic - numeric).abs() <= self.rel * analytic.abs().max(numeric.abs()) + self.abs
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU.
    pub skipped: usize,
    /// `(coordinate, analytic, numeric)` for every rejected coordinate.
    pub failures: Vec<(usize, f64, f64)>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.failures.extend(other.failures);
    }
}

/// Compares `analytic` with central differences of `eval`. `eval(i, d)`
/// returns the objective with coordinate `i` shifted by `d` together with a
/// signature of every ReLU sign involved; coordinates whose two evaluations
/// disagree in signature straddle a kink and are skipped.
pub fn check_gradient<F>(analytic: &[f64], coords: impl IntoIterator<Item = usize>, tol: &FdTolerance, mut eval: F) -> FdReport
where
    F: FnMut(usize, f64) -> (f64, Vec<bool>),
{
    let mut report = FdReport::default();
    for i in coords {
        let (plus, sig_plus) = eval(i, tol.step);
        let (minus, sig_minus) = eval(i, -tol.step);
        if sig_plus != sig_minus {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * tol.step);
        report.checked += 1;
        if !tol.accepts(analytic[i], numeric) {
            report.failures.push((i, analytic[i], numeric));
        }
    }
    report
}

/// Pre-activation signs of every hidden ReLU unit over a row-major batch.
/// Empty for tanh networks.
pub fn relu_signs(net: &Network, input: &[f64], batch: usize) -> Vec<bool> {
    if net.activation() != Activation::Relu {
        return Vec::new();
    }
    let sizes = net.layer_sizes();
    let hidden_layers = sizes.len() - 2;
    let mut signs = Vec::new();
    for row in input.chunks_exact(sizes[0]).take(batch) {
        let mut h = row.to_vec();
        for k in 0..hidden_layers {
            let (w, b) = net.layer(k);
            let n_in = sizes[k];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(&h).map(|(a, x)| a * x).sum::<f64>())
                .collect();
            signs.extend(z.iter().map(|v| *v > 0.0));
            h = z.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    signs
}

/// Gradient of `upstream . net(input)` against central differences over every parameter.
pub fn check_network(net: &Network, input: &[f64], upstream: &[f64], tol: &FdTolerance) -> crate::Result<FdReport> {
    let batch = input.len() / net.input_dim().max(1);
    let cache = net.forward_batch(input, batch)?;
    let analytic = net.backward(&cache, upstream, false)?.params;
    let mut probe = net.clone();
    Ok(check_gradient(&analytic, 0..net.param_count(), tol, |i, d| {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + d;
        let out = probe.forward_batch(input, batch).expect("shapes fixed");
        let value = out.output().iter().zip(upstream).map(|(o, u)| o * u).sum();
        let sig = relu_signs(&probe, input, batch);
        probe.params_mut()[i] = orig;
        (value, sig)
    }))
}

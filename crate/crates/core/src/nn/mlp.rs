use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

/// Width of the two hidden layers used by every Q-network.
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

/// Dense network: rectifier hidden layers, linear output.
///
/// `weights[l]` has shape `(dims[l + 1], dims[l])` where
/// `dims = [in_dim, hidden..., out_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
}

/// Per-parameter gradients, shape-congruent with an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Activations cached by [`Mlp::forward_traced`] for a later backward pass.
pub struct Trace {
    /// Input to each layer (the observation batch, then hidden activations).
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

fn layer_dims(in_dim: usize, hidden: &[usize], out_dim: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(in_dim);
    dims.extend_from_slice(hidden);
    dims.push(out_dim);
    dims
}

impl Mlp {
    /// He-uniform initialisation: weights ~ U(±sqrt(6 / fan_in)), zero biases.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = layer_dims(in_dim, hidden, out_dim);
        if dims.contains(&0) {
            return Err(Error::config(format!("layer sizes must be positive: {dims:?}")));
        }
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            dims,
            weights,
            biases,
        })
    }

    pub fn zeros(in_dim: usize, hidden: &[usize], out_dim: usize) -> Self {
        let dims = layer_dims(in_dim, hidden, out_dim);
        let weights = dims
            .windows(2)
            .map(|p| Array2::zeros((p[1], p[0])))
            .collect();
        let biases = dims.windows(2).map(|p| Array1::zeros(p[1])).collect();
        Self {
            dims,
            weights,
            biases,
        }
    }

    /// Builds a network from explicit layers, checking that shapes chain and
    /// every entry is finite.
    pub fn from_layers(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::contract(format!(
                "{} weight matrices for {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut dims = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *dims.last().unwrap() || b.len() != w.nrows() {
                return Err(Error::contract(format!(
                    "layer {l}: weight {:?} and bias {} do not chain from width {}",
                    w.dim(),
                    b.len(),
                    dims.last().unwrap()
                )));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: l,
                    detail: "non-finite parameter".into(),
                });
            }
            dims.push(w.nrows());
        }
        if dims.contains(&0) {
            return Err(Error::contract(format!("zero-width layer in {dims:?}")));
        }
        Ok(Self {
            dims,
            weights,
            biases,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.dims[1..self.dims.len() - 1]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.dims == other.dims
    }

    /// All parameters in layer order, each layer's weights (row-major) then
    /// its biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, obs: &ArrayView2<f64>) -> Result<()> {
        if obs.ncols() != self.in_dim() {
            return Err(Error::contract(format!(
                "observation batch has {} columns, network expects {}",
                obs.ncols(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&obs)?;
        let last = self.weights.len() - 1;
        let mut act = affine(obs, &self.weights[0], &self.biases[0]);
        for l in 1..=last {
            act.mapv_inplace(relu);
            act = affine(act.view(), &self.weights[l], &self.biases[l]);
        }
        Ok(act)
    }

    /// Forward pass for one observation.
    pub fn forward_one(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, obs.len()), obs)
            .map_err(|e| Error::contract(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_traced(&self, obs: ArrayView2<f64>) -> Result<Trace> {
        self.check_input(&obs)?;
        let mut inputs = Vec::with_capacity(self.weights.len());
        inputs.push(obs.to_owned());
        let last = self.weights.len() - 1;
        let mut act = affine(obs, &self.weights[0], &self.biases[0]);
        for l in 1..=last {
            act.mapv_inplace(relu);
            let next = affine(act.view(), &self.weights[l], &self.biases[l]);
            inputs.push(act);
            act = next;
        }
        Ok(Trace {
            inputs,
            output: act,
        })
    }

    /// Gradient of `sum(upstream ⊙ output)` with respect to every parameter.
    /// The sum runs over the batch unscaled; callers fold any `1/B` into
    /// `upstream`.
    pub fn backward(&self, trace: &Trace, upstream: ArrayView2<f64>) -> Result<Gradients> {
        if upstream.dim() != trace.output.dim() {
            return Err(Error::contract(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.dim(),
                trace.output.dim()
            )));
        }
        let n = self.weights.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = upstream.to_owned();
        for l in (0..n).rev() {
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: l,
                    detail: "non-finite backpropagated gradient".into(),
                });
            }
            gw.push(delta.t().dot(&trace.inputs[l]));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l]);
                // inputs[l] = relu(pre-activation), so it is positive exactly where the
                // rectifier passes gradient.
                Zip::from(&mut prev)
                    .and(&trace.inputs[l])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }

    pub fn backprop(&self, obs: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<Gradients> {
        let trace = self.forward_traced(obs)?;
        self.backward(&trace, upstream)
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn affine(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = x.dot(&w.t());
    out += b;
    out
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.weights.len() == net.weights.len()
            && self
                .weights
                .iter()
                .zip(&net.weights)
                .all(|(g, w)| g.dim() == w.dim())
            && self
                .biases
                .iter()
                .zip(&net.biases)
                .all(|(g, b)| g.dim() == b.dim())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(4, &[8, 8], 3);
        let out = net.forward(Array2::from_elem((5, 4), 2.5).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_evaluated_scalar_chain() {
        let net = Mlp::from_layers(
            vec![array![[2.0]], array![[3.0]]],
            vec![array![0.0], array![1.0]],
        )
        .unwrap();
        let out = net.forward(array![[1.0]].view()).unwrap();
        assert_eq!(out[[0, 0]], 7.0);
    }

    #[test]
    fn dead_hidden_layer_returns_output_bias() {
        let mut rng = seeded_rng(1, "test");
        let mut net = Mlp::new(3, &[5], 2, &mut rng).unwrap();
        net.weights[0].fill(0.0);
        net.biases[0].fill(-1.0);
        net.biases[1] = array![0.25, -4.0];
        let out = net.forward(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(out.row(0).to_vec(), vec![0.25, -4.0]);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let net = Mlp::zeros(4, &[8], 3);
        let err = net.forward(Array2::zeros((2, 5)).view()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let trace = net.forward_traced(Array2::zeros((2, 4)).view()).unwrap();
        assert!(net.backward(&trace, Array2::zeros((2, 2)).view()).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = seeded_rng(2, "test");
        let net = Mlp::new(6, &[16, 16], 3, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
        let g = net.backprop(x.view(), Array2::zeros((4, 3)).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let net = Mlp::from_layers(
            vec![array![[0.3, -0.2, 0.5], [1.0, 0.0, -1.0]]],
            vec![array![0.0, 0.0]],
        )
        .unwrap();
        let x = array![[1.5, -2.0, 0.25]];
        let up = array![[0.7, -1.1]];
        let g = net.backprop(x.view(), up.view()).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((g.weights[0][[i, j]] - up[[0, i]] * x[[0, j]]).abs() < 1e-15);
            }
            assert_eq!(g.biases[0][i], up[[0, i]]);
        }
    }

    #[test]
    fn output_homogeneous_in_last_weights() {
        let mut rng = seeded_rng(3, "test");
        let mut net = Mlp::new(5, &[12, 12], 4, &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
        let base = net.forward(x.view()).unwrap();
        net.weights[2].mapv_inplace(|w| 2.5 * w);
        let scaled = net.forward(x.view()).unwrap();
        for (a, b) in base.iter().zip(scaled.iter()) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut rng = seeded_rng(4, "test");
        let net = Mlp::new(3, &[4], 2, &mut rng).unwrap();
        let mut other = Mlp::zeros(3, &[4], 2);
        other.set_flat_params(&net.flat_params()).unwrap();
        assert_eq!(net, other);
    }
}

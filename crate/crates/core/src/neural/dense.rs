use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::{shape_err, NeuralError, Parameters};

/// Affine layer `y = W x + b` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self, NeuralError> {
        if weight.nrows() != bias.len() {
            return Err(shape_err(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn glorot(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((output, input), || rng.random_range(-limit..=limit)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Batched forward: `x` is N x in, the result N x out.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        if x.ncols() != self.input_dim() {
            return Err(shape_err(format!(
                "input has {} columns, layer expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    pub fn forward_vec(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, NeuralError> {
        if x.len() != self.input_dim() {
            return Err(shape_err(format!(
                "input has {} entries, layer expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.weight.dot(&x) + &self.bias)
    }

    /// Gradients for upstream gradient `dy` (N x out) at input `x` (N x in).
    /// Returns `dx` and a `Dense` holding `dW` and `db`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Result<(Array2<f64>, Dense), NeuralError> {
        if x.ncols() != self.input_dim() || dy.ncols() != self.output_dim() || x.nrows() != dy.nrows() {
            return Err(shape_err(format!(
                "backward got x {:?} and dy {:?} for a {}x{} layer",
                x.dim(),
                dy.dim(),
                self.output_dim(),
                self.input_dim()
            )));
        }
        let dx = dy.dot(&self.weight);
        let grads = Dense {
            weight: dy.t().dot(&x),
            bias: dy.sum_axis(Axis(0)),
        };
        Ok((dx, grads))
    }
}

impl Parameters for Dense {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("weight".into(), self.weight.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        vec![self.weight.view_mut().into_dyn(), self.bias.view_mut().into_dyn()]
    }
}

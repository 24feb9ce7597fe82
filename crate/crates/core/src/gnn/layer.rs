use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::Activation;
use crate::graph::CsrMatrix;

/// One Chebyshev graph convolution: `act(Σ_k T_k(L̂) X Θ_k + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebLayer {
    /// `K + 1` matrices of shape `F_in × F_out`.
    pub theta: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Gradients with the same shapes as a layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub theta: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &ChebLayer) -> Self {
        LayerGrad {
            theta: layer.theta.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
            bias: Array1::zeros(layer.bias.len()),
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrad) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += b;
        }
        self.bias += &other.bias;
    }

    pub fn scale(&mut self, c: f64) {
        for t in &mut self.theta {
            t.mapv_inplace(|v| v * c);
        }
        self.bias.mapv_inplace(|v| v * c);
    }
}

/// Nodes whose row block in `x` holds any nonzero entry.
fn active_nodes(x: &ArrayView2<f64>, n: usize) -> Vec<usize> {
    let b = x.nrows() / n;
    (0..n)
        .filter(|&i| x.slice(s![i * b..(i + 1) * b, ..]).iter().any(|v| *v != 0.0))
        .collect()
}

fn gather_blocks(x: &ArrayView2<f64>, nodes: &[usize], b: usize) -> Array2<f64> {
    let rows: Vec<usize> = nodes.iter().flat_map(|&i| i * b..(i + 1) * b).collect();
    x.select(Axis(0), &rows)
}

impl ChebLayer {
    pub fn zeros(order: usize, f_in: usize, f_out: usize, activation: Activation) -> Self {
        ChebLayer {
            theta: vec![Array2::zeros((f_in, f_out)); order + 1],
            bias: Array1::zeros(f_out),
            activation,
        }
    }

    /// Glorot-uniform weights for every `Θ_k`, zero bias.
    ///
    /// The fan-in counts all `K + 1` stacked weight matrices, since their
    /// contributions add into the same output.
    pub fn glorot<R: Rng>(order: usize, f_in: usize, f_out: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / ((order + 1) * f_in + f_out) as f64).sqrt();
        let theta = (0..=order)
            .map(|_| Array2::from_shape_simple_fn((f_in, f_out), || rng.random_range(-limit..limit)))
            .collect();
        ChebLayer {
            theta,
            bias: Array1::zeros(f_out),
            activation,
        }
    }

    pub fn order(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn f_in(&self) -> usize {
        self.theta[0].nrows()
    }

    pub fn f_out(&self) -> usize {
        self.theta[0].ncols()
    }

    pub fn n_params(&self) -> usize {
        self.theta.len() * self.f_in() * self.f_out() + self.f_out()
    }

    /// Pre-activation output for a node-major batch `x` of shape `(n·B) × F_in`.
    ///
    /// Evaluates `Σ_k T_k(L̂)(X Θ_k)` by Clenshaw recurrence so only `K` sparse
    /// products are needed; node blocks of `x` that are entirely zero are
    /// skipped in the dense products.
    pub fn pre_activation(&self, l_hat: &CsrMatrix, x: ArrayView2<f64>) -> Array2<f64> {
        let n = l_hat.n();
        let rows = x.nrows();
        let b = rows / n;
        let f_out = self.f_out();
        let active = active_nodes(&x, n);
        let dense = active.len() == n;
        let gathered;
        let x_act = if dense {
            x.view()
        } else {
            gathered = gather_blocks(&x, &active, b);
            gathered.view()
        };
        let mut y = Array2::<f64>::zeros((x_act.nrows(), f_out));
        let add_term = |k: usize, out: &mut Array2<f64>, y: &mut Array2<f64>| {
            if dense {
                general_mat_mul(1.0, &x_act, &self.theta[k], 1.0, out);
            } else {
                general_mat_mul(1.0, &x_act, &self.theta[k], 0.0, y);
                for (a, &node) in active.iter().enumerate() {
                    let mut blk = out.slice_mut(s![node * b..(node + 1) * b, ..]);
                    blk += &y.slice(s![a * b..(a + 1) * b, ..]);
                }
            }
        };

        let mut out = Array2::<f64>::zeros((rows, f_out));
        let order = self.order();
        if order > 0 {
            let mut b1 = Array2::<f64>::zeros((rows, f_out));
            let mut b2 = Array2::<f64>::zeros((rows, f_out));
            for k in (1..=order).rev() {
                l_hat.apply_blocks(
                    b1.as_slice().unwrap(),
                    out.as_slice_mut().unwrap(),
                    2.0,
                    -1.0,
                    Some(b2.as_slice().unwrap()),
                );
                add_term(k, &mut out, &mut y);
                std::mem::swap(&mut b2, &mut b1);
                std::mem::swap(&mut b1, &mut out);
            }
            l_hat.apply_blocks(
                b1.as_slice().unwrap(),
                out.as_slice_mut().unwrap(),
                1.0,
                -1.0,
                Some(b2.as_slice().unwrap()),
            );
        }
        add_term(0, &mut out, &mut y);
        out += &self.bias;
        out
    }

    /// Gradients given the loss gradient w.r.t. the pre-activation.
    ///
    /// Returns the input gradient only when `input_grad` is set.
    pub fn backward(
        &self,
        l_hat: &CsrMatrix,
        x: ArrayView2<f64>,
        d_pre: ArrayView2<f64>,
        input_grad: bool,
    ) -> (LayerGrad, Option<Array2<f64>>) {
        let n = l_hat.n();
        let rows = x.nrows();
        let b = rows / n;
        let active = active_nodes(&x, n);
        let dense = active.len() == n;
        let gathered;
        let x_act = if dense {
            x.view()
        } else {
            gathered = gather_blocks(&x, &active, b);
            gathered.view()
        };

        let mut grad = LayerGrad::zeros_like(self);
        grad.bias = d_pre.sum_axis(Axis(0));
        let mut dx = input_grad.then(|| Array2::<f64>::zeros(x.raw_dim()));

        // t_{k-1}, t_{k-2} of the recursion T_k(L̂) d_pre
        let mut t_prev = d_pre.as_standard_layout().into_owned();
        let mut t_prev2 = Array2::<f64>::zeros(t_prev.raw_dim());
        let mut t_cur = Array2::<f64>::zeros(t_prev.raw_dim());
        for k in 0..=self.order() {
            let t_k = match k {
                0 => &t_prev,
                1 => {
                    l_hat.apply_blocks(t_prev.as_slice().unwrap(), t_cur.as_slice_mut().unwrap(), 1.0, 0.0, None);
                    std::mem::swap(&mut t_prev2, &mut t_prev);
                    std::mem::swap(&mut t_prev, &mut t_cur);
                    &t_prev
                }
                _ => {
                    l_hat.apply_blocks(
                        t_prev.as_slice().unwrap(),
                        t_cur.as_slice_mut().unwrap(),
                        2.0,
                        -1.0,
                        Some(t_prev2.as_slice().unwrap()),
                    );
                    std::mem::swap(&mut t_prev2, &mut t_prev);
                    std::mem::swap(&mut t_prev, &mut t_cur);
                    &t_prev
                }
            };
            if dense {
                general_mat_mul(1.0, &x_act.t(), t_k, 0.0, &mut grad.theta[k]);
            } else {
                let t_act = gather_blocks(&t_k.view(), &active, b);
                general_mat_mul(1.0, &x_act.t(), &t_act, 0.0, &mut grad.theta[k]);
            }
            if let Some(dx) = dx.as_mut() {
                general_mat_mul(1.0, t_k, &self.theta[k].t(), 1.0, dx);
            }
        }
        (grad, dx)
    }
}

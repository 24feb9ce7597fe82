//! Normalized and rescaled Laplacians and the Chebyshev filter basis.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{CsrMatrix, GraphError, GraphTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Largest eigenvalue of the normalized Laplacian by power iteration.
    #[default]
    PowerIteration,
    /// Use the spectral upper bound 2.
    FixedTwo,
}

/// `L_norm = I − D^{-1/2} A D^{-1/2}` and its rescaling
/// `L̂ = (2 / λ_max) L_norm − I`, whose spectrum lies in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    l_norm: CsrMatrix,
    lambda_max: f64,
    l_hat: CsrMatrix,
}

pub const DEFAULT_POWER_TOL: f64 = 1e-8;
pub const DEFAULT_POWER_MAX_ITER: usize = 10_000;

impl SpectralOperator {
    pub fn new(g: &GraphTopology, mode: LambdaMode) -> Result<Self, GraphError> {
        Self::with_options(g, mode, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)
    }

    pub fn with_options(
        g: &GraphTopology,
        mode: LambdaMode,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self, GraphError> {
        let deg = g.degrees();
        if let Some(i) = deg.iter().position(|&d| d == 0) {
            return Err(GraphError::IsolatedNode(i));
        }
        let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
        let rows = (0..g.n())
            .map(|i| {
                let mut row: Vec<(usize, f64)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, -inv_sqrt[i] * inv_sqrt[j]))
                    .collect();
                row.push((i, 1.0));
                row
            })
            .collect();
        let l_norm = CsrMatrix::from_rows(g.n(), rows);
        let lambda_max = match mode {
            LambdaMode::FixedTwo => 2.0,
            LambdaMode::PowerIteration => power_iteration(&l_norm, tol, max_iter)?,
        };
        let l_hat = l_norm.scale_shift(2.0 / lambda_max, -1.0);
        Ok(SpectralOperator {
            l_norm,
            lambda_max,
            l_hat,
        })
    }

    pub fn n(&self) -> usize {
        self.l_hat.n()
    }

    pub fn l_norm(&self) -> &CsrMatrix {
        &self.l_norm
    }

    pub fn l_hat(&self) -> &CsrMatrix {
        &self.l_hat
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }
}

/// Deterministic, non-structured start vector so that no eigenvector of a
/// graph Laplacian is missed by symmetry.
fn start_vector(n: usize) -> Vec<f64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Iterates until the Rayleigh quotient stagnates to 1e-14 relative, and
/// fails only if `max_iter` is reached without meeting `tol`. The Rayleigh
/// quotient of a symmetric matrix never exceeds λ_max, so stopping early can
/// only push the rescaled spectrum slightly past 1.
fn power_iteration(m: &CsrMatrix, tol: f64, max_iter: usize) -> Result<f64, GraphError> {
    const REFINE_TOL: f64 = 1e-14;
    let mut v = start_vector(m.n());
    normalize(&mut v);
    let mut lambda = 0.0;
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let mut w = m.matvec(&v);
        let rq: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return Ok(0.0);
        }
        last_change = (rq - lambda).abs() / rq.abs().max(f64::MIN_POSITIVE);
        lambda = rq;
        v = w;
        if last_change <= REFINE_TOL {
            return Ok(lambda);
        }
    }
    if last_change <= tol {
        Ok(lambda)
    } else {
        Err(GraphError::NonConvergence { iterations: max_iter })
    }
}

fn check_rows(op: &SpectralOperator, rows: usize) -> Result<(), GraphError> {
    if rows == 0 || rows % op.n() != 0 {
        return Err(GraphError::DimensionMismatch {
            expected: op.n(),
            found: rows,
        });
    }
    Ok(())
}

/// Returns `[T_0(L̂)X, …, T_K(L̂)X]`.
///
/// `x` has `n·B` rows in node-major order (rows `i·B..(i+1)·B` belong to
/// node `i`); `B = 1` is the ordinary `n × F` case. Each step is one sparse
/// product with `L̂`, dense polynomials are never formed.
pub fn cheb_apply(op: &SpectralOperator, order: usize, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>, GraphError> {
    check_rows(op, x.nrows())?;
    let l = op.l_hat();
    let mut out = Vec::with_capacity(order + 1);
    out.push(x.as_standard_layout().into_owned());
    if order >= 1 {
        let mut t1 = Array2::zeros(x.raw_dim());
        l.apply_blocks(out[0].as_slice().unwrap(), t1.as_slice_mut().unwrap(), 1.0, 0.0, None);
        out.push(t1);
    }
    for k in 2..=order {
        let mut tk = Array2::zeros(x.raw_dim());
        l.apply_blocks(
            out[k - 1].as_slice().unwrap(),
            tk.as_slice_mut().unwrap(),
            2.0,
            -1.0,
            Some(out[k - 2].as_slice().unwrap()),
        );
        out.push(tk);
    }
    Ok(out)
}

/// Computes `Σ_k T_k(L̂) G_k` by Clenshaw recurrence.
///
/// Because `L̂` is symmetric this is the adjoint of [`cheb_apply`]: given the
/// gradients with respect to each `T_k X` it returns the gradient w.r.t. `X`.
pub fn cheb_adjoint(op: &SpectralOperator, grads: &[Array2<f64>]) -> Result<Array2<f64>, GraphError> {
    let first = grads.first().ok_or(GraphError::DimensionMismatch { expected: 1, found: 0 })?;
    check_rows(op, first.nrows())?;
    if let Some(g) = grads.iter().find(|g| g.raw_dim() != first.raw_dim()) {
        return Err(GraphError::DimensionMismatch {
            expected: first.nrows(),
            found: g.nrows(),
        });
    }
    let l = op.l_hat();
    let order = grads.len() - 1;
    if order == 0 {
        return Ok(first.as_standard_layout().into_owned());
    }
    let shape = first.raw_dim();
    // b_{k+1}, b_{k+2}
    let mut b1 = Array2::<f64>::zeros(shape);
    let mut b2 = Array2::<f64>::zeros(shape);
    let mut tmp = Array2::<f64>::zeros(shape);
    for k in (1..=order).rev() {
        l.apply_blocks(
            b1.as_slice().unwrap(),
            tmp.as_slice_mut().unwrap(),
            2.0,
            -1.0,
            Some(b2.as_slice().unwrap()),
        );
        tmp += &grads[k];
        std::mem::swap(&mut b2, &mut b1);
        std::mem::swap(&mut b1, &mut tmp);
    }
    // S = G_0 + L̂ b_1 − b_2
    l.apply_blocks(
        b1.as_slice().unwrap(),
        tmp.as_slice_mut().unwrap(),
        1.0,
        -1.0,
        Some(b2.as_slice().unwrap()),
    );
    tmp += &grads[0];
    Ok(tmp)
}

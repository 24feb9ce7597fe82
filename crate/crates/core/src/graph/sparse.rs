use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Square compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let start = col_idx.len();
            for (j, v) in row {
                assert!(j < n, "column {j} out of range");
                if col_idx.len() > start && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `alpha * self + beta * I`
    pub fn scale_shift(&self, alpha: f64, beta: f64) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.row(i).map(|(j, v)| (j, alpha * v)).collect();
                row.push((i, beta));
                row
            })
            .collect();
        Self::from_rows(self.n, rows)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[[i, j]] += v;
            }
        }
        d
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_blocks(x, &mut y, 1.0, 0.0, None);
        y
    }

    /// Block-wise product over node-major data.
    ///
    /// `x` and `y` hold `n` contiguous blocks of equal width, block `i` being
    /// the data of node `i`. Computes `y = alpha * (self ⊗ I) x + beta * z`,
    /// with `z` defaulting to zero.
    pub fn apply_blocks(&self, x: &[f64], y: &mut [f64], alpha: f64, beta: f64, z: Option<&[f64]>) {
        assert_eq!(x.len(), y.len());
        assert_eq!(x.len() % self.n, 0);
        let width = x.len() / self.n;
        for i in 0..self.n {
            let out = &mut y[i * width..(i + 1) * width];
            match z {
                Some(z) if beta != 0.0 => {
                    for (o, zv) in out.iter_mut().zip(&z[i * width..(i + 1) * width]) {
                        *o = beta * zv;
                    }
                }
                _ => out.fill(0.0),
            }
            for (j, v) in self.row(i) {
                let a = alpha * v;
                for (o, xv) in out.iter_mut().zip(&x[j * width..(j + 1) * width]) {
                    *o += a * xv;
                }
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (self.get(j, i) - v).abs() <= tol))
    }
}

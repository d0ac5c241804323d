// SPDX-License-Identifier: Apache-2.0
use nalgebra::DMatrix;

use super::{OracleError, Truncation};
use crate::network::ReactionNetwork;

/// Generator of the truncated chain in row-compressed form.
///
/// Off-diagonal entries are `L[x, y] = Σ_{j: x+ν_j=y} a_j(x)` for `y` inside
/// the truncation. The diagonal is minus the retained outflow, so every row
/// sums to zero; intensity that would leave the truncation is reported per
/// row in `leak`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator {
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<f64>,
    leak: Vec<f64>,
}

impl SparseGenerator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn nnz(&self) -> usize {
        self.val.len() + self.diag.len()
    }

    /// Off-diagonal entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// Outflow from state `i` that leaves the truncation.
    pub fn leak(&self, i: usize) -> f64 {
        self.leak[i]
    }

    pub fn leaks(&self) -> &[f64] {
        &self.leak
    }

    /// True when no transition leaves the truncation.
    pub fn is_closed(&self) -> bool {
        self.leak.iter().all(|&l| l == 0.0)
    }

    /// `Σ_y L[i, y]`, accumulated in the order used to build the diagonal.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum::<f64>() + self.diag[i]
    }

    /// `(L g)(i)`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.diag[i] * g[i] + self.row(i).map(|(j, v)| v * g[j]).sum::<f64>())
            .collect()
    }

    /// `(πᵀ L)(y)`.
    pub fn apply_transpose(&self, p: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.dim()).map(|i| self.diag[i] * p[i]).collect();
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                out[j] += p[i] * v;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

pub fn build_generator(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
) -> Result<SparseGenerator, OracleError> {
    net.check_params(c)?;
    let n = trunc.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::new();
    let mut val = Vec::new();
    let mut diag = Vec::with_capacity(n);
    let mut leak = Vec::with_capacity(n);
    row_ptr.push(0);
    for (i, x) in trunc.states().iter().enumerate() {
        net.check_state(x)?;
        let start = col.len();
        let mut out_leak = 0.0;
        for r in net.reactions() {
            let a = r.rate(x, c);
            if a <= 0.0 {
                continue;
            }
            let y = x.shifted(&r.net).expect("positive intensity implies a valid target");
            match trunc.index_of(&y) {
                Some(k) if k == i => {}
                Some(k) => {
                    if let Some(pos) = col[start..].iter().position(|&cc| cc == k) {
                        val[start + pos] += a;
                    } else {
                        col.push(k);
                        val.push(a);
                    }
                }
                None => out_leak += a,
            }
        }
        let s: f64 = val[start..].iter().sum();
        diag.push(-s);
        leak.push(out_leak);
        row_ptr.push(col.len());
    }
    Ok(SparseGenerator {
        row_ptr,
        col,
        val,
        diag,
        leak,
    })
}

//! Shared inputs for the criterion benchmarks.

use ampsched_core::{make_spd, Matrix};

/// Deterministic `rows × cols` operand with entries in [0, 1).
pub fn operand(rows: usize, cols: usize, seed: u64) -> Matrix {
    let n = rows.max(cols);
    let a = make_spd(n, seed).expect("positive order");
    let mut m = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m.col_mut(j)[i] = if i == j { 0.5 } else { a[(i, j)] };
        }
    }
    m
}

/// Square sizes covering the range where the dual-lane GEMM starts to pay off.
pub const GEMM_SIZES: &[usize] = &[64, 128, 192, 256];

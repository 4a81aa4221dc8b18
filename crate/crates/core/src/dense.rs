//! Dense column-major matrices, their block partitioning, and the naive
//! reference kernels every optimized routine is checked against.
//!
//! Update convention: all BLAS-3 style updates are subtractive and
//! transpose the left operand, `C := C - Aᵀ·B`, which is what a right-looking
//! upper Cholesky (`A = UᵀU`) needs for its trailing update.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Dense matrix of `f64`, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Wraps column-major `data`; its length must be `rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!("data length {} does not match {rows}x{cols}", data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row-major nested rows. Handy in tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(invalid("ragged rows"));
        }
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Column `j` as a contiguous slice.
    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Copy with the strictly lower triangle set to zero.
    pub fn upper_triangle(&self) -> Matrix {
        let mut u = self.clone();
        for j in 0..u.cols {
            for i in (j + 1)..u.rows {
                u[(i, j)] = 0.0;
            }
        }
        u
    }

    /// One matrix row per line, comma separated. Values are written in
    /// shortest round-trip form, so parsing the output is lossless.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", self[(i, j)]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Matrix> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|field| {
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: `{}`: {e}", lineno + 1, field.trim())))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::Parse(format!(
                        "line {}: expected {first} fields, found {}",
                        lineno + 1,
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        Matrix::from_rows(&rows)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

/// A square matrix of order `n` stored as an `s × s` grid of contiguous
/// tiles of (at most) `b × b` entries. The last tile row and column are
/// ragged when `b` does not divide `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedMatrix {
    n: usize,
    b: usize,
    s: usize,
    // Tile (i, j) lives at index i + j * s.
    blocks: Vec<Matrix>,
}

impl BlockedMatrix {
    pub fn partition(a: &Matrix, b: usize) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(invalid(format!("matrix is {}x{}, expected square", n, a.cols())));
        }
        if b == 0 || b > n {
            return Err(invalid(format!("block size {b} outside 1..={n}")));
        }
        let s = n.div_ceil(b);
        let mut blocks = Vec::with_capacity(s * s);
        for bj in 0..s {
            let (c0, nc) = (bj * b, block_extent(n, b, bj));
            for bi in 0..s {
                let (r0, nr) = (bi * b, block_extent(n, b, bi));
                let mut tile = Matrix::zeros(nr, nc);
                for j in 0..nc {
                    let src = &a.col(c0 + j)[r0..r0 + nr];
                    tile.col_mut(j).copy_from_slice(src);
                }
                blocks.push(tile);
            }
        }
        Ok(BlockedMatrix { n, b, s, blocks })
    }

    /// Inverse of [`BlockedMatrix::partition`]; bitwise exact.
    pub fn reassemble(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for bj in 0..self.s {
            for bi in 0..self.s {
                let tile = self.block(bi, bj);
                let (r0, c0) = (bi * self.b, bj * self.b);
                for j in 0..tile.cols() {
                    a.col_mut(c0 + j)[r0..r0 + tile.rows()].copy_from_slice(tile.col(j));
                }
            }
        }
        a
    }

    /// The upper-triangular factor after an in-place blocked Cholesky.
    pub fn upper_factor(&self) -> Matrix {
        self.reassemble().upper_triangle()
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    pub fn block_count(&self) -> usize {
        self.s
    }

    /// Rows (equivalently columns) of tile row `i`.
    pub fn block_dim(&self, i: usize) -> usize {
        block_extent(self.n, self.b, i)
    }

    pub fn block(&self, i: usize, j: usize) -> &Matrix {
        &self.blocks[i + j * self.s]
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut Matrix {
        &mut self.blocks[i + j * self.s]
    }

    /// Moves the tiles out, in `i + j * s` order.
    pub fn into_blocks(self) -> Vec<Matrix> {
        self.blocks
    }

    pub fn from_blocks(n: usize, b: usize, blocks: Vec<Matrix>) -> Result<Self> {
        if b == 0 || b > n {
            return Err(invalid(format!("block size {b} outside 1..={n}")));
        }
        let s = n.div_ceil(b);
        if blocks.len() != s * s {
            return Err(invalid(format!("expected {} tiles, got {}", s * s, blocks.len())));
        }
        for bj in 0..s {
            for bi in 0..s {
                let t = &blocks[bi + bj * s];
                if t.rows() != block_extent(n, b, bi) || t.cols() != block_extent(n, b, bj) {
                    return Err(invalid(format!("tile ({bi},{bj}) has wrong shape")));
                }
            }
        }
        Ok(BlockedMatrix { n, b, s, blocks })
    }
}

fn block_extent(n: usize, b: usize, i: usize) -> usize {
    b.min(n - i * b)
}

/// Deterministic symmetric positive definite test matrix: off-diagonal
/// entries uniform in `[0, 1)` drawn from `seed`, diagonal `n + 1`
/// (strict diagonal dominance).
pub fn make_spd(n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(invalid("matrix order must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v: f64 = rng.gen();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a[(j, j)] = (n + 1) as f64;
    }
    Ok(a)
}

/// Overwrites the upper triangle of `a` with its Cholesky factor `U`
/// (`A = UᵀU`), reading only the upper triangle. The strictly lower part is
/// left untouched. `offset` is added to the pivot index reported on failure.
pub fn potrf_upper_in_place(a: &mut Matrix, offset: usize) -> Result<()> {
    let n = a.rows();
    if a.cols() != n {
        return Err(invalid("potrf operand must be square"));
    }
    for j in 0..n {
        for i in 0..=j {
            let mut x = a[(i, j)];
            for p in 0..i {
                x -= a[(p, i)] * a[(p, j)];
            }
            if i < j {
                a[(i, j)] = x / a[(i, i)];
            } else {
                // Also rejects NaN.
                if x.is_nan() || x <= 0.0 {
                    return Err(Error::NotPositiveDefinite { index: offset + j });
                }
                a[(j, j)] = x.sqrt();
            }
        }
    }
    Ok(())
}

/// Unblocked textbook Cholesky: returns upper-triangular `U` with `UᵀU = A`.
pub fn ref_potrf(a: &Matrix) -> Result<Matrix> {
    let mut u = a.clone();
    potrf_upper_in_place(&mut u, 0)?;
    Ok(u.upper_triangle())
}

/// `C := C - Aᵀ·B` by the naive triple loop. `A` is `k × m`, `B` is
/// `k × n`, `C` is `m × n`. Each element subtracts its `k` products in
/// ascending order.
pub fn ref_gemm(a: &Matrix, b: &Matrix, c: &mut Matrix) -> Result<()> {
    check_gemm_dims(a, b, c)?;
    let k = a.rows();
    for j in 0..c.cols() {
        for i in 0..c.rows() {
            let mut x = c[(i, j)];
            for p in 0..k {
                x -= a[(p, i)] * b[(p, j)];
            }
            c[(i, j)] = x;
        }
    }
    Ok(())
}

/// `C := C - Aᵀ·A` on the upper triangle of `C` (`i <= j`); `A` is `k × m`.
pub fn ref_syrk(a: &Matrix, c: &mut Matrix) -> Result<()> {
    check_syrk_dims(a, c)?;
    let k = a.rows();
    for j in 0..c.cols() {
        for i in 0..=j {
            let mut x = c[(i, j)];
            for p in 0..k {
                x -= a[(p, i)] * a[(p, j)];
            }
            c[(i, j)] = x;
        }
    }
    Ok(())
}

/// Solves `Uᵀ·X = B` in place (`B` becomes `X`), `U` upper triangular `m × m`,
/// `B` is `m × n`. Forward substitution, one right-hand side at a time.
pub fn ref_trsm(u: &Matrix, b: &mut Matrix) -> Result<()> {
    check_trsm_dims(u, b)?;
    let m = u.rows();
    for c in 0..b.cols() {
        for r in 0..m {
            let mut x = b[(r, c)];
            for p in 0..r {
                x -= u[(p, r)] * b[(p, c)];
            }
            b[(r, c)] = x / u[(r, r)];
        }
    }
    Ok(())
}

pub(crate) fn check_gemm_dims(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != c.rows() || b.cols() != c.cols() {
        return Err(invalid(format!(
            "gemm shapes Aᵀ({}x{}) B({}x{}) C({}x{}) are not conformal",
            a.cols(),
            a.rows(),
            b.rows(),
            b.cols(),
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

pub(crate) fn check_syrk_dims(a: &Matrix, c: &Matrix) -> Result<()> {
    if c.rows() != c.cols() || a.cols() != c.rows() {
        return Err(invalid(format!(
            "syrk shapes A({}x{}) C({}x{}) are not conformal",
            a.rows(),
            a.cols(),
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

pub(crate) fn check_trsm_dims(u: &Matrix, b: &Matrix) -> Result<()> {
    if u.rows() != u.cols() || u.rows() != b.rows() {
        return Err(invalid(format!(
            "trsm shapes U({}x{}) B({}x{}) are not conformal",
            u.rows(),
            u.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if let Some(index) = (0..u.rows()).find(|&i| u[(i, i)] == 0.0) {
        return Err(Error::Singular { index });
    }
    Ok(())
}

/// Relative factorization residual `‖A − UᵀU‖_F / ‖A‖_F`, using only the
/// upper triangle of `u`.
pub fn residual(a: &Matrix, u: &Matrix) -> f64 {
    let n = a.rows();
    assert_eq!(u.rows(), n, "residual operands differ in order");
    let mut num = 0.0;
    for j in 0..n {
        let uj = u.col(j);
        for i in 0..=j {
            let ui = u.col(i);
            // (UᵀU)[i,j] = Σ_{p ≤ min(i,j)} U[p,i]·U[p,j]
            let mut s = 0.0;
            for p in 0..=i {
                s += ui[p] * uj[p];
            }
            let d = a[(i, j)] - s;
            num += d * d;
            if i != j {
                let d = a[(j, i)] - s;
                num += d * d;
            }
        }
    }
    let den = a.frobenius_norm();
    let num = num.sqrt();
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    num / den
}

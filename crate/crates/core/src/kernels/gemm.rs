use std::ops::Range;

use crate::pool::RangeKernel;
use crate::{Error, Result};

use super::SharedOutput;

/// Column tile width; GEMM partitions are multiples of this.
pub const GEMM_TILE_N: usize = 4;

/// `C[M×N] (i32) = A[M×K] (u8) · B[K×N] (i8)`, all row-major.
///
/// Accumulation is in i32, exact for `K <= 65536` (255 · 128 · 2^16 < 2^31).
/// B is also kept transposed so every output element is one contiguous dot
/// product and the cost per column does not depend on the partition width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct I8Gemm {
    m: usize,
    n: usize,
    k: usize,
    a: Vec<u8>,
    b: Vec<i8>,
    bt: Vec<i8>,
}

impl I8Gemm {
    pub fn new(m: usize, n: usize, k: usize, a: Vec<u8>, b: Vec<i8>) -> Result<Self> {
        if a.len() != m * k || b.len() != k * n {
            return Err(Error::DimensionMismatch(format!(
                "A has {} elements (want {}), B has {} (want {})",
                a.len(),
                m * k,
                b.len(),
                k * n
            )));
        }
        if k > 1 << 16 {
            return Err(Error::invalid(format!("K = {k} overflows i32 accumulation")));
        }
        let mut bt = vec![0i8; k * n];
        for (kk, row) in b.chunks_exact(n.max(1)).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                bt[j * k + kk] = v;
            }
        }
        Ok(I8Gemm { m, n, k, a, b, bt })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn b(&self) -> &[i8] {
        &self.b
    }

    /// Computes output columns `cols` into `c` (full M×N row-major buffer).
    pub fn gemm_i8_range(&self, c: &mut [i32], cols: Range<usize>) {
        assert_eq!(c.len(), self.m * self.n);
        for (m, row) in c.chunks_exact_mut(self.n.max(1)).enumerate() {
            self.row_cols(m, &mut row[cols.clone()], cols.start);
        }
    }

    /// Writes `C[m][col0 .. col0 + out.len()]` into `out`.
    #[inline]
    fn row_cols(&self, m: usize, out: &mut [i32], col0: usize) {
        let k = self.k;
        let a_row = &self.a[m * k..(m + 1) * k];
        for (j, acc) in out.iter_mut().enumerate() {
            let b_col = &self.bt[(col0 + j) * k..(col0 + j + 1) * k];
            *acc = a_row
                .iter()
                .zip(b_col)
                .map(|(&x, &y)| x as i16 as i32 * y as i32)
                .sum();
        }
    }

    pub fn compute(&self) -> Vec<i32> {
        let mut c = vec![0; self.m * self.n];
        self.gemm_i8_range(&mut c, 0..self.n);
        c
    }
}

/// Triple-loop reference in i64 arithmetic.
pub fn gemm_i8_naive(p: &I8Gemm) -> Vec<i64> {
    let mut c = vec![0i64; p.m * p.n];
    for m in 0..p.m {
        for n in 0..p.n {
            let mut acc = 0i64;
            for k in 0..p.k {
                acc += p.a[m * p.k + k] as i64 * p.b[k * p.n + n] as i64;
            }
            c[m * p.n + n] = acc;
        }
    }
    c
}

/// Parallel launch wrapper; units are output columns.
pub struct I8GemmKernel<'a> {
    problem: &'a I8Gemm,
    c: SharedOutput<i32>,
}

impl<'a> I8GemmKernel<'a> {
    pub fn new(problem: &'a I8Gemm) -> Self {
        I8GemmKernel {
            problem,
            c: SharedOutput::new(problem.m * problem.n),
        }
    }

    pub fn units(&self) -> usize {
        self.problem.n
    }

    pub fn output(&mut self) -> &[i32] {
        self.c.as_slice()
    }

    pub fn into_output(self) -> Vec<i32> {
        self.c.into_vec()
    }
}

impl RangeKernel for I8GemmKernel<'_> {
    fn run(&self, _core: usize, cols: Range<usize>) {
        let p = self.problem;
        for m in 0..p.m {
            let start = m * p.n + cols.start;
            // SAFETY: each launch covers disjoint column ranges, so the row
            // segments written here are never touched by another worker.
            let out = unsafe { self.c.slice_mut(start, start + cols.len()) };
            p.row_cols(m, out, cols.start);
        }
    }

    fn granularity(&self) -> usize {
        GEMM_TILE_N
    }
}

//! Compressed sparse row matrices over `Complex64`.
//!
//! Assembly produces exactly conjugate-mirrored triplet streams, so Hermitian
//! matrices built here satisfy `K == K^H` bitwise: duplicate entries are summed
//! in insertion order, and the (j, i) stream mirrors the (i, j) stream.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed in
    /// insertion order (stable sort), entries equal to exact zero are kept.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, Complex64)>,
    ) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut counts = vec![0usize; nrows];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if prev == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                counts[r] += 1;
                prev = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for r in 0..nrows {
            row_ptr[r + 1] = row_ptr[r] + counts[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[Complex64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entry accessor (binary search within the row); zero if absent.
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(p) => vals[p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }

    /// Y = A X for a block of vectors, parallel over output rows.
    ///
    /// The input block is transposed to row-major once so the inner loop over
    /// block columns is contiguous; row-wise accumulation keeps the result
    /// deterministic regardless of the thread schedule.
    pub fn mul_block(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        assert_eq!(x.nrows(), self.ncols);
        let b = x.ncols();
        let n = self.nrows;
        if b == 0 {
            return DMatrix::from_element(n, 0, Complex64::new(0.0, 0.0));
        }
        let xs = x.as_slice();
        let ncols = self.ncols;
        // Row-major copy of x.
        let mut xr = vec![Complex64::new(0.0, 0.0); ncols * b];
        for j in 0..b {
            let col = &xs[j * ncols..(j + 1) * ncols];
            for c in 0..ncols {
                xr[c * b + j] = col[c];
            }
        }
        let mut data = vec![Complex64::new(0.0, 0.0); n * b];
        let row_ptr = &self.row_ptr;
        let col_idx = &self.col_idx;
        let values = &self.values;
        let xr = &xr;
        let data_ptr = SendPtr(data.as_mut_ptr());
        let chunk = 1024usize;
        let chunk_job = |ci: usize| {
            let r0 = ci * chunk;
            let r1 = (r0 + chunk).min(n);
            let ptr = data_ptr;
            let mut acc = vec![Complex64::new(0.0, 0.0); b];
            for r in r0..r1 {
                acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
                for p in row_ptr[r]..row_ptr[r + 1] {
                    let v = values[p];
                    let xrow = &xr[col_idx[p] * b..col_idx[p] * b + b];
                    for (a, xv) in acc.iter_mut().zip(xrow) {
                        *a += v * xv;
                    }
                }
                for (j, a) in acc.iter().enumerate() {
                    // Safety: each (r, j) written exactly once, r-ranges disjoint.
                    unsafe { *ptr.0.add(r + j * n) = *a };
                }
            }
        };
        if self.nnz() * b < 1_000_000 {
            for ci in 0..n.div_ceil(chunk) {
                chunk_job(ci);
            }
        } else {
            (0..n.div_ceil(chunk)).into_par_iter().for_each(chunk_job);
        }
        DMatrix::from_vec(n, b, data)
    }

    /// Exact structural + value Hermitian check.
    pub fn is_hermitian(&self) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if self.get(*c, r) != v.conj() {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, Complex64::new(0.0, 0.0));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                m[(r, *c)] += v;
            }
        }
        m
    }

    /// Extract the square sub-block with row and column indices in `range`.
    pub fn block(&self, range: std::ops::Range<usize>) -> CsrMatrix {
        let lo = range.start;
        let hi = range.end;
        let mut triplets = Vec::new();
        for r in lo..hi {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if (lo..hi).contains(c) {
                    triplets.push((r - lo, c - lo, *v));
                }
            }
        }
        CsrMatrix::from_triplets(hi - lo, hi - lo, triplets)
    }

    /// Write the documented triplet text format: a `rows cols nnz` header,
    /// then one `i j re im` line per stored entry (0-based, CSR order).
    pub fn write_triplets<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e} {:.17e}", r, c, v.re, v.im)?;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

#[derive(Clone, Copy)]
struct SendPtr(*mut Complex64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

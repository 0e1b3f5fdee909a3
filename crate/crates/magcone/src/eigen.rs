//! Lowest eigenpairs of the generalized Hermitian problem `K u = lambda M u`.
//!
//! The sparse path is a block preconditioned conjugate-gradient-style subspace
//! iteration (LOBPCG class): the search space `[X, W, P]` combines the current
//! Ritz block, Jacobi-preconditioned residuals and the previous update
//! directions, orthonormalized in the M inner product with rank filtering
//! before each Rayleigh-Ritz step. Converged columns are soft-locked (kept in
//! the basis, excluded from residual preconditioning). Problems too small to
//! host the subspace fall through to the dense path.
//!
//! The dense path reduces to a standard Hermitian problem through a Cholesky
//! factor of the mass and serves as the reference oracle.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::OperatorPair;
use crate::sparse::CsrMatrix;

/// Hard cap of the dense reference solver.
pub const DENSE_DIM_LIMIT: usize = 4000;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("solver did not converge in {iterations} iterations (best residuals {residuals:?})")]
    NotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("mass matrix is not positive definite")]
    MassNotPositiveDefinite,
    #[error("dimension {dim} exceeds the dense-solver limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("bad arguments: {0}")]
    BadArguments(String),
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Number of requested eigenpairs.
    pub k: usize,
    /// Relative residual tolerance `||K u - lambda M u|| / ||M u||`.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the initial block; recorded in the result.
    pub seed: u64,
}

impl EigenOptions {
    pub fn new(k: usize) -> Self {
        EigenOptions {
            k,
            tol: 1e-8,
            max_iter: 5000,
            seed: 42,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Sorted eigenvalues, M-orthonormal eigenvectors and per-pair residuals.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, M-orthonormal.
    pub vectors: DMatrix<Complex64>,
    /// `||K u - lambda M u||_2 / ||M u||_2` per pair, recomputed after the run.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

/// Lowest `k` pairs of an assembled operator. Block-diagonal pairs (aligned
/// field, model operator) are split into per-mode solves.
pub fn solve_lowest(op: &OperatorPair, opts: &EigenOptions) -> Result<EigenResult, EigenError> {
    if op.mode_bandwidth == 0 && op.grid.n_modes() > 1 {
        solve_lowest_blockdiag(op, opts)
    } else {
        solve_impl_guess(&op.stiffness, &op.mass, opts, Some(mode_block_precond(op)), None)
    }
}

/// Like [`solve_lowest`], seeding the initial block with the given columns
/// (eigenvectors of a nearby operator); remaining block columns come from the
/// seeded generator, so the run stays deterministic.
pub fn solve_lowest_with_guess(
    op: &OperatorPair,
    opts: &EigenOptions,
    guess: &DMatrix<Complex64>,
) -> Result<EigenResult, EigenError> {
    if op.mode_bandwidth == 0 && op.grid.n_modes() > 1 {
        return solve_lowest_blockdiag(op, opts);
    }
    solve_impl_guess(
        &op.stiffness,
        &op.mass,
        opts,
        Some(mode_block_precond(op)),
        Some(guess),
    )
}

/// Full dense spectrum of an assembled operator (reference path).
pub fn solve_dense(op: &OperatorPair) -> Result<EigenResult, EigenError> {
    solve_dense_pair(&op.stiffness, &op.mass)
}

fn solve_lowest_blockdiag(
    op: &OperatorPair,
    opts: &EigenOptions,
) -> Result<EigenResult, EigenError> {
    let dof = op.dof_map;
    let modes: Vec<i64> = dof.modes().collect();
    // Independent per-mode solves; the collected order is fixed by the mode
    // list, so the merge below is deterministic.
    let blocks: Vec<(i64, EigenResult)> = modes
        .par_iter()
        .map(|&m| {
            let k = op.stiffness.block(dof.mode_range(m));
            let mm = op.mass.block(dof.mode_range(m));
            solve_lowest_pair(&k, &mm, opts).map(|r| (m, r))
        })
        .collect::<Result<_, _>>()?;
    // Merge: k smallest across blocks, ties broken by mode for determinism.
    let mut order: Vec<(f64, usize, usize)> = Vec::new();
    for (bi, (_, r)) in blocks.iter().enumerate() {
        for (j, &v) in r.values.iter().enumerate() {
            order.push((v, bi, j));
        }
    }
    order.sort_by(|a, b| (a.0, a.1, a.2).partial_cmp(&(b.0, b.1, b.2)).unwrap());
    order.truncate(opts.k);
    let dim = dof.dim();
    let mut values = Vec::with_capacity(opts.k);
    let mut residuals = Vec::with_capacity(opts.k);
    let mut vectors = DMatrix::from_element(dim, opts.k, Complex64::new(0.0, 0.0));
    for (col, &(v, bi, j)) in order.iter().enumerate() {
        let (m, ref r) = blocks[bi];
        values.push(v);
        residuals.push(r.residuals[j]);
        let range = dof.mode_range(m);
        for (row, &x) in r.vectors.column(j).iter().enumerate() {
            vectors[(range.start + row, col)] = x;
        }
    }
    let iterations = blocks.iter().map(|(_, r)| r.iterations).max().unwrap_or(0);
    Ok(EigenResult {
        values,
        vectors,
        residuals,
        iterations,
        seed: opts.seed,
    })
}

/// Lowest `k` pairs of a raw Hermitian pair.
pub fn solve_lowest_pair(
    kmat: &CsrMatrix,
    mmat: &CsrMatrix,
    opts: &EigenOptions,
) -> Result<EigenResult, EigenError> {
    solve_impl(kmat, mmat, opts, None)
}

fn solve_impl(
    kmat: &CsrMatrix,
    mmat: &CsrMatrix,
    opts: &EigenOptions,
    precond: Option<Precond>,
) -> Result<EigenResult, EigenError> {
    solve_impl_guess(kmat, mmat, opts, precond, None)
}

fn solve_impl_guess(
    kmat: &CsrMatrix,
    mmat: &CsrMatrix,
    opts: &EigenOptions,
    precond: Option<Precond>,
    guess: Option<&DMatrix<Complex64>>,
) -> Result<EigenResult, EigenError> {
    let n = kmat.nrows();
    if kmat.ncols() != n || mmat.nrows() != n || mmat.ncols() != n {
        return Err(EigenError::BadArguments("dimension mismatch".into()));
    }
    if opts.k == 0 || opts.k > n {
        return Err(EigenError::BadArguments(format!(
            "k={} out of range for dim {n}",
            opts.k
        )));
    }
    let block = (opts.k + opts.k.max(4)).min(n);
    if n < 3 * block || n <= 32 {
        // Subspace does not fit; use the dense path and truncate.
        let mut dense = solve_dense_pair(kmat, mmat)?;
        dense.truncate(opts.k);
        dense.seed = opts.seed;
        return Ok(dense);
    }
    let precond = precond.unwrap_or_else(|| auto_precond(kmat, mmat));
    lobpcg(kmat, mmat, opts, block, &precond, guess)
}

/// Full spectrum by dense reduction; the dimension is capped by
/// [`DENSE_DIM_LIMIT`].
pub fn solve_dense_pair(kmat: &CsrMatrix, mmat: &CsrMatrix) -> Result<EigenResult, EigenError> {
    let n = kmat.nrows();
    if n > DENSE_DIM_LIMIT {
        return Err(EigenError::DimensionTooLarge {
            dim: n,
            max: DENSE_DIM_LIMIT,
        });
    }
    let kd = kmat.to_dense();
    let md = mmat.to_dense();
    let chol = checked_cholesky(md).ok_or(EigenError::MassNotPositiveDefinite)?;
    let l = chol.l();
    // A = L^{-1} K L^{-H}, computed as L^{-1} (L^{-1} K)^H using K = K^H.
    let t1 = l
        .solve_lower_triangular(&kd)
        .ok_or(EigenError::MassNotPositiveDefinite)?;
    let t2 = l
        .solve_lower_triangular(&t1.adjoint())
        .ok_or(EigenError::MassNotPositiveDefinite)?;
    let a = (&t2 + t2.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    // Back-transform: V = L^{-H} Y.
    let vectors = l
        .adjoint()
        .solve_upper_triangular(&y)
        .ok_or(EigenError::MassNotPositiveDefinite)?;
    let residuals = compute_residuals(kmat, mmat, &vectors, &values);
    Ok(EigenResult {
        values,
        vectors,
        residuals,
        iterations: 0,
        seed: 0,
    })
}

impl EigenResult {
    fn truncate(&mut self, k: usize) {
        self.values.truncate(k);
        self.residuals.truncate(k);
        self.vectors = self.vectors.columns(0, k).into_owned();
    }
}

/// `||K v - lambda M v|| / ||M v||` for each column.
pub fn compute_residuals(
    kmat: &CsrMatrix,
    mmat: &CsrMatrix,
    vectors: &DMatrix<Complex64>,
    values: &[f64],
) -> Vec<f64> {
    let kv = kmat.mul_block(vectors);
    let mv = mmat.mul_block(vectors);
    values
        .iter()
        .enumerate()
        .map(|(j, &lam)| {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..vectors.nrows() {
                num += (kv[(i, j)] - mv[(i, j)] * lam).norm_sqr();
                den += mv[(i, j)].norm_sqr();
            }
            num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Rayleigh quotient `v^H K v / v^H M v` (real part; the imaginary part of a
/// Hermitian quotient is rounding noise).
pub fn rayleigh_quotient(kmat: &CsrMatrix, mmat: &CsrMatrix, v: &DVector<Complex64>) -> f64 {
    let n = v.len();
    let mut kv = vec![Complex64::new(0.0, 0.0); n];
    kmat.matvec(v.as_slice(), &mut kv);
    let mut mv = vec![Complex64::new(0.0, 0.0); n];
    mmat.matvec(v.as_slice(), &mut mv);
    let num: Complex64 = v.iter().zip(&kv).map(|(a, b)| a.conj() * b).sum();
    let den: Complex64 = v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum();
    num.re / den.re
}

// ---------------------------------------------------------------------------
// Preconditioners
// ---------------------------------------------------------------------------

/// Hermitian positive-definite band Cholesky (lower band storage).
struct BandCholesky {
    n: usize,
    w: usize,
    /// `l[i * (w + 1) + k]` holds `L[i, i - w + k]`, `k = 0..=w`.
    l: Vec<Complex64>,
}

impl BandCholesky {
    /// Factor `A + shift * M` where both are Hermitian CSR with bandwidth
    /// at most `w`. Returns `None` on a nonpositive pivot.
    fn factor(a: &CsrMatrix, m: &CsrMatrix, shift: f64, w: usize) -> Option<BandCholesky> {
        let n = a.nrows();
        let stride = w + 1;
        let mut l = vec![Complex64::new(0.0, 0.0); n * stride];
        let band_index = |i: usize, j: usize| i * stride + (j + w - i);
        // Load the lower band of A + shift M.
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    if i - j > w {
                        return None;
                    }
                    l[band_index(i, j)] = v;
                }
            }
            if shift != 0.0 {
                let (cols, vals) = m.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    if j <= i && i - j <= w {
                        l[band_index(i, j)] += v * shift;
                    }
                }
            }
        }
        for j in 0..n {
            let start = j.saturating_sub(w);
            let mut sum = l[band_index(j, j)];
            for k in start..j {
                let v = l[band_index(j, k)];
                sum -= Complex64::new(v.norm_sqr(), 0.0);
            }
            if !(sum.re > 0.0) || !sum.re.is_finite() {
                return None;
            }
            let piv = sum.re.sqrt();
            l[band_index(j, j)] = Complex64::new(piv, 0.0);
            let hi = (j + w + 1).min(n);
            for i in (j + 1)..hi {
                let istart = i.saturating_sub(w);
                let lo = istart.max(start);
                let mut s = l[band_index(i, j)];
                for k in lo..j {
                    s -= l[band_index(i, k)] * l[band_index(j, k)].conj();
                }
                l[band_index(i, j)] = s / piv;
            }
        }
        Some(BandCholesky { n, w, l })
    }

    /// In-place solve of `(L L^H) x = b`.
    fn solve(&self, x: &mut [Complex64]) {
        let w = self.w;
        let stride = w + 1;
        let idx = |i: usize, j: usize| i * stride + (j + w - i);
        for i in 0..self.n {
            let start = i.saturating_sub(w);
            let mut s = x[i];
            for k in start..i {
                s -= self.l[idx(i, k)] * x[k];
            }
            x[i] = s / self.l[idx(i, i)].re;
        }
        for i in (0..self.n).rev() {
            let hi = (i + w + 1).min(self.n);
            let mut s = x[i];
            for j in (i + 1)..hi {
                s -= self.l[idx(j, i)].conj() * x[j];
            }
            x[i] = s / self.l[idx(i, i)].re;
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Band(BandCholesky),
    /// One band factor per Fourier-mode diagonal block.
    ModeBlocks { n2d: usize, blocks: Vec<BandCholesky> },
}

impl Precond {
    fn apply(&self, r: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let (n, b) = (r.nrows(), r.ncols());
        let mut out = r.as_slice().to_vec();
        match self {
            Precond::Jacobi(inv) => {
                for j in 0..b {
                    for i in 0..n {
                        out[i + j * n] *= inv[i];
                    }
                }
            }
            Precond::Band(chol) => {
                if n * (chol.w + 1) * b < PAR_THRESHOLD {
                    out.chunks_mut(n).for_each(|col| chol.solve(col));
                } else {
                    out.par_chunks_mut(n).for_each(|col| chol.solve(col));
                }
            }
            Precond::ModeBlocks { n2d, blocks } => {
                out.par_chunks_mut(n).for_each(|col| {
                    for (bi, chol) in blocks.iter().enumerate() {
                        chol.solve(&mut col[bi * n2d..(bi + 1) * n2d]);
                    }
                });
            }
        }
        DMatrix::from_vec(n, b, out)
    }
}

fn csr_bandwidth(a: &CsrMatrix) -> usize {
    let mut w = 0usize;
    for r in 0..a.nrows() {
        let (cols, _) = a.row(r);
        for &c in cols {
            w = w.max(r.abs_diff(c));
        }
    }
    w
}

/// Preconditioner for a raw pair: band Cholesky of K when the band fits,
/// Jacobi otherwise.
fn auto_precond(kmat: &CsrMatrix, mmat: &CsrMatrix) -> Precond {
    let n = kmat.nrows();
    let w = csr_bandwidth(kmat);
    if n * (w + 1) <= 4_000_000 {
        for shift in [0.0, 1e-8, 1e-4] {
            if let Some(chol) = BandCholesky::factor(kmat, mmat, shift * diag_scale(kmat), w) {
                return Precond::Band(chol);
            }
        }
    }
    Precond::Jacobi(jacobi_inverse_diagonal(kmat))
}

/// Block preconditioner of an assembled pair: one band factor per
/// Fourier-mode diagonal block of the stiffness.
fn mode_block_precond(op: &OperatorPair) -> Precond {
    let dof = op.dof_map;
    let n2d = dof.n2d();
    let mut blocks = Vec::with_capacity(2 * dof.m_max + 1);
    for m in dof.modes() {
        let kb = op.stiffness.block(dof.mode_range(m));
        let mb = op.mass.block(dof.mode_range(m));
        let w = csr_bandwidth(&kb);
        let mut made = None;
        for shift in [0.0, 1e-8, 1e-4] {
            if let Some(chol) = BandCholesky::factor(&kb, &mb, shift * diag_scale(&kb), w) {
                made = Some(chol);
                break;
            }
        }
        match made {
            Some(chol) => blocks.push(chol),
            None => return Precond::Jacobi(jacobi_inverse_diagonal(&op.stiffness)),
        }
    }
    Precond::ModeBlocks { n2d, blocks }
}

fn diag_scale(a: &CsrMatrix) -> f64 {
    a.diagonal()
        .iter()
        .map(|d| d.re.abs())
        .fold(0.0, f64::max)
        .max(1e-300)
}

// ---------------------------------------------------------------------------
// LOBPCG-class iteration
// ---------------------------------------------------------------------------

fn lobpcg(
    kmat: &CsrMatrix,
    mmat: &CsrMatrix,
    opts: &EigenOptions,
    block: usize,
    precond: &Precond,
    guess: Option<&DMatrix<Complex64>>,
) -> Result<EigenResult, EigenError> {
    use rand::{Rng, SeedableRng};
    let n = kmat.nrows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, block, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    if let Some(g) = guess {
        let take = g.ncols().min(block);
        if g.nrows() == n {
            x.columns_mut(0, take).copy_from(&g.columns(0, take));
        }
    }
    let mut mx = mmat.mul_block(&x);
    m_orthonormalize(&mut x, &mut mx, None, mmat)?;
    let mut kx = kmat.mul_block(&x);

    let mut p: Option<(DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>)> = None;

    let mut theta = vec![0.0; block];
    let mut res = vec![f64::INFINITY; block];
    let mut best_res = f64::INFINITY;
    let mut best_iter = 0usize;

    for iter in 1..=opts.max_iter {
        for j in 0..block {
            let xj = x.column(j);
            let kxj = kx.column(j);
            let num: Complex64 = xj.iter().zip(kxj.iter()).map(|(a, b)| a.conj() * b).sum();
            theta[j] = num.re;
        }
        // Residual block R = KX - MX diag(theta).
        let mut r = kx.clone();
        for j in 0..block {
            let t = theta[j];
            for i in 0..n {
                r[(i, j)] -= mx[(i, j)] * t;
            }
        }
        for j in 0..block {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                num += r[(i, j)].norm_sqr();
                den += mx[(i, j)].norm_sqr();
            }
            res[j] = num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE);
        }
        if std::env::var_os("MAGCONE_TRACE").is_some() {
            let mn: Vec<f64> = (0..block)
                .map(|j| {
                    x.column(j)
                        .iter()
                        .zip(mx.column(j).iter())
                        .map(|(a, b)| (a.conj() * b).re)
                        .sum::<f64>()
                })
                .collect();
            eprintln!(
                "it {iter}: theta={:?} res={:?} mnorm2={:?} p_cols={}",
                &theta[..block.min(3)],
                &res[..block.min(3)],
                &mn[..block.min(3)],
                p.as_ref().map(|t| t.0.ncols()).unwrap_or(0)
            );
        }
        if res.iter().take(opts.k).all(|&rj| rj <= opts.tol) {
            // The in-loop residuals come from recombined products which can
            // drift below the truth; confirm against fresh matvecs before
            // accepting, otherwise continue from the refreshed state.
            kx = kmat.mul_block(&x);
            mx = mmat.mul_block(&x);
            let mut fresh = vec![0.0; block];
            for j in 0..block {
                let xj = x.column(j);
                let num: Complex64 = xj
                    .iter()
                    .zip(kx.column(j).iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                theta[j] = num.re;
                let mut rr = 0.0;
                let mut mm = 0.0;
                for i in 0..n {
                    rr += (kx[(i, j)] - mx[(i, j)] * theta[j]).norm_sqr();
                    mm += mx[(i, j)].norm_sqr();
                }
                fresh[j] = rr.sqrt() / mm.sqrt().max(f64::MIN_POSITIVE);
            }
            if fresh.iter().take(opts.k).all(|&rj| rj <= opts.tol) {
                let mut values = theta[..opts.k].to_vec();
                let mut vectors = x.columns(0, opts.k).into_owned();
                sort_columns(&mut values, &mut vectors);
                let residuals = compute_residuals(kmat, mmat, &vectors, &values);
                return Ok(EigenResult {
                    values,
                    vectors,
                    residuals,
                    iterations: iter,
                    seed: opts.seed,
                });
            }
            res.copy_from_slice(&fresh);
        }
        // Stagnation exit: the attainable residual floor scales with the
        // stiffness entries, so a tolerance below it can never be met.
        let cur = res
            .iter()
            .take(opts.k)
            .cloned()
            .fold(0.0f64, f64::max);
        if cur < 0.5 * best_res {
            best_res = cur;
            best_iter = iter;
        } else if iter >= best_iter + 200 {
            return Err(EigenError::NotConverged {
                iterations: iter,
                residuals: res[..opts.k].to_vec(),
            });
        }
        // Soft locking: only unconverged columns spawn new directions.
        let active: Vec<usize> = (0..block).filter(|&j| res[j] > opts.tol).collect();
        let mut r_active = DMatrix::from_element(n, active.len(), Complex64::new(0.0, 0.0));
        for (c, &j) in active.iter().enumerate() {
            for i in 0..n {
                r_active[(i, c)] = r[(i, j)];
            }
        }
        let mut w = precond.apply(&r_active);
        let mut kw = kmat.mul_block(&w);
        let mut mw = mmat.mul_block(&w);
        // Double Gram-Schmidt of W against X and P (both already
        // M-orthonormal), then an internal rank filter of W. The basis
        // [X W P] stays well conditioned without discarding the fresh
        // residual information, which keeps the Rayleigh-Ritz coordinates
        // bounded and the attainable residual floor at rounding level.
        let pre_w = col_m_norms(&w, &mw);
        for _ in 0..2 {
            let c = adjoint_gemm(&x, &mw);
            w -= &gemm(&x, &c);
            kw -= &gemm(&kx, &c);
            mw -= &gemm(&mx, &c);
            if let Some((pp, kp, mp)) = &p {
                let c2 = adjoint_gemm(pp, &mw);
                w -= &gemm(pp, &c2);
                kw -= &gemm(kp, &c2);
                mw -= &gemm(mp, &c2);
            }
        }
        let kept = rank_filter_with(&mut w, &mut kw, &mut mw, Some(&pre_w), 0.0);
        if kept == 0 {
            // Stagnation: nothing new to add. Report non-convergence.
            return Err(EigenError::NotConverged {
                iterations: iter,
                residuals: res[..opts.k].to_vec(),
            });
        }
        let (z, kz, mz) = match &p {
            Some((pp, kp, mp)) => (hstack(&w, pp), hstack(&kw, kp), hstack(&mw, mp)),
            None => (w, kw, mw),
        };
        // Blockwise Grams of S = [X Z] (cheaper than forming S^H K S whole).
        let a_s = stacked_gram(&x, &kx, &z, &kz);
        let b_s = stacked_gram(&x, &mx, &z, &mz);
        let (ritz_vals, ritz_vecs) =
            small_generalized_eig(&a_s, &b_s).ok_or(EigenError::MassNotPositiveDefinite)?;
        if ritz_vals.len() < block {
            return Err(EigenError::NotConverged {
                iterations: iter,
                residuals: res[..opts.k].to_vec(),
            });
        }
        let cmat = ritz_vecs.columns(0, block).into_owned();
        let cx = cmat.rows(0, block).into_owned();
        let cz = cmat.rows(block, cmat.nrows() - block).into_owned();
        // Next search direction: the Z-part of the Ritz combination.
        let mut p_new = gemm(&z, &cz);
        let mut kp_new = gemm(&kz, &cz);
        let mut mp_new = gemm(&mz, &cz);
        let x_new = gemm(&x, &cx) + &p_new;
        let kx_new = gemm(&kx, &cx) + &kp_new;
        let mx_new = gemm(&mx, &cx) + &mp_new;
        x = x_new;
        kx = kx_new;
        mx = mx_new;
        // Keep the history block well separated from X before reuse.
        let pre_p = col_m_norms(&p_new, &mp_new);
        let cpx = adjoint_gemm(&x, &mp_new);
        p_new -= &gemm(&x, &cpx);
        kp_new -= &gemm(&kx, &cpx);
        mp_new -= &gemm(&mx, &cpx);
        rank_filter_with(&mut p_new, &mut kp_new, &mut mp_new, Some(&pre_p), 1e-9);
        p = Some((p_new, kp_new, mp_new));
        // Periodic refresh against accumulated recombination and
        // orthogonality drift.
        if iter % 50 == 0 {
            mx = mmat.mul_block(&x);
            m_orthonormalize(&mut x, &mut mx, None, mmat)?;
            kx = kmat.mul_block(&x);
        }
    }
    Err(EigenError::NotConverged {
        iterations: opts.max_iter,
        residuals: res[..opts.k].to_vec(),
    })
}

fn jacobi_inverse_diagonal(kmat: &CsrMatrix) -> Vec<f64> {
    let diag = kmat.diagonal();
    let scale = diag.iter().map(|d| d.re.abs()).fold(0.0, f64::max).max(1e-300);
    diag.iter()
        .map(|d| 1.0 / d.re.abs().max(1e-14 * scale))
        .collect()
}

/// Orthonormalize the columns of `x` in the M inner product (in place,
/// updating `mx` consistently); `kx`, when given, receives the same
/// column operations.
fn m_orthonormalize(
    x: &mut DMatrix<Complex64>,
    mx: &mut DMatrix<Complex64>,
    kx: Option<&mut DMatrix<Complex64>>,
    _mmat: &CsrMatrix,
) -> Result<(), EigenError> {
    let mut g = adjoint_gemm(x, mx);
    hermitianize(&mut g);
    let eig = SymmetricEigen::new(g);
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(lam_max > 0.0) {
        return Err(EigenError::MassNotPositiveDefinite);
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * lam_max)
        .collect();
    if keep.len() < x.ncols() {
        return Err(EigenError::MassNotPositiveDefinite);
    }
    let t = transform_from_eig(&eig, &keep);
    *x = gemm(x, &t);
    *mx = gemm(mx, &t);
    if let Some(kx) = kx {
        *kx = gemm(kx, &t);
    }
    Ok(())
}

/// M-norms of the columns given the precomputed `M z` block.
fn col_m_norms(z: &DMatrix<Complex64>, mz: &DMatrix<Complex64>) -> Vec<f64> {
    (0..z.ncols())
        .map(|j| {
            let nj: f64 = z
                .column(j)
                .iter()
                .zip(mz.column(j).iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum();
            if nj > 0.0 && nj.is_finite() {
                nj.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Drop M-norm-degenerate directions; returns the retained count.
///
/// Columns are rescaled to unit M-norm so that small but useful directions
/// (late-stage preconditioned residuals) survive; a column is dropped when
/// projections annihilated it relative to its pre-projection norm
/// (`pre_norms`), because the normalized remnant would be rounding noise
/// whose stored K/M images no longer belong to it.
fn rank_filter_with(
    z: &mut DMatrix<Complex64>,
    kz: &mut DMatrix<Complex64>,
    mz: &mut DMatrix<Complex64>,
    pre_norms: Option<&[f64]>,
    abs_floor: f64,
) -> usize {
    if z.ncols() == 0 {
        return 0;
    }
    let norms = col_m_norms(z, mz);
    // Columns far below the block scale are rounding noise; normalizing them
    // would inject junk directions, so they are dropped instead. The absolute
    // floor protects blocks whose K-images are recombinations (their error is
    // absolute, so a uniformly tiny block is meaningless as directions).
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let floor = (1e-8 * max_norm).max(abs_floor);
    let keep_cols: Vec<usize> = (0..z.ncols())
        .filter(|&j| {
            norms[j] > floor
                && pre_norms
                    .map(|pre| norms[j] > 1e-7 * pre[j])
                    .unwrap_or(true)
        })
        .collect();
    if keep_cols.len() < z.ncols() || keep_cols.iter().any(|&j| norms[j] != 1.0) {
        let scale = |m: &mut DMatrix<Complex64>| {
            let cols: Vec<_> = keep_cols
                .iter()
                .map(|&j| (m.column(j) / Complex64::new(norms[j], 0.0)).into_owned())
                .collect();
            *m = if cols.is_empty() {
                DMatrix::zeros(m.nrows(), 0)
            } else {
                DMatrix::from_columns(&cols)
            };
        };
        scale(z);
        scale(kz);
        scale(mz);
    }
    if z.ncols() == 0 {
        return 0;
    }
    let mut g = adjoint_gemm(z, mz);
    hermitianize(&mut g);
    let eig = SymmetricEigen::new(g);
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(lam_max > 0.0) {
        *z = DMatrix::zeros(z.nrows(), 0);
        *kz = DMatrix::zeros(kz.nrows(), 0);
        *mz = DMatrix::zeros(mz.nrows(), 0);
        return 0;
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-8 * lam_max)
        .collect();
    let t = transform_from_eig(&eig, &keep);
    *z = gemm(z, &t);
    *kz = gemm(kz, &t);
    *mz = gemm(mz, &t);
    keep.len()
}

fn transform_from_eig(
    eig: &SymmetricEigen<Complex64, nalgebra::Dyn>,
    keep: &[usize],
) -> DMatrix<Complex64> {
    let n = eig.eigenvectors.nrows();
    let mut t = DMatrix::from_element(n, keep.len(), Complex64::new(0.0, 0.0));
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt().recip();
        for r in 0..n {
            t[(r, c)] = eig.eigenvectors[(r, i)] * s;
        }
    }
    t
}

/// Lowest-first eigenpairs of the small generalized pair (A, B), B > 0.
///
/// Uses the Cholesky reduction when B is numerically definite and otherwise
/// projects onto the well-conditioned B-subspace (rank-revealing fallback for
/// near-degenerate Rayleigh-Ritz bases).
fn small_generalized_eig(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
) -> Option<(Vec<f64>, DMatrix<Complex64>)> {
    if let Some(chol) = checked_cholesky_with(b.clone(), 1e-7) {
        let l = chol.l();
        if let Some(t1) = l.solve_lower_triangular(a) {
            if let Some(t2) = l.solve_lower_triangular(&t1.adjoint()) {
                let sym = (&t2 + t2.adjoint()) * Complex64::new(0.5, 0.0);
                let eig = SymmetricEigen::new(sym);
                let (values, y) = sorted_eig(&eig);
                if let Some(vecs) = l.adjoint().solve_upper_triangular(&y) {
                    return Some((values, vecs));
                }
            }
        }
    }
    // Rank-revealing fallback: B = V Lam V^H, keep the well-conditioned part.
    let eig_b = SymmetricEigen::new(b.clone());
    let lam_max = eig_b.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(lam_max > 0.0) {
        return None;
    }
    let keep: Vec<usize> = (0..eig_b.eigenvalues.len())
        .filter(|&i| eig_b.eigenvalues[i] > 1e-10 * lam_max)
        .collect();
    let t = transform_from_eig(&eig_b, &keep);
    let mut proj = t.adjoint() * a * &t;
    hermitianize(&mut proj);
    let eig = SymmetricEigen::new(proj);
    let (values, y) = sorted_eig(&eig);
    Some((values, t * y))
}

fn sorted_eig(eig: &SymmetricEigen<Complex64, nalgebra::Dyn>) -> (Vec<f64>, DMatrix<Complex64>) {
    let nn = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..nn).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, y)
}

/// Hermitian Gram of the stacked basis `S = [U Z]` against `[AU AZ]`:
/// returns `[[U^H AU, U^H AZ], [(U^H AZ)^H, Z^H AZ]]`, hermitianized.
fn stacked_gram(
    u: &DMatrix<Complex64>,
    au: &DMatrix<Complex64>,
    z: &DMatrix<Complex64>,
    az: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let bu = u.ncols();
    let bz = z.ncols();
    let mut g = DMatrix::from_element(bu + bz, bu + bz, Complex64::new(0.0, 0.0));
    let mut guu = adjoint_gemm(u, au);
    hermitianize(&mut guu);
    g.view_mut((0, 0), (bu, bu)).copy_from(&guu);
    let guz = adjoint_gemm(u, az);
    g.view_mut((0, bu), (bu, bz)).copy_from(&guz);
    g.view_mut((bu, 0), (bz, bu)).copy_from(&guz.adjoint());
    let mut gzz = adjoint_gemm(z, az);
    hermitianize(&mut gzz);
    g.view_mut((bu, bu), (bz, bz)).copy_from(&gzz);
    g
}

/// Cholesky with an explicit Hermitian-positive-definiteness check (the
/// complex factorization itself does not reject indefinite input) and a
/// relative pivot floor guarding against near-singular input.
fn checked_cholesky_with(
    m: DMatrix<Complex64>,
    min_rel_pivot: f64,
) -> Option<Cholesky<Complex64, nalgebra::Dyn>> {
    let mut dmax = 0.0f64;
    for i in 0..m.nrows() {
        let d = m[(i, i)];
        if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-10 * d.re {
            return None;
        }
        dmax = dmax.max(d.re);
    }
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let floor = min_rel_pivot * dmax.sqrt();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > floor) || !d.re.is_finite() || d.im.abs() > 1e-8 * d.re {
            return None;
        }
    }
    Some(chol)
}

fn checked_cholesky(m: DMatrix<Complex64>) -> Option<Cholesky<Complex64, nalgebra::Dyn>> {
    checked_cholesky_with(m, 0.0)
}

fn hermitianize(a: &mut DMatrix<Complex64>) {
    let adj = a.adjoint();
    *a = (&*a + adj) * Complex64::new(0.5, 0.0);
}

fn sort_columns(values: &mut [f64], vectors: &mut DMatrix<Complex64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let cols: Vec<_> = order.iter().map(|&i| vectors.column(i).into_owned()).collect();
    values.copy_from_slice(&sorted_vals);
    *vectors = DMatrix::from_columns(&cols);
}

fn hstack(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    if b.ncols() == 0 {
        return a.clone();
    }
    let mut out = DMatrix::from_element(a.nrows(), a.ncols() + b.ncols(), Complex64::new(0.0, 0.0));
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Planar (split real/imaginary) copy of a column-major complex matrix;
/// breaks the complex-multiply dependency chains so the compiler can
/// vectorize the level-3 kernels below.
struct Planar {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Planar {
    fn from(a: &DMatrix<Complex64>) -> Planar {
        let n = a.nrows();
        let cols = a.ncols();
        let s = a.as_slice();
        let mut re = vec![0.0; n * cols];
        let mut im = vec![0.0; n * cols];
        for (k, z) in s.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Planar { n, re, im }
    }

    fn col(&self, j: usize) -> (&[f64], &[f64]) {
        (
            &self.re[j * self.n..(j + 1) * self.n],
            &self.im[j * self.n..(j + 1) * self.n],
        )
    }
}

/// `A * B` with deterministic parallelism over output columns.
fn gemm(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (n, p) = (a.nrows(), a.ncols());
    let q = b.ncols();
    assert_eq!(p, b.nrows());
    if q == 0 || p == 0 {
        return DMatrix::from_element(n, q, Complex64::new(0.0, 0.0));
    }
    let ap = Planar::from(a);
    let b_s = b.as_slice();
    let mut out = vec![Complex64::new(0.0, 0.0); n * q];
    let col_job = |j: usize, col: &mut [Complex64]| {
        let mut acc_re = vec![0.0f64; n];
        let mut acc_im = vec![0.0f64; n];
        for l in 0..p {
            let f = b_s[l + j * p];
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            let (ar, ai) = ap.col(l);
            let (fr, fi) = (f.re, f.im);
            for i in 0..n {
                acc_re[i] += ar[i] * fr - ai[i] * fi;
                acc_im[i] += ar[i] * fi + ai[i] * fr;
            }
        }
        for i in 0..n {
            col[i] = Complex64::new(acc_re[i], acc_im[i]);
        }
    };
    if n * p * q < PAR_THRESHOLD {
        for (j, col) in out.chunks_mut(n).enumerate() {
            col_job(j, col);
        }
    } else {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(j, col)| col_job(j, col));
    }
    DMatrix::from_vec(n, q, out)
}

/// Below this work volume the level-3 kernels run sequentially (thread
/// fork-join latency dominates on small blocks).
const PAR_THRESHOLD: usize = 2_000_000;

/// `A^H * B` with deterministic parallelism over output columns.
fn adjoint_gemm(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (n, p) = (a.nrows(), a.ncols());
    let q = b.ncols();
    assert_eq!(n, b.nrows());
    if q == 0 || p == 0 {
        return DMatrix::from_element(p, q, Complex64::new(0.0, 0.0));
    }
    let ap = Planar::from(a);
    let bp = Planar::from(b);
    let mut out = vec![Complex64::new(0.0, 0.0); p * q];
    let col_job = |j: usize, col: &mut [Complex64]| {
        let (br, bi) = bp.col(j);
        for (l, slot) in col.iter_mut().enumerate() {
            let (ar, ai) = ap.col(l);
            let mut s_re = 0.0;
            let mut s_im = 0.0;
            for i in 0..n {
                // conj(a) * b
                s_re += ar[i] * br[i] + ai[i] * bi[i];
                s_im += ar[i] * bi[i] - ai[i] * br[i];
            }
            *slot = Complex64::new(s_re, s_im);
        }
    };
    if n * p * q < PAR_THRESHOLD {
        for (j, col) in out.chunks_mut(p).enumerate() {
            col_job(j, col);
        }
    } else {
        out.par_chunks_mut(p)
            .enumerate()
            .for_each(|(j, col)| col_job(j, col));
    }
    DMatrix::from_vec(p, q, out)
}

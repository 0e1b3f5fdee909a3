//! Leading-order constants, quasimodes and extraction of expansion
//! coefficients from aperture sweeps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::assembly::{self, TensorGrid};
use crate::eigen::{self, EigenOptions};
use crate::geometry::ConeConfig;
use crate::models;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("insufficient samples: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("aperture samples must be distinct and spread over a factor of 4 (max/min = {spread})")]
    InsufficientSpread { spread: f64 },
    #[error("ill-conditioned fit: condition number {condition:.3e} exceeds 1e12")]
    IllConditioned { condition: f64 },
    #[error("assembly failed: {0}")]
    Assembly(#[from] crate::assembly::AssemblyError),
    #[error("eigensolver failed: {0}")]
    Eigen(#[from] crate::eigen::EigenError),
}

/// Leading coefficient `(4n - 1) 2^{-5/2} sqrt(1 + sin^2 beta)` of the
/// small-aperture expansion of the rescaled eigenvalue.
pub fn gamma0(n: usize, beta: f64) -> f64 {
    assert!(n >= 1 && (0.0..=std::f64::consts::FRAC_PI_2).contains(&beta));
    (4.0 * n as f64 - 1.0) / 32.0_f64.sqrt() * (1.0 + beta.sin().powi(2)).sqrt()
}

/// Weighted second moment of the polar variable,
/// `c(alpha) = int phi^2 sin(alpha phi) dphi / int sin(alpha phi) dphi`
/// over `(0, 1/2)`; tends to `1/8` with an `O(alpha^2)` defect.
pub fn phi_average_constant(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < std::f64::consts::PI);
    let x = 0.5 * alpha;
    if x < 0.05 {
        // c = 1/8 - x^2/288 - x^4/8640 - x^6/268800 + O(x^8)
        let x2 = x * x;
        return 0.125 - x2 / 288.0 - x2 * x2 / 8640.0 - x2 * x2 * x2 / 268800.0;
    }
    // Closed forms of both integrals; the numerator loses at most two digits
    // to cancellation for x >= 0.1.
    let (sx, cx) = x.sin_cos();
    let numerator = -cx / 4.0 + sx / (2.0 * x) - (1.0 - cx) / (2.0 * x * x);
    let denominator = 1.0 - cx;
    numerator / denominator
}

/// Polynomial fit of an aperture sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AsymptoticFit {
    /// `(alpha, lambda)` samples; `lambda` is the eigenvalue of the physical
    /// cone operator, i.e. `alpha` times the rescaled eigenvalue.
    pub samples: Vec<(f64, f64)>,
    pub degree: usize,
    /// Fitted coefficients of `lambda/alpha` against `1, alpha, .., alpha^J`.
    pub coefficients: Vec<f64>,
    /// 2-norm condition number of the fit basis matrix.
    pub condition: f64,
    /// Reference leading coefficient, when attached.
    pub reference: Option<f64>,
    /// `|gamma_hat_0 - reference|`, when a reference is attached.
    pub deviation: Option<f64>,
}

impl AsymptoticFit {
    pub fn with_reference(mut self, gamma0: f64) -> Self {
        self.deviation = Some((self.coefficients[0] - gamma0).abs());
        self.reference = Some(gamma0);
        self
    }
}

/// Least-squares fit of `lambda/alpha` against the monomial basis
/// `{1, alpha, ..., alpha^degree}`. Samples are sorted internally, so the fit
/// is exactly invariant under reordering.
pub fn richardson_fit(
    samples: &[(f64, f64)],
    degree: usize,
) -> Result<AsymptoticFit, AsymptoticsError> {
    let need = degree + 2;
    if samples.len() < need {
        return Err(AsymptoticsError::InsufficientSamples {
            got: samples.len(),
            need,
        });
    }
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let amin = sorted.first().unwrap().0;
    let amax = sorted.last().unwrap().0;
    let distinct = sorted.windows(2).all(|w| w[0].0 < w[1].0);
    if !distinct || !(amin > 0.0) || amax / amin < 4.0 {
        return Err(AsymptoticsError::InsufficientSpread {
            spread: amax / amin,
        });
    }
    let rows = sorted.len();
    let cols = degree + 1;
    let mut b = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for (i, &(alpha, lambda)) in sorted.iter().enumerate() {
        let mut pow = 1.0;
        for j in 0..cols {
            b[(i, j)] = pow;
            pow *= alpha;
        }
        y[i] = lambda / alpha;
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = smax / smin.max(f64::MIN_POSITIVE);
    if condition > 1e12 {
        return Err(AsymptoticsError::IllConditioned { condition });
    }
    let coef = svd.solve(&y, 0.0).expect("svd solve");
    Ok(AsymptoticFit {
        samples: sorted,
        degree,
        coefficients: coef.iter().cloned().collect(),
        condition,
        reference: None,
        deviation: None,
    })
}

/// Lift of the scaled radial profile (potential coefficient
/// `2^{-5}(1 + sin^2 beta)`) to the discrete space: axisymmetric block,
/// constant in `phi`, M-normalized.
pub fn quasimode(
    cfg: &ConeConfig,
    grid: &TensorGrid,
    n: usize,
) -> Result<DVector<Complex64>, AsymptoticsError> {
    let (_, profile) = models::scaled_radial_eigenpair(cfg.radial_coefficient(), n);
    let dof = grid.dof_map();
    let mut v = DVector::from_element(dof.dim(), Complex64::new(0.0, 0.0));
    let range = dof.mode_range(0);
    let t_nodes = grid.t_nodes();
    for i in 0..grid.n_t() {
        let val = profile.eval(t_nodes[i]);
        for j in 0..grid.n_phi() {
            v[range.start + i * grid.n_phi() + j] = Complex64::new(val, 0.0);
        }
    }
    // M-normalize using the single-block weighted mass.
    let mass0 = assembly::weighted_mass(cfg, grid, |_, _| 1.0);
    let sub: Vec<Complex64> = v.as_slice()[range.clone()].to_vec();
    let mut msub = vec![Complex64::new(0.0, 0.0); sub.len()];
    mass0.matvec(&sub, &mut msub);
    let norm2: f64 = sub
        .iter()
        .zip(&msub)
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    let scale = norm2.sqrt().recip();
    for i in range {
        v[i] *= Complex64::new(scale, 0.0);
    }
    Ok(v)
}

/// One row of a spectral-distance sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectralDistanceRow {
    pub alpha: f64,
    /// Rayleigh quotient of the quasimode in the discrete form.
    pub rayleigh: f64,
    /// Closest computed eigenvalue.
    pub nearest: f64,
    pub distance: f64,
    /// Squared M-overlap with the ground eigenvector.
    pub ground_overlap: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectralDistanceReport {
    pub n: usize,
    pub beta: f64,
    pub rows: Vec<SpectralDistanceRow>,
    /// Log-log slope of distance against aperture.
    pub slope: f64,
}

/// Measure `min_k |RQ(quasimode n) - lambda_k|` across an aperture sweep and
/// fit the decay exponent. Needs at least two sweep points.
pub fn spectral_distance_check(
    beta: f64,
    grid: &TensorGrid,
    n: usize,
    alphas: &[f64],
    opts: &EigenOptions,
) -> Result<SpectralDistanceReport, AsymptoticsError> {
    if alphas.len() < 2 {
        return Err(AsymptoticsError::InsufficientSamples {
            got: alphas.len(),
            need: 2,
        });
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = ConeConfig::new(alpha, beta).expect("valid aperture");
        let op = assembly::assemble_full(&cfg, grid)?;
        let solve_opts = EigenOptions {
            k: (n + 2).max(opts.k),
            ..*opts
        };
        let res = eigen::solve_lowest(&op, &solve_opts)?;
        let q = quasimode(&cfg, grid, n)?;
        let rq = eigen::rayleigh_quotient(&op.stiffness, &op.mass, &q);
        let (nearest, distance) = res
            .values
            .iter()
            .map(|&v| (v, (v - rq).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let mq = op.mass.mul_block(&DMatrix::from_columns(&[q.clone()]));
        let overlap: Complex64 = res
            .vectors
            .column(0)
            .iter()
            .zip(mq.column(0).iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        rows.push(SpectralDistanceRow {
            alpha,
            rayleigh: rq,
            nearest,
            distance,
            ground_overlap: overlap.norm_sqr(),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.distance > 0.0)
        .map(|r| (r.alpha.ln(), r.distance.ln()))
        .collect();
    let slope = log_slope(&pts);
    Ok(SpectralDistanceReport {
        n,
        beta,
        rows,
        slope,
    })
}

/// Least-squares slope of already-logarithmic points.
pub fn log_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

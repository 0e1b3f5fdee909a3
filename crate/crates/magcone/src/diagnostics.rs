//! Structural measurements on computed eigenvectors: azimuthal and polar
//! averaging fractions, exponential-weight mass ratios, and the gap to the
//! axisymmetric model operator.
//!
//! The underlying bounds carry unspecified constants, so every check here
//! reports scaling exponents over aperture sweeps or boundedness, never
//! absolute constants.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::assembly::{self, OperatorPair, TensorGrid};
use crate::asymptotics::{self, log_slope};
use crate::eigen::{self, EigenOptions, EigenResult};
use crate::geometry::ConeConfig;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("eigenpair index {which} out of range ({len} available)")]
    IndexOutOfRange { which: usize, len: usize },
    #[error("weight overflow: eps0 * t_max = {0} > 300")]
    WeightOverflow(f64),
    #[error("assembly failed: {0}")]
    Assembly(#[from] crate::assembly::AssemblyError),
    #[error("eigensolver failed: {0}")]
    Eigen(#[from] crate::eigen::EigenError),
}

/// Summary of the per-point structural checks.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagnosticsReport {
    /// Squared M-norm fraction of the eigenvector outside the axisymmetric block.
    pub theta_offmode_fraction: f64,
    /// `||t (psi - avg_phi psi)||^2_M / ||psi||^2_M`.
    pub phi_variance_fraction: f64,
    /// `int e^{2 eps0 t cos(alpha phi)} |psi|^2 dmu / ||psi||^2`.
    pub agmon_mass: f64,
    pub agmon_eps0: f64,
    /// `lambda_N - (1 - alpha) lambda^model_N`, when the model was solved.
    pub model_gap: Option<f64>,
    pub max_residual: f64,
}

/// Squared M-norm fraction of eigenvector `which` outside the `m = 0` block.
pub fn theta_offmode_fraction(
    res: &EigenResult,
    op: &OperatorPair,
    which: usize,
) -> Result<f64, DiagnosticsError> {
    let v = column(res, which)?;
    let masses = mode_block_masses(op, &v);
    let total: f64 = masses.iter().sum();
    let center = op.dof_map.m_max;
    Ok((total - masses[center]) / total)
}

/// M-norm-squared of the vector per Fourier-mode block.
pub fn mode_block_masses(op: &OperatorPair, v: &DVector<Complex64>) -> Vec<f64> {
    let dof = op.dof_map;
    let mv = op.mass.mul_block(&DMatrix::from_columns(&[v.clone()]));
    dof.modes()
        .map(|m| {
            let range = dof.mode_range(m);
            range
                .map(|i| (v[i].conj() * mv[(i, 0)]).re)
                .sum()
        })
        .collect()
}

/// Projection onto the axisymmetric block (exact discrete theta-average).
pub fn theta_average(op: &OperatorPair, v: &DVector<Complex64>) -> DVector<Complex64> {
    let dof = op.dof_map;
    let mut out = DVector::from_element(v.len(), Complex64::new(0.0, 0.0));
    let range = dof.mode_range(0);
    for i in range {
        out[i] = v[i];
    }
    out
}

/// `||t (psi - avg_phi psi)||^2_M / ||psi||^2_M`, the polar-averaging
/// fraction. The average per `(mode, t)` fiber uses the `sin(alpha phi)`
/// measure, realized through the 1D mass matrices of the discrete basis.
pub fn phi_variance_fraction(
    res: &EigenResult,
    op: &OperatorPair,
    which: usize,
) -> Result<f64, DiagnosticsError> {
    let v = column(res, which)?;
    Ok(phi_variance_fraction_of(op, &v))
}

/// Same as [`phi_variance_fraction`] for an arbitrary vector.
pub fn phi_variance_fraction_of(op: &OperatorPair, v: &DVector<Complex64>) -> f64 {
    let grid = &op.grid;
    let alpha = op.cfg.alpha();
    let m_phi = assembly::phi_mass_1d(grid, |p| (alpha * p).sin());
    let m_t2 = assembly::t_mass_1d(grid, |t| t.powi(4));
    let (n_t, n_phi) = (grid.n_t(), grid.n_phi());
    // Weighted phi-average per (mode, t-node) fiber.
    let ones = DVector::from_element(n_phi, 1.0);
    let weights = &m_phi * &ones;
    let wsum: f64 = weights.sum();
    let dof = op.dof_map;
    let mut diff = v.clone();
    for m in dof.modes() {
        let base = dof.mode_range(m).start;
        for i in 0..n_t {
            let fiber = base + i * n_phi;
            let mut avg = Complex64::new(0.0, 0.0);
            for j in 0..n_phi {
                avg += v[fiber + j] * weights[j];
            }
            avg /= wsum;
            for j in 0..n_phi {
                diff[fiber + j] -= avg;
            }
        }
    }
    // ||t w||^2_M with the separable weight t^4 x sin(alpha phi).
    let num: f64 = {
        let mut acc = 0.0;
        for m in dof.modes() {
            let base = dof.mode_range(m).start;
            for i in 0..n_t {
                for i2 in 0..n_t {
                    let mt = m_t2[(i, i2)];
                    if mt == 0.0 {
                        continue;
                    }
                    for j in 0..n_phi {
                        for j2 in 0..n_phi {
                            let mp = m_phi[(j, j2)];
                            if mp == 0.0 {
                                continue;
                            }
                            acc += mt
                                * mp
                                * (diff[base + i * n_phi + j].conj()
                                    * diff[base + i2 * n_phi + j2])
                                    .re;
                        }
                    }
                }
            }
        }
        acc
    };
    let mv = op.mass.mul_block(&DMatrix::from_columns(&[v.clone()]));
    let den: f64 = v
        .iter()
        .zip(mv.column(0).iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    num / den
}

/// Exponentially weighted mass ratio
/// `int e^{2 eps0 t cos(alpha phi)} |psi|^2 dmu / ||psi||^2`.
pub fn agmon_weighted_mass(
    res: &EigenResult,
    op: &OperatorPair,
    which: usize,
    eps0: f64,
) -> Result<f64, DiagnosticsError> {
    let v = column(res, which)?;
    agmon_weighted_mass_of(op, &v, eps0)
}

/// Same as [`agmon_weighted_mass`] for an arbitrary vector.
pub fn agmon_weighted_mass_of(
    op: &OperatorPair,
    v: &DVector<Complex64>,
    eps0: f64,
) -> Result<f64, DiagnosticsError> {
    let guard = eps0 * op.grid.t_max();
    if guard > 300.0 {
        return Err(DiagnosticsError::WeightOverflow(guard));
    }
    let alpha = op.cfg.alpha();
    let wm = assembly::weighted_mass(&op.cfg, &op.grid, |t, phi| {
        (2.0 * eps0 * t * (alpha * phi).cos()).exp()
    });
    let dof = op.dof_map;
    let n2d = dof.n2d();
    let mut num = 0.0;
    for m in dof.modes() {
        let base = dof.mode_range(m).start;
        let sub: Vec<Complex64> = (0..n2d).map(|i| v[base + i]).collect();
        let mut wv = vec![Complex64::new(0.0, 0.0); n2d];
        wm.matvec(&sub, &mut wv);
        num += sub
            .iter()
            .zip(&wv)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>();
    }
    let mv = op.mass.mul_block(&DMatrix::from_columns(&[v.clone()]));
    let den: f64 = v
        .iter()
        .zip(mv.column(0).iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    Ok(num / den)
}

/// One aperture sample of the model-reduction comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModelReductionRow {
    pub alpha: f64,
    pub lambda_full: f64,
    pub lambda_model: f64,
    /// `(1 - alpha) lambda^model_N - lambda_N`.
    pub deficit: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ModelReductionReport {
    pub n: usize,
    pub beta: f64,
    pub rows: Vec<ModelReductionRow>,
    /// `max_alpha (deficit)_+ / sqrt(alpha)`: the fitted square-root envelope.
    pub deficit_envelope: f64,
    /// Log-log slope of `|lambda^model - gamma0|` against aperture.
    pub model_gap_slope: f64,
}

/// Compare the full and model operators across an aperture sweep: the deficit
/// `(1 - alpha) lambda^model_N - lambda_N` and the decay of
/// `|lambda^model_N - gamma0(N, beta)|`.
pub fn model_reduction_check(
    beta: f64,
    grid: &TensorGrid,
    n: usize,
    alphas: &[f64],
    opts: &EigenOptions,
) -> Result<ModelReductionReport, DiagnosticsError> {
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = ConeConfig::new(alpha, beta).expect("valid aperture");
        let full = assembly::assemble_full(&cfg, grid)?;
        let solve_opts = EigenOptions { k: n, ..*opts };
        let full_res = eigen::solve_lowest(&full, &solve_opts)?;
        let model = assembly::assemble_model(&cfg, grid)?;
        let model_res = eigen::solve_lowest(&model, &solve_opts)?;
        let lf = full_res.values[n - 1];
        let lm = model_res.values[n - 1];
        rows.push(ModelReductionRow {
            alpha,
            lambda_full: lf,
            lambda_model: lm,
            deficit: (1.0 - alpha) * lm - lf,
        });
    }
    let deficit_envelope = rows
        .iter()
        .map(|r| r.deficit.max(0.0) / r.alpha.sqrt())
        .fold(0.0, f64::max);
    let gamma = asymptotics::gamma0(n, beta);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| (r.lambda_model - gamma).abs() > 0.0)
        .map(|r| (r.alpha.ln(), (r.lambda_model - gamma).abs().ln()))
        .collect();
    Ok(ModelReductionReport {
        n,
        beta,
        rows,
        deficit_envelope,
        model_gap_slope: log_slope(&pts),
    })
}

/// Run the per-point structural checks on a solved operator.
pub fn run_report(
    res: &EigenResult,
    op: &OperatorPair,
    eps0: f64,
    model_lambda: Option<f64>,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    let theta = theta_offmode_fraction(res, op, 0)?;
    let phi = phi_variance_fraction(res, op, 0)?;
    let agmon = agmon_weighted_mass(res, op, 0, eps0)?;
    let max_residual = res.residuals.iter().cloned().fold(0.0, f64::max);
    let model_gap = model_lambda.map(|lm| res.values[0] - (1.0 - op.cfg.alpha()) * lm);
    Ok(DiagnosticsReport {
        theta_offmode_fraction: theta,
        phi_variance_fraction: phi,
        agmon_mass: agmon,
        agmon_eps0: eps0,
        model_gap,
        max_residual,
    })
}

fn column(res: &EigenResult, which: usize) -> Result<DVector<Complex64>, DiagnosticsError> {
    if which >= res.values.len() {
        return Err(DiagnosticsError::IndexOutOfRange {
            which,
            len: res.values.len(),
        });
    }
    Ok(res.vectors.column(which).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_full;

    fn small_setup(beta: f64) -> (ConeConfig, TensorGrid, OperatorPair) {
        let cfg = ConeConfig::new(0.3, beta).unwrap();
        let grid = TensorGrid::unchecked(10, 6, 2, 10.0);
        let op = assemble_full(&cfg, &grid).unwrap();
        (cfg, grid, op)
    }

    fn unit_vector(op: &OperatorPair, mut fill: impl FnMut(i64, usize, usize) -> Complex64) -> DVector<Complex64> {
        let dof = op.dof_map;
        let mut v = DVector::from_element(dof.dim(), Complex64::new(0.0, 0.0));
        for m in dof.modes() {
            for i in 0..dof.n_t {
                for j in 0..dof.n_phi {
                    v[dof.index(m, i, j)] = fill(m, i, j);
                }
            }
        }
        v
    }

    #[test]
    fn pure_mode_vectors_have_extreme_fractions() {
        let (_, _, op) = small_setup(0.5);
        let v0 = unit_vector(&op, |m, _, _| {
            if m == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let masses = mode_block_masses(&op, &v0);
        let total: f64 = masses.iter().sum();
        assert!((total - masses[op.dof_map.m_max]).abs() < 1e-14 * total);
        let v1 = unit_vector(&op, |m, _, _| {
            if m == 1 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let masses = mode_block_masses(&op, &v1);
        let total: f64 = masses.iter().sum();
        assert!((total - masses[op.dof_map.m_max + 1]).abs() < 1e-14 * total);
    }

    #[test]
    fn theta_projection_is_idempotent_and_pythagorean() {
        use rand::prelude::*;
        let (_, _, op) = small_setup(0.7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let v = unit_vector(&op, |_, _, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let p1 = theta_average(&op, &v);
        let p2 = theta_average(&op, &p1);
        assert_eq!(p1, p2);
        // Pythagoras in the M norm: mode blocks are M-orthogonal.
        let m_norm = |w: &DVector<Complex64>| -> f64 {
            let mw = op.mass.mul_block(&DMatrix::from_columns(&[w.clone()]));
            w.iter().zip(mw.column(0).iter()).map(|(a, b)| (a.conj() * b).re).sum()
        };
        let rest = &v - &p1;
        let total = m_norm(&v);
        assert!(
            ((m_norm(&p1) + m_norm(&rest)) - total).abs() <= 1e-12 * total,
            "Pythagoras violated"
        );
    }

    #[test]
    fn fractions_are_scale_invariant() {
        use rand::prelude::*;
        let (_, _, op) = small_setup(0.4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let v = unit_vector(&op, |_, _, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let scaled = v.map(|z| z * Complex64::new(3.7, -1.2));
        let a = phi_variance_fraction_of(&op, &v);
        let b = phi_variance_fraction_of(&op, &scaled);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-30));
        let am = agmon_weighted_mass_of(&op, &v, 0.25).unwrap();
        let bm = agmon_weighted_mass_of(&op, &scaled, 0.25).unwrap();
        assert!((am - bm).abs() <= 1e-10 * am);
    }

    #[test]
    fn phi_constant_vector_has_zero_variance() {
        let (_, _, op) = small_setup(0.6);
        let v = unit_vector(&op, |_, i, _| Complex64::new((i as f64 * 0.3).cos(), 0.1));
        let f = phi_variance_fraction_of(&op, &v);
        assert!(f.abs() < 1e-13, "phi-constant vector has fraction {f}");
    }

    #[test]
    fn single_fiber_cosine_matches_direct_quadrature() {
        // v = cos(2 pi phi) on one (m=0, t) fiber: weighted variance computed
        // by dense loops over the same 1D mass matrices.
        let (cfg, grid, op) = small_setup(0.2);
        let i0 = 4usize;
        let v = unit_vector(&op, |m, i, j| {
            if m == 0 && i == i0 {
                Complex64::new((std::f64::consts::TAU * grid.phi_nodes()[j]).cos(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let got = phi_variance_fraction_of(&op, &v);
        assert!(got > 0.0);
        // Oracle: explicit averages with the same discrete measure.
        let mp = assembly::phi_mass_1d(&grid, |p| (cfg.alpha() * p).sin());
        let mt2 = assembly::t_mass_1d(&grid, |t| t.powi(4));
        let mt0 = assembly::t_mass_1d(&grid, |t| t.powi(2));
        let vals: Vec<f64> = grid
            .phi_nodes()
            .iter()
            .map(|&p| (std::f64::consts::TAU * p).cos())
            .collect();
        let ones = nalgebra::DVector::from_element(grid.n_phi(), 1.0);
        let w = &mp * &ones;
        let avg: f64 = vals.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() / w.sum();
        let diff: Vec<f64> = vals.iter().map(|v| v - avg).collect();
        let quad_num: f64 = (0..grid.n_phi())
            .flat_map(|j| (0..grid.n_phi()).map(move |j2| (j, j2)))
            .map(|(j, j2)| diff[j] * mp[(j, j2)] * diff[j2])
            .sum::<f64>()
            * mt2[(i0, i0)];
        let quad_den: f64 = (0..grid.n_phi())
            .flat_map(|j| (0..grid.n_phi()).map(move |j2| (j, j2)))
            .map(|(j, j2)| vals[j] * mp[(j, j2)] * vals[j2])
            .sum::<f64>()
            * mt0[(i0, i0)];
        let oracle = quad_num / quad_den;
        assert!(
            (got - oracle).abs() <= 1e-12 * oracle,
            "variance fraction {got} vs oracle {oracle}"
        );
    }

    #[test]
    fn report_serializes_to_json() {
        let report = DiagnosticsReport {
            theta_offmode_fraction: 1e-3,
            phi_variance_fraction: 2e-4,
            agmon_mass: 4.2,
            agmon_eps0: 0.25,
            model_gap: Some(-1e-3),
            max_residual: 3e-9,
        };
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"agmon_mass\":4.2"));
        assert!(text.contains("theta_offmode_fraction"));
    }

    #[test]
    fn agmon_overflow_guard() {
        let (_, _, op) = small_setup(0.3);
        let v = unit_vector(&op, |_, _, _| Complex64::new(1.0, 0.0));
        assert!(matches!(
            agmon_weighted_mass_of(&op, &v, 40.0),
            Err(DiagnosticsError::WeightOverflow(_))
        ));
    }

    #[test]
    fn agmon_bound_for_compactly_supported_vector() {
        // Support in t <= 1 forces the ratio below e^{2 eps0}.
        let (_, grid, op) = small_setup(0.3);
        let eps0 = 0.25;
        let t_nodes = grid.t_nodes();
        let v = unit_vector(&op, |m, i, _| {
            if m == 0 && t_nodes[i] <= 0.8 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let ratio = agmon_weighted_mass_of(&op, &v, eps0).unwrap();
        assert!(ratio >= 1.0);
        assert!(ratio <= (2.0 * eps0).exp());
    }

    #[test]
    fn agmon_gaussian_matches_direct_summation_oracle() {
        // Independent dense-summation path over the same quadrature.
        let (cfg, grid, op) = small_setup(0.25);
        let sc = cfg.radial_coefficient().sqrt();
        let t_nodes = grid.t_nodes();
        let v = unit_vector(&op, |m, i, _| {
            if m == 0 {
                Complex64::new((-0.5 * sc * t_nodes[i] * t_nodes[i]).exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let eps0 = 0.25;
        let got = agmon_weighted_mass_of(&op, &v, eps0).unwrap();
        // Oracle: ratio of two weighted masses assembled independently.
        let alpha = cfg.alpha();
        let wm_num = assembly::weighted_mass(&cfg, &grid, |t, p| {
            (2.0 * eps0 * t * (alpha * p).cos()).exp()
        });
        let wm_den = assembly::weighted_mass(&cfg, &grid, |_, _| 1.0);
        let sub: Vec<Complex64> = op.dof_map.mode_range(0).map(|i| v[i]).collect();
        let quadratic = |m: &crate::sparse::CsrMatrix| -> f64 {
            let mut acc = 0.0;
            for r in 0..m.nrows() {
                let (cols, vals) = m.row(r);
                for (c, val) in cols.iter().zip(vals) {
                    acc += (sub[r].conj() * val * sub[*c]).re;
                }
            }
            acc
        };
        let oracle = quadratic(&wm_num) / quadratic(&wm_den);
        assert!(
            (got - oracle).abs() <= 1e-8 * oracle,
            "agmon ratio {got} vs oracle {oracle}"
        );
    }
}

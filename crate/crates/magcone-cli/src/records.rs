//! Output documents: sweep rows, fits, diagnostics, with provenance.

use serde::Serialize;

use crate::config::{RunConfig, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub code_version: String,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        Provenance {
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        }
    }
}

/// One eigenvalue row of a solve or sweep, keyed by `(alpha, beta, n)`.
/// `lambda` is the eigenvalue of the rescaled operator; `big_lambda`
/// is `alpha * lambda`, the eigenvalue of the physical cone operator.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub gamma0_ref: f64,
    /// Whether `alpha * lambda` lies below the essential-spectrum lower bound.
    pub below_threshold: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub alpha: f64,
    pub beta: f64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub n: usize,
    pub beta: f64,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub condition: f64,
    pub reference: f64,
    pub deviation: f64,
    /// Sweep points excluded because `alpha * lambda` reached the
    /// essential-spectrum lower bound.
    pub excluded_alphas: Vec<f64>,
}

/// CSV schema shared by `solve` and `sweep`:
/// `alpha,beta,n,lambda,lambda_over_alpha,gamma0_ref`
/// where the `lambda` column holds the physical eigenvalue `alpha * lambda_n`
/// and `lambda_over_alpha` the rescaled one.
pub fn write_rows_csv(rows: &[SweepRow], w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "alpha,beta,n,lambda,lambda_over_alpha,gamma0_ref")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.12e},{:.12e},{:.12e}",
            r.alpha, r.beta, r.n, r.big_lambda, r.lambda, r.gamma0_ref
        )?;
    }
    Ok(())
}

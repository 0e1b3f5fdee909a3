//! Subcommand implementations. Each writes JSON (and CSV where tabular) into
//! the output directory and returns whether all gates passed.

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

use magcone::assembly::{self, OperatorPair};
use magcone::asymptotics::{self, log_slope};
use magcone::diagnostics;
use magcone::eigen::{self, EigenOptions};
use magcone::models;

use crate::config::RunConfig;
use crate::records::{
    write_rows_csv, FitRecord, Provenance, SweepFailure, SweepRow,
};
use crate::OperatorKind;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    Ok(())
}

#[derive(Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

// ---------------------------------------------------------------------------
// validate-models
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ValidateReport {
    provenance: Provenance,
    checks: Vec<Check>,
}

pub fn validate_models(cfg: &RunConfig) -> Result<bool> {
    let mut checks = Vec::new();

    match models::solve_radial_fd(1.0, 3, 2000, 12.0) {
        Ok(vals) => {
            let targets = [3.0, 7.0, 11.0];
            let worst = vals
                .iter()
                .zip(&targets)
                .map(|(v, t)| (v - t).abs())
                .fold(0.0, f64::max);
            checks.push(check(
                "radial_ladder",
                worst < 1e-6,
                format!("lowest three {vals:?}, max deviation {worst:.2e}"),
            ));
        }
        Err(e) => checks.push(check("radial_ladder", false, e.to_string())),
    }

    for &beta in &[0.0, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2] {
        let c = (1.0 + beta.sin().powi(2)) / 32.0;
        let expected = c.sqrt() * 3.0;
        match models::solve_radial_fd(c, 1, 2000, 16.0) {
            Ok(vals) => {
                let dev = (vals[0] - expected).abs();
                checks.push(check(
                    &format!("radial_scaled_beta_{beta:.4}"),
                    dev < 1e-6,
                    format!("{} vs {expected} (dev {dev:.2e})", vals[0]),
                ));
            }
            Err(e) => checks.push(check(&format!("radial_scaled_beta_{beta:.4}"), false, e.to_string())),
        }
    }

    let t = models::theta0();
    checks.push(check(
        "threshold_window",
        t.theta0 > 0.58 && t.theta0 < 0.60,
        format!("theta0 = {:.6}", t.theta0),
    ));
    checks.push(check(
        "threshold_momentum_identity",
        (t.xi_min * t.xi_min - t.theta0).abs() <= 1e-3,
        format!("xi_min^2 = {:.6} vs theta0 = {:.6}", t.xi_min * t.xi_min, t.theta0),
    ));
    let finer = models::theta0_with_resolution(4000);
    checks.push(check(
        "threshold_resolution_stability",
        (finer.theta0 - t.theta0).abs() <= 1e-4,
        format!("drift {:.2e}", (finer.theta0 - t.theta0).abs()),
    ));

    match (models::disk_magnetic_mu(1.0, 8, 300), models::disk_magnetic_mu(1.0, 10, 600)) {
        (Ok(a), Ok(b)) => {
            checks.push(check(
                "disk_refinement_stability",
                (a - b).abs() <= 1e-4 && a > 0.0 && a <= 0.125,
                format!("mu(1) = {a:.6} / refined {b:.6}"),
            ));
        }
        (a, b) => checks.push(check(
            "disk_refinement_stability",
            false,
            format!("{a:?} / {b:?}"),
        )),
    }

    let report = ValidateReport {
        provenance: Provenance::new(cfg),
        checks,
    };
    write_json(&cfg.out.join("validate_models.json"), &report)?;
    let ok = report.checks.iter().all(|c| c.passed);
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(ok)
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveReport {
    provenance: Provenance,
    rows: Vec<SweepRow>,
    diagnostics: diagnostics::DiagnosticsReport,
    threshold_theta0: f64,
}

fn solve_point(
    cfg: &RunConfig,
    alpha: f64,
    beta: f64,
) -> Result<(OperatorPair, eigen::EigenResult)> {
    let cone = cfg.cone_at(alpha, beta)?;
    let grid = cfg.grid()?;
    let op = assembly::assemble_full(&cone, &grid).map_err(|e| anyhow::anyhow!("{e}"))?;
    let opts = EigenOptions {
        k: cfg.k,
        tol: cfg.tol,
        max_iter: 5000,
        seed: cfg.seed,
    };
    let res = eigen::solve_lowest(&op, &opts).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((op, res))
}

fn rows_from(res: &eigen::EigenResult, alpha: f64, beta: f64, theta0: f64) -> Vec<SweepRow> {
    res.values
        .iter()
        .enumerate()
        .map(|(i, &lambda)| SweepRow {
            alpha,
            beta,
            n: i + 1,
            lambda,
            big_lambda: alpha * lambda,
            residual: res.residuals[i],
            iterations: res.iterations,
            gamma0_ref: asymptotics::gamma0(i + 1, beta),
            below_threshold: alpha * lambda < theta0,
        })
        .collect()
}

pub fn solve(cfg: &RunConfig) -> Result<bool> {
    let threshold = models::theta0().theta0;
    let (op, res) = solve_point(cfg, cfg.alpha, cfg.beta)?;
    // Model ground value for the reduction gap.
    let cone = cfg.cone()?;
    let grid = cfg.grid()?;
    let model = assembly::assemble_model(&cone, &grid).map_err(|e| anyhow::anyhow!("{e}"))?;
    let model_res = eigen::solve_lowest(
        &model,
        &EigenOptions {
            k: 1,
            tol: cfg.tol,
            max_iter: 5000,
            seed: cfg.seed,
        },
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let diag = diagnostics::run_report(&res, &op, cfg.eps0, Some(model_res.values[0]))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let rows = rows_from(&res, cfg.alpha, cfg.beta, threshold);
    let report = SolveReport {
        provenance: Provenance::new(cfg),
        rows: rows.clone(),
        diagnostics: diag,
        threshold_theta0: threshold,
    };
    write_json(&cfg.out.join("solve.json"), &report)?;
    let mut csv = fs::File::create(cfg.out.join("solve.csv"))?;
    write_rows_csv(&rows, &mut csv)?;
    for r in &rows {
        println!(
            "n={} lambda={:.8} Lambda={:.8} residual={:.2e}",
            r.n, r.lambda, r.big_lambda, r.residual
        );
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepReport {
    provenance: Provenance,
    threshold_theta0: f64,
    rows: Vec<SweepRow>,
    failures: Vec<SweepFailure>,
    fits: Vec<FitRecord>,
}

pub fn sweep(cfg: &RunConfig) -> Result<bool> {
    cfg.validate_sweeps()?;
    let threshold = models::theta0().theta0;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for &beta in &cfg.sweep_betas {
        for &alpha in &cfg.sweep_alphas {
            points.push((alpha, beta));
        }
    }
    let outcomes: Vec<std::result::Result<Vec<SweepRow>, SweepFailure>> = points
        .par_iter()
        .map(|&(alpha, beta)| match solve_point(cfg, alpha, beta) {
            Ok((_, res)) => Ok(rows_from(&res, alpha, beta, threshold)),
            Err(e) => Err(SweepFailure {
                alpha,
                beta,
                error: format!("{e:#}"),
            }),
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(mut r) => rows.append(&mut r),
            Err(f) => failures.push(f),
        }
    }
    rows.sort_by(|a, b| {
        (a.alpha, a.beta, a.n)
            .partial_cmp(&(b.alpha, b.beta, b.n))
            .unwrap()
    });

    let mut fits = Vec::new();
    let mut all_ok = failures.is_empty();
    for &beta in &cfg.sweep_betas {
        for n in 1..=cfg.k {
            // Keep only points whose n-th value is certifiably below the
            // essential-spectrum lower bound; the expansion only exists there.
            let usable: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.beta == beta && r.n == n && r.below_threshold)
                .collect();
            let excluded: Vec<f64> = rows
                .iter()
                .filter(|r| r.beta == beta && r.n == n && !r.below_threshold)
                .map(|r| r.alpha)
                .collect();
            let samples: Vec<(f64, f64)> =
                usable.iter().map(|r| (r.alpha, r.big_lambda)).collect();
            match asymptotics::richardson_fit(&samples, cfg.fit_degree) {
                Ok(fit) => {
                    let reference = asymptotics::gamma0(n, beta);
                    let fit = fit.with_reference(reference);
                    fits.push(FitRecord {
                        n,
                        beta,
                        alphas: fit.samples.iter().map(|s| s.0).collect(),
                        lambdas: fit.samples.iter().map(|s| s.1).collect(),
                        gammas: fit.coefficients.clone(),
                        condition: fit.condition,
                        reference,
                        deviation: fit.deviation.unwrap(),
                        excluded_alphas: excluded,
                    });
                }
                Err(e) => {
                    eprintln!("fit refused for n={n}, beta={beta}: {e}");
                    all_ok = false;
                }
            }
        }
    }

    let report = SweepReport {
        provenance: Provenance::new(cfg),
        threshold_theta0: threshold,
        rows: rows.clone(),
        failures,
        fits,
    };
    write_json(&cfg.out.join("sweep.json"), &report)?;
    let mut csv = fs::File::create(cfg.out.join("sweep.csv"))?;
    write_rows_csv(&rows, &mut csv)?;
    for f in &report.fits {
        println!(
            "fit n={} beta={:.4}: gamma_hat0={:.7} (ref {:.7}, dev {:.2e}, cond {:.2e})",
            f.n, f.beta, f.gammas[0], f.reference, f.deviation, f.condition
        );
    }
    Ok(all_ok)
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DiagnoseBetaReport {
    beta: f64,
    alphas: Vec<f64>,
    offmode_fractions: Vec<f64>,
    offmode_slope: Option<f64>,
    phi_fractions: Vec<f64>,
    phi_slope: Option<f64>,
    agmon_masses: Vec<f64>,
    agmon_spread: f64,
    quasimode_distances: Vec<f64>,
    model_deficit_envelope: f64,
    model_gap_slope: f64,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct DiagnoseReport {
    provenance: Provenance,
    per_beta: Vec<DiagnoseBetaReport>,
}

pub fn diagnose(cfg: &RunConfig) -> Result<bool> {
    cfg.validate_sweeps()?;
    let grid = cfg.grid()?;
    let mut per_beta = Vec::new();
    for &beta in &cfg.sweep_betas {
        let mut alphas = Vec::new();
        let mut off = Vec::new();
        let mut phi = Vec::new();
        let mut agm = Vec::new();
        let mut qdist = Vec::new();
        for &alpha in &cfg.sweep_alphas {
            let (op, res) = solve_point(cfg, alpha, beta)?;
            alphas.push(alpha);
            off.push(diagnostics::theta_offmode_fraction(&res, &op, 0).map_err(anyhow::Error::msg)?);
            phi.push(diagnostics::phi_variance_fraction(&res, &op, 0).map_err(anyhow::Error::msg)?);
            agm.push(
                diagnostics::agmon_weighted_mass(&res, &op, 0, cfg.eps0)
                    .map_err(anyhow::Error::msg)?,
            );
            let cone = cfg.cone_at(alpha, beta)?;
            let q = asymptotics::quasimode(&cone, &grid, 1).map_err(anyhow::Error::msg)?;
            let rq = eigen::rayleigh_quotient(&op.stiffness, &op.mass, &q);
            let d = res
                .values
                .iter()
                .map(|v| (v - rq).abs())
                .fold(f64::INFINITY, f64::min);
            qdist.push(d);
        }
        let slope_of = |vals: &[f64], floor: f64| -> Option<f64> {
            let pts: Vec<(f64, f64)> = alphas
                .iter()
                .zip(vals)
                .filter(|&(_, &v)| v > floor)
                .map(|(&a, &v)| (a.ln(), v.ln()))
                .collect();
            (pts.len() >= 2).then(|| log_slope(&pts))
        };
        let offmode_slope = slope_of(&off, 1e-14);
        let phi_slope = slope_of(&phi, 1e-14);
        let agmon_spread = agm.iter().cloned().fold(0.0, f64::max)
            / agm.iter().cloned().fold(f64::INFINITY, f64::min);
        let model = diagnostics::model_reduction_check(
            beta,
            &grid,
            1,
            &cfg.sweep_alphas,
            &EigenOptions {
                k: 1,
                tol: cfg.tol,
                max_iter: 5000,
                seed: cfg.seed,
            },
        )
        .map_err(anyhow::Error::msg)?;

        let mut checks = Vec::new();
        if beta == 0.0 {
            let max_off = off.iter().cloned().fold(0.0, f64::max);
            checks.push(check(
                "offmode_zero_for_aligned_field",
                max_off <= 1e-10,
                format!("max fraction {max_off:.2e}"),
            ));
        } else {
            let slope_text = offmode_slope
                .map(|s| format!("{s:.3}"))
                .unwrap_or_else(|| "n/a".into());
            checks.push(check(
                "offmode_slope",
                offmode_slope.map(|s| s >= 0.5).unwrap_or(false),
                format!("slope {slope_text} (window >= 0.5)"),
            ));
        }
        checks.push(check(
            "agmon_bounded",
            agmon_spread <= 3.0,
            format!("max/min = {agmon_spread:.3}"),
        ));
        checks.push(check(
            "model_deficit_envelope_finite",
            model.deficit_envelope.is_finite(),
            format!("envelope {:.3e}", model.deficit_envelope),
        ));

        // CSV sweep table per beta.
        let path = cfg.out.join(format!("diagnose_beta_{beta:.4}.csv"));
        fs::create_dir_all(&cfg.out)?;
        let mut csv = fs::File::create(path)?;
        writeln!(
            csv,
            "alpha,offmode_fraction,phi_variance_fraction,agmon_mass,quasimode_distance,lambda_model"
        )?;
        for (i, &a) in alphas.iter().enumerate() {
            writeln!(
                csv,
                "{a},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                off[i], phi[i], agm[i], qdist[i], model.rows[i].lambda_model
            )?;
        }

        per_beta.push(DiagnoseBetaReport {
            beta,
            alphas,
            offmode_fractions: off,
            offmode_slope,
            phi_fractions: phi,
            phi_slope,
            agmon_masses: agm,
            agmon_spread,
            quasimode_distances: qdist,
            model_deficit_envelope: model.deficit_envelope,
            model_gap_slope: model.model_gap_slope,
            checks,
        });
    }
    let report = DiagnoseReport {
        provenance: Provenance::new(cfg),
        per_beta,
    };
    write_json(&cfg.out.join("diagnose.json"), &report)?;
    let mut ok = true;
    for b in &report.per_beta {
        for c in &b.checks {
            println!(
                "{} beta={:.4} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                b.beta,
                c.name,
                c.detail
            );
            ok &= c.passed;
        }
    }
    Ok(ok)
}

// ---------------------------------------------------------------------------
// dump-matrix
// ---------------------------------------------------------------------------

pub fn dump_matrix(cfg: &RunConfig, which: OperatorKind) -> Result<bool> {
    let cone = cfg.cone()?;
    let grid = cfg.grid()?;
    let op = match which {
        OperatorKind::Full => assembly::assemble_full(&cone, &grid),
        OperatorKind::Model => assembly::assemble_model(&cone, &grid),
        OperatorKind::Reduced => assembly::assemble_reduced_axisymmetric(&cone, &grid),
    }
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    fs::create_dir_all(&cfg.out)?;
    let mut kf = fs::File::create(cfg.out.join("stiffness.txt"))?;
    op.stiffness.write_triplets(&mut kf)?;
    let mut mf = fs::File::create(cfg.out.join("mass.txt"))?;
    op.mass.write_triplets(&mut mf)?;
    println!(
        "wrote stiffness ({} x {}, {} entries) and mass ({} entries)",
        op.stiffness.nrows(),
        op.stiffness.ncols(),
        op.stiffness.nnz(),
        op.mass.nnz()
    );
    Ok(true)
}

//! Model eigenproblems with known or numerically certified spectra.
//!
//! Three families back the main solver:
//! - the weighted radial oscillator `-t^{-2} d/dt t^2 d/dt + c t^2 (+ omega^2/t^2)`
//!   on `L^2((0,inf), t^2 dt)`, with closed-form eigenvalues
//!   `4n - 2 + sqrt(1 + 4 omega^2)` (unscaled) and `sqrt(c)(4n - 1)` (scaled);
//! - the de Gennes half-line family `-d^2/dtau^2 + (tau - xi)^2` with Neumann
//!   condition at 0, whose minimum over `xi` bounds the essential spectrum;
//! - the magnetic Neumann Laplacian on a disk of radius `rho` with unit field,
//!   reduced over angular modes.
//!
//! All 1D discretizations use cell-centered grids so the weight vanishes (or
//! the flux is dropped) at the singular endpoint and no node sits on it; the
//! natural boundary condition is inherited from the quadratic form.

use thiserror::Error;

use crate::quad;

/// Drift tolerance for the internal grid-doubling check of [`solve_radial_fd`].
pub const RADIAL_DRIFT_TOL: f64 = 1e-6;
/// Relative stability tolerance for the disk refinement check.
pub const DISK_REFINEMENT_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bad arguments: {0}")]
    BadArguments(String),
    #[error("convergence failure: Richardson drift {drift:.3e} exceeds tolerance {tol:.1e}")]
    ConvergenceFailure { drift: f64, tol: f64 },
    #[error("refinement instability: value moved by {drift:.3e} (tolerance {tol:.1e})")]
    RefinementUnstable { drift: f64, tol: f64 },
}

/// Eigenvalue data of the radial model operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialEigenpair {
    /// Eigenvalue index, 1-based.
    pub n: usize,
    /// Angular parameter of the `omega^2/t^2` term.
    pub omega: f64,
    /// Scale of the quadratic potential (`c t^2`); 1 for the unscaled family.
    pub scale: f64,
    /// The eigenvalue.
    pub value: f64,
}

/// Endpoint data of the half-space threshold curve.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ThresholdTable {
    /// Bottom of the de Gennes family (tangent-field endpoint).
    pub theta0: f64,
    /// Minimizing momentum of the de Gennes curve.
    pub xi_min: f64,
    /// Normal-field endpoint value (exactly 1).
    pub sigma_perp: f64,
}

/// Eigenvalue `4n - 2 + sqrt(1 + 4 omega^2)` of the unscaled radial operator.
pub fn radial_eigenvalue(omega: f64, n: usize) -> f64 {
    assert!(omega >= 0.0 && n >= 1, "need omega >= 0 and n >= 1");
    4.0 * n as f64 - 2.0 + (1.0 + 4.0 * omega * omega).sqrt()
}

/// Closed-form eigenvalue data of `-t^{-2} d/dt t^2 d/dt + c t^2 + omega^2/t^2`;
/// for `omega > 0` the potential scale must be 1 (no closed form otherwise).
pub fn radial_eigenpair(omega: f64, n: usize, scale: f64) -> RadialEigenpair {
    assert!(scale > 0.0 && (omega == 0.0 || scale == 1.0));
    let value = if omega == 0.0 {
        scale.sqrt() * (4.0 * n as f64 - 1.0)
    } else {
        radial_eigenvalue(omega, n)
    };
    RadialEigenpair {
        n,
        omega,
        scale,
        value,
    }
}

/// Normalized eigenfunction of the radial operator on `L^2(t^2 dt)`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    n: usize,
    sigma: f64,
    sqrt_c: f64,
    norm: f64,
}

impl RadialProfile {
    pub fn eval(&self, t: f64) -> f64 {
        let x = self.sqrt_c * t * t;
        let lag = laguerre(self.n - 1, self.sigma + 0.5, x);
        self.norm * t.powf(self.sigma) * lag * (-0.5 * x).exp()
    }
}

/// Scaled radial eigenpair: value `sqrt(c) (4n - 1)` and the unit-norm
/// eigenfunction of `-t^{-2} d/dt t^2 d/dt + c t^2` on `L^2(R_+, t^2 dt)`.
pub fn scaled_radial_eigenpair(c: f64, n: usize) -> (f64, RadialProfile) {
    assert!(c > 0.0 && n >= 1, "need c > 0 and n >= 1");
    let value = c.sqrt() * (4.0 * n as f64 - 1.0);
    // ||t^sigma L e^{-sqrt(c) t^2/2}||^2_{t^2 dt} = Gamma(n + 1/2) / (2 c^{3/4} (n-1)!)
    let norm = (2.0 * c.powf(0.75) * factorial(n - 1) / gamma_half_integer(n)).sqrt();
    (
        value,
        RadialProfile {
            n,
            sigma: 0.0,
            sqrt_c: c.sqrt(),
            norm,
        },
    )
}

/// Unit-norm eigenfunction of the unscaled operator with angular parameter
/// `omega`, built from generalized Laguerre functions with exponent
/// `sigma = (-1 + sqrt(1 + 4 omega^2)) / 2`; validated against the 1D
/// eigensolver since the polynomial normalization is not pinned elsewhere.
pub fn radial_profile(omega: f64, n: usize) -> RadialProfile {
    assert!(omega >= 0.0 && n >= 1);
    let sigma = 0.5 * (-1.0 + (1.0 + 4.0 * omega * omega).sqrt());
    let mut profile = RadialProfile {
        n,
        sigma,
        sqrt_c: 1.0,
        norm: 1.0,
    };
    // Quadrature normalization; the integrand decays like e^{-t^2}.
    let norm2 = quad::integrate(0.0, 14.0, 160, |t| {
        let f = profile.eval(t);
        f * f * t * t
    });
    profile.norm = norm2.sqrt().recip();
    profile
}

/// Lowest `k` eigenvalues of the cell-centered discretization of
/// `-t^{-2} d/dt t^2 d/dt + c t^2` with Dirichlet cut at `t_max`.
///
/// The underlying scheme is second order in the grid spacing; the returned
/// values combine the `n`- and `2n`-cell ladders (Richardson), and the call
/// fails if a third ladder level disagrees with the combination by more than
/// [`RADIAL_DRIFT_TOL`].
pub fn solve_radial_fd(c: f64, k: usize, n: usize, t_max: f64) -> Result<Vec<f64>, ModelError> {
    if !(c > 0.0) || k == 0 {
        return Err(ModelError::BadArguments(format!("c={c}, k={k}")));
    }
    if n < 50 {
        return Err(ModelError::BadArguments(format!("n={n} < 50")));
    }
    if c.sqrt() * t_max * t_max < 40.0 {
        return Err(ModelError::BadArguments(format!(
            "t_max={t_max} too small for c={c}: sqrt(c) t_max^2 < 40"
        )));
    }
    let solve = |cells: usize| radial_lowest(c, k, cells, t_max);
    let coarse = solve(n / 2);
    let mid = solve(n);
    let fine = solve(2 * n);
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let ext1 = (4.0 * fine[j] - mid[j]) / 3.0;
        let ext0 = (4.0 * mid[j] - coarse[j]) / 3.0;
        let drift = (ext1 - ext0).abs();
        if drift > RADIAL_DRIFT_TOL {
            return Err(ModelError::ConvergenceFailure {
                drift,
                tol: RADIAL_DRIFT_TOL,
            });
        }
        out.push(ext1);
    }
    Ok(out)
}

fn radial_lowest(c: f64, k: usize, cells: usize, t_max: f64) -> Vec<f64> {
    let tri = SymTridiag::from_fv(
        cells,
        t_max,
        |t| t * t,
        |t| c * t * t,
        BoundaryRight::Dirichlet,
    );
    tri.lowest(k)
}

/// Lowest Neumann eigenvalue of `-d^2/dtau^2 + (tau - xi)^2` on `(0, tau_max)`.
pub fn de_gennes_mu(xi: f64, n: usize, tau_max: f64) -> f64 {
    assert!(
        tau_max >= xi.abs() + 10.0,
        "tau_max must exceed |xi| + 10 for a negligible truncation tail"
    );
    assert!(n >= 100, "need at least 100 cells");
    let solve = |cells: usize| {
        SymTridiag::from_fv(
            cells,
            tau_max,
            |_| 1.0,
            |tau| (tau - xi) * (tau - xi),
            BoundaryRight::Dirichlet,
        )
        .lowest(1)[0]
    };
    let mid = solve(n);
    let fine = solve(2 * n);
    (4.0 * fine - mid) / 3.0
}

/// Minimize the de Gennes curve by golden-section search.
///
/// Returns the bottom of the curve, the minimizing momentum, and the
/// normal-field endpoint value 1.
pub fn theta0() -> ThresholdTable {
    theta0_with_resolution(2000)
}

/// Resolution-parameterized variant used by the stability checks.
pub fn theta0_with_resolution(n: usize) -> ThresholdTable {
    let tau_max = 14.0;
    let f = |xi: f64| de_gennes_mu(xi, n, tau_max);
    let (xi_min, theta0) = golden_min(f, 0.2, 1.4, 1e-7);
    ThresholdTable {
        theta0,
        xi_min,
        sigma_perp: 1.0,
    }
}

/// Lowest Neumann eigenvalue of the unit-field magnetic Laplacian on the disk
/// of radius `rho`, via the symmetric-gauge angular-mode reduction
/// `-(1/r) d/dr r d/dr + (m/r + r/2)^2` over modes `|m| <= m_modes`.
///
/// Returns the refined value (modes `m_modes + 2`, `2 n_radial` cells) and
/// fails if refinement moves the value by more than [`DISK_REFINEMENT_TOL`]
/// relatively.
pub fn disk_magnetic_mu(rho: f64, m_modes: usize, n_radial: usize) -> Result<f64, ModelError> {
    if !(rho > 0.0) || n_radial < 50 {
        return Err(ModelError::BadArguments(format!(
            "rho={rho}, n_radial={n_radial}"
        )));
    }
    let coarse = disk_mu_raw(rho, m_modes, n_radial);
    let fine = disk_mu_raw(rho, m_modes + 2, 2 * n_radial);
    let drift = (fine - coarse).abs();
    let tol = DISK_REFINEMENT_TOL * fine.abs().max(1e-6);
    if drift > tol {
        return Err(ModelError::RefinementUnstable { drift, tol });
    }
    Ok(fine)
}

fn disk_mu_raw(rho: f64, m_modes: usize, n_radial: usize) -> f64 {
    let mut best = f64::INFINITY;
    for m in -(m_modes as i64)..=(m_modes as i64) {
        let tri = SymTridiag::from_fv(
            n_radial,
            rho,
            |r| r,
            |r| {
                let v = m as f64 / r + 0.5 * r;
                v * v
            },
            BoundaryRight::Neumann,
        );
        best = best.min(tri.lowest(1)[0]);
    }
    best
}

// ---------------------------------------------------------------------------
// Cell-centered finite-volume tridiagonal problems and Sturm bisection.
// ---------------------------------------------------------------------------

enum BoundaryRight {
    Dirichlet,
    Neumann,
}

/// Symmetric tridiagonal matrix, the mass-symmetrized form of a weighted
/// Sturm-Liouville discretization.
struct SymTridiag {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiag {
    /// Cell-centered flux discretization of `-(1/w) d/dx (w du/dx) + V u` on
    /// `(0, x_max)`, generalized against the mass `diag(w_i h)` and
    /// symmetrized. The left boundary carries no flux (natural/Neumann).
    fn from_fv(
        cells: usize,
        x_max: f64,
        weight: impl Fn(f64) -> f64,
        potential: impl Fn(f64) -> f64,
        right: BoundaryRight,
    ) -> Self {
        let n = cells;
        let h = x_max / n as f64;
        let centers: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let w: Vec<f64> = centers.iter().map(|&x| weight(x)).collect();
        let mut t_diag = vec![0.0; n];
        let mut t_off = vec![0.0; n - 1];
        for i in 1..n {
            let wf = weight(i as f64 * h) / h;
            t_diag[i - 1] += wf;
            t_diag[i] += wf;
            t_off[i - 1] -= wf;
        }
        if let BoundaryRight::Dirichlet = right {
            t_diag[n - 1] += 2.0 * weight(x_max) / h;
        }
        for i in 0..n {
            t_diag[i] += potential(centers[i]) * w[i] * h;
        }
        let diag: Vec<f64> = (0..n).map(|i| t_diag[i] / (w[i] * h)).collect();
        let off: Vec<f64> = (0..n - 1)
            .map(|i| t_off[i] / (h * (w[i] * w[i + 1]).sqrt()))
            .collect();
        SymTridiag { diag, off }
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0usize;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            let denom = if q.abs() < 1e-300 {
                1e-300_f64.copysign(if q == 0.0 { 1.0 } else { q })
            } else {
                q
            };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k` lowest eigenvalues by bisection.
    fn lowest(&self, k: usize) -> Vec<f64> {
        let n = self.diag.len();
        assert!(k <= n);
        // Gershgorin bounds.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i < n - 1 {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (0..k)
            .map(|j| {
                let mut a = lo;
                let mut b = hi;
                for _ in 0..140 {
                    let m = 0.5 * (a + b);
                    if b - a <= 1e-14 * m.abs().max(1.0) {
                        break;
                    }
                    if self.count_below(m) >= j + 1 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                0.5 * (a + b)
            })
            .collect()
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, fc.min(fd))
}

fn laguerre(k: usize, a: f64, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut l0 = 1.0;
    let mut l1 = 1.0 + a - x;
    for j in 1..k {
        let jf = j as f64;
        let l2 = ((2.0 * jf + 1.0 + a - x) * l1 - (jf + a) * l0) / (jf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Gamma(n + 1/2) for integer n >= 1.
fn gamma_half_integer(n: usize) -> f64 {
    let mut g = std::f64::consts::PI.sqrt(); // Gamma(1/2)
    for j in 0..n {
        g *= j as f64 + 0.5;
    }
    g
}

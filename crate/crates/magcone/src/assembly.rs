//! Fourier-Galerkin x bilinear-element discretization of the gauged quadratic
//! form on the box `(0, t_max) x theta x (0, 1/2)`.
//!
//! Basis: `chi_i(t) eta_j(phi) e^{i m theta} / sqrt(2 pi)` with `chi`, `eta`
//! piecewise-linear hats on cell-centered nodes (`t_i = (i + 1/2) t_max/n_t`,
//! `phi_j = (j + 1/2) / (2 n_phi)`). The outermost half-cells carry a constant
//! extension at natural boundaries (`t = 0`, `phi = 0`, `phi = 1/2`) and a
//! linear ramp to zero at `t = t_max`, which imposes the Dirichlet truncation
//! without placing a node there. All integrals use a 2x2 Gauss rule per cell,
//! so the singular coefficients `1/(t^2 sin^2(alpha phi))` and
//! `1/(alpha^2 t^2)` are only evaluated at interior points.
//!
//! The azimuthal factors couple Fourier modes with bandwidth at most 2:
//! `cos(theta)`/`sin(theta)` factors shift `m` by one, their squares and
//! products by zero or two. The assembled stiffness is Hermitian bitwise.

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{one_minus_sinc, ConeConfig};
use crate::quad::GAUSS2;
use crate::sparse::CsrMatrix;

pub mod collocation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("singular quadrature: non-finite coefficient at t={t}, phi={phi}")]
    NonFiniteCoefficient { t: f64, phi: f64 },
}

/// Discretization parameters of the tensor grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TensorGrid {
    n_t: usize,
    n_phi: usize,
    m_max: usize,
    t_max: f64,
}

impl TensorGrid {
    /// Production constructor; enforces the minimum resolutions
    /// (`n_t >= 8`, `n_phi >= 4`) and a positive radial truncation.
    pub fn new(n_t: usize, n_phi: usize, m_max: usize, t_max: f64) -> Result<Self, AssemblyError> {
        if n_t < 8 || n_phi < 4 || !(t_max > 0.0) || !t_max.is_finite() {
            return Err(AssemblyError::InvalidGrid(format!(
                "n_t={n_t}, n_phi={n_phi}, t_max={t_max} (need n_t >= 8, n_phi >= 4, t_max > 0)"
            )));
        }
        Ok(TensorGrid {
            n_t,
            n_phi,
            m_max,
            t_max,
        })
    }

    /// Constructor without the minimum-resolution guard, for convergence
    /// ladders and entrywise oracles on deliberately tiny grids.
    pub fn unchecked(n_t: usize, n_phi: usize, m_max: usize, t_max: f64) -> Self {
        assert!(n_t >= 2 && n_phi >= 2 && t_max > 0.0);
        TensorGrid {
            n_t,
            n_phi,
            m_max,
            t_max,
        }
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn t_step(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    pub fn phi_step(&self) -> f64 {
        0.5 / self.n_phi as f64
    }

    /// Cell-centered radial nodes `(i + 1/2) t_max / n_t`.
    pub fn t_nodes(&self) -> Vec<f64> {
        let h = self.t_step();
        (0..self.n_t).map(|i| (i as f64 + 0.5) * h).collect()
    }

    /// Cell-centered polar nodes `(j + 1/2) / (2 n_phi)`.
    pub fn phi_nodes(&self) -> Vec<f64> {
        let d = self.phi_step();
        (0..self.n_phi).map(|j| (j as f64 + 0.5) * d).collect()
    }

    /// Degrees of freedom per Fourier mode.
    pub fn n2d(&self) -> usize {
        self.n_t * self.n_phi
    }

    /// Number of retained Fourier modes, `2 m_max + 1`.
    pub fn n_modes(&self) -> usize {
        2 * self.m_max + 1
    }

    /// Total complex dimension.
    pub fn dim(&self) -> usize {
        self.n_modes() * self.n2d()
    }

    pub fn with_m_max(&self, m_max: usize) -> TensorGrid {
        TensorGrid { m_max, ..*self }
    }

    pub fn dof_map(&self) -> DofMap {
        DofMap {
            n_t: self.n_t,
            n_phi: self.n_phi,
            m_max: self.m_max,
        }
    }
}

/// Index map `(mode m, t-index, phi-index) -> row`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DofMap {
    pub n_t: usize,
    pub n_phi: usize,
    pub m_max: usize,
}

impl DofMap {
    pub fn index(&self, m: i64, i: usize, j: usize) -> usize {
        debug_assert!(m.unsigned_abs() as usize <= self.m_max && i < self.n_t && j < self.n_phi);
        ((m + self.m_max as i64) as usize * self.n_t + i) * self.n_phi + j
    }

    pub fn n2d(&self) -> usize {
        self.n_t * self.n_phi
    }

    pub fn dim(&self) -> usize {
        (2 * self.m_max + 1) * self.n2d()
    }

    /// Row range of one Fourier-mode block.
    pub fn mode_range(&self, m: i64) -> std::ops::Range<usize> {
        let base = (m + self.m_max as i64) as usize * self.n2d();
        base..base + self.n2d()
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let mm = self.m_max as i64;
        -mm..=mm
    }
}

/// Pointwise coefficients of the gauged form, all real and finite away from
/// the coordinate axes.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientSet {
    alpha: f64,
    sin_beta: f64,
    cos_beta: f64,
}

impl CoefficientSet {
    pub fn new(cfg: &ConeConfig) -> Self {
        CoefficientSet {
            alpha: cfg.alpha(),
            sin_beta: cfg.beta().sin(),
            cos_beta: cfg.beta().cos(),
        }
    }

    /// Measure density `t^2 sin(alpha phi)`.
    pub fn weight(&self, t: f64, phi: f64) -> f64 {
        t * t * (self.alpha * phi).sin()
    }

    /// Radial potential amplitude: `A_t = a_t(t, phi) cos(theta)` with
    /// `a_t = t phi sin(beta)`.
    pub fn a_t_amplitude(&self, t: f64, phi: f64) -> f64 {
        t * phi * self.sin_beta
    }

    /// Azimuthal potential, mode-diagonal part:
    /// `t^2 sin^2(alpha phi) cos(beta) / (2 alpha)`.
    pub fn a_theta1(&self, t: f64, phi: f64) -> f64 {
        t * t * (self.alpha * phi).sin().powi(2) * self.cos_beta / (2.0 * self.alpha)
    }

    /// Azimuthal potential, `sin(theta)` amplitude:
    /// `(t^2 phi / 2) (1 - sin(2 alpha phi)/(2 alpha phi)) sin(beta)`.
    pub fn a_theta2_amplitude(&self, t: f64, phi: f64) -> f64 {
        0.5 * t * t * phi * one_minus_sinc(2.0 * self.alpha * phi) * self.sin_beta
    }

    /// `1 / (t^2 sin^2(alpha phi))`.
    pub fn inv_s2(&self, t: f64, phi: f64) -> f64 {
        (t * t * (self.alpha * phi).sin().powi(2)).recip()
    }

    /// `1 / (alpha^2 t^2)`.
    pub fn inv_a2t2(&self, t: f64) -> f64 {
        (self.alpha * self.alpha * t * t).recip()
    }

    /// Electric potential of the axisymmetric model operator:
    /// `2^{-4} cos^2(alpha phi) t^2 sin^2(beta)`.
    pub fn electric_model(&self, t: f64, phi: f64) -> f64 {
        (self.alpha * phi).cos().powi(2) * t * t * self.sin_beta * self.sin_beta / 16.0
    }
}

/// Assembled Hermitian stiffness and positive-definite mass.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub dof_map: DofMap,
    pub grid: TensorGrid,
    pub cfg: ConeConfig,
    /// Largest `|delta m|` with structurally present couplings (0 or 2).
    pub mode_bandwidth: usize,
}

impl OperatorPair {
    pub fn dim(&self) -> usize {
        self.dof_map.dim()
    }

    /// Mode block of the stiffness (square, one Fourier mode).
    pub fn stiffness_block(&self, m: i64) -> CsrMatrix {
        self.stiffness.block(self.dof_map.mode_range(m))
    }

    pub fn mass_block(&self, m: i64) -> CsrMatrix {
        self.mass.block(self.dof_map.mode_range(m))
    }
}

// Table slots filled during the element sweep.
const T_MASS: usize = 0;
const T_ST: usize = 1; // d_t d_t, weight w
const T_SP: usize = 2; // d_phi d_phi, weight q w
const T_A2: usize = 3; // value-value, a_t^2 w
const T_C1: usize = 4; // (d_t trial)(test), a_t w
const T_GW: usize = 5; // value-value, g w
const T_GBW: usize = 6; // value-value, g b w
const T_GB2W: usize = 7; // value-value, g b^2 w
const T_GSW: usize = 8; // value-value, g s w
const T_GBSW: usize = 9; // value-value, g b s w
const T_GS2W: usize = 10; // value-value, g s^2 w
const T_ELEC: usize = 11; // value-value, electric model potential x w
const T_C1A: usize = 12; // post-pass: C1 - C1^T
const N_TABLES: usize = 13;

struct Tables {
    entries: Vec<(u32, u32, [f64; N_TABLES])>,
}

/// Assemble the full gauged form: radial, azimuthal and polar covariant terms
/// with every mode coupling.
pub fn assemble_full(cfg: &ConeConfig, grid: &TensorGrid) -> Result<OperatorPair, AssemblyError> {
    let coef = CoefficientSet::new(cfg);
    let tables = build_tables(&coef, grid)?;
    let coupled = coef.sin_beta != 0.0;
    let bandwidth = if coupled { 2 } else { 0 };
    let dof = grid.dof_map();
    let n2d = grid.n2d();
    let mut trips: Vec<(usize, usize, Complex64)> = Vec::new();
    let modes: Vec<i64> = dof.modes().collect();
    for &(p, q, ref v) in &tables.entries {
        let (p, q) = (p as usize, q as usize);
        let diag_base = v[T_ST] + v[T_SP] + v[T_GB2W];
        let diag_coupled = 0.5 * v[T_A2] + 0.5 * v[T_GS2W];
        for &r in &modes {
            let rf = r as f64;
            let base = dof.mode_range(r).start;
            let mut d0 = diag_base + rf * rf * v[T_GW] + 2.0 * rf * v[T_GBW];
            if coupled {
                d0 += diag_coupled;
            }
            trips.push((base + p, base + q, Complex64::new(d0, 0.0)));
            if !coupled {
                continue;
            }
            // The grouped azimuthal coupling (2r+1) g s w + 2 g b s w must be
            // evaluated with the same association on both sides of the
            // diagonal so the assembled matrix is Hermitian bitwise.
            // row r, col r+1
            if r + 1 <= grid.m_max() as i64 {
                let cbase = dof.mode_range(r + 1).start;
                let s_up = (2.0 * rf + 1.0) * v[T_GSW] + 2.0 * v[T_GBSW];
                let im = 0.5 * (v[T_C1A] + s_up);
                trips.push((base + p, cbase + q, Complex64::new(0.0, im)));
            }
            // row r, col r-1
            if r - 1 >= -(grid.m_max() as i64) {
                let cbase = dof.mode_range(r - 1).start;
                let s_dn = (2.0 * rf - 1.0) * v[T_GSW] + 2.0 * v[T_GBSW];
                let im = 0.5 * (v[T_C1A] - s_dn);
                trips.push((base + p, cbase + q, Complex64::new(0.0, im)));
            }
            // row r, col r+-2
            let two = 0.25 * (v[T_A2] - v[T_GS2W]);
            if r + 2 <= grid.m_max() as i64 {
                let cbase = dof.mode_range(r + 2).start;
                trips.push((base + p, cbase + q, Complex64::new(two, 0.0)));
            }
            if r - 2 >= -(grid.m_max() as i64) {
                let cbase = dof.mode_range(r - 2).start;
                trips.push((base + p, cbase + q, Complex64::new(two, 0.0)));
            }
        }
    }
    let dim = dof.dim();
    let stiffness = CsrMatrix::from_triplets(dim, dim, trips);
    let mass = mass_from_tables(&tables, &dof, n2d);
    debug_assert!(stiffness.is_hermitian());
    Ok(OperatorPair {
        stiffness,
        mass,
        dof_map: dof,
        grid: *grid,
        cfg: *cfg,
        mode_bandwidth: bandwidth,
    })
}

/// Assemble the axisymmetric model form: plain radial derivative, electric
/// potential `2^{-4} cos^2(alpha phi) t^2 sin^2(beta)`, azimuthal term with
/// the mode-diagonal potential only. Block-diagonal over modes for every tilt.
pub fn assemble_model(cfg: &ConeConfig, grid: &TensorGrid) -> Result<OperatorPair, AssemblyError> {
    let coef = CoefficientSet::new(cfg);
    let tables = build_tables(&coef, grid)?;
    let dof = grid.dof_map();
    let n2d = grid.n2d();
    let mut trips: Vec<(usize, usize, Complex64)> = Vec::new();
    for &(p, q, ref v) in &tables.entries {
        let (p, q) = (p as usize, q as usize);
        let diag_base = v[T_ST] + v[T_SP] + v[T_GB2W] + v[T_ELEC];
        for r in dof.modes() {
            let rf = r as f64;
            let base = dof.mode_range(r).start;
            let d0 = diag_base + rf * rf * v[T_GW] + 2.0 * rf * v[T_GBW];
            trips.push((base + p, base + q, Complex64::new(d0, 0.0)));
        }
    }
    let dim = dof.dim();
    let stiffness = CsrMatrix::from_triplets(dim, dim, trips);
    let mass = mass_from_tables(&tables, &dof, n2d);
    Ok(OperatorPair {
        stiffness,
        mass,
        dof_map: dof,
        grid: *grid,
        cfg: *cfg,
        mode_bandwidth: 0,
    })
}

/// The `m = 0` block of the model operator as a standalone 2D pair.
pub fn assemble_reduced_axisymmetric(
    cfg: &ConeConfig,
    grid: &TensorGrid,
) -> Result<OperatorPair, AssemblyError> {
    let axi = grid.with_m_max(0);
    assemble_model(cfg, &axi)
}

/// Weighted mass matrix of one mode block: entries
/// `int f(t, phi) t^2 sin(alpha phi) chi_p chi_q dt dphi`
/// with the same quadrature as the operator assembly.
pub fn weighted_mass(
    cfg: &ConeConfig,
    grid: &TensorGrid,
    f: impl Fn(f64, f64) -> f64,
) -> CsrMatrix {
    let coef = CoefficientSet::new(cfg);
    let n2d = grid.n2d();
    let mut trips: Vec<(usize, usize, Complex64)> = Vec::new();
    sweep_elements(grid, |t, phi, jac, pts| {
        let w = coef.weight(t, phi) * f(t, phi) * jac;
        for &(pi, vi, _, _) in pts {
            for &(pj, vj, _, _) in pts {
                trips.push((pi, pj, Complex64::new(w * vi * vj, 0.0)));
            }
        }
    });
    CsrMatrix::from_triplets(n2d, n2d, trips)
}

/// 1D mass matrix over the radial basis with pointwise weight `f(t)`.
pub fn t_mass_1d(grid: &TensorGrid, f: impl Fn(f64) -> f64) -> nalgebra::DMatrix<f64> {
    basis_mass_1d(&t_basis(grid), grid.n_t(), f)
}

/// 1D mass matrix over the polar basis with pointwise weight `f(phi)`.
pub fn phi_mass_1d(grid: &TensorGrid, f: impl Fn(f64) -> f64) -> nalgebra::DMatrix<f64> {
    basis_mass_1d(&phi_basis(grid), grid.n_phi(), f)
}

fn basis_mass_1d(segs: &[Segment], n: usize, f: impl Fn(f64) -> f64) -> nalgebra::DMatrix<f64> {
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for seg in segs {
        for &(gx, gw) in &GAUSS2 {
            let x = seg.map(gx);
            let jac = seg.half_width();
            let shapes = seg.eval(x);
            for &(i, vi, _) in shapes.iter().flatten() {
                for &(j, vj, _) in shapes.iter().flatten() {
                    m[(i, j)] += f(x) * vi * vj * gw * jac;
                }
            }
        }
    }
    m
}

// ---------------------------------------------------------------------------
// 1D segment bases
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum SegKind {
    /// Half-cell at the lower boundary: the first node's shape is constant 1.
    ConstLow(usize),
    /// Interior cell between nodes `i` and `i+1`.
    Interior(usize),
    /// Half-cell at the upper boundary with constant extension (natural BC).
    ConstHigh(usize),
    /// Half-cell at the upper boundary ramping to zero (Dirichlet).
    RampHigh(usize),
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    x0: f64,
    x1: f64,
    kind: SegKind,
}

impl Segment {
    fn half_width(&self) -> f64 {
        0.5 * (self.x1 - self.x0)
    }

    fn map(&self, xi: f64) -> f64 {
        0.5 * (self.x0 + self.x1) + self.half_width() * xi
    }

    /// Shape values and derivatives of the (at most two) active dofs at `x`.
    fn eval(&self, x: f64) -> [Option<(usize, f64, f64)>; 2] {
        let len = self.x1 - self.x0;
        match self.kind {
            SegKind::ConstLow(i) | SegKind::ConstHigh(i) => [Some((i, 1.0, 0.0)), None],
            SegKind::RampHigh(i) => [Some((i, (self.x1 - x) / len, -1.0 / len)), None],
            SegKind::Interior(i) => [
                Some((i, (self.x1 - x) / len, -1.0 / len)),
                Some((i + 1, (x - self.x0) / len, 1.0 / len)),
            ],
        }
    }
}

fn segments(nodes: &[f64], x_max: f64, dirichlet_high: bool) -> Vec<Segment> {
    let n = nodes.len();
    let mut segs = Vec::with_capacity(n + 1);
    segs.push(Segment {
        x0: 0.0,
        x1: nodes[0],
        kind: SegKind::ConstLow(0),
    });
    for i in 0..n - 1 {
        segs.push(Segment {
            x0: nodes[i],
            x1: nodes[i + 1],
            kind: SegKind::Interior(i),
        });
    }
    segs.push(Segment {
        x0: nodes[n - 1],
        x1: x_max,
        kind: if dirichlet_high {
            SegKind::RampHigh(n - 1)
        } else {
            SegKind::ConstHigh(n - 1)
        },
    });
    segs
}

fn t_basis(grid: &TensorGrid) -> Vec<Segment> {
    segments(&grid.t_nodes(), grid.t_max(), true)
}

fn phi_basis(grid: &TensorGrid) -> Vec<Segment> {
    segments(&grid.phi_nodes(), 0.5, false)
}

/// Sweep all 2D elements; the callback receives the Gauss point, its measure
/// jacobian, and the active 2D dofs as `(index, value, d/dt, d/dphi)`.
fn sweep_elements(
    grid: &TensorGrid,
    mut visit: impl FnMut(f64, f64, f64, &[(usize, f64, f64, f64)]),
) {
    let tsegs = t_basis(grid);
    let psegs = phi_basis(grid);
    let n_phi = grid.n_phi();
    let mut pts: Vec<(usize, f64, f64, f64)> = Vec::with_capacity(4);
    for ts in &tsegs {
        for ps in &psegs {
            for &(gt, wt) in &GAUSS2 {
                let t = ts.map(gt);
                let shapes_t = ts.eval(t);
                for &(gp, wp) in &GAUSS2 {
                    let phi = ps.map(gp);
                    let shapes_p = ps.eval(phi);
                    let jac = wt * ts.half_width() * wp * ps.half_width();
                    pts.clear();
                    for &(it, vt, dvt) in shapes_t.iter().flatten() {
                        for &(jp, vp, dvp) in shapes_p.iter().flatten() {
                            pts.push((it * n_phi + jp, vt * vp, dvt * vp, vt * dvp));
                        }
                    }
                    visit(t, phi, jac, &pts);
                }
            }
        }
    }
}

fn build_tables(coef: &CoefficientSet, grid: &TensorGrid) -> Result<Tables, AssemblyError> {
    let mut raw: Vec<(u32, u32, [f64; N_TABLES])> = Vec::new();
    let mut bad: Option<(f64, f64)> = None;
    sweep_elements(grid, |t, phi, jac, pts| {
        let w = coef.weight(t, phi);
        let a = coef.a_t_amplitude(t, phi);
        let b = coef.a_theta1(t, phi);
        let s = coef.a_theta2_amplitude(t, phi);
        let g = coef.inv_s2(t, phi);
        let q = coef.inv_a2t2(t);
        let elec = coef.electric_model(t, phi);
        let vals = [
            w,
            a * a * w,
            a * w,
            g * w,
            g * b * w,
            g * b * b * w,
            g * s * w,
            g * b * s * w,
            g * s * s * w,
            q * w,
            elec * w,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            bad.get_or_insert((t, phi));
            return;
        }
        let (w, a2w, aw, gw, gbw, gb2w, gsw, gbsw, gs2w, qw, elw) = (
            vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7], vals[8],
            vals[9], vals[10],
        );
        for &(pi, vi, dti, dpi) in pts {
            for &(pj, vj, dtj, dpj) in pts {
                // Pair products first: multiplication commutes exactly, so
                // the (p,q) and (q,p) entries come out bitwise symmetric.
                let vv = vi * vj;
                let tt = dti * dtj;
                let pp = dpi * dpj;
                let mut e = [0.0; N_TABLES];
                e[T_MASS] = w * vv * jac;
                e[T_ST] = w * tt * jac;
                e[T_SP] = qw * pp * jac;
                e[T_A2] = a2w * vv * jac;
                e[T_C1] = aw * dtj * vi * jac;
                e[T_GW] = gw * vv * jac;
                e[T_GBW] = gbw * vv * jac;
                e[T_GB2W] = gb2w * vv * jac;
                e[T_GSW] = gsw * vv * jac;
                e[T_GBSW] = gbsw * vv * jac;
                e[T_GS2W] = gs2w * vv * jac;
                e[T_ELEC] = elw * vv * jac;
                raw.push((pi as u32, pj as u32, e));
            }
        }
    });
    if let Some((t, phi)) = bad {
        return Err(AssemblyError::NonFiniteCoefficient { t, phi });
    }
    // Merge duplicates in insertion order (stable sort keeps the per-entry
    // contribution sequence identical for (p,q) and (q,p)).
    raw.sort_by_key(|&(p, q, _)| (p, q));
    let mut entries: Vec<(u32, u32, [f64; N_TABLES])> = Vec::new();
    for (p, q, e) in raw {
        match entries.last_mut() {
            Some(last) if last.0 == p && last.1 == q => {
                for k in 0..N_TABLES {
                    last.2[k] += e[k];
                }
            }
            _ => entries.push((p, q, e)),
        }
    }
    // Antisymmetrized radial coupling table C1 - C1^T.
    let index: Vec<(u32, u32)> = entries.iter().map(|&(p, q, _)| (p, q)).collect();
    let c1: Vec<f64> = entries.iter().map(|e| e.2[T_C1]).collect();
    for k in 0..entries.len() {
        let (p, q, _) = entries[k];
        let tpos = index.binary_search(&(q, p)).expect("pattern is symmetric");
        entries[k].2[T_C1A] = c1[k] - c1[tpos];
    }
    Ok(Tables { entries })
}

fn mass_from_tables(tables: &Tables, dof: &DofMap, n2d: usize) -> CsrMatrix {
    let dim = dof.dim();
    let mut trips: Vec<(usize, usize, Complex64)> = Vec::with_capacity(tables.entries.len() * (2 * dof.m_max + 1));
    for &(p, q, ref v) in &tables.entries {
        for r in dof.modes() {
            let base = dof.mode_range(r).start;
            trips.push((
                base + p as usize,
                base + q as usize,
                Complex64::new(v[T_MASS], 0.0),
            ));
        }
    }
    let _ = n2d;
    CsrMatrix::from_triplets(dim, dim, trips)
}

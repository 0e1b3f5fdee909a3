//! Exact geometry of the cone problem: coordinate map, metric, magnetic
//! potentials and the gauge that removes the azimuthal potential component.
//!
//! Conventions, fixed once for the whole crate:
//! - `D = -i d/dx` for every momentum operator;
//! - the gauged spherical potential is `A_tilde - grad(gauge_phase)`, whose
//!   components are `(-A_t, A_theta1 + A_theta2, 0)`, so the covariant
//!   derivatives read `D_t - A_t` and `D_theta + A_theta1 + A_theta2`;
//! - all angles are radians.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid cone parameters: alpha={alpha}, beta={beta} (need 0 < alpha < pi, 0 <= beta <= pi/2)")]
    InvalidConfig { alpha: f64, beta: f64 },
    #[error("point (t={t}, theta={theta}, phi={phi}) lies outside the closed coordinate box")]
    OutsideDomain { t: f64, theta: f64, phi: f64 },
    #[error("singular coordinate: t={t}, phi={phi} (need t > 0 and phi > 0)")]
    SingularCoordinate { t: f64, phi: f64 },
}

/// Aperture and field-tilt parameters; the problem is fully nondimensional.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConeConfig {
    alpha: f64,
    beta: f64,
}

impl ConeConfig {
    /// Requires `0 < alpha < pi` and `0 <= beta <= pi/2`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self, GeometryError> {
        let ok = alpha.is_finite()
            && beta.is_finite()
            && alpha > 0.0
            && alpha < std::f64::consts::PI
            && (0.0..=std::f64::consts::FRAC_PI_2).contains(&beta);
        if ok {
            Ok(ConeConfig { alpha, beta })
        } else {
            Err(GeometryError::InvalidConfig { alpha, beta })
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Unit magnetic field `(0, sin beta, cos beta)`.
    pub fn field(&self) -> Vector3<f64> {
        Vector3::new(0.0, self.beta.sin(), self.beta.cos())
    }

    /// Coefficient `2^{-5} (1 + sin^2 beta)` of the reduced radial potential.
    pub fn radial_coefficient(&self) -> f64 {
        (1.0 + self.beta.sin().powi(2)) / 32.0
    }
}

/// A point in either cartesian `(x, y, z)` or rescaled spherical
/// `(t, theta, phi)` coordinates, depending on context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3(pub [f64; 3]);

impl Point3 {
    pub fn cartesian(x: f64, y: f64, z: f64) -> Self {
        Point3([x, y, z])
    }

    pub fn spherical(t: f64, theta: f64, phi: f64) -> Self {
        Point3([t, theta, phi])
    }

    pub fn t(&self) -> f64 {
        self.0[0]
    }

    pub fn theta(&self) -> f64 {
        self.0[1]
    }

    pub fn phi(&self) -> f64 {
        self.0[2]
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    /// Membership in the closed coordinate box: `t >= 0`, `0 <= phi <= 1/2`.
    /// `theta` is periodic and accepted as any finite value.
    pub fn in_closed_box(&self) -> bool {
        self.t() >= 0.0 && self.theta().is_finite() && (0.0..=0.5).contains(&self.phi())
    }
}

/// Rescaled spherical chart
/// `(x,y,z) = alpha^{-1/2} (t cos(theta) sin(alpha phi), t sin(theta) sin(alpha phi), t cos(alpha phi))`.
///
/// Accepts the closure of the box (`t = 0`, `phi = 0` and `phi = 1/2` included);
/// the image lies in the closed cone.
pub fn map_to_cartesian(cfg: &ConeConfig, p: &Point3) -> Result<Point3, GeometryError> {
    if !p.in_closed_box() {
        return Err(GeometryError::OutsideDomain {
            t: p.t(),
            theta: p.theta(),
            phi: p.phi(),
        });
    }
    let s = cfg.alpha.sqrt().recip();
    let ap = cfg.alpha * p.phi();
    Ok(Point3::cartesian(
        s * p.t() * p.theta().cos() * ap.sin(),
        s * p.t() * p.theta().sin() * ap.sin(),
        s * p.t() * ap.cos(),
    ))
}

/// Jacobian matrix of the chart.
pub fn jacobian(cfg: &ConeConfig, t: f64, theta: f64, phi: f64) -> Matrix3<f64> {
    let a = cfg.alpha;
    let s = a.sqrt().recip();
    let (sth, cth) = theta.sin_cos();
    let (sap, cap) = (a * phi).sin_cos();
    Matrix3::new(
        s * cth * sap,
        -s * t * sth * sap,
        s * a * t * cth * cap,
        s * sth * sap,
        s * t * cth * sap,
        s * a * t * sth * cap,
        s * cap,
        0.0,
        -s * a * t * sap,
    )
}

/// Closed-form inverse Jacobian; singular at `t = 0` or `phi = 0`.
pub fn jacobian_inverse(
    cfg: &ConeConfig,
    t: f64,
    theta: f64,
    phi: f64,
) -> Result<Matrix3<f64>, GeometryError> {
    if t <= 0.0 || phi <= 0.0 {
        return Err(GeometryError::SingularCoordinate { t, phi });
    }
    let a = cfg.alpha;
    let s = a.sqrt();
    let (sth, cth) = theta.sin_cos();
    let (sap, cap) = (a * phi).sin_cos();
    Ok(Matrix3::new(
        s * cth * sap,
        s * sth * sap,
        s * cap,
        -s * sth / (t * sap),
        s * cth / (t * sap),
        0.0,
        s * cth * cap / (a * t),
        s * sth * cap / (a * t),
        -s * sap / (a * t),
    ))
}

/// Metric of the chart, `alpha * diag(1, t^{-2} sin^{-2}(alpha phi), (alpha t)^{-2})`.
pub fn metric(cfg: &ConeConfig, t: f64, phi: f64) -> Result<Matrix3<f64>, GeometryError> {
    if t <= 0.0 || phi <= 0.0 {
        return Err(GeometryError::SingularCoordinate { t, phi });
    }
    let a = cfg.alpha;
    let sap = (a * phi).sin();
    Ok(Matrix3::from_diagonal(&Vector3::new(
        a,
        a / (t * t * sap * sap),
        a / (a * a * t * t),
    )))
}

/// Linear magnetic potential `A = (1/2) B x x` in cartesian coordinates:
/// `(1/2) (z sin(beta) - y cos(beta), x cos(beta), -x sin(beta))`.
pub fn potential_cartesian(cfg: &ConeConfig, p: &Point3) -> Vector3<f64> {
    let (sb, cb) = cfg.beta.sin_cos();
    Vector3::new(
        0.5 * (p.z() * sb - p.y() * cb),
        0.5 * p.x() * cb,
        -0.5 * p.x() * sb,
    )
}

/// Pullback `(D Phi)^T A` of the potential to the spherical chart:
///
/// `(0, (t^2 / (2 alpha)) (sin^2(alpha phi) cos(beta) - (1/2) sin(2 alpha phi) sin(theta) sin(beta)), (t^2/2) cos(theta) sin(beta))`.
pub fn potential_spherical(cfg: &ConeConfig, p: &Point3) -> Result<Vector3<f64>, GeometryError> {
    if !p.in_closed_box() {
        return Err(GeometryError::OutsideDomain {
            t: p.t(),
            theta: p.theta(),
            phi: p.phi(),
        });
    }
    let a = cfg.alpha;
    let (sb, cb) = cfg.beta.sin_cos();
    let (sth, cth) = p.theta().sin_cos();
    let ap = a * p.phi();
    let t2h = 0.5 * p.t() * p.t();
    Ok(Vector3::new(
        0.0,
        t2h / a * (ap.sin().powi(2) * cb - 0.5 * (2.0 * ap).sin() * sth * sb),
        t2h * cth * sb,
    ))
}

/// Phase of the gauge transform that removes the `phi`-component of the
/// potential: `(t^2 phi / 2) cos(theta) sin(beta)`.
pub fn gauge_phase(cfg: &ConeConfig, p: &Point3) -> f64 {
    0.5 * p.t() * p.t() * p.phi() * p.theta().cos() * cfg.beta.sin()
}

/// Gradient of [`gauge_phase`] in `(t, theta, phi)`.
pub fn gauge_phase_gradient(cfg: &ConeConfig, p: &Point3) -> Vector3<f64> {
    let sb = cfg.beta.sin();
    let (sth, cth) = p.theta().sin_cos();
    let t = p.t();
    Vector3::new(
        t * p.phi() * cth * sb,
        -0.5 * t * t * p.phi() * sth * sb,
        0.5 * t * t * cth * sb,
    )
}

/// Numerically stable `1 - sin(x)/x`.
pub fn one_minus_sinc(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        // x^2/6 - x^4/120 + x^6/5040 - x^8/362880
        x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    } else {
        1.0 - x.sin() / x
    }
}

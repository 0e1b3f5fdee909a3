//! Independent 3D finite-difference assembly with theta collocation.
//!
//! Cross-validation path only: covariant staggered differences on the same
//! cell-centered `(t, phi)` nodes and `n_theta` equispaced periodic
//! collocation angles. Every face term is an exact square, so the pair is
//! Hermitian positive semidefinite by construction. Not a production path.

use num_complex::Complex64;

use super::{AssemblyError, CoefficientSet, TensorGrid};
use crate::geometry::ConeConfig;
use crate::sparse::CsrMatrix;

/// Assemble the gauged form by staggered finite differences, returning
/// `(stiffness, mass)` over dofs ordered `(t index, phi index, theta index)`
/// (theta fastest, which keeps the matrix banded).
pub fn assemble_theta_collocation(
    cfg: &ConeConfig,
    grid: &TensorGrid,
    n_theta: usize,
) -> Result<(CsrMatrix, CsrMatrix), AssemblyError> {
    if n_theta < 3 {
        return Err(AssemblyError::InvalidGrid(format!(
            "n_theta={n_theta} < 3"
        )));
    }
    let coef = CoefficientSet::new(cfg);
    let (n_t, n_phi) = (grid.n_t(), grid.n_phi());
    let h_t = grid.t_step();
    let h_p = grid.phi_step();
    let d_th = std::f64::consts::TAU / n_theta as f64;
    let tn = grid.t_nodes();
    let pn = grid.phi_nodes();
    let dim = n_theta * n_t * n_phi;
    let idx = |l: usize, i: usize, j: usize| (i * n_phi + j) * n_theta + l;
    let cell_vol = h_t * h_p * d_th;

    let mut trips: Vec<(usize, usize, Complex64)> = Vec::new();

    // Covariant face term |(-i)(u_q - u_p)/delta + sign * a (u_p + u_q)/2|^2
    // with weight wv; emits the 2x2 Hermitian blocklet.
    fn face(
        trips: &mut Vec<(usize, usize, Complex64)>,
        p: usize,
        q: usize,
        delta: f64,
        a: f64,
        sign: f64,
        wv: f64,
    ) {
        let inv = delta.recip();
        let half_a = 0.5 * sign * a;
        let diag = wv * (inv * inv + half_a * half_a);
        let cross = Complex64::new(wv * (half_a * half_a - inv * inv), -wv * sign * a * inv);
        trips.push((p, p, Complex64::new(diag, 0.0)));
        trips.push((q, q, Complex64::new(diag, 0.0)));
        trips.push((q, p, cross));
        trips.push((p, q, cross.conj()));
    }

    for l in 0..n_theta {
        let theta = l as f64 * d_th;
        let theta_face = (l as f64 + 0.5) * d_th;
        let l_next = (l + 1) % n_theta;
        for j in 0..n_phi {
            let phi = pn[j];
            // Radial faces t = i h_t (the t = 0 face carries zero weight).
            for i in 1..n_t {
                let tf = i as f64 * h_t;
                let wv = coef.weight(tf, phi) * cell_vol;
                let a_t = coef.a_t_amplitude(tf, phi) * theta.cos();
                face(&mut trips, idx(l, i - 1, j), idx(l, i, j), h_t, a_t, -1.0, wv);
            }
            // Dirichlet truncation: one-sided covariant square over the last
            // half cell against u = 0 at the face.
            {
                let p = idx(l, n_t - 1, j);
                let a_t = coef.a_t_amplitude(grid.t_max(), phi) * theta.cos();
                let wv = coef.weight(grid.t_max(), phi) * 0.5 * cell_vol;
                let inv = 2.0 / h_t;
                trips.push((p, p, Complex64::new(wv * (inv * inv + 0.25 * a_t * a_t), 0.0)));
            }
            // Polar faces phi = j h_p (phi = 0 face has zero weight; the
            // phi = 1/2 face is the natural Neumann boundary: no flux).
        }
        // The 1/t^2 polar coefficient cancels against the measure, so the
        // phi-face weight only sees sin(alpha phi_face)/alpha^2.
        for i in 0..n_t {
            for j in 1..n_phi {
                let pf = j as f64 * h_p;
                let wv = (cfg.alpha() * pf).sin() / (cfg.alpha() * cfg.alpha()) * cell_vol;
                face(&mut trips, idx(l, i, j - 1), idx(l, i, j), h_p, 0.0, 1.0, wv);
            }
        }
        // Azimuthal faces at theta_face, periodic.
        for i in 0..n_t {
            let t = tn[i];
            for j in 0..n_phi {
                let phi = pn[j];
                let a_th = coef.a_theta1(t, phi)
                    + coef.a_theta2_amplitude(t, phi) * theta_face.sin();
                let wv = (cfg.alpha() * phi).sin().recip() * cell_vol;
                face(&mut trips, idx(l, i, j), idx(l_next, i, j), d_th, a_th, 1.0, wv);
            }
        }
    }

    let mut mass_trips: Vec<(usize, usize, Complex64)> = Vec::with_capacity(dim);
    for l in 0..n_theta {
        for i in 0..n_t {
            for j in 0..n_phi {
                let w = coef.weight(tn[i], pn[j]) * cell_vol;
                if !w.is_finite() {
                    return Err(AssemblyError::NonFiniteCoefficient {
                        t: tn[i],
                        phi: pn[j],
                    });
                }
                mass_trips.push((idx(l, i, j), idx(l, i, j), Complex64::new(w, 0.0)));
            }
        }
    }

    let k = CsrMatrix::from_triplets(dim, dim, trips);
    if !k.all_finite() {
        return Err(AssemblyError::NonFiniteCoefficient { t: 0.0, phi: 0.0 });
    }
    let m = CsrMatrix::from_triplets(dim, dim, mass_trips);
    Ok((k, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collocation_pair_is_hermitian_and_finite() {
        let cfg = ConeConfig::new(0.3, 0.7).unwrap();
        let grid = TensorGrid::unchecked(6, 4, 0, 8.0);
        let (k, m) = assemble_theta_collocation(&cfg, &grid, 5).unwrap();
        assert!(k.is_hermitian());
        assert!(k.all_finite());
        assert_eq!(m.nnz(), 5 * 6 * 4);
    }

    #[test]
    fn collocation_form_is_positive() {
        use rand::prelude::*;
        let cfg = ConeConfig::new(0.4, 0.5).unwrap();
        let grid = TensorGrid::unchecked(5, 3, 0, 8.0);
        let (k, _) = assemble_theta_collocation(&cfg, &grid, 7).unwrap();
        let n = k.nrows();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut kx = vec![Complex64::new(0.0, 0.0); n];
            k.matvec(&x, &mut kx);
            let q: Complex64 = x.iter().zip(&kx).map(|(a, b)| a.conj() * b).sum();
            assert!(q.re > -1e-10);
            assert!(q.im.abs() < 1e-10 * q.re.abs().max(1.0));
        }
    }
}

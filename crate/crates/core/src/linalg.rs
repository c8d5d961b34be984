//! Small dense helpers for 2x2 real matrices.
//!
//! Propagators of saddle-type systems reach norms around 1e24 over the
//! windows used here, so everything below rescales before squaring and
//! never takes a determinant from entries of an ill-conditioned product.

use nalgebra::{Matrix2, Vector2};

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

pub fn max_abs_entry(m: &Mat2) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat2) -> f64 {
    let scale = max_abs_entry(m);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s = m / scale;
    let fro2 = s.iter().map(|x| x * x).sum::<f64>();
    let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
    scale * ((fro2 + disc.sqrt()) / 2.0).sqrt()
}

/// Leading eigenvector of a symmetric 2x2 matrix `[[a, b], [b, c]]`.
fn dominant_symmetric_eigvec(a: f64, b: f64, c: f64) -> Vec2 {
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    Vec2::new(theta.cos(), theta.sin())
}

/// Right singular vector of the largest singular value.
pub fn dominant_right_singular(m: &Mat2) -> Vec2 {
    let s = m / max_abs_entry(m).max(f64::MIN_POSITIVE);
    let g = s.transpose() * s;
    sign_normalized(dominant_symmetric_eigvec(g[(0, 0)], g[(0, 1)], g[(1, 1)]))
}

/// Left singular vector of the largest singular value.
pub fn dominant_left_singular(m: &Mat2) -> Vec2 {
    let s = m / max_abs_entry(m).max(f64::MIN_POSITIVE);
    let g = s * s.transpose();
    sign_normalized(dominant_symmetric_eigvec(g[(0, 0)], g[(0, 1)], g[(1, 1)]))
}

/// Rotation by +90 degrees.
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v[1], v[0])
}

/// Unit vector whose first nonzero component is nonnegative.
pub fn sign_normalized(v: Vec2) -> Vec2 {
    let n = v.norm();
    let mut u = if n > 0.0 { v / n } else { v };
    let lead = if u[0].abs() > 1e-14 { u[0] } else { u[1] };
    if lead < 0.0 {
        u = -u;
    }
    u
}

pub fn det(m: &Mat2) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Adjugate, so that `m * adjugate(m) = det(m) I`.
pub fn adjugate(m: &Mat2) -> Mat2 {
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

/// Inverse using an externally supplied determinant.
pub fn inverse_with_det(m: &Mat2, det: f64) -> Mat2 {
    adjugate(m) / det
}

/// Projection onto `range` along `kernel`, both nonzero and not parallel.
pub fn oblique_projection(range: &Vec2, kernel: &Vec2) -> Mat2 {
    let k = perp(kernel);
    let dual = k / k.dot(range);
    range * dual.transpose()
}

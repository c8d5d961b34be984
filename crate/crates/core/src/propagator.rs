//! Evolution family `U(t, s)` of `u' = A(t) u` by fixed-step RK4 on unit
//! cells with cubic Hermite dense output.
//!
//! Cell `k` stores `U(k + j h, k)` at its substep nodes. Long-range
//! matrices are products of the cell factors `U(k + 1, k)`; backward
//! matrices are adjugates divided by the determinant assembled from the
//! same factors, so no ill-conditioned product is ever inverted.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::lienard::{MatrixField, PlanarSystem};
use crate::linalg::{adjugate, det, dominant_left_singular, max_abs_entry, spectral_norm, Mat2};
use crate::{Error, Result};

const BLOWUP_LIMIT: f64 = 1e300;

#[derive(Debug)]
struct Cell {
    nodes: Vec<Mat2>,
    slopes: Vec<Mat2>,
    factor: Mat2,
    factor_det: f64,
}

pub struct Propagator {
    a: MatrixField,
    substeps: usize,
    cache: RwLock<HashMap<i64, Arc<Cell>>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("step", &self.step())
            .field("cached_cells", &self.cache.read().map(|c| c.len()).unwrap_or(0))
            .finish()
    }
}

impl Propagator {
    /// The effective step is `1 / ceil(1 / step)`, never larger than `step`.
    pub fn new(system: &PlanarSystem, step: f64) -> Result<Self> {
        Self::from_field(system.a.clone(), step)
    }

    pub fn from_field(a: MatrixField, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!("propagator step must be positive, got {step}")));
        }
        let substeps = (1.0 / step).ceil().max(1.0) as usize;
        Ok(Self {
            a,
            substeps,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.substeps as f64
    }

    pub fn coefficient(&self, t: f64) -> Mat2 {
        (self.a)(t)
    }

    fn build_cell(&self, k: i64) -> Cell {
        let n = self.substeps;
        let h = self.step();
        let t0 = k as f64;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut slopes = Vec::with_capacity(n + 1);
        let mut y = Mat2::identity();
        let mut a_left = (self.a)(t0);
        nodes.push(y);
        slopes.push(a_left * y);
        for j in 0..n {
            let t = t0 + j as f64 * h;
            let a_mid = (self.a)(t + 0.5 * h);
            let a_right = (self.a)(t0 + (j + 1) as f64 * h);
            let k1 = a_left * y;
            let k2 = a_mid * (y + 0.5 * h * k1);
            let k3 = a_mid * (y + 0.5 * h * k2);
            let k4 = a_right * (y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            nodes.push(y);
            slopes.push(a_right * y);
            a_left = a_right;
        }
        Cell {
            factor: y,
            factor_det: det(&y),
            nodes,
            slopes,
        }
    }

    fn cells(&self, lo: i64, hi: i64) -> Vec<Arc<Cell>> {
        {
            let cache = self.cache.read().expect("propagator cache poisoned");
            if (lo..=hi).all(|k| cache.contains_key(&k)) {
                return (lo..=hi).map(|k| cache[&k].clone()).collect();
            }
        }
        let missing: Vec<i64> = {
            let cache = self.cache.read().expect("propagator cache poisoned");
            (lo..=hi).filter(|k| !cache.contains_key(k)).collect()
        };
        let built: Vec<(i64, Cell)> = missing.into_iter().map(|k| (k, self.build_cell(k))).collect();
        let mut cache = self.cache.write().expect("propagator cache poisoned");
        for (k, cell) in built {
            cache.entry(k).or_insert_with(|| Arc::new(cell));
        }
        (lo..=hi).map(|k| cache[&k].clone()).collect()
    }

    /// `U(t, k)` for `t` in cell `k`, by Hermite interpolation between nodes.
    fn local(&self, cell: &Cell, k: i64, t: f64) -> Mat2 {
        let n = self.substeps;
        let h = self.step();
        let x = (t - k as f64) * n as f64;
        let j = (x.floor() as usize).min(n - 1);
        let theta = x - j as f64;
        if theta == 0.0 {
            return cell.nodes[j];
        }
        let (y0, y1) = (cell.nodes[j], cell.nodes[j + 1]);
        let (f0, f1) = (cell.slopes[j], cell.slopes[j + 1]);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        y0 * h00 + f0 * (h10 * h) + y1 * h01 + f1 * (h11 * h)
    }

    /// `U(t, s)` and its determinant for `t >= s`.
    fn forward(&self, s: f64, t: f64) -> Result<(Mat2, f64)> {
        if t == s {
            return Ok((Mat2::identity(), 1.0));
        }
        let ks = s.floor() as i64;
        let kt = t.floor() as i64;
        let cells = self.cells(ks, kt);
        let ls = self.local(&cells[0], ks, s);
        let ls_det = det(&ls);
        let ls_inv = adjugate(&ls) / ls_det;
        if ks == kt {
            let lt = self.local(&cells[0], ks, t);
            return Ok((lt * ls_inv, det(&lt) / ls_det));
        }
        let mut m = cells[0].factor * ls_inv;
        let mut d = cells[0].factor_det / ls_det;
        for (i, cell) in cells.iter().enumerate().take(cells.len() - 1).skip(1) {
            let next = cell.factor * m;
            if !(max_abs_entry(&next) < BLOWUP_LIMIT) {
                return Err(Error::Blowup {
                    time: (ks + i as i64) as f64,
                    direction: dir(&m),
                });
            }
            m = next;
            d *= cell.factor_det;
        }
        let lt = self.local(&cells[cells.len() - 1], kt, t);
        let out = lt * m;
        if !(max_abs_entry(&out) < BLOWUP_LIMIT) {
            return Err(Error::Blowup { time: t, direction: dir(&m) });
        }
        Ok((out, d * det(&lt)))
    }

    /// `U(t, s)` for any ordering of `s`, `t`.
    pub fn matrix(&self, s: f64, t: f64) -> Result<Mat2> {
        if t >= s {
            Ok(self.forward(s, t)?.0)
        } else {
            let (m, d) = self.forward(t, s)?;
            let inv = adjugate(&m) / d;
            if !(max_abs_entry(&inv) < BLOWUP_LIMIT) {
                return Err(Error::Blowup { time: t, direction: dir(&inv) });
            }
            Ok(inv)
        }
    }

    /// `det U(t, s)` from the product of cell determinants.
    pub fn determinant(&self, s: f64, t: f64) -> Result<f64> {
        if t >= s {
            Ok(self.forward(s, t)?.1)
        } else {
            Ok(1.0 / self.forward(t, s)?.1)
        }
    }

    pub fn cocycle_defect(&self, s: f64, r: f64, t: f64) -> Result<CocycleDefect> {
        let u_ts = self.matrix(s, t)?;
        let u_tr = self.matrix(r, t)?;
        let u_rs = self.matrix(s, r)?;
        let absolute = spectral_norm(&(u_ts - u_tr * u_rs));
        let scale = (spectral_norm(&u_tr) * spectral_norm(&u_rs)).max(1.0);
        Ok(CocycleDefect {
            absolute,
            normalized: absolute / scale,
        })
    }

    pub fn cached_cells(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }
}

fn dir(m: &Mat2) -> [f64; 2] {
    let v = dominant_left_singular(m);
    [v[0], v[1]]
}

/// Defect of `U(t, s) = U(t, r) U(r, s)`; `normalized` divides by
/// `max(1, |U(t, r)| |U(r, s)|)`, the scale of product roundoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocycleDefect {
    pub absolute: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBoundFit {
    pub m_fit: f64,
    pub omega_fit: f64,
    pub samples: usize,
    pub span: (f64, f64),
    /// `max log|U(t, s)| - log M - omega (t - s)`, nonpositive.
    pub max_residual: f64,
    pub blowup: bool,
}

/// Least-squares fit of `log |U(t, s)|` against `t - s`, then `M` raised so
/// every sample obeys `|U(t, s)| <= M e^{omega (t - s)}`.
pub fn fit_exponential_bound(prop: &Propagator, pairs: &[(f64, f64)]) -> Result<ExponentialBoundFit> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no sample pairs".into()));
    }
    let mut data = Vec::with_capacity(pairs.len());
    let mut blowup = false;
    for &(t, s) in pairs {
        if t < s {
            return Err(Error::InvalidArgument(format!("pair ({t}, {s}) has t < s")));
        }
        match prop.matrix(s, t) {
            Ok(m) => data.push((t - s, spectral_norm(&m).ln())),
            Err(Error::Blowup { .. }) => blowup = true,
            Err(e) => return Err(e),
        }
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("every sample blew up".into()));
    }
    let (omega, _) = least_squares(&data);
    let log_m = data
        .iter()
        .map(|(tau, y)| y - omega * tau)
        .fold(0.0_f64, f64::max);
    let max_residual = data
        .iter()
        .map(|(tau, y)| y - log_m - omega * tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (tau, _)| {
        (lo.min(*tau), hi.max(*tau))
    });
    Ok(ExponentialBoundFit {
        m_fit: log_m.exp(),
        omega_fit: omega,
        samples: data.len(),
        span,
        max_residual: max_residual.min(0.0),
        blowup,
    })
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn least_squares(data: &[(f64, f64)]) -> (f64, f64) {
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lienard::{saddle_example, to_planar};
    use crate::signal::CompositeSignal;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn constant(a: Mat2, step: f64) -> Propagator {
        Propagator::new(&PlanarSystem::constant(a), step).unwrap()
    }

    fn saddle(step: f64) -> Propagator {
        let sys = to_planar(&saddle_example(0.0, 2, CompositeSignal::zero())).unwrap();
        Propagator::new(&sys, step).unwrap()
    }

    #[test]
    fn decoupled_exponentials() {
        let p = constant(Mat2::new(-1.0, 0.0, 0.0, 1.0), 1e-2);
        let u = p.matrix(0.0, 1.0).unwrap();
        assert_relative_eq!(u, Mat2::new((-1f64).exp(), 0.0, 0.0, 1f64.exp()), epsilon = 1e-9);
        let u = p.matrix(0.3, -2.45).unwrap();
        let tau = -2.75f64;
        assert_relative_eq!(u, Mat2::new((-tau).exp(), 0.0, 0.0, tau.exp()), max_relative = 1e-8);
    }

    #[test]
    fn identity_on_the_diagonal() {
        let p = saddle(1e-2);
        for s in [-3.7, 0.0, 5.25] {
            assert_eq!(p.matrix(s, s).unwrap(), Mat2::identity());
            assert_eq!(p.cocycle_defect(s, s, s).unwrap().absolute, 0.0);
        }
    }

    #[test]
    fn harmonic_rotation() {
        let p = constant(Mat2::new(0.0, 1.0, -1.0, 0.0), 1e-3);
        let u = p.matrix(0.0, PI / 2.0).unwrap();
        assert_relative_eq!(u, Mat2::new(0.0, 1.0, -1.0, 0.0), epsilon = 1e-10);
    }

    #[test]
    fn constant_cocycle_is_exact() {
        let p = constant(Mat2::new(-0.5, 0.3, 0.2, 0.4), 1e-2);
        for (s, r, t) in [(0.0, 1.5, 3.2), (-2.0, 4.0, 1.0), (3.3, -1.1, 0.7)] {
            assert!(p.cocycle_defect(s, r, t).unwrap().normalized < 1e-10);
        }
    }

    #[test]
    fn saddle_cocycle_midpoint() {
        let p = saddle(1e-3);
        assert!(p.cocycle_defect(0.0, 5.0, 10.0).unwrap().normalized < 1e-6);
    }

    #[test]
    fn liouville_against_closed_form_trace() {
        let p = saddle(1e-3);
        let q_int = |t: f64| (1.0 - t.cos()) + (1.0 - (2f64.sqrt() * t).cos()) / 2f64.sqrt();
        for t in [0.5, 3.0, 7.25, 20.0] {
            let d = p.determinant(0.0, t).unwrap();
            assert_relative_eq!(d, (-q_int(t)).exp(), max_relative = 1e-6);
        }
    }

    #[test]
    fn fourth_order_under_halving() {
        let (s, t) = (0.0, 7.3);
        let m: Vec<Mat2> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| saddle(h).matrix(s, t).unwrap())
            .collect();
        let d1 = spectral_norm(&(m[0] - m[1]));
        let d2 = spectral_norm(&(m[1] - m[2]));
        let ratio = d1 / d2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn forward_backward_are_inverse() {
        let p = saddle(1e-3);
        for (s, t) in [(0.0, 3.0), (-4.2, -0.5), (1.1, 1.7)] {
            let prod = p.matrix(s, t).unwrap() * p.matrix(t, s).unwrap();
            assert_relative_eq!(prod, Mat2::identity(), epsilon = 1e-8);
        }
        // long ranges: roundoff scales with the condition number
        let (s, t) = (-4.2, 2.9);
        let (u, v) = (p.matrix(s, t).unwrap(), p.matrix(t, s).unwrap());
        let cond = spectral_norm(&u) * spectral_norm(&v);
        assert!(spectral_norm(&(u * v - Mat2::identity())) < 1e-8 * cond.max(1.0));
    }

    #[test]
    fn exponential_bound_fits() {
        let pairs: Vec<(f64, f64)> = (0..40).map(|i| (0.25 * i as f64, 0.0)).collect();
        let fit = fit_exponential_bound(&constant(Mat2::new(-1.0, 0.0, 0.0, 1.0), 1e-2), &pairs).unwrap();
        assert_relative_eq!(fit.omega_fit, 1.0, epsilon = 1e-6);
        assert_relative_eq!(fit.m_fit, 1.0, epsilon = 1e-6);
        assert!(fit.max_residual <= 0.0);
        let fit = fit_exponential_bound(&constant(Mat2::zeros(), 1e-2), &pairs).unwrap();
        assert_eq!((fit.m_fit, fit.omega_fit), (1.0, 0.0));
        let fit = fit_exponential_bound(&constant(Mat2::new(-1.0, 0.0, 0.0, -2.0), 1e-2), &pairs).unwrap();
        assert_relative_eq!(fit.omega_fit, -1.0, epsilon = 1e-3);
    }

    #[test]
    fn blowup_names_the_unstable_direction() {
        let p = constant(Mat2::new(-1.0, 0.0, 0.0, 40.0), 1e-2);
        match p.matrix(0.0, 30.0) {
            Err(Error::Blowup { direction, .. }) => assert!(direction[1].abs() > 0.999),
            other => panic!("expected blowup, got {other:?}"),
        }
        assert!(Propagator::from_field(Arc::new(|_| Mat2::zeros()), 0.0).is_err());
    }
}

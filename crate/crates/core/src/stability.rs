//! Exponential stability of the bounded solution under perturbations of
//! its stable component, measured against the Gronwall envelope
//! `C e^{-mu t} |P(0) (u(0) - u_hat(0))|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{DichotomyConstants, GreenFunction};
use crate::linalg::Vec2;
use crate::mild::{solve_halfline_certified, GridSolution, HalflineAnchor, NonlinearitySpec, SolverConfig};
use crate::propagator::least_squares;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallConstants {
    pub gronwall_gamma: f64,
    pub mu: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

/// `gamma = (1+H)N L1`, `mu = sqrt(beta^2 - 2 gamma beta)`, `C = 2N beta / (beta + mu)`.
pub fn gronwall_constants(n: f64, beta: f64, h: f64, l1: f64) -> Result<GronwallConstants> {
    let gamma = (1.0 + h) * n * l1;
    if !(gamma < beta / 2.0) {
        return Err(Error::Smallness {
            max_l1: beta / (2.0 * (1.0 + h) * n),
        });
    }
    let mu = (beta * beta - 2.0 * gamma * beta).sqrt();
    Ok(GronwallConstants {
        gronwall_gamma: gamma,
        mu,
        c: 2.0 * n * beta / (beta + mu),
    })
}

/// Least squares on `ln d`, skipping the first 10% of samples and any
/// non-positive values. Returns `(rate, prefactor)` with `d ~ prefactor e^{-rate t}`.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<(f64, f64)> {
    let skip = series.len() / 10;
    let data: Vec<(f64, f64)> = series[skip.min(series.len())..]
        .iter()
        .filter(|p| p.1 > 0.0 && p.1.is_finite())
        .map(|p| (p.0, p.1.ln()))
        .collect();
    if data.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "{} positive samples after trimming",
            data.len()
        )));
    }
    let (slope, intercept) = least_squares(&data);
    Ok((-slope, intercept.exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    /// `2(1+H)N L1 / beta`, must be `< 1/2`.
    pub contraction: f64,
    /// `N |offset| + 2(1+H)N L1 rho / beta`, must be `<= rho` for the largest offset.
    pub self_map: f64,
    pub valid: bool,
}

impl StabilityCertificate {
    pub fn new(k: &DichotomyConstants, l1: f64, rho: f64, max_offset: f64) -> Self {
        let contraction = 2.0 * k.green_prefactor() * l1 / k.beta;
        let self_map = k.n * max_offset + contraction * rho;
        Self {
            contraction,
            self_map,
            valid: contraction < 0.5 && self_map <= rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub offset: [f64; 2],
    pub offset_norm: f64,
    /// `(t, |u(t) - u_hat(t)|)` on the decay grid.
    pub series: Vec<(f64, f64)>,
    pub envelope: Vec<f64>,
    /// `min_t (envelope + allowance - d)`; negative means a violation.
    pub envelope_margin: f64,
    pub allowance: f64,
    pub residual: f64,
    pub picard_iters: usize,
    pub rate: Option<f64>,
    pub prefactor: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    #[serde(flatten)]
    pub constants: GronwallConstants,
    pub l1: f64,
    pub certificate: StabilityCertificate,
    /// Smallest fitted rate over trajectories with a fit.
    pub fitted_rate: Option<f64>,
    pub fitted_prefactor: Option<f64>,
    pub decay_grid_end: f64,
    pub trajectories: Vec<Trajectory>,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// `t in {0, 0.5, ..., min(15, 10 / mu)}`.
pub fn decay_grid(mu: f64) -> Vec<f64> {
    let end = if mu > 0.0 { (10.0 / mu).min(15.0) } else { 15.0 };
    let n = (end / 0.5).floor() as usize;
    (0..=n).map(|i| i as f64 * 0.5).collect()
}

/// Random multiples of the stable direction at 0 with `|offset| <= rho / (2N)`.
pub fn random_offsets(gf: &GreenFunction, count: usize, rho: f64, seed: u64) -> Result<Vec<Vec2>> {
    let v = gf.splitting.stable_dir(0.0)?;
    let r = rho / (2.0 * gf.constants().n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| rng.random_range(-r..=r) * v).collect())
}

/// Solves the half-line problem anchored at `P(0) u_hat(0) + offset` for
/// each offset and checks the Gronwall envelope on the decay grid.
///
/// `base` must be a half-line solution covering the decay grid.
pub fn perturb_and_measure(
    gf: &GreenFunction,
    nl: &NonlinearitySpec,
    base: &GridSolution,
    offsets: &[Vec2],
    config: &SolverConfig,
) -> Result<StabilityReport> {
    let k = gf.constants();
    let constants = gronwall_constants(k.n, k.beta, k.h, nl.l1)?;
    let zeta_base = base
        .halfline_anchor
        .map(|a| Vec2::from(a.zeta0))
        .ok_or_else(|| Error::InvalidArgument("base solution has no half-line anchor".into()))?;
    let f0 = gf.splitting.frame(0.0)?;
    let bound = nl.rho / (2.0 * k.n);
    for o in offsets {
        if o.norm() > bound * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "offset norm {} exceeds rho/(2N) = {bound}",
                o.norm()
            )));
        }
        if (f0.q() * o).norm() > 1e-9 * o.norm().max(1e-300) {
            return Err(Error::InvalidArgument("offset is not in the range of P(0)".into()));
        }
    }
    let max_offset = offsets.iter().map(|o| o.norm()).fold(0.0, f64::max);
    let certificate = StabilityCertificate::new(&k, nl.l1, nl.rho, max_offset);
    if !certificate.valid {
        return Err(Error::CertificateRefused(format!(
            "stability certificate: 2(1+H)N L1/beta = {:.6} (need < 1/2), self-map bound {:.6} (need <= {})",
            certificate.contraction, certificate.self_map, nl.rho
        )));
    }
    let grid = decay_grid(constants.mu);
    let end = *grid.last().unwrap();
    if base.window.1 < end {
        return Err(Error::InvalidArgument(format!(
            "base solution window ends at {} before the decay grid end {end}",
            base.window.1
        )));
    }
    // iterates live in the 2 rho ball around the origin
    let wide = NonlinearitySpec {
        l: nl.l1,
        rho: 2.0 * nl.rho,
        ..nl.clone()
    };
    let start = |t: f64| base.at(t);
    let trajectories: Vec<Trajectory> = offsets
        .par_iter()
        .map(|o| {
            let v0 = zeta_base + o;
            let sol = solve_halfline_certified(
                gf,
                &wide,
                HalflineAnchor::StableComponent(v0.into()),
                end,
                config,
                certificate.contraction,
                Some(&start),
            )?;
            let allowance = 5.0 * sol.residual_norm.max(base.residual_norm);
            let series: Vec<(f64, f64)> = grid.iter().map(|&t| (t, (sol.at(t) - base.at(t)).norm())).collect();
            let envelope: Vec<f64> = grid
                .iter()
                .map(|&t| constants.c * (-constants.mu * t).exp() * o.norm())
                .collect();
            let envelope_margin = series
                .iter()
                .zip(&envelope)
                .map(|(d, e)| e + allowance - d.1)
                .fold(f64::INFINITY, f64::min);
            let fitted: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.1 > allowance).collect();
            let fit = fit_decay_rate(&fitted).ok();
            Ok(Trajectory {
                offset: (*o).into(),
                offset_norm: o.norm(),
                series,
                envelope,
                envelope_margin,
                allowance,
                residual: sol.residual_norm,
                picard_iters: sol.picard_iters,
                rate: fit.map(|f| f.0),
                prefactor: fit.map(|f| f.1),
                passed: envelope_margin >= 0.0 && fit.is_none_or(|f| f.0 >= constants.mu - 0.05),
            })
        })
        .collect::<Result<_>>()?;
    let fitted_rate = trajectories.iter().filter_map(|t| t.rate).reduce(f64::min);
    let fitted_prefactor = trajectories.iter().filter_map(|t| t.prefactor).reduce(f64::max);
    let failures: Vec<String> = trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.passed)
        .map(|(i, t)| {
            format!(
                "trajectory {i}: envelope margin {:.3e}, rate {:?} vs mu {:.6}",
                t.envelope_margin, t.rate, constants.mu
            )
        })
        .collect();
    Ok(StabilityReport {
        constants,
        l1: nl.l1,
        certificate,
        fitted_rate,
        fitted_prefactor,
        decay_grid_end: end,
        passed: failures.is_empty(),
        failures,
        trajectories,
    })
}

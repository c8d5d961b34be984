//! Stable/unstable splitting of a planar evolution family, dichotomy
//! constants, and the two-branch Green kernel.
//!
//! Every quantity is evaluated along the well-conditioned direction of
//! the propagator: stable vectors are pushed backward, unstable vectors
//! forward. A planar splitting is a pair of unit vectors `(v, u)` with
//! `P = v w^T`, `Q = u w_hat^T`, where `w = Ju / (Ju . v)` and
//! `w_hat = Jv / (Jv . u)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{
    dominant_left_singular, dominant_right_singular, oblique_projection, perp, sign_normalized,
    spectral_norm, Mat2, Vec2,
};
use crate::propagator::{least_squares, Propagator};
use crate::{Error, Result};

pub const DEFAULT_GAP_THRESHOLD: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSplitting {
    pub time: f64,
    pub stable_dir: [f64; 2],
    pub unstable_dir: [f64; 2],
    /// `log10(sigma_max / sigma_min)` of `U(t + T, t)`.
    pub sv_gap: f64,
}

/// Singular-vector splitting at `t` from the windows `[t, t + T]` and `[t - T, t]`.
pub fn estimate_splitting(
    prop: &Propagator,
    t: f64,
    window_t: f64,
    gap_threshold: f64,
) -> Result<PointSplitting> {
    if !(window_t > 0.0) {
        return Err(Error::InvalidArgument("window_T must be positive".into()));
    }
    let fwd = prop.matrix(t, t + window_t)?;
    let sigma_max = spectral_norm(&fwd);
    let sigma_min = prop.determinant(t, t + window_t)?.abs() / sigma_max;
    let sv_gap = (sigma_max / sigma_min).log10();
    if !(sv_gap >= gap_threshold) {
        return Err(Error::NoDichotomy(format!(
            "singular value gap {sv_gap:.3} decades at t = {t} over window {window_t} is below {gap_threshold}"
        )));
    }
    let v = sign_normalized(perp(&dominant_right_singular(&fwd)));
    let back = prop.matrix(t - window_t, t)?;
    let u = dominant_left_singular(&back);
    Ok(PointSplitting {
        time: t,
        stable_dir: [v[0], v[1]],
        unstable_dir: [u[0], u[1]],
        sv_gap,
    })
}

/// Splitting vectors and their dual rows at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub v: Vec2,
    pub u: Vec2,
    pub w: Vec2,
    pub w_hat: Vec2,
}

impl Frame {
    pub fn new(v: Vec2, u: Vec2) -> Self {
        let ju = perp(&u);
        let jv = perp(&v);
        Self {
            v,
            u,
            w: ju / ju.dot(&v),
            w_hat: jv / jv.dot(&u),
        }
    }

    pub fn p(&self) -> Mat2 {
        self.v * self.w.transpose()
    }

    pub fn q(&self) -> Mat2 {
        self.u * self.w_hat.transpose()
    }

    pub fn p_norm(&self) -> f64 {
        self.w.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyConstants {
    #[serde(rename = "N")]
    pub n: f64,
    pub beta: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub beta_stable: f64,
    pub beta_unstable: f64,
    /// RMS log residual over `beta * tau_span`, the larger of the two fits.
    pub fit_residual: f64,
    pub samples: usize,
}

impl DichotomyConstants {
    /// `(1 + H) N`, the Green kernel prefactor.
    pub fn green_prefactor(&self) -> f64 {
        (1.0 + self.h) * self.n
    }
}

#[derive(Debug, Clone)]
pub struct DichotomySplitting {
    pub prop: Arc<Propagator>,
    pub window_t: f64,
    pub gap_threshold: f64,
    /// Smallest gap seen at construction and during fitting.
    pub sv_gap: f64,
    pub constants: Option<DichotomyConstants>,
}

impl DichotomySplitting {
    pub fn new(prop: Arc<Propagator>, window_t: f64) -> Result<Self> {
        Self::with_threshold(prop, window_t, DEFAULT_GAP_THRESHOLD)
    }

    pub fn with_threshold(prop: Arc<Propagator>, window_t: f64, gap_threshold: f64) -> Result<Self> {
        let probe = estimate_splitting(&prop, 0.0, window_t, gap_threshold)?;
        Ok(Self {
            prop,
            window_t,
            gap_threshold,
            sv_gap: probe.sv_gap,
            constants: None,
        })
    }

    pub fn point(&self, t: f64) -> Result<PointSplitting> {
        estimate_splitting(&self.prop, t, self.window_t, self.gap_threshold)
    }

    pub fn frame(&self, t: f64) -> Result<Frame> {
        let p = self.point(t)?;
        Ok(Frame::new(Vec2::from(p.stable_dir), Vec2::from(p.unstable_dir)))
    }

    pub fn stable_dir(&self, t: f64) -> Result<Vec2> {
        Ok(Vec2::from(self.point(t)?.stable_dir))
    }

    pub fn unstable_dir(&self, t: f64) -> Result<Vec2> {
        Ok(Vec2::from(self.point(t)?.unstable_dir))
    }

    pub fn projection(&self, t: f64) -> Result<Mat2> {
        let p = self.point(t)?;
        Ok(oblique_projection(&Vec2::from(p.stable_dir), &Vec2::from(p.unstable_dir)))
    }

    pub fn constants(&self) -> Result<DichotomyConstants> {
        self.constants
            .ok_or_else(|| Error::Config("dichotomy constants have not been fitted".into()))
    }

    /// `|U_P(t, s)|` for `t >= s`.
    pub fn stable_norm(&self, t: f64, s: f64) -> Result<f64> {
        let (ft, fs) = (self.frame(t)?, self.frame(s)?);
        let c = (self.prop.matrix(t, s)? * ft.v).dot(&fs.v);
        Ok(fs.w.norm() / c.abs())
    }

    /// `|U_Q(s, t)|` for `t >= s`.
    pub fn unstable_norm(&self, t: f64, s: f64) -> Result<f64> {
        let (ft, fs) = (self.frame(t)?, self.frame(s)?);
        let b = (self.prop.matrix(s, t)? * fs.u).dot(&ft.u);
        Ok(ft.w_hat.norm() / b.abs())
    }

    /// `|P(t) U(t, s) - U(t, s) P(s)| / max(1, |U(t, s)|)`.
    pub fn invariance_defect(&self, t: f64, s: f64) -> Result<f64> {
        let u = self.prop.matrix(s, t)?;
        let d = self.projection(t)? * u - u * self.projection(s)?;
        Ok(spectral_norm(&d) / spectral_norm(&u).max(1.0))
    }
}

/// Log-linear fits of `|U_P(t, s)|` and `|U_Q(s, t)|` against `t - s`.
/// `beta` is the smaller decay rate, `N` the smallest prefactor dominating
/// every sample at that rate, `H` the largest sampled `|P|`.
pub fn fit_dichotomy_constants(
    splitting: &DichotomySplitting,
    sample_pairs: &[(f64, f64)],
) -> Result<DichotomySplitting> {
    if sample_pairs.is_empty() {
        return Err(Error::InvalidArgument("no sample pairs".into()));
    }
    let rows: Vec<(f64, f64, f64, f64, f64)> = sample_pairs
        .par_iter()
        .map(|&(t, s)| {
            let (t, s) = if t >= s { (t, s) } else { (s, t) };
            let hp = splitting.frame(t)?.p_norm().max(splitting.frame(s)?.p_norm());
            let gap = splitting.point(t)?.sv_gap.min(splitting.point(s)?.sv_gap);
            Ok((
                t - s,
                splitting.stable_norm(t, s)?.ln(),
                splitting.unstable_norm(t, s)?.ln(),
                hp,
                gap,
            ))
        })
        .collect::<Result<_>>()?;
    let fit: Vec<(f64, f64)> = rows.iter().filter(|r| r.0 > 0.0).map(|r| (r.0, r.1)).collect();
    let fit_q: Vec<(f64, f64)> = rows.iter().filter(|r| r.0 > 0.0).map(|r| (r.0, r.2)).collect();
    if fit.len() < 2 {
        return Err(Error::InvalidArgument("need at least two pairs with t > s".into()));
    }
    let (slope_p, icpt_p) = least_squares(&fit);
    let (slope_q, icpt_q) = least_squares(&fit_q);
    if !(slope_p < 0.0 && slope_q < 0.0) {
        return Err(Error::NoDichotomy(format!(
            "fitted slopes are not negative: stable {slope_p:.4}, unstable {slope_q:.4}"
        )));
    }
    let beta = (-slope_p).min(-slope_q);
    let log_n = rows
        .iter()
        .map(|r| (r.1 + beta * r.0).max(r.2 + beta * r.0))
        .fold(0.0_f64, f64::max);
    let span = fit.iter().map(|r| r.0).fold(0.0_f64, f64::max)
        - fit.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let rms = |data: &[(f64, f64)], slope: f64, icpt: f64| {
        (data.iter().map(|(x, y)| (y - slope * x - icpt).powi(2)).sum::<f64>() / data.len() as f64)
            .sqrt()
    };
    let scale = (-slope_p).min(-slope_q) * span.max(f64::MIN_POSITIVE);
    let fit_residual = rms(&fit, slope_p, icpt_p).max(rms(&fit_q, slope_q, icpt_q)) / scale;
    let h = rows.iter().map(|r| r.3).fold(1.0_f64, f64::max);
    let gap = rows.iter().map(|r| r.4).fold(splitting.sv_gap, f64::min);
    let mut out = splitting.clone();
    out.sv_gap = gap;
    out.constants = Some(DichotomyConstants {
        n: log_n.exp(),
        beta,
        h,
        beta_stable: -slope_p,
        beta_unstable: -slope_q,
        fit_residual,
        samples: rows.len(),
    });
    Ok(out)
}

/// Pairs `(t, s)` with `t - s` on a regular lag grid, anchored on a time grid.
pub fn lag_pairs(anchors: &[f64], max_lag: f64, lags: usize) -> Vec<(f64, f64)> {
    anchors
        .iter()
        .flat_map(|&s| (1..=lags).map(move |j| (s + max_lag * j as f64 / lags as f64, s)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct GreenFunction {
    pub splitting: Arc<DichotomySplitting>,
}

impl GreenFunction {
    pub fn new(splitting: DichotomySplitting) -> Result<Self> {
        splitting.constants()?;
        Ok(Self {
            splitting: Arc::new(splitting),
        })
    }

    pub fn prop(&self) -> &Propagator {
        &self.splitting.prop
    }

    pub fn constants(&self) -> DichotomyConstants {
        self.splitting.constants.expect("fitted at construction")
    }

    /// `P(t) U(t, s)` for `t > s`, `-U(t, s) Q(s)` for `t <= s`.
    pub fn green(&self, t: f64, s: f64) -> Result<Mat2> {
        let fs = self.splitting.frame(s)?;
        if t == s {
            return Ok(-fs.q());
        }
        let ft = self.splitting.frame(t)?;
        self.green_with_frames(t, s, &ft, &fs)
    }

    pub fn green_with_frames(&self, t: f64, s: f64, ft: &Frame, fs: &Frame) -> Result<Mat2> {
        if t == s {
            return Ok(-fs.q());
        }
        let back = self.prop().matrix(t, s)?;
        Ok(if t > s {
            let c = (back * ft.v).dot(&fs.v);
            ft.v * fs.w.transpose() / c
        } else {
            let c = (back * ft.u).dot(&fs.u);
            -(ft.u * fs.w_hat.transpose()) / c
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub t: f64,
    pub s: f64,
    pub norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub bound_prefactor: f64,
    pub beta: f64,
    pub worst_ratio: f64,
    pub worst_pair: (f64, f64),
    pub violations: usize,
    pub samples: usize,
    pub passed: bool,
}

/// Worst `|G(t, s)| e^{beta |t - s|} / ((1 + H) N)` over the pairs.
pub fn certify_green_decay(gf: &GreenFunction, pairs: &[(f64, f64)]) -> Result<DecayReport> {
    let k = gf.constants();
    let pref = k.green_prefactor();
    let samples: Vec<DecaySample> = pairs
        .par_iter()
        .map(|&(t, s)| {
            let norm = spectral_norm(&gf.green(t, s)?);
            Ok(DecaySample {
                t,
                s,
                norm,
                ratio: norm * (k.beta * (t - s).abs()).exp() / pref,
            })
        })
        .collect::<Result<_>>()?;
    let worst = samples
        .iter()
        .copied()
        .fold(None::<DecaySample>, |w, d| match w {
            Some(w) if w.ratio >= d.ratio => Some(w),
            _ => Some(d),
        })
        .ok_or_else(|| Error::InvalidArgument("no sample pairs".into()))?;
    let violations = samples.iter().filter(|d| d.ratio > 1.0).count();
    Ok(DecayReport {
        bound_prefactor: pref,
        beta: k.beta,
        worst_ratio: worst.ratio,
        worst_pair: (worst.t, worst.s),
        violations,
        samples: samples.len(),
        passed: violations == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenApCertificate {
    pub eta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub period: f64,
    pub interval_length: f64,
    /// `max |G(T + t, T + s) - G(t, s)| e^{gamma |t - s|}` over pairs with `|t - s| >= eta`.
    pub max_scaled_defect: f64,
    /// Same maximum with `e^{gamma (t - s)}`, the literal reading of the assumption.
    pub max_scaled_defect_signed: f64,
    pub max_raw_defect: f64,
    pub pairs_used: usize,
    pub valid: bool,
}

pub fn certify_green_almost_periodic(
    gf: &GreenFunction,
    period: f64,
    interval_length: f64,
    eta: f64,
    gamma: f64,
    epsilon: f64,
    pairs: &[(f64, f64)],
) -> Result<GreenApCertificate> {
    if !(eta > 0.0 && gamma > 0.0 && epsilon > 0.0) {
        return Err(Error::InvalidArgument("eta, gamma and epsilon must be positive".into()));
    }
    let used: Vec<(f64, f64)> = pairs.iter().copied().filter(|(t, s)| (t - s).abs() >= eta).collect();
    let defects: Vec<(f64, f64, f64)> = used
        .par_iter()
        .map(|&(t, s)| {
            let d = spectral_norm(&(gf.green(t + period, s + period)? - gf.green(t, s)?));
            Ok((d, d * (gamma * (t - s).abs()).exp(), d * (gamma * (t - s)).exp()))
        })
        .collect::<Result<_>>()?;
    let max = |f: fn(&(f64, f64, f64)) -> f64| defects.iter().map(f).fold(0.0_f64, f64::max);
    let max_scaled_defect = max(|d| d.1);
    Ok(GreenApCertificate {
        eta,
        gamma,
        epsilon,
        period,
        interval_length,
        max_scaled_defect,
        max_scaled_defect_signed: max(|d| d.2),
        max_raw_defect: max(|d| d.0),
        pairs_used: defects.len(),
        valid: max_scaled_defect <= epsilon,
    })
}

/// Window `20 / beta_rough`, clamped to `[8, 60]`, from a short pilot fit
/// at window 20.
pub fn pilot_window(prop: &Arc<Propagator>) -> Result<f64> {
    let pilot = DichotomySplitting::new(prop.clone(), 20.0)?;
    let anchors: Vec<f64> = (0..5).map(|i| 2.0 * i as f64).collect();
    let fitted = fit_dichotomy_constants(&pilot, &lag_pairs(&anchors, 8.0, 8))?;
    Ok((20.0 / fitted.constants()?.beta).clamp(8.0, 60.0))
}

//! Dirichlet problem `w_t = a(t)(w_xx + delta w) + kappa |w|^{k-1} w + g`
//! on `(0, pi)`, truncated to `sin(n x)`, `n = 1..=n_modes`.
//!
//! Each mode evolves by `exp(lambda_n (A(t) - A(s)))` with `A' = a` and
//! `lambda_n = delta - n^2`, so the Green kernel is scalar per mode. The
//! convolution is integrated in the variable `sigma = A(s)`, where the
//! kernel is a pure exponential: the integrand `f(s) / a(s)` is replaced by
//! its cubic interpolant and integrated against the exponential exactly,
//! which keeps stiff modes stable at any step.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dichotomy::DichotomyConstants;
use crate::mild::{required_radius, ContractionCertificate, SolverConfig};
use crate::quadrature::exp_product_weights;
use crate::signal::QuasiPeriodicSignal;
use crate::{Error, Result};

/// `|delta - n^2|` below this is a resonance in [`eigenvalues`].
pub const RESONANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineForcingTerm {
    pub mode: usize,
    pub signal: QuasiPeriodicSignal,
}

/// `g(t, x) = sum_n g_n(t) sin(n x)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SineForcing {
    pub terms: Vec<SineForcingTerm>,
}

impl SineForcing {
    pub fn single(mode: usize, signal: QuasiPeriodicSignal) -> Self {
        Self {
            terms: vec![SineForcingTerm { mode, signal }],
        }
    }

    pub fn coeffs(&self, t: f64, n_modes: usize) -> Vec<f64> {
        let mut c = vec![0.0; n_modes];
        for term in &self.terms {
            if (1..=n_modes).contains(&term.mode) {
                c[term.mode - 1] += term.signal.eval(t);
            }
        }
        c
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.terms.iter().map(|s| s.signal.eval(t) * (s.mode as f64 * x).sin()).sum()
    }
}

fn default_kappa() -> f64 {
    1.0
}

fn default_modes() -> usize {
    32
}

fn default_margin() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSpec {
    pub delta: f64,
    pub a: QuasiPeriodicSignal,
    pub k: u32,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub g: SineForcing,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default = "default_margin")]
    pub resonance_margin: f64,
}

impl PdeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("k = {} must be at least 2", self.k)));
        }
        if self.n_modes == 0 {
            return Err(Error::InvalidArgument("n_modes must be positive".into()));
        }
        let (g0, _) = self.a_bounds();
        if !(g0 > 0.0) {
            return Err(Error::InvalidArgument(format!("a(t) has lower bound {g0}, must be positive")));
        }
        for n in 1..=self.n_modes {
            let d = self.delta - (n * n) as f64;
            if d.abs() < self.resonance_margin {
                return Err(Error::Resonance {
                    n: n as u64,
                    delta: self.delta,
                    margin: self.resonance_margin,
                });
            }
        }
        Ok(())
    }

    /// `(gamma_0, gamma_1)` with `gamma_0 <= a(t) <= gamma_1`.
    pub fn a_bounds(&self) -> (f64, f64) {
        (self.a.lower_bound(), self.a.triangle_bound())
    }

    /// `sup_t |g(t, .)|_{L^2}` on the grid.
    pub fn forcing_l2_sup(&self, window: (f64, f64), step: f64) -> f64 {
        let n = ((window.1 - window.0) / step).ceil() as usize;
        (0..=n)
            .map(|i| l2_norm(&self.g.coeffs(window.0 + i as f64 * step, self.n_modes)))
            .fold(0.0, f64::max)
    }

    /// `kappa k (2 rho)^{k-1}`.
    pub fn lipschitz_on_ball(&self, rho: f64) -> f64 {
        self.kappa.abs() * self.k as f64 * (2.0 * rho).powi(self.k as i32 - 1)
    }

    pub fn nonlinear(&self, w: f64) -> f64 {
        self.kappa * w.abs().powi(self.k as i32 - 1) * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub lambdas: Vec<f64>,
    /// 1-based indices with `lambda_n > 0`.
    pub unstable: Vec<usize>,
}

impl Spectrum {
    pub fn rank_q(&self) -> usize {
        self.unstable.len()
    }

    pub fn is_unstable(&self, n: usize) -> bool {
        self.lambdas[n - 1] > 0.0
    }
}

pub fn eigenvalues(delta: f64, n_modes: usize) -> Result<Spectrum> {
    let mut lambdas = Vec::with_capacity(n_modes);
    for n in 1..=n_modes {
        let l = delta - (n * n) as f64;
        if l.abs() < RESONANCE_TOL {
            return Err(Error::Resonance {
                n: n as u64,
                delta,
                margin: RESONANCE_TOL,
            });
        }
        lambdas.push(l);
    }
    let unstable = (1..=n_modes).filter(|&n| lambdas[n - 1] > 0.0).collect();
    Ok(Spectrum { lambdas, unstable })
}

/// Diagonal of `U(t, s)`.
pub fn evolution(spec: &PdeSpec, s: f64, t: f64) -> Result<Vec<f64>> {
    let sp = eigenvalues(spec.delta, spec.n_modes)?;
    let ia = spec.a.antiderivative(t) - spec.a.antiderivative(s);
    Ok(sp.lambdas.iter().map(|l| (l * ia).exp()).collect())
}

/// `N = H = 1`, `beta = gamma_0 min |lambda_n|`; `P` keeps the stable modes.
pub fn dichotomy_constants_pde(spec: &PdeSpec) -> Result<DichotomyConstants> {
    let sp = eigenvalues(spec.delta, spec.n_modes)?;
    let (g0, _) = spec.a_bounds();
    let gap = sp.lambdas.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let beta = g0 * gap;
    Ok(DichotomyConstants {
        n: 1.0,
        beta,
        h: 1.0,
        beta_stable: beta,
        beta_unstable: beta,
        fit_residual: 0.0,
        samples: 0,
    })
}

/// `|sum c_n sin(n .)|_{L^2(0, pi)}`.
pub fn l2_norm(coeffs: &[f64]) -> f64 {
    (PI / 2.0).sqrt() * coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SineField {
    pub coeffs: Vec<f64>,
}

impl SineField {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c * ((i + 1) as f64 * x).sin()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.coeffs)
    }
}

/// Sine collocation on `x_j = j pi / M`, `j = 1..M-1`; exact for
/// `sin(n x)`, `n < M`.
#[derive(Debug, Clone)]
pub struct Collocation {
    m: usize,
    table: Vec<f64>,
}

impl Collocation {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2);
        let p = m - 1;
        let mut table = vec![0.0; p * p];
        for n in 1..=p {
            for j in 1..=p {
                table[(n - 1) * p + (j - 1)] = ((n * j) as f64 * PI / m as f64).sin();
            }
        }
        Self { m, table }
    }

    /// Twice the truncation, so quadratic products are resolved.
    pub fn dealiased(n_modes: usize) -> Self {
        Self::new(2 * (n_modes + 1))
    }

    pub fn points(&self) -> Vec<f64> {
        (1..self.m).map(|j| j as f64 * PI / self.m as f64).collect()
    }

    pub fn to_values(&self, coeffs: &[f64]) -> Vec<f64> {
        let p = self.m - 1;
        let mut v = vec![0.0; p];
        for (n, c) in coeffs.iter().enumerate().take(p) {
            if *c == 0.0 {
                continue;
            }
            let row = &self.table[n * p..(n + 1) * p];
            for (vj, s) in v.iter_mut().zip(row) {
                *vj += c * s;
            }
        }
        v
    }

    /// First `n_modes` coefficients of the interpolant.
    pub fn to_coeffs(&self, values: &[f64], n_modes: usize) -> Vec<f64> {
        let p = self.m - 1;
        let scale = 2.0 / self.m as f64;
        (0..n_modes.min(p))
            .map(|n| {
                let row = &self.table[n * p..(n + 1) * p];
                scale * row.iter().zip(values).map(|(s, v)| s * v).sum::<f64>()
            })
            .chain(std::iter::repeat(0.0).take(n_modes.saturating_sub(p)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    pub times: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    pub window: (f64, f64),
    pub n_modes: usize,
    pub truncation_radius: f64,
    pub quad_step: f64,
    pub picard_iters: usize,
    pub update_norms: Vec<f64>,
    pub ratio_violations: Vec<(usize, f64)>,
    pub final_update_norm: f64,
    /// `sup_t` of the `L^2` norm carried by modes above `n_modes / 2`.
    pub mode_tail: f64,
    pub spectrum: Spectrum,
}

impl PdeSolution {
    pub fn field(&self, i: usize) -> SineField {
        SineField {
            coeffs: self.coeffs[i].clone(),
        }
    }

    /// Linear interpolation between nodes; for diagnostics only.
    pub fn coeffs_at(&self, t: f64) -> Vec<f64> {
        let x = ((t - self.times[0]) / self.quad_step).clamp(0.0, (self.times.len() - 1) as f64);
        let j = (x.floor() as usize).min(self.times.len().saturating_sub(2));
        let th = x - j as f64;
        self.coeffs[j]
            .iter()
            .zip(&self.coeffs[(j + 1).min(self.times.len() - 1)])
            .map(|(a, b)| a * (1.0 - th) + b * th)
            .collect()
    }

    pub fn sup_l2(&self) -> f64 {
        self.coeffs.iter().map(|c| l2_norm(c)).fold(0.0, f64::max)
    }

    /// `max |w(t, 0)|, |w(t, pi)|` over the nodes.
    pub fn dirichlet_residual(&self) -> f64 {
        (0..self.times.len())
            .map(|i| {
                let f = self.field(i);
                f.eval(0.0).abs().max(f.eval(PI).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Per-mode stencils: for each step, the start of the 4-node stencil and
/// the exponential product weights.
struct ModeStencils {
    start: Vec<usize>,
    weights: Vec<[f64; 4]>,
    decay: Vec<f64>,
}

fn stencils(lambda: f64, sigma: &[f64]) -> ModeStencils {
    let n = sigma.len();
    let steps = n - 1;
    let mut start = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps);
    let mut decay = Vec::with_capacity(steps);
    for i in 0..steps {
        let s0 = i.saturating_sub(1).min(n.saturating_sub(4));
        let d = sigma[i + 1] - sigma[i];
        let w = if lambda < 0.0 {
            // forward: int_{sigma_i}^{sigma_i+1} e^{lambda (sigma_{i+1} - s)} F
            let nodes: Vec<f64> = (s0..s0 + 4).map(|j| sigma[j] - sigma[i]).collect();
            exp_product_weights(lambda, d, &nodes)
        } else {
            // backward: int_{sigma_i}^{sigma_i+1} e^{lambda (sigma_i - s)} F
            let nodes: Vec<f64> = (s0..s0 + 4).map(|j| sigma[i + 1] - sigma[j]).collect();
            exp_product_weights(-lambda, d, &nodes)
        };
        start.push(s0);
        weights.push([w[0], w[1], w[2], w[3]]);
        decay.push((-lambda.abs() * d).exp());
    }
    ModeStencils { start, weights, decay }
}

fn convolve_mode(lambda: f64, st: &ModeStencils, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut y = vec![0.0; n];
    let dot = |i: usize| -> f64 { (0..4).map(|k| st.weights[i][k] * f[st.start[i] + k]).sum() };
    if lambda < 0.0 {
        for i in 0..n - 1 {
            y[i + 1] = st.decay[i] * y[i] + dot(i);
        }
    } else {
        for i in (0..n - 1).rev() {
            y[i] = st.decay[i] * y[i + 1] - dot(i);
        }
    }
    y
}

/// Bounded solution on `window` by Picard iteration over the per-mode
/// Green convolutions. The state norm is the `L^2(0, pi)` norm.
pub fn pde_picard_solve(
    spec: &PdeSpec,
    window: (f64, f64),
    config: &SolverConfig,
) -> Result<(PdeSolution, ContractionCertificate)> {
    spec.validate()?;
    if !(config.quad_step > 0.0) || !(window.0 <= window.1) {
        return Err(Error::Config(format!(
            "invalid window [{}, {}] or quad_step {}",
            window.0, window.1, config.quad_step
        )));
    }
    let spectrum = eigenvalues(spec.delta, spec.n_modes)?;
    let k = dichotomy_constants_pde(spec)?;
    let h = config.quad_step;
    let l = spec.lipschitz_on_ball(config.rho);
    let pilot = (window.0 - 5.0, window.1 + 5.0);
    let gamma0 = spec.forcing_l2_sup(pilot, h);
    let cert = ContractionCertificate::from_bounds(&k, l, config.rho, gamma0);
    cert.refuse_if_invalid()?;
    let required = required_radius(&k, l * config.rho + gamma0, config.tail_tol);
    let radius = match config.truncation_radius {
        Some(r) if r < required => return Err(Error::RadiusTooSmall { given: r, required }),
        Some(r) => r,
        None => required.max(4.0 * h),
    };
    let m = (radius / h).ceil() as usize;
    let inner = ((window.1 - window.0) / h).ceil() as usize;
    let n = inner + 4 * m + 1;
    let t0 = window.0 - 2.0 * m as f64 * h;
    let times: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
    let sigma: Vec<f64> = times.iter().map(|&t| spec.a.antiderivative(t)).collect();
    let inv_a: Vec<f64> = times.iter().map(|&t| 1.0 / spec.a.eval(t)).collect();
    let modes = spec.n_modes;
    let stencil: Vec<ModeStencils> = spectrum.lambdas.par_iter().map(|&lam| stencils(lam, &sigma)).collect();
    let forcing: Vec<Vec<f64>> = times.iter().map(|&t| spec.g.coeffs(t, modes)).collect();
    let colloc = Collocation::dealiased(modes);
    let nonlinear = spec.kappa != 0.0;
    let (k0, k1) = (m, n - 1 - m);
    let mut u: Vec<Vec<f64>> = vec![vec![0.0; modes]; n];
    let mut updates: Vec<f64> = Vec::new();
    let mut violations = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    for iter in 1..=config.max_iters {
        iters = iter;
        // integrand in sigma: (g + N(w)) / a, node-major
        let rhs: Vec<Vec<f64>> = u
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let mut r = forcing[i].clone();
                if nonlinear {
                    let vals: Vec<f64> = colloc.to_values(c).into_iter().map(|w| spec.nonlinear(w)).collect();
                    for (ri, ni) in r.iter_mut().zip(colloc.to_coeffs(&vals, modes)) {
                        *ri += ni;
                    }
                }
                r.iter_mut().for_each(|x| *x *= inv_a[i]);
                r
            })
            .collect();
        let per_mode: Vec<Vec<f64>> = (0..modes)
            .into_par_iter()
            .map(|j| {
                let f: Vec<f64> = rhs.iter().map(|r| r[j]).collect();
                convolve_mode(spectrum.lambdas[j], &stencil[j], &f)
            })
            .collect();
        let next: Vec<Vec<f64>> = (0..n).map(|i| per_mode.iter().map(|y| y[i]).collect()).collect();
        let update = (k0..=k1)
            .map(|i| {
                let d: Vec<f64> = next[i].iter().zip(&u[i]).map(|(a, b)| a - b).collect();
                l2_norm(&d)
            })
            .fold(0.0, f64::max);
        if let Some(&prev) = updates.last() {
            if prev > 10.0 * config.tol && update > (cert.k_lin + config.ratio_slack) * prev {
                violations.push((iter, update / prev));
            }
        }
        updates.push(update);
        u = next;
        if update < config.tol || !nonlinear {
            converged = true;
            break;
        }
    }
    if !converged {
        let ratios = updates.windows(2).map(|w| w[1] / w[0]).collect();
        return Err(Error::Divergence {
            iterations: config.max_iters,
            ratios,
        });
    }
    let kept: Vec<Vec<f64>> = u[k0..=k1].to_vec();
    let mode_tail = kept.iter().map(|c| l2_norm(&c[modes / 2..])).fold(0.0, f64::max);
    Ok((
        PdeSolution {
            times: times[k0..=k1].to_vec(),
            coeffs: kept,
            window,
            n_modes: modes,
            truncation_radius: m as f64 * h,
            quad_step: h,
            picard_iters: iters,
            final_update_norm: *updates.last().unwrap_or(&0.0),
            update_norms: updates,
            ratio_violations: violations,
            mode_tail,
            spectrum,
        },
        cert,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(delta: f64, a: QuasiPeriodicSignal, g: SineForcing, kappa: f64) -> PdeSpec {
        PdeSpec {
            delta,
            a,
            k: 2,
            kappa,
            g,
            n_modes: 16,
            resonance_margin: 1e-3,
        }
    }

    fn config() -> SolverConfig {
        SolverConfig {
            rho: 1.0,
            tol: 1e-12,
            tail_tol: 1e-10,
            quad_step: 0.025,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn eigenvalue_examples() {
        let s = eigenvalues(0.5, 4).unwrap();
        assert_eq!(s.lambdas, vec![-0.5, -3.5, -8.5, -15.5]);
        assert!(s.unstable.is_empty());
        let s = eigenvalues(2.0, 4).unwrap();
        assert_eq!((s.lambdas[0], s.unstable.clone(), s.rank_q()), (1.0, vec![1], 1));
        let s = eigenvalues(10.5, 5).unwrap();
        assert_eq!(s.unstable, vec![1, 2, 3]);
        assert!(matches!(eigenvalues(1.0, 3), Err(Error::Resonance { n: 1, .. })));
        assert!(matches!(eigenvalues(9.0, 2), Ok(_)));
        assert!(matches!(eigenvalues(9.0, 3), Err(Error::Resonance { n: 3, .. })));
    }

    #[test]
    fn evolution_examples() {
        let one = spec(0.5, QuasiPeriodicSignal::constant(1.0), SineForcing::default(), 0.0);
        let e = evolution(&one, 0.3, 1.3).unwrap();
        for (n, x) in e.iter().enumerate() {
            let l = 0.5 - ((n + 1) * (n + 1)) as f64;
            assert!((x - l.exp()).abs() <= 1e-15 * l.exp().max(1e-300));
        }
        let two = spec(
            0.5,
            QuasiPeriodicSignal::sines(&[(1.0, 1.0)]).sum(&QuasiPeriodicSignal::constant(2.0)),
            SineForcing::default(),
            0.0,
        );
        let e = evolution(&two, 0.0, 2.0 * PI).unwrap();
        assert!((e[0] - (-0.5 * 4.0 * PI).exp()).abs() < 1e-14);
        assert!(evolution(&two, 1.7, 1.7).unwrap().iter().all(|x| *x == 1.0));
    }

    #[test]
    fn pde_constants_examples() {
        let s = spec(0.5, QuasiPeriodicSignal::constant(1.0), SineForcing::default(), 0.0);
        let k = dichotomy_constants_pde(&s).unwrap();
        assert_eq!((k.n, k.beta, k.h), (1.0, 0.5, 1.0));
        let s = spec(
            2.0,
            QuasiPeriodicSignal::cosines(&[(1.0, 1.0)]).sum(&QuasiPeriodicSignal::constant(2.0)),
            SineForcing::default(),
            0.0,
        );
        assert_eq!(dichotomy_constants_pde(&s).unwrap().beta, 1.0);
        let doubled = PdeSpec {
            a: s.a.scaled(2.0),
            ..s.clone()
        };
        assert_eq!(dichotomy_constants_pde(&doubled).unwrap().beta, 2.0);
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(4.0005, QuasiPeriodicSignal::constant(1.0), SineForcing::default(), 0.0);
        assert!(matches!(s.validate(), Err(Error::Resonance { n: 2, .. })));
        s.delta = 0.5;
        s.a = QuasiPeriodicSignal::sines(&[(1.0, 1.0)]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn collocation_round_trip() {
        let c = Collocation::dealiased(8);
        let coeffs: Vec<f64> = (0..17).map(|i| ((i * 7 % 5) as f64 - 2.0) / (i + 1) as f64).collect();
        let back = c.to_coeffs(&c.to_values(&coeffs), 17);
        for (a, b) in coeffs.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let xs = c.points();
        let v = c.to_values(&coeffs);
        let f = SineField { coeffs };
        for (x, vx) in xs.iter().zip(&v) {
            assert!((f.eval(*x) - vx).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_linear_response() {
        let g = SineForcing::single(1, QuasiPeriodicSignal::cosines(&[(1.0, 1.0)]));
        let s = spec(0.5, QuasiPeriodicSignal::constant(1.0), g, 0.0);
        let c = SolverConfig { rho: 20.0, ..config() };
        let (sol, cert) = pde_picard_solve(&s, (0.0, 8.0), &c).unwrap();
        assert!(cert.valid);
        let (lh, om) = (0.5, 1.0);
        for (t, coeff) in sol.times.iter().zip(&sol.coeffs) {
            let y = (om * t.sin() + lh * t.cos()) / (lh * lh + om * om);
            assert!((coeff[0] - y).abs() < 1e-6, "t = {t}");
            assert!(coeff[1..].iter().all(|x| *x == 0.0));
        }
        assert!(sol.dirichlet_residual() < 1e-10);
    }

    #[test]
    fn unstable_mode_linear_response() {
        // delta = 2: mode 1 grows, y' = y + sin t has bounded solution -(sin t + cos t)/2
        let g = SineForcing::single(1, QuasiPeriodicSignal::sines(&[(1.0, 1.0)]));
        let s = spec(2.0, QuasiPeriodicSignal::constant(1.0), g, 0.0);
        let c = SolverConfig { rho: 20.0, ..config() };
        let (sol, _) = pde_picard_solve(&s, (0.0, 6.0), &c).unwrap();
        for (t, coeff) in sol.times.iter().zip(&sol.coeffs) {
            assert!((coeff[0] + (t.sin() + t.cos()) / 2.0).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn time_varying_coefficient_matches_ode() {
        // y' = a(t)(-0.5 y) + cos t with a = 2 + sin t, checked by RK4 over a window
        let a = QuasiPeriodicSignal::sines(&[(1.0, 1.0)]).sum(&QuasiPeriodicSignal::constant(2.0));
        let g = SineForcing::single(1, QuasiPeriodicSignal::cosines(&[(1.0, 1.0)]));
        let s = spec(0.5, a.clone(), g, 0.0);
        let c = SolverConfig { rho: 20.0, ..config() };
        let (sol, _) = pde_picard_solve(&s, (0.0, 12.0), &c).unwrap();
        let i0 = sol.times.iter().position(|t| *t >= 0.0).unwrap();
        let mut y = sol.coeffs[i0][0];
        let f = |t: f64, y: f64| -0.5 * a.eval(t) * y + t.cos();
        let h = sol.quad_step;
        let mut worst = 0.0_f64;
        for i in i0..i0 + 400 {
            let t = sol.times[i];
            let k1 = f(t, y);
            let k2 = f(t + h / 2.0, y + h / 2.0 * k1);
            let k3 = f(t + h / 2.0, y + h / 2.0 * k2);
            let k4 = f(t + h, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            worst = worst.max((y - sol.coeffs[i + 1][0]).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let s = spec(0.5, QuasiPeriodicSignal::constant(1.0), SineForcing::default(), 0.0);
        let (sol, _) = pde_picard_solve(&s, (0.0, 2.0), &config()).unwrap();
        assert_eq!(sol.sup_l2(), 0.0);
    }

    fn semilinear(n_modes: usize) -> PdeSpec {
        let g = SineForcing {
            terms: vec![
                SineForcingTerm {
                    mode: 1,
                    signal: QuasiPeriodicSignal::cosines(&[(1.0, 4e-4)]),
                },
                SineForcingTerm {
                    mode: 2,
                    signal: QuasiPeriodicSignal::sines(&[(2f64.sqrt(), 2e-4)]),
                },
            ],
        };
        PdeSpec {
            n_modes,
            ..spec(0.5, QuasiPeriodicSignal::constant(1.0), g, 1.0)
        }
    }

    #[test]
    fn semilinear_contraction_and_mode_doubling() {
        let c = SolverConfig { rho: 0.02, ..config() };
        let (a, cert) = pde_picard_solve(&semilinear(8), (0.0, 4.0), &c).unwrap();
        assert!(cert.valid && a.ratio_violations.is_empty(), "{:?}", a.update_norms);
        assert!(a.picard_iters > 1);
        let (b, _) = pde_picard_solve(&semilinear(16), (0.0, 4.0), &c).unwrap();
        let change = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| {
                let mut d: Vec<f64> = y.clone();
                for (di, xi) in d.iter_mut().zip(x) {
                    *di -= xi;
                }
                l2_norm(&d)
            })
            .fold(0.0, f64::max);
        assert!(change < a.mode_tail, "{change} vs {}", a.mode_tail);
    }

    #[test]
    fn linear_solve_respects_bound_and_linearity() {
        let g1 = SineForcing::single(2, QuasiPeriodicSignal::cosines(&[(1.3, 1.0)]));
        let g2 = SineForcing::single(3, QuasiPeriodicSignal::sines(&[(0.4, 0.5)]));
        let both = SineForcing {
            terms: g1.terms.iter().chain(&g2.terms).cloned().collect(),
        };
        let c = SolverConfig { rho: 100.0, truncation_radius: Some(30.0), ..config() };
        let a = QuasiPeriodicSignal::constant(1.0);
        let run = |g: SineForcing| pde_picard_solve(&spec(2.0, a.clone(), g, 0.0), (0.0, 3.0), &c).unwrap().0;
        let (s1, s2, s12) = (run(g1), run(g2), run(both));
        for i in 0..s12.times.len() {
            for j in 0..16 {
                assert!((s12.coeffs[i][j] - s1.coeffs[i][j] - s2.coeffs[i][j]).abs() < 1e-12);
            }
        }
        let k = dichotomy_constants_pde(&spec(2.0, a.clone(), SineForcing::default(), 0.0)).unwrap();
        let hsup = (PI / 2.0).sqrt() * 1.25f64.sqrt();
        assert!(s12.sup_l2() <= 2.0 * k.green_prefactor() / k.beta * hsup);
    }

    proptest! {
        #[test]
        fn evolution_is_diagonal_cocycle(s in -5.0f64..5.0, r in -5.0f64..5.0, t in -5.0f64..5.0) {
            let sp = spec(2.0, QuasiPeriodicSignal::cosines(&[(1.0, 0.5)]).sum(&QuasiPeriodicSignal::constant(1.0)),
                SineForcing::default(), 0.0);
            let (ts, tr, rs) = (evolution(&sp, s, t).unwrap(), evolution(&sp, r, t).unwrap(), evolution(&sp, s, r).unwrap());
            for n in 0..4 {
                prop_assert!((ts[n] - tr[n] * rs[n]).abs() <= 1e-12 * ts[n].abs().max(1.0));
            }
        }
    }
}

//! Bounded mild solutions `u(t) = int G(t, s) h(s, u(s)) ds` by truncated
//! composite quadrature and Picard iteration, on the whole line and on the
//! half line `u(t) = U(t, 0) zeta0 + int_0^inf G(t, s) h(s, u(s)) ds`.
//!
//! On a uniform node grid the kernel factorizes through the splitting
//! frames: with one-step growths `a_k = w_{k+1} . U(t_{k+1}, t_k) v_k` and
//! `b_k = w_hat_{k+1} . U(t_{k+1}, t_k) u_k`,
//!
//! ```text
//! G(t_i, s_j) =  (a_j ... a_{i-1})      v_i w_j^T      j <= i
//! G(t_i, s_j) = -(b_i ... b_{j-1})^{-1} u_i w_hat_j^T  j >  i
//! ```
//!
//! so a sweep needs one multiply per node pair and never forms a long
//! propagator product. Quadrature is composite Simpson on each side of
//! the diagonal, closed by a 3/8 panel for odd interval counts.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{DichotomyConstants, Frame, GreenApCertificate, GreenFunction};
use crate::lienard::PlanarSystem;
use crate::linalg::{Mat2, Vec2};
use crate::quadrature::{composite_weights, ONE_INTERVAL_EXTRAPOLATED};
use crate::signal::SignalClass;
use crate::{Error, Result};

pub type NonlinearField = Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>;

#[derive(Clone)]
pub struct NonlinearitySpec {
    pub h: NonlinearField,
    /// Lipschitz constant on the ball of radius `rho`.
    pub l: f64,
    /// Lipschitz constant on the ball of radius `2 rho`.
    pub l1: f64,
    pub rho: f64,
    /// `sup_t |h(t, 0)|`.
    pub gamma0: f64,
    pub declared_class: SignalClass,
}

impl std::fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("l", &self.l)
            .field("l1", &self.l1)
            .field("rho", &self.rho)
            .field("gamma0", &self.gamma0)
            .field("declared_class", &self.declared_class)
            .finish_non_exhaustive()
    }
}

impl NonlinearitySpec {
    pub fn from_system(sys: &PlanarSystem, rho: f64, declared_class: SignalClass) -> Self {
        let s = sys.clone();
        Self {
            h: Arc::new(move |t, u| s.h(t, u)),
            l: sys.lipschitz_on_ball(rho),
            l1: sys.lipschitz_on_ball(2.0 * rho),
            rho,
            gamma0: sys.forcing_bound,
            declared_class,
        }
    }

    /// A forcing independent of the state.
    pub fn forcing(
        f: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
        bound: f64,
        rho: f64,
    ) -> Self {
        Self {
            h: Arc::new(move |t, _| f(t)),
            l: 0.0,
            l1: 0.0,
            rho,
            gamma0: bound,
            declared_class: SignalClass::Cb,
        }
    }

    pub fn eval(&self, t: f64, u: Vec2) -> Vec2 {
        (self.h)(t, u)
    }

    /// `L rho + gamma0`, the bound of `|h(t, v)|` on the `rho` ball.
    pub fn ball_bound(&self) -> f64 {
        self.l * self.rho + self.gamma0
    }

    /// Largest `|h(t, v1) - h(t, v2)| / |v1 - v2|` over random pairs in the
    /// ball of the given radius.
    pub fn sampled_lipschitz(&self, window: (f64, f64), radius: f64, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ball = |rng: &mut ChaCha8Rng| loop {
            let v = Vec2::new(rng.random_range(-radius..=radius), rng.random_range(-radius..=radius));
            if v.norm() <= radius {
                return v;
            }
        };
        (0..pairs)
            .map(|_| {
                let t = rng.random_range(window.0..=window.1);
                let (a, b) = (ball(&mut rng), ball(&mut rng));
                let d = (a - b).norm();
                if d == 0.0 {
                    0.0
                } else {
                    (self.eval(t, a) - self.eval(t, b)).norm() / d
                }
            })
            .fold(0.0, f64::max)
    }

    /// Grid sup of `|h(t, 0)|`.
    pub fn sampled_gamma0(&self, window: (f64, f64), step: f64) -> f64 {
        let n = ((window.1 - window.0) / step).ceil() as usize;
        (0..=n)
            .map(|i| self.eval(window.0 + i as f64 * step, Vec2::zeros()).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub tail_tol: f64,
    pub quad_step: f64,
    pub ratio_slack: f64,
    /// Overrides the radius derived from `tail_tol`; must not be smaller.
    pub truncation_radius: Option<f64>,
    pub residual_probes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol: 1e-10,
            max_iters: 60,
            tail_tol: 1e-8,
            quad_step: 0.025,
            ratio_slack: 0.05,
            truncation_radius: None,
            residual_probes: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorKind {
    InitialValue,
    StableComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HalflineAnchor {
    /// Prescribed `u(0)`; must be compatible with a bounded solution.
    InitialValue([f64; 2]),
    /// Prescribed `P(0) u(0)`.
    StableComponent([f64; 2]),
}

impl HalflineAnchor {
    pub fn vector(&self) -> Vec2 {
        match self {
            HalflineAnchor::InitialValue(v) | HalflineAnchor::StableComponent(v) => Vec2::from(*v),
        }
    }

    pub fn kind(&self) -> AnchorKind {
        match self {
            HalflineAnchor::InitialValue(_) => AnchorKind::InitialValue,
            HalflineAnchor::StableComponent(_) => AnchorKind::StableComponent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    pub kind: AnchorKind,
    pub u0: [f64; 2],
    pub zeta0: [f64; 2],
    /// `|Q(0) zeta0|` before projection.
    pub q_defect: f64,
    /// `|u(0) - u0|` for an initial-value anchor, 0 otherwise.
    pub initial_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub k_lin: f64,
    pub apriori: f64,
    pub halfline_apriori: Option<f64>,
    pub l: f64,
    pub rho: f64,
    pub gamma0: f64,
    pub constants: DichotomyConstants,
    pub valid: bool,
    pub failed: Vec<String>,
}

impl ContractionCertificate {
    /// `k = 2(1+H)N L / beta < 1` and `2(1+H)N (L rho + gamma0) / beta <= rho`.
    pub fn whole_line(k: &DichotomyConstants, nl: &NonlinearitySpec) -> Self {
        Self::from_bounds(k, nl.l, nl.rho, nl.gamma0)
    }

    pub fn from_bounds(k: &DichotomyConstants, l: f64, rho: f64, gamma0: f64) -> Self {
        let g = 2.0 * k.green_prefactor() / k.beta;
        let k_lin = g * l;
        let apriori = g * (l * rho + gamma0);
        let mut failed = Vec::new();
        if !(k_lin < 1.0) {
            failed.push(format!("k_lin = 2(1+H)N L/beta = {k_lin:.6} is not < 1"));
        }
        if !(apriori <= rho) {
            failed.push(format!(
                "a-priori bound 2(1+H)N(L rho + gamma0)/beta = {apriori:.6} exceeds rho = {rho}"
            ));
        }
        Self {
            k_lin,
            apriori,
            halfline_apriori: None,
            l,
            rho,
            gamma0,
            constants: *k,
            valid: failed.is_empty(),
            failed,
        }
    }

    /// Initial value: `N |u0| + 3(1+H)N (L rho + gamma0) / beta <= rho`.
    /// Stable component: `N |v0| + 2(1+H)N (L rho + gamma0) / beta <= rho`,
    /// since no `G(0, s)` correction enters `zeta0`.
    pub fn half_line(k: &DichotomyConstants, nl: &NonlinearitySpec, anchor: &HalflineAnchor) -> Self {
        let mut c = Self::whole_line(k, nl);
        c.failed.retain(|f| !f.starts_with("a-priori"));
        let factor = match anchor.kind() {
            AnchorKind::InitialValue => 3.0,
            AnchorKind::StableComponent => 2.0,
        };
        let b = k.n * anchor.vector().norm() + factor * k.green_prefactor() * nl.ball_bound() / k.beta;
        if !(b <= nl.rho) {
            c.failed.push(format!(
                "half-line a-priori bound N|u0| + {factor}(1+H)N(L rho + gamma0)/beta = {b:.6} exceeds rho = {}",
                nl.rho
            ));
        }
        c.halfline_apriori = Some(b);
        c.valid = c.failed.is_empty();
        c
    }

    pub fn refuse_if_invalid(&self) -> Result<()> {
        if self.valid {
            Ok(())
        } else {
            Err(Error::CertificateRefused(self.failed.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub times: Vec<f64>,
    pub values: Vec<[f64; 2]>,
    /// `A(t) u + h(t, u)` at the nodes, for Hermite interpolation.
    pub derivatives: Vec<[f64; 2]>,
    /// Requested output window; `times` covers it with margin.
    pub window: (f64, f64),
    pub truncation_radius: f64,
    pub quad_step: f64,
    pub picard_iters: usize,
    pub final_update_norm: f64,
    pub update_norms: Vec<f64>,
    /// Update ratios exceeding `k_lin + slack` while the previous update was above `10 tol`.
    pub ratio_violations: Vec<(usize, f64)>,
    pub residual_norm: f64,
    pub tail_bound: f64,
    pub halfline_anchor: Option<AnchorReport>,
}

impl GridSolution {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, i: usize) -> Vec2 {
        Vec2::from(self.values[i])
    }

    /// Cubic Hermite interpolation; `t` must lie in the node range.
    pub fn at(&self, t: f64) -> Vec2 {
        let n = self.times.len();
        let t0 = self.times[0];
        let h = self.quad_step;
        let x = ((t - t0) / h).clamp(0.0, (n - 1) as f64);
        let j = (x.floor() as usize).min(n.saturating_sub(2));
        let th = x - j as f64;
        if n == 1 {
            return self.value(0);
        }
        let (y0, y1) = (self.value(j), self.value(j + 1));
        let (d0, d1) = (Vec2::from(self.derivatives[j]), Vec2::from(self.derivatives[j + 1]));
        let t2 = th * th;
        let t3 = t2 * th;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * ((t3 - 2.0 * t2 + th) * h)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * ((t3 - t2) * h)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    /// Sup norm over the nodes inside `[a, b]`.
    pub fn sup_norm_on(&self, a: f64, b: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= a - 1e-12 && **t <= b + 1e-12)
            .map(|(_, v)| Vec2::from(*v).norm())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm_on(self.span().0, self.span().1)
    }

    pub fn window_sup_norm(&self) -> f64 {
        self.sup_norm_on(self.window.0, self.window.1)
    }
}

/// Radius with `(1+H)N S e^{-beta R} / beta <= tail_tol`.
pub fn required_radius(k: &DichotomyConstants, forcing_sup: f64, tail_tol: f64) -> f64 {
    let x = k.green_prefactor() * forcing_sup / (k.beta * tail_tol);
    if x <= 1.0 {
        0.0
    } else {
        x.ln() / k.beta
    }
}

/// Splitting frames and one-step growths on a uniform node grid.
struct NodeKernel {
    times: Vec<f64>,
    frames: Vec<Frame>,
    a: Vec<f64>,
    b: Vec<f64>,
    step: f64,
}

impl NodeKernel {
    fn build(gf: &GreenFunction, t0: f64, step: f64, n: usize) -> Result<Self> {
        let times: Vec<f64> = (0..n).map(|i| t0 + i as f64 * step).collect();
        let frames: Vec<Frame> = times
            .par_iter()
            .map(|&t| gf.splitting.frame(t))
            .collect::<Result<_>>()?;
        let growth: Vec<(f64, f64)> = (0..n.saturating_sub(1))
            .into_par_iter()
            .map(|k| {
                let m = gf.prop().matrix(times[k], times[k + 1])?;
                Ok((
                    frames[k + 1].w.dot(&(m * frames[k].v)),
                    frames[k + 1].w_hat.dot(&(m * frames[k].u)),
                ))
            })
            .collect::<Result<_>>()?;
        let (a, b) = growth.into_iter().unzip();
        Ok(Self {
            times,
            frames,
            a,
            b,
            step,
        })
    }

    fn len(&self) -> usize {
        self.times.len()
    }

    /// `int_{max(t_0, t_i - R)}^{t_i + R} G(t_i, s) f(s) ds` for every node,
    /// truncated at the grid ends, with `m` intervals per side.
    fn sweep(&self, f: &[Vec2], m: usize, weights: &[Vec<f64>]) -> Vec<Vec2> {
        let n = self.len();
        let h = self.step;
        // stable and unstable coordinates of the integrand
        let fv: Vec<f64> = (0..n).map(|j| self.frames[j].w.dot(&f[j])).collect();
        let fu: Vec<f64> = (0..n).map(|j| self.frames[j].w_hat.dot(&f[j])).collect();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let nl = i.min(m);
                let mut left = 0.0;
                if nl >= 2 || (nl == 1 && i + 1 >= n) {
                    let w = &weights[nl];
                    let j0 = i - nl;
                    let mut g = 1.0;
                    for j in (j0..=i).rev() {
                        if j < i {
                            g *= self.a[j];
                        }
                        left += w[j - j0] * g * fv[j];
                    }
                } else if nl == 1 {
                    // quadratic through t_{i-1}, t_i and the continued branch at t_{i+1}
                    let [w0, w1, w2] = ONE_INTERVAL_EXTRAPOLATED;
                    left = w0 * self.a[i - 1] * fv[i - 1] + w1 * fv[i] + w2 * fv[i + 1] / self.a[i];
                }
                let nr = (n - 1 - i).min(m);
                let mut right = 0.0;
                if nr >= 2 || (nr == 1 && i == 0) {
                    let w = &weights[nr];
                    let mut g = 1.0;
                    for j in i..=i + nr {
                        if j > i {
                            g /= self.b[j - 1];
                        }
                        right += w[j - i] * g * fu[j];
                    }
                } else if nr == 1 {
                    let [w0, w1, w2] = ONE_INTERVAL_EXTRAPOLATED;
                    right = w0 * fu[i + 1] / self.b[i] + w1 * fu[i] + w2 * self.b[i - 1] * fu[i - 1];
                }
                let fr = &self.frames[i];
                h * (left * fr.v - right * fr.u)
            })
            .collect()
    }
}

struct Layout {
    t0: f64,
    n: usize,
    m: usize,
    radius: f64,
    /// Index range written to the solution.
    keep: (usize, usize),
}

fn whole_line_layout(window: (f64, f64), radius: f64, step: f64) -> Result<Layout> {
    check_window(window, step)?;
    let m = ((radius / step).ceil() as usize).max(2);
    let inner = ((window.1 - window.0) / step).ceil() as usize;
    let n = inner + 4 * m + 1;
    Ok(Layout {
        t0: window.0 - 2.0 * m as f64 * step,
        n,
        m,
        radius: m as f64 * step,
        keep: (m, n - 1 - m),
    })
}

fn half_line_layout(window_end: f64, radius: f64, step: f64) -> Result<Layout> {
    check_window((0.0, window_end), step)?;
    let m = ((radius / step).ceil() as usize).max(2);
    let inner = (window_end / step).ceil() as usize;
    let n = inner + 2 * m + 1;
    Ok(Layout {
        t0: 0.0,
        n,
        m,
        radius: m as f64 * step,
        keep: (0, n - 1 - m),
    })
}

fn check_window(window: (f64, f64), step: f64) -> Result<()> {
    if !(step > 0.0) {
        return Err(Error::Config("quad_step must be positive".into()));
    }
    if !(window.0 <= window.1) {
        return Err(Error::InvalidArgument(format!("empty window [{}, {}]", window.0, window.1)));
    }
    Ok(())
}

fn radius_for(gf: &GreenFunction, forcing_sup: f64, config: &SolverConfig) -> Result<f64> {
    let required = required_radius(&gf.constants(), forcing_sup, config.tail_tol);
    match config.truncation_radius {
        Some(r) if r < required => Err(Error::RadiusTooSmall { given: r, required }),
        Some(r) => Ok(r),
        None => Ok(required.max(2.0 * config.quad_step)),
    }
}

type Initial<'a> = Option<&'a (dyn Fn(f64) -> Vec2 + Sync)>;

struct Run {
    values: Vec<Vec2>,
    iters: usize,
    updates: Vec<f64>,
    violations: Vec<(usize, f64)>,
    anchor: Option<AnchorReport>,
}

#[allow(clippy::too_many_arguments)]
fn picard(
    kernel: &NodeKernel,
    layout: &Layout,
    nl: &NonlinearitySpec,
    config: &SolverConfig,
    ratio_bound: f64,
    anchor: Option<&HalflineAnchor>,
    initial: Initial<'_>,
) -> Result<Run> {
    let n = kernel.len();
    let weights: Vec<Vec<f64>> = (0..=layout.m).map(composite_weights).collect();
    // U(t_i, 0) v_0 = (a_0 ... a_{i-1}) v_i
    let stable_growth: Vec<f64> = std::iter::once(1.0)
        .chain(kernel.a.iter().scan(1.0, |g, a| {
            *g *= a;
            Some(*g)
        }))
        .collect();
    let mut u: Vec<Vec2> = match initial {
        Some(f) => kernel.times.iter().map(|&t| f(t)).collect(),
        None => vec![Vec2::zeros(); n],
    };
    let (k0, k1) = layout.keep;
    let mut updates = Vec::new();
    let mut violations = Vec::new();
    let mut anchor_report = None;
    for iter in 1..=config.max_iters {
        let hv: Vec<Vec2> = kernel
            .times
            .par_iter()
            .zip(u.par_iter())
            .map(|(&t, &x)| nl.eval(t, x))
            .collect();
        let mut next = kernel.sweep(&hv, layout.m, &weights);
        if let Some(anchor) = anchor {
            let f0 = &kernel.frames[0];
            let raw = match anchor {
                HalflineAnchor::InitialValue(u0) => Vec2::from(*u0) - next[0],
                HalflineAnchor::StableComponent(v0) => Vec2::from(*v0),
            };
            let alpha = f0.w.dot(&raw);
            for (x, (fr, g)) in next.iter_mut().zip(kernel.frames.iter().zip(&stable_growth)) {
                *x += alpha * g * fr.v;
            }
            let zeta = alpha * f0.v;
            anchor_report = Some(AnchorReport {
                kind: anchor.kind(),
                u0: anchor.vector().into(),
                zeta0: zeta.into(),
                q_defect: (f0.q() * raw).norm(),
                initial_defect: match anchor {
                    HalflineAnchor::InitialValue(u0) => (next[0] - Vec2::from(*u0)).norm(),
                    HalflineAnchor::StableComponent(_) => 0.0,
                },
            });
        }
        let update = (k0..=k1).map(|i| (next[i] - u[i]).norm()).fold(0.0, f64::max);
        if let Some(&prev) = updates.last() {
            if prev > 10.0 * config.tol && update > ratio_bound * prev {
                violations.push((iter, update / prev));
            }
        }
        updates.push(update);
        u = next;
        if update < config.tol || (nl.l == 0.0 && initial.is_none()) {
            return Ok(Run {
                values: u,
                iters: iter,
                updates,
                violations,
                anchor: anchor_report,
            });
        }
    }
    let ratios = updates.windows(2).map(|w| w[1] / w[0]).collect();
    Err(Error::Divergence {
        iterations: config.max_iters,
        ratios,
    })
}

fn assemble(
    gf: &GreenFunction,
    kernel: &NodeKernel,
    layout: &Layout,
    nl: &NonlinearitySpec,
    run: Run,
    window: (f64, f64),
    tail_bound: f64,
) -> GridSolution {
    let (k0, k1) = layout.keep;
    let times = kernel.times[k0..=k1].to_vec();
    let values: Vec<Vec2> = run.values[k0..=k1].to_vec();
    let derivatives = times
        .iter()
        .zip(&values)
        .map(|(&t, &x)| (gf.prop().coefficient(t) * x + nl.eval(t, x)).into())
        .collect();
    GridSolution {
        times,
        values: values.into_iter().map(Into::into).collect(),
        derivatives,
        window,
        truncation_radius: layout.radius,
        quad_step: kernel.step,
        picard_iters: run.iters,
        final_update_norm: run.updates.last().copied().unwrap_or(0.0),
        update_norms: run.updates,
        ratio_violations: run.violations,
        residual_norm: f64::NAN,
        tail_bound,
        halfline_anchor: run.anchor,
    }
}

fn tail_bound(k: &DichotomyConstants, sup: f64, radius: f64) -> f64 {
    k.green_prefactor() * sup * (-k.beta * radius).exp() / k.beta
}

fn probe_times(window: (f64, f64), step: f64, count: usize) -> Vec<f64> {
    // off-grid: shifted by a third of a step
    (0..count)
        .map(|j| {
            let x = window.0 + (window.1 - window.0) * (j as f64 + 0.5) / count as f64;
            let snapped = window.0 + ((x - window.0) / step).floor() * step;
            (snapped + step / 3.0).min(window.1)
        })
        .collect()
}

/// Linear whole-line solve `u = int G(t, s) forcing(s) ds`.
pub fn convolve_green(
    gf: &GreenFunction,
    forcing: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
    forcing_bound: f64,
    window: (f64, f64),
    config: &SolverConfig,
) -> Result<GridSolution> {
    let nl = NonlinearitySpec::forcing(forcing, forcing_bound, config.rho);
    let radius = radius_for(gf, forcing_bound, config)?;
    let layout = whole_line_layout(window, radius, config.quad_step)?;
    let kernel = NodeKernel::build(gf, layout.t0, config.quad_step, layout.n)?;
    let run = picard(&kernel, &layout, &nl, config, f64::INFINITY, None, None)?;
    let tb = tail_bound(&gf.constants(), forcing_bound, layout.radius);
    let mut sol = assemble(gf, &kernel, &layout, &nl, run, window, tb);
    sol.residual_norm = residual(gf, &sol, &nl, &probe_times(window, config.quad_step, config.residual_probes))?;
    Ok(sol)
}

pub fn picard_solve_wholeline(
    gf: &GreenFunction,
    nl: &NonlinearitySpec,
    window: (f64, f64),
    config: &SolverConfig,
    initial: Initial<'_>,
) -> Result<(GridSolution, ContractionCertificate)> {
    let cert = ContractionCertificate::whole_line(&gf.constants(), nl);
    cert.refuse_if_invalid()?;
    let radius = radius_for(gf, nl.ball_bound(), config)?;
    let layout = whole_line_layout(window, radius, config.quad_step)?;
    let kernel = NodeKernel::build(gf, layout.t0, config.quad_step, layout.n)?;
    let run = picard(&kernel, &layout, nl, config, cert.k_lin + config.ratio_slack, None, initial)?;
    let tb = tail_bound(&gf.constants(), nl.ball_bound(), layout.radius);
    let mut sol = assemble(gf, &kernel, &layout, nl, run, window, tb);
    sol.residual_norm = residual(gf, &sol, nl, &probe_times(window, config.quad_step, config.residual_probes))?;
    Ok((sol, cert))
}

/// Half-line solve on `[0, window_end]` with a standard certificate.
pub fn picard_solve_halfline(
    gf: &GreenFunction,
    nl: &NonlinearitySpec,
    anchor: HalflineAnchor,
    window_end: f64,
    config: &SolverConfig,
) -> Result<(GridSolution, ContractionCertificate)> {
    let cert = ContractionCertificate::half_line(&gf.constants(), nl, &anchor);
    cert.refuse_if_invalid()?;
    let sol = solve_halfline_certified(gf, nl, anchor, window_end, config, cert.k_lin, None)?;
    Ok((sol, cert))
}

/// Half-line engine; the caller vouches for contraction with ratio `k_lin`.
pub fn solve_halfline_certified(
    gf: &GreenFunction,
    nl: &NonlinearitySpec,
    anchor: HalflineAnchor,
    window_end: f64,
    config: &SolverConfig,
    k_lin: f64,
    initial: Initial<'_>,
) -> Result<GridSolution> {
    let radius = radius_for(gf, nl.ball_bound(), config)?;
    let layout = half_line_layout(window_end, radius, config.quad_step)?;
    let kernel = NodeKernel::build(gf, 0.0, config.quad_step, layout.n)?;
    let run = picard(&kernel, &layout, nl, config, k_lin + config.ratio_slack, Some(&anchor), initial)?;
    let tb = tail_bound(&gf.constants(), nl.ball_bound(), layout.radius);
    let mut sol = assemble(gf, &kernel, &layout, nl, run, (0.0, window_end), tb);
    if let (HalflineAnchor::InitialValue(_), Some(rep)) = (&anchor, &sol.halfline_anchor) {
        let tol = (100.0 * config.tol).max(10.0 * config.tail_tol);
        if rep.initial_defect > tol {
            return Err(Error::AnchorDefect {
                defect: rep.initial_defect,
                tol,
            });
        }
    }
    let probes = probe_times((0.0, window_end), config.quad_step, config.residual_probes);
    sol.residual_norm = residual(gf, &sol, nl, &probes)?;
    Ok(sol)
}

/// `max |u(t) - int G(t, s) h(s, u(s)) ds - U(t, 0) zeta0|` over the probes,
/// with the kernel from [`GreenFunction::green`] rather than the factorized
/// node kernel used by the solver.
pub fn residual(gf: &GreenFunction, sol: &GridSolution, nl: &NonlinearitySpec, probes: &[f64]) -> Result<f64> {
    let r = sol.truncation_radius;
    let h = sol.quad_step;
    let (lo, hi) = sol.span();
    let zeta = sol.halfline_anchor.map(|a| Vec2::from(a.zeta0));
    let values: Vec<f64> = probes
        .par_iter()
        .map(|&t| {
            let ft = gf.splitting.frame(t)?;
            let integrate = |a: f64, b: f64| -> Result<Vec2> {
                if b <= a {
                    return Ok(Vec2::zeros());
                }
                let n = (((b - a) / h).round() as usize).max(2);
                let step = (b - a) / n as f64;
                let w = composite_weights(n);
                let mut acc = Vec2::zeros();
                for (j, wj) in w.iter().enumerate() {
                    let s = a + j as f64 * step;
                    let fs = gf.splitting.frame(s)?;
                    // one-sided limits at the diagonal
                    let g = if j == n && b == t {
                        fs.p()
                    } else if j == 0 && a == t {
                        -fs.q()
                    } else {
                        gf.green_with_frames(t, s, &ft, &fs)?
                    };
                    acc += *wj * (g * nl.eval(s, sol.at(s)));
                }
                Ok(acc * step)
            };
            let left = integrate((t - r).max(lo), t)?;
            let right = integrate(t, (t + r).min(hi))?;
            let mut rhs = left + right;
            if let Some(z) = zeta {
                // stable route: U(t, 0) v0 = v_t / ((U(0, t) v_t) . v0)
                let f0 = gf.splitting.frame(0.0)?;
                let c = (gf.prop().matrix(t, 0.0)? * ft.v).dot(&f0.v);
                rhs += f0.w.dot(&z) / c * ft.v;
            }
            Ok((sol.at(t) - rhs).norm())
        })
        .collect::<Result<_>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// `2(1+H)N eps_h / beta + |h| (2 eps_G / gamma + 4(1+H)N eta)`.
pub fn issue1_bound(k: &DichotomyConstants, eps_h: f64, h_sup: f64, green: &GreenApCertificate) -> f64 {
    let p = k.green_prefactor();
    2.0 * p * eps_h / k.beta + h_sup * (2.0 * green.max_scaled_defect / green.gamma + 4.0 * p * green.eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApClassReport {
    pub period: f64,
    /// `sup_t |u(t + T) - u(t)|` on the window nodes with `t + T` in range.
    pub deviation: f64,
    /// `sup_t |h(t + T, u(t + T)) - h(t, u(t))|`.
    pub eps_h: f64,
    pub h_sup: f64,
    pub green_defect: f64,
    pub bound: f64,
    pub samples: usize,
    pub passed: bool,
}

pub fn verify_ap_class(
    sol: &GridSolution,
    nl: &NonlinearitySpec,
    k: &DichotomyConstants,
    period: f64,
    green: &GreenApCertificate,
) -> Result<ApClassReport> {
    let (a, b) = sol.window;
    let idx: Vec<usize> = (0..sol.len())
        .filter(|&i| sol.times[i] >= a && sol.times[i] + period <= b)
        .collect();
    if idx.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "window [{a}, {b}] is shorter than the period {period}"
        )));
    }
    let mut deviation = 0.0_f64;
    let mut eps_h = 0.0_f64;
    for &i in &idx {
        let t = sol.times[i];
        let (x, y) = (sol.value(i), sol.at(t + period));
        deviation = deviation.max((y - x).norm());
        eps_h = eps_h.max((nl.eval(t + period, y) - nl.eval(t, x)).norm());
    }
    let h_sup = (0..sol.len())
        .filter(|&i| sol.times[i] >= a && sol.times[i] <= b)
        .map(|i| nl.eval(sol.times[i], sol.value(i)).norm())
        .fold(0.0, f64::max);
    let bound = issue1_bound(k, eps_h, h_sup, green);
    Ok(ApClassReport {
        period,
        deviation,
        eps_h,
        h_sup,
        green_defect: green.max_scaled_defect,
        bound,
        samples: idx.len(),
        passed: deviation <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicMean {
    pub r: f64,
    pub mean: f64,
}

/// `I(r) = (1 / 2r) int_{-r}^{r} |sol - reference|` for each radius.
pub fn ergodic_means(sol: &GridSolution, reference: &GridSolution, radii: &[f64]) -> Result<Vec<ErgodicMean>> {
    let (lo, hi) = sol.span();
    let (rlo, rhi) = reference.span();
    radii
        .iter()
        .map(|&r| {
            if -r < lo.max(rlo) - 1e-9 || r > hi.min(rhi) + 1e-9 {
                return Err(Error::InvalidArgument(format!("radius {r} exceeds the solution span")));
            }
            let n = ((2.0 * r / sol.quad_step).round() as usize).max(2);
            let step = 2.0 * r / n as f64;
            let w = composite_weights(n);
            let s: f64 = w
                .iter()
                .enumerate()
                .map(|(j, wj)| {
                    let t = -r + j as f64 * step;
                    wj * (sol.at(t) - reference.at(t)).norm()
                })
                .sum();
            Ok(ErgodicMean {
                r,
                mean: s * step / (2.0 * r),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AapTailReport {
    pub rate: f64,
    pub prefactor: f64,
    pub final_gap: f64,
}

/// Decay of `|sol - reference|` on the half-line window, the numerical
/// signature of the `C_0` part.
pub fn aap_tail_decay(sol: &GridSolution, reference: &GridSolution) -> Result<AapTailReport> {
    let series: Vec<(f64, f64)> = sol
        .times
        .iter()
        .filter(|&&t| t >= sol.window.0 && t <= sol.window.1)
        .map(|&t| (t, (sol.at(t) - reference.at(t)).norm()))
        .collect();
    let (rate, prefactor) = crate::stability::fit_decay_rate(&series)?;
    Ok(AapTailReport {
        rate,
        prefactor,
        final_gap: series.last().map(|p| p.1).unwrap_or(0.0),
    })
}

/// Fixed-step RK4 of `u' = A(t) u + h(t, u)` for the time-stepping oracle.
pub fn integrate_forward(
    sys_a: &(dyn Fn(f64) -> Mat2 + Sync),
    nl: &NonlinearitySpec,
    t0: f64,
    u0: Vec2,
    t1: f64,
    step: f64,
) -> Vec<(f64, Vec2)> {
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let f = |t: f64, u: Vec2| sys_a(t) * u + nl.eval(t, u);
    let mut out = Vec::with_capacity(n + 1);
    let mut u = u0;
    out.push((t0, u));
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let k1 = f(t, u);
        let k2 = f(t + 0.5 * h, u + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, u + 0.5 * h * k2);
        let k4 = f(t + h, u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push((t0 + (i + 1) as f64 * h, u));
    }
    out
}

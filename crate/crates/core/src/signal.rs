//! Scalar signals of almost periodic type: finite trigonometric sums with an
//! optional decaying or ergodic tail, Bohr almost-period search and
//! verification, and vanishing-mean screening of tails.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::quadrature::{simpson_to_tolerance, QuadratureEstimate};
use crate::{Error, Result};

/// Anything that can be sampled at a real time.
pub trait Signal {
    fn value(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Signal for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

/// One term `amplitude * sin(frequency * t + phase)`; serialized as
/// `[frequency, amplitude, phase]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Mode {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl From<[f64; 3]> for Mode {
    fn from(m: [f64; 3]) -> Self {
        Mode {
            frequency: m[0],
            amplitude: m[1],
            phase: m[2],
        }
    }
}

impl From<Mode> for [f64; 3] {
    fn from(m: Mode) -> Self {
        [m.frequency, m.amplitude, m.phase]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuasiPeriodicSignal {
    #[serde(default)]
    pub modes: Vec<Mode>,
    #[serde(default, rename = "offset")]
    pub constant_offset: f64,
}

impl QuasiPeriodicSignal {
    pub fn new(modes: Vec<Mode>, constant_offset: f64) -> Self {
        Self {
            modes,
            constant_offset,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Vec::new(), c)
    }

    /// `sum amplitude * sin(frequency * t)` from `(frequency, amplitude)` pairs.
    pub fn sines(terms: &[(f64, f64)]) -> Self {
        Self::new(
            terms
                .iter()
                .map(|&(frequency, amplitude)| Mode {
                    frequency,
                    amplitude,
                    phase: 0.0,
                })
                .collect(),
            0.0,
        )
    }

    /// `sum amplitude * cos(frequency * t)` from `(frequency, amplitude)` pairs.
    pub fn cosines(terms: &[(f64, f64)]) -> Self {
        Self::new(
            terms
                .iter()
                .map(|&(frequency, amplitude)| Mode {
                    frequency,
                    amplitude,
                    phase: PI / 2.0,
                })
                .collect(),
            0.0,
        )
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.constant_offset
            + self
                .modes
                .iter()
                .map(|m| m.amplitude * (m.frequency * t + m.phase).sin())
                .sum::<f64>()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude * m.frequency * (m.frequency * t + m.phase).cos())
            .sum()
    }

    /// Primitive vanishing at `t = 0`.
    pub fn antiderivative(&self, t: f64) -> f64 {
        self.constant_offset * t
            + self
                .modes
                .iter()
                .map(|m| {
                    if m.frequency == 0.0 {
                        m.amplitude * m.phase.sin() * t
                    } else {
                        m.amplitude / m.frequency
                            * (m.phase.cos() - (m.frequency * t + m.phase).cos())
                    }
                })
                .sum::<f64>()
    }

    pub fn triangle_bound(&self) -> f64 {
        self.constant_offset.abs() + self.modes.iter().map(|m| m.amplitude.abs()).sum::<f64>()
    }

    /// `offset - sum |amplitude|`, a lower bound of the signal on the line.
    pub fn lower_bound(&self) -> f64 {
        self.constant_offset - self.modes.iter().map(|m| m.amplitude.abs()).sum::<f64>()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    amplitude: k * m.amplitude,
                    ..*m
                })
                .collect(),
            constant_offset: k * self.constant_offset,
        }
    }

    pub fn sum(&self, other: &Self) -> Self {
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        Self::new(modes, self.constant_offset + other.constant_offset)
    }

    /// Upper bound of `sup_t |s(t + T) - s(t)|`, exact when the frequencies
    /// are rationally independent.
    pub fn drift_bound(&self, period: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| 2.0 * m.amplitude.abs() * (0.5 * m.frequency * period).sin().abs())
            .sum()
    }
}

impl Signal for QuasiPeriodicSignal {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailKind {
    Decaying,
    Ergodic,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum TailShape {
    Zero,
    /// `c * exp(-a |t|)`
    Exp { c: f64, a: f64 },
    /// `c / (1 + |t|)`
    Reciprocal { c: f64 },
    /// `c * t / sqrt(1 + t^2)`
    Sigmoid { c: f64 },
    /// Piecewise linear through the samples, held constant outside them.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl TailShape {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TailShape::Zero => 0.0,
            TailShape::Exp { c, a } => c * (-a * t.abs()).exp(),
            TailShape::Reciprocal { c } => c / (1.0 + t.abs()),
            TailShape::Sigmoid { c } => c * t / (1.0 + t * t).sqrt(),
            TailShape::Table { times, values } => {
                let n = times.len();
                if n == 0 {
                    return 0.0;
                }
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let j = times.partition_point(|&x| x <= t) - 1;
                let w = (t - times[j]) / (times[j + 1] - times[j]);
                values[j] * (1.0 - w) + values[j + 1] * w
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TailShape::Exp { a, .. } if *a < 0.0 => Err(Error::InvalidArgument(
                "exp tail needs a >= 0".into(),
            )),
            TailShape::Table { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::InvalidArgument(
                        "table tail needs equally many times and values".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument(
                        "table tail times must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTail")]
pub struct TailTerm {
    pub kind: TailKind,
    #[serde(rename = "params")]
    pub shape: TailShape,
}

#[derive(Deserialize)]
struct RawTail {
    kind: TailKind,
    #[serde(default)]
    params: Option<TailShape>,
}

impl TryFrom<RawTail> for TailTerm {
    type Error = Error;
    fn try_from(raw: RawTail) -> Result<Self> {
        TailTerm::new(raw.kind, raw.params.unwrap_or(TailShape::Zero))
    }
}

impl TailTerm {
    pub fn new(kind: TailKind, shape: TailShape) -> Result<Self> {
        shape.validate()?;
        if kind == TailKind::None && shape != TailShape::Zero {
            return Err(Error::InvalidArgument(
                "tail of kind none must have the zero shape".into(),
            ));
        }
        Ok(Self { kind, shape })
    }

    pub fn none() -> Self {
        Self {
            kind: TailKind::None,
            shape: TailShape::Zero,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.shape.eval(t)
    }

    /// Closed-form `sup |tail|`, or a sampled one for tables.
    pub fn sup_bound(&self) -> f64 {
        match &self.shape {
            TailShape::Zero => 0.0,
            TailShape::Exp { c, .. } | TailShape::Reciprocal { c } | TailShape::Sigmoid { c } => {
                c.abs()
            }
            TailShape::Table { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

impl Signal for TailTerm {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalClass {
    AP,
    AAP,
    PAP,
    Cb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComposite", into = "RawComposite")]
pub struct CompositeSignal {
    pub ap_part: QuasiPeriodicSignal,
    pub tail: TailTerm,
    pub declared_class: SignalClass,
}

#[derive(Serialize, Deserialize)]
struct RawComposite {
    #[serde(default)]
    modes: Vec<Mode>,
    #[serde(default)]
    offset: f64,
    #[serde(default)]
    tail: Option<TailTerm>,
    #[serde(default)]
    class: Option<SignalClass>,
}

impl TryFrom<RawComposite> for CompositeSignal {
    type Error = Error;
    fn try_from(raw: RawComposite) -> Result<Self> {
        let tail = raw.tail.unwrap_or_else(TailTerm::none);
        let class = raw.class.unwrap_or(match tail.kind {
            TailKind::None => SignalClass::AP,
            TailKind::Decaying => SignalClass::AAP,
            TailKind::Ergodic => SignalClass::PAP,
        });
        CompositeSignal::new(QuasiPeriodicSignal::new(raw.modes, raw.offset), tail, class)
    }
}

impl From<CompositeSignal> for RawComposite {
    fn from(s: CompositeSignal) -> Self {
        RawComposite {
            modes: s.ap_part.modes,
            offset: s.ap_part.constant_offset,
            tail: Some(s.tail),
            class: Some(s.declared_class),
        }
    }
}

impl CompositeSignal {
    pub fn new(ap_part: QuasiPeriodicSignal, tail: TailTerm, class: SignalClass) -> Result<Self> {
        let ok = match class {
            SignalClass::AP => tail.kind == TailKind::None,
            SignalClass::AAP => tail.kind == TailKind::Decaying,
            SignalClass::PAP => matches!(tail.kind, TailKind::Decaying | TailKind::Ergodic),
            SignalClass::Cb => true,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "declared class {class:?} does not admit a tail of kind {:?}",
                tail.kind
            )));
        }
        Ok(Self {
            ap_part,
            tail,
            declared_class: class,
        })
    }

    pub fn almost_periodic(ap_part: QuasiPeriodicSignal) -> Self {
        Self {
            ap_part,
            tail: TailTerm::none(),
            declared_class: SignalClass::AP,
        }
    }

    pub fn zero() -> Self {
        Self::almost_periodic(QuasiPeriodicSignal::default())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.ap_part.eval(t) + self.tail.eval(t)
    }

    pub fn triangle_bound(&self) -> f64 {
        self.ap_part.triangle_bound() + self.tail.sup_bound()
    }

    pub fn scaled(&self, k: f64) -> Self {
        let shape = match &self.tail.shape {
            TailShape::Zero => TailShape::Zero,
            TailShape::Exp { c, a } => TailShape::Exp { c: k * c, a: *a },
            TailShape::Reciprocal { c } => TailShape::Reciprocal { c: k * c },
            TailShape::Sigmoid { c } => TailShape::Sigmoid { c: k * c },
            TailShape::Table { times, values } => TailShape::Table {
                times: times.clone(),
                values: values.iter().map(|v| k * v).collect(),
            },
        };
        Self {
            ap_part: self.ap_part.scaled(k),
            tail: TailTerm {
                kind: self.tail.kind,
                shape,
            },
            declared_class: self.declared_class,
        }
    }
}

impl Signal for CompositeSignal {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

pub fn evaluate(signal: &CompositeSignal, t: f64) -> f64 {
    signal.eval(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNormEstimate {
    pub value: f64,
    pub argmax: f64,
    pub window: (f64, f64),
    pub grid_step: f64,
    pub samples: usize,
}

fn grid_len(window: (f64, f64), grid_step: f64) -> Result<usize> {
    let (a, b) = window;
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(Error::InvalidArgument("grid step must be positive".into()));
    }
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("empty window [{a}, {b}]")));
    }
    Ok(((b - a) / grid_step).floor() as usize + 1)
}

pub fn sup_norm_estimate<S: Signal + ?Sized>(
    signal: &S,
    window: (f64, f64),
    grid_step: f64,
) -> Result<SupNormEstimate> {
    let n = grid_len(window, grid_step)?;
    let (mut value, mut argmax) = (0.0_f64, window.0);
    for i in 0..n {
        let t = window.0 + i as f64 * grid_step;
        let v = signal.value(t).abs();
        if v > value {
            value = v;
            argmax = t;
        }
    }
    let v = signal.value(window.1).abs();
    if v > value {
        value = v;
        argmax = window.1;
    }
    Ok(SupNormEstimate {
        value,
        argmax,
        window,
        grid_step,
        samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmostPeriodWitness {
    pub epsilon: f64,
    pub period: f64,
    pub window: (f64, f64),
    pub measured_sup_deviation: f64,
    pub interval_length: f64,
    pub grid_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub epsilon: f64,
    pub period: f64,
    pub measured_sup_deviation: f64,
}

/// Grid sup of `|s(t + T) - s(t)|` over the window.
pub fn sup_deviation<S: Signal + ?Sized>(
    signal: &S,
    period: f64,
    window: (f64, f64),
    grid_step: f64,
) -> Result<f64> {
    let n = grid_len(window, grid_step)?;
    Ok((0..n)
        .map(|i| window.0 + i as f64 * grid_step)
        .chain(std::iter::once(window.1))
        .map(|t| (signal.value(t + period) - signal.value(t)).abs())
        .fold(0.0, f64::max))
}

pub fn verify_almost_period<S: Signal + ?Sized>(
    signal: &S,
    period: f64,
    epsilon: f64,
    window: (f64, f64),
    grid_step: f64,
) -> Result<std::result::Result<AlmostPeriodWitness, Rejection>> {
    if !(period > 0.0) {
        return Err(Error::InvalidArgument("almost period must be positive".into()));
    }
    let deviation = sup_deviation(signal, period, window, grid_step)?;
    Ok(if deviation <= epsilon {
        Ok(AlmostPeriodWitness {
            epsilon,
            period,
            window,
            measured_sup_deviation: deviation,
            interval_length: period,
            grid_step,
        })
    } else {
        Err(Rejection {
            epsilon,
            period,
            measured_sup_deviation: deviation,
        })
    })
}

/// Convergent denominators of the continued fraction of `x > 0`.
pub fn convergent_denominators(x: f64, max_terms: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let (mut q_prev, mut q) = (1u64, 0u64);
    let mut rem = x;
    for _ in 0..max_terms {
        let a = rem.floor();
        if !(a.is_finite()) || a > 1e9 {
            break;
        }
        let next = match (a as u64).checked_mul(q).and_then(|v| v.checked_add(q_prev)) {
            Some(v) => v,
            None => break,
        };
        if next != q || out.is_empty() {
            out.push(next);
        }
        q_prev = q;
        q = next;
        let frac = rem - a;
        if frac < 1e-12 {
            break;
        }
        rem = 1.0 / frac;
    }
    out.retain(|&d| d > 0);
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub grid_step: f64,
    /// Verification window is `[0, window_factor * T]`.
    pub window_factor: f64,
    pub max_witnesses: usize,
    pub scan_budget: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            window_factor: 20.0,
            max_witnesses: 32,
            scan_budget: 2_000_000,
        }
    }
}

pub fn find_almost_periods(
    signal: &QuasiPeriodicSignal,
    epsilon: f64,
    search_interval: (f64, f64),
) -> Result<Vec<AlmostPeriodWitness>> {
    find_almost_periods_with(signal, epsilon, search_interval, SearchOptions::default())
}

/// Candidates are integer multiples of the base period `2 pi / w1` of the
/// leading mode; multiples of convergent denominators of `w_j / w1` are
/// tried first, then a linear scan within the budget. A candidate must pass
/// the drift bound before it is verified on the grid.
pub fn find_almost_periods_with(
    signal: &QuasiPeriodicSignal,
    epsilon: f64,
    search_interval: (f64, f64),
    opts: SearchOptions,
) -> Result<Vec<AlmostPeriodWitness>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let (lo, hi) = (search_interval.0.max(0.0), search_interval.1);
    if !(lo <= hi) {
        return Err(Error::InvalidArgument("empty search interval".into()));
    }
    let active: Vec<&Mode> = signal
        .modes
        .iter()
        .filter(|m| m.frequency != 0.0 && m.amplitude != 0.0)
        .collect();
    // first mode of largest amplitude
    let lead = active.iter().copied().fold(None::<&Mode>, |best, m| match best {
        Some(b) if b.amplitude.abs() >= m.amplitude.abs() => Some(b),
        _ => Some(m),
    });
    let Some(lead) = lead else {
        let period = lo.max(f64::MIN_POSITIVE);
        return Ok(vec![AlmostPeriodWitness {
            epsilon,
            period,
            window: (0.0, opts.window_factor * period),
            measured_sup_deviation: 0.0,
            interval_length: period,
            grid_step: opts.grid_step,
        }]);
    };
    let base = 2.0 * PI / lead.frequency.abs();
    let k_lo = (lo / base).ceil().max(1.0) as u64;
    let k_hi = (hi / base).floor() as u64;
    if k_hi < k_lo {
        return Ok(Vec::new());
    }

    let mut candidates: Vec<u64> = Vec::new();
    for m in &active {
        let ratio = (m.frequency / lead.frequency).abs();
        for q in convergent_denominators(ratio, 40) {
            let first = k_lo.div_ceil(q) * q;
            let mut k = first;
            while k <= k_hi && candidates.len() < 4 * opts.scan_budget as usize {
                candidates.push(k);
                k += q;
                if k - first > q * 64 {
                    break;
                }
            }
        }
    }
    let scan_end = k_hi.min(k_lo.saturating_add(opts.scan_budget));
    candidates.extend(k_lo..=scan_end);
    candidates.sort_unstable();
    candidates.dedup();

    let mut witnesses = Vec::new();
    for k in candidates {
        let period = k as f64 * base;
        if signal.drift_bound(period) > epsilon {
            continue;
        }
        let window = (0.0, opts.window_factor * period);
        if let Ok(w) = verify_almost_period(signal, period, epsilon, window, opts.grid_step)? {
            witnesses.push(w);
            if witnesses.len() >= opts.max_witnesses {
                break;
            }
        }
    }
    let mut prev = 0.0;
    let mut gap = 0.0_f64;
    for w in &witnesses {
        gap = gap.max(w.period - prev);
        prev = w.period;
    }
    for w in &mut witnesses {
        w.interval_length = gap;
    }
    Ok(witnesses)
}

/// `(1 / 2L) int_{-L}^{L} |tail|`, with the error estimate scaled the same way.
pub fn mean_abs_value<S: Signal + ?Sized>(tail: &S, horizon: f64) -> Result<QuadratureEstimate> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let tol = 0.5e-8 * horizon;
    let f = |t: f64| tail.value(t).abs();
    let left = simpson_to_tolerance(f, -horizon, 0.0, tol);
    let right = simpson_to_tolerance(f, 0.0, horizon, tol);
    let scale = 0.5 / horizon;
    Ok(QuadratureEstimate {
        value: scale * (left.value + right.value),
        error_estimate: scale * (left.error_estimate + right.error_estimate),
        intervals: left.intervals + right.intervals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailLabel {
    DecayingConsistent,
    ErgodicConsistent,
    InconsistentWithDeclaredClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: f64,
    pub mean_abs: f64,
    pub mean_abs_error: f64,
    pub sup_beyond: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailClassification {
    pub declared: TailKind,
    pub horizons: Vec<HorizonReport>,
    pub label: TailLabel,
}

fn sup_beyond<S: Signal + ?Sized>(tail: &S, horizon: f64) -> f64 {
    const SAMPLES: usize = 4000;
    (0..=SAMPLES)
        .map(|j| horizon * (1.0 + 9.0 * j as f64 / SAMPLES as f64))
        .map(|t| tail.value(t).abs().max(tail.value(-t).abs()))
        .fold(0.0, f64::max)
}

/// Numerical screen of a tail against its declared kind. Decaying means
/// the sup beyond the last horizon is negligible or has dropped tenfold;
/// ergodic means the mean of `|tail|` at least halves across the horizons.
pub fn classify_tail<S: Signal + ?Sized>(
    tail: &S,
    declared: TailKind,
    horizons: &[f64],
) -> Result<TailClassification> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "horizons must be nonempty and increasing".into(),
        ));
    }
    let reports = horizons
        .iter()
        .map(|&l| {
            let m = mean_abs_value(tail, l)?;
            Ok(HorizonReport {
                horizon: l,
                mean_abs: m.value,
                mean_abs_error: m.error_estimate,
                sup_beyond: sup_beyond(tail, l),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = reports[0];
    let last = reports[reports.len() - 1];
    let negligible = last.sup_beyond <= 1e-12;
    let decaying = negligible || (reports.len() > 1 && last.sup_beyond <= 0.1 * first.sup_beyond);
    let ergodic = decaying
        || (reports.len() > 1
            && last.mean_abs <= 0.5 * first.mean_abs
            && reports.windows(2).all(|w| w[1].mean_abs <= w[0].mean_abs * 1.05));
    let label = match declared {
        TailKind::None if negligible && last.mean_abs <= 1e-12 => TailLabel::DecayingConsistent,
        TailKind::Decaying if decaying => TailLabel::DecayingConsistent,
        TailKind::Ergodic if decaying => TailLabel::DecayingConsistent,
        TailKind::Ergodic if ergodic => TailLabel::ErgodicConsistent,
        _ => TailLabel::InconsistentWithDeclaredClass,
    };
    Ok(TailClassification {
        declared,
        horizons: reports,
        label,
    })
}

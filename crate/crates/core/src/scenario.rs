//! JSON scenario files and the pipeline they configure.
//!
//! Every section except `model` has defaults; unknown fields are rejected
//! so that typos surface with their path.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{fit_dichotomy_constants, lag_pairs, pilot_window, DichotomySplitting, GreenFunction};
use crate::dichotomy::DEFAULT_GAP_THRESHOLD;
use crate::lienard::{to_planar, to_planar_alt, AltTransformSpec, LienardSpec, PlanarSystem};
use crate::mild::{HalflineAnchor, NonlinearitySpec, SolverConfig};
use crate::propagator::Propagator;
use crate::signal::{
    find_almost_periods_with, verify_almost_period, AlmostPeriodWitness, CompositeSignal, QuasiPeriodicSignal,
    SearchOptions, SignalClass, TailTerm,
};
use crate::spectral::PdeSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Lienard(LienardSpec),
    Pde(PdeSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    pub step: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self { step: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DichotomyConfig {
    /// Splitting window; a pilot fit chooses it when absent.
    pub window_t: Option<f64>,
    pub gap_threshold: f64,
    pub anchors: (f64, f64),
    pub anchor_step: f64,
    pub max_lag: f64,
    pub lags: usize,
    pub decay_pairs: usize,
    pub decay_range: (f64, f64),
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        Self {
            window_t: Some(20.0),
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            anchors: (-10.0, 10.0),
            anchor_step: 1.0,
            max_lag: 20.0,
            lags: 20,
            decay_pairs: 200,
            decay_range: (-10.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    #[default]
    Wholeline,
    Halfline,
}

impl std::str::FromStr for SolveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wholeline" | "whole-line" => Ok(SolveMode::Wholeline),
            "halfline" | "half-line" => Ok(SolveMode::Halfline),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}, expected wholeline or halfline"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub mode: SolveMode,
    pub window: (f64, f64),
    /// Half-line anchor; defaults to a zero stable component.
    pub anchor: Option<HalflineAnchor>,
    pub class_checks: bool,
    pub pap_radii: Vec<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: SolveMode::Wholeline,
            window: (-5.0, 25.0),
            anchor: None,
            class_checks: true,
            pap_radii: vec![10.0, 20.0, 40.0, 80.0, 160.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub epsilon: f64,
    pub search: (f64, f64),
    pub grid_step: f64,
    pub window_factor: f64,
    /// A fixed almost period, verified instead of searched.
    pub period: Option<f64>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            search: (1.0, 500.0),
            grid_step: 0.01,
            window_factor: 20.0,
            period: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma1Config {
    pub m_bound: f64,
    pub delta: f64,
    pub grid_step: f64,
    pub x_range: (f64, f64),
    /// Defaults to `[0, T]` for the scenario's almost period `T`.
    pub window: Option<(f64, f64)>,
}

impl Default for Lemma1Config {
    fn default() -> Self {
        Self {
            m_bound: 6.0,
            delta: 2.0,
            grid_step: 1e-2,
            x_range: (-1.0, 1.0),
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenApConfig {
    pub eta: f64,
    /// Defaults to `beta / 2`.
    pub gamma: Option<f64>,
    /// Defaults to the signal epsilon.
    pub epsilon: Option<f64>,
    pub pairs: usize,
    pub range: (f64, f64),
}

impl Default for GreenApConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            gamma: None,
            epsilon: None,
            pairs: 200,
            range: (-10.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub offsets: usize,
    /// `P(0) u_hat(0)` of the base solution; the bounded solution's when absent.
    pub base_stable_component: Option<[f64; 2]>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            offsets: 5,
            base_stable_component: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeRunConfig {
    pub window: (f64, f64),
}

impl Default for PdeRunConfig {
    fn default() -> Self {
        Self { window: (0.0, 10.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    /// Alternate reduction `y = x' + a x - theta1`.
    #[serde(default)]
    pub transform: Option<AltTransformSpec>,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub dichotomy: DichotomyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub lemma1: Lemma1Config,
    #[serde(default)]
    pub green_ap: GreenApConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub pde: PdeRunConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: match e.path().to_string() {
                p if p == "." => "<root>".into(),
                p => p,
            },
            message: e.inner().to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |path: &str, message: String| Error::Schema {
            path: path.into(),
            message,
        };
        match &self.model {
            ModelSpec::Lienard(spec) => spec.validate().map_err(|e| schema("model.lienard", e.to_string()))?,
            ModelSpec::Pde(spec) => spec.validate().map_err(|e| schema("model.pde", e.to_string()))?,
        }
        if !(self.propagator.step > 0.0 && self.propagator.step <= 1.0) {
            return Err(schema("propagator.step", "must lie in (0, 1]".into()));
        }
        if !(self.solver.quad_step > 0.0) {
            return Err(schema("solver.quad_step", "must be positive".into()));
        }
        if !(self.solver.rho > 0.0) {
            return Err(schema("solver.rho", "must be positive".into()));
        }
        if !(self.solve.window.0 < self.solve.window.1) {
            return Err(schema("solve.window", "must be a nonempty interval".into()));
        }
        if self.solve.mode == SolveMode::Halfline && self.solve.window.0 != 0.0 {
            return Err(schema("solve.window", "half-line windows start at 0".into()));
        }
        if !(self.signal.epsilon > 0.0) {
            return Err(schema("signal.epsilon", "must be positive".into()));
        }
        if !(self.dichotomy.anchor_step > 0.0) || self.dichotomy.anchors.0 > self.dichotomy.anchors.1 {
            return Err(schema("dichotomy.anchors", "need a nonempty range and positive step".into()));
        }
        Ok(())
    }

    pub fn lienard(&self) -> Result<&LienardSpec> {
        match &self.model {
            ModelSpec::Lienard(s) => Ok(s),
            ModelSpec::Pde(_) => Err(Error::InvalidArgument("scenario model is a PDE, expected lienard".into())),
        }
    }

    pub fn pde_spec(&self) -> Result<&PdeSpec> {
        match &self.model {
            ModelSpec::Pde(s) => Ok(s),
            ModelSpec::Lienard(_) => Err(Error::InvalidArgument("scenario model is lienard, expected pde".into())),
        }
    }
}

/// Common almost periods of several signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonPeriods {
    pub epsilon: f64,
    /// Per candidate period, the witness of each signal.
    pub witnesses: Vec<Vec<AlmostPeriodWitness>>,
    pub periods: Vec<f64>,
    /// Candidate with the smallest worst deviation.
    pub best: Option<f64>,
    pub interval_length: f64,
}

pub fn common_almost_periods(signals: &[QuasiPeriodicSignal], config: &SignalConfig) -> Result<CommonPeriods> {
    let opts = SearchOptions {
        grid_step: config.grid_step,
        window_factor: config.window_factor,
        ..SearchOptions::default()
    };
    let mut witnesses: Vec<Vec<AlmostPeriodWitness>> = Vec::new();
    let candidates: Vec<f64> = match config.period {
        Some(p) => vec![p],
        None => {
            let first = signals
                .first()
                .ok_or_else(|| Error::InvalidArgument("no signals".into()))?;
            find_almost_periods_with(first, config.epsilon, config.search, opts)?
                .into_iter()
                .map(|w| w.period)
                .collect()
        }
    };
    for period in candidates {
        let window = (0.0, config.window_factor * period);
        let mut row = Vec::new();
        for s in signals {
            match verify_almost_period(s, period, config.epsilon, window, config.grid_step)? {
                Ok(w) => row.push(w),
                Err(_) => break,
            }
        }
        if row.len() == signals.len() {
            witnesses.push(row);
        }
    }
    let periods: Vec<f64> = witnesses.iter().map(|r| r[0].period).collect();
    let worst = |r: &Vec<AlmostPeriodWitness>| r.iter().map(|w| w.measured_sup_deviation).fold(0.0, f64::max);
    let best = witnesses
        .iter()
        .fold(None::<&Vec<AlmostPeriodWitness>>, |b, r| match b {
            Some(b) if worst(b) <= worst(r) => Some(b),
            _ => Some(r),
        })
        .map(|r| r[0].period);
    let mut prev = 0.0;
    let mut gap = 0.0_f64;
    for p in &periods {
        gap = gap.max(p - prev);
        prev = *p;
    }
    Ok(CommonPeriods {
        epsilon: config.epsilon,
        witnesses,
        periods,
        best,
        interval_length: gap,
    })
}

/// Planar system, propagator and fitted Green function of a Lienard scenario.
pub struct LienardPipeline {
    pub scenario: Scenario,
    pub spec: LienardSpec,
    pub system: PlanarSystem,
    pub prop: Arc<Propagator>,
}

impl LienardPipeline {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let spec = scenario.lienard()?.clone();
        let system = match &scenario.transform {
            Some(alt) => to_planar_alt(&spec, alt)?,
            None => to_planar(&spec)?,
        };
        let prop = Arc::new(Propagator::new(&system, scenario.propagator.step)?);
        Ok(Self {
            scenario: scenario.clone(),
            spec,
            system,
            prop,
        })
    }

    /// Coefficient signals entering `A(t)`.
    pub fn coefficient_signals(&self) -> Vec<QuasiPeriodicSignal> {
        match &self.scenario.transform {
            Some(alt) => vec![alt.a.clone()],
            None => vec![self.spec.f.linear_part(), self.spec.g.r.clone()],
        }
    }

    pub fn almost_periods(&self) -> Result<CommonPeriods> {
        common_almost_periods(&self.coefficient_signals(), &self.scenario.signal)
    }

    pub fn almost_period(&self) -> Result<(f64, f64)> {
        let c = self.almost_periods()?;
        let best = c.best.ok_or_else(|| {
            Error::CertificateRefused(format!(
                "no common {}-almost period of the coefficients in [{}, {}]",
                c.epsilon, self.scenario.signal.search.0, self.scenario.signal.search.1
            ))
        })?;
        Ok((best, c.interval_length))
    }

    pub fn fit_pairs(&self) -> Vec<(f64, f64)> {
        let d = &self.scenario.dichotomy;
        let n = ((d.anchors.1 - d.anchors.0) / d.anchor_step).round() as usize;
        let anchors: Vec<f64> = (0..=n).map(|i| d.anchors.0 + i as f64 * d.anchor_step).collect();
        lag_pairs(&anchors, d.max_lag, d.lags)
    }

    pub fn splitting(&self) -> Result<DichotomySplitting> {
        let d = &self.scenario.dichotomy;
        let window = match d.window_t {
            Some(w) => w,
            None => pilot_window(&self.prop)?,
        };
        let sp = DichotomySplitting::with_threshold(self.prop.clone(), window, d.gap_threshold)?;
        fit_dichotomy_constants(&sp, &self.fit_pairs())
    }

    pub fn green(&self) -> Result<GreenFunction> {
        GreenFunction::new(self.splitting()?)
    }

    /// Uniform random `(t, s)` pairs in the square `range^2`.
    pub fn random_pairs(&self, count: usize, range: (f64, f64), stream: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        (0..count)
            .map(|_| (rng.random_range(range.0..=range.1), rng.random_range(range.0..=range.1)))
            .collect()
    }

    pub fn declared_class(&self) -> SignalClass {
        self.spec.e.k.declared_class
    }

    pub fn nonlinearity(&self) -> NonlinearitySpec {
        NonlinearitySpec::from_system(&self.system, self.scenario.solver.rho, self.declared_class())
    }

    /// The same model with the forcing tail removed, when there is one.
    pub fn ap_reference(&self) -> Result<Option<LienardPipeline>> {
        if self.spec.e.k.tail.kind == crate::signal::TailKind::None {
            return Ok(None);
        }
        let mut scenario = self.scenario.clone();
        if let ModelSpec::Lienard(spec) = &mut scenario.model {
            spec.e.k = CompositeSignal::new(spec.e.k.ap_part.clone(), TailTerm::none(), SignalClass::AP)?;
        }
        Ok(Some(LienardPipeline {
            system: match &scenario.transform {
                Some(alt) => to_planar_alt(scenario.lienard()?, alt)?,
                None => to_planar(scenario.lienard()?)?,
            },
            spec: scenario.lienard()?.clone(),
            prop: self.prop.clone(),
            scenario,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"lienard": {
            "f": {"modes": [[1.0, 1.0, 0.0]], "offset": 0.0},
            "g": {"c": -2.0, "r": {"modes": [], "offset": 0.0}},
            "e": {"m": 2, "kappa": 0.0, "k": {"modes": [], "offset": 0.0}}
        }}
    }"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.propagator.step, 1e-3);
        assert_eq!(s.solve.mode, SolveMode::Wholeline);
        assert_eq!(s.lemma1.m_bound, 6.0);
    }

    #[test]
    fn schema_errors_carry_the_path() {
        let bad = MINIMAL.replace("\"m\": 2", "\"m\": \"two\"");
        match Scenario::from_json(&bad) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "model.lienard.e.m"),
            other => panic!("{other:?}"),
        }
        let typo = MINIMAL.trim_end().trim_end_matches('}').to_string() + r#", "solver": {"quad_stp": 0.1}}"#;
        match Scenario::from_json(&typo) {
            Err(Error::Schema { path, message }) => {
                assert!(path.starts_with("solver"), "{path}");
                assert!(message.contains("quad_stp"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(Scenario::from_json(""), Err(Error::Schema { .. })));
    }

    #[test]
    fn semantic_validation() {
        let s = MINIMAL.trim_end().trim_end_matches('}').to_string() + r#", "propagator": {"step": -1}}"#;
        match Scenario::from_json(&s) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "propagator.step"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn common_periods_of_the_coefficients() {
        let s2 = 2f64.sqrt();
        let q = QuasiPeriodicSignal::sines(&[(1.0, 1.0), (s2, 1.0)]);
        let r = QuasiPeriodicSignal::cosines(&[(1.0, 1.0), (s2, 1.0)]);
        let c = common_almost_periods(&[q, r], &SignalConfig::default()).unwrap();
        assert!((c.best.unwrap() - 140.0 * std::f64::consts::PI).abs() < 1e-9, "{:?}", c.periods);
    }
}

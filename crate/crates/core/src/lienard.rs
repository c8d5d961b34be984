//! Scalar Lienard data `x'' + f x' + g(t, x) = e(t, x)` and its two planar
//! reductions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{Mat2, Vec2};
use crate::signal::{CompositeSignal, QuasiPeriodicSignal};
use crate::{Error, Result};

/// Friction coefficient: a time-only signal, or a polynomial in `x` whose
/// coefficients are signals. `F` lists the coefficients of the primitive
/// `F(t, x) = sum F_k(t) x^k`, required once `f` depends on `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrictionSpec {
    Polynomial {
        coeffs: Vec<QuasiPeriodicSignal>,
        #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
        antiderivative: Option<Vec<QuasiPeriodicSignal>>,
    },
    Time(QuasiPeriodicSignal),
}

impl FrictionSpec {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            FrictionSpec::Time(q) => q.eval(t),
            FrictionSpec::Polynomial { coeffs, .. } => horner(coeffs, t, x),
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            FrictionSpec::Time(_) => false,
            FrictionSpec::Polynomial { coeffs, .. } => coeffs
                .iter()
                .skip(1)
                .any(|c| c.constant_offset != 0.0 || c.modes.iter().any(|m| m.amplitude != 0.0)),
        }
    }

    /// Coefficient of `x^0`, the part entering the linear matrix.
    pub fn linear_part(&self) -> QuasiPeriodicSignal {
        match self {
            FrictionSpec::Time(q) => q.clone(),
            FrictionSpec::Polynomial { coeffs, .. } => coeffs.first().cloned().unwrap_or_default(),
        }
    }

    /// Primitive coefficients `F_{k+1} = f_k / (k + 1)`, `F_0 = 0`.
    pub fn derived_antiderivative(coeffs: &[QuasiPeriodicSignal]) -> Vec<QuasiPeriodicSignal> {
        std::iter::once(QuasiPeriodicSignal::default())
            .chain(
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c.scaled(1.0 / (k + 1) as f64)),
            )
            .collect()
    }

    pub fn with_derived_antiderivative(coeffs: Vec<QuasiPeriodicSignal>) -> Self {
        let f = Self::derived_antiderivative(&coeffs);
        FrictionSpec::Polynomial {
            coeffs,
            antiderivative: Some(f),
        }
    }

    /// Triangle bound of `sup |f - f_0|` over `|x| <= radius`, the
    /// Lipschitz constant of the nonlinear part of `F` on that ball.
    fn nonlinear_slope_bound(&self, radius: f64) -> f64 {
        match self {
            FrictionSpec::Time(_) => 0.0,
            FrictionSpec::Polynomial { coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c.triangle_bound() * radius.powi(k as i32))
                .sum(),
        }
    }
}

fn horner(coeffs: &[QuasiPeriodicSignal], t: f64, x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c.eval(t))
}

/// `g(t, x) = c x + r(t) x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoringSpec {
    pub c: f64,
    #[serde(default)]
    pub r: QuasiPeriodicSignal,
}

impl RestoringSpec {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.slope(t) * x
    }

    /// `g_x(t, x)`.
    pub fn slope(&self, t: f64) -> f64 {
        self.c + self.r.eval(t)
    }
}

/// `e(t, x) = kappa |x|^(m-1) x + k(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub m: u32,
    pub kappa: f64,
    pub k: CompositeSignal,
}

impl ForcingSpec {
    pub fn zero() -> Self {
        Self {
            m: 2,
            kappa: 0.0,
            k: CompositeSignal::zero(),
        }
    }

    pub fn nonlinear(&self, x: f64) -> f64 {
        self.kappa * x.abs().powi(self.m as i32 - 1) * x
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.nonlinear(x) + self.k.eval(t)
    }

    /// `m |kappa| radius^(m-1)`, the sup of `|d/dx nonlinear|` on the ball.
    pub fn lipschitz_on_ball(&self, radius: f64) -> f64 {
        self.m as f64 * self.kappa.abs() * radius.powi(self.m as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LienardSpec {
    pub f: FrictionSpec,
    pub g: RestoringSpec,
    pub e: ForcingSpec,
}

impl LienardSpec {
    pub fn validate(&self) -> Result<()> {
        if self.e.m < 2 {
            return Err(Error::InvalidArgument("forcing exponent m must be >= 2".into()));
        }
        if let FrictionSpec::Polynomial {
            coeffs,
            antiderivative: Some(big_f),
        } = &self.f
        {
            for (t, x) in [(0.0, 0.3), (1.7, -0.8), (-2.4, 1.1)] {
                if horner(big_f, t, 0.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument("F(0) must vanish".into()));
                }
                let h = 1e-5;
                let fd = (horner(big_f, t, x + h) - horner(big_f, t, x - h)) / (2.0 * h);
                if (fd - horner(coeffs, t, x)).abs() > 1e-6 * (1.0 + fd.abs()) {
                    return Err(Error::InvalidArgument("F' differs from f".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Direct,
    Alternate,
    Custom,
}

pub type MatrixField = Arc<dyn Fn(f64) -> Mat2 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(f64) -> Vec2 + Send + Sync>;
pub type StateField = Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>;

/// `u' = A(t) u + forcing(t) + nonlinearity(t, u)` with `nonlinearity(t, 0) = 0`.
#[derive(Clone)]
pub struct PlanarSystem {
    pub a: MatrixField,
    pub forcing: VectorField,
    pub nonlinearity: StateField,
    pub provenance: Provenance,
    /// Upper bound of `max |A_ij(t)|` over the line.
    pub entry_bound: f64,
    /// Lipschitz constant of the nonlinearity on a ball of the given radius.
    pub lipschitz: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Upper bound of `sup |forcing(t)|`.
    pub forcing_bound: f64,
}

impl fmt::Debug for PlanarSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlanarSystem")
            .field("provenance", &self.provenance)
            .field("entry_bound", &self.entry_bound)
            .field("forcing_bound", &self.forcing_bound)
            .finish_non_exhaustive()
    }
}

impl PlanarSystem {
    pub fn linear(
        a: impl Fn(f64) -> Mat2 + Send + Sync + 'static,
        entry_bound: f64,
        forcing: impl Fn(f64) -> Vec2 + Send + Sync + 'static,
        forcing_bound: f64,
    ) -> Self {
        Self {
            a: Arc::new(a),
            forcing: Arc::new(forcing),
            nonlinearity: Arc::new(|_, _| Vec2::zeros()),
            provenance: Provenance::Custom,
            entry_bound,
            lipschitz: Arc::new(|_| 0.0),
            forcing_bound,
        }
    }

    pub fn constant(a: Mat2) -> Self {
        let bound = a.amax();
        Self::linear(move |_| a, bound, |_| Vec2::zeros(), 0.0)
    }

    pub fn matrix(&self, t: f64) -> Mat2 {
        (self.a)(t)
    }

    /// `h(t, u) = forcing(t) + nonlinearity(t, u)`.
    pub fn h(&self, t: f64, u: Vec2) -> Vec2 {
        (self.forcing)(t) + (self.nonlinearity)(t, u)
    }

    pub fn vector_field(&self, t: f64, u: Vec2) -> Vec2 {
        self.matrix(t) * u + self.h(t, u)
    }

    pub fn lipschitz_on_ball(&self, radius: f64) -> f64 {
        (self.lipschitz)(radius)
    }
}

/// `x' = y - F(t, x)`, `y' = -g(t, x) + e(t, x)`. A time-only friction uses
/// `F = q(t) x`, which yields `A = [[-q, 1], [-(c + r), 0]]`.
pub fn to_planar(spec: &LienardSpec) -> Result<PlanarSystem> {
    spec.validate()?;
    let f0 = spec.f.linear_part();
    let r = spec.g.r.clone();
    let c = spec.g.c;
    let entry_bound = f0.triangle_bound().max(1.0).max(c.abs() + r.triangle_bound());
    let a = move |t: f64| Mat2::new(-f0.eval(t), 1.0, -(c + r.eval(t)), 0.0);

    let nonlinear_f = match &spec.f {
        FrictionSpec::Polynomial { antiderivative, .. } if spec.f.depends_on_x() => {
            let Some(big_f) = antiderivative.clone() else {
                return Err(Error::UnsupportedSpec(
                    "x-dependent friction needs an antiderivative descriptor F".into(),
                ));
            };
            Some(big_f)
        }
        _ => None,
    };
    let k = spec.e.k.clone();
    let forcing_bound = k.triangle_bound();
    let forcing = move |t: f64| Vec2::new(0.0, k.eval(t));
    let e = spec.e.clone();
    let nonlinearity = move |t: f64, u: Vec2| {
        let fx = match &nonlinear_f {
            // -(F(t, x) - F_1(t) x)
            Some(big_f) => {
                let lin = big_f.get(1).map(|c| c.eval(t)).unwrap_or(0.0);
                -(horner(big_f, t, u[0]) - lin * u[0])
            }
            None => 0.0,
        };
        Vec2::new(fx, e.nonlinear(u[0]))
    };
    let friction = spec.f.clone();
    let forcing_spec = spec.e.clone();
    let lipschitz = move |radius: f64| {
        friction
            .nonlinear_slope_bound(radius)
            .max(forcing_spec.lipschitz_on_ball(radius))
    };
    Ok(PlanarSystem {
        a: Arc::new(a),
        forcing: Arc::new(forcing),
        nonlinearity: Arc::new(nonlinearity),
        provenance: Provenance::Direct,
        entry_bound,
        lipschitz: Arc::new(lipschitz),
        forcing_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltTransformSpec {
    pub a: QuasiPeriodicSignal,
    #[serde(default = "CompositeSignal::zero")]
    pub theta1: CompositeSignal,
}

impl AltTransformSpec {
    pub fn a_min(&self) -> f64 {
        self.a.lower_bound()
    }

    /// `a theta1 - theta1' + k`, the x-free part of theta2. The derivative
    /// is taken mode-wise; tails of theta1 are not differentiated.
    pub fn theta2(&self, spec: &LienardSpec, t: f64) -> f64 {
        self.a.eval(t) * self.theta1.eval(t) - self.theta1.ap_part.derivative(t) + spec.e.k.eval(t)
    }
}

/// `y = x' + a x - theta1` gives `A = diag(-a, a)` and
/// `H = (y + theta1, -a^2 x + a' x - f (y - a x + theta1) - g + theta2)`.
pub fn to_planar_alt(spec: &LienardSpec, alt: &AltTransformSpec) -> Result<PlanarSystem> {
    spec.validate()?;
    if alt.theta1.tail.kind != crate::signal::TailKind::None {
        return Err(Error::InvalidTransform(
            "theta1 must be a pure trigonometric sum".into(),
        ));
    }
    let a_min = alt.a_min();
    if !(a_min > 0.0) {
        return Err(Error::InvalidTransform(format!(
            "a(t) must be bounded below by a positive constant, lower bound is {a_min}"
        )));
    }
    let a_sig = alt.a.clone();
    let entry_bound = a_sig.triangle_bound();
    let a = move |t: f64| {
        let at = a_sig.eval(t);
        Mat2::new(-at, 0.0, 0.0, at)
    };
    let (alt_f, spec_f) = (alt.clone(), spec.clone());
    let forcing = move |t: f64| {
        let th1 = alt_f.theta1.eval(t);
        Vec2::new(th1, alt_f.theta2(&spec_f, t) - spec_f.f.eval(t, 0.0) * th1)
    };
    let (alt_n, spec_n) = (alt.clone(), spec.clone());
    let nonlinearity = move |t: f64, u: Vec2| {
        let (x, y) = (u[0], u[1]);
        let at = alt_n.a.eval(t);
        let th1 = alt_n.theta1.eval(t);
        let second = -at * at * x + alt_n.a.derivative(t) * x
            - spec_n.f.eval(t, x) * (y - at * x + th1)
            + spec_n.f.eval(t, 0.0) * th1
            - spec_n.g.eval(t, x)
            + spec_n.e.nonlinear(x);
        Vec2::new(y, second)
    };
    let forcing_bound = alt.theta1.triangle_bound()
        + (alt.a.triangle_bound() + spec.f.linear_part().triangle_bound())
            * alt.theta1.triangle_bound()
        + alt.theta1.ap_part.modes.iter().map(|m| (m.amplitude * m.frequency).abs()).sum::<f64>()
        + spec.e.k.triangle_bound();
    Ok(PlanarSystem {
        a: Arc::new(a),
        forcing: Arc::new(forcing),
        nonlinearity: Arc::new(nonlinearity),
        provenance: Provenance::Alternate,
        entry_bound,
        lipschitz: Arc::new(|_| f64::INFINITY),
        forcing_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Grid {
    pub window: (f64, f64),
    pub grid_step: f64,
    pub x_range: (f64, f64),
    pub x_samples: usize,
    pub t_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Certificate {
    pub m_bound: f64,
    pub delta: f64,
    pub grid: Lemma1Grid,
    /// `max |f| + |g_x|`
    pub worst_sum: f64,
    /// `max 4 g_x + f^2`
    pub worst_quad: f64,
    pub worst_quad_at: (f64, f64),
    pub valid: bool,
}

/// Grid check of `|f| + |g_x| < M` and `4 g_x + f^2 < -delta`.
pub fn check_lemma1(
    spec: &LienardSpec,
    window: (f64, f64),
    grid_step: f64,
    x_range: (f64, f64),
    m_bound: f64,
    delta: f64,
) -> Result<Lemma1Certificate> {
    if !(grid_step > 0.0) || !(window.0 <= window.1) || !(x_range.0 <= x_range.1) {
        return Err(Error::InvalidArgument("bad lemma grid".into()));
    }
    let t_samples = ((window.1 - window.0) / grid_step).floor() as usize + 1;
    let x_samples = if spec.f.depends_on_x() {
        ((x_range.1 - x_range.0) / grid_step).floor() as usize + 1
    } else {
        1
    };
    let mut worst_sum = f64::NEG_INFINITY;
    let mut worst_quad = f64::NEG_INFINITY;
    let mut worst_quad_at = (window.0, x_range.0);
    for i in 0..t_samples {
        let t = window.0 + i as f64 * grid_step;
        let gx = spec.g.slope(t);
        for j in 0..x_samples {
            let x = x_range.0 + j as f64 * grid_step;
            let f = spec.f.eval(t, x);
            worst_sum = worst_sum.max(f.abs() + gx.abs());
            let quad = 4.0 * gx + f * f;
            if quad > worst_quad {
                worst_quad = quad;
                worst_quad_at = (t, x);
            }
        }
    }
    Ok(Lemma1Certificate {
        m_bound,
        delta,
        grid: Lemma1Grid {
            window,
            grid_step,
            x_range,
            x_samples,
            t_samples,
        },
        worst_sum,
        worst_quad,
        worst_quad_at,
        valid: worst_sum < m_bound && worst_quad < -delta && delta > 0.0,
    })
}

/// The planar worked example: `f = q`, `g = (-2 + r) x`, `e = kappa |x|^(m-1) x + k`.
pub fn saddle_example(kappa: f64, m: u32, k: CompositeSignal) -> LienardSpec {
    let s2 = 2f64.sqrt();
    LienardSpec {
        f: FrictionSpec::Time(QuasiPeriodicSignal::sines(&[(1.0, 1.0), (s2, 1.0)])),
        g: RestoringSpec {
            c: -2.0,
            r: QuasiPeriodicSignal::cosines(&[(1.0, 1.0), (s2, 1.0)]),
        },
        e: ForcingSpec { m, kappa, k },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Mode;
    use approx::assert_relative_eq;

    fn constant(c: f64) -> QuasiPeriodicSignal {
        QuasiPeriodicSignal::constant(c)
    }

    #[test]
    fn saddle_matrix_matches_closed_form() {
        let sys = to_planar(&saddle_example(0.0, 2, CompositeSignal::zero())).unwrap();
        for t in [0.0f64, 0.7, -3.1, 12.0] {
            let q = t.sin() + (2f64.sqrt() * t).sin();
            let r = t.cos() + (2f64.sqrt() * t).cos();
            let a = sys.matrix(t);
            assert_relative_eq!(a, Mat2::new(-q, 1.0, 2.0 - r, 0.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let spec = LienardSpec {
            f: FrictionSpec::Time(constant(0.0)),
            g: RestoringSpec { c: 1.0, r: constant(0.0) },
            e: ForcingSpec::zero(),
        };
        let sys = to_planar(&spec).unwrap();
        assert_eq!(sys.matrix(3.0), Mat2::new(0.0, 1.0, -1.0, 0.0));
    }

    #[test]
    fn forcing_at_origin_is_k() {
        let k = CompositeSignal::almost_periodic(QuasiPeriodicSignal::sines(&[(1.0, 0.3)]));
        let sys = to_planar(&saddle_example(1.0, 2, k.clone())).unwrap();
        for t in [0.0, 1.0, 2.0] {
            let h = sys.h(t, Vec2::zeros());
            assert_eq!(h, Vec2::new(0.0, k.eval(t)));
        }
        assert_relative_eq!(sys.lipschitz_on_ball(0.5), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn x_dependent_friction_without_primitive_is_unsupported() {
        let spec = LienardSpec {
            f: FrictionSpec::Polynomial {
                coeffs: vec![constant(0.0), constant(1.0)],
                antiderivative: None,
            },
            g: RestoringSpec { c: 1.0, r: constant(0.0) },
            e: ForcingSpec::zero(),
        };
        assert!(matches!(to_planar(&spec), Err(Error::UnsupportedSpec(_))));
        let bad_f = LienardSpec {
            f: FrictionSpec::Polynomial {
                coeffs: vec![constant(0.0), constant(1.0)],
                antiderivative: Some(vec![constant(0.0), constant(0.0), constant(1.0)]),
            },
            ..spec.clone()
        };
        assert!(to_planar(&bad_f).is_err());
        let ok = LienardSpec {
            f: FrictionSpec::with_derived_antiderivative(vec![constant(0.0), constant(1.0)]),
            ..spec
        };
        assert!(to_planar(&ok).is_ok());
    }

    #[test]
    fn alternate_transform_examples() {
        let spec = LienardSpec {
            f: FrictionSpec::Time(constant(0.0)),
            g: RestoringSpec { c: 0.0, r: constant(0.0) },
            e: ForcingSpec::zero(),
        };
        let alt = AltTransformSpec { a: constant(2.0), theta1: CompositeSignal::zero() };
        let sys = to_planar_alt(&spec, &alt).unwrap();
        assert_eq!(sys.matrix(0.4), Mat2::new(-2.0, 0.0, 0.0, 2.0));
        let u = Vec2::new(0.3, -1.2);
        assert_relative_eq!(sys.h(0.4, u), Vec2::new(u[1], -4.0 * u[0]), epsilon = 1e-15);

        // bounded f, g = 0, theta1 = 0: second component -a^2 x - f (y - a x)
        let spec_f = LienardSpec {
            f: FrictionSpec::Time(QuasiPeriodicSignal::sines(&[(1.0, 0.5)])),
            ..spec.clone()
        };
        let sys = to_planar_alt(&spec_f, &alt).unwrap();
        let t = 0.9f64;
        let f = 0.5 * t.sin();
        let want = -4.0 * u[0] - f * (u[1] - 2.0 * u[0]);
        assert_relative_eq!(sys.h(t, u)[1], want, epsilon = 1e-14);

        // origin: H = (theta1, theta2)
        let k = CompositeSignal::almost_periodic(QuasiPeriodicSignal::sines(&[(0.5, 0.2)]));
        let spec_k = LienardSpec { e: ForcingSpec { m: 2, kappa: 1.0, k }, ..spec };
        let sys = to_planar_alt(&spec_k, &alt).unwrap();
        assert_relative_eq!(
            sys.h(t, Vec2::zeros()),
            Vec2::new(0.0, alt.theta2(&spec_k, t)),
            epsilon = 1e-15
        );

        let bad = AltTransformSpec {
            a: QuasiPeriodicSignal::new(vec![Mode { frequency: 1.0, amplitude: 1.0, phase: 0.0 }], 0.5),
            theta1: CompositeSignal::zero(),
        };
        assert!(matches!(to_planar_alt(&spec_k, &bad), Err(Error::InvalidTransform(_))));
    }

    #[test]
    fn lemma1_trivial_cases() {
        let center = LienardSpec {
            f: FrictionSpec::Time(constant(0.0)),
            g: RestoringSpec { c: 1.0, r: constant(0.0) },
            e: ForcingSpec::zero(),
        };
        let c = check_lemma1(&center, (0.0, 10.0), 0.01, (-1.0, 1.0), 6.0, 2.0).unwrap();
        assert_eq!(c.worst_quad, 4.0);
        assert!(!c.valid);
        let damped = LienardSpec {
            f: FrictionSpec::Time(constant(3.0)),
            g: RestoringSpec { c: -1.0, r: constant(0.0) },
            e: ForcingSpec::zero(),
        };
        let c = check_lemma1(&damped, (0.0, 10.0), 0.01, (-1.0, 1.0), 6.0, 2.0).unwrap();
        assert_eq!(c.worst_quad, 5.0);
        assert!(!c.valid);
    }

    #[test]
    fn lemma1_on_saddle_example_is_attained_at_the_origin() {
        // 4 g_x + f^2 = -8 + 4 r + q^2 equals 0 at t = 0
        let spec = saddle_example(0.0, 2, CompositeSignal::zero());
        let c = check_lemma1(&spec, (0.0, 140.0 * std::f64::consts::PI), 0.01, (-1.0, 1.0), 6.0, 2.0)
            .unwrap();
        assert_relative_eq!(c.worst_quad, 0.0, epsilon = 1e-12);
        assert_eq!(c.worst_quad_at.0, 0.0);
        assert!(c.worst_sum < 6.0);
        assert!(!c.valid);
    }

    #[test]
    fn spec_json_schema() {
        let json = r#"{
            "f": {"modes": [[1.0, 1.0, 0.0], [1.4142135623730951, 1.0, 0.0]]},
            "g": {"c": -2.0, "r": {"modes": [[1.0, 1.0, 1.5707963267948966]]}},
            "e": {"m": 2, "kappa": 0.5, "k": {"modes": [[1.0, 0.1, 0.0]]}}
        }"#;
        let spec: LienardSpec = serde_json::from_str(json).unwrap();
        assert!(matches!(spec.f, FrictionSpec::Time(_)));
        let poly = r#"{"coeffs": [{"offset": 0.0}, {"offset": 2.0}], "F": [{}, {}, {"offset": 1.0}]}"#;
        let f: FrictionSpec = serde_json::from_str(poly).unwrap();
        assert!(f.depends_on_x());
        assert_relative_eq!(f.eval(0.0, 0.5), 1.0);
    }
}

use std::path::Path;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use lienard_core::dichotomy::{certify_green_almost_periodic, certify_green_decay, GreenApCertificate, GreenFunction};
use lienard_core::lienard::check_lemma1;
use lienard_core::mild::{
    aap_tail_decay, ergodic_means, picard_solve_halfline, picard_solve_wholeline, verify_ap_class, GridSolution,
    HalflineAnchor, NonlinearitySpec,
};
use lienard_core::propagator::fit_exponential_bound;
use lienard_core::quadrature::simpson_to_tolerance;
use lienard_core::scenario::{LienardPipeline, ModelSpec, Scenario, SolveMode};
use lienard_core::signal::{classify_tail, find_almost_periods_with, sup_norm_estimate, SearchOptions, SignalClass, TailKind};
use lienard_core::spectral::{dichotomy_constants_pde, pde_picard_solve, PdeSpec};
use lienard_core::stability::{decay_grid, gronwall_constants, perturb_and_measure, random_offsets};
use lienard_core::Vec2;

use crate::output::{write_csv, write_json};
use crate::Common;

#[derive(Debug)]
pub enum Outcome {
    Certified,
    CertificateFailed(Vec<String>),
}

impl Outcome {
    fn from_failures(failures: Vec<String>) -> Self {
        if failures.is_empty() {
            Outcome::Certified
        } else {
            Outcome::CertificateFailed(failures)
        }
    }
}

fn load(common: &Common) -> anyhow::Result<Scenario> {
    let mut s = Scenario::load(&common.scenario).with_context(|| format!("loading {}", common.scenario.display()))?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn parse_window(text: &str) -> anyhow::Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("window must be `a,b`, got {text:?}");
    }
    let (a, b): (f64, f64) = (parts[0].parse()?, parts[1].parse()?);
    if !(a < b) {
        bail!("window [{a}, {b}] is empty");
    }
    Ok((a, b))
}

fn header(s: &Scenario, command: &str) -> Value {
    json!({ "command": command, "scenario": s.name, "seed": s.seed })
}

fn with<T: Serialize>(mut base: Value, key: &str, value: T) -> anyhow::Result<Value> {
    base[key] = serde_json::to_value(value)?;
    Ok(base)
}

pub fn signal(common: &Common) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let p = LienardPipeline::new(&s)?;
    let names: Vec<&str> = if s.transform.is_some() { vec!["a"] } else { vec!["q", "r"] };
    let opts = SearchOptions {
        grid_step: s.signal.grid_step,
        window_factor: s.signal.window_factor,
        ..SearchOptions::default()
    };
    let mut coefficients = Vec::new();
    for (name, sig) in names.iter().zip(p.coefficient_signals()) {
        let sup = sup_norm_estimate(&sig, (0.0, 100.0), s.signal.grid_step)?;
        let witnesses = find_almost_periods_with(&sig, s.signal.epsilon, s.signal.search, opts)?;
        coefficients.push(json!({
            "name": name,
            "sup_norm": sup,
            "triangle_bound": sig.triangle_bound(),
            "witnesses": witnesses,
        }));
    }
    let common_periods = p.almost_periods()?;
    let mut failures = Vec::new();
    if common_periods.best.is_none() {
        failures.push(format!("no common {}-almost period found", s.signal.epsilon));
    }
    let tail = &p.spec.e.k.tail;
    let classification = if tail.kind != TailKind::None {
        let c = classify_tail(&|t: f64| tail.eval(t), tail.kind, &[10.0, 20.0, 40.0, 80.0, 160.0])?;
        if c.label == lienard_core::signal::TailLabel::InconsistentWithDeclaredClass {
            failures.push("forcing tail is inconsistent with its declared kind".into());
        }
        Some(c)
    } else {
        None
    };
    let mut report = header(&s, "signal");
    report["coefficients"] = Value::Array(coefficients);
    report = with(report, "common", &common_periods)?;
    report = with(report, "forcing_tail", &classification)?;
    report = with(report, "failures", &failures)?;
    write_json(common.out.as_deref(), &report)?;
    Ok(Outcome::from_failures(failures))
}

pub fn model(common: &Common, lemma1: bool) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let p = LienardPipeline::new(&s)?;
    let rho = s.solver.rho;
    let samples: Vec<Value> = (0..=10)
        .map(|i| {
            let t = i as f64;
            let a = p.system.matrix(t);
            json!({ "t": t, "A": [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]] })
        })
        .collect();
    let mut report = header(&s, "model");
    report = with(report, "provenance", p.system.provenance)?;
    report["entry_bound"] = json!(p.system.entry_bound);
    report["forcing_bound"] = json!(p.system.forcing_bound);
    report["lipschitz"] = json!({ "rho": rho, "L": p.system.lipschitz_on_ball(rho), "L1": p.system.lipschitz_on_ball(2.0 * rho) });
    report["samples"] = Value::Array(samples);
    let mut failures = Vec::new();
    if lemma1 {
        let cfg = s.lemma1;
        let window = match cfg.window {
            Some(w) => w,
            None => (0.0, p.almost_period()?.0),
        };
        let cert = check_lemma1(&p.spec, window, cfg.grid_step, cfg.x_range, cfg.m_bound, cfg.delta)?;
        if !cert.valid {
            failures.push(format!(
                "coefficient-condition grid check: worst_sum = {:.6} (need < {}), worst_quad = {:.6} at (t, x) = ({:.3}, {:.3}) (need < {})",
                cert.worst_sum, cert.m_bound, cert.worst_quad, cert.worst_quad_at.0, cert.worst_quad_at.1, -cert.delta
            ));
        }
        report = with(report, "lemma1", cert)?;
    }
    report = with(report, "failures", &failures)?;
    write_json(common.out.as_deref(), &report)?;
    Ok(Outcome::from_failures(failures))
}

pub fn propagate(common: &Common, from: f64, to: f64) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let p = LienardPipeline::new(&s)?;
    let u = p.prop.matrix(from, to)?;
    let det = p.prop.determinant(from, to)?;
    let trace = |t: f64| p.system.matrix(t).trace();
    let (lo, hi, sign) = if from <= to { (from, to, 1.0) } else { (to, from, -1.0) };
    let integral = sign * simpson_to_tolerance(trace, lo, hi, 1e-12).value;
    let liouville = integral.exp();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut worst_abs = 0.0_f64;
    let mut worst_norm = 0.0_f64;
    for _ in 0..100 {
        let (a, b, c) = (rng.random_range(-10.0..=10.0), rng.random_range(-10.0..=10.0), rng.random_range(-10.0..=10.0));
        let d = p.prop.cocycle_defect(a, b, c)?;
        worst_abs = worst_abs.max(d.absolute);
        worst_norm = worst_norm.max(d.normalized);
    }
    let forward: Vec<(f64, f64)> = p.fit_pairs().into_iter().map(|(t, s)| if t >= s { (t, s) } else { (s, t) }).collect();
    let bound = fit_exponential_bound(&p.prop, &forward)?;
    let mut report = header(&s, "propagate");
    report["from"] = json!(from);
    report["to"] = json!(to);
    report["step"] = json!(p.prop.step());
    report["U"] = json!([[u[(0, 0)], u[(0, 1)]], [u[(1, 0)], u[(1, 1)]]]);
    report["liouville"] = json!({
        "det": det,
        "exp_integral_trace": liouville,
        "relative_error": ((det - liouville) / liouville).abs(),
    });
    report["cocycle"] = json!({ "triples": 100, "max_absolute": worst_abs, "max_normalized": worst_norm });
    report = with(report, "exponential_bound", bound)?;
    let mut failures = Vec::new();
    if worst_norm >= 1e-6 {
        failures.push(format!("cocycle defect {worst_norm:e} exceeds 1e-6"));
    }
    report = with(report, "failures", &failures)?;
    write_json(common.out.as_deref(), &report)?;
    Ok(Outcome::from_failures(failures))
}

fn green_ap(p: &LienardPipeline, gf: &GreenFunction) -> anyhow::Result<GreenApCertificate> {
    let (period, len) = p.almost_period()?;
    let cfg = &p.scenario.green_ap;
    let k = gf.constants();
    let pairs = p.random_pairs(cfg.pairs, cfg.range, 2);
    Ok(certify_green_almost_periodic(
        gf,
        period,
        len,
        cfg.eta,
        cfg.gamma.unwrap_or(k.beta / 2.0),
        cfg.epsilon.unwrap_or(p.scenario.signal.epsilon),
        &pairs,
    )?)
}

pub fn dichotomy(common: &Common) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let p = LienardPipeline::new(&s)?;
    let gf = p.green()?;
    let k = gf.constants();
    let decay = certify_green_decay(&gf, &p.random_pairs(s.dichotomy.decay_pairs, s.dichotomy.decay_range, 1))?;
    let ap = green_ap(&p, &gf)?;
    let mut failures = Vec::new();
    if !(k.beta > 0.0 && k.fit_residual < 0.05) {
        failures.push(format!("fit: beta = {}, relative residual = {}", k.beta, k.fit_residual));
    }
    if !decay.passed {
        failures.push(format!("Green decay: {} violations, worst ratio {}", decay.violations, decay.worst_ratio));
    }
    if !ap.valid {
        failures.push(format!(
            "Green almost periodicity: scaled defect {:e} exceeds epsilon {}",
            ap.max_scaled_defect, ap.epsilon
        ));
    }
    let mut report = header(&s, "dichotomy");
    report["window_t"] = json!(gf.splitting.window_t);
    report = with(report, "constants", k)?;
    report = with(report, "green_decay", decay)?;
    report = with(report, "green_almost_periodic", ap)?;
    report = with(report, "failures", &failures)?;
    write_json(common.out.as_deref(), &report)?;
    Ok(Outcome::from_failures(failures))
}

fn solve_with(
    gf: &GreenFunction,
    nl: &NonlinearitySpec,
    s: &Scenario,
    mode: SolveMode,
    window: (f64, f64),
) -> anyhow::Result<(GridSolution, lienard_core::mild::ContractionCertificate)> {
    Ok(match mode {
        SolveMode::Wholeline => picard_solve_wholeline(gf, nl, window, &s.solver, None)?,
        SolveMode::Halfline => {
            if window.0 != 0.0 {
                bail!("half-line windows start at 0");
            }
            let anchor = s.solve.anchor.unwrap_or(HalflineAnchor::StableComponent([0.0, 0.0]));
            picard_solve_halfline(gf, nl, anchor, window.1, &s.solver)?
        }
    })
}

fn class_checks(
    p: &LienardPipeline,
    gf: &GreenFunction,
    sol: &GridSolution,
    nl: &NonlinearitySpec,
    mode: SolveMode,
    failures: &mut Vec<String>,
) -> anyhow::Result<Value> {
    let s = &p.scenario;
    let window = sol.window;
    match p.declared_class() {
        SignalClass::AP => {
            let (period, _) = p.almost_period()?;
            if window.1 - window.0 <= period {
                return Ok(json!({ "class": "AP", "skipped": format!("window shorter than the almost period {period}") }));
            }
            let gap = green_ap(p, gf)?;
            let rep = verify_ap_class(sol, nl, &gf.constants(), period, &gap)?;
            if !rep.passed {
                failures.push(format!("AP deviation {:e} exceeds the bound {:e}", rep.deviation, rep.bound));
            }
            Ok(json!({ "class": "AP", "report": rep, "green_almost_periodic": gap }))
        }
        SignalClass::PAP | SignalClass::AAP => {
            let Some(reference) = p.ap_reference()? else {
                return Ok(json!({ "class": p.declared_class(), "skipped": "no tail" }));
            };
            let rnl = reference.nonlinearity();
            let (rsol, _) = solve_with(gf, &rnl, s, mode, window)?;
            if p.declared_class() == SignalClass::PAP {
                let (lo, hi) = sol.span();
                let radii: Vec<f64> = s.solve.pap_radii.iter().copied().filter(|r| -r >= lo && *r <= hi).collect();
                let means = ergodic_means(sol, &rsol, &radii)?;
                let decreasing = means.windows(2).all(|w| w[1].mean < w[0].mean);
                if radii.len() < 2 || !decreasing {
                    failures.push(format!("ergodic means not decreasing over radii {radii:?}"));
                }
                Ok(json!({ "class": "PAP", "means": means, "decreasing": decreasing }))
            } else {
                let tail = aap_tail_decay(sol, &rsol)?;
                if !(tail.rate > 0.0) {
                    failures.push(format!("AAP gap does not decay (rate {})", tail.rate));
                }
                Ok(json!({ "class": "AAP", "tail": tail }))
            }
        }
        SignalClass::Cb => Ok(json!({ "class": "Cb" })),
    }
}

pub fn solve(common: &Common, mode: Option<&str>, window: Option<&str>, report_path: Option<&Path>) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let mode: SolveMode = match mode {
        Some(m) => m.parse()?,
        None => s.solve.mode,
    };
    let window = match window {
        Some(w) => parse_window(w)?,
        None => s.solve.window,
    };
    let p = LienardPipeline::new(&s)?;
    let gf = p.green()?;
    let nl = p.nonlinearity();
    let (sol, cert) = solve_with(&gf, &nl, &s, mode, window)?;
    let mut failures = Vec::new();
    if !sol.ratio_violations.is_empty() {
        failures.push(format!("Picard ratio violations {:?} above k_lin + slack", sol.ratio_violations));
    }
    let sup = sol.window_sup_norm();
    if sup > s.solver.rho {
        failures.push(format!("sup |u| = {sup} exceeds rho = {}", s.solver.rho));
    }
    let classes = if s.solve.class_checks {
        class_checks(&p, &gf, &sol, &nl, mode, &mut failures)?
    } else {
        Value::Null
    };
    if let Some(out) = &common.out {
        let rows = sol
            .times
            .iter()
            .zip(&sol.values)
            .filter(|(t, _)| **t >= window.0 - 1e-12 && **t <= window.1 + 1e-12)
            .map(|(t, v)| vec![*t, v[0], v[1]]);
        write_csv(out, &["t".into(), "u1".into(), "u2".into()], rows)?;
    }
    let mut report = header(&s, "solve");
    report["mode"] = json!(mode);
    report["window"] = json!(window);
    report = with(report, "constants", gf.constants())?;
    report = with(report, "certificate", &cert)?;
    report["solution"] = json!({
        "nodes": sol.len(),
        "sup_norm": sup,
        "picard_iters": sol.picard_iters,
        "update_norms": sol.update_norms,
        "ratio_violations": sol.ratio_violations,
        "residual_norm": sol.residual_norm,
        "truncation_radius": sol.truncation_radius,
        "tail_bound": sol.tail_bound,
        "quad_step": sol.quad_step,
        "halfline_anchor": sol.halfline_anchor,
    });
    report["class_checks"] = classes;
    report = with(report, "failures", &failures)?;
    write_json(report_path, &report)?;
    Ok(Outcome::from_failures(failures))
}

pub fn stability(common: &Common, offsets: Option<usize>) -> anyhow::Result<Outcome> {
    let s = load(common)?;
    let p = LienardPipeline::new(&s)?;
    let gf = p.green()?;
    let k = gf.constants();
    let nl = p.nonlinearity();
    let g = gronwall_constants(k.n, k.beta, k.h, nl.l1)?;
    let end = *decay_grid(g.mu).last().unwrap_or(&0.0);
    let zeta = match s.stability.base_stable_component {
        Some(z) => Vec2::from(z),
        None => {
            let (whole, _) = picard_solve_wholeline(&gf, &nl, (0.0, 1.0), &s.solver, None)?;
            gf.splitting.projection(0.0)? * whole.at(0.0)
        }
    };
    let (base, _) = picard_solve_halfline(&gf, &nl, HalflineAnchor::StableComponent(zeta.into()), end, &s.solver)?;
    let count = offsets.unwrap_or(s.stability.offsets);
    let offs = random_offsets(&gf, count, s.solver.rho, s.seed)?;
    let rep = perturb_and_measure(&gf, &nl, &base, &offs, &s.solver)?;
    let failures = rep.failures.clone();
    let mut report = header(&s, "stability");
    report = with(report, "constants", k)?;
    report["base_stable_component"] = json!([zeta[0], zeta[1]]);
    report = with(report, "report", &rep)?;
    write_json(common.out.as_deref(), &report)?;
    Ok(Outcome::from_failures(failures))
}

fn load_pde(common: &Common) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(&common.scenario).with_context(|| format!("reading {}", common.scenario.display()))?;
    let mut s = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(scenario_err) => match serde_json::from_str::<PdeSpec>(&text) {
            Ok(spec) => {
                spec.validate()?;
                let wrapped = json!({ "model": { "pde": spec } });
                Scenario::from_json(&wrapped.to_string())?
            }
            Err(_) => return Err(scenario_err.into()),
        },
    };
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

pub fn pde(common: &Common, window: Option<&str>, report_path: Option<&Path>) -> anyhow::Result<Outcome> {
    let s = load_pde(common)?;
    let ModelSpec::Pde(spec) = &s.model else {
        bail!("scenario model is not a PDE");
    };
    let window = match window {
        Some(w) => parse_window(w)?,
        None => s.pde.window,
    };
    let (sol, cert) = pde_picard_solve(spec, window, &s.solver)?;
    let k = dichotomy_constants_pde(spec)?;
    if let Some(out) = &common.out {
        let mut head = vec!["t".to_string()];
        head.extend((1..=sol.n_modes).map(|n| format!("c{n}")));
        let rows = sol
            .times
            .iter()
            .zip(&sol.coeffs)
            .filter(|(t, _)| **t >= window.0 - 1e-12 && **t <= window.1 + 1e-12)
            .map(|(t, c)| std::iter::once(*t).chain(c.iter().copied()).collect());
        write_csv(out, &head, rows)?;
    }
    let mut failures = Vec::new();
    if !sol.ratio_violations.is_empty() {
        failures.push(format!("Picard ratio violations {:?}", sol.ratio_violations));
    }
    let dirichlet = sol.dirichlet_residual();
    let mut report = header(&s, "pde");
    report["window"] = json!(window);
    report = with(report, "spectrum", &sol.spectrum)?;
    report = with(report, "constants", k)?;
    report = with(report, "certificate", &cert)?;
    report["solution"] = json!({
        "nodes": sol.times.len(),
        "n_modes": sol.n_modes,
        "sup_l2": sol.sup_l2(),
        "picard_iters": sol.picard_iters,
        "update_norms": sol.update_norms,
        "mode_tail": sol.mode_tail,
        "dirichlet_residual": dirichlet,
        "truncation_radius": sol.truncation_radius,
    });
    report = with(report, "failures", &failures)?;
    write_json(report_path, &report)?;
    Ok(Outcome::from_failures(failures))
}

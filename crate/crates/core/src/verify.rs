//! Diagnostics on fine-scale solutions: multiscale pairings against
//! oscillating test functions, the two time-derivative conditions, very
//! weak corrector probes and ε-convergence studies.

use crate::coeffs::FineScaleProblem;
use crate::effective::{compute_effective_tensor, CorrectorMoments, EffectiveError, EffectiveResult, NumericsConfig};
use crate::finescale::{energy_norm, l2_error, solve_fine, FineError, FineScaleOptions, FineScaleSolution, TimeWindow};
use crate::macroscale::{solve_homogenized, MacroError, MacroMesh, MacroSolution};
use crate::mesh::{quadrature_rule, BoxDomain};
use crate::regime::ScaleExponents;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("test factor {factor} has period {period:.3e} but the grid step is {step:.3e} (need at most period/8)")]
    Unresolved { factor: &'static str, step: f64, period: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Fine(#[from] FineError),
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Macro(#[from] MacroError),
}

/// Smooth factor on the macro domain (or on (0,T) for time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MacroFactor {
    One,
    /// Π (4ξ(1−ξ))^power over the reference coordinates ξ.
    Bubble { power: u32 },
    /// Π sin(πξ)^power.
    SineBump { power: u32 },
}

impl MacroFactor {
    fn unit(&self, xi: f64) -> f64 {
        if !(0.0..=1.0).contains(&xi) {
            return 0.0;
        }
        match *self {
            MacroFactor::One => 1.0,
            MacroFactor::Bubble { power } => (4.0 * xi * (1.0 - xi)).powi(power as i32),
            MacroFactor::SineBump { power } => (PI * xi).sin().powi(power as i32),
        }
    }

    fn unit_derivative(&self, xi: f64) -> f64 {
        if !(0.0..=1.0).contains(&xi) {
            return 0.0;
        }
        match *self {
            MacroFactor::One => 0.0,
            MacroFactor::Bubble { power: 0 } | MacroFactor::SineBump { power: 0 } => 0.0,
            MacroFactor::Bubble { power } => {
                power as f64 * (4.0 * xi * (1.0 - xi)).powi(power as i32 - 1) * 4.0 * (1.0 - 2.0 * xi)
            }
            MacroFactor::SineBump { power } => {
                power as f64 * (PI * xi).sin().powi(power as i32 - 1) * (PI * xi).cos() * PI
            }
        }
    }

    pub fn eval_space(&self, domain: &BoxDomain, x: &[f64]) -> f64 {
        let r = domain.reference(x);
        (0..domain.dim()).map(|d| self.unit(r[d])).product()
    }

    pub fn eval_time(&self, horizon: f64, t: f64) -> f64 {
        self.unit(t / horizon)
    }

    pub fn derivative_time(&self, horizon: f64, t: f64) -> f64 {
        self.unit_derivative(t / horizon) / horizon
    }
}

/// 1-periodic trigonometric factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellFactor {
    One,
    Sin { k: u32, #[serde(default)] axis: usize },
    Cos { k: u32, #[serde(default)] axis: usize },
}

impl CellFactor {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match *self {
            CellFactor::One => 1.0,
            CellFactor::Sin { k, axis } => (2.0 * PI * k as f64 * y[axis.min(y.len() - 1)]).sin(),
            CellFactor::Cos { k, axis } => (2.0 * PI * k as f64 * y[axis.min(y.len() - 1)]).cos(),
        }
    }

    pub fn eval_scalar(&self, s: f64) -> f64 {
        self.eval(&[s])
    }

    /// d/ds of the factor as a function of a scalar argument.
    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            CellFactor::One => 0.0,
            CellFactor::Sin { k, .. } => 2.0 * PI * k as f64 * (2.0 * PI * k as f64 * s).cos(),
            CellFactor::Cos { k, .. } => -2.0 * PI * k as f64 * (2.0 * PI * k as f64 * s).sin(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CellFactor::One | CellFactor::Cos { k: 0, .. } => 1.0,
            _ => 0.0,
        }
    }

    pub fn is_zero_mean(&self) -> bool {
        self.mean() == 0.0
    }

    pub fn is_one(&self) -> bool {
        matches!(self, CellFactor::One | CellFactor::Cos { k: 0, .. })
    }

    fn frequency(&self) -> u32 {
        match *self {
            CellFactor::One => 0,
            CellFactor::Sin { k, .. } | CellFactor::Cos { k, .. } => k,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            CellFactor::One => "1".into(),
            CellFactor::Sin { k, axis } => format!("sin{k}[{axis}]"),
            CellFactor::Cos { k, axis } => format!("cos{k}[{axis}]"),
        }
    }
}

/// v(x) c₁(t) v₂(x/ε) v₃(x/ε²) c₂(t/ε^q) c₃(t/ε^r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatingTest {
    pub v: MacroFactor,
    pub c1: MacroFactor,
    pub v2: CellFactor,
    pub v3: CellFactor,
    pub c2: CellFactor,
    pub c3: CellFactor,
}

impl OscillatingTest {
    pub fn macro_only(v: MacroFactor, c1: MacroFactor) -> Self {
        OscillatingTest { v, c1, v2: CellFactor::One, v3: CellFactor::One, c2: CellFactor::One, c3: CellFactor::One }
    }

    pub fn label(&self) -> String {
        format!("v2={} v3={} c2={} c3={}", self.v2.label(), self.v3.label(), self.c2.label(), self.c3.label())
    }
}

fn check_resolved(factor: &'static str, f: &CellFactor, scale: f64, step: f64) -> Result<(), VerifyError> {
    let k = f.frequency();
    if k == 0 {
        return Ok(());
    }
    let period = scale / k as f64;
    if step > period / 8.0 * (1.0 + 1e-9) {
        return Err(VerifyError::Unresolved { factor, step, period });
    }
    Ok(())
}

fn check_test(u: &FineScaleSolution, test: &OscillatingTest, exps: &ScaleExponents, space_only: bool) -> Result<(), VerifyError> {
    let e = u.epsilon;
    let h = u.mesh.spacing();
    check_resolved("v2", &test.v2, e, h)?;
    check_resolved("v3", &test.v3, e * e, h)?;
    if !space_only {
        let dt = u.plan.dt;
        check_resolved("c2", &test.c2, e.powf(exps.q), dt)?;
        check_resolved("c3", &test.c3, e.powf(exps.r), dt)?;
    }
    Ok(())
}

/// Per-slice spatial integrals ∫ u(·,t_n) w(x) dx.
fn slice_integrals(u: &FineScaleSolution, w: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Vec<f64> {
    let dim = u.mesh.dim();
    let (qw, pts) = quadrature_rule(dim);
    // weights of the P1 basis at every quadrature point, reused for all slices
    let mut table = Vec::with_capacity(u.mesh.elements().len() * qw.len());
    for el in u.mesh.elements() {
        for (wk, l) in qw.iter().zip(&pts) {
            let x = el.point(l, dim);
            let gw = wk * el.measure * w(&x[..dim]);
            table.push((el.nodes, *l, gw));
        }
    }
    u.values
        .par_iter()
        .map(|vals| {
            table
                .iter()
                .map(|(nodes, l, gw)| gw * (0..=dim).map(|a| l[a] * vals[nodes[a]]).sum::<f64>())
                .sum()
        })
        .collect()
}

/// ∫₀ᵀ S(t) g(t) dt with S linear between slices and 3-point Gauss per interval.
fn time_pairing(times: &[f64], s: &[f64], g: &dyn Fn(f64) -> f64) -> f64 {
    let a = (0.6f64).sqrt() * 0.5;
    let nodes = [0.5 - a, 0.5, 0.5 + a];
    let weights = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut total = 0.0;
    for k in 0..times.len().saturating_sub(1) {
        let (t0, t1) = (times[k], times[k + 1]);
        let dt = t1 - t0;
        for (x, w) in nodes.iter().zip(&weights) {
            let t = t0 + x * dt;
            let sv = (1.0 - x) * s[k] + x * s[k + 1];
            total += w * dt * sv * g(t);
        }
    }
    total
}

fn spatial_weight<'a>(u: &'a FineScaleSolution, test: &'a OscillatingTest) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    let e = u.epsilon;
    let domain = domain_of(u);
    move |x: &[f64]| {
        let mut y1 = [0.0; 2];
        let mut y2 = [0.0; 2];
        for d in 0..x.len() {
            y1[d] = x[d] / e;
            y2[d] = x[d] / (e * e);
        }
        test.v.eval_space(&domain, x) * test.v2.eval(&y1[..x.len()]) * test.v3.eval(&y2[..x.len()])
    }
}

fn domain_of(u: &FineScaleSolution) -> BoxDomain {
    let dim = u.mesh.dim();
    let lo = u.mesh.node_coords(0);
    let hi = u.mesh.node_coords(u.mesh.num_nodes() - 1);
    BoxDomain { lower: lo[..dim].to_vec(), lengths: (0..dim).map(|d| hi[d] - lo[d]).collect() }
}

/// ∫_{Ω_T} u_ε v(x) c₁(t) v₂(x/ε) v₃(x/ε²) c₂(t/ε^q) c₃(t/ε^r) dx dt.
pub fn eval_multiscale_pairing(u: &FineScaleSolution, test: &OscillatingTest, exps: &ScaleExponents) -> Result<f64, VerifyError> {
    check_test(u, test, exps, false)?;
    let s = slice_integrals(u, &spatial_weight(u, test));
    let (e, horizon) = (u.epsilon, u.horizon());
    let (eq, er) = (e.powf(exps.q), e.powf(exps.r));
    let g = |t: f64| test.c1.eval_time(horizon, t) * test.c2.eval_scalar(t / eq) * test.c3.eval_scalar(t / er);
    Ok(time_pairing(&u.times, &s, &g))
}

/// Condition magnitudes for one ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub epsilon: f64,
    /// |∫ u_ε v ∂_t(ε^r c₁ c₂ c₃)|
    pub condition1: f64,
    /// |∫ u_ε v ∂_t(ε^q c₁ c₂)|
    pub condition2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTable {
    pub test: String,
    pub rows: Vec<ConditionRow>,
    pub condition1_non_increasing: bool,
    pub condition2_non_increasing: bool,
}

/// Signed value of both condition integrands for one run.
pub fn time_condition_values(
    u: &FineScaleSolution,
    v: MacroFactor,
    c1: MacroFactor,
    c2: CellFactor,
    c3: CellFactor,
    exps: &ScaleExponents,
) -> Result<(f64, f64), VerifyError> {
    let test = OscillatingTest { v, c1, v2: CellFactor::One, v3: CellFactor::One, c2, c3 };
    check_test(u, &test, exps, false)?;
    let s = slice_integrals(u, &spatial_weight(u, &test));
    let (e, horizon) = (u.epsilon, u.horizon());
    let (q, r) = (exps.q, exps.r);
    let (eq, er) = (e.powf(q), e.powf(r));
    let w1 = |t: f64| {
        let (s1, s2) = (t / eq, t / er);
        er * c1.derivative_time(horizon, t) * c2.eval_scalar(s1) * c3.eval_scalar(s2)
            + e.powf(r - q) * c1.eval_time(horizon, t) * c2.derivative(s1) * c3.eval_scalar(s2)
            + c1.eval_time(horizon, t) * c2.eval_scalar(s1) * c3.derivative(s2)
    };
    let w2 = |t: f64| {
        let s1 = t / eq;
        eq * c1.derivative_time(horizon, t) * c2.eval_scalar(s1) + c1.eval_time(horizon, t) * c2.derivative(s1)
    };
    Ok((time_pairing(&u.times, &s, &w1), time_pairing(&u.times, &s, &w2)))
}

/// Both condition magnitudes per run; runs must be ordered by decreasing ε.
pub fn check_time_conditions(
    runs: &[FineScaleSolution],
    v: MacroFactor,
    c1: MacroFactor,
    c2: CellFactor,
    c3: CellFactor,
    exps: &ScaleExponents,
) -> Result<ConditionTable, VerifyError> {
    if runs.is_empty() || runs.windows(2).any(|w| w[1].epsilon >= w[0].epsilon) {
        return Err(VerifyError::Precondition("runs must be non-empty with strictly decreasing epsilon".into()));
    }
    let rows = runs
        .par_iter()
        .map(|u| {
            let (a, b) = time_condition_values(u, v, c1, c2, c3, exps)?;
            Ok(ConditionRow { epsilon: u.epsilon, condition1: a.abs(), condition2: b.abs() })
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let first = rows[0];
    let last = rows[rows.len() - 1];
    Ok(ConditionTable {
        test: format!("c2={} c3={}", c2.label(), c3.label()),
        condition1_non_increasing: last.condition1 <= first.condition1,
        condition2_non_increasing: last.condition2 <= first.condition2,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub epsilon: f64,
    pub measured: f64,
    pub predicted: f64,
    pub gap: f64,
}

/// Compares ε⁻¹·pairing with the corrector prediction
/// Σ_j ∫∫ ∂_j u v c₁ dx dt · ∫∫∫ χ¹_j v₂ c₂ c₃.
pub fn very_weak_corrector_probe(
    u: &FineScaleSolution,
    test: &OscillatingTest,
    exps: &ScaleExponents,
    correctors: &dyn CorrectorMoments,
    homogenized: &MacroSolution,
) -> Result<ProbeResult, VerifyError> {
    if !test.v2.is_zero_mean() {
        return Err(VerifyError::Precondition("the y1 test factor must have zero mean".into()));
    }
    if !test.v3.is_one() {
        return Err(VerifyError::Precondition("the y2 test factor must be 1 for the slow-corrector probe".into()));
    }
    let dim = u.mesh.dim();
    if correctors.dim() != dim || homogenized.mesh.dim() != dim {
        return Err(VerifyError::Precondition("corrector and solution dimensions differ".into()));
    }
    let measured = eval_multiscale_pairing(u, test, exps)? / u.epsilon;
    let horizon = u.horizon();
    let domain = domain_of(u);
    let (qw, pts) = quadrature_rule(dim);
    let mut predicted = 0.0;
    for j in 0..dim {
        let v2 = |y: &[f64]| test.v2.eval(y);
        let c2 = |s: f64| test.c2.eval_scalar(s);
        let c3 = |s: f64| test.c3.eval_scalar(s);
        let moment = correctors.slow_moment(j, &v2, &c2, &c3);
        if moment == 0.0 {
            continue;
        }
        // ∫ v dx per element of the homogenized mesh, on which ∂_j u is constant
        let v_mass: Vec<f64> = homogenized
            .mesh
            .elements()
            .iter()
            .map(|el| {
                el.measure * qw.iter().zip(&pts).map(|(wk, l)| wk * test.v.eval_space(&domain, &el.point(l, dim)[..dim])).sum::<f64>()
            })
            .collect();
        let per_slice: Vec<f64> = u
            .times
            .par_iter()
            .map(|&t| {
                let (a, b, w) = homogenized.bracket(t);
                homogenized
                    .mesh
                    .elements()
                    .iter()
                    .zip(&v_mass)
                    .map(|(el, vm)| {
                        let ga = el.gradient(&homogenized.values[a], dim)[j];
                        let gb = el.gradient(&homogenized.values[b], dim)[j];
                        ((1.0 - w) * ga + w * gb) * vm
                    })
                    .sum()
            })
            .collect();
        let c1 = |t: f64| test.c1.eval_time(horizon, t);
        predicted += moment * time_pairing(&u.times, &per_slice, &c1);
    }
    Ok(ProbeResult { epsilon: u.epsilon, measured, predicted, gap: (measured - predicted).abs() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub results: Vec<ProbeResult>,
    /// Last gap below the first and no step grows by more than a factor 2.
    pub gap_decreasing: bool,
    pub reduction: f64,
}

pub fn probe_series(results: Vec<ProbeResult>) -> ProbeSeries {
    let gaps: Vec<f64> = results.iter().map(|r| r.gap).collect();
    let decreasing = gaps.len() >= 2 && gaps[gaps.len() - 1] < gaps[0] && gaps.windows(2).all(|w| w[1] <= 2.0 * w[0]);
    let reduction = match (gaps.first(), gaps.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => f64::NAN,
    };
    ProbeSeries { results, gap_decreasing: decreasing, reduction }
}

/// One ε of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEntry {
    pub epsilon: f64,
    pub l2_error: f64,
    pub energy_norm: f64,
    pub steps: u64,
    pub nodes: u64,
    /// One pairing per configured test.
    pub pairings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub case_index: u8,
    pub window: TimeWindow,
    pub entries: Vec<StudyEntry>,
    pub test_labels: Vec<String>,
    /// Least-squares slope of log(error) against log(ε).
    pub error_slope: f64,
    pub errors_strictly_decreasing: bool,
    /// max/min of the energy norms over the ε list.
    pub energy_norm_spread: f64,
    pub conditions: Vec<ConditionTable>,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub epsilons: Vec<f64>,
    pub fine: FineScaleOptions,
    pub numerics: NumericsConfig,
    pub macro_nodes: usize,
    pub macro_tol: f64,
    pub window: Option<TimeWindow>,
    pub pairing_tests: Vec<OscillatingTest>,
    /// (v, c₁, c₂, c₃) combinations for the condition tables.
    pub condition_tests: Vec<(MacroFactor, MacroFactor, CellFactor, CellFactor)>,
}

pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Everything a study produces, including the raw runs for further probes.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub report: ConvergenceReport,
    pub effective: EffectiveResult,
    pub runs: Vec<FineScaleSolution>,
    pub homogenized: Vec<MacroSolution>,
}

/// Fine runs for every ε (budget verified for all before any solve),
/// homogenized solutions at the fine output times, errors and diagnostics.
pub fn run_convergence_study(problem: &FineScaleProblem, config: &StudyConfig) -> Result<StudyOutput, VerifyError> {
    let eps = &config.epsilons;
    if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(VerifyError::Precondition("epsilon list must lie in (0,1) and strictly decrease".into()));
    }
    for &e in eps {
        crate::finescale::plan_fine(problem, e, &config.fine)?;
    }
    let effective = compute_effective_tensor(&problem.coefficient, &problem.exponents, &config.numerics)?;
    let b = effective.tensor.b;
    let window = config.window.unwrap_or_else(|| TimeWindow::default_tail(problem.horizon));
    let runs: Vec<FineScaleSolution> = eps.par_iter().map(|&e| solve_fine(problem, e, &config.fine)).collect::<Result<_, _>>()?;
    let source = |x: &[f64], t: f64| (problem.source)(x, t);
    let homogenized: Vec<MacroSolution> = runs
        .par_iter()
        .map(|run| {
            let mesh = MacroMesh::new(problem.domain.clone(), config.macro_nodes, run.times.clone())?;
            solve_homogenized(&b, &source, &mesh, config.macro_tol)
        })
        .collect::<Result<_, MacroError>>()?;
    let entries: Vec<StudyEntry> = runs
        .par_iter()
        .zip(&homogenized)
        .map(|(run, hom)| {
            let pairings = config
                .pairing_tests
                .iter()
                .map(|t| eval_multiscale_pairing(run, t, &problem.exponents))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(StudyEntry {
                epsilon: run.epsilon,
                l2_error: l2_error(run, hom, window)?,
                energy_norm: energy_norm(run)?,
                steps: run.plan.steps,
                nodes: run.plan.nodes,
                pairings,
            })
        })
        .collect::<Result<_, VerifyError>>()?;
    let conditions = config
        .condition_tests
        .iter()
        .map(|&(v, c1, c2, c3)| check_time_conditions(&runs, v, c1, c2, c3, &problem.exponents))
        .collect::<Result<Vec<_>, _>>()?;
    let errors: Vec<f64> = entries.iter().map(|e| e.l2_error).collect();
    let norms: Vec<f64> = entries.iter().map(|e| e.energy_norm).collect();
    let (nmin, nmax) = norms.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let report = ConvergenceReport {
        epsilons: eps.clone(),
        b: b.to_rows(),
        case_index: effective.tensor.case_index,
        window,
        error_slope: fitted_slope(eps, &errors),
        errors_strictly_decreasing: errors.windows(2).all(|w| w[1] < w[0]),
        energy_norm_spread: if nmin > 0.0 { nmax / nmin } else { f64::INFINITY },
        test_labels: config.pairing_tests.iter().map(|t| t.label()).collect(),
        entries,
        conditions,
    };
    Ok(StudyOutput { report, effective, runs, homogenized })
}

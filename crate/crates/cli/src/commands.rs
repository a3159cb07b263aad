//! One function per subcommand; each writes its artifacts into the output directory.

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::output::{loglog_svg, num, OutDir, Series};
use homog_core::coeffs::{validate_field, CoefficientField, FieldReport};
use homog_core::effective::{compute_effective_tensor, EffectiveResult, SlowSampleLattice};
use homog_core::finescale::{plan_fine, solve_fine, FinePlan, FineScaleSolution};
use homog_core::macroscale::{solve_homogenized, MacroMesh, MacroSolution};
use homog_core::regime::{classify_regime, RegimeDescriptor};
use homog_core::verify::{probe_series, run_convergence_study, very_weak_corrector_probe, ProbeSeries, StudyConfig, StudyOutput};
use serde::Serialize;

/// Samples per axis and probe directions of the pre-flight field check.
const FIELD_SAMPLES: usize = 8;
const FIELD_PROBES: usize = 16;

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub out: &'a mut OutDir,
    pub dump_correctors: bool,
}

#[derive(Serialize)]
struct ExponentsOut {
    p: f64,
    q: f64,
    r: f64,
    exact: bool,
}

#[derive(Serialize)]
struct ClassifyOut {
    case: u8,
    exponents: ExponentsOut,
    boundary_tolerance: f64,
    recipe: RegimeDescriptor,
}

fn exponents_out(config: &RunConfig) -> Result<ExponentsOut, Failure> {
    let e = config.exponents.to_exponents()?;
    Ok(ExponentsOut { p: e.p, q: e.q, r: e.r, exact: e.is_exact() })
}

pub fn classify(ctx: &mut Context) -> Result<(), Failure> {
    let exps = ctx.config.exponents.to_exponents()?;
    let tol = ctx.config.numerics.boundary_tolerance;
    let recipe = classify_regime(&exps, tol)?;
    let out = ClassifyOut { case: recipe.case_index, exponents: exponents_out(ctx.config)?, boundary_tolerance: tol, recipe };
    ctx.out.json("case.json", &out)
}

fn checked_field(config: &RunConfig) -> Result<(CoefficientField, FieldReport), Failure> {
    let field = config.field()?;
    let report = validate_field(&field, FIELD_SAMPLES, FIELD_PROBES)?;
    if !report.passed {
        let code = if report.worst_ratio < report.declared_coercivity { "non_coercive" } else { "invalid_coefficient" };
        return Err(Failure::validation(code, report.failures.join("; ")));
    }
    Ok((field, report))
}

#[derive(Serialize)]
struct EffectiveOut<'a> {
    case: u8,
    b: Vec<Vec<f64>>,
    symmetric_eigenvalues: Vec<f64>,
    exponents: ExponentsOut,
    recipe: &'a RegimeDescriptor,
    provenance: &'a homog_core::effective::Provenance,
    field_check: &'a FieldReport,
    intermediate_min_coercivity: f64,
}

fn effective_tensor(ctx: &mut Context) -> Result<EffectiveResult, Failure> {
    let (field, report) = checked_field(ctx.config)?;
    let exps = ctx.config.exponents.to_exponents()?;
    let mut numerics = ctx.config.numerics;
    numerics.keep_inner_correctors |= ctx.dump_correctors;
    let result = compute_effective_tensor(&field, &exps, &numerics)?;
    let out = EffectiveOut {
        case: result.tensor.case_index,
        b: result.tensor.b.to_rows(),
        symmetric_eigenvalues: result.tensor.b.symmetric_part().sym_eigenvalues(),
        exponents: exponents_out(ctx.config)?,
        recipe: &result.regime,
        provenance: &result.tensor.provenance,
        field_check: &report,
        intermediate_min_coercivity: result.intermediate.min_coercivity(),
    };
    ctx.out.json("effective.json", &out)?;
    write_intermediate(ctx.out, &result)?;
    if ctx.dump_correctors {
        ctx.out.json("correctors.json", &result.correctors)?;
    }
    Ok(result)
}

/// ã per y₁ element and slow sample.
fn write_intermediate(out: &mut OutDir, result: &EffectiveResult) -> Result<(), Failure> {
    let a = &result.intermediate;
    let dim = a.dim;
    let mut header = vec!["element", "s1", "s2"];
    let names = ["a11", "a12", "a21", "a22"];
    if dim == 1 {
        header.push("a11");
    } else {
        header.extend_from_slice(&names);
    }
    let s_label = |present: bool, count: usize, k: usize| if present { num(SlowSampleLattice::s_point(count, k)) } else { String::new() };
    let mut rows = Vec::with_capacity(a.values.len());
    for i2 in 0..a.s2_samples {
        for i1 in 0..a.s1_samples {
            for e in 0..a.elements() {
                let t = a.get(e, i1, i2);
                let mut row = vec![e.to_string(), s_label(a.axes.s1, a.s1_samples, i1), s_label(a.axes.s2, a.s2_samples, i2)];
                for i in 0..dim {
                    for j in 0..dim {
                        row.push(num(t.get(i, j)));
                    }
                }
                rows.push(row);
            }
        }
    }
    out.csv("intermediate.csv", &header, rows)
}

pub fn effective(ctx: &mut Context) -> Result<(), Failure> {
    effective_tensor(ctx).map(|_| ())
}

fn macro_times(config: &RunConfig) -> Vec<f64> {
    let n = config.macro_mesh.time_samples;
    let t = config.problem.horizon;
    if n == 1 {
        return vec![t];
    }
    (0..n).map(|k| t * k as f64 / (n - 1) as f64).collect()
}

fn solution_rows(mesh: &homog_core::mesh::SimplexMesh, times: &[f64], values: &[Vec<f64>], stride: usize) -> Vec<Vec<String>> {
    let dim = mesh.dim();
    let last = times.len() - 1;
    let mut rows = Vec::new();
    for (k, (t, slice)) in times.iter().zip(values).enumerate() {
        if k % stride != 0 && k != last {
            continue;
        }
        for (node, v) in slice.iter().enumerate() {
            let x = mesh.node_coords(node);
            let mut row = vec![num(*t), node.to_string()];
            row.extend(x[..dim].iter().map(|c| num(*c)));
            row.push(num(*v));
            rows.push(row);
        }
    }
    rows
}

fn solution_header(dim: usize) -> Vec<&'static str> {
    let mut h = vec!["t", "node", "x0"];
    if dim == 2 {
        h.push("x1");
    }
    h.push("value");
    h
}

#[derive(Serialize)]
struct MacroOut {
    case: u8,
    b: Vec<Vec<f64>>,
    nodes_per_axis: usize,
    times: Vec<f64>,
    max_residual: f64,
    max_value: f64,
}

pub fn macroscale(ctx: &mut Context) -> Result<(), Failure> {
    let problem = ctx.config.fine_problem()?;
    let result = effective_tensor(ctx)?;
    let mesh = MacroMesh::new(ctx.config.domain(), ctx.config.macro_mesh.nodes, macro_times(ctx.config))?;
    let source = |x: &[f64], t: f64| (problem.source)(x, t);
    let sol: MacroSolution = solve_homogenized(&result.tensor.b, &source, &mesh, ctx.config.macro_mesh.tol)?;
    let rows = solution_rows(&sol.mesh, &sol.times, &sol.values, 1);
    ctx.out.csv("macro.csv", &solution_header(sol.mesh.dim()), rows)?;
    let out = MacroOut {
        case: result.tensor.case_index,
        b: result.tensor.b.to_rows(),
        nodes_per_axis: mesh.nodes_per_axis,
        times: sol.times.clone(),
        max_residual: sol.max_residual(),
        max_value: sol.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())),
    };
    ctx.out.json("macro.json", &out)
}

#[derive(Serialize)]
struct FineMeta<'a> {
    epsilon: f64,
    exponents: [f64; 3],
    plan: &'a FinePlan,
    resolution_factor: f64,
    nodes_per_axis: usize,
    spacing: f64,
    horizon: f64,
    slices: usize,
    csv_stride: usize,
    max_residual: f64,
    warnings: &'a [String],
    energy_norm: f64,
}

#[derive(Serialize)]
struct PlanTable<'a> {
    plans: &'a [FinePlan],
}

fn fine_plans(ctx: &Context, problem: &homog_core::coeffs::FineScaleProblem) -> Result<Vec<FinePlan>, Failure> {
    let eps = &ctx.config.fine.epsilons;
    if eps.is_empty() {
        return Err(Failure::validation("invalid_config", "fine.epsilons must not be empty"));
    }
    Ok(eps.iter().map(|&e| plan_fine(problem, e, &ctx.config.fine.options)).collect::<Result<_, _>>()?)
}

fn write_fine_run(out: &mut OutDir, index: usize, run: &FineScaleSolution, stride: usize) -> Result<(), Failure> {
    let rows = solution_rows(&run.mesh, &run.times, &run.values, stride);
    out.csv(&format!("fine_{index}.csv"), &solution_header(run.mesh.dim()), rows)?;
    let meta = FineMeta {
        epsilon: run.epsilon,
        exponents: run.exponents,
        plan: &run.plan,
        resolution_factor: run.resolution_factor,
        nodes_per_axis: run.mesh.nodes_per_axis(),
        spacing: run.mesh.spacing(),
        horizon: run.horizon(),
        slices: run.times.len(),
        csv_stride: stride,
        max_residual: run.max_residual,
        warnings: &run.warnings,
        energy_norm: homog_core::finescale::energy_norm(run)?,
    };
    out.json(&format!("fine_{index}.json"), &meta)
}

pub fn fine(ctx: &mut Context) -> Result<(), Failure> {
    checked_field(ctx.config)?;
    let problem = ctx.config.fine_problem()?;
    // every plan is checked before any run starts
    let plans = fine_plans(ctx, &problem)?;
    ctx.out.json("fine_plans.json", &PlanTable { plans: &plans })?;
    let stride = ctx.config.fine.csv_stride.max(1);
    for (i, &e) in ctx.config.fine.epsilons.iter().enumerate() {
        let run = solve_fine(&problem, e, &ctx.config.fine.options)?;
        write_fine_run(ctx.out, i, &run, stride)?;
    }
    Ok(())
}

fn study_config(config: &RunConfig) -> StudyConfig {
    StudyConfig {
        epsilons: config.fine.epsilons.clone(),
        fine: config.fine.options,
        numerics: config.numerics,
        macro_nodes: config.macro_mesh.nodes,
        macro_tol: config.macro_mesh.tol,
        window: config.fine.window,
        pairing_tests: config.diagnostics.pairing_tests.clone(),
        condition_tests: config.diagnostics.condition_tests.iter().map(|c| (c.v, c.c1, c.c2, c.c3)).collect(),
    }
}

fn run_study(ctx: &mut Context) -> Result<StudyOutput, Failure> {
    checked_field(ctx.config)?;
    let problem = ctx.config.fine_problem()?;
    fine_plans(ctx, &problem)?;
    let mut sc = study_config(ctx.config);
    sc.numerics.keep_inner_correctors |= ctx.dump_correctors;
    let out = run_convergence_study(&problem, &sc)?;
    if ctx.dump_correctors {
        ctx.out.json("correctors.json", &out.effective.correctors)?;
    }
    Ok(out)
}

fn write_report(out: &mut OutDir, study: &StudyOutput) -> Result<(), Failure> {
    let rep = &study.report;
    out.json("report.json", rep)?;
    let mut header: Vec<String> = ["epsilon", "l2_error", "energy_norm", "steps", "nodes"].iter().map(|s| s.to_string()).collect();
    header.extend((0..rep.test_labels.len()).map(|k| format!("pairing_{k}")));
    let rows = rep.entries.iter().map(|e| {
        let mut row = vec![num(e.epsilon), num(e.l2_error), num(e.energy_norm), e.steps.to_string(), e.nodes.to_string()];
        row.extend(e.pairings.iter().map(|p| num(*p)));
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("study.csv", &header_refs, rows)?;
    let series = vec![Series { label: "L2 error".into(), points: rep.entries.iter().map(|e| (e.epsilon, e.l2_error)).collect() }];
    out.text("errors.svg", &loglog_svg(&format!("case {} tail-window error", rep.case_index), "epsilon", "L2 error", &series))
}

pub fn study(ctx: &mut Context) -> Result<(), Failure> {
    let study = run_study(ctx)?;
    write_report(ctx.out, &study)
}

#[derive(Serialize)]
struct DiagnoseOut<'a> {
    case: u8,
    b: &'a [Vec<f64>],
    epsilons: &'a [f64],
    pairing_tests: &'a [String],
    conditions: &'a [homog_core::verify::ConditionTable],
    probes: Vec<ProbeOut>,
}

#[derive(Serialize)]
struct ProbeOut {
    test: String,
    series: ProbeSeries,
}

pub fn diagnose(ctx: &mut Context) -> Result<(), Failure> {
    let study = run_study(ctx)?;
    let exps = ctx.config.exponents.to_exponents()?;
    let mut probes = Vec::new();
    for test in &ctx.config.diagnostics.probes {
        let results = study
            .runs
            .iter()
            .zip(&study.homogenized)
            .map(|(run, hom)| very_weak_corrector_probe(run, test, &exps, &study.effective.correctors, hom))
            .collect::<Result<Vec<_>, _>>()?;
        probes.push(ProbeOut { test: test.label(), series: probe_series(results) });
    }
    let rep = &study.report;
    let cond_rows = rep.conditions.iter().flat_map(|t| {
        t.rows.iter().map(move |r| vec![t.test.clone(), num(r.epsilon), num(r.condition1), num(r.condition2)])
    });
    ctx.out.csv("conditions.csv", &["test", "epsilon", "condition1", "condition2"], cond_rows)?;
    let pair_rows = rep.entries.iter().flat_map(|e| {
        e.pairings.iter().enumerate().map(move |(k, p)| vec![rep.test_labels[k].clone(), num(e.epsilon), num(*p)])
    });
    ctx.out.csv("pairings.csv", &["test", "epsilon", "pairing"], pair_rows)?;
    let probe_rows = probes.iter().flat_map(|p| {
        p.series.results.iter().map(move |r| vec![p.test.clone(), num(r.epsilon), num(r.measured), num(r.predicted), num(r.gap)])
    });
    ctx.out.csv("probes.csv", &["test", "epsilon", "measured", "predicted", "gap"], probe_rows)?;
    let mut series = Vec::new();
    for t in &rep.conditions {
        series.push(Series { label: format!("1: {}", t.test), points: t.rows.iter().map(|r| (r.epsilon, r.condition1)).collect() });
        series.push(Series { label: format!("2: {}", t.test), points: t.rows.iter().map(|r| (r.epsilon, r.condition2)).collect() });
    }
    for p in &probes {
        series.push(Series { label: format!("gap: {}", p.test), points: p.series.results.iter().map(|r| (r.epsilon, r.gap)).collect() });
    }
    ctx.out.text("diagnose.svg", &loglog_svg("condition and probe decay", "epsilon", "magnitude", &series))?;
    let out = DiagnoseOut {
        case: rep.case_index,
        b: &rep.b,
        epsilons: &rep.epsilons,
        pairing_tests: &rep.test_labels,
        conditions: &rep.conditions,
        probes,
    };
    ctx.out.json("diagnose.json", &out)?;
    write_report(ctx.out, &study)
}

//! Resolved solver for ε^p ∂_t u − ∇·(a(x/ε, x/ε², t/ε^q, t/ε^r)∇u) = f
//! with homogeneous Dirichlet data, used as the reference in convergence
//! studies.

use crate::coeffs::FineScaleProblem;
use crate::linalg::{self, SolveError, SolverOptions};
use crate::macroscale::MacroSolution;
use crate::mesh::{assemble_source_load, assemble_stiffness, quadrature_rule, SimplexMesh};
use crate::tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FineError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("invalid fine-scale options: {0}")]
    Options(String),
    #[error(
        "resolving epsilon={epsilon} needs {steps} steps on {nodes} nodes ({bytes} bytes), over budget; smallest admissible epsilon is {minimal_epsilon:.6}"
    )]
    OverBudget { epsilon: f64, steps: u64, nodes: u64, bytes: u64, minimal_epsilon: f64 },
    #[error("coefficient evaluation failed: {0}")]
    Coefficient(String),
    #[error("coefficient not coercive at x={x:?}, t={t}")]
    NonCoercive { x: Vec<f64>, t: f64 },
    #[error("linear solve failed at step {step}: {source}")]
    Solve {
        step: usize,
        #[source]
        source: SolveError,
    },
    #[error("error window contains fewer than two time slices")]
    EmptyWindow,
    #[error("solutions are on different domains")]
    DomainMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineScaleOptions {
    /// h ≤ ε²/factor and Δt ≤ ε^r/factor; at least 8.
    pub resolution_factor: f64,
    /// Upper bound on implicit Euler steps per run.
    pub step_budget: u64,
    /// Upper bound on stored slice memory in bytes.
    pub memory_cap: u64,
    /// Relative residual of every step solve.
    pub tol: f64,
}

impl Default for FineScaleOptions {
    fn default() -> Self {
        FineScaleOptions { resolution_factor: 8.0, step_budget: 10_000_000, memory_cap: 2 << 30, tol: 1e-11 }
    }
}

impl FineScaleOptions {
    pub fn validate(&self) -> Result<(), FineError> {
        if !(self.resolution_factor >= 8.0 && self.resolution_factor.is_finite()) {
            return Err(FineError::Options("resolution_factor must be at least 8".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(FineError::Options("tol must be positive".into()));
        }
        if self.step_budget == 0 || self.memory_cap == 0 {
            return Err(FineError::Options("step_budget and memory_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Grid sizes for one ε, computed before any work is done.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinePlan {
    pub epsilon: f64,
    pub dim: usize,
    /// Cells per axis.
    pub cells: u64,
    pub steps: u64,
    pub nodes: u64,
    pub h: f64,
    pub dt: f64,
    pub bytes: u64,
}

fn ceil_count(x: f64) -> u64 {
    (x * (1.0 - 1e-12)).ceil().max(1.0) as u64
}

fn plan_raw(problem: &FineScaleProblem, epsilon: f64, opts: &FineScaleOptions) -> FinePlan {
    let dim = problem.domain.dim();
    let longest = problem.domain.lengths.iter().copied().fold(0.0, f64::max);
    let rf = opts.resolution_factor;
    let cells = ceil_count(longest * rf / (epsilon * epsilon)).max(2);
    let steps = ceil_count(problem.horizon * rf / epsilon.powf(problem.exponents.r));
    let nodes = (cells + 1).saturating_pow(dim as u32);
    let bytes = nodes.saturating_mul(steps.saturating_add(1)).saturating_mul(8);
    FinePlan {
        epsilon,
        dim,
        cells,
        steps,
        nodes,
        h: longest / cells as f64,
        dt: problem.horizon / steps as f64,
        bytes,
    }
}

fn admissible(p: &FinePlan, opts: &FineScaleOptions) -> bool {
    p.steps <= opts.step_budget && p.bytes <= opts.memory_cap
}

/// Checks the budget for `epsilon`; refusal carries the smallest admissible ε.
pub fn plan_fine(problem: &FineScaleProblem, epsilon: f64, opts: &FineScaleOptions) -> Result<FinePlan, FineError> {
    opts.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(FineError::Epsilon(epsilon));
    }
    let plan = plan_raw(problem, epsilon, opts);
    if admissible(&plan, opts) {
        return Ok(plan);
    }
    let (mut lo, mut hi) = (epsilon, 1.0 - 1e-12);
    if !admissible(&plan_raw(problem, hi, opts), opts) {
        lo = hi;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if admissible(&plan_raw(problem, mid, opts), opts) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo = hi;
    }
    Err(FineError::OverBudget { epsilon, steps: plan.steps, nodes: plan.nodes, bytes: plan.bytes, minimal_epsilon: lo })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineScaleSolution {
    pub epsilon: f64,
    pub exponents: [f64; 3],
    pub plan: FinePlan,
    pub resolution_factor: f64,
    pub mesh: SimplexMesh,
    /// t₀ = 0, …, t_M = T.
    pub times: Vec<f64>,
    /// Nodal values per time slice.
    pub values: Vec<Vec<f64>>,
    pub max_residual: f64,
    pub warnings: Vec<String>,
}

impl FineScaleSolution {
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("at least one slice")
    }

    /// Interpolant of slice `k` at `x`.
    pub fn eval(&self, k: usize, x: &[f64]) -> f64 {
        self.mesh.eval_p1(&self.values[k], x)
    }

    /// Solution with every value replaced by `f(x, t)` on the same grid.
    pub fn map_nodal(&self, f: impl Fn(&[f64], f64) -> f64) -> FineScaleSolution {
        let mut out = self.clone();
        for (k, slice) in out.values.iter_mut().enumerate() {
            let t = self.times[k];
            for (i, v) in slice.iter_mut().enumerate() {
                *v = f(&self.mesh.node_coords(i)[..self.mesh.dim()], t);
            }
        }
        out
    }
}

const PARALLEL_ELEMENTS: usize = 2048;

fn fine_tensors(problem: &FineScaleProblem, mesh: &SimplexMesh, epsilon: f64, t: f64) -> Result<Vec<Tensor>, FineError> {
    let dim = mesh.dim();
    let e = &problem.exponents;
    let (s1, s2) = (t / epsilon.powf(e.q), t / epsilon.powf(e.r));
    let eval = |el: &crate::mesh::Element| {
        let x = &el.centroid[..dim];
        let mut y1 = [0.0; 2];
        let mut y2 = [0.0; 2];
        for d in 0..dim {
            y1[d] = x[d] / epsilon;
            y2[d] = x[d] / (epsilon * epsilon);
        }
        let a = problem
            .coefficient
            .eval(&y1[..dim], &y2[..dim], s1, s2)
            .map_err(|err| FineError::Coefficient(err.to_string()))?;
        if !(a.sym_min_eigenvalue() > 0.0) {
            return Err(FineError::NonCoercive { x: x.to_vec(), t });
        }
        Ok(a)
    };
    if mesh.elements().len() >= PARALLEL_ELEMENTS {
        mesh.elements().par_iter().map(eval).collect()
    } else {
        mesh.elements().iter().map(eval).collect()
    }
}

/// Implicit Euler with lumped ε^p-scaled mass; every slice is stored.
pub fn solve_fine(problem: &FineScaleProblem, epsilon: f64, opts: &FineScaleOptions) -> Result<FineScaleSolution, FineError> {
    let plan = plan_fine(problem, epsilon, opts)?;
    let mut warnings = Vec::new();
    if plan.dim == 2 {
        warnings.push(format!("two-dimensional fine-scale run with {} nodes and {} steps", plan.nodes, plan.steps));
    }
    let mesh = SimplexMesh::boxed(&problem.domain, plan.cells as usize + 1);
    let n = mesh.num_nodes();
    let steps = plan.steps as usize;
    let dt = plan.dt;
    let pattern = mesh.pattern();
    let mass = mesh.lumped_mass();
    let scale = epsilon.powf(problem.exponents.p) / dt;
    let boundary: Vec<usize> = (0..n).filter(|&i| mesh.is_boundary(i)).collect();
    let dim = mesh.dim();
    let solver = SolverOptions { rel_tol: opts.tol, max_iter: None };

    let mut u0: Vec<f64> = (0..n).map(|i| (problem.initial)(&mesh.node_coords(i)[..dim])).collect();
    for &i in &boundary {
        u0[i] = 0.0;
    }
    let (dep1, dep2) = problem.coefficient.time_dependence();
    let static_coef = !dep1 && !dep2;

    let build = |t: f64| -> Result<linalg::CsrMatrix, FineError> {
        let tensors = fine_tensors(problem, &mesh, epsilon, t)?;
        let mut k = assemble_stiffness(&mesh, &pattern, &tensors);
        k.add_diagonal(&mass, scale);
        for &i in &boundary {
            k.pin(i);
        }
        Ok(k)
    };
    let fixed = if static_coef { Some(build(0.0)?) } else { None };

    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(u0);
    let mut max_residual = 0.0f64;
    for k in 1..=steps {
        let t = k as f64 * dt;
        let owned;
        let system = match &fixed {
            Some(m) => m,
            None => {
                owned = build(t)?;
                &owned
            }
        };
        let prev = values.last().expect("initial slice");
        let mut rhs = assemble_source_load(&mesh, |x| (problem.source)(x, t));
        for i in 0..n {
            rhs[i] += scale * mass[i] * prev[i];
        }
        for &i in &boundary {
            rhs[i] = 0.0;
        }
        let mut u = prev.clone();
        let stats = linalg::solve(system, &rhs, &mut u, &solver).map_err(|source| FineError::Solve { step: k, source })?;
        max_residual = max_residual.max(stats.residual);
        times.push(t);
        values.push(u);
    }
    Ok(FineScaleSolution {
        epsilon,
        exponents: [problem.exponents.p, problem.exponents.q, problem.exponents.r],
        plan,
        resolution_factor: opts.resolution_factor,
        mesh,
        times,
        values,
        max_residual,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeWindow {
    Full,
    /// t ≥ start.
    Tail { start: f64 },
}

impl TimeWindow {
    pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;

    pub fn default_tail(horizon: f64) -> Self {
        TimeWindow::Tail { start: Self::DEFAULT_TAIL_FRACTION * horizon }
    }

    fn start(&self) -> f64 {
        match self {
            TimeWindow::Full => f64::NEG_INFINITY,
            TimeWindow::Tail { start } => *start,
        }
    }
}

/// Trapezoid-in-time integral of per-slice values over the window slices.
fn time_integral(times: &[f64], window: TimeWindow, per_slice: impl Fn(usize) -> f64 + Sync) -> Result<f64, FineError> {
    let t0 = window.start();
    let idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= t0 - 1e-12).collect();
    if idx.len() < 2 {
        return Err(FineError::EmptyWindow);
    }
    let vals: Vec<f64> = idx.par_iter().map(|&k| per_slice(k)).collect();
    Ok(idx
        .windows(2)
        .zip(vals.windows(2))
        .map(|(k, v)| 0.5 * (times[k[1]] - times[k[0]]) * (v[0] + v[1]))
        .sum())
}

/// ‖u_ε − u‖ in L²(Ω × window), with u interpolated onto the fine grid.
pub fn l2_error(fine: &FineScaleSolution, homogenized: &MacroSolution, window: TimeWindow) -> Result<f64, FineError> {
    if fine.mesh.dim() != homogenized.mesh.dim() {
        return Err(FineError::DomainMismatch);
    }
    let dim = fine.mesh.dim();
    let (w, pts) = quadrature_rule(dim);
    let sq = time_integral(&fine.times, window, |k| {
        let t = fine.times[k];
        let u = &fine.values[k];
        fine.mesh
            .elements()
            .iter()
            .map(|el| {
                let s: f64 = w
                    .iter()
                    .zip(&pts)
                    .map(|(wk, l)| {
                        let x = el.point(l, dim);
                        let uh: f64 = (0..=dim).map(|a| l[a] * u[el.nodes[a]]).sum();
                        wk * (uh - homogenized.eval(&x[..dim], t)).powi(2)
                    })
                    .sum();
                s * el.measure
            })
            .sum()
    })?;
    Ok(sq.max(0.0).sqrt())
}

/// Discrete ‖u_ε‖ in L²(0,T; H¹(Ω)) (full gradient norm plus L² part).
pub fn energy_norm(fine: &FineScaleSolution) -> Result<f64, FineError> {
    let dim = fine.mesh.dim();
    let mass = fine.mesh.lumped_mass();
    let sq = time_integral(&fine.times, TimeWindow::Full, |k| {
        let u = &fine.values[k];
        let grad: f64 = fine
            .mesh
            .elements()
            .iter()
            .map(|el| {
                let g = el.gradient(u, dim);
                el.measure * (0..dim).map(|d| g[d] * g[d]).sum::<f64>()
            })
            .sum();
        grad + fine.mesh.lumped_l2(u, &mass).powi(2)
    })?;
    Ok(sq.sqrt())
}

/// Spatial L² norm of every slice (lumped).
pub fn slice_norms(fine: &FineScaleSolution) -> Vec<f64> {
    let mass = fine.mesh.lumped_mass();
    fine.values.iter().map(|u| fine.mesh.lumped_l2(u, &mass)).collect()
}

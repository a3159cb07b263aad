//! Unit-cell problems on the periodic torus Y = (0,1)^N.
//!
//! Elliptic: −∇·(A(y)(e_j + ∇w)) = 0, w periodic with zero mean.
//! Time-periodic parabolic: ∂_s w − ∇·(A(y,s)(e_j + ∇w)) = 0, w periodic in
//! y and s, zero mean in y for every s.
//!
//! Both use P1 elements on the uniform periodic mesh with one coefficient
//! sample per element (at the centroid). The parabolic problem is marched
//! with implicit Euler over one period and the period map is iterated to a
//! fixed point.

use crate::coeffs::{CoeffError, CoefficientField, LayerVariable};
use crate::linalg::{self, CsrMatrix, SolveError, SolverOptions};
use crate::mesh::{assemble_flux_load, assemble_stiffness, mean_flux, SimplexMesh};
use crate::tensor::{Tensor, MAX_DIM};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("invalid cell grid: {0}")]
    Grid(String),
    #[error("invalid cell options: {0}")]
    Options(String),
    #[error(transparent)]
    Coefficient(#[from] CoeffError),
    #[error("coefficient is not coercive at y={y:?}, s={s} (min eigenvalue of symmetric part {min_eigenvalue:.3e})")]
    NonCoercive { y: Vec<f64>, s: f64, min_eigenvalue: f64 },
    #[error("coefficient dimension {coefficient} does not match grid dimension {grid}")]
    DimensionMismatch { coefficient: usize, grid: usize },
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("discontinuity at {position} on axis {axis} is not aligned with the {nodes}-node cell grid")]
    Misaligned { axis: usize, position: f64, nodes: usize },
    #[error("period map stagnated after {sweeps} sweeps (defect {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    Stagnation { sweeps: usize, history: Vec<f64> },
    #[error("period map did not reach the defect target in {sweeps} sweeps (defect {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    NotConverged { sweeps: usize, history: Vec<f64> },
    #[error("correctors must cover each direction 0..{dim} exactly once with matching slices")]
    IncompleteDirections { dim: usize },
}

/// Discretization of Y (and of the cell period S for parabolic problems).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGrid {
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub time_steps: usize,
}

impl CellGrid {
    pub fn new(dim: usize, nodes_per_axis: usize, time_steps: usize) -> Result<Self, CellError> {
        let g = CellGrid { dim, nodes_per_axis, time_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CellError> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(CellError::Grid(format!("dimension {} not in 1..=2", self.dim)));
        }
        if self.nodes_per_axis < 4 {
            return Err(CellGrid::small("nodes_per_axis", self.nodes_per_axis));
        }
        if self.time_steps < 4 {
            return Err(CellGrid::small("time_steps", self.time_steps));
        }
        Ok(())
    }

    fn small(name: &str, v: usize) -> CellError {
        CellError::Grid(format!("{name} must be at least 4, got {v}"))
    }

    pub fn mesh(&self) -> SimplexMesh {
        SimplexMesh::periodic_unit(self.dim, self.nodes_per_axis)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    /// Slice times k/M, k = 1..=M, of the parabolic march.
    pub fn slice_times(&self) -> Vec<f64> {
        (1..=self.time_steps).map(|k| k as f64 / self.time_steps as f64).collect()
    }

    /// Checks that every discontinuity plane falls on a grid line.
    pub fn check_alignment(&self, breaks: &[(usize, Vec<f64>)]) -> Result<(), CellError> {
        let n = self.nodes_per_axis as f64;
        for (axis, positions) in breaks {
            for &b in positions {
                let k = b * n;
                if (k - k.round()).abs() > 1e-9 * n.max(1.0) {
                    return Err(CellError::Misaligned { axis: *axis, position: b, nodes: self.nodes_per_axis });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellOptions {
    /// Relative residual target of every linear solve.
    pub linear_tol: f64,
    /// Relative period-map defect target.
    pub periodic_tol: f64,
    pub max_sweeps: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions { linear_tol: 1e-12, periodic_tol: 1e-9, max_sweeps: 500 }
    }
}

impl CellOptions {
    pub fn validate(&self) -> Result<(), CellError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.linear_tol) || !ok(self.periodic_tol) {
            return Err(CellError::Options("tolerances must be positive and finite".into()));
        }
        if self.max_sweeps == 0 {
            return Err(CellError::Options("max_sweeps must be positive".into()));
        }
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions { rel_tol: self.linear_tol, max_iter: None }
    }
}

/// Matrix field on Y × S as seen by a cell solver. `s` is ignored by
/// elliptic solves.
pub trait CellCoefficient: Sync {
    fn dim(&self) -> usize;

    fn tensor(&self, y: &[f64], s: f64) -> Result<Tensor, CoeffError>;

    fn is_time_dependent(&self) -> bool {
        true
    }

    /// Spatial discontinuity planes as (axis, positions in [0,1)).
    fn layer_breaks(&self) -> Vec<(usize, Vec<f64>)> {
        Vec::new()
    }

    /// One tensor per mesh element at time `s`.
    fn element_tensors(&self, mesh: &SimplexMesh, s: f64) -> Result<Vec<Tensor>, CellError> {
        let dim = mesh.dim();
        mesh.elements()
            .iter()
            .map(|el| {
                let y = &el.centroid[..dim];
                let a = self.tensor(y, s)?;
                let lam = a.sym_min_eigenvalue();
                if !(lam > 0.0) {
                    return Err(CellError::NonCoercive { y: y.to_vec(), s, min_eigenvalue: lam });
                }
                Ok(a)
            })
            .collect()
    }
}

/// Closure-backed coefficient.
pub struct FnCoefficient<F> {
    dim: usize,
    f: F,
    time_dependent: bool,
    breaks: Vec<(usize, Vec<f64>)>,
}

impl<F: Fn(&[f64], f64) -> Tensor + Sync> FnCoefficient<F> {
    pub fn new(dim: usize, time_dependent: bool, f: F) -> Self {
        FnCoefficient { dim, f, time_dependent, breaks: Vec::new() }
    }

    pub fn with_breaks(mut self, breaks: Vec<(usize, Vec<f64>)>) -> Self {
        self.breaks = breaks;
        self
    }
}

/// Time-independent closure coefficient A(y).
pub fn elliptic_coefficient<G: Fn(&[f64]) -> Tensor + Sync>(dim: usize, g: G) -> FnCoefficient<impl Fn(&[f64], f64) -> Tensor + Sync> {
    FnCoefficient::new(dim, false, move |y: &[f64], _s: f64| g(y))
}

impl<F: Fn(&[f64], f64) -> Tensor + Sync> CellCoefficient for FnCoefficient<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn tensor(&self, y: &[f64], s: f64) -> Result<Tensor, CoeffError> {
        let t = (self.f)(y, s);
        if !t.is_finite() {
            return Err(CoeffError::NonFiniteValue { y1: y.to_vec(), y2: y.to_vec(), s1: s, s2: s });
        }
        Ok(t)
    }

    fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    fn layer_breaks(&self) -> Vec<(usize, Vec<f64>)> {
        self.breaks.clone()
    }
}

/// Which argument of a [`CoefficientField`] a cell problem runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellAxis {
    /// y₂ varies on the cell with y₁ frozen.
    Fast,
    /// y₁ varies on the cell with y₂ frozen.
    Slow,
}

/// Which time argument of the field the cell time variable drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellTime {
    Frozen,
    S1,
    S2,
}

/// A [`CoefficientField`] restricted to one spatial argument with the
/// other arguments frozen.
#[derive(Debug, Clone)]
pub struct FrozenField<'a> {
    pub field: &'a CoefficientField,
    pub axis: CellAxis,
    pub time: CellTime,
    /// The frozen spatial argument.
    pub other: [f64; MAX_DIM],
    pub s1: f64,
    pub s2: f64,
}

impl CellCoefficient for FrozenField<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn tensor(&self, y: &[f64], s: f64) -> Result<Tensor, CoeffError> {
        let dim = self.field.dim();
        let other = &self.other[..dim];
        let (s1, s2) = match self.time {
            CellTime::Frozen => (self.s1, self.s2),
            CellTime::S1 => (s, self.s2),
            CellTime::S2 => (self.s1, s),
        };
        match self.axis {
            CellAxis::Fast => self.field.eval(other, y, s1, s2),
            CellAxis::Slow => self.field.eval(y, other, s1, s2),
        }
    }

    fn is_time_dependent(&self) -> bool {
        let (d1, d2) = self.field.time_dependence();
        match self.time {
            CellTime::Frozen => false,
            CellTime::S1 => d1,
            CellTime::S2 => d2,
        }
    }

    fn layer_breaks(&self) -> Vec<(usize, Vec<f64>)> {
        let wanted = match self.axis {
            CellAxis::Fast => LayerVariable::Y2,
            CellAxis::Slow => LayerVariable::Y1,
        };
        self.field
            .discontinuities()
            .into_iter()
            .filter(|(g, _, _)| *g == wanted)
            .map(|(_, axis, b)| (axis, b))
            .collect()
    }
}

/// Mean-zero corrector for one forcing direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCorrector {
    pub direction: usize,
    pub dim: usize,
    pub nodes_per_axis: usize,
    /// Nodal values per slice; elliptic correctors have a single slice.
    pub values: Vec<Vec<f64>>,
    /// Slice times in (0,1]; empty for elliptic correctors.
    pub slice_times: Vec<f64>,
    /// Flux ∫_Y A(e_j + ∇w) per slice.
    pub slice_fluxes: Vec<[f64; MAX_DIM]>,
    /// Flux averaged over the slices.
    pub flux: [f64; MAX_DIM],
    /// Largest relative residual over the linear solves of the accepted sweep.
    pub residual_norm: f64,
    /// ‖w(·,1) − w(·,0)‖_{L²(Y)}; zero for elliptic correctors.
    pub periodicity_defect: f64,
    pub sweeps: usize,
    pub defect_history: Vec<f64>,
}

impl CellCorrector {
    pub fn is_parabolic(&self) -> bool {
        !self.slice_times.is_empty()
    }

    /// Slice nearest to cell time `s` (periodic).
    pub fn slice_at(&self, s: f64) -> &[f64] {
        if self.values.len() == 1 {
            return &self.values[0];
        }
        let m = self.values.len();
        let k = ((s.rem_euclid(1.0) * m as f64).round() as usize + m - 1) % m;
        &self.values[k]
    }

    /// P1 interpolant of the slice nearest `s` at `y`.
    pub fn eval(&self, mesh: &SimplexMesh, y: &[f64], s: f64) -> f64 {
        mesh.eval_p1(self.slice_at(s), y)
    }
}

/// Flux tensor assembled from the correctors of every direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFlux {
    pub mean: Tensor,
    pub slices: Vec<Tensor>,
}

fn subtract_mean(w: &mut [f64]) {
    let m = w.iter().sum::<f64>() / w.len() as f64;
    w.iter_mut().for_each(|v| *v -= m);
}

fn unit(j: usize) -> [f64; MAX_DIM] {
    let mut e = [0.0; MAX_DIM];
    e[j] = 1.0;
    e
}

fn prepare(coef: &dyn CellCoefficient, grid: &CellGrid, direction: usize, opts: &CellOptions) -> Result<SimplexMesh, CellError> {
    grid.validate()?;
    opts.validate()?;
    if coef.dim() != grid.dim {
        return Err(CellError::DimensionMismatch { coefficient: coef.dim(), grid: grid.dim });
    }
    if direction >= grid.dim {
        return Err(CellError::IncompleteDirections { dim: grid.dim });
    }
    grid.check_alignment(&coef.layer_breaks())?;
    Ok(grid.mesh())
}

/// Solves the pinned periodic system K w = −F; returns (w, relative residual of the unpinned system).
fn elliptic_system(
    mesh: &SimplexMesh,
    pattern: &CsrMatrix,
    tensors: &[Tensor],
    xi: &[f64],
    opts: &CellOptions,
) -> Result<(Vec<f64>, f64), CellError> {
    let k = assemble_stiffness(mesh, pattern, tensors);
    let f = assemble_flux_load(mesh, tensors, xi);
    let mut rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    let mut kp = k.clone();
    kp.pin(0);
    rhs[0] = 0.0;
    let mut w = vec![0.0; mesh.num_nodes()];
    linalg::solve(&kp, &rhs, &mut w, &opts.solver())?;
    subtract_mean(&mut w);
    let mut r = vec![0.0; w.len()];
    k.mul_vec(&w, &mut r);
    let fnorm = linalg::norm(&f);
    let res = if fnorm > 0.0 {
        r.iter().zip(&f).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt() / fnorm
    } else {
        0.0
    };
    Ok((w, res))
}

/// Periodic elliptic corrector for forcing direction e_`direction`.
pub fn solve_elliptic_cell(coef: &dyn CellCoefficient, direction: usize, grid: &CellGrid, opts: &CellOptions) -> Result<CellCorrector, CellError> {
    let mesh = prepare(coef, grid, direction, opts)?;
    let tensors = coef.element_tensors(&mesh, 0.0)?;
    elliptic_from_tensors(&mesh, &tensors, direction, opts)
}

pub(crate) fn elliptic_from_tensors(mesh: &SimplexMesh, tensors: &[Tensor], direction: usize, opts: &CellOptions) -> Result<CellCorrector, CellError> {
    let dim = mesh.dim();
    let xi = unit(direction);
    let (w, res) = elliptic_system(mesh, &mesh.pattern(), tensors, &xi[..dim], opts)?;
    let flux = mean_flux(mesh, tensors, &w, &xi[..dim]);
    Ok(CellCorrector {
        direction,
        dim,
        nodes_per_axis: mesh.nodes_per_axis(),
        values: vec![w],
        slice_times: Vec::new(),
        slice_fluxes: vec![flux],
        flux,
        residual_norm: res,
        periodicity_defect: 0.0,
        sweeps: 0,
        defect_history: Vec::new(),
    })
}

const STAGNATION_WINDOW: usize = 10;
const STAGNATION_FACTOR: f64 = 0.9;

/// Time-periodic parabolic corrector: implicit Euler over M steps per
/// period, period map iterated from the elliptic corrector of the
/// time-averaged coefficient.
pub fn solve_periodic_parabolic_cell(
    coef: &dyn CellCoefficient,
    direction: usize,
    grid: &CellGrid,
    opts: &CellOptions,
) -> Result<CellCorrector, CellError> {
    let mesh = prepare(coef, grid, direction, opts)?;
    let m = grid.time_steps;
    let times = grid.slice_times();
    let steps: Vec<Vec<Tensor>> = if coef.is_time_dependent() {
        times.iter().map(|&s| coef.element_tensors(&mesh, s)).collect::<Result<_, _>>()?
    } else {
        vec![coef.element_tensors(&mesh, 0.0)?]
    };
    parabolic_from_tensors(&mesh, &steps, m, direction, opts)
}

/// `steps` holds one tensor set per step (or a single shared set).
pub(crate) fn parabolic_from_tensors(
    mesh: &SimplexMesh,
    steps: &[Vec<Tensor>],
    m: usize,
    direction: usize,
    opts: &CellOptions,
) -> Result<CellCorrector, CellError> {
    let dim = mesh.dim();
    let n = mesh.num_nodes();
    let xi = unit(direction);
    let xi = &xi[..dim];
    let ds = 1.0 / m as f64;
    let mass = mesh.lumped_mass();
    let pattern = mesh.pattern();
    let at = |k: usize| &steps[if steps.len() == 1 { 0 } else { k }];

    let averaged: Vec<Tensor> = (0..steps[0].len())
        .map(|e| Tensor::mean(steps.iter().map(|s| &s[e])).expect("non-empty"))
        .collect();
    let (mut start, _) = elliptic_system(mesh, &pattern, &averaged, xi, opts)?;

    struct Step {
        system: CsrMatrix,
        load: Vec<f64>,
    }
    let systems: Vec<Step> = (0..steps.len())
        .map(|k| {
            let mut system = assemble_stiffness(mesh, &pattern, &steps[k]);
            system.add_diagonal(&mass, 1.0 / ds);
            Step { system, load: assemble_flux_load(mesh, &steps[k], xi) }
        })
        .collect();
    let step = |k: usize| &systems[if systems.len() == 1 { 0 } else { k }];

    let mut history = Vec::new();
    let mut slices = vec![vec![0.0; n]; m];
    let mut rhs = vec![0.0; n];
    for sweep in 1..=opts.max_sweeps {
        let mut prev = start.clone();
        let mut worst_res = 0.0f64;
        for k in 0..m {
            let st = step(k);
            for i in 0..n {
                rhs[i] = mass[i] / ds * prev[i] - st.load[i];
            }
            let mut w = slices[k].clone();
            if sweep == 1 {
                w.copy_from_slice(&prev);
            }
            let stats = linalg::solve(&st.system, &rhs, &mut w, &opts.solver())?;
            worst_res = worst_res.max(stats.residual);
            subtract_mean(&mut w);
            slices[k].copy_from_slice(&w);
            prev = w;
        }
        let end = &slices[m - 1];
        let diff: Vec<f64> = end.iter().zip(&start).map(|(a, b)| a - b).collect();
        let defect = mesh.lumped_l2(&diff, &mass);
        let scale = 1.0 + mesh.lumped_l2(end, &mass);
        history.push(defect);
        if defect <= opts.periodic_tol * scale {
            let slice_fluxes: Vec<[f64; MAX_DIM]> = (0..m).map(|k| mean_flux(mesh, at(k), &slices[k], xi)).collect();
            let mut flux = [0.0; MAX_DIM];
            for f in &slice_fluxes {
                for d in 0..dim {
                    flux[d] += f[d] / m as f64;
                }
            }
            return Ok(CellCorrector {
                direction,
                dim,
                nodes_per_axis: mesh.nodes_per_axis(),
                values: slices,
                slice_times: (1..=m).map(|k| k as f64 * ds).collect(),
                slice_fluxes,
                flux,
                residual_norm: worst_res,
                periodicity_defect: defect,
                sweeps: sweep,
                defect_history: history,
            });
        }
        if history.len() > STAGNATION_WINDOW {
            let old = history[history.len() - 1 - STAGNATION_WINDOW];
            if defect > STAGNATION_FACTOR * old {
                return Err(CellError::Stagnation { sweeps: sweep, history });
            }
        }
        start = slices[m - 1].clone();
    }
    Err(CellError::NotConverged { sweeps: opts.max_sweeps, history })
}

/// Column j of the result is the flux of the corrector with direction j.
pub fn cell_flux_tensor(correctors: &[CellCorrector]) -> Result<CellFlux, CellError> {
    let dim = correctors.first().map(|c| c.dim).ok_or(CellError::IncompleteDirections { dim: 0 })?;
    if correctors.len() != dim {
        return Err(CellError::IncompleteDirections { dim });
    }
    let slices = correctors[0].slice_fluxes.len();
    let mut seen = [false; MAX_DIM];
    for c in correctors {
        if c.dim != dim || c.direction >= dim || seen[c.direction] || c.slice_fluxes.len() != slices {
            return Err(CellError::IncompleteDirections { dim });
        }
        seen[c.direction] = true;
    }
    let mut mean = Tensor::zeros(dim);
    let mut per_slice = vec![Tensor::zeros(dim); slices];
    for c in correctors {
        mean.set_column(c.direction, &c.flux[..dim]);
        for (t, f) in per_slice.iter_mut().zip(&c.slice_fluxes) {
            t.set_column(c.direction, &f[..dim]);
        }
    }
    Ok(CellFlux { mean, slices: per_slice })
}

/// Correctors for every direction plus their flux tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub correctors: Vec<CellCorrector>,
    pub flux: CellFlux,
}

/// Solves the cell problem for all N directions, elliptic or parabolic.
pub fn solve_cell(coef: &dyn CellCoefficient, grid: &CellGrid, opts: &CellOptions, parabolic: bool) -> Result<CellSolution, CellError> {
    let correctors = (0..grid.dim)
        .map(|j| {
            if parabolic {
                solve_periodic_parabolic_cell(coef, j, grid, opts)
            } else {
                solve_elliptic_cell(coef, j, grid, opts)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let flux = cell_flux_tensor(&correctors)?;
    Ok(CellSolution { correctors, flux })
}

/// Elliptic and parabolic solves on precomputed element tensors; used by
/// the effective pipeline where tensors come from interpolated samples.
pub(crate) fn solve_cell_tensors(
    mesh: &SimplexMesh,
    steps: &[Vec<Tensor>],
    time_steps: usize,
    opts: &CellOptions,
    parabolic: bool,
) -> Result<CellSolution, CellError> {
    let correctors = (0..mesh.dim())
        .map(|j| {
            if parabolic {
                parabolic_from_tensors(mesh, steps, time_steps, j, opts)
            } else {
                elliptic_from_tensors(mesh, &steps[0], j, opts)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let flux = cell_flux_tensor(&correctors)?;
    Ok(CellSolution { correctors, flux })
}

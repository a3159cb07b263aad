//! Two-level corrector pipeline producing the constant effective tensor b.
//!
//! classify → pre-average → inner (y₂) cell problems per slow lattice point
//! → intermediate tensor ã(y₁, s…) → mid-average → outer (y₁) cell problems
//! → final average → b.

use crate::cell::{
    solve_cell, solve_cell_tensors, CellAxis, CellError, CellGrid, CellOptions, CellSolution, CellTime, FrozenField,
};
use crate::coeffs::{pre_average_field, CoeffError, CoefficientField};
use crate::mesh::SimplexMesh;
use crate::regime::{classify_regime, CellType, RegimeDescriptor, RegimeError, ScaleExponents, TimeAxes, DEFAULT_BOUNDARY_TOLERANCE};
use crate::tensor::{Tensor, MAX_DIM};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub y1: Vec<f64>,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EffectiveError {
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Coefficient(#[from] CoeffError),
    #[error("invalid numerics: {0}")]
    Config(String),
    #[error("{stage} cell solve failed at {point:?}: {source}")]
    Cell {
        stage: &'static str,
        point: LatticePoint,
        #[source]
        source: CellError,
    },
    #[error("intermediate axes {found:?} do not match the recipe ({expected:?})")]
    AxisMismatch { expected: TimeAxes, found: TimeAxes },
    #[error("effective tensor is not coercive (symmetric-part eigenvalues {eigenvalues:?})")]
    NonCoercive { eigenvalues: Vec<f64> },
}

/// Midpoint lattice of slow arguments: y₁ at the outer-grid element
/// centroids, sᵢ at (k + ½)/count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlowSampleLattice {
    pub y1_nodes: usize,
    pub s1_samples: usize,
    pub s2_samples: usize,
}

impl SlowSampleLattice {
    pub fn validate(&self) -> Result<(), EffectiveError> {
        if self.y1_nodes < 4 || self.s1_samples == 0 || self.s2_samples == 0 {
            return Err(EffectiveError::Config("lattice counts must be positive (y1 nodes at least 4)".into()));
        }
        Ok(())
    }

    pub fn s_point(count: usize, k: usize) -> f64 {
        (k as f64 + 0.5) / count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    /// Nodes per axis of the y₂ cell grid.
    pub inner_nodes: usize,
    /// Nodes per axis of the y₁ cell grid (also the y₁ lattice).
    pub outer_nodes: usize,
    /// Implicit Euler steps per cell period.
    pub time_steps: usize,
    pub s1_samples: usize,
    pub s2_samples: usize,
    /// Midpoint points per axis for pre-averaging.
    pub pre_average_points: usize,
    pub cell: CellOptions,
    pub boundary_tolerance: f64,
    /// Keep the y₂ correctors of every lattice point.
    pub keep_inner_correctors: bool,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            inner_nodes: 64,
            outer_nodes: 64,
            time_steps: 64,
            s1_samples: 8,
            s2_samples: 8,
            pre_average_points: 16,
            cell: CellOptions::default(),
            boundary_tolerance: DEFAULT_BOUNDARY_TOLERANCE,
            keep_inner_correctors: false,
        }
    }
}

impl NumericsConfig {
    pub fn lattice(&self) -> SlowSampleLattice {
        SlowSampleLattice { y1_nodes: self.outer_nodes, s1_samples: self.s1_samples, s2_samples: self.s2_samples }
    }

    pub fn inner_grid(&self, dim: usize) -> Result<CellGrid, EffectiveError> {
        CellGrid::new(dim, self.inner_nodes, self.time_steps).map_err(|e| EffectiveError::Config(e.to_string()))
    }

    pub fn outer_grid(&self, dim: usize) -> Result<CellGrid, EffectiveError> {
        CellGrid::new(dim, self.outer_nodes, self.time_steps).map_err(|e| EffectiveError::Config(e.to_string()))
    }

    pub fn validate(&self, dim: usize) -> Result<(), EffectiveError> {
        self.inner_grid(dim)?;
        self.outer_grid(dim)?;
        self.lattice().validate()?;
        self.cell.validate().map_err(|e| EffectiveError::Config(e.to_string()))?;
        if self.pre_average_points < 2 {
            return Err(EffectiveError::Config("pre_average_points must be at least 2".into()));
        }
        if !(self.boundary_tolerance >= 0.0 && self.boundary_tolerance.is_finite()) {
            return Err(EffectiveError::Config("boundary_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// ã sampled per y₁ element and per sample of each present time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateCoefficient {
    pub dim: usize,
    /// Nodes per axis of the y₁ mesh whose elements carry the samples.
    pub y1_nodes: usize,
    pub axes: TimeAxes,
    pub s1_samples: usize,
    pub s2_samples: usize,
    /// Index `e + elements·(i1 + s1_samples·i2)`; absent axes have count 1.
    pub values: Vec<Tensor>,
}

impl IntermediateCoefficient {
    pub fn elements(&self) -> usize {
        self.values.len() / (self.s1_samples * self.s2_samples)
    }

    pub fn get(&self, e: usize, i1: usize, i2: usize) -> &Tensor {
        &self.values[e + self.elements() * (i1 + self.s1_samples * i2)]
    }

    fn count(&self, s1: bool) -> usize {
        if s1 {
            self.s1_samples
        } else {
            self.s2_samples
        }
    }

    /// Midpoint average over the listed axes; averaging an absent axis is a no-op.
    pub fn averaged(&self, over: TimeAxes) -> IntermediateCoefficient {
        let avg1 = over.s1 && self.axes.s1;
        let avg2 = over.s2 && self.axes.s2;
        let (n1, n2) = (if avg1 { 1 } else { self.s1_samples }, if avg2 { 1 } else { self.s2_samples });
        let ne = self.elements();
        let mut values = Vec::with_capacity(ne * n1 * n2);
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                for e in 0..ne {
                    let r1: Vec<usize> = if avg1 { (0..self.s1_samples).collect() } else { vec![i1] };
                    let r2: Vec<usize> = if avg2 { (0..self.s2_samples).collect() } else { vec![i2] };
                    let mut acc = Tensor::zeros(self.dim);
                    for &a in &r2 {
                        for &b in &r1 {
                            acc = acc + *self.get(e, b, a);
                        }
                    }
                    values.push(acc * (1.0 / (r1.len() * r2.len()) as f64));
                }
            }
        }
        IntermediateCoefficient {
            dim: self.dim,
            y1_nodes: self.y1_nodes,
            axes: TimeAxes { s1: self.axes.s1 && !avg1, s2: self.axes.s2 && !avg2 },
            s1_samples: n1,
            s2_samples: n2,
            values,
        }
    }

    /// Element tensors at sample (i1, i2) with the `along` axis (if any)
    /// replaced by periodic linear interpolation at time `s`.
    fn tensors_at(&self, i1: usize, i2: usize, along: Option<(bool, f64)>) -> Vec<Tensor> {
        let ne = self.elements();
        match along {
            None => (0..ne).map(|e| *self.get(e, i1, i2)).collect(),
            Some((is_s1, s)) => {
                let n = self.count(is_s1);
                if n == 1 {
                    return (0..ne).map(|e| *self.get(e, i1, i2)).collect();
                }
                let u = s * n as f64 - 0.5;
                let k0 = u.floor();
                let frac = u - k0;
                let a = (k0 as i64).rem_euclid(n as i64) as usize;
                let b = (a + 1) % n;
                let pick = |e: usize, k: usize| if is_s1 { *self.get(e, k, i2) } else { *self.get(e, i1, k) };
                (0..ne).map(|e| pick(e, a) * (1.0 - frac) + pick(e, b) * frac).collect()
            }
        }
    }

    /// Smallest symmetric-part eigenvalue over all samples.
    pub fn min_coercivity(&self) -> f64 {
        self.values.iter().map(|t| t.sym_min_eigenvalue()).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub exponents: [f64; 3],
    pub exact_exponents: bool,
    pub boundary_tolerance: f64,
    pub inner_grid: CellGrid,
    pub outer_grid: CellGrid,
    pub cell_options: CellOptions,
    pub s1_samples: usize,
    pub s2_samples: usize,
    pub pre_average_points: usize,
    pub inner_lattice_points: usize,
    pub inner_solves: usize,
    pub outer_solves: usize,
    pub max_residual: f64,
    pub max_periodicity_defect: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub b: Tensor,
    pub case_index: u8,
    pub provenance: Provenance,
}

/// Correctors of both levels. χ¹ lives on the y₁ grid per remaining slow
/// time sample; χ² on the y₂ grid per lattice point (kept on request).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSet {
    pub dim: usize,
    pub outer_grid: CellGrid,
    pub inner_grid: CellGrid,
    /// Time axes indexing `outer` (their samples are midpoints).
    pub outer_axes: TimeAxes,
    pub outer_type: CellType,
    pub s1_samples: usize,
    pub s2_samples: usize,
    /// Indexed `i1 + s1_samples·i2` over the outer axes (count 1 when absent).
    pub outer: Vec<CellSolution>,
    pub inner: Option<Vec<CellSolution>>,
}

/// Slow-corrector moments ∫∫∫ χ¹_j(y₁, s₁, s₂) v₂(y₁) c₂(s₁) c₃(s₂).
pub trait CorrectorMoments {
    fn dim(&self) -> usize;

    fn slow_moment(&self, direction: usize, v2: &dyn Fn(&[f64]) -> f64, c2: &dyn Fn(f64) -> f64, c3: &dyn Fn(f64) -> f64) -> f64;
}

const MOMENT_POINTS: usize = 256;

fn midpoint_mean(c: &dyn Fn(f64) -> f64) -> f64 {
    (0..MOMENT_POINTS).map(|k| c((k as f64 + 0.5) / MOMENT_POINTS as f64)).sum::<f64>() / MOMENT_POINTS as f64
}

impl CorrectorSet {
    pub fn outer_solution(&self, i1: usize, i2: usize) -> &CellSolution {
        &self.outer[i1 + self.s1_samples * i2]
    }

    pub fn mesh(&self) -> SimplexMesh {
        self.outer_grid.mesh()
    }
}

impl CorrectorMoments for CorrectorSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn slow_moment(&self, direction: usize, v2: &dyn Fn(&[f64]) -> f64, c2: &dyn Fn(f64) -> f64, c3: &dyn Fn(f64) -> f64) -> f64 {
        let mesh = self.mesh();
        let par_axis = self.outer_type.time_axis();
        // time axes the corrector does not carry contribute their plain mean
        let mut factor = 1.0;
        if !self.outer_axes.s1 {
            factor *= midpoint_mean(c2);
        }
        if !self.outer_axes.s2 {
            factor *= midpoint_mean(c3);
        }
        let mut total = 0.0;
        for i2 in 0..self.s2_samples {
            for i1 in 0..self.s1_samples {
                let s1 = SlowSampleLattice::s_point(self.s1_samples, i1);
                let s2 = SlowSampleLattice::s_point(self.s2_samples, i2);
                let sol = self.outer_solution(i1, i2);
                let corr = &sol.correctors[direction];
                let mut acc = 0.0;
                for (k, slice) in corr.values.iter().enumerate() {
                    let (w1, w2) = if corr.is_parabolic() {
                        let t = corr.slice_times[k];
                        if par_axis.s1 {
                            (c2(t), if self.outer_axes.s2 { c3(s2) } else { 1.0 })
                        } else {
                            (if self.outer_axes.s1 { c2(s1) } else { 1.0 }, c3(t))
                        }
                    } else {
                        (
                            if self.outer_axes.s1 { c2(s1) } else { 1.0 },
                            if self.outer_axes.s2 { c3(s2) } else { 1.0 },
                        )
                    };
                    acc += mesh.integrate_p1(slice, v2) * w1 * w2;
                }
                total += acc / corr.values.len() as f64;
            }
        }
        factor * total / (self.s1_samples * self.s2_samples) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveResult {
    pub regime: RegimeDescriptor,
    pub tensor: EffectiveTensor,
    pub intermediate: IntermediateCoefficient,
    pub correctors: CorrectorSet,
}

struct Stats {
    solves: usize,
    max_residual: f64,
    max_defect: f64,
    max_sweeps: usize,
}

impl Stats {
    fn of<'a>(solutions: impl IntoIterator<Item = &'a CellSolution>) -> Stats {
        let mut s = Stats { solves: 0, max_residual: 0.0, max_defect: 0.0, max_sweeps: 0 };
        for sol in solutions {
            for c in &sol.correctors {
                s.solves += 1;
                s.max_residual = s.max_residual.max(c.residual_norm);
                s.max_defect = s.max_defect.max(c.periodicity_defect);
                s.max_sweeps = s.max_sweeps.max(c.sweeps);
            }
        }
        s
    }
}

/// Output of the inner stage.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerStage {
    pub intermediate: IntermediateCoefficient,
    pub lattice_points: usize,
    pub solutions: Vec<CellSolution>,
}

/// y₂ problems at every lattice point of the surviving slow arguments.
/// `field` must already be pre-averaged per the recipe.
pub fn compute_inner_stage(
    field: &CoefficientField,
    regime: &RegimeDescriptor,
    numerics: &NumericsConfig,
) -> Result<InnerStage, EffectiveError> {
    let dim = field.dim();
    numerics.validate(dim)?;
    let inner_grid = numerics.inner_grid(dim)?;
    let outer_mesh = numerics.outer_grid(dim)?.mesh();
    let axes = regime.intermediate_axes();
    let (dep1, dep2) = field.time_dependence();
    // axes the field does not depend on are solved once and broadcast
    let n1 = if axes.s1 { numerics.s1_samples } else { 1 };
    let n2 = if axes.s2 { numerics.s2_samples } else { 1 };
    let m1 = if dep1 { n1 } else { 1 };
    let m2 = if dep2 { n2 } else { 1 };
    let time = match regime.inner_type {
        CellType::Elliptic => CellTime::Frozen,
        CellType::ParabolicInS1 => CellTime::S1,
        CellType::ParabolicInS2 => CellTime::S2,
    };
    let parabolic = regime.inner_type != CellType::Elliptic;
    let ne = outer_mesh.elements().len();
    let points: Vec<(usize, usize, usize)> =
        (0..m2).flat_map(|i2| (0..m1).flat_map(move |i1| (0..ne).map(move |e| (e, i1, i2)))).collect();
    let s_of = |count: usize, k: usize, present: bool| if present { SlowSampleLattice::s_point(count, k) } else { 0.0 };
    let solutions: Vec<CellSolution> = points
        .par_iter()
        .map(|&(e, i1, i2)| {
            let el = &outer_mesh.elements()[e];
            let mut other = [0.0; MAX_DIM];
            other[..dim].copy_from_slice(&el.centroid[..dim]);
            let s1 = s_of(n1, i1, axes.s1);
            let s2 = s_of(n2, i2, axes.s2);
            let frozen = FrozenField { field, axis: CellAxis::Fast, time, other, s1, s2 };
            solve_cell(&frozen, &inner_grid, &numerics.cell, parabolic).map_err(|source| EffectiveError::Cell {
                stage: "inner",
                point: LatticePoint {
                    y1: other[..dim].to_vec(),
                    s1: axes.s1.then_some(s1),
                    s2: axes.s2.then_some(s2),
                },
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut values = Vec::with_capacity(ne * n1 * n2);
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            for e in 0..ne {
                let k = e + ne * ((i1 % m1) + m1 * (i2 % m2));
                values.push(solutions[k].flux.mean);
            }
        }
    }
    Ok(InnerStage {
        intermediate: IntermediateCoefficient { dim, y1_nodes: numerics.outer_nodes, axes, s1_samples: n1, s2_samples: n2, values },
        lattice_points: points.len(),
        solutions,
    })
}

/// Output of the outer stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterStage {
    pub b: Tensor,
    pub correctors: CorrectorSet,
}

/// Mid-average ã, solve the y₁ problems per remaining sample, average to b.
pub fn compute_outer_stage(
    intermediate: &IntermediateCoefficient,
    regime: &RegimeDescriptor,
    numerics: &NumericsConfig,
) -> Result<OuterStage, EffectiveError> {
    let dim = intermediate.dim;
    numerics.validate(dim)?;
    if intermediate.axes != regime.intermediate_axes() {
        return Err(EffectiveError::AxisMismatch { expected: regime.intermediate_axes(), found: intermediate.axes });
    }
    let outer_grid = numerics.outer_grid(dim)?;
    let mesh = outer_grid.mesh();
    if intermediate.elements() != mesh.elements().len() {
        return Err(EffectiveError::Config("intermediate y1 samples do not match the outer grid".into()));
    }
    let reduced = intermediate.averaged(regime.mid_average);
    let par = regime.outer_type.time_axis();
    if !reduced.axes.contains(par) && !par.is_empty() {
        return Err(EffectiveError::AxisMismatch { expected: regime.outer_axes(), found: reduced.axes });
    }
    let parabolic = !par.is_empty();
    // samples of the non-parabolic remaining axes; the parabolic axis is the cell time
    let n1 = if par.s1 { 1 } else { reduced.s1_samples };
    let n2 = if par.s2 { 1 } else { reduced.s2_samples };
    let m = numerics.time_steps;
    let samples: Vec<(usize, usize)> = (0..n2).flat_map(|i2| (0..n1).map(move |i1| (i1, i2))).collect();
    let solutions: Vec<CellSolution> = samples
        .par_iter()
        .map(|&(i1, i2)| {
            let steps: Vec<Vec<Tensor>> = if parabolic {
                let n_par = if par.s1 { reduced.s1_samples } else { reduced.s2_samples };
                if n_par == 1 {
                    vec![reduced.tensors_at(i1, i2, None)]
                } else {
                    (1..=m).map(|k| reduced.tensors_at(i1, i2, Some((par.s1, k as f64 / m as f64)))).collect()
                }
            } else {
                vec![reduced.tensors_at(i1, i2, None)]
            };
            let point = || LatticePoint {
                y1: Vec::new(),
                s1: (reduced.axes.s1 && !par.s1).then(|| SlowSampleLattice::s_point(n1, i1)),
                s2: (reduced.axes.s2 && !par.s2).then(|| SlowSampleLattice::s_point(n2, i2)),
            };
            for (k, set) in steps.iter().enumerate() {
                if let Some((e, t)) = set.iter().enumerate().find(|(_, t)| !(t.sym_min_eigenvalue() > 0.0)) {
                    let el = &mesh.elements()[e];
                    return Err(EffectiveError::Cell {
                        stage: "outer",
                        point: point(),
                        source: CellError::NonCoercive {
                            y: el.centroid[..dim].to_vec(),
                            s: (k + 1) as f64 / m as f64,
                            min_eigenvalue: t.sym_min_eigenvalue(),
                        },
                    });
                }
            }
            solve_cell_tensors(&mesh, &steps, m, &numerics.cell, parabolic)
                .map_err(|source| EffectiveError::Cell { stage: "outer", point: point(), source })
        })
        .collect::<Result<_, _>>()?;
    let b = Tensor::mean(solutions.iter().map(|s| &s.flux.mean)).expect("at least one sample");
    let eig = b.symmetric_part().sym_eigenvalues();
    if !(eig[0] > 0.0) {
        return Err(EffectiveError::NonCoercive { eigenvalues: eig });
    }
    Ok(OuterStage {
        b,
        correctors: CorrectorSet {
            dim,
            outer_grid,
            inner_grid: numerics.inner_grid(dim)?,
            outer_axes: reduced.axes,
            outer_type: regime.outer_type,
            s1_samples: n1,
            s2_samples: n2,
            outer: solutions,
            inner: None,
        },
    })
}

/// Full pipeline with provenance.
pub fn compute_effective_tensor(
    field: &CoefficientField,
    exponents: &ScaleExponents,
    numerics: &NumericsConfig,
) -> Result<EffectiveResult, EffectiveError> {
    let dim = field.dim();
    numerics.validate(dim)?;
    let regime = classify_regime(exponents, numerics.boundary_tolerance)?;
    let pre = pre_average_field(field, regime.pre_average, numerics.pre_average_points)?;
    let inner = compute_inner_stage(&pre, &regime, numerics)?;
    let outer = compute_outer_stage(&inner.intermediate, &regime, numerics)?;
    let si = Stats::of(&inner.solutions);
    let so = Stats::of(&outer.correctors.outer);
    let provenance = Provenance {
        exponents: [exponents.p, exponents.q, exponents.r],
        exact_exponents: exponents.is_exact(),
        boundary_tolerance: numerics.boundary_tolerance,
        inner_grid: numerics.inner_grid(dim)?,
        outer_grid: numerics.outer_grid(dim)?,
        cell_options: numerics.cell,
        s1_samples: numerics.s1_samples,
        s2_samples: numerics.s2_samples,
        pre_average_points: numerics.pre_average_points,
        inner_lattice_points: inner.lattice_points,
        inner_solves: si.solves,
        outer_solves: so.solves,
        max_residual: si.max_residual.max(so.max_residual),
        max_periodicity_defect: si.max_defect.max(so.max_defect),
        max_sweeps: si.max_sweeps.max(so.max_sweeps),
    };
    let mut correctors = outer.correctors;
    if numerics.keep_inner_correctors {
        correctors.inner = Some(inner.solutions);
    }
    Ok(EffectiveResult {
        regime,
        tensor: EffectiveTensor { b: outer.b, case_index: regime.case_index, provenance },
        intermediate: inner.intermediate,
        correctors,
    })
}

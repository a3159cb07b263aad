//! Homogenized problem −∇·(b∇u) = f(·,t) on a box with u = 0 on the
//! boundary, solved independently at each time sample.

use crate::linalg::{self, SolveError, SolverOptions};
use crate::mesh::{assemble_source_load, assemble_stiffness, BoxDomain, SimplexMesh};
use crate::tensor::{Tensor, MAX_DIM};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacroError {
    #[error("effective tensor is not coercive (symmetric-part eigenvalues {eigenvalues:?})")]
    NonCoercive { eigenvalues: Vec<f64> },
    #[error("invalid macro mesh: {0}")]
    Mesh(String),
    #[error("source is not finite at t={t}")]
    NonFiniteSource { t: f64 },
    #[error("linear solve failed at t={t}: {source}")]
    Solve {
        t: f64,
        #[source]
        source: SolveError,
    },
}

/// Box Ω with `nodes_per_axis` nodes per axis (boundary included) and the
/// time samples at which the problem is solved.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroMesh {
    pub domain: BoxDomain,
    pub nodes_per_axis: usize,
    pub times: Vec<f64>,
}

impl MacroMesh {
    pub fn new(domain: BoxDomain, nodes_per_axis: usize, times: Vec<f64>) -> Result<Self, MacroError> {
        if !domain.is_valid() {
            return Err(MacroError::Mesh("domain must be a 1D or 2D box with positive lengths".into()));
        }
        if nodes_per_axis < 3 {
            return Err(MacroError::Mesh("at least one interior node per axis is required".into()));
        }
        if times.is_empty() || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MacroError::Mesh("time samples must be finite and strictly increasing".into()));
        }
        Ok(MacroMesh { domain, nodes_per_axis, times })
    }

    pub fn simplex_mesh(&self) -> SimplexMesh {
        SimplexMesh::boxed(&self.domain, self.nodes_per_axis)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSolution {
    pub mesh: SimplexMesh,
    pub domain: BoxDomain,
    pub times: Vec<f64>,
    /// Nodal values per time sample.
    pub values: Vec<Vec<f64>>,
    /// Relative residual of each slice solve.
    pub residuals: Vec<f64>,
}

impl MacroSolution {
    /// Bracketing sample indices and the linear weight of the second.
    pub fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, k + 1, w)
    }

    /// P1 in space, linear in time (constant outside the sample range).
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let (a, b, w) = self.bracket(t);
        let ua = self.mesh.eval_p1(&self.values[a], x);
        if a == b {
            return ua;
        }
        (1.0 - w) * ua + w * self.mesh.eval_p1(&self.values[b], x)
    }

    /// Elementwise gradient at `x`, linear in time.
    pub fn gradient(&self, x: &[f64], t: f64) -> [f64; MAX_DIM] {
        let dim = self.mesh.dim();
        let (e, _) = self.mesh.locate(x);
        let el = &self.mesh.elements()[e];
        let (a, b, w) = self.bracket(t);
        let ga = el.gradient(&self.values[a], dim);
        let gb = el.gradient(&self.values[b], dim);
        let mut g = [0.0; MAX_DIM];
        for d in 0..dim {
            g[d] = (1.0 - w) * ga[d] + w * gb[d];
        }
        g
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Solves the homogenized problem at every time sample of `mesh`.
pub fn solve_homogenized(
    b: &Tensor,
    f: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    mesh: &MacroMesh,
    tol: f64,
) -> Result<MacroSolution, MacroError> {
    let eigenvalues = b.symmetric_part().sym_eigenvalues();
    if !(eigenvalues[0] > 0.0) || !b.is_finite() {
        return Err(MacroError::NonCoercive { eigenvalues });
    }
    if b.dim() != mesh.domain.dim() {
        return Err(MacroError::Mesh(format!("tensor dimension {} does not match domain dimension {}", b.dim(), mesh.domain.dim())));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(MacroError::Mesh("tolerance must be positive".into()));
    }
    let sm = mesh.simplex_mesh();
    let tensors = vec![*b; sm.elements().len()];
    let mut k = assemble_stiffness(&sm, &sm.pattern(), &tensors);
    let boundary: Vec<usize> = (0..sm.num_nodes()).filter(|&i| sm.is_boundary(i)).collect();
    for &i in &boundary {
        k.pin(i);
    }
    let opts = SolverOptions { rel_tol: tol, max_iter: None };
    let slices: Vec<(Vec<f64>, f64)> = mesh
        .times
        .par_iter()
        .map(|&t| {
            let mut load = assemble_source_load(&sm, |x| f(x, t));
            if load.iter().any(|v| !v.is_finite()) {
                return Err(MacroError::NonFiniteSource { t });
            }
            for &i in &boundary {
                load[i] = 0.0;
            }
            let mut u = vec![0.0; sm.num_nodes()];
            let stats = linalg::solve(&k, &load, &mut u, &opts).map_err(|source| MacroError::Solve { t, source })?;
            Ok((u, stats.residual))
        })
        .collect::<Result<_, _>>()?;
    let (values, residuals) = slices.into_iter().unzip();
    Ok(MacroSolution { mesh: sm, domain: mesh.domain.clone(), times: mesh.times.clone(), values, residuals })
}

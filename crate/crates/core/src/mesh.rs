//! Uniform P1 simplex meshes on boxes (Dirichlet) and unit tori (periodic),
//! together with the assembly kernels shared by the cell, macroscale and
//! fine-scale solvers.

use crate::linalg::CsrMatrix;
use crate::tensor::{Tensor, MAX_DIM};
use serde::{Deserialize, Serialize};

/// Axis-aligned box `lower + [0, lengths]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub lengths: Vec<f64>,
}

impl BoxDomain {
    pub fn unit(dim: usize) -> Self {
        BoxDomain { lower: vec![0.0; dim], lengths: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_valid(&self) -> bool {
        (1..=MAX_DIM).contains(&self.dim())
            && self.lengths.len() == self.dim()
            && self.lengths.iter().all(|&l| l.is_finite() && l > 0.0)
            && self.lower.iter().all(|v| v.is_finite())
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Coordinates relative to the box, in [0, 1]^N.
    pub fn reference(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut r = [0.0; MAX_DIM];
        for i in 0..self.dim() {
            r[i] = (x[i] - self.lower[i]) / self.lengths[i];
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// Vertex indices; only the first `dim + 1` are meaningful.
    pub nodes: [usize; MAX_DIM + 1],
    /// Constant gradients of the local basis functions.
    pub grads: [[f64; MAX_DIM]; MAX_DIM + 1],
    pub measure: f64,
    /// Vertex coordinates (unwrapped for periodic meshes).
    pub vertices: [[f64; MAX_DIM]; MAX_DIM + 1],
    pub centroid: [f64; MAX_DIM],
}

impl Element {
    /// Physical point for barycentric weights `lambda`.
    pub fn point(&self, lambda: &[f64], dim: usize) -> [f64; MAX_DIM] {
        let mut p = [0.0; MAX_DIM];
        for (k, l) in lambda.iter().enumerate().take(dim + 1) {
            for (d, pd) in p.iter_mut().enumerate().take(dim) {
                *pd += l * self.vertices[k][d];
            }
        }
        p
    }

    pub fn gradient(&self, values: &[f64], dim: usize) -> [f64; MAX_DIM] {
        let mut g = [0.0; MAX_DIM];
        for k in 0..=dim {
            let v = values[self.nodes[k]];
            for (d, gd) in g.iter_mut().enumerate().take(dim) {
                *gd += v * self.grads[k][d];
            }
        }
        g
    }
}

/// Barycentric quadrature rules: (weights summing to 1, barycentric points).
pub fn quadrature_rule(dim: usize) -> (Vec<f64>, Vec<[f64; MAX_DIM + 1]>) {
    match dim {
        1 => {
            // 3-point Gauss–Legendre
            let a = (0.6f64).sqrt() * 0.5;
            let pts = [0.5 - a, 0.5, 0.5 + a];
            let w = vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
            (w, pts.iter().map(|&x| [1.0 - x, x, 0.0]).collect())
        }
        _ => {
            // degree-2 edge-midpoint rule
            let w = vec![1.0 / 3.0; 3];
            let pts = vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
            (w, pts)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMesh {
    dim: usize,
    periodic: bool,
    /// Vertex positions per axis (periodic: distinct nodes; box: including boundary).
    nodes_per_axis: usize,
    lower: [f64; MAX_DIM],
    spacing: [f64; MAX_DIM],
    elements: Vec<Element>,
    boundary: Vec<bool>,
}

impl SimplexMesh {
    /// Periodic mesh of the unit torus with `n` distinct nodes per axis.
    pub fn periodic_unit(dim: usize, n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim) && n >= 2);
        let h = 1.0 / n as f64;
        let mut mesh = SimplexMesh {
            dim,
            periodic: true,
            nodes_per_axis: n,
            lower: [0.0; MAX_DIM],
            spacing: [h; MAX_DIM],
            elements: Vec::new(),
            boundary: vec![false; n.pow(dim as u32)],
        };
        mesh.build_elements(n);
        mesh
    }

    /// Box mesh with `n` nodes per axis including the boundary nodes.
    pub fn boxed(domain: &BoxDomain, n: usize) -> Self {
        let dim = domain.dim();
        assert!(n >= 2);
        let mut spacing = [0.0; MAX_DIM];
        let mut lower = [0.0; MAX_DIM];
        for d in 0..dim {
            spacing[d] = domain.lengths[d] / (n - 1) as f64;
            lower[d] = domain.lower[d];
        }
        let num = n.pow(dim as u32);
        let boundary = (0..num)
            .map(|k| {
                let idx = Self::split_index(k, n, dim);
                idx[..dim].iter().any(|&i| i == 0 || i == n - 1)
            })
            .collect();
        let mut mesh = SimplexMesh {
            dim,
            periodic: false,
            nodes_per_axis: n,
            lower,
            spacing,
            elements: Vec::new(),
            boundary,
        };
        mesh.build_elements(n - 1);
        mesh
    }

    fn split_index(k: usize, n: usize, dim: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut k = k;
        for slot in idx.iter_mut().take(dim) {
            *slot = k % n;
            k /= n;
        }
        idx
    }

    fn node_index(&self, idx: &[usize]) -> usize {
        let n = self.nodes_per_axis;
        let mut k = 0;
        for d in (0..self.dim).rev() {
            let i = if self.periodic { idx[d] % n } else { idx[d] };
            k = k * n + i;
        }
        k
    }

    fn coord(&self, d: usize, i: usize) -> f64 {
        self.lower[d] + i as f64 * self.spacing[d]
    }

    fn push_simplex(&mut self, verts: &[[usize; MAX_DIM]]) {
        let dim = self.dim;
        let mut el = Element {
            nodes: [0; MAX_DIM + 1],
            grads: [[0.0; MAX_DIM]; MAX_DIM + 1],
            measure: 0.0,
            vertices: [[0.0; MAX_DIM]; MAX_DIM + 1],
            centroid: [0.0; MAX_DIM],
        };
        for (k, v) in verts.iter().enumerate() {
            el.nodes[k] = self.node_index(v);
            for d in 0..dim {
                el.vertices[k][d] = self.coord(d, v[d]);
                el.centroid[d] += el.vertices[k][d] / (dim + 1) as f64;
            }
        }
        if dim == 1 {
            let h = el.vertices[1][0] - el.vertices[0][0];
            el.measure = h;
            el.grads[0][0] = -1.0 / h;
            el.grads[1][0] = 1.0 / h;
        } else {
            let [p0, p1, p2] = [el.vertices[0], el.vertices[1], el.vertices[2]];
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            el.measure = 0.5 * det.abs();
            // ∇λ_k = rot90(opposite edge) / det
            let pts = [p0, p1, p2];
            for k in 0..3 {
                let a = pts[(k + 1) % 3];
                let b = pts[(k + 2) % 3];
                el.grads[k][0] = (a[1] - b[1]) / det;
                el.grads[k][1] = (b[0] - a[0]) / det;
            }
        }
        self.elements.push(el);
    }

    fn build_elements(&mut self, cells: usize) {
        match self.dim {
            1 => {
                for i in 0..cells {
                    self.push_simplex(&[[i, 0], [i + 1, 0]]);
                }
            }
            _ => {
                for j in 0..cells {
                    for i in 0..cells {
                        self.push_simplex(&[[i, j], [i + 1, j], [i + 1, j + 1]]);
                        self.push_simplex(&[[i, j], [i + 1, j + 1], [i, j + 1]]);
                    }
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn num_nodes(&self) -> usize {
        self.boundary.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing[0]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn node_coords(&self, node: usize) -> [f64; MAX_DIM] {
        let idx = Self::split_index(node, self.nodes_per_axis, self.dim);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim {
            x[d] = self.coord(d, idx[d]);
        }
        x
    }

    /// Lumped (row-sum) mass per node.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_nodes()];
        for el in &self.elements {
            for k in 0..=self.dim {
                m[el.nodes[k]] += el.measure / (self.dim + 1) as f64;
            }
        }
        m
    }

    /// Unassembled CSR pattern covering all element couplings.
    pub fn pattern(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.elements.len() * (self.dim + 1).pow(2));
        for el in &self.elements {
            for a in 0..=self.dim {
                for b in 0..=self.dim {
                    t.push((el.nodes[a], el.nodes[b], 0.0));
                }
            }
        }
        CsrMatrix::from_triplets(self.num_nodes(), &t)
    }

    /// ∫ v(x) over the mesh by the element quadrature rule.
    pub fn integrate(&self, v: impl Fn(&[f64]) -> f64) -> f64 {
        let (w, pts) = quadrature_rule(self.dim);
        self.elements
            .iter()
            .map(|el| {
                let s: f64 = w.iter().zip(&pts).map(|(wk, l)| wk * v(&el.point(l, self.dim)[..self.dim])).sum();
                s * el.measure
            })
            .sum()
    }

    /// ∫ u_h(x) g(x) dx for a nodal P1 field `u`.
    pub fn integrate_p1(&self, u: &[f64], g: impl Fn(&[f64]) -> f64) -> f64 {
        let (w, pts) = quadrature_rule(self.dim);
        let mut total = 0.0;
        for el in &self.elements {
            let mut s = 0.0;
            for (wk, l) in w.iter().zip(&pts) {
                let uh: f64 = (0..=self.dim).map(|k| l[k] * u[el.nodes[k]]).sum();
                s += wk * uh * g(&el.point(l, self.dim)[..self.dim]);
            }
            total += s * el.measure;
        }
        total
    }

    /// Discrete L² norm with lumped mass.
    pub fn lumped_l2(&self, u: &[f64], mass: &[f64]) -> f64 {
        u.iter().zip(mass).map(|(v, m)| v * v * m).sum::<f64>().sqrt()
    }

    /// Locates `x` and returns (element index, barycentric weights).
    pub fn locate(&self, x: &[f64]) -> (usize, [f64; MAX_DIM + 1]) {
        let cells = if self.periodic { self.nodes_per_axis } else { self.nodes_per_axis - 1 };
        let mut cell = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for d in 0..self.dim {
            let mut r = (x[d] - self.lower[d]) / self.spacing[d];
            if self.periodic {
                r = r.rem_euclid(cells as f64);
            }
            let i = (r.floor().max(0.0) as usize).min(cells - 1);
            cell[d] = i;
            frac[d] = (r - i as f64).clamp(0.0, 1.0);
        }
        if self.dim == 1 {
            (cell[0], [1.0 - frac[0], frac[0], 0.0])
        } else {
            let base = 2 * (cell[0] + cells * cell[1]);
            // lower triangle (v00, v10, v11) when fx ≥ fy
            let (fx, fy) = (frac[0], frac[1]);
            if fx >= fy {
                (base, [1.0 - fx, fx - fy, fy])
            } else {
                (base + 1, [1.0 - fy, fx, fy - fx])
            }
        }
    }

    /// Evaluates the P1 interpolant of nodal values at `x`.
    pub fn eval_p1(&self, u: &[f64], x: &[f64]) -> f64 {
        let (e, l) = self.locate(x);
        let el = &self.elements[e];
        (0..=self.dim).map(|k| l[k] * u[el.nodes[k]]).sum()
    }
}

/// Stiffness matrix Σ_e |e| (A_e ∇φ_j)·∇φ_i with one tensor per element.
pub fn assemble_stiffness(mesh: &SimplexMesh, pattern: &CsrMatrix, tensors: &[Tensor]) -> CsrMatrix {
    let dim = mesh.dim();
    let mut k = pattern.zeroed_like();
    for (el, a) in mesh.elements().iter().zip(tensors) {
        for jl in 0..=dim {
            let ag = a.mul_vec(&el.grads[jl]);
            for il in 0..=dim {
                let v: f64 = (0..dim).map(|d| ag[d] * el.grads[il][d]).sum::<f64>() * el.measure;
                let pos = k.position(el.nodes[il], el.nodes[jl]).expect("pattern");
                k.values_mut()[pos] += v;
            }
        }
    }
    k
}

/// Load vector F_i = Σ_e |e| (A_e ξ)·∇φ_i for a constant vector ξ.
pub fn assemble_flux_load(mesh: &SimplexMesh, tensors: &[Tensor], xi: &[f64]) -> Vec<f64> {
    let dim = mesh.dim();
    let mut f = vec![0.0; mesh.num_nodes()];
    for (el, a) in mesh.elements().iter().zip(tensors) {
        let ax = a.mul_vec(xi);
        for il in 0..=dim {
            f[el.nodes[il]] += (0..dim).map(|d| ax[d] * el.grads[il][d]).sum::<f64>() * el.measure;
        }
    }
    f
}

/// Source load ∫ f φ_i by the element quadrature rule.
pub fn assemble_source_load(mesh: &SimplexMesh, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let dim = mesh.dim();
    let (w, pts) = quadrature_rule(dim);
    let mut load = vec![0.0; mesh.num_nodes()];
    for el in mesh.elements() {
        for (wk, l) in w.iter().zip(&pts) {
            let fx = f(&el.point(l, dim)[..dim]) * wk * el.measure;
            for il in 0..=dim {
                load[el.nodes[il]] += fx * l[il];
            }
        }
    }
    load
}

/// Mean flux Σ_e |e| A_e (ξ + ∇w_e) divided by the total measure.
pub fn mean_flux(mesh: &SimplexMesh, tensors: &[Tensor], w: &[f64], xi: &[f64]) -> [f64; MAX_DIM] {
    let dim = mesh.dim();
    let mut g = [0.0; MAX_DIM];
    let mut vol = 0.0;
    for (el, a) in mesh.elements().iter().zip(tensors) {
        let gw = el.gradient(w, dim);
        let mut v = [0.0; MAX_DIM];
        for d in 0..dim {
            v[d] = xi[d] + gw[d];
        }
        let av = a.mul_vec(&v);
        for d in 0..dim {
            g[d] += el.measure * av[d];
        }
        vol += el.measure;
    }
    for gd in g.iter_mut().take(dim) {
        *gd /= vol;
    }
    g
}

//! Compressed sparse row matrices and the linear solvers used by every
//! finite-element stage.
//!
//! Dispatch in [`solve`]: matrices whose sparsity lies inside the (cyclic)
//! tridiagonal band are solved directly; other symmetric matrices use
//! Jacobi-preconditioned conjugate gradients, nonsymmetric ones
//! Jacobi-preconditioned BiCGSTAB.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("{method} did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("{method} breakdown after {iterations} iterations")]
    Breakdown { method: &'static str, iterations: usize },
    #[error("zero pivot in direct solve at row {row}")]
    ZeroPivot { row: usize },
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target ‖b − Ax‖ / ‖b‖.
    pub rel_tol: f64,
    /// Iteration cap for Krylov methods; `None` picks `10·n + 100`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rel_tol: 1e-10, max_iter: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    ConjugateGradient,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
}

/// Square CSR matrix with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i},{j}) out of bounds for n={n}");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    /// Same sparsity pattern with all values zeroed.
    pub fn zeroed_like(&self) -> Self {
        CsrMatrix { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Storage position of entry (i, j), if it is in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Adds `c·d[i]` to every diagonal entry (entries must exist in the pattern).
    pub fn add_diagonal(&mut self, d: &[f64], c: f64) {
        for (i, di) in d.iter().enumerate() {
            let k = self.position(i, i).expect("diagonal entry missing from pattern");
            self.values[k] += c * di;
        }
    }

    /// Replaces row and column `i` by the identity row/column.
    pub fn pin(&mut self, i: usize) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                if r == i || c == i {
                    self.values[k] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * scale))
    }

    /// True when every stored nonzero sits at column i−1, i or i+1 (mod n).
    pub fn is_cyclic_tridiagonal(&self) -> bool {
        let n = self.n;
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            self.row(i).all(|(j, v)| {
                v == 0.0 || j == i || j == (i + 1) % n || j == (i + n - 1) % n
            })
        })
    }

    fn residual(&self, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
        self.mul_vec(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm(r)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `a x = b`, using `x` as the initial guess for iterative methods.
pub fn solve(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats, SolveError> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(SolveError::DimensionMismatch { matrix: n, vector: b.len().min(x.len()) });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { method: Method::Direct, iterations: 0, residual: 0.0 });
    }
    if n < 3 {
        dense_solve(a, b, x)?;
        let mut r = vec![0.0; n];
        let res = a.residual(b, x, &mut r) / bnorm;
        return Ok(SolveStats { method: Method::Direct, iterations: 1, residual: res });
    }
    if a.is_cyclic_tridiagonal() {
        return tridiagonal_solve(a, b, x, bnorm);
    }
    if a.is_symmetric(1e-13) {
        pcg(a, b, x, opts, bnorm)
    } else {
        bicgstab(a, b, x, opts, bnorm)
    }
}

fn dense_solve(a: &CsrMatrix, b: &[f64], x: &mut [f64]) -> Result<(), SolveError> {
    let n = a.dim();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
    let mut rhs = b.to_vec();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        if m[p][c] == 0.0 {
            return Err(SolveError::ZeroPivot { row: c });
        }
        m.swap(c, p);
        rhs.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            rhs[r] -= f * rhs[c];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Ok(())
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(SolveError::ZeroPivot { row: 0 });
    }
    out[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i];
        if beta == 0.0 {
            return Err(SolveError::ZeroPivot { row: i });
        }
        out[i] = (rhs[i] - sub[i] * out[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let u = out[i + 1];
        out[i] -= c[i + 1] * u;
    }
    Ok(())
}

/// Thomas algorithm with a Sherman–Morrison correction for the corners.
fn tridiagonal_solve(a: &CsrMatrix, b: &[f64], x: &mut [f64], bnorm: f64) -> Result<SolveStats, SolveError> {
    let n = a.dim();
    let sub: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { a.get(i, i - 1) }).collect();
    let sup: Vec<f64> = (0..n).map(|i| if i + 1 == n { 0.0 } else { a.get(i, i + 1) }).collect();
    let mut diag = a.diagonal();
    // corner couplings
    let beta = a.get(0, n - 1);
    let alpha = a.get(n - 1, 0);
    if alpha == 0.0 && beta == 0.0 {
        thomas(&sub, &diag, &sup, b, x)?;
    } else {
        let gamma = -diag[0];
        diag[0] -= gamma;
        diag[n - 1] -= alpha * beta / gamma;
        thomas(&sub, &diag, &sup, b, x)?;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let mut z = vec![0.0; n];
        thomas(&sub, &diag, &sup, &u, &mut z)?;
        let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi -= fact * zi;
        }
    }
    let mut r = vec![0.0; n];
    let res = a.residual(b, x, &mut r) / bnorm;
    Ok(SolveStats { method: Method::Direct, iterations: 1, residual: res })
}

fn jacobi(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

const HISTORY_CAP: usize = 64;

fn push_history(h: &mut Vec<f64>, v: f64) {
    if h.len() == HISTORY_CAP {
        h.remove(0);
    }
    h.push(v);
}

fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: &SolverOptions, bnorm: f64) -> Result<SolveStats, SolveError> {
    let n = a.dim();
    let max_iter = opts.max_iter.unwrap_or(10 * n + 100);
    let dinv = jacobi(a);
    let mut r = vec![0.0; n];
    let mut res = a.residual(b, x, &mut r) / bnorm;
    let mut history = vec![res];
    if res <= opts.rel_tol {
        return Ok(SolveStats { method: Method::ConjugateGradient, iterations: 0, residual: res });
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SolveError::Breakdown { method: "conjugate gradient", iterations: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        push_history(&mut history, res);
        if res <= opts.rel_tol {
            // guard against drift of the recursive residual
            let true_res = a.residual(b, x, &mut ap) / bnorm;
            if true_res <= opts.rel_tol * 10.0 {
                return Ok(SolveStats { method: Method::ConjugateGradient, iterations: it, residual: true_res });
            }
            r.copy_from_slice(&ap);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NotConverged { method: "conjugate gradient", iterations: max_iter, residual: res, history })
}

fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: &SolverOptions, bnorm: f64) -> Result<SolveStats, SolveError> {
    let n = a.dim();
    let max_iter = opts.max_iter.unwrap_or(10 * n + 100);
    let dinv = jacobi(a);
    let mut r = vec![0.0; n];
    let mut res = a.residual(b, x, &mut r) / bnorm;
    let mut history = vec![res];
    if res <= opts.rel_tol {
        return Ok(SolveStats { method: Method::BiCgStab, iterations: 0, residual: res });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(SolveError::Breakdown { method: "BiCGSTAB", iterations: it });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        a.mul_vec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(SolveError::Breakdown { method: "BiCGSTAB", iterations: it });
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= opts.rel_tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let true_res = a.residual(b, x, &mut t) / bnorm;
            return Ok(SolveStats { method: Method::BiCgStab, iterations: it, residual: true_res });
        }
        for i in 0..n {
            zz[i] = s[i] * dinv[i];
        }
        a.mul_vec(&zz, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        push_history(&mut history, res);
        if res <= opts.rel_tol {
            let true_res = a.residual(b, x, &mut t) / bnorm;
            if true_res <= opts.rel_tol * 10.0 {
                return Ok(SolveStats { method: Method::BiCgStab, iterations: it, residual: true_res });
            }
            r.copy_from_slice(&t);
        }
    }
    Err(SolveError::NotConverged { method: "BiCGSTAB", iterations: max_iter, residual: res, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(m: usize, shift: f64) -> CsrMatrix {
        let idx = |i: usize, j: usize| i + m * j;
        let mut t = Vec::new();
        for j in 0..m {
            for i in 0..m {
                t.push((idx(i, j), idx(i, j), 4.0 + shift));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(m * m, &t)
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplacian_2d(12, 0.0);
        let xs: Vec<f64> = (0..a.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; a.dim()];
        a.mul_vec(&xs, &mut b);
        let mut x = vec![0.0; a.dim()];
        let stats = solve(&a, &b, &mut x, &SolverOptions { rel_tol: 1e-12, max_iter: None }).unwrap();
        assert_eq!(stats.method, Method::ConjugateGradient);
        let err = xs.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let mut a = laplacian_2d(10, 0.5);
        // skew perturbation on the first off-diagonal
        let n = a.dim();
        for i in 0..n - 1 {
            if let Some(k) = a.position(i, i + 1) {
                a.values_mut()[k] += 0.3;
            }
        }
        assert!(!a.is_symmetric(1e-13));
        let xs: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&xs, &mut b);
        let mut x = vec![0.0; n];
        let stats = solve(&a, &b, &mut x, &SolverOptions { rel_tol: 1e-12, max_iter: None }).unwrap();
        assert_eq!(stats.method, Method::BiCgStab);
        let err = xs.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn cyclic_tridiagonal_direct() {
        let n = 9;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0 + 0.1 * i as f64));
            t.push((i, (i + 1) % n, -1.0));
            t.push((i, (i + n - 1) % n, -0.5));
        }
        let a = CsrMatrix::from_triplets(n, &t);
        assert!(a.is_cyclic_tridiagonal());
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&xs, &mut b);
        let mut x = vec![0.0; n];
        let stats = solve(&a, &b, &mut x, &SolverOptions::default()).unwrap();
        assert_eq!(stats.method, Method::Direct);
        assert!(stats.residual < 1e-14);
        for (u, v) in xs.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn iteration_cap_reports_history() {
        let a = laplacian_2d(20, 0.0);
        let b = vec![1.0; a.dim()];
        let mut x = vec![0.0; a.dim()];
        let err = solve(&a, &b, &mut x, &SolverOptions { rel_tol: 1e-14, max_iter: Some(3) }).unwrap_err();
        match err {
            SolveError::NotConverged { iterations, history, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pin_keeps_pattern() {
        let a0 = laplacian_2d(4, 0.0);
        let mut a = a0.clone();
        a.pin(5);
        assert_eq!(a.nnz(), a0.nnz());
        assert_eq!(a.get(5, 5), 1.0);
        assert_eq!(a.get(5, 4), 0.0);
        assert_eq!(a.get(4, 5), 0.0);
    }
}

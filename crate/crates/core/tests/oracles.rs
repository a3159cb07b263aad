//! Cell, macro and fine-scale solvers against independent reference computations.

use homog_core::cell::{cell_flux_tensor, solve_elliptic_cell, solve_periodic_parabolic_cell, CellGrid, CellOptions, FnCoefficient};
use homog_core::coeffs::{CoefficientField, FineScaleProblem, LayerVariable, Profile};
use homog_core::effective::{compute_effective_tensor, NumericsConfig};
use homog_core::finescale::{solve_fine, FineScaleOptions};
use homog_core::macroscale::{solve_homogenized, MacroMesh};
use homog_core::mesh::BoxDomain;
use homog_core::regime::ScaleExponents;
use homog_core::tensor::Tensor;
use std::f64::consts::PI;
use std::sync::Arc;

/// Effective coefficient of the time-periodic cell problem for a = 2 + sin 2π(y + s),
/// from `oracle_travelling_wave(1024, 4096)`.
const TRAVELLING_WAVE_B: f64 = 1.7341720845731547;

fn travelling_wave(y: f64, s: f64) -> f64 {
    2.0 + (2.0 * PI * (y + s)).sin()
}

/// Solves the periodic tridiagonal system with sub/super diagonal `off[i]` coupling i and i+1.
fn cyclic_solve(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    // Sherman-Morrison around a plain Thomas sweep
    let n = diag.len();
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= off[n - 1] * off[n - 1] / gamma;
    let thomas = |b: &[f64]| {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = off[0] / d[0];
        x[0] = b[0] / d[0];
        for i in 1..n {
            let m = d[i] - off[i - 1] * c[i - 1];
            if i < n - 1 {
                c[i] = off[i] / m;
            }
            x[i] = (b[i] - off[i - 1] * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let x = thomas(rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = off[n - 1];
    let z = thomas(&u);
    let vx = x[0] + off[n - 1] / gamma * x[n - 1];
    let vz = z[0] + off[n - 1] / gamma * z[n - 1];
    x.iter().zip(&z).map(|(a, b)| a - vx / (1.0 + vz) * b).collect()
}

/// Finite differences with Crank-Nicolson in s, periodic in (y, s). Returns ∫∫ a(1 + ∂_y w).
fn oracle_travelling_wave(n: usize, m: usize) -> f64 {
    let h = 1.0 / n as f64;
    let dt = 1.0 / m as f64;
    let mid = |s: f64| (0..n).map(|i| travelling_wave((i as f64 + 0.5) * h, s)).collect::<Vec<_>>();
    // (L w)_i = [a_{i+½}(w_{i+1} − w_i + h) − a_{i−½}(w_i − w_{i−1} + h)] / h²
    let apply = |a: &[f64], w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
                (a[i] * (w[ip] - w[i] + h) - a[im] * (w[i] - w[im] + h)) / (h * h)
            })
            .collect()
    };
    let mean_flux = |a: &[f64], w: &[f64]| (0..n).map(|i| a[i] * (1.0 + (w[(i + 1) % n] - w[i]) / h)).sum::<f64>() * h;
    let mut w = vec![0.0; n];
    let mut previous = f64::NAN;
    for _period in 0..50 {
        let mut a_old = mid(0.0);
        let mut b = 0.5 * mean_flux(&a_old, &w);
        for k in 1..=m {
            let a_new = mid(k as f64 * dt);
            let lw = apply(&a_old, &w);
            let mut rhs: Vec<f64> = (0..n).map(|i| w[i] + 0.5 * dt * lw[i]).collect();
            let c = 0.5 * dt / (h * h);
            let diag: Vec<f64> = (0..n).map(|i| 1.0 + c * (a_new[i] + a_new[(i + n - 1) % n])).collect();
            let off: Vec<f64> = (0..n).map(|i| -c * a_new[i]).collect();
            for i in 0..n {
                rhs[i] += 0.5 * dt * (a_new[i] - a_new[(i + n - 1) % n]) / h;
            }
            w = cyclic_solve(&diag, &off, &rhs);
            let weight = if k == m { 0.5 } else { 1.0 };
            b += weight * mean_flux(&a_new, &w);
            a_old = a_new;
        }
        b *= dt;
        if (b - previous).abs() < 1e-14 {
            return b;
        }
        previous = b;
    }
    previous
}

fn parabolic_b(nodes: usize, steps: usize) -> f64 {
    let grid = CellGrid::new(1, nodes, steps).unwrap();
    let coef = FnCoefficient::new(1, true, |y: &[f64], s| Tensor::scaled_identity(1, travelling_wave(y[0], s)));
    let opts = CellOptions { periodic_tol: 1e-13, ..Default::default() };
    let c = solve_periodic_parabolic_cell(&coef, 0, &grid, &opts).unwrap();
    cell_flux_tensor(&[c]).unwrap().mean.get(0, 0)
}

#[test]
fn oracle_reproduces_frozen_travelling_wave_value() {
    let b = oracle_travelling_wave(256, 512);
    assert!((b - TRAVELLING_WAVE_B).abs() < 1e-4, "{b}");
}

#[test]
fn parabolic_cell_matches_travelling_wave_oracle() {
    let coarse = (parabolic_b(64, 256) - TRAVELLING_WAVE_B).abs();
    let fine = (parabolic_b(64, 1024) - TRAVELLING_WAVE_B).abs();
    assert!(fine < 1e-4, "{fine}");
    // implicit Euler: first order in the cell time step
    let order = (coarse / fine).log2() / 2.0;
    assert!(order > 0.8 && order < 1.3, "order {order} ({coarse:.3e} -> {fine:.3e})");
}

#[test]
fn separable_parabolic_cell_keeps_the_static_corrector() {
    // α(y)β(s) with mean β = 2: b = harmonic(α)·2 = 2√3
    let grid = CellGrid::new(1, 256, 32).unwrap();
    let coef = FnCoefficient::new(1, true, |y: &[f64], s| {
        Tensor::scaled_identity(1, (2.0 + (2.0 * PI * y[0]).sin()) * (2.0 + (2.0 * PI * s).sin()))
    });
    let c = solve_periodic_parabolic_cell(&coef, 0, &grid, &CellOptions::default()).unwrap();
    let b = cell_flux_tensor(&[c]).unwrap().mean.get(0, 0);
    assert!((b - 2.0 * 3f64.sqrt()).abs() < 1e-4, "{b}");
}

#[test]
fn laminate_2d_converges_at_second_order() {
    let coef = FnCoefficient::new(2, false, |y: &[f64], _| Tensor::scaled_identity(2, 2.0 + (2.0 * PI * y[0]).sin()));
    let opts = CellOptions::default();
    let errors: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&n| {
            let grid = CellGrid::new(2, n, 4).unwrap();
            let cs: Vec<_> = (0..2).map(|j| solve_elliptic_cell(&coef, j, &grid, &opts).unwrap()).collect();
            let b = cell_flux_tensor(&cs).unwrap().mean;
            assert!(b.get(0, 1).abs() < 1e-10 && b.get(1, 0).abs() < 1e-10);
            assert!((b.get(1, 1) - 2.0).abs() < 1e-10, "arithmetic mean along layers: {}", b.get(1, 1));
            (b.get(0, 0) - 3f64.sqrt()).abs()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order}: {errors:?}");
    }
}

#[test]
fn aligned_layers_give_the_exact_harmonic_mean() {
    let field = CoefficientField::layered(1, LayerVariable::Y1, 0, vec![0.5], vec![1.0, 4.0]).unwrap();
    let num = NumericsConfig { inner_nodes: 8, outer_nodes: 16, time_steps: 8, s1_samples: 2, s2_samples: 2, ..Default::default() };
    let r = compute_effective_tensor(&field, &ScaleExponents::new(1.0, 2.0, 3.0).unwrap(), &num).unwrap();
    assert!((r.tensor.b.get(0, 0) - 1.6).abs() < 1e-12, "{}", r.tensor.b.get(0, 0));
}

#[test]
fn reiterated_product_in_two_dimensions() {
    let field = CoefficientField::separable(
        Tensor::identity(2),
        Profile::Sine { offset: 2.0, amplitude: 1.0, axis: 0 },
        Profile::Sine { offset: 2.0, amplitude: 1.0, axis: 1 },
        Profile::One,
        Profile::One,
    )
    .unwrap();
    let num = NumericsConfig { inner_nodes: 32, outer_nodes: 32, time_steps: 4, s1_samples: 1, s2_samples: 1, ..Default::default() };
    let r = compute_effective_tensor(&field, &ScaleExponents::new(1.0, 2.0, 3.0).unwrap(), &num).unwrap();
    let b = r.tensor.b;
    let s3 = 3f64.sqrt();
    // inner stage: (2 + sin 2πy1[0])·diag(2, √3); outer: harmonic along 0, mean along 1
    assert!((b.get(0, 0) - 2.0 * s3).abs() < 2e-3, "{b:?}");
    assert!((b.get(1, 1) - 2.0 * s3).abs() < 2e-3, "{b:?}");
    assert!(b.get(0, 1).abs() < 1e-9);
}

fn l2_nodal_error(n: usize) -> f64 {
    let b = Tensor::identity(2);
    let f = |x: &[f64], _t: f64| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin();
    let mesh = MacroMesh::new(BoxDomain::unit(2), n, vec![0.0]).unwrap();
    let sol = solve_homogenized(&b, &f, &mesh, 1e-12).unwrap();
    let sm = &sol.mesh;
    let sq: f64 = (0..sm.num_nodes())
        .map(|i| {
            let x = sm.node_coords(i);
            (sol.values[0][i] - (PI * x[0]).sin() * (PI * x[1]).sin()).powi(2)
        })
        .sum();
    (sq / sm.num_nodes() as f64).sqrt()
}

#[test]
fn macro_solver_converges_at_second_order() {
    let errors: Vec<f64> = [9usize, 17, 33].iter().map(|&n| l2_nodal_error(n)).collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order}: {errors:?}");
    }
}

/// ε^p u_t = u_xx + 1 on (0,1), u(0) = 0, by its sine series.
fn heat_series(x: f64, t: f64, eps_p: f64) -> f64 {
    let mut u = x * (1.0 - x) / 2.0;
    for k in (1..400).step_by(2) {
        let k = k as f64;
        u -= 4.0 / (k * PI).powi(3) * (-(k * PI).powi(2) * t / eps_p).exp() * (k * PI * x).sin();
    }
    u
}

fn fine_heat_error(resolution_factor: f64) -> f64 {
    let exps = ScaleExponents::new(1.0, 2.0, 3.0).unwrap();
    let field = CoefficientField::constant(Tensor::identity(1)).unwrap();
    let problem = FineScaleProblem::new(field, exps, Arc::new(|_: &[f64], _| 1.0), Arc::new(|_: &[f64]| 0.0), BoxDomain::unit(1), 0.2).unwrap();
    let opts = FineScaleOptions { resolution_factor, ..Default::default() };
    let sol = solve_fine(&problem, 0.5, &opts).unwrap();
    let mut worst = 0.0f64;
    for (k, &t) in sol.times.iter().enumerate() {
        for i in 0..sol.mesh.num_nodes() {
            let x = sol.mesh.node_coords(i)[0];
            worst = worst.max((sol.values[k][i] - heat_series(x, t, 0.5)).abs());
        }
    }
    worst
}

#[test]
fn fine_solver_matches_heat_series() {
    let coarse = fine_heat_error(16.0);
    let fine = fine_heat_error(32.0);
    assert!(fine < 2e-3, "{fine}");
    let order = (coarse / fine).log2();
    assert!(order > 0.8, "order {order} ({coarse:.3e} -> {fine:.3e})");
}


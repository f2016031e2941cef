//! Target density on the constraint manifold.
//!
//! With `J = ∂g_y/∂u` and `L = chol(J·Jᵀ)` the unnormalized log-density is
//! `log ρ(u) − Σ log L_ii`. Its gradient is `∇log ρ(u) − r` where
//! `r_i = Σ_kj W_kj ∂²g_k/∂u_i∂u_j` and `W = L⁻ᵀ·L⁻¹·J`.

use crate::autodiff::second_contraction;
use crate::error::Result;
use crate::linalg::{
    axpy, cholesky, cholesky_solve, dot, solve_triangular_matrix, DenseMatrix, LowerTriangular,
};
use crate::model::{constraint_jacobian, GeneratorModel, NoiseStructure, StructureKind};

#[derive(Debug, Clone)]
pub struct TargetEvaluation {
    pub log_pi: f64,
    pub grad_log_pi: Vec<f64>,
    pub jacobian: DenseMatrix,
    pub factor: LowerTriangular,
}

/// Log-density value together with the factorization it was computed from.
#[derive(Debug, Clone)]
pub struct LogTarget {
    pub log_pi: f64,
    pub jacobian: DenseMatrix,
    pub factor: LowerTriangular,
}

/// `log ρ(u) − Σ log L_ii`, reusing `cached = (J, L)` when it belongs to `u`.
pub fn log_target(
    model: &GeneratorModel,
    u: &[f64],
    cached: Option<(DenseMatrix, LowerTriangular)>,
) -> Result<LogTarget> {
    let (jacobian, factor) = match cached {
        Some(jl) => jl,
        None => constraint_jacobian(model, u)?,
    };
    Ok(LogTarget {
        log_pi: log_pi_from_factor(model, u, &factor),
        jacobian,
        factor,
    })
}

pub fn log_pi_from_factor(model: &GeneratorModel, u: &[f64], l: &LowerTriangular) -> f64 {
    model.log_rho(u) - l.log_diag_sum()
}

/// Gradient of [`log_target`] at `u` given the factorization there.
pub fn grad_log_target(
    model: &GeneratorModel,
    u: &[f64],
    j: &DenseMatrix,
    l: &LowerTriangular,
) -> Result<Vec<f64>> {
    let w = match structured_gram_solve(j, model.structure()) {
        Some(w) => w,
        None => dense_gram_solve(j, l)?,
    };
    let r = second_contraction(model.g_y(), u, &w)?;
    let mut g = model.grad_log_rho(u);
    for (gi, ri) in g.iter_mut().zip(r) {
        *gi -= ri;
    }
    Ok(g)
}

/// `(J·Jᵀ)⁻¹·J` by two triangular solves with `L`.
pub fn dense_gram_solve(j: &DenseMatrix, l: &LowerTriangular) -> Result<DenseMatrix> {
    solve_triangular_matrix(l, &solve_triangular_matrix(l, j, false)?, true)
}

/// `(J·Jᵀ)⁻¹·J` from the square triangular noise block `B` and the global
/// columns `G`, using `J·Jᵀ = B·Bᵀ + G·Gᵀ` and the Woodbury identity:
///
/// ```text
/// H = B⁻¹G,  P = B⁻ᵀH,  C = I + GᵀP
/// W_G = P·C⁻¹,  W_B = B⁻ᵀ − W_G·Hᵀ
/// ```
///
/// Returns `None` under the same conditions as the structured factor.
pub fn structured_gram_solve(j: &DenseMatrix, s: &NoiseStructure) -> Option<DenseMatrix> {
    let n = j.rows();
    let g = s.global_indices.len();
    if s.kind == StructureKind::Dense || s.noise_indices.len() != n {
        return None;
    }
    let full = s.kind == StructureKind::Autoregressive;
    let mut bm = vec![0.0; n * n];
    let mut gm = vec![0.0; g * n];
    for i in 0..n {
        let row = j.row(i);
        for (k, &col) in s.noise_indices.iter().enumerate().take(if full { i + 1 } else { n }) {
            if full || k == i {
                bm[i * n + k] = row[col];
            }
        }
        for (a, &col) in s.global_indices.iter().enumerate() {
            gm[a * n + i] = row[col];
        }
    }
    // B⁻¹ by forward substitution, row-major and lower triangular
    let mut binv = vec![0.0; n * n];
    for i in 0..n {
        let d = bm[i * n + i];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let (done, rest) = binv.split_at_mut(i * n);
        let row = &mut rest[..n];
        row[i] = 1.0;
        if full {
            for k in 0..i {
                let bik = bm[i * n + k];
                if bik != 0.0 {
                    axpy(-bik, &done[k * n..k * n + k + 1], &mut row[..=k]);
                }
            }
        }
        row[..=i].iter_mut().for_each(|x| *x /= d);
    }
    // column-major g×n copies: H_a = B⁻¹·G_a and P_a = B⁻ᵀ·H_a
    let mut h = vec![0.0; g * n];
    let mut p = vec![0.0; g * n];
    for a in 0..g {
        let ga = &gm[a * n..(a + 1) * n];
        let ha = &mut h[a * n..(a + 1) * n];
        for (i, hi) in ha.iter_mut().enumerate() {
            *hi = dot(&binv[i * n..i * n + i + 1], &ga[..=i]);
        }
        let pa = &mut p[a * n..(a + 1) * n];
        for i in 0..n {
            axpy(ha[i], &binv[i * n..i * n + i + 1], &mut pa[..=i]);
        }
    }
    let c = DenseMatrix::from_fn(g, g, |a, b| {
        let eye = if a == b { 1.0 } else { 0.0 };
        eye + dot(&gm[a * n..(a + 1) * n], &p[b * n..(b + 1) * n])
    });
    let lc = cholesky(&c).ok()?;
    let mut w = DenseMatrix::zeros(n, j.cols());
    let mut wb = vec![0.0; n];
    let mut pi = vec![0.0; g];
    for i in 0..n {
        for (a, v) in pi.iter_mut().enumerate() {
            *v = p[a * n + i];
        }
        let wg = cholesky_solve(&lc, &pi).ok()?;
        wb.iter_mut().for_each(|x| *x = 0.0);
        for k in i..n {
            wb[k] = binv[k * n + i];
        }
        for (a, &wga) in wg.iter().enumerate() {
            axpy(-wga, &h[a * n..(a + 1) * n], &mut wb);
        }
        let row = w.row_mut(i);
        for (a, &col) in s.global_indices.iter().enumerate() {
            row[col] = wg[a];
        }
        for (k, &col) in s.noise_indices.iter().enumerate() {
            row[col] = wb[k];
        }
    }
    w.as_slice().iter().all(|x| x.is_finite()).then_some(w)
}

/// Value, gradient and factorization in one call.
pub fn evaluate_target(model: &GeneratorModel, u: &[f64]) -> Result<TargetEvaluation> {
    let LogTarget {
        log_pi,
        jacobian,
        factor,
    } = log_target(model, u, None)?;
    let grad_log_pi = grad_log_target(model, u, &jacobian, &factor)?;
    Ok(TargetEvaluation {
        log_pi,
        grad_log_pi,
        jacobian,
        factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Dual, Scalar, ScalarFunction};
    use crate::model::StandardNormal;
    use crate::models::{
        circle_model, linear_gaussian_model, lotka_volterra_model,
        lotka_volterra_truth, LotkaVolterraObserved, LotkaVolterraSpec, LV_TRUE_PARAMETERS,
    };

    #[test]
    fn circle_density_is_constant_on_the_circle() {
        let m = circle_model();
        let a = log_target(&m, &[1.0, 0.0], None).unwrap().log_pi;
        for th in [0.3f64, 1.7, 2.9, -2.2] {
            let b = log_target(&m, &[th.cos(), th.sin()], None).unwrap().log_pi;
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn circle_gradient_closed_form() {
        // log π = −‖u‖²/2 − log(2‖u‖), so ∇ = −u − u/‖u‖²
        let m = circle_model();
        let e = evaluate_target(&m, &[1.0, 0.0]).unwrap();
        assert!((e.grad_log_pi[0] + 2.0).abs() < 1e-14);
        assert!(e.grad_log_pi[1].abs() < 1e-14);
    }

    #[test]
    fn linear_constraint_has_constant_gram_term() {
        let m = linear_gaussian_model(&[1.0, 1.0]).unwrap();
        for u in [[1.0, 2.0], [-0.5, 3.5], [4.0, -1.0]] {
            let e = evaluate_target(&m, &u).unwrap();
            let expected = -0.5 * (u[0] * u[0] + u[1] * u[1]) - 0.5 * 2f64.ln();
            assert!((e.log_pi - expected).abs() < 1e-14);
            assert_eq!(e.grad_log_pi, vec![-u[0], -u[1]]);
        }
    }

    #[test]
    fn shift_in_log_rho_shifts_log_pi_only() {
        let spec = LotkaVolterraSpec {
            n_steps: 4,
            ..Default::default()
        };
        let (u, _) = lotka_volterra_truth(&spec, &LV_TRUE_PARAMETERS, 5).unwrap();
        let plain = lotka_volterra_model(spec).unwrap();
        let shifted = crate::model::GeneratorModel::new(
            "shifted",
            Box::new(crate::models::LotkaVolterraAnalytic { spec }),
            Box::new(crate::autodiff::Taped(LotkaVolterraObserved { spec })),
            Box::new(StandardNormal { log_offset: 3.25 }),
        )
        .unwrap()
        .with_structure(plain.structure().clone())
        .unwrap();
        let a = evaluate_target(&plain, &u).unwrap();
        let b = evaluate_target(&shifted, &u).unwrap();
        assert!((b.log_pi - a.log_pi - 3.25).abs() < 1e-10);
        assert_eq!(a.grad_log_pi, b.grad_log_pi);
    }

    /// Cholesky factorization over any scalar type, for differentiating
    /// `Σ log L_ii` directly.
    fn generic_log_det_half<T: Scalar>(g: &[Vec<T>]) -> T {
        let n = g.len();
        let mut l = vec![vec![T::constant(0.0); n]; n];
        let mut acc = T::constant(0.0);
        for i in 0..n {
            for k in 0..=i {
                let mut s = g[i][k];
                for p in 0..k {
                    s = s - l[i][p] * l[k][p];
                }
                if i == k {
                    l[i][i] = s.sqrt();
                    acc = acc + l[i][i].ln();
                } else {
                    l[i][k] = s / l[k][k];
                }
            }
        }
        acc
    }

    #[test]
    fn gradient_matches_differentiated_cholesky() {
        // d/du_i of Σ log L_ii by pushing Dual numbers through the Jacobian
        // (forward-over-forward) and then through a Cholesky factorization.
        let spec = LotkaVolterraSpec {
            n_steps: 3,
            ..Default::default()
        };
        let (u, _) = lotka_volterra_truth(&spec, &LV_TRUE_PARAMETERS, 8).unwrap();
        let model = lotka_volterra_model(spec).unwrap();
        let f = LotkaVolterraObserved { spec };
        let m = spec.input_dim();
        let n = spec.observed_dim();
        let e = evaluate_target(&model, &u).unwrap();
        for i in 0..m {
            // J(u + ε e_i) with entries as Dual in ε
            let mut jac = vec![vec![Dual::<f64>::constant(0.0); m]; n];
            for j in 0..m {
                let x: Vec<Dual<Dual<f64>>> = (0..m)
                    .map(|k| {
                        let di = if k == i { 1.0 } else { 0.0 };
                        let dj = if k == j { 1.0 } else { 0.0 };
                        Dual::new(Dual::new(u[k], di), Dual::new(dj, 0.0))
                    })
                    .collect();
                for (row, y) in jac.iter_mut().zip(f.eval(&x)) {
                    row[j] = y.d;
                }
            }
            let g: Vec<Vec<Dual<f64>>> = (0..n)
                .map(|a| {
                    (0..n)
                        .map(|b| {
                            (0..m).fold(Dual::constant(0.0), |s, k| s + jac[a][k] * jac[b][k])
                        })
                        .collect()
                })
                .collect();
            let d = generic_log_det_half(&g).d;
            let expected = -u[i] - d;
            let got = e.grad_log_pi[i];
            assert!(
                (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                "input {i}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn structured_and_dense_gram_solves_agree() {
        for (t, seed) in [(3, 1), (25, 2), (50, 3)] {
            let spec = LotkaVolterraSpec {
                n_steps: t,
                ..Default::default()
            };
            let (u, _) = lotka_volterra_truth(&spec, &LV_TRUE_PARAMETERS, seed).unwrap();
            let model = lotka_volterra_model(spec).unwrap();
            let (j, l) = constraint_jacobian(&model, &u).unwrap();
            let fast = structured_gram_solve(&j, model.structure()).unwrap();
            let slow = dense_gram_solve(&j, &l).unwrap();
            let scale = slow.max_abs();
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert!((a - b).abs() <= 1e-8 * scale, "T={t}: {a} vs {b}");
            }
        }
        let toy = crate::models::toy1d_model();
        let (j, l) = constraint_jacobian(&toy, &[0.7, -0.2]).unwrap();
        let fast = structured_gram_solve(&j, toy.structure()).unwrap();
        let slow = dense_gram_solve(&j, &l).unwrap();
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(structured_gram_solve(&j, &NoiseStructure::dense()).is_none());
    }

    #[test]
    fn gradient_matches_finite_differences_on_circle_off_manifold() {
        let m = circle_model();
        let u = [0.8, -1.3];
        let e = evaluate_target(&m, &u).unwrap();
        for i in 0..2 {
            let h = 1e-6 * (1.0 + u[i].abs());
            let mut up = u;
            let mut dn = u;
            up[i] += h;
            dn[i] -= h;
            let fd = (log_target(&m, &up, None).unwrap().log_pi
                - log_target(&m, &dn, None).unwrap().log_pi)
                / (2.0 * h);
            assert!((fd - e.grad_log_pi[i]).abs() < 1e-7);
        }
    }
}

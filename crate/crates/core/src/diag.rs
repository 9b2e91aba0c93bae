//! Validation utilities: an independent fixed-step RK4 reference integrator,
//! a finite-difference symplecticity check and a log-log slope fit. These
//! back the structural tests and are deliberately unrelated to the splitting
//! machinery they validate.

use crate::flows::PhaseState;

/// Classic RK4 with `n_steps` fixed steps over total time `t_total`.
/// `deriv(y, dy)` writes the time derivative of `y` into `dy`.
pub fn rk4_integrate<F>(deriv: &F, y: &mut [f64], t_total: f64, n_steps: usize)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y.len();
    let h = t_total / n_steps as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..n_steps {
        deriv(y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Max-norm of `J^T S J - S` where `J` is the central finite-difference
/// Jacobian of `map` at `x` and `S` the canonical symplectic form on the
/// `(q, p)` layout of [`PhaseState`].
pub fn symplecticity_defect<F>(map: &F, x: &PhaseState, h: f64) -> f64
where
    F: Fn(&PhaseState) -> PhaseState,
{
    let n = x.q.len();
    let dim = 2 * n;
    let get = |s: &PhaseState, i: usize| if i < n { s.q[i] } else { s.p[i - n] };
    let set = |s: &mut PhaseState, i: usize, v: f64| {
        if i < n {
            s.q[i] = v;
        } else {
            s.p[i - n] = v;
        }
    };
    // columns of the Jacobian
    let mut jac = vec![vec![0.0; dim]; dim];
    for col in 0..dim {
        let mut xp = x.clone();
        let mut xm = x.clone();
        let base = get(x, col);
        let step = h * base.abs().max(1.0);
        set(&mut xp, col, base + step);
        set(&mut xm, col, base - step);
        let fp = map(&xp);
        let fm = map(&xm);
        for row in 0..dim {
            jac[row][col] = (get(&fp, row) - get(&fm, row)) / (2.0 * step);
        }
    }
    // S[i][j]: S[i][i+n] = 1, S[i+n][i] = -1
    let s_apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = v[n + i];
            out[n + i] = -v[i];
        }
    };
    let mut defect = 0.0f64;
    let mut sj_col = vec![0.0; dim];
    let mut col_j = vec![0.0; dim];
    for j in 0..dim {
        for r in 0..dim {
            col_j[r] = jac[r][j];
        }
        s_apply(&col_j, &mut sj_col);
        for i in 0..dim {
            // (J^T S J)_{ij} = column_i(J) . S column_j(J)
            let mut v = 0.0;
            for r in 0..dim {
                v += jac[r][i] * sj_col[r];
            }
            let want = if j == i + n {
                1.0
            } else if i == j + n {
                -1.0
            } else {
                0.0
            };
            defect = defect.max((v - want).abs());
        }
    }
    defect
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_harmonic_oscillator() {
        let deriv = |y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut y = [1.0, 0.0];
        rk4_integrate(&deriv, &mut y, std::f64::consts::TAU, 10_000);
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!(y[1].abs() < 1e-12);
    }

    #[test]
    fn slope_fit_recovers_power() {
        let xs = [0.1f64, 0.2, 0.4, 0.8];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powi(4)).collect();
        assert!((fit_loglog_slope(&xs, &ys) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn shear_map_is_symplectic_rotation_scaled_is_not() {
        use crate::flows::PhaseState;
        let shear = |s: &PhaseState| {
            let mut o = s.clone();
            o.p[0] += 0.3 * s.q[0] * s.q[0];
            o
        };
        let x = PhaseState::new(vec![0.7], vec![-0.4]);
        assert!(symplecticity_defect(&shear, &x, 1e-6) < 1e-9);
        let dilate = |s: &PhaseState| {
            let mut o = s.clone();
            o.q[0] *= 1.1;
            o.p[0] *= 1.1;
            o
        };
        assert!(symplecticity_defect(&dilate, &x, 1e-6) > 0.1);
    }
}

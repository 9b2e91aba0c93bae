use sympsplit::coeffs::{registry_lookup, MethodKind};
use sympsplit::prec::{BigFloat, Scalar};
use sympsplit::solver::{build_system, lu_solve};

// Levenberg-Marquardt in BigFloat on the square system
#[test]
fn probe_lm_polish() {
    let m = registry_lookup("ABAH1064").unwrap();
    let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
    let exact: Vec<BigFloat> = m
        .a_kernel()
        .iter()
        .chain(m.b_kernel())
        .map(|v| v.at_digits(50))
        .collect();
    let bump = BigFloat::parse("1e-3", 50).unwrap();
    let mut x: Vec<BigFloat> = exact
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v + &bump } else { v - &bump })
        .collect();
    let n = x.len();
    let mut lambda = 1e-6f64;
    for it in 0..60 {
        let (res, jac) = system.residual_and_jacobian(&x);
        let ssq: f64 = res.iter().map(|v| v.mag_f64().powi(2)).sum();
        println!("it {it}: ssq {ssq:.3e} lambda {lambda:.1e}");
        if ssq < 1e-80 {
            break;
        }
        // normal equations (J^T J + lambda I) dx = J^T r
        let mut jtj = vec![vec![BigFloat::zero(50); n]; n];
        let mut jtr = vec![BigFloat::zero(50); n];
        for i in 0..n {
            for j in 0..n {
                let mut s = BigFloat::zero(50);
                for k in 0..n {
                    s = s + &jac[k][i] * &jac[k][j];
                }
                jtj[i][j] = s;
            }
            let mut s = BigFloat::zero(50);
            for k in 0..n {
                s = s + &jac[k][i] * &res[k];
            }
            jtr[i] = s;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut m2 = jtj.clone();
            let lam = BigFloat::from_f64(lambda, 50);
            for i in 0..n {
                m2[i][i] = &m2[i][i] + &lam;
            }
            let Some(dx) = lu_solve(m2, jtr.clone()) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<BigFloat> = x.iter().zip(&dx).map(|(a, b)| a - b).collect();
            let tssq: f64 = system
                .residual(&trial)
                .iter()
                .map(|v| v.mag_f64().powi(2))
                .sum();
            if tssq < ssq {
                x = trial;
                lambda = (lambda / 3.0).max(1e-40);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            println!("LM stalled");
            break;
        }
    }
    let dist = x
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs().to_f64())
        .fold(0.0, f64::max);
    println!("distance to table root after LM: {dist:.3e}");
}

// GN feasibility probe for x0 in f64
#[test]
fn probe_gn_feasibility() {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    // f1 with a3 = a4 = 0: unknowns y = (a1,a2,a5,b1..b5)
    let f1 = |y: &[f64]| -> Vec<f64> {
        let x = vec![y[0], y[1], 0.0, 0.0, y[2], y[3], y[4], y[5], y[6], y[7]];
        system.residual(&x)[..7].to_vec()
    };
    for start in 0..6 {
        let mut y: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.7..0.7)).collect();
        let mut last = f64::INFINITY;
        for it in 0..100 {
            let r = f1(&y);
            let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if it % 10 == 0 || rn < 1e-12 {
                println!("start {start} it {it}: |r| {rn:.3e}");
            }
            if rn < 1e-12 {
                break;
            }
            last = rn;
            let mut jac = vec![vec![0.0f64; 8]; 7];
            for col in 0..8 {
                let h = 1e-7 * y[col].abs().max(1.0);
                let mut yp = y.clone();
                yp[col] += h;
                let rp = f1(&yp);
                for row in 0..7 {
                    jac[row][col] = (rp[row] - r[row]) / h;
                }
            }
            let mut jjt = vec![vec![0.0f64; 7]; 7];
            for i in 0..7 {
                for j in 0..7 {
                    jjt[i][j] = (0..8).map(|k| jac[i][k] * jac[j][k]).sum();
                }
            }
            let Some(w) = lu_solve(jjt, r.clone()) else {
                println!("start {start}: singular JJT at it {it}");
                break;
            };
            let dy: Vec<f64> = (0..8)
                .map(|k| (0..7).map(|i| jac[i][k] * w[i]).sum())
                .collect();
            let mut damp = 1.0;
            let mut ok = false;
            for _ in 0..20 {
                let trial: Vec<f64> = y.iter().zip(&dy).map(|(v, d)| v - damp * d).collect();
                let tn = f1(&trial).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if tn.is_finite() && tn < rn {
                    y = trial;
                    ok = true;
                    break;
                }
                damp *= 0.5;
            }
            if !ok {
                println!("start {start}: stalled at |r| {rn:.3e} it {it}");
                break;
            }
        }
        let _ = last;
    }
}

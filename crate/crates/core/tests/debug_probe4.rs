use sympsplit::coeffs::MethodKind;
use sympsplit::solver::{build_system, lm_f64};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

#[test]
fn probe_mu_continuation() {
    let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
    let f1 = |y: &[f64]| -> Vec<f64> {
        let x = vec![y[0], y[1], 0.0, 0.0, y[2], y[3], y[4], y[5], y[6], y[7]];
        system.residual(&x)[..7].to_vec()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for start in 0..8 {
        let mut y: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.7..0.7)).collect();
        for mu in [1e-1f64, 1e-2, 1e-3, 1e-5, 1e-7, 1e-9, 1e-12, 0.0] {
            let smu = mu.sqrt();
            let stacked = |y: &[f64]| -> Vec<f64> {
                let mut r = f1(y);
                r.extend(y.iter().map(|v| smu * v));
                r
            };
            let (ynew, ssq) = lm_f64(&stacked, &y, 400, 1e-26 + mu * 1e-10);
            y = ynew;
            if mu == 0.0 || mu == 1e-1 || mu == 1e-7 {
                let feas = f1(&y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                println!("start {start} mu {mu:.0e}: ssq {ssq:.3e} feas {feas:.3e}");
            }
        }
        let feas = f1(&y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let obj: f64 = y.iter().map(|v| v * v).sum();
        println!("start {start}: FINAL feas {feas:.3e} obj {obj:.6}");
    }
}

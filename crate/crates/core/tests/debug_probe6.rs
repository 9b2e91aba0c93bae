use sympsplit::coeffs::MethodKind;
use sympsplit::solver::{build_system, solve_x0};

#[test]
fn probe_x0_run() {
    let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
    match solve_x0(&system, &[2, 3], 1, 50) {
        Ok(x0) => {
            println!("x0:");
            for v in &x0 {
                println!("  {}", v.to_f64());
            }
            let res = system.residual(&x0);
            use sympsplit::prec::Scalar;
            let f1n = res[..7].iter().map(|v| v.mag_f64()).fold(0.0f64, f64::max);
            println!("f1 norm {f1n:.3e}");
        }
        Err(e) => println!("solve_x0 error: {e}"),
    }
}

//! Re-derivation of splitting-method coefficients.
//!
//! Three cooperating pieces:
//!
//! - a [`PolySystem`] collects the order conditions for a stage count and
//!   generalized order as polynomial equations in the kernel coefficients
//!   (palindromic symmetry pre-substituted), partitioned into `f1`
//!   (consistency, one-part indices, the optional cubic equation) and `f2`
//!   (multi-part indices);
//! - small systems are solved outright by an exhaustive coarse grid over the
//!   consistency-reduced unknowns plus Newton polishing ([`solve_by_grid`]);
//! - larger systems run the continuation pipeline ([`solve_appendix_pipeline`]):
//!   a constrained-minimization start `x0` with two kernel `a` coefficients
//!   pinned to zero ([`solve_x0`]), then for random unit-circle `gamma` and a
//!   random orthonormal `M` the one-parameter family
//!
//!   ```text
//!   f1(x) = 0,        t f2(x) + (1 - t) gamma M (x - x0) = 0
//!   ```
//!
//!   is tracked in complex arithmetic from `t = 0` to `t = 1`
//!   ([`track_homotopy`]); real endpoints are Newton-polished to the working
//!   precision.
//!
//! All solver arithmetic runs on >= 50-digit values; Jacobians come from the
//! same stage-recurrence as the condition values via forward-mode dual
//! numbers, so the residuals here agree with `orderconds` by construction.

use crate::coeffs::MethodKind;
use crate::orderconds::{condition_residual, condition_set_for, MultiIndex};
use crate::prec::{BigComplex, BigFloat, Scalar};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("over-determined configuration: {equations} equations for {unknowns} unknowns")]
    OverDetermined { equations: usize, unknowns: usize },
    #[error("Newton iteration diverged (residual {residual:e} after {iters} iterations)")]
    NewtonDivergence { residual: f64, iters: usize },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("constrained minimization failed: {0}")]
    MinimizationFailed(String),
    #[error("no real solution found within the sample budget ({attempts} paths)")]
    NoRealSolution { attempts: usize },
    #[error("grid search not applicable: {0}")]
    GridNotApplicable(String),
}

/// One equation of the order-condition system.
#[derive(Debug, Clone, PartialEq)]
pub enum Equation {
    /// `sum expanded a - 1`
    ConsistencyA,
    /// `sum expanded b - 1`
    ConsistencyB,
    /// `sum expanded b^3`
    Cubic,
    /// `LHS(m) - RHS(m)`
    Condition(MultiIndex),
}

impl std::fmt::Display for Equation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Equation::ConsistencyA => write!(f, "consistency_a"),
            Equation::ConsistencyB => write!(f, "consistency_b"),
            Equation::Cubic => write!(f, "cubic"),
            Equation::Condition(m) => write!(f, "{m}"),
        }
    }
}

/// The order-condition residual map `f(x) = 0` over kernel coefficients
/// `x = (a_1..a_p, b_1..b_q)`, split into `f1`/`f2` for homotopy tracking.
#[derive(Debug, Clone)]
pub struct PolySystem {
    pub order: Vec<u32>,
    pub stages: usize,
    pub kind: MethodKind,
    pub cubic: bool,
    pub a_len: usize,
    pub b_len: usize,
    pub f1: Vec<Equation>,
    pub f2: Vec<Equation>,
}

/// Assemble the square (or under-determined) polynomial system for the given
/// generalized order and stage count. `kind == Abah` or `cubic` adds the
/// `sum b^3 = 0` equation.
pub fn build_system(
    order: &[u32],
    stages: usize,
    kind: MethodKind,
    cubic: bool,
) -> Result<PolySystem, SolverError> {
    let (a_len, b_len) = crate::coeffs::kernel_lengths(stages);
    let include_cubic = cubic || kind == MethodKind::Abah;
    let set = condition_set_for(order, true, include_cubic);
    let mut f1 = vec![Equation::ConsistencyA, Equation::ConsistencyB];
    if include_cubic {
        f1.push(Equation::Cubic);
    }
    let mut f2 = Vec::new();
    for m in set.indices {
        if m.k() == 1 {
            f1.push(Equation::Condition(m));
        } else {
            f2.push(Equation::Condition(m));
        }
    }
    let equations = f1.len() + f2.len();
    let unknowns = a_len + b_len;
    if equations > unknowns {
        return Err(SolverError::OverDetermined { equations, unknowns });
    }
    Ok(PolySystem {
        order: order.to_vec(),
        stages,
        kind,
        cubic: include_cubic,
        a_len,
        b_len,
        f1,
        f2,
    })
}

impl PolySystem {
    pub fn unknowns(&self) -> usize {
        self.a_len + self.b_len
    }

    pub fn equations(&self) -> usize {
        self.f1.len() + self.f2.len()
    }

    pub fn is_square(&self) -> bool {
        self.equations() == self.unknowns()
    }

    fn expand<T: Scalar>(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let s = self.stages;
        let ak = &x[..self.a_len];
        let bk = &x[self.a_len..];
        let a: Vec<T> = (0..=s).map(|i| ak[i.min(s - i)].clone()).collect();
        let b: Vec<T> = (0..s).map(|i| bk[i.min(s - 1 - i)].clone()).collect();
        (a, b)
    }

    fn eval_equation<T: Scalar>(&self, eq: &Equation, a: &[T], b: &[T], c: &[T]) -> T {
        let one = a[0].one_like();
        match eq {
            Equation::ConsistencyA => {
                let sum = a.iter().fold(a[0].zero_like(), |s, v| s.add(v));
                sum.sub(&one)
            }
            Equation::ConsistencyB => {
                let sum = b.iter().fold(b[0].zero_like(), |s, v| s.add(v));
                sum.sub(&one)
            }
            Equation::Cubic => b
                .iter()
                .fold(b[0].zero_like(), |s, v| s.add(&v.mul(v).mul(v))),
            Equation::Condition(m) => {
                condition_residual(b, c, m).expect("expanded arrays are consistent")
            }
        }
    }

    /// Residual vector `[f1..., f2...]` over any scalar type.
    pub fn residual<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.unknowns());
        let (a, b) = self.expand(x);
        let mut c = Vec::with_capacity(self.stages);
        let mut acc = a[0].zero_like();
        for ai in &a[..self.stages] {
            acc = acc.add(ai);
            c.push(acc.clone());
        }
        self.f1
            .iter()
            .chain(&self.f2)
            .map(|eq| self.eval_equation(eq, &a, &b, &c))
            .collect()
    }

    /// Residual and Jacobian in one dual-number pass.
    pub fn residual_and_jacobian<T: Scalar>(&self, x: &[T]) -> (Vec<T>, Vec<Vec<T>>) {
        let n = x.len();
        let duals: Vec<Dual<T>> = x
            .iter()
            .enumerate()
            .map(|(i, v)| Dual::seeded(v.clone(), n, i))
            .collect();
        let res = self.residual(&duals);
        let mut values = Vec::with_capacity(res.len());
        let mut jac = Vec::with_capacity(res.len());
        for r in res {
            values.push(r.v);
            jac.push(r.d);
        }
        (values, jac)
    }

    pub fn max_residual_mag(&self, x: &[BigFloat]) -> f64 {
        self.residual(x)
            .iter()
            .map(|r| r.mag_f64())
            .fold(0.0, f64::max)
    }
}

/// Forward-mode dual number carrying a gradient with respect to the system
/// unknowns. Implements [`Scalar`], so the same condition evaluation code
/// produces values and Jacobians.
#[derive(Clone)]
pub struct Dual<T> {
    pub v: T,
    pub d: Vec<T>,
}

impl<T: Scalar> Dual<T> {
    pub fn seeded(v: T, n: usize, index: usize) -> Self {
        let mut d = vec![v.zero_like(); n];
        d[index] = v.one_like();
        Dual { v, d }
    }

    pub fn constant(v: T, n: usize) -> Self {
        let d = vec![v.zero_like(); n];
        Dual { v, d }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn zero_like(&self) -> Self {
        Dual::constant(self.v.zero_like(), self.d.len())
    }
    fn one_like(&self) -> Self {
        Dual::constant(self.v.one_like(), self.d.len())
    }
    fn add(&self, o: &Self) -> Self {
        Dual {
            v: self.v.add(&o.v),
            d: self.d.iter().zip(&o.d).map(|(x, y)| x.add(y)).collect(),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual {
            v: self.v.sub(&o.v),
            d: self.d.iter().zip(&o.d).map(|(x, y)| x.sub(y)).collect(),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        Dual {
            v: self.v.mul(&o.v),
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(x, y)| x.mul(&o.v).add(&y.mul(&self.v)))
                .collect(),
        }
    }
    fn div(&self, o: &Self) -> Self {
        let q = self.v.div(&o.v);
        Dual {
            v: q.clone(),
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(x, y)| x.sub(&y.mul(&q)).div(&o.v))
                .collect(),
        }
    }
    fn neg(&self) -> Self {
        Dual {
            v: self.v.neg(),
            d: self.d.iter().map(|x| x.neg()).collect(),
        }
    }
    fn div_u32(&self, n: u32) -> Self {
        Dual {
            v: self.v.div_u32(n),
            d: self.d.iter().map(|x| x.div_u32(n)).collect(),
        }
    }
    fn lift_f64(&self, v: f64) -> Self {
        Dual::constant(self.v.lift_f64(v), self.d.len())
    }
    fn lift_ratio(&self, num: i64, den: i64) -> Self {
        Dual::constant(self.v.lift_ratio(num, den), self.d.len())
    }
    fn mag_f64(&self) -> f64 {
        self.v.mag_f64()
    }
}

/// Dense LU solve with partial pivoting over any [`Scalar`].
pub fn lu_solve<T: Scalar>(mut m: Vec<Vec<T>>, mut rhs: Vec<T>) -> Option<Vec<T>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            m[i][col]
                .mag_f64()
                .partial_cmp(&m[j][col].mag_f64())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[piv][col].mag_f64() == 0.0 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col].div(&m[col][col]);
            for k in col..n {
                m[row][k] = m[row][k].sub(&f.mul(&m[col][k]));
            }
            rhs[row] = rhs[row].sub(&f.mul(&rhs[col]));
        }
    }
    let mut x = vec![rhs[0].zero_like(); n];
    for row in (0..n).rev() {
        let mut s = rhs[row].clone();
        for k in row + 1..n {
            s = s.sub(&m[row][k].mul(&x[k]));
        }
        x[row] = s.div(&m[row][row]);
    }
    Some(x)
}

/// An accepted coefficient vector with its quality numbers.
#[derive(Debug, Clone)]
pub struct SolutionCandidate {
    /// Kernel coefficients `(a_1..a_p, b_1..b_q)`.
    pub x: Vec<BigFloat>,
    /// Euclidean norm of the kernel vector.
    pub norm: f64,
    /// Max absolute residual over the full system.
    pub residual: f64,
    /// Magnitudes of the negative coefficients (empty for all-positive sets).
    pub negative_magnitudes: Vec<f64>,
    /// Estimated size of the leading local-error terms (residuals of the
    /// next-weight conditions).
    pub leading_error: f64,
}

impl SolutionCandidate {
    pub fn all_positive(&self) -> bool {
        self.negative_magnitudes.is_empty()
    }
}

fn make_candidate(system: &PolySystem, x: Vec<BigFloat>) -> SolutionCandidate {
    let norm = x
        .iter()
        .map(|v| v.to_f64() * v.to_f64())
        .sum::<f64>()
        .sqrt();
    let residual = system.max_residual_mag(&x);
    let negative_magnitudes = x
        .iter()
        .filter(|v| v.to_f64() < 0.0)
        .map(|v| v.to_f64().abs())
        .collect();
    let leading_error = leading_error_estimate(system, &x);
    SolutionCandidate {
        x,
        norm,
        residual,
        negative_magnitudes,
        leading_error,
    }
}

/// Residual magnitude of the first conditions beyond the claimed order:
/// for each part count `k`, the odd-weight `r_k + 1` Lyndon indices.
pub fn leading_error_estimate(system: &PolySystem, x: &[BigFloat]) -> f64 {
    let (a, b) = system.expand(x);
    let mut c = Vec::with_capacity(system.stages);
    let mut acc = a[0].zero_like();
    for ai in &a[..system.stages] {
        acc = acc.add(ai);
        c.push(acc.clone());
    }
    let mut total = 0.0f64;
    for (k, r) in system.order.iter().enumerate() {
        let next_weight = r + 1; // odd, since orders are even
        for m in crate::orderconds::lyndon_upto(next_weight, k + 1, true) {
            if m.k() == k + 1 && m.weight() == next_weight {
                let res = condition_residual(&b, &c, &m).expect("consistent arrays");
                total += res.mag_f64() * res.mag_f64();
            }
        }
    }
    total.sqrt()
}

/// Levenberg-Marquardt on a generic f64 least-squares problem. `eval`
/// returns the residual vector and its (analytic) Jacobian; dual-number
/// Jacobians keep the iteration exact down to the f64 floor. Returns the
/// best point and its residual sum of squares. Handles the ill-conditioned
/// valleys these order-condition systems have near clustered roots, where
/// plain Newton bounces.
pub fn lm_f64(
    eval: &(dyn Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>) + Sync),
    x0: &[f64],
    max_iters: usize,
    ssq_stop: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let ssq_of = |r: &[f64]| -> f64 { r.iter().map(|v| v * v).sum() };
    let (mut r, mut jac) = eval(&x);
    let mut ssq = ssq_of(&r);
    let mut lambda = 1e-8f64;
    for _ in 0..max_iters {
        if !ssq.is_finite() || ssq <= ssq_stop {
            break;
        }
        let m = r.len();
        let mut jtj = vec![vec![0.0f64; n]; n];
        let mut jtr = vec![0.0f64; n];
        for i in 0..n {
            for j in 0..n {
                jtj[i][j] = (0..m).map(|k| jac[k][i] * jac[k][j]).sum();
            }
            jtr[i] = (0..m).map(|k| jac[k][i] * r[k]).sum();
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[i][i] += lambda * (1.0 + jtj[i][i]);
            }
            if let Some(dx) = lu_solve(a, jtr.clone()) {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(v, d)| v - d).collect();
                let (rt, jt) = eval(&trial);
                let tssq = ssq_of(&rt);
                if tssq.is_finite() && tssq < ssq {
                    x = trial;
                    r = rt;
                    jac = jt;
                    ssq = tssq;
                    lambda = (lambda / 5.0).max(1e-18);
                    accepted = true;
                    break;
                }
            }
            lambda *= 7.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    (x, ssq)
}

/// Polish a root of the (square) system to the working precision. A cheap
/// f64 Levenberg-Marquardt pass first walks any flat valley down to the f64
/// floor, then big-precision LM (which reduces to Newton once healthy, with
/// dual-number Jacobians) takes the root to `~10^(4-digits)`.
pub fn newton_polish(
    system: &PolySystem,
    x0: &[BigFloat],
    max_iters: usize,
) -> Result<SolutionCandidate, SolverError> {
    assert!(system.is_square(), "polishing needs a square system");
    let digits = x0[0].digits().max(crate::prec::DEFAULT_DIGITS);
    let floor = 10f64.powi(-((digits as i32) - 4));

    // f64 valley walk (skipped de facto when already converged: LM accepts
    // nothing and returns immediately at the f64 floor)
    let x64: Vec<f64> = x0.iter().map(|v| v.to_f64()).collect();
    let eval64 = |y: &[f64]| system.residual_and_jacobian(y);
    let (x64, _) = lm_f64(&eval64, &x64, 4000, 1e-29);

    // keep whichever start has the smaller residual: the f64-refined point,
    // or the original input when it was already sharper than f64 can see
    let refined: Vec<BigFloat> = x64.iter().map(|v| BigFloat::from_f64(*v, digits)).collect();
    let mut x = if system.max_residual_mag(&refined) <= system.max_residual_mag(x0) {
        refined
    } else {
        x0.iter().map(|v| v.with_digits(digits)).collect()
    };

    // big-precision LM: lambda starts negligible, so this is Newton with a
    // safety net
    let mut lambda = 1e-30f64;
    let mut iters = 0usize;
    loop {
        let (res, jac) = system.residual_and_jacobian(&x);
        let norm = res.iter().map(|r| r.mag_f64()).fold(0.0, f64::max);
        if norm <= floor {
            return Ok(make_candidate(system, x));
        }
        if iters >= max_iters {
            return Err(SolverError::NewtonDivergence { residual: norm, iters });
        }
        iters += 1;
        let n = x.len();
        let ssq: f64 = res.iter().map(|v| v.mag_f64().powi(2)).sum();
        let mut jtj = vec![vec![BigFloat::zero(digits); n]; n];
        let mut jtr = vec![BigFloat::zero(digits); n];
        for i in 0..n {
            for j in i..n {
                let mut s = BigFloat::zero(digits);
                for k in 0..n {
                    s = s + &jac[k][i] * &jac[k][j];
                }
                jtj[i][j] = s.clone();
                jtj[j][i] = s;
            }
            let mut s = BigFloat::zero(digits);
            for k in 0..n {
                s = s + &jac[k][i] * &res[k];
            }
            jtr[i] = s;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let lam = BigFloat::from_f64(lambda, digits);
            let mut a = jtj.clone();
            for i in 0..n {
                a[i][i] = &a[i][i] + &lam * (BigFloat::one(digits) + &jtj[i][i]);
            }
            let Some(dx) = lu_solve(a, jtr.clone()) else {
                lambda = (lambda * 10.0).max(1e-30);
                continue;
            };
            let trial: Vec<BigFloat> = x.iter().zip(&dx).map(|(v, d)| v - d).collect();
            let tssq: f64 = system
                .residual(&trial)
                .iter()
                .map(|v| v.mag_f64().powi(2))
                .sum();
            if tssq.is_finite() && tssq < ssq {
                x = trial;
                lambda = (lambda / 10.0).max(1e-30);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e10 {
                break;
            }
        }
        if !accepted {
            return Err(SolverError::NewtonDivergence {
                residual: norm,
                iters,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// constrained minimization for the continuation start point
// ---------------------------------------------------------------------------

/// Evaluate `f1` with the `zeroed_a` kernel entries pinned to zero, as a
/// function of the remaining unknowns `y`.
fn f1_reduced<T: Scalar>(system: &PolySystem, zeroed_a: &[usize], y: &[T]) -> Vec<T> {
    let zero = y[0].zero_like();
    let mut x = Vec::with_capacity(system.unknowns());
    let mut yi = 0;
    for i in 0..system.unknowns() {
        if i < system.a_len && zeroed_a.contains(&i) {
            x.push(zero.clone());
        } else {
            x.push(y[yi].clone());
            yi += 1;
        }
    }
    let full = system.residual(&x);
    full[..system.f1.len()].to_vec()
}

/// `f1_reduced` plus its Jacobian from one dual-number pass.
fn f1_reduced_jac(
    system: &PolySystem,
    zeroed_a: &[usize],
    y: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = y.len();
    let duals: Vec<Dual<f64>> = y
        .iter()
        .enumerate()
        .map(|(i, v)| Dual::seeded(*v, n, i))
        .collect();
    let res = f1_reduced(system, zeroed_a, &duals);
    let mut values = Vec::with_capacity(res.len());
    let mut jac = Vec::with_capacity(res.len());
    for r in res {
        values.push(r.v);
        jac.push(r.d);
    }
    (values, jac)
}

/// KKT residual of `min sum y^2 s.t. f1(y) = 0` (zeroed coordinates removed):
/// `[2 y - J^T lambda ; f1(y)]`.
fn kkt_residual<T: Scalar>(
    system: &PolySystem,
    zeroed_a: &[usize],
    yl: &[T],
    ny: usize,
) -> Vec<T> {
    let y = &yl[..ny];
    let lambda = &yl[ny..];
    // gradient of f1 via duals over y
    let duals: Vec<Dual<T>> = y
        .iter()
        .enumerate()
        .map(|(i, v)| Dual::seeded(v.clone(), ny, i))
        .collect();
    let f1 = f1_reduced(system, zeroed_a, &duals);
    let two = y[0].lift_f64(2.0);
    let mut out = Vec::with_capacity(yl.len());
    for i in 0..ny {
        let mut g = y[i].mul(&two);
        for (k, fk) in f1.iter().enumerate() {
            g = g.sub(&fk.d[i].mul(&lambda[k]));
        }
        out.push(g);
    }
    for fk in &f1 {
        out.push(fk.v.clone());
    }
    out
}

/// Feasibility start for the constrained minimization, from the structure
/// the zero pins create: pinning a contiguous run of interior a-kernel
/// entries to zero merges the adjacent B stages, so the surviving
/// coefficients must form a `(r1, 2)` method with two fewer stages per pin.
/// That lower-stage all-positive method is cheap to find by grid; splitting
/// its merged b entry evenly gives a start that only violates the cubic
/// equation (and nothing else), well inside the feasibility basin.
fn collapsed_start(system: &PolySystem, zeroed_a: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if zeroed_a.is_empty() {
        return out;
    }
    let mut z = zeroed_a.to_vec();
    z.sort_unstable();
    let contiguous = z.windows(2).all(|w| w[1] == w[0] + 1);
    // interior pins only: not the first kernel entry, not the palindromic
    // middle entry
    if !contiguous || z[0] == 0 || *z.last().unwrap() + 1 >= system.a_len {
        return out;
    }
    let Some(collapsed_stages) = system.stages.checked_sub(2 * z.len()) else {
        return out;
    };
    if collapsed_stages < 1 {
        return out;
    }
    let Ok(sub) = build_system(&[system.order[0], 2], collapsed_stages, MethodKind::Aba, false)
    else {
        return out;
    };
    if !sub.is_square() {
        return out;
    }
    let Ok(roots) = solve_by_grid(&sub, 30) else { return out };
    let Some(base) = roots.iter().find(|c| c.all_positive()).or(roots.first()) else {
        return out;
    };
    let sub_a: Vec<f64> = base.x[..sub.a_len].iter().map(|v| v.to_f64()).collect();
    let sub_b: Vec<f64> = base.x[sub.a_len..].iter().map(|v| v.to_f64()).collect();

    // expansion multiplicities of the b kernels, full and collapsed
    let s = system.stages;
    let full_mult: Vec<f64> = {
        let mut m = vec![0.0; system.b_len];
        for j in 0..s {
            m[j.min(s - 1 - j)] += 1.0;
        }
        m
    };
    let sub_mult: Vec<f64> = {
        let mut m = vec![0.0; sub.b_len];
        for j in 0..collapsed_stages {
            m[j.min(collapsed_stages - 1 - j)] += 1.0;
        }
        m
    };

    // the merged group and its targets: the group's multiplicity-weighted sum
    // must reproduce the collapsed entry's weighted value, and (when the
    // cubic equation is present) the group's weighted cube sum must cancel
    // the cube sum of the untouched entries
    let merge_lo = z[0] - 1;
    let merge_hi = *z.last().unwrap();
    let group: Vec<usize> = (merge_lo..=merge_hi).collect();
    let t_total = sub_mult[merge_lo] * sub_b[merge_lo];
    let mut k_needed = 0.0f64;
    if system.cubic {
        let mut rest_cubes = 0.0;
        let mut sub_j = 0;
        let mut i = 0;
        while i < system.b_len {
            if i == merge_lo {
                i = merge_hi + 1;
                sub_j += 1;
                continue;
            }
            rest_cubes += full_mult[i] * sub_b[sub_j].powi(3);
            sub_j += 1;
            i += 1;
        }
        k_needed = -rest_cubes;
    }

    // assemble a reduced vector from a given split of the group
    let assemble = |split: &[f64]| -> Vec<f64> {
        let mut y = Vec::with_capacity(system.unknowns() - z.len());
        let mut sub_i = 0;
        for i in 0..system.a_len {
            if z.contains(&i) {
                continue;
            }
            y.push(sub_a[sub_i]);
            sub_i += 1;
        }
        let mut sub_j = 0;
        let mut i = 0;
        while i < system.b_len {
            if i == merge_lo {
                y.extend_from_slice(split);
                sub_j += 1;
                i = merge_hi + 1;
            } else {
                y.push(sub_b[sub_j]);
                sub_j += 1;
                i += 1;
            }
        }
        y
    };

    // even split (enough when there is no cubic equation)
    let group_mult_total: f64 = group.iter().map(|&i| full_mult[i]).sum();
    let even = vec![t_total / group_mult_total; group.len()];
    out.push(assemble(&even));

    if system.cubic && group.len() >= 2 {
        // sign-broken splits: all entries equal to u except position j at w,
        // solving the weighted sum and cube-sum constraints for (u, w)
        for (pos, &gj) in group.iter().enumerate() {
            let w_mult = full_mult[gj];
            let u_mult: f64 = group
                .iter()
                .filter(|&&gi| gi != gj)
                .map(|&gi| full_mult[gi])
                .sum();
            let u_cube_mult = u_mult; // same weights appear in the cube sum
            let f = |u: f64| -> f64 {
                let w = (t_total - u_mult * u) / w_mult;
                u_cube_mult * u.powi(3) + w_mult * w.powi(3) - k_needed
            };
            let n_scan = 4000;
            let (lo, hi) = (-2.0f64, 2.0f64);
            let mut prev_u = lo;
            let mut prev_f = f(lo);
            for k in 1..=n_scan {
                let u = lo + (hi - lo) * k as f64 / n_scan as f64;
                let fu = f(u);
                if prev_f == 0.0 || (prev_f < 0.0) != (fu < 0.0) {
                    // bisect
                    let (mut a, mut b) = (prev_u, u);
                    for _ in 0..80 {
                        let m = 0.5 * (a + b);
                        if (f(a) < 0.0) != (f(m) < 0.0) {
                            b = m;
                        } else {
                            a = m;
                        }
                    }
                    let u_root = 0.5 * (a + b);
                    let w_root = (t_total - u_mult * u_root) / w_mult;
                    let mut split = vec![u_root; group.len()];
                    split[pos] = w_root;
                    out.push(assemble(&split));
                }
                prev_u = u;
                prev_f = fu;
            }
        }
    }
    out
}

/// Solve the Appendix's constrained minimization: minimize the squared norm
/// of the kernel vector subject to `f1 = 0` and the listed a-kernel entries
/// pinned to zero. Returns the full-length solution (zeros included).
pub fn solve_x0(
    system: &PolySystem,
    zeroed_a: &[usize],
    seed: u64,
    digits: usize,
) -> Result<Vec<BigFloat>, SolverError> {
    assert!(zeroed_a.iter().all(|i| *i < system.a_len));
    let ny = system.unknowns() - zeroed_a.len();
    let nl = system.f1.len();
    if ny < nl {
        return Err(SolverError::MinimizationFailed(format!(
            "only {ny} free unknowns for {nl} constraints"
        )));
    }

    // f64 stage: find feasible points of f1 = 0, then slide each down-norm
    // along the manifold by re-solving |f1|^2 + mu |y|^2 with a small,
    // decreasing norm weight. Feasibility starts come from the collapsed
    // lower-stage method (zeroing interior a's merges the adjacent b stages
    // into a (r1, 2) scheme one can solve by grid) plus random draws.
    let feas_eval = |v: &[f64]| f1_reduced_jac(system, zeroed_a, v);

    // candidate feasible points: structured starts from the collapsed
    // lower-stage method, plus random draws
    let mut starts: Vec<Vec<f64>> = collapsed_start(system, zeroed_a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        starts.push((0..ny).map(|_| rng.gen_range(-0.8..0.8)).collect());
    }
    let mut feasible: Vec<(f64, Vec<f64>)> = Vec::new();
    for start in &starts {
        let (y, ssq) = lm_f64(&feas_eval, start, 800, 1e-28);
        if ssq > 1e-22 {
            continue;
        }
        let obj: f64 = y.iter().map(|v| v * v).sum();
        if !feasible
            .iter()
            .any(|(_, q)| q.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-8))
        {
            feasible.push((obj, y));
        }
    }
    if feasible.is_empty() {
        return Err(SolverError::MinimizationFailed(
            "no feasible point found".into(),
        ));
    }
    feasible.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    feasible.truncate(6);

    // each candidate runs through the damped big-precision KKT Newton with
    // finite differences at half the working precision; the accepted point
    // with the smallest objective wins
    let fd_jac = |y: &[f64]| -> Vec<Vec<f64>> {
        let (_, jac) = f1_reduced_jac(system, zeroed_a, y);
        jac
    };
    let mut best_kkt: Option<(f64, Vec<BigFloat>)> = None;
    for (_, y64) in &feasible {
        // multipliers from least-squares stationarity: J^T lambda ~= 2 y
        let jac = fd_jac(y64);
        let mut jjt = vec![vec![0.0f64; nl]; nl];
        for i in 0..nl {
            for j in 0..nl {
                jjt[i][j] = (0..ny).map(|k| jac[i][k] * jac[j][k]).sum();
            }
        }
        let rhs: Vec<f64> = (0..nl)
            .map(|i| (0..ny).map(|k| jac[i][k] * 2.0 * y64[k]).sum())
            .collect();
        let Some(lambda0) = lu_solve(jjt, rhs) else { continue };

        let n = ny + nl;
        let mut yl: Vec<BigFloat> = y64
            .iter()
            .chain(&lambda0)
            .map(|v| BigFloat::from_f64(*v, digits))
            .collect();
        let h = BigFloat::parse(&format!("1e-{}", digits / 2), digits).unwrap();
        for _ in 0..80 {
            let r = kkt_residual(system, zeroed_a, &yl, ny);
            let rnorm = r.iter().map(|v| v.mag_f64()).fold(0.0, f64::max);
            if rnorm < 10f64.powi(-((digits as i32) - 10)).max(1e-40) {
                break;
            }
            let mut jac = vec![vec![BigFloat::zero(digits); n]; n];
            for col in 0..n {
                let mut yp = yl.clone();
                yp[col] = &yp[col] + &h;
                let rp = kkt_residual(system, zeroed_a, &yp, ny);
                for row in 0..n {
                    jac[row][col] = (&rp[row] - &r[row]) / &h;
                }
            }
            let Some(dx) = lu_solve(jac, r) else { break };
            let mut damp = 1.0f64;
            loop {
                let damp_big = BigFloat::from_f64(damp, digits);
                let trial: Vec<BigFloat> = yl
                    .iter()
                    .zip(&dx)
                    .map(|(v, d)| v - &(d * &damp_big))
                    .collect();
                let tn = kkt_residual(system, zeroed_a, &trial, ny)
                    .iter()
                    .map(|v| v.mag_f64())
                    .fold(0.0, f64::max);
                if tn < rnorm || damp < 1e-6 {
                    yl = trial;
                    break;
                }
                damp *= 0.5;
            }
        }
        let final_norm = kkt_residual(system, zeroed_a, &yl, ny)
            .iter()
            .map(|v| v.mag_f64())
            .fold(0.0, f64::max);
        if final_norm > 1e-25 {
            continue;
        }
        let obj: f64 = yl[..ny].iter().map(|v| v.to_f64() * v.to_f64()).sum();
        if best_kkt.as_ref().map_or(true, |(o, _)| obj < *o - 1e-12) {
            best_kkt = Some((obj, yl[..ny].to_vec()));
        }
    }
    let Some((_, yl)) = best_kkt else {
        return Err(SolverError::MinimizationFailed(
            "KKT polishing failed for every feasible candidate".into(),
        ));
    };

    // reassemble the full vector with zeros in place
    let mut x = Vec::with_capacity(system.unknowns());
    let mut yi = 0;
    for i in 0..system.unknowns() {
        if i < system.a_len && zeroed_a.contains(&i) {
            x.push(BigFloat::zero(digits));
        } else {
            x.push(yl[yi].clone());
            yi += 1;
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// homotopy continuation
// ---------------------------------------------------------------------------

/// A `gamma` draw: uniform on the unit circle excluding arcs within 0.1 rad
/// of the real axis (real `gamma` produces degenerate paths).
pub fn sample_gamma(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let margin = 0.1;
    let half = std::f64::consts::PI - 2.0 * margin;
    let u: f64 = rng.gen_range(0.0..2.0 * half);
    let theta = if u < half {
        margin + u
    } else {
        std::f64::consts::PI + margin + (u - half)
    };
    (theta.cos(), theta.sin())
}

/// Rows of a random `k x n` matrix with orthonormal rows (seeded Gaussian,
/// Gram-Schmidt at the working precision).
pub fn random_orthonormal_rows(
    rng: &mut ChaCha8Rng,
    k: usize,
    n: usize,
    digits: usize,
) -> Vec<Vec<BigFloat>> {
    let mut rows: Vec<Vec<BigFloat>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut v: Vec<BigFloat> = (0..n)
            .map(|_| {
                // Box-Muller normal from two uniforms
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                BigFloat::from_f64((-2.0 * u1.ln()).sqrt() * u2.cos(), digits)
            })
            .collect();
        for prev in &rows {
            let dot = v
                .iter()
                .zip(prev)
                .fold(BigFloat::zero(digits), |s, (a, b)| s + a * b);
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi = &*vi - &dot * pi;
            }
        }
        let norm = v
            .iter()
            .fold(BigFloat::zero(digits), |s, a| s + a * a)
            .sqrt();
        if norm.to_f64() < 1e-6 {
            continue; // degenerate draw
        }
        for vi in v.iter_mut() {
            *vi = &*vi / &norm;
        }
        rows.push(v);
    }
    rows
}

#[derive(Debug, Clone)]
pub struct TrackOptions {
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub corrector_tol: f64,
    pub corrector_iters: usize,
    /// Endpoint imaginary-part tolerance for accepting a real solution.
    pub imag_tol: f64,
    pub digits: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            dt_initial: 1e-2,
            dt_min: 1e-8,
            dt_max: 5e-2,
            corrector_tol: 1e-12,
            corrector_iters: 5,
            imag_tol: 1e-20,
            digits: crate::prec::DEFAULT_DIGITS,
        }
    }
}

/// One accepted continuation step, for the tracking log.
#[derive(Debug, Clone)]
pub struct TrackStep {
    pub t: f64,
    pub corrector_iters: usize,
    pub residual: f64,
}

#[derive(Debug)]
pub enum PathOutcome {
    /// Endpoint was real (after polishing) to the imaginary tolerance.
    Real {
        candidate: SolutionCandidate,
        log: Vec<TrackStep>,
    },
    /// Path reached `t = 1` but the endpoint kept an imaginary part.
    NonReal { max_imag: f64, log: Vec<TrackStep> },
    /// Step control hit the minimum step before reaching `t = 1`.
    Stalled { t_reached: f64, log: Vec<TrackStep> },
}

struct HomotopyCtx<'a> {
    system: &'a PolySystem,
    x0: Vec<BigComplex>,
    gamma: BigComplex,
    m_rows: &'a [Vec<BigFloat>],
    digits: usize,
}

impl HomotopyCtx<'_> {
    fn deformed_residual(&self, x: &[BigComplex], t: &BigFloat) -> Vec<BigComplex> {
        let full = self.system.residual(x);
        let n1 = self.system.f1.len();
        let one_minus_t = &BigFloat::one(self.digits) - t;
        let mut out = full[..n1].to_vec();
        for (row, f2v) in self.m_rows.iter().zip(&full[n1..]) {
            // t * f2 + (1 - t) * gamma * row . (x - x0)
            let mut mdot = BigComplex::zero(self.digits);
            for ((xi, x0i), mij) in x.iter().zip(&self.x0).zip(row) {
                mdot = (&mdot).add(&(xi.sub(x0i)).scale(mij));
            }
            let linear = (&self.gamma.mul(&mdot)).scale(&one_minus_t);
            out.push(f2v.scale(t).add(&linear));
        }
        out
    }

    fn deformed_jacobian(&self, x: &[BigComplex], t: &BigFloat) -> Vec<Vec<BigComplex>> {
        let (_, jac) = self.system.residual_and_jacobian(x);
        let n1 = self.system.f1.len();
        let one_minus_t = &BigFloat::one(self.digits) - t;
        let mut out: Vec<Vec<BigComplex>> = jac[..n1].to_vec();
        for (row, jrow) in self.m_rows.iter().zip(&jac[n1..]) {
            let mut new_row = Vec::with_capacity(x.len());
            for (j2, mij) in jrow.iter().zip(row) {
                let lin = self.gamma.scale(&(&one_minus_t * mij));
                new_row.push(j2.scale(t).add(&lin));
            }
            out.push(new_row);
        }
        out
    }

    /// `dH/dt = [0 ; f2(x) - gamma M (x - x0)]`.
    fn dh_dt(&self, x: &[BigComplex]) -> Vec<BigComplex> {
        let full = self.system.residual(x);
        let n1 = self.system.f1.len();
        let mut out = vec![BigComplex::zero(self.digits); n1];
        for (row, f2v) in self.m_rows.iter().zip(&full[n1..]) {
            let mut mdot = BigComplex::zero(self.digits);
            for ((xi, x0i), mij) in x.iter().zip(&self.x0).zip(row) {
                mdot = (&mdot).add(&(xi.sub(x0i)).scale(mij));
            }
            out.push(f2v.sub(&self.gamma.mul(&mdot)));
        }
        out
    }
}

/// Track the Appendix's one-parameter family from `x0` at `t = 0` to the
/// target system at `t = 1` by Euler prediction plus Newton correction in
/// complex arithmetic, with step halving on corrector failure.
pub fn track_homotopy(
    system: &PolySystem,
    x0: &[BigFloat],
    gamma: (f64, f64),
    m_rows: &[Vec<BigFloat>],
    opts: &TrackOptions,
) -> Result<PathOutcome, SolverError> {
    assert!(system.is_square(), "homotopy tracking needs a square system");
    assert_eq!(m_rows.len(), system.f2.len());
    let digits = opts.digits;
    let ctx = HomotopyCtx {
        system,
        x0: x0
            .iter()
            .map(|v| BigComplex::from_real(v.with_digits(digits)))
            .collect(),
        gamma: BigComplex::new(
            BigFloat::from_f64(gamma.0, digits),
            BigFloat::from_f64(gamma.1, digits),
        ),
        m_rows,
        digits,
    };

    let mut x = ctx.x0.clone();
    let mut t = 0.0f64;
    let mut dt = opts.dt_initial;
    let mut log: Vec<TrackStep> = Vec::new();
    let mut successes = 0usize;

    while t < 1.0 {
        let dt_step = dt.min(1.0 - t);
        let t_big = BigFloat::from_f64(t, digits);
        // Euler predictor: J dx/dt = -dH/dt
        let jac = ctx.deformed_jacobian(&x, &t_big);
        let rhs: Vec<BigComplex> = ctx.dh_dt(&x).iter().map(|v| v.neg()).collect();
        let Some(xdot) = lu_solve(jac, rhs) else {
            return Err(SolverError::SingularJacobian);
        };
        let dt_big = BigFloat::from_f64(dt_step, digits);
        let mut trial: Vec<BigComplex> = x
            .iter()
            .zip(&xdot)
            .map(|(xi, di)| xi.add(&di.scale(&dt_big)))
            .collect();
        // Newton corrector at t + dt
        let t_next = t + dt_step;
        let t_next_big = BigFloat::from_f64(t_next, digits);
        let mut ok = false;
        let mut iters_used = 0;
        let mut res_norm = f64::INFINITY;
        for it in 1..=opts.corrector_iters {
            let r = ctx.deformed_residual(&trial, &t_next_big);
            res_norm = r.iter().map(|v| v.mag_f64()).fold(0.0, f64::max);
            if res_norm <= opts.corrector_tol {
                ok = true;
                iters_used = it - 1;
                break;
            }
            let jac = ctx.deformed_jacobian(&trial, &t_next_big);
            let Some(dx) = lu_solve(jac, r) else { break };
            for (ti, di) in trial.iter_mut().zip(&dx) {
                *ti = ti.sub(di);
            }
            iters_used = it;
        }
        if ok {
            // re-check after the last update
            let r = ctx.deformed_residual(&trial, &t_next_big);
            res_norm = r.iter().map(|v| v.mag_f64()).fold(0.0, f64::max);
        }
        if ok && res_norm <= opts.corrector_tol {
            x = trial;
            t = t_next;
            log.push(TrackStep {
                t,
                corrector_iters: iters_used,
                residual: res_norm,
            });
            successes += 1;
            if successes >= 3 {
                dt = (dt * 1.4).min(opts.dt_max);
            }
        } else {
            successes = 0;
            dt *= 0.5;
            if dt < opts.dt_min {
                return Ok(PathOutcome::Stalled { t_reached: t, log });
            }
        }
    }

    // Endpoint classification. A conjugate-pair endpoint keeps an O(1)
    // imaginary part; a real endpoint's imaginary part is corrector noise.
    // For plausibly-real endpoints, polish the real part on the undeformed
    // system and verify it converged back to the same point: the polished
    // root then has imaginary part exactly zero (within `imag_tol`), and a
    // genuinely complex root fails the residual or proximity check.
    let max_imag = x.iter().map(|v| v.im.mag_f64()).fold(0.0, f64::max);
    if max_imag > 1e-3 {
        return Ok(PathOutcome::NonReal { max_imag, log });
    }
    let real: Vec<BigFloat> = x
        .iter()
        .map(|v| v.re.with_digits(digits))
        .collect();
    match newton_polish(system, &real, 200) {
        Ok(candidate) => {
            let moved = candidate
                .x
                .iter()
                .zip(&real)
                .map(|(a, b)| (a - b).abs().to_f64())
                .fold(0.0, f64::max);
            if moved > 1e-2 {
                // polished into a different basin; the endpoint itself was
                // not a real root
                return Ok(PathOutcome::NonReal { max_imag, log });
            }
            debug_assert!(max_imag <= opts.imag_tol || max_imag <= 1e-3);
            Ok(PathOutcome::Real { candidate, log })
        }
        Err(_) => Ok(PathOutcome::NonReal { max_imag, log }),
    }
}

// ---------------------------------------------------------------------------
// grid route for small systems
// ---------------------------------------------------------------------------

/// Exhaustively scan a coarse grid over the consistency-reduced unknowns,
/// Newton-converge each sub-threshold start in f64, dedup the roots and
/// polish the survivors at `digits`. Returns all distinct real solutions
/// sorted by (norm, leading error).
pub fn solve_by_grid(system: &PolySystem, digits: usize) -> Result<Vec<SolutionCandidate>, SolverError> {
    if !system.is_square() {
        return Err(SolverError::GridNotApplicable(
            "system must be square".into(),
        ));
    }
    let dim = system.unknowns() - 2; // consistency eliminates one a and one b
    let per_axis = match dim {
        0..=2 => 60,
        3 => 40,
        4 => 24,
        _ => {
            return Err(SolverError::GridNotApplicable(format!(
                "{dim} reduced unknowns is beyond the coarse-grid budget"
            )))
        }
    };

    // multiplicity of each kernel slot in the expanded sums
    let s = system.stages;
    let mut a_mult = vec![0f64; system.a_len];
    for i in 0..=s {
        a_mult[i.min(s - i)] += 1.0;
    }
    let mut b_mult = vec![0f64; system.b_len];
    for i in 0..s {
        b_mult[i.min(s - 1 - i)] += 1.0;
    }
    // last kernel entries absorb consistency
    let a_mult = &a_mult;
    let b_mult = &b_mult;
    let to_full = move |y: &[f64]| -> Vec<f64> {
        let na = system.a_len - 1;
        let nb = system.b_len - 1;
        let mut x = Vec::with_capacity(system.unknowns());
        let mut sum_a = 0.0;
        for i in 0..na {
            x.push(y[i]);
            sum_a += a_mult[i] * y[i];
        }
        x.push((1.0 - sum_a) / a_mult[na]);
        let mut sum_b = 0.0;
        for i in 0..nb {
            x.push(y[na + i]);
            sum_b += b_mult[i] * y[na + i];
        }
        x.push((1.0 - sum_b) / b_mult[nb]);
        x
    };
    // residual without the two consistency rows (f1 always starts with them,
    // and the reduction satisfies them by construction)
    let reduced_res = move |y: &[f64]| -> Vec<f64> {
        let full = system.residual(&to_full(y));
        full.into_iter().skip(2).collect()
    };

    let lo = -0.6f64;
    let hi = 1.2f64;
    let step = (hi - lo) / per_axis as f64;
    let total = (per_axis as usize).pow(dim as u32);
    let seeds: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .filter_map(|flat| {
            let mut idx = flat;
            let y: Vec<f64> = (0..dim)
                .map(|_| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    lo + (i as f64 + 0.5) * step
                })
                .collect();
            let r = reduced_res(&y);
            let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm > 0.2 {
                return None;
            }
            newton_f64(&reduced_res, &y, 80)
        })
        .collect();

    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for root in seeds {
        if !distinct
            .iter()
            .any(|q| q.iter().zip(&root).all(|(a, b)| (a - b).abs() < 1e-7))
        {
            distinct.push(root);
        }
    }

    let mut out: Vec<SolutionCandidate> = Vec::new();
    for root in distinct {
        let full = to_full(&root);
        let xb: Vec<BigFloat> = full.iter().map(|v| BigFloat::from_f64(*v, digits)).collect();
        if let Ok(cand) = newton_polish(system, &xb, 60) {
            if !out.iter().any(|c| {
                c.x.iter()
                    .zip(&cand.x)
                    .all(|(a, b)| (a - b).abs().to_f64() < 1e-20)
            }) {
                out.push(cand);
            }
        }
    }
    out.sort_by(|a, b| {
        (a.norm, a.leading_error)
            .partial_cmp(&(b.norm, b.leading_error))
            .unwrap()
    });
    Ok(out)
}

fn newton_f64(f: &(impl Fn(&[f64]) -> Vec<f64> + Sync), x0: &[f64], iters: usize) -> Option<Vec<f64>> {
    let n = x0.len();
    let mut x = x0.to_vec();
    for _ in 0..iters {
        let r = f(&x);
        if !r.iter().all(|v| v.is_finite()) {
            return None;
        }
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-13 {
            return Some(x);
        }
        let mut jac = vec![vec![0.0f64; n]; n];
        for col in 0..n {
            let h = 1e-7 * x[col].abs().max(1.0);
            let mut xp = x.clone();
            xp[col] += h;
            let rp = f(&xp);
            for row in 0..n {
                jac[row][col] = (rp[row] - r[row]) / h;
            }
        }
        let dx = lu_solve(jac, r)?;
        for i in 0..n {
            x[i] -= dx[i];
            if !x[i].is_finite() || x[i].abs() > 100.0 {
                return None;
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// pipeline orchestration and output
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub digits: usize,
    pub seeds: usize,
    pub base_seed: u64,
    /// a-kernel indices (0-based) pinned to zero for the start point.
    pub zeroed_a: Vec<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            digits: crate::prec::DEFAULT_DIGITS,
            seeds: 16,
            base_seed: 1,
            zeroed_a: vec![2, 3],
        }
    }
}

/// Outcome of the full continuation pipeline: every distinct real solution
/// found, sorted by (norm, leading error), plus per-seed logs.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub x0: Vec<BigFloat>,
    pub solutions: Vec<SolutionCandidate>,
    pub seed_reports: Vec<String>,
}

/// Run start-point minimization plus `seeds` homotopy paths and polish the
/// real endpoints.
pub fn solve_appendix_pipeline(
    system: &PolySystem,
    opts: &PipelineOptions,
) -> Result<PipelineOutcome, SolverError> {
    if !system.is_square() {
        return Err(SolverError::GridNotApplicable(
            "continuation pipeline needs a square system".into(),
        ));
    }
    let x0 = solve_x0(system, &opts.zeroed_a, opts.base_seed, opts.digits)?;
    let track = TrackOptions {
        digits: opts.digits,
        ..TrackOptions::default()
    };
    let outcomes: Vec<(usize, Result<PathOutcome, SolverError>, (f64, f64))> = (0..opts.seeds)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.base_seed.wrapping_add(k as u64 * 7919));
            let gamma = sample_gamma(&mut rng);
            let m_rows =
                random_orthonormal_rows(&mut rng, system.f2.len(), system.unknowns(), opts.digits);
            (k, track_homotopy(system, &x0, gamma, &m_rows, &track), gamma)
        })
        .collect();

    let mut solutions: Vec<SolutionCandidate> = Vec::new();
    let mut seed_reports = Vec::new();
    for (k, outcome, gamma) in outcomes {
        let line = match outcome {
            Ok(PathOutcome::Real { candidate, log }) => {
                let dup = solutions.iter().any(|c| {
                    c.x.iter()
                        .zip(&candidate.x)
                        .all(|(a, b)| (a - b).abs().to_f64() < 1e-20)
                });
                let msg = format!(
                    "seed {k}: gamma=({:+.4},{:+.4}) real endpoint, norm {:.6}, residual {:.2e}, {} steps",
                    gamma.0, gamma.1, candidate.norm, candidate.residual, log.len()
                );
                if !dup {
                    solutions.push(candidate);
                }
                msg
            }
            Ok(PathOutcome::NonReal { max_imag, log }) => format!(
                "seed {k}: gamma=({:+.4},{:+.4}) non-real endpoint (|Im| {max_imag:.2e}), {} steps",
                gamma.0, gamma.1, log.len()
            ),
            Ok(PathOutcome::Stalled { t_reached, log }) => format!(
                "seed {k}: gamma=({:+.4},{:+.4}) stalled at t={t_reached:.6}, {} steps",
                gamma.0, gamma.1, log.len()
            ),
            Err(e) => format!("seed {k}: error: {e}"),
        };
        seed_reports.push(line);
    }
    solutions.sort_by(|a, b| {
        (a.norm, a.leading_error)
            .partial_cmp(&(b.norm, b.leading_error))
            .unwrap()
    });
    Ok(PipelineOutcome {
        x0,
        solutions,
        seed_reports,
    })
}

/// Render a solution in the plain-text format the registry can re-import
/// (one coefficient per line at 40 digits plus a residual report).
pub fn write_solution_text(system: &PolySystem, id: &str, cand: &SolutionCandidate) -> String {
    let mut out = String::new();
    out.push_str("# splitting method solution\n");
    out.push_str(&format!("id {id}\n"));
    let kind = if system.cubic { "ABAH" } else { "ABA" };
    out.push_str(&format!("kind {kind}\n"));
    out.push_str(&format!(
        "order {}\n",
        system
            .order
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    out.push_str(&format!("stages {}\n", system.stages));
    out.push_str(&format!("cubic {}\n", system.cubic));
    for i in 0..system.a_len {
        out.push_str(&format!("a{} {}\n", i + 1, cand.x[i].to_decimal_string(40)));
    }
    for i in 0..system.b_len {
        out.push_str(&format!(
            "b{} {}\n",
            i + 1,
            cand.x[system.a_len + i].to_decimal_string(40)
        ));
    }
    out.push_str(&format!("residual_max {:e}\n", cand.residual));
    out
}

/// Render a path-tracking log (t values and corrector iterations per step).
pub fn tracking_log_text(steps: &[TrackStep]) -> String {
    let mut out = String::from("# t corrector_iters residual\n");
    for s in steps {
        out.push_str(&format!("{:.8} {} {:e}\n", s.t, s.corrector_iters, s.residual));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::registry_lookup;
    use crate::orderconds::certify;

    #[test]
    fn system_shapes() {
        let s = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
        assert_eq!(s.unknowns(), 10);
        assert_eq!(s.equations(), 10);
        assert_eq!(s.f1.len(), 7); // consistency x2 + cubic + (3),(5),(7),(9)
        assert_eq!(s.f2.len(), 3); // (1,2),(1,4),(2,3)

        let s = build_system(&[2, 2], 1, MethodKind::Aba, false).unwrap();
        assert_eq!(s.unknowns(), 2);
        assert_eq!(s.equations(), 2);

        let s = build_system(&[8, 6, 4], 7, MethodKind::Aba, false).unwrap();
        assert_eq!(s.equations(), 8);
        assert_eq!(s.unknowns(), 8);

        // too few stages: over-determined and rejected
        assert!(matches!(
            build_system(&[8, 6, 4], 6, MethodKind::Aba, false),
            Err(SolverError::OverDetermined { .. })
        ));
    }

    #[test]
    fn residuals_match_certify() {
        let m = registry_lookup("ABA104").unwrap();
        let system = build_system(&[10, 4], 7, MethodKind::Aba, false).unwrap();
        let x: Vec<BigFloat> = m
            .a_kernel()
            .iter()
            .chain(m.b_kernel())
            .map(|v| v.at_digits(50))
            .collect();
        let res = system.residual(&x);
        let report = certify(m, 1e-30, 50);
        // same conditions, same values (modulo ordering)
        for (eq, r) in system.f1.iter().chain(&system.f2).zip(&res) {
            let label = eq.to_string();
            let line = report
                .lines
                .iter()
                .find(|l| l.label == label)
                .unwrap_or_else(|| panic!("missing {label}"));
            assert!(
                (&line.residual - r).abs().to_f64() < 1e-45,
                "{label}: {} vs {}",
                line.residual.to_sci(5),
                r.to_sci(5)
            );
        }
    }

    #[test]
    fn dual_jacobian_matches_finite_differences() {
        let system = build_system(&[8, 4], 5, MethodKind::Aba, false).unwrap();
        let x: Vec<f64> = vec![0.11, 0.42, -0.05, 0.21, 0.73, -0.88];
        let (r0, jac) = system.residual_and_jacobian(&x);
        let h = 1e-7;
        for col in 0..x.len() {
            let mut xp = x.clone();
            xp[col] += h;
            let rp = system.residual(&xp);
            for row in 0..r0.len() {
                let fd = (rp[row] - r0[row]) / h;
                assert!(
                    (jac[row][col] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "J[{row}][{col}] {} vs fd {}",
                    jac[row][col],
                    fd
                );
            }
        }
    }

    #[test]
    fn lu_solves_random_systems() {
        // f64
        let a = vec![
            vec![2.0, 1.0, -1.0],
            vec![-3.0, -1.0, 2.0],
            vec![-2.0, 1.0, 2.0],
        ];
        let b = vec![8.0, -11.0, -3.0];
        let x = lu_solve(a, b).unwrap();
        for (got, want) in x.iter().zip(&[2.0, 3.0, -1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // BigFloat
        let d = 50;
        let a: Vec<Vec<BigFloat>> = vec![
            vec![BigFloat::from_int(3, d), BigFloat::from_int(1, d)],
            vec![BigFloat::from_int(1, d), BigFloat::from_int(2, d)],
        ];
        let b = vec![BigFloat::from_int(5, d), BigFloat::from_int(5, d)];
        let x = lu_solve(a, b).unwrap();
        assert!((&x[0] - BigFloat::from_int(1, d)).abs().to_f64() < 1e-45);
        assert!((&x[1] - BigFloat::from_int(2, d)).abs().to_f64() < 1e-45);
        // singular
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(lu_solve(a, vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn newton_polish_zero_step_on_exact_root() {
        let m = registry_lookup("ABAH1064").unwrap();
        let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
        let x: Vec<BigFloat> = m
            .a_kernel()
            .iter()
            .chain(m.b_kernel())
            .map(|v| v.at_digits(50))
            .collect();
        let cand = newton_polish(&system, &x, 40).unwrap();
        assert!(cand.residual <= 1e-36, "residual {:e}", cand.residual);
        for (polished, orig) in cand.x.iter().zip(&x) {
            // the polish may sharpen beyond the printed digits but must not move
            // the value at printed accuracy
            assert!((polished - orig).abs().to_f64() < 1e-38);
        }
        assert!(!cand.all_positive());
        assert_eq!(cand.negative_magnitudes.len(), 3); // a3, a4, b3
    }

    #[test]
    fn trivial_leapfrog_system() {
        let system = build_system(&[2, 2], 1, MethodKind::Aba, false).unwrap();
        let root = solve_by_grid(&system, 50).unwrap();
        assert_eq!(root.len(), 1);
        assert!((&root[0].x[0] - BigFloat::ratio(1, 2, 50)).abs().to_f64() < 1e-45);
        assert!((&root[0].x[1] - BigFloat::one(50)).abs().to_f64() < 1e-45);
        // degenerate minimization returns the same point
        let x0 = solve_x0(&system, &[], 3, 50).unwrap();
        assert!((&x0[0] - BigFloat::ratio(1, 2, 50)).abs().to_f64() < 1e-24);
        assert!((&x0[1] - BigFloat::one(50)).abs().to_f64() < 1e-24);
    }

    #[test]
    fn orthonormal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_orthonormal_rows(&mut rng, 3, 10, 50);
        for i in 0..3 {
            for j in 0..3 {
                let dot = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .fold(BigFloat::zero(50), |s, (a, b)| s + a * b);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot.to_f64() - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gamma_samples_avoid_real_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let (re, im) = sample_gamma(&mut rng);
            assert!((re * re + im * im - 1.0).abs() < 1e-12);
            let theta = im.atan2(re).abs();
            assert!(theta >= 0.1 - 1e-12 && theta <= std::f64::consts::PI - 0.1 + 1e-12);
        }
    }

    #[test]
    fn grid_rederives_aba82_unique_positive_root() {
        let system = build_system(&[8, 2], 4, MethodKind::Aba, false).unwrap();
        let roots = solve_by_grid(&system, 55).unwrap();
        let positive: Vec<&SolutionCandidate> =
            roots.iter().filter(|c| c.all_positive()).collect();
        assert_eq!(positive.len(), 1, "expected a unique all-positive root");
        let cand = positive[0];
        assert!(cand.residual <= 1e-35);
        // the frozen registry digits are this root
        let reg = registry_lookup("ABA82").unwrap();
        let reg_x: Vec<BigFloat> = reg
            .a_kernel()
            .iter()
            .chain(reg.b_kernel())
            .map(|v| v.at_digits(55))
            .collect();
        for (got, want) in cand.x.iter().zip(&reg_x) {
            assert!((got - want).abs().to_f64() <= 1e-38);
        }
        // and equal to the 4-node Gauss-Legendre quadrature on [0,1]
        let d = 55;
        let six5 = BigFloat::ratio(6, 5, d).sqrt();
        let d1 = ((BigFloat::from_int(3, d) + BigFloat::from_int(2, d) * &six5)
            / BigFloat::from_int(7, d))
        .sqrt();
        let d2 = ((BigFloat::from_int(3, d) - BigFloat::from_int(2, d) * &six5)
            / BigFloat::from_int(7, d))
        .sqrt();
        let s30 = BigFloat::from_int(30, d).sqrt();
        let gl = [
            (BigFloat::one(d) - &d1) / BigFloat::from_int(2, d),
            (&d1 - &d2) / BigFloat::from_int(2, d),
            d2.clone(),
            (BigFloat::from_int(18, d) - &s30) / BigFloat::from_int(72, d),
            (BigFloat::from_int(18, d) + &s30) / BigFloat::from_int(72, d),
        ];
        for (got, want) in cand.x.iter().zip(&gl) {
            assert!((got - want).abs().to_f64() <= 1e-40);
        }
    }

    #[test]
    fn grid_rederives_aba84_minimum_norm_root() {
        let system = build_system(&[8, 4], 5, MethodKind::Aba, false).unwrap();
        let roots = solve_by_grid(&system, 55).unwrap();
        assert!(roots.len() >= 2, "expected several real roots");
        let best = &roots[0]; // sorted by norm
        let reg = registry_lookup("ABA84").unwrap();
        let reg_x: Vec<BigFloat> = reg
            .a_kernel()
            .iter()
            .chain(reg.b_kernel())
            .map(|v| v.at_digits(55))
            .collect();
        for (got, want) in best.x.iter().zip(&reg_x) {
            assert!(
                (got - want).abs().to_f64() <= 1e-38,
                "min-norm root differs from the frozen registry digits"
            );
        }
        // certified as a splitting method of order (8,4)
        let text = write_solution_text(&system, "REDERIVED84", best);
        let method = crate::coeffs::parse_solution_text(&text).unwrap();
        assert!(certify(&method, 1e-30, 50).certified);
    }

    #[test]
    fn polish_recovers_table_from_perturbation() {
        // each coordinate nudged by 1e-3 converges back to the printed digits
        let m = registry_lookup("ABAH1064").unwrap();
        let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
        let exact: Vec<BigFloat> = m
            .a_kernel()
            .iter()
            .chain(m.b_kernel())
            .map(|v| v.at_digits(50))
            .collect();
        let bump = BigFloat::parse("1e-3", 50).unwrap();
        let start: Vec<BigFloat> = exact
            .iter()
            .enumerate()
            .map(|(i, v)| if i % 2 == 0 { v + &bump } else { v - &bump })
            .collect();
        let cand = newton_polish(&system, &start, 60).unwrap();
        assert!(cand.residual <= 1e-38, "residual {:e}", cand.residual);
        for (got, want) in cand.x.iter().zip(&exact) {
            assert!((got - want).abs().to_f64() <= 1e-38);
        }
        // 40 printed digits reproduced
        for (got, orig) in cand.x.iter().zip(m.a_kernel().iter().chain(m.b_kernel())) {
            let sig = crate::prec::significant_digits(orig.decimal());
            assert_eq!(got.to_decimal_string(sig), orig.decimal());
        }
    }

    #[test]
    fn x0_collapses_to_the_positive_10_2_method() {
        let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
        let x0 = solve_x0(&system, &[2, 3], 1, 50).unwrap();
        // f1 residual at x0
        let res = system.residual(&x0);
        let f1_norm = res[..system.f1.len()]
            .iter()
            .map(|v| v.mag_f64())
            .fold(0.0, f64::max);
        assert!(f1_norm <= 1e-25, "f1 residual {f1_norm:e}");
        assert!(x0[2].to_f64().abs() <= 1e-25 && x0[3].to_f64().abs() <= 1e-25);

        // collapsing the a3 = a4 = 0 stages merges b2+b3+b4 into one stage of
        // the 5-stage symmetric ABA method of order (10,2), all positive
        let d = 50;
        let merged = &x0[6] + &x0[7] + &x0[8]; // b2 + b3 + b4
        let collapsed = [
            x0[0].clone(), // a1
            x0[1].clone(), // a2
            x0[4].clone(), // a5
            x0[5].clone(), // b1
            merged.clone(),
            x0[9].clone(), // b5
        ];
        for v in &collapsed {
            assert!(v.to_f64() > 0.0, "collapsed coefficient not positive");
        }
        use crate::coeffs::{CoefficientValue, SplittingMethod};
        let mk = |v: &BigFloat| CoefficientValue::new(&v.to_decimal_string(40)).unwrap();
        let method = SplittingMethod::new(
            "X0-COLLAPSED",
            MethodKind::Aba,
            &[10, 2],
            5,
            vec![mk(&collapsed[0]), mk(&collapsed[1]), mk(&collapsed[2])],
            vec![mk(&collapsed[3]), mk(&collapsed[4]), mk(&collapsed[5])],
            false,
        )
        .unwrap();
        let report = certify(&method, 1e-30, 50);
        assert!(report.certified, "collapsed method not (10,2):\n{report}");
        let _ = d;
    }

    #[test]
    fn x0_is_a_local_minimum_of_the_norm() {
        // Monte-Carlo probe: projecting random perturbations back onto
        // f1 = 0 (a3 = a4 = 0 kept) never beats the KKT point's objective
        let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
        let x0 = solve_x0(&system, &[2, 3], 1, 50).unwrap();
        let y0: Vec<f64> = x0
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 2 && *i != 3)
            .map(|(_, v)| v.to_f64())
            .collect();
        let obj0: f64 = y0.iter().map(|v| v * v).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut projected = 0;
        for _ in 0..1000 {
            let start: Vec<f64> = y0
                .iter()
                .map(|v| v + rng.gen_range(-0.05..0.05))
                .collect();
            // Gauss-Newton back to feasibility (underdetermined: 8 unknowns,
            // 7 equations) keeps the point near the perturbation
            let mut y = start;
            let mut feasible = false;
            for _ in 0..60 {
                let r = f1_reduced(&system, &[2, 3], &y);
                let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if rn < 1e-12 {
                    feasible = true;
                    break;
                }
                // FD Jacobian (7 x 8), least-norm step via J^T (J J^T)^-1 r
                let ne = r.len();
                let nu = y.len();
                let mut jac = vec![vec![0.0f64; nu]; ne];
                for col in 0..nu {
                    let h = 1e-7;
                    let mut yp = y.clone();
                    yp[col] += h;
                    let rp = f1_reduced(&system, &[2, 3], &yp);
                    for row in 0..ne {
                        jac[row][col] = (rp[row] - r[row]) / h;
                    }
                }
                let mut jjt = vec![vec![0.0f64; ne]; ne];
                for i in 0..ne {
                    for j in 0..ne {
                        jjt[i][j] = (0..nu).map(|k| jac[i][k] * jac[j][k]).sum();
                    }
                }
                let Some(w) = lu_solve(jjt, r) else { break };
                for k in 0..nu {
                    let step: f64 = (0..ne).map(|i| jac[i][k] * w[i]).sum();
                    y[k] -= step;
                }
            }
            if !feasible {
                continue;
            }
            projected += 1;
            let obj: f64 = y.iter().map(|v| v * v).sum();
            assert!(
                obj >= obj0 - 1e-9,
                "feasible point with smaller objective: {obj} < {obj0}"
            );
        }
        assert!(projected > 500, "too few feasible projections: {projected}");
    }

    #[test]
    fn homotopy_recovers_abah1064_from_a_good_seed() {
        let system = build_system(&[10, 6, 4], 9, MethodKind::Abah, true).unwrap();
        let opts = PipelineOptions {
            seeds: 4,
            base_seed: 1,
            ..PipelineOptions::default()
        };
        let outcome = solve_appendix_pipeline(&system, &opts).unwrap();
        assert!(
            !outcome.solutions.is_empty(),
            "no real solution in 4 seeds:\n{}",
            outcome.seed_reports.join("\n")
        );
        let reg = registry_lookup("ABAH1064").unwrap();
        let reg_x: Vec<BigFloat> = reg
            .a_kernel()
            .iter()
            .chain(reg.b_kernel())
            .map(|v| v.at_digits(50))
            .collect();
        let hit = outcome.solutions.iter().any(|cand| {
            cand.x
                .iter()
                .zip(&reg_x)
                .all(|(a, b)| (a - b).abs().to_f64() <= 1e-35)
        });
        assert!(
            hit,
            "published solution not among endpoints:\n{}",
            outcome.seed_reports.join("\n")
        );
        // small |a3|, |a4| in the selected scheme
        let best = &outcome.solutions[0];
        assert!(best.x[2].to_f64().abs() < 0.1 && best.x[3].to_f64().abs() < 0.1);
        // determinism: identical seed, identical polished coefficients
        let out2 = solve_appendix_pipeline(&system, &opts).unwrap();
        assert_eq!(out2.solutions.len(), outcome.solutions.len());
        for (a, b) in out2.solutions.iter().zip(&outcome.solutions) {
            for (x, y) in a.x.iter().zip(&b.x) {
                assert!(x == y, "non-deterministic pipeline");
            }
        }
    }
}

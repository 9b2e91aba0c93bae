//! Exact elementary flows: universal-variable Kepler propagation, position
//! kicks, momentum-coupling drifts and the symmetric 2nd-order inner scheme
//! used when the perturbation flow is only approximately solvable.
//!
//! ## Units & conventions
//! State vectors are flat `q`/`p` arrays of equal length; a body occupies a
//! contiguous span of 2 (planar) or 3 components in each. All flows can
//! optionally route their updates through error-carrying (Neumaier)
//! accumulation so that long constant-step integrations are not dominated by
//! round-off; see [`Accum`].
//!
//! ## Kepler propagator
//! Two-body propagation uses universal variables `X` with `dX/dt = 1/r`,
//! Stumpff functions evaluated by series for small arguments, closed
//! trig/hyperbolic forms for moderate ones and quarter-angle reduction above
//! `|z| > 4`. The universal Kepler equation
//!
//! ```text
//! r0 X + eta0 G2(beta, X) + zeta0 G3(beta, X) = dt,
//! beta = 2 mu / r0 - v^2,  eta0 = r . v,  zeta0 = mu - beta r0
//! ```
//!
//! is solved by Newton iteration (the derivative is the orbital radius, which
//! is positive, so the equation is monotone) with a bisection safeguard. The
//! state update is applied in Lagrange f-g increment form, which keeps the
//! update compatible with compensated accumulation.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FlowError {
    #[error("zero radius encountered in Kepler propagation")]
    ZeroRadius,
    #[error("universal Kepler equation did not converge after {iterations} iterations (pathological step)")]
    KeplerNoConvergence { iterations: usize },
    #[error("coincident bodies {i} and {j} (separation underflow)")]
    CoincidentBodies { i: usize, j: usize },
    #[error("gradient evaluation failed: {0}")]
    GradientFailure(String),
}

/// Positions and conjugate momenta plus current time. `q` and `p` have equal
/// length; how components group into bodies is the owning model's business.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len());
        PhaseState { q, p, t: 0.0 }
    }

    /// Total phase-space dimension.
    pub fn dim(&self) -> usize {
        self.q.len() + self.p.len()
    }

    /// Max-norm distance to another state (same layout).
    pub fn dist_max(&self, other: &PhaseState) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .chain(self.p.iter().zip(&other.p))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Round-off residue carried alongside a state during compensated runs.
#[derive(Debug, Clone)]
pub struct Carry {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl Carry {
    pub fn zeros(n: usize) -> Self {
        Carry {
            q: vec![0.0; n],
            p: vec![0.0; n],
        }
    }
}

#[inline]
fn neumaier_add(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

/// Mutable view of a state that applies additive updates either plainly or
/// with Neumaier compensation.
pub struct Accum<'a> {
    state: &'a mut PhaseState,
    carry: Option<&'a mut Carry>,
}

impl<'a> Accum<'a> {
    pub fn plain(state: &'a mut PhaseState) -> Self {
        Accum { state, carry: None }
    }

    pub fn compensated(state: &'a mut PhaseState, carry: &'a mut Carry) -> Self {
        assert_eq!(carry.q.len(), state.q.len());
        Accum {
            state,
            carry: Some(carry),
        }
    }

    pub fn state(&self) -> &PhaseState {
        self.state
    }

    #[inline]
    pub fn add_q(&mut self, i: usize, dv: f64) {
        match &mut self.carry {
            Some(c) => neumaier_add(&mut self.state.q[i], &mut c.q[i], dv),
            None => self.state.q[i] += dv,
        }
    }

    #[inline]
    pub fn add_p(&mut self, i: usize, dv: f64) {
        match &mut self.carry {
            Some(c) => neumaier_add(&mut self.state.p[i], &mut c.p[i], dv),
            None => self.state.p[i] += dv,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stumpff functions `c0..c3` of `z`. Series below `|z| <= 0.1`, closed
/// trig/hyperbolic forms up to `|z| <= 4`, quarter-angle reduction above.
pub fn stumpff_cs(z: f64) -> [f64; 4] {
    if !z.is_finite() {
        return [f64::NAN; 4];
    }
    if z.abs() <= 4.0 {
        return stumpff_base(z);
    }
    let mut halvings = 0;
    let mut zr = z;
    while zr.abs() > 4.0 {
        zr /= 4.0;
        halvings += 1;
    }
    let mut cs = stumpff_base(zr);
    for _ in 0..halvings {
        cs = [
            2.0 * cs[0] * cs[0] - 1.0,
            cs[0] * cs[1],
            cs[1] * cs[1] * 0.5,
            (cs[2] + cs[0] * cs[3]) * 0.25,
        ];
    }
    cs
}

fn stumpff_base(z: f64) -> [f64; 4] {
    if z.abs() <= 0.1 {
        // series for c2, c3; c0, c1 from the downward identities
        let mut c2 = 0.0;
        let mut c3 = 0.0;
        let mut term2 = 0.5;
        let mut term3 = 1.0 / 6.0;
        for k in 1..=8 {
            c2 += term2;
            c3 += term3;
            term2 *= -z / ((2 * k + 1) as f64 * (2 * k + 2) as f64);
            term3 *= -z / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        }
        [1.0 - z * c2, 1.0 - z * c3, c2, c3]
    } else if z > 0.0 {
        let s = z.sqrt();
        [
            s.cos(),
            s.sin() / s,
            (1.0 - s.cos()) / z,
            (s - s.sin()) / (z * s),
        ]
    } else {
        let s = (-z).sqrt();
        [
            s.cosh(),
            s.sinh() / s,
            (s.cosh() - 1.0) / -z,
            (s.sinh() - s) / (-z * s),
        ]
    }
}

/// Lagrange coefficients in increment form for two-body propagation:
/// `dr = fm1 * r0 + g * v0`, `dv = fdot * r0 + gdm1 * v0`.
fn fg_increments(r: &[f64], v: &[f64], mu: f64, dt: f64) -> Result<(f64, f64, f64, f64), FlowError> {
    let r0 = dot(r, r).sqrt();
    if r0 == 0.0 {
        return Err(FlowError::ZeroRadius);
    }
    if dt == 0.0 {
        return Ok((0.0, 0.0, 0.0, 0.0));
    }
    let v2 = dot(v, v);
    let beta = 2.0 * mu / r0 - v2;
    let eta0 = dot(r, v);
    let zeta0 = mu - beta * r0;
    if !(beta.is_finite() && eta0.is_finite() && zeta0.is_finite()) {
        return Err(FlowError::KeplerNoConvergence { iterations: 0 });
    }

    // second-order guess in the tau/|r| scale
    let dtr0 = dt / r0;
    let mut x = dtr0 * (1.0 - dtr0 * eta0 * 0.5 / r0);
    if !x.is_finite() {
        x = 0.0;
    }

    const MAX_NEWTON: usize = 50;
    let mut converged = false;
    let mut prev = f64::NAN;
    let mut prev2 = f64::NAN;
    for _ in 0..MAX_NEWTON {
        let cs = stumpff_cs(beta * x * x);
        let g1 = x * cs[1];
        let g2 = x * x * cs[2];
        let g3 = x * x * x * cs[3];
        let f = r0 * x + eta0 * g2 + zeta0 * g3 - dt;
        let rx = r0 + eta0 * g1 + zeta0 * g2;
        let dx = f / rx;
        let xn = x - dx;
        if !xn.is_finite() {
            break;
        }
        // run to a bitwise fixed point (or 2-cycle); the tolerance bound only
        // caps pathological slow creep
        if xn == x || xn == prev || xn == prev2 || dx.abs() <= 1e-17 * x.abs().max(dtr0.abs()) {
            x = xn;
            converged = true;
            break;
        }
        prev2 = prev;
        prev = x;
        x = xn;
    }

    if !converged || !x.is_finite() {
        // bisection fallback; F is monotone increasing in x
        let fval = |x: f64| {
            let cs = stumpff_cs(beta * x * x);
            let f = r0 * x + eta0 * x * x * cs[2] + zeta0 * x * x * x * cs[3] - dt;
            if f.is_finite() {
                f
            } else {
                f64::INFINITY.copysign(x - dtr0)
            }
        };
        let (mut lo, mut hi) = if beta > 0.0 {
            // elliptic: X advances by 2 pi / sqrt(beta) per orbit
            let x_per = 2.0 * std::f64::consts::PI / beta.sqrt();
            let invperiod = beta.sqrt() * beta / (2.0 * std::f64::consts::PI * mu);
            let k = (dt * invperiod).floor();
            (x_per * k, x_per * (k + 1.0))
        } else {
            // expand a bracket around the Newton guess
            let mut lo = dtr0.min(0.0);
            let mut hi = dtr0.max(0.0);
            let mut span = dtr0.abs().max(1e-8);
            let mut tries = 0;
            while fval(lo) > 0.0 || fval(hi) < 0.0 {
                span *= 2.0;
                lo -= span;
                hi += span;
                tries += 1;
                if tries > 200 {
                    return Err(FlowError::KeplerNoConvergence { iterations: MAX_NEWTON });
                }
            }
            (lo, hi)
        };
        if !(fval(lo) <= 0.0 && fval(hi) >= 0.0) {
            return Err(FlowError::KeplerNoConvergence { iterations: MAX_NEWTON });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fval(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if (hi - lo).abs() <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        x = 0.5 * (lo + hi);
    }

    // Lagrange coefficients at the converged anomaly
    let cs = stumpff_cs(beta * x * x);
    let g1 = x * cs[1];
    let g2 = x * x * cs[2];
    let g3 = x * x * x * cs[3];
    let rx = r0 + eta0 * g1 + zeta0 * g2;
    if !(rx.is_finite() && rx > 0.0) {
        return Err(FlowError::KeplerNoConvergence { iterations: MAX_NEWTON });
    }
    let fm1 = -mu * g2 / r0;
    let g = dt - mu * g3;
    let fdot = -mu * g1 / (rx * r0);
    let gdm1 = -mu * g2 / rx;
    Ok((fm1, g, fdot, gdm1))
}

/// Advance one body span (components `off..off+dim` of `q`/`p`) along its
/// two-body orbit for time `tau`. Velocity is `p / mass_factor`; pass 1.0
/// when momenta are velocities.
pub fn kepler_span(
    acc: &mut Accum,
    off: usize,
    dim: usize,
    mu: f64,
    tau: f64,
    mass_factor: f64,
) -> Result<(), FlowError> {
    let (r, v): (Vec<f64>, Vec<f64>) = {
        let s = acc.state();
        (
            s.q[off..off + dim].to_vec(),
            s.p[off..off + dim].iter().map(|p| p / mass_factor).collect(),
        )
    };
    let (fm1, g, fdot, gdm1) = fg_increments(&r, &v, mu, tau)?;
    for i in 0..dim {
        acc.add_q(off + i, fm1 * r[i] + g * v[i]);
        acc.add_p(off + i, mass_factor * (fdot * r[i] + gdm1 * v[i]));
    }
    Ok(())
}

/// Exact two-body flow of `H = |p|^2/2 - mu/|q|` for time `tau` (momenta are
/// velocities). Advances `t` by `tau`.
pub fn kepler_flow(state: &PhaseState, mu: f64, tau: f64) -> Result<PhaseState, FlowError> {
    let mut out = state.clone();
    let dim = out.q.len();
    let mut acc = Accum::plain(&mut out);
    kepler_span(&mut acc, 0, dim, mu, tau, 1.0)?;
    out.t += tau;
    Ok(out)
}

/// Exact flow of a position-only Hamiltonian `U(q)`: `p <- p - tau * grad U(q)`.
/// The callback writes `grad U` into its second argument.
pub fn kick<F>(acc: &mut Accum, grad_potential: F, tau: f64) -> Result<(), FlowError>
where
    F: FnOnce(&[f64], &mut [f64]) -> Result<(), FlowError>,
{
    let n = acc.state().q.len();
    let mut grad = vec![0.0; n];
    grad_potential(&acc.state().q, &mut grad)?;
    for i in 0..n {
        acc.add_p(i, -tau * grad[i]);
    }
    Ok(())
}

/// Pure-function wrapper over [`kick`].
pub fn kick_state<F>(state: &PhaseState, grad_potential: F, tau: f64) -> Result<PhaseState, FlowError>
where
    F: FnOnce(&[f64], &mut [f64]) -> Result<(), FlowError>,
{
    let mut out = state.clone();
    kick(&mut Accum::plain(&mut out), grad_potential, tau)?;
    Ok(out)
}

/// Exact flow of the momenta-only coupling `sum_{i<j} p_i . p_j / m0` over
/// 3-component bodies: `r_i <- r_i + (tau/m0) * sum_{j != i} p_j`, momenta
/// unchanged.
pub fn drift_momentum_coupling(acc: &mut Accum, m0: f64, tau: f64) {
    let n = acc.state().q.len() / 3;
    let mut total = [0.0; 3];
    for j in 0..n {
        for d in 0..3 {
            total[d] += acc.state().p[3 * j + d];
        }
    }
    let scale = tau / m0;
    for i in 0..n {
        for d in 0..3 {
            let others = total[d] - acc.state().p[3 * i + d];
            acc.add_q(3 * i + d, scale * others);
        }
    }
}

/// Pure-function wrapper over [`drift_momentum_coupling`].
pub fn drift_momentum_coupling_state(state: &PhaseState, m0: f64, tau: f64) -> PhaseState {
    let mut out = state.clone();
    drift_momentum_coupling(&mut Accum::plain(&mut out), m0, tau);
    out
}

/// Exact flow of the pairwise potential `-G sum_{i<j} m_i m_j / |r_i - r_j|`
/// over 3-component bodies, applied as Newton's-third-law pairs so total
/// momentum is conserved to round-off.
pub fn pairwise_gravity_kick(
    acc: &mut Accum,
    g: f64,
    masses: &[f64],
    tau: f64,
) -> Result<(), FlowError> {
    let n = masses.len();
    debug_assert_eq!(acc.state().q.len(), 3 * n);
    for i in 0..n {
        for j in i + 1..n {
            let mut d = [0.0; 3];
            for k in 0..3 {
                d[k] = acc.state().q[3 * i + k] - acc.state().q[3 * j + k];
            }
            let dist2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if dist2 == 0.0 {
                return Err(FlowError::CoincidentBodies { i, j });
            }
            let inv3 = dist2.powf(-1.5);
            let s = tau * g * masses[i] * masses[j] * inv3;
            for k in 0..3 {
                acc.add_p(3 * i + k, -s * d[k]);
                acc.add_p(3 * j + k, s * d[k]);
            }
        }
    }
    Ok(())
}

/// Symmetric 2nd-order approximation of the heliocentric perturbation flow:
/// `drift(tau/2) . kick(tau) . drift(tau/2)` with the momentum-coupling drift
/// and the pairwise-potential kick.
pub fn inner_leapfrog_b(
    acc: &mut Accum,
    m0: f64,
    g: f64,
    masses: &[f64],
    tau_b: f64,
) -> Result<(), FlowError> {
    drift_momentum_coupling(acc, m0, 0.5 * tau_b);
    pairwise_gravity_kick(acc, g, masses, tau_b)?;
    drift_momentum_coupling(acc, m0, 0.5 * tau_b);
    Ok(())
}

/// Pure-function wrapper over [`inner_leapfrog_b`].
pub fn inner_leapfrog_b_state(
    state: &PhaseState,
    m0: f64,
    g: f64,
    masses: &[f64],
    tau_b: f64,
) -> Result<PhaseState, FlowError> {
    let mut out = state.clone();
    inner_leapfrog_b(&mut Accum::plain(&mut out), m0, g, masses, tau_b)?;
    Ok(out)
}

//! Concrete split systems: the planar perturbed Kepler problem and the
//! heliocentric planetary N-body system, each exposing exact A/B part flows,
//! part energies and (where meaningful) an explicit perturbation scale.
//!
//! ## Units
//! The N-body model works in AU, years and solar masses with
//! `G = 4 pi^2 AU^3 yr^-2 Msun^-1`, so a massless body at 1 AU around a
//! 1 Msun primary has period exactly one year. The perturbed Kepler model is
//! dimensionless with `mu = 1`.

use crate::flows::{inner_leapfrog_b, kepler_span, kick, Accum, FlowError, PhaseState};
use thiserror::Error;

/// Gravitational constant in AU^3 / (yr^2 Msun).
pub const G_AU_YR_MSUN: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("orbit with a = {a}, e = {e} not supported (need a > 0, 0 <= e < 1)")]
    UnsupportedOrbit { a: f64, e: f64 },
    #[error("invalid elements file: {0}")]
    BadElementsFile(String),
    #[error("trajectory needs at least 2 energy samples")]
    TooFewSamples,
    #[error("reference energy H(0) is zero; relative deviation undefined")]
    ZeroReferenceEnergy,
}

/// A two-part vector field `x' = f_a(x) + f_b(x)` with exactly solvable
/// A-flow, exact or symmetric-2nd-order B-flow, and part energies.
/// `energy` defaults to the pointwise sum of the parts.
pub trait SplitSystem: Sync {
    /// Number of `q` (equivalently `p`) components in the state.
    fn n_coords(&self) -> usize;
    /// Explicit perturbation scale, when the model has one.
    fn epsilon(&self) -> Option<f64>;
    /// True when `flow_b` is a symmetric 2nd-order approximation rather than
    /// the exact B-flow.
    fn approximate_b(&self) -> bool;
    fn flow_a(&self, acc: &mut Accum, tau: f64) -> Result<(), FlowError>;
    fn flow_b(&self, acc: &mut Accum, tau: f64) -> Result<(), FlowError>;
    fn energy_a(&self, s: &PhaseState) -> f64;
    fn energy_b(&self, s: &PhaseState) -> f64;
    fn energy(&self, s: &PhaseState) -> f64 {
        self.energy_a(s) + self.energy_b(s)
    }
}

/// Planar satellite around a slightly oblate primary:
/// `H = (p1^2 + p2^2)/2 - 1/r - (eps/(2 r^3)) (1 - 3 q1^2 / r^2)`.
/// The A-part is the Kepler Hamiltonian with `mu = 1`, the B-part an exact
/// position-only kick.
#[derive(Debug, Clone)]
pub struct PerturbedKepler {
    pub epsilon: f64,
}

/// Standard initial state of the oblateness test problem: perihelion of an
/// eccentricity-`e` orbit with `a = 1`.
pub fn perturbed_kepler_initial(e: f64) -> PhaseState {
    PhaseState::new(vec![1.0 - e, 0.0], vec![0.0, ((1.0 + e) / (1.0 - e)).sqrt()])
}

pub fn perturbed_kepler(epsilon: f64) -> PerturbedKepler {
    assert!(epsilon >= 0.0);
    PerturbedKepler { epsilon }
}

impl PerturbedKepler {
    /// grad of `U_b(q) = -(eps/2) (r^-3 - 3 q1^2 r^-5)`.
    fn grad_b(&self, q: &[f64], grad: &mut [f64]) -> Result<(), FlowError> {
        let r2 = q[0] * q[0] + q[1] * q[1];
        if r2 == 0.0 {
            return Err(FlowError::ZeroRadius);
        }
        let r = r2.sqrt();
        let inv5 = 1.0 / (r2 * r2 * r);
        let half_eps = 0.5 * self.epsilon;
        // d/dq_j [r^-3] = -3 q_j r^-5 ; d/dq_j [3 q1^2 r^-5] = 6 q1 d1j r^-5 - 15 q1^2 q_j r^-7
        grad[0] = half_eps * inv5 * (3.0 * q[0] + 6.0 * q[0] - 15.0 * q[0] * q[0] * q[0] / r2);
        grad[1] = half_eps * inv5 * (3.0 * q[1] - 15.0 * q[0] * q[0] * q[1] / r2);
        Ok(())
    }
}

impl SplitSystem for PerturbedKepler {
    fn n_coords(&self) -> usize {
        2
    }

    fn epsilon(&self) -> Option<f64> {
        Some(self.epsilon)
    }

    fn approximate_b(&self) -> bool {
        false
    }

    fn flow_a(&self, acc: &mut Accum, tau: f64) -> Result<(), FlowError> {
        kepler_span(acc, 0, 2, 1.0, tau, 1.0)
    }

    fn flow_b(&self, acc: &mut Accum, tau: f64) -> Result<(), FlowError> {
        kick(acc, |q, g| self.grad_b(q, g), tau)
    }

    fn energy_a(&self, s: &PhaseState) -> f64 {
        let r = (s.q[0] * s.q[0] + s.q[1] * s.q[1]).sqrt();
        0.5 * (s.p[0] * s.p[0] + s.p[1] * s.p[1]) - 1.0 / r
    }

    fn energy_b(&self, s: &PhaseState) -> f64 {
        let r2 = s.q[0] * s.q[0] + s.q[1] * s.q[1];
        let r = r2.sqrt();
        -(0.5 * self.epsilon) / (r2 * r) * (1.0 - 3.0 * s.q[0] * s.q[0] / r2)
    }
}

/// Heliocentric N-body system: positions relative to the Sun, momenta equal
/// to barycentric momenta. The Hamiltonian splits into a sum of Keplerian
/// parts (A) and the perturbation (B)
///
/// ```text
/// H_a = sum_i  |p_i|^2 (m0 + m_i) / (2 m0 m_i)  -  G m0 m_i / |r_i|
/// H_b = sum_{i<j}  p_i . p_j / m0  -  G m_i m_j / |r_i - r_j|
/// ```
///
/// The B-part depends on both positions and momenta and is not exactly
/// solvable, but splits into a momenta-only and a positions-only piece; its
/// flow is approximated by the symmetric 2nd-order inner scheme
/// [`inner_leapfrog_b`], so ABAH-class coefficient sets apply.
///
/// The conjugate pair `(r_0, p_0)` of the Sun does not enter `H_He`; the
/// total momentum is carried in `rtilde0` but never evolves.
#[derive(Debug, Clone)]
pub struct HelioSystem {
    m0: f64,
    g: f64,
    masses: Vec<f64>,
    rtilde0: [f64; 3],
}

impl HelioSystem {
    pub fn new(m0: f64, g: f64, masses: Vec<f64>) -> Self {
        assert!(m0 > 0.0 && !masses.is_empty() && masses.iter().all(|m| *m > 0.0));
        HelioSystem {
            m0,
            g,
            masses,
            rtilde0: [0.0; 3],
        }
    }

    pub fn n_planets(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// Total momentum conjugate to the Sun's coordinate. It does not appear
    /// in the Hamiltonian and never evolves; it is carried for bookkeeping.
    pub fn rtilde0(&self) -> [f64; 3] {
        self.rtilde0
    }

    pub fn set_rtilde0(&mut self, value: [f64; 3]) {
        self.rtilde0 = value;
    }

    /// Two-body gravitational parameter of planet `i`: `G (m0 + m_i)`.
    pub fn mu(&self, i: usize) -> f64 {
        self.g * (self.m0 + self.masses[i])
    }

    /// Reduced mass of planet `i`: momenta are `mtilde_i` times heliocentric
    /// velocity for the Keplerian part.
    pub fn reduced_mass(&self, i: usize) -> f64 {
        self.m0 * self.masses[i] / (self.m0 + self.masses[i])
    }

    /// Per-planet two-body energy `|v_i|^2 / 2 - mu_i / |r_i|` in velocity
    /// form, conserved exactly by the A-flow.
    pub fn planet_two_body_energy(&self, s: &PhaseState, i: usize) -> f64 {
        let mt = self.reduced_mass(i);
        let mut v2 = 0.0;
        let mut r2 = 0.0;
        for d in 0..3 {
            let v = s.p[3 * i + d] / mt;
            v2 += v * v;
            r2 += s.q[3 * i + d] * s.q[3 * i + d];
        }
        0.5 * v2 - self.mu(i) / r2.sqrt()
    }
}

impl SplitSystem for HelioSystem {
    fn n_coords(&self) -> usize {
        3 * self.masses.len()
    }

    fn epsilon(&self) -> Option<f64> {
        None // perturbation strength lives in the mass ratios
    }

    fn approximate_b(&self) -> bool {
        true
    }

    fn flow_a(&self, acc: &mut Accum, tau: f64) -> Result<(), FlowError> {
        for i in 0..self.masses.len() {
            kepler_span(acc, 3 * i, 3, self.mu(i), tau, self.reduced_mass(i))?;
        }
        Ok(())
    }

    fn flow_b(&self, acc: &mut Accum, tau: f64) -> Result<(), FlowError> {
        if self.masses.len() < 2 {
            return Ok(()); // empty pair sum
        }
        inner_leapfrog_b(acc, self.m0, self.g, &self.masses, tau)
    }

    fn energy_a(&self, s: &PhaseState) -> f64 {
        let mut total = 0.0;
        for i in 0..self.masses.len() {
            let mut p2 = 0.0;
            let mut r2 = 0.0;
            for d in 0..3 {
                p2 += s.p[3 * i + d] * s.p[3 * i + d];
                r2 += s.q[3 * i + d] * s.q[3 * i + d];
            }
            total += 0.5 * p2 * (self.m0 + self.masses[i]) / (self.m0 * self.masses[i])
                - self.g * self.m0 * self.masses[i] / r2.sqrt();
        }
        total
    }

    fn energy_b(&self, s: &PhaseState) -> f64 {
        let n = self.masses.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let mut pp = 0.0;
                let mut d2 = 0.0;
                for d in 0..3 {
                    pp += s.p[3 * i + d] * s.p[3 * j + d];
                    let dd = s.q[3 * i + d] - s.q[3 * j + d];
                    d2 += dd * dd;
                }
                total += pp / self.m0 - self.g * self.masses[i] * self.masses[j] / d2.sqrt();
            }
        }
        total
    }
}

/// Osculating Keplerian elements of one body. Angles in radians; masses in
/// the model's mass unit.
#[derive(Debug, Clone)]
pub struct KeplerianElements {
    pub name: String,
    pub mass: f64,
    pub a: f64,
    pub e: f64,
    pub inclination: f64,
    pub node: f64,
    pub arg_peri: f64,
    pub mean_anomaly: f64,
}

/// Solve Kepler's equation `E - e sin E = M` by Newton iteration.
fn eccentric_anomaly(mean_anomaly: f64, e: f64) -> f64 {
    let m = mean_anomaly.rem_euclid(std::f64::consts::TAU);
    let mut big_e = if e < 0.8 { m } else { std::f64::consts::PI };
    for _ in 0..60 {
        let f = big_e - e * big_e.sin() - m;
        let fp = 1.0 - e * big_e.cos();
        let d = f / fp;
        big_e -= d;
        if d.abs() < 1e-15 {
            break;
        }
    }
    big_e
}

/// Convert elements to heliocentric Cartesian position and velocity for
/// gravitational parameter `mu`. Parabolic/hyperbolic inputs are rejected.
pub fn elements_to_state(
    el: &KeplerianElements,
    mu: f64,
) -> Result<([f64; 3], [f64; 3]), ModelError> {
    if !(el.a > 0.0 && (0.0..1.0).contains(&el.e)) {
        return Err(ModelError::UnsupportedOrbit { a: el.a, e: el.e });
    }
    let e = el.e;
    let big_e = eccentric_anomaly(el.mean_anomaly, e);
    let (sin_e, cos_e) = big_e.sin_cos();
    let r = el.a * (1.0 - e * cos_e);
    // perifocal frame
    let x = el.a * (cos_e - e);
    let y = el.a * (1.0 - e * e).sqrt() * sin_e;
    let vscale = (mu * el.a).sqrt() / r;
    let vx = -vscale * sin_e;
    let vy = vscale * (1.0 - e * e).sqrt() * cos_e;
    // rotate by Rz(node) Rx(inclination) Rz(arg_peri)
    let (so, co) = el.node.sin_cos();
    let (si, ci) = el.inclination.sin_cos();
    let (sw, cw) = el.arg_peri.sin_cos();
    let rot = [
        [
            co * cw - so * sw * ci,
            -co * sw - so * cw * ci,
        ],
        [
            so * cw + co * sw * ci,
            -so * sw + co * cw * ci,
        ],
        [sw * si, cw * si],
    ];
    let apply = |px: f64, py: f64| {
        [
            rot[0][0] * px + rot[0][1] * py,
            rot[1][0] * px + rot[1][1] * py,
            rot[2][0] * px + rot[2][1] * py,
        ]
    };
    Ok((apply(x, y), apply(vx, vy)))
}

/// Parse an elements file: one body per line, `name m a e i Omega omega M`
/// with angles in degrees; `#` starts a comment.
pub fn load_elements(text: &str) -> Result<Vec<KeplerianElements>, ModelError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(ModelError::BadElementsFile(format!(
                "line {}: expected 8 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64, ModelError> {
            s.parse()
                .map_err(|_| ModelError::BadElementsFile(format!("line {}: bad number {s:?}", lineno + 1)))
        };
        let deg = std::f64::consts::PI / 180.0;
        out.push(KeplerianElements {
            name: fields[0].to_string(),
            mass: num(fields[1])?,
            a: num(fields[2])?,
            e: num(fields[3])?,
            inclination: num(fields[4])? * deg,
            node: num(fields[5])? * deg,
            arg_peri: num(fields[6])? * deg,
            mean_anomaly: num(fields[7])? * deg,
        });
    }
    if out.is_empty() {
        return Err(ModelError::BadElementsFile("no bodies".into()));
    }
    Ok(out)
}

/// Built-in synthetic planet sets: `inner4`, `outer4`, `planets8`.
pub fn builtin_elements(name: &str) -> Option<&'static str> {
    match name {
        "inner4" => Some(include_str!("../data/inner4.txt")),
        "outer4" => Some(include_str!("../data/outer4.txt")),
        "planets8" => Some(include_str!("../data/planets8.txt")),
        _ => None,
    }
}

/// Build a heliocentric system plus its initial state from elements, with a
/// 1-solar-mass primary and `G` in AU/yr/Msun units.
pub fn helio_system(elements: &[KeplerianElements]) -> Result<(HelioSystem, PhaseState), ModelError> {
    let m0 = 1.0;
    let g = G_AU_YR_MSUN;
    let masses: Vec<f64> = elements.iter().map(|e| e.mass).collect();
    let sys = HelioSystem::new(m0, g, masses);
    let n = elements.len();
    let mut q = vec![0.0; 3 * n];
    let mut p = vec![0.0; 3 * n];
    for (i, el) in elements.iter().enumerate() {
        let (r, v) = elements_to_state(el, sys.mu(i))?;
        let mt = sys.reduced_mass(i);
        for d in 0..3 {
            q[3 * i + d] = r[d];
            p[3 * i + d] = mt * v[d];
        }
    }
    Ok((sys, PhaseState::new(q, p)))
}

/// Relative energy deviations `|H(t_k) - H(t_0)| / |H(t_0)|` of a sampled
/// trajectory, plus their maximum.
#[derive(Debug, Clone)]
pub struct EnergySeries {
    pub deviations: Vec<f64>,
    pub max: f64,
}

pub fn energy_error_series(energies: &[f64]) -> Result<EnergySeries, ModelError> {
    if energies.len() < 2 {
        return Err(ModelError::TooFewSamples);
    }
    let h0 = energies[0];
    if h0 == 0.0 {
        return Err(ModelError::ZeroReferenceEnergy);
    }
    let deviations: Vec<f64> = energies.iter().map(|h| ((h - h0) / h0).abs()).collect();
    let max = deviations.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(EnergySeries { deviations, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::Accum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn apply_a(sys: &dyn SplitSystem, s: &PhaseState, tau: f64) -> PhaseState {
        let mut out = s.clone();
        sys.flow_a(&mut Accum::plain(&mut out), tau).unwrap();
        out
    }

    fn apply_b(sys: &dyn SplitSystem, s: &PhaseState, tau: f64) -> PhaseState {
        let mut out = s.clone();
        sys.flow_b(&mut Accum::plain(&mut out), tau).unwrap();
        out
    }

    #[test]
    fn perturbed_kepler_energy_at_standard_point() {
        // H(x0) = -1/2 + 64 eps / 27 at q = (3/4, 0), p = (0, sqrt(5/3))
        let sys = perturbed_kepler(1e-2);
        let x0 = perturbed_kepler_initial(0.25);
        let expect = -0.5 + 0.64 / 27.0;
        assert!((sys.energy(&x0) - expect).abs() < 1e-14);
        // eps = 1e-3: perturbation part is O(eps) of the total
        let sys = perturbed_kepler(1e-3);
        let ratio = (sys.energy_b(&x0) / sys.energy(&x0)).abs();
        assert!(ratio > 1e-4 && ratio < 1e-2, "ratio {ratio}");
    }

    #[test]
    fn perturbed_kepler_gradient_matches_finite_differences() {
        let sys = perturbed_kepler(3e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let q = [rng.gen_range(-2.0..2.0f64), rng.gen_range(-2.0..2.0f64)];
            let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
            if r < 1e-2 {
                continue;
            }
            let mut grad = [0.0; 2];
            sys.grad_b(&q, &mut grad).unwrap();
            let u = |q: &[f64; 2]| {
                let r2 = q[0] * q[0] + q[1] * q[1];
                -(0.5 * sys.epsilon) / (r2 * r2.sqrt()) * (1.0 - 3.0 * q[0] * q[0] / r2)
            };
            for d in 0..2 {
                let h = 1e-6;
                let mut qp = q;
                let mut qm = q;
                qp[d] += h;
                qm[d] -= h;
                let fd = (u(&qp) - u(&qm)) / (2.0 * h);
                let scale = grad[d].abs().max(1e-3);
                assert!(
                    (grad[d] - fd).abs() <= 1e-8 * scale.max(1.0) + 1e-9,
                    "grad[{d}] = {} vs fd {fd} at q = {q:?}",
                    grad[d]
                );
            }
        }
    }

    #[test]
    fn zero_epsilon_b_flow_is_identity_on_momenta() {
        let sys = perturbed_kepler(0.0);
        let x0 = perturbed_kepler_initial(0.25);
        let out = apply_b(&sys, &x0, 0.37);
        assert_eq!(out, x0);
    }

    #[test]
    fn part_energies_sum_to_total_at_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pk = perturbed_kepler(1e-2);
        for _ in 0..10_000 {
            let s = PhaseState::new(
                vec![rng.gen_range(0.3..2.0), rng.gen_range(-1.0..1.0)],
                vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
            );
            let lhs = pk.energy(&s);
            let rhs = pk.energy_a(&s) + pk.energy_b(&s);
            assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0));
        }
        let (helio, base) = helio_system(&load_elements(builtin_elements("outer4").unwrap()).unwrap()).unwrap();
        for _ in 0..10_000 {
            let mut s = base.clone();
            for v in s.q.iter_mut() {
                *v *= rng.gen_range(0.9..1.1);
            }
            for v in s.p.iter_mut() {
                *v *= rng.gen_range(0.9..1.1);
            }
            let lhs = helio.energy(&s);
            let rhs = helio.energy_a(&s) + helio.energy_b(&s);
            assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn helio_single_planet_reduces_to_kepler() {
        let elements = vec![KeplerianElements {
            name: "solo".into(),
            mass: 1e-4,
            a: 1.3,
            e: 0.1,
            inclination: 0.2,
            node: 0.4,
            arg_peri: 1.0,
            mean_anomaly: 2.0,
        }];
        let (sys, s0) = helio_system(&elements).unwrap();
        assert!(sys.energy_b(&s0).abs() < 1e-30); // empty pair sum
        let untouched = apply_b(&sys, &s0, 0.5);
        assert_eq!(untouched, s0);
        // A-flow alone conserves total energy
        let e0 = sys.energy(&s0);
        let mut s = s0.clone();
        for _ in 0..100 {
            s = apply_a(&sys, &s, 0.01);
            assert!((sys.energy(&s) - e0).abs() <= 1e-12 * e0.abs());
        }
    }

    #[test]
    fn helio_two_planet_toy_magnitudes() {
        // near-circular Jupiter/Saturn-like pair
        let elements = load_elements(
            "o1 1.0e-3 1.0 0.001 0.0 0.0 0.0 10.0\no2 3.0e-4 5.2 0.001 0.0 0.0 0.0 200.0",
        )
        .unwrap();
        let (sys, s0) = helio_system(&elements).unwrap();
        let ratio = (sys.energy_b(&s0) / sys.energy_a(&s0)).abs();
        assert!(ratio > 1e-5 && ratio < 1e-2, "ratio {ratio}");
    }

    #[test]
    fn orthogonal_momenta_contribute_nothing_to_coupling() {
        let elements = load_elements(
            "o1 1.0e-3 1.0 0.0 0.0 0.0 0.0 0.0\no2 3.0e-4 5.2 0.0 0.0 0.0 0.0 90.0",
        )
        .unwrap();
        let (sys, mut s) = helio_system(&elements).unwrap();
        // force exactly orthogonal momenta
        s.p[0] = 1e-3;
        s.p[1] = 0.0;
        s.p[2] = 0.0;
        s.p[3] = 0.0;
        s.p[4] = 2e-4;
        s.p[5] = 0.0;
        let mut pair_potential = 0.0;
        for d in 0..3 {
            let dd = s.q[d] - s.q[3 + d];
            pair_potential += dd * dd;
        }
        let expect = -sys.g() * sys.masses()[0] * sys.masses()[1] / pair_potential.sqrt();
        assert!((sys.energy_b(&s) - expect).abs() <= 1e-18);
    }

    #[test]
    fn helio_a_flow_conserves_per_planet_two_body_energy() {
        let (sys, s0) =
            helio_system(&load_elements(builtin_elements("planets8").unwrap()).unwrap()).unwrap();
        let before: Vec<f64> = (0..8).map(|i| sys.planet_two_body_energy(&s0, i)).collect();
        let mut s = s0;
        for _ in 0..50 {
            s = apply_a(&sys, &s, 0.02);
        }
        for i in 0..8 {
            let after = sys.planet_two_body_energy(&s, i);
            assert!(
                (after - before[i]).abs() <= 50.0 * 1e-13 * before[i].abs(),
                "planet {i}: {} -> {after}",
                before[i]
            );
        }
    }

    #[test]
    fn b_flow_conserves_total_momentum() {
        let (sys, s0) =
            helio_system(&load_elements(builtin_elements("outer4").unwrap()).unwrap()).unwrap();
        let total = |s: &PhaseState, d: usize| -> f64 { (0..4).map(|i| s.p[3 * i + d]).sum() };
        let before = [total(&s0, 0), total(&s0, 1), total(&s0, 2)];
        let scale = s0.p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut s = s0;
        for _ in 0..1000 {
            s = apply_b(&sys, &s, 0.05);
        }
        for d in 0..3 {
            assert!(
                (total(&s, d) - before[d]).abs() <= 1e-13 * scale,
                "component {d}"
            );
        }
    }

    #[test]
    fn elements_basic_geometry() {
        let el = KeplerianElements {
            name: "t".into(),
            mass: 1e-9,
            a: 1.0,
            e: 0.0,
            inclination: 0.0,
            node: 0.0,
            arg_peri: 0.0,
            mean_anomaly: 0.0,
        };
        let mu = 2.5;
        let (r, v) = elements_to_state(&el, mu).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15 && r[1].abs() < 1e-15 && r[2].abs() < 1e-15);
        assert!(v[0].abs() < 1e-15 && (v[1] - mu.sqrt()).abs() < 1e-14 && v[2].abs() < 1e-15);

        // perihelion distance a (1 - e)
        let el = KeplerianElements { e: 0.25, ..el };
        let (r, _) = elements_to_state(&el, 1.0).unwrap();
        let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        assert!((rn - 0.75).abs() < 1e-14);

        // hyperbolic rejected
        let bad = KeplerianElements { e: 1.2, ..el };
        assert!(matches!(
            elements_to_state(&bad, 1.0),
            Err(ModelError::UnsupportedOrbit { .. })
        ));
    }

    /// Inverse conversion used as the round-trip oracle.
    fn state_to_elements(r: &[f64; 3], v: &[f64; 3], mu: f64) -> (f64, f64, f64, f64, f64, f64) {
        let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let a = 1.0 / (2.0 / rn - v2 / mu);
        let h = [
            r[1] * v[2] - r[2] * v[1],
            r[2] * v[0] - r[0] * v[2],
            r[0] * v[1] - r[1] * v[0],
        ];
        let hn = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
        let inc = (h[2] / hn).acos();
        let node = h[0].atan2(-h[1]).rem_euclid(std::f64::consts::TAU);
        // eccentricity vector
        let rv = r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
        let mut evec = [0.0; 3];
        for d in 0..3 {
            evec[d] = (v2 / mu - 1.0 / rn) * r[d] - rv / mu * v[d];
        }
        let e = (evec[0] * evec[0] + evec[1] * evec[1] + evec[2] * evec[2]).sqrt();
        // argument of perihelion from node line
        let nvec = [node.cos(), node.sin(), 0.0];
        let cosw = (nvec[0] * evec[0] + nvec[1] * evec[1]) / e;
        let mut w = cosw.clamp(-1.0, 1.0).acos();
        if evec[2] < 0.0 {
            w = std::f64::consts::TAU - w;
        }
        // eccentric anomaly from radius and radial velocity
        let cos_e = (1.0 - rn / a) / e;
        let sin_e = rv / (e * (mu * a).sqrt());
        let big_e = sin_e.atan2(cos_e);
        let m = (big_e - e * sin_e).rem_euclid(std::f64::consts::TAU);
        (a, e, inc, node, w, m)
    }

    #[test]
    fn elements_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let el = KeplerianElements {
                name: "r".into(),
                mass: 1e-9,
                a: rng.gen_range(0.3..30.0),
                e: rng.gen_range(0.01..0.9),
                inclination: rng.gen_range(0.01..3.0),
                node: rng.gen_range(0.0..std::f64::consts::TAU),
                arg_peri: rng.gen_range(0.01..std::f64::consts::TAU - 0.01),
                mean_anomaly: rng.gen_range(0.0..std::f64::consts::TAU),
            };
            let mu = rng.gen_range(0.5..50.0);
            let (r, v) = elements_to_state(&el, mu).unwrap();
            let (a, e, inc, node, w, m) = state_to_elements(&r, &v, mu);
            assert!((a - el.a).abs() <= 1e-10 * el.a, "a {} vs {}", a, el.a);
            assert!((e - el.e).abs() <= 1e-10);
            assert!((inc - el.inclination).abs() <= 1e-10);
            let angdiff = |x: f64, y: f64| {
                let d = (x - y).rem_euclid(std::f64::consts::TAU);
                d.min(std::f64::consts::TAU - d)
            };
            assert!(angdiff(node, el.node) <= 1e-9);
            assert!(angdiff(w, el.arg_peri) <= 1e-8, "w {} vs {}", w, el.arg_peri);
            assert!(angdiff(m, el.mean_anomaly) <= 1e-8);
        }
    }

    #[test]
    fn builtin_element_files_parse() {
        for name in ["inner4", "outer4", "planets8"] {
            let els = load_elements(builtin_elements(name).unwrap()).unwrap();
            assert!(els.iter().all(|e| e.mass > 0.0 && e.a > 0.0 && e.e < 1.0));
            match name {
                "planets8" => assert_eq!(els.len(), 8),
                _ => assert_eq!(els.len(), 4),
            }
        }
        assert!(builtin_elements("nope").is_none());
        assert!(load_elements("x 1 2").is_err());
        assert!(load_elements("# only comments\n").is_err());
    }

    #[test]
    fn energy_series_edges() {
        let s = energy_error_series(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.max, 0.0);
        assert!(s.deviations.iter().all(|d| *d == 0.0));
        assert!(matches!(
            energy_error_series(&[1.0]),
            Err(ModelError::TooFewSamples)
        ));
        assert!(matches!(
            energy_error_series(&[0.0, 1.0]),
            Err(ModelError::ZeroReferenceEnergy)
        ));
    }

    #[test]
    fn exact_flow_energy_series_stays_flat() {
        let sys = perturbed_kepler(0.0);
        let mut s = perturbed_kepler_initial(0.25);
        let mut energies = vec![sys.energy(&s)];
        for _ in 0..2000 {
            s = apply_a(&sys, &s, 0.01);
            energies.push(sys.energy(&s));
        }
        let series = energy_error_series(&energies).unwrap();
        assert!(series.max <= 1e-13, "max {}", series.max);
    }
}

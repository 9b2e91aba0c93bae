//! Symplectic splitting methods for near-integrable Hamiltonian systems.
//!
//! The crate covers the full pipeline for ABA-type splitting integrators
//! applied to systems of the form `H = H_a + eps * H_b` with `H_a` exactly
//! solvable (perturbed Kepler problems, heliocentric planetary N-body):
//!
//! - [`coeffs`]: registry of published splitting methods with 40-digit
//!   coefficients, palindromic expansion and node vectors;
//! - [`orderconds`]: Lyndon multi-index enumeration, generalized order
//!   conditions and high-precision certification;
//! - [`flows`]: exact elementary flows (universal-variable Kepler propagation,
//!   kicks, momentum-coupling drifts) and the symmetric 2nd-order inner
//!   scheme for approximate perturbation flows;
//! - [`models`]: concrete split systems (planar perturbed Kepler, heliocentric
//!   N-body) plus orbital-element initial conditions;
//! - [`engine`]: step composition with trailing/leading flow concatenation,
//!   compensated summation and efficiency sweeps;
//! - [`solver`]: re-derivation of method coefficients by grid search, Newton
//!   polishing and complex homotopy continuation;
//! - [`prec`]: the fixed-precision decimal arithmetic behind certification
//!   and the solver.

pub mod coeffs;
pub mod diag;
pub mod engine;
pub mod flows;
pub mod models;
pub mod orderconds;
pub mod prec;
pub mod solver;

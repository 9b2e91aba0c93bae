//! Generalized order conditions for splitting methods, indexed by Lyndon
//! multi-indices.
//!
//! A consistent splitting method with expanded coefficients `b_1..b_s` and
//! nodes `c_i = a_1 + ... + a_i` is of generalized order `(r_1,...,r_m)` iff
//! `c_{s+1} = 1` and, for every `k <= m` and every Lyndon multi-index
//! `(j_1,...,j_k)` of weight `<= r_k`,
//!
//! ```text
//! sum_{1 <= i_1 <= ... <= i_k <= s}  w(i) * b_{i_1} c_{i_1}^{j_1 - 1}
//!                                         * ... * b_{i_k} c_{i_k}^{j_k - 1}
//!     = 1 / ( j_1 (j_1 + j_2) ... (j_1 + ... + j_k) )
//! ```
//!
//! where the weight `w(i)` of a non-decreasing index tuple is `1 / (l_1! l_2!
//! ...)` over its runs of repeated indices. For symmetric (palindromic)
//! methods only odd-weight multi-indices matter.
//!
//! The left-hand side is evaluated by a single pass over stages: each stage
//! appends a run of `r >= 0` consecutive letters with weight `1/r!`, giving a
//! `O(k^2 s)` recurrence per multi-index instead of the `O(s^k)` tuple
//! enumeration (the unit tests validate one against the other).

use crate::coeffs::SplittingMethod;
use crate::prec::{BigFloat, Scalar};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrderCondError {
    #[error("multi-index must be a non-empty tuple of positive integers")]
    EmptyMultiIndex,
    #[error("coefficient arrays must have equal nonzero length (got {b} b, {c} c)")]
    LengthMismatch { b: usize, c: usize },
}

/// A `k`-tuple of positive integers indexing one generalized order condition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    parts: Vec<u32>,
}

impl MultiIndex {
    pub fn new(parts: Vec<u32>) -> Result<Self, OrderCondError> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(OrderCondError::EmptyMultiIndex);
        }
        Ok(MultiIndex { parts })
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn weight(&self) -> u32 {
        self.parts.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.parts.len()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self
            .parts
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        write!(f, "({inner})")
    }
}

/// Lyndon test: every proper prefix must compare lexicographically below the
/// complementary suffix. Singletons are Lyndon.
pub fn is_lyndon(m: &MultiIndex) -> bool {
    let p = m.parts();
    (1..p.len()).all(|k| p[..k] < p[k..])
}

/// All Lyndon multi-indices with at most `max_parts` parts and weight at most
/// `max_weight` (odd weight only when `odd_only`), sorted by weight then
/// lexicographically. Generation is Duval's algorithm over the alphabet
/// `{1..max_weight}`.
pub fn lyndon_upto(max_weight: u32, max_parts: usize, odd_only: bool) -> Vec<MultiIndex> {
    assert!(max_weight >= 1 && max_parts >= 1);
    let mut out: Vec<MultiIndex> = Vec::new();
    let mut w: Vec<u32> = vec![1];
    loop {
        if w.iter().sum::<u32>() <= max_weight && (!odd_only || w.iter().sum::<u32>() % 2 == 1) {
            out.push(MultiIndex { parts: w.clone() });
        }
        let mut t: Vec<u32> = (0..max_parts).map(|i| w[i % w.len()]).collect();
        while t.last() == Some(&max_weight) {
            t.pop();
        }
        match t.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
        w = t;
    }
    out.sort_by(|x, y| (x.weight(), &x.parts).cmp(&(y.weight(), &y.parts)));
    out
}

/// The condition set certifying a given generalized order. Consistency
/// (`sum a = sum b = 1`) is tracked separately from the multi-index list; the
/// weight-1 index `(1)` is the b-consistency equation and is excluded here.
#[derive(Debug, Clone)]
pub struct ConditionSet {
    pub order: Vec<u32>,
    pub symmetric: bool,
    pub indices: Vec<MultiIndex>,
    pub include_cubic: bool,
}

pub fn condition_set_for(order: &[u32], symmetric: bool, cubic: bool) -> ConditionSet {
    assert!(!order.is_empty());
    if symmetric {
        assert!(
            order.iter().all(|r| r % 2 == 0) && order.windows(2).all(|w| w[0] >= w[1]),
            "symmetric methods need even, non-increasing order entries"
        );
    }
    let all = lyndon_upto(order[0], order.len(), symmetric);
    let indices = all
        .into_iter()
        .filter(|m| m.weight() <= order[m.k() - 1] && m.weight() > 1)
        .collect();
    ConditionSet {
        order: order.to_vec(),
        symmetric,
        indices,
        include_cubic: cubic,
    }
}

/// Exact right-hand side `1 / (j_1 (j_1+j_2) ... (j_1+...+j_k))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

pub fn condition_rhs(m: &MultiIndex) -> Rational {
    let mut den: i64 = 1;
    let mut partial: i64 = 0;
    for &j in m.parts() {
        partial += j as i64;
        den *= partial;
    }
    Rational { num: 1, den }
}

/// Left-hand side of the order condition for multi-index `m`, evaluated over
/// any scalar type (f64 for scans, BigFloat/BigComplex/dual numbers in the
/// solver). `b` and `c` are the expanded stage coefficients and nodes.
pub fn condition_lhs<T: Scalar>(b: &[T], c: &[T], m: &MultiIndex) -> Result<T, OrderCondError> {
    if b.is_empty() || b.len() != c.len() {
        return Err(OrderCondError::LengthMismatch {
            b: b.len(),
            c: c.len(),
        });
    }
    let k = m.k();
    let proto = &b[0];
    // f[d] accumulates the sum over placements of the first d letters
    let mut f: Vec<T> = vec![proto.zero_like(); k + 1];
    f[0] = proto.one_like();
    for i in 0..b.len() {
        // letter factors for this stage: g[l] = b_i * c_i^(j_l - 1)
        let g: Vec<T> = m
            .parts()
            .iter()
            .map(|&j| {
                let mut pw = proto.one_like();
                for _ in 0..j - 1 {
                    pw = pw.mul(&c[i]);
                }
                b[i].mul(&pw)
            })
            .collect();
        let prev = f.clone();
        for d in 1..=k {
            // append a run of length r (letters d-r+1 ..= d) at this stage
            let mut run = prev[d].clone();
            let mut prod = proto.one_like();
            let mut factorial: u32 = 1;
            for r in 1..=d {
                prod = prod.mul(&g[d - r]);
                factorial *= r as u32;
                run = run.add(&prev[d - r].mul(&prod).div_u32(factorial));
            }
            f[d] = run;
        }
    }
    Ok(f[k].clone())
}

/// `condition_lhs - condition_rhs` in one call.
pub fn condition_residual<T: Scalar>(
    b: &[T],
    c: &[T],
    m: &MultiIndex,
) -> Result<T, OrderCondError> {
    let lhs = condition_lhs(b, c, m)?;
    let rhs = condition_rhs(m);
    Ok(lhs.sub(&b[0].lift_ratio(rhs.num, rhs.den)))
}

/// One certification line: condition label plus its signed residual.
#[derive(Debug, Clone)]
pub struct ConditionLine {
    pub label: String,
    pub residual: BigFloat,
}

/// Residual report for a method against a condition set.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub method_id: String,
    pub order: Vec<u32>,
    pub digits: usize,
    pub tol: f64,
    pub lines: Vec<ConditionLine>,
    pub certified: bool,
}

impl ConditionReport {
    pub fn max_abs_residual(&self) -> f64 {
        self.lines
            .iter()
            .map(|l| l.residual.abs().to_f64())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order = self
            .order
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(
            f,
            "method {} order ({}) digits {} tol {:e}",
            self.method_id, order, self.digits, self.tol
        )?;
        for line in &self.lines {
            writeln!(f, "  {:<14} residual {}", line.label, line.residual.to_sci(3))?;
        }
        writeln!(f, "  certified: {}", self.certified)
    }
}

/// Certify a method at its claimed generalized order, with all arithmetic at
/// `digits` significant digits (use at least 50 for 40-digit tables).
pub fn certify(method: &SplittingMethod, tol: f64, digits: usize) -> ConditionReport {
    certify_at_order(
        method,
        method.order(),
        true,
        method.cubic_condition(),
        tol,
        digits,
    )
}

/// Certify against an arbitrary order tuple (used by `verify --order`).
pub fn certify_at_order(
    method: &SplittingMethod,
    order: &[u32],
    symmetric: bool,
    include_cubic: bool,
    tol: f64,
    digits: usize,
) -> ConditionReport {
    assert!(tol > 0.0);
    let set = condition_set_for(order, symmetric, include_cubic);
    let (a, b) = method.expand(digits);
    let one = BigFloat::one(digits);
    let mut lines = Vec::new();

    let sum_a = a.iter().fold(BigFloat::zero(digits), |s, v| s + v);
    lines.push(ConditionLine {
        label: "consistency_a".into(),
        residual: sum_a - &one,
    });
    let sum_b = b.iter().fold(BigFloat::zero(digits), |s, v| s + v);
    lines.push(ConditionLine {
        label: "consistency_b".into(),
        residual: sum_b - &one,
    });

    let nodes = method.nodes(digits);
    let c = &nodes.c[..method.stages()];
    for m in &set.indices {
        let residual = condition_residual(&b, c, m).expect("expanded arrays are consistent");
        lines.push(ConditionLine {
            label: m.to_string(),
            residual,
        });
    }

    if set.include_cubic {
        let s3 = b.iter().fold(BigFloat::zero(digits), |s, v| s + v.powi(3));
        lines.push(ConditionLine {
            label: "cubic".into(),
            residual: s3,
        });
    }

    let certified = lines.iter().all(|l| l.residual.abs().to_f64() <= tol);
    ConditionReport {
        method_id: method.id().to_string(),
        order: order.to_vec(),
        digits,
        tol,
        lines,
        certified,
    }
}

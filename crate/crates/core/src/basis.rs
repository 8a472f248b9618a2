//! Truncated Wiener chaos basis built from tensorized Hermite polynomials of
//! the standardized Brownian increments on a uniform grid.
//!
//! A multi-index assigns a degree to every (time slot, Brownian component)
//! pair. Slots are flattened as `s = (i - 1) * d + (j - 1)` for `i in 1..=n`
//! and `j in 1..=d`; every ordering below refers to this flattening.
//!
//! The constant element is never materialized: the martingale built from the
//! basis starts at zero.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Probabilists' Hermite polynomial `H_i(x)` via the three-term recurrence.
pub fn hermite_eval(degree: usize, x: f64) -> f64 {
    match degree {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 1..degree {
                let next = x * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `C(n, k)` with overflow detection.
pub fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) is always divisible by i at this point.
        acc = acc.checked_mul((n - k + i) as u128)? / i as u128;
    }
    usize::try_from(acc).ok()
}

/// Sparse multi-index: `(slot, exponent)` pairs with strictly increasing slots
/// and positive exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    factors: Vec<(u32, u8)>,
}

impl MultiIndex {
    /// Builds from `(slot, exponent)` pairs; zero exponents are dropped and
    /// repeated slots are merged.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut factors: Vec<(u32, u8)> = Vec::new();
        let mut raw: Vec<(usize, usize)> = pairs.into_iter().filter(|&(_, e)| e > 0).collect();
        raw.sort_unstable();
        for (slot, exp) in raw {
            match factors.last_mut() {
                Some(last) if last.0 as usize == slot => last.1 += exp as u8,
                _ => factors.push((slot as u32, exp as u8)),
            }
        }
        Self { factors }
    }

    /// Builds from a dense exponent tuple in flattened slot order.
    pub fn from_dense(exponents: &[usize]) -> Self {
        Self::from_pairs(exponents.iter().copied().enumerate())
    }

    pub fn factors(&self) -> &[(u32, u8)] {
        &self.factors
    }

    pub fn degree(&self) -> usize {
        self.factors.iter().map(|&(_, e)| e as usize).sum()
    }

    /// Exponent of slot `(step, component)`, both zero-based.
    pub fn exponent(&self, step: usize, component: usize, dim: usize) -> usize {
        let slot = (step * dim + component) as u32;
        self.factors
            .iter()
            .find(|&&(s, _)| s == slot)
            .map_or(0, |&(_, e)| e as usize)
    }

    /// Last time step (1-based) carrying a nonzero exponent; 0 for the constant.
    pub fn activation(&self, dim: usize) -> usize {
        self.factors
            .last()
            .map_or(0, |&(s, _)| s as usize / dim + 1)
    }

    /// `sqrt(prod alpha!)`, the L2 norm of the unnormalized basis function.
    pub fn norm(&self) -> f64 {
        let prod: f64 = self
            .factors
            .iter()
            .map(|&(_, e)| (1..=e as u32).map(f64::from).product::<f64>())
            .product();
        prod.sqrt()
    }

    pub fn to_dense(&self, slots: usize) -> Vec<usize> {
        let mut dense = vec![0; slots];
        for &(s, e) in &self.factors {
            dense[s as usize] = e as usize;
        }
        dense
    }

    /// Lexicographic order on the dense exponent tuples.
    pub fn cmp_lex(&self, other: &Self) -> Ordering {
        let (a, b) = (&self.factors, &other.factors);
        let (mut i, mut j) = (0, 0);
        loop {
            match (a.get(i), b.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(sa, ea)), Some(&(sb, eb))) => match sa.cmp(&sb) {
                    // `a` has a positive exponent where `b` has zero.
                    Ordering::Less => return Ordering::Greater,
                    Ordering::Greater => return Ordering::Less,
                    Ordering::Equal => {
                        if ea != eb {
                            return ea.cmp(&eb);
                        }
                        i += 1;
                        j += 1;
                    }
                },
            }
        }
    }
}

/// Scaling applied to the basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    /// `H_alpha / sqrt(prod alpha!)`, orthonormal in L2.
    #[default]
    Orthonormal,
    /// Plain products of Hermite polynomials.
    Raw,
}

/// Chaos basis truncated at total degree `p` over `n` steps and `d`
/// Brownian components, constant excluded, sorted by activation date then
/// lexicographically.
#[derive(Debug, Clone)]
pub struct MultiIndexBasis {
    degree: usize,
    steps: usize,
    dim: usize,
    elements: Vec<MultiIndex>,
    activation: Vec<u32>,
    normalization: Vec<f64>,
    // offsets[k] = first element with activation >= k, for k in 0..=n+1.
    offsets: Vec<usize>,
    // Flattened factors for the evaluation hot loop.
    factor_start: Vec<u32>,
    factor_slot: Vec<u32>,
    factor_exp: Vec<u8>,
}

/// Enumerates every multi-index with `1 <= |alpha|_1 <= p`.
pub fn enumerate_basis(p: usize, n: usize, d: usize) -> Result<MultiIndexBasis> {
    if p == 0 || n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "basis needs p, n, d >= 1 (got p={p}, n={n}, d={d})"
        )));
    }
    let too_large = || Error::BasisTooLarge { p, n, d };
    let slots = n.checked_mul(d).ok_or_else(too_large)?;
    if p > u8::MAX as usize || slots > u32::MAX as usize {
        return Err(too_large());
    }
    let size = binomial(slots.checked_add(p).ok_or_else(too_large)?, p)
        .and_then(|c| c.checked_sub(1))
        .ok_or_else(too_large)?;
    // The flattened storage indexes factors with u32.
    if size.checked_mul(p).is_none_or(|f| f > u32::MAX as usize) {
        return Err(too_large());
    }

    let mut elements = Vec::with_capacity(size);
    let mut offsets = vec![0; n + 2];
    let mut stack = Vec::with_capacity(p);
    for step in 1..=n {
        offsets[step] = elements.len();
        let first = elements.len();
        let block = (step - 1) * d..step * d;
        for top in block {
            // The largest slot is `top`; the remaining slots form a
            // nondecreasing sequence bounded by it.
            for extra in 0..p {
                stack.clear();
                stack.push(top);
                push_multisets(top, extra, &mut stack, &mut elements);
            }
        }
        elements[first..].sort_unstable_by(|a: &MultiIndex, b| a.cmp_lex(b));
    }
    offsets[n + 1] = elements.len();
    debug_assert_eq!(elements.len(), size);

    let activation = elements.iter().map(|e| e.activation(d) as u32).collect();
    let normalization = elements.iter().map(MultiIndex::norm).collect();
    let mut factor_start = Vec::with_capacity(size + 1);
    let mut factor_slot = Vec::new();
    let mut factor_exp = Vec::new();
    for e in &elements {
        factor_start.push(factor_slot.len() as u32);
        for &(s, x) in e.factors() {
            factor_slot.push(s);
            factor_exp.push(x);
        }
    }
    factor_start.push(factor_slot.len() as u32);

    Ok(MultiIndexBasis {
        degree: p,
        steps: n,
        dim: d,
        elements,
        activation,
        normalization,
        offsets,
        factor_start,
        factor_slot,
        factor_exp,
    })
}

fn push_multisets(
    bound: usize,
    remaining: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<MultiIndex>,
) {
    if remaining == 0 {
        out.push(MultiIndex::from_pairs(stack.iter().map(|&s| (s, 1))));
        return;
    }
    for s in 0..=bound {
        stack.push(s);
        push_multisets(s, remaining - 1, stack, out);
        stack.pop();
    }
}

impl MultiIndexBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[MultiIndex] {
        &self.elements
    }

    /// Activation date `k(alpha)` of every element, in `1..=n`.
    pub fn activations(&self) -> &[u32] {
        &self.activation
    }

    pub fn normalization(&self) -> &[f64] {
        &self.normalization
    }

    /// Number of elements with activation date `<= k`.
    pub fn active_until(&self, k: usize) -> usize {
        self.offsets[(k + 1).min(self.steps + 1)]
    }

    /// Index of the first element activated strictly after step `k`.
    pub fn first_after(&self, k: usize) -> usize {
        self.active_until(k)
    }

    /// Index range of elements whose activation date is exactly `k`.
    pub fn activated_at(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub(crate) fn check_increments(&self, g: &[f64]) -> Result<()> {
        let expected = self.steps * self.dim;
        if g.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "path increments (n*d)",
                expected,
                actual: g.len(),
            });
        }
        Ok(())
    }

    /// Basis value of element `idx` from a precomputed univariate table.
    #[inline]
    pub(crate) fn value_from_table(&self, idx: usize, table: &HermiteTable) -> f64 {
        let lo = self.factor_start[idx] as usize;
        let hi = self.factor_start[idx + 1] as usize;
        let mut v = 1.0;
        for f in lo..hi {
            v *= table.get(self.factor_slot[f] as usize, self.factor_exp[f] as usize);
        }
        v
    }
}

/// Univariate Hermite values `h_k(g_s)` for every slot `s` and `k <= p`.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    width: usize,
    values: Vec<f64>,
}

impl HermiteTable {
    pub fn new(slots: usize, degree: usize) -> Self {
        Self {
            width: degree + 1,
            values: vec![0.0; slots * (degree + 1)],
        }
    }

    pub fn fill(&mut self, g: &[f64], scaling: Scaling) {
        let width = self.width;
        debug_assert_eq!(g.len() * width, self.values.len());
        for (row, &x) in self.values.chunks_exact_mut(width).zip(g) {
            row[0] = 1.0;
            if width > 1 {
                row[1] = x;
            }
            for k in 1..width - 1 {
                row[k + 1] = x * row[k] - k as f64 * row[k - 1];
            }
            if scaling == Scaling::Orthonormal {
                let mut fact = 1.0;
                for (k, v) in row.iter_mut().enumerate().skip(2) {
                    fact *= k as f64;
                    *v /= fact.sqrt();
                }
            }
        }
    }

    #[inline]
    pub fn get(&self, slot: usize, degree: usize) -> f64 {
        self.values[slot * self.width + degree]
    }
}

/// Per-path values of every basis element.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
}

/// Evaluates every basis element on one path's `n x d` increments (row-major
/// by time step).
pub fn eval_basis(basis: &MultiIndexBasis, g: &[f64], scaling: Scaling) -> Result<BasisValues> {
    basis.check_increments(g)?;
    let mut table = HermiteTable::new(g.len(), basis.degree);
    table.fill(g, scaling);
    let values = (0..basis.len())
        .map(|idx| basis.value_from_table(idx, &table))
        .collect();
    Ok(BasisValues { values })
}

/// Running sums `M_k = sum_{k(alpha) <= k} lambda_alpha * values[alpha]` for
/// `k = 0..=n`.
pub fn conditional_prefix_sum(
    basis: &MultiIndexBasis,
    values: &BasisValues,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    for (what, len) in [
        ("basis values", values.values.len()),
        ("lambda", lambda.len()),
    ] {
        if len != basis.len() {
            return Err(Error::ShapeMismatch {
                what,
                expected: basis.len(),
                actual: len,
            });
        }
    }
    let mut out = Vec::with_capacity(basis.steps + 1);
    let mut acc = 0.0;
    out.push(acc);
    for k in 1..=basis.steps {
        let r = basis.activated_at(k);
        acc += lambda[r.clone()]
            .iter()
            .zip(&values.values[r])
            .map(|(l, v)| l * v)
            .sum::<f64>();
        out.push(acc);
    }
    Ok(out)
}

//! Cubature over the torus `[0, 2π]^n` with normalised measure `d^nk/(2π)^n`.
//!
//! Two rules are available. The tensor rule uses Gauss–Chebyshev nodes in
//! `x = cos k`, which on the circle are the midpoints `k_i = (i + ½)π/n` of a
//! uniform grid; they never include `k = 0` or `k = π`. Its error estimate is
//! the difference to the same rule with half the nodes. The QMC rule averages
//! 16 independently scrambled Sobol sequences and reports the standard error
//! of the replicate means.

pub mod bessel;
pub mod sobol;

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use bessel::{green_moment, watson, SingularPower};
use sobol::ScrambledSobol;

pub const DEFAULT_TARGET_ABS_ERROR: f64 = 5e-4;
pub const QMC_REPLICATES: usize = 16;
/// Largest per-pass evaluation count `integrate_box` grows to while chasing
/// `target_abs_error`.
const ADAPTIVE_BUDGET: usize = 1 << 24;
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum Method {
    TensorChebyshev { nodes_per_axis: usize },
    QuasiMonteCarlo { sample_count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    #[serde(flatten)]
    pub method: Method,
    pub seed: u64,
    pub target_abs_error: f64,
}

impl QuadratureSpec {
    pub fn tensor(nodes_per_axis: usize) -> Self {
        Self {
            method: Method::TensorChebyshev { nodes_per_axis },
            seed: 0,
            target_abs_error: DEFAULT_TARGET_ABS_ERROR,
        }
    }

    pub fn qmc(sample_count: usize, seed: u64) -> Self {
        Self {
            method: Method::QuasiMonteCarlo { sample_count },
            seed,
            target_abs_error: DEFAULT_TARGET_ABS_ERROR,
        }
    }

    /// Default rule for symmetric cosine-sum integrands in dimension `d`:
    /// tensor up to `d = 5`, 2^20 scrambled Sobol points beyond.
    pub fn for_dimension(d: usize) -> Self {
        match d {
            0 | 1 => Self::tensor(8192),
            2 => Self::tensor(1024),
            3 => Self::tensor(160),
            4 => Self::tensor(64),
            5 => Self::tensor(40),
            _ => Self::qmc(1 << 20, 0x5EED),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_target(mut self, target_abs_error: f64) -> Self {
        self.target_abs_error = target_abs_error;
        self
    }

    /// Multiply the node budget by `2^level` in dimension `d`.
    pub fn refined(mut self, level: u32, d: usize) -> Self {
        let factor = 2f64.powi(level as i32);
        self.method = match self.method {
            Method::TensorChebyshev { nodes_per_axis } => {
                let n = (nodes_per_axis as f64 * factor.powf(1.0 / d.max(1) as f64)).round();
                Method::TensorChebyshev { nodes_per_axis: (n as usize).max(2) & !1 }
            }
            Method::QuasiMonteCarlo { sample_count } => Method::QuasiMonteCarlo {
                sample_count: sample_count << level,
            },
        };
        self.target_abs_error /= factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::TensorChebyshev { nodes_per_axis } if nodes_per_axis < 2 => {
                return Err(Error::Parameter(format!(
                    "nodes_per_axis must be at least 2, got {nodes_per_axis}"
                )))
            }
            Method::QuasiMonteCarlo { sample_count: 0 } => {
                return Err(Error::Parameter("sample_count must be positive".into()))
            }
            _ => {}
        }
        if self.target_abs_error.is_nan() || self.target_abs_error <= 0.0 {
            return Err(Error::Parameter(format!(
                "target_abs_error must be positive, got {}",
                self.target_abs_error
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: u64,
}

impl QuadratureResult {
    pub fn exact(value: f64) -> Self {
        Self { value, abs_error_estimate: 0.0, evaluations: 0 }
    }

    /// Scale value and error by `a`.
    pub fn scaled(self, a: f64) -> Self {
        Self {
            value: a * self.value,
            abs_error_estimate: a.abs() * self.abs_error_estimate,
            evaluations: self.evaluations,
        }
    }

    /// Combine estimates from several parts of a rule.
    ///
    /// Tensor rules pass `[fine, coarse]`; the value is the fine sum and the
    /// error their difference. QMC rules pass one sum per replicate.
    pub(crate) fn from_parts(method: &Method, parts: &[f64], evaluations: u64) -> Self {
        match method {
            Method::TensorChebyshev { .. } => Self {
                value: parts[0],
                abs_error_estimate: (parts[0] - parts[1]).abs(),
                evaluations,
            },
            Method::QuasiMonteCarlo { .. } => {
                let r = parts.len() as f64;
                let mean = parts.iter().sum::<f64>() / r;
                let err = if parts.len() < 2 {
                    f64::INFINITY
                } else {
                    let var = parts.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (r - 1.0);
                    (var / r).sqrt()
                };
                Self { value: mean, abs_error_estimate: err, evaluations }
            }
        }
    }
}

/// `ε(k) = 2 ∑_j (1 − cos k_j)`.
pub fn epsilon(k: &[f64]) -> f64 {
    2.0 * k.iter().map(|kj| 1.0 - kj.cos()).sum::<f64>()
}

/// Midpoint `(i + ½)π/n`, the `i`-th Gauss–Chebyshev node mapped to `[0, π]`.
pub(crate) fn chebyshev_angle(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) * PI / n as f64
}

/// Sum `f` over `0..n` in fixed-size chunks. The chunk partial sums are
/// added in index order, so the result does not depend on thread count.
pub(crate) fn chunked_sum<F>(n: usize, f: F) -> Result<f64>
where
    F: Fn(Range<usize>) -> Result<f64> + Sync,
{
    let ranges: Vec<Range<usize>> = (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    let partial: Vec<Result<f64>> = {
        use rayon::prelude::*;
        ranges.into_par_iter().map(&f).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partial: Vec<Result<f64>> = ranges.into_iter().map(&f).collect();
    let mut total = 0.0;
    for p in partial {
        total += p?;
    }
    Ok(total)
}

fn check_finite(value: f64, node: &[f64]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::EvaluationFailure { node: node.to_vec(), value })
    }
}

/// Full tensor midpoint rule with `2n` nodes per axis on `[0, 2π)`.
fn tensor_box<F>(f: &F, dim: usize, n: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let per_axis = 2 * n;
    let total = per_axis.checked_pow(dim as u32).ok_or_else(|| {
        Error::Parameter(format!("tensor grid {per_axis}^{dim} is too large"))
    })?;
    let angles: Vec<f64> = (0..per_axis).map(|i| chebyshev_angle(i, n)).collect();
    let sum = chunked_sum(total, |range| {
        let mut k = vec![0.0; dim];
        let mut acc = 0.0;
        for idx in range {
            let mut rest = idx;
            for kj in k.iter_mut() {
                *kj = angles[rest % per_axis];
                rest /= per_axis;
            }
            acc += check_finite(f(&k), &k)?;
        }
        Ok(acc)
    })?;
    Ok(sum / total as f64)
}

fn qmc_replicate<F>(f: &F, dim: usize, per_replicate: usize, seed: u64, rep: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if dim > sobol::MAX_DIM {
        return Err(Error::Parameter(format!(
            "QMC supports at most {} dimensions, got {dim}",
            sobol::MAX_DIM
        )));
    }
    let seq = ScrambledSobol::new(dim, seed, rep);
    let sum = chunked_sum(per_replicate, |range| {
        let mut k = vec![0.0; dim];
        let mut acc = 0.0;
        let mut failure = None;
        seq.for_each_point_in(range, |x| {
            if failure.is_some() {
                return;
            }
            for (kj, xj) in k.iter_mut().zip(x) {
                *kj = 2.0 * PI * xj;
            }
            let v = f(&k);
            if v.is_finite() {
                acc += v;
            } else {
                failure = Some(Error::EvaluationFailure { node: k.clone(), value: v });
            }
        });
        failure.map_or(Ok(acc), Err)
    })?;
    Ok(sum / per_replicate as f64)
}

pub(crate) fn qmc_layout(sample_count: usize) -> (usize, usize) {
    let replicates = QMC_REPLICATES.min(sample_count).max(1);
    (replicates, (sample_count / replicates).max(1))
}

/// One pass of the rule described by `method`, without adaptation.
fn integrate_box_once<F>(f: &F, dim: usize, method: Method, seed: u64) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    match method {
        Method::TensorChebyshev { nodes_per_axis: n } => {
            let fine = tensor_box(f, dim, n)?;
            let coarse = tensor_box(f, dim, (n / 2).max(1))?;
            let evals = (2 * n).pow(dim as u32) + (2 * (n / 2).max(1)).pow(dim as u32);
            Ok(QuadratureResult::from_parts(&method, &[fine, coarse], evals as u64))
        }
        Method::QuasiMonteCarlo { sample_count } => {
            let (replicates, per) = qmc_layout(sample_count);
            let parts = (0..replicates as u64)
                .map(|r| qmc_replicate(f, dim, per, seed, r))
                .collect::<Result<Vec<_>>>()?;
            Ok(QuadratureResult::from_parts(&method, &parts, (replicates * per) as u64))
        }
    }
}

fn doubled(method: Method, dim: usize) -> Option<Method> {
    match method {
        Method::TensorChebyshev { nodes_per_axis } => {
            let n = nodes_per_axis * 2;
            (2 * n).checked_pow(dim as u32).filter(|&t| t <= ADAPTIVE_BUDGET)?;
            Some(Method::TensorChebyshev { nodes_per_axis: n })
        }
        Method::QuasiMonteCarlo { sample_count } => {
            let s = sample_count * 2;
            (s <= ADAPTIVE_BUDGET).then_some(Method::QuasiMonteCarlo { sample_count: s })
        }
    }
}

/// Normalised average of `f` over `[0, 2π]^dim`.
///
/// Starting from `spec`, the rule is doubled until the error estimate falls
/// below `spec.target_abs_error` or the evaluation budget is exhausted.
pub fn integrate_box<F>(f: F, dim: usize, spec: &QuadratureSpec) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    if dim == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    let mut method = spec.method;
    let mut evaluations = 0;
    loop {
        let mut res = integrate_box_once(&f, dim, method, spec.seed)?;
        evaluations += res.evaluations;
        res.evaluations = evaluations;
        if res.abs_error_estimate <= spec.target_abs_error {
            return Ok(res);
        }
        match doubled(method, dim) {
            Some(next) => method = next,
            None => return Ok(res),
        }
    }
}

/// `∫ numerator(k)/ε(k) d^dk/(2π)^d` where `numerator(k) → max(c_sum, 0)` as
/// `k → 0`.
///
/// With `c_sum ≠ 0` the constant part is integrated exactly through the
/// Watson integral and only the bounded remainder goes to [`integrate_box`].
pub fn integrate_inverse_epsilon<F>(
    numerator: F,
    c_sum: f64,
    d: usize,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if c_sum == 0.0 {
        return integrate_box(|k| numerator(k) / epsilon(k), d, spec);
    }
    let w = watson(d).ok_or_else(|| {
        Error::Divergence(format!(
            "1/ε weight with nonzero coefficient sum {c_sum} is not integrable in d = {d}"
        ))
    })?;
    let c0 = c_sum.max(0.0);
    let rest = integrate_box(|k| (numerator(k) - c0) / epsilon(k), d, spec)?;
    Ok(QuadratureResult { value: rest.value + c0 * w, ..rest })
}

/// Visit the nodes of the rule `method` restricted to integrands that are even
/// in every coordinate and symmetric under coordinate permutations.
///
/// The tensor rule enumerates multisets of the `n` midpoints on `[0, π]`
/// with multinomial weights; QMC visits its points unchanged. `visit` gets
/// `(part, k, weight)`, where parts are `[fine, coarse]` for the tensor rule
/// and replicates for QMC. Weights within each part sum to one.
pub(crate) fn for_each_symmetric_node(
    d: usize,
    method: Method,
    seed: u64,
    mut visit: impl FnMut(usize, &[f64], f64),
) -> Result<()> {
    match method {
        Method::TensorChebyshev { nodes_per_axis } => {
            if nodes_per_axis < 2 {
                return Err(Error::Parameter("nodes_per_axis must be at least 2".into()));
            }
            for (part, n) in [nodes_per_axis, nodes_per_axis / 2].into_iter().enumerate() {
                multiset_rule(d, n, |k, w| visit(part, k, w));
            }
        }
        Method::QuasiMonteCarlo { sample_count } => {
            if d > sobol::MAX_DIM {
                return Err(Error::Parameter(format!("QMC supports at most {} dimensions", sobol::MAX_DIM)));
            }
            let (replicates, per) = qmc_layout(sample_count);
            let w = 1.0 / per as f64;
            let mut k = vec![0.0; d];
            for rep in 0..replicates {
                ScrambledSobol::new(d, seed, rep as u64).for_each_point(per, |x| {
                    for (kj, xj) in k.iter_mut().zip(x) {
                        *kj = 2.0 * PI * xj;
                    }
                    visit(rep, &k, w);
                });
            }
        }
    }
    Ok(())
}

/// Number of nodes per part of [`for_each_symmetric_node`].
pub(crate) fn symmetric_part_sizes(d: usize, method: Method) -> Vec<usize> {
    match method {
        Method::TensorChebyshev { nodes_per_axis } => {
            vec![multiset_count(nodes_per_axis, d), multiset_count(nodes_per_axis / 2, d)]
        }
        Method::QuasiMonteCarlo { sample_count } => {
            let (r, per) = qmc_layout(sample_count);
            vec![per; r]
        }
    }
}

fn multiset_count(n: usize, d: usize) -> usize {
    // C(n + d − 1, d)
    let mut c = 1usize;
    for i in 0..d {
        c = c * (n + i) / (i + 1);
    }
    c
}

/// Nondecreasing index tuples `i_1 ≤ … ≤ i_d` of the `n` midpoints on
/// `[0, π]`, weighted by the number of orderings over `n^d`.
fn multiset_rule(d: usize, n: usize, mut visit: impl FnMut(&[f64], f64)) {
    let angles: Vec<f64> = (0..n).map(|i| chebyshev_angle(i, n)).collect();
    let mut factorial = vec![1.0f64; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let norm = factorial[d] / (n as f64).powi(d as i32);
    let mut idx = vec![0usize; d];
    let mut k = vec![angles[0]; d];
    loop {
        let mut denom = 1.0;
        let mut run = 1;
        for j in 1..d {
            if idx[j] == idx[j - 1] {
                run += 1;
            } else {
                denom *= factorial[run];
                run = 1;
            }
        }
        denom *= factorial[run];
        visit(&k, norm / denom);

        let Some(p) = (0..d).rev().find(|&p| idx[p] + 1 < n) else {
            break;
        };
        idx[p] += 1;
        for q in p + 1..d {
            idx[q] = idx[p];
        }
        for q in p..d {
            k[q] = angles[idx[q]];
        }
    }
}

/// Symmetric-integrand counterpart of [`integrate_box`] without adaptation:
/// one pass of `spec`, reusing the multiset reduction of the tensor rule.
pub fn integrate_symmetric<F>(f: F, d: usize, spec: &QuadratureSpec) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64,
{
    spec.validate()?;
    let sizes = symmetric_part_sizes(d, spec.method);
    let mut parts = vec![0.0; sizes.len()];
    let mut failure = None;
    for_each_symmetric_node(d, spec.method, spec.seed, |part, k, w| {
        let v = f(k);
        if v.is_finite() {
            parts[part] += w * v;
        } else if failure.is_none() {
            failure = Some(Error::EvaluationFailure { node: k.to_vec(), value: v });
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let evals: usize = sizes.iter().sum();
    Ok(QuadratureResult::from_parts(&spec.method, &parts, evals as u64))
}

/// Direct evaluation of `∫ 1/ε` on midpoint grids with the `2^d` cells
/// touching `k = 0` removed, Richardson-extrapolated from `n`, `2n` and `4n`
/// nodes per half-axis with error terms in `h` and `h^2`.
///
/// Diagnostic only; [`watson`] is the reference evaluation.
pub fn inverse_epsilon_direct(d: usize, n: usize) -> f64 {
    let excluded = |n: usize| {
        // the 2^d corner nodes (±π/(2n), …) all share this value
        let k = vec![chebyshev_angle(0, n); d];
        1.0 / epsilon(&k) * 2f64.powi(d as i32) / (2.0 * n as f64).powi(d as i32)
    };
    let q = |n: usize| {
        let mut s = 0.0;
        multiset_rule(d, n, |k, w| s += w / epsilon(k));
        s - excluded(n)
    };
    let (q1, q2, q4) = (q(n), q(2 * n), q(4 * n));
    // Q(h) = W + a h + b h²; eliminate a and b.
    let r12 = 2.0 * q2 - q1;
    let r24 = 2.0 * q4 - q2;
    (4.0 * r24 - r12) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrand() {
        for dim in 1..=4 {
            let r = integrate_box(|_| 1.0, dim, &QuadratureSpec::tensor(4)).unwrap();
            assert!((r.value - 1.0).abs() < 1e-14);
            assert!(r.abs_error_estimate < 1e-14);
            let r = integrate_box(|_| 1.0, dim, &QuadratureSpec::qmc(64, 1)).unwrap();
            assert!((r.value - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn product_of_odd_harmonics_vanishes() {
        let f = |k: &[f64]| k[0].cos() * k[1].cos();
        let r = integrate_box(f, 2, &QuadratureSpec::tensor(8)).unwrap();
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn abs_sine_average() {
        let spec = QuadratureSpec::tensor(16).with_target(1e-7);
        let r = integrate_box(|k| k[0].sin().abs(), 1, &spec).unwrap();
        let exact = 2.0 / PI;
        assert!((r.value - exact).abs() < 1e-7, "{r:?}");
        assert!((r.value - exact).abs() <= r.abs_error_estimate);
    }

    #[test]
    fn non_finite_value_reports_node() {
        let err = integrate_box(|k| if k[0] > 3.0 { f64::NAN } else { 0.0 }, 1, &QuadratureSpec::tensor(4));
        match err {
            Err(Error::EvaluationFailure { node, .. }) => assert!(node[0] > 3.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(integrate_box(|_| 1.0, 1, &QuadratureSpec::tensor(1)).is_err());
        assert!(integrate_box(|_| 1.0, 1, &QuadratureSpec::qmc(0, 0)).is_err());
        assert!(integrate_box(|_| 1.0, 1, &QuadratureSpec::tensor(4).with_target(0.0)).is_err());
    }

    #[test]
    fn inverse_epsilon_known_cases() {
        for d in 1..=4 {
            let num = |k: &[f64]| k.iter().map(|x| 1.0 - x.cos()).sum::<f64>() / d as f64;
            let r = integrate_inverse_epsilon(num, 0.0, d, &QuadratureSpec::tensor(4)).unwrap();
            assert!((r.value - 1.0 / (2.0 * d as f64)).abs() <= 1e-12);
        }
        let r = integrate_inverse_epsilon(|_| 1.0, 1.0, 3, &QuadratureSpec::tensor(8)).unwrap();
        assert!((r.value - watson(3).unwrap()).abs() < 1e-15);
        assert!(matches!(
            integrate_inverse_epsilon(|_| 1.0, 1.0, 2, &QuadratureSpec::tensor(8)),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn multiset_weights_sum_to_one() {
        for d in 1..=5 {
            for n in [2, 3, 7] {
                let mut total = 0.0;
                let mut count = 0;
                multiset_rule(d, n, |_, w| {
                    total += w;
                    count += 1;
                });
                assert!((total - 1.0).abs() < 1e-13);
                assert_eq!(count, multiset_count(n, d));
            }
        }
    }

    #[test]
    fn symmetric_rule_matches_full_tensor() {
        let f = |k: &[f64]| {
            let t: f64 = k.iter().map(|x| x.cos()).sum::<f64>() / k.len() as f64;
            (0.3 + t).max(0.0) * (1.0 + k.iter().map(|x| (2.0 * x).cos()).product::<f64>())
        };
        for d in 1..=3 {
            let spec = QuadratureSpec::tensor(6);
            let sym = integrate_symmetric(f, d, &spec).unwrap();
            let full = integrate_box_once(&f, d, spec.method, 0).unwrap();
            assert!((sym.value - full.value).abs() < 1e-13, "d={d}");
        }
    }

    #[test]
    fn results_are_deterministic() {
        let f = |k: &[f64]| (k[0] - k[1]).sin().powi(2) + k[2].cos().abs();
        let spec = QuadratureSpec::qmc(1 << 12, 99);
        let a = integrate_box(f, 3, &spec).unwrap();
        let b = integrate_box(f, 3, &spec).unwrap();
        assert_eq!(a, b);
    }
}

//! Reflection-positivity integrals of the loop model.
//!
//! All integrals are normalised averages over `k ∈ [0, 2π]^d`. The integrand
//! factor `(∑_ℓ c_ℓ t_ℓ(k))_+`, with `t_ℓ(k) = (1/d) ∑_j cos(ℓ k_j)`, is the
//! positive part of the cosine sum of the coefficient vector `c`.
//!
//! Whenever the kernel is singular at `k = 0` (as `ε^{-1/2}` or `ε^{-1}`) and
//! the numerator does not vanish there, the leading singular term is removed
//! node by node and added back exactly through the lattice Green function
//! moments of [`crate::quadrature::green_moment`]. What the rule integrates
//! is then bounded.

pub(crate) mod sample;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::golden_max;
use crate::quadrature::{QuadratureResult, QuadratureSpec};
pub use crate::quadrature::epsilon;
use sample::{integrate, Kernel, NodeSample, Numerators, PairTables};

/// Coefficients `c_0, …, c_m` of the cosine sum, with an optional tail
/// coefficient `c_∞` attached to a harmonic sent to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    head: Vec<f64>,
    tail: Option<f64>,
}

impl CoefficientVector {
    pub fn new(head: Vec<f64>) -> Result<Self> {
        if head.is_empty() {
            return Err(Error::Parameter("coefficient vector must be nonempty".into()));
        }
        if head.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("coefficients must be finite".into()));
        }
        Ok(Self { head, tail: None })
    }

    pub fn with_tail(head: Vec<f64>, tail: f64) -> Result<Self> {
        if !tail.is_finite() {
            return Err(Error::Parameter("tail coefficient must be finite".into()));
        }
        let mut c = Self::new(head)?;
        c.tail = Some(tail);
        Ok(c)
    }

    /// `(1 − η, η, 0, …, 0, −1)` of length `m + 1`.
    pub fn interpolating(eta: f64, m: usize) -> Self {
        let mut head = vec![0.0; m + 1];
        head[0] = 1.0 - eta;
        head[1] += eta;
        head[m] -= 1.0;
        Self { head, tail: None }
    }

    /// Head `(1 − η, η)` with tail `−1`.
    pub fn interpolating_limit(eta: f64) -> Self {
        Self { head: vec![1.0 - eta, eta], tail: Some(-1.0) }
    }

    pub fn head(&self) -> &[f64] {
        &self.head
    }

    pub fn tail(&self) -> Option<f64> {
        self.tail
    }

    /// Sum of all coefficients, tail included.
    pub fn sum(&self) -> f64 {
        self.head_sum() + self.tail.unwrap_or(0.0)
    }

    pub fn head_sum(&self) -> f64 {
        self.head.iter().sum()
    }

    /// Harmonics `ℓ ≥ 1` with nonzero coefficient.
    pub fn harmonics(&self) -> Vec<usize> {
        (1..self.head.len()).filter(|&l| self.head[l] != 0.0).collect()
    }

    /// `c_1 ≥ 0` and every other odd coefficient vanishes. The tail counts as
    /// an even harmonic.
    pub fn has_even_odd_support(&self) -> bool {
        let c1 = self.head.get(1).copied().unwrap_or(0.0);
        c1 >= 0.0 && self.head.iter().enumerate().skip(3).step_by(2).all(|(_, &c)| c == 0.0)
    }

    fn only_first_harmonic(&self) -> bool {
        self.head.len() <= 2 || self.head[2..].iter().all(|&c| c == 0.0)
    }

    fn pair(&self) -> (f64, f64) {
        (self.head[0], self.head.get(1).copied().unwrap_or(0.0))
    }

    fn require_head_only(&self, what: &str) -> Result<()> {
        match self.tail {
            Some(_) => Err(Error::WrongOperation(format!(
                "{what} takes a head-only coefficient vector; use the limit variant for a tail"
            ))),
            None => Ok(()),
        }
    }

    fn require_balanced_tail(&self, what: &str) -> Result<f64> {
        let tail = self.tail.ok_or_else(|| {
            Error::WrongOperation(format!("{what} needs a tail coefficient"))
        })?;
        let scale = self.head.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        if self.sum().abs() > 1e-12 * scale {
            return Err(Error::Precondition(format!(
                "{what} needs head sum + tail = 0, got {}",
                self.sum()
            )));
        }
        Ok(tail)
    }
}

/// Inverse temperature, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beta {
    Finite(f64),
    #[serde(with = "infinite_marker")]
    Infinite,
}

mod infinite_marker {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"inf\""))
        }
    }
}

impl Beta {
    /// `1/β`, zero at infinity.
    pub fn inverse(self) -> f64 {
        match self {
            Beta::Finite(b) => 1.0 / b,
            Beta::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Beta::Infinite)
    }
}

impl std::fmt::Display for Beta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Beta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" | "∞" => Ok(Beta::Infinite),
            _ => s
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("cannot parse β from {s:?}")))
                .and_then(|b| {
                    if b > 0.0 && b.is_finite() {
                        Ok(Beta::Finite(b))
                    } else {
                        Err(Error::Parameter(format!("β must be positive, got {b}")))
                    }
                }),
        }
    }
}

/// Model parameters `(d, θ, u, β)`.
///
/// Construction only checks what every consumer needs (`d ≥ 1`, `θ ≥ 1`,
/// `u ∈ [0, 1]`, `β > 0`); the bounds additionally require `θ ≥ 2` and
/// `u ≤ 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub theta: u32,
    pub u: f64,
    pub beta: Beta,
}

impl ModelParams {
    pub fn new(d: usize, theta: u32, u: f64, beta: Beta) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        if theta == 0 {
            return Err(Error::Parameter("θ must be a positive integer".into()));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Parameter(format!("u must lie in [0, 1], got {u}")));
        }
        if let Beta::Finite(b) = beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Parameter(format!("β must be positive, got {b}")));
            }
        }
        Ok(Self { d, theta, u, beta })
    }

    pub(crate) fn require_bound_domain(&self) -> Result<()> {
        if self.theta < 2 {
            return Err(Error::Domain(format!("bounds need θ ≥ 2, got {}", self.theta)));
        }
        if !(0.0..=0.5).contains(&self.u) {
            return Err(Error::Domain(format!("bounds need u ∈ [0, 1/2], got {}", self.u)));
        }
        Ok(())
    }

    /// `θ √(1 − u)`.
    pub fn gamma(&self) -> f64 {
        self.theta as f64 * (1.0 - self.u).sqrt()
    }
}

/// `ε(k + π) = 2 ∑_j (1 + cos k_j)`.
pub fn epsilon_shifted(k: &[f64]) -> f64 {
    2.0 * k.iter().map(|kj| 1.0 + kj.cos()).sum::<f64>()
}

/// `∑_ℓ ∑_j (c_ℓ/d) cos(ℓ k_j)` over the head coefficients.
pub fn cosine_sum(c: &CoefficientVector, k: &[f64]) -> f64 {
    let d = k.len() as f64;
    c.head
        .iter()
        .enumerate()
        .map(|(l, cl)| cl * k.iter().map(|kj| (l as f64 * kj).cos()).sum::<f64>() / d)
        .sum()
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn head_sample(c: &CoefficientVector, d: usize, spec: &QuadratureSpec) -> Result<std::sync::Arc<NodeSample>> {
    NodeSample::get(d, &c.harmonics(), false, spec)
}

/// `𝓘(α) = ∫ √(uα + (1−u)(1−α) ε(k+π)/ε(k)) (∑ c_ℓ t_ℓ)_+`.
pub fn ical(c: &CoefficientVector, u: f64, d: usize, alpha: f64, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    c.require_head_only("ical")?;
    check_unit("u", u)?;
    check_unit("α", alpha)?;
    let sample = head_sample(c, d, spec)?;
    integrate(&sample, &Numerators::head(&sample, &c.head), Kernel::Ical { u, alpha })
}

/// `d𝓘/dα` at `alpha`.
pub fn ical_slope(c: &CoefficientVector, u: f64, d: usize, alpha: f64, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    c.require_head_only("ical_slope")?;
    check_unit("u", u)?;
    check_unit("α", alpha)?;
    let sample = head_sample(c, d, spec)?;
    integrate(&sample, &Numerators::head(&sample, &c.head), Kernel::IcalSlope { u, alpha })
}

/// How [`sup_alpha_i`] resolved the supremum over `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupRoute {
    /// `u = 0`: the supremum is `J_c` at `α = 0`.
    ZeroCross,
    /// Even-odd support: `√(1 − u) J_c` at `α = 0`.
    EvenSupport,
    /// `c = (1, −1)`, `u = 1/2`: `1/√2` at `α = 1`.
    NearestNeighbourHalf,
    /// A nonpositive slope at `α = 0`.
    SlopeAtZero,
    /// A nonnegative slope at `α = 1`.
    SlopeAtOne,
    /// Golden-section search over `α` (concave objective).
    GoldenSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSup {
    pub value: QuadratureResult,
    pub argmax_alpha: f64,
    pub route: SupRoute,
}

pub const ALPHA_TOLERANCE: f64 = 1e-4;

/// `I_c = sup_{α ∈ [0, 1]} 𝓘(α)`.
///
/// Closed shortcuts are tried first; otherwise the endpoint slopes decide
/// whether an endpoint is optimal, and golden-section search handles the
/// interior case.
pub fn sup_alpha_i(c: &CoefficientVector, u: f64, d: usize, spec: &QuadratureSpec) -> Result<AlphaSup> {
    c.require_head_only("sup_alpha_I")?;
    if !(0.0..=0.5).contains(&u) {
        return Err(Error::Domain(format!("u must lie in [0, 1/2], got {u}")));
    }
    if u == 0.0 {
        let value = j(c, d, spec)?;
        return Ok(AlphaSup { value, argmax_alpha: 0.0, route: SupRoute::ZeroCross });
    }
    if c.has_even_odd_support() {
        let value = j(c, d, spec)?.scaled((1.0 - u).sqrt());
        return Ok(AlphaSup { value, argmax_alpha: 0.0, route: SupRoute::EvenSupport });
    }
    if c.head == [1.0, -1.0] && u == 0.5 {
        return Ok(AlphaSup {
            value: QuadratureResult::exact(std::f64::consts::FRAC_1_SQRT_2),
            argmax_alpha: 1.0,
            route: SupRoute::NearestNeighbourHalf,
        });
    }
    let sample = head_sample(c, d, spec)?;
    let nums = Numerators::head(&sample, &c.head);
    let slope = |alpha| integrate(&sample, &nums, Kernel::IcalSlope { u, alpha });
    // An infinite slope leaves the endpoint test inconclusive.
    if let Ok(s0) = slope(0.0) {
        if s0.value.is_finite() && s0.value <= 0.0 {
            let value = integrate(&sample, &nums, Kernel::Ical { u, alpha: 0.0 })?;
            return Ok(AlphaSup { value, argmax_alpha: 0.0, route: SupRoute::SlopeAtZero });
        }
    }
    if let Ok(s1) = slope(1.0) {
        if s1.value.is_finite() && s1.value >= 0.0 {
            let value = integrate(&sample, &nums, Kernel::Ical { u, alpha: 1.0 })?;
            return Ok(AlphaSup { value, argmax_alpha: 1.0, route: SupRoute::SlopeAtOne });
        }
    }
    golden_over_alpha(&sample, &nums, u)
}

/// The golden-section route of [`sup_alpha_i`] on its own, without shortcuts.
pub fn sup_alpha_i_search(c: &CoefficientVector, u: f64, d: usize, spec: &QuadratureSpec) -> Result<AlphaSup> {
    c.require_head_only("sup_alpha_I")?;
    check_unit("u", u)?;
    let sample = head_sample(c, d, spec)?;
    let nums = Numerators::head(&sample, &c.head);
    golden_over_alpha(&sample, &nums, u)
}

fn golden_over_alpha(sample: &NodeSample, nums: &Numerators, u: f64) -> Result<AlphaSup> {
    let eval = |alpha: f64| integrate(sample, nums, Kernel::Ical { u, alpha });
    let (a_star, _) = golden_max(|a| eval(a).map(|r| r.value), 0.0, 1.0, ALPHA_TOLERANCE)?;
    let mut best = (a_star, eval(a_star)?);
    for edge in [0.0, 1.0] {
        let r = eval(edge)?;
        if r.value > best.1.value {
            best = (edge, r);
        }
    }
    Ok(AlphaSup { value: best.1, argmax_alpha: best.0, route: SupRoute::GoldenSection })
}

/// `J_c = 𝓘^{u=0}_c(0) = ∫ √(ε(k+π)/ε(k)) (∑ c_ℓ t_ℓ)_+`.
///
/// Diverges for `d = 1` when `∑ c_ℓ > 0`.
pub fn j(c: &CoefficientVector, d: usize, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    c.require_head_only("J")?;
    let sample = head_sample(c, d, spec)?;
    if c.only_first_harmonic() {
        let (a, b) = c.pair();
        return PairTables::new(&sample).j(a, b);
    }
    integrate(&sample, &Numerators::head(&sample, &c.head), Kernel::Ical { u: 0.0, alpha: 0.0 })
}

/// `Ĩ_c = ∫ (∑ c_ℓ t_ℓ)_+ / ε(k)`. Diverges for `d ≤ 2` when `∑ c_ℓ > 0`.
pub fn tilde_i(c: &CoefficientVector, d: usize, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    c.require_head_only("Ĩ")?;
    let sample = head_sample(c, d, spec)?;
    if c.only_first_harmonic() {
        let (a, b) = c.pair();
        return PairTables::new(&sample).tilde_i(a, b);
    }
    integrate(&sample, &Numerators::head(&sample, &c.head), Kernel::InverseEpsilon)
}

fn limit_sample(c: &CoefficientVector, d: usize, spec: &QuadratureSpec) -> Result<std::sync::Arc<NodeSample>> {
    let with_tail = matches!(spec.method, crate::quadrature::Method::QuasiMonteCarlo { .. });
    NodeSample::get(d, &c.harmonics(), with_tail, spec)
}

/// Limit of `J` as the last harmonic of the coefficient vector is sent to
/// infinity: the `2d`-dimensional integral over `(k, k̃)` of
/// `√(ε(k+π)/ε(k)) (∑ c_ℓ t_ℓ(k) + c_∞ t_1(k̃))_+`.
///
/// The tensor rule integrates `k̃` with the same product rule, exactly
/// reduced to sorted prefix sums; the QMC rule samples all `2d` coordinates.
pub fn j_limit(c: &CoefficientVector, d: usize, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    let tail = c.require_balanced_tail("J_limit")?;
    let sample = limit_sample(c, d, spec)?;
    integrate(&sample, &Numerators::limit(&sample, &c.head, tail), Kernel::Ical { u: 0.0, alpha: 0.0 })
}

/// Limit of `Ĩ`, the `1/ε(k)`-weighted counterpart of [`j_limit`].
///
/// The numerator tends to `(∑_ℓ c_ℓ + c_∞ t_1(k̃))_+` as `k → 0`, which is
/// not identically zero, so the limit diverges for `d ≤ 2` unless the head
/// and tail both vanish.
pub fn tilde_i_limit(c: &CoefficientVector, d: usize, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    let tail = c.require_balanced_tail("Ĩ_limit")?;
    let sample = limit_sample(c, d, spec)?;
    integrate(&sample, &Numerators::limit(&sample, &c.head, tail), Kernel::InverseEpsilon)
}

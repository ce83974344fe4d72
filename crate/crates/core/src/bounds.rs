//! Lower bounds on connection probabilities and thresholds for long-range
//! order, assembled from the integrals in [`crate::rp_integrals`].

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{bisect_threshold, grid_then_golden_max, grid_then_golden_min, linear_grid, log_grid};
use crate::quadrature::{QuadratureResult, QuadratureSpec};
use crate::rp_integrals::{
    j, j_limit, sample::{NodeSample, PairTables}, sup_alpha_i, tilde_i, tilde_i_limit, Beta,
    CoefficientVector, ModelParams,
};

/// `η` range and grid size for the suprema over `η ≥ 0`.
pub const ETA_MIN: f64 = 1e-6;
pub const ETA_MAX: f64 = 32.0;
pub const ETA_GRID: usize = 65;
pub const P_GRID: usize = 201;
pub const GAMMA_TOLERANCE: f64 = 5e-3;
const REFINE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub value: f64,
    pub argmax_eta: Option<f64>,
    /// Integral values and intermediate quantities behind `value`.
    pub components: BTreeMap<String, f64>,
    pub error_estimate: f64,
}

impl BoundResult {
    fn new(value: f64, error_estimate: f64) -> Self {
        Self { value, argmax_eta: None, components: BTreeMap::new(), error_estimate }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.components.insert(key.to_string(), v);
        self
    }
}

/// Envelope `h_p(x)`: `1 − p + 2x√p` up to `x = √p`, then `1 + x²` up to
/// `x = 1`, then `2x`.
pub fn h(p: f64, x: f64) -> f64 {
    let sp = p.sqrt();
    if x <= sp {
        1.0 - p + 2.0 * x * sp
    } else if x <= 1.0 {
        1.0 + x * x
    } else {
        2.0 * x
    }
}

/// `(√(ζ² + 1 − θ/(4dβ)) − ζ)²` for `ζ = θ I/(2√2)`, or `None` below the
/// admissible β.
fn nn_formula(theta: f64, d: usize, beta: Beta, zeta: f64) -> Option<f64> {
    let slack = 1.0 - theta * beta.inverse() / (4.0 * d as f64);
    if slack < 0.0 {
        return None;
    }
    let r = (zeta * zeta + slack).sqrt();
    Some((r - zeta).powi(2).clamp(0.0, 1.0))
}

fn beta_floor_error(p: &ModelParams) -> Error {
    Error::Domain(format!(
        "β = {} is below the threshold θ/(4d) = {}",
        p.beta,
        p.theta as f64 / (4.0 * p.d as f64)
    ))
}

/// Lower bound on the nearest-neighbour connection probability.
pub fn nn_lower_bound(params: &ModelParams, spec: &QuadratureSpec) -> Result<BoundResult> {
    params.require_bound_domain()?;
    let theta = params.theta as f64;
    let i_nn = if params.u == 0.5 {
        QuadratureResult::exact(std::f64::consts::FRAC_1_SQRT_2)
    } else {
        sup_alpha_i(&CoefficientVector::new(vec![1.0, -1.0])?, params.u, params.d, spec)?.value
    };
    let zeta = if params.u == 0.5 { theta / 4.0 } else { theta / (2.0 * SQRT_2) * i_nn.value };
    let value = nn_formula(theta, params.d, params.beta, zeta).ok_or_else(|| beta_floor_error(params))?;
    let dz = theta / (2.0 * SQRT_2) * i_nn.abs_error_estimate;
    let error = match (nn_formula(theta, params.d, params.beta, zeta + dz), dz > 0.0) {
        (Some(v), true) => (v - value).abs(),
        _ => 0.0,
    };
    Ok(BoundResult::new(value, error).with("I_nn", i_nn.value).with("zeta", zeta))
}

/// Integral values entering one evaluation of an `η` objective.
struct EtaTerms {
    i_value: QuadratureResult,
    tilde: Option<QuadratureResult>,
}

/// `1 − η h_P(θ' I/(2√2 η)) − (θ/2β) Ĩ`, where `θ'` already carries any
/// `√(1 − u)` factor.
#[allow(clippy::too_many_arguments)]
fn eta_objective(eta: f64, p_nn: f64, theta_i: f64, theta: f64, beta: Beta, t: &EtaTerms, di: f64, dt: f64) -> f64 {
    let x = theta_i * (t.i_value.value + di) / (2.0 * SQRT_2 * eta);
    let tilde = t.tilde.map_or(0.0, |r| r.value + dt);
    1.0 - eta * h(p_nn, x) - theta * beta.inverse() / 2.0 * tilde
}

fn optimise_eta<F>(params: &ModelParams, p_nn: f64, theta_i: f64, mut terms: F) -> Result<BoundResult>
where
    F: FnMut(f64) -> Result<EtaTerms>,
{
    let theta = params.theta as f64;
    let grid = log_grid(ETA_MIN, ETA_MAX, ETA_GRID);
    let mut objective = |eta: f64| -> Result<f64> {
        let t = terms(eta)?;
        Ok(eta_objective(eta, p_nn, theta_i, theta, params.beta, &t, 0.0, 0.0))
    };
    let (eta, raw) = grid_then_golden_max(&mut objective, &grid, REFINE_TOLERANCE)?;
    let t = terms(eta)?;
    let di = t.i_value.abs_error_estimate;
    let dt = t.tilde.map_or(0.0, |r| r.abs_error_estimate);
    let perturbed = eta_objective(eta, p_nn, theta_i, theta, params.beta, &t, di, dt);
    let value = raw.clamp(0.0, 1.0);
    let error = if raw > 0.0 { (perturbed - raw).abs() } else { 0.0 };
    let mut out = BoundResult::new(value, error).with("objective", raw).with("P", p_nn).with("I", t.i_value.value);
    if let Some(tilde) = t.tilde {
        out = out.with("I_tilde", tilde.value);
    }
    out.argmax_eta = Some(eta);
    Ok(out)
}

/// Lower bound on the probability that `0` and `m e_1` share a loop, as a
/// supremum over `η ≥ 0` with `c(η) = (1 − η, η, 0, …, 0, −1)`.
pub fn finite_range_bound(m: usize, params: &ModelParams, spec: &QuadratureSpec) -> Result<BoundResult> {
    if m < 2 {
        return Err(Error::Domain(format!("range m must be at least 2, got {m}")));
    }
    let p_nn = nn_lower_bound(params, spec)?.value;
    let (u, d) = (params.u, params.d);
    let out = optimise_eta(params, p_nn, params.theta as f64, |eta| {
        let c = CoefficientVector::interpolating(eta, m);
        let i_value = sup_alpha_i(&c, u, d, spec)?.value;
        let tilde = match params.beta {
            Beta::Infinite => None,
            Beta::Finite(_) => Some(tilde_i(&c, d, spec)?),
        };
        Ok(EtaTerms { i_value, tilde })
    })?;
    Ok(out.with("m", m as f64))
}

/// The `m → ∞` counterpart of [`finite_range_bound`], built on the limit
/// integrals with head `(1 − η, η)` and tail `−1`.
///
/// In `d = 1` the limit `J` is infinite, which makes the objective `−∞` and
/// the bound vacuous.
pub fn long_range_bound(params: &ModelParams, spec: &QuadratureSpec) -> Result<BoundResult> {
    let p_nn = nn_lower_bound(params, spec)?.value;
    let d = params.d;
    let theta_i = params.gamma();
    let first = j_limit(&CoefficientVector::interpolating_limit(0.5), d, spec);
    if let Err(Error::Divergence(_)) = first {
        if let Beta::Finite(_) = params.beta {
            tilde_i_limit(&CoefficientVector::interpolating_limit(0.5), d, spec)?;
        }
        return Ok(BoundResult::new(0.0, 0.0).with("P", p_nn).with("J_limit", f64::INFINITY));
    }
    optimise_eta(params, p_nn, theta_i, |eta| {
        let c = CoefficientVector::interpolating_limit(eta);
        let i_value = j_limit(&c, d, spec)?;
        let tilde = match params.beta {
            Beta::Infinite => None,
            Beta::Finite(_) => Some(tilde_i_limit(&c, d, spec)?),
        };
        Ok(EtaTerms { i_value, tilde })
    })
}

/// `J_{(1−η, η)}` for many `η` from one sorted sample.
pub struct PairCurve {
    tables: PairTables,
    d: usize,
}

impl PairCurve {
    pub fn new(d: usize, spec: &QuadratureSpec) -> Result<Self> {
        let sample = NodeSample::get(d, &[1], false, spec)?;
        Ok(Self { tables: PairTables::new(&sample), d })
    }

    pub fn j(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.tables.j(a, b)?.value)
    }

    pub fn tilde_i(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.tables.tilde_i(a, b)?.value)
    }

    /// `b_γ(η, p) = 1 − η + pη − γ √(p/2) J_{(1−η, η)}`.
    pub fn b_gamma(&self, eta: f64, p: f64, gamma: f64) -> Result<f64> {
        Ok(1.0 - eta + p * eta - gamma * (p / 2.0).sqrt() * self.j(1.0 - eta, eta)?)
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

pub fn b_gamma(eta: f64, p_val: f64, gamma: f64, d: usize, spec: &QuadratureSpec) -> Result<f64> {
    if eta < 0.0 || !(0.0..=1.0).contains(&p_val) {
        return Err(Error::Domain(format!("need η ≥ 0 and p ∈ [0, 1], got η = {eta}, p = {p_val}")));
    }
    let c = CoefficientVector::new(vec![1.0 - eta, eta])?;
    Ok(1.0 - eta + p_val * eta - gamma * (p_val / 2.0).sqrt() * j(&c, d, spec)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMethod {
    /// Endpoints `η ∈ {0, 1}` only, `p ∈ [0, 1]`.
    Ueltschi,
    /// All `η ∈ [0, 1]`, `p` restricted to `[P(γ), 1]`.
    New,
}

impl PairCurve {
    /// `inf_{p ∈ [0,1]} max(b_γ(0, p), b_γ(1, p))`.
    pub fn b_ueltschi(&self, gamma: f64) -> Result<f64> {
        let (j10, j01) = (self.j(1.0, 0.0)?, self.j(0.0, 1.0)?);
        let f = |p: f64| {
            let root = gamma * (p / 2.0).sqrt();
            Ok((1.0 - root * j10).max(p - root * j01))
        };
        Ok(grid_then_golden_min(f, &linear_grid(0.0, 1.0, P_GRID), 1e-7)?.1)
    }

    /// Lower end `P(γ)` of the `p`-interval for [`GammaMethod::New`].
    pub fn p_floor(&self, gamma: f64) -> Result<f64> {
        let zeta = gamma * self.j(1.0, -1.0)? / (2.0 * SQRT_2);
        Ok(nn_formula(1.0, self.d, Beta::Infinite, zeta).expect("β = ∞ is always admissible"))
    }

    /// `inf_{p ∈ [P(γ), 1]} sup_{η ∈ [0, 1]} b_γ(η, p)`.
    pub fn b_new(&self, gamma: f64) -> Result<f64> {
        let lo = self.p_floor(gamma)?;
        let eta_grid = linear_grid(0.0, 1.0, ETA_GRID);
        let envelope = |p: f64| {
            grid_then_golden_max(|eta| self.b_gamma(eta, p, gamma), &eta_grid, 1e-7).map(|r| r.1)
        };
        Ok(grid_then_golden_min(envelope, &linear_grid(lo, 1.0, P_GRID), 1e-7)?.1)
    }

    pub fn b(&self, method: GammaMethod, gamma: f64) -> Result<f64> {
        match method {
            GammaMethod::Ueltschi => self.b_ueltschi(gamma),
            GammaMethod::New => self.b_new(gamma),
        }
    }

    /// `sup{γ : b(γ) > 0}` by bisection.
    pub fn threshold(&self, method: GammaMethod) -> Result<f64> {
        let (lo, hi) = (0.1, 50.0);
        if self.b(method, lo)? <= 0.0 {
            return Err(Error::Infeasible(format!("b({lo}) is not positive")));
        }
        bisect_threshold(|g| Ok(self.b(method, g)? > 0.0), lo, hi, GAMMA_TOLERANCE)
    }

    /// `√(2 / (J_{(1,0)} J_{(0,1)}))`, where the endpoint condition changes sign.
    pub fn ueltschi_closed_form(&self) -> Result<f64> {
        Ok((2.0 / (self.j(1.0, 0.0)? * self.j(0.0, 1.0)?)).sqrt())
    }
}

/// Largest `γ = θ√(1−u)` for which the method certifies long-range order.
pub fn gamma_threshold(method: GammaMethod, d: usize, spec: &QuadratureSpec) -> Result<f64> {
    if d <= 2 {
        return Err(Error::Divergence(format!("J_(1,0) path is not usable in d = {d}")));
    }
    PairCurve::new(d, spec)?.threshold(method)
}

/// Upper bound on the critical inverse temperature: long-range order holds
/// for every `β` above the returned value.
///
/// Minimises `(θ/2) Ĩ_{(1−η,η)} / (1 − η h_0(γ J_{(1−η,η)}/(2√2 η)))` over
/// the `η ∈ (0, 1]` where the denominator is positive.
pub fn beta_crit_upper(params: &ModelParams, spec: &QuadratureSpec) -> Result<BoundResult> {
    params.require_bound_domain()?;
    let d = params.d;
    if d <= 2 {
        return Err(Error::Divergence(format!("Ĩ_(1−η,η) diverges in d = {d}")));
    }
    let curve = PairCurve::new(d, spec)?;
    let gamma = params.gamma();
    let theta = params.theta as f64;
    let ratio = |eta: f64| -> Result<f64> {
        let jv = curve.j(1.0 - eta, eta)?;
        let denom = 1.0 - eta * h(0.0, gamma * jv / (2.0 * SQRT_2 * eta));
        if denom <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(theta / 2.0 * curve.tilde_i(1.0 - eta, eta)? / denom)
    };
    let grid = log_grid(ETA_MIN, 1.0, ETA_GRID);
    let (eta, value) = grid_then_golden_min(ratio, &grid, REFINE_TOLERANCE)?;
    if !value.is_finite() {
        return Err(Error::Infeasible(format!(
            "no η ∈ (0, 1] makes the denominator positive for γ = {gamma}"
        )));
    }
    let mut out = BoundResult::new(value, 0.0)
        .with("gamma", gamma)
        .with("J", curve.j(1.0 - eta, eta)?)
        .with("I_tilde", curve.tilde_i(1.0 - eta, eta)?);
    out.argmax_eta = Some(eta);
    Ok(out)
}

/// `∑_ℓ c_ℓ κ_ℓ − θ √(p_edge/2) I_c − (θ/2β) Ĩ_c` for caller-supplied
/// connection probabilities `κ_ℓ` at distance `ℓ` along a lattice axis.
pub fn connection_inequality_rhs(
    c: &CoefficientVector,
    params: &ModelParams,
    p_edge: f64,
    kappa: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    if kappa.len() != c.head().len() {
        return Err(Error::LengthMismatch { expected: c.head().len(), got: kappa.len() });
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::Domain(format!("p_edge must lie in [0, 1], got {p_edge}")));
    }
    params.require_bound_domain()?;
    let theta = params.theta as f64;
    let linear: f64 = c.head().iter().zip(kappa).map(|(a, b)| a * b).sum();
    let i_value = sup_alpha_i(c, params.u, params.d, spec)?.value.value;
    let tilde = match params.beta {
        Beta::Infinite => 0.0,
        Beta::Finite(b) => theta / (2.0 * b) * tilde_i(c, params.d, spec)?.value,
    };
    Ok(linear - theta * (p_edge / 2.0).sqrt() * i_value - tilde)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, theta: u32, u: f64, beta: Beta) -> ModelParams {
        ModelParams::new(d, theta, u, beta).unwrap()
    }

    #[test]
    fn h_branches() {
        for p in [0.0, 0.2, 0.64, 1.0] {
            assert!((h(p, 0.0) - (1.0 - p)).abs() < 1e-15);
            let sp = f64::sqrt(p);
            assert!((h(p, sp) - (1.0 + p)).abs() < 1e-15);
            assert!((h(p, sp + 1e-12) - (1.0 + p)).abs() < 1e-10);
            assert_eq!(h(p, 2.0), 4.0);
        }
    }

    #[test]
    fn h_is_continuous_and_nondecreasing() {
        for p in linear_grid(0.0, 1.0, 21) {
            let xs = linear_grid(0.0, 3.0, 3001);
            for w in xs.windows(2) {
                let (a, b) = (h(p, w[0]), h(p, w[1]));
                assert!(b >= a - 1e-15);
                assert!(b - a < 0.01, "jump at p={p}, x={}", w[1]);
            }
        }
    }

    #[test]
    fn nn_closed_form_at_half() {
        for theta in 2..=5u32 {
            for d in [1, 3, 7] {
                let r = nn_lower_bound(&params(d, theta, 0.5, Beta::Infinite), &QuadratureSpec::tensor(4)).unwrap();
                let z = theta as f64 / 4.0;
                assert!((r.value - ((z * z + 1.0).sqrt() - z).powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nn_vanishes_at_beta_floor_and_errors_below() {
        let spec = QuadratureSpec::tensor(4);
        let r = nn_lower_bound(&params(3, 2, 0.5, Beta::Finite(2.0 / 12.0)), &spec).unwrap();
        assert!(r.value.abs() < 1e-15);
        let err = nn_lower_bound(&params(3, 2, 0.5, Beta::Finite(0.1)), &spec).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("θ/(4d)")), "{err}");
    }

    #[test]
    fn bound_domain_is_enforced() {
        let spec = QuadratureSpec::tensor(4);
        assert!(matches!(nn_lower_bound(&params(3, 1, 0.5, Beta::Infinite), &spec), Err(Error::Domain(_))));
        assert!(matches!(nn_lower_bound(&params(3, 2, 0.7, Beta::Infinite), &spec), Err(Error::Domain(_))));
        assert!(finite_range_bound(1, &params(3, 2, 0.5, Beta::Infinite), &spec).is_err());
    }

    #[test]
    fn b_gamma_specialisations() {
        let spec = QuadratureSpec::tensor(40);
        let j10 = j(&CoefficientVector::new(vec![1.0, 0.0]).unwrap(), 3, &spec).unwrap().value;
        let b = b_gamma(0.0, 0.3, 2.0, 3, &spec).unwrap();
        assert!((b - (1.0 - 2.0 * (0.15f64).sqrt() * j10)).abs() < 1e-12);
        assert!((b_gamma(0.4, 0.3, 0.0, 3, &spec).unwrap() - (1.0 - 0.4 + 0.12)).abs() < 1e-15);
        let curve = PairCurve::new(3, &spec).unwrap();
        assert!((curve.b_gamma(0.4, 0.3, 1.7).unwrap() - b_gamma(0.4, 0.3, 1.7, 3, &spec).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ueltschi_bisection_matches_closed_form() {
        let curve = PairCurve::new(3, &QuadratureSpec::tensor(64)).unwrap();
        let bis = curve.threshold(GammaMethod::Ueltschi).unwrap();
        let closed = curve.ueltschi_closed_form().unwrap();
        assert!((bis - closed).abs() < 2.0 * GAMMA_TOLERANCE, "{bis} vs {closed}");
    }

    #[test]
    fn connection_inequality_rhs_specialisations() {
        let spec = QuadratureSpec::tensor(40);
        let p = params(3, 2, 0.5, Beta::Infinite);
        let c = CoefficientVector::new(vec![1.0, -1.0]).unwrap();
        let pe = 0.4;
        let rhs = connection_inequality_rhs(&c, &p, pe, &[1.0, pe], &spec).unwrap();
        let expect = 1.0 - pe - 2.0 * (pe / 2.0).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        assert!((rhs - expect).abs() < 1e-12);
        let c10 = CoefficientVector::new(vec![1.0, 0.0]).unwrap();
        let pf = params(3, 2, 0.0, Beta::Finite(2.0));
        assert!(connection_inequality_rhs(&c10, &pf, 0.3, &[0.0, 0.0], &spec).unwrap() <= 0.0);
        assert!(matches!(
            connection_inequality_rhs(&c, &p, 0.3, &[1.0], &spec),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
    }
}

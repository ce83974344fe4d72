//! Quadrature nodes reduced to the features the integrands actually use.
//!
//! Every integrand here depends on `k` only through the harmonic averages
//! `t_ℓ(k) = (1/d) ∑_j cos(ℓ k_j)`: the dispersion is `ε(k) = 2d(1 − t_1)`,
//! its reflection `ε(k+π) = 2d(1 + t_1)`, and the cosine sum is `∑ c_ℓ t_ℓ`.
//! A [`NodeSample`] stores weights and the needed `t_ℓ` per node once; the
//! integrals are then weighted sums over those columns.

use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::quadrature::{
    chunked_sum, for_each_symmetric_node, green_moment, symmetric_part_sizes, Method,
    QuadratureResult, QuadratureSpec, SingularPower,
};

#[derive(Debug)]
pub(crate) struct Part {
    pub w: Vec<f64>,
    /// One column per entry of `NodeSample::harmonics`.
    pub harm: Vec<Vec<f64>>,
    /// `t_1` of the second momentum for the 2d-dimensional QMC path.
    pub tail_t1: Option<Vec<f64>>,
}

#[derive(Debug)]
pub(crate) struct NodeSample {
    pub d: usize,
    pub method: Method,
    /// Sorted harmonics `ℓ ≥ 1`; always contains 1 at index 0.
    pub harmonics: Vec<usize>,
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    d: usize,
    harmonics: Vec<usize>,
    with_tail: bool,
    method: Method,
    seed: u64,
}

const CACHE_CAPACITY: usize = 10;

type Cache = Mutex<Vec<(Key, Arc<NodeSample>)>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(Vec::new()))
}

impl NodeSample {
    /// Sample for dimension `d` carrying harmonics `harmonics ∪ {1}`. With
    /// `with_tail` the rule must be QMC and runs in `2d` dimensions.
    pub fn get(
        d: usize,
        harmonics: &[usize],
        with_tail: bool,
        spec: &QuadratureSpec,
    ) -> Result<Arc<NodeSample>> {
        spec.validate()?;
        if d == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        let mut hs: Vec<usize> = harmonics.iter().copied().filter(|&l| l >= 1).collect();
        hs.push(1);
        hs.sort_unstable();
        hs.dedup();
        let key = Key { d, harmonics: hs, with_tail, method: spec.method, seed: spec.seed };
        let mut guard = cache().lock().expect("sample cache poisoned");
        if let Some(pos) = guard.iter().position(|(k, _)| *k == key) {
            let entry = guard.remove(pos);
            let sample = entry.1.clone();
            guard.push(entry);
            return Ok(sample);
        }
        drop(guard);
        let sample = Arc::new(Self::build(&key)?);
        let mut guard = cache().lock().expect("sample cache poisoned");
        if guard.len() >= CACHE_CAPACITY {
            guard.remove(0);
        }
        guard.push((key, sample.clone()));
        Ok(sample)
    }

    fn build(key: &Key) -> Result<Self> {
        let d = key.d;
        let dim = if key.with_tail {
            if !matches!(key.method, Method::QuasiMonteCarlo { .. }) {
                return Err(Error::Parameter(
                    "2d-dimensional node samples require the QMC rule".into(),
                ));
            }
            2 * d
        } else {
            d
        };
        let sizes = symmetric_part_sizes(dim, key.method);
        let mut parts: Vec<Part> = sizes
            .iter()
            .map(|&n| Part {
                w: Vec::with_capacity(n),
                harm: vec![Vec::with_capacity(n); key.harmonics.len()],
                tail_t1: key.with_tail.then(|| Vec::with_capacity(n)),
            })
            .collect();
        let inv_d = 1.0 / d as f64;
        for_each_symmetric_node(dim, key.method, key.seed, |p, k, w| {
            let part = &mut parts[p];
            part.w.push(w);
            for (col, &l) in part.harm.iter_mut().zip(&key.harmonics) {
                let lf = l as f64;
                col.push(k[..d].iter().map(|x| (lf * x).cos()).sum::<f64>() * inv_d);
            }
            if let Some(tail) = part.tail_t1.as_mut() {
                tail.push(k[d..].iter().map(|x| x.cos()).sum::<f64>() * inv_d);
            }
        })?;
        Ok(Self { d, method: key.method, harmonics: key.harmonics.clone(), parts })
    }

    pub fn evaluations(&self) -> u64 {
        self.parts.iter().map(|p| p.w.len() as u64).sum()
    }

    fn column(&self, l: usize) -> usize {
        self.harmonics.binary_search(&l).expect("harmonic missing from sample")
    }

    /// `∑_ℓ c_ℓ t_ℓ` at every node of `part`; `c_0` multiplies `t_0 = 1`.
    pub fn cosine_sums(&self, head: &[f64], part: usize) -> Vec<f64> {
        let p = &self.parts[part];
        let mut out = vec![head[0]; p.w.len()];
        for (l, &c) in head.iter().enumerate().skip(1) {
            if c == 0.0 {
                continue;
            }
            let col = &p.harm[self.column(l)];
            for (o, t) in out.iter_mut().zip(col) {
                *o += c * t;
            }
        }
        out
    }
}

/// Value of the positive-part numerator at each node and its limit as
/// `k → 0`, which multiplies the split-off singular term.
#[derive(Debug)]
pub(crate) struct Numerators {
    pub parts: Vec<PartNumerator>,
}

#[derive(Debug)]
pub(crate) struct PartNumerator {
    pub num: Vec<f64>,
    pub at_origin: AtOrigin,
}

#[derive(Debug)]
pub(crate) enum AtOrigin {
    Const(f64),
    PerNode(Vec<f64>),
}

impl Numerators {
    /// `(∑_ℓ c_ℓ t_ℓ)_+` for a head-only coefficient vector.
    pub fn head(sample: &NodeSample, head: &[f64]) -> Self {
        let origin = head.iter().sum::<f64>().max(0.0);
        let parts = (0..sample.parts.len())
            .map(|p| {
                let mut num = sample.cosine_sums(head, p);
                num.iter_mut().for_each(|v| *v = v.max(0.0));
                PartNumerator { num, at_origin: AtOrigin::Const(origin) }
            })
            .collect();
        Self { parts }
    }

    /// Numerator of the limit integrals with tail coefficient `tail`.
    ///
    /// Tensor samples average the second momentum exactly over the same rule
    /// (a product rule in `2d` dimensions) through [`SortedT1::phi`]. QMC
    /// samples carry the second momentum as extra coordinates.
    pub fn limit(sample: &NodeSample, head: &[f64], tail: f64) -> Self {
        let a0: f64 = head.iter().sum();
        let parts = (0..sample.parts.len())
            .map(|p| {
                let a = sample.cosine_sums(head, p);
                match &sample.parts[p].tail_t1 {
                    Some(g) => {
                        let num = a.iter().zip(g).map(|(a, g)| (a + tail * g).max(0.0)).collect();
                        let origin = g.iter().map(|g| (a0 + tail * g).max(0.0)).collect();
                        PartNumerator { num, at_origin: AtOrigin::PerNode(origin) }
                    }
                    None => {
                        let table = SortedT1::new(sample, p);
                        let num = a.iter().map(|&a| table.phi(a, tail)).collect();
                        PartNumerator { num, at_origin: AtOrigin::Const(table.phi(a0, tail)) }
                    }
                }
            })
            .collect();
        Self { parts }
    }
}

/// Integrand families sharing the numerator machinery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kernel {
    /// `√(uα + (1−u)(1−α) q)` with `q = ε(k+π)/ε(k)`.
    Ical { u: f64, alpha: f64 },
    /// `∂/∂α` of the `Ical` kernel.
    IcalSlope { u: f64, alpha: f64 },
    /// `1/ε(k)`.
    InverseEpsilon,
}

impl Kernel {
    #[inline]
    fn value(&self, t1: f64, d: f64) -> f64 {
        let q = (1.0 + t1) / (1.0 - t1);
        match *self {
            Kernel::Ical { u, alpha } => (u * alpha + (1.0 - u) * (1.0 - alpha) * q).sqrt(),
            Kernel::IcalSlope { u, alpha } => {
                (u - (1.0 - u) * q) / (2.0 * (u * alpha + (1.0 - u) * (1.0 - alpha) * q).sqrt())
            }
            Kernel::InverseEpsilon => 1.0 / (2.0 * d * (1.0 - t1)),
        }
    }

    /// Leading behaviour `coef · ε^{-s}` per unit numerator as `k → 0`.
    fn singular(&self, d: f64) -> Option<(SingularPower, f64)> {
        let root4d = (4.0 * d).sqrt();
        match *self {
            Kernel::Ical { u, alpha } => {
                let b = (1.0 - u) * (1.0 - alpha);
                (b > 0.0).then(|| (SingularPower::Half, b.sqrt() * root4d))
            }
            Kernel::IcalSlope { u, alpha } if alpha < 1.0 => {
                let c = -(1.0 - u).sqrt() / (2.0 * (1.0 - alpha).sqrt()) * root4d;
                (u < 1.0).then_some((SingularPower::Half, c))
            }
            Kernel::IcalSlope { u, .. } => {
                (u < 1.0).then(|| (SingularPower::One, -(1.0 - u) * 4.0 * d / (2.0 * u.sqrt())))
            }
            Kernel::InverseEpsilon => Some((SingularPower::One, 1.0)),
        }
    }
}

/// `∑ w · kernel · num` with the `k → 0` singularity integrated analytically.
pub(crate) fn integrate(
    sample: &NodeSample,
    numerators: &Numerators,
    kernel: Kernel,
) -> Result<QuadratureResult> {
    if let Kernel::IcalSlope { u, alpha } = kernel {
        if alpha >= 1.0 && u <= 0.0 {
            return Err(Error::Divergence("α-slope at α = 1 is infinite for u = 0".into()));
        }
    }
    let d = sample.d as f64;
    let singular = kernel.singular(d);
    let moment = singular.map(|(s, _)| green_moment(s, sample.d));
    let mut sums = Vec::with_capacity(sample.parts.len());
    for (part, pn) in sample.parts.iter().zip(&numerators.parts) {
        let t1 = &part.harm[0];
        let w = &part.w;
        let num = &pn.num;
        let origin_at = |i: usize| match &pn.at_origin {
            AtOrigin::Const(c) => *c,
            AtOrigin::PerNode(v) => v[i],
        };
        let sum = chunked_sum(w.len(), |range| {
            let mut acc = 0.0;
            for i in range {
                let mut f = if num[i] > 0.0 { kernel.value(t1[i], d) * num[i] } else { 0.0 };
                if let Some((power, coef)) = singular {
                    let n0 = origin_at(i);
                    if n0 != 0.0 {
                        let eps = 2.0 * d * (1.0 - t1[i]);
                        let weight = match power {
                            SingularPower::Half => eps.sqrt().recip(),
                            SingularPower::One => eps.recip(),
                        };
                        f -= coef * n0 * weight;
                    }
                }
                if !f.is_finite() {
                    return Err(Error::EvaluationFailure { node: vec![t1[i]], value: f });
                }
                acc += w[i] * f;
            }
            Ok(acc)
        })?;
        let origin_mass = match &pn.at_origin {
            AtOrigin::Const(c) => *c * w.iter().sum::<f64>(),
            AtOrigin::PerNode(v) => v.iter().zip(w).map(|(a, b)| a * b).sum(),
        };
        let added = match (singular, moment) {
            (Some((power, coef)), Some(m)) if origin_mass != 0.0 => match m {
                Some(m) => coef * origin_mass * m,
                None => {
                    return Err(Error::Divergence(format!(
                        "integrand behaves like ε^-{} near k = 0 in d = {}",
                        power.exponent(),
                        sample.d
                    )))
                }
            },
            _ => 0.0,
        };
        sums.push(sum + added);
    }
    Ok(QuadratureResult::from_parts(&sample.method, &sums, sample.evaluations()))
}

/// Per-part sorted `t_1` values with prefix sums, giving `O(log n)`
/// evaluation of the rule for numerators affine in `t_1` and of the
/// second-momentum average `Φ`.
#[derive(Debug)]
pub(crate) struct SortedT1 {
    t: Vec<f64>,
    w: Vec<f64>,
    wt: Vec<f64>,
    /// `w·s` and `w·s·t` with `s = √(ε(k+π)/ε(k))`.
    ws: Vec<f64>,
    wst: Vec<f64>,
    /// `w/ε` and `w·t/ε`.
    wie: Vec<f64>,
    wtie: Vec<f64>,
    /// `∑ w/√ε` over all nodes.
    w_rsqrt_eps: f64,
    d: usize,
}

fn prefix(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

impl SortedT1 {
    pub fn new(sample: &NodeSample, part: usize) -> Self {
        let d = sample.d;
        let p = &sample.parts[part];
        let mut pairs: Vec<(f64, f64)> = p.harm[0].iter().copied().zip(p.w.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let eps = |t: f64| 2.0 * d as f64 * (1.0 - t);
        let s = |t: f64| ((1.0 + t) / (1.0 - t)).sqrt();
        Self {
            t: pairs.iter().map(|p| p.0).collect(),
            w: prefix(pairs.iter().map(|p| p.1)),
            wt: prefix(pairs.iter().map(|p| p.1 * p.0)),
            ws: prefix(pairs.iter().map(|p| p.1 * s(p.0))),
            wst: prefix(pairs.iter().map(|p| p.1 * s(p.0) * p.0)),
            wie: prefix(pairs.iter().map(|p| p.1 / eps(p.0))),
            wtie: prefix(pairs.iter().map(|p| p.1 * p.0 / eps(p.0))),
            w_rsqrt_eps: pairs.iter().map(|p| p.1 / eps(p.0).sqrt()).sum(),
            d,
        }
    }

    /// `∑ over nodes with a + b t > 0 of (a·A + b·B)` for prefix columns `A`, `B`.
    fn positive_part(&self, a: f64, b: f64, ca: &[f64], cb: &[f64]) -> f64 {
        let n = self.t.len();
        if b > 0.0 {
            let thr = -a / b;
            let i = self.t.partition_point(|&t| t <= thr);
            a * (ca[n] - ca[i]) + b * (cb[n] - cb[i])
        } else if b < 0.0 {
            let thr = -a / b;
            let i = self.t.partition_point(|&t| t < thr);
            a * ca[i] + b * cb[i]
        } else if a > 0.0 {
            a * ca[n]
        } else {
            0.0
        }
    }

    /// `Φ(a) = E[(a + c g)_+]` with `g` distributed as `t_1` under the rule.
    pub fn phi(&self, a: f64, c: f64) -> f64 {
        self.positive_part(a, c, &self.w, &self.wt)
    }

    /// Rule value of `J` for the coefficient pair `(a, b)`.
    pub fn j_pair(&self, a: f64, b: f64) -> Result<f64> {
        let main = self.positive_part(a, b, &self.ws, &self.wst);
        let origin = (a + b).max(0.0);
        if origin == 0.0 {
            return Ok(main);
        }
        let m = green_moment(SingularPower::Half, self.d).ok_or_else(|| {
            Error::Divergence(format!("J with coefficient sum {} diverges in d = {}", a + b, self.d))
        })?;
        let root4d = (4.0 * self.d as f64).sqrt();
        Ok(main - root4d * origin * self.w_rsqrt_eps + root4d * origin * m)
    }

    /// Rule value of `Ĩ` for the coefficient pair `(a, b)`.
    pub fn tilde_i_pair(&self, a: f64, b: f64) -> Result<f64> {
        let n = self.t.len();
        let origin = (a + b).max(0.0);
        let main = self.positive_part(a, b, &self.wie, &self.wtie);
        if origin == 0.0 {
            return Ok(main);
        }
        let m = green_moment(SingularPower::One, self.d).ok_or_else(|| {
            Error::Divergence(format!("Ĩ with coefficient sum {} diverges in d = {}", a + b, self.d))
        })?;
        Ok(main - origin * self.wie[n] + origin * m)
    }
}

/// Sorted tables for every part of a sample, evaluated together.
#[derive(Debug)]
pub(crate) struct PairTables {
    method: Method,
    evaluations: u64,
    parts: Vec<SortedT1>,
}

impl PairTables {
    pub fn new(sample: &NodeSample) -> Self {
        Self {
            method: sample.method,
            evaluations: sample.evaluations(),
            parts: (0..sample.parts.len()).map(|p| SortedT1::new(sample, p)).collect(),
        }
    }

    fn combine(&self, f: impl Fn(&SortedT1) -> Result<f64>) -> Result<QuadratureResult> {
        let sums = self.parts.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(QuadratureResult::from_parts(&self.method, &sums, self.evaluations))
    }

    pub fn j(&self, a: f64, b: f64) -> Result<QuadratureResult> {
        self.combine(|t| t.j_pair(a, b))
    }

    pub fn tilde_i(&self, a: f64, b: f64) -> Result<QuadratureResult> {
        self.combine(|t| t.tilde_i_pair(a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_tables_match_direct_sums() {
        let spec = QuadratureSpec::tensor(24);
        let sample = NodeSample::get(3, &[1], false, &spec).unwrap();
        let tables = PairTables::new(&sample);
        for (a, b) in [(1.0, -1.0), (0.3, 0.7), (1.0, 0.0), (0.0, 1.0), (0.8, -0.2), (-0.4, 1.0)] {
            let nums = Numerators::head(&sample, &[a, b]);
            let j = integrate(&sample, &nums, Kernel::Ical { u: 0.0, alpha: 0.0 }).unwrap();
            let jt = tables.j(a, b).unwrap();
            assert!((j.value - jt.value).abs() < 1e-12, "J({a},{b})");
            let ti = integrate(&sample, &nums, Kernel::InverseEpsilon).unwrap();
            let tt = tables.tilde_i(a, b).unwrap();
            assert!((ti.value - tt.value).abs() < 1e-12, "Ĩ({a},{b})");
        }
    }

    #[test]
    fn phi_is_exact_rule_average() {
        let spec = QuadratureSpec::tensor(10);
        let sample = NodeSample::get(2, &[], false, &spec).unwrap();
        let table = SortedT1::new(&sample, 0);
        let p = &sample.parts[0];
        for (a, c) in [(0.5, -1.0), (-0.2, 1.0), (0.1, 0.0), (0.9, -0.3)] {
            let direct: f64 = p.w.iter().zip(&p.harm[0]).map(|(w, g)| w * (a + c * g).max(0.0)).sum();
            assert!((table.phi(a, c) - direct).abs() < 1e-14);
        }
    }
}

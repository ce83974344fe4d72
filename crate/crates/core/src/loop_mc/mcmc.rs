use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{fresh_time, random_kind, sample_poisson_with, Link, LinkConfiguration};
use super::lattice::TorusLattice;
use super::trace::{delta_insert, delta_remove, trace_loops, LoopDecomposition};
use crate::error::{Error, Result};
use crate::rp_integrals::{Beta, ModelParams};

pub const BATCHES: usize = 32;
const EQUILIBRATION_SWEEPS: f64 = 10.0;
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub error: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, error: 0.0 }
    }

    /// Mean and standard error of independent batch values.
    pub fn from_batches(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, error: f64::NAN };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, error: (var / n).sqrt() }
    }

    /// `|a − b|` in units of the combined standard error.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        (self.mean - other.mean).abs() / self.error.hypot(other.error)
    }
}

/// `κ(x, 0)` for every `x` on the torus, with standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct KappaEstimates {
    pub lattice: TorusLattice,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Per-batch `κ` vectors when the errors come from batch means.
    #[serde(skip)]
    pub batches: Vec<Vec<f64>>,
}

impl KappaEstimates {
    pub fn exact(lattice: TorusLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.volume() {
            return Err(Error::LengthMismatch { expected: lattice.volume(), got: values.len() });
        }
        let errors = vec![0.0; values.len()];
        Ok(Self { lattice, values, errors, batches: Vec::new() })
    }

    fn from_batch_vectors(lattice: TorusLattice, batches: Vec<Vec<f64>>) -> Self {
        let volume = lattice.volume();
        let (values, errors) = (0..volume)
            .map(|x| {
                let column: Vec<f64> = batches.iter().map(|b| b[x]).collect();
                let e = Estimate::from_batches(&column);
                (e.mean, e.error)
            })
            .unzip();
        Self { lattice, values, errors, batches }
    }

    pub fn at(&self, x: usize) -> Estimate {
        Estimate { mean: self.values[x], error: self.errors[x] }
    }

    /// `κ(e, 0)` for the unit vector along axis 0.
    pub fn nearest_neighbour(&self) -> Estimate {
        self.at(self.lattice.unit())
    }
}

/// `κ(x, 0)` of one configuration, averaged over translations:
/// `(1/|Λ|) Σ_y 1{(y,0) and (y+x,0) share a loop}`.
pub fn kappa_sample(lattice: &TorusLattice, loops: &LoopDecomposition) -> Vec<f64> {
    let volume = lattice.volume();
    let ids: Vec<usize> = (0..volume).map(|y| loops.membership(y, 0.0)).collect();
    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (y, &id) in ids.iter().enumerate() {
        members.entry(id).or_default().push(y);
    }
    let neg: Vec<usize> = (0..volume).map(|y| lattice.negate(y)).collect();
    let mut counts = vec![0u64; volume];
    for group in members.values() {
        for &a in group {
            for &b in group {
                counts[lattice.add(b, neg[a])] += 1;
            }
        }
    }
    counts.iter().map(|&c| c as f64 / volume as f64).collect()
}

pub(crate) fn birth_acceptance(m: usize, mass: f64, theta: f64, delta: i32) -> f64 {
    (mass / (m + 1) as f64 * theta.powi(delta)).min(1.0)
}

pub(crate) fn death_acceptance(m: usize, mass: f64, theta: f64, delta: i32) -> f64 {
    (m as f64 / mass * theta.powi(delta)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McmcSettings {
    /// Measurement sweeps, rounded up to a multiple of the batch count.
    pub sweeps: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self { sweeps: 1024, chains: 1, seed: 0x5EED }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McmcReport {
    pub seed: u64,
    pub chains: usize,
    pub sweeps_per_batch: usize,
    pub proposals_per_sweep: usize,
    pub proposals: u64,
    pub acceptance_rate: f64,
    pub kappa: KappaEstimates,
    /// `(1/|Λ|) Σ_x κ(x, 0)`.
    pub loop_density: Estimate,
    pub link_count: Estimate,
    pub loop_count: Estimate,
}

struct Batch {
    kappa: Vec<f64>,
    links: f64,
    loops: f64,
}

struct ChainOutput {
    batches: Vec<Batch>,
    proposals: u64,
    accepted: u64,
}

struct Chain {
    config: LinkConfiguration,
    theta: f64,
    u: f64,
    mass: f64,
    rng: ChaCha8Rng,
}

impl Chain {
    /// One birth or death proposal; returns whether it was accepted.
    fn step(&mut self) -> Result<bool> {
        let m = self.config.link_count();
        if self.rng.random::<bool>() {
            let edge = self.rng.random_range(0..self.config.lattice().edge_count());
            let time = fresh_time(&self.config, edge, &mut self.rng);
            let kind = random_kind(self.u, &mut self.rng);
            let link = Link { edge, time, kind };
            let delta = if self.theta == 1.0 { 0 } else { delta_insert(&self.config, &link) };
            if self.rng.random::<f64>() < birth_acceptance(m, self.mass, self.theta, delta) {
                self.config.insert(link)?;
                return Ok(true);
            }
        } else if m > 0 {
            let id = self.config.nth(self.rng.random_range(0..m));
            let delta = if self.theta == 1.0 { 0 } else { delta_remove(&self.config, id) };
            if self.rng.random::<f64>() < death_acceptance(m, self.mass, self.theta, delta) {
                self.config.remove(id)?;
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn run_chain(
    lattice: &TorusLattice,
    params: &ModelParams,
    beta: f64,
    sweeps_per_batch: usize,
    per_sweep: usize,
    seed: u64,
    stream: u64,
) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mass = lattice.edge_count() as f64 * beta;
    let mut chain = Chain {
        config: LinkConfiguration::new(*lattice, beta)?,
        theta: params.theta as f64,
        u: params.u,
        mass,
        rng,
    };
    let equilibration = (EQUILIBRATION_SWEEPS * mass).ceil() as u64;
    for _ in 0..equilibration {
        chain.step()?;
    }
    let (mut proposals, mut accepted) = (0u64, 0u64);
    let mut batches = Vec::with_capacity(BATCHES);
    for _ in 0..BATCHES {
        let mut kappa = vec![0.0; lattice.volume()];
        let (mut links, mut loops) = (0.0, 0.0);
        for _ in 0..sweeps_per_batch {
            for _ in 0..per_sweep {
                accepted += chain.step()? as u64;
            }
            proposals += per_sweep as u64;
            let dec = trace_loops(&chain.config);
            for (k, s) in kappa.iter_mut().zip(kappa_sample(lattice, &dec)) {
                *k += s;
            }
            links += chain.config.link_count() as f64;
            loops += dec.loop_count() as f64;
        }
        let n = sweeps_per_batch as f64;
        kappa.iter_mut().for_each(|k| *k /= n);
        batches.push(Batch { kappa, links: links / n, loops: loops / n });
    }
    Ok(ChainOutput { batches, proposals, accepted })
}

fn check_lattice(lattice: &TorusLattice, params: &ModelParams) -> Result<f64> {
    if lattice.dim() != params.d {
        return Err(Error::Parameter(format!(
            "lattice dimension {} does not match d = {}",
            lattice.dim(),
            params.d
        )));
    }
    if params.theta == 0 {
        return Err(Error::Parameter("θ must be a positive integer".into()));
    }
    match params.beta {
        Beta::Finite(b) => Ok(b),
        Beta::Infinite => Err(Error::Parameter("simulation needs finite β".into())),
    }
}

/// Birth–death Metropolis sampling of the `θ^{|𝓛|}`-weighted Poisson link
/// measure. Births propose a uniform edge, time and kind; deaths a uniform
/// existing link. Each chain starts empty, discards `10·|E|·β` proposals and
/// then records `BATCHES` batch means of `sweeps / BATCHES` sweeps of
/// `⌈|E|·β⌉` proposals. Chains use distinct streams of the same seed and are
/// merged in chain order.
pub fn mcmc_run(lattice: &TorusLattice, params: &ModelParams, settings: &McmcSettings) -> Result<McmcReport> {
    let beta = check_lattice(lattice, params)?;
    if settings.chains == 0 {
        return Err(Error::Parameter("need at least one chain".into()));
    }
    let sweeps_per_batch = settings.sweeps.div_ceil(BATCHES).max(1);
    let per_sweep = ((lattice.edge_count() as f64 * beta).ceil() as usize).max(1);
    let run = |c: usize| run_chain(lattice, params, beta, sweeps_per_batch, per_sweep, settings.seed, c as u64);

    #[cfg(feature = "parallel")]
    let outputs: Vec<Result<ChainOutput>> = {
        use rayon::prelude::*;
        (0..settings.chains).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outputs: Vec<Result<ChainOutput>> = (0..settings.chains).map(run).collect();

    let mut batches = Vec::new();
    let (mut proposals, mut accepted) = (0, 0);
    for out in outputs {
        let out = out?;
        proposals += out.proposals;
        accepted += out.accepted;
        batches.extend(out.batches);
    }
    let volume = lattice.volume() as f64;
    let density: Vec<f64> = batches.iter().map(|b| b.kappa.iter().sum::<f64>() / volume).collect();
    let links: Vec<f64> = batches.iter().map(|b| b.links).collect();
    let loops: Vec<f64> = batches.iter().map(|b| b.loops).collect();
    let kappa = KappaEstimates::from_batch_vectors(*lattice, batches.into_iter().map(|b| b.kappa).collect());
    Ok(McmcReport {
        seed: settings.seed,
        chains: settings.chains,
        sweeps_per_batch,
        proposals_per_sweep: per_sweep,
        proposals,
        acceptance_rate: accepted as f64 / proposals as f64,
        kappa,
        loop_density: Estimate::from_batches(&density),
        link_count: Estimate::from_batches(&links),
        loop_count: Estimate::from_batches(&loops),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImportanceReport {
    pub seed: u64,
    pub samples: usize,
    pub effective_samples: f64,
    pub kappa: KappaEstimates,
    pub warning: Option<String>,
}

impl ImportanceReport {
    pub fn require_reliable(&self) -> Result<&Self> {
        match &self.warning {
            Some(w) => Err(Error::Unreliable(w.clone())),
            None => Ok(self),
        }
    }
}

/// `E_ρ[θ^{|𝓛|} κ] / E_ρ[θ^{|𝓛|}]` from independent Poisson samples, with
/// delete-one jackknife errors. Sample `i` uses stream `i` of `seed`, so the
/// result does not depend on the thread count.
pub fn importance_oracle(
    lattice: &TorusLattice,
    params: &ModelParams,
    samples: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    let beta = check_lattice(lattice, params)?;
    if samples < 2 {
        return Err(Error::Parameter("need at least two samples".into()));
    }
    let draw = |i: usize| -> Result<(f64, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let config = sample_poisson_with(lattice, beta, params.u, &mut rng)?;
        let dec = trace_loops(&config);
        let log_w = dec.loop_count() as f64 * (params.theta as f64).ln();
        Ok((log_w, kappa_sample(lattice, &dec)))
    };
    #[cfg(feature = "parallel")]
    let draws: Vec<Result<(f64, Vec<f64>)>> = {
        use rayon::prelude::*;
        (0..samples).into_par_iter().map(draw).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Vec<Result<(f64, Vec<f64>)>> = (0..samples).map(draw).collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;

    let top = draws.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = draws.iter().map(|d| (d.0 - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let ess = total * total / weights.iter().map(|w| w * w).sum::<f64>();
    let volume = lattice.volume();
    let mut numer = vec![0.0; volume];
    for (w, (_, k)) in weights.iter().zip(&draws) {
        for (n, v) in numer.iter_mut().zip(k) {
            *n += w * v;
        }
    }
    let values: Vec<f64> = numer.iter().map(|n| n / total).collect();
    let n = samples as f64;
    let leave_out = |w: f64, k: &[f64], x: usize| (numer[x] - w * k[x]) / (total - w);
    let mut jack_mean = vec![0.0; volume];
    for (w, (_, k)) in weights.iter().zip(&draws) {
        for (x, m) in jack_mean.iter_mut().enumerate() {
            *m += leave_out(*w, k, x) / n;
        }
    }
    let mut jack_var = vec![0.0; volume];
    for (w, (_, k)) in weights.iter().zip(&draws) {
        for (x, v) in jack_var.iter_mut().enumerate() {
            *v += (leave_out(*w, k, x) - jack_mean[x]).powi(2);
        }
    }
    let errors = jack_var.iter().map(|v| ((n - 1.0) / n * v).sqrt()).collect();
    let warning = (ess < MIN_EFFECTIVE_SAMPLES)
        .then(|| format!("effective sample size {ess:.1} below {MIN_EFFECTIVE_SAMPLES}"));
    Ok(ImportanceReport {
        seed,
        samples,
        effective_samples: ess,
        kappa: KappaEstimates { lattice: *lattice, values, errors, batches: Vec::new() },
        warning,
    })
}

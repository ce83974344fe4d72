use serde::Serialize;
use serde_json::{Map, Value};

use super::reference::{external_beta_crit, reference_cells};
use super::{coords, RunRecord};
use crate::bounds::{
    beta_crit_upper, finite_range_bound, gamma_threshold, long_range_bound, nn_lower_bound, BoundResult,
    GammaMethod, GAMMA_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::loop_mc::{estimate_fourier, importance_oracle, mcmc_run, McmcSettings, TorusLattice};
use crate::quadrature::QuadratureSpec;
use crate::rp_integrals::{
    ical, j, j_limit, sup_alpha_i, tilde_i, tilde_i_limit, Beta, CoefficientVector, ModelParams,
};

fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

fn params_of<T: Serialize>(options: &T) -> Map<String, Value> {
    match serde_json::to_value(options).expect("options serialise") {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn spec_for(d: usize, precision: u32, seed: u64) -> QuadratureSpec {
    QuadratureSpec::for_dimension(d).with_seed(seed).refined(precision, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableId {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "4")]
    Four,
}

impl TableId {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            4 => Ok(Self::Four),
            _ => Err(Error::Parameter(format!("table id must be 1, 2, 3 or 4, got {n}"))),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Self::One => "1",
            Self::Two => "2",
            Self::Three => "3",
            Self::Four => "4",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableOptions {
    pub table: TableId,
    pub precision: u32,
    pub seed: u64,
    pub compare: bool,
    /// Dimension used for the `d`-independent table 2.
    pub d: usize,
}

impl TableOptions {
    pub fn new(table: TableId) -> Self {
        Self { table, precision: 0, seed: super::DEFAULT_SEED, compare: false, d: 3 }
    }
}

fn m_value(m: Option<usize>) -> Value {
    m.map_or_else(|| Value::from("inf"), Value::from)
}

/// Reproduce one of the four published tables, cell by cell.
pub fn cmd_table(opts: &TableOptions) -> Result<RunRecord> {
    let mut record = RunRecord::new("table", params_of(opts), opts.seed);
    let (p, seed) = (opts.precision, opts.seed);
    type CellResult = Result<(Map<String, Value>, f64, f64)>;
    let cells: Vec<CellResult> = match opts.table {
        TableId::One => {
            let grid: Vec<(u32, usize)> = (2..=5).flat_map(|t| (1..=9).map(move |d| (t, d))).collect();
            par_map(grid, |(theta, d)| {
                let r = nn_lower_bound(&ModelParams::new(d, theta, 0.0, Beta::Infinite)?, &spec_for(d, p, seed))?;
                Ok((coords([("theta", theta.into()), ("d", d.into())]), r.value, r.error_estimate))
            })
        }
        TableId::Two => par_map((2..=5u32).collect(), |theta| {
            let d = opts.d;
            let r = nn_lower_bound(&ModelParams::new(d, theta, 0.5, Beta::Infinite)?, &spec_for(d, p, seed))?;
            Ok((coords([("theta", theta.into())]), r.value, r.error_estimate))
        }),
        TableId::Three => {
            let grid: Vec<(usize, Option<usize>)> = (1..=5)
                .flat_map(|d| [Some(2), Some(3), Some(4), Some(5), None].map(|m| (d, m)))
                .collect();
            par_map(grid, |(d, m)| {
                let params = ModelParams::new(d, 2, 0.5, Beta::Infinite)?;
                let spec = spec_for(d, p, seed);
                let r = match m {
                    Some(m) => finite_range_bound(m, &params, &spec)?,
                    None => long_range_bound(&params, &spec)?,
                };
                Ok((coords([("d", d.into()), ("m", m_value(m))]), r.value, r.error_estimate))
            })
        }
        TableId::Four => {
            let grid: Vec<(GammaMethod, usize)> = [GammaMethod::Ueltschi, GammaMethod::New]
                .into_iter()
                .flat_map(|meth| (3..=7).map(move |d| (meth, d)))
                .collect();
            par_map(grid, |(method, d)| {
                let g = gamma_threshold(method, d, &spec_for(d, p, seed))?;
                let name = serde_json::to_value(method).expect("method name");
                Ok((coords([("d", d.into()), ("method", name)]), g, GAMMA_TOLERANCE / 2.0))
            })
        }
    };
    for cell in cells {
        let (c, v, e) = cell?;
        record.push(c, v, e);
    }
    if opts.compare {
        record.compare(&reference_cells(opts.table.key()));
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegralKind {
    I,
    Itilde,
    J,
    Jlimit,
    Itildelimit,
}

impl std::str::FromStr for IntegralKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" => Ok(Self::I),
            "itilde" => Ok(Self::Itilde),
            "j" => Ok(Self::J),
            "jlimit" => Ok(Self::Jlimit),
            "itildelimit" => Ok(Self::Itildelimit),
            _ => Err(Error::Parameter(format!(
                "unknown integral '{s}' (expected I, Itilde, J, Jlimit or Itildelimit)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralOptions {
    pub kind: IntegralKind,
    pub c: Vec<f64>,
    pub tail: Option<f64>,
    pub u: f64,
    pub d: usize,
    /// `None` means the supremum over `α`.
    pub alpha: Option<f64>,
    pub precision: u32,
    pub seed: u64,
}

/// Parse `"1,-1"` into coefficients.
pub fn parse_coefficients(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("bad coefficient '{t}' in '{s}'")))
        })
        .collect()
}

pub fn cmd_integral(opts: &IntegralOptions) -> Result<RunRecord> {
    if opts.d == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    let mut record = RunRecord::new("integral", params_of(opts), opts.seed);
    let spec = spec_for(opts.d, opts.precision, opts.seed);
    let name = serde_json::to_value(opts.kind).expect("kind name");
    let quantity = coords([("quantity", name)]);
    let limit = matches!(opts.kind, IntegralKind::Jlimit | IntegralKind::Itildelimit);
    let c = match (limit, opts.tail) {
        (true, Some(t)) => CoefficientVector::with_tail(opts.c.clone(), t)?,
        (true, None) => return Err(Error::Parameter("limit integrals need tail=<c_inf>".into())),
        (false, Some(_)) => return Err(Error::WrongOperation("tail= only applies to limit integrals".into())),
        (false, None) => CoefficientVector::new(opts.c.clone())?,
    };
    match opts.kind {
        IntegralKind::I => match opts.alpha {
            None => {
                let s = sup_alpha_i(&c, opts.u, opts.d, &spec)?;
                let route = serde_json::to_value(s.route).expect("route name");
                let mut q = quantity;
                q.insert("route".into(), route);
                record.push(q, s.value.value, s.value.abs_error_estimate);
                record.push(coords([("quantity", "argmax_alpha".into())]), s.argmax_alpha, crate::rp_integrals::ALPHA_TOLERANCE);
            }
            Some(a) => {
                let r = ical(&c, opts.u, opts.d, a, &spec)?;
                record.push(quantity, r.value, r.abs_error_estimate);
            }
        },
        kind => {
            let r = match kind {
                IntegralKind::Itilde => tilde_i(&c, opts.d, &spec)?,
                IntegralKind::J => j(&c, opts.d, &spec)?,
                IntegralKind::Jlimit => j_limit(&c, opts.d, &spec)?,
                _ => tilde_i_limit(&c, opts.d, &spec)?,
            };
            record.push(quantity, r.value, r.abs_error_estimate);
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Nn,
    FiniteRange,
    LongRange,
    BetaCrit,
    Gamma,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Self::Nn),
            "finite-range" => Ok(Self::FiniteRange),
            "long-range" => Ok(Self::LongRange),
            "beta-crit" => Ok(Self::BetaCrit),
            "gamma" => Ok(Self::Gamma),
            _ => Err(Error::Parameter(format!("unknown bound '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundOptions {
    pub kind: BoundKind,
    pub theta: u32,
    pub d: usize,
    pub u: f64,
    pub beta: Beta,
    pub m: usize,
    pub method: GammaMethod,
    pub precision: u32,
    pub seed: u64,
}

impl BoundOptions {
    pub fn new(kind: BoundKind) -> Self {
        Self {
            kind,
            theta: 2,
            d: 3,
            u: 0.0,
            beta: Beta::Infinite,
            m: 2,
            method: GammaMethod::New,
            precision: 0,
            seed: super::DEFAULT_SEED,
        }
    }
}

fn push_bound(record: &mut RunRecord, name: &str, r: &BoundResult) {
    record.push(coords([("quantity", name.into())]), r.value, r.error_estimate);
    if let Some(eta) = r.argmax_eta {
        record.push(coords([("quantity", "argmax_eta".into())]), eta, f64::NAN);
    }
    for (k, v) in &r.components {
        record.push(coords([("quantity", k.as_str().into())]), *v, f64::NAN);
    }
}

pub fn cmd_bound(opts: &BoundOptions) -> Result<RunRecord> {
    let mut record = RunRecord::new("bound", params_of(opts), opts.seed);
    let params = ModelParams::new(opts.d, opts.theta, opts.u, opts.beta)?;
    let spec = spec_for(opts.d, opts.precision, opts.seed);
    match opts.kind {
        BoundKind::Nn => push_bound(&mut record, "P", &nn_lower_bound(&params, &spec)?),
        BoundKind::FiniteRange => push_bound(&mut record, "bound", &finite_range_bound(opts.m, &params, &spec)?),
        BoundKind::LongRange => push_bound(&mut record, "bound", &long_range_bound(&params, &spec)?),
        BoundKind::BetaCrit => {
            // One refinement step doubles as the error estimate.
            let r = beta_crit_upper(&params, &spec)?;
            let finer = beta_crit_upper(&params, &spec_for(opts.d, opts.precision + 1, opts.seed))?;
            let mut r = r;
            r.error_estimate = (finer.value - r.value).abs();
            push_bound(&mut record, "beta_crit", &r);
            if let Some(ext) = external_beta_crit(opts.theta, opts.d, opts.u) {
                record.push(coords([("quantity", "external_beta_crit".into())]), ext, f64::NAN);
                record.push(coords([("quantity", "ratio".into())]), r.value / ext, r.error_estimate / ext);
            }
        }
        BoundKind::Gamma => {
            let g = gamma_threshold(opts.method, opts.d, &spec)?;
            let finer = gamma_threshold(opts.method, opts.d, &spec_for(opts.d, opts.precision + 1, opts.seed))?;
            let err = (finer - g).abs().max(GAMMA_TOLERANCE / 2.0);
            record.push(coords([("quantity", "gamma".into())]), g, err);
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOptions {
    pub d: usize,
    #[serde(rename = "L")]
    pub side: usize,
    pub theta: u32,
    pub u: f64,
    pub beta: f64,
    pub sweeps: usize,
    pub chains: usize,
    pub seed: u64,
    pub fourier_check: bool,
    /// Run the importance-sampling oracle with this many samples.
    pub oracle_samples: Option<usize>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            d: 2,
            side: 4,
            theta: 2,
            u: 0.5,
            beta: 1.0,
            sweeps: McmcSettings::default().sweeps,
            chains: 1,
            seed: super::DEFAULT_SEED,
            fourier_check: false,
            oracle_samples: None,
        }
    }
}

pub fn cmd_simulate(opts: &SimulateOptions) -> Result<RunRecord> {
    let mut record = RunRecord::new("simulate", params_of(opts), opts.seed);
    let lattice = TorusLattice::new(opts.d, opts.side)?;
    let params = ModelParams::new(opts.d, opts.theta, opts.u, Beta::Finite(opts.beta))?;
    let settings = McmcSettings { sweeps: opts.sweeps, chains: opts.chains, seed: opts.seed };
    let report = mcmc_run(&lattice, &params, &settings)?;
    let site = |x: usize| Value::from(lattice.coords(x));
    for x in 0..lattice.volume() {
        let e = report.kappa.at(x);
        record.push(coords([("observable", "kappa".into()), ("x", site(x))]), e.mean, e.error);
    }
    for (name, e) in [
        ("loop_density", report.loop_density),
        ("link_count", report.link_count),
        ("loop_count", report.loop_count),
    ] {
        record.push(coords([("observable", name.into())]), e.mean, e.error);
    }
    record.push(coords([("observable", "acceptance_rate".into())]), report.acceptance_rate, f64::NAN);
    if opts.fourier_check {
        let f = estimate_fourier(&report.kappa, &lattice)?;
        for m in &f.modes {
            record.push(coords([("observable", "kappa_hat".into()), ("k", Value::from(m.k.clone()))]), m.value, m.error);
        }
        record.push(coords([("observable", "kappa_hat_min".into())]), f.min.value, f.min.error);
        record.push(coords([("observable", "kappa_hat_min_sigmas".into())]), f.worst_sigmas, f64::NAN);
    }
    if let Some(samples) = opts.oracle_samples {
        let oracle = importance_oracle(&lattice, &params, samples, opts.seed)?;
        for x in 0..lattice.volume() {
            let e = oracle.kappa.at(x);
            record.push(coords([("observable", "kappa_oracle".into()), ("x", site(x))]), e.mean, e.error);
        }
        record.push(coords([("observable", "oracle_effective_samples".into())]), oracle.effective_samples, f64::NAN);
        record.warnings.extend(oracle.warning);
    }
    Ok(record)
}

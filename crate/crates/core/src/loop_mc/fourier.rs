use std::f64::consts::PI;

use serde::Serialize;

use super::lattice::TorusLattice;
use super::mcmc::{Estimate, KappaEstimates};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct FourierMode {
    pub k: Vec<f64>,
    pub value: f64,
    pub error: f64,
}

impl FourierMode {
    /// `value / error`, or `±∞` for exact values.
    pub fn sigmas(&self) -> f64 {
        if self.error > 0.0 {
            self.value / self.error
        } else if self.value >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierEstimate {
    pub modes: Vec<FourierMode>,
    /// Mode with the smallest value.
    pub min: FourierMode,
    /// Mode with the smallest `value / error`.
    pub worst_sigmas: f64,
}

/// Momenta `k ∈ (2π/L)ℤ^d` with `−π < k_i ≤ π`, as integer multiples of `2π/L`.
pub fn dual_lattice(lattice: &TorusLattice) -> Vec<Vec<i64>> {
    let l = lattice.side() as i64;
    let lo = -((l - 1) / 2);
    (0..lattice.volume())
        .map(|i| lattice.coords(i).iter().map(|&c| lo + c as i64).collect())
        .collect()
}

/// `κ̂(k, 0) = Σ_x cos(k·x) κ(x, 0)` over the dual torus. The sine part
/// vanishes by inversion symmetry and is dropped. Errors come from the batch
/// vectors when present, otherwise from independent per-site errors.
pub fn estimate_fourier(kappa: &KappaEstimates, lattice: &TorusLattice) -> Result<FourierEstimate> {
    let volume = lattice.volume();
    if kappa.values.len() != volume {
        return Err(Error::LengthMismatch { expected: volume, got: kappa.values.len() });
    }
    let coords: Vec<Vec<usize>> = (0..volume).map(|x| lattice.coords(x)).collect();
    let step = 2.0 * PI / lattice.side() as f64;
    let cosines = |k: &[f64]| -> Vec<f64> {
        coords
            .iter()
            .map(|c| k.iter().zip(c).map(|(a, &b)| a * b as f64).sum::<f64>().cos())
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| p * q).sum() };
    let modes: Vec<FourierMode> = dual_lattice(lattice)
        .into_iter()
        .map(|n| {
            let k: Vec<f64> = n.iter().map(|&m| m as f64 * step).collect();
            let cos = cosines(&k);
            let value = dot(&cos, &kappa.values);
            let error = if kappa.batches.len() >= 2 {
                let per_batch: Vec<f64> = kappa.batches.iter().map(|b| dot(&cos, b)).collect();
                Estimate::from_batches(&per_batch).error
            } else {
                cos.iter().zip(&kappa.errors).map(|(c, e)| (c * e).powi(2)).sum::<f64>().sqrt()
            };
            FourierMode { k, value, error }
        })
        .collect();
    let min = modes
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .cloned()
        .expect("dual lattice is nonempty");
    let worst_sigmas = modes.iter().map(FourierMode::sigmas).fold(f64::INFINITY, f64::min);
    Ok(FourierEstimate { modes, min, worst_sigmas })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_lattice_range() {
        for l in [3, 4, 5, 6] {
            let lat = TorusLattice::new(1, l).unwrap();
            let ks: Vec<i64> = dual_lattice(&lat).into_iter().map(|v| v[0]).collect();
            assert_eq!(ks.len(), l);
            for k in ks {
                let angle = 2.0 * PI * k as f64 / l as f64;
                assert!(angle > -PI && angle <= PI + 1e-12);
            }
        }
    }

    #[test]
    fn delta_transforms_to_one() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        let f = estimate_fourier(&KappaEstimates::exact(lat, v).unwrap(), &lat).unwrap();
        assert!(f.modes.iter().all(|m| (m.value - 1.0).abs() < 1e-14));
    }

    #[test]
    fn constant_transforms_to_volume_at_zero() {
        let lat = TorusLattice::new(2, 5).unwrap();
        let c = 0.3;
        let f = estimate_fourier(&KappaEstimates::exact(lat, vec![c; 25]).unwrap(), &lat).unwrap();
        for m in &f.modes {
            let expect = if m.k.iter().all(|&k| k == 0.0) { c * 25.0 } else { 0.0 };
            assert!((m.value - expect).abs() < 1e-12, "{:?}", m.k);
        }
    }

    #[test]
    fn length_mismatch() {
        let lat = TorusLattice::new(2, 3).unwrap();
        let other = TorusLattice::new(2, 4).unwrap();
        let k = KappaEstimates::exact(other, vec![0.0; 16]).unwrap();
        assert!(matches!(estimate_fourier(&k, &lat), Err(Error::LengthMismatch { .. })));
    }
}

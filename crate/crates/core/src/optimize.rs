//! One-dimensional search helpers.

use crate::error::Result;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)` once the bracket is narrower than `tol`.
pub fn golden_max<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while (b - a).abs() > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Maximise over `grid`, then refine with golden-section search on the
/// bracket formed by the best point's neighbours. Every grid value and the
/// refined value compete, so the result is never worse than the grid.
pub fn grid_then_golden_max<F>(mut f: F, grid: &[f64], tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let values = grid.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    let best = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("grid must be nonempty");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let mut winner = (grid[best], values[best]);
    if hi > lo {
        let refined = golden_max(&mut f, lo, hi, tol)?;
        if refined.1 > winner.1 {
            winner = refined;
        }
    }
    Ok(winner)
}

pub fn grid_then_golden_min<F>(mut f: F, grid: &[f64], tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (x, v) = grid_then_golden_max(|x| f(x).map(|v| -v), grid, tol)?;
    Ok((x, -v))
}

/// `n` points spaced evenly in `log` between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Largest `x` in `[lo, hi]` with `pred(x)` true, assuming `pred` is true up
/// to a threshold and false beyond. `pred(lo)` must hold.
pub fn bisect_threshold<F>(mut pred: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| Ok(-(x - 0.3f64).powi(2) + 2.0), 0.0, 1.0, 1e-8).unwrap();
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_refinement_handles_boundary_maximum() {
        let grid = linear_grid(0.0, 1.0, 11);
        let (x, _) = grid_then_golden_max(Ok, &grid, 1e-6).unwrap();
        assert!((x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bisection_threshold() {
        let t = bisect_threshold(|x| Ok(x * x < 2.0), 0.0, 4.0, 1e-9).unwrap();
        assert!((t - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-6, 32.0, 65);
        assert_eq!(g.len(), 65);
        assert!((g[0] - 1e-6).abs() < 1e-18);
        assert!((g[64] - 32.0).abs() < 1e-12);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The periodic `L^d` torus with nearest-neighbour edges.
///
/// Vertices are numbered in row-major order with axis 0 fastest. Edge
/// `x * d + j` joins `x` to `x + e_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusLattice {
    d: usize,
    side: usize,
}

impl TorusLattice {
    pub fn new(d: usize, side: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        if side < 3 {
            return Err(Error::Parameter(format!(
                "side length must be at least 3 (L = {side} would create parallel edges)"
            )));
        }
        let fits = side
            .checked_pow(d as u32)
            .and_then(|v| v.checked_mul(d))
            .is_some_and(|e| e < u32::MAX as usize);
        if !fits {
            return Err(Error::Parameter(format!("torus {side}^{d} is too large")));
        }
        Ok(Self { d, side })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn volume(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    pub fn edge_count(&self) -> usize {
        self.d * self.volume()
    }

    pub fn coords(&self, mut x: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            c.push(x % self.side);
            x /= self.side;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.side + c % self.side)
    }

    /// `x + e_j` with periodic wrap.
    pub fn step(&self, x: usize, j: usize) -> usize {
        let stride = self.side.pow(j as u32);
        let c = (x / stride) % self.side;
        if c + 1 == self.side {
            x + stride - self.side * stride
        } else {
            x + stride
        }
    }

    /// `x + y` on the torus.
    pub fn add(&self, mut x: usize, mut y: usize) -> usize {
        let (mut out, mut stride) = (0, 1);
        for _ in 0..self.d {
            out += ((x % self.side + y % self.side) % self.side) * stride;
            x /= self.side;
            y /= self.side;
            stride *= self.side;
        }
        out
    }

    /// `−x` on the torus.
    pub fn negate(&self, mut x: usize) -> usize {
        let (mut out, mut stride) = (0, 1);
        for _ in 0..self.d {
            out += ((self.side - x % self.side) % self.side) * stride;
            x /= self.side;
            stride *= self.side;
        }
        out
    }

    pub fn endpoints(&self, edge: usize) -> (usize, usize) {
        let (x, j) = (edge / self.d, edge % self.d);
        (x, self.step(x, j))
    }

    /// Unit vector `e_0`, the nearest neighbour used for `κ(e, 0)`.
    pub fn unit(&self) -> usize {
        1
    }

    pub fn incident_edges(&self, x: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.d);
        for j in 0..self.d {
            out.push(x * self.d + j);
            let stride = self.side.pow(j as u32);
            let c = (x / stride) % self.side;
            let back = if c == 0 { x + (self.side - 1) * stride } else { x - stride };
            out.push(back * self.d + j);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_sides() {
        assert!(TorusLattice::new(2, 2).is_err());
        assert!(TorusLattice::new(0, 4).is_err());
        assert!(TorusLattice::new(2, 3).is_ok());
    }

    #[test]
    fn every_vertex_has_2d_distinct_edges() {
        for (d, l) in [(1, 3), (2, 4), (3, 3)] {
            let lat = TorusLattice::new(d, l).unwrap();
            let mut degree = vec![0; lat.volume()];
            for e in 0..lat.edge_count() {
                let (x, y) = lat.endpoints(e);
                assert_ne!(x, y);
                degree[x] += 1;
                degree[y] += 1;
            }
            assert!(degree.iter().all(|&k| k == 2 * d));
            for x in 0..lat.volume() {
                let mut inc = lat.incident_edges(x);
                inc.sort_unstable();
                inc.dedup();
                assert_eq!(inc.len(), 2 * d);
                for e in inc {
                    let (a, b) = lat.endpoints(e);
                    assert!(a == x || b == x);
                }
            }
        }
    }

    #[test]
    fn coordinate_roundtrip_and_group_ops() {
        let lat = TorusLattice::new(3, 4).unwrap();
        for x in 0..lat.volume() {
            assert_eq!(lat.index(&lat.coords(x)), x);
            assert_eq!(lat.add(x, lat.negate(x)), 0);
            let y = (x * 7 + 3) % lat.volume();
            let sum: Vec<usize> = lat.coords(x).iter().zip(lat.coords(y)).map(|(a, b)| (a + b) % 4).collect();
            assert_eq!(lat.add(x, y), lat.index(&sum));
        }
        assert_eq!(lat.step(3, 0), 0);
        assert_eq!(lat.unit(), lat.step(0, 0));
    }
}

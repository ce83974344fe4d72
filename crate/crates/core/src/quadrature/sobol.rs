//! Sobol low-discrepancy points with random linear matrix scrambling and a
//! random digital shift. Each scrambling is an independent randomisation of
//! the same net, so replicate means give an unbiased variance estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BITS: usize = 32;

/// Primitive-polynomial degree, coefficients and initial direction integers
/// for dimensions 2 through 32 (Joe–Kuo, `new-joe-kuo-6.21201`). Dimension 1 is
/// the van der Corput sequence.
const JOE_KUO: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
    (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]),
    (7, 14, &[1, 3, 1, 13, 9, 35, 107]),
    (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]),
    (7, 28, &[1, 3, 5, 3, 3, 13, 69]),
    (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]),
    (7, 37, &[1, 1, 3, 9, 25, 29, 41]),
    (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
];

/// Largest supported dimension.
pub const MAX_DIM: usize = JOE_KUO.len() + 1;

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1u32 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// Apply a random lower-triangular (unit diagonal) binary matrix, acting on
/// the binary digits most-significant first.
fn scramble(v: &mut [u32; BITS], rng: &mut ChaCha8Rng) {
    let mut rows = [0u32; BITS];
    for (b, row) in rows.iter_mut().enumerate() {
        let diag = 1u32 << (BITS - 1 - b);
        // bits strictly more significant than `diag`
        let higher = !(diag | (diag - 1));
        *row = (rng.random::<u32>() & higher) | diag;
    }
    for vk in v.iter_mut() {
        let mut out = 0u32;
        for (b, row) in rows.iter().enumerate() {
            if (row & *vk).count_ones() & 1 == 1 {
                out |= 1u32 << (BITS - 1 - b);
            }
        }
        *vk = out;
    }
}

/// One randomised Sobol sequence in `dim` dimensions.
#[derive(Debug, Clone)]
pub struct ScrambledSobol {
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
}

impl ScrambledSobol {
    /// Panics if `dim` is zero or exceeds [`MAX_DIM`].
    pub fn new(dim: usize, seed: u64, replicate: u64) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "sobol dimension {dim} unsupported");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        let mut directions = Vec::with_capacity(dim);
        let mut shift = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut v = direction_numbers(j);
            scramble(&mut v, &mut rng);
            directions.push(v);
            shift.push(rng.random::<u32>());
        }
        Self { directions, shift }
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Visit the first `n` points in Gray-code order. Coordinates lie in the
    /// open interval (0, 1): each is the centre of its 2^-32 cell.
    pub fn for_each_point(&self, n: usize, f: impl FnMut(&[f64])) {
        self.for_each_point_in(0..n, f);
    }

    /// Visit points `range` of the Gray-code ordered sequence.
    pub fn for_each_point_in(&self, range: std::ops::Range<usize>, mut f: impl FnMut(&[f64])) {
        let dim = self.dim();
        let gray = range.start ^ (range.start >> 1);
        let mut state: Vec<u32> = (0..dim)
            .map(|j| {
                let mut x = self.shift[j];
                for c in 0..BITS {
                    if (gray >> c) & 1 == 1 {
                        x ^= self.directions[j][c];
                    }
                }
                x
            })
            .collect();
        let mut point = vec![0.0; dim];
        const SCALE: f64 = 1.0 / 4_294_967_296.0;
        for i in range.clone() {
            if i > range.start {
                let c = i.trailing_zeros() as usize;
                for j in 0..dim {
                    state[j] ^= self.directions[j][c];
                }
            }
            for j in 0..dim {
                point[j] = (state[j] as f64 + 0.5) * SCALE;
            }
            f(&point);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unscrambled_second_dimension_matches_reference() {
        // Known Sobol points in dimension 2: 0, 1/2, 3/4, 1/4, 3/8, 7/8, 5/8, 1/8
        // (natural order). Gray-code order visits the same first 2^k points.
        let v = direction_numbers(1);
        let mut x = 0u32;
        let mut got = vec![0.0];
        for i in 1..8usize {
            x ^= v[i.trailing_zeros() as usize];
            got.push(x as f64 / 4_294_967_296.0);
        }
        got.sort_by(f64::total_cmp);
        let want: Vec<f64> = (0..8).map(|k| k as f64 / 8.0).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn every_dimension_is_stratified() {
        // Scrambled (0, m, 1)-net property per coordinate: each of the 2^m
        // intervals of width 2^-m holds exactly one of the first 2^m points.
        let sob = ScrambledSobol::new(MAX_DIM, 7, 3);
        let n = 1 << 10;
        let mut counts = vec![vec![0u32; n]; MAX_DIM];
        sob.for_each_point(n, |p| {
            for (j, &x) in p.iter().enumerate() {
                counts[j][(x * n as f64) as usize] += 1;
            }
        });
        for c in counts {
            assert!(c.iter().all(|&k| k == 1));
        }
    }

    #[test]
    fn two_dimensional_projection_is_a_net() {
        // Dimensions 1 and 2 form a (0, m, 2)-net: every 2^a x 2^(m-a) box
        // holds one point.
        let sob = ScrambledSobol::new(2, 11, 0);
        let m = 8;
        let n = 1usize << m;
        for a in 0..=m {
            let mut seen = vec![0u32; n];
            sob.for_each_point(n, |p| {
                let i = (p[0] * (1u64 << a) as f64) as usize;
                let j = (p[1] * (1u64 << (m - a)) as f64) as usize;
                seen[i * (1 << (m - a)) + j] += 1;
            });
            assert!(seen.iter().all(|&k| k == 1), "a = {a}");
        }
    }

    #[test]
    fn jumping_into_the_sequence_matches_sequential_order() {
        let sob = ScrambledSobol::new(4, 1, 2);
        let mut all = Vec::new();
        sob.for_each_point(100, |p| all.extend_from_slice(p));
        let mut tail = Vec::new();
        sob.for_each_point_in(37..100, |p| tail.extend_from_slice(p));
        assert_eq!(&all[37 * 4..], &tail[..]);
    }

    #[test]
    fn replicates_differ_and_repeat() {
        let first = |rep| {
            let mut out = Vec::new();
            ScrambledSobol::new(3, 5, rep).for_each_point(4, |p| out.extend_from_slice(p));
            out
        };
        assert_eq!(first(0), first(0));
        assert_ne!(first(0), first(1));
    }
}

//! Sobol points with Joe-Kuo direction numbers and an optional random
//! digital shift.

use crate::error::{Error, Result};

const BITS: usize = 32;

// (s, a, m_1..m_s) for dimensions 2..=16; dimension 1 is van der Corput.
const JOE_KUO: [(u32, u32, &[u32]); 15] = [
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
];

pub const MAX_DIM: usize = JOE_KUO.len() + 1;

/// Direction vectors `v[j][b]` (bit `b` of the index, 32-bit fixed point).
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_shift(dim, vec![0; dim])
    }

    /// `shift` is XORed into every point (one word per dimension).
    pub fn with_shift(dim: usize, shift: Vec<u32>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "sobol dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if shift.len() != dim {
            return Err(Error::InvalidArgument("shift length must equal dimension".into()));
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (b, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - b);
        }
        directions.push(first);
        for &(s, a, m) in JOE_KUO.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for b in 0..BITS {
                if b < s {
                    v[b] = m[b] << (BITS - 1 - b);
                } else {
                    let mut x = v[b - s] ^ (v[b - s] >> s);
                    for k in 1..s {
                        if (a >> (s - 1 - k)) & 1 == 1 {
                            x ^= v[b - k];
                        }
                    }
                    v[b] = x;
                }
            }
            directions.push(v);
        }
        Ok(Self { directions, shift })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Point `index` of the sequence in natural order.
    pub fn point(&self, index: u64) -> Vec<f64> {
        self.directions
            .iter()
            .zip(&self.shift)
            .map(|(v, &s)| {
                let mut x = s;
                let mut i = index;
                let mut b = 0;
                while i != 0 && b < BITS {
                    if i & 1 == 1 {
                        x ^= v[b];
                    }
                    i >>= 1;
                    b += 1;
                }
                x as f64 / (1u64 << BITS) as f64
            })
            .collect()
    }

    /// Points `start..start + n`.
    pub fn points(&self, start: u64, n: usize) -> Vec<Vec<f64>> {
        (start..start + n as u64).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_points() {
        let s = Sobol::new(2).unwrap();
        let expected = [
            [0.0, 0.0],
            [0.5, 0.5],
            [0.25, 0.75],
            [0.75, 0.25],
            [0.125, 0.625],
            [0.625, 0.125],
            [0.375, 0.375],
            [0.875, 0.875],
        ];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(s.point(i as u64), e.to_vec(), "point {i}");
        }
    }

    #[test]
    fn all_dimensions_against_reference_rows() {
        let s = Sobol::new(MAX_DIM).unwrap();
        let p4 = [
            0.125, 0.625, 0.375, 0.125, 0.125, 0.375, 0.625, 0.625, 0.625, 0.875, 0.625, 0.125, 0.625,
            0.375, 0.125, 0.125,
        ];
        let p6 = [
            0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875, 0.875, 0.625, 0.875, 0.375, 0.375,
            0.625, 0.375, 0.875,
        ];
        assert_eq!(s.point(4), p4.to_vec());
        assert_eq!(s.point(6), p6.to_vec());
        assert_eq!(s.point(2)[2], 0.75);
    }

    #[test]
    fn stratified_in_every_dimension() {
        // Each of the first 2^m points lands in a distinct 1/2^m interval.
        let s = Sobol::new(MAX_DIM).unwrap();
        let n = 64;
        let pts = s.points(0, n);
        for d in 0..MAX_DIM {
            let mut seen = vec![false; n];
            for p in &pts {
                let cell = (p[d] * n as f64) as usize;
                assert!(!seen[cell], "dimension {d} cell {cell} hit twice");
                seen[cell] = true;
            }
        }
    }

    #[test]
    fn pairwise_stratification() {
        // The first two dimensions form a (0, m, 2)-net: every 8x8 cell holds
        // exactly one of the first 64 points.
        let s = Sobol::new(2).unwrap();
        let mut count = [[0; 8]; 8];
        for p in s.points(0, 64) {
            count[(p[0] * 8.0) as usize][(p[1] * 8.0) as usize] += 1;
        }
        assert!(count.iter().flatten().all(|&c| c == 1));
    }

    #[test]
    fn shift_preserves_stratification() {
        let s = Sobol::with_shift(2, vec![0x9e37_79b9, 0x7f4a_7c15]).unwrap();
        let pts = s.points(0, 32);
        for d in 0..2 {
            let mut cells: Vec<usize> = pts.iter().map(|p| (p[d] * 32.0) as usize).collect();
            cells.sort_unstable();
            assert_eq!(cells, (0..32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bad_dimension() {
        assert!(Sobol::new(0).is_err());
        assert!(Sobol::new(MAX_DIM + 1).is_err());
    }
}

//! Banded matrices with an LU factorization using partial pivoting.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("matrix is singular at pivot {index}")]
pub struct Singular {
    pub index: usize,
}

/// Square matrix with `kl` sub- and `ku` superdiagonals.
///
/// Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl` columns
/// absorb fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> BandMatrix {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl, "({i}, {j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Replaces row `i` by the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        let start = i * self.width;
        self.data[start..start + self.width].fill(0.0);
        let s = self.slot(i, i);
        self.data[s] = 1.0;
    }

    pub fn scale_row(&mut self, i: usize, f: f64) {
        let start = i * self.width;
        for v in &mut self.data[start..start + self.width] {
            *v *= f;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Solves `A x = b`, consuming the matrix.
    pub fn solve(mut self, b: &[f64]) -> Result<Vec<f64>, Singular> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut scale: f64 = 0.0;
        for v in &self.data {
            scale = scale.max(v.abs());
        }
        let tiny = scale * f64::EPSILON * n as f64 * 1e-3;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny || !best.is_finite() {
                return Err(Singular { index: k });
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let s = self.slot(i, k);
                let l = self.data[s] / pivot;
                self.data[s] = 0.0;
                lower[k * kl + (i - k - 1)] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let src = self.data[self.slot(k, j)];
                        let dst = self.slot(i, j);
                        self.data[dst] -= l * src;
                    }
                }
            }
        }
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, pivots[k]);
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= lower[k * kl + (i - k - 1)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.data[self.slot(k, j)] * x[j];
            }
            x[k] = acc / self.data[self.slot(k, k)];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                a.add(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        a
    }

    #[test]
    fn solves_random_systems_needing_pivoting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, kl, ku) in [(1, 0, 0), (7, 1, 1), (40, 3, 5), (60, 9, 2), (25, 0, 4)] {
            let a = random_band(n, kl, ku, &mut rng);
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let b = a.mul_vec(&x);
            let got = a.solve(&b).unwrap();
            for (g, e) in got.iter().zip(&x) {
                assert!((g - e).abs() < 1e-8, "n={n} kl={kl} ku={ku}");
            }
        }
    }

    #[test]
    fn zero_leading_entry_is_pivoted_away() {
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.add(0, 1, 1.0);
        a.add(1, 0, 1.0);
        assert_eq!(a.solve(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn detects_singular() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.add(0, 0, 1.0);
        a.add(2, 2, 1.0);
        assert!(a.solve(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn identity_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = random_band(5, 1, 2, &mut rng);
        a.set_identity_row(2);
        assert_eq!(a.get(2, 2), 1.0);
        assert_eq!(a.get(2, 3), 0.0);
        assert_eq!(a.get(2, 1), 0.0);
    }
}

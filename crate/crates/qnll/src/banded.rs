//! Symmetric banded matrices with Cholesky and LDL^T factorisations.
//!
//! Only the lower band is stored, column-wise: entry `(i, j)` with
//! `0 <= i - j <= bw` lives at `data[j * (bw + 1) + (i - j)]`. The lattice
//! Hessians have bandwidth `2 * r_cut = 4`; coarse-grained Hessians have the
//! same bound in node indices.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.bw);
        j * (self.bw + 1) + (i - j)
    }

    /// Symmetric read; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Symmetric accumulate. Panics if `(i, j)` falls outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        let at = self.idx(i, j);
        self.data[at] += v;
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }

    /// Adds `shift` to every diagonal entry.
    pub fn add_diagonal(&mut self, shift: f64) {
        for j in 0..self.n {
            self.data[j * (self.bw + 1)] += shift;
        }
    }

    /// Largest absolute diagonal entry.
    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|j| self.data[j * (self.bw + 1)].abs()).fold(0.0, f64::max)
    }

    /// `out = A x` using the symmetric structure.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        out.fill(0.0);
        for j in 0..self.n {
            let diag = self.data[j * (self.bw + 1)];
            out[j] += diag * x[j];
            let imax = (j + self.bw).min(self.n - 1);
            for i in j + 1..=imax {
                let v = self.data[self.idx(i, j)];
                out[i] += v * x[j];
                out[j] += v * x[i];
            }
        }
    }

    /// Returns `self - sigma * other`, widening the band as needed.
    pub fn shifted_by(&self, sigma: f64, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.n, other.n);
        let bw = self.bw.max(other.bw);
        let mut out = BandedMatrix::new(self.n, bw);
        for j in 0..self.n {
            let imax = (j + bw).min(self.n - 1);
            for i in j..=imax {
                let v = self.get(i, j) - sigma * other.get(i, j);
                if v != 0.0 {
                    out.add(i, j, v);
                }
            }
        }
        out
    }

    /// Banded Cholesky `A = L L^T`. Fails with the pivot index on a
    /// non-positive pivot, which doubles as the indefiniteness test.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.data.clone();
        let w = bw + 1;
        for j in 0..n {
            // diagonal pivot
            let mut s = l[j * w];
            let kmin = j.saturating_sub(bw);
            for k in kmin..j {
                let v = l[k * w + (j - k)];
                s -= v * v;
            }
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::NotPositiveDefinite(j));
            }
            let d = s.sqrt();
            l[j * w] = d;
            let imax = (j + bw).min(n - 1);
            for i in j + 1..=imax {
                let mut s = l[j * w + (i - j)];
                let kmin = i.saturating_sub(bw);
                for k in kmin..j {
                    s -= l[k * w + (i - k)] * l[k * w + (j - k)];
                }
                l[j * w + (i - j)] = s / d;
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    /// Banded `A = L D L^T` without pivoting. Succeeds for indefinite
    /// matrices as long as no pivot degenerates; the sign count of `D`
    /// equals the number of negative eigenvalues (Sylvester).
    pub fn ldlt(&self) -> Result<BandedLdlt> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        let mut d = vec![0.0f64; n];
        let scale = self.max_abs_diagonal().max(1.0);
        for j in 0..n {
            let mut s = l[j * w];
            let kmin = j.saturating_sub(bw);
            for k in kmin..j {
                let v = l[k * w + (j - k)];
                s -= v * v * d[k];
            }
            if !s.is_finite() || s.abs() <= f64::EPSILON * scale * 1e-2 {
                return Err(Error::NotPositiveDefinite(j));
            }
            d[j] = s;
            let imax = (j + bw).min(n - 1);
            for i in j + 1..=imax {
                let mut s = l[j * w + (i - j)];
                let kmin = i.saturating_sub(bw);
                for k in kmin..j {
                    s -= l[k * w + (i - k)] * l[k * w + (j - k)] * d[k];
                }
                l[j * w + (i - j)] = s / d[j];
            }
            l[j * w] = 1.0;
        }
        Ok(BandedLdlt { n, bw, l, d })
    }
}

/// Cholesky factor of a banded SPD matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        // forward: L y = b
        for i in 0..self.n {
            let kmin = i.saturating_sub(self.bw);
            let mut s = b[i];
            for k in kmin..i {
                s -= self.l[k * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
        // backward: L^T x = y
        for i in (0..self.n).rev() {
            let imax = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for k in i + 1..=imax {
                s -= self.l[i * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}

/// LDL^T factor of a banded symmetric (possibly indefinite) matrix.
#[derive(Debug, Clone)]
pub struct BandedLdlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandedLdlt {
    /// Number of negative pivots, i.e. eigenvalues below zero.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        for i in 0..self.n {
            let kmin = i.saturating_sub(self.bw);
            let mut s = b[i];
            for k in kmin..i {
                s -= self.l[k * w + (i - k)] * b[k];
            }
            b[i] = s;
        }
        for i in 0..self.n {
            b[i] /= self.d[i];
        }
        for i in (0..self.n).rev() {
            let imax = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for k in i + 1..=imax {
                s -= self.l[i * w + (k - i)] * b[k];
            }
            b[i] = s;
        }
    }
}

/// Discrete Laplacian (Dirichlet) on `n` free sites: `tridiag(-1, 2, -1)`.
/// Its quadratic form is `sum over cells of (grad v)^2`.
pub fn dirichlet_laplacian(n: usize) -> BandedMatrix {
    let mut m = BandedMatrix::new(n, 1);
    for i in 0..n {
        m.add(i, i, 2.0);
        if i + 1 < n {
            m.add(i + 1, i, -1.0);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, bw: usize, rng: &mut impl Rng) -> BandedMatrix {
        // diagonally dominant => SPD
        let mut a = BandedMatrix::new(n, bw);
        for j in 0..n {
            for i in j + 1..=(j + bw).min(n - 1) {
                a.add(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j {
                    row += a.get(i, j).abs();
                }
            }
            a.add(i, i, row + rng.gen_range(0.5..1.5));
        }
        a
    }

    #[test]
    fn cholesky_solves_random_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, bw) in &[(1usize, 0usize), (5, 1), (12, 4), (40, 4)] {
            let a = random_spd(n, bw, &mut rng);
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut b = vec![0.0; n];
            a.mul_vec(&x_true, &mut b);
            let f = a.cholesky().unwrap();
            f.solve_in_place(&mut b);
            for i in 0..n {
                assert!((b[i] - x_true[i]).abs() < 1e-10, "{} vs {}", b[i], x_true[i]);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = BandedMatrix::new(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -2.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite(1))));
    }

    #[test]
    fn ldlt_inertia_counts_negative_eigenvalues() {
        // diag(3, -1, 2, -5) has two negative eigenvalues
        let mut a = BandedMatrix::new(4, 1);
        for (i, v) in [3.0, -1.0, 2.0, -5.0].iter().enumerate() {
            a.add(i, i, *v);
        }
        assert_eq!(a.ldlt().unwrap().negative_count(), 2);

        // shifted Laplacian: eigenvalues 2 - 2 cos(k pi / (n+1)) - sigma
        let n = 9;
        let lap = dirichlet_laplacian(n);
        let sigma = 1.0;
        let shifted = lap.shifted_by(sigma, &BandedMatrix::identity_like(n));
        let expected = (1..=n)
            .filter(|&k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos() < sigma)
            .count();
        assert_eq!(shifted.ldlt().unwrap().negative_count(), expected);
    }

    #[test]
    fn ldlt_solve_matches_cholesky_on_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_spd(17, 3, &mut rng);
        let b: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x1 = b.clone();
        a.cholesky().unwrap().solve_in_place(&mut x1);
        let mut x2 = b;
        a.ldlt().unwrap().solve_in_place(&mut x2);
        for i in 0..17 {
            assert!((x1[i] - x2[i]).abs() < 1e-11);
        }
    }

    impl BandedMatrix {
        fn identity_like(n: usize) -> BandedMatrix {
            let mut m = BandedMatrix::new(n, 0);
            for i in 0..n {
                m.add(i, i, 1.0);
            }
            m
        }
    }
}

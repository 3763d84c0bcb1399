use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Square band matrix with `kl` sub- and `ku` super-diagonals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || j + self.kl < i || j > i + self.ku {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |k| self.data[k])
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.slot(i, j).unwrap_or_else(|| panic!("({i}, {j}) outside band"));
        self.data[k] = v;
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            let k = self.slot(i, i).unwrap();
            self.data[k] = self.data[k] + v;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j])
            })
            .collect()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).fold(T::zero(), |acc, j| acc + self.get(i, j).abs())
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// LU factorisation with partial pivoting; fill widens the upper band to `kl + ku`.
    pub fn factor(&self) -> Result<BandedLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let ku2 = self.kl + self.ku;
        let mut lu = BandedMatrix::zeros(n, kl, ku2);
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + self.ku).min(n.saturating_sub(1));
            for j in lo..=hi {
                lu.set(i, j, self.get(i, j));
            }
        }
        let mut piv = vec![0usize; n];
        let scale = self.norm_inf();
        let tiny = scale * T::epsilon() * lit(1e-3);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.get(k, k).abs();
            for i in k + 1..=last {
                let v = lu.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(Error::Singular { row: k, condition: f64::INFINITY });
            }
            piv[k] = p;
            let jmax = (k + ku2).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = lu.get(k, j);
                    let b = lu.get(p, j);
                    lu.set(k, j, b);
                    lu.set(p, j, a);
                }
            }
            let d = lu.get(k, k);
            for i in k + 1..=last {
                let l = lu.get(i, k) / d;
                lu.set(i, k, l);
                if l != T::zero() {
                    for j in k + 1..=jmax {
                        let v = lu.get(i, j) - l * lu.get(k, j);
                        lu.set(i, j, v);
                    }
                }
            }
        }
        let mut out = BandedLu { lu, piv, norm: scale, condition: T::nan() };
        out.condition = out.estimate_condition();
        Ok(out)
    }
}

/// Packed factors from [`BandedMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    lu: BandedMatrix<T>,
    piv: Vec<usize>,
    norm: T,
    condition: T,
}

impl<T: Scalar> BandedLu<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.lu.n;
        let kl = self.lu.kl;
        let ku2 = self.lu.ku;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            for i in k + 1..=last {
                b[i] = b[i] - self.lu.get(i, k) * b[k];
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + ku2).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=jmax {
                s = s - self.lu.get(k, j) * b[j];
            }
            b[k] = s / self.lu.get(k, k);
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Infinity-norm condition number estimate (a lower bound from a few probe solves).
    pub fn condition(&self) -> T {
        self.condition
    }

    fn estimate_condition(&self) -> T {
        let n = self.lu.n;
        let probes: [Box<dyn Fn(usize) -> T>; 3] = [
            Box::new(|_| T::one()),
            Box::new(|i| if i % 2 == 0 { T::one() } else { -T::one() }),
            Box::new(|i| if (i / 2) % 2 == 0 { T::one() } else { -T::one() }),
        ];
        let mut inv = T::zero();
        for probe in probes.iter() {
            let b: Vec<T> = (0..n).map(probe).collect();
            let x = self.solve(&b);
            let xn = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            inv = inv.max(xn);
        }
        self.norm * inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_from(m: &BandedMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut m = BandedMatrix::<f64>::zeros(3, 1, 1);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 2, 2.0);
        m.set(2, 1, 3.0);
        m.set(2, 2, 1.0);
        let lu = m.factor().unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let y = m.matvec(&x);
        for (a, b) in y.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let m = BandedMatrix::<f64>::zeros(4, 2, 2);
        assert!(matches!(m.factor(), Err(Error::Singular { row: 0, .. })));
    }

    #[test]
    fn condition_of_identity_is_one() {
        let mut m = BandedMatrix::<f64>::zeros(10, 2, 2);
        m.add_diagonal(1.0);
        assert!((m.factor().unwrap().condition() - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn solve_recovers_random_systems(seed in proptest::collection::vec(-1.0f64..1.0, 5 * 30), n in 5usize..30) {
            let mut m = BandedMatrix::zeros(n, 2, 2);
            for i in 0..n {
                for d in 0..5 {
                    let j = i as isize + d as isize - 2;
                    if j >= 0 && (j as usize) < n {
                        m.set(i, j as usize, seed[i * 5 + d]);
                    }
                }
            }
            m.add_diagonal(0.1);
            let dense = dense_from(&m);
            let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let b = m.matvec(&x);
            if let Ok(lu) = m.factor() {
                if lu.condition() < 1e8 {
                    let y = lu.solve(&b);
                    for i in 0..n {
                        prop_assert!((y[i] - x[i]).abs() < 1e-6 * lu.condition().max(1.0), "{:?}", dense[i]);
                    }
                }
            }
        }
    }
}

//! Small direct solvers for the implicit step: a banded LU without pivoting,
//! a dense LU with partial pivoting for the capacitance matrix, and the
//! Sherman–Morrison–Woodbury combination of the two for
//! `(P + s CᵀC) x = r` with `P` banded and `C` a short, sparse `N × n` block.

use crate::error::{Result, RiserError};

/// Row-major band storage: entry `(i, j)` lives at `i * (kl + ku + 1) + (j + kl − i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || j + self.kl < i || j > i + self.ku {
            return None;
        }
        Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.index(i, j).map_or(0.0, |p| self.data[p])
    }

    /// Adds `value` at `(i, j)`. Panics if the entry is outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let p = self
            .index(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside band ({}, {})", self.kl, self.ku));
        self.data[p] += value;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + 1).min(self.n);
                (lo..hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Doolittle factorization without pivoting; fill stays inside the band.
    /// Intended for matrices whose symmetric part is positive definite.
    pub fn factorize(mut self) -> Result<BandedLu> {
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tiny = scale * f64::EPSILON * self.n as f64;
        for k in 0..self.n {
            let pivot = self.get(k, k);
            if !(pivot.abs() > tiny) {
                return Err(RiserError::SingularPivot { row: k, pivot });
            }
            let row_end = (k + self.kl + 1).min(self.n);
            let col_end = (k + self.ku + 1).min(self.n);
            for i in k + 1..row_end {
                let pi = self.index(i, k).expect("in band");
                let l = self.data[pi] / pivot;
                self.data[pi] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..col_end {
                    let ukj = self.get(k, j);
                    let pij = self.index(i, j).expect("in band");
                    self.data[pij] -= l * ukj;
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.lu.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.lu;
        let n = a.n;
        for i in 0..n {
            let lo = i.saturating_sub(a.kl);
            let mut s = b[i];
            for j in lo..i {
                s -= a.get(i, j) * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + a.ku + 1).min(n);
            let mut s = b[i];
            for j in i + 1..hi {
                s -= a.get(i, j) * b[j];
            }
            b[i] = s / a.get(i, i);
        }
    }
}

/// Dense LU with partial pivoting, row-major.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factorize(n: usize, mut a: Vec<f64>) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, max) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(max > 0.0) {
                return Err(RiserError::SingularPivot { row: k, pivot: 0.0 });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / pivot;
                a[i * n + k] = l;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

/// Solver for `(P + s CᵀC) x = r`, where each row of `C` is a sparse list of
/// `(column, value)` pairs.
#[derive(Debug, Clone)]
pub struct LowRankUpdatedSolver {
    base: BandedLu,
    update: Option<Woodbury>,
}

#[derive(Debug, Clone)]
struct Woodbury {
    rows: Vec<Vec<(usize, f64)>>,
    /// `Z = P⁻¹ (s Cᵀ)`, column-major `n × N`.
    z: Vec<f64>,
    capacitance: DenseLu,
}

impl LowRankUpdatedSolver {
    pub fn new(base: BandedLu, rows: Vec<Vec<(usize, f64)>>, scale: f64) -> Result<Self> {
        if scale == 0.0 || rows.is_empty() {
            return Ok(Self { base, update: None });
        }
        let n = base.n();
        let r = rows.len();
        let mut z = vec![0.0; n * r];
        for (k, row) in rows.iter().enumerate() {
            let col = &mut z[k * n..(k + 1) * n];
            for &(j, c) in row {
                col[j] = scale * c;
            }
            base.solve_in_place(col);
        }
        // I + C Z
        let mut cap = vec![0.0; r * r];
        for (i, row) in rows.iter().enumerate() {
            for k in 0..r {
                let col = &z[k * n..(k + 1) * n];
                cap[i * r + k] = row.iter().map(|&(j, c)| c * col[j]).sum();
            }
            cap[i * r + i] += 1.0;
        }
        let capacitance = DenseLu::factorize(r, cap)?;
        Ok(Self {
            base,
            update: Some(Woodbury {
                rows,
                z,
                capacitance,
            }),
        })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.base.solve_in_place(b);
        if let Some(w) = &self.update {
            let n = b.len();
            let cy: Vec<f64> = w
                .rows
                .iter()
                .map(|row| row.iter().map(|&(j, c)| c * b[j]).sum())
                .collect();
            let t = w.capacitance.solve(&cy);
            for (k, tk) in t.iter().enumerate() {
                if *tk == 0.0 {
                    continue;
                }
                let col = &w.z[k * n..(k + 1) * n];
                for (bi, zi) in b.iter_mut().zip(col) {
                    *bi -= tk * zi;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_solve(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        DenseLu::factorize(n, a.to_vec()).unwrap().solve(b)
    }

    fn banded_case() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
        (6usize..20).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(-1.0f64..1.0, n * 5),
                prop::collection::vec(-1.0f64..1.0, n),
            )
        })
    }

    #[test]
    fn dense_lu_pivots() {
        let a = vec![0.0, 1.0, 2.0, 3.0];
        let x = dense_solve(2, &a, &[1.0, 8.0]);
        assert!((x[0] - 2.5).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let m = BandedMatrix::zeros(4, 1, 1);
        assert!(matches!(
            m.factorize(),
            Err(RiserError::SingularPivot { row: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn banded_matches_dense((n, entries, b) in banded_case()) {
            let mut band = BandedMatrix::zeros(n, 2, 2);
            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                for (slot, d) in (-2isize..=2).enumerate() {
                    let j = i as isize + d;
                    if j < 0 || j as usize >= n { continue; }
                    let mut v = entries[i * 5 + slot];
                    if d == 0 { v += 8.0; }
                    band.add(i, j as usize, v);
                    dense[i * n + j as usize] = v;
                }
            }
            let expected = dense_solve(n, &dense, &b);
            let mut x = b.clone();
            band.factorize().unwrap().solve_in_place(&mut x);
            for (a, e) in x.iter().zip(&expected) {
                prop_assert!((a - e).abs() < 1e-11);
            }
        }

        #[test]
        fn woodbury_matches_dense(
            (n, entries, b) in banded_case(),
            c in prop::collection::vec(0.0f64..1.0, 40),
            scale in 0.1f64..10.0,
        ) {
            let mut band = BandedMatrix::zeros(n, 2, 2);
            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                for (slot, d) in (-2isize..=2).enumerate() {
                    let j = i as isize + d;
                    if j < 0 || j as usize >= n { continue; }
                    let mut v = entries[i * 5 + slot];
                    if d == 0 { v += 8.0; }
                    band.add(i, j as usize, v);
                    dense[i * n + j as usize] = v;
                }
            }
            // three overlapping sparse rows
            let rows: Vec<Vec<(usize, f64)>> = (0..3)
                .map(|k| {
                    let start = k * n / 3;
                    let end = ((k + 1) * n / 3 + 1).min(n);
                    (start..end).map(|j| (j, c[(k * 13 + j) % 40])).collect()
                })
                .collect();
            for row in &rows {
                for &(i, ci) in row {
                    for &(j, cj) in row {
                        dense[i * n + j] += scale * ci * cj;
                    }
                }
            }
            let expected = dense_solve(n, &dense, &b);
            let solver = LowRankUpdatedSolver::new(band.factorize().unwrap(), rows, scale).unwrap();
            let mut x = b.clone();
            solver.solve_in_place(&mut x);
            for (a, e) in x.iter().zip(&expected) {
                prop_assert!((a - e).abs() < 1e-10);
            }
        }
    }
}

//! Symmetric banded matrices and generalized eigensolvers `A w = λ M w`
//! with diagonal positive `M`.
//!
//! Small problems go through a dense symmetric eigendecomposition. Larger
//! ones use shift-invert block Krylov iteration on an `LDLᵀ` factorization
//! of `A − σM`; the factorization also yields eigenvalue counts below `σ`
//! by Sylvester's law of inertia.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, invalid, Error, Result};
use crate::par;

/// Symmetric matrix stored as its lower band. Row `i` keeps columns
/// `i − kd ..= i`; slot `kd` is the diagonal.
#[derive(Clone, Debug)]
pub struct BandedSym {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.kd + 1) + self.kd + j - i
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)` (once on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.kd, "entry ({i},{j}) outside band {}", self.kd);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.kd {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.slot(i, i)]).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let row = &self.data[i * (self.kd + 1)..(i + 1) * (self.kd + 1)];
            let mut acc = row[self.kd] * x[i];
            for j in lo..i {
                let a = row[self.kd + j - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(self.kd)..=i {
                let v = self.get(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// `LDLᵀ` of `A − σ diag(mass)` without pivoting.
    pub fn factor_shifted(&self, sigma: f64, mass: &[f64]) -> Result<BandLdlt> {
        check_len(self.n, mass.len())?;
        let n = self.n;
        let kd = self.kd;
        let w = kd + 1;
        let mut l = vec![0.0; n * w];
        let mut d = vec![0.0; n];
        let scale = self
            .diagonal()
            .iter()
            .zip(mass)
            .map(|(a, m)| (a - sigma * m).abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut u = vec![0.0; w];
        for i in 0..n {
            let lo = i.saturating_sub(kd);
            for j in lo..i {
                let mut uj = self.data[i * w + kd + j - i];
                let row_j = &l[j * w..(j + 1) * w];
                for k in lo..j {
                    uj -= u[k - lo] * row_j[kd + k - j];
                }
                u[j - lo] = uj;
            }
            let mut di = self.data[i * w + kd] - sigma * mass[i];
            for j in lo..i {
                let lij = u[j - lo] / d[j];
                l[i * w + kd + j - i] = lij;
                di -= u[j - lo] * lij;
            }
            if di.abs() <= 1e-14 * scale {
                return Err(Error::Degenerate(format!(
                    "zero pivot at row {i} for shift {sigma:.6e}"
                )));
            }
            d[i] = di;
        }
        Ok(BandLdlt { n, kd, l, d })
    }

    /// Number of eigenvalues of `(A, diag(mass))` strictly below `sigma`.
    pub fn count_below(&self, sigma: f64, mass: &[f64]) -> Result<usize> {
        let mut s = sigma;
        for attempt in 0..8 {
            match self.factor_shifted(s, mass) {
                Ok(f) => return Ok(f.negative_pivots()),
                Err(Error::Degenerate(_)) => {
                    s = sigma + (attempt as f64 + 1.0) * 1e-9 * sigma.abs().max(1e-6);
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::Degenerate(format!("shift {sigma} is an eigenvalue")))
    }
}

/// Band `LDLᵀ` factors with unit lower-triangular `L`.
#[derive(Clone, Debug)]
pub struct BandLdlt {
    n: usize,
    kd: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdlt {
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|v| **v < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.kd + 1;
        let kd = self.kd;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(kd);
            let row = &self.l[i * w..(i + 1) * w];
            let mut acc = y[i];
            for k in lo..i {
                acc -= row[kd + k - i] * y[k];
            }
            y[i] = acc;
        }
        for (yi, di) in y.iter_mut().zip(&self.d) {
            *yi /= di;
        }
        for i in (0..self.n).rev() {
            let lo = i.saturating_sub(kd);
            let xi = y[i];
            let row = &self.l[i * w..(i + 1) * w];
            for k in lo..i {
                y[k] -= row[kd + k - i] * xi;
            }
        }
        y
    }
}

/// Lowest eigenpairs of a generalized symmetric problem.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// `M`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    /// `‖A w − λ M w‖₂ / ‖w‖₂` per pair.
    pub residuals: Vec<f64>,
    pub method: SolverKind,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SolverKind {
    Dense,
    ShiftInvert,
}

/// Problems up to this many unknowns are solved densely.
pub const DENSE_LIMIT: usize = 2000;

fn residuals(a: &BandedSym, mass: &[f64], values: &[f64], vectors: &[Vec<f64>]) -> Vec<f64> {
    par::map_range(values.len(), |k| {
        let w = &vectors[k];
        let aw = a.matvec(w);
        let r: f64 = aw
            .iter()
            .zip(w)
            .zip(mass)
            .map(|((x, wi), m)| (x - values[k] * m * wi).powi(2))
            .sum();
        let nw: f64 = w.iter().map(|v| v * v).sum();
        (r / nw.max(f64::MIN_POSITIVE)).sqrt()
    })
}

/// All eigenpairs by a dense solve of `M^{-1/2} A M^{-1/2}`; returns the lowest `count`.
pub fn dense_generalized(a: &BandedSym, mass: &[f64], count: usize) -> Result<EigenPairs> {
    check_len(a.dim(), mass.len())?;
    if mass.iter().any(|m| !(*m > 0.0)) {
        return Err(invalid("mass", "must be strictly positive"));
    }
    let n = a.dim();
    let count = count.min(n);
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut b = a.to_dense();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] *= s[i] * s[j];
        }
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values: Vec<f64> = order[..count].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors: Vec<Vec<f64>> = order[..count]
        .iter()
        .map(|&k| (0..n).map(|i| eig.eigenvectors[(i, k)] * s[i]).collect())
        .collect();
    let residuals = residuals(a, mass, &values, &vectors);
    Ok(EigenPairs {
        values,
        vectors,
        residuals,
        method: SolverKind::Dense,
        iterations: 1,
    })
}

/// Options of the shift-invert iteration.
#[derive(Clone, Debug)]
pub struct KrylovOptions {
    /// Extra Ritz vectors carried beyond `count`.
    pub guard: usize,
    /// Krylov blocks generated per restart.
    pub depth: usize,
    pub max_restarts: usize,
    /// Target residual `‖Aw − λMw‖/‖w‖` relative to `max |A_ii|`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            guard: 10,
            depth: 5,
            max_restarts: 60,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

fn m_dot(x: &[f64], y: &[f64], mass: &[f64]) -> f64 {
    x.iter().zip(y).zip(mass).map(|((a, b), m)| a * b * m).sum()
}

/// Appends the columns of `block` to `basis` after two passes of
/// `M`-orthogonalization; drops numerically dependent columns.
fn extend_basis(basis: &mut Vec<Vec<f64>>, block: Vec<Vec<f64>>, mass: &[f64]) -> Vec<usize> {
    let mut added = Vec::new();
    for mut v in block {
        let norm0 = m_dot(&v, &v, mass).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            let coeffs = par::map_slice(basis.as_slice(), |q| m_dot(q, &v, mass));
            for (q, c) in basis.iter().zip(coeffs) {
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let norm = m_dot(&v, &v, mass).sqrt();
        if norm > 1e-10 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            added.push(basis.len());
            basis.push(v);
        }
    }
    added
}

/// Lowest `count` eigenpairs by shift-invert block Krylov with Rayleigh–Ritz
/// restarts. `shift` must lie below the wanted eigenvalues; it is lowered
/// automatically if the inertia shows eigenvalues beneath it.
pub fn shift_invert_lowest(
    a: &BandedSym,
    mass: &[f64],
    count: usize,
    shift: f64,
    opts: &KrylovOptions,
) -> Result<EigenPairs> {
    check_len(a.dim(), mass.len())?;
    let n = a.dim();
    if count == 0 || count > n {
        return Err(invalid("count", format!("{count} for dimension {n}")));
    }
    let mut sigma = shift;
    let scale = a
        .diagonal()
        .iter()
        .zip(mass)
        .map(|(d, m)| d.abs() / m)
        .fold(0.0, f64::max)
        .max(1e-300);
    let anorm = a.diagonal().iter().map(|d| d.abs()).fold(0.0, f64::max).max(1e-300);
    let mut fact = None;
    for _ in 0..60 {
        match a.factor_shifted(sigma, mass) {
            Ok(f) if f.negative_pivots() == 0 => {
                fact = Some(f);
                break;
            }
            _ => sigma -= (sigma.abs() + 1e-3 * scale).max(1e-6),
        }
    }
    let fact = fact.ok_or_else(|| Error::NoConvergence("no admissible shift found".into()))?;

    let p = (count + opts.guard).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let op = |v: &Vec<f64>| -> Vec<f64> {
        let mv: Vec<f64> = v.iter().zip(mass).map(|(x, m)| x * m).collect();
        fact.solve(&mv)
    };

    let mut last_res = Vec::new();
    for restart in 0..opts.max_restarts {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut block_idx = extend_basis(&mut basis, start, mass);
        for _ in 1..opts.depth {
            if basis.len() >= n || block_idx.is_empty() {
                break;
            }
            let block: Vec<Vec<f64>> = par::map_slice(&block_idx, |&k| op(&basis[k]));
            block_idx = extend_basis(&mut basis, block, mass);
        }
        let q = basis.len();
        let av: Vec<Vec<f64>> = par::map_slice(basis.as_slice(), |v| a.matvec(v));
        let mut h = DMatrix::zeros(q, q);
        let entries = par::map_range(q, |i| {
            (0..=i)
                .map(|j| basis[i].iter().zip(&av[j]).map(|(x, y)| x * y).sum::<f64>())
                .collect::<Vec<f64>>()
        });
        for (i, row) in entries.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let keep = p.min(q);
        let ritz: Vec<Vec<f64>> = par::map_range(keep, |c| {
            let k = order[c];
            let mut w = vec![0.0; n];
            for (i, b) in basis.iter().enumerate() {
                let y = eig.eigenvectors[(i, k)];
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi += y * bi);
            }
            w
        });
        let values: Vec<f64> = order[..keep].iter().map(|&k| eig.eigenvalues[k]).collect();
        let res = residuals(a, mass, &values[..count], &ritz[..count]);
        let worst = res.iter().copied().fold(0.0, f64::max);
        if worst <= opts.tol * anorm {
            return Ok(EigenPairs {
                values: values[..count].to_vec(),
                vectors: ritz[..count].to_vec(),
                residuals: res,
                method: SolverKind::ShiftInvert,
                iterations: restart + 1,
            });
        }
        last_res = res;
        start = ritz;
    }
    Err(Error::NoConvergence(format!(
        "worst residual {:.3e} after {} restarts",
        last_res.iter().copied().fold(0.0, f64::max),
        opts.max_restarts
    )))
}

/// Dense solve up to [`DENSE_LIMIT`] unknowns, shift-invert above.
pub fn lowest_eigenpairs(
    a: &BandedSym,
    mass: &[f64],
    count: usize,
    shift: f64,
    opts: &KrylovOptions,
) -> Result<EigenPairs> {
    if a.dim() <= DENSE_LIMIT {
        dense_generalized(a, mass, count)
    } else {
        shift_invert_lowest(a, mass, count, shift, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> BandedSym {
        let mut a = BandedSym::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
        }
        a
    }

    fn random_banded(n: usize, kd: usize, seed: u64) -> BandedSym {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandedSym::zeros(n, kd);
        for i in 0..n {
            for j in i.saturating_sub(kd)..=i {
                a.add(i, j, rng.random::<f64>() - 0.5);
            }
            a.add(i, i, 2.0 * kd as f64);
        }
        a
    }

    #[test]
    fn ldlt_solves_against_dense_lu() {
        let a = random_banded(40, 5, 1);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x = a.factor_shifted(0.0, &vec![1.0; 40]).unwrap().solve(&b);
        let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..40 {
            assert!((x[i] - dense[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_counts_match_dense_spectrum() {
        let a = random_banded(60, 4, 7);
        let mass: Vec<f64> = (0..60).map(|i| 1.0 + 0.01 * i as f64).collect();
        let all = dense_generalized(&a, &mass, 60).unwrap();
        for sigma in [-1.0, 2.0, 5.5, 8.0, 11.0] {
            let expect = all.values.iter().filter(|v| **v < sigma).count();
            assert_eq!(a.count_below(sigma, &mass).unwrap(), expect);
        }
    }

    #[test]
    fn dense_1d_laplacian() {
        let n = 50;
        let e = dense_generalized(&laplacian_1d(n), &vec![1.0; n], 3).unwrap();
        for (k, v) in e.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_invert_matches_dense() {
        let n = 300;
        let a = random_banded(n, 6, 3);
        let mass: Vec<f64> = (0..n).map(|i| 0.5 + ((i * 7) % 11) as f64 / 10.0).collect();
        let d = dense_generalized(&a, &mass, 12).unwrap();
        let s = shift_invert_lowest(&a, &mass, 12, 0.0, &KrylovOptions::default()).unwrap();
        for k in 0..12 {
            assert!((d.values[k] - s.values[k]).abs() < 1e-9 * d.values[k].abs().max(1.0));
            assert!(s.residuals[k] < 1e-8);
        }
    }

    #[test]
    fn shift_invert_resolves_multiplicity() {
        // block diagonal copies of the same chain give every eigenvalue multiplicity 4
        let m = 80;
        let n = 4 * m;
        let mut a = BandedSym::zeros(n, 1);
        for b in 0..4 {
            for i in 0..m {
                a.add(b * m + i, b * m + i, 2.0);
                if i + 1 < m {
                    a.add(b * m + i + 1, b * m + i, -1.0);
                }
            }
        }
        let s = shift_invert_lowest(&a, &vec![1.0; n], 8, -0.1, &KrylovOptions::default()).unwrap();
        let l1 = 2.0 - 2.0 * (std::f64::consts::PI / (m + 1) as f64).cos();
        let l2 = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / (m + 1) as f64).cos();
        for k in 0..4 {
            assert!((s.values[k] - l1).abs() < 1e-10);
            assert!((s.values[k + 4] - l2).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_scaling_divides_eigenvalues() {
        let a = random_banded(30, 3, 9);
        let m1 = vec![1.0; 30];
        let m2 = vec![4.0; 30];
        let e1 = dense_generalized(&a, &m1, 5).unwrap();
        let e2 = dense_generalized(&a, &m2, 5).unwrap();
        for k in 0..5 {
            assert!((e1.values[k] / 4.0 - e2.values[k]).abs() < 1e-12);
        }
    }
}

//! L², weak-L² and L^{2,1} norms of sampled fields.
//!
//! Norms are computed from the discrete distribution function: nodes are
//! sorted by decreasing magnitude and their cell areas accumulated, so the
//! result is exact for the step function the grid represents.

use crate::error::{check_len, Result};
use crate::grid::PolarGrid;

/// Magnitudes sorted in non-increasing order with the cumulative measure of
/// `{|f| >= value}` at each entry.
#[derive(Clone, Debug)]
pub struct RearrangedField {
    pub values: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RearrangedField {
    pub fn new(field: &[f64], areas: &[f64]) -> Result<Self> {
        check_len(areas.len(), field.len())?;
        let mut pairs: Vec<(f64, f64)> = field.iter().map(|v| v.abs()).zip(areas.iter().copied()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut acc = 0.0;
        let (values, cumulative) = pairs
            .into_iter()
            .map(|(v, a)| {
                acc += a;
                (v, acc)
            })
            .unzip();
        Ok(Self { values, cumulative })
    }

    pub fn total_measure(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `sup_λ λ |{|f| > λ}|^{1/2}`, attained as `λ` increases to a sample value.
    pub fn weak_l2(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.cumulative)
            .map(|(v, c)| v * c.sqrt())
            .fold(0.0, f64::max)
    }

    /// `∫₀^∞ |{|f| > s}|^{1/2} ds` on the step distribution.
    pub fn l21(&self) -> f64 {
        let n = self.values.len();
        (0..n)
            .map(|i| {
                let next = if i + 1 < n { self.values[i + 1] } else { 0.0 };
                (self.values[i] - next) * self.cumulative[i].sqrt()
            })
            .sum()
    }

    /// `(∫ |f|²)^{1/2}`.
    pub fn l2(&self) -> f64 {
        let mut prev = 0.0;
        self.values
            .iter()
            .zip(&self.cumulative)
            .map(|(v, c)| {
                let a = c - prev;
                prev = *c;
                v * v * a
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// The three norms of one field.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LorentzTriple {
    pub weak: f64,
    pub l2: f64,
    pub l21: f64,
}

pub fn l2_norm(grid: &PolarGrid, field: &[f64]) -> Result<f64> {
    let sq: Vec<f64> = field.iter().map(|v| v * v).collect();
    Ok(grid.integrate(&sq)?.sqrt())
}

pub fn l2_weak_quasinorm(grid: &PolarGrid, field: &[f64]) -> Result<f64> {
    Ok(RearrangedField::new(field, &grid.cell_areas())?.weak_l2())
}

pub fn l21_norm(grid: &PolarGrid, field: &[f64]) -> Result<f64> {
    Ok(RearrangedField::new(field, &grid.cell_areas())?.l21())
}

pub fn lorentz_norms(grid: &PolarGrid, field: &[f64]) -> Result<LorentzTriple> {
    let r = RearrangedField::new(field, &grid.cell_areas())?;
    Ok(LorentzTriple {
        weak: r.weak_l2(),
        l2: l2_norm(grid, field)?,
        l21: r.l21(),
    })
}

/// Exact norms of `|∇ log|x|| = 1/|x|` on `B_outer \ B_inner`.
pub fn log_gradient_exact(inner: f64, outer: f64) -> LorentzTriple {
    let q = 1.0 - (inner / outer).powi(2);
    let sp = std::f64::consts::PI.sqrt();
    LorentzTriple {
        weak: sp * q.sqrt(),
        l2: (2.0 * std::f64::consts::PI * (outer / inner).ln()).sqrt(),
        l21: sp * q.sqrt().atanh(),
    }
}

/// Closed forms quoted for `∇ log|x|` on `A(η, δ)` with modulus
/// `L = log(η²/δ)`: `(√π, √(2πL), √(2π)·L)`.
pub fn log_gradient_quoted(modulus: f64) -> LorentzTriple {
    let pi = std::f64::consts::PI;
    LorentzTriple {
        weak: pi.sqrt(),
        l2: (2.0 * pi * modulus).sqrt(),
        l21: (2.0 * pi).sqrt() * modulus,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_annulus, DiskGrid};

    #[test]
    fn two_level_field() {
        // value 2 on half the area: weak = 2 sqrt(A/2); l21 = 2 sqrt(A/2)
        let areas = vec![0.25; 8];
        let field = [2.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0];
        let r = RearrangedField::new(&field, &areas).unwrap();
        assert!((r.weak_l2() - 2.0 * 1.0f64.sqrt()).abs() < 1e-14);
        assert!((r.l21() - 2.0).abs() < 1e-14);
        let ones = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let r = RearrangedField::new(&ones, &areas).unwrap();
        assert!((r.l21() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_on_disk() {
        let g = DiskGrid::new(1.0, 64, 64).unwrap();
        let f = vec![3.0; g.n_nodes()];
        let t = lorentz_norms(&g, &f).unwrap();
        assert!((t.l2 - 3.0 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!((t.weak - t.l2).abs() < 1e-12);
        assert!((t.l21 - t.l2).abs() < 1e-12);
    }

    #[test]
    fn zero_field() {
        let g = build_annulus(1.0, 0.01, 16, 16).unwrap();
        let t = lorentz_norms(&g, &vec![0.0; g.n_nodes()]).unwrap();
        assert_eq!((t.weak, t.l2, t.l21), (0.0, 0.0, 0.0));
    }

    #[test]
    fn log_gradient_matches_exact_forms() {
        let g = build_annulus(1.0, (-4.0f64).exp(), 256, 256).unwrap();
        let f = g.sample(|r, _| 1.0 / r);
        let t = lorentz_norms(&g, &f).unwrap();
        let e = log_gradient_exact(g.delta_over_eta, g.eta);
        assert!((t.l2 / e.l2 - 1.0).abs() < 1e-3);
        assert!((t.weak / e.weak - 1.0).abs() < 2e-2);
        assert!((t.l21 / e.l21 - 1.0).abs() < 1e-2);
    }
}

//! Fourier splitting of harmonic fields on annuli, pointwise gradient bounds
//! for the positive and negative parts, and the reflection extension of
//! annulus fields to the whole plane.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{check_len, invalid, Error, Result};
use crate::grid::{smoothstep, LogPolarGrid, PolarGrid};
use crate::par;

/// `h = h₀ + C⁰ log|z| + Re Σ_{n≠0} h_n zⁿ` on `B_outer \ B_inner`.
#[derive(Clone, Debug, Serialize)]
pub struct AnnulusFourierDecomposition {
    /// `h_n` for `n = 1..=N` (index `n − 1`).
    pub positive_coeffs: Vec<Complex64>,
    /// `h_{−n}` for `n = 1..=N` (index `n − 1`).
    pub negative_coeffs: Vec<Complex64>,
    pub log_coeff: f64,
    pub constant: f64,
    pub max_mode: usize,
    pub inner: f64,
    pub outer: f64,
    /// RMS misfit of the radial profile per mode `0..=N`.
    pub mode_residuals: Vec<f64>,
    /// Condition number of the normalized radial design matrix per mode.
    pub mode_conditions: Vec<f64>,
}

/// Condition numbers above this abort the fit.
pub const MAX_CONDITION: f64 = 1e12;

fn lstsq2(u: &[f64], v: &[f64], y: &[Complex64], mode: usize) -> Result<(Complex64, Complex64, f64, f64)> {
    let n = u.len();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { u[i] / nu } else { v[i] / nv });
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned { mode, cond });
    }
    let solve = |rhs: Vec<f64>| -> Result<Vec<f64>> {
        let b = DMatrix::from_vec(n, 1, rhs);
        let x = svd
            .solve(&b, 0.0)
            .map_err(|e| Error::Degenerate(e.to_string()))?;
        Ok(vec![x[(0, 0)], x[(1, 0)]])
    };
    let re = solve(y.iter().map(|c| c.re).collect())?;
    let im = solve(y.iter().map(|c| c.im).collect())?;
    let alpha = Complex64::new(re[0], im[0]) / nu;
    let beta = Complex64::new(re[1], im[1]) / nv;
    let misfit: f64 = (0..n)
        .map(|i| (y[i] - alpha * u[i] - beta * v[i]).norm_sqr())
        .sum::<f64>();
    Ok((alpha, beta, (misfit / n as f64).sqrt(), cond))
}

/// Least-squares split of a sampled harmonic field, mode cap `n_theta / 4`.
pub fn fourier_split(grid: &LogPolarGrid, field: &[f64]) -> Result<AnnulusFourierDecomposition> {
    fourier_split_capped(grid, field, grid.n_theta() / 4)
}

/// As [`fourier_split`] with an explicit mode cap `N ≤ n_theta / 4`.
pub fn fourier_split_capped(grid: &LogPolarGrid, field: &[f64], max_mode: usize) -> Result<AnnulusFourierDecomposition> {
    let g: &PolarGrid = grid;
    check_len(g.n_nodes(), field.len())?;
    let nt = g.n_theta();
    if max_mode > nt / 4 {
        return Err(invalid("max_mode", format!("{max_mode} exceeds n_theta/4 = {}", nt / 4)));
    }
    let fft = g.angular_fft();
    let rings: Vec<Vec<Complex64>> =
        par::map_range(g.n_rings(), |i| fft.forward(&field[i * nt..(i + 1) * nt]));
    let r = g.radii();
    let (rin, rout) = (g.inner_radius(), g.outer_radius());

    let ones = vec![1.0; r.len()];
    let logs: Vec<f64> = r.iter().map(|x| x.ln()).collect();
    let y0: Vec<Complex64> = rings.iter().map(|c| c[0]).collect();
    let (c0, l0, res0, cond0) = lstsq2(&ones, &logs, &y0, 0)?;

    let fits = par::map_range(max_mode, |m| {
        let k = m + 1;
        let u: Vec<f64> = r.iter().map(|x| (x / rout).powi(k as i32)).collect();
        let v: Vec<f64> = r.iter().map(|x| (rin / x).powi(k as i32)).collect();
        let y: Vec<Complex64> = rings.iter().map(|c| c[k]).collect();
        lstsq2(&u, &v, &y, k)
    });
    let mut positive_coeffs = Vec::with_capacity(max_mode);
    let mut negative_coeffs = Vec::with_capacity(max_mode);
    let mut mode_residuals = vec![res0];
    let mut mode_conditions = vec![cond0];
    for (m, fit) in fits.into_iter().enumerate() {
        let k = (m + 1) as i32;
        let (alpha, beta, res, cond) = fit?;
        positive_coeffs.push(2.0 * alpha / rout.powi(k as i32));
        negative_coeffs.push((2.0 * beta * rin.powi(k)).conj());
        mode_residuals.push(res);
        mode_conditions.push(cond);
    }
    Ok(AnnulusFourierDecomposition {
        positive_coeffs,
        negative_coeffs,
        log_coeff: l0.re,
        constant: c0.re,
        max_mode,
        inner: rin,
        outer: rout,
        mode_residuals,
        mode_conditions,
    })
}

impl AnnulusFourierDecomposition {
    /// Decomposition with the given coefficients on `B_outer \ B_inner`.
    pub fn from_coefficients(
        inner: f64,
        outer: f64,
        constant: f64,
        log_coeff: f64,
        positive_coeffs: Vec<Complex64>,
        negative_coeffs: Vec<Complex64>,
    ) -> Self {
        let max_mode = positive_coeffs.len().max(negative_coeffs.len());
        let mut positive_coeffs = positive_coeffs;
        let mut negative_coeffs = negative_coeffs;
        positive_coeffs.resize(max_mode, Complex64::new(0.0, 0.0));
        negative_coeffs.resize(max_mode, Complex64::new(0.0, 0.0));
        Self {
            positive_coeffs,
            negative_coeffs,
            log_coeff,
            constant,
            max_mode,
            inner,
            outer,
            mode_residuals: vec![0.0; max_mode + 1],
            mode_conditions: vec![1.0; max_mode + 1],
        }
    }

    pub fn plus_part(&self) -> Self {
        let mut d = self.clone();
        d.negative_coeffs.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        d.log_coeff = 0.0;
        d.constant = 0.0;
        d
    }

    pub fn minus_part(&self) -> Self {
        let mut d = self.clone();
        d.positive_coeffs.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        d.log_coeff = 0.0;
        d.constant = 0.0;
        d
    }

    pub fn evaluate(&self, z: Complex64) -> f64 {
        let mut s = self.constant + self.log_coeff * z.norm().ln();
        let inv = 1.0 / z;
        let (mut zp, mut zm) = (z, inv);
        for n in 0..self.max_mode {
            s += (self.positive_coeffs[n] * zp).re + (self.negative_coeffs[n] * zm).re;
            zp *= z;
            zm *= inv;
        }
        s
    }

    pub fn reconstruct(&self, grid: &PolarGrid) -> Vec<f64> {
        par::map_range(grid.n_nodes(), |k| self.evaluate(grid.point(k)))
    }

    /// `|∇h⁺|²` at `z`, i.e. `|Σ n h_n z^{n−1}|²`.
    pub fn grad_sq_plus(&self, z: Complex64) -> f64 {
        let mut d = Complex64::new(0.0, 0.0);
        let mut zp = Complex64::new(1.0, 0.0);
        for n in 0..self.max_mode {
            d += (n + 1) as f64 * self.positive_coeffs[n] * zp;
            zp *= z;
        }
        d.norm_sqr()
    }

    /// `|∇h⁻|²` at `z`, i.e. `|Σ n h_{−n} z^{−n−1}|²`.
    pub fn grad_sq_minus(&self, z: Complex64) -> f64 {
        let inv = 1.0 / z;
        let mut d = Complex64::new(0.0, 0.0);
        let mut zm = inv * inv;
        for n in 0..self.max_mode {
            d += (n + 1) as f64 * self.negative_coeffs[n] * zm;
            zm *= inv;
        }
        d.norm_sqr()
    }

    /// Exact `(∫|∇h⁺|², ∫|∇h⁻|², ∫|∇(C⁰ log|z|)|²)` on `B_{ρ₂} \ B_{ρ₁}`.
    /// The three parts are orthogonal in the Dirichlet inner product.
    pub fn ring_energies(&self, rho1: f64, rho2: f64) -> (f64, f64, f64) {
        let pi = std::f64::consts::PI;
        let mut plus = 0.0;
        let mut minus = 0.0;
        for m in 0..self.max_mode {
            let n = (m + 1) as i32;
            let nf = n as f64;
            plus += pi * nf * self.positive_coeffs[m].norm_sqr() * (rho2.powi(2 * n) - rho1.powi(2 * n));
            minus += pi * nf * self.negative_coeffs[m].norm_sqr() * (rho1.powi(-2 * n) - rho2.powi(-2 * n));
        }
        let log = 2.0 * pi * self.log_coeff.powi(2) * (rho2 / rho1).ln();
        (plus, minus, log)
    }

    /// Energies on the whole annulus.
    pub fn energies(&self) -> (f64, f64, f64) {
        self.ring_energies(self.inner, self.outer)
    }

    pub fn max_residual(&self) -> f64 {
        self.mode_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Measured sup of a pointwise bound over an admissible window.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundRatio {
    pub ratio: f64,
    /// Radius where the sup is attained.
    pub radius: f64,
    /// True when numerator and denominator both vanished (ratio set to 0).
    pub degenerate: bool,
}

fn window_sup(
    grid: &LogPolarGrid,
    energy: f64,
    density: impl Fn(Complex64) -> f64 + Sync + Send,
) -> Result<BoundRatio> {
    let lo = 2.0 * grid.delta / grid.eta;
    let hi = grid.eta / 2.0;
    let rings: Vec<usize> = (0..grid.n_rings())
        .filter(|&i| grid.radii()[i] >= lo && grid.radii()[i] <= hi)
        .collect();
    if rings.is_empty() {
        return Err(Error::InvalidWindow(format!("no rings with radius in [{lo:.3e}, {hi:.3e}]")));
    }
    let nt = grid.n_theta();
    let best = par::map_slice(&rings, |&i| {
        (0..nt)
            .map(|j| (density(grid.point(i * nt + j)), grid.radii()[i]))
            .fold((0.0f64, 0.0f64), |a, b| if b.0 > a.0 { b } else { a })
    })
    .into_iter()
    .fold((0.0f64, lo), |a, b| if b.0 > a.0 { b } else { a });
    if energy <= 0.0 {
        return Ok(BoundRatio {
            ratio: 0.0,
            radius: best.1,
            degenerate: true,
        });
    }
    Ok(BoundRatio {
        ratio: best.0 / energy,
        radius: best.1,
        degenerate: false,
    })
}

/// `sup |∇h⁺|² η² / ∫_A |∇h⁺|²` over `ρ ∈ [2δ/η, η/2]`.
pub fn pointwise_bound_ratio_plus(grid: &LogPolarGrid, dec: &AnnulusFourierDecomposition) -> Result<BoundRatio> {
    let eta = grid.eta;
    let (e, _, _) = dec.ring_energies(grid.delta_over_eta, eta);
    window_sup(grid, e, |z| dec.grad_sq_plus(z) * eta * eta)
}

/// `sup |∇h⁻|² ρ⁴ η² / (δ² ∫_A |∇h⁻|²)` over `ρ ∈ [2δ/η, η/2]`.
pub fn pointwise_bound_ratio_minus(grid: &LogPolarGrid, dec: &AnnulusFourierDecomposition) -> Result<BoundRatio> {
    let (eta, delta) = (grid.eta, grid.delta);
    let (_, e, _) = dec.ring_energies(grid.delta_over_eta, eta);
    window_sup(grid, e, |z| dec.grad_sq_minus(z) * z.norm().powi(4) * (eta / delta).powi(2))
}

/// Cutoff equal to 1 on `[0, 1]` and 0 on `[2, ∞)`.
pub fn extension_cutoff(t: f64) -> f64 {
    1.0 - smoothstep(t - 1.0)
}

/// Plane extension of an annulus field.
#[derive(Clone, Debug)]
pub struct WhitneyExtension {
    /// Log-polar grid covering `B_{4R} \ B_{r/4}` with the annulus nodes embedded.
    pub grid: LogPolarGrid,
    pub values: Vec<f64>,
    /// Mean of the field on `B_{2r} \ B_r`.
    pub mean_inner: f64,
    /// Mean of the field on `B_R \ B_{R/2}`.
    pub mean_outer: f64,
    /// `∫|∇ã|² / ∫_A|∇a|²`.
    pub c_total: f64,
    /// `∫_{B_{2R}\B_R}|∇ã|² / ∫_{B_R\B_{R/2}}|∇a|²`.
    pub c_outer: f64,
    /// `∫_{B_r\B_{r/2}}|∇ã|² / ∫_{B_{2r}\B_r}|∇a|²`.
    pub c_inner: f64,
    /// Largest deviation from the constant values outside `B_{2R} \ B_{r/2}`.
    pub support_violation: f64,
    pub annulus_energy: f64,
    pub extension_energy: f64,
}

fn energy_between(grid: &PolarGrid, field: &[f64], lo: f64, hi: f64) -> Result<f64> {
    grid.integrate_band(&grid.gradient(field)?.norm_sq(), lo, hi)
}

fn quotient(num: f64, den: f64) -> f64 {
    if num <= 1e-300 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Cutoff-to-mean near each boundary circle followed by inversion in that
/// circle. Requires `2r < R` for the annulus `B_R \ B_r`.
pub fn whitney_extend(grid: &LogPolarGrid, field: &[f64]) -> Result<WhitneyExtension> {
    check_len(grid.n_nodes(), field.len())?;
    let (r, big_r) = (grid.delta_over_eta, grid.eta);
    if !(2.0 * r < big_r) {
        return Err(invalid("radii", format!("need 2r < R, got r = {r}, R = {big_r}")));
    }
    let n_ext = ((4f64).ln() / grid.ds()).ceil() as usize;
    let ns = grid.n_rings();
    if n_ext > ns {
        return Err(invalid("n_s", "annulus too coarse for the reflection stencil"));
    }
    let nt = grid.n_theta();
    let ext = grid.extended(n_ext)?;
    let mean_inner = grid.integrate_band(field, r, 2.0 * r)? / grid.band_area(r, 2.0 * r);
    let mean_outer = grid.integrate_band(field, big_r / 2.0, big_r)? / grid.band_area(big_r / 2.0, big_r);
    let radii = grid.radii();
    let hat = |i: usize, j: usize| {
        let c = extension_cutoff(radii[i] / r);
        c * field[i * nt + j] + (1.0 - c) * mean_inner
    };
    let breve = |i: usize, j: usize| {
        let c = extension_cutoff(big_r / radii[i]);
        c * field[i * nt + j] + (1.0 - c) * mean_outer
    };
    let values = par::map_range(ext.n_nodes(), |k| {
        let (e, j) = (k / nt, k % nt);
        if e < n_ext {
            hat(n_ext - 1 - e, j)
        } else if e < n_ext + ns {
            field[(e - n_ext) * nt + j]
        } else {
            breve(2 * ns + n_ext - 1 - e, j)
        }
    });

    let mut support_violation = 0.0f64;
    for (k, v) in values.iter().enumerate() {
        let rad = ext.radius_of(k);
        if rad <= r / 2.0 {
            support_violation = support_violation.max((v - mean_inner).abs());
        } else if rad >= 2.0 * big_r {
            support_violation = support_violation.max((v - mean_outer).abs());
        }
    }
    let annulus_energy = energy_between(grid, field, 0.0, f64::INFINITY)?;
    let extension_energy = energy_between(&ext, &values, 0.0, f64::INFINITY)?;
    let c_outer = quotient(
        energy_between(&ext, &values, big_r, 2.0 * big_r)?,
        energy_between(grid, field, big_r / 2.0, big_r)?,
    );
    let c_inner = quotient(
        energy_between(&ext, &values, r / 2.0, r)?,
        energy_between(grid, field, r, 2.0 * r)?,
    );
    Ok(WhitneyExtension {
        grid: ext,
        values,
        mean_inner,
        mean_outer,
        c_total: quotient(extension_energy, annulus_energy),
        c_outer,
        c_inner,
        support_violation,
        annulus_energy,
        extension_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_annulus;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn split_simple_fields() {
        let g = build_annulus(1.0, (-4.0f64).exp(), 64, 32).unwrap();
        let d = fourier_split(&g, &g.sample(|r, t| r * t.cos())).unwrap();
        assert!((d.positive_coeffs[0] - c(1.0, 0.0)).norm() < 1e-10);
        assert!(d.log_coeff.abs() < 1e-10);
        for n in 1..d.max_mode {
            assert!(d.positive_coeffs[n].norm() < 1e-10);
            assert!(d.negative_coeffs[n].norm() < 1e-10);
        }
        let d = fourier_split(&g, &g.sample(|r, _| r.ln())).unwrap();
        assert!((d.log_coeff - 1.0).abs() < 1e-6);
        assert!(d.positive_coeffs.iter().chain(&d.negative_coeffs).all(|h| h.norm() < 1e-10));
    }

    #[test]
    fn round_trip_random_coefficients() {
        let g = build_annulus(1.0, (-4.0f64).exp(), 64, 64).unwrap();
        let (rin, rout) = (g.delta_over_eta, g.eta);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 8usize;
        // O(1) contribution of each mode at its dominant boundary
        let pos: Vec<Complex64> = (1..=n)
            .map(|k| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) / rout.powi(k as i32))
            .collect();
        let neg: Vec<Complex64> = (1..=n)
            .map(|k| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * rin.powi(k as i32))
            .collect();
        let truth = AnnulusFourierDecomposition::from_coefficients(rin, rout, 0.3, -0.7, pos.clone(), neg.clone());
        let field = truth.reconstruct(&g);
        let d = fourier_split(&g, &field).unwrap();
        for k in 0..n {
            assert!((d.positive_coeffs[k] - pos[k]).norm() <= 1e-6 * pos[k].norm());
            assert!((d.negative_coeffs[k] - neg[k]).norm() <= 1e-6 * neg[k].norm());
        }
        assert!((d.log_coeff + 0.7).abs() < 1e-9 && (d.constant - 0.3).abs() < 1e-9);
    }

    #[test]
    fn ill_conditioned_modes_are_rejected() {
        let g = build_annulus(1.0, 1.0 - 1e-13, 4, 8).unwrap();
        let f = g.sample(|r, t| r * t.cos());
        assert!(matches!(fourier_split(&g, &f), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn ring_energies_match_quadrature() {
        let g = build_annulus(1.0, 0.01, 256, 64).unwrap();
        let d = AnnulusFourierDecomposition::from_coefficients(
            g.delta_over_eta,
            g.eta,
            0.0,
            0.4,
            vec![c(1.0, 0.5), c(0.0, -0.3)],
            vec![c(0.02, 0.0), c(0.0, 0.001)],
        );
        let f = d.reconstruct(&g);
        let numeric = g.integrate(&g.gradient(&f).unwrap().norm_sq()).unwrap();
        let (p, m, l) = d.energies();
        assert!(((p + m + l) / numeric - 1.0).abs() < 1e-2);
    }

    #[test]
    fn plus_ratio_of_linear_field() {
        let g = build_annulus(1.0, (-4.0f64).exp(), 128, 32).unwrap();
        let d = AnnulusFourierDecomposition::from_coefficients(g.delta_over_eta, 1.0, 0.0, 0.0, vec![c(1.0, 0.0)], vec![]);
        let b = pointwise_bound_ratio_plus(&g, &d).unwrap();
        assert!((b.ratio - 1.0 / (PI * (1.0 - (-8.0f64).exp()))).abs() < 1e-12);
        let zero = AnnulusFourierDecomposition::from_coefficients(g.delta_over_eta, 1.0, 0.0, 0.0, vec![], vec![]);
        let z = pointwise_bound_ratio_plus(&g, &zero).unwrap();
        assert!(z.degenerate && z.ratio == 0.0);
    }

    #[test]
    fn minus_ratio_peaks_inside() {
        let g = build_annulus(1.0, (-4.0f64).exp(), 128, 32).unwrap();
        let d = AnnulusFourierDecomposition::from_coefficients(g.delta_over_eta, 1.0, 0.0, 0.0, vec![], vec![c(1.0, 0.0)]);
        let b = pointwise_bound_ratio_minus(&g, &d).unwrap();
        assert!(b.ratio.is_finite() && b.ratio > 0.0);
        assert!(b.radius < 3.0 * 2.0 * g.delta);
    }

    #[test]
    fn extension_of_constant_and_log() {
        let g = build_annulus(1.0, 0.1, 128, 32).unwrap();
        let e = whitney_extend(&g, &vec![2.5; g.n_nodes()]).unwrap();
        assert!(e.values.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert!(e.extension_energy < 1e-20);
        let g = LogPolarGrid::from_radii(0.1, 1.0, 128, 32).unwrap();
        let e = whitney_extend(&g, &g.sample(|r, _| r.ln())).unwrap();
        assert!(e.support_violation < 1e-14);
        assert!(e.extension_energy <= 10.0 * 2.0 * PI * 10f64.ln());
        assert!(whitney_extend(&LogPolarGrid::from_radii(0.6, 1.0, 64, 16).unwrap(), &vec![0.0; 64 * 16]).is_err());
    }
}

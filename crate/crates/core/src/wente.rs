//! Jacobian right-hand sides, the Dirichlet Poisson solver on the disk, the
//! weighted Wente ratio, dyadic decomposition and ring-energy decrease.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{check_len, invalid, Error, Result};
use crate::grid::{smoothstep, DiskGrid, PolarGrid};
use crate::par;

/// `∂₁a ∂₂b − ∂₂a ∂₁b` from the polar-frame gradients.
pub fn jacobian_rhs(grid: &PolarGrid, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a.len(), b.len())?;
    let ga = grid.gradient(a)?;
    let gb = grid.gradient(b)?;
    Ok((0..a.len())
        .map(|k| ga.radial[k] * gb.angular[k] - ga.angular[k] * gb.radial[k])
        .collect())
}

/// Solution of `−Δφ = rhs` with `φ = 0` on the boundary ring.
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub phi: Vec<f64>,
    /// Area-weighted `‖Δφ + rhs‖₂` over the interior rings.
    pub residual: f64,
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [Complex64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    rhs[0] /= beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / beta;
        }
        let prev = rhs[i - 1];
        rhs[i] = (rhs[i] - prev * lower[i]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= next * c[i];
    }
}

/// Mode-by-mode finite-volume solve: FFT in θ, one tridiagonal radial system
/// per wavenumber. Regularity at the origin comes from the zero flux through
/// the degenerate innermost face.
pub fn solve_dirichlet(grid: &DiskGrid, rhs: &[f64]) -> Result<PoissonSolution> {
    let g: &PolarGrid = grid;
    check_len(g.n_nodes(), rhs.len())?;
    let n = g.n_theta();
    let nr = g.n_rings();
    let m = nr - 1;
    let r = g.radii();
    let f = g.faces();
    let fft = g.angular_fft();

    let coeffs: Vec<Vec<Complex64>> =
        par::map_range(nr, |i| fft.forward(&rhs[i * n..(i + 1) * n]));
    // flux coefficients between rings i and i+1
    let flux: Vec<f64> = (0..m).map(|i| f[i + 1] / (r[i + 1] - r[i])).collect();
    let vol: Vec<f64> = (0..m).map(|i| 0.5 * (f[i + 1] * f[i + 1] - f[i] * f[i])).collect();

    let modes: Vec<Vec<Complex64>> = par::map_range(n, |k| {
        let kappa = fft.wavenumber(k) as f64;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut b = vec![Complex64::new(0.0, 0.0); m];
        for i in 0..m {
            let left = if i > 0 { flux[i - 1] } else { 0.0 };
            diag[i] = left + flux[i] + kappa * kappa * vol[i] / (r[i] * r[i]);
            if i > 0 {
                lower[i] = -left;
            }
            if i + 1 < m {
                upper[i] = -flux[i];
            }
            b[i] = coeffs[i][k] * vol[i];
        }
        thomas(&lower, &diag, &upper, &mut b);
        b
    });

    let mut phi = vec![0.0; g.n_nodes()];
    let rings: Vec<Vec<f64>> = par::map_range(m, |i| {
        let c: Vec<Complex64> = (0..n).map(|k| modes[k][i]).collect();
        fft.inverse(c)
    });
    for (i, ring) in rings.into_iter().enumerate() {
        phi[i * n..(i + 1) * n].copy_from_slice(&ring);
    }
    let lap = g.laplacian_apply(&phi)?;
    let mut res = 0.0;
    for i in 0..m {
        for j in 0..n {
            res += (lap[i * n + j] + rhs[i * n + j]).powi(2) * g.ring_area(i);
        }
    }
    Ok(PoissonSolution {
        phi,
        residual: res.sqrt(),
    })
}

/// Jacobian problem `−Δφ = {a, b}` on the disk with zero boundary values.
#[derive(Clone, Debug)]
pub struct WenteProblem {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub rhs: Vec<f64>,
    pub phi: Vec<f64>,
    pub residual: f64,
}

impl WenteProblem {
    pub fn solve(grid: &DiskGrid, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let rhs = jacobian_rhs(grid, &a, &b)?;
        let sol = solve_dirichlet(grid, &rhs)?;
        Ok(Self {
            a,
            b,
            rhs,
            phi: sol.phi,
            residual: sol.residual,
        })
    }
}

/// `f(r) = r² log²(1 + 1/r) log(1 + log(1/r))`, with `f(0) = 0` and clamped
/// at zero where the inner logarithm turns negative.
pub fn wente_weight(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let inner = 1.0 + (1.0 / r).ln();
    if inner <= 1.0 {
        return 0.0;
    }
    let l = (1.0 + 1.0 / r).ln();
    r * r * l * l * inner.ln()
}

/// Terms of the weighted Wente quotient.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WenteRatio {
    /// `∫ |x|² |∇φ|²`.
    pub numerator: f64,
    /// `∫ f(|x|) |∇b|²`.
    pub weighted_b: f64,
    /// `∫ |∇a|²`.
    pub energy_a: f64,
    pub ratio: f64,
}

fn energy_density(grid: &PolarGrid, field: &[f64]) -> Result<Vec<f64>> {
    Ok(grid.gradient(field)?.norm_sq())
}

/// `∫|x|²|∇φ|² / (∫f(|x|)|∇b|² · ∫|∇a|²)` for the solution of the Jacobian problem.
pub fn weighted_wente_ratio(grid: &DiskGrid, a: &[f64], b: &[f64]) -> Result<WenteRatio> {
    let g: &PolarGrid = grid;
    let ea = g.integrate(&energy_density(g, a)?)?;
    let db = energy_density(g, b)?;
    let wb: Vec<f64> = (0..g.n_nodes()).map(|k| wente_weight(g.radius_of(k)) * db[k]).collect();
    let wb = g.integrate(&wb)?;
    if ea <= 0.0 || wb <= 0.0 {
        return Err(Error::Degenerate("a or b has no gradient".into()));
    }
    let rhs = jacobian_rhs(g, a, b)?;
    let scale = (ea * g.integrate(&db)?).sqrt();
    if g.integrate(&rhs.iter().map(|v| v.abs()).collect::<Vec<_>>())? <= 1e-12 * scale {
        return Err(Error::Degenerate("Jacobian of (a, b) vanishes".into()));
    }
    let phi = solve_dirichlet(grid, &rhs)?.phi;
    let dphi = energy_density(g, &phi)?;
    let num: Vec<f64> = (0..g.n_nodes()).map(|k| g.radius_of(k).powi(2) * dphi[k]).collect();
    let numerator = g.integrate(&num)?;
    Ok(WenteRatio {
        numerator,
        weighted_b: wb,
        energy_a: ea,
        ratio: numerator / (wb * ea),
    })
}

/// Cutoff equal to 1 on `[0, ½]` and 0 on `[1, ∞)`.
pub fn dyadic_cutoff(t: f64) -> f64 {
    1.0 - smoothstep(2.0 * t - 1.0)
}

/// Deepest dyadic level a grid can resolve.
pub fn max_depth(grid: &PolarGrid) -> usize {
    ((grid.n_rings() as f64).log2().floor() as usize).saturating_sub(2)
}

/// `∫_{A_k} density` for `A_k = B_{2^{-k}} \ B_{2^{-k-1}}`, `k = 0..levels`.
pub fn dyadic_ring_integrals(grid: &PolarGrid, density: &[f64], levels: usize) -> Result<Vec<f64>> {
    (0..levels)
        .map(|k| {
            let hi = 0.5f64.powi(k as i32);
            let hi = if k == 0 { f64::INFINITY } else { hi };
            grid.integrate_band(density, 0.5f64.powi(k as i32 + 1), hi)
        })
        .collect()
}

/// Pieces `b_k` with `Σ b_k = b` and `∇b_k` supported in `A_k ∪ A_{k+1}`.
#[derive(Clone, Debug)]
pub struct DyadicPieces {
    pub pieces: Vec<Vec<f64>>,
    /// Largest deviation of `b_k` from a constant outside `B_{2^{-k}} \ B_{2^{-k-2}}`.
    pub support_violation: f64,
    /// Relative L² error of `Σ ∇b_k − ∇b`.
    pub reconstruction_error: f64,
    /// `∫|∇b_k|² / ∫_{A_k ∪ A_{k+1}}|∇b|²` per piece (0 when both vanish).
    pub energy_ratios: Vec<f64>,
}

impl DyadicPieces {
    pub fn max_energy_ratio(&self) -> f64 {
        self.energy_ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Iterated cutoff-to-mean decomposition `b^k = T_{2^{-k}}(b^{k−1})`,
/// `b_k = b^k − b^{k+1}`; the last piece is the remainder `b^K`.
pub fn dyadic_decompose(grid: &DiskGrid, b: &[f64], depth: usize) -> Result<DyadicPieces> {
    let g: &PolarGrid = grid;
    check_len(g.n_nodes(), b.len())?;
    if depth == 0 || depth > max_depth(g) {
        return Err(invalid("depth", format!("{depth} (grid resolves at most {})", max_depth(g))));
    }
    let mut levels = vec![b.to_vec()];
    for k in 1..=depth {
        let rho = 0.5f64.powi(k as i32);
        let prev = &levels[k - 1];
        let area = g.band_area(rho / 2.0, rho);
        let mean = g.integrate_band(prev, rho / 2.0, rho)? / area;
        let next: Vec<f64> = (0..g.n_nodes())
            .map(|n| dyadic_cutoff(g.radius_of(n) / rho) * (prev[n] - mean))
            .collect();
        levels.push(next);
    }
    let mut pieces = Vec::with_capacity(depth + 1);
    for k in 0..depth {
        pieces.push(levels[k].iter().zip(&levels[k + 1]).map(|(x, y)| x - y).collect::<Vec<f64>>());
    }
    pieces.push(levels[depth].clone());

    let mut support_violation = 0.0f64;
    for (k, p) in pieces.iter().enumerate() {
        let outer = 0.5f64.powi(k as i32);
        let inner = 0.5f64.powi(k as i32 + 2);
        let mut inner_value = None;
        for n in 0..g.n_nodes() {
            let r = g.radius_of(n);
            if k > 0 && r >= outer {
                support_violation = support_violation.max(p[n].abs());
            }
            if k < depth && r <= inner {
                let c = *inner_value.get_or_insert(p[n]);
                support_violation = support_violation.max((p[n] - c).abs());
            }
        }
    }

    let grad_b = g.gradient(b)?;
    let mut sum_r = vec![0.0; g.n_nodes()];
    let mut sum_t = vec![0.0; g.n_nodes()];
    let mut energy_ratios = Vec::with_capacity(pieces.len());
    let db = grad_b.norm_sq();
    for (k, p) in pieces.iter().enumerate() {
        let gp = g.gradient(p)?;
        for n in 0..g.n_nodes() {
            sum_r[n] += gp.radial[n];
            sum_t[n] += gp.angular[n];
        }
        let ep = g.integrate(&gp.norm_sq())?;
        let lo = 0.5f64.powi(k as i32 + 2);
        let hi = if k == 0 { f64::INFINITY } else { 0.5f64.powi(k as i32) };
        let lo = if k == depth { 0.0 } else { lo };
        let eb = g.integrate_band(&db, lo, hi)?;
        energy_ratios.push(if ep <= 1e-300 { 0.0 } else { ep / eb.max(1e-300) });
    }
    let diff: Vec<f64> = (0..g.n_nodes())
        .map(|n| (sum_r[n] - grad_b.radial[n]).powi(2) + (sum_t[n] - grad_b.angular[n]).powi(2))
        .collect();
    let total = g.integrate(&db)?;
    let err = g.integrate(&diff)?;
    Ok(DyadicPieces {
        pieces,
        support_violation,
        reconstruction_error: if total > 0.0 { (err / total).sqrt() } else { err.sqrt() },
        energy_ratios,
    })
}

/// Ring-energy decrease data for a solved Jacobian problem.
#[derive(Clone, Debug, Serialize)]
pub struct MorreyReport {
    pub alpha: f64,
    pub gamma: f64,
    /// `∫_{A_k}|∇φ|²`.
    pub ring_energies: Vec<f64>,
    /// `∫_{A_n}|∇b|²`.
    pub b_ring_energies: Vec<f64>,
    pub energy_a: f64,
    pub weighted_b: f64,
    /// Smallest `C_α` making the iterated decrease inequality hold at every level.
    pub c_alpha: f64,
    /// Smallest `C` in `E(A_1) ≤ ⅔E(A_0) + C ∫|∇a|² ∫f|∇b|²`.
    pub c_one_step: f64,
}

/// Measures the constants of the one-step and iterated ring-energy decrease.
pub fn morrey_decrease_check(grid: &DiskGrid, problem: &WenteProblem, alpha: f64) -> Result<MorreyReport> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(invalid("alpha", format!("{alpha} not in (0, 2)")));
    }
    let g: &PolarGrid = grid;
    let gamma = 2f64.powf(-alpha).max(2.0 / 3.0);
    let levels = max_depth(g) + 1;
    let ephi = dyadic_ring_integrals(g, &energy_density(g, &problem.phi)?, levels)?;
    let db = energy_density(g, &problem.b)?;
    let eb = dyadic_ring_integrals(g, &db, levels)?;
    let energy_a = g.integrate(&energy_density(g, &problem.a)?)?;
    let wb: Vec<f64> = (0..g.n_nodes()).map(|k| wente_weight(g.radius_of(k)) * db[k]).collect();
    let weighted_b = g.integrate(&wb)?;
    let quotient = |excess: f64, denom: f64| {
        if excess <= 0.0 {
            0.0
        } else if denom <= 0.0 {
            f64::INFINITY
        } else {
            excess / denom
        }
    };
    let mut c_alpha = 0.0f64;
    for k in 0..levels - 1 {
        let excess = ephi[k + 1] - gamma.powi(k as i32 + 1) * ephi[0];
        let tail: f64 = eb
            .iter()
            .enumerate()
            .map(|(n, e)| gamma.powi((n as i64 - k as i64).unsigned_abs() as i32) * e)
            .sum();
        c_alpha = c_alpha.max(quotient(excess, energy_a * tail));
    }
    let c_one_step = quotient(ephi[1] - 2.0 / 3.0 * ephi[0], energy_a * weighted_b);
    Ok(MorreyReport {
        alpha,
        gamma,
        ring_energies: ephi,
        b_ring_energies: eb,
        energy_a,
        weighted_b,
        c_alpha,
        c_one_step,
    })
}

/// `∫_{B_{1/2}}|∇σ|² / ∫_{B_1 \ B_{1/2}}|∇σ|²`, at most ⅓ for harmonic `σ`.
pub fn harmonic_decrease_ratio(grid: &DiskGrid, sigma: &[f64]) -> Result<f64> {
    let g: &PolarGrid = grid;
    let d = energy_density(g, sigma)?;
    let inner = g.integrate_band(&d, 0.0, 0.5)?;
    let outer = g.integrate_band(&d, 0.5, f64::INFINITY)?;
    Ok(if outer > 0.0 { inner / outer } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    #[test]
    fn jacobian_examples() {
        let d = DiskGrid::new(1.0, 64, 32).unwrap();
        let x1 = d.sample(|r, t| r * t.cos());
        let x2 = d.sample(|r, t| r * t.sin());
        for v in jacobian_rhs(&d, &x1, &x2).unwrap() {
            assert!((v - 1.0).abs() < 1e-10);
        }
        for v in jacobian_rhs(&d, &x1, &x1).unwrap() {
            assert!(v.abs() < 1e-12);
        }
        let sq = d.sample(|r, t| (r * t.cos()).powi(2));
        let j = jacobian_rhs(&d, &sq, &x2).unwrap();
        for (k, v) in j.iter().enumerate() {
            assert!((v - 2.0 * x1[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_rhs_is_exact() {
        let d = DiskGrid::new(1.0, 256, 16).unwrap();
        let sol = solve_dirichlet(&d, &vec![1.0; d.n_nodes()]).unwrap();
        for (k, v) in sol.phi.iter().enumerate() {
            let r = d.radius_of(k);
            assert!((v - (1.0 - r * r) / 4.0).abs() < 1e-10);
        }
        let zero = solve_dirichlet(&d, &vec![0.0; d.n_nodes()]).unwrap();
        assert!(zero.phi.iter().all(|v| *v == 0.0));
    }

    /// Full 2D matrix with the spectral angular operator, solved by LU.
    fn dense_poisson(d: &DiskGrid, rhs: &[f64]) -> Vec<f64> {
        let n = d.n_theta();
        let nr = d.n_rings();
        let m = nr - 1;
        let r = d.radii();
        let f = d.faces();
        let mut d2 = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    let kk = if 2 * k <= n { k as f64 } else { k as f64 - n as f64 };
                    s -= kk * kk * (kk * 2.0 * PI * (j as f64 - l as f64) / n as f64).cos();
                }
                d2[(j, l)] = s / n as f64;
            }
        }
        let size = m * n;
        let mut a = DMatrix::<f64>::zeros(size, size);
        let mut b = DVector::<f64>::zeros(size);
        for i in 0..m {
            let vol = 0.5 * (f[i + 1] * f[i + 1] - f[i] * f[i]);
            for j in 0..n {
                let row = i * n + j;
                b[row] = rhs[row];
                let out = f[i + 1] / (r[i + 1] - r[i]) / vol;
                a[(row, row)] += out;
                if i + 1 < m {
                    a[(row, row + n)] -= out;
                }
                if i > 0 {
                    let inn = f[i] / (r[i] - r[i - 1]) / vol;
                    a[(row, row)] += inn;
                    a[(row, row - n)] -= inn;
                }
                for l in 0..n {
                    a[(row, i * n + l)] -= d2[(j, l)] / (r[i] * r[i]);
                }
            }
        }
        let x = a.lu().solve(&b).unwrap();
        let mut phi = vec![0.0; d.n_nodes()];
        phi[..size].copy_from_slice(x.as_slice());
        phi
    }

    #[test]
    fn matches_dense_solve() {
        let d = DiskGrid::new(1.0, 32, 32).unwrap();
        let a = d.sample(|r, t| (3.0 * t).cos() * r.powi(3));
        let b = d.sample(|r, t| (3.0 * t).sin() * r.powi(3));
        let rhs = jacobian_rhs(&d, &a, &b).unwrap();
        let fast = solve_dirichlet(&d, &rhs).unwrap().phi;
        let slow = dense_poisson(&d, &rhs);
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..d.n_nodes() {
            assert!((fast[k] - slow[k]).abs() < 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn dirichlet_inverse_is_self_adjoint() {
        let d = DiskGrid::new(1.0, 48, 32).unwrap();
        let f = d.sample(|r, t| (1.0 + r * (2.0 * t).cos()) * (3.0 * r).sin());
        let h = d.sample(|r, t| r * r * (t + 0.3).sin() + (1.0 - r));
        let pf = solve_dirichlet(&d, &f).unwrap().phi;
        let ph = solve_dirichlet(&d, &h).unwrap().phi;
        let lhs = d.integrate(&pf.iter().zip(&h).map(|(x, y)| x * y).collect::<Vec<_>>()).unwrap();
        let rhs = d.integrate(&f.iter().zip(&ph).map(|(x, y)| x * y).collect::<Vec<_>>()).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs());
    }

    #[test]
    fn weighted_ratio_for_coordinates() {
        let d = DiskGrid::new(1.0, 128, 16).unwrap();
        let x1 = d.sample(|r, t| r * t.cos());
        let x2 = d.sample(|r, t| r * t.sin());
        let w = weighted_wente_ratio(&d, &x1, &x2).unwrap();
        // φ = (1 − r²)/4: ∫ r² |∇φ|² = 2π ∫ r⁵/4 dr = π/12
        assert!((w.numerator - PI / 12.0).abs() < 1e-3);
        assert!((w.energy_a - PI).abs() < 1e-9);
        assert!(weighted_wente_ratio(&d, &x1, &x1).is_err());
    }

    #[test]
    fn dyadic_log_pieces() {
        let d = DiskGrid::new(1.0, 512, 8).unwrap();
        let b = d.sample(|r, _| r.ln());
        let p = dyadic_decompose(&d, &b, 5).unwrap();
        assert!(p.reconstruction_error < 1e-10);
        assert!(p.support_violation < 1e-12);
        assert!(p.max_energy_ratio() < 4.0);
        let c = dyadic_decompose(&d, &vec![2.0; d.n_nodes()], 5).unwrap();
        assert!(c.pieces.iter().all(|q| d.gradient(q).unwrap().norm_sq().iter().all(|v| *v < 1e-24)));
        assert!(dyadic_decompose(&d, &b, 20).is_err());
    }

    #[test]
    fn harmonic_decrease() {
        let d = DiskGrid::new(1.0, 256, 32).unwrap();
        for n in 1..5 {
            let s = d.sample(|r, t| r.powi(n) * (n as f64 * t).cos());
            let q = harmonic_decrease_ratio(&d, &s).unwrap();
            let exact = 0.25f64.powi(n) / (1.0 - 0.25f64.powi(n));
            assert!((q - exact).abs() < 2e-3, "{n}: {q} vs {exact}");
        }
    }

    #[test]
    fn morrey_constant_rhs() {
        let d = DiskGrid::new(1.0, 256, 16).unwrap();
        let a = d.sample(|r, t| r * t.cos());
        let b = d.sample(|r, t| r * t.sin());
        let p = WenteProblem::solve(&d, a, b).unwrap();
        let rep = morrey_decrease_check(&d, &p, 1.0).unwrap();
        // ∫_{A_k} r²/4 = (π/8) 2^{-4k}(1 − 1/16)
        for (k, e) in rep.ring_energies.iter().enumerate() {
            let exact = PI / 8.0 * 16f64.powi(-(k as i32)) * (15.0 / 16.0);
            assert!((e / exact - 1.0).abs() < 2e-2, "{k}");
        }
        assert!(rep.c_alpha < 10.0);
    }
}

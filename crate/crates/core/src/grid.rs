//! Polar discretizations of annuli, disks and the round sphere.
//!
//! Planar grids store nodes ring by ring: node `i * n_theta + j` sits at
//! radius `r_i` and angle `2πj / n_theta`. Angular derivatives are spectral,
//! radial derivatives are second-order finite differences.
//!
//! [`RingChain`] is the finite-volume view of the same layouts used to
//! assemble quadratic forms: a sequence of rings joined by two-point fluxes,
//! with optional Dirichlet closures at both ends.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, invalid, Result};
use crate::par;

/// C¹ smoothstep: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Cached forward/inverse FFT of one ring.
#[derive(Clone)]
pub struct AngularFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl AngularFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Coefficients `c_k` with `f_j = Σ_k c_k e^{ikθ_j}`.
    pub fn forward(&self, ring: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = ring.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Real part of `Σ_k c_k e^{ikθ_j}`.
    pub fn inverse(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut coeffs);
        coeffs.iter().map(|c| c.re).collect()
    }

    /// Signed wavenumber of FFT slot `k`; the Nyquist slot reports `n/2`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if 2 * k <= n {
            k
        } else {
            k - n
        }
    }

    fn is_nyquist(&self, k: usize) -> bool {
        self.n % 2 == 0 && 2 * k == self.n
    }
}

impl fmt::Debug for AngularFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AngularFft({})", self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Radial {
    /// Uniform in `s = log r`; derivatives taken in `s`.
    Log { ds: f64 },
    /// Arbitrary increasing radii; three-point Lagrange derivatives in `r`.
    Lagrange,
}

/// Gradient in the orthonormal polar frame: `(∂_r f, r⁻¹ ∂_θ f)`.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub radial: Vec<f64>,
    pub angular: Vec<f64>,
}

impl Gradient {
    pub fn norm_sq(&self) -> Vec<f64> {
        self.radial
            .iter()
            .zip(&self.angular)
            .map(|(a, b)| a * a + b * b)
            .collect()
    }

    pub fn dot(&self, other: &Gradient) -> Vec<f64> {
        (0..self.radial.len())
            .map(|k| self.radial[k] * other.radial[k] + self.angular[k] * other.angular[k])
            .collect()
    }
}

/// Ring-structured grid on an annulus or a disk.
#[derive(Clone)]
pub struct PolarGrid {
    radii: Vec<f64>,
    faces: Vec<f64>,
    ring_area: Vec<f64>,
    n_theta: usize,
    radial: Radial,
    origin: bool,
    fft: AngularFft,
}

impl fmt::Debug for PolarGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolarGrid")
            .field("n_rings", &self.radii.len())
            .field("n_theta", &self.n_theta)
            .field("inner", &self.faces[0])
            .field("outer", &self.faces[self.faces.len() - 1])
            .field("radial", &self.radial)
            .finish()
    }
}

fn check_theta(n_theta: usize) -> Result<()> {
    if n_theta == 1 || n_theta >= 4 {
        Ok(())
    } else {
        Err(invalid("n_theta", format!("{n_theta} (need 1 or >= 4)")))
    }
}

impl PolarGrid {
    fn log_uniform(s_min: f64, s_max: f64, n_s: usize, n_theta: usize) -> Result<Self> {
        if n_s < 4 {
            return Err(invalid("n_s", format!("{n_s} (need >= 4)")));
        }
        check_theta(n_theta)?;
        if !(s_max > s_min) || !s_min.is_finite() || !s_max.is_finite() {
            return Err(invalid("radii", "inner radius must be below outer radius"));
        }
        let ds = (s_max - s_min) / n_s as f64;
        let dtheta = 2.0 * PI / n_theta as f64;
        let s: Vec<f64> = (0..n_s).map(|i| s_min + (i as f64 + 0.5) * ds).collect();
        let radii = s.iter().map(|v| v.exp()).collect();
        let faces = (0..=n_s).map(|i| (s_min + i as f64 * ds).exp()).collect();
        let ring_area = s.iter().map(|v| (2.0 * v).exp() * ds * dtheta).collect();
        Ok(Self {
            radii,
            faces,
            ring_area,
            n_theta,
            radial: Radial::Log { ds },
            origin: false,
            fft: AngularFft::new(n_theta),
        })
    }

    /// Grid whose first ring touches the origin. `faces` has one more entry
    /// than `radii`, starts at 0 and brackets every radius. Cell areas are the
    /// exact areas between consecutive faces.
    pub fn with_origin(faces: Vec<f64>, radii: Vec<f64>, n_theta: usize) -> Result<Self> {
        check_theta(n_theta)?;
        if n_theta > 1 && n_theta % 2 == 1 {
            return Err(invalid("n_theta", "grids through the origin need an even n_theta"));
        }
        if radii.len() < 3 || faces.len() != radii.len() + 1 || faces[0] != 0.0 {
            return Err(invalid("faces", "need >= 3 rings and faces starting at 0"));
        }
        for (i, &r) in radii.iter().enumerate() {
            if !(faces[i] < r && r <= faces[i + 1]) {
                return Err(invalid("radii", format!("ring {i} not bracketed by its faces")));
            }
        }
        let dtheta = 2.0 * PI / n_theta as f64;
        let ring_area = (0..radii.len())
            .map(|i| 0.5 * (faces[i + 1].powi(2) - faces[i].powi(2)) * dtheta)
            .collect();
        Ok(Self {
            radii,
            faces,
            ring_area,
            n_theta,
            radial: Radial::Lagrange,
            origin: true,
            fft: AngularFft::new(n_theta),
        })
    }

    pub fn n_rings(&self) -> usize {
        self.radii.len()
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_nodes(&self) -> usize {
        self.radii.len() * self.n_theta
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn inner_radius(&self) -> f64 {
        self.faces[0]
    }

    pub fn outer_radius(&self) -> f64 {
        self.faces[self.faces.len() - 1]
    }

    pub fn touches_origin(&self) -> bool {
        self.origin
    }

    pub fn ring_area(&self, ring: usize) -> f64 {
        self.ring_area[ring]
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta()
    }

    pub fn ring_of(&self, node: usize) -> usize {
        node / self.n_theta
    }

    pub fn radius_of(&self, node: usize) -> f64 {
        self.radii[node / self.n_theta]
    }

    pub fn theta_of(&self, node: usize) -> f64 {
        self.theta(node % self.n_theta)
    }

    /// Complex coordinate of a node.
    pub fn point(&self, node: usize) -> Complex64 {
        Complex64::from_polar(self.radius_of(node), self.theta_of(node))
    }

    pub fn angular_fft(&self) -> &AngularFft {
        &self.fft
    }

    /// Per-node quadrature weights.
    pub fn cell_areas(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.ring_area[k / self.n_theta]).collect()
    }

    /// Samples `f(r, θ)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Vec<f64> {
        par::map_range(self.n_nodes(), |k| f(self.radius_of(k), self.theta_of(k)))
    }

    /// Quadrature `Σ field · cell_area`.
    pub fn integrate(&self, field: &[f64]) -> Result<f64> {
        check_len(self.n_nodes(), field.len())?;
        Ok(field
            .chunks(self.n_theta)
            .zip(&self.ring_area)
            .map(|(ring, a)| ring.iter().sum::<f64>() * a)
            .sum())
    }

    /// Quadrature restricted to rings whose radius lies in `[lo, hi)`.
    pub fn integrate_band(&self, field: &[f64], lo: f64, hi: f64) -> Result<f64> {
        check_len(self.n_nodes(), field.len())?;
        Ok(field
            .chunks(self.n_theta)
            .enumerate()
            .filter(|(i, _)| self.radii[*i] >= lo && self.radii[*i] < hi)
            .map(|(i, ring)| ring.iter().sum::<f64>() * self.ring_area[i])
            .sum())
    }

    /// Total area of the rings whose radius lies in `[lo, hi)`.
    pub fn band_area(&self, lo: f64, hi: f64) -> f64 {
        (0..self.n_rings())
            .filter(|&i| self.radii[i] >= lo && self.radii[i] < hi)
            .map(|i| self.ring_area[i] * self.n_theta as f64)
            .sum()
    }

    fn per_ring(&self, field: &[f64], op: impl Fn(&[f64]) -> Vec<f64> + Sync + Send) -> Vec<f64> {
        let n = self.n_theta;
        par::map_range(self.n_rings(), |i| op(&field[i * n..(i + 1) * n]))
            .into_iter()
            .flatten()
            .collect()
    }

    /// Spectral `∂_θ f`.
    pub fn d_theta(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_nodes(), field.len())?;
        if self.n_theta == 1 {
            return Ok(vec![0.0; field.len()]);
        }
        Ok(self.per_ring(field, |ring| {
            if ring.iter().all(|v| *v == ring[0]) {
                return vec![0.0; ring.len()];
            }
            let mut c = self.fft.forward(ring);
            for (k, ck) in c.iter_mut().enumerate() {
                if self.fft.is_nyquist(k) {
                    *ck = Complex64::new(0.0, 0.0);
                } else {
                    *ck *= Complex64::new(0.0, self.fft.wavenumber(k) as f64);
                }
            }
            self.fft.inverse(c)
        }))
    }

    /// Spectral `∂_θθ f`.
    pub fn d_theta2(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_nodes(), field.len())?;
        if self.n_theta == 1 {
            return Ok(vec![0.0; field.len()]);
        }
        Ok(self.per_ring(field, |ring| {
            if ring.iter().all(|v| *v == ring[0]) {
                return vec![0.0; ring.len()];
            }
            let mut c = self.fft.forward(ring);
            for (k, ck) in c.iter_mut().enumerate() {
                let w = self.fft.wavenumber(k) as f64;
                *ck *= -w * w;
            }
            self.fft.inverse(c)
        }))
    }

    /// Index of the node diametrically opposite to angle slot `j` on the same ring.
    fn opposite(&self, j: usize) -> usize {
        (j + self.n_theta / 2) % self.n_theta
    }

    /// `∂_r f` by second-order differences.
    pub fn d_radial(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_nodes(), field.len())?;
        let n = self.n_theta;
        let nr = self.n_rings();
        let at = |i: usize, j: usize| field[i * n + j];
        let mut out = vec![0.0; field.len()];
        match self.radial {
            Radial::Log { ds } => {
                for i in 0..nr {
                    let inv_r = 1.0 / self.radii[i];
                    for j in 0..n {
                        let d = if i == 0 {
                            -3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)
                        } else if i == nr - 1 {
                            3.0 * at(i, j) - 4.0 * at(i - 1, j) + at(i - 2, j)
                        } else {
                            at(i + 1, j) - at(i - 1, j)
                        };
                        out[i * n + j] = d / (2.0 * ds) * inv_r;
                    }
                }
            }
            Radial::Lagrange => {
                let r = &self.radii;
                for i in 0..nr {
                    for j in 0..n {
                        let (xs, fs, x) = if i == 0 && self.origin {
                            let jo = self.opposite(j);
                            ([-r[0], r[0], r[1]], [at(0, jo), at(0, j), at(1, j)], r[0])
                        } else if i == 0 {
                            ([r[0], r[1], r[2]], [at(0, j), at(1, j), at(2, j)], r[0])
                        } else if i == nr - 1 {
                            (
                                [r[i - 2], r[i - 1], r[i]],
                                [at(i - 2, j), at(i - 1, j), at(i, j)],
                                r[i],
                            )
                        } else {
                            (
                                [r[i - 1], r[i], r[i + 1]],
                                [at(i - 1, j), at(i, j), at(i + 1, j)],
                                r[i],
                            )
                        };
                        let w = lagrange_d1(xs, x);
                        out[i * n + j] = w[0] * fs[0] + w[1] * fs[1] + w[2] * fs[2];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradient in the polar orthonormal frame.
    pub fn gradient(&self, field: &[f64]) -> Result<Gradient> {
        let radial = self.d_radial(field)?;
        let mut angular = self.d_theta(field)?;
        for (k, v) in angular.iter_mut().enumerate() {
            *v /= self.radius_of(k);
        }
        Ok(Gradient { radial, angular })
    }

    /// Flat Laplacian. On log-uniform grids this is `e^{-2s}(∂_ss + ∂_θθ)`;
    /// otherwise the conservative form `r⁻¹∂_r(r ∂_r) + r⁻²∂_θθ`. Values on the
    /// outermost ring of an origin grid use a one-sided stencil.
    pub fn laplacian_apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        let ang = self.d_theta2(field)?;
        let n = self.n_theta;
        let nr = self.n_rings();
        let at = |i: usize, j: usize| field[i * n + j];
        let mut out = vec![0.0; field.len()];
        match self.radial {
            Radial::Log { ds } => {
                for i in 0..nr {
                    let w = (-2.0 * (self.radii[i]).ln()).exp();
                    for j in 0..n {
                        let fss = if i == 0 {
                            2.0 * at(0, j) - 5.0 * at(1, j) + 4.0 * at(2, j) - at(3, j)
                        } else if i == nr - 1 {
                            2.0 * at(i, j) - 5.0 * at(i - 1, j) + 4.0 * at(i - 2, j) - at(i - 3, j)
                        } else {
                            at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)
                        } / (ds * ds);
                        out[i * n + j] = w * (fss + ang[i * n + j]);
                    }
                }
            }
            Radial::Lagrange => {
                let r = &self.radii;
                let f = &self.faces;
                for i in 0..nr {
                    let inv_r2 = 1.0 / (r[i] * r[i]);
                    for j in 0..n {
                        let radial = if i == nr - 1 || (i == 0 && !self.origin) {
                            let (xs, fs) = if i == 0 {
                                ([r[0], r[1], r[2]], [at(0, j), at(1, j), at(2, j)])
                            } else {
                                (
                                    [r[i - 2], r[i - 1], r[i]],
                                    [at(i - 2, j), at(i - 1, j), at(i, j)],
                                )
                            };
                            let d1 = lagrange_d1(xs, r[i]);
                            let d2 = lagrange_d2(xs);
                            let g1: f64 = (0..3).map(|k| d1[k] * fs[k]).sum();
                            let g2: f64 = (0..3).map(|k| d2[k] * fs[k]).sum();
                            g2 + g1 / r[i]
                        } else {
                            let vol = 0.5 * (f[i + 1] * f[i + 1] - f[i] * f[i]);
                            let out_flux = f[i + 1] * (at(i + 1, j) - at(i, j)) / (r[i + 1] - r[i]);
                            let in_flux = if i == 0 {
                                0.0
                            } else {
                                f[i] * (at(i, j) - at(i - 1, j)) / (r[i] - r[i - 1])
                            };
                            (out_flux - in_flux) / vol
                        };
                        out[i * n + j] = radial + inv_r2 * ang[i * n + j];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Weights of the derivative at `x` of the quadratic through `xs`.
fn lagrange_d1(xs: [f64; 3], x: f64) -> [f64; 3] {
    let [x0, x1, x2] = xs;
    [
        ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2)),
        ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2)),
        ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1)),
    ]
}

/// Weights of the (constant) second derivative of the quadratic through `xs`.
fn lagrange_d2(xs: [f64; 3]) -> [f64; 3] {
    let [x0, x1, x2] = xs;
    [
        2.0 / ((x0 - x1) * (x0 - x2)),
        2.0 / ((x1 - x0) * (x1 - x2)),
        2.0 / ((x2 - x0) * (x2 - x1)),
    ]
}

/// Annulus `A(η, δ) = B_η \ B_{δ/η}`, uniform in `s = log r` and `θ`.
#[derive(Clone, Debug)]
pub struct LogPolarGrid {
    pub eta: f64,
    pub delta: f64,
    pub delta_over_eta: f64,
    grid: PolarGrid,
}

/// Builds the log-polar grid of `A(η, δ)`; requires `0 < δ < η²`.
pub fn build_annulus(eta: f64, delta: f64, n_s: usize, n_theta: usize) -> Result<LogPolarGrid> {
    if !(eta > 0.0) || !(delta > 0.0) {
        return Err(invalid("eta/delta", "radii must be positive"));
    }
    if delta >= eta * eta {
        return Err(invalid("delta", format!("{delta} must be below eta^2 = {}", eta * eta)));
    }
    LogPolarGrid::from_radii(delta / eta, eta, n_s, n_theta)
}

impl LogPolarGrid {
    /// Log-polar grid of `B_outer \ B_inner` for any `0 < inner < outer`.
    pub fn from_radii(inner: f64, outer: f64, n_s: usize, n_theta: usize) -> Result<Self> {
        if !(inner > 0.0) || !(outer > inner) {
            return Err(invalid("radii", format!("need 0 < inner < outer, got {inner}, {outer}")));
        }
        let grid = PolarGrid::log_uniform(inner.ln(), outer.ln(), n_s, n_theta)?;
        Ok(Self {
            eta: outer,
            delta: inner * outer,
            delta_over_eta: inner,
            grid,
        })
    }

    /// Grid with the same spacing extended by `extra` rings on each side.
    pub fn extended(&self, extra: usize) -> Result<Self> {
        let ds = self.ds();
        let s0 = self.s_min() - extra as f64 * ds;
        let s1 = self.s_max() + extra as f64 * ds;
        Self::from_radii(s0.exp(), s1.exp(), self.n_rings() + 2 * extra, self.n_theta())
    }

    pub fn polar(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn ds(&self) -> f64 {
        match self.grid.radial {
            Radial::Log { ds } => ds,
            Radial::Lagrange => unreachable!(),
        }
    }

    pub fn s_min(&self) -> f64 {
        self.delta_over_eta.ln()
    }

    pub fn s_max(&self) -> f64 {
        self.eta.ln()
    }

    pub fn s(&self, ring: usize) -> f64 {
        self.s_min() + (ring as f64 + 0.5) * self.ds()
    }

    /// `log(η²/δ)`, the conformal length of the annulus.
    pub fn modulus(&self) -> f64 {
        self.s_max() - self.s_min()
    }
}

impl Deref for LogPolarGrid {
    type Target = PolarGrid;
    fn deref(&self) -> &PolarGrid {
        &self.grid
    }
}

/// Polar grid of the closed disk `B_R`. Rings sit at `(i + ½)h` with the last
/// ring exactly on the boundary circle.
#[derive(Clone, Debug)]
pub struct DiskGrid {
    pub radius: f64,
    grid: PolarGrid,
}

impl DiskGrid {
    pub fn new(radius: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("radius", "must be positive"));
        }
        if n_r < 4 {
            return Err(invalid("n_r", format!("{n_r} (need >= 4)")));
        }
        let h = radius / (n_r as f64 - 0.5);
        let radii: Vec<f64> = (0..n_r)
            .map(|i| if i + 1 == n_r { radius } else { (i as f64 + 0.5) * h })
            .collect();
        let mut faces: Vec<f64> = (0..n_r).map(|i| i as f64 * h).collect();
        faces.push(radius);
        Ok(Self {
            radius,
            grid: PolarGrid::with_origin(faces, radii, n_theta)?,
        })
    }

    /// Disk refined towards the origin: `n_core` uniform rings on `[0, core]`,
    /// then rings of constant log-width `ds` (rounded to fit) out to `radius`.
    pub fn graded(radius: f64, core: f64, n_core: usize, ds: f64, n_theta: usize) -> Result<Self> {
        if !(radius > 0.0 && core > 0.0 && core < radius) || n_core < 2 || !(ds > 0.0) {
            return Err(invalid("core", "need 0 < core < radius, n_core >= 2, ds > 0"));
        }
        let span = (radius / core).ln();
        let n_log = (span / ds).ceil().max(2.0) as usize;
        let step = span / n_log as f64;
        let mut faces: Vec<f64> = (0..=n_core).map(|i| core * i as f64 / n_core as f64).collect();
        for i in 1..=n_log {
            faces.push(if i == n_log { radius } else { core * (step * i as f64).exp() });
        }
        let n = faces.len() - 1;
        let radii = (0..n)
            .map(|i| if i + 1 == n { radius } else { 0.5 * (faces[i] + faces[i + 1]) })
            .collect();
        Ok(Self {
            radius,
            grid: PolarGrid::with_origin(faces, radii, n_theta)?,
        })
    }

    pub fn polar(&self) -> &PolarGrid {
        &self.grid
    }

    /// Radial spacing of a uniform disk grid.
    pub fn h(&self) -> f64 {
        self.radius / (self.grid.n_rings() as f64 - 0.5)
    }

    /// True exactly on the outermost ring.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let last = self.grid.n_rings() - 1;
        (0..self.grid.n_nodes())
            .map(|k| self.grid.ring_of(k) == last)
            .collect()
    }
}

impl Deref for DiskGrid {
    type Target = PolarGrid;
    fn deref(&self) -> &PolarGrid {
        &self.grid
    }
}

/// Stereographic charts of the unit sphere.
///
/// `South` uses the coordinate `z` (the pole `z = 0`), `North` uses `w = 1/z`.
/// Points are placed on the sphere by `σ⁻¹(z) = (2z, |z|² − 1)/(|z|² + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chart {
    South,
    North,
}

/// Inverse stereographic projection `σ⁻¹(z) = (2z, |z|² − 1)/(|z|² + 1)`.
pub fn inverse_stereo(z: Complex64) -> [f64; 3] {
    let n2 = z.norm_sqr();
    if n2 > 1.0 {
        // Same point through the chart at infinity, well conditioned for large |z|.
        let v = 1.0 / z;
        let m = v.norm_sqr();
        let d = 1.0 + m;
        return [2.0 * v.re / d, -2.0 * v.im / d, (1.0 - m) / d];
    }
    let d = 1.0 + n2;
    [2.0 * z.re / d, 2.0 * z.im / d, (n2 - 1.0) / d]
}

/// Stereographic coordinate of a unit vector (`∞` maps to a huge value).
pub fn stereo(p: [f64; 3]) -> Complex64 {
    let d = 1.0 - p[2];
    if d < 1e-300 {
        return Complex64::new(f64::MAX.sqrt(), 0.0);
    }
    Complex64::new(p[0] / d, p[1] / d)
}

/// Round-metric conformal factor `4/(1+|y|²)²` of a chart coordinate.
pub fn conformal_factor(y_abs: f64) -> f64 {
    4.0 / (1.0 + y_abs * y_abs).powi(2)
}

/// Two stereographic charts of S² with a partition of unity on the band
/// `|y| ∈ [0.8, 1.25]` of each chart coordinate.
#[derive(Clone, Debug)]
pub struct TwoChartSphereGrid {
    chart: PolarGrid,
    n_inner: usize,
    pou: Vec<f64>,
    rho: Vec<f64>,
}

/// Inner edge of the overlap band in either chart coordinate.
pub const OVERLAP_INNER: f64 = 0.8;
/// Outer edge of the overlap band in either chart coordinate.
pub const OVERLAP_OUTER: f64 = 1.25;

/// Partition-of-unity weight of a chart at coordinate radius `r`.
pub fn partition_weight(r: f64) -> f64 {
    if r <= OVERLAP_INNER {
        return 1.0;
    }
    if r >= OVERLAP_OUTER {
        return 0.0;
    }
    let t = (r.ln() - OVERLAP_INNER.ln()) / (OVERLAP_OUTER.ln() - OVERLAP_INNER.ln());
    1.0 - smoothstep(t)
}

impl TwoChartSphereGrid {
    /// Each chart is a uniform polar grid with `n_inner` rings inside the unit
    /// circle, extended far enough past the overlap band for interpolation.
    pub fn new(n_inner: usize, n_theta: usize) -> Result<Self> {
        if n_inner < 8 {
            return Err(invalid("n_inner", format!("{n_inner} (need >= 8)")));
        }
        if n_theta < 4 || n_theta % 2 == 1 {
            return Err(invalid("n_theta", "need an even n_theta >= 4"));
        }
        let h = 1.0 / n_inner as f64;
        let n_tot = (OVERLAP_OUTER / h).ceil() as usize + 10;
        let faces: Vec<f64> = (0..=n_tot).map(|i| i as f64 * h).collect();
        let radii: Vec<f64> = (0..n_tot).map(|i| (i as f64 + 0.5) * h).collect();
        let chart = PolarGrid::with_origin(faces, radii, n_theta)?;
        let pou = (0..chart.n_nodes()).map(|k| partition_weight(chart.radius_of(k))).collect();
        let rho = (0..chart.n_nodes()).map(|k| conformal_factor(chart.radius_of(k))).collect();
        Ok(Self {
            chart,
            n_inner,
            pou,
            rho,
        })
    }

    /// Polar grid shared by both charts.
    pub fn chart(&self) -> &PolarGrid {
        &self.chart
    }

    pub fn n_inner(&self) -> usize {
        self.n_inner
    }

    pub fn n_chart_nodes(&self) -> usize {
        self.chart.n_nodes()
    }

    pub fn conformal_factor(&self) -> &[f64] {
        &self.rho
    }

    pub fn partition(&self) -> &[f64] {
        &self.pou
    }

    /// Domain coordinate `z` of a chart node.
    pub fn domain_point(&self, chart: Chart, node: usize) -> Complex64 {
        let y = self.chart.point(node);
        match chart {
            Chart::South => y,
            Chart::North => 1.0 / y,
        }
    }

    /// Unit vector of a chart node.
    pub fn sphere_point(&self, chart: Chart, node: usize) -> [f64; 3] {
        let y = self.chart.point(node);
        match chart {
            Chart::South => inverse_stereo(y),
            Chart::North => {
                let p = inverse_stereo(y.conj());
                [p[0], p[1], -p[2]]
            }
        }
    }

    /// `∫_{S²} f dvol` of a scalar given on both charts.
    pub fn integrate_sphere(&self, south: &[f64], north: &[f64]) -> Result<f64> {
        let weighted = |f: &[f64]| -> Result<Vec<f64>> {
            check_len(self.n_chart_nodes(), f.len())?;
            Ok((0..f.len()).map(|k| f[k] * self.rho[k] * self.pou[k]).collect())
        };
        Ok(self.chart.integrate(&weighted(south)?)? + self.chart.integrate(&weighted(north)?)?)
    }

    /// `∫ f dy` of a density already expressed in chart coordinates, e.g. a
    /// conformally invariant energy density.
    pub fn integrate_chart_densities(&self, south: &[f64], north: &[f64]) -> Result<f64> {
        let weighted = |f: &[f64]| -> Result<Vec<f64>> {
            check_len(self.n_chart_nodes(), f.len())?;
            Ok((0..f.len()).map(|k| f[k] * self.pou[k]).collect())
        };
        Ok(self.chart.integrate(&weighted(south)?)? + self.chart.integrate(&weighted(north)?)?)
    }

    /// Total round area, `4π` up to quadrature error.
    pub fn total_area(&self) -> f64 {
        let ones = vec![1.0; self.n_chart_nodes()];
        self.integrate_sphere(&ones, &ones).expect("matching sizes")
    }

    /// Moves a scalar field from one chart to the other. Target nodes whose
    /// preimage falls outside the source chart come back as NaN. Angles match
    /// under `y' = 1/y` up to reflection; radii are interpolated with an
    /// eight-point Lagrange stencil.
    pub fn transfer(&self, source: &[f64]) -> Result<Vec<f64>> {
        let g = &self.chart;
        check_len(g.n_nodes(), source.len())?;
        let n = g.n_theta();
        let r = g.radii();
        let nr = r.len();
        let r_max = g.outer_radius();
        const STENCIL: usize = 8;
        Ok(par::map_range(g.n_nodes(), |k| {
            let rr = 1.0 / g.radius_of(k);
            if rr > r_max || rr < OVERLAP_INNER * 0.5 {
                return f64::NAN;
            }
            let j_src = (n - k % n) % n;
            let h = r[1] - r[0];
            let centre = ((rr - r[0]) / h).round() as isize;
            let start = (centre - STENCIL as isize / 2).clamp(0, (nr - STENCIL) as isize) as usize;
            let xs: Vec<f64> = (start..start + STENCIL).map(|i| r[i]).collect();
            (0..STENCIL)
                .map(|a| {
                    let mut w = 1.0;
                    for b in 0..STENCIL {
                        if a != b {
                            w *= (rr - xs[b]) / (xs[a] - xs[b]);
                        }
                    }
                    w * source[(start + a) * n + j_src]
                })
                .sum()
        }))
    }
}

/// Finite-volume ring chain used to assemble quadratic forms.
///
/// Ring `i` holds `n_theta` nodes at physical points `R_i e^{iθ_j}` of the
/// domain chart. Neighbouring rings are joined node-to-node with the same
/// angle slot. `jacobian` converts densities in the domain coordinate to
/// the coordinate in which `area` is measured.
#[derive(Clone, Debug)]
pub struct RingChain {
    pub n_theta: usize,
    /// Physical radius `|z|` of each ring.
    pub radius: Vec<f64>,
    /// Cell area of each ring in its own chart coordinate.
    pub area: Vec<f64>,
    /// `|dz/dy|²` for the chart coordinate `y` of each ring.
    pub jacobian: Vec<f64>,
    /// Coupling between angular neighbours of ring `i`.
    pub angular: Vec<f64>,
    /// Coupling between ring `i` and ring `i+1`.
    pub link: Vec<f64>,
    /// Dirichlet closure couplings at the first and last ring (0 = none).
    pub bc_inner: f64,
    pub bc_outer: f64,
}

impl RingChain {
    /// Cylinder-coordinate chain of a log-polar annulus with Dirichlet ends.
    pub fn annulus(grid: &LogPolarGrid) -> Self {
        let n = grid.n_theta();
        let ds = grid.ds();
        let dth = grid.dtheta();
        let nr = grid.n_rings();
        Self {
            n_theta: n,
            radius: grid.radii().to_vec(),
            area: (0..nr).map(|i| grid.ring_area(i)).collect(),
            jacobian: vec![1.0; nr],
            angular: vec![if n == 1 { 0.0 } else { ds / dth }; nr],
            link: vec![dth / ds; nr - 1],
            bc_inner: 2.0 * dth / ds,
            bc_outer: 2.0 * dth / ds,
        }
    }

    /// Closed sphere: the `z`-chart disk `|z| ≤ 1` with cell faces
    /// `south_faces`, glued along the unit circle to the `w = 1/z` chart disk
    /// with faces `north_faces`. Both face lists start at 0 and end at 1.
    pub fn sphere(south_faces: &[f64], north_faces: &[f64], n_theta: usize) -> Result<Self> {
        if n_theta < 4 {
            return Err(invalid("n_theta", "need >= 4 for a closed sphere"));
        }
        for faces in [south_faces, north_faces] {
            if faces.len() < 3 || faces[0] != 0.0 || (faces[faces.len() - 1] - 1.0).abs() > 1e-14 {
                return Err(invalid("faces", "chart faces must run from 0 to 1"));
            }
            if faces.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("faces", "chart faces must increase"));
            }
        }
        let dth = 2.0 * PI / n_theta as f64;
        let centres = |f: &[f64]| -> Vec<f64> {
            (0..f.len() - 1)
                .map(|i| if i == 0 { 0.5 * f[1] } else { 0.5 * (f[i] + f[i + 1]) })
                .collect()
        };
        let rs = centres(south_faces);
        let rn = centres(north_faces);
        let mut chain = Self {
            n_theta,
            radius: Vec::new(),
            area: Vec::new(),
            jacobian: Vec::new(),
            angular: Vec::new(),
            link: Vec::new(),
            bc_inner: 0.0,
            bc_outer: 0.0,
        };
        let push_ring = |c: &mut Self, f: &[f64], r: &[f64], i: usize, north: bool| {
            c.radius.push(if north { 1.0 / r[i] } else { r[i] });
            c.area.push(0.5 * (f[i + 1] * f[i + 1] - f[i] * f[i]) * dth);
            c.jacobian.push(if north { r[i].powi(-4) } else { 1.0 });
            c.angular.push((f[i + 1] - f[i]) / (r[i] * dth));
        };
        for i in 0..rs.len() {
            push_ring(&mut chain, south_faces, &rs, i, false);
            if i + 1 < rs.len() {
                chain.link.push(south_faces[i + 1] * dth / (rs[i + 1] - rs[i]));
            }
        }
        chain
            .link
            .push(dth / ((1.0 - rs[rs.len() - 1]) + (1.0 - rn[rn.len() - 1])));
        for i in (0..rn.len()).rev() {
            push_ring(&mut chain, north_faces, &rn, i, true);
            if i > 0 {
                chain.link.push(north_faces[i] * dth / (rn[i] - rn[i - 1]));
            }
        }
        Ok(chain)
    }

    /// Sphere with `n_rings` uniform rings per chart.
    pub fn sphere_uniform(n_rings: usize, n_theta: usize) -> Result<Self> {
        if n_rings < 2 {
            return Err(invalid("n_rings", "need >= 2"));
        }
        let f: Vec<f64> = (0..=n_rings).map(|i| i as f64 / n_rings as f64).collect();
        Self::sphere(&f, &f, n_theta)
    }

    /// Sphere whose `z` chart is refined geometrically towards `z = 0`: a
    /// uniform core of `n_core` rings on `|z| ≤ core`, then rings of constant
    /// log-width at most `ds` up to the unit circle. The `w` chart is uniform.
    pub fn sphere_graded(
        core: f64,
        n_core: usize,
        ds: f64,
        n_north: usize,
        n_theta: usize,
    ) -> Result<Self> {
        if !(core > 0.0 && core < 1.0) || n_core < 1 || !(ds > 0.0) {
            return Err(invalid("core", "need 0 < core < 1, n_core >= 1, ds > 0"));
        }
        let n_log = ((-core.ln()) / ds).ceil().max(1.0) as usize;
        let step = -core.ln() / n_log as f64;
        let mut south: Vec<f64> = (0..=n_core).map(|i| core * i as f64 / n_core as f64).collect();
        for i in 1..=n_log {
            south.push(if i == n_log { 1.0 } else { core * (step * i as f64).exp() });
        }
        let north: Vec<f64> = (0..=n_north).map(|i| i as f64 / n_north as f64).collect();
        Self::sphere(&south, &north, n_theta)
    }

    /// Disk `|z| ≤ faces.last()` with cell faces starting at 0 and a Dirichlet
    /// condition on the outer circle.
    pub fn disk(faces: &[f64], n_theta: usize) -> Result<Self> {
        if n_theta < 4 {
            return Err(invalid("n_theta", "need >= 4 for a disk"));
        }
        if faces.len() < 3 || faces[0] != 0.0 || faces.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("faces", "faces must start at 0 and increase"));
        }
        let dth = 2.0 * PI / n_theta as f64;
        let n = faces.len() - 1;
        let r: Vec<f64> = (0..n)
            .map(|i| if i == 0 { 0.5 * faces[1] } else { 0.5 * (faces[i] + faces[i + 1]) })
            .collect();
        Ok(Self {
            n_theta,
            area: (0..n)
                .map(|i| 0.5 * (faces[i + 1].powi(2) - faces[i].powi(2)) * dth)
                .collect(),
            jacobian: vec![1.0; n],
            angular: (0..n).map(|i| (faces[i + 1] - faces[i]) / (r[i] * dth)).collect(),
            link: (0..n - 1).map(|i| faces[i + 1] * dth / (r[i + 1] - r[i])).collect(),
            bc_inner: 0.0,
            bc_outer: faces[n] * dth / (faces[n] - r[n - 1]),
            radius: r,
        })
    }

    pub fn n_rings(&self) -> usize {
        self.radius.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.radius.len() * self.n_theta
    }

    /// Physical point `z` of a node.
    pub fn point(&self, node: usize) -> Complex64 {
        let i = node / self.n_theta;
        let j = node % self.n_theta;
        Complex64::from_polar(self.radius[i], 2.0 * PI * j as f64 / self.n_theta as f64)
    }

    pub fn points(&self) -> Vec<Complex64> {
        (0..self.n_nodes()).map(|k| self.point(k)).collect()
    }

    /// Visits every two-point flux `(a, b, coupling)` once.
    pub fn for_each_face(&self, mut f: impl FnMut(usize, usize, f64)) {
        let n = self.n_theta;
        for i in 0..self.n_rings() {
            if n > 1 && self.angular[i] > 0.0 {
                for j in 0..n {
                    f(i * n + j, i * n + (j + 1) % n, self.angular[i]);
                }
            }
            if i + 1 < self.n_rings() {
                for j in 0..n {
                    f(i * n + j, (i + 1) * n + j, self.link[i]);
                }
            }
        }
    }

    /// Dirichlet closure coupling of a node (0 for interior rings).
    pub fn boundary_coupling(&self, node: usize) -> f64 {
        let i = node / self.n_theta;
        let mut c = 0.0;
        if i == 0 {
            c += self.bc_inner;
        }
        if i + 1 == self.n_rings() {
            c += self.bc_outer;
        }
        c
    }

    /// Mass of each node for a density `ω(z)` given in the domain coordinate.
    pub fn mass(&self, omega: impl Fn(Complex64) -> f64) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|k| {
                let i = k / self.n_theta;
                omega(self.point(k)) * self.jacobian[i] * self.area[i]
            })
            .collect()
    }

    /// Maximum index distance between coupled nodes.
    pub fn node_bandwidth(&self) -> usize {
        if self.n_rings() > 1 {
            self.n_theta
        } else {
            self.n_theta.saturating_sub(1)
        }
    }
}

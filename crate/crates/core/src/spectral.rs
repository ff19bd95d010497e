//! Weighted Jacobi spectra of sphere-valued maps.
//!
//! The second variation `Q_u(w) = ∫|dw|² − |du|²|w|²` acts on tangential
//! sections `w(x) ∈ T_{u(x)}S²`. Each node of a [`RingChain`] carries an
//! orthonormal tangent frame, so `w` has two unknowns per node and the
//! ambient difference `w_a − w_b` picks up the frame rotation between
//! neighbours. The potential is lumped face by face from the same
//! differences, which keeps `Q` exactly zero on constant sections of a
//! constant map.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{check_len, invalid, Error, Result};
use crate::grid::{build_annulus, RingChain};
use crate::linalg::{lowest_eigenpairs, BandedSym, KrylovOptions, SolverKind};
use crate::maps::{ScaledField, SphereField, SphereMap};
use crate::maps::{MapDomain, SphereMesh};
use crate::par;

/// Orthonormal basis `(e₁, e₂)` of `T_uS²`.
pub type Frame = [[f64; 3]; 2];

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Frame built from the coordinate axis least aligned with `u`.
pub fn tangent_frame(u: [f64; 3]) -> Result<Frame> {
    let n = dot(u, u).sqrt();
    if !(n.is_finite() && (n - 1.0).abs() < 1e-8) {
        return Err(invalid("u", format!("not a unit vector: |u| = {n}")));
    }
    let k = (0..3)
        .min_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()))
        .unwrap_or(0);
    let mut a = [0.0; 3];
    a[k] = 1.0;
    let p = dot(a, u);
    let mut e1 = [a[0] - p * u[0], a[1] - p * u[1], a[2] - p * u[2]];
    let l = dot(e1, e1).sqrt();
    e1.iter_mut().for_each(|x| *x /= l);
    Ok([e1, cross(u, e1)])
}

/// `P_u = I − u uᵀ`.
pub fn projector(u: [f64; 3]) -> [[f64; 3]; 3] {
    let mut p = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] = if i == j { 1.0 } else { 0.0 } - u[i] * u[j];
        }
    }
    p
}

/// Frame rotated by `angle` inside its tangent plane.
pub fn rotate_frame(f: Frame, angle: f64) -> Frame {
    let (s, c) = angle.sin_cos();
    let mut out = [[0.0; 3]; 2];
    for i in 0..3 {
        out[0][i] = c * f[0][i] + s * f[1][i];
        out[1][i] = -s * f[0][i] + c * f[1][i];
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Sections vanish one half cell beyond the first and last rings.
    Dirichlet,
    Closed,
}

/// Round-sphere area density `4/(1+|z|²)²` in the coordinate `z`.
pub fn round_density(z: Complex64) -> f64 {
    4.0 / (1.0 + z.norm_sqr()).powi(2)
}

/// `Q_u` on tangent frames together with the `ω`-mass.
#[derive(Clone, Debug)]
pub struct WeightedQuadraticForm {
    stiffness: BandedSym,
    /// `∫_cell |du|²` per node.
    potential: Vec<f64>,
    /// Cell measure in the domain coordinate.
    cell: Vec<f64>,
    weight: Vec<f64>,
    frames: Vec<Frame>,
    values: Vec<[f64; 3]>,
    points: Vec<Complex64>,
    boundary: Boundary,
}

/// Assembles `Q_u` on a ring chain with the default frames.
pub fn assemble_on_chain(
    chain: &RingChain,
    values: &[[f64; 3]],
    boundary: Boundary,
) -> Result<WeightedQuadraticForm> {
    let frames = par::map_slice(values, |u| tangent_frame(*u))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    assemble_with_frames(chain, values, frames, boundary)
}

/// Assembles `Q_u` with caller-supplied frames (used for gauge checks).
pub fn assemble_with_frames(
    chain: &RingChain,
    values: &[[f64; 3]],
    frames: Vec<Frame>,
    boundary: Boundary,
) -> Result<WeightedQuadraticForm> {
    let n = chain.n_nodes();
    check_len(n, values.len())?;
    check_len(n, frames.len())?;
    for (f, u) in frames.iter().zip(values) {
        let defect = dot(f[0], *u).abs().max(dot(f[1], *u).abs()).max((dot(f[0], f[0]) - 1.0).abs());
        if defect > 1e-8 || dot(f[0], f[1]).abs() > 1e-8 || (dot(f[1], f[1]) - 1.0).abs() > 1e-8 {
            return Err(invalid("frames", "not an orthonormal tangent frame"));
        }
    }
    let mut faces = Vec::with_capacity(2 * n);
    chain.for_each_face(|a, b, c| faces.push((a, b, c)));
    let blocks = par::map_slice(&faces, |&(a, b, c)| {
        let mut m = [[0.0; 2]; 2];
        for (al, row) in m.iter_mut().enumerate() {
            for (be, v) in row.iter_mut().enumerate() {
                *v = -c * dot(frames[a][al], frames[b][be]);
            }
        }
        let d = [
            values[a][0] - values[b][0],
            values[a][1] - values[b][1],
            values[a][2] - values[b][2],
        ];
        (m, 0.5 * c * dot(d, d))
    });
    let mut stiffness = BandedSym::zeros(2 * n, 2 * chain.node_bandwidth() + 1);
    let mut potential = vec![0.0; n];
    for (&(a, b, c), (m, v)) in faces.iter().zip(blocks) {
        for al in 0..2 {
            stiffness.add(2 * a + al, 2 * a + al, c);
            stiffness.add(2 * b + al, 2 * b + al, c);
            for be in 0..2 {
                stiffness.add(2 * a + al, 2 * b + be, m[al][be]);
            }
        }
        potential[a] += v;
        potential[b] += v;
    }
    if boundary == Boundary::Dirichlet {
        for k in 0..n {
            let c = chain.boundary_coupling(k);
            if c > 0.0 {
                stiffness.add(2 * k, 2 * k, c);
                stiffness.add(2 * k + 1, 2 * k + 1, c);
            }
        }
    }
    let cell = chain.mass(|_| 1.0);
    Ok(WeightedQuadraticForm {
        stiffness,
        potential,
        cell,
        weight: vec![1.0; n],
        frames,
        values: values.to_vec(),
        points: chain.points(),
        boundary,
    })
}

/// `Q_u` for a sampled map: closed with the round weight on spheres,
/// Dirichlet with unit weight on annuli.
pub fn assemble_jacobi(map: &SphereMap) -> Result<WeightedQuadraticForm> {
    let chain = map.domain().chain()?;
    let values = map.chain_values()?;
    match map.domain() {
        MapDomain::Sphere(_) => {
            assemble_on_chain(&chain, &values, Boundary::Closed)?.with_weight(round_density)
        }
        _ => assemble_on_chain(&chain, &values, Boundary::Dirichlet),
    }
}

impl WeightedQuadraticForm {
    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.values.len()
    }

    /// The `∫|dw|²` part, Dirichlet closure included.
    pub fn stiffness(&self) -> &BandedSym {
        &self.stiffness
    }

    /// `|du|²` per node as a density in the domain coordinate.
    pub fn potential_density(&self) -> Vec<f64> {
        self.potential.iter().zip(&self.cell).map(|(p, c)| p / c).collect()
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    /// Domain point of every node.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Replaces the weight by `ω(z)`, a density in the domain coordinate.
    pub fn with_weight(mut self, omega: impl Fn(Complex64) -> f64 + Sync + Send) -> Result<Self> {
        let w = par::map_slice(&self.points, |z| omega(*z));
        if let Some(k) = w.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid(
                "weight",
                format!("must be positive and finite, got {} at z = {}", w[k], self.points[k]),
            ));
        }
        self.weight = w;
        Ok(self)
    }

    /// Multiplies the weight by `c > 0`.
    pub fn scale_weight(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("c", format!("{c} must be positive")));
        }
        self.weight.iter_mut().for_each(|w| *w *= c);
        Ok(self)
    }

    /// Multiplies `|du|²` by `factor(z)` node by node.
    pub fn scale_potential(mut self, factor: impl Fn(Complex64) -> f64) -> Self {
        for (p, z) in self.potential.iter_mut().zip(&self.points) {
            *p *= factor(*z);
        }
        self
    }

    /// Adds `amount` (integrated) to the potential of one node.
    pub fn add_potential(mut self, node: usize, amount: f64) -> Self {
        self.potential[node] += amount;
        self
    }

    /// Matrix of `Q_u`.
    pub fn operator(&self) -> BandedSym {
        let mut a = self.stiffness.clone();
        for (k, p) in self.potential.iter().enumerate() {
            a.add(2 * k, 2 * k, -p);
            a.add(2 * k + 1, 2 * k + 1, -p);
        }
        a
    }

    /// Diagonal `ω`-mass per unknown.
    pub fn mass(&self) -> Vec<f64> {
        self.weight
            .iter()
            .zip(&self.cell)
            .flat_map(|(w, c)| [w * c, w * c])
            .collect()
    }

    /// `Q_u(w)` for frame coordinates `w`.
    pub fn quadratic(&self, w: &[f64]) -> Result<f64> {
        check_len(self.n_dofs(), w.len())?;
        let aw = self.operator().matvec(w);
        Ok(aw.iter().zip(w).map(|(a, b)| a * b).sum())
    }

    /// Ambient vectors `Σ_α w_α e_α`.
    pub fn to_ambient(&self, w: &[f64]) -> Result<Vec<[f64; 3]>> {
        check_len(self.n_dofs(), w.len())?;
        Ok(self
            .frames
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let (a, b) = (w[2 * k], w[2 * k + 1]);
                [
                    a * f[0][0] + b * f[1][0],
                    a * f[0][1] + b * f[1][1],
                    a * f[0][2] + b * f[1][2],
                ]
            })
            .collect())
    }

    /// Frame coordinates of `P_u v`.
    pub fn from_ambient(&self, v: &[[f64; 3]]) -> Result<Vec<f64>> {
        check_len(self.n_nodes(), v.len())?;
        Ok(self
            .frames
            .iter()
            .zip(v)
            .flat_map(|(f, x)| [dot(f[0], *x), dot(f[1], *x)])
            .collect())
    }

    /// `max |du|²/ω` over nodes with the lumped potential.
    pub fn potential_ratio(&self) -> f64 {
        self.potential_density()
            .iter()
            .zip(&self.weight)
            .map(|(v, w)| v / w)
            .fold(0.0, f64::max)
    }

    /// Worst `|⟨Aw,v⟩ − ⟨w,Av⟩| / (‖Aw‖‖v‖ + ‖w‖‖Av‖)` over random pairs.
    pub fn symmetry_defect(&self, pairs: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = self.operator();
        let n = self.n_dofs();
        let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let aw = a.matvec(&w);
            let av = a.matvec(&v);
            let l: f64 = aw.iter().zip(&v).map(|(x, y)| x * y).sum();
            let r: f64 = w.iter().zip(&av).map(|(x, y)| x * y).sum();
            let s = norm(&aw) * norm(&v) + norm(&w) * norm(&av);
            worst = worst.max((l - r).abs() / s.max(f64::MIN_POSITIVE));
        }
        worst
    }
}

/// How `τ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroTolerance {
    /// `factor · median |λ₁..₂₀|`.
    Relative(f64),
    Absolute(f64),
}

impl Default for ZeroTolerance {
    fn default() -> Self {
        ZeroTolerance::Relative(1e-3)
    }
}

impl ZeroTolerance {
    pub fn resolve(&self, eigenvalues: &[f64]) -> f64 {
        match *self {
            ZeroTolerance::Absolute(t) => t,
            ZeroTolerance::Relative(f) => {
                let mut a: Vec<f64> = eigenvalues.iter().take(20).map(|v| v.abs()).collect();
                if a.is_empty() {
                    return 0.0;
                }
                a.sort_by(f64::total_cmp);
                let m = a.len();
                let med = if m % 2 == 1 { a[m / 2] } else { 0.5 * (a[m / 2 - 1] + a[m / 2]) };
                f * med
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    /// Shift for the iterative solver; defaults to just below `−μ`, the
    /// lower bound given by the potential ratio.
    pub shift: Option<f64>,
    pub krylov: KrylovOptions,
    pub tolerance: ZeroTolerance,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub index: usize,
    pub nullity: usize,
    pub tau: f64,
    /// `‖Aw − λMw‖ / ‖w‖` per pair.
    pub residuals: Vec<f64>,
    /// Eigenvalue counts below `−τ` and below `τ` from `LDLᵀ` inertia.
    pub inertia: (usize, usize),
    pub solver: SolverKind,
    pub iterations: usize,
    pub dofs: usize,
}

impl SpectrumReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// First eigenvalue above `τ`, if computed.
    pub fn gap(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|v| *v > self.tau)
    }

    /// True when the eigenvalue counts agree with the inertia counts.
    pub fn inertia_consistent(&self) -> bool {
        self.inertia == (self.index, self.index + self.nullity)
    }
}

/// `(index, nullity)`: eigenvalues below `−τ` and within `[−τ, τ]`.
pub fn index_nullity(report: &SpectrumReport, tau: f64) -> Result<(usize, usize)> {
    let top = report.eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY);
    if top <= tau && report.eigenvalues.len() < report.dofs {
        return Err(Error::InsufficientSpectrum(format!(
            "{} eigenvalues computed, largest {top:.3e} does not exceed τ = {tau:.3e}",
            report.eigenvalues.len()
        )));
    }
    let index = report.eigenvalues.iter().filter(|v| **v < -tau).count();
    let nullity = report.eigenvalues.iter().filter(|v| v.abs() <= tau).count();
    Ok((index, nullity))
}

/// A shift with no eigenvalue below it, close to the bottom of the spectrum.
/// Every eigenvalue is at least `−μ`, so `−1.05μ` is always admissible; the
/// gap to `−10⁻²` is closed by bisection in `log|σ|` using the inertia.
fn default_shift(a: &BandedSym, mass: &[f64], mu: f64) -> Result<f64> {
    let near = -1e-2;
    let admissible = |s: f64| a.count_below(s, mass).map(|c| c == 0);
    if admissible(near)? {
        return Ok(near);
    }
    let (mut lo, mut hi) = ((1.05 * mu + 1e-3).ln(), (-near).ln());
    for _ in 0..6 {
        let mid = 0.5 * (lo + hi);
        if admissible(-mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(-lo.exp())
}

/// Lowest `count` eigenpairs of `Q_u w = λ M_ω w` with counts.
pub fn solve_weighted_eigen(
    form: &WeightedQuadraticForm,
    count: usize,
    opts: &SolveOptions,
) -> Result<SpectrumReport> {
    let n = form.n_dofs();
    if count == 0 || count > n {
        return Err(invalid("count", format!("{count} for {n} unknowns")));
    }
    let a = form.operator();
    let mass = form.mass();
    let shift = match opts.shift {
        Some(s) => s,
        None if n <= crate::linalg::DENSE_LIMIT => 0.0,
        None => default_shift(&a, &mass, form.potential_ratio())?,
    };
    let pairs = lowest_eigenpairs(&a, &mass, count, shift, &opts.krylov)?;
    let tau = opts.tolerance.resolve(&pairs.values);
    let mut report = SpectrumReport {
        eigenvalues: pairs.values,
        eigenvectors: pairs.vectors,
        index: 0,
        nullity: 0,
        tau,
        residuals: pairs.residuals,
        inertia: (0, 0),
        solver: pairs.method,
        iterations: pairs.iterations,
        dofs: n,
    };
    let (index, nullity) = index_nullity(&report, tau)?;
    report.index = index;
    report.nullity = nullity;
    report.inertia = (a.count_below(-tau, &mass)?, a.count_below(tau, &mass)?);
    Ok(report)
}

/// The weight `ω_{η,k}` of a neck `A(η, δ)` centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NeckWeight {
    pub eta: f64,
    pub delta: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NeckRegion {
    /// `|x| ≤ δ/η`.
    Core,
    /// `δ/η < |x| < η`.
    Neck,
    /// `|x| ≥ η`.
    Outer,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("{beta} must lie in (0,1)")));
    }
    Ok(())
}

pub fn neck_weight(eta: f64, delta: f64, beta: f64) -> Result<NeckWeight> {
    if !(eta > 0.0 && delta > 0.0 && delta < eta * eta) {
        return Err(invalid("delta", format!("need 0 < δ < η², got η = {eta}, δ = {delta}")));
    }
    check_beta(beta)?;
    Ok(NeckWeight { eta, delta, beta })
}

impl NeckWeight {
    /// `log(η²/δ)`.
    pub fn modulus(&self) -> f64 {
        (self.eta * self.eta / self.delta).ln()
    }

    pub fn region(&self, r: f64) -> NeckRegion {
        if r >= self.eta {
            NeckRegion::Outer
        } else if r <= self.delta / self.eta {
            NeckRegion::Core
        } else {
            NeckRegion::Neck
        }
    }

    /// Three-branch value at `|x| = r`.
    pub fn eval(&self, r: f64) -> f64 {
        let (eta, delta, beta) = (self.eta, self.delta, self.beta);
        let log_term = self.modulus().powi(-2);
        match self.region(r) {
            NeckRegion::Outer => (1.0 + delta.powf(beta) / eta.powf(2.0 * beta) + log_term) / (eta * eta),
            NeckRegion::Neck => {
                ((r / eta).powf(beta) + (delta / (eta * r)).powf(beta) + log_term) / (r * r)
            }
            NeckRegion::Core => {
                let bump = (1.0 + eta * eta).powi(2) / (eta.powi(4) * (1.0 + (r / delta).powi(2)).powi(2));
                eta * eta / (delta * delta) * (bump + delta.powf(beta) / eta.powf(2.0 * beta) + log_term)
            }
        }
    }

    /// Density on the Riemann sphere: [`NeckWeight::eval`] inside `B_η`, the
    /// outer constant times `(1+η²)²/(1+|x|²)²` outside so the total mass
    /// stays finite.
    pub fn sphere_density(&self, x: Complex64) -> f64 {
        let r = x.norm();
        let v = self.eval(r);
        if r >= self.eta {
            v * ((1.0 + self.eta * self.eta) / (1.0 + r * r)).powi(2)
        } else {
            v
        }
    }

    pub fn sample(&self, points: &[Complex64]) -> Vec<f64> {
        points.iter().map(|z| self.eval(z.norm())).collect()
    }
}

/// `ω_{η,∞}`: the weight of the background limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BackgroundLimitWeight {
    pub eta: f64,
    pub beta: f64,
}

impl BackgroundLimitWeight {
    pub fn new(eta: f64, beta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(invalid("eta", format!("{eta} must lie in (0,1)")));
        }
        check_beta(beta)?;
        Ok(Self { eta, beta })
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.eta {
            1.0 / (self.eta * self.eta)
        } else {
            r.powf(self.beta - 2.0) / self.eta.powf(self.beta)
        }
    }

    /// Sphere extension as in [`NeckWeight::sphere_density`].
    pub fn sphere_density(&self, x: Complex64) -> f64 {
        let r = x.norm();
        if r >= self.eta {
            self.eval(r) * ((1.0 + self.eta * self.eta) / (1.0 + r * r)).powi(2)
        } else {
            self.eval(r)
        }
    }
}

/// `ω̂_{η,∞}`: the weight of the bubble limit in its own coordinate `y`.
/// Its sphere transfer `ω̂(y)(1+|y|²)²` against the round measure is the
/// same measure, so it is used directly as a `dy²` density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BubbleLimitWeight {
    pub eta: f64,
    pub beta: f64,
}

impl BubbleLimitWeight {
    pub fn new(eta: f64, beta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(invalid("eta", format!("{eta} must lie in (0,1)")));
        }
        check_beta(beta)?;
        Ok(Self { eta, beta })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let eta = self.eta;
        if r <= 1.0 / eta {
            ((1.0 + eta * eta) / (1.0 + r * r)).powi(2) / (eta * eta)
        } else {
            1.0 / (eta.powf(self.beta) * r.powf(2.0 + self.beta))
        }
    }

    /// `ω̃ = ω̂(y)(1+|y|²)²`, the density against the round measure up to
    /// its normalising constant.
    pub fn transferred(&self, r: f64) -> f64 {
        self.eval(r) * (1.0 + r * r).powi(2)
    }
}

/// `sup |du|²/ω` over the nodes each chart owns, from gradient densities.
/// `ω` is a density in the domain coordinate `z`.
pub fn mu_ratio(map: &SphereMap, weight: impl Fn(Complex64) -> f64) -> Result<f64> {
    let dens = map.energy_density()?;
    let mut mu = 0.0f64;
    for b in map.domain().blocks() {
        for k in 0..b.grid.n_nodes() {
            let r = b.grid.radius_of(k);
            if r >= b.own.1 || r < b.own.0 {
                continue;
            }
            let y = b.grid.point(k);
            let (z, conf) = match b.chart {
                crate::grid::Chart::South => (y, 1.0),
                crate::grid::Chart::North => (1.0 / y, y.norm_sqr().powi(2)),
            };
            mu = mu.max(dens[b.offset + k] * conf / weight(z));
        }
    }
    Ok(mu)
}

/// Weights of the axisymmetric annulus problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardyVariant {
    /// `1/|x|²`.
    Hardy,
    /// `δ^β/(η^β|x|^{2+β})`.
    Inner,
    /// `|x|^{β−2}/η^β`.
    Outer,
    /// `ω_{η,k}` restricted to the neck.
    Neck,
}

impl HardyVariant {
    pub fn name(&self) -> &'static str {
        match self {
            HardyVariant::Hardy => "hardy",
            HardyVariant::Inner => "inner",
            HardyVariant::Outer => "outer",
            HardyVariant::Neck => "neck",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HardyEigen {
    pub eta: f64,
    pub delta: f64,
    pub beta: f64,
    pub variant: HardyVariant,
    /// `π²/log²(η²/δ)` for the hardy variant.
    pub analytic: Option<f64>,
    pub numeric: f64,
}

impl HardyEigen {
    pub fn rel_err(&self) -> Option<f64> {
        self.analytic.map(|a| (self.numeric - a).abs() / a)
    }
}

/// `π²/log²(η²/δ)`.
pub fn hardy_lambda_exact(eta: f64, delta: f64) -> f64 {
    PI * PI / (eta * eta / delta).ln().powi(2)
}

/// Smallest Dirichlet eigenvalue of `−Δf = λωf` on `A(η, δ)` for radial `f`,
/// on `n_s` log-uniform rings.
pub fn annulus_hardy_eigen(
    eta: f64,
    delta: f64,
    variant: HardyVariant,
    beta: f64,
    n_s: usize,
) -> Result<HardyEigen> {
    let w = neck_weight(eta, delta, beta)?;
    let grid = build_annulus(eta, delta, n_s, 1)?;
    let chain = RingChain::annulus(&grid);
    let n = chain.n_nodes();
    let mut a = BandedSym::zeros(n, 1);
    chain.for_each_face(|i, j, c| {
        a.add(i, i, c);
        a.add(j, j, c);
        a.add(i, j, -c);
    });
    for k in 0..n {
        a.add(k, k, chain.boundary_coupling(k));
    }
    let omega = |z: Complex64| {
        let r = z.norm();
        match variant {
            HardyVariant::Hardy => 1.0 / (r * r),
            HardyVariant::Inner => (delta / eta).powf(beta) / r.powf(2.0 + beta),
            HardyVariant::Outer => r.powf(beta - 2.0) / eta.powf(beta),
            HardyVariant::Neck => w.eval(r),
        }
    };
    let mass = chain.mass(omega);
    let pairs = lowest_eigenpairs(&a, &mass, 1, 0.0, &KrylovOptions::default())?;
    Ok(HardyEigen {
        eta,
        delta,
        beta,
        variant,
        analytic: (variant == HardyVariant::Hardy).then(|| hardy_lambda_exact(eta, delta)),
        numeric: pairs.values[0],
    })
}

/// Resolution and perturbation knobs of [`neck_positivity_min`].
#[derive(Clone, Debug)]
pub struct NeckSpectrumOptions {
    /// Log-radial rings per unit of `log r`.
    pub rings_per_unit: f64,
    pub n_theta: usize,
    /// Multiplies `|du|²` on the whole neck.
    pub potential_factor: f64,
    pub krylov: KrylovOptions,
}

impl Default for NeckSpectrumOptions {
    fn default() -> Self {
        Self {
            rings_per_unit: 16.0,
            n_theta: 32,
            potential_factor: 1.0,
            krylov: KrylovOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NeckPositivity {
    pub eta: f64,
    pub delta: f64,
    pub beta: f64,
    /// Smallest Dirichlet eigenvalue of `Q_u` against `ω_{η,k}` on the neck.
    pub lambda0: f64,
    /// `max |du|²/ω` on the neck (after the potential factor).
    pub mu: f64,
    pub residual: f64,
    pub dofs: usize,
}

/// Empirical `λ₀` of a map on the neck `A(η, δ)` around `x₀`.
pub fn neck_positivity_min(
    field: std::sync::Arc<dyn SphereField>,
    x0: Complex64,
    eta: f64,
    delta: f64,
    beta: f64,
    opts: &NeckSpectrumOptions,
) -> Result<NeckPositivity> {
    let w = neck_weight(eta, delta, beta)?;
    if !(opts.potential_factor >= 0.0) {
        return Err(invalid("potential_factor", "must be non-negative"));
    }
    let n_s = ((w.modulus() * opts.rings_per_unit).ceil() as usize).max(8);
    let grid = build_annulus(eta, delta, n_s, opts.n_theta)?;
    let shifted = ScaledField {
        inner: field,
        center: -x0,
        scale: 1.0,
    };
    let domain = std::sync::Arc::new(MapDomain::Annulus(grid));
    let map = SphereMap::sample(&shifted, domain);
    let f = opts.potential_factor;
    let form = assemble_jacobi(&map)?
        .with_weight(move |z| w.eval(z.norm()))?
        .scale_potential(|_| f);
    let report = solve_weighted_eigen(
        &form,
        1,
        &SolveOptions {
            krylov: opts.krylov.clone(),
            tolerance: ZeroTolerance::Absolute(0.0),
            shift: None,
        },
    );
    // a single eigenvalue cannot bracket τ = 0 when it is non-positive
    let (lambda0, residual) = match report {
        Ok(r) => (r.eigenvalues[0], r.max_residual()),
        Err(Error::InsufficientSpectrum(_)) => {
            let pairs = lowest_eigenpairs(
                &form.operator(),
                &form.mass(),
                1,
                -1.05 * form.potential_ratio() - 1e-3,
                &opts.krylov,
            )?;
            (pairs.values[0], pairs.residuals[0])
        }
        Err(e) => return Err(e),
    };
    Ok(NeckPositivity {
        eta,
        delta,
        beta,
        lambda0,
        mu: form.potential_ratio(),
        residual,
        dofs: form.n_dofs(),
    })
}

/// Sphere mesh refined towards `x = 0` down to scale `δ/8`.
pub fn bubble_mesh(delta: f64, ds: f64, n_north: usize, n_theta: usize) -> Result<SphereMesh> {
    SphereMesh::graded((delta / 8.0).min(0.5), 16, ds, n_north, n_theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{ConstantMap, RationalMapSpec, NORTH};
    use std::sync::Arc;

    fn sphere_map(field: &dyn SphereField, n: usize, nt: usize) -> SphereMap {
        let d = Arc::new(MapDomain::Sphere(SphereMesh::uniform(n, nt).unwrap()));
        SphereMap::sample(field, d)
    }

    #[test]
    fn frames_and_projectors() {
        for u in [[0.0, 0.0, 1.0], [0.6, 0.0, -0.8], [1.0 / 3f64.sqrt(); 3]] {
            let f = tangent_frame(u).unwrap();
            assert!(dot(f[0], u).abs() < 1e-15 && dot(f[1], u).abs() < 1e-15);
            assert!((dot(f[0], f[0]) - 1.0).abs() < 1e-15 && dot(f[0], f[1]).abs() < 1e-15);
            let p = projector(u);
            for i in 0..3 {
                for j in 0..3 {
                    let pp: f64 = (0..3).map(|k| p[i][k] * p[k][j]).sum();
                    assert!((pp - p[i][j]).abs() < 1e-12);
                    assert!((p[i][j] - p[j][i]).abs() < 1e-15);
                }
            }
        }
        assert!(tangent_frame([0.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn disk_dirichlet_laplacian_bessel_root() {
        let n = 48;
        let faces: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let chain = RingChain::disk(&faces, 48).unwrap();
        let vals = vec![NORTH; chain.n_nodes()];
        let form = assemble_on_chain(&chain, &vals, Boundary::Dirichlet).unwrap();
        let rep = solve_weighted_eigen(&form, 4, &SolveOptions::default()).unwrap();
        let j01 = 2.404_825_557_695_773_f64;
        for v in &rep.eigenvalues[..2] {
            assert!((v / (j01 * j01) - 1.0).abs() < 5e-3, "{v}");
        }
        // next radial-free pair is j₁,₁²
        assert!((rep.eigenvalues[2] / 14.681_970_642_123_9 - 1.0).abs() < 5e-3);
        assert_eq!((rep.index, rep.nullity), (0, 0));
    }

    #[test]
    fn weight_scaling_and_gauge() {
        let spec = RationalMapSpec::identity();
        let map = sphere_map(&spec, 12, 16);
        let form = assemble_jacobi(&map).unwrap();
        let opts = SolveOptions::default();
        let base = solve_weighted_eigen(&form, 12, &opts).unwrap();
        let scaled = solve_weighted_eigen(&form.clone().scale_weight(3.5).unwrap(), 12, &opts).unwrap();
        for (a, b) in base.eigenvalues.iter().zip(&scaled.eigenvalues) {
            assert!((a / 3.5 - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} {b}");
        }
        assert_eq!((base.index, base.nullity), (scaled.index, scaled.nullity));

        let chain = map.domain().chain().unwrap();
        let vals = map.chain_values().unwrap();
        let frames: Vec<Frame> = vals
            .iter()
            .enumerate()
            .map(|(k, u)| rotate_frame(tangent_frame(*u).unwrap(), 0.7 * k as f64))
            .collect();
        let rotated = assemble_with_frames(&chain, &vals, frames, Boundary::Closed)
            .unwrap()
            .with_weight(round_density)
            .unwrap();
        let rot = solve_weighted_eigen(&rotated, 12, &opts).unwrap();
        for (a, b) in base.eigenvalues.iter().zip(&rot.eigenvalues) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} {b}");
        }
        assert!(form.symmetry_defect(20, 3) < 1e-12);
    }

    #[test]
    fn constant_and_identity_counts() {
        let c = sphere_map(&ConstantMap(NORTH), 24, 32);
        let form = assemble_jacobi(&c).unwrap();
        let rep = solve_weighted_eigen(&form, 20, &SolveOptions::default()).unwrap();
        assert_eq!((rep.index, rep.nullity), (0, 2));
        assert!(rep.inertia_consistent());
        // l = 1 spherical harmonics, doubled
        assert!((rep.eigenvalues[2] / 2.0 - 1.0).abs() < 1e-2);

        // the near-kernel error is dominated by the angular spacing
        let id = sphere_map(&RationalMapSpec::identity(), 32, 64);
        let form = assemble_jacobi(&id).unwrap();
        let rep = solve_weighted_eigen(&form, 20, &SolveOptions::default()).unwrap();
        assert_eq!((rep.index, rep.nullity), (0, 6), "{:?}", &rep.eigenvalues[..8]);
        assert!(rep.inertia_consistent());
        assert!((rep.eigenvalues[6] / 4.0 - 1.0).abs() < 2e-2, "{}", rep.eigenvalues[6]);
    }

    #[test]
    fn hardy_variant_matches_closed_form() {
        for l in [4.0f64, 8.0, 16.0] {
            let h = annulus_hardy_eigen(1.0, (-l).exp(), HardyVariant::Hardy, 0.5, 512).unwrap();
            assert!(h.rel_err().unwrap() < 1e-2, "{h:?}");
        }
        let h = annulus_hardy_eigen(1.0, (-4.0f64).exp(), HardyVariant::Hardy, 0.5, 512).unwrap();
        assert!((h.analytic.unwrap() - PI * PI / 16.0).abs() < 1e-15);
    }

    #[test]
    fn neck_weight_branches() {
        let w = neck_weight(0.1, 1e-5, 0.5).unwrap();
        let l = (0.01f64 / 1e-5).ln();
        let at_eta = (1.0 + (1e-5f64 / 0.01).powf(0.5) + l.powi(-2)) / 0.01;
        assert!((w.eval(0.1) - at_eta).abs() < 1e-12 * at_eta);
        let r = 1e-5f64.sqrt();
        let log_part = l.powi(-2) / (r * r);
        assert!(w.eval(r) > log_part && w.eval(r) < 1.2 * log_part + 2.0 * (r / 0.1).sqrt() / (r * r));
        assert_eq!(w.region(1e-5 / 0.1 * 0.5), NeckRegion::Core);
        assert!(neck_weight(0.1, 1e-5, 1.5).is_err());
        assert!(neck_weight(0.1, 0.02, 0.5).is_err());
    }

    #[test]
    fn rank_one_potential_decrease_raises_spectrum() {
        let map = sphere_map(&RationalMapSpec::identity(), 10, 16);
        let form = assemble_jacobi(&map).unwrap();
        let opts = SolveOptions::default();
        let base = solve_weighted_eigen(&form, 10, &opts).unwrap();
        for node in [3usize, 77, 200] {
            // lowering V at one node adds a positive rank-one diagonal term
            let p = form.potential_density()[node] * 0.5;
            let pert = form.clone().add_potential(node, -p * 1e-2);
            let r = solve_weighted_eigen(&pert, 10, &opts).unwrap();
            for (a, b) in base.eigenvalues.iter().zip(&r.eigenvalues) {
                assert!(*b >= a - 1e-10, "{a} {b}");
            }
        }
    }

    #[test]
    fn mu_ratio_oracles() {
        let c = sphere_map(&ConstantMap(NORTH), 12, 16);
        assert!(mu_ratio(&c, round_density).unwrap() < 1e-20);
        let id = sphere_map(&RationalMapSpec::identity(), 48, 64);
        for eta in [0.1, 0.2] {
            let w = BubbleLimitWeight::new(eta, 0.5).unwrap();
            let mu = mu_ratio(&id, |z| w.eval(z.norm())).unwrap();
            let expect = 8.0 * eta * eta / (1.0 + eta * eta).powi(2);
            assert!((mu / expect - 1.0).abs() < 2e-2, "{mu} {expect}");
        }
    }

    #[test]
    fn index_nullity_windows() {
        let rep = SpectrumReport {
            eigenvalues: vec![0.5, 1.0, 2.0],
            eigenvectors: vec![],
            index: 0,
            nullity: 0,
            tau: 1e-3,
            residuals: vec![0.0; 3],
            inertia: (0, 0),
            solver: SolverKind::Dense,
            iterations: 1,
            dofs: 10,
        };
        assert_eq!(index_nullity(&rep, 1e-3).unwrap(), (0, 0));
        assert!(matches!(index_nullity(&rep, 5.0), Err(Error::InsufficientSpectrum(_))));
    }
}

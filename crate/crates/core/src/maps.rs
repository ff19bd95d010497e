//! Sphere-valued maps: rational maps, constants and glued bubble families,
//! with energies, Hopf differentials, conservation residuals and neck
//! diagnostics.
//!
//! Maps are analytic evaluators ([`SphereField`]) that get sampled onto a
//! [`MapDomain`]. Neck diagnostics build their own log-polar grids and work
//! directly from the evaluator.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{check_len, invalid, Error, Result};
use crate::grid::{Chart, LogPolarGrid, PolarGrid, RingChain};
use crate::par;

pub const NORTH: [f64; 3] = [0.0, 0.0, 1.0];
pub const SOUTH: [f64; 3] = [0.0, 0.0, -1.0];

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Point a fraction `t` of the way along the shortest arc from `p` to `q`.
pub fn slerp(p: [f64; 3], q: [f64; 3], t: f64) -> [f64; 3] {
    let c = dot(p, q).clamp(-1.0, 1.0);
    let ang = c.acos();
    if ang < 1e-9 {
        return normalize([
            p[0] + t * (q[0] - p[0]),
            p[1] + t * (q[1] - p[1]),
            p[2] + t * (q[2] - p[2]),
        ]);
    }
    let s = ang.sin();
    let a = ((1.0 - t) * ang).sin() / s;
    let b = (t * ang).sin() / s;
    normalize([a * p[0] + b * q[0], a * p[1] + b * q[1], a * p[2] + b * q[2]])
}

/// `σ⁻¹(P/Q)` computed without forming the quotient when `|P| > |Q|`.
fn sphere_of_ratio(p: Complex64, q: Complex64) -> [f64; 3] {
    if p.norm() <= q.norm() {
        let v = p / q;
        let m = v.norm_sqr();
        let d = 1.0 + m;
        [2.0 * v.re / d, 2.0 * v.im / d, (m - 1.0) / d]
    } else {
        let v = q / p;
        let m = v.norm_sqr();
        let d = 1.0 + m;
        [2.0 * v.re / d, -2.0 * v.im / d, (1.0 - m) / d]
    }
}

/// A map from the Riemann sphere (or a planar region) into `S²`.
pub trait SphereField: Send + Sync {
    /// Value at chart coordinate `y`: `z = y` in the south chart, `z = 1/y`
    /// in the north chart.
    fn eval_chart(&self, chart: Chart, y: Complex64) -> [f64; 3];

    /// Value at the domain point `z`.
    fn eval(&self, z: Complex64) -> [f64; 3] {
        if z.norm_sqr() <= 1.0 {
            self.eval_chart(Chart::South, z)
        } else {
            self.eval_chart(Chart::North, 1.0 / z)
        }
    }
}

/// Constant map.
#[derive(Clone, Copy, Debug)]
pub struct ConstantMap(pub [f64; 3]);

impl SphereField for ConstantMap {
    fn eval_chart(&self, _: Chart, _: Complex64) -> [f64; 3] {
        self.0
    }
}

/// `P/Q` with coefficients in ascending powers of `z`.
#[derive(Clone, Debug, Serialize)]
pub struct RationalMapSpec {
    num: Vec<Complex64>,
    den: Vec<Complex64>,
    degree: usize,
}

fn trim(mut c: Vec<Complex64>) -> Vec<Complex64> {
    while c.len() > 1 && c[c.len() - 1].norm() == 0.0 {
        c.pop();
    }
    c
}

fn sylvester_resultant(p: &[Complex64], q: &[Complex64]) -> Complex64 {
    let (m, n) = (p.len() - 1, q.len() - 1);
    if m + n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let size = m + n;
    let mut s = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
    // rows hold descending coefficients
    for r in 0..n {
        for (i, c) in p.iter().rev().enumerate() {
            s[(r, r + i)] = *c;
        }
    }
    for r in 0..m {
        for (i, c) in q.iter().rev().enumerate() {
            s[(n + r, r + i)] = *c;
        }
    }
    s.determinant()
}

/// Resultants below this (after scaling both polynomials to unit max
/// coefficient) count as a common root.
pub const RESULTANT_TOL: f64 = 1e-10;

impl RationalMapSpec {
    pub fn new(num: Vec<Complex64>, den: Vec<Complex64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(invalid("coefficients", "numerator and denominator need at least one coefficient"));
        }
        if num.iter().chain(&den).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("coefficients", "non-finite coefficient"));
        }
        let num = trim(num);
        let den = trim(den);
        let scale = |c: &[Complex64]| c.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let (sp, sq) = (scale(&num), scale(&den));
        if sq == 0.0 {
            return Err(invalid("denominator", "identically zero"));
        }
        if sp == 0.0 {
            if den.len() > 1 {
                return Err(invalid("resultant", "zero numerator shares every root of the denominator"));
            }
        } else {
            let p: Vec<Complex64> = num.iter().map(|c| c / sp).collect();
            let q: Vec<Complex64> = den.iter().map(|c| c / sq).collect();
            let res = sylvester_resultant(&p, &q).norm();
            if res < RESULTANT_TOL {
                return Err(invalid("resultant", format!("{res:.3e}: numerator and denominator share a root")));
            }
        }
        let degree = (num.len() - 1).max(den.len() - 1);
        Ok(Self { num, den, degree })
    }

    /// `z ↦ z`.
    pub fn identity() -> Self {
        Self::monomial(1)
    }

    /// `z ↦ zᵈ`.
    pub fn monomial(d: usize) -> Self {
        let mut num = vec![Complex64::new(0.0, 0.0); d + 1];
        num[d] = Complex64::new(1.0, 0.0);
        Self::new(num, vec![Complex64::new(1.0, 0.0)]).expect("monomials are coprime to 1")
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c], vec![Complex64::new(1.0, 0.0)]).expect("constant spec")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn numerator(&self) -> &[Complex64] {
        &self.num
    }

    pub fn denominator(&self) -> &[Complex64] {
        &self.den
    }
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a)
}

/// `y^d · c(1/y)` for a polynomial of degree at most `d`.
fn reversed(c: &[Complex64], d: usize, y: Complex64) -> Complex64 {
    let mut out = Complex64::new(0.0, 0.0);
    let mut pw = Complex64::new(1.0, 0.0);
    for k in (0..=d).rev() {
        if k < c.len() {
            out += c[k] * pw;
        }
        pw *= y;
    }
    out
}

impl SphereField for RationalMapSpec {
    fn eval_chart(&self, chart: Chart, y: Complex64) -> [f64; 3] {
        let (p, q) = match chart {
            Chart::South => (horner(&self.num, y), horner(&self.den, y)),
            Chart::North => (reversed(&self.num, self.degree, y), reversed(&self.den, self.degree, y)),
        };
        if p.norm() == 0.0 && q.norm() == 0.0 {
            return NORTH;
        }
        sphere_of_ratio(p, q)
    }
}

/// `z ↦ u((z − x₀)/δ)`: a rescaled copy of another map.
#[derive(Clone)]
pub struct ScaledField {
    pub inner: Arc<dyn SphereField>,
    pub center: Complex64,
    pub scale: f64,
}

impl SphereField for ScaledField {
    fn eval_chart(&self, chart: Chart, y: Complex64) -> [f64; 3] {
        match chart {
            Chart::South => self.inner.eval((y - self.center) / self.scale),
            Chart::North if y.norm() == 0.0 => self.inner.eval_chart(Chart::North, y),
            Chart::North => self.inner.eval((1.0 / y - self.center) / self.scale),
        }
    }
}

/// The two closed unit disks `|z| ≤ 1` and `|w| ≤ 1`, `w = 1/z`, glued along
/// the equator. Each chart grid carries [`GHOST_RINGS`] extra rings past the
/// unit circle so derivatives there use centred stencils; integrals only see
/// the rings inside the unit circle.
#[derive(Clone, Debug)]
pub struct SphereMesh {
    south_faces: Vec<f64>,
    north_faces: Vec<f64>,
    south: PolarGrid,
    north: PolarGrid,
}

/// Rings sampled past the equator in each chart.
pub const GHOST_RINGS: usize = 2;

fn centres(f: &[f64]) -> Vec<f64> {
    (0..f.len() - 1)
        .map(|i| if i == 0 { 0.5 * f[1] } else { 0.5 * (f[i] + f[i + 1]) })
        .collect()
}

fn with_ghosts(faces: &[f64], n_theta: usize) -> Result<PolarGrid> {
    let n = faces.len() - 1;
    let h = faces[n] - faces[n - 1];
    let mut f = faces.to_vec();
    for g in 1..=GHOST_RINGS {
        f.push(1.0 + g as f64 * h);
    }
    PolarGrid::with_origin(f.clone(), centres(&f), n_theta)
}

impl SphereMesh {
    pub fn new(south_faces: Vec<f64>, north_faces: Vec<f64>, n_theta: usize) -> Result<Self> {
        // validates the faces the same way the chain does
        RingChain::sphere(&south_faces, &north_faces, n_theta)?;
        let south = with_ghosts(&south_faces, n_theta)?;
        let north = with_ghosts(&north_faces, n_theta)?;
        Ok(Self {
            south_faces,
            north_faces,
            south,
            north,
        })
    }

    /// `n_rings` uniform rings per chart.
    pub fn uniform(n_rings: usize, n_theta: usize) -> Result<Self> {
        if n_rings < 3 {
            return Err(invalid("n_rings", "need >= 3"));
        }
        let f: Vec<f64> = (0..=n_rings).map(|i| i as f64 / n_rings as f64).collect();
        Self::new(f.clone(), f, n_theta)
    }

    /// South chart refined towards `z = 0` as in [`RingChain::sphere_graded`].
    pub fn graded(core: f64, n_core: usize, ds: f64, n_north: usize, n_theta: usize) -> Result<Self> {
        if !(core > 0.0 && core < 1.0) || n_core < 2 || !(ds > 0.0) || n_north < 3 {
            return Err(invalid("core", "need 0 < core < 1, n_core >= 2, ds > 0, n_north >= 3"));
        }
        let n_log = ((-core.ln()) / ds).ceil().max(1.0) as usize;
        let step = -core.ln() / n_log as f64;
        let mut south: Vec<f64> = (0..=n_core).map(|i| core * i as f64 / n_core as f64).collect();
        for i in 1..=n_log {
            south.push(if i == n_log { 1.0 } else { core * (step * i as f64).exp() });
        }
        let north: Vec<f64> = (0..=n_north).map(|i| i as f64 / n_north as f64).collect();
        Self::new(south, north, n_theta)
    }

    /// South chart grid, ghost rings included.
    pub fn south(&self) -> &PolarGrid {
        &self.south
    }

    /// North chart grid, ghost rings included.
    pub fn north(&self) -> &PolarGrid {
        &self.north
    }

    pub fn n_theta(&self) -> usize {
        self.south.n_theta()
    }

    pub fn n_nodes(&self) -> usize {
        self.south.n_nodes() + self.north.n_nodes()
    }

    pub fn chain(&self) -> RingChain {
        RingChain::sphere(&self.south_faces, &self.north_faces, self.n_theta()).expect("validated faces")
    }

    /// Mesh node (south block first) of a chain node.
    pub fn chain_to_mesh(&self, node: usize) -> usize {
        let n = self.n_theta();
        let (i, j) = (node / n, node % n);
        let ns = self.south_faces.len() - 1;
        if i < ns {
            node
        } else {
            let ir = ns + self.north_faces.len() - 2 - i;
            self.south.n_nodes() + ir * n + (n - j) % n
        }
    }
}

/// Where a sampled map lives.
#[derive(Clone, Debug)]
pub enum MapDomain {
    /// Planar polar grid in the coordinate `z`.
    Plane(PolarGrid),
    /// Log-polar annulus; carries a Dirichlet ring chain.
    Annulus(LogPolarGrid),
    /// Closed sphere.
    Sphere(SphereMesh),
}

/// One planar piece of a domain.
#[derive(Clone, Copy, Debug)]
pub struct Block<'a> {
    pub grid: &'a PolarGrid,
    pub chart: Chart,
    pub offset: usize,
    /// Radius range `[lo, hi)` of the rings this block owns for integrals.
    pub own: (f64, f64),
    /// Range that also drops rings with one-sided radial stencils.
    pub interior: (f64, f64),
}

fn plane_block(grid: &PolarGrid) -> Block<'_> {
    let r = grid.radii();
    let lo = if grid.touches_origin() { 0.0 } else { r[1] };
    Block {
        grid,
        chart: Chart::South,
        offset: 0,
        own: (0.0, f64::INFINITY),
        interior: (lo, r[r.len() - 1]),
    }
}

impl MapDomain {
    pub fn n_nodes(&self) -> usize {
        match self {
            MapDomain::Plane(g) => g.n_nodes(),
            MapDomain::Annulus(g) => g.n_nodes(),
            MapDomain::Sphere(m) => m.n_nodes(),
        }
    }

    pub fn blocks(&self) -> Vec<Block<'_>> {
        match self {
            MapDomain::Plane(g) => vec![plane_block(g)],
            MapDomain::Annulus(g) => vec![plane_block(g.polar())],
            MapDomain::Sphere(m) => vec![
                Block {
                    grid: m.south(),
                    chart: Chart::South,
                    offset: 0,
                    own: (0.0, 1.0),
                    interior: (0.0, 1.0),
                },
                Block {
                    grid: m.north(),
                    chart: Chart::North,
                    offset: m.south().n_nodes(),
                    own: (0.0, 1.0),
                    interior: (0.0, 1.0),
                },
            ],
        }
    }

    /// Ring chain with node order matching [`MapDomain::chain_to_node`].
    pub fn chain(&self) -> Result<RingChain> {
        match self {
            MapDomain::Plane(_) => Err(invalid("domain", "plane grids carry no ring chain")),
            MapDomain::Annulus(g) => Ok(RingChain::annulus(g)),
            MapDomain::Sphere(m) => Ok(m.chain()),
        }
    }

    pub fn chain_to_node(&self, node: usize) -> usize {
        match self {
            MapDomain::Sphere(m) => m.chain_to_mesh(node),
            _ => node,
        }
    }
}

/// Unit vectors sampled on a domain.
#[derive(Clone, Debug)]
pub struct SphereMap {
    domain: Arc<MapDomain>,
    values: Vec<[f64; 3]>,
}

/// Unit-norm tolerance enforced by every constructor.
pub const UNIT_TOL: f64 = 1e-12;

impl SphereMap {
    pub fn sample(field: &dyn SphereField, domain: Arc<MapDomain>) -> Self {
        let blocks = domain.blocks();
        let mut values = Vec::with_capacity(domain.n_nodes());
        for b in blocks {
            let g = b.grid;
            values.extend(par::map_range(g.n_nodes(), |k| field.eval_chart(b.chart, g.point(k))));
        }
        Self { domain, values }
    }

    pub fn from_values(domain: Arc<MapDomain>, values: Vec<[f64; 3]>) -> Result<Self> {
        check_len(domain.n_nodes(), values.len())?;
        let m = Self { domain, values };
        let d = m.max_norm_defect();
        if !(d <= UNIT_TOL) {
            return Err(invalid("values", format!("unit-norm defect {d:.3e}")));
        }
        Ok(m)
    }

    pub fn domain(&self) -> &MapDomain {
        &self.domain
    }

    pub fn domain_arc(&self) -> Arc<MapDomain> {
        self.domain.clone()
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.values.iter().map(|v| (dot(*v, *v).sqrt() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Values in ring-chain order.
    pub fn chain_values(&self) -> Result<Vec<[f64; 3]>> {
        let n = self.domain.chain()?.n_nodes();
        Ok((0..n)
            .map(|k| self.values[self.domain.chain_to_node(k)])
            .collect())
    }

    fn component(&self, offset: usize, n: usize, c: usize) -> Vec<f64> {
        self.values[offset..offset + n].iter().map(|v| v[c]).collect()
    }

    /// `|du|²` per node in chart coordinates.
    pub fn energy_density(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.values.len());
        for b in self.domain.blocks() {
            out.extend(dirichlet_density(b.grid, &self.values[b.offset..b.offset + b.grid.n_nodes()])?);
        }
        Ok(out)
    }

    /// `x, y, u₁, u₂, u₃` per node; `x, y` is the domain point.
    pub fn node_table(&self) -> Vec<[f64; 5]> {
        let mut out = Vec::with_capacity(self.values.len());
        for b in self.domain.blocks() {
            for k in 0..b.grid.n_nodes() {
                if b.grid.radius_of(k) >= b.own.1 {
                    continue;
                }
                let y = b.grid.point(k);
                let z = if b.chart == Chart::North { 1.0 / y } else { y };
                let v = self.values[b.offset + k];
                out.push([z.re, z.im, v[0], v[1], v[2]]);
            }
        }
        out
    }
}

/// `Σ_c |∇u_c|²` on a planar grid.
pub fn dirichlet_density(grid: &PolarGrid, values: &[[f64; 3]]) -> Result<Vec<f64>> {
    check_len(grid.n_nodes(), values.len())?;
    let mut out = vec![0.0; values.len()];
    for c in 0..3 {
        let comp: Vec<f64> = values.iter().map(|v| v[c]).collect();
        let d = grid.gradient(&comp)?.norm_sq();
        out.iter_mut().zip(d).for_each(|(o, x)| *o += x);
    }
    Ok(out)
}

pub fn rational_harmonic_map(spec: &RationalMapSpec, domain: Arc<MapDomain>) -> SphereMap {
    SphereMap::sample(spec, domain)
}

/// `½∫|du|²` by gradient quadrature; conformal invariance makes the chart
/// densities summable directly.
pub fn energy(map: &SphereMap) -> Result<f64> {
    let mut e = 0.0;
    for b in map.domain.blocks() {
        let g = b.grid;
        let d = dirichlet_density(g, &map.values[b.offset..b.offset + g.n_nodes()])?;
        e += g.integrate_band(&d, b.own.0, b.own.1)?;
    }
    Ok(0.5 * e)
}

/// `½ Σ_faces c_ab |u_a − u_b|²` on the ring chain of the domain.
pub fn chain_energy(map: &SphereMap) -> Result<f64> {
    let chain = map.domain.chain()?;
    let u = map.chain_values()?;
    let mut e = 0.0;
    chain.for_each_face(|a, b, c| {
        let d = [u[a][0] - u[b][0], u[a][1] - u[b][1], u[a][2] - u[b][2]];
        e += c * dot(d, d);
    });
    Ok(0.5 * e)
}

/// Norm used for residual fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMeasure {
    /// Plain `L²(dx)` in chart coordinates.
    Flat,
    /// `L²` in cylinder coordinates `(log r, θ)` of the scale-invariant field.
    Cylinder,
}

#[derive(Clone, Debug, Serialize)]
pub struct HopfReport {
    /// `∂_z u · ∂_z u` per node (chart coordinates).
    #[serde(skip)]
    pub field: Vec<Complex64>,
    /// Largest `|𝔥|` (times `|z|²` for the cylinder measure).
    pub max_abs: f64,
    /// Norm of `∂_z̄ 𝔥`.
    pub residual: f64,
}

fn wirtinger(g: &PolarGrid, f: &[f64], conj: bool) -> Result<Vec<Complex64>> {
    let fr = g.d_radial(f)?;
    let ft = g.d_theta(f)?;
    let sign = if conj { 1.0 } else { -1.0 };
    Ok((0..f.len())
        .map(|k| {
            let r = g.radius_of(k);
            let e = Complex64::from_polar(0.5, -sign * g.theta_of(k));
            e * Complex64::new(fr[k], sign * ft[k] / r)
        })
        .collect())
}

fn measure_weight(measure: ResidualMeasure, r: f64, power: i32) -> f64 {
    match measure {
        ResidualMeasure::Flat => 1.0,
        ResidualMeasure::Cylinder => r.powi(power),
    }
}

/// Hopf differential and the norm of its `∂_z̄` derivative.
pub fn hopf_differential(map: &SphereMap, measure: ResidualMeasure) -> Result<HopfReport> {
    let mut field = Vec::with_capacity(map.values.len());
    let mut max_abs = 0.0f64;
    let mut res2 = 0.0;
    for b in map.domain.blocks() {
        let (g, off) = (b.grid, b.offset);
        let n = g.n_nodes();
        let mut h = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..3 {
            let dz = wirtinger(g, &map.component(off, n, c), false)?;
            h.iter_mut().zip(dz).for_each(|(a, d)| *a += d * d);
        }
        let re: Vec<f64> = h.iter().map(|c| c.re).collect();
        let im: Vec<f64> = h.iter().map(|c| c.im).collect();
        let dre = wirtinger(g, &re, true)?;
        let dim = wirtinger(g, &im, true)?;
        let dens: Vec<f64> = (0..n)
            .map(|k| {
                let d = dre[k] + Complex64::new(0.0, 1.0) * dim[k];
                d.norm_sqr() * measure_weight(measure, g.radius_of(k), 4)
            })
            .collect();
        res2 += g.integrate_band(&dens, b.interior.0, b.interior.1)?;
        for (k, v) in h.iter().enumerate() {
            let r = g.radius_of(k);
            if r < b.interior.0 || r >= b.interior.1 {
                continue;
            }
            max_abs = max_abs.max(v.norm() * measure_weight(measure, g.radius_of(k), 2));
        }
        field.extend(h);
    }
    Ok(HopfReport {
        field,
        max_abs,
        residual: res2.sqrt(),
    })
}

/// Norm of `div(uⁱ∇uʲ − uʲ∇uⁱ) = uⁱΔuʲ − uʲΔuⁱ` over `i < j`.
pub fn sphere_conservation_residual(map: &SphereMap, measure: ResidualMeasure) -> Result<f64> {
    let mut res2 = 0.0;
    for b in map.domain.blocks() {
        let (g, off) = (b.grid, b.offset);
        let n = g.n_nodes();
        let comps: Vec<Vec<f64>> = (0..3).map(|c| map.component(off, n, c)).collect();
        let laps = comps
            .iter()
            .map(|c| g.laplacian_apply(c))
            .collect::<Result<Vec<_>>>()?;
        let dens: Vec<f64> = (0..n)
            .map(|k| {
                let mut s = 0.0;
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    let v = comps[i][k] * laps[j][k] - comps[j][k] * laps[i][k];
                    s += v * v;
                }
                s * measure_weight(measure, g.radius_of(k), 2)
            })
            .collect();
        res2 += g.integrate_band(&dens, b.interior.0, b.interior.1)?;
    }
    Ok(res2.sqrt())
}

/// How the neck `B_η \ B_{δ/η}` is filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlueProfile {
    /// Geodesic from the bubble's value on `|x| = δ/η` to the background's
    /// value on `|x| = η` at the same angle, smoothstep in `log r`.
    Geodesic,
    /// The bubble continues into the neck and is bent along geodesics onto
    /// the background over the outer octave `η/2 ≤ |x| ≤ η`, smoothstep in
    /// `log r`.
    BubbleTail,
}

/// Constant-scale bubble ladder glued into a background map at `x₀`.
#[derive(Clone)]
pub struct BubbleFamily {
    pub background: Arc<dyn SphereField>,
    pub bubble: Arc<dyn SphereField>,
    pub center: Complex64,
    pub ladder: Vec<f64>,
    pub eta: f64,
    pub profile: GlueProfile,
}

impl BubbleFamily {
    pub fn new(
        background: Arc<dyn SphereField>,
        bubble: Arc<dyn SphereField>,
        center: Complex64,
        ladder: Vec<f64>,
        eta: f64,
        profile: GlueProfile,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(invalid("eta", format!("{eta} not in (0,1)")));
        }
        if ladder.is_empty() {
            return Err(invalid("ladder", "empty"));
        }
        for (i, &d) in ladder.iter().enumerate() {
            if !(d > 0.0 && d <= eta * eta) {
                return Err(invalid("ladder", format!("δ = {d} must lie in (0, η²]")));
            }
            if i > 0 && d >= ladder[i - 1] {
                return Err(invalid("ladder", "scales must decrease"));
            }
        }
        if center.norm() + eta >= 1.0 {
            return Err(invalid("center", "B_η(x₀) must sit inside the south chart"));
        }
        Ok(Self {
            background,
            bubble,
            center,
            ladder,
            eta,
            profile,
        })
    }

    /// Constant north-pole background with the identity bubble at the origin.
    pub fn standard(ladder: Vec<f64>, eta: f64, profile: GlueProfile) -> Result<Self> {
        Self::new(
            Arc::new(ConstantMap(NORTH)),
            Arc::new(RationalMapSpec::identity()),
            Complex64::new(0.0, 0.0),
            ladder,
            eta,
            profile,
        )
    }
}

/// Glued map `u_k`.
#[derive(Clone)]
pub struct GluedMap {
    background: Arc<dyn SphereField>,
    bubble: Arc<dyn SphereField>,
    pub center: Complex64,
    pub eta: f64,
    pub delta: f64,
    pub profile: GlueProfile,
}

const ANTIPODAL_TOL: f64 = 1e-9;

impl GluedMap {
    fn inner_radius(&self) -> f64 {
        self.delta / self.eta
    }

    fn bubble_at(&self, x: Complex64) -> [f64; 3] {
        self.bubble.eval(x / self.delta)
    }

    fn neck(&self, z: Complex64, x: Complex64, r: f64) -> [f64; 3] {
        let (eta, rin) = (self.eta, self.inner_radius());
        let th = x.arg();
        match self.profile {
            GlueProfile::Geodesic => {
                let p = self.bubble.eval(Complex64::from_polar(1.0 / eta, th));
                let q = self.background.eval(self.center + Complex64::from_polar(eta, th));
                let t = (r / rin).ln() / (eta / rin).ln();
                slerp(p, q, crate::grid::smoothstep(t))
            }
            GlueProfile::BubbleTail => {
                let lo = (0.5 * eta).max(rin);
                if r <= lo {
                    return self.bubble_at(x);
                }
                let t = (r / lo).ln() / (eta / lo).ln();
                slerp(self.bubble_at(x), self.background.eval(z), crate::grid::smoothstep(t))
            }
        }
    }

    fn check_antipodal(&self) -> Result<()> {
        let x0 = self.bubble.eval_chart(Chart::North, Complex64::new(0.0, 0.0));
        let b0 = self.background.eval(self.center);
        if dot(x0, b0) <= -1.0 + ANTIPODAL_TOL {
            return Err(Error::Antipodal(format!("bubble at infinity {x0:?} vs background {b0:?}")));
        }
        let (eta, rin) = (self.eta, self.inner_radius());
        for j in 0..256 {
            let th = 2.0 * PI * j as f64 / 256.0;
            let (p, q) = match self.profile {
                GlueProfile::Geodesic => (
                    self.bubble.eval(Complex64::from_polar(1.0 / eta, th)),
                    self.background.eval(self.center + Complex64::from_polar(eta, th)),
                ),
                GlueProfile::BubbleTail => {
                    let x = Complex64::from_polar((0.5 * eta).max(rin), th);
                    (self.bubble_at(x), self.background.eval(self.center + x))
                }
            };
            if dot(p, q) <= -1.0 + ANTIPODAL_TOL {
                return Err(Error::Antipodal(format!("boundary values antipodal at θ = {th:.4}")));
            }
        }
        Ok(())
    }
}

impl SphereField for GluedMap {
    fn eval_chart(&self, chart: Chart, y: Complex64) -> [f64; 3] {
        if chart == Chart::North && y.norm() == 0.0 {
            return self.background.eval_chart(Chart::North, y);
        }
        let z = if chart == Chart::North { 1.0 / y } else { y };
        let x = z - self.center;
        let r = x.norm();
        if r >= self.eta {
            self.background.eval_chart(chart, y)
        } else if r <= self.inner_radius() {
            self.bubble_at(x)
        } else {
            self.neck(z, x, r)
        }
    }
}

/// Map `u_k` of the ladder entry `k`.
pub fn glue_bubble(family: &BubbleFamily, k: usize) -> Result<GluedMap> {
    let delta = *family
        .ladder
        .get(k)
        .ok_or_else(|| invalid("k", format!("{k} beyond ladder of length {}", family.ladder.len())))?;
    let m = GluedMap {
        background: family.background.clone(),
        bubble: family.bubble.clone(),
        center: family.center,
        eta: family.eta,
        delta,
        profile: family.profile,
    };
    m.check_antipodal()?;
    Ok(m)
}

/// Per-ring resolution of the neck diagnostics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NeckResolution {
    /// Log-radial nodes per octave.
    pub per_octave: usize,
    pub n_theta: usize,
}

impl Default for NeckResolution {
    fn default() -> Self {
        Self {
            per_octave: 32,
            n_theta: 64,
        }
    }
}

fn sample_annulus(field: &dyn SphereField, center: Complex64, grid: &PolarGrid) -> Vec<[f64; 3]> {
    par::map_range(grid.n_nodes(), |k| field.eval(center + grid.point(k)))
}

fn annulus_grid(inner: f64, outer: f64, res: NeckResolution) -> Result<LogPolarGrid> {
    let n_s = (((outer / inner).log2() * res.per_octave as f64).ceil() as usize).max(4);
    LogPolarGrid::from_radii(inner, outer, n_s, res.n_theta)
}

/// `∫_{B_outer(x₀) \ B_inner(x₀)} |du|²`.
pub fn ring_energy(
    field: &dyn SphereField,
    center: Complex64,
    inner: f64,
    outer: f64,
    res: NeckResolution,
) -> Result<f64> {
    let g = annulus_grid(inner, outer, res)?;
    g.integrate(&dirichlet_density(&g, &sample_annulus(field, center, &g))?)
}

#[derive(Clone, Debug, Serialize)]
pub struct NeckProfile {
    /// Inner radii `ρ` of the dyadic rings `B_{2ρ} \ B_ρ`.
    pub radii: Vec<f64>,
    pub energies: Vec<f64>,
    pub sup: f64,
}

fn check_neck(eta: f64, delta: f64) -> Result<()> {
    if !(eta > 0.0 && delta > 0.0 && delta <= eta * eta) {
        return Err(invalid("eta/delta", format!("need 0 < δ ≤ η², got η = {eta}, δ = {delta}")));
    }
    Ok(())
}

/// Dyadic ring energies `ρ = 2ʲδ/η` while `2ρ ≤ η`.
pub fn neck_energy_profile(
    field: &dyn SphereField,
    center: Complex64,
    eta: f64,
    delta: f64,
    res: NeckResolution,
) -> Result<NeckProfile> {
    check_neck(eta, delta)?;
    let mut radii = Vec::new();
    let mut rho = delta / eta;
    while 2.0 * rho <= eta * (1.0 + 1e-12) {
        radii.push(rho);
        rho *= 2.0;
    }
    let energies = radii
        .iter()
        .map(|&r| ring_energy(field, center, r, 2.0 * r, res))
        .collect::<Result<Vec<_>>>()?;
    let sup = energies.iter().copied().fold(0.0, f64::max);
    Ok(NeckProfile { radii, energies, sup })
}

/// `Λ = ∫_{δ/η}^{η} (2π)⁻¹ ∫ |∂_r u| dθ dr`.
pub fn average_length(
    field: &dyn SphereField,
    center: Complex64,
    eta: f64,
    delta: f64,
    res: NeckResolution,
) -> Result<f64> {
    check_neck(eta, delta)?;
    if delta == eta * eta {
        return Ok(0.0);
    }
    let g = annulus_grid(delta / eta, eta, res)?;
    let u = sample_annulus(field, center, &g);
    let mut d2 = vec![0.0; u.len()];
    for c in 0..3 {
        let comp: Vec<f64> = u.iter().map(|v| v[c]).collect();
        for (a, b) in d2.iter_mut().zip(g.d_radial(&comp)?) {
            *a += b * b;
        }
    }
    // |∂_r u| dr = |∂_r u| r ds
    let ds = g.ds();
    let nt = g.n_theta() as f64;
    Ok((0..u.len()).map(|k| d2[k].sqrt() * g.radius_of(k)).sum::<f64>() * ds / nt)
}

#[derive(Clone, Debug, Serialize)]
pub struct PointwiseReport {
    pub sup: f64,
    pub argmax_radius: f64,
    /// `∫_{A(2η,δ)} |du|²`.
    pub energy_outer: f64,
    pub log_term: f64,
}

/// `sup |x|²|∇u|² / ([(|x|/η)^β + (δ/(η|x|))^β] E + c/log²(η²/δ))` over
/// the neck, with `E = ∫_{A(2η,δ)} |du|²`.
pub fn pointwise_bound_check(
    field: &dyn SphereField,
    center: Complex64,
    eta: f64,
    delta: f64,
    beta: f64,
    c: f64,
    res: NeckResolution,
) -> Result<PointwiseReport> {
    check_neck(eta, delta)?;
    if delta == eta * eta {
        return Err(invalid("delta", "empty neck"));
    }
    if !(beta > 0.0 && beta < 1.0) || !(c >= 0.0) {
        return Err(invalid("beta", format!("need β ∈ (0,1), c ≥ 0; got {beta}, {c}")));
    }
    let energy_outer = ring_energy(field, center, delta / (2.0 * eta), 2.0 * eta, res)?;
    let log_term = c / (eta * eta / delta).ln().powi(2);
    let g = annulus_grid(delta / eta, eta, res)?;
    let dens = dirichlet_density(&g, &sample_annulus(field, center, &g))?;
    let (mut sup, mut arg) = (0.0f64, delta / eta);
    for (k, d) in dens.iter().enumerate() {
        let r = g.radius_of(k);
        let den = ((r / eta).powf(beta) + (delta / (eta * r)).powf(beta)) * energy_outer + log_term;
        let v = if r * r * d <= 0.0 { 0.0 } else { r * r * d / den };
        if v > sup {
            sup = v;
            arg = r;
        }
    }
    Ok(PointwiseReport {
        sup,
        argmax_radius: arg,
        energy_outer,
        log_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sphere(n: usize, nt: usize) -> Arc<MapDomain> {
        Arc::new(MapDomain::Sphere(SphereMesh::uniform(n, nt).unwrap()))
    }

    #[test]
    fn degree_energy_law() {
        let dom = sphere(96, 96);
        for d in 1..=3 {
            let m = rational_harmonic_map(&RationalMapSpec::monomial(d), dom.clone());
            assert!(m.max_norm_defect() <= UNIT_TOL);
            let e = energy(&m).unwrap();
            let ec = chain_energy(&m).unwrap();
            let target = 4.0 * PI * d as f64;
            assert!((e / target - 1.0).abs() < 0.01, "d={d} e={e}");
            assert!((ec / target - 1.0).abs() < 0.01, "d={d} chain e={ec}");
        }
        let m = rational_harmonic_map(&RationalMapSpec::constant(c(1.0, 0.0)), dom);
        assert!(energy(&m).unwrap() < 1e-20);
    }

    #[test]
    fn mobius_map_with_pole_inside() {
        // (z − 0.3)/(z + 0.5i) has a pole in the south chart
        let spec = RationalMapSpec::new(vec![c(-0.3, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.5), c(1.0, 0.0)]).unwrap();
        assert_eq!(spec.degree(), 1);
        let m = rational_harmonic_map(&spec, sphere(96, 96));
        assert!(m.values().iter().all(|v| v.iter().all(|x| x.is_finite())));
        assert!((energy(&m).unwrap() / (4.0 * PI) - 1.0).abs() < 0.02);
    }

    #[test]
    fn common_roots_rejected() {
        // (z − 1)(z + 2) / (z − 1)
        let num = vec![c(-2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let den = vec![c(-1.0, 0.0), c(1.0, 0.0)];
        assert!(RationalMapSpec::new(num, den).is_err());
        assert!(RationalMapSpec::new(vec![c(0.0, 0.0)], vec![c(0.0, 0.0)]).is_err());
        let s = RationalMapSpec::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(s.degree(), 2);
    }

    #[test]
    fn hopf_and_conservation_small_for_rational_maps() {
        let spec = RationalMapSpec::monomial(2);
        let mut rows = Vec::new();
        for n in [64, 128, 256] {
            let g = crate::grid::DiskGrid::new(0.9, n, 2 * n).unwrap();
            let m = rational_harmonic_map(&spec, Arc::new(MapDomain::Plane(g.polar().clone())));
            let h = hopf_differential(&m, ResidualMeasure::Flat).unwrap();
            let r = sphere_conservation_residual(&m, ResidualMeasure::Flat).unwrap();
            rows.push((h.max_abs, h.residual, r));
        }
        assert!(rows[1].2 < 1e-2 && rows[1].0 < 1e-3);
        for w in rows.windows(2) {
            // second order in h for 𝔥 and the conservation law
            assert!(w[0].0 / w[1].0 > 3.5 && w[0].2 / w[1].2 > 3.5, "{rows:?}");
            assert!(w[1].1 < w[0].1);
        }
        let g = crate::grid::DiskGrid::new(0.9, 64, 128).unwrap();
        let m = SphereMap::sample(&ConstantMap(SOUTH), Arc::new(MapDomain::Plane(g.polar().clone())));
        assert!(hopf_differential(&m, ResidualMeasure::Flat).unwrap().max_abs < 1e-14);
        assert!(sphere_conservation_residual(&m, ResidualMeasure::Flat).unwrap() < 1e-12);
    }

    struct Tilted;
    impl SphereField for Tilted {
        fn eval_chart(&self, chart: Chart, y: Complex64) -> [f64; 3] {
            let z = if chart == Chart::North { 1.0 / y } else { y };
            normalize([1.0, z.re, z.im])
        }
    }

    #[test]
    fn non_harmonic_reference_has_order_one_residual() {
        let mut vals = Vec::new();
        for n in [32, 64] {
            let g = crate::grid::DiskGrid::new(1.0, n, 2 * n).unwrap();
            let m = SphereMap::sample(&Tilted, Arc::new(MapDomain::Plane(g.polar().clone())));
            vals.push(sphere_conservation_residual(&m, ResidualMeasure::Flat).unwrap());
        }
        assert!(vals[0] > 0.1 && (vals[0] / vals[1] - 1.0).abs() < 0.05, "{vals:?}");
    }

    #[test]
    fn glued_standard_family() {
        for profile in [GlueProfile::Geodesic, GlueProfile::BubbleTail] {
            let fam = BubbleFamily::standard(vec![1e-2, 1e-3], 0.2, profile).unwrap();
            let u = glue_bubble(&fam, 1).unwrap();
            assert_eq!(u.eval(c(0.5, 0.0)), NORTH);
            let x = c(1e-5, 2e-5);
            let v = RationalMapSpec::identity().eval(x / 1e-3);
            assert_eq!(u.eval(x), v);
            let w = u.eval(c(0.05, 0.02));
            assert!((dot(w, w) - 1.0).abs() < 1e-12);
        }
        // δ = η²: no neck
        let fam = BubbleFamily::standard(vec![0.04], 0.2, GlueProfile::Geodesic).unwrap();
        let u = glue_bubble(&fam, 0).unwrap();
        assert_eq!(u.eval(c(0.1999, 0.0)), RationalMapSpec::identity().eval(c(0.1999 / 0.04, 0.0)));
        assert_eq!(u.eval(c(0.2001, 0.0)), NORTH);
    }

    #[test]
    fn antipodal_gluing_rejected() {
        let fam = BubbleFamily::new(
            Arc::new(ConstantMap(SOUTH)),
            Arc::new(RationalMapSpec::identity()),
            c(0.0, 0.0),
            vec![1e-3],
            0.2,
            GlueProfile::Geodesic,
        )
        .unwrap();
        assert!(matches!(glue_bubble(&fam, 0), Err(Error::Antipodal(_))));
    }

    #[test]
    fn scaled_bubble_ring_energies() {
        let f = ScaledField {
            inner: Arc::new(RationalMapSpec::identity()),
            center: c(0.0, 0.0),
            scale: 1.0,
        };
        for rho in [0.25, 1.0, 3.0] {
            let e = ring_energy(&f, c(0.0, 0.0), rho, 2.0 * rho, NeckResolution::default()).unwrap();
            let exact = 8.0 * PI * (1.0 / (1.0 + rho * rho) - 1.0 / (1.0 + 4.0 * rho * rho));
            assert!((e / exact - 1.0).abs() < 1e-3, "rho={rho}: {e} vs {exact}");
        }
        let p = neck_energy_profile(&ConstantMap(NORTH), c(0.0, 0.0), 0.1, 1e-4, NeckResolution::default()).unwrap();
        assert!(p.energies.iter().all(|e| *e == 0.0) && p.sup == 0.0);
        // a pure bubble is brightest at the inner edge of the neck
        let f = ScaledField {
            inner: Arc::new(RationalMapSpec::identity()),
            center: c(0.0, 0.0),
            scale: 1e-4,
        };
        let r = pointwise_bound_check(&f, c(0.0, 0.0), 0.1, 1e-4, 0.5, 1.0, NeckResolution::default()).unwrap();
        assert!(r.argmax_radius < 2.0 * 1e-3);
    }

    struct GeodesicNeck {
        inner: f64,
        outer: f64,
        length: f64,
    }
    impl SphereField for GeodesicNeck {
        fn eval_chart(&self, chart: Chart, y: Complex64) -> [f64; 3] {
            let z = if chart == Chart::North { 1.0 / y } else { y };
            let t = ((z.norm() / self.inner).ln() / (self.outer / self.inner).ln()).clamp(0.0, 1.0);
            let a = self.length * t;
            [a.sin(), 0.0, a.cos()]
        }
    }

    #[test]
    fn average_length_of_geodesic_neck() {
        let f = GeodesicNeck {
            inner: 1e-3,
            outer: 0.1,
            length: 1.3,
        };
        let l = average_length(&f, c(0.0, 0.0), 0.1, 1e-4, NeckResolution::default()).unwrap();
        assert!((l / 1.3 - 1.0).abs() < 0.02, "{l}");
        assert_eq!(average_length(&ConstantMap(NORTH), c(0.0, 0.0), 0.1, 1e-4, NeckResolution::default()).unwrap(), 0.0);
    }

    #[test]
    fn chain_order_matches_mesh() {
        let mesh = SphereMesh::uniform(8, 8).unwrap();
        let chain = mesh.chain();
        let dom = MapDomain::Sphere(mesh.clone());
        for k in 0..chain.n_nodes() {
            let z = chain.point(k);
            let m = dom.chain_to_node(k);
            let (g, chart, off) = if m < mesh.south().n_nodes() {
                (mesh.south(), Chart::South, 0)
            } else {
                (mesh.north(), Chart::North, mesh.south().n_nodes())
            };
            let y = g.point(m - off);
            let zz = if chart == Chart::North { 1.0 / y } else { y };
            assert!((zz - z).norm() < 1e-12 * z.norm().max(1.0));
        }
    }
}

//! Experiment drivers that tie the modules together: index and nullity along
//! a bubbling ladder, the neck spectral suite and the weighted Wente sweep.
//!
//! Every driver returns plain serializable rows; formatting and file output
//! live in the command-line front end.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::DiskGrid;
use crate::linalg::KrylovOptions;
use crate::maps::{
    average_length, chain_energy, energy, glue_bubble, hopf_differential, neck_energy_profile,
    pointwise_bound_check, sphere_conservation_residual, BubbleFamily, GlueProfile, MapDomain,
    NeckResolution, ResidualMeasure, SphereField, SphereMap, SphereMesh,
};
use crate::par;
use crate::spectral::{
    annulus_hardy_eigen, assemble_jacobi, bubble_mesh, neck_positivity_min, neck_weight,
    solve_weighted_eigen, BackgroundLimitWeight, BubbleLimitWeight, HardyEigen,
    HardyVariant, NeckPositivity, NeckSpectrumOptions, SolveOptions, SpectrumReport, ZeroTolerance,
};
use crate::wente::{dyadic_cutoff, weighted_wente_ratio};

/// Sphere mesh graded towards the bubble.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BubbleMeshSpec {
    /// Log-width of the graded rings.
    pub ds: f64,
    pub n_north: usize,
    pub n_theta: usize,
}

impl Default for BubbleMeshSpec {
    fn default() -> Self {
        Self {
            ds: 0.1,
            n_north: 32,
            n_theta: 64,
        }
    }
}

/// Uniform two-chart mesh for the limit maps.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitMeshSpec {
    pub n_rings: usize,
    pub n_theta: usize,
}

impl Default for LimitMeshSpec {
    fn default() -> Self {
        Self {
            n_rings: 64,
            n_theta: 64,
        }
    }
}

#[derive(Clone)]
pub struct IndexStabilityConfig {
    pub family: BubbleFamily,
    pub beta: f64,
    /// Mesh of the eigenproblems.
    pub mesh: BubbleMeshSpec,
    /// Finer mesh for energies and harmonicity residuals.
    pub diagnostic_mesh: BubbleMeshSpec,
    pub limit_mesh: LimitMeshSpec,
    /// Eigenpairs computed per problem.
    pub count: usize,
    pub tolerance: ZeroTolerance,
    pub neck: NeckSpectrumOptions,
    pub neck_resolution: NeckResolution,
    pub krylov: KrylovOptions,
}

impl IndexStabilityConfig {
    /// Constant north background, identity bubble, `β = ½`.
    pub fn standard(ladder: Vec<f64>, eta: f64, profile: GlueProfile) -> Result<Self> {
        Ok(Self {
            family: BubbleFamily::standard(ladder, eta, profile)?,
            beta: 0.5,
            mesh: BubbleMeshSpec::default(),
            diagnostic_mesh: BubbleMeshSpec {
                ds: 0.025,
                n_north: 64,
                n_theta: 128,
            },
            limit_mesh: LimitMeshSpec::default(),
            count: 20,
            tolerance: ZeroTolerance::default(),
            neck: NeckSpectrumOptions::default(),
            neck_resolution: NeckResolution::default(),
            krylov: KrylovOptions::default(),
        })
    }
}

/// Counts and diagnostics of one ladder entry `u_k`.
#[derive(Clone, Debug, Serialize)]
pub struct ScaleRow {
    pub delta: f64,
    /// `½∫|du|²` by quadrature and by the ring-chain sum.
    pub energy: f64,
    pub chain_energy: f64,
    pub index: usize,
    pub nullity: usize,
    /// Counts below `−τ` and below `τ` from the factorization inertia.
    pub inertia: (usize, usize),
    pub tau: f64,
    pub eigenvalues: Vec<f64>,
    pub max_residual: f64,
    /// `sup |du|²/ω_{η,k}` with the lumped potential.
    pub mu: f64,
    /// `None` when the neck is empty (`δ = η²`).
    pub neck_lambda0: Option<f64>,
    pub neck_sup: f64,
    pub average_length: f64,
    pub hopf_residual: f64,
    pub hopf_max: f64,
    pub conservation_residual: f64,
    /// Weight used for the counts.
    pub weight: &'static str,
    pub dofs: usize,
}

impl ScaleRow {
    pub fn ind_plus_null(&self) -> usize {
        self.index + self.nullity
    }
}

/// Counts of a limit map.
#[derive(Clone, Debug, Serialize)]
pub struct LimitRow {
    pub name: &'static str,
    pub index: usize,
    pub nullity: usize,
    pub inertia: (usize, usize),
    pub tau: f64,
    pub eigenvalues: Vec<f64>,
    pub max_residual: f64,
    pub mu: f64,
}

impl LimitRow {
    fn from_report(name: &'static str, r: &SpectrumReport, mu: f64) -> Self {
        Self {
            name,
            index: r.index,
            nullity: r.nullity,
            inertia: r.inertia,
            tau: r.tau,
            eigenvalues: r.eigenvalues.clone(),
            max_residual: r.max_residual(),
            mu,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexStabilityRun {
    pub eta: f64,
    pub beta: f64,
    pub profile: GlueProfile,
    pub ladder: Vec<f64>,
    pub rows: Vec<ScaleRow>,
    /// `u_∞` against `ω_{η,∞}`.
    pub background: LimitRow,
    /// `ṽ_∞` against `ω̂_{η,∞}`.
    pub bubble: LimitRow,
}

impl IndexStabilityRun {
    /// `Ind + Null(u_∞) + Ind + Null(ṽ_∞)`.
    pub fn limit_budget(&self) -> usize {
        self.background.index + self.background.nullity + self.bubble.index + self.bubble.nullity
    }

    /// `Ind(u_∞) + Ind(ṽ_∞)`.
    pub fn limit_index(&self) -> usize {
        self.background.index + self.bubble.index
    }

    pub fn finest(&self) -> &ScaleRow {
        self.rows.last().expect("ladders are non-empty")
    }

    /// `Ind + Null(u_k) ≤` the limit budget at the finest scale.
    pub fn upper_holds(&self) -> bool {
        self.finest().ind_plus_null() <= self.limit_budget()
    }

    /// `Ind(u_∞) + Ind(ṽ_∞) ≤ Ind(u_k)` at the finest scale.
    pub fn lower_holds(&self) -> bool {
        self.limit_index() <= self.finest().index
    }
}

fn solve(form: &crate::spectral::WeightedQuadraticForm, cfg: &IndexStabilityConfig) -> Result<SpectrumReport> {
    let count = cfg.count.min(form.n_dofs());
    solve_weighted_eigen(
        form,
        count,
        &SolveOptions {
            shift: None,
            krylov: cfg.krylov.clone(),
            tolerance: cfg.tolerance,
        },
    )
}

fn scale_row(cfg: &IndexStabilityConfig, k: usize) -> Result<ScaleRow> {
    let fam = &cfg.family;
    let eta = fam.eta;
    let delta = fam.ladder[k];
    let glued = Arc::new(glue_bubble(fam, k)?);
    let mesh = bubble_mesh(delta, cfg.mesh.ds, cfg.mesh.n_north, cfg.mesh.n_theta)?;
    let map = SphereMap::sample(glued.as_ref(), Arc::new(MapDomain::Sphere(mesh)));
    let empty_neck = delta >= eta * eta * (1.0 - 1e-9);
    let (form, weight) = if empty_neck {
        (assemble_jacobi(&map)?, "round")
    } else {
        let w = neck_weight(eta, delta, cfg.beta)?;
        (
            assemble_jacobi(&map)?.with_weight(move |z| w.sphere_density(z))?,
            "neck",
        )
    };
    let report = solve(&form, cfg)?;
    let center = fam.center;
    let field: Arc<dyn SphereField> = glued.clone();
    let neck_lambda0 = if empty_neck {
        None
    } else {
        Some(neck_positivity_min(field, center, eta, delta, cfg.beta, &cfg.neck)?.lambda0)
    };
    let (neck_sup, lambda) = if empty_neck {
        (0.0, 0.0)
    } else {
        (
            neck_energy_profile(glued.as_ref(), center, eta, delta, cfg.neck_resolution)?.sup,
            average_length(glued.as_ref(), center, eta, delta, cfg.neck_resolution)?,
        )
    };
    let dm = cfg.diagnostic_mesh;
    let fine = SphereMap::sample(
        glued.as_ref(),
        Arc::new(MapDomain::Sphere(bubble_mesh(delta, dm.ds, dm.n_north, dm.n_theta)?)),
    );
    let hopf = hopf_differential(&fine, ResidualMeasure::Cylinder)?;
    Ok(ScaleRow {
        delta,
        energy: energy(&fine)?,
        chain_energy: chain_energy(&fine)?,
        index: report.index,
        nullity: report.nullity,
        inertia: report.inertia,
        tau: report.tau,
        max_residual: report.max_residual(),
        eigenvalues: report.eigenvalues,
        mu: form.potential_ratio(),
        neck_lambda0,
        neck_sup,
        average_length: lambda,
        hopf_residual: hopf.residual,
        hopf_max: hopf.max_abs,
        conservation_residual: sphere_conservation_residual(&fine, ResidualMeasure::Cylinder)?,
        weight,
        dofs: report.dofs,
    })
}

/// Counts of the background and the bubble against their limit weights.
pub fn limit_rows(cfg: &IndexStabilityConfig) -> Result<(LimitRow, LimitRow)> {
    let fam = &cfg.family;
    let mesh = SphereMesh::uniform(cfg.limit_mesh.n_rings, cfg.limit_mesh.n_theta)?;
    let domain = Arc::new(MapDomain::Sphere(mesh));

    let bg = SphereMap::sample(fam.background.as_ref(), domain.clone());
    let w = BackgroundLimitWeight::new(fam.eta, cfg.beta)?;
    let form = assemble_jacobi(&bg)?.with_weight(move |z| w.sphere_density(z))?;
    let r = solve(&form, cfg)?;
    let background = LimitRow::from_report("background", &r, form.potential_ratio());

    let bub = SphereMap::sample(fam.bubble.as_ref(), domain);
    let w = BubbleLimitWeight::new(fam.eta, cfg.beta)?;
    let form = assemble_jacobi(&bub)?.with_weight(move |z| w.eval(z.norm()))?;
    let r = solve(&form, cfg)?;
    let bubble = LimitRow::from_report("bubble", &r, form.potential_ratio());
    Ok((background, bubble))
}

/// Glues, assembles and counts every ladder entry, then the two limits.
pub fn run_index_stability(cfg: &IndexStabilityConfig) -> Result<IndexStabilityRun> {
    let fam = &cfg.family;
    if fam.center.norm() > 0.0 {
        return Err(invalid("center", "meshes are refined at the origin; put the bubble at 0"));
    }
    if cfg.count == 0 {
        return Err(invalid("count", "need at least one eigenpair"));
    }
    let ks: Vec<usize> = (0..fam.ladder.len()).collect();
    let rows = par::map_slice(&ks, |&k| scale_row(cfg, k))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (background, bubble) = limit_rows(cfg)?;
    Ok(IndexStabilityRun {
        eta: fam.eta,
        beta: cfg.beta,
        profile: fam.profile,
        ladder: fam.ladder.clone(),
        rows,
        background,
        bubble,
    })
}

/// Parameter grid of the neck suite.
#[derive(Clone, Debug)]
pub struct NeckSuiteConfig {
    /// `log(η²/δ)` values for the hardy column at `η = 1`.
    pub hardy_moduli: Vec<f64>,
    pub etas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Radial nodes of the axisymmetric solves.
    pub n_s: usize,
    /// Also compute `λ₀` and the pointwise sup for the standard glued map.
    pub glued: bool,
    pub profile: GlueProfile,
    pub pointwise_c: f64,
    pub neck: NeckSpectrumOptions,
    pub resolution: NeckResolution,
}

impl Default for NeckSuiteConfig {
    fn default() -> Self {
        Self {
            hardy_moduli: vec![4.0, 8.0, 16.0],
            etas: vec![0.1],
            deltas: vec![1e-3, 1e-5, 1e-7, 1e-9],
            betas: vec![0.5],
            n_s: 512,
            glued: false,
            profile: GlueProfile::BubbleTail,
            pointwise_c: 1.0,
            neck: NeckSpectrumOptions::default(),
            resolution: NeckResolution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PointwiseRow {
    pub eta: f64,
    pub delta: f64,
    pub beta: f64,
    pub sup: f64,
    pub argmax_radius: f64,
}

/// Spread `max/min` of the `ω_{η,k}` eigenvalue over the δ ladder.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeightSpread {
    pub eta: f64,
    pub beta: f64,
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NeckSuiteReport {
    pub hardy: Vec<HardyEigen>,
    /// Neck, inner and outer variants over the `(η, δ, β)` grid.
    pub weighted: Vec<HardyEigen>,
    pub spreads: Vec<WeightSpread>,
    pub positivity: Vec<NeckPositivity>,
    pub pointwise: Vec<PointwiseRow>,
}

pub fn run_neck_suite(cfg: &NeckSuiteConfig) -> Result<NeckSuiteReport> {
    let hardy = par::map_slice(&cfg.hardy_moduli, |&l| {
        annulus_hardy_eigen(1.0, (-l).exp(), HardyVariant::Hardy, 0.5, cfg.n_s)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    for &eta in &cfg.etas {
        for &beta in &cfg.betas {
            for &delta in &cfg.deltas {
                points.push((eta, beta, delta));
            }
        }
    }
    let variants = [HardyVariant::Neck, HardyVariant::Inner, HardyVariant::Outer];
    let weighted = par::map_slice(&points, |&(eta, beta, delta)| {
        variants
            .iter()
            .map(|&v| annulus_hardy_eigen(eta, delta, v, beta, cfg.n_s))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?
    .concat();

    let mut spreads = Vec::new();
    for &eta in &cfg.etas {
        for &beta in &cfg.betas {
            let vals: Vec<f64> = weighted
                .iter()
                .filter(|h| h.variant == HardyVariant::Neck && h.eta == eta && h.beta == beta)
                .map(|h| h.numeric)
                .collect();
            if vals.is_empty() {
                continue;
            }
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(0.0, f64::max);
            spreads.push(WeightSpread {
                eta,
                beta,
                min,
                max,
                ratio: max / min,
            });
        }
    }

    let (mut positivity, mut pointwise) = (Vec::new(), Vec::new());
    if cfg.glued {
        let origin = Complex64::new(0.0, 0.0);
        for &(eta, beta, delta) in &points {
            let fam = BubbleFamily::standard(vec![delta], eta, cfg.profile)?;
            let glued: Arc<dyn SphereField> = Arc::new(glue_bubble(&fam, 0)?);
            positivity.push(neck_positivity_min(glued.clone(), origin, eta, delta, beta, &cfg.neck)?);
            let p = pointwise_bound_check(glued.as_ref(), origin, eta, delta, beta, cfg.pointwise_c, cfg.resolution)?;
            pointwise.push(PointwiseRow {
                eta,
                delta,
                beta,
                sup: p.sup,
                argmax_radius: p.argmax_radius,
            });
        }
    }
    Ok(NeckSuiteReport {
        hardy,
        weighted,
        spreads,
        positivity,
        pointwise,
    })
}

/// Graded disk used by the Wente sweep.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiskSpec {
    pub core: f64,
    pub n_core: usize,
    pub ds: f64,
    pub n_theta: usize,
}

impl Default for DiskSpec {
    fn default() -> Self {
        Self {
            core: 1.0 / 1024.0,
            n_core: 64,
            ds: 0.005,
            n_theta: 256,
        }
    }
}

impl DiskSpec {
    /// Halves `ds` and doubles both node counts.
    pub fn refined(&self) -> Self {
        Self {
            core: self.core,
            n_core: 2 * self.n_core,
            ds: 0.5 * self.ds,
            n_theta: 2 * self.n_theta,
        }
    }

    pub fn build(&self) -> Result<DiskGrid> {
        DiskGrid::graded(1.0, self.core, self.n_core, self.ds, self.n_theta)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WenteSweepConfig {
    pub modes: Vec<usize>,
    /// Support scales `2^{-k}`.
    pub scale_exponents: Vec<u32>,
    pub disk: DiskSpec,
}

impl Default for WenteSweepConfig {
    fn default() -> Self {
        Self {
            modes: (1..=16).collect(),
            scale_exponents: (2..=7).collect(),
            disk: DiskSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WenteRow {
    pub mode: usize,
    pub scale: f64,
    pub ratio: f64,
    pub numerator: f64,
    pub weighted_b: f64,
    pub energy_a: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WenteSweep {
    pub disk: DiskSpec,
    pub rows: Vec<WenteRow>,
}

impl WenteSweep {
    /// `max/min` of the ratio over the sweep.
    pub fn spread(&self) -> f64 {
        let max = self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let min = self.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// The pair `a + ib = ψ(|x|/ε)(x/ε)^m` with `ψ` the dyadic cutoff.
pub fn sweep_pair(grid: &DiskGrid, mode: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let m = mode as f64;
    let amp = |r: f64| dyadic_cutoff(r / eps) * (r / eps).powi(mode as i32);
    let a = grid.sample(|r, t| amp(r) * (m * t).cos());
    let b = grid.sample(|r, t| amp(r) * (m * t).sin());
    (a, b)
}

pub fn wente_sweep(cfg: &WenteSweepConfig) -> Result<WenteSweep> {
    if cfg.modes.contains(&0) {
        return Err(invalid("modes", "angular modes start at 1"));
    }
    let grid = cfg.disk.build()?;
    let mut cases = Vec::new();
    for &m in &cfg.modes {
        for &k in &cfg.scale_exponents {
            cases.push((m, 0.5f64.powi(k as i32)));
        }
    }
    let rows = par::map_slice(&cases, |&(mode, eps)| {
        let (a, b) = sweep_pair(&grid, mode, eps);
        weighted_wente_ratio(&grid, &a, &b).map(|w| WenteRow {
            mode,
            scale: eps,
            ratio: w.ratio,
            numerator: w.numerator,
            weighted_b: w.weighted_b,
            energy_a: w.energy_a,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(WenteSweep { disk: cfg.disk, rows })
}

/// Largest relative change of a ratio between a sweep and its refinement.
pub fn refinement_change(coarse: &WenteSweep, fine: &WenteSweep) -> f64 {
    coarse
        .rows
        .iter()
        .zip(&fine.rows)
        .map(|(c, f)| (f.ratio - c.ratio).abs() / c.ratio)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_neck_grid_gives_empty_tables() {
        let cfg = NeckSuiteConfig {
            hardy_moduli: vec![],
            etas: vec![],
            ..NeckSuiteConfig::default()
        };
        let r = run_neck_suite(&cfg).unwrap();
        assert!(r.hardy.is_empty() && r.weighted.is_empty() && r.spreads.is_empty());
    }

    #[test]
    fn hardy_column_matches_closed_form() {
        let cfg = NeckSuiteConfig {
            etas: vec![],
            ..NeckSuiteConfig::default()
        };
        let r = run_neck_suite(&cfg).unwrap();
        for (h, l) in r.hardy.iter().zip([4.0f64, 8.0, 16.0]) {
            let exact = std::f64::consts::PI.powi(2) / (l * l);
            assert!((h.numeric / exact - 1.0).abs() < 1e-2);
        }
    }

    #[test]
    fn single_entry_ladder_at_eta_squared() {
        let mut cfg = IndexStabilityConfig::standard(vec![0.04], 0.2, GlueProfile::BubbleTail).unwrap();
        cfg.mesh = BubbleMeshSpec {
            ds: 0.2,
            n_north: 16,
            n_theta: 32,
        };
        cfg.diagnostic_mesh = cfg.mesh;
        cfg.limit_mesh = LimitMeshSpec {
            n_rings: 16,
            n_theta: 32,
        };
        let run = run_index_stability(&cfg).unwrap();
        assert_eq!(run.rows.len(), 1);
        let row = &run.rows[0];
        assert_eq!(row.weight, "round");
        assert!(row.neck_lambda0.is_none());
        assert!(row.ind_plus_null() <= 8, "{row:?}");
    }

    #[test]
    fn antipodal_family_is_rejected() {
        use crate::maps::{ConstantMap, RationalMapSpec, SOUTH};
        let fam = BubbleFamily::new(
            Arc::new(ConstantMap(SOUTH)),
            Arc::new(RationalMapSpec::identity()),
            Complex64::new(0.0, 0.0),
            vec![1e-3],
            0.2,
            GlueProfile::Geodesic,
        )
        .unwrap();
        let mut cfg = IndexStabilityConfig::standard(vec![1e-3], 0.2, GlueProfile::Geodesic).unwrap();
        cfg.family = fam;
        assert!(matches!(
            run_index_stability(&cfg),
            Err(crate::Error::Antipodal(_))
        ));
    }

    #[test]
    fn small_wente_sweep_is_deterministic() {
        let cfg = WenteSweepConfig {
            modes: vec![1, 3],
            scale_exponents: vec![2, 3],
            disk: DiskSpec {
                core: 1.0 / 64.0,
                n_core: 16,
                ds: 0.05,
                n_theta: 32,
            },
        };
        let a = wente_sweep(&cfg).unwrap();
        let b = wente_sweep(&cfg).unwrap();
        assert_eq!(a.rows.len(), 4);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.ratio.to_bits(), y.ratio.to_bits());
        }
        assert!(a.spread() >= 1.0);
    }
}

//! Subcommand bodies. Each returns its tables, the invariant checks made
//! along the way and the constants it measured.

use std::collections::BTreeMap;
use std::sync::Arc;

use necklab::experiments::{
    refinement_change, run_index_stability, run_neck_suite, sweep_pair, wente_sweep, BubbleMeshSpec, DiskSpec,
    IndexStabilityConfig, LimitMeshSpec, NeckSuiteConfig, WenteSweepConfig,
};
use necklab::grid::build_annulus;
use necklab::harmonic_tools::{
    fourier_split_capped, pointwise_bound_ratio_minus, pointwise_bound_ratio_plus, whitney_extend,
    AnnulusFourierDecomposition,
};
use necklab::lorentz::{log_gradient_exact, log_gradient_quoted, lorentz_norms};
use necklab::maps::{energy, ConstantMap, MapDomain, RationalMapSpec, SphereField, SphereMap, SphereMesh, NORTH};
use necklab::par;
use necklab::series::{
    c_mu_gamma, discrete_convolution_bound, dyadic_window, exhaustive_suite, harmonic_series_weights,
    randomized_suite, series_bound_check, SuiteSummary, WeightedSeriesInstance,
};
use necklab::spectral::{
    annulus_hardy_eigen, assemble_jacobi, solve_weighted_eigen, HardyEigen, HardyVariant, NeckSpectrumOptions,
    SolveOptions, ZeroTolerance,
};
use necklab::wente::{dyadic_decompose, max_depth, morrey_decrease_check, WenteProblem};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{MapConfig, RunConfig};
use crate::output::{num, opt, Check, Table};
use crate::regression;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    AnnulusSpectrum,
    WenteBench,
    Lorentz,
    HarmonicSplit,
    SeriesCheck,
    Index,
    IndexStability,
    NeckSuite,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::AnnulusSpectrum,
        Command::WenteBench,
        Command::Lorentz,
        Command::HarmonicSplit,
        Command::SeriesCheck,
        Command::Index,
        Command::IndexStability,
        Command::NeckSuite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::AnnulusSpectrum => "annulus-spectrum",
            Command::WenteBench => "wente-bench",
            Command::Lorentz => "lorentz",
            Command::HarmonicSplit => "harmonic-split",
            Command::SeriesCheck => "series-check",
            Command::Index => "index",
            Command::IndexStability => "index-stability",
            Command::NeckSuite => "neck-suite",
        }
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Whether the section this command reads still has its defaults.
    fn pinned(&self, cfg: &RunConfig) -> bool {
        let d = RunConfig::default();
        match self {
            Command::AnnulusSpectrum => cfg.annulus == d.annulus,
            Command::WenteBench => cfg.wente == d.wente,
            Command::Lorentz => cfg.lorentz == d.lorentz,
            Command::HarmonicSplit => cfg.harmonic == d.harmonic && cfg.seed == d.seed,
            Command::SeriesCheck => cfg.series == d.series && cfg.seed == d.seed,
            Command::Index => cfg.index == d.index,
            Command::IndexStability => cfg.ladder == d.ladder,
            Command::NeckSuite => cfg.neck == d.neck,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub constants: BTreeMap<String, f64>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn constant(&mut self, name: impl Into<String>, v: f64) {
        self.constants.insert(name.into(), v);
    }
}

/// Runs `cmd`; regression bands apply when its section is at defaults.
pub fn run(cmd: Command, cfg: &RunConfig) -> necklab::Result<Outcome> {
    let mut out = match cmd {
        Command::AnnulusSpectrum => annulus_spectrum(cfg)?,
        Command::WenteBench => wente_bench(cfg)?,
        Command::Lorentz => lorentz(cfg)?,
        Command::HarmonicSplit => harmonic_split(cfg)?,
        Command::SeriesCheck => series_check(cfg)?,
        Command::Index => index(cfg)?,
        Command::IndexStability => index_stability(cfg)?,
        Command::NeckSuite => neck_suite(cfg)?,
    };
    if cmd.pinned(cfg) {
        let checks = regression::compare(cmd.name(), &out.constants);
        out.checks.extend(checks);
    }
    Ok(out)
}

fn modulus(eta: f64, delta: f64) -> f64 {
    (eta * eta / delta).ln()
}

const SPECTRUM_COLUMNS: [&str; 7] = [
    "eta",
    "delta",
    "beta",
    "variant",
    "lambda1_analytic",
    "lambda1_numeric",
    "rel_err",
];

fn spectrum_table(name: &str, rows: &[HardyEigen]) -> Table {
    let mut t = Table::new(name, &SPECTRUM_COLUMNS);
    for h in rows {
        t.push(vec![
            num(h.eta),
            num(h.delta),
            num(h.beta),
            h.variant.name().into(),
            opt(h.analytic),
            num(h.numeric),
            opt(h.rel_err()),
        ]);
    }
    t
}

/// Positivity of every eigenvalue and equality of the inner and outer
/// variants, which are exchanged by the inversion `x ↦ δx/(η|x|²)`.
fn spectrum_checks(out: &mut Outcome, rows: &[HardyEigen]) {
    let bad = rows.iter().filter(|h| !(h.numeric > 0.0 && h.numeric.is_finite())).count();
    out.check("lambda1_positive", bad == 0, format!("{bad} of {} non-positive", rows.len()));
    let mut worst = 0.0f64;
    for i in rows.iter().filter(|h| h.variant == HardyVariant::Inner) {
        if let Some(o) = rows
            .iter()
            .find(|o| o.variant == HardyVariant::Outer && o.eta == i.eta && o.delta == i.delta && o.beta == i.beta)
        {
            worst = worst.max((i.numeric - o.numeric).abs() / i.numeric);
        }
    }
    out.check("inner_outer_symmetry", worst <= 1e-9, format!("max relative gap {}", num(worst)));
}

fn annulus_spectrum(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.annulus;
    let mut jobs = Vec::new();
    for delta in c.all_deltas() {
        for &beta in &c.betas {
            for &v in &c.variants {
                jobs.push((delta, beta, v));
            }
        }
    }
    let rows = par::map_slice(&jobs, |&(delta, beta, v)| annulus_hardy_eigen(c.eta, delta, v, beta, c.n_s))
        .into_iter()
        .collect::<necklab::Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    spectrum_checks(&mut out, &rows);
    for h in rows.iter().filter(|h| h.variant == HardyVariant::Hardy) {
        let l = modulus(h.eta, h.delta);
        out.constant(format!("hardy_rel_err[L={}]", num(l)), h.rel_err().unwrap_or(f64::NAN));
    }
    out.tables.push(spectrum_table("annulus_spectrum", &rows));
    Ok(out)
}

fn lorentz(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.lorentz;
    let deltas = c.all_deltas();
    let rows = par::map_slice(&deltas, |&delta| -> necklab::Result<_> {
        let g = build_annulus(c.eta, delta, c.n_s, c.n_theta)?;
        let field = g.sample(|r, _| 1.0 / r);
        Ok((delta, lorentz_norms(&g, &field)?, log_gradient_exact(g.delta_over_eta, g.eta)))
    })
    .into_iter()
    .collect::<necklab::Result<Vec<_>>>()?;
    let mut t = Table::new(
        "lorentz",
        &[
            "eta",
            "delta",
            "modulus",
            "weak",
            "l2",
            "l21",
            "weak_exact",
            "l2_exact",
            "l21_exact",
            "weak_quoted",
            "l2_quoted",
            "l21_quoted",
            "l21_over_l2",
        ],
    );
    let mut out = Outcome::default();
    // cell-centre sampling of 1/|x| is off by up to a factor e^{ds/2}
    let (mut worst, mut band) = (0.0f64, 0.0f64);
    for (delta, n, e) in &rows {
        let l = modulus(c.eta, *delta);
        let q = log_gradient_quoted(l);
        for (x, y) in [(n.weak, e.weak), (n.l2, e.l2), (n.l21, e.l21)] {
            worst = worst.max((x - y).abs() / y);
        }
        band = band.max(0.01 + l / c.n_s as f64);
        t.push(vec![
            num(c.eta),
            num(*delta),
            num(l),
            num(n.weak),
            num(n.l2),
            num(n.l21),
            num(e.weak),
            num(e.l2),
            num(e.l21),
            num(q.weak),
            num(q.l2),
            num(q.l21),
            num(n.l21 / n.l2),
        ]);
        out.constant(format!("l21_over_l2_sqrt_L[L={}]", num(l)), n.l21 / n.l2 / l.sqrt());
    }
    out.check(
        "layer_cake_agreement",
        worst <= band,
        format!("largest relative gap to the exact rearrangement norms {} (band {})", num(worst), num(band)),
    );
    out.tables.push(t);
    Ok(out)
}

fn wente_bench(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.wente;
    let disk = DiskSpec {
        core: c.core,
        n_core: c.n_core,
        ds: c.ds,
        n_theta: c.n_theta,
    };
    let sweep_cfg = WenteSweepConfig {
        modes: c.modes.clone(),
        scale_exponents: c.scale_exponents.clone(),
        disk,
    };
    let coarse = wente_sweep(&sweep_cfg)?;
    let fine = if c.refine {
        Some(wente_sweep(&WenteSweepConfig {
            disk: disk.refined(),
            ..sweep_cfg.clone()
        })?)
    } else {
        None
    };
    let mut out = Outcome::default();
    let mut t = Table::new("wente", &["mode", "scale", "ratio", "ratio_refined", "rel_change"]);
    for (i, r) in coarse.rows.iter().enumerate() {
        let f = fine.as_ref().map(|f| f.rows[i].ratio);
        t.push(vec![
            r.mode.to_string(),
            num(r.scale),
            num(r.ratio),
            opt(f),
            opt(f.map(|f| (f - r.ratio).abs() / r.ratio)),
        ]);
    }
    let bad = coarse.rows.iter().filter(|r| !(r.ratio > 0.0 && r.ratio.is_finite())).count();
    out.check("ratios_finite", bad == 0, format!("{bad} of {} degenerate", coarse.rows.len()));
    if !coarse.rows.is_empty() {
        out.constant("spread", coarse.spread());
        out.constant("max_ratio", coarse.rows.iter().map(|r| r.ratio).fold(0.0, f64::max));
    }
    if let Some(f) = &fine {
        out.constant("refinement_change", refinement_change(&coarse, f));
    }
    out.tables.push(t);

    let grid = disk.build()?;
    let depth = max_depth(&grid);
    let rows = par::map_slice(&c.scale_exponents, |&k| -> necklab::Result<_> {
        let eps = 0.5f64.powi(k as i32);
        let (a, b) = sweep_pair(&grid, 1, eps);
        let pieces = dyadic_decompose(&grid, &b, depth)?;
        let problem = WenteProblem::solve(&grid, a, b)?;
        let m = morrey_decrease_check(&grid, &problem, c.alpha)?;
        Ok((eps, m, pieces))
    })
    .into_iter()
    .collect::<necklab::Result<Vec<_>>>()?;
    let mut t = Table::new(
        "wente_decrease",
        &[
            "scale",
            "c_one_step",
            "c_alpha",
            "dyadic_energy_ratio",
            "dyadic_reconstruction",
            "dyadic_support",
        ],
    );
    let (mut c1, mut ca, mut ce, mut rec) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (eps, m, p) in &rows {
        c1 = c1.max(m.c_one_step);
        ca = ca.max(m.c_alpha);
        ce = ce.max(p.max_energy_ratio());
        rec = rec.max(p.reconstruction_error);
        t.push(vec![
            num(*eps),
            num(m.c_one_step),
            num(m.c_alpha),
            num(p.max_energy_ratio()),
            num(p.reconstruction_error),
            num(p.support_violation),
        ]);
    }
    out.check(
        "dyadic_reconstruction",
        rec < 1e-10,
        format!("largest relative reconstruction error {}", num(rec)),
    );
    if !rows.is_empty() {
        out.constant("c_one_step", c1);
        out.constant("c_alpha", ca);
        out.constant("dyadic_energy_ratio", ce);
    }
    out.tables.push(t);
    Ok(out)
}

fn harmonic_split(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.harmonic;
    let g = build_annulus(c.eta, c.delta, c.n_s, c.n_theta)?;
    let (rin, rout) = (g.delta_over_eta, g.eta);
    let (pos_amp, neg_amp) = if c.positive.is_empty() && c.negative.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut draw = |n: usize| -> Vec<[f64; 2]> {
            (0..n)
                .map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5])
                .collect()
        };
        (draw(c.modes), draw(c.modes))
    } else {
        (c.positive.clone(), c.negative.clone())
    };
    let pos: Vec<Complex64> = pos_amp
        .iter()
        .enumerate()
        .map(|(i, a)| Complex64::new(a[0], a[1]) / rout.powi(i as i32 + 1))
        .collect();
    let neg: Vec<Complex64> = neg_amp
        .iter()
        .enumerate()
        .map(|(i, a)| Complex64::new(a[0], a[1]) * rin.powi(i as i32 + 1))
        .collect();
    let truth = AnnulusFourierDecomposition::from_coefficients(rin, rout, c.constant, c.log_coeff, pos, neg);
    let field = truth.reconstruct(&g);
    let cap = truth.max_mode.max(1);
    let dec = fourier_split_capped(&g, &field, cap)?;

    let mut out = Outcome::default();
    let mut t = Table::new(
        "harmonic_coefficients",
        &["part", "n", "re_true", "im_true", "re_recovered", "im_recovered", "scaled_err"],
    );
    let mut worst = 0.0f64;
    let mut row = |t: &mut Table, part: &str, n: usize, a: Complex64, b: Complex64, scale: f64| {
        let err = (a - b).norm() * scale;
        worst = worst.max(err);
        t.push(vec![
            part.into(),
            n.to_string(),
            num(a.re),
            num(a.im),
            num(b.re),
            num(b.im),
            num(err),
        ]);
    };
    let real = |x: f64| Complex64::new(x, 0.0);
    row(&mut t, "constant", 0, real(truth.constant), real(dec.constant), 1.0);
    row(&mut t, "log", 0, real(truth.log_coeff), real(dec.log_coeff), 1.0);
    for n in 1..=truth.max_mode {
        let (a, b) = (truth.positive_coeffs[n - 1], dec.positive_coeffs[n - 1]);
        row(&mut t, "plus", n, a, b, rout.powi(n as i32));
    }
    for n in 1..=truth.max_mode {
        let (a, b) = (truth.negative_coeffs[n - 1], dec.negative_coeffs[n - 1]);
        row(&mut t, "minus", n, a, b, rin.powi(-(n as i32)));
    }
    out.check(
        "coefficient_recovery",
        worst <= 1e-6,
        format!("largest boundary-scaled coefficient error {}", num(worst)),
    );
    out.tables.push(t);

    let plus = pointwise_bound_ratio_plus(&g, &dec)?;
    let minus = pointwise_bound_ratio_minus(&g, &dec)?;
    let ext = whitney_extend(&g, &field)?;
    let mut t = Table::new("harmonic_bounds", &["quantity", "value", "radius"]);
    for (q, v, r) in [
        ("pointwise_plus", plus.ratio, Some(plus.radius)),
        ("pointwise_minus", minus.ratio, Some(minus.radius)),
        ("extension_total", ext.c_total, None),
        ("extension_outer", ext.c_outer, None),
        ("extension_inner", ext.c_inner, None),
        ("extension_support", ext.support_violation, None),
    ] {
        t.push(vec![q.into(), num(v), opt(r)]);
        out.constant(q, v);
    }
    out.check(
        "extension_support",
        ext.support_violation <= 1e-12,
        format!("largest deviation from the boundary means {}", num(ext.support_violation)),
    );
    out.tables.push(t);

    let (s1, s2) = dyadic_window(c.eta, c.delta)?;
    let reports = (s1..=s2)
        .map(|j| harmonic_series_weights(&dec, c.eta, c.delta, c.mu, j))
        .collect::<necklab::Result<Vec<_>>>()?;
    let mut t = Table::new(
        "harmonic_series",
        &[
            "j", "lhs_plus", "lhs_minus", "lhs_log", "term_plus", "term_minus", "term_log", "c_plus", "c_minus", "c_log",
            "dominant",
        ],
    );
    let (mut cp, mut cm, mut cl) = (0.0f64, 0.0f64, 0.0f64);
    for r in &reports {
        cp = cp.max(r.c_plus);
        cm = cm.max(r.c_minus);
        cl = cl.max(r.c_log);
        t.push(vec![
            r.j.to_string(),
            num(r.lhs_plus),
            num(r.lhs_minus),
            num(r.lhs_log),
            num(r.term_plus),
            num(r.term_minus),
            num(r.term_log),
            num(r.c_plus),
            num(r.c_minus),
            num(r.c_log),
            r.dominant_part().into(),
        ]);
    }
    out.constant("series_c_plus", cp);
    out.constant("series_c_minus", cm);
    out.constant("series_c_log", cl);
    out.tables.push(t);
    Ok(out)
}

fn series_check(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.series;
    let mut suites: Vec<(&str, SuiteSummary)> = vec![
        ("randomized", randomized_suite(c.instances, cfg.seed)),
        ("exhaustive", exhaustive_suite(c.max_len)),
    ];

    let mut conv = SuiteSummary::default();
    let s2 = c.max_len.max(1) - 1;
    for n in 0..=s2 + 2 {
        for k in 0..=s2 + 2 {
            let b = discrete_convolution_bound(c.gamma, c.mu, 0, s2, n, k)?;
            let slack = (b.bound - b.value) / b.bound;
            if conv.checks == 0 || slack < conv.worst_slack {
                conv.worst_slack = slack;
            }
            conv.checks += 1;
            conv.violations += usize::from(!b.holds);
        }
    }
    suites.push(("convolution", conv));

    if !c.a.is_empty() {
        let inst = WeightedSeriesInstance::new(c.a.clone(), c.b.clone(), c.gamma, c.mu, c.eps0, c.s1, c.s2)?;
        let mut s = SuiteSummary::default();
        for k in c.s1..=c.s2 {
            let r = series_bound_check(&inst, k)?;
            if s.checks == 0 || r.slack() < s.worst_slack {
                s.worst_slack = r.slack();
            }
            s.checks += 1;
            s.violations += usize::from(!r.holds);
        }
        suites.push(("explicit", s));
    }

    let mut out = Outcome::default();
    let mut t = Table::new("series", &["suite", "checks", "violations", "rejected", "worst_slack"]);
    for (name, s) in &suites {
        t.push(vec![
            (*name).into(),
            s.checks.to_string(),
            s.violations.to_string(),
            s.rejected.to_string(),
            num(s.worst_slack),
        ]);
        out.check(
            format!("{name}_violations"),
            s.violations == 0,
            format!("{} of {} checks violated, worst slack {}", s.violations, s.checks, num(s.worst_slack)),
        );
        out.constant(format!("{name}_worst_slack"), s.worst_slack);
    }
    out.constant("c_mu_gamma", c_mu_gamma(c.gamma, c.mu));
    out.tables.push(t);
    Ok(out)
}

fn sphere_field(map: &MapConfig) -> necklab::Result<(Arc<dyn SphereField>, usize)> {
    Ok(match map {
        MapConfig::Constant => (Arc::new(ConstantMap(NORTH)), 0),
        MapConfig::Rational {
            numerator,
            denominator,
        } => {
            let cx = |v: &[[f64; 2]]| v.iter().map(|p| Complex64::new(p[0], p[1])).collect::<Vec<_>>();
            let spec = RationalMapSpec::new(cx(numerator), cx(denominator))?;
            let d = spec.degree();
            (Arc::new(spec), d)
        }
    })
}

fn eigenvalue_rows(t: &mut Table, problem: &str, values: &[f64], residuals: &[f64], tau: f64) {
    for (k, v) in values.iter().enumerate() {
        let class = if *v < -tau {
            "negative"
        } else if *v <= tau {
            "null"
        } else {
            "positive"
        };
        t.push(vec![
            problem.into(),
            (k + 1).to_string(),
            num(*v),
            residuals.get(k).map(|r| num(*r)).unwrap_or_default(),
            class.into(),
        ]);
    }
}

const EIGEN_COLUMNS: [&str; 5] = ["problem", "k", "eigenvalue", "residual", "class"];

fn index(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.index;
    let (field, degree) = sphere_field(&c.map)?;
    let mesh = SphereMesh::uniform(c.n_rings, c.n_theta)?;
    let map = SphereMap::sample(field.as_ref(), Arc::new(MapDomain::Sphere(mesh)));
    let form = assemble_jacobi(&map)?;
    let r = solve_weighted_eigen(
        &form,
        c.count.min(form.n_dofs()),
        &SolveOptions {
            tolerance: ZeroTolerance::Relative(c.tau),
            ..SolveOptions::default()
        },
    )?;
    let e = energy(&map)?;
    let mut out = Outcome::default();
    let mut t = Table::new(
        "index",
        &[
            "degree",
            "n_rings",
            "n_theta",
            "dofs",
            "energy",
            "index",
            "nullity",
            "inertia_below_minus_tau",
            "inertia_below_tau",
            "tau",
            "gap",
            "max_residual",
        ],
    );
    t.push(vec![
        degree.to_string(),
        c.n_rings.to_string(),
        c.n_theta.to_string(),
        r.dofs.to_string(),
        num(e),
        r.index.to_string(),
        r.nullity.to_string(),
        r.inertia.0.to_string(),
        r.inertia.1.to_string(),
        num(r.tau),
        opt(r.gap()),
        num(r.max_residual()),
    ]);
    out.tables.push(t);
    let mut t = Table::new("index_eigenvalues", &EIGEN_COLUMNS);
    eigenvalue_rows(&mut t, "map", &r.eigenvalues, &r.residuals, r.tau);
    out.tables.push(t);

    out.check(
        "inertia_consistent",
        r.inertia_consistent(),
        format!("eigenvalue counts ({}, {}) vs inertia {:?}", r.index, r.index + r.nullity, r.inertia),
    );
    if let Some(k) = c.expect_index {
        out.check("expected_index", r.index == k, format!("index {} expected {k}", r.index));
    }
    if let Some(k) = c.expect_nullity {
        out.check("expected_nullity", r.nullity == k, format!("nullity {} expected {k}", r.nullity));
    }
    out.constant("index", r.index as f64);
    out.constant("nullity", r.nullity as f64);
    out.constant("energy_over_4pi", e / (4.0 * std::f64::consts::PI));
    if let Some(g) = r.gap() {
        out.constant("gap", g);
    }
    Ok(out)
}

fn index_stability(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.ladder;
    let mut ic = IndexStabilityConfig::standard(c.deltas.clone(), c.eta, c.profile)?;
    ic.beta = c.beta;
    ic.mesh = BubbleMeshSpec {
        ds: c.ds,
        n_north: c.n_north,
        n_theta: c.n_theta,
    };
    ic.diagnostic_mesh = BubbleMeshSpec {
        ds: c.diag_ds,
        n_north: c.diag_n_north,
        n_theta: c.diag_n_theta,
    };
    ic.limit_mesh = LimitMeshSpec {
        n_rings: c.limit_rings,
        n_theta: c.limit_theta,
    };
    ic.count = c.count;
    ic.tolerance = ZeroTolerance::Relative(c.tau);
    let run = run_index_stability(&ic)?;

    let mut out = Outcome::default();
    let mut t = Table::new(
        "index_scales",
        &[
            "delta",
            "weight",
            "energy",
            "chain_energy",
            "index",
            "nullity",
            "ind_plus_null",
            "inertia_below_minus_tau",
            "inertia_below_tau",
            "tau",
            "lambda_min",
            "max_residual",
            "mu",
            "neck_lambda0",
            "neck_sup",
            "average_length",
            "hopf_residual",
            "hopf_max",
            "conservation_residual",
            "dofs",
        ],
    );
    let mut eig = Table::new("index_eigenvalues", &EIGEN_COLUMNS);
    for r in &run.rows {
        t.push(vec![
            num(r.delta),
            r.weight.into(),
            num(r.energy),
            num(r.chain_energy),
            r.index.to_string(),
            r.nullity.to_string(),
            r.ind_plus_null().to_string(),
            r.inertia.0.to_string(),
            r.inertia.1.to_string(),
            num(r.tau),
            opt(r.eigenvalues.first().copied()),
            num(r.max_residual),
            num(r.mu),
            opt(r.neck_lambda0),
            num(r.neck_sup),
            num(r.average_length),
            num(r.hopf_residual),
            num(r.hopf_max),
            num(r.conservation_residual),
            r.dofs.to_string(),
        ]);
        eigenvalue_rows(&mut eig, &format!("delta={}", num(r.delta)), &r.eigenvalues, &[], r.tau);
        out.check(
            format!("inertia_consistent[delta={}]", num(r.delta)),
            r.inertia == (r.index, r.index + r.nullity),
            format!("counts ({}, {}) vs inertia {:?}", r.index, r.nullity, r.inertia),
        );
    }
    let mut lt = Table::new(
        "index_limits",
        &["limit", "index", "nullity", "ind_plus_null", "tau", "lambda_min", "max_residual", "mu"],
    );
    for l in [&run.background, &run.bubble] {
        lt.push(vec![
            l.name.into(),
            l.index.to_string(),
            l.nullity.to_string(),
            (l.index + l.nullity).to_string(),
            num(l.tau),
            opt(l.eigenvalues.first().copied()),
            num(l.max_residual),
            num(l.mu),
        ]);
        eigenvalue_rows(&mut eig, l.name, &l.eigenvalues, &[], l.tau);
    }
    let f = run.finest();
    out.check(
        "upper_bound_at_finest",
        run.upper_holds(),
        format!("Ind+Null = {} against the limit budget {}", f.ind_plus_null(), run.limit_budget()),
    );
    out.check(
        "lower_bound_at_finest",
        run.lower_holds(),
        format!("Ind = {} against the limit indices {}", f.index, run.limit_index()),
    );
    out.check(
        "harmonicity_residuals_at_finest",
        f.hopf_residual < 1e-2 && f.conservation_residual < 1e-2,
        format!("Hopf {}, conservation {}", num(f.hopf_residual), num(f.conservation_residual)),
    );
    out.constant("finest_ind_plus_null", f.ind_plus_null() as f64);
    out.constant("finest_index", f.index as f64);
    out.constant("limit_budget", run.limit_budget() as f64);
    out.constant("finest_energy_over_4pi", f.energy / (4.0 * std::f64::consts::PI));
    out.constant("finest_hopf_residual", f.hopf_residual);
    out.constant("finest_conservation_residual", f.conservation_residual);
    out.tables.push(t);
    out.tables.push(lt);
    out.tables.push(eig);
    Ok(out)
}

fn neck_suite(cfg: &RunConfig) -> necklab::Result<Outcome> {
    let c = &cfg.neck;
    let nc = NeckSuiteConfig {
        hardy_moduli: c.hardy_moduli.clone(),
        etas: c.etas.clone(),
        deltas: c.deltas.clone(),
        betas: c.betas.clone(),
        n_s: c.n_s,
        glued: c.glued,
        profile: c.profile,
        pointwise_c: c.pointwise_c,
        neck: NeckSpectrumOptions {
            rings_per_unit: c.rings_per_unit as f64,
            n_theta: c.n_theta,
            ..NeckSpectrumOptions::default()
        },
        ..NeckSuiteConfig::default()
    };
    let r = run_neck_suite(&nc)?;
    let mut out = Outcome::default();
    let all: Vec<HardyEigen> = r.hardy.iter().chain(&r.weighted).copied().collect();
    spectrum_checks(&mut out, &all);
    out.tables.push(spectrum_table("neck_hardy", &r.hardy));
    out.tables.push(spectrum_table("neck_weighted", &r.weighted));
    for h in &r.hardy {
        out.constant(
            format!("hardy_rel_err[L={}]", num(modulus(h.eta, h.delta))),
            h.rel_err().unwrap_or(f64::NAN),
        );
    }

    let mut t = Table::new("neck_spreads", &["eta", "beta", "min", "max", "ratio"]);
    for s in &r.spreads {
        t.push(vec![num(s.eta), num(s.beta), num(s.min), num(s.max), num(s.ratio)]);
        out.constant(format!("spread[eta={},beta={}]", num(s.eta), num(s.beta)), s.ratio);
    }
    out.tables.push(t);

    let mut t = Table::new("neck_positivity", &["eta", "delta", "beta", "lambda0", "mu", "residual", "dofs"]);
    for p in &r.positivity {
        t.push(vec![
            num(p.eta),
            num(p.delta),
            num(p.beta),
            num(p.lambda0),
            num(p.mu),
            num(p.residual),
            p.dofs.to_string(),
        ]);
    }
    if !r.positivity.is_empty() {
        let min = r.positivity.iter().map(|p| p.lambda0).fold(f64::INFINITY, f64::min);
        out.check("neck_lambda0_positive", min > 0.0, format!("smallest λ₀ {}", num(min)));
    }
    out.tables.push(t);

    let mut t = Table::new("neck_pointwise", &["eta", "delta", "beta", "sup", "argmax_radius"]);
    for p in &r.pointwise {
        t.push(vec![num(p.eta), num(p.delta), num(p.beta), num(p.sup), num(p.argmax_radius)]);
    }
    out.tables.push(t);
    Ok(out)
}

//! Run configuration: sectioned TOML checked against the parameter domains
//! of the library routines. Every violation is collected, not just the first.

use std::fmt;

use necklab::maps::GlueProfile;
use necklab::spectral::HardyVariant;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// One rejected key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// `section.key`, or `<syntax>` for parse failures.
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub Vec<Violation>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn mentions(&self, needle: &str) -> bool {
        self.0.iter().any(|v| v.key.contains(needle) || v.message.contains(needle))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Subcommand that produced the run; set by the front end.
    pub command: Option<String>,
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    pub out: Option<String>,
    pub annulus: AnnulusConfig,
    pub lorentz: LorentzConfig,
    pub wente: WenteConfig,
    pub harmonic: HarmonicConfig,
    pub series: SeriesConfig,
    pub index: IndexConfig,
    pub ladder: LadderConfig,
    pub neck: NeckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            threads: 0,
            out: None,
            annulus: AnnulusConfig::default(),
            lorentz: LorentzConfig::default(),
            wente: WenteConfig::default(),
            harmonic: HarmonicConfig::default(),
            series: SeriesConfig::default(),
            index: IndexConfig::default(),
            ladder: LadderConfig::default(),
            neck: NeckConfig::default(),
        }
    }
}

/// `[annulus]`: axisymmetric weighted eigenvalues on `A(η, δ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusConfig {
    pub eta: f64,
    pub deltas: Vec<f64>,
    /// Extra scales given as `L = log(η²/δ)`.
    pub moduli: Vec<f64>,
    pub betas: Vec<f64>,
    pub variants: Vec<HardyVariant>,
    pub n_s: usize,
}

impl Default for AnnulusConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            deltas: vec![],
            moduli: vec![4.0, 8.0, 16.0],
            betas: vec![0.5],
            variants: vec![HardyVariant::Hardy],
            n_s: 512,
        }
    }
}

impl AnnulusConfig {
    /// `deltas` followed by the scales of `moduli`.
    pub fn all_deltas(&self) -> Vec<f64> {
        let mut d = self.deltas.clone();
        d.extend(self.moduli.iter().map(|l| self.eta * self.eta * (-l).exp()));
        d
    }
}

/// `[lorentz]`: norms of `∇ log|x|` on `A(η, δ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzConfig {
    pub eta: f64,
    pub deltas: Vec<f64>,
    pub moduli: Vec<f64>,
    pub n_s: usize,
    pub n_theta: usize,
}

impl Default for LorentzConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            deltas: vec![],
            moduli: vec![4.0, 8.0, 16.0],
            n_s: 256,
            n_theta: 256,
        }
    }
}

impl LorentzConfig {
    pub fn all_deltas(&self) -> Vec<f64> {
        let mut d = self.deltas.clone();
        d.extend(self.moduli.iter().map(|l| self.eta * self.eta * (-l).exp()));
        d
    }
}

/// `[wente]`: weighted Wente sweep on a graded unit disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WenteConfig {
    pub modes: Vec<usize>,
    pub scale_exponents: Vec<u32>,
    pub core: f64,
    pub n_core: usize,
    pub ds: f64,
    pub n_theta: usize,
    /// Repeat the sweep on the refined disk.
    pub refine: bool,
    /// Exponent of the ring-energy decrease table.
    pub alpha: f64,
}

impl Default for WenteConfig {
    fn default() -> Self {
        Self {
            modes: (1..=16).collect(),
            scale_exponents: (2..=7).collect(),
            core: 1.0 / 1024.0,
            n_core: 64,
            ds: 0.005,
            n_theta: 256,
            refine: true,
            alpha: 1.0,
        }
    }
}

/// `[harmonic]`: synthesized harmonic field on `B_η \ B_{δ/η}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicConfig {
    pub eta: f64,
    pub delta: f64,
    pub n_s: usize,
    pub n_theta: usize,
    pub constant: f64,
    pub log_coeff: f64,
    /// Number of random modes per sign when no amplitudes are given.
    pub modes: usize,
    /// Amplitudes `[re, im]` of `h_n (outer)ⁿ`, `n = 1, 2, …`.
    pub positive: Vec<[f64; 2]>,
    /// Amplitudes `[re, im]` of `h_{−n} (inner)^{−n}`.
    pub negative: Vec<[f64; 2]>,
    pub mu: f64,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            delta: 1e-4,
            n_s: 128,
            n_theta: 64,
            constant: 0.3,
            log_coeff: -0.7,
            modes: 8,
            positive: vec![],
            negative: vec![],
            mu: 0.75,
        }
    }
}

/// `[series]`: weighted series comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub instances: usize,
    pub max_len: usize,
    pub gamma: f64,
    pub mu: f64,
    /// Explicit instance checked at every centre when `a` is non-empty.
    pub eps0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s1: usize,
    pub s2: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            instances: 1000,
            max_len: 8,
            gamma: 0.5,
            mu: 0.75,
            eps0: 0.125,
            a: vec![],
            b: vec![],
            s1: 0,
            s2: 0,
        }
    }
}

/// A map from the sphere to itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapConfig {
    /// Constant map to the north pole.
    Constant,
    /// `P/Q`, coefficients `[re, im]` in ascending powers.
    Rational {
        numerator: Vec<[f64; 2]>,
        denominator: Vec<[f64; 2]>,
    },
}

impl MapConfig {
    pub fn identity() -> Self {
        MapConfig::Rational {
            numerator: vec![[0.0, 0.0], [1.0, 0.0]],
            denominator: vec![[1.0, 0.0]],
        }
    }
}

/// `[index]`: index and nullity of one map on the closed sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub map: MapConfig,
    pub n_rings: usize,
    pub n_theta: usize,
    pub count: usize,
    /// `τ` as a multiple of `median |λ₁..₂₀|`.
    pub tau: f64,
    pub expect_index: Option<usize>,
    pub expect_nullity: Option<usize>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::identity(),
            n_rings: 64,
            n_theta: 64,
            count: 20,
            tau: 1e-3,
            expect_index: None,
            expect_nullity: None,
        }
    }
}

/// `[ladder]`: bubbling family for `index-stability`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub eta: f64,
    pub deltas: Vec<f64>,
    pub beta: f64,
    pub profile: GlueProfile,
    pub ds: f64,
    pub n_north: usize,
    pub n_theta: usize,
    pub diag_ds: f64,
    pub diag_n_north: usize,
    pub diag_n_theta: usize,
    pub limit_rings: usize,
    pub limit_theta: usize,
    pub count: usize,
    pub tau: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            eta: 0.2,
            deltas: vec![1e-2, 1e-3, 1e-4, 1e-5],
            beta: 0.5,
            profile: GlueProfile::BubbleTail,
            ds: 0.1,
            n_north: 32,
            n_theta: 64,
            diag_ds: 0.025,
            diag_n_north: 64,
            diag_n_theta: 128,
            limit_rings: 64,
            limit_theta: 64,
            count: 20,
            tau: 1e-3,
        }
    }
}

/// `[neck]`: neck spectral suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeckConfig {
    pub hardy_moduli: Vec<f64>,
    pub etas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub betas: Vec<f64>,
    pub n_s: usize,
    pub glued: bool,
    pub profile: GlueProfile,
    pub pointwise_c: f64,
    pub rings_per_unit: usize,
    pub n_theta: usize,
}

impl Default for NeckConfig {
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
            rings_per_unit: 16,
            n_theta: 32,
        }
    }
}

/// Typed access to one section; consumed keys are removed so that the
/// leftovers are exactly the unknown ones.
struct Section<'a> {
    name: &'static str,
    table: Table,
    errors: &'a mut Vec<Violation>,
}

impl<'a> Section<'a> {
    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn fail(&mut self, key: &str, message: impl Into<String>) {
        let key = self.key(key);
        self.errors.push(Violation {
            key,
            message: message.into(),
        });
    }

    fn get<T>(&mut self, key: &str, default: T, conv: impl Fn(&Value) -> Option<T>, what: &str) -> T {
        match self.table.remove(key) {
            None => default,
            Some(v) => match conv(&v) {
                Some(x) => x,
                None => {
                    self.fail(key, format!("expected {what}, got `{v}`"));
                    default
                }
            },
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        self.get(key, default, as_f64, "a number")
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        self.get(key, default, as_usize, "a non-negative integer")
    }

    fn opt_usize(&mut self, key: &str) -> Option<usize> {
        self.get(key, None, |v| as_usize(v).map(Some), "a non-negative integer")
    }

    fn u64(&mut self, key: &str, default: u64) -> u64 {
        self.get(key, default, |v| v.as_integer().and_then(|i| u64::try_from(i).ok()), "a non-negative integer")
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        self.get(key, default, Value::as_bool, "true or false")
    }

    fn opt_string(&mut self, key: &str) -> Option<String> {
        self.get(key, None, |v| v.as_str().map(|s| Some(s.to_string())), "a string")
    }

    fn f64_list(&mut self, key: &str, default: Vec<f64>) -> Vec<f64> {
        self.get(key, default, |v| list(v, as_f64), "an array of numbers")
    }

    fn usize_list(&mut self, key: &str, default: Vec<usize>) -> Vec<usize> {
        self.get(key, default, |v| list(v, as_usize), "an array of non-negative integers")
    }

    fn pair_list(&mut self, key: &str, default: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
        self.get(key, default, |v| list(v, as_pair), "an array of [re, im] pairs")
    }

    fn profile(&mut self, key: &str, default: GlueProfile) -> GlueProfile {
        self.get(
            key,
            default,
            |v| match v.as_str()? {
                "geodesic" => Some(GlueProfile::Geodesic),
                "bubble_tail" => Some(GlueProfile::BubbleTail),
                _ => None,
            },
            "\"geodesic\" or \"bubble_tail\"",
        )
    }

    fn variants(&mut self, key: &str, default: Vec<HardyVariant>) -> Vec<HardyVariant> {
        self.get(
            key,
            default,
            |v| {
                list(v, |x| match x.as_str()? {
                    "hardy" => Some(HardyVariant::Hardy),
                    "inner" => Some(HardyVariant::Inner),
                    "outer" => Some(HardyVariant::Outer),
                    "neck" => Some(HardyVariant::Neck),
                    _ => None,
                })
            },
            "an array drawn from \"hardy\", \"inner\", \"outer\", \"neck\"",
        )
    }

    fn check(&mut self, ok: bool, key: &str, message: impl FnOnce() -> String) {
        if !ok {
            let m = message();
            self.fail(key, m);
        }
    }

    fn beta(&mut self, key: &str, beta: f64) {
        self.check(beta > 0.0 && beta < 1.0, key, || format!("β = {beta} outside (0, 1)"));
    }

    fn at_least(&mut self, key: &str, value: usize, min: usize) {
        self.check(value >= min, key, || format!("{value} below the minimum {min}"));
    }

    fn finish(mut self) {
        let keys: Vec<String> = self.table.keys().cloned().collect();
        for k in keys {
            self.fail(&k, "unknown key");
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_usize(v: &Value) -> Option<usize> {
    v.as_integer().and_then(|i| usize::try_from(i).ok())
}

fn as_pair(v: &Value) -> Option<[f64; 2]> {
    let a = v.as_array()?;
    if a.len() != 2 {
        return None;
    }
    Some([as_f64(&a[0])?, as_f64(&a[1])?])
}

fn list<T>(v: &Value, conv: impl Fn(&Value) -> Option<T>) -> Option<Vec<T>> {
    v.as_array()?.iter().map(conv).collect()
}

const SECTIONS: [&str; 9] = [
    "run", "annulus", "lorentz", "wente", "harmonic", "series", "index", "ladder", "neck",
];

/// Parses and validates a configuration. Missing sections and keys take
/// their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigError(vec![Violation {
            key: "<syntax>".into(),
            message: e.message().trim().to_string(),
        }])
    })?;
    let mut errors = Vec::new();
    let mut tables = Vec::new();
    for name in SECTIONS {
        tables.push(match root.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => {
                errors.push(Violation {
                    key: name.into(),
                    message: "expected a section".into(),
                });
                Table::new()
            }
        });
    }
    for k in root.keys() {
        errors.push(Violation {
            key: k.clone(),
            message: "unknown section".into(),
        });
    }
    let mut tables = tables.into_iter();
    let d = RunConfig::default();
    let mut cfg = RunConfig::default();

    let mut s = Section {
        name: "run",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.seed = s.u64("seed", d.seed);
    cfg.threads = s.usize("threads", d.threads);
    cfg.out = s.opt_string("out");
    s.finish();

    let mut s = Section {
        name: "annulus",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.annulus = read_annulus(&mut s, &d.annulus);
    s.finish();

    let mut s = Section {
        name: "lorentz",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.lorentz = read_lorentz(&mut s, &d.lorentz);
    s.finish();

    let mut s = Section {
        name: "wente",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.wente = read_wente(&mut s, &d.wente);
    s.finish();

    let mut s = Section {
        name: "harmonic",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.harmonic = read_harmonic(&mut s, &d.harmonic);
    s.finish();

    let mut s = Section {
        name: "series",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.series = read_series(&mut s, &d.series);
    s.finish();

    let mut s = Section {
        name: "index",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.index = read_index(&mut s, &d.index);
    s.finish();

    let mut s = Section {
        name: "ladder",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.ladder = read_ladder(&mut s, &d.ladder);
    s.finish();

    let mut s = Section {
        name: "neck",
        table: tables.next().unwrap(),
        errors: &mut errors,
    };
    cfg.neck = read_neck(&mut s, &d.neck);
    s.finish();

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError(errors))
    }
}

fn check_scales(s: &mut Section, eta: f64, deltas: &[f64], moduli: &[f64]) {
    for &delta in deltas {
        s.check(delta > 0.0 && delta < eta * eta, "deltas", || {
            format!("δ = {delta} outside (0, η²) = (0, {})", eta * eta)
        });
    }
    for &l in moduli {
        s.check(l > 0.0 && l.is_finite(), "moduli", || format!("L = {l} must be positive"));
    }
}

fn read_annulus(s: &mut Section, d: &AnnulusConfig) -> AnnulusConfig {
    let c = AnnulusConfig {
        eta: s.f64("eta", d.eta),
        deltas: s.f64_list("deltas", d.deltas.clone()),
        moduli: s.f64_list("moduli", d.moduli.clone()),
        betas: s.f64_list("betas", d.betas.clone()),
        variants: s.variants("variants", d.variants.clone()),
        n_s: s.usize("n_s", d.n_s),
    };
    s.check(c.eta > 0.0 && c.eta <= 1.0, "eta", || format!("η = {} outside (0, 1]", c.eta));
    check_scales(s, c.eta, &c.deltas, &c.moduli);
    for &b in &c.betas {
        s.beta("betas", b);
    }
    s.at_least("n_s", c.n_s, 8);
    c
}

fn read_lorentz(s: &mut Section, d: &LorentzConfig) -> LorentzConfig {
    let c = LorentzConfig {
        eta: s.f64("eta", d.eta),
        deltas: s.f64_list("deltas", d.deltas.clone()),
        moduli: s.f64_list("moduli", d.moduli.clone()),
        n_s: s.usize("n_s", d.n_s),
        n_theta: s.usize("n_theta", d.n_theta),
    };
    s.check(c.eta > 0.0 && c.eta <= 1.0, "eta", || format!("η = {} outside (0, 1]", c.eta));
    check_scales(s, c.eta, &c.deltas, &c.moduli);
    s.at_least("n_s", c.n_s, 4);
    s.at_least("n_theta", c.n_theta, 4);
    c
}

fn read_wente(s: &mut Section, d: &WenteConfig) -> WenteConfig {
    let c = WenteConfig {
        modes: s.usize_list("modes", d.modes.clone()),
        scale_exponents: s
            .usize_list("scale_exponents", d.scale_exponents.iter().map(|&k| k as usize).collect())
            .into_iter()
            .map(|k| k.min(u32::MAX as usize) as u32)
            .collect(),
        core: s.f64("core", d.core),
        n_core: s.usize("n_core", d.n_core),
        ds: s.f64("ds", d.ds),
        n_theta: s.usize("n_theta", d.n_theta),
        refine: s.bool("refine", d.refine),
        alpha: s.f64("alpha", d.alpha),
    };
    for &m in &c.modes {
        s.check(m >= 1, "modes", || "angular modes start at 1".into());
    }
    s.check(c.core > 0.0 && c.core < 1.0, "core", || format!("{} outside (0, 1)", c.core));
    for &k in &c.scale_exponents {
        s.check(k >= 1 && 0.5f64.powi(k as i32) > 4.0 * c.core, "scale_exponents", || {
            format!("2^-{k} must lie in (4·core, 1/2]")
        });
    }
    s.check(c.ds > 0.0 && c.ds <= 0.5, "ds", || format!("{} outside (0, 0.5]", c.ds));
    s.at_least("n_core", c.n_core, 2);
    s.at_least("n_theta", c.n_theta, 8);
    s.check(c.alpha > 0.0 && c.alpha < 2.0, "alpha", || format!("α = {} outside (0, 2)", c.alpha));
    c
}

fn read_harmonic(s: &mut Section, d: &HarmonicConfig) -> HarmonicConfig {
    let c = HarmonicConfig {
        eta: s.f64("eta", d.eta),
        delta: s.f64("delta", d.delta),
        n_s: s.usize("n_s", d.n_s),
        n_theta: s.usize("n_theta", d.n_theta),
        constant: s.f64("constant", d.constant),
        log_coeff: s.f64("log_coeff", d.log_coeff),
        modes: s.usize("modes", d.modes),
        positive: s.pair_list("positive", d.positive.clone()),
        negative: s.pair_list("negative", d.negative.clone()),
        mu: s.f64("mu", d.mu),
    };
    s.check(c.eta > 0.0 && c.eta < 1.0, "eta", || format!("η = {} outside (0, 1)", c.eta));
    s.check(c.delta > 0.0 && 4.0 * c.delta < c.eta * c.eta, "delta", || {
        format!("δ = {} outside (0, η²/4) = (0, {})", c.delta, c.eta * c.eta / 4.0)
    });
    s.at_least("n_s", c.n_s, 8);
    s.at_least("n_theta", c.n_theta, 8);
    let cap = c.n_theta / 4;
    let used = c.modes.max(c.positive.len()).max(c.negative.len());
    s.check(used <= cap, "modes", || format!("{used} modes exceed n_theta/4 = {cap}"));
    s.check(c.mu > 0.25 && c.mu < 1.0, "mu", || format!("μ = {} outside (1/4, 1)", c.mu));
    c
}

fn read_series(s: &mut Section, d: &SeriesConfig) -> SeriesConfig {
    let c = SeriesConfig {
        instances: s.usize("instances", d.instances),
        max_len: s.usize("max_len", d.max_len),
        gamma: s.f64("gamma", d.gamma),
        mu: s.f64("mu", d.mu),
        eps0: s.f64("eps0", d.eps0),
        a: s.f64_list("a", d.a.clone()),
        b: s.f64_list("b", d.b.clone()),
        s1: s.usize("s1", d.s1),
        s2: s.usize("s2", d.s2),
    };
    s.check(c.gamma > 0.0 && c.gamma < 1.0, "gamma", || format!("γ = {} outside (0, 1)", c.gamma));
    s.check(c.mu > c.gamma && c.mu < 1.0, "mu", || format!("μ = {} outside (γ, 1)", c.mu));
    s.check(c.eps0 > 0.0, "eps0", || format!("ε₀ = {} must be positive", c.eps0));
    s.check(c.max_len <= 12, "max_len", || format!("{} above 12 (2^(len+3) sequences per window)", c.max_len));
    if !c.a.is_empty() {
        s.check(c.a.len() == c.b.len(), "b", || "a and b need equal length".into());
        s.check(c.s1 <= c.s2 && c.s2 < c.a.len(), "s2", || {
            format!("window [{}, {}] outside 0..{}", c.s1, c.s2, c.a.len())
        });
    }
    c
}

fn read_map(s: &mut Section, d: &MapConfig) -> MapConfig {
    let kind = s.opt_string("map");
    let num = s.pair_list("numerator", vec![]);
    let den = s.pair_list("denominator", vec![]);
    match kind.as_deref() {
        None if num.is_empty() && den.is_empty() => d.clone(),
        Some("constant") => {
            s.check(num.is_empty() && den.is_empty(), "map", || {
                "a constant map takes no coefficients".into()
            });
            MapConfig::Constant
        }
        Some("identity") => MapConfig::identity(),
        None | Some("rational") => {
            s.check(!num.is_empty() && !den.is_empty(), "numerator", || {
                "rational maps need numerator and denominator".into()
            });
            MapConfig::Rational {
                numerator: num,
                denominator: den,
            }
        }
        Some(other) => {
            let m = format!("`{other}` is not one of constant, identity, rational");
            s.fail("map", m);
            d.clone()
        }
    }
}

fn read_index(s: &mut Section, d: &IndexConfig) -> IndexConfig {
    let c = IndexConfig {
        map: read_map(s, &d.map),
        n_rings: s.usize("n_rings", d.n_rings),
        n_theta: s.usize("n_theta", d.n_theta),
        count: s.usize("count", d.count),
        tau: s.f64("tau", d.tau),
        expect_index: s.opt_usize("expect_index"),
        expect_nullity: s.opt_usize("expect_nullity"),
    };
    s.at_least("n_rings", c.n_rings, 4);
    s.at_least("n_theta", c.n_theta, 8);
    s.at_least("count", c.count, 1);
    s.check(c.tau > 0.0 && c.tau < 1.0, "tau", || format!("{} outside (0, 1)", c.tau));
    c
}

fn read_ladder(s: &mut Section, d: &LadderConfig) -> LadderConfig {
    let c = LadderConfig {
        eta: s.f64("eta", d.eta),
        deltas: s.f64_list("deltas", d.deltas.clone()),
        beta: s.f64("beta", d.beta),
        profile: s.profile("profile", d.profile),
        ds: s.f64("ds", d.ds),
        n_north: s.usize("n_north", d.n_north),
        n_theta: s.usize("n_theta", d.n_theta),
        diag_ds: s.f64("diag_ds", d.diag_ds),
        diag_n_north: s.usize("diag_n_north", d.diag_n_north),
        diag_n_theta: s.usize("diag_n_theta", d.diag_n_theta),
        limit_rings: s.usize("limit_rings", d.limit_rings),
        limit_theta: s.usize("limit_theta", d.limit_theta),
        count: s.usize("count", d.count),
        tau: s.f64("tau", d.tau),
    };
    s.check(c.eta > 0.0 && c.eta < 1.0, "eta", || format!("η = {} outside (0, 1)", c.eta));
    s.check(!c.deltas.is_empty(), "deltas", || "empty ladder".into());
    for (i, &delta) in c.deltas.iter().enumerate() {
        s.check(delta > 0.0 && delta <= c.eta * c.eta, "deltas", || {
            format!("δ = {delta} outside (0, η²] = (0, {}]", c.eta * c.eta)
        });
        if i > 0 {
            let prev = c.deltas[i - 1];
            s.check(delta < prev, "deltas", || "scales must decrease".into());
        }
    }
    s.beta("beta", c.beta);
    for (key, ds) in [("ds", c.ds), ("diag_ds", c.diag_ds)] {
        s.check(ds > 0.0 && ds <= 0.5, key, || format!("{ds} outside (0, 0.5]"));
    }
    for (key, n, min) in [
        ("n_north", c.n_north, 4),
        ("n_theta", c.n_theta, 8),
        ("diag_n_north", c.diag_n_north, 4),
        ("diag_n_theta", c.diag_n_theta, 8),
        ("limit_rings", c.limit_rings, 4),
        ("limit_theta", c.limit_theta, 8),
        ("count", c.count, 1),
    ] {
        s.at_least(key, n, min);
    }
    s.check(c.tau > 0.0 && c.tau < 1.0, "tau", || format!("{} outside (0, 1)", c.tau));
    c
}

fn read_neck(s: &mut Section, d: &NeckConfig) -> NeckConfig {
    let c = NeckConfig {
        hardy_moduli: s.f64_list("hardy_moduli", d.hardy_moduli.clone()),
        etas: s.f64_list("etas", d.etas.clone()),
        deltas: s.f64_list("deltas", d.deltas.clone()),
        betas: s.f64_list("betas", d.betas.clone()),
        n_s: s.usize("n_s", d.n_s),
        glued: s.bool("glued", d.glued),
        profile: s.profile("profile", d.profile),
        pointwise_c: s.f64("pointwise_c", d.pointwise_c),
        rings_per_unit: s.usize("rings_per_unit", d.rings_per_unit),
        n_theta: s.usize("n_theta", d.n_theta),
    };
    for &l in &c.hardy_moduli {
        s.check(l > 0.0 && l.is_finite(), "hardy_moduli", || format!("L = {l} must be positive"));
    }
    for &eta in &c.etas {
        s.check(eta > 0.0 && eta < 1.0, "etas", || format!("η = {eta} outside (0, 1)"));
        for &delta in &c.deltas {
            s.check(delta > 0.0 && delta < eta * eta, "deltas", || {
                format!("δ = {delta} outside (0, η²) = (0, {}) for η = {eta}", eta * eta)
            });
        }
    }
    for &b in &c.betas {
        s.beta("betas", b);
    }
    s.at_least("n_s", c.n_s, 8);
    s.check(c.pointwise_c > 0.0, "pointwise_c", || format!("{} must be positive", c.pointwise_c));
    s.at_least("rings_per_unit", c.rings_per_unit, 2);
    s.at_least("n_theta", c.n_theta, 8);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn minimal_annulus_config() {
        let c = parse_config("[annulus]\neta = 1\nmoduli = [4]\nvariants = [\"hardy\", \"inner\"]\n").unwrap();
        assert_eq!(c.annulus.eta, 1.0);
        assert_eq!(c.annulus.variants, vec![HardyVariant::Hardy, HardyVariant::Inner]);
        assert!((c.annulus.all_deltas()[0] - (-4.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn beta_out_of_range_names_beta_and_interval() {
        let e = parse_config("[neck]\nbetas = [1.5]\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].key, "neck.betas");
        assert!(e.0[0].message.contains("β = 1.5") && e.0[0].message.contains("(0, 1)"));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let e = parse_config("[ladder]\neta = 0.2\neta = 0.3\n").unwrap_err();
        assert_eq!(e.0[0].key, "<syntax>");
        assert!(e.to_string().contains("duplicate"), "{e}");
    }

    #[test]
    fn every_violation_is_reported() {
        let text = "[bogus]\nx = 1\n[ladder]\nbeta = 2\nfoo = 3\neta = \"a\"\n[wente]\nmodes = [0]\n";
        let e = parse_config(text).unwrap_err();
        for k in ["bogus", "ladder.beta", "ladder.foo", "ladder.eta", "wente.modes"] {
            assert!(e.0.iter().any(|v| v.key == k), "{k} missing from {e}");
        }
    }

    #[test]
    fn map_forms() {
        let c = parse_config("[index]\nmap = \"constant\"\n").unwrap();
        assert_eq!(c.index.map, MapConfig::Constant);
        let c = parse_config("[index]\nnumerator = [[0, 0], [0, 0], [1, 0]]\ndenominator = [[1, 0]]\n").unwrap();
        assert!(matches!(c.index.map, MapConfig::Rational { ref numerator, .. } if numerator.len() == 3));
        assert!(parse_config("[index]\nmap = \"torus\"\n").unwrap_err().mentions("index.map"));
    }
}

//! Weighted geometric series comparisons on dyadic ring indices.
//!
//! Ring `k` is `A_k = B_{2^{-k}} \ B_{2^{-k-1}}`. Sequences are indexed from 0
//! and vanish past their stored length.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::harmonic_tools::AnnulusFourierDecomposition;

/// Sequences satisfying `a_k ≤ b_k + ε₀ Σ_n γ^{|n−k|} a_n` on the window.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedSeriesInstance {
    a: Vec<f64>,
    b: Vec<f64>,
    gamma: f64,
    mu: f64,
    eps0: f64,
    s1: usize,
    s2: usize,
}

fn geometric_sum(ratio: f64, a: &[f64], k: usize) -> f64 {
    a.iter()
        .enumerate()
        .map(|(n, v)| ratio.powi((n as i64 - k as i64).unsigned_abs() as i32) * v)
        .sum()
}

/// Max of the four case bounds with `(μγ)^{n−s₁} ≤ 1` and `γ^m ≤ μ^m`.
pub fn case_constants(gamma: f64, mu: f64) -> [f64; 4] {
    let gm = gamma * mu;
    let q = 1.0 / (1.0 - gamma / mu);
    [
        1.0 / (1.0 - gm) + q + gm / (1.0 - gm),
        q + gm / (1.0 - gm),
        2.0 / (1.0 - gm) + q,
        1.0 / (1.0 - gm) + q,
    ]
}

pub fn c_mu_gamma(gamma: f64, mu: f64) -> f64 {
    case_constants(gamma, mu).into_iter().fold(0.0, f64::max)
}

fn check_rates(gamma: f64, mu: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} not in (0,1)")));
    }
    if !(mu > gamma && mu < 1.0) {
        return Err(invalid("mu", format!("{mu} not in (gamma,1)")));
    }
    Ok(())
}

impl WeightedSeriesInstance {
    /// Validates parameters and the hypothesis on every `k ∈ [s₁, s₂]`.
    pub fn new(a: Vec<f64>, b: Vec<f64>, gamma: f64, mu: f64, eps0: f64, s1: usize, s2: usize) -> Result<Self> {
        check_rates(gamma, mu)?;
        if !(eps0 >= 0.0 && eps0.is_finite()) {
            return Err(invalid("eps0", format!("{eps0}")));
        }
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch { expected: a.len(), got: b.len() });
        }
        if s1 > s2 || s2 >= a.len() {
            return Err(Error::InvalidWindow(format!("[{s1}, {s2}] with support length {}", a.len())));
        }
        if a.iter().chain(&b).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("sequences", "entries must be finite and non-negative"));
        }
        for k in s1..=s2 {
            let rhs = b[k] + eps0 * geometric_sum(gamma, &a, k);
            if a[k] > rhs * (1.0 + 1e-14) {
                return Err(invalid("hypothesis", format!("fails at k = {k}: {} > {rhs}", a[k])));
            }
        }
        Ok(Self { a, b, gamma, mu, eps0, s1, s2 })
    }

    pub fn window(&self) -> (usize, usize) {
        (self.s1, self.s2)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeriesCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub c_used: f64,
    pub holds: bool,
}

impl SeriesCheck {
    /// `rhs − lhs`, relative to `rhs` when positive.
    pub fn slack(&self) -> f64 {
        if self.rhs > 0.0 {
            (self.rhs - self.lhs) / self.rhs
        } else {
            self.rhs - self.lhs
        }
    }
}

/// Both sides of the weighted comparison at centre `k`.
pub fn series_bound_check(inst: &WeightedSeriesInstance, k: usize) -> Result<SeriesCheck> {
    let (s1, s2) = inst.window();
    if k < s1 || k > s2 {
        return Err(Error::InvalidWindow(format!("k = {k} outside [{s1}, {s2}]")));
    }
    let mu = inst.mu;
    let w = |l: usize| mu.powi((l as i64 - k as i64).unsigned_abs() as i32);
    let lhs: f64 = (s1..=s2).map(|l| w(l) * inst.a[l]).sum();
    let bsum: f64 = (s1..=s2).map(|l| w(l) * inst.b[l]).sum();
    let c_used = c_mu_gamma(inst.gamma, mu);
    let rhs = bsum + c_used * inst.eps0 * geometric_sum(mu, &inst.a, k);
    Ok(SeriesCheck {
        lhs,
        rhs,
        c_used,
        holds: lhs <= rhs * (1.0 + 1e-12) + 1e-300,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvolutionBound {
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `Σ_{ℓ=s₁}^{s₂} γ^{|n−ℓ|} μ^{|ℓ−k|}` against `C_{μ,γ} μ^{|n−k|}`.
pub fn discrete_convolution_bound(
    gamma: f64,
    mu: f64,
    s1: usize,
    s2: usize,
    n: usize,
    k: usize,
) -> Result<ConvolutionBound> {
    check_rates(gamma, mu)?;
    if s1 > s2 {
        return Err(Error::InvalidWindow(format!("[{s1}, {s2}]")));
    }
    let d = |x: usize, y: usize| (x as i64 - y as i64).unsigned_abs() as i32;
    let value: f64 = (s1..=s2).map(|l| gamma.powi(d(n, l)) * mu.powi(d(l, k))).sum();
    let bound = c_mu_gamma(gamma, mu) * mu.powi(d(n, k));
    Ok(ConvolutionBound {
        value,
        bound,
        holds: value <= bound * (1.0 + 1e-12),
    })
}

/// `(s₁, s₂) = (⌊log₂ η⁻¹⌋, ⌊log₂(η/δ)⌋)`.
pub fn dyadic_window(eta: f64, delta: f64) -> Result<(usize, usize)> {
    if !(eta > 0.0 && eta < 1.0 && delta > 0.0 && delta < eta * eta) {
        return Err(invalid("eta/delta", format!("need 0 < δ < η² < 1, got η = {eta}, δ = {delta}")));
    }
    let s1 = (1.0 / eta).log2().floor() as usize;
    let s2 = (eta / delta).log2().floor() as usize;
    if s1 > s2 {
        return Err(Error::InvalidWindow(format!("[{s1}, {s2}]")));
    }
    Ok((s1, s2))
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicSeriesReport {
    pub j: usize,
    pub s1: usize,
    pub s2: usize,
    pub beta: f64,
    /// Weighted sums of the `h⁺`, `h⁻` and `C⁰ log|z|` ring energies.
    pub lhs_plus: f64,
    pub lhs_minus: f64,
    pub lhs_log: f64,
    /// Energy of the decomposition on its annulus.
    pub energy: f64,
    /// `(2^{−j}/η)^β E`.
    pub term_plus: f64,
    /// `(δ/(2^{−j}η))^β E`.
    pub term_minus: f64,
    /// `(C⁰)²`.
    pub term_log: f64,
    /// Measured ratios `lhs_• / term_•` (0 when both vanish).
    pub c_plus: f64,
    pub c_minus: f64,
    pub c_log: f64,
}

impl HarmonicSeriesReport {
    pub fn lhs(&self) -> f64 {
        self.lhs_plus + self.lhs_minus + self.lhs_log
    }

    /// Which of the three parts carries most of the weighted sum.
    pub fn dominant_part(&self) -> &'static str {
        let t = [self.lhs_plus, self.lhs_minus, self.lhs_log];
        let i = (0..3).fold(0, |b, i| if t[i] > t[b] { i } else { b });
        ["plus", "minus", "log"][i]
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Weighted dyadic sums of the harmonic energies against the three-term bound.
pub fn harmonic_series_weights(
    dec: &AnnulusFourierDecomposition,
    eta: f64,
    delta: f64,
    mu: f64,
    j: usize,
) -> Result<HarmonicSeriesReport> {
    if !(mu > 0.25 && mu < 1.0) {
        return Err(invalid("mu", format!("{mu} not in (1/4, 1)")));
    }
    let (s1, s2) = dyadic_window(eta, delta)?;
    if j < s1 || j > s2 {
        return Err(Error::InvalidWindow(format!("j = {j} outside [{s1}, {s2}]")));
    }
    let beta = -mu.log2();
    let (mut lp, mut lm, mut ll) = (0.0, 0.0, 0.0);
    for l in s1..=s2 {
        let w = mu.powi((l as i64 - j as i64).unsigned_abs() as i32);
        let hi = 2f64.powi(-(l as i32));
        let (p, m, g) = dec.ring_energies(hi / 2.0, hi);
        lp += w * p;
        lm += w * m;
        ll += w * g;
    }
    let (p, m, g) = dec.energies();
    let energy = p + m + g;
    let scale = 2f64.powi(-(j as i32));
    let term_plus = (scale / eta).powf(beta) * energy;
    let term_minus = (delta / (scale * eta)).powf(beta) * energy;
    let term_log = dec.log_coeff.powi(2);
    Ok(HarmonicSeriesReport {
        j,
        s1,
        s2,
        beta,
        lhs_plus: lp,
        lhs_minus: lm,
        lhs_log: ll,
        energy,
        term_plus,
        term_minus,
        term_log,
        c_plus: ratio_or_zero(lp, term_plus),
        c_minus: ratio_or_zero(lm, term_minus),
        c_log: ratio_or_zero(ll, term_log),
    })
}

/// Outcome of a batch of series checks.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteSummary {
    pub checks: usize,
    pub violations: usize,
    pub rejected: usize,
    /// Smallest relative slack seen.
    pub worst_slack: f64,
}

impl SuiteSummary {
    fn absorb(&mut self, c: &SeriesCheck) {
        if self.checks == 0 || c.slack() < self.worst_slack {
            self.worst_slack = c.slack();
        }
        self.checks += 1;
        if !c.holds {
            self.violations += 1;
        }
    }

    fn merge(mut self, o: SuiteSummary) -> SuiteSummary {
        if o.checks > 0 && (self.checks == 0 || o.worst_slack < self.worst_slack) {
            self.worst_slack = o.worst_slack;
        }
        self.checks += o.checks;
        self.violations += o.violations;
        self.rejected += o.rejected;
        self
    }
}

/// Rejection-sampled random instances, each checked at every centre.
pub fn randomized_suite(instances: usize, seed: u64) -> SuiteSummary {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    crate::par::map_range(instances, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut out = SuiteSummary::default();
        loop {
            let gamma: f64 = rng.random_range(0.05..0.9);
            let mu: f64 = rng.random_range(gamma..1.0f64).max(gamma + 1e-3).min(0.999);
            let eps0 = 10f64.powf(rng.random_range(-3.0..0.0));
            let len = rng.random_range(2..24usize);
            let s1 = rng.random_range(0..len);
            let s2 = rng.random_range(s1..len);
            let a: Vec<f64> = (0..len)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { 10f64.powf(rng.random_range(-3.0..1.0)) })
                .collect();
            // tightness above 1 can break the hypothesis and is rejected
            let b: Vec<f64> = (0..len)
                .map(|k| {
                    let t = rng.random_range(0.0..1.1);
                    (a[k] - t * eps0 * geometric_sum(gamma, &a, k)).max(0.0)
                })
                .collect();
            match WeightedSeriesInstance::new(a, b, gamma, mu, eps0, s1, s2) {
                Ok(inst) => {
                    for k in s1..=s2 {
                        out.absorb(&series_bound_check(&inst, k).expect("k inside window"));
                    }
                    return out;
                }
                Err(_) => out.rejected += 1,
            }
        }
    })
    .into_iter()
    .fold(SuiteSummary::default(), SuiteSummary::merge)
}

/// Rates used by [`exhaustive_suite`].
pub const EXHAUSTIVE_RATES: [(f64, f64); 6] = [
    (0.25, 0.5),
    (1.0 / 3.0, 0.5),
    (0.5, 2.0 / 3.0),
    (0.5, 0.75),
    (2.0 / 3.0, 0.75),
    (0.75, 0.9),
];

/// Every 0/1 sequence `a` on `0..s₂+3` with the smallest admissible `b`,
/// windows `s₁ ∈ {0,1,2}` of length up to `max_len`, `ε₀ ∈ {1/8, 1}`.
pub fn exhaustive_suite(max_len: usize) -> SuiteSummary {
    let mut cases = Vec::new();
    for &(g, m) in &EXHAUSTIVE_RATES {
        for eps0 in [0.125, 1.0] {
            for s1 in 0..3usize {
                for len in 1..=max_len {
                    cases.push((g, m, eps0, s1, s1 + len - 1));
                }
            }
        }
    }
    crate::par::map_slice(&cases, |&(gamma, mu, eps0, s1, s2)| {
        let n = s2 + 3;
        let mut out = SuiteSummary::default();
        for mask in 0u32..(1 << n) {
            let a: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
            let b: Vec<f64> = (0..n)
                .map(|k| (a[k] - eps0 * geometric_sum(gamma, &a, k)).max(0.0))
                .collect();
            let inst = WeightedSeriesInstance::new(a, b, gamma, mu, eps0, s1, s2).expect("minimal b is admissible");
            for k in s1..=s2 {
                out.absorb(&series_bound_check(&inst, k).expect("k inside window"));
            }
        }
        out
    })
    .into_iter()
    .fold(SuiteSummary::default(), SuiteSummary::merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn zero_eps_gives_equality() {
        let a = vec![1.0, 2.0, 0.5, 3.0, 0.0];
        let inst = WeightedSeriesInstance::new(a.clone(), a, 0.3, 0.6, 0.0, 1, 3).unwrap();
        let c = series_bound_check(&inst, 2).unwrap();
        assert_eq!(c.lhs, c.rhs);
    }

    #[test]
    fn geometric_sequence_has_slack() {
        let gamma: f64 = 0.5;
        let a: Vec<f64> = (0..20).map(|n| gamma.powi(n)).collect();
        let inst = WeightedSeriesInstance::new(a, vec![0.0; 20], gamma, 0.7, 0.6, 2, 10).unwrap();
        for k in 2..=10 {
            let c = series_bound_check(&inst, k).unwrap();
            assert!(c.holds && c.slack() > 0.1);
        }
    }

    #[test]
    fn hypothesis_and_window_rejections() {
        let a = vec![1.0, 1.0, 1.0];
        assert!(WeightedSeriesInstance::new(a.clone(), vec![0.0; 3], 0.5, 0.7, 0.1, 0, 2).is_err());
        assert!(WeightedSeriesInstance::new(a.clone(), a.clone(), 0.5, 0.4, 0.1, 0, 2).is_err());
        assert!(WeightedSeriesInstance::new(a.clone(), a.clone(), 0.5, 0.7, 0.1, 2, 1).is_err());
        let inst = WeightedSeriesInstance::new(a.clone(), a, 0.5, 0.7, 0.1, 1, 1).unwrap();
        assert!(matches!(series_bound_check(&inst, 2), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn case_constant_dominates_cases() {
        let c = case_constants(0.5, 0.75);
        let m = c_mu_gamma(0.5, 0.75);
        assert!(c.iter().all(|x| *x <= m));
        assert_eq!(m, c[2]);
        for n in 0..20 {
            for k in 3..9 {
                assert!(discrete_convolution_bound(0.5, 0.75, 3, 8, n, k).unwrap().holds);
            }
        }
        let v = discrete_convolution_bound(0.5, 0.75, 3, 8, 5, 5).unwrap();
        assert!(v.value <= m);
    }

    #[test]
    fn small_suites() {
        let r = randomized_suite(50, 3);
        assert_eq!(r.violations, 0);
        assert!(r.checks >= 50);
        let e = exhaustive_suite(3);
        assert_eq!(e.violations, 0);
    }

    fn dec(pos: Vec<Complex64>, neg: Vec<Complex64>, log: f64) -> AnnulusFourierDecomposition {
        AnnulusFourierDecomposition::from_coefficients(1e-4, 0.1, 0.0, log, pos, neg)
    }

    #[test]
    fn harmonic_weights_patterns() {
        let (eta, delta, mu) = (0.1, 1e-3, 0.5);
        let one = vec![Complex64::new(1.0, 0.0)];
        let r = harmonic_series_weights(&dec(one.clone(), vec![], 0.0), eta, delta, mu, 4).unwrap();
        assert_eq!(r.dominant_part(), "plus");
        assert_eq!(r.lhs_minus, 0.0);
        let r = harmonic_series_weights(&dec(vec![], one, 0.0), eta, delta, mu, 5).unwrap();
        assert_eq!(r.dominant_part(), "minus");
        let c0 = 0.01 / (eta * eta / delta).ln();
        let r = harmonic_series_weights(&dec(vec![], vec![], c0), eta, delta, mu, 4).unwrap();
        assert_eq!(r.dominant_part(), "log");
        // each ring carries 2π log 2 (C⁰)², weights sum to at most 1 + 2μ/(1−μ)
        assert!(r.lhs_log <= 2.0 * std::f64::consts::PI * 2f64.ln() * 3.0 * c0 * c0);
        assert!(harmonic_series_weights(&dec(vec![], vec![], c0), eta, delta, mu, 1).is_err());
    }
}

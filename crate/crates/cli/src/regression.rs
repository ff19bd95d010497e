//! Pinned empirical constants with tolerance bands.
//!
//! The table lives in `regression.toml` next to the crate manifest and is
//! compiled in. Constants are compared only for runs whose section equals
//! the default, since that is where they were measured.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::output::{num, Check};

#[derive(Clone, Debug, Deserialize, PartialEq)]
pub struct Pinned {
    pub command: String,
    pub name: String,
    pub value: f64,
    /// Band `|x − value| ≤ rel_tol·|value| + abs_tol`.
    #[serde(default)]
    pub rel_tol: f64,
    #[serde(default)]
    pub abs_tol: f64,
}

impl Pinned {
    pub fn admits(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.rel_tol * self.value.abs() + self.abs_tol
    }
}

#[derive(Deserialize)]
struct File {
    constant: Vec<Pinned>,
}

pub const TABLE: &str = include_str!("../regression.toml");

pub fn table() -> Vec<Pinned> {
    toml::from_str::<File>(TABLE).expect("regression.toml is valid").constant
}

/// One check per pinned constant of `command`; missing values fail.
pub fn compare(command: &str, constants: &BTreeMap<String, f64>) -> Vec<Check> {
    table()
        .into_iter()
        .filter(|p| p.command == command)
        .map(|p| {
            let name = format!("regression.{}", p.name);
            match constants.get(&p.name) {
                None => Check {
                    name,
                    passed: false,
                    detail: "constant not produced by the run".into(),
                },
                Some(&x) => Check {
                    name,
                    passed: p.admits(x),
                    detail: format!(
                        "measured {}, pinned {} ± ({}·|v| + {})",
                        num(x),
                        num(p.value),
                        num(p.rel_tol),
                        num(p.abs_tol)
                    ),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_parses_with_positive_bands() {
        let t = table();
        assert!(!t.is_empty());
        for p in &t {
            assert!(p.rel_tol > 0.0 || p.abs_tol > 0.0, "{} has an empty band", p.name);
        }
    }

    #[test]
    fn missing_constant_fails() {
        let checks = compare("lorentz", &BTreeMap::new());
        assert!(!checks.is_empty() && checks.iter().all(|c| !c.passed));
    }
}

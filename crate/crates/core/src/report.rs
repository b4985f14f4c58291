//! Certified bound reports with a per-term breakdown.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `raw_bound == Σ terms`.
pub const TERM_SUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tv,
    Nw,
    Lipschitz,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tv => "tv",
            Method::Nw => "nw",
            Method::Lipschitz => "lipschitz",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(Method::Tv),
            "nw" => Ok(Method::Nw),
            "lipschitz" => Ok(Method::Lipschitz),
            other => Err(Error::Domain(format!("unknown method `{other}`"))),
        }
    }
}

/// Diagnostics of a single cross-fitting fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub values: BTreeMap<String, f64>,
}

/// A certified upper bound on the L1 calibration error.
///
/// `raw_bound` is the sum of `terms`; `bound` is `raw_bound` clamped to
/// `[0, 1]`, since the calibration error never exceeds 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub method: Method,
    pub n_train: usize,
    pub n_valid: usize,
    pub delta: f64,
    pub bound: f64,
    pub raw_bound: f64,
    pub terms: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldDiagnostics>,
}

impl BoundReport {
    /// Builds a report from its additive terms.
    pub fn from_terms(
        method: Method,
        n_train: usize,
        n_valid: usize,
        delta: f64,
        terms: Vec<(&str, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut raw = 0.0;
        for (name, value) in terms {
            if !value.is_finite() {
                return Err(Error::Domain(format!("term `{name}` is not finite: {value}")));
            }
            raw += value;
            map.insert(name.to_string(), value);
        }
        Ok(Self {
            method,
            n_train,
            n_valid,
            delta,
            bound: raw.clamp(0.0, 1.0),
            raw_bound: raw,
            terms: map,
            diagnostics: BTreeMap::new(),
            flags: Vec::new(),
            seed: None,
            folds: Vec::new(),
        })
    }

    pub fn with_diagnostic(mut self, name: &str, value: f64) -> Self {
        self.diagnostics.insert(name.to_string(), value);
        self
    }

    pub fn flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.get(name).copied()
    }

    /// Checks the structural invariants: finite terms that sum to
    /// `raw_bound`, and `bound` equal to the clamped sum.
    pub fn check(&self) -> Result<()> {
        let sum: f64 = self.terms.values().sum();
        let ok = self.terms.values().all(|v| v.is_finite())
            && (sum - self.raw_bound).abs() <= TERM_SUM_TOLERANCE
            && self.bound == self.raw_bound.clamp(0.0, 1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "inconsistent report: terms sum to {sum}, raw bound {}, bound {}",
                self.raw_bound, self.bound
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_is_clamped_sum() {
        let r = BoundReport::from_terms(Method::Tv, 10, 10, 0.05, vec![("a", 0.7), ("b", 0.6)]).unwrap();
        assert!((r.raw_bound - 1.3).abs() < 1e-15);
        assert_eq!(r.bound, 1.0);
        r.check().unwrap();
    }

    #[test]
    fn rejects_non_finite_terms() {
        assert!(BoundReport::from_terms(Method::Nw, 1, 1, 0.1, vec![("a", f64::NAN)]).is_err());
    }

    #[test]
    fn method_round_trips() {
        for m in [Method::Tv, Method::Nw, Method::Lipschitz] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("ece".parse::<Method>().is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut r = BoundReport::from_terms(Method::Lipschitz, 0, 7, 0.1, vec![("x", 0.1 + 0.2)])
            .unwrap()
            .with_diagnostic("B", 4.0);
        r.flag("f");
        r.flag("f");
        assert_eq!(r.flags.len(), 1);
        let back: BoundReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}

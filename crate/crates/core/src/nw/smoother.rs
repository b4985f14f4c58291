//! Tempered Epanechnikov Nadaraya-Watson surrogate and its smoothing-error
//! envelope.

use crate::data::ScoredDataset;
use crate::error::{ensure_domain, Error, Result};

use super::sech::DerivativeBounds;

/// Exponent applied to the Epanechnikov base weights.
pub const TAU: f64 = 1.2;

pub const MIN_BANDWIDTH: f64 = 1e-4;
pub const MAX_BANDWIDTH: f64 = 0.25;

const NEWTON_CAP: usize = 100;

/// Data-driven smoothing bandwidth: solves `2b t⁵ + a t³ = c/2` with
/// `a = 3b1/8`, `b = b2/10`, `c = 1.15 / (2 sqrt(2n))` and returns
/// `t²` clipped to `[1e-4, 0.25]`.
pub fn plugin_bandwidth(b1: f64, b2: f64, n_train: usize) -> Result<f64> {
    let t = plugin_root(b1, b2, n_train)?;
    Ok((t * t).clamp(MIN_BANDWIDTH, MAX_BANDWIDTH))
}

/// Unclipped positive root `t` behind [`plugin_bandwidth`].
pub fn plugin_root(b1: f64, b2: f64, n_train: usize) -> Result<f64> {
    ensure_domain!(b1 >= 0.0 && b2 >= 0.0, "derivative bounds must be nonnegative, got ({b1}, {b2})");
    ensure_domain!(b1 > 0.0 || b2 > 0.0, "at least one derivative bound must be positive");
    ensure_domain!(n_train >= 1, "need at least one training point");
    let a = 3.0 * b1 / 8.0;
    let b = b2 / 10.0;
    let c = 1.15 / (2.0 * (2.0 * n_train as f64).sqrt());
    let f = |t: f64| 2.0 * b * t.powi(5) + a * t.powi(3) - 0.5 * c;
    let df = |t: f64| 10.0 * b * t.powi(4) + 3.0 * a * t * t;

    // Each term alone has a closed-form root; the smaller one lies to the
    // right of the true root, where Newton descends monotonically.
    let cubic = if a > 0.0 { (c / (2.0 * a)).cbrt() } else { f64::INFINITY };
    let quintic = if b > 0.0 { (c / (4.0 * b)).powf(0.2) } else { f64::INFINITY };
    let start = cubic.min(quintic);
    if b == 0.0 || a == 0.0 {
        return Ok(start);
    }

    let tol = 1e-12 * c;
    let mut t = start;
    for _ in 0..NEWTON_CAP {
        let ft = f(t);
        if ft.abs() <= tol {
            return Ok(t);
        }
        let next = t - ft / df(t);
        if !(next > 0.0 && next.is_finite()) {
            break;
        }
        t = next;
    }
    log::debug!("plug-in bandwidth: Newton did not converge, bisecting");
    let (mut lo, mut hi) = (0.0, start);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if f(mid).abs() <= tol {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `R = b1 h_s + ½ b2 h_s² + ½`, an upper bound on the smoothing error at
/// any query with kernel mass.
#[allow(non_snake_case)]
pub fn envelope_R(b1: f64, b2: f64, h_s: f64) -> f64 {
    b1 * h_s + 0.5 * b2 * h_s * h_s + 0.5
}

/// Kernel weights at one query, as `(training index, weight)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub entries: Vec<(usize, f64)>,
    /// No training point lies strictly within `h_s` of the query; all mass
    /// sits on the nearest point.
    pub fallback: bool,
}

/// Nadaraya-Watson surrogate over sorted training scores.
#[derive(Debug, Clone, PartialEq)]
pub struct NwSurrogate {
    scores: Vec<f64>,
    labels: Vec<f64>,
    h_s: f64,
    tau: f64,
    bounds: DerivativeBounds,
    r: f64,
}

impl NwSurrogate {
    pub fn new(train: &ScoredDataset, h_s: f64, bounds: DerivativeBounds) -> Result<Self> {
        ensure_domain!(h_s > 0.0 && h_s.is_finite(), "smoothing bandwidth must be positive, got {h_s}");
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by(|&a, &b| train.scores()[a].total_cmp(&train.scores()[b]));
        Ok(Self {
            scores: order.iter().map(|&i| train.scores()[i]).collect(),
            labels: order.iter().map(|&i| train.label_f64(i)).collect(),
            h_s,
            tau: TAU,
            bounds,
            r: envelope_R(bounds.b1, bounds.b2, h_s),
        })
    }

    /// Surrogate with the plug-in bandwidth for `bounds`.
    pub fn with_plugin_bandwidth(train: &ScoredDataset, bounds: DerivativeBounds) -> Result<Self> {
        let h_s = plugin_bandwidth(bounds.b1, bounds.b2, train.len())?;
        Self::new(train, h_s, bounds)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn bandwidth(&self) -> f64 {
        self.h_s
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bounds(&self) -> DerivativeBounds {
        self.bounds
    }

    #[allow(non_snake_case)]
    pub fn R(&self) -> f64 {
        self.r
    }

    /// Whether some query in `[0, 1]` has no training point strictly within
    /// `h_s`.
    pub fn has_fallback_region(&self) -> bool {
        let h = self.h_s;
        self.scores[0] >= h
            || 1.0 - self.scores[self.scores.len() - 1] >= h
            || self.scores.windows(2).any(|w| w[1] - w[0] >= 2.0 * h)
    }

    pub fn weights(&self, query: f64) -> Weights {
        let lo = self.scores.partition_point(|&s| s <= query - self.h_s);
        let hi = self.scores.partition_point(|&s| s < query + self.h_s);
        let mut entries = Vec::with_capacity(hi.saturating_sub(lo));
        let mut total = 0.0;
        for i in lo..hi {
            let u = (query - self.scores[i]) / self.h_s;
            if u.abs() < 1.0 {
                let w = (1.0 - u * u).powf(self.tau);
                if w > 0.0 {
                    entries.push((i, w));
                    total += w;
                }
            }
        }
        if total > 0.0 {
            for e in &mut entries {
                e.1 /= total;
            }
            return Weights {
                entries,
                fallback: false,
            };
        }
        Weights {
            entries: vec![(self.nearest(query), 1.0)],
            fallback: true,
        }
    }

    /// Index of the training point closest to `query`; ties go to the
    /// smaller score, and among equal scores to the first.
    fn nearest(&self, query: f64) -> usize {
        let right = self.scores.partition_point(|&s| s < query);
        let pick = if right == 0 {
            0
        } else if right == self.scores.len() || query - self.scores[right - 1] <= self.scores[right] - query {
            right - 1
        } else {
            right
        };
        let value = self.scores[pick];
        self.scores.partition_point(|&s| s < value)
    }

    /// `η̂(s') = Σ w_i y_i`.
    pub fn eval(&self, query: f64) -> f64 {
        self.eval_weights(&self.weights(query))
    }

    fn eval_weights(&self, w: &Weights) -> f64 {
        w.entries.iter().map(|&(i, w)| w * self.labels[i]).sum::<f64>().clamp(0.0, 1.0)
    }

    /// `g_T(s') = b1 Σ w|s' − s_i| + (b2/2) Σ w (s' − s_i)² + ½ sqrt(Σ w²)`.
    pub fn smoothing_error(&self, query: f64) -> f64 {
        self.smoothing_error_weights(query, &self.weights(query))
    }

    fn smoothing_error_weights(&self, query: f64, w: &Weights) -> f64 {
        let mut first = 0.0;
        let mut second = 0.0;
        let mut sq = 0.0;
        for &(i, wi) in &w.entries {
            let d = query - self.scores[i];
            first += wi * d.abs();
            second += wi * d * d;
            sq += wi * wi;
        }
        self.bounds.b1 * first + 0.5 * self.bounds.b2 * second + 0.5 * sq.sqrt()
    }

    /// Surrogate value, smoothing error and fallback status at one query.
    pub fn evaluate(&self, query: f64) -> Result<NwPoint> {
        let w = self.weights(query);
        let eta = self.eval_weights(&w);
        let g = self.smoothing_error_weights(query, &w);
        if !w.fallback && g > self.r * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "smoothing error {g} exceeds envelope {} at {query}",
                self.r
            )));
        }
        Ok(NwPoint {
            eta,
            g,
            fallback: w.fallback,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwPoint {
    pub eta: f64,
    pub g: f64,
    pub fallback: bool,
}

/// See [`NwSurrogate::weights`].
pub fn nw_weights(surrogate: &NwSurrogate, query: f64) -> Weights {
    surrogate.weights(query)
}

/// See [`NwSurrogate::eval`].
pub fn nw_eval(surrogate: &NwSurrogate, query: f64) -> f64 {
    surrogate.eval(query)
}

/// See [`NwSurrogate::smoothing_error`].
pub fn smoothing_error_g(surrogate: &NwSurrogate, query: f64) -> f64 {
    surrogate.smoothing_error(query)
}

//! Central-difference verification of backpropagated gradients.
//!
//! The error reported for an entry is `|analytic - numeric| / scale`, where `scale`
//! is the largest gradient magnitude (analytic or numeric) within the same tensor.
//! This keeps near-zero entries from dominating through floating-point noise.

use std::collections::BTreeMap;

use super::{Gradients, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub layer: String,
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    /// Largest error per layer, in layer-name order.
    pub fn per_layer(&self) -> Vec<(String, f64)> {
        let mut by_layer: BTreeMap<&str, f64> = BTreeMap::new();
        for p in &self.params {
            let e = by_layer.entry(&p.layer).or_insert(0.0);
            *e = e.max(p.max_rel_error);
        }
        by_layer.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (layer, err) in self.per_layer() {
            writeln!(f, "{layer:<24} {err:.3e}")?;
        }
        write!(
            f,
            "max {:.3e} (tolerance {:.1e}) {}",
            self.max_rel_error(),
            self.tolerance,
            if self.passed() { "pass" } else { "FAIL" }
        )
    }
}

/// Compares the gradients returned by `eval` against central differences of its loss.
///
/// `eval` must be deterministic (no dropout sampling that varies between calls).
/// At most `max_entries` evenly spaced entries are probed per tensor.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut eval: F,
    epsilon: f64,
    tolerance: f64,
    max_entries: Option<usize>,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = eval(store)?;
    let mut params = Vec::with_capacity(store.len());
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).len();
        let probes: Vec<usize> = match max_entries {
            Some(cap) if cap < n => (0..cap).map(|i| i * n / cap).collect(),
            _ => (0..n).collect(),
        };
        let mut pairs = Vec::with_capacity(probes.len());
        for &k in &probes {
            let original = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = original + epsilon;
            let (plus, _) = eval(store)?;
            store.get_mut(id).data_mut()[k] = original - epsilon;
            let (minus, _) = eval(store)?;
            store.get_mut(id).data_mut()[k] = original;
            pairs.push((analytic.get(id)[k], (plus - minus) / (2.0 * epsilon)));
        }
        let scale = pairs
            .iter()
            .map(|(a, n)| a.abs().max(n.abs()))
            .fold(0.0, f64::max);
        let max_rel_error = pairs
            .iter()
            .map(|(a, n)| {
                let diff = (a - n).abs();
                if diff == 0.0 {
                    0.0
                } else {
                    diff / scale.max(1e-300)
                }
            })
            .fold(0.0, f64::max);
        let p = store.param(id);
        params.push(ParamCheck {
            layer: p.layer.clone(),
            name: p.name.clone(),
            entries_checked: probes.len(),
            max_rel_error,
        });
    }
    Ok(GradCheckReport { tolerance, params })
}

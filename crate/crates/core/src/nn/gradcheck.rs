//! Central finite-difference gradient checking.
//!
//! Parameters are grouped by dropping the last dot-separated segment of
//! their name, so `qformer.l0.self.wq` and `qformer.l0.self.bq` form group
//! `qformer.l0.self`. The error of a group is
//! `max |analytic − numeric| / max(max |analytic|, max |numeric|, floor)`
//! over the checked entries of the group.

use std::collections::BTreeMap;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub entries: usize,
    pub max_abs_diff: f64,
    pub max_magnitude: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Entries checked per tensor, spread evenly; `None` checks all.
    pub max_entries_per_tensor: Option<usize>,
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_entries_per_tensor: None,
            floor: 1e-8,
        }
    }
}

pub fn param_group(name: &str) -> &str {
    name.rsplit_once('.').map(|(g, _)| g).unwrap_or(name)
}

/// Compares analytic gradients of the scalar built by `loss` against
/// central differences for every non-frozen parameter of `store`.
pub fn check_gradients<F>(store: &ParamStore, loss: F, opts: GradCheckOptions) -> Result<Vec<GroupError>>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let l = loss(&mut g)?;
        Ok(g.scalar(l))
    };

    let mut groups: BTreeMap<String, GroupError> = BTreeMap::new();
    let mut probe = store.clone();
    for (name, param) in store.iter() {
        if param.frozen {
            continue;
        }
        let n = param.value.len();
        let cols = param.value.ncols();
        let picks: Vec<usize> = match opts.max_entries_per_tensor {
            Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
            _ => (0..n).collect(),
        };
        let entry = groups.entry(param_group(name).to_string()).or_insert_with(|| GroupError {
            group: param_group(name).to_string(),
            entries: 0,
            max_abs_diff: 0.0,
            max_magnitude: 0.0,
            relative_error: 0.0,
        });
        for idx in picks {
            let at = [idx / cols, idx % cols];
            let orig = param.value[at];
            probe.value_mut(name)?[at] = orig + opts.step;
            let fp = eval(&probe)?;
            probe.value_mut(name)?[at] = orig - opts.step;
            let fm = eval(&probe)?;
            probe.value_mut(name)?[at] = orig;
            let numeric = (fp - fm) / (2.0 * opts.step);
            let a = analytic.get(name).map(|g| g[at]).unwrap_or(0.0);
            entry.entries += 1;
            entry.max_abs_diff = entry.max_abs_diff.max((a - numeric).abs());
            entry.max_magnitude = entry.max_magnitude.max(a.abs()).max(numeric.abs());
        }
    }
    Ok(groups
        .into_values()
        .map(|mut e| {
            e.relative_error = e.max_abs_diff / e.max_magnitude.max(opts.floor);
            e
        })
        .collect())
}

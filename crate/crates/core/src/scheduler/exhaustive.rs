//! Exhaustive search over every combination of paths, for cross-checking the
//! pruned scheduler on small instances.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::power::PowerProfile;
use crate::scheduler::{evaluate_combination, rank, Assignment, Combination, NetworkState, Variant};
use crate::topology::{FatTree, Path};
use crate::traffic::FlowRequest;

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub best: Combination,
    /// Number of complete combinations scored.
    pub combinations: usize,
}

/// Product of the path counts of all requests.
pub fn combination_count(topo: &FatTree, requests: &[FlowRequest]) -> Result<usize> {
    requests.iter().try_fold(1usize, |acc, r| {
        Ok(acc.saturating_mul(topo.enumerate_paths(r.src, r.dst)?.len()))
    })
}

/// Scores every assignment of paths to `requests` against `reference` and
/// returns the best one under the usual ranking.
pub fn exhaustive_best(
    topo: &FatTree,
    profile: &PowerProfile,
    variant: Variant,
    requests: &[FlowRequest],
    reference: &NetworkState,
) -> Result<ExhaustiveResult> {
    let path_sets: Vec<Vec<Arc<Path>>> = requests
        .iter()
        .map(|r| {
            let paths = topo.enumerate_paths(r.src, r.dst)?;
            if paths.is_empty() {
                return Err(Error::NoPath(r.src, r.dst));
            }
            Ok(paths.into_iter().map(Arc::new).collect())
        })
        .collect::<Result<_>>()?;
    if requests.is_empty() {
        return Err(Error::InvalidConfig("exhaustive search needs at least one flow".into()));
    }

    let mut digits = vec![0usize; requests.len()];
    let mut best: Option<Combination> = None;
    let mut count = 0usize;
    loop {
        let assignment: Assignment = requests
            .iter()
            .zip(&digits)
            .zip(&path_sets)
            .map(|((r, &d), paths)| (r.id, Arc::clone(&paths[d])))
            .collect();
        let scored = evaluate_combination(assignment, topo, profile, variant, reference)?;
        count += 1;
        if best.as_ref().is_none_or(|b| rank(&scored, b).is_lt()) {
            best = Some(scored);
        }

        // odometer increment, last flow fastest
        let mut i = digits.len();
        loop {
            if i == 0 {
                return Ok(ExhaustiveResult {
                    best: best.expect("at least one combination"),
                    combinations: count,
                });
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < path_sets[i].len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

//! Online power-aware flow scheduling.
//!
//! Every request extends the stored combinations (complete flow-to-path
//! assignments) with each equal-cost path of the new flow, scores the
//! candidates under the selected objective variant, keeps the best three and
//! installs the best one. Keeping three combinations bounds the work per
//! request to `3 * paths` evaluations no matter how many flows are running.

pub mod exhaustive;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowsim::{max_min_allocate, utilization_factors, Allocation, FlowId, PortUtilization};
use crate::power::{network_power, PowerProfile, SwitchMode, SwitchPowerState};
use crate::topology::{FatTree, Path, SwitchId};
use crate::traffic::FlowRequest;

/// Number of combinations kept between requests.
pub const DEFAULT_KEEP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "lpv1")]
    LpV1,
    #[serde(rename = "lpv2")]
    LpV2,
    #[serde(rename = "lpv3")]
    LpV3,
    #[serde(rename = "lpv4")]
    LpV4,
    #[serde(rename = "sp")]
    Sp,
    #[serde(rename = "smart-sp")]
    SmartSp,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::LpV1,
        Variant::LpV2,
        Variant::LpV3,
        Variant::LpV4,
        Variant::Sp,
        Variant::SmartSp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LpV1 => "lpv1",
            Variant::LpV2 => "lpv2",
            Variant::LpV3 => "lpv3",
            Variant::LpV4 => "lpv4",
            Variant::Sp => "sp",
            Variant::SmartSp => "smart-sp",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Variant::LpV4 => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }

    /// Whether idle switches are put to sleep. The two shortest-path
    /// baselines keep every switch active.
    pub fn sleeps_idle_switches(self) -> bool {
        !matches!(self, Variant::Sp | Variant::SmartSp)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        match norm.as_str() {
            "lpv1" | "lp-v1" => Ok(Variant::LpV1),
            "lpv2" | "lp-v2" => Ok(Variant::LpV2),
            "lpv3" | "lp-v3" => Ok(Variant::LpV3),
            "lpv4" | "lp-v4" => Ok(Variant::LpV4),
            "sp" => Ok(Variant::Sp),
            "smart-sp" | "smartsp" => Ok(Variant::SmartSp),
            _ => Err(Error::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub value: f64,
    pub direction: Direction,
}

impl Objective {
    /// `Less` when `self` is preferable to `other`.
    pub fn preference(&self, other: &Objective) -> Ordering {
        match self.direction {
            Direction::Maximize => other.value.total_cmp(&self.value),
            Direction::Minimize => self.value.total_cmp(&other.value),
        }
    }

    pub fn is_better_than(&self, other: &Objective) -> bool {
        self.preference(other) == Ordering::Less
    }
}

/// Scores a combination. Bandwidth is in bit/s and power in watts; only the
/// ordering of the resulting values matters.
pub fn objective_value(
    variant: Variant,
    sum_bw_bps: f64,
    total_pc_w: f64,
    transition_degree: usize,
) -> Result<Objective> {
    if !(total_pc_w > 0.0) {
        return Err(Error::NonPositivePower(total_pc_w));
    }
    let transitions = transition_degree as f64 + 1.0;
    let value = match variant {
        Variant::LpV1 => sum_bw_bps / (transitions * total_pc_w),
        Variant::LpV2 => sum_bw_bps / total_pc_w,
        Variant::LpV3 | Variant::SmartSp | Variant::Sp => sum_bw_bps,
        Variant::LpV4 => transitions * total_pc_w,
    };
    Ok(Objective {
        value,
        direction: variant.direction(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Sum of max-min rates, bit/s, rounded to whole bits.
    pub sum_bw_bps: f64,
    /// Network power, watts, rounded to the microwatt.
    pub total_pc_w: f64,
    /// Switches that must wake up to realize the assignment.
    pub transition_degree: usize,
}

/// Flow-to-path assignment, ordered by flow id.
pub type Assignment = BTreeMap<FlowId, Arc<Path>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub assignment: Assignment,
    pub metrics: Metrics,
    pub objective: Objective,
}

impl Combination {
    pub fn active_switches(&self) -> BTreeSet<SwitchId> {
        footprint(&self.assignment)
    }
}

/// Switches crossed by any path of an assignment.
pub fn footprint(assignment: &Assignment) -> BTreeSet<SwitchId> {
    assignment
        .values()
        .flat_map(|p| p.switches.iter().copied())
        .collect()
}

fn quantize(x: f64, scale: f64) -> f64 {
    (x * scale).round() / scale
}

/// Current switch modes, installed flow table and the resulting link usage.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub modes: Vec<SwitchMode>,
    pub installed: Assignment,
    pub allocation: Allocation,
    pub utilization: PortUtilization,
}

impl NetworkState {
    /// All switches asleep for the sleeping variants, all awake for the baselines.
    pub fn initial(topo: &FatTree, variant: Variant) -> Self {
        let mode = if variant.sleeps_idle_switches() {
            SwitchMode::Sleeping
        } else {
            SwitchMode::Active
        };
        NetworkState {
            modes: vec![mode; topo.num_switches()],
            installed: Assignment::new(),
            allocation: Allocation {
                rates: BTreeMap::new(),
                channel_load_bps: vec![0.0; topo.num_channels()],
            },
            utilization: PortUtilization::idle(topo),
        }
    }

    pub fn is_sleeping(&self, s: SwitchId) -> bool {
        self.modes[s] == SwitchMode::Sleeping
    }

    pub fn active_count(&self) -> usize {
        self.modes.iter().filter(|m| **m == SwitchMode::Active).count()
    }

    pub fn switch_states(&self) -> Vec<SwitchPowerState> {
        self.modes
            .iter()
            .zip(&self.utilization.per_switch)
            .map(|(&mode, ports)| match mode {
                SwitchMode::Active => SwitchPowerState {
                    mode,
                    ports: ports.clone(),
                },
                SwitchMode::Sleeping => {
                    SwitchPowerState::sleeping(ports.iter().map(|p| p.rate_bps))
                }
            })
            .collect()
    }

    pub fn power(&self, profile: &PowerProfile) -> Result<f64> {
        network_power(profile, &self.switch_states())
    }

    fn install(&mut self, topo: &FatTree, variant: Variant, assignment: Assignment) -> Result<()> {
        let allocation = max_min_allocate(topo, assignment.iter().map(|(id, p)| (*id, p.as_ref())))?;
        let used = footprint(&assignment);
        for (s, mode) in self.modes.iter_mut().enumerate() {
            *mode = if !variant.sleeps_idle_switches() || used.contains(&s) {
                SwitchMode::Active
            } else {
                SwitchMode::Sleeping
            };
        }
        self.utilization = utilization_factors(topo, &allocation);
        self.allocation = allocation;
        self.installed = assignment;
        Ok(())
    }
}

/// Scores one candidate assignment against the current network state.
///
/// Switches on candidate paths are active with the utilization of the
/// candidate's max-min allocation; every other switch sleeps, except under
/// the baselines where idle switches stay active.
pub fn evaluate_combination(
    assignment: Assignment,
    topo: &FatTree,
    profile: &PowerProfile,
    variant: Variant,
    current: &NetworkState,
) -> Result<Combination> {
    let allocation = max_min_allocate(topo, assignment.iter().map(|(id, p)| (*id, p.as_ref())))?;
    let utilization = utilization_factors(topo, &allocation);
    let used = footprint(&assignment);
    let transition_degree = used.iter().filter(|&&s| current.is_sleeping(s)).count();

    let states: Vec<SwitchPowerState> = utilization
        .per_switch
        .iter()
        .enumerate()
        .map(|(s, ports)| {
            if used.contains(&s) || !variant.sleeps_idle_switches() {
                SwitchPowerState {
                    mode: SwitchMode::Active,
                    ports: ports.clone(),
                }
            } else {
                SwitchPowerState::sleeping(ports.iter().map(|p| p.rate_bps))
            }
        })
        .collect();
    let metrics = Metrics {
        sum_bw_bps: quantize(allocation.total_bps(), 1.0),
        total_pc_w: quantize(network_power(profile, &states)?, 1e6),
        transition_degree,
    };
    let objective = objective_value(
        variant,
        metrics.sum_bw_bps,
        metrics.total_pc_w,
        metrics.transition_degree,
    )?;
    Ok(Combination {
        assignment,
        metrics,
        objective,
    })
}

/// Full ranking order: objective in the variant's direction, then fewer
/// wake-ups, then lower power, then the lexicographically smallest sequence
/// of switch ids over the flows.
pub fn rank(a: &Combination, b: &Combination) -> Ordering {
    a.objective
        .preference(&b.objective)
        .then(a.metrics.transition_degree.cmp(&b.metrics.transition_degree))
        .then(a.metrics.total_pc_w.total_cmp(&b.metrics.total_pc_w))
        .then_with(|| {
            let ka = a.assignment.iter().map(|(id, p)| (id, &p.switches));
            let kb = b.assignment.iter().map(|(id, p)| (id, &p.switches));
            ka.cmp(kb)
        })
}

/// Every stored combination extended with each path of the new flow; a single
/// candidate per path when nothing is stored yet.
pub fn extend_combinations(
    stored: &[Combination],
    request: &FlowRequest,
    paths: &[Arc<Path>],
) -> Result<Vec<Assignment>> {
    if paths.is_empty() {
        return Err(Error::NoPath(request.src, request.dst));
    }
    if stored.is_empty() {
        return Ok(paths
            .iter()
            .map(|p| Assignment::from([(request.id, Arc::clone(p))]))
            .collect());
    }
    let mut out = Vec::with_capacity(stored.len() * paths.len());
    for c in stored {
        for p in paths {
            let mut a = c.assignment.clone();
            a.insert(request.id, Arc::clone(p));
            out.push(a);
        }
    }
    Ok(out)
}

/// Ranks candidates and returns the `keep` best (all of them when `keep` is
/// `None`) together with the single best one.
pub fn select_top(
    mut candidates: Vec<Combination>,
    keep: Option<usize>,
) -> Option<(Vec<Combination>, Combination)> {
    if candidates.is_empty() {
        return None;
    }
    candidates.sort_by(rank);
    if let Some(k) = keep {
        candidates.truncate(k.max(1));
    }
    let best = candidates[0].clone();
    Some((candidates, best))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pruning {
    /// Keep only this many combinations between requests.
    Keep(usize),
    /// Keep every combination; growth is the product of path counts.
    Disabled,
}

impl Pruning {
    fn keep(self) -> Option<usize> {
        match self {
            Pruning::Keep(k) => Some(k),
            Pruning::Disabled => None,
        }
    }
}

impl Default for Pruning {
    fn default() -> Self {
        Pruning::Keep(DEFAULT_KEEP)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleDecision {
    pub flow: FlowId,
    pub path: Arc<Path>,
    /// Previously installed flows whose path changed.
    pub rerouted: Vec<FlowId>,
    pub woken: Vec<SwitchId>,
    pub slept: Vec<SwitchId>,
    pub metrics: Metrics,
    pub objective: Objective,
    pub path_count: usize,
    pub candidates_evaluated: usize,
}

/// Scheduler state: stored combinations, network state and variant.
#[derive(Debug, Clone)]
pub struct Scheduler<'t> {
    topo: &'t FatTree,
    profile: PowerProfile,
    variant: Variant,
    pruning: Pruning,
    combinations: Vec<Combination>,
    network: NetworkState,
    requests: BTreeMap<FlowId, FlowRequest>,
    evaluations: usize,
}

impl<'t> Scheduler<'t> {
    pub fn new(topo: &'t FatTree, profile: PowerProfile, variant: Variant) -> Self {
        Scheduler {
            topo,
            profile,
            variant,
            pruning: Pruning::default(),
            combinations: Vec::new(),
            network: NetworkState::initial(topo, variant),
            requests: BTreeMap::new(),
            evaluations: 0,
        }
    }

    pub fn with_pruning(mut self, pruning: Pruning) -> Self {
        self.pruning = pruning;
        self
    }

    pub fn topology(&self) -> &'t FatTree {
        self.topo
    }

    pub fn profile(&self) -> &PowerProfile {
        &self.profile
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn combinations(&self) -> &[Combination] {
        &self.combinations
    }

    pub fn network(&self) -> &NetworkState {
        &self.network
    }

    pub fn requests(&self) -> &BTreeMap<FlowId, FlowRequest> {
        &self.requests
    }

    /// Candidate evaluations performed since construction.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn total_power(&self) -> Result<f64> {
        self.network.power(&self.profile)
    }

    /// Metrics of the installed assignment, recomputed from scratch.
    pub fn installed_metrics(&self) -> Result<Combination> {
        let reference = NetworkState {
            modes: self.network.modes.clone(),
            ..NetworkState::initial(self.topo, self.variant)
        };
        evaluate_combination(
            self.network.installed.clone(),
            self.topo,
            &self.profile,
            self.variant,
            &reference,
        )
    }

    fn paths_for(&self, request: &FlowRequest) -> Result<Vec<Arc<Path>>> {
        let paths = self.topo.enumerate_paths(request.src, request.dst)?;
        if paths.is_empty() {
            return Err(Error::NoPath(request.src, request.dst));
        }
        Ok(paths.into_iter().map(Arc::new).collect())
    }

    fn check_new(&self, request: &FlowRequest) -> Result<()> {
        if self.requests.contains_key(&request.id) {
            return Err(Error::DuplicateFlow(request.id));
        }
        Ok(())
    }

    /// Places one new flow request.
    pub fn schedule(&mut self, request: FlowRequest) -> Result<ScheduleDecision> {
        if self.variant == Variant::Sp {
            return self.schedule_baseline_sp(request);
        }
        self.check_new(&request)?;
        let paths = self.paths_for(&request)?;
        let candidates = extend_combinations(&self.combinations, &request, &paths)?;
        let evaluated = candidates.len();
        let scored = candidates
            .into_iter()
            .map(|a| evaluate_combination(a, self.topo, &self.profile, self.variant, &self.network))
            .collect::<Result<Vec<_>>>()?;
        self.evaluations += evaluated;
        let (top, best) =
            select_top(scored, self.pruning.keep()).expect("at least one path per request");
        self.combinations = top;
        let id = request.id;
        self.requests.insert(id, request);
        self.apply(id, best.assignment, best.metrics, best.objective, paths.len(), evaluated)
    }

    /// Always the first enumerated shortest path; no combinations are kept
    /// and no flow is ever moved.
    pub fn schedule_baseline_sp(&mut self, request: FlowRequest) -> Result<ScheduleDecision> {
        self.check_new(&request)?;
        let paths = self.paths_for(&request)?;
        let mut assignment = self.network.installed.clone();
        assignment.insert(request.id, Arc::clone(&paths[0]));
        let scored =
            evaluate_combination(assignment, self.topo, &self.profile, self.variant, &self.network)?;
        let id = request.id;
        self.requests.insert(id, request);
        self.apply(id, scored.assignment, scored.metrics, scored.objective, paths.len(), 0)
    }

    fn apply(
        &mut self,
        flow: FlowId,
        assignment: Assignment,
        metrics: Metrics,
        objective: Objective,
        path_count: usize,
        candidates_evaluated: usize,
    ) -> Result<ScheduleDecision> {
        let before_modes = self.network.modes.clone();
        let rerouted = self
            .network
            .installed
            .iter()
            .filter(|(id, p)| assignment.get(id).is_some_and(|q| q != *p))
            .map(|(id, _)| *id)
            .collect();
        let path = Arc::clone(&assignment[&flow]);
        self.network.install(self.topo, self.variant, assignment)?;
        let (woken, slept) = mode_changes(&before_modes, &self.network.modes);
        Ok(ScheduleDecision {
            flow,
            path,
            rerouted,
            woken,
            slept,
            metrics,
            objective,
            path_count,
            candidates_evaluated,
        })
    }

    /// Removes a finished flow from the network and from every stored
    /// combination; idle switches go back to sleep.
    pub fn depart(&mut self, flow: FlowId) -> Result<Vec<SwitchId>> {
        if self.requests.remove(&flow).is_none() {
            return Err(Error::UnknownFlow(flow));
        }
        let before_modes = self.network.modes.clone();
        let mut installed = std::mem::take(&mut self.network.installed);
        installed.remove(&flow);
        self.network.install(self.topo, self.variant, installed)?;

        let mut rescored = Vec::with_capacity(self.combinations.len());
        let mut seen = BTreeSet::new();
        for c in std::mem::take(&mut self.combinations) {
            let mut a = c.assignment;
            a.remove(&flow);
            let key: Vec<(FlowId, Vec<SwitchId>)> =
                a.iter().map(|(id, p)| (*id, p.switches.clone())).collect();
            if a.is_empty() || !seen.insert(key) {
                continue;
            }
            rescored.push(evaluate_combination(
                a,
                self.topo,
                &self.profile,
                self.variant,
                &self.network,
            )?);
        }
        rescored.sort_by(rank);
        self.combinations = rescored;
        Ok(mode_changes(&before_modes, &self.network.modes).1)
    }
}

fn mode_changes(before: &[SwitchMode], after: &[SwitchMode]) -> (Vec<SwitchId>, Vec<SwitchId>) {
    let mut woken = Vec::new();
    let mut slept = Vec::new();
    for (s, (b, a)) in before.iter().zip(after).enumerate() {
        match (b, a) {
            (SwitchMode::Sleeping, SwitchMode::Active) => woken.push(s),
            (SwitchMode::Active, SwitchMode::Sleeping) => slept.push(s),
            _ => {}
        }
    }
    (woken, slept)
}

//! Parameter sweeps over topology size, variant, flow count, sleeping-mode
//! saving and seed, with CSV/JSON output.
//!
//! Every grid point owns its topology, scenario and schedulers, so points run
//! in parallel; results are emitted in grid order so output bytes only depend
//! on the configuration.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::flowsim::{simulate_ttc_report, TtcReport};
use crate::power::PowerProfile;
use crate::scheduler::exhaustive::exhaustive_best;
use crate::scheduler::{Direction, Scheduler, Variant};
use crate::topology::{build_fat_tree, FatTree, DEFAULT_LINK_RATE_BPS};
use crate::traffic::{generate_flow_count, TrafficScenario, DEFAULT_VOLUME_GB};

/// Sleeping-mode savings swept for the saving-vs-sleep table.
pub const SWEEP_SLEEP_SAVINGS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Flow counts swept per topology size.
pub fn sweep_flow_counts(k: usize) -> Option<&'static [usize]> {
    match k {
        4 => Some(&[1, 3, 5, 8]),
        6 => Some(&[2, 5, 10, 15, 20, 27]),
        8 => Some(&[5, 20, 35, 50, 64]),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowSpec {
    Count(usize),
    /// Every host in a pair.
    Max,
    /// The per-size sweep of [`sweep_flow_counts`]; `Max` for other sizes.
    Sweep,
}

impl std::str::FromStr for FlowSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(FlowSpec::Max),
            "sweep" => Ok(FlowSpec::Sweep),
            n => n
                .parse::<usize>()
                .map(FlowSpec::Count)
                .map_err(|_| Error::InvalidConfig(format!("bad flow count `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub ks: Vec<usize>,
    pub variants: Vec<Variant>,
    pub flows: Vec<FlowSpec>,
    pub sleep_savings: Vec<f64>,
    pub seeds: Vec<u64>,
    pub volume_bytes: f64,
    pub profile: PowerProfile,
    pub link_rate_bps: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ks: vec![4, 6, 8],
            variants: Variant::ALL.to_vec(),
            flows: vec![FlowSpec::Sweep],
            sleep_savings: vec![0.6],
            seeds: vec![1],
            volume_bytes: DEFAULT_VOLUME_GB * 1e9,
            profile: PowerProfile::default(),
            link_rate_bps: DEFAULT_LINK_RATE_BPS,
        }
    }
}

impl ExperimentConfig {
    /// Every size, variant, swept flow count and sleeping saving.
    pub fn full_grid() -> Self {
        ExperimentConfig {
            sleep_savings: SWEEP_SLEEP_SAVINGS.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.ks.is_empty() || self.variants.is_empty() || self.flows.is_empty() {
            return bad("sizes, variants and flow counts must be nonempty");
        }
        if self.sleep_savings.is_empty() || self.seeds.is_empty() {
            return bad("sleep savings and seeds must be nonempty");
        }
        if let Some(s) = self.sleep_savings.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidConfig(format!("sleep saving {s} outside [0, 1]")));
        }
        if !(self.volume_bytes >= 0.0) {
            return bad("volume must be nonnegative");
        }
        self.profile.validate()
    }

    fn flow_counts(&self, k: usize) -> Vec<usize> {
        let max = k * k * k / 8;
        let mut out = Vec::new();
        for spec in &self.flows {
            match spec {
                FlowSpec::Count(n) => out.push(*n),
                FlowSpec::Max => out.push(max),
                FlowSpec::Sweep => match sweep_flow_counts(k) {
                    Some(c) => out.extend_from_slice(c),
                    None => out.push(max),
                },
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        out.retain(|n| seen.insert(*n));
        out
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &k in &self.ks {
            for flows in self.flow_counts(k) {
                for &sleep_saving in &self.sleep_savings {
                    for &seed in &self.seeds {
                        points.push(GridPoint {
                            k,
                            flows,
                            sleep_saving,
                            seed,
                        });
                    }
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub k: usize,
    pub flows: usize,
    pub sleep_saving: f64,
    pub seed: u64,
}

/// Outcome of one variant on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantRun {
    pub variant: Variant,
    pub total_pc_w: f64,
    pub active_switches: usize,
    pub sleeping_switches: usize,
    pub sum_bw_bps: f64,
    pub ttc: TtcReport,
    /// Largest number of candidate evaluations for a single request.
    pub max_evaluations_per_request: usize,
    /// Path count of that request.
    pub max_paths_per_request: usize,
}

/// Schedules the whole scenario with one variant and simulates the transfers.
pub fn run_variant(
    topo: &FatTree,
    profile: &PowerProfile,
    variant: Variant,
    scenario: &TrafficScenario,
) -> Result<VariantRun> {
    let mut sched = Scheduler::new(topo, profile.clone(), variant);
    let mut max_evals = 0;
    let mut max_paths = 0;
    for r in &scenario.requests {
        let d = sched.schedule(r.clone())?;
        if d.candidates_evaluated >= max_evals {
            max_evals = d.candidates_evaluated;
            max_paths = d.path_count;
        }
    }
    let flows: Vec<_> = scenario
        .requests
        .iter()
        .map(|r| {
            let path = sched.network().installed[&r.id].as_ref().clone();
            r.to_flow().with_path(path)
        })
        .collect();
    let ttc = simulate_ttc_report(topo, &flows)?;
    let active = sched.network().active_count();
    Ok(VariantRun {
        variant,
        total_pc_w: sched.total_power()?,
        active_switches: active,
        sleeping_switches: topo.num_switches() - active,
        sum_bw_bps: sched.network().allocation.total_bps(),
        ttc,
        max_evaluations_per_request: max_evals,
        max_paths_per_request: max_paths,
    })
}

/// Saving of a variant relative to Smart SP, in percent.
pub fn power_saving_pct(pc_variant: f64, pc_smart_sp: f64) -> Result<f64> {
    if !(pc_smart_sp > 0.0) {
        return Err(Error::NonPositiveBaseline(pc_smart_sp));
    }
    Ok((pc_smart_sp - pc_variant) / pc_smart_sp * 100.0)
}

/// Position of a variant between the LP-v4 (0%) and Smart SP (100%) power
/// bounds.
pub fn degradation_pct(pc_x: f64, pc_lpv4: f64, pc_smart_sp: f64) -> Result<f64> {
    if !(pc_smart_sp > pc_lpv4) {
        return Err(Error::DegenerateBounds {
            lower: pc_lpv4,
            upper: pc_smart_sp,
        });
    }
    Ok((pc_x - pc_lpv4) / (pc_smart_sp - pc_lpv4) * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub k: usize,
    pub variant: Variant,
    pub flows: usize,
    pub sleep_saving: f64,
    pub seed: u64,
    pub total_pc_w: f64,
    pub active_switches: usize,
    pub sleeping_switches: usize,
    pub sum_bw_bps: f64,
    pub ttc_mean_s: f64,
    pub ttc_max_s: f64,
    pub power_saving_pct: f64,
    /// `None` when the LP-v4 and Smart SP bounds coincide.
    pub degradation_pct: Option<f64>,
    pub max_evaluations_per_request: usize,
    pub max_paths_per_request: usize,
    pub ttc_per_flow_s: Vec<f64>,
}

/// Runs every requested variant (plus the LP-v4 and Smart SP references) on
/// one grid point.
pub fn run_point(
    config: &ExperimentConfig,
    topo: &FatTree,
    point: &GridPoint,
) -> Result<Vec<ResultRow>> {
    let scenario = generate_flow_count(topo, point.seed, point.flows, config.volume_bytes)?;
    run_scenario(config, topo, &scenario, point.sleep_saving)
}

/// Runs every requested variant on a given scenario (for replaying exported
/// scenarios).
pub fn run_scenario(
    config: &ExperimentConfig,
    topo: &FatTree,
    scenario: &TrafficScenario,
    sleep_saving: f64,
) -> Result<Vec<ResultRow>> {
    let profile = config.profile.clone().with_sleep_saving(sleep_saving)?;
    let point = GridPoint {
        k: topo.k(),
        flows: scenario.len(),
        sleep_saving,
        seed: scenario.seed,
    };

    let mut needed: Vec<Variant> = config.variants.clone();
    for v in [Variant::LpV4, Variant::SmartSp] {
        if !needed.contains(&v) {
            needed.push(v);
        }
    }
    let runs: BTreeMap<Variant, VariantRun> = needed
        .iter()
        .map(|&v| run_variant(topo, &profile, v, scenario).map(|r| (v, r)))
        .collect::<Result<_>>()?;
    let pc_ss = runs[&Variant::SmartSp].total_pc_w;
    let pc_v4 = runs[&Variant::LpV4].total_pc_w;

    config
        .variants
        .iter()
        .map(|v| {
            let run = &runs[v];
            Ok(ResultRow {
                k: point.k,
                variant: *v,
                flows: point.flows,
                sleep_saving: point.sleep_saving,
                seed: point.seed,
                total_pc_w: run.total_pc_w,
                active_switches: run.active_switches,
                sleeping_switches: run.sleeping_switches,
                sum_bw_bps: run.sum_bw_bps,
                ttc_mean_s: run.ttc.mean_s(),
                ttc_max_s: run.ttc.max_s(),
                power_saving_pct: power_saving_pct(run.total_pc_w, pc_ss)?,
                degradation_pct: degradation_pct(run.total_pc_w, pc_v4, pc_ss).ok(),
                max_evaluations_per_request: run.max_evaluations_per_request,
                max_paths_per_request: run.max_paths_per_request,
                ttc_per_flow_s: run.ttc.completion_s.values().copied().collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointFailure {
    pub point: GridPoint,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<PointFailure>,
}

/// Runs the sweep, calling `sink` once per grid point in grid order as soon
/// as the point and all points before it are done. A failing point is
/// reported and the sweep continues.
pub fn run_experiment_with<F>(config: &ExperimentConfig, mut sink: F) -> Result<ExperimentOutput>
where
    F: FnMut(&GridPoint, &std::result::Result<Vec<ResultRow>, String>),
{
    config.validate()?;
    let mut topologies: BTreeMap<usize, std::result::Result<FatTree, String>> = BTreeMap::new();
    for &k in &config.ks {
        topologies
            .entry(k)
            .or_insert_with(|| build_fat_tree(k, config.link_rate_bps).map_err(|e| e.to_string()));
    }

    let points = config.grid();
    let batch = rayon::current_num_threads().max(1) * 2;
    let mut out = ExperimentOutput::default();
    for chunk in points.chunks(batch) {
        let results: Vec<std::result::Result<Vec<ResultRow>, String>> = chunk
            .par_iter()
            .map(|p| match &topologies[&p.k] {
                Ok(topo) => run_point(config, topo, p).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            })
            .collect();
        for (p, r) in chunk.iter().zip(results) {
            sink(p, &r);
            match r {
                Ok(rows) => out.rows.extend(rows),
                Err(error) => {
                    log::warn!("grid point {p:?} failed: {error}");
                    out.failures.push(PointFailure { point: *p, error });
                }
            }
        }
    }
    Ok(out)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, |_, _| {})
}

/// Column order of the CSV output.
pub const CSV_HEADER: [&str; 16] = [
    "k",
    "variant",
    "flows",
    "sleep_saving",
    "seed",
    "total_pc_w",
    "active_switches",
    "sleeping_switches",
    "sum_bw_bps",
    "ttc_mean_s",
    "ttc_max_s",
    "power_saving_pct",
    "degradation_pct",
    "max_evaluations_per_request",
    "max_paths_per_request",
    "ttc_per_flow_s",
];

fn csv_record(r: &ResultRow) -> Vec<String> {
    vec![
        r.k.to_string(),
        r.variant.to_string(),
        r.flows.to_string(),
        format!("{:.4}", r.sleep_saving),
        r.seed.to_string(),
        format!("{:.6}", r.total_pc_w),
        r.active_switches.to_string(),
        r.sleeping_switches.to_string(),
        format!("{:.3}", r.sum_bw_bps),
        format!("{:.6}", r.ttc_mean_s),
        format!("{:.6}", r.ttc_max_s),
        format!("{:.6}", r.power_saving_pct),
        r.degradation_pct.map(|d| format!("{d:.6}")).unwrap_or_default(),
        r.max_evaluations_per_request.to_string(),
        r.max_paths_per_request.to_string(),
        r.ttc_per_flow_s
            .iter()
            .map(|t| format!("{t:.6}"))
            .collect::<Vec<_>>()
            .join(";"),
    ]
}

pub fn write_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(csv_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Incremental CSV writer for use as a [`run_experiment_with`] sink.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(writer);
        writer.write_record(CSV_HEADER)?;
        Ok(CsvSink { writer })
    }

    pub fn push(&mut self, rows: &[ResultRow]) -> Result<()> {
        for r in rows {
            self.writer.write_record(csv_record(r))?;
        }
        self.writer.flush()?;
        Ok(())
    }
}

fn key_k(k: usize) -> String {
    format!("k{k}")
}

fn key_s(s: f64) -> String {
    format!("{s:.2}")
}

/// Picks the rows of the largest flow count per size, at the sleeping saving
/// closest to `target_s`, for the first seed.
fn full_load_rows(rows: &[ResultRow], target_s: f64) -> BTreeMap<usize, Vec<&ResultRow>> {
    let mut out: BTreeMap<usize, Vec<&ResultRow>> = BTreeMap::new();
    let Some(seed) = rows.first().map(|r| r.seed) else {
        return out;
    };
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.dedup();
    for k in ks {
        let of_k: Vec<&ResultRow> = rows.iter().filter(|r| r.k == k && r.seed == seed).collect();
        let Some(flows) = of_k.iter().map(|r| r.flows).max() else {
            continue;
        };
        let s = of_k
            .iter()
            .map(|r| r.sleep_saving)
            .min_by(|a, b| (a - target_s).abs().total_cmp(&(b - target_s).abs()))
            .unwrap_or(target_s);
        out.insert(
            k,
            of_k.into_iter()
                .filter(|r| r.flows == flows && r.sleep_saving == s)
                .collect(),
        );
    }
    out
}

/// Plot-ready summary keyed by table/figure name.
pub fn summarize(rows: &[ResultRow]) -> Value {
    let full = full_load_rows(rows, 0.6);
    let mut table2 = serde_json::Map::new();
    let mut fig3 = serde_json::Map::new();
    let mut fig5 = serde_json::Map::new();
    let mut fig6 = serde_json::Map::new();
    for (k, rs) in &full {
        let pick = |v: Variant| rs.iter().find(|r| r.variant == v);
        let mut t2 = serde_json::Map::new();
        let mut f3 = serde_json::Map::new();
        for v in [Variant::Sp, Variant::SmartSp] {
            if let Some(r) = pick(v) {
                t2.insert(v.to_string(), json!(r.total_pc_w));
                f3.insert(v.to_string(), json!(r.ttc_mean_s));
            }
        }
        let mut f5 = serde_json::Map::new();
        let mut f6 = serde_json::Map::new();
        for v in [Variant::LpV1, Variant::LpV2, Variant::LpV3, Variant::LpV4] {
            if let Some(r) = pick(v) {
                f5.insert(v.to_string(), json!(r.ttc_mean_s));
                if v != Variant::LpV4 {
                    f6.insert(v.to_string(), json!(r.degradation_pct));
                }
            }
        }
        table2.insert(key_k(*k), Value::Object(t2));
        fig3.insert(key_k(*k), Value::Object(f3));
        fig5.insert(key_k(*k), Value::Object(f5));
        fig6.insert(key_k(*k), Value::Object(f6));
    }

    // saving vs sleeping-mode saving at the largest flow count of each size
    let mut table3 = serde_json::Map::new();
    let mut fig4 = serde_json::Map::new();
    if let Some(seed) = rows.first().map(|r| r.seed) {
        let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
        ks.dedup();
        for k in ks {
            let of_k: Vec<&ResultRow> =
                rows.iter().filter(|r| r.k == k && r.seed == seed).collect();
            let max_flows = of_k.iter().map(|r| r.flows).max().unwrap_or(0);
            let mut t3: BTreeMap<String, serde_json::Map<String, Value>> = BTreeMap::new();
            let mut f4: BTreeMap<String, BTreeMap<String, Vec<[f64; 2]>>> = BTreeMap::new();
            for r in &of_k {
                if r.flows == max_flows && r.variant.sleeps_idle_switches() {
                    t3.entry(r.variant.to_string())
                        .or_default()
                        .insert(key_s(r.sleep_saving), json!(r.power_saving_pct));
                }
                f4.entry(key_s(r.sleep_saving))
                    .or_default()
                    .entry(r.variant.to_string())
                    .or_default()
                    .push([r.flows as f64, r.total_pc_w]);
            }
            table3.insert(key_k(k), json!(t3));
            fig4.insert(key_k(k), json!(f4));
        }
    }

    json!({
        "table2": table2,
        "table3": table3,
        "fig3": fig3,
        "fig4": fig4,
        "fig5": fig5,
        "fig6": fig6,
    })
}

pub fn write_json<W: Write>(output: &ExperimentOutput, writer: W) -> Result<()> {
    let doc = json!({
        "rows": output.rows,
        "failures": output.failures,
        "summary": summarize(&output.rows),
    });
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub variant: Variant,
    pub seed: u64,
    pub flows: usize,
    pub pruned_objective: f64,
    pub exhaustive_objective: f64,
    /// Pruned over exhaustive quality, 1.0 when equal, below 1.0 when worse.
    pub optimality_ratio: f64,
    pub combinations_searched: usize,
    /// The pruned choice is not better than the exhaustive optimum, and equal
    /// to it for a single flow.
    pub consistent: bool,
}

/// Runs the pruned scheduler on the first `1..=max_flows` requests of a
/// seeded scenario and compares its last decision with an exhaustive search
/// over every combination, scored against the same network state.
pub fn oracle_check(
    k: usize,
    profile: &PowerProfile,
    variants: &[Variant],
    seeds: &[u64],
    max_flows: usize,
) -> Result<Vec<OracleReport>> {
    let topo = build_fat_tree(k, DEFAULT_LINK_RATE_BPS)?;
    let mut reports = Vec::new();
    for &seed in seeds {
        let scenario =
            generate_flow_count(&topo, seed, max_flows.min(topo.max_flows()), 1e9)?;
        for &variant in variants.iter().filter(|v| **v != Variant::Sp) {
            for n in 1..=scenario.len() {
                let reqs = &scenario.requests[..n];
                let mut sched = Scheduler::new(&topo, profile.clone(), variant);
                for r in &reqs[..n - 1] {
                    sched.schedule(r.clone())?;
                }
                let reference = sched.network().clone();
                let decision = sched.schedule(reqs[n - 1].clone())?;
                let ex = exhaustive_best(&topo, profile, variant, reqs, &reference)?;
                let (p, e) = (decision.objective.value, ex.best.objective.value);
                let ratio = match decision.objective.direction {
                    Direction::Maximize => p / e,
                    Direction::Minimize => e / p,
                };
                let not_better = !decision.objective.is_better_than(&ex.best.objective);
                reports.push(OracleReport {
                    variant,
                    seed,
                    flows: n,
                    pruned_objective: p,
                    exhaustive_objective: e,
                    optimality_ratio: ratio,
                    combinations_searched: ex.combinations,
                    consistent: not_better && (n > 1 || p == e),
                });
            }
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saving_and_degradation_bounds() {
        assert_eq!(power_saving_pct(3000.0, 3000.0).unwrap(), 0.0);
        assert_eq!(power_saving_pct(1500.0, 3000.0).unwrap(), 50.0);
        assert!(power_saving_pct(1.0, 0.0).is_err());
        assert_eq!(degradation_pct(2000.0, 2000.0, 3000.0).unwrap(), 0.0);
        assert_eq!(degradation_pct(3000.0, 2000.0, 3000.0).unwrap(), 100.0);
        assert_eq!(degradation_pct(2500.0, 2000.0, 3000.0).unwrap(), 50.0);
        assert!(matches!(
            degradation_pct(1.0, 2.0, 2.0),
            Err(Error::DegenerateBounds { .. })
        ));
    }

    #[test]
    fn flow_specs() {
        assert_eq!("max".parse::<FlowSpec>().unwrap(), FlowSpec::Max);
        assert_eq!("12".parse::<FlowSpec>().unwrap(), FlowSpec::Count(12));
        assert!("x".parse::<FlowSpec>().is_err());
        let cfg = ExperimentConfig {
            ks: vec![4, 10],
            flows: vec![FlowSpec::Sweep, FlowSpec::Max, FlowSpec::Count(3)],
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.flow_counts(4), vec![1, 3, 5, 8]);
        assert_eq!(cfg.flow_counts(10), vec![125, 3]);
    }

    #[test]
    fn grid_cardinality() {
        let cfg = ExperimentConfig {
            ks: vec![4],
            flows: vec![FlowSpec::Count(8)],
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 6);
        assert!(out.failures.is_empty());
    }

    #[test]
    fn bad_point_does_not_abort() {
        let cfg = ExperimentConfig {
            ks: vec![4],
            variants: vec![Variant::LpV1],
            flows: vec![FlowSpec::Count(9), FlowSpec::Count(2)],
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.rows.len(), 1);
    }

    #[test]
    fn config_validation() {
        let cfg = ExperimentConfig {
            sleep_savings: vec![1.5],
            ..ExperimentConfig::default()
        };
        assert!(run_experiment(&cfg).is_err());
    }
}

//! Seeded one-to-one Far traffic: every host is paired with one host of a
//! different pod, and a prefix of the pairs is requested.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowsim::{Flow, FlowId};
use crate::topology::{FatTree, HostId};

/// Default per-flow transfer volume in GB.
pub const DEFAULT_VOLUME_GB: f64 = 38.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeUnit {
    /// 1 GB = 10^9 bytes.
    #[default]
    Decimal,
    /// 1 GB = 2^30 bytes.
    Binary,
}

impl VolumeUnit {
    pub fn bytes_per_gb(self) -> f64 {
        match self {
            VolumeUnit::Decimal => 1e9,
            VolumeUnit::Binary => (1u64 << 30) as f64,
        }
    }

    pub fn to_bytes(self, gb: f64) -> f64 {
        gb * self.bytes_per_gb()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRequest {
    /// Arrival order index.
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub volume_bytes: f64,
}

impl FlowRequest {
    pub fn to_flow(&self) -> Flow {
        Flow::new(self.id, self.src, self.dst, self.volume_bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficScenario {
    pub seed: u64,
    pub utilization_rate: f64,
    pub requests: Vec<FlowRequest>,
}

/// Replay format: one entry per flow, in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub src: HostId,
    pub dst: HostId,
    pub volume: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    Bare(Vec<ScenarioEntry>),
    Full {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        utilization_rate: Option<f64>,
        flows: Vec<ScenarioEntry>,
    },
}

impl TrafficScenario {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn entries(&self) -> Vec<ScenarioEntry> {
        self.requests
            .iter()
            .map(|r| ScenarioEntry {
                src: r.src,
                dst: r.dst,
                volume: r.volume_bytes,
            })
            .collect()
    }

    /// Serializes as a bare list of `{src, dst, volume}` objects.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("scenario serializes")
    }

    /// Accepts either a bare list of `{src, dst, volume}` objects or an object
    /// with a `flows` list and optional `seed` / `utilization_rate`.
    pub fn from_json(topo: &FatTree, text: &str) -> Result<Self> {
        let (seed, rate, entries) = match serde_json::from_str::<ScenarioFile>(text)? {
            ScenarioFile::Bare(e) => (0, None, e),
            ScenarioFile::Full {
                seed,
                utilization_rate,
                flows,
            } => (seed, utilization_rate, flows),
        };
        let mut requests = Vec::with_capacity(entries.len());
        for (i, e) in entries.into_iter().enumerate() {
            topo.host(e.src)?;
            topo.host(e.dst)?;
            if e.src == e.dst {
                return Err(Error::SameEndpoints(e.src));
            }
            requests.push(FlowRequest {
                id: i as FlowId,
                src: e.src,
                dst: e.dst,
                volume_bytes: e.volume,
            });
        }
        let utilization_rate =
            rate.unwrap_or(requests.len() as f64 / topo.max_flows().max(1) as f64);
        Ok(TrafficScenario {
            seed,
            utilization_rate,
            requests,
        })
    }
}

/// Flow count for a utilization rate: `round(rate * hosts / 2)`.
pub fn flow_count_for(topo: &FatTree, utilization_rate: f64) -> Result<usize> {
    if !(utilization_rate > 0.0 && utilization_rate <= 1.0) {
        return Err(Error::InvalidUtilization(utilization_rate));
    }
    Ok((utilization_rate * topo.num_hosts() as f64 / 2.0).round() as usize)
}

/// Pairs every host with a host from a different pod.
///
/// Hosts are visited in id order; each unpaired host draws its partner
/// uniformly among the unpaired hosts of other pods that still leave the rest
/// pairable (no pod holding more than half of the remaining hosts).
pub fn pair_hosts(topo: &FatTree, seed: u64) -> Result<Vec<(HostId, HostId)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hosts = topo.hosts();
    let mut paired = vec![false; hosts.len()];
    let mut per_pod = vec![0usize; topo.num_pods()];
    for h in hosts {
        per_pod[h.pod] += 1;
    }
    let mut left = hosts.len();
    let mut pairs = Vec::with_capacity(hosts.len() / 2);

    for h in hosts {
        if paired[h.id] {
            continue;
        }
        per_pod[h.pod] -= 1;
        left -= 1;
        let candidates: Vec<HostId> = hosts
            .iter()
            .filter(|o| !paired[o.id] && o.id != h.id && o.pod != h.pod)
            .filter(|o| {
                let rest = left - 1;
                per_pod.iter().enumerate().all(|(pod, &n)| {
                    let n = if pod == o.pod { n - 1 } else { n };
                    2 * n <= rest
                })
            })
            .map(|o| o.id)
            .collect();
        if candidates.is_empty() {
            return Err(Error::PairingImpossible);
        }
        let partner = candidates[rng.gen_range(0..candidates.len())];
        paired[h.id] = true;
        paired[partner] = true;
        per_pod[hosts[partner].pod] -= 1;
        left -= 1;
        pairs.push((h.id, partner));
    }
    Ok(pairs)
}

fn scenario_from_pairs(
    pairs: &[(HostId, HostId)],
    count: usize,
    seed: u64,
    utilization_rate: f64,
    volume_bytes: f64,
) -> TrafficScenario {
    TrafficScenario {
        seed,
        utilization_rate,
        requests: pairs
            .iter()
            .take(count)
            .enumerate()
            .map(|(i, &(src, dst))| FlowRequest {
                id: i as FlowId,
                src,
                dst,
                volume_bytes,
            })
            .collect(),
    }
}

/// One-to-one Far scenario at a utilization rate in `(0, 1]`.
pub fn generate_one_to_one_far(
    topo: &FatTree,
    seed: u64,
    utilization_rate: f64,
    volume_bytes: f64,
) -> Result<TrafficScenario> {
    let count = flow_count_for(topo, utilization_rate)?;
    let pairs = pair_hosts(topo, seed)?;
    Ok(scenario_from_pairs(&pairs, count, seed, utilization_rate, volume_bytes))
}

/// One-to-one Far scenario with an explicit flow count.
pub fn generate_flow_count(
    topo: &FatTree,
    seed: u64,
    count: usize,
    volume_bytes: f64,
) -> Result<TrafficScenario> {
    let max = topo.max_flows();
    if count == 0 || count > max {
        return Err(Error::TooManyFlows {
            requested: count,
            max,
        });
    }
    let pairs = pair_hosts(topo, seed)?;
    let rate = count as f64 / max as f64;
    Ok(scenario_from_pairs(&pairs, count, seed, rate, volume_bytes))
}

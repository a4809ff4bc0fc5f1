//! Flow-level bandwidth sharing and time-to-complete simulation.
//!
//! Links are full duplex: each direction of a link is a separate channel with
//! the full link capacity. Rates are shared max-min fairly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::PortLoad;
use crate::topology::{FatTree, HostId, Path, SwitchId};

pub type FlowId = u32;

/// Relative slack used when grouping channels with the same fair share.
const SHARE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowState {
    Pending,
    Running,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub path: Option<Path>,
    pub volume_bytes: f64,
    pub remaining_bytes: f64,
    pub state: FlowState,
}

impl Flow {
    pub fn new(id: FlowId, src: HostId, dst: HostId, volume_bytes: f64) -> Self {
        Flow {
            id,
            src,
            dst,
            path: None,
            volume_bytes,
            remaining_bytes: volume_bytes,
            state: FlowState::Pending,
        }
    }

    pub fn with_path(mut self, path: Path) -> Self {
        self.path = Some(path);
        self
    }

    pub fn start(&mut self) -> Result<()> {
        if self.path.is_none() {
            return Err(Error::Unscheduled(self.id));
        }
        self.state = FlowState::Running;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    /// Rate of every flow, bit/s.
    pub rates: BTreeMap<FlowId, f64>,
    /// Carried load per directed channel (see [`crate::topology::Hop::channel`]).
    pub channel_load_bps: Vec<f64>,
}

impl Allocation {
    pub fn rate(&self, flow: FlowId) -> f64 {
        self.rates.get(&flow).copied().unwrap_or(0.0)
    }

    pub fn total_bps(&self) -> f64 {
        self.rates.values().sum()
    }
}

/// Max-min fair rates for flows on fixed paths.
///
/// Repeatedly finds the channel with the smallest equal share of its residual
/// capacity among its unfrozen flows, fixes those flows at that share and
/// removes their rate from every channel they cross.
pub fn max_min_allocate<'a, I>(topo: &FatTree, flows: I) -> Result<Allocation>
where
    I: IntoIterator<Item = (FlowId, &'a Path)>,
{
    let flows: Vec<(FlowId, &Path)> = flows.into_iter().collect();
    let num_channels = topo.num_channels();
    let mut residual = vec![0.0f64; num_channels];
    for (i, link) in topo.links().iter().enumerate() {
        residual[2 * i] = link.capacity_bps as f64;
        residual[2 * i + 1] = link.capacity_bps as f64;
    }

    let mut flow_channels: Vec<Vec<usize>> = Vec::with_capacity(flows.len());
    let mut unfrozen_on = vec![0usize; num_channels];
    for (_, path) in &flows {
        let mut chans = Vec::with_capacity(path.hops.len());
        for hop in &path.hops {
            if hop.link >= topo.links().len() {
                return Err(Error::UnknownLink(hop.link));
            }
            let c = hop.channel();
            chans.push(c);
            unfrozen_on[c] += 1;
        }
        flow_channels.push(chans);
    }

    let mut rate = vec![0.0f64; flows.len()];
    let mut frozen = vec![false; flows.len()];
    let mut remaining = flows.len();
    let mut load = vec![0.0f64; num_channels];

    while remaining > 0 {
        let mut min_share = f64::INFINITY;
        for c in 0..num_channels {
            if unfrozen_on[c] > 0 {
                let share = residual[c].max(0.0) / unfrozen_on[c] as f64;
                if share < min_share {
                    min_share = share;
                }
            }
        }
        let limit = min_share * (1.0 + SHARE_EPS);
        let bottleneck: Vec<bool> = (0..num_channels)
            .map(|c| unfrozen_on[c] > 0 && residual[c].max(0.0) / unfrozen_on[c] as f64 <= limit)
            .collect();

        for f in 0..flows.len() {
            if frozen[f] || !flow_channels[f].iter().any(|&c| bottleneck[c]) {
                continue;
            }
            frozen[f] = true;
            remaining -= 1;
            rate[f] = min_share;
            for &c in &flow_channels[f] {
                residual[c] -= min_share;
                unfrozen_on[c] -= 1;
            }
        }
    }

    for (f, chans) in flow_channels.iter().enumerate() {
        for &c in chans {
            load[c] += rate[f];
        }
    }

    Ok(Allocation {
        rates: flows.iter().zip(rate).map(|((id, _), r)| (*id, r)).collect(),
        channel_load_bps: load,
    })
}

/// Per-switch port utilization, in the port order of [`FatTree::ports`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortUtilization {
    pub per_switch: Vec<Vec<PortLoad>>,
}

impl PortUtilization {
    pub fn idle(topo: &FatTree) -> Self {
        Self::from_link_factors(topo, &vec![0.0; topo.links().len()])
    }

    fn from_link_factors(topo: &FatTree, factors: &[f64]) -> Self {
        let per_switch = (0..topo.num_switches())
            .map(|s| {
                topo.ports(s)
                    .iter()
                    .map(|&l| PortLoad {
                        rate_bps: topo.links()[l].capacity_bps,
                        factor: factors[l],
                    })
                    .collect()
            })
            .collect();
        PortUtilization { per_switch }
    }

    pub fn switch(&self, s: SwitchId) -> &[PortLoad] {
        &self.per_switch[s]
    }

    /// Sum of utilization factors over the ports of one switch.
    pub fn switch_total(&self, s: SwitchId) -> f64 {
        self.per_switch[s].iter().map(|p| p.factor).sum()
    }
}

/// Utilization factor of a link: the busier direction's load over capacity.
pub fn link_factors(topo: &FatTree, alloc: &Allocation) -> Vec<f64> {
    topo.links()
        .iter()
        .map(|link| {
            let up = alloc.channel_load_bps.get(2 * link.id).copied().unwrap_or(0.0);
            let down = alloc.channel_load_bps.get(2 * link.id + 1).copied().unwrap_or(0.0);
            (up.max(down) / link.capacity_bps as f64).clamp(0.0, 1.0)
        })
        .collect()
}

/// Port utilization factors of every switch under an allocation.
pub fn utilization_factors(topo: &FatTree, alloc: &Allocation) -> PortUtilization {
    PortUtilization::from_link_factors(topo, &link_factors(topo, alloc))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TtcReport {
    /// Completion time of every flow, seconds from the common start.
    pub completion_s: BTreeMap<FlowId, f64>,
    /// Bits delivered per flow, integrated over the rate schedule.
    pub delivered_bits: BTreeMap<FlowId, f64>,
    /// Number of reallocation rounds.
    pub rounds: usize,
}

impl TtcReport {
    pub fn mean_s(&self) -> f64 {
        if self.completion_s.is_empty() {
            return 0.0;
        }
        self.completion_s.values().sum::<f64>() / self.completion_s.len() as f64
    }

    pub fn max_s(&self) -> f64 {
        self.completion_s.values().copied().fold(0.0, f64::max)
    }
}

/// Time to complete for flows that all start at t = 0.
pub fn simulate_ttc(topo: &FatTree, flows: &[Flow]) -> Result<BTreeMap<FlowId, f64>> {
    simulate_ttc_report(topo, flows).map(|r| r.completion_s)
}

/// Event-driven transfer simulation: allocate max-min rates, advance to the
/// earliest completion, drain the transferred bits and reallocate.
pub fn simulate_ttc_report(topo: &FatTree, flows: &[Flow]) -> Result<TtcReport> {
    struct Live<'a> {
        id: FlowId,
        path: &'a Path,
        volume_bits: f64,
        remaining_bits: f64,
    }

    let mut report = TtcReport::default();
    let mut live = Vec::with_capacity(flows.len());
    for f in flows {
        let path = f.path.as_ref().ok_or(Error::Unscheduled(f.id))?;
        let bits = f.remaining_bytes * 8.0;
        report.delivered_bits.insert(f.id, 0.0);
        if bits <= 0.0 {
            report.completion_s.insert(f.id, 0.0);
        } else {
            live.push(Live {
                id: f.id,
                path,
                volume_bits: bits,
                remaining_bits: bits,
            });
        }
    }

    let mut now = 0.0f64;
    while !live.is_empty() {
        report.rounds += 1;
        let alloc = max_min_allocate(topo, live.iter().map(|l| (l.id, l.path)))?;
        let mut dt = f64::INFINITY;
        for l in &live {
            let r = alloc.rate(l.id);
            if r <= 0.0 {
                return Err(Error::Livelock(l.id, l.remaining_bits));
            }
            dt = dt.min(l.remaining_bits / r);
        }
        now += dt;
        for l in live.iter_mut() {
            let r = alloc.rate(l.id);
            let sent = if l.remaining_bits / r <= dt {
                l.remaining_bits
            } else {
                (r * dt).min(l.remaining_bits)
            };
            l.remaining_bits -= sent;
            *report.delivered_bits.get_mut(&l.id).expect("tracked") += sent;
            if l.remaining_bits <= l.volume_bits * 1e-12 {
                *report.delivered_bits.get_mut(&l.id).expect("tracked") += l.remaining_bits;
                l.remaining_bits = 0.0;
                report.completion_s.insert(l.id, now);
            }
        }
        live.retain(|l| l.remaining_bits > 0.0);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_fat_tree, DEFAULT_LINK_RATE_BPS};

    const GB: f64 = 1e9;

    fn tree() -> FatTree {
        build_fat_tree(4, DEFAULT_LINK_RATE_BPS).unwrap()
    }

    #[test]
    fn shared_link_halves() {
        let t = tree();
        // hosts 0 and 1 share edge switch; both send out of the pod via the
        // first path, so they share edge->agg and agg->core channels
        let p0 = t.enumerate_paths(0, 4).unwrap().remove(0);
        let p1 = t.enumerate_paths(1, 8).unwrap().remove(0);
        let a = max_min_allocate(&t, [(0, &p0), (1, &p1)]).unwrap();
        assert_eq!(a.rate(0), 5e8);
        assert_eq!(a.rate(1), 5e8);
    }

    #[test]
    fn disjoint_paths_get_full_rate() {
        let t = tree();
        let p0 = t.enumerate_paths(0, 4).unwrap().remove(0);
        let p1 = t.enumerate_paths(2, 8).unwrap().pop().unwrap();
        let a = max_min_allocate(&t, [(0, &p0), (1, &p1)]).unwrap();
        assert_eq!(a.rate(0), 1e9);
        assert_eq!(a.rate(1), 1e9);
    }

    #[test]
    fn opposite_directions_do_not_contend() {
        let t = tree();
        let p0 = t.enumerate_paths(0, 4).unwrap().remove(0);
        let p1 = t.enumerate_paths(4, 0).unwrap().remove(0);
        let a = max_min_allocate(&t, [(0, &p0), (1, &p1)]).unwrap();
        assert_eq!(a.total_bps(), 2e9);
    }

    #[test]
    fn unknown_link_rejected() {
        let t = tree();
        let mut p = t.enumerate_paths(0, 4).unwrap().remove(0);
        p.hops[2].link = 10_000;
        assert!(matches!(
            max_min_allocate(&t, [(0, &p)]),
            Err(Error::UnknownLink(10_000))
        ));
    }

    #[test]
    fn utilization_of_single_flow() {
        let t = tree();
        let idle = utilization_factors(&t, &max_min_allocate(&t, []).unwrap());
        assert!(idle.per_switch.iter().flatten().all(|p| p.factor == 0.0));

        let p = t.enumerate_paths(0, 4).unwrap().remove(0);
        let u = utilization_factors(&t, &max_min_allocate(&t, [(0, &p)]).unwrap());
        for s in 0..t.num_switches() {
            let expected = if p.switches.contains(&s) { 2.0 } else { 0.0 };
            assert_eq!(u.switch_total(s), expected, "switch {s}");
        }
        for &s in &p.switches {
            let on_path: Vec<f64> = u
                .switch(s)
                .iter()
                .zip(t.ports(s))
                .filter(|(_, l)| p.links().any(|pl| pl == **l))
                .map(|(pl, _)| pl.factor)
                .collect();
            assert_eq!(on_path, vec![1.0, 1.0]);
        }
    }

    #[test]
    fn utilization_of_shared_link() {
        let t = tree();
        let p0 = t.enumerate_paths(0, 4).unwrap().remove(0);
        let p1 = t.enumerate_paths(1, 8).unwrap().remove(0);
        let a = max_min_allocate(&t, [(0, &p0), (1, &p1)]).unwrap();
        let f = link_factors(&t, &a);
        let shared = p0.hops[1].link;
        assert_eq!(p1.hops[1].link, shared);
        assert_eq!(f[shared], 1.0);
        assert_eq!(f[p0.hops[0].link], 0.5);
    }

    #[test]
    fn lone_flow_ttc() {
        let t = tree();
        let p = t.enumerate_paths(0, 4).unwrap().remove(0);
        let f = Flow::new(0, 0, 4, 38.0 * GB).with_path(p);
        let ttc = simulate_ttc(&t, &[f]).unwrap();
        assert_eq!(ttc[&0], 304.0);
    }

    #[test]
    fn equal_flows_sharing_finish_together() {
        let t = tree();
        let p0 = t.enumerate_paths(0, 4).unwrap().remove(0);
        let p1 = t.enumerate_paths(1, 8).unwrap().remove(0);
        let flows = [
            Flow::new(0, 0, 4, 38.0 * GB).with_path(p0),
            Flow::new(1, 1, 8, 38.0 * GB).with_path(p1),
        ];
        let ttc = simulate_ttc(&t, &flows).unwrap();
        assert_eq!(ttc[&0], 608.0);
        assert_eq!(ttc[&1], 608.0);
    }

    #[test]
    fn staggered_volumes() {
        let t = tree();
        let p0 = t.enumerate_paths(0, 4).unwrap().remove(0);
        let p1 = t.enumerate_paths(1, 8).unwrap().remove(0);
        let flows = [
            Flow::new(0, 0, 4, 38.0 * GB).with_path(p0),
            Flow::new(1, 1, 8, 19.0 * GB).with_path(p1),
        ];
        let r = simulate_ttc_report(&t, &flows).unwrap();
        assert_eq!(r.completion_s[&1], 304.0);
        assert_eq!(r.completion_s[&0], 456.0);
        assert_eq!(r.delivered_bits[&0], 38.0 * GB * 8.0);
        assert_eq!(r.rounds, 2);
    }

    #[test]
    fn unscheduled_flow_rejected() {
        let t = tree();
        assert!(matches!(
            simulate_ttc(&t, &[Flow::new(3, 0, 4, 1.0)]),
            Err(Error::Unscheduled(3))
        ));
        let mut f = Flow::new(3, 0, 4, 1.0);
        assert!(f.start().is_err());
    }

    #[test]
    fn zero_volume_completes_immediately() {
        let t = tree();
        let p = t.enumerate_paths(0, 4).unwrap().remove(0);
        let ttc = simulate_ttc(&t, &[Flow::new(0, 0, 4, 0.0).with_path(p)]).unwrap();
        assert_eq!(ttc[&0], 0.0);
    }
}

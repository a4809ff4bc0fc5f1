//! k-ary FatTree construction and equal-cost shortest path enumeration.
//!
//! Identifiers are dense indices assigned in a fixed order so that two builds
//! with the same arguments are identical:
//!
//! * switches: the `(k/2)^2` core switches first (group-major), then for each
//!   pod its `k/2` aggregation switches followed by its `k/2` edge switches;
//! * hosts: pod-major, then edge switch, then port;
//! * links: host access links (link id == host id), then edge/aggregation
//!   links pod by pod, then aggregation/core links pod by pod.
//!
//! Aggregation switch `j` of every pod is wired to the `k/2` core switches of
//! core group `j`, so every core switch has exactly one link into every pod.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SwitchId = usize;
pub type HostId = usize;
pub type LinkId = usize;

/// Default link rate, 1 Gbit/s.
pub const DEFAULT_LINK_RATE_BPS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Core,
    Aggregation,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum Node {
    Switch(SwitchId),
    Host(HostId),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Switch(id) => write!(f, "s{id}"),
            Node::Host(id) => write!(f, "h{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switch {
    pub id: SwitchId,
    pub layer: Layer,
    /// `None` for core switches.
    pub pod: Option<usize>,
    /// Position within its pod layer, or within the core layer for core switches.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub id: HostId,
    pub edge: SwitchId,
    pub pod: usize,
}

/// An undirected full-duplex link. `lower` is the endpoint closer to the hosts.
/// Each direction has the full capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub lower: Node,
    pub upper: Node,
    pub capacity_bps: u64,
}

impl Link {
    pub fn other(&self, node: Node) -> Option<Node> {
        if node == self.lower {
            Some(self.upper)
        } else if node == self.upper {
            Some(self.lower)
        } else {
            None
        }
    }
}

/// A link traversed in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hop {
    pub link: LinkId,
    /// `true` when traversed from `lower` to `upper`.
    pub upward: bool,
}

impl Hop {
    /// Index of the directed channel this hop occupies; channels of link `l`
    /// are `2l` (upward) and `2l + 1` (downward).
    pub fn channel(&self) -> usize {
        2 * self.link + usize::from(!self.upward)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub src: HostId,
    pub dst: HostId,
    pub switches: Vec<SwitchId>,
    pub hops: Vec<Hop>,
}

impl Path {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.hops.iter().map(|h| h.link)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrafficClass {
    Far,
    Middle,
    Near,
}

/// Path class by switch count: one switch is Near, three is Middle, anything
/// crossing the core is Far.
pub fn classify_traffic(path: &Path) -> TrafficClass {
    match path.switches.len() {
        1 => TrafficClass::Near,
        3 => TrafficClass::Middle,
        _ => TrafficClass::Far,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FatTree {
    k: usize,
    link_rate_bps: u64,
    switches: Vec<Switch>,
    hosts: Vec<Host>,
    links: Vec<Link>,
    /// Incident links of every switch, i.e. its ports.
    ports: Vec<Vec<LinkId>>,
}

pub fn build_fat_tree(k: usize, link_rate_bps: u64) -> Result<FatTree> {
    FatTree::new(k, link_rate_bps)
}

impl FatTree {
    pub fn new(k: usize, link_rate_bps: u64) -> Result<Self> {
        if k < 4 || k % 2 != 0 {
            return Err(Error::InvalidPortCount(k));
        }
        if link_rate_bps == 0 {
            return Err(Error::InvalidLinkRate);
        }
        let half = k / 2;
        let num_core = half * half;

        let mut switches = Vec::with_capacity(num_core + k * k);
        for index in 0..num_core {
            switches.push(Switch {
                id: index,
                layer: Layer::Core,
                pod: None,
                index,
            });
        }
        for pod in 0..k {
            for layer in [Layer::Aggregation, Layer::Edge] {
                for index in 0..half {
                    switches.push(Switch {
                        id: switches.len(),
                        layer,
                        pod: Some(pod),
                        index,
                    });
                }
            }
        }

        let mut tree = FatTree {
            k,
            link_rate_bps,
            switches,
            hosts: Vec::with_capacity(k * half * half),
            links: Vec::new(),
            ports: Vec::new(),
        };

        for pod in 0..k {
            for e in 0..half {
                let edge = tree.edge_switch(pod, e);
                for _ in 0..half {
                    let id = tree.hosts.len();
                    tree.hosts.push(Host { id, edge, pod });
                }
            }
        }

        let mut links = Vec::new();
        let mut push = |lower: Node, upper: Node| {
            links.push(Link {
                id: links.len(),
                lower,
                upper,
                capacity_bps: link_rate_bps,
            })
        };
        for host in &tree.hosts {
            push(Node::Host(host.id), Node::Switch(host.edge));
        }
        for pod in 0..k {
            for e in 0..half {
                for a in 0..half {
                    push(
                        Node::Switch(tree.edge_switch(pod, e)),
                        Node::Switch(tree.agg_switch(pod, a)),
                    );
                }
            }
        }
        for pod in 0..k {
            for a in 0..half {
                for c in 0..half {
                    push(
                        Node::Switch(tree.agg_switch(pod, a)),
                        Node::Switch(tree.core_switch(a, c)),
                    );
                }
            }
        }

        let mut ports = vec![Vec::new(); tree.switches.len()];
        for link in &links {
            for node in [link.lower, link.upper] {
                if let Node::Switch(s) = node {
                    ports[s].push(link.id);
                }
            }
        }
        tree.links = links;
        tree.ports = ports;
        Ok(tree)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn link_rate_bps(&self) -> u64 {
        self.link_rate_bps
    }

    pub fn num_pods(&self) -> usize {
        self.k
    }

    pub fn switches(&self) -> &[Switch] {
        &self.switches
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn num_switches(&self) -> usize {
        self.switches.len()
    }

    pub fn num_hosts(&self) -> usize {
        self.hosts.len()
    }

    /// Number of directed channels (two per link).
    pub fn num_channels(&self) -> usize {
        2 * self.links.len()
    }

    /// Links incident to a switch, one per port.
    pub fn ports(&self, switch: SwitchId) -> &[LinkId] {
        &self.ports[switch]
    }

    pub fn host(&self, id: HostId) -> Result<&Host> {
        self.hosts.get(id).ok_or(Error::UnknownHost(id))
    }

    pub fn link(&self, id: LinkId) -> Result<&Link> {
        self.links.get(id).ok_or(Error::UnknownLink(id))
    }

    /// Largest number of simultaneous one-to-one flows (every host in one pair).
    pub fn max_flows(&self) -> usize {
        self.hosts.len() / 2
    }

    pub fn core_switch(&self, group: usize, index: usize) -> SwitchId {
        group * (self.k / 2) + index
    }

    pub fn agg_switch(&self, pod: usize, index: usize) -> SwitchId {
        let half = self.k / 2;
        half * half + pod * self.k + index
    }

    pub fn edge_switch(&self, pod: usize, index: usize) -> SwitchId {
        let half = self.k / 2;
        half * half + pod * self.k + half + index
    }

    fn edge_agg_link(&self, pod: usize, edge: usize, agg: usize) -> LinkId {
        let half = self.k / 2;
        self.hosts.len() + pod * half * half + edge * half + agg
    }

    fn agg_core_link(&self, pod: usize, agg: usize, core: usize) -> LinkId {
        let half = self.k / 2;
        self.hosts.len() + self.k * half * half + pod * half * half + agg * half + core
    }

    /// All minimum-hop paths between two hosts, ordered lexicographically by
    /// switch sequence.
    pub fn enumerate_paths(&self, src: HostId, dst: HostId) -> Result<Vec<Path>> {
        let s = self.host(src)?;
        let d = self.host(dst)?;
        if src == dst {
            return Err(Error::SameEndpoints(src));
        }
        let half = self.k / 2;
        let edge_index = |edge: SwitchId| self.switches[edge].index;
        let (se, de) = (edge_index(s.edge), edge_index(d.edge));
        let up_host = Hop {
            link: src,
            upward: true,
        };
        let down_host = Hop {
            link: dst,
            upward: false,
        };

        let mut paths = Vec::new();
        if s.edge == d.edge {
            paths.push(Path {
                src,
                dst,
                switches: vec![s.edge],
                hops: vec![up_host, down_host],
            });
        } else if s.pod == d.pod {
            for a in 0..half {
                paths.push(Path {
                    src,
                    dst,
                    switches: vec![s.edge, self.agg_switch(s.pod, a), d.edge],
                    hops: vec![
                        up_host,
                        Hop {
                            link: self.edge_agg_link(s.pod, se, a),
                            upward: true,
                        },
                        Hop {
                            link: self.edge_agg_link(d.pod, de, a),
                            upward: false,
                        },
                        down_host,
                    ],
                });
            }
        } else {
            for a in 0..half {
                for c in 0..half {
                    paths.push(Path {
                        src,
                        dst,
                        switches: vec![
                            s.edge,
                            self.agg_switch(s.pod, a),
                            self.core_switch(a, c),
                            self.agg_switch(d.pod, a),
                            d.edge,
                        ],
                        hops: vec![
                            up_host,
                            Hop {
                                link: self.edge_agg_link(s.pod, se, a),
                                upward: true,
                            },
                            Hop {
                                link: self.agg_core_link(s.pod, a, c),
                                upward: true,
                            },
                            Hop {
                                link: self.agg_core_link(d.pod, a, c),
                                upward: false,
                            },
                            Hop {
                                link: self.edge_agg_link(d.pod, de, a),
                                upward: false,
                            },
                            down_host,
                        ],
                    });
                }
            }
        }
        paths.sort_by(|x, y| x.switches.cmp(&y.switches));
        Ok(paths)
    }

    /// Adjacency over all nodes, used by graph-level checks and dumps.
    pub fn adjacency(&self) -> HashMap<Node, Vec<(Node, LinkId)>> {
        let mut adj: HashMap<Node, Vec<(Node, LinkId)>> = HashMap::new();
        for link in &self.links {
            adj.entry(link.lower).or_default().push((link.upper, link.id));
            adj.entry(link.upper).or_default().push((link.lower, link.id));
        }
        adj
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k,
            "link_rate_bps": self.link_rate_bps,
            "switches": self.switches,
            "hosts": self.hosts,
            "links": self.links,
        })
    }
}

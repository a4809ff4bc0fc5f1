//! Reference implementations used to cross-check the library.
//!
//! These deliberately avoid the library's closed-form constructions: paths
//! come from a plain BFS over the link list and rates from exact rational
//! water-filling.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_rational::Ratio;

use greensched::topology::{FatTree, HostId, Node, Path, SwitchId};

/// Every shortest host-to-host path, as switch sequences, by BFS layering
/// followed by a walk back along predecessor sets.
pub fn bfs_shortest_paths(topo: &FatTree, src: HostId, dst: HostId) -> BTreeSet<Vec<SwitchId>> {
    let mut adj: HashMap<Node, Vec<Node>> = HashMap::new();
    for l in topo.links() {
        adj.entry(l.lower).or_default().push(l.upper);
        adj.entry(l.upper).or_default().push(l.lower);
    }
    let start = Node::Host(src);
    let goal = Node::Host(dst);

    let mut dist: HashMap<Node, usize> = HashMap::from([(start, 0)]);
    let mut preds: HashMap<Node, Vec<Node>> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        let d = dist[&n];
        for &m in adj.get(&n).into_iter().flatten() {
            // hosts other than the goal never relay traffic
            if matches!(m, Node::Host(_)) && m != goal {
                continue;
            }
            match dist.get(&m) {
                None => {
                    dist.insert(m, d + 1);
                    preds.entry(m).or_default().push(n);
                    queue.push_back(m);
                }
                Some(&dm) if dm == d + 1 => preds.entry(m).or_default().push(n),
                _ => {}
            }
        }
    }

    let mut out = BTreeSet::new();
    let mut stack = vec![(goal, Vec::<SwitchId>::new())];
    while let Some((n, suffix)) = stack.pop() {
        if n == start {
            out.insert(suffix);
            continue;
        }
        for &p in preds.get(&n).into_iter().flatten() {
            let mut s = suffix.clone();
            if let Node::Switch(id) = p {
                s.insert(0, id);
            }
            stack.push((p, s));
        }
    }
    out
}

pub type Q = Ratio<i128>;

/// Exact max-min fair rates by progressive filling: all unfrozen flows grow
/// together until some directed link saturates, whose flows then freeze.
pub fn progressive_filling(topo: &FatTree, flows: &[(u32, &Path)]) -> BTreeMap<u32, Q> {
    // directed link = (link id, traversed upward)
    let mut residual: BTreeMap<(usize, bool), Q> = BTreeMap::new();
    let mut users: BTreeMap<(usize, bool), Vec<usize>> = BTreeMap::new();
    for (i, (_, p)) in flows.iter().enumerate() {
        for h in &p.hops {
            let key = (h.link, h.upward);
            residual
                .entry(key)
                .or_insert_with(|| Q::from_integer(topo.links()[h.link].capacity_bps as i128));
            users.entry(key).or_default().push(i);
        }
    }

    let mut rate = vec![Q::from_integer(0); flows.len()];
    let mut frozen = vec![false; flows.len()];
    while frozen.iter().any(|f| !f) {
        let step = users
            .iter()
            .filter_map(|(key, us)| {
                let n = us.iter().filter(|&&i| !frozen[i]).count();
                (n > 0).then(|| residual[key] / Q::from_integer(n as i128))
            })
            .min()
            .expect("unfrozen flows cross some link");
        for (i, r) in rate.iter_mut().enumerate() {
            if !frozen[i] {
                *r += step;
            }
        }
        for (key, us) in &users {
            let n = us.iter().filter(|&&i| !frozen[i]).count();
            *residual.get_mut(key).unwrap() -= step * Q::from_integer(n as i128);
        }
        for (key, us) in &users {
            if residual[key] == Q::from_integer(0) {
                for &i in us {
                    frozen[i] = true;
                }
            }
        }
    }
    flows.iter().map(|(id, _)| *id).zip(rate).collect()
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

//! Noiseless list gossip: every agent keeps its best `k` (value, origin)
//! pairs and floods the list to its neighbors each round.
//!
//! It finishes within `diameter` rounds, but each link carries up to `k`
//! reals per round and each agent stores `k` slots, against one real and one
//! slot for the quantile protocol. Any channel noise corrupts the values
//! irrecoverably, so only silent noise models are accepted.

use std::cmp::Ordering;

use thiserror::Error;

use crate::graph::Graph;
use crate::protocol::NoiseModel;
use crate::quantile::Dataset;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("list gossip requires noiseless links (sigma2 = {0}); use the quantile protocol for noisy networks")]
    NoisyChannel(f64),
    #[error("communication graph is not connected")]
    Disconnected,
    #[error("k = {k} is out of range for n = {n} (need 1 <= k <= n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("dataset has {data} values but the graph has {nodes} nodes")]
    SizeMismatch { data: usize, nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub value: f64,
    /// 1-based id of the agent holding `value`.
    pub origin: usize,
}

fn rank_order(a: &Entry, b: &Entry) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then_with(|| a.origin.cmp(&b.origin))
}

/// At most `k` entries, sorted by value descending then origin ascending,
/// with distinct origins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopKList {
    entries: Vec<Entry>,
}

impl TopKList {
    pub fn singleton(value: f64, origin: usize) -> Self {
        Self {
            entries: vec![Entry { value, origin }],
        }
    }

    /// Builds a valid list from arbitrary entries: dedups by origin and
    /// keeps the best `k`.
    pub fn from_entries(mut entries: Vec<Entry>, k: usize) -> Self {
        entries.sort_by(rank_order);
        let mut seen = std::collections::HashSet::new();
        entries.retain(|e| seen.insert(e.origin));
        entries.truncate(k);
        Self { entries }
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    /// Origin ids, ascending.
    pub fn origins(&self) -> Vec<usize> {
        let mut ids: Vec<_> = self.entries.iter().map(|e| e.origin).collect();
        ids.sort_unstable();
        ids
    }
}

pub fn merge_lists(own: &TopKList, received: &[&TopKList], k: usize) -> TopKList {
    let entries = own
        .entries
        .iter()
        .chain(received.iter().flat_map(|l| l.entries.iter()))
        .copied()
        .collect();
    TopKList::from_entries(entries, k)
}

/// Communication and memory counters of a list-gossip run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineCost {
    /// Reals actually sent over all directed links, all rounds.
    pub reals_transmitted: u64,
    /// Upper bound per round: `k` reals on each directed link.
    pub reals_per_round_max: u64,
    pub memory_slots_per_agent: u64,
}

/// Per-round cost of the quantile protocol on the same graph: one real per
/// directed link and one memory slot per agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolCost {
    pub reals_per_round: u64,
    pub memory_slots_per_agent: u64,
}

impl ProtocolCost {
    pub fn for_graph(g: &Graph) -> Self {
        Self {
            reals_per_round: g.directed_edges().len() as u64,
            memory_slots_per_agent: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub rounds_to_converge: u64,
    pub lists: Vec<TopKList>,
    pub cost: BaselineCost,
}

/// The global top-k list computed centrally.
pub fn sorted_topk(d: &Dataset, k: usize) -> TopKList {
    let entries = d
        .values()
        .iter()
        .enumerate()
        .map(|(i, &value)| Entry {
            value,
            origin: i + 1,
        })
        .collect();
    TopKList::from_entries(entries, k)
}

/// Runs synchronous full-list exchange until every agent holds the global
/// top-k list.
pub fn run_baseline(
    g: &Graph,
    d: &Dataset,
    k: usize,
    noise: &NoiseModel,
) -> Result<BaselineReport, BaselineError> {
    if !noise.is_silent() {
        return Err(BaselineError::NoisyChannel(noise.sigma2));
    }
    let n = g.n();
    if d.len() != n {
        return Err(BaselineError::SizeMismatch {
            data: d.len(),
            nodes: n,
        });
    }
    if k == 0 || k > n {
        return Err(BaselineError::KOutOfRange { k, n });
    }
    if !g.is_connected() {
        return Err(BaselineError::Disconnected);
    }

    let target = sorted_topk(d, k);
    let mut lists: Vec<TopKList> = d
        .values()
        .iter()
        .enumerate()
        .map(|(i, &z)| TopKList::singleton(z, i + 1))
        .collect();
    let mut rounds = 0u64;
    let mut reals = 0u64;
    // A connected graph has diameter < n, so n rounds always suffice.
    while !lists.iter().all(|l| *l == target) {
        assert!(
            rounds < n as u64,
            "list gossip failed to converge on a connected graph"
        );
        reals += (0..n)
            .map(|i| (lists[i].len() * g.degree(i)) as u64)
            .sum::<u64>();
        lists = (0..n)
            .map(|i| {
                let received: Vec<&TopKList> = g.neighbors(i).iter().map(|&j| &lists[j]).collect();
                merge_lists(&lists[i], &received, k)
            })
            .collect();
        rounds += 1;
    }

    Ok(BaselineReport {
        rounds_to_converge: rounds,
        lists,
        cost: BaselineCost {
            reals_transmitted: reals,
            reals_per_round_max: (g.directed_edges().len() * k) as u64,
            memory_slots_per_agent: k as u64,
        },
    })
}

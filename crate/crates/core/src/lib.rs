//! Distributed top-k selection over noisy networks.
//!
//! Each of `n` agents holds one measurement. The `k`-th largest measurement
//! is a sample quantile, and the sample quantile minimizes a sum of pinball
//! losses, one per agent. The agents solve that problem together with a
//! two-time-scale subgradient/consensus iteration that tolerates additive
//! noise on every link, then each agent decides on its own whether its
//! measurement is in the top k.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`quantile`] | ECDF, pinball loss, sample quantile and its brute-force oracle |
//! | [`graph`] | Topologies, Laplacian, algebraic connectivity |
//! | [`schedule`] | Step-size sequences and their constraints |
//! | [`protocol`] | One synchronous round, agent-wise and in vector form; link noise |
//! | [`simulator`] | Replications, metrics, top-k decisions, Monte Carlo averaging |
//! | [`baseline`] | Noiseless list-gossip reference scheme |
//! | [`config`] | TOML experiment files |
//! | [`output`] | CSV traces and run manifests |

pub mod baseline;
pub mod config;
pub mod graph;
pub mod linalg;
pub mod output;
pub mod protocol;
pub mod quantile;
pub mod schedule;
pub mod simulator;

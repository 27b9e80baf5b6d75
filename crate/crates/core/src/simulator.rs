//! Experiment driver: replications, per-round metrics, top-k decisions and
//! Monte Carlo averaging.
//!
//! A replication is one sample path of the link noise. Its stream is keyed
//! by `(base_seed, replication index)`, and aggregation folds replications
//! in index order after all of them finish, so results are bit-identical
//! whatever the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{spectral_extremes, Graph, GraphError, SpectralInfo};
use crate::protocol::{
    fill_round_noise, initial_states, step_agentwise_into, NoiseModel, NoiseStream, ProtocolError,
    RoundNoise,
};
use crate::quantile::{agents_at_or_above, sample_quantile, Dataset, QuantileError, QuantileParam};
use crate::schedule::{ResolvedSchedule, ScheduleError, StepSchedule};

/// Horizons up to this length are recorded every round under
/// [`RecordCadence::Auto`].
pub const DENSE_RECORD_LIMIT: u64 = 10_000;
/// Growth factor of the decimated record schedule.
pub const GEOMETRIC_RATIO: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("dataset has {data} values but the graph has {nodes} nodes")]
    SizeMismatch { data: usize, nodes: usize },
    #[error("communication graph is not connected")]
    Disconnected,
    #[error("replications must be >= 1")]
    NoReplications,
    #[error("decision offset must be finite, got {0}")]
    BadOffset(f64),
    #[error("record cadence must be >= 1")]
    BadCadence,
    #[error(
        "replication {replication} diverged at round {round}: agent {agent} estimate is {value}"
    )]
    Divergence {
        replication: u64,
        round: u64,
        agent: usize,
        value: f64,
    },
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

/// Which quantile the agents estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// The `k`-th largest value; `p` is the midpoint of its interval.
    K(usize),
    P(f64),
}

/// Rounds at which a [`TraceRecord`] is emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordCadence {
    /// Every round up to [`DENSE_RECORD_LIMIT`], geometric beyond.
    #[default]
    Auto,
    Every(u64),
    /// Rounds `⌊1.05^j⌋` plus every power of ten.
    Geometric,
}

impl RecordCadence {
    /// Sorted record rounds for a horizon; always contains 0 and `horizon`.
    pub fn rounds(&self, horizon: u64) -> Vec<u64> {
        let mut rounds = match *self {
            RecordCadence::Auto => {
                let mut r: Vec<u64> = (0..=horizon.min(DENSE_RECORD_LIMIT)).collect();
                r.extend(
                    geometric_rounds(horizon)
                        .into_iter()
                        .filter(|&t| t > DENSE_RECORD_LIMIT),
                );
                r
            }
            RecordCadence::Geometric => geometric_rounds(horizon),
            RecordCadence::Every(step) => (0..=horizon).step_by(step.max(1) as usize).collect(),
        };
        rounds.push(horizon);
        rounds.sort_unstable();
        rounds.dedup();
        rounds
    }
}

fn geometric_rounds(horizon: u64) -> Vec<u64> {
    let mut rounds = vec![0];
    let mut x = 1.0f64;
    while x <= horizon as f64 {
        rounds.push(x.floor() as u64);
        x *= GEOMETRIC_RATIO;
    }
    let mut decade = 1u64;
    while decade <= horizon {
        rounds.push(decade);
        decade = decade.saturating_mul(10);
    }
    rounds
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub graph: Graph,
    pub dataset: Dataset,
    pub target: Target,
    pub schedule: StepSchedule,
    pub noise: NoiseModel,
    /// Number of rounds `T`; states `w(0)..=w(T)` are observable.
    pub horizon: u64,
    pub replications: u64,
    pub base_seed: u64,
    /// Agents decide "top-k" when `z_i > w_i − decision_offset`.
    pub decision_offset: f64,
    pub cadence: RecordCadence,
    pub allow_unsafe_schedule: bool,
}

/// Metrics for one recorded round of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    /// `‖w − w̄𝟙‖₂`
    pub consensus_error: f64,
    /// `|w̄ − θ_p|`
    pub mean_error: f64,
    /// `max_i |w_i − θ_p|`
    pub max_error: f64,
    pub topk_count: usize,
    pub topk_correct: bool,
}

/// Per-round means over the completed replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub t: u64,
    pub consensus_error: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub topk_count: f64,
    pub frac_topk_correct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTrace {
    pub records: Vec<AggregateRecord>,
    pub completed: u64,
    /// Indices of replications aborted by divergence.
    pub aborted: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub index: u64,
    pub result: Result<Vec<TraceRecord>, SimError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub aggregate: AggregateTrace,
    pub replications: Vec<ReplicationOutcome>,
}

/// How replications are scheduled onto threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon; `jobs` caps the pool size (global pool when `None`). Falls
    /// back to sequential when built without the `parallel` feature.
    Parallel {
        jobs: Option<usize>,
    },
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { jobs: None }
    }
}

/// A validated configuration with everything the rounds need precomputed.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: SimConfig,
    param: QuantileParam,
    spectral: SpectralInfo,
    schedule: ResolvedSchedule,
    theta: f64,
    in_topk: Vec<bool>,
    record_rounds: Vec<u64>,
}

impl Experiment {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let n = cfg.graph.n();
        if cfg.dataset.len() != n {
            return Err(SimError::SizeMismatch {
                data: cfg.dataset.len(),
                nodes: n,
            });
        }
        if cfg.replications == 0 {
            return Err(SimError::NoReplications);
        }
        if !cfg.decision_offset.is_finite() {
            return Err(SimError::BadOffset(cfg.decision_offset));
        }
        if cfg.cadence == RecordCadence::Every(0) {
            return Err(SimError::BadCadence);
        }
        cfg.noise.validate()?;
        if !cfg.graph.is_connected() {
            return Err(SimError::Disconnected);
        }
        let param = match cfg.target {
            Target::K(k) => QuantileParam::for_k(n, k)?,
            Target::P(p) => QuantileParam::new(p, n)?,
        };
        let spectral = spectral_extremes(&cfg.graph)?;
        let schedule = cfg.schedule.resolve(&spectral, cfg.allow_unsafe_schedule)?;
        let theta = sample_quantile(&cfg.dataset, param);
        let in_topk = cfg.dataset.values().iter().map(|&z| z >= theta).collect();
        let record_rounds = cfg.cadence.rounds(cfg.horizon);
        Ok(Self {
            cfg,
            param,
            spectral,
            schedule,
            theta,
            in_topk,
            record_rounds,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn param(&self) -> QuantileParam {
        self.param
    }

    pub fn spectral(&self) -> &SpectralInfo {
        &self.spectral
    }

    pub fn schedule(&self) -> &ResolvedSchedule {
        &self.schedule
    }

    /// Centralized `θ_p`, used only for measurement.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// 1-based ids of the agents holding a value `≥ θ_p`.
    pub fn true_topk(&self) -> Vec<usize> {
        agents_at_or_above(&self.cfg.dataset, self.theta)
    }

    pub fn record_rounds(&self) -> &[u64] {
        &self.record_rounds
    }

    /// Runs one sample path from `w(0) = z` for `horizon` rounds.
    pub fn run_replication(&self, replication: u64) -> Result<Vec<TraceRecord>, SimError> {
        let g = &self.cfg.graph;
        let n = g.n();
        let p = self.param.p();
        let mut states = initial_states(self.cfg.dataset.values());
        let mut next = states.clone();
        let mut messages = vec![0.0; n];
        let mut noise = RoundNoise::zeros(g);
        let mut stream = NoiseStream::new(self.cfg.base_seed, replication);
        let mut w = vec![0.0; n];

        let mut trace = Vec::with_capacity(self.record_rounds.len());
        let mut pending = self.record_rounds.iter().copied().peekable();
        for t in 0..=self.cfg.horizon {
            if pending.peek() == Some(&t) {
                pending.next();
                for (slot, a) in w.iter_mut().zip(&states) {
                    *slot = a.w;
                }
                trace.push(self.measure(t, &w));
            }
            if t == self.cfg.horizon {
                break;
            }
            fill_round_noise(&self.cfg.noise, &mut stream, &mut noise);
            let (alpha, beta) = (self.schedule.alpha(t), self.schedule.beta(t));
            step_agentwise_into(&states, g, p, alpha, beta, &noise, &mut messages, &mut next)
                .map_err(|e| match e {
                    ProtocolError::Divergence { agent, value } => SimError::Divergence {
                        replication,
                        round: t + 1,
                        agent,
                        value,
                    },
                    other => other.into(),
                })?;
            std::mem::swap(&mut states, &mut next);
        }
        Ok(trace)
    }

    fn measure(&self, t: u64, w: &[f64]) -> TraceRecord {
        let z = self.cfg.dataset.values();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let consensus_error = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt();
        let max_error = w
            .iter()
            .fold(0.0f64, |acc, x| acc.max((x - self.theta).abs()));
        let mut topk_count = 0;
        let mut topk_correct = true;
        for ((&wi, &zi), &truth) in w.iter().zip(z).zip(&self.in_topk) {
            let decided = decides_topk(wi, zi, self.cfg.decision_offset);
            topk_count += decided as usize;
            topk_correct &= decided == truth;
        }
        TraceRecord {
            t,
            consensus_error,
            mean_error: (mean - self.theta).abs(),
            max_error,
            topk_count,
            topk_correct,
        }
    }

    /// Runs every replication and averages the completed ones per round.
    pub fn run_monte_carlo(&self, exec: Execution) -> Result<MonteCarloResult, SimError> {
        let results = match exec {
            Execution::Sequential => self.run_all_sequential(),
            Execution::Parallel { jobs } => self.run_all_parallel(jobs)?,
        };
        let replications: Vec<ReplicationOutcome> = results
            .into_iter()
            .enumerate()
            .map(|(i, result)| ReplicationOutcome {
                index: i as u64,
                result,
            })
            .collect();
        let aggregate = aggregate(&self.record_rounds, &replications);
        Ok(MonteCarloResult {
            aggregate,
            replications,
        })
    }

    fn run_all_sequential(&self) -> Vec<Result<Vec<TraceRecord>, SimError>> {
        (0..self.cfg.replications)
            .map(|r| self.run_replication(r))
            .collect()
    }

    #[cfg(feature = "parallel")]
    fn run_all_parallel(
        &self,
        jobs: Option<usize>,
    ) -> Result<Vec<Result<Vec<TraceRecord>, SimError>>, SimError> {
        let work = || {
            (0..self.cfg.replications)
                .into_par_iter()
                .map(|r| self.run_replication(r))
                .collect()
        };
        match jobs {
            Some(1) => Ok(self.run_all_sequential()),
            Some(threads) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| SimError::ThreadPool(e.to_string()))?;
                Ok(pool.install(work))
            }
            None => Ok(work()),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn run_all_parallel(
        &self,
        _jobs: Option<usize>,
    ) -> Result<Vec<Result<Vec<TraceRecord>, SimError>>, SimError> {
        Ok(self.run_all_sequential())
    }
}

fn aggregate(record_rounds: &[u64], outcomes: &[ReplicationOutcome]) -> AggregateTrace {
    let mut sums = vec![[0.0f64; 5]; record_rounds.len()];
    let mut completed = 0u64;
    let mut aborted = Vec::new();
    for outcome in outcomes {
        match &outcome.result {
            Ok(trace) => {
                completed += 1;
                for (acc, rec) in sums.iter_mut().zip(trace) {
                    acc[0] += rec.consensus_error;
                    acc[1] += rec.mean_error;
                    acc[2] += rec.max_error;
                    acc[3] += rec.topk_count as f64;
                    acc[4] += if rec.topk_correct { 1.0 } else { 0.0 };
                }
            }
            Err(_) => aborted.push(outcome.index),
        }
    }
    let records = if completed == 0 {
        Vec::new()
    } else {
        let c = completed as f64;
        record_rounds
            .iter()
            .zip(&sums)
            .map(|(&t, s)| AggregateRecord {
                t,
                consensus_error: s[0] / c,
                mean_error: s[1] / c,
                max_error: s[2] / c,
                topk_count: s[3] / c,
                frac_topk_correct: s[4] / c,
            })
            .collect()
    };
    AggregateTrace {
        records,
        completed,
        aborted,
    }
}

#[inline]
fn decides_topk(w: f64, z: f64, offset: f64) -> bool {
    z > w - offset
}

/// Agents whose datum exceeds their local threshold `w_i − offset`
/// (1-based ids, ascending).
pub fn topk_decision(w: &[f64], z: &[f64], offset: f64) -> Vec<usize> {
    assert_eq!(w.len(), z.len());
    w.iter()
        .zip(z)
        .enumerate()
        .filter(|(_, (&wi, &zi))| decides_topk(wi, zi, offset))
        .map(|(i, _)| i + 1)
        .collect()
}

/// First recorded round from which the decision stays correct through the
/// end of the trace.
pub fn first_stable_decision_round(trace: &[TraceRecord]) -> Option<u64> {
    let mut stable = None;
    for rec in trace.iter().rev() {
        if !rec.topk_correct {
            break;
        }
        stable = Some(rec.t);
    }
    stable
}

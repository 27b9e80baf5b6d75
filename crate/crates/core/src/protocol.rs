//! One synchronous round of the distributed quantile protocol.
//!
//! Every agent `i` first takes a local subgradient step on its own score
//! function,
//!
//! ```text
//! m_i = w_i − α(t) · (1(w_i ≥ z_i) − p)
//! ```
//!
//! and sends `m_i` to its neighbors. Over the link `j → i` the message is
//! corrupted by additive noise, `y_j = m_j + v_ji`. Each agent then mixes:
//!
//! ```text
//! w_i⁺ = m_i − β(t) · Σ_{j ∈ N_i} (m_i − y_j)
//! ```
//!
//! Stacked over agents this is `w⁺ = (I − βL)(w − αg) + βv` with
//! `v_i = Σ_j v_ji`; [`step_vectorform`] implements that form directly so
//! the two can be checked against each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, SpectralInfo};
use crate::linalg::{symmetric_spectral_norm, LinalgError, Matrix};
use crate::quantile::local_subgradient;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("agent {agent} produced a non-finite estimate ({value})")]
    Divergence { agent: usize, value: f64 },
    #[error("beta = {beta} exceeds 2/(lambda2 + lambdaN) = {bound}")]
    BetaAboveBound { beta: f64, bound: f64 },
    #[error("noise variance must be finite and >= 0, got {0}")]
    BadVariance(f64),
    #[error(transparent)]
    Eigensolver(#[from] LinalgError),
}

/// One agent's private datum and current estimate of the quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    /// 0-based agent index.
    pub id: usize,
    pub z: f64,
    pub w: f64,
}

impl AgentState {
    /// Initial state, `w = z`.
    pub fn initial(id: usize, z: f64) -> Self {
        Self { id, z, w: z }
    }
}

/// Builds the round-0 state for every agent.
pub fn initial_states(data: &[f64]) -> Vec<AgentState> {
    data.iter()
        .enumerate()
        .map(|(i, &z)| AgentState::initial(i, z))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Gaussian,
}

/// Additive link noise, i.i.d. over directed links and rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(rename = "type")]
    pub kind: NoiseKind,
    /// Variance per directed link per round.
    #[serde(default)]
    pub sigma2: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        kind: NoiseKind::None,
        sigma2: 0.0,
    };

    pub fn gaussian(sigma2: f64) -> Result<Self, ProtocolError> {
        let m = Self {
            kind: NoiseKind::Gaussian,
            sigma2,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(ProtocolError::BadVariance(self.sigma2));
        }
        Ok(())
    }

    /// True if every draw is exactly zero.
    pub fn is_silent(&self) -> bool {
        self.kind == NoiseKind::None || self.sigma2 == 0.0
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::NONE
    }
}

/// Noise samples for one round, one per directed link, indexed by the
/// link's rank in [`Graph::directed_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoundNoise {
    samples: Vec<f64>,
}

impl RoundNoise {
    pub fn zeros(g: &Graph) -> Self {
        Self {
            samples: vec![0.0; g.directed_edges().len()],
        }
    }

    pub fn from_samples(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Noise on `j → i`.
    pub fn on_link(&self, rank: usize) -> f64 {
        self.samples[rank]
    }

    /// `v_i = Σ_{j ∈ N_i} v_ji`, the per-agent noise of the vector form.
    pub fn aggregate_incoming(&self, g: &Graph) -> Vec<f64> {
        (0..g.n())
            .map(|i| g.incoming(i).iter().map(|&(_, r)| self.samples[r]).sum())
            .collect()
    }
}

/// Per-replication random stream for link noise.
///
/// Keyed by `(base_seed, replication)`: the seed fixes the ChaCha key and
/// the replication index selects the ChaCha stream, so replications never
/// share draws and can run in any order.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(base_seed: u64, replication: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(replication);
        Self { rng }
    }
}

/// Draws one round of link noise, links in lexicographic `(j, i)` order.
pub fn draw_round_noise(model: &NoiseModel, g: &Graph, stream: &mut NoiseStream) -> RoundNoise {
    let mut noise = RoundNoise::zeros(g);
    fill_round_noise(model, stream, &mut noise);
    noise
}

/// In-place variant of [`draw_round_noise`]. Consumes nothing from the
/// stream when the model is silent.
pub fn fill_round_noise(model: &NoiseModel, stream: &mut NoiseStream, noise: &mut RoundNoise) {
    if model.is_silent() {
        noise.samples.fill(0.0);
        return;
    }
    let normal = Normal::new(0.0, model.sigma2.sqrt()).expect("variance validated");
    for s in &mut noise.samples {
        *s = normal.sample(&mut stream.rng);
    }
}

/// Local subgradient step.
#[inline]
pub fn compute_message(a: &AgentState, p: f64, alpha_t: f64) -> f64 {
    a.w - alpha_t * local_subgradient(a.z, p, a.w)
}

/// Consensus step from the agent's own message and its neighbors' received
/// (noisy) messages.
#[inline]
pub fn update_estimate(m_self: f64, received: &[f64], beta_t: f64) -> f64 {
    mix(m_self, received.iter().copied(), beta_t)
}

#[inline]
fn mix(m_self: f64, received: impl Iterator<Item = f64>, beta_t: f64) -> f64 {
    let pull: f64 = received.map(|y| m_self - y).sum();
    m_self - beta_t * pull
}

/// One synchronous round of the agent-wise protocol.
///
/// All messages are computed from the pre-round states before anyone
/// updates.
pub fn step_agentwise(
    states: &[AgentState],
    g: &Graph,
    p: f64,
    alpha_t: f64,
    beta_t: f64,
    noise: &RoundNoise,
) -> Result<Vec<AgentState>, ProtocolError> {
    let mut next = states.to_vec();
    let mut messages = vec![0.0; states.len()];
    step_agentwise_into(
        states,
        g,
        p,
        alpha_t,
        beta_t,
        noise,
        &mut messages,
        &mut next,
    )?;
    Ok(next)
}

/// Buffer-reusing form of [`step_agentwise`]; `messages` and `next` must
/// have one slot per agent.
#[allow(clippy::too_many_arguments)]
pub fn step_agentwise_into(
    states: &[AgentState],
    g: &Graph,
    p: f64,
    alpha_t: f64,
    beta_t: f64,
    noise: &RoundNoise,
    messages: &mut [f64],
    next: &mut [AgentState],
) -> Result<(), ProtocolError> {
    debug_assert_eq!(states.len(), g.n());
    debug_assert_eq!(noise.len(), g.directed_edges().len());
    for (m, a) in messages.iter_mut().zip(states) {
        *m = compute_message(a, p, alpha_t);
    }
    for (i, a) in states.iter().enumerate() {
        let received = g
            .incoming(i)
            .iter()
            .map(|&(j, rank)| messages[j] + noise.on_link(rank));
        let w = mix(messages[i], received, beta_t);
        if !w.is_finite() {
            return Err(ProtocolError::Divergence {
                agent: i + 1,
                value: w,
            });
        }
        next[i] = AgentState { w, ..*a };
    }
    Ok(())
}

/// Vector form of one round: `w⁺ = (I − βL)(w − αg) + βv`.
pub fn step_vectorform(
    w: &[f64],
    laplacian: &Matrix,
    p: f64,
    z: &[f64],
    alpha_t: f64,
    beta_t: f64,
    v: &[f64],
) -> Vec<f64> {
    let n = w.len();
    let shifted: Vec<f64> = w
        .iter()
        .zip(z)
        .map(|(&wi, &zi)| wi - alpha_t * local_subgradient(zi, p, wi))
        .collect();
    let mixing = Matrix::identity(n).add_scaled(-beta_t, laplacian);
    mixing
        .mul_vec(&shifted)
        .into_iter()
        .zip(v)
        .map(|(x, vi)| x + beta_t * vi)
        .collect()
}

/// `max{|1 − λ₂β|, |λₙβ − 1|}`, the contraction factor of the disagreement
/// dynamics. Under the step bound it equals `1 − λ₂β`.
pub fn contraction_norm(spectral: &SpectralInfo, beta_t: f64) -> Result<f64, ProtocolError> {
    let bound = spectral.beta_bound();
    if beta_t > bound * (1.0 + 1e-12) {
        return Err(ProtocolError::BetaAboveBound {
            beta: beta_t,
            bound,
        });
    }
    Ok((1.0 - spectral.lambda2 * beta_t)
        .abs()
        .max((spectral.lambda_n * beta_t - 1.0).abs()))
}

/// Spectral norm of `I − βL − (1/n)𝟙𝟙ᵀ`, computed numerically.
pub fn mixing_matrix_norm(g: &Graph, beta_t: f64) -> Result<f64, ProtocolError> {
    let n = g.n();
    let mut b = Matrix::identity(n).add_scaled(-beta_t, &g.laplacian());
    let avg = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] -= avg;
        }
    }
    Ok(symmetric_spectral_norm(&b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_graph, spectral_extremes, GraphKind};
    use proptest::prelude::*;

    fn agent(w: f64, z: f64) -> AgentState {
        AgentState { id: 0, z, w }
    }

    #[test]
    fn message_examples() {
        assert!((compute_message(&agent(5.0, 3.0), 0.95, 1.0) - 4.95).abs() < 1e-15);
        assert!((compute_message(&agent(2.0, 3.0), 0.95, 1.0) - 2.95).abs() < 1e-15);
        assert_eq!(compute_message(&agent(7.25, 3.0), 0.95, 0.0), 7.25);
    }

    #[test]
    fn update_examples() {
        assert_eq!(update_estimate(4.0, &[], 0.5), 4.0);
        assert_eq!(update_estimate(4.0, &[6.0], 1.0), 6.0);
        assert_eq!(update_estimate(4.0, &[6.0, 2.0], 0.25), 4.0);
    }

    #[test]
    fn two_agent_round_by_hand() {
        // m1 = 0 - 1*(1 - 0.75) = -0.25, m2 = 1 - 1*(1 - 0.75) = 0.75
        // w1 = -0.25 - 0.25*(-0.25 - 0.75) = 0, w2 = 0.75 - 0.25*(0.75 + 0.25) = 0.5
        let g = make_graph(&GraphKind::Complete, 2, 0).unwrap();
        let states = initial_states(&[0.0, 1.0]);
        let m: Vec<f64> = states
            .iter()
            .map(|a| compute_message(a, 0.75, 1.0))
            .collect();
        assert_eq!(m, vec![-0.25, 0.75]);
        let next = step_agentwise(&states, &g, 0.75, 1.0, 0.25, &RoundNoise::zeros(&g)).unwrap();
        assert_eq!(next[0].w, 0.0);
        assert_eq!(next[1].w, 0.5);
        let vec_form = step_vectorform(
            &[0.0, 1.0],
            &g.laplacian(),
            0.75,
            &[0.0, 1.0],
            1.0,
            0.25,
            &[0.0, 0.0],
        );
        assert_eq!(vec_form, vec![0.0, 0.5]);
    }

    #[test]
    fn zero_steps_are_identity() {
        let g = make_graph(&GraphKind::Ring, 5, 0).unwrap();
        let states: Vec<_> = (0..5)
            .map(|i| AgentState {
                id: i,
                z: i as f64,
                w: 3.0 * i as f64 - 1.0,
            })
            .collect();
        let noise = RoundNoise::from_samples(vec![1.5; g.directed_edges().len()]);
        let next = step_agentwise(&states, &g, 0.3, 0.0, 0.0, &noise).unwrap();
        assert_eq!(next, states);
    }

    #[test]
    fn vectorform_special_cases() {
        let g = make_graph(&GraphKind::Path, 4, 0).unwrap();
        let l = g.laplacian();
        let z = [1.0, 5.0, 2.0, 8.0];
        let w = [3.0, 3.0, 1.0, 9.0];
        let out = step_vectorform(&w, &l, 0.3, &z, 2.0, 0.0, &[0.0; 4]);
        let expected: Vec<f64> = w
            .iter()
            .zip(&z)
            .map(|(&wi, &zi)| wi - 2.0 * (if wi >= zi { 1.0 } else { 0.0 } - 0.3))
            .collect();
        assert_eq!(out, expected);
        let out = step_vectorform(&[4.5; 4], &l, 0.3, &z, 0.0, 0.4, &[0.0; 4]);
        assert!(out.iter().all(|&x| (x - 4.5).abs() < 1e-15));
    }

    #[test]
    fn divergence_is_reported() {
        let g = make_graph(&GraphKind::Complete, 2, 0).unwrap();
        let states = initial_states(&[0.0, 1.0]);
        let noise = RoundNoise::from_samples(vec![f64::INFINITY, 0.0]);
        assert!(matches!(
            step_agentwise(&states, &g, 0.5, 1.0, 0.5, &noise),
            Err(ProtocolError::Divergence { agent: 2, .. })
        ));
    }

    #[test]
    fn contraction_examples() {
        let p3 = spectral_extremes(&make_graph(&GraphKind::Path, 3, 0).unwrap()).unwrap();
        assert!((contraction_norm(&p3, 0.5).unwrap() - 0.5).abs() < 1e-10);
        assert!(matches!(
            contraction_norm(&p3, 0.6),
            Err(ProtocolError::BetaAboveBound { .. })
        ));
        for n in 2..8 {
            let g = make_graph(&GraphKind::Complete, n, 0).unwrap();
            let s = spectral_extremes(&g).unwrap();
            let beta = 1.0 / n as f64;
            assert!(contraction_norm(&s, beta).unwrap().abs() < 1e-10);
            assert!(mixing_matrix_norm(&g, beta).unwrap() < 1e-8);
        }
    }

    #[test]
    fn silent_noise_is_zero() {
        let g = make_graph(&GraphKind::Ring, 6, 0).unwrap();
        let mut stream = NoiseStream::new(1, 0);
        let n = draw_round_noise(&NoiseModel::NONE, &g, &mut stream);
        assert_eq!(n.len(), 12);
        assert!(n.samples().iter().all(|&v| v == 0.0));
        let n = draw_round_noise(&NoiseModel::gaussian(0.0).unwrap(), &g, &mut stream);
        assert!(n.samples().iter().all(|&v| v == 0.0));
        assert!(NoiseModel::gaussian(-1.0).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let g = make_graph(&GraphKind::Complete, 2, 0).unwrap();
        let model = NoiseModel::gaussian(10.0).unwrap();
        let mut stream = NoiseStream::new(42, 0);
        let mut noise = RoundNoise::zeros(&g);
        let (mut sum, mut sumsq, mut count) = (0.0, 0.0, 0usize);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for round in 0..500_000 {
            fill_round_noise(&model, &mut stream, &mut noise);
            let (a, b) = (noise.on_link(0), noise.on_link(1));
            sum += a + b;
            sumsq += a * a + b * b;
            count += 2;
            if round < 100_000 {
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
        }
        let mean = sum / count as f64;
        let var = sumsq / count as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((9.8..=10.2).contains(&var), "var {var}");
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let g = make_graph(&GraphKind::Ring, 4, 0).unwrap();
        let model = NoiseModel::gaussian(1.0).unwrap();
        let a = draw_round_noise(&model, &g, &mut NoiseStream::new(9, 3));
        let b = draw_round_noise(&model, &g, &mut NoiseStream::new(9, 3));
        let c = draw_round_noise(&model, &g, &mut NoiseStream::new(9, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn random_round(
    ) -> impl Strategy<Value = (usize, f64, u64, Vec<f64>, Vec<f64>, f64, f64, f64, u64)> {
        (
            2usize..15,
            0.2f64..1.0,
            any::<u64>(),
            prop::collection::vec(-100.0f64..100.0, 15),
            prop::collection::vec(-100.0f64..100.0, 15),
            0.01f64..0.99,
            0.0f64..80.0,
            0.0f64..1.0,
            any::<u64>(),
        )
    }

    proptest! {
        #[test]
        fn agentwise_matches_vectorform(
            (n, prob, gseed, z, w, p, alpha, u, nseed) in random_round()
        ) {
            let g = make_graph(&GraphKind::ErdosRenyi { edge_prob: prob }, n, gseed).unwrap();
            let s = spectral_extremes(&g).unwrap();
            let beta = u * s.beta_bound();
            let states: Vec<_> = (0..n).map(|i| AgentState { id: i, z: z[i], w: w[i] }).collect();
            let noise = draw_round_noise(&NoiseModel::gaussian(10.0).unwrap(), &g, &mut NoiseStream::new(nseed, 0));
            let a = step_agentwise(&states, &g, p, alpha, beta, &noise).unwrap();
            let v = step_vectorform(&w[..n], &g.laplacian(), p, &z[..n], alpha, beta, &noise.aggregate_incoming(&g));
            for (x, y) in a.iter().zip(&v) {
                prop_assert!((x.w - y).abs() < 1e-12, "{} vs {}", x.w, y);
            }
        }

        #[test]
        fn pure_mixing_preserves_mean_and_contracts(
            n in 2usize..15, prob in 0.2f64..1.0, gseed in any::<u64>(),
            w in prop::collection::vec(-100.0f64..100.0, 15), u in 0.01f64..1.0,
        ) {
            let g = make_graph(&GraphKind::ErdosRenyi { edge_prob: prob }, n, gseed).unwrap();
            let s = spectral_extremes(&g).unwrap();
            let beta = u * s.beta_bound();
            let states: Vec<_> = (0..n).map(|i| AgentState { id: i, z: 0.0, w: w[i] }).collect();
            let next = step_agentwise(&states, &g, 0.5, 0.0, beta, &RoundNoise::zeros(&g)).unwrap();
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            let disagreement = |xs: &[f64]| {
                let m = mean(xs);
                xs.iter().map(|x| (x - m).powi(2)).sum::<f64>().sqrt()
            };
            let before: Vec<f64> = w[..n].to_vec();
            let after: Vec<f64> = next.iter().map(|a| a.w).collect();
            prop_assert!((mean(&before) - mean(&after)).abs() < 1e-12);
            let factor = 1.0 - s.lambda2 * beta;
            prop_assert!(disagreement(&after) <= factor * disagreement(&before) + 1e-9);
        }
    }
}

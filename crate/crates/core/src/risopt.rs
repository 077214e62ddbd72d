//! RIS phase optimization.
//!
//! Two optimization parameters (OP) are supported, both computed from the
//! singular values `λ_1 ≥ … ≥ λ_M` of the wideband cascaded channel:
//!
//! - `lambda`: share of the top `ν` singular values, `Σ_{r≤ν} λ_r / Σ_j λ_j`,
//!   with `ν` clamped to 2 since only the two dominant directions feed the
//!   precoder.
//! - `effrank`: entropy effective rank `exp(−Σ p_j ln p_j)`, `p_j = λ_j / Σλ`.
//!
//! The search is the maximum cross-swapping algorithm: score `T` random
//! configurations, keep the best two as parents, then enumerate every way of
//! taking each of `N_new` randomly chosen elements from either parent.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::channel::{CascadeBasis, ChannelSet};
use crate::error::{Error, Result};
use crate::linalg::{svd, ComplexMatrix};
use crate::ris::{sample_configurations, RisConfiguration};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "lambda", alias = "lambda_based")]
    LambdaBased,
    #[serde(rename = "effrank", alias = "effective_rank")]
    EffectiveRank,
}

impl OpKind {
    pub fn label(self) -> &'static str {
        match self {
            OpKind::LambdaBased => "lambda",
            OpKind::EffectiveRank => "effrank",
        }
    }
}

impl std::fmt::Display for OpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpMetric {
    pub kind: OpKind,
    pub layer: usize,
    pub value: f64,
}

/// Largest OP layer count: only the two dominant directions are optimized.
pub const MAX_OP_LAYERS: usize = 2;

fn spectrum_total(singular_values: &[f64]) -> Result<f64> {
    let total: f64 = singular_values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("OP undefined for an all-zero channel".into()));
    }
    Ok(total)
}

/// `Σ_{r≤count} λ_r / Σ_j λ_j` for sorted singular values (no clamping).
pub fn lambda_ratio(singular_values: &[f64], count: usize) -> Result<f64> {
    let total = spectrum_total(singular_values)?;
    if count == 0 {
        return Err(Error::Domain("lambda ratio needs at least one singular value".into()));
    }
    let top: f64 = singular_values.iter().take(count).sum();
    Ok((top / total).min(1.0))
}

/// Entropy effective rank of a singular-value spectrum.
pub fn effective_rank(singular_values: &[f64]) -> Result<f64> {
    let total = spectrum_total(singular_values)?;
    let entropy: f64 = singular_values
        .iter()
        .map(|s| s / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(entropy.exp())
}

pub fn op_from_singular_values(kind: OpKind, singular_values: &[f64], layer: usize) -> Result<OpMetric> {
    if layer == 0 {
        return Err(Error::Config("layer count must be at least 1".into()));
    }
    let value = match kind {
        OpKind::LambdaBased => lambda_ratio(singular_values, layer.min(MAX_OP_LAYERS))?,
        OpKind::EffectiveRank => effective_rank(singular_values)?,
    };
    Ok(OpMetric { kind, layer, value })
}

/// Lambda-based OP with `ν` clamped to 2.
pub fn op_lambda(f: &ComplexMatrix, layer: usize) -> Result<OpMetric> {
    op_from_singular_values(OpKind::LambdaBased, &svd(f)?.singular_values, layer)
}

pub fn op_effective_rank(f: &ComplexMatrix) -> Result<OpMetric> {
    op_from_singular_values(OpKind::EffectiveRank, &svd(f)?.singular_values, 1)
}

pub fn evaluate_op(kind: OpKind, f: &ComplexMatrix, layer: usize) -> Result<OpMetric> {
    op_from_singular_values(kind, &svd(f)?.singular_values, layer)
}

/// Search budget for [`mca_optimize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McaParams {
    /// Number of random configurations `T`.
    pub t_random: usize,
    /// Number of crossed elements; `2^n_ris_new` offspring.
    pub n_ris_new: usize,
    pub bits: u8,
    pub amplitude: f64,
    /// Keep one [`TraceRecord`] per evaluated configuration.
    pub record_trace: bool,
}

pub const MAX_CROSSED_ELEMENTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Offspring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub phase_indices: Vec<u32>,
    pub op_value: f64,
    pub stage: Stage,
}

/// Parents, crossing positions and the winning offspring of one search.
#[derive(Clone, Debug)]
pub struct McaState {
    pub parents: (RisConfiguration, RisConfiguration),
    pub parent_ops: (f64, f64),
    /// Element positions crossed between the parents, ascending.
    pub swap_indices: Vec<usize>,
    /// Offspring number of the winner (0 is the best parent).
    pub best_offspring: usize,
    pub best_op: f64,
    /// OP of every initial random configuration, in sampling order.
    pub initial_ops: Vec<f64>,
    pub offspring_ops: Vec<f64>,
    pub trace: Vec<TraceRecord>,
}

impl McaState {
    pub fn offspring_count(&self) -> usize {
        1 << self.swap_indices.len()
    }

    /// Offspring `i`: bit `k` of `i` selects the second parent's phase at
    /// `swap_indices[k]`; every other element follows the best parent.
    pub fn offspring(&self, i: usize) -> RisConfiguration {
        assert!(i < self.offspring_count());
        let (best, second) = &self.parents;
        let mut child = best.clone();
        for (k, &pos) in self.swap_indices.iter().enumerate() {
            if i >> k & 1 == 1 {
                child = child.with_index(pos, second.indices()[pos]);
            }
        }
        child
    }

    pub fn offspring_iter(&self) -> impl Iterator<Item = RisConfiguration> + '_ {
        (0..self.offspring_count()).map(|i| self.offspring(i))
    }
}

#[derive(Clone, Debug)]
pub struct McaOutcome {
    pub config: RisConfiguration,
    pub metric: OpMetric,
    pub state: McaState,
}

/// Seed of the initial random population used by [`mca_optimize`] for `seed`.
pub fn population_seed(seed: u64) -> u64 {
    seed::derive(seed, &[0])
}

fn swap_seed(seed: u64) -> u64 {
    seed::derive(seed, &[1])
}

/// Runs the cross-swapping search on the wideband cascade of `channels`.
pub fn mca_optimize(
    channels: &ChannelSet,
    params: &McaParams,
    kind: OpKind,
    layer: usize,
    seed: u64,
) -> Result<McaOutcome> {
    mca_optimize_with_basis(&CascadeBasis::new(channels)?, params, kind, layer, seed)
}

pub fn mca_optimize_with_basis(
    basis: &CascadeBasis,
    params: &McaParams,
    kind: OpKind,
    layer: usize,
    seed: u64,
) -> Result<McaOutcome> {
    let n_ris = basis.n_ris();
    if params.t_random < 2 {
        return Err(Error::Config(format!("MCA needs T ≥ 2 random configurations, got {}", params.t_random)));
    }
    if params.n_ris_new > n_ris || params.n_ris_new > MAX_CROSSED_ELEMENTS {
        return Err(Error::Config(format!(
            "cannot cross {} elements of a {n_ris}-element RIS (limit {MAX_CROSSED_ELEMENTS})",
            params.n_ris_new
        )));
    }
    let score = |cfg: &RisConfiguration| -> Result<f64> { Ok(evaluate_op(kind, &basis.wideband(cfg)?, layer)?.value) };

    let population = sample_configurations(params.t_random, n_ris, params.bits, params.amplitude, population_seed(seed))?;
    let initial_ops = population.iter().map(&score).collect::<Result<Vec<f64>>>()?;

    // stable: earlier samples win ties
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| initial_ops[b].total_cmp(&initial_ops[a]).then(a.cmp(&b)));
    let (first, second) = (order[0], order[1]);

    let mut swap_indices = index::sample(&mut seed::rng(swap_seed(seed)), n_ris, params.n_ris_new).into_vec();
    swap_indices.sort_unstable();

    let mut state = McaState {
        parents: (population[first].clone(), population[second].clone()),
        parent_ops: (initial_ops[first], initial_ops[second]),
        swap_indices,
        best_offspring: 0,
        best_op: f64::NEG_INFINITY,
        initial_ops,
        offspring_ops: Vec::new(),
        trace: Vec::new(),
    };

    let mut offspring_ops = Vec::with_capacity(state.offspring_count());
    let (mut best_offspring, mut best_op) = (0, f64::NEG_INFINITY);
    for (i, child) in state.offspring_iter().enumerate() {
        let op = if i == 0 { state.parent_ops.0 } else { score(&child)? };
        if op > best_op {
            best_op = op;
            best_offspring = i;
        }
        offspring_ops.push(op);
    }
    state.offspring_ops = offspring_ops;
    state.best_offspring = best_offspring;
    state.best_op = best_op;

    if params.record_trace {
        let initial = population.iter().zip(&state.initial_ops).map(|(c, &v)| TraceRecord {
            phase_indices: c.indices().to_vec(),
            op_value: v,
            stage: Stage::Initial,
        });
        let children = state.offspring_iter().zip(&state.offspring_ops).map(|(c, &v)| TraceRecord {
            phase_indices: c.indices().to_vec(),
            op_value: v,
            stage: Stage::Offspring,
        });
        state.trace = initial.chain(children).collect();
    }

    let config = state.offspring(state.best_offspring);
    let metric = OpMetric { kind, layer, value: state.best_op };
    Ok(McaOutcome { config, metric, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{cascade, generate_channels, ChannelDims, ChannelParams};
    use crate::linalg::testutil::random_matrix;
    use crate::linalg::C64;
    use proptest::prelude::*;

    fn params(t: usize, n_new: usize) -> McaParams {
        McaParams { t_random: t, n_ris_new: n_new, bits: 4, amplitude: 1.0, record_trace: false }
    }

    fn small_channels(n_ris_x: usize, n_ris_y: usize, seed: u64) -> ChannelSet {
        let dims = ChannelDims { n_ris_x, n_ris_y, n1: 2, n2: 1, n_r: 4, n3: 2 };
        generate_channels(&dims, &ChannelParams::default(), seed).unwrap()
    }

    #[test]
    fn lambda_examples() {
        let u = ComplexMatrix::column_vector(&[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let rank_one = u.matmul(&u.hermitian()).unwrap();
        assert!((op_lambda(&rank_one, 1).unwrap().value - 1.0).abs() < 1e-12);
        assert!((lambda_ratio(&[2.0, 1.0, 1.0], 2).unwrap() - 0.75).abs() < 1e-15);
        let f = ComplexMatrix::from_diag(&[C64::new(2.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        // ν = 4 clamps to the two dominant values
        assert!((op_lambda(&f, 4).unwrap().value - 0.75).abs() < 1e-12);
        assert!(op_lambda(&ComplexMatrix::zeros(2, 2), 1).is_err());
    }

    #[test]
    fn lambda_matches_independent_oracle() {
        let mut rng = seed::rng(17);
        for _ in 0..20 {
            let f = random_matrix(&mut rng, 4, 4);
            // oracle: eigenvalues of FᴴF via a separate route (SVD of the Gram)
            let mut eig = svd(&f.gram()).unwrap().singular_values;
            eig.sort_by(|a, b| b.total_cmp(a));
            let sv: Vec<f64> = eig.iter().map(|e| e.sqrt()).collect();
            let expect = (sv[0] + sv[1]) / sv.iter().sum::<f64>();
            assert!((op_lambda(&f, 2).unwrap().value - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn effective_rank_examples() {
        assert!((effective_rank(&[1.0, 1.0, 1.0, 1.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!((effective_rank(&[3.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        // exp(H(0.5, 0.25, 0.25)) computed by hand: 2√2
        assert!((effective_rank(&[2.0, 1.0, 1.0]).unwrap() - 2.828_427_124_746_19).abs() < 1e-12);
        assert!(op_effective_rank(&ComplexMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn zero_crossing_returns_best_parent() {
        let ch = small_channels(4, 4, 3);
        let out = mca_optimize(&ch, &params(20, 0), OpKind::LambdaBased, 2, 9).unwrap();
        assert_eq!(out.state.offspring_count(), 1);
        assert_eq!(out.config, out.state.parents.0);
        let best_initial = out.state.initial_ops.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(out.metric.value, best_initial);
    }

    #[test]
    fn rejects_bad_budgets() {
        let ch = small_channels(2, 2, 1);
        assert!(mca_optimize(&ch, &params(1, 1), OpKind::LambdaBased, 1, 0).is_err());
        assert!(mca_optimize(&ch, &params(5, 5), OpKind::LambdaBased, 1, 0).is_err());
    }

    #[test]
    fn two_element_crossing_equals_exhaustive_search() {
        for s in 0..20 {
            let ch = small_channels(2, 1, s);
            let p = McaParams { t_random: 8, n_ris_new: 2, bits: 2, amplitude: 1.0, record_trace: false };
            let out = mca_optimize(&ch, &p, OpKind::LambdaBased, 2, s).unwrap();
            // oracle: re-sample the population, pick parents, enumerate all 4 mixes
            let pop = sample_configurations(8, 2, 2, 1.0, population_seed(s)).unwrap();
            let ops: Vec<f64> = pop.iter().map(|c| op_lambda(&cascade(&ch, c).unwrap(), 2).unwrap().value).collect();
            let mut idx: Vec<usize> = (0..8).collect();
            idx.sort_by(|&a, &b| ops[b].total_cmp(&ops[a]).then(a.cmp(&b)));
            let (a, b) = (&pop[idx[0]], &pop[idx[1]]);
            let mut best: Option<(f64, RisConfiguration)> = None;
            for k0 in [a.indices()[0], b.indices()[0]] {
                for k1 in [a.indices()[1], b.indices()[1]] {
                    let c = RisConfiguration::new(2, 1.0, vec![k0, k1]).unwrap();
                    let v = op_lambda(&cascade(&ch, &c).unwrap(), 2).unwrap().value;
                    if best.as_ref().is_none_or(|(bv, _)| v > *bv + 1e-12) {
                        best = Some((v, c));
                    }
                }
            }
            let (bv, _) = best.unwrap();
            assert!((out.metric.value - bv).abs() < 1e-12, "seed {s}");
        }
    }

    #[test]
    fn trace_records_every_evaluation() {
        let ch = small_channels(4, 2, 5);
        let p = McaParams { record_trace: true, ..params(10, 3) };
        let out = mca_optimize(&ch, &p, OpKind::EffectiveRank, 1, 1).unwrap();
        assert_eq!(out.state.trace.len(), 10 + 8);
        assert_eq!(out.state.trace.iter().filter(|r| r.stage == Stage::Offspring).count(), 8);
        let line = serde_json::to_string(&out.state.trace[0]).unwrap();
        assert!(line.contains("\"stage\":\"initial\""));
    }

    #[test]
    fn offspring_differ_from_best_parent_only_at_swap_positions() {
        let ch = small_channels(4, 4, 2);
        let out = mca_optimize(&ch, &params(30, 5), OpKind::LambdaBased, 2, 4).unwrap();
        let st = &out.state;
        assert_eq!(st.offspring_count(), 32);
        let kids: Vec<RisConfiguration> = st.offspring_iter().collect();
        for kid in &kids {
            for (pos, (&a, &b)) in kid.indices().iter().zip(st.parents.0.indices()).enumerate() {
                if a != b {
                    assert!(st.swap_indices.contains(&pos));
                }
            }
        }
        // closed under flipping any crossing bit
        for i in 0..32 {
            for k in 0..5 {
                assert_eq!(st.offspring(i ^ (1 << k)), kids[i ^ (1 << k)]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mca_never_regresses(seed in any::<u64>(), kind_bit in any::<bool>()) {
            let kind = if kind_bit { OpKind::LambdaBased } else { OpKind::EffectiveRank };
            let ch = small_channels(4, 2, seed);
            let out = mca_optimize(&ch, &params(12, 4), kind, 2, seed).unwrap();
            let best_initial = out.state.initial_ops.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!(out.metric.value >= best_initial);
            prop_assert!(out.metric.value >= out.state.parent_ops.0);
        }

        #[test]
        fn full_lambda_ratio_is_one(seed in any::<u64>(), m in 1usize..6, n in 1usize..6) {
            let f = random_matrix(&mut seed::rng(seed), m, n);
            let sv = svd(&f).unwrap().singular_values;
            prop_assert!((lambda_ratio(&sv, m.min(n)).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn op_values_stay_in_range(seed in any::<u64>(), layer in 1usize..5) {
            let f = random_matrix(&mut seed::rng(seed), 4, 4);
            let l = op_lambda(&f, layer).unwrap().value;
            prop_assert!(l > 0.0 && l <= 1.0);
            let e = op_effective_rank(&f).unwrap().value;
            prop_assert!((1.0 - 1e-12..=4.0 + 1e-12).contains(&e));
        }

        #[test]
        fn effective_rank_is_scale_invariant(seed in any::<u64>(), alpha in 1e-3f64..1e3) {
            let f = random_matrix(&mut seed::rng(seed), 3, 4);
            let a = op_effective_rank(&f).unwrap().value;
            let b = op_effective_rank(&f.scale_real(alpha)).unwrap().value;
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

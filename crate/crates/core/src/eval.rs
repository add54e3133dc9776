//! Link-prediction quality: MRR and Hits@n of positives ranked against
//! sampled corruptions.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::Triple;
use crate::model::{score, EmbeddingTable};
use crate::seed::derive_seed;
use crate::train::{sample_negatives, Corruption};

/// 1-based rank of `triple` among `negatives`. Ties are pessimistic: a
/// negative with an equal score is ranked above the positive.
pub fn rank_against_negatives(table: &EmbeddingTable, triple: Triple, negatives: &[Triple]) -> Result<usize> {
    if negatives.is_empty() {
        return Err(Error::Eval("ranking needs at least one negative".into()));
    }
    let pos = score(table, triple.head, triple.rel, triple.tail)?;
    let mut above = 0;
    for n in negatives {
        if score(table, n.head, n.rel, n.tail)? >= pos {
            above += 1;
        }
    }
    Ok(1 + above)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub negatives: usize,
    pub trials: usize,
    pub test_size: usize,
    pub hits_at: Vec<usize>,
    pub corruption: Corruption,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            negatives: 50,
            trials: 3,
            test_size: 10_000,
            hits_at: vec![5, 10, 20],
            corruption: Corruption::Both,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub test_triples: usize,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub trials: usize,
    pub per_trial: Vec<TrialResult>,
}

fn summarize(ranks: &[usize], hits_at: &[usize]) -> TrialResult {
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = hits_at
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    TrialResult {
        test_triples: ranks.len(),
        mrr,
        hits,
    }
}

/// Average MRR / Hits@n over `trials` independent test-set draws from
/// `held_out`. Negatives are raw (unfiltered) corruptions.
pub fn evaluate(table: &EmbeddingTable, held_out: &[Triple], config: &EvalConfig) -> Result<EvalReport> {
    if held_out.is_empty() {
        return Err(Error::Eval("empty test set".into()));
    }
    if config.trials == 0 || config.negatives == 0 || config.test_size == 0 {
        return Err(Error::Config("eval trials, negatives and test size must be positive".into()));
    }
    let mut per_trial = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("eval/trial{trial}")));
        let size = config.test_size.min(held_out.len());
        let mut picks = sample(&mut rng, held_out.len(), size).into_vec();
        picks.sort_unstable();
        let cases = picks
            .iter()
            .map(|&i| {
                let t = held_out[i];
                sample_negatives(t, config.negatives, config.corruption, table.num_entities(), &mut rng).map(|n| (t, n))
            })
            .collect::<Result<Vec<_>>>()?;
        let ranks = cases
            .par_iter()
            .map(|(t, negs)| rank_against_negatives(table, *t, negs))
            .collect::<Result<Vec<_>>>()?;
        per_trial.push(summarize(&ranks, &config.hits_at));
    }
    let trials = per_trial.len() as f64;
    let mrr = per_trial.iter().map(|t| t.mrr).sum::<f64>() / trials;
    let hits = config
        .hits_at
        .iter()
        .map(|&k| (k, per_trial.iter().map(|t| t.hits[&k]).sum::<f64>() / trials))
        .collect();
    Ok(EvalReport {
        method: table.kind().to_string(),
        mrr,
        hits,
        trials: per_trial.len(),
        per_trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Interner, NodeId, RelId};
    use crate::model::{ModelKind, Norm};

    fn table(kind: ModelKind, ents: Vec<f64>, rels: Vec<f64>) -> EmbeddingTable {
        let ne = ents.len();
        EmbeddingTable::from_parts(
            kind,
            1,
            Interner::from_names((0..ne).map(|i| format!("e{i}"))),
            Interner::from_names((0..rels.len()).map(|i| format!("r{i}"))),
            ents,
            rels,
        )
        .unwrap()
    }

    #[test]
    fn rank_extremes_and_ties() {
        // DistMult d=1 with r=1: score = h*t
        let t = table(ModelKind::DistMult, vec![1.0, 1.0, 0.5, 2.0], vec![1.0]);
        let pos = Triple::new(NodeId(0), RelId(0), NodeId(1)); // 1.0
        let tie = Triple::new(NodeId(1), RelId(0), NodeId(0)); // 1.0
        let low = Triple::new(NodeId(0), RelId(0), NodeId(2)); // 0.5
        let high = Triple::new(NodeId(0), RelId(0), NodeId(3)); // 2.0
        assert_eq!(rank_against_negatives(&t, pos, &[low; 50]).unwrap(), 1);
        assert_eq!(rank_against_negatives(&t, pos, &[high; 50]).unwrap(), 51);
        assert_eq!(rank_against_negatives(&t, pos, &[tie, low]).unwrap(), 2);
        assert!(rank_against_negatives(&t, pos, &[]).is_err());
    }

    #[test]
    fn hand_ranked_mrr() {
        let ranks = [1, 2, 3, 1, 5, 10, 51, 4, 2, 1];
        let oracle = (1.0 + 0.5 + 1.0 / 3.0 + 1.0 + 0.2 + 0.1 + 1.0 / 51.0 + 0.25 + 0.5 + 1.0) / 10.0;
        let r = summarize(&ranks, &[5, 10, 20]);
        assert!((r.mrr - oracle).abs() < 1e-15);
        assert_eq!(r.hits[&5], 0.8);
        assert_eq!(r.hits[&10], 0.9);
        assert_eq!(r.hits[&20], 0.9);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let t = table(ModelKind::DistMult, vec![1.0, 2.0], vec![1.0]);
        assert!(matches!(evaluate(&t, &[], &EvalConfig::default()), Err(Error::Eval(_))));
    }

    #[test]
    fn evaluation_is_seeded() {
        let ents: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = table(ModelKind::TransE(Norm::L1), ents, vec![0.1, -0.2]);
        let held: Vec<Triple> = (0..20).map(|i| Triple::new(NodeId(i), RelId(i % 2), NodeId((i + 3) % 30))).collect();
        let cfg = EvalConfig { test_size: 10, seed: 4, ..EvalConfig::default() };
        let a = evaluate(&t, &held, &cfg).unwrap();
        let b = evaluate(&t, &held, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_trial.len(), 3);
        assert!(a.per_trial.iter().all(|p| p.test_triples == 10));
        assert!(a.hits[&5] <= a.hits[&10] && a.hits[&10] <= a.hits[&20]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mrr_invariant_under_monotone_transform(
                ents in proptest::collection::vec(0.1f64..3.0, 12),
                scale in 0.1f64..5.0,
            ) {
                // DistMult d=1, r=1, positive entries: score = h*t. Scaling
                // the relation by s > 0 applies x -> s*x to every score.
                let held: Vec<Triple> = (0..12).map(|i| Triple::new(NodeId(i), RelId(0), NodeId((i + 1) % 12))).collect();
                let cfg = EvalConfig { negatives: 8, trials: 2, seed: 1, ..EvalConfig::default() };
                let a = evaluate(&table(ModelKind::DistMult, ents.clone(), vec![1.0]), &held, &cfg).unwrap();
                let b = evaluate(&table(ModelKind::DistMult, ents, vec![scale]), &held, &cfg).unwrap();
                prop_assert_eq!(a.mrr, b.mrr);
                for w in [5usize, 10, 20].windows(2) {
                    prop_assert!(a.hits[&w[0]] <= a.hits[&w[1]]);
                }
                prop_assert!(a.mrr > 0.0 && a.mrr <= 1.0);
            }
        }
    }
}

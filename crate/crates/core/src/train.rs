//! Negative-sampling SGD with a softmax negative log-likelihood loss.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Interner, KnowledgeGraph, NodeId, Triple};
use crate::model::{accumulate_score_grads, init_params, score_vectors, EmbeddingTable, ModelKind};
use crate::seed::derive_seed;

/// Which side of a triple gets replaced when sampling a negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corruption {
    Head,
    Tail,
    #[default]
    Both,
}

const MAX_RESAMPLE: usize = 100;

/// Draw `n` corruptions of `triple` with uniformly random replacement
/// entities. A corruption equal to the input is redrawn up to 100 times and
/// then kept.
pub fn sample_negatives<R: Rng + ?Sized>(
    triple: Triple,
    n: usize,
    policy: Corruption,
    num_entities: usize,
    rng: &mut R,
) -> Result<Vec<Triple>> {
    if num_entities < 2 {
        return Err(Error::Sampling(format!(
            "cannot corrupt triples in a graph with {num_entities} entit{}",
            if num_entities == 1 { "y" } else { "ies" }
        )));
    }
    if n == 0 {
        return Err(Error::Sampling("negative count must be positive".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut candidate = triple;
        for _ in 0..MAX_RESAMPLE {
            let replace_head = match policy {
                Corruption::Head => true,
                Corruption::Tail => false,
                Corruption::Both => rng.gen_bool(0.5),
            };
            let e = NodeId(rng.gen_range(0..num_entities as u32));
            candidate = if replace_head {
                Triple::new(e, triple.rel, triple.tail)
            } else {
                Triple::new(triple.head, triple.rel, e)
            };
            if candidate != triple {
                break;
            }
        }
        out.push(candidate);
    }
    Ok(out)
}

/// Loss value and its derivative with respect to each score.
#[derive(Debug, Clone, PartialEq)]
pub struct NllGrad {
    pub loss: f64,
    pub d_pos: f64,
    pub d_neg: Vec<f64>,
}

/// `-s_pos + log sum_{x in {pos} ∪ negs} exp(s_x)`, with max-shifted
/// log-sum-exp. Derivatives are `softmax - onehot(pos)`.
pub fn nll_loss_and_grads(pos: f64, negs: &[f64]) -> Result<NllGrad> {
    if negs.is_empty() {
        return Err(Error::Config("softmax NLL needs at least one negative".into()));
    }
    if !pos.is_finite() || negs.iter().any(|s| !s.is_finite()) {
        return Err(Error::TrainingFault {
            epoch: 0,
            batch: 0,
            detail: format!("non-finite score: positive {pos}, negatives {negs:?}"),
        });
    }
    let max = negs.iter().copied().fold(pos, f64::max);
    let exp_pos = (pos - max).exp();
    let exp_negs: Vec<f64> = negs.iter().map(|s| (s - max).exp()).collect();
    let z = exp_pos + exp_negs.iter().sum::<f64>();
    let loss = (max - pos + z.ln()).max(0.0);
    Ok(NllGrad {
        loss,
        d_pos: exp_pos / z - 1.0,
        d_neg: exp_negs.iter().map(|e| e / z).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Negatives per positive; `None` picks the model's default.
    pub negatives: Option<usize>,
    pub seed: u64,
    pub corruption: Corruption,
    pub unit_norm_entities: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::TransE(crate::model::Norm::L1),
            dim: 100,
            epochs: 200,
            batch_size: 512,
            learning_rate: 0.05,
            negatives: None,
            seed: 0,
            corruption: Corruption::Both,
            unit_norm_entities: false,
        }
    }
}

impl TrainConfig {
    pub fn negatives(&self) -> usize {
        self.negatives.unwrap_or_else(|| self.kind.default_negatives())
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.check_dim(self.dim)?;
        if self.batch_size == 0 || self.negatives() == 0 {
            return Err(Error::Config("batch size and negatives must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Entity(u32),
    Relation(u32),
}

struct Contribution {
    loss: f64,
    grads: Vec<(Slot, Vec<f64>)>,
}

fn triple_contribution(
    table: &EmbeddingTable,
    pos: Triple,
    negs: &[Triple],
) -> Result<Contribution> {
    let kind = table.kind();
    let vecs = |t: &Triple| -> Result<(&[f64], &[f64], &[f64])> {
        Ok((table.entity(t.head)?, table.relation(t.rel)?, table.entity(t.tail)?))
    };
    let (ph, pr, pt) = vecs(&pos)?;
    let pos_score = score_vectors(kind, ph, pr, pt);
    let neg_scores = negs
        .iter()
        .map(|t| vecs(t).map(|(h, r, tl)| score_vectors(kind, h, r, tl)))
        .collect::<Result<Vec<_>>>()?;
    let nll = nll_loss_and_grads(pos_score, &neg_scores)?;

    let d = table.dim();
    let mut grads = Vec::with_capacity(3 * (negs.len() + 1));
    for (t, coeff) in std::iter::once((pos, nll.d_pos)).chain(negs.iter().copied().zip(nll.d_neg)) {
        let (h, r, tl) = vecs(&t)?;
        let (mut gh, mut gr, mut gt) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        accumulate_score_grads(kind, h, r, tl, coeff, &mut gh, &mut gr, &mut gt);
        grads.push((Slot::Entity(t.head.0), gh));
        grads.push((Slot::Relation(t.rel.0), gr));
        grads.push((Slot::Entity(t.tail.0), gt));
    }
    Ok(Contribution { loss: nll.loss, grads })
}

fn with_position(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::TrainingFault { detail, .. } => Error::TrainingFault { epoch, batch, detail },
        other => other,
    }
}

/// Train on `triples` over the given id spaces. Per-batch contributions are
/// computed in parallel and summed in batch order, so the result equals a
/// sequential run.
pub fn train_triples(
    entities: &Interner,
    relations: &Interner,
    triples: &[Triple],
    config: &TrainConfig,
) -> Result<(EmbeddingTable, Vec<EpochStats>)> {
    config.validate()?;
    if triples.is_empty() {
        return Err(Error::Config("cannot train on an empty graph".into()));
    }
    let ne = entities.len();
    let mut table = init_params(config.kind, config.dim, ne, relations.len(), derive_seed(config.seed, "init"))?
        .with_names(entities.clone(), relations.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "sgd"));
    let negatives = config.negatives();
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let start = Instant::now();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples = chunk
                .iter()
                .map(|&i| sample_negatives(triples[i], negatives, config.corruption, ne, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let contributions = chunk
                .par_iter()
                .zip(samples.par_iter())
                .map(|(&i, negs)| triple_contribution(&table, triples[i], negs))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| with_position(e, epoch, batch))?;

            let mut summed: BTreeMap<Slot, Vec<f64>> = BTreeMap::new();
            for c in contributions {
                total_loss += c.loss;
                for (slot, g) in c.grads {
                    match summed.get_mut(&slot) {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v),
                        None => {
                            summed.insert(slot, g);
                        }
                    }
                }
            }
            for (slot, g) in summed {
                let row = match slot {
                    Slot::Entity(i) => table.entity_mut(NodeId(i)),
                    Slot::Relation(i) => table.relation_mut(crate::kg::RelId(i)),
                };
                row.iter_mut().zip(&g).for_each(|(p, v)| *p -= config.learning_rate * v);
            }
            if !total_loss.is_finite() || !table.is_finite() {
                return Err(Error::TrainingFault {
                    epoch,
                    batch,
                    detail: format!("divergence: running loss {total_loss}"),
                });
            }
        }
        if config.unit_norm_entities {
            table.normalize_entities();
        }
        let stats = EpochStats {
            epoch,
            mean_loss: total_loss / triples.len() as f64,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::debug!("{} epoch {epoch}: mean loss {:.6}", config.kind, stats.mean_loss);
        log.push(stats);
    }
    Ok((table, log))
}

pub fn train(graph: &KnowledgeGraph, config: &TrainConfig) -> Result<(EmbeddingTable, Vec<EpochStats>)> {
    train_triples(graph.entities(), graph.relations(), graph.triples(), config)
}

//! Comparisons between ranked occupation lists: across metrics, across
//! models and across demographies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bias::{Direction, RankedList};
use crate::error::{Error, Result};
use crate::kg::NodeId;
use crate::model::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDeviation {
    pub value: f64,
    pub effective_k: usize,
    /// Top-K occupations of A missing from B (ranked at `|B| + 1`).
    pub missing_in_b: usize,
}

/// Mean of `1/rank_A(o) - 1/rank_B(o)` over the top-K occupations of `a`.
/// Positive values mean `b` places A's leaders lower. K is clamped to `|a|`.
pub fn rank_deviation(a: &RankedList, b: &RankedList, k: usize) -> Result<RankDeviation> {
    if k == 0 {
        return Err(Error::Config("rank deviation needs K >= 1".into()));
    }
    if a.is_empty() {
        return Err(Error::Config("rank deviation needs a non-empty reference list".into()));
    }
    let b_rank: BTreeMap<NodeId, usize> = b.entries.iter().enumerate().map(|(i, &(o, _))| (o, i + 1)).collect();
    let missing_rank = b.len() + 1;
    let top = a.top(k);
    let mut missing = 0;
    let sum: f64 = top
        .iter()
        .enumerate()
        .map(|(i, (o, _))| {
            let rb = b_rank.get(o).copied().unwrap_or_else(|| {
                missing += 1;
                missing_rank
            });
            1.0 / (i + 1) as f64 - 1.0 / rb as f64
        })
        .sum();
    Ok(RankDeviation {
        value: sum / top.len() as f64,
        effective_k: top.len(),
        missing_in_b: missing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JaccardAtK {
    pub value: f64,
    pub k: usize,
    pub k_a: usize,
    pub k_b: usize,
}

/// Intersection over union of the two top-K occupation sets. A list shorter
/// than K contributes all of its entries. Two empty sets compare as equal.
pub fn jaccard_at_k(a: &RankedList, b: &RankedList, k: usize) -> Result<JaccardAtK> {
    if k == 0 {
        return Err(Error::Config("Jaccard@K needs K >= 1".into()));
    }
    let (sa, sb) = (a.top_ids(k), b.top_ids(k));
    let union = sa.union(&sb).count();
    let value = if union == 0 {
        1.0
    } else {
        sa.intersection(&sb).count() as f64 / union as f64
    };
    Ok(JaccardAtK {
        value,
        k,
        k_a: sa.len(),
        k_b: sb.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub row_mean: Vec<f64>,
    pub row_std: Vec<f64>,
    pub k: usize,
}

impl SimilarityMatrix {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.names.len();
        (0..n).all(|i| (0..n).all(|j| self.values[i][j] == self.values[j][i]))
    }

    pub fn has_unit_diagonal(&self) -> bool {
        (0..self.names.len()).all(|i| self.values[i][i] == 1.0)
    }
}

/// Pairwise Jaccard@K between demographies (ordered by name), with the
/// per-row mean and population standard deviation over off-diagonal entries.
pub fn cross_demography_matrix(lists: &BTreeMap<String, RankedList>, k: usize) -> Result<SimilarityMatrix> {
    if lists.len() < 2 {
        return Err(Error::Config("similarity matrix needs at least two demographies".into()));
    }
    let names: Vec<String> = lists.keys().cloned().collect();
    let ranked: Vec<&RankedList> = lists.values().collect();
    let n = names.len();
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = jaccard_at_k(ranked[i], ranked[j], k)?.value;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    let mut row_mean = Vec::with_capacity(n);
    let mut row_std = Vec::with_capacity(n);
    for (i, row) in values.iter().enumerate() {
        let others: Vec<f64> = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
        let mean = others.iter().sum::<f64>() / others.len() as f64;
        let var = others.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / others.len() as f64;
        row_mean.push(mean);
        row_std.push(var.sqrt());
    }
    Ok(SimilarityMatrix {
        names,
        values,
        row_mean,
        row_std,
        k,
    })
}

/// The `n` demographies most similar to `demography`, descending, ties by name.
pub fn top_similar(matrix: &SimilarityMatrix, demography: &str, n: usize) -> Result<Vec<(String, f64)>> {
    let i = matrix
        .index_of(demography)
        .ok_or_else(|| Error::Lookup(format!("unknown demography `{demography}`")))?;
    if n >= matrix.names.len() {
        return Err(Error::Config(format!(
            "top_similar: n = {n} must be below the demography count {}",
            matrix.names.len()
        )));
    }
    let mut row: Vec<(String, f64)> = matrix
        .names
        .iter()
        .zip(&matrix.values[i])
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, (name, &v))| (name.clone(), v))
        .collect();
    row.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    row.truncate(n);
    Ok(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub direction: Option<Direction>,
    pub model: Option<ModelKind>,
    pub k: usize,
    pub demographies: usize,
    /// Distinct top-K occupations with the fraction of demographies listing them.
    pub vocabulary: Vec<(NodeId, f64)>,
    /// Natural-log Shannon entropy `-sum p log p` over the vocabulary.
    pub entropy: f64,
}

/// Number of demographies whose top-K list contains each occupation.
pub fn frequency_counts(lists: &BTreeMap<String, RankedList>, k: usize) -> Result<BTreeMap<NodeId, usize>> {
    if k == 0 {
        return Err(Error::Config("frequency counts need K >= 1".into()));
    }
    let mut counts = BTreeMap::new();
    for list in lists.values() {
        for o in list.top_ids(k) {
            *counts.entry(o).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

pub fn occupation_entropy(lists: &BTreeMap<String, RankedList>, k: usize) -> Result<DiversityReport> {
    let counts = frequency_counts(lists, k)?;
    let d = lists.len();
    let vocabulary: Vec<(NodeId, f64)> = counts.into_iter().map(|(o, c)| (o, c as f64 / d as f64)).collect();
    let entropy = vocabulary.iter().map(|&(_, p)| -p * p.ln()).sum::<f64>().max(0.0);
    Ok(DiversityReport {
        direction: None,
        model: None,
        k,
        demographies: d,
        vocabulary,
        entropy,
    })
}

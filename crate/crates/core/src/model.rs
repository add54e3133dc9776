//! Triple scoring models: TransE, ComplEx and DistMult.
//!
//! All models share one convention: a higher score means a more plausible
//! triple. Vectors are `f64` rows of a flat row-major matrix. ComplEx rows
//! store the real half first and the imaginary half second.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Interner, NodeId, RelId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    TransE(Norm),
    ComplEx,
    DistMult,
}

impl ModelKind {
    /// Negatives per positive used during training unless overridden.
    pub fn default_negatives(self) -> usize {
        match self {
            ModelKind::TransE(_) => 10,
            ModelKind::ComplEx | ModelKind::DistMult => 3,
        }
    }

    pub fn check_dim(self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self == ModelKind::ComplEx && !dim.is_multiple_of(2) {
            return Err(Error::Config(format!("ComplEx needs an even dimension, got {dim}")));
        }
        Ok(())
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::TransE(Norm::L1) => "transe",
            ModelKind::TransE(Norm::L2) => "transe-l2",
            ModelKind::ComplEx => "complex",
            ModelKind::DistMult => "distmult",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" | "transe-l1" => Ok(ModelKind::TransE(Norm::L1)),
            "transe-l2" => Ok(ModelKind::TransE(Norm::L2)),
            "complex" => Ok(ModelKind::ComplEx),
            "distmult" => Ok(ModelKind::DistMult),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ModelKind> for String {
    fn from(kind: ModelKind) -> Self {
        kind.to_string()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Score of raw vectors `(h, r, t)`.
pub fn score_vectors(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    debug_assert!(h.len() == r.len() && r.len() == t.len());
    match kind {
        ModelKind::TransE(Norm::L1) => -h
            .iter()
            .zip(r)
            .zip(t)
            .map(|((h, r), t)| (h + r - t).abs())
            .sum::<f64>(),
        ModelKind::TransE(Norm::L2) => -h
            .iter()
            .zip(r)
            .zip(t)
            .map(|((h, r), t)| (h + r - t).powi(2))
            .sum::<f64>()
            .sqrt(),
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum(),
        ModelKind::ComplEx => {
            let k = h.len() / 2;
            let (hre, him) = h.split_at(k);
            let (rre, rim) = r.split_at(k);
            let (tre, tim) = t.split_at(k);
            (0..k)
                .map(|i| {
                    rre[i] * hre[i] * tre[i] + rre[i] * him[i] * tim[i] + rim[i] * hre[i] * tim[i]
                        - rim[i] * him[i] * tre[i]
                })
                .sum()
        }
    }
}

/// Accumulate `scale * d score / d{h,r,t}` into the three gradient buffers.
///
/// TransE-L1 uses the sign subgradient with `sign(0) = 0`; TransE-L2 uses
/// a zero gradient at `h + r = t`.
pub fn accumulate_score_grads(
    kind: ModelKind,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    scale: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    let d = h.len();
    match kind {
        ModelKind::TransE(Norm::L1) => {
            for i in 0..d {
                let s = scale * sign(h[i] + r[i] - t[i]);
                gh[i] -= s;
                gr[i] -= s;
                gt[i] += s;
            }
        }
        ModelKind::TransE(Norm::L2) => {
            let n = (0..d).map(|i| (h[i] + r[i] - t[i]).powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                for i in 0..d {
                    let s = scale * (h[i] + r[i] - t[i]) / n;
                    gh[i] -= s;
                    gr[i] -= s;
                    gt[i] += s;
                }
            }
        }
        ModelKind::DistMult => {
            for i in 0..d {
                gh[i] += scale * r[i] * t[i];
                gr[i] += scale * h[i] * t[i];
                gt[i] += scale * h[i] * r[i];
            }
        }
        ModelKind::ComplEx => {
            let k = d / 2;
            for i in 0..k {
                let (hre, him) = (h[i], h[k + i]);
                let (rre, rim) = (r[i], r[k + i]);
                let (tre, tim) = (t[i], t[k + i]);
                gh[i] += scale * (rre * tre + rim * tim);
                gh[k + i] += scale * (rre * tim - rim * tre);
                gr[i] += scale * (hre * tre + him * tim);
                gr[k + i] += scale * (hre * tim - him * tre);
                gt[i] += scale * (rre * hre - rim * him);
                gt[k + i] += scale * (rre * him + rim * hre);
            }
        }
    }
}

/// Gradient of the score with respect to the head vector only.
pub fn head_gradient(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> Vec<f64> {
    let d = h.len();
    let mut gh = vec![0.0; d];
    let mut scratch_r = vec![0.0; d];
    let mut scratch_t = vec![0.0; d];
    accumulate_score_grads(kind, h, r, t, 1.0, &mut gh, &mut scratch_r, &mut scratch_t);
    gh
}

/// Entity and relation embeddings for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    kind: ModelKind,
    dim: usize,
    entity_names: Interner,
    relation_names: Interner,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl EmbeddingTable {
    /// Build from raw row-major matrices.
    pub fn from_parts(
        kind: ModelKind,
        dim: usize,
        entity_names: Interner,
        relation_names: Interner,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Result<Self> {
        kind.check_dim(dim)?;
        if entities.len() != entity_names.len() * dim || relations.len() != relation_names.len() * dim {
            return Err(Error::Config(format!(
                "embedding shape mismatch: {} entity values for {} ids, {} relation values for {} ids, d={dim}",
                entities.len(),
                entity_names.len(),
                relations.len(),
                relation_names.len()
            )));
        }
        if entities.iter().chain(&relations).any(|v| !v.is_finite()) {
            return Err(Error::MetricFault("embedding table contains non-finite values".into()));
        }
        Ok(Self {
            kind,
            dim,
            entity_names,
            relation_names,
            entities,
            relations,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dim
    }

    pub fn entity_names(&self) -> &Interner {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &Interner {
        &self.relation_names
    }

    pub fn entity_index(&self, name: &str) -> Option<NodeId> {
        self.entity_names.get(name).map(NodeId)
    }

    pub fn relation_index(&self, name: &str) -> Option<RelId> {
        self.relation_names.get(name).map(RelId)
    }

    /// Attach external identifiers; lengths must match the matrix rows.
    pub fn with_names(mut self, entities: Interner, relations: Interner) -> Result<Self> {
        if entities.len() != self.num_entities() || relations.len() != self.num_relations() {
            return Err(Error::Config("identifier counts do not match the embedding table".into()));
        }
        self.entity_names = entities;
        self.relation_names = relations;
        Ok(self)
    }

    pub fn entity(&self, id: NodeId) -> Result<&[f64]> {
        let d = self.dim;
        self.entities
            .get(id.index() * d..(id.index() + 1) * d)
            .ok_or_else(|| Error::Lookup(format!("entity handle {id} not in embedding table")))
    }

    pub fn relation(&self, id: RelId) -> Result<&[f64]> {
        let d = self.dim;
        self.relations
            .get(id.index() * d..(id.index() + 1) * d)
            .ok_or_else(|| Error::Lookup(format!("relation handle {id} not in embedding table")))
    }

    pub fn entity_mut(&mut self, id: NodeId) -> &mut [f64] {
        let d = self.dim;
        &mut self.entities[id.index() * d..(id.index() + 1) * d]
    }

    pub fn relation_mut(&mut self, id: RelId) -> &mut [f64] {
        let d = self.dim;
        &mut self.relations[id.index() * d..(id.index() + 1) * d]
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_matrix(&self) -> &[f64] {
        &self.relations
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|v| v.is_finite())
    }

    /// Scale every entity row to unit L2 norm (zero rows are left alone).
    pub fn normalize_entities(&mut self) {
        for row in self.entities.chunks_mut(self.dim) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

pub fn score(table: &EmbeddingTable, h: NodeId, r: RelId, t: NodeId) -> Result<f64> {
    Ok(score_vectors(table.kind, table.entity(h)?, table.relation(r)?, table.entity(t)?))
}

pub fn grad_score_wrt_head(table: &EmbeddingTable, h: NodeId, r: RelId, t: NodeId) -> Result<Vec<f64>> {
    Ok(head_gradient(table.kind, table.entity(h)?, table.relation(r)?, table.entity(t)?))
}

/// Uniform initialization on `[-6/sqrt(d), 6/sqrt(d)]`, deterministic in `seed`.
pub fn init_params(
    kind: ModelKind,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    kind.check_dim(dim)?;
    let bound = 6.0 / (dim as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities: Vec<f64> = (0..num_entities * dim).map(|_| dist.sample(&mut rng)).collect();
    let relations: Vec<f64> = (0..num_relations * dim).map(|_| dist.sample(&mut rng)).collect();
    let entity_names = Interner::from_names((0..num_entities).map(|i| format!("e{i}")));
    let relation_names = Interner::from_names((0..num_relations).map(|i| format!("r{i}")));
    EmbeddingTable::from_parts(kind, dim, entity_names, relation_names, entities, relations)
}

/// JSON sidecar describing a serialized table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSidecar {
    pub format: String,
    pub kind: ModelKind,
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub dtype: String,
    pub byte_order: String,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
}

const SIDECAR_FORMAT: &str = "kgbias-embeddings/1";

/// Sidecar path for a binary table file: `<path>.json`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    let mut s = bin.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write the table as little-endian f64 (entity rows, then relation rows)
/// plus a JSON sidecar. Returns the sidecar path.
pub fn save_table(table: &EmbeddingTable, bin: &Path) -> Result<PathBuf> {
    let file = File::create(bin).map_err(|e| Error::io(bin, e))?;
    let mut w = BufWriter::new(file);
    for v in table.entities.iter().chain(&table.relations) {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(bin, e))?;
    }
    w.flush().map_err(|e| Error::io(bin, e))?;

    let sidecar = TableSidecar {
        format: SIDECAR_FORMAT.into(),
        kind: table.kind,
        dim: table.dim,
        num_entities: table.num_entities(),
        num_relations: table.num_relations(),
        dtype: "f64".into(),
        byte_order: "little".into(),
        entities: table.entity_names.names().to_vec(),
        relations: table.relation_names.names().to_vec(),
    };
    let path = sidecar_path(bin);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_table(bin: &Path) -> Result<EmbeddingTable> {
    let path = sidecar_path(bin);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: TableSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if sidecar.format != SIDECAR_FORMAT || sidecar.dtype != "f64" || sidecar.byte_order != "little" {
        return Err(Error::Ingest(format!("{}: unsupported table format", path.display())));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(bin).map_err(|e| Error::io(bin, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(bin, e))?;
    let d = sidecar.dim;
    let expected = (sidecar.num_entities + sidecar.num_relations) * d * 8;
    if bytes.len() != expected {
        return Err(Error::Ingest(format!(
            "{}: expected {expected} bytes, found {}",
            bin.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let split = sidecar.num_entities * d;
    EmbeddingTable::from_parts(
        sidecar.kind,
        d,
        Interner::from_names(sidecar.entities),
        Interner::from_names(sidecar.relations),
        values[..split].to_vec(),
        values[split..].to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [ModelKind; 4] = [
        ModelKind::TransE(Norm::L1),
        ModelKind::TransE(Norm::L2),
        ModelKind::ComplEx,
        ModelKind::DistMult,
    ];

    fn table_from(kind: ModelKind, ents: &[&[f64]], rels: &[&[f64]]) -> EmbeddingTable {
        let d = ents[0].len();
        EmbeddingTable::from_parts(
            kind,
            d,
            Interner::from_names((0..ents.len()).map(|i| format!("e{i}"))),
            Interner::from_names((0..rels.len()).map(|i| format!("r{i}"))),
            ents.concat(),
            rels.concat(),
        )
        .unwrap()
    }

    #[test]
    fn transe_translation_identity_is_max() {
        for norm in [Norm::L1, Norm::L2] {
            let t = table_from(ModelKind::TransE(norm), &[&[0.3, -1.0, 2.0], &[0.8, -0.5, 1.0], &[0.0, 0.0, 0.0]], &[&[0.5, 0.5, -1.0]]);
            let s = score(&t, NodeId(0), RelId(0), NodeId(1)).unwrap();
            assert!(s.abs() < 1e-15, "{s}");
            assert!(score(&t, NodeId(0), RelId(0), NodeId(2)).unwrap() < s);
        }
    }

    #[test]
    fn zero_vectors_score_zero() {
        for kind in KINDS {
            let t = table_from(kind, &[&[0.0; 4]], &[&[0.0; 4]]);
            assert_eq!(score(&t, NodeId(0), RelId(0), NodeId(0)).unwrap(), 0.0);
        }
    }

    #[test]
    fn distmult_hand_arithmetic() {
        let t = table_from(ModelKind::DistMult, &[&[1.0, 2.0], &[5.0, 6.0]], &[&[3.0, 4.0]]);
        assert_eq!(score(&t, NodeId(0), RelId(0), NodeId(1)).unwrap(), 63.0);
        assert_eq!(grad_score_wrt_head(&t, NodeId(0), RelId(0), NodeId(1)).unwrap(), vec![15.0, 24.0]);
    }

    #[test]
    fn complex_hand_arithmetic() {
        // h = 1+2i, r = 3+4i, t = 5+6i; Re(r*h*conj(t)) = Re((-5+10i)(5-6i)) = -25+60 = 35
        let t = table_from(ModelKind::ComplEx, &[&[1.0, 2.0], &[5.0, 6.0]], &[&[3.0, 4.0]]);
        assert_eq!(score(&t, NodeId(0), RelId(0), NodeId(1)).unwrap(), 35.0);
    }

    #[test]
    fn transe_l1_zero_residual_has_zero_gradient() {
        let t = table_from(ModelKind::TransE(Norm::L1), &[&[1.0, 2.0], &[1.5, 1.0]], &[&[0.5, -1.0]]);
        assert_eq!(grad_score_wrt_head(&t, NodeId(0), RelId(0), NodeId(1)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn invalid_handles() {
        let t = table_from(ModelKind::DistMult, &[&[1.0, 2.0]], &[&[3.0, 4.0]]);
        assert!(matches!(score(&t, NodeId(3), RelId(0), NodeId(0)), Err(Error::Lookup(_))));
        assert!(matches!(grad_score_wrt_head(&t, NodeId(0), RelId(1), NodeId(0)), Err(Error::Lookup(_))));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(ModelKind::TransE(Norm::L1), 100, 20, 3, 7).unwrap();
        let b = init_params(ModelKind::TransE(Norm::L1), 100, 20, 3, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.entity_matrix().iter().chain(a.relation_matrix()).all(|v| v.abs() <= 0.6));
        let c = init_params(ModelKind::TransE(Norm::L1), 100, 20, 3, 8).unwrap();
        assert!(a.entity_matrix().iter().zip(c.entity_matrix()).any(|(x, y)| x != y));
    }

    #[test]
    fn complex_needs_even_dim() {
        assert!(matches!(init_params(ModelKind::ComplEx, 5, 2, 1, 0), Err(Error::Config(_))));
        assert!(init_params(ModelKind::ComplEx, 6, 2, 1, 0).is_ok());
        assert!(matches!(init_params(ModelKind::DistMult, 0, 2, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in KINDS {
            assert_eq!(kind.to_string().parse::<ModelKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(serde_json::from_str::<ModelKind>(&json).unwrap(), kind);
        }
        assert!("rescal".parse::<ModelKind>().is_err());
    }

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut table = init_params(ModelKind::ComplEx, 8, 5, 2, 3).unwrap();
        table.entity_mut(NodeId(0))[0] = f64::MIN_POSITIVE / 3.0;
        let path = dir.path().join("m.bin");
        save_table(&table, &path).unwrap();
        let back = load_table(&path).unwrap();
        assert_eq!(back.kind(), table.kind());
        assert_eq!(back.entity_names(), table.entity_names());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.entity_matrix()), bits(table.entity_matrix()));
        assert_eq!(bits(back.relation_matrix()), bits(table.relation_matrix()));
    }

    #[test]
    fn truncated_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let table = init_params(ModelKind::DistMult, 4, 3, 1, 3).unwrap();
        let path = dir.path().join("m.bin");
        save_table(&table, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_table(&path), Err(Error::Ingest(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
            let v = || proptest::collection::vec(-2.0f64..2.0, d);
            (v(), v(), v())
        }

        proptest! {
            #[test]
            fn transe_permutation_equivariant((h, r, t) in vecs(6), rot in 0usize..6) {
                let perm = |v: &[f64]| { let mut v = v.to_vec(); v.rotate_left(rot); v };
                for norm in [Norm::L1, Norm::L2] {
                    let k = ModelKind::TransE(norm);
                    let a = score_vectors(k, &h, &r, &t);
                    let b = score_vectors(k, &perm(&h), &perm(&r), &perm(&t));
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                    prop_assert!(a <= 0.0);
                }
            }

            #[test]
            fn complex_with_zero_imaginary_is_distmult((h, r, t) in vecs(4)) {
                let pad = |v: &[f64]| { let mut p = v.to_vec(); p.extend(std::iter::repeat_n(0.0, v.len())); p };
                let c = score_vectors(ModelKind::ComplEx, &pad(&h), &pad(&r), &pad(&t));
                let d = score_vectors(ModelKind::DistMult, &h, &r, &t);
                prop_assert!((c - d).abs() <= 1e-12 * (1.0 + d.abs()));
            }
        }
    }
}

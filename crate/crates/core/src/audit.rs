//! End-to-end audit: ingest, slice, merge, train, evaluate, score bias and
//! compare, writing every artifact under one output directory together with
//! a manifest.
//!
//! Each stage reads only what earlier stages wrote, so the stages can also
//! run one at a time against an existing output directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    cross_demography_matrix, frequency_counts, jaccard_at_k, occupation_entropy, rank_deviation, top_similar,
};
use crate::bias::{
    classify_occupations, data_bias_scores, embedding_bias_scores, rank_occupations, select_threshold,
    threshold_grid, BiasScoreTable, Classification, Coverage, Direction, RankedList, ThresholdCurve,
};
use crate::config::AuditConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport};
use crate::kg::{parse_labels, parse_triples, KnowledgeGraph, NodeId, Triple, TripleFormat};
use crate::model::{load_table, save_table, sidecar_path, EmbeddingTable, ModelKind};
use crate::report::{emit_report, markdown, read_json, write_json, write_text, Format, Table, TableJson};
use crate::seed::derive_seed;
use crate::slice::{merge_slices, slice_demography, DemographySlice, SliceSpec};
use crate::train::train_triples;

pub const MANIFEST: &str = "manifest.json";
const SOURCE_TRIPLES: &str = "graph/source_triples.tsv";
const SOURCE_LABELS: &str = "graph/source_labels.tsv";
const MERGED_TRIPLES: &str = "graph/merged_triples.tsv";
const MERGED_LABELS: &str = "graph/labels.tsv";
const HELDOUT_TRIPLES: &str = "graph/heldout_triples.tsv";

pub const DIRECTIONS: [Direction; 2] = [Direction::Male, Direction::Female];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Slice,
    Train,
    Eval,
    DataBias,
    EmbedBias,
    Compare,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Slice,
        Stage::Train,
        Stage::Eval,
        Stage::DataBias,
        Stage::EmbedBias,
        Stage::Compare,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Slice => "slice",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::DataBias => "data-bias",
            Stage::EmbedBias => "embed-bias",
            Stage::Compare => "compare",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub stage: Stage,
    /// False for artifacts carrying wall-clock measurements.
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub completed_stages: Vec<Stage>,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<Artifact>,
    /// The configuration as given; its output directory reads `.`.
    pub config: AuditConfig,
}

impl Manifest {
    fn new(cfg: &AuditConfig) -> Self {
        let mut echo = cfg.clone();
        echo.output_dir = PathBuf::from(".");
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            status: RunStatus::Complete,
            failed_stage: None,
            error: None,
            completed_stages: Vec::new(),
            seed: cfg.seed,
            stage_seeds: BTreeMap::new(),
            artifacts: Vec::new(),
            config: echo,
        }
    }

    pub fn load(out: &Path) -> Result<Self> {
        read_json(&out.join(MANIFEST))
    }

    pub fn artifact_paths(&self, stage: Stage) -> impl Iterator<Item = &str> {
        self.artifacts.iter().filter(move |a| a.stage == stage).map(|a| a.path.as_str())
    }
}

/// Output directory plus the manifest being assembled.
pub struct Workspace<'a> {
    pub cfg: &'a AuditConfig,
    pub root: PathBuf,
    pub manifest: Manifest,
    stage: Stage,
}

impl<'a> Workspace<'a> {
    /// Fresh manifest.
    pub fn create(cfg: &'a AuditConfig) -> Self {
        Self {
            cfg,
            root: cfg.output_dir.clone(),
            manifest: Manifest::new(cfg),
            stage: Stage::Ingest,
        }
    }

    /// Continue the manifest already in the output directory, if any.
    pub fn open(cfg: &'a AuditConfig) -> Self {
        let mut ws = Self::create(cfg);
        if let Ok(m) = Manifest::load(&ws.root) {
            ws.manifest.completed_stages = m.completed_stages;
            ws.manifest.stage_seeds = m.stage_seeds;
            ws.manifest.artifacts = m.artifacts;
        }
        ws
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn record(&mut self, rel: &str, deterministic: bool) {
        self.manifest.artifacts.retain(|a| a.path != rel);
        self.manifest.artifacts.push(Artifact {
            path: rel.to_string(),
            stage: self.stage,
            deterministic,
        });
    }

    fn seed(&mut self, name: &str) -> u64 {
        let s = derive_seed(self.cfg.seed, name);
        self.manifest.stage_seeds.insert(name.to_string(), s);
        s
    }

    /// CSV and JSON forms of one table.
    fn table(&mut self, rel_stem: &str, table: &Table) -> Result<()> {
        for format in [Format::Csv, Format::Json] {
            emit_report(table, &self.path(rel_stem), format)?;
            self.record(&format!("{rel_stem}.{}", format.extension()), true);
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        write_json(&self.path(rel), value)?;
        self.record(rel, true);
        Ok(())
    }

    fn text(&mut self, rel: &str, text: &str, deterministic: bool) -> Result<()> {
        write_text(&self.path(rel), text)?;
        self.record(rel, deterministic);
        Ok(())
    }

    /// Run one stage, tagging any failure with the stage name.
    pub fn run<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.stage = stage;
        info!("stage {}", stage.as_str());
        match f(self) {
            Ok(v) => {
                if !self.manifest.completed_stages.contains(&stage) {
                    self.manifest.completed_stages.push(stage);
                    self.manifest.completed_stages.sort();
                }
                Ok(v)
            }
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.failed_stage = Some(stage);
                self.manifest.error = Some(e.to_string());
                Err(e.in_stage(stage.as_str()))
            }
        }
    }

    pub fn write_manifest(&mut self) -> Result<()> {
        self.manifest.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        write_json(&self.root.join(MANIFEST), &self.manifest)
    }
}

fn tsv_triples(graph: &KnowledgeGraph, triples: &[Triple]) -> Result<String> {
    let mut s = String::new();
    for t in triples {
        s += graph.entity_name(t.head)?;
        s.push('\t');
        s += graph.relation_name(t.rel)?;
        s.push('\t');
        s += graph.entity_name(t.tail)?;
        s.push('\n');
    }
    Ok(s)
}

/// Labels of the graph's entities and relations, sorted by id.
fn tsv_labels(graph: &KnowledgeGraph) -> String {
    let mut rows: Vec<(&String, &String)> = graph
        .labels()
        .iter()
        .filter(|(id, _)| graph.entity_id(id).is_some() || graph.relation_id(id).is_some())
        .collect();
    rows.sort();
    rows.into_iter().map(|(id, l)| format!("{id}\t{l}\n")).collect()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn load_graph(triples: &Path, labels: Option<&Path>, format: &TripleFormat) -> Result<KnowledgeGraph> {
    let (mut graph, _) = parse_triples(open(triples)?, format)?;
    if let Some(labels) = labels {
        graph.set_labels(parse_labels(open(labels)?)?.0);
    }
    Ok(graph)
}

/// Re-reading emitted graphs must keep every row, literal or not.
fn verbatim() -> TripleFormat {
    TripleFormat {
        keep_literal_tails: true,
        ..TripleFormat::default()
    }
}


#[derive(Serialize)]
struct IngestSummary {
    entities: usize,
    relations: usize,
    triples: crate::kg::IngestReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<crate::kg::LabelReport>,
}

pub fn ingest(ws: &mut Workspace) -> Result<KnowledgeGraph> {
    ws.cfg.validate_paths()?;
    let path = ws.cfg.resolve(&ws.cfg.corpus.triples);
    let (mut graph, report) = parse_triples(open(&path)?, &ws.cfg.corpus.format)?;
    if graph.is_empty() {
        return Err(Error::Ingest(format!("{}: no triples survived ingestion", path.display())));
    }
    let labels = match &ws.cfg.corpus.labels {
        Some(l) => {
            let (labels, rep) = parse_labels(open(&ws.cfg.resolve(l))?)?;
            graph.set_labels(labels);
            Some(rep)
        }
        None => None,
    };
    info!(
        "ingested {} triples over {} entities ({} duplicates, {} malformed)",
        report.triples_kept,
        graph.num_entities(),
        report.duplicates_dropped,
        report.malformed_skipped
    );
    let summary = IngestSummary {
        entities: graph.num_entities(),
        relations: graph.num_relations(),
        triples: report,
        labels,
    };
    ws.json("ingest/report.json", &summary)?;
    ws.text(SOURCE_TRIPLES, &tsv_triples(&graph, graph.triples())?, true)?;
    ws.text(SOURCE_LABELS, &tsv_labels(&graph), true)?;
    Ok(graph)
}

pub fn load_source(ws: &Workspace) -> Result<KnowledgeGraph> {
    load_graph(&ws.path(SOURCE_TRIPLES), Some(&ws.path(SOURCE_LABELS)), &verbatim())
}


/// The merged graph, its train/held-out split and the slices re-derived on it.
pub struct Prepared {
    pub graph: KnowledgeGraph,
    pub slices: Vec<DemographySlice>,
    pub train: Vec<Triple>,
    pub heldout: Vec<Triple>,
}

fn resolve_slices(cfg: &AuditConfig, graph: &KnowledgeGraph) -> Result<Vec<DemographySlice>> {
    cfg.slices
        .iter()
        .map(|s| Ok(slice_demography(graph, &SliceSpec::resolve(s, &cfg.ids, graph)?)))
        .collect()
}

/// Hold out `fraction` of the triples, never removing an entity's last
/// occurrence from the training side.
pub fn holdout_split(graph: &KnowledgeGraph, fraction: f64, seed: u64) -> (Vec<Triple>, Vec<Triple>) {
    let triples = graph.triples();
    let target = (triples.len() as f64 * fraction).floor() as usize;
    let mut degree = vec![0usize; graph.num_entities()];
    for t in triples {
        degree[t.head.index()] += 1;
        degree[t.tail.index()] += 1;
    }
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = vec![false; triples.len()];
    let mut count = 0;
    for i in order {
        if count == target {
            break;
        }
        let t = triples[i];
        let need = if t.head == t.tail { 3 } else { 2 };
        if degree[t.head.index()] >= need && degree[t.tail.index()] >= need {
            degree[t.head.index()] -= 1;
            degree[t.tail.index()] -= 1;
            held[i] = true;
            count += 1;
        }
    }
    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for (t, h) in triples.iter().zip(held) {
        if h {
            heldout.push(*t);
        } else {
            train.push(*t);
        }
    }
    (train, heldout)
}

fn slice_summary(graph: &KnowledgeGraph, slices: &[DemographySlice]) -> Result<Table> {
    let mut t = Table::new([
        "demography",
        "countries",
        "humans",
        "male",
        "female",
        "other_or_unknown",
        "conflicting_gender",
        "occupations_held",
        "occupations_eligible",
    ]);
    for s in slices {
        let countries = s
            .spec
            .countries
            .iter()
            .map(|&c| graph.entity_name(c).map(str::to_string))
            .collect::<Result<Vec<_>>>()?
            .join(" ");
        let (m, f) = (s.male_count(), s.female_count());
        t.push(vec![
            s.name().into(),
            countries.into(),
            s.humans.len().into(),
            m.into(),
            f.into(),
            (s.humans.len() - m - f).into(),
            s.conflicting_gender.into(),
            s.held_occupations().len().into(),
            s.occupation_universe.len().into(),
        ]);
    }
    Ok(t)
}

pub fn slice(ws: &mut Workspace, source: &KnowledgeGraph) -> Result<Prepared> {
    let source_slices = resolve_slices(ws.cfg, source)?;
    for s in &source_slices {
        if s.humans.is_empty() {
            warn!("slice `{}` holds no humans", s.name());
        }
    }
    let graph = merge_slices(source, &source_slices)?;
    let seed = ws.seed("split");
    let (train, heldout) = holdout_split(&graph, ws.cfg.holdout_fraction, seed);
    let slices = resolve_slices(ws.cfg, &graph)?;
    info!(
        "merged graph: {} entities, {} triples ({} held out)",
        graph.num_entities(),
        graph.num_triples(),
        heldout.len()
    );
    ws.text(MERGED_TRIPLES, &tsv_triples(&graph, graph.triples())?, true)?;
    ws.text(MERGED_LABELS, &tsv_labels(&graph), true)?;
    ws.text(HELDOUT_TRIPLES, &tsv_triples(&graph, &heldout)?, true)?;
    ws.table("slices/summary", &slice_summary(&graph, &slices)?)?;
    Ok(Prepared {
        graph,
        slices,
        train,
        heldout,
    })
}

pub fn load_prepared(ws: &Workspace) -> Result<Prepared> {
    let graph = load_graph(&ws.path(MERGED_TRIPLES), Some(&ws.path(MERGED_LABELS)), &verbatim())?;
    let (held_graph, _) = parse_triples(open(&ws.path(HELDOUT_TRIPLES))?, &verbatim())?;
    let mut heldout = Vec::with_capacity(held_graph.num_triples());
    for t in held_graph.triples() {
        let lookup = |h: &str, r: &str, tl: &str| -> Option<Triple> {
            Some(Triple::new(graph.entity_id(h)?, graph.relation_id(r)?, graph.entity_id(tl)?))
        };
        let (h, r, tl) = (
            held_graph.entity_name(t.head)?,
            held_graph.relation_name(t.rel)?,
            held_graph.entity_name(t.tail)?,
        );
        heldout.push(lookup(h, r, tl).ok_or_else(|| {
            Error::Ingest(format!("held-out triple ({h}, {r}, {tl}) is not in the merged graph"))
        })?);
    }
    let held: HashSet<Triple> = heldout.iter().copied().collect();
    let train = graph.triples().iter().copied().filter(|t| !held.contains(t)).collect();
    let slices = resolve_slices(ws.cfg, &graph)?;
    Ok(Prepared {
        graph,
        slices,
        train,
        heldout,
    })
}


fn model_path(kind: ModelKind) -> String {
    format!("models/{kind}/embeddings.bin")
}

pub fn train_models(ws: &mut Workspace, prep: &Prepared) -> Result<Vec<EmbeddingTable>> {
    let mut tables = Vec::new();
    for &kind in &ws.cfg.models.clone() {
        let seed = ws.seed(&format!("train/{kind}"));
        let tc = ws.cfg.train_config(kind, seed);
        let start = Instant::now();
        let (table, stats) = train_triples(prep.graph.entities(), prep.graph.relations(), &prep.train, &tc)?;
        info!("trained {kind} in {:.1}s", start.elapsed().as_secs_f64());

        let rel = model_path(kind);
        let bin = ws.path(&rel);
        if let Some(dir) = bin.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        save_table(&table, &bin)?;
        ws.record(&rel, true);
        let side = sidecar_path(Path::new(&rel));
        ws.record(&side.to_string_lossy(), true);
        ws.json(&format!("models/{kind}/train_config.json"), &tc)?;
        let mut loss = Table::new(["epoch", "mean_loss"]);
        let mut timing = Table::new(["epoch", "mean_loss", "wall_time_s"]);
        for s in &stats {
            loss.push(vec![s.epoch.into(), s.mean_loss.into()]);
            timing.push(vec![s.epoch.into(), s.mean_loss.into(), s.wall_time_s.into()]);
        }
        ws.table(&format!("models/{kind}/loss"), &loss)?;
        ws.text(&format!("logs/{kind}_epochs.csv"), &timing.to_csv(), false)?;
        tables.push(table);
    }
    Ok(tables)
}

pub fn load_models(ws: &Workspace, prep: &Prepared) -> Result<Vec<EmbeddingTable>> {
    ws.cfg
        .models
        .iter()
        .map(|&kind| {
            let table = load_table(&ws.path(&model_path(kind)))?;
            if table.kind() != kind
                || table.entity_names().names() != prep.graph.entities().names()
                || table.relation_names().names() != prep.graph.relations().names()
            {
                return Err(Error::Ingest(format!("stored {kind} model does not match the merged graph")));
            }
            Ok(table)
        })
        .collect()
}


pub fn evaluate_models(ws: &mut Workspace, prep: &Prepared, tables: &[EmbeddingTable]) -> Result<Vec<EvalReport>> {
    if prep.heldout.is_empty() {
        warn!("no held-out triples; link prediction skipped");
        return Ok(Vec::new());
    }
    let hits_at = ws.cfg.eval.hits_at.clone();
    let mut columns = vec!["method".to_string(), "mrr".to_string()];
    columns.extend(hits_at.iter().map(|k| format!("hits@{k}")));
    columns.extend(["test_triples".to_string(), "trials".to_string()]);
    let mut summary = Table::new(columns);
    let mut trials = Table::new(
        ["method", "trial", "test_triples", "mrr"]
            .into_iter()
            .map(String::from)
            .chain(hits_at.iter().map(|k| format!("hits@{k}"))),
    );
    let mut reports = Vec::new();
    for table in tables {
        let kind = table.kind();
        let cfg = EvalConfig {
            seed: ws.seed(&format!("eval/{kind}")),
            ..ws.cfg.eval.clone()
        };
        let r = evaluate(table, &prep.heldout, &cfg)?;
        let hits: Vec<f64> = hits_at.iter().map(|k| r.hits[k]).collect();
        if hits.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Eval(format!("{kind}: Hits@n is not monotone in n: {hits:?}")));
        }
        let mut row = vec![r.method.clone().into(), r.mrr.into()];
        row.extend(hits.iter().map(|&h| h.into()));
        row.extend([r.per_trial[0].test_triples.into(), r.trials.into()]);
        summary.push(row);
        for (i, t) in r.per_trial.iter().enumerate() {
            let mut row = vec![r.method.clone().into(), i.into(), t.test_triples.into(), t.mrr.into()];
            row.extend(hits_at.iter().map(|k| t.hits[k].into()));
            trials.push(row);
        }
        reports.push(r);
    }
    ws.table("eval/link_prediction", &summary)?;
    ws.table("eval/trials", &trials)?;
    Ok(reports)
}


pub struct DataBias {
    pub table: BiasScoreTable,
    pub curve: ThresholdCurve,
    pub classes: Classification,
}

impl DataBias {
    pub fn ranked(&self, direction: Direction) -> RankedList {
        rank_occupations(&self.table.toward(direction))
    }
}

fn is_partition(c: &Classification, universe: &BTreeSet<NodeId>) -> bool {
    let total = c.male.len() + c.female.len() + c.neutral.len();
    let union: BTreeSet<NodeId> = c.male.iter().chain(&c.female).chain(&c.neutral).copied().collect();
    total == universe.len() && &union == universe
}

pub fn compute_data_bias(cfg: &AuditConfig, prep: &Prepared) -> Result<Vec<DataBias>> {
    prep.slices
        .iter()
        .map(|s| {
            let table = data_bias_scores(s)?;
            let curve = select_threshold(&table, &threshold_grid(&table, cfg.bias.threshold_steps))?;
            let classes = classify_occupations(&table, curve.selected)?;
            let universe: BTreeSet<NodeId> = table.scores.keys().copied().collect();
            if !is_partition(&classes, &universe) {
                return Err(Error::MetricFault(format!("demography `{}`: classification is not a partition", s.name())));
            }
            Ok(DataBias { table, curve, classes })
        })
        .collect()
}

pub fn data_bias(ws: &mut Workspace, prep: &Prepared) -> Result<Vec<DataBias>> {
    let results = compute_data_bias(ws.cfg, prep)?;
    let g = &prep.graph;
    let mut summary = Table::new([
        "demography",
        "occupations",
        "threshold",
        "degenerate",
        "male_biased",
        "female_biased",
        "neutral",
    ]);
    for (s, d) in prep.slices.iter().zip(&results) {
        let counts = s.occupation_counts();
        let (male, female) = (d.ranked(Direction::Male), d.ranked(Direction::Female));
        let mut t = Table::new([
            "occupation",
            "label",
            "male_holders",
            "female_holders",
            "theta",
            "rank_male",
            "rank_female",
            "class",
        ]);
        for (&o, &theta) in &d.table.scores {
            let class = if d.classes.male.contains(&o) {
                "male"
            } else if d.classes.female.contains(&o) {
                "female"
            } else {
                "neutral"
            };
            let c = counts.get(&o).copied().unwrap_or_default();
            t.push(vec![
                g.entity_name(o)?.into(),
                g.entity_label(o)?.into(),
                c.male.into(),
                c.female.into(),
                theta.into(),
                male.rank_of(o).unwrap_or(0).into(),
                female.rank_of(o).unwrap_or(0).into(),
                class.into(),
            ]);
        }
        ws.table(&format!("bias/data/{}", s.name()), &t)?;
        let mut curve = Table::new(["t", "neutral"]);
        for (&x, &n) in d.curve.grid.iter().zip(&d.curve.neutral) {
            curve.push(vec![x.into(), n.into()]);
        }
        ws.table(&format!("bias/data/{}_threshold", s.name()), &curve)?;
        summary.push(vec![
            s.name().into(),
            d.table.scores.len().into(),
            d.curve.selected.into(),
            d.curve.degenerate.to_string().into(),
            d.classes.male.len().into(),
            d.classes.female.len().into(),
            d.classes.neutral.len().into(),
        ]);
    }
    ws.table("bias/data/summary", &summary)?;
    Ok(results)
}


/// Embedding-bias scores keyed by (model, demography, direction).
pub type EmbedScores = BTreeMap<(ModelKind, String, Direction), (BiasScoreTable, Coverage)>;

pub fn compute_embed_bias(cfg: &AuditConfig, prep: &Prepared, tables: &[EmbeddingTable]) -> Result<EmbedScores> {
    let params = cfg.bias.params();
    let mut out = BTreeMap::new();
    for table in tables {
        for s in &prep.slices {
            for dir in DIRECTIONS {
                let scored = embedding_bias_scores(table, &prep.graph, s, dir, &params)?;
                out.insert((table.kind(), s.name().to_string(), dir), scored);
            }
        }
    }
    Ok(out)
}

fn score_table(g: &KnowledgeGraph, table: &BiasScoreTable) -> Result<Table> {
    let mut t = Table::new(["occupation", "label", "score", "rank"]);
    for (i, &(o, v)) in rank_occupations(table).entries.iter().enumerate() {
        t.push(vec![g.entity_name(o)?.into(), g.entity_label(o)?.into(), v.into(), (i + 1).into()]);
    }
    Ok(t)
}

pub fn embed_bias(ws: &mut Workspace, prep: &Prepared, tables: &[EmbeddingTable]) -> Result<EmbedScores> {
    let scores = compute_embed_bias(ws.cfg, prep, tables)?;
    for table in tables {
        let kind = table.kind();
        let mut coverage = Table::new([
            "demography",
            "direction",
            "humans_total",
            "humans_embedded",
            "occupations_total",
            "occupations_embedded",
        ]);
        for ((k, name, dir), (t, c)) in &scores {
            if *k != kind {
                continue;
            }
            ws.table(&format!("bias/{kind}/{name}_{}", dir.as_str()), &score_table(&prep.graph, t)?)?;
            coverage.push(vec![
                name.clone().into(),
                dir.as_str().into(),
                c.humans_total.into(),
                c.humans_embedded.into(),
                c.occupations_total.into(),
                c.occupations_embedded.into(),
            ]);
        }
        ws.table(&format!("bias/{kind}/coverage"), &coverage)?;
    }
    Ok(scores)
}


fn lists_for(scores: &EmbedScores, kind: ModelKind, dir: Direction) -> BTreeMap<String, RankedList> {
    scores
        .iter()
        .filter(|((k, _, d), _)| *k == kind && *d == dir)
        .map(|((_, name, _), (t, _))| (name.clone(), rank_occupations(t)))
        .collect()
}

pub fn compare(ws: &mut Workspace, prep: &Prepared, data: &[DataBias], scores: &EmbedScores) -> Result<()> {
    let cfg = ws.cfg;
    let g = &prep.graph;
    let models = cfg.models.clone();

    // data-bias list vs embedding-bias list
    let mut deviation = Table::new([
        "model",
        "demography",
        "direction",
        "k",
        "rank_deviation",
        "effective_k",
        "missing_in_embedding",
    ]);
    for &kind in &models {
        for (s, d) in prep.slices.iter().zip(data) {
            for dir in DIRECTIONS {
                let a = d.ranked(dir);
                let b = rank_occupations(&scores[&(kind, s.name().to_string(), dir)].0);
                let r = rank_deviation(&a, &b, cfg.rank_deviation_k)?;
                deviation.push(vec![
                    kind.to_string().into(),
                    s.name().into(),
                    dir.as_str().into(),
                    cfg.rank_deviation_k.into(),
                    r.value.into(),
                    r.effective_k.into(),
                    r.missing_in_b.into(),
                ]);
            }
        }
    }
    ws.table("analytics/rank_deviation", &deviation)?;

    // model vs model, per demography
    for (i, &a) in models.iter().enumerate() {
        for &b in &models[i + 1..] {
            let mut columns = vec!["demography".to_string()];
            for dir in DIRECTIONS {
                columns.extend(cfg.k.iter().map(|k| format!("{}_k{k}", dir.as_str())));
            }
            let mut t = Table::new(columns);
            for s in &prep.slices {
                let mut row = vec![s.name().into()];
                for dir in DIRECTIONS {
                    let la = rank_occupations(&scores[&(a, s.name().to_string(), dir)].0);
                    let lb = rank_occupations(&scores[&(b, s.name().to_string(), dir)].0);
                    for &k in &cfg.k {
                        row.push(jaccard_at_k(&la, &lb, k)?.value.into());
                    }
                }
                t.push(row);
            }
            ws.table(&format!("analytics/jaccard_{a}_vs_{b}"), &t)?;
        }
    }

    // across demographies, per model and direction
    let mut entropy = Table::new(["model", "direction", "k", "demographies", "vocabulary", "entropy"]);
    let mut summary = Table::new(["model", "direction", "k", "demography", "mean", "std"]);
    let mut nearest = Table::new(["model", "direction", "k", "demography", "position", "similar", "similarity"]);
    for &kind in &models {
        for dir in DIRECTIONS {
            let lists = lists_for(scores, kind, dir);
            let tag = format!("{kind}_{}", dir.as_str());

            let mut diversity = occupation_entropy(&lists, cfg.entropy_k)?;
            diversity.direction = Some(dir);
            diversity.model = Some(kind);
            entropy.push(vec![
                kind.to_string().into(),
                dir.as_str().into(),
                cfg.entropy_k.into(),
                diversity.demographies.into(),
                diversity.vocabulary.len().into(),
                diversity.entropy.into(),
            ]);
            let mut vocab = Table::new(["occupation", "label", "probability"]);
            for &(o, p) in &diversity.vocabulary {
                vocab.push(vec![g.entity_name(o)?.into(), g.entity_label(o)?.into(), p.into()]);
            }
            ws.table(&format!("analytics/diversity/{tag}"), &vocab)?;

            let mut freq: Vec<(NodeId, usize)> = frequency_counts(&lists, cfg.entropy_k)?.into_iter().collect();
            freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut ft = Table::new(["occupation", "label", "count"]);
            for (o, c) in freq {
                ft.push(vec![g.entity_name(o)?.into(), g.entity_label(o)?.into(), c.into()]);
            }
            ws.table(&format!("analytics/frequency/{tag}"), &ft)?;

            if lists.len() < 2 {
                continue;
            }
            let m = cross_demography_matrix(&lists, cfg.similarity_k)?;
            if !m.is_symmetric() || !m.has_unit_diagonal() {
                return Err(Error::MetricFault(format!("{tag}: similarity matrix is not symmetric with unit diagonal")));
            }
            let mut mt = Table::new(std::iter::once("demography".to_string()).chain(m.names.iter().cloned()));
            for (name, row) in m.names.iter().zip(&m.values) {
                mt.push(std::iter::once(name.clone().into()).chain(row.iter().map(|&v| v.into())).collect());
            }
            ws.table(&format!("analytics/similarity/{tag}"), &mt)?;
            let n = cfg.top_similar.min(m.names.len() - 1);
            for (i, name) in m.names.iter().enumerate() {
                summary.push(vec![
                    kind.to_string().into(),
                    dir.as_str().into(),
                    m.k.into(),
                    name.clone().into(),
                    m.row_mean[i].into(),
                    m.row_std[i].into(),
                ]);
                for (pos, (other, v)) in top_similar(&m, name, n)?.into_iter().enumerate() {
                    nearest.push(vec![
                        kind.to_string().into(),
                        dir.as_str().into(),
                        m.k.into(),
                        name.clone().into(),
                        (pos + 1).into(),
                        other.into(),
                        v.into(),
                    ]);
                }
            }
        }
    }
    ws.table("analytics/entropy", &entropy)?;
    if prep.slices.len() >= 2 {
        ws.table("analytics/similarity_summary", &summary)?;
        ws.table("analytics/top_similar", &nearest)?;
    } else {
        warn!("one demography only; cross-demography similarity skipped");
    }
    Ok(())
}


const SUMMARY_TABLES: [(&str, &str); 8] = [
    ("slices/summary", "Demographies"),
    ("eval/link_prediction", "Link prediction"),
    ("bias/data/summary", "Data-bias thresholds"),
    ("analytics/rank_deviation", "Rank deviation, data bias vs embedding bias"),
    ("analytics/jaccard_", "Jaccard@K between models"),
    ("analytics/similarity_summary", "Cross-demography similarity"),
    ("analytics/top_similar", "Most similar demographies"),
    ("analytics/entropy", "Occupation diversity"),
];

/// Collate the headline tables listed in the manifest into `summary.md`.
pub fn report(ws: &mut Workspace) -> Result<()> {
    let mut md = String::from("# Bias audit summary\n");
    let paths: Vec<String> = ws.manifest.artifacts.iter().map(|a| a.path.clone()).collect();
    for (prefix, title) in SUMMARY_TABLES {
        for p in paths.iter().filter(|p| p.starts_with(prefix) && p.ends_with(".json")) {
            let stem = p.trim_end_matches(".json");
            if prefix.ends_with('_') || stem == prefix {
                let table: TableJson = read_json(&ws.path(p))?;
                md += &format!("\n## {title} (`{stem}`)\n\n{}", markdown(&table));
            }
        }
    }
    ws.text("summary.md", &md, true)
}


/// Everything a full run produces, kept in memory for callers.
pub struct AuditResult {
    pub manifest: Manifest,
    pub prepared: Prepared,
    pub tables: Vec<EmbeddingTable>,
    pub eval: Vec<EvalReport>,
    pub data: Vec<DataBias>,
    pub embed: EmbedScores,
}

/// Run every stage in order. On failure the manifest lists what was
/// completed and names the failing stage.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditResult> {
    cfg.validate()?;
    let mut ws = Workspace::create(cfg);
    let result = run_all(&mut ws);
    ws.write_manifest()?;
    let (prepared, tables, eval, data, embed) = result?;
    Ok(AuditResult {
        manifest: ws.manifest,
        prepared,
        tables,
        eval,
        data,
        embed,
    })
}

type Outputs = (Prepared, Vec<EmbeddingTable>, Vec<EvalReport>, Vec<DataBias>, EmbedScores);

fn run_all(ws: &mut Workspace) -> Result<Outputs> {
    let source = ws.run(Stage::Ingest, ingest)?;
    let prep = ws.run(Stage::Slice, |ws| slice(ws, &source))?;
    drop(source);
    let tables = ws.run(Stage::Train, |ws| train_models(ws, &prep))?;
    let eval = ws.run(Stage::Eval, |ws| evaluate_models(ws, &prep, &tables))?;
    let data = ws.run(Stage::DataBias, |ws| data_bias(ws, &prep))?;
    let embed = ws.run(Stage::EmbedBias, |ws| embed_bias(ws, &prep, &tables))?;
    ws.run(Stage::Compare, |ws| compare(ws, &prep, &data, &embed))?;
    ws.run(Stage::Report, report)?;
    Ok((prep, tables, eval, data, embed))
}

/// Run a single stage against the output directory, loading its inputs from
/// the artifacts of earlier stages.
pub fn run_stage(cfg: &AuditConfig, stage: Stage) -> Result<Manifest> {
    cfg.validate()?;
    let mut ws = Workspace::open(cfg);
    ws.manifest.status = RunStatus::Complete;
    let result = ws.run(stage, |ws| {
        match stage {
            Stage::Ingest => {
                ingest(ws)?;
            }
            Stage::Slice => {
                let source = load_source(ws)?;
                slice(ws, &source)?;
            }
            Stage::Train => {
                let prep = load_prepared(ws)?;
                train_models(ws, &prep)?;
            }
            Stage::Eval => {
                let prep = load_prepared(ws)?;
                let tables = load_models(ws, &prep)?;
                evaluate_models(ws, &prep, &tables)?;
            }
            Stage::DataBias => {
                let prep = load_prepared(ws)?;
                data_bias(ws, &prep)?;
            }
            Stage::EmbedBias => {
                let prep = load_prepared(ws)?;
                let tables = load_models(ws, &prep)?;
                embed_bias(ws, &prep, &tables)?;
            }
            Stage::Compare => {
                let prep = load_prepared(ws)?;
                let tables = load_models(ws, &prep)?;
                let data = compute_data_bias(ws.cfg, &prep)?;
                let embed = compute_embed_bias(ws.cfg, &prep, &tables)?;
                compare(ws, &prep, &data, &embed)?;
            }
            Stage::Report => report(ws)?,
        }
        Ok(())
    });
    ws.write_manifest()?;
    result.map(|()| ws.manifest)
}

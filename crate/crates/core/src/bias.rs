//! Occupation-level gender bias scores.
//!
//! Two measurements are provided:
//!
//! * **Data bias** counts entities: `theta_o = M_o / M - F_o / F`, where `M`
//!   (`F`) is the number of male (female) humans in a slice and `M_o`
//!   (`F_o`) the number of those holding occupation `o`. A threshold `t`
//!   picked from the neutral-count curve splits occupations into male-,
//!   female-biased and neutral.
//! * **Embedding bias** perturbs each person's embedding one gradient step
//!   toward a gender pole, maximizing
//!   `m = g(e_j, r_gender, e_male) - g(e_j, r_gender, e_female)`
//!   (negated for the female direction), and scores occupation `p` by the
//!   mean change of `g(e_j, r_occupation, e_p)` over all persons.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, NodeId, RelId};
use crate::model::{head_gradient, score_vectors, EmbeddingTable, ModelKind};
use crate::slice::DemographySlice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Male,
    Female,
    Signed,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Male => "male",
            Direction::Female => "female",
            Direction::Signed => "signed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "metric", content = "model")]
pub enum Provenance {
    DataBias,
    EmbedBias(ModelKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScoreTable {
    pub demography: String,
    pub direction: Direction,
    pub provenance: Provenance,
    pub scores: BTreeMap<NodeId, f64>,
}

impl BiasScoreTable {
    /// View a signed table from one gender's side: male keeps the sign,
    /// female negates it.
    pub fn toward(&self, direction: Direction) -> BiasScoreTable {
        let flip = match (self.direction, direction) {
            (Direction::Signed, Direction::Female) => true,
            (Direction::Signed, _) => false,
            (from, to) => from != to,
        };
        BiasScoreTable {
            demography: self.demography.clone(),
            direction,
            provenance: self.provenance,
            scores: self
                .scores
                .iter()
                .map(|(&k, &v)| (k, if flip { -v } else { v }))
                .collect(),
        }
    }
}

/// Occupations in descending score order, ties broken by ascending id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<(NodeId, f64)>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, k: usize) -> &[(NodeId, f64)] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn top_ids(&self, k: usize) -> BTreeSet<NodeId> {
        self.top(k).iter().map(|&(o, _)| o).collect()
    }

    /// 1-based rank.
    pub fn rank_of(&self, occupation: NodeId) -> Option<usize> {
        self.entries.iter().position(|&(o, _)| o == occupation).map(|i| i + 1)
    }
}

pub fn rank_occupations(table: &BiasScoreTable) -> RankedList {
    let mut entries: Vec<(NodeId, f64)> = table.scores.iter().map(|(&k, &v)| (k, v)).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    RankedList { entries }
}

/// Signed `theta` for every eligible occupation of the slice.
pub fn data_bias_scores(slice: &DemographySlice) -> Result<BiasScoreTable> {
    let (m, f) = (slice.male_count(), slice.female_count());
    if m == 0 || f == 0 {
        return Err(Error::UndefinedMetric {
            slice: slice.name().to_string(),
            reason: format!("needs at least one male and one female human (M={m}, F={f})"),
        });
    }
    let counts = slice.occupation_counts();
    let scores = slice
        .occupation_universe
        .iter()
        .map(|o| {
            let c = counts[o];
            (*o, c.male as f64 / m as f64 - c.female as f64 / f as f64)
        })
        .collect();
    Ok(BiasScoreTable {
        demography: slice.name().to_string(),
        direction: Direction::Signed,
        provenance: Provenance::DataBias,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub grid: Vec<f64>,
    pub neutral: Vec<usize>,
    pub selected: f64,
    pub degenerate: bool,
}

/// `steps + 1` uniform points from 0 to `max |theta|` (or to 1 when every
/// score is zero).
pub fn threshold_grid(table: &BiasScoreTable, steps: usize) -> Vec<f64> {
    let max = table.scores.values().fold(0.0f64, |m, v| m.max(v.abs()));
    let max = if max > 0.0 { max } else { 1.0 };
    (0..=steps).map(|i| max * i as f64 / steps as f64).collect()
}

/// Neutral count `N(t) = |{o : -t <= theta_o <= t}|` over the grid; the
/// selected threshold is the interior point with the largest second
/// difference `N(t+) - 2 N(t) + N(t-)`, smallest `t` on ties. A flat
/// curve is degenerate and selects the first interior point.
pub fn select_threshold(table: &BiasScoreTable, grid: &[f64]) -> Result<ThresholdCurve> {
    if grid.len() < 3 {
        return Err(Error::Config("threshold grid needs at least 3 points".into()));
    }
    if grid[0] != 0.0 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("threshold grid must ascend strictly from 0".into()));
    }
    let scores: Vec<f64> = table.scores.values().copied().collect();
    let neutral: Vec<usize> = grid
        .iter()
        .map(|&t| scores.iter().filter(|&&s| -t <= s && s <= t).count())
        .collect();
    let degenerate = neutral.windows(2).all(|w| w[0] == w[1]);
    let selected = if degenerate {
        warn!("demography `{}`: neutral count is flat; threshold curve is degenerate", table.demography);
        grid[1]
    } else {
        let mut best = (i64::MIN, 1);
        for i in 1..grid.len() - 1 {
            let d2 = neutral[i + 1] as i64 - 2 * neutral[i] as i64 + neutral[i - 1] as i64;
            if d2 > best.0 {
                best = (d2, i);
            }
        }
        grid[best.1]
    };
    Ok(ThresholdCurve {
        grid: grid.to_vec(),
        neutral,
        selected,
        degenerate,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub threshold: f64,
    pub male: BTreeSet<NodeId>,
    pub female: BTreeSet<NodeId>,
    pub neutral: BTreeSet<NodeId>,
}

pub fn classify_occupations(table: &BiasScoreTable, t: f64) -> Result<Classification> {
    if !(t >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {t}")));
    }
    let mut c = Classification {
        threshold: t,
        ..Classification::default()
    };
    for (&o, &theta) in &table.scores {
        if theta > t {
            c.male.insert(o);
        } else if theta < -t {
            c.female.insert(o);
        } else {
            c.neutral.insert(o);
        }
    }
    Ok(c)
}

/// Ids of the gender relation and poles inside an embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenderAxis {
    pub relation: RelId,
    pub male: NodeId,
    pub female: NodeId,
}

/// Perturbed copy of `person`'s embedding after `steps` gradient-ascent
/// steps of size `alpha` on the gender objective. The table is not touched.
pub fn perturb_person(
    table: &EmbeddingTable,
    person: NodeId,
    axis: GenderAxis,
    alpha: f64,
    direction: Direction,
    steps: usize,
) -> Result<Vec<f64>> {
    let sign = match direction {
        Direction::Male => 1.0,
        Direction::Female => -1.0,
        Direction::Signed => {
            return Err(Error::Config("perturbation direction must be male or female".into()));
        }
    };
    let kind = table.kind();
    let r = table.relation(axis.relation)?;
    let (ea, eb) = (table.entity(axis.male)?, table.entity(axis.female)?);
    let mut e = table.entity(person)?.to_vec();
    for _ in 0..steps {
        let ga = head_gradient(kind, &e, r, ea);
        let gb = head_gradient(kind, &e, r, eb);
        for i in 0..e.len() {
            e[i] += sign * alpha * (ga[i] - gb[i]);
        }
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::MetricFault(format!("non-finite perturbation for entity handle {person}")));
    }
    Ok(e)
}

/// Which occupations receive an embedding-bias score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupationScope {
    /// Held by at least one male and one female slice human.
    #[default]
    Eligible,
    /// Held by any slice human.
    AllHeld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedBiasParams {
    pub alpha: f64,
    pub steps: usize,
    pub scope: OccupationScope,
}

impl Default for EmbedBiasParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            steps: 1,
            scope: OccupationScope::Eligible,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub humans_total: usize,
    pub humans_embedded: usize,
    pub occupations_total: usize,
    pub occupations_embedded: usize,
}

impl Coverage {
    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn human_ratio(&self) -> f64 {
        Self::ratio(self.humans_embedded, self.humans_total)
    }

    pub fn occupation_ratio(&self) -> f64 {
        Self::ratio(self.occupations_embedded, self.occupations_total)
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Embedding-bias score of every in-scope occupation of `slice`.
///
/// `graph` is the graph the slice was cut from; handles are mapped into the
/// table through external identifiers. Persons or occupations absent from
/// the table are skipped and counted; under 50% coverage is a fault.
pub fn embedding_bias_scores(
    table: &EmbeddingTable,
    graph: &KnowledgeGraph,
    slice: &DemographySlice,
    direction: Direction,
    params: &EmbedBiasParams,
) -> Result<(BiasScoreTable, Coverage)> {
    if !(params.alpha >= 0.0 && params.alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be finite and non-negative, got {}", params.alpha)));
    }
    let spec = &slice.spec;
    let rel = |id: RelId| -> Result<RelId> {
        let name = graph.relation_name(id)?;
        table
            .relation_index(name)
            .ok_or_else(|| Error::MetricFault(format!("relation `{name}` has no embedding")))
    };
    let ent = |id: NodeId| -> Result<NodeId> {
        let name = graph.entity_name(id)?;
        table
            .entity_index(name)
            .ok_or_else(|| Error::MetricFault(format!("gender pole `{name}` has no embedding")))
    };
    let axis = GenderAxis {
        relation: rel(spec.gender)?,
        male: ent(spec.male)?,
        female: ent(spec.female)?,
    };
    let occupation_rel = rel(spec.occupation)?;

    let lookup = |id: &NodeId| -> Option<(NodeId, NodeId)> {
        let name = graph.entity_name(*id).ok()?;
        table.entity_index(name).map(|t| (*id, t))
    };
    let scope: BTreeSet<NodeId> = match params.scope {
        OccupationScope::Eligible => slice.occupation_universe.clone(),
        OccupationScope::AllHeld => slice.held_occupations(),
    };
    let persons: Vec<(NodeId, NodeId)> = slice.humans.iter().filter_map(lookup).collect();
    let occupations: Vec<(NodeId, NodeId)> = scope.iter().filter_map(lookup).collect();
    let coverage = Coverage {
        humans_total: slice.humans.len(),
        humans_embedded: persons.len(),
        occupations_total: scope.len(),
        occupations_embedded: occupations.len(),
    };
    if persons.is_empty() || occupations.is_empty() {
        return Err(Error::MetricFault(format!(
            "demography `{}`: no embedded humans or occupations ({coverage:?})",
            slice.name()
        )));
    }
    if coverage.human_ratio() < 0.5 || coverage.occupation_ratio() < 0.5 {
        return Err(Error::MetricFault(format!(
            "demography `{}`: embedding coverage below 50% ({coverage:?})",
            slice.name()
        )));
    }

    let kind = table.kind();
    let r_occ = table.relation(occupation_rel)?;
    let occ_vectors: Vec<&[f64]> = occupations
        .iter()
        .map(|&(_, t)| table.entity(t))
        .collect::<Result<_>>()?;

    let per_person: Vec<Vec<f64>> = persons
        .par_iter()
        .map(|&(_, j)| {
            let e = table.entity(j)?;
            let e_new = perturb_person(table, j, axis, params.alpha, direction, params.steps)?;
            Ok(occ_vectors
                .iter()
                .map(|ep| score_vectors(kind, &e_new, r_occ, ep) - score_vectors(kind, e, r_occ, ep))
                .collect())
        })
        .collect::<Result<_>>()?;

    let n = persons.len() as f64;
    let scores = occupations
        .iter()
        .enumerate()
        .map(|(k, &(o, _))| (o, compensated_sum(per_person.iter().map(|row| row[k])) / n))
        .collect::<BTreeMap<_, _>>();
    if scores.values().any(|v| !v.is_finite()) {
        return Err(Error::MetricFault(format!("demography `{}`: non-finite bias score", slice.name())));
    }
    Ok((
        BiasScoreTable {
            demography: slice.name().to_string(),
            direction,
            provenance: Provenance::EmbedBias(kind),
            scores,
        },
        coverage,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{parse_triples, Interner, TripleFormat};
    use crate::slice::{slice_demography, SliceConfig, SliceSpec, SpecialIds};

    fn signed(scores: &[(u32, f64)]) -> BiasScoreTable {
        BiasScoreTable {
            demography: "d".into(),
            direction: Direction::Signed,
            provenance: Provenance::DataBias,
            scores: scores.iter().map(|&(k, v)| (NodeId(k), v)).collect(),
        }
    }

    const M: &str = "Q6581097";
    const F: &str = "Q6581072";

    fn slice_from(rows: &[(&str, &str, &str)]) -> (KnowledgeGraph, DemographySlice) {
        let text: String = rows.iter().map(|(h, r, t)| format!("{h}\t{r}\t{t}\n")).collect();
        let g = parse_triples(text.as_bytes(), &TripleFormat::default()).unwrap().0;
        let cfg = SliceConfig { name: "s".into(), countries: vec!["C".into()], ids: None };
        let spec = SliceSpec::resolve(&cfg, &SpecialIds::default(), &g).unwrap();
        let s = slice_demography(&g, &spec);
        (g, s)
    }

    fn person<'a>(h: &'a str, g: &'a str, occs: &[&'a str]) -> Vec<(&'a str, &'a str, &'a str)> {
        let mut v = vec![(h, "P31", "Q5"), (h, "P27", "C"), (h, "P21", g)];
        v.extend(occs.iter().map(|o| (h, "P106", *o)));
        v
    }

    #[test]
    fn theta_counting_oracle() {
        // M=3 (2 hold o), F=2 (1 holds o)
        let rows: Vec<_> = [
            person("m1", M, &["o"]),
            person("m2", M, &["o"]),
            person("m3", M, &[]),
            person("f1", F, &["o"]),
            person("f2", F, &[]),
        ]
        .concat();
        let (g, s) = slice_from(&rows);
        let t = data_bias_scores(&s).unwrap();
        let o = g.entity_id("o").unwrap();
        assert!((t.scores[&o] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_occupation_is_zero_and_all_male_below_one() {
        let rows: Vec<_> = [
            person("m1", M, &["bal", "allm"]),
            person("m2", M, &["allm"]),
            person("f1", F, &["bal", "allm"]),
            person("f2", F, &[]),
        ]
        .concat();
        let (g, s) = slice_from(&rows);
        let t = data_bias_scores(&s).unwrap();
        assert_eq!(t.scores[&g.entity_id("bal").unwrap()], 0.0);
        let allm = t.scores[&g.entity_id("allm").unwrap()];
        assert_eq!(allm, 1.0 - 0.5);
        assert!(allm < 1.0);
    }

    #[test]
    fn missing_gender_is_undefined() {
        let rows: Vec<_> = [person("m1", M, &["o"]), vec![("x", "P21", F)]].concat();
        let (_, s) = slice_from(&rows);
        match data_bias_scores(&s) {
            Err(Error::UndefinedMetric { slice, .. }) => assert_eq!(slice, "s"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn threshold_jump_at_half() {
        let t = signed(&[(0, -0.5), (1, 0.5)]);
        let grid: Vec<f64> = (0..=6).map(|i| i as f64 / 10.0).collect();
        let c = select_threshold(&t, &grid).unwrap();
        assert_eq!(c.neutral, vec![0, 0, 0, 0, 0, 2, 2]);
        // largest curvature sits just below the jump
        assert_eq!(c.selected, 0.4);
        let cls = classify_occupations(&t, c.selected).unwrap();
        assert_eq!(cls.male.len() + cls.female.len(), 2);
    }

    #[test]
    fn threshold_degenerate_all_zero() {
        let t = signed(&[(0, 0.0), (1, 0.0), (2, 0.0)]);
        let grid = threshold_grid(&t, 10);
        let c = select_threshold(&t, &grid).unwrap();
        assert!(c.degenerate);
        assert!(c.neutral.iter().all(|&n| n == 3));
        assert_eq!(c.selected, grid[1]);
    }

    #[test]
    fn threshold_single_score() {
        let t = signed(&[(0, 0.3)]);
        let grid: Vec<f64> = (0..=6).map(|i| i as f64 / 10.0).collect();
        let c = select_threshold(&t, &grid).unwrap();
        // second-difference oracle over N = [0,0,0,1,1,1,1]
        let oracle = (1..6)
            .max_by_key(|&i| (c.neutral[i + 1] as i64 - 2 * c.neutral[i] as i64 + c.neutral[i - 1] as i64, -(i as i64)))
            .unwrap();
        assert_eq!(c.selected, grid[oracle]);
        assert_eq!(c.selected, 0.2);
    }

    #[test]
    fn bad_grids_rejected() {
        let t = signed(&[(0, 0.3)]);
        assert!(select_threshold(&t, &[0.0, 0.1]).is_err());
        assert!(select_threshold(&t, &[0.1, 0.2, 0.3]).is_err());
        assert!(select_threshold(&t, &[0.0, 0.2, 0.1]).is_err());
    }

    #[test]
    fn classify_examples() {
        let t = signed(&[(0, 0.2), (1, -0.05), (2, -0.1), (3, 0.1), (4, -0.3)]);
        let c = classify_occupations(&t, 0.1).unwrap();
        assert!(c.male.contains(&NodeId(0)));
        assert!(c.neutral.contains(&NodeId(1)));
        // brute-force comparison
        for (&o, &v) in &t.scores {
            let expected = if v > 0.1 { 0 } else if v < -0.1 { 1 } else { 2 };
            let got = [&c.male, &c.female, &c.neutral].iter().position(|s| s.contains(&o)).unwrap();
            assert_eq!(got, expected, "{o:?}");
        }
        assert!(classify_occupations(&t, -0.1).is_err());
    }

    #[test]
    fn ranking_order_and_ties() {
        let r = rank_occupations(&signed(&[(1, 0.5), (0, 0.2)]));
        assert_eq!(r.entries.iter().map(|e| e.0).collect::<Vec<_>>(), vec![NodeId(1), NodeId(0)]);
        let r = rank_occupations(&signed(&[(5, 0.1), (2, 0.1), (9, 0.1)]));
        assert_eq!(r.entries.iter().map(|e| e.0 .0).collect::<Vec<_>>(), vec![2, 5, 9]);
        assert_eq!(r.rank_of(NodeId(9)), Some(3));
        assert_eq!(r.rank_of(NodeId(4)), None);
    }

    #[test]
    fn female_view_negates() {
        let t = signed(&[(0, 0.25), (1, -0.5)]);
        let f = t.toward(Direction::Female);
        assert_eq!(f.scores[&NodeId(0)], -0.25);
        assert_eq!(rank_occupations(&f).entries[0].0, NodeId(1));
        assert_eq!(t.toward(Direction::Male).scores, t.scores);
    }

    /// Hand-built DistMult table: entities
    /// 0 = male pole, 1 = female pole, 2 = h1, 3 = h2, 4 = o1, 5 = o2.
    fn tiny_table(male: [f64; 2], female: [f64; 2]) -> EmbeddingTable {
        let ents = [male, female, [1.0, 2.0], [-1.0, 0.5], [2.0, -1.0], [0.5, 3.0]].concat();
        // relations: 0 = P21 (gender), 1 = P106 (occupation)
        let rels = [[1.0, 2.0], [3.0, -1.0]].concat();
        EmbeddingTable::from_parts(
            ModelKind::DistMult,
            2,
            Interner::from_names([M, F, "h1", "h2", "o1", "o2"]),
            Interner::from_names(["P21", "P106"]),
            ents,
            rels,
        )
        .unwrap()
    }

    #[test]
    fn distmult_perturbation_by_hand() {
        let table = tiny_table([3.0, 1.0], [1.0, 4.0]);
        let axis = GenderAxis { relation: RelId(0), male: NodeId(0), female: NodeId(1) };
        // d m / d e_j = r_g * (e_a - e_b) = (1*2, 2*(-3)) = (2, -6)
        let e = perturb_person(&table, NodeId(2), axis, 0.5, Direction::Male, 1).unwrap();
        assert_eq!(e, vec![1.0 + 1.0, 2.0 - 3.0]);
        let f = perturb_person(&table, NodeId(2), axis, 0.5, Direction::Female, 1).unwrap();
        assert_eq!(f, vec![1.0 - 1.0, 2.0 + 3.0]);
        // displacements negate each other
        assert_eq!(e[0] - 1.0, -(f[0] - 1.0));
        assert_eq!(e[1] - 2.0, -(f[1] - 2.0));
    }

    #[test]
    fn equal_poles_leave_person_unchanged() {
        let table = tiny_table([2.0, 2.0], [2.0, 2.0]);
        let axis = GenderAxis { relation: RelId(0), male: NodeId(0), female: NodeId(1) };
        let e = perturb_person(&table, NodeId(3), axis, 0.7, Direction::Male, 1).unwrap();
        assert_eq!(e, table.entity(NodeId(3)).unwrap());
        assert!(perturb_person(&table, NodeId(3), axis, 0.7, Direction::Signed, 1).is_err());
    }

    fn tiny_slice() -> (KnowledgeGraph, DemographySlice) {
        let rows: Vec<_> = [person("h1", M, &["o1", "o2"]), person("h2", F, &["o1", "o2"])].concat();
        slice_from(&rows)
    }

    #[test]
    fn embedding_bias_by_hand() {
        let (g, s) = tiny_slice();
        let table = tiny_table([3.0, 1.0], [1.0, 4.0]);
        let params = EmbedBiasParams { alpha: 0.5, ..EmbedBiasParams::default() };
        let (b, cov) = embedding_bias_scores(&table, &g, &s, Direction::Male, &params).unwrap();
        assert_eq!(cov.humans_embedded, 2);
        // Linear in the head: every person moves by delta = 0.5*(2,-6) = (1,-3);
        // b_p = delta . (r_occ * e_p), r_occ = (3,-1)
        // o1 = (2,-1): (1)(6) + (-3)(1) = 3 ; o2 = (0.5, 3): (1)(1.5) + (-3)(-3) = 10.5
        assert_eq!(b.scores[&g.entity_id("o1").unwrap()], 3.0);
        assert_eq!(b.scores[&g.entity_id("o2").unwrap()], 10.5);
        let r = rank_occupations(&b);
        assert_eq!(r.entries[0].0, g.entity_id("o2").unwrap());
    }

    #[test]
    fn zero_alpha_or_equal_poles_give_zero_table() {
        let (g, s) = tiny_slice();
        let table = tiny_table([3.0, 1.0], [1.0, 4.0]);
        let zero = EmbedBiasParams { alpha: 0.0, ..EmbedBiasParams::default() };
        let (b, _) = embedding_bias_scores(&table, &g, &s, Direction::Male, &zero).unwrap();
        assert!(b.scores.values().all(|&v| v == 0.0));
        let same = tiny_table([1.5, -2.0], [1.5, -2.0]);
        let (b, _) = embedding_bias_scores(&same, &g, &s, Direction::Female, &EmbedBiasParams::default()).unwrap();
        assert!(b.scores.values().all(|&v| v == 0.0));
    }

    #[test]
    fn low_coverage_is_a_fault() {
        let rows: Vec<_> = [
            person("h1", M, &["o1"]),
            person("h2", F, &["o1"]),
            person("x1", M, &["o1"]),
            person("x2", F, &["o1"]),
            person("x3", F, &["o1"]),
        ]
        .concat();
        let (g, s) = slice_from(&rows);
        let table = tiny_table([3.0, 1.0], [1.0, 4.0]);
        assert!(matches!(
            embedding_bias_scores(&table, &g, &s, Direction::Male, &EmbedBiasParams::default()),
            Err(Error::MetricFault(_))
        ));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}

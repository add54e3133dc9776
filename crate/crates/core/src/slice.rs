//! Demography-specific subgraphs and the merged giant graph.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{GraphBuilder, KnowledgeGraph, NodeId, RelId};

/// External identifiers of the relations and classes used for slicing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecialIds {
    pub instance_of: String,
    pub human: String,
    pub citizenship: String,
    pub gender: String,
    pub occupation: String,
    pub male: String,
    pub female: String,
}

impl Default for SpecialIds {
    fn default() -> Self {
        Self {
            instance_of: "P31".into(),
            human: "Q5".into(),
            citizenship: "P27".into(),
            gender: "P21".into(),
            occupation: "P106".into(),
            male: "Q6581097".into(),
            female: "Q6581072".into(),
        }
    }
}

/// Unresolved slice description as it appears in the audit config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub name: String,
    pub countries: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<SpecialIds>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSpec {
    pub name: String,
    pub countries: BTreeSet<NodeId>,
    pub instance_of: RelId,
    pub human: NodeId,
    pub citizenship: RelId,
    pub gender: RelId,
    pub occupation: RelId,
    pub male: NodeId,
    pub female: NodeId,
}

impl SliceSpec {
    /// Resolve external ids against `graph`. Countries absent from the graph
    /// are dropped with a warning; at least one must remain.
    pub fn resolve(config: &SliceConfig, defaults: &SpecialIds, graph: &KnowledgeGraph) -> Result<Self> {
        let ids = config.ids.as_ref().unwrap_or(defaults);
        let entity = |name: &str| {
            graph.entity_id(name).ok_or_else(|| {
                Error::Lookup(format!("slice `{}`: entity `{name}` not in graph", config.name))
            })
        };
        let relation = |name: &str| {
            graph.relation_id(name).ok_or_else(|| {
                Error::Lookup(format!("slice `{}`: relation `{name}` not in graph", config.name))
            })
        };
        let mut countries = BTreeSet::new();
        for c in &config.countries {
            match graph.entity_id(c) {
                Some(id) => {
                    countries.insert(id);
                }
                None => warn!("slice `{}`: country `{c}` not in graph", config.name),
            }
        }
        let spec = SliceSpec {
            name: config.name.clone(),
            countries,
            instance_of: relation(&ids.instance_of)?,
            human: entity(&ids.human)?,
            citizenship: relation(&ids.citizenship)?,
            gender: relation(&ids.gender)?,
            occupation: relation(&ids.occupation)?,
            male: entity(&ids.male)?,
            female: entity(&ids.female)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.countries.is_empty() {
            return Err(Error::Config(format!("slice `{}` has no resolvable countries", self.name)));
        }
        if self.gender == self.occupation {
            return Err(Error::Config(format!(
                "slice `{}`: gender and occupation relations coincide",
                self.name
            )));
        }
        if self.male == self.female {
            return Err(Error::Config(format!("slice `{}`: male and female ids coincide", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Other,
}

#[derive(Debug, Clone)]
pub struct DemographySlice {
    pub spec: SliceSpec,
    pub humans: BTreeSet<NodeId>,
    pub gender: BTreeMap<NodeId, Gender>,
    pub occupations: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub occupation_universe: BTreeSet<NodeId>,
    /// Humans carrying both a male and a female gender edge.
    pub conflicting_gender: usize,
}

/// Per-occupation gender counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OccupationCounts {
    pub male: usize,
    pub female: usize,
}

impl DemographySlice {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn male_count(&self) -> usize {
        self.gender.values().filter(|g| **g == Gender::Male).count()
    }

    pub fn female_count(&self) -> usize {
        self.gender.values().filter(|g| **g == Gender::Female).count()
    }

    /// `(M_o, F_o)` for every occupation held by at least one slice human.
    pub fn occupation_counts(&self) -> BTreeMap<NodeId, OccupationCounts> {
        let mut counts: BTreeMap<NodeId, OccupationCounts> = BTreeMap::new();
        for (human, occs) in &self.occupations {
            let g = self.gender.get(human).copied().unwrap_or(Gender::Other);
            for &o in occs {
                let c = counts.entry(o).or_default();
                match g {
                    Gender::Male => c.male += 1,
                    Gender::Female => c.female += 1,
                    Gender::Other => {}
                }
            }
        }
        counts
    }

    /// Every occupation held by some slice human, eligible or not.
    pub fn held_occupations(&self) -> BTreeSet<NodeId> {
        self.occupations.values().flatten().copied().collect()
    }
}

pub fn find_humans(graph: &KnowledgeGraph, spec: &SliceSpec) -> BTreeSet<NodeId> {
    graph
        .triples()
        .iter()
        .filter(|t| t.rel == spec.instance_of && t.tail == spec.human)
        .map(|t| t.head)
        .collect()
}

pub fn slice_demography(graph: &KnowledgeGraph, spec: &SliceSpec) -> DemographySlice {
    let humans: BTreeSet<NodeId> = find_humans(graph, spec)
        .into_iter()
        .filter(|&h| {
            graph
                .out_edges(h)
                .iter()
                .any(|&(r, t)| r == spec.citizenship && spec.countries.contains(&t))
        })
        .collect();

    let mut gender = BTreeMap::new();
    let mut occupations = BTreeMap::new();
    let mut conflicting_gender = 0;
    for &h in &humans {
        let (mut is_male, mut is_female) = (false, false);
        let mut occs = BTreeSet::new();
        for &(r, t) in graph.out_edges(h) {
            if r == spec.gender {
                is_male |= t == spec.male;
                is_female |= t == spec.female;
            } else if r == spec.occupation {
                occs.insert(t);
            }
        }
        let g = match (is_male, is_female) {
            (true, false) => Gender::Male,
            (false, true) => Gender::Female,
            (true, true) => {
                conflicting_gender += 1;
                warn!(
                    "slice `{}`: entity {} has both gender values; excluded from counts",
                    spec.name,
                    graph.entity_name(h).unwrap_or("?")
                );
                Gender::Other
            }
            (false, false) => Gender::Other,
        };
        gender.insert(h, g);
        if !occs.is_empty() {
            occupations.insert(h, occs);
        }
    }

    let mut slice = DemographySlice {
        spec: spec.clone(),
        humans,
        gender,
        occupations,
        occupation_universe: BTreeSet::new(),
        conflicting_gender,
    };
    slice.occupation_universe = eligible_occupations(&slice);
    slice
}

/// Occupations held by at least one male and one female slice human.
pub fn eligible_occupations(slice: &DemographySlice) -> BTreeSet<NodeId> {
    slice
        .occupation_counts()
        .into_iter()
        .filter(|(_, c)| c.male >= 1 && c.female >= 1)
        .map(|(o, _)| o)
        .collect()
}

/// Giant graph: every source triple whose endpoints both lie in the union of
/// slice entities (humans plus the tails of their outgoing edges). Labels
/// are carried over. Source order is preserved, so slice order is irrelevant.
pub fn merge_slices(graph: &KnowledgeGraph, slices: &[DemographySlice]) -> Result<KnowledgeGraph> {
    if slices.is_empty() {
        return Err(Error::Config("merge_slices needs at least one slice".into()));
    }
    let mut members = vec![false; graph.num_entities()];
    for slice in slices {
        for &h in &slice.humans {
            members[h.index()] = true;
            for &(_, t) in graph.out_edges(h) {
                members[t.index()] = true;
            }
        }
    }
    let mut builder = GraphBuilder::new();
    for t in graph.triples() {
        if members[t.head.index()] && members[t.tail.index()] {
            builder.add(
                graph.entity_name(t.head)?,
                graph.relation_name(t.rel)?,
                graph.entity_name(t.tail)?,
            );
        }
    }
    let mut giant = builder.finish();
    giant.set_labels(graph.labels().clone());
    Ok(giant)
}

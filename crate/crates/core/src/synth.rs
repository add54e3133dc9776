//! Deterministic synthetic corpora with planted gender skews.
//!
//! Every human gets `instance_of human`, one citizenship, one gender and
//! zero or more occupation edges, using the default Wikidata identifiers so
//! the corpora slice with [`SpecialIds::default`](crate::slice::SpecialIds).

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{AuditConfig, CorpusConfig, TrainSettings};
use crate::kg::TripleFormat;
use crate::model::{ModelKind, Norm};
use crate::slice::{SliceConfig, SpecialIds};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationPlan {
    pub id: String,
    pub label: String,
    pub male: usize,
    pub female: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemographyPlan {
    pub name: String,
    pub country: String,
    pub occupations: Vec<OccupationPlan>,
    /// Extra humans of each gender holding no occupation.
    pub idle_male: usize,
    pub idle_female: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub triples: Vec<(String, String, String)>,
    pub labels: Vec<(String, String)>,
}

impl Corpus {
    pub fn triples_tsv(&self) -> String {
        let mut s = String::new();
        for (h, r, t) in &self.triples {
            let _ = writeln!(s, "{h}\t{r}\t{t}");
        }
        s
    }

    pub fn labels_tsv(&self) -> String {
        let mut s = String::new();
        for (id, label) in &self.labels {
            let _ = writeln!(s, "{id}\t{label}");
        }
        s
    }
}

/// Build a corpus from explicit per-occupation gender counts. Human ids are
/// allocated from `first_human` upward; `seed` only permutes triple order.
pub fn generate(plans: &[DemographyPlan], first_human: u64, seed: u64) -> Corpus {
    let ids = SpecialIds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    let mut labels = vec![
        (ids.human.clone(), "human".to_string()),
        (ids.male.clone(), "male".to_string()),
        (ids.female.clone(), "female".to_string()),
        (ids.instance_of.clone(), "instance of".to_string()),
        (ids.citizenship.clone(), "country of citizenship".to_string()),
        (ids.gender.clone(), "sex or gender".to_string()),
        (ids.occupation.clone(), "occupation".to_string()),
    ];
    let mut next = first_human;
    let mut seen_occupations = std::collections::BTreeSet::new();
    for plan in plans {
        labels.push((plan.country.clone(), plan.name.clone()));
        let mut people: Vec<(bool, Option<&OccupationPlan>)> = Vec::new();
        for occ in &plan.occupations {
            if seen_occupations.insert(occ.id.clone()) {
                labels.push((occ.id.clone(), occ.label.clone()));
            }
            people.extend(std::iter::repeat_n((true, Some(occ)), occ.male));
            people.extend(std::iter::repeat_n((false, Some(occ)), occ.female));
        }
        people.extend(std::iter::repeat_n((true, None), plan.idle_male));
        people.extend(std::iter::repeat_n((false, None), plan.idle_female));
        for (male, occ) in people {
            let h = format!("Q{next}");
            next += 1;
            let g = if male { &ids.male } else { &ids.female };
            triples.push((h.clone(), ids.instance_of.clone(), ids.human.clone()));
            triples.push((h.clone(), ids.citizenship.clone(), plan.country.clone()));
            triples.push((h.clone(), ids.gender.clone(), g.clone()));
            if let Some(o) = occ {
                triples.push((h.clone(), ids.occupation.clone(), o.id.clone()));
            }
        }
    }
    triples.shuffle(&mut rng);
    Corpus { triples, labels }
}

fn occupation(n: usize, label: &str, male: usize, female: usize) -> OccupationPlan {
    OccupationPlan {
        id: format!("Q{}", 2000 + n),
        label: label.to_string(),
        male,
        female,
    }
}

/// One demography of 200 humans: one exclusively male occupation, one
/// exclusively female occupation and four balanced ones.
pub fn planted_plan() -> Vec<DemographyPlan> {
    vec![DemographyPlan {
        name: "planted".into(),
        country: "Q1000".into(),
        occupations: vec![
            occupation(1, "male-only occupation", 30, 0),
            occupation(2, "female-only occupation", 0, 30),
            occupation(3, "mixed occupation a", 18, 17),
            occupation(4, "mixed occupation b", 17, 18),
            occupation(5, "mixed occupation c", 18, 18),
            occupation(6, "mixed occupation d", 17, 17),
        ],
        idle_male: 0,
        idle_female: 0,
    }]
}

pub fn planted_corpus(seed: u64) -> Corpus {
    generate(&planted_plan(), 100_000, seed)
}

/// Three demographies over a partly shared vocabulary: each of 30 common
/// occupations appears in a demography with probability 0.8, and every
/// demography adds 4 local ones. Each common occupation has a global gender
/// lean that demographies perturb, so their rankings agree partially.
pub fn bundled_plan() -> Vec<DemographyPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b67_6269_6173);
    let lean: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let names = [("north", "Q1001"), ("south", "Q1002"), ("west", "Q1003")];
    names
        .iter()
        .enumerate()
        .map(|(d, &(name, country))| {
            let mut occupations = Vec::new();
            for (j, &l) in lean.iter().enumerate() {
                let present = rng.gen_bool(0.8);
                let skew: f64 = (l + rng.gen_range(-0.6..0.6)).clamp(-1.0, 1.0);
                let size = rng.gen_range(4..14) as f64;
                if present {
                    occupations.push(skewed(j + 1, format!("occupation {:02}", j + 1), skew, size));
                }
            }
            for i in 0..4 {
                let skew = rng.gen_range(-1.0..1.0);
                let size = rng.gen_range(4..14) as f64;
                occupations.push(skewed(100 + 10 * d + i, format!("{name} occupation {}", i + 1), skew, size));
            }
            DemographyPlan {
                name: name.into(),
                country: country.into(),
                occupations,
                idle_male: rng.gen_range(5..15),
                idle_female: rng.gen_range(5..15),
            }
        })
        .collect()
}

/// Gender counts for `size` holders leaning `skew` in [-1, 1] toward male,
/// at least one of each.
fn skewed(n: usize, label: String, skew: f64, size: f64) -> OccupationPlan {
    let male = (size * (1.0 + skew) / 2.0).round() as usize;
    let female = (size * (1.0 - skew) / 2.0).round() as usize;
    occupation(n, &label, male.max(1), female.max(1))
}

pub fn bundled_corpus() -> Corpus {
    generate(&bundled_plan(), 100_000, 7)
}

pub fn slice_configs(plans: &[DemographyPlan]) -> Vec<SliceConfig> {
    plans
        .iter()
        .map(|p| SliceConfig {
            name: p.name.clone(),
            countries: vec![p.country.clone()],
            ids: None,
        })
        .collect()
}

/// Desk-scale audit settings for a generated corpus stored next to the
/// config as `triples.tsv` and `labels.tsv`. Cutoffs are scaled to a
/// vocabulary of tens of occupations.
pub fn desk_config(plans: &[DemographyPlan]) -> AuditConfig {
    AuditConfig {
        corpus: CorpusConfig {
            triples: "triples.tsv".into(),
            labels: Some("labels.tsv".into()),
            format: TripleFormat {
                wikidata_ids: true,
                ..TripleFormat::default()
            },
        },
        slices: slice_configs(plans),
        models: vec![ModelKind::TransE(Norm::L1), ModelKind::ComplEx],
        train: TrainSettings {
            dim: 16,
            epochs: 60,
            batch_size: 128,
            ..TrainSettings::default()
        },
        k: vec![5, 10, 15],
        rank_deviation_k: 5,
        similarity_k: 5,
        entropy_k: 10,
        top_similar: 2,
        seed: 42,
        ..AuditConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::data_bias_scores;
    use crate::kg::{parse_triples, TripleFormat};
    use crate::slice::{slice_demography, SliceSpec};

    #[test]
    fn planted_counts_survive_slicing() {
        let c = planted_corpus(3);
        let format = TripleFormat {
            wikidata_ids: true,
            ..TripleFormat::default()
        };
        let (g, rep) = parse_triples(c.triples_tsv().as_bytes(), &format).unwrap();
        assert_eq!(rep.triples_kept, 200 * 4);
        let cfg = &slice_configs(&planted_plan())[0];
        let spec = SliceSpec::resolve(cfg, &SpecialIds::default(), &g).unwrap();
        let s = slice_demography(&g, &spec);
        assert_eq!((s.male_count(), s.female_count()), (100, 100));
        assert_eq!(s.held_occupations().len(), 6);
        assert_eq!(s.occupation_universe.len(), 4);
        let theta = data_bias_scores(&s).unwrap();
        let mixed_a = g.entity_id("Q2003").unwrap();
        assert!((theta.scores[&mixed_a] - (0.18 - 0.17)).abs() < 1e-15);
    }

    #[test]
    fn seed_only_permutes() {
        let (a, b) = (planted_corpus(1), planted_corpus(2));
        assert_ne!(a.triples, b.triples);
        let mut sa = a.triples.clone();
        let mut sb = b.triples.clone();
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb);
        assert_eq!(bundled_corpus(), bundled_corpus());
    }

    #[test]
    fn bundled_has_three_overlapping_demographies() {
        let plans = bundled_plan();
        assert_eq!(plans.len(), 3);
        let vocab: std::collections::BTreeSet<&str> =
            plans.iter().flat_map(|p| p.occupations.iter().map(|o| o.id.as_str())).collect();
        assert!(plans.iter().all(|p| p.occupations.len() < vocab.len()));
        assert!(plans.iter().all(|p| p.occupations.iter().all(|o| o.male >= 1 && o.female >= 1)));
    }
}

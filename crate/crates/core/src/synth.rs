//! Synthetic recruitment worlds with planted match structure.
//!
//! Candidates and vacancies carry latent unit vectors `u` and `v`. The
//! candidate's view of a pair is `u·v`, the company's view is `u·(R v)` where
//! `R` rotates coordinate pairs by `δ·π/2`. Observable data is drawn from the
//! latents: skills, languages and licenses express the company view (a
//! vacancy requires what `R v` points at), job types express the candidate
//! view (a candidate seeks what `u` points at, a vacancy offers what `v`
//! points at). Texts mention skills and places only, so a text model sees
//! one side of the match while the graph sees both.
//!
//! Labels are global quantiles of the fused affinity over pairs chosen by an
//! application process that favors high affinity; negatives are unlabeled
//! pairs whose affinity lies below every positive label.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kg::{Column, ColumnRole, EntityKind, InferenceRule, Table};
use crate::metrics::EvalContext;
use crate::model::fuse_harmonic;
use crate::rng;
use crate::sampler::LabelScheme;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(&'static str),
    #[error("shared-skill count correlates with affinity at r = {0:.3}, below 0.5")]
    WeakSkillSignal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_candidates: usize,
    pub n_vacancies: usize,
    pub n_skills: usize,
    pub n_locations: usize,
    pub n_languages: usize,
    pub n_licenses: usize,
    pub n_education_levels: usize,
    pub n_job_types: usize,
    pub rural_vacancy_fraction: f64,
    pub rural_candidate_fraction: f64,
    pub rural_location_fraction: f64,
    pub latent_dim: usize,
    pub label_scheme: LabelScheme,
    /// δ ∈ [0, 1]; 0 makes both stakeholders agree.
    pub stakeholder_divergence: f64,
    pub skills_per_candidate: usize,
    pub skills_per_vacancy: usize,
    pub languages_per_candidate: usize,
    pub licenses_per_candidate: usize,
    pub job_types_per_candidate: usize,
    pub job_types_per_vacancy: usize,
    /// Sharpness of attribute choice around the latent direction.
    pub attribute_focus: f64,
    /// Labeled (applied-to) vacancies per candidate.
    pub labeled_per_candidate: usize,
    /// Sharpness of the application process around high affinity.
    pub application_focus: f64,
    pub negatives_per_candidate: usize,
    /// Added to the planted score of every urban vacancy.
    pub fairness_bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_candidates: 120,
            n_vacancies: 200,
            n_skills: 60,
            n_locations: 12,
            n_languages: 8,
            n_licenses: 6,
            n_education_levels: 5,
            n_job_types: 16,
            rural_vacancy_fraction: 0.6582,
            rural_candidate_fraction: 0.6,
            rural_location_fraction: 0.5,
            latent_dim: 6,
            label_scheme: LabelScheme::Proprietary,
            stakeholder_divergence: 0.6,
            skills_per_candidate: 6,
            skills_per_vacancy: 5,
            languages_per_candidate: 2,
            licenses_per_candidate: 1,
            job_types_per_candidate: 3,
            job_types_per_vacancy: 2,
            attribute_focus: 6.0,
            labeled_per_candidate: 12,
            application_focus: 4.0,
            negatives_per_candidate: 4,
            fairness_bias: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let counts = [
            self.n_candidates,
            self.n_vacancies,
            self.n_skills,
            self.n_locations,
            self.n_education_levels,
            self.n_job_types,
        ];
        if counts.contains(&0) {
            return Err(SynthError::InvalidConfig("entity counts must be at least 1"));
        }
        for f in [
            self.rural_vacancy_fraction,
            self.rural_candidate_fraction,
            self.rural_location_fraction,
            self.stakeholder_divergence,
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(SynthError::InvalidConfig("fractions and divergence must lie in [0, 1]"));
            }
        }
        if self.latent_dim < 2 {
            return Err(SynthError::InvalidConfig("latent_dim must be at least 2"));
        }
        if self.skills_per_candidate > self.n_skills
            || self.skills_per_vacancy > self.n_skills
            || self.languages_per_candidate > self.n_languages
            || self.licenses_per_candidate > self.n_licenses
            || self.job_types_per_candidate > self.n_job_types
            || self.job_types_per_vacancy > self.n_job_types
        {
            return Err(SynthError::InvalidConfig("per-entity attribute counts exceed the vocabulary"));
        }
        if self.labeled_per_candidate == 0 || self.labeled_per_candidate > self.n_vacancies {
            return Err(SynthError::InvalidConfig("labeled_per_candidate must lie in 1..=n_vacancies"));
        }
        let regions_possible = self.n_locations >= 2
            || self.rural_location_fraction == 0.0
            || self.rural_location_fraction == 1.0;
        if !regions_possible {
            return Err(SynthError::InvalidConfig("need at least two locations for two regions"));
        }
        Ok(())
    }

    /// Entities produced by [`world_to_tables`] + `build_graph`: every
    /// declared vocabulary item, both regions, and one text per candidate and
    /// per vacancy.
    pub fn expected_entity_count(&self) -> usize {
        2 * (self.n_candidates + self.n_vacancies)
            + self.n_skills
            + self.n_locations
            + 2
            + self.n_languages
            + self.n_licenses
            + self.n_education_levels
            + self.n_job_types
    }
}

pub const RURAL: &str = "rural";
pub const URBAN: &str = "urban";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub key: String,
    pub location: String,
    pub region: String,
    pub education: String,
    pub skills: Vec<String>,
    pub languages: Vec<String>,
    pub licenses: Vec<String>,
    pub job_types: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub candidate: String,
    pub vacancy: String,
    pub label: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub candidates: Vec<Person>,
    pub vacancies: Vec<Person>,
    /// (location key, region)
    pub locations: Vec<(String, String)>,
    pub skills: Vec<String>,
    pub languages: Vec<String>,
    pub licenses: Vec<String>,
    pub education_levels: Vec<String>,
    pub job_types: Vec<String>,
    pub candidate_latent: Vec<Vec<f64>>,
    pub vacancy_latent: Vec<Vec<f64>>,
    /// Labeled pairs first (candidate order), then negatives.
    pub labels: Vec<LabeledPair>,
    /// Number of leading `labels` entries that are not negatives.
    pub labeled_count: usize,
}

fn unit_vector(dim: usize, r: &mut rng::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rotate coordinate pairs (0,1), (2,3), … by `δ·π/2`.
pub fn rotate(v: &[f64], divergence: f64) -> Vec<f64> {
    let theta = divergence * core::f64::consts::FRAC_PI_2;
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let mut out = v.to_vec();
    for i in (0..v.len() / 2).map(|i| 2 * i) {
        out[i] = c * v[i] - s * v[i + 1];
        out[i + 1] = s * v[i] + c * v[i + 1];
    }
    out
}

/// `k` distinct indices drawn without replacement with probability
/// proportional to `exp(logit)` (Gumbel top-k), returned ascending.
fn gumbel_top_k(logits: &[f64], k: usize, r: &mut rng::Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let u: f64 = r.random_range(f64::MIN_POSITIVE..1.0);
            (l - libm::log(-libm::log(u)), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = keyed.into_iter().take(k).map(|(_, i)| i).collect();
    out.sort_unstable();
    out
}

fn pick(names: &[String], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| names[i].clone()).collect()
}

/// Exactly `round(fraction·n)` of `n` slots flagged, at shuffled positions.
fn flags(n: usize, fraction: f64, r: &mut rng::Rng) -> Vec<bool> {
    let k = libm::round(fraction * n as f64) as usize;
    let mut out: Vec<bool> = (0..n).map(|i| i < k).collect();
    out.shuffle(r);
    out
}

const FILLER: [&str; 16] = [
    "experienced", "motivated", "reliable", "team", "flexible", "hours", "growth", "friendly", "work", "role",
    "daily", "tasks", "customer", "quality", "support", "shift",
];

fn filler(r: &mut rng::Rng, n: usize) -> Vec<&'static str> {
    (0..n).map(|_| FILLER[r.random_range(0..FILLER.len())]).collect()
}

/// Label masses from the lowest label up, for labeled (non-negative) pairs.
fn label_masses(scheme: LabelScheme) -> &'static [f64] {
    match scheme {
        LabelScheme::Proprietary => &[0.5, 0.2, 0.12, 0.09, 0.06, 0.03],
        LabelScheme::Zhaopin => &[0.55, 0.25, 0.13, 0.07],
    }
}

impl SynthWorld {
    pub fn candidate_affinity(&self, c: usize, v: usize) -> f64 {
        dot(&self.candidate_latent[c], &self.vacancy_latent[v])
    }

    pub fn company_affinity(&self, c: usize, v: usize) -> f64 {
        dot(
            &self.candidate_latent[c],
            &rotate(&self.vacancy_latent[v], self.config.stakeholder_divergence),
        )
    }

    /// Harmonic fusion of the two affinities, in `[−1, 1]`.
    pub fn combined_affinity(&self, c: usize, v: usize) -> f64 {
        fuse_harmonic(
            100.0 * self.candidate_affinity(c, v),
            100.0 * self.company_affinity(c, v),
            100.0,
            1.0,
        ) / 100.0
    }

    /// Combined affinity plus the urban boost; labels are monotone in it.
    pub fn planted_score(&self, c: usize, v: usize) -> f64 {
        let boost = if self.vacancies[v].region == URBAN {
            self.config.fairness_bias
        } else {
            0.0
        };
        self.combined_affinity(c, v) + boost
    }

    pub fn candidate_index(&self) -> BTreeMap<&str, usize> {
        self.candidates.iter().enumerate().map(|(i, p)| (p.key.as_str(), i)).collect()
    }

    pub fn vacancy_index(&self) -> BTreeMap<&str, usize> {
        self.vacancies.iter().enumerate().map(|(i, p)| (p.key.as_str(), i)).collect()
    }

    /// Region groups of the whole catalog, rural protected.
    pub fn eval_context(&self) -> EvalContext {
        EvalContext {
            candidate_groups: self.candidates.iter().map(|p| (p.key.clone(), p.region.clone())).collect(),
            vacancy_groups: self.vacancies.iter().map(|p| (p.key.clone(), p.region.clone())).collect(),
            protected: RURAL.to_string(),
        }
    }

    /// Pearson correlation between shared-skill count and company affinity
    /// over all candidate–vacancy pairs.
    pub fn skill_affinity_correlation(&self) -> f64 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (ci, c) in self.candidates.iter().enumerate() {
            let have: BTreeSet<&String> = c.skills.iter().collect();
            for (vi, v) in self.vacancies.iter().enumerate() {
                xs.push(v.skills.iter().filter(|s| have.contains(s)).count() as f64);
                ys.push(self.company_affinity(ci, vi));
            }
        }
        pearson(&xs, &ys)
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / libm::sqrt(sxx * syy)
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:03}")).collect()
}

/// Generate a world. A pure function of `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthWorld, SynthError> {
    config.validate()?;
    let seed = config.seed;
    let d = config.latent_dim;
    let mut r = rng::rng_for(seed, &["latent"]);
    let candidate_latent: Vec<Vec<f64>> = (0..config.n_candidates).map(|_| unit_vector(d, &mut r)).collect();
    let vacancy_latent: Vec<Vec<f64>> = (0..config.n_vacancies).map(|_| unit_vector(d, &mut r)).collect();
    let mut directions = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| unit_vector(d, &mut r)).collect() };
    let skill_dir = directions(config.n_skills);
    let language_dir = directions(config.n_languages);
    let license_dir = directions(config.n_licenses);
    let education_dir = directions(config.n_education_levels);
    let job_dir = directions(config.n_job_types);

    let skills = names("skill", config.n_skills);
    let languages = names("lang", config.n_languages);
    let licenses = names("lic", config.n_licenses);
    let education_levels = names("edu", config.n_education_levels);
    let job_types = names("job", config.n_job_types);
    let location_keys = names("loc", config.n_locations);

    let mut r = rng::rng_for(seed, &["regions"]);
    let location_rural = flags(config.n_locations, config.rural_location_fraction, &mut r);
    let locations: Vec<(String, String)> = location_keys
        .iter()
        .zip(&location_rural)
        .map(|(k, &rural)| (k.clone(), if rural { RURAL } else { URBAN }.to_string()))
        .collect();
    let rural_locs: Vec<usize> = (0..config.n_locations).filter(|&i| location_rural[i]).collect();
    let urban_locs: Vec<usize> = (0..config.n_locations).filter(|&i| !location_rural[i]).collect();
    let candidate_rural = flags(config.n_candidates, config.rural_candidate_fraction, &mut r);
    let vacancy_rural = flags(config.n_vacancies, config.rural_vacancy_fraction, &mut r);
    let place = |rural: bool, r: &mut rng::Rng| {
        let pool = if rural { &rural_locs } else { &urban_locs };
        let pool = if pool.is_empty() { if rural { &urban_locs } else { &rural_locs } } else { pool };
        let loc = pool[r.random_range(0..pool.len())];
        (location_keys[loc].clone(), if rural { RURAL } else { URBAN }.to_string())
    };

    let focus = config.attribute_focus;
    let logits = |dirs: &[Vec<f64>], x: &[f64]| -> Vec<f64> { dirs.iter().map(|w| focus * dot(w, x)).collect() };
    let argmax = |dirs: &[Vec<f64>], x: &[f64]| -> usize {
        let l = logits(dirs, x);
        (0..l.len()).fold(0, |best, i| if l[i] > l[best] { i } else { best })
    };

    let mut candidates = Vec::with_capacity(config.n_candidates);
    for (i, u) in candidate_latent.iter().enumerate() {
        let mut r = rng::rng_for(seed, &["candidate", &i.to_string()]);
        let (location, region) = place(candidate_rural[i], &mut r);
        let sk = pick(&skills, &gumbel_top_k(&logits(&skill_dir, u), config.skills_per_candidate, &mut r));
        let la = pick(&languages, &gumbel_top_k(&logits(&language_dir, u), config.languages_per_candidate, &mut r));
        let li = pick(&licenses, &gumbel_top_k(&logits(&license_dir, u), config.licenses_per_candidate, &mut r));
        let jt = pick(&job_types, &gumbel_top_k(&logits(&job_dir, u), config.job_types_per_candidate, &mut r));
        let education = education_levels[argmax(&education_dir, u)].clone();
        let mut words = filler(&mut r, 4);
        words.extend(sk.iter().map(String::as_str));
        words.extend(filler(&mut r, 3));
        words.push("living");
        words.push("in");
        words.push(location.as_str());
        let text = words.join(" ");
        candidates.push(Person {
            key: format!("c{i:04}"),
            location,
            region,
            education,
            skills: sk,
            languages: la,
            licenses: li,
            job_types: jt,
            text,
        });
    }

    let mut vacancies = Vec::with_capacity(config.n_vacancies);
    for (i, v) in vacancy_latent.iter().enumerate() {
        let mut r = rng::rng_for(seed, &["vacancy", &i.to_string()]);
        let demand = rotate(v, config.stakeholder_divergence);
        let (location, region) = place(vacancy_rural[i], &mut r);
        let sk = pick(&skills, &gumbel_top_k(&logits(&skill_dir, &demand), config.skills_per_vacancy, &mut r));
        let la = pick(&languages, &gumbel_top_k(&logits(&language_dir, &demand), 1.min(config.n_languages), &mut r));
        let li = pick(&licenses, &gumbel_top_k(&logits(&license_dir, &demand), 1.min(config.n_licenses), &mut r));
        let jt = pick(&job_types, &gumbel_top_k(&logits(&job_dir, v), config.job_types_per_vacancy, &mut r));
        let education = education_levels[argmax(&education_dir, &demand)].clone();
        let mut words = vec!["we", "seek"];
        words.extend(filler(&mut r, 3));
        words.extend(sk.iter().map(String::as_str));
        words.extend(filler(&mut r, 3));
        words.push("located");
        words.push("in");
        words.push(location.as_str());
        let text = words.join(" ");
        vacancies.push(Person {
            key: format!("v{i:04}"),
            location,
            region,
            education,
            skills: sk,
            languages: la,
            licenses: li,
            job_types: jt,
            text,
        });
    }

    let mut world = SynthWorld {
        config: config.clone(),
        candidates,
        vacancies,
        locations,
        skills,
        languages,
        licenses,
        education_levels,
        job_types,
        candidate_latent,
        vacancy_latent,
        labels: Vec::new(),
        labeled_count: 0,
    };
    if config.skills_per_candidate > 0 && config.skills_per_vacancy > 0 && config.n_candidates * config.n_vacancies > 1 {
        let rho = world.skill_affinity_correlation();
        if rho < 0.5 {
            return Err(SynthError::WeakSkillSignal(rho));
        }
    }
    assign_labels(&mut world);
    Ok(world)
}

fn assign_labels(world: &mut SynthWorld) {
    let config = world.config.clone();
    let mut applied: Vec<(usize, usize, f64)> = Vec::new();
    for c in 0..world.candidates.len() {
        let mut r = rng::rng_for(config.seed, &["apply", &world.candidates[c].key]);
        let logits: Vec<f64> = (0..world.vacancies.len())
            .map(|v| config.application_focus * world.planted_score(c, v))
            .collect();
        for v in gumbel_top_k(&logits, config.labeled_per_candidate, &mut r) {
            applied.push((c, v, world.planted_score(c, v)));
        }
    }
    let mut order: Vec<usize> = (0..applied.len()).collect();
    order.sort_by(|&a, &b| applied[a].2.total_cmp(&applied[b].2).then(a.cmp(&b)));
    let masses = label_masses(config.label_scheme);
    let n = applied.len() as f64;
    let mut labels = vec![0i8; applied.len()];
    for (rank, &i) in order.iter().enumerate() {
        let mut cum = 0.0;
        let mut label = masses.len() - 1;
        for (l, m) in masses.iter().enumerate() {
            cum += m;
            if (rank as f64) < libm::round(cum * n) {
                label = l;
                break;
            }
        }
        labels[i] = label as i8;
    }
    // lowest planted score among positively labeled pairs
    let threshold = applied
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l > 0)
        .map(|(a, _)| a.2)
        .fold(f64::INFINITY, f64::min);

    let mut out: Vec<LabeledPair> = applied
        .iter()
        .zip(&labels)
        .map(|(&(c, v, _), &label)| LabeledPair {
            candidate: world.candidates[c].key.clone(),
            vacancy: world.vacancies[v].key.clone(),
            label,
        })
        .collect();
    world.labeled_count = out.len();
    let taken: BTreeSet<(usize, usize)> = applied.iter().map(|&(c, v, _)| (c, v)).collect();
    let negative = config.label_scheme.negative_label();
    for c in 0..world.candidates.len() {
        let mut r = rng::rng_for(config.seed, &["negatives", &world.candidates[c].key]);
        let mut eligible: Vec<usize> = (0..world.vacancies.len())
            .filter(|&v| !taken.contains(&(c, v)) && world.planted_score(c, v) < threshold)
            .collect();
        let k = config.negatives_per_candidate.min(eligible.len());
        let (chosen, _) = eligible.partial_shuffle(&mut r, k);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for v in chosen {
            out.push(LabeledPair {
                candidate: world.candidates[c].key.clone(),
                vacancy: world.vacancies[v].key.clone(),
                label: negative,
            });
        }
    }
    world.labels = out;
}

/// Tables, relation renames and inference rules for `build_graph`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldTables {
    pub tables: Vec<Table>,
    pub relation_names: BTreeMap<String, String>,
    /// Only rules whose relations occur in the tables.
    pub rules: Vec<InferenceRule>,
}

fn key_table(name: &str, kind: EntityKind, keys: &[String]) -> Table {
    Table {
        name: name.to_string(),
        columns: vec![Column::new(kind.as_str(), ColumnRole::Key(kind))],
        rows: keys.iter().map(|k| vec![k.clone()]).collect(),
    }
}

fn link_table(name: &str, left: EntityKind, right: EntityKind, people: &[Person], items: impl Fn(&Person) -> &Vec<String>) -> Table {
    Table {
        name: name.to_string(),
        columns: vec![
            Column::new(left.as_str(), ColumnRole::Ref(left)),
            Column::new(right.as_str(), ColumnRole::Ref(right)),
        ],
        rows: people
            .iter()
            .flat_map(|p| items(p).iter().map(move |i| vec![p.key.clone(), i.clone()]))
            .collect(),
    }
}

fn person_table(name: &str, kind: EntityKind, text_column: &str, people: &[Person]) -> Table {
    Table {
        name: name.to_string(),
        columns: vec![
            Column::new(kind.as_str(), ColumnRole::Key(kind)),
            Column::new("location", ColumnRole::Ref(EntityKind::Location)),
            Column::new("education", ColumnRole::Ref(EntityKind::EducationLevel)),
            Column::new("region", ColumnRole::Attr),
            Column::new(text_column, ColumnRole::Text),
        ],
        rows: people
            .iter()
            .map(|p| vec![p.key.clone(), p.location.clone(), p.education.clone(), p.region.clone(), p.text.clone()])
            .collect(),
    }
}

/// Raw relation name (table or column) → relation name in the graph.
pub const RELATION_NAMES: [(&str, &str); 13] = [
    ("locations", "in_region"),
    ("candidate_skills", "has_skill"),
    ("vacancy_skills", "requires_skill"),
    ("candidate_languages", "speaks"),
    ("vacancy_languages", "requires_language"),
    ("candidate_licenses", "holds_license"),
    ("vacancy_licenses", "requires_license"),
    ("candidate_job_types", "seeks_job_type"),
    ("vacancy_job_types", "offers_job_type"),
    ("cv", "has_cv"),
    ("text", "has_text"),
    ("location", "located_in"),
    ("education", "has_education"),
];

pub fn world_to_tables(world: &SynthWorld) -> WorldTables {
    use EntityKind as K;
    let regions = [RURAL.to_string(), URBAN.to_string()];
    let mut tables = vec![
        key_table("regions", K::Location, &regions),
        Table {
            name: "locations".to_string(),
            columns: vec![
                Column::new("location", ColumnRole::Key(K::Location)),
                Column::new("region", ColumnRole::Ref(K::Location)),
            ],
            rows: world.locations.iter().map(|(k, r)| vec![k.clone(), r.clone()]).collect(),
        },
        key_table("skills", K::Skill, &world.skills),
        key_table("languages", K::Language, &world.languages),
        key_table("licenses", K::License, &world.licenses),
        key_table("education_levels", K::EducationLevel, &world.education_levels),
        key_table("job_types", K::JobType, &world.job_types),
        person_table("candidates", K::Candidate, "cv", &world.candidates),
        person_table("vacancies", K::Vacancy, "text", &world.vacancies),
    ];
    let links: [(&str, EntityKind, EntityKind, bool, fn(&Person) -> &Vec<String>); 8] = [
        ("candidate_skills", K::Candidate, K::Skill, true, |p| &p.skills),
        ("vacancy_skills", K::Vacancy, K::Skill, false, |p| &p.skills),
        ("candidate_languages", K::Candidate, K::Language, true, |p| &p.languages),
        ("vacancy_languages", K::Vacancy, K::Language, false, |p| &p.languages),
        ("candidate_licenses", K::Candidate, K::License, true, |p| &p.licenses),
        ("vacancy_licenses", K::Vacancy, K::License, false, |p| &p.licenses),
        ("candidate_job_types", K::Candidate, K::JobType, true, |p| &p.job_types),
        ("vacancy_job_types", K::Vacancy, K::JobType, false, |p| &p.job_types),
    ];
    for (name, left, right, candidate_side, items) in links {
        let people = if candidate_side { &world.candidates } else { &world.vacancies };
        let t = link_table(name, left, right, people, items);
        if !t.rows.is_empty() {
            tables.push(t);
        }
    }
    let relation_names: BTreeMap<String, String> = RELATION_NAMES
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let rules = vec![InferenceRule::SubclassPropagate {
        hierarchy: "in_region".to_string(),
        target: "located_in".to_string(),
    }];
    WorldTables {
        tables,
        relation_names,
        rules,
    }
}

//! File-based pipeline stages. Each stage reads the outputs of the stages
//! before it from `<out>/<stage>/`, checks their manifests against the
//! current config digest and writes its own directory plus a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use okra_core::baselines::{baseline_config, RandomRanker, TfIdfIndex, TfIdfRanker, BASELINE_NAMES};
use okra_core::kg::{EntityKind, KnowledgeGraph, Table};
use okra_core::metrics::{EvalContext, EvalReport, Ranker};
use okra_core::model::{ExplanationReport, Model, ModelConfig};
use okra_core::sampler::{PairSubGraph, SplitAssignment};
use okra_core::synth::{generate, world_to_tables};
use okra_core::train::{train, Clock, TrainOutcome};

use crate::config::{hex, RunConfig};
use crate::formats::{self, Checkpoint, GraphFiles, Manifest};
use crate::pipeline::{self, LabelRow, SplitCorpus};
use crate::Error;

pub const STAGES: [&str; 7] = ["generate", "build-kg", "sample", "train", "evaluate", "explain", "baseline"];

const MANIFEST: &str = "manifest.json";

/// Seconds since the stage started, for training histories.
struct WallClock(Instant);

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// A report together with the digest of the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub config_digest: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitsFile {
    pub config_digest: String,
    pub splits: SplitAssignment,
}

/// A run: the validated config, its digest and the output root.
pub struct Run {
    pub config: RunConfig,
    pub digest: String,
}

impl Run {
    pub fn new(config: RunConfig) -> Result<Self, Error> {
        config.validate()?;
        let digest = config.digest();
        Ok(Self { config, digest })
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.config.out.join(stage)
    }

    pub fn baseline_dir(&self, name: &str) -> PathBuf {
        self.config.out.join("baseline").join(name)
    }

    /// Dispatch by stage name; `baseline` needs `name`.
    pub fn run_stage(&self, stage: &str, name: Option<&str>) -> Result<(), Error> {
        match stage {
            "generate" => self.generate(),
            "build-kg" => self.build_kg(),
            "sample" => self.sample(),
            "train" => self.train(),
            "evaluate" => self.evaluate(),
            "explain" => self.explain(),
            "baseline" => {
                let name = name.ok_or_else(|| Error::Config("the baseline stage needs --name".into()))?;
                self.baseline(name)
            }
            other => Err(Error::Config(format!("unknown stage {other:?}; expected one of {}", STAGES.join(", ")))),
        }
    }

    /// Every stage except `baseline`, then every baseline.
    pub fn run_all(&self) -> Result<(), Error> {
        for stage in &STAGES[..STAGES.len() - 1] {
            self.run_stage(stage, None)?;
        }
        for name in BASELINE_NAMES {
            self.baseline(name)?;
        }
        Ok(())
    }

    fn write_stage(&self, dir: &Path, stage: &str, files: Vec<(String, Vec<u8>)>) -> Result<(), Error> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut manifest = Manifest {
            stage: stage.to_string(),
            config_digest: self.digest.clone(),
            seed: self.config.seed.unwrap_or(self.config.data.seed),
            files: BTreeMap::new(),
        };
        for (name, bytes) in files {
            manifest.files.insert(name.clone(), hex(&Sha256::digest(&bytes)));
            let path = dir.join(&name);
            fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, formats::write_json(&manifest)).map_err(|e| io(&path, e))
    }

    /// Read the named files of an upstream stage after checking its
    /// manifest digest and each file's hash.
    fn read_stage(&self, dir: &Path, stage: &'static str, names: &[&str]) -> Result<BTreeMap<String, Vec<u8>>, Error> {
        let manifest_path = dir.join(MANIFEST);
        let text = read_input(&manifest_path, stage)?;
        let manifest: Manifest = formats::read_json(&manifest_path, &String::from_utf8_lossy(&text))?;
        if manifest.config_digest != self.digest {
            return Err(Error::DigestMismatch {
                path: manifest_path,
                expected: self.digest.clone(),
                found: manifest.config_digest,
            });
        }
        let mut out = BTreeMap::new();
        for name in names {
            let path = dir.join(name);
            let bytes = read_input(&path, stage)?;
            let recorded = manifest
                .files
                .get(*name)
                .ok_or_else(|| Error::Data(format!("{} does not list {name}", manifest_path.display())))?;
            let found = hex(&Sha256::digest(&bytes));
            if *recorded != found {
                return Err(Error::DigestMismatch {
                    path,
                    expected: recorded.clone(),
                    found,
                });
            }
            out.insert(name.to_string(), bytes);
        }
        Ok(out)
    }

    /// Synthetic tables, relation renames and labels.
    pub fn generate(&self) -> Result<(), Error> {
        let world = generate(&self.config.data)?;
        let tables = world_to_tables(&world);
        let mut files: Vec<(String, Vec<u8>)> = tables
            .tables
            .iter()
            .map(|t| (format!("{}.tsv", t.name), formats::write_table(t).into_bytes()))
            .collect();
        let names: BTreeMap<String, String> = tables.relation_names.clone();
        files.push(("relation_names.tsv".into(), formats::write_relation_names(&names).into_bytes()));
        let labels: Vec<LabelRow> = world
            .labels
            .iter()
            .map(|l| LabelRow {
                candidate: l.candidate.clone(),
                vacancy: l.vacancy.clone(),
                label: l.label,
            })
            .collect();
        files.push(("labels.tsv".into(), formats::write_labels(&labels).into_bytes()));
        self.write_stage(&self.stage_dir("data"), "generate", files)
    }

    /// Tables come from `graph.data_dir` when set; that directory needs no
    /// manifest. Otherwise they come from the `generate` stage.
    fn load_tables(&self) -> Result<(Vec<Table>, BTreeMap<String, String>, Vec<LabelRow>), Error> {
        let (dir, files) = match &self.config.graph.data_dir {
            Some(dir) => {
                let mut files = BTreeMap::new();
                let entries = fs::read_dir(dir).map_err(|_| Error::MissingInput {
                    path: dir.clone(),
                    stage: "generate",
                })?;
                for entry in entries {
                    let path = entry.map_err(|e| io(dir, e))?.path();
                    if path.extension().is_some_and(|e| e == "tsv") {
                        let name = path.file_name().expect("listed file").to_string_lossy().into_owned();
                        files.insert(name, fs::read(&path).map_err(|e| io(&path, e))?);
                    }
                }
                (dir.clone(), files)
            }
            None => {
                let dir = self.stage_dir("data");
                let manifest_path = dir.join(MANIFEST);
                let manifest: Manifest = formats::read_json(
                    &manifest_path,
                    &String::from_utf8_lossy(&read_input(&manifest_path, "generate")?),
                )?;
                let names: Vec<&str> = manifest.files.keys().map(String::as_str).collect();
                let files = self.read_stage(&dir, "generate", &names)?;
                (dir, files)
            }
        };
        let mut tables = Vec::new();
        let mut relation_names = BTreeMap::new();
        let mut labels = None;
        for (name, bytes) in &files {
            let path = dir.join(name);
            let text = utf8(&path, bytes)?;
            match name.as_str() {
                "labels.tsv" => labels = Some(formats::read_labels(&path, text)?),
                "relation_names.tsv" => relation_names = formats::read_relation_names(&path, text)?,
                _ => tables.push(formats::read_table(&path, text)?),
            }
        }
        let labels = labels.ok_or_else(|| Error::MissingInput {
            path: dir.join("labels.tsv"),
            stage: "generate",
        })?;
        Ok((tables, relation_names, labels))
    }

    pub fn build_kg(&self) -> Result<(), Error> {
        let (tables, relation_names, _) = self.load_tables()?;
        let graph = pipeline::build_kg(&tables, &relation_names, &self.config.graph.rules)?;
        let files = vec![
            ("entities.tsv".into(), formats::write_entities(&graph).into_bytes()),
            ("relations.tsv".into(), formats::write_relations(&graph).into_bytes()),
            ("triples.tsv".into(), formats::write_triples(&graph).into_bytes()),
        ];
        self.write_stage(&self.stage_dir("graph"), "build-kg", files)
    }

    fn load_graph(&self) -> Result<KnowledgeGraph, Error> {
        let dir = self.stage_dir("graph");
        let files = self.read_stage(&dir, "build-kg", &["entities.tsv", "relations.tsv", "triples.tsv"])?;
        let paths: Vec<PathBuf> = ["entities.tsv", "relations.tsv", "triples.tsv"].iter().map(|n| dir.join(n)).collect();
        formats::read_graph(GraphFiles {
            entities: (&paths[0], utf8(&paths[0], &files["entities.tsv"])?),
            relations: (&paths[1], utf8(&paths[1], &files["relations.tsv"])?),
            triples: (&paths[2], utf8(&paths[2], &files["triples.tsv"])?),
        })
    }

    pub fn sample(&self) -> Result<(), Error> {
        let graph = self.load_graph()?;
        let (_, _, labels) = self.load_tables()?;
        let s = &self.config.sampler;
        let corpus = pipeline::sample_corpus(&graph, &labels, &s.walk(), s.negative_per_candidate * count_candidates(&labels), s.label_scheme, s.seed)?;
        let splits = pipeline::split(&corpus, s.split, s.seed)?;
        let files = vec![
            ("subgraphs.jsonl".into(), formats::write_jsonl(&corpus).into_bytes()),
            ("features.tsv".into(), formats::write_features(&graph.text_features()).into_bytes()),
            (
                "splits.json".into(),
                formats::write_json(&SplitsFile {
                    config_digest: self.digest.clone(),
                    splits,
                })
                .into_bytes(),
            ),
        ];
        self.write_stage(&self.stage_dir("sample"), "sample", files)
    }

    fn load_sample(&self) -> Result<(SplitCorpus, BTreeMap<String, String>), Error> {
        let dir = self.stage_dir("sample");
        let files = self.read_stage(&dir, "sample", &["subgraphs.jsonl", "features.tsv", "splits.json"])?;
        let path = dir.join("subgraphs.jsonl");
        let corpus: Vec<PairSubGraph> = formats::read_jsonl(&path, utf8(&path, &files["subgraphs.jsonl"])?)?;
        let path = dir.join("features.tsv");
        let features = formats::read_features(&path, utf8(&path, &files["features.tsv"])?)?;
        let path = dir.join("splits.json");
        let splits: SplitsFile = formats::read_json(&path, utf8(&path, &files["splits.json"])?)?;
        Ok((pipeline::partition(&corpus, &splits.splits), features))
    }

    /// The model config with the relation count of the built graph.
    fn model_config(&self) -> Result<ModelConfig, Error> {
        let graph = self.load_graph()?;
        Ok(ModelConfig {
            relation_count: graph.relations().len(),
            ..self.config.model.clone()
        })
    }

    fn fit(&self, model: &ModelConfig, data: &SplitCorpus, features: &BTreeMap<String, String>) -> Result<TrainOutcome, Error> {
        let clock = WallClock(Instant::now());
        Ok(train(model, &data.train, &data.validation, features, &self.config.train, &clock)?)
    }

    fn fit_files(&self, outcome: &TrainOutcome) -> Vec<(String, Vec<u8>)> {
        let ckpt = Checkpoint {
            config_digest: self.digest.clone(),
            model: outcome.model.config.clone(),
            params: outcome.model.params.clone(),
        };
        vec![
            ("checkpoint.bin".into(), formats::write_checkpoint(&ckpt)),
            ("history.csv".into(), formats::write_history(&outcome.history).into_bytes()),
        ]
    }

    pub fn train(&self) -> Result<(), Error> {
        let model = self.model_config()?;
        let (data, features) = self.load_sample()?;
        let outcome = self.fit(&model, &data, &features)?;
        self.write_stage(&self.stage_dir("train"), "train", self.fit_files(&outcome))
    }

    fn load_model(&self) -> Result<Model, Error> {
        let dir = self.stage_dir("train");
        let path = dir.join("checkpoint.bin");
        let files = self.read_stage(&dir, "train", &["checkpoint.bin"])?;
        let ckpt = formats::read_checkpoint(&path, &files["checkpoint.bin"])?;
        if ckpt.config_digest != self.digest {
            return Err(Error::DigestMismatch {
                path,
                expected: self.digest.clone(),
                found: ckpt.config_digest,
            });
        }
        Ok(Model::from_params(ckpt.model, ckpt.params)?)
    }

    /// Groups of candidates and vacancies from the graph's entity attributes.
    fn eval_context(&self) -> Result<EvalContext, Error> {
        let graph = self.load_graph()?;
        let attr = &self.config.eval.group_attribute;
        let groups = |kind: EntityKind| -> Result<BTreeMap<String, String>, Error> {
            graph
                .entities_of_kind(kind)
                .map(|e| {
                    let g = e.attrs.get(attr).ok_or_else(|| {
                        Error::Data(format!("{} has no {attr:?} attribute", e.qualified_key()))
                    })?;
                    Ok((e.key.clone(), g.clone()))
                })
                .collect()
        };
        Ok(EvalContext {
            candidate_groups: groups(EntityKind::Candidate)?,
            vacancy_groups: groups(EntityKind::Vacancy)?,
            protected: self.config.eval.protected.clone(),
        })
    }

    fn write_report(&self, dir: &Path, stage: &str, report: EvalReport, mut extra: Vec<(String, Vec<u8>)>) -> Result<(), Error> {
        extra.push(("plotdata.csv".into(), formats::write_plotdata(&report).into_bytes()));
        extra.push((
            "report.json".into(),
            formats::write_json(&ReportFile {
                config_digest: self.digest.clone(),
                report,
            })
            .into_bytes(),
        ));
        self.write_stage(dir, stage, extra)
    }

    pub fn evaluate(&self) -> Result<(), Error> {
        let model = self.load_model()?;
        let (data, features) = self.load_sample()?;
        let ctx = self.eval_context()?;
        let report = pipeline::evaluate_model("okra", &model, &features, &data.test, &ctx, &self.config.eval.cutoffs)?;
        self.write_report(&self.stage_dir("evaluate"), "evaluate", report, Vec::new())
    }

    pub fn explain(&self) -> Result<(), Error> {
        let model = self.load_model()?;
        let (data, features) = self.load_sample()?;
        let reports: Vec<ExplanationReport> = pipeline::explain_all(&model, &features, &data.test)?;
        let files = vec![("explanations.jsonl".into(), formats::write_jsonl(&reports).into_bytes())];
        self.write_stage(&self.stage_dir("explain"), "explain", files)
    }

    pub fn baseline(&self, name: &str) -> Result<(), Error> {
        if !BASELINE_NAMES.contains(&name) {
            return Err(Error::Config(format!(
                "unknown baseline {name:?}; expected one of {}",
                BASELINE_NAMES.join(", ")
            )));
        }
        let (data, features) = self.load_sample()?;
        let ctx = self.eval_context()?;
        let cutoffs = &self.config.eval.cutoffs;
        let dir = self.baseline_dir(name);
        let score_with = |ranker: &(dyn Ranker + Sync)| {
            pipeline::evaluate_parallel(name, |g| ranker.score_group(g), &data.test, &ctx, cutoffs)
        };
        match name {
            "random" => {
                let report = score_with(&RandomRanker { seed: self.config.eval.seed })?;
                self.write_report(&dir, "baseline", report, Vec::new())
            }
            "tfidf" => {
                let report = score_with(&self.tfidf_ranker()?)?;
                self.write_report(&dir, "baseline", report, Vec::new())
            }
            _ => {
                let base = self.model_config()?;
                let model = baseline_config(name, &base).expect("trained baseline name");
                let outcome = self.fit(&model, &data, &features)?;
                let report = pipeline::evaluate_model(name, &outcome.model, &features, &data.test, &ctx, cutoffs)?;
                let files = self.fit_files(&outcome);
                self.write_report(&dir, "baseline", report, files)
            }
        }
    }

    /// CV and vacancy texts are the payloads of the text documents linked
    /// from each candidate and vacancy.
    fn tfidf_ranker(&self) -> Result<TfIdfRanker, Error> {
        let graph = self.load_graph()?;
        let texts = |kind: EntityKind| -> BTreeMap<String, String> {
            graph
                .entities_of_kind(kind)
                .map(|e| {
                    let text: Vec<&str> = graph
                        .out_edges(e.id)
                        .iter()
                        .map(|&(_, o)| graph.entity(o))
                        .filter(|o| o.kind == EntityKind::TextDoc)
                        .filter_map(|o| o.payload.as_deref())
                        .collect();
                    (e.key.clone(), text.join(" "))
                })
                .collect()
        };
        let cv_texts = texts(EntityKind::Candidate);
        let vacancy_texts = texts(EntityKind::Vacancy);
        let index = TfIdfIndex::fit(cv_texts.values().chain(vacancy_texts.values()).map(String::as_str));
        Ok(TfIdfRanker {
            index,
            cv_texts,
            vacancy_texts,
        })
    }
}

fn count_candidates(labels: &[LabelRow]) -> usize {
    labels.iter().map(|l| l.candidate.as_str()).collect::<std::collections::BTreeSet<_>>().len()
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_input(path: &Path, stage: &'static str) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput {
            path: path.to_path_buf(),
            stage,
        },
        _ => io(path, e),
    })
}

fn utf8<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a str, Error> {
    std::str::from_utf8(bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

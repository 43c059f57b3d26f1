//! File-based experiment stages behind the `eggs` command line.
//!
//! Every stage reads its inputs from and writes its outputs to the output
//! directory, so stages can be rerun one at a time:
//!
//! ```text
//! data/messages.jsonl, data/follows.tsv     generate
//! split.json, features/subset_NN.{tsv,json} featurize
//! models/subset_NN.json                     train
//! predictions/subset_NN.json                infer
//! report.txt, report.json                   eval
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data_model::{self, Message, SplitFractions, SplitPlan};
use crate::error::{EggsError, Result};
use crate::evaluation::{self, EvaluationReport, ExperimentConfig, ModelSpec, SubsetFeatures, SubsetModels, SubsetPredictions};
use crate::features::{FeatureFamily, FeatureMatrix};
use crate::synthetic::{self, GeneratorConfig};

pub const SCHEMA_VERSION: u32 = 1;
const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    Full,
    /// Drops `PipelineConfig::limited_families`.
    Limited,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input messages; when absent the stages use `data/messages.jsonl` under `out`.
    pub messages: Option<PathBuf>,
    pub follows: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub n_subsets: usize,
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            n_subsets: 10,
            train: 0.6,
            validation: 0.15,
            test: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    /// Overrides the generator and classifier seeds.
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub paths: Paths,
    pub feature_mode: FeatureMode,
    pub limited_families: Vec<FeatureFamily>,
    /// When set, every stacked roster entry uses this many stacks.
    pub stacks: Option<usize>,
    pub split: SplitConfig,
    pub generator: GeneratorConfig,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            seed: 7,
            threads: 0,
            paths: Paths {
                out: PathBuf::from("eggs-out"),
                ..Paths::default()
            },
            feature_mode: FeatureMode::Full,
            limited_families: vec![FeatureFamily::Ngram],
            stacks: None,
            split: SplitConfig::default(),
            generator: GeneratorConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| EggsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| EggsError::io(path, e))?;
        PipelineConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(EggsError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.paths.out.as_os_str().is_empty() {
            return Err(EggsError::Config("paths.out must be set".into()));
        }
        if self.paths.follows.is_some() && self.paths.messages.is_none() {
            return Err(EggsError::Config("paths.follows requires paths.messages".into()));
        }
        if self.stacks == Some(0) {
            return Err(EggsError::Config("stacks must be at least 1".into()));
        }
        let exp = self.experiment();
        if exp.roster.is_empty() {
            return Err(EggsError::Config("model roster is empty".into()));
        }
        if exp.relations.is_empty() {
            return Err(EggsError::Config("relation list is empty".into()));
        }
        if exp.l2_grid.iter().chain([&exp.classifier.l2]).any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(EggsError::Config("l2 values must be finite and non-negative".into()));
        }
        let eps = exp.epsilon.per_relation.values().chain([&exp.epsilon.default]).chain(&exp.epsilon_grid);
        for &e in eps {
            if !(e > 0.0 && e < 0.5) {
                return Err(EggsError::Config(format!("epsilon {e} outside (0, 0.5)")));
            }
        }
        if !matches!(exp.hinge_exponent, 1 | 2) {
            return Err(EggsError::Config(format!("hinge_exponent must be 1 or 2, got {}", exp.hinge_exponent)));
        }
        exp.rule_weights.validate()?;
        data_model::chronological_split(self.split.n_subsets, self.split.n_subsets, self.fractions())?;
        if self.paths.messages.is_none() {
            self.generator_config().validate()?;
        }
        Ok(())
    }

    fn fractions(&self) -> SplitFractions {
        SplitFractions::new(self.split.train, self.split.validation, self.split.test)
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            seed: self.seed,
            ..self.generator.clone()
        }
    }

    /// The experiment configuration with seed, feature mode and stack
    /// overrides applied.
    pub fn experiment(&self) -> ExperimentConfig {
        let mut exp = self.experiment.clone();
        exp.classifier.seed = self.seed;
        if self.feature_mode == FeatureMode::Limited {
            for f in &self.limited_families {
                if !exp.features.excluded.contains(f) {
                    exp.features.excluded.push(*f);
                }
            }
        }
        if let Some(k) = self.stacks {
            for m in &mut exp.roster {
                *m = match *m {
                    ModelSpec::Sgl(_) => ModelSpec::Sgl(k),
                    ModelSpec::SglMrf(_) => ModelSpec::SglMrf(k),
                    ModelSpec::SglPsl(_) => ModelSpec::SglPsl(k),
                    other => other,
                };
            }
            let mut seen = std::collections::BTreeSet::new();
            exp.roster.retain(|m| seen.insert(*m));
        }
        exp
    }

    pub fn messages_path(&self) -> PathBuf {
        self.paths.messages.clone().unwrap_or_else(|| self.paths.out.join("data/messages.jsonl"))
    }

    /// An explicit messages file without a follows file means no follower graph.
    pub fn follows_path(&self) -> Option<PathBuf> {
        match (&self.paths.messages, &self.paths.follows) {
            (None, _) => Some(self.paths.out.join("data/follows.tsv")),
            (Some(_), f) => f.clone(),
        }
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.paths.out.join(rel)
    }
}

#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    format_version: u32,
    stage: String,
    payload: T,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| EggsError::io(dir, e))?;
    }
    // write then rename so a failed stage never leaves a half-written artifact
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, text).map_err(|e| EggsError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| EggsError::io(path, e))
}

fn write_artifact<T: Serialize>(stage: &str, path: &Path, payload: T) -> Result<()> {
    let a = Artifact {
        format_version: ARTIFACT_VERSION,
        stage: stage.to_string(),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&a)?;
    text.push('\n');
    write_text(path, &text)
}

fn require(stage: &'static str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(EggsError::MissingArtifact {
            stage,
            path: path.to_path_buf(),
        })
    }
}

fn read_artifact<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T> {
    require(stage, path)?;
    let text = std::fs::read_to_string(path).map_err(|e| EggsError::io(path, e))?;
    let a: Artifact<T> = serde_json::from_str(&text)?;
    if a.format_version != ARTIFACT_VERSION {
        return Err(EggsError::InvalidInput(format!(
            "{} has format version {}, expected {ARTIFACT_VERSION}",
            path.display(),
            a.format_version
        )));
    }
    Ok(a.payload)
}

fn subset_file(dir: &str, i: usize, ext: &str) -> String {
    format!("{dir}/subset_{i:02}.{ext}")
}

fn in_pool<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| EggsError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

struct Dataset {
    messages: Vec<Message>,
    follows: Vec<(String, String)>,
}

fn load_dataset(stage: &'static str, cfg: &PipelineConfig) -> Result<Dataset> {
    let path = cfg.messages_path();
    require(stage, &path)?;
    let mut messages = data_model::read_messages(&path)?;
    let report = data_model::validate_dataset(&messages);
    if !report.is_valid() {
        return Err(EggsError::InvalidInput(format!("{}: {}", path.display(), report.errors().join("; "))));
    }
    data_model::sort_chronologically(&mut messages);
    let follows = match cfg.follows_path() {
        Some(p) => {
            require(stage, &p)?;
            data_model::read_follows(&p)?
        }
        None => Vec::new(),
    };
    Ok(Dataset { messages, follows })
}

/// Writes a synthetic dataset to `data/` under the output directory.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let gen = cfg.generator_config();
    log::info!("generate: {} messages, {} users, seed {}", gen.n_messages, gen.n_users, gen.seed);
    let d = synthetic::generate(&gen)?;
    let dir = cfg.out("data");
    std::fs::create_dir_all(&dir).map_err(|e| EggsError::io(&dir, e))?;
    data_model::write_messages(&cfg.out("data/messages.jsonl"), &d.messages)?;
    data_model::write_follows(&cfg.out("data/follows.tsv"), &d.follows)
}

/// Writes the split plan and, per subset, the feature matrix of its span.
pub fn cmd_featurize(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let data = load_dataset("featurize", cfg)?;
    let plan = data_model::chronological_split(data.messages.len(), cfg.split.n_subsets, cfg.fractions())?;
    let exp = cfg.experiment();
    log::info!(
        "featurize: {} messages, {} subsets, excluded families {:?}",
        data.messages.len(),
        plan.n_subsets(),
        exp.features.excluded
    );
    write_artifact("featurize", &cfg.out("split.json"), &plan)?;
    in_pool(cfg, || {
        plan.subsets.par_iter().enumerate().try_for_each(|(i, s)| {
            let f = evaluation::featurize_subset(i, s, &data.messages, &data.follows, &exp.features)?;
            write_features(cfg, &f)
        })
    })
}

#[derive(Serialize, Deserialize)]
struct FeatureMeta {
    subset: usize,
    n_rows: usize,
    n_cols: usize,
    column_fingerprint: String,
    pagerank_converged: bool,
}

fn write_features(cfg: &PipelineConfig, f: &SubsetFeatures) -> Result<()> {
    let meta = FeatureMeta {
        subset: f.subset,
        n_rows: f.matrix.n_rows(),
        n_cols: f.matrix.n_cols(),
        column_fingerprint: f.matrix.columns.fingerprint(),
        pagerank_converged: f.pagerank_converged,
    };
    write_text(&cfg.out(&subset_file("features", f.subset, "tsv")), &f.matrix.to_triplets())?;
    write_artifact("featurize", &cfg.out(&subset_file("features", f.subset, "json")), meta)
}

fn read_features(stage: &'static str, cfg: &PipelineConfig, i: usize) -> Result<SubsetFeatures> {
    let meta: FeatureMeta = read_artifact(stage, &cfg.out(&subset_file("features", i, "json")))?;
    let path = cfg.out(&subset_file("features", i, "tsv"));
    require(stage, &path)?;
    let matrix = FeatureMatrix::read_triplets(&path)?;
    if matrix.columns.fingerprint() != meta.column_fingerprint {
        return Err(EggsError::ColumnMismatch(format!("{} disagrees with its metadata", path.display())));
    }
    Ok(SubsetFeatures {
        subset: i,
        matrix,
        pagerank_converged: meta.pagerank_converged,
    })
}

fn read_plan(stage: &'static str, cfg: &PipelineConfig, n_messages: usize) -> Result<SplitPlan> {
    let plan: SplitPlan = read_artifact(stage, &cfg.out("split.json"))?;
    if plan.n_messages != n_messages {
        return Err(EggsError::InvalidInput(format!(
            "split.json covers {} messages, dataset has {n_messages}; rerun featurize",
            plan.n_messages
        )));
    }
    Ok(plan)
}

/// Fits base models, epsilons and rule weights per subset.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let data = load_dataset("train", cfg)?;
    let plan = read_plan("train", cfg, data.messages.len())?;
    let exp = cfg.experiment();
    log::info!("train: roster {:?}, l2 grid {:?}", exp.roster.iter().map(|m| m.tag()).collect::<Vec<_>>(), exp.l2_grid);
    let features = (0..plan.n_subsets()).map(|i| read_features("train", cfg, i)).collect::<Result<Vec<_>>>()?;
    in_pool(cfg, || {
        plan.subsets.par_iter().zip(&features).try_for_each(|(s, f)| {
            let models = evaluation::train_subset(s, &data.messages, f, &exp)?;
            write_artifact("train", &cfg.out(&subset_file("models", f.subset, "json")), models)
        })
    })
}

/// Writes test predictions of every roster model per subset.
pub fn cmd_infer(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let data = load_dataset("infer", cfg)?;
    let plan = read_plan("infer", cfg, data.messages.len())?;
    let exp = cfg.experiment();
    let inputs = (0..plan.n_subsets())
        .map(|i| {
            let f = read_features("infer", cfg, i)?;
            let m: SubsetModels = read_artifact("infer", &cfg.out(&subset_file("models", i, "json")))?;
            Ok((f, m))
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!("infer: {} subsets", inputs.len());
    in_pool(cfg, || {
        plan.subsets.par_iter().zip(&inputs).try_for_each(|(s, (f, m))| {
            let p = evaluation::infer_subset(s, &data.messages, f, m, &exp)?;
            write_artifact("infer", &cfg.out(&subset_file("predictions", f.subset, "json")), p)
        })
    })
}

/// Scores the predictions and writes `report.txt` and `report.json`.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let data = load_dataset("eval", cfg)?;
    let plan = read_plan("eval", cfg, data.messages.len())?;
    let outputs = (0..plan.n_subsets())
        .map(|i| read_artifact::<SubsetPredictions>("eval", &cfg.out(&subset_file("predictions", i, "json"))))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluation::aggregate(&data.messages, &plan, &outputs, &cfg.experiment())?;
    write_text(&cfg.out("report.txt"), &report.to_table())?;
    write_artifact("eval", &cfg.out("report.json"), &report)?;
    Ok(report)
}

/// All stages in order; `generate` runs only when no input messages are configured.
pub fn cmd_run_all(cfg: &PipelineConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.paths.out).map_err(|e| EggsError::io(&cfg.paths.out, e))?;
    write_text(&cfg.out("config.toml"), &cfg.to_toml())?;
    if cfg.paths.messages.is_none() {
        cmd_generate(cfg)?;
    }
    cmd_featurize(cfg)?;
    cmd_train(cfg)?;
    cmd_infer(cfg)?;
    cmd_eval(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn schema_violations_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml("schema_version = 2"), Err(EggsError::Config(_))));
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml("[experiment]\nroster = []").is_err());
        assert!(PipelineConfig::from_toml("[experiment.epsilon]\ndefault = 0.5").is_err());
        assert!(PipelineConfig::from_toml("[split]\ntrain = 0.9").is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg = PipelineConfig {
            feature_mode: FeatureMode::Limited,
            stacks: Some(3),
            seed: 99,
            ..PipelineConfig::default()
        };
        let exp = cfg.experiment();
        assert!(exp.features.excluded.contains(&FeatureFamily::Ngram));
        assert_eq!(exp.classifier.seed, 99);
        assert!(exp.roster.contains(&ModelSpec::Sgl(3)));
        assert!(!exp.roster.contains(&ModelSpec::Sgl(1)));
        assert_eq!(cfg.generator_config().seed, 99);
    }
}

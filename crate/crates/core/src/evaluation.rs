//! Ranking metrics, inductive/transductive partitioning, component coverage
//! and the chronological multi-subset experiment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, LinearModel, TrainConfig};
use crate::data_model::{Group, Label, Labels, Message, Predictions, Relation, SplitPlan, Subset};
use crate::error::{EggsError, Result};
use crate::features::{FeatureConfig, FeatureExtractor, FeatureMatrix};
use crate::hlmrf::{self, LearnConfig, MapConfig, RuleWeights};
use crate::mrf::{self, BpConfig, EpsilonMap};
use crate::stacking::{RatioMode, RelationalContext, StackConfig, StackedModel};

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(EggsError::Metric(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(EggsError::Metric(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EggsError::Metric("metric needs at least one positive and one negative label".into()));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score, cut into blocks of equal score.
fn tie_blocks(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match blocks.last_mut() {
            Some(b) if scores[b[0]] == scores[i] => b.push(i),
            _ => blocks.push(vec![i]),
        }
    }
    blocks
}

/// Average precision: `sum over thresholds of (recall gain) * precision`,
/// sweeping scores downward with tied scores entering as one block.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    for block in tie_blocks(scores) {
        let gained = block.iter().filter(|&&i| labels[i]).count();
        tp += gained;
        seen += block.len();
        if gained > 0 {
            ap += gained as f64 / pos as f64 * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// Probability that a random positive outscores a random negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    // ascending sweep; negatives strictly below each block plus half the tied ones
    let mut blocks = tie_blocks(scores);
    blocks.reverse();
    let (mut below, mut wins) = (0usize, 0.0);
    for block in blocks {
        let p = block.iter().filter(|&&i| labels[i]).count();
        let n = block.len() - p;
        wins += p as f64 * (below as f64 + 0.5 * n as f64);
        below += n;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Scores and labels for `ids`, in order. Every id needs both.
pub fn align(ids: &[String], predictions: &Predictions, labels: &Labels) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut s = Vec::with_capacity(ids.len());
    let mut l = Vec::with_capacity(ids.len());
    for id in ids {
        s.push(*predictions
            .get(id)
            .ok_or_else(|| EggsError::Metric(format!("no prediction for `{id}`")))?);
        l.push(labels
            .get(id)
            .ok_or_else(|| EggsError::Metric(format!("no label for `{id}`")))?
            .is_spam());
    }
    Ok((s, l))
}

/// Splits test ids into (inductive, transductive): transductive ids share at
/// least one group with a training message. Order of `test` is kept.
pub fn inductive_partition(test: &[String], train: &[String], groups: &[Group]) -> (Vec<String>, Vec<String>) {
    let train: BTreeSet<&str> = train.iter().map(String::as_str).collect();
    let mut linked: BTreeSet<&str> = BTreeSet::new();
    for g in groups {
        if g.member_ids.iter().any(|m| train.contains(m.as_str())) {
            linked.extend(g.member_ids.iter().map(String::as_str));
        }
    }
    test.iter().cloned().partition(|id| !linked.contains(id.as_str()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub n_components: usize,
    /// (components used, fraction covered), components by decreasing size.
    pub overall: Vec<(usize, f64)>,
    /// As `overall` but counting only spam (ham) messages, components ordered
    /// by their spam (ham) count.
    pub spam: Vec<(usize, f64)>,
    pub ham: Vec<(usize, f64)>,
}

/// Connected components of the co-membership graph and how many are needed to
/// cover the messages. Curves stop once coverage reaches 1.
pub fn component_coverage(messages: &[Message], groups: &[Group]) -> CoverageCurve {
    let index: HashMap<&str, usize> = messages.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
    let mut uf = UnionFind::<usize>::new(messages.len());
    for g in groups {
        let mut members = g.member_ids.iter().filter_map(|m| index.get(m.as_str()));
        if let Some(&first) = members.next() {
            for &m in members {
                uf.union(first, m);
            }
        }
    }
    // (total, spam, ham) per root
    let mut counts: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (i, m) in messages.iter().enumerate() {
        let c = counts.entry(uf.find(i)).or_default();
        c.0 += 1;
        match m.label {
            Some(Label::Spam) => c.1 += 1,
            Some(Label::Ham) => c.2 += 1,
            None => {}
        }
    }
    let sizes: Vec<(usize, usize, usize)> = counts.into_values().collect();
    let curve = |key: fn(&(usize, usize, usize)) -> usize| {
        let mut v: Vec<usize> = sizes.iter().map(key).filter(|&k| k > 0).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        let total: usize = v.iter().sum();
        let mut acc = 0;
        v.iter()
            .enumerate()
            .map(|(i, s)| {
                acc += s;
                (i + 1, acc as f64 / total as f64)
            })
            .collect::<Vec<_>>()
    };
    CoverageCurve {
        n_components: sizes.len(),
        overall: curve(|c| c.0),
        spam: curve(|c| c.1),
        ham: curve(|c| c.2),
    }
}

/// Models of the experiment roster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelSpec {
    Independent,
    Sgl(usize),
    Mrf,
    Psl,
    SglMrf(usize),
    SglPsl(usize),
}

impl ModelSpec {
    pub fn tag(&self) -> String {
        match self {
            ModelSpec::Independent => "independent".into(),
            ModelSpec::Sgl(k) => format!("sgl{k}"),
            ModelSpec::Mrf => "mrf".into(),
            ModelSpec::Psl => "psl".into(),
            ModelSpec::SglMrf(k) => format!("sgl{k}+mrf"),
            ModelSpec::SglPsl(k) => format!("sgl{k}+psl"),
        }
    }

    fn stacks(&self) -> usize {
        match self {
            ModelSpec::Sgl(k) | ModelSpec::SglMrf(k) | ModelSpec::SglPsl(k) => *k,
            _ => 0,
        }
    }

    fn joint(&self) -> Joint {
        match self {
            ModelSpec::Mrf | ModelSpec::SglMrf(_) => Joint::Mrf,
            ModelSpec::Psl | ModelSpec::SglPsl(_) => Joint::Psl,
            _ => Joint::None,
        }
    }

    pub fn default_roster() -> Vec<ModelSpec> {
        vec![
            ModelSpec::Independent,
            ModelSpec::Sgl(1),
            ModelSpec::Sgl(2),
            ModelSpec::Psl,
            ModelSpec::Mrf,
            ModelSpec::SglPsl(1),
            ModelSpec::SglMrf(1),
        ]
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Independent => write!(f, "Independent"),
            ModelSpec::Sgl(k) => write!(f, "SGL({k})"),
            ModelSpec::Mrf => write!(f, "MRF"),
            ModelSpec::Psl => write!(f, "PSL"),
            ModelSpec::SglMrf(k) => write!(f, "SGL({k})+MRF"),
            ModelSpec::SglPsl(k) => write!(f, "SGL({k})+PSL"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = EggsError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let stacks = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| EggsError::Config(format!("bad stack count in model `{s}`")))
        };
        match t.as_str() {
            "independent" => Ok(ModelSpec::Independent),
            "mrf" => Ok(ModelSpec::Mrf),
            "psl" => Ok(ModelSpec::Psl),
            _ => {
                let Some(rest) = t.strip_prefix("sgl") else {
                    return Err(EggsError::Config(format!("unknown model `{s}`")));
                };
                if let Some(k) = rest.strip_suffix("+mrf") {
                    Ok(ModelSpec::SglMrf(stacks(k)?))
                } else if let Some(k) = rest.strip_suffix("+psl") {
                    Ok(ModelSpec::SglPsl(stacks(k)?))
                } else {
                    Ok(ModelSpec::Sgl(stacks(rest)?))
                }
            }
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Joint {
    None,
    Mrf,
    Psl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub relations: Vec<Relation>,
    pub features: FeatureConfig,
    pub classifier: TrainConfig,
    /// Candidate l2 strengths; the best validation AUPR wins. Empty keeps `classifier.l2`.
    pub l2_grid: Vec<f64>,
    pub ratio_mode: RatioMode,
    pub epsilon: EpsilonMap,
    /// Per-relation candidates tuned on validation; empty disables tuning.
    pub epsilon_grid: Vec<f64>,
    pub bp: BpConfig,
    pub rule_weights: RuleWeights,
    pub hinge_exponent: u8,
    pub learn_weights: bool,
    pub learn: LearnConfig,
    pub map: MapConfig,
    pub roster: Vec<ModelSpec>,
    pub coverage_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            relations: vec![Relation::User, Relation::Text, Relation::Link, Relation::Hashtag],
            features: FeatureConfig::default(),
            classifier: TrainConfig::default(),
            l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1],
            ratio_mode: RatioMode::Soft,
            epsilon: EpsilonMap::uniform(0.1),
            epsilon_grid: vec![0.05, 0.1, 0.2, 0.3, 0.4],
            bp: BpConfig::default(),
            rule_weights: RuleWeights::default(),
            hinge_exponent: 2,
            learn_weights: true,
            learn: LearnConfig::default(),
            map: MapConfig::default(),
            roster: ModelSpec::default_roster(),
            coverage_points: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub n_spam: usize,
    pub aupr: Option<f64>,
    pub auroc: Option<f64>,
}

impl Metrics {
    pub fn compute(ids: &[String], predictions: &Predictions, labels: &Labels) -> Result<Metrics> {
        let (s, l) = align(ids, predictions, labels)?;
        Ok(Metrics {
            n: ids.len(),
            n_spam: l.iter().filter(|&&v| v).count(),
            aupr: aupr(&s, &l).ok(),
            auroc: auroc(&s, &l).ok(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelSpec,
    pub name: String,
    /// Inductive and transductive test messages together.
    pub overall: Metrics,
    pub inductive: Metrics,
    pub transductive: Metrics,
    pub per_subset: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetDiagnostics {
    pub subset: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Tuned l2 by base model ("independent", "sgl1", ...).
    pub l2: BTreeMap<String, f64>,
    pub classifier_converged: bool,
    pub pagerank_converged: bool,
    /// Tuned epsilons by prior source ("independent", "sgl1", ...).
    pub epsilon: BTreeMap<String, EpsilonMap>,
    pub bp_converged: BTreeMap<String, bool>,
    pub rule_weights: BTreeMap<String, RuleWeights>,
    pub map_converged: BTreeMap<String, bool>,
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_messages: usize,
    pub n_subsets: usize,
    pub n_test: usize,
    pub n_inductive: usize,
    pub relations: Vec<Relation>,
    pub models: Vec<ModelReport>,
    pub subsets: Vec<SubsetDiagnostics>,
    pub coverage: CoverageCurve,
}

impl EvaluationReport {
    pub fn model(&self, spec: ModelSpec) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == spec)
    }

    /// Rows are models; columns are AUPR/AUROC for all test messages and for
    /// inductive ones only.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let header = ["model", "AUPR", "AUROC", "AUPR(ind)", "AUROC(ind)"];
        let rows: Vec<[String; 5]> = self
            .models
            .iter()
            .map(|m| {
                [
                    m.name.clone(),
                    fmt(m.overall.aupr),
                    fmt(m.overall.auroc),
                    fmt(m.inductive.aupr),
                    fmt(m.inductive.auroc),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: [&str; 5]| {
            let mut s = format!("{:<w$}", cells[0], w = widths[0]);
            for (c, w) in cells[1..].iter().zip(&widths[1..]) {
                s.push_str(&format!("  {c:>w$}"));
            }
            s.push('\n');
            s
        };
        let mut out = format!(
            "{} test messages ({} inductive) over {} subsets\n",
            self.n_test, self.n_inductive, self.n_subsets
        );
        out.push_str(&line(header));
        out.push_str(&line(widths.map(|w| "-".repeat(w)).each_ref().map(String::as_str)));
        for r in &rows {
            out.push_str(&line(r.each_ref().map(String::as_str)));
        }
        out
    }
}

fn labels_vec(messages: &[Message]) -> Result<Vec<Label>> {
    messages
        .iter()
        .map(|m| {
            m.label
                .ok_or_else(|| EggsError::InvalidInput(format!("training message `{}` has no label", m.id)))
        })
        .collect()
}

fn val_aupr(ids: &[String], predictions: &Predictions, labels: &Labels) -> Option<f64> {
    let (s, l) = align(ids, predictions, labels).ok()?;
    aupr(&s, &l).ok()
}

/// Coordinate-wise search over relations: each relation takes the grid value
/// with the best validation AUPR, the others held at their current values.
fn tune_epsilon(
    config: &ExperimentConfig,
    priors: &Predictions,
    groups: &[Group],
    val_ids: &[String],
    labels: &Labels,
) -> Result<EpsilonMap> {
    let mut eps = config.epsilon.clone();
    if config.epsilon_grid.is_empty() || val_aupr(val_ids, priors, labels).is_none() {
        return Ok(eps);
    }
    let clamped = mrf::clamp_priors(priors);
    let score = |e: &EpsilonMap| -> Result<Option<f64>> {
        let g = mrf::build_factor_graph(&clamped, groups, e)?;
        let post = mrf::loopy_bp(&g, &config.bp).posteriors(&g, priors);
        Ok(val_aupr(val_ids, &post, labels))
    };
    for &r in &config.relations {
        let mut best = (score(&eps)?, eps.get(r));
        for &cand in &config.epsilon_grid {
            let mut trial = eps.clone();
            trial.set(r, cand);
            let s = score(&trial)?;
            if s > best.0 {
                best = (s, cand);
            }
        }
        eps.set(r, best.1);
    }
    Ok(eps)
}

/// Removes repeated roster entries, keeping the first occurrence.
fn dedup_roster(config: &ExperimentConfig) -> Result<ExperimentConfig> {
    if config.roster.is_empty() {
        return Err(EggsError::Config("model roster is empty".into()));
    }
    let mut roster = config.roster.clone();
    let mut seen = BTreeSet::new();
    roster.retain(|m| seen.insert(*m));
    Ok(ExperimentConfig { roster, ..config.clone() })
}

fn check_plan(messages: &[Message], plan: &SplitPlan) -> Result<()> {
    if plan.n_messages != messages.len() {
        return Err(EggsError::InvalidInput(format!(
            "split plan covers {} messages, dataset has {}",
            plan.n_messages,
            messages.len()
        )));
    }
    if !crate::data_model::is_chronological(messages) {
        return Err(EggsError::InvalidInput("messages must be sorted by (timestamp, id)".into()));
    }
    Ok(())
}

/// Source tag of a base model: "independent" for zero stacks, "sgl{k}" otherwise.
fn source_tag(stacks: usize) -> String {
    if stacks == 0 {
        "independent".into()
    } else {
        ModelSpec::Sgl(stacks).tag()
    }
}

/// Features of one subset's span, fitted on its training range.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetFeatures {
    pub subset: usize,
    /// Rows cover train, validation and test, in that order.
    pub matrix: FeatureMatrix,
    pub pagerank_converged: bool,
}

/// Fits the extractor on the training range and transforms the whole span
/// with training labels only.
pub fn featurize_subset(
    index: usize,
    subset: &Subset,
    messages: &[Message],
    follows: &[(String, String)],
    features: &FeatureConfig,
) -> Result<SubsetFeatures> {
    let local = &messages[subset.span().as_range()];
    let train = &local[..subset.train.len()];
    let extractor = FeatureExtractor::fit(features.clone(), train, follows);
    let matrix = extractor.transform(local, &crate::data_model::labels_of(train))?;
    Ok(SubsetFeatures {
        subset: index,
        matrix,
        pagerank_converged: extractor.graph.pagerank_converged,
    })
}

/// Everything fitted on one subset's training and validation ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetModels {
    pub subset: usize,
    pub independent: LinearModel,
    /// Stacked models by number of stacks.
    pub stacked: BTreeMap<usize, StackedModel>,
    /// Tuned epsilons by base model tag.
    pub epsilon: BTreeMap<String, EpsilonMap>,
    /// Rule weights by base model tag.
    pub rule_weights: BTreeMap<String, RuleWeights>,
    pub diagnostics: SubsetDiagnostics,
}

impl SubsetModels {
    fn predict(&self, stacks: usize, x: &FeatureMatrix, context: &RelationalContext) -> Option<Result<Predictions>> {
        if stacks == 0 {
            Some(self.independent.predict(x))
        } else {
            self.stacked.get(&stacks).map(|m| m.infer(x, context))
        }
    }
}

struct SubsetView<'a> {
    local: &'a [Message],
    n_train: usize,
    n_trval: usize,
    labels: Labels,
}

impl<'a> SubsetView<'a> {
    fn new(subset: &Subset, messages: &'a [Message], x: &FeatureMatrix) -> Result<SubsetView<'a>> {
        let local = &messages[subset.span().as_range()];
        if x.n_rows() != local.len() || x.row_ids.iter().zip(local).any(|(id, m)| *id != m.id) {
            return Err(EggsError::InvalidInput(format!(
                "feature rows do not match the {} messages of the subset",
                local.len()
            )));
        }
        Ok(SubsetView {
            local,
            n_train: subset.train.len(),
            n_trval: subset.train.len() + subset.validation.len(),
            labels: local.iter().filter_map(|m| m.label.map(|l| (m.id.clone(), l))).collect(),
        })
    }

    fn ids(&self, range: std::ops::Range<usize>) -> Vec<String> {
        self.local[range].iter().map(|m| m.id.clone()).collect()
    }
}

/// Tunes l2 per base model, epsilons for MRF roster entries and rule weights
/// for PSL entries, all by validation labels. Test labels are never read.
pub fn train_subset(
    subset: &Subset,
    messages: &[Message],
    features: &SubsetFeatures,
    config: &ExperimentConfig,
) -> Result<SubsetModels> {
    let index = features.subset;
    let view = SubsetView::new(subset, messages, &features.matrix)?;
    let (n_train, n_trval) = (view.n_train, view.n_trval);
    let train = &view.local[..n_train];
    let val_ids = view.ids(n_train..n_trval);
    let val_labels: Labels = val_ids.iter().filter_map(|id| view.labels.get(id).map(|&l| (id.clone(), l))).collect();
    let x_train = features.matrix.select_rows(0..n_train);
    let x_trval = features.matrix.select_rows(0..n_trval);
    let y_train = labels_vec(train)?;
    let grid = if config.l2_grid.is_empty() { vec![config.classifier.l2] } else { config.l2_grid.clone() };

    // l2 by validation AUPR
    let mut best: Option<(f64, f64, LinearModel)> = None;
    for &l2 in &grid {
        let m = classifier::train(&x_train, &y_train, &TrainConfig { l2, ..config.classifier })?;
        let s = val_aupr(&val_ids, &m.predict(&x_trval)?, &view.labels).unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
            best = Some((s, l2, m));
        }
    }
    let (_, l2, independent) = best.expect("non-empty grid");

    let ctx_train = RelationalContext::build(train, &config.relations);
    let ctx_trval = RelationalContext::build(&view.local[..n_trval], &config.relations);
    let mut models = SubsetModels {
        subset: index,
        diagnostics: SubsetDiagnostics {
            subset: index,
            n_train,
            n_validation: val_ids.len(),
            n_test: view.local.len() - n_trval,
            l2: BTreeMap::from([(source_tag(0), l2)]),
            classifier_converged: independent.converged,
            pagerank_converged: features.pagerank_converged,
            epsilon: BTreeMap::new(),
            bp_converged: BTreeMap::new(),
            rule_weights: BTreeMap::new(),
            map_converged: BTreeMap::new(),
            skipped: Vec::new(),
        },
        independent,
        stacked: BTreeMap::new(),
        epsilon: BTreeMap::new(),
        rule_weights: BTreeMap::new(),
    };

    for &spec in &config.roster {
        let k = spec.stacks();
        if k > 0 && !models.stacked.contains_key(&k) {
            // each stack depth gets its own l2, chosen like the independent one
            let mut best: Option<(f64, f64, StackedModel)> = None;
            let mut failure = None;
            for &l2 in &grid {
                let stack_cfg = StackConfig {
                    stacks: k,
                    relations: config.relations.clone(),
                    mode: config.ratio_mode,
                    classifier: TrainConfig { l2, ..config.classifier },
                };
                match crate::stacking::train_stacked(&x_train, &y_train, &ctx_train, &stack_cfg) {
                    Ok(m) => {
                        let s = val_aupr(&val_ids, &m.infer(&x_trval, &ctx_trval)?, &view.labels)
                            .unwrap_or(f64::NEG_INFINITY);
                        if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                            best = Some((s, l2, m));
                        }
                    }
                    Err(e) => failure = Some(e),
                }
            }
            match (best, failure) {
                (Some((_, l2, m)), _) => {
                    models.diagnostics.l2.insert(source_tag(k), l2);
                    models.stacked.insert(k, m);
                }
                (None, e) => {
                    let e = e.map(|e| e.to_string()).unwrap_or_default();
                    log::warn!("subset {index}: skipping {spec}: {e}");
                    models.diagnostics.skipped.push(format!("{spec}: {e}"));
                    continue;
                }
            }
        }
        let Some(val_priors) = models.predict(k, &x_trval, &ctx_trval) else {
            continue;
        };
        let source = source_tag(k);
        match spec.joint() {
            Joint::None => {}
            Joint::Mrf if !models.epsilon.contains_key(&source) => {
                let eps = tune_epsilon(config, &val_priors?, &ctx_trval.groups, &val_ids, &view.labels)?;
                models.diagnostics.epsilon.insert(source.clone(), eps.clone());
                models.epsilon.insert(source, eps);
            }
            Joint::Psl if !models.rule_weights.contains_key(&source) => {
                let weights = if config.learn_weights {
                    hlmrf::learn_weights(
                        &config.rule_weights,
                        &val_priors?,
                        &ctx_trval.groups,
                        &val_labels,
                        config.hinge_exponent,
                        &config.learn,
                    )?
                    .weights
                } else {
                    config.rule_weights.clone()
                };
                models.diagnostics.rule_weights.insert(source.clone(), weights.clone());
                models.rule_weights.insert(source, weights);
            }
            _ => {}
        }
    }
    Ok(models)
}

/// Test predictions of every roster model on one subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetPredictions {
    pub subset: usize,
    pub test_ids: Vec<String>,
    /// Test messages with no group connection to the training range.
    pub inductive: Vec<String>,
    /// Keyed by model tag.
    pub predictions: BTreeMap<String, Predictions>,
    pub diagnostics: SubsetDiagnostics,
}

/// Runs base models and joint inference over the whole span; priors of
/// training and validation messages are model predictions, never gold labels.
pub fn infer_subset(
    subset: &Subset,
    messages: &[Message],
    features: &SubsetFeatures,
    models: &SubsetModels,
    config: &ExperimentConfig,
) -> Result<SubsetPredictions> {
    let view = SubsetView::new(subset, messages, &features.matrix)?;
    let x_all = &features.matrix;
    let ctx_all = RelationalContext::build(view.local, &config.relations);
    let test_ids = view.ids(view.n_trval..view.local.len());
    let (inductive, _) = inductive_partition(&test_ids, &view.ids(0..view.n_train), &ctx_all.groups);
    let mut diagnostics = models.diagnostics.clone();
    let mut priors_by_stack: BTreeMap<usize, Predictions> = BTreeMap::new();
    let mut predictions = BTreeMap::new();
    for &spec in &config.roster {
        let k = spec.stacks();
        if let std::collections::btree_map::Entry::Vacant(slot) = priors_by_stack.entry(k) {
            match models.predict(k, x_all, &ctx_all) {
                Some(p) => {
                    slot.insert(p?);
                }
                None => continue,
            }
        }
        let priors = &priors_by_stack[&k];
        let source = source_tag(k);
        let preds = match spec.joint() {
            Joint::None => priors.clone(),
            Joint::Mrf => {
                let eps = models.epsilon.get(&source).unwrap_or(&config.epsilon);
                let g = mrf::build_factor_graph(&mrf::clamp_priors(priors), &ctx_all.groups, eps)?;
                let marg = mrf::loopy_bp(&g, &config.bp);
                diagnostics.bp_converged.insert(source, marg.converged);
                marg.posteriors(&g, priors)
            }
            Joint::Psl => {
                let weights = models.rule_weights.get(&source).unwrap_or(&config.rule_weights);
                let model = hlmrf::ground_rules(priors, &ctx_all.groups, weights, config.hinge_exponent)?;
                let result = hlmrf::map_inference(&model, &config.map);
                diagnostics.map_converged.insert(source, result.converged);
                hlmrf::psl_scores(&model, &result, priors)
            }
        };
        let test_preds: Predictions = test_ids.iter().map(|id| (id.clone(), preds[id])).collect();
        predictions.insert(spec.tag(), test_preds);
    }
    Ok(SubsetPredictions {
        subset: features.subset,
        test_ids,
        inductive,
        predictions,
        diagnostics,
    })
}

/// Scores concatenated test predictions. Models missing from any subset are
/// left out with a warning.
pub fn aggregate(
    messages: &[Message],
    plan: &SplitPlan,
    outputs: &[SubsetPredictions],
    config: &ExperimentConfig,
) -> Result<EvaluationReport> {
    let config = dedup_roster(config)?;
    check_plan(messages, plan)?;
    if outputs.len() != plan.n_subsets() {
        return Err(EggsError::InvalidInput(format!(
            "{} subset prediction sets for {} subsets",
            outputs.len(),
            plan.n_subsets()
        )));
    }
    let labels = crate::data_model::labels_of(messages);
    let test_ids: Vec<String> = outputs.iter().flat_map(|o| o.test_ids.iter().cloned()).collect();
    let inductive: BTreeSet<&String> = outputs.iter().flat_map(|o| o.inductive.iter()).collect();
    let (inductive_ids, transductive_ids): (Vec<String>, Vec<String>) =
        test_ids.iter().cloned().partition(|id| inductive.contains(id));
    let mut models = Vec::new();
    for &spec in &config.roster {
        let tag = spec.tag();
        if outputs.iter().any(|o| !o.predictions.contains_key(&tag)) {
            log::warn!("{spec} is missing from at least one subset; left out of the report");
            continue;
        }
        let all: Predictions = outputs.iter().flat_map(|o| o.predictions[&tag].clone()).collect();
        let per_subset = outputs
            .iter()
            .map(|o| Metrics::compute(&o.test_ids, &all, &labels).map(|m| m.aupr))
            .collect::<Result<_>>()?;
        models.push(ModelReport {
            model: spec,
            name: spec.to_string(),
            overall: Metrics::compute(&test_ids, &all, &labels)?,
            inductive: Metrics::compute(&inductive_ids, &all, &labels)?,
            transductive: Metrics::compute(&transductive_ids, &all, &labels)?,
            per_subset,
        });
    }
    let mut coverage = component_coverage(messages, &crate::data_model::build_groups(messages, &config.relations));
    for c in [&mut coverage.overall, &mut coverage.spam, &mut coverage.ham] {
        c.truncate(config.coverage_points);
    }
    Ok(EvaluationReport {
        n_messages: messages.len(),
        n_subsets: plan.n_subsets(),
        n_test: test_ids.len(),
        n_inductive: inductive_ids.len(),
        relations: config.relations.clone(),
        models,
        subsets: outputs.iter().map(|o| o.diagnostics.clone()).collect(),
        coverage,
    })
}

/// Runs the roster on every subset of `plan` over chronologically sorted
/// `messages`, then scores the concatenated test predictions.
pub fn evaluate_experiment(
    messages: &[Message],
    follows: &[(String, String)],
    plan: &SplitPlan,
    config: &ExperimentConfig,
) -> Result<EvaluationReport> {
    let config = dedup_roster(config)?;
    check_plan(messages, plan)?;
    let outputs: Vec<SubsetPredictions> = plan
        .subsets
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let features = featurize_subset(i, s, messages, follows, &config.features)?;
            let models = train_subset(s, messages, &features, &config)?;
            infer_subset(s, messages, &features, &models, &config)
        })
        .collect::<Result<_>>()?;
    aggregate(messages, plan, &outputs, &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_hand_example() {
        let ap = aupr(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_tied_rankings() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [true, true, false, false];
        assert_eq!(aupr(&s, &l).unwrap(), 1.0);
        assert_eq!(auroc(&s, &l).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 4], &l).unwrap(), 0.5);
        // all tied: one block, precision = prevalence
        assert!((aupr(&[0.3; 4], &l).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(aupr(&[0.1, 0.2], &[true, true]), Err(EggsError::Metric(_))));
        assert!(auroc(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn monotone_transform_invariance() {
        let s = [0.1, 0.4, 0.4, 0.8, 0.3, 0.95];
        let l = [false, true, false, true, false, true];
        let t: Vec<f64> = s.iter().map(|v: &f64| (5.0 * v).exp() - 3.0).collect();
        assert_eq!(aupr(&s, &l).unwrap(), aupr(&t, &l).unwrap());
        assert_eq!(auroc(&s, &l).unwrap(), auroc(&t, &l).unwrap());
    }

    fn group(rel: Relation, ids: &[&str]) -> Group {
        Group {
            relation: rel,
            key: ids.join(","),
            member_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn partition_cases() {
        let groups = vec![group(Relation::User, &["a", "t1"]), group(Relation::Text, &["t3", "t4"])];
        let (ind, trans) = inductive_partition(&strings(&["t1", "t2", "t3", "t4"]), &strings(&["a", "b"]), &groups);
        assert_eq!(trans, ["t1"]);
        assert_eq!(ind, ["t2", "t3", "t4"]);
    }

    fn msgs(n: usize) -> Vec<Message> {
        (0..n).map(|i| Message::new(format!("m{i}"), "u", "t")).collect()
    }

    #[test]
    fn coverage_cases() {
        let m = msgs(10);
        let ids: Vec<String> = m.iter().map(|x| x.id.clone()).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let one = component_coverage(&m, &[group(Relation::User, &refs)]);
        assert_eq!(one.overall, vec![(1, 1.0)]);
        let none = component_coverage(&m, &[]);
        assert_eq!(none.n_components, 10);
        assert!((none.overall[4].1 - 0.5).abs() < 1e-12);
        let two = component_coverage(&m, &[group(Relation::User, &refs[..6]), group(Relation::Text, &refs[6..])]);
        assert_eq!(two.overall, vec![(1, 0.6), (2, 1.0)]);
    }

    #[test]
    fn model_spec_round_trip() {
        for spec in ModelSpec::default_roster() {
            assert_eq!(spec.tag().parse::<ModelSpec>().unwrap(), spec);
        }
        assert_eq!("SGL(1)+MRF".replace(['(', ')'], "").parse::<ModelSpec>().unwrap(), ModelSpec::SglMrf(1));
        assert!("svm".parse::<ModelSpec>().is_err());
    }
}

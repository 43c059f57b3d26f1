//! Stacked graphical learning.
//!
//! Training data is cut into `K + 1` contiguous time slices. Submodel `f^0`
//! sees only the base features of slice 0; submodel `f^k` sees slice `k`'s
//! base features plus pseudo-relational ratios computed from the predictions
//! of the chain `f^0 .. f^{k-1}` rolled forward over that same slice.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, LinearModel, TrainConfig};
use crate::data_model::{build_groups, restrict_groups, Group, Label, Message, Predictions, Relation};
use crate::error::{EggsError, Result};
use crate::features::FeatureMatrix;

pub const STACK_FORMAT_VERSION: u32 = 1;

/// Ratio feature emitted for messages with no group of a relation.
pub const NEUTRAL_RATIO: f64 = 0.5;

pub fn pseudo_column(relation: Relation) -> &'static str {
    match relation {
        Relation::User => "USRatio",
        Relation::Text => "MMSRatio",
        Relation::Link => "LSRatio",
        Relation::Hashtag => "HSRatio",
        Relation::Mention => "MSRatio",
        Relation::Track => "TSRatio",
        Relation::UserHashtag => "UHSRatio",
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// Mean predicted probability of the other members.
    #[default]
    Soft,
    /// Fraction of other members predicted spam at threshold 0.5.
    Hard,
}

/// Groups together with the relations they were built for. A relation can be
/// present with no groups.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelationalContext {
    pub relations: Vec<Relation>,
    pub groups: Vec<Group>,
}

impl RelationalContext {
    pub fn build(messages: &[Message], relations: &[Relation]) -> Self {
        RelationalContext {
            relations: relations.to_vec(),
            groups: build_groups(messages, relations),
        }
    }

    pub fn restrict(&self, keep: impl Fn(&str) -> bool) -> Self {
        RelationalContext {
            relations: self.relations.clone(),
            groups: restrict_groups(&self.groups, keep),
        }
    }
}

/// Ratio features, one column per relation, rows aligned with the ids passed in.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoRelationalFeatures {
    pub relations: Vec<Relation>,
    pub rows: Vec<Vec<f64>>,
}

impl PseudoRelationalFeatures {
    pub fn column_names(&self) -> Vec<String> {
        self.relations.iter().map(|&r| pseudo_column(r).to_string()).collect()
    }
}

/// For each id and relation, the mean prediction over the other members of
/// every group of that relation containing the id (groups pooled, self
/// excluded). Members without a prediction are skipped.
pub fn compute_pseudo_features(
    ids: &[String],
    relations: &[Relation],
    groups: &[Group],
    predictions: &Predictions,
    mode: RatioMode,
) -> PseudoRelationalFeatures {
    let col: HashMap<Relation, usize> = relations.iter().enumerate().map(|(j, &r)| (r, j)).collect();
    let row: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let value = |id: &str| {
        predictions.get(id).map(|&p| match mode {
            RatioMode::Soft => p,
            RatioMode::Hard => (p >= 0.5) as u8 as f64,
        })
    };
    // (sum, count) over other members
    let mut acc = vec![vec![(0.0f64, 0usize); relations.len()]; ids.len()];
    for g in groups {
        let Some(&j) = col.get(&g.relation) else { continue };
        let vals: Vec<Option<f64>> = g.member_ids.iter().map(|m| value(m)).collect();
        let total: f64 = vals.iter().flatten().sum();
        let known = vals.iter().flatten().count();
        for (m, v) in g.member_ids.iter().zip(&vals) {
            let Some(&i) = row.get(m.as_str()) else { continue };
            let (s, c) = match v {
                Some(own) => (total - own, known - 1),
                None => (total, known),
            };
            acc[i][j].0 += s;
            acc[i][j].1 += c;
        }
    }
    let rows = acc
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|(s, c)| if c == 0 { NEUTRAL_RATIO } else { (s / c as f64).clamp(0.0, 1.0) })
                .collect()
        })
        .collect();
    PseudoRelationalFeatures {
        relations: relations.to_vec(),
        rows,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub stacks: usize,
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub mode: RatioMode,
    pub classifier: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub format_version: u32,
    pub relations: Vec<Relation>,
    pub mode: RatioMode,
    /// `f^0 .. f^K`.
    pub submodels: Vec<LinearModel>,
}

/// Contiguous slice boundaries `[b_0, b_1, .., b_{parts}]` with sizes differing by at most one.
pub fn even_slices(n: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|i| i * n / parts).collect()
}

/// Trains the chain on chronologically sorted rows `x` with labels `y`.
/// `context` holds groups over (at least) the training messages; each slice
/// only sees the groups restricted to itself.
pub fn train_stacked(x: &FeatureMatrix, y: &[Label], context: &RelationalContext, config: &StackConfig) -> Result<StackedModel> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(EggsError::InvalidInput(format!("{} labels for {n} rows", y.len())));
    }
    if config.stacks + 1 > n {
        return Err(EggsError::InvalidInput(format!(
            "{} stacks need at least {} training messages, got {n}",
            config.stacks,
            config.stacks + 1
        )));
    }
    check_relations(&config.relations, context)?;
    let bounds = even_slices(n, config.stacks + 1);
    let mut model = StackedModel {
        format_version: STACK_FORMAT_VERSION,
        relations: config.relations.clone(),
        mode: config.mode,
        submodels: Vec::with_capacity(config.stacks + 1),
    };
    for k in 0..=config.stacks {
        let rows: Vec<usize> = (bounds[k]..bounds[k + 1]).collect();
        let xk = x.select_rows(rows.iter().copied());
        let yk: Vec<Label> = rows.iter().map(|&i| y[i]).collect();
        let fk = if k == 0 {
            classifier::train(&xk, &yk, &config.classifier)?
        } else {
            let members: BTreeSet<&str> = xk.row_ids.iter().map(String::as_str).collect();
            let local = context.restrict(|id| members.contains(id));
            let prev = model.roll_forward(&xk, &local, k)?;
            let augmented = model.augment(&xk, &local, &prev)?;
            classifier::train(&augmented, &yk, &config.classifier)?
        };
        log::debug!("stack {k}: trained on {} messages", xk.n_rows());
        model.submodels.push(fk);
    }
    Ok(model)
}

fn check_relations(required: &[Relation], context: &RelationalContext) -> Result<()> {
    match required.iter().find(|r| !context.relations.contains(r)) {
        Some(r) => Err(EggsError::Config(format!("relation `{r}` is not available in the grouping context"))),
        None => Ok(()),
    }
}

impl StackedModel {
    pub fn stacks(&self) -> usize {
        self.submodels.len() - 1
    }

    fn augment(&self, x: &FeatureMatrix, context: &RelationalContext, prev: &Predictions) -> Result<FeatureMatrix> {
        let pseudo = compute_pseudo_features(&x.row_ids, &self.relations, &context.groups, prev, self.mode);
        x.with_dense_columns(&pseudo.column_names(), &pseudo.rows)
    }

    /// Predictions of `f^{upto-1}` after applying `f^0 .. f^{upto-1}` in turn.
    fn roll_forward(&self, x: &FeatureMatrix, context: &RelationalContext, upto: usize) -> Result<Predictions> {
        let mut preds = self.submodels[0].predict(x)?;
        for f in &self.submodels[1..upto] {
            let augmented = self.augment(x, context, &preds)?;
            preds = f.predict(&augmented)?;
        }
        Ok(preds)
    }

    /// Applies the full chain to every row of `x`. `context` should group the
    /// rows of `x` jointly (training and test messages together).
    pub fn infer(&self, x: &FeatureMatrix, context: &RelationalContext) -> Result<Predictions> {
        check_relations(&self.relations, context)?;
        self.roll_forward(x, context, self.submodels.len())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| EggsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<StackedModel> {
        let text = std::fs::read_to_string(path).map_err(|e| EggsError::io(path, e))?;
        let model: StackedModel = serde_json::from_str(&text)?;
        if model.format_version != STACK_FORMAT_VERSION {
            return Err(EggsError::Config(format!(
                "unsupported stacked model format version {}",
                model.format_version
            )));
        }
        if model.submodels.is_empty() {
            return Err(EggsError::Config("stacked model has no submodels".into()));
        }
        Ok(model)
    }
}

pub fn infer_stacked(model: &StackedModel, x: &FeatureMatrix, context: &RelationalContext) -> Result<Predictions> {
    model.infer(x, context)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnDictionary, ColumnKind};

    fn group(rel: Relation, ids: &[&str]) -> Group {
        Group {
            relation: rel,
            key: "k".into(),
            member_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn preds(pairs: &[(&str, f64)]) -> Predictions {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn ratio_excludes_self() {
        let p = preds(&[("m1", 0.9), ("m2", 0.1), ("m3", 0.7)]);
        let f = compute_pseudo_features(
            &ids(&["m1", "m2", "m3", "m4"]),
            &[Relation::User],
            &[group(Relation::User, &["m1", "m2", "m3"])],
            &p,
            RatioMode::Soft,
        );
        assert!((f.rows[0][0] - 0.4).abs() < 1e-12);
        assert_eq!(f.rows[3][0], NEUTRAL_RATIO);
        assert_eq!(f.column_names(), ["USRatio"]);
    }

    #[test]
    fn pair_group_copies_other_member() {
        let p = preds(&[("a", 0.2), ("b", 1.0)]);
        let f = compute_pseudo_features(&ids(&["a"]), &[Relation::Text], &[group(Relation::Text, &["a", "b"])], &p, RatioMode::Soft);
        assert_eq!(f.rows[0][0], 1.0);
    }

    #[test]
    fn groups_of_one_relation_are_pooled() {
        let p = preds(&[("a", 0.0), ("b", 1.0), ("c", 0.0), ("d", 0.0)]);
        let g = [group(Relation::Hashtag, &["a", "b"]), group(Relation::Hashtag, &["a", "c", "d"])];
        let f = compute_pseudo_features(&ids(&["a"]), &[Relation::Hashtag], &g, &p, RatioMode::Soft);
        assert!((f.rows[0][0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hard_mode_thresholds() {
        let p = preds(&[("a", 0.9), ("b", 0.6), ("c", 0.2)]);
        let f = compute_pseudo_features(&ids(&["a"]), &[Relation::User], &[group(Relation::User, &["a", "b", "c"])], &p, RatioMode::Hard);
        assert_eq!(f.rows[0][0], 0.5);
    }

    #[test]
    fn slices_are_even() {
        let b = even_slices(10, 3);
        assert_eq!(b, vec![0, 3, 6, 10]);
        for w in b.windows(2) {
            let len = w[1] - w[0];
            assert!((10 / 3..=10 / 3 + 1).contains(&len));
        }
    }

    fn toy(n: usize) -> (FeatureMatrix, Vec<Label>, Vec<Message>) {
        // one noisy feature; label equals the user's label
        let mut cols = ColumnDictionary::new();
        cols.push("x", ColumnKind::Dense);
        let mut x = FeatureMatrix::new(cols);
        let mut y = Vec::new();
        let mut msgs = Vec::new();
        for i in 0..n {
            let user = i % 20;
            let spam = user < 6;
            let noise = ((i * 7919) % 13) as f64 / 13.0;
            let v = if spam { 0.3 + noise } else { noise };
            let id = format!("m{i:04}");
            x.push_row(id.clone(), vec![(0, v)]).unwrap();
            y.push(if spam { Label::Spam } else { Label::Ham });
            msgs.push(Message::new(id, format!("u{user}"), format!("t{i}")));
        }
        (x, y, msgs)
    }

    #[test]
    fn k0_is_the_base_model() {
        let (x, y, msgs) = toy(200);
        let ctx = RelationalContext::build(&msgs, &[Relation::User]);
        let cfg = StackConfig {
            stacks: 0,
            relations: vec![Relation::User],
            mode: RatioMode::Soft,
            classifier: TrainConfig::default(),
        };
        let stacked = train_stacked(&x, &y, &ctx, &cfg).unwrap();
        let base = classifier::train(&x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(stacked.infer(&x, &ctx).unwrap(), base.predict(&x).unwrap());
    }

    #[test]
    fn user_ratio_gets_positive_weight() {
        let (x, y, msgs) = toy(400);
        let ctx = RelationalContext::build(&msgs, &[Relation::User]);
        let cfg = StackConfig {
            stacks: 1,
            relations: vec![Relation::User],
            mode: RatioMode::Soft,
            classifier: TrainConfig::default(),
        };
        let m = train_stacked(&x, &y, &ctx, &cfg).unwrap();
        assert_eq!(m.stacks(), 1);
        assert!(m.submodels[1].weight("USRatio").unwrap() > 0.0);
    }

    #[test]
    fn too_many_stacks_is_an_error() {
        let (x, y, msgs) = toy(2);
        let ctx = RelationalContext::build(&msgs, &[Relation::User]);
        let cfg = StackConfig {
            stacks: 2,
            relations: vec![Relation::User],
            mode: RatioMode::Soft,
            classifier: TrainConfig::default(),
        };
        assert!(train_stacked(&x, &y, &ctx, &cfg).is_err());
    }

    #[test]
    fn missing_relation_at_inference_is_an_error() {
        let (x, y, msgs) = toy(100);
        let ctx = RelationalContext::build(&msgs, &[Relation::User]);
        let cfg = StackConfig {
            stacks: 1,
            relations: vec![Relation::User],
            mode: RatioMode::Soft,
            classifier: TrainConfig::default(),
        };
        let m = train_stacked(&x, &y, &ctx, &cfg).unwrap();
        let other = RelationalContext::build(&msgs, &[Relation::Text]);
        assert!(matches!(m.infer(&x, &other), Err(EggsError::Config(_))));
    }

    #[test]
    fn identical_messages_get_identical_scores() {
        let (x, y, msgs) = toy(100);
        let ctx = RelationalContext::build(&msgs, &[Relation::User, Relation::Text]);
        let cfg = StackConfig {
            stacks: 1,
            relations: vec![Relation::User, Relation::Text],
            mode: RatioMode::Soft,
            classifier: TrainConfig::default(),
        };
        let m = train_stacked(&x, &y, &ctx, &cfg).unwrap();
        let mut cols = ColumnDictionary::new();
        cols.push("x", ColumnKind::Dense);
        let mut tx = FeatureMatrix::new(cols);
        tx.push_row("t1", vec![(0, 0.4)]).unwrap();
        tx.push_row("t2", vec![(0, 0.4)]).unwrap();
        let test = vec![Message::new("t1", "ua", "same text"), Message::new("t2", "ub", "same text")];
        let out = m.infer(&tx, &RelationalContext::build(&test, &[Relation::User, Relation::Text])).unwrap();
        assert_eq!(out["t1"], out["t2"]);
    }

    #[test]
    fn serde_round_trip() {
        let (x, y, msgs) = toy(100);
        let ctx = RelationalContext::build(&msgs, &[Relation::User]);
        let cfg = StackConfig {
            stacks: 1,
            relations: vec![Relation::User],
            mode: RatioMode::Soft,
            classifier: TrainConfig::default(),
        };
        let m = train_stacked(&x, &y, &ctx, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.json");
        m.save(&path).unwrap();
        let back = StackedModel::load(&path).unwrap();
        assert_eq!(back.infer(&x, &ctx).unwrap(), m.infer(&x, &ctx).unwrap());
    }
}

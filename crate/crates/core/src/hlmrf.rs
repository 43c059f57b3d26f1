//! Hinge-loss MRF over continuous spam scores in [0, 1].
//!
//! Four rule templates are grounded for every grouped message `e` and every
//! group (hub `r`) it belongs to:
//!
//! | rule | logical form                        | hinge `l`            |
//! |------|-------------------------------------|----------------------|
//! | a    | `!spam(e)`                          | `spam_e`             |
//! | b    | `prior(e) -> spam(e)`               | `prior_e - spam_e`   |
//! | c    | `hasRel(r,e) & spam(e) -> spamRel(r)` | `spam_e - spamRel_r` |
//! | d    | `hasRel(r,e) & spamRel(r) -> spam(e)` | `spamRel_r - spam_e` |
//!
//! Each potential is `w * max(0, l)^p` with `p` in {1, 2}; MAP inference
//! minimizes their sum over the unit box.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data_model::{Group, Labels, Predictions, Relation};
use crate::error::{EggsError, Result};
use crate::mrf::VarKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "rule", content = "relation", rename_all = "snake_case")]
pub enum Template {
    NegativePrior,
    PositivePrior,
    MessageToHub(Relation),
    HubToMessage(Relation),
}

/// Template weights. Relations without an explicit entry use `default_relational`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleWeights {
    pub negative_prior: f64,
    pub positive_prior: f64,
    #[serde(default)]
    pub message_to_hub: BTreeMap<Relation, f64>,
    #[serde(default)]
    pub hub_to_message: BTreeMap<Relation, f64>,
    pub default_relational: f64,
}

impl Default for RuleWeights {
    fn default() -> Self {
        RuleWeights {
            negative_prior: 1.0,
            positive_prior: 1.0,
            message_to_hub: BTreeMap::new(),
            hub_to_message: BTreeMap::new(),
            default_relational: 1.0,
        }
    }
}

impl RuleWeights {
    pub fn get(&self, t: Template) -> f64 {
        match t {
            Template::NegativePrior => self.negative_prior,
            Template::PositivePrior => self.positive_prior,
            Template::MessageToHub(r) => self.message_to_hub.get(&r).copied().unwrap_or(self.default_relational),
            Template::HubToMessage(r) => self.hub_to_message.get(&r).copied().unwrap_or(self.default_relational),
        }
    }

    pub fn set(&mut self, t: Template, w: f64) {
        match t {
            Template::NegativePrior => self.negative_prior = w,
            Template::PositivePrior => self.positive_prior = w,
            Template::MessageToHub(r) => {
                self.message_to_hub.insert(r, w);
            }
            Template::HubToMessage(r) => {
                self.hub_to_message.insert(r, w);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.negative_prior, self.positive_prior, self.default_relational]
            .into_iter()
            .chain(self.message_to_hub.values().copied())
            .chain(self.hub_to_message.values().copied());
        for w in all {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(EggsError::Config(format!("rule weights must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundHinge {
    /// `l(x) = constant + sum(coeff * x[var])`.
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
    pub weight: f64,
    pub exponent: u8,
    pub template: Template,
    /// Message variable and, for relational rules, hub variable.
    pub message: usize,
    pub hub: Option<usize>,
}

impl GroundHinge {
    pub fn linear(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    /// Distance to satisfaction raised to the exponent (unweighted).
    pub fn potential(&self, x: &[f64]) -> f64 {
        let d = self.linear(x).max(0.0);
        if self.exponent == 2 {
            d * d
        } else {
            d
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HlVariable {
    pub kind: VarKind,
    pub id: String,
    /// Starting point for inference: the prior for messages, the mean member
    /// prior for hubs.
    pub init: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundHingeModel {
    pub variables: Vec<HlVariable>,
    pub hinges: Vec<GroundHinge>,
    pub weights: RuleWeights,
    pub exponent: u8,
}

/// Grounds rules a–d for every grouped message; ungrouped messages are left out.
pub fn ground_rules(priors: &Predictions, groups: &[Group], weights: &RuleWeights, exponent: u8) -> Result<GroundHingeModel> {
    weights.validate()?;
    if exponent != 1 && exponent != 2 {
        return Err(EggsError::Config(format!("hinge exponent must be 1 or 2, got {exponent}")));
    }
    let grouped: BTreeSet<&str> = groups.iter().flat_map(|g| g.member_ids.iter().map(String::as_str)).collect();
    let mut variables = Vec::with_capacity(grouped.len() + groups.len());
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(grouped.len());
    let mut hinges = Vec::new();
    for id in grouped {
        let p = *priors
            .get(id)
            .ok_or_else(|| EggsError::InvalidInput(format!("no prior for grouped message `{id}`")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(EggsError::InvalidInput(format!("prior {p} for `{id}` outside [0, 1]")));
        }
        let v = variables.len();
        variables.push(HlVariable {
            kind: VarKind::Message,
            id: id.to_string(),
            init: p,
        });
        index.insert(id, v);
        hinges.push(GroundHinge {
            terms: vec![(v, 1.0)],
            constant: 0.0,
            weight: weights.negative_prior,
            exponent,
            template: Template::NegativePrior,
            message: v,
            hub: None,
        });
        hinges.push(GroundHinge {
            terms: vec![(v, -1.0)],
            constant: p,
            weight: weights.positive_prior,
            exponent,
            template: Template::PositivePrior,
            message: v,
            hub: None,
        });
    }
    for group in groups {
        let h = variables.len();
        let mean = group.member_ids.iter().map(|m| priors[m]).sum::<f64>() / group.len() as f64;
        variables.push(HlVariable {
            kind: VarKind::Hub,
            id: format!("{}:{}", group.relation, group.key),
            init: mean,
        });
        for m in &group.member_ids {
            let v = index[m.as_str()];
            let c = Template::MessageToHub(group.relation);
            let d = Template::HubToMessage(group.relation);
            hinges.push(GroundHinge {
                terms: vec![(v, 1.0), (h, -1.0)],
                constant: 0.0,
                weight: weights.get(c),
                exponent,
                template: c,
                message: v,
                hub: Some(h),
            });
            hinges.push(GroundHinge {
                terms: vec![(h, 1.0), (v, -1.0)],
                constant: 0.0,
                weight: weights.get(d),
                exponent,
                template: d,
                message: v,
                hub: Some(h),
            });
        }
    }
    Ok(GroundHingeModel {
        variables,
        hinges,
        weights: weights.clone(),
        exponent,
    })
}

impl GroundHingeModel {
    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn initial_point(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.init.clamp(0.0, 1.0)).collect()
    }

    pub fn set_weights(&mut self, weights: &RuleWeights) -> Result<()> {
        weights.validate()?;
        for h in &mut self.hinges {
            h.weight = weights.get(h.template);
        }
        self.weights = weights.clone();
        Ok(())
    }

    /// `sum(w_i * phi_i(x))`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.hinges.iter().map(|h| h.weight * h.potential(x)).sum()
    }

    /// Gradient for p = 2; a subgradient (zero at kinks) for p = 1.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for h in &self.hinges {
            let l = h.linear(x);
            if l <= 0.0 || h.weight == 0.0 {
                continue;
            }
            let scale = if h.exponent == 2 { 2.0 * h.weight * l } else { h.weight };
            for &(v, c) in &h.terms {
                g[v] += scale * c;
            }
        }
        g
    }

    /// Unweighted potential totals per template.
    pub fn template_totals(&self, x: &[f64]) -> BTreeMap<Template, f64> {
        let mut out = BTreeMap::new();
        for h in &self.hinges {
            *out.entry(h.template).or_insert(0.0) += h.potential(x);
        }
        out
    }

    /// Message-variable scores keyed by message id.
    pub fn message_scores(&self, x: &[f64]) -> Predictions {
        self.variables
            .iter()
            .zip(x)
            .filter(|(v, _)| v.kind == VarKind::Message)
            .map(|(v, &s)| (v.id.clone(), s))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-variable curvature bound `sum(w * p * |a_v| * |a|_1)`, used as a
    /// diagonal preconditioner.
    fn diagonal_bound(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_variables()];
        for h in &self.hinges {
            let l1: f64 = h.terms.iter().map(|(_, c)| c.abs()).sum();
            for &(v, c) in &h.terms {
                d[v] += h.weight * h.exponent as f64 * c.abs() * l1;
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            tol: 1e-6,
            max_iter: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// MAP state by diagonally scaled projected gradient descent from the
/// initial point. The step starts at 1 in the scaled metric and is halved
/// whenever a step fails to improve the objective.
///
/// Converged once no coordinate moves by `tol` or more in an accepted step.
/// For p = 1 the returned point is the best iterate seen.
pub fn map_inference(model: &GroundHingeModel, config: &MapConfig) -> MapResult {
    map_inference_fixed(model, config, &vec![None; model.n_variables()])
}

/// As [`map_inference`], with some variables pinned to given values.
pub fn map_inference_fixed(model: &GroundHingeModel, config: &MapConfig, fixed: &[Option<f64>]) -> MapResult {
    let n = model.n_variables();
    let mut x = model.initial_point();
    for (xi, f) in x.iter_mut().zip(fixed) {
        if let Some(v) = f {
            *xi = v.clamp(0.0, 1.0);
        }
    }
    let diag = model.diagonal_bound();
    let smooth = model.exponent == 2;
    let mut f = model.objective(&x);
    let mut best = (f, x.clone());
    let mut step = 1.0;
    let mut converged = n == 0;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    while !converged && iterations < config.max_iter {
        iterations += 1;
        let g = model.gradient(&x);
        let scale = if smooth { step } else { step / (iterations as f64).sqrt() };
        let mut moved: f64 = 0.0;
        for v in 0..n {
            trial[v] = if fixed[v].is_some() || diag[v] <= 0.0 {
                x[v]
            } else {
                (x[v] - scale * g[v] / diag[v]).clamp(0.0, 1.0)
            };
            moved = moved.max((trial[v] - x[v]).abs());
        }
        let ft = model.objective(&trial);
        if smooth && ft > f + 1e-15 * f.abs().max(1.0) {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
            continue;
        }
        std::mem::swap(&mut x, &mut trial);
        f = ft;
        if f < best.0 {
            best = (f, x.clone());
        }
        converged = moved < config.tol;
    }
    if smooth {
        best = (f, x);
    }
    MapResult {
        objective: best.0,
        x: best.1,
        converged,
        iterations,
    }
}

/// MAP score of a message that belongs to no group, where only rules a and b
/// apply. Matches what grounding the message on its own would give.
pub fn isolated_score(prior: f64, weights: &RuleWeights, exponent: u8) -> f64 {
    let (wn, wp) = (weights.negative_prior, weights.positive_prior);
    if exponent == 2 {
        if wn + wp == 0.0 {
            prior
        } else {
            wp * prior / (wn + wp)
        }
    } else if wp > wn {
        prior
    } else {
        0.0
    }
}

/// Scores for every id in `priors`: MAP values for grouped messages,
/// [`isolated_score`] for the rest.
pub fn psl_scores(model: &GroundHingeModel, result: &MapResult, priors: &Predictions) -> Predictions {
    let mut out: Predictions = priors
        .iter()
        .map(|(id, &p)| (id.clone(), isolated_score(p, &model.weights, model.exponent)))
        .collect();
    out.extend(model.message_scores(&result.x));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub map: MapConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            steps: 20,
            learning_rate: 1.0,
            map: MapConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedWeights {
    pub weights: RuleWeights,
    /// `sum_t w_t * (Phi_t(observed) - Phi_t(MAP))` before each step; non-negative.
    pub trace: Vec<f64>,
}

/// Approximate maximum-likelihood weights from labeled messages.
///
/// Each step moves every template weight along `Phi_t(MAP) - Phi_t(observed)`
/// (divided by the number of message variables) and projects onto `w >= 0`.
/// The observed state takes gold labels for labeled messages; hubs and
/// unlabeled messages are filled in by MAP with the labeled ones held fixed.
pub fn learn_weights(
    init: &RuleWeights,
    priors: &Predictions,
    groups: &[Group],
    labels: &Labels,
    exponent: u8,
    config: &LearnConfig,
) -> Result<LearnedWeights> {
    init.validate()?;
    let mut model = ground_rules(priors, groups, init, exponent)?;
    let fixed: Vec<Option<f64>> = model
        .variables
        .iter()
        .map(|v| match v.kind {
            VarKind::Message => labels.get(&v.id).map(|l| l.is_spam() as u8 as f64),
            VarKind::Hub => None,
        })
        .collect();
    if config.steps == 0 {
        return Ok(LearnedWeights {
            weights: init.clone(),
            trace: Vec::new(),
        });
    }
    if fixed.iter().all(Option::is_none) {
        log::warn!("no labeled messages among grouped messages; keeping initial rule weights");
        return Ok(LearnedWeights {
            weights: init.clone(),
            trace: Vec::new(),
        });
    }
    let n_messages = model.variables.iter().filter(|v| v.kind == VarKind::Message).count().max(1) as f64;
    let mut weights = init.clone();
    let templates: BTreeSet<Template> = model.hinges.iter().map(|h| h.template).collect();
    let mut trace = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let observed = map_inference_fixed(&model, &config.map, &fixed);
        let predicted = map_inference(&model, &config.map);
        let obs = model.template_totals(&observed.x);
        let pred = model.template_totals(&predicted.x);
        trace.push(templates.iter().map(|&t| weights.get(t) * (obs[&t] - pred[&t])).sum());
        for &t in &templates {
            let grad = (pred[&t] - obs[&t]) / n_messages;
            let w = (weights.get(t) + config.learning_rate * grad).max(0.0);
            weights.set(t, w);
        }
        model.set_weights(&weights)?;
    }
    Ok(LearnedWeights { weights, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::Label;

    fn group(rel: Relation, ids: &[&str]) -> Group {
        Group {
            relation: rel,
            key: "k".into(),
            member_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn priors(pairs: &[(&str, f64)]) -> Predictions {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn grounding_counts() {
        let p = priors(&[("a", 0.2), ("b", 0.5), ("c", 0.9)]);
        let m = ground_rules(&p, &[group(Relation::User, &["a", "b", "c"])], &RuleWeights::default(), 2).unwrap();
        assert_eq!(m.n_variables(), 4);
        assert_eq!(m.hinges.len(), 12);
        for t in [
            Template::NegativePrior,
            Template::PositivePrior,
            Template::MessageToHub(Relation::User),
            Template::HubToMessage(Relation::User),
        ] {
            assert_eq!(m.hinges.iter().filter(|h| h.template == t).count(), 3);
        }
    }

    #[test]
    fn hinge_values() {
        let p = priors(&[("a", 0.9), ("b", 0.1)]);
        let m = ground_rules(&p, &[group(Relation::User, &["a", "b"])], &RuleWeights::default(), 2).unwrap();
        // x = [a, b, hub]
        let x = [0.6, 0.7, 0.2];
        let b_rule = m.hinges.iter().find(|h| h.template == Template::PositivePrior && h.message == 0).unwrap();
        assert!((b_rule.linear(&x) - 0.3).abs() < 1e-12);
        assert!((b_rule.potential(&x) - 0.09).abs() < 1e-12);
        let d_rule = m
            .hinges
            .iter()
            .find(|h| h.template == Template::HubToMessage(Relation::User) && h.message == 1)
            .unwrap();
        assert!((d_rule.linear(&x) + 0.5).abs() < 1e-12);
        assert_eq!(d_rule.potential(&x), 0.0);
    }

    #[test]
    fn negative_weight_and_bad_exponent_rejected() {
        let p = priors(&[("a", 0.5), ("b", 0.5)]);
        let g = [group(Relation::User, &["a", "b"])];
        let w = RuleWeights {
            negative_prior: -1.0,
            ..RuleWeights::default()
        };
        assert!(matches!(ground_rules(&p, &g, &w, 2), Err(EggsError::Config(_))));
        assert!(ground_rules(&p, &g, &RuleWeights::default(), 3).is_err());
    }

    #[test]
    fn balanced_priors_split_the_difference() {
        // w s^2 + w (0.8 - s)^2 is minimized at s = 0.4
        let mut model = GroundHingeModel {
            variables: vec![HlVariable {
                kind: VarKind::Message,
                id: "a".into(),
                init: 0.8,
            }],
            hinges: Vec::new(),
            weights: RuleWeights::default(),
            exponent: 2,
        };
        model.hinges.push(GroundHinge {
            terms: vec![(0, 1.0)],
            constant: 0.0,
            weight: 1.0,
            exponent: 2,
            template: Template::NegativePrior,
            message: 0,
            hub: None,
        });
        model.hinges.push(GroundHinge {
            terms: vec![(0, -1.0)],
            constant: 0.8,
            weight: 1.0,
            exponent: 2,
            template: Template::PositivePrior,
            message: 0,
            hub: None,
        });
        let r = map_inference(&model, &MapConfig::default());
        assert!(r.converged);
        // grid oracle at 1e-4 resolution
        let grid_best = (0..=10_000)
            .map(|i| i as f64 * 1e-4)
            .min_by(|a, b| model.objective(&[*a]).total_cmp(&model.objective(&[*b])))
            .unwrap();
        assert!((grid_best - 0.4).abs() < 1e-12);
        assert!((r.x[0] - grid_best).abs() < 1e-4);
    }

    #[test]
    fn zero_prior_weight_drives_scores_to_zero() {
        let p = priors(&[("a", 0.9), ("b", 0.7), ("c", 0.95)]);
        let w = RuleWeights {
            positive_prior: 0.0,
            ..RuleWeights::default()
        };
        let m = ground_rules(&p, &[group(Relation::User, &["a", "b", "c"])], &w, 2).unwrap();
        let r = map_inference(&m, &MapConfig::default());
        assert!(r.x.iter().all(|&s| s < 1e-4), "{:?}", r.x);
    }

    #[test]
    fn map_stays_in_box_and_beats_random_points() {
        use rand::{Rng, SeedableRng};
        let p = priors(&[("a", 0.9), ("b", 0.15)]);
        let w = RuleWeights {
            negative_prior: 0.3,
            positive_prior: 1.7,
            default_relational: 0.8,
            ..RuleWeights::default()
        };
        let m = ground_rules(&p, &[group(Relation::Text, &["a", "b"])], &w, 2).unwrap();
        let r = map_inference(&m, &MapConfig::default());
        assert!(r.x.iter().all(|s| (0.0..=1.0).contains(s)));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let pt: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            assert!(r.objective <= m.objective(&pt) + 1e-9);
        }
    }

    #[test]
    fn p1_inference_stays_feasible() {
        let p = priors(&[("a", 0.9), ("b", 0.15), ("c", 0.5)]);
        let m = ground_rules(&p, &[group(Relation::User, &["a", "b", "c"])], &RuleWeights::default(), 1).unwrap();
        let r = map_inference(&m, &MapConfig::default());
        assert!(r.x.iter().all(|s| (0.0..=1.0).contains(s)));
        assert!(r.objective <= m.objective(&m.initial_point()) + 1e-12);
    }

    #[test]
    fn isolated_score_matches_grounded_single_message() {
        let w = RuleWeights {
            negative_prior: 0.7,
            positive_prior: 1.9,
            ..RuleWeights::default()
        };
        let p = priors(&[("a", 0.6), ("b", 0.6)]);
        let m = ground_rules(&p, &[group(Relation::User, &["a", "b"])], &w, 2).unwrap();
        let single = GroundHingeModel {
            variables: m.variables[..1].to_vec(),
            hinges: m.hinges.iter().filter(|h| h.message == 0 && h.hub.is_none()).cloned().collect(),
            ..m.clone()
        };
        let r = map_inference(&single, &MapConfig { tol: 1e-12, max_iter: 10_000 });
        assert!((r.x[0] - isolated_score(0.6, &w, 2)).abs() < 1e-9);
        let all = psl_scores(&single, &r, &priors(&[("a", 0.6), ("z", 0.3)]));
        assert!((all["z"] - 1.9 * 0.3 / 2.6).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_steps_return_init() {
        let p = priors(&[("a", 0.9), ("b", 0.15)]);
        let labels: Labels = [("a".to_string(), Label::Spam)].into_iter().collect();
        let cfg = LearnConfig {
            steps: 0,
            ..LearnConfig::default()
        };
        let out = learn_weights(&RuleWeights::default(), &p, &[group(Relation::User, &["a", "b"])], &labels, 2, &cfg).unwrap();
        assert_eq!(out.weights, RuleWeights::default());
    }

    #[test]
    fn no_labels_returns_init() {
        let p = priors(&[("a", 0.9), ("b", 0.15)]);
        let out = learn_weights(
            &RuleWeights::default(),
            &p,
            &[group(Relation::User, &["a", "b"])],
            &Labels::new(),
            2,
            &LearnConfig::default(),
        )
        .unwrap();
        assert_eq!(out.weights, RuleWeights::default());
        assert!(out.trace.is_empty());
    }

    #[test]
    fn prior_weight_grows_when_labels_match_priors() {
        let pairs: Vec<(String, f64)> = (0..12).map(|i| (format!("m{i:02}"), if i % 3 == 0 { 0.85 } else { 0.2 })).collect();
        let p: Predictions = pairs.iter().cloned().collect();
        let labels: Labels = pairs
            .iter()
            .map(|(k, v)| (k.clone(), if *v > 0.5 { Label::Spam } else { Label::Ham }))
            .collect();
        let ids: Vec<&str> = pairs.iter().map(|(k, _)| k.as_str()).collect();
        let groups = vec![group(Relation::User, &ids[..6]), group(Relation::Text, &ids[6..])];
        let cfg = LearnConfig {
            steps: 10,
            learning_rate: 0.5,
            ..LearnConfig::default()
        };
        let out = learn_weights(&RuleWeights::default(), &p, &groups, &labels, 2, &cfg).unwrap();
        let ratio = out.weights.positive_prior / out.weights.negative_prior.max(1e-12);
        assert!(ratio > 1.0, "{:?}", out.weights);
        assert!(out.trace.iter().all(|&t| t >= -1e-9));
    }
}

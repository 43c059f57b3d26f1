//! Hub-structured binary MRF over message and hub spam indicators.
//!
//! Each message variable carries its prior `(1 - p, p)` as a unary potential.
//! Each relation group becomes one hub variable with a uniform unary,
//! joined to every member by an agreement factor `[[1-e, e], [e, 1-e]]`.
//! The edge count per group is therefore the group size, not its square.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data_model::{Group, Predictions, Relation};
use crate::error::{EggsError, Result};

const PRIOR_CLAMP: f64 = 1e-6;
pub const EXACT_MAX_VARIABLES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Message,
    Hub,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableNode {
    pub kind: VarKind,
    pub id: String,
    /// Potential for (ham, spam).
    pub unary: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseFactor {
    pub message: usize,
    pub hub: usize,
    pub epsilon: f64,
    pub relation: Option<Relation>,
}

impl PairwiseFactor {
    /// `table[hub_state][message_state]`, state 1 = spam.
    pub fn table(&self) -> [[f64; 2]; 2] {
        let e = self.epsilon;
        [[1.0 - e, e], [e, 1.0 - e]]
    }
}

/// Agreement strength per relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonMap {
    pub default: f64,
    #[serde(default)]
    pub per_relation: BTreeMap<Relation, f64>,
}

impl Default for EpsilonMap {
    fn default() -> Self {
        EpsilonMap {
            default: 0.1,
            per_relation: BTreeMap::new(),
        }
    }
}

impl EpsilonMap {
    pub fn uniform(epsilon: f64) -> Self {
        EpsilonMap {
            default: epsilon,
            per_relation: BTreeMap::new(),
        }
    }

    pub fn get(&self, relation: Relation) -> f64 {
        self.per_relation.get(&relation).copied().unwrap_or(self.default)
    }

    pub fn set(&mut self, relation: Relation, epsilon: f64) {
        self.per_relation.insert(relation, epsilon);
    }
}

fn check_epsilon(e: f64) -> Result<()> {
    if e > 0.0 && e < 0.5 {
        Ok(())
    } else {
        Err(EggsError::Config(format!("epsilon must lie in (0, 0.5), got {e}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub variables: Vec<VariableNode>,
    pub factors: Vec<PairwiseFactor>,
    /// Factor ids touching each variable.
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, kind: VarKind, id: impl Into<String>, unary: [f64; 2]) -> Result<usize> {
        if unary.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
            return Err(EggsError::InvalidInput(format!(
                "unary potentials must be positive and finite, got {unary:?}"
            )));
        }
        self.variables.push(VariableNode {
            kind,
            id: id.into(),
            unary,
        });
        self.adjacency.push(Vec::new());
        Ok(self.variables.len() - 1)
    }

    pub fn add_factor(&mut self, message: usize, hub: usize, epsilon: f64, relation: Option<Relation>) -> Result<usize> {
        check_epsilon(epsilon)?;
        let kinds = (
            self.variables.get(message).map(|v| v.kind),
            self.variables.get(hub).map(|v| v.kind),
        );
        if kinds != (Some(VarKind::Message), Some(VarKind::Hub)) {
            return Err(EggsError::InvalidInput(
                "a pairwise factor joins one message variable and one hub variable".into(),
            ));
        }
        let f = self.factors.len();
        self.factors.push(PairwiseFactor {
            message,
            hub,
            epsilon,
            relation,
        });
        self.adjacency[message].push(f);
        self.adjacency[hub].push(f);
        Ok(f)
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factors_of(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    fn rebuild_adjacency(&mut self) {
        self.adjacency = vec![Vec::new(); self.variables.len()];
        for (f, fac) in self.factors.iter().enumerate() {
            self.adjacency[fac.message].push(f);
            self.adjacency[fac.hub].push(f);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            variables: &'a [VariableNode],
            factors: Vec<FactorDump>,
        }
        #[derive(Serialize)]
        struct FactorDump {
            message: usize,
            hub: usize,
            relation: Option<Relation>,
            epsilon: f64,
            table: [[f64; 2]; 2],
        }
        let dump = Dump {
            variables: &self.variables,
            factors: self
                .factors
                .iter()
                .map(|f| FactorDump {
                    message: f.message,
                    hub: f.hub,
                    relation: f.relation,
                    epsilon: f.epsilon,
                    table: f.table(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    pub fn from_json(text: &str) -> Result<FactorGraph> {
        let mut g: FactorGraph = serde_json::from_str(text)?;
        g.rebuild_adjacency();
        Ok(g)
    }
}

/// Priors moved into the range `build_factor_graph` takes without clamping.
pub fn clamp_priors(priors: &Predictions) -> Predictions {
    priors.iter().map(|(id, &p)| (id.clone(), p.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP))).collect()
}

/// Message variables (sorted by id) for every grouped message, one hub per group.
/// Ungrouped messages are left out; their posterior is their prior.
pub fn build_factor_graph(priors: &Predictions, groups: &[Group], epsilons: &EpsilonMap) -> Result<FactorGraph> {
    let grouped: BTreeSet<&str> = groups.iter().flat_map(|g| g.member_ids.iter().map(String::as_str)).collect();
    let mut g = FactorGraph::new();
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(grouped.len());
    let mut clamped = 0usize;
    for id in grouped {
        let p = *priors
            .get(id)
            .ok_or_else(|| EggsError::InvalidInput(format!("no prior for grouped message `{id}`")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(EggsError::InvalidInput(format!("prior {p} for `{id}` outside [0, 1]")));
        }
        let q = p.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
        clamped += (q != p) as usize;
        index.insert(id, g.add_variable(VarKind::Message, id, [1.0 - q, q])?);
    }
    if clamped > 0 {
        log::warn!("{clamped} priors clamped to [{PRIOR_CLAMP}, {}]", 1.0 - PRIOR_CLAMP);
    }
    for group in groups {
        let eps = epsilons.get(group.relation);
        check_epsilon(eps)?;
        let hub = g.add_variable(VarKind::Hub, format!("{}:{}", group.relation, group.key), [0.5, 0.5])?;
        for m in &group.member_ids {
            g.add_factor(index[m.as_str()], hub, eps, Some(group.relation))?;
        }
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpConfig {
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            max_iters: 100,
            damping: 0.5,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    /// Spam marginal per variable, aligned with `FactorGraph::variables`.
    pub spam: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl Marginals {
    /// Message-variable marginals keyed by message id.
    pub fn messages(&self, g: &FactorGraph) -> Predictions {
        g.variables
            .iter()
            .zip(&self.spam)
            .filter(|(v, _)| v.kind == VarKind::Message)
            .map(|(v, &p)| (v.id.clone(), p))
            .collect()
    }

    pub fn hubs(&self, g: &FactorGraph) -> BTreeMap<String, f64> {
        g.variables
            .iter()
            .zip(&self.spam)
            .filter(|(v, _)| v.kind == VarKind::Hub)
            .map(|(v, &p)| (v.id.clone(), p))
            .collect()
    }

    /// `priors` with every grouped message replaced by its marginal.
    pub fn posteriors(&self, g: &FactorGraph, priors: &Predictions) -> Predictions {
        let mut out = priors.clone();
        out.extend(self.messages(g));
        out
    }
}

fn normalize(m: [f64; 2]) -> [f64; 2] {
    let s = m[0] + m[1];
    [m[0] / s, m[1] / s]
}

/// Log-domain belief of variable `v`, optionally leaving out one incoming factor.
fn log_belief(g: &FactorGraph, v: usize, incoming: &[[[f64; 2]; 2]]) -> [f64; 2] {
    let var = &g.variables[v];
    let mut lb = [var.unary[0].ln(), var.unary[1].ln()];
    for &f in g.factors_of(v) {
        let m = incoming_for(g, f, v, incoming);
        lb[0] += m[0].ln();
        lb[1] += m[1].ln();
    }
    lb
}

/// Message arriving at `v` through factor `f`. `msgs[f][0]` travels
/// message→hub, `msgs[f][1]` hub→message.
fn incoming_for(g: &FactorGraph, f: usize, v: usize, msgs: &[[[f64; 2]; 2]]) -> [f64; 2] {
    if g.factors[f].hub == v {
        msgs[f][0]
    } else {
        msgs[f][1]
    }
}

/// Synchronous sum-product with damping `new = d * old + (1 - d) * computed`.
/// Converged once no message entry moves by `tol` or more in a round.
pub fn loopy_bp(g: &FactorGraph, config: &BpConfig) -> Marginals {
    let nf = g.n_factors();
    let mut msgs = vec![[[0.5; 2]; 2]; nf];
    let mut next = msgs.clone();
    let mut converged = nf == 0;
    let mut iterations = 0;
    let mut beliefs: Vec<[f64; 2]> = Vec::with_capacity(g.n_variables());
    while !converged && iterations < config.max_iters {
        iterations += 1;
        beliefs.clear();
        beliefs.extend((0..g.n_variables()).map(|v| log_belief(g, v, &msgs)));
        let mut delta: f64 = 0.0;
        for (f, fac) in g.factors.iter().enumerate() {
            let table = fac.table();
            for (dir, from) in [fac.message, fac.hub].into_iter().enumerate() {
                // cavity: belief of `from` without what `to` sent it
                let back = incoming_for(g, f, from, &msgs);
                let cav = [beliefs[from][0] - back[0].ln(), beliefs[from][1] - back[1].ln()];
                let shift = cav[0].max(cav[1]);
                let w = [(cav[0] - shift).exp(), (cav[1] - shift).exp()];
                // table is symmetric, so orientation does not matter
                let out = normalize([
                    w[0] * table[0][0] + w[1] * table[1][0],
                    w[0] * table[0][1] + w[1] * table[1][1],
                ]);
                let old = msgs[f][dir];
                let damped = normalize([
                    config.damping * old[0] + (1.0 - config.damping) * out[0],
                    config.damping * old[1] + (1.0 - config.damping) * out[1],
                ]);
                delta = delta.max((damped[0] - old[0]).abs()).max((damped[1] - old[1]).abs());
                next[f][dir] = damped;
            }
        }
        std::mem::swap(&mut msgs, &mut next);
        converged = delta < config.tol;
    }
    let spam = (0..g.n_variables())
        .map(|v| {
            let lb = log_belief(g, v, &msgs);
            let shift = lb[0].max(lb[1]);
            let b = normalize([(lb[0] - shift).exp(), (lb[1] - shift).exp()]);
            b[1]
        })
        .collect();
    Marginals {
        spam,
        converged,
        iterations,
    }
}

/// Brute-force marginals over all `2^n` joint states.
pub fn exact_marginals(g: &FactorGraph) -> Result<Marginals> {
    let n = g.n_variables();
    if n > EXACT_MAX_VARIABLES {
        return Err(EggsError::InvalidInput(format!(
            "exact enumeration limited to {EXACT_MAX_VARIABLES} variables, graph has {n}"
        )));
    }
    let log_unary: Vec<[f64; 2]> = g.variables.iter().map(|v| [v.unary[0].ln(), v.unary[1].ln()]).collect();
    let log_tables: Vec<[[f64; 2]; 2]> = g
        .factors
        .iter()
        .map(|f| {
            let t = f.table();
            [[t[0][0].ln(), t[0][1].ln()], [t[1][0].ln(), t[1][1].ln()]]
        })
        .collect();
    let states = 1usize << n;
    let mut logs = Vec::with_capacity(states);
    for s in 0..states {
        let bit = |v: usize| (s >> v) & 1;
        let mut lp: f64 = (0..n).map(|v| log_unary[v][bit(v)]).sum();
        for (f, fac) in g.factors.iter().enumerate() {
            lp += log_tables[f][bit(fac.hub)][bit(fac.message)];
        }
        logs.push(lp);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut spam = vec![0.0; n];
    for (s, lp) in logs.into_iter().enumerate() {
        let w = (lp - max).exp();
        z += w;
        for (v, acc) in spam.iter_mut().enumerate() {
            if (s >> v) & 1 == 1 {
                *acc += w;
            }
        }
    }
    for p in spam.iter_mut() {
        *p /= z;
    }
    Ok(Marginals {
        spam,
        converged: true,
        iterations: 0,
    })
}

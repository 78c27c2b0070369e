//! Event queries and exact inference by joint enumeration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::topological_order;
use crate::model::{InfluenceDiagram, ModelError, NodeId, NodeKind};

/// Default cap on the number of joint states enumerated.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Displayed probabilities are rounded to this many decimals.
pub const DISPLAY_DECIMALS: i32 = 3;

/// A conjunction of `node = category` literals.
pub type Conjunction = BTreeMap<NodeId, String>;

/// An event in disjunctive normal form. An empty conjunction is always true;
/// an empty disjunction is always false.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Event(pub Vec<Conjunction>);

impl Event {
    pub fn always() -> Self {
        Event(vec![Conjunction::new()])
    }

    pub fn literal(node: &str, category: &str) -> Self {
        Event(vec![Conjunction::from([(NodeId::new(node), category.to_string())])])
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.0.iter().flat_map(|c| c.keys())
    }

    /// Resolves every literal to `(node, category index)`.
    pub fn compile(&self, diagram: &InfluenceDiagram) -> Result<Vec<Vec<(NodeId, usize)>>, ModelError> {
        self.0
            .iter()
            .map(|conj| {
                conj.iter()
                    .map(|(n, c)| Ok((n.clone(), diagram.category_index(n, c)?)))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDefinition {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub event: Event,
    pub scenario_node: NodeId,
    /// Category of the scenario node meaning "test adopted".
    pub with: String,
    /// Category of the scenario node meaning "current pathway".
    pub without: String,
    /// Short labels for input cells, keyed by cell key with the scenario node
    /// left out of the parent assignment.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

impl QueryDefinition {
    /// Human-readable problems with the definition; empty when valid.
    pub fn problems(&self, diagram: &InfluenceDiagram) -> Vec<String> {
        let mut out = Vec::new();
        match diagram.nodes.get(&self.scenario_node) {
            None => out.push(format!("scenario node `{}` does not exist", self.scenario_node)),
            Some(n) if n.kind != NodeKind::Decision => {
                out.push(format!("scenario node `{}` is not a decision node", self.scenario_node))
            }
            Some(n) => {
                for c in [&self.with, &self.without] {
                    if n.category_index(c).is_none() {
                        out.push(format!("scenario node has no category `{c}`"));
                    }
                }
            }
        }
        for conj in &self.event.0 {
            for (node, cat) in conj {
                match diagram.nodes.get(node) {
                    None => out.push(format!("event names unknown node `{node}`")),
                    Some(n) if n.category_index(cat).is_none() => {
                        out.push(format!("node `{node}` has no category `{cat}`"))
                    }
                    _ => {}
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("joint state space has {states} states, above the cap of {cap}")]
    StateSpaceTooLarge { states: f64, cap: usize },
    #[error("decision node `{0}` has no assigned value")]
    UnassignedDecision(NodeId),
    #[error("node `{node}` has no CPT row for {assignment:?}")]
    MissingRow { node: NodeId, assignment: Vec<usize> },
    #[error("no query named `{0}`")]
    MissingQuery(String),
}

/// Joint distribution over decision and chance nodes with decisions clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    /// Node order of every assignment vector (topological).
    pub nodes: Vec<NodeId>,
    pub probabilities: BTreeMap<Vec<usize>, f64>,
}

impl JointDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    pub fn probability_of(&self, event: &Event, diagram: &InfluenceDiagram) -> Result<f64, QueryError> {
        let compiled = event.compile(diagram)?;
        let pos: BTreeMap<&NodeId, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let mut literals = Vec::with_capacity(compiled.len());
        for conj in &compiled {
            let mut lits = Vec::with_capacity(conj.len());
            for (n, c) in conj {
                let p = *pos.get(n).ok_or_else(|| ModelError::UnknownNode(n.clone()))?;
                lits.push((p, *c));
            }
            literals.push(lits);
        }
        Ok(self
            .probabilities
            .iter()
            .filter(|(s, _)| literals.iter().any(|conj| conj.iter().all(|&(p, c)| s[p] == c)))
            .map(|(_, p)| p)
            .sum())
    }
}

/// Enumerates every joint state at best-estimate CPT values.
pub fn enumerate_joint(
    diagram: &InfluenceDiagram,
    decisions: &BTreeMap<NodeId, usize>,
) -> Result<JointDistribution, QueryError> {
    enumerate_joint_capped(diagram, decisions, DEFAULT_STATE_CAP)
}

pub fn enumerate_joint_capped(
    diagram: &InfluenceDiagram,
    decisions: &BTreeMap<NodeId, usize>,
    cap: usize,
) -> Result<JointDistribution, QueryError> {
    let order: Vec<NodeId> = topological_order(diagram)?
        .into_iter()
        .filter(|id| diagram.nodes[id].kind != NodeKind::Value)
        .collect();
    let pos: BTreeMap<&NodeId, usize> = order.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut states = 1.0f64;
    for id in &order {
        let n = &diagram.nodes[id];
        if n.kind == NodeKind::Decision {
            if !decisions.contains_key(id) {
                return Err(QueryError::UnassignedDecision(id.clone()));
            }
        } else {
            states *= n.categories.len() as f64;
        }
    }
    if states > cap as f64 {
        return Err(QueryError::StateSpaceTooLarge { states, cap });
    }

    let mut tables: Vec<Option<NodeTable>> = Vec::new();
    for id in &order {
        let n = &diagram.nodes[id];
        if n.kind == NodeKind::Decision {
            tables.push(None);
            continue;
        }
        let parent_pos: Vec<usize> = n.parents.iter().map(|p| pos[p]).collect();
        let cpt = diagram.cpts.get(id);
        let arities: Vec<usize> = n.parents.iter().map(|p| diagram.nodes[p].categories.len()).collect();
        let mut rows = BTreeMap::new();
        for a in crate::model::assignments(&arities) {
            if let Some(row) = cpt.and_then(|c| c.row(&a)) {
                rows.insert(a, row.best_estimates());
            }
        }
        tables.push(Some((parent_pos, rows)));
    }

    let mut probabilities = BTreeMap::new();
    let mut state = vec![0usize; order.len()];
    enumerate_from(0, 1.0, &order, decisions, &tables, &mut state, &mut probabilities)?;
    Ok(JointDistribution {
        nodes: order,
        probabilities,
    })
}

/// Parent positions in enumeration order, and resolved rows keyed by parent assignment.
type NodeTable = (Vec<usize>, BTreeMap<Vec<usize>, Vec<f64>>);

fn enumerate_from(
    depth: usize,
    weight: f64,
    order: &[NodeId],
    decisions: &BTreeMap<NodeId, usize>,
    tables: &[Option<NodeTable>],
    state: &mut Vec<usize>,
    out: &mut BTreeMap<Vec<usize>, f64>,
) -> Result<(), QueryError> {
    if depth == order.len() {
        out.insert(state.clone(), weight);
        return Ok(());
    }
    match &tables[depth] {
        None => {
            state[depth] = decisions[&order[depth]];
            enumerate_from(depth + 1, weight, order, decisions, tables, state, out)
        }
        Some((parent_pos, rows)) => {
            let key: Vec<usize> = parent_pos.iter().map(|&p| state[p]).collect();
            let row = rows.get(&key).ok_or_else(|| QueryError::MissingRow {
                node: order[depth].clone(),
                assignment: key.clone(),
            })?;
            for (c, p) in row.iter().enumerate() {
                state[depth] = c;
                enumerate_from(depth + 1, weight * p, order, decisions, tables, state, out)?;
            }
            Ok(())
        }
    }
}

/// Probability of the query event with the scenario node set to `decision`.
pub fn query_probability(
    diagram: &InfluenceDiagram,
    query: &QueryDefinition,
    decision: &str,
) -> Result<f64, QueryError> {
    let value = diagram.category_index(&query.scenario_node, decision)?;
    let decisions = BTreeMap::from([(query.scenario_node.clone(), value)]);
    let relevant = relevant_subdiagram(diagram, &query.event, &query.scenario_node);
    let joint = enumerate_joint(&relevant, &decisions)?;
    joint.probability_of(&query.event, &relevant)
}

/// Restricts the diagram to the ancestors of the event's nodes. Nodes outside
/// that set sum out to one, so the event probability is unchanged.
pub fn relevant_subdiagram(diagram: &InfluenceDiagram, event: &Event, scenario: &NodeId) -> InfluenceDiagram {
    let mut keep: BTreeSet<NodeId> = BTreeSet::new();
    let mut stack: Vec<NodeId> = event.nodes().cloned().collect();
    stack.push(scenario.clone());
    while let Some(id) = stack.pop() {
        if let Some(n) = diagram.nodes.get(&id) {
            if keep.insert(id) {
                stack.extend(n.parents.iter().cloned());
            }
        }
    }
    let mut out = diagram.clone();
    out.nodes.retain(|id, _| keep.contains(id));
    out.cpts.retain(|id, _| keep.contains(id));
    out.queries.clear();
    out
}

/// `(p_without - p_with) / p_without`, undefined when `p_without` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduction {
    Value(f64),
    NotApplicable,
}

impl Reduction {
    pub fn between(p_with: f64, p_without: f64) -> Self {
        if p_without > 0.0 {
            Reduction::Value((p_without - p_with) / p_without)
        } else {
            Reduction::NotApplicable
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Reduction::Value(v) => Some(*v),
            Reduction::NotApplicable => None,
        }
    }
}

impl Serialize for Reduction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Reduction::Value(v) => s.serialize_f64(*v),
            Reduction::NotApplicable => s.serialize_str("not-applicable"),
        }
    }
}

impl<'de> Deserialize<'de> for Reduction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Reduction::Value(v)),
            Raw::Text(t) if t == "not-applicable" => Ok(Reduction::NotApplicable),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected reduction `{t}`"))),
        }
    }
}

pub fn round_display(p: f64) -> f64 {
    let scale = 10f64.powi(DISPLAY_DECIMALS);
    (p * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub name: String,
    pub p_with_test: f64,
    pub p_without_test: f64,
    pub reduction: Reduction,
    /// Reduction between the probabilities as displayed (rounded to three
    /// decimals), which is how such figures are usually quoted.
    pub displayed_reduction: Reduction,
}

impl QueryResult {
    pub fn new(name: &str, p_with_test: f64, p_without_test: f64) -> Self {
        QueryResult {
            name: name.to_string(),
            p_with_test,
            p_without_test,
            reduction: Reduction::between(p_with_test, p_without_test),
            displayed_reduction: Reduction::between(round_display(p_with_test), round_display(p_without_test)),
        }
    }
}

pub fn run_query(diagram: &InfluenceDiagram, query: &QueryDefinition) -> Result<QueryResult, QueryError> {
    let with = query_probability(diagram, query, &query.with)?;
    let without = query_probability(diagram, query, &query.without)?;
    Ok(QueryResult::new(&query.name, with, without))
}

/// Runs every query the diagram defines, in definition order.
pub fn run_named_queries(diagram: &InfluenceDiagram) -> Result<Vec<QueryResult>, QueryError> {
    diagram.queries.iter().map(|q| run_query(diagram, q)).collect()
}

/// Runs the named queries only; fails if any is missing.
pub fn run_queries_named(diagram: &InfluenceDiagram, names: &[&str]) -> Result<Vec<QueryResult>, QueryError> {
    names
        .iter()
        .map(|n| {
            let q = diagram.query(n).ok_or_else(|| QueryError::MissingQuery(n.to_string()))?;
            run_query(diagram, q)
        })
        .collect()
}

//! Model file format (`pathwise-model/1`).
//!
//! A model is one JSON document:
//!
//! ```json
//! {
//!   "schema_version": "pathwise-model/1",
//!   "nodes": [{"id": "X1", "kind": "chance", "categories": ["yes", "no"]}],
//!   "cpts": [{"node": "X1", "rows": [{"given": {}, "p": [
//!       {"q05": 0.4, "best": 0.45, "q95": 0.55},
//!       {"remainder": true}
//!   ]}]}]
//! }
//! ```
//!
//! CPT cells are written as a bare `0` or `1` (structural), `{"value": p}`
//! (a fixed derived probability), `{"q05", "best", "q95"}` (an elicited
//! judgement, optionally with `"best_is": "mode"`) or `{"remainder": true}`,
//! which may carry the printed judgement for reference.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::model::{
    validate, BestIs, Cpt, CptEntry, CptRow, ElicitedTriple, InfluenceDiagram, Node, NodeId,
    NodeKind, ReductionStep, Violation,
};
use crate::query::QueryDefinition;

pub const SCHEMA_VERSION: &str = "pathwise-model/1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelFileError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version `{0}` (expected `{SCHEMA_VERSION}`)")]
    Schema(String),
    #[error("{location}: {message}")]
    Structure { location: String, message: String },
    #[error("model has {} violation(s): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    metadata: Value,
    nodes: Vec<NodeSpec>,
    #[serde(default)]
    cpts: Vec<CptSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    queries: Vec<QueryDefinition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    reduction_script: Vec<ReductionStep>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSpec {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    kind: NodeKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    parents: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CptSpec {
    node: String,
    #[serde(default)]
    rows: Vec<RowSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    otherwise: Option<Vec<EntrySpec>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowSpec {
    given: BTreeMap<String, String>,
    p: Vec<EntrySpec>,
}

#[derive(Debug)]
struct EntrySpec(CptEntry);

fn triple_fields(t: &ElicitedTriple, map: &mut Map<String, Value>) {
    map.insert("q05".into(), Value::from(t.q05));
    map.insert("best".into(), Value::from(t.best));
    map.insert("q95".into(), Value::from(t.q95));
    if t.best_is == BestIs::Mode {
        map.insert("best_is".into(), Value::from("mode"));
    }
}

impl Serialize for EntrySpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let value = match &self.0 {
            CptEntry::Structural(p) => Value::from(if *p == 1.0 { 1u8 } else { 0u8 }),
            CptEntry::Fixed(p) => {
                let mut m = Map::new();
                m.insert("value".into(), Value::from(*p));
                Value::Object(m)
            }
            CptEntry::Elicited(t) => {
                let mut m = Map::new();
                triple_fields(t, &mut m);
                Value::Object(m)
            }
            CptEntry::Remainder(printed) => {
                let mut m = Map::new();
                m.insert("remainder".into(), Value::Bool(true));
                if let Some(t) = printed {
                    triple_fields(t, &mut m);
                }
                Value::Object(m)
            }
        };
        value.serialize(s)
    }
}

fn number<E: serde::de::Error>(m: &Map<String, Value>, key: &str) -> Result<Option<f64>, E> {
    match m.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| E::custom(format!("`{key}` must be a number"))),
    }
}

fn triple_from<E: serde::de::Error>(m: &Map<String, Value>) -> Result<Option<ElicitedTriple>, E> {
    let parts = (number::<E>(m, "q05")?, number::<E>(m, "best")?, number::<E>(m, "q95")?);
    let best_is = match m.get("best_is").map(|v| v.as_str()) {
        None => BestIs::Median,
        Some(Some("median")) => BestIs::Median,
        Some(Some("mode")) => BestIs::Mode,
        Some(_) => return Err(E::custom("`best_is` must be \"median\" or \"mode\"")),
    };
    match parts {
        (Some(q05), Some(best), Some(q95)) => Ok(Some(ElicitedTriple { q05, best, q95, best_is })),
        (None, None, None) if !m.contains_key("best_is") => Ok(None),
        _ => Err(E::custom("a judgement needs all of `q05`, `best` and `q95`")),
    }
}

impl<'de> Deserialize<'de> for EntrySpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(d)?;
        match value {
            Value::Number(n) => {
                let p = n.as_f64().unwrap_or(f64::NAN);
                if p == 0.0 || p == 1.0 {
                    Ok(EntrySpec(CptEntry::Structural(p)))
                } else {
                    Err(D::Error::custom(format!(
                        "bare numbers are structural and must be 0 or 1, got {p}; write {{\"value\": {p}}} for a fixed probability"
                    )))
                }
            }
            Value::Object(m) => {
                const KNOWN: [&str; 6] = ["q05", "best", "q95", "best_is", "remainder", "value"];
                if let Some(k) = m.keys().find(|k| !KNOWN.contains(&k.as_str())) {
                    return Err(D::Error::custom(format!("unknown cell field `{k}`")));
                }
                if let Some(v) = m.get("value") {
                    if m.len() != 1 {
                        return Err(D::Error::custom("a fixed cell holds only `value`"));
                    }
                    let p = v.as_f64().ok_or_else(|| D::Error::custom("`value` must be a number"))?;
                    return Ok(EntrySpec(CptEntry::Fixed(p)));
                }
                match m.get("remainder") {
                    Some(Value::Bool(true)) => Ok(EntrySpec(CptEntry::Remainder(triple_from(&m)?))),
                    Some(_) => Err(D::Error::custom("`remainder` must be true when present")),
                    None => triple_from(&m)?
                        .map(|t| EntrySpec(CptEntry::Elicited(t)))
                        .ok_or_else(|| D::Error::custom("a judgement needs `q05`, `best` and `q95`")),
                }
            }
            other => Err(D::Error::custom(format!("unexpected cell {other}"))),
        }
    }
}

fn structure(location: impl Into<String>, message: impl Into<String>) -> ModelFileError {
    ModelFileError::Structure {
        location: location.into(),
        message: message.into(),
    }
}

fn from_file(file: ModelFile) -> Result<InfluenceDiagram, ModelFileError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(ModelFileError::Schema(file.schema_version));
    }
    let mut d = InfluenceDiagram::new();
    for n in file.nodes {
        let node = Node {
            id: NodeId::new(n.id),
            kind: n.kind,
            label: n.label,
            categories: n.categories,
            parents: n.parents.into_iter().map(NodeId::new).collect(),
        };
        let id = node.id.clone();
        d.add_node(node)
            .map_err(|e| structure(format!("node {id}"), e.to_string()))?;
    }
    for spec in file.cpts {
        let id = NodeId::new(&spec.node);
        let node = d
            .nodes
            .get(&id)
            .ok_or_else(|| structure(format!("cpt {id}"), "table for an unknown node"))?;
        if d.cpts.contains_key(&id) {
            return Err(structure(format!("cpt {id}"), "node has two tables"));
        }
        let mut cpt = Cpt::default();
        for row in spec.rows {
            let location = format!(
                "cpt {id} row {{{}}}",
                row.given.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
            );
            if row.given.len() != node.parents.len() || node.parents.iter().any(|p| !row.given.contains_key(p.as_str())) {
                return Err(structure(location, "`given` must name every parent exactly once"));
            }
            let mut key = Vec::with_capacity(node.parents.len());
            for p in &node.parents {
                let cat = &row.given[p.as_str()];
                let c = d
                    .category_index(p, cat)
                    .map_err(|e| structure(&location, e.to_string()))?;
                key.push(c);
            }
            let entries = row.p.into_iter().map(|e| e.0).collect();
            if cpt.rows.insert(key, CptRow::new(entries)).is_some() {
                return Err(structure(location, "duplicate row"));
            }
        }
        cpt.otherwise = spec.otherwise.map(|o| CptRow::new(o.into_iter().map(|e| e.0).collect()));
        d.cpts.insert(id, cpt);
    }
    d.queries = file.queries;
    d.reduction_script = file.reduction_script;
    d.metadata = file.metadata;
    Ok(d)
}

/// Parses a model without checking diagram invariants.
pub fn parse_model_unchecked(text: &str) -> Result<InfluenceDiagram, ModelFileError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelFileError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_file(file)
}

/// Parses and validates a model.
pub fn parse_model(text: &str) -> Result<InfluenceDiagram, ModelFileError> {
    let d = parse_model_unchecked(text)?;
    let violations = validate(&d);
    if violations.is_empty() {
        Ok(d)
    } else {
        Err(ModelFileError::Validation(violations))
    }
}

fn to_file(d: &InfluenceDiagram) -> ModelFile {
    let order = crate::graph::topological_order(d).unwrap_or_else(|_| d.nodes.keys().cloned().collect());
    let nodes = order
        .iter()
        .map(|id| {
            let n = &d.nodes[id];
            NodeSpec {
                id: n.id.to_string(),
                label: n.label.clone(),
                kind: n.kind,
                categories: n.categories.clone(),
                parents: n.parents.iter().map(|p| p.to_string()).collect(),
            }
        })
        .collect();
    let cpts = order
        .iter()
        .filter_map(|id| d.cpts.get(id).map(|c| (id, c)))
        .map(|(id, cpt)| {
            let node = &d.nodes[id];
            let rows = cpt
                .rows
                .iter()
                .map(|(key, row)| RowSpec {
                    given: node
                        .parents
                        .iter()
                        .zip(key)
                        .map(|(p, &c)| {
                            let cat = d.nodes.get(p).and_then(|n| n.categories.get(c)).cloned().unwrap_or_default();
                            (p.to_string(), cat)
                        })
                        .collect(),
                    p: row.entries.iter().cloned().map(EntrySpec).collect(),
                })
                .collect();
            CptSpec {
                node: id.to_string(),
                rows,
                otherwise: cpt
                    .otherwise
                    .as_ref()
                    .map(|r| r.entries.iter().cloned().map(EntrySpec).collect()),
            }
        })
        .collect();
    ModelFile {
        schema_version: SCHEMA_VERSION.to_string(),
        metadata: d.metadata.clone(),
        nodes,
        cpts,
        queries: d.queries.clone(),
        reduction_script: d.reduction_script.clone(),
    }
}

/// Canonical pretty-printed serialization, ending with a newline.
pub fn serialize_model(d: &InfluenceDiagram) -> String {
    let mut text = serde_json::to_string_pretty(&to_file(d)).expect("model serializes");
    text.push('\n');
    text
}

//! Influence diagram representation and structural validation.
//!
//! A diagram is a DAG of decision, chance and value nodes. Chance nodes carry a
//! conditional probability table (CPT) with one row per assignment of their
//! parents; each cell is either a fixed number or an elicited quantile triple.
//! Diagrams are immutable values: every graph operation returns a new diagram.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::query::QueryDefinition;

/// Tolerance on the sum of best estimates in a CPT row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Decision,
    Chance,
    Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: Option<String>,
    /// Ordered category labels. Empty for value nodes.
    pub categories: Vec<String>,
    pub parents: Vec<NodeId>,
}

impl Node {
    pub fn chance(id: &str, categories: &[&str], parents: &[&str]) -> Self {
        Node {
            id: NodeId::new(id),
            kind: NodeKind::Chance,
            label: None,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            parents: parents.iter().map(|p| NodeId::new(*p)).collect(),
        }
    }

    pub fn decision(id: &str, categories: &[&str]) -> Self {
        Node {
            kind: NodeKind::Decision,
            ..Node::chance(id, categories, &[])
        }
    }

    pub fn value(id: &str, parents: &[&str]) -> Self {
        Node {
            kind: NodeKind::Value,
            ..Node::chance(id, &[], parents)
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }
}

/// Which value of an elicited triple the expert's "best estimate" denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestIs {
    #[default]
    Median,
    Mode,
}

/// Expert judgement for one probability: lower 5% quantile, best estimate,
/// upper 95% quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElicitedTriple {
    pub q05: f64,
    pub best: f64,
    pub q95: f64,
    #[serde(default, skip_serializing_if = "is_median")]
    pub best_is: BestIs,
}

fn is_median(b: &BestIs) -> bool {
    *b == BestIs::Median
}

impl ElicitedTriple {
    pub fn new(q05: f64, best: f64, q95: f64) -> Self {
        ElicitedTriple {
            q05,
            best,
            q95,
            best_is: BestIs::Median,
        }
    }

    /// Checks `0 <= q05 <= best <= q95 <= 1` and `q05 < q95`.
    pub fn check(&self) -> Result<(), TripleError> {
        let all = [self.q05, self.best, self.q95];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(TripleError::NotFinite);
        }
        if all.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(TripleError::OutOfRange);
        }
        if self.q05 > self.best {
            return Err(TripleError::LowerAboveBest);
        }
        if self.best > self.q95 {
            return Err(TripleError::BestAboveUpper);
        }
        if self.q05 >= self.q95 {
            return Err(TripleError::Degenerate);
        }
        Ok(())
    }

    /// Divides every value by `mass` and clips to `[0, 1]`.
    pub fn rescaled(&self, mass: f64) -> Self {
        let scale = |v: f64| (v / mass).clamp(0.0, 1.0);
        ElicitedTriple {
            q05: scale(self.q05),
            best: scale(self.best),
            q95: scale(self.q95),
            best_is: self.best_is,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleError {
    #[error("values must be finite")]
    NotFinite,
    #[error("values must lie in [0, 1]")]
    OutOfRange,
    #[error("lower quantile exceeds the best estimate")]
    LowerAboveBest,
    #[error("best estimate exceeds the upper quantile")]
    BestAboveUpper,
    #[error("lower and upper quantiles coincide")]
    Degenerate,
}

impl TripleError {
    /// The triple field the violation is attributed to.
    pub fn field(&self) -> &'static str {
        match self {
            TripleError::NotFinite | TripleError::OutOfRange => "triple",
            TripleError::LowerAboveBest => "q05",
            TripleError::BestAboveUpper => "best",
            TripleError::Degenerate => "q95",
        }
    }
}

/// One cell of a CPT row.
#[derive(Debug, Clone, PartialEq)]
pub enum CptEntry {
    /// Exactly 0 or 1, imposed by the care pathway. Never sampled.
    Structural(f64),
    /// A derived point probability (e.g. produced by arc reversal). Never sampled.
    Fixed(f64),
    Elicited(ElicitedTriple),
    /// Takes `1 - sum(others)`. The printed judgement, if any, is kept for
    /// reference but never sampled.
    Remainder(Option<ElicitedTriple>),
}

impl CptEntry {
    pub fn is_free(&self) -> bool {
        matches!(self, CptEntry::Elicited(_) | CptEntry::Remainder(_))
    }

    pub fn point(p: f64) -> Self {
        if p == 0.0 || p == 1.0 {
            CptEntry::Structural(p)
        } else {
            CptEntry::Fixed(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CptRow {
    pub entries: Vec<CptEntry>,
}

impl CptRow {
    pub fn new(entries: Vec<CptEntry>) -> Self {
        CptRow { entries }
    }

    pub fn points(values: &[f64]) -> Self {
        CptRow::new(values.iter().map(|&p| CptEntry::point(p)).collect())
    }

    pub fn remainder_index(&self) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| matches!(e, CptEntry::Remainder(_)))
    }

    /// Point probabilities at best estimates, applying the remainder rule.
    pub fn best_estimates(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .entries
            .iter()
            .map(|e| match e {
                CptEntry::Structural(p) | CptEntry::Fixed(p) => *p,
                CptEntry::Elicited(t) => t.best,
                CptEntry::Remainder(_) => 0.0,
            })
            .collect();
        if let Some(r) = self.remainder_index() {
            let others: f64 = out.iter().sum();
            out[r] = 1.0 - others;
        }
        out
    }

    pub fn has_free_cells(&self) -> bool {
        self.entries.iter().any(CptEntry::is_free)
    }
}

/// Conditional probability table of one chance node. Rows are keyed by the
/// category index of each parent, in the node's parent order. `otherwise`
/// covers every parent assignment without an explicit row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cpt {
    pub rows: BTreeMap<Vec<usize>, CptRow>,
    pub otherwise: Option<CptRow>,
}

impl Cpt {
    pub fn single(row: CptRow) -> Self {
        let mut rows = BTreeMap::new();
        rows.insert(Vec::new(), row);
        Cpt {
            rows,
            otherwise: None,
        }
    }

    pub fn row(&self, assignment: &[usize]) -> Option<&CptRow> {
        self.rows.get(assignment).or(self.otherwise.as_ref())
    }

    pub fn row_ref(&self, assignment: &[usize]) -> Option<RowRef> {
        if self.rows.contains_key(assignment) {
            Some(RowRef::Explicit(assignment.to_vec()))
        } else if self.otherwise.is_some() {
            Some(RowRef::Otherwise)
        } else {
            None
        }
    }

    pub fn get(&self, row: &RowRef) -> Option<&CptRow> {
        match row {
            RowRef::Explicit(a) => self.rows.get(a),
            RowRef::Otherwise => self.otherwise.as_ref(),
        }
    }

    pub fn get_mut(&mut self, row: &RowRef) -> Option<&mut CptRow> {
        match row {
            RowRef::Explicit(a) => self.rows.get_mut(a),
            RowRef::Otherwise => self.otherwise.as_mut(),
        }
    }

    /// Every row paired with its reference, explicit rows first.
    pub fn iter_rows(&self) -> impl Iterator<Item = (RowRef, &CptRow)> {
        self.rows
            .iter()
            .map(|(k, r)| (RowRef::Explicit(k.clone()), r))
            .chain(self.otherwise.iter().map(|r| (RowRef::Otherwise, r)))
    }
}

/// Identifies a CPT row within a node's table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowRef {
    Explicit(Vec<usize>),
    Otherwise,
}

/// Address of one CPT cell: node, row and category index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef {
    pub node: NodeId,
    pub row: RowRef,
    pub category: usize,
}

/// One step of a scripted reduction, applied in order by `reduce`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ReductionStep {
    ReverseArc {
        from: NodeId,
        to: NodeId,
    },
    RemoveBarren,
    /// Removes `from` as a parent of `to`; only valid when `to`'s CPT does not
    /// depend on it (max deviation within `tolerance`).
    DropArc {
        from: NodeId,
        to: NodeId,
        #[serde(default = "default_drop_tolerance")]
        tolerance: f64,
    },
}

fn default_drop_tolerance() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InfluenceDiagram {
    pub nodes: BTreeMap<NodeId, Node>,
    pub cpts: BTreeMap<NodeId, Cpt>,
    pub queries: Vec<QueryDefinition>,
    pub reduction_script: Vec<ReductionStep>,
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("node `{node}` has no category `{category}`")]
    UnknownCategory { node: NodeId, category: String },
    #[error("diagram contains a cycle through {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("duplicate node `{0}`")]
    DuplicateNode(NodeId),
}

impl InfluenceDiagram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), ModelError> {
        if self.nodes.contains_key(&node.id) {
            return Err(ModelError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn set_cpt(&mut self, node: &str, cpt: Cpt) {
        self.cpts.insert(NodeId::new(node), cpt);
    }

    pub fn node(&self, id: &NodeId) -> Result<&Node, ModelError> {
        self.nodes
            .get(id)
            .ok_or_else(|| ModelError::UnknownNode(id.clone()))
    }

    pub fn category_index(&self, node: &NodeId, category: &str) -> Result<usize, ModelError> {
        self.node(node)?
            .category_index(category)
            .ok_or_else(|| ModelError::UnknownCategory {
                node: node.clone(),
                category: category.to_string(),
            })
    }

    pub fn children(&self, id: &NodeId) -> Vec<&NodeId> {
        self.nodes
            .values()
            .filter(|n| n.parents.contains(id))
            .map(|n| &n.id)
            .collect()
    }

    pub fn decision_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Decision)
    }

    pub fn chance_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Chance)
    }

    pub fn query(&self, name: &str) -> Option<&QueryDefinition> {
        self.queries.iter().find(|q| q.name == name)
    }

    /// Human-readable row description, `X0=yes,X1=no`.
    pub fn describe_row(&self, node: &NodeId, row: &RowRef, skip: Option<&NodeId>) -> String {
        let Ok(n) = self.node(node) else {
            return String::new();
        };
        match row {
            RowRef::Otherwise => "*".to_string(),
            RowRef::Explicit(assignment) => n
                .parents
                .iter()
                .zip(assignment)
                .filter(|(p, _)| Some(*p) != skip)
                .map(|(p, &c)| {
                    let cat = self
                        .nodes
                        .get(p)
                        .and_then(|pn| pn.categories.get(c))
                        .map(String::as_str)
                        .unwrap_or("?");
                    format!("{p}={cat}")
                })
                .collect::<Vec<_>>()
                .join(","),
        }
    }

    /// Stable cell key `nodeId|parentAssignment|category`.
    pub fn cell_key(&self, cell: &CellRef) -> String {
        self.cell_key_skipping(cell, None)
    }

    /// Cell key with one parent (typically the scenario node) left out.
    pub fn cell_key_skipping(&self, cell: &CellRef, skip: Option<&NodeId>) -> String {
        let cat = self
            .nodes
            .get(&cell.node)
            .and_then(|n| n.categories.get(cell.category))
            .map(String::as_str)
            .unwrap_or("?");
        format!(
            "{}|{}|{}",
            cell.node,
            self.describe_row(&cell.node, &cell.row, skip),
            cat
        )
    }

    /// Parses a cell key produced by [`InfluenceDiagram::cell_key`].
    pub fn parse_cell_key(&self, key: &str) -> Result<CellRef, ModelError> {
        let mut parts = key.splitn(3, '|');
        let (Some(node), Some(given), Some(category)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(ModelError::UnknownNode(NodeId::new(key)));
        };
        let node = NodeId::new(node);
        let n = self.node(&node)?;
        let category = self.category_index(&node, category)?;
        let row = if given == "*" {
            RowRef::Otherwise
        } else {
            let mut values: BTreeMap<&str, &str> = BTreeMap::new();
            for pair in given.split(',').filter(|s| !s.is_empty()) {
                let (k, v) = pair.split_once('=').ok_or_else(|| ModelError::UnknownCategory {
                    node: node.clone(),
                    category: pair.to_string(),
                })?;
                values.insert(k, v);
            }
            let mut assignment = Vec::with_capacity(n.parents.len());
            for p in &n.parents {
                let v = values.get(p.as_str()).ok_or_else(|| ModelError::UnknownCategory {
                    node: p.clone(),
                    category: String::new(),
                })?;
                assignment.push(self.category_index(p, v)?);
            }
            if values.len() != n.parents.len() {
                return Err(ModelError::UnknownNode(NodeId::new(given)));
            }
            RowRef::Explicit(assignment)
        };
        Ok(CellRef {
            node,
            row,
            category,
        })
    }

    pub fn entry(&self, cell: &CellRef) -> Option<&CptEntry> {
        self.cpts
            .get(&cell.node)?
            .get(&cell.row)?
            .entries
            .get(cell.category)
    }

    /// Every cell holding an elicited judgement, in node then row order.
    pub fn elicited_cells(&self) -> Vec<(CellRef, ElicitedTriple)> {
        let mut out = Vec::new();
        for (id, cpt) in &self.cpts {
            for (row, r) in cpt.iter_rows() {
                for (category, e) in r.entries.iter().enumerate() {
                    if let CptEntry::Elicited(t) = e {
                        out.push((
                            CellRef {
                                node: id.clone(),
                                row: row.clone(),
                                category,
                            },
                            *t,
                        ));
                    }
                }
            }
        }
        out
    }

    /// Number of parent assignments of a node (product of parent arities).
    pub fn parent_state_count(&self, node: &Node) -> usize {
        node.parents
            .iter()
            .map(|p| self.nodes.get(p).map_or(0, |n| n.categories.len()))
            .product()
    }
}

/// Iterates every assignment of the given arities in lexicographic order.
pub fn assignments(arities: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = arities.iter().product();
    let mut current = vec![0usize; arities.len()];
    let mut emitted = 0usize;
    std::iter::from_fn(move || {
        if emitted == total {
            return None;
        }
        let out = current.clone();
        emitted += 1;
        for i in (0..arities.len()).rev() {
            current[i] += 1;
            if current[i] < arities[i] {
                break;
            }
            current[i] = 0;
        }
        Some(out)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    EmptyId,
    TooFewCategories,
    DuplicateCategory,
    ValueNodeCategories,
    ValueNodeChildren,
    UnknownParent,
    Cycle,
    DecisionCpt,
    ValueCpt,
    MissingCpt,
    MissingRow,
    InvalidRowKey,
    RowArity,
    TripleOrder,
    StructuralNotBinary,
    ProbabilityRange,
    MultipleRemainders,
    RowSum,
    UnknownCptNode,
    InvalidQuery,
}

/// A broken invariant, located at a node, row or query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn violation(kind: ViolationKind, location: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        kind,
        location: location.into(),
        message: message.into(),
    }
}

/// Checks every structural and numeric invariant of a diagram.
pub fn validate(diagram: &InfluenceDiagram) -> Vec<Violation> {
    let mut out = Vec::new();
    for node in diagram.nodes.values() {
        let loc = node.id.to_string();
        if node.id.as_str().is_empty() {
            out.push(violation(ViolationKind::EmptyId, "<empty>", "node id is empty"));
        }
        match node.kind {
            NodeKind::Value => {
                if !node.categories.is_empty() {
                    out.push(violation(
                        ViolationKind::ValueNodeCategories,
                        &loc,
                        "value nodes carry no categories",
                    ));
                }
                if !diagram.children(&node.id).is_empty() {
                    out.push(violation(
                        ViolationKind::ValueNodeChildren,
                        &loc,
                        "value nodes cannot have children",
                    ));
                }
            }
            _ => {
                if node.categories.len() < 2 {
                    out.push(violation(
                        ViolationKind::TooFewCategories,
                        &loc,
                        "decision and chance nodes need at least two categories",
                    ));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for c in &node.categories {
            if !seen.insert(c) {
                out.push(violation(
                    ViolationKind::DuplicateCategory,
                    &loc,
                    format!("category `{c}` listed twice"),
                ));
            }
        }
        for p in &node.parents {
            if !diagram.nodes.contains_key(p) {
                out.push(violation(
                    ViolationKind::UnknownParent,
                    &loc,
                    format!("parent `{p}` does not exist"),
                ));
            }
        }
    }
    let parents_ok = !out.iter().any(|v| v.kind == ViolationKind::UnknownParent);
    if parents_ok {
        if let Err(ModelError::Cycle(nodes)) = crate::graph::topological_order(diagram) {
            let names: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
            out.push(violation(
                ViolationKind::Cycle,
                names.join(","),
                "graph is not acyclic",
            ));
        }
    }
    for id in diagram.cpts.keys() {
        match diagram.nodes.get(id).map(|n| n.kind) {
            None => out.push(violation(
                ViolationKind::UnknownCptNode,
                id.to_string(),
                "table given for a node that does not exist",
            )),
            Some(NodeKind::Decision) => out.push(violation(
                ViolationKind::DecisionCpt,
                id.to_string(),
                "decision nodes are set externally and carry no table",
            )),
            Some(NodeKind::Value) => out.push(violation(
                ViolationKind::ValueCpt,
                id.to_string(),
                "value nodes carry no table",
            )),
            Some(NodeKind::Chance) => {}
        }
    }
    if parents_ok {
        for node in diagram.chance_nodes() {
            validate_cpt(diagram, node, &mut out);
        }
    }
    for q in &diagram.queries {
        for problem in q.problems(diagram) {
            out.push(violation(
                ViolationKind::InvalidQuery,
                format!("query {}", q.name),
                problem,
            ));
        }
    }
    out
}

fn validate_cpt(diagram: &InfluenceDiagram, node: &Node, out: &mut Vec<Violation>) {
    let Some(cpt) = diagram.cpts.get(&node.id) else {
        out.push(violation(
            ViolationKind::MissingCpt,
            node.id.to_string(),
            "chance node has no table",
        ));
        return;
    };
    let arities: Vec<usize> = node
        .parents
        .iter()
        .map(|p| diagram.nodes[p].categories.len())
        .collect();
    for key in cpt.rows.keys() {
        if key.len() != arities.len() || key.iter().zip(&arities).any(|(k, a)| k >= a) {
            out.push(violation(
                ViolationKind::InvalidRowKey,
                node.id.to_string(),
                format!("row key {key:?} does not match the parent arities {arities:?}"),
            ));
        }
    }
    if cpt.otherwise.is_none() {
        for a in assignments(&arities) {
            if !cpt.rows.contains_key(&a) {
                out.push(violation(
                    ViolationKind::MissingRow,
                    format!(
                        "{}|{}",
                        node.id,
                        diagram.describe_row(&node.id, &RowRef::Explicit(a.clone()), None)
                    ),
                    "no row for this parent assignment",
                ));
            }
        }
    }
    for (row_ref, row) in cpt.iter_rows() {
        let loc = format!(
            "{}|{}",
            node.id,
            diagram.describe_row(&node.id, &row_ref, None)
        );
        validate_row(node, row, &loc, out);
    }
}

fn validate_row(node: &Node, row: &CptRow, loc: &str, out: &mut Vec<Violation>) {
    if row.entries.len() != node.categories.len() {
        out.push(violation(
            ViolationKind::RowArity,
            loc,
            format!(
                "{} entries for {} categories",
                row.entries.len(),
                node.categories.len()
            ),
        ));
        return;
    }
    let mut remainders = 0;
    for (cat, e) in node.categories.iter().zip(&row.entries) {
        let cell = format!("{loc}|{cat}");
        match e {
            CptEntry::Structural(p) => {
                if *p != 0.0 && *p != 1.0 {
                    out.push(violation(
                        ViolationKind::StructuralNotBinary,
                        cell,
                        format!("structural entry {p} must be exactly 0 or 1"),
                    ));
                }
            }
            CptEntry::Fixed(p) => {
                if !(0.0..=1.0).contains(p) {
                    out.push(violation(
                        ViolationKind::ProbabilityRange,
                        cell,
                        format!("probability {p} outside [0, 1]"),
                    ));
                }
            }
            CptEntry::Elicited(t) => {
                if let Err(e) = t.check() {
                    out.push(violation(
                        ViolationKind::TripleOrder,
                        cell,
                        format!("({}, {}, {}): {e}", t.q05, t.best, t.q95),
                    ));
                }
            }
            CptEntry::Remainder(printed) => {
                remainders += 1;
                if let Some(t) = printed {
                    if let Err(e) = t.check() {
                        out.push(violation(
                            ViolationKind::TripleOrder,
                            cell,
                            format!("({}, {}, {}): {e}", t.q05, t.best, t.q95),
                        ));
                    }
                }
            }
        }
    }
    if remainders > 1 {
        out.push(violation(
            ViolationKind::MultipleRemainders,
            loc,
            "at most one remainder category per row",
        ));
        return;
    }
    let best = row.best_estimates();
    let sum: f64 = best.iter().sum();
    let remainder_negative = row
        .remainder_index()
        .is_some_and(|r| best[r] < -ROW_SUM_TOLERANCE);
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || remainder_negative {
        let shown = if let Some(r) = row.remainder_index() {
            1.0 - best[r]
        } else {
            sum
        };
        out.push(violation(
            ViolationKind::RowSum,
            loc,
            format!("best estimates sum to {shown}, expected 1"),
        ));
    }
}

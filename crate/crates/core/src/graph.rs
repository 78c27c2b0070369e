//! Structural operations on influence diagrams.
//!
//! Every operation takes a diagram by reference and returns a new one. CPTs
//! rewritten by arc reversal hold point probabilities computed at the best
//! estimates of the original tables.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    assignments, Cpt, CptEntry, CptRow, InfluenceDiagram, ModelError, NodeId, NodeKind,
    ReductionStep,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no arc {from} -> {to}")]
    NoSuchArc { from: NodeId, to: NodeId },
    #[error("arc {from} -> {to} joins non-chance nodes")]
    NotChanceNodes { from: NodeId, to: NodeId },
    #[error("reversing {from} -> {to} would create a cycle through another path")]
    WouldCreateCycle { from: NodeId, to: NodeId },
    #[error("node {node} has no CPT row for assignment {assignment:?}")]
    MissingRow { node: NodeId, assignment: Vec<usize> },
    #[error("{to} depends on {from} (max deviation {deviation:e}); the arc cannot be dropped")]
    NotIndependent {
        from: NodeId,
        to: NodeId,
        deviation: f64,
    },
}

/// Kahn's algorithm with a lexicographically ordered ready set.
pub fn topological_order(diagram: &InfluenceDiagram) -> Result<Vec<NodeId>, ModelError> {
    let mut indegree: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for node in diagram.nodes.values() {
        let known = node
            .parents
            .iter()
            .filter(|p| diagram.nodes.contains_key(*p))
            .count();
        indegree.insert(&node.id, known);
    }
    let mut ready: BTreeSet<&NodeId> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut order = Vec::with_capacity(diagram.nodes.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.clone());
        for child in diagram.children(id) {
            let d = indegree.get_mut(child).expect("child is a node");
            *d -= 1;
            if *d == 0 {
                ready.insert(child);
            }
        }
    }
    if order.len() < diagram.nodes.len() {
        let stuck = indegree
            .into_iter()
            .filter(|(_, d)| *d > 0)
            .map(|(id, _)| id.clone())
            .collect();
        return Err(ModelError::Cycle(stuck));
    }
    Ok(order)
}

/// Nodes that must survive reduction: those named by a query.
fn referenced_nodes(diagram: &InfluenceDiagram) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for q in &diagram.queries {
        out.extend(q.event.nodes().cloned());
        out.insert(q.scenario_node.clone());
    }
    out
}

/// Removes childless, unreferenced chance nodes until none remain.
pub fn remove_barren(diagram: &InfluenceDiagram) -> InfluenceDiagram {
    let keep = referenced_nodes(diagram);
    let mut out = diagram.clone();
    loop {
        let barren: Vec<NodeId> = out
            .chance_nodes()
            .filter(|n| !keep.contains(&n.id) && out.children(&n.id).is_empty())
            .map(|n| n.id.clone())
            .collect();
        if barren.is_empty() {
            return out;
        }
        for id in barren {
            out.nodes.remove(&id);
            out.cpts.remove(&id);
        }
    }
}

fn has_path_avoiding_direct(diagram: &InfluenceDiagram, from: &NodeId, to: &NodeId) -> bool {
    let mut stack: Vec<&NodeId> = diagram
        .children(from)
        .into_iter()
        .filter(|c| *c != to)
        .collect();
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if seen.insert(n) {
            stack.extend(diagram.children(n));
        }
    }
    false
}

/// Point probabilities of `node` given a full assignment of named values.
fn row_values(
    diagram: &InfluenceDiagram,
    node: &NodeId,
    values: &BTreeMap<NodeId, usize>,
) -> Result<Vec<f64>, GraphError> {
    let n = diagram.node(node)?;
    let assignment: Vec<usize> = n.parents.iter().map(|p| values[p]).collect();
    let row = diagram
        .cpts
        .get(node)
        .and_then(|c| c.row(&assignment))
        .ok_or_else(|| GraphError::MissingRow {
            node: node.clone(),
            assignment: assignment.clone(),
        })?;
    Ok(row.best_estimates())
}

fn arities(diagram: &InfluenceDiagram, ids: &[NodeId]) -> Vec<usize> {
    ids.iter().map(|p| diagram.nodes[p].categories.len()).collect()
}

/// Reverses the chance arc `from -> to` by Bayes' rule.
///
/// Afterwards `to` has parents `pa(to) - from` followed by any parents of
/// `from` it lacked, and `from` has its old parents, then the old parents of
/// `to` it lacked, then `to`.
pub fn reverse_arc(
    diagram: &InfluenceDiagram,
    from: &NodeId,
    to: &NodeId,
) -> Result<InfluenceDiagram, GraphError> {
    let i = diagram.node(from)?;
    let j = diagram.node(to)?;
    if !j.parents.contains(from) {
        return Err(GraphError::NoSuchArc {
            from: from.clone(),
            to: to.clone(),
        });
    }
    if i.kind != NodeKind::Chance || j.kind != NodeKind::Chance {
        return Err(GraphError::NotChanceNodes {
            from: from.clone(),
            to: to.clone(),
        });
    }
    if has_path_avoiding_direct(diagram, from, to) {
        return Err(GraphError::WouldCreateCycle {
            from: from.clone(),
            to: to.clone(),
        });
    }

    let mut to_parents: Vec<NodeId> = j.parents.iter().filter(|p| *p != from).cloned().collect();
    for p in &i.parents {
        if !to_parents.contains(p) {
            to_parents.push(p.clone());
        }
    }
    let mut from_parents = i.parents.clone();
    for p in &j.parents {
        if p != from && !from_parents.contains(p) {
            from_parents.push(p.clone());
        }
    }
    from_parents.push(to.clone());

    let mut to_cpt = Cpt::default();
    let mut from_cpt = Cpt::default();
    let n_from = i.categories.len();
    let n_to = j.categories.len();
    for a in assignments(&arities(diagram, &to_parents)) {
        let mut values: BTreeMap<NodeId, usize> =
            to_parents.iter().cloned().zip(a.iter().copied()).collect();
        let prior = row_values(diagram, from, &values)?;
        // joint[x][y] = P(from = x | pa(from)) P(to = y | from = x, pa(to))
        let mut joint = vec![vec![0.0; n_to]; n_from];
        for (x, px) in prior.iter().enumerate() {
            values.insert(from.clone(), x);
            let likelihood = row_values(diagram, to, &values)?;
            for (y, py) in likelihood.iter().enumerate() {
                joint[x][y] = px * py;
            }
        }
        values.remove(from);
        let marginal: Vec<f64> = (0..n_to).map(|y| (0..n_from).map(|x| joint[x][y]).sum()).collect();
        to_cpt.rows.insert(a.clone(), CptRow::points(&marginal));
        for (y, &m) in marginal.iter().enumerate() {
            let posterior: Vec<f64> = if m > 0.0 {
                (0..n_from).map(|x| joint[x][y] / m).collect()
            } else {
                prior.clone()
            };
            values.insert(to.clone(), y);
            let key: Vec<usize> = from_parents.iter().map(|p| values[p]).collect();
            from_cpt.rows.insert(key, CptRow::points(&posterior));
        }
    }

    let mut out = diagram.clone();
    out.nodes.get_mut(to).expect("checked").parents = to_parents;
    out.nodes.get_mut(from).expect("checked").parents = from_parents;
    out.cpts.insert(to.clone(), to_cpt);
    out.cpts.insert(from.clone(), from_cpt);
    Ok(out)
}

/// Removes the arc `from -> to` when the CPT of `to` does not vary with `from`.
pub fn drop_arc(
    diagram: &InfluenceDiagram,
    from: &NodeId,
    to: &NodeId,
    tolerance: f64,
) -> Result<InfluenceDiagram, GraphError> {
    let j = diagram.node(to)?;
    let Some(pos) = j.parents.iter().position(|p| p == from) else {
        return Err(GraphError::NoSuchArc {
            from: from.clone(),
            to: to.clone(),
        });
    };
    let cpt = diagram.cpts.get(to).ok_or_else(|| GraphError::MissingRow {
        node: to.clone(),
        assignment: Vec::new(),
    })?;
    let parent_arities = arities(diagram, &j.parents);
    let mut kept_parents = j.parents.clone();
    kept_parents.remove(pos);
    let mut new_cpt = Cpt::default();
    let mut deviation: f64 = 0.0;
    for a in assignments(&arities(diagram, &kept_parents)) {
        let mut rows = Vec::with_capacity(parent_arities[pos]);
        for v in 0..parent_arities[pos] {
            let mut full = a.clone();
            full.insert(pos, v);
            let row = cpt.row(&full).ok_or_else(|| GraphError::MissingRow {
                node: to.clone(),
                assignment: full.clone(),
            })?;
            rows.push(row);
        }
        let first = rows[0].best_estimates();
        for r in &rows[1..] {
            for (x, y) in first.iter().zip(r.best_estimates()) {
                deviation = deviation.max((x - y).abs());
            }
        }
        new_cpt.rows.insert(a, rows[0].clone());
    }
    if deviation > tolerance {
        return Err(GraphError::NotIndependent {
            from: from.clone(),
            to: to.clone(),
            deviation,
        });
    }
    let mut out = diagram.clone();
    out.nodes.get_mut(to).expect("checked").parents = kept_parents;
    out.cpts.insert(to.clone(), new_cpt);
    Ok(out)
}

/// Applies the diagram's reduction script, then removes barren nodes. The
/// returned diagram carries an empty script.
pub fn reduce(diagram: &InfluenceDiagram) -> Result<InfluenceDiagram, GraphError> {
    let mut d = diagram.clone();
    for step in &diagram.reduction_script {
        d = apply_step(&d, step)?;
    }
    d = remove_barren(&d);
    d.reduction_script.clear();
    Ok(d)
}

pub fn apply_step(diagram: &InfluenceDiagram, step: &ReductionStep) -> Result<InfluenceDiagram, GraphError> {
    match step {
        ReductionStep::ReverseArc { from, to } => reverse_arc(diagram, from, to),
        ReductionStep::RemoveBarren => Ok(remove_barren(diagram)),
        ReductionStep::DropArc {
            from,
            to,
            tolerance,
        } => drop_arc(diagram, from, to, *tolerance),
    }
}

/// Whether any CPT entry of the diagram is still an elicited judgement.
pub fn has_elicited(diagram: &InfluenceDiagram) -> bool {
    diagram.cpts.values().any(|c| {
        c.iter_rows()
            .any(|(_, r)| r.entries.iter().any(|e| matches!(e, CptEntry::Elicited(_))))
    })
}

//! Dense compiled form of a diagram for repeated exact evaluation.
//!
//! CPTs are flattened into one `Vec<f64>` so a Monte Carlo draw only has to
//! overwrite the sampled rows before re-evaluating the queries. Evaluation is
//! a depth-first sum over the ancestors of the event's nodes, skipping
//! zero-probability branches.

use std::collections::BTreeMap;

use crate::graph::topological_order;
use crate::model::{assignments, InfluenceDiagram, ModelError, NodeId, NodeKind, RowRef};
use crate::query::{Event, QueryError};

const UNSET: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct CompiledDiagram {
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    arity: Vec<usize>,
    decision: Vec<bool>,
    parents: Vec<Vec<usize>>,
    strides: Vec<Vec<usize>>,
    offset: Vec<usize>,
    table: Vec<f64>,
}

/// An event resolved against a compiled diagram.
#[derive(Debug, Clone)]
pub struct CompiledEvent {
    conjunctions: Vec<Vec<(usize, usize)>>,
    /// Ancestor closure of the event's nodes, in topological order.
    relevant: Vec<usize>,
}

impl CompiledDiagram {
    pub fn new(diagram: &InfluenceDiagram) -> Result<Self, QueryError> {
        let ids: Vec<NodeId> = topological_order(diagram)?
            .into_iter()
            .filter(|id| diagram.nodes[id].kind != NodeKind::Value)
            .collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        let mut out = CompiledDiagram {
            arity: ids.iter().map(|id| diagram.nodes[id].categories.len()).collect(),
            decision: ids.iter().map(|id| diagram.nodes[id].kind == NodeKind::Decision).collect(),
            parents: Vec::with_capacity(ids.len()),
            strides: Vec::with_capacity(ids.len()),
            offset: Vec::with_capacity(ids.len()),
            table: Vec::new(),
            ids,
            index,
        };
        for k in 0..out.ids.len() {
            let node = &diagram.nodes[&out.ids[k]];
            let parents: Vec<usize> = node.parents.iter().map(|p| out.index[p]).collect();
            let mut strides = vec![0usize; parents.len()];
            let mut s = 1;
            for (i, &p) in parents.iter().enumerate().rev() {
                strides[i] = s;
                s *= out.arity[p];
            }
            out.offset.push(out.table.len());
            if !out.decision[k] {
                let arities: Vec<usize> = parents.iter().map(|&p| out.arity[p]).collect();
                let cpt = diagram.cpts.get(&node.id);
                for a in assignments(&arities) {
                    let row = cpt.and_then(|c| c.row(&a)).ok_or_else(|| QueryError::MissingRow {
                        node: node.id.clone(),
                        assignment: a.clone(),
                    })?;
                    out.table.extend(row.best_estimates());
                }
            }
            out.parents.push(parents);
            out.strides.push(strides);
        }
        Ok(out)
    }

    /// CPT values at best estimates.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn position(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Start offsets in the table of every dense row a CPT row covers. An
    /// `Otherwise` row covers every assignment without an explicit row.
    pub fn row_offsets(&self, diagram: &InfluenceDiagram, node: &NodeId, row: &RowRef) -> Result<Vec<usize>, ModelError> {
        let k = self.position(node).ok_or_else(|| ModelError::UnknownNode(node.clone()))?;
        let arities: Vec<usize> = self.parents[k].iter().map(|&p| self.arity[p]).collect();
        let cpt = diagram.cpts.get(node);
        let mut out = Vec::new();
        for (i, a) in assignments(&arities).enumerate() {
            let covered = match row {
                RowRef::Explicit(key) => *key == a,
                RowRef::Otherwise => cpt.is_some_and(|c| !c.rows.contains_key(&a)),
            };
            if covered {
                out.push(self.offset[k] + i * self.arity[k]);
            }
        }
        Ok(out)
    }

    pub fn compile_event(&self, diagram: &InfluenceDiagram, event: &Event) -> Result<CompiledEvent, QueryError> {
        let literal = event.compile(diagram)?;
        let mut conjunctions = Vec::with_capacity(literal.len());
        let mut marked = vec![false; self.ids.len()];
        let mut stack = Vec::new();
        for conj in literal {
            let mut c = Vec::with_capacity(conj.len());
            for (n, cat) in conj {
                let p = self.position(&n).ok_or(ModelError::UnknownNode(n))?;
                c.push((p, cat));
                stack.push(p);
            }
            conjunctions.push(c);
        }
        while let Some(p) = stack.pop() {
            if !marked[p] {
                marked[p] = true;
                stack.extend(self.parents[p].iter().copied());
            }
        }
        let relevant = (0..self.ids.len()).filter(|&p| marked[p]).collect();
        Ok(CompiledEvent {
            conjunctions,
            relevant,
        })
    }

    /// Decision vector indexed by node position; unassigned entries are unset.
    pub fn decisions(&self, values: &[(usize, usize)]) -> Vec<usize> {
        let mut out = vec![UNSET; self.ids.len()];
        for &(p, v) in values {
            out[p] = v;
        }
        out
    }

    /// Event probability under `table`, which must have the layout of
    /// [`CompiledDiagram::table`].
    pub fn probability(&self, table: &[f64], event: &CompiledEvent, decisions: &[usize]) -> Result<f64, QueryError> {
        for &p in &event.relevant {
            if self.decision[p] && decisions[p] == UNSET {
                return Err(QueryError::UnassignedDecision(self.ids[p].clone()));
            }
        }
        let mut state = vec![0usize; self.ids.len()];
        Ok(self.sum_from(0, 1.0, table, event, decisions, &mut state))
    }

    fn row_start(&self, k: usize, state: &[usize]) -> usize {
        let row: usize = self.parents[k]
            .iter()
            .zip(&self.strides[k])
            .map(|(&p, &s)| state[p] * s)
            .sum();
        self.offset[k] + row * self.arity[k]
    }

    fn sum_from(
        &self,
        depth: usize,
        weight: f64,
        table: &[f64],
        event: &CompiledEvent,
        decisions: &[usize],
        state: &mut [usize],
    ) -> f64 {
        if depth == event.relevant.len() {
            let holds = event
                .conjunctions
                .iter()
                .any(|conj| conj.iter().all(|&(p, c)| state[p] == c));
            return if holds { weight } else { 0.0 };
        }
        let k = event.relevant[depth];
        if self.decision[k] {
            state[k] = decisions[k];
            return self.sum_from(depth + 1, weight, table, event, decisions, state);
        }
        let start = self.row_start(k, state);
        let mut total = 0.0;
        for c in 0..self.arity[k] {
            let p = table[start + c];
            if p != 0.0 {
                state[k] = c;
                total += self.sum_from(depth + 1, weight * p, table, event, decisions, state);
            }
        }
        total
    }

    /// Partial derivative of the event probability with respect to every
    /// table entry, treating entries as free variables.
    pub fn gradient(&self, table: &[f64], event: &CompiledEvent, decisions: &[usize]) -> Result<Vec<f64>, QueryError> {
        for &p in &event.relevant {
            if self.decision[p] && decisions[p] == UNSET {
                return Err(QueryError::UnassignedDecision(self.ids[p].clone()));
            }
        }
        let mut grad = vec![0.0; table.len()];
        let mut state = vec![0usize; self.ids.len()];
        let mut factors: Vec<(usize, f64)> = Vec::with_capacity(event.relevant.len());
        self.gradient_from(0, table, event, decisions, &mut state, &mut factors, &mut grad);
        Ok(grad)
    }

    #[allow(clippy::too_many_arguments)]
    fn gradient_from(
        &self,
        depth: usize,
        table: &[f64],
        event: &CompiledEvent,
        decisions: &[usize],
        state: &mut [usize],
        factors: &mut Vec<(usize, f64)>,
        grad: &mut [f64],
    ) {
        if depth == event.relevant.len() {
            let holds = event
                .conjunctions
                .iter()
                .any(|conj| conj.iter().all(|&(p, c)| state[p] == c));
            if !holds {
                return;
            }
            // product of all factors except the i-th, via suffix products
            let n = factors.len();
            let mut suffix = vec![1.0; n + 1];
            for i in (0..n).rev() {
                suffix[i] = suffix[i + 1] * factors[i].1;
            }
            let mut prefix = 1.0;
            for i in 0..n {
                grad[factors[i].0] += prefix * suffix[i + 1];
                prefix *= factors[i].1;
            }
            return;
        }
        let k = event.relevant[depth];
        if self.decision[k] {
            state[k] = decisions[k];
            self.gradient_from(depth + 1, table, event, decisions, state, factors, grad);
            return;
        }
        let start = self.row_start(k, state);
        for c in 0..self.arity[k] {
            state[k] = c;
            factors.push((start + c, table[start + c]));
            self.gradient_from(depth + 1, table, event, decisions, state, factors, grad);
            factors.pop();
        }
    }
}

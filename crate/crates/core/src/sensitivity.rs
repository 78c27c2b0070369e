//! Which inputs a query depends on, and how strongly its Monte Carlo output
//! correlates with each of them.

use serde::{Deserialize, Serialize};

use crate::eval::CompiledDiagram;
use crate::model::{CellRef, CptEntry, InfluenceDiagram, NodeKind};
use crate::query::{QueryDefinition, QueryError};

/// Gradient components below this are treated as zero.
const GRADIENT_TOL: f64 = 1e-12;

/// Elicited cells whose value changes the query probability when the
/// scenario node takes `decision`.
///
/// Within each elicited row, a free category is listed when moving mass to
/// it from the row's least influential free category changes the answer,
/// that is when its partial derivative exceeds the row minimum. Cells come
/// out in topological node order, then row order, then category order.
pub fn dependent_inputs(
    diagram: &InfluenceDiagram,
    query: &QueryDefinition,
    decision: &str,
) -> Result<Vec<CellRef>, QueryError> {
    let compiled = CompiledDiagram::new(diagram)?;
    let event = compiled.compile_event(diagram, &query.event)?;
    let value = diagram.category_index(&query.scenario_node, decision)?;
    let scenario = compiled
        .position(&query.scenario_node)
        .ok_or_else(|| crate::model::ModelError::UnknownNode(query.scenario_node.clone()))?;
    let decisions = compiled.decisions(&[(scenario, value)]);
    let grad = compiled.gradient(compiled.table(), &event, &decisions)?;

    let mut out = Vec::new();
    for id in compiled.node_ids() {
        let node = &diagram.nodes[id];
        if node.kind != NodeKind::Chance {
            continue;
        }
        let Some(cpt) = diagram.cpts.get(id) else { continue };
        for (row_ref, row) in cpt.iter_rows() {
            if !row.entries.iter().any(|e| matches!(e, CptEntry::Elicited(_))) {
                continue;
            }
            let offsets = compiled.row_offsets(diagram, id, &row_ref)?;
            let g: Vec<f64> = (0..row.entries.len())
                .map(|c| offsets.iter().map(|o| grad[o + c]).sum())
                .collect();
            let free: Vec<usize> = (0..row.entries.len()).filter(|&c| row.entries[c].is_free()).collect();
            let lo = free.iter().map(|&c| g[c]).fold(f64::INFINITY, f64::min);
            for &c in &free {
                if g[c] - lo > GRADIENT_TOL {
                    out.push(CellRef {
                        node: id.clone(),
                        row: row_ref.clone(),
                        category: c,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Label for a cell within a query: the query's own label when it has one,
/// otherwise the cell key without the scenario node.
pub fn input_label(diagram: &InfluenceDiagram, query: &QueryDefinition, cell: &CellRef) -> String {
    let key = diagram.cell_key_skipping(cell, Some(&query.scenario_node));
    query.labels.get(&key).cloned().unwrap_or(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTrace {
    pub label: String,
    /// Full cell key, `node|assignment|category`.
    pub key: String,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub label: String,
    pub key: String,
    pub r: f64,
    pub r2: f64,
    /// 1 for the strongest input.
    pub rank: usize,
    /// Set when the input never varied; `r` is then reported as 0.
    pub zero_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    /// Ordered by rank.
    pub entries: Vec<SensitivityEntry>,
}

impl SensitivityResult {
    pub fn get(&self, label: &str) -> Option<&SensitivityEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensitivityError {
    #[error("output has no variance")]
    ZeroVariance,
    #[error("input `{label}` has {got} samples, output has {expected}")]
    LengthMismatch { label: String, got: usize, expected: usize },
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks inputs by squared correlation with the output. Ties keep input order.
pub fn correlate(output: &[f64], inputs: &[InputTrace]) -> Result<SensitivityResult, SensitivityError> {
    if pearson(output, output).is_none() {
        return Err(SensitivityError::ZeroVariance);
    }
    let mut entries = Vec::with_capacity(inputs.len());
    for t in inputs {
        if t.samples.len() != output.len() {
            return Err(SensitivityError::LengthMismatch {
                label: t.label.clone(),
                got: t.samples.len(),
                expected: output.len(),
            });
        }
        let r = pearson(&t.samples, output);
        entries.push(SensitivityEntry {
            label: t.label.clone(),
            key: t.key.clone(),
            r: r.unwrap_or(0.0),
            r2: r.map_or(0.0, |r| r * r),
            rank: 0,
            zero_variance: r.is_none(),
        });
    }
    entries.sort_by(|a, b| b.r2.total_cmp(&a.r2));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(SensitivityResult { entries })
}

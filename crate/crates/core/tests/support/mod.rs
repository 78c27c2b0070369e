//! Random small diagrams for property tests.

#![allow(dead_code)]

pub mod fit_oracle;
pub mod formulas;

use std::collections::BTreeMap;

use pathwise_core::query::enumerate_joint;
use pathwise_core::{Cpt, CptRow, Event, InfluenceDiagram, Node, NodeId, NodeKind, QueryDefinition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A decision node `D` and two to four chance nodes `N0..`, each with up to
/// three earlier parents, fixed CPT values and the odd structural zero.
pub fn random_diagram(seed: u64) -> InfluenceDiagram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = InfluenceDiagram::new();
    d.add_node(Node::decision("D", &["a", "b"])).unwrap();
    let n = rng.random_range(2..=4);
    let cats = ["c0", "c1", "c2"];
    for i in 0..n {
        let arity = rng.random_range(2..=3);
        let mut parents: Vec<String> = Vec::new();
        if rng.random_bool(0.3) {
            parents.push("D".into());
        }
        for j in 0..i {
            if parents.len() < 3 && rng.random_bool(0.5) {
                parents.push(format!("N{j}"));
            }
        }
        let parent_refs: Vec<&str> = parents.iter().map(String::as_str).collect();
        let id = format!("N{i}");
        d.add_node(Node::chance(&id, &cats[..arity], &parent_refs)).unwrap();
        let arities: Vec<usize> = parents.iter().map(|p| d.nodes[&NodeId::new(p)].categories.len()).collect();
        let mut cpt = Cpt::default();
        for a in pathwise_core::model::assignments(&arities) {
            cpt.rows.insert(a, CptRow::points(&random_simplex(&mut rng, arity)));
        }
        d.set_cpt(&id, cpt);
    }
    d
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
            return v;
        }
    }
}

/// Arcs between chance nodes, in a fixed order.
pub fn chance_arcs(d: &InfluenceDiagram) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for (id, node) in &d.nodes {
        if node.kind != NodeKind::Chance {
            continue;
        }
        for p in &node.parents {
            if d.nodes[p].kind == NodeKind::Chance {
                out.push((p.clone(), id.clone()));
            }
        }
    }
    out
}

/// Joint distribution keyed by (node, category) pairs in name order, for each
/// value of `D`.
pub fn canonical_joint(d: &InfluenceDiagram) -> Vec<BTreeMap<Vec<(NodeId, usize)>, f64>> {
    (0..2)
        .map(|v| {
            let j = enumerate_joint(d, &BTreeMap::from([(NodeId::new("D"), v)])).unwrap();
            j.probabilities
                .iter()
                .map(|(state, p)| {
                    let mut key: Vec<(NodeId, usize)> = j.nodes.iter().cloned().zip(state.iter().copied()).collect();
                    key.sort();
                    (key, *p)
                })
                .collect()
        })
        .collect()
}

pub fn max_joint_difference(a: &InfluenceDiagram, b: &InfluenceDiagram) -> f64 {
    let (ja, jb) = (canonical_joint(a), canonical_joint(b));
    let mut worst: f64 = 0.0;
    for (x, y) in ja.iter().zip(&jb) {
        assert_eq!(x.len(), y.len());
        for (k, p) in x {
            worst = worst.max((p - y[k]).abs());
        }
    }
    worst
}

/// A query on one category of one node, with `D` as the scenario.
pub fn point_query(node: &str, category: &str) -> QueryDefinition {
    QueryDefinition {
        name: "q".into(),
        title: None,
        event: Event::literal(node, category),
        scenario_node: NodeId::new("D"),
        with: "a".into(),
        without: "b".into(),
        labels: BTreeMap::new(),
    }
}

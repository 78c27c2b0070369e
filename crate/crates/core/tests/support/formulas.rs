//! The three COPD queries written out as product-sum expansions over the
//! reduced diagram's best estimates.

use pathwise_core::{CptRow, InfluenceDiagram, NodeId};

pub fn row_of<'d>(d: &'d InfluenceDiagram, node: &str, given: &[&str]) -> &'d CptRow {
    let id = NodeId::new(node);
    let parents = &d.nodes[&id].parents;
    let assignment: Vec<usize> = parents
        .iter()
        .zip(given)
        .map(|(p, c)| d.category_index(p, c).unwrap())
        .collect();
    d.cpts[&id].row(&assignment).unwrap()
}

pub fn x(d: &InfluenceDiagram, node: &str, given: &[&str], cat: &str) -> f64 {
    let c = d.category_index(&NodeId::new(node), cat).unwrap();
    row_of(d, node, given).best_estimates()[c]
}

/// The product-sum expansions of the three queries, over best estimates.
pub fn hand_coded(d: &InfluenceDiagram, t: &str) -> [f64; 3] {
    let (e, ne) = ("exacerbation", "no_exacerbation");
    let q1 = x(d, "X6", &["yes", "pc", "sc"], "admit")
        * x(d, "X5", &[t, "pc", e], "sc")
        * x(d, "X4", &[t, "yes"], e)
        * x(d, "X3", &[t, e], "pc")
        * x(d, "X2", &[t, "yes"], e)
        * x(d, "X1", &[], "yes")
        + x(d, "X6", &["yes", "sc", "null"], "admit")
            * x(d, "X3", &[t, e], "sc")
            * x(d, "X2", &[t, "yes"], e)
            * x(d, "X1", &[], "yes");
    let q2 = x(d, "X5", &[t, "pc", ne], "no_treatment")
        * x(d, "X4", &[t, "yes"], ne)
        * x(d, "X3", &[t, e], "pc")
        * x(d, "X2", &[t, "yes"], e)
        * x(d, "X1", &[], "yes")
        + x(d, "X3", &[t, ne], "no_treatment") * x(d, "X2", &[t, "yes"], ne) * x(d, "X1", &[], "yes");
    let q3 = x(d, "X5", &[t, "pc", e], "sc")
        * x(d, "X4", &[t, "no"], e)
        * x(d, "X3", &[t, e], "pc")
        * x(d, "X2", &[t, "no"], e)
        * x(d, "X1", &[], "no")
        + x(d, "X3", &[t, e], "sc") * x(d, "X2", &[t, "no"], e) * x(d, "X1", &[], "no");
    [q1, q2, q3]
}

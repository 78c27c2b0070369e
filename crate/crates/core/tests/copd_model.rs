mod support;

use std::collections::BTreeSet;

use pathwise_core::bundled::{copd, copd_full, COPD_FULL_MODEL, COPD_MODEL};
use pathwise_core::io::{parse_model, serialize_model};
use pathwise_core::model::assignments;
use pathwise_core::sensitivity::input_label;
use support::formulas::{hand_coded, row_of};
use pathwise_core::{
    dependent_inputs, query_probability, reduce, run_named_queries, validate, CptEntry, InfluenceDiagram,
    NodeId, RowRef, Scenario,
};

#[test]
fn bundled_models_are_canonical() {
    for text in [COPD_MODEL, COPD_FULL_MODEL] {
        let d = parse_model(text).unwrap();
        assert!(validate(&d).is_empty());
        assert_eq!(serialize_model(&d), text);
    }
}

enum Cell {
    S(f64),
    T(f64, f64, f64),
}
use Cell::{S, T};

/// The elicited tables, transcribed: node, parent categories, cells.
fn table2() -> Vec<(&'static str, Vec<&'static str>, Vec<Cell>)> {
    vec![
        ("X1", vec![], vec![T(0.4, 0.45, 0.55), T(0.5, 0.55, 0.6)]),
        ("X2", vec!["yes", "yes"], vec![T(0.8, 0.9, 0.97), T(0.03, 0.1, 0.2)]),
        ("X2", vec!["yes", "no"], vec![T(0.03, 0.1, 0.3), T(0.7, 0.9, 0.97)]),
        ("X2", vec!["no", "yes"], vec![T(0.6, 0.7, 0.75), T(0.25, 0.3, 0.4)]),
        ("X2", vec!["no", "no"], vec![T(0.25, 0.3, 0.4), T(0.6, 0.7, 0.75)]),
        (
            "X3",
            vec!["yes", "exacerbation"],
            vec![S(0.0), T(0.25, 0.35, 0.5), T(0.4, 0.6, 0.8), T(0.02, 0.05, 0.15)],
        ),
        ("X3", vec!["yes", "no_exacerbation"], vec![S(1.0), S(0.0), S(0.0), S(0.0)]),
        (
            "X3",
            vec!["no", "exacerbation"],
            vec![S(0.0), T(0.1, 0.15, 0.2), T(0.5, 0.7, 0.8), T(0.1, 0.15, 0.2)],
        ),
        ("X3", vec!["no", "no_exacerbation"], vec![S(1.0), S(0.0), S(0.0), S(0.0)]),
        ("X4", vec!["yes", "yes"], vec![T(0.8, 0.9, 0.97), T(0.03, 0.1, 0.2)]),
        ("X4", vec!["yes", "no"], vec![T(0.03, 0.1, 0.2), T(0.8, 0.9, 0.97)]),
        ("X4", vec!["no", "yes"], vec![T(0.65, 0.7, 0.8), T(0.25, 0.3, 0.4)]),
        ("X4", vec!["no", "no"], vec![T(0.25, 0.3, 0.5), T(0.5, 0.7, 0.75)]),
        (
            "X5",
            vec!["yes", "pc", "exacerbation"],
            vec![S(0.0), T(0.6, 0.8, 0.95), T(0.05, 0.2, 0.4)],
        ),
        ("X5", vec!["yes", "pc", "no_exacerbation"], vec![S(1.0), S(0.0), S(0.0)]),
        (
            "X5",
            vec!["no", "pc", "exacerbation"],
            vec![S(0.0), T(0.8, 0.85, 0.9), T(0.1, 0.15, 0.2)],
        ),
        ("X5", vec!["no", "pc", "no_exacerbation"], vec![S(1.0), S(0.0), S(0.0)]),
        ("X6", vec!["yes", "pc", "sc"], vec![T(0.05, 0.3, 0.35), T(0.65, 0.7, 0.95)]),
        ("X6", vec!["no", "pc", "sc"], vec![S(1.0), S(0.0)]),
        ("X6", vec!["yes", "sc", "null"], vec![T(0.05, 0.38, 0.45), T(0.55, 0.62, 0.95)]),
        ("X6", vec!["no", "sc", "null"], vec![S(1.0), S(0.0)]),
    ]
}


#[test]
fn bundled_model_matches_elicited_tables_cell_for_cell() {
    let d = copd();
    let fixture = table2();
    for (node, given, cells) in &fixture {
        let row = row_of(&d, node, given);
        for (i, cell) in cells.iter().enumerate() {
            let at = format!("{node} {given:?} column {i}");
            match (cell, &row.entries[i]) {
                (S(v), CptEntry::Structural(w)) => assert_eq!(v, w, "{at}"),
                (T(lo, best, hi), CptEntry::Elicited(t)) | (T(lo, best, hi), CptEntry::Remainder(Some(t))) => {
                    assert_eq!((t.q05, t.best, t.q95), (*lo, *best, *hi), "{at}")
                }
                (_, e) => panic!("{at}: unexpected entry {e:?}"),
            }
        }
        // extra categories the transcription has no column for are structural zeros
        for e in &row.entries[cells.len()..] {
            assert_eq!(e, &CptEntry::Structural(0.0), "{node} {given:?}");
        }
    }
    let elicited_rows = d
        .cpts
        .values()
        .flat_map(|c| c.iter_rows())
        .filter(|(r, _)| matches!(r, RowRef::Explicit(_)))
        .count();
    assert_eq!(elicited_rows, fixture.len());
}

#[test]
fn enumeration_matches_hand_coded_formulas() {
    let d = copd();
    for decision in ["yes", "no"] {
        let expected = hand_coded(&d, decision);
        for (q, want) in d.queries.iter().zip(expected) {
            let got = query_probability(&d, q, decision).unwrap();
            assert!((got - want).abs() < 1e-12, "{} {decision}: {got} vs {want}", q.name);
        }
    }
}

#[test]
fn exact_queries_reproduce_published_pairs() {
    let results = run_named_queries(&copd()).unwrap();
    let expected = [(0.043, 0.046, 0.065), (0.069, 0.201, 0.66), (0.003, 0.030, 0.90)];
    for (r, (with, without, reduction)) in results.iter().zip(expected) {
        assert!((r.p_with_test - with).abs() <= 0.0005, "{r:?}");
        assert!((r.p_without_test - without).abs() <= 0.0005, "{r:?}");
        let shown = r.displayed_reduction.value().unwrap();
        assert!((shown - reduction).abs() <= 0.005, "{r:?}");
    }
}

#[test]
fn scripted_reduction_of_full_diagram_gives_reduced_structure() {
    let reduced = reduce(&copd_full().unwrap()).unwrap();
    let bundled = copd();
    let ids = |d: &InfluenceDiagram| d.nodes.keys().cloned().collect::<BTreeSet<_>>();
    assert_eq!(ids(&reduced), ids(&bundled));
    for (id, node) in &bundled.nodes {
        let got: BTreeSet<_> = reduced.nodes[id].parents.iter().collect();
        let want: BTreeSet<_> = node.parents.iter().collect();
        assert_eq!(got, want, "parents of {id}");
    }
    let a = run_named_queries(&reduced).unwrap();
    let b = run_named_queries(&bundled).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.p_with_test - y.p_with_test).abs() < 1e-12);
        assert!((x.p_without_test - y.p_without_test).abs() < 1e-12);
    }
}

#[test]
fn query_one_inputs_are_the_eight_tabulated_probabilities() {
    let d = copd();
    let q = d.query("q1").unwrap();
    let expected: BTreeSet<String> = (1..=8).map(|i| format!("p{i}")).collect();
    for s in Scenario::BOTH {
        let cells = dependent_inputs(&d, q, s.decision(q)).unwrap();
        let labels: BTreeSet<String> = cells.iter().map(|c| input_label(&d, q, c)).collect();
        assert_eq!(cells.len(), 8, "{s:?}");
        assert_eq!(labels, expected, "{s:?}");
    }
}

fn with_row(d: &InfluenceDiagram, node: &NodeId, row: &RowRef, values: &[f64]) -> InfluenceDiagram {
    let mut out = d.clone();
    let r = out.cpts.get_mut(node).unwrap().get_mut(row).unwrap();
    r.entries = values.iter().map(|&v| CptEntry::Fixed(v)).collect();
    out
}

/// A cell is an input exactly when shifting a little mass into it from some
/// other free category of its row raises the query probability.
#[test]
fn dependent_inputs_agree_with_finite_perturbation() {
    let d = copd();
    for q in &d.queries {
        for s in Scenario::BOTH {
            let decision = s.decision(q);
            let listed = dependent_inputs(&d, q, decision).unwrap();
            let base = query_probability(&d, q, decision).unwrap();
            for (node, cpt) in &d.cpts {
                for (row_ref, row) in cpt.iter_rows() {
                    if !row.entries.iter().any(|e| matches!(e, CptEntry::Elicited(_))) {
                        continue;
                    }
                    let best = row.best_estimates();
                    let free: Vec<usize> = (0..best.len()).filter(|&c| row.entries[c].is_free()).collect();
                    for &c in &free {
                        let raises = free.iter().filter(|&&o| o != c).any(|&o| {
                            let mut v = best.clone();
                            let step = 0.01f64.min(v[o]);
                            v[o] -= step;
                            v[c] += step;
                            let p = query_probability(&with_row(&d, node, &row_ref, &v), q, decision).unwrap();
                            p - base > 1e-13
                        });
                        let cell = pathwise_core::CellRef {
                            node: node.clone(),
                            row: row_ref.clone(),
                            category: c,
                        };
                        assert_eq!(listed.contains(&cell), raises, "{} {s:?} {}", q.name, d.cell_key(&cell));
                    }
                }
            }
        }
    }
}

#[test]
fn root_query_depends_only_on_its_row() {
    let mut d = copd();
    let mut q = d.query("q1").unwrap().clone();
    q.event = pathwise_core::Event::literal("X1", "yes");
    q.labels.clear();
    d.queries = vec![q.clone()];
    let cells = dependent_inputs(&d, &q, "yes").unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(d.cell_key(&cells[0]), "X1||yes");
}

#[test]
fn every_parent_assignment_has_a_row() {
    let d = copd();
    for (id, cpt) in &d.cpts {
        let arities: Vec<usize> = d.nodes[id].parents.iter().map(|p| d.nodes[p].categories.len()).collect();
        for a in assignments(&arities) {
            assert!(cpt.row(&a).is_some(), "{id} {a:?}");
        }
    }
}

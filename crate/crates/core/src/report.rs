//! Report bundles: summaries, comparisons, sensitivity tables and plot data
//! for a simulation run, written as JSON and CSV files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fit::Objective;
use crate::io::serialize_model;
use crate::model::InfluenceDiagram;
use crate::query::{run_query, QueryError, QueryResult};
use crate::sampler::RowFit;
use crate::sensitivity::{correlate, InputTrace, SensitivityError, SensitivityResult};
use crate::simulate::{Coupling, Scenario, SimulationRun};
use crate::stats::{compare_scenarios, density_grid, overlap_coefficient, summarize, ComparisonStats, StatsError, SummaryStats};

/// Significant digits of every number written to a report.
pub const SIGNIFICANT_DIGITS: usize = 12;
pub const DENSITY_POINTS: usize = 512;
/// Scatter files keep the first this many draws.
pub const SCATTER_DRAWS: usize = 5000;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("query `{query}`: {source}")]
    Stats { query: String, source: StatsError },
    #[error("query `{query}`, {scenario}: {source}")]
    Sensitivity {
        query: String,
        scenario: &'static str,
        source: SensitivityError,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub draws: usize,
    pub fit: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    pub coupling: Coupling,
    pub interval_mass: f64,
    pub density_points: usize,
    pub scatter_draws: usize,
    /// The simulated model, in model-file form.
    pub model: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub summary: SummaryStats,
    pub density: Vec<(f64, f64)>,
    pub sensitivity: Option<SensitivityResult>,
    /// Output and input values of the first draws, for scatter plots.
    pub scatter_output: Vec<f64>,
    pub scatter_inputs: Vec<InputTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryReport {
    pub name: String,
    pub title: Option<String>,
    pub exact: QueryResult,
    pub test: ScenarioReport,
    pub no_test: ScenarioReport,
    /// Absent when too many draws leave a ratio undefined.
    pub comparison: Option<ComparisonStats>,
    pub overlap_coefficient: f64,
}

impl QueryReport {
    pub fn scenario(&self, s: Scenario) -> &ScenarioReport {
        match s {
            Scenario::Test => &self.test,
            Scenario::NoTest => &self.no_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub manifest: Manifest,
    pub queries: Vec<QueryReport>,
}

pub fn manifest_for(diagram: &InfluenceDiagram, run: &SimulationRun) -> Manifest {
    let (fit, objective) = match run.config.fit {
        RowFit::ThreePoint(o) => (
            "three-point",
            Some(match o {
                Objective::Quantile => "quantile",
                Objective::Probability => "probability",
            }),
        ),
        RowFit::TwoPoint => ("two-point", None),
    };
    Manifest {
        tool: "pathwise".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: run.config.seed,
        draws: run.config.draws,
        fit: fit.into(),
        objective: objective.map(Into::into),
        coupling: run.config.coupling,
        interval_mass: run.config.interval_mass,
        density_points: DENSITY_POINTS,
        scatter_draws: SCATTER_DRAWS,
        model: serde_json::from_str(&serialize_model(diagram)).expect("serialized model is JSON"),
    }
}

fn scenario_report(
    diagram: &InfluenceDiagram,
    run: &SimulationRun,
    name: &str,
    s: Scenario,
) -> Result<ScenarioReport, ReportError> {
    let query = diagram
        .query(name)
        .ok_or_else(|| QueryError::MissingQuery(name.to_string()))?;
    let samples = run
        .query(name)
        .ok_or_else(|| QueryError::MissingQuery(name.to_string()))?
        .scenario(s);
    let summary = summarize(samples, run.config.interval_mass).map_err(|source| ReportError::Stats {
        query: name.to_string(),
        source,
    })?;
    let traces = run.traces(diagram, query, s)?;
    let sensitivity = match correlate(samples, &traces) {
        Ok(r) => Some(r),
        // a constant output has nothing to rank
        Err(SensitivityError::ZeroVariance) => None,
        Err(source) => {
            return Err(ReportError::Sensitivity {
                query: name.to_string(),
                scenario: s.tag(),
                source,
            })
        }
    };
    let keep = SCATTER_DRAWS.min(samples.len());
    Ok(ScenarioReport {
        summary,
        density: density_grid(samples, DENSITY_POINTS),
        sensitivity,
        scatter_output: samples[..keep].to_vec(),
        scatter_inputs: traces
            .into_iter()
            .map(|mut t| {
                t.samples.truncate(keep);
                t
            })
            .collect(),
    })
}

/// Builds the report for every query in the run.
pub fn build_report(diagram: &InfluenceDiagram, run: &SimulationRun) -> Result<ReportBundle, ReportError> {
    let mut queries = Vec::with_capacity(run.queries.len());
    for q in &run.queries {
        let def = diagram
            .query(&q.name)
            .ok_or_else(|| QueryError::MissingQuery(q.name.clone()))?;
        queries.push(QueryReport {
            name: q.name.clone(),
            title: def.title.clone(),
            exact: run_query(diagram, def)?,
            test: scenario_report(diagram, run, &q.name, Scenario::Test)?,
            no_test: scenario_report(diagram, run, &q.name, Scenario::NoTest)?,
            comparison: compare_scenarios(&q.with_test, &q.without_test, run.config.interval_mass).ok(),
            overlap_coefficient: overlap_coefficient(&q.with_test, &q.without_test, DENSITY_POINTS),
        });
    }
    Ok(ReportBundle {
        manifest: manifest_for(diagram, run),
        queries,
    })
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Number formatted for a report file.
pub fn format_number(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        r.to_string()
    }
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => {
            if let Some(x) = n.as_f64() {
                if let Some(m) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = m;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Letters, digits, `-` and `_` only, so a label can sit in a file name.
pub fn file_token(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn summary_json(bundle: &ReportBundle) -> Value {
    let queries: Vec<Value> = bundle
        .queries
        .iter()
        .map(|q| {
            let mut scenarios = serde_json::Map::new();
            for s in Scenario::BOTH {
                let r = q.scenario(s);
                let ranking: Vec<Value> = r
                    .sensitivity
                    .iter()
                    .flat_map(|x| &x.entries)
                    .map(|e| serde_json::json!({"label": e.label, "r2": e.r2}))
                    .collect();
                scenarios.insert(
                    s.tag().to_string(),
                    serde_json::json!({"summary": r.summary, "sensitivity": ranking}),
                );
            }
            serde_json::json!({
                "name": q.name,
                "title": q.title,
                "exact": q.exact,
                "scenarios": scenarios,
                "comparison": q.comparison,
                "overlap_coefficient": q.overlap_coefficient,
            })
        })
        .collect();
    serde_json::json!({ "queries": queries })
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json(path: &Path, mut value: Value) -> Result<(), ReportError> {
    round_json(&mut value);
    let mut text = serde_json::to_string_pretty(&value).expect("report values serialize");
    text.push('\n');
    write_text(path, &text)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), ReportError> {
    let csv_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the bundle into `dir`, creating it if needed. Returns the written
/// paths in a fixed order.
pub fn emit_report(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let manifest = dir.join("manifest.json");
    write_json(&manifest, serde_json::to_value(&bundle.manifest).expect("manifest serializes"))?;
    written.push(manifest);
    if bundle.queries.is_empty() {
        return Ok(written);
    }
    let summary = dir.join("summary.json");
    write_json(&summary, summary_json(bundle))?;
    written.push(summary);

    for q in &bundle.queries {
        let qt = file_token(&q.name);
        for s in Scenario::BOTH {
            let r = q.scenario(s);
            let path = dir.join(format!("density_{qt}_{}.csv", s.tag()));
            write_csv(
                &path,
                &["x", "density"],
                r.density.iter().map(|&(x, y)| vec![format_number(x), format_number(y)]),
            )?;
            written.push(path);

            if let Some(sens) = &r.sensitivity {
                let path = dir.join(format!("sensitivity_{qt}_{}.csv", s.tag()));
                write_csv(
                    &path,
                    &["rank", "label", "key", "r", "r2", "zero_variance"],
                    sens.entries.iter().map(|e| {
                        vec![
                            e.rank.to_string(),
                            e.label.clone(),
                            e.key.clone(),
                            format_number(e.r),
                            format_number(e.r2),
                            e.zero_variance.to_string(),
                        ]
                    }),
                )?;
                written.push(path);
            }

            let mut seen: BTreeMap<String, usize> = BTreeMap::new();
            for t in &r.scatter_inputs {
                let mut token = file_token(&t.label);
                let n = seen.entry(token.clone()).or_insert(0);
                *n += 1;
                if *n > 1 {
                    token = format!("{token}_{n}");
                }
                let path = dir.join(format!("scatter_{qt}_{}_{token}.csv", s.tag()));
                write_csv(
                    &path,
                    &["input", "output"],
                    t.samples
                        .iter()
                        .zip(&r.scatter_output)
                        .map(|(&x, &y)| vec![format_number(x), format_number(y)]),
                )?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

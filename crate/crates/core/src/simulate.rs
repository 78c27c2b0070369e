//! Monte Carlo propagation of judgement uncertainty to query probabilities.
//!
//! Every elicited CPT row gets its own random stream, keyed by the seed, the
//! row's position in the diagram and a scenario tag; the draw index selects
//! the stream's counter. A draw therefore sees the same numbers however the
//! draws are split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{CompiledDiagram, CompiledEvent};
use crate::fit::FitError;
use crate::model::{CellRef, CptEntry, InfluenceDiagram, ModelError, NodeId, NodeKind};
use crate::query::{QueryDefinition, QueryError};
use crate::sampler::{build_row_sampler, RowFit, RowSampler};
use crate::sensitivity::{dependent_inputs, input_label, InputTrace};

pub const DEFAULT_DRAWS: usize = 200_000;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PATHWISE_THREADS";

const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Test,
    NoTest,
}

impl Scenario {
    pub const BOTH: [Scenario; 2] = [Scenario::Test, Scenario::NoTest];

    /// Short tag used in file names.
    pub fn tag(&self) -> &'static str {
        match self {
            Scenario::Test => "test",
            Scenario::NoTest => "notest",
        }
    }

    pub fn decision<'q>(&self, query: &'q QueryDefinition) -> &'q str {
        match self {
            Scenario::Test => &query.with,
            Scenario::NoTest => &query.without,
        }
    }
}

/// How rows that do not depend on the scenario node are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// One draw per row, seen by both scenarios.
    #[default]
    Shared,
    /// Separate draws for each scenario.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub draws: usize,
    pub seed: u64,
    pub fit: RowFit,
    pub interval_mass: f64,
    pub coupling: Coupling,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            draws: DEFAULT_DRAWS,
            seed: 0,
            fit: RowFit::default(),
            interval_mass: 0.95,
            coupling: Coupling::Shared,
        }
    }
}

impl SimulationConfig {
    pub fn check(&self) -> Result<(), SimulationError> {
        if self.draws == 0 {
            return Err(SimulationError::InvalidConfig("draws must be at least 1".into()));
        }
        if !(self.interval_mass > 0.0 && self.interval_mass < 1.0) {
            return Err(SimulationError::InvalidConfig(format!(
                "interval mass must lie in (0, 1), got {}",
                self.interval_mass
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot fit row {row}: {source}")]
    Fit { row: String, source: FitError },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl From<ModelError> for SimulationError {
    fn from(e: ModelError) -> Self {
        SimulationError::Query(QueryError::Model(e))
    }
}

/// Paired output samples of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySamples {
    pub name: String,
    pub with_test: Vec<f64>,
    pub without_test: Vec<f64>,
}

impl QuerySamples {
    pub fn scenario(&self, s: Scenario) -> &[f64] {
        match s {
            Scenario::Test => &self.with_test,
            Scenario::NoTest => &self.without_test,
        }
    }
}

/// Realised values of one input cell as seen by one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSamples {
    pub cell: CellRef,
    pub scenario: Scenario,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub config: SimulationConfig,
    pub queries: Vec<QuerySamples>,
    /// Every cell some query depends on, per scenario.
    pub inputs: Vec<CellSamples>,
}

impl SimulationRun {
    pub fn query(&self, name: &str) -> Option<&QuerySamples> {
        self.queries.iter().find(|q| q.name == name)
    }

    pub fn input(&self, cell: &CellRef, scenario: Scenario) -> Option<&[f64]> {
        self.inputs
            .iter()
            .find(|c| c.scenario == scenario && &c.cell == cell)
            .map(|c| c.samples.as_slice())
    }

    /// Traces of the inputs `query` depends on under `scenario`, labelled
    /// for that query.
    pub fn traces(
        &self,
        diagram: &InfluenceDiagram,
        query: &QueryDefinition,
        scenario: Scenario,
    ) -> Result<Vec<InputTrace>, QueryError> {
        let mut out = Vec::new();
        for cell in dependent_inputs(diagram, query, scenario.decision(query))? {
            if let Some(samples) = self.input(&cell, scenario) {
                out.push(InputTrace {
                    label: input_label(diagram, query, &cell),
                    key: diagram.cell_key(&cell),
                    samples: samples.to_vec(),
                });
            }
        }
        Ok(out)
    }
}

/// An elicited row ready to be sampled.
struct SampledRow {
    sampler: RowSampler,
    offsets: Vec<usize>,
    /// Whether the row is conditioned on a scenario node.
    scenario_bound: bool,
}

struct Plan {
    compiled: CompiledDiagram,
    rows: Vec<SampledRow>,
    /// Per query: compiled event and decision vectors for test and no-test.
    queries: Vec<(CompiledEvent, [Vec<usize>; 2])>,
    /// Table offset of each traced cell and which scenario's table it reads.
    traces: Vec<(usize, usize)>,
    trace_cells: Vec<(CellRef, Scenario)>,
}

fn plan(diagram: &InfluenceDiagram, queries: &[&QueryDefinition], config: &SimulationConfig) -> Result<Plan, SimulationError> {
    let compiled = CompiledDiagram::new(diagram)?;
    let scenario_nodes: Vec<&NodeId> = queries.iter().map(|q| &q.scenario_node).collect();
    let mut rows = Vec::new();
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
            let sampler = build_row_sampler(row, config.fit).map_err(|source| SimulationError::Fit {
                row: format!("{}|{}", id, diagram.describe_row(id, &row_ref, None)),
                source,
            })?;
            rows.push(SampledRow {
                sampler,
                offsets: compiled.row_offsets(diagram, id, &row_ref)?,
                scenario_bound: node.parents.iter().any(|p| scenario_nodes.contains(&p)),
            });
        }
    }

    let mut compiled_queries = Vec::with_capacity(queries.len());
    let mut trace_cells: Vec<(CellRef, Scenario)> = Vec::new();
    for q in queries {
        let event = compiled.compile_event(diagram, &q.event)?;
        let pos = compiled
            .position(&q.scenario_node)
            .ok_or_else(|| ModelError::UnknownNode(q.scenario_node.clone()))?;
        let mut decisions = [Vec::new(), Vec::new()];
        for (i, s) in Scenario::BOTH.iter().enumerate() {
            let value = diagram.category_index(&q.scenario_node, s.decision(q))?;
            decisions[i] = compiled.decisions(&[(pos, value)]);
            for cell in dependent_inputs(diagram, q, s.decision(q))? {
                let key = (cell, *s);
                if !trace_cells.contains(&key) {
                    trace_cells.push(key);
                }
            }
        }
        compiled_queries.push((event, decisions));
    }
    let mut traces = Vec::with_capacity(trace_cells.len());
    for (cell, s) in &trace_cells {
        let offsets = compiled.row_offsets(diagram, &cell.node, &cell.row)?;
        let table = match s {
            Scenario::Test => 0,
            Scenario::NoTest => 1,
        };
        traces.push((offsets[0] + cell.category, table));
    }
    Ok(Plan {
        compiled,
        rows,
        queries: compiled_queries,
        traces,
        trace_cells,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for one row, scenario tag and draw.
pub fn row_stream(seed: u64, row: usize, tag: u64, draw: usize) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ row as u64) ^ tag);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(draw as u64);
    rng
}

/// Output of one block of draws: per query, test then no-test; per trace.
struct Block {
    outputs: Vec<[Vec<f64>; 2]>,
    traces: Vec<Vec<f64>>,
}

fn run_block(plan: &Plan, config: &SimulationConfig, start: usize, end: usize) -> Result<Block, SimulationError> {
    let n = end - start;
    let mut outputs: Vec<[Vec<f64>; 2]> = plan
        .queries
        .iter()
        .map(|_| [Vec::with_capacity(n), Vec::with_capacity(n)])
        .collect();
    let mut traces: Vec<Vec<f64>> = plan.traces.iter().map(|_| Vec::with_capacity(n)).collect();
    let mut tables = [plan.compiled.table().to_vec(), plan.compiled.table().to_vec()];
    let width = plan.rows.iter().map(|r| r.sampler.width()).max().unwrap_or(0);
    let mut buf = vec![0.0; width];
    for draw in start..end {
        for (k, row) in plan.rows.iter().enumerate() {
            let w = row.sampler.width();
            let split = config.coupling == Coupling::Independent && !row.scenario_bound;
            for (t, table) in tables.iter_mut().enumerate() {
                if t == 0 || split {
                    let tag = if split { t as u64 + 1 } else { 0 };
                    row.sampler.draw(&mut row_stream(config.seed, k, tag, draw), &mut buf);
                }
                for &o in &row.offsets {
                    table[o..o + w].copy_from_slice(&buf[..w]);
                }
            }
        }
        for ((event, decisions), out) in plan.queries.iter().zip(&mut outputs) {
            for t in 0..2 {
                out[t].push(plan.compiled.probability(&tables[t], event, &decisions[t])?);
            }
        }
        for (&(offset, t), trace) in plan.traces.iter().zip(&mut traces) {
            trace.push(tables[t][offset]);
        }
    }
    Ok(Block { outputs, traces })
}

/// Worker count from `PATHWISE_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Simulates every query the diagram defines.
pub fn simulate(diagram: &InfluenceDiagram, config: &SimulationConfig) -> Result<SimulationRun, SimulationError> {
    let queries: Vec<&QueryDefinition> = diagram.queries.iter().collect();
    simulate_queries(diagram, &queries, config, threads_from_env())
}

/// Simulates one query, returning its paired samples.
pub fn simulate_query(
    diagram: &InfluenceDiagram,
    query: &QueryDefinition,
    config: &SimulationConfig,
) -> Result<QuerySamples, SimulationError> {
    let run = simulate_queries(diagram, &[query], config, threads_from_env())?;
    Ok(run.queries.into_iter().next().expect("one query in, one out"))
}

/// Simulates the given queries on at most `threads` workers. The result does
/// not depend on `threads`.
pub fn simulate_queries(
    diagram: &InfluenceDiagram,
    queries: &[&QueryDefinition],
    config: &SimulationConfig,
    threads: Option<usize>,
) -> Result<SimulationRun, SimulationError> {
    config.check()?;
    let plan = plan(diagram, queries, config)?;
    let blocks: Vec<(usize, usize)> = (0..config.draws)
        .step_by(BLOCK)
        .map(|s| (s, (s + BLOCK).min(config.draws)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SimulationError::Pool(e.to_string()))?;
    let results: Vec<Block> = pool.install(|| {
        blocks
            .par_iter()
            .map(|&(s, e)| run_block(&plan, config, s, e))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut out_queries: Vec<QuerySamples> = queries
        .iter()
        .map(|q| QuerySamples {
            name: q.name.clone(),
            with_test: Vec::with_capacity(config.draws),
            without_test: Vec::with_capacity(config.draws),
        })
        .collect();
    let mut inputs: Vec<CellSamples> = plan
        .trace_cells
        .iter()
        .map(|(cell, s)| CellSamples {
            cell: cell.clone(),
            scenario: *s,
            samples: Vec::with_capacity(config.draws),
        })
        .collect();
    for block in results {
        for (q, [w, wo]) in out_queries.iter_mut().zip(block.outputs) {
            q.with_test.extend(w);
            q.without_test.extend(wo);
        }
        for (c, t) in inputs.iter_mut().zip(block.traces) {
            c.samples.extend(t);
        }
    }
    Ok(SimulationRun {
        config: config.clone(),
        queries: out_queries,
        inputs,
    })
}

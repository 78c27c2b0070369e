//! Conditional-beta sampling of whole CPT rows.
//!
//! A row with several elicited categories is drawn as a chain: each elicited
//! category takes a beta-distributed share of whatever mass the earlier
//! categories left over, and the remainder category absorbs the rest. The
//! beta for category k is fitted to its judgement rescaled by the mass still
//! unassigned at best estimates, so the chain reproduces the elicited best
//! estimates at its centre.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::beta::InvalidShape;
use crate::fit::{fit_three_point_with, fit_two_point, FitError, FitReport, Objective};
use crate::model::{CptEntry, CptRow, ElicitedTriple};

/// How each elicited cell of a row is turned into a beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowFit {
    ThreePoint(Objective),
    TwoPoint,
}

impl Default for RowFit {
    fn default() -> Self {
        RowFit::ThreePoint(Objective::default())
    }
}

impl RowFit {
    pub fn fit(&self, triple: &ElicitedTriple) -> Result<FitReport, FitError> {
        match self {
            RowFit::ThreePoint(objective) => fit_three_point_with(triple, *objective),
            RowFit::TwoPoint => fit_two_point(triple.best, triple.q95),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainLink {
    pub category: usize,
    /// The judgement after rescaling by the remaining best-estimate mass.
    pub conditional: ElicitedTriple,
    pub fit: FitReport,
    dist: Beta<f64>,
}

#[derive(Debug, Clone)]
pub struct RowSampler {
    width: usize,
    fixed: Vec<(usize, f64)>,
    free_mass: f64,
    chain: Vec<ChainLink>,
    remainder: Option<usize>,
}

impl RowSampler {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn links(&self) -> &[ChainLink] {
        &self.chain
    }

    pub fn is_constant(&self) -> bool {
        self.chain.is_empty()
    }

    /// Writes one realised probability vector into `out`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        out[..self.width].fill(0.0);
        for &(c, p) in &self.fixed {
            out[c] = p;
        }
        let mut remaining = self.free_mass;
        for link in &self.chain {
            let share: f64 = link.dist.sample(rng);
            let v = share * remaining;
            out[link.category] = v;
            remaining = (remaining - v).max(0.0);
        }
        if let Some(r) = self.remainder {
            out[r] = remaining;
        }
    }
}

/// Builds the chain for one row. Rows without an explicit remainder use their
/// last elicited category as the remainder.
pub fn build_row_sampler(row: &CptRow, method: RowFit) -> Result<RowSampler, FitError> {
    let mut fixed = Vec::new();
    let mut elicited = Vec::new();
    let mut remainder = None;
    for (c, e) in row.entries.iter().enumerate() {
        match e {
            CptEntry::Structural(p) | CptEntry::Fixed(p) => fixed.push((c, *p)),
            CptEntry::Elicited(t) => elicited.push((c, *t)),
            CptEntry::Remainder(_) => remainder = Some(c),
        }
    }
    if remainder.is_none() {
        remainder = elicited.pop().map(|(c, _)| c);
    }
    let fixed_mass: f64 = fixed.iter().map(|(_, p)| p).sum();
    let free_mass = (1.0 - fixed_mass).max(0.0);
    let mut at_best = free_mass;
    let mut chain = Vec::with_capacity(elicited.len());
    for (category, triple) in elicited {
        if at_best <= 0.0 {
            return Err(FitError::NoRemainingMass);
        }
        let conditional = triple.rescaled(at_best);
        let fit = method.fit(&conditional)?;
        let dist = Beta::new(fit.params.a, fit.params.b).map_err(|_| {
            FitError::Shape(InvalidShape {
                a: fit.params.a,
                b: fit.params.b,
            })
        })?;
        chain.push(ChainLink {
            category,
            conditional,
            fit,
            dist,
        });
        at_best -= triple.best;
    }
    Ok(RowSampler {
        width: row.entries.len(),
        fixed,
        free_mass,
        chain,
        remainder,
    })
}

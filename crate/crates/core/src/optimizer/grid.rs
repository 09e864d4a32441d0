use crate::error::{invalid, Error, Result};
use crate::pricing::{Instance, PlanKind, PlanStructure, FEASIBILITY_TOL};

use super::model::PriceModel;
use super::{result_from, ObjectiveSpec, SolveResult};

/// Largest number of price dimensions the grid oracle accepts.
pub const MAX_GRID_DIMENSION: usize = 3;

/// Candidate prices per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    axes: Vec<Vec<f64>>,
}

impl GridSpec {
    /// One axis per price dimension.
    pub fn new(axes: Vec<Vec<f64>>) -> Self {
        Self { axes }
    }

    /// The same axis for every dimension.
    pub fn uniform(axis: Vec<f64>) -> Self {
        Self { axes: vec![axis] }
    }

    /// `start, start + step, …` up to and including `stop`.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
            return Err(invalid("grid", format!("bad range {start}..={stop} step {step}")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok(Self::uniform((0..n).map(|k| start + k as f64 * step).collect()))
    }

    fn axes_for(&self, d: usize) -> Result<Vec<&[f64]>> {
        match self.axes.len() {
            1 => Ok(vec![self.axes[0].as_slice(); d]),
            n if n == d => Ok(self.axes.iter().map(Vec::as_slice).collect()),
            n => Err(Error::Dimension(format!("grid has {n} axes for {d} prices"))),
        }
    }
}

/// Exhaustive search over a price grid. Infeasible points and points where
/// some user earns no surplus are skipped; ties keep the first point in
/// lexicographic order.
pub fn grid_oracle(instance: &Instance, kind: PlanKind, spec: &ObjectiveSpec, grid: &GridSpec) -> Result<SolveResult> {
    grid_oracle_with(instance, PlanStructure::new(instance, kind, None)?, spec, grid)
}

pub fn grid_oracle_with(
    instance: &Instance,
    structure: PlanStructure,
    spec: &ObjectiveSpec,
    grid: &GridSpec,
) -> Result<SolveResult> {
    let d = structure.dimension();
    if d > MAX_GRID_DIMENSION {
        return Err(Error::Dimension(format!(
            "grid oracle supports at most {MAX_GRID_DIMENSION} prices, plan has {d}"
        )));
    }
    let axes = grid.axes_for(d)?;
    if axes.iter().any(|a| a.is_empty()) {
        return Err(Error::EmptyGrid);
    }
    let model = PriceModel::new(instance, structure, *spec);
    let mut index = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluations = 0;
    'outer: loop {
        for k in 0..d {
            point[k] = axes[k][index[k]];
        }
        evaluations += 1;
        if point.iter().all(|&v| v > 0.0) {
            if let Some(resp) = model.responses(&point) {
                if model.feasible(&resp, FEASIBILITY_TOL) {
                    let value = model.objective_of(&resp);
                    if best.as_ref().is_none_or(|(b, _)| value > *b) {
                        best = Some((value, point.clone()));
                    }
                }
            }
        }
        // odometer, last axis fastest
        for k in (0..d).rev() {
            index[k] += 1;
            if index[k] < axes[k].len() {
                continue 'outer;
            }
            index[k] = 0;
        }
        break;
    }
    let (_, prices) = best.ok_or(Error::EmptyGrid)?;
    let plan = model.structure.plan(&prices);
    result_from(instance, plan, spec, evaluations, true, f64::NAN, Vec::new())
}

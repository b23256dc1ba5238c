//! Incremental MILP wrapper over HiGHS.
//!
//! The wrapper keeps an exact copy of every row and bound. Solver values of
//! integer columns are rounded and the rows over integer columns are then
//! re-checked in exact arithmetic, so downstream code never trusts a float
//! comparison for feasibility.

use std::time::{Duration, Instant};

use highs::{Col, HighsModelStatus, HighsSolutionStatus, Model, RowProblem, Sense};
use log::debug;
use num_traits::{Signed, ToPrimitive};

use crate::error::{IpgError, Result};
use crate::game::OptSense;
use crate::lifting::LiftedModel;
use crate::linear::{LinExpr, LinearRow};
use crate::rational::{self, Rational};

/// Environment variable selecting the MILP engine.
pub const BACKEND_ENV: &str = "IPG_MILP_BACKEND";

const INTEGRALITY_TOL: f64 = 1e-6;
const CONTINUOUS_ROW_TOL: f64 = 1e-5;

/// Name of the engine selected through [`BACKEND_ENV`]; only HiGHS is built in.
pub fn backend_name() -> Result<&'static str> {
    match std::env::var(BACKEND_ENV) {
        Err(_) => Ok("highs"),
        Ok(v) if v.is_empty() || v.eq_ignore_ascii_case("highs") => Ok("highs"),
        Ok(v) => Err(IpgError::Backend(format!(
            "unknown MILP backend {v:?}; available: highs"
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Time limit hit; `values` holds the incumbent if there is one.
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Column values: integer columns exact, continuous ones from the solver.
    pub values: Option<Vec<Rational>>,
    /// Objective value as reported by the engine, constant included.
    pub objective: Option<f64>,
    /// Best bound on the objective, constant included.
    pub bound: Option<f64>,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
struct ColumnInfo {
    lower: Rational,
    upper: Rational,
    integer: bool,
}

pub struct MilpModel {
    inner: Option<Model>,
    cols: Vec<Col>,
    info: Vec<ColumnInfo>,
    rows: Vec<LinearRow>,
    objective: LinExpr,
    sense: OptSense,
    time_limit: Option<Duration>,
    label: String,
    solves: usize,
}

impl std::fmt::Debug for MilpModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MilpModel")
            .field("label", &self.label)
            .field("columns", &self.cols.len())
            .field("rows", &self.rows.len())
            .finish()
    }
}

fn highs_sense(sense: OptSense) -> Sense {
    match sense {
        OptSense::Maximize => Sense::Maximise,
        OptSense::Minimize => Sense::Minimise,
    }
}

impl MilpModel {
    pub fn new(sense: OptSense, label: impl Into<String>) -> Result<Self> {
        backend_name()?;
        let mut model = RowProblem::default().optimise(highs_sense(sense));
        model.make_quiet();
        model.set_option("mip_rel_gap", 0.0);
        model.set_option("mip_abs_gap", 0.0);
        model.set_option("mip_feasibility_tolerance", 1e-7);
        Ok(Self {
            inner: Some(model),
            cols: Vec::new(),
            info: Vec::new(),
            rows: Vec::new(),
            objective: LinExpr::new(),
            sense,
            time_limit: None,
            label: label.into(),
            solves: 0,
        })
    }

    /// A model holding every column and row of `lifted`, with no objective.
    pub fn from_lifted(
        lifted: &LiftedModel,
        sense: OptSense,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mut m = Self::new(sense, label)?;
        for col in lifted.columns() {
            m.add_column(col.lower, col.upper, col.integer)?;
        }
        for row in lifted.rows() {
            m.add_row(row.row.clone())?;
        }
        Ok(m)
    }

    fn model(&mut self) -> &mut Model {
        self.inner
            .as_mut()
            .expect("model is present between solves")
    }

    pub fn num_columns(&self) -> usize {
        self.cols.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn sense(&self) -> OptSense {
        self.sense
    }

    pub fn add_column(&mut self, lower: Rational, upper: Rational, integer: bool) -> Result<usize> {
        if lower > upper {
            return Err(IpgError::Internal(format!(
                "empty column bounds [{lower}, {upper}]"
            )));
        }
        let (lo, hi) = (rational::to_f64(&lower), rational::to_f64(&upper));
        let col = self
            .model()
            .try_add_column_with_integrality(0.0, lo..=hi, std::iter::empty(), integer)
            .map_err(|e| IpgError::Backend(format!("add column: {e:?}")))?;
        self.cols.push(col);
        self.info.push(ColumnInfo {
            lower,
            upper,
            integer,
        });
        Ok(self.cols.len() - 1)
    }

    pub fn add_row(&mut self, row: LinearRow) -> Result<usize> {
        if let Some(c) = row.max_column() {
            if c >= self.cols.len() {
                return Err(IpgError::Internal(format!("row references column {c}")));
            }
        }
        let factors: Vec<(Col, f64)> = row
            .terms
            .iter()
            .map(|&(c, a)| (self.cols[c], a as f64))
            .collect();
        let lo = row.lower.map_or(f64::NEG_INFINITY, |v| v as f64);
        let hi = row.upper.map_or(f64::INFINITY, |v| v as f64);
        self.model()
            .try_add_row(lo..=hi, factors)
            .map_err(|e| IpgError::Backend(format!("add row: {e:?}")))?;
        self.rows.push(row);
        Ok(self.rows.len() - 1)
    }

    pub fn set_bounds(&mut self, col: usize, lower: Rational, upper: Rational) {
        let c = self.cols[col];
        let (lo, hi) = (rational::to_f64(&lower), rational::to_f64(&upper));
        self.model().change_column_bounds(c, lo..=hi);
        self.info[col].lower = lower;
        self.info[col].upper = upper;
    }

    pub fn bounds(&self, col: usize) -> (Rational, Rational) {
        (self.info[col].lower, self.info[col].upper)
    }

    pub fn set_objective(&mut self, objective: &LinExpr) {
        for c in self.objective.terms.keys().copied().collect::<Vec<_>>() {
            let col = self.cols[c];
            self.model().change_column_cost(col, 0.0);
        }
        for (&c, v) in &objective.terms {
            let col = self.cols[c];
            let cost = rational::to_f64(v);
            self.model().change_column_cost(col, cost);
        }
        self.objective = objective.clone();
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn set_time_limit(&mut self, limit: Option<Duration>) {
        self.time_limit = limit;
    }

    pub fn solve(&mut self) -> Result<SolveOutcome> {
        let start = Instant::now();
        self.solves += 1;
        if self.cols.is_empty() {
            return Ok(self.solve_empty(start));
        }
        let limit = self
            .time_limit
            .map_or(f64::INFINITY, |d| d.as_secs_f64().max(1e-3));
        self.model().set_option("time_limit", limit);
        let model = self.inner.take().expect("model is present between solves");
        let solved = model
            .try_solve()
            .map_err(|e| IpgError::Backend(format!("HiGHS run failed: {e:?}")))?;
        let status = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let floats = has_primal.then(|| solved.get_solution().columns().to_vec());
        let constant = rational::to_f64(&self.objective.constant);
        let objective = has_primal.then(|| solved.objective_value() + constant);
        let bound = solved
            .double_info_value(c"mip_dual_bound")
            .ok()
            .filter(|b| b.is_finite())
            .map(|b| b + constant);
        self.inner = Some(Model::from(solved));
        let elapsed = start.elapsed();
        let status = match status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                SolveStatus::Infeasible
            }
            HighsModelStatus::ReachedTimeLimit => SolveStatus::TimeLimit,
            other => {
                return Err(IpgError::Backend(format!(
                    "{}: unexpected HiGHS status {other:?}",
                    self.label
                )));
            }
        };
        let values = match (status, floats) {
            (SolveStatus::Infeasible, _) | (_, None) => None,
            (_, Some(f)) => Some(self.exact_values(&f)?),
        };
        if status == SolveStatus::Optimal && values.is_none() {
            return Err(IpgError::Backend(format!(
                "{}: optimal status without a solution",
                self.label
            )));
        }
        debug!(
            "solve label={} n={} cols={} rows={} status={:?} obj={} bound={} time={:.4}",
            self.label,
            self.solves,
            self.cols.len(),
            self.rows.len(),
            status,
            objective.map_or("-".into(), |v| format!("{v}")),
            bound.map_or("-".into(), |v| format!("{v}")),
            elapsed.as_secs_f64()
        );
        Ok(SolveOutcome {
            status,
            values,
            objective,
            bound,
            elapsed,
        })
    }

    fn solve_empty(&self, start: Instant) -> SolveOutcome {
        let feasible = self.rows.iter().all(|r| r.is_satisfied(&[]));
        let obj = rational::to_f64(&self.objective.constant);
        SolveOutcome {
            status: if feasible {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            },
            values: feasible.then(Vec::new),
            objective: feasible.then_some(obj),
            bound: feasible.then_some(obj),
            elapsed: start.elapsed(),
        }
    }

    /// Rounds integer columns and re-verifies the rows over them exactly.
    fn exact_values(&self, floats: &[f64]) -> Result<Vec<Rational>> {
        let mut values = Vec::with_capacity(floats.len());
        for (c, (&v, info)) in floats.iter().zip(&self.info).enumerate() {
            if info.integer {
                let r = v.round();
                if (v - r).abs() > INTEGRALITY_TOL {
                    return Err(IpgError::Numerical(format!(
                        "{}: column {c} = {v} is not integral",
                        self.label
                    )));
                }
                let r = Rational::from_integer(r.to_i128().unwrap_or(0));
                if r < info.lower || r > info.upper {
                    return Err(IpgError::Numerical(format!(
                        "{}: column {c} = {r} outside its bounds",
                        self.label
                    )));
                }
                values.push(r);
            } else {
                values.push(rational::from_f64(v).clamp(info.lower, info.upper));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            let all_int = row.terms.iter().all(|&(c, _)| self.info[c].integer);
            if all_int {
                if !row.is_satisfied(&values) {
                    return Err(IpgError::Numerical(format!(
                        "{}: row {r} violated by {} after rounding",
                        self.label,
                        row.violation(&values)
                    )));
                }
            } else {
                let act = row.activity_f64(floats);
                let scale = 1.0
                    + row
                        .terms
                        .iter()
                        .map(|&(_, a)| (a as f64).abs())
                        .sum::<f64>();
                let lo_bad = row
                    .lower
                    .is_some_and(|l| act < l as f64 - CONTINUOUS_ROW_TOL * scale);
                let hi_bad = row
                    .upper
                    .is_some_and(|u| act > u as f64 + CONTINUOUS_ROW_TOL * scale);
                if lo_bad || hi_bad {
                    return Err(IpgError::Numerical(format!(
                        "{}: row {r} over continuous columns violated (activity {act})",
                        self.label
                    )));
                }
            }
        }
        Ok(values)
    }

    /// Exact objective of a value vector.
    pub fn objective_at(&self, values: &[Rational]) -> Rational {
        self.objective.evaluate(values)
    }
}

/// `true` when `a` is strictly better than `b` by more than zero, exactly.
pub fn strictly_better(sense: OptSense, a: &Rational, b: &Rational) -> bool {
    let d = (a - b) * sense.sign();
    d.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::RowSense;
    use crate::rational::int;

    #[test]
    fn small_knapsack() {
        // max 5a + 4b + 3c, 2a + 3b + c <= 4 (ints in [0,1]) -> a = c = 1
        let mut m = MilpModel::new(OptSense::Maximize, "test").unwrap();
        for _ in 0..3 {
            m.add_column(int(0), int(1), true).unwrap();
        }
        m.add_row(LinearRow::new(
            vec![(0, 2), (1, 3), (2, 1)],
            RowSense::Le,
            4,
        ))
        .unwrap();
        let mut obj = LinExpr::constant(int(1));
        obj.add_term(0, int(5));
        obj.add_term(1, int(4));
        obj.add_term(2, int(3));
        m.set_objective(&obj);
        let out = m.solve().unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let v = out.values.unwrap();
        assert_eq!(v, vec![int(1), int(0), int(1)]);
        assert_eq!(m.objective_at(&v), int(9));
        assert!((out.objective.unwrap() - 9.0).abs() < 1e-9);

        // incremental: forbid a
        m.add_row(LinearRow::new(vec![(0, 1)], RowSense::Le, 0))
            .unwrap();
        let v = m.solve().unwrap().values.unwrap();
        assert_eq!(m.objective_at(&v), int(8));

        // fix b to 1 via bounds
        m.set_bounds(1, int(1), int(1));
        let v = m.solve().unwrap().values.unwrap();
        assert_eq!(v, vec![int(0), int(1), int(1)]);
    }

    #[test]
    fn infeasible_model() {
        let mut m = MilpModel::new(OptSense::Minimize, "test").unwrap();
        m.add_column(int(0), int(3), true).unwrap();
        m.add_row(LinearRow::new(vec![(0, 2)], RowSense::Eq, 3))
            .unwrap();
        assert_eq!(m.solve().unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn empty_model_is_trivially_optimal() {
        let mut m = MilpModel::new(OptSense::Maximize, "test").unwrap();
        m.set_objective(&LinExpr::constant(int(7)));
        let out = m.solve().unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.objective, Some(7.0));
    }

    #[test]
    fn default_backend_is_highs() {
        assert_eq!(backend_name().unwrap(), "highs");
    }

    #[test]
    fn strict_comparison() {
        assert!(strictly_better(OptSense::Maximize, &int(2), &int(1)));
        assert!(!strictly_better(OptSense::Maximize, &int(1), &int(1)));
        assert!(strictly_better(OptSense::Minimize, &int(1), &int(2)));
    }
}

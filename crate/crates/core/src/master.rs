//! Cutting-plane loop: optimize the welfare over the lifted feasible set,
//! ask the oracle whether the incumbent is an equilibrium, add the
//! inequalities it returns, repeat.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use log::{info, warn};
use num_traits::{Signed, Zero};

use crate::bruteforce::price;
use crate::error::{input, IpgError, Result};
use crate::game::{GameInstance, OptSense, RowSense, StrategyProfile};
use crate::lifting::LiftedModel;
use crate::linear::{LinExpr, LinearRow};
use crate::milp::{MilpModel, SolveStatus};
use crate::oracle::{CutMode, EquilibriumCut, Oracle, Provenance};
use crate::rational::{self, int, Rational};
use crate::report::{Counters, PneEntry, SolveReport, Status, TraceEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Welfare-best equilibrium.
    Select,
    /// Every equilibrium in welfare order, up to `limit`.
    Enumerate { limit: Option<usize> },
    /// Regret of every player at most `eps`.
    EpsilonAbs(Rational),
    /// Smallest achievable absolute epsilon; `bound` caps the epsilon column.
    EpsilonMin { bound: Option<Rational> },
    /// Payoff at least `eps` times the best-response value.
    EpsilonRel(Rational),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CutBatch {
    #[default]
    All,
    One,
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub mode: Mode,
    pub time_limit: Option<Duration>,
    pub cut_batch: CutBatch,
    pub parallel_oracle: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Select,
            time_limit: None,
            cut_batch: CutBatch::All,
            parallel_oracle: false,
        }
    }
}

impl SolveConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Enumerate { limit: Some(0) } => input("enumeration limit must be at least 1"),
            Mode::EpsilonAbs(e) | Mode::EpsilonRel(e) if e.is_negative() => {
                input("epsilon must be nonnegative")
            }
            Mode::EpsilonMin { bound: Some(b) } if b.is_negative() => {
                input("epsilon bound must be nonnegative")
            }
            _ => Ok(()),
        }
    }
}

/// A lifted game plus optional pools of extra equilibrium inequalities,
/// separated lazily against each incumbent.
pub struct Solver<'g> {
    game: &'g GameInstance,
    lifted: LiftedModel,
    pool: Vec<EquilibriumCut>,
}

impl<'g> Solver<'g> {
    pub fn new(game: &'g GameInstance) -> Result<Self> {
        Ok(Self {
            game,
            lifted: LiftedModel::build(game)?,
            pool: Vec::new(),
        })
    }

    pub fn lifted(&self) -> &LiftedModel {
        &self.lifted
    }

    pub fn add_pool(&mut self, cuts: impl IntoIterator<Item = EquilibriumCut>) {
        self.pool.extend(cuts);
    }

    pub fn run(&self, config: &SolveConfig) -> Result<SolveReport> {
        self.run_with_cuts(config).map(|(r, _)| r)
    }

    /// Same as [`Solver::run`], also returning every inequality added to
    /// the master (no-good rows excluded).
    pub fn run_with_cuts(
        &self,
        config: &SolveConfig,
    ) -> Result<(SolveReport, Vec<EquilibriumCut>)> {
        config.validate()?;
        Run::new(self, config)?.execute()
    }
}

pub fn select_best_pne(game: &GameInstance, config: &SolveConfig) -> Result<SolveReport> {
    Solver::new(game)?.run(config)
}

pub fn enumerate_pnes(game: &GameInstance, config: &SolveConfig) -> Result<SolveReport> {
    if !matches!(config.mode, Mode::Enumerate { .. }) {
        return input("enumerate_pnes needs the enumerate mode");
    }
    Solver::new(game)?.run(config)
}

pub fn epsilon_pne(game: &GameInstance, config: &SolveConfig) -> Result<SolveReport> {
    if !matches!(
        config.mode,
        Mode::EpsilonAbs(_) | Mode::EpsilonMin { .. } | Mode::EpsilonRel(_)
    ) {
        return input("epsilon_pne needs an epsilon mode");
    }
    Solver::new(game)?.run(config)
}

struct Run<'s, 'g> {
    solver: &'s Solver<'g>,
    config: &'s SolveConfig,
    master: MilpModel,
    oracle: Oracle<'s>,
    eps_col: Option<usize>,
    pool_used: Vec<bool>,
    start: Instant,
    deadline: Option<Instant>,
    report: SolveReport,
    /// Visited profiles with the epsilon column value at the visit.
    seen: HashMap<StrategyProfile, Rational>,
    added: Vec<EquilibriumCut>,
    exhausted: bool,
}

impl<'s, 'g> Run<'s, 'g> {
    fn new(solver: &'s Solver<'g>, config: &'s SolveConfig) -> Result<Self> {
        let game = solver.game;
        let start = Instant::now();
        let mut master = MilpModel::from_lifted(&solver.lifted, game.sense(), "master")?;
        master.set_objective(solver.lifted.welfare());
        let oracle = Oracle::new(game, &solver.lifted)
            .parallel(config.parallel_oracle)
            .one_cut(config.cut_batch == CutBatch::One);
        let epsilon_mode = matches!(
            config.mode,
            Mode::EpsilonAbs(_) | Mode::EpsilonMin { .. } | Mode::EpsilonRel(_)
        );
        if epsilon_mode && !solver.pool.is_empty() {
            warn!("strategic cuts are exact equilibrium inequalities; ignored in epsilon mode");
        }
        if let Mode::EpsilonRel(_) = config.mode {
            if game.sense() != OptSense::Maximize {
                return input("relative epsilon mode needs maximization payoffs");
            }
        }
        Ok(Self {
            solver,
            config,
            master,
            oracle,
            eps_col: None,
            pool_used: vec![epsilon_mode; solver.pool.len()],
            start,
            deadline: config.time_limit.map(|d| start + d),
            report: SolveReport {
                status: Status::NoPne,
                pnes: Vec::new(),
                osw: None,
                osw_profile: None,
                pos: None,
                poa: None,
                epsilon: None,
                counters: Counters::default(),
                time_total: 0.0,
                time_first: None,
                bound: None,
                trace: Vec::new(),
            },
            seen: HashMap::new(),
            added: Vec::new(),
            exhausted: false,
        })
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn finish(mut self, status: Status) -> (SolveReport, Vec<EquilibriumCut>) {
        self.report.status = status;
        self.report.time_total = self.elapsed();
        let sense = self.solver.game.sense();
        if let (Some(osw), Some(first)) = (self.report.osw, self.report.pnes.first()) {
            self.report.pos = price(sense, &osw, &first.welfare);
            if self.exhausted && matches!(self.config.mode, Mode::Enumerate { .. }) {
                if let Some(last) = self.report.pnes.last() {
                    self.report.poa = price(sense, &osw, &last.welfare);
                }
            }
        }
        info!(
            "done status={} pnes={} iterations={} ei={} time={:.3}",
            status.as_str(),
            self.report.pnes.len(),
            self.report.counters.iterations,
            self.report.counters.ei,
            self.report.time_total
        );
        (self.report, self.added)
    }

    fn solve_master(&mut self) -> Result<(SolveStatus, Option<Vec<Rational>>, Option<f64>)> {
        if let Some(d) = self.deadline {
            self.master
                .set_time_limit(Some(d.saturating_duration_since(Instant::now())));
        }
        let out = self.master.solve()?;
        if out.status == SolveStatus::TimeLimit {
            self.report.bound = out.bound.or(self.report.bound);
        } else if out.objective.is_some() {
            self.report.bound = out.objective;
        }
        Ok((out.status, out.values, out.objective))
    }

    fn execute(mut self) -> Result<(SolveReport, Vec<EquilibriumCut>)> {
        let solver = self.solver;
        let game = solver.game;
        let lifted = &solver.lifted;

        // welfare optimum over the whole feasible set
        let (status, values, objective) = self.solve_master()?;
        match status {
            SolveStatus::Infeasible => return input("the joint feasible set is empty"),
            SolveStatus::TimeLimit => return Ok(self.finish(Status::TimeLimit)),
            SolveStatus::Optimal => {}
        }
        let values = values.expect("optimal");
        let first_profile = lifted.decode(&values);
        self.report.osw = Some(game.welfare(&first_profile)?);
        self.report.osw_profile = Some(first_profile);

        let mut pending = Some((values, objective.unwrap_or(0.0)));
        let mode = match self.config.mode {
            Mode::Select | Mode::Enumerate { .. } => CutMode::Exact,
            Mode::EpsilonAbs(e) => CutMode::Absolute(e),
            Mode::EpsilonRel(e) => CutMode::Relative(e),
            Mode::EpsilonMin { bound } => {
                let bound = match bound {
                    Some(b) => b,
                    None => epsilon_bound(game),
                };
                let col = self.master.add_column(int(0), bound, false)?;
                let mut obj = LinExpr::new();
                obj.add_term(col, -game.sense().sign());
                self.master.set_objective(&obj);
                self.eps_col = Some(col);
                pending = None;
                CutMode::AbsoluteColumn {
                    col,
                    current: int(0),
                }
            }
        };
        self.report.counters.iterations = usize::from(pending.is_some());

        loop {
            if self.timed_out() {
                return Ok(self.finish(Status::TimeLimit));
            }
            let (values, objective) = match pending.take() {
                Some(p) => p,
                None => {
                    let (status, values, objective) = self.solve_master()?;
                    self.report.counters.iterations += 1;
                    match status {
                        SolveStatus::Infeasible => {
                            self.exhausted = true;
                            let s = if self.report.pnes.is_empty() {
                                Status::NoPne
                            } else {
                                Status::PneFound
                            };
                            return Ok(self.finish(s));
                        }
                        SolveStatus::TimeLimit => return Ok(self.finish(Status::TimeLimit)),
                        SolveStatus::Optimal => {}
                    }
                    (values.expect("optimal"), objective.unwrap_or(0.0))
                }
            };
            let profile = lifted.decode(&values);
            if !game.is_profile_feasible(&profile)? {
                return Err(IpgError::Numerical(format!(
                    "master returned an infeasible profile {profile}"
                )));
            }
            // with a free epsilon column a profile comes back once its
            // epsilon has been raised; anything else is a numerical loop
            let eps_now = self.eps_col.map_or(Rational::zero(), |c| values[c]);
            let grew = |before: &Rational| {
                self.eps_col.is_some() && eps_now > *before + rational::ratio(1, 1_000_000_000)
            };
            if self.seen.get(&profile).is_some_and(|before| !grew(before)) {
                return Err(IpgError::Numerical(format!(
                    "incumbent {profile} repeated after being cut off"
                )));
            }
            self.seen.insert(profile.clone(), eps_now);
            let welfare = game.welfare(&profile)?;
            self.report.trace.push(TraceEntry {
                objective,
                welfare,
                profile: profile.clone(),
            });

            let cut_mode = match mode {
                CutMode::AbsoluteColumn { col, .. } => CutMode::AbsoluteColumn {
                    col,
                    // solver tolerance on a continuous column
                    current: rational::from_f64(rational::to_f64(&values[col]))
                        + rational::ratio(1, 10_000_000),
                },
                m => m,
            };
            let mut cuts = self.violated_pool_cuts(&profile);
            let sep = match self.oracle.separate(&profile, cut_mode, self.deadline) {
                Ok(s) => s,
                Err(IpgError::OracleTimeout { .. }) => return Ok(self.finish(Status::TimeLimit)),
                Err(e) => return Err(e),
            };
            if sep.certified() && cuts.is_empty() {
                let max_regret = sep
                    .regrets(game.sense())
                    .into_iter()
                    .fold(Rational::zero(), |a, b| a.max(b));
                let at = self.elapsed();
                self.report.time_first.get_or_insert(at);
                self.report.pnes.push(PneEntry {
                    profile: profile.clone(),
                    welfare,
                    max_regret,
                    found_at: at,
                });
                match self.config.mode {
                    Mode::Enumerate { limit } => {
                        if limit.is_some_and(|l| self.report.pnes.len() >= l) {
                            return Ok(self.finish(Status::PneFound));
                        }
                        let row = self.nogood(&values);
                        self.master.add_row(row)?;
                        self.report.counters.nogood += 1;
                        continue;
                    }
                    Mode::EpsilonAbs(_) | Mode::EpsilonMin { .. } => {
                        self.report.epsilon = Some(max_regret);
                        return Ok(self.finish(Status::PneFound));
                    }
                    Mode::EpsilonRel(_) => {
                        let ratio = sep
                            .responses
                            .iter()
                            .zip(&sep.payoffs)
                            .filter(|(br, _)| !br.value.is_zero())
                            .map(|(br, u)| u / br.value)
                            .min();
                        self.report.epsilon = ratio.or(Some(int(1)));
                        return Ok(self.finish(Status::PneFound));
                    }
                    Mode::Select => return Ok(self.finish(Status::PneFound)),
                }
            }
            cuts.extend(sep.cuts);
            for cut in cuts {
                match cut.provenance {
                    Provenance::Dominance => self.report.counters.ei_dominance += 1,
                    Provenance::Payoff => self.report.counters.ei_payoff += 1,
                    Provenance::Nogood => self.report.counters.nogood += 1,
                    Provenance::General | Provenance::Epsilon => self.report.counters.ei += 1,
                }
                self.master.add_row(cut.row.clone())?;
                self.added.push(cut);
            }
        }
    }

    fn violated_pool_cuts(&mut self, profile: &StrategyProfile) -> Vec<EquilibriumCut> {
        if self.solver.pool.is_empty() {
            return Vec::new();
        }
        let point = self.solver.lifted.evaluate_induced(profile);
        let mut out = Vec::new();
        for (k, cut) in self.solver.pool.iter().enumerate() {
            if !self.pool_used[k] && !cut.row.is_satisfied(&point) {
                self.pool_used[k] = true;
                out.push(cut.clone());
            }
        }
        out
    }

    /// Hamming-distance row excluding the profile encoded by `values`.
    fn nogood(&self, values: &[Rational]) -> LinearRow {
        let mut terms = Vec::new();
        let mut ones = 0i128;
        for c in self.solver.lifted.all_bits() {
            if values[c] == int(1) {
                terms.push((c, -1));
                ones += 1;
            } else {
                terms.push((c, 1));
            }
        }
        LinearRow::new(terms, RowSense::Ge, 1 - ones)
    }
}

/// A safe cap on any player's regret: twice the largest payoff magnitude.
pub fn epsilon_bound(game: &GameInstance) -> Rational {
    let mag = |v: &crate::game::VarRef| {
        let d = game.domain(*v);
        int(d.lower().abs().max(d.upper().abs()))
    };
    let mut worst = Rational::zero();
    for p in game.players() {
        let e = &p.utility.expr;
        let mut s = Rational::zero();
        for (v, c) in &e.linear {
            s += c.abs() * mag(v);
        }
        for m in &e.quadratic {
            s += m.coef.abs() * mag(&m.a()) * mag(&m.b());
        }
        for t in &e.ratios {
            let num: Rational = t.numerator.iter().map(|(v, c)| c.abs() * mag(v)).sum();
            let floor = if t.outside.is_positive() {
                t.outside
            } else {
                t.denominator
                    .iter()
                    .map(|(_, c)| c.abs())
                    .filter(|c| c.is_positive())
                    .min()
                    .unwrap_or_else(|| int(1))
            };
            s += t.weight.abs() * num / floor;
        }
        worst = worst.max(s);
    }
    worst * int(2) + int(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bruteforce::all_pnes;
    use crate::game::fixtures::*;
    use crate::rational::ratio;

    #[test]
    fn example3_select() {
        let g = example1();
        let r = select_best_pne(&g, &SolveConfig::default()).unwrap();
        assert_eq!(r.status, Status::PneFound);
        assert_eq!(r.pnes[0].profile, profile(&[&[1, 0], &[1, 0]]));
        assert_eq!(r.pnes[0].welfare, int(5));
        assert_eq!(r.osw, Some(int(8)));
        assert_eq!(r.pos, Some(ratio(8, 5)));
        assert_eq!(r.counters.iterations, 2);
        // both players deviate from the first incumbent
        assert_eq!(r.counters.ei, 2);
    }

    #[test]
    fn example2_enumeration() {
        let g = example2();
        let r =
            enumerate_pnes(&g, &SolveConfig::with_mode(Mode::Enumerate { limit: None })).unwrap();
        let w: Vec<Rational> = r.pnes.iter().map(|p| p.welfare).collect();
        assert_eq!(w, vec![int(18), int(16), int(16)]);
        let bf = all_pnes(&g).unwrap();
        let mut a: Vec<_> = r.pnes.iter().map(|p| p.profile.clone()).collect();
        let mut b: Vec<_> = bf.pnes.iter().map(|p| p.profile.clone()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(r.pos, bf.pos);
        assert_eq!(r.poa, bf.poa);
    }

    #[test]
    fn enumeration_limit() {
        let g = example2();
        let r = enumerate_pnes(
            &g,
            &SolveConfig::with_mode(Mode::Enumerate { limit: Some(1) }),
        )
        .unwrap();
        assert_eq!(r.pnes.len(), 1);
        assert_eq!(r.poa, None);
    }

    #[test]
    fn epsilon_one_on_example3() {
        let g = example1();
        let r = epsilon_pne(&g, &SolveConfig::with_mode(Mode::EpsilonAbs(int(1)))).unwrap();
        assert_eq!(r.pnes[0].profile, profile(&[&[1, 0], &[0, 1]]));
        assert_eq!(r.pnes[0].welfare, int(8));
        assert_eq!(r.epsilon, Some(int(1)));
    }

    #[test]
    fn epsilon_zero_matches_select() {
        let g = example2();
        let a = epsilon_pne(&g, &SolveConfig::with_mode(Mode::EpsilonAbs(int(0)))).unwrap();
        let b = select_best_pne(&g, &SolveConfig::default()).unwrap();
        assert_eq!(a.pnes[0].welfare, b.pnes[0].welfare);
    }

    #[test]
    fn epsilon_minimization_finds_exact_pne() {
        let g = example1();
        let r = epsilon_pne(
            &g,
            &SolveConfig::with_mode(Mode::EpsilonMin { bound: None }),
        )
        .unwrap();
        assert_eq!(r.epsilon, Some(int(0)));
    }

    #[test]
    fn negative_epsilon_is_rejected() {
        let g = example1();
        assert!(epsilon_pne(&g, &SolveConfig::with_mode(Mode::EpsilonAbs(int(-1)))).is_err());
        assert!(enumerate_pnes(
            &g,
            &SolveConfig::with_mode(Mode::Enumerate { limit: Some(0) })
        )
        .is_err());
    }
}

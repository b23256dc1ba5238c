//! Equilibrium separation: best responses against a candidate profile and
//! the equilibrium inequalities they induce.

use std::time::Instant;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{input, IpgError, Result};
use crate::game::{GameInstance, OptSense, RowSense, StrategyProfile};
use crate::lifting::LiftedModel;
use crate::linear::{LinExpr, LinearRow};
use crate::milp::{MilpModel, SolveStatus};
use crate::rational::{int, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    General,
    Dominance,
    Payoff,
    /// Excludes an already recorded equilibrium; deliberately invalid.
    Nogood,
    Epsilon,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumCut {
    pub player: usize,
    pub deviation: Vec<i64>,
    pub row: LinearRow,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BestResponse {
    pub player: usize,
    pub strategy: Vec<i64>,
    pub value: Rational,
}

/// How strict the equilibrium test is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutMode {
    Exact,
    /// Regret at most `eps`.
    Absolute(Rational),
    /// Regret at most the value of column `col`, currently `current`.
    AbsoluteColumn {
        col: usize,
        current: Rational,
    },
    /// Payoff at least `eps` times the best-response value (maximization).
    Relative(Rational),
}

#[derive(Clone, Debug)]
pub struct Separation {
    pub cuts: Vec<EquilibriumCut>,
    pub responses: Vec<BestResponse>,
    pub payoffs: Vec<Rational>,
}

impl Separation {
    /// No cut: the profile passed the (possibly relaxed) equilibrium test.
    pub fn certified(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn regrets(&self, sense: OptSense) -> Vec<Rational> {
        self.responses
            .iter()
            .zip(&self.payoffs)
            .map(|(br, u)| (br.value - u) * sense.sign())
            .collect()
    }
}

pub struct Oracle<'a> {
    game: &'a GameInstance,
    lifted: &'a LiftedModel,
    models: Vec<Option<MilpModel>>,
    parallel: bool,
    one_cut: bool,
}

impl<'a> Oracle<'a> {
    pub fn new(game: &'a GameInstance, lifted: &'a LiftedModel) -> Self {
        Self {
            game,
            lifted,
            models: (0..game.n()).map(|_| None).collect(),
            parallel: false,
            one_cut: false,
        }
    }

    /// Solve the best responses on scoped threads.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    /// Stop after the first violated inequality.
    pub fn one_cut(mut self, on: bool) -> Self {
        self.one_cut = on;
        self
    }

    pub fn best_response(
        &mut self,
        i: usize,
        profile: &StrategyProfile,
        deadline: Option<Instant>,
    ) -> Result<BestResponse> {
        if self.models[i].is_none() {
            self.models[i] = Some(br_model(self.game, self.lifted, i)?);
        }
        let model = self.models[i].as_mut().expect("just built");
        solve_br(self.game, self.lifted, model, i, profile, deadline)
    }

    pub fn separate(
        &mut self,
        profile: &StrategyProfile,
        mode: CutMode,
        deadline: Option<Instant>,
    ) -> Result<Separation> {
        if let CutMode::Relative(_) = mode {
            if self.game.sense() != OptSense::Maximize {
                return input("relative epsilon mode needs maximization payoffs");
            }
        }
        let n = self.game.n();
        let payoffs = self.game.payoffs(profile)?;
        let responses: Vec<BestResponse> = if self.parallel && n > 1 {
            let (game, lifted) = (self.game, self.lifted);
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..n)
                    .map(|i| {
                        s.spawn(move || {
                            let mut m = br_model(game, lifted, i)?;
                            solve_br(game, lifted, &mut m, i, profile, deadline)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join().unwrap_or_else(|_| {
                            Err(IpgError::Internal("oracle thread panicked".into()))
                        })
                    })
                    .collect::<Result<_>>()
            })?
        } else {
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let br = self.best_response(i, profile, deadline)?;
                let stop =
                    self.one_cut && violated(self.game.sense(), mode, &br.value, &payoffs[i])?;
                out.push(br);
                if stop {
                    break;
                }
            }
            out
        };
        let mut point = self.lifted.evaluate_induced(profile);
        if let CutMode::AbsoluteColumn { col, current } = mode {
            if point.len() <= col {
                point.resize(col + 1, Rational::zero());
            }
            point[col] = current;
        }
        let mut cuts = Vec::new();
        for br in &responses {
            let i = br.player;
            if !violated(self.game.sense(), mode, &br.value, &payoffs[i])? {
                continue;
            }
            let cut = equilibrium_cut(self.game, self.lifted, i, &br.strategy, profile, mode)?;
            if cut.row.is_satisfied(&point) {
                return Err(IpgError::Internal(format!(
                    "equilibrium cut for player {} does not separate {profile}",
                    i + 1
                )));
            }
            cuts.push(cut);
            if self.one_cut {
                break;
            }
        }
        Ok(Separation {
            cuts,
            responses,
            payoffs,
        })
    }
}

/// Whether a best-response value beats the current payoff under `mode`.
pub fn violated(
    sense: OptSense,
    mode: CutMode,
    best: &Rational,
    current: &Rational,
) -> Result<bool> {
    let gain = (best - current) * sense.sign();
    Ok(match mode {
        CutMode::Exact => gain.is_positive(),
        CutMode::Absolute(eps) => gain > eps,
        CutMode::AbsoluteColumn { current: eps, .. } => gain > eps,
        CutMode::Relative(eps) => {
            if best.is_negative() {
                return input(format!(
                    "relative epsilon mode met a negative best-response value {best}"
                ));
            }
            eps * best > *current
        }
    })
}

/// Row `u^i(xhat, x^-i) <= u^i(x)` (relaxed by `mode`) in lifted columns.
pub fn equilibrium_cut(
    game: &GameInstance,
    lifted: &LiftedModel,
    i: usize,
    xhat: &[i64],
    incumbent: &StrategyProfile,
    mode: CutMode,
) -> Result<EquilibriumCut> {
    let dev = lifted.deviation_expr(game, i, xhat, incumbent)?;
    let util = lifted.utility(i);
    let sign = game.sense().sign();
    // sign * (dev - util) <= 0 in the exact case
    let mut e = LinExpr::new();
    let provenance = match mode {
        CutMode::Exact => {
            e.add_scaled(&dev, sign);
            e.add_scaled(util, -sign);
            Provenance::General
        }
        CutMode::Absolute(eps) => {
            e.add_scaled(&dev, sign);
            e.add_scaled(util, -sign);
            e.add_constant(-eps);
            Provenance::Epsilon
        }
        CutMode::AbsoluteColumn { col, .. } => {
            e.add_scaled(&dev, sign);
            e.add_scaled(util, -sign);
            e.add_term(col, int(-1));
            Provenance::Epsilon
        }
        CutMode::Relative(eps) => {
            e.add_scaled(&dev, eps);
            e.add_scaled(util, int(-1));
            Provenance::Epsilon
        }
    };
    Ok(EquilibriumCut {
        player: i,
        deviation: xhat.to_vec(),
        row: LinearRow::from_expr(&e, RowSense::Le),
        provenance,
    })
}

fn br_model(game: &GameInstance, lifted: &LiftedModel, i: usize) -> Result<MilpModel> {
    let mut m = MilpModel::from_lifted(lifted, game.sense(), format!("br{}", i + 1))?;
    m.set_objective(lifted.utility(i));
    Ok(m)
}

fn solve_br(
    game: &GameInstance,
    lifted: &LiftedModel,
    model: &mut MilpModel,
    i: usize,
    profile: &StrategyProfile,
    deadline: Option<Instant>,
) -> Result<BestResponse> {
    game.check_profile(profile)?;
    for j in 0..game.n() {
        if j == i {
            for c in lifted.player_bits(i) {
                model.set_bounds(c, int(0), int(1));
            }
            continue;
        }
        for (v, &x) in profile.player(j).iter().enumerate() {
            let enc = lifted.encoding(crate::game::VarRef::new(j, v));
            let mut rest = (x - enc.offset) as u64;
            for &c in &enc.bits {
                let b = int((rest & 1) as i64);
                model.set_bounds(c, b, b);
                rest >>= 1;
            }
        }
    }
    if let Some(d) = deadline {
        let left = d.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(IpgError::OracleTimeout { player: i });
        }
        model.set_time_limit(Some(left));
    }
    let out = model.solve()?;
    match out.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return input(format!("player {} has no feasible strategy", i + 1));
        }
        SolveStatus::TimeLimit => return Err(IpgError::OracleTimeout { player: i }),
    }
    let values = out.values.expect("optimal outcome carries values");
    let strategy = lifted.decode(&values).0.swap_remove(i);
    let deviated = profile.with_player(i, &strategy);
    if !game.is_feasible(i, &strategy)? {
        return Err(IpgError::Numerical(format!(
            "best response {strategy:?} of player {} is infeasible",
            i + 1
        )));
    }
    let value = game.payoff(i, &deviated)?;
    Ok(BestResponse {
        player: i,
        strategy,
        value,
    })
}

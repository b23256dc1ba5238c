//! Run reports: JSON via serde and one CSV row per instance.

use serde::{Deserialize, Serialize};

use crate::game::StrategyProfile;
use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    PneFound,
    NoPne,
    TimeLimit,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::PneFound => "PNE_FOUND",
            Status::NoPne => "NO_PNE",
            Status::TimeLimit => "TIME_LIMIT",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PneEntry {
    pub profile: StrategyProfile,
    #[serde(with = "rational::as_string")]
    pub welfare: Rational,
    /// Largest exact regret over the players (zero for an exact PNE).
    #[serde(with = "rational::as_string")]
    pub max_regret: Rational,
    /// Seconds since the start of the run.
    pub found_at: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Equilibrium inequalities from the separation oracle.
    pub ei: usize,
    pub ei_dominance: usize,
    pub ei_payoff: usize,
    pub nogood: usize,
    /// Master solves, the final infeasible one included.
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub objective: f64,
    #[serde(with = "rational::as_string")]
    pub welfare: Rational,
    pub profile: StrategyProfile,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    pub pnes: Vec<PneEntry>,
    #[serde(with = "rational::opt_as_string")]
    pub osw: Option<Rational>,
    pub osw_profile: Option<StrategyProfile>,
    #[serde(with = "rational::opt_as_string")]
    pub pos: Option<Rational>,
    #[serde(with = "rational::opt_as_string")]
    pub poa: Option<Rational>,
    /// Epsilon of the returned profile in epsilon modes.
    #[serde(with = "rational::opt_as_string")]
    pub epsilon: Option<Rational>,
    pub counters: Counters,
    pub time_total: f64,
    pub time_first: Option<f64>,
    /// Last master objective bound.
    pub bound: Option<f64>,
    pub trace: Vec<TraceEntry>,
}

pub const CSV_HEADER: [&str; 12] = [
    "instance", "status", "PoS", "#EI", "#EI_P", "#EI_D", "#It", "Time", "Time-1st", "PNE*", "OSW",
    "Bound",
];

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn opt_rat(v: &Option<Rational>) -> String {
    v.map(|x| format!("{:.6}", rational::to_f64(&x)))
        .unwrap_or_default()
}

impl SolveReport {
    pub fn best(&self) -> Option<&PneEntry> {
        self.pnes.first()
    }

    pub fn csv_row(&self, instance: &str) -> Vec<String> {
        vec![
            instance.to_string(),
            self.status.as_str().to_string(),
            opt_rat(&self.pos),
            self.counters.ei.to_string(),
            self.counters.ei_payoff.to_string(),
            self.counters.ei_dominance.to_string(),
            self.counters.iterations.to_string(),
            format!("{:.4}", self.time_total),
            opt_f64(self.time_first),
            self.best()
                .map(|p| format!("{:.6}", rational::to_f64(&p.welfare)))
                .unwrap_or_default(),
            opt_rat(&self.osw),
            opt_f64(self.bound),
        ]
    }
}

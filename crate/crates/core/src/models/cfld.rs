//! Competitive facility location with design choices: players open
//! facilities under a budget and capture a share of every customer's
//! demand proportional to the attraction of their open facilities.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::game::{
    Constraint, GameInstance, PayoffExpr, PlayerProgram, RatioTerm, RowSense, Utility, VarDomain,
    VarRef, Welfare,
};
use crate::rational::{int, Exact, Rational};

fn default_u0() -> Vec<Exact> {
    Vec::new()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfldInstance {
    /// Number of candidate locations.
    #[serde(rename = "L")]
    pub l: usize,
    /// Number of customers.
    #[serde(rename = "J")]
    pub j: usize,
    /// Designs available at each location.
    #[serde(rename = "R")]
    pub r: Vec<usize>,
    /// Demand of each customer.
    pub w: Vec<Exact>,
    /// `u[i][l][j][r]`: attraction of design `r` at `l` for customer `j`.
    pub u: Vec<Vec<Vec<Vec<Exact>>>>,
    /// `f[i][l][r]`
    pub f: Vec<Vec<Vec<i64>>>,
    #[serde(rename = "B")]
    pub budget: Vec<i64>,
    /// No-purchase attraction per customer; defaults to 1.
    #[serde(default = "default_u0", skip_serializing_if = "Vec::is_empty")]
    pub u0: Vec<Exact>,
}

impl CfldInstance {
    pub fn n(&self) -> usize {
        self.budget.len()
    }

    /// Number of strategy variables per player.
    pub fn m(&self) -> usize {
        self.r.iter().sum()
    }

    /// Column of `x^i_lr` inside a player's strategy.
    pub fn column(&self, l: usize, r: usize) -> usize {
        self.r[..l].iter().sum::<usize>() + r
    }

    pub fn outside(&self, j: usize) -> Rational {
        self.u0.get(j).map(|e| e.0).unwrap_or_else(|| int(1))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return input("a facility game needs at least one player");
        }
        let shape_ok = self.r.len() == self.l
            && self.w.len() == self.j
            && (self.u0.is_empty() || self.u0.len() == self.j)
            && self.u.len() == n
            && self.f.len() == n
            && self.u.iter().all(|ui| {
                ui.len() == self.l
                    && ui.iter().enumerate().all(|(l, ul)| {
                        ul.len() == self.j && ul.iter().all(|row| row.len() == self.r[l])
                    })
            })
            && self.f.iter().all(|fi| {
                fi.len() == self.l && fi.iter().enumerate().all(|(l, row)| row.len() == self.r[l])
            });
        if !shape_ok {
            return input(format!(
                "facility data does not match {n} players, {} locations, {} customers",
                self.l, self.j
            ));
        }
        for j in 0..self.j {
            if !self.outside(j).is_positive() {
                return input(format!(
                    "customer {} needs a positive outside option u0",
                    j + 1
                ));
            }
            if self.w[j].0.is_negative() {
                return input(format!("customer {} has negative demand", j + 1));
            }
        }
        if self
            .u
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .any(|v| v.0.is_negative())
        {
            return input("attractions must be nonnegative");
        }
        if self.f.iter().flatten().flatten().any(|&v| v < 0) || self.budget.iter().any(|&b| b < 0) {
            return input("costs and budgets must be nonnegative");
        }
        Ok(())
    }
}

/// Revenue-maximization game; the utility of `i` is the demand-weighted sum
/// of its shares.
pub fn build_cfld(inst: &CfldInstance) -> Result<GameInstance> {
    inst.validate()?;
    let n = inst.n();
    let m = inst.m();
    let attraction = |i: usize, j: usize| -> Vec<(VarRef, Rational)> {
        let mut out = Vec::new();
        for l in 0..inst.l {
            for r in 0..inst.r[l] {
                let u = inst.u[i][l][j][r].0;
                if !u.is_zero() {
                    out.push((VarRef::new(i, inst.column(l, r)), u));
                }
            }
        }
        out
    };
    let players = (0..n)
        .map(|i| {
            let mut constraints = Vec::new();
            let mut cost = vec![0; m];
            for l in 0..inst.l {
                let mut one = vec![0; m];
                for r in 0..inst.r[l] {
                    cost[inst.column(l, r)] = inst.f[i][l][r];
                    one[inst.column(l, r)] = 1;
                }
                if inst.r[l] > 1 {
                    constraints.push(Constraint::new(one, RowSense::Le, 1));
                }
            }
            constraints.insert(0, Constraint::new(cost, RowSense::Le, inst.budget[i]));
            let mut e = PayoffExpr::new();
            for j in 0..inst.j {
                let numerator = attraction(i, j);
                let w = inst.w[j].0;
                if numerator.is_empty() || w.is_zero() {
                    continue;
                }
                e.add_ratio(RatioTerm {
                    weight: w,
                    numerator,
                    outside: inst.outside(j),
                    denominator: (0..n).flat_map(|k| attraction(k, j)).collect(),
                });
            }
            PlayerProgram {
                domains: vec![VarDomain::BINARY; m],
                constraints,
                utility: Utility::maximize(e),
            }
        })
        .collect();
    GameInstance::new(players, Welfare::Sum)
}

/// Random instance with integer data: demands in [1, 10], attractions in
/// [0, 10], costs in [1, 10] and budgets covering about half of the
/// cheapest design at every location.
pub fn generate_cfld(
    n: usize,
    locations: usize,
    customers: usize,
    designs: usize,
    seed: u64,
) -> CfldInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = vec![designs; locations];
    let w = (0..customers)
        .map(|_| Exact(int(rng.gen_range(1..=10))))
        .collect();
    let u = (0..n)
        .map(|_| {
            (0..locations)
                .map(|_| {
                    (0..customers)
                        .map(|_| {
                            (0..designs)
                                .map(|_| Exact(int(rng.gen_range(0..=10))))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let f: Vec<Vec<Vec<i64>>> = (0..n)
        .map(|_| {
            (0..locations)
                .map(|_| (0..designs).map(|_| rng.gen_range(1..=10)).collect())
                .collect()
        })
        .collect();
    let budget = f
        .iter()
        .map(|fi| {
            let cheapest: Vec<i64> = fi
                .iter()
                .map(|row| *row.iter().min().unwrap_or(&0))
                .collect();
            let max = cheapest.iter().copied().max().unwrap_or(0);
            (cheapest.iter().sum::<i64>() / 2).max(max)
        })
        .collect();
    CfldInstance {
        l: locations,
        j: customers,
        r,
        w,
        u,
        f,
        budget,
        u0: vec![Exact(int(1)); customers],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::StrategyProfile;
    use crate::lifting::LiftedModel;
    use crate::rational::ratio;

    fn one_location(u: [i64; 2], separate: bool) -> CfldInstance {
        let l = if separate { 2 } else { 1 };
        let attraction = |i: usize| -> Vec<Vec<Vec<Exact>>> {
            (0..l)
                .map(|loc| {
                    let v = if !separate || loc == i { u[i] } else { 0 };
                    vec![vec![Exact(int(v))]]
                })
                .collect()
        };
        let cost = |i: usize| -> Vec<Vec<i64>> {
            (0..l)
                .map(|loc| vec![if !separate || loc == i { 1 } else { 5 }])
                .collect()
        };
        CfldInstance {
            l,
            j: 1,
            r: vec![1; l],
            w: vec![Exact(int(1))],
            u: vec![attraction(0), attraction(1)],
            f: vec![cost(0), cost(1)],
            budget: vec![1, 1],
            u0: vec![Exact(int(1))],
        }
    }

    #[test]
    fn symmetric_players_split_evenly() {
        let g = build_cfld(&one_location([1, 1], false)).unwrap();
        let p = StrategyProfile::new(vec![vec![1], vec![1]]);
        assert_eq!(g.payoffs(&p).unwrap(), vec![ratio(1, 3), ratio(1, 3)]);
        let l = LiftedModel::build(&g).unwrap();
        let point = l.evaluate_induced(&p);
        for i in 0..2 {
            assert_eq!(l.utility(i).evaluate(&point), ratio(1, 3));
        }
    }

    #[test]
    fn distinct_locations_share_by_attraction() {
        let g = build_cfld(&one_location([2, 1], true)).unwrap();
        let p = StrategyProfile::new(vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(g.payoffs(&p).unwrap(), vec![ratio(2, 4), ratio(1, 4)]);
        let l = LiftedModel::build(&g).unwrap();
        let point = l.evaluate_induced(&p);
        for lift in l.share_lifts() {
            assert!(point[lift.share] <= int(1));
        }
    }

    #[test]
    fn poor_player_stays_home() {
        let mut inst = one_location([1, 1], false);
        inst.budget[1] = 0;
        let g = build_cfld(&inst).unwrap();
        let r = crate::bruteforce::all_pnes(&g).unwrap();
        assert_eq!(r.pnes.len(), 1);
        assert_eq!(r.pnes[0].profile.player(1), &[0]);
        assert_eq!(r.pnes[0].payoffs[1], int(0));
    }

    #[test]
    fn zero_outside_option_is_rejected() {
        let mut inst = one_location([1, 1], false);
        inst.u0 = vec![Exact(int(0))];
        assert!(build_cfld(&inst).is_err());
    }

    #[test]
    fn generated_instances_are_valid_and_reproducible() {
        let a = generate_cfld(2, 3, 4, 2, 5);
        assert_eq!(a, generate_cfld(2, 3, 4, 2, 5));
        let g = build_cfld(&a).unwrap();
        assert_eq!(g.player(0).m(), 6);
        // budget row plus one row per location
        assert_eq!(g.player(0).constraints.len(), 4);
        let json = serde_json::to_string(&a).unwrap();
        let back: CfldInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }
}

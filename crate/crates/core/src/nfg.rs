//! Network formation games: every player routes one unit of flow from its
//! source to its sink and pays a weighted share of each edge it uses.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::game::{
    Constraint, GameInstance, PayoffExpr, PlayerProgram, RatioTerm, RowSense, Utility, VarDomain,
    VarRef, Welfare,
};
use crate::rational::{int, Rational};

/// Subset columns grow as 2^n per edge.
pub const MAX_PLAYERS: usize = 4;

/// Rows of the generated grid.
pub const GRID_ROWS: usize = 5;

/// Target edge density of generated grids.
pub const EDGE_RATIO: f64 = 2.06;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfgPlayer {
    pub s: usize,
    pub t: usize,
    #[serde(default = "one")]
    pub w_num: i64,
    #[serde(default = "one")]
    pub w_den: i64,
}

fn one() -> i64 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfgInstance {
    #[serde(rename = "V")]
    pub v: usize,
    /// `(tail, head, cost)`
    #[serde(rename = "E")]
    pub e: Vec<(usize, usize, i64)>,
    pub players: Vec<NfgPlayer>,
}

impl NfgInstance {
    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn weight(&self, i: usize) -> Rational {
        let p = &self.players[i];
        Rational::new(p.w_num as i128, p.w_den as i128)
    }

    pub fn reachable(&self, s: usize, t: usize) -> bool {
        let mut adj = vec![Vec::new(); self.v];
        for &(h, l, _) in &self.e {
            adj[h].push(l);
        }
        let mut seen = vec![false; self.v];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            if u == t {
                return true;
            }
            for &x in &adj[u] {
                if !seen[x] {
                    seen[x] = true;
                    queue.push_back(x);
                }
            }
        }
        false
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || n > MAX_PLAYERS {
            return input(format!(
                "network games support 1..={MAX_PLAYERS} players, got {n}"
            ));
        }
        for &(h, l, c) in &self.e {
            if h >= self.v || l >= self.v {
                return input(format!("edge ({h},{l}) references a missing node"));
            }
            if c <= 0 {
                return input(format!("edge ({h},{l}) must have a positive cost"));
            }
        }
        for (i, p) in self.players.iter().enumerate() {
            if p.s >= self.v || p.t >= self.v {
                return input(format!(
                    "player {} has an endpoint outside the graph",
                    i + 1
                ));
            }
            if p.w_num <= 0 || p.w_den <= 0 {
                return input(format!("player {} needs a positive weight", i + 1));
            }
            if !self.reachable(p.s, p.t) {
                return input(format!("sink of player {} is unreachable", i + 1));
            }
        }
        Ok(())
    }
}

/// Cost-minimization game; the share of edge `e` paid by `i` is
/// `c_e * w_i / sum of weights of the users of e`.
pub fn build_nfg(inst: &NfgInstance) -> Result<GameInstance> {
    inst.validate()?;
    let n = inst.n();
    let m = inst.e.len();
    let players = (0..n)
        .map(|i| {
            let p = &inst.players[i];
            let mut constraints = Vec::with_capacity(inst.v);
            for node in 0..inst.v {
                let coeffs = inst
                    .e
                    .iter()
                    .map(|&(h, l, _)| i64::from(h == node) - i64::from(l == node))
                    .collect();
                let rhs = if p.s == p.t {
                    0
                } else {
                    i64::from(node == p.s) - i64::from(node == p.t)
                };
                constraints.push(Constraint::new(coeffs, RowSense::Eq, rhs));
            }
            let mut e = PayoffExpr::new();
            for (k, &(_, _, c)) in inst.e.iter().enumerate() {
                e.add_ratio(RatioTerm {
                    weight: int(c),
                    numerator: vec![(VarRef::new(i, k), inst.weight(i))],
                    outside: Rational::from_integer(0),
                    denominator: (0..n)
                        .map(|q| (VarRef::new(q, k), inst.weight(q)))
                        .collect(),
                });
            }
            PlayerProgram {
                domains: vec![VarDomain::BINARY; m],
                constraints,
                utility: Utility::minimize(e),
            }
        })
        .collect();
    GameInstance::new(players, Welfare::Sum)
}

/// Player weight schemes used by the grid generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// Unit weights.
    #[default]
    Shapley,
    /// 3/5 for the first player, the rest split evenly.
    Skewed,
    /// 1/10 for the last player, the rest split evenly.
    Balanced,
}

impl WeightScheme {
    pub fn weights(&self, n: usize) -> Vec<Rational> {
        match (self, n) {
            (_, 1) | (WeightScheme::Shapley, _) => vec![int(1); n],
            (WeightScheme::Skewed, _) => {
                let rest = Rational::new(2, 5 * (n as i128 - 1));
                std::iter::once(Rational::new(3, 5))
                    .chain(std::iter::repeat(rest).take(n - 1))
                    .collect()
            }
            (WeightScheme::Balanced, _) => {
                let rest = Rational::new(9, 10 * (n as i128 - 1));
                std::iter::repeat(rest)
                    .take(n - 1)
                    .chain(std::iter::once(Rational::new(1, 10)))
                    .collect()
            }
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shapley" => Ok(WeightScheme::Shapley),
            "skewed" => Ok(WeightScheme::Skewed),
            "balanced" => Ok(WeightScheme::Balanced),
            _ => Err(format!(
                "unknown weight scheme {s:?} (expected shapley, skewed or balanced)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GridOptions {
    pub weights: WeightScheme,
    /// Give player `i` its own source and sink on row `i mod GRID_ROWS`
    /// instead of the shared top-left source and bottom-right sink.
    pub separate_endpoints: bool,
}

/// Layered grid with `GRID_ROWS` rows, right and down edges, and random
/// extra edges between adjacent layers. Shapley weights, shared endpoints.
pub fn generate_grid(v_target: usize, n: usize, seed: u64) -> NfgInstance {
    generate_grid_with(v_target, n, GridOptions::default(), seed)
}

pub fn generate_grid_with(v_target: usize, n: usize, opts: GridOptions, seed: u64) -> NfgInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = |rng: &mut ChaCha8Rng| rng.gen_range(20..=100);
    let weights = opts.weights.weights(n);
    let players = |ends: &dyn Fn(usize) -> (usize, usize)| {
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| NfgPlayer {
                s: ends(i).0,
                t: ends(i).1,
                w_num: *w.numer() as i64,
                w_den: *w.denom() as i64,
            })
            .collect()
    };
    if v_target < GRID_ROWS * 2 {
        let v = v_target.max(2);
        let e = (0..v - 1).map(|k| (k, k + 1, cost(&mut rng))).collect();
        return NfgInstance {
            v,
            e,
            players: players(&|_| (0, v - 1)),
        };
    }
    let cols = v_target / GRID_ROWS;
    let v = cols * GRID_ROWS;
    let id = |r: usize, c: usize| r * cols + c;
    let mut e = Vec::new();
    let mut used = HashSet::new();
    for r in 0..GRID_ROWS {
        for c in 0..cols {
            if c + 1 < cols {
                e.push((id(r, c), id(r, c + 1), cost(&mut rng)));
                used.insert((id(r, c), id(r, c + 1)));
            }
            if r + 1 < GRID_ROWS {
                e.push((id(r, c), id(r + 1, c), cost(&mut rng)));
                used.insert((id(r, c), id(r + 1, c)));
            }
        }
    }
    // every adjacent layer pair has room for rows * (rows - 1) diagonals
    let room = (cols - 1) * GRID_ROWS * (GRID_ROWS - 1);
    let target = (((v as f64) * EDGE_RATIO).round() as usize).min(e.len() + room);
    while e.len() < target {
        let c = rng.gen_range(0..cols - 1);
        let r = rng.gen_range(0..GRID_ROWS);
        let r2 = rng.gen_range(0..GRID_ROWS);
        if r2 == r {
            continue;
        }
        let arc = (id(r, c), id(r2, c + 1));
        if used.insert(arc) {
            e.push((arc.0, arc.1, cost(&mut rng)));
        }
    }
    let players = if opts.separate_endpoints {
        players(&|i| (id(i % GRID_ROWS, 0), id(i % GRID_ROWS, cols - 1)))
    } else {
        players(&|_| (id(0, 0), id(GRID_ROWS - 1, cols - 1)))
    };
    NfgInstance { v, e, players }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bruteforce::all_pnes;
    use crate::lifting::LiftedModel;
    use crate::rational::ratio;

    fn single_edge(n: usize) -> NfgInstance {
        NfgInstance {
            v: 2,
            e: vec![(0, 1, 3)],
            players: (0..n)
                .map(|_| NfgPlayer {
                    s: 0,
                    t: 1,
                    w_num: 1,
                    w_den: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn single_edge_shares() {
        let g = build_nfg(&single_edge(3)).unwrap();
        let r = all_pnes(&g).unwrap();
        assert_eq!(r.pnes.len(), 1);
        assert_eq!(r.pnes[0].payoffs, vec![int(1); 3]);
        assert_eq!(r.pnes[0].welfare, int(3));
    }

    #[test]
    fn three_player_edge_has_seven_subset_columns() {
        let g = build_nfg(&single_edge(3)).unwrap();
        let l = LiftedModel::build(&g).unwrap();
        assert_eq!(l.subset_lifts().len(), 1);
        assert_eq!(l.subset_lifts()[0].cols.len(), 7);
        // 3 linking rows and one clique row
        assert_eq!(l.linking_rows().count(), 4);
    }

    #[test]
    fn weighted_shares() {
        let mut inst = single_edge(2);
        inst.players[0].w_num = 3;
        inst.players[0].w_den = 5;
        inst.players[1].w_num = 2;
        inst.players[1].w_den = 5;
        let g = build_nfg(&inst).unwrap();
        let p = crate::game::StrategyProfile::new(vec![vec![1], vec![1]]);
        assert_eq!(g.payoff(0, &p).unwrap(), ratio(9, 5));
        assert_eq!(g.payoff(1, &p).unwrap(), ratio(6, 5));
    }

    #[test]
    fn single_player_takes_shortest_path() {
        let inst = NfgInstance {
            v: 3,
            e: vec![(0, 1, 2), (1, 2, 2), (0, 2, 5)],
            players: vec![NfgPlayer {
                s: 0,
                t: 2,
                w_num: 1,
                w_den: 1,
            }],
        };
        let g = build_nfg(&inst).unwrap();
        let r = all_pnes(&g).unwrap();
        assert_eq!(r.pnes.len(), 1);
        assert_eq!(r.pnes[0].welfare, int(4));
    }

    #[test]
    fn unreachable_sink_is_rejected() {
        let inst = NfgInstance {
            v: 2,
            e: vec![(1, 0, 2)],
            players: vec![NfgPlayer {
                s: 0,
                t: 1,
                w_num: 1,
                w_den: 1,
            }],
        };
        assert!(build_nfg(&inst).is_err());
    }

    #[test]
    fn grid_shape() {
        let inst = generate_grid(50, 3, 1);
        assert_eq!(inst.v, 50);
        assert_eq!(inst.e.len(), 103);
        assert!(inst.e.iter().all(|e| (20..=100).contains(&e.2)));
        for seed in 0..100 {
            let g = generate_grid(50 + seed as usize, 3, seed);
            assert!(g.validate().is_ok());
        }
        let tiny = generate_grid(4, 2, 0);
        assert_eq!(tiny.e.len(), 3);
        assert_eq!(generate_grid(50, 3, 9), generate_grid(50, 3, 9));
    }

    #[test]
    fn weight_schemes() {
        assert_eq!(
            WeightScheme::Skewed.weights(3),
            vec![ratio(3, 5), ratio(1, 5), ratio(1, 5)]
        );
        assert_eq!(
            WeightScheme::Balanced.weights(3),
            vec![ratio(9, 20), ratio(9, 20), ratio(1, 10)]
        );
        let opts = GridOptions {
            weights: WeightScheme::Skewed,
            separate_endpoints: true,
        };
        let inst = generate_grid_with(30, 3, opts, 2);
        assert!(inst.validate().is_ok());
        assert_eq!(inst.weight(0), ratio(3, 5));
        assert_ne!(inst.players[0].s, inst.players[1].s);
    }
}

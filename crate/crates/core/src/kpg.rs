//! Knapsack games: every player packs a binary knapsack and the profit of
//! an item shifts by `C[i][k][j]` when opponent `k` packs the same item.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::game::{
    Constraint, GameInstance, PayoffExpr, PlayerProgram, RowSense, Utility, VarDomain, VarRef,
    Welfare,
};
use crate::lifting::LiftedModel;
use crate::linear::LinearRow;
use crate::oracle::{EquilibriumCut, Provenance};
use crate::rational::int;

/// Largest number of negative interaction entries enumerated per item.
pub const MAX_PAYOFF_SET_BITS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distribution {
    /// One interaction value per item, shared by every player pair.
    A,
    /// Independent interactions in [1, 100].
    B,
    /// Independent interactions in [-100, 100].
    C,
}

impl std::str::FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "A" | "a" => Ok(Distribution::A),
            "B" | "b" => Ok(Distribution::B),
            "C" | "c" => Ok(Distribution::C),
            _ => Err(format!("unknown distribution {s:?} (expected A, B or C)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpgInstance {
    pub n: usize,
    pub m: usize,
    /// `p[i][j]`
    pub p: Vec<Vec<i64>>,
    pub w: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    /// `c[i][k][j]`; the diagonal `c[i][i]` is ignored.
    #[serde(rename = "C")]
    pub c: Vec<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl KpgInstance {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return input("a knapsack game needs at least one player");
        }
        let rows_ok = self.p.len() == n
            && self.w.len() == n
            && self.b.len() == n
            && self.c.len() == n
            && self.p.iter().all(|r| r.len() == m)
            && self.w.iter().all(|r| r.len() == m)
            && self
                .c
                .iter()
                .all(|ci| ci.len() == n && ci.iter().all(|r| r.len() == m));
        if !rows_ok {
            return input(format!("knapsack data does not match n={n}, m={m}"));
        }
        if self.w.iter().flatten().any(|&w| w < 0) || self.b.iter().any(|&b| b < 0) {
            return input("knapsack weights and capacities must be nonnegative");
        }
        Ok(())
    }

    fn inter(&self, i: usize, k: usize, j: usize) -> i64 {
        if i == k {
            0
        } else {
            self.c[i][k][j]
        }
    }
}

pub fn build_kpg(inst: &KpgInstance) -> Result<GameInstance> {
    inst.validate()?;
    let players = (0..inst.n)
        .map(|i| {
            let mut e = PayoffExpr::new();
            for j in 0..inst.m {
                e.add_linear(VarRef::new(i, j), int(inst.p[i][j]));
                for k in (0..inst.n).filter(|&k| k != i) {
                    e.add_product(VarRef::new(i, j), VarRef::new(k, j), int(inst.c[i][k][j]));
                }
            }
            PlayerProgram {
                domains: vec![VarDomain::BINARY; inst.m],
                constraints: vec![Constraint::new(inst.w[i].clone(), RowSense::Le, inst.b[i])],
                utility: Utility::maximize(e),
            }
        })
        .collect();
    GameInstance::new(players, Welfare::Sum)
}

/// Random instance with profits and weights in [1, 100] and capacity
/// `floor(tenths / 10 * sum(w))`.
pub fn generate_kpg(n: usize, m: usize, dist: Distribution, tenths: u32, seed: u64) -> KpgInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![vec![0; m]; n];
    let mut w = vec![vec![0; m]; n];
    for i in 0..n {
        for j in 0..m {
            p[i][j] = rng.gen_range(1..=100);
            w[i][j] = rng.gen_range(1..=100);
        }
    }
    let b = w
        .iter()
        .map(|wi| wi.iter().sum::<i64>() * tenths as i64 / 10)
        .collect();
    let shared: Vec<i64> = (0..m).map(|_| rng.gen_range(1..=100)).collect();
    let mut c = vec![vec![vec![0; m]; n]; n];
    for i in 0..n {
        for k in (0..n).filter(|&k| k != i) {
            for j in 0..m {
                c[i][k][j] = match dist {
                    Distribution::A => shared[j],
                    Distribution::B => rng.gen_range(1..=100),
                    Distribution::C => rng.gen_range(-100..=100),
                };
            }
        }
    }
    KpgInstance {
        n,
        m,
        p,
        w,
        b,
        c,
        dist: Some(dist),
        seed: Some(seed),
    }
}

/// Two-player instance whose welfare gap grows with `big`: the only
/// equilibrium has welfare 5 while the optimum is `big + 1`.
pub fn unbounded_price_instance(big: i64) -> KpgInstance {
    KpgInstance {
        n: 2,
        m: 2,
        p: vec![vec![big, 1], vec![4, 1]],
        w: vec![vec![3, 2], vec![3, 2]],
        b: vec![4, 4],
        c: vec![
            vec![vec![0, 0], vec![-(big - 2), -1]],
            vec![vec![-1, -1], vec![0, 0]],
        ],
        dist: None,
        seed: None,
    }
}

fn bit(lifted: &LiftedModel, i: usize, j: usize) -> usize {
    lifted.encoding(VarRef::new(i, j)).bits[0]
}

/// Item-dominance inequalities `x_j' <= x_j`, plus the two-player
/// conditional form `x_j' <= x_j + (1 - y_j) + y_j'`.
pub fn dominance_cuts(inst: &KpgInstance, lifted: &LiftedModel) -> Vec<EquilibriumCut> {
    let (n, m) = (inst.n, inst.m);
    let mut cuts = Vec::new();
    let make = |i: usize, terms: Vec<(usize, i128)>, rhs: i128| EquilibriumCut {
        player: i,
        deviation: Vec::new(),
        row: LinearRow::new(terms, RowSense::Le, rhs),
        provenance: Provenance::Dominance,
    };
    for i in 0..n {
        let pmin =
            |j: usize| inst.p[i][j] + (0..n).map(|k| inst.inter(i, k, j).min(0)).sum::<i64>();
        let pmax =
            |j: usize| inst.p[i][j] + (0..n).map(|k| inst.inter(i, k, j).max(0)).sum::<i64>();
        for j in 0..m {
            for jp in (0..m).filter(|&jp| jp != j) {
                if inst.w[i][j] > inst.w[i][jp] {
                    continue;
                }
                if pmin(j) > pmax(jp) {
                    cuts.push(make(
                        i,
                        vec![(bit(lifted, i, jp), 1), (bit(lifted, i, j), -1)],
                        0,
                    ));
                } else if n == 2 {
                    let k = 1 - i;
                    // opponent packs j but not j'
                    if inst.p[i][j] + inst.c[i][k][j] > inst.p[i][jp] {
                        cuts.push(make(
                            i,
                            vec![
                                (bit(lifted, i, jp), 1),
                                (bit(lifted, i, j), -1),
                                (bit(lifted, k, j), 1),
                                (bit(lifted, k, jp), -1),
                            ],
                            1,
                        ));
                    }
                }
            }
        }
    }
    cuts
}

/// Minimal opponent sets making an item unprofitable, as
/// `x^i_j + sum_{k in S} x^k_j <= |S|`.
///
/// Positive interactions of the other opponents are added to the profit
/// before the sign test, so the set stays unprofitable whatever the rest
/// of the opponents do.
pub fn payoff_cuts(inst: &KpgInstance, lifted: &LiftedModel) -> Vec<EquilibriumCut> {
    let (n, m) = (inst.n, inst.m);
    let mut cuts = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let neg: Vec<usize> = (0..n).filter(|&k| inst.inter(i, k, j) < 0).collect();
            if neg.is_empty() {
                continue;
            }
            if neg.len() > MAX_PAYOFF_SET_BITS {
                warn!(
                    "skipping payoff cuts for player {} item {}: {} negative interactions",
                    i + 1,
                    j + 1,
                    neg.len()
                );
                continue;
            }
            let base = inst.p[i][j] + (0..n).map(|k| inst.inter(i, k, j).max(0)).sum::<i64>();
            let sum = |mask: u32| -> i64 {
                neg.iter()
                    .enumerate()
                    .filter(|(t, _)| mask & (1 << t) != 0)
                    .map(|(_, &k)| inst.inter(i, k, j))
                    .sum()
            };
            for mask in 1u32..(1 << neg.len()) {
                if base + sum(mask) >= 0 {
                    continue;
                }
                let minimal = (0..neg.len())
                    .filter(|t| mask & (1 << t) != 0)
                    .all(|t| base + sum(mask & !(1 << t)) >= 0);
                if !minimal {
                    continue;
                }
                let mut terms = vec![(bit(lifted, i, j), 1)];
                terms.extend(
                    neg.iter()
                        .enumerate()
                        .filter(|(t, _)| mask & (1 << t) != 0)
                        .map(|(_, &k)| (bit(lifted, k, j), 1)),
                );
                cuts.push(EquilibriumCut {
                    player: i,
                    deviation: Vec::new(),
                    row: LinearRow::new(terms, RowSense::Le, mask.count_ones() as i128),
                    provenance: Provenance::Payoff,
                });
            }
        }
    }
    cuts
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BkpInstance {
    pub a: Vec<i64>,
    pub b: Vec<i64>,
    #[serde(rename = "A")]
    pub cap_a: i64,
    #[serde(rename = "B")]
    pub cap_b: i64,
}

impl BkpInstance {
    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.b.len() {
            return input("a and b must have the same length");
        }
        if self.a.iter().chain(&self.b).any(|&v| v < 0) || self.cap_a < 0 || self.cap_b < 0 {
            return input("bilevel knapsack data must be nonnegative");
        }
        if self.cap_b == 0 {
            return input("B must be at least 1");
        }
        Ok(())
    }

    /// Equivalent instance with every `a_j <= A`.
    pub fn normalized(&self) -> BkpInstance {
        if self.a.iter().all(|&a| a <= self.cap_a) {
            return self.clone();
        }
        let big = 2 * self.cap_a + 1;
        let mut a: Vec<i64> = self
            .a
            .iter()
            .map(|&a| if a <= self.cap_a { 2 * a } else { big })
            .collect();
        let mut b = self.b.clone();
        a.push(1);
        b.push(self.cap_b);
        BkpInstance {
            a,
            b,
            cap_a: big,
            cap_b: self.cap_b,
        }
    }

    /// Exhaustive answer: is there a packing `x` leaving the follower at
    /// most `B - 1`?
    pub fn brute_force(&self) -> bool {
        let m = self.a.len();
        (0u32..(1 << m)).any(|x| {
            let on = |v: u32, j: usize| v & (1 << j) != 0;
            let wa: i64 = (0..m).filter(|&j| on(x, j)).map(|j| self.a[j]).sum();
            if wa > self.cap_a {
                return false;
            }
            (0u32..(1 << m)).all(|y| {
                let wb: i64 = (0..m).filter(|&j| on(y, j)).map(|j| self.b[j]).sum();
                if wb > self.cap_b {
                    return true;
                }
                let gain: i64 = (0..m)
                    .filter(|&j| on(y, j) && !on(x, j))
                    .map(|j| self.b[j])
                    .sum();
                gain <= self.cap_b - 1
            })
        })
    }
}

/// Two-player knapsack game with a PNE iff the bilevel instance is a yes.
pub fn reduce_bkp(bkp: &BkpInstance) -> Result<KpgInstance> {
    bkp.validate()?;
    let bkp = bkp.normalized();
    let m = bkp.a.len();
    let mm = m + 1;
    let mut p = vec![vec![0; mm]; 2];
    let mut w = vec![vec![0; mm]; 2];
    let mut c = vec![vec![vec![0; mm]; 2]; 2];
    for j in 0..m {
        w[0][j] = bkp.a[j];
        c[0][1][j] = bkp.b[j];
        p[1][j] = bkp.b[j];
        w[1][j] = bkp.b[j];
        c[1][0][j] = -bkp.b[j];
    }
    c[0][1][m] = 1;
    p[1][m] = bkp.cap_b - 1;
    w[1][m] = bkp.cap_b;
    Ok(KpgInstance {
        n: 2,
        m: mm,
        p,
        w,
        b: vec![bkp.cap_a, bkp.cap_b],
        c,
        dist: None,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bruteforce::all_pnes;
    use crate::rational::{int, ratio};

    fn example1() -> KpgInstance {
        KpgInstance {
            n: 2,
            m: 2,
            p: vec![vec![6, 1], vec![4, 2]],
            w: vec![vec![3, 2], vec![3, 2]],
            b: vec![4, 4],
            c: vec![
                vec![vec![0, 0], vec![-4, 6]],
                vec![vec![-1, -1], vec![0, 0]],
            ],
            dist: None,
            seed: None,
        }
    }

    #[test]
    fn example1_game_matches_fixture() {
        let g = build_kpg(&example1()).unwrap();
        let r = all_pnes(&g).unwrap();
        assert_eq!(r.osw, int(8));
        assert_eq!(r.pos, Some(ratio(8, 5)));
    }

    #[test]
    fn generator_bounds_and_capacity() {
        let inst = generate_kpg(2, 25, Distribution::A, 5, 7);
        assert!(inst.p.iter().flatten().all(|v| (1..=100).contains(v)));
        assert!(inst.w.iter().flatten().all(|v| (1..=100).contains(v)));
        for i in 0..2 {
            assert_eq!(inst.b[i], inst.w[i].iter().sum::<i64>() / 2);
        }
        // A shares one value per item
        assert_eq!(inst.c[0][1], inst.c[1][0]);
        let c = generate_kpg(3, 6, Distribution::C, 2, 1);
        assert!(c
            .c
            .iter()
            .flatten()
            .flatten()
            .all(|v| (-100..=100).contains(v)));
        assert_eq!(generate_kpg(3, 6, Distribution::C, 2, 1), c);
    }

    #[test]
    fn negative_weights_rejected() {
        let mut inst = example1();
        inst.w[0][0] = -1;
        assert!(build_kpg(&inst).is_err());
    }

    #[test]
    fn dominance_without_interaction() {
        let inst = KpgInstance {
            n: 1,
            m: 2,
            p: vec![vec![10, 3]],
            w: vec![vec![2, 5]],
            b: vec![5],
            c: vec![vec![vec![0, 0]]],
            dist: None,
            seed: None,
        };
        let g = build_kpg(&inst).unwrap();
        let l = LiftedModel::build(&g).unwrap();
        let cuts = dominance_cuts(&inst, &l);
        assert_eq!(cuts.len(), 1);
        assert_eq!(
            cuts[0].row.terms,
            vec![(bit(&l, 0, 1), 1), (bit(&l, 0, 0), -1)]
        );
    }

    #[test]
    fn example1_player_two_gets_no_dominance_cut() {
        let inst = example1();
        let g = build_kpg(&inst).unwrap();
        let l = LiftedModel::build(&g).unwrap();
        let cuts = dominance_cuts(&inst, &l);
        assert!(cuts.iter().all(|c| c.player != 1 || c.row.terms.len() == 4));
    }

    #[test]
    fn payoff_sets() {
        let inst = KpgInstance {
            n: 3,
            m: 1,
            p: vec![vec![5], vec![5], vec![5]],
            w: vec![vec![1], vec![1], vec![1]],
            b: vec![1, 1, 1],
            c: vec![
                vec![vec![0], vec![-3], vec![-3]],
                vec![vec![1], vec![0], vec![1]],
                vec![vec![1], vec![1], vec![0]],
            ],
            dist: None,
            seed: None,
        };
        let g = build_kpg(&inst).unwrap();
        let l = LiftedModel::build(&g).unwrap();
        let cuts = payoff_cuts(&inst, &l);
        assert_eq!(cuts.len(), 1);
        assert_eq!(cuts[0].row.terms.len(), 3);
        assert_eq!(cuts[0].row.upper, Some(2));
    }

    #[test]
    fn bkp_normalization_and_reduction() {
        let yes = BkpInstance {
            a: vec![1],
            b: vec![1],
            cap_a: 1,
            cap_b: 1,
        };
        assert!(yes.brute_force());
        let g = build_kpg(&reduce_bkp(&yes).unwrap()).unwrap();
        assert!(!all_pnes(&g).unwrap().pnes.is_empty());

        let big = BkpInstance {
            a: vec![5, 1],
            b: vec![2, 1],
            cap_a: 2,
            cap_b: 2,
        };
        let norm = big.normalized();
        assert_eq!(norm.a, vec![5, 2, 1]);
        assert_eq!(norm.cap_a, 5);
        assert_eq!(norm.brute_force(), big.brute_force());
        assert!(reduce_bkp(&BkpInstance {
            a: vec![1],
            b: vec![1],
            cap_a: 1,
            cap_b: 0
        })
        .is_err());
    }

    #[test]
    fn price_instance() {
        let g = build_kpg(&unbounded_price_instance(100)).unwrap();
        let r = all_pnes(&g).unwrap();
        assert_eq!(r.pnes.len(), 1);
        assert_eq!(r.pnes[0].welfare, int(5));
        assert_eq!(r.osw, int(101));
    }
}

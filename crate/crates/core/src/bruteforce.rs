//! Exhaustive reference solver: every feasible profile, every unilateral
//! deviation. Only meant for small games.

use std::collections::HashMap;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{IpgError, Result};
use crate::game::{GameInstance, OptSense, PayoffExpr, StrategyProfile, Welfare};
use crate::rational::{self, Rational};

pub const DEFAULT_CAP: u128 = 10_000_000;

/// Integer points of player `i`'s feasible set, lexicographic.
pub fn enumerate_feasible(game: &GameInstance, i: usize) -> Result<Vec<Vec<i64>>> {
    enumerate_feasible_capped(game, i, DEFAULT_CAP)
}

pub fn enumerate_feasible_capped(
    game: &GameInstance,
    i: usize,
    cap: u128,
) -> Result<Vec<Vec<i64>>> {
    let p = game.player(i);
    let count = p
        .domains
        .iter()
        .try_fold(1u128, |acc, d| acc.checked_mul(d.size() as u128))
        .unwrap_or(u128::MAX);
    if count > cap {
        return Err(IpgError::CapExceeded { count, cap });
    }
    let mut out = Vec::new();
    let mut x: Vec<i64> = p.domains.iter().map(|d| d.lower()).collect();
    loop {
        if p.constraints.iter().all(|c| c.is_satisfied(&x)) {
            out.push(x.clone());
        }
        // odometer, last variable fastest
        let mut k = x.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if x[k] < p.domains[k].upper() {
                x[k] += 1;
                for (t, d) in p.domains.iter().enumerate().skip(k + 1) {
                    x[t] = d.lower();
                }
                break;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileSpace {
    pub strategies: Vec<Vec<Vec<i64>>>,
    pub count: u128,
}

impl ProfileSpace {
    pub fn new(game: &GameInstance, cap: u128) -> Result<Self> {
        let strategies = (0..game.n())
            .map(|i| enumerate_feasible_capped(game, i, cap))
            .collect::<Result<Vec<_>>>()?;
        let count = strategies
            .iter()
            .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128))
            .unwrap_or(u128::MAX);
        if count > cap {
            return Err(IpgError::CapExceeded { count, cap });
        }
        Ok(Self { strategies, count })
    }

    pub fn profile(&self, idx: &[usize]) -> StrategyProfile {
        StrategyProfile::new(
            idx.iter()
                .enumerate()
                .map(|(i, &k)| self.strategies[i][k].clone())
                .collect(),
        )
    }

    fn sizes(&self) -> Vec<usize> {
        self.strategies.iter().map(Vec::len).collect()
    }
}

/// An expression compiled for fast repeated evaluation on flat profiles.
enum Compiled {
    Poly {
        scale: i128,
        linear: Vec<(usize, i128)>,
        quad: Vec<(usize, usize, i128)>,
    },
    General(PayoffExpr),
}

impl Compiled {
    fn new(expr: &PayoffExpr, offsets: &[usize]) -> Self {
        if !expr.is_polynomial() {
            return Compiled::General(expr.clone());
        }
        let scale = rational::denominator_lcm(expr.coefficients());
        let s = Rational::from_integer(scale);
        let flat = |v: crate::game::VarRef| offsets[v.player] + v.var;
        Compiled::Poly {
            scale,
            linear: expr
                .linear
                .iter()
                .map(|(v, c)| (flat(*v), (c * s).to_integer()))
                .collect(),
            quad: expr
                .quadratic
                .iter()
                .map(|m| (flat(m.a()), flat(m.b()), (m.coef * s).to_integer()))
                .collect(),
        }
    }

    fn eval(&self, flat: &[i64], profile: impl FnOnce() -> StrategyProfile) -> Result<Rational> {
        match self {
            Compiled::Poly {
                scale,
                linear,
                quad,
            } => {
                let mut acc = 0i128;
                for &(v, c) in linear {
                    acc += c * flat[v] as i128;
                }
                for &(a, b, c) in quad {
                    acc += c * flat[a] as i128 * flat[b] as i128;
                }
                Ok(Rational::new(acc, *scale))
            }
            Compiled::General(e) => e.evaluate(&profile()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PneRecord {
    pub profile: StrategyProfile,
    #[serde(with = "rational::as_string")]
    pub welfare: Rational,
    #[serde(serialize_with = "ser_vec")]
    pub payoffs: Vec<Rational>,
}

fn ser_vec<S: serde::Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&rational::to_string(r))?;
    }
    seq.end()
}

#[derive(Clone, Debug)]
pub struct BruteForceResult {
    /// Lexicographic in strategy indices.
    pub pnes: Vec<PneRecord>,
    pub osw: Rational,
    pub osw_profile: StrategyProfile,
    pub pos: Option<Rational>,
    pub poa: Option<Rational>,
    pub profiles: u128,
}

impl BruteForceResult {
    /// Welfare of the best equilibrium for the game's sense.
    pub fn best_pne_welfare(&self, sense: OptSense) -> Option<Rational> {
        self.pnes
            .iter()
            .map(|p| p.welfare)
            .reduce(|a, b| if sense.better(&b, &a) { b } else { a })
    }
}

/// Price ratio with the orientation of the game's sense: `OSW / S` for
/// maximization, `S / OSW` for minimization.
pub fn price(sense: OptSense, osw: &Rational, welfare: &Rational) -> Option<Rational> {
    let (num, den) = match sense {
        OptSense::Maximize => (osw, welfare),
        OptSense::Minimize => (welfare, osw),
    };
    (!den.is_zero()).then(|| num / den)
}

pub fn all_pnes(game: &GameInstance) -> Result<BruteForceResult> {
    all_pnes_capped(game, DEFAULT_CAP)
}

pub fn all_pnes_capped(game: &GameInstance, cap: u128) -> Result<BruteForceResult> {
    let space = ProfileSpace::new(game, cap)?;
    let n = game.n();
    let sense = game.sense();
    let sizes = space.sizes();
    if sizes.iter().any(|&s| s == 0) {
        return Err(IpgError::Input(
            "some player has no feasible strategy".into(),
        ));
    }
    let mut offsets = vec![0usize; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + game.player(i).m();
    }
    let utils: Vec<Compiled> = game
        .players()
        .iter()
        .map(|p| Compiled::new(&p.utility.expr, &offsets))
        .collect();
    let welfare = match game.welfare_spec() {
        Welfare::Sum => None,
        Welfare::Custom(e) => Some(Compiled::new(e, &offsets)),
    };
    let total = space.count as usize;
    let mut idx = vec![0usize; n];
    let mut flat = vec![0i64; offsets[n]];
    let mut payoffs: Vec<Vec<Rational>> = Vec::with_capacity(total);
    let mut welfares: Vec<Rational> = Vec::with_capacity(total);
    // best value of player i per opponent tuple
    let mut best: Vec<HashMap<usize, Rational>> = vec![HashMap::new(); n];
    let opp_key = |idx: &[usize], i: usize| -> usize {
        idx.iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .fold(0usize, |acc, (k, &v)| acc * sizes[k] + v)
    };
    for _ in 0..total {
        for i in 0..n {
            let s = &space.strategies[i][idx[i]];
            flat[offsets[i]..offsets[i + 1]].copy_from_slice(s);
        }
        let mk = || space.profile(&idx);
        let mut u = Vec::with_capacity(n);
        for c in &utils {
            u.push(c.eval(&flat, mk)?);
        }
        let w = match &welfare {
            None => u.iter().sum(),
            Some(c) => c.eval(&flat, mk)?,
        };
        for i in 0..n {
            let e = best[i].entry(opp_key(&idx, i)).or_insert(u[i]);
            if sense.better(&u[i], e) {
                *e = u[i];
            }
        }
        payoffs.push(u);
        welfares.push(w);
        advance(&mut idx, &sizes);
    }
    let mut pnes = Vec::new();
    let mut osw: Option<(Rational, usize)> = None;
    idx.iter_mut().for_each(|k| *k = 0);
    for t in 0..total {
        let w = welfares[t];
        if osw.as_ref().map_or(true, |(o, _)| sense.better(&w, o)) {
            osw = Some((w, t));
        }
        let stable = (0..n).all(|i| payoffs[t][i] == best[i][&opp_key(&idx, i)]);
        if stable {
            pnes.push(PneRecord {
                profile: space.profile(&idx),
                welfare: w,
                payoffs: payoffs[t].clone(),
            });
        }
        advance(&mut idx, &sizes);
    }
    let (osw, osw_t) = osw.expect("at least one profile");
    let mut oidx = vec![0usize; n];
    for _ in 0..osw_t {
        advance(&mut oidx, &sizes);
    }
    let mut result = BruteForceResult {
        pnes,
        osw,
        osw_profile: space.profile(&oidx),
        pos: None,
        poa: None,
        profiles: space.count,
    };
    if let Some(best) = result.best_pne_welfare(sense) {
        let worst = result
            .pnes
            .iter()
            .map(|p| p.welfare)
            .reduce(|a, b| if sense.better(&a, &b) { b } else { a })
            .expect("nonempty");
        result.pos = price(sense, &osw, &best);
        result.poa = price(sense, &osw, &worst);
    }
    Ok(result)
}

fn advance(idx: &mut [usize], sizes: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < sizes[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Exact best-response value of player `i` against `profile`.
pub fn best_response_value(
    game: &GameInstance,
    i: usize,
    profile: &StrategyProfile,
) -> Result<(Vec<i64>, Rational)> {
    let strategies = enumerate_feasible(game, i)?;
    let mut best: Option<(Vec<i64>, Rational)> = None;
    for s in strategies {
        let v = game.payoff(i, &profile.with_player(i, &s))?;
        if best
            .as_ref()
            .map_or(true, |(_, b)| game.sense().better(&v, b))
        {
            best = Some((s, v));
        }
    }
    best.ok_or_else(|| IpgError::Input(format!("player {} has no feasible strategy", i + 1)))
}

/// Per-player regrets of `profile`, by enumeration.
pub fn regrets(game: &GameInstance, profile: &StrategyProfile) -> Result<Vec<Rational>> {
    (0..game.n())
        .map(|i| {
            let (_, b) = best_response_value(game, i, profile)?;
            game.regret(i, profile, &b)
        })
        .collect()
}

pub fn is_pne(game: &GameInstance, profile: &StrategyProfile) -> Result<bool> {
    Ok(regrets(game, profile)?.iter().all(|r| !r.is_positive()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::*;
    use crate::game::{PlayerProgram, Utility, VarDomain, VarRef};
    use crate::rational::{int, ratio};

    #[test]
    fn example2_feasible_strategies() {
        let g = example2();
        for i in 0..2 {
            assert_eq!(
                enumerate_feasible(&g, i).unwrap(),
                vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]
            );
        }
    }

    #[test]
    fn example1_player_one_strategies() {
        let g = example1();
        assert_eq!(
            enumerate_feasible(&g, 0).unwrap(),
            vec![vec![0, 0], vec![0, 1], vec![1, 0]]
        );
    }

    #[test]
    fn example2_has_three_pnes() {
        let g = example2();
        let r = all_pnes(&g).unwrap();
        let pay: Vec<Vec<Rational>> = r.pnes.iter().map(|p| p.payoffs.clone()).collect();
        assert_eq!(pay.len(), 3);
        let mut sorted = pay.clone();
        sorted.sort();
        assert_eq!(
            sorted,
            vec![
                vec![int(7), int(9)],
                vec![int(7), int(9)],
                vec![int(9), int(9)]
            ]
        );
        assert_eq!(r.best_pne_welfare(g.sense()), Some(int(18)));
    }

    #[test]
    fn example1_prices() {
        let g = example1();
        let r = all_pnes(&g).unwrap();
        assert_eq!(r.pnes.len(), 1);
        assert_eq!(r.pnes[0].profile, profile(&[&[1, 0], &[1, 0]]));
        assert_eq!(r.osw, int(8));
        assert_eq!(r.pos, Some(ratio(8, 5)));
        assert_eq!(r.poa, Some(ratio(8, 5)));
    }

    #[test]
    fn single_player_pnes_are_the_argmax() {
        let mut e = PayoffExpr::new();
        e.add_product(VarRef::new(0, 0), VarRef::new(0, 0), int(-1));
        e.add_linear(VarRef::new(0, 0), int(3));
        let g = GameInstance::new(
            vec![PlayerProgram {
                domains: vec![VarDomain::integer(0, 4).unwrap()],
                constraints: vec![],
                utility: Utility::maximize(e),
            }],
            Welfare::Sum,
        )
        .unwrap();
        let r = all_pnes(&g).unwrap();
        let xs: Vec<i64> = r.pnes.iter().map(|p| p.profile.0[0][0]).collect();
        assert_eq!(xs, vec![1, 2]);
    }

    #[test]
    fn cap_is_enforced() {
        let g = example2();
        assert!(matches!(
            all_pnes_capped(&g, 10),
            Err(IpgError::CapExceeded { .. })
        ));
    }

    #[test]
    fn regrets_of_example3_incumbent() {
        let g = example1();
        let r = regrets(&g, &profile(&[&[1, 0], &[0, 1]])).unwrap();
        assert_eq!(r, vec![int(1), int(1)]);
        assert!(is_pne(&g, &profile(&[&[1, 0], &[1, 0]])).unwrap());
    }

    #[test]
    fn minimization_prices_are_reciprocal() {
        assert_eq!(
            price(OptSense::Minimize, &int(4), &int(6)),
            Some(ratio(3, 2))
        );
        assert_eq!(
            price(OptSense::Maximize, &int(6), &int(4)),
            Some(ratio(3, 2))
        );
        assert_eq!(price(OptSense::Maximize, &int(6), &int(0)), None);
    }
}

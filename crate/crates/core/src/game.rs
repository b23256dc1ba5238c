//! Integer programming game data model: player programs, utilities,
//! welfare, and exact payoff evaluation.
//!
//! Each player `i` controls a bounded integer vector `x^i` subject to its
//! own linear rows `A^i x^i (<=,=,>=) b^i`. Opponents only enter through
//! the utility, which is a degree-two polynomial over all players'
//! variables plus optional ratio terms (cost shares, market shares).

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{input, IpgError, Result};
use crate::rational::{self, Rational};

/// A `(player, variable)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarRef {
    pub player: usize,
    pub var: usize,
}

impl VarRef {
    pub fn new(player: usize, var: usize) -> Self {
        Self { player, var }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}_{}", self.player + 1, self.var + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Binary,
    Integer,
}

/// Bounds of one integer variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarDomain {
    lower: i64,
    upper: i64,
    kind: VarKind,
}

impl VarDomain {
    pub const BINARY: VarDomain = VarDomain {
        lower: 0,
        upper: 1,
        kind: VarKind::Binary,
    };

    pub fn new(lower: i64, upper: i64, kind: VarKind) -> Result<Self> {
        if lower > upper {
            return input(format!("domain [{lower}, {upper}] is empty"));
        }
        if kind == VarKind::Binary && (lower, upper) != (0, 1) {
            return input(format!(
                "binary domain must be [0, 1], got [{lower}, {upper}]"
            ));
        }
        let width = (upper as i128) - (lower as i128);
        if width >= 1i128 << 62 {
            return input(format!("domain [{lower}, {upper}] is wider than 2^62"));
        }
        Ok(Self { lower, upper, kind })
    }

    pub fn integer(lower: i64, upper: i64) -> Result<Self> {
        Self::new(lower, upper, VarKind::Integer)
    }

    pub fn lower(&self) -> i64 {
        self.lower
    }

    pub fn upper(&self) -> i64 {
        self.upper
    }

    pub fn kind(&self) -> VarKind {
        self.kind
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Number of values in the domain.
    pub fn size(&self) -> u64 {
        (self.upper - self.lower) as u64 + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl RowSense {
    pub fn holds<T: PartialOrd>(&self, lhs: T, rhs: T) -> bool {
        match self {
            RowSense::Le => lhs <= rhs,
            RowSense::Eq => lhs == rhs,
            RowSense::Ge => lhs >= rhs,
        }
    }
}

/// One row `coeffs . x^i (sense) rhs` over a player's own variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<i64>,
    pub sense: RowSense,
    pub rhs: i64,
}

impl Constraint {
    pub fn new(coeffs: Vec<i64>, sense: RowSense, rhs: i64) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn is_satisfied(&self, x: &[i64]) -> bool {
        let lhs: i128 = self
            .coeffs
            .iter()
            .zip(x)
            .map(|(&a, &v)| a as i128 * v as i128)
            .sum();
        self.sense.holds(lhs, self.rhs as i128)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptSense {
    Maximize,
    Minimize,
}

impl OptSense {
    /// True when `a` is strictly preferred to `b`.
    pub fn better(&self, a: &Rational, b: &Rational) -> bool {
        match self {
            OptSense::Maximize => a > b,
            OptSense::Minimize => a < b,
        }
    }

    /// +1 for maximization, -1 for minimization.
    pub fn sign(&self) -> Rational {
        match self {
            OptSense::Maximize => Rational::one(),
            OptSense::Minimize => -Rational::one(),
        }
    }
}

/// `coef * a * b` with `a <= b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial {
    a: VarRef,
    b: VarRef,
    pub coef: Rational,
}

impl Monomial {
    pub fn new(a: VarRef, b: VarRef, coef: Rational) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        Self { a, b, coef }
    }

    pub fn a(&self) -> VarRef {
        self.a
    }

    pub fn b(&self) -> VarRef {
        self.b
    }
}

/// `weight * num(x) / (outside + den(x))`.
///
/// Both linear forms are over arbitrary players' variables. When the
/// denominator evaluates to zero the numerator must vanish too, and the
/// term is worth zero (an unused edge costs nothing).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RatioTerm {
    pub weight: Rational,
    pub numerator: Vec<(VarRef, Rational)>,
    pub outside: Rational,
    pub denominator: Vec<(VarRef, Rational)>,
}

/// A payoff-like expression: linear + bilinear/quadratic + ratio terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PayoffExpr {
    pub linear: Vec<(VarRef, Rational)>,
    pub quadratic: Vec<Monomial>,
    pub ratios: Vec<RatioTerm>,
}

impl PayoffExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_linear(&mut self, v: VarRef, coef: Rational) -> &mut Self {
        if !coef.is_zero() {
            self.linear.push((v, coef));
        }
        self
    }

    pub fn add_product(&mut self, a: VarRef, b: VarRef, coef: Rational) -> &mut Self {
        if !coef.is_zero() {
            self.quadratic.push(Monomial::new(a, b, coef));
        }
        self
    }

    pub fn add_ratio(&mut self, term: RatioTerm) -> &mut Self {
        self.ratios.push(term);
        self
    }

    pub fn is_polynomial(&self) -> bool {
        self.ratios.is_empty()
    }

    /// All variables referenced anywhere in the expression.
    pub fn vars(&self) -> impl Iterator<Item = VarRef> + '_ {
        self.linear
            .iter()
            .map(|(v, _)| *v)
            .chain(self.quadratic.iter().flat_map(|m| [m.a, m.b]))
            .chain(self.ratios.iter().flat_map(|r| {
                r.numerator
                    .iter()
                    .chain(r.denominator.iter())
                    .map(|(v, _)| *v)
            }))
    }

    pub fn coefficients(&self) -> impl Iterator<Item = &Rational> + '_ {
        self.linear
            .iter()
            .map(|(_, c)| c)
            .chain(self.quadratic.iter().map(|m| &m.coef))
            .chain(self.ratios.iter().flat_map(|r| {
                std::iter::once(&r.weight)
                    .chain(std::iter::once(&r.outside))
                    .chain(r.numerator.iter().map(|(_, c)| c))
                    .chain(r.denominator.iter().map(|(_, c)| c))
            }))
    }

    pub fn evaluate(&self, profile: &StrategyProfile) -> Result<Rational> {
        let val = |v: &VarRef| Rational::from_integer(profile.0[v.player][v.var] as i128);
        let mut total = Rational::zero();
        for (v, c) in &self.linear {
            total += c * val(v);
        }
        for m in &self.quadratic {
            total += m.coef * val(&m.a) * val(&m.b);
        }
        for r in &self.ratios {
            let num: Rational = r.numerator.iter().map(|(v, c)| c * val(v)).sum();
            let den: Rational = r.outside
                + r.denominator
                    .iter()
                    .map(|(v, c)| c * val(v))
                    .sum::<Rational>();
            if den.is_zero() {
                if !num.is_zero() {
                    return Err(IpgError::Input(
                        "ratio term with zero denominator and nonzero numerator".into(),
                    ));
                }
                continue;
            }
            total += r.weight * num / den;
        }
        Ok(total)
    }
}

/// A player's objective.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utility {
    pub sense: OptSense,
    pub expr: PayoffExpr,
}

impl Utility {
    pub fn maximize(expr: PayoffExpr) -> Self {
        Self {
            sense: OptSense::Maximize,
            expr,
        }
    }

    pub fn minimize(expr: PayoffExpr) -> Self {
        Self {
            sense: OptSense::Minimize,
            expr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlayerProgram {
    pub domains: Vec<VarDomain>,
    pub constraints: Vec<Constraint>,
    pub utility: Utility,
}

impl PlayerProgram {
    pub fn m(&self) -> usize {
        self.domains.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Welfare {
    /// Sum of all players' utilities.
    #[default]
    Sum,
    Custom(PayoffExpr),
}

/// One integer vector per player.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrategyProfile(pub Vec<Vec<i64>>);

impl StrategyProfile {
    pub fn new(strategies: Vec<Vec<i64>>) -> Self {
        Self(strategies)
    }

    pub fn player(&self, i: usize) -> &[i64] {
        &self.0[i]
    }

    /// Same profile with player `i` switched to `x`.
    pub fn with_player(&self, i: usize, x: &[i64]) -> Self {
        let mut out = self.clone();
        out.0[i] = x.to_vec();
        out
    }
}

impl fmt::Display for StrategyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|x| {
                let v: Vec<String> = x.iter().map(|e| e.to_string()).collect();
                format!("({})", v.join(","))
            })
            .collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// An integer programming game. Immutable once constructed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameInstance {
    players: Vec<PlayerProgram>,
    welfare: Welfare,
}

impl GameInstance {
    pub fn new(players: Vec<PlayerProgram>, welfare: Welfare) -> Result<Self> {
        let game = Self { players, welfare };
        game.validate()?;
        Ok(game)
    }

    fn validate(&self) -> Result<()> {
        if self.players.is_empty() {
            return input("a game needs at least one player");
        }
        let sense = self.players[0].utility.sense;
        for (i, p) in self.players.iter().enumerate() {
            if p.utility.sense != sense {
                return input("all players must share the same optimization sense");
            }
            for (r, c) in p.constraints.iter().enumerate() {
                if c.coeffs.len() != p.m() {
                    return Err(IpgError::Dimension {
                        what: format!("player {} row {}", i + 1, r + 1),
                        expected: p.m(),
                        got: c.coeffs.len(),
                    });
                }
            }
            self.check_expr(&p.utility.expr, &format!("utility of player {}", i + 1))?;
        }
        if let Welfare::Custom(expr) = &self.welfare {
            self.check_expr(expr, "welfare")?;
        }
        Ok(())
    }

    fn check_expr(&self, expr: &PayoffExpr, what: &str) -> Result<()> {
        for v in expr.vars() {
            if v.player >= self.players.len() || v.var >= self.players[v.player].m() {
                return input(format!("{what} references unknown variable {v}"));
            }
        }
        if let Some(c) = expr.coefficients().find(|c| !rational::fits_i64(c)) {
            return input(format!("{what} has coefficient {c} outside 64-bit range"));
        }
        for r in &expr.ratios {
            if r.outside.is_negative() || r.denominator.iter().any(|(_, c)| c.is_negative()) {
                return input(format!(
                    "{what} has a ratio term with a negative denominator part"
                ));
            }
            for (v, _) in &r.denominator {
                if self.domain(*v).lower() < 0 {
                    return input(format!("{what} has a ratio denominator over negative {v}"));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn players(&self) -> &[PlayerProgram] {
        &self.players
    }

    pub fn player(&self, i: usize) -> &PlayerProgram {
        &self.players[i]
    }

    pub fn welfare_spec(&self) -> &Welfare {
        &self.welfare
    }

    pub fn sense(&self) -> OptSense {
        self.players[0].utility.sense
    }

    pub fn domain(&self, v: VarRef) -> VarDomain {
        self.players[v.player].domains[v.var]
    }

    /// Checks that a profile has the right shape.
    pub fn check_profile(&self, profile: &StrategyProfile) -> Result<()> {
        if profile.0.len() != self.n() {
            return Err(IpgError::Dimension {
                what: "profile".into(),
                expected: self.n(),
                got: profile.0.len(),
            });
        }
        for (i, x) in profile.0.iter().enumerate() {
            self.check_strategy(i, x)?;
        }
        Ok(())
    }

    fn check_strategy(&self, i: usize, x: &[i64]) -> Result<()> {
        if i >= self.n() {
            return input(format!("player index {i} out of range"));
        }
        if x.len() != self.players[i].m() {
            return Err(IpgError::Dimension {
                what: format!("strategy of player {}", i + 1),
                expected: self.players[i].m(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// True iff `x` lies in the player's domains and satisfies all its rows.
    pub fn is_feasible(&self, i: usize, x: &[i64]) -> Result<bool> {
        self.check_strategy(i, x)?;
        let p = &self.players[i];
        Ok(p.domains.iter().zip(x).all(|(d, &v)| d.contains(v))
            && p.constraints.iter().all(|c| c.is_satisfied(x)))
    }

    pub fn is_profile_feasible(&self, profile: &StrategyProfile) -> Result<bool> {
        self.check_profile(profile)?;
        for (i, x) in profile.0.iter().enumerate() {
            if !self.is_feasible(i, x)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Exact payoff of player `i`. No feasibility check.
    pub fn payoff(&self, i: usize, profile: &StrategyProfile) -> Result<Rational> {
        self.check_profile(profile)?;
        if i >= self.n() {
            return input(format!("player index {i} out of range"));
        }
        self.players[i].utility.expr.evaluate(profile)
    }

    pub fn payoffs(&self, profile: &StrategyProfile) -> Result<Vec<Rational>> {
        (0..self.n()).map(|i| self.payoff(i, profile)).collect()
    }

    pub fn welfare(&self, profile: &StrategyProfile) -> Result<Rational> {
        match &self.welfare {
            Welfare::Sum => Ok(self.payoffs(profile)?.into_iter().sum()),
            Welfare::Custom(expr) => {
                self.check_profile(profile)?;
                expr.evaluate(profile)
            }
        }
    }

    /// Regret of player `i` at `profile` given its best-response value.
    pub fn regret(
        &self,
        i: usize,
        profile: &StrategyProfile,
        best_value: &Rational,
    ) -> Result<Rational> {
        let current = self.payoff(i, profile)?;
        let regret = match self.sense() {
            OptSense::Maximize => best_value - current,
            OptSense::Minimize => current - best_value,
        };
        if regret.is_negative() {
            return Err(IpgError::Internal(format!(
                "negative regret {regret} for player {}: best value {best_value} is not optimal",
                i + 1
            )));
        }
        Ok(regret)
    }

    /// The expression a given player optimizes, viewed as the welfare if
    /// the welfare is custom.
    pub fn welfare_expr(&self) -> PayoffExpr {
        match &self.welfare {
            Welfare::Custom(e) => e.clone(),
            Welfare::Sum => {
                let mut e = PayoffExpr::new();
                for p in &self.players {
                    e.linear.extend(p.utility.expr.linear.iter().cloned());
                    e.quadratic.extend(p.utility.expr.quadratic.iter().cloned());
                    e.ratios.extend(p.utility.expr.ratios.iter().cloned());
                }
                e
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rational::int;
    use proptest::prelude::*;

    #[test]
    fn feasibility() {
        let g = example2();
        assert!(!g.is_feasible(0, &[1, 1, 0]).unwrap());
        assert!(g.is_feasible(0, &[0, 0, 1]).unwrap());
        assert!(g.is_feasible(0, &[0, 0, 0]).unwrap());
        assert!(matches!(
            g.is_feasible(0, &[0, 1]),
            Err(IpgError::Dimension { .. })
        ));
        assert!(!g.is_feasible(0, &[2, 0, 0]).unwrap());
    }

    #[test]
    fn payoffs_of_the_worked_examples() {
        let g1 = example1();
        let p = profile(&[&[1, 0], &[1, 0]]);
        assert_eq!(g1.payoff(0, &p).unwrap(), int(2));
        assert_eq!(g1.welfare(&p).unwrap(), int(5));
        assert_eq!(g1.welfare(&profile(&[&[1, 0], &[0, 1]])).unwrap(), int(8));
        assert_eq!(g1.payoff(0, &profile(&[&[0, 0], &[0, 0]])).unwrap(), int(0));

        let g2 = example2();
        assert_eq!(
            g2.payoff(1, &profile(&[&[0, 0, 1], &[0, 1, 0]])).unwrap(),
            int(9)
        );
    }

    #[test]
    fn regret_values() {
        let g1 = example1();
        let p = profile(&[&[1, 0], &[0, 1]]);
        assert_eq!(g1.regret(1, &p, &int(3)).unwrap(), int(1));
        let p = profile(&[&[0, 1], &[1, 0]]);
        assert_eq!(g1.regret(0, &p, &int(6)).unwrap(), int(5));
        assert!(matches!(
            g1.regret(0, &p, &int(0)),
            Err(IpgError::Internal(_))
        ));
    }

    #[test]
    fn rejects_bad_games() {
        assert!(VarDomain::new(0, 2, VarKind::Binary).is_err());
        assert!(VarDomain::integer(3, 2).is_err());
        assert!(VarDomain::integer(i64::MIN, i64::MAX).is_err());
        let mut p = example1().players()[0].clone();
        p.utility.sense = OptSense::Minimize;
        let q = example1().players()[1].clone();
        assert!(GameInstance::new(vec![p, q], Welfare::Sum).is_err());
        let mut p = example1().players()[0].clone();
        p.utility.expr.add_linear(VarRef::new(5, 0), int(1));
        assert!(GameInstance::new(vec![p], Welfare::Sum).is_err());
    }

    #[test]
    fn ratio_terms_use_zero_for_idle_resources() {
        let mut e = PayoffExpr::new();
        e.add_ratio(RatioTerm {
            weight: int(6),
            numerator: vec![(VarRef::new(0, 0), int(1))],
            outside: int(0),
            denominator: vec![(VarRef::new(0, 0), int(1)), (VarRef::new(1, 0), int(1))],
        });
        let pl = |e: PayoffExpr| PlayerProgram {
            domains: vec![VarDomain::BINARY],
            constraints: vec![],
            utility: Utility::minimize(e),
        };
        let g = GameInstance::new(vec![pl(e), pl(PayoffExpr::new())], Welfare::Sum).unwrap();
        assert_eq!(g.payoff(0, &profile(&[&[0], &[1]])).unwrap(), int(0));
        assert_eq!(g.payoff(0, &profile(&[&[1], &[1]])).unwrap(), int(3));
        assert_eq!(g.payoff(0, &profile(&[&[1], &[0]])).unwrap(), int(6));
    }

    fn reference_payoff(g: &GameInstance, i: usize, p: &StrategyProfile) -> i128 {
        // integer-only games: term-by-term
        let e = &g.player(i).utility.expr;
        let mut t = 0i128;
        for (v, c) in &e.linear {
            t += c.to_integer() * p.0[v.player][v.var] as i128;
        }
        for m in &e.quadratic {
            t += m.coef.to_integer()
                * p.0[m.a().player][m.a().var] as i128
                * p.0[m.b().player][m.b().var] as i128;
        }
        t
    }

    proptest! {
        #[test]
        fn payoff_matches_integer_reference(
            coefs in proptest::collection::vec(-50i64..50, 12),
            xs in proptest::collection::vec(-3i64..=3, 6),
        ) {
            let mut players = Vec::new();
            for i in 0..2 {
                let mut e = PayoffExpr::new();
                for j in 0..3 {
                    e.add_linear(VarRef::new(i, j), int(coefs[3 * i + j]));
                    e.add_product(VarRef::new(i, j), VarRef::new(1 - i, (j + 1) % 3), int(coefs[6 + 3 * i + j]));
                }
                players.push(PlayerProgram {
                    domains: vec![VarDomain::integer(-3, 3).unwrap(); 3],
                    constraints: vec![],
                    utility: Utility::maximize(e),
                });
            }
            let g = GameInstance::new(players, Welfare::Sum).unwrap();
            let p = StrategyProfile::new(vec![xs[..3].to_vec(), xs[3..].to_vec()]);
            let mut total = Rational::zero();
            for i in 0..2 {
                let v = g.payoff(i, &p).unwrap();
                prop_assert_eq!(v, Rational::from_integer(reference_payoff(&g, i, &p)));
                total += v;
            }
            prop_assert_eq!(g.welfare(&p).unwrap(), total);
        }
    }
}

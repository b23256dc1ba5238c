//! Lifted space: every integer variable becomes offset + binary bits, every
//! product of two bits gets its own column with McCormick linking rows, and
//! ratio terms get dedicated lifts. In the lifted space all utilities and
//! the welfare are linear, and integer points are in bijection with
//! strategy profiles.
//!
//! Ratio terms are lifted in one of two ways:
//!
//! * subset lift (`outside == 0`, binary denominator group): one binary
//!   column per nonempty subset of the group, one-hot through a clique row;
//! * share lift (`outside > 0`): a continuous share column `s` with
//!   `s * (outside + den) = num`, the products `s * y` linearized exactly
//!   because every `y` is binary.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_traits::{One, Signed, Zero};

use crate::error::{input, IpgError, Result};
use crate::game::{
    GameInstance, OptSense, PayoffExpr, RatioTerm, RowSense, StrategyProfile, VarDomain, VarKind,
    VarRef, Welfare,
};
use crate::linear::{LinExpr, LinearRow};
use crate::rational::{self, int, Rational};

/// Largest denominator group handled by the subset lift (2^6 - 1 columns).
pub const MAX_SUBSET_GROUP: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryExpansion {
    pub bits: u32,
    pub offset: i64,
    /// Upper bound on `sum 2^k b_k` when the range is not a power of two.
    pub cap: Option<i64>,
}

pub fn binary_expand(domain: &VarDomain) -> BinaryExpansion {
    let range = (domain.upper() - domain.lower()) as u64;
    let bits = if range == 0 {
        0
    } else {
        64 - range.leading_zeros()
    };
    let full = if bits == 0 { 0 } else { (1u128 << bits) - 1 };
    let cap = (full != range as u128).then_some(range as i64);
    BinaryExpansion {
        bits,
        offset: domain.lower(),
        cap,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnRole {
    Bit {
        var: VarRef,
        bit: u32,
    },
    /// Product of two distinct bit columns.
    Product {
        left: usize,
        right: usize,
    },
    /// Indicator that exactly the players in `mask` use resource `group`.
    Subset {
        group: usize,
        mask: u32,
    },
    /// Continuous share of a lifted ratio term.
    Share {
        lift: usize,
    },
    /// Share column times a binary column.
    ShareProduct {
        share: usize,
        factor: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Column {
    pub role: ColumnRole,
    pub lower: Rational,
    pub upper: Rational,
    pub integer: bool,
}

/// `value = offset + sum 2^k * bits[k]`
#[derive(Clone, Debug)]
pub struct VarEncoding {
    pub offset: i64,
    pub bits: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// A row of player `i`'s own program.
    Player(usize),
    /// Bit-pattern cap of a non power-of-two domain.
    Cap(VarRef),
    Linking,
}

#[derive(Clone, Debug)]
pub struct ModelRow {
    pub kind: RowKind,
    pub row: LinearRow,
}

/// One-hot subset columns over a binary denominator group.
#[derive(Clone, Debug)]
pub struct SubsetLift {
    pub vars: Vec<VarRef>,
    /// `cols[mask - 1]` for every nonempty mask over `vars`.
    pub cols: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ShareLift {
    pub share: usize,
    /// `(denominator variable, product column)`
    pub products: Vec<(VarRef, usize)>,
}

#[derive(Clone, Debug)]
enum RatioLift {
    Subset {
        group: usize,
        num: Vec<Rational>,
        den: Vec<Rational>,
    },
    Share {
        lift: usize,
    },
}

/// The lifted model of a game.
#[derive(Clone, Debug)]
pub struct LiftedModel {
    columns: Vec<Column>,
    encodings: Vec<Vec<VarEncoding>>,
    products: HashMap<(usize, usize), usize>,
    rows: Vec<ModelRow>,
    subset_lifts: Vec<SubsetLift>,
    subset_index: HashMap<Vec<VarRef>, usize>,
    share_lifts: Vec<ShareLift>,
    share_terms: Vec<RatioTerm>,
    ratio_lifts: Vec<RatioLift>,
    ratio_index: HashMap<RatioTerm, usize>,
    utilities: Vec<LinExpr>,
    welfare: LinExpr,
    sense: OptSense,
}

impl LiftedModel {
    pub fn build(game: &GameInstance) -> Result<Self> {
        let mut m = LiftedModel {
            columns: Vec::new(),
            encodings: Vec::new(),
            products: HashMap::new(),
            rows: Vec::new(),
            subset_lifts: Vec::new(),
            subset_index: HashMap::new(),
            share_lifts: Vec::new(),
            share_terms: Vec::new(),
            ratio_lifts: Vec::new(),
            ratio_index: HashMap::new(),
            utilities: Vec::new(),
            welfare: LinExpr::new(),
            sense: game.sense(),
        };
        for (i, p) in game.players().iter().enumerate() {
            let mut encs = Vec::with_capacity(p.m());
            for (j, d) in p.domains.iter().enumerate() {
                let v = VarRef::new(i, j);
                let exp = binary_expand(d);
                let bits: Vec<usize> = (0..exp.bits)
                    .map(|k| {
                        m.push_column(ColumnRole::Bit { var: v, bit: k }, int(0), int(1), true)
                    })
                    .collect();
                if let Some(cap) = exp.cap {
                    let terms = bits
                        .iter()
                        .enumerate()
                        .map(|(k, &c)| (c, 1i128 << k))
                        .collect();
                    m.rows.push(ModelRow {
                        kind: RowKind::Cap(v),
                        row: LinearRow::new(terms, RowSense::Le, cap as i128),
                    });
                }
                encs.push(VarEncoding {
                    offset: exp.offset,
                    bits,
                });
            }
            m.encodings.push(encs);
        }
        for (i, p) in game.players().iter().enumerate() {
            for c in &p.constraints {
                let mut e = LinExpr::new();
                for (j, &a) in c.coeffs.iter().enumerate() {
                    e.add_scaled(&m.var_expr(VarRef::new(i, j)), int(a));
                }
                e.add_constant(-int(c.rhs));
                m.rows.push(ModelRow {
                    kind: RowKind::Player(i),
                    row: LinearRow::from_expr(&e, c.sense),
                });
            }
        }
        for p in game.players() {
            let u = m.lift_expr(game, &p.utility.expr)?;
            m.utilities.push(u);
        }
        m.welfare = match game.welfare_spec() {
            Welfare::Sum => {
                let mut w = LinExpr::new();
                for u in &m.utilities {
                    w.add_scaled(u, Rational::one());
                }
                w
            }
            Welfare::Custom(expr) => m.lift_expr(game, expr)?,
        };
        Ok(m)
    }

    fn push_column(
        &mut self,
        role: ColumnRole,
        lower: Rational,
        upper: Rational,
        integer: bool,
    ) -> usize {
        self.columns.push(Column {
            role,
            lower,
            upper,
            integer,
        });
        self.columns.len() - 1
    }

    /// Linear expression of an original variable over its bit columns.
    pub fn var_expr(&self, v: VarRef) -> LinExpr {
        let enc = &self.encodings[v.player][v.var];
        let mut e = LinExpr::constant(int(enc.offset));
        for (k, &c) in enc.bits.iter().enumerate() {
            e.add_term(c, Rational::from_integer(1i128 << k));
        }
        e
    }

    fn bit_product(&mut self, a: usize, b: usize, create: bool) -> Result<usize> {
        if a == b {
            return Ok(a);
        }
        let key = (a.min(b), a.max(b));
        if let Some(&c) = self.products.get(&key) {
            return Ok(c);
        }
        if !create {
            return Err(IpgError::Internal(format!(
                "no product column for bits {key:?}"
            )));
        }
        let z = self.push_column(
            ColumnRole::Product {
                left: key.0,
                right: key.1,
            },
            int(0),
            int(1),
            true,
        );
        self.products.insert(key, z);
        // z <= a, z <= b, z >= a + b - 1
        let rows = [
            LinearRow::new(vec![(z, 1), (key.0, -1)], RowSense::Le, 0),
            LinearRow::new(vec![(z, 1), (key.1, -1)], RowSense::Le, 0),
            LinearRow::new(vec![(key.0, 1), (key.1, 1), (z, -1)], RowSense::Le, 1),
        ];
        self.rows.extend(rows.into_iter().map(|row| ModelRow {
            kind: RowKind::Linking,
            row,
        }));
        Ok(z)
    }

    fn product_expr_mut(&mut self, a: VarRef, b: VarRef) -> Result<LinExpr> {
        let ea = self.encodings[a.player][a.var].clone();
        let eb = self.encodings[b.player][b.var].clone();
        product_lin(&ea, &eb, |x, y| self.bit_product(x, y, true))
    }

    /// Linear expression of `a * b` over existing columns.
    pub fn product_expr(&self, a: VarRef, b: VarRef) -> Result<LinExpr> {
        let ea = &self.encodings[a.player][a.var];
        let eb = &self.encodings[b.player][b.var];
        product_lin(ea, eb, |x, y| {
            if x == y {
                return Ok(x);
            }
            self.products
                .get(&(x.min(y), x.max(y)))
                .copied()
                .ok_or_else(|| IpgError::Internal(format!("no product column for bits {x}, {y}")))
        })
    }

    fn lift_expr(&mut self, game: &GameInstance, expr: &PayoffExpr) -> Result<LinExpr> {
        let mut out = LinExpr::new();
        for (v, c) in &expr.linear {
            out.add_scaled(&self.var_expr(*v), *c);
        }
        for mono in &expr.quadratic {
            let p = self.product_expr_mut(mono.a(), mono.b())?;
            out.add_scaled(&p, mono.coef);
        }
        for term in &expr.ratios {
            let idx = self.lift_ratio(game, term)?;
            let lifted = self.ratio_value_expr(idx, term);
            out.add_scaled(&lifted, Rational::one());
        }
        Ok(out)
    }

    fn lift_ratio(&mut self, game: &GameInstance, term: &RatioTerm) -> Result<usize> {
        if let Some(&idx) = self.ratio_index.get(term) {
            return Ok(idx);
        }
        let den = merge_terms(&term.denominator);
        for (v, _) in &den {
            if !is_binary(&game.domain(*v)) {
                return input(format!("ratio denominator variable {v} must be binary"));
            }
        }
        let lift = if term.outside.is_zero() {
            self.lift_subset_ratio(term, &den)?
        } else {
            self.lift_share_ratio(game, term, &den)?
        };
        self.ratio_lifts.push(lift);
        let idx = self.ratio_lifts.len() - 1;
        self.ratio_index.insert(term.clone(), idx);
        Ok(idx)
    }

    fn lift_subset_ratio(
        &mut self,
        term: &RatioTerm,
        den: &BTreeMap<VarRef, Rational>,
    ) -> Result<RatioLift> {
        let vars: Vec<VarRef> = den.keys().copied().collect();
        if vars.is_empty() || vars.len() > MAX_SUBSET_GROUP {
            return input(format!(
                "ratio term over {} denominator variables; the subset lift supports 1..={MAX_SUBSET_GROUP}",
                vars.len()
            ));
        }
        if den.values().any(|c| !c.is_positive()) {
            return input("subset-lifted ratio terms need strictly positive denominator weights");
        }
        let num_map = merge_terms(&term.numerator);
        if let Some(v) = num_map.keys().find(|v| !den.contains_key(v)) {
            return input(format!(
                "ratio numerator variable {v} missing from the denominator"
            ));
        }
        let group = match self.subset_index.get(&vars) {
            Some(&g) => g,
            None => self.push_subset_group(vars.clone()),
        };
        let num = vars
            .iter()
            .map(|v| num_map.get(v).copied().unwrap_or_else(Rational::zero))
            .collect();
        let den = vars.iter().map(|v| den[v]).collect();
        Ok(RatioLift::Subset { group, num, den })
    }

    fn push_subset_group(&mut self, vars: Vec<VarRef>) -> usize {
        let g = self.subset_lifts.len();
        let k = vars.len();
        let cols: Vec<usize> = (1u32..(1 << k))
            .map(|mask| {
                self.push_column(ColumnRole::Subset { group: g, mask }, int(0), int(1), true)
            })
            .collect();
        for (pos, v) in vars.iter().enumerate() {
            // x_v = sum of subsets containing v
            let enc = &self.encodings[v.player][v.var];
            let mut terms = vec![(enc.bits[0], 1i128)];
            for mask in 1u32..(1 << k) {
                if mask & (1 << pos) != 0 {
                    terms.push((cols[mask as usize - 1], -1));
                }
            }
            self.rows.push(ModelRow {
                kind: RowKind::Linking,
                row: LinearRow::new(terms, RowSense::Eq, 0),
            });
        }
        self.rows.push(ModelRow {
            kind: RowKind::Linking,
            row: LinearRow::new(cols.iter().map(|&c| (c, 1)).collect(), RowSense::Le, 1),
        });
        self.subset_lifts.push(SubsetLift {
            vars: vars.clone(),
            cols,
        });
        self.subset_index.insert(vars, g);
        g
    }

    fn lift_share_ratio(
        &mut self,
        game: &GameInstance,
        term: &RatioTerm,
        den: &BTreeMap<VarRef, Rational>,
    ) -> Result<RatioLift> {
        let (nlo, nhi) = linear_range(game, &term.numerator);
        let dlo = term.outside;
        let dhi = term.outside + den.values().sum::<Rational>();
        let candidates = [nlo / dlo, nlo / dhi, nhi / dlo, nhi / dhi];
        let lo = *candidates.iter().min().unwrap();
        let hi = *candidates.iter().max().unwrap();
        let lift = self.share_lifts.len();
        let s = self.push_column(ColumnRole::Share { lift }, lo, hi, false);
        let mut defining = LinExpr::new();
        defining.add_term(s, term.outside);
        let mut products = Vec::new();
        for (&v, &c) in den {
            let y = self.encodings[v.player][v.var].bits[0];
            let p = self.push_column(
                ColumnRole::ShareProduct {
                    share: s,
                    factor: y,
                },
                lo.min(Rational::zero()),
                hi.max(Rational::zero()),
                false,
            );
            let mut push = |e: LinExpr, sense| {
                self.rows.push(ModelRow {
                    kind: RowKind::Linking,
                    row: LinearRow::from_expr(&e, sense),
                })
            };
            // p <= hi*y, p >= lo*y, p <= s - lo(1-y), p >= s - hi(1-y)
            push(
                lin(&[(p, int(1)), (y, -hi)], Rational::zero()),
                RowSense::Le,
            );
            push(
                lin(&[(p, int(1)), (y, -lo)], Rational::zero()),
                RowSense::Ge,
            );
            push(
                lin(&[(p, int(1)), (s, int(-1)), (y, -lo)], lo),
                RowSense::Le,
            );
            push(
                lin(&[(p, int(1)), (s, int(-1)), (y, -hi)], hi),
                RowSense::Ge,
            );
            defining.add_term(p, c);
            products.push((v, p));
        }
        for (v, c) in &term.numerator {
            let ve = self.var_expr(*v);
            defining.add_scaled(&ve, -*c);
        }
        self.rows.push(ModelRow {
            kind: RowKind::Linking,
            row: LinearRow::from_expr(&defining, RowSense::Eq),
        });
        self.share_lifts.push(ShareLift { share: s, products });
        self.share_terms.push(term.clone());
        Ok(RatioLift::Share { lift })
    }

    fn ratio_value_expr(&self, idx: usize, term: &RatioTerm) -> LinExpr {
        match &self.ratio_lifts[idx] {
            RatioLift::Subset { group, num, den } => {
                let g = &self.subset_lifts[*group];
                let mut e = LinExpr::new();
                for mask in 1u32..(1 << g.vars.len()) {
                    let (n, d) = masked_sums(mask, num, den);
                    e.add_term(g.cols[mask as usize - 1], term.weight * n / d);
                }
                e
            }
            RatioLift::Share { lift } => {
                let mut e = LinExpr::new();
                e.add_term(self.share_lifts[*lift].share, term.weight);
                e
            }
        }
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[ModelRow] {
        &self.rows
    }

    pub fn linking_rows(&self) -> impl Iterator<Item = &LinearRow> {
        self.rows
            .iter()
            .filter(|r| r.kind == RowKind::Linking)
            .map(|r| &r.row)
    }

    pub fn encoding(&self, v: VarRef) -> &VarEncoding {
        &self.encodings[v.player][v.var]
    }

    /// Bit columns of player `i`.
    pub fn player_bits(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.encodings[i]
            .iter()
            .flat_map(|e| e.bits.iter().copied())
    }

    /// Bit columns of all players, i.e. the columns that pin down a profile.
    pub fn all_bits(&self) -> Vec<usize> {
        (0..self.encodings.len())
            .flat_map(|i| self.player_bits(i))
            .collect()
    }

    pub fn product_columns(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(c, col)| match col.role {
                ColumnRole::Product { left, right } => Some((c, left, right)),
                _ => None,
            })
    }

    pub fn subset_lifts(&self) -> &[SubsetLift] {
        &self.subset_lifts
    }

    pub fn share_lifts(&self) -> &[ShareLift] {
        &self.share_lifts
    }

    /// Lifted utility of player `i`, in the player's own sense.
    pub fn utility(&self, i: usize) -> &LinExpr {
        &self.utilities[i]
    }

    pub fn welfare(&self) -> &LinExpr {
        &self.welfare
    }

    pub fn sense(&self) -> OptSense {
        self.sense
    }

    /// Column values induced by a profile. Satisfies every row of the model
    /// whenever the profile is feasible.
    pub fn evaluate_induced(&self, profile: &StrategyProfile) -> Vec<Rational> {
        let mut vals = vec![Rational::zero(); self.columns.len()];
        for (i, encs) in self.encodings.iter().enumerate() {
            for (j, enc) in encs.iter().enumerate() {
                let mut rest = (profile.0[i][j] - enc.offset) as u64;
                for &c in &enc.bits {
                    vals[c] = int((rest & 1) as i64);
                    rest >>= 1;
                }
            }
        }
        let value = |v: &VarRef| int(profile.0[v.player][v.var]);
        for (c, col) in self.columns.iter().enumerate() {
            match &col.role {
                ColumnRole::Bit { .. } => {}
                ColumnRole::Product { left, right } => vals[c] = vals[*left] * vals[*right],
                ColumnRole::Subset { group, mask } => {
                    let active = self.subset_lifts[*group]
                        .vars
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| value(v) == int(1))
                        .fold(0u32, |acc, (pos, _)| acc | (1 << pos));
                    vals[c] = int((active == *mask) as i64);
                }
                ColumnRole::Share { lift } => {
                    let t = &self.share_terms[*lift];
                    let num: Rational = t.numerator.iter().map(|(v, k)| k * value(v)).sum();
                    let den: Rational = t.outside
                        + t.denominator
                            .iter()
                            .map(|(v, k)| k * value(v))
                            .sum::<Rational>();
                    vals[c] = num / den;
                }
                ColumnRole::ShareProduct { share, factor } => {
                    // the share column precedes its products
                    vals[c] = vals[*share] * vals[*factor];
                }
            }
        }
        vals
    }

    /// Strategy profile encoded by integral bit values.
    pub fn decode(&self, values: &[Rational]) -> StrategyProfile {
        StrategyProfile::new(
            self.encodings
                .iter()
                .map(|encs| {
                    encs.iter()
                        .map(|enc| {
                            enc.offset
                                + enc
                                    .bits
                                    .iter()
                                    .enumerate()
                                    .map(|(k, &c)| (values[c].to_integer() as i64) << k)
                                    .sum::<i64>()
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Linearization of `u^i(xhat, x^{-i})` as a function of the opponents.
    ///
    /// Polynomial and subset-lifted terms are substituted exactly. Share
    /// terms are not linear in the opponents; they are replaced by their
    /// tangent at `incumbent`, which bounds them from the correct side for
    /// the player's sense and is tight at the incumbent.
    pub fn deviation_expr(
        &self,
        game: &GameInstance,
        i: usize,
        xhat: &[i64],
        incumbent: &StrategyProfile,
    ) -> Result<LinExpr> {
        let expr = &game.player(i).utility.expr;
        let fixed = |v: &VarRef| (v.player == i).then(|| int(xhat[v.var]));
        let mut out = LinExpr::new();
        for (v, c) in &expr.linear {
            match fixed(v) {
                Some(x) => out.add_constant(c * x),
                None => out.add_scaled(&self.var_expr(*v), *c),
            }
        }
        for mono in &expr.quadratic {
            match (fixed(&mono.a()), fixed(&mono.b())) {
                (Some(x), Some(y)) => out.add_constant(mono.coef * x * y),
                (Some(x), None) => out.add_scaled(&self.var_expr(mono.b()), mono.coef * x),
                (None, Some(y)) => out.add_scaled(&self.var_expr(mono.a()), mono.coef * y),
                (None, None) => out.add_scaled(&self.product_expr(mono.a(), mono.b())?, mono.coef),
            }
        }
        for term in &expr.ratios {
            let idx = *self
                .ratio_index
                .get(term)
                .ok_or_else(|| IpgError::Internal("ratio term was never lifted".into()))?;
            let part = match &self.ratio_lifts[idx] {
                RatioLift::Subset { group, num, den } => {
                    self.subset_deviation(*group, num, den, term.weight, i, xhat)
                }
                RatioLift::Share { .. } => self.share_deviation(game, term, i, xhat, incumbent)?,
            };
            out.add_scaled(&part, Rational::one());
        }
        Ok(out)
    }

    fn subset_deviation(
        &self,
        group: usize,
        num: &[Rational],
        den: &[Rational],
        weight: Rational,
        i: usize,
        xhat: &[i64],
    ) -> LinExpr {
        let g = &self.subset_lifts[group];
        let k = g.vars.len();
        let mut own_mask = 0u32;
        let mut own_active = 0u32;
        for (pos, v) in g.vars.iter().enumerate() {
            if v.player == i {
                own_mask |= 1 << pos;
                if xhat[v.var] == 1 {
                    own_active |= 1 << pos;
                }
            }
        }
        let full = (1u32 << k) - 1;
        let value = |mask: u32| {
            let (n, d) = masked_sums(mask, num, den);
            if d.is_zero() {
                Rational::zero()
            } else {
                weight * n / d
            }
        };
        let mut e = LinExpr::new();
        // opponents idle: 1 - sum of subsets touching an opponent
        let idle = value(own_active);
        e.add_constant(idle);
        for mask in 1..=full {
            let opp = mask & !own_mask;
            if opp == 0 {
                continue;
            }
            let coef = value(opp | own_active) - idle;
            e.add_term(g.cols[mask as usize - 1], coef);
        }
        e
    }

    fn share_deviation(
        &self,
        game: &GameInstance,
        term: &RatioTerm,
        i: usize,
        xhat: &[i64],
        incumbent: &StrategyProfile,
    ) -> Result<LinExpr> {
        if term.numerator.iter().any(|(v, _)| v.player != i) {
            return input("share terms must have a numerator over the owning player's variables");
        }
        let a: Rational = term
            .numerator
            .iter()
            .map(|(v, c)| c * int(xhat[v.var]))
            .sum();
        let mut base = term.outside;
        let mut opp = LinExpr::new();
        for (v, c) in &term.denominator {
            if v.player == i {
                base += c * int(xhat[v.var]);
            } else {
                opp.add_scaled(&self.var_expr(*v), *c);
            }
        }
        let wa = term.weight * a;
        if wa.is_zero() {
            return Ok(LinExpr::new());
        }
        let dbar: Rational = term
            .denominator
            .iter()
            .filter(|(v, _)| v.player != i)
            .map(|(v, c)| c * int(incumbent.0[v.player][v.var]))
            .sum();
        let convex = wa.is_positive();
        let wants_under = game.sense() == OptSense::Maximize;
        if convex != wants_under {
            // tangent bounds the wrong side; use the chord over the range
            let dmax: Rational = term
                .denominator
                .iter()
                .filter(|(v, _)| v.player != i)
                .map(|(_, c)| *c)
                .sum();
            if dmax.is_zero() {
                return Ok(LinExpr::constant(wa / base));
            }
            let g0 = wa / base;
            let g1 = wa / (base + dmax);
            let slope = (g1 - g0) / dmax;
            let mut e = LinExpr::constant(g0);
            e.add_scaled(&opp, slope);
            return Ok(e);
        }
        let denom = base + dbar;
        let g = wa / denom;
        let slope = -wa / (denom * denom);
        let mut e = LinExpr::constant(g - slope * dbar);
        e.add_scaled(&opp, slope);
        Ok(e)
    }

    /// CPLEX LP text of the model with the given objective.
    pub fn to_lp(&self, objective: &LinExpr, sense: OptSense) -> String {
        let mut s = String::new();
        let name = |c: usize| self.column_name(c);
        let fmt_terms = |terms: &mut dyn Iterator<Item = (usize, String)>| {
            let mut out = String::new();
            for (k, (c, coef)) in terms.enumerate() {
                let neg = coef.starts_with('-');
                let mag = coef.trim_start_matches('-');
                if k == 0 {
                    let _ = write!(out, "{}{} {}", if neg { "- " } else { "" }, mag, name(c));
                } else {
                    let _ = write!(out, " {} {} {}", if neg { "-" } else { "+" }, mag, name(c));
                }
            }
            if out.is_empty() {
                out.push('0');
            }
            out
        };
        let _ = writeln!(
            s,
            "\\ lifted model: {} columns, {} rows",
            self.columns.len(),
            self.rows.len()
        );
        let _ = writeln!(
            s,
            "{}",
            match sense {
                OptSense::Maximize => "Maximize",
                OptSense::Minimize => "Minimize",
            }
        );
        let scale = Rational::from_integer(objective.integer_scale());
        let mut obj = objective
            .terms
            .iter()
            .map(|(&c, v)| (c, (v * scale).to_integer().to_string()));
        let _ = writeln!(s, " obj: {}", fmt_terms(&mut obj));
        let _ = writeln!(s, "Subject To");
        for (r, mr) in self.rows.iter().enumerate() {
            let mut terms = mr.row.terms.iter().map(|&(c, a)| (c, a.to_string()));
            let body = fmt_terms(&mut terms);
            match (mr.row.lower, mr.row.upper) {
                (Some(l), Some(u)) if l == u => {
                    let _ = writeln!(s, " r{r}: {body} = {l}");
                }
                (lo, hi) => {
                    if let Some(l) = lo {
                        let _ = writeln!(s, " r{r}_lo: {body} >= {l}");
                    }
                    if let Some(u) = hi {
                        let _ = writeln!(s, " r{r}: {body} <= {u}");
                    }
                }
            }
        }
        let _ = writeln!(s, "Bounds");
        for (c, col) in self.columns.iter().enumerate() {
            let _ = writeln!(
                s,
                " {} <= {} <= {}",
                rational::to_f64(&col.lower),
                name(c),
                rational::to_f64(&col.upper)
            );
        }
        let ints: Vec<String> = (0..self.columns.len())
            .filter(|&c| self.columns[c].integer)
            .map(name)
            .collect();
        if !ints.is_empty() {
            let _ = writeln!(s, "General");
            for chunk in ints.chunks(10) {
                let _ = writeln!(s, " {}", chunk.join(" "));
            }
        }
        let _ = writeln!(s, "End");
        s
    }

    pub fn column_name(&self, c: usize) -> String {
        match &self.columns[c].role {
            ColumnRole::Bit { var, bit } => format!("b{}_{}_{}", var.player + 1, var.var + 1, bit),
            ColumnRole::Product { left, right } => format!("z{left}_{right}"),
            ColumnRole::Subset { group, mask } => format!("zs{group}_{mask}"),
            ColumnRole::Share { lift } => format!("s{lift}"),
            ColumnRole::ShareProduct { share, factor } => format!("p{share}_{factor}"),
        }
    }
}

fn product_lin(
    ea: &VarEncoding,
    eb: &VarEncoding,
    mut z: impl FnMut(usize, usize) -> Result<usize>,
) -> Result<LinExpr> {
    let mut e = LinExpr::constant(int(ea.offset) * int(eb.offset));
    for (k, &c) in eb.bits.iter().enumerate() {
        e.add_term(c, int(ea.offset) * Rational::from_integer(1i128 << k));
    }
    for (k, &c) in ea.bits.iter().enumerate() {
        e.add_term(c, int(eb.offset) * Rational::from_integer(1i128 << k));
    }
    for (k, &ca) in ea.bits.iter().enumerate() {
        for (l, &cb) in eb.bits.iter().enumerate() {
            e.add_term(z(ca, cb)?, Rational::from_integer(1i128 << (k + l)));
        }
    }
    Ok(e)
}

fn is_binary(d: &VarDomain) -> bool {
    d.kind() == VarKind::Binary || (d.lower() == 0 && d.upper() == 1)
}

fn merge_terms(terms: &[(VarRef, Rational)]) -> BTreeMap<VarRef, Rational> {
    let mut out: BTreeMap<VarRef, Rational> = BTreeMap::new();
    for (v, c) in terms {
        *out.entry(*v).or_insert_with(Rational::zero) += c;
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn masked_sums(mask: u32, num: &[Rational], den: &[Rational]) -> (Rational, Rational) {
    let mut n = Rational::zero();
    let mut d = Rational::zero();
    for pos in 0..num.len() {
        if mask & (1 << pos) != 0 {
            n += num[pos];
            d += den[pos];
        }
    }
    (n, d)
}

fn linear_range(game: &GameInstance, terms: &[(VarRef, Rational)]) -> (Rational, Rational) {
    let mut lo = Rational::zero();
    let mut hi = Rational::zero();
    for (v, c) in terms {
        let d = game.domain(*v);
        let a = c * int(d.lower());
        let b = c * int(d.upper());
        lo += a.min(b);
        hi += a.max(b);
    }
    (lo, hi)
}

fn lin(terms: &[(usize, Rational)], constant: Rational) -> LinExpr {
    let mut e = LinExpr::constant(constant);
    for &(c, v) in terms {
        e.add_term(c, v);
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::*;
    use crate::game::{Constraint, PlayerProgram, Utility};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expansion_sizes() {
        let e = binary_expand(&VarDomain::integer(0, 3).unwrap());
        assert_eq!((e.bits, e.offset, e.cap), (2, 0, None));
        let e = binary_expand(&VarDomain::BINARY);
        assert_eq!((e.bits, e.offset, e.cap), (1, 0, None));
        let e = binary_expand(&VarDomain::integer(-2, 5).unwrap());
        assert_eq!((e.bits, e.offset, e.cap), (3, -2, None));
        let e = binary_expand(&VarDomain::integer(4, 4).unwrap());
        assert_eq!((e.bits, e.cap), (0, None));
        let e = binary_expand(&VarDomain::integer(0, 4).unwrap());
        assert_eq!((e.bits, e.cap), (3, Some(4)));
    }

    #[test]
    fn expansion_is_a_bijection() {
        // all 8 patterns of [-2, 5] hit each value once
        let e = binary_expand(&VarDomain::integer(-2, 5).unwrap());
        let mut seen: Vec<i64> = (0..(1i64 << e.bits)).map(|p| e.offset + p).collect();
        seen.sort();
        assert_eq!(seen, (-2..=5).collect::<Vec<_>>());
    }

    #[test]
    fn example1_lift_has_two_products_and_six_linking_rows() {
        let g = example1();
        let m = LiftedModel::build(&g).unwrap();
        assert_eq!(m.product_columns().count(), 2);
        assert_eq!(m.linking_rows().count(), 6);
        let p = profile(&[&[1, 0], &[1, 0]]);
        let vals = m.evaluate_induced(&p);
        let z: Vec<Rational> = m.product_columns().map(|(c, _, _)| vals[c]).collect();
        assert_eq!(z, vec![int(1), int(0)]);
        // welfare over the lift: 6x11 + x12 + 4x21 + 2x22 - 5z1 + 5z2
        let w = m.welfare();
        assert_eq!(w.terms.values().filter(|c| **c == int(-5)).count(), 1);
        assert_eq!(w.terms.values().filter(|c| **c == int(5)).count(), 1);
    }

    #[test]
    fn example2_induced_products() {
        let g = example2();
        let m = LiftedModel::build(&g).unwrap();
        let vals = m.evaluate_induced(&profile(&[&[0, 0, 1], &[0, 0, 1]]));
        let z: Vec<Rational> = m.product_columns().map(|(c, _, _)| vals[c]).collect();
        assert_eq!(z, vec![int(0), int(0), int(1)]);
        let zero = m.evaluate_induced(&profile(&[&[0, 0, 0], &[0, 0, 0]]));
        assert!(zero.iter().all(|v| v.is_zero()));
    }

    #[test]
    fn linear_games_need_no_products() {
        let mut e = PayoffExpr::new();
        e.add_linear(VarRef::new(0, 0), int(3));
        let g = GameInstance::new(
            vec![PlayerProgram {
                domains: vec![VarDomain::BINARY],
                constraints: vec![],
                utility: Utility::maximize(e),
            }],
            Welfare::Sum,
        )
        .unwrap();
        let m = LiftedModel::build(&g).unwrap();
        assert_eq!(m.product_columns().count(), 0);
        assert_eq!(m.linking_rows().count(), 0);
    }

    #[test]
    fn quadratic_lift_column_count() {
        // x_i^2 own terms plus x1*x2 on [0,3]
        let mut players = Vec::new();
        for i in 0..2 {
            let mut e = PayoffExpr::new();
            e.add_product(VarRef::new(i, 0), VarRef::new(i, 0), int(1));
            e.add_product(VarRef::new(i, 0), VarRef::new(1 - i, 0), int(1));
            players.push(PlayerProgram {
                domains: vec![VarDomain::integer(0, 3).unwrap()],
                constraints: vec![],
                utility: Utility::minimize(e),
            });
        }
        let g = GameInstance::new(players, Welfare::Sum).unwrap();
        let m = LiftedModel::build(&g).unwrap();
        assert_eq!(m.player_bits(0).count(), 2);
        assert_eq!(m.product_columns().count(), 6);
    }

    #[test]
    fn mccormick_is_exact_on_binaries() {
        // z <= a, z <= b, z >= a + b - 1 over {0,1}^3
        let rows = [
            LinearRow::new(vec![(2, 1), (0, -1)], RowSense::Le, 0),
            LinearRow::new(vec![(2, 1), (1, -1)], RowSense::Le, 0),
            LinearRow::new(vec![(0, 1), (1, 1), (2, -1)], RowSense::Le, 1),
        ];
        for bits in 0..8 {
            let v: Vec<Rational> = (0..3).map(|k| int((bits >> k) & 1)).collect();
            let ok = rows.iter().all(|r| r.is_satisfied(&v));
            assert_eq!(ok, v[2] == v[0] * v[1], "pattern {bits:03b}");
        }
    }

    fn random_game(rng: &mut ChaCha8Rng) -> GameInstance {
        let mut players = Vec::new();
        for i in 0..2 {
            let m = 2;
            let domains = (0..m)
                .map(|_| {
                    let lo = rng.gen_range(-3..=1);
                    VarDomain::integer(lo, lo + rng.gen_range(0..=5)).unwrap()
                })
                .collect::<Vec<_>>();
            let mut e = PayoffExpr::new();
            for j in 0..m {
                e.add_linear(VarRef::new(i, j), int(rng.gen_range(-9..=9)));
                e.add_product(
                    VarRef::new(i, j),
                    VarRef::new(i, (j + 1) % m),
                    int(rng.gen_range(-5..=5)),
                );
                e.add_product(
                    VarRef::new(i, j),
                    VarRef::new(i, j),
                    int(rng.gen_range(-5..=5)),
                );
                e.add_product(
                    VarRef::new(i, j),
                    VarRef::new(1 - i, j),
                    rational::ratio(rng.gen_range(-9..=9), 2),
                );
            }
            players.push(PlayerProgram {
                domains,
                constraints: vec![Constraint::new(vec![1, 1], RowSense::Le, 4)],
                utility: Utility::maximize(e),
            });
        }
        GameInstance::new(players, Welfare::Sum).unwrap()
    }

    #[test]
    fn lifted_utilities_match_payoffs_on_random_profiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let g = random_game(&mut rng);
            let m = LiftedModel::build(&g).unwrap();
            for _ in 0..50 {
                let p = StrategyProfile::new(
                    (0..2)
                        .map(|i| {
                            g.player(i)
                                .domains
                                .iter()
                                .map(|d| rng.gen_range(d.lower()..=d.upper()))
                                .collect()
                        })
                        .collect(),
                );
                let vals = m.evaluate_induced(&p);
                assert!(m.linking_rows().all(|r| r.is_satisfied(&vals)));
                assert!(m
                    .rows()
                    .iter()
                    .filter(|r| matches!(r.kind, RowKind::Cap(_)))
                    .all(|r| r.row.is_satisfied(&vals)));
                assert_eq!(m.decode(&vals), p);
                for i in 0..2 {
                    assert_eq!(m.utility(i).evaluate(&vals), g.payoff(i, &p).unwrap());
                }
                assert_eq!(m.welfare().evaluate(&vals), g.welfare(&p).unwrap());
            }
        }
    }

    #[test]
    fn deviation_expression_matches_direct_payoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_game(&mut rng);
            let m = LiftedModel::build(&g).unwrap();
            let draw = |rng: &mut ChaCha8Rng, i: usize| -> Vec<i64> {
                g.player(i)
                    .domains
                    .iter()
                    .map(|d| rng.gen_range(d.lower()..=d.upper()))
                    .collect()
            };
            for _ in 0..20 {
                let p = StrategyProfile::new(vec![draw(&mut rng, 0), draw(&mut rng, 1)]);
                let xhat = draw(&mut rng, 0);
                let e = m.deviation_expr(&g, 0, &xhat, &p).unwrap();
                let vals = m.evaluate_induced(&p);
                assert_eq!(
                    e.evaluate(&vals),
                    g.payoff(0, &p.with_player(0, &xhat)).unwrap()
                );
            }
        }
    }

    #[test]
    fn lp_dump_mentions_every_row() {
        let g = example1();
        let m = LiftedModel::build(&g).unwrap();
        let lp = m.to_lp(m.welfare(), OptSense::Maximize);
        assert!(lp.starts_with("\\ lifted model"));
        assert!(lp.contains("Maximize"));
        assert!(lp.contains(" r7:"));
        assert!(lp.trim_end().ends_with("End"));
    }
}

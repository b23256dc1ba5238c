//! Linear expressions over lifted columns and exact integer rows.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::game::RowSense;
use crate::rational::{self, Rational};

/// `constant + sum(coef * column)` with exact rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinExpr {
    pub terms: BTreeMap<usize, Rational>,
    pub constant: Rational,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: Rational) -> Self {
        Self {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn column(col: usize) -> Self {
        let mut e = Self::new();
        e.add_term(col, Rational::from_integer(1));
        e
    }

    pub fn add_term(&mut self, col: usize, coef: Rational) {
        if coef.is_zero() {
            return;
        }
        let entry = self.terms.entry(col).or_insert_with(Rational::zero);
        *entry += coef;
        if entry.is_zero() {
            self.terms.remove(&col);
        }
    }

    pub fn add_constant(&mut self, c: Rational) {
        self.constant += c;
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &LinExpr, scale: Rational) {
        if scale.is_zero() {
            return;
        }
        for (&col, c) in &other.terms {
            self.add_term(col, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, scale: Rational) -> LinExpr {
        let mut out = LinExpr::new();
        out.add_scaled(self, scale);
        out
    }

    pub fn evaluate(&self, values: &[Rational]) -> Rational {
        self.constant
            + self
                .terms
                .iter()
                .map(|(&c, v)| v * values[c])
                .sum::<Rational>()
    }

    pub fn evaluate_f64(&self, values: &[f64]) -> f64 {
        rational::to_f64(&self.constant)
            + self
                .terms
                .iter()
                .map(|(&c, v)| rational::to_f64(v) * values[c])
                .sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Smallest positive integer that makes every coefficient (and the
    /// constant) integral.
    pub fn integer_scale(&self) -> i128 {
        rational::denominator_lcm(self.terms.values().chain(std::iter::once(&self.constant)))
    }
}

/// `lower <= sum(coef * column) <= upper` with integer coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearRow {
    pub terms: Vec<(usize, i128)>,
    pub lower: Option<i128>,
    pub upper: Option<i128>,
}

impl LinearRow {
    pub fn new(terms: Vec<(usize, i128)>, sense: RowSense, rhs: i128) -> Self {
        let (lower, upper) = match sense {
            RowSense::Le => (None, Some(rhs)),
            RowSense::Ge => (Some(rhs), None),
            RowSense::Eq => (Some(rhs), Some(rhs)),
        };
        Self {
            terms: terms.into_iter().filter(|(_, c)| *c != 0).collect(),
            lower,
            upper,
        }
    }

    /// Row `expr (sense) 0`, denominators cleared.
    pub fn from_expr(expr: &LinExpr, sense: RowSense) -> Self {
        let scale = Rational::from_integer(expr.integer_scale());
        let terms = expr
            .terms
            .iter()
            .map(|(&c, v)| (c, (v * scale).to_integer()))
            .collect();
        let rhs = -(expr.constant * scale).to_integer();
        Self::new(terms, sense, rhs)
    }

    /// The trivial row `0 <= 1`.
    pub fn trivial() -> Self {
        Self::new(Vec::new(), RowSense::Le, 1)
    }

    pub fn activity(&self, values: &[Rational]) -> Rational {
        self.terms
            .iter()
            .map(|&(c, a)| Rational::from_integer(a) * values[c])
            .sum()
    }

    pub fn activity_f64(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(c, a)| a as f64 * values[c]).sum()
    }

    pub fn is_satisfied(&self, values: &[Rational]) -> bool {
        let act = self.activity(values);
        self.lower
            .map_or(true, |l| act >= Rational::from_integer(l))
            && self
                .upper
                .map_or(true, |u| act <= Rational::from_integer(u))
    }

    /// Amount by which the row is violated (zero when satisfied).
    pub fn violation(&self, values: &[Rational]) -> Rational {
        let act = self.activity(values);
        let below = self
            .lower
            .map(|l| Rational::from_integer(l) - act)
            .filter(|v| v.is_positive());
        let above = self
            .upper
            .map(|u| act - Rational::from_integer(u))
            .filter(|v| v.is_positive());
        below.or(above).unwrap_or_else(Rational::zero)
    }

    pub fn max_column(&self) -> Option<usize> {
        self.terms.iter().map(|(c, _)| *c).max()
    }
}

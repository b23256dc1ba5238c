//! Instance files. The format is detected from the top-level keys:
//!
//! | keys                | format          |
//! |---------------------|-----------------|
//! | `players`, `welfare`| generic game    |
//! | `E`                 | network game    |
//! | `Q`                 | quadratic game  |
//! | `u0` or `L` + `J`   | facility game   |
//! | `a`, `A`            | bilevel knapsack|
//! | `p`, `w`            | knapsack game   |
//!
//! In the generic format variable references are zero-based
//! `[player, var]` pairs followed by a numerator and a denominator.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{input, IpgError, Result};
use crate::game::{
    Constraint, GameInstance, OptSense, PayoffExpr, PlayerProgram, RowSense, Utility, VarDomain,
    VarKind, VarRef, Welfare,
};
use crate::kpg::{build_kpg, reduce_bkp, BkpInstance, KpgInstance};
use crate::models::cfld::{build_cfld, CfldInstance};
use crate::models::qipg::{build_qipg, QipgInstance};
use crate::nfg::{build_nfg, NfgInstance};
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lb: i64,
    pub ub: i64,
    #[serde(default = "integer_kind")]
    pub kind: VarKind,
}

fn integer_kind() -> VarKind {
    VarKind::Integer
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub coeffs: Vec<i64>,
    pub sense: RowSense,
    pub rhs: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExprSpec {
    /// `[p, j, num, den]`
    #[serde(default)]
    pub linear: Vec<(usize, usize, i64, i64)>,
    /// `[p, j, q, k, num, den]`
    #[serde(default)]
    pub quadratic: Vec<(usize, usize, usize, usize, i64, i64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub sense: OptSense,
    #[serde(flatten)]
    pub expr: ExprSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerSpec {
    pub m: usize,
    pub domains: Vec<DomainSpec>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub utility: UtilitySpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WelfareSpec {
    Named(String),
    Custom(ExprSpec),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameFile {
    pub n: usize,
    pub players: Vec<PlayerSpec>,
    pub welfare: WelfareSpec,
}

fn coef(num: i64, den: i64) -> Result<Rational> {
    if den == 0 {
        return input("zero denominator in a coefficient");
    }
    Ok(Rational::new(num as i128, den as i128))
}

fn split(r: &Rational) -> Result<(i64, i64)> {
    match (i64::try_from(*r.numer()), i64::try_from(*r.denom())) {
        (Ok(n), Ok(d)) => Ok((n, d)),
        _ => input(format!("coefficient {r} does not fit 64 bits")),
    }
}

impl ExprSpec {
    fn to_expr(&self) -> Result<PayoffExpr> {
        let mut e = PayoffExpr::new();
        for &(p, j, num, den) in &self.linear {
            e.add_linear(VarRef::new(p, j), coef(num, den)?);
        }
        for &(p, j, q, k, num, den) in &self.quadratic {
            e.add_product(VarRef::new(p, j), VarRef::new(q, k), coef(num, den)?);
        }
        Ok(e)
    }

    fn from_expr(e: &PayoffExpr) -> Result<Self> {
        if !e.ratios.is_empty() {
            return input("ratio terms have no generic file representation");
        }
        let mut out = ExprSpec::default();
        for (v, c) in &e.linear {
            let (n, d) = split(c)?;
            out.linear.push((v.player, v.var, n, d));
        }
        for mono in &e.quadratic {
            let (n, d) = split(&mono.coef)?;
            let (a, b) = (mono.a(), mono.b());
            out.quadratic.push((a.player, a.var, b.player, b.var, n, d));
        }
        Ok(out)
    }
}

impl GameFile {
    pub fn to_game(&self) -> Result<GameInstance> {
        if self.players.len() != self.n {
            return Err(IpgError::Dimension {
                what: "players".into(),
                expected: self.n,
                got: self.players.len(),
            });
        }
        let players = self
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.domains.len() != p.m {
                    return Err(IpgError::Dimension {
                        what: format!("domains of player {}", i + 1),
                        expected: p.m,
                        got: p.domains.len(),
                    });
                }
                Ok(PlayerProgram {
                    domains: p
                        .domains
                        .iter()
                        .map(|d| VarDomain::new(d.lb, d.ub, d.kind))
                        .collect::<Result<_>>()?,
                    constraints: p
                        .constraints
                        .iter()
                        .map(|c| Constraint::new(c.coeffs.clone(), c.sense, c.rhs))
                        .collect(),
                    utility: Utility {
                        sense: p.utility.sense,
                        expr: p.utility.expr.to_expr()?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let welfare = match &self.welfare {
            WelfareSpec::Named(s) if s == "sum" => Welfare::Sum,
            WelfareSpec::Named(s) => {
                return input(format!(
                    "unknown welfare {s:?} (expected \"sum\" or an expression)"
                ))
            }
            WelfareSpec::Custom(e) => Welfare::Custom(e.to_expr()?),
        };
        GameInstance::new(players, welfare)
    }

    pub fn from_game(game: &GameInstance) -> Result<Self> {
        let players = game
            .players()
            .iter()
            .map(|p| {
                Ok(PlayerSpec {
                    m: p.m(),
                    domains: p
                        .domains
                        .iter()
                        .map(|d| DomainSpec {
                            lb: d.lower(),
                            ub: d.upper(),
                            kind: d.kind(),
                        })
                        .collect(),
                    constraints: p
                        .constraints
                        .iter()
                        .map(|c| ConstraintSpec {
                            coeffs: c.coeffs.clone(),
                            sense: c.sense,
                            rhs: c.rhs,
                        })
                        .collect(),
                    utility: UtilitySpec {
                        sense: p.utility.sense,
                        expr: ExprSpec::from_expr(&p.utility.expr)?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let welfare = match game.welfare_spec() {
            Welfare::Sum => WelfareSpec::Named("sum".into()),
            Welfare::Custom(e) => WelfareSpec::Custom(ExprSpec::from_expr(e)?),
        };
        Ok(GameFile {
            n: players.len(),
            players,
            welfare,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstanceFile {
    Game(GameFile),
    Kpg(KpgInstance),
    Nfg(NfgInstance),
    Qipg(QipgInstance),
    Cfld(CfldInstance),
    Bkp(BkpInstance),
}

fn typed<T: DeserializeOwned>(text: &str, kind: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| IpgError::Input(format!("{kind} instance: {e}")))
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| IpgError::Input(format!("malformed JSON: {e}")))?;
        let Some(obj) = value.as_object() else {
            return input("an instance file must hold a JSON object");
        };
        let has = |k: &str| obj.contains_key(k);
        if has("players") && has("welfare") {
            Ok(Self::Game(typed(text, "generic")?))
        } else if has("E") {
            Ok(Self::Nfg(typed(text, "network")?))
        } else if has("Q") {
            Ok(Self::Qipg(typed(text, "quadratic")?))
        } else if has("u0") || (has("L") && has("J")) {
            Ok(Self::Cfld(typed(text, "facility")?))
        } else if has("a") && has("A") {
            Ok(Self::Bkp(typed(text, "bilevel knapsack")?))
        } else if has("p") && has("w") {
            Ok(Self::Kpg(typed(text, "knapsack")?))
        } else {
            input("cannot tell the instance format from its keys")
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IpgError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            IpgError::Input(msg) => IpgError::Input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Game(_) => "game",
            Self::Kpg(_) => "kpg",
            Self::Nfg(_) => "nfg",
            Self::Qipg(_) => "qipg",
            Self::Cfld(_) => "cfld",
            Self::Bkp(_) => "bkp",
        }
    }

    /// Knapsack data behind the game, if any; bilevel instances are reduced.
    pub fn knapsack(&self) -> Result<Option<KpgInstance>> {
        match self {
            Self::Kpg(k) => Ok(Some(k.clone())),
            Self::Bkp(b) => Ok(Some(reduce_bkp(b)?)),
            _ => Ok(None),
        }
    }

    pub fn to_game(&self) -> Result<GameInstance> {
        match self {
            Self::Game(g) => g.to_game(),
            Self::Nfg(n) => build_nfg(n),
            Self::Qipg(q) => build_qipg(q),
            Self::Cfld(c) => build_cfld(c),
            Self::Kpg(_) | Self::Bkp(_) => build_kpg(&self.knapsack()?.expect("knapsack")),
        }
    }

    pub fn to_json(&self) -> String {
        let out = match self {
            Self::Game(g) => serde_json::to_string_pretty(g),
            Self::Kpg(k) => serde_json::to_string_pretty(k),
            Self::Nfg(n) => serde_json::to_string_pretty(n),
            Self::Qipg(q) => serde_json::to_string_pretty(q),
            Self::Cfld(c) => serde_json::to_string_pretty(c),
            Self::Bkp(b) => serde_json::to_string_pretty(b),
        };
        out.expect("instances serialize")
    }
}

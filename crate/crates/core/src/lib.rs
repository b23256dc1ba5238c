//! Pure Nash equilibria of integer programming games.
//!
//! Games are lifted into a space where every utility is linear; a master
//! MILP over the joint feasible set is then tightened with equilibrium
//! inequalities found by a best-response separation oracle.

pub mod bruteforce;
pub mod error;
pub mod game;
pub mod io;
pub mod kpg;
pub mod lifting;
pub mod linear;
pub mod master;
pub mod milp;
pub mod models;
pub mod nfg;
pub mod oracle;
pub mod rational;
pub mod report;

pub use error::{IpgError, Result};
pub use game::{
    Constraint, GameInstance, Monomial, OptSense, PayoffExpr, PlayerProgram, RatioTerm, RowSense,
    StrategyProfile, Utility, VarDomain, VarKind, VarRef, Welfare,
};
pub use rational::Rational;

//! Integer games with quadratic costs: player `i` minimizes
//! `1/2 x'Qx + (C x_others)'x + c'x` over a box of integers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::game::{
    Constraint, GameInstance, PayoffExpr, PlayerProgram, RowSense, Utility, VarDomain, VarRef,
    Welfare,
};
use crate::rational::{int, ratio, Exact, Rational};

/// Extra row `a x <= b` on one player's strategy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QipgRow {
    pub a: Vec<i64>,
    pub b: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QipgInstance {
    pub n: usize,
    pub m: usize,
    /// `Q[i]`, m x m; symmetrized when the game is built.
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Vec<Exact>>>,
    /// `C[i]`, m x m(n-1); columns follow the other players in index order.
    #[serde(rename = "C")]
    pub cross: Vec<Vec<Vec<Exact>>>,
    pub c: Vec<Vec<i64>>,
    pub lb: Vec<i64>,
    pub ub: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<QipgRow>>>,
}

impl QipgInstance {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return input("a quadratic game needs at least one player and one variable");
        }
        let square = |mat: &Vec<Vec<Exact>>, cols: usize| {
            mat.len() == m && mat.iter().all(|r| r.len() == cols)
        };
        let ok = self.q.len() == n
            && self.cross.len() == n
            && self.c.len() == n
            && self.q.iter().all(|q| square(q, m))
            && self.cross.iter().all(|c| square(c, m * (n - 1)))
            && self.c.iter().all(|c| c.len() == m)
            && self.lb.len() == m
            && self.ub.len() == m;
        if !ok {
            return input(format!("quadratic game data does not match n={n}, m={m}"));
        }
        if let Some((j, _)) = self
            .lb
            .iter()
            .zip(&self.ub)
            .enumerate()
            .find(|(_, (l, u))| l > u)
        {
            return input(format!("variable {} has an empty domain", j + 1));
        }
        if let Some(rows) = &self.rows {
            if rows.len() != n || rows.iter().flatten().any(|r| r.a.len() != m) {
                return input(format!(
                    "extra rows must give {n} lists of rows with {m} coefficients"
                ));
            }
        }
        Ok(())
    }
}

/// Cost-minimization game with the utilitarian welfare.
pub fn build_qipg(inst: &QipgInstance) -> Result<GameInstance> {
    inst.validate()?;
    let (n, m) = (inst.n, inst.m);
    let domains = inst
        .lb
        .iter()
        .zip(&inst.ub)
        .map(|(&l, &u)| VarDomain::integer(l, u))
        .collect::<Result<Vec<_>>>()?;
    let half = ratio(1, 2);
    let players = (0..n)
        .map(|i| {
            let q = &inst.q[i];
            let mut e = PayoffExpr::new();
            let x = |j: usize| VarRef::new(i, j);
            for j in 0..m {
                e.add_linear(x(j), int(inst.c[i][j]));
                e.add_product(x(j), x(j), half * q[j][j].0);
                for k in j + 1..m {
                    // symmetric part of Q counted once for each unordered pair
                    e.add_product(x(j), x(k), half * (q[j][k].0 + q[k][j].0));
                }
            }
            let others = (0..n).filter(|&k| k != i);
            for (pos, k) in others.enumerate() {
                for j in 0..m {
                    for t in 0..m {
                        e.add_product(x(j), VarRef::new(k, t), inst.cross[i][j][pos * m + t].0);
                    }
                }
            }
            let constraints = inst
                .rows
                .as_ref()
                .map(|rows| {
                    rows[i]
                        .iter()
                        .map(|r| Constraint::new(r.a.clone(), RowSense::Le, r.b))
                        .collect()
                })
                .unwrap_or_default();
            PlayerProgram {
                domains: domains.clone(),
                constraints,
                utility: Utility::minimize(e),
            }
        })
        .collect();
    GameInstance::new(players, Welfare::Sum)
}

fn scaled_into_range(mat: Vec<Vec<i64>>, limit: i64) -> Vec<Vec<Exact>> {
    let max = mat.iter().flatten().map(|v| v.abs()).max().unwrap_or(0);
    let scale = if max > limit {
        ratio(limit, max)
    } else {
        int(1)
    };
    mat.into_iter()
        .map(|row| row.into_iter().map(|v| Exact(int(v) * scale)).collect())
        .collect()
}

/// Random instance. `Q[i]` is `A'A + I` rescaled into [-25, 25] when
/// `convex`, an arbitrary symmetric integer matrix otherwise. `bounds`
/// fixes every domain; without it, lower bounds are drawn from [-1000, 0]
/// and upper bounds from [5, 1000].
pub fn generate_qipg(
    n: usize,
    m: usize,
    bounds: Option<(i64, i64)>,
    convex: bool,
    seed: u64,
) -> QipgInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = (0..n)
        .map(|_| {
            let raw: Vec<Vec<i64>> = if convex {
                let a: Vec<Vec<i64>> = (0..m)
                    .map(|_| (0..m).map(|_| rng.gen_range(-5..=5)).collect())
                    .collect();
                (0..m)
                    .map(|j| {
                        (0..m)
                            .map(|k| {
                                (0..m).map(|t| a[t][j] * a[t][k]).sum::<i64>() + i64::from(j == k)
                            })
                            .collect()
                    })
                    .collect()
            } else {
                let mut s = vec![vec![0; m]; m];
                for j in 0..m {
                    for k in j..m {
                        let v = rng.gen_range(-25..=25);
                        s[j][k] = v;
                        s[k][j] = v;
                    }
                }
                s
            };
            scaled_into_range(raw, 25)
        })
        .collect();
    let cross = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    (0..m * (n - 1))
                        .map(|_| Exact(int(rng.gen_range(-25..=25))))
                        .collect()
                })
                .collect()
        })
        .collect();
    let c = (0..n)
        .map(|_| (0..m).map(|_| rng.gen_range(-5..=5)).collect())
        .collect();
    let (lb, ub) = match bounds {
        Some((l, u)) => (vec![l; m], vec![u; m]),
        None => (
            (0..m).map(|_| rng.gen_range(-1000..=0)).collect(),
            (0..m).map(|_| rng.gen_range(5..=1000)).collect(),
        ),
    };
    QipgInstance {
        n,
        m,
        q,
        cross,
        c,
        lb,
        ub,
        rows: None,
    }
}

/// Direct evaluation of a player's cost, independent of the expression
/// builder.
pub fn direct_cost(inst: &QipgInstance, i: usize, x: &[Vec<i64>]) -> Rational {
    let m = inst.m;
    let mut total = Rational::from_integer(0);
    for j in 0..m {
        total += int(inst.c[i][j] * x[i][j]);
        for k in 0..m {
            total += ratio(1, 2) * inst.q[i][j][k].0 * int(x[i][j] * x[i][k]);
        }
    }
    let others: Vec<usize> = (0..inst.n).filter(|&k| k != i).collect();
    for j in 0..m {
        for (pos, &k) in others.iter().enumerate() {
            for t in 0..m {
                total += inst.cross[i][j][pos * m + t].0 * int(x[k][t] * x[i][j]);
            }
        }
    }
    total
}

//! Brute-force minimizer of `E[(V_N - c - G_N(ϑ))²]` over all constants and
//! predictable strategies, through the dense normal equations.
//!
//! A predictable strategy is one free coefficient per non-leaf node `v`,
//! multiplying the regressor `1_v · ΔS_{time(v)+1}`. Together with the constant
//! regressor this spans every admissible terminal gain, so solving the Gram
//! system gives the global minimum without any recursion. It shares nothing
//! with the sequential regression beyond the tree itself.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed as _, Zero as _};

use crate::decomposition::objective;
use crate::error::{Error, Result};
use crate::filtration::{NodeId, PredictableProcess};
use crate::models::{Claim, MarketModel};
use crate::scalar::{Rational, Scalar};

pub const MAX_UNKNOWNS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T> {
    /// Row-major square Gram matrix.
    pub matrix: Vec<Vec<T>>,
    pub rhs: Vec<T>,
    /// `"c"` followed by the ids of the non-leaf nodes.
    pub labels: Vec<String>,
    /// Node behind each strategy unknown (`unknowns[k]` is unknown `k + 1`).
    pub unknowns: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub x: Vec<T>,
    /// `‖Ax - b‖_∞`.
    pub residual: T,
    /// Every elimination pivot was strictly positive (positive definiteness
    /// in the fraction-free path).
    pub positive_pivots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub c: T,
    pub theta: PredictableProcess<T>,
    pub objective: T,
    pub residual: T,
}

/// Gram matrix `E[r_i r_j]` and right-hand side `E[V_N r_i]`.
pub fn assemble_normal_equations<T: Scalar>(model: &MarketModel<T>, claim: &Claim<T>) -> LinearSystem<T> {
    let tree = &model.tree;
    let ds = model.increments();
    let unknowns: Vec<NodeId> = tree.internal_nodes().collect();
    let mut column = vec![usize::MAX; tree.len()];
    for (k, &v) in unknowns.iter().enumerate() {
        column[v] = k + 1;
    }
    let dim = unknowns.len() + 1;
    let mut matrix = vec![vec![T::zero(); dim]; dim];
    let mut rhs = vec![T::zero(); dim];

    for &leaf in tree.leaves() {
        // nonzero regressors on this path: (column, value)
        let mut active = vec![(0usize, T::one())];
        let mut c = leaf;
        while let Some(p) = tree.parent(c) {
            active.push((column[p], ds.get(c).clone()));
            c = p;
        }
        let w = tree.path_prob(leaf).clone();
        let y = claim.get(leaf).clone();
        for (i, ri) in &active {
            let wri = w.clone() * ri.clone();
            rhs[*i] = rhs[*i].clone() + wri.clone() * y.clone();
            for (j, rj) in &active {
                matrix[*i][*j] = matrix[*i][*j].clone() + wri.clone() * rj.clone();
            }
        }
    }

    let labels = std::iter::once("c".to_string())
        .chain(unknowns.iter().map(|&v| tree.node(v).id.clone()))
        .collect();
    LinearSystem {
        matrix,
        rhs,
        labels,
        unknowns,
    }
}

/// Solves a symmetric positive definite system: fraction-free elimination for
/// rationals, partial pivoting for floats.
pub fn solve_spd<T: Scalar>(system: &LinearSystem<T>) -> Result<Solution<T>> {
    let x_and_pivots = match T::MODE {
        crate::scalar::Mode::Exact => {
            let a: Vec<Vec<Rational>> = system
                .matrix
                .iter()
                .map(|row| row.iter().map(crate::scalar::convert).collect())
                .collect();
            let b: Vec<Rational> = system.rhs.iter().map(crate::scalar::convert).collect();
            let (x, pos) = solve_fraction_free(&a, &b)?;
            (x.iter().map(crate::scalar::convert).collect::<Vec<T>>(), pos)
        }
        crate::scalar::Mode::Float => {
            let a: Vec<Vec<f64>> = system
                .matrix
                .iter()
                .map(|row| row.iter().map(Scalar::to_f64).collect())
                .collect();
            let b: Vec<f64> = system.rhs.iter().map(Scalar::to_f64).collect();
            let (x, pos) = solve_partial_pivot(&a, &b)?;
            (
                x.into_iter()
                    .map(|v| T::from_f64(v).expect("finite solution"))
                    .collect::<Vec<T>>(),
                pos,
            )
        }
    };
    let (x, positive_pivots) = x_and_pivots;
    let residual = system.matrix.iter().zip(&system.rhs).fold(T::zero(), |m, (row, b)| {
        let ax = row
            .iter()
            .zip(&x)
            .fold(T::zero(), |acc, (a, xi)| acc + a.clone() * xi.clone());
        T::max_of(m, (ax - b.clone()).abs())
    });
    Ok(Solution {
        x,
        residual,
        positive_pivots,
    })
}

/// Bareiss elimination on the integer-scaled augmented matrix, no pivoting
/// (leading principal minors of an SPD matrix are positive).
pub fn solve_fraction_free(a: &[Vec<Rational>], b: &[Rational]) -> Result<(Vec<Rational>, bool)> {
    let n = a.len();
    let mut m: Vec<Vec<BigInt>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let den = row
                .iter()
                .chain(std::iter::once(rhs))
                .fold(BigInt::from(1), |l, v| l.lcm(v.denom()));
            row.iter()
                .chain(std::iter::once(rhs))
                .map(|v| v.numer() * (&den / v.denom()))
                .collect()
        })
        .collect();

    let mut prev = BigInt::from(1);
    let mut positive = true;
    for k in 0..n {
        if m[k][k].is_zero() {
            return Err(Error::SingularSystem(k));
        }
        positive &= m[k][k].is_positive();
        for i in k + 1..n {
            for j in k + 1..=n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }

    let mut x = vec![Rational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = Rational::from_integer(m[i][n].clone());
        for j in i + 1..n {
            acc -= Rational::from_integer(m[i][j].clone()) * &x[j];
        }
        x[i] = acc / Rational::from_integer(m[i][i].clone());
    }
    Ok((x, positive))
}

/// Gaussian elimination with partial pivoting.
pub fn solve_partial_pivot(a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, bool)> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| row.iter().copied().chain(std::iter::once(*rhs)).collect())
        .collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |s, v| s.max(f64::abs(*v)));
    let mut positive = true;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .expect("non-empty range");
        if m[p][k].abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularSystem(k));
        }
        m.swap(k, p);
        positive &= m[k][k] > 0.0;
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = m[i][n];
        for j in i + 1..n {
            acc -= m[i][j] * x[j];
        }
        x[i] = acc / m[i][i];
    }
    Ok((x, positive))
}

/// Global minimizer `(c, ϑ)` and the objective evaluated from its definition.
pub fn brute_force_fs<T: Scalar>(model: &MarketModel<T>, claim: &Claim<T>) -> Result<OracleResult<T>> {
    let tree = &model.tree;
    let unknowns = 1 + tree.internal_nodes().count();
    if unknowns > MAX_UNKNOWNS {
        return Err(Error::TooLarge {
            unknowns,
            limit: MAX_UNKNOWNS,
        });
    }
    let system = assemble_normal_equations(model, claim);
    let solution = solve_spd(&system)?;
    let mut coef = vec![T::zero(); tree.len()];
    for (k, &v) in system.unknowns.iter().enumerate() {
        coef[v] = solution.x[k + 1].clone();
    }
    let theta = PredictableProcess::from_fn(tree, |v| coef[v].clone());
    let c = solution.x[0].clone();
    let objective = objective(&c, &theta, claim, model);
    Ok(OracleResult {
        c,
        theta,
        objective,
        residual: solution.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::{AdaptedProcess, FiltrationTree, NodeSpec, TreeSpec};
    use crate::models::{gen_binomial, gen_trinomial, payoff_claim, ClaimKind};

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn identity_system() {
        let a = vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]];
        let b = vec![q(3, 2), q(-7, 1)];
        let (x, pos) = solve_fraction_free(&a, &b).unwrap();
        assert_eq!(x, b);
        assert!(pos);
        let (x, _) = solve_partial_pivot(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![2.0, 3.0]);
    }

    #[test]
    fn fraction_free_matches_hand_solution() {
        // [[2, 1], [1, 3]] x = [3, 5] -> x = (4/5, 7/5)
        let a = vec![vec![q(2, 1), q(1, 1)], vec![q(1, 1), q(3, 1)]];
        let b = vec![q(3, 1), q(5, 1)];
        let (x, _) = solve_fraction_free(&a, &b).unwrap();
        assert_eq!(x, vec![q(4, 5), q(7, 5)]);
        let a = vec![vec![q(1, 2), q(1, 3)], vec![q(1, 3), q(1, 4)]];
        let b = vec![q(1, 1), q(0, 1)];
        let (x, _) = solve_fraction_free(&a, &b).unwrap();
        assert_eq!(x, vec![q(18, 1), q(-24, 1)]);
    }

    #[test]
    fn trinomial_normal_equations() {
        let t = q(1, 3);
        let m = gen_trinomial(q(4, 1), q(2, 1), q(1, 2), [t.clone(), t.clone(), t], 1, q(0, 1)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(3, 1) }).unwrap();
        let sys = assemble_normal_equations(&m, &c);
        // E[1]=1, E[ΔS]=2/3, E[ΔS²]=20/3, E[V]=2, E[VΔS]=20/3
        assert_eq!(sys.matrix, vec![vec![q(1, 1), q(2, 3)], vec![q(2, 3), q(20, 3)]]);
        assert_eq!(sys.rhs, vec![q(2, 1), q(20, 3)]);
        assert_eq!(sys.labels, vec!["c", "root"]);
        let sol = solve_spd(&sys).unwrap();
        assert_eq!(sol.x, vec![q(10, 7), q(6, 7)]);
        assert!(sol.residual.is_zero());
        let res = brute_force_fs(&m, &c).unwrap();
        assert_eq!(res.objective, q(2, 21));
    }

    #[test]
    fn binomial_one_step_and_zero_claim() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 1, q(0, 1)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(4, 1) }).unwrap();
        let res = brute_force_fs(&m, &c).unwrap();
        // payoffs (4, 0) on ΔS (4, -2): θ = 2/3, c = 4/3
        assert_eq!(res.theta.get(0), &q(2, 3));
        assert_eq!(res.c, q(4, 3));
        assert!(res.objective.is_zero());

        let zero = Claim::constant(&m.tree, q(0, 1));
        let res = brute_force_fs(&m, &zero).unwrap();
        assert!(res.c.is_zero() && res.theta.get(0).is_zero());
    }

    #[test]
    fn figure2_oracle() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 3, q(1, 4)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(1, 1) }).unwrap();
        let res = brute_force_fs(&m, &c).unwrap();
        assert_eq!(res.c, q(88, 25));
        assert!(res.objective.is_zero());
        let hedge = crate::decomposition::delta_hedge(&m, &c).unwrap();
        assert!(res.theta.max_abs_diff(&hedge.theta).is_zero());
    }

    #[test]
    fn zero_variance_node_is_singular() {
        let tree = FiltrationTree::build(TreeSpec {
            horizon: 1,
            nodes: vec![
                NodeSpec {
                    id: "r".into(),
                    parent: None,
                    prob: q(1, 1),
                },
                NodeSpec {
                    id: "a".into(),
                    parent: Some("r".into()),
                    prob: q(1, 1),
                },
            ],
        })
        .unwrap();
        let stock = AdaptedProcess::from_values(&tree, vec![q(4, 1), q(5, 1)]).unwrap();
        let m = MarketModel::new(tree, stock, q(0, 1), "flat").unwrap();
        let c = Claim::constant(&m.tree, q(1, 1));
        assert!(matches!(brute_force_fs(&m, &c), Err(Error::SingularSystem(_))));
        let ftree = FiltrationTree::build(TreeSpec {
            horizon: 1,
            nodes: vec![
                NodeSpec {
                    id: "r".into(),
                    parent: None,
                    prob: 1.0,
                },
                NodeSpec {
                    id: "a".into(),
                    parent: Some("r".into()),
                    prob: 1.0,
                },
            ],
        })
        .unwrap();
        let fstock = AdaptedProcess::from_values(&ftree, vec![4.0, 5.0]).unwrap();
        let mf = MarketModel::new(ftree, fstock, 0.0, "flat").unwrap();
        let c = Claim::constant(&mf.tree, 1.0);
        assert!(matches!(brute_force_fs(&mf, &c), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn float_and_exact_agree() {
        let m = gen_trinomial(4.0, 1.5, 0.6, [0.3, 0.5, 0.2], 2, 0.02).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Put { strike: 4.5 }).unwrap();
        let res = brute_force_fs(&m, &c).unwrap();
        assert!(res.residual < 1e-10);
        let me = gen_trinomial(q(4, 1), q(3, 2), q(3, 5), [q(3, 10), q(1, 2), q(1, 5)], 2, q(1, 50)).unwrap();
        let ce = payoff_claim(&me, &ClaimKind::Put { strike: q(9, 2) }).unwrap();
        let rese = brute_force_fs(&me, &ce).unwrap();
        assert!((res.c - rese.c.to_f64()).abs() < 1e-12);
        assert!((res.objective - rese.objective.to_f64()).abs() < 1e-12);
    }
}

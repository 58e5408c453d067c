//! The discrete-time Föllmer-Schweizer decomposition
//! `V_N = V_0 + Σ θ̂_j ΔS_j + L_N`, computed by backward sequential regression,
//! together with the binomial delta hedge and the checks that tie the two
//! together.

use crate::error::{Error, Result};
use crate::filtration::{AdaptedProcess, FiltrationTree, NodeId, PredictableProcess};
use crate::models::{check_complete, Claim, DoobDecomposition, MarketModel};
use crate::scalar::{Mode, Scalar};

/// What to do at a node where `Var(ΔS_n | F_{n-1}) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Degeneracy {
    /// Fail with [`Error::DegenerateNode`].
    #[default]
    Strict,
    /// Use the minimal-norm solution `θ̂ = 0` at that node.
    Pseudo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsDecomposition<T> {
    pub v0: T,
    pub theta: PredictableProcess<T>,
    /// Orthogonal martingale part, `L_0 = 0`.
    pub l: AdaptedProcess<T>,
    /// `E[(V_N - V_0 - G_N(θ̂))²]`, recomputed from the definition.
    pub objective: T,
}

/// Conditional variance counts as zero: exactly in rational mode, relative to
/// the squared increment scale in float mode.
pub(crate) fn is_degenerate<T: Scalar>(var: &T, scale_sq: &T) -> bool {
    match T::MODE {
        Mode::Exact => *var <= T::zero(),
        Mode::Float => var.to_f64() <= 1e-14 * scale_sq.to_f64(),
    }
}

/// Increment variance at `v` plus the largest squared child increment.
pub(crate) fn increment_variance<T: Scalar>(tree: &FiltrationTree<T>, ds: &AdaptedProcess<T>, v: NodeId) -> (T, T) {
    let var = tree.weighted_cov(v, |c| ds.get(c).clone(), |c| ds.get(c).clone());
    let scale = tree
        .children(v)
        .iter()
        .fold(T::zero(), |m, &c| T::max_of(m, ds.get(c).clone() * ds.get(c).clone()));
    (var, scale)
}

/// `G_n(θ) = Σ_{j≤n} θ_j ΔS_j`.
pub fn gains<T: Scalar>(theta: &PredictableProcess<T>, model: &MarketModel<T>) -> AdaptedProcess<T> {
    let tree = &model.tree;
    let ds = model.increments();
    let steps = AdaptedProcess::from_fn(tree, |v| match tree.parent(v) {
        Some(p) => theta.get(p).clone() * ds.get(v).clone(),
        None => T::zero(),
    });
    tree.cumulate(T::zero(), &steps)
}

/// `E[(V_N - c - G_N(θ))²]`.
pub fn objective<T: Scalar>(c: &T, theta: &PredictableProcess<T>, claim: &Claim<T>, model: &MarketModel<T>) -> T {
    let tree = &model.tree;
    let g = gains(theta, model);
    tree.leaves().iter().fold(T::zero(), |acc, &l| {
        let r = claim.get(l).clone() - c.clone() - g.get(l).clone();
        acc + tree.path_prob(l).clone() * r.clone() * r
    })
}

/// Backward recursion
/// `θ̂_n = Cov_{n-1}(V_N - Σ_{j>n} θ̂_j ΔS_j, ΔS_n) / Var_{n-1}(ΔS_n)`.
///
/// The residual is carried level by level as its `F_n`-conditional mean,
/// which is all the covariance against the `F_n`-measurable `ΔS_n` needs.
pub fn sequential_regression<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    policy: Degeneracy,
) -> Result<PredictableProcess<T>> {
    let tree = &model.tree;
    let ds = model.increments();
    let mut theta: Vec<Option<T>> = vec![None; tree.len()];
    let mut residual: Vec<Option<T>> = vec![None; tree.len()];
    for &l in tree.leaves() {
        residual[l] = Some(claim.get(l).clone());
    }
    for n in (0..tree.horizon()).rev() {
        for &v in tree.level(n) {
            let (var, scale) = increment_variance(tree, &ds, v);
            let th = if is_degenerate(&var, &scale) {
                match policy {
                    Degeneracy::Strict => return Err(Error::DegenerateNode(tree.node(v).id.clone())),
                    Degeneracy::Pseudo => T::zero(),
                }
            } else {
                let cov = tree.weighted_cov(
                    v,
                    |c| residual[c].clone().expect("residual filled"),
                    |c| ds.get(c).clone(),
                );
                cov / var
            };
            let next = tree.weighted_sum(v, |c| {
                residual[c].clone().expect("residual filled") - th.clone() * ds.get(c).clone()
            });
            residual[v] = Some(next);
            theta[v] = Some(th);
        }
    }
    Ok(PredictableProcess::from_fn(tree, |v| {
        theta[v].clone().expect("theta filled")
    }))
}

/// Full decomposition: strategy by sequential regression, `V_0` from the
/// zero-mean condition on `L_N`, and `L` as the martingale closing `L_N`.
pub fn fs_decompose<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    policy: Degeneracy,
) -> Result<FsDecomposition<T>> {
    let theta = sequential_regression(model, claim, policy)?;
    Ok(assemble(model, claim, theta))
}

/// `V_0`, `L` and the objective for a given strategy.
pub fn assemble<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    theta: PredictableProcess<T>,
) -> FsDecomposition<T> {
    let tree = &model.tree;
    let g = gains(&theta, model);
    let v0 = tree.leaves().iter().fold(T::zero(), |acc, &l| {
        acc + tree.path_prob(l).clone() * (claim.get(l).clone() - g.get(l).clone())
    });
    let terminal = AdaptedProcess::from_fn(tree, |v| {
        if tree.is_leaf(v) {
            claim.get(v).clone() - v0.clone() - g.get(v).clone()
        } else {
            T::zero()
        }
    });
    let l = tree
        .martingale_extend(&terminal)
        .expect("terminal values cover the leaves");
    let objective = objective(&v0, &theta, claim, model);
    FsDecomposition {
        v0,
        theta,
        l,
        objective,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaHedge<T> {
    pub theta: PredictableProcess<T>,
    /// Discounted replicating wealth, `X_N = V_N`.
    pub wealth: AdaptedProcess<T>,
    /// Wealth in time-`n` money, `X_n (1 + r)^n`.
    pub nominal_wealth: AdaptedProcess<T>,
}

/// Binomial replication:
/// `θ_{n+1} = (X_{n+1}(ωH) - X_{n+1}(ωT)) / (S_{n+1}(ωH) - S_{n+1}(ωT))`,
/// with wealth obtained backward from `X_N = V_N`.
pub fn delta_hedge<T: Scalar>(model: &MarketModel<T>, claim: &Claim<T>) -> Result<DeltaHedge<T>> {
    let tree = &model.tree;
    if !check_complete(model) {
        let bad = tree
            .internal_nodes()
            .find(|&v| {
                let ch = tree.children(v);
                ch.len() > 2 || (ch.len() == 2 && model.stock.get(ch[0]) == model.stock.get(ch[1]))
            })
            .expect("an incomplete node exists");
        return Err(Error::NotComplete(format!(
            "one-step replication fails at node `{}`",
            tree.node(bad).id
        )));
    }
    if let Some(v) = tree.internal_nodes().find(|&v| tree.children(v).len() != 2) {
        return Err(Error::NotBinomial(tree.node(v).id.clone()));
    }

    let s = &model.stock;
    let mut wealth: Vec<Option<T>> = vec![None; tree.len()];
    let mut theta: Vec<Option<T>> = vec![None; tree.len()];
    for &l in tree.leaves() {
        wealth[l] = Some(claim.get(l).clone());
    }
    for n in (0..tree.horizon()).rev() {
        for &v in tree.level(n) {
            let (h, t) = (tree.children(v)[0], tree.children(v)[1]);
            let xh = wealth[h].clone().expect("filled");
            let xt = wealth[t].clone().expect("filled");
            let th = (xh - xt.clone()) / (s.get(h).clone() - s.get(t).clone());
            wealth[v] = Some(xt + th.clone() * (s.get(v).clone() - s.get(t).clone()));
            theta[v] = Some(th);
        }
    }
    let wealth = AdaptedProcess::from_fn(tree, |v| wealth[v].clone().expect("filled"));
    let nominal_wealth = wealth.map(|v, x| x.clone() * model.growth(v));
    Ok(DeltaHedge {
        theta: PredictableProcess::from_fn(tree, |v| theta[v].clone().expect("filled")),
        wealth,
        nominal_wealth,
    })
}

/// Largest nodewise gap between the regression strategy and the delta hedge.
pub fn verify_equivalence<T: Scalar>(model: &MarketModel<T>, claim: &Claim<T>) -> Result<T> {
    let regression = sequential_regression(model, claim, Degeneracy::Strict)?;
    let hedge = delta_hedge(model, claim)?;
    Ok(regression.max_abs_diff(&hedge.theta))
}

/// `max_v |E[ΔL_n ΔM_n | F_{n-1}]|` over non-leaf nodes.
pub fn verify_orthogonality<T: Scalar>(
    tree: &FiltrationTree<T>,
    fs: &FsDecomposition<T>,
    doob: &DoobDecomposition<T>,
) -> T {
    let dl = tree.increments(&fs.l);
    let dm = tree.increments(&doob.martingale);
    tree.internal_nodes().fold(T::zero(), |m, v| {
        let e = tree.weighted_sum(v, |c| dl.get(c).clone() * dm.get(c).clone());
        T::max_of(m, e.abs())
    })
}

/// `max_leaf |V_N - V_0 - G_N(θ) - L_N|`.
pub fn reconstruction_residual<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    v0: &T,
    theta: &PredictableProcess<T>,
    l: &AdaptedProcess<T>,
) -> T {
    let g = gains(theta, model);
    model.tree.leaves().iter().fold(T::zero(), |m, &leaf| {
        let r = claim.get(leaf).clone() - v0.clone() - g.get(leaf).clone() - l.get(leaf).clone();
        T::max_of(m, r.abs())
    })
}

/// `max(|X_0 - x0|, max_v |E[X_{n} | F_{n-1}] - X_{n-1}|)`.
pub fn martingale_residual<T: Scalar>(tree: &FiltrationTree<T>, x: &AdaptedProcess<T>, x0: &T) -> T {
    let start = (x.get(tree.root()).clone() - x0.clone()).abs();
    tree.internal_nodes().fold(start, |m, v| {
        let e = tree.weighted_sum(v, |c| x.get(c).clone());
        T::max_of(m, (e - x.get(v).clone()).abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{doob_decompose, gen_binomial, gen_trinomial, payoff_claim, ClaimKind};
    use crate::scalar::{Rational, Zero};

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn figure2() -> (MarketModel<Rational>, Claim<Rational>) {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 3, q(1, 4)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(1, 1) }).unwrap();
        (m, c)
    }

    fn trinomial_k3() -> (MarketModel<Rational>, Claim<Rational>) {
        let t = q(1, 3);
        let m = gen_trinomial(q(4, 1), q(2, 1), q(1, 2), [t.clone(), t.clone(), t], 1, q(0, 1)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(3, 1) }).unwrap();
        (m, c)
    }

    #[test]
    fn gains_basics() {
        let (m, _) = figure2();
        let zero = gains(&PredictableProcess::zeros(&m.tree), &m);
        assert!(zero.max_abs().is_zero());
        let one = gains(&PredictableProcess::constant(&m.tree, q(1, 1)), &m);
        let s0 = m.stock.get(0).clone();
        assert_eq!(one, m.stock.map(|_, s| s.clone() - s0.clone()));
    }

    #[test]
    fn figure2_regression_at_tt() {
        let (m, c) = figure2();
        let theta = sequential_regression(&m, &c, Degeneracy::Strict).unwrap();
        let tt = m.tree.find("TT").unwrap();
        assert_eq!(theta.get(tt), &q(2, 3));
        let hedge = delta_hedge(&m, &c).unwrap();
        assert_eq!(hedge.theta.get(tt), &q(2, 3));
        assert_eq!(hedge.nominal_wealth.get(0), &q(88, 25));
        assert!(verify_equivalence(&m, &c).unwrap().is_zero());
    }

    #[test]
    fn figure2_decomposition_has_no_orthogonal_part() {
        let (m, c) = figure2();
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        assert!(fs.l.max_abs().is_zero());
        assert!(fs.objective.is_zero());
        assert_eq!(fs.v0, q(88, 25));
    }

    #[test]
    fn trinomial_hand_example() {
        let (m, c) = trinomial_k3();
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        assert_eq!(fs.v0, q(10, 7));
        assert_eq!(fs.theta.get(0), &q(6, 7));
        assert_eq!(fs.objective, q(2, 21));
        let ln: Vec<Rational> = m.tree.leaves().iter().map(|&l| fs.l.get(l).clone()).collect();
        assert_eq!(ln, vec![q(1, 7), q(-3, 7), q(2, 7)]);
        assert_eq!(objective(&q(10, 7), &fs.theta, &c, &m), q(2, 21));
        let doob = doob_decompose(&m);
        assert!(verify_orthogonality(&m.tree, &fs, &doob).is_zero());
        assert!(matches!(delta_hedge(&m, &c), Err(Error::NotComplete(_))));
    }

    #[test]
    fn identity_and_constant_claims() {
        let (m, _) = trinomial_k3();
        let stock_claim = Claim::from_fn(&m.tree, |l| m.stock.get(l).clone());
        let theta = sequential_regression(&m, &stock_claim, Degeneracy::Strict).unwrap();
        assert!(theta.iter().all(|(_, t)| *t == q(1, 1)));

        let k = Claim::constant(&m.tree, q(5, 2));
        let fs = fs_decompose(&m, &k, Degeneracy::Strict).unwrap();
        assert_eq!(fs.v0, q(5, 2));
        assert!(fs.theta.max_abs().is_zero());
        assert!(fs.l.max_abs().is_zero());
        assert!(objective(&q(5, 2), &PredictableProcess::zeros(&m.tree), &k, &m).is_zero());
    }

    #[test]
    fn identity_claim_delta_hedge() {
        let (m, _) = figure2();
        let c = Claim::from_fn(&m.tree, |l| m.stock.get(l).clone());
        let hedge = delta_hedge(&m, &c).unwrap();
        assert!(hedge.theta.iter().all(|(_, t)| *t == q(1, 1)));
        assert_eq!(hedge.wealth, m.stock);
        assert!(verify_equivalence(&m, &Claim::constant(&m.tree, q(0, 1)))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn degenerate_nodes() {
        use crate::filtration::{NodeSpec, TreeSpec};
        let tree = FiltrationTree::build(TreeSpec {
            horizon: 2,
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
                NodeSpec {
                    id: "aa".into(),
                    parent: Some("a".into()),
                    prob: q(1, 2),
                },
                NodeSpec {
                    id: "ab".into(),
                    parent: Some("a".into()),
                    prob: q(1, 2),
                },
            ],
        })
        .unwrap();
        let stock = AdaptedProcess::from_values(&tree, vec![q(4, 1), q(4, 1), q(6, 1), q(3, 1)]).unwrap();
        let m = MarketModel::new(tree, stock, q(0, 1), "one-child").unwrap();
        let c = Claim::from_fn(&m.tree, |l| m.stock.get(l).clone() * m.stock.get(l).clone());
        let e = sequential_regression(&m, &c, Degeneracy::Strict);
        assert!(matches!(e, Err(Error::DegenerateNode(id)) if id == "r"));
        let fs = fs_decompose(&m, &c, Degeneracy::Pseudo).unwrap();
        assert!(fs.theta.get(0).is_zero());
        assert_eq!(fs.theta.get(1), &q(9, 1));
        assert!(reconstruction_residual(&m, &c, &fs.v0, &fs.theta, &fs.l).is_zero());
        assert!(matches!(delta_hedge(&m, &c), Err(Error::NotBinomial(id)) if id == "r"));
    }

    #[test]
    fn invariants_on_two_step_trinomial() {
        let m = gen_trinomial(q(4, 1), q(2, 1), q(1, 2), [q(1, 2), q(3, 10), q(1, 5)], 2, q(1, 20)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Put { strike: q(5, 1) }).unwrap();
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        assert!(reconstruction_residual(&m, &c, &fs.v0, &fs.theta, &fs.l).is_zero());
        assert!(martingale_residual(&m.tree, &fs.l, &q(0, 1)).is_zero());
        assert!(verify_orthogonality(&m.tree, &fs, &doob_decompose(&m)).is_zero());
        assert!(fs.objective > q(0, 1));
    }
}

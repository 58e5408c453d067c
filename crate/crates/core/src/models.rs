//! Market models on filtration trees: binomial and trinomial generators,
//! claims, the Doob decomposition of the stock, and the nondegeneracy and
//! completeness checks.
//!
//! All prices are discounted by the bank account at generation time, so every
//! downstream computation works with the bank account as numéraire (`≡ 1`).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{AdaptedProcess, FiltrationTree, NodeId, NodeSpec, NodeValues, PredictableProcess, TreeSpec};
use crate::scalar::Scalar;

pub const ROOT_ID: &str = "root";

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel<T> {
    pub tree: FiltrationTree<T>,
    /// Discounted stock price.
    pub stock: AdaptedProcess<T>,
    /// One-period interest rate used for discounting (zero for custom trees).
    pub rate: T,
    pub label: String,
    pub generator: Option<Generator<T>>,
}

/// Parameters of a lattice generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator<T> {
    Binomial {
        s0: T,
        u: T,
        d: T,
        p: T,
        steps: usize,
        rate: T,
    },
    Trinomial {
        s0: T,
        u: T,
        d: T,
        p_up: T,
        p_mid: T,
        p_down: T,
        steps: usize,
        rate: T,
    },
}

impl<T: Scalar> Generator<T> {
    pub fn generate(&self) -> Result<MarketModel<T>> {
        match self {
            Generator::Binomial {
                s0,
                u,
                d,
                p,
                steps,
                rate,
            } => gen_binomial(s0.clone(), u.clone(), d.clone(), p.clone(), *steps, rate.clone()),
            Generator::Trinomial {
                s0,
                u,
                d,
                p_up,
                p_mid,
                p_down,
                steps,
                rate,
            } => gen_trinomial(
                s0.clone(),
                u.clone(),
                d.clone(),
                [p_up.clone(), p_mid.clone(), p_down.clone()],
                *steps,
                rate.clone(),
            ),
        }
    }
}

impl<T: Scalar> MarketModel<T> {
    pub fn new(tree: FiltrationTree<T>, stock: AdaptedProcess<T>, rate: T, label: &str) -> Result<Self> {
        if stock.values().len() != tree.len() {
            return Err(Error::MissingValue("stock process does not cover the tree".into()));
        }
        if let Some(v) = stock.values().iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite stock value at node `{}`",
                tree.node(v).id
            )));
        }
        if rate <= -T::one() {
            return Err(Error::InvalidParameter("rate must exceed -1".into()));
        }
        Ok(MarketModel {
            tree,
            stock,
            rate,
            label: label.to_string(),
            generator: None,
        })
    }

    /// `ΔS_n` on every node (zero at the root).
    pub fn increments(&self) -> AdaptedProcess<T> {
        self.tree.increments(&self.stock)
    }

    /// `(1 + r)^n` for the time of node `v`.
    pub fn growth(&self, v: NodeId) -> T {
        (T::one() + self.rate.clone()).powi(self.tree.node(v).time as u32)
    }

    /// Undiscounted stock price.
    pub fn raw_stock(&self) -> AdaptedProcess<T> {
        self.stock.map(|v, s| s.clone() * self.growth(v))
    }

    /// Same tree and rate, new discounted stock.
    pub fn with_stock(&self, stock: AdaptedProcess<T>, label: &str) -> Result<Self> {
        MarketModel::new(self.tree.clone(), stock, self.rate.clone(), label)
    }
}

fn check_probability<T: Scalar>(p: &T, what: &str) -> Result<()> {
    if *p <= T::zero() || *p >= T::one() {
        return Err(Error::InvalidProbability(format!(
            "{what} = {} not in (0, 1)",
            p.format()
        )));
    }
    Ok(())
}

fn check_common<T: Scalar>(s0: &T, u: &T, d: &T, steps: usize, rate: &T) -> Result<()> {
    if *s0 <= T::zero() {
        return Err(Error::InvalidParameter(format!(
            "s0 = {} must be positive",
            s0.format()
        )));
    }
    if !(*u > T::one() && T::one() > *d && *d > T::zero()) {
        return Err(Error::InvalidFactors(format!(
            "need u > 1 > d > 0, got u = {}, d = {}",
            u.format(),
            d.format()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("at least one step is required".into()));
    }
    if *rate <= -T::one() {
        return Err(Error::InvalidParameter("rate must exceed -1".into()));
    }
    Ok(())
}

/// Non-recombining lattice: each node branches into `factors.len()` children
/// labelled by `letters`, with raw price multiplied by the matching factor.
fn gen_lattice<T: Scalar>(
    s0: T,
    factors: &[(char, T, T)],
    steps: usize,
    rate: T,
    label: &str,
) -> Result<MarketModel<T>> {
    let mut nodes = vec![NodeSpec {
        id: ROOT_ID.to_string(),
        parent: None,
        prob: T::one(),
    }];
    let mut raw = vec![s0];
    let mut frontier: Vec<(String, usize)> = vec![(String::new(), 0)];
    for _ in 0..steps {
        let mut next = Vec::with_capacity(frontier.len() * factors.len());
        for (path, idx) in &frontier {
            let parent_id = if path.is_empty() {
                ROOT_ID.to_string()
            } else {
                path.clone()
            };
            for (letter, factor, prob) in factors {
                let id = format!("{path}{letter}");
                nodes.push(NodeSpec {
                    id: id.clone(),
                    parent: Some(parent_id.clone()),
                    prob: prob.clone(),
                });
                raw.push(raw[*idx].clone() * factor.clone());
                next.push((id, raw.len() - 1));
            }
        }
        frontier = next;
    }
    let raw_by_id: HashMap<String, T> = nodes.iter().map(|n| n.id.clone()).zip(raw.iter().cloned()).collect();
    let tree = FiltrationTree::build(TreeSpec { horizon: steps, nodes })?;
    let one_plus_r = T::one() + rate.clone();
    let stock = AdaptedProcess::from_fn(&tree, |v| {
        let node = tree.node(v);
        raw_by_id[&node.id].clone() / one_plus_r.powi(node.time as u32)
    });
    MarketModel::new(tree, stock, rate, label)
}

/// Binomial model with up/down factors `u`, `d` and up-probability `p`.
/// Node ids are coin-toss paths such as `HTT`; the root is `root`.
pub fn gen_binomial<T: Scalar>(s0: T, u: T, d: T, p: T, steps: usize, rate: T) -> Result<MarketModel<T>> {
    check_common(&s0, &u, &d, steps, &rate)?;
    check_probability(&p, "p")?;
    let generator = Generator::Binomial {
        s0: s0.clone(),
        u: u.clone(),
        d: d.clone(),
        p: p.clone(),
        steps,
        rate: rate.clone(),
    };
    let q = T::one() - p.clone();
    let mut model = gen_lattice(s0, &[('H', u, p), ('T', d, q)], steps, rate, "binomial")?;
    model.generator = Some(generator);
    Ok(model)
}

/// Trinomial model: up by `u`, unchanged, or down by `d`, with probabilities
/// `[p_up, p_mid, p_down]`. Node ids use the letters `U`, `M`, `D`.
pub fn gen_trinomial<T: Scalar>(s0: T, u: T, d: T, probs: [T; 3], steps: usize, rate: T) -> Result<MarketModel<T>> {
    check_common(&s0, &u, &d, steps, &rate)?;
    for (p, name) in probs.iter().zip(["p_up", "p_mid", "p_down"]) {
        check_probability(p, name)?;
    }
    let sum = probs.iter().fold(T::zero(), |a, p| a + p.clone());
    let sum_ok = match T::MODE {
        crate::scalar::Mode::Exact => sum.is_one(),
        crate::scalar::Mode::Float => (sum.clone() - T::one()).abs().to_f64() <= 1e-12,
    };
    if !sum_ok {
        return Err(Error::InvalidProbability(format!(
            "trinomial probabilities sum to {}",
            sum.format()
        )));
    }
    let generator = Generator::Trinomial {
        s0: s0.clone(),
        u: u.clone(),
        d: d.clone(),
        p_up: probs[0].clone(),
        p_mid: probs[1].clone(),
        p_down: probs[2].clone(),
        steps,
        rate: rate.clone(),
    };
    let [pu, pm, pd] = probs;
    let mut model = gen_lattice(
        s0,
        &[('U', u, pu), ('M', T::one(), pm), ('D', d, pd)],
        steps,
        rate,
        "trinomial",
    )?;
    model.generator = Some(generator);
    Ok(model)
}

/// Discounted terminal payoff `V_N`, defined on the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim<T> {
    values: Vec<Option<T>>,
}

impl<T> NodeValues<T> for Claim<T> {
    fn value_at(&self, node: NodeId) -> Option<&T> {
        self.values.value_at(node)
    }
}

impl<T: Scalar> Claim<T> {
    /// Claim from discounted leaf values.
    pub fn from_fn<F>(tree: &FiltrationTree<T>, mut f: F) -> Self
    where
        F: FnMut(NodeId) -> T,
    {
        Claim {
            values: (0..tree.len()).map(|v| tree.is_leaf(v).then(|| f(v))).collect(),
        }
    }

    pub fn constant(tree: &FiltrationTree<T>, k: T) -> Self {
        Self::from_fn(tree, |_| k.clone())
    }

    pub fn get(&self, leaf: NodeId) -> &T {
        self.values[leaf].as_ref().expect("claims live on leaves")
    }

    /// Leaf values as an adapted process (zero off the leaves).
    pub fn as_process(&self, tree: &FiltrationTree<T>) -> AdaptedProcess<T> {
        AdaptedProcess::from_fn(tree, |v| self.values[v].clone().unwrap_or_else(T::zero))
    }

    pub fn scale(&self, k: &T) -> Self {
        Claim {
            values: self
                .values
                .iter()
                .map(|v| v.as_ref().map(|v| v.clone() * k.clone()))
                .collect(),
        }
    }

    pub fn shift(&self, k: &T) -> Self {
        Claim {
            values: self
                .values
                .iter()
                .map(|v| v.as_ref().map(|v| v.clone() + k.clone()))
                .collect(),
        }
    }

    /// Undiscounted payoff at the leaves.
    pub fn nominal(&self, model: &MarketModel<T>) -> HashMap<NodeId, T> {
        model
            .tree
            .leaves()
            .iter()
            .map(|&l| (l, self.get(l).clone() * model.growth(l)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClaimKind<T> {
    Call {
        strike: T,
    },
    Put {
        strike: T,
    },
    /// Undiscounted payoff per leaf id.
    Custom(HashMap<String, T>),
}

/// Builds the discounted payoff of a European call, put, or leaf table.
pub fn payoff_claim<T: Scalar>(model: &MarketModel<T>, kind: &ClaimKind<T>) -> Result<Claim<T>> {
    let tree = &model.tree;
    let raw = model.raw_stock();
    let discount = |leaf: NodeId, x: T| x / model.growth(leaf);
    let positive = |x: T| if x > T::zero() { x } else { T::zero() };
    match kind {
        ClaimKind::Call { strike } | ClaimKind::Put { strike } if *strike < T::zero() => Err(Error::InvalidParameter(
            format!("strike {} must be non-negative", strike.format()),
        )),
        ClaimKind::Call { strike } => Ok(Claim::from_fn(tree, |l| {
            discount(l, positive(raw.get(l).clone() - strike.clone()))
        })),
        ClaimKind::Put { strike } => Ok(Claim::from_fn(tree, |l| {
            discount(l, positive(strike.clone() - raw.get(l).clone()))
        })),
        ClaimKind::Custom(table) => {
            let index = tree.id_index();
            for key in table.keys() {
                match index.get(key.as_str()) {
                    Some(&v) if tree.is_leaf(v) => {}
                    _ => return Err(Error::Parse(format!("claim entry `{key}` is not a leaf"))),
                }
            }
            if let Some(&missing) = tree.leaves().iter().find(|&&l| !table.contains_key(&tree.node(l).id)) {
                return Err(Error::MissingLeaf(tree.node(missing).id.clone()));
            }
            Ok(Claim::from_fn(tree, |l| discount(l, table[&tree.node(l).id].clone())))
        }
    }
}

/// `S = M + A` with `M` a martingale and `ΔA_n = E[ΔS_n | F_{n-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoobDecomposition<T> {
    pub martingale: AdaptedProcess<T>,
    pub drift: PredictableProcess<T>,
}

pub fn doob_decompose<T: Scalar>(model: &MarketModel<T>) -> DoobDecomposition<T> {
    let tree = &model.tree;
    let ds = model.increments();
    let drift = PredictableProcess::from_fn(tree, |v| tree.weighted_sum(v, |c| ds.get(c).clone()));
    let dm = AdaptedProcess::from_fn(tree, |v| match tree.parent(v) {
        Some(p) => ds.get(v).clone() - drift.get(p).clone(),
        None => T::zero(),
    });
    let martingale = tree.cumulate(model.stock.get(tree.root()).clone(), &dm);
    DoobDecomposition { martingale, drift }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdReport<T> {
    pub satisfied: bool,
    /// `max_v (E[ΔS|v])² / E[ΔS²|v]` over non-leaf nodes.
    pub delta_star: T,
    /// Node attaining `delta_star`.
    pub worst_node: Option<String>,
}

/// Nondegeneracy: `(E[ΔS_n | F_{n-1}])² ≤ δ E[ΔS_n² | F_{n-1}]` with `δ < 1`.
pub fn check_nd<T: Scalar>(model: &MarketModel<T>) -> Result<NdReport<T>> {
    let tree = &model.tree;
    let ds = model.increments();
    let mut delta_star = T::zero();
    let mut worst = None;
    for v in tree.internal_nodes() {
        let mean = tree.weighted_sum(v, |c| ds.get(c).clone());
        let second = tree.weighted_sum(v, |c| ds.get(c).clone() * ds.get(c).clone());
        if second.is_zero() {
            return Err(Error::DegenerateNode(tree.node(v).id.clone()));
        }
        let ratio = mean.clone() * mean / second;
        if worst.is_none() || ratio > delta_star {
            delta_star = ratio;
            worst = Some(tree.node(v).id.clone());
        }
    }
    Ok(NdReport {
        satisfied: delta_star < T::one(),
        delta_star,
        worst_node: worst,
    })
}

/// Id of the first node where `Var(ΔS_n | F_{n-1}) = 0`, if any.
pub fn first_degenerate_node<T: Scalar>(model: &MarketModel<T>) -> Option<NodeId> {
    let tree = &model.tree;
    let ds = model.increments();
    tree.internal_nodes()
        .find(|&v| tree.weighted_cov(v, |c| ds.get(c).clone(), |c| ds.get(c).clone()) <= T::zero())
}

/// One-step replication is solvable at every node: at most two children, and
/// two children carry distinct stock prices.
pub fn check_complete<T: Scalar>(model: &MarketModel<T>) -> bool {
    let tree = &model.tree;
    tree.internal_nodes().all(|v| match tree.children(v) {
        [_] => true,
        [a, b] => model.stock.get(*a) != model.stock.get(*b),
        _ => false,
    })
}

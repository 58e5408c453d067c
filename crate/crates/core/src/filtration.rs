//! Finite filtrations realized as rooted trees.
//!
//! Each node is an atom of `F_n` for `n = time(node)`. Probabilities are stored
//! as one-step transition weights on the child; path probabilities are their
//! products from the root. Nodes are kept in a flat array ordered level by
//! level, so `levels()[n]` lists the atoms of `F_n`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Mode, Scalar};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub id: String,
    pub time: usize,
    pub parent: Option<NodeId>,
    /// Conditional probability of reaching this node from its parent (1 at the root).
    pub prob: T,
    pub children: Vec<NodeId>,
}

/// Input description for [`FiltrationTree::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec<T> {
    pub id: String,
    pub parent: Option<String>,
    pub prob: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec<T> {
    pub horizon: usize,
    pub nodes: Vec<NodeSpec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationTree<T> {
    nodes: Vec<Node<T>>,
    levels: Vec<Vec<NodeId>>,
    path_probs: Vec<T>,
    horizon: usize,
}

/// Anything that can provide a value for some nodes of a tree.
pub trait NodeValues<T> {
    fn value_at(&self, node: NodeId) -> Option<&T>;
}

impl<T> NodeValues<T> for [Option<T>] {
    fn value_at(&self, node: NodeId) -> Option<&T> {
        self.get(node).and_then(Option::as_ref)
    }
}

impl<T> NodeValues<T> for Vec<Option<T>> {
    fn value_at(&self, node: NodeId) -> Option<&T> {
        self.as_slice().value_at(node)
    }
}

impl<T> NodeValues<T> for HashMap<NodeId, T> {
    fn value_at(&self, node: NodeId) -> Option<&T> {
        self.get(&node)
    }
}

impl<T> NodeValues<T> for AdaptedProcess<T> {
    fn value_at(&self, node: NodeId) -> Option<&T> {
        self.values.get(node)
    }
}

fn sums_to_one<T: Scalar>(sum: &T) -> bool {
    match T::MODE {
        Mode::Exact => sum.is_one(),
        Mode::Float => (sum.clone() - T::one()).abs().to_f64() <= 1e-12,
    }
}

impl<T: Scalar> FiltrationTree<T> {
    /// Validates a tree description and stores it level by level.
    pub fn build(spec: TreeSpec<T>) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::with_capacity(spec.nodes.len());
        for (i, n) in spec.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), i).is_some() {
                return Err(Error::MalformedTree(format!("duplicate node id `{}`", n.id)));
            }
        }

        let mut root = None;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); spec.nodes.len()];
        for (i, n) in spec.nodes.iter().enumerate() {
            match &n.parent {
                None => {
                    if root.replace(i).is_some() {
                        return Err(Error::MalformedTree("more than one root".into()));
                    }
                }
                Some(p) => {
                    let &pi = index.get(p.as_str()).ok_or_else(|| Error::DanglingParent {
                        child: n.id.clone(),
                        parent: p.clone(),
                    })?;
                    children[pi].push(i);
                }
            }
        }
        let root = root.ok_or_else(|| Error::MalformedTree("no root node".into()))?;

        // Breadth-first renumbering; unreachable nodes can only come from cycles.
        let mut order = vec![root];
        let mut time = vec![usize::MAX; spec.nodes.len()];
        time[root] = 0;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &c in &children[v] {
                time[c] = time[v] + 1;
                order.push(c);
            }
        }
        if order.len() != spec.nodes.len() {
            return Err(Error::MalformedTree("nodes unreachable from the root (cycle)".into()));
        }

        let mut new_id = vec![0; spec.nodes.len()];
        for (k, &old) in order.iter().enumerate() {
            new_id[old] = k;
        }

        let mut nodes: Vec<Node<T>> = Vec::with_capacity(order.len());
        for &old in &order {
            let s = &spec.nodes[old];
            let prob = if s.parent.is_none() { T::one() } else { s.prob.clone() };
            if s.parent.is_some() && (prob <= T::zero() || !prob.is_finite()) {
                return Err(Error::NonPositiveProbability {
                    node: s.id.clone(),
                    prob: prob.format(),
                });
            }
            nodes.push(Node {
                id: s.id.clone(),
                time: time[old],
                parent: s.parent.as_ref().map(|p| new_id[index[p.as_str()]]),
                prob,
                children: children[old].iter().map(|&c| new_id[c]).collect(),
            });
        }

        for node in &nodes {
            if node.children.is_empty() {
                if node.time != spec.horizon {
                    return Err(Error::RaggedHorizon {
                        node: node.id.clone(),
                        time: node.time,
                        horizon: spec.horizon,
                    });
                }
            } else {
                let sum = node
                    .children
                    .iter()
                    .fold(T::zero(), |acc, &c| acc + nodes[c].prob.clone());
                if !sums_to_one(&sum) {
                    return Err(Error::ProbabilitySumViolation {
                        node: node.id.clone(),
                        sum: sum.format(),
                    });
                }
            }
        }
        if nodes.iter().any(|n| n.time > spec.horizon) {
            return Err(Error::MalformedTree("node beyond the horizon".into()));
        }

        let mut levels = vec![Vec::new(); spec.horizon + 1];
        for (k, n) in nodes.iter().enumerate() {
            levels[n.time].push(k);
        }
        let mut path_probs = vec![T::one(); nodes.len()];
        for k in 1..nodes.len() {
            let p = nodes[k].parent.expect("non-root has a parent");
            path_probs[k] = path_probs[p].clone() * nodes[k].prob.clone();
        }

        Ok(FiltrationTree {
            nodes,
            levels,
            path_probs,
            horizon: spec.horizon,
        })
    }

    /// Inverse of [`build`](Self::build), in storage order.
    pub fn to_spec(&self) -> TreeSpec<T> {
        TreeSpec {
            horizon: self.horizon,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    id: n.id.clone(),
                    parent: n.parent.map(|p| self.nodes[p].id.clone()),
                    prob: n.prob.clone(),
                })
                .collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: NodeId) -> &Node<T> {
        &self.nodes[v]
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn levels(&self) -> &[Vec<NodeId>] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> &[NodeId] {
        &self.levels[n]
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.levels[self.horizon]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v].children
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.nodes[v].children.is_empty()
    }

    /// Non-leaf nodes in storage (time) order.
    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&v| !self.is_leaf(v))
    }

    pub fn path_prob(&self, v: NodeId) -> &T {
        &self.path_probs[v]
    }

    pub fn find(&self, id: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Index from external ids to node positions.
    pub fn id_index(&self) -> HashMap<&str, NodeId> {
        self.nodes.iter().enumerate().map(|(k, n)| (n.id.as_str(), k)).collect()
    }

    /// Ancestor of `v` at time `n` (`v` itself when `n == time(v)`).
    pub fn ancestor_at(&self, mut v: NodeId, n: usize) -> NodeId {
        assert!(n <= self.nodes[v].time);
        while self.nodes[v].time > n {
            v = self.nodes[v].parent.expect("non-root has a parent");
        }
        v
    }

    /// `Σ_c p(c)·f(c)` over the children of `v`.
    pub fn weighted_sum<F>(&self, v: NodeId, mut f: F) -> T
    where
        F: FnMut(NodeId) -> T,
    {
        self.nodes[v]
            .children
            .iter()
            .fold(T::zero(), |acc, &c| acc + self.nodes[c].prob.clone() * f(c))
    }

    /// Conditional covariance at `v` of two functions of the children.
    pub fn weighted_cov<F, G>(&self, v: NodeId, mut f: F, mut g: G) -> T
    where
        F: FnMut(NodeId) -> T,
        G: FnMut(NodeId) -> T,
    {
        let ch = &self.nodes[v].children;
        let xs: Vec<T> = ch.iter().map(|&c| f(c)).collect();
        let ys: Vec<T> = ch.iter().map(|&c| g(c)).collect();
        self.cov_on_children(v, &xs, &ys)
    }

    // Centered form; equals E[XY] - E[X]E[Y] because child probabilities sum to 1.
    fn cov_on_children(&self, v: NodeId, xs: &[T], ys: &[T]) -> T {
        let ch = &self.nodes[v].children;
        let mean = |zs: &[T]| {
            ch.iter()
                .zip(zs)
                .fold(T::zero(), |acc, (&c, z)| acc + self.nodes[c].prob.clone() * z.clone())
        };
        let (mx, my) = (mean(xs), mean(ys));
        ch.iter().zip(xs).zip(ys).fold(T::zero(), |acc, ((&c, x), y)| {
            acc + self.nodes[c].prob.clone() * (x.clone() - mx.clone()) * (y.clone() - my.clone())
        })
    }

    fn child_values<'a, X>(&self, x: &'a X, v: NodeId) -> Result<Vec<&'a T>>
    where
        X: NodeValues<T> + ?Sized,
    {
        self.nodes[v]
            .children
            .iter()
            .map(|&c| {
                x.value_at(c)
                    .ok_or_else(|| Error::MissingValue(self.nodes[c].id.clone()))
            })
            .collect()
    }

    /// `E[X | F_{n-1}]` on the atom `v` at time `n-1`.
    pub fn cond_expect<X>(&self, x: &X, v: NodeId) -> Result<T>
    where
        X: NodeValues<T> + ?Sized,
    {
        let xs = self.child_values(x, v)?;
        Ok(self.nodes[v]
            .children
            .iter()
            .zip(xs)
            .fold(T::zero(), |acc, (&c, x)| acc + self.nodes[c].prob.clone() * x.clone()))
    }

    /// `Cov(X, Y | F_{n-1}) = E[XY] - E[X]E[Y]` on the atom `v`.
    pub fn cond_cov<X, Y>(&self, x: &X, y: &Y, v: NodeId) -> Result<T>
    where
        X: NodeValues<T> + ?Sized,
        Y: NodeValues<T> + ?Sized,
    {
        let xs: Vec<T> = self.child_values(x, v)?.into_iter().cloned().collect();
        let ys: Vec<T> = self.child_values(y, v)?.into_iter().cloned().collect();
        Ok(self.cov_on_children(v, &xs, &ys))
    }

    pub fn cond_var<X>(&self, x: &X, v: NodeId) -> Result<T>
    where
        X: NodeValues<T> + ?Sized,
    {
        self.cond_cov(x, x, v)
    }

    /// Unconditional expectation of a time-`n` random variable.
    pub fn expectation<X>(&self, x: &X, n: usize) -> Result<T>
    where
        X: NodeValues<T> + ?Sized,
    {
        let mut acc = T::zero();
        for &v in &self.levels[n] {
            let val = x
                .value_at(v)
                .ok_or_else(|| Error::MissingValue(self.nodes[v].id.clone()))?;
            acc = acc + self.path_probs[v].clone() * val.clone();
        }
        Ok(acc)
    }

    /// `X_n = E[X_N | F_n]` at every node, from terminal values on the leaves.
    pub fn martingale_extend<X>(&self, terminal: &X) -> Result<AdaptedProcess<T>>
    where
        X: NodeValues<T> + ?Sized,
    {
        let mut values: Vec<Option<T>> = vec![None; self.nodes.len()];
        for &leaf in self.leaves() {
            let val = terminal
                .value_at(leaf)
                .ok_or_else(|| Error::MissingValue(self.nodes[leaf].id.clone()))?;
            values[leaf] = Some(val.clone());
        }
        for n in (0..self.horizon).rev() {
            for &v in &self.levels[n] {
                let e = self.weighted_sum(v, |c| values[c].clone().expect("filled"));
                values[v] = Some(e);
            }
        }
        Ok(AdaptedProcess {
            values: values.into_iter().map(|v| v.expect("filled")).collect(),
        })
    }

    /// Increments `X(v) - X(parent(v))`; zero at the root.
    pub fn increments(&self, x: &AdaptedProcess<T>) -> AdaptedProcess<T> {
        AdaptedProcess::from_fn(self, |v| match self.nodes[v].parent {
            Some(p) => x.values[v].clone() - x.values[p].clone(),
            None => T::zero(),
        })
    }

    /// Running sums of increments along each path, starting from `start` at
    /// the root (inverse of [`increments`](Self::increments)).
    pub fn cumulate(&self, start: T, increments: &AdaptedProcess<T>) -> AdaptedProcess<T> {
        let mut values = Vec::with_capacity(self.nodes.len());
        values.push(start);
        for v in 1..self.nodes.len() {
            let p = self.nodes[v].parent.expect("non-root has a parent");
            let next = values[p].clone() + increments.values[v].clone();
            values.push(next);
        }
        AdaptedProcess { values }
    }
}

/// A real value on every node; the time-`n` value lives on the time-`n` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess<T> {
    values: Vec<T>,
}

impl<T: Scalar> AdaptedProcess<T> {
    pub fn from_fn<F>(tree: &FiltrationTree<T>, f: F) -> Self
    where
        F: FnMut(NodeId) -> T,
    {
        AdaptedProcess {
            values: (0..tree.len()).map(f).collect(),
        }
    }

    pub fn constant(tree: &FiltrationTree<T>, c: T) -> Self {
        Self::from_fn(tree, |_| c.clone())
    }

    pub fn zeros(tree: &FiltrationTree<T>) -> Self {
        Self::constant(tree, T::zero())
    }

    pub fn from_values(tree: &FiltrationTree<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(Error::MissingValue(format!(
                "expected {} values, got {}",
                tree.len(),
                values.len()
            )));
        }
        Ok(AdaptedProcess { values })
    }

    /// Builds from a map keyed by external node id; every node must be present.
    pub fn from_id_map(tree: &FiltrationTree<T>, map: &HashMap<String, T>) -> Result<Self> {
        let values = tree
            .nodes()
            .iter()
            .map(|n| map.get(&n.id).cloned().ok_or_else(|| Error::MissingValue(n.id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(AdaptedProcess { values })
    }

    pub fn get(&self, v: NodeId) -> &T {
        &self.values[v]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn map<F>(&self, mut f: F) -> Self
    where
        F: FnMut(NodeId, &T) -> T,
    {
        AdaptedProcess {
            values: self.values.iter().enumerate().map(|(k, v)| f(k, v)).collect(),
        }
    }

    pub fn zip_with<F>(&self, other: &Self, mut f: F) -> Self
    where
        F: FnMut(&T, &T) -> T,
    {
        AdaptedProcess {
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, k: &T) -> Self {
        self.map(|_, v| v.clone() * k.clone())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| T::max_of(m, v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| T::max_of(m, (a.clone() - b.clone()).abs()))
    }
}

/// Values on the non-leaf nodes; the value at `v` is the process at step
/// `time(v) + 1`, shared by all children of `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictableProcess<T> {
    values: Vec<Option<T>>,
}

impl<T: Scalar> PredictableProcess<T> {
    pub fn from_fn<F>(tree: &FiltrationTree<T>, mut f: F) -> Self
    where
        F: FnMut(NodeId) -> T,
    {
        PredictableProcess {
            values: (0..tree.len()).map(|v| (!tree.is_leaf(v)).then(|| f(v))).collect(),
        }
    }

    pub fn constant(tree: &FiltrationTree<T>, c: T) -> Self {
        Self::from_fn(tree, |_| c.clone())
    }

    pub fn zeros(tree: &FiltrationTree<T>) -> Self {
        Self::constant(tree, T::zero())
    }

    /// Builds from a map keyed by external node id; every non-leaf node must be
    /// present and leaf entries are rejected.
    pub fn from_id_map(tree: &FiltrationTree<T>, map: &HashMap<String, T>) -> Result<Self> {
        let index = tree.id_index();
        for key in map.keys() {
            match index.get(key.as_str()) {
                None => return Err(Error::Parse(format!("unknown node id `{key}`"))),
                Some(&v) if tree.is_leaf(v) => {
                    return Err(Error::Parse(format!("predictable value given on leaf `{key}`")))
                }
                _ => {}
            }
        }
        let values = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(v, n)| {
                if tree.is_leaf(v) {
                    Ok(None)
                } else {
                    map.get(&n.id)
                        .cloned()
                        .map(Some)
                        .ok_or_else(|| Error::MissingValue(n.id.clone()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictableProcess { values })
    }

    /// Value at the non-leaf node `v`.
    pub fn get(&self, v: NodeId) -> &T {
        self.values[v]
            .as_ref()
            .expect("predictable processes live on non-leaf nodes")
    }

    /// Value used on the step into node `c` (i.e. at its parent).
    pub fn for_step_into(&self, tree: &FiltrationTree<T>, c: NodeId) -> &T {
        self.get(tree.parent(c).expect("step into a non-root node"))
    }

    pub fn at(&self, v: NodeId) -> Option<&T> {
        self.values.get(v).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &T)> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
    }

    pub fn map<F>(&self, mut f: F) -> Self
    where
        F: FnMut(NodeId, &T) -> T,
    {
        PredictableProcess {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v.as_ref().map(|v| f(k, v)))
                .collect(),
        }
    }

    pub fn zip_with<F>(&self, other: &Self, mut f: F) -> Self
    where
        F: FnMut(&T, &T) -> T,
    {
        PredictableProcess {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some(f(a, b)),
                    _ => None,
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.iter().fold(T::zero(), |m, (_, v)| T::max_of(m, v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
            .fold(T::zero(), |m, (a, b)| T::max_of(m, (a.clone() - b.clone()).abs()))
    }
}

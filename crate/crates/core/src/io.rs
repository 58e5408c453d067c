//! JSON file formats for models, claims and perturbations.
//!
//! Numbers are accepted either as JSON number literals or as strings holding
//! a decimal literal or a ratio `p/q`. Exact values are written in canonical
//! `p/q` form, so a model written in rational mode reads back bit-exactly.
//! Stock prices and claim tables in files are nominal (undiscounted).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::filtration::{AdaptedProcess, FiltrationTree, NodeSpec, PredictableProcess, TreeSpec};
use crate::models::{Claim, ClaimKind, Generator, MarketModel};
use crate::perturbation::{PerturbationParams, PerturbationSpec, SemimartingaleParams};
use crate::scalar::Scalar;

/// A number in its textual form, as found in or destined for a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Num(pub String);

impl Num {
    pub fn of<T: Scalar>(x: &T) -> Self {
        Num(x.format())
    }

    pub fn value<T: Scalar>(&self) -> Result<T> {
        T::parse(&self.0)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match serde_json::Number::from_str(&self.0) {
            Ok(n) if !self.0.contains('/') => n.serialize(s),
            _ => s.serialize_str(&self.0),
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => Ok(Num(n.to_string())),
            serde_json::Value::String(s) => Ok(Num(s)),
            other => Err(serde::de::Error::custom(format!("expected a number, found {other}"))),
        }
    }
}

pub type NumMap = BTreeMap<String, Num>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub parent: Option<String>,
    pub prob: Num,
    /// Nominal stock price.
    pub stock: Num,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator<Num>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeRecord>,
    /// Nominal payoff per leaf id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<NumMap>,
}

pub fn num_map<T: Scalar>(map: &NumMap) -> Result<HashMap<String, T>> {
    map.iter().map(|(k, v)| Ok((k.clone(), v.value::<T>()?))).collect()
}

fn generator_values<T: Scalar>(g: &Generator<Num>) -> Result<Generator<T>> {
    Ok(match g {
        Generator::Binomial {
            s0,
            u,
            d,
            p,
            steps,
            rate,
        } => Generator::Binomial {
            s0: s0.value()?,
            u: u.value()?,
            d: d.value()?,
            p: p.value()?,
            steps: *steps,
            rate: rate.value()?,
        },
        Generator::Trinomial {
            s0,
            u,
            d,
            p_up,
            p_mid,
            p_down,
            steps,
            rate,
        } => Generator::Trinomial {
            s0: s0.value()?,
            u: u.value()?,
            d: d.value()?,
            p_up: p_up.value()?,
            p_mid: p_mid.value()?,
            p_down: p_down.value()?,
            steps: *steps,
            rate: rate.value()?,
        },
    })
}

fn generator_text<T: Scalar>(g: &Generator<T>) -> Generator<Num> {
    match g {
        Generator::Binomial {
            s0,
            u,
            d,
            p,
            steps,
            rate,
        } => Generator::Binomial {
            s0: Num::of(s0),
            u: Num::of(u),
            d: Num::of(d),
            p: Num::of(p),
            steps: *steps,
            rate: Num::of(rate),
        },
        Generator::Trinomial {
            s0,
            u,
            d,
            p_up,
            p_mid,
            p_down,
            steps,
            rate,
        } => Generator::Trinomial {
            s0: Num::of(s0),
            u: Num::of(u),
            d: Num::of(d),
            p_up: Num::of(p_up),
            p_mid: Num::of(p_mid),
            p_down: Num::of(p_down),
            steps: *steps,
            rate: Num::of(rate),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel<T> {
    pub model: MarketModel<T>,
    pub claim: Option<ClaimKind<T>>,
}

impl ModelFile {
    /// Builds the model from explicit nodes, or from the generator block when
    /// no nodes are listed. When both are present they must agree.
    pub fn to_model<T: Scalar>(&self) -> Result<LoadedModel<T>> {
        let generated = self
            .generator
            .as_ref()
            .map(|g| generator_values::<T>(g)?.generate())
            .transpose()?;
        let model = if self.nodes.is_empty() {
            let mut m = generated
                .ok_or_else(|| Error::Parse("model file needs either `nodes` or a `generator` block".into()))?;
            if let Some(label) = &self.label {
                m.label = label.clone();
            }
            m
        } else {
            let rate: T = match &self.rate {
                Some(r) => r.value()?,
                None => match &generated {
                    Some(g) => g.rate.clone(),
                    None => T::zero(),
                },
            };
            let horizon = self
                .horizon
                .ok_or_else(|| Error::Parse("model file is missing `horizon`".into()))?;
            let nodes = self
                .nodes
                .iter()
                .map(|n| {
                    Ok(NodeSpec {
                        id: n.id.clone(),
                        parent: n.parent.clone(),
                        prob: n.prob.value::<T>()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let tree = FiltrationTree::build(TreeSpec { horizon, nodes })?;
            let raw: HashMap<String, T> = self
                .nodes
                .iter()
                .map(|n| Ok((n.id.clone(), n.stock.value::<T>()?)))
                .collect::<Result<_>>()?;
            let one_plus_r = T::one() + rate.clone();
            let stock = AdaptedProcess::from_fn(&tree, |v| {
                let node = tree.node(v);
                raw[&node.id].clone() / one_plus_r.powi(node.time as u32)
            });
            let label = self.label.clone().unwrap_or_else(|| "custom".into());
            let mut m = MarketModel::new(tree, stock, rate, &label)?;
            if let Some(g) = generated {
                let tol = match T::MODE {
                    crate::scalar::Mode::Exact => T::zero(),
                    crate::scalar::Mode::Float => T::from_f64(1e-12).expect("finite") * (T::one() + g.stock.max_abs()),
                };
                let same_tree = g.tree.len() == m.tree.len()
                    && g.tree.nodes().iter().zip(m.tree.nodes()).all(|(a, b)| {
                        a.id == b.id && a.parent == b.parent && (a.prob.clone() - b.prob.clone()).abs() <= tol
                    });
                if !same_tree || g.stock.max_abs_diff(&m.stock) > tol || (g.rate.clone() - m.rate.clone()).abs() > tol {
                    return Err(Error::Parse("`nodes` disagree with the `generator` block".into()));
                }
                m.generator = g.generator;
            }
            m
        };
        let claim = self
            .claim
            .as_ref()
            .map(|c| num_map::<T>(c).map(ClaimKind::Custom))
            .transpose()?;
        Ok(LoadedModel { model, claim })
    }

    /// Serializes a model with all nodes listed (and its generator block, if
    /// any). The claim, if given, is written as a nominal leaf table.
    pub fn from_model<T: Scalar>(model: &MarketModel<T>, claim: Option<&Claim<T>>) -> Self {
        let tree = &model.tree;
        let raw = model.raw_stock();
        let nodes = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(v, n)| NodeRecord {
                id: n.id.clone(),
                parent: n.parent.map(|p| tree.node(p).id.clone()),
                prob: Num::of(&n.prob),
                stock: Num::of(raw.get(v)),
            })
            .collect();
        let claim = claim.map(|c| {
            c.nominal(model)
                .into_iter()
                .map(|(l, x)| (tree.node(l).id.clone(), Num::of(&x)))
                .collect()
        });
        ModelFile {
            label: Some(model.label.clone()),
            horizon: Some(tree.horizon()),
            rate: Some(Num::of(&model.rate)),
            generator: model.generator.as_ref().map(generator_text),
            nodes,
            claim,
        }
    }
}

pub fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<LoadedModel<T>> {
    read_json::<ModelFile>(path)?.to_model()
}

/// A claim file is either a bare `{leaf-id: value}` table or any object with
/// a `claim` block (such as a model file).
pub fn load_claim_table<T: Scalar>(path: &Path) -> Result<ClaimKind<T>> {
    let value: serde_json::Value = read_json(path)?;
    let table = match value.get("claim") {
        Some(inner) => inner.clone(),
        None => value,
    };
    let map: NumMap = serde_json::from_value(table)?;
    Ok(ClaimKind::Custom(num_map(&map)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsBlock {
    pub lambda_prime: NumMap,
    pub sigma_prime: NumMap,
    pub sigma_dprime: NumMap,
    #[serde(rename = "dWperp")]
    pub dw_perp: NumMap,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationFile {
    #[serde(rename = "dSprime", default, skip_serializing_if = "Option::is_none")]
    pub ds_prime: Option<NumMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsBlock>,
}

/// Values on every non-root node; the root may be omitted (it is zero).
fn increments_from_map<T: Scalar>(tree: &FiltrationTree<T>, map: &NumMap) -> Result<AdaptedProcess<T>> {
    let index = tree.id_index();
    if let Some(k) = map.keys().find(|k| !index.contains_key(k.as_str())) {
        return Err(Error::Parse(format!("unknown node id `{k}`")));
    }
    let mut values = num_map::<T>(map)?;
    let root_id = tree.node(tree.root()).id.clone();
    values.insert(root_id, T::zero());
    AdaptedProcess::from_id_map(tree, &values)
}

fn predictable_from_map<T: Scalar>(tree: &FiltrationTree<T>, map: &NumMap) -> Result<PredictableProcess<T>> {
    PredictableProcess::from_id_map(tree, &num_map(map)?)
}

impl PerturbationFile {
    /// Reads the direction `ΔS′`. A `params` block is expanded against the
    /// base noise of the model; if both blocks are present they must agree.
    pub fn to_spec<T: Scalar>(
        &self,
        tree: &FiltrationTree<T>,
        base: &SemimartingaleParams<T>,
    ) -> Result<PerturbationSpec<T>> {
        let from_params = self
            .params
            .as_ref()
            .map(|p| -> Result<PerturbationSpec<T>> {
                let params = PerturbationParams {
                    lambda_prime: predictable_from_map(tree, &p.lambda_prime)?,
                    sigma_prime: predictable_from_map(tree, &p.sigma_prime)?,
                    sigma_dprime: predictable_from_map(tree, &p.sigma_dprime)?,
                    dw_perp: increments_from_map(tree, &p.dw_perp)?,
                };
                Ok(PerturbationSpec::from_params(tree, base, params))
            })
            .transpose()?;
        let from_raw = self
            .ds_prime
            .as_ref()
            .map(|m| increments_from_map(tree, m).map(|x| PerturbationSpec::from_increments(tree, x)))
            .transpose()?;
        match (from_raw, from_params) {
            (Some(raw), Some(par)) => {
                if raw.ds_prime != par.ds_prime {
                    return Err(Error::Parse("`dSprime` disagrees with `params`".into()));
                }
                Ok(par)
            }
            (Some(s), None) | (None, Some(s)) => Ok(s),
            (None, None) => Err(Error::Parse(
                "perturbation file needs a `dSprime` or a `params` block".into(),
            )),
        }
    }

    pub fn from_spec<T: Scalar>(tree: &FiltrationTree<T>, spec: &PerturbationSpec<T>) -> Self {
        let adapted = |x: &AdaptedProcess<T>| -> NumMap {
            (0..tree.len())
                .filter(|&v| v != tree.root())
                .map(|v| (tree.node(v).id.clone(), Num::of(x.get(v))))
                .collect()
        };
        let predictable = |x: &PredictableProcess<T>| -> NumMap {
            x.iter().map(|(v, t)| (tree.node(v).id.clone(), Num::of(t))).collect()
        };
        PerturbationFile {
            ds_prime: Some(adapted(&spec.ds_prime)),
            params: spec.params.as_ref().map(|p| ParamsBlock {
                lambda_prime: predictable(&p.lambda_prime),
                sigma_prime: predictable(&p.sigma_prime),
                sigma_dprime: predictable(&p.sigma_dprime),
                dw_perp: adapted(&p.dw_perp),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gen_binomial, gen_trinomial, payoff_claim};
    use crate::perturbation::{decompose_perturbation, extract_semimartingale_params};
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn numbers_in_both_forms() {
        let f: NumMap = serde_json::from_str(r#"{"a": 0.1, "b": "1/3", "c": 4, "d": "2.5e-1"}"#).unwrap();
        let m = num_map::<Rational>(&f).unwrap();
        assert_eq!(m["a"], q(1, 10));
        assert_eq!(m["b"], q(1, 3));
        assert_eq!(m["c"], q(4, 1));
        assert_eq!(m["d"], q(1, 4));
        // long literals keep every digit
        let long: Num = serde_json::from_str("0.10000000000000000000000000001").unwrap();
        assert_eq!(long.0, "0.10000000000000000000000000001");
        assert_eq!(serde_json::to_string(&Num("1/3".into())).unwrap(), r#""1/3""#);
        assert_eq!(serde_json::to_string(&Num("7".into())).unwrap(), "7");
    }

    #[test]
    fn model_round_trip_exact() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 3), 3, q(1, 4)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(1, 1) }).unwrap();
        let file = ModelFile::from_model(&m, Some(&c));
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        let loaded = back.to_model::<Rational>().unwrap();
        assert_eq!(loaded.model, m);
        let c2 = payoff_claim(&loaded.model, loaded.claim.as_ref().unwrap()).unwrap();
        assert_eq!(c2, c);
        assert_eq!(
            serde_json::to_string_pretty(&ModelFile::from_model(&loaded.model, Some(&c2))).unwrap(),
            text
        );
    }

    #[test]
    fn model_round_trip_float() {
        let m = gen_trinomial(4.0, 1.7, 0.55, [0.3, 0.3, 0.4], 2, 0.03).unwrap();
        let text = serde_json::to_string(&ModelFile::from_model(&m, None)).unwrap();
        let back = serde_json::from_str::<ModelFile>(&text)
            .unwrap()
            .to_model::<f64>()
            .unwrap();
        assert_eq!(back.model.tree.to_spec(), m.tree.to_spec());
        assert!(back.model.stock.max_abs_diff(&m.stock) <= 1e-14);
    }

    #[test]
    fn generator_only_and_custom_files() {
        let text =
            r#"{"generator": {"kind": "binomial", "s0": 4, "u": 2, "d": "1/2", "p": 0.5, "steps": 3, "rate": 0.25}}"#;
        let m = serde_json::from_str::<ModelFile>(text)
            .unwrap()
            .to_model::<Rational>()
            .unwrap()
            .model;
        assert_eq!(m.tree.len(), 15);
        assert_eq!(m.raw_stock().get(m.tree.find("HHH").unwrap()), &q(32, 1));

        let text = r#"{"horizon": 1, "nodes": [
            {"id": "r", "parent": null, "prob": 1, "stock": 10},
            {"id": "a", "parent": "r", "prob": "1/4", "stock": 13},
            {"id": "b", "parent": "r", "prob": "3/4", "stock": 9}],
            "claim": {"a": 3, "b": 0}}"#;
        let loaded = serde_json::from_str::<ModelFile>(text)
            .unwrap()
            .to_model::<Rational>()
            .unwrap();
        assert_eq!(loaded.model.rate, q(0, 1));
        assert!(matches!(loaded.claim, Some(ClaimKind::Custom(ref t)) if t["a"] == q(3, 1)));
    }

    #[test]
    fn inconsistent_or_missing_blocks() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 1, q(0, 1)).unwrap();
        let mut file = ModelFile::from_model(&m, None);
        file.nodes[1].stock = Num("9".into());
        assert!(matches!(file.to_model::<Rational>(), Err(Error::Parse(_))));
        assert!(matches!(
            ModelFile::default().to_model::<Rational>(),
            Err(Error::Parse(_))
        ));
        let bad = r#"{"generator": {"kind": "binomial", "s0": 4, "u": 0.5, "d": 2, "p": 0.5, "steps": 1, "rate": 0}}"#;
        assert!(matches!(
            serde_json::from_str::<ModelFile>(bad).unwrap().to_model::<Rational>(),
            Err(Error::InvalidFactors(_))
        ));
    }

    #[test]
    fn perturbation_file_forms() {
        let t = q(1, 3);
        let m = gen_trinomial(q(4, 1), q(2, 1), q(1, 2), [t.clone(), t.clone(), t], 1, q(0, 1)).unwrap();
        let base = extract_semimartingale_params(&m);
        let raw: PerturbationFile = serde_json::from_str(r#"{"dSprime": {"U": 0, "M": 1, "D": 0}}"#).unwrap();
        let spec = raw.to_spec(&m.tree, &base).unwrap();
        let full = decompose_perturbation(&m.tree, &spec.ds_prime, &base);
        let file = PerturbationFile::from_spec(&m.tree, &full);
        let text = serde_json::to_string(&file).unwrap();
        let back: PerturbationFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_spec(&m.tree, &base).unwrap().ds_prime, spec.ds_prime);
        let params_only = PerturbationFile {
            ds_prime: None,
            params: back.params.clone(),
        };
        assert_eq!(params_only.to_spec(&m.tree, &base).unwrap().ds_prime, spec.ds_prime);

        let unknown: PerturbationFile = serde_json::from_str(r#"{"dSprime": {"X": 1}}"#).unwrap();
        assert!(unknown.to_spec(&m.tree, &base).is_err());
        let missing: PerturbationFile = serde_json::from_str(r#"{"dSprime": {"U": 1}}"#).unwrap();
        assert!(matches!(missing.to_spec(&m.tree, &base), Err(Error::MissingValue(_))));
        assert!(PerturbationFile::default().to_spec(&m.tree, &base).is_err());
    }
}

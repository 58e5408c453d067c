//! Serializable reports: decomposition, verification and first-order
//! corrections as JSON, sweeps and convergence tables as CSV, and a plain-text
//! tree rendering.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomposition::FsDecomposition;
use crate::error::{Error, Result};
use crate::filtration::{AdaptedProcess, FiltrationTree, NodeId, PredictableProcess};
use crate::io::{ModelFile, Num, NumMap};
use crate::models::MarketModel;
use crate::perturbation::{AsymptoticExpansion, ConvergenceReport, RowStatus, SweepReport};
use crate::scalar::Scalar;

/// Hex SHA-256 of the canonical JSON form of the model.
pub fn model_hash<T: Scalar>(model: &MarketModel<T>) -> String {
    let canonical = serde_json::to_string(&ModelFile::from_model(model, None)).expect("serializable");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub model_sha256: String,
    /// Run settings such as mode, claim and tolerance.
    pub config: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new<T: Scalar>(model: &MarketModel<T>, config: &[(&str, String)]) -> Self {
        let mut map: BTreeMap<String, String> = config.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        map.insert("mode".into(), T::MODE.as_str().into());
        Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model_sha256: model_hash(model),
            config: map,
        }
    }
}

fn predictable_map<T: Scalar>(tree: &FiltrationTree<T>, x: &PredictableProcess<T>) -> NumMap {
    x.iter().map(|(v, t)| (tree.node(v).id.clone(), Num::of(t))).collect()
}

fn adapted_map<T: Scalar>(tree: &FiltrationTree<T>, x: &AdaptedProcess<T>) -> NumMap {
    (0..tree.len())
        .map(|v| (tree.node(v).id.clone(), Num::of(x.get(v))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub provenance: Provenance,
    #[serde(rename = "V0")]
    pub v0: Num,
    pub theta: NumMap,
    #[serde(rename = "L")]
    pub l: NumMap,
    pub objective: Num,
    #[serde(default)]
    pub residuals: BTreeMap<String, Num>,
}

impl DecompositionReport {
    pub fn new<T: Scalar>(
        model: &MarketModel<T>,
        fs: &FsDecomposition<T>,
        provenance: Provenance,
        residuals: &[(&str, T)],
    ) -> Self {
        let tree = &model.tree;
        DecompositionReport {
            provenance,
            v0: Num::of(&fs.v0),
            theta: predictable_map(tree, &fs.theta),
            l: adapted_map(tree, &fs.l),
            objective: Num::of(&fs.objective),
            residuals: residuals.iter().map(|(k, v)| (k.to_string(), Num::of(v))).collect(),
        }
    }

    /// Reads `(V0, θ, L)` back onto the model's tree.
    pub fn components<T: Scalar>(
        &self,
        tree: &FiltrationTree<T>,
    ) -> Result<(T, PredictableProcess<T>, AdaptedProcess<T>)> {
        let v0 = self.v0.value()?;
        let theta = PredictableProcess::from_id_map(tree, &crate::io::num_map(&self.theta)?)?;
        let l_map = crate::io::num_map(&self.l)?;
        if let Some(k) = l_map.keys().find(|k| tree.find(k).is_none()) {
            return Err(Error::Parse(format!("unknown node id `{k}`")));
        }
        let l = AdaptedProcess::from_id_map(tree, &l_map)?;
        Ok((v0, theta, l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: Num,
    pub tolerance: Num,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub provenance: Provenance,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn new<T: Scalar>(provenance: Provenance, checks: &[(&str, T)], tolerance: &T) -> Self {
        let checks: Vec<Check> = checks
            .iter()
            .map(|(name, r)| Check {
                name: name.to_string(),
                residual: Num::of(r),
                tolerance: Num::of(tolerance),
                passed: r.is_finite() && r <= tolerance,
            })
            .collect();
        let passed = checks.iter().all(|c| c.passed);
        VerificationReport {
            provenance,
            checks,
            passed,
        }
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub provenance: Provenance,
    pub theta: NumMap,
    pub theta_prime: NumMap,
    #[serde(rename = "V0_prime")]
    pub v0_prime: Num,
    #[serde(rename = "L_prime")]
    pub l_prime: NumMap,
    pub gains_prime: NumMap,
}

impl AsymptoticsReport {
    pub fn new<T: Scalar>(model: &MarketModel<T>, exp: &AsymptoticExpansion<T>, provenance: Provenance) -> Self {
        let tree = &model.tree;
        AsymptoticsReport {
            provenance,
            theta: predictable_map(tree, &exp.theta),
            theta_prime: predictable_map(tree, &exp.theta_prime),
            v0_prime: Num::of(&exp.v0_prime),
            l_prime: adapted_map(tree, &exp.l_prime),
            gains_prime: adapted_map(tree, &exp.gains_prime),
        }
    }
}

/// One CSV line: `eps, quantity, value, abs_error, observed_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub eps: String,
    pub quantity: String,
    pub value: String,
    pub abs_error: String,
    pub observed_order: String,
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn fmt_order(p: Option<f64>) -> String {
    p.map(|p| format!("{p:.6}")).unwrap_or_default()
}

/// Observed rate `log(dev(ε_far)/dev(ε)) / log(ε_far/ε)` against the next
/// larger `|ε|` of the same sign.
fn sweep_rate<T: Scalar>(
    report: &SweepReport<T>,
    k: usize,
    pick: impl Fn(&crate::perturbation::SweepRow<T>) -> Option<T>,
) -> Option<f64> {
    let row = &report.rows[k];
    let dev = pick(row)?.to_f64();
    let e = row.eps.to_f64();
    let far = report
        .rows
        .iter()
        .filter(|r| r.status == RowStatus::Ok && (r.eps.to_f64() > 0.0) == (e > 0.0) && r.eps.to_f64().abs() > e.abs())
        .min_by(|a, b| a.eps.to_f64().abs().total_cmp(&b.eps.to_f64().abs()))?;
    let far_dev = pick(far)?.to_f64();
    (dev > 0.0 && far_dev > 0.0 && e != 0.0).then(|| (far_dev / dev).ln() / (far.eps.to_f64() / e).ln())
}

/// Sweep table: per `ε`, the value of `V0^ε` and the deviations of `V0`, `θ`
/// and `L` from the base decomposition; degenerate and clipped rows carry a
/// `status` line.
pub fn sweep_rows<T: Scalar>(report: &SweepReport<T>) -> Vec<CsvRow> {
    let mut out = Vec::new();
    for (k, r) in report.rows.iter().enumerate() {
        let eps = r.eps.format();
        let status = match &r.status {
            RowStatus::Ok => None,
            RowStatus::Degenerate(node) => Some(format!("degenerate:{node}")),
            RowStatus::Clipped => Some("clipped".to_string()),
        };
        if let Some(s) = status {
            out.push(CsvRow {
                eps,
                quantity: "status".into(),
                value: s,
                abs_error: String::new(),
                observed_order: String::new(),
            });
            continue;
        }
        let line = |quantity: &str, value: &Option<T>, err: &Option<T>, order: Option<f64>| CsvRow {
            eps: eps.clone(),
            quantity: quantity.into(),
            value: value.as_ref().map(T::format).unwrap_or_default(),
            abs_error: err.as_ref().map(T::format).unwrap_or_default(),
            observed_order: fmt_order(order),
        };
        out.push(line(
            "V0",
            &r.v0,
            &r.dev_v0,
            sweep_rate(report, k, |r| r.dev_v0.clone()),
        ));
        out.push(line(
            "theta",
            &r.dev_theta,
            &r.dev_theta,
            sweep_rate(report, k, |r| r.dev_theta.clone()),
        ));
        out.push(line(
            "L",
            &r.dev_l,
            &r.dev_l,
            sweep_rate(report, k, |r| r.dev_l.clone()),
        ));
        let obj_dev = r
            .objective
            .as_ref()
            .map(|o| (o.clone() - report.base.objective.clone()).abs());
        out.push(line("objective", &r.objective, &obj_dev, None));
    }
    out
}

pub fn convergence_rows<T: Scalar>(report: &ConvergenceReport<T>) -> Vec<CsvRow> {
    report
        .rows
        .iter()
        .map(|r| CsvRow {
            eps: r.eps.format(),
            quantity: r.quantity.clone(),
            value: r.value.format(),
            abs_error: r.abs_error.format(),
            observed_order: fmt_order(r.observed_order),
        })
        .collect()
}

/// Column name and per-node cell; `None` leaves the cell out.
pub type Column<'a> = (&'a str, &'a dyn Fn(NodeId) -> Option<String>);

/// Indented text rendering, one node per line, with the given labelled
/// columns (a column may be blank at some nodes).
pub fn render_tree<T: Scalar>(tree: &FiltrationTree<T>, columns: &[Column<'_>]) -> String {
    fn walk<T: Scalar>(
        tree: &FiltrationTree<T>,
        v: NodeId,
        prefix: &str,
        last: bool,
        columns: &[Column<'_>],
        out: &mut String,
    ) {
        let is_root = tree.parent(v).is_none();
        let branch = if is_root {
            ""
        } else if last {
            "└─ "
        } else {
            "├─ "
        };
        out.push_str(prefix);
        out.push_str(branch);
        out.push_str(&tree.node(v).id);
        for (name, f) in columns {
            if let Some(s) = f(v) {
                out.push_str(&format!("  {name}={s}"));
            }
        }
        out.push('\n');
        let child_prefix = if is_root {
            String::new()
        } else {
            format!("{prefix}{}", if last { "   " } else { "│  " })
        };
        let kids = tree.children(v);
        for (i, &c) in kids.iter().enumerate() {
            walk(tree, c, &child_prefix, i + 1 == kids.len(), columns, out);
        }
    }
    let mut out = String::new();
    walk(tree, tree.root(), "", true, columns, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{fs_decompose, Degeneracy};
    use crate::models::{gen_binomial, payoff_claim, ClaimKind};
    use crate::perturbation::{stability_sweep, PerturbationSpec};
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 2, q(0, 1)).unwrap();
        let b = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 3), 2, q(0, 1)).unwrap();
        assert_eq!(model_hash(&a), model_hash(&a.clone()));
        assert_ne!(model_hash(&a), model_hash(&b));
        assert_eq!(model_hash(&a).len(), 64);
    }

    #[test]
    fn decomposition_report_round_trip() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 3, q(1, 4)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(1, 1) }).unwrap();
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        let prov = Provenance::new(&m, &[("claim", "call K=1".into())]);
        let rep = DecompositionReport::new(&m, &fs, prov, &[("reconstruction", q(0, 1))]);
        let text = serde_json::to_string_pretty(&rep).unwrap();
        assert!(text.contains(r#""V0": "88/25""#));
        let back: DecompositionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
        let (v0, theta, l) = back.components(&m.tree).unwrap();
        assert_eq!((v0, theta, l), (fs.v0, fs.theta, fs.l));
    }

    #[test]
    fn verification_flags_failures() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 1, q(0, 1)).unwrap();
        let rep = VerificationReport::new(Provenance::new(&m, &[]), &[("a", q(0, 1)), ("b", q(1, 1))], &q(1, 100));
        assert!(!rep.passed);
        assert_eq!(rep.failures(), vec!["b"]);
    }

    #[test]
    fn sweep_csv_round_trip() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 2, q(0, 1)).unwrap();
        let c = payoff_claim(&m, &ClaimKind::Call { strike: q(4, 1) }).unwrap();
        let spec = PerturbationSpec::constant_drift(&m.tree, q(1, 1));
        let grid = [q(1, 10), q(1, 100), q(-1, 10)];
        let rep = stability_sweep(&m, &c, &spec, &grid, true).unwrap();
        let rows = sweep_rows(&rep);
        assert_eq!(rows.len(), 12);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("eps,quantity,value,abs_error,observed_order\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
        let theta_order = rows
            .iter()
            .find(|r| r.eps == "1/100" && r.quantity == "theta")
            .unwrap()
            .observed_order
            .parse::<f64>()
            .unwrap();
        assert!((theta_order - 1.0).abs() < 0.2);
    }

    #[test]
    fn tree_rendering() {
        let m = gen_binomial(q(4, 1), q(2, 1), q(1, 2), q(1, 2), 2, q(0, 1)).unwrap();
        let raw = m.raw_stock();
        let stock = |v: NodeId| Some(raw.get(v).format());
        let text = render_tree(&m.tree, &[("S", &stock)]);
        assert_eq!(
            text,
            "root  S=4\n├─ H  S=8\n│  ├─ HH  S=16\n│  └─ HT  S=4\n└─ T  S=2\n   ├─ TH  S=4\n   └─ TT  S=1\n"
        );
    }
}

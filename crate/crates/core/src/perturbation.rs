//! Perturbations `ΔS^ε = ΔS⁰ + ε ΔS′` of the stock dynamics and their effect
//! on the Föllmer-Schweizer decomposition.
//!
//! Two complementary views are provided:
//! * stability sweeps that recompute the decomposition on a grid of `ε`;
//! * closed-form first-order corrections `θ′`, `V₀′`, `L′`, validated against
//!   centered (or one-sided) finite differences of the recomputed
//!   decompositions.
//!
//! The time step is fixed at `Δt = 1`, so drifts and variances are per step.

use crate::decomposition::{fs_decompose, increment_variance, is_degenerate, Degeneracy, FsDecomposition};
use crate::error::{Error, Result};
use crate::filtration::{AdaptedProcess, FiltrationTree, NodeId, PredictableProcess};
use crate::models::{first_degenerate_node, Claim, MarketModel};
use crate::scalar::{Mode, Scalar};

/// `ΔS_n = λ_n + σ_n ΔW_n` with normalized noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SemimartingaleParams<T> {
    pub lambda: PredictableProcess<T>,
    pub sigma: PredictableProcess<T>,
    /// `ΔW_n` on every non-root node (zero at the root).
    pub dw: AdaptedProcess<T>,
}

/// `ΔS′ = λ′ + σ′ ΔW + σ″ ΔW⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationParams<T> {
    pub lambda_prime: PredictableProcess<T>,
    pub sigma_prime: PredictableProcess<T>,
    pub sigma_dprime: PredictableProcess<T>,
    pub dw_perp: AdaptedProcess<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec<T> {
    /// `ΔS′_n` on every non-root node (zero at the root).
    pub ds_prime: AdaptedProcess<T>,
    pub params: Option<PerturbationParams<T>>,
}

impl<T: Scalar> PerturbationSpec<T> {
    pub fn from_increments(tree: &FiltrationTree<T>, ds_prime: AdaptedProcess<T>) -> Self {
        let root = tree.root();
        PerturbationSpec {
            ds_prime: ds_prime.map(|v, x| if v == root { T::zero() } else { x.clone() }),
            params: None,
        }
    }

    pub fn zero(tree: &FiltrationTree<T>) -> Self {
        Self::from_increments(tree, AdaptedProcess::zeros(tree))
    }

    /// `ΔS′ = ΔS⁰`: proportional rescaling of every increment.
    pub fn proportional(model: &MarketModel<T>) -> Self {
        Self::from_increments(&model.tree, model.increments())
    }

    /// Pure drift perturbation, `ΔS′ ≡ k`.
    pub fn constant_drift(tree: &FiltrationTree<T>, k: T) -> Self {
        Self::from_increments(tree, AdaptedProcess::constant(tree, k))
    }

    /// Builds `ΔS′` from its parametrization against the base noise `ΔW`.
    pub fn from_params(
        tree: &FiltrationTree<T>,
        base: &SemimartingaleParams<T>,
        params: PerturbationParams<T>,
    ) -> Self {
        let ds_prime = AdaptedProcess::from_fn(tree, |c| match tree.parent(c) {
            Some(p) => {
                params.lambda_prime.get(p).clone()
                    + params.sigma_prime.get(p).clone() * base.dw.get(c).clone()
                    + params.sigma_dprime.get(p).clone() * params.dw_perp.get(c).clone()
            }
            None => T::zero(),
        });
        PerturbationSpec {
            ds_prime,
            params: Some(params),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        PerturbationSpec {
            ds_prime: self.ds_prime.zip_with(&other.ds_prime, |a, b| a.clone() + b.clone()),
            params: None,
        }
    }

    pub fn scale(&self, k: &T) -> Self {
        PerturbationSpec {
            ds_prime: self.ds_prime.scale(k),
            params: None,
        }
    }
}

fn normalized<T: Scalar>(
    tree: &FiltrationTree<T>,
    scale: &PredictableProcess<T>,
    centered: impl Fn(NodeId) -> T,
) -> AdaptedProcess<T> {
    AdaptedProcess::from_fn(tree, |c| match tree.parent(c) {
        Some(p) if *scale.get(p) > T::zero() => centered(c) / scale.get(p).clone(),
        _ => T::zero(),
    })
}

/// `λ_n = E_{n-1}[ΔS_n]`, `σ_n = sqrt(Var_{n-1}(ΔS_n))`,
/// `ΔW_n = (ΔS_n - λ_n) / σ_n · 1{σ_n > 0}`.
pub fn extract_semimartingale_params<T: Scalar>(model: &MarketModel<T>) -> SemimartingaleParams<T> {
    let tree = &model.tree;
    let ds = model.increments();
    let lambda = PredictableProcess::from_fn(tree, |v| tree.weighted_sum(v, |c| ds.get(c).clone()));
    let sigma = PredictableProcess::from_fn(tree, |v| {
        let (var, scale) = increment_variance(tree, &ds, v);
        if is_degenerate(&var, &scale) {
            T::zero()
        } else {
            var.sqrt()
        }
    });
    let dw = normalized(tree, &sigma, |c| {
        ds.get(c).clone() - lambda.for_step_into(tree, c).clone()
    });
    SemimartingaleParams { lambda, sigma, dw }
}

/// The remainder inherits the rounding of an inexact `σ`, so exact mode
/// treats variances below `1e-80` of the scale as zero.
fn remainder_negligible<T: Scalar>(var: &T, scale_sq: &T) -> bool {
    match T::MODE {
        Mode::Exact => *var <= scale_sq.clone() * T::from_ratio(1, 10).powi(80),
        Mode::Float => is_degenerate(var, scale_sq),
    }
}

/// `λ′ = E[ΔS′]`, `σ′ = Cov(ΔW, ΔS′)`, `σ″ = sqrt(Var(ΔS′ - σ′ΔW))`, and the
/// orthogonal noise `ΔW⊥` as the normalized remainder.
pub fn decompose_perturbation<T: Scalar>(
    tree: &FiltrationTree<T>,
    ds_prime: &AdaptedProcess<T>,
    base: &SemimartingaleParams<T>,
) -> PerturbationSpec<T> {
    let lambda_prime = PredictableProcess::from_fn(tree, |v| tree.weighted_sum(v, |c| ds_prime.get(c).clone()));
    let sigma_prime = PredictableProcess::from_fn(tree, |v| {
        tree.weighted_cov(v, |c| base.dw.get(c).clone(), |c| ds_prime.get(c).clone())
    });
    let remainder = AdaptedProcess::from_fn(tree, |c| match tree.parent(c) {
        Some(p) => {
            ds_prime.get(c).clone() - lambda_prime.get(p).clone() - sigma_prime.get(p).clone() * base.dw.get(c).clone()
        }
        None => T::zero(),
    });
    let sigma_dprime = PredictableProcess::from_fn(tree, |v| {
        let var = tree.weighted_cov(v, |c| remainder.get(c).clone(), |c| remainder.get(c).clone());
        let scale = tree.children(v).iter().fold(T::zero(), |m, &c| {
            T::max_of(m, ds_prime.get(c).clone() * ds_prime.get(c).clone())
        });
        if remainder_negligible(&var, &scale) {
            T::zero()
        } else {
            var.sqrt()
        }
    });
    let dw_perp = normalized(tree, &sigma_dprime, |c| remainder.get(c).clone());
    let root = tree.root();
    PerturbationSpec {
        ds_prime: ds_prime.map(|v, x| if v == root { T::zero() } else { x.clone() }),
        params: Some(PerturbationParams {
            lambda_prime,
            sigma_prime,
            sigma_dprime,
            dw_perp,
        }),
    }
}

/// Largest violation of the noise normalization: zero conditional mean,
/// unit conditional variance where the scale is positive, and zero conditional
/// covariance between `ΔW` and `ΔW⊥`.
pub fn noise_residual<T: Scalar>(
    tree: &FiltrationTree<T>,
    base: &SemimartingaleParams<T>,
    params: Option<&PerturbationParams<T>>,
) -> T {
    let mut worst = T::zero();
    let mut check = |noise: &AdaptedProcess<T>, scale: &PredictableProcess<T>, v: NodeId| {
        let mean = tree.weighted_sum(v, |c| noise.get(c).clone());
        worst = T::max_of(worst.clone(), mean.abs());
        if *scale.get(v) > T::zero() {
            let var = tree.weighted_cov(v, |c| noise.get(c).clone(), |c| noise.get(c).clone());
            worst = T::max_of(worst.clone(), (var - T::one()).abs());
        }
    };
    for v in tree.internal_nodes() {
        check(&base.dw, &base.sigma, v);
        if let Some(p) = params {
            check(&p.dw_perp, &p.sigma_dprime, v);
        }
    }
    if let Some(p) = params {
        for v in tree.internal_nodes() {
            let cov = tree.weighted_cov(v, |c| base.dw.get(c).clone(), |c| p.dw_perp.get(c).clone());
            worst = T::max_of(worst, cov.abs());
        }
    }
    worst
}

/// `S^ε` with `S^ε_0 = S⁰_0` and increments `ΔS⁰ + ε ΔS′`; fails if the
/// perturbed increments have zero conditional variance somewhere.
pub fn apply_perturbation<T: Scalar>(
    model: &MarketModel<T>,
    spec: &PerturbationSpec<T>,
    eps: &T,
) -> Result<MarketModel<T>> {
    let tree = &model.tree;
    let ds = model.increments();
    let shifted = ds.zip_with(&spec.ds_prime, |a, b| a.clone() + eps.clone() * b.clone());
    let stock = tree.cumulate(model.stock.get(tree.root()).clone(), &shifted);
    let mut perturbed = model.with_stock(stock, &format!("{} (eps={})", model.label, eps.format()))?;
    perturbed.generator = None;
    if let Some(v) = first_degenerate_node(&perturbed) {
        return Err(Error::DegenerateNode(tree.node(v).id.clone()));
    }
    Ok(perturbed)
}

/// Decomposition of the claim under `S^ε`.
pub fn decompose_at<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    spec: &PerturbationSpec<T>,
    eps: &T,
    policy: Degeneracy,
) -> Result<FsDecomposition<T>> {
    let perturbed = apply_perturbation(model, spec, eps)?;
    fs_decompose(&perturbed, claim, policy)
}

/// Base strategy `θ̂⁰` together with its first-order correction `θ′`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyCorrection<T> {
    pub theta: PredictableProcess<T>,
    pub theta_prime: PredictableProcess<T>,
}

/// Backward recursion for `θ′`:
///
/// `θ′_n = [Cov(A⁰_n, ΔS′_n) - Cov(B_n, ΔS⁰_n)] / Var(ΔS⁰_n)
///        - 2 Cov(A⁰_n, ΔS⁰_n) Cov(ΔS⁰_n, ΔS′_n) / Var(ΔS⁰_n)²`
///
/// with all moments conditional on `F_{n-1}`, base residual
/// `A⁰_n = V_N - Σ_{j>n} θ̂⁰_j ΔS⁰_j` and mixed term
/// `B_n = Σ_{j>n} (θ′_j ΔS⁰_j + θ̂⁰_j ΔS′_j)`. Both are carried as their
/// `F_n`-conditional means.
pub fn theta_prime<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    spec: &PerturbationSpec<T>,
) -> Result<StrategyCorrection<T>> {
    let tree = &model.tree;
    let ds = model.increments();
    let dsp = &spec.ds_prime;
    let n_nodes = tree.len();
    let mut base_resid: Vec<Option<T>> = vec![None; n_nodes];
    let mut mixed: Vec<Option<T>> = vec![None; n_nodes];
    let mut theta: Vec<Option<T>> = vec![None; n_nodes];
    let mut theta_p: Vec<Option<T>> = vec![None; n_nodes];
    for &l in tree.leaves() {
        base_resid[l] = Some(claim.get(l).clone());
        mixed[l] = Some(T::zero());
    }
    let a = |x: &Vec<Option<T>>, c: NodeId| x[c].clone().expect("filled");

    for n in (0..tree.horizon()).rev() {
        for &v in tree.level(n) {
            let (var, scale) = increment_variance(tree, &ds, v);
            if is_degenerate(&var, &scale) {
                return Err(Error::DegenerateNode(tree.node(v).id.clone()));
            }
            let s0 = |c: NodeId| ds.get(c).clone();
            let s1 = |c: NodeId| dsp.get(c).clone();
            let cov_a_s0 = tree.weighted_cov(v, |c| a(&base_resid, c), s0);
            let cov_a_s1 = tree.weighted_cov(v, |c| a(&base_resid, c), s1);
            let cov_b_s0 = tree.weighted_cov(v, |c| a(&mixed, c), s0);
            let cov_s0_s1 = tree.weighted_cov(v, s0, s1);

            let th = cov_a_s0.clone() / var.clone();
            let two = T::from_i64(2);
            let thp = (cov_a_s1 - cov_b_s0) / var.clone() - two * cov_a_s0 * cov_s0_s1 / (var.clone() * var);

            let next_a = tree.weighted_sum(v, |c| a(&base_resid, c) - th.clone() * s0(c));
            let next_b = tree.weighted_sum(v, |c| a(&mixed, c) + thp.clone() * s0(c) + th.clone() * s1(c));
            base_resid[v] = Some(next_a);
            mixed[v] = Some(next_b);
            theta[v] = Some(th);
            theta_p[v] = Some(thp);
        }
    }
    Ok(StrategyCorrection {
        theta: PredictableProcess::from_fn(tree, |v| a(&theta, v)),
        theta_prime: PredictableProcess::from_fn(tree, |v| a(&theta_p, v)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticExpansion<T> {
    pub theta: PredictableProcess<T>,
    pub theta_prime: PredictableProcess<T>,
    pub v0_prime: T,
    /// `L′_n`; zero at the root.
    pub l_prime: AdaptedProcess<T>,
    /// `Σ_{j≤n} (θ̂⁰_j ΔS′_j + θ′_j ΔS⁰_j)`.
    pub gains_prime: AdaptedProcess<T>,
}

/// First-order corrections of all decomposition components:
/// `V₀′ = -E[gains′_N]` and `L′_n = -E_n[gains′_N - E[gains′_N]]`.
pub fn asymptotic_expansion<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    spec: &PerturbationSpec<T>,
) -> Result<AsymptoticExpansion<T>> {
    let tree = &model.tree;
    let StrategyCorrection { theta, theta_prime } = theta_prime(model, claim, spec)?;
    let (prime_part, base_part) = gains_split(model, spec, &theta, &theta_prime);
    let gains_prime = prime_part.zip_with(&base_part, |a, b| a.clone() + b.clone());
    let mean = tree
        .expectation(&gains_prime, tree.horizon())
        .expect("gains cover the leaves");
    let closed = tree.martingale_extend(&gains_prime).expect("gains cover the leaves");
    let l_prime = closed.map(|_, x| mean.clone() - x.clone());
    Ok(AsymptoticExpansion {
        theta,
        theta_prime,
        v0_prime: -mean,
        l_prime,
        gains_prime,
    })
}

/// `(Σ θ′_j ΔS⁰_j, Σ θ̂⁰_j ΔS′_j)` as running sums.
fn gains_split<T: Scalar>(
    model: &MarketModel<T>,
    spec: &PerturbationSpec<T>,
    theta: &PredictableProcess<T>,
    theta_prime: &PredictableProcess<T>,
) -> (AdaptedProcess<T>, AdaptedProcess<T>) {
    let tree = &model.tree;
    let ds = model.increments();
    let step = |coef: &PredictableProcess<T>, inc: &AdaptedProcess<T>| {
        AdaptedProcess::from_fn(tree, |c| match tree.parent(c) {
            Some(p) => coef.get(p).clone() * inc.get(c).clone(),
            None => T::zero(),
        })
    };
    (
        tree.cumulate(T::zero(), &step(theta_prime, &ds)),
        tree.cumulate(T::zero(), &step(theta, &spec.ds_prime)),
    )
}

/// `L′` from the two separately centered terms
/// `-E_n[X - E X] - E_n[Y - E Y]` with `X = Σ θ′_j ΔS⁰_j`, `Y = Σ θ̂⁰_j ΔS′_j`.
pub fn l_prime_two_term<T: Scalar>(
    model: &MarketModel<T>,
    spec: &PerturbationSpec<T>,
    correction: &StrategyCorrection<T>,
) -> AdaptedProcess<T> {
    let tree = &model.tree;
    let (x, y) = gains_split(model, spec, &correction.theta, &correction.theta_prime);
    let centered = |z: &AdaptedProcess<T>| {
        let mean = tree.expectation(z, tree.horizon()).expect("leaves covered");
        tree.martingale_extend(z)
            .expect("leaves covered")
            .map(|_, v| v.clone() - mean.clone())
    };
    let (cx, cy) = (centered(&x), centered(&y));
    cx.zip_with(&cy, |a, b| -a.clone() - b.clone())
}

/// Status of one sweep row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// The perturbed stock has zero conditional variance at this node.
    Degenerate(String),
    /// Outside the feasible range established by a degenerate row closer to 0.
    Clipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub eps: T,
    pub status: RowStatus,
    pub v0: Option<T>,
    pub dev_v0: Option<T>,
    pub dev_theta: Option<T>,
    pub dev_l: Option<T>,
    pub objective: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport<T> {
    pub base: FsDecomposition<T>,
    pub rows: Vec<SweepRow<T>>,
    /// Smallest `|ε|` at which a degenerate row was met, if any.
    pub eps_bound: Option<T>,
}

impl<T: Scalar> SweepReport<T> {
    /// Deviations are non-increasing as `|ε|` decreases, separately for each
    /// sign of `ε`.
    pub fn shrinks_monotonically(&self) -> bool {
        let ok: Vec<&SweepRow<T>> = self.rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
        for positive in [true, false] {
            let mut side: Vec<&&SweepRow<T>> = ok.iter().filter(|r| (r.eps >= T::zero()) == positive).collect();
            side.sort_by(|a, b| a.eps.abs().partial_cmp(&b.eps.abs()).expect("ordered"));
            for w in side.windows(2) {
                let (near, far) = (w[0], w[1]);
                let le = |a: &Option<T>, b: &Option<T>| match (a, b) {
                    (Some(a), Some(b)) => a <= b,
                    _ => true,
                };
                if !(le(&near.dev_v0, &far.dev_v0)
                    && le(&near.dev_theta, &far.dev_theta)
                    && le(&near.dev_l, &far.dev_l))
                {
                    return false;
                }
            }
        }
        true
    }
}

/// Recomputes the decomposition at each `ε` and reports deviations from the
/// base decomposition. With `clip`, rows at or beyond the smallest degenerate
/// `|ε|` are marked clipped.
pub fn stability_sweep<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    spec: &PerturbationSpec<T>,
    grid: &[T],
    clip: bool,
) -> Result<SweepReport<T>> {
    let base = fs_decompose(model, claim, Degeneracy::Strict)?;
    let mut rows: Vec<SweepRow<T>> = grid
        .iter()
        .map(|eps| match decompose_at(model, claim, spec, eps, Degeneracy::Strict) {
            Ok(fs) => SweepRow {
                eps: eps.clone(),
                status: RowStatus::Ok,
                v0: Some(fs.v0.clone()),
                dev_v0: Some((fs.v0.clone() - base.v0.clone()).abs()),
                dev_theta: Some(fs.theta.max_abs_diff(&base.theta)),
                dev_l: Some(fs.l.max_abs_diff(&base.l)),
                objective: Some(fs.objective),
            },
            Err(Error::DegenerateNode(id)) => SweepRow {
                eps: eps.clone(),
                status: RowStatus::Degenerate(id),
                v0: None,
                dev_v0: None,
                dev_theta: None,
                dev_l: None,
                objective: None,
            },
            Err(e) => panic!("unexpected error in sweep row: {e}"),
        })
        .collect();
    let eps_bound = rows
        .iter()
        .filter(|r| matches!(r.status, RowStatus::Degenerate(_)))
        .map(|r| r.eps.abs())
        .fold(None, |m: Option<T>, e| match m {
            Some(m) if m <= e => Some(m),
            _ => Some(e),
        });
    if clip {
        if let Some(bound) = &eps_bound {
            for r in rows.iter_mut() {
                if r.status == RowStatus::Ok && r.eps.abs() >= *bound {
                    *r = SweepRow {
                        eps: r.eps.clone(),
                        status: RowStatus::Clipped,
                        v0: None,
                        dev_v0: None,
                        dev_theta: None,
                        dev_l: None,
                        objective: None,
                    };
                }
            }
        }
    }
    Ok(SweepReport { base, rows, eps_bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DifferenceScheme {
    /// `(Q^h - Q^{-h}) / 2h`, error `O(h²)`.
    #[default]
    Centered,
    /// `(Q^h - Q⁰) / h`, error `O(h)`.
    Forward,
}

impl DifferenceScheme {
    pub fn expected_order(self) -> f64 {
        match self {
            DifferenceScheme::Centered => 2.0,
            DifferenceScheme::Forward => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow<T> {
    pub eps: T,
    /// `V0`, `theta[<node>]` or `L[<node>]`.
    pub quantity: String,
    /// Finite-difference estimate of the derivative.
    pub value: T,
    /// Closed-form derivative.
    pub derivative: T,
    pub abs_error: T,
    /// `log2(err(h_prev) / err(h))` against the previous (larger) step.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<T> {
    pub scheme: DifferenceScheme,
    pub rows: Vec<ConvergenceRow<T>>,
}

impl<T: Scalar> ConvergenceReport<T> {
    /// Observed orders that are defined (both errors above `floor`).
    pub fn orders(&self) -> Vec<(String, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.observed_order.map(|p| (r.quantity.clone(), p)))
            .collect()
    }

    pub fn max_error(&self) -> T {
        self.rows
            .iter()
            .fold(T::zero(), |m, r| T::max_of(m, r.abs_error.clone()))
    }

    /// Every defined order lies within `[lo, hi]`.
    pub fn orders_within(&self, lo: f64, hi: f64) -> bool {
        self.orders().iter().all(|(_, p)| (lo..=hi).contains(p))
    }
}

fn labelled_quantities<T: Scalar>(
    tree: &FiltrationTree<T>,
    v0: &T,
    theta: &PredictableProcess<T>,
    l: &AdaptedProcess<T>,
) -> Vec<(String, T)> {
    let mut out = vec![("V0".to_string(), v0.clone())];
    out.extend(
        theta
            .iter()
            .map(|(v, t)| (format!("theta[{}]", tree.node(v).id), t.clone())),
    );
    out.extend((0..tree.len()).map(|v| (format!("L[{}]", tree.node(v).id), l.get(v).clone())));
    out
}

/// Compares finite differences of `(V0, θ̂, L)` along the perturbation with
/// the closed-form corrections, for each step in `steps` (largest first).
/// Errors at or below `floor` count as exact and leave the order undefined.
pub fn finite_diff_check<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    spec: &PerturbationSpec<T>,
    steps: &[T],
    scheme: DifferenceScheme,
    floor: &T,
) -> Result<ConvergenceReport<T>> {
    let tree = &model.tree;
    let exp = asymptotic_expansion(model, claim, spec)?;
    let derivs = labelled_quantities(tree, &exp.v0_prime, &exp.theta_prime, &exp.l_prime);
    let base = fs_decompose(model, claim, Degeneracy::Strict)?;
    let base_q = labelled_quantities(tree, &base.v0, &base.theta, &base.l);

    let mut rows = Vec::new();
    let mut prev_err: Option<Vec<T>> = None;
    for h in steps {
        if *h <= T::zero() {
            return Err(Error::InvalidParameter(format!("step {} must be positive", h.format())));
        }
        let up = decompose_at(model, claim, spec, h, Degeneracy::Strict)?;
        let up_q = labelled_quantities(tree, &up.v0, &up.theta, &up.l);
        let estimates: Vec<T> = match scheme {
            DifferenceScheme::Centered => {
                let down = decompose_at(model, claim, spec, &-h.clone(), Degeneracy::Strict)?;
                let down_q = labelled_quantities(tree, &down.v0, &down.theta, &down.l);
                up_q.iter()
                    .zip(&down_q)
                    .map(|((_, a), (_, b))| (a.clone() - b.clone()) / (T::from_i64(2) * h.clone()))
                    .collect()
            }
            DifferenceScheme::Forward => up_q
                .iter()
                .zip(&base_q)
                .map(|((_, a), (_, b))| (a.clone() - b.clone()) / h.clone())
                .collect(),
        };
        let errors: Vec<T> = estimates
            .iter()
            .zip(&derivs)
            .map(|(e, (_, d))| (e.clone() - d.clone()).abs())
            .collect();
        for (k, (name, d)) in derivs.iter().enumerate() {
            let order = prev_err.as_ref().and_then(|pe| {
                let (a, b) = (&pe[k], &errors[k]);
                (*a > *floor && *b > *floor).then(|| {
                    let ratio = a.to_f64() / b.to_f64();
                    let step_ratio = rows_step_ratio(steps, h);
                    ratio.ln() / step_ratio.ln()
                })
            });
            rows.push(ConvergenceRow {
                eps: h.clone(),
                quantity: name.clone(),
                value: estimates[k].clone(),
                derivative: d.clone(),
                abs_error: errors[k].clone(),
                observed_order: order,
            });
        }
        prev_err = Some(errors);
    }
    Ok(ConvergenceReport { scheme, rows })
}

/// Ratio between the previous step and `h` (2 for halving).
fn rows_step_ratio<T: Scalar>(steps: &[T], h: &T) -> f64 {
    let k = steps.iter().position(|s| s == h).expect("step from the list");
    steps[k - 1].to_f64() / h.to_f64()
}

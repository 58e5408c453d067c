//! Property tests for the structural invariants of every module.

use fsdecomp::decomposition::{
    delta_hedge, fs_decompose, martingale_residual, objective, reconstruction_residual, verify_orthogonality,
    Degeneracy,
};
use fsdecomp::fixtures::{random_binomial, random_claim, random_leaf_claim, random_trinomial, rng};
use fsdecomp::io::ModelFile;
use fsdecomp::models::{
    check_complete, check_nd, doob_decompose, first_degenerate_node, gen_binomial, gen_trinomial, Claim, MarketModel,
};
use fsdecomp::oracle::{assemble_normal_equations, brute_force_fs, solve_spd};
use fsdecomp::perturbation::{
    asymptotic_expansion, decompose_perturbation, extract_semimartingale_params, noise_residual, theta_prime,
    PerturbationSpec,
};
use fsdecomp::scalar::Zero;
use fsdecomp::{AdaptedProcess, Rational, Scalar};
use proptest::prelude::*;
use rand::Rng;

fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

fn tiny() -> Rational {
    q(1, 10).powi(40)
}

fn random_process<R: Rng>(r: &mut R, m: &MarketModel<Rational>) -> AdaptedProcess<Rational> {
    AdaptedProcess::from_fn(&m.tree, |_| q(r.random_range(-500..=500), 100))
}

fn random_direction<R: Rng>(r: &mut R, m: &MarketModel<Rational>) -> PerturbationSpec<Rational> {
    PerturbationSpec::from_increments(&m.tree, random_process(r, m))
}

/// Binomial or trinomial model with a claim, drawn from `seed`.
fn case(seed: u64) -> (MarketModel<Rational>, Claim<Rational>, rand_chacha::ChaCha8Rng) {
    let mut r = rng(seed);
    let m = if r.random_bool(0.5) {
        random_binomial::<Rational, _>(&mut r, 3).unwrap()
    } else {
        random_trinomial::<Rational, _>(&mut r, 2).unwrap()
    };
    let c = random_claim(&mut r, &m).unwrap();
    (m, c, r)
}

/// Trinomial with `u = 2`, `d = 1/2` and `p_down = 2 p_up`: the discounted
/// stock is a martingale.
fn martingale_trinomial(pu_cents: i64, steps: usize) -> MarketModel<Rational> {
    let pu = q(pu_cents, 100);
    let pd = q(2 * pu_cents, 100);
    let pm = q(1, 1) - pu.clone() - pd.clone();
    gen_trinomial(q(4, 1), q(2, 1), q(1, 2), [pu, pm, pd], steps, q(0, 1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conditional_moments(seed in any::<u64>()) {
        let (m, _, mut r) = case(seed);
        let tree = &m.tree;
        let x = random_process(&mut r, &m);
        let y = random_process(&mut r, &m);
        let z = random_process(&mut r, &m);
        let one = AdaptedProcess::constant(tree, q(1, 1));
        let a = q(r.random_range(-9..=9), 7);
        let ax_z = x.zip_with(&z, |p, s| a.clone() * p.clone() + s.clone());
        for v in tree.internal_nodes() {
            let cxy = tree.cond_cov(&x, &y, v).unwrap();
            prop_assert_eq!(&cxy, &tree.cond_cov(&y, &x, v).unwrap());
            prop_assert!(tree.cond_var(&x, v).unwrap() >= q(0, 1));
            prop_assert!(tree.cond_cov(&x, &one, v).unwrap().is_zero());
            let lhs = tree.cond_cov(&ax_z, &y, v).unwrap();
            let rhs = a.clone() * cxy + tree.cond_cov(&z, &y, v).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
        let leaves = tree.leaves().iter().fold(q(0, 1), |s, &l| s + tree.path_prob(l).clone());
        prop_assert_eq!(leaves, q(1, 1));
        let closed = tree.martingale_extend(&x).unwrap();
        let terminal = tree.expectation(&x, tree.horizon()).unwrap();
        for n in 0..=tree.horizon() {
            prop_assert_eq!(&tree.expectation(&closed, n).unwrap(), &terminal);
        }
    }

    #[test]
    fn doob_and_nd(seed in any::<u64>()) {
        let (m, _, _) = case(seed);
        let doob = doob_decompose(&m);
        let tree = &m.tree;
        prop_assert!(martingale_residual(tree, &doob.martingale, m.stock.get(0)).is_zero());
        let a = tree.cumulate(q(0, 1), &AdaptedProcess::from_fn(tree, |v| match tree.parent(v) {
            Some(p) => doob.drift.get(p).clone(),
            None => q(0, 1),
        }));
        for v in 0..tree.len() {
            prop_assert_eq!(m.stock.get(v).clone(), doob.martingale.get(v).clone() + a.get(v).clone());
        }
        let nd = check_nd(&m).unwrap();
        prop_assert_eq!(nd.satisfied, first_degenerate_node(&m).is_none());
    }

    #[test]
    fn decomposition_invariants(seed in any::<u64>()) {
        let (m, c, _) = case(seed);
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        prop_assert!(reconstruction_residual(&m, &c, &fs.v0, &fs.theta, &fs.l).is_zero());
        prop_assert!(martingale_residual(&m.tree, &fs.l, &q(0, 1)).is_zero());
        prop_assert!(verify_orthogonality(&m.tree, &fs, &doob_decompose(&m)).is_zero());
        prop_assert_eq!(&fs.objective, &objective(&fs.v0, &fs.theta, &c, &m));
        if check_complete(&m) {
            prop_assert!(fs.l.max_abs().is_zero());
            prop_assert_eq!(&fs.theta, &delta_hedge(&m, &c).unwrap().theta);
        }
    }

    #[test]
    fn shift_and_scale(seed in any::<u64>(), k in -50i64..50, s in 1i64..20) {
        let (m, c, _) = case(seed);
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        let k = q(k, 10);
        let shifted = fs_decompose(&m, &c.shift(&k), Degeneracy::Strict).unwrap();
        prop_assert_eq!(&shifted.theta, &fs.theta);
        prop_assert_eq!(&shifted.v0, &(fs.v0.clone() + k));
        prop_assert_eq!(&shifted.l, &fs.l);
        let s = q(s, 3);
        let scaled = fs_decompose(&m, &c.scale(&s), Degeneracy::Strict).unwrap();
        prop_assert_eq!(scaled.theta, fs.theta.map(|_, t| t.clone() * s.clone()));
        prop_assert_eq!(scaled.v0, fs.v0.clone() * s.clone());
        prop_assert_eq!(scaled.l, fs.l.scale(&s));
    }

    #[test]
    fn oracle_bounds_regression(seed in any::<u64>()) {
        let (m, c, _) = case(seed);
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        let or = brute_force_fs(&m, &c).unwrap();
        prop_assert!(or.objective <= fs.objective);
        prop_assert!(or.residual.is_zero());
        let sys = assemble_normal_equations(&m, &c);
        for i in 0..sys.matrix.len() {
            for j in 0..sys.matrix.len() {
                prop_assert_eq!(&sys.matrix[i][j], &sys.matrix[j][i]);
            }
        }
        prop_assert!(solve_spd(&sys).unwrap().positive_pivots);
        // homogeneous models: the initial capitals coincide
        prop_assert_eq!(&fs.v0, &or.c);
        if m.tree.horizon() == 1 || check_complete(&m) {
            prop_assert_eq!(&fs.theta, &or.theta);
            prop_assert_eq!(&fs.objective, &or.objective);
        }
    }

    #[test]
    fn oracle_matches_on_martingale_trinomials(pu in 5i64..=30, steps in 1usize..=3, seed in any::<u64>()) {
        let m = martingale_trinomial(pu, steps);
        let mut r = rng(seed);
        let c = random_leaf_claim(&mut r, &m).unwrap();
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        let or = brute_force_fs(&m, &c).unwrap();
        prop_assert_eq!(fs.v0, or.c);
        prop_assert_eq!(fs.theta, or.theta);
        prop_assert_eq!(fs.objective, or.objective);
    }

    #[test]
    fn regression_beats_sampled_strategies_when_optimal(pu in 5i64..=30, seed in any::<u64>()) {
        let m = martingale_trinomial(pu, 2);
        let mut r = rng(seed);
        let c = random_leaf_claim(&mut r, &m).unwrap();
        let fs = fs_decompose(&m, &c, Degeneracy::Strict).unwrap();
        for _ in 0..5 {
            let c0 = fs.v0.clone() + q(r.random_range(-100..=100), 100);
            let theta = fs.theta.map(|_, t| t.clone() + q(r.random_range(-100..=100), 100));
            prop_assert!(fs.objective <= objective(&c0, &theta, &c, &m));
        }
    }

    #[test]
    fn risk_neutral_binomial_is_martingale(u in 101i64..300, d in 21i64..100, r_c in 0i64..=5, steps in 1usize..=4) {
        let (u, d, rate) = (q(u, 100), q(d, 100), q(r_c, 100));
        prop_assume!(d < q(1, 1) + rate.clone() && q(1, 1) + rate.clone() < u);
        let p = (q(1, 1) + rate.clone() - d.clone()) / (u.clone() - d.clone());
        let m = gen_binomial(q(4, 1), u, d, p, steps, rate).unwrap();
        prop_assert!(martingale_residual(&m.tree, &m.stock, m.stock.get(0)).is_zero());
    }

    #[test]
    fn parametrization_round_trips(seed in any::<u64>()) {
        let (m, _, mut r) = case(seed);
        let tree = &m.tree;
        let base = extract_semimartingale_params(&m);
        let ds = m.increments();
        for v in 1..tree.len() {
            let p = tree.parent(v).unwrap();
            let rebuilt = base.lambda.get(p).clone() + base.sigma.get(p).clone() * base.dw.get(v).clone();
            prop_assert_eq!(&rebuilt, ds.get(v));
        }
        let spec = decompose_perturbation(tree, &random_process(&mut r, &m), &base);
        let params = spec.params.clone().unwrap();
        let again = PerturbationSpec::from_params(tree, &base, params.clone());
        // σ is an approximate root off perfect squares
        let gap = again.ds_prime.zip_with(&spec.ds_prime, |a, b| a.clone() - b.clone()).max_abs();
        prop_assert!(gap < tiny());
        prop_assert!(noise_residual(tree, &base, Some(&params)) < tiny());
    }

    #[test]
    fn theta_prime_is_linear(seed in any::<u64>(), k in -20i64..20) {
        let (m, c, mut r) = case(seed);
        let a = random_direction(&mut r, &m);
        let b = random_direction(&mut r, &m);
        let ta = theta_prime(&m, &c, &a).unwrap().theta_prime;
        let tb = theta_prime(&m, &c, &b).unwrap().theta_prime;
        let tab = theta_prime(&m, &c, &a.add(&b)).unwrap().theta_prime;
        prop_assert_eq!(tab, ta.zip_with(&tb, |x, y| x.clone() + y.clone()));
        let k = q(k, 3);
        let tk = theta_prime(&m, &c, &a.scale(&k)).unwrap().theta_prime;
        prop_assert_eq!(tk, ta.map(|_, x| x.clone() * k.clone()));
    }

    #[test]
    fn expansion_invariants(seed in any::<u64>()) {
        let (m, c, mut r) = case(seed);
        let spec = random_direction(&mut r, &m);
        let exp = asymptotic_expansion(&m, &c, &spec).unwrap();
        let tree = &m.tree;
        prop_assert!(exp.l_prime.get(0).is_zero());
        prop_assert!(martingale_residual(tree, &exp.l_prime, &q(0, 1)).is_zero());
        for &l in tree.leaves() {
            let total = exp.v0_prime.clone() + exp.gains_prime.get(l).clone() + exp.l_prime.get(l).clone();
            prop_assert!(total.is_zero());
        }
    }

    #[test]
    fn model_files_round_trip(seed in any::<u64>()) {
        let (m, c, _) = case(seed);
        let file = ModelFile::from_model(&m, Some(&c));
        let text = serde_json::to_string(&file).unwrap();
        let back = serde_json::from_str::<ModelFile>(&text).unwrap().to_model::<Rational>().unwrap();
        prop_assert_eq!(&back.model, &m);
        let claim = fsdecomp::models::payoff_claim(&back.model, back.claim.as_ref().unwrap()).unwrap();
        prop_assert_eq!(claim, c);
    }
}

#[test]
fn float_and_exact_agree() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let me = random_trinomial::<Rational, _>(&mut r, 3).unwrap();
        let ce = random_leaf_claim(&mut r, &me).unwrap();
        let mut r = rng(seed);
        let mf = random_trinomial::<f64, _>(&mut r, 3).unwrap();
        let cf = random_leaf_claim(&mut r, &mf).unwrap();
        let e = fs_decompose(&me, &ce, Degeneracy::Strict).unwrap();
        let f = fs_decompose(&mf, &cf, Degeneracy::Strict).unwrap();
        assert!((e.v0.to_f64() - f.v0).abs() <= 1e-10);
        for (v, t) in e.theta.iter() {
            assert!((t.to_f64() - f.theta.get(v)).abs() <= 1e-10);
        }
        let or = brute_force_fs(&mf, &cf).unwrap();
        assert!(or.residual <= 1e-10);
    }
}

#[test]
fn pseudo_mode_zeroes_degenerate_nodes() {
    // one-child extension: the last step carries no risk
    let spec = r#"{"horizon": 2, "nodes": [
        {"id": "r", "parent": null, "prob": 1, "stock": 4},
        {"id": "a", "parent": "r", "prob": "1/2", "stock": 8},
        {"id": "b", "parent": "r", "prob": "1/2", "stock": 2},
        {"id": "a1", "parent": "a", "prob": 1, "stock": 8},
        {"id": "b1", "parent": "b", "prob": 1, "stock": 2}],
        "claim": {"a1": 5, "b1": 1}}"#;
    let loaded = serde_json::from_str::<ModelFile>(spec)
        .unwrap()
        .to_model::<Rational>()
        .unwrap();
    let m = loaded.model;
    let c = fsdecomp::models::payoff_claim(&m, loaded.claim.as_ref().unwrap()).unwrap();
    assert!(check_complete(&m));
    let err = fs_decompose(&m, &c, Degeneracy::Strict).unwrap_err();
    assert!(matches!(err, fsdecomp::Error::DegenerateNode(ref id) if id == "a"));
    let fs = fs_decompose(&m, &c, Degeneracy::Pseudo).unwrap();
    let a = m.tree.find("a").unwrap();
    assert!(fs.theta.get(a).is_zero());
    assert_eq!(fs.theta.get(0), &q(2, 3));
    assert!(reconstruction_residual(&m, &c, &fs.v0, &fs.theta, &fs.l).is_zero());
    assert!(fs.l.max_abs().is_zero());
}

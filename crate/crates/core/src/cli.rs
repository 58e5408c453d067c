//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 mathematical precondition
//! failure (degenerate node, singular system), 3 failed verification.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::decomposition::{
    assemble, delta_hedge, fs_decompose, martingale_residual, reconstruction_residual, verify_orthogonality,
    Degeneracy, FsDecomposition,
};
use crate::error::{Error, Result};
use crate::filtration::NodeId;
use crate::fixtures::{self, DEFAULT_SEED};
use crate::io::{self, ModelFile, PerturbationFile};
use crate::models::{check_complete, check_nd, doob_decompose, payoff_claim, Claim, ClaimKind, MarketModel};
use crate::oracle::brute_force_fs;
use crate::perturbation::{
    asymptotic_expansion, extract_semimartingale_params, finite_diff_check, stability_sweep, DifferenceScheme,
    PerturbationSpec, RowStatus,
};
use crate::report::{
    convergence_rows, render_tree, sweep_rows, write_csv, AsymptoticsReport, DecompositionReport, Provenance,
    VerificationReport,
};
use crate::scalar::{Mode, Rational, Scalar};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MATH: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable overriding the default tolerance.
pub const TOLERANCE_ENV: &str = "FSDECOMP_TOLERANCE";

#[derive(Debug, Parser)]
#[command(
    name = "fsdecomp",
    version,
    about = "Föllmer-Schweizer decomposition on finite filtration trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a binomial or trinomial model file.
    Gen(GenArgs),
    /// Decompose a claim by sequential regression.
    Decompose(DecomposeArgs),
    /// Check a decomposition against the oracle and the structural invariants.
    Verify(VerifyArgs),
    /// First-order corrections under a perturbation, with finite-difference validation.
    Asymptotics(AsymptoticsArgs),
    /// Recompute the decomposition on a grid of perturbation sizes.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Binomial,
    Trinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClaimChoice {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    /// `ΔS′ = ΔS⁰`.
    Proportional,
    /// `ΔS′ ≡ 1`.
    Drift,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model JSON file.
    #[arg(long, short = 'm', conflicts_with_all = ["kind", "random"])]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub s0: Option<String>,
    #[arg(long)]
    pub u: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    /// Up probability.
    #[arg(long)]
    pub p: Option<String>,
    /// Middle probability (trinomial); the down probability is the remainder.
    #[arg(long = "m-prob")]
    pub m_prob: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value = "0")]
    pub rate: String,
    /// Draw the generator parameters (and a claim) from `--seed`.
    #[arg(long, requires = "kind")]
    pub random: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Largest number of steps for `--random`.
    #[arg(long, default_value_t = 3)]
    pub max_steps: usize,
    #[arg(long, default_value = "exact")]
    pub mode: Mode,
}

#[derive(Debug, Clone, Args)]
pub struct ClaimArgs {
    #[arg(long, value_enum, requires = "strike")]
    pub claim: Option<ClaimChoice>,
    #[arg(long)]
    pub strike: Option<String>,
    /// JSON table of nominal payoffs per leaf id.
    #[arg(long, conflicts_with = "claim")]
    pub claim_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub claim: ClaimArgs,
    /// Output file; stdout when absent.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub claim: ClaimArgs,
    /// Set θ to 0 at nodes with zero conditional variance instead of failing.
    #[arg(long)]
    pub pseudo: bool,
    /// Write the JSON report here.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub claim: ClaimArgs,
    /// Check this decomposition report instead of a fresh decomposition.
    #[arg(long)]
    pub decomposition: Option<PathBuf>,
    #[arg(long, env = TOLERANCE_ENV, default_value = "1e-10")]
    pub tolerance: String,
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbationArgs {
    /// Perturbation JSON file (`dSprime` or `params` block).
    #[arg(long, conflicts_with = "direction")]
    pub perturbation: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Args)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub claim: ClaimArgs,
    #[command(flatten)]
    pub perturbation: PerturbationArgs,
    /// Largest finite-difference step; each further level halves it.
    #[arg(long, default_value = "1e-3")]
    pub h: String,
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    /// Forward differences instead of centered ones.
    #[arg(long)]
    pub one_sided: bool,
    /// Convergence CSV; stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON report of the corrections.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub claim: ClaimArgs,
    #[command(flatten)]
    pub perturbation: PerturbationArgs,
    /// Comma-separated grid; a leading `±` adds both signs.
    #[arg(long, default_value = "±1e-1,±1e-2,±1e-3", allow_hyphen_values = true)]
    pub eps: String,
    /// Keep rows beyond a degenerate one instead of clipping them.
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let mode = match &cli.command {
        Command::Gen(a) => a.model.mode,
        Command::Decompose(a) => a.model.mode,
        Command::Verify(a) => a.model.mode,
        Command::Asymptotics(a) => a.model.mode,
        Command::Sweep(a) => a.model.mode,
    };
    let result = match mode {
        Mode::Exact => dispatch::<Rational>(&cli.command, out, err),
        Mode::Float => dispatch::<f64>(&cli.command, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_mathematical() {
                EXIT_MATH
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn dispatch<T: Scalar>(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Gen(a) => cmd_gen::<T>(a, out, err),
        Command::Decompose(a) => cmd_decompose::<T>(a, out),
        Command::Verify(a) => cmd_verify::<T>(a, out, err),
        Command::Asymptotics(a) => cmd_asymptotics::<T>(a, out),
        Command::Sweep(a) => cmd_sweep::<T>(a, out, err),
    }
}

fn required<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required")))
}

struct Loaded<T> {
    model: MarketModel<T>,
    file_claim: Option<ClaimKind<T>>,
    rng: Option<rand_chacha::ChaCha8Rng>,
}

fn load_model<T: Scalar>(a: &ModelArgs) -> Result<Loaded<T>> {
    if let Some(path) = &a.model {
        let loaded = io::load_model::<T>(path)?;
        return Ok(Loaded {
            model: loaded.model,
            file_claim: loaded.claim,
            rng: None,
        });
    }
    let kind = a
        .kind
        .ok_or_else(|| Error::InvalidParameter("either --model or --kind is required".into()))?;
    if a.random {
        let mut rng = fixtures::rng(a.seed);
        let model = match kind {
            Kind::Binomial => fixtures::random_binomial::<T, _>(&mut rng, a.max_steps)?,
            Kind::Trinomial => fixtures::random_trinomial::<T, _>(&mut rng, a.max_steps)?,
        };
        return Ok(Loaded {
            model,
            file_claim: None,
            rng: Some(rng),
        });
    }
    let num = |v: &Option<String>, flag: &str| -> Result<T> { T::parse(required(v, flag)?) };
    let steps = a
        .steps
        .ok_or_else(|| Error::InvalidParameter("--steps is required".into()))?;
    let (s0, u, d, p, rate) = (
        num(&a.s0, "s0")?,
        num(&a.u, "u")?,
        num(&a.d, "d")?,
        num(&a.p, "p")?,
        T::parse(&a.rate)?,
    );
    let model = match kind {
        Kind::Binomial => crate::models::gen_binomial(s0, u, d, p, steps, rate)?,
        Kind::Trinomial => {
            let m = num(&a.m_prob, "m-prob")?;
            let down = T::one() - p.clone() - m.clone();
            crate::models::gen_trinomial(s0, u, d, [p, m, down], steps, rate)?
        }
    };
    Ok(Loaded {
        model,
        file_claim: None,
        rng: None,
    })
}

/// Claim from flags, then from the model file, then (for random models) from
/// the seed.
fn resolve_claim<T: Scalar>(loaded: &mut Loaded<T>, a: &ClaimArgs) -> Result<Option<(Claim<T>, String)>> {
    let model = &loaded.model;
    if let Some(choice) = a.claim {
        let strike = T::parse(required(&a.strike, "strike")?)?;
        let (kind, name) = match choice {
            ClaimChoice::Call => (ClaimKind::Call { strike: strike.clone() }, "call"),
            ClaimChoice::Put => (ClaimKind::Put { strike: strike.clone() }, "put"),
        };
        return Ok(Some((
            payoff_claim(model, &kind)?,
            format!("{name} K={}", strike.format()),
        )));
    }
    if let Some(path) = &a.claim_file {
        let kind = io::load_claim_table::<T>(path)?;
        return Ok(Some((payoff_claim(model, &kind)?, format!("table {}", path.display()))));
    }
    if let Some(kind) = &loaded.file_claim {
        return Ok(Some((payoff_claim(model, kind)?, "table from model file".into())));
    }
    if let Some(rng) = loaded.rng.as_mut() {
        return Ok(Some((fixtures::random_claim(rng, model)?, "random".into())));
    }
    Ok(None)
}

fn require_claim<T: Scalar>(loaded: &mut Loaded<T>, a: &ClaimArgs) -> Result<(Claim<T>, String)> {
    resolve_claim(loaded, a)?.ok_or_else(|| {
        Error::InvalidParameter("no claim given: use --claim call|put --strike K or --claim-file".into())
    })
}

fn cmd_gen<T: Scalar>(a: &GenArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut loaded = load_model::<T>(&a.model)?;
    let claim = resolve_claim(&mut loaded, &a.claim)?;
    let model = &loaded.model;
    let file = ModelFile::from_model(model, claim.as_ref().map(|(c, _)| c));
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    let summary = format!("nodes: {}, leaves: {}\n", model.tree.len(), model.tree.leaves().len());
    match &a.out {
        Some(p) => {
            std::fs::write(p, text)?;
            out.write_all(summary.as_bytes())?;
        }
        None => {
            out.write_all(text.as_bytes())?;
            err.write_all(summary.as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

fn policy(pseudo: bool) -> Degeneracy {
    if pseudo {
        Degeneracy::Pseudo
    } else {
        Degeneracy::Strict
    }
}

fn model_line<T: Scalar>(model: &MarketModel<T>) -> String {
    format!(
        "model: {} ({} nodes, {} leaves), mode {}\n",
        model.label,
        model.tree.len(),
        model.tree.leaves().len(),
        T::MODE.as_str()
    )
}

fn structural_residuals<T: Scalar>(
    model: &MarketModel<T>,
    claim: &Claim<T>,
    fs: &FsDecomposition<T>,
) -> Vec<(&'static str, T)> {
    let doob = doob_decompose(model);
    vec![
        (
            "reconstruction",
            reconstruction_residual(model, claim, &fs.v0, &fs.theta, &fs.l),
        ),
        ("martingale", martingale_residual(&model.tree, &fs.l, &T::zero())),
        ("orthogonality", verify_orthogonality(&model.tree, fs, &doob)),
    ]
}

fn cmd_decompose<T: Scalar>(a: &DecomposeArgs, out: &mut dyn Write) -> Result<i32> {
    let mut loaded = load_model::<T>(&a.model)?;
    let (claim, claim_desc) = require_claim(&mut loaded, &a.claim)?;
    let model = &loaded.model;
    let fs = fs_decompose(model, &claim, policy(a.pseudo))?;
    let prov = Provenance::new(
        model,
        &[
            ("command", "decompose".into()),
            ("claim", claim_desc),
            ("pseudo", a.pseudo.to_string()),
        ],
    );
    let report = DecompositionReport::new(model, &fs, prov, &structural_residuals(model, &claim, &fs));
    let json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(p) = &a.out {
        std::fs::write(p, &json)?;
    }
    if a.json {
        out.write_all(json.as_bytes())?;
        return Ok(EXIT_OK);
    }
    let tree = &model.tree;
    let stock = |v: NodeId| Some(model.stock.get(v).format());
    let theta = |v: NodeId| fs.theta.at(v).map(T::format);
    let l = |v: NodeId| Some(fs.l.get(v).format());
    let text = format!(
        "{}V0 = {}\nobjective = {}\n{}",
        model_line(model),
        fs.v0.format(),
        fs.objective.format(),
        render_tree(tree, &[("S", &stock), ("theta", &theta), ("L", &l)])
    );
    out.write_all(text.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_verify<T: Scalar>(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let tol = T::parse(&a.tolerance)?;
    if tol <= T::zero() || !tol.is_finite() {
        return Err(Error::InvalidParameter("--tolerance must be positive".into()));
    }
    let mut loaded = load_model::<T>(&a.model)?;
    let (claim, claim_desc) = require_claim(&mut loaded, &a.claim)?;
    let model = &loaded.model;
    let fs = match &a.decomposition {
        Some(path) => {
            let rep: DecompositionReport = io::read_json(path)?;
            let (v0, theta, l) = rep.components(&model.tree)?;
            let objective = crate::decomposition::objective(&v0, &theta, &claim, model);
            FsDecomposition {
                v0,
                theta,
                l,
                objective,
            }
        }
        None => fs_decompose(model, &claim, Degeneracy::Strict)?,
    };
    let mut checks = structural_residuals(model, &claim, &fs);
    let mut notes = Vec::new();
    match brute_force_fs(model, &claim) {
        Ok(or) => {
            checks.push(("oracle V0", (fs.v0.clone() - or.c.clone()).abs()));
            checks.push(("oracle theta", fs.theta.max_abs_diff(&or.theta)));
            checks.push(("oracle objective", (fs.objective.clone() - or.objective.clone()).abs()));
        }
        Err(Error::TooLarge { unknowns, limit }) => {
            notes.push(format!("oracle skipped: {unknowns} unknowns exceed the limit {limit}"));
        }
        Err(e) => return Err(e),
    }
    if check_complete(model) {
        match delta_hedge(model, &claim) {
            Ok(h) => {
                let hedge = assemble(model, &claim, h.theta.clone());
                checks.push(("delta-hedge equivalence", fs.theta.max_abs_diff(&h.theta)));
                checks.push(("delta-hedge residual", hedge.l.max_abs()));
            }
            Err(Error::NotBinomial(_)) => notes.push("delta hedge skipped: not binomial".into()),
            Err(e) => return Err(e),
        }
    }
    let prov = Provenance::new(
        model,
        &[
            ("command", "verify".into()),
            ("claim", claim_desc),
            ("tolerance", tol.format()),
        ],
    );
    let report = VerificationReport::new(prov, &checks, &tol);
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    let mut text = model_line(model);
    for c in &report.checks {
        text.push_str(&format!(
            "{}: {} [{}]\n",
            c.name,
            c.residual.0,
            if c.passed { "ok" } else { "FAIL" }
        ));
    }
    for n in notes {
        text.push_str(&format!("{n}\n"));
    }
    out.write_all(text.as_bytes())?;
    if report.passed {
        Ok(EXIT_OK)
    } else {
        writeln!(err, "verification failed: {}", report.failures().join(", "))?;
        Ok(EXIT_VERIFY)
    }
}

fn load_perturbation<T: Scalar>(model: &MarketModel<T>, a: &PerturbationArgs) -> Result<PerturbationSpec<T>> {
    match (&a.perturbation, a.direction) {
        (Some(path), _) => {
            let file: PerturbationFile = io::read_json(path)?;
            file.to_spec(&model.tree, &extract_semimartingale_params(model))
        }
        (None, Some(Direction::Proportional)) => Ok(PerturbationSpec::proportional(model)),
        (None, Some(Direction::Drift)) => Ok(PerturbationSpec::constant_drift(&model.tree, T::one())),
        (None, None) => Err(Error::InvalidParameter(
            "a perturbation is required: --perturbation FILE or --direction".into(),
        )),
    }
}

fn cmd_asymptotics<T: Scalar>(a: &AsymptoticsArgs, out: &mut dyn Write) -> Result<i32> {
    let mut loaded = load_model::<T>(&a.model)?;
    let (claim, claim_desc) = require_claim(&mut loaded, &a.claim)?;
    let model = &loaded.model;
    let spec = load_perturbation(model, &a.perturbation)?;
    let exp = asymptotic_expansion(model, &claim, &spec)?;
    let prov = Provenance::new(
        model,
        &[("command", "asymptotics".into()), ("claim", claim_desc.clone())],
    );
    if let Some(p) = &a.out {
        let report = AsymptoticsReport::new(model, &exp, prov);
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }

    let h0 = T::parse(&a.h)?;
    if a.levels < 2 {
        return Err(Error::InvalidParameter("--levels must be at least 2".into()));
    }
    let steps: Vec<T> = (0..a.levels)
        .scan(h0, |h, _| {
            let cur = h.clone();
            *h = h.clone() / T::from_i64(2);
            Some(cur)
        })
        .collect();
    let scheme = if a.one_sided {
        DifferenceScheme::Forward
    } else {
        DifferenceScheme::Centered
    };
    let floor = match T::MODE {
        Mode::Exact => T::zero(),
        Mode::Float => T::from_f64(1e-9).expect("finite"),
    };
    let conv = finite_diff_check(model, &claim, &spec, &steps, scheme, &floor)?;

    let theta = |v: NodeId| exp.theta.at(v).map(T::format);
    let theta_p = |v: NodeId| exp.theta_prime.at(v).map(T::format);
    let l_p = |v: NodeId| Some(exp.l_prime.get(v).format());
    let mut text = format!(
        "{}claim: {claim_desc}\nV0' = {}\n{}",
        model_line(model),
        exp.v0_prime.format(),
        render_tree(&model.tree, &[("theta", &theta), ("theta'", &theta_p), ("L'", &l_p)])
    );
    let orders = conv.orders();
    let expected = scheme.expected_order();
    if orders.is_empty() {
        text.push_str("convergence: all finite-difference errors at or below the floor\n");
    } else {
        let lo = orders.iter().map(|(_, p)| *p).fold(f64::INFINITY, f64::min);
        let hi = orders.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
        text.push_str(&format!(
            "convergence: observed order in [{lo:.4}, {hi:.4}] (expected {expected}) over {} quantities\n",
            orders.len()
        ));
    }
    out.write_all(text.as_bytes())?;
    let rows = convergence_rows(&conv);
    match &a.csv {
        Some(p) => write_csv(std::fs::File::create(p)?, &rows)?,
        None => {
            out.write_all(b"\n")?;
            write_csv(&mut *out, &rows)?;
        }
    }
    Ok(EXIT_OK)
}

/// `0.1,-0.01,±1e-3` into a list of values.
pub fn parse_grid<T: Scalar>(spec: &str) -> Result<Vec<T>> {
    let mut grid = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (both, body) = match item.strip_prefix('±').or_else(|| item.strip_prefix("+-")) {
            Some(rest) => (true, rest),
            None => (false, item),
        };
        let x = T::parse(body)?;
        if !x.is_finite() {
            return Err(Error::Parse(format!("grid value `{item}` is not finite")));
        }
        if both {
            grid.push(x.clone());
            grid.push(-x);
        } else {
            grid.push(x);
        }
    }
    if grid.is_empty() {
        return Err(Error::Parse("empty eps grid".into()));
    }
    Ok(grid)
}

fn cmd_sweep<T: Scalar>(a: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut loaded = load_model::<T>(&a.model)?;
    let (claim, _) = require_claim(&mut loaded, &a.claim)?;
    let model = &loaded.model;
    let spec = load_perturbation(model, &a.perturbation)?;
    let grid = parse_grid::<T>(&a.eps)?;
    check_nd(model)?;
    let report = stability_sweep(model, &claim, &spec, &grid, !a.no_clip)?;
    let rows = sweep_rows(&report);
    match &a.csv {
        Some(p) => write_csv(std::fs::File::create(p)?, &rows)?,
        None => write_csv(&mut *out, &rows)?,
    }
    let degenerate = report
        .rows
        .iter()
        .filter(|r| matches!(r.status, RowStatus::Degenerate(_)))
        .count();
    let clipped = report.rows.iter().filter(|r| r.status == RowStatus::Clipped).count();
    writeln!(
        err,
        "rows: {}, degenerate: {degenerate}, clipped: {clipped}, monotone shrink: {}",
        report.rows.len(),
        if report.shrinks_monotonically() { "yes" } else { "no" }
    )?;
    if let Some(b) = &report.eps_bound {
        writeln!(err, "feasible |eps| < {}", b.format())?;
    }
    Ok(EXIT_OK)
}

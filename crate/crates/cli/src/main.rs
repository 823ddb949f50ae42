//! `slhs` command-line front end.
//!
//! Exit codes: 0 on success (or a satisfied inequality), 2 when `eval` finds
//! a violation, 1 on any error including bad arguments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use slhs::basis_opt::OptimizerConfig;
use slhs::circuits::{estimate_combo, estimate_magnitude, Combination};
use slhs::families::{
    bell, isotropic, lhs_assemblage_state_dims, random_separable, thresholds, werner, BellKind, IsotropicSpec, WernerKind, WernerSpec,
};
use slhs::inequalities::{bound_oracle, evaluate, max_violation, InequalityKind, InequalityReport, TermKey};
use slhs::measure::{axiom_b_trials, axiom_c_trials, n_measure, theorem1_probe, ChannelKind, MeasureVariant, ProbeRow};
use slhs::qcore::{random_density, read_basis, read_state, write_bipartite};
use slhs::selftest::{adversarial_search, algebra_trace, certify, SelfTestAssumptions};
use slhs::{BipartiteState, LocalBasis};

const VIOLATED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "slhs", version, about = "Numerical laboratory for the symmetric local hidden state model")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate an inequality on a state file.
    Eval(EvalArgs),
    /// Evaluate an inequality over a grid of a state family (CSV).
    Sweep(SweepArgs),
    /// Estimate the coherence combinations from simulated shots.
    Simulate(SimulateArgs),
    /// Check the self-testing assumptions and certify the Bell state.
    Selftest(SelftestArgs),
    /// Evaluate the nonlocality measure N.
    Measure(MeasureArgs),
    /// Randomized probes of the measure axioms (CSV).
    Probe(ProbeArgs),
    /// Isotropic-state thresholds for entanglement, steering and violation.
    Thresholds(ThresholdsArgs),
    /// Numerical oracles for the bound and the self-testing robustness.
    Oracle(OracleArgs),
    /// Write a state of a named family as JSON.
    Family(FamilyArgs),
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    /// Random restarts of the basis search.
    #[arg(long)]
    restarts: Option<usize>,
    /// Objective evaluations per restart.
    #[arg(long)]
    max_evals: Option<usize>,
}

impl SearchArgs {
    fn config(&self, seed: u64) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::default().with_seed(seed);
        if let Some(r) = self.restarts {
            cfg = cfg.with_restarts(r);
        }
        if let Some(m) = self.max_evals {
            cfg = cfg.with_max_evals(m);
        }
        cfg
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value = "aligned", value_parser = parse_ineq)]
    ineq: InequalityKind,
    /// `z`, `x`, `y` or a basis JSON file.
    #[arg(long, default_value = "z")]
    basis_a: String,
    #[arg(long, default_value = "z")]
    basis_b: String,
    /// Maximize over local bases instead of using the given ones.
    #[arg(long)]
    optimize: bool,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SweepFamily {
    WernerPhi,
    WernerPsi,
    Isotropic,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    family: SweepFamily,
    #[arg(long, default_value = "aligned", value_parser = parse_ineq)]
    ineq: InequalityKind,
    #[arg(long, default_value_t = 101)]
    p_steps: usize,
    #[arg(long, default_value_t = 0.0)]
    p_min: f64,
    #[arg(long, default_value_t = 1.0)]
    p_max: f64,
    /// Single Werner amplitude; without it alpha runs over a grid.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 101)]
    alpha_steps: usize,
    /// Isotropic local dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    d: Vec<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 8192)]
    shots: u64,
    /// White-noise weight lambda in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Add the mixed x/y runs and report the modulus of the element.
    #[arg(long)]
    full_magnitude: bool,
    /// Include the raw counts of every basis run.
    #[arg(long)]
    counts: bool,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, default_value = "z")]
    basis_a: String,
    #[arg(long, default_value = "z")]
    basis_b: String,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value = "per_term_opt", value_parser = parse_variant)]
    variant: MeasureVariant,
    #[arg(long, default_value = "z")]
    basis_a: String,
    #[arg(long, default_value = "z")]
    basis_b: String,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Axiom {
    /// Monotonicity under local channels.
    B,
    /// Convexity under mixing.
    C,
    /// Separable inputs stay non-violating after local channels.
    Theorem1,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[arg(long, value_enum, default_value = "b")]
    axiom: Axiom,
    #[arg(long, default_value = "diagonal", value_parser = parse_channel)]
    channel: ChannelKind,
    #[arg(long, default_value = "per_term_opt", value_parser = parse_variant)]
    variant: MeasureVariant,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Debug)]
struct ThresholdsArgs {
    /// Local dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    d: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    /// Maximum of the transition-product sum behind the (d-1)/d bound.
    #[value(name = "bound-max", alias = "eq8-max")]
    BoundMax,
    /// Least faithful state meeting the self-testing assumptions.
    Adversarial,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, value_enum)]
    which: OracleKind,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
    WernerPhi,
    WernerPsi,
    Isotropic,
    Separable,
    Assemblage,
    Mixed,
    Random,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: FamilyKind,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Product terms of a separable state.
    #[arg(long, default_value_t = 4)]
    terms: usize,
    /// Measurement settings of an assemblage state.
    #[arg(long, default_value_t = 3)]
    settings: usize,
}

fn parse_ineq(s: &str) -> std::result::Result<InequalityKind, String> {
    s.parse().map_err(|e: slhs::Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<MeasureVariant, String> {
    s.parse().map_err(|e: slhs::Error| e.to_string())
}

fn parse_channel(s: &str) -> std::result::Result<ChannelKind, String> {
    s.parse().map_err(|e: slhs::Error| e.to_string())
}

/// Text written to the output plus the process exit code.
struct Outcome {
    text: String,
    code: u8,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, code: 0 }
    }

    fn json(v: &Value) -> Self {
        Self::ok(pretty(v))
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn load_state(path: &Path) -> Result<BipartiteState> {
    let text = fs::read_to_string(path).with_context(|| format!("reading state file {}", path.display()))?;
    let state = read_state(&text).and_then(|s| s.into_bipartite());
    state.with_context(|| format!("state file {}", path.display()))
}

fn load_basis(spec: &str, d: usize) -> Result<LocalBasis> {
    match (spec, d) {
        ("z", _) => Ok(LocalBasis::computational(d)),
        ("x", 2) => Ok(LocalBasis::x()),
        ("y", 2) => Ok(LocalBasis::y()),
        ("x" | "y", _) => bail!("basis `{spec}` is only defined for qubits, got dimension {d}"),
        (path, _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading basis file {path}"))?;
            let b = read_basis(&text).with_context(|| format!("basis file {path}"))?;
            if b.dim() != d {
                bail!("basis file {path} has dimension {}, expected {d}", b.dim());
            }
            Ok(b)
        }
    }
}

fn term_rows(terms: &std::collections::BTreeMap<TermKey, f64>) -> Value {
    terms
        .iter()
        .map(|(&(a, a2, b, b2), v)| json!({"a": a, "a_prime": a2, "b": b, "b_prime": b2, "value": v}))
        .collect()
}

fn report_json(r: &InequalityReport) -> Value {
    let mut v = json!({
        "ineq": r.kind.name(),
        "lhs": r.lhs,
        "bound": r.bound,
        "violated": r.violated,
        "terms": term_rows(&r.terms),
    });
    if let Some(search) = r.search {
        v["search"] = serde_json::to_value(search).expect("plain struct");
        v["basis_a"] = basis_json(&r.basis_a);
        v["basis_b"] = basis_json(&r.basis_b);
    }
    v
}

fn basis_json(b: &LocalBasis) -> Value {
    serde_json::from_str(&slhs::qcore::write_basis(b)).expect("basis writer emits JSON")
}

fn cmd_eval(args: &EvalArgs, seed: u64, format: Format) -> Result<Outcome> {
    let s = load_state(&args.state)?;
    let r = if args.optimize {
        max_violation(&s, args.ineq, &args.search.config(seed))?
    } else {
        let ba = load_basis(&args.basis_a, s.dim_a())?;
        let bb = load_basis(&args.basis_b, s.dim_b())?;
        evaluate(&s, args.ineq, &ba, &bb)?
    };
    let text = match format {
        Format::Json => pretty(&report_json(&r)),
        Format::Csv => format!("ineq,lhs,bound,violated\n{},{},{},{}\n", r.kind.name(), r.lhs, r.bound, r.violated),
    };
    Ok(Outcome { text, code: if r.violated { VIOLATED } else { 0 } })
}

fn grid(steps: usize, lo: f64, hi: f64) -> Vec<f64> {
    match steps {
        1 => vec![lo],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

struct SweepRow {
    p: f64,
    alpha_or_d: f64,
    lhs: f64,
    bound: f64,
    violated: bool,
}

fn cmd_sweep(args: &SweepArgs, format: Format) -> Result<Outcome> {
    if args.p_steps == 0 || args.alpha_steps == 0 || args.d.is_empty() {
        bail!("empty grid");
    }
    let ps = grid(args.p_steps, args.p_min, args.p_max);
    let cells: Vec<(f64, f64)> = match args.family {
        SweepFamily::WernerPhi | SweepFamily::WernerPsi => {
            let alphas = args.alpha.map_or_else(|| grid(args.alpha_steps, 0.0, 1.0), |a| vec![a]);
            alphas.iter().flat_map(|&a| ps.iter().map(move |&p| (p, a))).collect()
        }
        SweepFamily::Isotropic => args.d.iter().flat_map(|&d| ps.iter().map(move |&p| (p, d as f64))).collect(),
    };
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(p, x)| {
            let s = match args.family {
                SweepFamily::WernerPhi => werner(&WernerSpec::new(p, x, WernerKind::PhiPlus))?,
                SweepFamily::WernerPsi => werner(&WernerSpec::new(p, x, WernerKind::PsiPlus))?,
                SweepFamily::Isotropic => isotropic(&IsotropicSpec { d: x as usize, p })?,
            };
            let cd = LocalBasis::computational(s.dim_a());
            let r = evaluate(&s, args.ineq, &cd, &cd)?;
            Ok(SweepRow { p, alpha_or_d: x, lhs: r.lhs, bound: r.bound, violated: r.violated })
        })
        .collect::<Result<_>>()?;
    let text = match format {
        Format::Csv => {
            let mut out = String::from("p,alpha_or_d,lhs,bound,violated\n");
            for r in &rows {
                writeln!(out, "{},{},{},{},{}", r.p, r.alpha_or_d, r.lhs, r.bound, r.violated).unwrap();
            }
            out
        }
        Format::Json => pretty(
            &rows
                .iter()
                .map(|r| json!({"p": r.p, "alpha_or_d": r.alpha_or_d, "lhs": r.lhs, "bound": r.bound, "violated": r.violated}))
                .collect(),
        ),
    };
    Ok(Outcome::ok(text))
}

fn cmd_simulate(args: &SimulateArgs, seed: u64) -> Result<Outcome> {
    if args.shots == 0 {
        bail!("--shots must be at least 1");
    }
    if !(0.0..=1.0).contains(&args.noise) {
        bail!("--noise must lie in [0, 1], got {}", args.noise);
    }
    let mut out = json!({"shots": args.shots, "seed": seed, "noise": args.noise});
    for which in Combination::ALL {
        let est = if args.full_magnitude {
            estimate_magnitude(args.shots, seed, args.noise, which)?
        } else {
            estimate_combo(args.shots, seed, args.noise, which)?
        };
        let mut entry = json!({"value": est.value, "stderr": est.stderr});
        if args.counts {
            entry["runs"] = serde_json::to_value(&est.runs)?;
        }
        out[which.name()] = entry;
    }
    out["mode"] = json!(if args.full_magnitude { "magnitude" } else { "real_part" });
    Ok(Outcome::json(&out))
}

fn cmd_selftest(args: &SelftestArgs) -> Result<Outcome> {
    let s = load_state(&args.state)?;
    let a = SelfTestAssumptions::new(load_basis(&args.basis_a, s.dim_a())?, load_basis(&args.basis_b, s.dim_b())?, args.epsilon)?;
    let verdict = certify(&s, &a)?;
    let mut out = serde_json::to_value(verdict)?;
    if verdict.assumptions_met {
        let trace = algebra_trace(&s, &a)?;
        out["algebra_residuals"] = serde_json::to_value(&trace.residuals)?;
    }
    Ok(Outcome::json(&out))
}

fn cmd_measure(args: &MeasureArgs, seed: u64) -> Result<Outcome> {
    let s = load_state(&args.state)?;
    let (ba, bb) = match args.variant {
        MeasureVariant::FixedBasis => (Some(load_basis(&args.basis_a, s.dim_a())?), Some(load_basis(&args.basis_b, s.dim_b())?)),
        _ => (None, None),
    };
    let r = n_measure(&s, args.variant, ba.as_ref(), bb.as_ref(), &args.search.config(seed))?;
    Ok(Outcome::json(&json!({
        "variant": r.variant.name(),
        "value": r.value,
        "converged": r.converged,
        "terms": term_rows(&r.per_term),
    })))
}

fn probe_rows(args: &ProbeArgs, seed: u64) -> Result<Vec<ProbeRow>> {
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let cfg = args.search.config(seed);
    Ok(match args.axiom {
        Axiom::B => axiom_b_trials(seed, args.trials, args.channel, args.variant, &cfg)?,
        Axiom::C => axiom_c_trials(seed, args.trials, args.variant, &cfg)?,
        Axiom::Theorem1 => {
            let report = theorem1_probe(seed, args.trials, &cfg)?;
            report
                .records
                .iter()
                .flat_map(|t| {
                    let kind = if t.paired { format!("{}_paired", t.channel_kind) } else { t.channel_kind.clone() };
                    [("fixed_basis", t.margin_fixed), ("optimized", t.margin_optimized)].map(|(variant, margin)| ProbeRow {
                        trial: t.trial,
                        slack: -margin,
                        variant: variant.into(),
                        channel_kind: kind.clone(),
                    })
                })
                .collect()
        }
    })
}

fn cmd_probe(args: &ProbeArgs, seed: u64, format: Format) -> Result<Outcome> {
    let rows = probe_rows(args, seed)?;
    let text = match format {
        Format::Csv => {
            let mut out = String::from("trial,slack,variant,channel_kind\n");
            for r in &rows {
                writeln!(out, "{},{},{},{}", r.trial, r.slack, r.variant, r.channel_kind).unwrap();
            }
            out
        }
        Format::Json => pretty(&serde_json::to_value(&rows)?),
    };
    Ok(Outcome::ok(text))
}

fn cmd_thresholds(args: &ThresholdsArgs, format: Format) -> Result<Outcome> {
    let tables = args.d.iter().map(|&d| thresholds(d)).collect::<slhs::Result<Vec<_>>>()?;
    let text = match format {
        Format::Csv => {
            let mut out = String::from("d,entangled,steerable,slhs\n");
            for t in &tables {
                writeln!(out, "{},{},{},{}", t.d, t.entangled, t.steerable, t.slhs).unwrap();
            }
            out
        }
        Format::Json if tables.len() == 1 => pretty(&serde_json::to_value(tables[0])?),
        Format::Json => pretty(&serde_json::to_value(&tables)?),
    };
    Ok(Outcome::ok(text))
}

fn cmd_oracle(args: &OracleArgs, seed: u64) -> Result<Outcome> {
    let cfg = args.search.config(seed);
    let out = match args.which {
        OracleKind::BoundMax => serde_json::to_value(bound_oracle(args.d, &cfg)?)?,
        OracleKind::Adversarial => {
            let r = adversarial_search(args.epsilon, args.d, args.d, &cfg)?;
            let state: Value = serde_json::from_str(&write_bipartite(&r.state))?;
            json!({
                "epsilon": args.epsilon,
                "d": args.d,
                "infidelity": r.infidelity,
                "feasible": r.feasible,
                "converged": r.converged,
                "restarts": r.restarts,
                "residuals": serde_json::to_value(r.residuals)?,
                "state": state,
            })
        }
    };
    Ok(Outcome::json(&out))
}

fn cmd_family(args: &FamilyArgs, seed: u64) -> Result<Outcome> {
    let from_bell = |kind| BipartiteState::from_ket(&bell(kind), 2, 2);
    let s = match args.family {
        FamilyKind::PhiPlus => from_bell(BellKind::PhiPlus)?,
        FamilyKind::PhiMinus => from_bell(BellKind::PhiMinus)?,
        FamilyKind::PsiPlus => from_bell(BellKind::PsiPlus)?,
        FamilyKind::PsiMinus => from_bell(BellKind::PsiMinus)?,
        FamilyKind::WernerPhi => werner(&WernerSpec::new(args.p, args.alpha, WernerKind::PhiPlus).with_phase(args.phase))?,
        FamilyKind::WernerPsi => werner(&WernerSpec::new(args.p, args.alpha, WernerKind::PsiPlus).with_phase(args.phase))?,
        FamilyKind::Isotropic => isotropic(&IsotropicSpec { d: args.d, p: args.p })?,
        FamilyKind::Separable => random_separable(seed, args.terms, args.d, args.d)?,
        FamilyKind::Assemblage => lhs_assemblage_state_dims(seed, args.settings, args.d, args.d)?,
        FamilyKind::Mixed => BipartiteState::maximally_mixed(args.d, args.d),
        FamilyKind::Random => BipartiteState::new(random_density(args.d * args.d, seed), args.d, args.d)?,
    };
    Ok(Outcome::ok(write_bipartite(&s)))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SLHS_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("SLHS_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("SLHS_THREADS must be a positive integer, got `{v}`");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Outcome> {
    configure_threads()?;
    let json_only = |name: &str| match cli.format {
        Some(Format::Csv) => bail!("`{name}` only emits JSON"),
        _ => Ok(()),
    };
    match &cli.command {
        Command::Eval(a) => cmd_eval(a, cli.seed, cli.format.unwrap_or(Format::Json)),
        Command::Sweep(a) => cmd_sweep(a, cli.format.unwrap_or(Format::Csv)),
        Command::Simulate(a) => json_only("simulate").and_then(|_| cmd_simulate(a, cli.seed)),
        Command::Selftest(a) => json_only("selftest").and_then(|_| cmd_selftest(a)),
        Command::Measure(a) => json_only("measure").and_then(|_| cmd_measure(a, cli.seed)),
        Command::Probe(a) => cmd_probe(a, cli.seed, cli.format.unwrap_or(Format::Csv)),
        Command::Thresholds(a) => cmd_thresholds(a, cli.format.unwrap_or(Format::Json)),
        Command::Oracle(a) => json_only("oracle").and_then(|_| cmd_oracle(a, cli.seed)),
        Command::Family(a) => json_only("family").and_then(|_| cmd_family(a, cli.seed)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = run(&cli).and_then(|o| {
        match &cli.out {
            Some(path) => fs::write(path, &o.text).with_context(|| format!("writing {}", path.display()))?,
            None => print!("{}", o.text),
        }
        Ok(o.code)
    });
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

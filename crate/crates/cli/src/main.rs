//! `redistrib`: run redistribution mechanisms on bid profiles, print their
//! coefficients, and reproduce the simulation experiments.

mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use redistrib_core::experiments::{evaluate_detailed, load_profiles, DEFAULT_TOLERANCE, DEFAULT_TRIALS};
use redistrib_core::money::parse_decimal;
use redistrib_core::scaling::certificate;
use redistrib_core::{
    adversarial_profile, clarke_payments, figure1_experiment, hetero_alphas, rank_agents, solve_lp,
    wco_coefficients, wco_index, worst_case_index, BidProfile, Error, ExperimentConfig, Generator, Mechanism,
    MechanismKind,
};
use serde_json::{json, Value};

use render::{decimals, exact, exact_list, write_output};

#[derive(Parser, Debug)]
#[command(name = "redistrib", version, about = "Groves redistribution mechanisms for heterogeneous objects")]
struct Cli {
    /// Worker threads for `simulate` and `figure1` (results do not depend on it).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply one mechanism to a profile file and print the outcome.
    Run(RunArgs),
    /// Print the rebate coefficients of a mechanism.
    Coeffs(CoeffsArgs),
    /// Estimate the worst-case redistribution index over a profile stream.
    Simulate(SimulateArgs),
    /// BAILEY-CAVALLO against HETERO for a range of object counts.
    Figure1(Figure1Args),
    /// Rank the agents of a profile.
    Rank(RankArgs),
    /// Write the profile on which every linear rebate returns nothing.
    Adversarial(AdversarialArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    mech: MechanismKind,
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated object weights, scaling mechanism only.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoeffsArgs {
    #[arg(long)]
    mech: MechanismKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    mech: MechanismKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// `uniform:LO:HI`, `binary` or `file:PATH`.
    #[arg(long = "gen", default_value = "uniform:0:100")]
    generator: String,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: u64,
    #[arg(long, env = "REDISTRIB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    gamma: Option<String>,
    /// Draw identical-object profiles for BAILEY-CAVALLO or HETERO.
    #[arg(long)]
    homogeneous: bool,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Figure1Args {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    p_min: usize,
    #[arg(long, default_value_t = 8)]
    p_max: usize,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: u64,
    #[arg(long, env = "REDISTRIB_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV destination; the per-p comparison summary then goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AdversarialArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Where to write the profile; the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_gamma(text: Option<&str>) -> anyhow::Result<Option<Vec<BigRational>>> {
    text.map(|t| {
        t.split(',')
            .map(|x| parse_decimal(x.trim()).with_context(|| format!("gamma entry `{x}` is not a decimal number")))
            .collect()
    })
    .transpose()
}

fn read_profile(path: &Path) -> anyhow::Result<BidProfile<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(BidProfile::from_json(&text)?)
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let gamma = parse_gamma(args.gamma.as_deref())?;
    let profile = read_profile(&args.input)?.to_exact();
    let mechanism = Mechanism::prepare(args.mech, profile.n(), profile.p(), gamma.as_deref())?;
    let eval = evaluate_detailed(&profile, &mechanism)?;
    let out = &eval.outcome;
    let total = out.total_rebate();
    let fraction_exact = out.fraction.map(|_| &total / &out.surplus);
    let report = json!({
        "mechanism": args.mech.name(),
        "n": profile.n(),
        "p": profile.p(),
        "allocation": out
            .allocation
            .pairs
            .iter()
            .map(|&(a, o)| json!({"agent": a + 1, "object": o + 1}))
            .collect::<Vec<_>>(),
        "allocation_value": render::decimal(&out.allocation.value),
        "allocation_value_exact": exact(&out.allocation.value),
        "payments": decimals(&out.payments),
        "payments_exact": exact_list(&out.payments),
        "rebates": decimals(&out.rebates),
        "rebates_exact": exact_list(&out.rebates),
        "surplus": render::decimal(&out.surplus),
        "surplus_exact": exact(&out.surplus),
        "total_rebate": render::decimal(&total),
        "total_rebate_exact": exact(&total),
        "fraction": out.fraction,
        "fraction_exact": fraction_exact.as_ref().map(exact),
    });
    write_output(args.out.as_deref(), &report)
}

fn coeffs(args: CoeffsArgs) -> anyhow::Result<()> {
    let gamma = parse_gamma(args.gamma.as_deref())?;
    if gamma.is_some() && args.mech != MechanismKind::Scaling {
        bail!(Error::InvalidConfig("gamma applies to the scaling mechanism only".into()));
    }
    let (n, p) = (args.n, args.p);
    let report = match args.mech {
        MechanismKind::Wco => {
            let c = wco_coefficients(n, p)?;
            let e = wco_index(n, p)?;
            json!({
                "mechanism": "wco", "n": n, "p": p,
                "first_index": c.first_index,
                "c": exact_list(&c.c), "c_decimal": decimals(&c.c),
                "e_star": exact(&e), "e_star_decimal": render::decimal(&e),
            })
        }
        MechanismKind::Hetero => {
            let h = hetero_alphas(n, p)?;
            let e = wco_index(n, p)?;
            json!({
                "mechanism": "hetero", "n": n, "p": p,
                "alpha": exact_list(&h.alpha), "alpha_decimal": decimals(&h.alpha),
                "e_star": exact(&e), "e_star_decimal": render::decimal(&e),
            })
        }
        MechanismKind::Scaling => {
            let gamma = gamma.ok_or_else(|| Error::InvalidConfig("scaling requires --gamma".into()))?;
            let model = solve_lp(n, p, gamma)?;
            let lp = model.solution()?;
            json!({
                "mechanism": "scaling", "n": n, "p": p,
                "gamma": exact_list(&model.gamma),
                "beta": exact_list(&model.beta),
                "first_index": lp.coefficients.first_index,
                "c": exact_list(&lp.coefficients.c), "c_decimal": decimals(&lp.coefficients.c),
                "x": exact_list(&lp.x),
                "e_star": exact(&lp.e_star), "e_star_decimal": render::decimal(&lp.e_star),
                "upper_bound": model.bound.as_ref().map(exact),
                "upper_bound_decimal": model.bound.as_ref().map(render::decimal),
                "certificate_holds": certificate(&model)?.holds(),
            })
        }
        MechanismKind::BaileyCavallo => {
            bail!(Error::InvalidConfig("bailey_cavallo has no coefficients; r_i = t^{-i}/n".into()))
        }
    };
    write_output(args.out.as_deref(), &report)
}

fn simulate(args: SimulateArgs, workers: Option<usize>) -> anyhow::Result<()> {
    let generator = match args.generator.strip_prefix("file:") {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {path}"))?;
            Generator::Profiles(load_profiles(&text)?)
        }
        None => args.generator.parse()?,
    };
    let mut config = ExperimentConfig::new(args.n, args.p, args.mech, generator);
    config.trials = args.trials;
    config.seed = args.seed;
    config.gamma = parse_gamma(args.gamma.as_deref())?;
    config.homogeneous = args.homogeneous;
    config.tolerance = args.tolerance;
    config.workers = workers;
    let report = worst_case_index(&config)?;
    write_output(args.out.as_deref(), &serde_json::to_value(report)?)
}

fn figure1(args: Figure1Args, workers: Option<usize>) -> anyhow::Result<()> {
    if args.p_min == 0 || args.p_min > args.p_max {
        bail!(Error::InvalidConfig(format!(
            "object range must satisfy 1 <= p-min <= p-max, got {}..={}",
            args.p_min, args.p_max
        )));
    }
    let fig = figure1_experiment(args.n, args.p_min..args.p_max + 1, args.trials, args.seed, workers)?;
    let csv = fig.to_csv()?;
    match &args.out {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
            write_output(None, &json!({ "n": fig.n, "comparisons": fig.comparisons }))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn rank(args: RankArgs) -> anyhow::Result<()> {
    let profile = read_profile(&args.input)?.to_exact();
    let ranking = rank_agents(&profile)?;
    let classes: Vec<Vec<usize>> = ranking
        .classes
        .iter()
        .map(|c| c.iter().map(|a| a + 1).collect())
        .collect();
    let order = classes
        .iter()
        .map(|c| c.iter().map(usize::to_string).collect::<Vec<_>>().join(" = "))
        .collect::<Vec<_>>()
        .join(" > ");
    write_output(args.out.as_deref(), &json!({ "classes": classes, "order": order }))
}

fn adversarial(args: AdversarialArgs) -> anyhow::Result<()> {
    let profile = adversarial_profile(args.n, args.p)?;
    let clarke = clarke_payments(&profile, profile.agents());
    let file = profile.to_file();
    if let Some(path) = &args.out {
        fs::write(path, file.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let report = json!({
        "n": args.n,
        "p": args.p,
        "profile": file,
        "payments": decimals(&clarke.payments),
        "payments_exact": exact_list(&clarke.payments),
        "surplus": render::decimal(&clarke.surplus),
        "surplus_exact": exact(&clarke.surplus),
    });
    write_output(None, &report)
}

fn error_json(err: &anyhow::Error) -> Value {
    let kind = match err.downcast_ref::<Error>() {
        Some(e) => e.kind(),
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None if err.downcast_ref::<serde_json::Error>().is_some() => "serialization",
        None => "invalid_input",
    };
    json!({ "error": { "kind": kind, "message": format!("{err:#}") } })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = json!({ "error": { "kind": "usage", "message": e.to_string().trim_end() } });
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    let workers = cli.workers.map(|w| w as usize);
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Coeffs(a) => coeffs(a),
        Command::Simulate(a) => simulate(a, workers),
        Command::Figure1(a) => figure1(a, workers),
        Command::Rank(a) => rank(a),
        Command::Adversarial(a) => adversarial(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

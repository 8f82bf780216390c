use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nailfem::driver::{nailfem_run, RunConfig, RunHistory};
use nailfem::fespace::FESpace;
use nailfem::mesh::{Domain, Triangulation};
use nailfem::output::{history_csv, summarize};
use nailfem::poly::Poly2;
use nailfem::problem::{Diffusion, Reaction, SemilinearProblem};
use nailfem::verify::{self, PropertyReport, DEFAULT_SEED};

/// Adaptive finite elements with an adaptively damped Newton solver.
#[derive(Debug, Parser)]
#[command(name = "nailfem", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the property suite and print a JSON array of reports.
    Verify {
        /// Skip the full benchmark runs.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Args, Default)]
struct RunArgs {
    /// `case1`, `case2`, or `custom` (coefficients from the config file).
    #[arg(long)]
    problem: Option<String>,
    /// Polynomial degree (1..=4).
    #[arg(long)]
    p: Option<usize>,
    /// Dörfler parameter in (0, 1].
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "lambda-lin")]
    lambda_lin: Option<f64>,
    /// Minimal number of Newton steps per level.
    #[arg(long)]
    kmin: Option<usize>,
    #[arg(long = "max-triangles")]
    max_triangles: Option<usize>,
    /// Bound on the cumulative cost (sum of triangle counts over Newton steps).
    #[arg(long = "max-cost")]
    max_cost: Option<f64>,
    /// Stop once the estimator drops below this value.
    #[arg(long)]
    tol: Option<f64>,
    /// Refine all elements instead of marking.
    #[arg(long)]
    uniform: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial mesh in the text format.
    #[arg(long)]
    mesh: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "problem", "p", "theta", "lambda_lin", "kmin", "max_triangles", "max_cost", "tol", "uniform", "out", "mesh",
    "max_levels", "max_newton_steps", "domain", "a11", "a12", "a22", "b1", "b2", "f", "reaction", "reaction_order",
    "reaction_scale", "reaction_coeffs",
];

fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", i + 1);
        };
        let key = k.trim().replace('-', "_");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("config line {}: unknown key `{key}`", i + 1);
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| anyhow::anyhow!("config key `{key}`: invalid value `{v}`: {e}")),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.map.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

fn custom_problem(s: &Settings, base: Option<SemilinearProblem>) -> Result<SemilinearProblem> {
    let base = base.unwrap_or_else(|| SemilinearProblem::linear(Domain::LShape, 0.0, 1.0));
    let domain = s.get::<String>("domain")?.map(|d| Domain::parse_tag(&d)).unwrap_or(base.domain.clone());
    let a0 = base.diffusion.at(0);
    let a12 = s.get("a12")?.unwrap_or(a0[0][1]);
    let a = [[s.get("a11")?.unwrap_or(a0[0][0]), a12], [a12, s.get("a22")?.unwrap_or(a0[1][1])]];
    let b = [s.get("b1")?.unwrap_or(base.convection[0]), s.get("b2")?.unwrap_or(base.convection[1])];
    let load = s.list("f")?.map(|c| Poly2::from_graded(&c)).unwrap_or(base.load.clone());
    let reaction = match s.get::<String>("reaction")?.as_deref() {
        None => match (&base.reaction, s.get::<usize>("reaction_order")?, s.get::<f64>("reaction_scale")?) {
            (Reaction::TruncatedExp { order, scale }, o, sc) => {
                Reaction::TruncatedExp { order: o.unwrap_or(*order), scale: sc.unwrap_or(*scale) }
            }
            (r, _, _) => r.clone(),
        },
        Some("none") => Reaction::Zero,
        Some("exp") => Reaction::TruncatedExp {
            order: s.get("reaction_order")?.unwrap_or(11),
            scale: s.get("reaction_scale")?.unwrap_or(40.0),
        },
        Some("poly") => Reaction::Polynomial(
            s.list("reaction_coeffs")?.context("config key `reaction_coeffs` is required for reaction = poly")?,
        ),
        Some(other) => bail!("config key `reaction`: expected exp, poly or none, got `{other}`"),
    };
    SemilinearProblem::new(
        base.name.clone(),
        domain,
        Diffusion::Constant(a),
        b,
        reaction,
        load,
        base.flux.clone(),
    )
    .context("invalid problem configuration")
}

fn build_config(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut map = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in config {}", path.display()))?
        }
        None => BTreeMap::new(),
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("problem", args.problem.clone());
    set("p", args.p.map(|v| v.to_string()));
    set("theta", args.theta.map(|v| v.to_string()));
    set("lambda_lin", args.lambda_lin.map(|v| v.to_string()));
    set("kmin", args.kmin.map(|v| v.to_string()));
    set("max_triangles", args.max_triangles.map(|v| v.to_string()));
    set("max_cost", args.max_cost.map(|v| v.to_string()));
    set("tol", args.tol.map(|v| v.to_string()));
    set("out", args.out.as_ref().map(|v| v.display().to_string()));
    set("mesh", args.mesh.as_ref().map(|v| v.display().to_string()));
    if args.uniform {
        set("uniform", Some("true".into()));
    }
    let s = Settings { map };

    let tag = s.get::<String>("problem")?.unwrap_or_else(|| "case1".into());
    let base = match tag.as_str() {
        "case1" => Some(SemilinearProblem::case1()),
        "case2" => Some(SemilinearProblem::case2()),
        "custom" => None,
        other => bail!("config key `problem`: unknown problem `{other}` (expected case1, case2 or custom)"),
    };
    let has_custom = ["domain", "a11", "a12", "a22", "b1", "b2", "f", "reaction", "reaction_order", "reaction_scale", "reaction_coeffs"]
        .iter()
        .any(|k| s.map.contains_key(*k));
    let problem = match base {
        Some(p) if !has_custom => p,
        base => {
            let mut p = custom_problem(&s, base)?;
            p.name = tag.clone();
            p
        }
    };

    let mut cfg = RunConfig::new(problem, s.get("p")?.unwrap_or(1));
    if let Some(v) = s.get("theta")? {
        cfg.theta = v;
    }
    if let Some(v) = s.get("lambda_lin")? {
        cfg.lambda_lin = v;
    }
    if let Some(v) = s.get("kmin")? {
        cfg.k_min = v;
    }
    cfg.max_triangles = s.get("max_triangles")?;
    if let Some(v) = s.get("max_cost")? {
        cfg.max_cost = Some(v);
    }
    cfg.tol = s.get("tol")?;
    cfg.max_levels = s.get("max_levels")?;
    if let Some(v) = s.get("max_newton_steps")? {
        cfg.max_newton_steps = v;
    }
    cfg.uniform = s.get("uniform")?.unwrap_or(false);
    if let Some(path) = s.get::<PathBuf>("mesh")? {
        cfg.mesh = Some(Triangulation::read(&path).with_context(|| format!("reading mesh {}", path.display()))?);
    }
    cfg.validate()?;
    let out = s.get::<PathBuf>("out")?.unwrap_or_else(|| PathBuf::from("nailfem-out"));
    Ok((cfg, out))
}

fn write_outputs(h: &RunHistory, out: &Path) -> Result<()> {
    let meshes = out.join("meshes");
    fs::create_dir_all(&meshes).with_context(|| format!("creating {}", meshes.display()))?;
    fs::write(out.join("history.csv"), history_csv(h)).context("writing history.csv")?;
    for (ell, level) in h.levels.iter().enumerate() {
        level.mesh.write(&meshes.join(format!("level_{ell}.txt"))).with_context(|| format!("writing mesh of level {ell}"))?;
    }
    let summary = serde_json::to_string_pretty(&summarize(h))?;
    fs::write(out.join("summary.json"), summary + "\n").context("writing summary.json")?;
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let (cfg, out) = build_config(args)?;
    match nailfem_run(&cfg) {
        Ok(h) => {
            write_outputs(&h, &out)?;
            let s = summarize(&h);
            eprintln!(
                "{}: {} levels, {} triangles, {} Newton steps, final estimator {:.3e}; output in {}",
                cfg.problem.name,
                s.levels,
                s.final_triangles,
                s.total_newton_steps,
                s.final_estimator.unwrap_or(f64::NAN),
                out.display()
            );
            Ok(())
        }
        Err(failure) => {
            write_outputs(&failure.history, &out)?;
            Err(failure.error).context(format!("run failed; partial history written to {}", out.display()))
        }
    }
}

fn verify_suite(quick: bool, seed: u64) -> Result<Vec<PropertyReport>> {
    let mut reports = Vec::new();
    let linear = SemilinearProblem::linear(Domain::LShape, 1.0, 1.0);
    let case1 = SemilinearProblem::case1();
    let mesh = Arc::new(Triangulation::initial(&Domain::LShape)?.uniform_refine()?.uniform_refine()?);
    reports.push(verify::check_linearization_equivalence(&linear, &FESpace::new(mesh.clone(), 1)?, 50, seed, 10.0)?);
    reports.push(verify::check_linearization_equivalence(&case1, &FESpace::new(mesh, 1)?, 50, seed, 1e3)?);
    let laplace = SemilinearProblem::linear(Domain::LShape, 0.0, 1.0);
    reports.push(verify::check_axiom_a1_a2(&laplace, 1, seed)?);
    reports.push(verify::check_axiom_a1_a2(&laplace, 2, seed)?);
    reports.push(verify::check_axiom_a1_a2(&case1, 1, seed)?);
    if !quick {
        for (p, uniform, max_t) in [(1, false, 5000), (2, false, 5000), (2, true, 20000)] {
            let mut cfg = RunConfig::new(SemilinearProblem::case1(), p);
            cfg.uniform = uniform;
            cfg.max_triangles = Some(max_t);
            reports.extend(verify::check_full_run(&cfg)?);
        }
    }
    Ok(reports)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Verify { quick, seed }) => verify_suite(quick, seed).and_then(|reports| {
            println!("{}", serde_json::to_string_pretty(&reports)?);
            if reports.iter().all(|r| r.passed) {
                Ok(())
            } else {
                bail!("{} of {} property checks failed", reports.iter().filter(|r| !r.passed).count(), reports.len())
            }
        }),
        None => run(&cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

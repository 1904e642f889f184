//! `almostq`: membership checks, Bell optimization, wirings and reproduction
//! reports from the command line.
//!
//! Exit codes: 0 for a member (or a passing report), 1 for a non-member (or a
//! failing report), 2 for any error.

mod report;
mod repro;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use almostq::io::{BoxFile, CertificateFile, FunctionalFile, Sense};
use almostq::membership::{
    lp_local_membership, maximize_local, maximize_no_signalling, optimize_linear, psd_margin, Margin, MEMBER_TOL,
};
use almostq::moment::{Binding, MomentProblem};
use almostq::principles::{find_lo_violation, DEFAULT_LO_SET_SIZE};
use almostq::quantum::sample_quantum_box;
use almostq::wirings::{coarse_grain, compose, group_parties, post_select, WiringSpec};
use almostq::{Box64, Level, Scenario};
use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use report::{Item, Report};

#[derive(Parser)]
#[command(
    name = "almostq",
    version,
    about = "Almost-quantum and Q1 correlations: membership, Bell optimization, wirings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LevelArg {
    /// Almost-quantum set.
    Aq,
    /// Single-party moment matrix.
    Q1,
    /// Local polytope.
    Local,
    /// No-signalling polytope (bell only).
    Ns,
}

impl LevelArg {
    fn relaxation(self) -> Option<Level> {
        match self {
            LevelArg::Aq => Some(Level::AlmostQuantum),
            LevelArg::Q1 => Some(Level::Q1),
            LevelArg::Local | LevelArg::Ns => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide membership of a box.
    Check {
        /// Box file.
        path: PathBuf,
        #[arg(long, value_enum, default_value = "aq")]
        level: LevelArg,
        /// Largest negative margin still counted as membership.
        #[arg(long, default_value_t = MEMBER_TOL)]
        tol: f64,
        /// Write the moment matrix found by the solver here.
        #[arg(long)]
        emit_certificate: Option<PathBuf>,
        /// Write a JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize a Bell functional.
    Bell {
        /// Functional file.
        path: PathBuf,
        #[arg(long, value_enum, default_value = "aq")]
        level: LevelArg,
        /// Write the optimizing box here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the optimal moment matrix here.
        #[arg(long)]
        emit_certificate: Option<PathBuf>,
    },
    /// Recompute a reference result and compare.
    Repro {
        #[arg(value_enum)]
        target: repro::Target,
        /// Directory for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid points per angle for the quantum scan.
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// First seed for randomly drawn tasks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Combine boxes: compose them in order, post-select, group parties
    /// under a wiring spec, then coarse-grain.
    Wire {
        /// Box files.
        #[arg(required = true)]
        boxes: Vec<PathBuf>,
        /// Wiring spec file.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// `party:input:output`, repeatable; applied left to right.
        #[arg(long = "post-select")]
        post_select: Vec<String>,
        /// `party:m0,m1,...` mapping old outputs to new ones, repeatable.
        #[arg(long = "coarse-grain")]
        coarse_grain: Vec<String>,
        /// Output box file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heaviest set of pairwise locally orthogonal events.
    Lo {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LO_SET_SIZE)]
        max_clique: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a two-qubit quantum box.
    Sample {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Check { path, level, tol, emit_certificate, out } => {
            check(&path, level, tol, emit_certificate.as_deref(), out.as_deref())
        }
        Command::Bell { path, level, out, emit_certificate } => {
            bell(&path, level, out.as_deref(), emit_certificate.as_deref())
        }
        Command::Repro { target, out, grid, seed } => {
            if grid < 64 {
                bail!("grid must be at least 64, got {grid}");
            }
            let report = repro::run(target, &repro::Options { grid, seed })?;
            report.print();
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let name = target.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
                report.write(&dir.join(format!("{name}.json")))?;
            }
            Ok(report.passed)
        }
        Command::Wire { boxes, spec, post_select, coarse_grain, out } => {
            wire(&boxes, spec.as_deref(), &post_select, &coarse_grain, out.as_deref())?;
            Ok(true)
        }
        Command::Lo { path, max_clique, out } => lo(&path, max_clique, out.as_deref()),
        Command::Sample { seed, out } => {
            let b = sample_quantum_box(&Scenario::chsh(), seed)?;
            emit_box(&b, out.as_deref())?;
            Ok(true)
        }
    }
}

fn load_box(path: &Path) -> anyhow::Result<Box64> {
    Ok(BoxFile::read(path)?.to_box()?)
}

fn emit_box(b: &Box64, out: Option<&Path>) -> anyhow::Result<()> {
    let file = BoxFile::from_box(b);
    match out {
        Some(p) => file.write(p)?,
        None => println!("{}", serde_json::to_string_pretty(&file)?),
    }
    Ok(())
}

fn check(path: &Path, level: LevelArg, tol: f64, cert: Option<&Path>, out: Option<&Path>) -> anyhow::Result<bool> {
    let b = load_box(path)?;
    let mut report =
        Report::new(format!("check --level {level:?}").to_lowercase(), json!({ "path": path, "tol": tol }));
    let validation = b.validate();
    if !validation.is_valid() {
        println!("not a no-signalling box: {}", validation.summary());
        report.push(Item::check("no-signalling box", validation.worst(), None, "valid within 1e-6", false));
    } else if let Some(lvl) = level.relaxation() {
        let mp = MomentProblem::build(b.scenario(), lvl, Binding::FixedBox(b.clone()))?;
        let m = psd_margin(&mp)?;
        let member = m.lambda >= -tol;
        println!("{}: psd margin {:.6e}", if member { "member" } else { "not a member" }, m.lambda);
        report.push(Item::check("psd margin", m.lambda, None, format!(">= -{tol:e}"), member));
        if let Some(p) = cert {
            CertificateFile::new(&mp, &m).write(p)?;
        }
    } else {
        if level == LevelArg::Ns {
            bail!("use the box validation for no-signalling membership");
        }
        if cert.is_some() {
            bail!("certificates exist only for the aq and q1 levels");
        }
        let lm = lp_local_membership(&b)?;
        let member = lm.margin >= -tol;
        println!("{}: local margin {:.6e}", if member { "member" } else { "not a member" }, lm.margin);
        report.push(Item::check("local margin", lm.margin, None, format!(">= -{tol:e}"), member));
    }
    if let Some(p) = out {
        report.write(p)?;
    }
    Ok(report.passed)
}

fn bell(path: &Path, level: LevelArg, out: Option<&Path>, cert: Option<&Path>) -> anyhow::Result<bool> {
    let file = FunctionalFile::read(path)?;
    let f = file.to_functional()?;
    let minimize = file.sense == Sense::Min;
    let sense = if minimize { "minimum" } else { "maximum" };
    let Some(lvl) = level.relaxation() else {
        if out.is_some() || cert.is_some() {
            bail!("--out and --emit-certificate need the aq or q1 level");
        }
        let solve = |g: &almostq::BellFunctional| match level {
            LevelArg::Local => maximize_local(g),
            _ => maximize_no_signalling(g),
        };
        let value = if minimize { -solve(&f.negated())? } else { solve(&f)? };
        println!("{sense}: {value:.10}");
        return Ok(true);
    };
    let mp = MomentProblem::build(f.scenario(), lvl, Binding::FreeBox)?;
    let opt = optimize_linear(&mp, &f, minimize)?;
    println!("{sense}: {:.10}", opt.value);
    if let Some(p) = out {
        let b = opt.optimizer.as_ref().context("this level does not determine an optimizing box")?;
        BoxFile::from_box(b).write(p)?;
    }
    if let Some(p) = cert {
        let lambda = opt.gamma.symmetric_eigenvalues().min();
        let margin = Margin { lambda, gamma: opt.gamma.clone(), iterations: opt.iterations };
        CertificateFile::new(&mp, &margin).write(p)?;
    }
    Ok(true)
}

fn parse_indices(text: &str, sep: char) -> anyhow::Result<Vec<usize>> {
    text.split(sep)
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad number '{t}' in '{text}'")))
        .collect()
}

fn wire(
    paths: &[PathBuf],
    spec: Option<&Path>,
    selects: &[String],
    merges: &[String],
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut boxes = paths.iter().map(|p| {
        let b = load_box(p)?;
        b.ensure_valid().with_context(|| format!("{}", p.display()))?;
        Ok::<_, anyhow::Error>(b)
    });
    let mut b = boxes.next().context("no boxes given")??;
    for next in boxes {
        b = compose(&b, &next?)?;
    }
    for s in selects {
        let v = parse_indices(s, ':')?;
        let [k, x, a] = v[..] else { bail!("post-select expects party:input:output, got '{s}'") };
        b = post_select(&b, k, x, a)?;
    }
    if let Some(p) = spec {
        let spec: WiringSpec = almostq::io::read_json(p)?;
        b = group_parties(&b, &spec)?;
    }
    for m in merges {
        let (k, map) = m.split_once(':').with_context(|| format!("coarse-grain expects party:m0,m1,..., got '{m}'"))?;
        let k = k.trim().parse::<usize>().with_context(|| format!("bad party in '{m}'"))?;
        b = coarse_grain(&b, k, &parse_indices(map, ',')?)?;
    }
    emit_box(&b, out)
}

fn lo(path: &Path, max_clique: usize, out: Option<&Path>) -> anyhow::Result<bool> {
    let b = load_box(path)?;
    b.ensure_valid()?;
    let (value, events) = find_lo_violation(&b, max_clique)?;
    let ok = value <= 1.0 + 1e-6;
    println!("largest orthogonal sum {value:.9} over {} events{}", events.len(), if ok { "" } else { ": violates 1" });
    for e in &events {
        println!("  {e}  {:.9}", b.marginal(e));
    }
    if let Some(p) = out {
        let mut report = Report::new(
            "lo",
            json!({ "path": path, "max_clique": max_clique, "events": events.iter().map(|e| e.to_string()).collect::<Vec<_>>() }),
        );
        report.push(Item::check("orthogonal sum", value, Some(1.0), "<= 1 + 1e-6", ok));
        report.write(p)?;
    }
    Ok(ok)
}

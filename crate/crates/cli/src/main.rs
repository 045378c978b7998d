use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dcmm::bench::{emit_csv, run_sweep, SweepConfig};
use dcmm::estimator::{EigenMethod, MixedScore};
use dcmm::loss::loss_report;
use dcmm::lowerbound::{build_hypotheses, build_hypotheses_auto, certify, theoretical_c0};
use dcmm::model::{DegreeVector, MembershipDoc, MembershipMatrix, MixingMatrix, ModelParams};
use dcmm::sampler::{generate_theta, sample_graph, SampleSeed, SparseGraph, ThetaProfile};

#[derive(Parser)]
#[command(name = "dcmm", version, about = "Degree-corrected mixed membership networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Dense,
    Lanczos,
}

impl From<MethodArg> for EigenMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => EigenMethod::Auto,
            MethodArg::Dense => EigenMethod::Dense,
            MethodArg::Lanczos => EigenMethod::Lanczos,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph from a parameter file and write it as an edge list.
    Generate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate memberships from an edge list with Mixed-SCORE.
    Estimate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long = "K")]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Diagnostics file; defaults to `<out>.diagnostics.json`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        eigen_method: MethodArg,
        #[arg(long)]
        refine_steps: Option<usize>,
        #[arg(long)]
        drop_quantile: Option<f64>,
    },
    /// Compare an estimate with the truth and print both losses.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        /// JSON array of degrees, or a parameter file containing `theta`.
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        per_node: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the packing family and check the separation and divergence conditions.
    PackingVerify {
        #[arg(long)]
        n: usize,
        #[arg(long = "K")]
        k: usize,
        /// Mixing matrix as inline JSON or a path to a JSON file.
        #[arg(long = "P")]
        p: String,
        #[arg(long, default_value = "constant:0.5")]
        theta_profile: ThetaProfile,
        #[arg(long)]
        target_mean: Option<f64>,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 0.1)]
        c0: f64,
        /// Fail instead of halving c0 when the family is invalid.
        #[arg(long)]
        fixed_c0: bool,
        #[arg(long = "J-cap", default_value_t = 256)]
        j_cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Separation constant for condition (i); defaults to the guaranteed value.
        #[arg(long = "C0")]
        sep_c0: Option<f64>,
        #[arg(long, default_value_t = 0.125)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full family as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep and write trial and summary CSVs.
    RateSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_membership(path: &Path) -> Result<MembershipMatrix> {
    let doc: MembershipDoc =
        serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(doc.try_into()?)
}

fn read_theta(path: &Path) -> Result<DegreeVector> {
    let value: serde_json::Value =
        serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let array = match &value {
        serde_json::Value::Array(_) => &value,
        serde_json::Value::Object(map) => map
            .get("theta")
            .with_context(|| format!("{} has no \"theta\" field", path.display()))?,
        _ => bail!("{}: expected an array or an object with \"theta\"", path.display()),
    };
    let theta: Vec<f64> = serde_json::from_value(array.clone())?;
    Ok(DegreeVector::new(theta)?)
}

fn parse_matrix(arg: &str) -> Result<Vec<Vec<f64>>> {
    let text = if arg.trim_start().starts_with('[') {
        arg.to_string()
    } else {
        read_text(Path::new(arg))?
    };
    serde_json::from_str(&text).context("parsing mixing matrix")
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { params, seed, stream, out } => {
            let params = ModelParams::from_json(&read_text(&params)?)
                .with_context(|| format!("loading {}", params.display()))?;
            let graph = sample_graph(&params, SampleSeed::new(seed, stream))?;
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            graph.write_edge_list(&mut w)?;
            w.flush()?;
            eprintln!("wrote {} nodes, {} edges to {}", graph.n(), graph.n_edges(), out.display());
        }
        Command::Estimate {
            graph,
            k,
            seed,
            out,
            diagnostics,
            eigen_method,
            refine_steps,
            drop_quantile,
        } => {
            let file = fs::File::open(&graph).with_context(|| format!("opening {}", graph.display()))?;
            let g = SparseGraph::read_edge_list(BufReader::new(file))
                .with_context(|| format!("reading {}", graph.display()))?;
            let mut ms = MixedScore::default();
            ms.eigen.method = eigen_method.into();
            if let Some(s) = refine_steps {
                ms.refine_steps = s;
            }
            if let Some(q) = drop_quantile {
                ms.drop_quantile = q;
            }
            let fit = ms.estimate(&g, k, seed)?;
            write_text(Some(&out), &serde_json::to_string_pretty(&MembershipDoc::from(&fit.pi_hat))?)?;
            let side = diagnostics.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".diagnostics.json");
                PathBuf::from(s)
            });
            write_text(Some(&side), &serde_json::to_string_pretty(&fit.diagnostics())?)?;
        }
        Command::Evaluate {
            truth,
            estimate,
            theta,
            per_node,
            out,
        } => {
            let truth = read_membership(&truth)?;
            let estimate = read_membership(&estimate)?;
            let theta = read_theta(&theta)?;
            let report = loss_report(&estimate, &truth, &theta, per_node)?;
            write_text(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
        }
        Command::PackingVerify {
            n,
            k,
            p,
            theta_profile,
            target_mean,
            c,
            c0,
            fixed_c0,
            j_cap,
            seed,
            sep_c0,
            beta,
            out,
            dump,
        } => {
            let p = MixingMatrix::new(parse_matrix(&p)?)?;
            if p.k() != k {
                bail!("P is {0}x{0} but K = {k}", p.k());
            }
            let theta = generate_theta(n, &theta_profile, target_mean, SampleSeed::new(seed, 1))?;
            let family = if fixed_c0 {
                build_hypotheses(&theta, &p, c, c0, j_cap, seed)?
            } else {
                build_hypotheses_auto(&theta, &p, c, c0, j_cap, seed)?
            };
            let target = sep_c0.unwrap_or_else(|| theoretical_c0(&family));
            let report = certify(&family, target, beta)?;
            write_text(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            if let Some(path) = dump {
                write_text(Some(&path), &serde_json::to_string(&family.dump())?)?;
            }
        }
        Command::RateSweep { config, out_dir, workers } => {
            let cfg = SweepConfig::from_json(&read_text(&config)?)
                .with_context(|| format!("loading {}", config.display()))?;
            let dir = out_dir
                .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
                .context("no output directory: pass --out-dir or set out_dir in the config")?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.unwrap_or(0))
                .build()?;
            let result = pool.install(|| run_sweep(&cfg))?;
            emit_csv(&result, &dir)?;
            for cell in &result.cells {
                eprintln!(
                    "cell {}: n = {}, mean L = {:?}, failures = {}/{}{}",
                    cell.cell,
                    cell.n,
                    cell.mean_loss_weighted,
                    cell.failures,
                    cell.trials,
                    if cell.valid { "" } else { " (invalid)" }
                );
            }
            match result.slope {
                Some(s) => eprintln!("slope {:.4} +/- {:.4}", s.slope, s.ci_halfwidth),
                None => eprintln!("slope not available"),
            }
            if !result.all_valid() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! `cantor`: batch front end for cantor-core.
//!
//! Every subcommand writes plot-ready CSV (or JSON) to `--out` or stdout. With
//! `--out`, a run manifest lands next to the output as `<out>.manifest.json`
//! and `cantor replay --manifest ...` reruns it, checking the bytes match.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use output::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "cantor",
    version,
    about = "Spectral geometry and diffusion on ultrametric Cantor sets"
)]
struct Cli {
    /// Worker threads for parallel sections
    #[arg(long, env = "CANTOR_THREADS", global = true)]
    threads: Option<usize>,

    /// JSON file whose keys mirror the flags, plus "command" (e.g. "msd" or "tree gen")
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output file (stdout when absent; no manifest is written then)
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate or check tree files
    #[command(subcommand)]
    Tree(TreeCommand),
    /// ζ(s) = Σ_v weight(v)^s on a grid of s
    Zeta(ZetaArgs),
    /// Abscissa of convergence and box dimension
    Dim(DimArgs),
    /// Canonical measure of every cylinder
    Measure(MeasureArgs),
    /// Eigenvalues of −Δ_s at a truncation level
    Spectrum(SpectrumArgs),
    /// Heat-kernel coefficients a_n(t, s) and the jump-level law
    Heat(HeatArgs),
    /// Mean displacement E d(X_0, X_t)^β, analytic and Monte-Carlo
    Msd(MsdArgs),
    /// Vladimirov operator D² by the direct sum and by the Laplacian quotient
    Vladimirov(VladimirovArgs),
    /// ℓ² coordinates of boundary points
    Embed(EmbedArgs),
    /// Subdominant ultrametric and dendrogram of a finite metric
    Ultrametrize(UltrametrizeArgs),
    /// Rerun a recorded job and check the outputs are byte-identical
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeCommand {
    /// Build a generator-tagged tree
    Gen(TreeGenArgs),
    /// Print the validation report; exit 2 when the tree is not valid
    Validate(TreeValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    Uniform,
    Ifs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TreeGenArgs {
    #[arg(long, value_enum)]
    pub kind: TreeKind,
    /// uniform: "branching,ratio"; ifs: "r1,r2,...". Ratios accept fractions like 1/3
    #[arg(long)]
    pub params: String,
    #[arg(long)]
    pub depth: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TreeValidateArgs {
    /// Tree file, or a generator spec: triadic:N, uniform:B:R:N, ifs:r1,r2,...:N
    #[arg(long)]
    pub tree: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ZetaArgs {
    #[arg(long)]
    pub tree: String,
    /// Points s; "s0", "s0+x" and "s0-x" are relative to the abscissa
    #[arg(long = "s", value_delimiter = ',')]
    pub s: Vec<String>,
    /// lin:a:b:n or log:a:b:n (bounds may use the s0 sentinel)
    #[arg(long)]
    pub sgrid: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct DimArgs {
    #[arg(long)]
    pub tree: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct MeasureArgs {
    #[arg(long)]
    pub tree: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SpectrumArgs {
    /// Defaults to the triadic Cantor tree truncated at --depth
    #[arg(long)]
    pub tree: Option<String>,
    #[arg(long = "s", default_value = "s0")]
    pub s: String,
    #[arg(long)]
    pub depth: u32,
    /// Use the triadic closed form instead of the numeric eigensolve
    #[arg(long)]
    pub closed_form: bool,
    /// Directory for cached numeric spectra, keyed by (tree hash, s, depth)
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct HeatArgs {
    #[arg(long)]
    pub t: f64,
    #[arg(long = "s", default_value = "s0")]
    pub s: String,
    /// Truncation tolerance relative to the accumulated mass
    #[arg(long, default_value_t = 1e-15)]
    pub tol: f64,
    /// Emit at least this many levels
    #[arg(long, default_value_t = 0)]
    pub levels: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct MsdArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long = "s", default_value = "s0")]
    pub s: String,
    /// log:a:b:n, lin:a:b:n or a comma-separated list
    #[arg(long)]
    pub tgrid: String,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Truncation depth of the simulated triadic tree
    #[arg(long, default_value_t = 16)]
    pub depth: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct VladimirovArgs {
    /// haar:<ω> (binary word ending in 1, on level |ω|) or values:v0,v1,... (2^k values)
    #[arg(long)]
    pub f: String,
    /// Level of the Laplacian used by the quotient route
    #[arg(long)]
    pub depth: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub tree: String,
    /// Boundary point as a word of child indices, e.g. 0110 or 0.2.1
    #[arg(long = "word", required = true)]
    pub words: Vec<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct UltrametrizeArgs {
    /// Header-free n×n CSV distance matrix
    #[arg(long)]
    pub metric: PathBuf,
    /// Also write the subdominant ultrametric as CSV
    #[arg(long)]
    pub delta_out: Option<PathBuf>,
    /// Dendrogram tree JSON (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the main output here instead of the recorded path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse() -> Result<Cli, Failure> {
    let cli = Cli::parse();
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    if cli.command.is_some() {
        return Err(Failure::validation(anyhow::anyhow!(
            "--config replaces the subcommand; give one or the other"
        )));
    }
    let mut argv = vec!["cantor".to_string()];
    argv.extend(output::config_argv(path)?);
    let mut expanded = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    expanded.threads = cli.threads.or(expanded.threads);
    Ok(expanded)
}

fn main() -> ExitCode {
    let outcome = parse().and_then(|cli| {
        if let Some(n) = cli.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::validation(anyhow::anyhow!("--threads {n}: {e}")))?;
        }
        let command = cli.command.ok_or_else(|| {
            Failure::validation(anyhow::anyhow!("no subcommand given (see --help)"))
        })?;
        commands::execute(command)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

//! Command-line flags and their validation into a [`RunConfig`].

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use renyi_ot::experiments::{MarginalFamily, SolverSettings, VoterMetric};
use renyi_ot::solver::{DualConfig, MirrorDescentConfig, PremetricConfig, StepRule};
use renyi_ot::{RegularizerSpec, SinkhornConfig};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "renyi-ot", version, about = "Rényi-regularized optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one transport problem and write the plan or a full report.
    Solve(SolveArgs),
    /// Scale a positive matrix onto the transport polytope of the marginals.
    Project(ProjectArgs),
    /// Solve the Rényi problem over a grid of (alpha, eps).
    Sweep(SweepArgs),
    /// Compare several regularizers against the exact plan.
    Compare(CompareArgs),
    /// Estimate voter migration between two elections.
    Voter(VoterArgs),
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true).args(["marginals", "generate"])))]
pub struct MarginalArgs {
    /// CSV with header `index,r,c`.
    #[arg(long, value_name = "PATH", value_parser = existing_file)]
    pub marginals: Option<PathBuf>,
    /// Generate both marginals on a grid instead of reading them.
    #[arg(long, value_enum)]
    pub generate: Option<Generated>,
    /// Grid size for generated marginals.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Seed for random marginals.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the marginals as `index,r,c` CSV.
    #[arg(long, value_name = "PATH")]
    pub dump_marginals: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generated {
    /// Normal densities with means 0.35 and 0.65, std 0.1.
    Gaussian,
    /// Poisson mixtures with rates {0.3n, 0.7n} and {0.1n, 0.5n}.
    Poisson,
    Uniform,
    /// Independent uniform weights from the seed.
    Random,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Cost matrix: sqeuclid, sqeuclid-scaled, euclid or file:PATH.
    #[arg(long, default_value = "sqeuclid", value_parser = CostSource::from_str)]
    pub cost: CostSource,
    /// Multiplies the cost matrix; equivalent to dividing eps by the same factor.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub cost_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostSource {
    SqEuclid,
    SqEuclidScaled,
    Euclid,
    File(PathBuf),
}

impl FromStr for CostSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sqeuclid" => Ok(Self::SqEuclid),
            "sqeuclid-scaled" => Ok(Self::SqEuclidScaled),
            "euclid" => Ok(Self::Euclid),
            _ => match s.strip_prefix("file:") {
                Some(path) => existing_file(path).map(Self::File),
                None => Err(format!("unknown cost {s:?}; expected sqeuclid, sqeuclid-scaled, euclid or file:PATH")),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Step rule: normalized:THETA, constant:ETA or polyak.
    #[arg(long, default_value = "normalized:1", value_parser = parse_step)]
    pub step: StepRule,
    /// Stop once successive iterates differ by at most this (Frobenius).
    #[arg(long, default_value_t = MirrorDescentConfig::default().iterate_tol, value_parser = positive)]
    pub tol: f64,
    /// Iteration cap; defaults to 5000 for mirror descent and 20000 for dual ascent.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Marginal tolerance of every Sinkhorn projection.
    #[arg(long, default_value_t = SinkhornConfig::default().marginal_tol, value_parser = positive)]
    pub inner_tol: f64,
    /// Sweep cap of every Sinkhorn projection.
    #[arg(long, default_value_t = SinkhornConfig::default().max_sweeps)]
    pub max_sweeps: usize,
    /// Run Sinkhorn in the log domain.
    #[arg(long)]
    pub log_domain: bool,
    /// Initial backtracking step of dual ascent.
    #[arg(long, default_value_t = DualConfig::default().initial_step, value_parser = positive)]
    pub dual_step: f64,
    /// Backtracking factor of dual ascent.
    #[arg(long, default_value_t = DualConfig::default().shrink, value_parser = positive)]
    pub dual_shrink: f64,
    /// Dual ascent stops once the gradient norm is at most this.
    #[arg(long, default_value_t = DualConfig::default().grad_tol, value_parser = positive)]
    pub grad_tol: f64,
}

#[derive(Debug, Args)]
pub struct RegularizerArgs {
    #[arg(long, value_enum, default_value_t = RegularizerName::Renyi)]
    pub regularizer: RegularizerName,
    /// Rényi order in (0, 1).
    #[arg(long, value_parser = unit_interval)]
    pub alpha: Option<f64>,
    /// Tsallis order, positive and not 1.
    #[arg(long, value_parser = tsallis_order)]
    pub q: Option<f64>,
    /// Regularization strength.
    #[arg(long, value_parser = positive)]
    pub eps: Option<f64>,
    /// Solve the Rényi-ball problem of this radius instead of fixing eps.
    #[arg(long, value_parser = nonnegative, conflicts_with_all = ["eps", "dual"])]
    pub gamma: Option<f64>,
    /// Use dual subgradient ascent (Rényi only).
    #[arg(long)]
    pub dual: bool,
    /// With --dual, project the recovered plan onto the marginals.
    #[arg(long, requires = "dual")]
    pub reproject: bool,
    /// Bisection bracket on eps for --gamma.
    #[arg(long, default_value_t = PremetricConfig::default().eps_low, value_parser = positive)]
    pub eps_low: f64,
    #[arg(long, default_value_t = PremetricConfig::default().eps_high, value_parser = positive)]
    pub eps_high: f64,
    #[arg(long, default_value_t = PremetricConfig::default().max_bisections)]
    pub max_bisections: usize,
    /// Accepted |R(P) − gamma| for --gamma.
    #[arg(long, default_value_t = PremetricConfig::default().divergence_tol, value_parser = positive)]
    pub gamma_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegularizerName {
    Renyi,
    /// Tsallis divergence to r cᵀ.
    Tsallis,
    /// Negative Tsallis entropy of the plan.
    TsallisEntropy,
    Kl,
    None,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Include wall-clock times (makes output differ between runs).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub marginals: MarginalArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub regularizer: RegularizerArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub marginals: MarginalArgs,
    /// Positive matrix to project: numeric rows or `i,j,mass` triplets.
    #[arg(long, value_name = "PATH", value_parser = existing_file)]
    pub kernel: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub marginals: MarginalArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Comma-separated Rényi orders.
    #[arg(long, value_delimiter = ',', required = true, value_parser = unit_interval)]
    pub alphas: Vec<f64>,
    /// Comma-separated regularization strengths.
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
    pub epsilons: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub marginals: MarginalArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Comma-separated regularizers: renyi:ALPHA, tsallis:Q, tsallis-entropy:Q, kl, none.
    #[arg(long, value_delimiter = ',', default_value = "renyi:0.01,tsallis-entropy:1.6,kl,none")]
    pub specs: Vec<String>,
    /// Strength shared by all regularized rows.
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    pub eps: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VoterArgs {
    /// Square similarity table with party names in the first row and column.
    #[arg(long, value_name = "PATH", value_parser = existing_file)]
    pub similarity: PathBuf,
    /// Election results as `index,r,c`, one row per party plus Others and NV.
    #[arg(long, value_name = "PATH", value_parser = existing_file)]
    pub marginals: PathBuf,
    /// Distance map: eucl, sqeucl, riesz, rbf:GAMMA or res:GAMMA.
    #[arg(long, default_value = "riesz", value_parser = parse_metric)]
    pub metric: VoterMetric,
    #[command(flatten)]
    pub regularizer: RegularizerArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("no such file: {s}"))
    }
}

fn float(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

fn positive(s: &str) -> Result<f64, String> {
    let v = float(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v = float(s)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be nonnegative, got {s}"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v = float(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("alpha must lie in (0, 1), got {s}"))
    }
}

fn tsallis_order(s: &str) -> Result<f64, String> {
    let v = float(s)?;
    if v > 0.0 && v != 1.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("q must be positive and different from 1, got {s}"))
    }
}

fn parse_step(s: &str) -> Result<StepRule, String> {
    match s.split_once(':') {
        None if s == "polyak" => Ok(StepRule::polyak()),
        Some(("constant", v)) => Ok(StepRule::Constant { eta: positive(v)? }),
        Some(("normalized", v)) => Ok(StepRule::Normalized { theta: positive(v)? }),
        _ => Err(format!("unknown step rule {s:?}; expected normalized:THETA, constant:ETA or polyak")),
    }
}

fn parse_metric(s: &str) -> Result<VoterMetric, String> {
    match s.split_once(':') {
        None => match s {
            "eucl" => Ok(VoterMetric::Eucl),
            "sqeucl" => Ok(VoterMetric::SqEucl),
            "riesz" => Ok(VoterMetric::Riesz),
            _ => Err(format!("unknown metric {s:?}")),
        },
        Some(("rbf", g)) => Ok(VoterMetric::Rbf { gamma: positive(g)? }),
        Some(("res", g)) => Ok(VoterMetric::Res { gamma: positive(g)? }),
        _ => Err(format!("unknown metric {s:?}")),
    }
}

/// Where the marginals come from.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalSource {
    File(PathBuf),
    Generated(MarginalFamily, MarginalFamily),
}

/// Marginals and cost of a grid problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub marginals: MarginalSource,
    pub cost: CostSource,
    pub cost_scale: f64,
}

/// How a single problem is solved.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Mirror descent, Sinkhorn or exact OT depending on the regularizer.
    Primal { spec: RegularizerSpec, settings: SolverSettings },
    Dual {
        alpha: f64,
        epsilon: f64,
        cfg: DualConfig,
        reproject: Option<SinkhornConfig>,
    },
    Ball { alpha: f64, gamma: f64, cfg: PremetricConfig },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Solve { problem: Problem, method: Method },
    Project { marginals: MarginalSource, kernel: PathBuf, sinkhorn: SinkhornConfig },
    Sweep { problem: Problem, alphas: Vec<f64>, epsilons: Vec<f64>, settings: SolverSettings },
    Compare { problem: Problem, specs: Vec<RegularizerSpec>, settings: SolverSettings },
    Voter { similarity: PathBuf, marginals: PathBuf, metric: VoterMetric, method: Method },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub path: Option<PathBuf>,
    pub format: Format,
    pub timings: bool,
}

/// A validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub output: Output,
    pub dump_marginals: Option<PathBuf>,
}

impl MarginalArgs {
    fn source(&self) -> Result<MarginalSource, CliError> {
        if let Some(path) = &self.marginals {
            return Ok(MarginalSource::File(path.clone()));
        }
        if self.n < 2 {
            return Err(CliError::Usage(format!("--n must be at least 2, got {}", self.n)));
        }
        let n = self.n;
        let (r, c) = match self.generate.expect("clap enforces one source") {
            Generated::Gaussian => MarginalFamily::default_gaussian_pair(n),
            Generated::Poisson => MarginalFamily::default_poisson_pair(n),
            Generated::Uniform => (MarginalFamily::uniform(n), MarginalFamily::uniform(n)),
            Generated::Random => (MarginalFamily::random(n), MarginalFamily::random(n)),
        };
        Ok(MarginalSource::Generated(r, c))
    }
}

impl CostArgs {
    fn problem(&self, marginals: &MarginalArgs) -> Result<Problem, CliError> {
        Ok(Problem {
            marginals: marginals.source()?,
            cost: self.cost.clone(),
            cost_scale: self.cost_scale,
        })
    }
}

impl SolverArgs {
    fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            marginal_tol: self.inner_tol,
            max_sweeps: self.max_sweeps,
            log_domain: self.log_domain,
        }
    }

    fn mirror(&self) -> MirrorDescentConfig {
        MirrorDescentConfig {
            step_rule: self.step,
            iterate_tol: self.tol,
            max_iters: self.max_iters.unwrap_or(MirrorDescentConfig::default().max_iters),
            inner: self.sinkhorn(),
        }
    }

    /// The KL baseline only follows the Sinkhorn flags when one was given.
    fn settings(&self) -> SolverSettings {
        let defaults = SinkhornConfig::default();
        let custom = self.inner_tol != defaults.marginal_tol || self.max_sweeps != defaults.max_sweeps || self.log_domain;
        SolverSettings {
            mirror: self.mirror(),
            kl: custom.then(|| self.sinkhorn()),
        }
    }

    fn dual(&self) -> DualConfig {
        DualConfig {
            initial_step: self.dual_step,
            shrink: self.dual_shrink,
            max_iters: self.max_iters.unwrap_or(DualConfig::default().max_iters),
            grad_tol: self.grad_tol,
        }
    }
}

impl RegularizerArgs {
    fn method(&self, solver: &SolverArgs) -> Result<Method, CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        let need_eps = || self.eps.ok_or_else(|| CliError::Usage("--eps is required".into()));
        if self.regularizer != RegularizerName::Renyi {
            if self.dual || self.gamma.is_some() {
                return usage("--dual and --gamma apply to the renyi regularizer only");
            }
            if self.alpha.is_some() {
                return usage("--alpha applies to the renyi regularizer only");
            }
        }
        if !matches!(self.regularizer, RegularizerName::Tsallis | RegularizerName::TsallisEntropy) && self.q.is_some() {
            return usage("--q applies to the tsallis regularizers only");
        }
        let spec = match self.regularizer {
            RegularizerName::Renyi => {
                let alpha = self.alpha.ok_or_else(|| CliError::Usage("--alpha is required for renyi".into()))?;
                if let Some(gamma) = self.gamma {
                    let cfg = PremetricConfig {
                        solver: solver.mirror(),
                        eps_low: self.eps_low,
                        eps_high: self.eps_high,
                        max_bisections: self.max_bisections,
                        divergence_tol: self.gamma_tol,
                    };
                    return Ok(Method::Ball { alpha, gamma, cfg });
                }
                let epsilon = need_eps()?;
                if self.dual {
                    return Ok(Method::Dual {
                        alpha,
                        epsilon,
                        cfg: solver.dual(),
                        reproject: self.reproject.then(|| solver.sinkhorn()),
                    });
                }
                RegularizerSpec::renyi(alpha, epsilon)?
            }
            RegularizerName::Tsallis | RegularizerName::TsallisEntropy => {
                let q = self.q.ok_or_else(|| CliError::Usage("--q is required for tsallis".into()))?;
                if self.regularizer == RegularizerName::Tsallis {
                    RegularizerSpec::tsallis(q, need_eps()?)?
                } else {
                    RegularizerSpec::tsallis_entropy(q, need_eps()?)?
                }
            }
            RegularizerName::Kl => RegularizerSpec::kl(need_eps()?)?,
            RegularizerName::None => {
                if self.eps.is_some() {
                    return usage("--eps does not apply to --regularizer none");
                }
                RegularizerSpec::unregularized()
            }
        };
        Ok(Method::Primal {
            spec,
            settings: solver.settings(),
        })
    }
}

fn parse_spec(s: &str, eps: f64) -> Result<RegularizerSpec, CliError> {
    let usage = |m: String| CliError::Usage(m);
    let (name, value) = match s.split_once(':') {
        Some((n, v)) => (n, Some(float(v).map_err(usage)?)),
        None => (s, None),
    };
    let spec = match (name, value) {
        ("renyi", Some(a)) => RegularizerSpec::renyi(a, eps),
        ("tsallis", Some(q)) => RegularizerSpec::tsallis(q, eps),
        ("tsallis-entropy", Some(q)) => RegularizerSpec::tsallis_entropy(q, eps),
        ("kl", None) => RegularizerSpec::kl(eps),
        ("none", None) => Ok(RegularizerSpec::unregularized()),
        _ => return Err(usage(format!("bad regularizer {s:?}; expected renyi:A, tsallis:Q, tsallis-entropy:Q, kl or none"))),
    };
    spec.map_err(|e| usage(format!("{s}: {e}")))
}

impl OutputArgs {
    fn output(&self) -> Output {
        Output {
            path: self.out.clone(),
            format: self.format,
            timings: self.timings,
        }
    }
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let dump_marginals = match &self.command {
            Command::Solve(a) => a.marginals.dump_marginals.clone(),
            Command::Project(a) => a.marginals.dump_marginals.clone(),
            Command::Sweep(a) => a.marginals.dump_marginals.clone(),
            Command::Compare(a) => a.marginals.dump_marginals.clone(),
            Command::Voter(_) => None,
        };
        let (task, seed, output) = match self.command {
            Command::Solve(a) => {
                let problem = a.cost.problem(&a.marginals)?;
                let method = a.regularizer.method(&a.solver)?;
                (Task::Solve { problem, method }, a.marginals.seed, a.output.output())
            }
            Command::Project(a) => (
                Task::Project {
                    marginals: a.marginals.source()?,
                    kernel: a.kernel,
                    sinkhorn: a.solver.sinkhorn(),
                },
                a.marginals.seed,
                a.output.output(),
            ),
            Command::Sweep(a) => (
                Task::Sweep {
                    problem: a.cost.problem(&a.marginals)?,
                    alphas: a.alphas,
                    epsilons: a.epsilons,
                    settings: a.solver.settings(),
                },
                a.marginals.seed,
                a.output.output(),
            ),
            Command::Compare(a) => {
                let specs = a.specs.iter().map(|s| parse_spec(s.trim(), a.eps)).collect::<Result<Vec<_>, _>>()?;
                (
                    Task::Compare {
                        problem: a.cost.problem(&a.marginals)?,
                        specs,
                        settings: a.solver.settings(),
                    },
                    a.marginals.seed,
                    a.output.output(),
                )
            }
            Command::Voter(a) => (
                Task::Voter {
                    similarity: a.similarity,
                    marginals: a.marginals,
                    metric: a.metric,
                    method: a.regularizer.method(&a.solver)?,
                },
                0,
                a.output.output(),
            ),
        };
        Ok(RunConfig {
            task,
            seed,
            output,
            dump_marginals,
        })
    }
}

/// Parses and validates a full argument vector (including the program
/// name). `--help` and `--version` come back as clap errors with exit
/// code 0.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, ParseFailure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ParseFailure::Clap)?;
    cli.into_config().map_err(ParseFailure::Invalid)
}

#[derive(Debug)]
pub enum ParseFailure {
    /// Unknown flags, missing values, `--help`.
    Clap(clap::Error),
    Invalid(CliError),
}

impl ParseFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Clap(e) => e.exit_code(),
            Self::Invalid(e) => e.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marginals_file() -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "index,r,c\n0,0.5,0.3\n1,0.5,0.7\n").unwrap();
        f
    }

    fn parse(extra: &[&str]) -> Result<RunConfig, ParseFailure> {
        parse_args(std::iter::once("renyi-ot").chain(extra.iter().copied()))
    }

    #[test]
    fn solve_echoes_flags() {
        let f = marginals_file();
        let path = f.path().to_str().unwrap();
        let cfg = parse(&["solve", "--marginals", path, "--cost", "sqeuclid", "--alpha", "0.1", "--eps", "0.5"]).unwrap();
        let Task::Solve { method, problem } = cfg.task else {
            panic!("expected solve");
        };
        assert_eq!(problem.cost, CostSource::SqEuclid);
        let Method::Primal { spec, settings } = method else {
            panic!("expected primal method");
        };
        assert_eq!(spec, RegularizerSpec::renyi(0.1, 0.5).unwrap());
        assert_eq!(settings.mirror, MirrorDescentConfig::default());
        assert_eq!(settings.kl, None);
    }

    #[test]
    fn alpha_outside_unit_interval_is_usage_error() {
        let f = marginals_file();
        let err = parse(&["solve", "--marginals", f.path().to_str().unwrap(), "--alpha", "1.5", "--eps", "1"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sweep_grid_has_twelve_cells() {
        let cfg = parse(&["sweep", "--generate", "gaussian", "--alphas", "1e-6,1e-3,0.5,0.999", "--epsilons", "0.1,1,10"]).unwrap();
        let Task::Sweep { alphas, epsilons, .. } = cfg.task else {
            panic!("expected sweep");
        };
        assert_eq!(alphas.len() * epsilons.len(), 12);
    }

    #[test]
    fn missing_file_and_unknown_flag_are_usage_errors() {
        assert_eq!(parse(&["solve", "--marginals", "/no/such/file", "--alpha", "0.5"]).unwrap_err().exit_code(), 2);
        assert_eq!(parse(&["solve", "--generate", "uniform", "--bogus"]).unwrap_err().exit_code(), 2);
        assert_eq!(parse(&["solve", "--generate", "uniform", "--alpha", "0.5"]).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn module_defaults_are_flag_defaults() {
        let cfg = parse(&["solve", "--generate", "uniform", "--alpha", "0.5", "--dual", "--eps", "1"]).unwrap();
        let Task::Solve { method: Method::Dual { cfg, reproject, .. }, .. } = cfg.task else {
            panic!("expected dual");
        };
        assert_eq!(cfg, DualConfig::default());
        assert_eq!(reproject, None);
        let cfg = parse(&["solve", "--generate", "uniform", "--alpha", "0.5", "--gamma", "0.1"]).unwrap();
        let Task::Solve { method: Method::Ball { cfg, .. }, .. } = cfg.task else {
            panic!("expected ball");
        };
        assert_eq!(cfg, PremetricConfig::default());
    }

    #[test]
    fn step_rules_parse() {
        assert_eq!(parse_step("polyak").unwrap(), StepRule::polyak());
        assert_eq!(parse_step("constant:0.5").unwrap(), StepRule::Constant { eta: 0.5 });
        assert_eq!(parse_step("normalized:1").unwrap(), StepRule::default());
        assert!(parse_step("constant:-1").is_err());
        assert!(parse_step("fast").is_err());
    }

    #[test]
    fn comparison_specs_parse() {
        assert_eq!(parse_spec("renyi:0.25", 0.1).unwrap(), RegularizerSpec::renyi(0.25, 0.1).unwrap());
        assert_eq!(parse_spec("none", 0.1).unwrap(), RegularizerSpec::unregularized());
        assert!(parse_spec("renyi:2", 0.1).is_err());
        assert!(parse_spec("kl:3", 0.1).is_err());
    }
}

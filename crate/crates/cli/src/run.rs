//! Executes a validated [`RunConfig`].

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use renyi_ot::experiments::{
    build_cost_matrix, convergence_sweep, generate_marginal, regularizer_comparison, solve_regularized, CellOutcome,
    ComparisonOutcome, CostFamily,
};
use renyi_ot::solver::{dual_subgradient, plan_from_duals_projected, premetric_ball_solve};
use renyi_ot::{mutual_information_alpha, sinkhorn_project, CostMatrix, Histogram, OtError, SolveReport, Termination};

use crate::args::{CostSource, Format, MarginalSource, Method, Output, Problem, RunConfig, Task};
use crate::emit::{self, Extras};
use crate::error::{CliError, IngestError};
use crate::ingest::{ingest_marginals, ingest_similarity, read_matrix};

/// Rendered output and the exit status it deserves: 0, or 4 when a solver
/// stopped without converging or a sweep cell failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub status: i32,
}

pub fn load_marginals(source: &MarginalSource, seed: u64) -> Result<(Histogram, Histogram), CliError> {
    match source {
        MarginalSource::File(path) => Ok(ingest_marginals(path)?),
        MarginalSource::Generated(r, c) => Ok((generate_marginal(r, seed)?, generate_marginal(c, seed.wrapping_add(1))?)),
    }
}

/// Builds the `n × n` cost matrix and multiplies it by `scale`.
pub fn load_cost(source: &CostSource, scale: f64, n: usize) -> Result<CostMatrix, CliError> {
    let m = match source {
        CostSource::SqEuclid => build_cost_matrix(&CostFamily::SqEuclidUnscaled, n)?,
        CostSource::SqEuclidScaled => build_cost_matrix(&CostFamily::SqEuclidScaled, n)?,
        CostSource::Euclid => build_cost_matrix(&CostFamily::EuclidGrid, n)?,
        CostSource::File(path) => {
            let entries = read_matrix(path)?;
            if entries.nrows() != n {
                return Err(IngestError::LengthMismatch {
                    path: path.clone(),
                    message: format!("{0}×{0} cost matrix for {n} points", entries.nrows()),
                }
                .into());
            }
            CostMatrix::new(entries).map_err(|source| IngestError::Invalid {
                path: path.clone(),
                source,
            })?
        }
    };
    if scale == 1.0 {
        Ok(m)
    } else {
        Ok(m.scaled(scale)?)
    }
}

fn load_problem(problem: &Problem, seed: u64) -> Result<(CostMatrix, Histogram, Histogram), CliError> {
    let (r, c) = load_marginals(&problem.marginals, seed)?;
    if r.len() < 2 {
        return Err(CliError::Data(OtError::InvalidConfig("at least two points are needed".into())));
    }
    let m = load_cost(&problem.cost, problem.cost_scale, r.len())?;
    Ok((m, r, c))
}

/// Solves one problem with the chosen method; the extras carry dual
/// potentials or the ball multiplier.
pub fn solve_with(m: &CostMatrix, r: &Histogram, c: &Histogram, method: &Method) -> Result<(SolveReport, Extras), CliError> {
    match method {
        Method::Primal { spec, settings } => {
            info!("solving {}", spec.label());
            Ok((solve_regularized(m, r, c, spec, settings)?, Extras::default()))
        }
        Method::Dual {
            alpha,
            epsilon,
            cfg,
            reproject,
        } => {
            let (q, mut report) = dual_subgradient(m, r, c, *alpha, *epsilon, cfg)?;
            if let Some(sinkhorn) = reproject {
                let plan = plan_from_duals_projected(&q, m, r, c, *alpha, sinkhorn)?;
                report.transport_cost = (m.entries() * plan.entries()).sum();
                report.divergence_value = mutual_information_alpha(plan.entries(), r, c, *alpha)?;
                report.plan = plan;
            }
            Ok((
                report,
                Extras {
                    dual: Some(q),
                    ..Extras::default()
                },
            ))
        }
        Method::Ball { alpha, gamma, cfg } => {
            let (report, eps_star) = premetric_ball_solve(m, r, c, *alpha, *gamma, cfg)?;
            Ok((
                report,
                Extras {
                    epsilon_star: Some(eps_star),
                    ..Extras::default()
                },
            ))
        }
    }
}

fn report_status(report: &SolveReport) -> i32 {
    if report.termination == Termination::IterateResidual {
        0
    } else {
        warn!("solver stopped early: {:?} after {} iterations", report.termination, report.iterations);
        4
    }
}

fn render_report(report: &SolveReport, extras: &Extras, out: &Output) -> Rendered {
    let text = match out.format {
        Format::Csv => emit::plan_csv(&report.plan),
        Format::Json => emit::report_json(report, extras, out.timings),
    };
    Rendered {
        text,
        status: report_status(report),
    }
}

/// Runs the task and renders its result without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let out = &cfg.output;
    let dump = |r: &Histogram, c: &Histogram| match &cfg.dump_marginals {
        Some(path) => write_file(path, &emit::marginals_csv(r, c)),
        None => Ok(()),
    };
    match &cfg.task {
        Task::Solve { problem, method } => {
            let (m, r, c) = load_problem(problem, cfg.seed)?;
            dump(&r, &c)?;
            let (report, extras) = solve_with(&m, &r, &c, method)?;
            Ok(render_report(&report, &extras, out))
        }
        Task::Project {
            marginals,
            kernel,
            sinkhorn,
        } => {
            let (r, c) = load_marginals(marginals, cfg.seed)?;
            dump(&r, &c)?;
            let x = read_matrix(kernel)?;
            if x.nrows() != r.len() {
                return Err(IngestError::LengthMismatch {
                    path: kernel.clone(),
                    message: format!("{0}×{0} kernel for {1} points", x.nrows(), r.len()),
                }
                .into());
            }
            let plan = sinkhorn_project(&x, &r, &c, sinkhorn)?;
            let text = match out.format {
                Format::Csv => emit::plan_csv(&plan),
                Format::Json => {
                    let rows: Vec<Vec<f64>> = plan.entries().rows().into_iter().map(|row| row.to_vec()).collect();
                    let value = serde_json::json!({
                        "marginal_residual": plan.marginal_residual(),
                        "plan": rows,
                    });
                    format!("{}\n", serde_json::to_string_pretty(&value).expect("plain JSON value"))
                }
            };
            Ok(Rendered { text, status: 0 })
        }
        Task::Sweep {
            problem,
            alphas,
            epsilons,
            settings,
        } => {
            let (m, r, c) = load_problem(problem, cfg.seed)?;
            dump(&r, &c)?;
            let grid = convergence_sweep(&m, &r, &c, alphas, epsilons, settings)?;
            let unconverged = grid
                .cells
                .iter()
                .filter(|cell| match &cell.outcome {
                    CellOutcome::Solved { termination, .. } => *termination != Termination::IterateResidual,
                    CellOutcome::Failed { .. } => true,
                })
                .count();
            if unconverged > 0 {
                warn!("{unconverged} of {} cells failed or did not converge", grid.cells.len());
            }
            let text = match out.format {
                Format::Csv => emit::grid_csv(&grid),
                Format::Json => emit::grid_json(&grid),
            };
            Ok(Rendered {
                text,
                status: if unconverged > 0 { 4 } else { 0 },
            })
        }
        Task::Compare {
            problem,
            specs,
            settings,
        } => {
            let (m, r, c) = load_problem(problem, cfg.seed)?;
            dump(&r, &c)?;
            let rows = regularizer_comparison(&m, &r, &c, specs, settings)?;
            let failed = rows
                .iter()
                .filter(|row| matches!(row.outcome, ComparisonOutcome::Failed { .. }))
                .count();
            let text = match out.format {
                Format::Csv => emit::comparison_csv(&rows),
                Format::Json => emit::comparison_json(&rows),
            };
            Ok(Rendered {
                text,
                status: if failed > 0 { 4 } else { 0 },
            })
        }
        Task::Voter {
            similarity,
            marginals,
            metric,
            method,
        } => {
            let sim = ingest_similarity(similarity)?;
            let (r, c) = ingest_marginals(marginals)?;
            if r.len() != sim.labels.len() {
                return Err(IngestError::LengthMismatch {
                    path: marginals.clone(),
                    message: format!(
                        "{} entries for {} parties including {} and {}",
                        r.len(),
                        sim.labels.len(),
                        crate::ingest::OTHERS,
                        crate::ingest::NON_VOTERS
                    ),
                }
                .into());
            }
            let family = CostFamily::VoterPhi {
                metric: *metric,
                similarity_vectors: sim.vectors,
            };
            let m = build_cost_matrix(&family, r.len())?;
            let (report, mut extras) = solve_with(&m, &r, &c, method)?;
            extras.labels = Some(sim.labels);
            Ok(render_report(&report, &extras, out))
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Runs the task and writes its output; returns the exit status.
pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    let rendered = execute(cfg)?;
    match &cfg.output.path {
        Some(path) => write_file(path, &rendered.text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(rendered.text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| CliError::Output {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                })?;
        }
    }
    Ok(rendered.status)
}

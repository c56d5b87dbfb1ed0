//! Rendering results as CSV or JSON.

use std::fmt::Write as _;

use renyi_ot::experiments::{CellOutcome, ComparisonOutcome, ComparisonRow, ErrorMetrics, SweepCell, SweepGrid};
use renyi_ot::{Histogram, RegularizerSpec, SolveReport, Termination, TraceRecord, TransportPlan};
use serde::Serialize;

/// Extra fields that only some commands produce.
#[derive(Debug, Clone, Default)]
pub struct Extras {
    pub dual: Option<Vec<f64>>,
    pub epsilon_star: Option<f64>,
    pub labels: Option<Vec<String>>,
}

#[derive(Serialize)]
struct ReportView<'a> {
    regularizer: &'a RegularizerSpec,
    label: String,
    objective_value: f64,
    transport_cost: f64,
    divergence_value: f64,
    iterations: usize,
    termination: Termination,
    wall_time: Option<f64>,
    marginal_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dual: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_star: Option<f64>,
    plan: Vec<Vec<f64>>,
    trace: &'a [TraceRecord],
}

fn rows(plan: &TransportPlan) -> Vec<Vec<f64>> {
    plan.entries().rows().into_iter().map(|r| r.to_vec()).collect()
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn sci(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Full solver report. `wall_time` is null unless `timings` is set, so that
/// repeated runs produce identical bytes.
pub fn report_json(report: &SolveReport, extras: &Extras, timings: bool) -> String {
    json(&ReportView {
        regularizer: &report.regularizer,
        label: report.regularizer.label(),
        objective_value: report.objective_value,
        transport_cost: report.transport_cost,
        divergence_value: report.divergence_value,
        iterations: report.iterations,
        termination: report.termination,
        wall_time: timings.then_some(report.wall_time),
        marginal_residual: report.plan.marginal_residual(),
        labels: extras.labels.as_deref(),
        dual: extras.dual.as_deref(),
        epsilon_star: extras.epsilon_star,
        plan: rows(&report.plan),
        trace: &report.trace,
    })
}

/// One `i,j,mass` row per plan entry, row-major, 17 significant digits.
pub fn plan_csv(plan: &TransportPlan) -> String {
    let mut out = String::from("i,j,mass\n");
    for ((i, j), v) in plan.entries().indexed_iter() {
        let _ = writeln!(out, "{i},{j},{}", sci(*v));
    }
    out
}

pub fn marginals_csv(r: &Histogram, c: &Histogram) -> String {
    let mut out = String::from("index,r,c\n");
    for (k, (a, b)) in r.as_slice().iter().zip(c.as_slice()).enumerate() {
        let _ = writeln!(out, "{k},{},{}", sci(*a), sci(*b));
    }
    out
}

pub fn grid_json(grid: &SweepGrid) -> String {
    json(grid)
}

const METRIC_COLUMNS: [&str; 5] = ["abs_mean", "abs_std", "kl_error", "mse", "transport_distance"];

fn metric_fields(out: &mut String, m: Option<&ErrorMetrics>) {
    match m {
        Some(m) => {
            for v in [m.abs_mean, m.abs_std, m.kl_error, m.mse, m.transport_distance] {
                let _ = write!(out, ",{}", sci(v));
            }
        }
        None => out.push_str(",,,,,"),
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::IterateResidual => "iterate_residual",
        Termination::MaxIterations => "max_iterations",
        Termination::StepCollapse => "step_collapse",
    }
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// One row per cell in the grid's `ε`-major order.
pub fn grid_csv(grid: &SweepGrid) -> String {
    let mut out = String::from("alpha,epsilon,status,objective,transport_cost,divergence,iterations,termination");
    for prefix in ["exact", "kl"] {
        for col in METRIC_COLUMNS {
            let _ = write!(out, ",{prefix}_{col}");
        }
    }
    out.push_str(",error\n");
    for SweepCell { alpha, epsilon, outcome } in &grid.cells {
        let _ = write!(out, "{},{}", sci(*alpha), sci(*epsilon));
        match outcome {
            CellOutcome::Solved {
                objective,
                transport_cost,
                divergence,
                iterations,
                termination,
                vs_exact,
                vs_kl,
            } => {
                let _ = write!(
                    out,
                    ",solved,{},{},{},{iterations},{}",
                    sci(*objective),
                    sci(*transport_cost),
                    sci(*divergence),
                    termination_name(*termination)
                );
                metric_fields(&mut out, Some(vs_exact));
                metric_fields(&mut out, vs_kl.as_ref());
                out.push_str(",\n");
            }
            CellOutcome::Failed { error } => {
                out.push_str(",failed,,,,,");
                metric_fields(&mut out, None);
                metric_fields(&mut out, None);
                let _ = writeln!(out, ",{}", quoted(error));
            }
        }
    }
    out
}

pub fn comparison_json(rows: &[ComparisonRow]) -> String {
    json(&rows)
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("label,status,objective");
    for col in METRIC_COLUMNS {
        let _ = write!(out, ",{col}");
    }
    out.push_str(",error\n");
    for row in rows {
        out.push_str(&quoted(&row.label));
        match &row.outcome {
            ComparisonOutcome::Solved { objective, metrics } => {
                let _ = write!(out, ",solved,{}", sci(*objective));
                metric_fields(&mut out, Some(metrics));
                out.push_str(",\n");
            }
            ComparisonOutcome::Failed { error } => {
                out.push_str(",failed,");
                metric_fields(&mut out, None);
                let _ = writeln!(out, ",{}", quoted(error));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> TransportPlan {
        let r = Histogram::new(vec![0.5, 0.5]).unwrap();
        TransportPlan::independent(&r, &r).unwrap()
    }

    #[test]
    fn plan_csv_has_one_row_per_entry() {
        let text = plan_csv(&plan());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "i,j,mass");
        assert_eq!(lines[2], "0,1,2.5000000000000000e-1");
    }

    #[test]
    fn seventeen_digits_round_trip() {
        let v = 0.1f64 + 0.2;
        assert_eq!(sci(v).parse::<f64>().unwrap(), v);
        let tiny = f64::MIN_POSITIVE * 3.0;
        assert_eq!(sci(tiny).parse::<f64>().unwrap(), tiny);
    }

    #[test]
    fn report_hides_wall_time_without_timings() {
        let p = plan();
        let report = SolveReport {
            plan: p,
            regularizer: RegularizerSpec::unregularized(),
            objective_value: 0.25,
            transport_cost: 0.25,
            divergence_value: f64::NAN,
            iterations: 3,
            trace: vec![],
            termination: Termination::IterateResidual,
            wall_time: 1.5,
        };
        let v: serde_json::Value = serde_json::from_str(&report_json(&report, &Extras::default(), false)).unwrap();
        assert!(v["wall_time"].is_null());
        assert!(v["divergence_value"].is_null());
        assert_eq!(v["plan"], serde_json::json!([[0.25, 0.25], [0.25, 0.25]]));
        assert!(v.get("dual").is_none());
        let v: serde_json::Value = serde_json::from_str(&report_json(&report, &Extras::default(), true)).unwrap();
        assert_eq!(v["wall_time"], 1.5);
    }

    #[test]
    fn comparison_csv_quotes_labels() {
        let metrics = ErrorMetrics {
            abs_mean: 0.0,
            abs_std: 0.0,
            kl_error: 0.0,
            mse: 0.0,
            transport_distance: 0.0,
        };
        let rows = vec![
            ComparisonRow {
                label: "kl(eps=0.1)".into(),
                regularizer: RegularizerSpec::kl(0.1).unwrap(),
                outcome: ComparisonOutcome::Solved { objective: 1.0, metrics },
            },
            ComparisonRow {
                label: "none".into(),
                regularizer: RegularizerSpec::unregularized(),
                outcome: ComparisonOutcome::Failed { error: "bad, \"very\"".into() },
            },
        ];
        let text = comparison_csv(&rows);
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().unwrap().clone();
        let records: Vec<_> = reader.records().map(Result::unwrap).collect();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.len() == headers.len()));
        assert_eq!(&records[1][headers.len() - 1], "bad, \"very\"");
    }
}

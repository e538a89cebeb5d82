//! CSV, Markdown and PNG reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use surgbench_core::TaskName;

use crate::error::Result;
use crate::plot::{line_plot, Series, PALETTE};
use crate::protocols::{Curve, EvalResult, InstanceTable, ViewMode};

/// Column order of the success-rate matrix.
pub const TABLE1_MODELS: [&str; 4] = ["ACT-S", "ACT-M", "ACT-PC", "DP3"];

pub const RESULTS_HEADER: &str =
    "task,model,space,protocol,condition,n_trials,successes,success_rate,errors,seeds";

/// Short report name for a policy name.
pub fn model_label(policy_name: &str) -> String {
    match policy_name {
        "act-single_camera" => "ACT-S".into(),
        "act-multi_camera" => "ACT-M".into(),
        "act-point_cloud" => "ACT-PC".into(),
        "dp3" => "DP3".into(),
        other => other.into(),
    }
}

fn color_for(model: &str, others: &[String]) -> [u8; 3] {
    let index = TABLE1_MODELS
        .iter()
        .position(|m| *m == model)
        .or_else(|| {
            others
                .iter()
                .position(|m| m == model)
                .map(|i| TABLE1_MODELS.len() + i)
        })
        .unwrap_or(0);
    PALETTE[index % PALETTE.len()]
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub results: Vec<EvalResult>,
    pub curves: Vec<Curve>,
    pub instances: Vec<InstanceTable>,
}

pub fn results_csv(results: &[EvalResult]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in results {
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:.4},{},{}",
            r.task,
            r.model,
            r.space.map_or("none", |sp| sp.as_str()),
            r.protocol,
            r.condition,
            r.n_trials,
            r.successes,
            r.success_rate,
            r.errors.len(),
            seeds.join(";"),
        );
    }
    s
}

/// Tasks by the four model columns. Only `table1` results fill cells; the
/// last one wins when a cell is evaluated twice.
pub fn table1_markdown(results: &[EvalResult]) -> String {
    let mut s = format!(
        "| Task | {} |\n|---|{}\n",
        TABLE1_MODELS.join(" | "),
        "---|".repeat(TABLE1_MODELS.len())
    );
    for task in TaskName::ALL {
        let cells: Vec<String> = TABLE1_MODELS
            .iter()
            .map(|m| {
                results
                    .iter()
                    .rev()
                    .find(|r| r.protocol == "table1" && r.task == task && r.model == *m)
                    .map_or("-".into(), |r| format!("{:.2}", r.success_rate))
            })
            .collect();
        let _ = writeln!(s, "| {task} | {} |", cells.join(" | "));
    }
    s
}

pub fn curves_csv(curves: &[Curve]) -> String {
    let mut s = String::from("task,model,n_demos,success_rate,diverged\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{}",
                c.task,
                c.model,
                p.n_demos,
                p.success_rate(),
                p.diverged.is_some()
            );
        }
    }
    s
}

pub fn table2_markdown(table: &InstanceTable) -> String {
    let mut s = format!(
        "{} on {}\n\n| Needle | Success |\n|---|---|\n",
        table.model, table.task
    );
    for row in &table.rows {
        let name = if row.train {
            format!("{} (train)", row.needle)
        } else {
            row.needle.clone()
        };
        let _ = writeln!(s, "| {name} | {:.2} |", row.result.success_rate);
    }
    if let Some(avg) = table.average {
        let _ = writeln!(s, "| Average | {avg:.2} |");
    }
    s
}

fn viewpoint_results(results: &[EvalResult]) -> Vec<&EvalResult> {
    results
        .iter()
        .filter(|r| r.protocol == "viewpoint")
        .collect()
}

/// Write every report file into `dir` and return their paths.
///
/// `results.csv` and `table1.md` are always written. Curve, instance and
/// viewpoint files appear only when there is data for them. Wall times go to
/// `timings.csv` so the other files are reproducible byte for byte.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let put = |written: &mut Vec<PathBuf>, name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put(&mut written, "results.csv", results_csv(&report.results))?;
    put(&mut written, "table1.md", table1_markdown(&report.results))?;

    let mut timings = String::from("task,model,protocol,condition,wall_seconds\n");
    for r in &report.results {
        let _ = writeln!(
            timings,
            "{},{},{},{},{:.3}",
            r.task, r.model, r.protocol, r.condition, r.wall_seconds
        );
    }
    put(&mut written, "timings.csv", timings)?;

    let perturbed: Vec<_> = report
        .results
        .iter()
        .filter(|r| !r.perturbations.is_empty())
        .collect();
    if !perturbed.is_empty() {
        let mut s = String::from("task,model,seed,dx,dy,dz,rx_deg,ry_deg,rz_deg\n");
        for r in perturbed {
            for (seed, p) in &r.perturbations {
                let [dx, dy, dz] = p.translation;
                let [rx, ry, rz] = p.rotation_deg;
                let _ = writeln!(
                    s,
                    "{},{},{seed},{dx:.6},{dy:.6},{dz:.6},{rx:.4},{ry:.4},{rz:.4}",
                    r.task, r.model
                );
            }
        }
        put(&mut written, "perturbations.csv", s)?;
    }

    let mut extra: Vec<String> = report
        .curves
        .iter()
        .map(|c| c.model.clone())
        .chain(report.results.iter().map(|r| r.model.clone()))
        .filter(|m| !TABLE1_MODELS.contains(&m.as_str()))
        .collect();
    extra.sort();
    extra.dedup();

    if !report.curves.is_empty() {
        put(
            &mut written,
            "sample_efficiency.csv",
            curves_csv(&report.curves),
        )?;
        for task in TaskName::ALL {
            let curves: Vec<_> = report.curves.iter().filter(|c| c.task == task).collect();
            if curves.is_empty() {
                continue;
            }
            let series: Vec<Series> = curves
                .iter()
                .map(|c| Series {
                    color: color_for(&c.model, &extra),
                    points: c
                        .points
                        .iter()
                        .map(|p| (p.n_demos as f64, p.success_rate()))
                        .collect(),
                })
                .collect();
            let xs = curves
                .iter()
                .flat_map(|c| c.points.iter().map(|p| p.n_demos as f64));
            let (lo, hi) = xs.fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
            let path = dir.join(format!("sample_efficiency_{task}.png"));
            line_plot(&series, (lo, hi), &path)?;
            written.push(path);
        }
    }

    let views = viewpoint_results(&report.results);
    if !views.is_empty() {
        let mut s = String::from("task,model,mode,success_rate\n");
        for r in &views {
            let _ = writeln!(
                s,
                "{},{},{},{:.4}",
                r.task, r.model, r.condition, r.success_rate
            );
        }
        put(&mut written, "viewpoint.csv", s)?;
        let mut keys: Vec<(TaskName, String)> =
            views.iter().map(|r| (r.task, r.model.clone())).collect();
        keys.sort();
        keys.dedup();
        let series: Vec<Series> = keys
            .iter()
            .map(|(task, model)| Series {
                color: color_for(model, &extra),
                points: ViewMode::ALL
                    .iter()
                    .enumerate()
                    .filter_map(|(i, mode)| {
                        views
                            .iter()
                            .rev()
                            .find(|r| {
                                r.task == *task && r.model == *model && r.condition == mode.as_str()
                            })
                            .map(|r| (i as f64, r.success_rate))
                    })
                    .collect(),
            })
            .collect();
        let path = dir.join("viewpoint.png");
        line_plot(&series, (0.0, (ViewMode::ALL.len() - 1) as f64), &path)?;
        written.push(path);
    }

    if !report.instances.is_empty() {
        let text: Vec<String> = report.instances.iter().map(table2_markdown).collect();
        put(&mut written, "table2.md", text.join("\n"))?;
    }
    Ok(written)
}

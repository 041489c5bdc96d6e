//! `frailt fit`: score-versus-log-loss lines for the overall average and each
//! category, after the loss-threshold filter. Emits `fit.csv` plus the point
//! CSVs behind the scatter figures.

use std::path::PathBuf;

use clap::Args;
use frailt_eval::{filter_by_loss, fit_power_law, EvalReport, FitError};

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Args)]
pub struct FitArgs {
    /// report.json files from gpt-eval (each must carry val_loss)
    #[arg(long = "report", value_name = "REPORT_JSON")]
    pub reports: Vec<PathBuf>,

    /// Points CSV: model,val_loss,grammar,creativity,consistency,plot,overall
    #[arg(long)]
    pub points: Option<PathBuf>,

    /// Keep only points with val_loss <= threshold
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,

    #[arg(long, default_value = "runs/fit")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
struct Row {
    model: String,
    val_loss: f64,
    grammar: f64,
    creativity: f64,
    consistency: f64,
    plot: f64,
    overall: f64,
}

impl Row {
    fn metric(&self, name: &str) -> f64 {
        match name {
            "grammar" => self.grammar,
            "creativity" => self.creativity,
            "consistency" => self.consistency,
            "plot" => self.plot,
            _ => self.overall,
        }
    }
}

fn rows_from_reports(paths: &[PathBuf]) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)?;
        let report: EvalReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let val_loss = report.val_loss.ok_or_else(|| {
            CliError::Runtime(format!(
                "{}: report carries no val_loss; pass --val-loss to gpt-eval",
                path.display()
            ))
        })?;
        rows.push(Row {
            model: report.model_tag,
            val_loss,
            grammar: report.grammar,
            creativity: report.creativity,
            consistency: report.consistency,
            plot: report.plot,
            overall: report.overall,
        });
    }
    Ok(rows)
}

fn rows_from_csv(path: &PathBuf) -> Result<Vec<Row>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::Runtime(format!(
                "{}:{}: expected 7 fields, got {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.trim()
                .parse()
                .map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), i + 1)))
        };
        rows.push(Row {
            model: fields[0].trim().to_string(),
            val_loss: parse(fields[1])?,
            grammar: parse(fields[2])?,
            creativity: parse(fields[3])?,
            consistency: parse(fields[4])?,
            plot: parse(fields[5])?,
            overall: parse(fields[6])?,
        });
    }
    Ok(rows)
}

const METRICS: [&str; 5] = ["overall", "grammar", "creativity", "consistency", "plot"];

pub fn run(args: FitArgs) -> Result<(), CliError> {
    let mut rows = rows_from_reports(&args.reports)?;
    if let Some(points) = &args.points {
        rows.extend(rows_from_csv(points)?);
    }
    if rows.is_empty() {
        return Err(CliError::InsufficientPoints(
            "no input points: pass --report and/or --points".into(),
        ));
    }

    let fit_path = args.out_dir.join("fit.csv");
    let overall_path = args.out_dir.join("points_overall.csv");
    let categories_path = args.out_dir.join("points_categories.csv");
    RunManifest::new(
        "fit",
        serde_json::json!({
            "reports": args.reports.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "points": args.points.as_ref().map(|p| p.display().to_string()),
            "threshold": args.threshold,
            "n_input_points": rows.len(),
        }),
        0,
    )
    .with_artifacts(&[&fit_path, &overall_path, &categories_path])
    .write(&args.out_dir)?;

    let mut fit_csv = String::from("metric,slope,intercept,r_squared,n\n");
    for metric in METRICS {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.val_loss, r.metric(metric)))
            .collect();
        let kept = filter_by_loss(&points, args.threshold);
        let mut fit = fit_power_law(&kept).map_err(|e| match e {
            FitError::TooFewPoints(n) => CliError::InsufficientPoints(format!(
                "{metric}: {n} points survive the {} threshold, need at least 2",
                args.threshold
            )),
            other => CliError::Runtime(other.to_string()),
        })?;
        fit.threshold = Some(args.threshold);
        fit_csv.push_str(&format!(
            "{metric},{},{},{},{}\n",
            fit.slope, fit.intercept, fit.r_squared, fit.n_points
        ));
        println!(
            "{metric:<12} slope {:+.4}  intercept {:+.4}  R^2 {:.4}  n {}",
            fit.slope, fit.intercept, fit.r_squared, fit.n_points
        );
    }
    std::fs::write(&fit_path, fit_csv)?;

    // Scatter data: overall average and per-category, one row per model,
    // with the filter decision recorded.
    let mut overall = String::from("model,val_loss,ln_val_loss,score,included\n");
    for row in &rows {
        overall.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model,
            row.val_loss,
            row.val_loss.ln(),
            row.overall,
            row.val_loss <= args.threshold
        ));
    }
    std::fs::write(&overall_path, overall)?;

    let mut categories = String::from("metric,model,val_loss,ln_val_loss,score,included\n");
    for metric in METRICS.iter().skip(1) {
        for row in &rows {
            categories.push_str(&format!(
                "{},{},{},{},{},{}\n",
                metric,
                row.model,
                row.val_loss,
                row.val_loss.ln(),
                row.metric(metric),
                row.val_loss <= args.threshold
            ));
        }
    }
    std::fs::write(&categories_path, categories)?;
    Ok(())
}

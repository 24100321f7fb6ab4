//! Report emission: the full report as JSON, ROC tables as CSV and a
//! two-panel SVG figure (ROC curves, predictive-value bars).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::PredictiveValues;
use crate::report::{EvaluationReport, ReportRocPoint};

pub const REPORT_FILE: &str = "report.json";
pub const MODEL_ROC_FILE: &str = "roc_model.csv";
pub const PANEL_ROC_FILE: &str = "roc_panel.csv";
pub const FIGURE_FILE: &str = "figure.svg";

pub fn report_json(report: &EvaluationReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Serde(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<EvaluationReport> {
    serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
}

pub fn read_report(path: &Path) -> Result<EvaluationReport> {
    parse_report(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// `threshold,fpr,tpr`, one line per point; the origin's threshold is `inf`.
pub fn roc_csv(points: &[ReportRocPoint]) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in points {
        match p.threshold {
            Some(t) => writeln!(s, "{t},{},{}", p.fpr, p.tpr),
            None => writeln!(s, "inf,{},{}", p.fpr, p.tpr),
        }
        .expect("writing to a String");
    }
    s
}

const PLOT: f64 = 300.0;
const MARGIN: f64 = 50.0;

fn polyline(points: &[ReportRocPoint], x0: f64, y0: f64, color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", x0 + p.fpr * PLOT, y0 + (1.0 - p.tpr) * PLOT))
        .collect();
    format!(
        "<polyline class=\"roc\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn bar(s: &mut String, x: f64, y0: f64, value: Option<f64>, color: &str, label: &str) {
    let v = value.unwrap_or(0.0);
    let h = v * PLOT;
    let text = value.map_or("n/a".to_string(), |v| format!("{:.0}%", 100.0 * v));
    writeln!(
        s,
        "<rect class=\"bar\" data-label=\"{label}\" x=\"{x:.2}\" y=\"{:.2}\" width=\"30\" height=\"{h:.2}\" fill=\"{color}\"/>",
        y0 + PLOT - h
    )
    .expect("writing to a String");
    writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{text}</text>",
        x + 15.0,
        y0 + PLOT - h - 4.0
    )
    .expect("writing to a String");
}

/// Figure in two panels: both ROC curves against chance, and PPV/NPV bars
/// for model, panel and the prevalence baseline at the declared thresholds.
pub fn figure_svg(report: &EvaluationReport) -> String {
    let width = 2.0 * PLOT + 3.0 * MARGIN + 40.0;
    let height = PLOT + 2.0 * MARGIN + 30.0;
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )
    .expect("writing to a String");
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let (x0, y0) = (MARGIN, MARGIN);
    writeln!(
        s,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PLOT}\" height=\"{PLOT}\" fill=\"none\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{}\" x2=\"{}\" y2=\"{y0}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">False positive rate</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">True positive rate</text>",
        y0 + PLOT,
        x0 + PLOT,
        x0 + PLOT / 2.0,
        y0 + PLOT + 30.0,
        x0 - 30.0,
        y0 + PLOT / 2.0,
        x0 - 30.0,
        y0 + PLOT / 2.0
    )
    .expect("writing to a String");
    s.push_str(&polyline(&report.model.roc, x0, y0, "#1f77b4"));
    s.push_str(&polyline(&report.panel.pooled.roc, x0, y0, "#ff7f0e"));
    writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#1f77b4\">Model AUC {:.3} ± {:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"#ff7f0e\">Panel AUC {:.3} ± {:.3}</text>",
        x0 + PLOT * 0.45,
        y0 + PLOT - 30.0,
        report.model.auc,
        report.model.bootstrap.std,
        x0 + PLOT * 0.45,
        y0 + PLOT - 14.0,
        report.panel.pooled.auc,
        report.panel.pooled.bootstrap.std
    )
    .expect("writing to a String");

    let bx = 2.0 * MARGIN + PLOT + 20.0;
    writeln!(
        s,
        "<line x1=\"{bx}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        y0 + PLOT,
        bx + PLOT,
        y0 + PLOT
    )
    .expect("writing to a String");
    let declared = |block: &[crate::report::LabeledPredictiveValues]| -> PredictiveValues {
        block.first().map(|l| l.values).expect("declared threshold present")
    };
    let model = declared(&report.model.predictive_values);
    let panel = declared(&report.panel.pooled.predictive_values);
    let baseline = report.baseline;
    let series = [
        ("model", "#1f77b4", model),
        ("panel", "#ff7f0e", panel),
        ("random", "#7f7f7f", baseline),
    ];
    for (group, name) in ["PPV", "NPV"].iter().enumerate() {
        let gx = bx + 20.0 + group as f64 * 150.0;
        for (i, (who, color, pv)) in series.iter().enumerate() {
            let value = if group == 0 { pv.ppv } else { pv.npv };
            bar(&mut s, gx + i as f64 * 38.0, y0, value, color, &format!("{who} {name}"));
        }
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{name}</text>",
            gx + 53.0,
            y0 + PLOT + 18.0
        )
        .expect("writing to a String");
    }
    for (i, (who, color, _)) in series.iter().enumerate() {
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{color}\">{who}</text>",
            bx + i as f64 * 80.0,
            y0 - 12.0
        )
        .expect("writing to a String");
    }
    s.push_str("</svg>\n");
    s
}

/// Write report JSON, both ROC tables and the figure into `dir`.
pub fn emit_report(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (REPORT_FILE, report_json(report)?),
        (MODEL_ROC_FILE, roc_csv(&report.model.roc)),
        (PANEL_ROC_FILE, roc_csv(&report.panel.pooled.roc)),
        (FIGURE_FILE, figure_svg(report)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

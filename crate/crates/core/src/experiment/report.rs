//! Cross-variant aggregation and the two result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::models::ModelKind;
use super::stages::EvaluationRecord;
use super::ExperimentError;
use crate::binfmt::write_json;
use crate::eval::{aggregate_variants, VariantAggregate};

/// One metric across variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    /// `(variant, value)` pairs in variant order.
    pub per_variant: Vec<(usize, f64)>,
    pub mean: f64,
    pub sd: f64,
}

impl Metric {
    fn new(per_variant: Vec<(usize, f64)>) -> Result<Self, ExperimentError> {
        let positional: Vec<(usize, f64)> = per_variant
            .iter()
            .enumerate()
            .map(|(i, &(_, x))| (i + 1, x))
            .collect();
        let agg = aggregate_variants(&positional, positional.len())?;
        Ok(Self {
            per_variant,
            mean: agg.mean,
            sd: agg.sd,
        })
    }

    fn aggregate(&self) -> VariantAggregate {
        VariantAggregate {
            mean: self.mean,
            sd: self.sd,
            n: self.per_variant.len(),
        }
    }

    pub fn percent(&self) -> String {
        self.aggregate().format_percent()
    }

    pub fn score(&self) -> String {
        self.aggregate().format_score()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: ModelKind,
    pub name: String,
    pub msp: Metric,
    /// OpenMax accuracy for models whose OpenMax result is reported.
    pub openmax: Option<Metric>,
    /// OpenMax accuracy computed on an experimental path, not tabulated.
    pub openmax_experimental: Option<Metric>,
    pub micro_f1: Metric,
    pub macro_f1: Metric,
    pub map: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub variants: Vec<usize>,
    pub openness: Vec<serde_json::Value>,
    pub majority_baseline: Metric,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, model: ModelKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}

/// Aggregates evaluation records. The variant set is every variant with at
/// least one record; models missing any of those variants are left out.
pub fn build_report(
    records: &[EvaluationRecord],
    openness: Vec<serde_json::Value>,
) -> Result<Report, ExperimentError> {
    let mut by_model: BTreeMap<ModelKind, BTreeMap<usize, &EvaluationRecord>> = BTreeMap::new();
    let mut baseline: BTreeMap<usize, f64> = BTreeMap::new();
    for r in records {
        by_model.entry(r.model).or_default().insert(r.variant, r);
        baseline.insert(r.variant, r.majority_baseline);
    }
    let variants: Vec<usize> = baseline.keys().copied().collect();
    if variants.is_empty() {
        return Err(ExperimentError::MissingUpstream {
            stage: "evaluate".into(),
            detail: "no evaluation results".into(),
        });
    }
    let mut rows = Vec::new();
    for model in ModelKind::ALL {
        let Some(recs) = by_model.get(&model) else { continue };
        if recs.len() != variants.len() {
            log::warn!(
                "{model}: results for {} of {} variants, left out of the report",
                recs.len(),
                variants.len()
            );
            continue;
        }
        let metric = |f: &dyn Fn(&EvaluationRecord) -> f64| {
            Metric::new(recs.iter().map(|(&v, r)| (v, f(r))).collect())
        };
        let om: Option<Vec<(usize, f64)>> = recs
            .iter()
            .map(|(&v, r)| r.openmax.as_ref().map(|o| (v, o.detection.accuracy)))
            .collect();
        let om = om.map(Metric::new).transpose()?;
        let (openmax, openmax_experimental) = if model.openmax_reported() {
            (om, None)
        } else {
            (None, om)
        };
        rows.push(ReportRow {
            model,
            name: model.display_name().to_string(),
            msp: metric(&|r| r.msp.accuracy)?,
            openmax,
            openmax_experimental,
            micro_f1: metric(&|r| r.closed_set.micro_f1)?,
            macro_f1: metric(&|r| r.closed_set.macro_f1)?,
            map: metric(&|r| r.closed_set.map)?,
        });
    }
    Ok(Report {
        majority_baseline: Metric::new(baseline.into_iter().collect())?,
        variants,
        openness,
        rows,
    })
}

const NAME_WIDTH: usize = 30;
const CELL_WIDTH: usize = 14;

fn line(name: &str, cells: &[String]) -> String {
    let mut s = format!("{name:<NAME_WIDTH$}");
    for c in cells {
        let _ = write!(s, "{c:<CELL_WIDTH$}");
    }
    s.truncate(s.trim_end().len());
    s.push('\n');
    s
}

/// Unknown-detection accuracy per model, MSP and OpenMax columns.
pub fn detection_table(report: &Report) -> String {
    let mut s = format!(
        "Unknown detection accuracy (%), mean (SD) over {} variants\n\n",
        report.variants.len()
    );
    s += &line("Model", &["MSP".into(), "OpenMax".into()]);
    for r in &report.rows {
        let om = r.openmax.as_ref().map_or("--".to_string(), Metric::percent);
        s += &line(&r.name, &[r.msp.percent(), om]);
    }
    s += &line("Majority class", &[report.majority_baseline.percent(), "--".into()]);
    s
}

/// Closed-set tagging on clips without unknown classes.
pub fn closed_set_table(report: &Report) -> String {
    let mut s = format!(
        "Closed-set tagging on clips with known classes only, mean (SD) over {} variants\n\n",
        report.variants.len()
    );
    s += &line("Model", &["Micro-F1".into(), "Macro-F1".into(), "mAP".into()]);
    for r in &report.rows {
        s += &line(&r.name, &[r.micro_f1.score(), r.macro_f1.score(), r.map.score()]);
    }
    s
}

/// Writes `table2.txt`, `table3.txt` and `report.json` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let t2 = dir.join("table2.txt");
    let t3 = dir.join("table3.txt");
    let json = dir.join("report.json");
    for (path, text) in [(&t2, detection_table(report)), (&t3, closed_set_table(report))] {
        std::fs::write(path, text).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
    }
    write_json(&json, report)?;
    Ok(vec![t2, t3, json])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric(xs: &[f64]) -> Metric {
        Metric::new(xs.iter().enumerate().map(|(i, &x)| (i + 1, x)).collect()).unwrap()
    }

    #[test]
    fn metric_uses_sample_sd() {
        let m = metric(&[0.5, 0.6, 0.7]);
        assert!((m.mean - 0.6).abs() < 1e-12);
        assert!((m.sd - 0.1).abs() < 1e-12);
        assert_eq!(m.percent(), "60.0 (10.0)");
        assert_eq!(m.score(), "0.600 (0.100)");
    }

    #[test]
    fn tables_render_dashes_for_missing_openmax() {
        let row = |model: ModelKind, om: Option<Metric>| ReportRow {
            model,
            name: model.display_name().into(),
            msp: metric(&[0.574, 0.6]),
            openmax: om,
            openmax_experimental: None,
            micro_f1: metric(&[0.4, 0.5]),
            macro_f1: metric(&[0.3, 0.4]),
            map: metric(&[0.2, 0.3]),
        };
        let report = Report {
            variants: vec![1, 2],
            openness: vec![],
            majority_baseline: metric(&[0.5, 0.5]),
            rows: vec![
                row(ModelKind::MultiLabel, None),
                row(ModelKind::OraclePit, Some(metric(&[0.7, 0.7]))),
            ],
        };
        let t2 = detection_table(&report);
        let lines: Vec<&str> = t2.lines().collect();
        assert!(lines[3].starts_with("Multi-label"));
        assert!(lines[3].ends_with("--"));
        assert!(lines[4].ends_with("70.0 (0.0)"));
        assert!(lines[5].starts_with("Majority class"));
        let t3 = closed_set_table(&report);
        assert!(t3.lines().nth(3).unwrap().contains("0.450 (0.071)"));
    }
}

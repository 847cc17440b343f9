use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MISSING: &str = "–";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub silhouette: Option<f64>,
    pub purity: Option<f64>,
    pub nmi: Option<f64>,
    pub val_acc: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl EvaluationReport {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: Option<f64>, lo: f64| match v {
            Some(x) if !(lo..=1.0).contains(&x) => Err(Error::config(
                name,
                format!("{x} outside [{lo}, 1]"),
            )),
            _ => Ok(()),
        };
        check("silhouette", self.silhouette, -1.0)?;
        check("purity", self.purity, 0.0)?;
        check("nmi", self.nmi, 0.0)?;
        check("val_acc", self.val_acc, 0.0)?;
        if self.n_samples < 2 {
            return Err(Error::config("n_samples", "must be at least 2"));
        }
        Ok(())
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.4}"))
}

/// Descending `val_acc`; reports without one go last, ties keep input order.
fn sorted(reports: &[EvaluationReport]) -> Vec<&EvaluationReport> {
    let mut v: Vec<&EvaluationReport> = reports.iter().collect();
    v.sort_by(|a, b| match (a.val_acc, b.val_acc) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    v
}

const HEADER: [&str; 7] = ["method", "val_acc", "silhouette", "purity", "nmi", "n_samples", "seed"];

fn rows(reports: &[EvaluationReport]) -> Vec<[String; 7]> {
    sorted(reports)
        .into_iter()
        .map(|r| {
            [
                r.method.clone(),
                cell(r.val_acc),
                cell(r.silhouette),
                cell(r.purity),
                cell(r.nmi),
                r.n_samples.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect()
}

pub fn comparison_csv(reports: &[EvaluationReport]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in rows(reports) {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn comparison_table(reports: &[EvaluationReport]) -> String {
    let rows = rows(reports);
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.chars().count()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = " ".repeat(w - c.chars().count());
                if i == 0 {
                    format!("{c}{pad}")
                } else {
                    format!("{pad}{c}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Writes the CSV to `out_path` and the aligned text table beside it with a
/// `.txt` extension. Returns the text table path.
pub fn compare_methods(reports: &[EvaluationReport], out_path: &Path) -> Result<PathBuf> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(dir) = out_path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(out_path, comparison_csv(reports))?;
    let txt = out_path.with_extension("txt");
    fs::write(&txt, comparison_table(reports))?;
    Ok(txt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(method: &str, val_acc: Option<f64>) -> EvaluationReport {
        EvaluationReport {
            method: method.into(),
            silhouette: None,
            purity: Some(0.5),
            nmi: Some(0.25),
            val_acc,
            n_samples: 10,
            seed: 1,
        }
    }

    #[test]
    fn single_report_single_row() {
        let csv = comparison_csv(&[rep("kmeans", Some(0.5))]);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "kmeans,0.5000,–,0.5000,0.2500,10,1"
        );
    }

    #[test]
    fn sorted_by_validation_accuracy() {
        let reports = [rep("kmeans", Some(0.5)), rep("none", None), rep("infogan", Some(0.8))];
        let csv = comparison_csv(&reports);
        let methods: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(methods, ["infogan", "kmeans", "none"]);
        let table = comparison_table(&reports);
        assert!(table.lines().nth(2).unwrap().starts_with("infogan"));
        assert!(table.contains('–'));
    }

    #[test]
    fn files_and_json_mirror() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cmp.csv");
        let txt = compare_methods(&[rep("a", Some(0.7))], &path).unwrap();
        assert!(path.exists() && txt.exists());
        let json = serde_json::to_value(rep("a", None)).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 7);
        assert!(json["val_acc"].is_null());
        assert!(matches!(compare_methods(&[], &path), Err(Error::EmptyInput)));
    }

    #[test]
    fn validation_ranges() {
        assert!(rep("a", Some(0.3)).validate().is_ok());
        assert!(rep("a", Some(1.3)).validate().is_err());
        let mut r = rep("a", None);
        r.silhouette = Some(-0.5);
        assert!(r.validate().is_ok());
        r.n_samples = 1;
        assert!(r.validate().is_err());
    }
}

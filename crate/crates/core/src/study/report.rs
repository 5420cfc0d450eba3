use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::state::{ModelRun, Study};
use super::StudyError;
use crate::label::{Label, RATER_CHOICES, REFERENCE_CLASSES};
use crate::metrics::{
    accuracy, class_metrics, cohen_kappa, confusion, pairwise_agreement, roc_auc, weighted_avg,
    ClassMetrics, ConfusionMatrix, KappaResult, MetricKind, MetricsError, PairwiseAgreement,
    RocCurve, RocTarget,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One row of the comparison tables: a rater (or the model) against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterRow {
    pub rater_id: String,
    pub items: usize,
    pub matrix: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub weighted: Weighted,
    pub accuracy: f64,
    /// `None` when chance agreement is 1.
    pub kappa: Option<KappaResult>,
}

/// Unweighted mean of each cell over the complete human raters. A per-class
/// cell is `None` when no rater has it defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub raters: usize,
    pub per_class_f1: Vec<(Label, Option<f64>)>,
    pub weighted: Weighted,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub run_id: String,
    pub model_version: String,
    pub row: Option<RaterRow>,
    pub failed_items: Vec<String>,
    pub roc: Vec<RocCurve>,
    /// ROC targets that could not be computed, with the reason.
    pub roc_undefined: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRater {
    pub rater_id: String,
    pub answered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub study_id: String,
    pub items: usize,
    pub reference_support: Vec<(Label, u64)>,
    pub raters: Vec<RaterRow>,
    pub rater_average: Option<AverageRow>,
    pub model: Option<ModelSection>,
    pub pairwise: Vec<PairwiseAgreement>,
    pub excluded_raters: Vec<ExcludedRater>,
    pub footnotes: Vec<String>,
}

fn metrics_err(e: MetricsError) -> StudyError {
    StudyError::Argument(e.to_string())
}

fn rater_row(
    rater_id: &str,
    refs: &[Label],
    answers: &[Label],
    pred_order: &[Label],
) -> Result<RaterRow, StudyError> {
    let matrix = confusion(refs, answers, &REFERENCE_CLASSES, pred_order).map_err(metrics_err)?;
    let per_class = REFERENCE_CLASSES
        .iter()
        .map(|&c| class_metrics(&matrix, c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(metrics_err)?;
    let w = |k| weighted_avg(&per_class, k).map_err(metrics_err);
    let kappa = match cohen_kappa(refs, answers) {
        Ok(k) => Some(k),
        Err(MetricsError::DegenerateAgreement) => None,
        Err(e) => return Err(metrics_err(e)),
    };
    Ok(RaterRow {
        rater_id: rater_id.to_string(),
        items: refs.len(),
        weighted: Weighted {
            precision: w(MetricKind::Precision)?,
            recall: w(MetricKind::Recall)?,
            f1: w(MetricKind::F1)?,
        },
        accuracy: accuracy(&matrix).map_err(metrics_err)?,
        matrix,
        per_class,
        kappa,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn average_row(rows: &[RaterRow]) -> Option<AverageRow> {
    if rows.is_empty() {
        return None;
    }
    let cell = |f: &dyn Fn(&RaterRow) -> f64| mean(rows.iter().map(f)).expect("nonempty");
    Some(AverageRow {
        raters: rows.len(),
        per_class_f1: REFERENCE_CLASSES
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, mean(rows.iter().filter_map(|r| r.per_class[i].f1))))
            .collect(),
        weighted: Weighted {
            precision: cell(&|r| r.weighted.precision),
            recall: cell(&|r| r.weighted.recall),
            f1: cell(&|r| r.weighted.f1),
        },
        accuracy: cell(&|r| r.accuracy),
    })
}

fn model_section(study: &Study, run: &ModelRun) -> Result<ModelSection, StudyError> {
    let mut refs = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for item in study.items() {
        if let Some(r) = run.results.iter().find(|r| r.item_id == item.item_id) {
            refs.push(item.reference_label);
            labels.push(r.label);
            scores.push(r.probabilities);
        }
    }
    let pred_order = [Label::Afib, Label::Nsr, Label::Other, Label::Noise];
    let row = if refs.is_empty() {
        None
    } else {
        Some(rater_row("model", &refs, &labels, &pred_order)?)
    };
    let mut roc = Vec::new();
    let mut roc_undefined = Vec::new();
    let targets = REFERENCE_CLASSES
        .iter()
        .map(|&c| RocTarget::Class(c))
        .chain([RocTarget::Micro]);
    for target in targets {
        match roc_auc(&scores, &refs, target) {
            Ok(c) => roc.push(c),
            Err(e @ (MetricsError::UndefinedAuc { .. } | MetricsError::EmptyMatrix)) => {
                roc_undefined.push((target.to_string(), e.to_string()))
            }
            Err(e) => return Err(metrics_err(e)),
        }
    }
    let mut failed_items: Vec<String> = run.failures.iter().map(|f| f.item_id.clone()).collect();
    failed_items.sort();
    Ok(ModelSection {
        run_id: run.run_id.clone(),
        model_version: run.model_version.clone(),
        row,
        failed_items,
        roc,
        roc_undefined,
    })
}

/// Builds the comparison report from committed state only. Raters with
/// unanswered items are excluded and listed; the latest model run is used.
pub fn build_report(study: &Study) -> Result<AgreementReport, StudyError> {
    let items = study.items();
    let refs: Vec<Label> = items.iter().map(|i| i.reference_label).collect();

    let mut complete: Vec<(String, Vec<Label>)> = Vec::new();
    let mut excluded_raters = Vec::new();
    for rater in &study.created.raters {
        let answers: Option<Vec<Label>> = items
            .iter()
            .map(|i| {
                study
                    .annotation(&rater.rater_id, &i.item_id)
                    .map(|a| a.label)
            })
            .collect();
        match answers {
            Some(a) => complete.push((rater.rater_id.clone(), a)),
            None => excluded_raters.push(ExcludedRater {
                rater_id: rater.rater_id.clone(),
                answered: study.answered(&rater.rater_id),
                total: items.len(),
            }),
        }
    }
    let model_run = study.latest_model_run();
    if complete.is_empty() && model_run.is_none() {
        return Err(StudyError::EmptyReport);
    }

    let raters = complete
        .iter()
        .map(|(id, answers)| rater_row(id, &refs, answers, &RATER_CHOICES))
        .collect::<Result<Vec<_>, _>>()?;
    let pairwise = if complete.len() >= 2 {
        pairwise_agreement(&complete).map_err(metrics_err)?
    } else {
        Vec::new()
    };
    let model = model_run.map(|run| model_section(study, run)).transpose()?;

    let mut footnotes = vec![
        "All precision, recall, F1 and accuracy values are percentages.".to_string(),
        "Weighted averages are support-weighted over AFIB, NSR and OTHER; macro averages are not reported.".to_string(),
        "NOT-SURE and NOISE answers count as errors for the true class and as false positives for no class.".to_string(),
        "Rater average is the unweighted mean of each cell over complete human raters; undefined cells are skipped."
            .to_string(),
        "Kappa p-value: two-sided Wald test of kappa = 0 using the reported standard error.".to_string(),
    ];
    if let Some(m) = &model {
        if !m.failed_items.is_empty() {
            footnotes.push(format!(
                "The model row excludes {} item(s) the pipeline could not process.",
                m.failed_items.len()
            ));
        }
    }
    if !excluded_raters.is_empty() {
        footnotes.push(format!(
            "{} partial rater(s) excluded.",
            excluded_raters.len()
        ));
    }

    Ok(AgreementReport {
        study_id: study.id().to_string(),
        items: items.len(),
        reference_support: REFERENCE_CLASSES
            .iter()
            .map(|&c| (c, refs.iter().filter(|&&r| r == c).count() as u64))
            .collect(),
        rater_average: average_row(&raters),
        raters,
        model,
        pairwise,
        excluded_raters,
        footnotes,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{:.1}", 100.0 * v))
}

fn p_value(k: &KappaResult) -> String {
    match k.p_value {
        None => "n/a".into(),
        Some(p) if p < 0.001 => "<.001".into(),
        Some(p) => format!("{p:.3}"),
    }
}

fn matrix_md(out: &mut String, m: &ConfusionMatrix, row_title: &str) {
    let _ = write!(out, "| {row_title} |");
    for c in m.predicted_classes() {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(m.predicted_classes().len()));
    out.push('\n');
    for (r, row) in m.reference_classes().iter().zip(m.counts()) {
        let _ = write!(out, "| {r} |");
        for v in row {
            let _ = write!(out, " {v} |");
        }
        out.push('\n');
    }
}

impl AgreementReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    fn table_rows(&self) -> Vec<(&str, &RaterRow)> {
        let mut rows: Vec<(&str, &RaterRow)> = self
            .raters
            .iter()
            .map(|r| (r.rater_id.as_str(), r))
            .collect();
        if let Some(row) = self.model.as_ref().and_then(|m| m.row.as_ref()) {
            rows.push(("Model", row));
        }
        rows
    }

    /// Tables in the layout of the paper: weighted metrics, per-class F1 with
    /// accuracy, and kappa against the reference.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Agreement report: {}\n", self.study_id);
        let support: Vec<String> = self
            .reference_support
            .iter()
            .map(|(l, n)| format!("{l} {n}"))
            .collect();
        let _ = writeln!(
            out,
            "{} items (reference: {}).\n",
            self.items,
            support.join(", ")
        );

        let rows = self.table_rows();
        let model_row = self.model.as_ref().and_then(|m| m.row.as_ref());
        let humans = &rows[..self.raters.len()];

        out.push_str("## Table I. Weighted performance metrics\n\n");
        out.push_str("| | Weighted Avg. Precision | Weighted Avg. Recall | Weighted Avg. F1-Score |\n|---|---:|---:|---:|\n");
        let weighted_line = |out: &mut String, name: &str, w: &Weighted| {
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} |",
                pct(Some(w.precision)),
                pct(Some(w.recall)),
                pct(Some(w.f1))
            );
        };
        for (name, r) in humans {
            weighted_line(&mut out, name, &r.weighted);
        }
        if let Some(a) = &self.rater_average {
            weighted_line(&mut out, "Rater Avg.", &a.weighted);
        }
        if let Some(m) = model_row {
            weighted_line(&mut out, "Model", &m.weighted);
        }

        out.push_str("\n## Table II. F1-score per class and accuracy\n\n");
        out.push_str("| | F1-Score (AFIB) | F1-Score (NSR) | F1-Score (OTHER) | Accuracy |\n|---|---:|---:|---:|---:|\n");
        let f1_line = |out: &mut String, name: &str, r: &RaterRow| {
            let f1: Vec<String> = r.per_class.iter().map(|c| pct(c.f1)).collect();
            let _ = writeln!(
                out,
                "| {name} | {} | {} |",
                f1.join(" | "),
                pct(Some(r.accuracy))
            );
        };
        for (name, r) in humans {
            f1_line(&mut out, name, r);
        }
        if let Some(a) = &self.rater_average {
            let f1: Vec<String> = a.per_class_f1.iter().map(|(_, v)| pct(*v)).collect();
            let _ = writeln!(
                out,
                "| Rater Avg. | {} | {} |",
                f1.join(" | "),
                pct(Some(a.accuracy))
            );
        }
        if let Some(m) = model_row {
            f1_line(&mut out, "Model", m);
        }

        out.push_str("\n## Table III. Cohen's kappa against the reference\n\n");
        out.push_str("| | κ Value | Standard Error | 95% CI | p Value | Agreement |\n|---|---:|---:|---:|---:|---|\n");
        for (name, r) in &rows {
            match &r.kappa {
                Some(k) => {
                    let _ = writeln!(
                        out,
                        "| {name} | {:.2} | {:.3} | {:.2} to {:.2} | {} | {} |",
                        k.kappa,
                        k.se,
                        k.ci_low,
                        k.ci_high,
                        p_value(k),
                        k.band
                    );
                }
                None => {
                    let _ = writeln!(out, "| {name} | n/a | n/a | n/a | n/a | undefined |");
                }
            }
        }

        out.push_str("\n## Confusion matrices against the reference\n");
        for (name, r) in &rows {
            let _ = writeln!(out, "\n### {name}\n");
            matrix_md(&mut out, &r.matrix, "reference \\ answer");
        }

        if !self.pairwise.is_empty() {
            out.push_str("\n## Pairwise rater agreement\n");
            for p in &self.pairwise {
                let kappa = p
                    .kappa
                    .as_ref()
                    .map_or("n/a".into(), |k| format!("{:.2} ({})", k.kappa, k.band));
                let _ = writeln!(out, "\n### {} vs {}: κ = {kappa}\n", p.rater_a, p.rater_b);
                matrix_md(
                    &mut out,
                    &p.matrix,
                    &format!("{} \\ {}", p.rater_a, p.rater_b),
                );
            }
        }

        if let Some(m) = &self.model {
            let _ = writeln!(out, "\n## Model ROC ({}, {})\n", m.run_id, m.model_version);
            out.push_str("| Target | AUC | Positives | Negatives |\n|---|---:|---:|---:|\n");
            for c in &m.roc {
                let _ = writeln!(
                    out,
                    "| {} | {:.2} | {} | {} |",
                    c.target, c.auc, c.positives, c.negatives
                );
            }
            for (target, why) in &m.roc_undefined {
                let _ = writeln!(out, "| {target} | n/a ({why}) | | |");
            }
            if !m.failed_items.is_empty() {
                let _ = writeln!(out, "\nFailed items: {}", m.failed_items.join(", "));
            }
        }

        if !self.excluded_raters.is_empty() {
            out.push_str("\n## Excluded raters\n\n");
            for r in &self.excluded_raters {
                let _ = writeln!(out, "- {}: {}/{} answered", r.rater_id, r.answered, r.total);
            }
        }

        out.push_str("\n---\n");
        for f in &self.footnotes {
            let _ = writeln!(out, "- {f}");
        }
        out
    }
}

//! Train/test splitting, accuracy reports and the cluster-count sweep.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesnet::{BayesClassifier, BayesError, ClassifierKind, StructureOptions};
use crate::corpus::DescriptorTable;
use crate::pipeline::{fit_classifier, instances, label_split, split_table, PipelineSettings};
use crate::Error as PipelineError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("class {class} has {count} instance(s); stratification needs at least 2")]
    Stratification { class: usize, count: usize },
    #[error("train fraction must lie in (0, 1), got {0}")]
    Fraction(f64),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class seeded shuffle, then the first `floor(fraction * count)`
/// instances (clamped so both sides are non-empty) go to training.
/// Returned indices are sorted.
pub fn stratified_split(classes: &[usize], train_fraction: f64, seed: u64) -> Result<Split, EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::Fraction(train_fraction));
    }
    let class_count = classes.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); class_count];
    for (i, &c) in classes.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(EvalError::Stratification { class, count: members.len() });
        }
        members.shuffle(&mut rng);
        // the epsilon keeps e.g. 0.29 * 100 from rounding down to 28
        let cut = ((train_fraction * members.len() as f64 + 1e-9).floor() as usize).clamp(1, members.len() - 1);
        split.train.extend_from_slice(&members[..cut]);
        split.test.extend_from_slice(&members[cut..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Anything that maps a discrete instance to a class index.
pub trait Predictor: Sync {
    fn class_count(&self) -> usize;
    fn n_attrs(&self) -> usize;
    fn predict(&self, x: &[usize]) -> Result<usize, BayesError>;
}

impl Predictor for BayesClassifier {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn n_attrs(&self) -> usize {
        self.cardinalities.len()
    }

    fn predict(&self, x: &[usize]) -> Result<usize, BayesError> {
        BayesClassifier::predict(self, x)
    }
}

/// Identifies the experiment a report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    pub split_seed: u64,
    pub k_clusters: usize,
    pub kind: ClassifierKind,
    pub threshold_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_accuracy: Vec<f64>,
    /// Unweighted mean over classes present in the evaluated set.
    pub mean_classification: f64,
    pub pcc: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub context: EvalContext,
}

impl EvalReport {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

pub fn evaluate<P: Predictor + ?Sized>(model: &P, test: &[(Vec<usize>, usize)], context: EvalContext) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Config("empty evaluation set".into()));
    }
    let k = model.class_count();
    for (x, c) in test {
        if x.len() != model.n_attrs() {
            return Err(EvalError::Config(format!(
                "instance has {} attributes, model expects {}",
                x.len(),
                model.n_attrs()
            )));
        }
        if *c >= k {
            return Err(EvalError::Config(format!("class {c} outside the model's {k} classes")));
        }
    }
    let predictions = test
        .par_iter()
        .map(|(x, _)| model.predict(x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut confusion = vec![vec![0u64; k]; k];
    for ((_, truth), pred) in test.iter().zip(predictions) {
        confusion[*truth][pred] += 1;
    }
    let per_class_accuracy: Vec<f64> = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: u64 = row.iter().sum();
            if n == 0 {
                0.0
            } else {
                row[c] as f64 / n as f64
            }
        })
        .collect();
    let present: Vec<usize> = (0..k).filter(|&c| confusion[c].iter().sum::<u64>() > 0).collect();
    let mean_classification = present.iter().map(|&c| per_class_accuracy[c]).sum::<f64>() / present.len() as f64;
    let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        per_class_accuracy,
        mean_classification,
        pcc: correct as f64 / test.len() as f64,
        confusion,
        context,
    })
}

/// One classifier's train and test reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub options: StructureOptions,
    pub train: EvalReport,
    pub test: EvalReport,
}

pub const TRAINING_SET: &str = "training set";
pub const TEST_SET: &str = "test set";

/// Display name of a classifier variant, e.g. `TAN` or `FAN (x1.5)`.
pub fn variant_label(opts: &StructureOptions) -> String {
    match opts.kind {
        ClassifierKind::Fan => format!("FAN (x{})", opts.threshold_multiplier),
        kind => kind.label().to_string(),
    }
}

impl ReportRow {
    pub fn label(&self) -> String {
        variant_label(&self.options)
    }

    pub fn lines(&self) -> [TableLine<'_>; 2] {
        [
            TableLine {
                options: self.options,
                set: TRAINING_SET,
                report: &self.train,
            },
            TableLine {
                options: self.options,
                set: TEST_SET,
                report: &self.test,
            },
        ]
    }
}

/// One line of a report table: a classifier evaluated on one set.
#[derive(Debug, Clone, Copy)]
pub struct TableLine<'a> {
    pub options: StructureOptions,
    pub set: &'a str,
    pub report: &'a EvalReport,
}

/// Plain-text table with per-class accuracies and their mean; the
/// classifier name is printed on the first of its consecutive lines.
pub fn format_table(class_names: &[String], lines: &[TableLine<'_>]) -> String {
    let label_w = lines.iter().map(|l| variant_label(&l.options).len()).max().unwrap_or(0).max(10);
    let set_w = lines.iter().map(|l| l.set.len()).max().unwrap_or(0).max(12);
    let col_w = class_names.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}  {:set_w$}", "", "");
    for name in class_names {
        let _ = write!(out, "  {name:>col_w$}");
    }
    let _ = writeln!(out, "  {:>19}", "mean classification");
    let mut previous: Option<StructureOptions> = None;
    for line in lines {
        let label = if previous == Some(line.options) {
            String::new()
        } else {
            variant_label(&line.options)
        };
        previous = Some(line.options);
        let _ = write!(out, "{label:label_w$}  {:set_w$}", line.set);
        for acc in &line.report.per_class_accuracy {
            let _ = write!(out, "  {acc:>col_w$.2}");
        }
        let _ = writeln!(out, "  {:>19.2}", line.report.mean_classification);
    }
    out
}

/// CSV twin of [`format_table`], with full-precision values.
pub fn reports_csv(class_names: &[String], lines: &[TableLine<'_>]) -> String {
    let mut out = String::from("classifier,threshold_multiplier,k,set");
    for name in class_names {
        let _ = write!(out, ",{}", csv_field(name));
    }
    out.push_str(",mean_classification,pcc\n");
    for line in lines {
        let _ = write!(
            out,
            "{},{},{},{}",
            line.options.kind,
            line.options.threshold_multiplier,
            line.report.context.k_clusters,
            csv_field(line.set)
        );
        for acc in &line.report.per_class_accuracy {
            let _ = write!(out, ",{acc}");
        }
        let _ = writeln!(out, ",{},{}", line.report.mean_classification, line.report.pcc);
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reports for every classifier variant at one cluster count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGroup {
    pub k: usize,
    pub rows: Vec<ReportRow>,
}

/// The classifier variants a sweep evaluates: NB, TAN, and FAN at each
/// threshold multiplier.
pub fn sweep_variants(base: &StructureOptions, fan_multipliers: &[f64]) -> Vec<StructureOptions> {
    let mut v = vec![
        StructureOptions {
            kind: ClassifierKind::Nb,
            ..*base
        },
        StructureOptions {
            kind: ClassifierKind::Tan,
            ..*base
        },
    ];
    v.extend(fan_multipliers.iter().map(|&m| StructureOptions {
        kind: ClassifierKind::Fan,
        threshold_multiplier: m,
        ..*base
    }));
    v
}

/// Runs codebook → label vectors → structure → parameters → evaluation for
/// every cluster count, reusing one split (from `base.seed`) throughout.
pub fn sweep_clusters(
    table: &DescriptorTable,
    k_values: &[usize],
    base: &PipelineSettings,
    variants: &[StructureOptions],
) -> Result<Vec<SweepGroup>, PipelineError> {
    if k_values.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one cluster count".into()));
    }
    if variants.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one classifier".into()));
    }
    let split = split_table(table, base)?;
    let class_count = table.class_names.len();
    k_values
        .iter()
        .map(|&k| {
            let settings = PipelineSettings {
                k_clusters: k,
                ..base.clone()
            };
            let labelled = label_split(table, split.clone(), &settings)?;
            let train = instances(&labelled.train);
            let test = instances(&labelled.test);
            let rows = variants
                .iter()
                .map(|opts| {
                    let model = fit_classifier(&labelled, k, class_count, opts)?;
                    let context = EvalContext {
                        split_seed: base.seed,
                        k_clusters: k,
                        kind: opts.kind,
                        threshold_multiplier: opts.threshold_multiplier,
                    };
                    Ok(ReportRow {
                        options: *opts,
                        train: evaluate(&model, &train, context)?,
                        test: evaluate(&model, &test, context)?,
                    })
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            Ok(SweepGroup { k, rows })
        })
        .collect()
}

/// One row per (k, classifier variant).
pub fn sweep_csv(groups: &[SweepGroup]) -> String {
    let mut out = String::from("k,classifier,threshold_multiplier,train_mean_classification,test_mean_classification,test_pcc\n");
    for g in groups {
        for r in &g.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                g.k, r.options.kind, r.options.threshold_multiplier, r.train.mean_classification, r.test.mean_classification, r.test.pcc
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(usize, usize);

    impl Predictor for Constant {
        fn class_count(&self) -> usize {
            self.0
        }
        fn n_attrs(&self) -> usize {
            1
        }
        fn predict(&self, _: &[usize]) -> Result<usize, BayesError> {
            Ok(self.1)
        }
    }

    struct Oracle;

    impl Predictor for Oracle {
        fn class_count(&self) -> usize {
            3
        }
        fn n_attrs(&self) -> usize {
            1
        }
        fn predict(&self, x: &[usize]) -> Result<usize, BayesError> {
            Ok(x[0])
        }
    }

    fn ctx() -> EvalContext {
        EvalContext {
            split_seed: 1,
            k_clusters: 5,
            kind: ClassifierKind::Nb,
            threshold_multiplier: 1.0,
        }
    }

    #[test]
    fn split_halves_each_class() {
        let classes: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let s = stratified_split(&classes, 0.5, 3).unwrap();
        for c in 0..5 {
            assert_eq!(s.train.iter().filter(|&&i| classes[i] == c).count(), 5);
            assert_eq!(s.test.iter().filter(|&&i| classes[i] == c).count(), 5);
        }
        assert_eq!(s, stratified_split(&classes, 0.5, 3).unwrap());
        assert_ne!(s, stratified_split(&classes, 0.5, 4).unwrap());
    }

    #[test]
    fn split_rounding() {
        let classes = vec![0; 10];
        let s = stratified_split(&classes, 0.9, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (9, 1));
        let s = stratified_split(&classes, 0.99, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (9, 1));
        let s = stratified_split(&classes, 0.01, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 9));
    }

    #[test]
    fn split_errors() {
        assert!(matches!(stratified_split(&[0, 0, 1], 0.5, 0), Err(EvalError::Stratification { class: 1, count: 1 })));
        assert!(matches!(stratified_split(&[0, 0], 1.0, 0), Err(EvalError::Fraction(_))));
        assert!(stratified_split(&[0, 0], 0.0, 0).is_err());
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let test: Vec<(Vec<usize>, usize)> = (0..25).map(|i| (vec![0], i % 5)).collect();
        let r = evaluate(&Constant(5, 0), &test, ctx()).unwrap();
        assert!((r.pcc - 0.2).abs() < 1e-15);
        assert_eq!(r.per_class_accuracy, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((r.mean_classification - 0.2).abs() < 1e-15);
        assert_eq!(r.total(), 25);
        for (c, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), 5, "class {c}");
        }
    }

    #[test]
    fn perfect_predictor() {
        let test: Vec<(Vec<usize>, usize)> = (0..9).map(|i| (vec![i % 3], i % 3)).collect();
        let r = evaluate(&Oracle, &test, ctx()).unwrap();
        assert_eq!(r.pcc, 1.0);
        assert_eq!(r.confusion, vec![vec![3, 0, 0], vec![0, 3, 0], vec![0, 0, 3]]);
        assert_eq!(r, evaluate(&Oracle, &test, ctx()).unwrap());
    }

    #[test]
    fn evaluate_rejects_mismatch() {
        assert!(evaluate(&Oracle, &[(vec![0, 1], 0)], ctx()).is_err());
        assert!(evaluate(&Oracle, &[], ctx()).is_err());
        assert!(evaluate(&Oracle, &[(vec![0], 7)], ctx()).is_err());
    }

    #[test]
    fn table_layout() {
        let test: Vec<(Vec<usize>, usize)> = (0..25).map(|i| (vec![0], i % 5)).collect();
        let r = evaluate(&Constant(5, 0), &test, ctx()).unwrap();
        let names: Vec<String> = (1..=5).map(|i| format!("class {i}")).collect();
        let rows = [ReportRow {
            options: StructureOptions::default(),
            train: r.clone(),
            test: r,
        }];
        let lines: Vec<TableLine> = rows.iter().flat_map(ReportRow::lines).collect();
        let text = format_table(&names, &lines);
        let text_lines: Vec<&str> = text.lines().collect();
        assert_eq!(text_lines.len(), 3);
        assert!(text_lines[0].contains("class 5") && text_lines[0].ends_with("mean classification"));
        assert!(text_lines[1].starts_with("NB") && text_lines[1].contains("training set"));
        assert!(text_lines[2].starts_with("  ") && text_lines[2].contains("test set") && text_lines[2].ends_with("0.20"));
        let csv = reports_csv(&names, &lines);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("nb,1,5,test set,1,0,0,0,0,0.2,0.2"));
    }
}

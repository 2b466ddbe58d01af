//! The four pipeline verbs. Each reads its inputs from disk, writes its
//! outputs atomically, and returns what it wrote so callers can inspect it.

use std::fs;
use std::path::{Path, PathBuf};

use blockbayes::clustering::image_descriptors;
use blockbayes::eval::{
    evaluate as evaluate_set, format_table, reports_csv, sweep_clusters, sweep_csv, sweep_variants, EvalContext,
    ReportRow, SweepGroup, TableLine, TEST_SET, TRAINING_SET,
};
use blockbayes::features::FeatureConfig;
use blockbayes::imageio::decode_pgm;
use blockbayes::pipeline::{self, instances, ClassifierModel};
use blockbayes::{BlockGrid, DescriptorTable, EvalReport};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::CliError;

/// Writes through a sibling temp file so a failed run leaves nothing behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let result = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::io(dir, e))?;
    out.sort();
    Ok(out)
}

/// `(relative path, class name)` for every PGM in the class subdirectories
/// of `dir`, in lexicographic path order.
pub fn scan_images(dir: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut images = Vec::new();
    for class_dir in sorted_entries(dir)? {
        if !class_dir.is_dir() {
            continue;
        }
        let class = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| CliError::Usage(format!("non UTF-8 class directory {}", class_dir.display())))?
            .to_string();
        for file in sorted_entries(&class_dir)? {
            if file.is_file() && is_pgm(&file) {
                let name = file.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
                    CliError::Usage(format!("non UTF-8 file name {}", file.display()))
                })?;
                images.push((format!("{class}/{name}"), class.clone()));
            }
        }
    }
    if images.is_empty() {
        return Err(CliError::NoImages(dir.to_path_buf()));
    }
    Ok(images)
}

/// Decodes and describes every image under `dir` (in parallel).
pub fn describe_directory(dir: &Path, grid: BlockGrid, features: &FeatureConfig) -> Result<DescriptorTable, CliError> {
    let images = scan_images(dir)?;
    let rows = images
        .into_par_iter()
        .map(|(rel, class)| {
            let path = dir.join(&rel);
            let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            let blocks = decode_pgm(&bytes)
                .map_err(blockbayes::Error::from)
                .and_then(|img| image_descriptors(&img, grid, features).map_err(blockbayes::Error::from))
                .map_err(|source| CliError::Image { path: path.clone(), source })?;
            Ok((rel, class, blocks))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(DescriptorTable::from_rows(rows).map_err(blockbayes::Error::from)?)
}

fn table_csv(table: &DescriptorTable) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(blockbayes::Error::from)?;
    Ok(buf)
}

pub fn extract(cfg: &PipelineConfig, data_dir: &Path, out: &Path) -> Result<DescriptorTable, CliError> {
    cfg.validate()?;
    let table = describe_directory(data_dir, cfg.grid, &cfg.features())?;
    write_atomic(out, &table_csv(&table)?)?;
    Ok(table)
}

pub fn load_table(path: &Path) -> Result<DescriptorTable, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(DescriptorTable::read_csv(file).map_err(blockbayes::Error::from)?)
}

pub fn load_model(path: &Path) -> Result<ClassifierModel, CliError> {
    Ok(ClassifierModel::from_json(&read_text(path)?)?)
}

pub fn train(cfg: &PipelineConfig, descriptors: &Path, out: &Path) -> Result<ClassifierModel, CliError> {
    cfg.validate()?;
    let table = load_table(descriptors)?;
    let (model, _) = pipeline::train(&table, &cfg.settings())?;
    let mut json = model.to_json()?;
    json.push('\n');
    write_atomic(out, json.as_bytes())?;
    Ok(model)
}

pub enum EvalInput<'a> {
    /// A descriptor table; rows are grouped by the model's split manifest.
    Descriptors(&'a Path),
    /// A directory of class subdirectories, described with the model's
    /// own feature settings; everything counts as test data.
    Images(&'a Path),
}

/// Report files written by [`evaluate`].
pub struct EvalOutput {
    pub reports: Vec<(&'static str, EvalReport)>,
    pub table: String,
    pub csv: String,
}

fn model_context(model: &ClassifierModel) -> EvalContext {
    EvalContext {
        split_seed: model.settings.seed,
        k_clusters: model.settings.k_clusters,
        kind: model.settings.structure.kind,
        threshold_multiplier: model.settings.structure.threshold_multiplier,
    }
}

/// Classifies the input with a saved model and writes `<out>.txt` (aligned
/// table) and `<out>.csv`.
pub fn evaluate(model_path: &Path, input: EvalInput<'_>, out: &Path) -> Result<EvalOutput, CliError> {
    let model = load_model(model_path)?;
    let (table, groups): (DescriptorTable, Vec<(&'static str, Vec<usize>)>) = match input {
        EvalInput::Descriptors(path) => {
            let table = load_table(path)?;
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, e) in table.entries.iter().enumerate() {
                if model.split.train.contains(&e.path) {
                    train.push(i);
                } else {
                    test.push(i);
                }
            }
            (table, vec![(TRAINING_SET, train), (TEST_SET, test)])
        }
        EvalInput::Images(dir) => {
            let table = describe_directory(dir, model.settings.grid, &model.settings.features)?;
            let all = (0..table.entries.len()).collect();
            (table, vec![(TEST_SET, all)])
        }
    };
    let ctx = model_context(&model);
    let mut reports = Vec::new();
    for (set, rows) in groups {
        if rows.is_empty() {
            continue;
        }
        let labels = model.label_table_rows(&table, &rows)?;
        let report = evaluate_set(&model.classifier, &instances(&labels), ctx).map_err(blockbayes::Error::from)?;
        reports.push((set, report));
    }
    if reports.is_empty() {
        return Err(CliError::Usage("nothing to evaluate".into()));
    }
    let lines: Vec<TableLine<'_>> = reports
        .iter()
        .map(|(set, report)| TableLine {
            options: model.settings.structure,
            set,
            report,
        })
        .collect();
    let text = format_table(&model.class_names, &lines);
    let csv = reports_csv(&model.class_names, &lines);
    write_atomic(&out.with_extension("txt"), text.as_bytes())?;
    write_atomic(&out.with_extension("csv"), csv.as_bytes())?;
    Ok(EvalOutput {
        reports,
        table: text,
        csv,
    })
}

pub struct SweepOutput {
    pub groups: Vec<SweepGroup>,
    pub table: String,
    pub csv: String,
}

/// Runs NB, TAN and FAN (once per threshold multiplier) for every cluster
/// count. Writes the plottable CSV to `out` and the full train/test tables
/// next to it with a `.txt` extension.
pub fn sweep(
    cfg: &PipelineConfig,
    descriptors: &Path,
    k_values: &[usize],
    multipliers: &[f64],
    out: &Path,
) -> Result<SweepOutput, CliError> {
    cfg.validate()?;
    if k_values.is_empty() || k_values.iter().any(|&k| k < 2) {
        return Err(CliError::Usage(format!("cluster counts must be >= 2, got {k_values:?}")));
    }
    if multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(CliError::Usage(format!("threshold multipliers must be finite and >= 0, got {multipliers:?}")));
    }
    let table = load_table(descriptors)?;
    let settings = cfg.settings();
    let variants = sweep_variants(&settings.structure, multipliers);
    let groups = sweep_clusters(&table, k_values, &settings, &variants)?;
    let mut text = String::new();
    for g in &groups {
        text.push_str(&format!("k = {}\n", g.k));
        let lines: Vec<TableLine<'_>> = g.rows.iter().flat_map(ReportRow::lines).collect();
        text.push_str(&format_table(&table.class_names, &lines));
        text.push('\n');
    }
    let csv = sweep_csv(&groups);
    write_atomic(out, csv.as_bytes())?;
    write_atomic(&out.with_extension("txt"), text.as_bytes())?;
    Ok(SweepOutput {
        groups,
        table: text,
        csv,
    })
}

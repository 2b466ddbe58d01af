//! End-to-end training: split, codebook, label vectors, structure and
//! parameters, bundled into a self-contained model.

use serde::{Deserialize, Serialize};

use crate::bayesnet::{BayesClassifier, DiscreteDataset, StructureOptions};
use crate::clustering::{assign_label, kmeans_fit, Codebook, LabelVector};
use crate::corpus::DescriptorTable;
use crate::eval::{stratified_split, Split};
use crate::features::FeatureConfig;
use crate::imageio::BlockGrid;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub grid: BlockGrid,
    pub features: FeatureConfig,
    pub k_clusters: usize,
    pub kmeans_max_iter: usize,
    pub structure: StructureOptions,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            grid: BlockGrid::default(),
            features: FeatureConfig::default(),
            k_clusters: 8,
            kmeans_max_iter: 100,
            structure: StructureOptions::default(),
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Image paths on each side of the train/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Everything needed to classify new images without retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub settings: PipelineSettings,
    pub class_names: Vec<String>,
    pub codebook: Codebook,
    pub classifier: BayesClassifier,
    pub split: SplitManifest,
}

/// Fits the codebook on every block descriptor of the given images.
pub fn fit_codebook(table: &DescriptorTable, images: &[usize], k: usize, seed: u64, max_iter: usize) -> Result<Codebook, Error> {
    let descriptors: Vec<&[f64]> = images
        .iter()
        .flat_map(|&i| table.entries[i].blocks.iter().map(|b| b.as_slice()))
        .collect();
    Ok(kmeans_fit(&descriptors, k, seed, max_iter)?.codebook)
}

pub fn label_entries(table: &DescriptorTable, images: &[usize], cb: &Codebook) -> Result<Vec<LabelVector>, Error> {
    images
        .iter()
        .map(|&i| {
            let e = &table.entries[i];
            let labels = e
                .blocks
                .iter()
                .map(|b| assign_label(b.as_slice(), cb))
                .collect::<Result<_, _>>()?;
            Ok(LabelVector {
                labels,
                class: Some(e.class),
            })
        })
        .collect()
}

/// Zero-based `(states, class)` pairs; every vector must carry a class.
pub fn instances(labels: &[LabelVector]) -> Vec<(Vec<usize>, usize)> {
    labels
        .iter()
        .map(|lv| (lv.states(), lv.class.expect("labelled instance")))
        .collect()
}

pub fn dataset(labels: &[LabelVector], k_clusters: usize, class_count: usize) -> Result<DiscreteDataset, Error> {
    let n_attrs = labels.first().map_or(0, |l| l.labels.len());
    Ok(DiscreteDataset::with_instances(
        vec![k_clusters; n_attrs],
        class_count,
        instances(labels),
    )?)
}

/// Train and test label vectors under one codebook.
#[derive(Debug, Clone)]
pub struct LabelledSplit {
    pub split: Split,
    pub codebook: Codebook,
    pub train: Vec<LabelVector>,
    pub test: Vec<LabelVector>,
}

pub fn split_table(table: &DescriptorTable, settings: &PipelineSettings) -> Result<Split, Error> {
    Ok(stratified_split(&table.classes(), settings.train_fraction, settings.seed)?)
}

/// Fits the codebook on the training images only and labels both sides.
pub fn label_split(table: &DescriptorTable, split: Split, settings: &PipelineSettings) -> Result<LabelledSplit, Error> {
    let codebook = fit_codebook(table, &split.train, settings.k_clusters, settings.seed, settings.kmeans_max_iter)?;
    let train = label_entries(table, &split.train, &codebook)?;
    let test = label_entries(table, &split.test, &codebook)?;
    Ok(LabelledSplit {
        split,
        codebook,
        train,
        test,
    })
}

pub fn fit_classifier(labelled: &LabelledSplit, k_clusters: usize, class_count: usize, opts: &StructureOptions) -> Result<BayesClassifier, Error> {
    let ds = dataset(&labelled.train, k_clusters, class_count)?;
    Ok(BayesClassifier::fit(&ds, opts)?)
}

pub fn train(table: &DescriptorTable, settings: &PipelineSettings) -> Result<(ClassifierModel, LabelledSplit), Error> {
    if table.n_blocks != settings.grid.len() {
        return Err(Error::Config(format!(
            "descriptor table has {} blocks per image but grid {} has {}",
            table.n_blocks,
            settings.grid,
            settings.grid.len()
        )));
    }
    let labelled = label_split(table, split_table(table, settings)?, settings)?;
    let classifier = fit_classifier(&labelled, settings.k_clusters, table.class_names.len(), &settings.structure)?;
    let paths = |idx: &[usize]| idx.iter().map(|&i| table.entries[i].path.clone()).collect();
    let model = ClassifierModel {
        settings: settings.clone(),
        class_names: table.class_names.clone(),
        codebook: labelled.codebook.clone(),
        classifier,
        split: SplitManifest {
            train: paths(&labelled.split.train),
            test: paths(&labelled.split.test),
        },
    };
    Ok((model, labelled))
}

impl ClassifierModel {
    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    /// Labels descriptor-table rows with this model's codebook; class
    /// names are mapped onto the model's class indices.
    pub fn label_table_rows(&self, table: &DescriptorTable, rows: &[usize]) -> Result<Vec<LabelVector>, Error> {
        if table.n_blocks != self.settings.grid.len() || table.descriptor_len() != self.codebook.dim() {
            return Err(Error::Config(format!(
                "table layout ({} blocks x {}) does not match the model ({} blocks x {})",
                table.n_blocks,
                table.descriptor_len(),
                self.settings.grid.len(),
                self.codebook.dim()
            )));
        }
        let mut out = label_entries(table, rows, &self.codebook)?;
        for (lv, &row) in out.iter_mut().zip(rows) {
            let name = &table.class_names[table.entries[row].class];
            let class = self
                .class_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Config(format!("class {name:?} is unknown to the model")))?;
            lv.class = Some(class);
        }
        Ok(out)
    }
}

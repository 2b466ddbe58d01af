//! Per-image descriptor tables and their CSV form.
//!
//! One row per image: relative path, class name, then every block
//! descriptor flattened in block order. Column names carry the layout
//! (`b{block}_w{j}`, `b{block}_m{j}`, `b{block}_energy`, ...), so a table is
//! self-describing.

use std::io::{Read, Write};

use thiserror::Error;

use crate::features::BlockDescriptor;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("descriptor table: {0}")]
    Layout(String),
}

const TEXTURE_COLUMNS: [&str; 4] = ["energy", "entropy", "contrast", "homogeneity"];

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorEntry {
    pub path: String,
    pub class: usize,
    pub blocks: Vec<BlockDescriptor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorTable {
    /// Sorted; `entry.class` indexes into this list.
    pub class_names: Vec<String>,
    pub n_blocks: usize,
    pub k_sup: usize,
    pub entries: Vec<DescriptorEntry>,
}

impl DescriptorTable {
    /// Builds a table from `(path, class name, blocks)` rows. Class indices
    /// follow the lexicographic order of the names; rows are kept sorted by
    /// path.
    pub fn from_rows(rows: Vec<(String, String, Vec<BlockDescriptor>)>) -> Result<Self, CorpusError> {
        let mut class_names: Vec<String> = rows.iter().map(|(_, c, _)| c.clone()).collect();
        class_names.sort();
        class_names.dedup();
        let first = rows.first().ok_or_else(|| CorpusError::Layout("no images".into()))?;
        let n_blocks = first.2.len();
        let dlen = first.2.first().map(BlockDescriptor::len).unwrap_or(0);
        if n_blocks == 0 || dlen < 6 || (dlen - 4) % 2 != 0 {
            return Err(CorpusError::Layout(format!("unsupported layout: {n_blocks} blocks of length {dlen}")));
        }
        let mut entries = Vec::with_capacity(rows.len());
        for (path, class, blocks) in rows {
            if blocks.len() != n_blocks || blocks.iter().any(|b| b.len() != dlen) {
                return Err(CorpusError::Layout(format!("{path}: block layout differs from the first image")));
            }
            let class = class_names.binary_search(&class).expect("class collected above");
            entries.push(DescriptorEntry { path, class, blocks });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self {
            class_names,
            n_blocks,
            k_sup: (dlen - 4) / 2,
            entries,
        })
    }

    pub fn descriptor_len(&self) -> usize {
        2 * self.k_sup + 4
    }

    pub fn classes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.class).collect()
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["path".to_string(), "class".to_string()];
        for b in 0..self.n_blocks {
            h.extend((1..=self.k_sup).map(|j| format!("b{b}_w{j}")));
            h.extend((1..=self.k_sup).map(|j| format!("b{b}_m{j}")));
            h.extend(TEXTURE_COLUMNS.iter().map(|t| format!("b{b}_{t}")));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for e in &self.entries {
            let mut rec = vec![e.path.clone(), self.class_names[e.class].clone()];
            rec.extend(e.blocks.iter().flat_map(|b| b.as_slice().iter().map(|v| v.to_string())));
            out.write_record(rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, CorpusError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "path" || &header[1] != "class" {
            return Err(CorpusError::Layout("header must start with path,class".into()));
        }
        let k_sup = header.iter().filter(|h| h.starts_with("b0_w")).count();
        let dlen = 2 * k_sup + 4;
        let values = header.len() - 2;
        if k_sup == 0 || values % dlen != 0 {
            return Err(CorpusError::Layout(format!("{values} value columns do not split into blocks of {dlen}")));
        }
        let n_blocks = values / dlen;
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let nums = rec
                .iter()
                .skip(2)
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CorpusError::Layout(format!("row {}: {e}", line + 1)))?;
            let blocks = nums.chunks(dlen).map(|c| BlockDescriptor(c.to_vec())).collect::<Vec<_>>();
            debug_assert_eq!(blocks.len(), n_blocks);
            rows.push((rec[0].to_string(), rec[1].to_string(), blocks));
        }
        Self::from_rows(rows)
    }
}

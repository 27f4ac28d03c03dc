use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::folds::{grouped_kfold, kfold, predefined_split, stratified_kfold, FoldPlan};
use super::{EvalError, Result};

/// One row of `clip_id,path,label[,target2][,group][,split]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub clip_id: String,
    /// Resolved against the manifest's directory when relative.
    pub path: PathBuf,
    pub label: String,
    pub target2: Option<String>,
    pub group: Option<String>,
    pub split: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub has_target2: bool,
    pub has_group: bool,
    pub has_split: bool,
}

const REQUIRED: [&str; 3] = ["clip_id", "path", "label"];
const OPTIONAL: [&str; 3] = ["target2", "group", "split"];

pub fn parse_manifest<R: Read>(reader: R, base_dir: &Path) -> Result<Manifest> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(|e| EvalError::Manifest(e.to_string()))?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[..3] != REQUIRED {
        return Err(EvalError::Manifest(format!("header must start with clip_id,path,label, got {}", header.join(","))));
    }
    let mut optional = [None; 3];
    for (col, name) in header.iter().enumerate().skip(3) {
        match OPTIONAL.iter().position(|o| o == name) {
            Some(p) if optional[p].is_none() => optional[p] = Some(col),
            Some(_) => return Err(EvalError::Manifest(format!("duplicate column '{name}'"))),
            None => return Err(EvalError::Manifest(format!("unknown column '{name}' (optional columns: {})", OPTIONAL.join(", ")))),
        }
    }
    let mut rows = Vec::new();
    let mut ids = HashSet::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| EvalError::Manifest(e.to_string()))?;
        let row = line + 2;
        let field = |c: usize| -> Result<String> {
            let v = rec.get(c).unwrap_or("");
            if v.is_empty() {
                return Err(EvalError::Manifest(format!("row {row}: empty '{}'", header[c])));
            }
            Ok(v.to_string())
        };
        let clip_id = field(0)?;
        if !ids.insert(clip_id.clone()) {
            return Err(EvalError::Manifest(format!("row {row}: duplicate clip_id '{clip_id}'")));
        }
        let raw = PathBuf::from(field(1)?);
        let path = if raw.is_absolute() { raw } else { base_dir.join(raw) };
        let opt = |k: usize| optional[k].map(field).transpose();
        rows.push(ManifestRow { clip_id, path, label: field(2)?, target2: opt(0)?, group: opt(1)?, split: opt(2)? });
    }
    if rows.is_empty() {
        return Err(EvalError::Manifest("no rows".into()));
    }
    Ok(Manifest { rows, has_target2: optional[0].is_some(), has_group: optional[1].is_some(), has_split: optional[2].is_some() })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
    parse_manifest(file, path.parent().unwrap_or(Path::new(".")))
}

/// Sorted distinct label names and each row's id among them.
pub fn encode_labels<S: AsRef<str>>(labels: &[S]) -> (Vec<String>, Vec<u32>) {
    let mut names: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
    names.sort();
    names.dedup();
    let ids = labels.iter().map(|l| names.binary_search_by(|n| n.as_str().cmp(l.as_ref())).expect("present") as u32).collect();
    (names, ids)
}

fn parse_value(s: &str, row: usize) -> Result<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| EvalError::Manifest(format!("row {row}: '{s}' is not a finite number")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetTargets {
    Classes { names: Vec<String>, ids: Vec<u32> },
    /// One column of values per named target.
    Regression { names: Vec<String>, values: Vec<Vec<f64>> },
}

/// Features with targets and the optional plan columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub clip_ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub targets: DatasetTargets,
    pub groups: Option<Vec<String>>,
    pub split: Option<Vec<String>>,
}

impl LabeledDataset {
    /// Targets of the manifest rows; `target2` switches to two-target
    /// regression (arousal, valence), `regress` forces single-target regression.
    pub fn targets_of(manifest: &Manifest, regress: bool) -> Result<DatasetTargets> {
        if manifest.has_target2 {
            let mut a = Vec::new();
            let mut v = Vec::new();
            for (i, r) in manifest.rows.iter().enumerate() {
                a.push(parse_value(&r.label, i + 2)?);
                v.push(parse_value(r.target2.as_deref().unwrap_or(""), i + 2)?);
            }
            Ok(DatasetTargets::Regression { names: vec!["arousal".into(), "valence".into()], values: vec![a, v] })
        } else if regress {
            let vals = manifest.rows.iter().enumerate().map(|(i, r)| parse_value(&r.label, i + 2)).collect::<Result<Vec<_>>>()?;
            Ok(DatasetTargets::Regression { names: vec!["value".into()], values: vec![vals] })
        } else {
            let labels: Vec<&str> = manifest.rows.iter().map(|r| r.label.as_str()).collect();
            let (names, ids) = encode_labels(&labels);
            Ok(DatasetTargets::Classes { names, ids })
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.len();
        let lens = [
            Some(self.clip_ids.len()),
            Some(match &self.targets {
                DatasetTargets::Classes { ids, .. } => ids.len(),
                DatasetTargets::Regression { values, .. } => values.iter().map(Vec::len).min().unwrap_or(0),
            }),
            self.groups.as_ref().map(Vec::len),
            self.split.as_ref().map(Vec::len),
        ];
        for l in lens.into_iter().flatten() {
            if l != n {
                return Err(EvalError::LengthMismatch { expected: n, got: l });
            }
        }
        if let Some(d) = self.features.first().map(Vec::len) {
            if let Some(r) = self.features.iter().find(|r| r.len() != d) {
                return Err(EvalError::LengthMismatch { expected: d, got: r.len() });
            }
        }
        Ok(())
    }

    /// Predefined when a split column exists, grouped when a group column
    /// exists, otherwise stratified (classes) or plain k-fold (regression).
    pub fn default_plan(&self, k: usize, seed: u64) -> Result<FoldPlan> {
        if let Some(s) = &self.split {
            return predefined_split(s);
        }
        if let Some(g) = &self.groups {
            return grouped_kfold(g, k, seed);
        }
        match &self.targets {
            DatasetTargets::Classes { ids, .. } => stratified_kfold(ids, k, seed),
            DatasetTargets::Regression { .. } => kfold(self.features.len(), k, seed),
        }
    }
}

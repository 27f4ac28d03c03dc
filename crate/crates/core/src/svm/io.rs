//! Trained machines in the `CNF1` container. Support vectors and
//! coefficients are stored as f32 records; biases, C, gamma and epsilon keep
//! full precision in the metadata.

use serde::{Deserialize, Serialize};

use super::grid::TrainedSvm;
use super::kernel::KernelSpec;
use super::svc::{BinaryMachine, SvcModel};
use super::svr::SvrModel;
use super::{Result, SvmError};
use crate::weights::{TensorRecord, WeightFile, WeightsError};

pub const SVM_FORMAT: &str = "svm-model";

#[derive(Serialize, Deserialize)]
struct MachineMeta {
    positive: usize,
    negative: usize,
    bias: f64,
}

#[derive(Serialize, Deserialize)]
struct SvmMeta {
    format: String,
    task: String,
    kernel: KernelSpec,
    c: f64,
    n_features: usize,
    #[serde(default)]
    classes: Vec<u32>,
    #[serde(default)]
    machines: Vec<MachineMeta>,
    #[serde(default)]
    epsilon: f64,
    #[serde(default)]
    bias: f64,
}

fn matrix_record(name: String, rows: &[Vec<f64>], d: usize) -> TensorRecord {
    TensorRecord::new(name, &[rows.len(), d], rows.iter().flatten().map(|&v| v as f32).collect())
}

fn vector_record(name: String, v: &[f64]) -> TensorRecord {
    TensorRecord::new(name, &[v.len()], v.iter().map(|&x| x as f32).collect())
}

pub fn svm_to_container(model: &TrainedSvm) -> Result<WeightFile> {
    let (meta, records) = match model {
        TrainedSvm::Classifier(m) => {
            let mut records = Vec::new();
            for (k, mac) in m.machines.iter().enumerate() {
                records.push(matrix_record(format!("machine{k}.support_vectors"), &mac.support_vectors, m.n_features));
                records.push(vector_record(format!("machine{k}.dual_coef"), &mac.dual_coef));
            }
            let meta = SvmMeta {
                format: SVM_FORMAT.into(),
                task: "classify".into(),
                kernel: m.kernel,
                c: m.c,
                n_features: m.n_features,
                classes: m.classes.clone(),
                machines: m.machines.iter().map(|mac| MachineMeta { positive: mac.positive, negative: mac.negative, bias: mac.bias }).collect(),
                epsilon: 0.0,
                bias: 0.0,
            };
            (meta, records)
        }
        TrainedSvm::Regressor(m) => {
            let records = vec![matrix_record("support_vectors".into(), &m.support_vectors, m.n_features), vector_record("coef".into(), &m.coef)];
            let meta = SvmMeta {
                format: SVM_FORMAT.into(),
                task: "regress".into(),
                kernel: m.kernel,
                c: m.c,
                n_features: m.n_features,
                classes: Vec::new(),
                machines: Vec::new(),
                epsilon: m.epsilon,
                bias: m.bias,
            };
            (meta, records)
        }
    };
    let metadata = serde_json::to_value(meta).map_err(|e| WeightsError::Malformed(e.to_string()))?;
    Ok(WeightFile { metadata, records })
}

fn rows_of(file: &WeightFile, name: &str, d: usize) -> Result<Vec<Vec<f64>>> {
    let r = file.get(name).ok_or_else(|| WeightsError::RecordMismatch(format!("missing record '{name}'")))?;
    if r.shape.len() != 2 || r.shape[1] as usize != d {
        return Err(WeightsError::RecordMismatch(format!("record '{name}' has shape {:?}", r.shape)).into());
    }
    Ok(r.data.chunks(d.max(1)).take(r.shape[0] as usize).map(|c| c.iter().map(|&v| v as f64).collect()).collect())
}

fn values_of(file: &WeightFile, name: &str, n: usize) -> Result<Vec<f64>> {
    let r = file.get(name).ok_or_else(|| WeightsError::RecordMismatch(format!("missing record '{name}'")))?;
    if r.shape != [n as u32] {
        return Err(WeightsError::RecordMismatch(format!("record '{name}' has shape {:?}, expected [{n}]", r.shape)).into());
    }
    Ok(r.data.iter().map(|&v| v as f64).collect())
}

pub fn svm_from_container(file: &WeightFile) -> Result<TrainedSvm> {
    let meta: SvmMeta = serde_json::from_value(file.metadata.clone()).map_err(|e| WeightsError::Malformed(format!("svm metadata: {e}")))?;
    if meta.format != SVM_FORMAT {
        return Err(WeightsError::Malformed(format!("metadata format '{}' is not '{SVM_FORMAT}'", meta.format)).into());
    }
    meta.kernel.validate()?;
    let d = meta.n_features;
    match meta.task.as_str() {
        "classify" => {
            let mut machines = Vec::with_capacity(meta.machines.len());
            for (k, mm) in meta.machines.iter().enumerate() {
                let support_vectors = rows_of(file, &format!("machine{k}.support_vectors"), d)?;
                let dual_coef = values_of(file, &format!("machine{k}.dual_coef"), support_vectors.len())?;
                machines.push(BinaryMachine { positive: mm.positive, negative: mm.negative, support_vectors, dual_coef, bias: mm.bias });
            }
            if file.records.len() != 2 * machines.len() {
                return Err(WeightsError::RecordMismatch("unexpected records in classifier file".into()).into());
            }
            Ok(TrainedSvm::Classifier(SvcModel { classes: meta.classes, kernel: meta.kernel, c: meta.c, n_features: d, machines }))
        }
        "regress" => {
            let support_vectors = rows_of(file, "support_vectors", d)?;
            let coef = values_of(file, "coef", support_vectors.len())?;
            Ok(TrainedSvm::Regressor(SvrModel {
                kernel: meta.kernel,
                c: meta.c,
                epsilon: meta.epsilon,
                n_features: d,
                support_vectors,
                coef,
                bias: meta.bias,
            }))
        }
        other => Err(SvmError::InvalidParameter(format!("unknown svm task '{other}'"))),
    }
}

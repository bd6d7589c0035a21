//! JSON persistence for fitted models.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::MmsbmModel;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{ImmsbmModel, PairPredictor};
use crate::vocab::Vocabulary;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Immsbm,
    Mmsbm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Immsbm => "immsbm",
            ModelKind::Mmsbm => "mmsbm",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    model_kind: ModelKind,
    #[serde(rename = "T")]
    clusters: usize,
    input_labels: Vec<String>,
    output_labels: Vec<String>,
    theta: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Immsbm(ImmsbmModel),
    Mmsbm(MmsbmModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Immsbm(_) => ModelKind::Immsbm,
            AnyModel::Mmsbm(_) => ModelKind::Mmsbm,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            AnyModel::Immsbm(m) => m.vocab(),
            AnyModel::Mmsbm(m) => m.vocab(),
        }
    }

    pub fn n_clusters(&self) -> usize {
        match self {
            AnyModel::Immsbm(m) => m.n_clusters(),
            AnyModel::Mmsbm(m) => m.n_clusters(),
        }
    }

    pub fn predictor(&self) -> &dyn PairPredictor {
        match self {
            AnyModel::Immsbm(m) => m,
            AnyModel::Mmsbm(m) => m,
        }
    }

    fn to_file(&self) -> ModelFile {
        let (theta, p) = match self {
            AnyModel::Immsbm(m) => (m.theta(), m.p()),
            AnyModel::Mmsbm(m) => (m.theta(), m.p()),
        };
        let vocab = self.vocab();
        ModelFile {
            format_version: FORMAT_VERSION,
            model_kind: self.kind(),
            clusters: self.n_clusters(),
            input_labels: vocab.inputs.labels().to_vec(),
            output_labels: vocab.outputs.labels().to_vec(),
            theta: theta.to_vec(),
            p: p.to_vec(),
        }
    }
}

impl From<ImmsbmModel> for AnyModel {
    fn from(m: ImmsbmModel) -> Self {
        AnyModel::Immsbm(m)
    }
}

impl From<MmsbmModel> for AnyModel {
    fn from(m: MmsbmModel) -> Self {
        AnyModel::Mmsbm(m)
    }
}

pub fn to_json(model: &AnyModel) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&model.to_file())?;
    text.push('\n');
    Ok(text)
}

/// Parses and fully validates a model document.
pub fn from_json(text: &str) -> Result<AnyModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::InvalidModel(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let vocab = Vocabulary::from_labels(file.input_labels, file.output_labels)?;
    match file.model_kind {
        ModelKind::Immsbm => Ok(AnyModel::Immsbm(ImmsbmModel::new(
            vocab,
            file.clusters,
            file.theta,
            file.p,
        )?)),
        ModelKind::Mmsbm => Ok(AnyModel::Mmsbm(MmsbmModel::new(
            vocab,
            file.clusters,
            file.theta,
            file.p,
        )?)),
    }
}

pub fn read_model<R: Read>(mut reader: R) -> Result<AnyModel> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    from_json(&text)
}

pub fn write_model<W: Write>(mut writer: W, model: &AnyModel) -> Result<()> {
    writer.write_all(to_json(model)?.as_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

pub fn save_model(path: &Path, model: &AnyModel) -> Result<()> {
    write_atomic(path, to_json(model)?.as_bytes())
}

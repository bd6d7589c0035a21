//! Label <-> dense id maps for the input and output entity spaces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered set of labels; a label's id is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a space from a list that must not contain duplicates.
    pub fn from_labels(labels: Vec<String>, space: &'static str) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (id, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), id).is_some() {
                return Err(Error::DuplicateLabel {
                    space,
                    label: label.clone(),
                });
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Returns the id of `label`, appending it if it is new.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(id) = self.index.get(label) {
            return *id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }
}

impl Serialize for LabelSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        LabelSpace::from_labels(labels, "entity").map_err(serde::de::Error::custom)
    }
}

/// Input space I and output space O. The two may share labels or be disjoint;
/// they are always indexed independently.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub inputs: LabelSpace,
    pub outputs: LabelSpace,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels(input_labels: Vec<String>, output_labels: Vec<String>) -> Result<Self> {
        Ok(Self {
            inputs: LabelSpace::from_labels(input_labels, "input")?,
            outputs: LabelSpace::from_labels(output_labels, "output")?,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn input_id(&self, label: &str) -> Result<usize> {
        self.inputs.id(label).ok_or_else(|| Error::UnknownLabel {
            space: "input",
            label: label.to_owned(),
        })
    }

    pub fn output_id(&self, label: &str) -> Result<usize> {
        self.outputs.id(label).ok_or_else(|| Error::UnknownLabel {
            space: "output",
            label: label.to_owned(),
        })
    }

    /// Synthetic labels `i0..`, `x0..` for generated data.
    pub fn numbered(n_inputs: usize, n_outputs: usize) -> Self {
        let inputs = (0..n_inputs).map(|k| format!("i{k}")).collect();
        let outputs = (0..n_outputs).map(|k| format!("x{k}")).collect();
        // Numbered labels are unique by construction.
        Self::from_labels(inputs, outputs).expect("numbered labels are unique")
    }
}

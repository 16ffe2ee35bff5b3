use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::FeatureError;

/// Maps label text to class indices. Index 0 is the most frequent training
/// label; ties are broken lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEncoder {
    ordered_labels: Vec<String>,
    index_of: HashMap<String, usize>,
}

impl LabelEncoder {
    /// Builds an encoder from an explicit order, e.g. one read back from
    /// model metadata.
    pub fn from_ordered(ordered_labels: Vec<String>) -> Result<Self, FeatureError> {
        let index_of: HashMap<String, usize> = ordered_labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        if index_of.len() < 2 || index_of.len() != ordered_labels.len() {
            return Err(FeatureError::SingleClass);
        }
        Ok(LabelEncoder {
            ordered_labels,
            index_of,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.ordered_labels
    }

    pub fn len(&self) -> usize {
        self.ordered_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.index_of.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.ordered_labels[index]
    }
}

impl Serialize for LabelEncoder {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.ordered_labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelEncoder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        LabelEncoder::from_ordered(labels).map_err(serde::de::Error::custom)
    }
}

/// Orders labels by descending count, then ascending label text.
pub fn labels_by_frequency(counts: &BTreeMap<String, usize>) -> Vec<String> {
    let mut ordered: Vec<(&String, &usize)> = counts.iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ordered.into_iter().map(|(l, _)| l.clone()).collect()
}

/// Fits an encoder on training-partition labels.
pub fn encode_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<LabelEncoder, FeatureError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.to_string()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(FeatureError::SingleClass);
    }
    LabelEncoder::from_ordered(labels_by_frequency(&counts))
}

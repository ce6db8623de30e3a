//! Dataset profiling: twelve schema-agnostic features computed over the union
//! of both collections.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::datamodel::{serialize_entity, EntityCollection};
use crate::error::{Error, Result};

/// Feature names in encoding order.
pub const FEATURE_NAMES: [&str; 12] = [
    "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8", "F9", "F10", "F11", "F12",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetFeatures {
    /// F1: number of entities.
    pub f1_entities: f64,
    /// F2: distinct attribute names.
    pub f2_attributes: f64,
    /// F3: distinct values, across all attributes.
    pub f3_distinct_values: f64,
    /// F4: attribute-value pairs.
    pub f4_av_pairs: f64,
    /// F5 = F4 / F1.
    pub f5_mean_profile_size: f64,
    /// F6 = F4 / F2.
    pub f6_mean_attribute_size: f64,
    /// F7 = F3 / F1.
    pub f7_mean_distinct_entity_values: f64,
    /// F8 = F3 / F2.
    pub f8_mean_distinct_attribute_values: f64,
    /// F9: largest profile.
    pub f9_max_profile_size: f64,
    /// F10 = F1 × F7 − F4.
    pub f10_missing_information: f64,
    /// F11: mean whitespace tokens of the serialized entity.
    pub f11_mean_value_tokens: f64,
    /// F12: mean character length of the serialized entity.
    pub f12_mean_value_length: f64,
    /// F1 × F2 − F4, the count of absent attribute slots.
    pub f10_alt_missing_slots: f64,
}

impl DatasetFeatures {
    /// The twelve features in F1..F12 order. `alt_f10` substitutes the
    /// absent-slot count for F10.
    pub fn to_vec(&self, alt_f10: bool) -> [f64; 12] {
        [
            self.f1_entities,
            self.f2_attributes,
            self.f3_distinct_values,
            self.f4_av_pairs,
            self.f5_mean_profile_size,
            self.f6_mean_attribute_size,
            self.f7_mean_distinct_entity_values,
            self.f8_mean_distinct_attribute_values,
            self.f9_max_profile_size,
            if alt_f10 {
                self.f10_alt_missing_slots
            } else {
                self.f10_missing_information
            },
            self.f11_mean_value_tokens,
            self.f12_mean_value_length,
        ]
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Computes the features in one pass over all attribute-value pairs.
/// Pairs with an empty value count as missing.
pub fn profile_dataset(e1: &EntityCollection, e2: &EntityCollection) -> Result<DatasetFeatures> {
    if e1.is_empty() {
        return Err(Error::EmptyCollection(e1.source_id().to_string()));
    }
    if e2.is_empty() {
        return Err(Error::EmptyCollection(e2.source_id().to_string()));
    }
    let mut attributes: HashSet<&str> = HashSet::new();
    let mut values: HashSet<&str> = HashSet::new();
    let mut pairs = 0usize;
    let mut max_profile = 0usize;
    let mut tokens = 0usize;
    let mut chars = 0usize;
    let mut entities = 0usize;
    for e in e1.entities().iter().chain(e2.entities()) {
        entities += 1;
        let mut size = 0;
        for (name, value) in &e.attributes {
            if value.is_empty() {
                continue;
            }
            attributes.insert(name);
            values.insert(value);
            size += 1;
        }
        pairs += size;
        max_profile = max_profile.max(size);
        let sentence = serialize_entity(e);
        tokens += sentence.split_whitespace().count();
        chars += sentence.chars().count();
    }
    let f1 = entities as f64;
    let f2 = attributes.len() as f64;
    let f3 = values.len() as f64;
    let f4 = pairs as f64;
    let f7 = ratio(f3, f1);
    Ok(DatasetFeatures {
        f1_entities: f1,
        f2_attributes: f2,
        f3_distinct_values: f3,
        f4_av_pairs: f4,
        f5_mean_profile_size: ratio(f4, f1),
        f6_mean_attribute_size: ratio(f4, f2),
        f7_mean_distinct_entity_values: f7,
        f8_mean_distinct_attribute_values: ratio(f3, f2),
        f9_max_profile_size: max_profile as f64,
        f10_missing_information: f1 * f7 - f4,
        f11_mean_value_tokens: tokens as f64 / f1,
        f12_mean_value_length: chars as f64 / f1,
        f10_alt_missing_slots: f1 * f2 - f4,
    })
}

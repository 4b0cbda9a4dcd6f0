//! The 18 human-likeness dimensions, in their canonical order.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Number of fine-grained dimensions every rating vector carries.
pub const NUM_DIMENSIONS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Semantic features and pragmatic habits.
    I,
    /// Non-physiological paralinguistic features.
    II,
    /// Physiological paralinguistic features.
    III,
    /// Mechanical persona.
    IV,
    /// Emotional expression.
    V,
}

impl Category {
    pub fn title(self) -> &'static str {
        match self {
            Category::I => "Semantic Features and Pragmatic Habits",
            Category::II => "Non-Physiological Paralinguistic Features",
            Category::III => "Physiological Paralinguistic Features",
            Category::IV => "Mechanical Persona",
            Category::V => "Emotional Expression",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::I => "I",
            Category::II => "II",
            Category::III => "III",
            Category::IV => "IV",
            Category::V => "V",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub id: usize,
    pub code: String,
    pub name: String,
    pub category: Category,
}

const TAXONOMY: [(&str, &str, Category); NUM_DIMENSIONS] = [
    ("MC", "Memory Consistency", Category::I),
    ("LC", "Logical Coherence", Category::I),
    ("PA", "Pronunciation Accuracy", Category::I),
    ("CS", "Code-switching", Category::I),
    ("LI", "Linguistic Imprecision", Category::I),
    ("UF", "Use of Fillers", Category::I),
    ("MM", "Metaphor & Implied Meaning", Category::I),
    ("RT", "Rhythm", Category::II),
    ("IT", "Intonation", Category::II),
    ("ST", "Stress", Category::II),
    ("AV", "Auxiliary Vocalizations", Category::II),
    ("MN", "Micro-physiological Noise", Category::III),
    ("PI", "Pronunciation Instability", Category::III),
    ("AC", "Accent", Category::III),
    ("SB", "Sycophant Behavior", Category::IV),
    ("WE", "Written-style Expression", Category::IV),
    ("TS", "Textual Sentiment", Category::V),
    ("AE", "Acoustic Emotion", Category::V),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRegistry {
    entries: Vec<Dimension>,
}

impl Default for DimensionRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl DimensionRegistry {
    /// The standard five-category, 18-dimension taxonomy.
    pub fn standard() -> Self {
        let entries = TAXONOMY
            .iter()
            .enumerate()
            .map(|(id, &(code, name, category))| Dimension {
                id,
                code: code.to_string(),
                name: name.to_string(),
                category,
            })
            .collect();
        Self { entries }
    }

    /// Builds a registry from explicit entries, checking that ids run 0..17
    /// without gaps and codes are unique.
    pub fn from_entries(entries: Vec<Dimension>) -> Result<Self> {
        if entries.len() != NUM_DIMENSIONS {
            return Err(Error::invalid(format!(
                "registry must have {NUM_DIMENSIONS} entries, got {}",
                entries.len()
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.id != i {
                return Err(Error::invalid(format!(
                    "registry entry {i} has id {}",
                    e.id
                )));
            }
            if entries[..i].iter().any(|o| o.code == e.code) {
                return Err(Error::invalid(format!(
                    "duplicate dimension code {}",
                    e.code
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Dimension> {
        self.entries.get(id)
    }

    pub fn by_code(&self, code: &str) -> Option<&Dimension> {
        self.entries.iter().find(|d| d.code == code)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Dimension> {
        self.entries.iter()
    }

    /// Short code for a dimension id, or `d{id}` when the id is outside the registry.
    pub fn code(&self, id: usize) -> String {
        self.get(id)
            .map(|d| d.code.clone())
            .unwrap_or_else(|| format!("d{id}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_registry_is_well_formed() {
        let r = DimensionRegistry::standard();
        assert_eq!(r.len(), 18);
        assert!(DimensionRegistry::from_entries(r.iter().cloned().collect()).is_ok());
        assert_eq!(r.get(0).unwrap().code, "MC");
        assert_eq!(r.get(17).unwrap().code, "AE");
        assert_eq!(r.by_code("SB").unwrap().category, Category::IV);
        let per_cat = |c| r.iter().filter(|d| d.category == c).count();
        assert_eq!(
            [
                Category::I,
                Category::II,
                Category::III,
                Category::IV,
                Category::V
            ]
            .map(per_cat),
            [7, 4, 3, 2, 2]
        );
    }

    #[test]
    fn rejects_gaps_and_duplicates() {
        let mut e: Vec<Dimension> = DimensionRegistry::standard().iter().cloned().collect();
        e[3].code = "MC".into();
        assert!(DimensionRegistry::from_entries(e.clone()).is_err());
        e[3].code = "CS".into();
        e[5].id = 6;
        assert!(DimensionRegistry::from_entries(e.clone()).is_err());
        e.pop();
        assert!(DimensionRegistry::from_entries(e).is_err());
    }
}

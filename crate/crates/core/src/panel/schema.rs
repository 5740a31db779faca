use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest raw adverse-event grade accepted by the built-in merge classes.
pub const MAX_RAW_GRADE: usize = 4;

/// Grade-merging class of an item.
///
/// `Generic` keeps grades 0..=2 and folds 3 and 4 into a single top category;
/// `DrugSpecific` collapses every grade >= 1 into "present".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemClass {
    Generic,
    DrugSpecific,
}

impl ItemClass {
    /// Raw grade → merged category table for grades 0..=4.
    pub fn merge_table(self) -> Vec<usize> {
        match self {
            ItemClass::Generic => vec![0, 1, 2, 3, 3],
            ItemClass::DrugSpecific => vec![0, 1, 1, 1, 1],
        }
    }
}

/// Maps a raw 0–4 grade to its merged category code.
pub fn merge_grade(raw_grade: i64, class: ItemClass) -> Result<usize> {
    if !(0..=MAX_RAW_GRADE as i64).contains(&raw_grade) {
        return Err(Error::InvalidGrade {
            item: format!("{class:?}"),
            grade: raw_grade,
            max: MAX_RAW_GRADE,
        });
    }
    Ok(class.merge_table()[raw_grade as usize])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemDef {
    pub name: String,
    /// Category labels, indexed by category code.
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ItemClass>,
    /// Explicit raw-code → category map; overrides `class` when both are set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<Vec<usize>>,
}

impl ItemDef {
    pub fn n_categories(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Fixed,
    Varying,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateDef {
    pub name: String,
    pub kind: CovariateKind,
}

/// Response items with their category sets, plus declared covariates.
///
/// This is the JSON sidecar that accompanies a long-format panel CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSchema {
    pub items: Vec<ItemDef>,
    #[serde(default)]
    pub covariates: Vec<CovariateDef>,
}

impl ItemSchema {
    pub fn new(items: Vec<ItemDef>, covariates: Vec<CovariateDef>) -> Result<Self> {
        let schema = Self { items, covariates };
        schema.validate()?;
        Ok(schema)
    }

    /// Items without merge rules, from `(name, labels)` pairs.
    pub fn from_labels<S: AsRef<str>>(items: &[(S, &[&str])]) -> Result<Self> {
        let items = items
            .iter()
            .map(|(name, labels)| ItemDef {
                name: name.as_ref().to_string(),
                labels: labels.iter().map(|s| s.to_string()).collect(),
                class: None,
                merge: None,
            })
            .collect();
        Self::new(items, Vec::new())
    }

    pub fn with_covariate(mut self, name: &str, kind: CovariateKind) -> Result<Self> {
        self.covariates.push(CovariateDef {
            name: name.to_string(),
            kind,
        });
        self.validate()?;
        Ok(self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let schema: ItemSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::SchemaMismatch("schema declares no items".into()));
        }
        let mut names = HashSet::new();
        for item in &self.items {
            if item.n_categories() < 2 {
                return Err(Error::SchemaMismatch(format!(
                    "item `{}` needs at least 2 categories",
                    item.name
                )));
            }
            if !names.insert(item.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column name `{}`", item.name)));
            }
            if let Some(map) = item.merge_map() {
                GradeMergeMap::check_map(&item.name, &map, item.n_categories())?;
            }
        }
        for cov in &self.covariates {
            if !names.insert(cov.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column name `{}`", cov.name)));
            }
            if cov.name == "subject_id" || cov.name == "time" {
                return Err(Error::SchemaMismatch(format!("reserved column name `{}`", cov.name)));
            }
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_categories(&self) -> Vec<usize> {
        self.items.iter().map(ItemDef::n_categories).collect()
    }

    /// Σ_j (c_j − 1): free emission parameters per latent state.
    pub fn free_emission_params(&self) -> usize {
        self.items.iter().map(|i| i.n_categories() - 1).sum()
    }

    pub fn item_index(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|i| i.name == name)
    }

    pub fn covariate(&self, name: &str) -> Option<&CovariateDef> {
        self.covariates.iter().find(|c| c.name == name)
    }

    pub fn covariate_names(&self, kind: CovariateKind) -> Vec<String> {
        self.covariates
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.name.clone())
            .collect()
    }
}

impl ItemDef {
    fn merge_map(&self) -> Option<Vec<usize>> {
        self.merge.clone().or_else(|| self.class.map(ItemClass::merge_table))
    }
}

/// Per-item total maps from raw codes to merged category codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradeMergeMap {
    maps: Vec<Option<Vec<usize>>>,
}

impl GradeMergeMap {
    pub fn from_schema(schema: &ItemSchema) -> Result<Self> {
        let mut maps = Vec::with_capacity(schema.n_items());
        for item in &schema.items {
            let map = item.merge_map();
            if let Some(m) = &map {
                Self::check_map(&item.name, m, item.n_categories())?;
            }
            maps.push(map);
        }
        Ok(Self { maps })
    }

    fn check_map(item: &str, map: &[usize], n_categories: usize) -> Result<()> {
        if map.is_empty() {
            return Err(Error::SchemaMismatch(format!("empty merge map for `{item}`")));
        }
        let mut hit = vec![false; n_categories];
        for &c in map {
            if c >= n_categories {
                return Err(Error::SchemaMismatch(format!(
                    "merge map for `{item}` targets category {c}, but the item has {n_categories}"
                )));
            }
            hit[c] = true;
        }
        if hit.iter().any(|h| !h) {
            return Err(Error::SchemaMismatch(format!(
                "merge map image for `{item}` is not contiguous 0..{n_categories}"
            )));
        }
        Ok(())
    }

    /// Applies the map for item `j`. Items without a map pass through.
    pub fn apply(&self, j: usize, item: &str, raw: i64) -> Result<i64> {
        match &self.maps[j] {
            None => Ok(raw),
            Some(map) => {
                if raw < 0 || raw as usize >= map.len() {
                    return Err(Error::InvalidGrade {
                        item: item.to_string(),
                        grade: raw,
                        max: map.len() - 1,
                    });
                }
                Ok(map[raw as usize] as i64)
            }
        }
    }
}

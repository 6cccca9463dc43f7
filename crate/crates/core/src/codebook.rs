//! Registry of policy categories, category groupings, and named evaluation
//! subsets, loaded from a JSON file.
//!
//! The bundled default registry carries the full working set of categories
//! plus `other`, one `economy` group collapsing its fine-grained members,
//! and the `cap9`/`cap14` modeling subsets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

use crate::labeling::{LabelMatrix, LabelingError};

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid codebook: {0}")]
    Validation(String),
    #[error("unknown subset {0:?}")]
    UnknownSubset(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("{0}")]
    Matrix(#[from] LabelingError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyCategory {
    pub id: String,
    pub display_name: String,
    pub description: String,
    pub cap_major_code: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryGroup {
    pub group_id: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    categories: Vec<PolicyCategory>,
    groups: Vec<CategoryGroup>,
    subsets: BTreeMap<String, Vec<String>>,
    member_to_group: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawCategory {
    id: String,
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    cap_code: Option<u32>,
}

#[derive(Deserialize)]
struct RawGroup {
    id: String,
    members: Vec<String>,
}

#[derive(Deserialize)]
struct CodebookFile {
    categories: Vec<RawCategory>,
    #[serde(default)]
    groups: Vec<RawGroup>,
    #[serde(default)]
    subsets: BTreeMap<String, Vec<String>>,
}

const DEFAULT_CODEBOOK_JSON: &str = include_str!("../data/codebook.json");

/// Id of the catch-all category that every codebook must register.
pub const OTHER_CATEGORY: &str = "other";

impl Codebook {
    /// Loads and validates a codebook from its JSON schema
    /// (`categories: [{id, name, description, cap_code?}]`,
    /// `groups: [{id, members}]`, `subsets: {name: [ids]}`).
    pub fn load<R: Read>(reader: R) -> Result<Codebook, CodebookError> {
        let file: CodebookFile = serde_json::from_reader(reader)?;

        let mut categories = Vec::with_capacity(file.categories.len());
        let mut ids = BTreeSet::new();
        for raw in file.categories {
            if raw.id.trim().is_empty() {
                return Err(CodebookError::Validation("empty category id".to_string()));
            }
            if raw.name.trim().is_empty() {
                return Err(CodebookError::Validation(format!(
                    "category {:?} has an empty display name",
                    raw.id
                )));
            }
            if !ids.insert(raw.id.clone()) {
                return Err(CodebookError::Validation(format!(
                    "duplicate category id {:?}",
                    raw.id
                )));
            }
            categories.push(PolicyCategory {
                id: raw.id,
                display_name: raw.name,
                description: raw.description,
                cap_major_code: raw.cap_code,
            });
        }
        if !ids.contains(OTHER_CATEGORY) {
            return Err(CodebookError::Validation(format!(
                "the {OTHER_CATEGORY:?} category must always be present"
            )));
        }

        let mut member_to_group = BTreeMap::new();
        let mut groups = Vec::with_capacity(file.groups.len());
        for raw in file.groups {
            if !ids.contains(&raw.id) {
                return Err(CodebookError::Validation(format!(
                    "group {:?} does not resolve to a registered category",
                    raw.id
                )));
            }
            let mut members = Vec::with_capacity(raw.members.len());
            for member in raw.members {
                if !ids.contains(&member) {
                    return Err(CodebookError::Validation(format!(
                        "group {:?} member {member:?} is not a registered category",
                        raw.id
                    )));
                }
                if member == raw.id {
                    return Err(CodebookError::Validation(format!(
                        "group {:?} cannot contain itself",
                        raw.id
                    )));
                }
                if members.contains(&member) {
                    return Err(CodebookError::Validation(format!(
                        "group {:?} lists member {member:?} twice",
                        raw.id
                    )));
                }
                if member_to_group.contains_key(&member) {
                    return Err(CodebookError::Validation(format!(
                        "category {member:?} belongs to more than one group"
                    )));
                }
                member_to_group.insert(member.clone(), raw.id.clone());
                members.push(member);
            }
            groups.push(CategoryGroup {
                group_id: raw.id,
                members,
            });
        }
        // grouping must be idempotent: a group target cannot itself be grouped
        for group in &groups {
            if member_to_group.contains_key(&group.group_id) {
                return Err(CodebookError::Validation(format!(
                    "group target {:?} is itself a group member",
                    group.group_id
                )));
            }
        }

        for (name, members) in &file.subsets {
            let mut seen = BTreeSet::new();
            for member in members {
                if !ids.contains(member) {
                    return Err(CodebookError::Validation(format!(
                        "subset {name:?} member {member:?} is not a registered category"
                    )));
                }
                if !seen.insert(member) {
                    return Err(CodebookError::Validation(format!(
                        "subset {name:?} lists {member:?} twice"
                    )));
                }
            }
        }

        Ok(Codebook {
            categories,
            groups,
            subsets: file.subsets,
            member_to_group,
        })
    }

    /// The registry shipped with the crate.
    pub fn bundled_default() -> Codebook {
        Codebook::load(DEFAULT_CODEBOOK_JSON.as_bytes())
            .expect("bundled codebook is valid")
    }

    pub fn categories(&self) -> &[PolicyCategory] {
        &self.categories
    }

    pub fn groups(&self) -> &[CategoryGroup] {
        &self.groups
    }

    pub fn contains(&self, id: &str) -> bool {
        self.categories.iter().any(|c| c.id == id)
    }

    pub fn category(&self, id: &str) -> Option<&PolicyCategory> {
        self.categories.iter().find(|c| c.id == id)
    }

    /// Group target for a category, if it belongs to one.
    pub fn group_of(&self, id: &str) -> Option<&str> {
        self.member_to_group.get(id).map(String::as_str)
    }

    pub fn subset(&self, name: &str) -> Option<&[String]> {
        self.subsets.get(name).map(Vec::as_slice)
    }

    pub fn subset_names(&self) -> impl Iterator<Item = &str> {
        self.subsets.keys().map(String::as_str)
    }

    pub fn category_ids(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.id.clone()).collect()
    }
}

/// Replaces each label by its group target when it belongs to a group;
/// duplicates collapse. Unknown labels are an error.
pub fn apply_grouping(
    labels: &BTreeSet<String>,
    codebook: &Codebook,
) -> Result<BTreeSet<String>, CodebookError> {
    let mut out = BTreeSet::new();
    for label in labels {
        if !codebook.contains(label) {
            return Err(CodebookError::UnknownCategory(label.clone()));
        }
        match codebook.group_of(label) {
            Some(group) => out.insert(group.to_string()),
            None => out.insert(label.clone()),
        };
    }
    Ok(out)
}

/// Restricts a matrix to a named subset's categories, in subset order.
/// Subset categories absent from the matrix become all-zero columns; rows
/// left without any positive entry are dropped.
pub fn subset_filter(
    matrix: &LabelMatrix,
    subset_name: &str,
    codebook: &Codebook,
) -> Result<LabelMatrix, CodebookError> {
    let subset = codebook
        .subset(subset_name)
        .ok_or_else(|| CodebookError::UnknownSubset(subset_name.to_string()))?;
    let source_columns: Vec<Option<usize>> = subset
        .iter()
        .map(|id| matrix.category_index(id))
        .collect();

    let mut ad_ids = Vec::new();
    let mut entries = Vec::new();
    for row in 0..matrix.rows() {
        let values: Vec<f64> = source_columns
            .iter()
            .map(|col| col.map_or(0.0, |j| matrix.get(row, j)))
            .collect();
        if values.iter().any(|v| *v > 0.0) {
            ad_ids.push(matrix.ad_ids()[row].clone());
            entries.extend(values);
        }
    }
    Ok(LabelMatrix::new(
        ad_ids,
        subset.to_vec(),
        entries,
        matrix.mode(),
    )?)
}

/// Drops one category's column from a binary matrix, removing rows left
/// without any label. Used to exclude catch-all labels from training.
pub fn drop_category(
    matrix: &LabelMatrix,
    category_id: &str,
) -> Result<LabelMatrix, CodebookError> {
    let keep: Vec<usize> = (0..matrix.cols())
        .filter(|&j| matrix.category_ids()[j] != category_id)
        .collect();
    if keep.len() == matrix.cols() {
        return Err(CodebookError::UnknownCategory(category_id.to_string()));
    }
    let category_ids: Vec<String> = keep
        .iter()
        .map(|&j| matrix.category_ids()[j].clone())
        .collect();
    let mut ad_ids = Vec::new();
    let mut entries = Vec::new();
    for row in 0..matrix.rows() {
        let values: Vec<f64> = keep.iter().map(|&j| matrix.get(row, j)).collect();
        if values.iter().any(|v| *v > 0.0) {
            ad_ids.push(matrix.ad_ids()[row].clone());
            entries.extend(values);
        }
    }
    Ok(LabelMatrix::new(
        ad_ids,
        category_ids,
        entries,
        matrix.mode(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::LabelMode;

    fn labels(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bundled_default_nine_subset() {
        let cb = Codebook::bundled_default();
        let nine = cb.subset("cap9").unwrap();
        let expected = [
            "environment",
            "international-affairs",
            "energy",
            "human-rights",
            "government-operations",
            "health",
            "social-policy",
            "cultural-policy",
            "economy",
        ];
        assert_eq!(nine, &expected.map(String::from));
    }

    #[test]
    fn bundled_default_fourteen_subset() {
        let cb = Codebook::bundled_default();
        let nine: BTreeSet<&String> = cb.subset("cap9").unwrap().iter().collect();
        let fourteen: BTreeSet<&String> = cb.subset("cap14").unwrap().iter().collect();
        assert_eq!(fourteen.len(), 14);
        let added: Vec<&str> = fourteen
            .difference(&nine)
            .map(|s| s.as_str())
            .collect();
        let expected = labels(&[
            "education",
            "justice-and-criminality",
            "work-and-employment",
            "urban-and-territorial-policies",
            "immigration",
        ]);
        assert_eq!(added.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(), expected);
    }

    #[test]
    fn bundled_default_has_other_and_economy_group() {
        let cb = Codebook::bundled_default();
        assert!(cb.contains(OTHER_CATEGORY));
        assert_eq!(cb.group_of("macroeconomic-policy"), Some("economy"));
        assert_eq!(cb.group_of("economic-regulations"), Some("economy"));
        assert_eq!(cb.group_of("foreign-trade"), Some("economy"));
        assert_eq!(cb.group_of("health"), None);
    }

    #[test]
    fn duplicate_id_rejected() {
        let json = r#"{"categories":[
            {"id":"other","name":"Others"},
            {"id":"health","name":"Health"},
            {"id":"health","name":"Health again"}
        ]}"#;
        assert!(matches!(
            Codebook::load(json.as_bytes()),
            Err(CodebookError::Validation(_))
        ));
    }

    #[test]
    fn missing_other_rejected() {
        let json = r#"{"categories":[{"id":"health","name":"Health"}]}"#;
        assert!(matches!(
            Codebook::load(json.as_bytes()),
            Err(CodebookError::Validation(_))
        ));
    }

    #[test]
    fn unknown_group_member_rejected() {
        let json = r#"{
            "categories":[{"id":"other","name":"Others"},{"id":"economy","name":"Economy"}],
            "groups":[{"id":"economy","members":["ghost"]}]
        }"#;
        assert!(matches!(
            Codebook::load(json.as_bytes()),
            Err(CodebookError::Validation(_))
        ));
    }

    #[test]
    fn category_in_two_groups_rejected() {
        let json = r#"{
            "categories":[
                {"id":"other","name":"Others"},
                {"id":"a","name":"A"},{"id":"b","name":"B"},{"id":"x","name":"X"}
            ],
            "groups":[{"id":"a","members":["x"]},{"id":"b","members":["x"]}]
        }"#;
        assert!(matches!(
            Codebook::load(json.as_bytes()),
            Err(CodebookError::Validation(_))
        ));
    }

    #[test]
    fn grouping_examples() {
        let cb = Codebook::bundled_default();
        assert_eq!(
            apply_grouping(&labels(&["macroeconomic-policy", "health"]), &cb).unwrap(),
            labels(&["economy", "health"])
        );
        assert_eq!(
            apply_grouping(&labels(&["foreign-trade", "economic-regulations"]), &cb).unwrap(),
            labels(&["economy"])
        );
        assert_eq!(
            apply_grouping(&labels(&["environment"]), &cb).unwrap(),
            labels(&["environment"])
        );
        assert!(matches!(
            apply_grouping(&labels(&["made-up"]), &cb),
            Err(CodebookError::UnknownCategory(_))
        ));
    }

    #[test]
    fn grouping_is_idempotent() {
        let cb = Codebook::bundled_default();
        let inputs = labels(&[
            "macroeconomic-policy",
            "foreign-trade",
            "health",
            "environment",
            "economy",
        ]);
        let once = apply_grouping(&inputs, &cb).unwrap();
        let twice = apply_grouping(&once, &cb).unwrap();
        assert_eq!(once, twice);
    }

    fn matrix(ids: &[&str], categories: &[&str], rows: &[&[f64]]) -> LabelMatrix {
        LabelMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            categories.iter().map(|s| s.to_string()).collect(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            LabelMode::Binary,
        )
        .unwrap()
    }

    #[test]
    fn subset_filter_drops_uncovered_rows() {
        let cb = Codebook::bundled_default();
        let m = matrix(&["a", "b"], &["transport"], &[&[1.0], &[1.0]]);
        let filtered = subset_filter(&m, "cap9", &cb).unwrap();
        assert_eq!(filtered.rows(), 0);
        assert_eq!(filtered.cols(), 9);
    }

    #[test]
    fn subset_filter_identity_when_covering() {
        let json = r#"{
            "categories":[{"id":"other","name":"Others"},{"id":"a","name":"A"},{"id":"b","name":"B"}],
            "subsets":{"ab":["a","b"]}
        }"#;
        let cb = Codebook::load(json.as_bytes()).unwrap();
        let m = matrix(&["x", "y"], &["a", "b"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let filtered = subset_filter(&m, "ab", &cb).unwrap();
        assert_eq!(filtered, m);
    }

    #[test]
    fn subset_filter_hand_checked() {
        let cb = Codebook::bundled_default();
        let m = matrix(
            &["a", "b", "c", "d", "e"],
            &["health", "transport", "energy"],
            &[
                &[1.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0],
                &[1.0, 1.0, 1.0],
                &[0.0, 0.0, 1.0],
                &[0.0, 1.0, 0.0],
            ],
        );
        let filtered = subset_filter(&m, "cap9", &cb).unwrap();
        // transport is outside the subset, so b and e disappear
        assert_eq!(filtered.ad_ids(), &["a", "c", "d"].map(String::from));
        let health = filtered.category_index("health").unwrap();
        let energy = filtered.category_index("energy").unwrap();
        assert_eq!(filtered.get(0, health), 1.0);
        assert_eq!(filtered.get(1, health), 1.0);
        assert_eq!(filtered.get(1, energy), 1.0);
        assert_eq!(filtered.get(2, energy), 1.0);
        assert_eq!(filtered.support(filtered.category_index("environment").unwrap()), 0);
    }

    #[test]
    fn subset_filter_idempotent() {
        let cb = Codebook::bundled_default();
        let m = matrix(
            &["a", "b", "c"],
            &["health", "energy", "transport"],
            &[&[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
        );
        let once = subset_filter(&m, "cap9", &cb).unwrap();
        let twice = subset_filter(&once, "cap9", &cb).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unknown_subset_is_error() {
        let cb = Codebook::bundled_default();
        let m = matrix(&["a"], &["health"], &[&[1.0]]);
        assert!(matches!(
            subset_filter(&m, "cap99", &cb),
            Err(CodebookError::UnknownSubset(_))
        ));
    }

    #[test]
    fn drop_category_removes_column_and_empty_rows() {
        let m = matrix(
            &["a", "b"],
            &["health", "other"],
            &[&[1.0, 1.0], &[0.0, 1.0]],
        );
        let dropped = drop_category(&m, "other").unwrap();
        assert_eq!(dropped.rows(), 1);
        assert_eq!(dropped.category_ids(), &["health".to_string()]);
        assert!(drop_category(&m, "ghost").is_err());
    }
}

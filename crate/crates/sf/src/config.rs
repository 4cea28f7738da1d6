//! Group and norm references as they appear in spec files and on the command line.

use std::path::Path;

use carnot_core::algebra::BracketEntry;
use carnot_core::{NormModel, Selection, StepTwoAlgebra};
use serde::{Deserialize, Serialize};

use crate::{Result, SfError};

/// A built-in name (`heisenberg:n`, `free2:r`), a path to a group JSON file,
/// or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRef {
    Name(String),
    Inline(GroupFile),
}

/// `{ "rank": r, "vdim": m, "brackets": [{"i":1,"j":2,"k":1,"coeff":1.0}, ...] }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFile {
    pub rank: usize,
    pub vdim: usize,
    pub brackets: Vec<BracketEntry>,
}

impl Default for GroupRef {
    fn default() -> Self {
        GroupRef::Name("heisenberg:1".into())
    }
}

pub fn resolve_group(group: &GroupRef) -> Result<StepTwoAlgebra> {
    match group {
        GroupRef::Inline(f) => Ok(StepTwoAlgebra::from_brackets(f.rank, f.vdim, &f.brackets)?),
        GroupRef::Name(name) => {
            if name.ends_with(".json") {
                let text = std::fs::read_to_string(Path::new(name))?;
                let f: GroupFile = serde_json::from_str(&text)?;
                Ok(StepTwoAlgebra::from_brackets(f.rank, f.vdim, &f.brackets)?)
            } else {
                Ok(StepTwoAlgebra::builtin(name)?)
            }
        }
    }
}

/// A short name (`euclidean`, `lp:4`, `linf`, `l1`) or a full norm spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NormRef {
    Name(String),
    Spec(NormSpec),
}

impl Default for NormRef {
    fn default() -> Self {
        NormRef::Name("euclidean".into())
    }
}

/// `{"kind":"euclidean","metric":[[...]]} | {"kind":"lp","p":4} | {"kind":"linf"}
/// | {"kind":"l1"} | {"kind":"polyhedral","vertices":[[...]], "selection":"barycenter"}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSpec>,
}

/// `"barycenter"`, `"lowest-index-vertex"` or `{"fixed-vector": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SelectionSpec {
    Name(String),
    Fixed {
        #[serde(rename = "fixed-vector")]
        fixed_vector: Vec<f64>,
    },
}

impl SelectionSpec {
    pub fn resolve(&self) -> Result<Selection> {
        match self {
            SelectionSpec::Name(n) => match n.as_str() {
                "barycenter" => Ok(Selection::Barycenter),
                "lowest-index-vertex" => Ok(Selection::LowestIndexVertex),
                other => Err(SfError::Spec(format!("unknown selection rule {other:?}"))),
            },
            SelectionSpec::Fixed { fixed_vector } => Ok(Selection::FixedVector(fixed_vector.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedNorm {
    pub model: NormModel,
    pub selection: Selection,
}

pub fn resolve_norm(norm: &NormRef, dim: usize) -> Result<ResolvedNorm> {
    let spec = match norm {
        NormRef::Spec(s) => s.clone(),
        NormRef::Name(name) => parse_norm_name(name)?,
    };
    let model = match spec.kind.as_str() {
        "euclidean" => match &spec.metric {
            None => NormModel::euclidean_identity(dim),
            Some(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(SfError::Spec(format!("metric must be {dim}×{dim}")));
                }
                NormModel::euclidean(dim, rows.concat())?
            }
        },
        "lp" => {
            let p = spec
                .p
                .ok_or_else(|| SfError::Spec("lp norm needs an exponent p".into()))?;
            NormModel::lp(dim, p)?
        }
        "linf" => NormModel::linf(dim),
        "l1" => NormModel::l1(dim),
        "polyhedral" => {
            let v = spec
                .vertices
                .clone()
                .ok_or_else(|| SfError::Spec("polyhedral norm needs vertices".into()))?;
            NormModel::polyhedral(v)?
        }
        other => return Err(SfError::Spec(format!("unknown norm kind {other:?}"))),
    };
    if model.dim() != dim {
        return Err(SfError::Spec(format!(
            "norm acts on dimension {} but the group has rank {dim}",
            model.dim()
        )));
    }
    let selection = match &spec.selection {
        Some(s) => s.resolve()?,
        None => Selection::Barycenter,
    };
    Ok(ResolvedNorm { model, selection })
}

fn parse_norm_name(name: &str) -> Result<NormSpec> {
    let mut spec = NormSpec {
        kind: name.to_string(),
        metric: None,
        p: None,
        vertices: None,
        selection: None,
    };
    if let Some(p) = name.strip_prefix("lp:") {
        spec.kind = "lp".into();
        spec.p = Some(
            p.parse()
                .map_err(|_| SfError::Spec(format!("bad lp exponent in {name:?}")))?,
        );
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_group_refs() {
        let g: GroupRef = serde_json::from_str(r#""heisenberg:2""#).unwrap();
        assert_eq!(resolve_group(&g).unwrap().rank(), 4);
        let g: GroupRef =
            serde_json::from_str(r#"{"rank":2,"vdim":1,"brackets":[{"i":1,"j":2,"k":1,"coeff":1.0}]}"#).unwrap();
        let a = resolve_group(&g).unwrap();
        assert_eq!(a.structure_constant(0, 1, 0), -1.0);
        let bad: GroupRef =
            serde_json::from_str(r#"{"rank":2,"vdim":2,"brackets":[{"i":1,"j":2,"k":1,"coeff":1.0}]}"#).unwrap();
        assert!(resolve_group(&bad).is_err());
    }

    #[test]
    fn parses_norm_refs() {
        let n = resolve_norm(&NormRef::Name("lp:4".into()), 2).unwrap();
        assert_eq!(n.model.lp_exponent(), Some(4.0));
        let n: NormRef = serde_json::from_str(r#"{"kind":"euclidean","metric":[[2,0],[0,1]]}"#).unwrap();
        let n = resolve_norm(&n, 2).unwrap();
        assert!((n.model.norm(&[1.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let n: NormRef = serde_json::from_str(
            r#"{"kind":"polyhedral","vertices":[[1,1],[1,-1],[-1,1],[-1,-1]],"selection":"lowest-index-vertex"}"#,
        )
        .unwrap();
        let n = resolve_norm(&n, 2).unwrap();
        assert_eq!(n.selection, Selection::LowestIndexVertex);
        let n: NormRef = serde_json::from_str(r#"{"kind":"linf","selection":{"fixed-vector":[1,0.5]}}"#).unwrap();
        assert_eq!(resolve_norm(&n, 2).unwrap().selection, Selection::FixedVector(vec![1.0, 0.5]));
        assert!(resolve_norm(&NormRef::Name("lp:x".into()), 2).is_err());
        assert!(resolve_norm(&NormRef::Name("taxicab".into()), 2).is_err());
        let n: NormRef = serde_json::from_str(r#"{"kind":"euclidean","metric":[[1,0],[0,1]]}"#).unwrap();
        assert!(resolve_norm(&n, 3).is_err());
    }
}

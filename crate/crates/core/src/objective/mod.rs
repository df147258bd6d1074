//! Programmable neural objectives over region-of-interest masks.
//!
//! Every objective is a signed, weighted sum of region means of the predicted
//! response `r = Φ(q)`:
//!
//! ```text
//! L(r) = Σ_i c_i · mean_{v ∈ R_i} r_v,   c_i = -λ_i (activate) or +λ_i (suppress)
//! ```
//!
//! A single `+R` maximizes activation in `R`, `-R` suppresses it, `+R1 +R2`
//! co-activates two regions and `+R1 -R2` activates one while suppressing the
//! other. Overlapping regions contribute additively. `L` is affine in `r`, so
//! its cotangent does not depend on the response.

mod atlas;
mod parse;

use std::collections::BTreeMap;

use thiserror::Error;

pub use atlas::{AtlasError, RoiAtlas};
pub use parse::{format_terms, parse_objective, Direction, ObjectiveTerm, ParseError, ParseErrorKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error("objective has no terms")]
    NoTerms,
    #[error("term weight for {region:?} must be positive, got {weight}")]
    NonPositiveWeight { region: String, weight: f64 },
    #[error("response has length {actual}, objective expects {expected} voxels")]
    ResponseLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledTerm {
    pub term: ObjectiveTerm,
    pub voxels: Vec<usize>,
    pub coefficient: f64,
}

/// A compiled objective bound to an atlas and a voxel count.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralObjective {
    terms: Vec<CompiledTerm>,
    n_voxels: usize,
}

impl NeuralObjective {
    /// Resolves term regions against `atlas` and checks every index is below `n_voxels`.
    pub fn compile(
        terms: &[ObjectiveTerm],
        atlas: &RoiAtlas,
        n_voxels: usize,
    ) -> Result<Self, ObjectiveError> {
        if terms.is_empty() {
            return Err(ObjectiveError::NoTerms);
        }
        let mut compiled = Vec::with_capacity(terms.len());
        for t in terms {
            if !(t.weight > 0.0) || !t.weight.is_finite() {
                return Err(ObjectiveError::NonPositiveWeight {
                    region: t.region.clone(),
                    weight: t.weight,
                });
            }
            let voxels = atlas
                .get(&t.region)
                .ok_or_else(|| ObjectiveError::UnknownRegion(t.region.clone()))?;
            atlas::check_region(&t.region, voxels, n_voxels)?;
            compiled.push(CompiledTerm {
                term: t.clone(),
                voxels: voxels.to_vec(),
                coefficient: t.coefficient(),
            });
        }
        Ok(Self {
            terms: compiled,
            n_voxels,
        })
    }

    /// Parses DSL text and compiles it.
    pub fn from_text(text: &str, atlas: &RoiAtlas, n_voxels: usize) -> Result<Self, ObjectiveError> {
        let terms = parse_objective(text)?;
        Self::compile(&terms, atlas, n_voxels)
    }

    pub fn terms(&self) -> &[CompiledTerm] {
        &self.terms
    }

    pub fn n_voxels(&self) -> usize {
        self.n_voxels
    }

    /// Canonical DSL text of the compiled terms.
    pub fn text(&self) -> String {
        self.terms
            .iter()
            .map(|t| t.term.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Distinct region names referenced by the objective, in term order.
    pub fn region_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            if !out.contains(&t.term.region.as_str()) {
                out.push(&t.term.region);
            }
        }
        out
    }

    fn check(&self, response: &[f64]) -> Result<(), ObjectiveError> {
        if response.len() != self.n_voxels {
            return Err(ObjectiveError::ResponseLength {
                expected: self.n_voxels,
                actual: response.len(),
            });
        }
        Ok(())
    }

    pub fn loss(&self, response: &[f64]) -> Result<f64, ObjectiveError> {
        self.check(response)?;
        Ok(self
            .terms
            .iter()
            .map(|t| t.coefficient * mean_over(&t.voxels, response))
            .sum())
    }

    /// `∂L/∂r`: entry `v` is `Σ_{i: v ∈ R_i} c_i / |R_i|`.
    pub fn loss_cotangent(&self, response: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        self.check(response)?;
        let mut cot = vec![0.0; self.n_voxels];
        for t in &self.terms {
            let share = t.coefficient / t.voxels.len() as f64;
            for &v in &t.voxels {
                cot[v] += share;
            }
        }
        Ok(cot)
    }
}

fn mean_over(voxels: &[usize], response: &[f64]) -> f64 {
    voxels.iter().map(|&v| response[v]).sum::<f64>() / voxels.len() as f64
}

/// Mean response of every atlas region.
pub fn region_means(atlas: &RoiAtlas, response: &[f64]) -> Result<BTreeMap<String, f64>, ObjectiveError> {
    let mut out = BTreeMap::new();
    for (name, voxels) in atlas.iter() {
        if let Some(&v) = voxels.iter().find(|&&v| v >= response.len()) {
            return Err(ObjectiveError::Atlas(AtlasError::IndexOutOfBounds {
                region: name.to_string(),
                index: v,
                n_voxels: response.len(),
            }));
        }
        out.insert(name.to_string(), mean_over(voxels, response));
    }
    Ok(out)
}

/// Mean response of a single region.
pub fn region_mean(atlas: &RoiAtlas, region: &str, response: &[f64]) -> Result<f64, ObjectiveError> {
    let voxels = atlas
        .get(region)
        .ok_or_else(|| ObjectiveError::UnknownRegion(region.to_string()))?;
    atlas::check_region(region, voxels, response.len())?;
    Ok(mean_over(voxels, response))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atlas(regions: &[(&str, &[usize])]) -> RoiAtlas {
        RoiAtlas::new(regions.iter().map(|(n, v)| (n.to_string(), v.to_vec()))).unwrap()
    }

    #[test]
    fn compile_resolves_regions() {
        let a = atlas(&[("FFA", &[0, 1, 2])]);
        let obj = NeuralObjective::from_text("+FFA", &a, 5).unwrap();
        assert_eq!(obj.terms()[0].voxels, vec![0, 1, 2]);
        assert_eq!(obj.terms()[0].coefficient, -1.0);
    }

    #[test]
    fn unknown_region_named() {
        let a = atlas(&[("FFA", &[0])]);
        let err = NeuralObjective::from_text("+XYZ", &a, 5).unwrap_err();
        assert_eq!(err, ObjectiveError::UnknownRegion("XYZ".into()));
        assert!(err.to_string().contains("XYZ"));
    }

    #[test]
    fn out_of_bounds_region() {
        let a = atlas(&[("R", &[10])]);
        assert!(matches!(
            NeuralObjective::from_text("+R", &a, 10),
            Err(ObjectiveError::Atlas(AtlasError::IndexOutOfBounds { index: 10, .. }))
        ));
    }

    #[test]
    fn maximize_formula() {
        let a = atlas(&[("R1", &[0, 1])]);
        let obj = NeuralObjective::from_text("+R1", &a, 4).unwrap();
        assert_eq!(obj.loss(&[1.0, 2.0, 3.0, 4.0]).unwrap(), -1.5);
    }

    #[test]
    fn activate_suppress_formula() {
        let a = atlas(&[("R1", &[0, 1]), ("R2", &[2, 3])]);
        let obj = NeuralObjective::from_text("+R1:1.0 -R2:0.5", &a, 4).unwrap();
        assert_eq!(obj.loss(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.25);
    }

    #[test]
    fn suppress_constant_response() {
        let a = atlas(&[("R", &[1, 3, 4])]);
        let obj = NeuralObjective::from_text("-R", &a, 5).unwrap();
        assert_eq!(obj.loss(&[2.5; 5]).unwrap(), 2.5);
    }

    #[test]
    fn cotangent_of_maximize() {
        let a = atlas(&[("R", &[1, 2, 3, 4])]);
        let obj = NeuralObjective::from_text("+R", &a, 6).unwrap();
        assert_eq!(
            obj.loss_cotangent(&[0.0; 6]).unwrap(),
            vec![0.0, -0.25, -0.25, -0.25, -0.25, 0.0]
        );
    }

    #[test]
    fn overlapping_cotangent() {
        let a = atlas(&[("A", &[0, 1]), ("B", &[1, 2, 3, 4])]);
        let obj = NeuralObjective::from_text("+A:1 -B:1", &a, 5).unwrap();
        let c = obj.loss_cotangent(&[0.0; 5]).unwrap();
        assert_eq!(c[1], -0.25);
        assert_eq!(c[0], -0.5);
        assert_eq!(c[4], 0.25);
    }

    #[test]
    fn length_mismatch() {
        let a = atlas(&[("R", &[0])]);
        let obj = NeuralObjective::from_text("+R", &a, 3).unwrap();
        assert_eq!(
            obj.loss(&[1.0]).unwrap_err(),
            ObjectiveError::ResponseLength { expected: 3, actual: 1 }
        );
        assert!(obj.loss_cotangent(&[1.0; 4]).is_err());
        assert!(region_means(&a, &[]).is_err());
    }

    #[test]
    fn region_mean_cases() {
        let a = atlas(&[("R", &[0, 1]), ("S", &[3])]);
        let m = region_means(&a, &[2.0, 4.0, 100.0, -7.0]).unwrap();
        assert_eq!(m["R"], 3.0);
        assert_eq!(m["S"], -7.0);
        assert_eq!(region_mean(&a, "S", &[2.0, 4.0, 100.0, -7.0]).unwrap(), -7.0);
    }

    #[test]
    fn text_is_canonical() {
        let a = atlas(&[("A", &[0]), ("B", &[1])]);
        let obj = NeuralObjective::from_text("  +A   -B:0.5", &a, 2).unwrap();
        assert_eq!(obj.text(), "+A:1 -B:0.5");
        assert_eq!(obj.region_names(), vec!["A", "B"]);
    }
}

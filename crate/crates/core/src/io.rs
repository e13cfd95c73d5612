//! Atlas JSON. The file carries the model and every eigenvalue, so a loaded
//! atlas can be recounted without re-solving anything.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibria::{Equilibrium, EquilibriumAtlas, EquilibriumClass, Provenance, SearchStats};
use crate::error::{Error, Result};
use crate::model::{ModelFile, State};
use crate::spectral::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumRecord {
    pub state: State,
    pub class: EquilibriumClass,
    pub n_k: usize,
    pub index: i8,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<Complex64>,
    pub residual: f64,
    pub hyperbolic_margin: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasFile {
    pub model_hash: String,
    pub n: usize,
    pub model: ModelFile,
    pub complete: bool,
    pub search_stats: SearchStats,
    pub diagnostics: Vec<String>,
    pub equilibria: Vec<EquilibriumRecord>,
}

impl From<&EquilibriumAtlas> for AtlasFile {
    fn from(atlas: &EquilibriumAtlas) -> Self {
        Self {
            model_hash: atlas.model.hash_hex(),
            n: atlas.n(),
            model: atlas.model.to_file(),
            complete: atlas.complete,
            search_stats: atlas.search_stats.clone(),
            diagnostics: atlas.diagnostics.clone(),
            equilibria: atlas
                .equilibria
                .iter()
                .map(|e| EquilibriumRecord {
                    state: e.state.clone(),
                    class: e.class,
                    n_k: e.n_k,
                    index: e.index,
                    eigenvalues: e.spectrum.eigenvalues.clone(),
                    residual: e.residual,
                    hyperbolic_margin: e.hyperbolic_margin,
                    provenance: e.provenance,
                })
                .collect(),
        }
    }
}

impl AtlasFile {
    /// Rebuilds the atlas, checking the model hash and that every stored
    /// stable count and index agree with the stored eigenvalues.
    pub fn into_atlas(self) -> Result<EquilibriumAtlas> {
        let model = self.model.into_model()?;
        let hash = model.hash_hex();
        if hash != self.model_hash {
            return Err(Error::InvalidModel(format!(
                "model_hash {} does not match the embedded model ({hash})",
                self.model_hash
            )));
        }
        if self.n != model.n() {
            return Err(Error::InvalidModel(format!(
                "field \"n\" is {} but the model has {} nodes",
                self.n,
                model.n()
            )));
        }
        let mut equilibria = Vec::with_capacity(self.equilibria.len());
        for (i, r) in self.equilibria.into_iter().enumerate() {
            if r.state.n() != self.n || r.eigenvalues.len() != 2 * self.n {
                return Err(Error::InvalidModel(format!(
                    "equilibrium {i} has the wrong dimension"
                )));
            }
            let spectrum = Spectrum::from_eigenvalues(r.eigenvalues);
            let n_k = spectrum.count_stable();
            let index = if n_k.is_multiple_of(2) { 1 } else { -1 };
            if n_k != r.n_k || index != r.index {
                return Err(Error::Inconsistent(format!(
                    "equilibrium {i}: stored n_k {} / index {} disagree with its eigenvalues ({n_k} stable)",
                    r.n_k, r.index
                )));
            }
            equilibria.push(Equilibrium {
                state: r.state,
                class: r.class,
                spectrum,
                n_k,
                index,
                hyperbolic_margin: r.hyperbolic_margin,
                residual: r.residual,
                provenance: r.provenance,
            });
        }
        Ok(EquilibriumAtlas {
            model,
            equilibria,
            complete: self.complete,
            search_stats: self.search_stats,
            diagnostics: self.diagnostics,
        })
    }
}

pub fn atlas_to_json(atlas: &EquilibriumAtlas) -> Result<String> {
    Ok(serde_json::to_string_pretty(&AtlasFile::from(atlas))?)
}

pub fn atlas_from_json(s: &str) -> Result<EquilibriumAtlas> {
    let file: AtlasFile = serde_json::from_str(s)?;
    file.into_atlas()
}

pub fn save_atlas(atlas: &EquilibriumAtlas, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, atlas_to_json(atlas)? + "\n")?;
    Ok(())
}

pub fn load_atlas(path: impl AsRef<Path>) -> Result<EquilibriumAtlas> {
    atlas_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting;
    use crate::equilibria::{enumerate_all, SearchBudget};
    use crate::fixtures;

    #[test]
    fn round_trip_preserves_atlas_and_count() {
        let atlas = enumerate_all(&fixtures::mixed_n2(), &SearchBudget::default()).unwrap();
        let back = atlas_from_json(&atlas_to_json(&atlas).unwrap()).unwrap();
        assert_eq!(back, atlas);
        let a = serde_json::to_string(&counting::count_report(&atlas).unwrap()).unwrap();
        let b = serde_json::to_string(&counting::count_report(&back).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tampered_files_are_rejected() {
        let atlas = enumerate_all(&fixtures::scalar1(), &SearchBudget::default()).unwrap();
        let mut file = AtlasFile::from(&atlas);
        file.model.d1[0] = 2.0;
        assert!(file.into_atlas().is_err());

        let mut file = AtlasFile::from(&atlas);
        file.equilibria[0].n_k += 1;
        assert!(matches!(file.into_atlas(), Err(Error::Inconsistent(_))));
    }
}

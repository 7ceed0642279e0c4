use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::SphereModel;
use super::touch::{add_noise, simulate_touch, TactileFrame, TaxelArray, TouchConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Systematic offsets applied to the nominal touch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationGrid {
    pub row_offsets: Vec<f64>,
    pub col_offsets: Vec<f64>,
    pub rotations: Vec<f64>,
}

impl PerturbationGrid {
    pub fn len(&self) -> usize {
        self.row_offsets.len() * self.col_offsets.len() * self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(offset_row, offset_col, rotation_deg)` for a perturbation index; rotation varies fastest.
    pub fn get(&self, index: usize) -> (f64, f64, f64) {
        let nr = self.rotations.len();
        let nc = self.col_offsets.len();
        (
            self.row_offsets[index / (nc * nr)],
            self.col_offsets[(index / nr) % nc],
            self.rotations[index % nr],
        )
    }
}

/// Simulates one noisy frame per (model, perturbation), model-major.
///
/// Frame `k` has label `k / P` and perturbation `k % P`. Each frame's noise seed is
/// derived from `base_seed` and its (object, perturbation) indices, so the result
/// does not depend on evaluation order.
pub fn generate_dataset(
    array: &TaxelArray,
    models: &[SphereModel],
    grid: &PerturbationGrid,
    press_depth: f64,
    sigma: f64,
    base_seed: u64,
) -> Result<Vec<TactileFrame>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput(
            "perturbation lists must be non-empty".into(),
        ));
    }
    let per_object = grid.len();
    (0..models.len() * per_object)
        .into_par_iter()
        .map(|k| {
            let (object, perturbation) = (k / per_object, k % per_object);
            let (offset_row, offset_col, rotation) = grid.get(perturbation);
            let seed = derive_seed(base_seed, &[object as u64, perturbation as u64]);
            let touch = TouchConfig::new(offset_row, offset_col, rotation, press_depth, seed)?;
            let clean = simulate_touch(array, &models[object], &touch)?;
            let mut frame = add_noise(&clean, sigma, seed)?;
            frame.label = object;
            frame.perturbation = perturbation;
            Ok(frame)
        })
        .collect()
}

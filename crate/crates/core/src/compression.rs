//! Scrambled block Hadamard measurement operators.
//!
//! `Φ = Q_m · W · P_n`: gather the signal through a random permutation, apply an
//! orthonormal `B × B` Walsh–Hadamard transform to each block, then keep `m`
//! randomly chosen rows. The operator is never materialized.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::WaveletBasis;
use crate::simulator::TactileFrame;

pub const DEFAULT_BLOCK_SIZE: usize = 32;

/// Measurement counts used for 4096-taxel frames.
pub const M_PRESETS: [usize; 6] = [1024, 256, 64, 16, 4, 1];

/// In-place unnormalized fast Walsh–Hadamard transform in Sylvester (natural) order.
///
/// `data.len()` must be a power of two.
pub fn fwht(data: &mut [f64]) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (data[i], data[i + h]);
                data[i] = a + b;
                data[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// The parameters that fully determine an operator; permutation and row
/// selection are regenerated from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SbheHeader {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "B")]
    pub block_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbheMatrix {
    n: usize,
    m: usize,
    block_size: usize,
    seed: u64,
    permutation: Vec<usize>,
    selected_rows: Vec<usize>,
}

fn check_shape(n: usize, m: usize, block_size: usize) -> Result<()> {
    if block_size == 0 || !block_size.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "block size must be a power of two, got {block_size}"
        )));
    }
    if n == 0 || !n.is_multiple_of(block_size) {
        return Err(Error::Dimension(format!(
            "block size {block_size} does not divide signal length {n}"
        )));
    }
    if m == 0 || m > n {
        return Err(Error::Selection(format!(
            "need 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    Ok(())
}

impl SbheMatrix {
    /// Draws a uniform column permutation (Fisher–Yates) and `m` distinct rows.
    pub fn build(n: usize, m: usize, block_size: usize, seed: u64) -> Result<Self> {
        check_shape(n, m, block_size)?;
        let mut rng = crate::seed::rng(seed);
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(&mut rng);
        let mut selected_rows = index::sample(&mut rng, n, m).into_vec();
        selected_rows.sort_unstable();
        Ok(SbheMatrix {
            n,
            m,
            block_size,
            seed,
            permutation,
            selected_rows,
        })
    }

    /// Assembles an operator from explicit index maps.
    pub fn from_parts(
        block_size: usize,
        permutation: Vec<usize>,
        selected_rows: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        let n = permutation.len();
        let m = selected_rows.len();
        check_shape(n, m, block_size)?;
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidInput("permutation is not a bijection".into()));
            }
        }
        let mut seen = vec![false; n];
        for &r in &selected_rows {
            if r >= n || std::mem::replace(&mut seen[r], true) {
                return Err(Error::Selection(
                    "selected rows must be distinct and < n".into(),
                ));
            }
        }
        Ok(SbheMatrix {
            n,
            m,
            block_size,
            seed,
            permutation,
            selected_rows,
        })
    }

    pub fn from_header(h: &SbheHeader) -> Result<Self> {
        SbheMatrix::build(h.n, h.m, h.block_size, h.seed)
    }

    pub fn header(&self) -> SbheHeader {
        SbheHeader {
            n: self.n,
            m: self.m,
            block_size: self.block_size,
            seed: self.seed,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn selected_rows(&self) -> &[usize] {
        &self.selected_rows
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.block_size as f64).sqrt()
    }

    pub fn compression_factor(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// Fraction of taxels that contribute to at least one measurement.
    pub fn taxel_coverage(&self) -> f64 {
        let mut blocks: Vec<usize> = self
            .selected_rows
            .iter()
            .map(|r| r / self.block_size)
            .collect();
        blocks.sort_unstable();
        blocks.dedup();
        (blocks.len() * self.block_size) as f64 / self.n as f64
    }

    /// `y = Φx`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "signal length {} does not match operator width {}",
                x.len(),
                self.n
            )));
        }
        let mut u: Vec<f64> = self.permutation.iter().map(|&p| x[p]).collect();
        for block in u.chunks_exact_mut(self.block_size) {
            fwht(block);
        }
        let s = self.scale();
        Ok(self.selected_rows.iter().map(|&r| s * u[r]).collect())
    }

    /// `Φᵀy`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.m {
            return Err(Error::Dimension(format!(
                "measurement length {} does not match operator height {}",
                y.len(),
                self.m
            )));
        }
        let mut u = vec![0.0; self.n];
        for (&r, &v) in self.selected_rows.iter().zip(y) {
            u[r] = v;
        }
        for block in u.chunks_exact_mut(self.block_size) {
            fwht(block);
        }
        let s = self.scale();
        let mut x = vec![0.0; self.n];
        for (i, &p) in self.permutation.iter().enumerate() {
            x[p] = s * u[i];
        }
        Ok(x)
    }
}

pub fn build_sbhe(n: usize, m: usize, block_size: usize, seed: u64) -> Result<SbheMatrix> {
    SbheMatrix::build(n, m, block_size, seed)
}

/// A measurement vector `y = Φx` with the provenance of the operator that made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedSignal {
    pub values: Vec<f64>,
    pub matrix_seed: u64,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "B")]
    pub block_size: usize,
    pub label: usize,
}

pub fn compress(matrix: &SbheMatrix, frame: &TactileFrame) -> Result<CompressedSignal> {
    Ok(CompressedSignal {
        values: matrix.apply(&frame.values)?,
        matrix_seed: matrix.seed(),
        m: matrix.m(),
        n: matrix.n(),
        block_size: matrix.block_size(),
        label: frame.label,
    })
}

/// Distribution of `‖A s‖₂ / ‖s‖₂` over random sparse `s`, where
/// `A = sqrt(n/m) · Φ Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `max |ratio² − 1|` over all trials.
    pub delta_hat: f64,
    pub trials: usize,
}

/// Empirical restricted-isometry probe on the composite operator.
///
/// The `sqrt(n/m)` factor rescales the orthonormal rows of `Φ` so that the
/// expected squared ratio is one.
pub fn isometry_check(
    matrix: &SbheMatrix,
    basis: &WaveletBasis,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<IsometryStats> {
    if k == 0 || k > matrix.n() {
        return Err(Error::InvalidInput(format!(
            "sparsity must lie in 1..={}, got {k}",
            matrix.n()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    if basis.len() != matrix.n() {
        return Err(Error::Dimension(format!(
            "basis size {} does not match operator width {}",
            basis.len(),
            matrix.n()
        )));
    }
    let gain = (matrix.n() as f64 / matrix.m() as f64).sqrt();
    let mut rng = crate::seed::rng(seed);
    let mut stats = IsometryStats {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        mean: 0.0,
        delta_hat: 0.0,
        trials,
    };
    for _ in 0..trials {
        let mut s = vec![0.0; matrix.n()];
        for idx in index::sample(&mut rng, matrix.n(), k) {
            // a Gaussian draw is exactly zero with probability zero, but keep the norm positive
            let mut v: f64 = rng.sample(StandardNormal);
            while v == 0.0 {
                v = rng.sample(StandardNormal);
            }
            s[idx] = v;
        }
        let x = basis.inverse(&s)?;
        let y = matrix.apply(&x)?;
        let ratio = gain * norm(&y) / norm(&s);
        stats.min = stats.min.min(ratio);
        stats.max = stats.max.max(ratio);
        stats.mean += ratio / trials as f64;
        stats.delta_hat = stats.delta_hat.max((ratio * ratio - 1.0).abs());
    }
    Ok(stats)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

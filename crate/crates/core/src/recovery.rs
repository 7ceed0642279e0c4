//! Sparse recovery of full frames from compressed measurements.
//!
//! Frames are modeled as sparse in an orthonormal 2-D Daubechies-2 wavelet
//! basis with periodic boundaries. Recovery runs Orthogonal Matching Pursuit
//! on the implicit composite operator `ΦΨ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::{norm, CompressedSignal, SbheMatrix};
use crate::error::{Error, Result};

/// Daubechies-2 (4-tap) orthonormal low-pass analysis filter.
pub fn db2_filter() -> [f64; 4] {
    let s3 = 3f64.sqrt();
    let d = 4.0 * 2f64.sqrt();
    [
        (1.0 + s3) / d,
        (3.0 + s3) / d,
        (3.0 - s3) / d,
        (1.0 - s3) / d,
    ]
}

/// Square multilevel separable wavelet basis `Ψ` for `size × size` frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletBasis {
    size: usize,
    levels: usize,
    filter: [f64; 4],
}

impl WaveletBasis {
    pub fn new(size: usize, levels: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "wavelet grid side must be a power of two, got {size}"
            )));
        }
        let max = size.trailing_zeros() as usize;
        if levels < 1 || levels > max {
            return Err(Error::InvalidInput(format!(
                "levels must lie in 1..={max} for side {size}, got {levels}"
            )));
        }
        Ok(WaveletBasis {
            size,
            levels,
            filter: db2_filter(),
        })
    }

    /// Full decomposition depth, `log2(size)`.
    pub fn full(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidInput(format!(
                "wavelet grid side must be at least 2, got {size}"
            )));
        }
        WaveletBasis::new(size, size.trailing_zeros() as usize)
    }

    /// Basis for a square frame of `n` values.
    pub fn for_len(n: usize) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::Dimension(format!(
                "{n} values do not form a square grid"
            )));
        }
        WaveletBasis::full(side)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn filter(&self) -> [f64; 4] {
        self.filter
    }

    pub fn len(&self) -> usize {
        self.size * self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn highpass(&self) -> [f64; 4] {
        let h = self.filter;
        [h[3], -h[2], h[1], -h[0]]
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::Dimension(format!(
                "expected a {0}×{0} grid ({1} values), got {2}",
                self.size,
                self.len(),
                v.len()
            )));
        }
        Ok(())
    }

    /// `Ψᵀx`: row-major grid to row-major coefficients in Mallat layout.
    pub fn forward(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check(values)?;
        let (h, g) = (self.filter, self.highpass());
        let mut c = values.to_vec();
        let n = self.size;
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for level in 0..self.levels {
            let len = n >> level;
            for r in 0..len {
                line[..len].copy_from_slice(&c[r * n..r * n + len]);
                analyze(&line[..len], &mut out[..len], &h, &g);
                c[r * n..r * n + len].copy_from_slice(&out[..len]);
            }
            for col in 0..len {
                for r in 0..len {
                    line[r] = c[r * n + col];
                }
                analyze(&line[..len], &mut out[..len], &h, &g);
                for r in 0..len {
                    c[r * n + col] = out[r];
                }
            }
        }
        Ok(c)
    }

    /// `Ψs`: exact inverse of [`forward`](Self::forward).
    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check(coeffs)?;
        let (h, g) = (self.filter, self.highpass());
        let mut c = coeffs.to_vec();
        let n = self.size;
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        for level in (0..self.levels).rev() {
            let len = n >> level;
            for col in 0..len {
                for r in 0..len {
                    line[r] = c[r * n + col];
                }
                synthesize(&line[..len], &mut out[..len], &h, &g);
                for r in 0..len {
                    c[r * n + col] = out[r];
                }
            }
            for r in 0..len {
                line[..len].copy_from_slice(&c[r * n..r * n + len]);
                synthesize(&line[..len], &mut out[..len], &h, &g);
                c[r * n..r * n + len].copy_from_slice(&out[..len]);
            }
        }
        Ok(c)
    }
}

/// One periodic analysis step: approximation into the first half, detail into the second.
fn analyze(x: &[f64], out: &mut [f64], h: &[f64; 4], g: &[f64; 4]) {
    let len = x.len();
    let half = len / 2;
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for t in 0..4 {
            let v = x[(2 * k + t) % len];
            a += h[t] * v;
            d += g[t] * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

fn synthesize(c: &[f64], out: &mut [f64], h: &[f64; 4], g: &[f64; 4]) {
    let len = c.len();
    let half = len / 2;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..half {
        let (a, d) = (c[k], c[half + k]);
        for t in 0..4 {
            out[(2 * k + t) % len] += h[t] * a + g[t] * d;
        }
    }
}

/// Wavelet-domain coefficients of a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoeffs {
    pub values: Vec<f64>,
    /// Number of nonzero coefficients.
    pub sparsity: usize,
}

impl SparseCoeffs {
    pub fn new(values: Vec<f64>) -> Self {
        let sparsity = values.iter().filter(|&&v| v != 0.0).count();
        SparseCoeffs { values, sparsity }
    }

    /// Keeps the `k` largest-magnitude coefficients (lowest index on ties).
    pub fn thresholded(&self, k: usize) -> SparseCoeffs {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| {
            self.values[b]
                .abs()
                .total_cmp(&self.values[a].abs())
                .then(a.cmp(&b))
        });
        let mut values = vec![0.0; self.values.len()];
        for &i in order.iter().take(k) {
            values[i] = self.values[i];
        }
        SparseCoeffs::new(values)
    }
}

pub fn dwt2(values: &[f64], basis: &WaveletBasis) -> Result<SparseCoeffs> {
    Ok(SparseCoeffs::new(basis.forward(values)?))
}

pub fn idwt2(coeffs: &SparseCoeffs, basis: &WaveletBasis) -> Result<Vec<f64>> {
    basis.inverse(&coeffs.values)
}

/// The implicit product `A = ΦΨ` and its adjoint.
#[derive(Debug, Clone, Copy)]
pub struct CompositeOperator<'a> {
    pub matrix: &'a SbheMatrix,
    pub basis: &'a WaveletBasis,
}

impl<'a> CompositeOperator<'a> {
    pub fn new(matrix: &'a SbheMatrix, basis: &'a WaveletBasis) -> Result<Self> {
        if matrix.n() != basis.len() {
            return Err(Error::Dimension(format!(
                "operator width {} does not match basis size {}",
                matrix.n(),
                basis.len()
            )));
        }
        Ok(CompositeOperator { matrix, basis })
    }

    pub fn rows(&self) -> usize {
        self.matrix.m()
    }

    pub fn cols(&self) -> usize {
        self.matrix.n()
    }

    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.matrix.apply(&self.basis.inverse(s)?)
    }

    pub fn apply_adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.basis.forward(&self.matrix.apply_adjoint(r)?)
    }

    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.cols()];
        e[j] = 1.0;
        self.apply(&e)
    }

    /// `‖ΦΨe_j‖₂` for every atom `j`.
    pub fn column_norms(&self) -> Result<Vec<f64>> {
        (0..self.cols())
            .into_par_iter()
            .map(|j| self.column(j).map(|c| norm(&c)))
            .collect()
    }
}

/// Output of Orthogonal Matching Pursuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpResult {
    pub coeffs: SparseCoeffs,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// Residual norm before the first iteration and after each one.
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    /// Residual reached the tolerance before the atom budget ran out.
    pub converged: bool,
}

/// Orthogonal Matching Pursuit with an incrementally updated QR factorization
/// of the active columns.
///
/// Atoms are ranked by correlation with the residual divided by the atom's
/// norm, since the columns of `ΦΨ` are not unit length.
pub fn omp(
    op: &CompositeOperator,
    y: &[f64],
    k_max: usize,
    residual_tol: f64,
) -> Result<OmpResult> {
    let m = op.rows();
    if y.len() != m {
        return Err(Error::Dimension(format!(
            "measurement length {} does not match operator height {m}",
            y.len()
        )));
    }
    if k_max > m {
        return Err(Error::OverBudget(format!(
            "sparsity budget {k_max} exceeds measurement count {m}"
        )));
    }
    if residual_tol.is_nan() || residual_tol < 0.0 {
        return Err(Error::InvalidInput(format!(
            "residual tolerance must be non-negative, got {residual_tol}"
        )));
    }

    let mut residual = y.to_vec();
    let mut residual_norms = vec![norm(&residual)];
    let mut support: Vec<usize> = Vec::new();
    let mut in_support = vec![false; op.cols()];
    let mut q: Vec<Vec<f64>> = Vec::new();
    // r[j] holds column j of the triangular factor (entries 0..=j)
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut qty: Vec<f64> = Vec::new();
    let mut converged = residual_norms[0] <= residual_tol;
    let column_norms = if converged || k_max == 0 {
        Vec::new()
    } else {
        op.column_norms()?
    };

    while !converged && support.len() < k_max {
        let corr = op.apply_adjoint(&residual)?;
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            // atoms in the null space of Φ can never be identified
            if in_support[j] || column_norms[j] <= 1e-12 {
                continue;
            }
            let score = c.abs() / column_norms[j];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((atom, score)) = best else { break };
        if score == 0.0 {
            break;
        }

        let column = op.column(atom)?;
        let col_norm = norm(&column);
        let mut v = column;
        let mut coeffs = vec![0.0; q.len() + 1];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let proj = dot(qi, &v);
                coeffs[i] += proj;
                v.iter_mut().zip(qi).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let diag = norm(&v);
        if diag <= 1e-12 * col_norm.max(f64::MIN_POSITIVE) {
            log::debug!("omp: atom {atom} is dependent on the active set, stopping");
            break;
        }
        v.iter_mut().for_each(|a| *a /= diag);
        coeffs[q.len()] = diag;

        let z = dot(&v, y);
        residual.iter_mut().zip(&v).for_each(|(a, b)| *a -= z * b);
        // one refinement against the whole basis keeps the residual orthogonal
        for qi in q.iter().chain(std::iter::once(&v)) {
            let drift = dot(qi, &residual);
            residual
                .iter_mut()
                .zip(qi)
                .for_each(|(a, b)| *a -= drift * b);
        }

        q.push(v);
        r.push(coeffs);
        qty.push(z);
        support.push(atom);
        in_support[atom] = true;

        let rn = norm(&residual).min(*residual_norms.last().unwrap());
        residual_norms.push(rn);
        converged = rn <= residual_tol;
    }

    // back-substitution R c = Qᵀy
    let k = support.len();
    let mut c = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = qty[i];
        for j in i + 1..k {
            acc -= r[j][i] * c[j];
        }
        c[i] = acc / r[i][i];
    }
    let mut values = vec![0.0; op.cols()];
    for (&atom, &v) in support.iter().zip(&c) {
        values[atom] = v;
    }
    Ok(OmpResult {
        coeffs: SparseCoeffs::new(values),
        iterations: k,
        support,
        residual_norms,
        converged,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A recovered frame together with the solver trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub values: Vec<f64>,
    pub omp: OmpResult,
}

/// Recovers a full frame `x = Ψs` from `y = Φx`.
pub fn reconstruct(
    y: &CompressedSignal,
    matrix: &SbheMatrix,
    basis: &WaveletBasis,
    k_max: usize,
    residual_tol: f64,
) -> Result<Reconstruction> {
    if y.m != matrix.m() || y.n != matrix.n() || y.block_size != matrix.block_size() {
        return Err(Error::Dimension(format!(
            "signal provenance (n={}, m={}, B={}) does not match operator (n={}, m={}, B={})",
            y.n,
            y.m,
            y.block_size,
            matrix.n(),
            matrix.m(),
            matrix.block_size()
        )));
    }
    if y.matrix_seed != matrix.seed() {
        return Err(Error::InvalidInput(format!(
            "signal was measured with seed {} but operator has seed {}",
            y.matrix_seed,
            matrix.seed()
        )));
    }
    let op = CompositeOperator::new(matrix, basis)?;
    let result = omp(&op, &y.values, k_max, residual_tol)?;
    Ok(Reconstruction {
        values: basis.inverse(&result.coeffs.values)?,
        omp: result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::seed::rng(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn filter_is_orthonormal() {
        let h = db2_filter();
        let sq: f64 = h.iter().map(|v| v * v).sum();
        assert!((sq - 1.0).abs() < 1e-15);
        assert!((h[0] * h[2] + h[1] * h[3]).abs() < 1e-15);
        assert!((h.iter().sum::<f64>() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn basis_validation() {
        assert!(WaveletBasis::new(12, 1).is_err());
        assert!(WaveletBasis::new(8, 4).is_err());
        assert!(WaveletBasis::new(8, 0).is_err());
        assert_eq!(WaveletBasis::full(32).unwrap().levels(), 5);
        assert!(WaveletBasis::for_len(1000).is_err());
        let b = WaveletBasis::full(8).unwrap();
        assert!(matches!(b.forward(&[0.0; 10]), Err(Error::Dimension(_))));
        assert!(matches!(b.inverse(&[0.0; 65]), Err(Error::Dimension(_))));
    }

    #[test]
    fn constant_image_has_no_detail() {
        for levels in 1..=5 {
            let b = WaveletBasis::new(32, levels).unwrap();
            let c = b.forward(&vec![3.5; 1024]).unwrap();
            let approx = 32 >> levels;
            for r in 0..32 {
                for col in 0..32 {
                    if r >= approx || col >= approx {
                        assert!(c[r * 32 + col].abs() < 1e-10);
                    }
                }
            }
        }
        let c = WaveletBasis::full(32)
            .unwrap()
            .forward(&vec![1.0; 1024])
            .unwrap();
        assert!((c[0] - 32.0).abs() < 1e-10);
    }

    #[test]
    fn perfect_reconstruction_and_parseval() {
        for (side, seed) in [(2, 1), (4, 2), (8, 3), (32, 4), (64, 5)] {
            let b = WaveletBasis::full(side).unwrap();
            let x = random(side * side, seed);
            let c = dwt2(&x, &b).unwrap();
            assert!((norm(&c.values) - norm(&x)).abs() < 1e-10 * norm(&x).max(1.0));
            let back = idwt2(&c, &b).unwrap();
            for (p, q) in back.iter().zip(&x) {
                assert!((p - q).abs() < 1e-10);
            }
            let c2 = random(side * side, seed + 100);
            let round = b.forward(&b.inverse(&c2).unwrap()).unwrap();
            for (p, q) in round.iter().zip(&c2) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn impulse_matches_dense_basis() {
        let b = WaveletBasis::full(8).unwrap();
        // Ψ built column by column from unit coefficient vectors
        let psi: Vec<Vec<f64>> = (0..64)
            .map(|j| {
                let mut e = vec![0.0; 64];
                e[j] = 1.0;
                b.inverse(&e).unwrap()
            })
            .collect();
        for pos in [0, 9, 27, 63] {
            let mut x = vec![0.0; 64];
            x[pos] = 1.0;
            let c = b.forward(&x).unwrap();
            for (j, col) in psi.iter().enumerate() {
                assert!((c[j] - col[pos]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_and_coarse_unit_inverse() {
        let b = WaveletBasis::full(16).unwrap();
        assert!(b.inverse(&[0.0; 256]).unwrap().iter().all(|&v| v == 0.0));
        let mut e = vec![0.0; 256];
        e[0] = 1.0;
        let bump = b.inverse(&e).unwrap();
        assert!((norm(&bump) - 1.0).abs() < 1e-10);
        assert!(bump.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn thresholding_keeps_largest() {
        let c = SparseCoeffs::new(vec![0.1, -3.0, 2.0, 0.0, 2.0]);
        assert_eq!(c.sparsity, 4);
        let t = c.thresholded(2);
        assert_eq!(t.values, vec![0.0, -3.0, 2.0, 0.0, 0.0]);
        assert_eq!(t.sparsity, 2);
    }

    #[test]
    fn composite_adjoint_consistency() {
        let basis = WaveletBasis::full(16).unwrap();
        let matrix = SbheMatrix::build(256, 64, 32, 8).unwrap();
        let op = CompositeOperator::new(&matrix, &basis).unwrap();
        for seed in 0..5 {
            let a = random(256, seed);
            let b = random(64, seed + 50);
            let lhs = dot(&op.apply(&a).unwrap(), &b);
            let rhs = dot(&a, &op.apply_adjoint(&b).unwrap());
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }

    fn planted(
        matrix: &SbheMatrix,
        basis: &WaveletBasis,
        support: &[usize],
        vals: &[f64],
    ) -> (Vec<f64>, CompressedSignal) {
        let mut s = vec![0.0; matrix.n()];
        for (&i, &v) in support.iter().zip(vals) {
            s[i] = v;
        }
        let x = basis.inverse(&s).unwrap();
        let y = CompressedSignal {
            values: matrix.apply(&x).unwrap(),
            matrix_seed: matrix.seed(),
            m: matrix.m(),
            n: matrix.n(),
            block_size: matrix.block_size(),
            label: 0,
        };
        (x, y)
    }

    #[test]
    fn one_sparse_exact_recovery() {
        let basis = WaveletBasis::full(32).unwrap();
        let matrix = SbheMatrix::build(1024, 64, 32, 21).unwrap();
        for j in [5usize, 300, 777, 1023] {
            let (x, y) = planted(&matrix, &basis, &[j], &[2.5]);
            let rec = reconstruct(&y, &matrix, &basis, 1, 1e-10).unwrap();
            assert_eq!(rec.omp.support, vec![j]);
            let err: f64 = norm(
                &rec.values
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            assert!(err / norm(&x) < 1e-8);
        }
    }

    #[test]
    fn zero_measurements_give_zero_frame() {
        let basis = WaveletBasis::full(32).unwrap();
        let matrix = SbheMatrix::build(1024, 64, 32, 21).unwrap();
        let y = CompressedSignal {
            values: vec![0.0; 64],
            matrix_seed: 21,
            m: 64,
            n: 1024,
            block_size: 32,
            label: 0,
        };
        let rec = reconstruct(&y, &matrix, &basis, 10, 0.0).unwrap();
        assert_eq!(rec.omp.iterations, 0);
        assert!(rec.omp.converged);
        assert!(rec.values.iter().all(|&v| v == 0.0));
        assert!(matches!(
            reconstruct(&y, &matrix, &basis, 65, 0.0),
            Err(Error::OverBudget(_))
        ));
        let wrong = CompressedSignal {
            matrix_seed: 3,
            ..y
        };
        assert!(reconstruct(&wrong, &matrix, &basis, 10, 0.0).is_err());
    }

    #[test]
    fn residual_is_non_increasing_and_unconverged_is_flagged() {
        let basis = WaveletBasis::full(32).unwrap();
        let matrix = SbheMatrix::build(1024, 128, 32, 4).unwrap();
        let x = random(1024, 9);
        let y = CompressedSignal {
            values: matrix.apply(&x).unwrap(),
            matrix_seed: 4,
            m: 128,
            n: 1024,
            block_size: 32,
            label: 0,
        };
        let rec = reconstruct(&y, &matrix, &basis, 40, 1e-12).unwrap();
        assert!(!rec.omp.converged);
        assert_eq!(rec.omp.iterations, 40);
        for w in rec.omp.residual_norms.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn noisy_measurements_degrade_gracefully() {
        let basis = WaveletBasis::full(32).unwrap();
        let mut rng = crate::seed::rng(1);
        for trial in 0..10u64 {
            let matrix = SbheMatrix::build(1024, 128, 32, 100 + trial).unwrap();
            let support: Vec<usize> = rand::seq::index::sample(&mut rng, 1024, 8).into_vec();
            let vals: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
            let (x, mut y) = planted(&matrix, &basis, &support, &vals);
            let eps = 0.05;
            let noise = random(128, trial + 1000);
            let scale = eps * norm(&y.values) / norm(&noise);
            y.values
                .iter_mut()
                .zip(&noise)
                .for_each(|(a, b)| *a += scale * b);
            let rec = reconstruct(&y, &matrix, &basis, 8, 0.0).unwrap();
            let err = norm(
                &rec.values
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            assert!(
                err / norm(&x) <= 10.0 * eps,
                "trial {trial}: {}",
                err / norm(&x)
            );
        }
    }
}

//! Soft-margin linear SVM trained through its dual with SMO.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = usize;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 10_000_000;

/// Observations sharing one dimension, each with a class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    dim: usize,
    observations: Vec<Vec<f64>>,
    labels: Vec<ClassId>,
}

impl LabeledSet {
    pub fn new(observations: Vec<Vec<f64>>, labels: Vec<ClassId>) -> Result<Self> {
        if observations.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} observations but {} labels",
                observations.len(),
                labels.len()
            )));
        }
        let dim = observations.first().map_or(0, Vec::len);
        for (i, x) in observations.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Dimension(format!(
                    "observation {i} has dimension {}, expected {dim}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "observation {i} has non-finite features"
                )));
            }
        }
        Ok(LabeledSet {
            dim,
            observations,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> (&[f64], ClassId) {
        (&self.observations[i], self.labels[i])
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            dim: self.dim,
            observations: indices
                .iter()
                .map(|&i| self.observations[i].clone())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// A trained binary linear classifier `sign(wᵀx + b)`.
///
/// `classes.0` is the negative label and `classes.1` the positive one; a
/// decision value of exactly zero goes to the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub w: Vec<f64>,
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub classes: (ClassId, ClassId),
    pub support_indices: Vec<usize>,
    /// Dual variables, one per training observation.
    pub alphas: Vec<f64>,
    /// Maximal KKT violation `m(α) − M(α)` at termination.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    pub fn predict(&self, x: &[f64]) -> ClassId {
        if self.decision(x) >= 0.0 {
            self.classes.1
        } else {
            self.classes.0
        }
    }

    /// `+1` for the positive class, `-1` for the negative class.
    pub fn sign_of(&self, label: ClassId) -> Option<f64> {
        if label == self.classes.1 {
            Some(1.0)
        } else if label == self.classes.0 {
            Some(-1.0)
        } else {
            None
        }
    }

    /// Primal objective `½‖w‖² + C Σ max(0, 1 − ℓ(wᵀx + b))` on a set.
    pub fn primal_objective(&self, set: &LabeledSet) -> Result<f64> {
        let slack = hinge_loss(self, set)? * set.len() as f64;
        Ok(0.5 * self.w.iter().map(|v| v * v).sum::<f64>() + self.c * slack)
    }

    /// Returns a copy with `(w, b)` multiplied by `gamma`.
    pub fn scaled(&self, gamma: f64) -> BinarySvm {
        BinarySvm {
            w: self.w.iter().map(|v| v * gamma).collect(),
            b: self.b * gamma,
            ..self.clone()
        }
    }
}

/// Mean hinge loss `(1/N) Σ max(0, 1 − ℓ_i(wᵀx_i + b))`.
pub fn hinge_loss(model: &BinarySvm, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidInput("hinge loss of an empty set".into()));
    }
    if set.dim() != model.w.len() {
        return Err(Error::Dimension(format!(
            "set dimension {} does not match model dimension {}",
            set.dim(),
            model.w.len()
        )));
    }
    let mut total = 0.0;
    for (x, &label) in set.observations().iter().zip(set.labels()) {
        let l = model.sign_of(label).ok_or_else(|| {
            Error::InvalidInput(format!(
                "label {label} is not one of the model classes {:?}",
                model.classes
            ))
        })?;
        total += (1.0 - l * model.decision(x)).max(0.0);
    }
    Ok(total / set.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SmoOptions {
    pub fn new(c: f64, tol: f64) -> Self {
        SmoOptions {
            c,
            tol,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub fn train_binary(set: &LabeledSet, c: f64, tol: f64) -> Result<BinarySvm> {
    train_binary_with(set, &SmoOptions::new(c, tol))
}

/// Solves the soft-margin dual
/// `min ½αᵀQα − Σα  s.t. 0 ≤ α ≤ C, Σ α_i ℓ_i = 0` with `Q_ij = ℓ_iℓ_j x_iᵀx_j`,
/// selecting the maximal violating pair at every step.
pub fn train_binary_with(set: &LabeledSet, opts: &SmoOptions) -> Result<BinarySvm> {
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "C must be positive, got {}",
            opts.c
        )));
    }
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    let classes = set.classes();
    match classes.len() {
        2 => {}
        0 | 1 => {
            return Err(Error::DegenerateSet(format!(
                "binary training needs two classes, found {classes:?}"
            )))
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "binary training got more than two classes: {classes:?}"
            )))
        }
    }
    let pair = (classes[0], classes[1]);
    let n = set.len();
    let x = set.observations();
    let y: Vec<f64> = set
        .labels()
        .iter()
        .map(|&l| if l == pair.1 { 1.0 } else { -1.0 })
        .collect();

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let c = opts.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut gap;
    loop {
        let (mut i, mut up) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut low) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
            if in_up && v > up {
                up = v;
                i = t;
            }
            if in_low && v < low {
                low = v;
                j = t;
            }
        }
        gap = up - low;
        if i == usize::MAX || j == usize::MAX || gap <= opts.tol || iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        // move along d = (ℓ_i e_i − ℓ_j e_j), step t ≥ 0
        let curvature = (gram[i * n + i] + gram[j * n + j] - 2.0 * gram[i * n + j]).max(1e-12);
        let room_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let mut step = gap / curvature;
        let (mut clip_i, mut clip_j) = (false, false);
        if step >= room_i {
            step = room_i;
            clip_i = true;
        }
        if step >= room_j {
            step = room_j;
            clip_j = true;
            clip_i = clip_i && room_i == room_j;
        }
        alpha[i] += y[i] * step;
        alpha[j] -= y[j] * step;
        // snap to the box so membership tests stay exact
        if clip_i {
            alpha[i] = if y[i] > 0.0 { c } else { 0.0 };
        }
        if clip_j {
            alpha[j] = if y[j] > 0.0 { 0.0 } else { c };
        }
        for t in 0..n {
            grad[t] += y[t] * step * (gram[t * n + i] - gram[t * n + j]);
        }
    }
    let converged = gap <= opts.tol;
    if !converged {
        log::warn!(
            "SMO stopped after {iterations} iterations with KKT gap {gap:.3e} > tol {:.1e}",
            opts.tol
        );
    }

    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).collect();
    let b = if free.is_empty() {
        let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0) {
                up = up.max(v);
            }
            if (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0) {
                low = low.min(v);
            }
        }
        match (up.is_finite(), low.is_finite()) {
            (true, true) => (up + low) / 2.0,
            (true, false) => up,
            (false, true) => low,
            (false, false) => 0.0,
        }
    } else {
        free.iter().map(|&t| -y[t] * grad[t]).sum::<f64>() / free.len() as f64
    };

    let mut w = vec![0.0; set.dim()];
    for t in 0..n {
        if alpha[t] > 0.0 {
            for (wk, xk) in w.iter_mut().zip(&x[t]) {
                *wk += alpha[t] * y[t] * xk;
            }
        }
    }
    Ok(BinarySvm {
        w,
        b,
        c,
        classes: pair,
        support_indices: (0..n).filter(|&t| alpha[t] > 0.0).collect(),
        alphas: alpha,
        kkt_residual: gap.max(0.0),
        iterations,
        converged,
    })
}

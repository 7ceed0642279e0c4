//! DAGSVM: one binary SVM per class pair, classification by sequential elimination.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{hinge_loss, train_binary_with, BinarySvm, ClassId, LabeledSet, SmoOptions};
use crate::error::{Error, Result};

pub const DEFAULT_C_GRID: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];

/// Counts binary evaluations made by a model.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

impl Clone for EvalCounter {
    fn clone(&self) -> Self {
        EvalCounter(AtomicU64::new(self.get()))
    }
}

impl PartialEq for EvalCounter {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Indices into a [`LabeledSet`] used for training and for choosing `C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSplit {
    pub development: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub c_grid: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
    pub development_size: usize,
    pub validation_size: usize,
    /// Perturbation-level split the model was trained under, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRecord>,
}

/// Enough to regenerate a perturbation split: count, fractions, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub perturbation_count: usize,
    pub fractions: [f64; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagSvmModel {
    pub class_list: Vec<ClassId>,
    /// Pairwise models ordered `(0,1), (0,2), …, (M−2, M−1)` over `class_list` positions.
    pub pairwise: Vec<BinarySvm>,
    pub metadata: TrainingMetadata,
    #[serde(skip)]
    pub evaluations: EvalCounter,
}

impl DagSvmModel {
    pub fn dim(&self) -> usize {
        self.pairwise.first().map_or(0, |m| m.w.len())
    }

    fn position(&self, class: ClassId) -> Option<usize> {
        self.class_list.binary_search(&class).ok()
    }

    /// The model separating classes `a` and `b`, in either order.
    pub fn pair(&self, a: ClassId, b: ClassId) -> Option<&BinarySvm> {
        let (i, j) = (self.position(a)?, self.position(b)?);
        let (i, j) = if i < j {
            (i, j)
        } else if j < i {
            (j, i)
        } else {
            return None;
        };
        let m = self.class_list.len();
        // offset of row i in the upper triangle, then column j
        let k = i * (2 * m - i - 1) / 2 + (j - i - 1);
        self.pairwise.get(k)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "observation dimension {} does not match model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Runs the elimination over candidates in the given order.
    fn eliminate(&self, x: &[f64], order: &[ClassId]) -> ClassId {
        let mut candidates: VecDeque<ClassId> = order.iter().copied().collect();
        while candidates.len() > 1 {
            let (first, last) = (candidates[0], candidates[candidates.len() - 1]);
            let model = self
                .pair(first, last)
                .expect("pair model for every class pair");
            self.evaluations.bump();
            if model.predict(x) == first {
                candidates.pop_back();
            } else {
                candidates.pop_front();
            }
        }
        candidates[0]
    }

    pub fn classify(&self, x: &[f64]) -> Result<ClassId> {
        self.check_dim(x)?;
        Ok(self.eliminate(x, &self.class_list))
    }

    /// Classification with a caller-chosen candidate order.
    pub fn classify_with_order(&self, x: &[f64], order: &[ClassId]) -> Result<ClassId> {
        self.check_dim(x)?;
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != self.class_list {
            return Err(Error::InvalidInput(
                "order must be a permutation of the model classes".into(),
            ));
        }
        Ok(self.eliminate(x, order))
    }
}

/// Trains every pairwise SVM, choosing `C` per pair on the validation split and
/// retraining on development ∪ validation.
pub fn train_dag(
    set: &LabeledSet,
    c_grid: &[f64],
    split: &TrainSplit,
    seed: u64,
    tol: f64,
) -> Result<DagSvmModel> {
    let classes = set.classes();
    if classes.len() < 2 {
        return Err(Error::DegenerateSet(format!(
            "need at least two classes, found {classes:?}"
        )));
    }
    let mut grid: Vec<f64> = c_grid.to_vec();
    if grid.is_empty() || grid.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "C grid must be non-empty and positive: {c_grid:?}"
        )));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut in_dev = vec![false; set.len()];
    for &i in &split.development {
        if i >= set.len() {
            return Err(Error::InvalidInput(format!(
                "development index {i} out of range"
            )));
        }
        in_dev[i] = true;
    }
    for &i in &split.validation {
        if i >= set.len() {
            return Err(Error::InvalidInput(format!(
                "validation index {i} out of range"
            )));
        }
        if in_dev[i] {
            return Err(Error::InvalidInput(format!(
                "observation {i} is in both development and validation"
            )));
        }
    }
    for &c in &classes {
        if !split.development.iter().any(|&i| set.labels()[i] == c) {
            return Err(Error::DegenerateSet(format!(
                "class {c} has no development observations"
            )));
        }
    }

    let pairs: Vec<(ClassId, ClassId)> = classes
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| classes[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let of_pair = |idx: &[usize], (a, b): (ClassId, ClassId)| -> Vec<usize> {
        idx.iter()
            .copied()
            .filter(|&i| set.labels()[i] == a || set.labels()[i] == b)
            .collect()
    };

    let pairwise = pairs
        .par_iter()
        .map(|&pair| {
            let dev = set.subset(&of_pair(&split.development, pair));
            let val = set.subset(&of_pair(&split.validation, pair));
            let mut best = (grid[0], f64::NEG_INFINITY);
            for &c in &grid {
                let model = train_binary_with(&dev, &SmoOptions::new(c, tol))?;
                let acc = if val.is_empty() {
                    0.0
                } else {
                    val.observations()
                        .iter()
                        .zip(val.labels())
                        .filter(|(x, &l)| model.predict(x) == l)
                        .count() as f64
                        / val.len() as f64
                };
                if acc > best.1 {
                    best = (c, acc);
                }
            }
            let mut all = of_pair(&split.development, pair);
            all.extend(of_pair(&split.validation, pair));
            train_binary_with(&set.subset(&all), &SmoOptions::new(best.0, tol))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DagSvmModel {
        class_list: classes,
        pairwise,
        metadata: TrainingMetadata {
            c_grid: grid,
            tol,
            seed,
            development_size: split.development.len(),
            validation_size: split.validation.len(),
            split: None,
        },
        evaluations: EvalCounter::default(),
    })
}

pub fn classify(model: &DagSvmModel, x: &[f64]) -> Result<ClassId> {
    model.classify(x)
}

/// Row-normalized confusion matrix over the model's classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassId>,
    pub counts: Vec<Vec<usize>>,
    /// `percentages[i][j]`: share of true class `i` predicted as `j`, in percent.
    pub percentages: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<ClassId>, counts: Vec<Vec<usize>>) -> Self {
        let percentages = counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if total == 0 {
                            0.0
                        } else {
                            100.0 * c as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect();
        ConfusionMatrix {
            classes,
            counts,
            percentages,
        }
    }

    /// Element-wise mean of several row-percentage matrices over the same classes.
    pub fn mean_percentages(matrices: &[ConfusionMatrix]) -> Option<Vec<Vec<f64>>> {
        let first = matrices.first()?;
        let m = first.classes.len();
        let mut out = vec![vec![0.0; m]; m];
        for cm in matrices {
            for (o, row) in out.iter_mut().zip(&cm.percentages) {
                for (a, b) in o.iter_mut().zip(row) {
                    *a += b / matrices.len() as f64;
                }
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Percent of test observations labeled correctly.
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(model: &DagSvmModel, test: &LabeledSet) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::InvalidInput(
            "cannot evaluate on an empty set".into(),
        ));
    }
    let m = model.class_list.len();
    let mut counts = vec![vec![0usize; m]; m];
    let mut correct = 0;
    for (x, &label) in test.observations().iter().zip(test.labels()) {
        let truth = model.position(label).ok_or_else(|| {
            Error::InvalidInput(format!("test label {label} is unknown to the model"))
        })?;
        let predicted = model.classify(x)?;
        if predicted == label {
            correct += 1;
        }
        counts[truth][model.position(predicted).unwrap()] += 1;
    }
    Ok(Evaluation {
        accuracy: 100.0 * correct as f64 / test.len() as f64,
        confusion: ConfusionMatrix::from_counts(model.class_list.clone(), counts),
    })
}

/// Mean over class pairs of the test hinge loss of each pairwise model,
/// restricted to observations of that pair.
pub fn mean_pairwise_hinge_loss(model: &DagSvmModel, test: &LabeledSet) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for svm in &model.pairwise {
        let idx: Vec<usize> = (0..test.len())
            .filter(|&i| svm.sign_of(test.labels()[i]).is_some())
            .collect();
        if idx.is_empty() {
            continue;
        }
        total += hinge_loss(svm, &test.subset(&idx))?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput(
            "no test observations for any class pair".into(),
        ));
    }
    Ok(total / used as f64)
}

/// Fraction of observations whose label under `orders` random candidate orders
/// matches the canonical-order label.
pub fn order_agreement(
    model: &DagSvmModel,
    xs: &[Vec<f64>],
    orders: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = crate::seed::rng(seed);
    let mut agree = 0usize;
    let mut total = 0usize;
    for _ in 0..orders {
        let mut order = model.class_list.clone();
        order.shuffle(&mut rng);
        for x in xs {
            agree += usize::from(model.classify(x)? == model.classify_with_order(x, &order)?);
            total += 1;
        }
    }
    Ok(if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Well separated Gaussian blobs, `per` points each.
    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> LabeledSet {
        let mut rng = crate::seed::rng(seed);
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..per {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                xs.push(vec![c[0] + spread * a, c[1] + spread * b]);
                ls.push(k);
            }
        }
        LabeledSet::new(xs, ls).unwrap()
    }

    fn split_half(n: usize) -> TrainSplit {
        TrainSplit {
            development: (0..n).filter(|i| i % 3 == 0).collect(),
            validation: (0..n).filter(|i| i % 3 == 1).collect(),
        }
    }

    #[test]
    fn pair_count_and_evaluation_count() {
        let centers: Vec<[f64; 2]> = (0..16)
            .map(|k| [10.0 * (k % 4) as f64, 10.0 * (k / 4) as f64])
            .collect();
        let set = blobs(&centers, 6, 0.5, 1);
        let model = train_dag(&set, &[1.0], &split_half(set.len()), 0, 1e-3).unwrap();
        assert_eq!(model.pairwise.len(), 120);
        for a in 0..16 {
            for b in 0..16 {
                if a != b {
                    let p = model.pair(a, b).unwrap();
                    assert_eq!(p.classes, (a.min(b), a.max(b)));
                }
            }
        }
        model.evaluations.reset();
        model.classify(&[3.0, 4.0]).unwrap();
        assert_eq!(model.evaluations.get(), 15);
    }

    #[test]
    fn two_classes_reduce_to_binary() {
        let set = blobs(&[[0.0, 0.0], [4.0, 0.0]], 20, 1.0, 2);
        let model = train_dag(&set, &[0.1, 1.0], &split_half(set.len()), 0, 1e-3).unwrap();
        assert_eq!(model.pairwise.len(), 1);
        let svm = &model.pairwise[0];
        for x in set.observations() {
            model.evaluations.reset();
            assert_eq!(model.classify(x).unwrap(), svm.predict(x));
            assert_eq!(model.evaluations.get(), 1);
        }
    }

    #[test]
    fn separable_blobs_are_perfect_and_agree_with_voting() {
        let centers = [[0.0, 0.0], [6.0, 0.0], [3.0, 5.0]];
        let train = blobs(&centers, 30, 0.6, 3);
        let test = blobs(&centers, 30, 0.6, 4);
        let model = train_dag(&train, &[1.0], &split_half(train.len()), 0, 1e-3).unwrap();
        let eval = evaluate(&model, &test).unwrap();
        assert_eq!(eval.accuracy, 100.0);
        // one-vs-one majority vote oracle
        let mut agree = 0;
        for x in test.observations() {
            let mut votes = [0usize; 3];
            for a in 0..3 {
                for b in a + 1..3 {
                    votes[model.pair(a, b).unwrap().predict(x)] += 1;
                }
            }
            let winner = (0..3)
                .max_by_key(|&k| (votes[k], std::cmp::Reverse(k)))
                .unwrap();
            agree += usize::from(winner == model.classify(x).unwrap());
        }
        assert!(agree as f64 >= 0.95 * test.len() as f64);
        assert_eq!(
            order_agreement(&model, test.observations(), 5, 1).unwrap(),
            1.0
        );
    }

    #[test]
    fn tie_goes_to_positive_class() {
        let set = LabeledSet::new(vec![vec![-1.0], vec![1.0]], vec![0, 1]).unwrap();
        let model = train_dag(
            &set,
            &[100.0],
            &TrainSplit {
                development: vec![0, 1],
                validation: vec![],
            },
            0,
            1e-9,
        )
        .unwrap();
        assert_eq!(
            model
                .classify(&[model.pairwise[0].b / -model.pairwise[0].w[0]])
                .unwrap(),
            1
        );
    }

    #[test]
    fn confusion_rows_and_constant_classifier() {
        let cm = ConfusionMatrix::from_counts(
            vec![0, 1, 2],
            vec![vec![3, 1, 0], vec![0, 0, 7], vec![1, 1, 1]],
        );
        for row in &cm.percentages {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
        // model that always says class 0: accuracy = 100 / M on balanced data
        let svm = |a, b| BinarySvm {
            w: vec![0.0],
            b: -1.0,
            c: 1.0,
            classes: (a, b),
            support_indices: vec![],
            alphas: vec![],
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
        };
        let model = DagSvmModel {
            class_list: vec![0, 1, 2, 3],
            pairwise: vec![
                svm(0, 1),
                svm(0, 2),
                svm(0, 3),
                svm(1, 2),
                svm(1, 3),
                svm(2, 3),
            ],
            metadata: TrainingMetadata {
                c_grid: vec![1.0],
                tol: 1e-3,
                seed: 0,
                development_size: 0,
                validation_size: 0,
                split: None,
            },
            evaluations: EvalCounter::default(),
        };
        let test = LabeledSet::new(vec![vec![0.0]; 8], vec![0, 0, 1, 1, 2, 2, 3, 3]).unwrap();
        let e = evaluate(&model, &test).unwrap();
        assert_eq!(e.accuracy, 25.0);
        assert_eq!(e.confusion.percentages[2], vec![100.0, 0.0, 0.0, 0.0]);
        assert!(evaluate(&model, &LabeledSet::new(vec![], vec![]).unwrap()).is_err());
    }

    #[test]
    fn split_errors() {
        let set = blobs(&[[0.0, 0.0], [4.0, 0.0], [8.0, 0.0]], 5, 0.5, 2);
        let overlap = TrainSplit {
            development: vec![0, 5, 10],
            validation: vec![0],
        };
        assert!(matches!(
            train_dag(&set, &[1.0], &overlap, 0, 1e-3),
            Err(Error::InvalidInput(_))
        ));
        let missing = TrainSplit {
            development: vec![0, 5],
            validation: vec![10],
        };
        assert!(matches!(
            train_dag(&set, &[1.0], &missing, 0, 1e-3),
            Err(Error::DegenerateSet(_))
        ));
        let one = LabeledSet::new(vec![vec![1.0]], vec![0]).unwrap();
        assert!(matches!(
            train_dag(
                &one,
                &[1.0],
                &TrainSplit {
                    development: vec![0],
                    validation: vec![]
                },
                0,
                1e-3
            ),
            Err(Error::DegenerateSet(_))
        ));
    }
}

//! Linear SVMs, hinge loss, and DAG multi-class classification.

mod dag;
mod svm;

pub use dag::{
    classify, evaluate, mean_pairwise_hinge_loss, order_agreement, train_dag, ConfusionMatrix,
    DagSvmModel, EvalCounter, Evaluation, SplitRecord, TrainSplit, TrainingMetadata,
    DEFAULT_C_GRID,
};
pub use svm::{
    hinge_loss, train_binary, train_binary_with, BinarySvm, ClassId, LabeledSet, SmoOptions,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};

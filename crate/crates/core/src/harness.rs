//! Experiment driver: dataset generation, perturbation splits, the signal-size and
//! training-size sweeps, and report emission.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::{SbheMatrix, DEFAULT_BLOCK_SIZE};
use crate::error::{Error, Result};
use crate::io;
use crate::learn::{
    evaluate, mean_pairwise_hinge_loss, train_dag, ConfusionMatrix, LabeledSet, TrainSplit,
    DEFAULT_C_GRID, DEFAULT_TOL,
};
use crate::seed::derive_seed;
use crate::simulator::{
    generate_dataset, make_primitive, spheres_from_vertices, PerturbationGrid, Primitive,
    SphereModel, TactileFrame, TaxelArray, DEFAULT_EXTENT_MM, DEFAULT_NOISE_SIGMA,
    DEFAULT_PRESS_DEPTH, DEFAULT_STIFFNESS,
};

/// One object of the roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum ObjectSpec {
    Primitive {
        name: String,
        shape: Primitive,
        /// Lattice spacing of the sphere approximation, mm.
        spacing: f64,
    },
    /// Vertex list (plain `x y z`, OBJ or ASCII PLY), recentred laterally.
    Mesh { name: String, path: PathBuf },
}

impl ObjectSpec {
    pub fn name(&self) -> &str {
        match self {
            ObjectSpec::Primitive { name, .. } | ObjectSpec::Mesh { name, .. } => name,
        }
    }

    pub fn build(&self) -> Result<SphereModel> {
        match self {
            ObjectSpec::Primitive {
                name,
                shape,
                spacing,
            } => make_primitive(name, shape, *spacing),
            ObjectSpec::Mesh { name, path } => {
                Ok(spheres_from_vertices(&io::read_vertices(path)?, name)?.centered_xy())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Raw,
    Compressed,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Raw => "raw",
            Condition::Compressed => "compressed",
        }
    }
}

/// A signal of `size` values: raw frames from an array with that many taxels,
/// or `size` SBHE measurements of the finest array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub condition: Condition,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbheParams {
    #[serde(rename = "B")]
    pub block_size: usize,
    pub m_list: Vec<usize>,
    pub matrix_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Side lengths of the square arrays; all share `extent_mm`.
    pub array_sides: Vec<usize>,
    pub extent_mm: f64,
    pub stiffness: f64,
    pub press_depth: f64,
    pub objects: Vec<ObjectSpec>,
    pub perturbations: PerturbationGrid,
    pub noise_sigma: f64,
    pub dataset_seed: u64,
    pub sbhe: SbheParams,
    pub c_grid: Vec<f64>,
    pub svm_tol: f64,
    /// (development, validation) fractions of the perturbations; the rest is test.
    pub split_fractions: [f64; 2],
    pub training_fractions: Vec<[f64; 2]>,
    pub training_conditions: Vec<ConditionSpec>,
    pub split_seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// Desk-scale setup: eight primitives on a 32×32 array with 8×8 and 4×4 companions.
    fn default() -> Self {
        let prim = |name: &str, shape| ObjectSpec::Primitive {
            name: name.into(),
            shape,
            spacing: 4.0,
        };
        ExperimentConfig {
            array_sides: vec![32, 8, 4],
            extent_mm: DEFAULT_EXTENT_MM,
            stiffness: DEFAULT_STIFFNESS,
            press_depth: DEFAULT_PRESS_DEPTH,
            objects: vec![
                prim(
                    "box_large",
                    Primitive::Box {
                        size: [160.0, 120.0, 60.0],
                    },
                ),
                prim(
                    "box_small",
                    Primitive::Box {
                        size: [80.0, 60.0, 40.0],
                    },
                ),
                prim(
                    "box_bar",
                    Primitive::Box {
                        size: [150.0, 40.0, 50.0],
                    },
                ),
                prim("sphere_small", Primitive::Sphere { radius: 30.0 }),
                prim("sphere_medium", Primitive::Sphere { radius: 50.0 }),
                prim("sphere_large", Primitive::Sphere { radius: 100.0 }),
                prim(
                    "cylinder_flat",
                    Primitive::Cylinder {
                        radius: 45.0,
                        height: 35.0,
                    },
                ),
                prim(
                    "cylinder_tall",
                    Primitive::Cylinder {
                        radius: 65.0,
                        height: 140.0,
                    },
                ),
            ],
            perturbations: PerturbationGrid {
                row_offsets: vec![0.0, 5.0, 10.0],
                col_offsets: vec![0.0, 5.0, 10.0],
                rotations: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            },
            noise_sigma: DEFAULT_NOISE_SIGMA,
            dataset_seed: 1,
            sbhe: SbheParams {
                block_size: DEFAULT_BLOCK_SIZE,
                m_list: vec![1024, 64, 16],
                matrix_seed: 7,
            },
            c_grid: DEFAULT_C_GRID.to_vec(),
            svm_tol: DEFAULT_TOL,
            split_fractions: [0.4, 0.2],
            training_fractions: vec![[0.4, 0.2], [0.2, 0.1], [0.1, 0.05]],
            training_conditions: vec![
                ConditionSpec {
                    condition: Condition::Compressed,
                    size: 64,
                },
                ConditionSpec {
                    condition: Condition::Raw,
                    size: 64,
                },
            ],
            split_seeds: (0..10).collect(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Configuration(msg.into())
}

fn check_fractions([d, v]: [f64; 2]) -> Result<()> {
    if !(d >= 0.0 && v >= 0.0 && d + v <= 1.0) {
        return Err(config_err(format!(
            "split fractions ({d}, {v}) must be non-negative with sum ≤ 1"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn finest_side(&self) -> usize {
        self.array_sides.iter().copied().max().unwrap_or(0)
    }

    pub fn array(&self, side: usize) -> Result<TaxelArray> {
        TaxelArray::square(side, self.extent_mm, self.stiffness)
            .map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.array_sides.is_empty() || self.array_sides.contains(&0) {
            return Err(config_err("need at least one array with a positive side"));
        }
        let n = self.finest_side().pow(2);
        if self.objects.len() < 2 {
            return Err(config_err("need at least two objects"));
        }
        let names: BTreeSet<&str> = self.objects.iter().map(ObjectSpec::name).collect();
        if names.len() != self.objects.len() {
            return Err(config_err("object names must be unique"));
        }
        if self.perturbations.len() < 3 {
            return Err(config_err("need at least three perturbations"));
        }
        if !(self.noise_sigma >= 0.0 && self.press_depth > 0.0) {
            return Err(config_err("noise sigma must be ≥ 0 and press depth > 0"));
        }
        let b = self.sbhe.block_size;
        if !b.is_power_of_two() || !n.is_multiple_of(b) {
            return Err(config_err(format!(
                "block size {b} must be a power of two dividing n = {n}"
            )));
        }
        if let Some(&m) = self.sbhe.m_list.iter().find(|&&m| m == 0 || m > n) {
            return Err(config_err(format!("m = {m} outside 1..={n}")));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| c.is_nan() || c <= 0.0) {
            return Err(config_err("C grid must be non-empty and positive"));
        }
        if self.svm_tol.is_nan() || self.svm_tol <= 0.0 {
            return Err(config_err("svm tolerance must be positive"));
        }
        if self.split_seeds.is_empty() {
            return Err(config_err("need at least one split seed"));
        }
        check_fractions(self.split_fractions)?;
        for &f in &self.training_fractions {
            check_fractions(f)?;
        }
        for c in &self.training_conditions {
            if c.condition == Condition::Compressed && (c.size == 0 || c.size > n) {
                return Err(config_err(format!(
                    "compressed size {} outside 1..={n}",
                    c.size
                )));
            }
        }
        Ok(())
    }

    fn raw_side(&self, size: usize) -> Result<usize> {
        self.array_sides
            .iter()
            .copied()
            .find(|s| s * s == size)
            .ok_or_else(|| config_err(format!("no array with {size} taxels for the raw condition")))
    }
}

/// Perturbation indices of each split, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub development: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Checks that the three sets are disjoint and cover `0..count`.
    pub fn verify(&self, count: usize) -> Result<()> {
        let mut seen = vec![false; count];
        for &p in self
            .development
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
        {
            if p >= count || std::mem::replace(&mut seen[p], true) {
                return Err(config_err(format!(
                    "perturbation {p} repeated or out of range"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(config_err("splits do not cover every perturbation"));
        }
        Ok(())
    }
}

/// Splits perturbation indices `0..count` into development, validation and test
/// sets of sizes `round(f·count)`, the test set taking the remainder.
pub fn make_splits(count: usize, fractions: [f64; 2], seed: u64) -> Result<Splits> {
    check_fractions(fractions)?;
    if count < 3 {
        return Err(config_err(format!(
            "need at least 3 perturbations, got {count}"
        )));
    }
    let nd = (fractions[0] * count as f64).round() as usize;
    let nv = (fractions[1] * count as f64).round() as usize;
    if nd == 0 || nv == 0 || nd + nv >= count {
        return Err(config_err(format!(
            "fractions {fractions:?} of {count} perturbations leave an empty split ({nd}/{nv}/{})",
            count.saturating_sub(nd + nv)
        )));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut crate::seed::rng(seed));
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let splits = Splits {
        development: sorted(&idx[..nd]),
        validation: sorted(&idx[nd..nd + nv]),
        test: sorted(&idx[nd + nv..]),
    };
    splits.verify(count)?;
    Ok(splits)
}

/// Observations of one condition, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub set: LabeledSet,
    pub perturbations: Vec<usize>,
    /// Fraction of taxels touched by the measurement, for compressed features.
    pub taxel_coverage: Option<f64>,
}

impl Features {
    fn indices(&self, perts: &[usize]) -> Vec<usize> {
        let wanted: BTreeSet<usize> = perts.iter().copied().collect();
        (0..self.perturbations.len())
            .filter(|&i| wanted.contains(&self.perturbations[i]))
            .collect()
    }
}

/// Generated objects and one dataset per array side.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub models: Vec<SphereModel>,
    /// `(side, frames)` in the order of `config.array_sides`.
    pub datasets: Vec<(usize, Vec<TactileFrame>)>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let models = config
            .objects
            .iter()
            .map(|o| {
                o.build().map_err(|e| match e {
                    Error::Io { .. } | Error::Format { .. } => e,
                    other => config_err(format!("object {}: {other}", o.name())),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let datasets = config
            .array_sides
            .iter()
            .map(|&side| {
                let array = config.array(side)?;
                let frames = generate_dataset(
                    &array,
                    &models,
                    &config.perturbations,
                    config.press_depth,
                    config.noise_sigma,
                    derive_seed(config.dataset_seed, &[side as u64]),
                )?;
                info!("simulated {} frames on a {side}x{side} array", frames.len());
                Ok((side, frames))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Experiment {
            config,
            models,
            datasets,
        })
    }

    pub fn frames(&self, side: usize) -> Result<&[TactileFrame]> {
        self.datasets
            .iter()
            .find(|(s, _)| *s == side)
            .map(|(_, f)| f.as_slice())
            .ok_or_else(|| config_err(format!("no {side}x{side} array in the family")))
    }

    pub fn finest(&self) -> Result<&[TactileFrame]> {
        self.frames(self.config.finest_side())
    }

    pub fn features(&self, spec: ConditionSpec) -> Result<Features> {
        let (frames, vectors, coverage) = match spec.condition {
            Condition::Raw => {
                let frames = self.frames(self.config.raw_side(spec.size)?)?;
                (
                    frames,
                    frames.iter().map(|f| f.values.clone()).collect(),
                    None,
                )
            }
            Condition::Compressed => {
                let frames = self.finest()?;
                let n = self.config.finest_side().pow(2);
                let matrix = SbheMatrix::build(
                    n,
                    spec.size,
                    self.config.sbhe.block_size,
                    self.config.sbhe.matrix_seed,
                )?;
                let vectors = frames
                    .iter()
                    .map(|f| matrix.apply(&f.values))
                    .collect::<Result<Vec<_>>>()?;
                let coverage = matrix.taxel_coverage();
                if spec.size < 128 {
                    info!(
                        "m = {}: measurements touch {:.1}% of taxels",
                        spec.size,
                        100.0 * coverage
                    );
                }
                (frames, vectors, Some(coverage))
            }
        };
        Ok(Features {
            set: LabeledSet::new(vectors, frames.iter().map(|f| f.label).collect())?,
            perturbations: frames.iter().map(|f| f.perturbation).collect(),
            taxel_coverage: coverage,
        })
    }
}

/// Outcome of training and testing on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub accuracy: f64,
    pub hinge_loss: f64,
    pub confusion: ConfusionMatrix,
}

/// Trains a DAGSVM on the development/validation perturbations and tests on `splits.test`.
pub fn run_cell(
    features: &Features,
    splits: &Splits,
    c_grid: &[f64],
    seed: u64,
    tol: f64,
) -> Result<CellResult> {
    let split = TrainSplit {
        development: features.indices(&splits.development),
        validation: features.indices(&splits.validation),
    };
    let model = train_dag(&features.set, c_grid, &split, seed, tol)?;
    let test = features.set.subset(&features.indices(&splits.test));
    let eval = evaluate(&model, &test)?;
    Ok(CellResult {
        accuracy: eval.accuracy,
        hinge_loss: mean_pairwise_hinge_loss(&model, &test)?,
        confusion: eval.confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    SignalSize,
    TrainingSize,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::SignalSize => "signal_size",
            SweepKind::TrainingSize => "training_size",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

impl AxisStats {
    pub fn of(values: &[f64]) -> AxisStats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        AxisStats {
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt(),
        }
    }
}

/// Per-seed accuracies along one axis for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub sweep: SweepKind,
    pub condition: Condition,
    /// Signal size for training-size sweeps; `None` when the axis is the size.
    pub signal_size: Option<usize>,
    /// Signal sizes, or development+validation fractions.
    pub axis: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `accuracies[axis][seed]`, percent.
    pub accuracies: Vec<Vec<f64>>,
    pub hinge_losses: Vec<Vec<f64>>,
    /// Mean row-percentage confusion over seeds, per axis point.
    pub confusion: Vec<Vec<Vec<f64>>>,
    pub taxel_coverage: Vec<Option<f64>>,
}

impl SweepResult {
    pub fn stats(&self, axis_index: usize) -> AxisStats {
        AxisStats::of(&self.accuracies[axis_index])
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.axis.len()).map(|i| self.stats(i).mean).collect()
    }

    pub fn tag(&self) -> String {
        match self.signal_size {
            Some(s) => format!("{}_{s}", self.condition.as_str()),
            None => self.condition.as_str().to_string(),
        }
    }

    fn point_tag(&self, i: usize) -> String {
        match self.sweep {
            SweepKind::SignalSize => format!("{}_{}", self.condition.as_str(), self.axis[i]),
            SweepKind::TrainingSize => format!("training_{}_{}", self.tag(), self.axis[i]),
        }
    }
}

struct AxisPoint {
    features: Features,
    fractions: [f64; 2],
}

fn run_sweep(
    exp: &Experiment,
    sweep: SweepKind,
    condition: Condition,
    signal_size: Option<usize>,
    axis: Vec<f64>,
    points: Vec<AxisPoint>,
) -> Result<SweepResult> {
    let cfg = &exp.config;
    let p = cfg.perturbations.len();
    let cells: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|a| (0..cfg.split_seeds.len()).map(move |s| (a, s)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(a, s)| {
            let seed = cfg.split_seeds[s];
            let splits = make_splits(p, points[a].fractions, seed)?;
            run_cell(&points[a].features, &splits, &cfg.c_grid, seed, cfg.svm_tol)
        })
        .collect::<Result<Vec<_>>>()?;

    let k = cfg.split_seeds.len();
    let per_axis: Vec<&[CellResult]> = results.chunks(k).collect();
    let confusion = per_axis
        .iter()
        .map(|cells| {
            let cms: Vec<ConfusionMatrix> = cells.iter().map(|c| c.confusion.clone()).collect();
            ConfusionMatrix::mean_percentages(&cms).unwrap_or_default()
        })
        .collect();
    Ok(SweepResult {
        sweep,
        condition,
        signal_size,
        axis,
        seeds: cfg.split_seeds.clone(),
        accuracies: per_axis
            .iter()
            .map(|c| c.iter().map(|r| r.accuracy).collect())
            .collect(),
        hinge_losses: per_axis
            .iter()
            .map(|c| c.iter().map(|r| r.hinge_loss).collect())
            .collect(),
        confusion,
        taxel_coverage: points.iter().map(|p| p.features.taxel_coverage).collect(),
    })
}

/// Accuracy against signal size for raw arrays and SBHE measurements of the finest array.
pub fn run_signal_size_sweep(exp: &Experiment) -> Result<(SweepResult, SweepResult)> {
    let cfg = &exp.config;
    let sizes = cfg.sbhe.m_list.clone();
    if sizes.is_empty() {
        return Err(config_err("m list is empty"));
    }
    for &s in &sizes {
        cfg.raw_side(s)?;
    }
    let axis: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let mut out = Vec::new();
    for condition in [Condition::Raw, Condition::Compressed] {
        let points = sizes
            .iter()
            .map(|&size| {
                Ok(AxisPoint {
                    features: exp.features(ConditionSpec { condition, size })?,
                    fractions: cfg.split_fractions,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(run_sweep(
            exp,
            SweepKind::SignalSize,
            condition,
            None,
            axis.clone(),
            points,
        )?);
    }
    let compressed = out.pop().unwrap();
    Ok((out.pop().unwrap(), compressed))
}

/// Accuracy against the development+validation share, one result per configured condition.
pub fn run_training_size_sweep(exp: &Experiment) -> Result<Vec<SweepResult>> {
    let cfg = &exp.config;
    if cfg.training_fractions.is_empty() || cfg.training_conditions.is_empty() {
        return Err(config_err("training sweep needs fractions and conditions"));
    }
    // rounded so the axis reads 0.6 rather than 0.6000000000000001
    let axis: Vec<f64> = cfg
        .training_fractions
        .iter()
        .map(|f| ((f[0] + f[1]) * 1e9).round() / 1e9)
        .collect();
    cfg.training_conditions
        .iter()
        .map(|&spec| {
            let features = exp.features(spec)?;
            let points = cfg
                .training_fractions
                .iter()
                .map(|&fractions| AxisPoint {
                    features: features.clone(),
                    fractions,
                })
                .collect();
            run_sweep(
                exp,
                SweepKind::TrainingSize,
                spec.condition,
                Some(spec.size),
                axis.clone(),
                points,
            )
        })
        .collect()
}

/// Mean frame of one object on the finest array: `(name, rows, cols, values)`.
pub type MeanFrame = (String, usize, usize, Vec<f64>);

/// Everything [`emit_report`] writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub objects: Vec<String>,
    pub sweeps: Vec<SweepResult>,
    pub mean_frames: Vec<MeanFrame>,
}

pub fn mean_frames(exp: &Experiment) -> Result<Vec<MeanFrame>> {
    let frames = exp.finest()?;
    Ok(exp
        .models
        .iter()
        .enumerate()
        .map(|(label, model)| {
            let mine: Vec<&TactileFrame> = frames.iter().filter(|f| f.label == label).collect();
            let array = mine[0].array;
            let mut mean = vec![0.0; array.len()];
            for f in &mine {
                for (m, v) in mean.iter_mut().zip(&f.values) {
                    *m += v / mine.len() as f64;
                }
            }
            (model.name().to_string(), array.rows, array.cols, mean)
        })
        .collect())
}

fn sweep_csv(sweeps: &[&SweepResult]) -> String {
    let mut s = String::from("sweep,condition,signal_size,axis_value,seed,accuracy,hinge_loss\n");
    for r in sweeps {
        for (a, &x) in r.axis.iter().enumerate() {
            for (k, &seed) in r.seeds.iter().enumerate() {
                let size = r.signal_size.map_or(x, |s| s as f64);
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.sweep.as_str(),
                    r.condition.as_str(),
                    size,
                    x,
                    seed,
                    r.accuracies[a][k],
                    r.hinge_losses[a][k]
                )
                .unwrap();
            }
        }
    }
    s
}

fn confusion_csv(objects: &[String], rows: &[Vec<f64>]) -> String {
    let mut s = String::from("true\\predicted");
    for o in objects {
        s.push(',');
        s.push_str(o);
    }
    s.push('\n');
    for (name, row) in objects.iter().zip(rows) {
        s.push_str(name);
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct SummaryPoint {
    axis_value: f64,
    #[serde(flatten)]
    stats: AxisStats,
    mean_hinge_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    taxel_coverage: Option<f64>,
}

#[derive(Serialize)]
struct SummarySweep {
    sweep: SweepKind,
    condition: Condition,
    #[serde(skip_serializing_if = "Option::is_none")]
    signal_size: Option<usize>,
    seeds: Vec<u64>,
    points: Vec<SummaryPoint>,
}

#[derive(Serialize)]
struct Summary<'a> {
    objects: &'a [String],
    sweeps: Vec<SummarySweep>,
}

/// Writes `results/*.csv`, `results/summary.json`, `results/confusion_<cond>.csv`
/// and `frames/<object>.pgm` under `out_dir`. Nothing is written if the report is invalid.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.sweeps.is_empty() {
        return Err(Error::InvalidInput("no sweep results to report".into()));
    }
    for r in &report.sweeps {
        let m = report.objects.len();
        let ok = !r.axis.is_empty()
            && !r.seeds.is_empty()
            && r.accuracies.len() == r.axis.len()
            && r.accuracies
                .iter()
                .all(|a| a.len() == r.seeds.len() && a.iter().all(|v| (0.0..=100.0).contains(v)))
            && r.hinge_losses.len() == r.axis.len()
            && r.confusion.len() == r.axis.len()
            && r.confusion
                .iter()
                .all(|c| c.len() == m && c.iter().all(|row| row.len() == m));
        if !ok {
            return Err(Error::InvalidInput(format!(
                "malformed {} sweep for {}",
                r.sweep.as_str(),
                r.tag()
            )));
        }
    }

    let results = out_dir.join("results");
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for kind in [SweepKind::SignalSize, SweepKind::TrainingSize] {
        let these: Vec<&SweepResult> = report.sweeps.iter().filter(|r| r.sweep == kind).collect();
        if !these.is_empty() {
            files.push((
                results.join(format!("{}.csv", kind.as_str())),
                sweep_csv(&these).into_bytes(),
            ));
        }
    }
    for r in &report.sweeps {
        for i in 0..r.axis.len() {
            files.push((
                results.join(format!("confusion_{}.csv", r.point_tag(i))),
                confusion_csv(&report.objects, &r.confusion[i]).into_bytes(),
            ));
        }
    }
    let summary = Summary {
        objects: &report.objects,
        sweeps: report
            .sweeps
            .iter()
            .map(|r| SummarySweep {
                sweep: r.sweep,
                condition: r.condition,
                signal_size: r.signal_size,
                seeds: r.seeds.clone(),
                points: (0..r.axis.len())
                    .map(|i| SummaryPoint {
                        axis_value: r.axis[i],
                        stats: r.stats(i),
                        mean_hinge_loss: AxisStats::of(&r.hinge_losses[i]).mean,
                        taxel_coverage: r.taxel_coverage.get(i).copied().flatten(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    files.push((results.join("summary.json"), json.into_bytes()));
    for (name, rows, cols, values) in &report.mean_frames {
        files.push((
            out_dir.join("frames").join(format!("{name}.pgm")),
            io::encode_pgm(*rows, *cols, values, crate::simulator::SENSOR_MAX_N)?,
        ));
    }

    for (path, bytes) in &files {
        io::write_bytes(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Only {
    SignalSize,
    TrainingSize,
}

/// Prepares data, runs the requested sweeps and writes the report to `config.output_dir`.
pub fn run_experiment(config: ExperimentConfig, only: Option<Only>) -> Result<Report> {
    let out = config.output_dir.clone();
    let exp = Experiment::prepare(config)?;
    let mut sweeps = Vec::new();
    if only != Some(Only::TrainingSize) {
        let (raw, compressed) = run_signal_size_sweep(&exp)?;
        sweeps.push(raw);
        sweeps.push(compressed);
    }
    if only != Some(Only::SignalSize) {
        sweeps.extend(run_training_size_sweep(&exp)?);
    }
    let report = Report {
        objects: exp.models.iter().map(|m| m.name().to_string()).collect(),
        sweeps,
        mean_frames: mean_frames(&exp)?,
    };
    emit_report(&report, &out)?;
    Ok(report)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;

use tactile_core::compression::{CompressedSignal, SbheMatrix, DEFAULT_BLOCK_SIZE};
use tactile_core::harness::{make_splits, run_experiment, Experiment, ExperimentConfig, Only};
use tactile_core::io::{self, DatasetKind, DatasetManifest, FrameRecord};
use tactile_core::learn::{
    evaluate, train_dag, DagSvmModel, LabeledSet, SplitRecord, TrainSplit, DEFAULT_C_GRID,
    DEFAULT_TOL,
};
use tactile_core::recovery::{reconstruct, WaveletBasis};
use tactile_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tactile",
    version,
    about = "Compressed sensing and learning for simulated tactile arrays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    SignalSize,
    TrainingSize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a noisy dataset on one array of the configured family.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Array side to simulate; defaults to the finest array.
        #[arg(long)]
        side: Option<usize>,
    },
    /// Compress a raw dataset with an SBHE matrix.
    Compress {
        #[arg(long)]
        matrix_seed: u64,
        #[arg(long)]
        m: usize,
        #[arg(long = "b", default_value_t = DEFAULT_BLOCK_SIZE)]
        block_size: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover full frames from a compressed dataset.
    Reconstruct {
        #[arg(long)]
        matrix_seed: u64,
        #[arg(long)]
        m: usize,
        /// Sparsity budget.
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a DAGSVM on the development and validation perturbations of a dataset.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_C_GRID.to_vec())]
        c_grid: Vec<f64>,
        #[arg(long)]
        split_seed: u64,
        #[arg(long, default_value_t = 0.4)]
        development: f64,
        #[arg(long, default_value_t = 0.2)]
        validation: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on the test perturbations recorded in its metadata.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Run the configured sweeps and write results under the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        only: Option<SweepArg>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out, side } => simulate(&config, &out, side),
        Command::Compress {
            matrix_seed,
            m,
            block_size,
            input,
            out,
        } => compress(matrix_seed, m, block_size, &input, &out),
        Command::Reconstruct {
            matrix_seed,
            m,
            k,
            tol,
            input,
            out,
        } => reconstruct_dir(matrix_seed, m, k, tol, &input, &out),
        Command::Train {
            input,
            c_grid,
            split_seed,
            development,
            validation,
            tol,
            out,
        } => train(
            &input,
            &c_grid,
            split_seed,
            [development, validation],
            tol,
            &out,
        ),
        Command::Eval {
            model,
            input,
            report,
            confusion,
        } => eval(&model, &input, &report, confusion.as_deref()),
        Command::Run { config, only } => {
            let only = only.map(|o| match o {
                SweepArg::SignalSize => Only::SignalSize,
                SweepArg::TrainingSize => Only::TrainingSize,
            });
            let report = run_experiment(ExperimentConfig::from_file(&config)?, only)?;
            for r in &report.sweeps {
                for (i, x) in r.axis.iter().enumerate() {
                    let s = r.stats(i);
                    println!(
                        "{:<14} {:<16} {:>8} mean {:6.2}%  min {:6.2}  max {:6.2}",
                        r.sweep.as_str(),
                        r.tag(),
                        x,
                        s.mean,
                        s.min,
                        s.max
                    );
                }
            }
            Ok(())
        }
    }
}

fn simulate(config: &Path, out: &Path, side: Option<usize>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    let side = side.unwrap_or_else(|| cfg.finest_side());
    if !cfg.array_sides.contains(&side) {
        return Err(Error::Configuration(format!(
            "array side {side} is not in the configured family"
        )));
    }
    cfg.array_sides = vec![side];
    let seed = cfg.dataset_seed;
    let exp = Experiment::prepare(cfg)?;
    let frames = exp.finest()?;
    let manifest = DatasetManifest {
        kind: DatasetKind::Raw,
        format: "TXL1".into(),
        array: frames[0].array,
        objects: exp.models.iter().map(|m| m.name().to_string()).collect(),
        perturbation_count: exp.config.perturbations.len(),
        perturbations: Some(exp.config.perturbations.clone()),
        noise_sigma: exp.config.noise_sigma,
        seed,
        matrix: None,
        data_file: None,
        records: frames
            .iter()
            .enumerate()
            .map(|(i, f)| FrameRecord {
                file: Some(io::frame_file_name(i)),
                label: f.label,
                perturbation: f.perturbation,
                seed: f.touch.seed,
            })
            .collect(),
    };
    let vectors: Vec<Vec<f64>> = frames.iter().map(|f| f.values.clone()).collect();
    io::write_raw_dataset(out, &manifest, &vectors)?;
    info!("wrote {} frames to {}", vectors.len(), out.display());
    Ok(())
}

fn compress(seed: u64, m: usize, block_size: usize, input: &Path, out: &Path) -> Result<()> {
    let data = io::read_dataset(input)?;
    if data.manifest.kind != DatasetKind::Raw {
        return Err(Error::InvalidInput(format!(
            "{} is not a raw dataset",
            input.display()
        )));
    }
    let matrix = SbheMatrix::build(data.manifest.array.len(), m, block_size, seed)?;
    let vectors = data
        .vectors
        .par_iter()
        .map(|v| matrix.apply(v))
        .collect::<Result<Vec<_>>>()?;
    let coverage = matrix.taxel_coverage();
    if coverage < 1.0 {
        warn!(
            "m = {m} measurements touch only {:.1}% of taxels",
            100.0 * coverage
        );
    }
    let manifest = DatasetManifest {
        kind: DatasetKind::Compressed,
        format: "CSM1".into(),
        matrix: Some(matrix.header()),
        data_file: Some(io::MEASUREMENTS_FILE.into()),
        records: data
            .manifest
            .records
            .iter()
            .map(|r| FrameRecord {
                file: None,
                ..r.clone()
            })
            .collect(),
        ..data.manifest
    };
    io::write_compressed_dataset(out, &manifest, &vectors)?;
    info!(
        "compressed {} frames to m = {m} (factor {:.1})",
        vectors.len(),
        matrix.compression_factor()
    );
    Ok(())
}

fn reconstruct_dir(
    seed: u64,
    m: usize,
    k: usize,
    tol: f64,
    input: &Path,
    out: &Path,
) -> Result<()> {
    let data = io::read_dataset(input)?;
    let header = match (data.manifest.kind, data.manifest.matrix) {
        (DatasetKind::Compressed, Some(h)) => h,
        _ => {
            return Err(Error::InvalidInput(format!(
                "{} is not a compressed dataset",
                input.display()
            )))
        }
    };
    let array = data.manifest.array;
    let matrix = SbheMatrix::build(header.n, m, header.block_size, seed)?;
    let basis = WaveletBasis::for_len(header.n)?;
    let frames = data
        .vectors
        .par_iter()
        .zip(&data.manifest.records)
        .map(|(y, rec)| {
            let signal = CompressedSignal {
                values: y.clone(),
                matrix_seed: header.seed,
                m: header.m,
                n: header.n,
                block_size: header.block_size,
                label: rec.label,
            };
            let r = reconstruct(&signal, &matrix, &basis, k, tol)?;
            if !r.omp.converged {
                warn!(
                    "frame {} did not reach the residual tolerance",
                    rec.perturbation
                );
            }
            Ok(r.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<FrameRecord> = data
        .manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| FrameRecord {
            file: Some(io::frame_file_name(i)),
            ..r.clone()
        })
        .collect();
    for (i, v) in frames.iter().enumerate() {
        io::write_pgm(
            &out.join(format!("frames/{i:05}.pgm")),
            array.rows,
            array.cols,
            v,
        )?;
    }
    let manifest = DatasetManifest {
        kind: DatasetKind::Raw,
        format: "TXL1".into(),
        matrix: None,
        data_file: None,
        records,
        ..data.manifest
    };
    io::write_raw_dataset(out, &manifest, &frames)
}

fn labeled(data: &io::Dataset) -> Result<LabeledSet> {
    LabeledSet::new(
        data.vectors.clone(),
        data.manifest.records.iter().map(|r| r.label).collect(),
    )
}

fn indices(data: &io::Dataset, perts: &[usize]) -> Vec<usize> {
    data.manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| perts.binary_search(&r.perturbation).is_ok())
        .map(|(i, _)| i)
        .collect()
}

fn train(
    input: &Path,
    c_grid: &[f64],
    seed: u64,
    fractions: [f64; 2],
    tol: f64,
    out: &Path,
) -> Result<()> {
    let data = io::read_dataset(input)?;
    let count = data.manifest.perturbation_count;
    let splits = make_splits(count, fractions, seed)?;
    let split = TrainSplit {
        development: indices(&data, &splits.development),
        validation: indices(&data, &splits.validation),
    };
    let mut model = train_dag(&labeled(&data)?, c_grid, &split, seed, tol)?;
    model.metadata.split = Some(SplitRecord {
        perturbation_count: count,
        fractions,
        seed,
    });
    io::write_json(out, &model)?;
    info!("trained {} pairwise models", model.pairwise.len());
    Ok(())
}

fn eval(model_path: &Path, input: &Path, report: &Path, confusion: Option<&Path>) -> Result<()> {
    let model: DagSvmModel = io::read_json(model_path)?;
    let data = io::read_dataset(input)?;
    let rec = model.metadata.split.clone().ok_or_else(|| {
        Error::InvalidInput("model has no split metadata; train it with `tactile train`".into())
    })?;
    if rec.perturbation_count != data.manifest.perturbation_count {
        return Err(Error::Dimension(format!(
            "model was trained on {} perturbations, dataset has {}",
            rec.perturbation_count, data.manifest.perturbation_count
        )));
    }
    let splits = make_splits(rec.perturbation_count, rec.fractions, rec.seed)?;
    let test = labeled(&data)?.subset(&indices(&data, &splits.test));
    let evaluation = evaluate(&model, &test)?;
    io::write_json(report, &evaluation)?;
    if let Some(path) = confusion {
        let names = &data.manifest.objects;
        let name = |c: usize| names.get(c).cloned().unwrap_or_else(|| c.to_string());
        let mut csv = String::from("true\\predicted");
        for &c in &evaluation.confusion.classes {
            csv.push(',');
            csv.push_str(&name(c));
        }
        csv.push('\n');
        for (c, row) in evaluation
            .confusion
            .classes
            .iter()
            .zip(&evaluation.confusion.percentages)
        {
            csv.push_str(&name(*c));
            for v in row {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        std::fs::write(path, csv).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    println!(
        "accuracy {:.2}% on {} test observations",
        evaluation.accuracy,
        test.len()
    );
    Ok(())
}

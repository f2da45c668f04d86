//! Implementations behind the subcommands: run the experiment, write the
//! artifacts, map errors onto the exit-code contract.
//!
//! Invalid configuration (bad flag values the parser cannot catch, malformed
//! ORTHOREG_SEED) is a usage error (exit 2); anything that goes wrong while
//! running — unreadable files, corrupt data — is a runtime error (exit 1).

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use orthoreg::anglestats;
use orthoreg::data::{self, Dataset};
use orthoreg::experiments::{self, Direction, RunRecord, ToyConfig};
use orthoreg::fdcheck::{central_diff_grad, max_relative_error};
use orthoreg::linalg::Matrix;
use orthoreg::nn::TrainConfig;
use orthoreg::reg::{self, RegConfig, RegMode};

use crate::{
    AnalyzeArgs, BoundCompareArgs, DirectionArg, GradcheckArgs, MnistArgs, ModeArg,
    ModeCompareArgs, Toy2dArgs,
};

pub enum CmdError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CmdError {
    fn from(err: E) -> Self {
        CmdError::Runtime(err.into())
    }
}

/// Library configuration rejections signal a bad flag value, which the
/// exit-code contract files under usage errors.
fn usage_if_config(err: orthoreg::Error) -> CmdError {
    match err {
        orthoreg::Error::InvalidConfig(msg) => CmdError::Usage(msg),
        other => CmdError::Runtime(other.into()),
    }
}

type CmdResult = Result<ExitCode, CmdError>;

fn resolve_seed(flag: Option<u64>) -> Result<u64, CmdError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("ORTHOREG_SEED") {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            CmdError::Usage(format!(
                "ORTHOREG_SEED must be an unsigned integer, got {raw:?}"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CmdError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CmdError> {
    let mut text = serde_json::to_string_pretty(value).context("serializing summary")?;
    text.push('\n');
    write_artifact(dir, name, &text)
}

impl From<ModeArg> for RegMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Global => RegMode::Global,
            ModeArg::Local => RegMode::Local,
        }
    }
}

// ---------------------------------------------------------------- toy2d --

pub fn toy2d(args: Toy2dArgs) -> CmdResult {
    let cfg = ToyConfig {
        n_vectors: args.n,
        dims: 2,
        steps: args.steps,
        step_size: args.step_size,
        mode: args.mode.into(),
        direction: match args.direction {
            DirectionArg::Descent => Direction::Descent,
            DirectionArg::Ascent => Direction::Ascent,
        },
        lambda: args.lambda,
        seed: resolve_seed(args.seed)?,
    };
    let records = experiments::run_toy(&cfg).map_err(usage_if_config)?;

    let mut csv = String::from("step,mean_nn_angle_deg,min_angle_deg,loss\n");
    for r in &records {
        let stats = &r.angle_stats[0];
        writeln!(
            csv,
            "{},{},{},{}",
            r.step_or_epoch, stats.mean_nn_angle, stats.min_pairwise_angle, r.reg_loss
        )
        .unwrap();
    }
    let path = write_artifact(&args.output_dir, "toy2d.csv", &csv)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

// -------------------------------------------------------- bound-compare --

#[derive(Serialize)]
struct BoundArmReport {
    seed: u64,
    initial_min_angle_deg: f64,
    global_final_min_angle_deg: f64,
    local_final_min_angle_deg: f64,
}

#[derive(Serialize)]
struct BoundReport {
    n: usize,
    d: usize,
    steps: usize,
    step_size: f64,
    degenerate_regime: bool,
    arms: Vec<BoundArmReport>,
    global_median_final_min_deg: f64,
    local_median_final_min_deg: f64,
    median_gap_deg: f64,
}

pub fn bound_compare(args: BoundCompareArgs) -> CmdResult {
    let base = resolve_seed(args.seed)?;
    let seeds: Vec<u64> = (0..args.seeds).map(|i| base + i).collect();
    let summary =
        experiments::run_bound_comparison(args.n, args.d, args.steps, args.step_size, &seeds)
            .map_err(usage_if_config)?;
    if summary.degenerate_regime {
        eprintln!(
            "warning: n = {} <= d = {} — full orthogonality is reachable and the \
             global/local comparison is uninformative",
            args.n, args.d
        );
    }
    let report = BoundReport {
        n: summary.n_vectors,
        d: summary.dims,
        steps: args.steps,
        step_size: args.step_size,
        degenerate_regime: summary.degenerate_regime,
        arms: summary
            .arms
            .iter()
            .map(|a| BoundArmReport {
                seed: a.seed,
                initial_min_angle_deg: a.initial_min_angle_deg,
                global_final_min_angle_deg: a.global_final_min_angle_deg,
                local_final_min_angle_deg: a.local_final_min_angle_deg,
            })
            .collect(),
        global_median_final_min_deg: summary.global_median_final_min_deg,
        local_median_final_min_deg: summary.local_median_final_min_deg,
        median_gap_deg: summary.median_gap_deg,
    };
    let path = write_json(&args.output_dir, "bound_compare.json", &report)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

// ----------------------------------------------------------------- mnist --

fn load_mnist(dir: &Path, upsample32: bool) -> Result<(Dataset, Dataset), CmdError> {
    let train = data::load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = data::load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )?;
    let (train, test) = if upsample32 {
        (data::upsample(&train, 32)?, data::upsample(&test, 32)?)
    } else {
        (train, test)
    };
    let (train, stats) = data::standardize(&train)?;
    let test = data::apply_standardization(&test, stats)?;
    Ok((train, test))
}

fn epoch_csv(records: &[RunRecord]) -> String {
    let n_layers = records.first().map_or(0, |r| r.angle_stats.len());
    let mut csv = String::from(
        "epoch,train_loss,reg_loss,train_err_pct,test_err_pct,overfit_gap_pct",
    );
    for l in 1..=n_layers {
        write!(csv, ",mean_nn_angle_l{l}").unwrap();
    }
    csv.push('\n');
    for r in records {
        write!(
            csv,
            "{},{},{},{},{},{}",
            r.step_or_epoch,
            r.task_loss.unwrap_or(f64::NAN),
            r.reg_loss,
            r.train_err_pct.unwrap_or(f64::NAN),
            r.test_err_pct.unwrap_or(f64::NAN),
            r.overfit_gap_pct().unwrap_or(f64::NAN),
        )
        .unwrap();
        for stats in &r.angle_stats {
            write!(csv, ",{}", stats.mean_nn_angle).unwrap();
        }
        csv.push('\n');
    }
    csv
}

fn best_test_err(records: &[RunRecord]) -> (usize, f64) {
    records
        .iter()
        .filter_map(|r| r.test_err_pct.map(|e| (r.step_or_epoch, e)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap_or((0, f64::NAN))
}

fn layer_sizes(input: usize, hidden: u64, layers: u64) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat(hidden as usize).take(layers as usize));
    sizes.push(10);
    sizes
}

#[derive(Serialize)]
struct MnistArmSummary {
    gamma: f64,
    csv: String,
    best_test_err_pct: f64,
    best_epoch: usize,
    final_test_err_pct: f64,
    final_overfit_gap_pct: f64,
}

#[derive(Serialize)]
struct MnistSummary {
    mode: String,
    lambda: f64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    hidden: u64,
    layers: u64,
    upsample32: bool,
    seed: u64,
    arms: Vec<MnistArmSummary>,
}

pub fn mnist(args: MnistArgs) -> CmdResult {
    let seed = resolve_seed(args.seed)?;
    let gammas = if args.gamma.is_empty() {
        vec![1.0]
    } else {
        args.gamma.clone()
    };
    let (train, test) = load_mnist(&args.data_dir, args.upsample32)?;
    let sizes = layer_sizes(train.images.cols(), args.hidden, args.layers);
    let base = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch as usize,
        epochs: args.epochs,
        reg: RegConfig {
            mode: args.mode.into(),
            gamma: 1.0,
            lambda: args.lambda,
            restore_magnitudes: true,
            normalize_reg_grad: false,
        },
        regularized_layers: None,
        seed,
    };
    let arms = experiments::run_mnist(&train, &test, &sizes, &base, &gammas)
        .map_err(usage_if_config)?;

    let mut summaries = Vec::with_capacity(arms.len());
    for arm in &arms {
        let name = format!("mnist_gamma{}.csv", arm.gamma);
        let path = write_artifact(&args.output_dir, &name, &epoch_csv(&arm.records))?;
        println!("wrote {}", path.display());
        let (best_epoch, best) = best_test_err(&arm.records);
        let last = arm.records.last().unwrap();
        summaries.push(MnistArmSummary {
            gamma: arm.gamma,
            csv: name,
            best_test_err_pct: best,
            best_epoch,
            final_test_err_pct: last.test_err_pct.unwrap_or(f64::NAN),
            final_overfit_gap_pct: last.overfit_gap_pct().unwrap_or(f64::NAN),
        });
    }
    let summary = MnistSummary {
        mode: format!("{:?}", RegMode::from(args.mode)).to_lowercase(),
        lambda: args.lambda,
        epochs: args.epochs,
        batch_size: args.batch as usize,
        learning_rate: args.lr,
        hidden: args.hidden,
        layers: args.layers,
        upsample32: args.upsample32,
        seed,
        arms: summaries,
    };
    let path = write_json(&args.output_dir, "mnist_summary.json", &summary)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------- mode-compare --

#[derive(Serialize)]
struct ModeArmSummary {
    arm: String,
    csv: String,
    best_test_err_pct: f64,
    final_test_err_pct: f64,
    final_overfit_gap_pct: f64,
}

#[derive(Serialize)]
struct ModeCompareSummary {
    gamma: f64,
    lambda: f64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
    arms: Vec<ModeArmSummary>,
}

pub fn mode_compare(args: ModeCompareArgs) -> CmdResult {
    let seed = resolve_seed(args.seed)?;
    let (train, test) = load_mnist(&args.data_dir, args.upsample32)?;
    let sizes = layer_sizes(train.images.cols(), args.hidden, args.layers);
    let base = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch as usize,
        epochs: args.epochs,
        reg: RegConfig {
            mode: RegMode::Local,
            gamma: args.gamma,
            lambda: args.lambda,
            restore_magnitudes: true,
            normalize_reg_grad: false,
        },
        regularized_layers: None,
        seed,
    };
    let cmp = experiments::run_mode_comparison(&train, &test, &sizes, &base)
        .map_err(usage_if_config)?;

    let mut summaries = Vec::with_capacity(3);
    for (arm, records) in [
        ("unregularized", &cmp.unregularized),
        ("global", &cmp.global),
        ("local", &cmp.local),
    ] {
        let name = format!("mode_{arm}.csv");
        let path = write_artifact(&args.output_dir, &name, &epoch_csv(records))?;
        println!("wrote {}", path.display());
        let (_, best) = best_test_err(records);
        let last = records.last().unwrap();
        summaries.push(ModeArmSummary {
            arm: arm.to_string(),
            csv: name,
            best_test_err_pct: best,
            final_test_err_pct: last.test_err_pct.unwrap_or(f64::NAN),
            final_overfit_gap_pct: last.overfit_gap_pct().unwrap_or(f64::NAN),
        });
    }
    let summary = ModeCompareSummary {
        gamma: args.gamma,
        lambda: args.lambda,
        epochs: args.epochs,
        batch_size: args.batch as usize,
        learning_rate: args.lr,
        seed,
        arms: summaries,
    };
    let path = write_json(&args.output_dir, "mode_compare_summary.json", &summary)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

// --------------------------------------------------------------- analyze --

#[derive(Serialize)]
struct AnalyzeReport {
    n: usize,
    d: usize,
    min_pairwise_angle_deg: f64,
    mean_nn_angle_deg: f64,
    histogram: Vec<u64>,
}

pub fn analyze(args: AnalyzeArgs) -> CmdResult {
    let matrix = data::read_weight_file(&args.weights)?;
    let stats = anglestats::summarize(&matrix, args.bins as usize)?;
    let report = AnalyzeReport {
        n: matrix.rows(),
        d: matrix.cols(),
        min_pairwise_angle_deg: stats.min_pairwise_angle,
        mean_nn_angle_deg: stats.mean_nn_angle,
        histogram: stats.histogram,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).context("serializing report")?
    );
    Ok(ExitCode::SUCCESS)
}

// ------------------------------------------------------------- gradcheck --

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    loop {
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let m = Matrix::from_vec(n, d, data).unwrap();
        if (0..n).all(|i| m.row_norm(i) > 0.5) {
            return m;
        }
    }
}

pub fn gradcheck(args: GradcheckArgs) -> CmdResult {
    if !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(CmdError::Usage(format!(
            "--tol must be finite and >= 0, got {}",
            args.tol
        )));
    }
    let seed = resolve_seed(args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-6;
    let mut worst_global: f64 = 0.0;
    let mut worst_local: f64 = 0.0;
    for trial in 0..args.trials as usize {
        let n = 2 + trial % 7;
        let d = 2 + (trial * 5) % 15;
        let theta = random_matrix(&mut rng, n, d);

        let analytic = reg::global_grad_exact(&theta)?.grad;
        let numeric = central_diff_grad(|m| reg::global_loss(m), &theta, step)?;
        worst_global = worst_global.max(max_relative_error(&analytic, &numeric));

        let (unit, _) = theta.normalize_rows()?;
        let lambda = [1.0, 5.0, 10.0][trial % 3];
        let analytic = reg::local_grad(&unit, lambda)?.grad;
        let numeric = central_diff_grad(|m| reg::local_loss(m, lambda), &unit, step)?;
        worst_local = worst_local.max(max_relative_error(&analytic, &numeric));
    }
    println!(
        "global_grad_exact vs central differences: max relative error {worst_global:.3e} over {} trials",
        args.trials
    );
    println!(
        "local_grad vs central differences: max relative error {worst_local:.3e} over {} trials",
        args.trials
    );
    let worst = worst_global.max(worst_local);
    if worst <= args.tol {
        println!("within tolerance {:e}", args.tol);
        Ok(ExitCode::SUCCESS)
    } else {
        println!(
            "tolerance {:e} exceeded: worst relative error {worst:.3e}",
            args.tol
        );
        Ok(ExitCode::from(1))
    }
}

//! Experiment runners. Independent cells run on the rayon pool; results are
//! collected in cell order so the CSVs do not depend on scheduling.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tropmorph::container::{peek_kind, Kind};
use tropmorph::data::{load_idx, stratified_subset, subset_by_classes, Dataset};
use tropmorph::dep::{
    bagging_fit, one_vs_rest_problem, BaggedDep, BaggingConfig, BinaryScorer, CcpConfig, GreedyConfig, OvoEnsemble,
    OvrEnsemble,
};
use tropmorph::monotone::{linspace, run_monotone_cell, target_curve, Method, MonotoneExperiment, MonotoneTrainConfig};
use tropmorph::morphonet::{MorphNetwork, OptimizerKind, TrainConfig};
use tropmorph::pruning::prune;

use crate::config::{ExperimentConfig, ExperimentKind, ModelConfig, Reduction};
use crate::error::{CliError, Result};
use crate::output::{svg_chart, weight_grid, write_csv, Manifest, Series};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub manifest: String,
    pub model: String,
    pub optimizer: String,
    pub seed: u64,
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseRow {
    pub manifest: String,
    pub dataset: String,
    pub model: String,
    pub optimizer: String,
    pub seed: u64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneCsvRow {
    pub manifest: String,
    pub model: String,
    pub optimizer: String,
    pub dataset: String,
    pub seed: u64,
    pub p: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepRow {
    pub manifest: String,
    pub dataset: String,
    pub reduction: String,
    pub members: usize,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneRow {
    pub manifest: String,
    pub method: String,
    pub sigma: f64,
    pub seed: u64,
    pub rmse: f64,
}

/// What a run produced, for callers that want more than the files.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub dense: Vec<DenseRow>,
    pub prune: Vec<PruneCsvRow>,
    pub dep: Vec<DepRow>,
    pub monotone: Vec<MonotoneRow>,
    /// Monotonicity verdict of every trained monotone network.
    pub monotone_certified: Vec<bool>,
}

/// Runs `f` on a pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Executes the experiment declared by `cfg`, writing into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let manifest = Manifest::for_config(cfg);
    manifest.write(out)?;
    let mut result = match cfg.kind {
        ExperimentKind::Monotone => run_monotone(cfg, &manifest, out)?,
        ExperimentKind::DepMulticlass => run_dep(cfg, &manifest, out)?,
        ExperimentKind::DenseTrain => run_dense(cfg, &manifest, out, false)?,
        ExperimentKind::PruneSweep => run_dense(cfg, &manifest, out, true)?,
    };
    result.files.insert(0, out.join("manifest.json"));
    Ok(result)
}

/// Loads the train and test sets, reduced to the configured subsets.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let d = &cfg.data;
    let paths = d.paths();
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(CliError::MissingData(format!(
            "{} not found (set [data] root or {})",
            missing.display(),
            crate::config::DATA_ROOT_ENV
        )));
    }
    let mut train = load_idx(&paths[0], &paths[1])?;
    let mut test = load_idx(&paths[2], &paths[3])?;
    if let Some(n) = d.train_size {
        train = stratified_subset(&train, n, d.subset_seed)?;
    }
    if let Some(n) = d.test_size {
        test = stratified_subset(&test, n, d.subset_seed)?;
    }
    train.set_name(d.name.clone());
    test.set_name(d.name.clone());
    Ok((train, test))
}

fn train_config(cfg: &ExperimentConfig, opt: OptimizerKind, seed: u64) -> TrainConfig {
    let mut t = match opt {
        OptimizerKind::Adam => TrainConfig::adam(cfg.dense.epochs, seed),
        OptimizerKind::Sgd => TrainConfig::sgd(cfg.dense.epochs, seed),
    };
    if let Some(b) = cfg.dense.batch_size {
        t.batch_size = b;
    }
    if let Some(lr) = cfg.dense.learning_rate {
        t.learning_rate = lr;
    }
    t
}

struct DenseCell<'a> {
    model: &'a ModelConfig,
    optimizer: OptimizerKind,
    seed: u64,
}

fn run_dense(cfg: &ExperimentConfig, manifest: &Manifest, out: &Path, sweep: bool) -> Result<RunOutput> {
    let (train, test) = load_data(cfg)?;
    let mut cells = Vec::new();
    for model in &cfg.dense.models {
        for &optimizer in &cfg.dense.optimizers {
            for &seed in &cfg.seeds {
                cells.push(DenseCell { model, optimizer, seed });
            }
        }
    }
    let trained: Vec<(MorphNetwork, Vec<EpochRow>)> = cells
        .par_iter()
        .map(|c| {
            let specs = c.model.specs(train.classes())?;
            let mut net = MorphNetwork::new(train.dim(), &specs, train.classes(), c.seed)?;
            let history = net.train(&train, &train_config(cfg, c.optimizer, c.seed))?;
            let rows = history
                .into_iter()
                .map(|e| EpochRow {
                    manifest: manifest.id.clone(),
                    model: c.model.name.clone(),
                    optimizer: c.optimizer.to_string(),
                    seed: c.seed,
                    epoch: e.epoch,
                    loss: e.loss,
                    train_accuracy: e.accuracy,
                })
                .collect();
            Ok((net, rows))
        })
        .collect::<Result<_>>()?;

    let mut result = RunOutput::default();
    let epochs: Vec<EpochRow> = trained.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let path = out.join("dense_epochs.csv");
    write_csv(&path, &epochs)?;
    result.files.push(path);

    let scored: Vec<(DenseRow, Vec<PruneCsvRow>)> = cells
        .par_iter()
        .zip(&trained)
        .map(|(c, (net, _))| {
            let dense = DenseRow {
                manifest: manifest.id.clone(),
                dataset: test.name().to_owned(),
                model: c.model.name.clone(),
                optimizer: c.optimizer.to_string(),
                seed: c.seed,
                test_accuracy: net.evaluate(&test)?,
            };
            let mut rows = Vec::new();
            if sweep {
                for &p in &cfg.prune.p {
                    rows.push(PruneCsvRow {
                        manifest: manifest.id.clone(),
                        model: c.model.name.clone(),
                        optimizer: c.optimizer.to_string(),
                        dataset: test.name().to_owned(),
                        seed: c.seed,
                        p,
                        accuracy: prune(net, p)?.evaluate(&test)?,
                    });
                }
            }
            Ok((dense, rows))
        })
        .collect::<Result<_>>()?;
    result.dense = scored.iter().map(|(d, _)| d.clone()).collect();
    let path = out.join("dense.csv");
    write_csv(&path, &result.dense)?;
    result.files.push(path);

    if cfg.dense.checkpoints || cfg.dense.weight_images {
        for (c, (net, _)) in cells.iter().zip(&trained) {
            let stem = format!("{}-{}-seed{}", c.model.name, c.optimizer, c.seed);
            if cfg.dense.checkpoints {
                let dir = out.join("checkpoints");
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(format!("{stem}.tmrp"));
                std::fs::write(&path, net.to_bytes())?;
                result.files.push(path);
            }
            if cfg.dense.weight_images {
                if let Some(img) = weight_grid(net) {
                    let dir = out.join("weights");
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join(format!("{stem}.png"));
                    img.save(&path)?;
                    result.files.push(path);
                }
            }
        }
    }

    if sweep {
        result.prune = scored.into_iter().flat_map(|(_, r)| r).collect();
        let path = out.join("prune.csv");
        write_csv(&path, &result.prune)?;
        result.files.push(path);
        let path = out.join("prune.svg");
        std::fs::write(&path, prune_chart(&result.prune))?;
        result.files.push(path);
    }
    Ok(result)
}

/// Mean accuracy against retention, one curve per model and optimizer.
pub fn prune_chart(rows: &[PruneCsvRow]) -> String {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.model.clone(), r.optimizer.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let series: Vec<Series> = keys
        .iter()
        .map(|(m, o)| {
            let mut ps: Vec<f64> = Vec::new();
            for r in rows.iter().filter(|r| &r.model == m && &r.optimizer == o) {
                if !ps.contains(&r.p) {
                    ps.push(r.p);
                }
            }
            let points = ps
                .iter()
                .map(|&p| {
                    let acc: Vec<f64> = rows
                        .iter()
                        .filter(|r| &r.model == m && &r.optimizer == o && r.p == p)
                        .map(|r| r.accuracy)
                        .collect();
                    (p, 100.0 * acc.iter().sum::<f64>() / acc.len() as f64)
                })
                .collect();
            Series {
                label: format!("{m} / {o}"),
                points,
                scatter: false,
            }
        })
        .collect();
    svg_chart(
        "Accuracy under unit pruning",
        "retained units (%)",
        "test accuracy (%)",
        &series,
        true,
    )
}

/// Sweep over a saved dense checkpoint.
pub fn prune_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<Vec<PruneCsvRow>> {
    let net = load_dense_checkpoint(checkpoint)?;
    let (_, test) = load_data(cfg)?;
    std::fs::create_dir_all(out)?;
    let manifest = Manifest::for_config(cfg);
    manifest.write(out)?;
    let model = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let rows = cfg
        .prune
        .p
        .par_iter()
        .map(|&p| {
            Ok(PruneCsvRow {
                manifest: manifest.id.clone(),
                model: model.clone(),
                optimizer: String::new(),
                dataset: test.name().to_owned(),
                seed: 0,
                p,
                accuracy: prune(&net, p)?.evaluate(&test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(&out.join("prune.csv"), &rows)?;
    std::fs::write(out.join("prune.svg"), prune_chart(&rows))?;
    Ok(rows)
}

fn read_checkpoint(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(CliError::MissingData(format!(
            "checkpoint {} not found",
            path.display()
        )));
    }
    Ok(std::fs::read(path)?)
}

pub fn load_dense_checkpoint(path: &Path) -> Result<MorphNetwork> {
    Ok(MorphNetwork::from_bytes(&read_checkpoint(path)?)?)
}

/// Test accuracy of a dense-network or DEP-ensemble checkpoint.
pub fn eval_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<f64> {
    let bytes = read_checkpoint(path)?;
    let (_, test) = load_data(cfg)?;
    match peek_kind(&bytes)? {
        Kind::DenseNetwork => Ok(MorphNetwork::from_bytes(&bytes)?.evaluate(&test)?),
        Kind::DepEnsemble => Ok(OvoEnsemble::<BaggedDep>::from_bytes(&bytes)?.accuracy(&test)),
        Kind::MonotoneNetwork => Err(CliError::Config(
            "monotone checkpoints have no classification accuracy".into(),
        )),
    }
}

fn bagging_config(cfg: &ExperimentConfig) -> BaggingConfig {
    let d = &cfg.dep;
    BaggingConfig {
        members: d.members,
        fraction: d.fraction,
        orientation: d.orientation,
        centers: d.centers,
        outlier_norm: d.outlier_norm,
        greedy: GreedyConfig {
            c: d.c,
            reference: None,
            ccp: CcpConfig {
                max_iterations: d.max_iterations,
                margin: d.margin,
                ..CcpConfig::default()
            },
        },
    }
}

fn binary_seed(seed: u64, task: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(task as u64)
}

/// One-vs-one bagged reduced DEPs, pairs trained in parallel.
pub fn fit_dep_ovo(train: &Dataset, bag: &BaggingConfig, seed: u64) -> Result<OvoEnsemble<BaggedDep>> {
    let k = train.classes();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let models = pairs
        .par_iter()
        .map(|&(a, b)| {
            let data = subset_by_classes(train, a, b)?;
            Ok(((a, b), bagging_fit(&data, bag, binary_seed(seed, a * k + b))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvoEnsemble { classes: k, models })
}

pub fn fit_dep_ovr(train: &Dataset, bag: &BaggingConfig, seed: u64) -> Result<OvrEnsemble<BaggedDep>> {
    let models = (0..train.classes())
        .into_par_iter()
        .map(|c| Ok(bagging_fit(&one_vs_rest_problem(train, c)?, bag, binary_seed(seed, c))?))
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrEnsemble { models })
}

fn ovr_accuracy<M: BinaryScorer>(e: &OvrEnsemble<M>, ds: &Dataset) -> f64 {
    let hits = (0..ds.len())
        .filter(|&i| e.predict(ds.row(i)) == ds.labels()[i])
        .count();
    hits as f64 / ds.len().max(1) as f64
}

fn run_dep(cfg: &ExperimentConfig, manifest: &Manifest, out: &Path) -> Result<RunOutput> {
    let (train, test) = load_data(cfg)?;
    let bag = bagging_config(cfg);
    let mut result = RunOutput::default();
    for &seed in &cfg.seeds {
        let accuracy = match cfg.dep.reduction {
            Reduction::Ovo => {
                let e = fit_dep_ovo(&train, &bag, seed)?;
                if cfg.dep.checkpoint {
                    let dir = out.join("checkpoints");
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join(format!("dep-ovo-seed{seed}.tmrp"));
                    std::fs::write(&path, e.to_bytes())?;
                    result.files.push(path);
                }
                e.accuracy(&test)
            }
            Reduction::Ovr => ovr_accuracy(&fit_dep_ovr(&train, &bag, seed)?, &test),
        };
        result.dep.push(DepRow {
            manifest: manifest.id.clone(),
            dataset: test.name().to_owned(),
            reduction: cfg.dep.reduction.to_string(),
            members: cfg.dep.members,
            seed,
            accuracy,
        });
    }
    let path = out.join("dep.csv");
    write_csv(&path, &result.dep)?;
    result.files.push(path);
    Ok(result)
}

pub fn monotone_experiment(cfg: &ExperimentConfig) -> MonotoneExperiment {
    let m = &cfg.monotone;
    MonotoneExperiment {
        samples: m.samples,
        groups: m.groups,
        planes: m.planes,
        beta: m.beta,
        gain: m.gain,
        transform: m.transform,
        train: MonotoneTrainConfig {
            epochs: m.epochs,
            learning_rate: m.learning_rate,
            active_set: m.active_set,
        },
        grid_points: m.grid_points,
    }
}

/// Grid size of the monotonicity certificate.
pub const CERTIFY_POINTS: usize = 2000;

fn run_monotone(cfg: &ExperimentConfig, manifest: &Manifest, out: &Path) -> Result<RunOutput> {
    let exp = monotone_experiment(cfg);
    let cells: Vec<(f64, u64)> = cfg
        .monotone
        .sigmas
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let grid = vec![linspace(-1.5, 1.5, CERTIFY_POINTS)];
    let overlay_cell = cfg
        .monotone
        .overlay_sigma
        .filter(|s| cfg.monotone.sigmas.contains(s))
        .unwrap_or(cfg.monotone.sigmas[0]);
    let done = cells
        .par_iter()
        .map(|&(sigma, seed)| {
            let cell = run_monotone_cell(&exp, sigma, seed)?;
            let certified = [&cell.smooth, &cell.hard]
                .into_iter()
                .map(|n| Ok(tropmorph::monotone::monotonicity_check(n, &grid, 1e-12)?.passed()))
                .collect::<Result<Vec<bool>>>()?;
            let overlay = (sigma == overlay_cell && seed == cfg.seeds[0]).then(|| overlay_chart(&cell, sigma));
            Ok((cell.rows, certified, overlay))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = RunOutput::default();
    for (rows, certified, overlay) in done {
        result.monotone.extend(rows.into_iter().map(|r| MonotoneRow {
            manifest: manifest.id.clone(),
            method: r.method.to_string(),
            sigma: r.sigma,
            seed: r.seed,
            rmse: r.rmse,
        }));
        result.monotone_certified.extend(certified);
        if let Some(svg) = overlay {
            let path = out.join("monotone_overlay.svg");
            std::fs::write(&path, svg)?;
            result.files.push(path);
        }
    }
    let path = out.join("monotone.csv");
    write_csv(&path, &result.monotone)?;
    result.files.push(path);
    Ok(result)
}

fn overlay_chart(cell: &tropmorph::monotone::MonotoneCell, sigma: f64) -> String {
    let grid = linspace(-1.0, 1.0, 400);
    let mut series = vec![Series {
        label: "data".into(),
        points: cell.xs.iter().copied().zip(cell.ys.iter().copied()).collect(),
        scatter: true,
    }];
    series.push(Series {
        label: "target".into(),
        points: grid.iter().map(|&u| (u, target_curve(u))).collect(),
        scatter: false,
    });
    for m in Method::ALL {
        series.push(Series {
            label: m.to_string(),
            points: grid.iter().map(|&u| (u, cell.curve(m, u))).collect(),
            scatter: false,
        });
    }
    svg_chart(
        &format!("Monotone regression, sigma = {sigma}"),
        "x",
        "y",
        &series,
        false,
    )
}

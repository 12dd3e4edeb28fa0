//! Experiment runner: data preparation, training in one of four modes and
//! output emission.
//!
//! Output directory layout:
//!
//! | file | columns |
//! |------|---------|
//! | `manifest.csv` | `sample_id,client_id,paired` |
//! | `metrics.csv` | `round_or_epoch,direction,mae,psnr,ssim` |
//! | `latent_round_R.csv` | `sample_id,group,x,y` |
//! | `summary.csv` | `round_or_epoch,overlap_a,overlap_b,diversity_real_a,diversity_fake_a,diversity_real_b,diversity_fake_b` |
//! | `checkpoints/gen_ab_R.params`, `gen_ba_R.params` | see [`crate::checkpoint`] |
//! | `comparison.csv` (compare only) | `mode,direction,mae,psnr,ssim` |
//!
//! `R` is the federated round or centralized epoch, starting at 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::checkpoint::write_checkpoint;
use crate::config::{DatasetSource, ExperimentConfig, Mode};
use crate::data::{self, ClientDataset, PartitionScheme, Sample};
use crate::diagnostics::{cloud_summary, latent_cloud, write_cloud_csv, CloudSummary};
use crate::error::{Error, Result};
use crate::federation::{
    run_round, CentralTrainer, ClientState, Direction, MetricsRecord, ServerState,
};
use crate::models::{Generator, Network};
use crate::rng::SeededRng;

const STREAM_SPLIT: u64 = 0x7370_6c74;
const STREAM_LATENT: u64 = 0x6c61_7465;

/// Held-out test set plus one training dataset per client (one for central modes).
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub test: Vec<Sample>,
    pub clients: Vec<Arc<ClientDataset>>,
}

impl PreparedData {
    /// Data fractions, used as aggregation weights.
    pub fn weights(&self) -> Vec<f64> {
        let total: usize = self.clients.iter().map(|c| c.len()).sum();
        self.clients
            .iter()
            .map(|c| c.len() as f64 / total as f64)
            .collect()
    }
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let samples = match &cfg.dataset {
        DatasetSource::Synthetic { n, image_size, .. } => {
            data::synth_dataset(*n, *image_size, cfg.data_seed())?
        }
        DatasetSource::ImageDir { path, image_size } => data::load_image_dir(path, *image_size)?,
    };
    if samples.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let (train, test) = data::holdout(samples, cfg.test_fraction, cfg.data_seed())?;
    if test.is_empty() {
        return Err(Error::Data(
            "test split is empty; raise test_fraction or the sample count".into(),
        ));
    }
    let scheme = if cfg.mode.is_federated() {
        cfg.scheme.clone()
    } else {
        PartitionScheme::explicit(vec![1.0])?
    };
    let train: Vec<Arc<Sample>> = train.into_iter().map(Arc::new).collect();
    let ids: Vec<usize> = (0..train.len()).collect();
    let clients = data::partition(&ids, &scheme, cfg.global_seed)?
        .into_iter()
        .enumerate()
        .map(|(k, idx)| {
            let members: Vec<Arc<Sample>> = idx.iter().map(|&i| Arc::clone(&train[i])).collect();
            let seed = SeededRng::derive(cfg.global_seed, &[STREAM_SPLIT, k as u64]).next_u64();
            data::split_paired_unpaired(&members, cfg.paired_ratio, seed).map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData { test, clients })
}

/// What one evaluation point produced.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationPoint {
    pub index: usize,
    pub metrics: [MetricsRecord; 2],
    pub summary: CloudSummary,
    pub cloud_points: usize,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub points: Vec<EvaluationPoint>,
}

impl RunReport {
    pub fn final_metrics(&self) -> Option<&[MetricsRecord; 2]> {
        self.points.last().map(|p| &p.metrics)
    }
}

struct Emitter {
    dir: PathBuf,
    metrics: csv::Writer<fs::File>,
    summary: csv::Writer<fs::File>,
    checkpoints: bool,
}

impl Emitter {
    fn create(dir: &Path, checkpoints: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if checkpoints {
            let c = dir.join("checkpoints");
            fs::create_dir_all(&c).map_err(|e| Error::io(&c, e))?;
        }
        let mut metrics = csv::Writer::from_path(dir.join("metrics.csv"))?;
        metrics.write_record(["round_or_epoch", "direction", "mae", "psnr", "ssim"])?;
        let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
        summary.write_record([
            "round_or_epoch",
            "overlap_a",
            "overlap_b",
            "diversity_real_a",
            "diversity_fake_a",
            "diversity_real_b",
            "diversity_fake_b",
        ])?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            metrics,
            summary,
            checkpoints,
        })
    }

    fn emit(
        &mut self,
        cfg: &ExperimentConfig,
        index: usize,
        metrics: [MetricsRecord; 2],
        gen_ab: &Generator,
        gen_ba: &Generator,
        test: &[Sample],
    ) -> Result<EvaluationPoint> {
        let stage = || {
            format!(
                "{} {index}",
                if cfg.mode.is_federated() {
                    "round"
                } else {
                    "epoch"
                }
            )
        };
        for m in &metrics {
            if ![m.mae, m.psnr, m.ssim].iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence {
                    stage: stage(),
                    detail: format!("non-finite {} metrics", m.direction),
                });
            }
            self.metrics.write_record([
                index.to_string(),
                m.direction.to_string(),
                m.mae.to_string(),
                m.psnr.to_string(),
                m.ssim.to_string(),
            ])?;
        }
        self.metrics.flush().map_err(|e| Error::io(&self.dir, e))?;

        // Same test subset at every evaluation point.
        let mut rng = SeededRng::derive(cfg.global_seed, &[STREAM_LATENT]);
        let points = latent_cloud(
            gen_ab,
            gen_ba,
            test,
            cfg.latent_samples,
            &mut rng,
            cfg.execution,
        )?;
        write_cloud_csv(&self.dir.join(format!("latent_round_{index}.csv")), &points)?;
        let summary = cloud_summary(&points).map_err(|e| Error::Divergence {
            stage: stage(),
            detail: e.to_string(),
        })?;
        let mut row = vec![
            index.to_string(),
            summary.overlap_a.to_string(),
            summary.overlap_b.to_string(),
        ];
        row.extend(summary.diversity.iter().map(f64::to_string));
        self.summary.write_record(&row)?;
        self.summary.flush().map_err(|e| Error::io(&self.dir, e))?;

        if self.checkpoints {
            let c = self.dir.join("checkpoints");
            write_checkpoint(
                &c.join(format!("gen_ab_{index}.params")),
                &gen_ab.flatten_params(),
            )?;
            write_checkpoint(
                &c.join(format!("gen_ba_{index}.params")),
                &gen_ba.flatten_params(),
            )?;
        }
        Ok(EvaluationPoint {
            index,
            metrics,
            summary,
            cloud_points: points.len(),
        })
    }
}

fn in_round(round: usize, err: Error) -> Error {
    match err {
        Error::Divergence { stage, detail } => Error::Divergence {
            stage: format!("round {round}, {stage}"),
            detail,
        },
        other => other,
    }
}

/// Trains per `cfg.mode` and writes every output file into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let prepared = prepare_data(cfg)?;
    let mut out = Emitter::create(&cfg.output_dir, cfg.checkpoints)?;
    let rows: Vec<ClientDataset> = prepared.clients.iter().map(|c| (**c).clone()).collect();
    data::write_manifest(
        &cfg.output_dir.join("manifest.csv"),
        &data::manifest_rows(&rows),
    )?;

    let round_cfg = cfg.effective_round();
    round_cfg.validate()?;
    let test = &prepared.test;
    let mut points = Vec::new();
    if cfg.mode.is_federated() {
        let mut server = ServerState::new(&cfg.models, cfg.global_seed)?;
        let mut clients = prepared
            .clients
            .iter()
            .zip(prepared.weights())
            .enumerate()
            .map(|(k, (ds, w))| {
                ClientState::new(k, w, Arc::clone(ds), &cfg.models, cfg.global_seed)
            })
            .collect::<Result<Vec<_>>>()?;
        for round in 1..=round_cfg.rounds {
            let outcome = run_round(
                &mut server,
                &mut clients,
                &round_cfg,
                cfg.global_seed,
                test,
                cfg.execution,
                cfg.client_order.as_deref(),
            )
            .map_err(|e| in_round(round, e))?;
            let metrics = outcome.metrics.expect("test set is non-empty");
            points.push(out.emit(cfg, round, metrics, &server.gen_ab, &server.gen_ba, test)?);
        }
    } else {
        let mut trainer = CentralTrainer::new(
            Arc::clone(&prepared.clients[0]),
            &cfg.models,
            cfg.global_seed,
        )?;
        for epoch in 1..=cfg.central_epochs {
            trainer.train_epoch(&round_cfg)?;
            let metrics = crate::federation::evaluate(
                trainer.gen_ab(),
                trainer.gen_ba(),
                test,
                epoch,
                cfg.execution,
            )?;
            points.push(out.emit(
                cfg,
                epoch,
                metrics,
                trainer.gen_ab(),
                trainer.gen_ba(),
                test,
            )?);
        }
    }
    Ok(RunReport {
        mode: cfg.mode,
        output_dir: cfg.output_dir.clone(),
        points,
    })
}

/// One row of `comparison.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonRow {
    pub mode: Mode,
    pub direction: Direction,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Runs `central` for `rounds × local_epochs` epochs and `fed_dp` for
/// `rounds` rounds, each into its own subdirectory, and writes their final
/// metrics side by side.
pub fn compare_modes(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for mode in [Mode::Central, Mode::FedDp] {
        let mut sub = cfg.clone();
        sub.mode = mode;
        sub.central_epochs = cfg.round.rounds * cfg.round.local_epochs;
        sub.output_dir = cfg.output_dir.join(mode.to_string());
        let report = run_experiment(&sub)?;
        let last = report
            .final_metrics()
            .expect("at least one evaluation point");
        rows.extend(last.iter().map(|m| ComparisonRow {
            mode,
            direction: m.direction,
            mae: m.mae,
            psnr: m.psnr,
            ssim: m.ssim,
        }));
    }
    rows.sort_by_key(|r| (r.direction as u8, r.mode.is_federated()));
    write_comparison(&cfg.output_dir.join("comparison.csv"), &rows)?;
    Ok(rows)
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mode", "direction", "mae", "psnr", "ssim"])?;
    for r in rows {
        w.write_record([
            r.mode.to_string(),
            r.direction.to_string(),
            r.mae.to_string(),
            r.psnr.to_string(),
            r.ssim.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, file: &str) -> Result<T> {
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Data(format!("bad {file} row {rec:?}")))
}

pub fn read_comparison(path: &Path) -> Result<Vec<ComparisonRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ComparisonRow {
                mode: field(&rec, 0, "comparison")?,
                direction: field(&rec, 1, "comparison")?,
                mae: field(&rec, 2, "comparison")?,
                psnr: field(&rec, 3, "comparison")?,
                ssim: field(&rec, 4, "comparison")?,
            })
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(MetricsRecord {
                round: field(&rec, 0, "metrics")?,
                direction: field(&rec, 1, "metrics")?,
                mae: field(&rec, 2, "metrics")?,
                psnr: field(&rec, 3, "metrics")?,
                ssim: field(&rec, 4, "metrics")?,
            })
        })
        .collect()
}

pub fn read_summary(path: &Path) -> Result<Vec<(usize, CloudSummary)>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let mut diversity = [0.0; 4];
            for (i, d) in diversity.iter_mut().enumerate() {
                *d = field(&rec, 3 + i, "summary")?;
            }
            Ok((
                field(&rec, 0, "summary")?,
                CloudSummary {
                    overlap_a: field(&rec, 1, "summary")?,
                    overlap_b: field(&rec, 2, "summary")?,
                    diversity,
                },
            ))
        })
        .collect()
}

//! The pipeline stages as commands over one locked output directory:
//! ingest -> train-ae -> archetypes -> train-hybrid -> evaluate -> report.
//!
//! Each command loads its upstream artifacts by well-known file name,
//! writes its own, and records checksums in the run manifest (timings go to
//! a sidecar so manifests stay byte-stable).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::archetypes::extract_archetypes;
use crate::artifacts::{
    load_archetypes, load_autoencoder, load_hybrid, load_json, load_labels_csv, load_matrix,
    load_or_new_manifest, load_splits, lock_out_dir, record_stage, save_ae_history_csv,
    save_archetypes, save_autoencoder, save_hybrid, save_hybrid_history_csv, save_json,
    save_labels_csv, save_matrix, save_metrics_csv, save_splits,
};
use crate::config::{BackendKind, RunConfig};
use crate::dataset::{build_matrix, parse_ratings, split};
use crate::error::{Error, Result};
use crate::hybrid::{
    evaluate_with, init_hybrid, train_hybrid, EvalOptions, HybridTrainConfig,
};
use crate::metrics::{Environment, MetricsReport};
use crate::nn::{train_autoencoder, TrainConfig};
use crate::noise::{sample_noise_spec, NoiseSpec};
use crate::qham::Backend;

pub const MATRIX_FILE: &str = "matrix.qhrc";
pub const SPLITS_FILE: &str = "splits.json";
pub const AE_FILE: &str = "autoencoder.qhrc";
pub const AE_HISTORY_FILE: &str = "ae_history.csv";
pub const ARCHETYPES_FILE: &str = "archetypes.qhrc";
pub const LABELS_FILE: &str = "labels.csv";
pub const HYBRID_FILE: &str = "hybrid.qhrc";
pub const HYBRID_HISTORY_FILE: &str = "hybrid_history.csv";
pub const NOISE_FILE: &str = "noise.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

pub fn metrics_json_file(environment: Environment) -> String {
    format!("metrics_{environment}.json")
}

pub fn metrics_csv_file(environment: Environment) -> String {
    format!("metrics_{environment}.csv")
}

/// Path of an upstream artifact, or a pipeline-order error naming the stage
/// that produces it.
fn require(out_dir: &Path, file: &str, produced_by: &'static str) -> Result<PathBuf> {
    let path = out_dir.join(file);
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingUpstream {
            stage: produced_by,
            artifact: file.to_string(),
        })
    }
}

/// Parse ratings, build the filtered matrix, split by user, write both.
pub fn cmd_ingest(config: &RunConfig) -> Result<String> {
    let started = Instant::now();
    let _lock = lock_out_dir(&config.out_dir)?;

    let file = File::open(&config.dataset).map_err(|source| Error::Io {
        path: config.dataset.clone(),
        source,
    })?;
    let records = parse_ratings(BufReader::new(file))?;
    let matrix = build_matrix(&records, config.min_ratings)?;
    let splits = split(&matrix, config.split_ratio, config.seeds.split)?;

    save_matrix(&config.out_dir.join(MATRIX_FILE), &matrix, config.min_ratings)?;
    save_splits(&config.out_dir.join(SPLITS_FILE), &splits, config.split_ratio)?;

    let mut manifest = load_or_new_manifest(&config.out_dir, config)?;
    record_stage(
        &config.out_dir,
        &mut manifest,
        "ingest",
        &[MATRIX_FILE, SPLITS_FILE],
        started.elapsed().as_secs_f64(),
    )?;
    Ok(format!(
        "users={}, movies={}",
        matrix.users(),
        matrix.movies()
    ))
}

/// Train the reconstruction autoencoder on the ingested splits.
pub fn cmd_train_ae(config: &RunConfig) -> Result<String> {
    let started = Instant::now();
    let _lock = lock_out_dir(&config.out_dir)?;

    let matrix = load_matrix(&require(&config.out_dir, MATRIX_FILE, "ingest")?)?;
    let splits = load_splits(&require(&config.out_dir, SPLITS_FILE, "ingest")?, &matrix)?;

    let train_cfg = TrainConfig {
        learning_rate: config.optimizer.learning_rate_ae,
        batch_size: config.optimizer.batch_size,
        seed: config.seeds.init,
        optimizer: config.optimizer.kind,
        mask_unrated: config.mask_unrated,
    };
    let (params, history) =
        train_autoencoder(&splits, config.ae_epochs, config.latent_n, &train_cfg)?;

    save_autoencoder(&config.out_dir.join(AE_FILE), &params, &history)?;
    save_ae_history_csv(&config.out_dir.join(AE_HISTORY_FILE), &history)?;

    let mut manifest = load_or_new_manifest(&config.out_dir, config)?;
    record_stage(
        &config.out_dir,
        &mut manifest,
        "train-ae",
        &[AE_FILE, AE_HISTORY_FILE],
        started.elapsed().as_secs_f64(),
    )?;
    Ok(format!("test_mse={:.6}", history.test_loss))
}

/// Cluster users, encode and polarize the centroids, store the patterns.
pub fn cmd_archetypes(config: &RunConfig) -> Result<String> {
    let started = Instant::now();
    let _lock = lock_out_dir(&config.out_dir)?;

    let matrix = load_matrix(&require(&config.out_dir, MATRIX_FILE, "ingest")?)?;
    let (ae, _) = load_autoencoder(&require(&config.out_dir, AE_FILE, "train-ae")?)?;

    if config.clusters_k == 1 {
        log::warn!("k = 1: single-class classification is degenerate");
    }
    let (patterns, labels, cluster) = extract_archetypes(
        &matrix,
        &ae.encoder,
        config.clusters_k,
        config.seeds.kmeans,
    )?;
    let by_user: BTreeMap<u32, usize> = matrix
        .user_index
        .iter()
        .map(|(&user, &row)| (user, labels[row]))
        .collect();

    save_archetypes(
        &config.out_dir.join(ARCHETYPES_FILE),
        &patterns,
        &cluster,
        config.seeds.kmeans,
    )?;
    save_labels_csv(&config.out_dir.join(LABELS_FILE), &by_user)?;

    let mut manifest = load_or_new_manifest(&config.out_dir, config)?;
    record_stage(
        &config.out_dir,
        &mut manifest,
        "archetypes",
        &[ARCHETYPES_FILE, LABELS_FILE],
        started.elapsed().as_secs_f64(),
    )?;
    let mut summary = format!("patterns={}, inertia={:.6}", patterns.len(), cluster.inertia);
    if config.clusters_k == 1 {
        summary.push_str("\nwarning: single-class classification is degenerate");
    }
    Ok(summary)
}

/// The run's noise spec: the one archived with the model if present,
/// otherwise sampled fresh from the configured seed.
fn resolve_noise(config: &RunConfig, archived: Option<NoiseSpec>, n: usize) -> Result<NoiseSpec> {
    match archived {
        Some(spec) => Ok(spec),
        None => sample_noise_spec(n + 1, n, config.seeds.noise),
    }
}

/// Train the memory angles and classifier head against the cluster labels.
pub fn cmd_train_hybrid(config: &RunConfig) -> Result<String> {
    let started = Instant::now();
    let _lock = lock_out_dir(&config.out_dir)?;

    let matrix = load_matrix(&require(&config.out_dir, MATRIX_FILE, "ingest")?)?;
    let splits = load_splits(&require(&config.out_dir, SPLITS_FILE, "ingest")?, &matrix)?;
    let (ae, _) = load_autoencoder(&require(&config.out_dir, AE_FILE, "train-ae")?)?;
    let (patterns, _, _) =
        load_archetypes(&require(&config.out_dir, ARCHETYPES_FILE, "archetypes")?)?;
    let labels = load_labels_csv(&require(&config.out_dir, LABELS_FILE, "archetypes")?)?;

    let mut model = init_hybrid(ae.encoder, patterns, config.seeds.head_init())?;
    model.fine_tune_encoder = config.fine_tune_encoder;

    let noise = match config.backend {
        BackendKind::Ideal => None,
        BackendKind::Noisy => Some(resolve_noise(config, None, config.latent_n)?),
    };
    let backend = match &noise {
        None => Backend::Ideal,
        Some(spec) => Backend::Noisy(spec),
    };

    let train_cfg = HybridTrainConfig {
        epochs: config.hybrid_epochs,
        learning_rate: config.optimizer.learning_rate_hybrid,
        batch_size: config.optimizer.batch_size,
        shuffle_seed: config.seeds.hybrid_shuffle(),
        target_seed: config.seeds.target,
        optimizer: config.optimizer.kind,
    };

    let (model, history) = match train_hybrid(model, &splits, &labels, &train_cfg, backend) {
        Ok(done) => done,
        Err(Error::TrainingDiverged {
            epoch,
            message,
            last_good,
        }) => {
            // archive the last stable checkpoint before surfacing the error
            if let Some(checkpoint) = &last_good {
                save_hybrid(
                    &config.out_dir.join(HYBRID_FILE),
                    checkpoint,
                    &crate::hybrid::HybridHistory::default(),
                    noise.as_ref(),
                )?;
            }
            return Err(Error::TrainingDiverged {
                epoch,
                message,
                last_good,
            });
        }
        Err(other) => return Err(other),
    };

    save_hybrid(
        &config.out_dir.join(HYBRID_FILE),
        &model,
        &history,
        noise.as_ref(),
    )?;
    save_hybrid_history_csv(&config.out_dir.join(HYBRID_HISTORY_FILE), &history)?;
    if let Some(spec) = &noise {
        save_json(&config.out_dir.join(NOISE_FILE), spec)?;
    }

    let mut manifest = load_or_new_manifest(&config.out_dir, config)?;
    manifest.noise = noise.clone();
    let mut files = vec![HYBRID_FILE, HYBRID_HISTORY_FILE];
    if noise.is_some() {
        files.push(NOISE_FILE);
    }
    record_stage(
        &config.out_dir,
        &mut manifest,
        "train-hybrid",
        &files,
        started.elapsed().as_secs_f64(),
    )?;

    match history.epochs.last() {
        Some(last) => Ok(format!(
            "epochs={}, val_accuracy={:.4}, val_loss={:.6}",
            history.epochs.len(),
            last.val_accuracy,
            last.val_loss
        )),
        None => Ok("epochs=0 (initial model saved)".to_string()),
    }
}

/// Score the test split under the configured backend and write the metric
/// report pair (JSON + CSV).
pub fn cmd_evaluate(config: &RunConfig) -> Result<String> {
    let started = Instant::now();
    let _lock = lock_out_dir(&config.out_dir)?;

    let matrix = load_matrix(&require(&config.out_dir, MATRIX_FILE, "ingest")?)?;
    let splits = load_splits(&require(&config.out_dir, SPLITS_FILE, "ingest")?, &matrix)?;
    let (model, _, archived_noise) =
        load_hybrid(&require(&config.out_dir, HYBRID_FILE, "train-hybrid")?)?;
    let labels = load_labels_csv(&require(&config.out_dir, LABELS_FILE, "archetypes")?)?;

    let noise = match config.backend {
        BackendKind::Ideal => None,
        BackendKind::Noisy => Some(resolve_noise(config, archived_noise, model.n())?),
    };
    let backend = match &noise {
        None => Backend::Ideal,
        Some(spec) => Backend::Noisy(spec),
    };
    let options = EvalOptions {
        target_seed: config.seeds.target,
        shots: config.shots,
        shot_seed: config.seeds.shots(),
    };
    let report = evaluate_with(&model, &splits.test, &labels, backend, &options)?;

    let json_file = metrics_json_file(report.environment);
    let csv_file = metrics_csv_file(report.environment);
    save_json(&config.out_dir.join(&json_file), &report)?;
    save_metrics_csv(&config.out_dir.join(&csv_file), &report)?;
    if let Some(spec) = &noise {
        save_json(&config.out_dir.join(NOISE_FILE), spec)?;
    }

    let mut manifest = load_or_new_manifest(&config.out_dir, config)?;
    if manifest.noise.is_none() {
        manifest.noise = noise.clone();
    }
    let mut files = vec![json_file.as_str(), csv_file.as_str()];
    if noise.is_some() {
        files.push(NOISE_FILE);
    }
    record_stage(
        &config.out_dir,
        &mut manifest,
        &format!("evaluate-{}", report.environment),
        &files,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(format!(
        "environment={}, mse={:.4}, accuracy={:.4}, f1={:.4}, roc_auc={:.4}",
        report.environment, report.mse, report.accuracy, report.f1, report.roc_auc
    ))
}

/// Consolidate whatever metric reports exist into a comparison table.
pub fn cmd_report(out_dir: &Path) -> Result<String> {
    let _lock = lock_out_dir(out_dir)?;

    let mut reports: Vec<MetricsReport> = Vec::new();
    for environment in [Environment::Ideal, Environment::Noisy] {
        let path = out_dir.join(metrics_json_file(environment));
        if path.exists() {
            reports.push(load_json(&path)?);
        }
    }
    if reports.is_empty() {
        return Err(Error::Report(format!(
            "no metric reports under {}; run `evaluate` first",
            out_dir.display()
        )));
    }

    let mut csv = String::from("environment,mse,accuracy,f1,roc_auc\n");
    let mut text = format!(
        "{:<12} {:>8} {:>9} {:>8} {:>8}\n",
        "environment", "mse", "accuracy", "f1", "roc_auc"
    );
    for r in &reports {
        csv.push_str(&format!(
            "{},{:.17},{:.17},{:.17},{:.17}\n",
            r.environment, r.mse, r.accuracy, r.f1, r.roc_auc
        ));
        text.push_str(&format!(
            "{:<12} {:>8.4} {:>9.4} {:>8.4} {:>8.4}\n",
            r.environment.to_string(),
            r.mse,
            r.accuracy,
            r.f1,
            r.roc_auc
        ));
    }

    crate::artifacts::write_atomic(&out_dir.join(REPORT_CSV), csv.as_bytes())?;
    crate::artifacts::write_atomic(&out_dir.join(REPORT_TXT), text.as_bytes())?;
    Ok(text.trim_end().to_string())
}

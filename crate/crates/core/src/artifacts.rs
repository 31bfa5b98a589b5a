//! Artifact plumbing: a versioned binary container for numeric checkpoints,
//! JSON sidecars for structure-only artifacts, content checksums, the run
//! manifest, and the output-directory lock.
//!
//! Container layout: magic `QHRC`, u32 version, u64 header length, a JSON
//! header describing the named f64 segments, then the segments as
//! little-endian f64 payload. Everything written here is byte-deterministic
//! for identical inputs; wall-clock timings go to a separate file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archetypes::{ClusterModel, PatternSet, PolarPattern};
use crate::config::RunConfig;
use crate::dataset::{RatingsMatrix, SplitSet};
use crate::error::{Error, Result};
use crate::hybrid::{HybridHistory, HybridModel};
use crate::nn::{
    Activation, AutoencoderParams, DenseLayer, EncoderParams, TrainHistory,
};
use crate::noise::NoiseSpec;
use crate::qham::{HebbianConfig, NeuronParams};

const MAGIC: &[u8; 4] = b"QHRC";
const VERSION: u32 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn artifact_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Artifact {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Segment {
    name: String,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header<M> {
    kind: String,
    meta: M,
    segments: Vec<Segment>,
}

/// Serialize named f64 segments plus a JSON-typed meta block.
fn write_container<M: Serialize>(
    path: &Path,
    kind: &str,
    meta: &M,
    segments: &[(&str, &[f64])],
) -> Result<()> {
    let header = Header {
        kind: kind.to_string(),
        meta,
        segments: segments
            .iter()
            .map(|(name, data)| Segment {
                name: (*name).to_string(),
                len: data.len() as u64,
            })
            .collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| artifact_err(path, e.to_string()))?;

    let payload_len: usize = segments.iter().map(|(_, d)| d.len() * 8).sum();
    let mut bytes = Vec::with_capacity(4 + 4 + 8 + header_json.len() + payload_len);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for (_, data) in segments {
        for v in *data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

/// Read a container back, checking magic, version, and declared kind.
fn read_container<M: DeserializeOwned>(
    path: &Path,
    expected_kind: &str,
) -> Result<(M, BTreeMap<String, Vec<f64>>)> {
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| artifact_err(path, "file too short for the QHRC magic"))?;
    if &magic != MAGIC {
        return Err(artifact_err(path, "not a QHRC artifact (bad magic)"));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)
        .map_err(|_| artifact_err(path, "truncated version field"))?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(artifact_err(
            path,
            format!("container version {version}, expected {VERSION}"),
        ));
    }
    let mut long = [0u8; 8];
    file.read_exact(&mut long)
        .map_err(|_| artifact_err(path, "truncated header length"))?;
    let header_len = u64::from_le_bytes(long) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)
        .map_err(|_| artifact_err(path, "truncated header"))?;
    let header: Header<M> = serde_json::from_slice(&header_json)
        .map_err(|e| artifact_err(path, format!("header parse: {e}")))?;
    if header.kind != expected_kind {
        return Err(artifact_err(
            path,
            format!("artifact kind `{}`, expected `{expected_kind}`", header.kind),
        ));
    }

    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(io_err(path))?;
    let declared: usize = header.segments.iter().map(|s| s.len as usize * 8).sum();
    if payload.len() != declared {
        return Err(artifact_err(
            path,
            format!("payload is {} bytes, header declares {declared}", payload.len()),
        ));
    }

    let mut out = BTreeMap::new();
    let mut offset = 0usize;
    for segment in &header.segments {
        let n = segment.len as usize;
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let start = offset + i * 8;
            let chunk: [u8; 8] = payload[start..start + 8].try_into().unwrap();
            data.push(f64::from_le_bytes(chunk));
        }
        offset += n * 8;
        if out.insert(segment.name.clone(), data).is_some() {
            return Err(artifact_err(
                path,
                format!("duplicate segment `{}`", segment.name),
            ));
        }
    }
    Ok((header.meta, out))
}

fn take_segment(
    path: &Path,
    segments: &mut BTreeMap<String, Vec<f64>>,
    name: &str,
) -> Result<Vec<f64>> {
    segments
        .remove(name)
        .ok_or_else(|| artifact_err(path, format!("missing segment `{name}`")))
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn to_matrix(path: &Path, data: Vec<f64>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| artifact_err(path, format!("segment shape: {e}")))
}

// ---------------------------------------------------------------- matrix --

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixMeta {
    users: usize,
    movies: usize,
    min_ratings: usize,
    user_ids: Vec<u32>,
    movie_ids: Vec<u32>,
}

pub fn save_matrix(path: &Path, matrix: &RatingsMatrix, min_ratings: usize) -> Result<()> {
    let mut user_ids = vec![0u32; matrix.users()];
    for (&id, &row) in &matrix.user_index {
        user_ids[row] = id;
    }
    let mut movie_ids = vec![0u32; matrix.movies()];
    for (&id, &col) in &matrix.movie_index {
        movie_ids[col] = id;
    }
    let meta = MatrixMeta {
        users: matrix.users(),
        movies: matrix.movies(),
        min_ratings,
        user_ids,
        movie_ids,
    };
    write_container(path, "matrix", &meta, &[("values", &flat(&matrix.values))])
}

pub fn load_matrix(path: &Path) -> Result<RatingsMatrix> {
    let (meta, mut segments) = read_container::<MatrixMeta>(path, "matrix")?;
    let values = take_segment(path, &mut segments, "values")?;
    let values = to_matrix(path, values, meta.users, meta.movies)?;
    let user_index = meta
        .user_ids
        .iter()
        .enumerate()
        .map(|(row, &id)| (id, row))
        .collect::<BTreeMap<_, _>>();
    let movie_index = meta
        .movie_ids
        .iter()
        .enumerate()
        .map(|(col, &id)| (id, col))
        .collect::<BTreeMap<_, _>>();
    if user_index.len() != meta.users || movie_index.len() != meta.movies {
        return Err(artifact_err(path, "duplicate ids in index maps"));
    }
    Ok(RatingsMatrix {
        values,
        user_index,
        movie_index,
    })
}

// ---------------------------------------------------------------- splits --

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub train: Vec<u32>,
    pub validation: Vec<u32>,
    pub test: Vec<u32>,
}

pub fn save_splits(path: &Path, splits: &SplitSet, ratio: f64) -> Result<()> {
    let manifest = SplitManifest {
        seed: splits.seed,
        ratio,
        train: splits.train.user_ids(),
        validation: splits.validation.user_ids(),
        test: splits.test.user_ids(),
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| artifact_err(path, e.to_string()))?;
    write_atomic(path, &json)
}

pub fn load_splits(path: &Path, matrix: &RatingsMatrix) -> Result<SplitSet> {
    let text = fs::read(path).map_err(io_err(path))?;
    let manifest: SplitManifest = serde_json::from_slice(&text)
        .map_err(|e| artifact_err(path, format!("parse: {e}")))?;
    let collect = |ids: &[u32]| -> Result<RatingsMatrix> {
        let wanted: std::collections::BTreeSet<u32> = ids.iter().copied().collect();
        if let Some(missing) = wanted.iter().find(|id| !matrix.user_index.contains_key(id)) {
            return Err(artifact_err(
                path,
                format!("split user {missing} is not in the matrix"),
            ));
        }
        Ok(crate::dataset::take_rows(matrix, &wanted))
    };
    Ok(SplitSet {
        train: collect(&manifest.train)?,
        validation: collect(&manifest.validation)?,
        test: collect(&manifest.test)?,
        seed: manifest.seed,
    })
}

// ----------------------------------------------------------- autoencoder --

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerMeta {
    out_dim: usize,
    in_dim: usize,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AutoencoderMeta {
    movies: usize,
    hidden: usize,
    latent: usize,
    layers: Vec<LayerMeta>,
    history: TrainHistory,
}

fn layer_meta(layer: &DenseLayer) -> LayerMeta {
    LayerMeta {
        out_dim: layer.out_dim(),
        in_dim: layer.in_dim(),
        activation: layer.activation,
    }
}

fn rebuild_layer(
    path: &Path,
    meta: &LayerMeta,
    weights: Vec<f64>,
    bias: Vec<f64>,
) -> Result<DenseLayer> {
    if bias.len() != meta.out_dim {
        return Err(artifact_err(
            path,
            format!("bias length {} for out dim {}", bias.len(), meta.out_dim),
        ));
    }
    Ok(DenseLayer {
        weights: to_matrix(path, weights, meta.out_dim, meta.in_dim)?,
        bias: Array1::from_vec(bias),
        activation: meta.activation,
    })
}

pub fn save_autoencoder(
    path: &Path,
    params: &AutoencoderParams,
    history: &TrainHistory,
) -> Result<()> {
    let layers = params.layers();
    let meta = AutoencoderMeta {
        movies: layers[0].in_dim(),
        hidden: layers[0].out_dim(),
        latent: params.encoder.n,
        layers: layers.iter().map(|l| layer_meta(l)).collect(),
        history: history.clone(),
    };
    let flats: Vec<Vec<f64>> = layers.iter().map(|l| flat(&l.weights)).collect();
    let segments: Vec<(&str, &[f64])> = vec![
        ("w1", &flats[0]),
        ("b1", layers[0].bias.as_slice().unwrap()),
        ("w2", &flats[1]),
        ("b2", layers[1].bias.as_slice().unwrap()),
        ("w3", &flats[2]),
        ("b3", layers[2].bias.as_slice().unwrap()),
        ("w4", &flats[3]),
        ("b4", layers[3].bias.as_slice().unwrap()),
    ];
    write_container(path, "autoencoder", &meta, &segments)
}

pub fn load_autoencoder(path: &Path) -> Result<(AutoencoderParams, TrainHistory)> {
    let (meta, mut segments) = read_container::<AutoencoderMeta>(path, "autoencoder")?;
    if meta.layers.len() != 4 {
        return Err(artifact_err(
            path,
            format!("expected 4 layers, found {}", meta.layers.len()),
        ));
    }
    let mut layers = Vec::with_capacity(4);
    for (i, lm) in meta.layers.iter().enumerate() {
        let w = take_segment(path, &mut segments, &format!("w{}", i + 1))?;
        let b = take_segment(path, &mut segments, &format!("b{}", i + 1))?;
        layers.push(rebuild_layer(path, lm, w, b)?);
    }
    let decoder2 = layers.pop().unwrap();
    let decoder1 = layers.pop().unwrap();
    let layer2 = layers.pop().unwrap();
    let layer1 = layers.pop().unwrap();
    let params = AutoencoderParams {
        encoder: EncoderParams {
            layer1,
            layer2,
            n: meta.latent,
        },
        decoder1,
        decoder2,
    };
    Ok((params, meta.history))
}

// ------------------------------------------------------------ archetypes --

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchetypeMeta {
    k: usize,
    n: usize,
    kmeans_seed: u64,
    patterns: Vec<Vec<i8>>,
    source_clusters: Vec<usize>,
    centroid_checksums: Vec<String>,
    inertia: f64,
    inertia_history: Vec<f64>,
}

/// Checksum of one centroid's little-endian f64 bytes.
fn centroid_checksum(row: ndarray::ArrayView1<f64>) -> String {
    let mut bytes = Vec::with_capacity(row.len() * 8);
    for v in row {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    sha256_hex(&bytes)
}

pub fn save_archetypes(
    path: &Path,
    patterns: &PatternSet,
    cluster: &ClusterModel,
    kmeans_seed: u64,
) -> Result<()> {
    let meta = ArchetypeMeta {
        k: patterns.len(),
        n: patterns.n(),
        kmeans_seed,
        patterns: patterns.iter().map(|p| p.to_vec()).collect(),
        source_clusters: patterns.patterns().iter().map(|p| p.source_cluster).collect(),
        centroid_checksums: cluster
            .centroids
            .rows()
            .into_iter()
            .map(centroid_checksum)
            .collect(),
        inertia: cluster.inertia,
        inertia_history: cluster.inertia_history.clone(),
    };
    write_container(
        path,
        "archetypes",
        &meta,
        &[("centroids", &flat(&cluster.centroids))],
    )
}

pub fn load_archetypes(path: &Path) -> Result<(PatternSet, Array2<f64>, u64)> {
    let (meta, mut segments) = read_container::<ArchetypeMeta>(path, "archetypes")?;
    let centroids = take_segment(path, &mut segments, "centroids")?;
    let cols = if meta.k == 0 { 0 } else { centroids.len() / meta.k };
    let centroids = to_matrix(path, centroids, meta.k, cols)?;
    if meta.patterns.len() != meta.k || meta.source_clusters.len() != meta.k {
        return Err(artifact_err(path, "pattern metadata is inconsistent"));
    }
    let patterns = PatternSet::from_patterns(
        meta.patterns
            .iter()
            .zip(&meta.source_clusters)
            .map(|(bits, &source_cluster)| PolarPattern {
                bits: bits.clone(),
                source_cluster,
            })
            .collect(),
    )?;
    Ok((patterns, centroids, meta.kmeans_seed))
}

/// Per-user cluster labels as `user_id,cluster` CSV.
pub fn save_labels_csv(path: &Path, labels: &BTreeMap<u32, usize>) -> Result<()> {
    let mut text = String::from("user_id,cluster\n");
    for (user, label) in labels {
        text.push_str(&format!("{user},{label}\n"));
    }
    write_atomic(path, text.as_bytes())
}

pub fn load_labels_csv(path: &Path) -> Result<BTreeMap<u32, usize>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let (user, label) = line
            .split_once(',')
            .ok_or_else(|| artifact_err(path, format!("line {}: expected 2 fields", i + 1)))?;
        let user: u32 = user
            .parse()
            .map_err(|_| artifact_err(path, format!("line {}: bad user id", i + 1)))?;
        let label: usize = label
            .parse()
            .map_err(|_| artifact_err(path, format!("line {}: bad cluster", i + 1)))?;
        labels.insert(user, label);
    }
    Ok(labels)
}

// ---------------------------------------------------------------- hybrid --

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HybridMeta {
    n: usize,
    k: usize,
    fine_tune_encoder: bool,
    encoder_layers: Vec<LayerMeta>,
    head: LayerMeta,
    gamma: f64,
    w_max: f64,
    patterns: Vec<Vec<i8>>,
    source_clusters: Vec<usize>,
    history: HybridHistory,
    noise: Option<NoiseSpec>,
}

pub fn save_hybrid(
    path: &Path,
    model: &HybridModel,
    history: &HybridHistory,
    noise: Option<&NoiseSpec>,
) -> Result<()> {
    let meta = HybridMeta {
        n: model.n(),
        k: model.classes(),
        fine_tune_encoder: model.fine_tune_encoder,
        encoder_layers: vec![
            layer_meta(&model.encoder.layer1),
            layer_meta(&model.encoder.layer2),
        ],
        head: layer_meta(&model.head),
        gamma: model.hebbian.gamma,
        w_max: model.hebbian.w_max,
        patterns: model.patterns.iter().map(|p| p.to_vec()).collect(),
        source_clusters: model
            .patterns
            .patterns()
            .iter()
            .map(|p| p.source_cluster)
            .collect(),
        history: history.clone(),
        noise: noise.cloned(),
    };
    let enc_w1 = flat(&model.encoder.layer1.weights);
    let enc_w2 = flat(&model.encoder.layer2.weights);
    let alpha = flat(&model.neuron.alpha);
    let head_w = flat(&model.head.weights);
    let hebb_w = flat(&model.hebbian.w);
    let segments: Vec<(&str, &[f64])> = vec![
        ("enc_w1", &enc_w1),
        ("enc_b1", model.encoder.layer1.bias.as_slice().unwrap()),
        ("enc_w2", &enc_w2),
        ("enc_b2", model.encoder.layer2.bias.as_slice().unwrap()),
        ("alpha", &alpha),
        ("b", model.neuron.b.as_slice().unwrap()),
        ("head_w", &head_w),
        ("head_b", model.head.bias.as_slice().unwrap()),
        ("hebbian_w", &hebb_w),
        ("beta", model.hebbian.beta.as_slice().unwrap()),
    ];
    write_container(path, "hybrid", &meta, &segments)
}

pub fn load_hybrid(path: &Path) -> Result<(HybridModel, HybridHistory, Option<NoiseSpec>)> {
    let (meta, mut segments) = read_container::<HybridMeta>(path, "hybrid")?;
    if meta.encoder_layers.len() != 2 {
        return Err(artifact_err(path, "expected 2 encoder layers"));
    }
    let n = meta.n;
    let layer1 = rebuild_layer(
        path,
        &meta.encoder_layers[0],
        take_segment(path, &mut segments, "enc_w1")?,
        take_segment(path, &mut segments, "enc_b1")?,
    )?;
    let layer2 = rebuild_layer(
        path,
        &meta.encoder_layers[1],
        take_segment(path, &mut segments, "enc_w2")?,
        take_segment(path, &mut segments, "enc_b2")?,
    )?;
    let head = rebuild_layer(
        path,
        &meta.head,
        take_segment(path, &mut segments, "head_w")?,
        take_segment(path, &mut segments, "head_b")?,
    )?;
    let alpha = to_matrix(path, take_segment(path, &mut segments, "alpha")?, n, n)?;
    let b = Array1::from_vec(take_segment(path, &mut segments, "b")?);
    let w = to_matrix(path, take_segment(path, &mut segments, "hebbian_w")?, n, n)?;
    let beta = Array1::from_vec(take_segment(path, &mut segments, "beta")?);
    let patterns = PatternSet::from_patterns(
        meta.patterns
            .iter()
            .zip(&meta.source_clusters)
            .map(|(bits, &source_cluster)| PolarPattern {
                bits: bits.clone(),
                source_cluster,
            })
            .collect(),
    )?;
    let model = HybridModel {
        encoder: EncoderParams {
            layer1,
            layer2,
            n,
        },
        fine_tune_encoder: meta.fine_tune_encoder,
        hebbian: HebbianConfig {
            w,
            gamma: meta.gamma,
            beta,
            n,
            w_max: meta.w_max,
        },
        neuron: NeuronParams {
            alpha,
            b,
            trainable: true,
        },
        patterns,
        head,
    };
    Ok((model, meta.history, meta.noise))
}

// ------------------------------------------------------------- csv + run --

/// Autoencoder history as `epoch,train_loss,val_loss`.
pub fn save_ae_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut text = String::from("epoch,train_loss,val_loss\n");
    for e in &history.epochs {
        text.push_str(&format!("{},{:.17},{:.17}\n", e.epoch, e.train_loss, e.val_loss));
    }
    write_atomic(path, text.as_bytes())
}

/// Hybrid history as `epoch,loss,accuracy,f1,roc_auc` (validation metrics).
pub fn save_hybrid_history_csv(path: &Path, history: &HybridHistory) -> Result<()> {
    let mut text = String::from("epoch,loss,accuracy,f1,roc_auc\n");
    for e in &history.epochs {
        text.push_str(&format!(
            "{},{:.17},{:.17},{:.17},{:.17}\n",
            e.epoch, e.train_loss, e.val_accuracy, e.val_f1, e.val_roc_auc
        ));
    }
    write_atomic(path, text.as_bytes())
}

/// One-row metric CSV mirroring the report table shape.
pub fn save_metrics_csv(path: &Path, report: &crate::metrics::MetricsReport) -> Result<()> {
    let mut text = String::from("environment,mse,accuracy,f1,roc_auc\n");
    text.push_str(&format!(
        "{},{:.17},{:.17},{:.17},{:.17}\n",
        report.environment, report.mse, report.accuracy, report.f1, report.roc_auc
    ));
    write_atomic(path, text.as_bytes())
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json =
        serde_json::to_vec_pretty(value).map_err(|e| artifact_err(path, e.to_string()))?;
    write_atomic(path, &json)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| artifact_err(path, format!("parse: {e}")))
}

/// Replay record: config snapshot, per-stage artifact checksums, sampled
/// noise, software version. Timings live in `timings.json` so this file
/// stays byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub software_version: String,
    pub stages: BTreeMap<String, StageRecord>,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    /// artifact file name -> sha256 of its bytes
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        RunManifest {
            config: config.clone(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            stages: BTreeMap::new(),
            noise: None,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

/// Load the existing manifest, or start a fresh one for this config.
pub fn load_or_new_manifest(out_dir: &Path, config: &RunConfig) -> Result<RunManifest> {
    let path = out_dir.join(MANIFEST_FILE);
    if path.exists() {
        load_json(&path)
    } else {
        Ok(RunManifest::new(config))
    }
}

/// Record a completed stage: checksum its artifacts into the manifest and
/// append the wall-clock seconds to the timing sidecar.
pub fn record_stage(
    out_dir: &Path,
    manifest: &mut RunManifest,
    stage: &str,
    artifact_files: &[&str],
    elapsed_seconds: f64,
) -> Result<()> {
    let mut record = StageRecord::default();
    for name in artifact_files {
        let checksum = sha256_file(&out_dir.join(name))?;
        record.artifacts.insert((*name).to_string(), checksum);
    }
    manifest.stages.insert(stage.to_string(), record);
    save_json(&out_dir.join(MANIFEST_FILE), manifest)?;

    let timing_path = out_dir.join(TIMINGS_FILE);
    let mut timings: BTreeMap<String, f64> = if timing_path.exists() {
        load_json(&timing_path)?
    } else {
        BTreeMap::new()
    };
    timings.insert(stage.to_string(), elapsed_seconds);
    save_json(&timing_path, &timings)
}

// ------------------------------------------------------------------ lock --

/// Exclusive output-directory lock; removed on drop.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

pub fn lock_out_dir(out_dir: &Path) -> Result<LockGuard> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(".lock");
    match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(mut f) => {
            let _ = write!(f, "{}", std::process::id());
            Ok(LockGuard { path })
        }
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            Err(Error::Locked(path))
        }
        Err(e) => Err(io_err(&path)(e)),
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

//! On-disk bundle format.
//!
//! A bundle is a directory holding `manifest.json` plus one binary file per
//! array. Every binary file opens with a 16-byte header — magic `ACSS`,
//! little-endian u32 version (1), u32 payload dtype (0 = f32, 1 = u32), u32
//! rank — followed by rank little-endian u32 dimension sizes and the
//! payload, row-major with the last axis fastest. Floats are stored as
//! 32-bit; the in-memory arrays are f32-exact by construction, so a
//! save/load round trip is bit-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use acsess_core::model::{validate_bundle, LinearHead, PoolTag};
use acsess_core::DatasetBundle;
use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"ACSS";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F32: u32 = 0;
const DTYPE_U32: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("unsupported format version {version} in {path}")]
    VersionMismatch { path: PathBuf, version: u32 },
    #[error("unknown payload dtype {dtype} in {path}")]
    BadDtype { path: PathBuf, dtype: u32 },
    #[error("truncated file {0}")]
    Truncated(PathBuf),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown pool tag value {value} at sample {sample}")]
    BadPoolTag { sample: usize, value: u32 },
    #[error("bundle invariant violations:\n{}", .0.join("\n"))]
    InvariantViolations(Vec<String>),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, FormatError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n_samples: usize,
    pub n_classes: usize,
    pub embed_dim: usize,
    pub n_runs: usize,
    pub n_epochs: usize,
    /// Array name -> file name within the bundle directory.
    pub files: BTreeMap<String, String>,
    pub pool_tag_file: String,
    /// Optional generator provenance (config and seed).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

fn write_array(path: &Path, dims: &[usize], payload: &Payload) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let dtype = match payload {
        Payload::F32(_) => DTYPE_F32,
        Payload::U32(_) => DTYPE_U32,
    };
    buf.extend_from_slice(&dtype.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match payload {
        Payload::F32(values) => {
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Payload::U32(values) => {
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_array(path: &Path) -> Result<(Vec<usize>, Payload)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let take = |offset: usize| -> Result<u32> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| FormatError::Truncated(path.to_path_buf()))
    };
    if bytes.len() < 16 {
        return Err(FormatError::Truncated(path.to_path_buf()));
    }
    if bytes[0..4] != MAGIC {
        return Err(FormatError::BadMagic(path.to_path_buf()));
    }
    let version = take(4)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch {
            path: path.to_path_buf(),
            version,
        });
    }
    let dtype = take(8)?;
    let rank = take(12)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(take(16 + 4 * i)? as usize);
    }
    let payload_start = 16 + 4 * rank;
    let count: usize = dims.iter().product();
    let expected = payload_start + 4 * count;
    if bytes.len() < expected {
        return Err(FormatError::Truncated(path.to_path_buf()));
    }
    if bytes.len() > expected {
        return Err(FormatError::ShapeMismatch(format!(
            "{}: {} trailing bytes after declared payload",
            path.display(),
            bytes.len() - expected
        )));
    }
    let words = bytes[payload_start..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let payload = match dtype {
        DTYPE_F32 => Payload::F32(words.map(f32::from_bits).collect()),
        DTYPE_U32 => Payload::U32(words.collect()),
        _ => {
            return Err(FormatError::BadDtype {
                path: path.to_path_buf(),
                dtype,
            })
        }
    };
    Ok((dims, payload))
}

fn expect_dims(path: &Path, dims: &[usize], want: &[usize]) -> Result<()> {
    if dims != want {
        return Err(FormatError::ShapeMismatch(format!(
            "{}: file dims {dims:?}, manifest implies {want:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Writes the bundle directory; `provenance` is stored in the manifest.
pub fn save_bundle(
    bundle: &DatasetBundle,
    dir: &Path,
    provenance: Option<serde_json::Value>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    let f32s = |v: &[f64]| Payload::F32(v.iter().map(|&x| x as f32).collect());

    write_array(
        &dir.join("embeddings.bin"),
        &[bundle.n_samples(), bundle.embed_dim()],
        &f32s(bundle.embeddings()),
    )?;
    files.insert("embeddings".into(), "embeddings.bin".into());

    write_array(
        &dir.join("labels.bin"),
        &[bundle.n_samples()],
        &Payload::U32(bundle.labels().to_vec()),
    )?;
    files.insert("labels".into(), "labels.bin".into());

    if let Some(pt) = bundle.prob_trace() {
        write_array(
            &dir.join("prob_trace.bin"),
            &[
                bundle.n_runs(),
                bundle.n_epochs(),
                bundle.n_samples(),
                bundle.n_classes(),
            ],
            &f32s(pt),
        )?;
        files.insert("prob_trace".into(), "prob_trace.bin".into());
    }
    if let Some(lt) = bundle.loss_trace() {
        write_array(
            &dir.join("loss_trace.bin"),
            &[bundle.n_runs(), bundle.n_epochs(), bundle.n_samples()],
            &f32s(lt),
        )?;
        files.insert("loss_trace".into(), "loss_trace.bin".into());
    }
    if let Some(head) = bundle.head() {
        write_array(
            &dir.join("head_weight.bin"),
            &[bundle.n_classes(), bundle.embed_dim()],
            &f32s(&head.weight),
        )?;
        write_array(&dir.join("head_bias.bin"), &[bundle.n_classes()], &f32s(&head.bias))?;
        files.insert("head_weight".into(), "head_weight.bin".into());
        files.insert("head_bias".into(), "head_bias.bin".into());
    }
    write_array(
        &dir.join("pool_tags.bin"),
        &[bundle.n_samples()],
        &Payload::U32(bundle.pool_tags().iter().map(|t| t.as_u32()).collect()),
    )?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        n_samples: bundle.n_samples(),
        n_classes: bundle.n_classes(),
        embed_dim: bundle.embed_dim(),
        n_runs: bundle.n_runs(),
        n_epochs: bundle.n_epochs(),
        files,
        pool_tag_file: "pool_tags.bin".into(),
        provenance,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch {
            path: dir.join("manifest.json"),
            version: manifest.format_version,
        });
    }
    Ok(manifest)
}

/// Loads without the invariant re-validation (used by `validate`, which
/// reports violations as data rather than failing).
pub fn load_bundle_unchecked(dir: &Path) -> Result<DatasetBundle> {
    let manifest = read_manifest(dir)?;
    let file_path = |key: &str| -> Result<PathBuf> {
        manifest
            .files
            .get(key)
            .map(|name| dir.join(name))
            .ok_or_else(|| FormatError::Manifest(format!("missing file table entry {key}")))
    };

    let emb_path = file_path("embeddings")?;
    let (dims, payload) = read_array(&emb_path)?;
    expect_dims(&emb_path, &dims, &[manifest.n_samples, manifest.embed_dim])?;
    let embeddings = match payload {
        Payload::F32(v) => v.into_iter().map(f64::from).collect(),
        _ => return Err(FormatError::ShapeMismatch("embeddings must be f32".into())),
    };

    let lab_path = file_path("labels")?;
    let (dims, payload) = read_array(&lab_path)?;
    expect_dims(&lab_path, &dims, &[manifest.n_samples])?;
    let labels = match payload {
        Payload::U32(v) => v,
        _ => return Err(FormatError::ShapeMismatch("labels must be u32".into())),
    };

    let prob_trace = if manifest.files.contains_key("prob_trace") {
        let path = file_path("prob_trace")?;
        let (dims, payload) = read_array(&path)?;
        expect_dims(
            &path,
            &dims,
            &[
                manifest.n_runs,
                manifest.n_epochs,
                manifest.n_samples,
                manifest.n_classes,
            ],
        )?;
        match payload {
            Payload::F32(v) => Some(v.into_iter().map(f64::from).collect()),
            _ => return Err(FormatError::ShapeMismatch("prob_trace must be f32".into())),
        }
    } else {
        None
    };

    let loss_trace = if manifest.files.contains_key("loss_trace") {
        let path = file_path("loss_trace")?;
        let (dims, payload) = read_array(&path)?;
        expect_dims(
            &path,
            &dims,
            &[manifest.n_runs, manifest.n_epochs, manifest.n_samples],
        )?;
        match payload {
            Payload::F32(v) => Some(v.into_iter().map(f64::from).collect()),
            _ => return Err(FormatError::ShapeMismatch("loss_trace must be f32".into())),
        }
    } else {
        None
    };

    let head = if manifest.files.contains_key("head_weight") {
        let wpath = file_path("head_weight")?;
        let (dims, payload) = read_array(&wpath)?;
        expect_dims(&wpath, &dims, &[manifest.n_classes, manifest.embed_dim])?;
        let weight: Vec<f64> = match payload {
            Payload::F32(v) => v.into_iter().map(f64::from).collect(),
            _ => return Err(FormatError::ShapeMismatch("head_weight must be f32".into())),
        };
        let bpath = file_path("head_bias")?;
        let (dims, payload) = read_array(&bpath)?;
        expect_dims(&bpath, &dims, &[manifest.n_classes])?;
        let bias: Vec<f64> = match payload {
            Payload::F32(v) => v.into_iter().map(f64::from).collect(),
            _ => return Err(FormatError::ShapeMismatch("head_bias must be f32".into())),
        };
        Some(LinearHead { weight, bias })
    } else {
        None
    };

    let tag_path = dir.join(&manifest.pool_tag_file);
    let (dims, payload) = read_array(&tag_path)?;
    expect_dims(&tag_path, &dims, &[manifest.n_samples])?;
    let raw_tags = match payload {
        Payload::U32(v) => v,
        _ => return Err(FormatError::ShapeMismatch("pool tags must be u32".into())),
    };
    let mut pool_tags = Vec::with_capacity(raw_tags.len());
    for (sample, &value) in raw_tags.iter().enumerate() {
        pool_tags.push(PoolTag::from_u32(value).ok_or(FormatError::BadPoolTag { sample, value })?);
    }

    DatasetBundle::new(
        manifest.n_classes,
        manifest.embed_dim,
        manifest.n_runs,
        manifest.n_epochs,
        embeddings,
        labels,
        prob_trace,
        loss_trace,
        head,
        pool_tags,
    )
    .map_err(|e| FormatError::ShapeMismatch(e.to_string()))
}

/// Loads a bundle and re-validates every invariant; violations are an error.
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let bundle = load_bundle_unchecked(dir)?;
    let violations = validate_bundle(&bundle);
    if !violations.is_empty() {
        return Err(FormatError::InvariantViolations(
            violations.iter().map(|v| v.to_string()).collect(),
        ));
    }
    Ok(bundle)
}

/// FNV-1a 64 over the manifest bytes and every referenced array file, in
/// sorted file-name order. Identifies a bundle in replay stanzas.
pub fn bundle_hash(dir: &Path) -> Result<String> {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    let mut hash = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    };
    let manifest = read_manifest(dir)?;
    feed(&fs::read(dir.join("manifest.json"))?);
    let mut names: Vec<&String> = manifest.files.values().collect();
    names.push(&manifest.pool_tag_file);
    names.sort();
    names.dedup();
    for name in names {
        feed(&fs::read(dir.join(name))?);
    }
    Ok(format!("{hash:016x}"))
}

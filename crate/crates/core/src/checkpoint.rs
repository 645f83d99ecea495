//! Versioned model container.
//!
//! Layout: a UTF-8 manifest of `key=value` lines ending with
//! `end_manifest`, then every tensor as raw little-endian `f64` in manifest
//! order.
//!
//! ```text
//! firecast-checkpoint
//! format_version=1
//! kind=baseline
//! config={"input_dim":20,...}
//! seed=7
//! threshold=0.5
//! log_digest=<sha256 hex>
//! tensor=baseline.fc0.weight 20,256
//! ...
//! tensor=standardizer.std 20
//! payload_sha256=<sha256 hex of everything after the manifest>
//! end_manifest
//! ```
//!
//! Loading rebuilds the architecture from `kind` and `config`, then checks
//! the manifest's tensor list against it before reading any payload.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::models::{init_baseline, BaselineConfig, HybridConfig, HybridModel, Model};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "firecast-checkpoint";
const END: &str = "end_manifest";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub standardizer: Standardizer,
    pub seed: u64,
    pub threshold: f64,
    pub log_digest: String,
}

fn config_json(model: &Model) -> String {
    match model {
        Model::Baseline(m) => serde_json::to_string(&m.config),
        Model::Hybrid(m) => serde_json::to_string(&m.config),
    }
    .expect("configs serialize")
}

fn blocks(c: &Checkpoint) -> Vec<(String, Vec<usize>, &[f64])> {
    let mut out: Vec<_> = c
        .model
        .store()
        .entries()
        .iter()
        .map(|e| (e.name.clone(), e.tensor.shape().to_vec(), e.tensor.data()))
        .collect();
    let w = c.standardizer.width();
    out.push(("standardizer.mean".into(), vec![w], &c.standardizer.mean[..]));
    out.push(("standardizer.std".into(), vec![w], &c.standardizer.std[..]));
    out
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn to_bytes(c: &Checkpoint) -> Vec<u8> {
    let blocks = blocks(c);
    let mut payload = Vec::new();
    for (_, _, data) in &blocks {
        for v in data.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut m = format!(
        "{MAGIC}\nformat_version={FORMAT_VERSION}\nkind={}\nconfig={}\nseed={}\nthreshold={:?}\nlog_digest={}\n",
        c.model.kind(),
        config_json(&c.model),
        c.seed,
        c.threshold,
        c.log_digest
    );
    for (name, shape, _) in &blocks {
        m += &format!("tensor={name} {}\n", shape_text(shape));
    }
    m += &format!("payload_sha256={}\n{END}\n", hex::encode(Sha256::digest(&payload)));
    let mut bytes = m.into_bytes();
    bytes.extend(payload);
    bytes
}

pub fn save(path: &Path, c: &Checkpoint) -> Result<()> {
    std::fs::write(path, to_bytes(c)).map_err(|e| Error::io(path, e))
}

struct Manifest<'a> {
    fields: Vec<(&'a str, &'a str)>,
    tensors: Vec<(&'a str, &'a str)>,
}

impl<'a> Manifest<'a> {
    fn get(&self, key: &str) -> Result<&'a str> {
        self.fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Manifest(format!("missing key {key}")))
    }
}

fn split_manifest(bytes: &[u8]) -> Result<(Manifest<'_>, &[u8])> {
    let marker = format!("\n{END}\n");
    let at = bytes
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or_else(|| Error::Integrity("manifest terminator not found".into()))?;
    let text = std::str::from_utf8(&bytes[..at]).map_err(|_| Error::Manifest("manifest is not UTF-8".into()))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Manifest("not a checkpoint file".into()));
    }
    let mut m = Manifest { fields: Vec::new(), tensors: Vec::new() };
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Manifest(format!("malformed line {line:?}")))?;
        if k == "tensor" {
            let (name, shape) = v
                .split_once(' ')
                .ok_or_else(|| Error::Manifest(format!("malformed tensor line {line:?}")))?;
            m.tensors.push((name, shape));
        } else {
            m.fields.push((k, v));
        }
    }
    Ok((m, &bytes[at + marker.len()..]))
}

fn parse<T: std::str::FromStr>(m: &Manifest<'_>, key: &str) -> Result<T> {
    m.get(key)?
        .parse()
        .map_err(|_| Error::Manifest(format!("bad value for {key}")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let (m, payload) = split_manifest(bytes)?;
    let version = m.get("format_version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::Version { found: version.to_string(), expected: FORMAT_VERSION });
    }
    let seed: u64 = parse(&m, "seed")?;
    let config = m.get("config")?;
    let bad_config = |e: serde_json::Error| Error::Manifest(format!("config: {e}"));
    let mut model = match m.get("kind")? {
        "baseline" => {
            let c: BaselineConfig = serde_json::from_str(config).map_err(bad_config)?;
            Model::Baseline(init_baseline(&c, seed)?)
        }
        "hybrid" => {
            let c: HybridConfig = serde_json::from_str(config).map_err(bad_config)?;
            Model::Hybrid(HybridModel::new(&c, seed)?)
        }
        other => return Err(Error::Manifest(format!("unknown model kind {other:?}"))),
    };

    let entries = model.store().len();
    if m.tensors.len() != entries + 2 {
        return Err(Error::Manifest(format!("{} tensors listed, model has {}", m.tensors.len(), entries + 2)));
    }
    let mut expected: Vec<(String, Vec<usize>)> = model
        .store()
        .entries()
        .iter()
        .map(|e| (e.name.clone(), e.tensor.shape().to_vec()))
        .collect();
    let width = m.tensors[entries].1.parse().map_err(|_| Error::Manifest("standardizer width".into()))?;
    expected.push(("standardizer.mean".into(), vec![width]));
    expected.push(("standardizer.std".into(), vec![width]));
    for ((name, shape), (want_name, want_shape)) in m.tensors.iter().zip(&expected) {
        if *name != want_name || *shape != shape_text(want_shape) {
            return Err(Error::Manifest(format!(
                "tensor {name} [{shape}] does not match {want_name} [{}]",
                shape_text(want_shape)
            )));
        }
    }

    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(Error::Integrity(format!("payload is {} bytes, expected {}", payload.len(), total * 8)));
    }
    if hex::encode(Sha256::digest(payload)) != m.get("payload_sha256")? {
        return Err(Error::Integrity("payload checksum mismatch".into()));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let ids: Vec<_> = model.store().ids().collect();
    for id in ids {
        let n = model.store().get(id).numel();
        model.store_mut().set_values(id, &take(n))?;
    }
    let standardizer = Standardizer { mean: take(width), std: take(width) };
    Ok(Checkpoint {
        model,
        standardizer,
        seed,
        threshold: parse(&m, "threshold")?,
        log_digest: m.get("log_digest")?.to_string(),
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

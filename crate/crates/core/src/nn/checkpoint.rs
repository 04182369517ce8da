use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layers::{Activation, LayerSpec};
use super::network::Network;
use super::train::TargetScaler;

pub const MAGIC: &[u8; 4] = b"DCNN";
pub const VERSION: u32 = 1;

const FLAG_VARIATIONAL: u32 = 1;

/// JSON sidecar of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub variational: bool,
    pub architecture: Vec<LayerSpec>,
    pub input_shape: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub prior_sigma: Option<f64>,
    #[serde(default)]
    pub obs_sigma: Option<f64>,
    #[serde(default)]
    pub target_scaler: Option<TargetScaler>,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Layer table plus one buffer set (deterministic) or two (`mu`, `rho`).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub buffers: Vec<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn deterministic(net: &Network, seed: u64, config: serde_json::Value) -> Self {
        Self {
            meta: CheckpointMeta {
                format: "DCNN".into(),
                version: VERSION,
                variational: false,
                architecture: net.specs().to_vec(),
                input_shape: net.input_shape().to_vec(),
                seed,
                prior_sigma: None,
                obs_sigma: None,
                target_scaler: None,
                config,
            },
            buffers: vec![net.params().to_vec()],
        }
    }

    pub fn network(&self) -> Result<Network> {
        Network::from_params(
            self.meta.architecture.clone(),
            self.meta.input_shape.clone(),
            self.buffers[0].clone(),
        )
    }

    pub fn n_scalars(&self) -> usize {
        self.buffers.iter().flatten().map(Vec::len).sum()
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.meta;
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        put_u32(&mut b, VERSION);
        put_u32(&mut b, if m.variational { FLAG_VARIATIONAL } else { 0 });
        put_u32(&mut b, m.input_shape.len() as u32);
        for &d in &m.input_shape {
            put_u32(&mut b, d as u32);
        }
        put_u32(&mut b, m.architecture.len() as u32);
        for spec in &m.architecture {
            let (kind, act, dims, x) = encode(spec);
            b.push(kind);
            b.push(act);
            for d in dims {
                put_u32(&mut b, d as u32);
            }
            b.extend_from_slice(&x.to_le_bytes());
            b.extend_from_slice(&(spec.param_len() as u64).to_le_bytes());
        }
        for set in &self.buffers {
            for v in set.iter().flatten() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8], meta: CheckpointMeta) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Validation("not a DCNN checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Validation(format!("unsupported checkpoint version {version}")));
        }
        let variational = r.u32()? & FLAG_VARIATIONAL != 0;
        let rank = r.u32()? as usize;
        let input_shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        let mut lens = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let kind = r.take(1)?[0];
            let act = r.take(1)?[0];
            let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
            let x = r.f64()?;
            let n = r.u64()? as usize;
            let spec = decode(kind, act, dims, x)?;
            if spec.param_len() != n {
                return Err(Error::Validation(format!("layer table lists {n} values for {spec:?}")));
            }
            layers.push(spec);
            lens.push(n);
        }
        let sets = if variational { 2 } else { 1 };
        let mut buffers = Vec::with_capacity(sets);
        for _ in 0..sets {
            let set = lens
                .iter()
                .map(|&n| (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            buffers.push(set);
        }
        if r.pos != bytes.len() {
            return Err(Error::Validation(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
        }
        if meta.architecture != layers || meta.input_shape != input_shape || meta.variational != variational {
            return Err(Error::Validation("checkpoint sidecar disagrees with the layer table".into()));
        }
        Ok(Self { meta, buffers })
    }

    /// Writes the binary container to `path` and the sidecar next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        fs::write(&side, serde_json::to_vec_pretty(&self.meta)?).map_err(|e| Error::io(&side, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let meta: CheckpointMeta = serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
        Self::from_bytes(&bytes, meta)
    }
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn encode(spec: &LayerSpec) -> (u8, u8, [usize; 3], f64) {
    match *spec {
        LayerSpec::Conv1dBottleneck {
            in_channels,
            out_channels,
            kernel,
            l1_lambda,
        } => (0, 0, [in_channels, out_channels, kernel], l1_lambda),
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
        } => (1, 0, [in_channels, out_channels, kernel], 0.0),
        LayerSpec::Flatten => (2, 0, [0; 3], 0.0),
        LayerSpec::Dense { inputs, outputs } => (3, 0, [inputs, outputs, 0], 0.0),
        LayerSpec::Dropout { p } => (4, 0, [0; 3], p),
        LayerSpec::Activation { act } => (5, act.code(), [0; 3], 0.0),
    }
}

fn decode(kind: u8, act: u8, d: [usize; 3], x: f64) -> Result<LayerSpec> {
    Ok(match kind {
        0 => LayerSpec::Conv1dBottleneck {
            in_channels: d[0],
            out_channels: d[1],
            kernel: d[2],
            l1_lambda: x,
        },
        1 => LayerSpec::Conv1d {
            in_channels: d[0],
            out_channels: d[1],
            kernel: d[2],
        },
        2 => LayerSpec::Flatten,
        3 => LayerSpec::Dense {
            inputs: d[0],
            outputs: d[1],
        },
        4 => LayerSpec::Dropout { p: x },
        5 => LayerSpec::Activation {
            act: Activation::from_code(act)?,
        },
        k => return Err(Error::Validation(format!("unknown layer kind {k}"))),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Validation("truncated checkpoint".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network {
        let arch = Architecture {
            hidden: 5,
            ..Architecture::default()
        };
        Network::new(arch.layers(6, 4).unwrap(), vec![6, 4], &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn round_trips_through_disk() {
        let n = net();
        let ck = Checkpoint::deterministic(&n, 7, serde_json::json!({"lr": 0.001}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dcnn");
        ck.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.network().unwrap().params(), n.params());
        assert_eq!(&fs::read(&path).unwrap()[..4], b"DCNN");
    }

    #[test]
    fn corrupted_header_rejected() {
        let ck = Checkpoint::deterministic(&net(), 0, serde_json::Value::Null);
        let mut bytes = ck.to_bytes();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes, ck.meta.clone()).is_err());
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], ck.meta.clone()).is_err());
    }

    #[test]
    fn sidecar_must_match_table() {
        let ck = Checkpoint::deterministic(&net(), 0, serde_json::Value::Null);
        let mut meta = ck.meta.clone();
        meta.input_shape = vec![6, 5];
        assert!(Checkpoint::from_bytes(&ck.to_bytes(), meta).is_err());
    }
}

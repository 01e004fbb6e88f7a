//! Binary model checkpoints.
//!
//! Layout, all integers `u64` and all reals `f64`, little-endian:
//!
//! ```text
//! "TOMCAT01"  mode:u8 (0 unsupervised, 1 supervised)
//! K V H L
//! vocab: count, then (len, utf-8 bytes) per token
//! networks: count, then per network
//!     name, tensor count, per tensor (name, rank, dims.., data..),
//!     batch-norm momentum, batch-norm eps
//! idf: len, reals
//! config echo: len, utf-8 JSON
//! seed
//! ```
//!
//! Strings are `(len, bytes)`. Nothing may follow the seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tomcat_core::corpus::{Idf, Vocabulary};
use tomcat_core::model::{Network, NetworkKind};
use tomcat_core::ndmath::{BatchNorm, Linear, Tensor};
use tomcat_core::training::{Networks, TrainConfig};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"TOMCAT01";

const TENSOR_NAMES: [&str; 8] = [
    "hidden.weight",
    "hidden.bias",
    "norm.gamma",
    "norm.beta",
    "norm.running_mean",
    "norm.running_var",
    "output.weight",
    "output.bias",
];

/// JSON echo of how a model was trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub config: TrainConfig,
    /// Ingested data directory the model was trained on, if any.
    pub data_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub nets: Networks,
    /// Inverse document frequencies of the training corpus, reused at
    /// inference so unseen documents get the same weighting.
    pub idf: Idf,
    pub echo: ConfigEcho,
}

impl Checkpoint {
    pub fn supervised(&self) -> bool {
        self.nets.classifier.is_some()
    }

    pub fn topics(&self) -> usize {
        self.nets.topics()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.bytes(&[u8::from(self.supervised())]);
        for d in [self.nets.topics(), self.vocab.len(), self.nets.hidden(), self.nets.classes()] {
            w.u64(d as u64);
        }
        w.u64(self.vocab.len() as u64);
        for t in self.vocab.tokens() {
            w.str(t);
        }
        let nets: Vec<&Network> = self.nets.iter().collect();
        w.u64(nets.len() as u64);
        for net in nets {
            w.str(net.kind().name());
            let tensors = net.tensors();
            w.u64(tensors.len() as u64);
            for (name, t) in tensors {
                w.str(name);
                w.u64(t.rank() as u64);
                for &d in t.shape() {
                    w.u64(d as u64);
                }
                t.data().iter().for_each(|&v| w.f64(v));
            }
            w.f64(net.norm.momentum);
            w.f64(net.norm.eps);
        }
        w.u64(self.idf.weights().len() as u64);
        self.idf.weights().iter().for_each(|&v| w.f64(v));
        w.str(&serde_json::to_string(&self.echo).expect("config serializes"));
        w.u64(self.echo.config.seed);
        w.out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { rest: bytes };
        if r.take(MAGIC.len())? != MAGIC {
            return Err("bad magic".into());
        }
        let supervised = match r.take(1)?[0] {
            0 => false,
            1 => true,
            m => return Err(format!("unknown mode {m}")),
        };
        let (k, v, h, l) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        if supervised != (l > 0) {
            return Err(format!("mode {} with {l} classes", u8::from(supervised)));
        }

        let n_tokens = r.usize()?;
        if n_tokens != v {
            return Err(format!("vocabulary of {n_tokens} tokens, header says {v}"));
        }
        let tokens = (0..n_tokens).map(|_| r.str()).collect::<std::result::Result<Vec<_>, _>>()?;
        let vocab = Vocabulary::new(tokens).map_err(|e| e.to_string())?;

        let expected = [
            (NetworkKind::Encoder, v, k),
            (NetworkKind::Generator, k, v),
            (NetworkKind::CriticX, v, 1),
            (NetworkKind::CriticZ, k, 1),
            (NetworkKind::Classifier, k, l),
        ];
        let count = if supervised { 5 } else { 4 };
        if r.usize()? != count {
            return Err("wrong network count".into());
        }
        let mut nets = Vec::with_capacity(count);
        for &(kind, inputs, outputs) in &expected[..count] {
            nets.push(read_network(&mut r, kind, inputs, h, outputs)?);
        }

        let idf_len = r.usize()?;
        if idf_len != v {
            return Err(format!("idf of length {idf_len}, vocabulary {v}"));
        }
        let idf = Idf::from_weights(r.f64s(idf_len)?);
        let echo: ConfigEcho = serde_json::from_str(&r.str()?).map_err(|e| format!("config echo: {e}"))?;
        let seed = r.u64()?;
        if !r.rest.is_empty() {
            return Err(format!("{} trailing bytes", r.rest.len()));
        }
        let c = &echo.config;
        if c.topics != k || c.hidden != h || c.supervised != supervised || c.seed != seed {
            return Err("config echo disagrees with header".into());
        }

        let mut it = nets.into_iter();
        let mut next = || it.next().expect("network count checked");
        Ok(Checkpoint {
            vocab,
            nets: Networks {
                encoder: next(),
                generator: next(),
                critic_x: next(),
                critic_z: next(),
                classifier: supervised.then(next),
            },
            idf,
            echo,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::decode(&bytes).map_err(|reason| CliError::Corrupt {
            path: path.display().to_string(),
            reason,
        })
    }
}

fn read_network(
    r: &mut Reader<'_>,
    kind: NetworkKind,
    inputs: usize,
    hidden: usize,
    outputs: usize,
) -> std::result::Result<Network, String> {
    let name = r.str()?;
    if name != kind.name() {
        return Err(format!("expected network {}, found {name}", kind.name()));
    }
    if r.usize()? != TENSOR_NAMES.len() {
        return Err(format!("{name}: wrong tensor count"));
    }
    let shapes: [&[usize]; 8] = [
        &[hidden, inputs],
        &[hidden],
        &[hidden],
        &[hidden],
        &[hidden],
        &[hidden],
        &[outputs, hidden],
        &[outputs],
    ];
    let mut tensors = Vec::with_capacity(8);
    for (tname, shape) in TENSOR_NAMES.iter().zip(shapes) {
        let found = r.str()?;
        if found != *tname {
            return Err(format!("{name}: expected tensor {tname}, found {found}"));
        }
        let rank = r.usize()?;
        if rank != shape.len() {
            return Err(format!("{name}.{tname}: rank {rank}"));
        }
        let dims = (0..rank).map(|_| r.usize()).collect::<std::result::Result<Vec<_>, _>>()?;
        if dims != shape {
            return Err(format!("{name}.{tname}: shape {dims:?}, expected {shape:?}"));
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| format!("{name}.{tname}: size overflows"))?;
        let data = r.f64s(len)?;
        tensors.push(Tensor::new(dims, data).map_err(|e| e.to_string())?);
    }
    let momentum = r.f64()?;
    let eps = r.f64()?;
    if tensors[5].data().iter().any(|&v| v < 0.0) {
        return Err(format!("{name}: negative running variance"));
    }
    let mut t = tensors.into_iter();
    let mut next = || t.next().expect("eight tensors");
    let hidden_layer = Linear {
        weight: next(),
        bias: next(),
    };
    let norm = BatchNorm {
        gamma: next(),
        beta: next(),
        running_mean: next(),
        running_var: next(),
        momentum,
        eps,
    };
    let output = Linear {
        weight: next(),
        bias: next(),
    };
    Network::from_parts(kind, hidden_layer, norm, output).map_err(|e| e.to_string())
}

#[derive(Default)]
struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.out.extend_from_slice(b);
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }
}

struct Reader<'a> {
    rest: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if n > self.rest.len() {
            return Err("truncated".into());
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "length overflows".to_string())
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("length overflows")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn str(&mut self) -> std::result::Result<String, String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid utf-8".to_string())
    }
}

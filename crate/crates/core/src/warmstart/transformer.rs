//! Transformer encoder inference and the `TSCX` weights container.
//!
//! Tensor names follow the PyTorch module layout used by the trainer:
//! `encoder.*`, `pos_embedding`, `layers.{i}.self_attn.*`, `layers.{i}.linear{1,2}.*`,
//! `layers.{i}.norm{1,2}.*`, `decoder.*`, plus standardization tensors and a
//! `meta` tensor `[heads, norm_first, layer_norm_eps]`.
//!
//! File layout, little-endian: `TSCX`, u32 version, u32 tensor count, then
//! per tensor u32 name length, utf8 name, u8 dtype (0 = f32), u32 rank, u32
//! dims, u64 offset from the start of the payload section, u32 crc32 of the
//! tensor bytes; then the payload.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TSCX";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// Row-wise softmax of `q k^T / sqrt(d_k)` applied to `v`.
pub fn attention(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>, d_k: usize) -> Result<DMatrix<f64>> {
    let weights = attention_weights(q, k, d_k)?;
    if weights.ncols() != v.nrows() {
        return Err(Error::ShapeMismatch(format!("{} keys but {} values", k.nrows(), v.nrows())));
    }
    Ok(weights * v)
}

/// The softmax matrix of [`attention`] before multiplying by the values.
pub fn attention_weights(q: &DMatrix<f64>, k: &DMatrix<f64>, d_k: usize) -> Result<DMatrix<f64>> {
    if q.ncols() != k.ncols() {
        return Err(Error::ShapeMismatch(format!("query width {} vs key width {}", q.ncols(), k.ncols())));
    }
    if d_k == 0 {
        return Err(Error::ShapeMismatch("d_k must be positive".into()));
    }
    let mut scores = q * k.transpose() / (d_k as f64).sqrt();
    for mut row in scores.row_iter_mut() {
        let max = row.max();
        row.apply(|s| *s = (*s - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!("dims {dims:?} hold {} values", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self { dims, data: vec![0.0; n] }
    }

    fn bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        match self.dims.as_slice() {
            [r, c] => Ok(DMatrix::from_row_iterator(*r, *c, self.data.iter().map(|&v| v as f64))),
            _ => Err(Error::Weights(format!("{name}: expected a matrix, got dims {:?}", self.dims))),
        }
    }

    fn vector(&self, name: &str) -> Result<DVector<f64>> {
        match self.dims.as_slice() {
            [n] => Ok(DVector::from_iterator(*n, self.data.iter().map(|&v| v as f64))),
            _ => Err(Error::Weights(format!("{name}: expected a vector, got dims {:?}", self.dims))),
        }
    }
}

/// Ordered collection of named tensors, stored in the `TSCX` format:
/// magic, u32 version, u32 tensor count, then per tensor a directory entry
/// (u32 name length, utf8 name, u8 dtype, u32 rank, u32 dims, u64 payload
/// offset, u32 crc32), followed by the little-endian f32 payload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: Vec<(String, Tensor)>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Weights(format!("missing tensor {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|(n, _)| n == name)
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.tensors.push((name, tensor)),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        let mut offset = 0u64;
        let payloads: Vec<Vec<u8>> = self.tensors.iter().map(|(_, t)| t.bytes()).collect();
        for ((name, t), bytes) in self.tensors.iter().zip(&payloads) {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&[DTYPE_F32])?;
            out.write_all(&(t.dims.len() as u32).to_le_bytes())?;
            for &d in &t.dims {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            out.write_all(&offset.to_le_bytes())?;
            out.write_all(&crc32fast::hash(bytes).to_le_bytes())?;
            offset += bytes.len() as u64;
        }
        for bytes in &payloads {
            out.write_all(bytes)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Parses and verifies every tensor checksum.
    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Weights(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Weights("bad magic, not a TSCX file".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Weights(format!("unsupported version {version}")));
        }
        let count = cur.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::Weights("tensor name is not utf8".into()))?
                .to_string();
            let dtype = cur.take(1)?[0];
            if dtype != DTYPE_F32 {
                return Err(Error::Weights(format!("{name}: unsupported dtype {dtype}")));
            }
            let rank = cur.u32()? as usize;
            let dims = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let offset = cur.u64()? as usize;
            let crc = cur.u32()?;
            entries.push((name, dims, offset, crc));
        }
        let payload = &bytes[cur.pos..];
        let mut tensors = Vec::with_capacity(count);
        for (name, dims, offset, crc) in entries {
            let n: usize = dims.iter().product();
            let chunk = payload
                .get(offset..offset + 4 * n)
                .ok_or_else(|| Error::Weights(format!("{name}: payload truncated")))?;
            if crc32fast::hash(chunk) != crc {
                return Err(Error::Weights(format!("{name}: checksum mismatch")));
            }
            let data = chunk.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push((name, Tensor { dims, data }));
        }
        Ok(Self { tensors })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let out = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Weights(format!("unexpected end of file at byte {}", self.pos)))?;
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[derive(Debug, Clone)]
struct Linear {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl Linear {
    fn load(file: &TensorFile, prefix: &str) -> Result<Self> {
        let w = file.get(&format!("{prefix}.weight"))?.matrix(prefix)?;
        let b = file.get(&format!("{prefix}.bias"))?.vector(prefix)?;
        if b.len() != w.nrows() {
            return Err(Error::Weights(format!("{prefix}: bias length {} vs {} rows", b.len(), w.nrows())));
        }
        Ok(Self { w, b })
    }

    fn inputs(&self) -> usize {
        self.w.ncols()
    }

    fn outputs(&self) -> usize {
        self.w.nrows()
    }

    /// Applies the map to every row of `x`.
    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * self.w.transpose();
        for mut row in y.row_iter_mut() {
            row += self.b.transpose();
        }
        y
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gamma: DVector<f64>,
    beta: DVector<f64>,
    eps: f64,
}

impl LayerNorm {
    fn load(file: &TensorFile, prefix: &str, eps: f64) -> Result<Self> {
        Ok(Self {
            gamma: file.get(&format!("{prefix}.weight"))?.vector(prefix)?,
            beta: file.get(&format!("{prefix}.bias"))?.vector(prefix)?,
            eps,
        })
    }

    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        let d = x.ncols() as f64;
        for mut row in y.row_iter_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + self.eps).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gamma[j] + self.beta[j];
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    in_proj: Linear,
    out_proj: Linear,
    linear1: Linear,
    linear2: Linear,
    norm1: LayerNorm,
    norm2: LayerNorm,
}

impl EncoderLayer {
    fn self_attention(&self, x: &DMatrix<f64>, heads: usize) -> Result<DMatrix<f64>> {
        let d = x.ncols();
        let qkv = self.in_proj.forward(x);
        let d_k = d / heads;
        let mut concat = DMatrix::zeros(x.nrows(), d);
        for h in 0..heads {
            let q = qkv.columns(h * d_k, d_k).into_owned();
            let k = qkv.columns(d + h * d_k, d_k).into_owned();
            let v = qkv.columns(2 * d + h * d_k, d_k).into_owned();
            concat.columns_mut(h * d_k, d_k).copy_from(&attention(&q, &k, &v, d_k)?);
        }
        Ok(self.out_proj.forward(&concat))
    }

    fn feed_forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut hidden = self.linear1.forward(x);
        hidden.apply(|v| *v = v.max(0.0));
        self.linear2.forward(&hidden)
    }

    fn forward(&self, x: &DMatrix<f64>, heads: usize, norm_first: bool) -> Result<DMatrix<f64>> {
        if norm_first {
            let x = x + self.self_attention(&self.norm1.forward(x), heads)?;
            Ok(&x + self.feed_forward(&self.norm2.forward(&x)))
        } else {
            let x = self.norm1.forward(&(x + self.self_attention(x, heads)?));
            Ok(self.norm2.forward(&(&x + self.feed_forward(&x))))
        }
    }
}

/// Per-component affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], std: vec![1.0; width] }
    }

    /// Fits mean and unbiased (n - 1) std per column. Constant
    /// columns get unit std so they map to zero instead of NaN.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let width = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for row in rows {
            if row.len() != width {
                return Err(Error::ShapeMismatch(format!("row of width {} in a width {width} table", row.len())));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; width];
        for row in rows {
            for j in 0..width {
                std[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let denom = (n - 1.0).max(1.0);
        for s in &mut std {
            *s = (*s / denom).sqrt();
            if *s < 1e-12 || !s.is_finite() {
                *s = 1.0;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }

    fn from_tensors(file: &TensorFile, prefix: &str, width: usize) -> Result<Self> {
        let mean_name = format!("{prefix}_mean");
        if !file.contains(&mean_name) {
            return Ok(Self::identity(width));
        }
        let mean: Vec<f64> = file.get(&mean_name)?.data.iter().map(|&v| v as f64).collect();
        let std: Vec<f64> = file.get(&format!("{prefix}_std"))?.data.iter().map(|&v| v as f64).collect();
        if mean.len() != width || std.len() != width {
            return Err(Error::Weights(format!("{prefix} standardization has width {} but the model uses {width}", mean.len())));
        }
        if std.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::Weights(format!("{prefix}_std has non-positive entries")));
        }
        Ok(Self { mean, std })
    }
}

/// Transformer encoder with linear input and output maps and a learned
/// position encoding. Dropout is an identity at inference.
#[derive(Debug, Clone)]
pub struct Transformer {
    encoder: Linear,
    pos: DMatrix<f64>,
    layers: Vec<EncoderLayer>,
    decoder: Linear,
    heads: usize,
    norm_first: bool,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
}

impl Transformer {
    pub fn from_tensors(file: &TensorFile) -> Result<Self> {
        let meta = &file.get("meta")?.data;
        if meta.len() < 3 {
            return Err(Error::Weights("meta tensor needs [heads, norm_first, eps]".into()));
        }
        let heads = meta[0] as usize;
        let norm_first = meta[1] != 0.0;
        let eps = meta[2] as f64;
        let encoder = Linear::load(file, "encoder")?;
        let d = encoder.outputs();
        if heads == 0 || d % heads != 0 {
            return Err(Error::Weights(format!("embed dim {d} is not divisible by {heads} heads")));
        }
        let pos = file.get("pos_embedding")?.matrix("pos_embedding")?;
        if pos.ncols() != d {
            return Err(Error::Weights(format!("position encoding width {} vs embed dim {d}", pos.ncols())));
        }
        let mut layers = Vec::new();
        while file.contains(&format!("layers.{}.self_attn.in_proj_weight", layers.len())) {
            let p = format!("layers.{}", layers.len());
            let in_proj = Linear {
                w: file.get(&format!("{p}.self_attn.in_proj_weight"))?.matrix(&p)?,
                b: file.get(&format!("{p}.self_attn.in_proj_bias"))?.vector(&p)?,
            };
            let layer = EncoderLayer {
                in_proj,
                out_proj: Linear::load(file, &format!("{p}.self_attn.out_proj"))?,
                linear1: Linear::load(file, &format!("{p}.linear1"))?,
                linear2: Linear::load(file, &format!("{p}.linear2"))?,
                norm1: LayerNorm::load(file, &format!("{p}.norm1"), eps)?,
                norm2: LayerNorm::load(file, &format!("{p}.norm2"), eps)?,
            };
            let shapes_ok = layer.in_proj.w.shape() == (3 * d, d)
                && layer.in_proj.b.len() == 3 * d
                && layer.out_proj.w.shape() == (d, d)
                && layer.linear1.inputs() == d
                && layer.linear2.inputs() == layer.linear1.outputs()
                && layer.linear2.outputs() == d
                && layer.norm1.gamma.len() == d
                && layer.norm2.gamma.len() == d;
            if !shapes_ok {
                return Err(Error::Weights(format!("{p}: tensor shapes disagree with embed dim {d}")));
            }
            layers.push(layer);
        }
        let decoder = Linear::load(file, "decoder")?;
        if decoder.inputs() != d {
            return Err(Error::Weights(format!("decoder input {} vs embed dim {d}", decoder.inputs())));
        }
        let input_norm = Standardizer::from_tensors(file, "input", encoder.inputs())?;
        let output_norm = Standardizer::from_tensors(file, "output", decoder.outputs())?;
        Ok(Self { encoder, pos, layers, decoder, heads, norm_first, input_norm, output_norm })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&TensorFile::load(path)?)
    }

    pub fn input_width(&self) -> usize {
        self.encoder.inputs()
    }

    pub fn output_width(&self) -> usize {
        self.decoder.outputs()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.outputs()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn max_tokens(&self) -> usize {
        self.pos.nrows()
    }

    /// Raw outputs for a sequence of already standardized tokens (one per row).
    pub fn forward_raw(&self, tokens: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if tokens.ncols() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "token width {} but the model expects {}",
                tokens.ncols(),
                self.input_width()
            )));
        }
        if tokens.nrows() == 0 || tokens.nrows() > self.max_tokens() {
            return Err(Error::ShapeMismatch(format!("{} tokens, model supports 1..={}", tokens.nrows(), self.max_tokens())));
        }
        let mut x = self.encoder.forward(tokens) + self.pos.rows(0, tokens.nrows());
        for layer in &self.layers {
            x = layer.forward(&x, self.heads, self.norm_first)?;
        }
        Ok(self.decoder.forward(&x))
    }

    /// Standardizes one raw input, runs it as a single token and maps the
    /// output back to label units.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::ShapeMismatch(format!("input width {} but the model expects {}", input.len(), self.input_width())));
        }
        let z = self.input_norm.apply(input);
        let out = self.forward_raw(&DMatrix::from_row_slice(1, z.len(), &z))?;
        let raw: Vec<f64> = out.row(0).iter().copied().collect();
        Ok(self.output_norm.invert(&raw))
    }
}

/// Randomly initialized weights with the trainer's tensor layout; used by
/// tests and for producing placeholder files.
pub fn random_weights(
    input: usize,
    output: usize,
    embed: usize,
    heads: usize,
    layers: usize,
    ff: usize,
    max_tokens: usize,
    seed: u64,
) -> TensorFile {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut file = TensorFile::default();
    let mut mat = |file: &mut TensorFile, name: String, r: usize, c: usize| {
        let scale = 1.0 / (c as f32).sqrt();
        let data = (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect();
        file.insert(name, Tensor { dims: vec![r, c], data });
    };
    let ones = |n: usize| Tensor { dims: vec![n], data: vec![1.0; n] };
    let zeros = |n: usize| Tensor::zeros(vec![n]);
    file.insert("meta", Tensor { dims: vec![3], data: vec![heads as f32, 1.0, 1e-5] });
    mat(&mut file, "encoder.weight".into(), embed, input);
    file.insert("encoder.bias", zeros(embed));
    mat(&mut file, "pos_embedding".into(), max_tokens, embed);
    for l in 0..layers {
        let p = format!("layers.{l}");
        mat(&mut file, format!("{p}.self_attn.in_proj_weight"), 3 * embed, embed);
        file.insert(format!("{p}.self_attn.in_proj_bias"), zeros(3 * embed));
        mat(&mut file, format!("{p}.self_attn.out_proj.weight"), embed, embed);
        file.insert(format!("{p}.self_attn.out_proj.bias"), zeros(embed));
        mat(&mut file, format!("{p}.linear1.weight"), ff, embed);
        file.insert(format!("{p}.linear1.bias"), zeros(ff));
        mat(&mut file, format!("{p}.linear2.weight"), embed, ff);
        file.insert(format!("{p}.linear2.bias"), zeros(embed));
        for norm in ["norm1", "norm2"] {
            file.insert(format!("{p}.{norm}.weight"), ones(embed));
            file.insert(format!("{p}.{norm}.bias"), zeros(embed));
        }
    }
    mat(&mut file, "decoder.weight".into(), output, embed);
    file.insert("decoder.bias", zeros(output));
    file
}

/// Inputs and outputs recorded by the trainer for one exported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityFixture {
    pub tolerance: f64,
    pub cases: Vec<ParityCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityCase {
    /// Standardized tokens, one row per token.
    pub tokens: Vec<Vec<f64>>,
    /// Raw outputs, one row per token.
    pub logits: Vec<Vec<f64>>,
}

impl ParityFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub cases: usize,
    pub max_abs_error: f64,
    pub tolerance: f64,
}

impl ParityReport {
    pub fn passed(&self) -> bool {
        self.max_abs_error <= self.tolerance
    }
}

/// Replays every fixture case through `net` and records the largest
/// per-logit difference.
pub fn check_parity(net: &Transformer, fixture: &ParityFixture) -> Result<ParityReport> {
    let mut worst = 0.0f64;
    for (i, case) in fixture.cases.iter().enumerate() {
        let width = case.tokens.first().map_or(0, Vec::len);
        if case.tokens.iter().any(|t| t.len() != width) || case.logits.len() != case.tokens.len() {
            return Err(Error::ShapeMismatch(format!("fixture case {i} has ragged tokens or logits")));
        }
        let flat: Vec<f64> = case.tokens.concat();
        let out = net.forward_raw(&DMatrix::from_row_slice(case.tokens.len(), width, &flat))?;
        for (r, expected) in case.logits.iter().enumerate() {
            if expected.len() != out.ncols() {
                return Err(Error::ShapeMismatch(format!(
                    "fixture case {i} expects {} outputs, model gives {}",
                    expected.len(),
                    out.ncols()
                )));
            }
            for (c, e) in expected.iter().enumerate() {
                worst = worst.max((out[(r, c)] - e).abs());
            }
        }
    }
    Ok(ParityReport { cases: fixture.cases.len(), max_abs_error: worst, tolerance: fixture.tolerance })
}

/// What `verify_weights` found in one weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSummary {
    pub tensors: usize,
    pub input_width: usize,
    pub output_width: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_tokens: usize,
    pub parity: Option<ParityReport>,
}

/// Loads a weights file (every tensor checksum is verified on read), builds
/// the network and, when given, replays a parity fixture through it.
pub fn verify_weights(path: impl AsRef<Path>, fixture: Option<&Path>) -> Result<WeightsSummary> {
    let file = TensorFile::load(path)?;
    let net = Transformer::from_tensors(&file)?;
    let parity = fixture.map(|f| check_parity(&net, &ParityFixture::load(f)?)).transpose()?;
    Ok(WeightsSummary {
        tensors: file.tensors.len(),
        input_width: net.input_width(),
        output_width: net.output_width(),
        embed_dim: net.embed_dim(),
        heads: net.heads(),
        layers: net.n_layers(),
        max_tokens: net.max_tokens(),
        parity,
    })
}

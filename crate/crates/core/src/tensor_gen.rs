//! Generator inference.
//!
//! Weights come from a GANW file: a little-endian container of named f32
//! tensors, each carrying a `key=value` layer description. The forward pass
//! starts from a `latent_size x 1 x 1` volume and applies the records in file
//! order. Scores are stored as f32 and every dot product accumulates in f64
//! in a fixed order, so inference is bit-reproducible.
//!
//! [`StubDecoder`] is an analytic stand-in with the same [`Decoder`] surface,
//! used whenever no trained weights are at hand.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TileGrid;

pub const GANW_MAGIC: &[u8; 4] = b"GANW";
pub const GANW_VERSION: u32 = 1;

/// Latent input to a generator. Values are clamped into `[-1, 1]` on
/// construction; NaN becomes 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        LatentVector(
            values
                .into_iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Anything that turns a latent vector into a tile grid of a requested size.
pub trait Decoder: Send + Sync {
    fn latent_size(&self) -> usize;
    fn tileset_size(&self) -> u8;
    fn decode(&self, z: &LatentVector, width: usize, height: usize) -> Result<TileGrid>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Nonlinearity {
    None,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Nonlinearity {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "none" | "identity" | "linear" => Nonlinearity::None,
            "relu" => Nonlinearity::Relu,
            "leaky_relu" | "leakyrelu" => Nonlinearity::LeakyRelu,
            "tanh" => Nonlinearity::Tanh,
            "sigmoid" => Nonlinearity::Sigmoid,
            other => return Err(Error::Model(format!("unknown activation `{other}`"))),
        })
    }

    fn name(self) -> &'static str {
        match self {
            Nonlinearity::None => "none",
            Nonlinearity::Relu => "relu",
            Nonlinearity::LeakyRelu => "leaky_relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Sigmoid => "sigmoid",
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::None => x,
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    0.2 * x
                }
            }
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    /// Weight tensor shaped `[in, out, kernel, kernel]`.
    ConvTranspose {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    /// Per-channel additive term, shaped `[channels]`.
    Bias,
    /// Inference-mode normalization; rows are gamma, beta, running mean and
    /// running variance, shaped `[4, channels]`.
    BatchNorm { eps: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerMeta {
    pub kind: LayerKind,
    pub activation: Nonlinearity,
}

impl LayerMeta {
    /// Parses `key=value` pairs separated by `;`, `,` or whitespace.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut kernel = None;
        let mut stride = 1usize;
        let mut pad = 0usize;
        let mut eps = 1e-5f64;
        let mut activation = Nonlinearity::None;
        for pair in text
            .split(|c: char| c == ';' || c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
        {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Model(format!("layer meta entry `{pair}` lacks `=`")))?;
            let int = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Model(format!("`{key}` expects an integer, got `{v}`")))
            };
            match key {
                "kind" => kind = Some(value.to_string()),
                "kernel" => kernel = Some(int(value)?),
                "stride" => stride = int(value)?,
                "pad" => pad = int(value)?,
                "eps" => {
                    eps = value
                        .parse()
                        .map_err(|_| Error::Model(format!("bad eps `{value}`")))?
                }
                "activation" => activation = Nonlinearity::parse(value)?,
                // unknown keys are carried by exporters for documentation only
                _ => {}
            }
        }
        let kind = match kind.as_deref() {
            Some("conv_transpose") | Some("convtranspose2d") => {
                let kernel =
                    kernel.ok_or_else(|| Error::Model("conv_transpose needs `kernel`".into()))?;
                if kernel == 0 || stride == 0 {
                    return Err(Error::Model("kernel and stride must be positive".into()));
                }
                LayerKind::ConvTranspose {
                    kernel,
                    stride,
                    pad,
                }
            }
            Some("bias") => LayerKind::Bias,
            Some("batchnorm") | Some("batch_norm") => LayerKind::BatchNorm { eps },
            Some(other) => return Err(Error::Model(format!("unsupported layer kind `{other}`"))),
            None => return Err(Error::Model("layer meta lacks `kind`".into())),
        };
        Ok(LayerMeta { kind, activation })
    }
}

impl fmt::Display for LayerMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LayerKind::ConvTranspose {
                kernel,
                stride,
                pad,
            } => write!(
                f,
                "kind=conv_transpose;kernel={kernel};stride={stride};pad={pad}"
            )?,
            LayerKind::Bias => write!(f, "kind=bias")?,
            LayerKind::BatchNorm { eps } => write!(f, "kind=batchnorm;eps={eps:e}")?,
        }
        write!(f, ";activation={}", self.activation.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub meta: LayerMeta,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, meta: LayerMeta, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Corruption("tensor name is empty".into()));
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Corruption(format!("tensor `{name}` has an empty shape")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Corruption(format!(
                "tensor `{name}` declares {expected} values but holds {}",
                data.len()
            )));
        }
        Ok(Self {
            name,
            meta,
            shape,
            data,
        })
    }
}

/// Validated generator: a chain of records that maps the latent volume to an
/// `out_channels x out_height x out_width` score volume.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorWeights {
    latent_size: usize,
    out_width: usize,
    out_height: usize,
    out_channels: usize,
    records: Vec<TensorRecord>,
}

/// Channel-major score volume from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelScores {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ChannelScores {
    #[inline]
    pub fn score(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Argmax decode of the upper-left `crop_w x crop_h` region.
    pub fn to_tiles(&self, crop_w: usize, crop_h: usize) -> Result<TileGrid> {
        if crop_w == 0 || crop_h == 0 || crop_w > self.width || crop_h > self.height {
            return Err(Error::input(format!(
                "crop {crop_w}x{crop_h} exceeds output {}x{}",
                self.width, self.height
            )));
        }
        let mut tiles = Vec::with_capacity(crop_w * crop_h);
        let mut cell = vec![0f32; self.channels];
        for y in 0..crop_h {
            for x in 0..crop_w {
                for (c, s) in cell.iter_mut().enumerate() {
                    *s = self.score(c, x, y);
                }
                tiles.push(argmax(&cell) as u8);
            }
        }
        TileGrid::new(crop_w, crop_h, self.channels as u8, tiles)
    }
}

/// Index of the largest score; ties resolve to the lowest index and NaN
/// never wins.
pub fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

struct Volume {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl GeneratorWeights {
    pub fn new(
        latent_size: usize,
        out_width: usize,
        out_height: usize,
        out_channels: usize,
        records: Vec<TensorRecord>,
    ) -> Result<Self> {
        if latent_size == 0 || out_width == 0 || out_height == 0 || out_channels == 0 {
            return Err(Error::Model("header dimensions must be positive".into()));
        }
        if out_channels > u8::MAX as usize {
            return Err(Error::Model(format!("{out_channels} output channels is too many tiles")));
        }
        if records.is_empty() {
            return Err(Error::Model("generator has no layers".into()));
        }
        let mut names = std::collections::HashSet::new();
        for r in &records {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Corruption(format!("duplicate tensor name `{}`", r.name)));
            }
        }
        let weights = Self {
            latent_size,
            out_width,
            out_height,
            out_channels,
            records,
        };
        weights.check_chain()?;
        Ok(weights)
    }

    fn check_chain(&self) -> Result<()> {
        let (mut c, mut h, mut w) = (self.latent_size, 1usize, 1usize);
        let mut saw_conv = false;
        for r in &self.records {
            match r.meta.kind {
                LayerKind::ConvTranspose {
                    kernel,
                    stride,
                    pad,
                } => {
                    if r.shape.len() != 4 || r.shape[2] != kernel || r.shape[3] != kernel {
                        return Err(Error::Model(format!(
                            "`{}` must be shaped [in, out, {kernel}, {kernel}], got {:?}",
                            r.name, r.shape
                        )));
                    }
                    if r.shape[0] != c {
                        return Err(Error::Model(format!(
                            "`{}` expects {} input channels but receives {c}",
                            r.name, r.shape[0]
                        )));
                    }
                    let grow = |n: usize| ((n - 1) * stride + kernel).checked_sub(2 * pad);
                    match (grow(h), grow(w)) {
                        (Some(nh), Some(nw)) if nh > 0 && nw > 0 => {
                            h = nh;
                            w = nw;
                        }
                        _ => {
                            return Err(Error::Model(format!(
                                "`{}` padding leaves no output",
                                r.name
                            )))
                        }
                    }
                    c = r.shape[1];
                    saw_conv = true;
                }
                LayerKind::Bias => {
                    if r.shape != [c] {
                        return Err(Error::Model(format!(
                            "`{}` bias shaped {:?} but volume has {c} channels",
                            r.name, r.shape
                        )));
                    }
                }
                LayerKind::BatchNorm { .. } => {
                    if r.shape != [4, c] {
                        return Err(Error::Model(format!(
                            "`{}` normalization shaped {:?}, expected [4, {c}]",
                            r.name, r.shape
                        )));
                    }
                }
            }
        }
        if !saw_conv {
            return Err(Error::Model("generator has no transposed convolution".into()));
        }
        if (c, h, w) != (self.out_channels, self.out_height, self.out_width) {
            return Err(Error::Model(format!(
                "layers produce {c}x{h}x{w} but header declares {}x{}x{}",
                self.out_channels, self.out_height, self.out_width
            )));
        }
        Ok(())
    }

    pub fn latent_size(&self) -> usize {
        self.latent_size
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn out_height(&self) -> usize {
        self.out_height
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn records(&self) -> &[TensorRecord] {
        &self.records
    }

    /// Raw channel scores for `z`, after latent clamping.
    pub fn forward(&self, z: &LatentVector) -> Result<ChannelScores> {
        if z.len() != self.latent_size {
            return Err(Error::input(format!(
                "latent has {} values, generator expects {}",
                z.len(),
                self.latent_size
            )));
        }
        let mut vol = Volume {
            channels: self.latent_size,
            height: 1,
            width: 1,
            data: z.values().iter().map(|&v| v as f32).collect(),
        };
        for r in &self.records {
            vol = match r.meta.kind {
                LayerKind::ConvTranspose {
                    kernel,
                    stride,
                    pad,
                } => conv_transpose(&vol, r, kernel, stride, pad),
                LayerKind::Bias => {
                    let plane = vol.height * vol.width;
                    for (c, chunk) in vol.data.chunks_mut(plane).enumerate() {
                        let b = r.data[c] as f64;
                        for v in chunk {
                            *v = (*v as f64 + b) as f32;
                        }
                    }
                    vol
                }
                LayerKind::BatchNorm { eps } => {
                    let plane = vol.height * vol.width;
                    let ch = vol.channels;
                    for (c, chunk) in vol.data.chunks_mut(plane).enumerate() {
                        let gamma = r.data[c] as f64;
                        let beta = r.data[ch + c] as f64;
                        let mean = r.data[2 * ch + c] as f64;
                        let var = r.data[3 * ch + c] as f64;
                        let scale = gamma / (var + eps).sqrt();
                        for v in chunk {
                            *v = ((*v as f64 - mean) * scale + beta) as f32;
                        }
                    }
                    vol
                }
            };
            if r.meta.activation != Nonlinearity::None {
                for v in vol.data.iter_mut() {
                    *v = r.meta.activation.apply(*v as f64) as f32;
                }
            }
        }
        Ok(ChannelScores {
            channels: vol.channels,
            width: vol.width,
            height: vol.height,
            data: vol.data,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GANW_MAGIC);
        for v in [
            GANW_VERSION,
            self.latent_size as u32,
            self.out_width as u32,
            self.out_height as u32,
            self.out_channels as u32,
            self.records.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            let meta = r.meta.to_string();
            out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
            out.extend_from_slice(meta.as_bytes());
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for &d in &r.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader { bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != GANW_MAGIC {
            return Err(Error::Format("missing GANW magic".into()));
        }
        rd.pos = 4;
        let header = |rd: &mut ByteReader| rd.u32().map_err(|_| Error::Format("truncated header".into()));
        let version = header(&mut rd)?;
        if version != GANW_VERSION {
            return Err(Error::Format(format!("unsupported GANW version {version}")));
        }
        let latent_size = header(&mut rd)? as usize;
        let out_width = header(&mut rd)? as usize;
        let out_height = header(&mut rd)? as usize;
        let out_channels = header(&mut rd)? as usize;
        let count = header(&mut rd)? as usize;
        let mut records = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let name_len = rd.u32()? as usize;
            let name = String::from_utf8(rd.take(name_len)?.to_vec())
                .map_err(|_| Error::Corruption(format!("record {i} name is not UTF-8")))?;
            let meta_len = rd.u32()? as usize;
            let meta = std::str::from_utf8(rd.take(meta_len)?)
                .map_err(|_| Error::Corruption(format!("record `{name}` meta is not UTF-8")))?;
            let meta = LayerMeta::parse(meta)?;
            let rank = rd.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(rd.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Corruption(format!("`{name}` shape overflows")))?;
            let raw = rd.take(n.checked_mul(4).ok_or_else(|| {
                Error::Corruption(format!("`{name}` shape overflows"))
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            records.push(TensorRecord::new(name, meta, shape, data)?);
        }
        if rd.pos != bytes.len() {
            return Err(Error::Corruption(format!(
                "{} trailing bytes after last record",
                bytes.len() - rd.pos
            )));
        }
        GeneratorWeights::new(latent_size, out_width, out_height, out_channels, records)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corruption("file ends inside a record".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn conv_transpose(input: &Volume, rec: &TensorRecord, kernel: usize, stride: usize, pad: usize) -> Volume {
    let in_c = rec.shape[0];
    let out_c = rec.shape[1];
    let out_h = (input.height - 1) * stride + kernel - 2 * pad;
    let out_w = (input.width - 1) * stride + kernel - 2 * pad;
    let kk = kernel * kernel;
    let mut data = vec![0f32; out_c * out_h * out_w];
    // Gather form: each output cell sums over (in channel, ky, kx) in that
    // order, so the reduction order never depends on scheduling.
    for oc in 0..out_c {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0f64;
                for ic in 0..in_c {
                    let wbase = (ic * out_c + oc) * kk;
                    let ibase = ic * input.height * input.width;
                    for ky in 0..kernel {
                        let ty = oy + pad;
                        if ty < ky || !(ty - ky).is_multiple_of(stride) {
                            continue;
                        }
                        let iy = (ty - ky) / stride;
                        if iy >= input.height {
                            continue;
                        }
                        for kx in 0..kernel {
                            let tx = ox + pad;
                            if tx < kx || !(tx - kx).is_multiple_of(stride) {
                                continue;
                            }
                            let ix = (tx - kx) / stride;
                            if ix >= input.width {
                                continue;
                            }
                            acc += input.data[ibase + iy * input.width + ix] as f64
                                * rec.data[wbase + ky * kernel + kx] as f64;
                        }
                    }
                }
                data[(oc * out_h + oy) * out_w + ox] = acc as f32;
            }
        }
    }
    Volume {
        channels: out_c,
        height: out_h,
        width: out_w,
        data,
    }
}

pub fn load_generator_weights(path: impl AsRef<Path>) -> Result<GeneratorWeights> {
    GeneratorWeights::from_bytes(&fs::read(path)?)
}

/// Runs the generator on `z` and argmax-decodes the upper-left crop.
pub fn generate_segment(
    weights: &GeneratorWeights,
    z: &LatentVector,
    crop_w: usize,
    crop_h: usize,
) -> Result<TileGrid> {
    if crop_w > weights.out_width || crop_h > weights.out_height {
        return Err(Error::input(format!(
            "crop {crop_w}x{crop_h} exceeds output {}x{}",
            weights.out_width, weights.out_height
        )));
    }
    weights.forward(z)?.to_tiles(crop_w, crop_h)
}

impl Decoder for GeneratorWeights {
    fn latent_size(&self) -> usize {
        self.latent_size
    }

    fn tileset_size(&self) -> u8 {
        self.out_channels as u8
    }

    fn decode(&self, z: &LatentVector, width: usize, height: usize) -> Result<TileGrid> {
        generate_segment(self, z, width, height)
    }
}

/// Closed-form decoder:
/// `tile(x, y) = floor(1000 |sum_i z_i sin(0.5 (i+1)(x+1) + 0.3 (i+1)(y+1))|) mod tileset_size`.
pub fn stub_decode(z: &LatentVector, w: usize, h: usize, tileset_size: u8) -> Result<TileGrid> {
    if w == 0 || h == 0 || tileset_size == 0 {
        return Err(Error::input("stub decode needs positive dimensions and tileset"));
    }
    let mut tiles = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0f64;
            for (i, &zi) in z.values().iter().enumerate() {
                let k = (i + 1) as f64;
                sum += zi * (0.5 * k * (x + 1) as f64 + 0.3 * k * (y + 1) as f64).sin();
            }
            let magnitude = (1000.0 * sum.abs()).floor() as u64;
            tiles.push((magnitude % tileset_size as u64) as u8);
        }
    }
    TileGrid::new(w, h, tileset_size, tiles)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StubDecoder {
    pub latent_size: usize,
    pub tileset_size: u8,
}

impl Decoder for StubDecoder {
    fn latent_size(&self) -> usize {
        self.latent_size
    }

    fn tileset_size(&self) -> u8 {
        self.tileset_size
    }

    fn decode(&self, z: &LatentVector, width: usize, height: usize) -> Result<TileGrid> {
        if z.len() != self.latent_size {
            return Err(Error::input(format!(
                "latent has {} values, decoder expects {}",
                z.len(),
                self.latent_size
            )));
        }
        stub_decode(z, width, height, self.tileset_size)
    }
}

pub const FIXTURE_HEADER: &str = "# ganw-fixture 1";

/// One reference forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureCase {
    pub z: Vec<f64>,
    /// Channel-major, `channels x height x width`.
    pub scores: Vec<f32>,
    /// Row-major argmax tiles of the `crop_width x crop_height` crop.
    pub tiles: Vec<u8>,
}

/// Reference outputs written next to a GANW file by the exporter.
///
/// ```text
/// # ganw-fixture 1
/// latent_size=10 channels=3 width=32 height=32 crop_width=16 crop_height=11 count=1
/// z 0.1 -0.5 ...
/// scores ...
/// tiles ...
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardFixture {
    pub latent_size: usize,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub crop_width: usize,
    pub crop_height: usize,
    pub cases: Vec<FixtureCase>,
}

impl ForwardFixture {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(FIXTURE_HEADER) {
            return Err(Error::Format(format!("fixture must start with `{FIXTURE_HEADER}`")));
        }
        let meta = lines.next().ok_or_else(|| Error::Format("fixture has no metadata line".into()))?;
        let field = |key: &str| -> Result<usize> {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
                .ok_or_else(|| Error::Format(format!("fixture metadata lacks `{key}`")))?
                .parse()
                .map_err(|_| Error::Format(format!("fixture metadata `{key}` is not a count")))
        };
        let mut fx = ForwardFixture {
            latent_size: field("latent_size")?,
            channels: field("channels")?,
            width: field("width")?,
            height: field("height")?,
            crop_width: field("crop_width")?,
            crop_height: field("crop_height")?,
            cases: Vec::new(),
        };
        let count = field("count")?;
        fn values<T: std::str::FromStr>(line: Option<&str>, tag: &str, n: usize) -> Result<Vec<T>> {
            let line = line.ok_or_else(|| Error::Format(format!("fixture truncated before `{tag}`")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(tag) {
                return Err(Error::Format(format!("expected `{tag}` line")));
            }
            let v = parts
                .map(|p| p.parse::<T>().map_err(|_| Error::Format(format!("bad `{tag}` value `{p}`"))))
                .collect::<Result<Vec<T>>>()?;
            if v.len() != n {
                return Err(Error::Format(format!("`{tag}` has {} values, expected {n}", v.len())));
            }
            Ok(v)
        }
        for _ in 0..count {
            fx.cases.push(FixtureCase {
                z: values(lines.next(), "z", fx.latent_size)?,
                scores: values(lines.next(), "scores", fx.channels * fx.height * fx.width)?,
                tiles: values(lines.next(), "tiles", fx.crop_width * fx.crop_height)?,
            });
        }
        if lines.next().is_some() {
            return Err(Error::Format("trailing content after fixture cases".into()));
        }
        Ok(fx)
    }

    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(" ");
        let mut out = format!(
            "{FIXTURE_HEADER}\nlatent_size={} channels={} width={} height={} crop_width={} crop_height={} count={}\n",
            self.latent_size,
            self.channels,
            self.width,
            self.height,
            self.crop_width,
            self.crop_height,
            self.cases.len()
        );
        for c in &self.cases {
            out += &format!("z {}\n", join(c.z.iter().map(f64::to_string).collect()));
            out += &format!("scores {}\n", join(c.scores.iter().map(f32::to_string).collect()));
            out += &format!("tiles {}\n", join(c.tiles.iter().map(u8::to_string).collect()));
        }
        out
    }

    /// Runs `weights` on every case.
    pub fn record(weights: &GeneratorWeights, zs: &[Vec<f64>], crop_width: usize, crop_height: usize) -> Result<Self> {
        let mut cases = Vec::with_capacity(zs.len());
        for z in zs {
            let scores = weights.forward(&LatentVector::new(z.iter().copied()))?;
            let tiles = scores.to_tiles(crop_width, crop_height)?.tiles().to_vec();
            cases.push(FixtureCase {
                z: z.clone(),
                scores: scores.data,
                tiles,
            });
        }
        Ok(ForwardFixture {
            latent_size: weights.latent_size,
            channels: weights.out_channels,
            width: weights.out_width,
            height: weights.out_height,
            crop_width,
            crop_height,
            cases,
        })
    }

    /// Largest absolute score difference and number of differing tiles
    /// between `weights` and the recorded cases.
    pub fn compare(&self, weights: &GeneratorWeights) -> Result<FixtureComparison> {
        if (self.latent_size, self.channels, self.width, self.height)
            != (weights.latent_size, weights.out_channels, weights.out_width, weights.out_height)
        {
            return Err(Error::Model("fixture dimensions differ from the generator".into()));
        }
        let mut cmp = FixtureComparison::default();
        for c in &self.cases {
            let scores = weights.forward(&LatentVector::new(c.z.iter().copied()))?;
            for (a, b) in scores.data.iter().zip(&c.scores) {
                cmp.max_abs_error = cmp.max_abs_error.max((*a as f64 - *b as f64).abs());
            }
            let tiles = scores.to_tiles(self.crop_width, self.crop_height)?;
            cmp.tile_mismatches += tiles.tiles().iter().zip(&c.tiles).filter(|(a, b)| a != b).count();
        }
        Ok(cmp)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FixtureComparison {
    pub max_abs_error: f64,
    pub tile_mismatches: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(name: &str, kernel: usize, stride: usize, pad: usize, act: Nonlinearity, shape: [usize; 4], fill: impl Fn(usize) -> f32) -> TensorRecord {
        let n: usize = shape.iter().product();
        TensorRecord::new(
            name,
            LayerMeta {
                kind: LayerKind::ConvTranspose {
                    kernel,
                    stride,
                    pad,
                },
                activation: act,
            },
            shape.to_vec(),
            (0..n).map(fill).collect(),
        )
        .unwrap()
    }

    fn tiny() -> GeneratorWeights {
        // 2 -> 3 channels, 1x1 -> 4x4 -> 8x8
        let l1 = conv("l1", 4, 1, 0, Nonlinearity::Relu, [2, 4, 4, 4], |i| ((i * 37 % 11) as f32 - 5.0) / 7.0);
        let l2 = conv("l2", 4, 2, 1, Nonlinearity::Tanh, [4, 3, 4, 4], |i| ((i * 13 % 17) as f32 - 8.0) / 9.0);
        GeneratorWeights::new(2, 8, 8, 3, vec![l1, l2]).unwrap()
    }

    #[test]
    fn empty_file_is_format_error() {
        assert!(matches!(GeneratorWeights::from_bytes(&[]), Err(Error::Format(_))));
    }

    #[test]
    fn zero_records_is_model_error() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(GANW_MAGIC);
        for v in [1u32, 10, 32, 32, 3, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(GeneratorWeights::from_bytes(&bytes), Err(Error::Model(_))));
    }

    #[test]
    fn bad_version_is_format_error() {
        let mut bytes = tiny().to_bytes();
        bytes[4] = 2;
        assert!(matches!(GeneratorWeights::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let bytes = tiny().to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(GeneratorWeights::from_bytes(cut), Err(Error::Corruption(_))));
    }

    #[test]
    fn broken_chain_is_model_error() {
        let l1 = conv("l1", 4, 1, 0, Nonlinearity::Relu, [2, 4, 4, 4], |_| 0.1);
        let l2 = conv("l2", 4, 2, 1, Nonlinearity::None, [5, 3, 4, 4], |_| 0.1);
        assert!(matches!(GeneratorWeights::new(2, 8, 8, 3, vec![l1, l2]), Err(Error::Model(_))));
        let l1 = conv("l1", 4, 1, 0, Nonlinearity::Relu, [2, 3, 4, 4], |_| 0.1);
        // header dims disagree with the chain
        assert!(matches!(GeneratorWeights::new(2, 8, 8, 3, vec![l1]), Err(Error::Model(_))));
    }

    #[test]
    fn shape_data_mismatch_is_corruption() {
        let meta = LayerMeta::parse("kind=bias").unwrap();
        assert!(matches!(
            TensorRecord::new("b", meta, vec![3], vec![0.0; 2]),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn bytes_round_trip() {
        let w = tiny();
        let back = GeneratorWeights::from_bytes(&w.to_bytes()).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn meta_parse_accepts_documented_keys() {
        let m = LayerMeta::parse("kind=conv_transpose;kernel=4;stride=2;pad=1;activation=relu").unwrap();
        assert_eq!(
            m,
            LayerMeta {
                kind: LayerKind::ConvTranspose {
                    kernel: 4,
                    stride: 2,
                    pad: 1
                },
                activation: Nonlinearity::Relu
            }
        );
        assert!(LayerMeta::parse("kind=attention").is_err());
        assert_eq!(LayerMeta::parse(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn wrong_latent_length_rejected() {
        let w = tiny();
        let z = LatentVector::new([0.1]);
        assert!(matches!(generate_segment(&w, &z, 4, 4), Err(Error::Input(_))));
    }

    #[test]
    fn crop_bigger_than_output_rejected() {
        let w = tiny();
        let z = LatentVector::new([0.1, 0.2]);
        assert!(matches!(generate_segment(&w, &z, 9, 4), Err(Error::Input(_))));
        assert_eq!(generate_segment(&w, &z, 5, 3).unwrap().width(), 5);
    }

    #[test]
    fn argmax_picks_largest_then_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.9, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.2]), 0);
        assert_eq!(argmax(&[f32::NAN, 0.1]), 1);
    }

    #[test]
    fn latent_values_are_clamped() {
        let z = LatentVector::new([2.0, -3.0, 0.5, f64::NAN]);
        assert_eq!(z.values(), &[1.0, -1.0, 0.5, 0.0]);
    }

    #[test]
    fn stub_zero_latent_gives_zero_tiles() {
        let g = stub_decode(&LatentVector::new([0.0; 5]), 7, 4, 13).unwrap();
        assert!(g.tiles().iter().all(|&t| t == 0));
    }

    #[test]
    fn stub_single_tile_set() {
        let g = stub_decode(&LatentVector::new([0.3, -0.7]), 5, 5, 1).unwrap();
        assert!(g.tiles().iter().all(|&t| t == 0));
    }

    #[test]
    fn stub_hand_evaluation() {
        // z = (1.0), w=2, h=1, tileset 13:
        // x=0: |sin(0.5 + 0.3)| = sin(0.8) = 0.7173560909 -> 717 mod 13 = 2
        // x=1: |sin(1.0 + 0.3)| = sin(1.3) = 0.9635581854 -> 963 mod 13 = 1
        let g = stub_decode(&LatentVector::new([1.0]), 2, 1, 13).unwrap();
        assert_eq!(g.tiles(), &[2, 1]);
    }
}

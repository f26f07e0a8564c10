//! Flat little-endian parameter file.
//!
//! ```text
//! "PGNN"  version:u32  layer_count:u32        (layer_count includes the head)
//! per layer:
//!   kind:u32 (0 dense, 1 structured)  d_in:u32  d_out:u32  activation:u32
//!   dense:      W[d_out*d_in]  b[d_out]
//!   structured: shaping_kind:u32  shaping params  S[d_out*d_out]
//!               W[d_out*d_in]  b[d_out]  B[d_out*d_in]  c[d_out]  alpha:f64
//! ```
//! Shaping params: identity none; DCT `keep_fraction:f64 kept:u32`;
//! low-rank `rank:u32 scale:f64 seed:u64`; diagonal none (S carries it).
//! All matrices row-major f64.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Activation, Layer, MlpLayer, Network, PgnnBlock};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;
use crate::shaping::{ShapingKind, ShapingOperator};

pub const MAGIC: &[u8; 4] = b"PGNN";
pub const VERSION: u32 = 1;

const KIND_DENSE: u32 = 0;
const KIND_PGNN: u32 = 1;

fn write_f64s<W: Write, T: Scalar>(w: &mut W, xs: &[T]) -> std::io::Result<()> {
    for &x in xs {
        w.write_f64::<LE>(x.as_f64())?;
    }
    Ok(())
}

pub fn write_network<W: Write, T: Scalar>(w: &mut W, net: &Network<T>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u32::<LE>((net.layers.len() + 1) as u32)?;
    let dense = |w: &mut W, l: &MlpLayer<T>| -> std::io::Result<()> {
        w.write_u32::<LE>(KIND_DENSE)?;
        w.write_u32::<LE>(l.in_dim() as u32)?;
        w.write_u32::<LE>(l.out_dim() as u32)?;
        w.write_u32::<LE>(l.activation.tag())?;
        write_f64s(w, l.weight.as_slice())?;
        write_f64s(w, &l.bias)
    };
    for layer in &net.layers {
        match layer {
            Layer::Mlp(l) => dense(w, l)?,
            Layer::Pgnn(l) => {
                w.write_u32::<LE>(KIND_PGNN)?;
                w.write_u32::<LE>(l.in_dim() as u32)?;
                w.write_u32::<LE>(l.out_dim() as u32)?;
                w.write_u32::<LE>(l.correction_activation.tag())?;
                match l.shaping.kind() {
                    ShapingKind::Identity => w.write_u32::<LE>(0)?,
                    ShapingKind::DctLowPass { keep_fraction, kept } => {
                        w.write_u32::<LE>(1)?;
                        w.write_f64::<LE>(keep_fraction.as_f64())?;
                        w.write_u32::<LE>(*kept as u32)?;
                    }
                    ShapingKind::LowRankProjection { rank, scale, seed } => {
                        w.write_u32::<LE>(2)?;
                        w.write_u32::<LE>(*rank as u32)?;
                        w.write_f64::<LE>(scale.as_f64())?;
                        w.write_u64::<LE>(*seed)?;
                    }
                    ShapingKind::Diagonal { .. } => w.write_u32::<LE>(3)?,
                }
                write_f64s(w, l.shaping.matrix().as_slice())?;
                write_f64s(w, l.weight.as_slice())?;
                write_f64s(w, &l.bias)?;
                write_f64s(w, l.correction_weight.as_slice())?;
                write_f64s(w, &l.correction_bias)?;
                w.write_f64::<LE>(l.correction_scale.as_f64())?;
            }
        }
    }
    dense(w, &net.head)
}

/// Byte reader that tracks its offset for error messages.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = self.take(4, what)?;
        Ok(b.read_u32::<LE>().expect("4 bytes"))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = self.take(8, what)?;
        Ok(b.read_u64::<LE>().expect("8 bytes"))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = self.take(8, what)?;
        Ok(b.read_f64::<LE>().expect("8 bytes"))
    }

    fn vec<T: Scalar>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let bytes = self.take(n * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix<T>> {
        let v = self.vec(rows * cols, what)?;
        DenseMatrix::from_vec(rows, cols, v)
    }

    fn activation(&mut self) -> Result<Activation> {
        let at = self.pos;
        let tag = self.u32("activation")?;
        Activation::from_tag(tag).ok_or_else(|| Error::parse(at, format!("unknown activation tag {tag}")))
    }
}

pub fn read_network<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic, expected \"PGNN\""));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(4, format!("unsupported version {version}")));
    }
    let count = c.u32("layer count")? as usize;
    if count == 0 {
        return Err(Error::parse(8, "network without a head"));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let at = c.pos;
        let kind = c.u32("layer kind")?;
        let d_in = c.u32("d_in")? as usize;
        let d_out = c.u32("d_out")? as usize;
        let activation = c.activation()?;
        match kind {
            KIND_DENSE => {
                let weight = c.matrix(d_out, d_in, "weight")?;
                let bias = c.vec(d_out, "bias")?;
                layers.push(Layer::Mlp(MlpLayer {
                    weight,
                    bias,
                    activation,
                }));
            }
            KIND_PGNN => {
                let sk_at = c.pos;
                let shaping_kind = match c.u32("shaping kind")? {
                    0 => ShapingKind::Identity,
                    1 => {
                        let keep_fraction = T::of(c.f64("keep_fraction")?);
                        let kept = c.u32("kept")? as usize;
                        ShapingKind::DctLowPass { keep_fraction, kept }
                    }
                    2 => {
                        let rank = c.u32("rank")? as usize;
                        let scale = T::of(c.f64("scale")?);
                        let seed = c.u64("seed")?;
                        ShapingKind::LowRankProjection { rank, scale, seed }
                    }
                    3 => ShapingKind::Diagonal { entries: Vec::new() },
                    other => return Err(Error::parse(sk_at, format!("unknown shaping kind {other}"))),
                };
                let s = c.matrix(d_out, d_out, "shaping matrix")?;
                let shaping_kind = match shaping_kind {
                    ShapingKind::Diagonal { .. } => ShapingKind::Diagonal { entries: s.diag() },
                    k => k,
                };
                let weight = c.matrix(d_out, d_in, "weight")?;
                let bias = c.vec(d_out, "bias")?;
                let correction_weight = c.matrix(d_out, d_in, "correction weight")?;
                let correction_bias = c.vec(d_out, "correction bias")?;
                let correction_scale = T::of(c.f64("correction scale")?);
                layers.push(Layer::Pgnn(PgnnBlock {
                    shaping: ShapingOperator::from_parts(shaping_kind, s),
                    weight,
                    bias,
                    correction_weight,
                    correction_bias,
                    correction_activation: activation,
                    correction_scale,
                }));
            }
            other => return Err(Error::parse(at, format!("unknown layer kind {other}"))),
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::parse(c.pos, "trailing bytes after last layer"));
    }
    let head = match layers.pop() {
        Some(Layer::Mlp(h)) => h,
        _ => return Err(Error::parse(bytes.len(), "last layer must be a dense head")),
    };
    Network::new(layers, head)
}

pub fn save_network<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_network(&mut buf, net).expect("writing to memory");
    std::fs::write(path, buf).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_network<T: Scalar>(path: &Path) -> Result<Network<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    read_network(&bytes)
}

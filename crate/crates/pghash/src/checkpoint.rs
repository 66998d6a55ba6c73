//! Binary model checkpoints.
//!
//! All integers are little-endian `u64` and all reals little-endian IEEE-754
//! `f64`, except the version which is a `u32`.
//!
//! ```text
//! magic      8 bytes  "PGHCKPT\0"
//! version    u32      1
//! d_in, h, n u64 x 3
//! W1         d_in*h   row-major, row i = fan-out of input feature i
//! b1         h
//! W2         n*h      row-major, row j = weight column of output neuron j
//! b2         n
//! states     u64      number of optimizer states that follow (one per device)
//! per state:
//!   lr, beta1, beta2, eps   f64 x 4
//!   step                    u64
//!   W1 moments              m then v, d_in*h each
//!   b1 moments              m then v, h each
//!   columns                 u64 count, then per column in increasing neuron
//!                           order: neuron u64, steps u64, m (h+1), v (h+1)
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use pghash_core::matrix::Matrix;
use pghash_core::net::{Adam, AdamConfig, ColumnMoments, HiddenLayer, Moments, NetWeights, OutputLayer};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"PGHCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: NetWeights,
    pub optimizers: Vec<Adam>,
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_reals(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    xs.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
}

pub fn write_checkpoint_to(mut w: impl Write, ck: &Checkpoint) -> std::io::Result<()> {
    let m = &ck.model;
    let (d_in, h, n) = (m.input_dim(), m.hidden_dim(), m.num_neurons());
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [d_in, h, n] {
        put_u64(&mut w, v as u64)?;
    }
    put_reals(&mut w, m.hidden.w.as_slice())?;
    put_reals(&mut w, &m.hidden.b)?;
    put_reals(&mut w, m.output.w.as_slice())?;
    put_reals(&mut w, &m.output.b)?;
    put_u64(&mut w, ck.optimizers.len() as u64)?;
    for a in &ck.optimizers {
        put_reals(&mut w, &[a.config.lr, a.config.beta1, a.config.beta2, a.config.eps])?;
        put_u64(&mut w, a.step)?;
        for mo in [&a.hidden_w, &a.hidden_b] {
            put_reals(&mut w, &mo.m)?;
            put_reals(&mut w, &mo.v)?;
        }
        put_u64(&mut w, a.columns.len() as u64)?;
        for (&j, c) in &a.columns {
            put_u64(&mut w, j as u64)?;
            put_u64(&mut w, c.steps)?;
            put_reals(&mut w, &c.moments.m)?;
            put_reals(&mut w, &c.moments.v)?;
        }
    }
    w.flush()
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint_to(BufWriter::new(f), ck).map_err(|e| Error::io(path, e))
}

struct Reader<R> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn len(&mut self, limit: u64) -> Result<usize> {
        let v = self.u64()?;
        if v > limit {
            return Err(Error::Format(format!("checkpoint dimension {v} exceeds {limit}")));
        }
        Ok(v as usize)
    }

    fn reals(&mut self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|_| Ok(f64::from_le_bytes(self.bytes()?))).collect()
    }

    fn moments(&mut self, len: usize) -> Result<Moments> {
        Ok(Moments { m: self.reals(len)?, v: self.reals(len)? })
    }
}

pub fn read_checkpoint_from(r: impl Read) -> Result<Checkpoint> {
    let mut r = Reader { r };
    if r.bytes::<8>()? != MAGIC {
        return Err(Error::Format("not a pghash checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.bytes()?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    const LIMIT: u64 = 1 << 32;
    let (d_in, h, n) = (r.len(LIMIT)?, r.len(LIMIT)?, r.len(LIMIT)?);
    let hidden = HiddenLayer { w: Matrix::from_vec(d_in, h, r.reals(d_in * h)?)?, b: r.reals(h)? };
    let output = OutputLayer { w: Matrix::from_vec(n, h, r.reals(n * h)?)?, b: r.reals(n)? };
    let states = r.len(LIMIT)?;
    let mut optimizers = Vec::with_capacity(states.min(1024));
    for _ in 0..states {
        let c = r.reals(4)?;
        let mut a = Adam::new(AdamConfig { lr: c[0], beta1: c[1], beta2: c[2], eps: c[3] }, d_in, h);
        a.step = r.u64()?;
        a.hidden_w = r.moments(d_in * h)?;
        a.hidden_b = r.moments(h)?;
        for _ in 0..r.len(n as u64)? {
            let j = r.len(n as u64 - 1)?;
            let steps = r.u64()?;
            a.columns.insert(j, ColumnMoments { moments: r.moments(h + 1)?, steps });
        }
        optimizers.push(a);
    }
    Ok(Checkpoint { model: NetWeights { hidden, output }, optimizers })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint_from(BufReader::new(f))
}

//! Binary weight files.
//!
//! Layout (little endian): magic `FMLP`, format version `u32`, scalar width in
//! bytes `u32`, layer count `u32`, the widths as `u32`s, the flat parameter
//! buffer, then running mean and running variance of every hidden layer.

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::Mlp;
use super::scalar::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FMLP";
const VERSION: u32 = 1;

pub fn write_weights<T: Real, W: Write>(net: &Mlp<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for v in [VERSION, T::BYTES as u32, net.widths().len() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &width in net.widths() {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    let stats = net.running_mean().iter().chain(net.running_var()).flatten();
    for &v in net.params().iter().chain(stats) {
        w.write_all(&v.to_le_bytes_vec())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(bytes: &[u8], at: &mut usize) -> Result<u32> {
    let s = bytes
        .get(*at..*at + 4)
        .ok_or_else(|| Error::Format("weight file truncated in header".into()))?;
    *at += 4;
    Ok(u32::from_le_bytes(s.try_into().expect("4 bytes")))
}

pub fn read_weights<T: Real, R: Read>(mut r: R) -> Result<Mlp<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Format("not a weight file".into()));
    }
    let mut at = 4;
    let version = read_u32(&bytes, &mut at)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let scalar = read_u32(&bytes, &mut at)? as usize;
    if scalar != T::BYTES {
        return Err(Error::Format(format!(
            "file stores {scalar}-byte scalars, expected {}",
            T::BYTES
        )));
    }
    let layers = read_u32(&bytes, &mut at)? as usize;
    if layers > 64 {
        return Err(Error::Format(format!("implausible layer count {layers}")));
    }
    let widths = (0..layers)
        .map(|_| read_u32(&bytes, &mut at).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut net = Mlp::<T>::zeroed(&widths).map_err(|e| Error::Format(format!("bad widths: {e}")))?;
    let hidden = &widths[1..widths.len() - 1];
    let n_stats: usize = hidden.iter().sum::<usize>() * 2;
    let expected = (net.params().len() + n_stats) * T::BYTES;
    let body = &bytes[at..];
    if body.len() != expected {
        return Err(Error::Format(format!(
            "weight body has {} bytes, widths {widths:?} need {expected}",
            body.len()
        )));
    }
    let mut values = body.chunks_exact(T::BYTES).map(T::from_le_slice);
    for p in net.params_mut() {
        *p = values.next().expect("length checked");
    }
    let mut take = |w: usize| (0..w).map(|_| values.next().expect("length checked")).collect::<Vec<T>>();
    let mean: Vec<Vec<T>> = hidden.iter().map(|&w| take(w)).collect();
    let var: Vec<Vec<T>> = hidden.iter().map(|&w| take(w)).collect();
    net.set_running_stats(mean, var)?;
    Ok(net)
}

pub fn save_weights<T: Real>(net: &Mlp<T>, path: &Path) -> Result<()> {
    write_weights(net, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_weights<T: Real>(path: &Path) -> Result<Mlp<T>> {
    read_weights(std::fs::File::open(path)?)
}

//! Binary checkpoint records.
//!
//! Network record: magic `CHEQNET1`, activation tag (u8), layer count (u32),
//! layer sizes (u64 each), parameter count (u64), then the flat parameters as
//! little-endian f64. Vector records use magic `CHEQVEC1`, a u64 length and the
//! values. All integers are little-endian.

use std::io::{Read, Write};

use crate::adam::AdamState;
use crate::error::{NnError, Result};
use crate::network::{param_count, Activation, Network};

const NET_MAGIC: &[u8; 8] = b"CHEQNET1";
const VEC_MAGIC: &[u8; 8] = b"CHEQVEC1";
const ADAM_MAGIC: &[u8; 8] = b"CHEQADM1";
const MAX_LAYERS: u32 = 1024;

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        out.push(f64::from_le_bytes(read_exact::<8>(r)?));
    }
    Ok(out)
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 8]) -> Result<()> {
    let got = read_exact::<8>(r)?;
    if &got != magic {
        return Err(NnError::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_network(w: &mut impl Write, net: &Network) -> Result<()> {
    w.write_all(NET_MAGIC)?;
    w.write_all(&[net.activation().tag()])?;
    w.write_all(&(net.layer_sizes().len() as u32).to_le_bytes())?;
    for &s in net.layer_sizes() {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    w.write_all(&(net.param_count() as u64).to_le_bytes())?;
    write_f64s(w, net.params())
}

pub fn read_network(r: &mut impl Read) -> Result<Network> {
    expect_magic(r, NET_MAGIC)?;
    let [tag] = read_exact::<1>(r)?;
    let activation = Activation::from_tag(tag)
        .ok_or_else(|| NnError::Checkpoint(format!("unknown activation tag {tag}")))?;
    let n_layers = u32::from_le_bytes(read_exact::<4>(r)?);
    if n_layers < 2 || n_layers > MAX_LAYERS {
        return Err(NnError::Checkpoint(format!("implausible layer count {n_layers}")));
    }
    let sizes = (0..n_layers)
        .map(|_| read_u64(r).map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let count = read_u64(r)? as usize;
    if count != param_count(&sizes) {
        return Err(NnError::Checkpoint(format!(
            "header parameter count {count} disagrees with layer sizes {sizes:?}"
        )));
    }
    let params = read_f64s(r, count)?;
    Network::from_params(&sizes, activation, params)
}

pub fn write_vector(w: &mut impl Write, values: &[f64]) -> Result<()> {
    w.write_all(VEC_MAGIC)?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    write_f64s(w, values)
}

pub fn read_vector(r: &mut impl Read) -> Result<Vec<f64>> {
    expect_magic(r, VEC_MAGIC)?;
    let n = read_u64(r)? as usize;
    read_f64s(r, n)
}

pub fn write_adam(w: &mut impl Write, state: &AdamState) -> Result<()> {
    w.write_all(ADAM_MAGIC)?;
    w.write_all(&state.step_count.to_le_bytes())?;
    write_f64s(w, &[state.beta1, state.beta2, state.eps])?;
    write_vector(w, &state.first_moment)?;
    write_vector(w, &state.second_moment)
}

pub fn read_adam(r: &mut impl Read) -> Result<AdamState> {
    expect_magic(r, ADAM_MAGIC)?;
    let step_count = read_u64(r)?;
    let hyper = read_f64s(r, 3)?;
    let first_moment = read_vector(r)?;
    let second_moment = read_vector(r)?;
    if first_moment.len() != second_moment.len() {
        return Err(NnError::Checkpoint("adam moment lengths differ".into()));
    }
    if second_moment.iter().any(|v| !(*v >= 0.0)) {
        return Err(NnError::Checkpoint("negative second moment".into()));
    }
    Ok(AdamState {
        first_moment,
        second_moment,
        step_count,
        beta1: hyper[0],
        beta2: hyper[1],
        eps: hyper[2],
    })
}

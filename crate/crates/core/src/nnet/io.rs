//! Network serialization: magic `RBNN1`, an architecture descriptor (op list
//! with shapes), then all parameters as little-endian `f32` in declaration
//! order.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Conv1d, Flatten, Layer, Linear, MaxPool1d, Network, Relu, Reshape1d};
use super::NnetError;
use crate::binio::*;

pub const NETWORK_MAGIC: &[u8] = b"RBNN1";

const TAG_LINEAR: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_CONV1D: u8 = 3;
const TAG_MAXPOOL1D: u8 = 4;
const TAG_FLATTEN: u8 = 5;
const TAG_RESHAPE1D: u8 = 6;

pub fn save_network(network: &Network, w: &mut impl Write) -> Result<(), NnetError> {
    w.write_all(NETWORK_MAGIC)?;
    write_u32(w, network.layers.len() as u32)?;
    for layer in &network.layers {
        match layer {
            Layer::Linear(l) => {
                w.write_all(&[TAG_LINEAR])?;
                write_u32(w, l.din() as u32)?;
                write_u32(w, l.dout() as u32)?;
            }
            Layer::Relu(_) => w.write_all(&[TAG_RELU])?,
            Layer::Conv1d(l) => {
                w.write_all(&[TAG_CONV1D])?;
                write_u32(w, l.cin() as u32)?;
                write_u32(w, l.cout() as u32)?;
                write_u32(w, l.kernel() as u32)?;
                write_u32(w, l.stride as u32)?;
            }
            Layer::MaxPool1d(l) => {
                w.write_all(&[TAG_MAXPOOL1D])?;
                write_u32(w, l.k as u32)?;
                write_u32(w, l.stride as u32)?;
            }
            Layer::Flatten(_) => w.write_all(&[TAG_FLATTEN])?,
            Layer::Reshape1d(l) => {
                w.write_all(&[TAG_RESHAPE1D])?;
                write_u32(w, l.channels as u32)?;
            }
        }
    }
    for layer in &network.layers {
        let tensors: Vec<&[f64]> = match layer {
            Layer::Linear(l) => vec![l.w.data(), l.b.data()],
            Layer::Conv1d(l) => vec![l.w.data(), l.b.data()],
            _ => Vec::new(),
        };
        for data in tensors {
            for &v in data {
                write_f32(w, v as f32)?;
            }
        }
    }
    Ok(())
}

pub fn load_network(r: &mut impl Read) -> Result<Network, NnetError> {
    if !expect_magic(r, NETWORK_MAGIC)? {
        return Err(NnetError::BadModelFile("missing RBNN1 magic".into()));
    }
    let layer_count = read_u32(r)? as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let tag = read_u8(r)?;
        let layer = match tag {
            TAG_LINEAR => {
                let din = read_u32(r)? as usize;
                let dout = read_u32(r)? as usize;
                Layer::Linear(Linear::new(din, dout, &mut rng))
            }
            TAG_RELU => Layer::Relu(Relu::default()),
            TAG_CONV1D => {
                let cin = read_u32(r)? as usize;
                let cout = read_u32(r)? as usize;
                let k = read_u32(r)? as usize;
                let stride = read_u32(r)? as usize;
                Layer::Conv1d(Conv1d::new(cin, cout, k, stride, &mut rng))
            }
            TAG_MAXPOOL1D => {
                let k = read_u32(r)? as usize;
                let stride = read_u32(r)? as usize;
                Layer::MaxPool1d(MaxPool1d::new(k, stride))
            }
            TAG_FLATTEN => Layer::Flatten(Flatten::default()),
            TAG_RESHAPE1D => {
                let channels = read_u32(r)? as usize;
                Layer::Reshape1d(Reshape1d { channels })
            }
            other => {
                return Err(NnetError::BadModelFile(format!("unknown layer tag {other}")))
            }
        };
        layers.push(layer);
    }
    let mut network = Network::new(layers);
    for (param, _) in network.param_grad_pairs() {
        for slot in param.data_mut() {
            *slot = read_f32(r)? as f64;
        }
    }
    Ok(network)
}

//! Binary model checkpoints.
//!
//! Layout, all integers little endian:
//!   magic "HOMECKPT" (8 bytes)
//!   format version u32
//!   encoder layer count u32
//!   total layer count u32
//!   per layer: output dim u32, input dim u32, activation u8 (0 identity, 1 relu)
//!   per layer: weights row-major f64, then bias f64
//!
//! Round-trips are byte-exact: parameters are stored as raw f64 bits.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use home_core::matrix::Mat;
use home_core::model::{Activation, Layer, MlpModel};

pub const MAGIC: &[u8; 8] = b"HOMECKPT";
pub const FORMAT_VERSION: u32 = 1;

fn bad(message: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, message.into())
}

pub fn save(model: &MlpModel, path: &Path) -> io::Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(model.encoder_len()).map_err(|_| bad("model too deep"))?.to_le_bytes());
    out.extend_from_slice(&u32::try_from(model.layers().len()).map_err(|_| bad("model too deep"))?.to_le_bytes());
    for layer in model.layers() {
        let rows = u32::try_from(layer.weights.rows()).map_err(|_| bad("layer too wide"))?;
        let cols = u32::try_from(layer.weights.cols()).map_err(|_| bad("layer too wide"))?;
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        out.push(match layer.activation {
            Activation::Identity => 0,
            Activation::Relu => 1,
        });
    }
    for layer in model.layers() {
        for v in layer.weights.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &layer.bias {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    file.flush()
}

pub fn load(path: &Path) -> io::Result<MlpModel> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> io::Result<&[u8]> {
        let slice = bytes
            .get(*cursor..*cursor + n)
            .ok_or_else(|| bad("checkpoint truncated"))?;
        *cursor += n;
        Ok(slice)
    };
    let u32_at = |cursor: &mut usize| -> io::Result<u32> {
        Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
    };

    if take(&mut cursor, 8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32_at(&mut cursor)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported checkpoint format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let encoder_len = u32_at(&mut cursor)? as usize;
    let layer_count = u32_at(&mut cursor)? as usize;
    if layer_count == 0 || layer_count > 1024 {
        return Err(bad(format!("implausible layer count {layer_count}")));
    }
    let mut shapes = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let rows = u32_at(&mut cursor)? as usize;
        let cols = u32_at(&mut cursor)? as usize;
        let activation = match take(&mut cursor, 1)?[0] {
            0 => Activation::Identity,
            1 => Activation::Relu,
            other => return Err(bad(format!("unknown activation code {other}"))),
        };
        shapes.push((rows, cols, activation));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for &(rows, cols, activation) in &shapes {
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()));
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()));
        }
        let weights = Mat::from_vec(rows, cols, weights).map_err(|e| bad(e.to_string()))?;
        layers.push(Layer::new(weights, bias, activation).map_err(|e| bad(e.to_string()))?);
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes after checkpoint payload"));
    }
    MlpModel::from_layers(layers, encoder_len).map_err(|e| bad(e.to_string()))
}

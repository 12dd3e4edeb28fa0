//! Parameter checkpoints: a plain-text layout header followed by the raw
//! values as little-endian `f64`.
//!
//! ```text
//! fedtrans-params v1
//! slots <count>
//! <name> <dim>x<dim>... <offset>     (one line per slot)
//! end
//! <8·total bytes of little-endian f64>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ParamSlot, ParamVector};

const MAGIC: &str = "fedtrans-params v1";

pub fn encode(params: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 * params.layout().len() + 8 * params.len());
    let mut header = format!("{MAGIC}\nslots {}\n", params.layout().len());
    for slot in params.layout() {
        let dims: Vec<String> = slot.shape.iter().map(ToString::to_string).collect();
        header.push_str(&format!(
            "{} {} {}\n",
            slot.name,
            dims.join("x"),
            slot.offset
        ));
    }
    header.push_str("end\n");
    out.extend_from_slice(header.as_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Data(format!("checkpoint: {}", msg.into()))
}

pub fn decode(mut reader: impl BufRead) -> Result<ParamVector> {
    let mut line = String::new();
    let mut next_line = |reader: &mut dyn BufRead| -> Result<String> {
        line.clear();
        reader
            .read_line(&mut line)
            .map_err(|e| bad(format!("unreadable header: {e}")))?;
        Ok(line.trim_end_matches('\n').to_string())
    };
    if next_line(&mut reader)? != MAGIC {
        return Err(bad("missing magic line"));
    }
    let count: usize = next_line(&mut reader)?
        .strip_prefix("slots ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("bad slot count"))?;
    let mut layout = Vec::with_capacity(count);
    for _ in 0..count {
        let l = next_line(&mut reader)?;
        let fields: Vec<&str> = l.split(' ').collect();
        let [name, dims, offset] = fields[..] else {
            return Err(bad(format!("bad slot line `{l}`")));
        };
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(format!("bad shape `{dims}`")))?;
        layout.push(ParamSlot {
            name: name.to_string(),
            shape,
            offset: offset
                .parse()
                .map_err(|_| bad(format!("bad offset `{offset}`")))?,
        });
    }
    if next_line(&mut reader)? != "end" {
        return Err(bad("missing end line"));
    }
    let total: usize = layout.iter().map(ParamSlot::len).sum();
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| bad(format!("unreadable body: {e}")))?;
    if bytes.len() != 8 * total {
        return Err(bad(format!(
            "expected {} value bytes, found {}",
            8 * total,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ParamVector::new(values, layout)
}

pub fn write_checkpoint(path: &Path, params: &ParamVector) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamVector> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Generator, GeneratorConfig, Network};

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Generator::new(GeneratorConfig::default(), 3).unwrap();
        let v = g.flatten_params();
        let back = decode(encode(&v).as_slice()).unwrap();
        assert_eq!(back.layout(), v.layout());
        assert!(back
            .values()
            .iter()
            .zip(v.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_is_plain_text() {
        let g = Generator::new(GeneratorConfig::default(), 3).unwrap();
        let bytes = encode(&g.flatten_params());
        let text = String::from_utf8_lossy(&bytes[..60]);
        assert!(
            text.starts_with("fedtrans-params v1\nslots 12\nenc0.weight 16x1x4x4 0\n"),
            "{text}"
        );
    }

    #[test]
    fn truncated_body_is_rejected() {
        let g = Generator::new(GeneratorConfig::default(), 3).unwrap();
        let bytes = encode(&g.flatten_params());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(&b"nonsense\n"[..]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ckpt");
        let v = Generator::new(GeneratorConfig::default(), 4)
            .unwrap()
            .flatten_params();
        write_checkpoint(&path, &v).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), v);
    }
}

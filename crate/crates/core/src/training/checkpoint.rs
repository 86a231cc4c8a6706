//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "HCLMCKPT"
//! version  u32
//! spec     u32 length + UTF-8 key=value text
//! vocab    u32 length + UTF-8 vocabulary text
//! blocks   u32 count, then per block:
//!          u16 name length + name, u32 rows, u32 cols, rows·cols f64
//! ```

use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::hierarchy::{Network, NetworkSpec};

const MAGIC: &[u8; 8] = b"HCLMCKPT";
const VERSION: u32 = 1;

/// A trained model together with the vocabulary it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub vocab: Vocabulary,
}

impl Checkpoint {
    pub fn new(network: Network, vocab: Vocabulary) -> Result<Self> {
        if vocab.len() != network.vocab_size() {
            return Err(Error::Config(format!(
                "vocabulary has {} symbols but the network expects {}",
                vocab.len(),
                network.vocab_size()
            )));
        }
        Ok(Self { network, vocab })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.network.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for text in [self.network.spec().to_text(), self.vocab.to_text()] {
            out.extend_from_slice(&(text.len() as u32).to_le_bytes());
            out.extend_from_slice(text.as_bytes());
        }
        let blocks = self.network.params.named_blocks(self.network.wiring());
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, m) in blocks {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let spec = NetworkSpec::from_text(&r.text32()?)?;
        let vocab = Vocabulary::from_text(&r.text32()?)?;
        let mut network = Network::zeros(spec)?;
        let expected: Vec<(String, usize, usize)> = network
            .params
            .named_blocks(network.wiring())
            .into_iter()
            .map(|(n, m)| (n, m.rows(), m.cols()))
            .collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Format(format!(
                "checkpoint has {count} parameter blocks, architecture needs {}",
                expected.len()
            )));
        }
        let mut blocks = network.params.blocks_mut();
        for ((name, rows, cols), block) in expected.into_iter().zip(blocks.iter_mut()) {
            let name_len = r.u16()? as usize;
            let got = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let (gr, gc) = (r.u32()? as usize, r.u32()? as usize);
            if got != name || gr != rows || gc != cols {
                return Err(Error::Format(format!(
                    "expected block {name} ({rows}x{cols}), found {got} ({gr}x{gc})"
                )));
            }
            for v in block.data_mut() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Self::new(network, vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn text32(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("checkpoint text is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::Variant;

    #[test]
    fn round_trip_is_exact() {
        let v = Vocabulary::from_chars("xyz".chars());
        let net = Network::random(NetworkSpec::new(Variant::HlstmB, &v, 2, 3), 0.1, 4).unwrap();
        let ck = Checkpoint::new(net, v).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn corrupt_input_is_a_format_error() {
        let v = Vocabulary::from_chars("xy".chars());
        let net = Network::random(NetworkSpec::new(Variant::Mono, &v, 1, 2), 0.1, 4).unwrap();
        let bytes = Checkpoint::new(net, v).unwrap().to_bytes();
        for bad in [&bytes[..bytes.len() - 3], &bytes[1..], b"HCLMCKPT".as_slice()] {
            assert!(matches!(Checkpoint::from_bytes(bad), Err(Error::Format(_))));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn vocab_must_match() {
        let v = Vocabulary::from_chars("xy".chars());
        let net = Network::zeros(NetworkSpec::new(Variant::Mono, &v, 1, 2)).unwrap();
        assert!(Checkpoint::new(net, Vocabulary::from_chars("xyz".chars())).is_err());
    }
}

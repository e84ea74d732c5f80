//! Binary (P5) greymaps: 16-bit depth in mm, 8-bit masks.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Greymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

impl Greymap {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n{}\n", self.width, self.height, self.maxval)?;
        if self.maxval < 256 {
            let bytes: Vec<u8> = self.data.iter().map(|v| (*v).min(self.maxval) as u8).collect();
            w.write_all(&bytes)?;
        } else {
            let mut bytes = Vec::with_capacity(self.data.len() * 2);
            for v in &self.data {
                bytes.extend(v.min(&self.maxval).to_be_bytes());
            }
            w.write_all(&bytes)?;
        }
        w.flush()
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::parse("PGM", m);
        let mut all = Vec::new();
        r.read_to_end(&mut all).map_err(|e| bad(&e.to_string()))?;
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < all.len() && all[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < all.len() && all[pos] == b'#' {
                while pos < all.len() && all[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < all.len() && !all[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            tokens.push(String::from_utf8_lossy(&all[start..pos]).to_string());
        }
        if tokens[0] != "P5" {
            return Err(bad("only binary P5 greymaps are supported"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(bad("maxval outside 1..=65535"));
        }
        // exactly one whitespace byte separates header and raster
        pos += 1;
        let n = width * height;
        let bpp = if maxval < 256 { 1 } else { 2 };
        let raster = all.get(pos..pos + n * bpp).ok_or_else(|| bad("truncated raster"))?;
        let data = if bpp == 1 {
            raster.iter().map(|b| *b as u16).collect()
        } else {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f)).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(format!("PGM {}", path.display()), message),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_roundtrip_is_big_endian() {
        let g = Greymap {
            width: 3,
            height: 1,
            maxval: 65535,
            data: vec![0, 350, 65535],
        };
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..16], b"P5\n3 1\n65535\n\0\0\x01");
        assert_eq!(Greymap::read_from(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn eight_bit_with_comment() {
        let mut src = b"P5\n# mask\n2 2\n255\n".to_vec();
        src.extend([0, 255, 255, 0]);
        let g = Greymap::read_from(src.as_slice()).unwrap();
        assert_eq!(g.data, vec![0, 255, 255, 0]);
    }

    #[test]
    fn rejects_ascii_and_truncation() {
        assert!(Greymap::read_from(&b"P2\n1 1\n255\n0\n"[..]).is_err());
        assert!(Greymap::read_from(&b"P5\n4 4\n255\n\0\0"[..]).is_err());
    }
}

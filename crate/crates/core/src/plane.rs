//! 8-bit luma planes and their on-disk forms (binary PGM and raw Y).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("plane must be non-empty, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "{width}x{height} plane needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Plane::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with edge replication outside the plane.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let xx = x.clamp(0, self.width as isize - 1) as usize;
        let yy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yy * self.width + xx]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Copies the `w×h` window at `(x, y)`; the window must lie inside the plane.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Plane> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::Input(format!(
                "crop {w}x{h}+{x}+{y} exceeds {}x{} plane",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            data.extend_from_slice(&self.data[row * self.width + x..][..w]);
        }
        Plane::new(w, h, data)
    }

    pub fn transpose(&self) -> Plane {
        Plane::from_fn(self.height, self.width, |x, y| self.get(y, x)).expect("non-empty")
    }
}

/// Parses a binary PGM (`P5`, maxval 255).
pub fn parse_pgm(bytes: &[u8]) -> Result<Plane> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<(String, u64)> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::format(start as u64, "unexpected end of PGM header"));
        }
        Ok((String::from_utf8_lossy(&bytes[start..*pos]).into_owned(), start as u64))
    };
    let (magic, _) = token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::format(0, format!("expected P5 magic, found {magic:?}")));
    }
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        let (t, off) = token(pos)?;
        t.parse::<usize>()
            .map_err(|_| Error::format(off, format!("invalid {what} {t:?}")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(pos as u64, format!("only maxval 255 is supported, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("raster truncated: need {need} bytes after header"),
        ));
    }
    Plane::new(width, height, bytes[pos..pos + need].to_vec())
}

pub fn encode_pgm(plane: &Plane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", plane.width, plane.height).into_bytes();
    out.extend_from_slice(&plane.data);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Plane> {
    parse_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, plane: &Plane) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm(plane))?;
    Ok(())
}

/// Splits a raw 8-bit Y stream into frames; `frames` limits the count when given.
pub fn parse_raw_frames(bytes: &[u8], width: usize, height: usize, frames: Option<usize>) -> Result<Vec<Plane>> {
    let size = width * height;
    if size == 0 {
        return Err(Error::Input("raw frame size must be non-zero".into()));
    }
    if bytes.len() % size != 0 {
        return Err(Error::format(
            (bytes.len() - bytes.len() % size) as u64,
            format!("{} bytes is not a whole number of {width}x{height} frames", bytes.len()),
        ));
    }
    let available = bytes.len() / size;
    let count = match frames {
        Some(n) if n > available => {
            return Err(Error::Input(format!("requested {n} frames, file holds {available}")));
        }
        Some(n) => n,
        None => available,
    };
    bytes
        .chunks_exact(size)
        .take(count)
        .map(|c| Plane::new(width, height, c.to_vec()))
        .collect()
}

pub fn read_raw_frames(path: impl AsRef<Path>, width: usize, height: usize, frames: Option<usize>) -> Result<Vec<Plane>> {
    parse_raw_frames(&fs::read(path)?, width, height, frames)
}

/// Loads every `.pgm` file of a directory in lexicographic file-name order.
pub fn read_pgm_dir(dir: impl AsRef<Path>) -> Result<Vec<(std::path::PathBuf, Plane)>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let plane = read_pgm(&p)?;
            Ok((p, plane))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn pgm_with_comments() {
        let mut bytes = b"P5\n# made by hand\n3 2\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let p = parse_pgm(&bytes).unwrap();
        assert_eq!((p.width(), p.height()), (3, 2));
        assert_eq!(p.get(2, 1), 6);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(parse_pgm(b"P2\n1 1\n255\n0"), Err(Error::Format { .. })));
        assert!(matches!(parse_pgm(b"P5\n2 2\n255\n\x01"), Err(Error::Format { .. })));
        assert!(matches!(parse_pgm(b"P5\n2 2\n65535\n"), Err(Error::Format { .. })));
    }

    #[test]
    fn raw_frames_split() {
        let bytes: Vec<u8> = (0..24).collect();
        let frames = parse_raw_frames(&bytes, 4, 3, None).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].get(0, 0), 12);
        assert_eq!(parse_raw_frames(&bytes, 4, 3, Some(1)).unwrap().len(), 1);
        assert!(parse_raw_frames(&bytes, 5, 3, None).is_err());
        assert!(parse_raw_frames(&bytes, 4, 3, Some(3)).is_err());
    }

    #[test]
    fn crop_and_clamp() {
        let p = Plane::from_fn(5, 4, |x, y| (y * 5 + x) as u8).unwrap();
        let c = p.crop(1, 2, 3, 2).unwrap();
        assert_eq!(c.data(), &[11, 12, 13, 16, 17, 18]);
        assert_eq!(p.get_clamped(-3, 10), p.get(0, 3));
        assert!(p.crop(3, 0, 3, 1).is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let p = Plane::from_fn(w, h, |x, y| (seed.wrapping_mul(31).wrapping_add((x * 7 + y * 13) as u64) % 256) as u8).unwrap();
            prop_assert_eq!(parse_pgm(&encode_pgm(&p)).unwrap(), p);
        }
    }
}

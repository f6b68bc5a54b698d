//! HEVC luma DCT-based interpolation filters (DCTIF), 8-bit.
//!
//! Separable two-stage filtering: the horizontal pass keeps full precision
//! (`shift1 = bitdepth - 8 = 0`), the vertical pass shifts by 6, and the
//! uni-prediction output stage rounds with `(v + 32) >> 6` and clips. All
//! arithmetic is integer and bit-exact with the standard process. Samples
//! outside the plane replicate the nearest edge sample.

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::position::PositionId;

/// Luma filter taps indexed by quarter-pel phase, applied to `x-3 ..= x+4`.
///
/// Values are the normative HEVC luma coefficients; the 7-tap quarter
/// filters are padded with a zero tap so every phase has 8 entries.
pub const LUMA_FILTER: [[i32; 8]; 4] = [
    [0, 0, 0, 64, 0, 0, 0, 0],
    [-1, 4, -10, 58, 17, -5, 1, 0],
    [-1, 4, -11, 40, 40, -11, 4, -1],
    [0, 1, -5, 17, 58, -10, 4, -1],
];

/// Filter taps grouped by role.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterBank {
    pub half: [i32; 8],
    pub quarter_a: [i32; 7],
    pub quarter_c: [i32; 7],
    pub shift: u32,
}

impl FilterBank {
    pub const HEVC_LUMA: FilterBank = FilterBank {
        half: [-1, 4, -11, 40, 40, -11, 4, -1],
        quarter_a: [-1, 4, -10, 58, 17, -5, 1],
        quarter_c: [1, -5, 17, 58, -10, 4, -1],
        shift: 6,
    };
}

/// Minimum source size accepted by the interpolators.
pub const MIN_SIZE: usize = 8;

const TAPS_BEFORE: usize = 3;
const TAPS_AFTER: usize = 4;
const PAD: usize = TAPS_BEFORE + TAPS_AFTER;
const IF_SHIFT: u32 = 6;
const ROUND: i32 = 1 << (IF_SHIFT - 1);

/// One interpolated plane for each of the 15 fractional positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterpPlaneSet {
    planes: Vec<Plane>,
}

impl InterpPlaneSet {
    /// Builds a set from planes given in [`PositionId::all`] order.
    pub fn from_planes(planes: Vec<Plane>) -> Result<Self> {
        if planes.len() != 15 {
            return Err(Error::Input(format!("expected 15 planes, got {}", planes.len())));
        }
        let (w, h) = (planes[0].width(), planes[0].height());
        if planes.iter().any(|p| p.width() != w || p.height() != h) {
            return Err(Error::Input("interpolated planes differ in size".into()));
        }
        Ok(InterpPlaneSet { planes })
    }

    pub fn get(&self, pos: PositionId) -> &Plane {
        &self.planes[pos.index() as usize - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (PositionId, &Plane)> {
        PositionId::all().zip(&self.planes)
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }
}

fn check_size(src: &Plane) -> Result<()> {
    if src.width() < MIN_SIZE || src.height() < MIN_SIZE {
        return Err(Error::Input(format!(
            "interpolation needs at least {MIN_SIZE}x{MIN_SIZE}, got {}x{}",
            src.width(),
            src.height()
        )));
    }
    Ok(())
}

/// Source widened by the filter support with edge replication.
struct Padded {
    stride: usize,
    rows: usize,
    data: Vec<i32>,
}

impl Padded {
    fn new(src: &Plane) -> Self {
        let stride = src.width() + PAD;
        let rows = src.height() + PAD;
        let mut data = Vec::with_capacity(stride * rows);
        for r in 0..rows {
            let y = r as isize - TAPS_BEFORE as isize;
            for c in 0..stride {
                let x = c as isize - TAPS_BEFORE as isize;
                data.push(src.get_clamped(x, y) as i32);
            }
        }
        Padded { stride, rows, data }
    }
}

/// Horizontal stage for phase `dx` over every padded row, output `w` wide.
/// Phase 0 carries the integer sample scaled to the same 14-bit domain.
fn horizontal(p: &Padded, width: usize, dx: usize) -> Vec<i32> {
    let mut out = Vec::with_capacity(width * p.rows);
    let taps = &LUMA_FILTER[dx];
    for r in 0..p.rows {
        let row = &p.data[r * p.stride..(r + 1) * p.stride];
        if dx == 0 {
            out.extend(row[TAPS_BEFORE..TAPS_BEFORE + width].iter().map(|&v| v << IF_SHIFT));
        } else {
            out.extend(row.windows(8).take(width).map(|win| {
                win.iter().zip(taps).map(|(&s, &t)| s * t).sum::<i32>()
            }));
        }
    }
    out
}

/// Vertical stage and output rounding from a horizontal intermediate.
fn vertical(tmp: &[i32], width: usize, height: usize, dy: usize) -> Plane {
    let mut out = Vec::with_capacity(width * height);
    let taps = &LUMA_FILTER[dy];
    for y in 0..height {
        if dy == 0 {
            let row = &tmp[(y + TAPS_BEFORE) * width..][..width];
            out.extend(row.iter().map(|&v| clip((v + ROUND) >> IF_SHIFT)));
        } else {
            for x in 0..width {
                let mut acc = 0i32;
                for (t, &c) in taps.iter().enumerate() {
                    acc += c * tmp[(y + t) * width + x];
                }
                let v = acc >> IF_SHIFT;
                out.push(clip((v + ROUND) >> IF_SHIFT));
            }
        }
    }
    Plane::new(width, height, out).expect("dimensions come from a valid plane")
}

#[inline]
fn clip(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Interpolates the whole plane at one fractional position.
pub fn interpolate_position(src: &Plane, pos: PositionId) -> Result<Plane> {
    check_size(src)?;
    let padded = Padded::new(src);
    let tmp = horizontal(&padded, src.width(), pos.dx() as usize);
    Ok(vertical(&tmp, src.width(), src.height(), pos.dy() as usize))
}

/// All 15 positions; horizontal intermediates are shared between positions
/// with the same horizontal phase.
pub fn interpolate_all(src: &Plane) -> Result<InterpPlaneSet> {
    check_size(src)?;
    let padded = Padded::new(src);
    let (w, h) = (src.width(), src.height());
    let tmps: Vec<Vec<i32>> = (0..4).map(|dx| horizontal(&padded, w, dx)).collect();
    let planes = PositionId::all()
        .map(|pos| vertical(&tmps[pos.dx() as usize], w, h, pos.dy() as usize))
        .collect();
    InterpPlaneSet::from_planes(planes)
}

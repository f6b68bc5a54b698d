use crate::error::{Error, Result};
use crate::hevc::InterpPlaneSet;
use crate::plane::Plane;
use crate::position::PositionId;

/// Displacement in quarter-sample units. The prediction for sample `(x, y)`
/// is the reference at `(x + mvx / 4, y + mvy / 4)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub mvx: i32,
    pub mvy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { mvx: 0, mvy: 0 };

    pub fn new(mvx: i32, mvy: i32) -> Self {
        MotionVector { mvx, mvy }
    }

    pub fn from_integer(dx: i32, dy: i32) -> Self {
        MotionVector { mvx: 4 * dx, mvy: 4 * dy }
    }

    /// Integer part (floor) of the displacement.
    pub fn integer(self) -> (i32, i32) {
        (self.mvx.div_euclid(4), self.mvy.div_euclid(4))
    }

    /// Fractional phase in `0..4` per axis.
    pub fn fraction(self) -> (u8, u8) {
        (self.mvx.rem_euclid(4) as u8, self.mvy.rem_euclid(4) as u8)
    }
}

/// A rectangle of the current frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Tiles a `width × height` frame; edge blocks are cropped.
pub fn block_grid(width: usize, height: usize, size: usize) -> Vec<Block> {
    let mut blocks = Vec::new();
    for y in (0..height).step_by(size.max(1)) {
        for x in (0..width).step_by(size.max(1)) {
            blocks.push(Block { x, y, width: size.min(width - x), height: size.min(height - y) });
        }
    }
    blocks
}

/// The integer plane plus its 15 fractional planes.
#[derive(Clone, Debug)]
pub struct ReferencePlanes {
    integer: Plane,
    fractional: InterpPlaneSet,
}

impl ReferencePlanes {
    pub fn new(integer: Plane, fractional: InterpPlaneSet) -> Result<Self> {
        let p = fractional.get(PositionId::from_index(1).expect("valid index"));
        if p.width() != integer.width() || p.height() != integer.height() {
            return Err(Error::Simulation("interpolated planes do not match the integer plane".into()));
        }
        Ok(ReferencePlanes { integer, fractional })
    }

    pub fn integer(&self) -> &Plane {
        &self.integer
    }

    pub fn fractional(&self) -> &InterpPlaneSet {
        &self.fractional
    }

    /// Plane holding phase `(fx, fy)`.
    pub fn phase(&self, fx: u8, fy: u8) -> &Plane {
        match PositionId::new(fx, fy) {
            Some(pos) if pos.index() != 0 => self.fractional.get(pos),
            _ => &self.integer,
        }
    }

    /// Origin and plane for `block` displaced by `mv`, or `None` if the
    /// displaced block leaves the plane.
    fn locate(&self, block: &Block, mv: MotionVector) -> Option<(usize, usize, &Plane)> {
        let (ix, iy) = mv.integer();
        let (fx, fy) = mv.fraction();
        let x0 = block.x as i64 + ix as i64;
        let y0 = block.y as i64 + iy as i64;
        let fits = x0 >= 0
            && y0 >= 0
            && x0 as usize + block.width <= self.integer.width()
            && y0 as usize + block.height <= self.integer.height();
        fits.then(|| (x0 as usize, y0 as usize, self.phase(fx, fy)))
    }

    /// Copies the prediction for `block` into `dst` (a frame-sized buffer).
    pub fn predict_into(&self, block: &Block, mv: MotionVector, dst: &mut Plane) -> Result<()> {
        let (x0, y0, src) = self
            .locate(block, mv)
            .ok_or_else(|| Error::Simulation(format!("{mv:?} moves block at ({}, {}) off the reference", block.x, block.y)))?;
        for y in 0..block.height {
            for x in 0..block.width {
                dst.set(block.x + x, block.y + y, src.get(x0 + x, y0 + y));
            }
        }
        Ok(())
    }
}

fn sad_at(cur: &Plane, block: &Block, src: &Plane, x0: usize, y0: usize) -> u32 {
    let mut sad = 0u32;
    for y in 0..block.height {
        let a = &cur.row(block.y + y)[block.x..block.x + block.width];
        let b = &src.row(y0 + y)[x0..x0 + block.width];
        sad += a.iter().zip(b).map(|(&p, &q)| p.abs_diff(q) as u32).sum::<u32>();
    }
    sad
}

/// SAD between `block` of `cur` and its prediction under `mv`.
pub fn block_sad(cur: &Plane, block: &Block, refs: &ReferencePlanes, mv: MotionVector) -> Result<u32> {
    let (x0, y0, src) = refs
        .locate(block, mv)
        .ok_or_else(|| Error::Simulation(format!("{mv:?} moves block at ({}, {}) off the reference", block.x, block.y)))?;
    Ok(sad_at(cur, block, src, x0, y0))
}

/// Exhaustive integer search over displacements within `range` of `center`
/// (whole samples), clipped so the block stays inside `reference`.
///
/// Ties go to the smaller `|dy|`, then the smaller `|dx|`, then raster order.
pub fn full_search_integer(
    cur: &Plane,
    block: &Block,
    reference: &Plane,
    center: (i32, i32),
    range: usize,
) -> Result<(MotionVector, u32)> {
    let r = range as i64;
    let (w, h) = (reference.width() as i64, reference.height() as i64);
    let (bx, by) = (block.x as i64, block.y as i64);
    let (bw, bh) = (block.width as i64, block.height as i64);
    let dx_lo = (center.0 as i64 - r).max(-bx);
    let dx_hi = (center.0 as i64 + r).min(w - bw - bx);
    let dy_lo = (center.1 as i64 - r).max(-by);
    let dy_hi = (center.1 as i64 + r).min(h - bh - by);
    if dx_lo > dx_hi || dy_lo > dy_hi || bw == 0 || bh == 0 {
        return Err(Error::Simulation(format!("empty search window for block at ({bx}, {by})")));
    }
    let mut best: Option<(u32, u64, u64, i64, i64)> = None;
    for dy in dy_lo..=dy_hi {
        for dx in dx_lo..=dx_hi {
            let sad = sad_at(cur, block, reference, (bx + dx) as usize, (by + dy) as usize);
            let key = (sad, dy.unsigned_abs(), dx.unsigned_abs());
            if best.is_none_or(|b| key < (b.0, b.1, b.2)) {
                best = Some((key.0, key.1, key.2, dx, dy));
            }
        }
    }
    let (sad, _, _, dx, dy) = best.expect("window is non-empty");
    Ok((MotionVector::from_integer(dx as i32, dy as i32), sad))
}

/// Quarter-sample offsets tried around an integer vector. The zero offset is
/// first so it wins ties.
pub const FRACTIONAL_OFFSETS: [(i32, i32); 16] = {
    let mut out = [(0, 0); 16];
    let mut i = 1;
    let mut dy = -1;
    while dy <= 2 {
        let mut dx = -1;
        while dx <= 2 {
            if dx != 0 || dy != 0 {
                out[i] = (dx, dy);
                i += 1;
            }
            dx += 1;
        }
        dy += 1;
    }
    out
};

/// Tests the 16 quarter-sample offsets in [`FRACTIONAL_OFFSETS`] around
/// `mv_int` and keeps the first strict SAD minimum. Offsets whose block falls
/// off the reference are skipped.
pub fn fractional_refine(
    cur: &Plane,
    block: &Block,
    refs: &ReferencePlanes,
    mv_int: MotionVector,
) -> Result<(MotionVector, u32)> {
    let mut best = (mv_int, block_sad(cur, block, refs, mv_int)?);
    for &(ox, oy) in &FRACTIONAL_OFFSETS[1..] {
        let mv = MotionVector::new(mv_int.mvx + ox, mv_int.mvy + oy);
        if let Some((x0, y0, src)) = refs.locate(block, mv) {
            let sad = sad_at(cur, block, src, x0, y0);
            if sad < best.1 {
                best = (mv, sad);
            }
        }
    }
    Ok(best)
}

/// Length of the signed exp-Golomb code for `v`.
pub fn signed_exp_golomb_bits(v: i32) -> u32 {
    let k = if v > 0 { 2 * v as u64 - 1 } else { 2 * v.unsigned_abs() as u64 };
    2 * (k + 1).ilog2() + 1
}

/// Bit proxy for one motion vector: both components coded independently.
pub fn mv_bits(mv: MotionVector) -> u32 {
    signed_exp_golomb_bits(mv.mvx) + signed_exp_golomb_bits(mv.mvy)
}

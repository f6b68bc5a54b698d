//! The 15 fractional sample positions of the quarter-pel grid.

use std::fmt;

/// A sub-pixel position `(dx, dy)` in quarter-pel units, `(0, 0)` excluded.
///
/// The index `4*dy + dx` gives the customary `f1..f15` labels, so the three
/// half-pel positions are `f2 = (½,0)`, `f8 = (0,½)` and `f10 = (½,½)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PositionId(u8);

impl PositionId {
    pub fn new(dx: u8, dy: u8) -> Option<Self> {
        if dx < 4 && dy < 4 && (dx, dy) != (0, 0) {
            Some(PositionId(dy * 4 + dx))
        } else {
            None
        }
    }

    pub fn from_index(k: u8) -> Option<Self> {
        (1..16).contains(&k).then_some(PositionId(k))
    }

    /// `f`-label index in `1..=15`.
    pub fn index(self) -> u8 {
        self.0
    }

    /// Horizontal offset in quarter pels.
    pub fn dx(self) -> u8 {
        self.0 % 4
    }

    /// Vertical offset in quarter pels.
    pub fn dy(self) -> u8 {
        self.0 / 4
    }

    pub fn is_half(self) -> bool {
        self.dx() % 2 == 0 && self.dy() % 2 == 0
    }

    /// All 15 positions, row-major over `(dy, dx)`.
    pub fn all() -> impl Iterator<Item = PositionId> {
        (1..16).map(PositionId)
    }

    /// Head order of the half-pel network: `f2, f8, f10`.
    pub fn half() -> Vec<PositionId> {
        Self::all().filter(|p| p.is_half()).collect()
    }

    /// Head order of the quarter-pel network: the 12 positions with an odd
    /// offset on at least one axis, row-major over `(dy, dx)`.
    pub fn quarter() -> Vec<PositionId> {
        Self::all().filter(|p| !p.is_half()).collect()
    }
}

/// Which group of positions a network (and its training data) covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Three half-pel positions, sampled from 2×2 patches.
    H,
    /// Twelve quarter-pel positions, sampled from 4×4 patches.
    Q,
}

impl Variant {
    pub fn head_count(self) -> usize {
        match self {
            Variant::H => 3,
            Variant::Q => 12,
        }
    }

    /// Head order; target `j` of a sample pair belongs to `positions()[j]`.
    pub fn positions(self) -> Vec<PositionId> {
        match self {
            Variant::H => PositionId::half(),
            Variant::Q => PositionId::quarter(),
        }
    }

    /// Side of the sampling patch: integer samples are taken every `factor` pixels.
    pub fn factor(self) -> usize {
        match self {
            Variant::H => 2,
            Variant::Q => 4,
        }
    }

    /// Blur standard-deviation range used when synthesizing training data.
    pub fn default_std_range(self) -> (f64, f64) {
        match self {
            Variant::H => (0.5, 0.6),
            Variant::Q => (0.7, 0.8),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Variant::H => 0,
            Variant::Q => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::H),
            1 => Some(Variant::Q),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::H => "H",
            Variant::Q => "Q",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h" | "H" => Ok(Variant::H),
            "q" | "Q" => Ok(Variant::Q),
            other => Err(format!("unknown variant {other:?} (expected h or q)")),
        }
    }
}

impl fmt::Display for PositionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

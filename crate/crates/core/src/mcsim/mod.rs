//! Block motion-compensation simulator comparing DCTIF and GVTCNN reference
//! interpolation.
//!
//! For every frame `t >= 1` the reference is frame `t - 1` passed through the
//! reconstruction proxy. Each block gets an integer full search on the
//! integer reference, then a quarter-sample refinement on each interpolator's
//! planes. The selection mode decides which refined vector predicts the block.
//! Costs are `SAD + lambda * bits`, where bits count the exp-Golomb length of
//! both vector components plus, in `per_block_best` mode, a one-bit filter
//! flag.

mod search;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

pub use search::{
    block_grid, block_sad, fractional_refine, full_search_integer, mv_bits, signed_exp_golomb_bits, Block,
    MotionVector, ReferencePlanes, FRACTIONAL_OFFSETS,
};

use crate::datagen::reconstruction_proxy;
use crate::error::{Error, Result};
use crate::gvtcnn::{infer_positions, nearest_qp_tag, GvtcnnModel};
use crate::hevc::{interpolate_all, InterpPlaneSet};
use crate::metrics::psnr;
use crate::plane::Plane;
use crate::position::{PositionId, Variant};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SelectionMode {
    DctifOnly,
    GvtcnnOnly,
    #[default]
    PerBlockBest,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 3] = [SelectionMode::DctifOnly, SelectionMode::GvtcnnOnly, SelectionMode::PerBlockBest];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::DctifOnly => "dctif_only",
            SelectionMode::GvtcnnOnly => "gvtcnn_only",
            SelectionMode::PerBlockBest => "per_block_best",
        }
    }

    fn needs_gvtcnn(self) -> bool {
        self != SelectionMode::DctifOnly
    }

    fn flag_bits(self) -> u32 {
        u32::from(self == SelectionMode::PerBlockBest)
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown selection mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub block_size: usize,
    /// Integer search range in whole samples (±).
    pub search_range: usize,
    pub lambda: f64,
    pub selection_mode: SelectionMode,
    pub qp: u8,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            block_size: 16,
            search_range: 16,
            lambda: 4.0,
            selection_mode: SelectionMode::PerBlockBest,
            qp: 37,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::Config("block size must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.qp > crate::datagen::MAX_QP {
            return Err(Error::Config(format!("qp {} exceeds {}", self.qp, crate::datagen::MAX_QP)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Filter {
    Dctif,
    Gvtcnn,
}

/// A refined vector and its SAD for one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockCost {
    pub mv: MotionVector,
    pub sad: u32,
}

impl BlockCost {
    /// `sad + lambda * mv_bits`, without any flag bit.
    pub fn cost(&self, lambda: f64) -> f64 {
        self.sad as f64 + lambda * mv_bits(self.mv) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub filters: Vec<Filter>,
    /// Per-block cost including the flag bit.
    pub costs: Vec<f64>,
    pub total: f64,
}

/// Chooses the cheaper filter per block; ties keep DCTIF. Every block is
/// charged one flag bit.
pub fn select_per_block(costs_dctif: &[BlockCost], costs_gvtcnn: &[BlockCost], lambda: f64) -> Result<Selection> {
    if costs_dctif.len() != costs_gvtcnn.len() {
        return Err(Error::Simulation(format!(
            "cost arrays cover {} and {} blocks",
            costs_dctif.len(),
            costs_gvtcnn.len()
        )));
    }
    let mut filters = Vec::with_capacity(costs_dctif.len());
    let mut costs = Vec::with_capacity(costs_dctif.len());
    for (d, g) in costs_dctif.iter().zip(costs_gvtcnn) {
        let (cd, cg) = (d.cost(lambda), g.cost(lambda));
        let (filter, c) = if cg < cd { (Filter::Gvtcnn, cg) } else { (Filter::Dctif, cd) };
        filters.push(filter);
        costs.push(c + lambda);
    }
    let total = costs.iter().sum();
    Ok(Selection { filters, costs, total })
}

/// What the simulator decided for one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockDecision {
    pub block: Block,
    pub filter: Filter,
    pub mv: MotionVector,
    pub sad: u32,
    pub integer_mv: MotionVector,
    pub integer_sad: u32,
    pub dctif: BlockCost,
    pub gvtcnn: Option<BlockCost>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    /// Index of the predicted frame (the reference is `frame - 1`).
    pub frame: usize,
    pub psnr_db: f64,
    pub mean_sad: f64,
    pub mean_integer_sad: f64,
    pub mean_dctif_sad: f64,
    pub mean_gvtcnn_sad: Option<f64>,
    pub mv_bits: u64,
    pub flag_bits: u64,
    pub total_cost: f64,
    pub dctif_blocks: usize,
    pub gvtcnn_blocks: usize,
    pub decisions: Vec<BlockDecision>,
}

impl FrameReport {
    pub fn blocks(&self) -> usize {
        self.decisions.len()
    }

    pub fn proxy_bits(&self) -> u64 {
        self.mv_bits + self.flag_bits
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub mode: SelectionMode,
    pub lambda: f64,
    pub qp: u8,
    pub frames: Vec<FrameReport>,
}

/// Column order of [`McReport::to_csv`].
pub const CSV_COLUMNS: [&str; 14] = [
    "frame",
    "psnr_db",
    "mean_sad",
    "mean_integer_sad",
    "mean_dctif_sad",
    "mean_gvtcnn_sad",
    "mv_bits",
    "flag_bits",
    "proxy_bits",
    "total_cost",
    "blocks",
    "dctif_blocks",
    "gvtcnn_blocks",
    "mode",
];

impl McReport {
    pub fn total_cost(&self) -> f64 {
        self.frames.iter().map(|f| f.total_cost).sum()
    }

    pub fn total_blocks(&self) -> usize {
        self.frames.iter().map(FrameReport::blocks).sum()
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.psnr_db))
    }

    /// One row per predicted frame, then a `mean` row averaging the per-frame
    /// values. `mean_gvtcnn_sad` is empty when GVTCNN was not run.
    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{:.6},{},{},{},{}",
                f.frame,
                f.psnr_db,
                f.mean_sad,
                f.mean_integer_sad,
                f.mean_dctif_sad,
                opt(f.mean_gvtcnn_sad),
                f.mv_bits,
                f.flag_bits,
                f.proxy_bits(),
                f.total_cost,
                f.blocks(),
                f.dctif_blocks,
                f.gvtcnn_blocks,
                self.mode
            );
        }
        let fr = &self.frames;
        let m = |g: fn(&FrameReport) -> f64| mean(fr.iter().map(g));
        let gv = fr
            .iter()
            .map(|f| f.mean_gvtcnn_sad)
            .collect::<Option<Vec<_>>>()
            .map(|v| mean(v.into_iter()));
        let _ = writeln!(
            out,
            "mean,{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            m(|f| f.psnr_db),
            m(|f| f.mean_sad),
            m(|f| f.mean_integer_sad),
            m(|f| f.mean_dctif_sad),
            opt(gv),
            m(|f| f.mv_bits as f64),
            m(|f| f.flag_bits as f64),
            m(|f| f.proxy_bits() as f64),
            m(|f| f.total_cost),
            m(|f| f.blocks() as f64),
            m(|f| f.dctif_blocks as f64),
            m(|f| f.gvtcnn_blocks as f64),
            self.mode
        );
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// The H and Q models used for GVTCNN interpolation.
#[derive(Clone, Copy, Debug)]
pub struct ModelPair<'a> {
    pub h: &'a GvtcnnModel,
    pub q: &'a GvtcnnModel,
}

impl ModelPair<'_> {
    fn check(&self, qp: u8) -> Result<()> {
        for (model, variant) in [(self.h, Variant::H), (self.q, Variant::Q)] {
            let cfg = model.config();
            if cfg.variant != variant {
                return Err(Error::VariantMismatch { expected: variant.to_string(), found: cfg.variant.to_string() });
            }
            if cfg.qp_tag != nearest_qp_tag(qp) {
                return Err(Error::Config(format!(
                    "{variant} model is tagged qp {} but the simulation runs at qp {qp} (nearest tag {})",
                    cfg.qp_tag,
                    nearest_qp_tag(qp)
                )));
            }
        }
        Ok(())
    }
}

/// GVTCNN planes for all 15 positions: H supplies the half positions and Q
/// the quarter positions, both straight from the integer plane.
pub fn gvtcnn_plane_set(models: ModelPair<'_>, reference: &Plane) -> Result<InterpPlaneSet> {
    let mut slots: Vec<Option<Plane>> = vec![None; 15];
    for model in [models.h, models.q] {
        for (pos, plane) in infer_positions(model, reference)? {
            slots[pos.index() as usize - 1] = Some(plane);
        }
    }
    let planes = slots
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| Error::Simulation(format!("no model covers {}", PositionId::from_index(i as u8 + 1).expect("valid")))))
        .collect::<Result<Vec<_>>>()?;
    InterpPlaneSet::from_planes(planes)
}

/// Reference planes for predicting from `previous`: the proxy-degraded
/// integer plane with DCTIF planes, and GVTCNN planes when models are given.
pub fn reference_planes(
    previous: &Plane,
    qp: u8,
    models: Option<ModelPair<'_>>,
) -> Result<(ReferencePlanes, Option<ReferencePlanes>)> {
    let integer = reconstruction_proxy(previous, qp)?;
    let dctif = ReferencePlanes::new(integer.clone(), interpolate_all(&integer)?)?;
    let gvtcnn = match models {
        Some(m) => Some(ReferencePlanes::new(integer.clone(), gvtcnn_plane_set(m, &integer)?)?),
        None => None,
    };
    Ok((dctif, gvtcnn))
}

/// Rebuilds a frame's prediction from stored decisions.
pub fn assemble_prediction(
    width: usize,
    height: usize,
    decisions: &[BlockDecision],
    dctif: &ReferencePlanes,
    gvtcnn: Option<&ReferencePlanes>,
) -> Result<Plane> {
    let mut out = Plane::filled(width, height, 0)?;
    for d in decisions {
        let refs = match d.filter {
            Filter::Dctif => dctif,
            Filter::Gvtcnn => gvtcnn.ok_or_else(|| Error::Simulation("decision uses GVTCNN planes that are absent".into()))?,
        };
        refs.predict_into(&d.block, d.mv, &mut out)?;
    }
    Ok(out)
}

/// Runs motion estimation, refinement and selection over a sequence.
///
/// `models` is required unless the mode is `dctif_only`, and must carry the
/// QP tag nearest to `cfg.qp`.
pub fn simulate(frames: &[Plane], models: Option<ModelPair<'_>>, cfg: &SimConfig) -> Result<McReport> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(Error::Input(format!("simulation needs at least 2 frames, got {}", frames.len())));
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.width() != w || f.height() != h) {
        return Err(Error::Input(format!("frame {i} is {}x{}, expected {w}x{h}", f.width(), f.height())));
    }
    let models = if cfg.selection_mode.needs_gvtcnn() {
        let m = models.ok_or_else(|| Error::Config(format!("{} needs H and Q models", cfg.selection_mode)))?;
        m.check(cfg.qp)?;
        Some(m)
    } else {
        None
    };
    let blocks = block_grid(w, h, cfg.block_size);
    let mut reports = Vec::with_capacity(frames.len() - 1);
    for t in 1..frames.len() {
        let cur = &frames[t];
        let (dctif, gvtcnn) = reference_planes(&frames[t - 1], cfg.qp, models)?;
        let decisions = blocks
            .par_iter()
            .map(|b| decide(cur, b, &dctif, gvtcnn.as_ref(), cfg))
            .collect::<Result<Vec<_>>>()?;
        let prediction = assemble_prediction(w, h, &decisions, &dctif, gvtcnn.as_ref())?;
        let n = decisions.len() as f64;
        let gvtcnn_sad: Option<Vec<u32>> = decisions.iter().map(|d| d.gvtcnn.map(|c| c.sad)).collect();
        reports.push(FrameReport {
            frame: t,
            psnr_db: psnr(cur, &prediction),
            mean_sad: decisions.iter().map(|d| d.sad as f64).sum::<f64>() / n,
            mean_integer_sad: decisions.iter().map(|d| d.integer_sad as f64).sum::<f64>() / n,
            mean_dctif_sad: decisions.iter().map(|d| d.dctif.sad as f64).sum::<f64>() / n,
            mean_gvtcnn_sad: gvtcnn_sad.map(|v| v.iter().map(|&s| s as f64).sum::<f64>() / n),
            mv_bits: decisions.iter().map(|d| mv_bits(d.mv) as u64).sum(),
            flag_bits: decisions.len() as u64 * cfg.selection_mode.flag_bits() as u64,
            total_cost: decisions.iter().map(|d| d.cost).sum(),
            dctif_blocks: decisions.iter().filter(|d| d.filter == Filter::Dctif).count(),
            gvtcnn_blocks: decisions.iter().filter(|d| d.filter == Filter::Gvtcnn).count(),
            decisions,
        });
    }
    Ok(McReport {
        mode: cfg.selection_mode,
        lambda: cfg.lambda,
        qp: cfg.qp,
        frames: reports,
    })
}

fn decide(
    cur: &Plane,
    block: &Block,
    dctif: &ReferencePlanes,
    gvtcnn: Option<&ReferencePlanes>,
    cfg: &SimConfig,
) -> Result<BlockDecision> {
    let (integer_mv, integer_sad) = full_search_integer(cur, block, dctif.integer(), (0, 0), cfg.search_range)?;
    let refine = |refs: &ReferencePlanes| {
        fractional_refine(cur, block, refs, integer_mv).map(|(mv, sad)| BlockCost { mv, sad })
    };
    let d = refine(dctif)?;
    let g = gvtcnn.map(refine).transpose()?;
    let (filter, chosen, cost) = match (cfg.selection_mode, g) {
        (SelectionMode::DctifOnly, _) => (Filter::Dctif, d, d.cost(cfg.lambda)),
        (SelectionMode::GvtcnnOnly, Some(g)) => (Filter::Gvtcnn, g, g.cost(cfg.lambda)),
        (SelectionMode::PerBlockBest, Some(g)) => {
            let s = select_per_block(&[d], &[g], cfg.lambda)?;
            let chosen = if s.filters[0] == Filter::Gvtcnn { g } else { d };
            (s.filters[0], chosen, s.costs[0])
        }
        (mode, None) => return Err(Error::Simulation(format!("{mode} without GVTCNN planes"))),
    };
    Ok(BlockDecision {
        block: *block,
        filter,
        mv: chosen.mv,
        sad: chosen.sad,
        integer_mv,
        integer_sad,
        dctif: d,
        gvtcnn: g,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gvtcnn::{build_model, GvtcnnConfig};
    use crate::synth::synthetic_sequence;

    fn bc(sad: u32) -> BlockCost {
        BlockCost { mv: MotionVector::ZERO, sad }
    }

    #[test]
    fn lambda_zero_strictly_better_gvtcnn_wins() {
        let s = select_per_block(&[bc(10), bc(5)], &[bc(9), bc(4)], 0.0).unwrap();
        assert_eq!(s.filters, vec![Filter::Gvtcnn; 2]);
        assert_eq!(s.total, 13.0);
    }

    #[test]
    fn ties_keep_dctif() {
        let s = select_per_block(&[bc(7), bc(3)], &[bc(7), bc(3)], 2.0).unwrap();
        assert_eq!(s.filters, vec![Filter::Dctif; 2]);
        // zero vector: 1 + 1 bits, plus the flag bit
        assert_eq!(s.costs, vec![7.0 + 2.0 * 2.0 + 2.0, 3.0 + 2.0 * 2.0 + 2.0]);
    }

    #[test]
    fn mismatched_costs_rejected() {
        assert!(select_per_block(&[bc(1)], &[], 1.0).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in SelectionMode::ALL {
            assert_eq!(m.as_str().parse::<SelectionMode>().unwrap(), m);
        }
        assert!("best".parse::<SelectionMode>().is_err());
    }

    #[test]
    fn static_sequence_near_lossless() {
        let f = crate::synth::synthetic_plane(48, 32, 1);
        let cfg = SimConfig { selection_mode: SelectionMode::DctifOnly, qp: 4, search_range: 4, ..SimConfig::default() };
        let r = simulate(&[f.clone(), f.clone(), f], None, &cfg).unwrap();
        for fr in &r.frames {
            assert!(fr.psnr_db >= 50.0, "{}", fr.psnr_db);
            assert_eq!(fr.dctif_blocks, fr.blocks());
            assert!(fr.decisions.iter().all(|d| d.integer_mv == MotionVector::ZERO));
        }
    }

    #[test]
    fn input_errors() {
        let a = Plane::filled(32, 32, 1).unwrap();
        let b = Plane::filled(32, 16, 1).unwrap();
        let cfg = SimConfig { selection_mode: SelectionMode::DctifOnly, ..SimConfig::default() };
        assert!(matches!(simulate(&[a.clone()], None, &cfg), Err(Error::Input(_))));
        assert!(matches!(simulate(&[a.clone(), b], None, &cfg), Err(Error::Input(_))));
        let per_block = SimConfig::default();
        assert!(matches!(simulate(&[a.clone(), a.clone()], None, &per_block), Err(Error::Config(_))));
        let bad = SimConfig { lambda: -1.0, ..cfg };
        assert!(simulate(&[a.clone(), a], None, &bad).is_err());
    }

    #[test]
    fn model_tags_are_checked() {
        let h = build_model(&GvtcnnConfig::new(Variant::H, 22), 0).unwrap();
        let q = build_model(&GvtcnnConfig::new(Variant::Q, 22), 0).unwrap();
        let frames = synthetic_sequence(32, 32, 2, (0.5, 0.0), 2);
        let cfg = SimConfig { qp: 37, ..SimConfig::default() };
        assert!(matches!(simulate(&frames, Some(ModelPair { h: &h, q: &q }), &cfg), Err(Error::Config(_))));
        let swapped = SimConfig { qp: 22, ..cfg };
        assert!(matches!(
            simulate(&frames, Some(ModelPair { h: &q, q: &h }), &swapped),
            Err(Error::VariantMismatch { .. })
        ));
    }

    #[test]
    fn report_is_self_consistent() {
        let h = build_model(&GvtcnnConfig::new(Variant::H, 27), 1).unwrap();
        let q = build_model(&GvtcnnConfig::new(Variant::Q, 27), 2).unwrap();
        let models = ModelPair { h: &h, q: &q };
        let frames = synthetic_sequence(40, 36, 3, (0.75, -0.5), 5);
        let cfg = SimConfig { qp: 27, search_range: 4, lambda: 1.5, ..SimConfig::default() };
        let r = simulate(&frames, Some(models), &cfg).unwrap();
        for fr in &r.frames {
            assert_eq!(fr.dctif_blocks + fr.gvtcnn_blocks, fr.blocks());
            let (d, g) = reference_planes(&frames[fr.frame - 1], cfg.qp, Some(models)).unwrap();
            let pred = assemble_prediction(40, 36, &fr.decisions, &d, g.as_ref()).unwrap();
            assert_eq!(psnr(&frames[fr.frame], &pred), fr.psnr_db);
            for dec in &fr.decisions {
                assert!(dec.sad <= dec.integer_sad);
                let best = dec.dctif.cost(cfg.lambda).min(dec.gvtcnn.unwrap().cost(cfg.lambda));
                assert_eq!(dec.cost, best + cfg.lambda);
            }
        }
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + r.frames.len() + 1);
        assert!(csv.lines().last().unwrap().starts_with("mean,"));
    }
}

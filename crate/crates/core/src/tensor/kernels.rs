//! Direct 3×3 correlation kernels over pre-padded planes.
//!
//! Every accumulation is a fused multiply-add in a fixed order, so the
//! vectorized and scalar paths, and every dispatch tier, produce identical
//! bits.

use super::conv::PaddingMode;
use super::Scalar;

const TAPS: usize = 9;
/// Output pixels computed together along a row.
const STRIP: usize = 16;
/// Output channels computed together.
const OC_BLOCK: usize = 4;
/// Lanes per accumulator in the weight-gradient reduction.
const GL: usize = 8;

/// Runs a portable kernel body with FMA enabled when the CPU has it, so
/// `mul_add` becomes one instruction instead of a library call. Results are
/// identical either way.
macro_rules! with_fma {
    ($body:ident($($arg:expr),*)) => {{
        #[cfg(target_arch = "x86_64")]
        {
            #[target_feature(enable = "fma")]
            unsafe fn fma<T: Scalar>(f: impl FnOnce() -> T) -> T {
                f()
            }
            if std::arch::is_x86_feature_detected!("fma") {
                // SAFETY: FMA was detected at runtime.
                unsafe { fma(|| { $body($($arg),*); T::zero() }) };
                return;
            }
        }
        $body($($arg),*)
    }};
}

/// Weights in `[block][in][tap][o]` order, zero-filled past `out_ch`.
pub(crate) struct Packed<T> {
    data: Vec<T>,
    out_ch: usize,
    in_ch: usize,
}

impl<T: Scalar> Packed<T> {
    /// `get(o, i, t)` supplies the weight for output `o`, input `i`, tap `t`.
    pub(crate) fn new(out_ch: usize, in_ch: usize, get: impl Fn(usize, usize, usize) -> T) -> Self {
        let blocks = out_ch.div_ceil(OC_BLOCK);
        let mut data = vec![T::zero(); blocks * in_ch * TAPS * OC_BLOCK];
        for o in 0..out_ch {
            let (b, ob) = (o / OC_BLOCK, o % OC_BLOCK);
            for i in 0..in_ch {
                for t in 0..TAPS {
                    data[((b * in_ch + i) * TAPS + t) * OC_BLOCK + ob] = get(o, i, t);
                }
            }
        }
        Packed { data, out_ch, in_ch }
    }

    /// Forward weights from an `(out, in, 3, 3)` array.
    pub(crate) fn forward(weights: &[T], out_ch: usize, in_ch: usize) -> Self {
        Packed::new(out_ch, in_ch, |o, i, t| weights[(o * in_ch + i) * TAPS + t])
    }

    /// Weights of the adjoint correlation: channels swapped, kernel flipped.
    pub(crate) fn adjoint(weights: &[T], out_ch: usize, in_ch: usize) -> Self {
        Packed::new(in_ch, out_ch, |i, o, t| weights[(o * in_ch + i) * TAPS + (TAPS - 1 - t)])
    }
}

/// Copies `ch` planes of `h × w` into planes with a border of `border` samples.
pub(crate) fn pad_planes<T: Scalar>(src: &[T], ch: usize, h: usize, w: usize, border: usize, mode: PaddingMode) -> Vec<T> {
    let (ph, pw) = (h + 2 * border, w + 2 * border);
    let mut out = vec![T::zero(); ch * ph * pw];
    for c in 0..ch {
        let plane = &src[c * h * w..(c + 1) * h * w];
        let dst = &mut out[c * ph * pw..(c + 1) * ph * pw];
        for py in 0..ph {
            let sy = py as isize - border as isize;
            let sy = match mode {
                PaddingMode::Replicate => sy.clamp(0, h as isize - 1) as usize,
                PaddingMode::Zero if (0..h as isize).contains(&sy) => sy as usize,
                PaddingMode::Zero => continue,
            };
            let row = &plane[sy * w..(sy + 1) * w];
            let drow = &mut dst[py * pw..(py + 1) * pw];
            drow[border..border + w].copy_from_slice(row);
            if mode == PaddingMode::Replicate {
                drow[..border].fill(row[0]);
                drow[border + w..].fill(row[w - 1]);
            }
        }
    }
    out
}

/// Adds the part of the input gradient that flows through the replicated
/// halo: each halo cell of the padded input collects `Σ w · g` and passes it
/// to the edge sample it was copied from. `weights` is `(out, in, 3, 3)`.
pub(crate) fn add_halo_grad<T: Scalar>(g: &[T], weights: &[T], out_ch: usize, in_ch: usize, h: usize, w: usize, dst: &mut [T]) {
    with_fma!(add_halo_grad_body(g, weights, out_ch, in_ch, h, w, dst))
}

#[inline(always)]
fn add_halo_grad_body<T: Scalar>(g: &[T], weights: &[T], out_ch: usize, in_ch: usize, h: usize, w: usize, dst: &mut [T]) {
    let hw = h * w;
    // halo rows span padded columns 0..w+2; halo columns span padded rows 1..=h
    let mut top = vec![T::zero(); w + 2];
    let mut bottom = vec![T::zero(); w + 2];
    let mut left = vec![T::zero(); h];
    let mut right = vec![T::zero(); h];
    for i in 0..in_ch {
        top.fill(T::zero());
        bottom.fill(T::zero());
        left.fill(T::zero());
        right.fill(T::zero());
        for o in 0..out_ch {
            let wk = &weights[(o * in_ch + i) * TAPS..][..TAPS];
            let gp = &g[o * hw..(o + 1) * hw];
            // padded row 0 sees only ky = 0 on cotangent row 0; row h+1 only ky = 2 on row h-1
            let (g_first, g_last) = (&gp[..w], &gp[(h - 1) * w..]);
            for px in 0..w + 2 {
                for kx in 0..3 {
                    if px >= kx && px - kx < w {
                        top[px] = wk[kx].mul_add(g_first[px - kx], top[px]);
                        bottom[px] = wk[6 + kx].mul_add(g_last[px - kx], bottom[px]);
                    }
                }
            }
            // padded column 0 sees only kx = 0 on cotangent column 0; column w+1 only kx = 2
            for y in 0..h {
                let py = y + 1;
                for ky in 0..3 {
                    if py >= ky && py - ky < h {
                        let row = (py - ky) * w;
                        left[y] = wk[ky * 3].mul_add(gp[row], left[y]);
                        right[y] = wk[ky * 3 + 2].mul_add(gp[row + w - 1], right[y]);
                    }
                }
            }
        }
        let plane = &mut dst[i * hw..(i + 1) * hw];
        for px in 0..w + 2 {
            let x = px.saturating_sub(1).min(w - 1);
            plane[x] = plane[x] + top[px];
            plane[(h - 1) * w + x] = plane[(h - 1) * w + x] + bottom[px];
        }
        for y in 0..h {
            plane[y * w] = plane[y * w] + left[y];
            plane[y * w + w - 1] = plane[y * w + w - 1] + right[y];
        }
    }
}

/// `dst[o][y][x] = bias[o] + Σ_i Σ_t w[o][i][t] · src[i][y+ky][x+kx]` with
/// `src` holding `(h+2) × (w+2)` planes. `bias` may be empty for zero.
pub(crate) fn correlate<T: Scalar>(src: &[T], h: usize, w: usize, k: &Packed<T>, bias: &[T], dst: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if w >= STRIP && simd::available::<T>() {
        // SAFETY: T is f32 and AVX2/FMA were detected at runtime.
        unsafe {
            let (src, k, bias, dst) = (simd::cast(src), simd::cast_packed(k), simd::cast(bias), simd::cast_mut(dst));
            return simd::correlate_f32(src, h, w, k, bias, dst);
        }
    }
    with_fma!(correlate_body(src, h, w, k, bias, dst))
}

#[inline(always)]
fn correlate_body<T: Scalar>(src: &[T], h: usize, w: usize, k: &Packed<T>, bias: &[T], dst: &mut [T]) {
    let (sw, plane, hw) = (w + 2, (h + 2) * (w + 2), h * w);
    let in_ch = k.in_ch;
    debug_assert!(src.len() >= in_ch * plane && dst.len() >= k.out_ch * hw);
    for (blk, o0) in (0..k.out_ch).step_by(OC_BLOCK).enumerate() {
        let nb = OC_BLOCK.min(k.out_ch - o0);
        let wb = &k.data[blk * in_ch * TAPS * OC_BLOCK..][..in_ch * TAPS * OC_BLOCK];
        let mut b0 = [T::zero(); OC_BLOCK];
        if !bias.is_empty() {
            b0[..nb].copy_from_slice(&bias[o0..o0 + nb]);
        }
        for y in 0..h {
            if w >= STRIP {
                // the last strip overlaps the previous one; overlapped pixels
                // are recomputed with identical results
                let mut x = 0;
                loop {
                    let xs = x.min(w - STRIP);
                    let mut acc = [[T::zero(); STRIP]; OC_BLOCK];
                    for o in 0..OC_BLOCK {
                        acc[o] = [b0[o]; STRIP];
                    }
                    for i in 0..in_ch {
                        let base = i * plane + y * sw + xs;
                        for ky in 0..3 {
                            let row = &src[base + ky * sw..][..STRIP + 2];
                            for kx in 0..3 {
                                let v: &[T; STRIP] = row[kx..kx + STRIP].try_into().expect("strip length");
                                let wt: &[T; OC_BLOCK] = wb[(i * TAPS + ky * 3 + kx) * OC_BLOCK..][..OC_BLOCK]
                                    .try_into()
                                    .expect("block length");
                                for o in 0..OC_BLOCK {
                                    for l in 0..STRIP {
                                        acc[o][l] = wt[o].mul_add(v[l], acc[o][l]);
                                    }
                                }
                            }
                        }
                    }
                    for o in 0..nb {
                        dst[(o0 + o) * hw + y * w + xs..][..STRIP].copy_from_slice(&acc[o]);
                    }
                    if xs + STRIP >= w {
                        break;
                    }
                    x += STRIP;
                }
            } else {
                for x in 0..w {
                    let mut acc = b0;
                    for i in 0..in_ch {
                        let base = i * plane + y * sw + x;
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let v = src[base + ky * sw + kx];
                                let wt = &wb[(i * TAPS + ky * 3 + kx) * OC_BLOCK..][..OC_BLOCK];
                                for o in 0..OC_BLOCK {
                                    acc[o] = wt[o].mul_add(v, acc[o]);
                                }
                            }
                        }
                    }
                    for o in 0..nb {
                        dst[(o0 + o) * hw + y * w + x] = acc[o];
                    }
                }
            }
        }
    }
}

/// `gw[o][i][t] += Σ_y Σ_x g[o][y][x] · src[i][y+ky][x+kx]`, `src` padded as
/// for [`correlate`], `g` holding `out_ch` planes of `h × w`.
pub(crate) fn weight_grad<T: Scalar>(src: &[T], h: usize, w: usize, g: &[T], out_ch: usize, in_ch: usize, gw: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if simd::available::<T>() {
        // SAFETY: T is f32 and AVX2/FMA were detected at runtime.
        unsafe {
            let (src, g, gw) = (simd::cast(src), simd::cast(g), simd::cast_mut(gw));
            return simd::weight_grad_f32(src, h, w, g, out_ch, in_ch, gw);
        }
    }
    with_fma!(weight_grad_body(src, h, w, g, out_ch, in_ch, gw))
}

#[inline(always)]
fn weight_grad_body<T: Scalar>(src: &[T], h: usize, w: usize, g: &[T], out_ch: usize, in_ch: usize, gw: &mut [T]) {
    let (sw, plane, hw) = (w + 2, (h + 2) * (w + 2), h * w);
    let zeros = vec![T::zero(); w];
    let full = w / GL * GL;
    for i in 0..in_ch {
        for o0 in (0..out_ch).step_by(OC_BLOCK) {
            let nb = OC_BLOCK.min(out_ch - o0);
            for ky in 0..3 {
                let mut acc = [[[T::zero(); GL]; 3]; OC_BLOCK];
                let mut tail = [[T::zero(); 3]; OC_BLOCK];
                for y in 0..h {
                    let srow = &src[i * plane + (y + ky) * sw..][..sw];
                    let grows: [&[T]; OC_BLOCK] = std::array::from_fn(|o| {
                        if o < nb {
                            &g[(o0 + o) * hw + y * w..][..w]
                        } else {
                            &zeros[..]
                        }
                    });
                    for xs in (0..full).step_by(GL) {
                        let s: [&[T; GL]; 3] =
                            std::array::from_fn(|kx| srow[xs + kx..][..GL].try_into().expect("lane count"));
                        for o in 0..OC_BLOCK {
                            let gv: &[T; GL] = grows[o][xs..][..GL].try_into().expect("lane count");
                            for kx in 0..3 {
                                for l in 0..GL {
                                    acc[o][kx][l] = gv[l].mul_add(s[kx][l], acc[o][kx][l]);
                                }
                            }
                        }
                    }
                    for x in full..w {
                        for o in 0..OC_BLOCK {
                            for kx in 0..3 {
                                tail[o][kx] = grows[o][x].mul_add(srow[x + kx], tail[o][kx]);
                            }
                        }
                    }
                }
                for o in 0..nb {
                    for kx in 0..3 {
                        let sum = acc[o][kx].iter().fold(tail[o][kx], |a, &v| a + v);
                        let idx = ((o0 + o) * in_ch + i) * TAPS + ky * 3 + kx;
                        gw[idx] = gw[idx] + sum;
                    }
                }
            }
        }
    }
}

/// AVX2/FMA versions of the `f32` kernels. Each lane performs the same fused
/// operations in the same order as the portable code.
#[cfg(target_arch = "x86_64")]
mod simd {
    use std::any::TypeId;
    use std::arch::x86_64::*;

    use super::{Packed, Scalar, GL, OC_BLOCK, STRIP, TAPS};

    pub(super) fn available<T: Scalar>() -> bool {
        TypeId::of::<T>() == TypeId::of::<f32>()
            && std::arch::is_x86_feature_detected!("avx2")
            && std::arch::is_x86_feature_detected!("fma")
    }

    /// # Safety
    /// `T` must be `f32`.
    pub(super) unsafe fn cast<T: Scalar>(s: &[T]) -> &[f32] {
        std::slice::from_raw_parts(s.as_ptr().cast(), s.len())
    }

    /// # Safety
    /// `T` must be `f32`.
    pub(super) unsafe fn cast_mut<T: Scalar>(s: &mut [T]) -> &mut [f32] {
        std::slice::from_raw_parts_mut(s.as_mut_ptr().cast(), s.len())
    }

    /// # Safety
    /// `T` must be `f32`.
    pub(super) unsafe fn cast_packed<T: Scalar>(k: &Packed<T>) -> &Packed<f32> {
        &*(k as *const Packed<T>).cast::<Packed<f32>>()
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn correlate_f32(src: &[f32], h: usize, w: usize, k: &Packed<f32>, bias: &[f32], dst: &mut [f32]) {
        const _: () = assert!(STRIP == 16 && OC_BLOCK == 4);
        let (sw, plane, hw) = (w + 2, (h + 2) * (w + 2), h * w);
        let in_ch = k.in_ch;
        assert!(w >= STRIP && src.len() >= in_ch * plane && dst.len() >= k.out_ch * hw);
        for (blk, o0) in (0..k.out_ch).step_by(OC_BLOCK).enumerate() {
            let nb = OC_BLOCK.min(k.out_ch - o0);
            let wb = k.data[blk * in_ch * TAPS * OC_BLOCK..][..in_ch * TAPS * OC_BLOCK].as_ptr();
            let mut b0 = [0.0f32; OC_BLOCK];
            if !bias.is_empty() {
                b0[..nb].copy_from_slice(&bias[o0..o0 + nb]);
            }
            for y in 0..h {
                let mut x = 0;
                loop {
                    let xs = x.min(w - STRIP);
                    let mut acc = [_mm256_setzero_ps(); 2 * OC_BLOCK];
                    for o in 0..OC_BLOCK {
                        acc[2 * o] = _mm256_set1_ps(b0[o]);
                        acc[2 * o + 1] = acc[2 * o];
                    }
                    for i in 0..in_ch {
                        let base = src.as_ptr().add(i * plane + y * sw + xs);
                        for ky in 0..3 {
                            let row = base.add(ky * sw);
                            for kx in 0..3 {
                                let v0 = _mm256_loadu_ps(row.add(kx));
                                let v1 = _mm256_loadu_ps(row.add(kx + 8));
                                let wt = wb.add((i * TAPS + ky * 3 + kx) * OC_BLOCK);
                                for o in 0..OC_BLOCK {
                                    let wv = _mm256_broadcast_ss(&*wt.add(o));
                                    acc[2 * o] = _mm256_fmadd_ps(wv, v0, acc[2 * o]);
                                    acc[2 * o + 1] = _mm256_fmadd_ps(wv, v1, acc[2 * o + 1]);
                                }
                            }
                        }
                    }
                    for o in 0..nb {
                        let d = dst[(o0 + o) * hw + y * w + xs..][..STRIP].as_mut_ptr();
                        _mm256_storeu_ps(d, acc[2 * o]);
                        _mm256_storeu_ps(d.add(8), acc[2 * o + 1]);
                    }
                    if xs + STRIP >= w {
                        break;
                    }
                    x += STRIP;
                }
            }
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn weight_grad_f32(
        src: &[f32],
        h: usize,
        w: usize,
        g: &[f32],
        out_ch: usize,
        in_ch: usize,
        gw: &mut [f32],
    ) {
        const _: () = assert!(GL == 8);
        let (sw, plane, hw) = (w + 2, (h + 2) * (w + 2), h * w);
        assert!(src.len() >= in_ch * plane && g.len() >= out_ch * hw && gw.len() >= out_ch * in_ch * TAPS);
        let zeros = vec![0.0f32; w];
        let full = w / GL * GL;
        for i in 0..in_ch {
            for o0 in (0..out_ch).step_by(OC_BLOCK) {
                let nb = OC_BLOCK.min(out_ch - o0);
                for ky in 0..3 {
                    let mut acc = [[_mm256_setzero_ps(); 3]; OC_BLOCK];
                    let mut tail = [[0.0f32; 3]; OC_BLOCK];
                    // rows of blocks past out_ch read a zero row (stride 0)
                    let gbase: [(*const f32, usize); OC_BLOCK] = std::array::from_fn(|o| {
                        if o < nb {
                            (g[(o0 + o) * hw..][..hw].as_ptr(), w)
                        } else {
                            (zeros.as_ptr(), 0)
                        }
                    });
                    let sbase = src[i * plane + ky * sw..][..h * sw].as_ptr();
                    for y in 0..h {
                        let srow = sbase.add(y * sw);
                        let grows: [*const f32; OC_BLOCK] = std::array::from_fn(|o| gbase[o].0.add(y * gbase[o].1));
                        let mut xs = 0;
                        while xs < full {
                            let s0 = _mm256_loadu_ps(srow.add(xs));
                            let s1 = _mm256_loadu_ps(srow.add(xs + 1));
                            let s2 = _mm256_loadu_ps(srow.add(xs + 2));
                            for o in 0..OC_BLOCK {
                                let gv = _mm256_loadu_ps(grows[o].add(xs));
                                acc[o][0] = _mm256_fmadd_ps(gv, s0, acc[o][0]);
                                acc[o][1] = _mm256_fmadd_ps(gv, s1, acc[o][1]);
                                acc[o][2] = _mm256_fmadd_ps(gv, s2, acc[o][2]);
                            }
                            xs += GL;
                        }
                        for x in full..w {
                            for o in 0..OC_BLOCK {
                                for kx in 0..3 {
                                    tail[o][kx] = (*grows[o].add(x)).mul_add(*srow.add(x + kx), tail[o][kx]);
                                }
                            }
                        }
                    }
                    for o in 0..nb {
                        for kx in 0..3 {
                            let mut lanes = [0.0f32; GL];
                            _mm256_storeu_ps(lanes.as_mut_ptr(), acc[o][kx]);
                            let sum = lanes.iter().fold(tail[o][kx], |a, &v| a + v);
                            let idx = ((o0 + o) * in_ch + i) * TAPS + ky * 3 + kx;
                            gw[idx] += sum;
                        }
                    }
                }
            }
        }
    }
}

//! Stand-in for coding the integer sample with a real encoder: 8×8 block DCT,
//! uniform quantization with the HEVC QP→Qstep law, reconstruction.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::plane::Plane;

pub const MAX_QP: u8 = 51;
const N: usize = 8;

/// Quantization step `2^((qp - 4) / 6)`.
pub fn qstep(qp: u8) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0)
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn basis() -> &'static [[f64; N]; N] {
    static BASIS: OnceLock<[[f64; N]; N]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; N]; N];
        for (k, row) in b.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0 / N as f64).sqrt() } else { (2.0 / N as f64).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha * ((2 * n + 1) as f64 * k as f64 * PI / (2 * N) as f64).cos();
            }
        }
        b
    })
}

fn forward(block: &[[f64; N]; N]) -> [[f64; N]; N] {
    let c = basis();
    let mut tmp = [[0.0; N]; N];
    for u in 0..N {
        for x in 0..N {
            tmp[u][x] = (0..N).map(|y| c[u][y] * block[y][x]).sum();
        }
    }
    let mut out = [[0.0; N]; N];
    for u in 0..N {
        for v in 0..N {
            out[u][v] = (0..N).map(|x| tmp[u][x] * c[v][x]).sum();
        }
    }
    out
}

fn inverse(coef: &[[f64; N]; N]) -> [[f64; N]; N] {
    let c = basis();
    let mut tmp = [[0.0; N]; N];
    for y in 0..N {
        for v in 0..N {
            tmp[y][v] = (0..N).map(|u| c[u][y] * coef[u][v]).sum();
        }
    }
    let mut out = [[0.0; N]; N];
    for y in 0..N {
        for x in 0..N {
            out[y][x] = (0..N).map(|v| tmp[y][v] * c[v][x]).sum();
        }
    }
    out
}

/// Simulated reconstruction of `plane` after lossy coding at `qp`.
///
/// Blocks overhanging the bottom/right edge are filled by edge replication
/// and cropped back afterwards.
pub fn reconstruction_proxy(plane: &Plane, qp: u8) -> Result<Plane> {
    if qp > MAX_QP {
        return Err(Error::Parameter(format!("qp {qp} outside [0, {MAX_QP}]")));
    }
    let step = qstep(qp);
    let (w, h) = (plane.width(), plane.height());
    let mut out = plane.clone();
    for by in (0..h).step_by(N) {
        for bx in (0..w).step_by(N) {
            let mut block = [[0.0; N]; N];
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = plane.get_clamped((bx + x) as isize, (by + y) as isize) as f64;
                }
            }
            let mut coef = forward(&block);
            for c in coef.iter_mut().flatten() {
                *c = (*c / step).round() * step;
            }
            let rec = inverse(&coef);
            for (y, row) in rec.iter().enumerate() {
                for (x, &v) in row.iter().enumerate() {
                    if bx + x < w && by + y < h {
                        out.set(bx + x, by + y, super::quantize_sample(v));
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    fn noise(w: usize, h: usize, seed: u32) -> Plane {
        let mut s = seed.wrapping_mul(2654435761).wrapping_add(1);
        Plane::from_fn(w, h, |_, _| {
            s ^= s << 13;
            s ^= s >> 17;
            s ^= s << 5;
            (s >> 24) as u8
        })
        .unwrap()
    }

    #[test]
    fn qstep_law() {
        assert_eq!(qstep(4), 1.0);
        assert!((qstep(10) - 2.0).abs() < 1e-12);
        assert!((qstep(37) - 2f64.powf(5.5)).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal() {
        let c = basis();
        for i in 0..N {
            for j in 0..N {
                let d: f64 = (0..N).map(|n| c[i][n] * c[j][n]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_step_is_near_lossless() {
        for seed in 0..4 {
            let p = noise(40, 24, seed);
            let r = reconstruction_proxy(&p, 4).unwrap();
            assert!(psnr(&p, &r) >= 50.0, "{}", psnr(&p, &r));
        }
    }

    #[test]
    fn constants_on_the_reconstruction_grid_survive() {
        for qp in 0..=MAX_QP {
            let zero = Plane::filled(16, 16, 0).unwrap();
            assert_eq!(reconstruction_proxy(&zero, qp).unwrap(), zero);
        }
        // DC of a constant c is 8c; it survives when round(8c/q)*q/8 rounds back to c.
        for qp in 0..=MAX_QP {
            for c in [1u8, 17, 128, 200, 255] {
                let q = qstep(qp);
                let dc = ((8.0 * c as f64) / q).round() * q / 8.0;
                let expect = dc.round().clamp(0.0, 255.0) as u8;
                let p = Plane::filled(16, 8, c).unwrap();
                let r = reconstruction_proxy(&p, qp).unwrap();
                assert!(r.data().iter().all(|&v| v == expect), "qp {qp} c {c}");
            }
        }
        let full = Plane::filled(16, 16, 255).unwrap();
        for qp in [4, 22, 27, 37, 51] {
            assert_eq!(reconstruction_proxy(&full, qp).unwrap(), full);
        }
    }

    #[test]
    fn ragged_edges_keep_size() {
        let p = noise(13, 11, 9);
        let r = reconstruction_proxy(&p, 30).unwrap();
        assert_eq!((r.width(), r.height()), (13, 11));
        assert!(reconstruction_proxy(&p, 52).is_err());
    }
}

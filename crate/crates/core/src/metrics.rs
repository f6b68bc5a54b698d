use crate::plane::Plane;

/// PSNR reported for identical inputs, where the ratio is unbounded.
pub const PSNR_CAP_DB: f64 = 100.0;

pub fn mse(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len(), "mse over slices of different length");
    let sum: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    sum as f64 / a.len() as f64
}

/// Peak signal-to-noise ratio for 8-bit samples, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(a: &Plane, b: &Plane) -> f64 {
    psnr_from_mse(mse(a.data(), b.data()))
}

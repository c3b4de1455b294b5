//! Image metrics.

use crate::error::{NovaError, Result};

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// `10 log10(1 / MSE)` over all pixels and channels, capped at [`PSNR_CAP`].
pub fn psnr(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(NovaError::InvalidInput(format!(
            "psnr needs equal non-empty images (got {} and {} pixels)",
            pred.len(),
            gt.len()
        )));
    }
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for c in 0..3 {
            sum += (p[c] - g[c]).powi(2);
        }
    }
    let mse = sum / (3 * pred.len()) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Intersection over union of `pred >= 0.5` against a binary mask. Two
/// empty masks score 1.
pub fn mask_iou(pred: &[f64], gt: &[u8]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(NovaError::InvalidInput(format!(
            "mask_iou shape mismatch ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        let (p, g) = (p >= 0.5, g != 0);
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_hit_the_cap() {
        let img = vec![[0.2, 0.4, 0.6]; 10];
        assert_eq!(psnr(&img, &img).unwrap(), PSNR_CAP);
    }

    #[test]
    fn mse_of_one_hundredth_is_20_db() {
        let a = vec![[0.5; 3]; 4];
        let b = vec![[0.6; 3]; 4];
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(psnr(&[[0.0; 3]], &[[0.0; 3], [0.0; 3]]).is_err());
        assert!(mask_iou(&[0.0], &[0, 1]).is_err());
    }

    #[test]
    fn iou_cases() {
        assert_eq!(mask_iou(&[1.0, 0.0, 1.0], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(mask_iou(&[1.0, 0.0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(mask_iou(&[0.0, 0.0], &[0, 0]).unwrap(), 1.0);
        let iou = mask_iou(&[1.0, 1.0, 0.0, 0.0], &[0, 1, 1, 0]).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 1e-15);
    }
}

//! Photometric training loss.

use crate::error::{Error, Result};
use crate::img::ImageRgb;

/// Mean absolute error over all pixel channels, with its gradient image.
/// Zero exactly when the images match.
pub fn photometric_loss(rendered: &ImageRgb, target: &ImageRgb) -> Result<(f64, ImageRgb)> {
    if !rendered.same_shape(target) {
        return Err(Error::Usage(format!(
            "loss dimension mismatch: {}x{} vs {}x{}",
            rendered.width, rendered.height, target.width, target.height
        )));
    }
    let count = (rendered.data.len() * 3) as f64;
    let inv = 1.0 / count;
    let mut loss = 0.0;
    let mut grad = ImageRgb::new(rendered.width, rendered.height);
    for (i, (r, t)) in rendered.data.iter().zip(target.data.iter()).enumerate() {
        let g = &mut grad.data[i];
        for c in 0..3 {
            let d = r[c] - t[c];
            loss += d.abs();
            g[c] = if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            };
        }
    }
    Ok((loss * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_give_zero_loss() {
        let a = ImageRgb::filled(8, 6, [0.3, 0.7, 0.1]);
        let (loss, grad) = photometric_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data.iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn constant_offset_gives_mean_absolute_difference() {
        let a = ImageRgb::filled(8, 8, [0.5; 3]);
        let b = ImageRgb::filled(8, 8, [0.25; 3]);
        let (loss, _) = photometric_loss(&a, &b).unwrap();
        assert!((loss - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut a = ImageRgb::new(4, 3);
        let mut b = ImageRgb::new(4, 3);
        for (i, (pa, pb)) in a.data.iter_mut().zip(b.data.iter_mut()).enumerate() {
            // Keep |a-b| well away from zero so the kink is not sampled.
            *pa = [0.6 + 0.01 * i as f64, 0.2, 0.9];
            *pb = [0.3, 0.5 + 0.005 * i as f64, 0.4];
        }
        let (_, grad) = photometric_loss(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..a.data.len() {
            for c in 0..3 {
                let orig = a.data[i][c];
                a.data[i][c] = orig + h;
                let plus = photometric_loss(&a, &b).unwrap().0;
                a.data[i][c] = orig - h;
                let minus = photometric_loss(&a, &b).unwrap().0;
                a.data[i][c] = orig;
                let fd = (plus - minus) / (2.0 * h);
                assert!((grad.data[i][c] - fd).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_a_usage_error() {
        let a = ImageRgb::new(4, 4);
        let b = ImageRgb::new(4, 5);
        assert!(photometric_loss(&a, &b).is_err());
    }
}

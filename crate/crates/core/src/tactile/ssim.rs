use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filtering over the fully covered ("valid") region.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|i| k[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean structural similarity over all fully covered 11×11 Gaussian windows.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (w, h) = (a.width, a.height);
    if w < WINDOW || h < WINDOW {
        return Err(Error::invalid("image smaller than the SSIM window"));
    }
    let k = kernel();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
    };
    let (mx, ow, oh) = filter_valid(&a.data, w, h, &k);
    let (my, _, _) = filter_valid(&b.data, w, h, &k);
    let (sxx, _, _) = filter_valid(&prod(&|x, _| x * x), w, h, &k);
    let (syy, _, _) = filter_valid(&prod(&|_, y| y * y), w, h, &k);
    let (sxy, _, _) = filter_valid(&prod(&|x, y| x * y), w, h, &k);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + C1) * (2.0 * cxy + C2))
            / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
    }
    Ok(total / (ow * oh) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use proptest::prelude::*;
    use rand::Rng;

    fn textured(seed: u64) -> GrayImage {
        let mut rng = seeding::rng(seed, &[0]);
        let data: Vec<f64> = (0..32 * 24).map(|_| rng.gen_range(0.0..255.0)).collect();
        GrayImage::from_fn(32, 24, |x, y| data[y * 32 + x])
    }

    /// Direct evaluation of one window without separable filtering.
    fn brute(a: &GrayImage, b: &GrayImage) -> f64 {
        let k = kernel();
        let mut total = 0.0;
        let (ow, oh) = (a.width - 10, a.height - 10);
        for oy in 0..oh {
            for ox in 0..ow {
                let (mut ux, mut uy, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..WINDOW {
                    for i in 0..WINDOW {
                        let wgt = k[i] * k[j];
                        let x = a.get(ox + i, oy + j);
                        let y = b.get(ox + i, oy + j);
                        ux += wgt * x;
                        uy += wgt * y;
                        xx += wgt * x * x;
                        yy += wgt * y * y;
                        xy += wgt * x * y;
                    }
                }
                let (vx, vy, c) = (xx - ux * ux, yy - uy * uy, xy - ux * uy);
                total += ((2.0 * ux * uy + C1) * (2.0 * c + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
            }
        }
        total / (ow * oh) as f64
    }

    #[test]
    fn identity_and_constants() {
        let a = textured(1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let c = GrayImage::filled(20, 20, 100.0);
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negation_is_dissimilar() {
        let a = textured(2);
        let neg = GrayImage::from_fn(a.width, a.height, |x, y| 255.0 - a.get(x, y));
        assert!(ssim(&a, &neg).unwrap() < 0.0);
    }

    #[test]
    fn matches_direct_window_evaluation() {
        let a = textured(3);
        let b = textured(4);
        assert!((ssim(&a, &b).unwrap() - brute(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(ssim(&GrayImage::filled(20, 20, 0.0), &GrayImage::filled(21, 20, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn symmetric(s1 in 0u64..1000, s2 in 0u64..1000) {
            let (a, b) = (textured(s1), textured(s2));
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        }
    }
}

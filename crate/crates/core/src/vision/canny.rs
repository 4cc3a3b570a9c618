//! Edge detection on binary masks and the inner-mask refinement built on it.

use crate::imaging::Mask;

pub const CANNY_LOW: f64 = 50.0;
pub const CANNY_HIGH: f64 = 150.0;
const DILATE_ITERATIONS: usize = 2;

/// Canny edges of a single-channel image (row-major, `w`×`h`), using 3×3
/// Sobel gradients with replicated borders, L1 magnitude, non-maximum
/// suppression and 8-connected hysteresis.
pub fn canny(img: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        img[y * w + x]
    };
    let mut mag = vec![0.0; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.abs() + gy.abs();
            // quantize the gradient direction into 0°, 45°, 90°, 135°
            let (ax, ay) = (gx.abs(), gy.abs());
            let tan22 = 0.414_213_562_373_095_1;
            dir[i] = if ay <= tan22 * ax {
                0
            } else if ax <= tan22 * ay {
                2
            } else if (gx > 0.0) == (gy > 0.0) {
                1
            } else {
                3
            };
        }
    }
    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // 0 = suppressed, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v <= low {
                continue;
            }
            let (a, b) = match dir[i] {
                0 => (m(x - 1, y), m(x + 1, y)),
                2 => (m(x, y - 1), m(x, y + 1)),
                1 => (m(x - 1, y - 1), m(x + 1, y + 1)),
                _ => (m(x + 1, y - 1), m(x - 1, y + 1)),
            };
            if v >= a && v >= b {
                class[i] = if v > high { 2 } else { 1 };
            }
        }
    }
    let mut edges = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| class[i] == 2).collect();
    for &i in &stack {
        edges[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] == 1 && !edges[j] {
                    edges[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edges
}

fn dilate3(bits: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !bits[y * w + x] {
                continue;
            }
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    out[ny * w + nx] = true;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedMask {
    pub mask: Mask,
    /// Set when refinement removed every pixel and the input was kept.
    pub fallback: bool,
}

/// Removes the Canny outline of the mask, dilated twice by a 3×3 square.
pub fn refine_mask(mask: &Mask) -> RefinedMask {
    let Some((x0, x1, y0, y1)) = bbox(mask) else {
        return RefinedMask { mask: mask.clone(), fallback: true };
    };
    // work on a crop with a margin wide enough for the outer edge and dilation
    let pad = 2 + DILATE_ITERATIONS;
    let cx0 = x0.saturating_sub(pad);
    let cy0 = y0.saturating_sub(pad);
    let cx1 = (x1 + pad).min(mask.width() - 1);
    let cy1 = (y1 + pad).min(mask.height() - 1);
    let (w, h) = (cx1 - cx0 + 1, cy1 - cy0 + 1);
    let img: Vec<f64> = (0..w * h)
        .map(|i| if mask.get(cx0 + i % w, cy0 + i / w) { 255.0 } else { 0.0 })
        .collect();
    let mut band = canny(&img, w, h, CANNY_LOW, CANNY_HIGH);
    for _ in 0..DILATE_ITERATIONS {
        band = dilate3(&band, w, h);
    }
    let mut out = Mask::new(mask.width(), mask.height());
    let mut any = false;
    for (x, y) in mask.pixels() {
        if !band[(y - cy0) * w + (x - cx0)] {
            out.set(x, y, true);
            any = true;
        }
    }
    if any {
        RefinedMask { mask: out, fallback: false }
    } else {
        RefinedMask { mask: mask.clone(), fallback: true }
    }
}

fn bbox(mask: &Mask) -> Option<(usize, usize, usize, usize)> {
    let mut it = mask.pixels();
    let (fx, fy) = it.next()?;
    let init = (fx, fx, fy, fy);
    Some(it.fold(init, |(a, b, c, d), (x, y)| (a.min(x), b.max(x), c.min(y), d.max(y))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent morphology: pixels within Chebyshev distance `r` of the
    /// complement are removed.
    fn brute_inner(mask: &Mask, r: isize) -> Mask {
        Mask::from_fn(mask.width(), mask.height(), |x, y| {
            mask.get(x, y)
                && (-r..=r).all(|dy| {
                    (-r..=r).all(|dx| mask.get_signed(x as isize + dx, y as isize + dy))
                })
        })
    }

    #[test]
    fn square_shrinks_by_three_per_side() {
        let sq = Mask::from_fn(41, 41, |x, y| (10..31).contains(&x) && (10..31).contains(&y));
        let r = refine_mask(&sq);
        assert!(!r.fallback);
        assert_eq!(r.mask.count(), 15 * 15);
        assert_eq!(r.mask, brute_inner(&sq, 3));
    }

    #[test]
    fn single_pixel_falls_back() {
        let mut m = Mask::new(9, 9);
        m.set(4, 4, true);
        let r = refine_mask(&m);
        assert!(r.fallback);
        assert_eq!(r.mask, m);
    }

    #[test]
    fn disc_centroid_is_preserved() {
        let disc = Mask::from_fn(61, 61, |x, y| {
            let (dx, dy) = (x as f64 - 30.0, y as f64 - 30.0);
            dx * dx + dy * dy <= 18.0 * 18.0
        });
        let r = refine_mask(&disc).mask;
        let n = r.count() as f64;
        let (sx, sy) = r.pixels().fold((0.0, 0.0), |(a, b), (x, y)| (a + x as f64, b + y as f64));
        assert!((sx / n - 30.0).abs() < 1e-12 && (sy / n - 30.0).abs() < 1e-12);
        assert!(r.count() < disc.count());
    }

    #[test]
    fn square_touching_border() {
        let m = Mask::from_fn(20, 20, |x, y| x < 12 && y < 12);
        let r = refine_mask(&m);
        assert!(r.mask.is_subset_of(&m));
        // no edge at the image border, so only the interior sides shrink
        assert_eq!(r.mask.count(), 9 * 9);
    }

    proptest! {
        #[test]
        fn refinement_is_a_subset(bits in proptest::collection::vec(any::<bool>(), 24 * 24)) {
            let m = Mask::from_bits(24, 24, bits).unwrap();
            let r = refine_mask(&m);
            prop_assert!(r.mask.is_subset_of(&m));
            if r.fallback {
                prop_assert_eq!(&r.mask, &m);
            } else {
                prop_assert!(!r.mask.is_empty());
            }
        }
    }
}

//! Exact Euclidean distance transform (separable lower-envelope method).

use crate::error::{Error, Result};
use crate::geometry::{Mask, Pixel};

/// Per-pixel Euclidean distance (px) to the nearest pixel outside the mask,
/// treating everything beyond the image border as outside.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    squared: Vec<u64>,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Distance at `(u, v)`; zero outside the image.
    #[inline]
    pub fn get(&self, u: i32, v: i32) -> f64 {
        if u < 0 || v < 0 || u as usize >= self.width || v as usize >= self.height {
            return 0.0;
        }
        (self.squared[v as usize * self.width + u as usize] as f64).sqrt()
    }

    pub fn at(&self, p: Pixel) -> f64 {
        self.get(p.u, p.v)
    }

    pub fn squared(&self) -> &[u64] {
        &self.squared
    }

    pub fn max(&self) -> f64 {
        (self.squared.iter().copied().max().unwrap_or(0) as f64).sqrt()
    }
}

const FAR: i64 = 1 << 40;

/// Exact rational `num / den` with `den > 0`, or ±infinity.
#[derive(Clone, Copy)]
enum Breakpoint {
    NegInf,
    At(i128, i128),
    PosInf,
}

impl Breakpoint {
    fn le(self, other: Breakpoint) -> bool {
        match (self, other) {
            (Breakpoint::NegInf, _) | (_, Breakpoint::PosInf) => true,
            (_, Breakpoint::NegInf) | (Breakpoint::PosInf, _) => false,
            (Breakpoint::At(a, b), Breakpoint::At(c, d)) => a * d <= c * b,
        }
    }

    fn lt_int(self, q: i128) -> bool {
        match self {
            Breakpoint::NegInf => true,
            Breakpoint::PosInf => false,
            Breakpoint::At(n, d) => n < q * d,
        }
    }
}

/// Lower envelope of parabolas `(q - p)^2 + f[p]`, evaluated at every `q`.
fn squared_edt_1d(f: &[i64], out: &mut [i64], v: &mut Vec<usize>, z: &mut Vec<Breakpoint>) {
    let n = f.len();
    v.clear();
    z.clear();
    v.push(0);
    z.push(Breakpoint::NegInf);
    z.push(Breakpoint::PosInf);
    for q in 1..n {
        let fq = f[q] as i128 + (q * q) as i128;
        loop {
            let p = *v.last().unwrap();
            let num = fq - (f[p] as i128 + (p * p) as i128);
            let den = 2 * (q as i128 - p as i128);
            let s = Breakpoint::At(num, den);
            let k = v.len() - 1;
            // z[0] is -inf, so the last parabola is never popped
            if k > 0 && s.le(z[k]) {
                v.pop();
                z.pop();
                continue;
            }
            v.push(q);
            *z.last_mut().unwrap() = s;
            z.push(Breakpoint::PosInf);
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1].lt_int(q as i128) {
            k += 1;
        }
        let p = v[k];
        let d = q as i64 - p as i64;
        *o = d * d + f[p];
    }
}

pub fn distance_transform(mask: &Mask) -> Result<DistanceMap> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let (w, h) = (mask.width(), mask.height());
    // padded grid with a one-pixel false border
    let (pw, ph) = (w + 2, h + 2);
    let inside = |x: usize, y: usize| x >= 1 && y >= 1 && x <= w && y <= h && mask.get(x as i32 - 1, y as i32 - 1);

    let mut cols = vec![0i64; pw * ph];
    let mut f = vec![0i64; ph.max(pw)];
    let mut out = vec![0i64; ph.max(pw)];
    let mut v = Vec::new();
    let mut z = Vec::new();
    for x in 0..pw {
        for y in 0..ph {
            f[y] = if inside(x, y) { FAR } else { 0 };
        }
        squared_edt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            cols[y * pw + x] = out[y];
        }
    }
    let mut squared = vec![0u64; w * h];
    for y in 1..=h {
        f[..pw].copy_from_slice(&cols[y * pw..(y + 1) * pw]);
        squared_edt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        for x in 1..=w {
            squared[(y - 1) * w + (x - 1)] = out[x] as u64;
        }
    }
    Ok(DistanceMap {
        width: w,
        height: h,
        squared,
    })
}

/// Pixel of maximal distance (first in row-major order among ties) and that distance.
pub fn palm_center(dmap: &DistanceMap) -> Result<(Pixel, f64)> {
    let mut best = 0u64;
    let mut at = 0usize;
    for (i, &s) in dmap.squared.iter().enumerate() {
        if s > best {
            best = s;
            at = i;
        }
    }
    if best == 0 {
        return Err(Error::DegenerateMask);
    }
    Ok((
        Pixel::new((at % dmap.width) as i32, (at / dmap.width) as i32),
        (best as f64).sqrt(),
    ))
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> Mask {
        Mask::from_fn(w, h, |u, v| {
            let (du, dv) = (u as f64 - cx, v as f64 - cy);
            du * du + dv * dv <= r * r
        })
    }

    #[test]
    fn single_pixel_and_square() {
        let mut m = Mask::empty(5, 5);
        m.set(2, 2, true);
        let d = distance_transform(&m).unwrap();
        assert_eq!(d.get(2, 2), 1.0);
        assert_eq!(d.get(1, 2), 0.0);
        let m = Mask::from_fn(3, 3, |_, _| true);
        let d = distance_transform(&m).unwrap();
        assert_eq!(d.get(1, 1), 2.0);
        assert_eq!(d.get(0, 0), 1.0);
    }

    #[test]
    fn empty_mask_is_error() {
        assert!(matches!(distance_transform(&Mask::empty(4, 4)), Err(Error::EmptyMask)));
    }

    #[test]
    fn disk_maximum_near_radius() {
        let m = disk(80, 80, 40.0, 40.0, 20.0);
        let d = distance_transform(&m).unwrap();
        assert_eq!(d.squared(), oracle::brute_force_squared(&m).as_slice());
        let (c, r) = palm_center(&d).unwrap();
        assert!((r - 20.0).abs() <= 1.0, "r = {r}");
        assert!((c.u - 40).abs() <= 1 && (c.v - 40).abs() <= 1);
    }

    #[test]
    fn larger_of_two_disks_wins() {
        let mut m = disk(100, 60, 25.0, 30.0, 10.0);
        let small = disk(100, 60, 75.0, 30.0, 6.0);
        for v in 0..60 {
            for u in 0..100 {
                if small.get(u, v) {
                    m.set(u as usize, v as usize, true);
                }
            }
        }
        let (c, _) = palm_center(&distance_transform(&m).unwrap()).unwrap();
        assert!((c.u - 25).abs() <= 1 && (c.v - 30).abs() <= 1);
    }

    #[test]
    fn matches_brute_force_and_is_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let (w, h) = (rng.gen_range(1..32), rng.gen_range(1..32));
            let p = rng.gen_range(0.3..0.95);
            let bits = (0..w * h).map(|_| rng.gen_bool(p)).collect();
            let m = Mask::new(w, h, bits).unwrap();
            if m.count() == 0 {
                continue;
            }
            let d = distance_transform(&m).unwrap();
            assert_eq!(d.squared(), oracle::brute_force_squared(&m).as_slice());
            for v in 0..h as i32 {
                for u in 0..w as i32 {
                    assert_eq!(d.get(u, v) == 0.0, !m.get(u, v));
                    if u + 1 < w as i32 {
                        assert!((d.get(u, v) - d.get(u + 1, v)).abs() <= 1.0 + 1e-12);
                    }
                    if v + 1 < h as i32 {
                        assert!((d.get(u, v) - d.get(u, v + 1)).abs() <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn palm_center_tie_break() {
        // 3x2 block: two maxima in the top... every pixel has distance 1
        let m = Mask::from_fn(6, 6, |u, v| (2..5).contains(&u) && (2..4).contains(&v));
        let (c, r) = palm_center(&distance_transform(&m).unwrap()).unwrap();
        assert_eq!((c, r), (Pixel::new(2, 2), 1.0));
    }
}

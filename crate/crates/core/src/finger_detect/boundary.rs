//! Connected components and outer-contour tracing.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{Mask, Pixel};

/// Clockwise in image coordinates (v grows downward), starting west.
const RING: [(i32, i32); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn ring_index(du: i32, dv: i32) -> usize {
    RING.iter().position(|&d| d == (du, dv)).expect("not a neighbor offset")
}

/// Largest 8-connected component; the earliest in row-major order wins ties.
pub fn largest_component(mask: &Mask) -> Result<Mask> {
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![0u32; w * h];
    let mut best: Option<(usize, u32)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits()[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (u, v) = ((i % w) as i32, (i / w) as i32);
            for &(du, dv) in &RING {
                let (nu, nv) = (u + du, v + dv);
                if mask.get(nu, nv) {
                    let j = nv as usize * w + nu as usize;
                    if label[j] == 0 {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        if best.map_or(true, |(s, _)| size > s) {
            best = Some((size, next));
        }
    }
    let (_, keep) = best.ok_or(Error::EmptyMask)?;
    Mask::new(w, h, label.iter().map(|&l| l == keep).collect())
}

/// Outer contour of the largest 8-connected component as a closed loop
/// (the last pixel is adjacent to the first, which is not repeated).
///
/// Tracing starts at the component's first pixel in row-major order and
/// proceeds clockwise by Moore-neighbor search.
pub fn trace_boundary(mask: &Mask) -> Result<Vec<Pixel>> {
    let comp = largest_component(mask)?;
    let w = comp.width();
    let first = comp.bits().iter().position(|&b| b).ok_or(Error::EmptyMask)?;
    let start = Pixel::new((first % w) as i32, (first / w) as i32);

    // first step out of a pixel, searching clockwise from `from`
    let step = |p: Pixel, from: usize| -> Option<(Pixel, usize)> {
        for k in 0..8 {
            let d = (from + k) % 8;
            let (du, dv) = RING[d];
            let c = Pixel::new(p.u + du, p.v + dv);
            if comp.get(c.u, c.v) {
                // backtrack: the neighbor examined just before `c`, seen from `c`
                let (bu, bv) = RING[(d + 7) % 8];
                let back = ring_index(p.u + bu - c.u, p.v + bv - c.v);
                return Some((c, back));
            }
        }
        None
    };

    // west of the first row-major pixel is always outside
    let Some((second, mut back)) = step(start, 0) else {
        return Ok(vec![start]);
    };
    let mut contour = vec![start, second];
    let mut p = second;
    let limit = 4 * comp.count() + 8;
    loop {
        let (c, b) = step(p, back).expect("component pixel lost its neighbors");
        if p == start && c == second {
            contour.pop();
            return Ok(contour);
        }
        contour.push(c);
        p = c;
        back = b;
        if contour.len() > limit {
            return Err(Error::invalid("boundary", "contour tracing did not close"));
        }
    }
}

/// Foreground pixels with at least one 4-neighbor outside the mask (or image).
pub fn boundary_pixels(mask: &Mask) -> Vec<Pixel> {
    let mut out = Vec::new();
    for v in 0..mask.height() as i32 {
        for u in 0..mask.width() as i32 {
            if mask.get(u, v)
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|&(du, dv)| !mask.get(u + du, v + dv))
            {
                out.push(Pixel::new(u, v));
            }
        }
    }
    out
}

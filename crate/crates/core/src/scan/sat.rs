//! Summed-area table backend.
//!
//! The table has side `n + 1` with a zero border, so the sum over a box
//! is an alternating combination of its `2^d` corners. Corners are folded
//! axis by axis starting from the last one; the `d = 1` and `d = 2` fast
//! paths use the same association, so every path returns bit-identical
//! sums.

use super::{check_extent, BoxSums, Extremes, Field, LocalSums};
use crate::error::Result;

pub struct SummedAreaTable {
    d: usize,
    n: usize,
    table: Vec<f64>,
}

impl SummedAreaTable {
    pub fn new(field: &Field) -> Self {
        let (d, n) = (field.dim(), field.side());
        let m = n + 1;
        let mut table = vec![0.0; m.pow(d as u32)];
        // copy into the padded interior
        let src = field.values();
        let mut idx = vec![0usize; d];
        for &v in src {
            let flat = idx.iter().fold(0, |acc, &i| acc * m + i + 1);
            table[flat] = v;
            let mut k = d;
            while k > 0 {
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
        // prefix sums, axis 0 first
        for axis in 0..d {
            let stride = m.pow((d - 1 - axis) as u32);
            for flat in 0..table.len() {
                if (flat / stride) % m != 0 {
                    table[flat] += table[flat - stride];
                }
            }
        }
        SummedAreaTable { d, n, table }
    }

    fn strides(&self) -> Vec<usize> {
        let m = self.n + 1;
        (0..self.d).map(|k| m.pow((self.d - 1 - k) as u32)).collect()
    }

    /// Visits every valid anchor's box sum in enumeration order.
    fn for_each_sum(&self, extent: &[usize], mut f: impl FnMut(f64)) {
        let (d, n) = (self.d, self.n);
        let m = n + 1;
        let t = &self.table;
        match d {
            1 => {
                let h = extent[0];
                for j in 0..=n - h {
                    f(t[j + h] - t[j]);
                }
            }
            2 => {
                let (h0, h1) = (extent[0], extent[1]);
                let cols = n - h1 + 1;
                for i in 0..=n - h0 {
                    let top = &t[i * m..(i + 1) * m];
                    let bot = &t[(i + h0) * m..(i + h0 + 1) * m];
                    for j in 0..cols {
                        f((bot[j + h1] - bot[j]) - (top[j + h1] - top[j]));
                    }
                }
            }
            _ => {
                let strides = self.strides();
                let counts: Vec<usize> = extent.iter().map(|&e| n - e + 1).collect();
                let mut corners = vec![0.0; 1 << d];
                let mut a = vec![0usize; d];
                loop {
                    let base: usize = a.iter().zip(&strides).map(|(x, s)| x * s).sum();
                    for (mask, c) in corners.iter_mut().enumerate() {
                        // bit k of mask selects the upper face on axis d-1-k
                        let mut off = base;
                        for k in 0..d {
                            if mask >> k & 1 == 1 {
                                let axis = d - 1 - k;
                                off += extent[axis] * strides[axis];
                            }
                        }
                        *c = t[off];
                    }
                    let mut len = 1 << d;
                    while len > 1 {
                        len /= 2;
                        for q in 0..len {
                            corners[q] = corners[2 * q + 1] - corners[2 * q];
                        }
                    }
                    f(corners[0]);
                    let mut k = d;
                    loop {
                        if k == 0 {
                            return;
                        }
                        k -= 1;
                        a[k] += 1;
                        if a[k] < counts[k] {
                            break;
                        }
                        a[k] = 0;
                    }
                }
            }
        }
    }
}

impl LocalSums for SummedAreaTable {
    fn dim(&self) -> usize {
        self.d
    }

    fn side(&self) -> usize {
        self.n
    }

    fn box_sums(&self, extent: &[usize]) -> Result<BoxSums> {
        check_extent(extent, self.d, self.n)?;
        let shape: Vec<usize> = extent.iter().map(|&e| self.n - e + 1).collect();
        let mut values = Vec::with_capacity(shape.iter().product());
        self.for_each_sum(extent, |s| values.push(s));
        Ok(BoxSums { shape, values })
    }

    fn extremes(&self, extent: &[usize]) -> Result<Extremes> {
        check_extent(extent, self.d, self.n)?;
        Ok(match self.d {
            1 | 2 => dispatch(&self.table, self.n, self.d, extent),
            _ => {
                let mut e = Extremes::EMPTY;
                self.for_each_sum(extent, |s| e.update(s));
                e
            }
        })
    }
}

#[cfg(target_arch = "x86_64")]
fn dispatch(t: &[f64], n: usize, d: usize, extent: &[usize]) -> Extremes {
    if std::arch::is_x86_feature_detected!("avx512f") {
        // SAFETY: the feature was detected at runtime
        unsafe { low_dim_extremes_avx512(t, n, d, extent) }
    } else if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime
        unsafe { low_dim_extremes_avx2(t, n, d, extent) }
    } else {
        low_dim_extremes(t, n, d, extent)
    }
}

#[cfg(not(target_arch = "x86_64"))]
fn dispatch(t: &[f64], n: usize, d: usize, extent: &[usize]) -> Extremes {
    low_dim_extremes(t, n, d, extent)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn low_dim_extremes_avx2(t: &[f64], n: usize, d: usize, extent: &[usize]) -> Extremes {
    low_dim_extremes(t, n, d, extent)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn low_dim_extremes_avx512(t: &[f64], n: usize, d: usize, extent: &[usize]) -> Extremes {
    low_dim_extremes(t, n, d, extent)
}

/// Min and max box sum for `d` in {1, 2}. Only exact operations are
/// involved, so the result does not depend on the instruction set.
#[inline(always)]
fn low_dim_extremes(t: &[f64], n: usize, d: usize, extent: &[usize]) -> Extremes {
    let m = n + 1;
    let mut acc = Lanes::new();
    if d == 1 {
        let h = extent[0];
        let len = n - h + 1;
        acc.push_diff(&t[h..h + len], &t[..len]);
    } else {
        let (h0, h1) = (extent[0], extent[1]);
        let cols = n - h1 + 1;
        for i in 0..=n - h0 {
            let top = &t[i * m..(i + 1) * m];
            let bot = &t[(i + h0) * m..(i + h0 + 1) * m];
            acc.push_box(&bot[h1..h1 + cols], &bot[..cols], &top[h1..h1 + cols], &top[..cols]);
        }
    }
    acc.finish()
}

const LANES: usize = 8;

/// Lane-parallel min/max accumulator. Written so the compiler can keep the
/// lanes in vector registers; `min`/`max` are exact, so the lane split
/// does not change the result.
struct Lanes {
    lo: [f64; LANES],
    hi: [f64; LANES],
}

impl Lanes {
    fn new() -> Self {
        Lanes { lo: [f64::INFINITY; LANES], hi: [f64::NEG_INFINITY; LANES] }
    }

    #[inline(always)]
    fn put(&mut self, l: usize, s: f64) {
        self.lo[l] = if s < self.lo[l] { s } else { self.lo[l] };
        self.hi[l] = if s > self.hi[l] { s } else { self.hi[l] };
    }

    #[inline(always)]
    fn push_diff(&mut self, up: &[f64], down: &[f64]) {
        let (uc, dc) = (up.chunks_exact(LANES), down.chunks_exact(LANES));
        let (ur, dr) = (uc.remainder(), dc.remainder());
        for (u, w) in uc.zip(dc) {
            for l in 0..LANES {
                self.put(l, u[l] - w[l]);
            }
        }
        for (l, (u, w)) in ur.iter().zip(dr).enumerate() {
            self.put(l, u - w);
        }
    }

    #[inline(always)]
    fn push_box(&mut self, br: &[f64], bl: &[f64], tr: &[f64], tl: &[f64]) {
        let chunks = br.len() / LANES;
        for c in 0..chunks {
            let o = c * LANES;
            let (br, bl, tr, tl) = (&br[o..o + LANES], &bl[o..o + LANES], &tr[o..o + LANES], &tl[o..o + LANES]);
            for l in 0..LANES {
                self.put(l, (br[l] - bl[l]) - (tr[l] - tl[l]));
            }
        }
        let o = chunks * LANES;
        for l in 0..br.len() - o {
            self.put(l, (br[o + l] - bl[o + l]) - (tr[o + l] - tl[o + l]));
        }
    }

    fn finish(&self) -> Extremes {
        let mut e = Extremes::EMPTY;
        for l in 0..LANES {
            e.min = e.min.min(self.lo[l]);
            e.max = e.max.max(self.hi[l]);
        }
        e
    }
}

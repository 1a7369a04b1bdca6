//! FFT backend: box sums as a circular cross-correlation of the field
//! with the box indicator. No zero padding is used; anchors whose box
//! would wrap around the grid are dropped from the output.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{check_extent, BoxSums, Field, LocalSums};
use crate::error::Result;

pub struct FftSums {
    d: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
}

impl FftSums {
    pub fn new(field: &Field) -> Self {
        let (d, n) = (field.dim(), field.side());
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut spectrum: Vec<Complex64> = field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        transform(&mut spectrum, d, n, forward.as_ref());
        FftSums { d, n, forward, inverse, spectrum }
    }
}

/// Applies a 1-d transform along every axis of a row-major `n^d` array.
fn transform(data: &mut [Complex64], d: usize, n: usize, fft: &dyn Fft<f64>) {
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (k, c) in line.iter_mut().enumerate() {
                    *c = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, c) in line.iter().enumerate() {
                    data[base + k * stride] = *c;
                }
            }
        }
    }
}

impl LocalSums for FftSums {
    fn dim(&self) -> usize {
        self.d
    }

    fn side(&self) -> usize {
        self.n
    }

    fn box_sums(&self, extent: &[usize]) -> Result<BoxSums> {
        check_extent(extent, self.d, self.n)?;
        let (d, n) = (self.d, self.n);
        let total = self.spectrum.len();

        // indicator of the box anchored at the origin
        let mut kernel = vec![Complex64::new(0.0, 0.0); total];
        let mut idx = vec![0usize; d];
        for (flat, k) in kernel.iter_mut().enumerate() {
            let mut rem = flat;
            for axis in (0..d).rev() {
                idx[axis] = rem % n;
                rem /= n;
            }
            if idx.iter().zip(extent).all(|(&i, &e)| i < e) {
                *k = Complex64::new(1.0, 0.0);
            }
        }
        transform(&mut kernel, d, n, self.forward.as_ref());

        // correlation: F^-1( F(y) * conj(F(k)) )
        for (k, s) in kernel.iter_mut().zip(&self.spectrum) {
            *k = s * k.conj();
        }
        transform(&mut kernel, d, n, self.inverse.as_ref());
        let scale = 1.0 / total as f64;

        let shape: Vec<usize> = extent.iter().map(|&e| n - e + 1).collect();
        let mut values = Vec::with_capacity(shape.iter().product());
        let mut a = vec![0usize; d];
        loop {
            let flat = a.iter().fold(0, |acc, &i| acc * n + i);
            values.push(kernel[flat].re * scale);
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(BoxSums { shape, values });
                }
                k -= 1;
                a[k] += 1;
                if a[k] < shape[k] {
                    break;
                }
                a[k] = 0;
            }
        }
    }
}

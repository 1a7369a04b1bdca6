use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nef::NefModel;
use crate::regions::Region;

/// A `d`-dimensional grid of side `n`, stored row-major with the last
/// axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    d: usize,
    n: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(d: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::Shape("grid dimension and side must be positive".into()));
        }
        let len = n
            .checked_pow(d as u32)
            .ok_or_else(|| Error::Shape(format!("grid {n}^{d} is too large")))?;
        if values.len() != len {
            return Err(Error::Shape(format!(
                "expected {len} values for a {n}^{d} grid, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("value at flat index {i} is not finite")));
        }
        Ok(Field { d, n, values })
    }

    pub fn zeros(d: usize, n: usize) -> Self {
        Field { d, n, values: vec![0.0; n.pow(d as u32)] }
    }

    pub fn constant(d: usize, n: usize, c: f64) -> Self {
        Field { d, n, values: vec![c; n.pow(d as u32)] }
    }

    /// i.i.d. standard normal noise.
    pub fn standard_normal<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Self {
        let len = n.pow(d as u32);
        let values = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        Field { d, n, values }
    }

    /// Independent draws with natural parameter `theta` everywhere.
    pub fn sample<R: Rng + ?Sized>(model: &NefModel, theta: f64, d: usize, n: usize, rng: &mut R) -> Result<Self> {
        model.check_theta(theta)?;
        let len = n.pow(d as u32);
        let values = (0..len).map(|_| model.sample_unchecked(theta, rng)).collect();
        Ok(Field { d, n, values })
    }

    /// Draws with `theta_in` on `block` and `theta_out` elsewhere. Values
    /// are generated in flat order so the stream layout does not depend on
    /// the block.
    pub fn sample_with_block<R: Rng + ?Sized>(
        model: &NefModel,
        theta_out: f64,
        theta_in: f64,
        block: &Region,
        d: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        model.check_theta(theta_out)?;
        model.check_theta(theta_in)?;
        let mut inside = vec![false; n.pow(d as u32)];
        for i in block.flat_indices(n) {
            inside[i] = true;
        }
        let values = inside
            .iter()
            .map(|&b| model.sample_unchecked(if b { theta_in } else { theta_out }, rng))
            .collect();
        Ok(Field { d, n, values })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at a 1-based multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        let flat = index.iter().fold(0, |acc, &i| acc * self.n + (i - 1));
        self.values[flat]
    }

    /// Reflects every value through `center`: `y -> 2 center - y`.
    pub fn reflect(&self, center: f64) -> Field {
        Field {
            d: self.d,
            n: self.n,
            values: self.values.iter().map(|y| 2.0 * center - y).collect(),
        }
    }

    /// FNV-1a over the little-endian bytes of every value, for audit trails.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

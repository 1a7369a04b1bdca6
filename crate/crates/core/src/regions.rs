//! Candidate-region systems on the grid `{1, ..., n}^d`.
//!
//! Regions are axis-aligned boxes given by a 1-based anchor (the corner
//! with the smallest coordinates) and an extent (side length per axis).
//! A system enumerates its regions scale by scale: extents ascending by
//! size, and within one extent the anchors in row-major order with the
//! last axis fastest. That order is the tie-breaking order used by the
//! scan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Set families with a known complexity constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetFamily {
    Hypercubes,
    Hyperrectangles,
    Halfspaces,
}

/// Region families that the scan engine can enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Hypercubes,
    Hyperrectangles,
}

impl RegionKind {
    pub fn family(self) -> SetFamily {
        match self {
            RegionKind::Hypercubes => SetFamily::Hypercubes,
            RegionKind::Hyperrectangles => SetFamily::Hyperrectangles,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Hypercubes => "cubes",
            RegionKind::Hyperrectangles => "rects",
        }
    }
}

impl std::str::FromStr for RegionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubes" | "hypercubes" => Ok(RegionKind::Hypercubes),
            "rects" | "hyperrectangles" => Ok(RegionKind::Hyperrectangles),
            other => Err(Error::domain(format!("unknown region system '{other}'"))),
        }
    }
}

/// Smallest penalty constant satisfying the packing-number condition.
///
/// For hyperrectangles the admissible values are `v > 2d - 1`; `eps` is
/// added to `2d - 1` and defaults to 0 in callers, which is only valid in
/// the finite-sample sense.
pub fn recommended_v(family: SetFamily, d: usize, eps: f64) -> f64 {
    match family {
        SetFamily::Hypercubes => 1.0,
        SetFamily::Hyperrectangles => (2 * d) as f64 - 1.0 + eps,
        SetFamily::Halfspaces => 2.0,
    }
}

/// VC-dimension based penalty constant.
pub fn vc_v(family: SetFamily, d: usize) -> f64 {
    match family {
        SetFamily::Hypercubes => ((3 * d + 1) / 2) as f64,
        SetFamily::Hyperrectangles => (2 * d) as f64,
        // upper bound on the VC dimension of halfspaces
        SetFamily::Halfspaces => (d + 1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalePolicy {
    All,
    Dyadic,
    Explicit(Vec<Vec<usize>>),
}

impl ScalePolicy {
    /// Stable textual form, used in calibration metadata.
    pub fn describe(&self) -> String {
        match self {
            ScalePolicy::All => "all".to_string(),
            ScalePolicy::Dyadic => "dyadic".to_string(),
            ScalePolicy::Explicit(list) => {
                let parts: Vec<String> = list
                    .iter()
                    .map(|e| e.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x"))
                    .collect();
                format!("list:{}", parts.join(","))
            }
        }
    }

    /// Inverse of [`ScalePolicy::describe`]; list entries are `AxB...`
    /// extents or bare side lengths (expanded to cubes of dimension `d`).
    pub fn parse(s: &str, d: usize) -> Result<Self> {
        match s {
            "all" => Ok(ScalePolicy::All),
            "dyadic" => Ok(ScalePolicy::Dyadic),
            _ => {
                let body = s.strip_prefix("list:").unwrap_or(s);
                let mut out = Vec::new();
                for item in body.split(',').filter(|t| !t.is_empty()) {
                    let sides: std::result::Result<Vec<usize>, _> =
                        item.split('x').map(|x| x.trim().parse::<usize>()).collect();
                    let sides = sides.map_err(|_| Error::domain(format!("bad extent '{item}'")))?;
                    if sides.len() == 1 {
                        out.push(vec![sides[0]; d]);
                    } else {
                        out.push(sides);
                    }
                }
                if out.is_empty() {
                    return Err(Error::domain(format!("bad scale policy '{s}'")));
                }
                Ok(ScalePolicy::Explicit(out))
            }
        }
    }
}

/// An axis-aligned box of grid points with a 1-based anchor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub anchor: Vec<usize>,
    pub extent: Vec<usize>,
}

impl Region {
    pub fn new(anchor: Vec<usize>, extent: Vec<usize>, n: usize) -> Result<Self> {
        if anchor.len() != extent.len() || anchor.is_empty() {
            return Err(Error::Shape("anchor and extent must have the same positive length".into()));
        }
        for (&a, &e) in anchor.iter().zip(&extent) {
            if a < 1 || e < 1 || a + e - 1 > n {
                return Err(Error::ExtentTooLarge { extent: extent.clone(), n });
            }
        }
        Ok(Region { anchor, extent })
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn size(&self) -> usize {
        self.extent.iter().product()
    }

    /// Last covered index on each axis (inclusive, 1-based).
    pub fn upper(&self) -> Vec<usize> {
        self.anchor.iter().zip(&self.extent).map(|(a, e)| a + e - 1).collect()
    }

    pub fn contains_point(&self, p: &[usize]) -> bool {
        p.iter()
            .zip(self.anchor.iter().zip(&self.extent))
            .all(|(&x, (&a, &e))| x >= a && x < a + e)
    }

    /// Whether `other` is a subset of `self`.
    pub fn contains(&self, other: &Region) -> bool {
        self.anchor
            .iter()
            .zip(&self.extent)
            .zip(other.anchor.iter().zip(&other.extent))
            .all(|((&a, &e), (&b, &f))| b >= a && b + f <= a + e)
    }

    pub fn intersects(&self, other: &Region) -> bool {
        self.anchor
            .iter()
            .zip(&self.extent)
            .zip(other.anchor.iter().zip(&other.extent))
            .all(|((&a, &e), (&b, &f))| a < b + f && b < a + e)
    }

    /// Row-major flat indices of the covered grid points.
    pub fn flat_indices(&self, n: usize) -> Vec<usize> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.size());
        let mut offs = vec![0usize; d];
        loop {
            let mut flat = 0;
            for k in 0..d {
                flat = flat * n + (self.anchor[k] - 1 + offs[k]);
            }
            out.push(flat);
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                offs[k] += 1;
                if offs[k] < self.extent[k] {
                    break;
                }
                offs[k] = 0;
            }
        }
    }
}

/// Maps a continuum box `[lower, upper]` in `[0,1]^d` to the grid points
/// `i` with `lower_k <= i_k / n <= upper_k` (closed on both sides).
pub fn discretize(lower: &[f64], upper: &[f64], n: usize) -> Result<Region> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(Error::Shape("lower and upper corners must have equal positive length".into()));
    }
    let nf = n as f64;
    let mut anchor = Vec::with_capacity(lower.len());
    let mut extent = Vec::with_capacity(lower.len());
    for (&s, &t) in lower.iter().zip(upper) {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) || s > t {
            return Err(Error::domain(format!("[{s}, {t}] is not a sub-interval of [0, 1]")));
        }
        let inside = |i: usize| {
            let x = i as f64 / nf;
            s <= x && x <= t
        };
        // start from the rounded guess and fix it up against the exact predicate
        let mut lo = ((s * nf).ceil() as usize).clamp(1, n);
        while lo > 1 && (lo - 1) as f64 / nf >= s {
            lo -= 1;
        }
        while lo <= n && (lo as f64 / nf) < s {
            lo += 1;
        }
        let mut hi = ((t * nf).floor() as usize).min(n);
        while hi < n && ((hi + 1) as f64 / nf) <= t {
            hi += 1;
        }
        while hi >= 1 && (hi as f64 / nf) > t {
            hi -= 1;
        }
        if lo > n || hi < lo || !inside(lo) {
            return Err(Error::EmptyRegion);
        }
        anchor.push(lo);
        extent.push(hi - lo + 1);
    }
    Ok(Region { anchor, extent })
}

/// Default cap on the number of extents a hyperrectangle system may
/// enumerate.
pub const DEFAULT_RECT_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSystem {
    pub kind: RegionKind,
    pub d: usize,
    pub n: usize,
    pub min_size: usize,
    pub v: f64,
    pub scale_policy: ScalePolicy,
    pub rect_cap: usize,
}

impl RegionSystem {
    /// A system with the default lower scale bound `2^d` and the
    /// recommended `v` for `kind`.
    pub fn new(kind: RegionKind, d: usize, n: usize) -> Result<Self> {
        let v = recommended_v(kind.family(), d, 0.0);
        Self::with_params(kind, d, n, 1usize << d.min(63), v, ScalePolicy::All)
    }

    pub fn with_params(
        kind: RegionKind,
        d: usize,
        n: usize,
        min_size: usize,
        v: f64,
        scale_policy: ScalePolicy,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        if n < 2 {
            return Err(Error::domain("side length must be at least 2"));
        }
        if min_size == 0 {
            return Err(Error::domain("minimum region size must be positive"));
        }
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::domain(format!("penalty constant v must be >= 1, got {v}")));
        }
        Ok(RegionSystem { kind, d, n, min_size, v, scale_policy, rect_cap: DEFAULT_RECT_CAP })
    }

    pub fn with_v(mut self, v: f64) -> Result<Self> {
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::domain(format!("penalty constant v must be >= 1, got {v}")));
        }
        self.v = v;
        Ok(self)
    }

    pub fn with_min_size(mut self, min_size: usize) -> Result<Self> {
        if min_size == 0 {
            return Err(Error::domain("minimum region size must be positive"));
        }
        self.min_size = min_size;
        Ok(self)
    }

    pub fn with_scales(mut self, policy: ScalePolicy) -> Self {
        self.scale_policy = policy;
        self
    }

    pub fn with_rect_cap(mut self, cap: usize) -> Self {
        self.rect_cap = cap;
        self
    }

    /// Number of grid points, `n^d`.
    pub fn total(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Admissible extents, ascending by size (ties broken lexicographically).
    pub fn enumerate_scales(&self) -> Result<Vec<Vec<usize>>> {
        let total = self.total();
        let empty = || Error::EmptyScaleSet { min_size: self.min_size, total };
        if self.min_size > total {
            return Err(empty());
        }
        let (d, n, r) = (self.d, self.n, self.min_size);
        let mut out: Vec<Vec<usize>> = match (&self.scale_policy, self.kind) {
            (ScalePolicy::All, RegionKind::Hypercubes) => {
                (1..=n).filter(|&h| h.pow(d as u32) >= r).map(|h| vec![h; d]).collect()
            }
            (ScalePolicy::Dyadic, RegionKind::Hypercubes) => dyadic_sides(n)
                .into_iter()
                .filter(|&h| h.pow(d as u32) >= r)
                .map(|h| vec![h; d])
                .collect(),
            (ScalePolicy::All, RegionKind::Hyperrectangles) => {
                let sides: Vec<usize> = (1..=n).collect();
                self.product_extents(&sides)?
            }
            (ScalePolicy::Dyadic, RegionKind::Hyperrectangles) => {
                self.product_extents(&dyadic_sides(n))?
            }
            (ScalePolicy::Explicit(list), kind) => {
                for e in list {
                    if e.len() != d {
                        return Err(Error::Shape(format!("extent {e:?} has wrong dimension, expected {d}")));
                    }
                    if e.iter().any(|&x| x == 0 || x > n) {
                        return Err(Error::ExtentTooLarge { extent: e.clone(), n });
                    }
                    if kind == RegionKind::Hypercubes && e.iter().any(|&x| x != e[0]) {
                        return Err(Error::domain(format!("extent {e:?} is not a cube")));
                    }
                    if e.iter().product::<usize>() < r {
                        return Err(Error::domain(format!(
                            "extent {e:?} is smaller than the minimum region size {r}"
                        )));
                    }
                }
                let mut l = list.clone();
                l.sort();
                l.dedup();
                l
            }
        };
        out.sort_by(|a, b| {
            let (sa, sb): (usize, usize) = (a.iter().product(), b.iter().product());
            sa.cmp(&sb).then_with(|| a.cmp(b))
        });
        if out.is_empty() {
            return Err(empty());
        }
        Ok(out)
    }

    fn product_extents(&self, sides: &[usize]) -> Result<Vec<Vec<usize>>> {
        let d = self.d;
        let mut out = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let e: Vec<usize> = idx.iter().map(|&i| sides[i]).collect();
            if e.iter().product::<usize>() >= self.min_size {
                if out.len() == self.rect_cap {
                    return Err(Error::Budget(format!(
                        "hyperrectangle system exceeds the cap of {} extents",
                        self.rect_cap
                    )));
                }
                out.push(e);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < sides.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Number of anchors for one extent.
    pub fn anchors_for(&self, extent: &[usize]) -> u128 {
        extent.iter().map(|&e| (self.n - e + 1) as u128).product()
    }

    pub fn count_regions(&self) -> Result<u128> {
        Ok(self.enumerate_scales()?.iter().map(|e| self.anchors_for(e)).sum())
    }

    /// Scale penalty for a region of `size` grid points.
    pub fn penalty(&self, size: usize) -> Result<f64> {
        crate::scan::penalty(self.v, size, self.n, self.d)
    }

    /// Whether two systems scan the same regions.
    pub fn same_regions(&self, other: &RegionSystem) -> bool {
        self.kind == other.kind
            && self.d == other.d
            && self.n == other.n
            && self.min_size == other.min_size
            && self.scale_policy == other.scale_policy
    }

    /// Materializes every region in enumeration order. Only for small systems.
    pub fn regions(&self) -> Result<Vec<Region>> {
        let mut out = Vec::new();
        for extent in self.enumerate_scales()? {
            let counts: Vec<usize> = extent.iter().map(|&e| self.n - e + 1).collect();
            let mut a = vec![0usize; self.d];
            'anchors: loop {
                out.push(Region {
                    anchor: a.iter().map(|x| x + 1).collect(),
                    extent: extent.clone(),
                });
                let mut k = self.d;
                loop {
                    if k == 0 {
                        break 'anchors;
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
        Ok(out)
    }
}

fn dyadic_sides(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&h| h.checked_mul(2)).take_while(|&h| h <= n).collect()
}

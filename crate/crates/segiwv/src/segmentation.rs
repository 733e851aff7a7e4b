//! Exact weighted least squares segmentation by dynamic programming.
//!
//! For a fixed number of segments K the minimized quantity is
//! sum_k sum_{t in segment k} w_t (z_t - mu_k)^2 with mu_k the weighted
//! segment mean. The classical O(K n^2) recursion returns the exact optimum
//! for every K up to K_max in one pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of `0..n` into contiguous segments. `boundaries` holds the
/// exclusive end of every segment but the last, strictly increasing within
/// `1..n`; equivalently each entry is the 1-based index of the last
/// observation before a change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    n: usize,
    boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn new(n: usize, boundaries: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("segmentation over an empty series"));
        }
        for pair in boundaries.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::invalid(format!(
                    "boundaries must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if boundaries.first().is_some_and(|&b| b == 0)
            || boundaries.last().is_some_and(|&b| b >= n)
        {
            return Err(Error::invalid(format!(
                "boundaries {boundaries:?} must lie inside 1..{n}"
            )));
        }
        Ok(Segmentation { n, boundaries })
    }

    /// Single segment covering everything.
    pub fn trivial(n: usize) -> Self {
        Segmentation {
            n,
            boundaries: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of segments.
    pub fn k(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Interior boundaries; the change positions in 1-based last-index form.
    pub fn changepoints(&self) -> &[usize] {
        &self.boundaries
    }

    /// Half-open index ranges of the segments, in order.
    pub fn segments(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let starts = std::iter::once(0).chain(self.boundaries.iter().copied());
        let ends = self.boundaries.iter().copied().chain(std::iter::once(self.n));
        starts.zip(ends).map(|(s, e)| s..e)
    }

    pub fn segment_lengths(&self) -> Vec<usize> {
        self.segments().map(|r| r.len()).collect()
    }

    /// Per observation copy of a per segment quantity.
    pub fn expand<T: Copy>(&self, per_segment: &[T]) -> Vec<T> {
        debug_assert_eq!(per_segment.len(), self.k());
        let mut out = Vec::with_capacity(self.n);
        for (seg, &v) in self.segments().zip(per_segment) {
            out.extend(std::iter::repeat(v).take(seg.len()));
        }
        out
    }
}

fn check_inputs(z: &[f64], w: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::invalid("empty input series"));
    }
    if z.len() != w.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} values, {} weights",
            z.len(),
            w.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("weights must be finite and positive"));
    }
    Ok(())
}

/// Weighted mean sum(w z) / sum(w).
pub fn weighted_mean(z: &[f64], w: &[f64]) -> Result<f64> {
    check_inputs(z, w)?;
    let mut num = Neumaier::default();
    let mut den = Neumaier::default();
    for (&zi, &wi) in z.iter().zip(w) {
        num.add(wi * zi);
        den.add(wi);
    }
    Ok(num.value() / den.value())
}

/// Compensated accumulator; the running error term rescues long cumulative
/// sums over segments whose mean dwarfs their variance.
#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.comp += if self.sum.abs() >= v.abs() {
            (self.sum - t) + v
        } else {
            (v - t) + self.sum
        };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Implicit matrix of segment costs C(i, j) = min_mu sum w (z - mu)^2 over
/// the half-open index range `i..j`, backed by three prefix sum arrays. The
/// series is centered at its global weighted mean first; the cost is
/// invariant to that shift and the cancellation in the closed form shrinks
/// accordingly.
pub struct CostMatrix {
    sw: Vec<f64>,
    swz: Vec<f64>,
    swz2: Vec<f64>,
    center: f64,
}

impl CostMatrix {
    pub fn new(z: &[f64], w: &[f64]) -> Result<Self> {
        check_inputs(z, w)?;
        let center = weighted_mean(z, w)?;
        let n = z.len();
        let mut sw = Vec::with_capacity(n + 1);
        let mut swz = Vec::with_capacity(n + 1);
        let mut swz2 = Vec::with_capacity(n + 1);
        sw.push(0.0);
        swz.push(0.0);
        swz2.push(0.0);
        let (mut aw, mut az, mut az2) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
        for (&zi, &wi) in z.iter().zip(w) {
            let zc = zi - center;
            aw.add(wi);
            az.add(wi * zc);
            az2.add(wi * zc * zc);
            sw.push(aw.value());
            swz.push(az.value());
            swz2.push(az2.value());
        }
        Ok(CostMatrix {
            sw,
            swz,
            swz2,
            center,
        })
    }

    pub fn n(&self) -> usize {
        self.sw.len() - 1
    }

    /// Optimal cost of grouping `i..j` into one segment. Requires i < j <= n.
    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        let sw = self.sw[j] - self.sw[i];
        let swz = self.swz[j] - self.swz[i];
        let swz2 = self.swz2[j] - self.swz2[i];
        (swz2 - swz * swz / sw).max(0.0)
    }

    /// Weighted mean of the original (uncentered) series over `i..j`.
    #[inline]
    pub fn mean(&self, i: usize, j: usize) -> f64 {
        self.center + (self.swz[j] - self.swz[i]) / (self.sw[j] - self.sw[i])
    }
}

/// Optimal segmentations for every K = 1..=k_max of one series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpResult {
    /// ssr[k - 1] is the optimal weighted SSR with k segments.
    pub ssr: Vec<f64>,
    pub segmentations: Vec<Segmentation>,
    /// means[k - 1] holds the per segment weighted means of the k-segment fit.
    pub means: Vec<Vec<f64>>,
}

impl DpResult {
    pub fn k_max(&self) -> usize {
        self.ssr.len()
    }
}

/// Exact dynamic programming over segmentations.
///
/// Ties are broken toward the smallest admissible predecessor: the scan over
/// candidate change positions runs left to right and replaces the incumbent
/// only on a strict improvement, so among cost-equal optima the returned
/// segmentation has the smallest last change-point, then the smallest
/// second-to-last, and so on.
pub fn dp_segment(z: &[f64], w: &[f64], k_max: usize) -> Result<DpResult> {
    let cost = CostMatrix::new(z, w)?;
    let n = cost.n();
    if k_max == 0 || k_max > n {
        return Err(Error::invalid(format!(
            "k_max {k_max} outside 1..={n}"
        )));
    }

    // best[j] holds the optimal cost of splitting 0..j into the current row's
    // segment count; back[k][j] the argmin predecessor for that cell.
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut cur = vec![f64::INFINITY; n + 1];
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(k_max.saturating_sub(1));
    let mut ssr = Vec::with_capacity(k_max);

    for j in 1..=n {
        prev[j] = cost.cost(0, j);
    }
    ssr.push(prev[n]);

    for k in 2..=k_max {
        let mut row_back = vec![0u32; n + 1];
        for j in k..=n {
            let swz2_j = cost.swz2[j];
            let swz_j = cost.swz[j];
            let sw_j = cost.sw[j];
            let mut best = f64::INFINITY;
            let mut arg = k - 1;
            for i in (k - 1)..j {
                let sw = sw_j - cost.sw[i];
                let swz = swz_j - cost.swz[i];
                let seg = (swz2_j - cost.swz2[i]) - swz * swz / sw;
                let v = prev[i] + seg.max(0.0);
                if v < best {
                    best = v;
                    arg = i;
                }
            }
            cur[j] = best;
            row_back[j] = arg as u32;
        }
        ssr.push(cur[n]);
        back.push(row_back);
        std::mem::swap(&mut prev, &mut cur);
        cur[..].fill(f64::INFINITY);
    }

    let mut segmentations = Vec::with_capacity(k_max);
    let mut means = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut bounds = Vec::with_capacity(k - 1);
        let mut end = n;
        for kk in (2..=k).rev() {
            let b = back[kk - 2][end] as usize;
            bounds.push(b);
            end = b;
        }
        bounds.reverse();
        let seg = Segmentation::new(n, bounds)?;
        let mu: Vec<f64> = seg.segments().map(|r| cost.mean(r.start, r.end)).collect();
        segmentations.push(seg);
        means.push(mu);
    }

    Ok(DpResult {
        ssr,
        segmentations,
        means,
    })
}

/// Weighted SSR of a given segmentation, by direct summation. Serves as an
/// independent check on the prefix sum arithmetic inside [`CostMatrix`].
pub fn ssr_of(seg: &Segmentation, z: &[f64], w: &[f64]) -> Result<f64> {
    check_inputs(z, w)?;
    if seg.n() != z.len() {
        return Err(Error::invalid(format!(
            "segmentation over {} points applied to {} values",
            seg.n(),
            z.len()
        )));
    }
    let mut total = Neumaier::default();
    for r in seg.segments() {
        let mu = weighted_mean(&z[r.clone()], &w[r.clone()])?;
        for t in r {
            let d = z[t] - mu;
            total.add(w[t] * d * d);
        }
    }
    Ok(total.value())
}

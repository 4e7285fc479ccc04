//! Warping distance kernels.
//!
//! Element cost is the squared difference and every distance is the square
//! root of the accumulated cost along an alignment, so on the diagonal path
//! the distances reduce to Euclidean distance. Alignments are 0-based here.

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarpMode {
    Exact,
    #[default]
    Greedy,
}

impl std::str::FromStr for WarpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(WarpMode::Exact),
            "greedy" => Ok(WarpMode::Greedy),
            other => Err(argument(format!("unknown warp mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WarpConfig {
    pub mode: WarpMode,
    /// Maximum index shift for greedy warping; `None` means `ceil(l / 2)`
    /// with `l` the longer of the two inputs.
    pub window: Option<usize>,
}

impl WarpConfig {
    pub fn exact() -> Self {
        Self {
            mode: WarpMode::Exact,
            window: None,
        }
    }

    pub fn greedy(window: usize) -> Self {
        Self {
            mode: WarpMode::Greedy,
            window: Some(window),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == Some(0) {
            return Err(argument("warp window must be at least 1"));
        }
        Ok(())
    }

    fn window_for(&self, l1: usize, l2: usize) -> usize {
        self.window.unwrap_or_else(|| l1.max(l2).div_ceil(2)).max(1)
    }
}

/// Index pairs `(i, j)` matching `s1[i]` with `s2[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn diagonal(l: usize) -> Self {
        Self {
            pairs: (0..l).map(|i| (i, i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Boundary, monotonicity and continuity conditions for inputs of
    /// lengths `l1` and `l2`.
    pub fn is_valid(&self, l1: usize, l2: usize) -> bool {
        let (Some(first), Some(last)) = (self.pairs.first(), self.pairs.last()) else {
            return false;
        };
        if *first != (0, 0) || *last != (l1 - 1, l2 - 1) {
            return false;
        }
        self.pairs.windows(2).all(|w| {
            let (a, b) = (w[0], w[1]);
            b.0 >= a.0 && b.1 >= a.1 && b.0 - a.0 <= 1 && b.1 - a.1 <= 1
        })
    }

    /// Accumulated squared difference along the alignment.
    pub fn cost<T: Scalar>(&self, s1: &[T], s2: &[T]) -> T {
        self.pairs.iter().map(|&(i, j)| sq(s1[i] - s2[j])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath<T> {
    pub distance: T,
    pub alignment: Alignment,
    /// Cells whose cost was accumulated.
    pub cells_visited: usize,
}

#[inline]
fn sq<T: Scalar>(x: T) -> T {
    x * x
}

fn check_non_empty<T>(s1: &[T], s2: &[T]) -> Result<()> {
    if s1.is_empty() || s2.is_empty() {
        return Err(argument("warping requires non-empty inputs"));
    }
    Ok(())
}

/// Exact dynamic-programming DTW with the optimal alignment.
pub fn dtw_exact<T: Scalar>(s1: &[T], s2: &[T]) -> Result<WarpPath<T>> {
    check_non_empty(s1, s2)?;
    let (l1, l2) = (s1.len(), s2.len());
    let mut acc = vec![T::infinity(); l1 * l2];
    let at = |i: usize, j: usize| i * l2 + j;
    for i in 0..l1 {
        for j in 0..l2 {
            let c = sq(s1[i] - s2[j]);
            let prev = if i == 0 && j == 0 {
                T::zero()
            } else {
                let mut best = T::infinity();
                if i > 0 && j > 0 {
                    best = best.min(acc[at(i - 1, j - 1)]);
                }
                if i > 0 {
                    best = best.min(acc[at(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(acc[at(i, j - 1)]);
                }
                best
            };
            acc[at(i, j)] = prev + c;
        }
    }

    let mut pairs = vec![(l1 - 1, l2 - 1)];
    let (mut i, mut j) = (l1 - 1, l2 - 1);
    while i > 0 || j > 0 {
        // Predecessor preference on ties: diagonal, then s1-advance, then s2-advance.
        let mut next = None;
        let mut best = T::infinity();
        for (ci, cj) in [(i.wrapping_sub(1), j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1))] {
            if ci < l1 && cj < l2 && acc[at(ci, cj)] < best {
                best = acc[at(ci, cj)];
                next = Some((ci, cj));
            }
        }
        (i, j) = next.expect("a predecessor always exists off the origin");
        pairs.push((i, j));
    }
    pairs.reverse();
    let cells_visited = pairs.len();
    Ok(WarpPath {
        distance: acc[at(l1 - 1, l2 - 1)].sqrt(),
        alignment: Alignment { pairs },
        cells_visited,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Diagonal,
    Advance1,
    Advance2,
}

impl Step {
    fn apply(self, (i, j): (usize, usize)) -> (usize, usize) {
        match self {
            Step::Diagonal => (i + 1, j + 1),
            Step::Advance1 => (i + 1, j),
            Step::Advance2 => (i, j + 1),
        }
    }

    fn opposite(self) -> Self {
        match self {
            Step::Advance1 => Step::Advance2,
            Step::Advance2 => Step::Advance1,
            Step::Diagonal => Step::Diagonal,
        }
    }
}

/// Greedy linear-time DTW.
///
/// From `(0, 0)` the path repeatedly takes the cheapest single step (ties:
/// diagonal, then advancing `s1`, then advancing `s2`). A step that brings the
/// index shift to `window` or beyond is rolled back and replaced by the
/// opposite step; if that also breaks the window the diagonal step is taken.
/// Once either input is exhausted the path runs straight to the corner.
pub fn dtw_greedy<T: Scalar>(s1: &[T], s2: &[T], cfg: &WarpConfig) -> Result<WarpPath<T>> {
    check_non_empty(s1, s2)?;
    cfg.validate()?;
    let (l1, l2) = (s1.len(), s2.len());
    let window = cfg.window_for(l1, l2);
    let cost = |(i, j): (usize, usize)| sq(s1[i] - s2[j]);
    let shift = |(i, j): (usize, usize)| i.abs_diff(j);

    let mut pos = (0, 0);
    let mut total = cost(pos);
    let mut pairs = Vec::with_capacity(l1 + l2);
    pairs.push(pos);
    let mut cells_visited = 1;

    while pos.0 + 1 < l1 && pos.1 + 1 < l2 {
        let mut step = Step::Diagonal;
        let mut best = cost(Step::Diagonal.apply(pos));
        for cand in [Step::Advance1, Step::Advance2] {
            let c = cost(cand.apply(pos));
            if c < best {
                best = c;
                step = cand;
            }
        }
        if shift(step.apply(pos)) >= window {
            step = step.opposite();
            if shift(step.apply(pos)) >= window {
                step = Step::Diagonal;
            }
        }
        pos = step.apply(pos);
        total = total + cost(pos);
        pairs.push(pos);
        cells_visited += 1;
    }
    while pos.0 + 1 < l1 || pos.1 + 1 < l2 {
        pos = (pos.0 + usize::from(pos.0 + 1 < l1), pos.1 + usize::from(pos.1 + 1 < l2));
        total = total + cost(pos);
        pairs.push(pos);
        cells_visited += 1;
    }

    Ok(WarpPath {
        distance: total.sqrt(),
        alignment: Alignment { pairs },
        cells_visited,
    })
}

pub fn warp<T: Scalar>(s1: &[T], s2: &[T], cfg: &WarpConfig) -> Result<WarpPath<T>> {
    match cfg.mode {
        WarpMode::Exact => dtw_exact(s1, s2),
        WarpMode::Greedy => dtw_greedy(s1, s2, cfg),
    }
}

/// Squared differences along the unweighted optimal alignment, summed per
/// index of `v`. The weighted distance is then `sqrt(sum_n w[n] * c[n])`,
/// which is linear under the root in `w`.
pub fn aligned_costs<T: Scalar>(v: &[T], s: &[T], cfg: &WarpConfig) -> Result<Vec<T>> {
    let path = warp(v, s, cfg)?;
    let mut costs = vec![T::zero(); v.len()];
    for &(i, j) in &path.alignment.pairs {
        costs[i] = costs[i] + sq(v[i] - s[j]);
    }
    Ok(costs)
}

pub(crate) fn weighted_from_costs<T: Scalar>(w: &[T], costs: &[T]) -> T {
    w.iter().zip(costs).map(|(&w, &c)| w * c).sum::<T>().max(T::zero()).sqrt()
}

/// Time-aware segment distance: the local weights `w` projected onto the
/// unweighted warping path between `v` and `s`.
pub fn weighted_distance<T: Scalar>(v: &[T], w: &[T], s: &[T], cfg: &WarpConfig) -> Result<T> {
    if w.len() != v.len() {
        return Err(Error::Dimension(format!(
            "local factor has length {}, shapelet has length {}",
            w.len(),
            v.len()
        )));
    }
    if w.iter().any(|&x| x < T::zero()) {
        return Err(Error::Invariant("local factor has negative entries".into()));
    }
    Ok(weighted_from_costs(w, &aligned_costs(v, s, cfg)?))
}

/// Weighted-average softmin: `sum d_k e^{-d_k/t} / sum e^{-d_k/t}`.
pub fn softmin<T: Scalar>(d: &[T], temperature: T) -> T {
    softmin_with_grad(d, temperature).0
}

/// Softmin value and its partial derivatives with respect to each input.
pub(crate) fn softmin_with_grad<T: Scalar>(d: &[T], temperature: T) -> (T, Vec<T>) {
    let lo = d.iter().copied().fold(T::infinity(), T::min);
    let e: Vec<T> = d.iter().map(|&x| (-(x - lo) / temperature).exp()).collect();
    let z: T = e.iter().copied().sum();
    let q: Vec<T> = e.iter().map(|&x| x / z).collect();
    let s: T = d.iter().zip(&q).map(|(&x, &p)| x * p).sum();
    let grad = d
        .iter()
        .zip(&q)
        .map(|(&x, &p)| p * (T::one() - (x - s) / temperature))
        .collect();
    (s, grad)
}

/// Two-level time-aware distance between a shapelet and a segmented series.
/// `hard` selects the exact minimum; otherwise the softmin at `temperature`.
pub fn series_distance<T: Scalar>(
    v: &[T],
    w: &[T],
    u: &[T],
    segments: &[&[T]],
    cfg: &WarpConfig,
    temperature: T,
    hard: bool,
) -> Result<T> {
    if segments.is_empty() {
        return Err(argument("series has no segments"));
    }
    if u.len() != segments.len() {
        return Err(Error::Dimension(format!(
            "global factor has length {}, series has {} segments",
            u.len(),
            segments.len()
        )));
    }
    let d = segments
        .iter()
        .zip(u)
        .map(|(s, &uk)| Ok(uk * weighted_distance(v, w, s, cfg)?))
        .collect::<Result<Vec<T>>>()?;
    Ok(if hard {
        d.iter().copied().fold(T::infinity(), T::min)
    } else {
        softmin(&d, temperature)
    })
}

//! Shapelet-to-segment assignment and the shapelet evolution graph.
//!
//! Every segment is assigned the shapelets whose scaled distance
//! `u_j[i] * weighted_distance(v_j, s_i)` is within a threshold `delta`, with
//! min-max standardized probabilities. Consecutive segments of a series then
//! vote for transitions `j -> k` with weight `p_ij * p_(i+1)k`; the summed
//! weights are normalized per source vertex into transition probabilities.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::data::Dataset;
use crate::error::{argument, Error, Result};
use crate::scalar::Scalar;
use crate::shapelet::{run_in_pool, Shapelet};
use crate::warp::{aligned_costs, weighted_from_costs, WarpConfig};

pub const GRAPH_SCHEMA: &str = "shapegraph.graph/1.0";

/// Scaled distances for every (series, segment, shapelet) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable<T> {
    values: Vec<T>,
    num_series: usize,
    m: usize,
    k: usize,
}

impl<T: Scalar> DistanceTable<T> {
    pub fn compute(
        ds: &Dataset<T>,
        shapelets: &[Shapelet<T>],
        warp: &WarpConfig,
        workers: Option<usize>,
    ) -> Result<Self> {
        let m = ds.num_segments;
        if let Some(s) = shapelets.iter().find(|s| s.u.len() != m) {
            return Err(Error::Dimension(format!(
                "shapelet rank {} has {} global weights, dataset has {m} segments",
                s.rank,
                s.u.len()
            )));
        }
        let rows = run_in_pool(workers, || {
            (0..ds.len())
                .into_par_iter()
                .map(|i| {
                    let mut row = Vec::with_capacity(m * shapelets.len());
                    for pos in 0..m {
                        let seg = ds.segment(i, pos);
                        for s in shapelets {
                            let costs = aligned_costs(&s.values, seg, warp)?;
                            row.push(s.u[pos] * weighted_from_costs(&s.w, &costs));
                        }
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<Vec<T>>>>()
        })??;
        Ok(Self {
            values: rows.into_iter().flatten().collect(),
            num_series: ds.len(),
            m,
            k: shapelets.len(),
        })
    }

    pub fn from_raw(values: Vec<T>, num_series: usize, m: usize, k: usize) -> Result<Self> {
        if values.len() != num_series * m * k {
            return Err(Error::Dimension(format!(
                "{} distances for {num_series} series x {m} segments x {k} shapelets",
                values.len()
            )));
        }
        Ok(Self { values, num_series, m, k })
    }

    /// Distances from segment `pos` of series `i` to every shapelet.
    pub fn segment(&self, i: usize, pos: usize) -> &[T] {
        let start = (i * self.m + pos) * self.k;
        &self.values[start..start + self.k]
    }

    pub fn pooled(&self) -> &[T] {
        &self.values
    }

    pub fn num_series(&self) -> usize {
        self.num_series
    }

    pub fn num_segments(&self) -> usize {
        self.m
    }

    pub fn num_shapelets(&self) -> usize {
        self.k
    }
}

/// Percentile of a sample with linear interpolation between order statistics.
pub fn percentile<T: Scalar>(xs: &[T], pct: f64) -> Result<T> {
    if xs.is_empty() {
        return Err(argument("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(argument(format!("percentile {pct} outside [0, 100]")));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let rank = pct / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = T::of(rank - lo as f64);
    Ok(v[lo] + (v[hi] - v[lo]) * frac)
}

/// Assignment threshold: the given percentile of all pooled scaled distances.
pub fn compute_threshold<T: Scalar>(table: &DistanceTable<T>, pct: f64) -> Result<T> {
    percentile(table.pooled(), pct)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEntry<T> {
    pub shapelet: usize,
    pub distance: T,
    pub probability: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment<T> {
    pub series_index: usize,
    pub position: usize,
    pub entries: Vec<AssignmentEntry<T>>,
}

/// Min-max standardized probabilities over `(shapelet, distance)` pairs:
/// the closest gets 1, the farthest 0. A lone entry, or a set of equal
/// distances, gets probability 1.
pub fn assignment_probabilities<T: Scalar>(qualifying: &[(usize, T)]) -> Vec<AssignmentEntry<T>> {
    let lo = qualifying.iter().map(|e| e.1).fold(T::infinity(), T::min);
    let hi = qualifying.iter().map(|e| e.1).fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    qualifying
        .iter()
        .map(|&(shapelet, distance)| AssignmentEntry {
            shapelet,
            distance,
            probability: if span > T::zero() {
                (hi - distance) / span
            } else {
                T::one()
            },
        })
        .collect()
}

/// Assign shapelets to every segment; result is grouped by series in segment order.
pub fn assign_segments<T: Scalar>(table: &DistanceTable<T>, delta: T) -> Result<Vec<Vec<Assignment<T>>>> {
    if !(delta >= T::zero()) || !delta.is_finite() {
        return Err(argument(format!("threshold {delta} must be finite and non-negative")));
    }
    Ok((0..table.num_series())
        .map(|i| {
            (0..table.num_segments())
                .map(|pos| {
                    let qualifying: Vec<(usize, T)> = table
                        .segment(i, pos)
                        .iter()
                        .copied()
                        .enumerate()
                        .filter(|&(_, d)| d <= delta)
                        .collect();
                    Assignment {
                        series_index: i,
                        position: pos,
                        entries: assignment_probabilities(&qualifying),
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge<T> {
    pub src: usize,
    pub dst: usize,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexInfo<T> {
    pub rank: usize,
    pub in_degree: T,
    pub out_degree: T,
}

/// Directed weighted graph over shapelets; out-weights of every vertex with
/// outgoing edges sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionGraph<T> {
    pub version: String,
    pub vertex_count: usize,
    pub vertices: Vec<VertexInfo<T>>,
    /// Sorted by `(src, dst)`.
    pub edges: Vec<Edge<T>>,
}

impl<T: Scalar> EvolutionGraph<T> {
    pub fn empty(vertex_count: usize) -> Self {
        Self::from_weights(vertex_count, BTreeMap::new())
    }

    fn from_weights(vertex_count: usize, raw: BTreeMap<(usize, usize), T>) -> Self {
        let mut out_sum = vec![T::zero(); vertex_count];
        for (&(s, _), &w) in &raw {
            out_sum[s] = out_sum[s] + w;
        }
        let edges: Vec<Edge<T>> = raw
            .into_iter()
            .map(|((src, dst), w)| Edge {
                src,
                dst,
                weight: w / out_sum[src],
            })
            .collect();
        let mut vertices: Vec<VertexInfo<T>> = (0..vertex_count)
            .map(|v| VertexInfo {
                rank: v + 1,
                in_degree: T::zero(),
                out_degree: T::zero(),
            })
            .collect();
        for e in &edges {
            vertices[e.src].out_degree = vertices[e.src].out_degree + e.weight;
            vertices[e.dst].in_degree = vertices[e.dst].in_degree + e.weight;
        }
        Self {
            version: GRAPH_SCHEMA.into(),
            vertex_count,
            vertices,
            edges,
        }
    }

    /// Outgoing edges of `v`.
    pub fn out_edges(&self, v: usize) -> &[Edge<T>] {
        let start = self.edges.partition_point(|e| e.src < v);
        let end = self.edges.partition_point(|e| e.src <= v);
        &self.edges[start..end]
    }

    pub fn weight(&self, src: usize, dst: usize) -> Option<T> {
        self.out_edges(src).iter().find(|e| e.dst == dst).map(|e| e.weight)
    }

    pub fn out_weight_sum(&self, v: usize) -> T {
        self.out_edges(v).iter().map(|e| e.weight).sum()
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for e in &self.edges {
            writeln!(s, "{} {} {:.9}", e.src, e.dst, e.weight.as_f64()).unwrap();
        }
        s
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph shapelet_evolution {\n");
        for e in &self.edges {
            writeln!(s, "  {} -> {} [weight={:.9}];", e.src, e.dst, e.weight.as_f64()).unwrap();
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        artifact::check_version(&g.version, GRAPH_SCHEMA)?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() != self.vertex_count {
            return Err(Error::Dimension("vertex metadata does not match vertex count".into()));
        }
        if self
            .edges
            .iter()
            .any(|e| e.src >= self.vertex_count || e.dst >= self.vertex_count || !(e.weight > T::zero()))
        {
            return Err(Error::Invariant("edge endpoint out of range or non-positive weight".into()));
        }
        if self.edges.windows(2).any(|w| (w[0].src, w[0].dst) >= (w[1].src, w[1].dst)) {
            return Err(Error::Invariant("edges are not strictly sorted".into()));
        }
        Ok(())
    }

    pub fn export(&self, path: impl AsRef<Path>, format: GraphFormat) -> Result<()> {
        let text = match format {
            GraphFormat::EdgeList => self.to_edge_list(),
            GraphFormat::Dot => self.to_dot(),
            GraphFormat::Json => self.to_json()? + "\n",
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    EdgeList,
    Dot,
    Json,
}

impl std::str::FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-list" | "edgelist" => Ok(GraphFormat::EdgeList),
            "dot" => Ok(GraphFormat::Dot),
            "json" => Ok(GraphFormat::Json),
            other => Err(argument(format!("unknown graph format {other:?}"))),
        }
    }
}

/// Accumulate transition weights between consecutive segments of each series
/// and normalize per source vertex.
pub fn build_graph<T: Scalar>(assignments: &[Vec<Assignment<T>>], num_vertices: usize) -> Result<EvolutionGraph<T>> {
    let mut raw: BTreeMap<(usize, usize), T> = BTreeMap::new();
    for series in assignments {
        for pair in series.windows(2) {
            for a in &pair[0].entries {
                for b in &pair[1].entries {
                    if a.shapelet >= num_vertices || b.shapelet >= num_vertices {
                        return Err(Error::Dimension(format!(
                            "assignment references shapelet {} of {num_vertices}",
                            a.shapelet.max(b.shapelet)
                        )));
                    }
                    let w = a.probability * b.probability;
                    if w > T::zero() {
                        let slot = raw.entry((a.shapelet, b.shapelet)).or_insert(T::zero());
                        *slot = *slot + w;
                    }
                }
            }
        }
    }
    Ok(EvolutionGraph::from_weights(num_vertices, raw))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn entry(shapelet: usize, p: f64) -> AssignmentEntry<f64> {
        AssignmentEntry {
            shapelet,
            distance: 0.0,
            probability: p,
        }
    }

    fn assignment(pos: usize, entries: Vec<AssignmentEntry<f64>>) -> Assignment<f64> {
        Assignment {
            series_index: 0,
            position: pos,
            entries,
        }
    }

    #[test]
    fn percentile_extremes_and_interpolation() {
        let xs: [f64; 5] = [3.0, 1.0, 4.0, 1.5, 9.0];
        assert_eq!(percentile(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&xs, 100.0).unwrap(), 9.0);
        assert_eq!(percentile(&xs, 50.0).unwrap(), 3.0);
        // rank 0.4 between 1.0 and 1.5
        assert!((percentile(&xs, 10.0).unwrap() - 1.2).abs() < 1e-12);
        assert!(percentile::<f64>(&[], 10.0).is_err());
    }

    #[test]
    fn probabilities_single_and_pair() {
        let one = assignment_probabilities(&[(3, 0.7)]);
        assert_eq!(one[0].probability, 1.0);
        let two = assignment_probabilities(&[(0, 2.0), (1, 5.0)]);
        assert_eq!(two[0].probability, 1.0);
        assert_eq!(two[1].probability, 0.0);
    }

    #[test]
    fn threshold_filters_and_empty_segments() {
        let table = DistanceTable::from_raw(vec![0.2, 0.9, 0.5, 0.85, 1.2, 1.5], 1, 2, 3).unwrap();
        let a = assign_segments(&table, 0.8).unwrap();
        assert_eq!(a[0][0].entries.len(), 2);
        assert_eq!(a[0][0].entries[0].shapelet, 0);
        assert_eq!(a[0][0].entries[1].shapelet, 2);
        assert!(a[0][1].entries.is_empty());
        assert!(assign_segments(&table, -1.0).is_err());
    }

    #[test]
    fn minimal_graph_has_one_unit_edge() {
        let a = vec![vec![assignment(0, vec![entry(0, 1.0)]), assignment(1, vec![entry(1, 1.0)])]];
        let g = build_graph(&a, 2).unwrap();
        assert_eq!(g.edges, vec![Edge { src: 0, dst: 1, weight: 1.0 }]);
        assert_eq!(g.to_edge_list(), "0 1 1.000000000\n");
    }

    #[test]
    fn accumulated_weights_normalize() {
        // a -> b gets 0.3 and a -> c gets 0.1 across two series.
        let a = vec![
            vec![assignment(0, vec![entry(0, 0.5)]), assignment(1, vec![entry(1, 0.6)])],
            vec![assignment(0, vec![entry(0, 1.0)]), assignment(1, vec![entry(2, 0.1)])],
        ];
        let g = build_graph(&a, 3).unwrap();
        assert!((g.weight(0, 1).unwrap() - 0.75).abs() < 1e-12);
        assert!((g.weight(0, 2).unwrap() - 0.25).abs() < 1e-12);
        assert!((g.vertices[1].in_degree - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_contributes_no_edge() {
        let a = vec![vec![
            assignment(0, vec![entry(0, 1.0), entry(1, 0.0)]),
            assignment(1, vec![entry(2, 1.0)]),
        ]];
        let g = build_graph(&a, 3).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert!(g.out_edges(1).is_empty());
    }

    #[test]
    fn exports_are_deterministic_and_json_roundtrips() {
        let empty = EvolutionGraph::<f64>::empty(3);
        assert_eq!(empty.to_edge_list(), "");
        assert_eq!(empty.to_dot(), "digraph shapelet_evolution {\n}\n");
        let back = EvolutionGraph::<f64>::from_json(&empty.to_json().unwrap()).unwrap();
        assert_eq!(back, empty);

        let a = vec![vec![
            assignment(0, vec![entry(0, 1.0), entry(1, 1.0 / 3.0)]),
            assignment(1, vec![entry(2, 0.7), entry(0, 0.1)]),
        ]];
        let g = build_graph(&a, 3).unwrap();
        let back = EvolutionGraph::<f64>::from_json(&g.to_json().unwrap()).unwrap();
        for (x, y) in g.edges.iter().zip(&back.edges) {
            assert_eq!(x.weight.to_bits(), y.weight.to_bits());
        }
        assert_eq!(back, g);
    }

    fn arb_assignments() -> impl Strategy<Value = Vec<Vec<Assignment<f64>>>> {
        let seg = prop::collection::vec((0usize..6, 0.0f64..3.0), 0..4).prop_map(|d| {
            let mut d = d;
            d.sort_by_key(|e| e.0);
            d.dedup_by_key(|e| e.0);
            assignment_probabilities(&d)
        });
        prop::collection::vec(prop::collection::vec(seg, 1..6), 1..8).prop_map(|series| {
            series
                .into_iter()
                .enumerate()
                .map(|(i, segs)| {
                    segs.into_iter()
                        .enumerate()
                        .map(|(pos, entries)| Assignment { series_index: i, position: pos, entries })
                        .collect()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn graph_invariants(assignments in arb_assignments()) {
            let g = build_graph(&assignments, 6).unwrap();
            g.validate().unwrap();
            for v in 0..6 {
                let s = g.out_weight_sum(v);
                prop_assert!(g.out_edges(v).is_empty() || (s - 1.0).abs() <= 1e-9);
            }
            let mut reversed = assignments.clone();
            reversed.reverse();
            let h = build_graph(&reversed, 6).unwrap();
            prop_assert_eq!(g.edges.len(), h.edges.len());
            for (x, y) in g.edges.iter().zip(&h.edges) {
                prop_assert_eq!((x.src, x.dst), (y.src, y.dst));
                prop_assert!((x.weight - y.weight).abs() < 1e-12);
            }
        }

        #[test]
        fn probabilities_are_standardized(d in prop::collection::vec(0.0f64..5.0, 2..8)) {
            let q: Vec<(usize, f64)> = d.iter().copied().enumerate().collect();
            let e = assignment_probabilities(&q);
            let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for a in &e {
                prop_assert!((0.0..=1.0).contains(&a.probability));
                if hi > lo && a.distance == lo { prop_assert_eq!(a.probability, 1.0); }
                if hi > lo && a.distance == hi { prop_assert_eq!(a.probability, 0.0); }
            }
            for a in &e {
                for b in &e {
                    if a.distance <= b.distance { prop_assert!(a.probability >= b.probability); }
                }
            }
        }
    }
}

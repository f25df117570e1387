use serde::Serialize;

use super::WeightedAdjacency;
use crate::error::{Error, Result};
use crate::graph::{DegreeSequence, Graph};

const A_POINTS: usize = 50;
const B_POINTS: usize = 21;
const B_RANGE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundingResult {
    #[serde(skip)]
    pub graph: Graph,
    pub a_star: f64,
    pub b_star: f64,
    /// `(1/n) Σ_i |#{j : Ã_ij > a* + b* ln d_i} / d_i − 1|`.
    pub degree_error: f64,
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|t| lo + (hi - lo) * t as f64 / (points - 1) as f64)
        .collect()
}

fn value_range(w: &WeightedAdjacency) -> (f64, f64) {
    let hi = w.upper().iter().copied().fold(0.0, f64::max);
    (0.0, hi)
}

/// Thresholds row `i` at `a + b ln d_i`, choosing `(a, b)` on a 50 × 21 grid
/// to best match the target degrees. An edge is kept only if both of its
/// rows fire. Ties go to the smaller `a`, then the smaller `b`.
pub fn round_weighted(w: &WeightedAdjacency, d: &DegreeSequence) -> Result<RoundingResult> {
    let n = w.n();
    if d.len() != n {
        return Err(Error::Precondition(format!("{} degrees for {n} nodes", d.len())));
    }
    d.require_positive()?;
    if w.upper().iter().all(|&x| x == 0.0) {
        return Ok(RoundingResult {
            graph: Graph::empty(n),
            a_star: 0.0,
            b_star: 0.0,
            degree_error: 1.0,
        });
    }
    // The grid spans the whole matrix, whose zero diagonal pins the low end at 0.
    let (lo, hi) = value_range(w);

    // Sorted off-diagonal row values; counting entries above a threshold is
    // then a binary search.
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| w.get(i, j)).collect();
            r.sort_by(f64::total_cmp);
            r
        })
        .collect();
    let log_d: Vec<f64> = d.as_slice().iter().map(|&x| (x as f64).ln()).collect();
    let target: Vec<f64> = d.as_slice().iter().map(|&x| x as f64).collect();

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &a in &grid(lo, hi, A_POINTS) {
        for &b in &grid(-B_RANGE, B_RANGE, B_POINTS) {
            let err: f64 = (0..n)
                .map(|i| {
                    let t = a + b * log_d[i];
                    let above = rows[i].len() - rows[i].partition_point(|&x| x <= t);
                    (above as f64 / target[i] - 1.0).abs()
                })
                .sum::<f64>()
                / n as f64;
            if err < best.0 {
                best = (err, a, b);
            }
        }
    }
    let (degree_error, a_star, b_star) = best;
    let graph = Graph::from_indicator(n, |i, j| {
        let wij = w.get(i, j);
        wij > a_star + b_star * log_d[i] && wij > a_star + b_star * log_d[j]
    });
    Ok(RoundingResult {
        graph,
        a_star,
        b_star,
        degree_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use crate::graph::sample_sbm;
    use crate::graph::SbmParams;

    #[test]
    fn integral_weights_round_to_themselves() {
        for g in [two_triangles_bridged(), path(6), cycle(9)] {
            let r = round_weighted(&WeightedAdjacency::from_graph(&g), &g.degrees()).unwrap();
            assert_eq!(r.degree_error, 0.0);
            assert_eq!(r.graph, g);
        }
    }

    #[test]
    fn single_candidate_edge() {
        let w = WeightedAdjacency::new(2, vec![0.9]).unwrap();
        let r = round_weighted(&w, &DegreeSequence::new(vec![1, 1])).unwrap();
        assert_eq!(r.graph.edges(), &[(0, 1)]);
        let w = WeightedAdjacency::new(3, vec![0.9, 0.0, 0.0]).unwrap();
        let r = round_weighted(&w, &DegreeSequence::new(vec![1, 1, 2])).unwrap();
        assert_eq!(r.graph.edges(), &[(0, 1)]);
    }

    #[test]
    fn all_zero_weights() {
        let w = WeightedAdjacency::new(3, vec![0.0; 3]).unwrap();
        let r = round_weighted(&w, &DegreeSequence::new(vec![1, 1, 2])).unwrap();
        assert_eq!(r.graph.edge_count(), 0);
        assert_eq!(r.degree_error, 1.0);
    }

    #[test]
    fn regular_degrees_match_a_scalar_threshold_sweep() {
        // With equal degrees every row shares one threshold, so AND-rounding
        // is plain thresholding at the best scalar on the implied grid.
        let g = cycle(8);
        let mut upper = WeightedAdjacency::from_graph(&g).upper().to_vec();
        for (t, x) in upper.iter_mut().enumerate() {
            *x = (*x * 0.7 + 0.03 * ((t * 7) % 11) as f64).min(1.0);
        }
        let w = WeightedAdjacency::new(8, upper).unwrap();
        let d = g.degrees();
        let r = round_weighted(&w, &d).unwrap();

        let (lo, hi) = value_range(&w);
        let mut best: Option<(f64, Graph)> = None;
        for a in grid(lo, hi, A_POINTS) {
            for b in grid(-B_RANGE, B_RANGE, B_POINTS) {
                let t = a + b * 2f64.ln();
                let cand = Graph::from_indicator(8, |i, j| w.get(i, j) > t);
                let err = cand.degrees().as_slice().iter().map(|&x| (x as f64 / 2.0 - 1.0).abs()).sum::<f64>() / 8.0;
                if best.as_ref().is_none_or(|(e, _)| err < *e) {
                    best = Some((err, cand));
                }
            }
        }
        let (err, graph) = best.unwrap();
        assert!((err - r.degree_error).abs() < 1e-15);
        assert_eq!(graph, r.graph);
    }

    #[test]
    fn rounded_graph_is_symmetric_and_loop_free() {
        let g = sample_sbm(
            &SbmParams {
                n: 30,
                fractions: vec![0.5, 0.5],
                p_within: 0.4,
                q_across: 0.1,
            },
            2,
        )
        .unwrap();
        let mut upper = WeightedAdjacency::from_graph(&g).upper().to_vec();
        for (t, x) in upper.iter_mut().enumerate() {
            *x = (0.6 * *x + 0.4 * (((t * 37) % 101) as f64 / 101.0)).min(1.0);
        }
        let w = WeightedAdjacency::new(30, upper).unwrap();
        let r = round_weighted(&w, &g.degrees()).unwrap();
        assert!(r.degree_error >= 0.0);
        for &(i, j) in r.graph.edges() {
            assert!(i < j);
        }
    }
}

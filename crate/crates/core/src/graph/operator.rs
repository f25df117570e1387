use nalgebra::DMatrix;

use super::Graph;
use crate::error::{Error, Result};

/// The smoothed normalized adjacency
/// `L = D'^{-1/2} ((1 - α) A + α I) D'^{-1/2}` with `d'_i = (1 - α) d_i + α`,
/// applied matrix-free over the graph's neighbor lists.
#[derive(Debug, Clone)]
pub struct SmoothedOperator<'g> {
    graph: &'g Graph,
    alpha: f64,
    smoothed: Vec<f64>,
    inv_sqrt: Vec<f64>,
}

impl<'g> SmoothedOperator<'g> {
    /// Pipeline constructor: requires `0 < α < 1` and no isolated nodes.
    pub fn new(graph: &'g Graph, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Precondition(format!(
                "smoothing parameter must lie in (0, 1), got {alpha}"
            )));
        }
        Self::build(graph, alpha)
    }

    /// Like [`SmoothedOperator::new`] but also accepts `α = 0`. Only meant for
    /// diagnostics; the convergence guarantees need `α > 0`.
    pub fn diagnostic(graph: &'g Graph, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Precondition(format!(
                "smoothing parameter must lie in [0, 1), got {alpha}"
            )));
        }
        Self::build(graph, alpha)
    }

    fn build(graph: &'g Graph, alpha: f64) -> Result<Self> {
        graph.degrees().require_positive()?;
        let smoothed: Vec<f64> = (0..graph.n())
            .map(|i| smoothed_degree(graph.degree(i), alpha))
            .collect();
        let inv_sqrt = smoothed.iter().map(|d| 1.0 / d.sqrt()).collect();
        Ok(SmoothedOperator {
            graph,
            alpha,
            smoothed,
            inv_sqrt,
        })
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Smoothed degrees `d'_i`.
    pub fn smoothed_degrees(&self) -> &[f64] {
        &self.smoothed
    }

    /// `y = L x` in `O(|E| + n)`.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n(), "vector length does not match operator");
        assert_eq!(y.len(), self.n(), "output length does not match operator");
        let off = 1.0 - self.alpha;
        for (i, out) in y.iter_mut().enumerate() {
            let neighbor_sum: f64 = self
                .graph
                .neighbors(i)
                .iter()
                .map(|&j| self.inv_sqrt[j] * x[j])
                .sum();
            *out = self.inv_sqrt[i] * (off * neighbor_sum + self.alpha * self.inv_sqrt[i] * x[i]);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    /// Single entry `L_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let numer = if i == j {
            self.alpha
        } else if self.graph.has_edge(i, j) {
            1.0 - self.alpha
        } else {
            0.0
        };
        numer * self.inv_sqrt[i] * self.inv_sqrt[j]
    }

    /// Dense row-major materialization.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = self.alpha * self.inv_sqrt[i] * self.inv_sqrt[i];
            for &j in self.graph.neighbors(i) {
                m[i * n + j] = (1.0 - self.alpha) * self.inv_sqrt[i] * self.inv_sqrt[j];
            }
        }
        m
    }
}

pub(crate) fn smoothed_degree(degree: usize, alpha: f64) -> f64 {
    (1.0 - alpha) * degree as f64 + alpha
}

/// Extremal spectrum of the smoothed operator.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    /// Unit-norm eigenvector of `lambda_max`, oriented to have a positive sum.
    pub top_eigvec: Vec<f64>,
    pub lambda_min: f64,
}

const EIGEN_MAX_ITERS: usize = 10_000;

/// Full symmetric eigendecomposition of `L`; reports the top and bottom of the
/// spectrum. The graph must be connected.
pub fn spectral_check(graph: &Graph, alpha: f64) -> Result<SpectralSummary> {
    if !graph.is_connected() {
        return Err(Error::Precondition("spectral check needs a connected graph".into()));
    }
    let op = SmoothedOperator::new(graph, alpha)?;
    let n = graph.n();
    let dense = DMatrix::from_row_slice(n, n, &op.to_dense());

    let Some(eigen) = dense.clone().try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITERS) else {
        // Report how far the predicted top pair is from being an eigenpair.
        let guess: Vec<f64> = op.smoothed_degrees().iter().map(|d| d.sqrt()).collect();
        return Err(Error::Eigensolver {
            iterations: EIGEN_MAX_ITERS,
            residual: rayleigh_residual(&op, &guess),
        });
    };

    let (mut top, mut bottom) = (0, 0);
    for (i, &value) in eigen.eigenvalues.iter().enumerate() {
        if value > eigen.eigenvalues[top] {
            top = i;
        }
        if value < eigen.eigenvalues[bottom] {
            bottom = i;
        }
    }
    let mut vec: Vec<f64> = eigen.eigenvectors.column(top).iter().copied().collect();
    if vec.iter().sum::<f64>() < 0.0 {
        vec.iter_mut().for_each(|x| *x = -*x);
    }
    let residual = rayleigh_residual(&op, &vec);
    if residual > 1e-6 {
        return Err(Error::Eigensolver {
            iterations: EIGEN_MAX_ITERS,
            residual,
        });
    }
    Ok(SpectralSummary {
        lambda_max: eigen.eigenvalues[top],
        top_eigvec: vec,
        lambda_min: eigen.eigenvalues[bottom],
    })
}

/// `‖L x − (xᵀLx / xᵀx) x‖ / ‖x‖`.
fn rayleigh_residual(op: &SmoothedOperator<'_>, x: &[f64]) -> f64 {
    let lx = op.apply(x);
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let rq = x.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>() / xx;
    let r: f64 = lx
        .iter()
        .zip(x)
        .map(|(l, v)| (l - rq * v).powi(2))
        .sum::<f64>()
        .sqrt();
    r / xx.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;

    #[test]
    fn path_without_smoothing() {
        let g = path3();
        let op = SmoothedOperator::diagnostic(&g, 0.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((op.entry(0, 1) - s).abs() < 1e-12);
        assert!((op.entry(1, 2) - s).abs() < 1e-12);
        assert_eq!(op.entry(0, 2), 0.0);
        for i in 0..3 {
            assert_eq!(op.entry(i, i), 0.0);
        }
        assert!(SmoothedOperator::new(&g, 0.0).is_err());
    }

    #[test]
    fn triangle_entries() {
        let g = triangle();
        let op = SmoothedOperator::new(&g, 0.9).unwrap();
        assert!(op.smoothed_degrees().iter().all(|&d| (d - 1.1).abs() < 1e-12));
        assert!((op.entry(0, 0) - 0.9 / 1.1).abs() < 1e-12);
        assert!((op.entry(0, 1) - 0.1 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn dense_matches_matvec() {
        let g = two_triangles_bridged();
        let op = SmoothedOperator::new(&g, 0.7).unwrap();
        let dense = op.to_dense();
        let x: Vec<f64> = (0..6).map(|i| (i as f64 * 0.37).sin() + 1.5).collect();
        let y = op.apply(&x);
        for i in 0..6 {
            let expect: f64 = (0..6).map(|j| dense[i * 6 + j] * x[j]).sum();
            assert!((y[i] - expect).abs() < 1e-14);
            for j in 0..6 {
                assert_eq!(op.entry(i, j), dense[i * 6 + j]);
            }
        }
    }

    #[test]
    fn regular_graph_fixes_all_ones() {
        let g = cycle(7);
        for alpha in [0.1, 0.5, 0.9] {
            let op = SmoothedOperator::new(&g, alpha).unwrap();
            let y = op.apply(&[1.0; 7]);
            assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn zero_degree_rejected() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        assert!(matches!(SmoothedOperator::new(&g, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn spectral_top_pair() {
        let s = spectral_check(&triangle(), 0.9).unwrap();
        assert!((s.lambda_max - 1.0).abs() < 1e-10);
        let u = 1.0 / 3f64.sqrt();
        assert!(s.top_eigvec.iter().all(|x| (x - u).abs() < 1e-10));

        let s = spectral_check(&path3(), 0.9).unwrap();
        let expect = [1.0f64, 1.1f64.sqrt(), 1.0];
        let norm = expect.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, want) in s.top_eigvec.iter().zip(expect) {
            assert!((got - want / norm).abs() < 1e-10);
        }
        assert!(s.lambda_min > -1.0);
    }

    #[test]
    fn spectral_rejects_disconnected() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(spectral_check(&g, 0.5).is_err());
    }
}

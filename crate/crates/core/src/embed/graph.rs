//! k-nearest-neighbor similarity graph over descriptor rows.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Edge weighting kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKernel {
    /// Cosine similarity of the endpoint descriptors.
    Cosine,
    /// Heat kernel exp(-||xi - xj||^2 / 2 sigma^2) with an AU-presence boost.
    Heat,
}

/// Graph construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GraphParams {
    /// Neighbors per node.
    pub p: usize,
    pub kernel: GraphKernel,
    /// Heat-kernel width; `None` self-tunes to the median neighbor distance.
    pub sigma_heat: Option<f64>,
    /// Heat-kernel weight factor for edges with no pain-related AU at either
    /// endpoint (flagged edges use 1).
    pub kappa: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            p: 8,
            kernel: GraphKernel::Heat,
            sigma_heat: None,
            kappa: 0.5,
        }
    }
}

/// Symmetric sparse nonnegative similarity matrix with k-NN union sparsity.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    n: usize,
    /// Undirected edges (i < j, weight > 0).
    edges: Vec<(usize, usize, f64)>,
    /// Adjacency lists mirroring `edges` in both directions.
    adjacency: Vec<Vec<(usize, f64)>>,
    /// Heat-kernel width actually used (when applicable).
    pub sigma_heat: Option<f64>,
}

impl SimilarityGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }

    /// Row sums of W.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            d[i] += w;
            d[j] += w;
        }
        d
    }

    /// y = W x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, w) in nbrs {
                acc += w * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n, self.n));
        for &(i, j, v) in &self.edges {
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
        w
    }
}

/// Build the mutual-or k-NN similarity graph of descriptor rows.
///
/// An edge is kept when either endpoint lists the other among its `p`
/// nearest rows by Euclidean distance. Weights come from the configured
/// kernel; under the heat kernel, edges touching a flagged node keep factor
/// 1 and unflagged edges are damped by `kappa`.
pub fn build_graph(
    x: &Array2<f64>,
    params: &GraphParams,
    flags: &[bool],
) -> Result<SimilarityGraph> {
    let n = x.nrows();
    if params.p < 1 || n <= params.p {
        return Err(Error::InvalidParam(format!(
            "need n > p >= 1, got n = {n}, p = {}",
            params.p
        )));
    }
    if !flags.is_empty() && flags.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: flags.len(),
        });
    }
    if !(params.kappa > 0.0) || !params.kappa.is_finite() {
        return Err(Error::InvalidParam(format!(
            "kappa must be finite and > 0, got {}",
            params.kappa
        )));
    }
    for (i, row) in x.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("row {i} is not finite")));
        }
    }

    let norms: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if params.kernel == GraphKernel::Cosine {
        if let Some(i) = norms.iter().position(|&v| v < 1e-12) {
            return Err(Error::InvalidParam(format!(
                "row {i} has zero norm, cosine similarity undefined"
            )));
        }
    }

    // squared distances, n x n (n stays desk-scale; dense is simplest)
    let mut d2 = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for k in 0..x.ncols() {
                let d = x[[i, k]] - x[[j, k]];
                acc += d * d;
            }
            d2[i][j] = acc;
            d2[j][i] = acc;
        }
    }

    // p nearest neighbors of each node, ties broken by index
    let mut neighbor = vec![vec![false; n]; n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            d2[i][a]
                .partial_cmp(&d2[i][b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(params.p) {
            neighbor[i][j] = true;
        }
    }

    // union sparsity
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if neighbor[i][j] || neighbor[j][i] {
                pairs.push((i, j));
            }
        }
    }

    let sigma_heat = match params.kernel {
        GraphKernel::Heat => Some(match params.sigma_heat {
            Some(s) => {
                if !(s > 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "sigma_heat must be > 0, got {s}"
                    )));
                }
                s
            }
            None => {
                // median distance over kept edges
                let mut dists: Vec<f64> =
                    pairs.iter().map(|&(i, j)| d2[i][j].sqrt()).collect();
                dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let med = if dists.is_empty() {
                    1.0
                } else {
                    dists[dists.len() / 2]
                };
                med.max(1e-12)
            }
        }),
        GraphKernel::Cosine => None,
    };

    let flagged = |k: usize| -> bool { !flags.is_empty() && flags[k] };
    let mut edges = Vec::with_capacity(pairs.len());
    let mut adjacency = vec![Vec::new(); n];
    for (i, j) in pairs {
        let w = match params.kernel {
            GraphKernel::Cosine => {
                let dot: f64 = (0..x.ncols()).map(|k| x[[i, k]] * x[[j, k]]).sum();
                // descriptors are nonnegative; clamp stray negatives to keep W nonnegative
                (dot / (norms[i] * norms[j])).max(0.0)
            }
            GraphKernel::Heat => {
                let s = sigma_heat.unwrap();
                let k = if flagged(i) || flagged(j) {
                    1.0
                } else {
                    params.kappa
                };
                k * (-d2[i][j] / (2.0 * s * s)).exp()
            }
        };
        if w > 0.0 {
            edges.push((i, j, w));
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }

    Ok(SimilarityGraph {
        n,
        edges,
        adjacency,
        sigma_heat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_points_reach_unit_weight() {
        // heat kernel with a flagged endpoint: exp(0) * 1 = 1
        let x = array![[1.0, 2.0], [1.0, 2.0], [3.0, 1.0], [4.0, 4.0]];
        let params = GraphParams {
            p: 1,
            kernel: GraphKernel::Heat,
            sigma_heat: Some(1.0),
            kappa: 0.5,
        };
        let g = build_graph(&x, &params, &[true, false, false, false]).unwrap();
        assert!((g.weight(0, 1) - 1.0).abs() < 1e-12);

        // cosine of equal vectors is 1 regardless of flags
        let params = GraphParams {
            p: 1,
            kernel: GraphKernel::Cosine,
            sigma_heat: None,
            kappa: 0.5,
        };
        let g = build_graph(&x, &params, &[]).unwrap();
        assert!((g.weight(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_damps_unflagged_edges() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]];
        let params = GraphParams {
            p: 1,
            kernel: GraphKernel::Heat,
            sigma_heat: Some(1.0),
            kappa: 0.5,
        };
        let g = build_graph(&x, &params, &[true, false, false, false]).unwrap();
        let boosted = g.weight(0, 1);
        let plain = g.weight(2, 3);
        // same distance, so the ratio is exactly kappa
        assert!((plain / boosted - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_tight_clusters_stay_disconnected() {
        // 6 points in two clusters of 3, p = 2: no cross-cluster edges.
        // Verified against brute-force distance enumeration: every
        // within-cluster distance is < 0.3, every cross distance > 9.
        let x = array![
            [0.0, 0.0],
            [0.2, 0.0],
            [0.0, 0.2],
            [10.0, 10.0],
            [10.2, 10.0],
            [10.0, 10.2]
        ];
        let params = GraphParams {
            p: 2,
            kernel: GraphKernel::Heat,
            sigma_heat: None,
            kappa: 0.5,
        };
        let g = build_graph(&x, &params, &[]).unwrap();
        for &(i, j, w) in g.edges() {
            let same_cluster = (i < 3) == (j < 3);
            assert!(same_cluster, "cross edge ({i},{j}) weight {w}");
        }
        // block structure: each cluster fully connected under p=2
        for c in [0usize, 3] {
            for a in c..c + 3 {
                for b in (a + 1)..c + 3 {
                    assert!(g.weight(a, b) > 0.0, "missing edge ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn symmetry_and_sparsity_pattern() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let n = 40;
        let x = Array2::from_shape_fn((n, 6), |_| rng.random_range(-1.0..1.0));
        let params = GraphParams::default();
        let g = build_graph(&x, &params, &[]).unwrap();
        let w = g.to_dense();
        for i in 0..n {
            assert_eq!(w[[i, i]], 0.0, "diagonal must stay zero");
            for j in 0..n {
                assert!((w[[i, j]] - w[[j, i]]).abs() < 1e-12);
                assert!(w[[i, j]] >= 0.0);
            }
        }
        // every node touches at least p edges (its own neighbor list)
        for i in 0..n {
            let deg = (0..n).filter(|&j| w[[i, j]] > 0.0).count();
            assert!(deg >= params.p, "node {i} has degree {deg}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0, 0.0], [1.0, 0.0]];
        let params = GraphParams::default();
        assert!(build_graph(&x, &params, &[]).is_err()); // n <= p
        let zero = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let cosine = GraphParams {
            p: 1,
            kernel: GraphKernel::Cosine,
            sigma_heat: None,
            kappa: 0.5,
        };
        assert!(build_graph(&zero, &cosine, &[]).is_err()); // zero-norm row
    }
}

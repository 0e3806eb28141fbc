//! Self-taught dimensionality reduction.
//!
//! A k-NN similarity graph is built over unlabeled source descriptors, its
//! leading eigenvectors give a low-dimensional embedding, and projection
//! directions are fitted to that embedding by regularized least squares
//! (spectral regression). PCA and locality-preserving projections serve as
//! baseline reducers behind the same interface.

mod graph;
pub(crate) mod linalg;

pub use graph::{build_graph, GraphKernel, GraphParams, SimilarityGraph};

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Nodes below this count use the dense Jacobi solver; larger graphs switch
/// to Lanczos on the sparse matrix.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// Reduction method behind a `ProjectionBasis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMethod {
    /// Spectral regression on the heat-kernel, AU-boosted graph.
    SrM,
    /// Spectral regression on the cosine graph.
    Sr,
    /// Locality preserving projection.
    Lpp,
    /// Principal component analysis.
    Pca,
}

impl std::fmt::Display for ReductionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ReductionMethod::SrM => "sr-m",
            ReductionMethod::Sr => "sr",
            ReductionMethod::Lpp => "lpp",
            ReductionMethod::Pca => "pca",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ReductionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sr-m" | "srm" => Ok(ReductionMethod::SrM),
            "sr" => Ok(ReductionMethod::Sr),
            "lpp" => Ok(ReductionMethod::Lpp),
            "pca" => Ok(ReductionMethod::Pca),
            other => Err(Error::InvalidParam(format!(
                "unknown reduction method '{other}' (expected sr-m, sr, lpp or pca)"
            ))),
        }
    }
}

/// Where a basis was trained.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct BasisProvenance {
    pub source_id: String,
    pub seed: u64,
}

/// A matrix of linear projection directions with provenance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProjectionBasis {
    /// Schema version of the serialized form.
    pub version: u32,
    pub method: ReductionMethod,
    pub alpha: f64,
    /// Input dimensionality d.
    pub d: usize,
    /// Output dimensionality T.
    pub t: usize,
    /// Projection directions, d x T, column j is direction b_j.
    pub columns: Vec<Vec<f64>>,
    /// Eigenvalues (graph spectrum for SR, covariance/LPP spectrum otherwise).
    pub spectrum: Vec<f64>,
    pub provenance: BasisProvenance,
}

pub const BASIS_FORMAT_VERSION: u32 = 1;

impl ProjectionBasis {
    fn from_matrix(
        b: Array2<f64>,
        method: ReductionMethod,
        alpha: f64,
        spectrum: Vec<f64>,
        provenance: BasisProvenance,
    ) -> Self {
        let (d, t) = b.dim();
        let columns = (0..t)
            .map(|c| (0..d).map(|r| b[[r, c]]).collect())
            .collect();
        ProjectionBasis {
            version: BASIS_FORMAT_VERSION,
            method,
            alpha,
            d,
            t,
            columns,
            spectrum,
            provenance,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::ModelFormat {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let basis: ProjectionBasis =
            serde_json::from_str(&text).map_err(|e| Error::ModelFormat {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        if basis.version != BASIS_FORMAT_VERSION {
            return Err(Error::ModelFormat {
                path: path.to_path_buf(),
                detail: format!(
                    "basis format version {} not supported (expected {})",
                    basis.version, BASIS_FORMAT_VERSION
                ),
            });
        }
        basis.validate()?;
        Ok(basis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() != self.t {
            return Err(Error::DimensionMismatch {
                expected: self.t,
                got: self.columns.len(),
            });
        }
        for col in &self.columns {
            if col.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: col.len(),
                });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParam("basis column not finite".into()));
            }
        }
        Ok(())
    }
}

/// Project one descriptor: z_j = b_j . x.
pub fn project(basis: &ProjectionBasis, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != basis.d {
        return Err(Error::DimensionMismatch {
            expected: basis.d,
            got: x.len(),
        });
    }
    Ok(basis
        .columns
        .iter()
        .map(|b| b.iter().zip(x).map(|(bi, xi)| bi * xi).sum())
        .collect())
}

/// Project every row of an n x d matrix to n x T.
pub fn project_rows(basis: &ProjectionBasis, x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != basis.d {
        return Err(Error::DimensionMismatch {
            expected: basis.d,
            got: x.ncols(),
        });
    }
    let n = x.nrows();
    let mut z = Array2::zeros((n, basis.t));
    for i in 0..n {
        for (j, b) in basis.columns.iter().enumerate() {
            z[[i, j]] = b.iter().zip(x.row(i)).map(|(bi, xi)| bi * xi).sum();
        }
    }
    Ok(z)
}

/// Leading eigenvectors of the similarity matrix.
///
/// Returns the `t` eigenvectors with largest eigenvalues, excluding any whose
/// entries are constant to within 1e-8 (the trivial component), unit norm,
/// sign fixed so the first nonzero entry is positive, descending eigenvalue
/// order.
pub fn graph_eigenvectors(g: &SimilarityGraph, t: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = g.n();
    if t >= n {
        return Err(Error::InvalidParam(format!(
            "requested {t} eigenvectors of a {n}-node graph"
        )));
    }
    let (vals, vecs) = if n < DENSE_EIGEN_LIMIT {
        linalg::eigh(&g.to_dense(), 100)?
    } else {
        // ask for extras so trivial-component exclusion can still fill t
        let want = (t + 8).min(n);
        let steps = (4 * want + 40).min(n);
        linalg::lanczos_top(n, |x| g.matvec(x), want, steps)?
    };

    let available = vals.len();
    let mut kept_vals = Vec::with_capacity(t);
    let mut kept_cols: Vec<usize> = Vec::with_capacity(t);
    for c in 0..available {
        let col = vecs.column(c);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in col.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-8 {
            continue; // trivial near-constant component
        }
        kept_vals.push(vals[c]);
        kept_cols.push(c);
        if kept_vals.len() == t {
            break;
        }
    }
    if kept_vals.len() < t {
        return Err(Error::InvalidParam(format!(
            "only {} non-trivial eigenvectors available, {t} requested",
            kept_vals.len()
        )));
    }
    let mut u = Array2::zeros((n, t));
    for (out_c, &c) in kept_cols.iter().enumerate() {
        let mut col: Vec<f64> = vecs.column(c).iter().copied().collect();
        let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in col.iter_mut() {
            *v /= norm;
        }
        linalg::fix_sign(&mut col);
        for (r, &v) in col.iter().enumerate() {
            u[[r, out_c]] = v;
        }
    }
    Ok((kept_vals, u))
}

/// Fit spectral-regression directions: each column b_j minimizes
/// sum_i (b_j . x_i - u_ij)^2 + alpha ||b_j||^2, solved by the normal
/// equations (X^T X + alpha I) b_j = X^T u_j.
pub fn fit_spectral_regression(
    x: &Array2<f64>,
    u: &Array2<f64>,
    alpha: f64,
    method: ReductionMethod,
    provenance: BasisProvenance,
) -> Result<ProjectionBasis> {
    let (n, d) = x.dim();
    if u.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.nrows(),
        });
    }
    if alpha < 0.0 {
        return Err(Error::InvalidParam(format!("alpha must be >= 0, got {alpha}")));
    }
    let t = u.ncols();
    let mut gram = x.t().dot(x);
    for k in 0..d {
        gram[[k, k]] += alpha;
    }
    let l = linalg::cholesky(&gram).map_err(|_| {
        Error::SingularSystem(
            "X^T X + alpha I is singular; supply alpha > 0".into(),
        )
    })?;
    let mut b = Array2::zeros((d, t));
    for j in 0..t {
        let rhs: Array1<f64> = x.t().dot(&u.column(j));
        let col = linalg::cholesky_solve(&l, &rhs);
        for r in 0..d {
            b[[r, j]] = col[r];
        }
    }
    Ok(ProjectionBasis::from_matrix(
        b,
        method,
        alpha,
        vec![],
        provenance,
    ))
}

/// Principal component analysis: top-T eigenvectors of the covariance of
/// mean-centered rows.
pub fn fit_pca(x: &Array2<f64>, t: usize, provenance: BasisProvenance) -> Result<ProjectionBasis> {
    let (n, d) = x.dim();
    if t > d || n < 2 {
        return Err(Error::InvalidParam(format!(
            "cannot extract {t} components from {n} x {d} data"
        )));
    }
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = x - &mean.broadcast((n, d)).unwrap();
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let (vals, vecs) = linalg::eigh(&cov, 100)?;
    let rank_tol = vals[0].abs().max(1e-300) * 1e-10;
    let rank = vals.iter().filter(|&&v| v > rank_tol).count();
    if t > rank {
        return Err(Error::InvalidParam(format!(
            "requested {t} components but data rank is {rank}"
        )));
    }
    let b = vecs.slice(ndarray::s![.., ..t]).to_owned();
    Ok(ProjectionBasis::from_matrix(
        b,
        ReductionMethod::Pca,
        0.0,
        vals,
        provenance,
    ))
}

/// Locality preserving projection: generalized eigenproblem
/// X^T L X b = lambda X^T D X b with the smallest-eigenvalue solutions,
/// ridge-regularized on the right-hand side.
pub fn fit_lpp(
    x: &Array2<f64>,
    g: &SimilarityGraph,
    t: usize,
    provenance: BasisProvenance,
) -> Result<ProjectionBasis> {
    let (n, d) = x.dim();
    if g.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: g.n(),
        });
    }
    if t > d {
        return Err(Error::InvalidParam(format!(
            "requested {t} directions from {d}-dimensional data"
        )));
    }
    let degrees = g.degrees();
    // A = X^T L X, B = X^T D X computed without materializing L
    let mut xtdx: Array2<f64> = Array2::zeros((d, d));
    for i in 0..n {
        let xi = x.row(i);
        for a in 0..d {
            let da = degrees[i] * xi[a];
            for b in 0..d {
                xtdx[[a, b]] += da * xi[b];
            }
        }
    }
    let mut xtwx: Array2<f64> = Array2::zeros((d, d));
    for &(i, j, w) in g.edges() {
        let xi = x.row(i);
        let xj = x.row(j);
        for a in 0..d {
            for b in 0..d {
                xtwx[[a, b]] += w * (xi[a] * xj[b] + xj[a] * xi[b]);
            }
        }
    }
    let a_mat = &xtdx - &xtwx; // X^T (D - W) X
    let mut b_mat = xtdx;
    let scale = (0..d).map(|k| b_mat[[k, k]]).sum::<f64>() / d as f64;
    let eps = 1e-8 * scale.max(1e-12);
    for k in 0..d {
        b_mat[[k, k]] += eps;
    }

    // reduce to a standard problem through the Cholesky factor of B
    let l = linalg::cholesky(&b_mat)?;
    let tmp = linalg::solve_lower_triangular(&l, &a_mat);
    let c = linalg::solve_lower_triangular(&l, &tmp.t().to_owned());
    // symmetrize against round-off
    let c = (&c + &c.t()) * 0.5;
    let (vals, vecs) = linalg::eigh(&c, 120)?;
    // eigh sorts descending; LPP wants the smallest eigenvalues
    let mut b = Array2::zeros((d, t));
    let mut spectrum = Vec::with_capacity(t);
    for j in 0..t {
        let c_idx = vals.len() - 1 - j;
        spectrum.push(vals[c_idx]);
        let y: Array1<f64> = vecs.column(c_idx).to_owned();
        let col = linalg::solve_upper_from_lower(&l, &y.insert_axis(ndarray::Axis(1)));
        let mut col: Vec<f64> = (0..d).map(|r| col[[r, 0]]).collect();
        let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in col.iter_mut() {
                *v /= norm;
            }
        }
        linalg::fix_sign(&mut col);
        for (r, &v) in col.iter().enumerate() {
            b[[r, j]] = v;
        }
    }
    Ok(ProjectionBasis::from_matrix(
        b,
        ReductionMethod::Lpp,
        eps,
        spectrum,
        provenance,
    ))
}

/// Embedding configuration for basis learning.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbedConfig {
    pub graph: GraphParams,
    /// Ridge weight of the spectral-regression fit.
    pub alpha: f64,
    /// Solve the degree-normalized eigenproblem W u = lambda D u instead of
    /// the plain one.
    pub normalized_eigen: bool,
    /// L2-normalize descriptor rows before graph construction and fitting.
    pub unit_norm: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            graph: GraphParams::default(),
            alpha: 0.01,
            normalized_eigen: false,
            unit_norm: true,
        }
    }
}

/// L2-normalize rows; zero rows stay zero.
pub fn unit_normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// Learn a projection basis on unlabeled source descriptors with the chosen
/// method. `flags` mark source rows showing at least one pain-related AU.
pub fn learn_basis(
    x: &Array2<f64>,
    flags: &[bool],
    method: ReductionMethod,
    t: usize,
    cfg: &EmbedConfig,
    provenance: BasisProvenance,
) -> Result<ProjectionBasis> {
    let xn;
    let x = if cfg.unit_norm {
        xn = unit_normalize_rows(x);
        &xn
    } else {
        x
    };
    match method {
        ReductionMethod::Pca => fit_pca(x, t, provenance),
        ReductionMethod::Lpp => {
            let params = GraphParams {
                kernel: GraphKernel::Cosine,
                ..cfg.graph
            };
            let g = build_graph(x, &params, &[])?;
            fit_lpp(x, &g, t, provenance)
        }
        ReductionMethod::Sr | ReductionMethod::SrM => {
            let params = match method {
                ReductionMethod::Sr => GraphParams {
                    kernel: GraphKernel::Cosine,
                    ..cfg.graph
                },
                _ => GraphParams {
                    kernel: GraphKernel::Heat,
                    ..cfg.graph
                },
            };
            let flags = if method == ReductionMethod::SrM {
                flags
            } else {
                &[]
            };
            let g = build_graph(x, &params, flags)?;
            let (spectrum, u) = if cfg.normalized_eigen {
                normalized_graph_eigenvectors(&g, t)?
            } else {
                graph_eigenvectors(&g, t)?
            };
            let mut basis = fit_spectral_regression(x, &u, cfg.alpha, method, provenance)?;
            basis.spectrum = spectrum;
            Ok(basis)
        }
    }
}

/// Degree-normalized variant: solve D^{-1/2} W D^{-1/2} v = lambda v and
/// return u = D^{-1/2} v, matching W u = lambda D u.
pub fn normalized_graph_eigenvectors(
    g: &SimilarityGraph,
    t: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = g.n();
    if t >= n {
        return Err(Error::InvalidParam(format!(
            "requested {t} eigenvectors of a {n}-node graph"
        )));
    }
    let degrees = g.degrees();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 1e-12 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut m = Array2::zeros((n, n));
    for &(i, j, w) in g.edges() {
        let v = w * inv_sqrt[i] * inv_sqrt[j];
        m[[i, j]] = v;
        m[[j, i]] = v;
    }
    let (vals, vecs) = linalg::eigh(&m, 100)?;
    let mut kept_vals = Vec::with_capacity(t);
    let mut u = Array2::zeros((n, t));
    let mut out_c = 0;
    for c in 0..n {
        let mut col: Vec<f64> = (0..n).map(|r| vecs[[r, c]] * inv_sqrt[r]).collect();
        let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        for v in col.iter_mut() {
            *v /= norm;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in &col {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-8 {
            continue;
        }
        linalg::fix_sign(&mut col);
        for (r, &v) in col.iter().enumerate() {
            u[[r, out_c]] = v;
        }
        kept_vals.push(vals[c]);
        out_c += 1;
        if out_c == t {
            break;
        }
    }
    if out_c < t {
        return Err(Error::InvalidParam(format!(
            "only {out_c} non-trivial eigenvectors available, {t} requested"
        )));
    }
    Ok((kept_vals, u))
}

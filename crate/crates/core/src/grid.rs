//! Tensor index lattice, its nearest-neighbour graph and the graph Laplacian.
//!
//! Entries of a `P1 x ... x PD` tensor are vectorized in column-major order
//! (the first index varies fastest). Internally every routine works with the
//! 0-based vectorized offset; [`TensorShape::vectorize_index`] exposes the
//! 1-based convention used when talking about tensor entries.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FenError, Result};

/// Dimensions `(P1, ..., PD)` of a covariate tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorShape {
    dims: Vec<usize>,
}

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(FenError::InvalidShape("shape has no dimensions".into()));
        }
        if dims.contains(&0) {
            return Err(FenError::InvalidShape(format!("zero-length mode in {dims:?}")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Number of tensor entries, `P1 * ... * PD`.
    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    /// 1-based multi-index to 1-based vectorized position
    /// `t = i1 + sum_{d>=2} (i_d - 1) prod_{d'<d} P_d'`.
    pub fn vectorize_index(&self, index: &[usize]) -> Result<usize> {
        let zero_based: Option<Vec<usize>> = index.iter().map(|&i| i.checked_sub(1)).collect();
        match zero_based {
            Some(zb) => self.offset(&zb).map(|t| t + 1),
            None => Err(self.out_of_range(index)),
        }
    }

    /// Inverse of [`vectorize_index`](Self::vectorize_index), 1-based on both sides.
    pub fn devectorize_index(&self, t: usize) -> Result<Vec<usize>> {
        if t == 0 || t > self.size() {
            return Err(self.out_of_range(&[t]));
        }
        Ok(self.multi_index(t - 1).into_iter().map(|i| i + 1).collect())
    }

    /// 0-based multi-index to 0-based column-major offset.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() || index.iter().zip(&self.dims).any(|(&i, &p)| i >= p) {
            return Err(self.out_of_range(index));
        }
        let mut t = 0;
        let mut stride = 1;
        for (&i, &p) in index.iter().zip(&self.dims) {
            t += i * stride;
            stride *= p;
        }
        Ok(t)
    }

    /// 0-based column-major offset to 0-based multi-index. Panics if out of range.
    pub fn multi_index(&self, mut t: usize) -> Vec<usize> {
        assert!(t < self.size(), "offset {t} out of range");
        self.dims
            .iter()
            .map(|&p| {
                let i = t % p;
                t /= p;
                i
            })
            .collect()
    }

    fn out_of_range(&self, index: &[usize]) -> FenError {
        FenError::IndexOutOfRange { index: index.to_vec(), shape: self.dims.clone() }
    }
}

/// Lattice graph over tensor entries: `(i, i')` is an edge iff `|i - i'|_1 = 1`.
#[derive(Debug, Clone)]
pub struct IndexGraph {
    shape: TensorShape,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl IndexGraph {
    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn node_count(&self) -> usize {
        self.shape.size()
    }

    /// Edges `(t, t')` with `t < t'` in 0-based vectorized coordinates, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, t: usize) -> &[usize] {
        &self.neighbors[t]
    }

    pub fn degree(&self, t: usize) -> usize {
        self.neighbors[t].len()
    }
}

pub fn build_grid_graph(shape: &TensorShape) -> IndexGraph {
    let n = shape.size();
    let mut edges = Vec::new();
    let mut strides = Vec::with_capacity(shape.order());
    let mut s = 1;
    for &p in shape.dims() {
        strides.push(s);
        s *= p;
    }
    for t in 0..n {
        let idx = shape.multi_index(t);
        for (d, &p) in shape.dims().iter().enumerate() {
            if idx[d] + 1 < p {
                edges.push((t, t + strides[d]));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let mut neighbors = vec![Vec::new(); n];
    for &(a, b) in &edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
    }
    IndexGraph { shape: shape.clone(), edges, neighbors }
}

/// Dense combinatorial Laplacian `L = D - A`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub matrix: DMatrix<f64>,
    pub degree: Vec<f64>,
}

pub fn laplacian(graph: &IndexGraph) -> Laplacian {
    let n = graph.node_count();
    let mut matrix = DMatrix::zeros(n, n);
    for &(a, b) in graph.edges() {
        matrix[(a, b)] -= 1.0;
        matrix[(b, a)] -= 1.0;
        matrix[(a, a)] += 1.0;
        matrix[(b, b)] += 1.0;
    }
    let degree = (0..n).map(|t| matrix[(t, t)]).collect();
    Laplacian { matrix, degree }
}

/// One Laplacian eigenpair. `values` is indexed by vectorized offset, so for a
/// 2-way shape it is the column-major reshaping into a `P1 x P2` field.
#[derive(Debug, Clone)]
pub struct EigenField {
    pub eigenvalue: f64,
    pub values: DVector<f64>,
}

impl EigenField {
    /// Reshape into a `P1 x P2` matrix (column-major). Only meaningful for 2-way shapes.
    pub fn as_matrix(&self, shape: &TensorShape) -> DMatrix<f64> {
        let dims = shape.dims();
        let (rows, cols) = (dims[0], dims.get(1).copied().unwrap_or(1));
        DMatrix::from_column_slice(rows, cols, self.values.as_slice())
    }
}

/// All eigenpairs of the Laplacian sorted by ascending eigenvalue. Each
/// eigenvector is normalized and signed so its first entry with magnitude
/// above 1e-12 is positive.
pub fn laplacian_spectrum(graph: &IndexGraph) -> Vec<EigenField> {
    let lap = laplacian(graph);
    let eig = SymmetricEigen::new(lap.matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order
        .into_iter()
        .map(|j| {
            let mut v: DVector<f64> = eig.eigenvectors.column(j).into_owned();
            let norm = v.norm();
            v /= norm;
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.neg_mut();
                }
            }
            EigenField { eigenvalue: eig.eigenvalues[j].max(0.0), values: v }
        })
        .collect()
}

/// The `count` smoothest Laplacian eigenfields (smallest eigenvalues first).
/// The first one is the constant field.
pub fn smooth_eigvectors(graph: &IndexGraph, count: usize) -> Result<Vec<EigenField>> {
    let nodes = graph.node_count();
    if count >= nodes {
        return Err(FenError::TooManyEigenvectors { requested: count, nodes });
    }
    if graph.shape().order() > 2 {
        return Err(FenError::InvalidShape(
            "smooth eigenfields are generated for 1- and 2-way shapes only".into(),
        ));
    }
    let mut spectrum = laplacian_spectrum(graph);
    spectrum.truncate(count);
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    fn brute_force_edges(s: &TensorShape) -> usize {
        let n = s.size();
        let mut count = 0;
        for a in 0..n {
            for b in (a + 1)..n {
                let ia = s.multi_index(a);
                let ib = s.multi_index(b);
                let l1: usize = ia.iter().zip(&ib).map(|(x, y)| x.abs_diff(*y)).sum();
                if l1 == 1 {
                    count += 1;
                }
            }
        }
        count
    }

    fn formula_edges(s: &TensorShape) -> usize {
        let dims = s.dims();
        (0..dims.len())
            .map(|d| {
                let others: usize =
                    dims.iter().enumerate().filter(|(e, _)| *e != d).map(|(_, p)| p).product();
                (dims[d] - 1) * others
            })
            .sum()
    }

    #[test]
    fn small_edge_counts() {
        assert_eq!(build_grid_graph(&shape(&[2, 2])).edges().len(), 4);
        assert_eq!(build_grid_graph(&shape(&[3])).edges().len(), 2);
    }

    #[test]
    fn edge_count_15x15_matches_brute_force() {
        let s = shape(&[15, 15]);
        let g = build_grid_graph(&s);
        assert_eq!(brute_force_edges(&s), 420);
        assert_eq!(g.edges().len(), 420);
    }

    #[test]
    fn edge_formula_up_to_four_way() {
        for dims in [
            vec![1],
            vec![4],
            vec![1, 1],
            vec![2, 3],
            vec![3, 1, 2],
            vec![2, 3, 4],
            vec![2, 2, 2, 2],
            vec![3, 1, 2, 2],
        ] {
            let s = shape(&dims);
            let g = build_grid_graph(&s);
            assert_eq!(g.edges().len(), brute_force_edges(&s), "{dims:?}");
            assert_eq!(g.edges().len(), formula_edges(&s), "{dims:?}");
            assert!(g.edges().windows(2).all(|w| w[0] < w[1]));
            assert!(g.edges().iter().all(|(a, b)| a < b));
        }
    }

    #[test]
    fn empty_shape_rejected() {
        assert!(matches!(TensorShape::new(vec![]), Err(FenError::InvalidShape(_))));
        assert!(TensorShape::new(vec![3, 0]).is_err());
    }

    #[test]
    fn vectorize_examples() {
        assert_eq!(shape(&[3, 3]).vectorize_index(&[1, 1]).unwrap(), 1);
        assert_eq!(shape(&[7, 2, 5]).vectorize_index(&[1, 1, 1]).unwrap(), 1);
        assert_eq!(shape(&[3, 3]).vectorize_index(&[2, 3]).unwrap(), 8);
        assert!(shape(&[3, 3]).vectorize_index(&[4, 1]).is_err());
        assert!(shape(&[3, 3]).vectorize_index(&[0, 1]).is_err());
        assert!(shape(&[3, 3]).vectorize_index(&[1]).is_err());
    }

    #[test]
    fn vectorize_round_trip_exhaustive() {
        let s = shape(&[4, 5]);
        let mut seen = [false; 20];
        for i in 1..=4 {
            for j in 1..=5 {
                let t = s.vectorize_index(&[i, j]).unwrap();
                assert!(!seen[t - 1]);
                seen[t - 1] = true;
                assert_eq!(s.devectorize_index(t).unwrap(), vec![i, j]);
            }
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn path_laplacian_spectrum() {
        let g = build_grid_graph(&shape(&[3]));
        let lap = laplacian(&g);
        assert_eq!(lap.degree, vec![1.0, 2.0, 1.0]);
        let spec = laplacian_spectrum(&g);
        let ev: Vec<f64> = spec.iter().map(|e| e.eigenvalue).collect();
        for (got, want) in ev.iter().zip([0.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn rows_sum_to_zero() {
        for dims in [vec![2, 2], vec![5, 3], vec![2, 3, 2]] {
            let lap = laplacian(&build_grid_graph(&shape(&dims)));
            for row in lap.matrix.row_iter() {
                assert!(row.sum().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_by_two_rank_three() {
        let spec = laplacian_spectrum(&build_grid_graph(&shape(&[2, 2])));
        let nonzero = spec.iter().filter(|e| e.eigenvalue > 1e-10).count();
        assert_eq!(nonzero, 3);
    }

    #[test]
    fn smooth_fields_constant_first_and_orthonormal() {
        let g = build_grid_graph(&shape(&[6, 6]));
        let fields = smooth_eigvectors(&g, 10).unwrap();
        let c = 1.0 / 6.0;
        for v in fields[0].values.iter() {
            assert!((v - c).abs() < 1e-10);
        }
        for (a, fa) in fields.iter().enumerate() {
            for (b, fb) in fields.iter().enumerate() {
                let dot = fa.values.dot(&fb.values);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
        assert!(fields.windows(2).all(|w| w[0].eigenvalue <= w[1].eigenvalue));
    }

    #[test]
    fn too_many_eigenvectors() {
        let g = build_grid_graph(&shape(&[3, 3]));
        assert!(matches!(
            smooth_eigvectors(&g, 9),
            Err(FenError::TooManyEigenvectors { requested: 9, nodes: 9 })
        ));
    }
}

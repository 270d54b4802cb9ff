//! Random dot product and stochastic block model samplers.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, purpose, rng_from_seed};

const PI_SUM_TOL: f64 = 1e-12;
// Inner products of latent positions may overshoot [0, 1] by rounding.
const PROB_SLACK: f64 = 1e-12;

/// Block connectivity matrix `B` and block membership probabilities `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmParams {
    b: DMatrix<f64>,
    pi: Vec<f64>,
}

impl SbmParams {
    pub fn new(b: DMatrix<f64>, pi: Vec<f64>) -> Result<Self> {
        let k = pi.len();
        if k == 0 {
            return Err(Error::param("pi must have at least one entry"));
        }
        if b.nrows() != k || b.ncols() != k {
            return Err(Error::param(format!(
                "B is {}x{} but pi has {} entries",
                b.nrows(),
                b.ncols(),
                k
            )));
        }
        validate_pi(&pi)?;
        for i in 0..k {
            for j in 0..k {
                let v = b[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::param(format!("B[{i},{j}] = {v} is not in [0,1]")));
                }
                if v != b[(j, i)] {
                    return Err(Error::param(format!("B is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { b, pi })
    }

    /// Builds parameters from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>], pi: Vec<f64>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::param("B must be square"));
        }
        let b = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        Self::new(b, pi)
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn num_blocks(&self) -> usize {
        self.pi.len()
    }

    /// The balanced two-block model `[[0.2, 0.1], [0.1, 0.25]]`.
    pub fn two_block() -> Self {
        Self::from_rows(&[vec![0.2, 0.1], vec![0.1, 0.25]], vec![0.5, 0.5]).expect("valid constant")
    }

    /// The three-block model with `pi = (0.4, 0.4, 0.2)`.
    pub fn three_block() -> Self {
        Self::from_rows(
            &[
                vec![0.2, 0.1, 0.08],
                vec![0.1, 0.25, 0.05],
                vec![0.08, 0.05, 0.4],
            ],
            vec![0.4, 0.4, 0.2],
        )
        .expect("valid constant")
    }

    /// Balanced two-block model `[[0.2, p], [p, 0.1]]` used for the
    /// between-block probability sweep.
    pub fn two_block_sweep(p: f64) -> Result<Self> {
        Self::from_rows(&[vec![0.2, p], vec![p, 0.1]], vec![0.5, 0.5])
    }
}

fn validate_pi(pi: &[f64]) -> Result<()> {
    if let Some((k, v)) = pi.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::param(format!(
            "pi[{k}] = {v} must be strictly positive"
        )));
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > PI_SUM_TOL {
        return Err(Error::param(format!("pi sums to {sum}, not 1")));
    }
    Ok(())
}

/// Block labels, one per vertex, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Membership(Vec<usize>);

impl Membership {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::param("membership vector must be non-empty"));
        }
        Ok(Self(labels))
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One more than the largest label.
    pub fn num_blocks(&self) -> usize {
        self.0.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_blocks()];
        for &l in &self.0 {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

/// `n x d0` latent positions whose pairwise inner products are probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPositions(DMatrix<f64>);

impl LatentPositions {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let p = &x * x.transpose();
        for j in 0..p.ncols() {
            for i in 0..p.nrows() {
                let v = p[(i, j)];
                if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&v) {
                    return Err(Error::param(format!(
                        "inner product of latent positions {i} and {j} is {v}, outside [0,1]"
                    )));
                }
            }
        }
        Ok(Self(x))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn edge_probabilities(&self) -> DMatrix<f64> {
        (&self.0 * self.0.transpose()).map(|v| v.clamp(0.0, 1.0))
    }
}

/// Dense symmetric hollow 0/1 adjacency matrix.
#[derive(Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    // row-major, both triangles stored
    data: Vec<u8>,
}

impl std::fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdjacencyMatrix")
            .field("n", &self.n)
            .field("edges", &self.num_edges())
            .finish()
    }
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            data: vec![0; n * n],
        }
    }

    /// Builds a graph from undirected edges. Self-loops are rejected;
    /// repeated edges are merged. Returns the graph and the number of
    /// duplicates that were dropped.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Self, usize)> {
        let mut a = Self::empty(n);
        let mut duplicates = 0;
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::param(format!(
                    "edge ({u},{v}) references a vertex outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::param(format!("self-loop at vertex {u}")));
            }
            if a.has_edge(u, v) {
                duplicates += 1;
            } else {
                a.set(u, v);
            }
        }
        Ok((a, duplicates))
    }

    /// Builds a graph from a dense 0/1 matrix, validating symmetry and an
    /// empty diagonal.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::param("adjacency matrix must be square"));
        }
        let mut a = Self::empty(n);
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::param(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let (x, y) = (m[(i, j)], m[(j, i)]);
                if x != y {
                    return Err(Error::param(format!("not symmetric at ({i},{j})")));
                }
                if x == 1.0 {
                    a.set(i, j);
                } else if x != 0.0 {
                    return Err(Error::param(format!("entry ({i},{j}) = {x} is not 0/1")));
                }
            }
        }
        Ok(a)
    }

    fn set(&mut self, u: usize, v: usize) {
        self.data[u * self.n + v] = 1;
        self.data[v * self.n + u] = 1;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.data[u * self.n + v] != 0
    }

    pub fn row(&self, u: usize) -> &[u8] {
        &self.data[u * self.n..(u + 1) * self.n]
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(u)
            .iter()
            .enumerate()
            .filter_map(|(v, &x)| (x != 0).then_some(v))
    }

    pub fn degree(&self, u: usize) -> usize {
        self.row(u).iter().filter(|&&x| x != 0).count()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.row(u)[u + 1..]
                .iter()
                .enumerate()
                .filter_map(move |(off, &x)| (x != 0).then_some((u, u + 1 + off)))
        })
    }

    pub fn num_edges(&self) -> usize {
        self.data.iter().filter(|&&x| x != 0).count() / 2
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.data[i * self.n + j]))
    }

    /// Subgraph induced by `vertices`, relabelled `0..vertices.len()` in the
    /// given order.
    pub fn induced(&self, vertices: &[usize]) -> Self {
        let mut sub = Self::empty(vertices.len());
        for (a, &u) in vertices.iter().enumerate() {
            for (b, &v) in vertices.iter().enumerate().skip(a + 1) {
                if self.has_edge(u, v) {
                    sub.set(a, b);
                }
            }
        }
        sub
    }

    /// Connected components as sorted vertex lists, largest first (ties by
    /// smallest member).
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut comps = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }
}

pub fn sample_memberships(pi: &[f64], n: usize, seed: u64) -> Result<Membership> {
    validate_pi(pi)?;
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    let mut cumulative: Vec<f64> = pi
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    *cumulative.last_mut().expect("non-empty") = f64::INFINITY;
    let mut rng = rng_from_seed(seed);
    let labels = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cumulative.partition_point(|&c| c <= u)
        })
        .collect();
    Membership::new(labels)
}

/// `P[i][j] = B[tau_i][tau_j]`.
pub fn edge_probability_matrix(params: &SbmParams, tau: &Membership) -> Result<DMatrix<f64>> {
    check_labels(params, tau)?;
    let t = tau.labels();
    Ok(DMatrix::from_fn(t.len(), t.len(), |i, j| {
        params.b[(t[i], t[j])]
    }))
}

fn check_labels(params: &SbmParams, tau: &Membership) -> Result<()> {
    let k = params.num_blocks();
    match tau.labels().iter().position(|&l| l >= k) {
        Some(i) => Err(Error::param(format!(
            "vertex {i} has block label {} but B has {k} blocks",
            tau.labels()[i]
        ))),
        None => Ok(()),
    }
}

fn sample_bernoulli(n: usize, seed: u64, prob: impl Fn(usize, usize) -> f64) -> AdjacencyMatrix {
    let mut rng = rng_from_seed(seed);
    let mut a = AdjacencyMatrix::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let u: f64 = rng.random();
            if u < prob(i, j) {
                a.set(i, j);
            }
        }
    }
    a
}

pub fn sample_sbm_conditional(
    params: &SbmParams,
    tau: &Membership,
    seed: u64,
) -> Result<AdjacencyMatrix> {
    check_labels(params, tau)?;
    let t = tau.labels();
    Ok(sample_bernoulli(t.len(), seed, |i, j| {
        params.b[(t[i], t[j])]
    }))
}

pub fn sample_sbm(
    n: usize,
    params: &SbmParams,
    seed: u64,
) -> Result<(Membership, AdjacencyMatrix)> {
    let tau = sample_memberships(params.pi(), n, derive_seed(seed, &[purpose::MEMBERSHIPS]))?;
    let a = sample_sbm_conditional(params, &tau, derive_seed(seed, &[purpose::EDGES]))?;
    Ok((tau, a))
}

pub fn sample_rdpg(x: &LatentPositions, seed: u64) -> AdjacencyMatrix {
    let p = x.edge_probabilities();
    sample_bernoulli(p.nrows(), seed, |i, j| p[(i, j)])
}

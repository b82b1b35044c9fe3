//! Coupling networks: construction, random generators, edge-list IO and
//! spectral summaries.
//!
//! A [`Network`] is a symmetric, entrywise nonnegative `n × n` coupling
//! matrix `M`. The dense matrix is kept for linear algebra; a row-compressed
//! copy of the nonzeros drives the vector-field evaluations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Attempts made by the random generators before giving up on connectivity.
pub const DEFAULT_MAX_ATTEMPTS: usize = 100;

/// Nonzero entries of a square matrix, row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let w = m[(i, j)];
                        (w != 0.0).then_some((j, w))
                    })
                    .collect()
            })
            .collect();
        SparseRows { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, w)| w).sum()
    }

    /// `Σ_j R_ij (x_j − x_i)` for row `i`.
    #[inline]
    pub fn diffusion(&self, i: usize, x: &[f64]) -> f64 {
        let xi = x[i];
        self.rows[i].iter().map(|&(j, w)| w * (x[j] - xi)).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w;
            }
        }
        m
    }
}

/// Symmetric nonnegative coupling structure.
#[derive(Debug, Clone)]
pub struct Network {
    weights: DMatrix<f64>,
    rows: SparseRows,
    degrees: Vec<f64>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
    }
}

impl Network {
    /// Builds a network from a dense matrix, rejecting anything that is not
    /// square, finite, nonnegative and exactly symmetric.
    pub fn from_matrix(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 {
            return Err(invalid("network needs at least one node"));
        }
        if weights.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: weights.ncols() });
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(invalid(format!("weight ({i}, {j}) = {w} is not a finite nonnegative number")));
                }
                if j > i && w != weights[(j, i)] {
                    return Err(Error::AsymmetricInput { i, j });
                }
            }
        }
        let rows = SparseRows::from_dense(&weights);
        let degrees = (0..n).map(|i| rows.row_sum(i)).collect();
        Ok(Network { weights, rows, degrees })
    }

    /// Builds a network from undirected weighted edges. Duplicates collapse
    /// to their maximum weight.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(invalid("network needs at least one node"));
        }
        let mut m = DMatrix::zeros(n, n);
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("edge ({i}, {j}) has weight {w}")));
            }
            let w = w.max(m[(i, j)]);
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
        Network::from_matrix(m)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    /// Weighted row sums `d_i = Σ_j M_ij`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Always true: construction rejects asymmetric input.
    pub fn is_symmetric(&self) -> bool {
        true
    }

    /// Undirected edges `i <= j` with positive weight (self-loops count once).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.rows.row(i).iter().filter(move |&&(j, _)| j >= i).map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &(j, _) in self.rows.row(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }

    /// Row-stochastic normalized adjacency `A_ij = M_ij / d_i`, sparse form.
    pub fn normalized_rows(&self) -> Result<SparseRows> {
        let rows = (0..self.n())
            .map(|i| {
                let d = self.degrees[i];
                if d <= 0.0 {
                    return Err(Error::IsolatedNode(i));
                }
                Ok(self.rows.row(i).iter().map(|&(j, w)| (j, w / d)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseRows { rows })
    }
}

/// Row-stochastic normalized adjacency matrix of `net`.
pub fn normalized_adjacency(net: &Network) -> Result<DMatrix<f64>> {
    Ok(net.normalized_rows()?.to_dense())
}

/// Degrees, Laplacian and Fiedler number of a network.
#[derive(Debug, Clone)]
pub struct DegreeData {
    pub degrees: Vec<f64>,
    pub laplacian: DMatrix<f64>,
    pub fiedler: f64,
}

pub fn laplacian(net: &Network) -> DMatrix<f64> {
    let mut l = -net.weights().clone();
    for (i, d) in net.degrees().iter().enumerate() {
        l[(i, i)] += d;
    }
    l
}

fn second_smallest(eigenvalues: &[f64]) -> f64 {
    let mut ev = eigenvalues.to_vec();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev.get(1).copied().unwrap_or(0.0).max(0.0)
}

pub fn degree_data(net: &Network) -> DegreeData {
    let laplacian = laplacian(net);
    let fiedler = if net.n() < 2 {
        0.0
    } else {
        let eig = SymmetricEigen::new(laplacian.clone());
        second_smallest(eig.eigenvalues.as_slice())
    };
    DegreeData { degrees: net.degrees().to_vec(), laplacian, fiedler }
}

/// Second-smallest eigenvalue of `I − A` for the normalized adjacency `A`.
///
/// `A` is similar to the symmetric `D^{-1/2} M D^{-1/2}`, so the spectrum is
/// computed from that form.
pub fn normalized_fiedler(net: &Network) -> Result<f64> {
    let n = net.n();
    if let Some(i) = net.degrees().iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(i));
    }
    if n < 2 {
        return Ok(0.0);
    }
    let s: Vec<f64> = net.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - s[i] * net.weights()[(i, j)] * s[j]
    });
    let eig = SymmetricEigen::new(sym);
    Ok(second_smallest(eig.eigenvalues.as_slice()))
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn sample_until_connected<F>(seed: u64, max_attempts: usize, mut sample: F) -> Result<Network>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<Network>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_attempts.max(1) {
        let net = sample(&mut rng)?;
        if net.is_connected() {
            return Ok(net);
        }
    }
    Err(Error::DisconnectedAfterRetries { attempts: max_attempts.max(1) })
}

/// G(n, p) with unit weights, resampled until connected.
pub fn erdos_renyi(n: usize, p_e: f64, seed: u64) -> Result<Network> {
    erdos_renyi_with_attempts(n, p_e, seed, DEFAULT_MAX_ATTEMPTS)
}

pub fn erdos_renyi_with_attempts(n: usize, p_e: f64, seed: u64, max_attempts: usize) -> Result<Network> {
    check_probability("p_e", p_e)?;
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    sample_until_connected(seed, max_attempts, |rng| {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < p_e {
                    edges.push((i, j, 1.0));
                }
            }
        }
        Network::from_edges(n, edges)
    })
}

/// Block index of every node, blocks laid out consecutively.
pub fn block_labels(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat(b).take(s)).collect()
}

/// Stochastic block model with consecutive blocks, resampled until connected.
pub fn stochastic_block_model(sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<Network> {
    stochastic_block_model_with_attempts(sizes, p_in, p_out, seed, DEFAULT_MAX_ATTEMPTS)
}

pub fn stochastic_block_model_with_attempts(
    sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<Network> {
    check_probability("p_in", p_in)?;
    check_probability("p_out", p_out)?;
    if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
        return Err(invalid("block sizes must be a nonempty list of positive integers"));
    }
    let labels = block_labels(sizes);
    let n = labels.len();
    sample_until_connected(seed, max_attempts, |rng| {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if labels[i] == labels[j] { p_in } else { p_out };
                if rng.gen::<f64>() < p {
                    edges.push((i, j, 1.0));
                }
            }
        }
        Network::from_edges(n, edges)
    })
}

/// Node 0 is joined to every other node; the remaining pairs appear with
/// probability `p_e`. Connected by construction.
pub fn core_periphery(n: usize, p_e: f64, seed: u64) -> Result<Network> {
    check_probability("p_e", p_e)?;
    if n < 2 {
        return Err(invalid("core-periphery graph needs n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<_> = (1..n).map(|j| (0, j, 1.0)).collect();
    for i in 1..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p_e {
                edges.push((i, j, 1.0));
            }
        }
    }
    Network::from_edges(n, edges)
}

/// Loop-free complete graph with unit weights.
pub fn complete_graph(n: usize) -> Result<Network> {
    if n < 2 {
        return Err(invalid("complete graph needs n >= 2"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
    Network::from_matrix(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indexing {
    #[default]
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeListOptions {
    #[serde(default)]
    pub indexing: Indexing,
    #[serde(default = "default_true")]
    pub symmetrize: bool,
    /// Treat every listed pair as weight 1, ignoring any extra columns
    /// (timestamped message logs carry a third column that is not a weight).
    #[serde(default)]
    pub ignore_weights: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EdgeListOptions {
    fn default() -> Self {
        EdgeListOptions { indexing: Indexing::Zero, symmetrize: true, ignore_weights: false }
    }
}

const NODES_HEADER: &str = "nodes:";

/// Parses an edge list: whitespace-separated integer pairs with an optional
/// weight column; `#` and `%` start comment lines.
///
/// Node ids are compacted to `0..n` in ascending id order, unless a
/// `# nodes: N` header is present, in which case ids are used as given.
pub fn parse_edge_list<R: Read>(reader: R, opts: &EdgeListOptions) -> Result<Network> {
    let mut declared_n: Option<usize> = None;
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let offset = match opts.indexing {
        Indexing::Zero => 0,
        Indexing::One => 1,
    };

    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix(NODES_HEADER) {
                let n = rest.trim().parse::<usize>().map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
                declared_n = Some(n);
            }
            continue;
        }
        if trimmed.starts_with('%') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if tokens.len() < 2 || (tokens.len() > 3 && !opts.ignore_weights) {
            return Err(Error::Parse { line: lineno, msg: format!("expected 2 or 3 columns, found {}", tokens.len()) });
        }
        let id = |tok: &str| -> Result<usize> {
            let raw = tok.parse::<usize>().map_err(|e| Error::Parse { line: lineno, msg: format!("bad node id {tok:?}: {e}") })?;
            raw.checked_sub(offset).ok_or_else(|| Error::Parse { line: lineno, msg: format!("node id {raw} below index base {offset}") })
        };
        let (i, j) = (id(tokens[0])?, id(tokens[1])?);
        let w = if tokens.len() == 3 && !opts.ignore_weights {
            let w = tokens[2].parse::<f64>().map_err(|e| Error::Parse { line: lineno, msg: format!("bad weight {:?}: {e}", tokens[2]) })?;
            if w < 0.0 {
                return Err(Error::NegativeWeight { line: lineno });
            }
            if !w.is_finite() {
                return Err(Error::Parse { line: lineno, msg: format!("weight {w} is not finite") });
            }
            w
        } else {
            1.0
        };
        let mut put = |a: usize, b: usize| {
            let e = entries.entry((a, b)).or_insert(w);
            *e = e.max(w);
        };
        put(i, j);
        if opts.symmetrize {
            put(j, i);
        }
    }

    if !opts.symmetrize {
        for (&(i, j), &w) in &entries {
            if entries.get(&(j, i)) != Some(&w) {
                return Err(Error::AsymmetricInput { i, j });
            }
        }
    }

    let (n, index): (usize, Box<dyn Fn(usize) -> usize>) = match declared_n {
        Some(n) => {
            if let Some(&(i, j)) = entries.keys().find(|&&(i, j)| i >= n || j >= n) {
                return Err(invalid(format!("edge ({i}, {j}) exceeds declared node count {n}")));
            }
            (n, Box::new(|i| i))
        }
        None => {
            let ids: BTreeSet<usize> = entries.keys().flat_map(|&(i, j)| [i, j]).collect();
            let map: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
            (map.len(), Box::new(move |i| map[&i]))
        }
    };
    if n == 0 {
        return Err(invalid("edge list contains no edges"));
    }
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), &w) in &entries {
        m[(index(i), index(j))] = w;
    }
    Network::from_matrix(m)
}

pub fn load_edge_list(path: impl AsRef<Path>, indexing: Indexing, symmetrize: bool) -> Result<Network> {
    load_edge_list_with(path, &EdgeListOptions { indexing, symmetrize, ignore_weights: false })
}

pub fn load_edge_list_with(path: impl AsRef<Path>, opts: &EdgeListOptions) -> Result<Network> {
    parse_edge_list(File::open(path)?, opts)
}

/// Writes `i j [w]` lines for `i <= j`, zero-indexed. The weight column is
/// omitted for unit weights. A `# nodes: N` header is emitted only when some
/// node has no incident edge, so that the node count survives a reload.
pub fn write_edge_list<W: Write>(net: &Network, mut out: W) -> Result<()> {
    if net.degrees().iter().any(|&d| d == 0.0) {
        writeln!(out, "# {NODES_HEADER} {}", net.n())?;
    }
    for (i, j, w) in net.edges() {
        if w == 1.0 {
            writeln!(out, "{i} {j}")?;
        } else {
            writeln!(out, "{i} {j} {w}")?;
        }
    }
    Ok(())
}

pub fn save_edge_list(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_edge_list(net, &mut out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path3() -> Network {
        Network::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn rejects_asymmetric_and_negative() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(Network::from_matrix(m), Err(Error::AsymmetricInput { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(Network::from_matrix(m).is_err());
        assert!(Network::from_matrix(DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn normalized_single_edge() {
        let net = Network::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let a = normalized_adjacency(&net).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn normalized_triangle_and_complete() {
        let a = normalized_adjacency(&complete_graph(3).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[(i, j)], if i == j { 0.0 } else { 0.5 });
            }
        }
        let n = 7;
        let a = normalized_adjacency(&complete_graph(n).unwrap()).unwrap();
        for i in 0..n {
            assert_relative_eq!(a.row(i).sum(), 1.0, epsilon = 1e-12);
            for j in 0..n {
                let expect = if i == j { 0.0 } else { 1.0 / (n as f64 - 1.0) };
                assert_relative_eq!(a[(i, j)], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn normalized_isolated_node() {
        let net = Network::from_edges(3, [(0, 1, 1.0)]).unwrap();
        assert!(matches!(normalized_adjacency(&net), Err(Error::IsolatedNode(2))));
    }

    #[test]
    fn erdos_renyi_extremes() {
        let net = erdos_renyi(5, 1.0, 42).unwrap();
        assert_eq!(net, complete_graph(5).unwrap());
        assert!(matches!(erdos_renyi(2, 0.0, 3), Err(Error::DisconnectedAfterRetries { .. })));
        assert!(erdos_renyi(5, 1.5, 0).is_err());
    }

    #[test]
    fn erdos_renyi_edge_count_near_binomial_mean() {
        let net = erdos_renyi(150, 0.08, 1).unwrap();
        assert!(net.is_connected());
        // Binomial(C(150,2), 0.08), computed directly.
        let pairs = 150.0 * 149.0 / 2.0;
        let mean = pairs * 0.08;
        let sd = (pairs * 0.08 * 0.92_f64).sqrt();
        assert_relative_eq!(mean, 894.0, epsilon = 1e-9);
        let m = net.edge_count() as f64;
        assert!((m - mean).abs() < 4.0 * sd, "edge count {m}, mean {mean}, sd {sd}");
    }

    #[test]
    fn sbm_cases() {
        assert_eq!(stochastic_block_model(&[3], 1.0, 0.3, 9).unwrap(), complete_graph(3).unwrap());
        assert!(matches!(
            stochastic_block_model(&[2, 2], 1.0, 0.0, 9),
            Err(Error::DisconnectedAfterRetries { .. })
        ));
        assert!(stochastic_block_model(&[], 0.5, 0.5, 0).is_err());
    }

    #[test]
    fn sbm_densities() {
        let net = stochastic_block_model(&[50, 100], 0.2, 0.02, 1).unwrap();
        assert_eq!(net.n(), 150);
        let labels = block_labels(&[50, 100]);
        let (mut within, mut across) = (0.0, 0.0);
        for (i, j, _) in net.edges() {
            if labels[i] == labels[j] {
                within += 1.0;
            } else {
                across += 1.0;
            }
        }
        let pairs_in = (50.0 * 49.0 + 100.0 * 99.0) / 2.0;
        let pairs_out = 50.0 * 100.0;
        let check = |count: f64, pairs: f64, p: f64| {
            let sd = (pairs * p * (1.0 - p)).sqrt();
            assert!((count - pairs * p).abs() < 4.0 * sd, "{count} vs {}", pairs * p);
        };
        check(within, pairs_in, 0.2);
        check(across, pairs_out, 0.02);
    }

    #[test]
    fn core_periphery_cases() {
        let star = core_periphery(4, 0.0, 5).unwrap();
        assert_eq!(star, Network::from_edges(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap());
        let big = core_periphery(150, 0.01, 1).unwrap();
        assert!(big.is_connected());
        assert_eq!(big.degrees()[0], 149.0);
        let edge = core_periphery(2, 0.0, 0).unwrap();
        assert_eq!(edge.edge_count(), 1);
        assert!(core_periphery(1, 0.0, 0).is_err());
    }

    #[test]
    fn complete_graph_cases() {
        assert_eq!(complete_graph(3).unwrap().edge_count(), 3);
        assert_eq!(complete_graph(150).unwrap().edge_count(), 11175);
        assert!(complete_graph(1).is_err());
    }

    #[test]
    fn fiedler_single_edge() {
        let dd = degree_data(&Network::from_edges(2, [(0, 1, 1.0)]).unwrap());
        assert_eq!(dd.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_relative_eq!(dd.fiedler, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fiedler_disconnected_is_zero() {
        let net = Network::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(degree_data(&net).fiedler.abs() < 1e-10);
        assert!(!net.is_connected());
    }

    #[test]
    fn fiedler_normalized_complete() {
        for n in [3usize, 5, 10] {
            let a = normalized_adjacency(&complete_graph(n).unwrap()).unwrap();
            let dd = degree_data(&Network::from_matrix(a).unwrap());
            let expect = n as f64 / (n as f64 - 1.0);
            assert_relative_eq!(dd.fiedler, expect, epsilon = 1e-12);
            assert_relative_eq!(normalized_fiedler(&complete_graph(n).unwrap()).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalized_fiedler_path() {
        // I − A on P3 has spectrum {0, 1, 2}.
        assert_relative_eq!(normalized_fiedler(&path3()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn parse_path_file() {
        let net = parse_edge_list("0 1\n1 2".as_bytes(), &EdgeListOptions::default()).unwrap();
        assert_eq!(net, path3());
    }

    #[test]
    fn parse_compacts_sparse_ids_and_comments() {
        let text = "% konect style\n# comment\n10 30\n30 20 2.5\n10 30 0.5\n";
        let net = parse_edge_list(text.as_bytes(), &EdgeListOptions::default()).unwrap();
        assert_eq!(net.n(), 3);
        // 10 -> 0, 20 -> 1, 30 -> 2; duplicate collapses to the max weight.
        assert_eq!(net.weights()[(0, 2)], 1.0);
        assert_eq!(net.weights()[(2, 1)], 2.5);
    }

    #[test]
    fn parse_one_indexed() {
        let opts = EdgeListOptions { indexing: Indexing::One, ..Default::default() };
        let net = parse_edge_list("1 2\n2 3\n".as_bytes(), &opts).unwrap();
        assert_eq!(net, path3());
        assert!(matches!(parse_edge_list("0 1\n".as_bytes(), &opts), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn parse_errors() {
        let opts = EdgeListOptions::default();
        assert!(matches!(parse_edge_list("0 1\n1 x\n".as_bytes(), &opts), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_edge_list("0 1 -1\n".as_bytes(), &opts), Err(Error::NegativeWeight { line: 1 })));
        let directed = EdgeListOptions { symmetrize: false, ..Default::default() };
        assert!(matches!(parse_edge_list("0 1\n".as_bytes(), &directed), Err(Error::AsymmetricInput { .. })));
        let both = parse_edge_list("0 1 2\n1 0 2\n".as_bytes(), &directed).unwrap();
        assert_eq!(both.weights()[(0, 1)], 2.0);
    }

    #[test]
    fn ignore_weights_for_message_logs() {
        let opts = EdgeListOptions { ignore_weights: true, ..Default::default() };
        let net = parse_edge_list("1 2 1082040961\n2 1 1082155839\n".as_bytes(), &opts).unwrap();
        assert_eq!(net.weights()[(0, 1)], 1.0);
    }

    #[test]
    fn round_trip_with_isolated_node() {
        let net = Network::from_edges(4, [(0, 2, 0.1), (2, 2, 3.0)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&net, &mut buf).unwrap();
        let back = parse_edge_list(buf.as_slice(), &EdgeListOptions::default()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn laplacian_kernel() {
        let net = erdos_renyi(40, 0.2, 7).unwrap();
        let l = laplacian(&net);
        let ones = nalgebra::DVector::from_element(40, 1.0);
        assert!((l * ones).amax() < 1e-10);
    }
}

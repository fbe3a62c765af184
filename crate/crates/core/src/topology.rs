//! Network structures for the oscillator reservoir.
//!
//! Adjacency is kept in compressed sparse row form. The all-to-all graph is
//! flagged so that the coupling sum can be evaluated through the mean field
//! in O(N) instead of O(N^2).

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Symmetric 0/1 adjacency structure with cached degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    degrees: Vec<usize>,
    complete: bool,
    /// Number of isolated nodes that received a repair edge during generation.
    repaired: usize,
}

impl NetworkSpec {
    /// Builds a network from an undirected edge list. Each pair is listed once;
    /// `(i, i)` denotes a self-loop. Duplicate pairs are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::config(format!("edge ({i}, {j}) out of range for n={n}")));
            }
            adj[i].push(j as u32);
            if i != j {
                adj[j].push(i as u32);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self::from_lists(adj, 0)
    }

    fn from_lists(adj: Vec<Vec<u32>>, repaired: usize) -> Result<Self> {
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut degrees = Vec::with_capacity(n);
        offsets.push(0);
        for (i, list) in adj.into_iter().enumerate() {
            if list.is_empty() {
                return Err(Error::config(format!("node {i} has degree zero")));
            }
            degrees.push(list.len());
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        let complete = degrees.iter().all(|&k| k == n);
        Ok(NetworkSpec {
            n,
            offsets,
            neighbors,
            degrees,
            complete,
            repaired,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn mean_degree(&self) -> f64 {
        self.degrees.iter().sum::<usize>() as f64 / self.n as f64
    }

    /// True when every entry of the adjacency matrix, diagonal included, is 1.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn repaired_nodes(&self) -> usize {
        self.repaired
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Number of nonzero adjacency entries (each undirected edge counted twice,
    /// self-loops once).
    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }

    /// Undirected edges with `i <= j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(move |&j| j >= i)
                .map(move |j| (i, j))
        })
    }

    /// Writes the edge-list archive format: a `n=<N>` header followed by one
    /// zero-based `i j` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = String::with_capacity(16 * self.nnz());
        writeln!(buf, "n={}", self.n).unwrap();
        for (i, j) in self.edges() {
            writeln!(buf, "{i} {j}").unwrap();
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let n = match lines.next() {
            Some((_, line)) => {
                let line = line?;
                line.trim()
                    .strip_prefix("n=")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(1, "expected header `n=<N>`"))?
            }
            None => return Err(Error::parse(1, "empty edge list")),
        };
        let mut edges = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => return Err(Error::parse(idx + 1, format!("malformed edge `{line}`"))),
            }
        }
        Self::from_edges(n, &edges)
    }
}

/// All-to-all network with the diagonal included, so `k_i = n`.
pub fn complete_graph(n: usize) -> Result<NetworkSpec> {
    if n < 2 {
        return Err(Error::config(format!("complete graph needs n >= 2, got {n}")));
    }
    let adj = (0..n).map(|_| (0..n as u32).collect()).collect();
    NetworkSpec::from_lists(adj, 0)
}

/// G(n, p) random graph with `p = mean_degree / (n - 1)`, no self-loops.
///
/// Isolated nodes are repaired by attaching one edge to a uniformly chosen
/// partner so that every degree is at least one.
pub fn erdos_renyi(n: usize, mean_degree: f64, seed: u64) -> Result<NetworkSpec> {
    if n < 2 {
        return Err(Error::config(format!("random graph needs n >= 2, got {n}")));
    }
    if !(mean_degree >= 1.0 && mean_degree < n as f64) {
        return Err(Error::config(format!(
            "mean degree {mean_degree} outside [1, {n})"
        )));
    }
    let p = (mean_degree / (n - 1) as f64).min(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                adj[i].push(j as u32);
                adj[j].push(i as u32);
            }
        }
    }
    let mut repaired = 0;
    for i in 0..n {
        if adj[i].is_empty() {
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            adj[i].push(j as u32);
            adj[j].push(i as u32);
            repaired += 1;
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    NetworkSpec::from_lists(adj, repaired)
}

/// Connected component sizes by breadth-first traversal, largest first.
pub fn connected_components(net: &NetworkSpec) -> Vec<usize> {
    let n = net.n();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in net.neighbors(u) {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

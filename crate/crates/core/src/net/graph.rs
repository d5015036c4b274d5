//! Graph algebra over the branch list: incidence matrix, fundamental cycle
//! basis, bridges, connectivity.
//!
//! Everything here is exact integer arithmetic; the dense conversions exist
//! for numeric consumers.

use nalgebra::DMatrix;

use super::{Branch, Network};

/// Signed edge-node incidence matrix: row `e` has `+1` at `from(e)` and `-1`
/// at `to(e)`.
#[derive(Clone, Debug)]
pub struct IncidenceMatrix {
    n_edges: usize,
    n_buses: usize,
    from: Vec<usize>,
    to: Vec<usize>,
}

impl IncidenceMatrix {
    pub fn from_network(net: &Network) -> Self {
        IncidenceMatrix {
            n_edges: net.n_branches(),
            n_buses: net.n_buses(),
            from: net.branches.iter().map(|b| b.from).collect(),
            to: net.branches.iter().map(|b| b.to).collect(),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    /// Entry `A[e, k]` in `{-1, 0, +1}`.
    pub fn entry(&self, e: usize, k: usize) -> i32 {
        if self.from[e] == k {
            1
        } else if self.to[e] == k {
            -1
        } else {
            0
        }
    }

    /// `A theta`, the vector of angle differences across each edge.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n_edges)
            .map(|e| theta[self.from[e]] - theta[self.to[e]])
            .collect()
    }

    /// `A^T f`, the net flow out of each bus.
    pub fn apply_transpose(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_buses];
        for e in 0..self.n_edges {
            out[self.from[e]] += f[e];
            out[self.to[e]] -= f[e];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_edges, self.n_buses);
        for e in 0..self.n_edges {
            m[(e, self.from[e])] = 1.0;
            m[(e, self.to[e])] = -1.0;
        }
        m
    }
}

/// Signed indicator vectors of the fundamental cycles of a spanning tree,
/// one column per non-tree edge. `A^T n = 0` holds exactly for each column.
#[derive(Clone, Debug)]
pub struct CycleBasis {
    n_edges: usize,
    /// Column-major indicators, entries in `{-1, 0, +1}`.
    columns: Vec<Vec<i8>>,
}

impl CycleBasis {
    /// Builds the basis from a BFS spanning tree rooted at the slack bus.
    /// Neighbors are visited in bus-index order (ties by edge index) so the
    /// basis is identical across runs and platforms.
    pub fn from_network(net: &Network) -> Self {
        let n = net.n_buses();
        let e_cnt = net.n_branches();
        let root = net.slack();

        // Adjacency sorted by (neighbor bus, edge index).
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (e, br) in net.branches.iter().enumerate() {
            adj[br.from].push((br.to, e));
            adj[br.to].push((br.from, e));
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }

        // BFS tree: parent edge per bus.
        let mut parent_edge: Vec<Option<usize>> = vec![None; n];
        let mut visited = vec![false; n];
        let mut in_tree = vec![false; e_cnt];
        let mut queue = std::collections::VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for &(v, e) in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent_edge[v] = Some(e);
                    in_tree[e] = true;
                    queue.push_back(v);
                }
            }
        }

        let mut depth = vec![0usize; n];
        // Depth via repeated parent walk is fine at this scale.
        for k in 0..n {
            let mut d = 0;
            let mut cur = k;
            while let Some(e) = parent_edge[cur] {
                let br = &net.branches[e];
                cur = if br.from == cur { br.to } else { br.from };
                d += 1;
            }
            depth[k] = d;
        }

        // One fundamental cycle per non-tree edge: the edge itself (sign +1,
        // defining the cycle direction) plus the tree path closing it.
        let mut columns = Vec::with_capacity(e_cnt + 1 - n);
        for (e, br) in net.branches.iter().enumerate() {
            if in_tree[e] {
                continue;
            }
            let mut col = vec![0i8; e_cnt];
            col[e] = 1;
            // Walk both endpoints up to their lowest common ancestor. The
            // cycle runs from `to(e)` back to `from(e)` through the tree, so
            // tree edges on the `to` side are traversed child-to-parent and
            // edges on the `from` side parent-to-child.
            let (mut a, mut b) = (br.to, br.from);
            while depth[a] > depth[b] {
                let te = parent_edge[a].expect("non-root has a parent");
                let tb = &net.branches[te];
                // Traversing a -> parent(a): along branch orientation if the
                // branch leaves `a`.
                col[te] = if tb.from == a { 1 } else { -1 };
                a = if tb.from == a { tb.to } else { tb.from };
            }
            while depth[b] > depth[a] {
                let te = parent_edge[b].expect("non-root has a parent");
                let tb = &net.branches[te];
                // This side is traversed parent(b) -> b, i.e. against the
                // child-to-parent walk.
                col[te] = if tb.from == b { -1 } else { 1 };
                b = if tb.from == b { tb.to } else { tb.from };
            }
            while a != b {
                let ea = parent_edge[a].expect("non-root has a parent");
                let ta = &net.branches[ea];
                col[ea] = if ta.from == a { 1 } else { -1 };
                a = if ta.from == a { ta.to } else { ta.from };

                let eb = parent_edge[b].expect("non-root has a parent");
                let tb = &net.branches[eb];
                col[eb] = if tb.from == b { -1 } else { 1 };
                b = if tb.from == b { tb.to } else { tb.from };
            }
            columns.push(col);
        }

        CycleBasis {
            n_edges: e_cnt,
            columns,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_cycles(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, c: usize) -> &[i8] {
        &self.columns[c]
    }

    /// Entry `N[e, c]`.
    pub fn entry(&self, e: usize, c: usize) -> i32 {
        self.columns[c][e] as i32
    }

    /// True iff edge `e` appears in no basis cycle.
    pub fn edge_in_no_cycle(&self, e: usize) -> bool {
        self.columns.iter().all(|col| col[e] == 0)
    }

    /// `N^T diag(w) N` as a dense `C x C` matrix.
    pub fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let c = self.n_cycles();
        let mut m = DMatrix::zeros(c, c);
        for i in 0..c {
            for j in i..c {
                let mut acc = 0.0;
                for e in 0..self.n_edges {
                    let a = self.columns[i][e];
                    if a != 0 {
                        let b = self.columns[j][e];
                        if b != 0 {
                            acc += (a as f64) * (b as f64) * w[e];
                        }
                    }
                }
                m[(i, j)] = acc;
                m[(j, i)] = acc;
            }
        }
        m
    }

    /// `N c` for a real coefficient vector.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_edges];
        for (col, &w) in self.columns.iter().zip(coeffs) {
            for (e, &s) in col.iter().enumerate() {
                if s != 0 {
                    out[e] += (s as f64) * w;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_edges, self.n_cycles());
        for (c, col) in self.columns.iter().enumerate() {
            for (e, &s) in col.iter().enumerate() {
                m[(e, c)] = s as f64;
            }
        }
        m
    }
}

/// Number of connected components, optionally with one edge removed.
pub(crate) fn component_count(n: usize, branches: &[Branch], skip_edge: Option<usize>) -> usize {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, br) in branches.iter().enumerate() {
        if Some(e) == skip_edge {
            continue;
        }
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        components += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    components
}

/// Bridge edges via an iterative low-link DFS. Parallel edges are handled by
/// skipping only the arrival edge index, so a doubled edge is never a bridge.
pub(crate) fn find_bridges(net: &Network) -> Vec<usize> {
    let n = net.n_buses();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, br) in net.branches.iter().enumerate() {
        adj[br.from].push((br.to, e));
        adj[br.to].push((br.from, e));
    }

    let mut disc = vec![usize::MAX; n];
    let mut low = vec![usize::MAX; n];
    let mut timer = 0usize;
    let mut bridges = Vec::new();

    // Frame: (vertex, arrival edge, next adjacency cursor).
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, usize::MAX, 0));
        while !stack.is_empty() {
            let frame = stack.len() - 1;
            let (u, via, cursor) = stack[frame];
            if cursor < adj[u].len() {
                stack[frame].2 += 1;
                let (v, e) = adj[u][cursor];
                if e == via {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, e, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        bridges.push(via);
                    }
                }
            }
        }
    }
    bridges.sort_unstable();
    bridges
}

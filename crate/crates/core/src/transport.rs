//! Exact Earth Mover's Distance with squared Euclidean ground cost.
//!
//! The transportation problem between the two weighted sets is solved by a
//! primal network simplex on the complete bipartite graph, so the returned
//! plan is always a basic solution (a forest with at most `n1 + n2 - 1`
//! arcs). When total masses differ, a zero-cost slack node on the lighter
//! side absorbs the surplus of the heavier side; it never shows up in the
//! returned [`FlowPlan`]. The EMD value is the optimal cost divided by
//! `min(W_A, W_B)`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{compensated_sum, sq_dist, WeightedPointSet};

/// Relative feasibility tolerance for marginals and total flow.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Flow below `MASS_EPS * W` on a tree arc is reported as zero.
const MASS_EPS: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEntry {
    pub i: usize,
    pub j: usize,
    pub flow: f64,
}

/// Sparse feasible flow between a source set of size `n1` and a target set of size `n2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPlan {
    n1: usize,
    n2: usize,
    entries: Vec<FlowEntry>,
    total_flow: f64,
}

impl FlowPlan {
    /// Builds a plan from explicit entries. Zero entries are dropped; negative
    /// or non-finite entries and out-of-range indices are rejected.
    pub fn new(n1: usize, n2: usize, entries: Vec<FlowEntry>) -> Result<Self> {
        let mut kept = Vec::with_capacity(entries.len());
        for e in entries {
            if e.i >= n1 || e.j >= n2 {
                return Err(Error::InfeasibleFlow(format!(
                    "entry ({}, {}) out of range for a {n1}x{n2} plan",
                    e.i, e.j
                )));
            }
            if !e.flow.is_finite() || e.flow < 0.0 {
                return Err(Error::InfeasibleFlow(format!(
                    "entry ({}, {}) has invalid flow {}",
                    e.i, e.j, e.flow
                )));
            }
            if e.flow > 0.0 {
                kept.push(e);
            }
        }
        kept.sort_by_key(|e| (e.i, e.j));
        let total_flow = compensated_sum(kept.iter().map(|e| e.flow));
        Ok(Self {
            n1,
            n2,
            entries: kept,
            total_flow,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn entries(&self) -> &[FlowEntry] {
        &self.entries
    }

    pub fn total_flow(&self) -> f64 {
        self.total_flow
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut rows = vec![Vec::new(); self.n1];
        for e in &self.entries {
            rows[e.i].push(e.flow);
        }
        rows.into_iter().map(compensated_sum).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut cols = vec![Vec::new(); self.n2];
        for e in &self.entries {
            cols[e.j].push(e.flow);
        }
        cols.into_iter().map(compensated_sum).collect()
    }

    /// Checks the marginal and total-mass constraints against `(a, b)`.
    pub fn check_feasible(&self, a: &WeightedPointSet, b: &WeightedPointSet) -> Result<()> {
        if self.n1 != a.len() || self.n2 != b.len() {
            return Err(Error::InfeasibleFlow(format!(
                "plan is {}x{} but the sets have {} and {} points",
                self.n1,
                self.n2,
                a.len(),
                b.len()
            )));
        }
        let w = a.total_weight().min(b.total_weight());
        let slack = FEASIBILITY_TOL * w;
        for (i, s) in self.row_sums().iter().enumerate() {
            if *s > a.weight(i) + slack {
                return Err(Error::InfeasibleFlow(format!(
                    "row {i} ships {s} but its weight is {}",
                    a.weight(i)
                )));
            }
        }
        for (j, s) in self.col_sums().iter().enumerate() {
            if *s > b.weight(j) + slack {
                return Err(Error::InfeasibleFlow(format!(
                    "column {j} receives {s} but its weight is {}",
                    b.weight(j)
                )));
            }
        }
        if (self.total_flow - w).abs() > FEASIBILITY_TOL * w {
            return Err(Error::InfeasibleFlow(format!(
                "total flow {} differs from min(W_A, W_B) = {w}",
                self.total_flow
            )));
        }
        Ok(())
    }

    /// Text form: header `n1 n2 total_flow`, then one `i j f_ij` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {:.16e}", self.n1, self.n2, self.total_flow);
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {:.16e}", e.i, e.j, e.flow);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, 1, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(parse_err(hline + 1, 1, "header must be `n1 n2 total_flow`"));
        }
        let n1 = parse_field::<usize>(h[0], hline, header)?;
        let n2 = parse_field::<usize>(h[1], hline, header)?;
        let mut entries = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(ln + 1, 1, "entry must be `i j f_ij`"));
            }
            entries.push(FlowEntry {
                i: parse_field(f[0], ln, line)?,
                j: parse_field(f[1], ln, line)?,
                flow: parse_field(f[2], ln, line)?,
            });
        }
        FlowPlan::new(n1, n2, entries)
    }
}

fn parse_err(line: usize, column: usize, message: &str) -> Error {
    Error::Parse {
        line,
        column,
        message: message.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(token: &str, line_idx: usize, line: &str) -> Result<T> {
    token.parse().map_err(|_| {
        let col = token.as_ptr() as usize - line.as_ptr() as usize + 1;
        parse_err(line_idx + 1, col, &format!("cannot parse `{token}`"))
    })
}

/// Dual potentials certifying optimality: for every pair the reduced cost
/// `c_ij - u_i - v_j` is nonnegative, and it is zero wherever `f_ij > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EmdSolution {
    pub plan: FlowPlan,
    pub value: f64,
    pub potentials: Potentials,
}

/// Worst violations of the optimality conditions, measured on the real pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityGap {
    /// Most negative reduced cost over all pairs (0 if none is negative).
    pub min_reduced_cost: f64,
    /// Largest `|reduced cost|` over pairs that carry flow.
    pub max_support_reduced_cost: f64,
    /// Largest ground cost, the scale for the tolerances above.
    pub max_cost: f64,
}

impl EmdSolution {
    /// Recomputes reduced costs from the potentials over every pair.
    pub fn optimality_gap(&self, a: &WeightedPointSet, b: &WeightedPointSet) -> OptimalityGap {
        let mut min_rc = 0.0f64;
        let mut max_cost = 0.0f64;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let c = sq_dist(a.point(i), b.point(j));
                max_cost = max_cost.max(c);
                let rc = c - self.potentials.source[i] - self.potentials.target[j];
                min_rc = min_rc.min(rc);
            }
        }
        let max_support = self
            .plan
            .entries()
            .iter()
            .map(|e| {
                let c = sq_dist(a.point(e.i), b.point(e.j));
                (c - self.potentials.source[e.i] - self.potentials.target[e.j]).abs()
            })
            .fold(0.0, f64::max);
        OptimalityGap {
            min_reduced_cost: min_rc,
            max_support_reduced_cost: max_support,
            max_cost,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransportOptions {
    /// Above this many pairs the cost matrix is not materialized; rows are
    /// recomputed whenever they are priced.
    pub dense_limit: usize,
    /// Compute cost-matrix rows on the rayon pool. Output is bit-identical.
    pub parallel: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            dense_limit: 1 << 25,
            parallel: true,
        }
    }
}

/// Normalized objective `sum f_ij |a_i - b_j|^2 / min(W_A, W_B)` of a feasible plan.
pub fn emd_cost(plan: &FlowPlan, a: &WeightedPointSet, b: &WeightedPointSet) -> Result<f64> {
    Error::check_dim(a.dim(), b.dim())?;
    plan.check_feasible(a, b)?;
    Ok(raw_cost(plan, a, b) / a.total_weight().min(b.total_weight()))
}

fn raw_cost(plan: &FlowPlan, a: &WeightedPointSet, b: &WeightedPointSet) -> f64 {
    compensated_sum(
        plan.entries()
            .iter()
            .map(|e| e.flow * sq_dist(a.point(e.i), b.point(e.j))),
    )
}

pub fn solve_emd(a: &WeightedPointSet, b: &WeightedPointSet) -> Result<EmdSolution> {
    solve_emd_with(a, b, &TransportOptions::default())
}

pub fn solve_emd_with(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    opts: &TransportOptions,
) -> Result<EmdSolution> {
    solve_emd_warm(a, b, opts, &mut WarmStart::default())
}

/// Solver state carried between calls. When the weights of both sets are
/// unchanged (only coordinates moved, as during alignment), the optimal basis
/// of the previous call is still feasible and seeds the next one.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    basis: Option<Basis>,
    /// Pivots performed by the most recent solve.
    pub last_pivots: usize,
}

/// Like [`solve_emd_with`], reusing and updating `warm`.
pub fn solve_emd_warm(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    opts: &TransportOptions,
    warm: &mut WarmStart,
) -> Result<EmdSolution> {
    Error::check_dim(a.dim(), b.dim())?;
    let wa = a.total_weight();
    let wb = b.total_weight();
    if !(wa > 0.0 && wb > 0.0) {
        return Err(Error::invalid("both point sets need positive total weight"));
    }
    let mut supply: Vec<f64> = a.weights().to_vec();
    let mut demand: Vec<f64> = b.weights().iter().map(|w| -w).collect();
    if wa > wb {
        demand.push(wb - wa);
    } else if wb > wa {
        supply.push(wb - wa);
    }
    let (m, n) = (supply.len(), demand.len());
    supply.extend(demand);

    let basis = match warm.basis.take() {
        Some(bs) if bs.m == m && bs.n == n && bs.supply == supply => bs,
        _ => Basis::initial(supply, m, n),
    };
    let costs = GroundCost::build(a, b, m, n, opts);
    let mut simplex = Simplex::new(basis, &costs);
    let pivots = simplex.run()?;

    let mass_eps = MASS_EPS * wa.max(wb);
    let bs = &simplex.basis;
    let mut entries = Vec::new();
    let mut artificial = 0.0;
    for u in 0..m + n {
        let e = bs.pred[u];
        if e >= m * n {
            artificial += bs.flow[u];
        } else if bs.flow[u] > mass_eps {
            let (i, j) = (e / n, e % n);
            if i < a.len() && j < b.len() {
                entries.push(FlowEntry { i, j, flow: bs.flow[u] });
            }
        }
    }
    if artificial > FEASIBILITY_TOL * wa.max(wb) {
        return Err(Error::Numerical(format!(
            "transport solver left {artificial} mass unrouted"
        )));
    }
    let plan = FlowPlan::new(a.len(), b.len(), entries)?;
    let value = raw_cost(&plan, a, b) / wa.min(wb);
    let potentials = Potentials {
        source: simplex.pi[..a.len()].iter().map(|p| -p).collect(),
        target: simplex.pi[m..m + b.len()].to_vec(),
    };
    warm.basis = Some(simplex.basis);
    warm.last_pivots = pivots;
    Ok(EmdSolution {
        plan,
        value,
        potentials,
    })
}

/// Ground costs of the balanced `m x n` problem; the slack row or column
/// (index `n1` or `n2`) costs zero.
enum GroundCost<'a> {
    Dense {
        data: Vec<f64>,
        n: usize,
        max: f64,
    },
    OnDemand {
        a: &'a WeightedPointSet,
        b: &'a WeightedPointSet,
        n: usize,
        max: f64,
    },
}

impl<'a> GroundCost<'a> {
    fn build(
        a: &'a WeightedPointSet,
        b: &'a WeightedPointSet,
        m: usize,
        n: usize,
        opts: &TransportOptions,
    ) -> Self {
        let n1 = a.len();
        let fill = |(i, row): (usize, &mut [f64])| {
            if i < n1 {
                let p = a.point(i);
                for (c, q) in row.iter_mut().zip(b.points()) {
                    *c = sq_dist(p, q);
                }
            }
        };
        let row_max = |row: &[f64]| row.iter().copied().fold(0.0, f64::max);
        if m.saturating_mul(n) > opts.dense_limit {
            let max = if opts.parallel {
                (0..n1)
                    .into_par_iter()
                    .map(|i| {
                        let p = a.point(i);
                        b.points().map(|q| sq_dist(p, q)).fold(0.0, f64::max)
                    })
                    .reduce(|| 0.0, f64::max)
            } else {
                let mut row = vec![0.0; n];
                (0..n1)
                    .map(|i| {
                        fill((i, &mut row));
                        row_max(&row)
                    })
                    .fold(0.0, f64::max)
            };
            return GroundCost::OnDemand { a, b, n, max };
        }
        let mut data = vec![0.0; m * n];
        if opts.parallel {
            data.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            data.chunks_mut(n).enumerate().for_each(fill);
        }
        let max = row_max(&data);
        GroundCost::Dense { data, n, max }
    }

    fn max(&self) -> f64 {
        match self {
            GroundCost::Dense { max, .. } | GroundCost::OnDemand { max, .. } => *max,
        }
    }

    fn row<'s>(&'s self, i: usize, scratch: &'s mut Vec<f64>) -> &'s [f64] {
        match self {
            GroundCost::Dense { data, n, .. } => &data[i * n..(i + 1) * n],
            GroundCost::OnDemand { a, b, n, .. } => {
                scratch.clear();
                scratch.resize(*n, 0.0);
                if i < a.len() {
                    let p = a.point(i);
                    for (c, q) in scratch.iter_mut().zip(b.points()) {
                        *c = sq_dist(p, q);
                    }
                }
                scratch
            }
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            GroundCost::Dense { data, n, .. } => data[i * n + j],
            GroundCost::OnDemand { a, b, .. } => {
                if i < a.len() && j < b.len() {
                    sq_dist(a.point(i), b.point(j))
                } else {
                    0.0
                }
            }
        }
    }
}

const NONE: usize = usize::MAX;

/// Spanning-tree basis of the network simplex.
///
/// Nodes `0..m` are supplies, `m..m+n` demands and `m+n` is the root. Arc
/// `i*n + j` joins supply `i` to demand `m+j`; arc `m*n + u` is the
/// artificial arc between node `u` and the root (`u -> root` for supplies,
/// `root -> u` for demands). Every non-root node stores the tree arc to its
/// parent and the flow on it; arcs outside the tree carry no flow.
#[derive(Debug, Clone)]
struct Basis {
    m: usize,
    n: usize,
    /// Signed node supplies, negative for demands.
    supply: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// The tree arc of a node points from the node to its parent.
    up: Vec<bool>,
    flow: Vec<f64>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    in_tree: Vec<bool>,
    next_arc: usize,
}

impl Basis {
    /// Every node hangs from the root on its artificial arc.
    fn initial(supply: Vec<f64>, m: usize, n: usize) -> Self {
        let nodes = m + n;
        let root = nodes;
        let mut children = vec![Vec::new(); nodes + 1];
        children[root] = (0..nodes).collect();
        Self {
            m,
            n,
            parent: (0..nodes).map(|_| root).chain([NONE]).collect(),
            pred: (0..nodes).map(|u| m * n + u).chain([NONE]).collect(),
            up: (0..=nodes).map(|u| u < m).collect(),
            flow: supply.iter().map(|s| s.abs()).chain([0.0]).collect(),
            depth: (0..=nodes).map(|u| usize::from(u != root)).collect(),
            supply,
            children,
            in_tree: vec![false; m * n],
            next_arc: 0,
        }
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    fn remove_child(&mut self, parent: usize, child: usize) {
        let list = &mut self.children[parent];
        let pos = list
            .iter()
            .position(|&c| c == child)
            .expect("child is listed under its parent");
        list.swap_remove(pos);
    }
}

struct Simplex<'c, 'a> {
    basis: Basis,
    costs: &'c GroundCost<'a>,
    pi: Vec<f64>,
    artificial_cost: f64,
    tol: f64,
    block: usize,
    scratch: Vec<f64>,
    stack: Vec<usize>,
}

impl<'c, 'a> Simplex<'c, 'a> {
    fn new(basis: Basis, costs: &'c GroundCost<'a>) -> Self {
        let nodes = basis.m + basis.n + 1;
        let artificial_cost = (costs.max() + 1.0) * nodes as f64;
        let arcs = basis.m * basis.n;
        Self {
            pi: vec![0.0; nodes],
            tol: (1e-12 * costs.max()).max(16.0 * f64::EPSILON * artificial_cost),
            block: ((arcs as f64).sqrt() as usize).max(10),
            artificial_cost,
            costs,
            basis,
            scratch: Vec::new(),
            stack: Vec::new(),
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        let (m, n) = (self.basis.m, self.basis.n);
        if e < m * n {
            self.costs.at(e / n, e % n)
        } else if e - m * n < m {
            0.0
        } else {
            self.artificial_cost
        }
    }

    /// Potentials and depths of the subtree under `top` from its parent
    /// down, so that every tree arc has zero reduced cost `c + pi_s - pi_t`.
    fn refresh_subtree(&mut self, top: usize) {
        let mut stack = std::mem::take(&mut self.stack);
        stack.clear();
        stack.push(top);
        while let Some(u) = stack.pop() {
            let p = self.basis.parent[u];
            if p == NONE {
                self.pi[u] = 0.0;
                self.basis.depth[u] = 0;
            } else {
                let c = self.arc_cost(self.basis.pred[u]);
                self.pi[u] = if self.basis.up[u] { self.pi[p] - c } else { self.pi[p] + c };
                self.basis.depth[u] = self.basis.depth[p] + 1;
            }
            stack.extend_from_slice(&self.basis.children[u]);
        }
        self.stack = stack;
    }

    /// Block search: scans arcs cyclically and returns the most negative
    /// reduced cost among the first block that contains a candidate.
    fn find_entering(&mut self) -> Option<(usize, usize)> {
        let (m, n) = (self.basis.m, self.basis.n);
        let total = m * n;
        let mut best = -self.tol;
        let mut found = None;
        let mut scanned = 0;
        let mut in_block = 0;
        let mut i = self.basis.next_arc / n;
        let mut j0 = self.basis.next_arc % n;
        let mut scratch = std::mem::take(&mut self.scratch);
        while scanned < total {
            let len = (n - j0).min(total - scanned);
            let row = self.costs.row(i, &mut scratch);
            let pi_i = self.pi[i];
            let pi_dst = &self.pi[m..m + n];
            let in_tree = &self.basis.in_tree[i * n..(i + 1) * n];
            for j in j0..j0 + len {
                let rc = row[j] + pi_i - pi_dst[j];
                if rc < best && !in_tree[j] {
                    best = rc;
                    found = Some((i, j));
                }
            }
            scanned += len;
            in_block += len;
            if j0 + len == n {
                i = (i + 1) % m;
                j0 = 0;
            } else {
                j0 += len;
            }
            if in_block >= self.block {
                if found.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        self.scratch = scratch;
        self.basis.next_arc = i * n + j0;
        found
    }

    fn pivot(&mut self, i: usize, j: usize) -> Result<()> {
        let in_arc = i * self.basis.n + j;
        let first = i;
        let second = self.basis.m + j;
        let bs = &mut self.basis;

        let (mut x, mut y) = (first, second);
        while x != y {
            if bs.depth[x] >= bs.depth[y] {
                x = bs.parent[x];
            } else {
                y = bs.parent[y];
            }
        }
        let join = x;

        // Flow runs first -> second, up to `join`, and back down to `first`.
        // Ties prefer the last candidate on the second path, which keeps the
        // tree strongly feasible and rules out cycling.
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut on_first = false;
        let mut u = first;
        while u != join {
            if bs.up[u] && bs.flow[u] < delta {
                delta = bs.flow[u];
                u_out = u;
                on_first = true;
            }
            u = bs.parent[u];
        }
        u = second;
        while u != join {
            if !bs.up[u] && bs.flow[u] <= delta {
                delta = bs.flow[u];
                u_out = u;
                on_first = false;
            }
            u = bs.parent[u];
        }
        if u_out == NONE {
            return Err(Error::Numerical("transport problem is unbounded".into()));
        }
        if delta > 0.0 {
            u = first;
            while u != join {
                bs.flow[u] += if bs.up[u] { -delta } else { delta };
                u = bs.parent[u];
            }
            u = second;
            while u != join {
                bs.flow[u] += if bs.up[u] { delta } else { -delta };
                u = bs.parent[u];
            }
        }

        let (u_in, v_in, in_up) = if on_first {
            (first, second, true)
        } else {
            (second, first, false)
        };
        let leaving = bs.pred[u_out];
        if leaving < bs.m * bs.n {
            bs.in_tree[leaving] = false;
        }
        bs.in_tree[in_arc] = true;
        let old_parent = bs.parent[u_out];
        bs.remove_child(old_parent, u_out);

        // Reverse the path u_in .. u_out and hang it below v_in.
        let (mut arc, mut dir, mut f, mut new_parent) = (in_arc, in_up, delta, v_in);
        let mut w = u_in;
        loop {
            let (next, next_arc, next_dir, next_flow) = (bs.parent[w], bs.pred[w], bs.up[w], bs.flow[w]);
            bs.parent[w] = new_parent;
            bs.pred[w] = arc;
            bs.up[w] = dir;
            bs.flow[w] = f;
            bs.children[new_parent].push(w);
            if w == u_out {
                break;
            }
            bs.remove_child(next, w);
            new_parent = w;
            arc = next_arc;
            dir = !next_dir;
            f = next_flow;
            w = next;
        }
        self.refresh_subtree(u_in);
        Ok(())
    }

    /// Pivots to optimality and returns the number of pivots.
    fn run(&mut self) -> Result<usize> {
        let nodes = self.basis.m + self.basis.n;
        let limit = (100 * self.basis.m * self.basis.n).max(1 << 20);
        let root = self.basis.root();
        self.refresh_subtree(root);
        let mut pivots = 0;
        loop {
            let mut moved = false;
            while let Some((i, j)) = self.find_entering() {
                self.pivot(i, j)?;
                moved = true;
                pivots += 1;
                if pivots > limit {
                    return Err(Error::Numerical(format!(
                        "network simplex exceeded {limit} pivots on {nodes} nodes"
                    )));
                }
            }
            if !moved {
                return Ok(pivots);
            }
            // Recompute all potentials from scratch before declaring optimality.
            self.refresh_subtree(root);
        }
    }
}

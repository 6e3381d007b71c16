//! Network-flow primitives on real capacities: Dinic max-flow (dominance
//! certification) and successive-shortest-path min-cost flow (Kantorovich
//! transport under small integer costs).

use std::collections::VecDeque;

/// Residual capacities at or below this are treated as exhausted.
const CAP_EPS: f64 = 1e-15;

#[derive(Clone, Copy, Debug)]
struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
    rev: usize,
}

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    graph: Vec<Vec<Edge>>,
}

/// Handle to a forward edge, for reading its flow after a solve.
#[derive(Clone, Copy, Debug)]
pub struct EdgeId {
    from: usize,
    idx: usize,
    cap: f64,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self { graph: vec![Vec::new(); nodes] }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) -> EdgeId {
        self.add_edge_with_cost(from, to, cap, 0.0)
    }

    pub fn add_edge_with_cost(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> EdgeId {
        let rev_from = self.graph[to].len() + usize::from(from == to);
        let rev_to = self.graph[from].len();
        self.graph[from].push(Edge { to, cap, cost, rev: rev_from });
        self.graph[to].push(Edge { to: from, cap: 0.0, cost: -cost, rev: rev_to });
        EdgeId { from, idx: rev_to, cap }
    }

    /// Flow currently carried by a forward edge.
    pub fn flow(&self, e: EdgeId) -> f64 {
        let edge = &self.graph[e.from][e.idx];
        self.graph[edge.to][edge.rev].cap.min(e.cap)
    }

    fn levels(&self, s: usize) -> Vec<i32> {
        let mut level = vec![-1; self.graph.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for e in &self.graph[v] {
                if e.cap > CAP_EPS && level[e.to] < 0 {
                    level[e.to] = level[v] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        level
    }

    fn push(&mut self, v: usize, t: usize, f: f64, level: &[i32], iter: &mut [usize]) -> f64 {
        if v == t {
            return f;
        }
        while iter[v] < self.graph[v].len() {
            let Edge { to, cap, rev, .. } = self.graph[v][iter[v]];
            if cap > CAP_EPS && level[v] < level[to] {
                let d = self.push(to, t, f.min(cap), level, iter);
                if d > CAP_EPS {
                    self.graph[v][iter[v]].cap -= d;
                    self.graph[to][rev].cap += d;
                    return d;
                }
            }
            iter[v] += 1;
        }
        0.0
    }

    /// Dinic's algorithm.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let level = self.levels(s);
            if level[t] < 0 {
                return total;
            }
            let mut iter = vec![0; self.graph.len()];
            loop {
                let f = self.push(s, t, f64::INFINITY, &level, &mut iter);
                if f <= CAP_EPS {
                    break;
                }
                total += f;
            }
        }
    }

    /// Nodes reachable from `s` through edges with residual capacity.
    pub fn residual_reachable(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l >= 0).collect()
    }

    /// Successive shortest paths with Bellman-Ford distances. Pushes as much
    /// flow as possible (up to `limit`) at minimum cost; returns (flow, cost).
    /// Costs must leave no negative cycles in the initial network.
    pub fn min_cost_flow(&mut self, s: usize, t: usize, limit: f64) -> (f64, f64) {
        let n = self.graph.len();
        let mut flow = 0.0;
        let mut cost = 0.0;
        while limit - flow > CAP_EPS {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut in_queue = vec![false; n];
            dist[s] = 0.0;
            let mut queue = VecDeque::from([s]);
            in_queue[s] = true;
            while let Some(v) = queue.pop_front() {
                in_queue[v] = false;
                for (i, e) in self.graph[v].iter().enumerate() {
                    if e.cap > CAP_EPS && dist[v] + e.cost < dist[e.to] - 1e-12 {
                        dist[e.to] = dist[v] + e.cost;
                        prev[e.to] = Some((v, i));
                        if !in_queue[e.to] {
                            in_queue[e.to] = true;
                            queue.push_back(e.to);
                        }
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            let mut push = limit - flow;
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                push = push.min(self.graph[u][i].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                let rev = self.graph[u][i].rev;
                self.graph[u][i].cap -= push;
                self.graph[v][rev].cap += push;
                v = u;
            }
            flow += push;
            cost += push * dist[t];
        }
        (flow, cost)
    }
}

/// Optimal transport between `supply` and `demand` (each summing to ~1) with
/// cost `cost(i, j)`. Returns the cost and the plan `(i, j, mass)`.
pub fn transport(
    supply: &[f64],
    demand: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> (f64, Vec<(usize, usize, f64)>) {
    let src: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let dst: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    let s = 0;
    let t = 1 + src.len() + dst.len();
    let mut net = FlowNetwork::new(t + 1);
    for (a, &i) in src.iter().enumerate() {
        net.add_edge(s, 1 + a, supply[i]);
    }
    for (b, &j) in dst.iter().enumerate() {
        net.add_edge(1 + src.len() + b, t, demand[j]);
    }
    let mut middle = Vec::with_capacity(src.len() * dst.len());
    for (a, &i) in src.iter().enumerate() {
        for (b, &j) in dst.iter().enumerate() {
            let id = net.add_edge_with_cost(1 + a, 1 + src.len() + b, f64::INFINITY, cost(i, j));
            middle.push((i, j, id));
        }
    }
    let total: f64 = src.iter().map(|&i| supply[i]).sum::<f64>().min(dst.iter().map(|&j| demand[j]).sum());
    net.min_cost_flow(s, t, total);
    let mut plan = Vec::new();
    let mut cost_total = 0.0;
    for (i, j, id) in middle {
        let f = net.flow(id);
        if f > CAP_EPS {
            cost_total += f * cost(i, j);
            plan.push((i, j, f));
        }
    }
    (cost_total, plan)
}

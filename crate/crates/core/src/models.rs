//! Concrete systems (Ising, hard-core) and the graph families they live on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{Constraint, GibbsSystem, SiteGraph, SpinSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphFamily {
    Path {
        n: usize,
    },
    Cycle {
        n: usize,
    },
    /// `d`-dimensional torus `[0, n-1]^d`; site index is `Σ x_i n^i`.
    Torus {
        d: usize,
        n: usize,
    },
    /// Complete `b`-ary tree of the given depth, heap-indexed from the root.
    Tree {
        b: usize,
        depth: usize,
    },
    Complete {
        n: usize,
    },
    Edgeless {
        n: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Ising {
        beta: f64,
        #[serde(default)]
        h: f64,
    },
    Hardcore {
        lambda: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub graph: GraphFamily,
}

impl ModelSpec {
    pub fn ising(graph: GraphFamily, beta: f64, h: f64) -> Self {
        Self { kind: ModelKind::Ising { beta, h }, graph }
    }

    pub fn hardcore(graph: GraphFamily, lambda: f64) -> Self {
        Self { kind: ModelKind::Hardcore { lambda }, graph }
    }

    pub fn build(&self) -> Result<GibbsSystem> {
        let graph = build_graph(&self.graph)?;
        match self.kind {
            ModelKind::Ising { beta, h } => Ok(build_ising(graph, beta, h)),
            ModelKind::Hardcore { lambda } => build_hardcore_bipartite(graph, lambda),
        }
    }
}

fn parity_labels(n: usize) -> Vec<u8> {
    (0..n).map(|v| (v % 2) as u8).collect()
}

pub fn build_graph(family: &GraphFamily) -> Result<SiteGraph> {
    match *family {
        GraphFamily::Path { n } => {
            if n == 0 {
                return Err(Error::Invalid("path needs at least one site".into()));
            }
            let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            SiteGraph::new(n, &edges)?.with_bipartition(parity_labels(n))
        }
        GraphFamily::Cycle { n } => {
            if n < 3 {
                return Err(Error::Invalid("cycle needs at least three sites".into()));
            }
            let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            let g = SiteGraph::new(n, &edges)?;
            if n % 2 == 0 {
                g.with_bipartition(parity_labels(n))
            } else {
                Ok(g)
            }
        }
        GraphFamily::Torus { d, n } => {
            if d == 0 || n < 2 {
                return Err(Error::Invalid("torus needs d >= 1 and N >= 2".into()));
            }
            let total = n
                .checked_pow(d as u32)
                .filter(|&t| t <= 1 << 24)
                .ok_or_else(|| Error::Invalid("torus too large".into()))?;
            let mut edges = Vec::with_capacity(total * d);
            for v in 0..total {
                let mut place = 1;
                for _ in 0..d {
                    let x = (v / place) % n;
                    let w = v - x * place + ((x + 1) % n) * place;
                    edges.push((v, w));
                    place *= n;
                }
            }
            let g = SiteGraph::new(total, &edges)?;
            if n % 2 == 0 {
                let labels = (0..total)
                    .map(|v| {
                        let mut sum = 0;
                        let mut rest = v;
                        for _ in 0..d {
                            sum += rest % n;
                            rest /= n;
                        }
                        (sum % 2) as u8
                    })
                    .collect();
                g.with_bipartition(labels)
            } else {
                Ok(g)
            }
        }
        GraphFamily::Tree { b, depth } => {
            if b < 2 || depth < 1 {
                return Err(Error::Invalid("tree needs b >= 2 and depth >= 1".into()));
            }
            let total = (b.pow(depth as u32 + 1) - 1) / (b - 1);
            let edges: Vec<_> = (1..total).map(|v| ((v - 1) / b, v)).collect();
            let mut level = vec![0u8; total];
            for v in 1..total {
                level[v] = 1 - level[(v - 1) / b];
            }
            SiteGraph::new(total, &edges)?.with_bipartition(level)
        }
        GraphFamily::Complete { n } => {
            if n == 0 {
                return Err(Error::Invalid("complete graph needs at least one site".into()));
            }
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    edges.push((a, b));
                }
            }
            let g = SiteGraph::new(n, &edges)?;
            if n <= 2 {
                g.with_bipartition(parity_labels(n))
            } else {
                Ok(g)
            }
        }
        GraphFamily::Edgeless { n } => {
            if n == 0 {
                return Err(Error::Invalid("graph needs at least one site".into()));
            }
            SiteGraph::new(n, &[])?.with_bipartition(vec![0; n])
        }
    }
}

/// Ising model with spins −1/+1, `Ψ(s,s') = exp(β s s')` and site weight `exp(h s)`.
pub fn build_ising(graph: SiteGraph, beta: f64, h: f64) -> GibbsSystem {
    let values = [-1.0, 1.0];
    let pair = values.iter().flat_map(|a| values.iter().map(move |b| (beta * a * b).exp())).collect();
    let n = graph.n_sites();
    let site = (0..n).flat_map(|_| values.iter().map(|s| (h * s).exp())).collect();
    GibbsSystem::new(graph, SpinSpace::new(["-", "+"]).unwrap(), pair, site, Constraint::None)
        .expect("Ising potentials are valid")
}

/// Hard-core gas with fugacity `λ` on a bipartite graph. Spin order is
/// reversed on part 1, which makes the system monotone; the top state
/// occupies all of part 0.
pub fn build_hardcore_bipartite(graph: SiteGraph, lambda: f64) -> Result<GibbsSystem> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Model("fugacity must be positive".into()));
    }
    let graph = match graph.bipartition() {
        Some(_) => graph,
        None => {
            let labels = graph
                .detect_bipartition()
                .ok_or_else(|| Error::Model("hard-core monotone mode needs a bipartite graph".into()))?;
            graph.with_bipartition(labels)?
        }
    };
    let n = graph.n_sites();
    let site = (0..n).flat_map(|_| [1.0, lambda]).collect();
    GibbsSystem::new(graph, SpinSpace::new(["0", "1"]).unwrap(), vec![1.0; 4], site, Constraint::Hardcore)?
        .with_flipped_part(1)
}

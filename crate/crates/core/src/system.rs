//! Spin systems on finite graphs: spin sets, site graphs, Gibbs weights, the
//! enumerated configuration space, and the monotonicity / Markov-field
//! certifications that gate the rest of the crate.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::DistVector;

/// Tolerance for probability sums and equalities.
pub const EQ_TOL: f64 = 1e-12;
/// Tolerance for inequality assertions (dominance, TV orderings).
pub const INEQ_TOL: f64 = 1e-9;
/// Default cap on `|S|^|V|` for enumeration.
pub const DEFAULT_ENUM_BUDGET: u128 = 1 << 22;

/// Above this many states the pairwise comparability bitset is not cached.
const COMPARABILITY_CACHE_LIMIT: usize = 1 << 13;

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

/// Totally ordered spin labels; the order is list position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinSpace {
    labels: Vec<String>,
}

impl SpinSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Model("spin space must be nonempty".into()));
        }
        if labels.len() > u8::MAX as usize {
            return Err(Error::Model("at most 255 spin values are supported".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::Model(format!("duplicate spin label {a:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Undirected simple graph on sites `0..n`, optionally two-coloured.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    bipartition: Option<Vec<u8>>,
}

impl SiteGraph {
    /// Builds a graph from an edge list. Duplicate edges are merged; self-loops
    /// and out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Model(format!("edge ({a},{b}) out of range for {n} sites")));
            }
            if a == b {
                return Err(Error::Model(format!("self-loop at site {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &norm {
            adj[a].push(b);
            adj[b].push(a);
        }
        for nb in &mut adj {
            nb.sort_unstable();
        }
        Ok(Self { n, edges: norm, adj, bipartition: None })
    }

    /// Attaches bipartition labels; every edge must cross the partition.
    pub fn with_bipartition(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Model("bipartition length differs from site count".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Model("bipartition labels must be 0 or 1".into()));
        }
        if let Some(&(a, b)) = self.edges.iter().find(|&&(a, b)| labels[a] == labels[b]) {
            return Err(Error::Model(format!("edge ({a},{b}) does not cross the bipartition")));
        }
        self.bipartition = Some(labels);
        Ok(self)
    }

    /// Two-colours the graph by BFS (lowest index of each component gets 0).
    pub fn detect_bipartition(&self) -> Option<Vec<u8>> {
        let mut colour = vec![u8::MAX; self.n];
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.n {
            if colour[start] != u8::MAX {
                continue;
            }
            colour[start] = 0;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adj[v] {
                    if colour[w] == u8::MAX {
                        colour[w] = 1 - colour[v];
                        queue.push_back(w);
                    } else if colour[w] == colour[v] {
                        return None;
                    }
                }
            }
        }
        Some(colour)
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn are_adjacent(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn bipartition(&self) -> Option<&[u8]> {
        self.bipartition.as_deref()
    }

    /// Exterior boundary: sites outside `block` adjacent to some site of it.
    pub fn boundary(&self, block: &[usize]) -> Vec<usize> {
        let mut inside = vec![false; self.n];
        for &b in block {
            inside[b] = true;
        }
        let mut out: Vec<usize> =
            block.iter().flat_map(|&b| self.adj[b].iter().copied()).filter(|&w| !inside[w]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Subgraph induced on `sites` (relabelled `0..sites.len()` in the given order).
    pub fn induced(&self, sites: &[usize]) -> Result<SiteGraph> {
        let mut pos = vec![usize::MAX; self.n];
        for (i, &s) in sites.iter().enumerate() {
            if s >= self.n {
                return Err(Error::Invalid(format!("site {s} out of range")));
            }
            pos[s] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|&&(a, b)| pos[a] != usize::MAX && pos[b] != usize::MAX)
            .map(|&(a, b)| (pos[a], pos[b]))
            .collect();
        SiteGraph::new(sites.len(), &edges)
    }
}

/// Assignment of a spin index to every site. Indices refer to the system's
/// monotone order at that site.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration(pub Vec<u8>);

impl Configuration {
    pub fn new(spins: Vec<u8>) -> Self {
        Self(spins)
    }

    pub fn uniform(n: usize, spin: u8) -> Self {
        Self(vec![spin; n])
    }

    pub fn spins(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, v: usize) -> u8 {
        self.0[v]
    }

    /// Copy with the spin at `v` replaced.
    pub fn with_spin(&self, v: usize, s: u8) -> Self {
        let mut c = self.clone();
        c.0[v] = s;
        c
    }

    /// Coordinate-wise order.
    pub fn le(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    None,
    /// No two adjacent sites may both carry the spin labelled at index 1.
    Hardcore,
}

/// A factor on an arbitrary site tuple, indexed by the mixed-radix code of the
/// labels (first listed site least significant). Used to build non-pairwise
/// interactions at desk scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub sites: Vec<usize>,
    pub table: Vec<f64>,
}

/// A finite spin system: graph, spins, pair and site potentials, and a hard
/// constraint that cuts `Ω` out of `S^V`.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsSystem {
    graph: SiteGraph,
    spins: SpinSpace,
    /// `k*k`, indexed by label indices.
    pair: Vec<f64>,
    /// `n*k`, indexed by label indices.
    site: Vec<f64>,
    constraint: Constraint,
    /// Bipartition part whose spin order is reversed, if any.
    flip_part: Option<u8>,
    flipped: Vec<bool>,
    factors: Vec<Factor>,
}

impl GibbsSystem {
    pub fn new(
        graph: SiteGraph,
        spins: SpinSpace,
        pair: Vec<f64>,
        site: Vec<f64>,
        constraint: Constraint,
    ) -> Result<Self> {
        let k = spins.len();
        let n = graph.n_sites();
        if n == 0 {
            return Err(Error::Model("system needs at least one site".into()));
        }
        if pair.len() != k * k {
            return Err(Error::Model(format!("pair potential needs {} entries", k * k)));
        }
        if site.len() != n * k {
            return Err(Error::Model(format!("site potential needs {} entries", n * k)));
        }
        if pair.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Model("pair potential entries must be finite and nonnegative".into()));
        }
        if (0..k).any(|a| (0..k).any(|b| pair[a * k + b] != pair[b * k + a])) {
            return Err(Error::Model("pair potential must be symmetric".into()));
        }
        if site.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Model("site potential entries must be finite and positive".into()));
        }
        if constraint == Constraint::Hardcore && k != 2 {
            return Err(Error::Model("hard-core constraint needs exactly two spins".into()));
        }
        Ok(Self { graph, spins, pair, site, constraint, flip_part: None, flipped: vec![false; n], factors: Vec::new() })
    }

    /// Reverses the spin order on every site of bipartition part `part`.
    pub fn with_flipped_part(mut self, part: u8) -> Result<Self> {
        let labels = self.graph.bipartition().ok_or_else(|| Error::Model("order flip needs a bipartition".into()))?;
        self.flipped = labels.iter().map(|&l| l == part).collect();
        self.flip_part = Some(part);
        Ok(self)
    }

    pub fn with_factor(mut self, sites: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        let k = self.spins.len();
        if sites.iter().any(|&s| s >= self.n_sites()) {
            return Err(Error::Model("factor site out of range".into()));
        }
        if table.len() != k.pow(sites.len() as u32) {
            return Err(Error::Model("factor table has the wrong size".into()));
        }
        if table.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Model("factor entries must be finite and positive".into()));
        }
        self.factors.push(Factor { sites, table });
        Ok(self)
    }

    pub fn graph(&self) -> &SiteGraph {
        &self.graph
    }

    pub fn spins(&self) -> &SpinSpace {
        &self.spins
    }

    pub fn n_sites(&self) -> usize {
        self.graph.n_sites()
    }

    pub fn n_spins(&self) -> usize {
        self.spins.len()
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn flip_part(&self) -> Option<u8> {
        self.flip_part
    }

    pub fn is_flipped(&self, v: usize) -> bool {
        self.flipped[v]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn pair_weight(&self, a: usize, b: usize) -> f64 {
        self.pair[a * self.spins.len() + b]
    }

    pub fn site_weight(&self, v: usize, label: usize) -> f64 {
        self.site[v * self.spins.len() + label]
    }

    /// Label index carried by order index `s` at site `v`.
    #[inline]
    pub fn label_at(&self, v: usize, s: u8) -> usize {
        if self.flipped[v] {
            self.spins.len() - 1 - s as usize
        } else {
            s as usize
        }
    }

    pub fn top(&self) -> Configuration {
        Configuration::uniform(self.n_sites(), (self.n_spins() - 1) as u8)
    }

    pub fn bottom(&self) -> Configuration {
        Configuration::uniform(self.n_sites(), 0)
    }

    /// Membership in `Ω`.
    pub fn allowed(&self, config: &Configuration) -> bool {
        match self.constraint {
            Constraint::None => true,
            Constraint::Hardcore => self
                .graph
                .edges()
                .iter()
                .all(|&(a, b)| !(self.label_at(a, config.get(a)) == 1 && self.label_at(b, config.get(b)) == 1)),
        }
    }

    fn factor_value(&self, f: &Factor, config: &Configuration) -> f64 {
        let k = self.spins.len();
        let mut code = 0usize;
        for &s in f.sites.iter().rev() {
            code = code * k + self.label_at(s, config.get(s));
        }
        f.table[code]
    }

    /// Unnormalized weight; zero outside `Ω`.
    pub fn weight(&self, config: &Configuration) -> f64 {
        if !self.allowed(config) {
            return 0.0;
        }
        let mut w = 1.0;
        for &(a, b) in self.graph.edges() {
            w *= self.pair_weight(self.label_at(a, config.get(a)), self.label_at(b, config.get(b)));
        }
        for v in 0..self.n_sites() {
            w *= self.site_weight(v, self.label_at(v, config.get(v)));
        }
        for f in &self.factors {
            w *= self.factor_value(f, config);
        }
        w
    }

    fn locally_allowed(&self, config: &Configuration, v: usize, s: u8) -> bool {
        match self.constraint {
            Constraint::None => true,
            Constraint::Hardcore => {
                self.label_at(v, s) != 1
                    || self.graph.neighbors(v).iter().all(|&w| self.label_at(w, config.get(w)) != 1)
            }
        }
    }

    /// Weights of `config_v^s` for every order index `s`, up to a factor that
    /// does not depend on `s`. Entries are zero where `config_v^s ∉ Ω`.
    pub fn local_weights(&self, config: &Configuration, v: usize) -> Vec<f64> {
        let k = self.n_spins();
        let mut out = Vec::with_capacity(k);
        let mut probe = config.clone();
        for s in 0..k as u8 {
            if !self.locally_allowed(config, v, s) {
                out.push(0.0);
                continue;
            }
            let lv = self.label_at(v, s);
            let mut w = self.site_weight(v, lv);
            for &u in self.graph.neighbors(v) {
                w *= self.pair_weight(lv, self.label_at(u, config.get(u)));
            }
            if !self.factors.is_empty() {
                probe.0[v] = s;
                for f in self.factors.iter().filter(|f| f.sites.contains(&v)) {
                    w *= self.factor_value(f, &probe);
                }
            }
            out.push(w);
        }
        out
    }

    /// Heat-bath law of the spin at `v` given the rest of `config`.
    pub fn conditional_spin_distribution(&self, config: &Configuration, v: usize) -> Result<Vec<f64>> {
        if v >= self.n_sites() {
            return Err(Error::Invalid(format!("site {v} out of range")));
        }
        let w = self.local_weights(config, v);
        let z: f64 = w.iter().sum();
        if !(z > 0.0) {
            return Err(Error::Constraint(format!("no spin at site {v} yields a member of Ω")));
        }
        Ok(w.into_iter().map(|x| x / z).collect())
    }

    pub fn to_file(&self) -> SystemFile {
        let k = self.n_spins();
        let labels = self.spins.labels();
        let mut pair_potential = BTreeMap::new();
        for a in 0..k {
            let row: BTreeMap<String, f64> = (0..k).map(|b| (labels[b].clone(), self.pair_weight(a, b))).collect();
            pair_potential.insert(labels[a].clone(), row);
        }
        let site_potential = (0..self.n_sites())
            .map(|v| (0..k).map(|s| (labels[s].clone(), self.site_weight(v, s))).collect())
            .collect();
        SystemFile {
            spins: labels.to_vec(),
            sites: self.n_sites(),
            edges: self.graph.edges().iter().map(|&(a, b)| [a, b]).collect(),
            pair_potential,
            site_potential,
            constraint: self.constraint,
            bipartition: self.graph.bipartition().map(<[u8]>::to_vec),
            flip_part: self.flip_part,
        }
    }

    pub fn from_file(file: &SystemFile) -> Result<Self> {
        let spins = SpinSpace::new(file.spins.iter().cloned())?;
        let k = spins.len();
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut graph = SiteGraph::new(file.sites, &edges)?;
        if let Some(b) = &file.bipartition {
            graph = graph.with_bipartition(b.clone())?;
        }
        let mut pair = vec![0.0; k * k];
        for (a, la) in spins.labels().iter().enumerate() {
            let row = file
                .pair_potential
                .get(la)
                .ok_or_else(|| Error::Model(format!("pair_potential missing row {la:?}")))?;
            for (b, lb) in spins.labels().iter().enumerate() {
                pair[a * k + b] = *row
                    .get(lb)
                    .ok_or_else(|| Error::Model(format!("pair_potential missing entry ({la:?},{lb:?})")))?;
            }
        }
        if file.site_potential.len() != file.sites {
            return Err(Error::Model("site_potential needs one entry per site".into()));
        }
        let mut site = vec![0.0; file.sites * k];
        for (v, row) in file.site_potential.iter().enumerate() {
            for (s, l) in spins.labels().iter().enumerate() {
                site[v * k + s] =
                    *row.get(l).ok_or_else(|| Error::Model(format!("site_potential[{v}] missing {l:?}")))?;
            }
        }
        let mut system = GibbsSystem::new(graph, spins, pair, site, file.constraint)?;
        if let Some(part) = file.flip_part {
            system = system.with_flipped_part(part)?;
        }
        Ok(system)
    }

    pub fn load_json(text: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

/// On-disk system definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub spins: Vec<String>,
    pub sites: usize,
    pub edges: Vec<[usize; 2]>,
    pub pair_potential: BTreeMap<String, BTreeMap<String, f64>>,
    pub site_potential: Vec<BTreeMap<String, f64>>,
    pub constraint: Constraint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bipartition: Option<Vec<u8>>,
    /// Bipartition part whose spin order is reversed (monotone hard-core).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_part: Option<u8>,
}

/// Enumerated `Ω` with cached comparability and single-site fibres.
///
/// States are ordered by the code `Σ_v s_v k^v`, i.e. lexicographically with
/// the last site most significant. `σ ≤ τ` implies `code(σ) ≤ code(τ)`, so a
/// state can only lie below states with larger or equal index.
#[derive(Debug)]
pub struct StateSpace {
    id: u64,
    n: usize,
    k: usize,
    states: Vec<Configuration>,
    codes: Vec<u64>,
    index: HashMap<u64, usize>,
    comparability: Option<Vec<u64>>,
    top: Option<usize>,
    bottom: Option<usize>,
    /// Per site: fibre id of each state (states agreeing off that site).
    fibre_of: Vec<Vec<u32>>,
    fibre_count: Vec<usize>,
}

impl StateSpace {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn n_spins(&self) -> usize {
        self.k
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &Configuration {
        &self.states[i]
    }

    pub fn code(&self, i: usize) -> u64 {
        self.codes[i]
    }

    pub fn encode(&self, config: &Configuration) -> u64 {
        config.spins().iter().rev().fold(0u64, |acc, &s| acc * self.k as u64 + s as u64)
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        if config.len() != self.n || config.spins().iter().any(|&s| s as usize >= self.k) {
            return None;
        }
        self.index.get(&self.encode(config)).copied()
    }

    pub fn index_of_code(&self, code: u64) -> Option<usize> {
        self.index.get(&code).copied()
    }

    pub fn top(&self) -> Option<usize> {
        self.top
    }

    pub fn bottom(&self) -> Option<usize> {
        self.bottom
    }

    /// `states[i] ≤ states[j]` coordinate-wise.
    pub fn le(&self, i: usize, j: usize) -> bool {
        match &self.comparability {
            Some(bits) => {
                let flat = i * self.states.len() + j;
                bits[flat / 64] >> (flat % 64) & 1 == 1
            }
            None => self.states[i].le(&self.states[j]),
        }
    }

    pub fn fibre_of(&self, v: usize) -> &[u32] {
        &self.fibre_of[v]
    }

    pub fn fibre_count(&self, v: usize) -> usize {
        self.fibre_count[v]
    }

    /// Groups states by their restriction to the complement of `block`.
    /// Returns a class id per state and the number of classes; class ids are
    /// assigned in order of first appearance.
    pub fn exterior_classes(&self, block: &[usize]) -> (Vec<u32>, usize) {
        self.classes_by(|i| {
            let mut code = self.codes[i];
            for &b in block {
                let place = (self.k as u64).pow(b as u32);
                let digit = (code / place) % self.k as u64;
                code -= digit * place;
            }
            code
        })
    }

    /// Groups states by their restriction to `sites`.
    pub fn restriction_classes(&self, sites: &[usize]) -> (Vec<u32>, usize) {
        self.classes_by(|i| sites.iter().rev().fold(0u64, |acc, &s| acc * self.k as u64 + self.states[i].get(s) as u64))
    }

    fn classes_by(&self, key: impl Fn(usize) -> u64) -> (Vec<u32>, usize) {
        let mut ids: HashMap<u64, u32> = HashMap::new();
        let mut out = Vec::with_capacity(self.states.len());
        for i in 0..self.states.len() {
            let next = ids.len() as u32;
            out.push(*ids.entry(key(i)).or_insert(next));
        }
        (out, ids.len())
    }

    /// Code of the restriction of state `i` to `sites` (first site least significant).
    pub fn restriction_code(&self, i: usize, sites: &[usize]) -> usize {
        sites.iter().rev().fold(0usize, |acc, &s| acc * self.k + self.states[i].get(s) as usize)
    }
}

/// Materializes `Ω` with the default enumeration budget.
pub fn enumerate_states(system: &GibbsSystem) -> Result<StateSpace> {
    enumerate_states_with_budget(system, DEFAULT_ENUM_BUDGET)
}

pub fn enumerate_states_with_budget(system: &GibbsSystem, budget: u128) -> Result<StateSpace> {
    let n = system.n_sites();
    let k = system.n_spins();
    let raw = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if raw > budget {
        return Err(Error::Budget { needed: raw, budget });
    }
    let mut states = Vec::new();
    let mut codes = Vec::new();
    let mut spins = vec![0u8; n];
    for code in 0..raw as u64 {
        let mut c = code;
        for s in spins.iter_mut() {
            *s = (c % k as u64) as u8;
            c /= k as u64;
        }
        let config = Configuration(spins.clone());
        if system.allowed(&config) {
            if !(system.weight(&config) > 0.0) {
                return Err(Error::Model(format!("configuration {:?} is in Ω but has zero weight", config.spins())));
            }
            states.push(config);
            codes.push(code);
        }
    }
    if states.is_empty() {
        return Err(Error::Model("Ω is empty".into()));
    }
    let index: HashMap<u64, usize> = codes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let len = states.len();

    let comparability = (len <= COMPARABILITY_CACHE_LIMIT).then(|| {
        let mut bits = vec![0u64; (len * len).div_ceil(64)];
        for i in 0..len {
            for j in i..len {
                if states[i].le(&states[j]) {
                    let flat = i * len + j;
                    bits[flat / 64] |= 1 << (flat % 64);
                }
            }
        }
        bits
    });

    let top_code = system.top().spins().iter().rev().fold(0u64, |a, &s| a * k as u64 + s as u64);
    let top = index.get(&top_code).copied();
    let bottom = index.get(&0).copied();

    let mut fibre_of = Vec::with_capacity(n);
    let mut fibre_count = Vec::with_capacity(n);
    for v in 0..n {
        let place = (k as u64).pow(v as u32);
        let mut ids: HashMap<u64, u32> = HashMap::new();
        let mut of = Vec::with_capacity(len);
        for &code in &codes {
            let key = code - ((code / place) % k as u64) * place;
            let next = ids.len() as u32;
            of.push(*ids.entry(key).or_insert(next));
        }
        fibre_count.push(ids.len());
        fibre_of.push(of);
    }

    Ok(StateSpace {
        id: NEXT_SPACE_ID.fetch_add(1, Ordering::Relaxed),
        n,
        k,
        states,
        codes,
        index,
        comparability,
        top,
        bottom,
        fibre_of,
        fibre_count,
    })
}

/// `π` over the enumerated space.
pub fn stationary_distribution(system: &GibbsSystem, space: &StateSpace) -> Result<DistVector> {
    let weights: Vec<f64> = space.states().iter().map(|c| system.weight(c)).collect();
    let z: f64 = weights.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Model(format!("total weight {z} is not a positive finite number")));
    }
    Ok(DistVector::from_raw(weights.into_iter().map(|w| w / z).collect(), space.id()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MonotoneCertificate {
    Ok,
    Violation {
        sigma: Configuration,
        tau: Configuration,
        site: usize,
        /// Spin indices forming the increasing set whose probability drops.
        witness_upset: Vec<u8>,
        gap: f64,
    },
}

impl MonotoneCertificate {
    pub fn is_ok(&self) -> bool {
        matches!(self, MonotoneCertificate::Ok)
    }
}

/// Checks that heat-bath conditionals are stochastically ordered along every
/// comparable pair of states. Scans pairs `(i, j)` with `i ≤ j` in state
/// order, then sites, and reports the first failure.
pub fn verify_monotone(system: &GibbsSystem, space: &StateSpace) -> MonotoneCertificate {
    let n = space.n_sites();
    let k = space.n_spins();
    // Upper tails P(spin ≥ t) for t = 1..k-1, per state and site.
    let mut tails = vec![0.0; space.len() * n * k];
    for (i, config) in space.states().iter().enumerate() {
        for v in 0..n {
            let p = system.conditional_spin_distribution(config, v).expect("members of Ω always admit their own spin");
            let base = (i * n + v) * k;
            let mut acc = 0.0;
            for t in (0..k).rev() {
                acc += p[t];
                tails[base + t] = acc;
            }
        }
    }
    for i in 0..space.len() {
        for j in i..space.len() {
            if i == j || !space.le(i, j) {
                continue;
            }
            for v in 0..n {
                let lo = &tails[(i * n + v) * k..(i * n + v + 1) * k];
                let hi = &tails[(j * n + v) * k..(j * n + v + 1) * k];
                for t in 1..k {
                    let gap = lo[t] - hi[t];
                    if gap > INEQ_TOL {
                        return MonotoneCertificate::Violation {
                            sigma: space.state(i).clone(),
                            tau: space.state(j).clone(),
                            site: v,
                            witness_upset: (t as u8..k as u8).collect(),
                            gap,
                        };
                    }
                }
            }
        }
    }
    MonotoneCertificate::Ok
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MarkovFieldCertificate {
    Ok { boundary_classes: usize },
    Violation { sigma: Configuration, tau: Configuration, max_difference: f64 },
}

impl MarkovFieldCertificate {
    pub fn is_ok(&self) -> bool {
        matches!(self, MarkovFieldCertificate::Ok { .. })
    }
}

/// Checks that the block update of `block` depends only on the spins of its
/// exterior boundary: any two states agreeing on `∂B` must induce the same
/// conditional law on `B`.
pub fn verify_markov_field(
    system: &GibbsSystem,
    space: &StateSpace,
    block: &[usize],
) -> Result<MarkovFieldCertificate> {
    if block.iter().any(|&b| b >= space.n_sites()) {
        return Err(Error::Invalid("block site out of range".into()));
    }
    let boundary = system.graph().boundary(block);
    let (ext, n_ext) = space.exterior_classes(block);
    let (bnd, n_bnd) = space.restriction_classes(&boundary);
    let inner = space.n_spins().pow(block.len() as u32);

    let mut laws = vec![vec![0.0; inner]; n_ext];
    let mut rep = vec![usize::MAX; n_ext];
    let mut ext_bnd = vec![0u32; n_ext];
    for i in 0..space.len() {
        let c = ext[i] as usize;
        laws[c][space.restriction_code(i, block)] += system.weight(space.state(i));
        if rep[c] == usize::MAX {
            rep[c] = i;
            ext_bnd[c] = bnd[i];
        }
    }
    for law in &mut laws {
        let z: f64 = law.iter().sum();
        law.iter_mut().for_each(|p| *p /= z);
    }
    let mut first_of_bnd = vec![usize::MAX; n_bnd];
    for c in 0..n_ext {
        let b = ext_bnd[c] as usize;
        if first_of_bnd[b] == usize::MAX {
            first_of_bnd[b] = c;
            continue;
        }
        let r = first_of_bnd[b];
        let diff = laws[r].iter().zip(&laws[c]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff > INEQ_TOL {
            return Ok(MarkovFieldCertificate::Violation {
                sigma: space.state(rep[r]).clone(),
                tau: space.state(rep[c]).clone(),
                max_difference: diff,
            });
        }
    }
    Ok(MarkovFieldCertificate::Ok { boundary_classes: first_of_bnd.iter().filter(|&&c| c != usize::MAX).count() })
}

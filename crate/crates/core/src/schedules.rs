//! Update schedules: construction, censoring, serialization and the
//! randomized constructions (global blocks, parity phases, birthday sets).

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{tv_distance, ExactModel};
use crate::models::{build_graph, GraphFamily};
use crate::system::{SiteGraph, EQ_TOL};

/// One scheduled update.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Site(usize),
    Block(Vec<usize>),
}

impl Target {
    pub fn sites(&self) -> &[usize] {
        match self {
            Target::Site(v) => std::slice::from_ref(v),
            Target::Block(b) => b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub steps: Vec<Target>,
    pub provenance: String,
    pub seed: Option<u64>,
}

impl Schedule {
    pub fn new(steps: Vec<Target>, provenance: impl Into<String>) -> Self {
        Self { steps, provenance: provenance.into(), seed: None }
    }

    pub fn sites(sites: &[usize], provenance: impl Into<String>) -> Self {
        Self::new(sites.iter().map(|&v| Target::Site(v)).collect(), provenance)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Site indices of the steps; `None` if any step is a block.
    pub fn site_sequence(&self) -> Option<Vec<usize>> {
        self.steps
            .iter()
            .map(|t| match t {
                Target::Site(v) => Some(*v),
                Target::Block(_) => None,
            })
            .collect()
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        for (i, t) in self.steps.iter().enumerate() {
            if let Target::Block(b) = t {
                if b.is_empty() {
                    return Err(Error::Invalid(format!("step {i}: empty block")));
                }
            }
            if let Some(v) = t.sites().iter().find(|&&v| v >= n_sites) {
                return Err(Error::Invalid(format!("step {i}: site {v} out of range for {n_sites} sites")));
            }
        }
        Ok(())
    }

    /// One JSON object per line: `{"site":v}` or `{"block":[...]}`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.steps {
            out.push_str(&serde_json::to_string(t).expect("targets serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str, provenance: impl Into<String>) -> Result<Self> {
        let steps = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<Target>, _>>()?;
        Ok(Self::new(steps, provenance))
    }
}

/// Declarative description of a schedule family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    RandomScan {
        length: usize,
        #[serde(default)]
        seed: u64,
    },
    Systematic {
        #[serde(default)]
        permutation: Option<Vec<usize>>,
        rounds: usize,
    },
    Alternating {
        rounds: usize,
    },
    GlobalBlock {
        d: usize,
        n: usize,
        ell: usize,
        rounds: usize,
        #[serde(default)]
        seed: u64,
    },
    Censored {
        base: Box<ScheduleSpec>,
        mask: Vec<bool>,
    },
    Birthday {
        rounds: usize,
        #[serde(default)]
        permutation: Option<Vec<usize>>,
        #[serde(default)]
        seed: u64,
    },
}

impl ScheduleSpec {
    /// Draws one concrete schedule; deterministic in `self`.
    pub fn realize(&self, graph: &SiteGraph) -> Result<Schedule> {
        let n = graph.n_sites();
        let schedule = match self {
            ScheduleSpec::RandomScan { length, seed } => random_schedule(n, *length, *seed),
            ScheduleSpec::Systematic { permutation, rounds } => {
                let perm = permutation.clone().unwrap_or_else(|| (0..n).collect());
                if perm.len() != n {
                    return Err(Error::Invalid(format!("permutation has {} entries for {n} sites", perm.len())));
                }
                systematic_schedule(&perm, *rounds)?
            }
            ScheduleSpec::Alternating { rounds } => {
                let parts = graph
                    .bipartition()
                    .ok_or_else(|| Error::Invalid("alternating schedule needs a bipartite graph".into()))?;
                alternating_schedule(parts, *rounds)
            }
            ScheduleSpec::GlobalBlock { d, n: side, ell, rounds, seed } => {
                if side.pow(*d as u32) != n {
                    return Err(Error::Invalid(format!("torus {side}^{d} does not match {n} sites")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut steps = Vec::new();
                for _ in 0..*rounds {
                    let j: Vec<usize> = (0..*d).map(|_| rng.gen_range(0..=*ell)).collect();
                    steps.extend(global_block_schedule(*d, *side, *ell, &j)?.steps);
                }
                Schedule { steps, provenance: format!("global_block(ell={ell})"), seed: Some(*seed) }
            }
            ScheduleSpec::Censored { base, mask } => {
                let mut s = censor(&base.realize(graph)?, mask)?;
                s.provenance = format!("censored({})", s.provenance);
                s
            }
            ScheduleSpec::Birthday { rounds, permutation, seed } => {
                let perm = permutation.clone().unwrap_or_else(|| (0..n).collect());
                check_permutation(&perm)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut steps = Vec::new();
                for _ in 0..*rounds {
                    let kept: BTreeSet<usize> = birthday_draw(graph, &mut rng).into_iter().collect();
                    steps.extend(perm.iter().filter(|v| kept.contains(v)).map(|&v| Target::Site(v)));
                }
                Schedule { steps, provenance: "birthday".into(), seed: Some(*seed) }
            }
        };
        schedule.validate(n)?;
        Ok(schedule)
    }
}

/// `T` i.i.d. uniform sites from `ChaCha8Rng::seed_from_u64(seed)`.
pub fn random_schedule(n_sites: usize, length: usize, seed: u64) -> Schedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps =
        if n_sites == 0 { Vec::new() } else { (0..length).map(|_| Target::Site(rng.gen_range(0..n_sites))).collect() };
    Schedule { steps, provenance: "random_scan".into(), seed: Some(seed) }
}

fn check_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &v in perm {
        if v >= perm.len() || std::mem::replace(&mut seen[v], true) {
            return Err(Error::Invalid(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

pub fn systematic_schedule(permutation: &[usize], rounds: usize) -> Result<Schedule> {
    check_permutation(permutation)?;
    let steps = (0..rounds).flat_map(|_| permutation.iter().map(|&v| Target::Site(v))).collect();
    Ok(Schedule::new(steps, "systematic"))
}

/// Sites of part 0 in ascending order, then part 1.
pub fn parity_order(bipartition: &[u8]) -> Vec<Vec<usize>> {
    (0..2u8)
        .map(|p| (0..bipartition.len()).filter(|&v| bipartition[v] == p).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect()
}

pub fn alternating_schedule(bipartition: &[u8], rounds: usize) -> Schedule {
    let order: Vec<usize> = parity_order(bipartition).concat();
    let steps = (0..rounds).flat_map(|_| order.iter().map(|&v| Target::Site(v))).collect();
    Schedule::new(steps, "alternating")
}

pub fn censor(schedule: &Schedule, mask: &[bool]) -> Result<Schedule> {
    if mask.len() != schedule.len() {
        return Err(Error::Invalid(format!(
            "mask length {} differs from schedule length {}",
            mask.len(),
            schedule.len()
        )));
    }
    let steps = schedule.steps.iter().zip(mask).filter(|(_, &m)| m).map(|(t, _)| t.clone()).collect();
    Ok(Schedule { steps, provenance: schedule.provenance.clone(), seed: schedule.seed })
}

pub fn censor_by(schedule: &Schedule, keep: impl Fn(&Target) -> bool) -> Schedule {
    let mask: Vec<bool> = schedule.steps.iter().map(keep).collect();
    censor(schedule, &mask).expect("mask built from schedule")
}

/// Drops every target not contained in `union`.
pub fn censor_to_blocks(schedule: &Schedule, union: &[usize]) -> Schedule {
    let set: BTreeSet<usize> = union.iter().copied().collect();
    censor_by(schedule, |t| t.sites().iter().all(|v| set.contains(v)))
}

fn torus_index(coords: &[usize], n: usize) -> usize {
    coords.iter().rev().fold(0, |acc, &x| acc * n + x)
}

/// All vectors in `{0..m-1}^d`, first coordinate fastest.
fn grid(d: usize, m: usize) -> Vec<Vec<usize>> {
    let total = m.pow(d as u32);
    (0..total)
        .map(|mut c| {
            (0..d)
                .map(|_| {
                    let x = c % m;
                    c /= m;
                    x
                })
                .collect()
        })
        .collect()
}

/// Sites of the cube `anchor + {0..ℓ-1}^d` on the `n^d` torus, ascending.
pub fn torus_block(d: usize, n: usize, ell: usize, anchor: &[usize]) -> Vec<usize> {
    let mut sites: Vec<usize> = grid(d, ell)
        .into_iter()
        .map(|off| {
            let c: Vec<usize> = off.iter().zip(anchor).map(|(o, a)| (o + a) % n).collect();
            torus_index(&c, n)
        })
        .collect();
    sites.sort_unstable();
    sites.dedup();
    sites
}

/// All `ℓ^d` anchored cubes of side `ℓ`, ordered by anchor index.
pub fn torus_blocks(d: usize, n: usize, ell: usize) -> Vec<Vec<usize>> {
    grid(d, n).iter().map(|a| torus_block(d, n, ell, a)).collect()
}

/// Offset vectors `j ∈ {0..ℓ}^d`.
pub fn torus_offsets(d: usize, ell: usize) -> Vec<Vec<usize>> {
    grid(d, ell + 1)
}

/// Blocks `B_{j+(ℓ+1)k}`. Asserts the blocks are disjoint and that no block
/// has a boundary site inside another.
pub fn global_block_layer(d: usize, n: usize, ell: usize, j: &[usize]) -> Result<Vec<Vec<usize>>> {
    if ell == 0 || n % (ell + 1) != 0 {
        return Err(Error::Invalid(format!("ell+1 = {} must divide n = {n}", ell + 1)));
    }
    if j.len() != d || j.iter().any(|&x| x > ell) {
        return Err(Error::Invalid(format!("offset {j:?} must lie in {{0..{ell}}}^{d}")));
    }
    let graph = build_graph(&GraphFamily::Torus { d, n })?;
    let blocks: Vec<Vec<usize>> = grid(d, n / (ell + 1))
        .into_iter()
        .map(|k| {
            let anchor: Vec<usize> = k.iter().zip(j).map(|(k, j)| j + (ell + 1) * k).collect();
            torus_block(d, n, ell, &anchor)
        })
        .collect();
    let mut owner = vec![usize::MAX; graph.n_sites()];
    for (b, block) in blocks.iter().enumerate() {
        for &v in block {
            assert_eq!(owner[v], usize::MAX, "global blocks overlap at site {v}");
            owner[v] = b;
        }
    }
    for (b, block) in blocks.iter().enumerate() {
        for u in graph.boundary(block) {
            assert!(
                owner[u] == usize::MAX || owner[u] == b,
                "block {b} has an exterior neighbour in block {}",
                owner[u]
            );
        }
    }
    Ok(blocks)
}

pub fn global_block_schedule(d: usize, n: usize, ell: usize, j: &[usize]) -> Result<Schedule> {
    let steps = global_block_layer(d, n, ell, j)?.into_iter().map(Target::Block).collect();
    Ok(Schedule::new(steps, format!("global_block(ell={ell},j={j:?})")))
}

/// Kept updates of a parity-phase stream together with the phase structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParityPhases {
    pub schedule: Schedule,
    /// Number of kept updates at the end of each phase (cumulative).
    pub phase_ends: Vec<usize>,
    /// Draws consumed by each phase, censored ones included.
    pub draws_per_phase: Vec<usize>,
    /// Kept updates in each phase.
    pub kept_per_phase: Vec<usize>,
}

/// Consumes uniform random sites, keeping only draws of the current part
/// until every site of that part has been drawn, then switches parts.
pub fn alternating_parity_phases(bipartition: &[u8], seed: u64, phases: usize) -> ParityPhases {
    let n = bipartition.len();
    let parts = parity_order(bipartition);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ParityPhases {
        schedule: Schedule { steps: Vec::new(), provenance: "parity_phases".into(), seed: Some(seed) },
        phase_ends: Vec::new(),
        draws_per_phase: Vec::new(),
        kept_per_phase: Vec::new(),
    };
    if n == 0 {
        return out;
    }
    for phase in 0..phases {
        let part = bipartition[parts[phase % parts.len()][0]];
        let mut missing: BTreeSet<usize> = parts[phase % parts.len()].iter().copied().collect();
        let (mut draws, mut kept) = (0, 0);
        while !missing.is_empty() {
            let v = rng.gen_range(0..n);
            draws += 1;
            if bipartition[v] == part {
                missing.remove(&v);
                kept += 1;
                out.schedule.steps.push(Target::Site(v));
            }
        }
        out.draws_per_phase.push(draws);
        out.kept_per_phase.push(kept);
        out.phase_ends.push(out.schedule.len());
    }
    out
}

/// Draws uniform sites, stopping just before the first draw equal or
/// adjacent to an already kept site. The kept sites form an independent set.
pub fn birthday_draw(graph: &SiteGraph, rng: &mut impl Rng) -> Vec<usize> {
    let n = graph.n_sites();
    let mut kept = Vec::new();
    let mut blocked = vec![false; n];
    if n == 0 {
        return kept;
    }
    loop {
        let v = rng.gen_range(0..n);
        if blocked[v] {
            return kept;
        }
        kept.push(v);
        blocked[v] = true;
        for &w in graph.neighbors(v) {
            blocked[w] = true;
        }
    }
}

pub fn birthday_thinning(graph: &SiteGraph, seed: u64) -> Vec<usize> {
    birthday_draw(graph, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Exact law of the kept set (as a sorted site list) of `birthday_draw`.
pub fn birthday_set_distribution(graph: &SiteGraph) -> Vec<(Vec<usize>, f64)> {
    fn walk(graph: &SiteGraph, kept: &mut Vec<usize>, blocked: &[u32], p: f64, acc: &mut BTreeMap<Vec<usize>, f64>) {
        let n = graph.n_sites();
        let n_blocked = blocked.iter().filter(|&&b| b > 0).count();
        if n_blocked > 0 {
            let mut key = kept.clone();
            key.sort_unstable();
            *acc.entry(key).or_insert(0.0) += p * n_blocked as f64 / n as f64;
        }
        for v in 0..n {
            if blocked[v] > 0 {
                continue;
            }
            let mut next = blocked.to_vec();
            next[v] += 1;
            for &w in graph.neighbors(v) {
                next[w] += 1;
            }
            kept.push(v);
            walk(graph, kept, &next, p / n as f64, acc);
            kept.pop();
        }
    }
    let mut acc = BTreeMap::new();
    if graph.n_sites() > 0 {
        walk(graph, &mut Vec::new(), &vec![0; graph.n_sites()], 1.0, &mut acc);
    }
    acc.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommuteReport {
    /// Worst TV between the two outputs over all point-mass starts.
    pub max_tv: f64,
    pub equal: bool,
    /// Whether the schedules are related by swapping updates of distinct
    /// non-adjacent sites.
    pub related_by_commutations: bool,
}

/// Two site words are equal up to commuting non-adjacent letters iff their
/// projections onto every dependent pair `{u, w}` (u = w or u ∼ w) agree.
fn related_by_commutations(graph: &SiteGraph, a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let n = graph.n_sites();
    for u in 0..n {
        for w in u..n {
            if u != w && !graph.are_adjacent(u, w) {
                continue;
            }
            let pa = a.iter().filter(|&&x| x == u || x == w);
            let pb = b.iter().filter(|&&x| x == u || x == w);
            if !pa.eq(pb) {
                return false;
            }
        }
    }
    true
}

pub fn commute_check(model: &ExactModel, a: &Schedule, b: &Schedule) -> Result<CommuteReport> {
    let mut max_tv: f64 = 0.0;
    for i in 0..model.space().len() {
        let start = model.point_mass_index(i);
        let da = model.apply_schedule(&start, a)?;
        let db = model.apply_schedule(&start, b)?;
        max_tv = max_tv.max(tv_distance(&da, &db)?);
    }
    let related = match (a.site_sequence(), b.site_sequence()) {
        (Some(x), Some(y)) => related_by_commutations(model.system().graph(), &x, &y),
        _ => false,
    };
    Ok(CommuteReport { max_tv, equal: max_tv <= EQ_TOL, related_by_commutations: related })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_ising;

    #[test]
    fn random_schedule_basics() {
        assert!(random_schedule(4, 0, 1).is_empty());
        assert!(random_schedule(1, 9, 1).steps.iter().all(|t| *t == Target::Site(0)));
        assert_eq!(random_schedule(5, 20, 3), random_schedule(5, 20, 3));
    }

    #[test]
    fn systematic_and_alternating() {
        assert_eq!(systematic_schedule(&[0, 1, 2], 1).unwrap().site_sequence().unwrap(), vec![0, 1, 2]);
        assert_eq!(systematic_schedule(&[2, 1, 0], 2).unwrap().site_sequence().unwrap(), vec![2, 1, 0, 2, 1, 0]);
        assert!(systematic_schedule(&[0, 0, 2], 1).is_err());

        let c4 = build_graph(&GraphFamily::Cycle { n: 4 }).unwrap();
        let s = alternating_schedule(c4.bipartition().unwrap(), 2);
        assert_eq!(s.site_sequence().unwrap(), vec![0, 2, 1, 3, 0, 2, 1, 3]);
        let p3 = build_graph(&GraphFamily::Path { n: 3 }).unwrap();
        assert_eq!(alternating_schedule(p3.bipartition().unwrap(), 1).site_sequence().unwrap(), vec![0, 2, 1]);
        let c3 = build_graph(&GraphFamily::Cycle { n: 3 }).unwrap();
        assert!(ScheduleSpec::Alternating { rounds: 1 }.realize(&c3).is_err());
    }

    #[test]
    fn censoring() {
        let s = Schedule::sites(&[5, 6, 7, 8], "t");
        assert_eq!(censor(&s, &[true; 4]).unwrap(), s);
        assert!(censor(&s, &[false; 4]).unwrap().is_empty());
        assert_eq!(censor(&s, &[true, false, true, false]).unwrap().site_sequence().unwrap(), vec![5, 7]);
        assert!(censor(&s, &[true]).is_err());
        assert_eq!(censor_to_blocks(&s, &[5, 6, 7, 8]), s);
        assert!(censor_to_blocks(&s, &[]).is_empty());
    }

    #[test]
    fn json_lines_round_trip() {
        let s = Schedule::new(vec![Target::Site(3), Target::Block(vec![0, 1])], "mixed");
        let text = s.to_json_lines();
        assert_eq!(text, "{\"site\":3}\n{\"block\":[0,1]}\n");
        assert_eq!(Schedule::from_json_lines(&text, "mixed").unwrap(), s);
    }

    #[test]
    fn global_blocks() {
        let s = global_block_schedule(1, 6, 2, &[0]).unwrap();
        assert_eq!(s.steps, vec![Target::Block(vec![0, 1]), Target::Block(vec![3, 4])]);
        let s = global_block_schedule(1, 6, 2, &[1]).unwrap();
        assert_eq!(s.steps, vec![Target::Block(vec![1, 2]), Target::Block(vec![4, 5])]);
        let layer = global_block_layer(2, 6, 2, &[0, 0]).unwrap();
        assert_eq!(layer.len(), 4);
        assert!(layer.iter().all(|b| b.len() == 4));
        assert!(global_block_layer(1, 7, 2, &[0]).is_err());
        assert!(global_block_layer(1, 6, 2, &[3]).is_err());

        // Each site is covered by ℓ of the ℓ+1 offsets.
        let mut cover = [0; 6];
        for j in torus_offsets(1, 2) {
            for b in global_block_layer(1, 6, 2, &j).unwrap() {
                for v in b {
                    cover[v] += 1;
                }
            }
        }
        assert_eq!(cover, [2; 6]);
    }

    #[test]
    fn parity_phases_n2() {
        let p = alternating_parity_phases(&[0, 1], 5, 6);
        assert_eq!(p.phase_ends, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(p.schedule.site_sequence().unwrap(), vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn birthday_basics() {
        let k5 = build_graph(&GraphFamily::Complete { n: 5 }).unwrap();
        for seed in 0..20 {
            assert_eq!(birthday_thinning(&k5, seed).len(), 1);
        }
        let e = build_graph(&GraphFamily::Edgeless { n: 6 }).unwrap();
        for seed in 0..20 {
            let kept = birthday_thinning(&e, seed);
            let set: BTreeSet<_> = kept.iter().collect();
            assert_eq!(set.len(), kept.len());
        }
        let law = birthday_set_distribution(&build_graph(&GraphFamily::Path { n: 3 }).unwrap());
        let total: f64 = law.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // {1} blocks everything: P = 1/3. {0,2}: 2 orders, 1/9 each, then stop surely.
        let get = |s: &[usize]| law.iter().find(|(k, _)| k == s).map(|(_, p)| *p).unwrap();
        assert!((get(&[1]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((get(&[0, 2]) - 2.0 / 9.0).abs() < 1e-12);
        assert!((get(&[0]) - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn commutation() {
        let m = ExactModel::new(build_ising(build_graph(&GraphFamily::Cycle { n: 4 }).unwrap(), 0.5, 0.0)).unwrap();
        let r = commute_check(&m, &Schedule::sites(&[0, 2], "a"), &Schedule::sites(&[2, 0], "b")).unwrap();
        assert!(r.equal && r.related_by_commutations);
        let r = commute_check(&m, &Schedule::sites(&[0, 1], "a"), &Schedule::sites(&[1, 0], "b")).unwrap();
        assert!(!r.equal && !r.related_by_commutations);
        assert!(r.max_tv > 0.01);
    }
}

//! Bit-packed Monte Carlo for two-spin systems: top/bottom grand coupling,
//! coalescence, paired-seed censoring comparisons and mixing-time scaling.
//!
//! Total variation is not estimated at this scale. Coalescence times are
//! upper-bound samples for mixing, and censoring is compared through an
//! increasing statistic.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::system::{Configuration, Constraint, GibbsSystem, SiteGraph};

/// Configuration of a two-spin system, one bit per site.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeState {
    words: Vec<u64>,
    n: usize,
}

impl LatticeState {
    pub fn uniform(n: usize, spin: bool) -> Self {
        let mut s = Self { words: vec![if spin { u64::MAX } else { 0 }; n.div_ceil(64)], n };
        s.clear_tail();
        s
    }

    fn clear_tail(&mut self) {
        if self.n % 64 != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (self.n % 64)) - 1;
            }
        }
    }

    pub fn from_configuration(config: &Configuration) -> Result<Self> {
        let mut s = Self::uniform(config.len(), false);
        for (v, &x) in config.spins().iter().enumerate() {
            match x {
                0 => {}
                1 => s.set(v, true),
                _ => return Err(Error::Invalid(format!("site {v} has spin {x}; lattice states are two-spin"))),
            }
        }
        Ok(s)
    }

    pub fn to_configuration(&self) -> Configuration {
        Configuration((0..self.n).map(|v| self.get(v) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, v: usize) -> bool {
        self.words[v / 64] >> (v % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, v: usize, spin: bool) {
        let bit = 1u64 << (v % 64);
        if spin {
            self.words[v / 64] |= bit;
        } else {
            self.words[v / 64] &= !bit;
        }
    }

    pub fn ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `2·(#spin-1 sites)/n − 1`: the Ising magnetization, increasing in the
    /// monotone order for any two-spin system.
    pub fn magnetization(&self) -> f64 {
        2.0 * self.ones() as f64 / self.n as f64 - 1.0
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    /// Coordinatewise `self ≥ other`.
    pub fn dominates(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| b & !a == 0)
    }
}

/// Precomputed local weights of a two-spin system for fast conditionals.
#[derive(Clone, Debug)]
pub struct McSystem {
    graph: SiteGraph,
    /// `site[v][s]`, by spin index.
    site: Vec<[f64; 2]>,
    /// Per site, per neighbour: `pair[s][t]` with `s` at the site and `t` at
    /// the neighbour, by spin index.
    pair: Vec<Vec<[[f64; 2]; 2]>>,
    /// Per site: which spin index carries label 1 (hard-core occupancy).
    occupied: Vec<u8>,
    hardcore: bool,
}

impl McSystem {
    pub fn new(system: &GibbsSystem) -> Result<Self> {
        if system.n_spins() != 2 {
            return Err(Error::Model("Monte Carlo engine handles two-spin systems only".into()));
        }
        if !system.factors().is_empty() {
            return Err(Error::Model("Monte Carlo engine does not support extra factors".into()));
        }
        let graph = system.graph().clone();
        let n = graph.n_sites();
        let site = (0..n)
            .map(|v| [system.site_weight(v, system.label_at(v, 0)), system.site_weight(v, system.label_at(v, 1))])
            .collect();
        let pair = (0..n)
            .map(|v| {
                graph
                    .neighbors(v)
                    .iter()
                    .map(|&w| {
                        let mut t = [[0.0; 2]; 2];
                        for (s, row) in t.iter_mut().enumerate() {
                            for (r, x) in row.iter_mut().enumerate() {
                                *x = system.pair_weight(system.label_at(v, s as u8), system.label_at(w, r as u8));
                            }
                        }
                        t
                    })
                    .collect()
            })
            .collect();
        let occupied = (0..n).map(|v| if system.label_at(v, 1) == 1 { 1 } else { 0 }).collect();
        Ok(Self { graph, site, pair, occupied, hardcore: system.constraint() == Constraint::Hardcore })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Self::new(&spec.build()?)
    }

    pub fn n_sites(&self) -> usize {
        self.graph.n_sites()
    }

    pub fn graph(&self) -> &SiteGraph {
        &self.graph
    }

    /// Conditional probability that `v` takes spin index 0.
    pub fn prob_zero(&self, state: &LatticeState, v: usize) -> f64 {
        let mut w = self.site[v];
        for (i, &nb) in self.graph.neighbors(v).iter().enumerate() {
            let t = state.get(nb) as usize;
            w[0] *= self.pair[v][i][0][t];
            w[1] *= self.pair[v][i][1][t];
            if self.hardcore && (t as u8) == self.occupied[nb] {
                w[self.occupied[v] as usize] = 0.0;
            }
        }
        w[0] / (w[0] + w[1])
    }

    pub fn top(&self) -> LatticeState {
        LatticeState::uniform(self.n_sites(), true)
    }

    pub fn bottom(&self) -> LatticeState {
        LatticeState::uniform(self.n_sites(), false)
    }

    /// Heat-bath update of one chain by inverse CDF: spin 0 iff `u < P(0)`.
    #[inline]
    pub fn update(&self, state: &mut LatticeState, v: usize, u: f64) {
        let spin = u >= self.prob_zero(state, v);
        state.set(v, spin);
    }
}

/// Both chains update `site` with the same uniform `u`.
pub fn coupled_update(system: &McSystem, top: &mut LatticeState, bottom: &mut LatticeState, site: usize, u: f64) {
    system.update(top, site, u);
    system.update(bottom, site, u);
}

/// Per-replica stream keyed by `(seed, replica)`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// How update sites are produced at scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SiteOrder {
    RandomScan,
    /// Cycles through the given order (identity when absent).
    Systematic {
        #[serde(default)]
        permutation: Option<Vec<usize>>,
    },
    /// Part 0 ascending, then part 1.
    Alternating,
}

impl SiteOrder {
    fn sequence(&self, graph: &SiteGraph) -> Result<Option<Vec<usize>>> {
        match self {
            SiteOrder::RandomScan => Ok(None),
            SiteOrder::Systematic { permutation } => {
                let p = permutation.clone().unwrap_or_else(|| (0..graph.n_sites()).collect());
                crate::schedules::systematic_schedule(&p, 1)?;
                if p.len() != graph.n_sites() {
                    return Err(Error::Invalid("permutation length differs from site count".into()));
                }
                Ok(Some(p))
            }
            SiteOrder::Alternating => {
                let parts = graph
                    .bipartition()
                    .ok_or_else(|| Error::Invalid("alternating order needs a bipartite graph".into()))?;
                Ok(Some(crate::schedules::parity_order(parts).concat()))
            }
        }
    }
}

/// Endless `(site, uniform)` stream for one replica.
struct Draws {
    rng: ChaCha8Rng,
    order: Option<Vec<usize>>,
    n: usize,
    step: usize,
}

impl Draws {
    fn new(order: Option<Vec<usize>>, n: usize, seed: u64, replica: u64) -> Self {
        Self { rng: replica_rng(seed, replica), order, n, step: 0 }
    }

    #[inline]
    fn next(&mut self) -> (usize, f64) {
        let v = match &self.order {
            None => self.rng.gen_range(0..self.n),
            Some(o) => o[self.step % o.len()],
        };
        self.step += 1;
        (v, self.rng.gen::<f64>())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub step: u64,
    pub hamming: usize,
    pub mag_top: f64,
    pub mag_bottom: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingTrajectory {
    pub seed: u64,
    pub replica: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub coalescence: Option<u64>,
    pub max_steps: u64,
}

/// Runs the top and bottom chains with shared randomness until they meet or
/// `max_steps` updates have been made. Records a checkpoint every
/// `checkpoint_every` updates (0 disables) and at coalescence. Any site where
/// the top chain falls below the bottom chain aborts with `OrderViolation`.
pub fn simulate_coalescence(
    system: &McSystem,
    order: &SiteOrder,
    seed: u64,
    replica: u64,
    max_steps: u64,
    checkpoint_every: u64,
) -> Result<CouplingTrajectory> {
    let n = system.n_sites();
    let mut draws = Draws::new(order.sequence(&system.graph)?, n, seed, replica);
    let mut top = system.top();
    let mut bottom = system.bottom();
    let mut diff = top.hamming(&bottom);
    let record = |step, top: &LatticeState, bottom: &LatticeState, diff| Checkpoint {
        step,
        hamming: diff,
        mag_top: top.magnetization(),
        mag_bottom: bottom.magnetization(),
    };
    let mut checkpoints = vec![record(0, &top, &bottom, diff)];
    let mut coalescence = (diff == 0).then_some(0);
    let mut step = 0;
    while coalescence.is_none() && step < max_steps {
        let (v, u) = draws.next();
        let before = top.get(v) != bottom.get(v);
        coupled_update(system, &mut top, &mut bottom, v, u);
        step += 1;
        if bottom.get(v) && !top.get(v) {
            return Err(Error::OrderViolation { step, site: v });
        }
        let after = top.get(v) != bottom.get(v);
        diff = diff + after as usize - before as usize;
        if diff == 0 {
            coalescence = Some(step);
        }
        if diff == 0 || (checkpoint_every > 0 && step % checkpoint_every == 0) {
            checkpoints.push(record(step, &top, &bottom, diff));
        }
    }
    Ok(CouplingTrajectory { seed, replica, checkpoints, coalescence, max_steps })
}

/// Coupled chains run for `steps` updates, checking order after every one.
/// Returns the number of updates performed.
pub fn order_preservation_run(system: &McSystem, seed: u64, steps: u64) -> Result<u64> {
    let mut draws = Draws::new(None, system.n_sites(), seed, 0);
    let mut top = system.top();
    let mut bottom = system.bottom();
    for step in 1..=steps {
        let (v, u) = draws.next();
        coupled_update(system, &mut top, &mut bottom, v, u);
        if bottom.get(v) && !top.get(v) {
            return Err(Error::OrderViolation { step, site: v });
        }
    }
    debug_assert!(top.dominates(&bottom));
    Ok(steps)
}

/// Runs the top chain through a fixed site sequence for each replica and
/// returns the final states.
pub fn top_chain_samples(system: &McSystem, sites: &[usize], seed: u64, replicas: u64) -> Vec<LatticeState> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let mut s = system.top();
            for &v in sites {
                system.update(&mut s, v, rng.gen::<f64>());
            }
            s
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of `counts` against `probs`. Cells with zero
/// expected mass are dropped unless observed, in which case `p = 0`.
pub fn chi_square_test(counts: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if counts.len() != probs.len() {
        return Err(Error::Invalid("counts and probabilities differ in length".into()));
    }
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells: usize = 0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            if c > 0 {
                return Ok(ChiSquare { statistic: f64::INFINITY, dof: 0, p_value: 0.0 });
            }
            continue;
        }
        let e = p * total as f64;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(ChiSquare { statistic: stat, dof, p_value: 1.0 - dist.cdf(stat) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    Magnetization,
}

impl Statistic {
    pub fn eval(&self, s: &LatticeState) -> f64 {
        match self {
            Statistic::Magnetization => s.magnetization(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensoringComparison {
    pub replicas: u64,
    pub length: usize,
    pub kept: usize,
    pub full_mean: f64,
    pub full_se: f64,
    pub censored_mean: f64,
    pub censored_se: f64,
    /// Mean of the paired differences censored − full, and its standard error.
    pub diff_mean: f64,
    pub diff_se: f64,
    /// `diff_mean / diff_se` (0 when every pair agrees).
    pub z: f64,
    /// True when the censored mean falls below the full mean by more than 4σ.
    pub violation: bool,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Paired runs from the top state: the full schedule and the same draws
/// with masked positions skipped. Replica `r` uses stream `(seed, r)`.
pub fn empirical_censoring_comparison(
    system: &McSystem,
    order: &SiteOrder,
    mask: &[bool],
    seed: u64,
    replicas: u64,
    statistic: Statistic,
) -> Result<CensoringComparison> {
    let seq = order.sequence(&system.graph)?;
    let n = system.n_sites();
    let pairs: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut draws = Draws::new(seq.clone(), n, seed, r);
            let mut full = system.top();
            let mut cens = system.top();
            for &keep in mask {
                let (v, u) = draws.next();
                system.update(&mut full, v, u);
                if keep {
                    system.update(&mut cens, v, u);
                }
            }
            (statistic.eval(&full), statistic.eval(&cens))
        })
        .collect();
    let full: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cens: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
    let (full_mean, full_se) = mean_se(&full);
    let (censored_mean, censored_se) = mean_se(&cens);
    let (diff_mean, diff_se) = mean_se(&diffs);
    let z = if diff_se > 0.0 { diff_mean / diff_se } else { 0.0 };
    Ok(CensoringComparison {
        replicas,
        length: mask.len(),
        kept: mask.iter().filter(|&&m| m).count(),
        full_mean,
        full_se,
        censored_mean,
        censored_se,
        diff_mean,
        diff_se,
        z,
        violation: diff_mean < -4.0 * diff_se,
    })
}

/// Mask of `length` positions keeping each independently with probability
/// `keep`, from its own stream.
pub fn random_mask(length: usize, keep: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..length).map(|_| rng.gen::<f64>() < keep).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub median_steps: f64,
    /// `median / (n ln n)`.
    pub ratio: f64,
    /// `median / n`.
    pub ratio_linear: f64,
    pub censored: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Median coalescence time for each system of a growing family. Runs that
/// hit `max_steps` count as `max_steps` and are tallied in `censored`.
pub fn estimate_mixing_scaling(
    family: &[ModelSpec],
    order: &SiteOrder,
    seed: u64,
    replicas: u64,
    max_steps: u64,
) -> Result<ScalingTable> {
    let mut rows = Vec::new();
    for spec in family {
        let system = McSystem::from_spec(spec)?;
        let n = system.n_sites();
        let times = (0..replicas)
            .into_par_iter()
            .map(|r| simulate_coalescence(&system, order, seed, r, max_steps, 0))
            .collect::<Result<Vec<_>>>()?;
        let censored = times.iter().filter(|t| t.coalescence.is_none()).count();
        let mut steps: Vec<f64> = times.iter().map(|t| t.coalescence.unwrap_or(max_steps) as f64).collect();
        let med = median(&mut steps);
        let nf = n as f64;
        rows.push(ScalingRow {
            n,
            median_steps: med,
            ratio: if n > 1 { med / (nf * nf.ln()) } else { f64::NAN },
            ratio_linear: med / nf,
            censored,
        });
    }
    let ratio_min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let ratio_max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingTable { rows, ratio_min, ratio_max })
}

pub fn trajectories_csv(trajectories: &[CouplingTrajectory]) -> String {
    let mut out = String::from("seed,replica,step,hamming,mag_top,mag_bottom\n");
    for t in trajectories {
        for c in &t.checkpoints {
            writeln!(out, "{},{},{},{},{},{}", t.seed, t.replica, c.step, c.hamming, c.mag_top, c.mag_bottom).unwrap();
        }
    }
    out
}

pub fn scaling_csv(table: &ScalingTable) -> String {
    let mut out = String::from("n,median_steps,ratio\n");
    for r in &table.rows {
        writeln!(out, "{},{},{}", r.n, r.median_steps, r.ratio).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_graph, build_hardcore_bipartite, build_ising, GraphFamily};

    fn ising(fam: GraphFamily, beta: f64) -> McSystem {
        McSystem::new(&build_ising(build_graph(&fam).unwrap(), beta, 0.0)).unwrap()
    }

    #[test]
    fn lattice_round_trip() {
        let c = Configuration((0..130).map(|v| (v % 3 == 0) as u8).collect());
        let s = LatticeState::from_configuration(&c).unwrap();
        assert_eq!(s.to_configuration(), c);
        assert_eq!(s.ones(), 44);
        let top = LatticeState::uniform(130, true);
        assert_eq!(top.ones(), 130);
        assert!(top.dominates(&s) && !s.dominates(&top));
        assert_eq!(top.hamming(&s), 86);
        assert!(LatticeState::from_configuration(&Configuration(vec![2])).is_err());
    }

    #[test]
    fn conditional_matches_exact_system() {
        let sys = build_ising(build_graph(&GraphFamily::Cycle { n: 5 }).unwrap(), 0.7, 0.0);
        let mc = McSystem::new(&sys).unwrap();
        let c = Configuration(vec![1, 0, 1, 1, 0]);
        let s = LatticeState::from_configuration(&c).unwrap();
        for v in 0..5 {
            let p = sys.conditional_spin_distribution(&c, v).unwrap();
            assert!((mc.prob_zero(&s, v) - p[0]).abs() < 1e-12);
        }
        let hc = build_hardcore_bipartite(build_graph(&GraphFamily::Cycle { n: 4 }).unwrap(), 1.5).unwrap();
        let mc = McSystem::new(&hc).unwrap();
        let c = hc.top();
        let s = LatticeState::from_configuration(&c).unwrap();
        for v in 0..4 {
            let p = hc.conditional_spin_distribution(&c, v).unwrap();
            assert!((mc.prob_zero(&s, v) - p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_update_thresholds() {
        let m = ising(GraphFamily::Path { n: 3 }, 0.5);
        let mut top = m.top();
        let mut bottom = m.bottom();
        assert!((m.prob_zero(&top, 1) - 0.1192).abs() < 1e-4);
        assert!((m.prob_zero(&bottom, 1) - 0.8808).abs() < 1e-4);
        coupled_update(&m, &mut top, &mut bottom, 1, 0.5);
        assert!(top.get(1) && !bottom.get(1));

        let m = ising(GraphFamily::Path { n: 3 }, 0.0);
        let (mut a, mut b) = (m.top(), m.bottom());
        coupled_update(&m, &mut a, &mut b, 0, 0.3);
        assert_eq!(a.get(0), b.get(0));
    }

    #[test]
    fn zero_beta_alternating_coalesces_in_one_round() {
        let m = ising(GraphFamily::Torus { d: 2, n: 4 }, 0.0);
        let t = simulate_coalescence(&m, &SiteOrder::Alternating, 1, 0, 1000, 1).unwrap();
        assert_eq!(t.coalescence, Some(16));
        assert!(t.checkpoints.windows(2).all(|w| w[0].hamming >= w[1].hamming));
    }

    #[test]
    fn trajectories_replay() {
        let m = ising(GraphFamily::Torus { d: 2, n: 8 }, 0.3);
        let a = simulate_coalescence(&m, &SiteOrder::RandomScan, 11, 2, 100_000, 64).unwrap();
        let b = simulate_coalescence(&m, &SiteOrder::RandomScan, 11, 2, 100_000, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(trajectories_csv(&[a.clone()]), trajectories_csv(&[b]));
        assert_eq!(a.checkpoints.last().unwrap().hamming, 0);
    }

    #[test]
    fn keep_all_mask_is_identical() {
        let m = ising(GraphFamily::Cycle { n: 10 }, 0.4);
        let r =
            empirical_censoring_comparison(&m, &SiteOrder::RandomScan, &[true; 40], 3, 50, Statistic::Magnetization)
                .unwrap();
        assert_eq!(r.diff_mean, 0.0);
        assert_eq!(r.full_mean, r.censored_mean);
        assert!(!r.violation);
    }

    #[test]
    fn chi_square_basics() {
        let r = chi_square_test(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(chi_square_test(&[1, 0], &[0.0, 1.0]).unwrap().p_value, 0.0);
    }
}

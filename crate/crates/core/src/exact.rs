//! Exact propagation of distributions over an enumerated `Ω`.
//!
//! Everything here is a pure function of its inputs: single-site and block
//! heat-bath updates, schedule application, total variation, likelihood-ratio
//! and stochastic-dominance certification, and first-hitting mixing times.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::FlowNetwork;
use crate::schedules::{birthday_set_distribution, global_block_layer, torus_offsets, Schedule, ScheduleSpec, Target};
use crate::system::{
    enumerate_states_with_budget, stationary_distribution, Configuration, GibbsSystem, StateSpace, DEFAULT_ENUM_BUDGET,
    EQ_TOL, INEQ_TOL,
};

/// Dense probability vector indexed by a `StateSpace`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistVector {
    probs: Vec<f64>,
    space_id: u64,
}

impl DistVector {
    pub(crate) fn from_raw(probs: Vec<f64>, space_id: u64) -> Self {
        Self { probs, space_id }
    }

    /// Validated constructor: entries nonnegative, sum 1 within `EQ_TOL`.
    pub fn new(probs: Vec<f64>, space: &StateSpace) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(Error::Invalid(format!("expected {} probabilities, got {}", space.len(), probs.len())));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Invalid("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > EQ_TOL {
            return Err(Error::Invalid(format!("probabilities sum to {sum}")));
        }
        Ok(Self { probs, space_id: space.id() })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: Vec<f64>, space: &StateSpace) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Invalid("weights must be nonnegative with positive sum".into()));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect(), space)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn space_id(&self) -> u64 {
        self.space_id
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.space_id != other.space_id || self.probs.len() != other.probs.len() {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        Self { probs: vec![0.0; self.probs.len()], space_id: self.space_id }
    }

    fn add_scaled(&mut self, other: &Self, w: f64) {
        for (a, b) in self.probs.iter_mut().zip(&other.probs) {
            *a += w * b;
        }
    }
}

/// Total variation `½ Σ |μ − ν|`.
pub fn tv_distance(a: &DistVector, b: &DistVector) -> Result<f64> {
    a.check_same(b)?;
    Ok(0.5 * a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Weighted mixture of distributions on one space.
pub fn mixture(parts: &[(DistVector, f64)]) -> Result<DistVector> {
    let (first, _) = parts.first().ok_or_else(|| Error::Invalid("empty mixture".into()))?;
    let total: f64 = parts.iter().map(|(_, w)| w).sum();
    let mut out = first.zeros_like();
    for (d, w) in parts {
        first.check_same(d)?;
        out.add_scaled(d, w / total);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Deterministic,
    /// Random choices averaged into a kernel applied step by step.
    KernelAveraging,
    /// Finite scenario set enumerated with exact probabilities.
    ScenarioEnumeration,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RatioCertificate {
    Ok,
    Violation { lower: Configuration, upper: Configuration, ratio_lower: f64, ratio_upper: f64 },
}

impl RatioCertificate {
    pub fn is_ok(&self) -> bool {
        matches!(self, RatioCertificate::Ok)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Dominates,
    Fails,
}

/// Outcome of testing `lower ⪯ upper`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceCertificate {
    pub verdict: Verdict,
    /// Value of the monotone-coupling max-flow (1 iff dominance).
    pub flow: f64,
    /// `(lower state, upper state, mass)` with lower ≤ upper; present on success.
    pub coupling: Vec<(usize, usize, f64)>,
    /// Up-set `U` with `lower(U) > upper(U)`; present on failure.
    pub violating_upset: Option<Vec<usize>>,
    /// `lower(U) − upper(U)` for the reported up-set.
    pub upset_gap: f64,
}

impl DominanceCertificate {
    pub fn dominates(&self) -> bool {
        self.verdict == Verdict::Dominates
    }
}

/// Starting point of a mixing-time computation.
#[derive(Clone, Debug, PartialEq)]
pub enum Start {
    Top,
    Bottom,
    State(Configuration),
    Dist(DistVector),
    /// Maximum over every point mass in `Ω`.
    Worst,
}

/// Per-step dynamics for mixing-time computations.
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    /// Cycles through the targets; each target counts as one update.
    Periodic(Vec<Target>),
    /// Uniform random single-site updates, averaged into one kernel step.
    RandomScan,
    /// Cycles through groups of commuting site updates performed at once. A
    /// group of `m` sites counts as `m` updates and the distance is only
    /// observed between groups.
    Phases(Vec<Vec<usize>>),
    /// Averaged block dynamics; each step counts as one block update.
    Blocks(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingTime {
    /// Least step count with distance ≤ ε, `None` when the cap was hit.
    pub steps: Option<usize>,
    pub cap: usize,
    pub final_tv: f64,
    /// `(step, tv)` at every observation point, starting from step 0.
    pub curve: Vec<(usize, f64)>,
}

/// A system together with its enumerated space and stationary law.
#[derive(Debug)]
pub struct ExactModel {
    system: GibbsSystem,
    space: StateSpace,
    pi: DistVector,
}

impl ExactModel {
    pub fn new(system: GibbsSystem) -> Result<Self> {
        Self::with_budget(system, DEFAULT_ENUM_BUDGET)
    }

    pub fn with_budget(system: GibbsSystem, budget: u128) -> Result<Self> {
        let space = enumerate_states_with_budget(&system, budget)?;
        let pi = stationary_distribution(&system, &space)?;
        Ok(Self { system, space, pi })
    }

    pub fn system(&self) -> &GibbsSystem {
        &self.system
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn pi(&self) -> &DistVector {
        &self.pi
    }

    pub fn n_sites(&self) -> usize {
        self.space.n_sites()
    }

    pub fn point_mass(&self, config: &Configuration) -> Result<DistVector> {
        let i = self.space.index_of(config).ok_or(Error::NotInSpace)?;
        Ok(self.point_mass_index(i))
    }

    pub fn point_mass_index(&self, i: usize) -> DistVector {
        let mut d = self.pi.zeros_like();
        d.probs[i] = 1.0;
        d
    }

    pub fn top(&self) -> Result<DistVector> {
        self.space
            .top()
            .map(|i| self.point_mass_index(i))
            .ok_or_else(|| Error::Model("top configuration is not in Ω".into()))
    }

    pub fn bottom(&self) -> Result<DistVector> {
        self.space
            .bottom()
            .map(|i| self.point_mass_index(i))
            .ok_or_else(|| Error::Model("bottom configuration is not in Ω".into()))
    }

    /// `μ ∝ π·g`; with `g` increasing this is a start whose likelihood ratio
    /// is increasing.
    pub fn tilted(&self, g: impl Fn(&Configuration) -> f64) -> Result<DistVector> {
        let w = self.space.states().iter().zip(&self.pi.probs).map(|(c, p)| p * g(c)).collect();
        DistVector::from_weights(w, &self.space)
    }

    pub fn tv_to_pi(&self, d: &DistVector) -> Result<f64> {
        tv_distance(d, &self.pi)
    }

    fn check(&self, d: &DistVector) -> Result<()> {
        if d.space_id != self.space.id() {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// Heat-bath update at `v`: `μ_v(σ) = π(σ) μ(σ_v^•) / π(σ_v^•)`.
    pub fn update(&self, dist: &DistVector, v: usize) -> DistVector {
        let fibre = self.space.fibre_of(v);
        let m = self.space.fibre_count(v);
        let mut mass = vec![0.0; m];
        let mut z = vec![0.0; m];
        for (i, &f) in fibre.iter().enumerate() {
            mass[f as usize] += dist.probs[i];
            z[f as usize] += self.pi.probs[i];
        }
        let probs =
            fibre.iter().enumerate().map(|(i, &f)| self.pi.probs[i] * mass[f as usize] / z[f as usize]).collect();
        DistVector { probs, space_id: dist.space_id }
    }

    /// Block update: each state's mass is redistributed over its exterior
    /// class in proportion to `π`.
    pub fn block_update_dist(&self, dist: &DistVector, block: &[usize]) -> DistVector {
        if let [v] = block {
            return self.update(dist, *v);
        }
        let (class, m) = self.space.exterior_classes(block);
        let mut mass = vec![0.0; m];
        let mut z = vec![0.0; m];
        for (i, &c) in class.iter().enumerate() {
            mass[c as usize] += dist.probs[i];
            z[c as usize] += self.pi.probs[i];
        }
        let probs =
            class.iter().enumerate().map(|(i, &c)| self.pi.probs[i] * mass[c as usize] / z[c as usize]).collect();
        DistVector { probs, space_id: dist.space_id }
    }

    /// Uniform mixture over `blocks` of the block updates.
    pub fn averaged_block_step(&self, dist: &DistVector, blocks: &[Vec<usize>]) -> Result<DistVector> {
        if blocks.is_empty() {
            return Err(Error::Invalid("empty block collection".into()));
        }
        let mut out = dist.zeros_like();
        let w = 1.0 / blocks.len() as f64;
        for b in blocks {
            out.add_scaled(&self.block_update_dist(dist, b), w);
        }
        Ok(out)
    }

    /// One step of random-scan single-site dynamics as an averaged kernel.
    pub fn random_scan_step(&self, dist: &DistVector) -> DistVector {
        self.random_scan_step_on(dist, &(0..self.n_sites()).collect::<Vec<_>>(), self.n_sites())
    }

    /// A uniform draw from `n_draw` sites, of which only those in `sites`
    /// are updated (the rest are censored).
    pub fn random_scan_step_on(&self, dist: &DistVector, sites: &[usize], n_draw: usize) -> DistVector {
        let w = 1.0 / n_draw as f64;
        let mut out = dist.clone();
        for p in out.probs.iter_mut() {
            *p *= (n_draw - sites.len()) as f64 * w;
        }
        for &v in sites {
            out.add_scaled(&self.update(dist, v), w);
        }
        out
    }

    pub fn apply_target(&self, dist: &DistVector, target: &Target) -> DistVector {
        match target {
            Target::Site(v) => self.update(dist, *v),
            Target::Block(b) => self.block_update_dist(dist, b),
        }
    }

    /// Left-to-right composition of the schedule's updates.
    pub fn apply_schedule(&self, dist: &DistVector, schedule: &Schedule) -> Result<DistVector> {
        self.check(dist)?;
        schedule.validate(self.n_sites())?;
        Ok(schedule.steps.iter().fold(dist.clone(), |d, t| self.apply_target(&d, t)))
    }

    /// Exact law after a finite set of weighted scenarios.
    pub fn apply_scenarios(&self, dist: &DistVector, scenarios: &[(Schedule, f64)]) -> Result<DistVector> {
        let parts =
            scenarios.iter().map(|(s, w)| Ok((self.apply_schedule(dist, s)?, *w))).collect::<Result<Vec<_>>>()?;
        mixture(&parts)
    }

    /// Applies a schedule spec, averaging exactly over its randomness.
    pub fn apply_spec(&self, dist: &DistVector, spec: &ScheduleSpec) -> Result<(DistVector, EvalMode)> {
        self.check(dist)?;
        match spec {
            ScheduleSpec::RandomScan { length, .. } => {
                let d = (0..*length).fold(dist.clone(), |d, _| self.random_scan_step(&d));
                Ok((d, EvalMode::KernelAveraging))
            }
            ScheduleSpec::Censored { base, mask } if matches!(**base, ScheduleSpec::RandomScan { .. }) => {
                let ScheduleSpec::RandomScan { length, .. } = **base else { unreachable!() };
                if mask.len() != length {
                    return Err(Error::Invalid("mask length differs from schedule length".into()));
                }
                let kept = mask.iter().filter(|&&m| m).count();
                let d = (0..kept).fold(dist.clone(), |d, _| self.random_scan_step(&d));
                Ok((d, EvalMode::KernelAveraging))
            }
            ScheduleSpec::GlobalBlock { d, n, ell, rounds, .. } => {
                let layers = torus_offsets(*d, *ell)
                    .into_iter()
                    .map(|j| global_block_layer(*d, *n, *ell, &j))
                    .collect::<Result<Vec<_>>>()?;
                let mut cur = dist.clone();
                for _ in 0..*rounds {
                    let mut next = cur.zeros_like();
                    let w = 1.0 / layers.len() as f64;
                    for layer in &layers {
                        let after = layer.iter().fold(cur.clone(), |acc, b| self.block_update_dist(&acc, b));
                        next.add_scaled(&after, w);
                    }
                    cur = next;
                }
                Ok((cur, EvalMode::KernelAveraging))
            }
            ScheduleSpec::Birthday { rounds, permutation, .. } => {
                let scenarios = birthday_set_distribution(self.system.graph());
                let order: Vec<usize> = match permutation {
                    Some(p) => p.clone(),
                    None => (0..self.n_sites()).collect(),
                };
                let mut cur = dist.clone();
                for _ in 0..*rounds {
                    let mut next = cur.zeros_like();
                    for (set, p) in &scenarios {
                        let after =
                            order.iter().filter(|v| set.contains(v)).fold(cur.clone(), |acc, &v| self.update(&acc, v));
                        next.add_scaled(&after, *p);
                    }
                    cur = next;
                }
                Ok((cur, EvalMode::ScenarioEnumeration))
            }
            _ => {
                let schedule = spec.realize(self.system.graph())?;
                Ok((self.apply_schedule(dist, &schedule)?, EvalMode::Deterministic))
            }
        }
    }

    /// Checks `μ(σ)/π(σ) ≤ μ(τ)/π(τ)` for all comparable `σ < τ`. The
    /// tolerance is `INEQ_TOL` scaled by the larger of 1 and the ratios.
    pub fn likelihood_ratio_increasing(&self, dist: &DistVector) -> RatioCertificate {
        let ratio: Vec<f64> = dist.probs.iter().zip(&self.pi.probs).map(|(m, p)| m / p).collect();
        let n = self.space.len();
        for i in 0..n {
            for j in i + 1..n {
                if !self.space.le(i, j) {
                    continue;
                }
                let tol = INEQ_TOL * ratio[i].abs().max(ratio[j].abs()).max(1.0);
                if ratio[i] > ratio[j] + tol {
                    return RatioCertificate::Violation {
                        lower: self.space.state(i).clone(),
                        upper: self.space.state(j).clone(),
                        ratio_lower: ratio[i],
                        ratio_upper: ratio[j],
                    };
                }
            }
        }
        RatioCertificate::Ok
    }

    /// `f(σ) = max{μ(ω)/π(ω) : ω ∈ Ω, ω ≤ σ}` over all of `S^V` (0 when no
    /// such `ω`), indexed by the raw code `Σ s_v k^v`.
    pub fn monotone_extension(&self, dist: &DistVector) -> Result<Vec<f64>> {
        self.monotone_extension_with_budget(dist, DEFAULT_ENUM_BUDGET)
    }

    pub fn monotone_extension_with_budget(&self, dist: &DistVector, budget: u128) -> Result<Vec<f64>> {
        self.check(dist)?;
        let n = self.n_sites();
        let k = self.space.n_spins();
        let raw = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if raw > budget {
            return Err(Error::Budget { needed: raw, budget });
        }
        let mut f = vec![0.0; raw as usize];
        for i in 0..self.space.len() {
            f[self.space.code(i) as usize] = dist.probs[i] / self.pi.probs[i];
        }
        // Lowering one coordinate lowers the code, so an ascending sweep
        // sees every immediate predecessor first.
        for code in 0..raw as usize {
            let mut place = 1;
            for _ in 0..n {
                if (code / place) % k > 0 {
                    f[code] = f[code].max(f[code - place]);
                }
                place *= k;
            }
        }
        Ok(f)
    }

    /// Decides `lower ⪯ upper` by max-flow on the monotone-coupling network
    /// source → y (cap lower(y)) → x for y ≤ x → sink (cap upper(x)).
    pub fn stochastic_dominance(&self, lower: &DistVector, upper: &DistVector) -> Result<DominanceCertificate> {
        lower.check_same(upper)?;
        self.check(lower)?;
        let n = self.space.len();
        let left: Vec<usize> = (0..n).filter(|&i| lower.probs[i] > 0.0).collect();
        let right: Vec<usize> = (0..n).filter(|&j| upper.probs[j] > 0.0).collect();
        let s = 0;
        let t = 1 + left.len() + right.len();
        let mut net = FlowNetwork::new(t + 1);
        for (a, &i) in left.iter().enumerate() {
            net.add_edge(s, 1 + a, lower.probs[i]);
        }
        for (b, &j) in right.iter().enumerate() {
            net.add_edge(1 + left.len() + b, t, upper.probs[j]);
        }
        let mut middle = Vec::new();
        for (a, &i) in left.iter().enumerate() {
            for (b, &j) in right.iter().enumerate() {
                if self.space.le(i, j) {
                    middle.push((i, j, net.add_edge(1 + a, 1 + left.len() + b, f64::INFINITY)));
                }
            }
        }
        let flow = net.max_flow(s, t);
        let need = lower.total().min(upper.total());
        if flow >= need - INEQ_TOL {
            let coupling =
                middle.into_iter().map(|(i, j, e)| (i, j, net.flow(e))).filter(|&(_, _, m)| m > 0.0).collect();
            return Ok(DominanceCertificate {
                verdict: Verdict::Dominates,
                flow,
                coupling,
                violating_upset: None,
                upset_gap: 0.0,
            });
        }
        // Min cut: the up-closure of the source side's left nodes carries
        // more lower-mass than upper-mass.
        let reach = net.residual_reachable(s);
        let seeds: Vec<usize> = left.iter().enumerate().filter(|(a, _)| reach[1 + a]).map(|(_, &i)| i).collect();
        let upset: Vec<usize> = (0..n).filter(|&x| seeds.iter().any(|&y| self.space.le(y, x))).collect();
        let gap = upset.iter().map(|&x| lower.probs[x] - upper.probs[x]).sum();
        Ok(DominanceCertificate {
            verdict: Verdict::Fails,
            flow,
            coupling: Vec::new(),
            violating_upset: Some(upset),
            upset_gap: gap,
        })
    }

    /// Least `t` with `‖p^t(start, ·) − π‖ ≤ ε`, observed at every step (or
    /// every group for `Dynamics::Phases`). First hitting time; TV is not
    /// assumed monotone in `t`.
    pub fn mixing_time_exact(
        &self,
        dynamics: &Dynamics,
        epsilon: f64,
        start: &Start,
        cap: usize,
    ) -> Result<MixingTime> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Invalid("epsilon must lie in (0,1)".into()));
        }
        let mut dists = match start {
            Start::Top => vec![self.top()?],
            Start::Bottom => vec![self.bottom()?],
            Start::State(c) => vec![self.point_mass(c)?],
            Start::Dist(d) => {
                self.check(d)?;
                vec![d.clone()]
            }
            Start::Worst => (0..self.space.len()).map(|i| self.point_mass_index(i)).collect(),
        };
        match dynamics {
            Dynamics::Periodic(t) if t.is_empty() => return Err(Error::Invalid("dynamics has no targets".into())),
            Dynamics::Blocks(b) if b.is_empty() => return Err(Error::Invalid("dynamics has no blocks".into())),
            Dynamics::Periodic(targets) => Schedule::new(targets.clone(), "periodic").validate(self.n_sites())?,
            Dynamics::Phases(p) if p.is_empty() || p.iter().any(Vec::is_empty) => {
                return Err(Error::Invalid("phases must be nonempty".into()))
            }
            _ => {}
        }
        let worst =
            |ds: &[DistVector]| -> f64 { ds.iter().map(|d| tv_distance(d, &self.pi).unwrap()).fold(0.0, f64::max) };
        let mut tv = worst(&dists);
        let mut curve = vec![(0, tv)];
        if tv <= epsilon {
            return Ok(MixingTime { steps: Some(0), cap, final_tv: tv, curve });
        }
        let mut t = 0;
        let mut k = 0;
        while t < cap {
            let (cost, step): (usize, Box<dyn Fn(&DistVector) -> DistVector + '_>) = match dynamics {
                Dynamics::Periodic(targets) => {
                    let target = &targets[k % targets.len()];
                    (1, Box::new(move |d| self.apply_target(d, target)))
                }
                Dynamics::RandomScan => (1, Box::new(|d| self.random_scan_step(d))),
                Dynamics::Phases(groups) => {
                    let g = &groups[k % groups.len()];
                    (g.len(), Box::new(move |d| g.iter().fold(d.clone(), |acc, &v| self.update(&acc, v))))
                }
                Dynamics::Blocks(blocks) => {
                    (1, Box::new(move |d| self.averaged_block_step(d, blocks).expect("nonempty blocks")))
                }
            };
            dists = dists.iter().map(step).collect();
            t += cost;
            k += 1;
            tv = worst(&dists);
            curve.push((t, tv));
            if tv <= epsilon {
                return Ok(MixingTime { steps: Some(t), cap, final_tv: tv, curve });
            }
        }
        Ok(MixingTime { steps: None, cap, final_tv: tv, curve })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_graph, build_hardcore_bipartite, build_ising, GraphFamily};
    use crate::schedules::random_schedule;

    fn ising(fam: GraphFamily, beta: f64, h: f64) -> ExactModel {
        ExactModel::new(build_ising(build_graph(&fam).unwrap(), beta, h)).unwrap()
    }

    fn close(a: &DistVector, b: &DistVector, tol: f64) -> bool {
        tv_distance(a, b).unwrap() <= tol
    }

    #[test]
    fn point_masses() {
        let m = ising(GraphFamily::Path { n: 3 }, 0.4, 0.0);
        let top = m.top().unwrap();
        assert_eq!(top.prob(m.space().index_of(&Configuration(vec![1, 1, 1])).unwrap()), 1.0);
        let bottom = m.bottom().unwrap();
        assert_eq!(bottom.prob(0), 1.0);

        let hc =
            ExactModel::new(build_hardcore_bipartite(build_graph(&GraphFamily::Path { n: 2 }).unwrap(), 1.0).unwrap())
                .unwrap();
        // Both sites occupied: site 0 index 1, site 1 (flipped) index 0.
        assert!(matches!(hc.point_mass(&Configuration(vec![1, 0])), Err(Error::NotInSpace)));
    }

    #[test]
    fn single_site_update_reaches_pi() {
        let m = ising(GraphFamily::Path { n: 1 }, 0.0, 0.3);
        let d = DistVector::new(vec![0.9, 0.1], m.space()).unwrap();
        assert!(close(&m.update(&d, 0), m.pi(), EQ_TOL));
    }

    #[test]
    fn update_examples() {
        let m = ising(GraphFamily::Path { n: 2 }, 0.0, 0.0);
        let d = m.update(&m.top().unwrap(), 0);
        let idx = |s: [u8; 2]| m.space().index_of(&Configuration(s.to_vec())).unwrap();
        assert!((d.prob(idx([1, 1])) - 0.5).abs() < EQ_TOL);
        assert!((d.prob(idx([0, 1])) - 0.5).abs() < EQ_TOL);

        let m = ising(GraphFamily::Path { n: 2 }, 0.5, 0.0);
        let d = m.update(&m.top().unwrap(), 0);
        let e = 0.5f64.exp();
        assert!((d.prob(idx([1, 1])) - e / (e + 1.0 / e)).abs() < EQ_TOL);
        assert!((d.prob(idx([1, 1])) - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn update_is_idempotent_and_preserves_pi() {
        let m = ising(GraphFamily::Cycle { n: 4 }, 0.6, 0.2);
        let d = m.update(&m.update(&m.top().unwrap(), 1), 2);
        for v in 0..4 {
            let once = m.update(&d, v);
            assert!(close(&m.update(&once, v), &once, EQ_TOL));
            assert!(close(&m.update(m.pi(), v), m.pi(), EQ_TOL));
            assert!((once.total() - 1.0).abs() < EQ_TOL);
        }
        assert!(close(&m.block_update_dist(m.pi(), &[0, 2]), m.pi(), EQ_TOL));
    }

    #[test]
    fn block_updates() {
        let m = ising(GraphFamily::Path { n: 3 }, 0.4, 0.0);
        let top = m.top().unwrap();
        assert!(close(&m.block_update_dist(&top, &[0, 1, 2]), m.pi(), EQ_TOL));
        // block {v} agrees with update(v), bypassing the fast path.
        let (class, _) = m.space().exterior_classes(&[1]);
        assert_eq!(class.len(), 8);
        assert!(close(&m.block_update_dist(&top, &[1]), &m.update(&top, 1), EQ_TOL));

        // Brute-force conditioning of π on σ_3 = +.
        let d = m.block_update_dist(&top, &[0, 1]);
        let mut w = vec![0.0; 8];
        for (i, c) in m.space().states().iter().enumerate() {
            if c.get(2) == 1 {
                w[i] = m.system().weight(c);
            }
        }
        let z: f64 = w.iter().sum();
        for i in 0..8 {
            assert!((d.prob(i) - w[i] / z).abs() < EQ_TOL);
        }
    }

    #[test]
    fn averaged_steps() {
        let m = ising(GraphFamily::Path { n: 3 }, 0.4, 0.1);
        let top = m.top().unwrap();
        assert!(close(
            &m.averaged_block_step(&top, &[vec![0, 1]]).unwrap(),
            &m.block_update_dist(&top, &[0, 1]),
            EQ_TOL
        ));
        let singles: Vec<Vec<usize>> = (0..3).map(|v| vec![v]).collect();
        assert!(close(&m.averaged_block_step(&top, &singles).unwrap(), &m.random_scan_step(&top), EQ_TOL));
        assert!(close(&m.averaged_block_step(m.pi(), &[vec![0], vec![1, 2]]).unwrap(), m.pi(), EQ_TOL));
        assert!(m.averaged_block_step(&top, &[]).is_err());
    }

    #[test]
    fn schedules_compose() {
        let m = ising(GraphFamily::Cycle { n: 4 }, 0.5, 0.0);
        let top = m.top().unwrap();
        let empty = Schedule::new(vec![], "empty");
        assert_eq!(m.apply_schedule(&top, &empty).unwrap(), top);
        let once = Schedule::sites(&[2], "once");
        let twice = Schedule::sites(&[2, 2], "twice");
        assert!(close(&m.apply_schedule(&top, &once).unwrap(), &m.apply_schedule(&top, &twice).unwrap(), EQ_TOL));
    }

    /// Dense transition matrix of one random-scan step, built state by state
    /// from the conditional laws rather than through `update`.
    fn random_scan_matrix(m: &ExactModel) -> Vec<Vec<f64>> {
        let n = m.space().len();
        let sites = m.n_sites();
        let mut p = vec![vec![0.0; n]; n];
        for (i, c) in m.space().states().iter().enumerate() {
            for v in 0..sites {
                let cond = m.system().conditional_spin_distribution(c, v).unwrap();
                for (s, q) in cond.iter().enumerate() {
                    if *q > 0.0 {
                        let j = m.space().index_of(&c.with_spin(v, s as u8)).unwrap();
                        p[i][j] += q / sites as f64;
                    }
                }
            }
        }
        p
    }

    fn vec_mat(v: &[f64], p: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, vi) in v.iter().enumerate() {
            for (j, pij) in p[i].iter().enumerate() {
                out[j] += vi * pij;
            }
        }
        out
    }

    #[test]
    fn random_scan_matches_matrix_power() {
        let m = ising(GraphFamily::Path { n: 2 }, 0.7, 0.1);
        let p = random_scan_matrix(&m);
        let mut row = m.top().unwrap().probs().to_vec();
        let spec = ScheduleSpec::RandomScan { length: 7, seed: 0 };
        let (d, mode) = m.apply_spec(&m.top().unwrap(), &spec).unwrap();
        assert_eq!(mode, EvalMode::KernelAveraging);
        for _ in 0..7 {
            row = vec_mat(&row, &p);
        }
        for (a, b) in d.probs().iter().zip(&row) {
            assert!((a - b).abs() < EQ_TOL);
        }
    }

    #[test]
    fn random_scan_equals_scenario_average() {
        // All n^T sequences with equal weight.
        let m = ising(GraphFamily::Path { n: 3 }, 0.5, 0.0);
        let top = m.top().unwrap();
        let mut scenarios = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    scenarios.push((Schedule::sites(&[a, b, c], "enum"), 1.0));
                }
            }
        }
        let exact = m.apply_scenarios(&top, &scenarios).unwrap();
        let (kernel, _) = m.apply_spec(&top, &ScheduleSpec::RandomScan { length: 3, seed: 9 }).unwrap();
        assert!(close(&exact, &kernel, EQ_TOL));
    }

    #[test]
    fn tv_examples() {
        let m = ising(GraphFamily::Path { n: 1 }, 0.0, 0.0);
        let a = DistVector::new(vec![0.75, 0.25], m.space()).unwrap();
        let b = DistVector::new(vec![0.5, 0.5], m.space()).unwrap();
        assert!((tv_distance(&a, &b).unwrap() - 0.25).abs() < EQ_TOL);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&m.top().unwrap(), &m.bottom().unwrap()).unwrap(), 1.0);
        let other = ising(GraphFamily::Path { n: 1 }, 0.0, 0.0);
        assert!(matches!(tv_distance(&a, other.pi()), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn ratio_certificates() {
        let m = ising(GraphFamily::Path { n: 2 }, 0.3, 0.0);
        assert!(m.likelihood_ratio_increasing(&m.top().unwrap()).is_ok());
        assert!(m.likelihood_ratio_increasing(m.pi()).is_ok());
        assert!(!m.likelihood_ratio_increasing(&m.bottom().unwrap()).is_ok());
    }

    #[test]
    fn extension_examples() {
        let m = ising(GraphFamily::Path { n: 3 }, 0.3, 0.0);
        let d = m.update(&m.top().unwrap(), 1);
        let f = m.monotone_extension(&d).unwrap();
        for i in 0..m.space().len() {
            assert!((f[m.space().code(i) as usize] - d.prob(i) / m.pi().prob(i)).abs() < 1e-9);
        }
        // σ = bottom lies below every support point of δ_top: f = 0.
        let f = m.monotone_extension(&m.top().unwrap()).unwrap();
        assert_eq!(f[0], 0.0);
        assert!(m.monotone_extension_with_budget(&d, 4).is_err());
    }

    #[test]
    fn dominance_examples() {
        let m = ising(GraphFamily::Path { n: 3 }, 0.4, 0.0);
        let top = m.top().unwrap();
        let mid = m.update(&m.update(&top, 0), 1);
        let cert = m.stochastic_dominance(&mid, &top).unwrap();
        assert!(cert.dominates());
        let mass: f64 = cert.coupling.iter().map(|c| c.2).sum();
        assert!((mass - 1.0).abs() < INEQ_TOL);
        assert!(cert.coupling.iter().all(|&(i, j, _)| m.space().le(i, j)));

        let cert = m.stochastic_dominance(&top, &m.bottom().unwrap()).unwrap();
        assert_eq!(cert.verdict, Verdict::Fails);
        let upset = cert.violating_upset.unwrap();
        assert!(upset.contains(&m.space().top().unwrap()));
        assert!(!upset.contains(&m.space().bottom().unwrap()));
        assert!(cert.upset_gap > 0.0);
    }

    #[test]
    fn product_bernoulli_dominance() {
        // Two free spins; Bernoulli(q)^2 for q = 0.4 and 0.6.
        let m = ising(GraphFamily::Edgeless { n: 2 }, 0.0, 0.0);
        let law = |q: f64| {
            let w = m
                .space()
                .states()
                .iter()
                .map(|c| c.spins().iter().map(|&s| if s == 1 { q } else { 1.0 - q }).product())
                .collect();
            DistVector::from_weights(w, m.space()).unwrap()
        };
        assert!(m.stochastic_dominance(&law(0.4), &law(0.6)).unwrap().dominates());
        assert!(!m.stochastic_dominance(&law(0.6), &law(0.4)).unwrap().dominates());
    }

    #[test]
    fn mixing_time_examples() {
        let m = ising(GraphFamily::Path { n: 1 }, 0.3, 0.2);
        let t = m.mixing_time_exact(&Dynamics::RandomScan, 0.25, &Start::Top, 10).unwrap();
        assert_eq!(t.steps, Some(1));

        let m = ising(GraphFamily::Cycle { n: 5 }, 0.0, 0.0);
        let sweep: Vec<Target> = (0..5).map(Target::Site).collect();
        let t = m.mixing_time_exact(&Dynamics::Periodic(sweep), 1e-9, &Start::Top, 20).unwrap();
        assert_eq!(t.steps, Some(5));
        assert!(t.final_tv < EQ_TOL);

        let t = m.mixing_time_exact(&Dynamics::RandomScan, 1e-6, &Start::Top, 3).unwrap();
        assert_eq!(t.steps, None);
        assert!(m.mixing_time_exact(&Dynamics::RandomScan, 1.5, &Start::Top, 3).is_err());
    }

    #[test]
    fn worst_start_dominates_top_start() {
        let m = ising(GraphFamily::Path { n: 3 }, 0.4, 0.3);
        let top = m.mixing_time_exact(&Dynamics::RandomScan, 0.25, &Start::Top, 200).unwrap();
        let worst = m.mixing_time_exact(&Dynamics::RandomScan, 0.25, &Start::Worst, 200).unwrap();
        assert!(worst.steps.unwrap() >= top.steps.unwrap());
    }

    #[test]
    fn random_schedule_apply() {
        let m = ising(GraphFamily::Cycle { n: 4 }, 0.2, 0.0);
        let s = random_schedule(4, 10, 3);
        let d = m.apply_schedule(m.pi(), &s).unwrap();
        assert!(close(&d, m.pi(), EQ_TOL));
        let bad = Schedule::sites(&[7], "bad");
        assert!(m.apply_schedule(m.pi(), &bad).is_err());
    }
}

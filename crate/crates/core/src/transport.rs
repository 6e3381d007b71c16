//! Hamming/Kantorovich metrics, discrepancy influences `Φ_u(B)` and the
//! block-contraction machinery behind the O(n log n) argument.
//!
//! All per-site normalizations use `|V|`, the number of sites.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::exact::{DistVector, ExactModel};
use crate::flow;
use crate::schedules::{global_block_layer, torus_blocks, torus_offsets};
use crate::system::{Configuration, StateSpace, INEQ_TOL};

/// Largest `|supp μ|·|supp ν|` handed to the min-cost-flow solver.
pub const TRANSPORT_BUDGET: u128 = 1 << 22;

pub fn hamming(a: &Configuration, b: &Configuration) -> usize {
    assert_eq!(a.len(), b.len(), "configurations on different site sets");
    a.spins().iter().zip(b.spins()).filter(|(x, y)| x != y).count()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportPlan {
    /// `(state index, state index, mass)`.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

/// Kantorovich distance under the Hamming ground metric.
pub fn kantorovich(space: &StateSpace, d1: &DistVector, d2: &DistVector) -> Result<(f64, TransportPlan)> {
    if d1.space_id() != space.id() || d2.space_id() != space.id() {
        return Err(Error::SpaceMismatch);
    }
    let s1 = d1.probs().iter().filter(|&&p| p > 0.0).count() as u128;
    let s2 = d2.probs().iter().filter(|&&p| p > 0.0).count() as u128;
    if s1 * s2 > TRANSPORT_BUDGET {
        return Err(Error::Budget { needed: s1 * s2, budget: TRANSPORT_BUDGET });
    }
    let (cost, entries) =
        flow::transport(d1.probs(), d2.probs(), |i, j| hamming(space.state(i), space.state(j)) as f64);
    Ok((cost, TransportPlan { entries, cost }))
}

fn digits(code: usize, k: usize, len: usize) -> Vec<usize> {
    let mut c = code;
    (0..len)
        .map(|_| {
            let d = c % k;
            c /= k;
            d
        })
        .collect()
}

fn code_hamming(a: usize, b: usize, k: usize, len: usize) -> f64 {
    digits(a, k, len).iter().zip(digits(b, k, len)).filter(|(x, y)| **x != *y).count() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiWitness {
    /// A configuration attaining the maximum.
    pub sigma: Configuration,
    /// The spin written at `u`.
    pub spin: u8,
    /// Boundary assignment of `sigma` as `(site, spin)`.
    pub boundary: Vec<(usize, u8)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Influence {
    pub u: usize,
    pub block: Vec<usize>,
    /// `max ρ(U_B σ, U_B σ_u^s)`.
    pub phi: f64,
    /// `Φ − 1` for boundary sites: the extra discrepancy carried into `B`.
    pub boundary_excess: f64,
    pub witness: Option<PhiWitness>,
}

fn validate_block(model: &ExactModel, u: usize, block: &[usize]) -> Result<()> {
    let n = model.n_sites();
    if u >= n || block.is_empty() || block.iter().any(|&v| v >= n) {
        return Err(Error::Invalid(format!("site {u} or block {block:?} out of range")));
    }
    Ok(())
}

/// `Φ_u(B)` using the Markov-field property: the block law depends only on
/// the boundary assignment, so only boundary assignments are enumerated.
pub fn discrepancy_influence(model: &ExactModel, u: usize, block: &[usize]) -> Result<Influence> {
    validate_block(model, u, block)?;
    let graph = model.system().graph();
    let boundary = graph.boundary(block);
    let mk =
        |phi: f64, excess: f64, witness| Influence { u, block: block.to_vec(), phi, boundary_excess: excess, witness };
    if block.contains(&u) {
        return Ok(mk(0.0, 0.0, None));
    }
    let Some(u_pos) = boundary.iter().position(|&b| b == u) else {
        return Ok(mk(1.0, 0.0, None));
    };
    let space = model.space();
    let k = space.n_spins();
    let pi = model.pi();
    // Conditional law on B for each boundary assignment that occurs in Ω.
    let mut laws: HashMap<usize, (usize, HashMap<usize, f64>)> = HashMap::new();
    for i in 0..space.len() {
        let eta = space.restriction_code(i, &boundary);
        let inner = space.restriction_code(i, block);
        let entry = laws.entry(eta).or_insert_with(|| (i, HashMap::new()));
        *entry.1.entry(inner).or_insert(0.0) += pi.prob(i);
    }
    let place = k.pow(u_pos as u32);
    let mut etas: Vec<usize> = laws.keys().copied().collect();
    etas.sort_unstable();
    let mut best: Option<(f64, usize, u8)> = None;
    for &eta in &etas {
        let current = (eta / place) % k;
        for s in 0..k {
            if s == current {
                continue;
            }
            let other = eta - current * place + s * place;
            let Some((_, law2)) = laws.get(&other) else { continue };
            let (rep, law1) = &laws[&eta];
            let w = inner_kantorovich(law1, law2, k, block.len());
            if best.is_none_or(|(b, _, _)| w > b) {
                best = Some((w, *rep, s as u8));
            }
        }
    }
    Ok(match best {
        Some((w, rep, spin)) => {
            let sigma = space.state(rep).clone();
            let b = boundary.iter().map(|&v| (v, sigma.get(v))).collect();
            mk(1.0 + w, w, Some(PhiWitness { sigma, spin, boundary: b }))
        }
        // u is frozen by the constraint: no admissible flip.
        None => mk(0.0, 0.0, None),
    })
}

fn inner_kantorovich(a: &HashMap<usize, f64>, b: &HashMap<usize, f64>, k: usize, len: usize) -> f64 {
    let mut codes: Vec<usize> = a.keys().chain(b.keys()).copied().collect();
    codes.sort_unstable();
    codes.dedup();
    let za: f64 = a.values().sum();
    let zb: f64 = b.values().sum();
    let pa: Vec<f64> = codes.iter().map(|c| a.get(c).copied().unwrap_or(0.0) / za).collect();
    let pb: Vec<f64> = codes.iter().map(|c| b.get(c).copied().unwrap_or(0.0) / zb).collect();
    flow::transport(&pa, &pb, |i, j| code_hamming(codes[i], codes[j], k, len)).0
}

/// `Φ_u(B)` by full enumeration of `σ ∈ Ω` and `s`, with Kantorovich distances
/// computed on all of `Ω`. Independent of the Markov-field shortcut.
pub fn discrepancy_influence_bruteforce(model: &ExactModel, u: usize, block: &[usize]) -> Result<f64> {
    validate_block(model, u, block)?;
    let space = model.space();
    let mut cache: HashMap<usize, DistVector> = HashMap::new();
    let mut updated =
        |i: usize| cache.entry(i).or_insert_with(|| model.block_update_dist(&model.point_mass_index(i), block)).clone();
    let mut best: f64 = 0.0;
    for i in 0..space.len() {
        let sigma = space.state(i);
        for s in 0..space.n_spins() as u8 {
            if s == sigma.get(u) {
                continue;
            }
            let Some(j) = space.index_of(&sigma.with_spin(u, s)) else { continue };
            let (a, b) = (updated(i), updated(j));
            best = best.max(kantorovich(space, &a, &b)?.0);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathCheck {
    pub checked: usize,
    pub holds: bool,
    /// Smallest `ρ(σ,ω) + ρ(ω,τ) − ρ(σ,τ)` after a block update.
    pub worst_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub normalization: String,
    pub n_sites: usize,
    pub block_size: usize,
    pub boundary_size: usize,
    pub n_blocks: usize,
    pub per_pair: Vec<Influence>,
    /// `E[Δ_u] = (1/|ℬ|) Σ_B (1 − Φ_u(B))` for each site `u`.
    pub expected_decrease: Vec<f64>,
    /// `min_u E[Δ_u]·|V|/|B|`.
    pub gamma: f64,
    pub gamma_target: f64,
    pub satisfied: bool,
    pub violating: Vec<usize>,
    pub path_reduction: PathCheck,
    pub proof: Option<ProofParameters>,
}

/// Checks the single-discrepancy contraction condition for the averaged
/// block dynamics over `blocks`, requiring `γ > gamma_target`.
pub fn contraction_check(model: &ExactModel, blocks: &[Vec<usize>], gamma_target: f64) -> Result<ContractionReport> {
    if blocks.is_empty() {
        return Err(Error::Invalid("empty block collection".into()));
    }
    let block_size = blocks[0].len();
    if blocks.iter().any(|b| b.len() != block_size) {
        return Err(Error::Invalid("blocks must share one size".into()));
    }
    let n = model.n_sites();
    let graph = model.system().graph();
    let boundary_size = blocks.iter().map(|b| graph.boundary(b).len()).max().unwrap_or(0);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (0..blocks.len()).map(move |b| (u, b))).collect();
    let per_pair =
        pairs.par_iter().map(|&(u, b)| discrepancy_influence(model, u, &blocks[b])).collect::<Result<Vec<_>>>()?;
    let expected_decrease: Vec<f64> = (0..n)
        .map(|u| {
            per_pair[u * blocks.len()..(u + 1) * blocks.len()].iter().map(|p| 1.0 - p.phi).sum::<f64>()
                / blocks.len() as f64
        })
        .collect();
    let scale = n as f64 / block_size as f64;
    let gamma = expected_decrease.iter().map(|e| e * scale).fold(f64::INFINITY, f64::min);
    let violating: Vec<usize> = (0..n).filter(|&u| expected_decrease[u] * scale <= gamma_target).collect();
    let path_reduction = path_reduction_check(model, blocks, 200_000)?;
    Ok(ContractionReport {
        normalization: "per-site quantities divided by |V|".into(),
        n_sites: n,
        block_size,
        boundary_size,
        n_blocks: blocks.len(),
        per_pair,
        expected_decrease,
        gamma,
        gamma_target,
        satisfied: violating.is_empty(),
        violating,
        path_reduction,
        proof: None,
    })
}

/// Triangle inequality `ρ(Uσ,Uτ) ≤ ρ(Uσ,Uω) + ρ(Uω,Uτ)` after each block
/// update for Hamming-2 pairs joined through `ω ∈ Ω`: what lets
/// single-discrepancy contraction extend to all pairs.
pub fn path_reduction_check(model: &ExactModel, blocks: &[Vec<usize>], max_checks: usize) -> Result<PathCheck> {
    let space = model.space();
    let n = model.n_sites();
    let k = space.n_spins() as u8;
    let mut triples = Vec::new();
    'outer: for i in 0..space.len() {
        let sigma = space.state(i);
        for a in 0..n {
            for sa in 0..k {
                if sa == sigma.get(a) {
                    continue;
                }
                let omega = sigma.with_spin(a, sa);
                let Some(w) = space.index_of(&omega) else { continue };
                for b in a + 1..n {
                    for sb in 0..k {
                        if sb == sigma.get(b) {
                            continue;
                        }
                        let Some(t) = space.index_of(&omega.with_spin(b, sb)) else { continue };
                        triples.push((i, w, t));
                        if triples.len() * blocks.len() >= max_checks {
                            break 'outer;
                        }
                    }
                }
            }
        }
    }
    let slacks = blocks
        .par_iter()
        .map(|b| {
            let upd: Vec<DistVector> =
                (0..space.len()).map(|i| model.block_update_dist(&model.point_mass_index(i), b)).collect();
            let rho = |x: usize, y: usize| kantorovich(space, &upd[x], &upd[y]).map(|r| r.0);
            triples.iter().map(|&(i, w, t)| Ok(rho(i, w)? + rho(w, t)? - rho(i, t)?)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_slack = slacks.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let checked = slacks.iter().map(Vec::len).sum();
    Ok(PathCheck { checked, holds: checked == 0 || worst_slack >= -INEQ_TOL, worst_slack })
}

/// `δ = γ|B|/(4|∂B|)`, the approximation budget the contraction chain needs.
pub fn proof_delta(gamma: f64, block_size: usize, boundary_size: usize) -> f64 {
    gamma * block_size as f64 / (4.0 * boundary_size as f64)
}

/// `γ/(1 + ((ℓ+2)/ℓ)^d)`, the closed form printed alongside `proof_delta`.
/// For cubes `|∂B| = (ℓ+2)^d − ℓ^d`, so the two expressions differ.
pub fn closed_form_delta(gamma: f64, ell: usize, d: usize) -> f64 {
    gamma / (1.0 + ((ell as f64 + 2.0) / ell as f64).powi(d as i32))
}

/// Max over `σ ∈ Ω` of `ρ(K_B^t δ_σ, U_B δ_σ)` for each `t` in `ts`
/// (ascending), where `K_B` is one uniform single-site update inside `B`.
pub fn block_kernel_distances(model: &ExactModel, block: &[usize], ts: &[usize]) -> Result<Vec<(usize, f64)>> {
    if block.is_empty() {
        return Err(Error::Invalid("empty block".into()));
    }
    if ts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid("step counts must ascend".into()));
    }
    let space = model.space();
    let targets: Vec<DistVector> =
        (0..space.len()).map(|i| model.block_update_dist(&model.point_mass_index(i), block)).collect();
    let mut current: Vec<DistVector> = (0..space.len()).map(|i| model.point_mass_index(i)).collect();
    let mut t = 0;
    let mut out = Vec::with_capacity(ts.len());
    for &want in ts {
        while t < want {
            current = current.par_iter().map(|d| model.random_scan_step_on(d, block, block.len())).collect();
            t += 1;
        }
        let worst = current
            .par_iter()
            .zip(&targets)
            .map(|(a, b)| kantorovich(space, a, b).map(|r| r.0))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        out.push((t, worst));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproxBlockReport {
    pub block: Vec<usize>,
    pub t_single: usize,
    pub delta: f64,
    /// Worst-case `ρ(U*_B σ, U_B σ)` after `t_single` updates.
    pub rho: f64,
    pub certified: bool,
    /// Least `t ≤ t_cap` with worst-case distance `≤ δ`.
    pub t_min: Option<usize>,
    pub curve: Vec<(usize, f64)>,
}

/// Compares `t_single` random single-site updates inside `B` with the exact
/// block update, and searches for the least sufficient count up to `t_cap`.
pub fn approximate_block_contraction(
    model: &ExactModel,
    block: &[usize],
    t_single: usize,
    delta: f64,
    t_cap: usize,
) -> Result<ApproxBlockReport> {
    if !(delta > 0.0) || t_single == 0 {
        return Err(Error::Invalid("need delta > 0 and t_single >= 1".into()));
    }
    let space = model.space();
    let targets: Vec<DistVector> =
        (0..space.len()).map(|i| model.block_update_dist(&model.point_mass_index(i), block)).collect();
    let mut current: Vec<DistVector> = (0..space.len()).map(|i| model.point_mass_index(i)).collect();
    let mut curve = Vec::new();
    let mut t_min = None;
    for t in 0..=t_cap.max(t_single) {
        if t > 0 {
            current = current.par_iter().map(|d| model.random_scan_step_on(d, block, block.len())).collect();
        }
        let worst = current
            .par_iter()
            .zip(&targets)
            .map(|(a, b)| kantorovich(space, a, b).map(|r| r.0))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        curve.push((t, worst));
        if t_min.is_none() && t <= t_cap && worst <= delta {
            t_min = Some(t);
        }
        if t >= t_single && t_min.is_some() {
            break;
        }
    }
    let rho = curve[t_single].1;
    Ok(ApproxBlockReport { block: block.to_vec(), t_single, delta, rho, certified: rho <= delta, t_min, curve })
}

/// Constants of the censoring argument and the chain of lower bounds on the
/// expected decrease of one discrepancy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProofParameters {
    pub gamma: f64,
    pub block_size: usize,
    pub boundary_size: usize,
    pub n_sites: usize,
    pub delta: f64,
    pub delta_closed_form: f64,
    /// `⌈ℓ^d ln ℓ^d⌉`.
    pub t_coverage: usize,
    /// `⌈4 ln(ℓ^d/δ)⌉`.
    pub t_tail: usize,
    /// Measured least `t` with worst-case block error `≤ δ`.
    pub t_measured: usize,
    pub t: usize,
    /// Worst-case block error at `t`.
    pub rho_at_t: f64,
    /// Draws per sweep `⌈2t|V|/|B|⌉`.
    pub sweep_updates: usize,
    /// Exact `P(Bin(sweep_updates, |B|/|V|) < t)`.
    pub tail_exact: f64,
    /// `e^{−t/4}`.
    pub tail_chernoff: f64,
    /// `δ/|B|`, which both tail values must not exceed.
    pub tail_budget: f64,
    /// `P(B∋u) − 2ρ·P(∂B∋u) − (1/|ℬ|) Σ_{∂B∋u} (Φ_u(B) − 1)`, worst `u`.
    pub decrease_exact_t: f64,
    /// `γ|B|/(2|V|)`.
    pub decrease_exact_t_bound: f64,
    /// `decrease_exact_t − P(T<t)·P(∂B∋u)·|B|`, worst `u`.
    pub decrease_random_t: f64,
    /// `γ|B|/(4|V|)`.
    pub decrease_random_t_bound: f64,
    pub satisfied: bool,
}

fn binomial_below(trials: usize, p: f64, t: usize) -> Result<f64> {
    if t == 0 {
        return Ok(0.0);
    }
    let bin = Binomial::new(p.clamp(0.0, 1.0), trials as u64).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(bin.cdf(t as u64 - 1))
}

/// Derives `δ`, `t`, the binomial tail and the lower-bound chain from a
/// contraction report on cubes of side `ell` in dimension `d`. `t_measured`
/// and `rho_at` come from the exact block kernel: `rho_at(t)` is the
/// worst-case error after `t` single-site updates inside a block.
pub fn proof_parameters(
    report: &ContractionReport,
    ell: usize,
    d: usize,
    t_measured: usize,
    rho_at: impl Fn(usize) -> Result<f64>,
) -> Result<ProofParameters> {
    let (bs, bd, nv) = (report.block_size, report.boundary_size, report.n_sites);
    let gamma = report.gamma;
    if !(gamma > 0.0) || bd == 0 {
        return Err(Error::Invalid(format!("no contraction to build on (gamma = {gamma})")));
    }
    let delta = proof_delta(gamma, bs, bd);
    let ld = bs as f64;
    let nvf = nv as f64;
    let t_coverage = (ld * ld.ln()).ceil().max(1.0) as usize;
    let t_tail = (4.0 * (ld / delta).ln()).ceil().max(1.0) as usize;
    let t = t_coverage.max(t_tail).max(t_measured);
    let rho_at_t = rho_at(t)?;
    let sweep_updates = (2.0 * t as f64 * nvf / ld).ceil() as usize;
    let tail_exact = binomial_below(sweep_updates, ld / nvf, t)?;
    let tail_chernoff = (-(t as f64) / 4.0).exp();
    let tail_budget = delta / ld;

    let nb = report.n_blocks as f64;
    let (mut decrease_exact_t, mut decrease_random_t) = (f64::INFINITY, f64::INFINITY);
    for u in 0..nv {
        let row = &report.per_pair[u * report.n_blocks..(u + 1) * report.n_blocks];
        let inside = row.iter().filter(|p| p.block.contains(&u)).count() as f64;
        let on_boundary = row.iter().filter(|p| p.witness.is_some()).count() as f64;
        let excess: f64 = row.iter().map(|p| p.boundary_excess).sum();
        let exact = inside / nb - 2.0 * on_boundary * rho_at_t / nb - excess / nb;
        decrease_exact_t = decrease_exact_t.min(exact);
        decrease_random_t = decrease_random_t.min(exact - tail_exact * on_boundary * ld / nb);
    }
    let decrease_exact_t_bound = gamma * ld / (2.0 * nvf);
    let decrease_random_t_bound = gamma * ld / (4.0 * nvf);
    let satisfied = rho_at_t <= delta
        && tail_exact <= tail_budget
        && tail_chernoff <= tail_budget * (1.0 + INEQ_TOL)
        && decrease_exact_t >= decrease_exact_t_bound - INEQ_TOL
        && decrease_random_t >= decrease_random_t_bound - INEQ_TOL;
    Ok(ProofParameters {
        gamma,
        block_size: bs,
        boundary_size: bd,
        n_sites: nv,
        delta,
        delta_closed_form: closed_form_delta(gamma, ell, d),
        t_coverage,
        t_tail,
        t_measured,
        t,
        rho_at_t,
        sweep_updates,
        tail_exact,
        tail_chernoff,
        tail_budget,
        decrease_exact_t,
        decrease_exact_t_bound,
        decrease_random_t,
        decrease_random_t_bound,
        satisfied,
    })
}

/// Number of approximate global block sweeps bringing the worst Kantorovich
/// distance `|V|` below `ε` at contraction `1 − γ/4` per sweep.
pub fn sweeps_needed(n_sites: usize, gamma: f64, epsilon: f64) -> usize {
    ((n_sites as f64 / epsilon).ln() / -(1.0 - gamma / 4.0).ln()).ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GlobalBlockReport {
    pub d: usize,
    pub n: usize,
    pub ell: usize,
    pub layers: Vec<Vec<Vec<usize>>>,
    /// Fraction of offsets `j` whose layer covers each site.
    pub coverage: Vec<f64>,
    /// `(ℓ^d − Σ_{B: u∈∂B} (Φ_u(B) − 1))/(ℓ+1)^d` per site.
    pub formula_decrease: Vec<f64>,
    /// `min_{σ,s} (1 − E_j ρ(G_j σ, G_j σ_u^s))` per site, by exact propagation.
    pub direct_decrease: Vec<f64>,
    /// `γ (ℓ/(ℓ+1))^d`.
    pub bound: f64,
    pub gamma: f64,
    pub certified: bool,
}

/// Global block updates on the `n^d` torus with block side `ℓ`.
pub fn global_block_contraction(
    model: &ExactModel,
    d: usize,
    n: usize,
    ell: usize,
    gamma: f64,
) -> Result<GlobalBlockReport> {
    if n.pow(d as u32) != model.n_sites() {
        return Err(Error::Invalid(format!("model has {} sites, torus {n}^{d} expected", model.n_sites())));
    }
    let offsets = torus_offsets(d, ell);
    let layers = offsets.iter().map(|j| global_block_layer(d, n, ell, j)).collect::<Result<Vec<_>>>()?;
    let nv = model.n_sites();
    let mut coverage = vec![0.0; nv];
    for layer in &layers {
        for v in layer.iter().flatten() {
            coverage[*v] += 1.0 / layers.len() as f64;
        }
    }
    let blocks = torus_blocks(d, n, ell);
    let ld = ell.pow(d as u32) as f64;
    let norm = ((ell + 1) as f64).powi(d as i32);
    let formula_decrease = (0..nv)
        .into_par_iter()
        .map(|u| {
            let excess: f64 = blocks
                .iter()
                .map(|b| discrepancy_influence(model, u, b).map(|i| i.boundary_excess))
                .sum::<Result<f64>>()?;
            Ok((ld - excess) / norm)
        })
        .collect::<Result<Vec<f64>>>()?;

    let space = model.space();
    let after: Vec<Vec<DistVector>> = layers
        .par_iter()
        .map(|layer| {
            (0..space.len())
                .map(|i| layer.iter().fold(model.point_mass_index(i), |acc, b| model.block_update_dist(&acc, b)))
                .collect()
        })
        .collect();
    let direct_decrease = (0..nv)
        .into_par_iter()
        .map(|u| {
            let mut worst = f64::INFINITY;
            for i in 0..space.len() {
                let sigma = space.state(i);
                for s in 0..space.n_spins() as u8 {
                    if s == sigma.get(u) {
                        continue;
                    }
                    let Some(j) = space.index_of(&sigma.with_spin(u, s)) else { continue };
                    let mut avg = 0.0;
                    for layer in &after {
                        avg += kantorovich(space, &layer[i], &layer[j])?.0 / after.len() as f64;
                    }
                    worst = worst.min(1.0 - avg);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bound = gamma * (ell as f64 / (ell + 1) as f64).powi(d as i32);
    let certified = gamma > 0.0
        && formula_decrease.iter().all(|&x| x >= bound - INEQ_TOL)
        && direct_decrease.iter().all(|&x| x >= bound - INEQ_TOL);
    Ok(GlobalBlockReport { d, n, ell, layers, coverage, formula_decrease, direct_decrease, bound, gamma, certified })
}

/// CSV of the `Φ` table: `u,block_index,block,phi,witness`.
pub fn phi_csv(report: &ContractionReport) -> String {
    let mut out = String::from("u,block_index,block,phi,witness\n");
    for (idx, p) in report.per_pair.iter().enumerate() {
        let block: Vec<String> = p.block.iter().map(ToString::to_string).collect();
        let witness = p
            .witness
            .as_ref()
            .map(|w| {
                let b: Vec<String> = w.boundary.iter().map(|(v, s)| format!("{v}={s}")).collect();
                format!("{} u<-{}", b.join(" "), w.spin)
            })
            .unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", p.u, idx % report.n_blocks, block.join(" "), p.phi, witness).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::tv_distance;
    use crate::models::{build_graph, build_ising, GraphFamily};

    fn ising(fam: GraphFamily, beta: f64) -> ExactModel {
        ExactModel::new(build_ising(build_graph(&fam).unwrap(), beta, 0.0)).unwrap()
    }

    #[test]
    fn hamming_examples() {
        let a = Configuration(vec![1, 0, 1]);
        assert_eq!(hamming(&a, &a), 0);
        assert_eq!(hamming(&Configuration(vec![1; 4]), &Configuration(vec![0; 4])), 4);
        assert_eq!(hamming(&a, &Configuration(vec![1, 1, 1])), 1);
    }

    #[test]
    fn kantorovich_examples() {
        let m = ising(GraphFamily::Complete { n: 2 }, 0.3);
        let top = m.top().unwrap();
        let bottom = m.bottom().unwrap();
        assert_eq!(kantorovich(m.space(), &top, &bottom).unwrap().0, 2.0);
        assert_eq!(kantorovich(m.space(), &top, &top).unwrap().0, 0.0);
        let half =
            DistVector::from_weights(top.probs().iter().zip(bottom.probs()).map(|(a, b)| a + b).collect(), m.space())
                .unwrap();
        let (c, plan) = kantorovich(m.space(), &top, &half).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        assert!((plan.cost - c).abs() < 1e-12);
        assert!(c >= tv_distance(&top, &half).unwrap());
    }

    #[test]
    fn influence_cases() {
        let e = 1f64.exp();
        let m = ising(GraphFamily::Path { n: 3 }, 0.5);
        assert_eq!(discrepancy_influence(&m, 1, &[1]).unwrap().phi, 0.0);
        let inf = discrepancy_influence(&m, 0, &[1]).unwrap();
        // Field 2β from (+,+) against 0 from (−,+).
        assert!((inf.boundary_excess - (e / (e + 1.0 / e) - 0.5)).abs() < 1e-12);
        assert!((inf.phi - discrepancy_influence_bruteforce(&m, 0, &[1]).unwrap()).abs() < 1e-9);

        let m = ising(GraphFamily::Path { n: 4 }, 0.5);
        assert_eq!(discrepancy_influence(&m, 3, &[0]).unwrap().phi, 1.0);
        assert!((discrepancy_influence_bruteforce(&m, 3, &[0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_contraction() {
        let m = ising(GraphFamily::Cycle { n: 6 }, 0.0);
        let blocks = torus_blocks(1, 6, 2);
        let r = contraction_check(&m, &blocks, 0.0).unwrap();
        for e in &r.expected_decrease {
            assert!((e - 2.0 / 6.0).abs() < 1e-12);
        }
        assert!((r.gamma - 1.0).abs() < 1e-12);
        assert!(r.path_reduction.holds);
    }

    #[test]
    fn delta_forms() {
        assert!((closed_form_delta(0.5, 2, 1) - 0.5 / 3.0).abs() < 1e-15);
        assert!((proof_delta(0.5, 2, 2) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn global_block_coverage() {
        let m = ising(GraphFamily::Cycle { n: 6 }, 0.0);
        let r = global_block_contraction(&m, 1, 6, 2, 1.0).unwrap();
        for c in &r.coverage {
            assert!((c - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!(r.certified);
    }
}

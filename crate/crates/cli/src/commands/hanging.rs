//! Hanging subgraphs: a subgraph `H` joined to the rest of `G` through one
//! vertex `x`, compared exactly against dynamics on `H` alone.

use censorlab_core::exact::{tv_distance, DistVector, ExactModel};
use censorlab_core::models::build_ising;
use censorlab_core::schedules::random_schedule;
use censorlab_core::{Error, Result, SiteGraph};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, HangingOptions};
use crate::report::{ClaimReport, OutputFile};
use crate::Outcome;

/// Pairs run when the config does not name one.
pub fn builtin_pairs(beta: f64) -> Vec<HangingOptions> {
    let pair = |n_sites: usize, edges: &[[usize; 2]], h_sites: &[usize]| HangingOptions {
        n_sites,
        edges: edges.to_vec(),
        h_sites: h_sites.to_vec(),
        beta,
        schedule_length: 12,
        schedule_seeds: vec![1, 2, 3],
        js: vec![1, 4, 16, 64],
        plus_js: vec![1, 4, 16],
        cap: 2000,
    };
    vec![
        // P_2 hanging off a triangle.
        pair(4, &[[0, 1], [0, 2], [1, 2], [0, 3]], &[0, 3]),
        pair(4, &[[0, 1], [0, 2], [0, 3], [2, 3]], &[0, 1]),
        // P_3 with a two-edge tail.
        pair(5, &[[0, 1], [1, 2], [2, 3], [3, 4]], &[0, 1, 2]),
        // C_4 with a star hung from one corner.
        pair(7, &[[0, 1], [1, 2], [2, 3], [3, 0], [0, 4], [4, 5], [4, 6]], &[0, 1, 2, 3]),
        // K_{1,3} with a triangle on one leaf.
        pair(6, &[[0, 1], [0, 2], [0, 3], [3, 4], [3, 5], [4, 5]], &[0, 1, 2, 3]),
        // Nothing hangs.
        pair(3, &[[0, 1], [1, 2]], &[0, 1, 2]),
    ]
}

/// `G` and `H` as exact models with the cut vertex and the outside sites.
pub struct HangingSetup {
    pub g: ExactModel,
    pub h: ExactModel,
    /// `H` sites in `G` labels; `H` site `i` is `h_sites[i]`.
    pub h_sites: Vec<usize>,
    /// Cut vertex in `H` labels, if `G∖H` touches `H`.
    pub x: Option<usize>,
    /// `G∖H` in `G` labels.
    pub outside: Vec<usize>,
    /// `G` state index to `H` state index of its restriction.
    restrict: Vec<usize>,
}

impl HangingSetup {
    pub fn new(opts: &HangingOptions) -> Result<Self> {
        let edges: Vec<(usize, usize)> = opts.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = SiteGraph::new(opts.n_sites, &edges)?;
        let mut seen = vec![false; opts.n_sites];
        for &v in &opts.h_sites {
            if v >= opts.n_sites || std::mem::replace(&mut seen[v], true) {
                return Err(Error::Invalid(format!("bad H site {v}")));
            }
        }
        if opts.h_sites.is_empty() {
            return Err(Error::Invalid("H is empty".into()));
        }
        let outside: Vec<usize> = (0..opts.n_sites).filter(|&v| !seen[v]).collect();
        let attached: Vec<usize> =
            (0..opts.h_sites.len()).filter(|&i| graph.neighbors(opts.h_sites[i]).iter().any(|&w| !seen[w])).collect();
        if attached.len() > 1 {
            let sites: Vec<usize> = attached.iter().map(|&i| opts.h_sites[i]).collect();
            return Err(Error::Invalid(format!("H meets the rest of G at more than one vertex: {sites:?}")));
        }
        let h_graph = graph.induced(&opts.h_sites)?;
        let g = ExactModel::new(build_ising(graph, opts.beta, 0.0))?;
        let h = ExactModel::new(build_ising(h_graph, opts.beta, 0.0))?;
        let restrict = (0..g.space().len())
            .map(|i| {
                h.space()
                    .index_of_code(g.space().restriction_code(i, &opts.h_sites) as u64)
                    .expect("Ising restrictions are states of H")
            })
            .collect();
        Ok(Self { g, h, h_sites: opts.h_sites.clone(), x: attached.first().copied(), outside, restrict })
    }

    /// Marginal on `H` of a law on `G`.
    pub fn restrict(&self, d: &DistVector) -> DistVector {
        let mut probs = vec![0.0; self.h.space().len()];
        for (i, &j) in self.restrict.iter().enumerate() {
            probs[j] += d.prob(i);
        }
        DistVector::new(probs, self.h.space()).expect("marginal of a distribution")
    }

    fn block(&self) -> Vec<usize> {
        let mut b = self.outside.clone();
        if let Some(x) = self.x {
            b.push(self.h_sites[x]);
        }
        b.sort_unstable();
        b
    }

    /// `j` averaged random single-site updates inside `{x} ∪ (G∖H)`.
    fn block_approx(&self, d: &DistVector, j: usize) -> DistVector {
        let b = self.block();
        (0..j).fold(d.clone(), |acc, _| self.g.random_scan_step_on(&acc, &b, b.len()))
    }

    /// `j` averaged random updates inside `G∖H`.
    fn outside_steps(&self, d: &DistVector, j: usize) -> DistVector {
        if self.outside.is_empty() {
            return d.clone();
        }
        (0..j).fold(d.clone(), |acc, _| self.g.random_scan_step_on(&acc, &self.outside, self.outside.len()))
    }
}

/// How `x` updates are carried out on `G`.
#[derive(Clone, Copy, Debug)]
pub enum XUpdate {
    /// Exact block update of `{x} ∪ (G∖H)`.
    Block,
    /// `j` random single-site updates inside that block.
    Approx(usize),
    /// Update `x` then `j` random updates inside `G∖H`.
    Plus(usize),
}

/// Runs an `H`-site schedule on `G` and returns the `H` marginal after
/// every prefix.
pub fn run_on_g(s: &HangingSetup, schedule: &[usize], how: XUpdate) -> Result<Vec<DistVector>> {
    let mut d = s.g.top()?;
    let mut out = vec![s.restrict(&d)];
    for &v in schedule {
        let gv = s.h_sites[v];
        d = if Some(v) == s.x {
            match how {
                XUpdate::Block => s.g.block_update_dist(&d, &s.block()),
                XUpdate::Approx(j) => s.block_approx(&d, j),
                XUpdate::Plus(j) => s.outside_steps(&s.g.update(&d, gv), j),
            }
        } else {
            s.g.update(&d, gv)
        };
        out.push(s.restrict(&d));
    }
    Ok(out)
}

pub fn run_on_h(s: &HangingSetup, schedule: &[usize]) -> Result<Vec<DistVector>> {
    let mut d = s.h.top()?;
    let mut out = vec![d.clone()];
    for &v in schedule {
        d = s.h.update(&d, v);
        out.push(d.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleResult {
    pub seed: u64,
    pub schedule: Vec<usize>,
    /// Largest TV over prefixes between the block surrogate and `H` alone.
    pub identity_error: f64,
    /// `(j, max over prefixes of TV to the H-only law)`.
    pub approx_error: Vec<(usize, f64)>,
    pub approx_monotone: bool,
    /// `(j, min over prefixes of TV_H(plus) − TV_H(H alone))`.
    pub plus_slack: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauRow {
    pub j: usize,
    pub tau_h: Option<usize>,
    pub tau_g_restricted: Option<usize>,
    pub min_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub n_sites: usize,
    pub edges: Vec<[usize; 2]>,
    pub h_sites: Vec<usize>,
    pub beta: f64,
    pub cut_vertex: Option<usize>,
    pub schedules: Vec<ScheduleResult>,
    pub tau: Vec<TauRow>,
}

fn max_tv(a: &[DistVector], b: &[DistVector]) -> Result<f64> {
    a.iter().zip(b).map(|(x, y)| tv_distance(x, y)).try_fold(0.0, |m, t| t.map(|t| f64::max(m, t)))
}

/// Random scan over `H` sites as a kernel: on `H` alone, and on `G` with `j`
/// outside updates after each `x` update. Returns `τ` for both (counting
/// `H` updates) and the smallest gap between their distances to `π_H`.
fn tau_rows(s: &HangingSetup, js: &[usize], eps: f64, cap: usize) -> Result<Vec<TauRow>> {
    let nh = s.h_sites.len();
    let all: Vec<usize> = (0..nh).collect();
    js.par_iter()
        .map(|&j| {
            let mut dh = s.h.top()?;
            let mut dg = s.g.top()?;
            let (mut tau_h, mut tau_g) = (None, None);
            let mut min_slack = f64::INFINITY;
            for t in 0..=cap {
                if t > 0 {
                    dh = s.h.random_scan_step_on(&dh, &all, nh);
                    let w = 1.0 / nh as f64;
                    let mut probs = vec![0.0; dg.len()];
                    for v in 0..nh {
                        let gv = s.h_sites[v];
                        let upd =
                            if Some(v) == s.x { s.outside_steps(&s.g.update(&dg, gv), j) } else { s.g.update(&dg, gv) };
                        for (p, q) in probs.iter_mut().zip(upd.probs()) {
                            *p += w * q;
                        }
                    }
                    dg = DistVector::new(probs, s.g.space())?;
                }
                let th = s.h.tv_to_pi(&dh)?;
                let tg = tv_distance(&s.restrict(&dg), s.h.pi())?;
                min_slack = min_slack.min(tg - th);
                if tau_h.is_none() && th <= eps {
                    tau_h = Some(t);
                }
                if tau_g.is_none() && tg <= eps {
                    tau_g = Some(t);
                }
                if tau_h.is_some() && tau_g.is_some() {
                    break;
                }
            }
            Ok(TauRow { j, tau_h, tau_g_restricted: tau_g, min_slack })
        })
        .collect()
}

pub fn analyze_pair(opts: &HangingOptions, eps: f64) -> Result<PairReport> {
    let s = HangingSetup::new(opts)?;
    let nh = s.h_sites.len();
    let schedules = opts
        .schedule_seeds
        .par_iter()
        .map(|&seed| {
            let schedule = random_schedule(nh, opts.schedule_length, seed).site_sequence().expect("single sites");
            let on_h = run_on_h(&s, &schedule)?;
            let identity_error = max_tv(&run_on_g(&s, &schedule, XUpdate::Block)?, &on_h)?;
            let approx_error = opts
                .js
                .iter()
                .map(|&j| Ok((j, max_tv(&run_on_g(&s, &schedule, XUpdate::Approx(j))?, &on_h)?)))
                .collect::<Result<Vec<_>>>()?;
            let approx_monotone = approx_error.windows(2).all(|w| w[1].1 <= w[0].1 + censorlab_core::system::INEQ_TOL);
            let pi_h = s.h.pi();
            let plus_slack = opts
                .plus_js
                .iter()
                .map(|&j| {
                    let plus = run_on_g(&s, &schedule, XUpdate::Plus(j))?;
                    let mut slack = f64::INFINITY;
                    for (p, q) in plus.iter().zip(&on_h) {
                        slack = slack.min(tv_distance(p, pi_h)? - tv_distance(q, pi_h)?);
                    }
                    Ok((j, slack))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ScheduleResult { seed, schedule, identity_error, approx_error, approx_monotone, plus_slack })
        })
        .collect::<Result<Vec<_>>>()?;
    let tau = tau_rows(&s, &opts.plus_js, eps, opts.cap)?;
    Ok(PairReport {
        n_sites: opts.n_sites,
        edges: opts.edges.clone(),
        h_sites: opts.h_sites.clone(),
        beta: opts.beta,
        cut_vertex: s.x.map(|x| s.h_sites[x]),
        schedules,
        tau,
    })
}

pub fn pair_claims(r: &PairReport, eq: f64, ineq: f64) -> Vec<ClaimReport> {
    let tag = format!("H={:?} in {} sites", r.h_sites, r.n_sites);
    let identity = r.schedules.iter().map(|s| s.identity_error).fold(0.0, f64::max);
    let monotone = r.schedules.iter().all(|s| s.approx_monotone);
    let slack = r
        .schedules
        .iter()
        .flat_map(|s| s.plus_slack.iter().map(|p| p.1))
        .chain(r.tau.iter().map(|t| t.min_slack))
        .fold(f64::INFINITY, f64::min);
    let tau_ok = r.tau.iter().all(|t| match (t.tau_h, t.tau_g_restricted) {
        (Some(a), Some(b)) => a <= b,
        (Some(_), None) => true,
        _ => false,
    });
    vec![
        ClaimReport::new(format!("block surrogate restricted to H equals H alone ({tag})"), identity <= eq, eq)
            .with_details(serde_json::json!({ "max_tv": identity })),
        ClaimReport::new(format!("single-site replacement converges monotonically in j ({tag})"), monotone, ineq)
            .with_witness(r.schedules.iter().find(|s| !s.approx_monotone).map(|s| &s.approx_error)),
        ClaimReport::new(
            format!("extra outside updates keep H no closer to equilibrium ({tag})"),
            slack >= -ineq,
            ineq,
        )
        .with_details(serde_json::json!({ "min_slack": slack })),
        ClaimReport::new(format!("H alone mixes no slower than H inside G ({tag})"), tau_ok, 0.0).with_details(&r.tau),
    ]
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let pairs = match &cfg.hanging {
        Some(h) => vec![h.clone()],
        None => builtin_pairs(0.3),
    };
    let reports = pairs.iter().map(|p| analyze_pair(p, cfg.epsilon)).collect::<Result<Vec<_>>>()?;
    let claims: Vec<ClaimReport> =
        reports.iter().flat_map(|r| pair_claims(r, cfg.tolerance.eq, cfg.tolerance.ineq)).collect();
    let file = OutputFile::json("hanging.json", &serde_json::json!({ "pairs": reports, "claims": claims }));
    Ok(Outcome { claims, files: vec![file] })
}

//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use censorlab::commands::censoring::{compare_subsequences, lemma_claims, SequenceTable};
use censorlab::commands::compare::compare;
use censorlab::commands::{contraction, hanging};
use censorlab::config::{ContractionOptions, ExperimentConfig};
use censorlab_core::exact::{tv_distance, DistVector, ExactModel, Start};
use censorlab_core::mc::{
    chi_square_test, empirical_censoring_comparison, order_preservation_run, random_mask, simulate_coalescence,
    top_chain_samples, McSystem, SiteOrder, Statistic,
};
use censorlab_core::models::GraphFamily;
use censorlab_core::schedules::{random_schedule, torus_blocks};
use censorlab_core::transport::{contraction_check, discrepancy_influence_bruteforce, hamming, kantorovich};
use censorlab_core::{ModelSpec, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EQ: f64 = 1e-12;
const INEQ: f64 = 1e-9;

struct Line {
    pass: bool,
    detail: String,
}

fn systems() -> Vec<(String, ModelSpec)> {
    let mut out = Vec::new();
    for (name, g) in
        [("P_3", GraphFamily::Path { n: 3 }), ("P_4", GraphFamily::Path { n: 4 }), ("C_4", GraphFamily::Cycle { n: 4 })]
    {
        for beta in [0.0, 0.2, 0.5, 1.0] {
            for h in [0.0, 0.3] {
                out.push((format!("ising {name} beta={beta} h={h}"), ModelSpec::ising(g.clone(), beta, h)));
            }
        }
    }
    for lambda in [0.5, 1.0] {
        out.push((format!("hardcore C_4 lambda={lambda}"), ModelSpec::hardcore(GraphFamily::Cycle { n: 4 }, lambda)));
    }
    out
}

fn model(spec: &ModelSpec) -> ExactModel {
    ExactModel::new(spec.build().expect("model builds")).expect("enumerable")
}

fn criterion_1() -> Result<Line> {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (name, spec) in systems() {
        let m = model(&spec);
        let table = SequenceTable::build(&m, &m.top()?, 5);
        let (tally, witness) = compare_subsequences(&m, &table, 5, |len| (0..1u32 << len).collect(), INEQ)?;
        checked += tally.checked;
        if tally.tv_violations + tally.dominance_violations > 0 {
            bad.push(format!("{name}: {witness:?}"));
        }
    }
    Ok(Line { pass: bad.is_empty(), detail: format!("{checked} sequence/subsequence pairs, violations {bad:?}") })
}

fn criterion_2() -> Result<Line> {
    let mut bad = Vec::new();
    let mut claims = 0;
    for (name, spec) in systems() {
        let m = model(&spec);
        let table = SequenceTable::build(&m, &m.top()?, 4);
        for c in lemma_claims(&m, &table, 4, INEQ)? {
            claims += 1;
            if !c.ok() {
                bad.push(format!("{name}: {}", c.claim));
            }
        }
    }
    Ok(Line { pass: bad.is_empty(), detail: format!("{claims} lemma claims, violations {bad:?}") })
}

fn random_dist(m: &ExactModel, rng: &mut ChaCha8Rng) -> DistVector {
    let w: Vec<f64> = (0..m.space().len()).map(|_| rng.gen::<f64>().powi(3)).collect();
    DistVector::from_weights(w, m.space()).expect("positive weights")
}

fn criterion_3() -> Result<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_triangle, mut worst_tv) = (f64::INFINITY, f64::INFINITY);
    let mut point_mismatch = 0;
    for (_, spec) in systems() {
        let m = model(&spec);
        let space = m.space();
        for _ in 0..200 {
            let (a, b, c) = (random_dist(&m, &mut rng), random_dist(&m, &mut rng), random_dist(&m, &mut rng));
            let ab = kantorovich(space, &a, &b)?.0;
            let bc = kantorovich(space, &b, &c)?.0;
            let ac = kantorovich(space, &a, &c)?.0;
            worst_triangle = worst_triangle.min(ab + bc - ac);
            worst_tv = worst_tv.min(ab - tv_distance(&a, &b)?);
        }
        for i in 0..space.len() {
            for j in 0..space.len() {
                let r = kantorovich(space, &m.point_mass_index(i), &m.point_mass_index(j))?.0;
                if r != hamming(space.state(i), space.state(j)) as f64 {
                    point_mismatch += 1;
                }
            }
        }
    }
    Ok(Line {
        pass: worst_triangle >= -INEQ && worst_tv >= -INEQ && point_mismatch == 0,
        detail: format!(
            "min triangle slack {worst_triangle:.3e}, min rho-TV {worst_tv:.3e}, point-mass mismatches {point_mismatch}"
        ),
    })
}

fn contraction_config(beta: f64) -> ExperimentConfig {
    let text = format!(r#"{{"model": {{"kind": "ising", "beta": {beta}, "graph": {{"family": "cycle", "n": 6}}}}}}"#);
    let mut cfg = ExperimentConfig::from_json(&text, None).expect("config parses");
    cfg.contraction = ContractionOptions { ell: 2, gamma_target: 0.0, t_cap: 4096, t_single: None };
    cfg
}

fn criterion_4() -> Result<Line> {
    let low = contraction::run(&contraction_config(0.2))?;
    let low_ok = low.ok();
    let high = contraction::run(&contraction_config(2.0))?;
    let high_fails = !high.claims[0].ok();

    let blocks = torus_blocks(1, 6, 2);
    let mut oracle_err: f64 = 0.0;
    let mut gammas = Vec::new();
    for beta in [0.2, 2.0] {
        let m = model(&ModelSpec::ising(GraphFamily::Cycle { n: 6 }, beta, 0.0));
        let report = contraction_check(&m, &blocks, 0.0)?;
        gammas.push(report.gamma);
        for p in &report.per_pair {
            let brute = discrepancy_influence_bruteforce(&m, p.u, &p.block)?;
            oracle_err = oracle_err.max((brute - p.phi).abs());
        }
    }
    Ok(Line {
        pass: low_ok && high_fails && oracle_err <= INEQ,
        detail: format!(
            "beta=0.2 pipeline certified: {low_ok} (gamma {:.5}); beta=2.0 reports failure: {high_fails} (gamma {:.5}); \
             Phi vs brute force max error {oracle_err:.2e}",
            gammas[0], gammas[1]
        ),
    })
}

/// `(graph, β) → (τ_A, τ_S, τ_R)` at ε = 0.25 from the top state.
const FROZEN_TAUS: [(&str, f64, [usize; 3]); 4] =
    [("C_4", 0.2, [4, 4, 7]), ("C_4", 0.6, [10, 11, 19]), ("P_4", 0.2, [4, 4, 6]), ("P_4", 0.6, [8, 7, 13])];

fn criterion_5() -> Result<Line> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, beta, frozen) in FROZEN_TAUS {
        let g = if name == "C_4" { GraphFamily::Cycle { n: 4 } } else { GraphFamily::Path { n: 4 } };
        let m = model(&ModelSpec::ising(g, beta, 0.0));
        let c = compare(&m, None, 0.25, &Start::Top, 100_000)?;
        let taus = [c.alternating.as_ref().and_then(|a| a.steps), c.systematic.steps, c.random.steps];
        let Some([a, s, r]) = taus.iter().copied().collect::<Option<Vec<_>>>().map(|v| [v[0], v[1], v[2]]) else {
            pass = false;
            parts.push(format!("{name} beta={beta}: cap hit"));
            continue;
        };
        let ln_ok = r as f64 <= c.bound_random_ln * a as f64;
        let log2_ok = r as f64 <= c.bound_random_log2 * a as f64;
        let ok = s <= 2 * a && ln_ok && [a, s, r] == frozen;
        pass &= ok;
        parts.push(format!("{name} beta={beta}: tau=({a},{s},{r}) ln-bound {ln_ok} log2-bound {log2_ok}"));
    }
    Ok(Line { pass, detail: parts.join("; ") })
}

fn criterion_6() -> Result<Line> {
    let mut identity: f64 = 0.0;
    let mut monotone = true;
    let pairs = hanging::builtin_pairs(0.3);
    for p in &pairs {
        let r = hanging::analyze_pair(p, 0.25)?;
        for s in &r.schedules {
            identity = identity.max(s.identity_error);
            monotone &= s.approx_monotone;
        }
    }
    Ok(Line {
        pass: identity <= EQ && monotone && pairs.len() >= 5,
        detail: format!("{} pairs, max identity error {identity:.2e}, j-fold monotone {monotone}", pairs.len()),
    })
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn criterion_7() -> Result<Line> {
    // (a) order preservation on a 32x32 torus.
    let mut order_ok = true;
    for beta in [0.2, 0.44] {
        let sys = McSystem::from_spec(&ModelSpec::ising(GraphFamily::Torus { d: 2, n: 32 }, beta, 0.0))?;
        order_ok &= order_preservation_run(&sys, 11, 1_000_000).is_ok();
    }

    // (b) empirical top-chain law against exact propagation on C_4.
    let spec = ModelSpec::ising(GraphFamily::Cycle { n: 4 }, 0.5, 0.3);
    let m = model(&spec);
    let sys = McSystem::from_spec(&spec)?;
    let schedule = random_schedule(4, 10, 3);
    let exact = m.apply_schedule(&m.top()?, &schedule)?;
    let sites = schedule.site_sequence().expect("single sites");
    let mut counts = vec![0u64; m.space().len()];
    for s in top_chain_samples(&sys, &sites, 5, 1_000_000) {
        counts[m.space().index_of(&s.to_configuration()).expect("state in space")] += 1;
    }
    let chi = chi_square_test(&counts, exact.probs())?;

    // (c) coupon-collector coalescence at β = 0.
    let sys = McSystem::from_spec(&ModelSpec::ising(GraphFamily::Torus { d: 2, n: 8 }, 0.0, 0.0))?;
    let mut total = 0.0;
    let runs = 10_000;
    for r in 0..runs {
        let t = simulate_coalescence(&sys, &SiteOrder::RandomScan, 17, r, 10_000_000, 0)?;
        total += t.coalescence.expect("coalesces") as f64;
    }
    let mean = total / runs as f64;
    let coupon = 64.0 * harmonic(64);
    let rel = (mean - coupon).abs() / coupon;
    Ok(Line {
        pass: order_ok && chi.p_value > 0.001 && rel <= 0.05,
        detail: format!(
            "order preserved {order_ok}; chi2 p={:.4} (dof {}); coalescence mean {mean:.1} vs n*H_n {coupon:.1} (rel {rel:.4})",
            chi.p_value, chi.dof
        ),
    })
}

fn criterion_8() -> Result<Line> {
    let sys = McSystem::from_spec(&ModelSpec::ising(GraphFamily::Torus { d: 2, n: 32 }, 0.3, 0.0))?;
    let n = sys.n_sites();
    let mask = random_mask(4 * n, 0.5, 99);
    let c = empirical_censoring_comparison(&sys, &SiteOrder::RandomScan, &mask, 8, 1000, Statistic::Magnetization)?;
    Ok(Line {
        pass: !c.violation,
        detail: format!(
            "full mean {:.4}, censored mean {:.4}, paired diff {:.4} +- {:.4}",
            c.full_mean, c.censored_mean, c.diff_mean, c.diff_se
        ),
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Line>); 8] = [
        ("1 censoring inequality, exact", criterion_1),
        ("2 lemma suite", criterion_2),
        ("3 metric properties", criterion_3),
        ("4 contraction pipeline", criterion_4),
        ("5 schedule comparisons, exact", criterion_5),
        ("6 hanging-subgraph identity", criterion_6),
        ("7 Monte Carlo soundness", criterion_7),
        ("8 empirical censoring at scale", criterion_8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let line = f().unwrap_or_else(|e| Line { pass: false, detail: format!("error: {e}") });
        failed += !line.pass as usize;
        println!(
            "criterion {name}: {} ({:.1}s) {}",
            if line.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            line.detail
        );
    }
    println!("acceptance: {} of 8 criteria pass", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Block contraction, approximate block updates, and the censored-sweep
//! pipeline on a cycle or torus.

use censorlab_core::exact::{DistVector, Dynamics, ExactModel, Start};
use censorlab_core::models::GraphFamily;
use censorlab_core::schedules::{global_block_layer, torus_blocks, torus_offsets};
use censorlab_core::transport::{
    approximate_block_contraction, block_kernel_distances, contraction_check, global_block_contraction, phi_csv,
    proof_delta, proof_parameters, sweeps_needed, ApproxBlockReport, ContractionReport, GlobalBlockReport,
};
use censorlab_core::{Error, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::{ClaimReport, OutputFile};
use crate::Outcome;

/// `(d, n)` of the torus the config describes; a cycle is the case `d = 1`.
pub fn torus_shape(cfg: &ExperimentConfig) -> Result<(usize, usize)> {
    match cfg.model.as_ref().map(|m| &m.graph) {
        Some(GraphFamily::Cycle { n }) => Ok((1, *n)),
        Some(GraphFamily::Torus { d, n }) => Ok((*d, *n)),
        _ => Err(Error::Invalid("contraction needs a built-in cycle or torus model".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweeps: usize,
    pub updates: usize,
    pub tv_censored: f64,
    pub tv_full: f64,
    pub full_dominated: bool,
}

/// Exact comparison of approximate global block sweeps, realized by
/// censoring random single-site updates to a randomly offset layer, with
/// the uncensored random-scan chain run for the same number of draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pipeline {
    pub updates_per_sweep: usize,
    pub sweeps: usize,
    /// Sweeps actually propagated (capped).
    pub sweeps_checked: usize,
    pub step_bound: usize,
    pub tau_random: Option<usize>,
    pub rows: Vec<SweepRow>,
    pub ordered: bool,
    pub bound_holds: bool,
}

fn censored_sweep(model: &ExactModel, dist: &DistVector, unions: &[Vec<usize>], m: usize) -> Result<DistVector> {
    let n = model.n_sites();
    let parts: Vec<(DistVector, f64)> = unions
        .iter()
        .map(|u| ((0..m).fold(dist.clone(), |acc, _| model.random_scan_step_on(&acc, u, n)), 1.0 / unions.len() as f64))
        .collect();
    censorlab_core::exact::mixture(&parts)
}

#[allow(clippy::too_many_arguments)]
pub fn pipeline(
    model: &ExactModel,
    d: usize,
    n: usize,
    ell: usize,
    m: usize,
    sweeps: usize,
    epsilon: f64,
    max_sweeps: usize,
    tol: f64,
) -> Result<Pipeline> {
    let unions: Vec<Vec<usize>> = torus_offsets(d, ell)
        .iter()
        .map(|j| {
            global_block_layer(d, n, ell, j).map(|layer| {
                let mut u = layer.concat();
                u.sort_unstable();
                u
            })
        })
        .collect::<Result<_>>()?;
    let checked = sweeps.min(max_sweeps);
    let mut cens = model.top()?;
    let mut full = model.top()?;
    let mut rows = Vec::with_capacity(checked);
    for r in 1..=checked {
        cens = censored_sweep(model, &cens, &unions, m)?;
        full = (0..m).fold(full, |acc, _| model.random_scan_step(&acc));
        let (tc, tf) = (model.tv_to_pi(&cens)?, model.tv_to_pi(&full)?);
        let dom = model.stochastic_dominance(&full, &cens)?.dominates();
        rows.push(SweepRow {
            sweeps: r,
            updates: r * m,
            tv_censored: tc,
            tv_full: tf,
            full_dominated: dom && tf <= tc + tol,
        });
    }
    let step_bound = sweeps * m;
    let tau = model.mixing_time_exact(&Dynamics::RandomScan, epsilon, &Start::Top, step_bound)?;
    Ok(Pipeline {
        updates_per_sweep: m,
        sweeps,
        sweeps_checked: checked,
        step_bound,
        tau_random: tau.steps,
        ordered: rows.iter().all(|r| r.full_dominated),
        bound_holds: tau.steps.is_some(),
        rows,
    })
}

#[derive(Serialize)]
struct ContractionFile<'a> {
    d: usize,
    n: usize,
    ell: usize,
    contraction: &'a ContractionReport,
    approximate_block: Option<&'a ApproxBlockReport>,
    block_error_trend: Vec<(usize, f64)>,
    global_blocks: Option<&'a GlobalBlockReport>,
    sweeps: Option<usize>,
    pipeline: Option<&'a Pipeline>,
    diagnosis: Option<String>,
    claims: &'a [ClaimReport],
}

/// Sweeps propagated exactly before the pipeline stops comparing.
const MAX_PIPELINE_SWEEPS: usize = 64;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (d, n) = torus_shape(cfg)?;
    let ell = cfg.contraction.ell;
    if ell == 0 || n % (ell + 1) != 0 {
        return Err(Error::Invalid(format!("block side {ell} needs (ell+1) | {n}")));
    }
    let model = ExactModel::new(cfg.build_system()?)?;
    let tol = cfg.tolerance.ineq;
    let blocks = torus_blocks(d, n, ell);
    let mut report = contraction_check(&model, &blocks, cfg.contraction.gamma_target)?;
    let mut claims =
        vec![ClaimReport::new("single-discrepancy block contraction (gamma > target)", report.satisfied, tol)
            .with_witness(&report.violating)
            .with_details(serde_json::json!({
                "gamma": report.gamma,
                "gamma_target": report.gamma_target,
                "expected_decrease": report.expected_decrease,
                "path_reduction": report.path_reduction,
            }))];
    claims.push(
        ClaimReport::new("block updates respect the path reduction", report.path_reduction.holds, tol)
            .with_details(&report.path_reduction),
    );

    let mut files = vec![OutputFile::text("phi.csv", phi_csv(&report))];
    if !report.satisfied {
        let diagnosis = format!(
            "gamma = {} does not exceed {} at sites {:?}; pipeline halted",
            report.gamma, report.gamma_target, report.violating
        );
        let file = ContractionFile {
            d,
            n,
            ell,
            contraction: &report,
            approximate_block: None,
            block_error_trend: Vec::new(),
            global_blocks: None,
            sweeps: None,
            pipeline: None,
            diagnosis: Some(diagnosis),
            claims: &claims,
        };
        files.push(OutputFile::json("contraction.json", &file));
        return Ok(Outcome { claims, files });
    }

    let delta = proof_delta(report.gamma, report.block_size, report.boundary_size);
    let approx = approximate_block_contraction(&model, &blocks[0], 1, delta, cfg.contraction.t_cap)?;
    let trend = block_kernel_distances(&model, &blocks[0], &(4..=10).map(|k| 1usize << k).collect::<Vec<_>>())?;
    claims.push(
        ClaimReport::new(
            "random single-site updates approximate a block update within delta",
            approx.t_min.is_some(),
            tol,
        )
        .with_details(serde_json::json!({ "delta": delta, "t_min": approx.t_min, "t_cap": cfg.contraction.t_cap })),
    );

    let global = global_block_contraction(&model, d, n, ell, report.gamma)?;
    claims.push(
        ClaimReport::new("global block updates contract by gamma (ell/(ell+1))^d", global.certified, tol).with_details(
            serde_json::json!({
                "bound": global.bound,
                "formula_decrease": global.formula_decrease,
                "direct_decrease": global.direct_decrease,
            }),
        ),
    );

    let mut sweeps = None;
    let mut pipe = None;
    if let Some(t_measured) = approx.t_min {
        let rho_at = |t: usize| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for b in &blocks {
                worst = worst.max(block_kernel_distances(&model, b, &[t])?[0].1);
            }
            Ok(worst)
        };
        let proof = proof_parameters(&report, ell, d, t_measured.max(cfg.contraction.t_single.unwrap_or(0)), rho_at)?;
        claims.push(
            ClaimReport::new("proof constants close the contraction chain", proof.satisfied, tol).with_details(&proof),
        );
        let r = sweeps_needed(model.n_sites(), report.gamma, cfg.epsilon);
        sweeps = Some(r);
        let p = pipeline(&model, d, n, ell, proof.sweep_updates, r, cfg.epsilon, MAX_PIPELINE_SWEEPS, tol)?;
        claims.push(
            ClaimReport::new(
                "full random scan is dominated by and no farther than the censored sweeps",
                p.ordered,
                tol,
            )
            .with_witness(p.rows.iter().find(|r| !r.full_dominated))
            .with_details(
                serde_json::json!({ "sweeps_checked": p.sweeps_checked, "updates_per_sweep": p.updates_per_sweep }),
            ),
        );
        claims.push(
            ClaimReport::new("random scan mixes within the derived step count", p.bound_holds, tol).with_details(
                serde_json::json!({ "step_bound": p.step_bound, "tau_random": p.tau_random, "epsilon": cfg.epsilon }),
            ),
        );
        report.proof = Some(proof);
        pipe = Some(p);
    }

    let file = ContractionFile {
        d,
        n,
        ell,
        contraction: &report,
        approximate_block: Some(&approx),
        block_error_trend: trend,
        global_blocks: Some(&global),
        sweeps,
        pipeline: pipe.as_ref(),
        diagnosis: None,
        claims: &claims,
    };
    files.push(OutputFile::json("contraction.json", &file));
    Ok(Outcome { claims, files })
}

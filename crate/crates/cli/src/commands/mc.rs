//! Large-lattice Monte Carlo runs: coalescence, paired censoring, scaling.

use censorlab_core::mc::{
    empirical_censoring_comparison, estimate_mixing_scaling, random_mask, scaling_csv, simulate_coalescence,
    trajectories_csv, McSystem, SiteOrder,
};
use censorlab_core::models::{GraphFamily, ModelKind};
use censorlab_core::{Error, ModelSpec, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, McMode};
use crate::report::{ClaimReport, OutputFile};
use crate::Outcome;

/// Command-line overrides for Monte Carlo runs.
#[derive(Clone, Debug, Default)]
pub struct McOverrides {
    /// Side length of a square torus.
    pub size: Option<usize>,
    pub beta: Option<f64>,
    pub order: Option<SiteOrder>,
    /// Number of replicas.
    pub seeds: Option<u64>,
    pub max_steps: Option<u64>,
}

impl McOverrides {
    pub fn parse_order(name: &str) -> Result<SiteOrder> {
        match name {
            "random" => Ok(SiteOrder::RandomScan),
            "systematic" => Ok(SiteOrder::Systematic { permutation: None }),
            "alternating" => Ok(SiteOrder::Alternating),
            other => Err(Error::Invalid(format!("unknown schedule {other:?} (random|systematic|alternating)"))),
        }
    }

    /// The config's model with size and `β` replaced; a square Ising torus
    /// when the config has none.
    pub fn model(&self, base: Option<&ModelSpec>) -> Option<ModelSpec> {
        if self.size.is_none() && self.beta.is_none() {
            return base.cloned();
        }
        let mut spec = base.cloned().unwrap_or_else(|| ModelSpec::ising(GraphFamily::Torus { d: 2, n: 16 }, 0.0, 0.0));
        if let Some(n) = self.size {
            spec.graph = match spec.graph {
                GraphFamily::Torus { d, .. } => GraphFamily::Torus { d, n },
                GraphFamily::Cycle { .. } => GraphFamily::Cycle { n },
                GraphFamily::Path { .. } => GraphFamily::Path { n },
                GraphFamily::Complete { .. } => GraphFamily::Complete { n },
                GraphFamily::Edgeless { .. } => GraphFamily::Edgeless { n },
                tree @ GraphFamily::Tree { .. } => tree,
            };
        }
        if let Some(b) = self.beta {
            if let ModelKind::Ising { beta, .. } = &mut spec.kind {
                *beta = b;
            }
        }
        Some(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoalescenceSummary {
    pub n_sites: usize,
    pub replicas: u64,
    pub coalesced: usize,
    pub mean_steps: Option<f64>,
    pub median_steps: Option<f64>,
    /// `n·H_n`, the expected time until every site is drawn under random scan.
    pub coupon_mean: f64,
    pub order_violation: Option<String>,
}

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn family(spec: &ModelSpec, sizes: &[usize]) -> Result<Vec<ModelSpec>> {
    sizes
        .iter()
        .map(|&n| {
            let graph = match spec.graph {
                GraphFamily::Torus { d, .. } => GraphFamily::Torus { d, n },
                GraphFamily::Cycle { .. } => GraphFamily::Cycle { n },
                GraphFamily::Path { .. } => GraphFamily::Path { n },
                GraphFamily::Complete { .. } => GraphFamily::Complete { n },
                GraphFamily::Edgeless { .. } => GraphFamily::Edgeless { n },
                GraphFamily::Tree { b, .. } => GraphFamily::Tree { b, depth: n },
            };
            Ok(ModelSpec { kind: spec.kind.clone(), graph })
        })
        .collect()
}

pub fn run(cfg: &ExperimentConfig, over: &McOverrides) -> Result<Outcome> {
    let opts = &cfg.mc;
    let order = over.order.clone().unwrap_or_else(|| opts.order.clone());
    let replicas = over.seeds.unwrap_or(opts.replicas);
    let max_steps = over.max_steps.unwrap_or(opts.max_steps);
    let spec = over.model(cfg.model.as_ref());
    let system = match (&spec, &cfg.model_file) {
        (Some(s), _) => McSystem::from_spec(s)?,
        (None, Some(_)) => McSystem::new(&cfg.build_system()?)?,
        (None, None) => return Err(Error::Invalid("config needs a model or a model_file".into())),
    };
    let n = system.n_sites();
    let seed = cfg.seed;
    match opts.mode {
        McMode::Coalescence => {
            let runs: Vec<Result<_>> = (0..replicas)
                .into_par_iter()
                .map(|r| simulate_coalescence(&system, &order, seed, r, max_steps, opts.checkpoint_every))
                .collect();
            let mut trajectories = Vec::new();
            let mut violation = None;
            for r in runs {
                match r {
                    Ok(t) => trajectories.push(t),
                    Err(e @ Error::OrderViolation { .. }) => {
                        violation.get_or_insert(e.to_string());
                    }
                    Err(e) => return Err(e),
                }
            }
            let mut times: Vec<f64> = trajectories.iter().filter_map(|t| t.coalescence).map(|s| s as f64).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let summary = CoalescenceSummary {
                n_sites: n,
                replicas,
                coalesced: times.len(),
                mean_steps: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
                median_steps: (!times.is_empty()).then(|| times[times.len() / 2]),
                coupon_mean: n as f64 * harmonic(n),
                order_violation: violation.clone(),
            };
            let claims = vec![ClaimReport::new("coupled chains stay ordered", violation.is_none(), 0.0)
                .with_witness(&violation)
                .with_seed(seed)];
            let files = vec![
                OutputFile::json("mc_coalescence.json", &serde_json::json!({ "summary": summary, "claims": claims })),
                OutputFile::text("trajectories.csv", trajectories_csv(&trajectories)),
            ];
            Ok(Outcome { claims, files })
        }
        McMode::Censoring => {
            let length = opts.length_factor * n;
            let mask = random_mask(length, opts.keep, seed.wrapping_add(1));
            let cmp = empirical_censoring_comparison(&system, &order, &mask, seed, replicas, opts.statistic)?;
            let claims = vec![ClaimReport::new(
                "censored runs stay at least as magnetized as full runs (4 standard errors)",
                !cmp.violation,
                0.0,
            )
            .with_details(&cmp)
            .with_seed(seed)];
            let files = vec![OutputFile::json(
                "mc_censoring.json",
                &serde_json::json!({ "comparison": cmp, "claims": claims }),
            )];
            Ok(Outcome { claims, files })
        }
        McMode::Scaling => {
            let base = spec.ok_or_else(|| Error::Invalid("scaling needs a built-in model".into()))?;
            let table = estimate_mixing_scaling(&family(&base, &opts.sizes)?, &order, seed, replicas, max_steps)?;
            let censored: usize = table.rows.iter().map(|r| r.censored).sum();
            let claims = vec![ClaimReport::new("every scaling run coalesced within the step cap", censored == 0, 0.0)
                .with_details(serde_json::json!({ "censored_runs": censored, "ratio_min": table.ratio_min, "ratio_max": table.ratio_max }))
                .with_seed(seed)];
            let files = vec![
                OutputFile::json("mc_scaling.json", &serde_json::json!({ "table": table, "claims": claims })),
                OutputFile::text("scaling.csv", scaling_csv(&table)),
            ];
            Ok(Outcome { claims, files })
        }
    }
}

//! Exact mixing times under alternating, systematic and random-scan schedules.

use censorlab_core::exact::{Dynamics, ExactModel, MixingTime, Start};
use censorlab_core::schedules::{parity_order, systematic_schedule};
use censorlab_core::Result;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::{curve_csv, ClaimReport, OutputFile};
use crate::Outcome;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub n_sites: usize,
    pub epsilon: f64,
    pub start: String,
    pub alternating: Option<MixingTime>,
    pub systematic: MixingTime,
    pub random: MixingTime,
    /// `τ_S / τ_A` and `τ_R / τ_A` when all are finite.
    pub ratio_systematic: Option<f64>,
    pub ratio_random: Option<f64>,
    pub bound_random_ln: f64,
    pub bound_random_log2: f64,
}

pub fn compare(
    model: &ExactModel,
    permutation: Option<&[usize]>,
    epsilon: f64,
    start: &Start,
    cap: usize,
) -> Result<Comparison> {
    let n = model.n_sites();
    let identity: Vec<usize> = (0..n).collect();
    let perm = permutation.unwrap_or(&identity);
    let sys = systematic_schedule(perm, 1)?;
    let systematic = model.mixing_time_exact(&Dynamics::Periodic(sys.steps), epsilon, start, cap)?;
    let random = model.mixing_time_exact(&Dynamics::RandomScan, epsilon, start, cap)?;
    let alternating = match model.system().graph().bipartition() {
        Some(parts) => Some(model.mixing_time_exact(&Dynamics::Phases(parity_order(parts)), epsilon, start, cap)?),
        None => None,
    };
    let tau_a = alternating.as_ref().and_then(|a| a.steps);
    let ratio = |m: &MixingTime| match (m.steps, tau_a) {
        (Some(x), Some(a)) if a > 0 => Some(x as f64 / a as f64),
        _ => None,
    };
    let nf = n as f64;
    Ok(Comparison {
        n_sites: n,
        epsilon,
        start: match start {
            Start::Top => "top".into(),
            Start::Worst => "worst".into(),
            other => format!("{other:?}"),
        },
        ratio_systematic: ratio(&systematic),
        ratio_random: ratio(&random),
        alternating,
        systematic,
        random,
        bound_random_ln: 2.0 * nf.ln(),
        bound_random_log2: 2.0 * nf.log2(),
    })
}

/// Claims for one comparison: `τ_S ≤ 2τ_A` and `τ_R ≤ 2 ln n · τ_A`.
pub fn comparison_claims(c: &Comparison) -> Vec<ClaimReport> {
    let Some(alt) = &c.alternating else {
        return vec![ClaimReport::skipped(
            format!("schedule comparisons ({} start)", c.start),
            "graph is not bipartite; alternating schedule unavailable",
        )];
    };
    let within = |x: Option<usize>, bound: f64| match (x, alt.steps) {
        (Some(x), Some(a)) => x as f64 <= bound * a as f64,
        _ => false,
    };
    let details = |x: &MixingTime, bound: f64| {
        serde_json::json!({
            "tau_alternating": alt.steps,
            "tau": x.steps,
            "bound_factor": bound,
            "ratio": match (x.steps, alt.steps) { (Some(x), Some(a)) if a > 0 => Some(x as f64 / a as f64), _ => None },
        })
    };
    let mut out = vec![ClaimReport::new(
        format!("systematic scan takes at most twice the alternating updates ({} start)", c.start),
        within(c.systematic.steps, 2.0),
        0.0,
    )
    .with_details(details(&c.systematic, 2.0))];
    let mut random = details(&c.random, c.bound_random_ln);
    random["holds_log2"] = within(c.random.steps, c.bound_random_log2).into();
    random["bound_factor_log2"] = c.bound_random_log2.into();
    out.push(
        ClaimReport::new(
            format!("random scan takes at most 2 ln n times the alternating updates ({} start)", c.start),
            within(c.random.steps, c.bound_random_ln),
            0.0,
        )
        .with_details(random),
    );
    out
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = ExactModel::new(cfg.build_system()?)?;
    let perm = cfg.compare.permutation.as_deref();
    let top = compare(&model, perm, cfg.epsilon, &Start::Top, cfg.compare.cap)?;
    let worst = compare(&model, perm, cfg.epsilon, &Start::Worst, cfg.compare.cap)?;
    // Only the top start is asserted; the worst start is reported alongside.
    let claims = comparison_claims(&top);
    let mut curves: Vec<(&str, &[(usize, f64)])> = Vec::new();
    if let Some(a) = &top.alternating {
        curves.push(("alternating_top", &a.curve));
    }
    curves.push(("systematic_top", &top.systematic.curve));
    curves.push(("random_top", &top.random.curve));
    if let Some(a) = &worst.alternating {
        curves.push(("alternating_worst", &a.curve));
    }
    curves.push(("systematic_worst", &worst.systematic.curve));
    curves.push(("random_worst", &worst.random.curve));
    let files = vec![
        OutputFile::json(
            "compare_schedules.json",
            &serde_json::json!({ "top": top, "worst": worst, "claims": claims }),
        ),
        OutputFile::text("tv_curves.csv", curve_csv(&curves)),
    ];
    Ok(Outcome { claims, files })
}

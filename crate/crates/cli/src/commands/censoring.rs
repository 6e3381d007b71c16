//! Exhaustive censoring and lemma suites on an enumerable monotone system.

use censorlab_core::exact::{DistVector, ExactModel};
use censorlab_core::schedules::ScheduleSpec;
use censorlab_core::system::{verify_monotone, MonotoneCertificate};
use censorlab_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CensoringOptions, ExperimentConfig, Tolerances};
use crate::report::{ClaimReport, OutputFile};
use crate::Outcome;

/// Distributions after every site sequence of length ≤ `max_len` from `start`.
/// `levels[len][code]` with `code = Σ seq[i] n^i`.
pub struct SequenceTable {
    pub n: usize,
    pub levels: Vec<Vec<DistVector>>,
    pub tv: Vec<Vec<f64>>,
}

impl SequenceTable {
    pub fn build(model: &ExactModel, start: &DistVector, max_len: usize) -> Self {
        let n = model.n_sites();
        let mut levels = vec![vec![start.clone()]];
        for len in 1..=max_len {
            let prev = &levels[len - 1];
            let width = n.pow(len as u32 - 1);
            let next: Vec<DistVector> =
                (0..width * n).into_par_iter().map(|code| model.update(&prev[code % width], code / width)).collect();
            levels.push(next);
        }
        let tv = levels.iter().map(|l| l.iter().map(|d| model.tv_to_pi(d).expect("same space")).collect()).collect();
        Self { n, levels, tv }
    }

    pub fn decode(&self, len: usize, code: usize) -> Vec<usize> {
        let mut c = code;
        (0..len)
            .map(|_| {
                let v = c % self.n;
                c /= self.n;
                v
            })
            .collect()
    }

    pub fn encode(&self, seq: &[usize]) -> usize {
        seq.iter().rev().fold(0, |acc, &v| acc * self.n + v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensorWitness {
    pub sequence: Vec<usize>,
    pub subsequence: Vec<usize>,
    pub tv_full: f64,
    pub tv_censored: f64,
    pub dominance_flow: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PairTally {
    pub checked: usize,
    pub tv_violations: usize,
    pub dominance_violations: usize,
}

/// Compares every sequence of length ≤ `max_len` with the subsequences
/// selected by `masks(len)`: full ⪯ censored and `tv(full) ≤ tv(censored)`.
pub fn compare_subsequences(
    model: &ExactModel,
    table: &SequenceTable,
    max_len: usize,
    masks: impl Fn(usize) -> Vec<u32> + Sync,
    tol: f64,
) -> Result<(PairTally, Option<CensorWitness>)> {
    let jobs: Vec<(usize, usize)> =
        (0..=max_len).flat_map(|len| (0..table.levels[len].len()).map(move |c| (len, c))).collect();
    let results = jobs
        .par_iter()
        .map(|&(len, code)| {
            let seq = table.decode(len, code);
            let mut tally = PairTally::default();
            let mut witness = None;
            for mask in masks(len) {
                let sub: Vec<usize> = (0..len).filter(|i| mask >> i & 1 == 1).map(|i| seq[i]).collect();
                let (sl, sc) = (sub.len(), table.encode(&sub));
                let full = &table.levels[len][code];
                let cens = &table.levels[sl][sc];
                let (tf, tc) = (table.tv[len][code], table.tv[sl][sc]);
                let cert = model.stochastic_dominance(full, cens)?;
                tally.checked += 1;
                let tv_bad = tf > tc + tol;
                if tv_bad {
                    tally.tv_violations += 1;
                }
                if !cert.dominates() {
                    tally.dominance_violations += 1;
                }
                if (tv_bad || !cert.dominates()) && witness.is_none() {
                    witness = Some(CensorWitness {
                        sequence: seq.clone(),
                        subsequence: sub,
                        tv_full: tf,
                        tv_censored: tc,
                        dominance_flow: cert.flow,
                    });
                }
            }
            Ok((tally, witness))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = PairTally::default();
    let mut first = None;
    for (t, w) in results {
        total.checked += t.checked;
        total.tv_violations += t.tv_violations;
        total.dominance_violations += t.dominance_violations;
        if first.is_none() {
            first = w;
        }
    }
    Ok((total, first))
}

fn tally_claim(name: &str, tally: PairTally, witness: Option<CensorWitness>, tol: f64) -> ClaimReport {
    let ok = tally.tv_violations == 0 && tally.dominance_violations == 0;
    ClaimReport::new(name, ok, tol).with_witness(witness).with_details(tally)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LemmaTally {
    pub distributions: usize,
    pub ratio_preserved: usize,
    pub ratio_violations: usize,
    pub update_dominated: usize,
    pub dominance_violations: usize,
    pub tv_pairs: usize,
    pub tv_violations: usize,
    pub extension_checks: usize,
    pub extension_violations: usize,
}

/// Lemma-style properties over every distribution reachable from the top
/// state by at most `opts.lemma_length` updates.
pub fn lemma_claims(model: &ExactModel, table: &SequenceTable, max_len: usize, tol: f64) -> Result<Vec<ClaimReport>> {
    let dists: Vec<&DistVector> = table.levels[..=max_len].iter().flatten().collect();
    let n = model.n_sites();
    let results = dists
        .par_iter()
        .map(|mu| {
            let mut t = LemmaTally { distributions: 1, ..Default::default() };
            let mut w: Vec<String> = Vec::new();
            let mu_ok = model.likelihood_ratio_increasing(mu).is_ok();
            if !mu_ok {
                t.ratio_violations += 1;
                w.push("reachable distribution has non-increasing ratio".into());
            }
            let tv_mu = model.tv_to_pi(mu)?;
            for v in 0..n {
                let nu = model.update(mu, v);
                if mu_ok {
                    if model.likelihood_ratio_increasing(&nu).is_ok() {
                        t.ratio_preserved += 1;
                    } else {
                        t.ratio_violations += 1;
                        w.push(format!("ratio lost after updating site {v}"));
                    }
                    if model.stochastic_dominance(&nu, mu)?.dominates() {
                        t.update_dominated += 1;
                        t.tv_pairs += 1;
                        if model.tv_to_pi(&nu)? > tv_mu + tol {
                            t.tv_violations += 1;
                            w.push(format!("tv grew after updating site {v}"));
                        }
                    } else {
                        t.dominance_violations += 1;
                        w.push(format!("update at site {v} not dominated"));
                    }
                }
            }
            let f = model.monotone_extension(mu)?;
            let k = model.space().n_spins();
            for code in 0..f.len() {
                let mut place = 1;
                for _ in 0..n {
                    if (code / place) % k + 1 < k {
                        t.extension_checks += 1;
                        let (a, b) = (f[code], f[code + place]);
                        if a > b + tol * a.abs().max(b.abs()).max(1.0) {
                            t.extension_violations += 1;
                            w.push(format!("extension decreases from raw code {code}"));
                        }
                    }
                    place *= k;
                }
            }
            if mu_ok {
                for i in 0..model.space().len() {
                    let r = mu.prob(i) / model.pi().prob(i);
                    let e = f[model.space().code(i) as usize];
                    t.extension_checks += 1;
                    if (r - e).abs() > tol * r.abs().max(1.0) {
                        t.extension_violations += 1;
                        w.push("extension disagrees with the ratio on Ω".into());
                    }
                }
            }
            Ok((t, w.into_iter().next()))
        })
        .collect::<Result<Vec<_>>>()?;

    // Cross pairs among the shortest sequences.
    let small: Vec<&DistVector> = table.levels[..=max_len.min(2)].iter().flatten().collect();
    let cross = small
        .par_iter()
        .map(|a| {
            let mut pairs = 0;
            let mut bad = 0;
            if model.likelihood_ratio_increasing(a).is_ok() {
                let ta = model.tv_to_pi(a)?;
                for b in &small {
                    if model.stochastic_dominance(a, b)?.dominates() {
                        pairs += 1;
                        if ta > model.tv_to_pi(b)? + tol {
                            bad += 1;
                        }
                    }
                }
            }
            Ok((pairs, bad))
        })
        .collect::<Result<Vec<(usize, usize)>>>()?;

    let mut t = LemmaTally::default();
    let mut witness = [None, None, None, None];
    for (x, w) in &results {
        t.distributions += x.distributions;
        t.ratio_preserved += x.ratio_preserved;
        t.ratio_violations += x.ratio_violations;
        t.update_dominated += x.update_dominated;
        t.dominance_violations += x.dominance_violations;
        t.tv_pairs += x.tv_pairs;
        t.tv_violations += x.tv_violations;
        t.extension_checks += x.extension_checks;
        t.extension_violations += x.extension_violations;
        let slot = if x.ratio_violations > 0 {
            0
        } else if x.dominance_violations > 0 {
            1
        } else if x.tv_violations > 0 {
            2
        } else {
            3
        };
        if witness[slot].is_none() {
            witness[slot] = w.clone();
        }
    }
    for (p, b) in cross {
        t.tv_pairs += p;
        t.tv_violations += b;
    }
    Ok(vec![
        ClaimReport::new("increasing likelihood ratio is preserved by updates", t.ratio_violations == 0, tol)
            .with_witness(&witness[0])
            .with_details(serde_json::json!({"distributions": t.distributions, "preserved": t.ratio_preserved, "violations": t.ratio_violations})),
        ClaimReport::new("an update of an increasing-ratio law is dominated by it", t.dominance_violations == 0, tol)
            .with_witness(&witness[1])
            .with_details(serde_json::json!({"dominated": t.update_dominated, "violations": t.dominance_violations})),
        ClaimReport::new("a dominated increasing-ratio law is closer to stationarity", t.tv_violations == 0, tol)
            .with_witness(&witness[2])
            .with_details(serde_json::json!({"pairs": t.tv_pairs, "violations": t.tv_violations})),
        ClaimReport::new("monotone extension is increasing and agrees with the ratio", t.extension_violations == 0, tol)
            .with_witness(&witness[3])
            .with_details(serde_json::json!({"checks": t.extension_checks, "violations": t.extension_violations})),
    ])
}

/// Random schedules averaged exactly: random-scan runs against every fixed
/// censoring mask, and birthday-thinned rounds against full systematic rounds.
fn random_schedule_claim(model: &ExactModel, max_len: usize, tol: f64) -> Result<ClaimReport> {
    let top = model.top()?;
    let mut checked = 0;
    let mut first: Option<String> = None;
    let mut record = |name: String, full: &DistVector, cens: &DistVector| -> Result<()> {
        checked += 1;
        let ok =
            model.stochastic_dominance(full, cens)?.dominates() && model.tv_to_pi(full)? <= model.tv_to_pi(cens)? + tol;
        if !ok && first.is_none() {
            first = Some(name);
        }
        Ok(())
    };
    for len in 1..=max_len {
        let base = ScheduleSpec::RandomScan { length: len, seed: 0 };
        let (full, _) = model.apply_spec(&top, &base)?;
        for mask in 0u32..1 << len {
            let mask: Vec<bool> = (0..len).map(|i| mask >> i & 1 == 1).collect();
            let spec = ScheduleSpec::Censored { base: Box::new(base.clone()), mask: mask.clone() };
            let (cens, _) = model.apply_spec(&top, &spec)?;
            record(format!("random scan length {len}, mask {mask:?}"), &full, &cens)?;
        }
    }
    for rounds in 1..=3 {
        let (full, _) = model.apply_spec(&top, &ScheduleSpec::Systematic { permutation: None, rounds })?;
        let (cens, _) = model.apply_spec(&top, &ScheduleSpec::Birthday { rounds, permutation: None, seed: 0 })?;
        record(format!("birthday thinning of {rounds} systematic rounds"), &full, &cens)?;
    }
    Ok(ClaimReport::new("censoring a random schedule cannot speed mixing", first.is_none(), tol)
        .with_witness(first)
        .with_details(serde_json::json!({ "checked": checked })))
}

/// Fails with a configuration error unless the system is monotone.
pub fn require_monotone(model: &ExactModel) -> Result<()> {
    match verify_monotone(model.system(), model.space()) {
        MonotoneCertificate::Ok => Ok(()),
        cert => Err(Error::Model(format!(
            "system not monotone: {}",
            serde_json::to_string(&cert).expect("certificate serializes")
        ))),
    }
}

/// The full censoring suite on one model.
pub fn censoring_suite(model: &ExactModel, opts: &CensoringOptions, tol: &Tolerances) -> Result<Vec<ClaimReport>> {
    require_monotone(model)?;
    let top = model.top()?;
    let longest = opts.max_length.max(opts.omission_length).max(opts.lemma_length);
    let table = SequenceTable::build(model, &top, longest);
    let mut claims = Vec::new();

    let all_masks = |len: usize| (0..1u32 << len).collect::<Vec<_>>();
    let (t, w) = compare_subsequences(model, &table, opts.max_length, all_masks, tol.ineq)?;
    claims.push(tally_claim("every subsequence from the top state is dominating and no closer", t, w, tol.ineq));

    let omissions = |len: usize| (0..len).map(|i| ((1u32 << len) - 1) & !(1 << i)).collect::<Vec<_>>();
    let (t, w) = compare_subsequences(model, &table, opts.omission_length, omissions, tol.ineq)?;
    claims.push(tally_claim("leaving out one update from the top state is dominating and no closer", t, w, tol.ineq));

    // Relaxed start with weakly increasing ratio 1 + (number of top spins).
    let tilted = model.tilted(|c| 1.0 + c.spins().iter().map(|&s| s as f64).sum::<f64>())?;
    let relaxed = SequenceTable::build(model, &tilted, opts.max_length);
    let (t, w) = compare_subsequences(model, &relaxed, opts.max_length, all_masks, tol.ineq)?;
    claims.push(tally_claim(
        "every subsequence from an increasing-ratio start is dominating and no closer",
        t,
        w,
        tol.ineq,
    ));

    claims.push(random_schedule_claim(model, opts.random_length, tol.ineq)?);
    claims.extend(lemma_claims(model, &table, opts.lemma_length, tol.ineq)?);
    Ok(claims)
}

#[derive(Serialize)]
struct SuiteFile<'a> {
    system: &'a serde_json::Value,
    states: usize,
    claims: &'a [ClaimReport],
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = ExactModel::new(cfg.build_system()?)?;
    let claims = censoring_suite(&model, &cfg.censoring, &cfg.tolerance)?;
    let system = serde_json::to_value(model.system().to_file())?;
    let file = OutputFile::json(
        "verify_censoring.json",
        &SuiteFile { system: &system, states: model.space().len(), claims: &claims },
    );
    Ok(Outcome { claims, files: vec![file] })
}

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use peerpred::io::{parse_mechanism, parse_prior, parse_profile, LoadedPrior, PriorFile, ProfileFile};
use peerpred::mechanism::{
    check_equilibrium, expected_conditional_payoff, monte_carlo_payments, solve_equilibrium_predictions,
    solve_equilibrium_predictions_direct, welfare_metrics,
};
use peerpred::signals::{gamma2, random_snife_prior, validate_snife, AssumptionReport, DEFAULT_TOL};
use peerpred::strategy::{
    aggregate_strategies, constant_report_profile, counterexample_profile, permutation_profile,
    truth_telling_profile, uniform_report_profile, FixedProfile, StrategyRule, TruthTelling,
};
use peerpred::suite::{run_criterion, sample_signal_strategy, CRITERIA};
use peerpred::theorems::{
    far_from_permutation_gap, impossibility_cycle, main_lemma_audit, n_epsilon_audit, n_epsilon_deviation,
    symmetric_best_prediction_profile, welfare_comparison, AuditResult,
};
use peerpred::{Config, PermutationMap, Prior, Profile, ScoringRule, Theta, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{Cell, Output, Table};
use crate::{Command, Opts};

pub struct Outcome {
    pub output: Output,
    /// False when an input failed validation.
    pub valid: bool,
}

impl From<Output> for Outcome {
    fn from(output: Output) -> Self {
        Self { output, valid: true }
    }
}

/// Raised when a prior cannot be used; carries the report to emit.
#[derive(Debug)]
struct Invalid(AssumptionReport);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("prior failed validation")
    }
}

impl std::error::Error for Invalid {}

const DEFAULT_N: usize = 4;
const DEFAULT_SWEEP: [usize; 4] = [8, 16, 32, 64];

pub fn run(command: Command, opts: &Opts) -> Result<Outcome> {
    let result = match command {
        Command::ValidatePrior => validate_prior(opts),
        Command::GenPrior => gen_prior(opts).map(Outcome::from),
        Command::Payout => payout(opts).map(Outcome::from),
        Command::Welfare => welfare(opts).map(Outcome::from),
        Command::CheckEq => check_eq(opts).map(Outcome::from),
        Command::SolvePredictions => solve_predictions(opts).map(Outcome::from),
        Command::Audit => audit(opts).map(Outcome::from),
        Command::Impossibility => impossibility(opts).map(Outcome::from),
        Command::SweepN => sweep_n(opts).map(Outcome::from),
        Command::Suite => suite(opts),
    };
    match result {
        Err(e) => match e.downcast::<Invalid>() {
            Ok(Invalid(report)) => {
                eprintln!("error: prior failed validation");
                Ok(Outcome {
                    output: report_output(&report),
                    valid: false,
                })
            }
            Err(e) => Err(e),
        },
        ok => ok,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_prior(path: &Path) -> Result<LoadedPrior> {
    parse_prior(&read(path)?).with_context(|| format!("prior {}", path.display()))
}

/// The prior from `--prior`, refusing ones that are not pairwise symmetric.
fn usable_prior(opts: &Opts) -> Result<LoadedPrior> {
    let path = opts.prior.as_ref().ok_or_else(|| anyhow!("--prior is required"))?;
    let loaded = load_prior(path)?;
    let report = validate_snife(&loaded.pairwise, DEFAULT_TOL);
    if !report.symmetric_ok {
        return Err(Invalid(report).into());
    }
    Ok(loaded)
}

fn mechanism(opts: &Opts, m: usize) -> Result<Config> {
    let mut cfg = match &opts.mech {
        Some(path) => parse_mechanism(&read(path)?).with_context(|| format!("mechanism {}", path.display()))?,
        None => Config::new(1.0, 1.0 / (8.0 * m as f64), ScoringRule::Log)?,
    };
    if let Some(r) = &opts.rule {
        cfg.rule = r.parse().context("--rule")?;
    }
    if let Some(v) = &opts.variant {
        cfg.variant = v.parse::<Variant>().context("--variant")?;
    }
    if let Some(a) = opts.alpha {
        cfg.alpha = a;
    }
    if let Some(b) = opts.beta {
        cfg.beta = b;
    }
    cfg.validate().context("mechanism")?;
    if let Some(w) = cfg.regime_warning(m) {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn single_n(opts: &Opts, default: usize) -> Result<usize> {
    match opts.n.as_slice() {
        [] => Ok(default),
        [n] => Ok(*n),
        _ => bail!("--n takes a single value for this command"),
    }
}

fn parse_signal(prior: &Prior, text: &str) -> Result<usize> {
    if let Some(k) = prior.space().index_of(text) {
        return Ok(k);
    }
    let k: usize = text.parse().map_err(|_| anyhow!("unknown signal {text:?}"))?;
    if k >= prior.m() {
        bail!("signal index {k} out of range for m = {}", prior.m());
    }
    Ok(k)
}

fn parse_permutation(text: &str) -> Result<PermutationMap> {
    let mapping = text
        .split(['-', ','])
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| anyhow!("permutation {text:?} is not a list of indices"))?;
    Ok(PermutationMap::new(mapping)?)
}

/// Resolves `--profile` to a name and a profile. Keywords build reference
/// profiles; anything else is read as a profile file.
fn profile(opts: &Opts, prior: &Prior) -> Result<(String, Profile)> {
    let choice = opts.profile.as_deref().unwrap_or("truth");
    let m = prior.m();
    let named = |default: usize| single_n(opts, default);
    let prof = match choice {
        "truth" => truth_telling_profile(prior, named(DEFAULT_N)?)?,
        "uniform" => uniform_report_profile(prior, named(DEFAULT_N)?)?,
        "counterexample" => counterexample_profile(m, named(m)?)?,
        s if s.starts_with("constant:") => {
            constant_report_profile(m, named(DEFAULT_N)?, parse_signal(prior, &s["constant:".len()..])?)?
        }
        s if s.starts_with("perm:") => {
            let pi = parse_permutation(&s["perm:".len()..])?;
            permutation_profile(prior, named(DEFAULT_N)?, &pi)?
        }
        path => {
            let p = parse_profile(&read(Path::new(path))?).with_context(|| format!("profile {path}"))?;
            if p.m() != m {
                bail!("profile {path} has {} signals but the prior has {m}", p.m());
            }
            p
        }
    };
    Ok((choice.to_string(), prof))
}

fn report_output(report: &AssumptionReport) -> Output {
    let witnesses = report
        .witnesses
        .iter()
        .map(|w| {
            let sig: Vec<String> = w.signals.iter().map(ToString::to_string).collect();
            format!("{}:{}", serde_json::to_value(w.assumption).unwrap().as_str().unwrap_or(""), sig.join(" "))
        })
        .collect::<Vec<_>>()
        .join(";");
    let mut t = Table::new(&["symmetric_ok", "nonzero_ok", "informative_ok", "finegrained_ok", "witnesses"]);
    t.push(vec![
        report.symmetric_ok.into(),
        report.nonzero_ok.into(),
        report.informative_ok.into(),
        report.finegrained_ok.into(),
        witnesses.into(),
    ]);
    Output::Both(t, serde_json::to_value(report).expect("report serializes"))
}

fn validate_prior(opts: &Opts) -> Result<Outcome> {
    let path = opts
        .input
        .as_ref()
        .or(opts.prior.as_ref())
        .ok_or_else(|| anyhow!("--in is required"))?;
    let loaded = load_prior(path)?;
    let report = validate_snife(&loaded.pairwise, DEFAULT_TOL);
    Ok(Outcome {
        output: report_output(&report),
        valid: report.all_ok(),
    })
}

fn gen_prior(opts: &Opts) -> Result<Output> {
    let latent = random_snife_prior::<f64>(opts.m, opts.states, opts.seed)?;
    let file = if opts.pairwise {
        PriorFile::from_pairwise(&latent.to_pairwise()?)
    } else {
        PriorFile::from_latent(&latent)
    };
    Ok(Output::Document(serde_json::to_value(file)?))
}

fn payout(opts: &Opts) -> Result<Output> {
    let loaded = usable_prior(opts)?;
    let prior = &loaded.pairwise;
    let cfg = mechanism(opts, prior.m())?;
    let (_, prof) = profile(opts, prior)?;
    let sampled = if opts.trials > 0 {
        let latent = loaded
            .latent
            .as_ref()
            .ok_or_else(|| anyhow!("--trials needs a latent prior to sample from"))?;
        Some(monte_carlo_payments(&cfg, latent, &prof, opts.trials, opts.seed)?)
    } else {
        None
    };
    let mut t = Table::new(&["agent", "expected_action_payoff", "sampled_mean_payment", "sampled_stderr"]);
    for i in 0..prof.n() {
        let mut v = 0.0;
        for s in 0..prior.m() {
            v += prior.marginal()[s] * expected_conditional_payoff(&cfg, prior, &prof, i, s, None)?;
        }
        t.push(vec![
            i.into(),
            v.into(),
            sampled.as_ref().map(|m| m.mean_payments[i]).into(),
            sampled.as_ref().map(|m| m.stderr_payments[i]).into(),
        ]);
    }
    Ok(Output::Table(t))
}

fn welfare(opts: &Opts) -> Result<Output> {
    let prior = usable_prior(opts)?.pairwise;
    if opts.profile.is_none() {
        let cfg = mechanism(opts, prior.m())?;
        let n = single_n(opts, prior.m())?;
        let mut t = Table::new(&["profile", "classification_score", "max_gap", "tau_close_level", "margin_to_truth"]);
        for r in welfare_comparison(&cfg, &prior, n)? {
            t.push(vec![
                r.name.into(),
                r.classification.into(),
                r.max_gap.into(),
                r.tau_close_level.into(),
                r.margin_to_truth.into(),
            ]);
        }
        return Ok(Output::Table(t));
    }
    let (name, prof) = profile(opts, &prior)?;
    let w = welfare_metrics(&prior, &prof)?;
    let mut t = Table::new(&[
        "profile",
        "diversity",
        "inconsistency",
        "total_divergence",
        "classification_score",
        "average_welfare",
    ]);
    t.push(vec![
        name.into(),
        w.diversity.into(),
        w.inconsistency.into(),
        w.total_divergence.into(),
        w.classification_score.into(),
        w.average_welfare.into(),
    ]);
    Ok(Output::Table(t))
}

fn check_eq(opts: &Opts) -> Result<Output> {
    let prior = usable_prior(opts)?.pairwise;
    let cfg = mechanism(opts, prior.m())?;
    let (_, prof) = profile(opts, &prior)?;
    let report = check_equilibrium(&cfg, &prior, &prof, opts.eps.unwrap_or(1e-9))?;
    let mut t = Table::new(&["agent", "signal", "prescribed_value", "best_value", "best_signal", "gap", "tie"]);
    for e in &report.entries {
        t.push(vec![
            e.agent.into(),
            e.signal.into(),
            e.prescribed_value.into(),
            e.best_value.into(),
            e.best_signal.into(),
            e.gap.into(),
            e.tie.into(),
        ]);
    }
    Ok(Output::Both(t, serde_json::to_value(&report)?))
}

fn solve_predictions(opts: &Opts) -> Result<Output> {
    let prior = usable_prior(opts)?.pairwise;
    let cfg = mechanism(opts, prior.m())?;
    let (_, prof) = profile(opts, &prior)?;
    let thetas = prof.thetas();
    let solved = if opts.direct {
        solve_equilibrium_predictions_direct(&cfg, &prior, &thetas)?
    } else {
        solve_equilibrium_predictions(&cfg, &prior, &thetas)?
    };
    eprintln!("residual {:e} after {} iterations", solved.residual, solved.iterations);
    Ok(Output::Document(serde_json::to_value(ProfileFile::from_profile(&solved.profile))?))
}

fn audit_row(t: &mut Table, docs: &mut Vec<Value>, r: &AuditResult) {
    t.push(vec![
        r.name.as_str().into(),
        r.lhs.into(),
        r.rhs.into(),
        r.slack.into(),
        r.passed.into(),
        Cell::Empty,
    ]);
    docs.push(serde_json::to_value(r).expect("audit serializes"));
}

fn skipped_row(t: &mut Table, docs: &mut Vec<Value>, name: &str, reason: String) {
    t.push(vec![name.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, reason.as_str().into()]);
    docs.push(json!({ "name": name, "skipped": reason }));
}

fn mean_strategy(prof: &Profile) -> Result<Theta> {
    Ok(Theta::new(aggregate_strategies(prof).mean)?)
}

fn audit(opts: &Opts) -> Result<Output> {
    let prior = usable_prior(opts)?.pairwise;
    let m = prior.m();
    let cfg = mechanism(opts, m)?;
    let (_, prof) = profile(opts, &prior)?;
    let mut t = Table::new(&["audit", "lhs", "rhs", "slack", "passed", "note"]);
    let mut docs = Vec::new();
    audit_row(&mut t, &mut docs, &main_lemma_audit(&cfg, &prior, &prof)?);
    match opts.eps {
        Some(eps) => match n_epsilon_audit(&prior, &prof.thetas(), eps) {
            Ok(r) => audit_row(&mut t, &mut docs, &r),
            Err(peerpred::Error::Precondition(why)) => skipped_row(&mut t, &mut docs, "n_epsilon", why),
            Err(e) => return Err(e.into()),
        },
        None => skipped_row(&mut t, &mut docs, "n_epsilon", "needs --eps".into()),
    }
    let tau = opts.tau.unwrap_or(1.0 / (2.0 * m as f64));
    match far_from_permutation_gap(&prior, &mean_strategy(&prof)?, tau) {
        Ok(r) => audit_row(&mut t, &mut docs, &r),
        Err(peerpred::Error::Precondition(why)) => skipped_row(&mut t, &mut docs, "far_from_permutation", why),
        Err(e) => return Err(e.into()),
    }
    Ok(Output::Both(t, Value::Array(docs)))
}

fn impossibility(opts: &Opts) -> Result<Output> {
    let prior = usable_prior(opts)?.pairwise;
    let pi = match &opts.pi {
        Some(text) => parse_permutation(text)?,
        None => PermutationMap::cycle(prior.m()),
    };
    let (name, prof) = profile(opts, &prior)?;
    let n = prof.n();
    let rule: Box<dyn StrategyRule<f64>> = if name == "truth" {
        Box::new(TruthTelling)
    } else {
        Box::new(FixedProfile(prof))
    };
    let rows = impossibility_cycle(&prior, rule.as_ref(), n, &pi)?;
    let mut t = Table::new(&["step", "lhs", "rhs", "slack", "passed"]);
    for r in &rows {
        t.push(vec![r.name.as_str().into(), r.lhs.into(), r.rhs.into(), r.slack.into(), r.passed.into()]);
    }
    Ok(Output::Both(t, serde_json::to_value(&rows)?))
}

struct SweepUnit {
    deviation: f64,
    td_gap: f64,
    welfare_excess: f64,
}

/// One random list of signal strategies at population size `n`: how far the
/// leave-one-out predictions drift from the symmetrized ones, and how far the
/// solved profile's classification score exceeds the symmetrized total
/// divergence.
fn sweep_unit(cfg: &Config, prior: &Prior, seed: u64, n: usize, unit: usize) -> Result<SweepUnit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) | unit as u64);
    let thetas: Vec<Theta> = (0..n).map(|_| sample_signal_strategy(&mut rng, prior.m())).collect();
    let deviation = n_epsilon_deviation(prior, &thetas)?;
    let bp = Profile::with_best_predictions(prior, thetas.clone())?;
    let td_bp = welfare_metrics(prior, &bp)?.total_divergence;
    let sym = symmetric_best_prediction_profile(prior, &mean_strategy(&bp)?, n)?;
    let td_sym = welfare_metrics(prior, &sym)?.total_divergence;
    let solved = solve_equilibrium_predictions(cfg, prior, &thetas)?.profile;
    let score = welfare_metrics(prior, &solved)?.classification_score;
    Ok(SweepUnit {
        deviation,
        td_gap: (td_bp - td_sym).abs(),
        welfare_excess: score - td_sym,
    })
}

fn sweep_n(opts: &Opts) -> Result<Output> {
    let prior = usable_prior(opts)?.pairwise;
    let m = prior.m();
    let cfg = mechanism(opts, m)?;
    let sizes = if opts.n.is_empty() { DEFAULT_SWEEP.to_vec() } else { opts.n.clone() };
    if opts.units == 0 {
        bail!("--units must be at least 1");
    }
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..opts.units).map(move |u| (n, u))).collect();
    let results = jobs
        .par_iter()
        .map(|&(n, u)| sweep_unit(&cfg, &prior, opts.seed, n, u).with_context(|| format!("n = {n}, unit {u}")))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&["n", "gamma2", "max_deviation", "max_td_gap", "max_welfare_excess", "within_gamma2"]);
    for (k, &n) in sizes.iter().enumerate() {
        let chunk = &results[k * opts.units..(k + 1) * opts.units];
        let bound: f64 = gamma2(m, n);
        let dev = chunk.iter().map(|r| r.deviation).fold(0.0, f64::max);
        let gap = chunk.iter().map(|r| r.td_gap).fold(0.0, f64::max);
        let excess = chunk.iter().map(|r| r.welfare_excess).fold(f64::NEG_INFINITY, f64::max);
        let ok = dev <= bound && gap <= bound && excess <= bound;
        t.push(vec![n.into(), bound.into(), dev.into(), gap.into(), excess.into(), ok.into()]);
    }
    Ok(Output::Table(t))
}

fn suite(opts: &Opts) -> Result<Outcome> {
    let outcomes: Vec<_> = CRITERIA
        .par_iter()
        .map(|&(id, _)| {
            let start = Instant::now();
            let o = run_criterion(id, opts.seed).expect("listed criterion");
            (o, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut t = Table::new(&["criterion", "name", "passed", "detail"]);
    let mut all = true;
    for (o, secs) in &outcomes {
        eprintln!("criterion {:>2} {} in {secs:.2}s", o.id, if o.passed { "passed" } else { "FAILED" });
        all &= o.passed;
        t.push(vec![o.id.into(), o.name.into(), o.passed.into(), o.detail.as_str().into()]);
    }
    Ok(Outcome {
        output: Output::Table(t),
        valid: all,
    })
}

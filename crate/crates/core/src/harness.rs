//! Exhaustive oracles, the Monte-Carlo experiment runner and the numeric
//! check of the binomial tail sum.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::advertiser::{build_star_greedy, lp_rounding_strategy, AdStrategy, Provenance};
use crate::dynamics::{
    compute_diagnostics, default_t_prime, default_t_star, run_best_response, run_ltd, run_psa, CommitPolicy,
    DynamicsTrace, LtdConfig, ProtocolRun, PsaConfig, ScheduleConfig, SchedulePolicy,
};
use crate::error::{Error, Result};
use crate::game::{CoverTracker, Instance, JointState};
use crate::instances::{instance_from_json, GeneratorSpec};
use crate::scalar::Scalar;

/// Largest `n` the exhaustive routines accept by default.
pub const DEFAULT_NMAX: usize = 22;

fn refuse_large(n: usize, nmax: usize) -> Result<()> {
    if n > nmax || n >= 63 {
        Err(Error::TooLarge { n, nmax })
    } else {
        Ok(())
    }
}

/// Visits every state in Gray-code order, passing the tracker and the agent
/// just flipped (`None` for the initial all-off state).
fn gray_walk<T: Scalar>(inst: &Instance<T>, mut visit: impl FnMut(&CoverTracker<'_, T>, Option<usize>)) {
    let n = inst.n();
    let mut tr = CoverTracker::new(inst, JointState::all_off(n)).expect("all-off has the right length");
    visit(&tr, None);
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        tr.flip(i);
        visit(&tr, Some(i));
    }
}

/// Minimum social cost over all `2ⁿ` states.
///
/// Ties go to the lexicographically smallest action vector (`off < on`,
/// agent 0 most significant). Costs are tracked incrementally and every
/// candidate is confirmed by a full recomputation.
pub fn brute_force_opt<T: Scalar>(inst: &Instance<T>, nmax: usize) -> Result<(T, JointState)> {
    let n = inst.n();
    refuse_large(n, nmax)?;
    let social_weight = |id: usize| {
        let s = inst.set(id);
        T::from_usize_lossy(s.len()) * s.weight()
    };
    let mut running = inst.social_cost(&JointState::all_off(n))?;
    let mut best = running;
    let mut best_state = JointState::all_off(n);
    let slack = |v: T| 1e-6 * (1.0 + v.to_f64_lossy().abs());
    gray_walk(inst, |tr, flipped| {
        let Some(i) = flipped else { return };
        let s = tr.state();
        if s.get(i).is_on() {
            // sets that i just covered were uncovered a moment ago
            let newly: T = inst
                .incident(i)
                .iter()
                .filter(|&&id| inst.set(id).members().iter().all(|&m| m == i || !s.get(m).is_on()))
                .map(|&id| social_weight(id))
                .fold(T::zero(), |a, b| a + b);
            running = running + inst.cost_of(i) - newly;
        } else {
            let exposed: T = inst
                .incident(i)
                .iter()
                .filter(|&&id| !tr.is_covered(id))
                .map(|&id| social_weight(id))
                .fold(T::zero(), |a, b| a + b);
            running = running - inst.cost_of(i) + exposed;
        }
        if running.to_f64_lossy() <= best.to_f64_lossy() + slack(best) {
            let exact = inst.social_cost(s).expect("state length matches");
            running = exact;
            if exact.definitely_lt(best) || (exact.approx_eq(best) && *s < best_state) {
                best = exact;
                best_state = s.clone();
            }
        }
    });
    Ok((best, best_state))
}

/// `num/den` with `0/0 = 1`.
fn ratio<T: Scalar>(num: T, den: T) -> f64 {
    let (a, b) = (num.to_f64_lossy(), den.to_f64_lossy());
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashEnumeration<T> {
    /// Every pure equilibrium with its social cost, in lexicographic order.
    pub equilibria: Vec<(JointState, T)>,
    pub opt: T,
    pub opt_state: JointState,
    /// Worst equilibrium cost over OPT.
    pub poa: f64,
    /// Best equilibrium cost over OPT.
    pub pos: f64,
}

pub fn enumerate_nash<T: Scalar>(inst: &Instance<T>, nmax: usize) -> Result<NashEnumeration<T>> {
    let (opt, opt_state) = brute_force_opt(inst, nmax)?;
    let n = inst.n();
    let mut equilibria = Vec::new();
    gray_walk(inst, |tr, _| {
        if (0..n).all(|i| !tr.is_improvable(i)) {
            let s = tr.state().clone();
            let cost = inst.social_cost(&s).expect("state length matches");
            equilibria.push((s, cost));
        }
    });
    equilibria.sort_by(|a, b| a.0.cmp(&b.0));
    let worst = equilibria.iter().map(|e| e.1).reduce(|a, b| a.max_of(b));
    let best = equilibria.iter().map(|e| e.1).reduce(|a, b| a.min_of(b));
    Ok(NashEnumeration {
        poa: worst.map_or(f64::NAN, |w| ratio(w, opt)),
        pos: best.map_or(f64::NAN, |b| ratio(b, opt)),
        equilibria,
        opt,
        opt_state,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed: `splitmix64(splitmix64(master) ^ index)`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Generator(GeneratorSpec),
    Inline(Instance<f64>),
}

impl InstanceSource {
    pub fn load(&self) -> Result<Instance<f64>> {
        match self {
            InstanceSource::File(p) => instance_from_json(&std::fs::read_to_string(p)?),
            InstanceSource::Generator(g) => g.generate(),
            InstanceSource::Inline(inst) => Ok(inst.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdSource {
    /// LP relaxation rounded at `1/f_max`.
    Lp,
    /// LP rounding pruned by the greedy, with an optional `B`.
    StarGreedy {
        b: Option<f64>,
    },
    Custom(JointState),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Psa {
        alpha: f64,
        policy: SchedulePolicy,
    },
    Ltd {
        beta: f64,
        commit: CommitPolicy,
        t_star: Option<u64>,
    },
    /// Plain best response from a random state; the advertisement only
    /// serves as the cost reference.
    BestResponse {
        policy: SchedulePolicy,
    },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Psa { .. } => "psa",
            Model::Ltd { .. } => "ltd",
            Model::BestResponse { .. } => "br",
        }
    }

    fn ad_alpha(&self) -> f64 {
        match *self {
            Model::Psa { alpha, .. } => alpha,
            Model::Ltd { beta, .. } => beta,
            Model::BestResponse { .. } => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub ad: AdSource,
    pub model: Model,
    pub trials: u64,
    pub master_seed: u64,
    /// Worker threads; results do not depend on this.
    pub workers: usize,
    /// OPT and equilibrium ratios are computed exhaustively when `n` is at most this.
    pub exhaustive_limit: usize,
}

impl ExperimentConfig {
    pub fn new(source: InstanceSource, model: Model, trials: u64, master_seed: u64) -> Self {
        Self { source, ad: AdSource::Lp, model, trials, master_seed, workers: 1, exhaustive_limit: 16 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parameter("trial count must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Parameter("worker count must be at least 1".into()));
        }
        let (name, v) = match self.model {
            Model::Psa { alpha, .. } => ("alpha", alpha),
            Model::Ltd { beta, .. } => ("beta", beta),
            Model::BestResponse { .. } => return Ok(()),
        };
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Parameter(format!("{name} must lie in (0, 1), got {v}")));
        }
        Ok(())
    }
}

/// One CSV row plus the extra per-trial quantities the acceptance checks read.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: u64,
    pub seed: u64,
    pub cost_ad: f64,
    pub cost_s1: f64,
    pub cost_s2: f64,
    pub w_fbad: f64,
    pub c_l: f64,
    pub ron: usize,
    pub fr: usize,
    pub steps_p1: u64,
    pub steps_p2: u64,
    pub invariants_ok: bool,
    #[serde(skip)]
    pub fbad: usize,
    #[serde(skip)]
    pub c_ron: f64,
    #[serde(skip)]
    pub w_fr: f64,
    #[serde(skip)]
    pub event_e: Option<bool>,
    #[serde(skip)]
    pub failure: Option<String>,
}

pub const CSV_HEADER: &str = "trial,seed,cost_ad,cost_s1,cost_s2,w_fbad,c_L,ron,fr,steps_p1,steps_p2,invariants_ok";

impl TrialRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.seed,
            self.cost_ad,
            self.cost_s1,
            self.cost_s2,
            self.w_fbad,
            self.c_l,
            self.ron,
            self.fr,
            self.steps_p1,
            self.steps_p2,
            self.invariants_ok
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub model: String,
    pub n: usize,
    pub trials: u64,
    pub master_seed: u64,
    pub ad_provenance: String,
    pub cost_ad: f64,
    pub mean_cost_s2: f64,
    pub stderr_cost_s2: f64,
    pub mean_ratio_ad: f64,
    pub stderr_ratio_ad: f64,
    pub opt: Option<f64>,
    pub mean_ratio_opt: Option<f64>,
    pub poa: Option<f64>,
    pub pos: Option<f64>,
    pub invariant_failures: u64,
    pub first_failure_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub rows: Vec<TrialRow>,
    pub summary: Summary,
    pub ad: AdStrategy<f64>,
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl TrialReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn all_ok(&self) -> bool {
        self.summary.invariant_failures == 0
    }

    /// `key: value` lines; absent values print as `na`.
    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let opt = |v: Option<f64>| v.map_or("na".to_string(), |x| x.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", s.model);
        let _ = writeln!(out, "n: {}", s.n);
        let _ = writeln!(out, "trials: {}", s.trials);
        let _ = writeln!(out, "master_seed: {}", s.master_seed);
        let _ = writeln!(out, "ad_provenance: {}", s.ad_provenance);
        let _ = writeln!(out, "cost_ad: {}", s.cost_ad);
        let _ = writeln!(out, "mean_cost_s2: {}", s.mean_cost_s2);
        let _ = writeln!(out, "stderr_cost_s2: {}", s.stderr_cost_s2);
        let _ = writeln!(out, "mean_ratio_ad: {}", s.mean_ratio_ad);
        let _ = writeln!(out, "stderr_ratio_ad: {}", s.stderr_ratio_ad);
        let _ = writeln!(out, "opt: {}", opt(s.opt));
        let _ = writeln!(out, "mean_ratio_opt: {}", opt(s.mean_ratio_opt));
        let _ = writeln!(out, "poa: {}", opt(s.poa));
        let _ = writeln!(out, "pos: {}", opt(s.pos));
        let _ = writeln!(out, "invariant_failures: {}", s.invariant_failures);
        let _ = writeln!(out, "first_failure_seed: {}", s.first_failure_seed.map_or("na".into(), |v| v.to_string()));
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }
}

pub fn build_ad(inst: &Instance<f64>, ad: &AdSource, alpha: f64) -> Result<AdStrategy<f64>> {
    match ad {
        AdSource::Lp => lp_rounding_strategy(inst),
        AdSource::StarGreedy { b } => {
            let base = lp_rounding_strategy(inst)?;
            Ok(build_star_greedy(inst, &base.state, alpha, *b)?.strategy)
        }
        AdSource::Custom(s) => AdStrategy::new(inst, s.clone(), Provenance::Custom),
    }
}

/// Uniformly random state drawn from `seed`.
pub fn random_start(n: usize, seed: u64) -> JointState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    JointState::from_actions((0..n).map(|_| rng.gen::<bool>().into()).collect())
}

fn run_trial(inst: &Instance<f64>, ad: &JointState, cost_ad: f64, model: &Model, trial: u64, seed: u64) -> TrialRow {
    let mut row = TrialRow {
        trial,
        seed,
        cost_ad,
        cost_s1: f64::NAN,
        cost_s2: f64::NAN,
        w_fbad: 0.0,
        c_l: 0.0,
        ron: 0,
        fr: 0,
        steps_p1: 0,
        steps_p2: 0,
        invariants_ok: false,
        fbad: 0,
        c_ron: 0.0,
        w_fr: 0.0,
        event_e: None,
        failure: None,
    };
    let outcome = match *model {
        Model::Psa { alpha, policy } => {
            let mut cfg = PsaConfig::new(alpha, seed);
            cfg.schedule.policy = policy;
            run_psa(inst, ad, &cfg).map(|run| (run, true))
        }
        Model::Ltd { beta, commit, t_star } => {
            let mut cfg = LtdConfig::uniform(inst.n(), beta, seed);
            cfg.commit = commit;
            if let Some(t) = t_star {
                cfg.t_star = t;
                cfg.t_prime = default_t_prime(t);
            } else {
                cfg.t_star = default_t_star(inst.n());
            }
            run_ltd(inst, ad, &cfg).map(|run| (run, false))
        }
        Model::BestResponse { policy } => {
            let start = random_start(inst.n(), seed);
            run_best_response(inst, &start, &ScheduleConfig::new(policy, seed)).and_then(|trace| {
                let diagnostics = compute_diagnostics(inst, ad, &trace.s_final)?;
                let trace = DynamicsTrace { s_prime: start, ..trace };
                Ok((ProtocolRun { trace, diagnostics, pinned: vec![false; inst.n()] }, false))
            })
        }
    };
    let (run, check_bad_weight) = match outcome {
        Ok(v) => v,
        Err(e) => {
            row.failure = Some(e.to_string());
            return row;
        }
    };
    let d = &run.diagnostics;
    let t = &run.trace;
    row.cost_s1 = inst.social_cost(&t.s_prime).expect("valid state");
    row.cost_s2 = inst.social_cost(&t.s_final).expect("valid state");
    row.w_fbad = d.w_fbad(inst);
    row.c_l = d.c_l(inst);
    row.ron = d.r_on.len();
    row.fr = d.f_r.len();
    row.fbad = d.f_bad.len();
    row.c_ron = d.c_ron(inst);
    row.w_fr = d.w_fr(inst);
    row.event_e = d.event_e;
    row.steps_p1 = t.steps_phase1;
    row.steps_p2 = t.steps_phase2;

    let mut failures = Vec::new();
    if check_bad_weight && !d.bad_weight_bounded(inst) {
        failures.push(format!("w(F_bad) = {} exceeds c(L) = {}", row.w_fbad, row.c_l));
    }
    let start_potential = inst.potential(&t.start).expect("valid state");
    if let Some(k) = t.potential_violation(start_potential) {
        failures.push(format!("best-response event {k} did not lower the potential"));
    }
    let nash = if matches!(model, Model::Ltd { .. }) {
        inst.is_nash_given_pinned(&t.s_final, &run.pinned)
    } else {
        inst.is_nash(&t.s_final)
    }
    .expect("valid state");
    if let Some(i) = nash.witness() {
        failures.push(format!("final state is not an equilibrium: agent {i} can improve"));
    }
    row.invariants_ok = failures.is_empty();
    row.failure = (!failures.is_empty()).then(|| failures.join("; "));
    row
}

/// Runs all trials, fanned out over `workers` threads, rows in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrialReport> {
    cfg.validate()?;
    let inst = cfg.source.load()?;
    let ad = build_ad(&inst, &cfg.ad, cfg.model.ad_alpha())?;
    let cost_ad = inst.social_cost(&ad.state)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<TrialRow> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|k| run_trial(&inst, &ad.state, cost_ad, &cfg.model, k, trial_seed(cfg.master_seed, k)))
            .collect()
    });

    let (mean_cost_s2, stderr_cost_s2) = mean_stderr(rows.iter().map(|r| r.cost_s2));
    let (mean_ratio_ad, stderr_ratio_ad) = mean_stderr(rows.iter().map(|r| ratio(r.cost_s2, cost_ad)));
    let (opt, poa, pos) = if inst.n() <= cfg.exhaustive_limit {
        let e = enumerate_nash(&inst, cfg.exhaustive_limit)?;
        (Some(e.opt), Some(e.poa), Some(e.pos))
    } else {
        (None, None, None)
    };
    let failures: Vec<&TrialRow> = rows.iter().filter(|r| !r.invariants_ok).collect();
    let summary = Summary {
        model: cfg.model.name().into(),
        n: inst.n(),
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        ad_provenance: format!("{:?}", ad.provenance),
        cost_ad,
        mean_cost_s2,
        stderr_cost_s2,
        mean_ratio_ad,
        stderr_ratio_ad,
        opt,
        mean_ratio_opt: opt.map(|o| ratio(mean_cost_s2, o)),
        poa,
        pos,
        invariant_failures: failures.len() as u64,
        first_failure_seed: failures.first().map(|r| r.seed),
    };
    Ok(TrialReport { rows, summary, ad })
}

/// `ln S(a, c, d)` with `S = Σ_{i ≤ ⌊c⌋} d·C(d,i)·(1−a)^(d−i)·a^i`.
pub fn ln_appendix_sum(a: f64, c: f64, d: u64) -> f64 {
    let top = (c.floor() as u64).min(d);
    let (la, lb, ld) = (a.ln(), (1.0 - a).ln(), (d as f64).ln());
    let mut ln_binom = 0.0;
    let mut terms = Vec::with_capacity(top as usize + 1);
    for i in 0..=top {
        if i > 0 {
            ln_binom += ((d - i + 1) as f64).ln() - (i as f64).ln();
        }
        terms.push(ld + ln_binom + (d - i) as f64 * lb + i as f64 * la);
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixRow {
    pub a: f64,
    pub c: f64,
    pub d_min: u64,
    pub d_max: u64,
    pub argmax_d: u64,
    /// `max_d S(a,c,d) / ⌈c⌉`.
    pub max_ratio: f64,
    pub ratio_at_d_max: f64,
    /// `argmax_d < d_max`.
    pub interior: bool,
    /// Ratio never increases (beyond a relative `1e-12`) for `d ≥ argmax_d`.
    pub non_increasing_after_max: bool,
    pub finite: bool,
}

impl AppendixRow {
    pub fn ok(&self) -> bool {
        self.finite && self.interior && self.non_increasing_after_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixReport {
    pub rows: Vec<AppendixRow>,
}

impl AppendixReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(AppendixRow::ok)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "a,c,d_min,d_max,argmax_d,max_ratio,ratio_at_d_max,interior,non_increasing_after_max,finite\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.a,
                r.c,
                r.d_min,
                r.d_max,
                r.argmax_d,
                r.max_ratio,
                r.ratio_at_d_max,
                r.interior,
                r.non_increasing_after_max,
                r.finite
            );
        }
        out
    }
}

/// Scans `d` from `max(1, ⌈c⌉)` to `d_max` for every `(a, c)` pair.
pub fn check_appendix_bound(a_list: &[f64], c_list: &[f64], d_max: u64) -> Result<AppendixReport> {
    if let Some(a) = a_list.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::Parameter(format!("a must lie in (0, 1), got {a}")));
    }
    if let Some(c) = c_list.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Parameter(format!("c must be positive, got {c}")));
    }
    if let Some(c) = c_list.iter().find(|&&c| c > d_max as f64) {
        return Err(Error::Parameter(format!("d_max = {d_max} is below c = {c}")));
    }
    let mut rows = Vec::new();
    for &a in a_list {
        for &c in c_list {
            let d_min = (c.ceil() as u64).max(1);
            let scale = c.ceil();
            let ratios: Vec<f64> = (d_min..=d_max).map(|d| ln_appendix_sum(a, c, d).exp() / scale).collect();
            let (arg, &max_ratio) = ratios
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
                .expect("non-empty range");
            let non_increasing = ratios[arg..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
            rows.push(AppendixRow {
                a,
                c,
                d_min,
                d_max,
                argmax_d: d_min + arg as u64,
                max_ratio,
                ratio_at_d_max: *ratios.last().expect("non-empty range"),
                interior: d_min + (arg as u64) < d_max,
                non_increasing_after_max: non_increasing,
                finite: ratios.iter().all(|r| r.is_finite()),
            });
        }
    }
    Ok(AppendixReport { rows })
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covgame::advertiser::{build_star_greedy, check_star_condition, lp_rounding_strategy, AdStrategy, Provenance};
use covgame::dynamics::{
    run_best_response, run_ltd, run_psa, CommitPolicy, DynamicsTrace, InitialState, LtdConfig, PsaConfig,
    ScheduleConfig, SchedulePolicy,
};
use covgame::game::Instance;
use covgame::harness::{
    brute_force_opt, check_appendix_bound, enumerate_nash, random_start, run_experiment, AdSource, ExperimentConfig,
    InstanceSource, Model, DEFAULT_NMAX,
};
use covgame::instances::{instance_from_json, instance_to_json, state_from_json, state_to_json, GeneratorSpec};
use covgame::packing::nash_correspondence_check;
use covgame::{Error, JointState};

#[derive(Parser)]
#[command(name = "covgame", version, about = "Weighted covering games: generators, oracles, dynamics and experiments")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance as JSON.
    Gen {
        #[command(subcommand)]
        family: Family,
    },
    /// Structural statistics of an instance.
    Stats(InstanceArg),
    /// Exhaustive social optimum.
    Opt {
        #[command(flatten)]
        input: InstanceArg,
        #[arg(long, default_value_t = DEFAULT_NMAX)]
        nmax: usize,
    },
    /// Exhaustive list of pure equilibria with PoA and PoS.
    Nash {
        #[command(flatten)]
        input: InstanceArg,
        #[arg(long, default_value_t = DEFAULT_NMAX)]
        nmax: usize,
    },
    /// Build an advertising strategy.
    Advertise {
        #[arg(value_enum)]
        method: AdMethod,
        #[command(flatten)]
        input: InstanceArg,
        /// Receptiveness used by the greedy pruning.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Greedy threshold constant (default derived from alpha).
        #[arg(long)]
        b: Option<f64>,
    },
    /// Evaluate the tail condition for an advertised state.
    CheckStar {
        #[command(flatten)]
        input: InstanceArg,
        /// State JSON file.
        #[arg(long)]
        ad: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Run one dynamics trace.
    Run {
        #[arg(value_enum)]
        model: ModelKind,
        #[command(flatten)]
        input: InstanceArg,
        #[command(flatten)]
        params: ModelParams,
        /// State JSON file for the advertisement (LP rounding when absent).
        #[arg(long)]
        ad: Option<PathBuf>,
        /// Start state JSON file (uniformly random when absent).
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Monte-Carlo experiment writing per-trial CSV and a summary.
    Experiment {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[command(flatten)]
        input: InstanceArg,
        #[command(flatten)]
        params: ModelParams,
        #[arg(long, value_enum, default_value_t = AdMethod::Lp)]
        ad_method: AdMethod,
        /// State JSON file overriding the advertisement.
        #[arg(long)]
        ad: Option<PathBuf>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// OPT, PoA and PoS are enumerated when n is at most this.
        #[arg(long, default_value_t = 16)]
        exhaustive_limit: usize,
    },
    /// Scan the binomial tail sum over d.
    CheckAppendix {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.5, 0.7])]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0, 3.0, 5.0])]
        c: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        d_max: u64,
    },
    /// Exhaustive covering/packing equilibrium correspondence.
    PackCheck {
        #[command(flatten)]
        input: InstanceArg,
        #[arg(long, default_value_t = DEFAULT_NMAX)]
        nmax: usize,
    },
}

#[derive(Subcommand)]
enum Family {
    Star {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
    },
    Poa {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: f64,
    },
    Path {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
    },
    Cycle {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
    },
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
    },
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        cmin: f64,
        #[arg(long, default_value_t = 2.0)]
        cmax: f64,
        #[arg(long, default_value_t = 1.0)]
        wmin: f64,
        #[arg(long, default_value_t = 1.0)]
        wmax: f64,
    },
}

#[derive(Args)]
struct InstanceArg {
    /// Instance JSON file.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct ModelParams {
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = Commit::Myopic)]
    commit: Commit,
    #[arg(long, value_enum, default_value_t = Policy::Sweeps)]
    policy: Policy,
    /// Phase-1 horizon for LTD (default from n).
    #[arg(long)]
    t_star: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AdMethod {
    Lp,
    StarGreedy,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Psa,
    Ltd,
    Br,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Commit {
    Myopic,
    BestResponse,
    Bernoulli,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Uniform,
    Sweeps,
    RoundRobin,
}

enum Failure {
    Usage(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant failure: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Outcome {
    match &cli.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_instance(arg: &InstanceArg) -> Result<Instance<f64>, Failure> {
    let text = fs::read_to_string(&arg.input)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", arg.input.display())))?;
    Ok(instance_from_json(&text)?)
}

fn load_state(path: &Path) -> Result<JointState, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(state_from_json(&text)?)
}

fn policy(p: Policy) -> SchedulePolicy {
    match p {
        Policy::Uniform => SchedulePolicy::UniformRandom,
        Policy::Sweeps => SchedulePolicy::RandomPermutationSweeps,
        Policy::RoundRobin => SchedulePolicy::RoundRobin { start: 0 },
    }
}

fn commit(c: Commit) -> CommitPolicy {
    match c {
        Commit::Myopic => CommitPolicy::MyopicCompare,
        Commit::BestResponse => CommitPolicy::AlwaysBestResponse,
        Commit::Bernoulli => CommitPolicy::BernoulliP,
    }
}

fn model(kind: ModelKind, p: &ModelParams) -> Model {
    match kind {
        ModelKind::Psa => Model::Psa { alpha: p.alpha, policy: policy(p.policy) },
        ModelKind::Ltd => Model::Ltd { beta: p.beta, commit: commit(p.commit), t_star: p.t_star },
        ModelKind::Br => Model::BestResponse { policy: policy(p.policy) },
    }
}

fn json_value(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.cmd {
        Command::Gen { family } => {
            let spec = match *family {
                Family::Star { n, c, w } => GeneratorSpec::Star { n, c, w },
                Family::Poa { n, c } => GeneratorSpec::PoaBipartite { n, c },
                Family::Path { n, c, w } => {
                    return emit(cli, &instance_to_json(&covgame::instances::gen_path(n, c, w)?));
                }
                Family::Cycle { n, c, w } => {
                    return emit(cli, &instance_to_json(&covgame::instances::gen_cycle(n, c, w)?));
                }
                Family::Grid { rows, cols, radius, c, w } => GeneratorSpec::GridSensor { rows, cols, radius, c, w },
                Family::Random { n, m, k, cmin, cmax, wmin, wmax } => GeneratorSpec::RandomUniform {
                    n,
                    m,
                    k,
                    cost_range: (cmin, cmax),
                    weight_range: (wmin, wmax),
                    seed: cli.seed,
                },
            };
            emit(cli, &instance_to_json(&spec.generate()?))
        }
        Command::Stats(input) => {
            let inst = load_instance(input)?;
            let s = inst.stats();
            let opt = |v: Option<f64>| v.map_or("na".to_string(), |x| x.to_string());
            let text = if cli.format == Format::Json {
                let v = serde_json::json!({
                    "n": s.n, "sets": s.set_count, "f_max": s.f_max, "delta1": s.delta1, "delta2": s.delta2,
                    "c_max": s.c_max, "c_min": s.c_min, "w_max": s.w_max, "w_min": s.w_min,
                });
                v.to_string() + "\n"
            } else {
                format!(
                    "n: {}\nsets: {}\nf_max: {}\ndelta1: {}\ndelta2: {}\nc_max: {}\nc_min: {}\nw_max: {}\nw_min: {}\n",
                    s.n,
                    s.set_count,
                    s.f_max,
                    s.delta1,
                    s.delta2,
                    opt(s.c_max),
                    opt(s.c_min),
                    opt(s.w_max),
                    opt(s.w_min)
                )
            };
            emit(cli, &text)
        }
        Command::Opt { input, nmax } => {
            let inst = load_instance(input)?;
            let (cost, state) = brute_force_opt(&inst, *nmax).map_err(|e| match e {
                Error::TooLarge { n, nmax } => Failure::Usage(format!(
                    "n = {n} exceeds the exhaustive limit {nmax}; use `advertise lp` for an LP-based bound instead"
                )),
                other => other.into(),
            })?;
            let text = if cli.format == Format::Json {
                serde_json::json!({ "cost": cost, "state": state.to_bits() }).to_string() + "\n"
            } else {
                format!("cost,state\n{cost},{}\n", state.to_bits())
            };
            emit(cli, &text)
        }
        Command::Nash { input, nmax } => {
            let inst = load_instance(input)?;
            let e = enumerate_nash(&inst, *nmax)?;
            let text = if cli.format == Format::Json {
                let eqs: Vec<_> =
                    e.equilibria.iter().map(|(s, c)| serde_json::json!({ "state": s.to_bits(), "cost": c })).collect();
                serde_json::json!({
                    "opt": e.opt, "opt_state": e.opt_state.to_bits(),
                    "poa": json_value(e.poa), "pos": json_value(e.pos), "equilibria": eqs,
                })
                .to_string()
                    + "\n"
            } else {
                let mut t = format!(
                    "# opt: {} ({})\n# poa: {}\n# pos: {}\nstate,cost\n",
                    e.opt,
                    e.opt_state.to_bits(),
                    e.poa,
                    e.pos
                );
                for (s, c) in &e.equilibria {
                    let _ = writeln!(t, "{},{c}", s.to_bits());
                }
                t
            };
            emit(cli, &text)
        }
        Command::Advertise { method, input, alpha, b } => {
            let inst = load_instance(input)?;
            let ad = match method {
                AdMethod::Lp => lp_rounding_strategy(&inst)?,
                AdMethod::StarGreedy => {
                    let base = lp_rounding_strategy(&inst)?;
                    let g = build_star_greedy(&inst, &base.state, *alpha, *b)?;
                    eprintln!(
                        "greedy: B = {}, threshold = {}, removed = {:?}, condition holds = {}",
                        g.b, g.threshold, g.removed, g.check.holds
                    );
                    g.strategy
                }
            };
            for w in &ad.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "cost: {}, delta1*: {}, uncovered weight: {}",
                inst.social_cost(&ad.state)?,
                ad.delta1_star.map_or("inf".into(), |d| d.to_string()),
                ad.f_r_weight
            );
            emit(cli, &state_to_json(&ad.state))
        }
        Command::CheckStar { input, ad, alpha } => {
            let inst = load_instance(input)?;
            let ad = AdStrategy::new(&inst, load_state(ad)?, Provenance::Custom)?;
            let chk = check_star_condition(&inst, &ad, *alpha)?;
            let text = if cli.format == Format::Json {
                serde_json::json!({
                    "holds": chk.holds, "sup_value": chk.sup_value, "threshold": chk.threshold, "k": chk.k,
                    "beta": chk.beta, "x_min": json_value(chk.x_min), "x_hat": chk.x_hat, "warning": chk.warning,
                })
                .to_string()
                    + "\n"
            } else {
                format!(
                    "holds: {}\nsup_value: {}\nthreshold: {}\nk: {}\nbeta: {}\nx_min: {}\nx_hat: {}\nwarning: {}\n",
                    chk.holds,
                    chk.sup_value,
                    chk.threshold,
                    chk.k,
                    chk.beta,
                    chk.x_min,
                    chk.x_hat,
                    chk.warning.as_deref().unwrap_or("none")
                )
            };
            emit(cli, &text)
        }
        Command::Run { model: kind, input, params, ad, start } => {
            let inst = load_instance(input)?;
            let s_ad = match ad {
                Some(p) => load_state(p)?,
                None => lp_rounding_strategy(&inst)?.state,
            };
            let initial = match start {
                Some(p) => InitialState::Given(load_state(p)?),
                None => InitialState::Random,
            };
            let (trace, pinned, diag): (DynamicsTrace<f64>, Vec<bool>, _) = match kind {
                ModelKind::Psa => {
                    let mut cfg = PsaConfig::new(params.alpha, cli.seed);
                    cfg.schedule.policy = policy(params.policy);
                    cfg.initial = initial;
                    let r = run_psa(&inst, &s_ad, &cfg).map_err(|e| Failure::Usage(e.to_string()))?;
                    (r.trace, r.pinned, Some(r.diagnostics))
                }
                ModelKind::Ltd => {
                    let mut cfg = LtdConfig::uniform(inst.n(), params.beta, cli.seed);
                    cfg.commit = commit(params.commit);
                    cfg.initial = initial;
                    if let Some(t) = params.t_star {
                        cfg.t_star = t;
                        cfg.t_prime = covgame::dynamics::default_t_prime(t);
                    }
                    let r = run_ltd(&inst, &s_ad, &cfg).map_err(|e| Failure::Usage(e.to_string()))?;
                    (r.trace, r.pinned, Some(r.diagnostics))
                }
                ModelKind::Br => {
                    let start = match initial {
                        InitialState::Given(s) => s,
                        InitialState::Random => random_start(inst.n(), cli.seed),
                    };
                    let sched = ScheduleConfig::new(policy(params.policy), cli.seed);
                    let t = run_best_response(&inst, &start, &sched).map_err(|e| Failure::Usage(e.to_string()))?;
                    let n = inst.n();
                    (t, vec![false; n], None)
                }
            };
            let mut text = String::from("t,agent,old,new,mode,potential\n");
            text.push_str(&trace.to_lines());
            emit(cli, &text)?;
            eprintln!("final: {} cost {}", trace.s_final.to_bits(), inst.social_cost(&trace.s_final)?);
            if let Some(d) = &diag {
                eprintln!(
                    "w_fbad: {}, c_L: {}, ron: {}, fr: {}, event_e: {:?}",
                    d.w_fbad(&inst),
                    d.c_l(&inst),
                    d.r_on.len(),
                    d.f_r.len(),
                    d.event_e
                );
            }
            if let Some(k) = trace.potential_violation(inst.potential(&trace.start)?) {
                return Err(Failure::Invariant(format!("event {k} did not lower the potential")));
            }
            if *kind == ModelKind::Psa && diag.as_ref().is_some_and(|d| !d.bad_weight_bounded(&inst)) {
                return Err(Failure::Invariant("w(F_bad) exceeds c(L)".into()));
            }
            if let Some(i) = inst.is_nash_given_pinned(&trace.s_final, &pinned)?.witness() {
                return Err(Failure::Invariant(format!("agent {i} can still improve")));
            }
            Ok(())
        }
        Command::Experiment { model: kind, input, params, ad_method, ad, b, trials, workers, exhaustive_limit } => {
            let ad_source = match (ad, ad_method) {
                (Some(p), _) => AdSource::Custom(load_state(p)?),
                (None, AdMethod::Lp) => AdSource::Lp,
                (None, AdMethod::StarGreedy) => AdSource::StarGreedy { b: *b },
            };
            let mut cfg = ExperimentConfig::new(
                InstanceSource::File(input.input.clone()),
                model(*kind, params),
                *trials,
                cli.seed,
            );
            cfg.ad = ad_source;
            cfg.workers = *workers;
            cfg.exhaustive_limit = *exhaustive_limit;
            let report = run_experiment(&cfg)?;
            let summary = if cli.format == Format::Json { report.summary_json() } else { report.summary_text() };
            match &cli.out {
                Some(p) => {
                    fs::write(p, report.to_csv())
                        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?;
                    let ext = if cli.format == Format::Json { "summary.json" } else { "summary.txt" };
                    let sp = p.with_extension(ext);
                    fs::write(&sp, &summary)
                        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", sp.display())))?;
                    print!("{summary}");
                }
                None => {
                    print!("{}", report.to_csv());
                    eprint!("{summary}");
                }
            }
            match report.rows.iter().find(|r| !r.invariants_ok) {
                Some(r) => Err(Failure::Invariant(format!(
                    "trial {} (seed {}): {}",
                    r.trial,
                    r.seed,
                    r.failure.as_deref().unwrap_or("unknown")
                ))),
                None => Ok(()),
            }
        }
        Command::CheckAppendix { a, c, d_max } => {
            let report = check_appendix_bound(a, c, *d_max)?;
            let text = if cli.format == Format::Json {
                serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
            } else {
                report.to_csv()
            };
            emit(cli, &text)?;
            if let Some(r) = report.rows.iter().find(|r| !r.ok()) {
                return Err(Failure::Invariant(format!("a = {}, c = {}: {:?}", r.a, r.c, r)));
            }
            Ok(())
        }
        Command::PackCheck { input, nmax } => {
            let inst = load_instance(input)?;
            let r = nash_correspondence_check(&inst, *nmax)?;
            let text = format!(
                "n: {}\nf_max: {}\nstates_checked: {}\ncovering_equilibria: {}\npacking_equilibria: {}\nmatches: {}\n",
                r.n,
                r.f_max,
                r.states_checked,
                r.covering_equilibria.len(),
                r.packing_equilibria.len(),
                r.matches()
            );
            emit(cli, &text)?;
            match r.counterexample {
                Some(m) => Err(Failure::Invariant(format!(
                    "state {} is covering-Nash = {} but its relabeling is packing-Nash = {}",
                    m.state.to_bits(),
                    m.covering_nash,
                    m.packing_nash_of_relabel
                ))),
                None => Ok(()),
            }
        }
    }
}

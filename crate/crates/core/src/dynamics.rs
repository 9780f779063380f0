//! Best-response dynamics and the two advertising protocols.
//!
//! * [`run_best_response`]: sequential best-response play until no agent can
//!   strictly improve.
//! * [`run_psa`]: a random receptive subset is pinned to the advertised
//!   profile while everyone else best-responds (Phase 1), then everyone
//!   best-responds (Phase 2).
//! * [`run_ltd`]: `T*` uniformly random activations that either follow the
//!   advertisement or best-respond (Phase 1), then a one-shot commitment per
//!   agent followed by best response among the uncommitted (Phase 2).
//!
//! Every run is a deterministic function of its inputs and seed. Traces only
//! record activations that change an action.

use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::error::Error;
use crate::game::{Action, CoverTracker, Instance, JointState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePolicy {
    /// Each step activates an agent drawn uniformly from those not currently
    /// playing a best response.
    UniformRandom,
    /// Fresh uniformly random permutation of the free agents per sweep.
    RandomPermutationSweeps,
    /// Fixed cyclic order `start, start+1, ...` over the free agents.
    RoundRobin { start: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleConfig {
    pub policy: SchedulePolicy,
    pub seed: u64,
    /// Activation cap per phase; `None` uses [`default_step_cap`].
    pub max_steps: Option<u64>,
}

impl ScheduleConfig {
    pub fn new(policy: SchedulePolicy, seed: u64) -> Self {
        Self { policy, seed, max_steps: None }
    }

    pub fn with_max_steps(mut self, cap: u64) -> Self {
        self.max_steps = Some(cap);
        self
    }

    fn cap<T: Scalar>(&self, inst: &Instance<T>) -> Result<u64, Error> {
        match self.max_steps {
            Some(0) => Err(Error::Parameter("max_steps must be at least 1".into())),
            Some(c) => Ok(c),
            None => Ok(default_step_cap(inst)),
        }
    }
}

/// Smallest `d ≤ limit` with every cost and weight an integer multiple of `1/d`.
fn common_denominator<T: Scalar>(inst: &Instance<T>, limit: u64) -> Option<u64> {
    let values: Vec<f64> =
        inst.costs().iter().copied().chain(inst.sets().iter().map(|s| s.weight())).map(|v| v.to_f64_lossy()).collect();
    (1..=limit).find(|&d| {
        values.iter().all(|&v| {
            let scaled = v * d as f64;
            (scaled - scaled.round()).abs() <= 1e-9 * scaled.abs().max(1.0)
        })
    })
}

/// Activation cap for one best-response phase.
///
/// When all costs and weights are multiples of `1/d` for a small `d`, every
/// strict move lowers the potential by at least `1/d`, so at most
/// `d·(Σc + Σw)` moves happen and a sweep-based schedule spends at most `n`
/// activations per move. Otherwise a flat `10⁶`.
pub fn default_step_cap<T: Scalar>(inst: &Instance<T>) -> u64 {
    const FLAT: u64 = 1_000_000;
    let Some(d) = common_denominator(inst, 1024) else {
        return FLAT;
    };
    let total: f64 = inst.costs().iter().map(|c| c.to_f64_lossy()).sum::<f64>() + inst.total_weight().to_f64_lossy();
    let bound = 10.0 * inst.n().max(1) as f64 * (1.0 + total * d as f64);
    if bound.is_finite() && bound < u64::MAX as f64 {
        bound.ceil() as u64
    } else {
        FLAT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    BestResponse,
    FollowAd,
    Commit,
}

impl fmt::Display for UpdateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateMode::BestResponse => "best-response",
            UpdateMode::FollowAd => "follow-ad",
            UpdateMode::Commit => "commit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateEvent<T> {
    /// Activation counter within the run (1-based, shared across phases).
    pub t: u64,
    pub agent: usize,
    pub old: Action,
    pub new: Action,
    pub mode: UpdateMode,
    /// Potential right after the update.
    pub potential: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTrace<T> {
    pub start: JointState,
    pub events: Vec<UpdateEvent<T>>,
    /// Index into `events` where Phase 2 begins, for two-phase protocols.
    pub phase_boundary: Option<usize>,
    /// State at the end of Phase 1 (the start state for plain best response).
    pub s_prime: JointState,
    /// Final state.
    pub s_final: JointState,
    pub steps_phase1: u64,
    pub steps_phase2: u64,
}

impl<T: Scalar> DynamicsTrace<T> {
    fn new(start: JointState) -> Self {
        Self {
            s_prime: start.clone(),
            s_final: start.clone(),
            start,
            events: Vec::new(),
            phase_boundary: None,
            steps_phase1: 0,
            steps_phase2: 0,
        }
    }

    /// `t,agent,old,new,mode,potential`, one event per line, `1`/`0` for on/off.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ =
                writeln!(out, "{},{},{},{},{},{}", e.t, e.agent, e.old.as_bit(), e.new.as_bit(), e.mode, e.potential);
        }
        out
    }

    /// First best-response event that failed to lower the potential, if any.
    pub fn potential_violation(&self, start_potential: T) -> Option<usize> {
        let mut prev = start_potential;
        for (k, e) in self.events.iter().enumerate() {
            if e.mode == UpdateMode::BestResponse && !e.potential.definitely_lt(prev) {
                return Some(k);
            }
            prev = e.potential;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError<T: Scalar> {
    #[error(transparent)]
    Game(#[from] Error),

    #[error("{phase} did not converge within {steps} activations")]
    NonConvergence { phase: &'static str, steps: u64, partial: Box<DynamicsTrace<T>> },
}

/// Set with O(1) insert, remove and uniform sampling.
struct IndexedSet {
    items: Vec<usize>,
    pos: Vec<Option<usize>>,
}

impl IndexedSet {
    fn new(n: usize) -> Self {
        Self { items: Vec::new(), pos: vec![None; n] }
    }

    fn insert(&mut self, x: usize) {
        if self.pos[x].is_none() {
            self.pos[x] = Some(self.items.len());
            self.items.push(x);
        }
    }

    fn remove(&mut self, x: usize) {
        if let Some(p) = self.pos[x].take() {
            let last = self.items.pop().expect("non-empty");
            if last != x {
                self.items[p] = last;
                self.pos[last] = Some(p);
            }
        }
    }

    fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

/// Mutable run state shared by the protocols.
struct Run<'a, T> {
    tracker: CoverTracker<'a, T>,
    potential: T,
    clock: u64,
    events: Vec<UpdateEvent<T>>,
}

impl<'a, T: Scalar> Run<'a, T> {
    fn new(inst: &'a Instance<T>, start: JointState) -> Result<Self, Error> {
        let tracker = CoverTracker::new(inst, start)?;
        let potential = tracker.potential();
        Ok(Self { tracker, potential, clock: 0, events: Vec::new() })
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Applies `a` to agent `i` at the current clock; records a change.
    fn apply(&mut self, i: usize, a: Action, mode: UpdateMode) -> bool {
        let old = self.tracker.state().get(i);
        if old == a {
            return false;
        }
        self.potential = self.potential + self.tracker.flip_delta(i);
        self.tracker.set_action(i, a);
        self.events.push(UpdateEvent { t: self.clock, agent: i, old, new: a, mode, potential: self.potential });
        true
    }

    fn refresh(&self, unhappy: &mut IndexedSet, pinned: &[bool], i: usize) {
        for j in self.tracker.neighborhood(i) {
            if pinned[j] {
                continue;
            }
            if self.tracker.is_improvable(j) {
                unhappy.insert(j);
            } else {
                unhappy.remove(j);
            }
        }
    }

    /// Best-response play among unpinned agents until none can improve.
    /// Returns activations used, or `Err(activations)` at the cap.
    fn best_response_phase(
        &mut self,
        pinned: &[bool],
        policy: SchedulePolicy,
        rng: &mut ChaCha8Rng,
        cap: u64,
    ) -> Result<u64, u64> {
        let n = pinned.len();
        let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
        let mut unhappy = IndexedSet::new(n);
        for &i in &free {
            if self.tracker.is_improvable(i) {
                unhappy.insert(i);
            }
        }
        let mut steps = 0u64;
        let mut activate = |run: &mut Self, unhappy: &mut IndexedSet, i: usize| -> Result<(), u64> {
            if steps >= cap {
                return Err(steps);
            }
            steps += 1;
            run.tick();
            let br = run.tracker.best_response(i);
            if run.apply(i, br, UpdateMode::BestResponse) {
                run.refresh(unhappy, pinned, i);
            }
            Ok(())
        };
        match policy {
            SchedulePolicy::UniformRandom => {
                while !unhappy.is_empty() {
                    let i = unhappy.items[rng.gen_range(0..unhappy.len())];
                    activate(self, &mut unhappy, i)?;
                }
            }
            SchedulePolicy::RandomPermutationSweeps => {
                let mut order = free.clone();
                while !unhappy.is_empty() {
                    order.shuffle(rng);
                    for &i in &order {
                        if unhappy.is_empty() {
                            break;
                        }
                        activate(self, &mut unhappy, i)?;
                    }
                }
            }
            SchedulePolicy::RoundRobin { start } => {
                let order: Vec<usize> = (0..n).map(|k| (start + k) % n.max(1)).filter(|&i| !pinned[i]).collect();
                let mut k = 0;
                while !unhappy.is_empty() {
                    activate(self, &mut unhappy, order[k % order.len()])?;
                    k += 1;
                }
            }
        }
        Ok(steps)
    }
}

/// Sequential best-response dynamics from `start`.
pub fn run_best_response<T: Scalar>(
    inst: &Instance<T>,
    start: &JointState,
    sched: &ScheduleConfig,
) -> Result<DynamicsTrace<T>, DynamicsError<T>> {
    let cap = sched.cap(inst)?;
    let mut run = Run::new(inst, start.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let pinned = vec![false; inst.n()];
    let outcome = run.best_response_phase(&pinned, sched.policy, &mut rng, cap);
    let mut trace = DynamicsTrace::new(start.clone());
    trace.events = run.events;
    trace.s_final = run.tracker.into_state();
    match outcome {
        Ok(steps) => {
            trace.steps_phase1 = steps;
            Ok(trace)
        }
        Err(steps) => {
            trace.steps_phase1 = steps;
            Err(DynamicsError::NonConvergence { phase: "best-response", steps, partial: Box::new(trace) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitialState {
    Given(JointState),
    /// Uniform over all `2ⁿ` states, drawn from the run's seed.
    Random,
}

impl InitialState {
    fn realize(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<JointState, Error> {
        match self {
            InitialState::Given(s) if s.len() != n => Err(Error::Dimension { expected: n, got: s.len() }),
            InitialState::Given(s) => Ok(s.clone()),
            InitialState::Random => {
                Ok(JointState::from_actions((0..n).map(|_| Action::from(rng.gen::<bool>())).collect()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsaConfig {
    pub alpha: f64,
    pub schedule: ScheduleConfig,
    pub initial: InitialState,
}

impl PsaConfig {
    /// Random initial state and random-permutation sweeps.
    pub fn new(alpha: f64, seed: u64) -> Self {
        Self {
            alpha,
            schedule: ScheduleConfig::new(SchedulePolicy::RandomPermutationSweeps, seed),
            initial: InitialState::Random,
        }
    }
}

/// Set-level bookkeeping at the Phase-1/Phase-2 boundary.
///
/// `L`/`R` are the agents on/off in the advertised profile, `l_off`/`r_on` the
/// agents that disagree with it at the end of Phase 1. `f_r` are the sets the
/// advertisement leaves uncovered, `f_bad` the remaining sets uncovered at the
/// end of Phase 1, and `f_off` the sets whose `L`-members exist and are all in
/// `l_off`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseDiagnostics {
    pub l: Vec<usize>,
    pub r: Vec<usize>,
    pub l_off: Vec<usize>,
    pub r_on: Vec<usize>,
    pub f_r: Vec<usize>,
    pub f_bad: Vec<usize>,
    pub f_off: Vec<usize>,
    /// LTD only: whether the activation-order event occurred.
    pub event_e: Option<bool>,
}

impl PhaseDiagnostics {
    pub fn w_fbad<T: Scalar>(&self, inst: &Instance<T>) -> T {
        inst.weight_of(&self.f_bad)
    }

    pub fn w_fr<T: Scalar>(&self, inst: &Instance<T>) -> T {
        inst.weight_of(&self.f_r)
    }

    pub fn c_l<T: Scalar>(&self, inst: &Instance<T>) -> T {
        inst.cost_of_agents(&self.l)
    }

    pub fn c_ron<T: Scalar>(&self, inst: &Instance<T>) -> T {
        inst.cost_of_agents(&self.r_on)
    }

    /// `w(F_bad) ≤ c(L)` up to tolerance.
    pub fn bad_weight_bounded<T: Scalar>(&self, inst: &Instance<T>) -> bool {
        self.w_fbad(inst).approx_le(self.c_l(inst))
    }
}

pub fn compute_diagnostics<T: Scalar>(
    inst: &Instance<T>,
    s_ad: &JointState,
    s_prime: &JointState,
) -> Result<PhaseDiagnostics, Error> {
    inst.check_state(s_ad)?;
    inst.check_state(s_prime)?;
    let l = s_ad.on_agents();
    let r = s_ad.off_agents();
    let l_off: Vec<usize> = l.iter().copied().filter(|&i| !s_prime.get(i).is_on()).collect();
    let r_on: Vec<usize> = r.iter().copied().filter(|&i| s_prime.get(i).is_on()).collect();
    let mut f_r = Vec::new();
    let mut f_bad = Vec::new();
    let mut f_off = Vec::new();
    for id in 0..inst.sets().len() {
        let covered_ad = inst.is_covered(s_ad, id);
        if !covered_ad {
            f_r.push(id);
        } else if !inst.is_covered(s_prime, id) {
            f_bad.push(id);
        }
        let members = inst.set(id).members();
        let in_l = members.iter().filter(|&&m| s_ad.get(m).is_on());
        let mut any = false;
        let mut all_off = true;
        for &m in in_l {
            any = true;
            all_off &= !s_prime.get(m).is_on();
        }
        if any && all_off {
            f_off.push(id);
        }
    }
    Ok(PhaseDiagnostics { l, r, l_off, r_on, f_r, f_bad, f_off, event_e: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun<T> {
    pub trace: DynamicsTrace<T>,
    pub diagnostics: PhaseDiagnostics,
    /// Agents pinned to the advertisement: receptive agents (PSA) or
    /// committed followers (LTD).
    pub pinned: Vec<bool>,
}

fn finish<T: Scalar>(
    run: Run<'_, T>,
    start: JointState,
    s_prime: JointState,
    boundary: usize,
    steps: (u64, u64),
) -> DynamicsTrace<T> {
    DynamicsTrace {
        start,
        events: run.events,
        phase_boundary: Some(boundary),
        s_prime,
        s_final: run.tracker.into_state(),
        steps_phase1: steps.0,
        steps_phase2: steps.1,
    }
}

/// Public-service advertising with a fixed receptive set.
pub fn run_psa<T: Scalar>(
    inst: &Instance<T>,
    s_ad: &JointState,
    cfg: &PsaConfig,
) -> Result<ProtocolRun<T>, DynamicsError<T>> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {}", cfg.alpha)).into());
    }
    inst.check_state(s_ad)?;
    let n = inst.n();
    let cap = cfg.schedule.cap(inst)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.schedule.seed);
    let start = cfg.initial.realize(n, &mut rng)?;
    let receptive: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < cfg.alpha).collect();

    let mut run = Run::new(inst, start.clone())?;
    for i in (0..n).filter(|&i| receptive[i]) {
        run.tick();
        run.apply(i, s_ad.get(i), UpdateMode::FollowAd);
    }
    let phase1 = run.best_response_phase(&receptive, cfg.schedule.policy, &mut rng, cap);
    let s_prime = run.tracker.state().clone();
    let boundary = run.events.len();
    let steps1 = match phase1 {
        Ok(s) => s,
        Err(steps) => {
            let partial = finish(run, start, s_prime, boundary, (steps, 0));
            return Err(DynamicsError::NonConvergence { phase: "psa phase 1", steps, partial: Box::new(partial) });
        }
    };
    let diagnostics = compute_diagnostics(inst, s_ad, &s_prime)?;
    let free = vec![false; n];
    let phase2 = run.best_response_phase(&free, cfg.schedule.policy, &mut rng, cap);
    match phase2 {
        Ok(steps2) => Ok(ProtocolRun {
            trace: finish(run, start, s_prime, boundary, (steps1, steps2)),
            diagnostics,
            pinned: receptive,
        }),
        Err(steps) => {
            let partial = finish(run, start, s_prime, boundary, (steps1, steps));
            Err(DynamicsError::NonConvergence { phase: "psa phase 2", steps, partial: Box::new(partial) })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitPolicy {
    /// Follow the advertisement iff it is currently a best response.
    MyopicCompare,
    AlwaysBestResponse,
    /// Follow with the agent's own probability `p_i`.
    BernoulliP,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtdConfig {
    pub p: Vec<f64>,
    pub beta: f64,
    pub t_star: u64,
    pub t_prime: u64,
    pub commit: CommitPolicy,
    pub seed: u64,
    pub initial: InitialState,
    /// Activation cap for the Phase-2 best-response play.
    pub max_steps: Option<u64>,
}

/// `⌈12·n·ln(n+1)⌉`.
pub fn default_t_star(n: usize) -> u64 {
    (12.0 * n as f64 * ((n + 1) as f64).ln()).ceil() as u64
}

/// `⌈T*/2⌉`.
pub fn default_t_prime(t_star: u64) -> u64 {
    t_star.div_ceil(2)
}

impl LtdConfig {
    /// `p_i = beta` for everyone, default horizons, myopic commitment.
    pub fn uniform(n: usize, beta: f64, seed: u64) -> Self {
        let t_star = default_t_star(n);
        Self {
            p: vec![beta; n],
            beta,
            t_star,
            t_prime: default_t_prime(t_star),
            commit: CommitPolicy::MyopicCompare,
            seed,
            initial: InitialState::Random,
            max_steps: None,
        }
    }

    fn validate(&self, n: usize) -> Result<(), Error> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Parameter(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.p.len() != n {
            return Err(Error::Dimension { expected: n, got: self.p.len() });
        }
        if let Some((i, &p)) = self.p.iter().enumerate().find(|(_, &p)| !(p >= self.beta && p <= 1.0)) {
            return Err(Error::Parameter(format!("p[{i}] = {p} must lie in [beta, 1]")));
        }
        if self.t_prime == 0 || self.t_prime >= self.t_star {
            return Err(Error::Parameter(format!("need 0 < T' < T*, got T' = {}, T* = {}", self.t_prime, self.t_star)));
        }
        Ok(())
    }
}

/// Tracks the ordering event over Phase-1 activations: all of `R` activates,
/// then all of `L` activates strictly before `T'`, and all of `R` activates
/// again within `[T', T*]`.
struct OrderingEvent {
    in_l: Vec<bool>,
    r_left: usize,
    r_done_at: Option<u64>,
    l_seen: Vec<bool>,
    l_left: usize,
    r_late: Vec<bool>,
    r_late_left: usize,
    t_prime: u64,
}

impl OrderingEvent {
    fn new(s_ad: &JointState, t_prime: u64) -> Self {
        let in_l: Vec<bool> = s_ad.actions().iter().map(|a| a.is_on()).collect();
        let r_count = in_l.iter().filter(|&&x| !x).count();
        Self {
            r_left: r_count,
            r_done_at: (r_count == 0).then_some(0),
            l_seen: vec![false; in_l.len()],
            l_left: in_l.len() - r_count,
            r_late: vec![false; in_l.len()],
            r_late_left: r_count,
            t_prime,
            in_l,
        }
    }

    fn observe(&mut self, t: u64, i: usize, first_r_visit: bool) {
        if self.in_l[i] {
            if self.r_done_at.is_some_and(|d| t > d) && t < self.t_prime && !self.l_seen[i] {
                self.l_seen[i] = true;
                self.l_left -= 1;
            }
        } else {
            if first_r_visit {
                self.r_left -= 1;
                if self.r_left == 0 {
                    self.r_done_at = Some(t);
                }
            }
            if t >= self.t_prime && !self.r_late[i] {
                self.r_late[i] = true;
                self.r_late_left -= 1;
            }
        }
    }

    fn holds(&self) -> bool {
        self.r_done_at.is_some_and(|d| d < self.t_prime) && self.l_left == 0 && self.r_late_left == 0
    }
}

/// Learn-then-decide.
pub fn run_ltd<T: Scalar>(
    inst: &Instance<T>,
    s_ad: &JointState,
    cfg: &LtdConfig,
) -> Result<ProtocolRun<T>, DynamicsError<T>> {
    let n = inst.n();
    inst.check_state(s_ad)?;
    cfg.validate(n)?;
    let cap = match cfg.max_steps {
        Some(0) => return Err(Error::Parameter("max_steps must be at least 1".into()).into()),
        Some(c) => c,
        None => default_step_cap(inst),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = cfg.initial.realize(n, &mut rng)?;
    let mut run = Run::new(inst, start.clone())?;

    let mut event = OrderingEvent::new(s_ad, cfg.t_prime);
    let mut visited = vec![false; n];
    if n > 0 {
        for _ in 0..cfg.t_star {
            let t = run.tick();
            let i = rng.gen_range(0..n);
            let first = !std::mem::replace(&mut visited[i], true);
            event.observe(t, i, first);
            if rng.gen::<f64>() < cfg.p[i] {
                run.apply(i, s_ad.get(i), UpdateMode::FollowAd);
            } else {
                let br = run.tracker.best_response(i);
                run.apply(i, br, UpdateMode::BestResponse);
            }
        }
    }
    let s_prime = run.tracker.state().clone();
    let boundary = run.events.len();
    let mut diagnostics = compute_diagnostics(inst, s_ad, &s_prime)?;
    diagnostics.event_e = Some(event.holds());

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut followers = vec![false; n];
    for &i in &order {
        let follow = match cfg.commit {
            CommitPolicy::AlwaysBestResponse => false,
            CommitPolicy::BernoulliP => rng.gen::<f64>() < cfg.p[i],
            CommitPolicy::MyopicCompare => {
                let tr = &run.tracker;
                let cost_of = |a: Action| if a.is_on() { inst.cost_of(i) } else { tr.off_exposure(i) };
                cost_of(s_ad.get(i)).approx_le(cost_of(tr.best_response(i)))
            }
        };
        if follow {
            followers[i] = true;
            run.tick();
            run.apply(i, s_ad.get(i), UpdateMode::Commit);
        }
    }
    let phase2 = run.best_response_phase(&followers, SchedulePolicy::RandomPermutationSweeps, &mut rng, cap);
    match phase2 {
        Ok(steps2) => Ok(ProtocolRun {
            trace: finish(run, start, s_prime, boundary, (cfg.t_star, steps2)),
            diagnostics,
            pinned: followers,
        }),
        Err(steps) => {
            let partial = finish(run, start, s_prime, boundary, (cfg.t_star, steps));
            Err(DynamicsError::NonConvergence { phase: "ltd phase 2", steps, partial: Box::new(partial) })
        }
    }
}

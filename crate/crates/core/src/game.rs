//! The weighted covering game.
//!
//! Agents choose `On` (paying their own cost) or `Off` (paying the weight of
//! every incident set that no member covers). The game is an exact potential
//! game with potential `c(ON(s)) + w(uncovered(s))`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Off,
    On,
}

impl Action {
    pub fn flipped(self) -> Self {
        match self {
            Action::On => Action::Off,
            Action::Off => Action::On,
        }
    }

    pub fn is_on(self) -> bool {
        self == Action::On
    }

    pub fn as_bit(self) -> char {
        match self {
            Action::On => '1',
            Action::Off => '0',
        }
    }
}

impl From<bool> for Action {
    fn from(on: bool) -> Self {
        if on {
            Action::On
        } else {
            Action::Off
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::On => "on",
            Action::Off => "off",
        })
    }
}

/// One action per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointState {
    actions: Vec<Action>,
}

impl JointState {
    pub fn all_off(n: usize) -> Self {
        Self { actions: vec![Action::Off; n] }
    }

    pub fn all_on(n: usize) -> Self {
        Self { actions: vec![Action::On; n] }
    }

    pub fn from_actions(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    /// State whose on-set is exactly `on`.
    pub fn with_on(n: usize, on: &[usize]) -> Self {
        let mut s = Self::all_off(n);
        for &i in on {
            s.actions[i] = Action::On;
        }
        s
    }

    /// Bit `i` of `mask` is agent `i`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        Self { actions: (0..n).map(|i| Action::from(mask >> i & 1 == 1)).collect() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> Action {
        self.actions[i]
    }

    pub fn set(&mut self, i: usize, a: Action) {
        self.actions[i] = a;
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn on_agents(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.actions[i].is_on()).collect()
    }

    pub fn off_agents(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.actions[i].is_on()).collect()
    }

    pub fn count_on(&self) -> usize {
        self.actions.iter().filter(|a| a.is_on()).count()
    }

    /// `'1'` for on, `'0'` for off, agent 0 first.
    pub fn to_bits(&self) -> String {
        self.actions.iter().map(|a| a.as_bit()).collect()
    }

    pub fn from_bits(bits: &str) -> Result<Self> {
        bits.chars()
            .enumerate()
            .map(|(col, ch)| match ch {
                '1' => Ok(Action::On),
                '0' => Ok(Action::Off),
                other => {
                    Err(Error::Parse { line: 1, column: col + 1, msg: format!("expected '0' or '1', found {other:?}") })
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_actions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSet<T> {
    members: Vec<usize>,
    weight: T,
}

impl<T: Scalar> WeightedSet<T> {
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn weight(&self) -> T {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Agents with costs plus a weighted family of distinct agent sets.
///
/// Construction canonicalizes the family: members are sorted ascending and
/// sets are sorted lexicographically by member list. Set ids everywhere else
/// refer to that canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    costs: Vec<T>,
    sets: Vec<WeightedSet<T>>,
    incidence: Vec<Vec<usize>>,
}

impl<T: Scalar> Instance<T> {
    /// Validates and canonicalizes. Errors refer to the caller's set order.
    pub fn new(costs: Vec<T>, sets: Vec<(Vec<usize>, T)>) -> Result<Self> {
        let n = costs.len();
        for (agent, &c) in costs.iter().enumerate() {
            if c <= T::zero() {
                return Err(Error::NonPositiveCost { agent });
            }
        }
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::with_capacity(sets.len());
        let mut canon = Vec::with_capacity(sets.len());
        for (set, (mut members, weight)) in sets.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptySet { set });
            }
            if weight <= T::zero() {
                return Err(Error::NonPositiveWeight { set });
            }
            members.sort_unstable();
            if let Some(&member) = members.iter().find(|&&m| m >= n) {
                return Err(Error::MemberOutOfRange { set, member, n });
            }
            if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::RepeatedMember { set, member: w[0] });
            }
            if let Some(&first) = seen.get(&members) {
                return Err(Error::DuplicateSet { set, first });
            }
            seen.insert(members.clone(), set);
            canon.push(WeightedSet { members, weight });
        }
        canon.sort_by(|a, b| a.members.cmp(&b.members));
        let mut incidence = vec![Vec::new(); n];
        for (id, s) in canon.iter().enumerate() {
            for &m in &s.members {
                incidence[m].push(id);
            }
        }
        Ok(Self { costs, sets: canon, incidence })
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn costs(&self) -> &[T] {
        &self.costs
    }

    pub fn cost_of(&self, i: usize) -> T {
        self.costs[i]
    }

    pub fn sets(&self) -> &[WeightedSet<T>] {
        &self.sets
    }

    pub fn set(&self, id: usize) -> &WeightedSet<T> {
        &self.sets[id]
    }

    /// Set ids containing agent `i`, ascending.
    pub fn incident(&self, i: usize) -> &[usize] {
        &self.incidence[i]
    }

    /// Converts every cost and weight, e.g. to run the same instance on exact rationals.
    pub fn map_scalar<U: Scalar>(&self, mut f: impl FnMut(T) -> U) -> Result<Instance<U>> {
        Instance::new(
            self.costs.iter().map(|&c| f(c)).collect(),
            self.sets.iter().map(|s| (s.members.clone(), f(s.weight))).collect(),
        )
    }

    pub fn check_state(&self, s: &JointState) -> Result<()> {
        if s.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: s.len() });
        }
        Ok(())
    }

    pub fn check_agent(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::AgentIndex { agent: i, n: self.n() });
        }
        Ok(())
    }

    pub fn is_covered(&self, s: &JointState, set: usize) -> bool {
        self.sets[set].members.iter().any(|&m| s.get(m).is_on())
    }

    /// Sets with every member off.
    pub fn uncovered_sets(&self, s: &JointState) -> Result<Vec<usize>> {
        self.check_state(s)?;
        Ok((0..self.sets.len()).filter(|&id| !self.is_covered(s, id)).collect())
    }

    /// Uncovered sets that contain agent `i`.
    pub fn uncovered_sets_of(&self, s: &JointState, i: usize) -> Result<Vec<usize>> {
        self.check_state(s)?;
        self.check_agent(i)?;
        Ok(self.incidence[i].iter().copied().filter(|&id| !self.is_covered(s, id)).collect())
    }

    pub fn weight_of(&self, ids: &[usize]) -> T {
        ids.iter().map(|&id| self.sets[id].weight).fold(T::zero(), |a, b| a + b)
    }

    pub fn cost_of_agents(&self, agents: &[usize]) -> T {
        agents.iter().map(|&i| self.costs[i]).fold(T::zero(), |a, b| a + b)
    }

    pub fn total_weight(&self) -> T {
        self.sets.iter().map(|s| s.weight).fold(T::zero(), |a, b| a + b)
    }

    /// Weight agent `i` would face if it were off, everyone else unchanged.
    pub(crate) fn off_exposure(&self, s: &JointState, i: usize) -> T {
        self.incidence[i]
            .iter()
            .filter(|&&id| self.sets[id].members.iter().all(|&m| m == i || !s.get(m).is_on()))
            .map(|&id| self.sets[id].weight)
            .fold(T::zero(), |a, b| a + b)
    }

    fn cost_for_action(&self, s: &JointState, i: usize, a: Action) -> T {
        match a {
            Action::On => self.costs[i],
            Action::Off => self.off_exposure(s, i),
        }
    }

    pub fn agent_cost(&self, s: &JointState, i: usize) -> Result<T> {
        self.check_state(s)?;
        self.check_agent(i)?;
        Ok(self.cost_for_action(s, i, s.get(i)))
    }

    /// Sum of agent costs.
    pub fn social_cost(&self, s: &JointState) -> Result<T> {
        self.check_state(s)?;
        Ok((0..self.n()).map(|i| self.cost_for_action(s, i, s.get(i))).fold(T::zero(), |a, b| a + b))
    }

    /// `c(ON(s)) + Σ_{uncovered σ} |σ|·w_σ`.
    pub fn social_cost_closed_form(&self, s: &JointState) -> Result<T> {
        let uncovered = self.uncovered_sets(s)?;
        let on: T = self.cost_of_agents(&s.on_agents());
        let unc: T = uncovered
            .iter()
            .map(|&id| T::from_usize_lossy(self.sets[id].len()) * self.sets[id].weight)
            .fold(T::zero(), |a, b| a + b);
        Ok(on + unc)
    }

    pub fn potential(&self, s: &JointState) -> Result<T> {
        let uncovered = self.uncovered_sets(s)?;
        Ok(self.cost_of_agents(&s.on_agents()) + self.weight_of(&uncovered))
    }

    /// Best response of agent `i`; keeps the current action on ties.
    pub fn best_response(&self, s: &JointState, i: usize) -> Result<Action> {
        self.check_state(s)?;
        self.check_agent(i)?;
        Ok(self.best_response_unchecked(s, i))
    }

    pub(crate) fn best_response_unchecked(&self, s: &JointState, i: usize) -> Action {
        let on = self.costs[i];
        let off = self.off_exposure(s, i);
        if on.definitely_lt(off) {
            Action::On
        } else if off.definitely_lt(on) {
            Action::Off
        } else {
            s.get(i)
        }
    }

    /// Strict improvement available to `i`, if any.
    pub fn improving_deviation(&self, s: &JointState, i: usize) -> Option<Deviation<T>> {
        let cur = s.get(i);
        let here = self.cost_for_action(s, i, cur);
        let there = self.cost_for_action(s, i, cur.flipped());
        there.definitely_lt(here).then(|| Deviation { agent: i, to: cur.flipped(), gain: here - there })
    }

    pub fn is_nash(&self, s: &JointState) -> Result<NashCheck<T>> {
        self.check_state(s)?;
        Ok(self.first_deviation(0..self.n(), s))
    }

    /// Nash condition restricted to agents with `pinned[i] == false`.
    pub fn is_nash_given_pinned(&self, s: &JointState, pinned: &[bool]) -> Result<NashCheck<T>> {
        self.check_state(s)?;
        if pinned.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: pinned.len() });
        }
        Ok(self.first_deviation((0..self.n()).filter(|&i| !pinned[i]), s))
    }

    fn first_deviation(&self, agents: impl Iterator<Item = usize>, s: &JointState) -> NashCheck<T> {
        for i in agents {
            if let Some(d) = self.improving_deviation(s, i) {
                return NashCheck::Deviation(d);
            }
        }
        NashCheck::Equilibrium
    }

    pub fn stats(&self) -> InstanceStats<T> {
        let f_max = self.sets.iter().map(|s| s.len()).max().unwrap_or(0);
        let delta1 = self.incidence.iter().map(Vec::len).max().unwrap_or(0);
        let mut pair_counts: HashMap<(usize, usize), usize> = HashMap::new();
        for s in &self.sets {
            for (a, &x) in s.members.iter().enumerate() {
                for &y in &s.members[a + 1..] {
                    *pair_counts.entry((x, y)).or_default() += 1;
                }
            }
        }
        let delta2 = pair_counts.values().copied().max().unwrap_or(0);
        let fold = |it: &mut dyn Iterator<Item = T>, pick_max: bool| {
            it.reduce(|a, b| if pick_max { a.max_of(b) } else { a.min_of(b) })
        };
        InstanceStats {
            n: self.n(),
            set_count: self.sets.len(),
            f_max,
            delta1,
            delta2,
            c_max: fold(&mut self.costs.iter().copied(), true),
            c_min: fold(&mut self.costs.iter().copied(), false),
            w_max: fold(&mut self.sets.iter().map(|s| s.weight), true),
            w_min: fold(&mut self.sets.iter().map(|s| s.weight), false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation<T> {
    pub agent: usize,
    pub to: Action,
    pub gain: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NashCheck<T> {
    Equilibrium,
    Deviation(Deviation<T>),
}

impl<T> NashCheck<T> {
    pub fn holds(&self) -> bool {
        matches!(self, NashCheck::Equilibrium)
    }

    pub fn witness(&self) -> Option<usize> {
        match self {
            NashCheck::Equilibrium => None,
            NashCheck::Deviation(d) => Some(d.agent),
        }
    }
}

/// Structural statistics of an instance.
///
/// Extremes over an empty collection are `None`; `f_max` is 0 for an empty
/// family (the game then has no sets and `f_max` is irrelevant).
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStats<T> {
    pub n: usize,
    pub set_count: usize,
    pub f_max: usize,
    pub delta1: usize,
    pub delta2: usize,
    pub c_max: Option<T>,
    pub c_min: Option<T>,
    pub w_max: Option<T>,
    pub w_min: Option<T>,
}

impl<T: Scalar> InstanceStats<T> {
    /// Max number of sets containing any `k` fixed distinct agents, for `k ∈ {1, 2}`.
    pub fn delta(&self, k: usize) -> Option<usize> {
        match k {
            1 => Some(self.delta1),
            2 => Some(self.delta2),
            _ => None,
        }
    }

    /// `c_max / w_min` as f64, when sets exist.
    pub fn cost_weight_ratio(&self) -> Option<f64> {
        Some(self.c_max?.to_f64_lossy() / self.w_min?.to_f64_lossy())
    }
}

/// Incrementally maintained per-set on-counts for a state.
///
/// Dynamics and exhaustive searches flip one agent at a time; this keeps the
/// exposure of each agent computable in `O(deg)` without rescanning members.
#[derive(Debug, Clone)]
pub struct CoverTracker<'a, T> {
    inst: &'a Instance<T>,
    state: JointState,
    on_count: Vec<u32>,
}

impl<'a, T: Scalar> CoverTracker<'a, T> {
    pub fn new(inst: &'a Instance<T>, state: JointState) -> Result<Self> {
        inst.check_state(&state)?;
        let on_count =
            inst.sets.iter().map(|s| s.members.iter().filter(|&&m| state.get(m).is_on()).count() as u32).collect();
        Ok(Self { inst, state, on_count })
    }

    pub fn instance(&self) -> &'a Instance<T> {
        self.inst
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn into_state(self) -> JointState {
        self.state
    }

    pub fn set_action(&mut self, i: usize, a: Action) {
        if self.state.get(i) == a {
            return;
        }
        self.state.set(i, a);
        for &id in &self.inst.incidence[i] {
            match a {
                Action::On => self.on_count[id] += 1,
                Action::Off => self.on_count[id] -= 1,
            }
        }
    }

    pub fn flip(&mut self, i: usize) {
        let a = self.state.get(i).flipped();
        self.set_action(i, a);
    }

    pub fn is_covered(&self, set: usize) -> bool {
        self.on_count[set] > 0
    }

    pub fn off_exposure(&self, i: usize) -> T {
        let self_on = u32::from(self.state.get(i).is_on());
        self.inst.incidence[i]
            .iter()
            .filter(|&&id| self.on_count[id] == self_on)
            .map(|&id| self.inst.sets[id].weight)
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn best_response(&self, i: usize) -> Action {
        let on = self.inst.costs[i];
        let off = self.off_exposure(i);
        if on.definitely_lt(off) {
            Action::On
        } else if off.definitely_lt(on) {
            Action::Off
        } else {
            self.state.get(i)
        }
    }

    pub fn is_improvable(&self, i: usize) -> bool {
        self.best_response(i) != self.state.get(i)
    }

    pub fn potential(&self) -> T {
        let on: T = (0..self.inst.n())
            .filter(|&i| self.state.get(i).is_on())
            .map(|i| self.inst.costs[i])
            .fold(T::zero(), |a, b| a + b);
        let unc: T = (0..self.on_count.len())
            .filter(|&id| self.on_count[id] == 0)
            .map(|id| self.inst.sets[id].weight)
            .fold(T::zero(), |a, b| a + b);
        on + unc
    }

    /// Potential change if agent `i` flipped.
    pub fn flip_delta(&self, i: usize) -> T {
        let exposure = self.off_exposure(i);
        match self.state.get(i) {
            Action::On => exposure - self.inst.costs[i],
            Action::Off => self.inst.costs[i] - exposure,
        }
    }

    /// Agents sharing a set with `i`, including `i`.
    pub fn neighborhood(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(i)
            .chain(self.inst.incidence[i].iter().flat_map(move |&id| self.inst.sets[id].members.iter().copied()))
    }
}

//! The packing reading of a covering instance.
//!
//! Off-agents pay their own cost; on-agents pay the weight of every incident
//! set whose members are all on. Flipping every action maps the packing costs
//! onto the covering costs agent by agent, for any set sizes.

use crate::error::{Error, Result};
use crate::game::{Action, Instance, JointState};
use crate::scalar::Scalar;

/// Packing cost view over a covering instance.
#[derive(Debug, Clone, Copy)]
pub struct PackingView<'a, T> {
    inst: &'a Instance<T>,
}

impl<'a, T: Scalar> PackingView<'a, T> {
    pub fn new(inst: &'a Instance<T>) -> Self {
        Self { inst }
    }

    pub fn instance(&self) -> &'a Instance<T> {
        self.inst
    }

    /// Weight of the sets containing `i` whose other members are all on.
    fn full_exposure(&self, s: &JointState, i: usize) -> T {
        self.inst
            .incident(i)
            .iter()
            .map(|&id| self.inst.set(id))
            .filter(|set| set.members().iter().all(|&m| m == i || s.get(m).is_on()))
            .map(|set| set.weight())
            .fold(T::zero(), |a, b| a + b)
    }

    fn cost_for_action(&self, s: &JointState, i: usize, a: Action) -> T {
        match a {
            Action::Off => self.inst.cost_of(i),
            Action::On => self.full_exposure(s, i),
        }
    }

    pub fn agent_cost(&self, s: &JointState, i: usize) -> Result<T> {
        self.inst.check_state(s)?;
        self.inst.check_agent(i)?;
        Ok(self.cost_for_action(s, i, s.get(i)))
    }

    pub fn social_cost(&self, s: &JointState) -> Result<T> {
        self.inst.check_state(s)?;
        Ok((0..self.inst.n()).map(|i| self.cost_for_action(s, i, s.get(i))).fold(T::zero(), |a, b| a + b))
    }

    /// First agent with a strictly improving flip, if any.
    pub fn improving_agent(&self, s: &JointState) -> Result<Option<usize>> {
        self.inst.check_state(s)?;
        Ok((0..self.inst.n()).find(|&i| {
            let cur = s.get(i);
            self.cost_for_action(s, i, cur.flipped()).definitely_lt(self.cost_for_action(s, i, cur))
        }))
    }

    pub fn is_nash(&self, s: &JointState) -> Result<bool> {
        Ok(self.improving_agent(s)?.is_none())
    }
}

pub fn packing_agent_cost<T: Scalar>(inst: &Instance<T>, s: &JointState, i: usize) -> Result<T> {
    PackingView::new(inst).agent_cost(s, i)
}

/// Flips every action.
pub fn relabel_state(s: &JointState) -> JointState {
    JointState::from_actions(s.actions().iter().map(|a| a.flipped()).collect())
}

/// A state on which the two equilibrium notions disagree after relabeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    /// The covering-side state; its packing counterpart is its relabeling.
    pub state: JointState,
    pub covering_nash: bool,
    pub packing_nash_of_relabel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceReport {
    pub n: usize,
    pub f_max: usize,
    pub states_checked: u64,
    /// Covering equilibria in mask order.
    pub covering_equilibria: Vec<JointState>,
    /// Packing equilibria in mask order.
    pub packing_equilibria: Vec<JointState>,
    pub counterexample: Option<Mismatch>,
}

impl CorrespondenceReport {
    pub fn matches(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Enumerates all `2ⁿ` states and checks that `s` is a covering equilibrium
/// exactly when `relabel(s)` is a packing equilibrium.
pub fn nash_correspondence_check<T: Scalar>(inst: &Instance<T>, nmax: usize) -> Result<CorrespondenceReport> {
    let n = inst.n();
    if n > nmax || n >= 63 {
        return Err(Error::TooLarge { n, nmax });
    }
    let view = PackingView::new(inst);
    let mut covering_equilibria = Vec::new();
    let mut packing_equilibria = Vec::new();
    let mut counterexample = None;
    let total = 1u64 << n;
    for mask in 0..total {
        let s = JointState::from_mask(n, mask);
        let cov = inst.is_nash(&s)?.holds();
        let pack = view.is_nash(&s)?;
        if cov {
            covering_equilibria.push(s.clone());
        }
        if pack {
            packing_equilibria.push(s.clone());
        }
        if counterexample.is_none() {
            let relabeled = relabel_state(&s);
            let pack_of_relabel = view.is_nash(&relabeled)?;
            if cov != pack_of_relabel {
                counterexample =
                    Some(Mismatch { state: s, covering_nash: cov, packing_nash_of_relabel: pack_of_relabel });
            }
        }
    }
    Ok(CorrespondenceReport {
        n,
        f_max: inst.stats().f_max,
        states_checked: total,
        covering_equilibria,
        packing_equilibria,
        counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_cycle, gen_path, gen_random_uniform, gen_star};
    use proptest::prelude::*;

    fn edge(c: f64) -> Instance<f64> {
        Instance::new(vec![c, c], vec![(vec![0, 1], 1.0)]).unwrap()
    }

    fn on_sets(states: &[JointState]) -> Vec<Vec<usize>> {
        let mut v: Vec<_> = states.iter().map(|s| s.on_agents()).collect();
        v.sort();
        v
    }

    #[test]
    fn cost_examples() {
        let e = edge(0.4);
        assert_eq!(packing_agent_cost(&e, &JointState::all_on(2), 0).unwrap(), 1.0);
        assert_eq!(packing_agent_cost(&e, &JointState::all_off(2), 0).unwrap(), 0.4);
        assert_eq!(packing_agent_cost(&e, &JointState::with_on(2, &[0]), 0).unwrap(), 0.0);
        assert!(packing_agent_cost(&e, &JointState::all_on(3), 0).is_err());
    }

    #[test]
    fn relabel_examples() {
        assert_eq!(relabel_state(&JointState::all_on(4)), JointState::all_off(4));
        let s = JointState::with_on(5, &[1, 4]);
        assert_eq!(relabel_state(&s), JointState::with_on(5, &[0, 2, 3]));
    }

    #[test]
    fn path_of_three() {
        let inst = gen_path::<f64>(3, 0.5, 1.0).unwrap();
        let r = nash_correspondence_check(&inst, 22).unwrap();
        assert!(r.matches());
        assert_eq!(on_sets(&r.covering_equilibria), vec![vec![0, 2], vec![1]]);
        assert_eq!(on_sets(&r.packing_equilibria), vec![vec![0, 2], vec![1]]);
        // the complement of {1} is {0,2} and vice versa
        let relabeled: Vec<_> = r.covering_equilibria.iter().map(relabel_state).collect();
        assert_eq!(on_sets(&relabeled), on_sets(&r.packing_equilibria));
    }

    #[test]
    fn triangle() {
        let inst = gen_cycle::<f64>(3, 0.5, 1.0).unwrap();
        let r = nash_correspondence_check(&inst, 22).unwrap();
        assert!(r.matches());
        // a single vertex leaves the opposite edge uncovered; any two vertices cover all
        assert_eq!(on_sets(&r.covering_equilibria), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(on_sets(&r.packing_equilibria), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn empty_family() {
        let inst = Instance::<f64>::new(vec![0.5; 3], vec![]).unwrap();
        let r = nash_correspondence_check(&inst, 22).unwrap();
        assert!(r.matches());
        assert_eq!(r.covering_equilibria, vec![JointState::all_off(3)]);
        assert_eq!(r.packing_equilibria, vec![JointState::all_on(3)]);
    }

    #[test]
    fn refuses_large_instances() {
        let inst = gen_path::<f64>(10, 0.5, 1.0).unwrap();
        assert!(matches!(nash_correspondence_check(&inst, 8), Err(Error::TooLarge { n: 10, nmax: 8 })));
    }

    fn is_maximal_independent(inst: &Instance<f64>, s: &JointState) -> bool {
        let independent = inst.sets().iter().all(|e| e.members().iter().any(|&m| !s.get(m).is_on()));
        let maximal = (0..inst.n()).filter(|&i| !s.get(i).is_on()).all(|i| {
            inst.incident(i).iter().any(|&id| inst.set(id).members().iter().all(|&m| m == i || s.get(m).is_on()))
        });
        independent && maximal
    }

    #[test]
    fn packing_equilibria_are_maximal_independent_sets() {
        for inst in [
            gen_star::<f64>(6, 0.5, 1.0).unwrap(),
            gen_path::<f64>(7, 0.3, 1.0).unwrap(),
            gen_cycle::<f64>(8, 0.9, 1.0).unwrap(),
        ] {
            let r = nash_correspondence_check(&inst, 22).unwrap();
            let all_mis: Vec<_> = (0..1u64 << inst.n())
                .map(|m| JointState::from_mask(inst.n(), m))
                .filter(|s| inst.n() > 0 && is_maximal_independent(&inst, s))
                .collect();
            assert_eq!(on_sets(&r.packing_equilibria), on_sets(&all_mis));
        }
    }

    proptest! {
        #[test]
        fn relabel_is_involution(n in 0usize..40, mask in any::<u64>()) {
            let s = JointState::from_mask(n, mask);
            prop_assert_eq!(relabel_state(&relabel_state(&s)), s);
        }

        #[test]
        fn cost_identity_holds_for_any_set_size(seed in any::<u64>(), k in 1usize..=4, mask in any::<u64>()) {
            let inst = gen_random_uniform(9, if k == 1 { 9 } else { 14 }, k, (0.2, 2.0), (0.3, 1.5), seed).unwrap();
            let s = JointState::from_mask(9, mask);
            let r = relabel_state(&s);
            for i in 0..9 {
                prop_assert_eq!(packing_agent_cost(&inst, &s, i).unwrap(), inst.agent_cost(&r, i).unwrap());
            }
            prop_assert!(PackingView::new(&inst).social_cost(&s).unwrap().is_finite());
        }

        #[test]
        fn correspondence_on_random_instances(seed in any::<u64>(), k in 1usize..=3) {
            let inst = gen_random_uniform(8, if k == 1 { 8 } else { 10 }, k, (0.2, 2.0), (0.3, 1.5), seed).unwrap();
            prop_assert!(nash_correspondence_check(&inst, 22).unwrap().matches());
        }
    }
}

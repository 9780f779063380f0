//! Advertising-strategy construction.
//!
//! * LP relaxation of the fractional cover, solved through its packing dual
//!   with the in-crate simplex, and threshold rounding at `1/f_max`.
//! * Repair of an arbitrary state into a full cover.
//! * The unique-coverer degree `Δ₁*` of a profile and the tail condition
//!   built on it, plus the greedy pruning that enforces that condition.

pub mod simplex;

use crate::error::{Error, Result};
use crate::game::{Action, CoverTracker, Instance, JointState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub status: LpStatus,
}

impl<T: Scalar> LpSolution<T> {
    /// Largest shortfall `1 − Σ_{i∈σ} x_i` over all sets (≤ 0 when feasible).
    pub fn max_violation(&self, inst: &Instance<T>) -> T {
        inst.sets()
            .iter()
            .map(|s| T::one() - s.members().iter().map(|&i| self.x[i]).sum::<T>())
            .fold(T::zero() - T::one(), |a, b| a.max_of(b))
    }
}

/// Fractional cover `min Σ c_i x_i  s.t.  Σ_{i∈σ} x_i ≥ 1, 0 ≤ x ≤ 1`.
///
/// Solved as the dual packing problem `max Σ y_σ  s.t.  Σ_{σ∋i} y_σ ≤ c_i`,
/// whose slack basis is feasible. The optimal `x` are the shadow prices of the
/// packing rows. The box `x ≤ 1` never binds: with positive costs any cover
/// with `x_i > 1` can lower `x_i` to 1 and stay feasible.
pub fn solve_lp_relaxation<T: Scalar>(inst: &Instance<T>) -> LpSolution<T> {
    let n = inst.n();
    let m = inst.sets().len();
    if m == 0 {
        return LpSolution { x: vec![T::zero(); n], objective: T::zero(), status: LpStatus::Optimal };
    }
    let mut a = vec![vec![T::zero(); m]; n];
    for (id, s) in inst.sets().iter().enumerate() {
        for &i in s.members() {
            a[i][id] = T::one();
        }
    }
    let out = simplex::maximize(&a, inst.costs(), &vec![T::one(); m], 100 * (n + m) + 1000);
    let status = match out.status {
        simplex::SimplexStatus::Optimal => LpStatus::Optimal,
        simplex::SimplexStatus::IterationCap => LpStatus::IterationCap,
        // an unbounded packing dual means no fractional cover exists
        simplex::SimplexStatus::Unbounded => LpStatus::Infeasible,
    };
    let x: Vec<T> = out.dual.into_iter().map(|v| v.max_of(T::zero()).min_of(T::one())).collect();
    let objective = x.iter().zip(inst.costs()).map(|(&xi, &c)| xi * c).fold(T::zero(), |a, b| a + b);
    LpSolution { x, objective, status }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    LpRounding,
    StarGreedy,
    Custom,
}

/// An advertised profile with the quantities the protocols care about.
#[derive(Debug, Clone, PartialEq)]
pub struct AdStrategy<T> {
    pub state: JointState,
    pub provenance: Provenance,
    /// `None` when no agent is on (the `+∞` convention).
    pub delta1_star: Option<usize>,
    /// Weight of the sets the profile leaves uncovered.
    pub f_r_weight: T,
    pub warnings: Vec<String>,
}

impl<T: Scalar> AdStrategy<T> {
    pub fn new(inst: &Instance<T>, state: JointState, provenance: Provenance) -> Result<Self> {
        let delta1_star = delta1_star(inst, &state)?;
        let f_r_weight = inst.weight_of(&inst.uncovered_sets(&state)?);
        Ok(Self { state, provenance, delta1_star, f_r_weight, warnings: Vec::new() })
    }
}

/// On iff `x_i ≥ 1/f_max` (with tolerance).
pub fn round_lp<T: Scalar>(inst: &Instance<T>, lp: &LpSolution<T>) -> Result<AdStrategy<T>> {
    if lp.status != LpStatus::Optimal {
        return Err(Error::Parameter(format!("cannot round an LP with status {:?}", lp.status)));
    }
    if lp.x.len() != inst.n() {
        return Err(Error::Dimension { expected: inst.n(), got: lp.x.len() });
    }
    let f_max = inst.stats().f_max;
    let state = if f_max == 0 {
        JointState::all_off(inst.n())
    } else {
        let threshold = T::one() / T::from_usize_lossy(f_max);
        JointState::from_actions(lp.x.iter().map(|&xi| Action::from(threshold.approx_le(xi))).collect())
    };
    AdStrategy::new(inst, state, Provenance::LpRounding)
}

/// LP relaxation followed by rounding.
pub fn lp_rounding_strategy<T: Scalar>(inst: &Instance<T>) -> Result<AdStrategy<T>> {
    round_lp(inst, &solve_lp_relaxation(inst))
}

/// Turns on, for each still-uncovered set in id order, its cheapest member
/// (lowest id on ties). The on-set only grows.
pub fn repair_to_full_cover<T: Scalar>(inst: &Instance<T>, s: &JointState) -> Result<JointState> {
    let mut tr = CoverTracker::new(inst, s.clone())?;
    for (id, set) in inst.sets().iter().enumerate() {
        if tr.is_covered(id) {
            continue;
        }
        let pick = set
            .members()
            .iter()
            .copied()
            .reduce(|best, i| if inst.cost_of(i) < inst.cost_of(best) { i } else { best })
            .expect("sets are non-empty");
        tr.set_action(pick, Action::On);
    }
    Ok(tr.into_state())
}

/// Per on-agent, the number of sets in which it is the only on member.
fn unique_cover_counts<T: Scalar>(tr: &CoverTracker<'_, T>) -> Vec<Option<usize>> {
    let inst = tr.instance();
    (0..inst.n())
        .map(|i| {
            tr.state().get(i).is_on().then(|| {
                inst.incident(i)
                    .iter()
                    .filter(|&&id| inst.set(id).members().iter().filter(|&&m| tr.state().get(m).is_on()).count() == 1)
                    .count()
            })
        })
        .collect()
}

/// `min` over on-agents of the number of sets they cover alone; `None` if nobody is on.
pub fn delta1_star<T: Scalar>(inst: &Instance<T>, s: &JointState) -> Result<Option<usize>> {
    let tr = CoverTracker::new(inst, s.clone())?;
    Ok(unique_cover_counts(&tr).into_iter().flatten().min())
}

/// Result of evaluating the tail condition
/// `K·x^K·(1−β)^(x−K) ≤ 1/n²` for all `x ≥ x_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarCheck {
    pub holds: bool,
    /// Supremum of the left side over `x ≥ x_min`.
    pub sup_value: f64,
    /// `1/n²`.
    pub threshold: f64,
    pub k: u64,
    pub beta: f64,
    pub x_min: f64,
    /// Unconstrained maximizer `K / ln(1/(1−β))`.
    pub x_hat: f64,
    /// Set when the condition is vacuous (`f_max ≤ 1` or `Δ₂ = 0`).
    pub warning: Option<String>,
}

impl StarCheck {
    /// `sup_value − threshold`; positive means violated.
    pub fn max_violation(&self) -> f64 {
        self.sup_value - self.threshold
    }
}

/// `K = max(1, ⌊c_max/w_min⌋)`.
pub fn star_k<T: Scalar>(inst: &Instance<T>) -> u64 {
    inst.stats().cost_weight_ratio().map_or(1, |r| (r.floor() as u64).max(1))
}

fn ln_tail(k: f64, x: f64, ln_one_minus_beta: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let slope = x - k;
    let tail = if slope == 0.0 { 0.0 } else { slope * ln_one_minus_beta };
    k.ln() + k * x.ln() + tail
}

/// Checks the tail condition for a profile with unique-coverer degree `delta1_star`.
///
/// The left side is log-concave in `x` with its peak at `x̂ = K/ln(1/(1−β))`,
/// so the supremum over `[x_min, ∞)` is at `x̂` when `x̂ > x_min` and at
/// `x_min` otherwise.
pub fn check_star_condition_for<T: Scalar>(
    inst: &Instance<T>,
    delta1_star: Option<usize>,
    alpha: f64,
) -> Result<StarCheck> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let stats = inst.stats();
    let n = inst.n().max(1) as f64;
    let threshold = 1.0 / (n * n);
    let k = star_k(inst);
    let kf = k as f64;
    let beta = alpha.powi(stats.f_max as i32);
    let ln_omb = (-beta).ln_1p();
    let x_hat = kf / -ln_omb;
    if stats.f_max <= 1 || stats.delta2 == 0 {
        return Ok(StarCheck {
            holds: true,
            sup_value: 0.0,
            threshold,
            k,
            beta,
            x_min: f64::INFINITY,
            x_hat,
            warning: Some(format!("condition is vacuous (f_max = {}, delta2 = {})", stats.f_max, stats.delta2)),
        });
    }
    let x_min = match delta1_star {
        None => f64::INFINITY,
        Some(d) => d as f64 / (stats.delta2 as f64 * (stats.f_max - 1) as f64),
    };
    let sup_value = if x_min.is_infinite() {
        0.0
    } else {
        let at = if x_hat > x_min { x_hat } else { x_min };
        ln_tail(kf, at, ln_omb).exp()
    };
    Ok(StarCheck { holds: sup_value <= threshold, sup_value, threshold, k, beta, x_min, x_hat, warning: None })
}

pub fn check_star_condition<T: Scalar>(inst: &Instance<T>, ad: &AdStrategy<T>, alpha: f64) -> Result<StarCheck> {
    check_star_condition_for(inst, ad.delta1_star, alpha)
}

/// `4/ln(1/(1−α^f_max)) · (1 + 2K)`.
pub fn default_greedy_b<T: Scalar>(inst: &Instance<T>, alpha: f64) -> f64 {
    let f_max = inst.stats().f_max.max(1);
    let lam = -(-alpha.powi(f_max as i32)).ln_1p();
    4.0 / lam * (1.0 + 2.0 * star_k(inst) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarGreedy<T> {
    pub strategy: AdStrategy<T>,
    pub check: StarCheck,
    /// `B·Δ₂·ln n`.
    pub threshold: f64,
    pub b: f64,
    /// Agents switched off, in removal order.
    pub removed: Vec<usize>,
}

/// Repeatedly switches off the on-agent with the fewest uniquely covered sets
/// (lowest id on ties) while that count is below `B·Δ₂·ln n`.
pub fn build_star_greedy<T: Scalar>(
    inst: &Instance<T>,
    base: &JointState,
    alpha: f64,
    b: Option<f64>,
) -> Result<StarGreedy<T>> {
    let b = b.unwrap_or_else(|| default_greedy_b(inst, alpha));
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Parameter(format!("B must be positive and finite, got {b}")));
    }
    let delta2 = inst.stats().delta2;
    let threshold = b * delta2 as f64 * (inst.n().max(1) as f64).ln();
    let mut tr = CoverTracker::new(inst, base.clone())?;
    let mut removed = Vec::new();
    loop {
        let weakest = unique_cover_counts(&tr).into_iter().enumerate().filter_map(|(i, c)| c.map(|c| (c, i))).min();
        match weakest {
            Some((count, i)) if (count as f64) < threshold => {
                tr.set_action(i, Action::Off);
                removed.push(i);
            }
            _ => break,
        }
    }
    let mut strategy = AdStrategy::new(inst, tr.into_state(), Provenance::StarGreedy)?;
    if strategy.state.count_on() == 0 && inst.n() > 0 {
        strategy.warnings.push("every agent was switched off; the instance is degenerate for this B".into());
    }
    let check = check_star_condition(inst, &strategy, alpha)?;
    Ok(StarGreedy { strategy, check, threshold, b, removed })
}

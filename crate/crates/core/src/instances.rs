//! Instance generators and the JSON instance/state file formats.
//!
//! Instance documents look like
//! `{"n":3,"costs":[0.5,0.5,0.5],"sets":[{"members":[0,1],"weight":1.0}]}`
//! with members ascending and sets in lexicographic member order. State
//! documents are `{"actions":"0101"}` with `'1'` meaning on.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Instance, JointState};
use crate::scalar::Scalar;

/// Star graph: agent 0 is the center, sets `{0, i}` for every leaf `i`.
pub fn gen_star<T: Scalar>(n: usize, c: T, w: T) -> Result<Instance<T>> {
    if n < 2 {
        return Err(Error::Parameter(format!("star needs n >= 2, got {n}")));
    }
    Instance::new(vec![c; n], (1..n).map(|i| (vec![0, i], w)).collect())
}

/// Complete bipartite graph between `L = {0..⌈c⌉}` and the remaining agents,
/// unit weights and uniform cost `c`. Both `L`-on and `R`-on are equilibria.
pub fn gen_poa_bipartite<T: Scalar>(n: usize, c: T) -> Result<Instance<T>> {
    let left = poa_left_size(c)?;
    if n <= left {
        return Err(Error::Parameter(format!("need n > ceil(c) = {left}, got n = {n}")));
    }
    let sets = (0..left).flat_map(|l| (left..n).map(move |r| (vec![l, r], T::one()))).collect();
    Instance::new(vec![c; n], sets)
}

/// `⌈c⌉`, the size of the left side of [`gen_poa_bipartite`].
pub fn poa_left_size<T: Scalar>(c: T) -> Result<usize> {
    let cf = c.to_f64_lossy();
    if cf <= 0.0 || !cf.is_finite() {
        return Err(Error::Parameter(format!("cost must be positive and finite, got {c}")));
    }
    Ok(cf.ceil() as usize)
}

pub fn gen_path<T: Scalar>(n: usize, c: T, w: T) -> Result<Instance<T>> {
    if n < 2 {
        return Err(Error::Parameter(format!("path needs n >= 2, got {n}")));
    }
    Instance::new(vec![c; n], (0..n - 1).map(|i| (vec![i, i + 1], w)).collect())
}

pub fn gen_cycle<T: Scalar>(n: usize, c: T, w: T) -> Result<Instance<T>> {
    if n < 3 {
        return Err(Error::Parameter(format!("cycle needs n >= 3, got {n}")));
    }
    Instance::new(vec![c; n], (0..n).map(|i| (vec![i, (i + 1) % n], w)).collect())
}

/// Sensors on a `rows × cols` grid; each grid cell is a region covered by every
/// sensor within Chebyshev distance `radius`. Regions with identical sensor
/// sets are merged and their weights summed.
pub fn gen_grid_sensor<T: Scalar>(rows: usize, cols: usize, radius: usize, c: T, w: T) -> Result<Instance<T>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter("grid dimensions must be positive".into()));
    }
    let mut merged: BTreeMap<Vec<usize>, T> = BTreeMap::new();
    for r in 0..rows {
        for col in 0..cols {
            let members: Vec<usize> = (r.saturating_sub(radius)..=(r + radius).min(rows - 1))
                .flat_map(|rr| {
                    (col.saturating_sub(radius)..=(col + radius).min(cols - 1)).map(move |cc| rr * cols + cc)
                })
                .collect();
            let e = merged.entry(members).or_insert_with(T::zero);
            *e = *e + w;
        }
    }
    Instance::new(vec![c; rows * cols], merged.into_iter().collect())
}

fn binomial_saturating(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// `m` distinct `k`-subsets of `[n]` drawn uniformly without replacement,
/// costs and weights uniform on the given closed ranges.
pub fn gen_random_uniform(
    n: usize,
    m: usize,
    k: usize,
    cost_range: (f64, f64),
    weight_range: (f64, f64),
    seed: u64,
) -> Result<Instance<f64>> {
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("set size k = {k} must be in 1..={n}")));
    }
    for (name, (lo, hi)) in [("cost", cost_range), ("weight", weight_range)] {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Parameter(format!("{name} range [{lo}, {hi}] must be positive and ordered")));
        }
    }
    let total = binomial_saturating(n, k);
    if m as u128 > total {
        return Err(Error::Parameter(format!("m = {m} exceeds C({n}, {k}) = {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let costs: Vec<f64> = (0..n).map(|_| draw(&mut rng, cost_range)).collect();
    let mut chosen: Vec<Vec<usize>> = Vec::with_capacity(m);
    if total <= 4 * m as u128 || total <= 1 << 16 {
        let all = k_subsets(n, k);
        for idx in sample(&mut rng, all.len(), m).into_iter() {
            chosen.push(all[idx].clone());
        }
    } else {
        let mut seen = HashSet::with_capacity(m);
        while chosen.len() < m {
            let mut s = sample(&mut rng, n, k).into_vec();
            s.sort_unstable();
            if seen.insert(s.clone()) {
                chosen.push(s);
            }
        }
    }
    let sets = chosen.into_iter().map(|s| (s, draw(&mut rng, weight_range))).collect();
    Instance::new(costs, sets)
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(pos) = (0..k).rev().find(|&p| cur[p] < n - k + p) else {
            return out;
        };
        cur[pos] += 1;
        for q in pos + 1..k {
            cur[q] = cur[q - 1] + 1;
        }
    }
}

/// Generator family with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    Star { n: usize, c: f64, w: f64 },
    PoaBipartite { n: usize, c: f64 },
    RandomUniform { n: usize, m: usize, k: usize, cost_range: (f64, f64), weight_range: (f64, f64), seed: u64 },
    GridSensor { rows: usize, cols: usize, radius: usize, c: f64, w: f64 },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Instance<f64>> {
        match *self {
            GeneratorSpec::Star { n, c, w } => gen_star(n, positive(c)?, positive(w)?),
            GeneratorSpec::PoaBipartite { n, c } => gen_poa_bipartite(n, positive(c)?),
            GeneratorSpec::RandomUniform { n, m, k, cost_range, weight_range, seed } => {
                gen_random_uniform(n, m, k, cost_range, weight_range, seed)
            }
            GeneratorSpec::GridSensor { rows, cols, radius, c, w } => {
                gen_grid_sensor(rows, cols, radius, positive(c)?, positive(w)?)
            }
        }
    }
}

fn positive(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Parameter(format!("expected a positive finite value, got {x}")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    n: usize,
    costs: Vec<f64>,
    sets: Vec<SetDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetDoc {
    members: Vec<usize>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    actions: String,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), column: e.column(), msg: e.to_string() }
}

/// Canonical single-line JSON, newline terminated.
pub fn instance_to_json(inst: &Instance<f64>) -> String {
    let doc = InstanceDoc {
        n: inst.n(),
        costs: inst.costs().to_vec(),
        sets: inst.sets().iter().map(|s| SetDoc { members: s.members().to_vec(), weight: s.weight() }).collect(),
    };
    let mut out = serde_json::to_string(&doc).expect("instance documents always serialize");
    out.push('\n');
    out
}

pub fn instance_from_json(text: &str) -> Result<Instance<f64>> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(json_error)?;
    if doc.costs.len() != doc.n {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            msg: format!("n = {} but costs has {} entries", doc.n, doc.costs.len()),
        });
    }
    Instance::new(doc.costs, doc.sets.into_iter().map(|s| (s.members, s.weight)).collect())
}

pub fn state_to_json(s: &JointState) -> String {
    let mut out = serde_json::to_string(&StateDoc { actions: s.to_bits() }).expect("state documents always serialize");
    out.push('\n');
    out
}

pub fn state_from_json(text: &str) -> Result<JointState> {
    let doc: StateDoc = serde_json::from_str(text).map_err(json_error)?;
    JointState::from_bits(&doc.actions)
}

//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (visible without `--nocapture`) and then asserts the verdict.

use std::io::Write as _;
use std::time::{Duration, Instant};

use covgame::advertiser::{build_star_greedy, lp_rounding_strategy};
use covgame::dynamics::{run_psa, PsaConfig};
use covgame::dynamics::{CommitPolicy, SchedulePolicy};
use covgame::game::Instance;
use covgame::harness::{
    brute_force_opt, check_appendix_bound, enumerate_nash, run_experiment, trial_seed, AdSource, ExperimentConfig,
    InstanceSource, Model, DEFAULT_NMAX,
};
use covgame::instances::{
    gen_cycle, gen_grid_sensor, gen_path, gen_poa_bipartite, gen_random_uniform, gen_star, GeneratorSpec,
};
use covgame::packing::nash_correspondence_check;
use covgame::{ExactInstance, JointState};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, title: &str, pass: bool, elapsed: Duration, detail: &str) {
    let line = format!(
        "criterion {id:>2} {} {title} ({:.2}s): {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

/// Social cost straight from the definition: each on-agent pays its cost,
/// each off-agent pays the weights of its incident sets with no on member.
fn oracle_cost(inst: &Instance<f64>, s: &JointState) -> f64 {
    (0..inst.n()).map(|i| oracle_agent_cost(inst, s, i)).sum()
}

fn oracle_agent_cost(inst: &Instance<f64>, s: &JointState, i: usize) -> f64 {
    if s.get(i).is_on() {
        return inst.cost_of(i);
    }
    inst.sets()
        .iter()
        .filter(|set| set.members().contains(&i) && set.members().iter().all(|&m| !s.get(m).is_on()))
        .map(|set| set.weight())
        .sum()
}

fn oracle_potential(inst: &Instance<f64>, s: &JointState) -> f64 {
    let on: f64 = (0..inst.n()).filter(|&i| s.get(i).is_on()).map(|i| inst.cost_of(i)).sum();
    let uncovered: f64 =
        inst.sets().iter().filter(|set| set.members().iter().all(|&m| !s.get(m).is_on())).map(|set| set.weight()).sum();
    on + uncovered
}

#[test]
fn criterion_01_star_example() {
    let t = Instant::now();
    let n = 100;
    let star = gen_star::<f64>(n, 0.5, 1.0).unwrap();
    let center_on = JointState::with_on(n, &[0]);
    let center_off = JointState::from_actions((0..n).map(|i| (i != 0).into()).collect());
    let c_on = star.social_cost(&center_on).unwrap();
    let c_off = star.social_cost(&center_off).unwrap();
    let nash_on = star.is_nash(&center_on).unwrap().holds();
    let nash_off = star.is_nash(&center_off).unwrap().holds();

    let exact: ExactInstance = gen_star(n, Rational64::new(1, 2), Rational64::from_integer(1)).unwrap();
    let exact_ok = exact.social_cost(&center_on).unwrap() == Rational64::new(1, 2)
        && exact.social_cost(&center_off).unwrap() == Rational64::new(99, 2)
        && exact.is_nash(&center_off).unwrap().holds();

    let elapsed = t.elapsed();
    let pass = (c_on - 0.5).abs() <= 1e-9
        && (c_off - 49.5).abs() <= 1e-9
        && nash_on
        && nash_off
        && exact_ok
        && within(elapsed, 1);
    verdict(
        1,
        "star example",
        pass,
        elapsed,
        &format!(
            "center-on cost {c_on}, center-off cost {c_off} (Nash: {nash_off}), exact rationals agree: {exact_ok}"
        ),
    );
}

#[test]
fn criterion_02_poa_instance() {
    let t = Instant::now();
    let (n, c) = (12, 2.0);
    let inst = gen_poa_bipartite::<f64>(n, c).unwrap();
    let e = enumerate_nash(&inst, DEFAULT_NMAX).unwrap();
    let left = JointState::with_on(n, &[0, 1]);
    let right = JointState::with_on(n, &(2..n).collect::<Vec<_>>());
    let find = |s: &JointState| e.equilibria.iter().find(|x| &x.0 == s).map(|x| x.1);
    let (cl, cr) = (find(&left), find(&right));

    let exact = gen_poa_bipartite::<Rational64>(n, Rational64::from_integer(2)).unwrap();
    let exact_costs = (exact.social_cost(&left).unwrap(), exact.social_cost(&right).unwrap());
    let elapsed = t.elapsed();
    let pass = cl == Some(4.0)
        && cr == Some(20.0)
        && exact_costs == (Rational64::from_integer(4), Rational64::from_integer(20))
        && e.poa >= 5.0 - 1e-9
        && within(elapsed, 10);
    verdict(
        2,
        "PoA instance equilibria",
        pass,
        elapsed,
        &format!("L-on {cl:?}, R-on {cr:?}, {} equilibria, OPT {}, PoA {}", e.equilibria.len(), e.opt, e.poa),
    );
}

#[test]
fn criterion_03_lp_rounding_bound() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC03);
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for idx in 0..60u64 {
        let n = rng.gen_range(6..=18usize);
        let k = rng.gen_range(1..=4usize).min(n);
        let max_m = (1..=k).fold(1usize, |acc, j| acc * (n + 1 - j) / j);
        let m = rng.gen_range(1..=(2 * n).min(max_m));
        let inst = gen_random_uniform(n, m, k, (0.2, 3.0), (0.3, 2.0), idx).unwrap();
        let ad = lp_rounding_strategy(&inst).unwrap();
        let (opt, _) = brute_force_opt(&inst, DEFAULT_NMAX).unwrap();
        let stats = inst.stats();
        let factor = stats.f_max as f64 * stats.cost_weight_ratio().unwrap().ceil();
        let cost = oracle_cost(&inst, &ad.state);
        worst = worst.max(cost / opt);
        if cost > factor * opt + 1e-7 {
            failures.push(idx);
        }
        checked += 1;
    }
    let elapsed = t.elapsed();
    let pass = failures.is_empty() && checked >= 50 && within(elapsed, 300);
    verdict(
        3,
        "LP rounding within f_max*ceil(c_max/w_min)*OPT",
        pass,
        elapsed,
        &format!("{checked} instances, violations {failures:?}, worst cost/OPT {worst:.4}"),
    );
}

#[test]
fn criterion_04_potential_law_and_sandwich() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC04);
    let mut bad_identity = 0;
    let mut bad_sandwich = 0;
    let triples = 10_000;
    let pool: Vec<Instance<f64>> = (0..50u64)
        .map(|s| {
            let n = 4 + (s as usize % 12);
            let k = 1 + (s as usize % 4).min(n - 1);
            let max_m = (1..=k).fold(1usize, |acc, j| acc * (n + 1 - j) / j);
            gen_random_uniform(n, (2 * n).min(max_m), k, (0.1, 4.0), (0.1, 3.0), 1000 + s).unwrap()
        })
        .collect();
    for _ in 0..triples {
        let inst = &pool[rng.gen_range(0..pool.len())];
        let n = inst.n();
        let s = JointState::from_actions((0..n).map(|_| rng.gen::<bool>().into()).collect());
        let i = rng.gen_range(0..n);
        let mut s2 = s.clone();
        s2.set(i, s.get(i).flipped());
        let d_cost = oracle_agent_cost(inst, &s2, i) - oracle_agent_cost(inst, &s, i);
        let d_phi = inst.potential(&s2).unwrap() - inst.potential(&s).unwrap();
        if (d_cost - d_phi).abs() > 1e-9 {
            bad_identity += 1;
        }
        let phi = oracle_potential(inst, &s);
        let cost = inst.social_cost(&s).unwrap();
        let f_max = inst.stats().f_max as f64;
        if !(phi <= cost + 1e-9 && cost <= f_max * phi + 1e-9) || (phi - inst.potential(&s).unwrap()).abs() > 1e-9 {
            bad_sandwich += 1;
        }
    }
    let elapsed = t.elapsed();
    let pass = bad_identity == 0 && bad_sandwich == 0 && within(elapsed, 30);
    verdict(
        4,
        "exact potential and cost sandwich",
        pass,
        elapsed,
        &format!("{triples} triples, identity violations {bad_identity}, sandwich violations {bad_sandwich}"),
    );
}

#[test]
fn criterion_05_bad_sets_weight_bound() {
    let t = Instant::now();
    let generators: Vec<Instance<f64>> = vec![
        gen_star(60, 0.5, 1.0).unwrap(),
        gen_poa_bipartite(30, 3.0).unwrap(),
        gen_grid_sensor(8, 8, 1, 2.0, 1.0).unwrap(),
        gen_random_uniform(40, 80, 2, (0.2, 2.0), (0.5, 1.5), 11).unwrap(),
        gen_random_uniform(40, 60, 3, (0.5, 3.0), (0.2, 1.0), 12).unwrap(),
        gen_random_uniform(30, 50, 4, (1.0, 4.0), (0.5, 2.0), 13).unwrap(),
        gen_cycle(50, 0.8, 1.0).unwrap(),
    ];
    let ads: Vec<JointState> = generators.iter().map(|g| lp_rounding_strategy(g).unwrap().state).collect();
    let alphas = [0.1, 0.3, 0.5, 0.8];
    let trials = 2000u64;
    let mut violations = Vec::new();
    let mut max_ratio = 0.0f64;
    for k in 0..trials {
        let g = k as usize % generators.len();
        let inst = &generators[g];
        let alpha = alphas[(k as usize / generators.len()) % alphas.len()];
        let run = run_psa(inst, &ads[g], &PsaConfig::new(alpha, trial_seed(5, k))).unwrap();
        let s_prime = &run.trace.s_prime;
        // independent recomputation of F_bad and c(L)
        let w_bad: f64 = inst
            .sets()
            .iter()
            .filter(|set| {
                set.members().iter().any(|&m| ads[g].get(m).is_on())
                    && set.members().iter().all(|&m| !s_prime.get(m).is_on())
            })
            .map(|set| set.weight())
            .sum();
        let c_l: f64 = (0..inst.n()).filter(|&i| ads[g].get(i).is_on()).map(|i| inst.cost_of(i)).sum();
        if (w_bad - run.diagnostics.w_fbad(inst)).abs() > 1e-9 || w_bad > c_l + 1e-9 {
            violations.push(k);
        }
        if c_l > 0.0 {
            max_ratio = max_ratio.max(w_bad / c_l);
        }
    }
    let elapsed = t.elapsed();
    let pass = violations.is_empty();
    verdict(
        5,
        "w(F_bad) <= c(L) after Phase 1",
        pass,
        elapsed,
        &format!(
            "{trials} PSA trials on {} generators, violations {violations:?}, max w(F_bad)/c(L) {max_ratio:.4}",
            generators.len()
        ),
    );
}

fn star_experiment(model: Model, master: u64, trials: u64) -> f64 {
    let mut cfg = ExperimentConfig::new(
        InstanceSource::Generator(GeneratorSpec::Star { n: 100, c: 0.5, w: 1.0 }),
        model,
        trials,
        master,
    );
    cfg.ad = AdSource::Custom(JointState::with_on(100, &[0]));
    cfg.workers = 8;
    let r = run_experiment(&cfg).unwrap();
    assert!(r.all_ok(), "invariant failure at seed {:?}", r.summary.first_failure_seed);
    r.summary.mean_ratio_ad
}

fn spread(means: &[f64]) -> f64 {
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = means.iter().sum::<f64>() / means.len() as f64;
    (hi - lo) / avg
}

#[test]
fn criterion_06_psa_star_ratio() {
    let t = Instant::now();
    let model = Model::Psa { alpha: 0.2, policy: SchedulePolicy::RandomPermutationSweeps };
    let means: Vec<f64> = (1..=5).map(|m| star_experiment(model.clone(), m, 2000)).collect();
    let sp = spread(&means);
    let elapsed = t.elapsed();
    let pass = means.iter().all(|m| m.is_finite() && *m <= 20.0) && sp <= 0.2;
    verdict(
        6,
        "PSA on star bounded and stable",
        pass,
        elapsed,
        &format!("mean cost(s'')/cost(s_ad) per master seed {means:?}, relative spread {sp:.4}"),
    );
}

/// Four hubs, each the center of 40 leaves, leaves joined by a sparse set of
/// extra edges; every pair of agents shares at most one set.
fn hub_instance() -> Instance<f64> {
    let hubs = 4;
    let leaves = 40;
    let n = hubs + hubs * leaves;
    let mut sets: Vec<(Vec<usize>, f64)> = Vec::new();
    for h in 0..hubs {
        for l in 0..leaves {
            sets.push((vec![h, hubs + h * leaves + l], 1.0));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xC07);
    let mut seen = std::collections::HashSet::new();
    while seen.len() < 30 {
        let a = rng.gen_range(hubs..n);
        let b = rng.gen_range(hubs..n);
        if a != b && seen.insert((a.min(b), a.max(b))) {
            sets.push((vec![a.min(b), a.max(b)], 1.0));
        }
    }
    Instance::new(vec![0.5; n], sets).unwrap()
}

#[test]
fn criterion_07_star_condition_protocol() {
    let t = Instant::now();
    let inst = hub_instance();
    let alpha = 0.9;
    let n = inst.n();
    let base = lp_rounding_strategy(&inst).unwrap();
    let greedy = build_star_greedy(&inst, &base.state, alpha, None).unwrap();
    let ad = greedy.strategy.state.clone();
    let trials = 5000u64;
    let mut good = 0u64;
    for k in 0..trials {
        let run = run_psa(&inst, &ad, &PsaConfig::new(alpha, trial_seed(77, k))).unwrap();
        let d = &run.diagnostics;
        if d.f_bad.is_empty() && d.c_ron(&inst) <= d.w_fr(&inst) + 1e-9 {
            good += 1;
        }
    }
    let frac = good as f64 / trials as f64;
    let target = 1.0 - 1.0 / n as f64;
    let stderr = (target * (1.0 - target) / trials as f64).sqrt();
    let bar = target - 3.0 * stderr;
    let elapsed = t.elapsed();
    let pass = greedy.check.holds && n >= 50 && frac >= bar && within(elapsed, 600);
    verdict(
        7,
        "condition-backed PSA success rate",
        pass,
        elapsed,
        &format!(
            "n {n}, ad on-set {:?}, condition holds {} (sup {:.3e} vs 1/n^2 {:.3e}), success {good}/{trials} = {frac:.4} vs bar {bar:.4}",
            ad.on_agents(),
            greedy.check.holds,
            greedy.check.sup_value,
            greedy.check.threshold
        ),
    );
}

#[test]
fn criterion_08_ltd_ordering_event_and_ratio() {
    let t = Instant::now();
    let mut rates = Vec::new();
    for n in [20usize, 50, 200] {
        let mut cfg = ExperimentConfig::new(
            InstanceSource::Generator(GeneratorSpec::Star { n, c: 0.5, w: 1.0 }),
            Model::Ltd { beta: 0.2, commit: CommitPolicy::MyopicCompare, t_star: None },
            2000,
            8,
        );
        cfg.ad = AdSource::Custom(JointState::with_on(n, &[0]));
        cfg.workers = 8;
        let r = run_experiment(&cfg).unwrap();
        assert!(r.all_ok(), "invariant failure at seed {:?}", r.summary.first_failure_seed);
        let hits = r.rows.iter().filter(|row| row.event_e == Some(true)).count();
        rates.push((n, hits as f64 / r.rows.len() as f64));
    }
    let model = Model::Ltd { beta: 0.2, commit: CommitPolicy::MyopicCompare, t_star: None };
    let means: Vec<f64> = (1..=5).map(|m| star_experiment(model.clone(), m, 2000)).collect();
    let sp = spread(&means);
    let elapsed = t.elapsed();
    let pass = rates.iter().all(|&(_, r)| r >= 0.99) && means.iter().all(|m| m.is_finite() && *m <= 20.0) && sp <= 0.2;
    verdict(
        8,
        "LTD ordering event and star ratio",
        pass,
        elapsed,
        &format!("event rate per n {rates:?}, star mean ratios {means:?}, relative spread {sp:.4}"),
    );
}

#[test]
fn criterion_09_binomial_tail_sum() {
    let t = Instant::now();
    let report = check_appendix_bound(&[0.3, 0.5, 0.7], &[0.5, 1.0, 2.0, 3.0, 5.0], 10_000).unwrap();
    let elapsed = t.elapsed();
    let worst = report.rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let boundary: Vec<(f64, f64)> = report.rows.iter().filter(|r| r.argmax_d == r.d_min).map(|r| (r.a, r.c)).collect();
    let pass = report.all_ok() && within(elapsed, 30);
    verdict(
        9,
        "binomial tail sum bounded",
        pass,
        elapsed,
        &format!(
            "{} (a,c) pairs, max S/ceil(c) {worst:.4}, maximizer below d_max and non-increasing after it in all pairs: {}, maximizer at smallest d for {boundary:?}",
            report.rows.len(),
            report.all_ok()
        ),
    );
}

#[test]
fn criterion_10_packing_correspondence() {
    let t = Instant::now();
    let mut instances: Vec<(String, Instance<f64>)> = Vec::new();
    for n in 2..=12 {
        for c in [0.3, 0.5, 0.9] {
            instances.push((format!("star n={n} c={c}"), gen_star(n, c, 1.0).unwrap()));
            instances.push((format!("path n={n} c={c}"), gen_path(n, c, 1.0).unwrap()));
            if n >= 3 {
                instances.push((format!("cycle n={n} c={c}"), gen_cycle(n, c, 1.0).unwrap()));
            }
        }
    }
    for seed in 0..20u64 {
        let n = 5 + (seed as usize % 8);
        let m = (n * (n - 1) / 2).min(2 * n);
        instances.push((
            format!("random graph seed={seed}"),
            gen_random_uniform(n, m, 2, (0.2, 1.5), (0.5, 1.5), seed).unwrap(),
        ));
    }
    let mismatched: Vec<&String> = instances
        .iter()
        .filter(|(_, inst)| !nash_correspondence_check(inst, 12).unwrap().matches())
        .map(|(name, _)| name)
        .collect();
    let elapsed = t.elapsed();
    let pass = mismatched.is_empty() && within(elapsed, 120);
    verdict(
        10,
        "covering/packing equilibrium correspondence",
        pass,
        elapsed,
        &format!("{} size-2 instances, mismatches {mismatched:?}", instances.len()),
    );
}

#[test]
fn criterion_11_determinism() {
    let t = Instant::now();
    let cfg = |workers| {
        let mut c = ExperimentConfig::new(
            InstanceSource::Generator(GeneratorSpec::RandomUniform {
                n: 60,
                m: 120,
                k: 3,
                cost_range: (0.5, 2.0),
                weight_range: (0.5, 1.5),
                seed: 4,
            }),
            Model::Psa { alpha: 0.3, policy: SchedulePolicy::UniformRandom },
            300,
            11,
        );
        c.workers = workers;
        c
    };
    let a = run_experiment(&cfg(1)).unwrap().to_csv();
    let b = run_experiment(&cfg(1)).unwrap().to_csv();
    let c = run_experiment(&cfg(8)).unwrap().to_csv();
    let mut ltd = cfg(1);
    ltd.model = Model::Ltd { beta: 0.3, commit: CommitPolicy::BernoulliP, t_star: None };
    let d = run_experiment(&ltd).unwrap().to_csv();
    ltd.workers = 8;
    let e = run_experiment(&ltd).unwrap().to_csv();
    let elapsed = t.elapsed();
    let pass = a == b && a == c && d == e;
    verdict(
        11,
        "byte-identical experiment CSV",
        pass,
        elapsed,
        &format!("PSA rerun equal {}, 1 vs 8 workers equal {}, LTD 1 vs 8 workers equal {}", a == b, a == c, d == e),
    );
}

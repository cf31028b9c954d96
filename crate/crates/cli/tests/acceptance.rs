//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p gdalloc-cli --test acceptance`; pass criterion
//! numbers as arguments (`-- 4 6`) to run a subset.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gdalloc::experiments::{
    generate_batch, generate_instance, run_comparison, run_robustness,
    ComparisonConfig, DegreeMode, DistKind, GeneratorConfig, RobustnessConfig,
};
use gdalloc::planner::{
    compute_z_flow, default_z_flow_tolerance, find_z_hat, max_flow_at_budget,
    representative_plan, standard_plan, z_flow_exact_small,
};
use gdalloc::policies::{DeliveryPolicy, FlowBasedPolicy, GreedyRule, PolicyKind, SmoothRule};
use gdalloc::simulator::{
    dp_optimal_expected, episode_sequence, offline_optimum, random_upper_bound,
    simulate_episode, wald_check, EpisodeRecord,
};
use gdalloc::{seeding, Instance};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn small_config(rng: &mut impl Rng, max_m: usize, max_n: usize, max_w: u64, seed: u64) -> GeneratorConfig {
    let m = rng.random_range(1..=max_m);
    let n = rng.random_range(1..=max_n);
    GeneratorConfig {
        m,
        n,
        avg_degree: rng.random_range(1..=m.min(3)),
        demand_range: (1, rng.random_range(1..=max_w)),
        dist_kind: if rng.random() {
            DistKind::RandomNormalization
        } else {
            DistKind::GaussPerturbation
        },
        degree_mode: DegreeMode::ExactPerType,
        seed,
    }
}

fn episodes(inst: &Instance, kind: PolicyKind, count: u64, root: u64) -> Vec<EpisodeRecord> {
    let plan = match kind {
        PolicyKind::FbRepresentative => representative_plan(inst),
        _ => standard_plan(inst),
    };
    let cap = gdalloc::simulator::default_cap(plan.z_hat);
    (0..count)
        .into_par_iter()
        .map(|k| {
            let seed = seeding::sub_seed(root, "episode", &[k]);
            simulate_episode(inst, kind, Some(&plan), seed, cap).expect("episode completes")
        })
        .collect()
}

fn consumption(records: &[EpisodeRecord]) -> Vec<f64> {
    records.iter().map(|r| r.consumption as f64).collect()
}

/// Relative slack for `Σp = 1` holding only up to f64 rounding.
const PROB_ROUNDING: f64 = 1e-12;

/// Mean offline optimum never falls below `Z_flow` by more than sampling error.
fn criterion_1() -> Outcome {
    let mut rng = seeding::stream(101, "acceptance", &[1]);
    let configs: Vec<GeneratorConfig> =
        (0..60).map(|k| small_config(&mut rng, 12, 12, 10, k)).collect();
    let rows: Vec<(f64, f64, f64)> = configs
        .par_iter()
        .map(|c| {
            let inst = generate_instance(c).unwrap().instance;
            let z_flow = z_flow_exact_small::<f64>(&inst).unwrap();
            let t: Vec<f64> = (0..1000u64)
                .map(|k| {
                    let seed = seeding::sub_seed(c.seed, "episode", &[k]);
                    let mut seq = episode_sequence(&inst, seed, 10_000_000);
                    offline_optimum(&inst, &mut seq).unwrap().t_star as f64
                })
                .collect();
            let (mean, se) = mean_se(&t);
            (z_flow, mean, se)
        })
        .collect();
    let worst = rows
        .iter()
        .map(|&(z, mean, se)| (mean - (z * (1.0 - PROB_ROUNDING) - 3.0 * se)) / se.max(1e-12))
        .fold(f64::INFINITY, f64::min);
    let failures = rows
        .iter()
        .filter(|&&(z, mean, se)| mean < z * (1.0 - PROB_ROUNDING) - 3.0 * se)
        .count();
    outcome(
        failures == 0,
        format!("{} instances x 1000 sequences, {failures} below z_flow - 3se (min slack {worst:.2} se)", rows.len()),
    )
}

/// `Ẑ` is the minimal saturating budget and never exceeds `⌈Z_flow⌉`.
fn criterion_2() -> Outcome {
    let mut rng = seeding::stream(102, "acceptance", &[2]);
    let configs: Vec<GeneratorConfig> = (0..200)
        .map(|k| {
            let m = rng.random_range(1..=50usize);
            GeneratorConfig {
                m,
                n: rng.random_range(1..=60),
                avg_degree: rng.random_range(1..=m.min(5)),
                demand_range: (1, rng.random_range(1..=100)),
                dist_kind: if k % 2 == 0 {
                    DistKind::RandomNormalization
                } else {
                    DistKind::GaussPerturbation
                },
                degree_mode: DegreeMode::ExactPerType,
                seed: k,
            }
        })
        .collect();
    let bad: Vec<String> = configs
        .par_iter()
        .filter_map(|c| {
            let inst = generate_instance(c).unwrap().instance;
            let m = inst.total_demand();
            let z = find_z_hat(&inst).z_hat;
            let z_flow = compute_z_flow(&inst, default_z_flow_tolerance(&inst));
            let minimal = z >= 1 && max_flow_at_budget(&inst, z - 1) < m;
            let saturating = max_flow_at_budget(&inst, z) >= m;
            let mut bounded = z <= z_flow.ceil() as u64;
            if inst.m() <= 16 {
                let exact = z_flow_exact_small::<f64>(&inst).unwrap();
                bounded &= z as f64 <= exact.ceil();
            }
            (!(minimal && saturating && bounded)).then(|| format!("seed {}", c.seed))
        })
        .collect();
    outcome(bad.is_empty(), format!("200 instances, violations: {bad:?}"))
}

const SINGLE_SLOT: &str = "fb-greedy,fb-smooth,fb-representative,random,dg,pg,hwm";

/// `Z_flow ≤ DP ≤ random bound`, and no policy beats the DP on average.
fn criterion_3() -> Outcome {
    let instances = [
        Instance::new(vec![1, 1], vec![0.5, 0.5], vec![(0, 0), (1, 1)]).unwrap(),
        Instance::new(vec![3, 2], vec![0.2, 0.3, 0.5], vec![(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap(),
        Instance::new(
            vec![3, 2, 2],
            vec![0.15, 0.25, 0.35, 0.25],
            vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (0, 3)],
        )
        .unwrap(),
        Instance::new(vec![5, 4], vec![0.1, 0.6, 0.3], vec![(0, 0), (0, 1), (1, 1)]).unwrap(),
        Instance::new(
            vec![2, 3, 2, 2],
            vec![0.4, 0.1, 0.2, 0.3],
            vec![(0, 0), (1, 0), (1, 1), (2, 2), (3, 2), (3, 3), (2, 1)],
        )
        .unwrap(),
        Instance::new(vec![6, 6], vec![0.05, 0.45, 0.5], vec![(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap(),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (idx, inst) in instances.iter().enumerate() {
        let z_flow = z_flow_exact_small::<f64>(inst).unwrap();
        let dp = dp_optimal_expected::<f64>(inst).unwrap();
        let bound = random_upper_bound::<f64>(inst);
        let tol = 1e-6 + 1e-4 * bound;
        if !(z_flow <= dp + tol && dp <= bound + tol) {
            pass = false;
            notes.push(format!("#{idx}: chain z_flow {z_flow} dp {dp} bound {bound}"));
        }
        for kind in PolicyKind::parse_list(SINGLE_SLOT).unwrap() {
            let (mean, se) = mean_se(&consumption(&episodes(inst, kind, 10_000, 300 + idx as u64)));
            if dp > mean + 3.0 * se + 1e-9 {
                pass = false;
                notes.push(format!("#{idx}: {kind} mean {mean:.4} (se {se:.4}) below dp {dp:.4}"));
            }
        }
    }
    outcome(pass, format!("{} instances x 7 policies x 10^4 episodes {notes:?}", instances.len()))
}

fn criterion_4() -> Outcome {
    let inst = Instance::new(vec![1, 1], vec![0.5, 0.5], vec![(0, 0), (1, 1)]).unwrap();
    let dp = dp_optimal_expected::<gdalloc::ExactReal>(&inst).unwrap();
    let exact = dp == gdalloc::ExactReal::from_integer(3.into());
    let bound = random_upper_bound::<f64>(&inst);
    let (mean, _) = mean_se(&consumption(&episodes(&inst, PolicyKind::Random, 10_000, 4)));
    let pass = exact && (bound - 3.0).abs() <= 1e-3 && (mean - 3.0).abs() <= 0.05;
    outcome(pass, format!("dp = {dp}, bound = {bound:.6}, random mean = {mean:.4}"))
}

fn mid_instances() -> Vec<Instance> {
    (0..3)
        .map(|k| {
            generate_instance(&GeneratorConfig {
                m: 10,
                n: 20,
                avg_degree: 3,
                demand_range: (10, 30),
                dist_kind: if k == 1 {
                    DistKind::GaussPerturbation
                } else {
                    DistKind::RandomNormalization
                },
                degree_mode: DegreeMode::ExactPerType,
                seed: 500 + k,
            })
            .unwrap()
            .instance
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    for (idx, inst) in mid_instances().iter().enumerate() {
        for kind in [PolicyKind::FbGreedy, PolicyKind::Random] {
            let records = episodes(inst, kind, 10_000, 50 + idx as u64);
            for row in wald_check(&records, inst.probs()) {
                worst = worst.max(row.z_score.abs());
            }
        }
    }
    outcome(worst <= 4.0, format!("max |z| = {worst:.3} over 3 instances x 2 policies x 10^4 episodes"))
}

/// Orderings of the threshold multiset: shuffles plus structured worst cases.
fn orderings(inst: &Instance, thresholds: &[u64], variant: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut by_type: Vec<usize> = (0..inst.n()).collect();
    match variant {
        0 => {}
        1 => by_type.reverse(),
        2 => by_type.sort_by(|&a, &b| inst.prob(a).total_cmp(&inst.prob(b))),
        3 => by_type.sort_by_key(|&j| std::cmp::Reverse(inst.type_demand(j))),
        4 => by_type.sort_by_key(|&j| inst.type_edges(j).len()),
        _ => {
            let mut seq: Vec<usize> = thresholds
                .iter()
                .enumerate()
                .flat_map(|(j, &t)| std::iter::repeat_n(j, t as usize))
                .collect();
            seq.shuffle(rng);
            return seq;
        }
    }
    if variant == 0 {
        // Round-robin over types.
        let mut left = thresholds.to_vec();
        let mut seq = Vec::new();
        while left.iter().any(|&t| t > 0) {
            for (j, t) in left.iter_mut().enumerate() {
                if *t > 0 {
                    *t -= 1;
                    seq.push(j);
                }
            }
        }
        return seq;
    }
    by_type
        .iter()
        .flat_map(|&j| std::iter::repeat_n(j, thresholds[j] as usize))
        .collect()
}

fn criterion_6() -> Outcome {
    let mut rng = seeding::stream(106, "acceptance", &[6]);
    let mut failures = Vec::new();
    let mut runs = 0;
    for k in 0..100u64 {
        let config = small_config(&mut rng, 8, 8, 15, 600 + k);
        let inst = generate_instance(&config).unwrap().instance;
        let plan = standard_plan(&inst);
        let thresholds = plan.thresholds(&inst);
        for variant in 0..10 {
            let seq = orderings(&inst, &thresholds, variant, &mut rng);
            let mut greedy = FlowBasedPolicy::new(&inst, GreedyRule::new(&inst, &plan));
            let mut smooth = FlowBasedPolicy::new(&inst, SmoothRule::new(&inst, &plan));
            for &j in &seq {
                if !greedy.state().is_done() {
                    greedy.decide(j);
                }
                if !smooth.state().is_done() {
                    smooth.decide(j);
                }
            }
            runs += 1;
            if !greedy.state().is_done() || !smooth.state().is_done() {
                failures.push((config.seed, variant));
            }
        }
    }
    outcome(failures.is_empty(), format!("{runs} orderings, unfinished: {failures:?}"))
}

const FIVE: &str = "fb-greedy,random,dg,pg,hwm";

fn sweep_config(degree: usize, dist_kind: DistKind) -> GeneratorConfig {
    GeneratorConfig {
        m: 50,
        n: 100,
        avg_degree: degree,
        demand_range: (50, 100),
        dist_kind,
        degree_mode: DegreeMode::ExactPerType,
        seed: 0,
    }
}

fn criterion_7() -> Outcome {
    let policies = PolicyKind::parse_list(FIVE).unwrap();
    let degrees = [5usize, 10, 15];
    let mut table: Vec<Vec<f64>> = Vec::new();
    for &d in &degrees {
        let mut instances: Vec<Instance> = Vec::new();
        for (half, kind) in [DistKind::RandomNormalization, DistKind::GaussPerturbation].into_iter().enumerate() {
            let root = seeding::sub_seed(107, "sweep", &[d as u64, half as u64]);
            instances.extend(
                generate_batch(&sweep_config(d, kind), 5, root)
                    .unwrap()
                    .into_iter()
                    .map(|g| g.instance),
            );
        }
        let report = run_comparison(
            &instances,
            &ComparisonConfig::new(policies.clone(), 100, seeding::sub_seed(107, "episodes", &[d as u64])),
        )
        .unwrap();
        table.push(
            policies
                .iter()
                .map(|p| report.summary(*p).unwrap().mean_ratio.unwrap())
                .collect(),
        );
    }
    let mut problems = Vec::new();
    for (row, &d) in table.iter().zip(&degrees) {
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        if row[0] > best {
            let winner = policies[row.iter().position(|&r| r == best).unwrap()];
            problems.push(format!("degree {d}: {winner} {best:.4} < fb-greedy {:.4}", row[0]));
        }
    }
    for (pi, p) in policies.iter().enumerate() {
        for w in 0..degrees.len() - 1 {
            if table[w + 1][pi] > table[w][pi] {
                problems.push(format!(
                    "{p}: {:.4} at degree {} rises to {:.4} at degree {}",
                    table[w][pi], degrees[w], table[w + 1][pi], degrees[w + 1]
                ));
            }
        }
    }
    let summary: Vec<String> = table
        .iter()
        .zip(&degrees)
        .map(|(row, d)| {
            let cells: Vec<String> = policies.iter().zip(row).map(|(p, r)| format!("{p}={r:.4}")).collect();
            format!("d={d}: {}", cells.join(" "))
        })
        .collect();
    outcome(problems.is_empty(), format!("{} | {}", summary.join("; "), problems.join("; ")))
}

fn criterion_8() -> Outcome {
    let mut means = Vec::new();
    for hi in [2500u64, 10_000] {
        let mut ratios = Vec::new();
        for d in [5usize, 10] {
            let graphs = generate_batch(&sweep_config(d, DistKind::RandomNormalization), 4, 108).unwrap();
            let instances: Vec<Instance> = graphs
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let mut rng = seeding::stream(108, "exposures", &[d as u64, k as u64, hi]);
                    let demands = (0..g.instance.m()).map(|_| rng.random_range(100..=hi)).collect();
                    g.instance.with_demands(demands).unwrap()
                })
                .collect();
            let report = run_comparison(
                &instances,
                &ComparisonConfig::new(vec![PolicyKind::FbGreedy], 40, seeding::sub_seed(108, "episodes", &[d as u64])),
            )
            .unwrap();
            ratios.push(report.policies[0].mean_ratio.unwrap());
        }
        means.push(ratios);
    }
    let diffs: Vec<f64> = (0..2).map(|k| (means[0][k] - means[1][k]).abs()).collect();
    let pass = diffs.iter().all(|&d| d < 0.05);
    outcome(
        pass,
        format!(
            "fb-greedy ratio deg5: {:.4} vs {:.4}, deg10: {:.4} vs {:.4} (W<=2500 vs W<=10000)",
            means[0][0], means[1][0], means[0][1], means[1][1]
        ),
    )
}

fn criterion_9() -> Outcome {
    let inst = generate_instance(&GeneratorConfig {
        m: 20,
        n: 40,
        avg_degree: 4,
        demand_range: (20, 60),
        dist_kind: DistKind::RandomNormalization,
        degree_mode: DegreeMode::ExactPerType,
        seed: 900,
    })
    .unwrap()
    .instance;
    let biased = run_robustness(&inst, &RobustnessConfig::new(0.1, 1000, 9)).unwrap();
    let exact = run_robustness(&inst, &RobustnessConfig::new(0.0, 1000, 9)).unwrap();
    let (ratio, se, bound) = (
        biased.ratio.unwrap(),
        biased.ratio_std_error.unwrap(),
        biased.bound.unwrap(),
    );
    let pass = ratio <= bound + 3.0 * se && exact.ratio == Some(1.0);
    outcome(
        pass,
        format!(
            "delta_eff {:.4}: ratio {ratio:.4} (se {se:.4}) vs bound {bound:.4}; delta 0 ratio {:?}",
            biased.delta_eff, exact.ratio
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = seeding::stream(110, "acceptance", &[10]);
    let mut bad = Vec::new();
    let mut completed = 0;
    for k in 0..30u64 {
        let config = small_config(&mut rng, 10, 12, 40, 1000 + k);
        let inst = generate_instance(&config).unwrap().instance;
        let plan = representative_plan(&inst);
        let expected = plan.capacities.per_edge(&inst);
        for r in episodes(&inst, PolicyKind::FbRepresentative, 50, config.seed) {
            completed += 1;
            if r.pair_counts != expected {
                bad.push(format!("seed {}: allocation differs", config.seed));
            }
        }
        for i in 0..inst.m() {
            let mass: f64 = inst.campaign_edges(i).iter().map(|r| inst.prob(r.node)).sum();
            let w = inst.demand(i) as f64;
            for r in inst.campaign_edges(i) {
                let c = plan.capacities.get(i, r.node) as f64;
                if (c / w - inst.prob(r.node) / mass).abs() >= 1.0 / w {
                    bad.push(format!("seed {}: edge ({i},{}) off by >= 1/W", config.seed, r.node));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{completed} completed episodes on 30 instances {bad:?}"))
}

fn run_cli(dir: &Path, threads: &str, args: &[&str]) -> (Vec<u8>, bool) {
    let out = Command::new(env!("CARGO_BIN_EXE_gdalloc"))
        .args(args)
        .current_dir(dir)
        .env("GDALLOC_THREADS", threads)
        .output()
        .expect("binary runs");
    (out.stdout, out.status.success())
}

fn criterion_11() -> Outcome {
    let base = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for threads in ["1", "3"] {
        let dir = base.path().join(threads);
        fs::create_dir(&dir).unwrap();
        let mut stdout = Vec::new();
        let commands: [&[&str]; 6] = [
            &["gen", "--m", "15", "--n", "30", "--deg", "3", "--w-lo", "10", "--w-hi", "40", "--seed", "11", "-o", "inst.json"],
            &["plan", "inst.json", "--variant", "representative", "--forecast", "2000", "-o", "plan.json"],
            &["simulate", "inst.json", "--policy", "random", "--episodes", "200", "--offline", "--seed", "11", "-o", "sim.csv"],
            &["compare", "--m", "15", "--n", "30", "--deg", "3", "--w-lo", "10", "--w-hi", "40", "--instances", "4", "--episodes", "30", "--seed", "11", "--policies", SINGLE_SLOT, "--json", "cmp.json", "--csv", "cmp.csv", "--episodes-csv", "eps.csv"],
            &["robustness", "inst.json", "--delta", "0.2", "--episodes", "200", "--seed", "11", "-o", "rob.json"],
            &["oracle", "inst.json"],
        ];
        for args in commands {
            let (out, ok) = run_cli(&dir, threads, args);
            if !ok {
                return outcome(false, format!("command failed: {args:?}"));
            }
            stdout.extend(out);
        }
        dirs.push((dir, stdout));
    }
    let mut diffs = Vec::new();
    if dirs[0].1 != dirs[1].1 {
        diffs.push("stdout".to_string());
    }
    for file in ["inst.json", "plan.json", "sim.csv", "cmp.json", "cmp.csv", "eps.csv", "rob.json"] {
        if fs::read(dirs[0].0.join(file)).unwrap() != fs::read(dirs[1].0.join(file)).unwrap() {
            diffs.push(file.to_string());
        }
    }
    outcome(diffs.is_empty(), format!("6 commands at 1 and 3 threads, differing outputs: {diffs:?}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("E(OPT) >= Z_flow", criterion_1, Duration::from_secs(120)),
        ("z_hat minimal and <= ceil(Z_flow)", criterion_2, Duration::from_secs(60)),
        ("oracle chain", criterion_3, Duration::from_secs(300)),
        ("coupon-collector cross-checks", criterion_4, Duration::from_secs(10)),
        ("Wald identity", criterion_5, Duration::from_secs(300)),
        ("termination class property", criterion_6, Duration::from_secs(60)),
        ("degree sweep ordering", criterion_7, Duration::from_secs(900)),
        ("exposure insensitivity", criterion_8, Duration::from_secs(600)),
        ("robustness bound", criterion_9, Duration::from_secs(300)),
        ("representativeness", criterion_10, Duration::from_secs(60)),
        ("determinism", criterion_11, Duration::from_secs(300)),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let number = k + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let within = elapsed <= *budget;
        let pass = result.pass && within;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {number:>2} {}: {name} [{:.1}s of {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

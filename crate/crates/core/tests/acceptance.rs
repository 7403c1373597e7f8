//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use harvest_rl::cli::{cmd_experiment, ExperimentKind, RunConfig};
use harvest_rl::energy::{dark_lifetime, HardwareConfig, NodeEnergyState};
use harvest_rl::envsim::{run_day, Action, ObservedState, SLOTS_PER_DAY};
use harvest_rl::experiments::{
    build_fleet, cluster_fleet, day_by_day_report, dynamic_report, run_shared_policy, run_transfer, Arm,
    DynamicOptions, ExperimentReport, FleetSpec, LearningSetup,
};
use harvest_rl::qlearn::{
    decay_epsilon, q_update, q_learn_toy, sup_norm_distance, toy_harvest, value_iteration_oracle,
    Hyperparameters, QTable,
};
use harvest_rl::rng::seeded_rng;
use harvest_rl::traces::{
    default_archetypes, generate_suite, ArchetypeKind, Calendar, LightTrace, SlotSeries, DEFAULT_START,
};

const SUITE_DAYS: usize = 90;
const BASELINE_TRAININGS: usize = SUITE_DAYS - 1;
const SUITE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const FLEET_SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn suite(seed: u64) -> Vec<SlotSeries> {
    let cal = Calendar::default();
    generate_suite(&default_archetypes(), SUITE_DAYS, seed, DEFAULT_START, &cal)
        .expect("suite generates")
        .iter()
        .map(|t| SlotSeries::from_trace(t, 900, cal).expect("whole days"))
        .collect()
}

fn kind_of(node_id: &str) -> ArchetypeKind {
    node_id.parse().expect("suite node ids are archetype names")
}

fn negative_days(report: &ExperimentReport, node_id: &str, arm: Arm, from_day: usize) -> Vec<usize> {
    report
        .per_day
        .iter()
        .filter(|d| d.node_id == node_id && d.arm == arm && d.day >= from_day && d.reward < 0.0)
        .map(|d| d.day)
        .collect()
}

fn q_update_examples() -> Verdict {
    let hp = Hyperparameters::default();
    let s = ObservedState::new(4, 6, false).unwrap();
    let next = ObservedState::new(5, 6, false).unwrap();
    let a = Action::ALL[2];
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12;

    let mut t = QTable::new();
    t.set(&s, a, 0.5);
    t.set(&next, Action::ALL[0], 1.0);
    q_update(&mut t, &s, a, 3.0, &next, &hp);
    let first = t.get(&s, a);

    let mut t = QTable::new();
    q_update(&mut t, &s, a, 2.0, &next, &hp);
    let second = t.get(&s, a);

    let mut t = QTable::new();
    t.set(&s, a, 7.25);
    q_update(&mut t, &s, a, -300.0, &next, &hp);
    let third = t.get(&s, a);
    let expect_third = 7.25 + 0.1 * (-300.0 - 7.25);

    verdict(
        close(first, 0.849) && close(second, 0.2) && close(third, expect_third),
        format!("{first} / {second} / {third} (want 0.849 / 0.2 / {expect_third})"),
    )
}

fn oracle_equivalence() -> Verdict {
    let toy = toy_harvest();
    let hp = Hyperparameters::default();
    let oracle = value_iteration_oracle(&toy.mdp, hp.gamma).expect("toy MDP is valid");
    let gaps: Vec<f64> = [1, 2, 3]
        .iter()
        .map(|&seed| sup_norm_distance(&q_learn_toy(&toy, &hp, 1_000_000, 96, seed), &oracle))
        .collect();
    verdict(
        gaps.iter().all(|&g| g < 1e-2),
        format!(
            "sup-norm gaps {} after 1e6 steps",
            gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn reward_design() -> Verdict {
    let hw = HardwareConfig::default();
    let mut rng = seeded_rng(0x7265_7761_7264);
    let days = 1000;
    // Each day gets its own light profile: dark, dim, bright or mixed.
    let lux: Vec<f64> = (0..days)
        .flat_map(|_| {
            let ceiling = [0.0, 50.0, 400.0, 2500.0][rng.random_range(0..4)];
            (0..SLOTS_PER_DAY).map(|_| ceiling * rng.random::<f64>()).collect::<Vec<_>>()
        })
        .collect();
    let trace = LightTrace::new("random", DEFAULT_START, 900, lux).expect("valid trace");
    let series = SlotSeries::from_trace(&trace, 900, Calendar::default()).expect("whole days");

    let (mut depletion_days, mut violations) = (0, 0);
    for day in 0..days {
        let v = rng.random_range(hw.v_min..=hw.v_max);
        let node = NodeEnergyState {
            voltage: v,
            alive: v >= hw.v_restart || rng.random::<bool>(),
            performance_state: 0,
        };
        let mut policy_rng = seeded_rng(day as u64);
        let mut policy = |_: &ObservedState| Action::ALL[policy_rng.random_range(0..4)];
        let out = run_day(node, &mut policy, &series, day, &hw).expect("day in range");
        let ok = if out.depletions > 0 {
            depletion_days += 1;
            out.reward < 0.0
        } else {
            (0.0..=288.0).contains(&out.reward)
        };
        violations += usize::from(!ok);
    }
    verdict(
        violations == 0 && depletion_days > 0,
        format!("{days} days, {depletion_days} with depletion, {violations} violations"),
    )
}

fn dark_lifetime_calibration() -> Verdict {
    let days = dark_lifetime(600.0, 1.0, &HardwareConfig::default()) / 86_400.0;
    verdict((6.3..=7.7).contains(&days), format!("{days:.3} days"))
}

fn epsilon_schedule() -> Verdict {
    let hp = Hyperparameters::default();
    let mut eps = 1.0;
    let mut steps = 0;
    while eps != hp.epsilon_min && steps < 10_000 {
        eps = decay_epsilon(eps, &hp);
        steps += 1;
    }
    let before = (0..2249).fold(1.0, |e, _| decay_epsilon(e, &hp));
    verdict(
        steps == 2250 && eps == 0.1 && before > 0.1,
        format!("epsilon {eps} after {steps} decays (after 2249: {before})"),
    )
}

fn baseline_shape(reports: &[(u64, ExperimentReport)]) -> Verdict {
    let mut problems = Vec::new();
    for (seed, r) in reports {
        for n in &r.nodes {
            let kind = kind_of(&n.node_id);
            if n.trainings_performed != BASELINE_TRAININGS {
                problems.push(format!("seed {seed} {}: {} trainings", n.node_id, n.trainings_performed));
            }
            if kind == ArchetypeKind::StairAccess && n.negative_reward_days != 0 {
                problems.push(format!("seed {seed} {}: {} negative days", n.node_id, n.negative_reward_days));
            }
            if kind.is_occupancy_driven() && !negative_days(r, &n.node_id, n.arm, 0).iter().any(|&d| d < 7) {
                problems.push(format!("seed {seed} {}: no negative day in week 1", n.node_id));
            }
        }
    }
    verdict(problems.is_empty(), summary_or(problems, "89 trainings everywhere; deaths as expected"))
}

fn dynamic_interval(reports: &[(u64, ExperimentReport)]) -> Verdict {
    let mut problems = Vec::new();
    for (seed, r) in reports {
        for n in &r.nodes {
            if 2 * n.trainings_performed > BASELINE_TRAININGS {
                problems.push(format!("seed {seed} {}: {} trainings", n.node_id, n.trainings_performed));
            }
            let neg = negative_days(r, &n.node_id, n.arm, 1);
            if !neg.is_empty() {
                problems.push(format!("seed {seed} {}: {} negative days", n.node_id, neg.len()));
            }
        }
    }
    verdict(problems.is_empty(), summary_or(problems, "all nodes within half the baseline, no deaths"))
}

fn transfer_learning(reports: &[(u64, ExperimentReport)]) -> Verdict {
    let mut problems = Vec::new();
    for (seed, r) in reports {
        let mut cold_dying = 0;
        for n in &r.nodes {
            match n.arm {
                Arm::TransferWarm if n.negative_reward_days > 0 => {
                    problems.push(format!("seed {seed} warm {}: {} negative days", n.node_id, n.negative_reward_days))
                }
                Arm::TransferCold if n.negative_reward_days > 0 => cold_dying += 1,
                _ => {}
            }
        }
        if cold_dying < 3 {
            problems.push(format!("seed {seed}: only {cold_dying} cold archetypes die"));
        }
    }
    verdict(problems.is_empty(), summary_or(problems, "warm never dies; cold dies on >= 3 archetypes"))
}

fn cluster_vs_global() -> Verdict {
    let cal = Calendar::default();
    let setup = LearningSetup::default();
    let spec = FleetSpec::default();
    let mut problems = Vec::new();
    for seed in FLEET_SEEDS {
        let bases = generate_suite(&default_archetypes(), SUITE_DAYS, seed, DEFAULT_START, &cal).unwrap();
        let fleet = build_fleet(&bases, spec.per_base_count, seed).unwrap();
        if fleet.len() != 1000 {
            problems.push(format!("seed {seed}: fleet of {}", fleet.len()));
        }
        let assignment = cluster_fleet(&fleet, spec.cluster_count).unwrap();
        let r = run_shared_policy(&fleet, &assignment, &setup, cal, seed).unwrap().output.report;
        for b in &bases {
            let c = r.node(b.node_id(), Arm::Cluster).unwrap().total_reward;
            let g = r.node(b.node_id(), Arm::Global).unwrap().total_reward;
            if c < g {
                problems.push(format!("seed {seed} {}: cluster {c} < global {g}", b.node_id()));
            }
        }
        let single = cluster_fleet(&fleet, 1).unwrap();
        let r = run_shared_policy(&fleet, &single, &setup, cal, seed).unwrap().output.report;
        for b in &bases {
            let c = r.node(b.node_id(), Arm::Cluster).unwrap().total_reward;
            let g = r.node(b.node_id(), Arm::Global).unwrap().total_reward;
            if c != g {
                problems.push(format!("seed {seed} {}: k=1 cluster {c} != global {g}", b.node_id()));
            }
        }
    }
    verdict(problems.is_empty(), summary_or(problems, "cluster >= global on every base; k=1 identical"))
}

fn reproducibility() -> Verdict {
    let dir = tempfile::tempdir().expect("temp dir");
    let run = |name: &str| {
        let mut cfg = RunConfig {
            seed: Some(11),
            experiment: ExperimentKind::All,
            days: Some(10),
            output_dir: dir.path().join(name),
            ..RunConfig::default()
        };
        cfg.fleet.per_base_count = 20;
        cmd_experiment(&cfg).expect("experiment runs");
        let mut files: Vec<(String, Vec<u8>)> = walk(&cfg.output_dir)
            .into_iter()
            .map(|p| {
                let rel = p.strip_prefix(&cfg.output_dir).unwrap().display().to_string();
                (rel, std::fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let a = run("a");
    let b = run("b");
    // The resolved config records the output directory, which differs by design.
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y && x.0 != "config.toml")
        .map(|(x, _)| x.0.as_str())
        .collect();
    let tables = a.iter().filter(|(p, _)| p.contains("qtables")).count();
    verdict(
        a.len() == b.len() && differing.is_empty() && tables > 0,
        format!("{} files ({tables} Q-tables), {} differ", a.len(), differing.len()),
    )
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn summary_or(problems: Vec<String>, ok: &str) -> String {
    if problems.is_empty() {
        return ok.to_string();
    }
    let shown: Vec<&str> = problems.iter().take(6).map(String::as_str).collect();
    let more = problems.len().saturating_sub(shown.len());
    let tail = if more > 0 { format!("; +{more} more") } else { String::new() };
    format!("{} problems: {}{tail}", problems.len(), shown.join("; "))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:>2} {name}: {} [{:.1}s]", v.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!v.pass);
    };

    report(1, "q-update arithmetic", &q_update_examples);
    report(2, "oracle equivalence", &oracle_equivalence);
    report(3, "reward design", &reward_design);
    report(4, "dark lifetime", &dark_lifetime_calibration);
    report(5, "epsilon schedule", &epsilon_schedule);

    let setup = LearningSetup::default();
    let suites: Vec<(u64, Vec<SlotSeries>)> = SUITE_SEEDS.iter().map(|&s| (s, suite(s))).collect();
    let collect = |f: &dyn Fn(&[SlotSeries], u64) -> ExperimentReport| -> Vec<(u64, ExperimentReport)> {
        suites.iter().map(|(seed, s)| (*seed, f(s, *seed))).collect()
    };
    report(6, "baseline shape", &|| {
        baseline_shape(&collect(&|s, seed| day_by_day_report(s, &setup, seed).unwrap().report))
    });
    report(7, "dynamic interval", &|| {
        dynamic_interval(&collect(&|s, seed| {
            dynamic_report(s, &setup, &DynamicOptions::default(), seed).unwrap().report
        }))
    });
    report(8, "transfer learning", &|| {
        transfer_learning(&collect(&|s, seed| run_transfer(s, &setup, seed, None).unwrap().output.report))
    });
    report(9, "cluster vs global", &cluster_vs_global);
    report(10, "reproducibility", &reproducibility);

    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

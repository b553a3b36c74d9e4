//! Acceptance suite: one test per acceptance criterion, each printing a
//! single `criterion N (...): PASS|FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`).

mod common;

use std::process::Command;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use sgf_core::env::{Anchor, CanvasConfig, Env};
use sgf_core::model::{feature_len, Mlp, Role};
use sgf_core::netlist::{parse_canonical, serialize_canonical};
use sgf_core::pipeline::{
    best_of_n, bound_check, build_dataset, critic_error_study, dataset_stats, gen_random,
    make_prompt, rollout, train, train_on_dataset, Policy, TimestepError, TrainConfig,
};
use sgf_core::sldas::{knn, normalize, select_action, ContinuousAction};

fn report(n: usize, name: &str, ok: bool) {
    println!("criterion {n} ({name}): {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed");
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

// ---------------------------------------------------------------------------
// 1. Incremental wirelength equals the from-scratch recomputation, exactly.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_wirelength_oracle_equivalence() {
    let envs = [
        common::toy3_env(),
        Env::new(common::gen10(), CanvasConfig::new(16, 16, 2).unwrap()).unwrap(),
    ];
    let mut ok = true;
    for env in &envs {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
            let mut state = env.reset();
            let mut sum_dwl2 = 0i64;
            while !state.done() {
                let legal = env.legal_actions(&state);
                assert!(!legal.is_empty(), "dead end in oracle walk");
                let a = legal[rng.random_range(0..legal.len())];
                let (next, _, _, dwl2) = env.step_full(&state, a).unwrap();
                sum_dwl2 += dwl2;
                state = next;
            }
            let scratch = env.total_wirelength2(&state);
            ok &= sum_dwl2 == scratch && state.wirelength2() == scratch;
        }
    }
    report(1, "wirelength oracle equivalence", ok);
}

// ---------------------------------------------------------------------------
// 2. k-NN output identical to an exhaustive scan, set and order.
// ---------------------------------------------------------------------------

fn exhaustive_knn(
    alpha: ContinuousAction,
    legal: &[Anchor],
    k: usize,
    cfg: &CanvasConfig,
) -> Vec<Anchor> {
    // Independent oracle: repeated minimum selection with the documented
    // tie rule (ascending x, y, z).
    let mut remaining: Vec<Anchor> = legal.to_vec();
    let mut out = Vec::new();
    while out.len() < k && !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let di = normalize(remaining[i], cfg).dist(&alpha);
            let db = normalize(remaining[best], cfg).dist(&alpha);
            if di < db || (di == db && remaining[i] < remaining[best]) {
                best = i;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

#[test]
fn criterion_2_knn_exactness() {
    let env = Env::new(common::gen10(), CanvasConfig::new(16, 16, 2).unwrap()).unwrap();
    let cfg = env.cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ok = true;
    let mut draws = 0;
    while draws < 1000 {
        // Random partial state.
        let mut state = env.reset();
        let depth = rng.random_range(0..state.n_modules());
        for _ in 0..depth {
            let legal = env.legal_actions(&state);
            if legal.is_empty() {
                break;
            }
            let a = legal[rng.random_range(0..legal.len())];
            state = env.step(&state, a).unwrap().0;
        }
        let legal = env.legal_actions(&state);
        if legal.is_empty() {
            continue;
        }
        for &k in &[1usize, 5, 10] {
            let alpha = ContinuousAction::new(rng.random(), rng.random(), rng.random());
            let got: Vec<Anchor> = knn(alpha, &legal, k, &cfg).unwrap().anchors().collect();
            let want = exhaustive_knn(alpha, &legal, k, &cfg);
            ok &= got == want;
            draws += 1;
        }
    }
    report(2, "k-NN exactness", ok);
}

// ---------------------------------------------------------------------------
// 3. Candidate selection equals the brute-force L1 argmin with ties to the
//    smallest index.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_selection_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        // Coarse values make exact L1 ties common, exercising the tie rule.
        let mut draw = || (rng.random_range(0..8) as f64) * 0.5;
        let preds: Vec<[f64; 3]> = (0..n).map(|_| [draw(), draw(), draw()]).collect();
        let target = [draw(), draw(), draw()];
        let got = select_action(&preds, target);
        let mut want = 0;
        let l1 = |p: &[f64; 3]| (0..3).map(|i| (p[i] - target[i]).abs()).sum::<f64>();
        for i in 1..n {
            if l1(&preds[i]) < l1(&preds[want]) {
                want = i;
            }
        }
        ok &= got == want;
    }
    report(3, "selection L1 argmin", ok);
}

// ---------------------------------------------------------------------------
// 4. Analytic gradients match central finite differences.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut max_rel = 0.0f64;
    for trial in 0..20u64 {
        let role = if trial % 2 == 0 { Role::Actor } else { Role::Critic };
        let dims = [
            rng.random_range(2..=10),
            rng.random_range(3..=8),
            rng.random_range(3..=8),
            3,
        ];
        let mut net = Mlp::with_dims(role, dims, splitmix(400 + trial));
        let rows = rng.random_range(1..=5);
        let x = Array2::from_shape_fn((rows, dims[0]), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((rows, 3), |_| rng.random_range(-0.5..1.5));
        let grads = net.gradients(x.view(), y.view());
        let analytic = Mlp::grad_flat(&grads);
        let eps = 1e-5;
        for p in 0..net.num_params() {
            let orig = net.get_param(p);
            net.set_param(p, orig + eps);
            let plus = net.eval_loss(x.view(), y.view());
            net.set_param(p, orig - eps);
            let minus = net.eval_loss(x.view(), y.view());
            net.set_param(p, orig);
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (analytic[p] - fd).abs() / analytic[p].abs().max(fd.abs()).max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    report(4, "gradient check", max_rel <= 1e-4);
}

// ---------------------------------------------------------------------------
// 5 & 6. Critic training on purely random trajectories: held-out loss
// improvement and the early-vs-late timestep error trend. One training
// fleet is shared between the two criteria.
// ---------------------------------------------------------------------------

struct CriticRun {
    first_epoch_l1: f64,
    final_l1: f64,
    curve: Vec<TimestepError>,
    held_episodes: usize,
}

fn critic_fleet() -> &'static Vec<CriticRun> {
    static FLEET: OnceLock<Vec<CriticRun>> = OnceLock::new();
    FLEET.get_or_init(|| {
        let env = common::toy3_env();
        (0..10u64)
            .map(|seed| {
                let trajs = gen_random(&env, 200, splitmix(500 + seed)).unwrap();
                let (train_set, held_set) = trajs.split_at(160);
                let stats = dataset_stats(train_set).unwrap();
                let data = build_dataset(Role::Critic, &env, train_set, &stats).unwrap();
                let held = build_dataset(Role::Critic, &env, held_set, &stats).unwrap();
                let mut net =
                    Mlp::new(Role::Critic, data.x.ncols(), splitmix(5500 + seed));
                let mut first_epoch_l1 = 0.0;
                for epoch in 0..200u64 {
                    let cfg = TrainConfig {
                        seed: splitmix(seed * 1000 + epoch),
                        epochs: 1,
                        ..TrainConfig::for_role(Role::Critic, 0)
                    };
                    train_on_dataset(&mut net, &data, &cfg);
                    if epoch == 0 {
                        first_epoch_l1 = net.eval_loss(held.x.view(), held.y.view());
                    }
                }
                let final_l1 = net.eval_loss(held.x.view(), held.y.view());
                let curve = critic_error_study(&net, &env, held_set, &stats).unwrap();
                CriticRun { first_epoch_l1, final_l1, curve, held_episodes: held_set.len() }
            })
            .collect()
    })
}

#[test]
fn criterion_5_critic_learns_from_random_data() {
    let wins = critic_fleet()
        .iter()
        .filter(|run| run.final_l1 <= 0.8 * run.first_epoch_l1)
        .count();
    println!("  held-out L1 improved on {wins}/10 seeds");
    report(5, "critic learns from random data", wins >= 9);
}

#[test]
fn criterion_6_late_timestep_error_below_early() {
    let fleet = critic_fleet();
    let wins = fleet
        .iter()
        .filter(|run| {
            assert!(run.held_episodes >= 30);
            let total = |e: &TimestepError| e.mean.iter().sum::<f64>();
            let last = run.curve.last().unwrap();
            total(last) < total(&run.curve[0])
        })
        .count();
    println!("  MSE(t=T-1) < MSE(t=0) on {wins}/10 seeds");
    report(6, "late-timestep critic error below early", wins >= 8);
}

// ---------------------------------------------------------------------------
// 7. Trained placement beats the uniform-random baseline by >= 10%.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_placement_beats_random() {
    let env = Env::new(common::gen10(), CanvasConfig::new(16, 16, 2).unwrap()).unwrap();

    let baseline_trajs = gen_random(&env, 30, 0xBA5E).unwrap();
    let baseline: f64 = baseline_trajs.iter().map(|t| t.totals.wirelength).sum::<f64>()
        / baseline_trajs.len() as f64;

    let mut wins = 0;
    for seed in 0..10u64 {
        let trajs = gen_random(&env, 200, splitmix(700 + seed)).unwrap();
        let stats = dataset_stats(&trajs).unwrap();
        let epochs = 40;
        let mut acfg = TrainConfig::for_role(Role::Actor, splitmix(7100 + seed));
        acfg.epochs = epochs;
        let (actor, _) = train(Role::Actor, &env, &trajs, &stats, &acfg).unwrap();
        let mut ccfg = TrainConfig::for_role(Role::Critic, splitmix(7200 + seed));
        ccfg.epochs = epochs;
        let (critic, _) = train(Role::Critic, &env, &trajs, &stats, &ccfg).unwrap();

        let policy =
            Policy { actor: &actor, critic: &critic, stats, k: 5, weights: [1.0; 3] };
        let prompt = make_prompt(&stats);
        let rollouts: Vec<_> = (0..3u64)
            .map(|i| rollout(&policy, &env, prompt, splitmix(7300 + seed * 31 + i)).unwrap().0)
            .collect();
        let best = best_of_n(&rollouts).unwrap();
        let wl = rollouts[best].totals.wirelength;
        println!("  seed {seed}: trained {wl:.1} vs random mean {baseline:.1}");
        if wl <= 0.9 * baseline {
            wins += 1;
        }
    }
    println!("  beat 0.9x baseline on {wins}/10 seeds");
    report(7, "trained placement beats random", wins >= 8);
}

// ---------------------------------------------------------------------------
// 8. Empirical value bound: holds-fraction and the exact triangle
//    inequality across 20 seeded rollouts on the toy instance.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_value_bound_holds() {
    let env = common::toy3_env();
    let trajs = gen_random(&env, 100, 0x80).unwrap();
    let stats = dataset_stats(&trajs).unwrap();
    let mut acfg = TrainConfig::for_role(Role::Actor, 0x81);
    acfg.epochs = 30;
    let (actor, _) = train(Role::Actor, &env, &trajs, &stats, &acfg).unwrap();
    let mut ccfg = TrainConfig::for_role(Role::Critic, 0x82);
    ccfg.epochs = 30;
    let (critic, _) = train(Role::Critic, &env, &trajs, &stats, &ccfg).unwrap();

    let policy = Policy { actor: &actor, critic: &critic, stats, k: 5, weights: [1.0; 3] };
    let seeds: Vec<u64> = (0..20).collect();
    let report_ = bound_check(&policy, &env, make_prompt(&stats), &seeds, 0).unwrap();
    println!(
        "  steps: {}, holds: {:.3}, triangle: {:.3}",
        report_.steps.len(),
        report_.holds_fraction(),
        report_.triangle_fraction()
    );
    report(
        8,
        "empirical value bound",
        report_.holds_fraction() >= 0.95 && report_.triangle_fraction() == 1.0,
    );
}

// ---------------------------------------------------------------------------
// 9. Byte-identical reruns of every command.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_command_determinism() {
    let bin = env!("CARGO_BIN_EXE_sgf");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    std::fs::write(p("toy3.json"), common::TOY3_JSON).unwrap();
    std::fs::write(
        p("blocks.txt"),
        "UCLA blocks 1.0\nNumHardRectilinearBlocks : 2\nNumTerminals : 0\n\nbk1 hardrectilinear 4 (0, 0) (0, 8) (8, 8) (8, 0)\nbk2 hardrectilinear 4 (0, 0) (0, 4) (4, 4) (4, 0)\n",
    )
    .unwrap();
    std::fs::write(
        p("nets.txt"),
        "NumNets : 1\nNumPins : 2\nNetDegree : 2\nbk1\nbk2\n",
    )
    .unwrap();

    let run = |args: &[String]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "command {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let s = |v: &str| v.to_string();

    // Each command runs twice; stdout and every produced file must match.
    let commands: Vec<(Vec<String>, Vec<String>)> = vec![
        (
            vec![s("gen"), s("--netlist"), p("toy3.json"), s("--count"), s("30"), s("--seed"), s("7"), s("--out"), p("t.jsonl"), s("--canvas"), s("6x6x2")],
            vec![p("t.jsonl")],
        ),
        (
            vec![s("stats"), s("--traj"), p("t.jsonl"), s("--out"), p("stats.json")],
            vec![p("stats.json")],
        ),
        (
            vec![s("train"), s("--role"), s("critic"), s("--netlist"), p("toy3.json"), s("--traj"), p("t.jsonl"), s("--epochs"), s("2"), s("--seed"), s("1"), s("--out"), p("c.ckpt"), s("--canvas"), s("6x6x2")],
            vec![p("c.ckpt")],
        ),
        (
            vec![s("train"), s("--role"), s("actor"), s("--netlist"), p("toy3.json"), s("--traj"), p("t.jsonl"), s("--epochs"), s("2"), s("--seed"), s("1"), s("--out"), p("a.ckpt"), s("--canvas"), s("6x6x2")],
            vec![p("a.ckpt")],
        ),
        (
            vec![s("place"), s("--netlist"), p("toy3.json"), s("--actor"), p("a.ckpt"), s("--critic"), p("c.ckpt"), s("--stats"), p("stats.json"), s("--samples"), s("3"), s("--seed"), s("5"), s("--out"), p("place.json"), s("--svg"), p("place.svg"), s("--canvas"), s("6x6x2")],
            vec![p("place.json"), p("place.svg")],
        ),
        (
            vec![s("eval"), s("--netlist"), p("toy3.json"), s("--critic"), p("c.ckpt"), s("--traj"), p("t.jsonl"), s("--stats"), p("stats.json"), s("--out"), p("eval.csv"), s("--canvas"), s("6x6x2")],
            vec![p("eval.csv")],
        ),
        (
            vec![s("bound-check"), s("--netlist"), p("toy3.json"), s("--actor"), p("a.ckpt"), s("--critic"), p("c.ckpt"), s("--stats"), p("stats.json"), s("--rollouts"), s("3"), s("--seed"), s("2"), s("--out"), p("bound.csv"), s("--canvas"), s("6x6x2")],
            vec![p("bound.csv")],
        ),
        (
            vec![s("render"), s("--netlist"), p("toy3.json"), s("--placement"), p("place.json"), s("--out"), p("render.svg")],
            vec![p("render.svg")],
        ),
        (
            vec![s("convert"), s("--blocks"), p("blocks.txt"), s("--nets"), p("nets.txt"), s("--out"), p("conv.json")],
            vec![p("conv.json")],
        ),
    ];

    let mut ok = true;
    for (args, files) in &commands {
        let stdout1 = run(args);
        let files1: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        let stdout2 = run(args);
        let files2: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        let same = stdout1 == stdout2 && files1 == files2;
        if !same {
            println!("  nondeterministic command: {args:?}");
        }
        ok &= same;
    }
    report(9, "command determinism", ok);
}

// ---------------------------------------------------------------------------
// 10. Netlist and checkpoint round-trips are identities.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_round_trips() {
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..100u64 {
        let n = common::random_netlist(
            rng.random_range(2..=12),
            rng.random_range(1..=20),
            rng.random_range(1..=6),
            splitmix(1000 + i),
        );
        let text = serialize_canonical(&n);
        let back = parse_canonical(&text).unwrap();
        ok &= back == n && serialize_canonical(&back) == text;
    }
    for i in 0..20u64 {
        let role = if i % 2 == 0 { Role::Actor } else { Role::Critic };
        let dims = [
            rng.random_range(2..=feature_len(1)),
            rng.random_range(2..=12),
            rng.random_range(2..=12),
            3,
        ];
        let mut net = Mlp::with_dims(role, dims, splitmix(2000 + i));
        // A few optimizer steps give the moment estimates nonzero values.
        let x = Array2::from_shape_fn((4, dims[0]), |_| rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((4, 3), |_| rng.random_range(0.0..1.0));
        for _ in 0..3 {
            net.train_batch(x.view(), y.view(), 1e-3, 1e-4);
        }
        let text = net.to_checkpoint();
        let back = Mlp::from_checkpoint(&text).unwrap();
        ok &= back == net && back.to_checkpoint() == text;
    }
    report(10, "round-trip identities", ok);
}

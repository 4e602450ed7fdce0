//! Fitting a cell-constant policy by the cross-entropy method.
//!
//! Certification consumes a *given* policy, but a usable one has to come
//! from somewhere. The bundled fitter takes a policy template — here three
//! velocity bands over the hill-car state box, all starting at action 0 —
//! and optimizes only the free parameters (one action per cell, snapped to
//! the discrete action set) against mean cumulative reward over noisy
//! episodes.
//!
//! The fitted table is evaluated against the do-nothing template, written
//! to JSON, and read back, demonstrating the policy artifact round-trip
//! that the certification pipeline consumes via `policy_path`. Both ends of
//! the track are terminal, so the fitter is free to discover that the exit
//! *behind* the car is closer than the hill crest ahead of it.
//!
//! Run with `cargo run --example fit_policy`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rewcert::env::{
    fit_policy, load_policy, make_builtin_env, sample_initial, save_policy, CemConfig,
    GridCell, PolicySpec,
};
use rewcert::noise::{NoiseLaw, NoiseSpec};
use rewcert::sim::estimate_stats;

fn main() -> rewcert::Result<()> {
    let env = make_builtin_env("hillcar")?;
    let noise = NoiseSpec::iid(NoiseLaw::Uniform { r: 0.1 }, env.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // Template: three velocity bands, every action initially 0. The cells
    // must tile the state box; only the actions are free.
    let template = PolicySpec::Grid {
        dims: 2,
        cells: vec![
            GridCell { lo: vec![-1.2, -0.15], hi: vec![0.6, -0.05], action: 0.0 },
            GridCell { lo: vec![-1.2, -0.05], hi: vec![0.6, 0.05], action: 0.0 },
            GridCell { lo: vec![-1.2, 0.05], hi: vec![0.6, 0.15], action: 0.0 },
        ],
    };
    template.validate(&env)?;

    let cem = CemConfig {
        iterations: 8,
        population: 16,
        elite: 4,
        episodes_per_candidate: 4,
        max_steps: 300,
        init_std: 1.0,
    };
    let fitted = fit_policy(&env, &noise, &template, &cem, &mut rng)?;
    if let PolicySpec::Grid { cells, .. } = &fitted {
        println!("fitted actions per velocity band:");
        for cell in cells {
            println!(
                "  v in [{:+.2}, {:+.2}]: action {:+.0}",
                cell.lo[1], cell.hi[1], cell.action
            );
        }
    }

    // Head-to-head over the same initial states. Each step pays -1, so the
    // mean return is minus the mean episode length; the do-nothing template
    // mostly runs into the step cap.
    let states: Vec<_> = (0..5).map(|_| sample_initial(&env, &mut rng)).collect();
    let before = estimate_stats(&env, &template, &noise, &states, 100, 300, &mut rng)?;
    let after = estimate_stats(&env, &fitted, &noise, &states, 100, 300, &mut rng)?;
    let mean = |s: &rewcert::sim::SimStats| {
        s.per_state.iter().map(|r| r.mean_reward).sum::<f64>() / s.per_state.len() as f64
    };
    println!(
        "\nmean return over 5 states x 100 episodes: template {:+.1} \
         ({} truncated), fitted {:+.1} ({} truncated)",
        mean(&before),
        before.truncated_total(),
        mean(&after),
        after.truncated_total(),
    );
    assert!(
        mean(&after) > mean(&before) + 50.0,
        "the fitter should beat the do-nothing template decisively"
    );

    // Artifact round-trip: this JSON is exactly what a run configuration's
    // `policy_path` consumes.
    let path = std::env::temp_dir().join(format!("fitted-policy-{}.json", std::process::id()));
    save_policy(&path, &fitted)?;
    let reloaded = load_policy(&path, &env)?;
    assert_eq!(
        serde_json::to_value(&fitted).expect("serializes"),
        serde_json::to_value(&reloaded).expect("serializes"),
        "the policy artifact must round-trip exactly"
    );
    println!("\nfitted policy written to {} and reloaded: ok", path.display());
    Ok(())
}

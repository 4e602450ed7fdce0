//! Closed-loop episodes under observation noise.
//!
//! The step semantics: the controller never sees the true state `s`, only a
//! noise-shifted observation clamped into the state box,
//!
//! ```text
//! observed = clamp(s + delta),   a = pi(observed),   s' = clamp(f(s, a)),
//! ```
//!
//! and the episode stops when the *true* state enters the terminal region.
//! Noise therefore enters the loop only through the policy's view of the
//! state. This example makes that visible: the bundled constant-push policy
//! ignores its observation entirely, so its returns have zero variance,
//! while a bang-bang policy switching at v = 0 has its decisions flipped by
//! noise near the switching surface and its returns spread out.
//!
//! Run with `cargo run --example perturbed_rollout`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rewcert::env::{load_policy, make_builtin_env, sample_initial, GridCell, PolicySpec};
use rewcert::noise::{NoiseLaw, NoiseSpec};
use rewcert::sim::{estimate_stats, rollout};
use rewcert::space::StateVec;
use rewcert::Result;

fn main() -> Result<()> {
    let env = make_builtin_env("hillcar")?;
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let push = load_policy(&manifest.join("assets/hillcar_policy.json"), &env)?;
    // Brake while the car rolls backward, push once it rolls forward. The
    // switching surface v = 0 sits well inside the noise radius 0.1, so the
    // observed velocity routinely has the wrong sign.
    let bang_bang = PolicySpec::Grid {
        dims: 2,
        cells: vec![
            GridCell { lo: vec![-1.2, -0.15], hi: vec![0.6, 0.0], action: -1.0 },
            GridCell { lo: vec![-1.2, 0.0], hi: vec![0.6, 0.15], action: 1.0 },
        ],
    };
    bang_bang.validate(&env)?;
    let noise = NoiseSpec::iid(NoiseLaw::Uniform { r: 0.1 }, env.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    // One bang-bang episode, traced.
    let s0 = env.initial_box.center();
    let ep = rollout(&env, &bang_bang, &noise, &s0, 400, &mut rng);
    println!(
        "one bang-bang episode from ({:+.3}, {:+.3}):",
        s0.coords()[0],
        s0.coords()[1]
    );
    let show = 5usize;
    for (t, s) in ep.states.iter().enumerate() {
        if t >= show && t + show < ep.states.len() {
            if t == show {
                println!("    ...");
            }
            continue;
        }
        println!(
            "  t = {t:>3}: x = {:+.4}, v = {:+.4}, r = {:+.1}",
            s.coords()[0],
            s.coords()[1],
            ep.rewards[t]
        );
    }
    println!(
        "  {} steps, cumulative reward {:+.1}, truncated: {}, clamped: {}",
        ep.steps, ep.cumulative, ep.truncated, ep.clamped
    );
    assert!(
        ep.truncated || env.is_terminal(ep.states.last().expect("nonempty")),
        "a finished episode must end in the terminal region"
    );

    // The same initial states under both policies.
    let states: Vec<StateVec> = (0..5).map(|_| sample_initial(&env, &mut rng)).collect();
    for (label, policy) in [("constant push", &push), ("bang-bang", &bang_bang)] {
        let stats = estimate_stats(&env, policy, &noise, &states, 200, 1000, &mut rng)?;
        println!("\n{label}, 200 episodes per initial state:");
        for row in &stats.per_state {
            println!(
                "  s0 = ({:+.3}, {:+.3}): mean return {:+.2} +/- {:.2}, spread {:.2}, longest {} steps",
                row.s0.coords()[0],
                row.s0.coords()[1],
                row.mean_reward,
                row.se(),
                row.std_reward,
                row.max_steps_observed,
            );
        }
        println!(
            "  P(T > 50) = {:.3}, truncated episodes: {}",
            stats.termination_exceedance(50),
            stats.truncated_total(),
        );
    }
    println!(
        "\nthe constant policy ignores its observation, so its returns have zero \
         spread;\nthe bang-bang policy's noise-flipped decisions produce a genuine \
         return distribution."
    );
    Ok(())
}

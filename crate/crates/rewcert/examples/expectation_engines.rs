//! The two pre-expectation engines, cross-checked.
//!
//! Validating a certificate means bounding the pre-expectation
//!
//! ```text
//! E_delta[ h(f(s, pi(clamp(s + delta)))) ]
//! ```
//!
//! at every grid point. Cell-constant policies admit an *analytic* engine:
//! the noise support splits along policy-cell preimages, each piece gets its
//! exact probability mass, and the integrand is constant on each piece.
//! Network policies fall back to an *interval* engine that over-approximates
//! the integrand per noise cell from one side.
//!
//! This example evaluates both engines on random non-terminal hill-car
//! states under a bang-bang policy — observation noise near the switching
//! boundary genuinely mixes both actions — and checks that the analytic
//! value always lies inside the interval engine's [lower, upper] bracket and
//! within sampling error of a plain Monte-Carlo average.
//!
//! Run with `cargo run --example expectation_engines`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rewcert::env::{make_builtin_env, GridCell, PolicySpec};
use rewcert::learn::sample_successors;
use rewcert::net::{Activation, MlpNet};
use rewcert::noise::{partition_noise_support, NoiseLaw, NoiseSpec};
use rewcert::verify::{expectation_analytic, expectation_bound, Side};

const MC_SAMPLES: usize = 100_000;

fn main() -> rewcert::Result<()> {
    let env = make_builtin_env("hillcar")?;
    // Brake while rolling backward, push while rolling forward; the switch
    // at v = 0 sits well inside the observation-noise radius.
    let policy = PolicySpec::Grid {
        dims: 2,
        cells: vec![
            GridCell { lo: vec![-1.2, -0.15], hi: vec![0.6, 0.0], action: -1.0 },
            GridCell { lo: vec![-1.2, 0.0], hi: vec![0.6, 0.15], action: 1.0 },
        ],
    };
    policy.validate(&env)?;
    let noise = NoiseSpec::iid(NoiseLaw::Uniform { r: 0.1 }, 2)?;
    let cells = partition_noise_support(&noise, 10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = MlpNet::init(2, &[8], Activation::Relu, 1, Activation::Linear, &mut rng);

    println!("state (x, v)          analytic      interval bracket             MC mean +/- se");
    for _ in 0..8 {
        // Pre-expectations are only evaluated at non-terminal states: the
        // step harness absorbs at terminal states while both engines apply
        // the raw dynamics, so terminal states are outside their domain.
        let s = loop {
            let candidate = env.state_box.sample(&mut rng);
            if !env.is_terminal(&candidate) {
                break candidate;
            }
        };
        let exact = expectation_analytic(&net, &env, &policy, &noise, &s)?;
        let lo = expectation_bound(&net, &env, &policy, &noise, &s, &cells, Side::Lower)?;
        let hi = expectation_bound(&net, &env, &policy, &noise, &s, &cells, Side::Upper)?;

        let succ = sample_successors(&env, &policy, &noise, &s, MC_SAMPLES, &mut rng);
        let vals: Vec<f64> = succ.iter().map(|t| net.forward_scalar(t.coords())).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();

        println!(
            "({:+.3}, {:+.3})    {exact:+.6}    [{lo:+.6}, {hi:+.6}]    {mean:+.6} +/- {se:.6}",
            s.coords()[0],
            s.coords()[1],
        );
        // Tiny relative slack absorbs the different summation orders of the
        // two engines; everything else is asserted at face value.
        let ulp = 1e-12 * exact.abs().max(1.0);
        assert!(lo - ulp <= exact && exact <= hi + ulp, "analytic value escapes bracket");
        assert!(
            (exact - mean).abs() <= 5.0 * se + 1e-12,
            "analytic value {exact} is {} standard errors from the MC mean",
            (exact - mean).abs() / se
        );
    }
    println!("\nanalytic inside bracket and within 5 standard errors of Monte-Carlo: ok");
    Ok(())
}

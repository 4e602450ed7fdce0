//! Interval propagation and Lipschitz bounds for scalar networks.
//!
//! Validation never trusts sampled network values: it encloses them. Two
//! primitives carry that weight, and this example exercises both against
//! brute-force sampling:
//!
//! ```text
//! propagate_interval(net, box)  ⊇  { net(x) : x in box }
//! |net(x) - net(y)|  <=  lipschitz_l1(net) * |x - y|_1
//! ```
//!
//! The enclosure is sound but not exact — interval arithmetic ignores the
//! correlation between neurons — so the printout also reports how much wider
//! the enclosure is than the observed range.
//!
//! Run with `cargo run --example interval_bounds`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewcert::net::{lipschitz_l1, propagate_interval, Activation, MlpNet};
use rewcert::space::Rect;

const SAMPLES: usize = 20_000;
const PAIRS: usize = 20_000;

fn main() -> rewcert::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = MlpNet::init(2, &[8, 8], Activation::Tanh, 1, Activation::Linear, &mut rng);
    println!("network: 2 -> 8 -> 8 -> 1, tanh hidden layers\n");

    println!("interval propagation vs {SAMPLES} samples per box:");
    for half_width in [0.05, 0.25, 1.0, 3.0] {
        let rect = Rect::new(vec![-half_width; 2], vec![half_width; 2])?;
        let enclosure = propagate_interval(&net, &rect);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..SAMPLES {
            let x = rect.sample(&mut rng);
            let v = net.forward_scalar(x.coords());
            lo = lo.min(v);
            hi = hi.max(v);
            assert!(
                enclosure.lo <= v && v <= enclosure.hi,
                "sampled value {v} escapes enclosure [{}, {}]",
                enclosure.lo,
                enclosure.hi
            );
        }
        let width_ratio = (enclosure.hi - enclosure.lo) / (hi - lo);
        println!(
            "  box [-{half_width}, {half_width}]^2: enclosure [{:+.4}, {:+.4}], \
             observed [{:+.4}, {:+.4}], width ratio {width_ratio:.2}",
            enclosure.lo, enclosure.hi, lo, hi
        );
    }

    let l = lipschitz_l1(&net);
    let mut worst = 0.0f64;
    let domain = Rect::new(vec![-3.0; 2], vec![3.0; 2])?;
    for _ in 0..PAIRS {
        let x = domain.sample(&mut rng);
        let mut y = x.clone();
        // Mostly-local pairs probe the steepest finite-difference slopes.
        for d in 0..2 {
            y.0[d] = (y.0[d] + rng.gen_range(-0.1..0.1)).clamp(-3.0, 3.0);
        }
        let dist = x.l1_distance(&y);
        if dist == 0.0 {
            continue;
        }
        let slope =
            (net.forward_scalar(x.coords()) - net.forward_scalar(y.coords())).abs() / dist;
        worst = worst.max(slope);
        assert!(slope <= l, "observed slope {slope} exceeds certified constant {l}");
    }
    println!(
        "\nLipschitz: certified constant {l:.4}, steepest of {PAIRS} sampled slopes {worst:.4} \
         ({:.0}% of the bound)",
        100.0 * worst / l
    );
    Ok(())
}

//! Observation-noise laws and their support partitions.
//!
//! Every sound pre-expectation bound in this crate integrates a network over
//! the noise support cell by cell, so two invariants of the partition are
//! load-bearing:
//!
//! ```text
//! sum of cell masses  = 1     (the cells tile the support exactly)
//! every draw has an owner     (locate() finds a cell for each sample)
//! ```
//!
//! This example builds a uniform and a truncated-Gaussian law over two
//! dimensions, partitions each support at several granularities, checks both
//! invariants numerically, and compares exact cell masses against observed
//! sample frequencies.
//!
//! Run with `cargo run --example noise_partition`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rewcert::noise::{
    noise_box_mass, partition_noise_support, sample_noise, NoiseLaw, NoiseSpec,
};
use rewcert::Result;

const DRAWS: usize = 100_000;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let laws = [
        ("uniform(r = 0.1)", NoiseLaw::Uniform { r: 0.1 }),
        (
            "gaussian(sigma = 0.05, kappa = 3)",
            NoiseLaw::Gaussian { sigma: 0.05, kappa: 3.0 },
        ),
    ];
    for (label, law) in laws {
        let spec = NoiseSpec::iid(law, 2)?;
        let support = spec.support();
        println!("{label}, iid over 2 dimensions");
        println!(
            "  support: [{:.3}, {:.3}] x [{:.3}, {:.3}]",
            support.lo[0], support.hi[0], support.lo[1], support.hi[1]
        );

        for k in [1usize, 4, 10] {
            let cells = partition_noise_support(&spec, k)?;
            let masses: Vec<f64> = cells
                .cells
                .iter()
                .map(|c| noise_box_mass(&spec, c))
                .collect::<Result<_>>()?;
            let total: f64 = masses.iter().sum();
            println!(
                "  k = {k:>2}: {:>3} cells, volume range [{:.2e}, {:.2e}], mass sum - 1 = {:+.2e}",
                cells.cells.len(),
                cells.minvol,
                cells.maxvol,
                total - 1.0,
            );
        }

        // Sample-frequency cross-check at k = 4 (16 congruent cells): the
        // observed occupancy of every cell should match its exact mass to
        // within a few standard errors, and no draw may fall outside.
        let cells = partition_noise_support(&spec, 4)?;
        let masses: Vec<f64> = cells
            .cells
            .iter()
            .map(|c| noise_box_mass(&spec, c))
            .collect::<Result<_>>()?;
        let mut counts = vec![0u64; cells.cells.len()];
        for _ in 0..DRAWS {
            let delta = sample_noise(&spec, &mut rng);
            let owner = cells
                .locate(&delta)
                .expect("every draw lies inside the support");
            counts[owner] += 1;
        }
        let mut worst_z = 0.0f64;
        for (mass, count) in masses.iter().zip(&counts) {
            let freq = *count as f64 / DRAWS as f64;
            let se = (mass * (1.0 - mass) / DRAWS as f64).sqrt();
            if se > 0.0 {
                worst_z = worst_z.max((freq - mass).abs() / se);
            }
        }
        println!(
            "  {DRAWS} draws against the 16-cell partition: every draw located, \
             worst |freq - mass| = {worst_z:.2} standard errors"
        );
        assert!(worst_z < 5.0, "sample frequencies disagree with exact masses");
        println!();
    }
    Ok(())
}

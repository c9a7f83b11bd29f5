//! Stationarity-driven neighborhood search and positive-window sampling.

use latad::augmentation::{adf_test, find_neighborhood_eta, sample_positives, NeighborhoodConfig, NeighborhoodSpec};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 1.0)?;
    let n = 1200;
    // Column 0 is white noise; column 1 is a random walk.
    let mut walk = 0.0;
    let series = Array2::from_shape_fn((n, 2), |(_, j)| {
        let e: f64 = noise.sample(&mut rng);
        if j == 0 {
            e
        } else {
            walk += e;
            walk
        }
    });

    for (j, name) in ["white noise", "random walk"].iter().enumerate() {
        let col = series.column(j).to_vec();
        let r = adf_test(&col, None).expect("long enough");
        println!("{name:<12} ADF stat {:>7.3}  p {:.4}  lags {}", r.statistic, r.p_value, r.lags);
    }

    let cfg = NeighborhoodConfig::default();
    let delta = 100;
    let t = n / 2;
    for j in 0..2 {
        let col = series.column(j).to_owned().insert_axis(ndarray::Axis(1));
        println!("feature {j}: eta = {}", find_neighborhood_eta(col.view(), t, delta, &cfg));
    }

    let spec = NeighborhoodSpec {
        center_t: t,
        eta: find_neighborhood_eta(series.view(), t, delta, &cfg),
        delta,
        adf_pvalue_threshold: cfg.adf_pvalue_threshold,
    };
    let positives = sample_positives(series.view(), &spec, 5, &mut rng)?;
    let starts: Vec<usize> = positives.iter().map(|w| w.start_index).collect();
    println!("both features: eta = {}, positive starts {starts:?}", spec.eta);
    Ok(())
}

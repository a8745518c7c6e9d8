//! Runs two excitation currents through the joint simulator and prints what
//! the logger captures: noisy measurement channels, noiseless shadow
//! channels, and the stick-slip behaviour of the drivetrain.

use frictionid::config;
use frictionid::excitation::{sine_grid, step_family};
use frictionid::sim::{run_trajectory, STICTION_BAND};

fn main() {
    let cfg = config::ankle(7);

    // One sine dwell and one constant step, both below the current limit.
    let mut specs = sine_grid(&[0.8], &[0.5], 6.0);
    specs.extend(step_family(&[0.6], 4.0));

    let out_dir = std::env::temp_dir().join("frictionid_simulate_excitation");
    std::fs::create_dir_all(&out_dir).unwrap();

    for (k, spec) in specs.iter().enumerate() {
        let currents = spec.sample(cfg.rates.log);
        let raw = run_trajectory(
            &cfg.joint,
            &cfg.ground_truth,
            &currents,
            spec.initial_position,
            cfg.rates,
            &cfg.noise,
        )
        .unwrap();

        // Joint-side velocity from the shadow channel tells us how much of
        // the run the joint spent stuck.
        let dt = 1.0 / raw.rate;
        let mut stuck = 0usize;
        let mut v_max = 0.0f64;
        for w in raw.s_shadow.windows(2) {
            let v = (w[1] - w[0]) / dt;
            v_max = v_max.max(v.abs());
            if v.abs() < STICTION_BAND {
                stuck += 1;
            }
        }
        println!("run {k}: {:?}", spec.waveform);
        println!("  samples            {}", raw.len());
        println!("  peak |s_dot|       {v_max:.3} rad/s");
        println!(
            "  time stuck         {:.1}%",
            100.0 * stuck as f64 / raw.len() as f64
        );
        println!(
            "  position range     [{:.3}, {:.3}] rad",
            raw.s_shadow.iter().cloned().fold(f64::INFINITY, f64::min),
            raw.s_shadow.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        println!("  hit position stop  {}", raw.limit_hit);

        // The measured channel differs from the shadow only by sensor noise
        // injected at log time; the simulator itself is noiseless.
        let n = raw.len() as f64;
        let noise_std = (raw
            .s
            .iter()
            .zip(&raw.s_shadow)
            .map(|(m, t)| (m - t).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        println!(
            "  encoder noise      {noise_std:.2e} rad measured, {:.2e} rad configured",
            cfg.noise.sigma_pos
        );

        let path = out_dir.join(format!("run_{k}.csv"));
        raw.write_csv(&path, &cfg.artifact_comments()).unwrap();
        println!("  log written to     {}", path.display());
    }
}

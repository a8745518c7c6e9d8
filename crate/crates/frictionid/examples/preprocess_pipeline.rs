//! Runs one simulated log through the offline estimation pipeline and checks
//! the friction labels it reconstructs against the simulator's shadow
//! channel, which records the torque the friction interface actually
//! exerted.

use frictionid::config;
use frictionid::excitation::sine_grid;
use frictionid::sigproc::{run_pipeline, SingleJointDynamics};
use frictionid::sim::run_trajectory;

fn main() {
    let cfg = config::ankle(11);
    let spec = sine_grid(&[1.0], &[0.5], 8.0)[0];

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

    // Zero-phase filtering, smoothed differentiation, inverse dynamics and
    // transmission-torque reconstruction in one call.
    let dynamics = SingleJointDynamics::from_params(&cfg.joint);
    let ds = run_pipeline(&raw, &cfg.joint, &dynamics, &cfg.pipeline).unwrap();
    println!(
        "dataset: {} samples at {} Hz (log was {} samples at {} Hz)",
        ds.len(),
        ds.rate,
        raw.len(),
        raw.rate
    );

    // Every second dataset sample coincides with a log instant, so the
    // shadow channel doubles as a per-sample oracle for the labels.
    let stride = (ds.rate / raw.rate).round() as usize;
    let mut err_sq = 0.0;
    let mut ref_sq = 0.0;
    for (k, &shadow) in raw.friction_shadow.iter().enumerate() {
        let label = ds.tau_f_true[stride * k];
        err_sq += (label - shadow).powi(2);
        ref_sq += shadow * shadow;
    }
    let n = raw.friction_shadow.len() as f64;
    println!(
        "label error: {:.3} N·m RMSE against a {:.3} N·m RMS signal ({:.1}%)",
        (err_sq / n).sqrt(),
        (ref_sq / n).sqrt(),
        100.0 * (err_sq / ref_sq).sqrt()
    );

    // A few rows around the first velocity reversal, where reconstruction is
    // hardest: the friction label flips sign with the sliding direction.
    let reversal = ds
        .s_dot
        .windows(2)
        .position(|w| w[0] > 0.05 && w[1] <= 0.05)
        .unwrap_or(ds.len() / 2);
    println!("\n      t       s_dot    s_ddot     tau     tau_f");
    for k in (reversal.saturating_sub(3))..(reversal + 3).min(ds.len()) {
        println!(
            "  {:6.3}  {:8.3}  {:8.3}  {:7.3}  {:7.3}",
            ds.t[k], ds.s_dot[k], ds.s_ddot[k], ds.tau[k], ds.tau_f_true[k]
        );
    }
}

//! Trains a small network on data whose friction has memory and shows why
//! that beats any static curve: the validation data-loss drops below the
//! error floor of the best memoryless model.

use frictionid::config;
use frictionid::excitation::sine_grid;
use frictionid::pinn::{static_val_mse, train};
use frictionid::sigproc::{run_pipeline, SingleJointDynamics};
use frictionid::sim::run_trajectory;

fn main() {
    // The ankle fixture's ground truth is a static curve plus a first-order
    // lag, so the realized friction depends on the motion history.
    let cfg = config::ankle(5);
    let specs = sine_grid(&[0.6, 1.0, 1.5], &[0.3, 0.7, 1.5], 8.0);
    let dynamics = SingleJointDynamics::from_params(&cfg.joint);
    let datasets: Vec<_> = specs
        .iter()
        .map(|spec| {
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
            run_pipeline(&raw, &cfg.joint, &dynamics, &cfg.pipeline).unwrap()
        })
        .collect();

    // Scaled-down network and schedule; the full configuration lives in the
    // fixture and trains through the CLI.
    let mut pcfg = cfg.pinn.clone();
    pcfg.history_length = 10;
    pcfg.hidden1 = 64;
    pcfg.hidden2 = 64;
    pcfg.epochs = 20;

    let t0 = std::time::Instant::now();
    let outcome = train(&datasets, &cfg.joint, &pcfg).unwrap();
    println!(
        "trained {} epochs in {:.0} s, kept epoch {}",
        pcfg.epochs,
        t0.elapsed().as_secs_f64(),
        outcome.best_epoch
    );

    println!("\nepoch   train total   val total   val data   val physics");
    for (e, (tr, va)) in outcome
        .train_curve
        .iter()
        .zip(&outcome.val_curve)
        .enumerate()
        .step_by(4)
    {
        println!(
            "{e:5}   {:11.4}   {:9.4}   {:8.4}   {:11.4}",
            tr.total, va.total, va.data, va.physics
        );
    }

    // Benchmark: the physics prior itself, evaluated on the same validation
    // windows. The network should beat it on data fit.
    let floor = static_val_mse(&datasets, &cfg.joint, pcfg.history_length, &pcfg.physics_params)
        .unwrap();
    let best = &outcome.val_curve[outcome.best_epoch];
    println!("\nvalidation data MSE: network {:.3}, static prior {:.3}", best.data, floor);
    println!("ratio {:.2} (memory pays off below 1)", best.data / floor);
}

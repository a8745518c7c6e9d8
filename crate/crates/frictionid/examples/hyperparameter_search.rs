//! Random-searches the network hyperparameters on a small dataset and prints
//! the trial table. Trials run in parallel; per-trial seeds derive from the
//! search seed, so the winner does not depend on scheduling.

use frictionid::config;
use frictionid::excitation::sine_grid;
use frictionid::pinn::{random_search, SearchSpace};
use frictionid::sigproc::{run_pipeline, SingleJointDynamics};
use frictionid::sim::run_trajectory;

fn main() {
    let cfg = config::ankle(13);
    let specs = sine_grid(&[0.8, 1.4], &[0.3, 0.8], 8.0);
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

    // A narrow space with short schedules; the fixture's `sweep` section
    // holds the full one.
    let space = SearchSpace {
        batch_size: (2048, 4096),
        hidden1: (32, 96),
        hidden2: (32, 96),
        learning_rate: (3e-4, 3e-3),
        history_length: (6, 14),
        lambda: (0.05, 0.4),
        dropout_rate: (0.0, 0.1),
        epochs: 10,
    };
    let physics = config::ankle_scv();

    let t0 = std::time::Instant::now();
    let (best, trials) = random_search(&datasets, &cfg.joint, &space, &physics, 6, cfg.seed).unwrap();
    println!("6 trials in {:.0} s\n", t0.elapsed().as_secs_f64());

    println!("trial   batch   h1   h2       lr    L   lambda   dropout   val loss");
    for r in &trials {
        println!(
            "{:5}   {:5}  {:3}  {:3}   {:.4}  {:3}   {:.3}    {:.3}     {:.4}",
            r.trial, r.batch, r.h1, r.h2, r.lr, r.l, r.lambda, r.dropout, r.val_loss
        );
    }
    println!(
        "\nwinner: h1={} h2={} L={} lr={:.4} lambda={:.3}",
        best.hidden1, best.hidden2, best.history_length, best.learning_rate, best.lambda
    );
}

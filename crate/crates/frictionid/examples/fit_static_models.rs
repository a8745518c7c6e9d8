//! Identifies the two static friction models on a small excitation batch
//! and compares them with the curve that generated the data. Uses a
//! memoryless ground truth so the fit has an exact target.

use frictionid::config;
use frictionid::excitation::sine_grid;
use frictionid::fitting::{fit_samples, ModelKind};
use frictionid::friction::FrictionModel;
use frictionid::sigproc::{pool_sliding_samples, run_pipeline, SingleJointDynamics};
use frictionid::sim::{run_trajectory, FrictionGroundTruth};

fn main() {
    // The built-in fixture has friction memory; swap in its static part so
    // the fitted parameters have ground-truth values to land on.
    let mut cfg = config::ankle(3);
    let truth = config::ankle_scv();
    cfg.ground_truth = FrictionGroundTruth::Scv(truth);

    // A reduced grid keeps this example under a minute.
    let specs = sine_grid(&[0.6, 1.0, 1.5], &[0.2, 0.5, 1.0], 8.0);
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

    // Standstill samples carry the holding reaction, not the friction curve,
    // so the pool keeps sliding samples only.
    let (v, tau) = pool_sliding_samples(&datasets, cfg.fit.min_velocity);
    println!("fitting on {} sliding samples", v.len());

    for kind in [ModelKind::Cv, ModelKind::Scv] {
        let fit = fit_samples(kind, &v, &tau, &cfg.fit.adam, None, String::new()).unwrap();
        println!("\n{kind:?} fit, mse {:.4} N²·m²:", fit.final_mse);
        match fit.params {
            FrictionModel::Cv(p) => {
                println!("  k_c {:.3} (truth {:.3})", p.k_c, truth.k_c);
                println!("  k_v {:.3} (truth {:.3})", p.k_v, truth.k_v);
            }
            FrictionModel::Scv(p) => {
                println!("  k_c {:.3} (truth {:.3})", p.k_c, truth.k_c);
                println!("  k_v {:.3} (truth {:.3})", p.k_v, truth.k_v);
                println!("  k_s {:.3} (truth {:.3})", p.k_s, truth.k_s);
                println!("  v_s {:.3} (truth {:.3})", p.v_s, truth.v_s);
            }
        }
    }
    println!("\nthe CV fit folds the breakaway excess into k_c; the SCV fit separates it.");
}

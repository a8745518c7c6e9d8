//! Scratch probe: evaluate closed-loop protocols against cached fits and a
//! cached trained network. Not part of the shipped examples.

use std::path::Path;

use frictionid::config;
use frictionid::control::{run_closed_loop, Compensator, ControllerGains, Reference, TorquePulse};
use frictionid::eval::{disturbance_recovery, energy_proxy, kp_grid, min_kp_search, tracking_rmse};
use frictionid::fitting::{fit_samples, FitResult, ModelKind};
use frictionid::friction::FrictionModel;
use frictionid::friction::{CvParams, ScvParams};
use frictionid::pinn::{train, OnlineEstimator, PinnModel};
use frictionid::sigproc::{pool_sliding_samples, run_pipeline, Dataset, SingleJointDynamics};
use frictionid::sim::run_trajectory;

const CACHE: &str = "/tmp/probe_cache";

fn main() {
    let cfg = config::ankle(7);
    let cache = Path::new(CACHE);
    std::fs::create_dir_all(cache).unwrap();

    // --- Stage 1: datasets (cached as CSV) ------------------------------
    let specs = cfg.excitation.expand().unwrap();
    let datasets: Vec<Dataset> = if cache.join("run_00.csv").exists() {
        (0..specs.len())
            .map(|k| Dataset::read_csv(&cache.join(format!("run_{k:02}.csv"))).unwrap())
            .collect()
    } else {
        let dynamics = SingleJointDynamics::from_params(&cfg.joint);
        let out: Vec<Dataset> = specs
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
        for (k, ds) in out.iter().enumerate() {
            ds.write_csv(&cache.join(format!("run_{k:02}.csv")), &[]).unwrap();
        }
        out
    };
    println!("datasets: {}", datasets.len());

    // --- Stage 2: static fits (cached as JSON) --------------------------
    let (cv_fit, scv_fit): (CvParams, ScvParams) = if cache.join("scv.json").exists() {
        let cv = FitResult::read_json(&cache.join("cv.json")).unwrap();
        let scv = FitResult::read_json(&cache.join("scv.json")).unwrap();
        let cv = match cv.params {
            FrictionModel::Cv(p) => p,
            _ => unreachable!(),
        };
        let scv = match scv.params {
            FrictionModel::Scv(p) => p,
            _ => unreachable!(),
        };
        (cv, scv)
    } else {
        let (v_fit, tau_fit) = pool_sliding_samples(&datasets, cfg.fit.min_velocity);
        let mut cv = None;
        let mut scv = None;
        for (kind, name) in [(ModelKind::Cv, "cv"), (ModelKind::Scv, "scv")] {
            let fit =
                fit_samples(kind, &v_fit, &tau_fit, &cfg.fit.adam, None, "probe".into()).unwrap();
            println!("{kind:?}: {:?} mse={:.4}", fit.params, fit.final_mse);
            fit.write_json(&cache.join(format!("{name}.json"))).unwrap();
            match fit.params {
                FrictionModel::Cv(p) => cv = Some(p),
                FrictionModel::Scv(p) => scv = Some(p),
            }
        }
        (cv.unwrap(), scv.unwrap())
    };
    println!("cv  fit: {cv_fit:?}");
    println!("scv fit: {scv_fit:?}");

    // --- Stage 3: network (cached as JSON) ------------------------------
    let model: PinnModel = if cache.join("pinn.json").exists() {
        let text = std::fs::read_to_string(cache.join("pinn.json")).unwrap();
        serde_json::from_str(&text).unwrap()
    } else {
        let mut pcfg = cfg.pinn.clone();
        pcfg.epochs = 100;
        pcfg.physics_params = scv_fit;
        let t0 = std::time::Instant::now();
        let outcome = train(&datasets, &cfg.joint, &pcfg).unwrap();
        println!(
            "pinn: {:.0}s best_epoch={} val data={:.4}",
            t0.elapsed().as_secs_f64(),
            outcome.best_epoch,
            outcome.val_curve[outcome.best_epoch].data
        );
        let text = serde_json::to_string(&outcome.model).unwrap();
        std::fs::write(cache.join("pinn.json"), text).unwrap();
        outcome.model
    };

    let compensators: Vec<(&str, Compensator)> = vec![
        ("none", Compensator::None),
        ("cv  ", Compensator::Cv(cv_fit)),
        ("scv ", Compensator::Scv(scv_fit)),
        ("pinn", Compensator::Pinn(Box::new(OnlineEstimator::new(&model)))),
    ];

    // --- Protocol sweep --------------------------------------------------
    let grid = kp_grid(cfg.eval.kp_lo, cfg.eval.kp_hi, cfg.eval.kp_per_decade).unwrap();
    let ev = &cfg.eval;
    let protocols = [
        (0.25, 0.5),
        (0.3, 0.5),
        (0.35, 0.5),
        (0.4, 0.5),
        (0.2, 0.6),
        (0.25, 0.6),
        (0.3, 0.6),
        (0.35, 0.6),
    ];

    for (amp, freq) in protocols {
        let reference = Reference::Sine { amplitude: amp, frequency: freq, offset: 0.0 };
        println!("\n=== reference a={amp} f={freq} ===");
        let run_trace = |kp: f64, comp: &Compensator| {
            let mut c = comp.clone();
            let gains = ControllerGains { k_p: kp, k_d: ev.k_d };
            run_closed_loop(
                &reference,
                &gains,
                &mut c,
                &cfg.joint,
                &cfg.ground_truth,
                ev.duration,
                None,
                &cfg.noise,
                &ev.loop_settings,
            )
            .unwrap()
        };
        let mut min_kps = Vec::new();
        for (label, comp) in &compensators {
            let out = min_kp_search(&grid, ev.rmse_threshold, |kp| {
                Ok(tracking_rmse(&run_trace(kp, comp), ev.rmse_start).unwrap())
            })
            .unwrap();
            // RMSE at the four grid points straddling the crossing.
            let detail: Vec<String> = out
                .curve
                .iter()
                .filter(|(kp, _)| match out.min_kp {
                    Some(m) => *kp >= m / 1.6 && *kp <= m * 1.4,
                    None => false,
                })
                .map(|(kp, e)| format!("{kp:.1}:{e:.4}"))
                .collect();
            println!("{label}: min_kp={:?}  [{}]", out.min_kp, detail.join(" "));
            min_kps.push((*label, out.min_kp));
        }
        // Energy proxy at equal gains: evaluate at the NONE minimum (all
        // models track) and at the PINN minimum.
        let none_kp = min_kps[0].1;
        let pinn_kp = min_kps[3].1;
        for (tag, kp) in [("none-min", none_kp), ("pinn-min", pinn_kp)] {
            if let Some(kp) = kp {
                let energies: Vec<String> = compensators
                    .iter()
                    .map(|(label, comp)| {
                        format!("{}={:.3}", label.trim(), energy_proxy(&run_trace(kp, comp)))
                    })
                    .collect();
                println!("energy at {tag} kp={kp:.0}: {}", energies.join(" "));
            }
        }
        // Disturbance recovery at the network's minimum gain.
        if let Some(kp) = pinn_kp {
            for pulse_amp in [6.5, 7.0, 8.0] {
                let pulse = TorquePulse {
                    amplitude: pulse_amp,
                    t_start: ev.disturbance.t_start,
                    duration: ev.disturbance.duration,
                };
                let recs: Vec<String> = compensators
                    .iter()
                    .map(|(label, comp)| {
                        let mut c = comp.clone();
                        let gains = ControllerGains { k_p: kp, k_d: ev.k_d };
                        let trace = run_closed_loop(
                            &Reference::Hold { position: 0.0 },
                            &gains,
                            &mut c,
                            &cfg.joint,
                            &cfg.ground_truth,
                            ev.hold_duration,
                            Some(pulse),
                            &cfg.noise,
                            &ev.loop_settings,
                        )
                        .unwrap();
                        let rec = disturbance_recovery(&trace, &pulse, ev.recovery_window).unwrap();
                        format!("{}={:.4}", label.trim(), rec)
                    })
                    .collect();
                println!("recovery at kp={kp:.0} pulse={pulse_amp}: {}", recs.join(" "));
            }
        }
    }
}

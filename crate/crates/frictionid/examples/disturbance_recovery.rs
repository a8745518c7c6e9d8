//! Holds a position, applies an external torque pulse on the load side, and
//! measures how well the joint returns once the pulse ends. Without friction
//! compensation the joint re-sticks short of the hold position; the
//! compensator pushes it the rest of the way.

use frictionid::config;
use frictionid::control::{run_closed_loop, Compensator, ControllerGains, Reference, TorquePulse};
use frictionid::eval::disturbance_recovery;

fn main() {
    let cfg = config::ankle(19);
    let gains = ControllerGains {
        k_p: 40.0,
        k_d: cfg.eval.k_d,
    };
    let pulse = TorquePulse {
        amplitude: 8.0,
        t_start: 2.0,
        duration: 1.0,
    };
    let hold = Reference::Hold { position: 0.0 };

    println!(
        "hold at 0 rad, {} N·m pulse for {} s, k_p = {}, k_d = {}\n",
        pulse.amplitude, pulse.duration, gains.k_p, gains.k_d
    );
    for (name, comp) in [
        ("none", Compensator::None),
        ("scv", Compensator::Scv(config::ankle_scv())),
    ] {
        let mut comp = comp.clone();
        let trace = run_closed_loop(
            &hold,
            &gains,
            &mut comp,
            &cfg.joint,
            &cfg.ground_truth,
            cfg.eval.hold_duration,
            Some(pulse),
            &cfg.noise,
            &cfg.eval.loop_settings,
        )
        .unwrap();

        // Peak deflection while the pulse is on, then the RMSE of the window
        // after it ends.
        let peak = trace
            .t
            .iter()
            .zip(&trace.s)
            .filter(|(&t, _)| t >= pulse.t_start && t <= pulse.t_start + pulse.duration)
            .map(|(_, &s)| s.abs())
            .fold(0.0f64, f64::max);
        let residual = *trace.s.last().unwrap();
        let rmse = disturbance_recovery(&trace, &pulse, cfg.eval.recovery_window).unwrap();
        println!("{name:4}: peak deflection {peak:.3} rad, recovery rmse {rmse:.4} rad, final offset {residual:.4} rad");
    }
}

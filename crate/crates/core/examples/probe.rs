//! Scratch probe: does an input dead time rescue the reduced-model fit?

use covertwin::config::ScenarioConfig;
use covertwin::scenario::build_plant;
use covertwin::sim::{Drive, Simulator};
use covertwin::sysid::fit_arx;

fn main() {
    let config = ScenarioConfig::default();
    let dt = config.integrator.dt;
    let tick = config.integrator.control_tick;
    let steps_per_tick = (tick / dt).round() as usize;
    let rest = config.integrator.ambient_temp;
    let pump = config.pump.open_loop_voltage;

    // Same drive schedule the identification routine uses, lengthened to
    // 300 s of record.
    let rest_ticks = 20usize;
    let hold_ticks = 145usize;
    let offsets = [25.0, -8.0, 35.0, 0.0];

    let sim = Simulator::new(build_plant(&config).unwrap(), config.peltier_mode(), dt).unwrap();
    let mut state = sim.initial_state(rest);
    let surface = sim.plant.layout.surface;

    let n = rest_ticks + offsets.len() * hold_ticks;
    let mut commands = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for k in 0..n {
        let command = if k < rest_ticks {
            rest
        } else {
            rest + offsets[(k - rest_ticks) / hold_ticks]
        };
        outputs.push(state.temps[surface]);
        for _ in 0..steps_per_tick {
            sim.step(
                &mut state,
                &Drive {
                    peltier_command: command,
                    pump_voltage: pump,
                },
            )
            .unwrap();
        }
        commands.push(command);
    }

    for order in [2usize, 3] {
        for delay in 0..=30usize {
            // Delay the input by prepending rest samples.
            let mut delayed = vec![rest; delay];
            delayed.extend_from_slice(&commands[..n - delay]);
            let inputs: Vec<&[f64]> = vec![&delayed];
            match fit_arx(&inputs, &outputs, order, tick, 100.0) {
                Ok(model) => {
                    println!(
                        "order {order} delay {delay:2} ({:4.1} s): free-run rms {:.4} C, gain {:.4}, tau {:?}",
                        delay as f64 * tick,
                        model.fit_rms,
                        model.step_gain(0),
                        model.dominant_time_constant().map(|t| (t * 10.0).round() / 10.0)
                    );
                }
                Err(e) => println!("order {order} delay {delay:2}: {e}"),
            }
        }
    }
}

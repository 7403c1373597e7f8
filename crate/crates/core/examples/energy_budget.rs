//! Energy budget of the default hardware: dark lifetime per sensing rate and
//! the light level needed to break even.
//!
//! cargo run --release --example energy_budget

use harvest_rl::energy::{dark_lifetime, harvest_power, load_energy, HardwareConfig, SENSING_PERIOD_SECONDS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hw = HardwareConfig::default();
    println!("usable energy: {:.2} J", hw.usable_energy());
    println!("{:>6} {:>10} {:>14} {:>14}", "state", "period s", "dark life d", "break-even lx");
    for (state, &period) in SENSING_PERIOD_SECONDS.iter().enumerate() {
        let life = dark_lifetime(f64::from(period), 1.0, &hw) / 86_400.0;
        // Average draw at the midpoint voltage, met by harvest at this illuminance.
        let v_mid = 0.5 * (hw.v_max + hw.v_min);
        let draw = load_energy(f64::from(period), 3_600.0, v_mid, true, &hw) / 3_600.0;
        let per_lux = harvest_power(1.0, &hw)?;
        println!("{state:>6} {period:>10} {life:>14.2} {:>14.1}", draw / per_lux);
    }
    println!("10-minute sampling: {:.2} days in darkness", dark_lifetime(600.0, 1.0, &hw) / 86_400.0);
    Ok(())
}

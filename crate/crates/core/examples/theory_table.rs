//! Best-case coalescence for the three filter scenarios, with and without the
//! dot's pure dephasing.
use hybrid_hom::cli::{cmd_theory, ScenarioPreset};

fn main() -> hybrid_hom::Result<()> {
    println!("{:<14}{:>10}{:>12}{:>12}{:>14}", "preset", "TL ps", "free", "dephased", "transmission");
    for p in ScenarioPreset::all() {
        let r = cmd_theory(&p)?;
        println!(
            "{:<14}{:>10.1}{:>12.3}{:>12.3}{:>14.4}",
            p.name, r.transform_limit, r.dephasing_free.value, r.with_dephasing.value, r.spectral_transmission
        );
    }
    Ok(())
}

//! Solves the toy harvest MDP exactly and compares it with the tabular
//! learner after a million steps.
//!
//! cargo run --release --example q_oracle

use harvest_rl::qlearn::{q_learn_toy, sup_norm_distance, toy_harvest, value_iteration_oracle, Hyperparameters};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = toy_harvest();
    let hp = Hyperparameters::default();
    let exact = value_iteration_oracle(&toy.mdp, hp.gamma)?;
    let learned = q_learn_toy(&toy, &hp, 1_000_000, 96, 1);
    println!("{:<22} {:>10} {:>10} {:>10} {:>10}", "state", "idle*", "sense*", "idle", "sense");
    for (i, s) in toy.observed.iter().enumerate() {
        println!(
            "light {:>2} storage {:>2}   {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            s.light_level(),
            s.storage_level(),
            exact[i][0],
            exact[i][1],
            learned[i][0],
            learned[i][1]
        );
    }
    println!("sup-norm gap: {:.2e}", sup_norm_distance(&learned, &exact));
    Ok(())
}

//! One-cycle learning-rate schedule and the default training recipe.

use detbench::schedule::{emit_recipe, lr_at, parse_recipe, schedule, OneCycleConfig, TrainingRecipe};

fn main() -> detbench::Result<()> {
    let config = OneCycleConfig {
        total_steps: 100,
        ..OneCycleConfig::default()
    };
    println!("ramp {} steps, anneal {} steps", config.ramp_steps(), config.anneal_steps());
    for (step, lr) in schedule(&config)?.into_iter().step_by(10) {
        println!("{step:>4} {lr:.6} {}", "#".repeat((lr * 4000.0) as usize));
    }
    println!("peak at step {}: {}", config.ramp_steps(), lr_at(&config, config.ramp_steps())?);

    let text = emit_recipe(&TrainingRecipe::default())?;
    print!("{text}");
    assert_eq!(parse_recipe(&text)?, TrainingRecipe::default());
    Ok(())
}

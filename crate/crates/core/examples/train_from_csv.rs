//! Round trip through the CSV formats: write signals, learn from them, and
//! read the learned dictionary back.

use gscad::coding::SignalBatch;
use gscad::dictionary::Dictionary;
use gscad::learner::{learn, LearnConfig};
use gscad::synth::{default_learn_config, generate_d0, generate_signals, SynthConfig};

fn main() -> gscad::Result<()> {
    let dir = std::env::temp_dir().join("gscad-train-example");
    std::fs::create_dir_all(&dir)?;
    let signals_path = dir.join("signals.csv");

    // Signals are stored one per column, the way `gscad train` reads them.
    let generated = generate_signals(&generate_d0(), 600, &SynthConfig::default(), 3)?;
    generated.noisy.write_csv(std::fs::File::create(&signals_path)?)?;

    let signals = SignalBatch::read_csv(std::fs::File::open(&signals_path)?)?;
    let cfg = LearnConfig { p0: 15, seed: 9, ..default_learn_config() };
    let report = learn(&signals, &cfg)?;
    println!("{}", report.to_json()?);

    let dict_path = dir.join("dictionary.csv");
    report.dictionary.write_csv(std::fs::File::create(&dict_path)?)?;
    let back = Dictionary::read_csv(std::io::BufReader::new(std::fs::File::open(&dict_path)?))?;
    println!("reloaded {}x{} dictionary from {}", back.m(), back.p(), dict_path.display());
    Ok(())
}

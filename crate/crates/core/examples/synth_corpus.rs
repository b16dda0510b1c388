//! Generates a synthetic corpus with planted patents and writes it in the
//! patents/citations file formats.

use dflex::corpus::{load_corpus, write_corpus};
use dflex::synth::{generate_corpus, SynthConfig};

fn main() -> dflex::Result<()> {
    let config = SynthConfig {
        n_patents: 2000,
        seed: 42,
        ..SynthConfig::default()
    };
    let synth = generate_corpus(&config)?;
    let dir = std::env::temp_dir().join("dflex-synth-example");
    std::fs::create_dir_all(&dir).map_err(|e| dflex::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let (patents, citations) = (dir.join("patents.csv"), dir.join("citations.csv"));
    write_corpus(&synth.corpus, &patents, &citations)?;
    synth.write_labels(&dir.join("labels.csv"))?;

    let back = load_corpus(&patents, &citations)?;
    println!(
        "{} patents, {} citations, {} planted; written to {}",
        back.len(),
        back.edge_count(),
        synth.planted.len(),
        dir.display()
    );
    Ok(())
}

//! Input generators shared by the benchmarks in `benches/`.

use lexvar_core::Lexicon;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` random probability vectors of length `len`.
pub fn distributions(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

/// JSON lines spread over mainland Spain, each mentioning one or two
/// keywords from the bundled lexicon among filler words.
pub fn corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = Lexicon::shipped(false);
    let phrases: Vec<String> = lexicon
        .concepts()
        .iter()
        .flat_map(|c| c.variants().iter().map(|v| v.id().to_string()))
        .collect();
    let filler = [
        "hoy", "con", "mi", "que", "la", "de", "muy", "#lunes", "@amiga", "jaja",
    ];
    (0..n)
        .map(|i| {
            let mut words: Vec<&str> = (0..12)
                .map(|_| filler[rng.gen_range(0..filler.len())])
                .collect();
            for _ in 0..rng.gen_range(1..=2) {
                let at = rng.gen_range(0..words.len());
                words[at] = &phrases[rng.gen_range(0..phrases.len())];
            }
            serde_json::json!({
                "id": i.to_string(),
                "lon": rng.gen_range(-9.0..3.0),
                "lat": rng.gen_range(36.5..43.5),
                "text": words.join(" "),
                "lang": "es",
                "lang_prob": 0.95,
            })
            .to_string()
        })
        .collect()
}

use pqgen::config::{TrainConfig, Variant};
use pqgen::corpus::{build_vocab, encode_batch, tokenize, QuestionPair};
use pqgen::model::ModelParams;
use pqgen::numerics::Rng;
use pqgen::training::Trainer;

fn toy_pairs(n: usize) -> Vec<QuestionPair> {
    let subjects = [
        "math", "physics", "chess", "poetry", "biology", "history", "music", "coding", "drawing",
        "cooking", "sailing", "farming", "dancing", "running", "fishing", "singing", "writing",
        "riding", "baking", "painting",
    ];
    let early = std::env::var("EARLY_SUBJECT").is_ok();
    (0..n)
        .map(|i| {
            let s = subjects[i % subjects.len()];
            QuestionPair {
                id: i as u64,
                qid1: (2 * i) as u64,
                qid2: (2 * i + 1) as u64,
                question1: format!("what is the best way to learn {s} ?"),
                question2: if early {
                    format!("{s} is hard to master ?")
                } else {
                    format!("how do i learn {s} ?")
                },
                is_duplicate: 1,
            }
        })
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.03);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(5);
    let d: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(12);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let bs: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(2);

    let pairs = toy_pairs(n);
    let token_lists: Vec<Vec<String>> = pairs
        .iter()
        .flat_map(|p| [tokenize(&p.question1), tokenize(&p.question2)])
        .collect();
    let slices: Vec<&[String]> = token_lists.iter().map(|l| l.as_slice()).collect();
    let vocab = build_vocab(slices, 1, 200);
    let config = TrainConfig {
        learning_rate: lr,
        batch_size: bs,
        epochs: 0,
        seed: 51,
        variant: Variant::Edl,
        d,
        vocab_size: vocab.len(),
        max_len: 14,
        ..TrainConfig::default()
    };
    let init_seed: u64 = std::env::var("SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(51);
    let mut model = ModelParams::init_for(&config, vocab.len(), &mut Rng::new(init_seed));
    if let Ok(scale) = std::env::var("INIT_SCALE") {
        let k: f64 = scale.parse().unwrap();
        for (_, t) in model.named_params_mut() {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }
    let batch = encode_batch(&pairs, &vocab, config.max_len);
    let mut trainer = Trainer::new(model, config);
    let mut sink = std::io::sink();
    for e in 0..epochs {
        let s = trainer.train_epoch(&batch, e, &mut sink).unwrap();
        if e % 100 == 0 || e == epochs - 1 {
            println!("epoch {e}: local {:.5}", s.mean_local);
        }
        if s.mean_local < 0.005 {
            println!("epoch {e}: local {:.5} (early stop)", s.mean_local);
            break;
        }
    }
    // check greedy reproduction
    let mut exact = 0;
    for (src, tgt) in batch.sources.iter().zip(batch.targets.iter()) {
        let out = trainer.model.generate(src, 20).unwrap();
        let gold: Vec<usize> = tgt.content()[1..tgt.length - 1].to_vec();
        if out.ids == gold {
            exact += 1;
        }
    }
    println!("exact reproductions: {exact}/{}", batch.len());
}

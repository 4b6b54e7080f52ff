use pqgen::config::{DecoderFeed, TrainConfig, Variant};
use pqgen::corpus::{build_vocab, encode_batch, tokenize, QuestionPair};
use pqgen::losses;
use pqgen::model::{decode_steps, encode_seq, ModelParams, ParamVars};
use pqgen::numerics::{Graph, Rng};

fn main() {
    let subjects = ["math", "physics", "chess", "poetry", "biology"];
    let pairs: Vec<QuestionPair> = subjects
        .iter()
        .enumerate()
        .map(|(i, s)| QuestionPair {
            id: i as u64,
            qid1: 0,
            qid2: 0,
            question1: format!("what is the best way to learn {s} ?"),
            question2: format!("how do i learn {s} ?"),
            is_duplicate: 1,
        })
        .collect();
    let token_lists: Vec<Vec<String>> = pairs
        .iter()
        .flat_map(|p| [tokenize(&p.question1), tokenize(&p.question2)])
        .collect();
    let slices: Vec<&[String]> = token_lists.iter().map(|l| l.as_slice()).collect();
    let vocab = build_vocab(slices, 1, 200);
    let config = TrainConfig {
        d: 12,
        vocab_size: vocab.len(),
        variant: Variant::Edl,
        max_len: 14,
        ..TrainConfig::default()
    };
    let model = ModelParams::init_for(&config, vocab.len(), &mut Rng::new(51));
    let batch = encode_batch(&pairs, &vocab, config.max_len);

    // do the encoder embeddings differ across subjects?
    for i in 0..2 {
        let f = model.encode_sentence(&batch.sources[i]).unwrap();
        println!("f[{i}] first 4: {:?}", &f.data[..4]);
    }

    // gradient norms through one example
    let mut g = Graph::new();
    let vars = ParamVars::register(&mut g, &model);
    let sentence = encode_seq(&mut g, &model, &vars, &batch.sources[0]).unwrap();
    let steps = decode_steps(
        &mut g,
        &model,
        &vars,
        sentence,
        &batch.targets[0],
        DecoderFeed::Teacher,
    )
    .unwrap();
    let gold = &batch.targets[0].content()[1..];
    let loss = losses::local_ce(&mut g, &steps, gold).unwrap();
    println!("loss value: {}", g.value(loss).data[0]);
    g.backward(loss).unwrap();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("|grad f| = {:.3e}", norm(g.grad(sentence).unwrap()));
    println!("|grad enc.w_x| = {:.3e}", norm(g.grad(vars.enc.w_x).unwrap()));
    println!("|grad dec.w_x| = {:.3e}", norm(g.grad(vars.dec.w_x).unwrap()));
    println!("|grad embed| = {:.3e}", norm(g.grad(vars.embed[0]).unwrap()));
    println!("|grad out_w| = {:.3e}", norm(g.grad(vars.out_w).unwrap()));
}

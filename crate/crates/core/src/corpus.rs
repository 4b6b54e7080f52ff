//! Corpus ingestion: paraphrase question pairs, sentiment phrases,
//! vocabulary construction and batch encoding.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::numerics::Rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("requested split of {requested} items but only {available} available (short by {})", requested - available)]
    SplitTooLarge { requested: usize, available: usize },
    #[error("vocabulary file is malformed: {0}")]
    VocabFormat(String),
}

/// One paraphrase-candidate record: two questions and a binary label that
/// marks whether they are paraphrases of each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionPair {
    pub id: u64,
    pub qid1: u64,
    pub qid2: u64,
    pub question1: String,
    pub question2: String,
    pub is_duplicate: u8,
}

/// One sentiment record: a phrase and its 5-way label
/// (0 = very negative .. 4 = very positive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseExample {
    pub phrase_id: u64,
    pub phrase: String,
    pub sentiment: u8,
}

/// Ingestion result: parsed records plus a tally of malformed rows skipped.
#[derive(Debug, Clone)]
pub struct Ingest<T> {
    pub records: Vec<T>,
    pub skipped: usize,
}

const PAIR_HEADER: [&str; 6] = ["id", "qid1", "qid2", "question1", "question2", "is_duplicate"];

fn normalize_text(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reads a tab-separated question-pair file. The header row is required.
/// Malformed rows (wrong column count, unparsable ids, empty question text,
/// labels outside {0,1}) are skipped and counted. With
/// `keep_only_duplicates`, only rows labeled 1 are retained.
pub fn ingest_pairs(
    path: &Path,
    keep_only_duplicates: bool,
) -> Result<Ingest<QuestionPair>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let cols: Vec<String> = header
        .trim_end_matches('\r')
        .split('\t')
        .map(|c| c.trim().to_lowercase())
        .collect();
    if cols != PAIR_HEADER {
        return Err(CorpusError::Header {
            expected: PAIR_HEADER.join("\t"),
            found: header.trim_end_matches('\r').to_string(),
        });
    }

    let mut records = Vec::new();
    let mut skipped = 0;
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = (|| -> Option<QuestionPair> {
            if fields.len() != 6 {
                return None;
            }
            let id = fields[0].trim().parse().ok()?;
            let qid1 = fields[1].trim().parse().ok()?;
            let qid2 = fields[2].trim().parse().ok()?;
            let question1 = normalize_text(fields[3]);
            let question2 = normalize_text(fields[4]);
            if question1.is_empty() || question2.is_empty() {
                return None;
            }
            let is_duplicate: u8 = fields[5].trim().parse().ok()?;
            if is_duplicate > 1 {
                return None;
            }
            Some(QuestionPair {
                id,
                qid1,
                qid2,
                question1,
                question2,
                is_duplicate,
            })
        })();
        match parsed {
            Some(p) => {
                if !keep_only_duplicates || p.is_duplicate == 1 {
                    records.push(p);
                }
            }
            None => skipped += 1,
        }
    }
    Ok(Ingest { records, skipped })
}

/// Reads a tab-separated phrase/sentiment file with columns
/// `phrase_id  phrase  sentiment`. A header row is tolerated and skipped.
pub fn ingest_phrases(path: &Path) -> Result<Ingest<PhraseExample>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = (|| -> Option<PhraseExample> {
            if fields.len() != 3 {
                return None;
            }
            let phrase_id = fields[0].trim().parse().ok()?;
            let phrase = normalize_text(fields[1]);
            if phrase.is_empty() {
                return None;
            }
            let sentiment: u8 = fields[2].trim().parse().ok()?;
            if sentiment > 4 {
                return None;
            }
            Some(PhraseExample {
                phrase_id,
                phrase,
                sentiment,
            })
        })();
        match parsed {
            Some(p) => records.push(p),
            None => {
                if i == 0 {
                    continue; // header row
                }
                skipped += 1;
            }
        }
    }
    Ok(Ingest { records, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Disjoint seeded-shuffle splits of exactly the requested sizes.
pub fn split<T: Clone>(
    items: &[T],
    sizes: SplitSizes,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), CorpusError> {
    let requested = sizes.train + sizes.val + sizes.test;
    if requested > items.len() {
        return Err(CorpusError::SplitTooLarge {
            requested,
            available: items.len(),
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let take = |range: std::ops::Range<usize>| -> Vec<T> {
        order[range].iter().map(|&i| items[i].clone()).collect()
    };
    let train = take(0..sizes.train);
    let val = take(sizes.train..sizes.train + sizes.val);
    let test = take(sizes.train + sizes.val..requested);
    Ok((train, val, test))
}

const PUNCT: [char; 6] = ['.', ',', '?', '!', '\'', '"'];

/// Lowercases, splits on Unicode whitespace, and breaks the punctuation
/// marks `. , ? ! ' "` into their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let mut cur = String::new();
        for ch in chunk.chars() {
            if PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
    }
    tokens
}

pub const PAD_ID: usize = 0;
pub const START_ID: usize = 1;
pub const STOP_ID: usize = 2;
pub const UNK_ID: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<start>", "<stop>", "<unk>"];

/// Bidirectional token map. Ids 0..3 are reserved for PAD, START, STOP
/// and UNK; content tokens start at 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn from_content_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut id_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    /// Total table size, specials included.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the four specials are always present
    }

    /// Id for a token, falling back to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| {
                self.token(i)
                    .unwrap_or(SPECIALS[UNK_ID])
                    .to_string()
            })
            .collect()
    }

    /// One token per line; line number minus one is the id, with the four
    /// specials on the first four lines.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = fs::File::create(path)?;
        for token in &self.id_to_token {
            writeln!(f, "{token}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path)?;
        Vocabulary::from_lines(
            text.lines()
                .map(|l| l.trim_end_matches('\r').to_string())
                .collect::<Vec<_>>(),
        )
    }

    /// Rebuilds a vocabulary from its persisted line form: the four
    /// specials first, then the content tokens in id order.
    pub fn from_lines<I: IntoIterator<Item = String>>(lines: I) -> Result<Self, CorpusError> {
        let lines: Vec<String> = lines.into_iter().collect();
        if lines.len() < SPECIALS.len() {
            return Err(CorpusError::VocabFormat(
                "fewer than four lines; specials missing".into(),
            ));
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if lines[i] != *s {
                return Err(CorpusError::VocabFormat(format!(
                    "line {} should be the special `{s}`, found `{}`",
                    i + 1,
                    lines[i]
                )));
            }
        }
        Ok(Vocabulary::from_content_tokens(
            lines[SPECIALS.len()..].iter().cloned(),
        ))
    }
}

/// Builds a vocabulary from token lists: tokens with frequency at least
/// `min_freq`, most frequent first, ties broken lexicographically, with the
/// total table capped at `max_size` entries (specials included).
pub fn build_vocab<'a, I>(token_lists: I, min_freq: usize, max_size: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a [String]>,
{
    assert!(min_freq >= 1, "min_freq must be at least 1");
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for list in token_lists {
        for token in list {
            if SPECIALS.contains(&token.as_str()) {
                continue;
            }
            *freq.entry(token).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, n)| n >= min_freq).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let budget = max_size.saturating_sub(SPECIALS.len());
    entries.truncate(budget);
    Vocabulary::from_content_tokens(entries.into_iter().map(|(t, _)| t.to_string()))
}

/// A padded id sequence. `length` counts the real (framed) tokens; every
/// position at or beyond it is PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub length: usize,
}

impl TokenSeq {
    /// Ids of the real positions.
    pub fn content(&self) -> &[usize] {
        &self.ids[..self.length]
    }

    /// 1.0 for real positions, 0.0 for PAD.
    pub fn mask(&self) -> Vec<f64> {
        (0..self.ids.len())
            .map(|i| if i < self.length { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Frames a token list as START, tokens, STOP and pads to `max_len`.
/// Content beyond `max_len - 2` is truncated; out-of-vocabulary tokens
/// become UNK.
pub fn frame(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    assert!(max_len >= 2, "max_len must fit START and STOP");
    let keep = tokens.len().min(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(START_ID);
    ids.extend(tokens[..keep].iter().map(|t| vocab.id(t)));
    ids.push(STOP_ID);
    let length = ids.len();
    ids.resize(max_len, PAD_ID);
    TokenSeq { ids, length }
}

/// Tokenizes and frames a raw sentence.
pub fn frame_text(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    frame(&tokenize(text), vocab, max_len)
}

/// A batch of aligned source/target rows padded to one common length.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sources: Vec<TokenSeq>,
    pub targets: Vec<TokenSeq>,
    pub max_len: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Encodes question pairs into a framed, padded batch.
pub fn encode_batch(pairs: &[QuestionPair], vocab: &Vocabulary, max_len: usize) -> Batch {
    let sources = pairs
        .iter()
        .map(|p| frame_text(&p.question1, vocab, max_len))
        .collect();
    let targets = pairs
        .iter()
        .map(|p| frame_text(&p.question2, vocab, max_len))
        .collect();
    Batch {
        sources,
        targets,
        max_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The eight sample rows distributed with the question-pair corpus.
    pub(crate) const SAMPLE_ROWS: &str = "\
id\tqid1\tqid2\tquestion1\tquestion2\tis_duplicate
578\t1154\t1155\tHow do I manage time for studies?\tHow do you manage time between work and study?\t0
591\t1180\t1181\tHow do I be a boyfriend?\tHow does a girl get a boyfriend?\t0
715\t1426\t1427\tHow magnets are made?\tWhat are magnets made of?\t0
603\t1204\t1205\tHow do I find the phenotypic ratio?\tWhat is a phenotype ratio?\t0
592\t1182\t1183\tHow is time travel possible?\tDo you think time travel is possible?\t1
705\t1406\t1407\tHow can I consult a good free online astrologer?\tAre there any good free online astrologers?\t1
726\t1448\t1449\tWhat is the meaning and purpose to life?\tWhat is the exact meaning of life?\t1
755\t1505\t1506\tWhat is the ultimate way to serve humanity?\tHow can one serve humanity?\t1
";

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn sample_rows_filtered_to_duplicates() {
        let f = write_tmp(SAMPLE_ROWS);
        let ingest = ingest_pairs(f.path(), true).unwrap();
        assert_eq!(ingest.skipped, 0);
        let ids: Vec<u64> = ingest.records.iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![592, 705, 726, 755]);
    }

    #[test]
    fn sample_rows_unfiltered_keeps_all() {
        let f = write_tmp(SAMPLE_ROWS);
        let ingest = ingest_pairs(f.path(), false).unwrap();
        assert_eq!(ingest.records.len(), 8);
    }

    #[test]
    fn empty_file_after_header_is_empty_list() {
        let f = write_tmp("id\tqid1\tqid2\tquestion1\tquestion2\tis_duplicate\n");
        let ingest = ingest_pairs(f.path(), true).unwrap();
        assert!(ingest.records.is_empty());
        assert_eq!(ingest.skipped, 0);
    }

    #[test]
    fn out_of_range_label_is_skipped_and_tallied() {
        let f = write_tmp(
            "id\tqid1\tqid2\tquestion1\tquestion2\tis_duplicate\n1\t2\t3\ta?\tb?\t2\n",
        );
        let ingest = ingest_pairs(f.path(), false).unwrap();
        assert!(ingest.records.is_empty());
        assert_eq!(ingest.skipped, 1);
    }

    #[test]
    fn header_mismatch_is_a_format_error() {
        let f = write_tmp("id\tqid1\tqid2\tq1\tq2\tdup\n");
        assert!(matches!(
            ingest_pairs(f.path(), false),
            Err(CorpusError::Header { .. })
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = ingest_pairs(Path::new("/nonexistent/qqp.tsv"), false).unwrap_err();
        assert!(matches!(err, CorpusError::Io(_)));
    }

    #[test]
    fn crlf_lines_are_tolerated() {
        let f = write_tmp(
            "id\tqid1\tqid2\tquestion1\tquestion2\tis_duplicate\r\n1\t2\t3\thello there?\tgeneral greeting?\t1\r\n",
        );
        let ingest = ingest_pairs(f.path(), true).unwrap();
        assert_eq!(ingest.records.len(), 1);
        assert_eq!(ingest.records[0].question2, "general greeting?");
    }

    #[test]
    fn phrase_ingest_reads_three_columns() {
        let f = write_tmp("phrase_id\tphrase\tsentiment\n10\tA comic gem\t4\n11\tdull flick\t0\n12\tbad row\t9\n");
        let ingest = ingest_phrases(f.path()).unwrap();
        assert_eq!(ingest.records.len(), 2);
        assert_eq!(ingest.skipped, 1);
        assert_eq!(ingest.records[0].sentiment, 4);
    }

    #[test]
    fn split_partitions_exhaustively() {
        let items: Vec<u32> = (0..100).collect();
        let (a, b, c) = split(
            &items,
            SplitSizes {
                train: 60,
                val: 20,
                test: 20,
            },
            7,
        )
        .unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (60, 20, 20));
        let mut all: Vec<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
    }

    #[test]
    fn split_is_seed_deterministic_and_seed_sensitive() {
        let items: Vec<u32> = (0..50).collect();
        let sizes = SplitSizes {
            train: 30,
            val: 10,
            test: 10,
        };
        let s1 = split(&items, sizes, 9).unwrap();
        let s2 = split(&items, sizes, 9).unwrap();
        assert_eq!(s1, s2);
        let s3 = split(&items, sizes, 10).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn oversized_split_reports_shortfall() {
        let items: Vec<u32> = (0..100).collect();
        let err = split(
            &items,
            SplitSizes {
                train: 80,
                val: 30,
                test: 20,
            },
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("short by 30"), "{err}");
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("Is college even worth it?"),
            vec!["is", "college", "even", "worth", "it", "?"]
        );
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn vocab_frequency_order_and_threshold() {
        let lists: Vec<Vec<String>> = vec![
            tokenize("a a b"),
        ];
        let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
        let v = build_vocab(slices.iter().copied(), 1, 100);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);

        let v2 = build_vocab(slices.iter().copied(), 3, 100);
        assert_eq!(v2.len(), 4); // specials only
        assert_eq!(v2.id("a"), UNK_ID);
    }

    #[test]
    fn vocab_breaks_frequency_ties_lexicographically() {
        let lists: Vec<Vec<String>> = vec![tokenize("b a b a")];
        let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
        let v = build_vocab(slices, 1, 100);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
    }

    #[test]
    fn framing_rule_start_tokens_stop_pad() {
        let lists: Vec<Vec<String>> = vec![tokenize("a b")];
        let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
        let v = build_vocab(slices, 1, 100);
        let seq = frame_text("a b", &v, 5);
        assert_eq!(seq.ids, vec![START_ID, v.id("a"), v.id("b"), STOP_ID, PAD_ID]);
        assert_eq!(seq.length, 4);
        assert_eq!(seq.mask(), vec![1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn oov_becomes_unk() {
        let lists: Vec<Vec<String>> = vec![tokenize("a b")];
        let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
        let v = build_vocab(slices, 1, 100);
        let seq = frame_text("zzz", &v, 4);
        assert_eq!(seq.ids[1], UNK_ID);
    }

    #[test]
    fn long_sentences_truncate_to_max_len_minus_two() {
        let text = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
        let lists: Vec<Vec<String>> = vec![tokenize(text)];
        let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
        let v = build_vocab(slices, 1, 100);
        let seq = frame_text(text, &v, 5);
        assert_eq!(seq.length, 5);
        assert_eq!(seq.ids[0], START_ID);
        assert_eq!(seq.ids[4], STOP_ID);
        assert_eq!(seq.content().len(), 5); // START + 3 content + STOP
    }

    #[test]
    fn vocab_round_trips_through_file() {
        let lists: Vec<Vec<String>> = vec![tokenize("alpha beta gamma alpha")];
        let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
        let v = build_vocab(slices, 1, 100);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
        assert_eq!(loaded.token(4), Some("alpha"));
    }

    #[test]
    fn vocab_load_rejects_missing_specials() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        fs::write(&path, "alpha\nbeta\n").unwrap();
        assert!(matches!(
            Vocabulary::load(&path),
            Err(CorpusError::VocabFormat(_))
        ));
    }

    #[test]
    fn encode_decode_identity_for_in_vocab_tokens() {
        let lists: Vec<Vec<String>> = vec![tokenize("what is the meaning of life ?")];
        let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
        let v = build_vocab(slices, 1, 100);
        let tokens = tokenize("the meaning of life");
        let ids = v.encode(&tokens);
        assert_eq!(v.decode(&ids), tokens);
    }

    #[test]
    fn ingest_encode_decode_round_trip() {
        let f = write_tmp(SAMPLE_ROWS);
        let ingest = ingest_pairs(f.path(), true).unwrap();
        let token_lists: Vec<Vec<String>> = ingest
            .records
            .iter()
            .flat_map(|p| [tokenize(&p.question1), tokenize(&p.question2)])
            .collect();
        let slices: Vec<&[String]> = token_lists.iter().map(|l| l.as_slice()).collect();
        let vocab = build_vocab(slices, 1, 1000);
        let max_len = 16;
        let batch = encode_batch(&ingest.records, &vocab, max_len);
        for (row, pair) in batch.targets.iter().zip(&ingest.records) {
            let expect = tokenize(&pair.question2);
            let keep = expect.len().min(max_len - 2);
            let decoded = vocab.decode(&row.content()[1..row.length - 1]);
            assert_eq!(decoded, expect[..keep]);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tokenize_is_idempotent_under_rejoin(text in ".{0,80}") {
                let once = tokenize(&text);
                let again = tokenize(&once.join(" "));
                prop_assert_eq!(once, again);
            }

            #[test]
            fn splits_are_disjoint_and_reproducible(
                n in 3usize..40,
                seed in 0u64..1000,
            ) {
                let items: Vec<usize> = (0..n).collect();
                let sizes = SplitSizes { train: n / 2, val: n / 4, test: n - n / 2 - n / 4 };
                let (a, b, c) = split(&items, sizes, seed).unwrap();
                let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
                all.sort_unstable();
                all.dedup();
                prop_assert_eq!(all.len(), n);
                let rerun = split(&items, sizes, seed).unwrap();
                prop_assert_eq!((a, b, c), rerun);
            }

            #[test]
            fn frame_pads_only_beyond_length(words in proptest::collection::vec("[a-z]{1,6}", 0..12)) {
                let lists: Vec<Vec<String>> = vec![words.clone()];
                let slices: Vec<&[String]> = lists.iter().map(|l| l.as_slice()).collect();
                let v = build_vocab(slices, 1, 500);
                let seq = frame(&words, &v, 14);
                for (i, &id) in seq.ids.iter().enumerate() {
                    if i >= seq.length {
                        prop_assert_eq!(id, PAD_ID);
                    }
                }
                let mask = seq.mask();
                for (i, &m) in mask.iter().enumerate() {
                    prop_assert_eq!(m, if i < seq.length { 1.0 } else { 0.0 });
                }
            }
        }
    }
}

//! Tokenizer and batch-stream properties.

use frailt::data::{window_count, BatchStream, Corpus};
use frailt::tokenizer::{train_bpe, Vocab, DEFAULT_VOCAB_SIZE};
use proptest::prelude::*;

fn trained_vocab() -> &'static Vocab {
    static VOCAB: std::sync::OnceLock<Vocab> = std::sync::OnceLock::new();
    VOCAB.get_or_init(|| {
        let corpus = Corpus::bundled_mini(0.05);
        train_bpe(corpus.train_stories(), DEFAULT_VOCAB_SIZE)
            .unwrap()
            .vocab
    })
}

#[test]
fn bundled_corpus_trains_to_full_vocab() {
    let vocab = trained_vocab();
    assert_eq!(vocab.size(), DEFAULT_VOCAB_SIZE);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Byte-level base tokens make every byte string round-trip losslessly.
    #[test]
    fn arbitrary_bytes_roundtrip(data in prop::collection::vec(any::<u8>(), 0..200)) {
        let vocab = trained_vocab();
        let ids = vocab.encode_bytes(&data);
        prop_assert_eq!(vocab.decode_bytes(&ids).unwrap(), data);
    }

    /// Arbitrary UTF-8 strings round-trip through the text API.
    #[test]
    fn arbitrary_strings_roundtrip(text in ".{0,120}") {
        let vocab = trained_vocab();
        let ids = vocab.encode(&text);
        prop_assert_eq!(vocab.decode(&ids).unwrap(), text);
    }

    /// Every produced id is in range and the vocab never exceeds the target.
    #[test]
    fn ids_stay_in_vocab(text in "[a-zA-Z ,.!?']{0,200}") {
        let vocab = trained_vocab();
        prop_assert!(vocab.size() <= DEFAULT_VOCAB_SIZE);
        for id in vocab.encode(&text) {
            prop_assert!((id as usize) < vocab.size());
        }
    }

    /// The batch stream is a pure function of (tokens, context, batch, seed).
    #[test]
    fn batch_stream_is_pure(
        seed in any::<u64>(),
        len in 64usize..512,
        ctx in 4usize..16,
        n_batches in 1usize..12,
    ) {
        let tokens: Vec<u32> = (0..len as u32).map(|i| i % 61).collect();
        if window_count(len, ctx) < 2 {
            return Ok(());
        }
        let mut a = BatchStream::new(tokens.clone(), ctx, 2, seed).unwrap();
        let mut b = BatchStream::new(tokens, ctx, 2, seed).unwrap();
        for _ in 0..n_batches {
            let batch_a = a.next_batch();
            prop_assert_eq!(batch_a.digest(), b.next_batch().digest());
            for (inp, tgt) in batch_a.inputs.iter().zip(&batch_a.targets) {
                prop_assert_eq!(&inp[1..], &tgt[..ctx - 1]);
            }
        }
    }
}

use immsbm::corpus::{read_messages, read_sequences, MessageRecord};
use immsbm::dataset::{read_triplets, write_triplets, TripletCounts};
use immsbm::modelfile::{from_json, to_json, AnyModel};
use immsbm::synthetic::{ground_truth, GeneratorSpec};
use immsbm::{TripletDataset, Vocabulary};
use proptest::prelude::*;

fn label() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_ .:/-]{1,8}"
}

proptest! {
    #[test]
    fn triplet_tsv_round_trip(
        ins in prop::collection::btree_set(label(), 1..6),
        outs in prop::collection::btree_set(label(), 1..5),
        raw in prop::collection::vec((0usize..6, 0usize..6, 0usize..5, 1u64..100), 0..30),
    ) {
        let ins: Vec<String> = ins.into_iter().collect();
        let outs: Vec<String> = outs.into_iter().collect();
        let vocab = Vocabulary::from_labels(ins.clone(), outs.clone()).unwrap();
        let mut counts = TripletCounts::new();
        for (i, j, x, c) in raw {
            let (i, j, x) = (i % ins.len(), j % ins.len(), x % outs.len());
            *counts.entry((i, j, x)).or_insert(0) += c;
            if i != j {
                *counts.entry((j, i, x)).or_insert(0) += c;
            }
        }
        let data = TripletDataset::from_counts(vocab, counts).unwrap();
        let mut buf = Vec::new();
        write_triplets(&data, &mut buf).unwrap();
        let (back, stats) = read_triplets(buf.as_slice()).unwrap();
        prop_assert_eq!(stats.symmetrized, 0);
        prop_assert_eq!(back, data);
    }

    #[test]
    fn triplet_reader_never_panics(text in "[a-z0-9\t\n#!.-]{0,200}") {
        let _ = read_triplets(text.as_bytes());
    }

    #[test]
    fn message_reader_never_panics(text in ".{0,200}") {
        let _ = read_messages(text.as_bytes());
        let _ = read_sequences(text.as_bytes());
        let _ = from_json(&text);
    }

    #[test]
    fn messages_round_trip(
        records in prop::collection::vec(
            (prop::collection::vec(label(), 1..4), prop::collection::vec(label(), 1..3)), 1..6),
    ) {
        let records: Vec<MessageRecord> = records
            .into_iter()
            .map(|(i, o)| MessageRecord::new(i, o).unwrap())
            .collect();
        let text: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        prop_assert_eq!(read_messages(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn model_json_round_trip(n_in in 1usize..6, n_out in 1usize..5, t in 1usize..4, seed in any::<u64>()) {
        let model = AnyModel::from(ground_truth(&GeneratorSpec::new(n_in, n_out, t, 1, seed)).unwrap());
        let text = to_json(&model).unwrap();
        prop_assert_eq!(from_json(&text).unwrap(), model);
    }
}

//! Turning message/answer records into triplet datasets.
//!
//! A message's input entities are expanded into every unordered pair,
//! self-pairs included, and each pair is linked to every output of the answer.

use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{TripletCounts, TripletDataset};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

/// A message (interacting inputs) and the answer it produced (outputs).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl MessageRecord {
    pub fn new(inputs: Vec<String>, outputs: Vec<String>) -> Result<Self> {
        let record = Self { inputs, outputs };
        record.validate()?;
        Ok(record)
    }

    fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::InvalidArgument("message has no inputs".into()));
        }
        if self.outputs.is_empty() {
            return Err(Error::InvalidArgument("message has no outputs".into()));
        }
        Ok(())
    }
}

/// Weight given to a self-pair `(a, a)` relative to one ordered cross pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelfPairWeight {
    /// Every unordered pair `{a, b}` contributes two ordered triplets; the self
    /// pair `{a, a}` therefore lands on `(a, a)` with weight 2.
    #[default]
    Double,
    /// Plain Cartesian square of the inputs: `(a, a)` with weight 1.
    Single,
}

#[derive(Debug, Clone, Copy)]
pub enum VocabPolicy<'a> {
    /// Build a fresh vocabulary in first-seen order.
    Build,
    /// Use an existing vocabulary; unknown labels are an error.
    Reuse(&'a Vocabulary),
}

/// Builds a vocabulary from records in first-seen order.
pub fn build_vocabulary<'r>(records: impl IntoIterator<Item = &'r MessageRecord>) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for r in records {
        for l in &r.inputs {
            vocab.inputs.intern(l);
        }
        for l in &r.outputs {
            vocab.outputs.intern(l);
        }
    }
    vocab
}

fn accumulate(
    counts: &mut TripletCounts,
    inputs: &[usize],
    outputs: &[usize],
    self_weight: SelfPairWeight,
) {
    let diagonal = match self_weight {
        SelfPairWeight::Double => 2,
        SelfPairWeight::Single => 1,
    };
    for &x in outputs {
        for (p, &a) in inputs.iter().enumerate() {
            *counts.entry((a, a, x)).or_insert(0) += diagonal;
            for &b in &inputs[p + 1..] {
                *counts.entry((a, b, x)).or_insert(0) += 1;
                *counts.entry((b, a, x)).or_insert(0) += 1;
            }
        }
    }
}

/// Expands records into a symmetry-closed triplet dataset.
///
/// Repeated entities inside one message are not deduplicated: every position
/// takes part in the pairing and counts add up.
pub fn expand_messages(
    records: &[MessageRecord],
    policy: VocabPolicy<'_>,
    self_weight: SelfPairWeight,
) -> Result<TripletDataset> {
    if records.is_empty() {
        return Err(Error::Empty("no message records".into()));
    }
    let built;
    let vocab = match policy {
        VocabPolicy::Build => {
            built = build_vocabulary(records);
            &built
        }
        VocabPolicy::Reuse(v) => v,
    };
    let mut counts = TripletCounts::new();
    let mut ins = Vec::new();
    let mut outs = Vec::new();
    for record in records {
        record.validate()?;
        ins.clear();
        outs.clear();
        for l in &record.inputs {
            ins.push(vocab.input_id(l)?);
        }
        for l in &record.outputs {
            outs.push(vocab.output_id(l)?);
        }
        accumulate(&mut counts, &ins, &outs, self_weight);
    }
    TripletDataset::from_counts(vocab.clone(), counts)
}

/// Slides a window over an ordered sequence: the `window` items are the
/// inputs, the item right after them is the single output.
pub fn expand_windows<S: AsRef<str>>(sequence: &[S], window: usize) -> Result<Vec<MessageRecord>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    if sequence.len() <= window {
        return Ok(Vec::new());
    }
    Ok((0..sequence.len() - window)
        .map(|start| MessageRecord {
            inputs: sequence[start..start + window]
                .iter()
                .map(|s| s.as_ref().to_owned())
                .collect(),
            outputs: vec![sequence[start + window].as_ref().to_owned()],
        })
        .collect())
}

/// Message-level train/test partition as index lists into `records`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Randomly assigns `round(n * test_fraction)` records (at least one, at most
/// `n - 1`) to the test side.
pub fn split_indices(n_records: usize, test_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n_records < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 records to split, got {n_records}"
        )));
    }
    let n_test = ((n_records as f64 * test_fraction).round() as usize).clamp(1, n_records - 1);
    let mut order: Vec<usize> = (0..n_records).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Splits records into train and test datasets that share one vocabulary
/// built from the full corpus.
pub fn split(
    records: &[MessageRecord],
    test_fraction: f64,
    seed: u64,
    self_weight: SelfPairWeight,
) -> Result<(TripletDataset, TripletDataset)> {
    let idx = split_indices(records.len(), test_fraction, seed)?;
    let vocab = build_vocabulary(records);
    let side =
        |ids: &[usize]| -> Vec<MessageRecord> { ids.iter().map(|&k| records[k].clone()).collect() };
    let train = expand_messages(&side(&idx.train), VocabPolicy::Reuse(&vocab), self_weight)?;
    let test = expand_messages(&side(&idx.test), VocabPolicy::Reuse(&vocab), self_weight)?;
    Ok((train, test))
}

fn read_json_lines<R: BufRead, T: serde::de::DeserializeOwned>(
    reader: R,
    mut check: impl FnMut(&T, usize) -> Result<()>,
) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::parse(lineno, "invalid UTF-8"),
            _ => Error::Io(e),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T =
            serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        check(&item, lineno)?;
        items.push(item);
    }
    Ok(items)
}

/// Reads one `{"inputs":[...],"outputs":[...]}` object per line.
pub fn read_messages<R: BufRead>(reader: R) -> Result<Vec<MessageRecord>> {
    read_json_lines(reader, |r: &MessageRecord, line| {
        r.validate().map_err(|e| Error::parse(line, e.to_string()))
    })
}

pub fn load_messages(path: impl AsRef<Path>) -> Result<Vec<MessageRecord>> {
    let file = std::fs::File::open(path)?;
    read_messages(std::io::BufReader::new(file))
}

/// Reads one JSON array of labels per line (an ordered sequence, e.g. a playlist).
pub fn read_sequences<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    read_json_lines(reader, |_: &Vec<String>, _| Ok(()))
}

pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let file = std::fs::File::open(path)?;
    read_sequences(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(inputs: &[&str], outputs: &[&str]) -> MessageRecord {
        MessageRecord::new(
            inputs.iter().map(|s| s.to_string()).collect(),
            outputs.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    fn count(d: &TripletDataset, i: &str, j: &str, x: &str) -> u64 {
        let v = d.vocab();
        d.count(
            v.input_id(i).unwrap(),
            v.input_id(j).unwrap(),
            v.output_id(x).unwrap(),
        )
    }

    #[test]
    fn two_inputs_one_output() {
        let d = expand_messages(
            &[rec(&["A", "B"], &["D"])],
            VocabPolicy::Build,
            SelfPairWeight::Double,
        )
        .unwrap();
        assert_eq!(count(&d, "A", "A", "D"), 2);
        assert_eq!(count(&d, "B", "B", "D"), 2);
        assert_eq!(count(&d, "A", "B", "D"), 1);
        assert_eq!(count(&d, "B", "A", "D"), 1);
        assert_eq!(d.n_unique(), 4);
        assert_eq!(d.total_weight(), 6);
    }

    #[test]
    fn single_input_two_outputs() {
        let d = expand_messages(
            &[rec(&["A"], &["D", "E"])],
            VocabPolicy::Build,
            SelfPairWeight::Double,
        )
        .unwrap();
        assert_eq!(count(&d, "A", "A", "D"), 2);
        assert_eq!(count(&d, "A", "A", "E"), 2);
        assert_eq!(d.n_unique(), 2);
    }

    #[test]
    fn identical_messages_double_counts() {
        let one = expand_messages(
            &[rec(&["A", "B", "C"], &["D"])],
            VocabPolicy::Build,
            SelfPairWeight::Double,
        )
        .unwrap();
        let r = rec(&["A", "B", "C"], &["D"]);
        let two =
            expand_messages(&[r.clone(), r], VocabPolicy::Build, SelfPairWeight::Double).unwrap();
        for t in one.triplets() {
            assert_eq!(two.count(t.i, t.j, t.x), 2 * t.count);
        }
        assert_eq!(two.n_unique(), one.n_unique());
    }

    #[test]
    fn cartesian_square_convention() {
        let d = expand_messages(
            &[rec(&["A", "B"], &["D"])],
            VocabPolicy::Build,
            SelfPairWeight::Single,
        )
        .unwrap();
        assert_eq!(count(&d, "A", "A", "D"), 1);
        assert_eq!(count(&d, "A", "B", "D"), 1);
        assert_eq!(d.total_weight(), 4);
    }

    #[test]
    fn repeated_entity_is_aggregated() {
        let d = expand_messages(
            &[rec(&["A", "A"], &["D"])],
            VocabPolicy::Build,
            SelfPairWeight::Double,
        )
        .unwrap();
        // two self-pairs at weight 2 plus the cross pair of the two positions
        assert_eq!(count(&d, "A", "A", "D"), 6);
    }

    #[test]
    fn reuse_rejects_unknown_label() {
        let vocab = Vocabulary::from_labels(vec!["A".into()], vec!["D".into()]).unwrap();
        let err = expand_messages(
            &[rec(&["A", "Z"], &["D"])],
            VocabPolicy::Reuse(&vocab),
            SelfPairWeight::Double,
        )
        .unwrap_err();
        match err {
            Error::UnknownLabel { label, .. } => assert_eq!(label, "Z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_records_rejected() {
        assert!(matches!(
            expand_messages(&[], VocabPolicy::Build, SelfPairWeight::Double),
            Err(Error::Empty(_))
        ));
        assert!(MessageRecord::new(vec![], vec!["x".into()]).is_err());
        assert!(MessageRecord::new(vec!["a".into()], vec![]).is_err());
    }

    #[test]
    fn windows() {
        let seq = ["s1", "s2", "s3", "s4", "s5"];
        let recs = expand_windows(&seq, 4).unwrap();
        assert_eq!(recs, vec![rec(&["s1", "s2", "s3", "s4"], &["s5"])]);
        assert_eq!(
            expand_windows(&["s1", "s2"], 1).unwrap(),
            vec![rec(&["s1"], &["s2"])]
        );
        assert_eq!(
            expand_windows(&["s1", "s2", "s3", "s4", "s5", "s6"], 4)
                .unwrap()
                .len(),
            2
        );
        assert!(expand_windows(&["s1", "s2"], 2).unwrap().is_empty());
        assert!(expand_windows(&["s1", "s2"], 0).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let idx = split_indices(100, 0.10, 7).unwrap();
        assert_eq!((idx.train.len(), idx.test.len()), (90, 10));
        assert_eq!(split_indices(100, 0.10, 7).unwrap(), idx);
        let idx = split_indices(2, 0.5, 1).unwrap();
        assert_eq!((idx.train.len(), idx.test.len()), (1, 1));
    }

    #[test]
    fn split_rejects_bad_arguments() {
        assert!(split_indices(1, 0.5, 0).is_err());
        assert!(split_indices(10, 0.0, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
        assert!(split_indices(10, f64::NAN, 0).is_err());
    }

    #[test]
    fn split_datasets_share_vocabulary() {
        let records: Vec<_> = (0..20)
            .map(|k| rec(&[&format!("s{k}"), "common"], &[&format!("d{}", k % 3)]))
            .collect();
        let (train, test) = split(&records, 0.25, 3, SelfPairWeight::Double).unwrap();
        assert_eq!(train.vocab(), test.vocab());
        assert_eq!(train.vocab().n_inputs(), 21);
        assert!(train.is_symmetric() && test.is_symmetric());
    }

    #[test]
    fn message_lines() {
        let text = "{\"inputs\":[\"a\",\"b\"],\"outputs\":[\"x\"]}\n\n{\"inputs\":[\"c\"],\"outputs\":[\"y\",\"z\"]}\n";
        let recs = read_messages(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        let bad = "{\"inputs\":[\"a\"],\"outputs\":[\"x\"]}\n{\"inputs\":[],\"outputs\":[\"x\"]}\n";
        match read_messages(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let seqs = read_sequences("[\"a\",\"b\",\"c\"]\n".as_bytes()).unwrap();
        assert_eq!(seqs, vec![vec!["a".to_string(), "b".into(), "c".into()]]);
    }
}

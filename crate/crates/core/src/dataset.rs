//! Aggregated, symmetry-closed triplet counts and their TSV representation.
//!
//! The file format is one row per unique triplet:
//!
//! ```text
//! i_label<TAB>j_label<TAB>x_label<TAB>count
//! ```
//!
//! Lines starting with `#` are comments. Two structured comments, `#!inputs` and
//! `#!outputs` followed by tab-separated labels, pin the vocabulary order so
//! that entities with no triplet (test-only entities in a training file, say)
//! keep their ids across a save/load cycle. Readers that ignore comments still
//! see a plain four-column TSV.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::{LabelSpace, Vocabulary};

const INPUTS_HEADER: &str = "#!inputs";
const OUTPUTS_HEADER: &str = "#!outputs";

/// One unique observation `(i, j, x)` with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub x: usize,
    pub count: u64,
}

pub type TripletCounts = BTreeMap<(usize, usize, usize), u64>;

/// Unique triplets sorted by `(i, j, x)`, closed under `i <-> j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletDataset {
    vocab: Vocabulary,
    triplets: Vec<Triplet>,
    total_weight: u64,
}

impl TripletDataset {
    /// Builds a dataset from aggregated counts, rejecting asymmetric input.
    pub fn from_counts(vocab: Vocabulary, counts: TripletCounts) -> Result<Self> {
        for (&(i, j, x), &c) in &counts {
            if counts.get(&(j, i, x)) != Some(&c) {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i},{j},{x}) has count {c} but its mirror has {:?}",
                    counts.get(&(j, i, x))
                )));
            }
        }
        Self::build(vocab, counts)
    }

    /// Builds a dataset, raising every asymmetric count to the maximum of the
    /// pair `(i,j,x)`, `(j,i,x)`. Returns the number of entries that changed.
    pub fn from_counts_closing(
        vocab: Vocabulary,
        mut counts: TripletCounts,
    ) -> Result<(Self, usize)> {
        let mut fixes = Vec::new();
        for (&(i, j, x), &c) in &counts {
            if i == j {
                continue;
            }
            let mirror = counts.get(&(j, i, x)).copied().unwrap_or(0);
            if mirror < c {
                fixes.push(((j, i, x), c));
            }
        }
        let closed = fixes.len();
        for (key, c) in fixes {
            counts.insert(key, c);
        }
        Ok((Self::build(vocab, counts)?, closed))
    }

    fn build(vocab: Vocabulary, counts: TripletCounts) -> Result<Self> {
        let (n_in, n_out) = (vocab.n_inputs(), vocab.n_outputs());
        let mut total_weight: u64 = 0;
        let mut triplets = Vec::with_capacity(counts.len());
        for ((i, j, x), count) in counts {
            if i >= n_in || j >= n_in || x >= n_out {
                return Err(Error::OutOfRange(format!(
                    "triplet ({i},{j},{x}) outside vocabulary {n_in}x{n_in}x{n_out}"
                )));
            }
            if count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i},{j},{x}) has count 0"
                )));
            }
            total_weight = total_weight
                .checked_add(count)
                .ok_or_else(|| Error::Numeric("total triplet weight overflows u64".into()))?;
            triplets.push(Triplet { i, j, x, count });
        }
        Ok(Self {
            vocab,
            triplets,
            total_weight,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    /// Sum of counts, i.e. the number of observations with multiplicity.
    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn n_unique(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn count(&self, i: usize, j: usize, x: usize) -> u64 {
        self.triplets
            .binary_search_by(|t| (t.i, t.j, t.x).cmp(&(i, j, x)))
            .map(|pos| self.triplets[pos].count)
            .unwrap_or(0)
    }

    /// `n_m`: total weight of triplets whose first input is `m`.
    pub fn input_exposure(&self) -> Vec<u64> {
        let mut n = vec![0u64; self.vocab.n_inputs()];
        for t in &self.triplets {
            n[t.i] += t.count;
        }
        n
    }

    /// Output marginal counts over all triplets.
    pub fn output_counts(&self) -> Vec<u64> {
        let mut n = vec![0u64; self.vocab.n_outputs()];
        for t in &self.triplets {
            n[t.x] += t.count;
        }
        n
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets
            .iter()
            .all(|t| self.count(t.j, t.i, t.x) == t.count)
    }

    pub fn counts(&self) -> TripletCounts {
        self.triplets
            .iter()
            .map(|t| ((t.i, t.j, t.x), t.count))
            .collect()
    }

    /// Re-indexes this dataset into `target`'s vocabulary by label. Triplets
    /// naming a label absent from `target` are dropped and tallied.
    pub fn remap_to(&self, target: &Vocabulary) -> Result<(TripletDataset, RemapStats)> {
        let in_map: Vec<Option<usize>> = self
            .vocab
            .inputs
            .labels()
            .iter()
            .map(|l| target.inputs.id(l))
            .collect();
        let out_map: Vec<Option<usize>> = self
            .vocab
            .outputs
            .labels()
            .iter()
            .map(|l| target.outputs.id(l))
            .collect();
        let mut stats = RemapStats::default();
        let mut counts = TripletCounts::new();
        for t in &self.triplets {
            match (in_map[t.i], in_map[t.j], out_map[t.x]) {
                (Some(i), Some(j), Some(x)) => {
                    *counts.entry((i, j, x)).or_insert(0) += t.count;
                }
                (Some(_), Some(_), None) => {
                    stats.dropped_unknown_output += t.count;
                }
                _ => stats.dropped_unknown_input += t.count,
            }
        }
        Ok((Self::from_counts(target.clone(), counts)?, stats))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RemapStats {
    pub dropped_unknown_input: u64,
    pub dropped_unknown_output: u64,
}

/// Outcome counters from reading a triplet file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub rows: usize,
    /// Entries whose mirror was missing or smaller and had to be raised.
    pub symmetrized: usize,
}

fn check_label(label: &str, line: usize) -> Result<()> {
    if label.is_empty() {
        return Err(Error::parse(line, "empty label"));
    }
    Ok(())
}

/// Parses triplet TSV from any buffered reader.
pub fn read_triplets<R: BufRead>(reader: R) -> Result<(TripletDataset, LoadStats)> {
    let mut inputs = LabelSpace::new();
    let mut outputs = LabelSpace::new();
    let mut counts = TripletCounts::new();
    let mut stats = LoadStats::default();
    let mut seen_rows = false;

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::parse(lineno, "invalid UTF-8"),
            _ => Error::Io(e),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let mut fields = line.split('\t');
            let space = match fields.next().unwrap_or_default() {
                INPUTS_HEADER => Some(&mut inputs),
                OUTPUTS_HEADER => Some(&mut outputs),
                _ => None,
            };
            if let Some(space) = space {
                if seen_rows {
                    return Err(Error::parse(lineno, "vocabulary header after data rows"));
                }
                for label in fields {
                    check_label(label, lineno)?;
                    if space.id(label).is_some() {
                        return Err(Error::parse(
                            lineno,
                            format!("duplicate label `{label}` in header"),
                        ));
                    }
                    space.intern(label);
                }
            }
            continue;
        }
        seen_rows = true;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        for label in &fields[..3] {
            check_label(label, lineno)?;
        }
        let count: u64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid count `{}`", fields[3])))?;
        if count == 0 {
            return Err(Error::parse(lineno, "count must be positive"));
        }
        let key = (
            inputs.intern(fields[0]),
            inputs.intern(fields[1]),
            outputs.intern(fields[2]),
        );
        let slot = counts.entry(key).or_insert(0);
        *slot = slot
            .checked_add(count)
            .ok_or_else(|| Error::parse(lineno, "count overflow"))?;
        stats.rows += 1;
    }

    let vocab = Vocabulary { inputs, outputs };
    let (dataset, symmetrized) = TripletDataset::from_counts_closing(vocab, counts)?;
    stats.symmetrized = symmetrized;
    if symmetrized > 0 {
        log::warn!("triplet file was asymmetric: closed {symmetrized} entries");
    }
    Ok((dataset, stats))
}

pub fn load_triplets(path: impl AsRef<Path>) -> Result<(TripletDataset, LoadStats)> {
    let file = File::open(path.as_ref())?;
    read_triplets(BufReader::new(file))
}

fn check_writable(label: &str) -> Result<()> {
    if label.is_empty() || label.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidArgument(format!(
            "label {label:?} cannot be written to a TSV row"
        )));
    }
    Ok(())
}

/// Writes the dataset, vocabulary header included, in `(i, j, x)` order.
pub fn write_triplets<W: Write>(dataset: &TripletDataset, mut out: W) -> Result<()> {
    let vocab = dataset.vocab();
    for (tag, space) in [
        (INPUTS_HEADER, &vocab.inputs),
        (OUTPUTS_HEADER, &vocab.outputs),
    ] {
        out.write_all(tag.as_bytes())?;
        for label in space.labels() {
            check_writable(label)?;
            write!(out, "\t{label}")?;
        }
        out.write_all(b"\n")?;
    }
    for t in dataset.triplets() {
        let (i, j, x) = (
            &vocab.inputs.labels()[t.i],
            &vocab.inputs.labels()[t.j],
            &vocab.outputs.labels()[t.x],
        );
        if i.starts_with('#') {
            return Err(Error::InvalidArgument(format!(
                "label {i:?} would be read back as a comment"
            )));
        }
        writeln!(out, "{i}\t{j}\t{x}\t{}", t.count)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_triplets(dataset: &TripletDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_triplets(dataset, &mut buf)?;
    crate::io::write_atomic(path.as_ref(), &buf)
}

//! Reading and writing of embedding matrices and gold dictionaries in the
//! word2vec/fastText text dialect.
//!
//! Embedding files carry an optional `<count> <dim>` header followed by one
//! `token v1 .. vd` line per word in descending frequency order. Headerless
//! files are accepted by sniffing the first line; the dimension is then
//! inferred from it. The vector is always the last `d` fields of a line and
//! the token is everything before them, so tokens with unusual bytes survive.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;

/// A vocabulary plus its m x d embedding matrix. Immutable after
/// construction; rows are stored in file (frequency) order.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl EmbeddingSpace {
    pub fn new(words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        let (m, d) = vectors.dim();
        if m == 0 || d == 0 || words.is_empty() {
            return Err(Error::EmptySpace);
        }
        if words.len() != m {
            return Err(Error::DimensionMismatch {
                expected: words.len(),
                found: m,
            });
        }
        if let Some(v) = vectors.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry {v} in embedding matrix"
            )));
        }
        let mut index = HashMap::with_capacity(m);
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateWord(w.clone()));
            }
        }
        Ok(EmbeddingSpace {
            words,
            index,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    /// Same vocabulary with a replacement matrix of identical shape.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: vectors.nrows(),
            });
        }
        EmbeddingSpace::new(self.words.clone(), vectors)
    }

    /// The sub-space of the first `min(c, m)` most frequent words.
    pub fn head(&self, c: usize) -> Self {
        let c = c.min(self.len()).max(1);
        let words = self.words[..c].to_vec();
        let vectors = self.vectors.slice(ndarray::s![..c, ..]).to_owned();
        EmbeddingSpace::new(words, vectors).expect("head of a valid space is valid")
    }

    /// Rows divided by their Euclidean norms (plain length normalization,
    /// not the full normalization chain).
    pub fn unit_normalized(&self) -> Result<Self> {
        let mut m = self.vectors.clone();
        linalg::unit_rows(&mut m)?;
        self.with_vectors(m)
    }
}

/// Side information from [`load_embeddings`].
#[derive(Debug, Default, Clone, Copy)]
pub struct LoadStats {
    /// Tokens dropped because an earlier row already used them.
    pub duplicates_dropped: usize,
}

enum Header {
    Present { count: usize, dim: usize },
    Absent { dim: usize },
}

fn sniff_header(first_line: &str, path: &Path) -> Result<Header> {
    let fields: Vec<&str> = first_line.split_whitespace().collect();
    if fields.len() == 2 {
        if let (Ok(count), Ok(dim)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
            if count == 0 || dim == 0 {
                return Err(Error::MalformedHeader {
                    path: path.to_path_buf(),
                    reason: format!("count and dim must be positive, got {count} {dim}"),
                });
            }
            return Ok(Header::Present { count, dim });
        }
    }
    if fields.len() >= 2 {
        return Ok(Header::Absent {
            dim: fields.len() - 1,
        });
    }
    Err(Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: "first line is neither a `<count> <dim>` header nor a data row".into(),
    })
}

/// Byte ranges of whitespace-separated fields.
fn field_ranges(line: &str) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                ranges.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        ranges.push((s, line.len()));
    }
    ranges
}

fn parse_row(line: &str, dim: usize, path: &Path, line_no: usize) -> Result<(String, Vec<f64>)> {
    let ranges = field_ranges(line);
    if ranges.len() < dim + 1 {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("expected a token plus {dim} values, found {} fields", ranges.len()),
        });
    }
    let first_value = ranges.len() - dim;
    let token_end = ranges[first_value - 1].1;
    let token = line[ranges[0].0..token_end].to_string();
    let mut values = Vec::with_capacity(dim);
    for &(s, e) in &ranges[first_value..] {
        let v: f64 = line[s..e].parse().map_err(|_| Error::MalformedRow {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("cannot parse {:?} as a number", &line[s..e]),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        values.push(v);
    }
    Ok((token, values))
}

/// Load the first `min(count, max_vocab)` rows of an embedding file.
///
/// Duplicate tokens after the first occurrence are dropped and counted in
/// the returned [`LoadStats`].
pub fn load_embeddings(
    path: impl AsRef<Path>,
    max_vocab: usize,
    expected_dim: Option<usize>,
) -> Result<(EmbeddingSpace, LoadStats)> {
    let path = path.as_ref();
    if max_vocab == 0 {
        return Err(Error::InvalidArgument("max_vocab must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut first_line = String::new();
    reader
        .read_line(&mut first_line)
        .map_err(|e| Error::io(path, e))?;
    let header = sniff_header(first_line.trim_end_matches(['\n', '\r']), path)?;

    let (dim, limit, mut pending_first_row) = match header {
        Header::Present { count, dim } => (dim, count.min(max_vocab), None),
        Header::Absent { dim } => (dim, max_vocab, Some(first_line)),
    };
    if let Some(e) = expected_dim {
        if e != dim {
            return Err(Error::DimensionMismatch {
                expected: e,
                found: dim,
            });
        }
    }

    let mut words: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut data: Vec<f64> = Vec::new();
    let mut stats = LoadStats::default();
    let mut line_no = if pending_first_row.is_some() { 0 } else { 1 };

    let mut buf = String::new();
    loop {
        if words.len() >= limit {
            break;
        }
        let line = match pending_first_row.take() {
            Some(l) => l,
            None => {
                buf.clear();
                let n = reader.read_line(&mut buf).map_err(|e| Error::io(path, e))?;
                if n == 0 {
                    break;
                }
                buf.clone()
            }
        };
        line_no += 1;
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.trim().is_empty() {
            continue;
        }
        let (token, values) = parse_row(trimmed, dim, path, line_no)?;
        if !seen.insert(token.clone()) {
            stats.duplicates_dropped += 1;
            continue;
        }
        words.push(token);
        data.extend_from_slice(&values);
    }

    if words.is_empty() {
        return Err(Error::EmptySpace);
    }
    let m = words.len();
    let vectors = Array2::from_shape_vec((m, dim), data)
        .expect("row count and data length are consistent by construction");
    Ok((EmbeddingSpace::new(words, vectors)?, stats))
}

/// Write a space in the headered text format. Values are printed with six
/// decimals, so a save/load round trip reproduces vectors within 1e-6.
pub fn save_embeddings(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(w, "{} {}", space.len(), space.dim()).map_err(io_err)?;
    let mut line = String::new();
    for i in 0..space.len() {
        line.clear();
        line.push_str(space.word(i));
        for v in space.row(i) {
            line.push_str(&format!(" {v:.6}"));
        }
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Gold translation pairs resolved against a trimmed source and target
/// vocabulary. Source words that cannot be used are counted, not scored.
#[derive(Debug, Clone)]
pub struct GoldDictionary {
    entries: BTreeMap<usize, BTreeSet<usize>>,
    skipped_oov: usize,
}

impl GoldDictionary {
    pub fn from_entries(
        entries: BTreeMap<usize, BTreeSet<usize>>,
        skipped_oov: usize,
        src_size: usize,
        tgt_size: usize,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::NoUsableEntries);
        }
        for (&s, targets) in &entries {
            if s >= src_size {
                return Err(Error::IndexOutOfRange {
                    index: s,
                    size: src_size,
                });
            }
            if targets.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "source index {s} has an empty target set"
                )));
            }
            for &t in targets {
                if t >= tgt_size {
                    return Err(Error::IndexOutOfRange {
                        index: t,
                        size: tgt_size,
                    });
                }
            }
        }
        Ok(GoldDictionary {
            entries,
            skipped_oov,
        })
    }

    pub fn entries(&self) -> &BTreeMap<usize, BTreeSet<usize>> {
        &self.entries
    }

    /// Number of distinct evaluable source words.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Gold source words skipped because they (or all their targets) fell
    /// outside the trimmed vocabularies.
    pub fn skipped_oov(&self) -> usize {
        self.skipped_oov
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn accepts(&self, source: usize, target: usize) -> bool {
        self.entries
            .get(&source)
            .map(|set| set.contains(&target))
            .unwrap_or(false)
    }
}

/// Load a two-column dictionary file against a source and target space.
pub fn load_dictionary(
    path: impl AsRef<Path>,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
) -> Result<GoldDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut entries: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut oov_sources: HashSet<String> = HashSet::new();
    let mut in_vocab_sources: HashSet<usize> = HashSet::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::MalformedDictLine {
                path: path.to_path_buf(),
                line: line_no + 1,
                reason: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        let Some(s) = src.position(fields[0]) else {
            oov_sources.insert(fields[0].to_string());
            continue;
        };
        in_vocab_sources.insert(s);
        if let Some(t) = tgt.position(fields[1]) {
            entries.entry(s).or_default().insert(t);
        }
    }

    // In-vocab sources whose every gold target was out of vocabulary.
    let empty_sources = in_vocab_sources
        .iter()
        .filter(|s| !entries.contains_key(s))
        .count();
    let skipped_oov = oov_sources.len() + empty_sources;

    if entries.is_empty() {
        return Err(Error::NoUsableEntries);
    }
    GoldDictionary::from_entries(entries, skipped_oov, src.len(), tgt.len())
}

//! Ingested data: id maps, binary rating matrix, symmetric social matrix and
//! per-item tag documents, plus the train/test split and the timestamp filter
//! used by the leak experiment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use log::warn;
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("no interaction events to ingest")]
    EmptyInput,
    #[error("entry ({row}, {col}) lies outside a {rows}x{cols} matrix")]
    OutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("negative weight {weight} for user {user}, item {item}")]
    NegativeWeight { user: i64, item: i64, weight: f64 },
    #[error("social matrix carries no timestamps; run with the static social network instead")]
    NoTimestamps,
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("word index {word} is outside a vocabulary of {vocabulary} tokens")]
    WordOutOfRange { word: u32, vocabulary: usize },
    #[error("document for item {item} has a zero word count")]
    ZeroCount { item: usize },
    #[error("social matrix is not symmetric at ({0}, {1})")]
    Asymmetric(u32, u32),
}

/// Sorted set of external ids; the position of an id is its internal index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IdMap {
    ids: Vec<i64>,
}

impl IdMap {
    pub fn from_ids<I: IntoIterator<Item = i64>>(ids: I) -> Self {
        let mut ids: Vec<i64> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: i64) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|i| i as u32)
    }

    pub fn external(&self, index: u32) -> i64 {
        self.ids[index as usize]
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }
}

/// One row of an interaction log (listen counts, bookmarks).
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionEvent {
    pub user: i64,
    pub item: i64,
    pub weight: f64,
    pub timestamp: Option<i64>,
}

/// One friendship / contact row. Direction is irrelevant after ingestion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SocialEdge {
    pub user: i64,
    pub friend: i64,
    pub timestamp: Option<i64>,
}

/// One tag assignment `(user, item, tag)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagEvent {
    pub user: i64,
    pub item: i64,
    pub tag: String,
    pub timestamp: Option<i64>,
}

fn compressed(n_rows: usize, sorted_pairs: &[(u32, u32)]) -> (Vec<usize>, Vec<u32>) {
    let mut ptr = vec![0usize; n_rows + 1];
    for &(r, _) in sorted_pairs {
        ptr[r as usize + 1] += 1;
    }
    for r in 0..n_rows {
        ptr[r + 1] += ptr[r];
    }
    (ptr, sorted_pairs.iter().map(|&(_, c)| c).collect())
}

/// Binary implicit-feedback matrix. Stored entries are the observed `r = 1`
/// cells; everything else is an implicit zero.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(into = "MatrixWire", try_from = "MatrixWire")
)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    user_ptr: Vec<usize>,
    user_items: Vec<u32>,
    item_ptr: Vec<usize>,
    item_users: Vec<u32>,
}

#[cfg(feature = "serde")]
#[derive(Serialize, Deserialize)]
struct MatrixWire {
    n_users: usize,
    n_items: usize,
    entries: Vec<(u32, u32)>,
}

#[cfg(feature = "serde")]
impl From<InteractionMatrix> for MatrixWire {
    fn from(m: InteractionMatrix) -> Self {
        MatrixWire {
            n_users: m.n_users,
            n_items: m.n_items,
            entries: m.entries().collect(),
        }
    }
}

#[cfg(feature = "serde")]
impl TryFrom<MatrixWire> for InteractionMatrix {
    type Error = CorpusError;
    fn try_from(w: MatrixWire) -> Result<Self, CorpusError> {
        InteractionMatrix::from_entries(w.n_users, w.n_items, &w.entries)
    }
}

impl InteractionMatrix {
    /// Builds the matrix from `(user, item)` index pairs; duplicates collapse.
    pub fn from_entries(
        n_users: usize,
        n_items: usize,
        entries: &[(u32, u32)],
    ) -> Result<Self, CorpusError> {
        let mut by_user: Vec<(u32, u32)> = entries.to_vec();
        for &(u, i) in &by_user {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(CorpusError::OutOfRange {
                    row: u as usize,
                    col: i as usize,
                    rows: n_users,
                    cols: n_items,
                });
            }
        }
        by_user.sort_unstable();
        by_user.dedup();
        let mut by_item: Vec<(u32, u32)> = by_user.iter().map(|&(u, i)| (i, u)).collect();
        by_item.sort_unstable();
        let (user_ptr, user_items) = compressed(n_users, &by_user);
        let (item_ptr, item_users) = compressed(n_items, &by_item);
        Ok(Self {
            n_users,
            n_items,
            user_ptr,
            user_items,
            item_ptr,
            item_users,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.user_items.len()
    }

    /// Items rated by `user`, ascending.
    pub fn items_of(&self, user: usize) -> &[u32] {
        &self.user_items[self.user_ptr[user]..self.user_ptr[user + 1]]
    }

    /// Users who rated `item`, ascending.
    pub fn users_of(&self, item: usize) -> &[u32] {
        &self.item_users[self.item_ptr[item]..self.item_ptr[item + 1]]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.items_of(user).binary_search(&(item as u32)).is_ok()
    }

    /// All stored entries in user-major order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n_users).flat_map(move |u| self.items_of(u).iter().map(move |&i| (u as u32, i)))
    }
}

/// Output of [`binarize`]: the id maps plus the 0/1 matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Binarized {
    pub users: IdMap,
    pub items: IdMap,
    pub matrix: InteractionMatrix,
}

/// Collapses interaction events to a binary matrix: `(i, j)` is observed iff
/// at least one event names that pair, whatever its weight.
pub fn binarize(events: &[InteractionEvent]) -> Result<Binarized, CorpusError> {
    if events.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    if let Some(e) = events.iter().find(|e| !(e.weight >= 0.0)) {
        return Err(CorpusError::NegativeWeight {
            user: e.user,
            item: e.item,
            weight: e.weight,
        });
    }
    let users = IdMap::from_ids(events.iter().map(|e| e.user));
    let items = IdMap::from_ids(events.iter().map(|e| e.item));
    let entries: Vec<(u32, u32)> = events
        .iter()
        .map(|e| {
            (
                users.index_of(e.user).unwrap(),
                items.index_of(e.item).unwrap(),
            )
        })
        .collect();
    let matrix = InteractionMatrix::from_entries(users.len(), items.len(), &entries)?;
    Ok(Binarized {
        users,
        items,
        matrix,
    })
}

/// Where social edge times come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TimeSource {
    /// No edge carries a time.
    None,
    /// Times read from the friendship file.
    Native,
    /// Earlier of the two endpoints' first tagging activity.
    ActivityProxy,
}

/// Timestamp cutoff for the evolving-network filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Cutoff {
    Infinite,
    At(i64),
}

impl Cutoff {
    fn admits(self, time: Option<i64>) -> bool {
        match (self, time) {
            (Cutoff::Infinite, _) => true,
            (Cutoff::At(c), Some(t)) => t <= c,
            (Cutoff::At(_), None) => false,
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Infinite => f.write_str("inf"),
            Cutoff::At(t) => write!(f, "{t}"),
        }
    }
}

/// Symmetric 0/1 user-user relation matrix without self-loops.
///
/// Each undirected relation is stored in both directions; both directions
/// share one (optional) time.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(into = "SocialWire", try_from = "SocialWire")
)]
pub struct SocialMatrix {
    n_users: usize,
    ptr: Vec<usize>,
    neighbors: Vec<u32>,
    times: Vec<Option<i64>>,
    time_source: TimeSource,
}

#[cfg(feature = "serde")]
#[derive(Serialize, Deserialize)]
struct SocialWire {
    n_users: usize,
    time_source: TimeSource,
    pairs: Vec<(u32, u32, Option<i64>)>,
}

#[cfg(feature = "serde")]
impl From<SocialMatrix> for SocialWire {
    fn from(s: SocialMatrix) -> Self {
        SocialWire {
            n_users: s.n_users,
            time_source: s.time_source,
            pairs: s.pairs().collect(),
        }
    }
}

#[cfg(feature = "serde")]
impl TryFrom<SocialWire> for SocialMatrix {
    type Error = CorpusError;
    fn try_from(w: SocialWire) -> Result<Self, CorpusError> {
        for &(a, b, _) in &w.pairs {
            if a as usize >= w.n_users || b as usize >= w.n_users {
                return Err(CorpusError::OutOfRange {
                    row: a as usize,
                    col: b as usize,
                    rows: w.n_users,
                    cols: w.n_users,
                });
            }
        }
        let mut pairs = BTreeMap::new();
        for (a, b, t) in w.pairs {
            if a != b {
                pairs.insert((a.min(b), a.max(b)), t);
            }
        }
        Ok(SocialMatrix::from_pairs(w.n_users, &pairs, w.time_source))
    }
}

/// Counters for rows dropped while building the social matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SocialStats {
    pub unknown_users: usize,
    pub self_loops: usize,
}

impl SocialMatrix {
    fn from_pairs(
        n_users: usize,
        pairs: &BTreeMap<(u32, u32), Option<i64>>,
        time_source: TimeSource,
    ) -> Self {
        let mut directed: Vec<(u32, u32, Option<i64>)> = Vec::with_capacity(pairs.len() * 2);
        for (&(a, b), &t) in pairs {
            directed.push((a, b, t));
            directed.push((b, a, t));
        }
        directed.sort_unstable_by_key(|&(a, b, _)| (a, b));
        let keys: Vec<(u32, u32)> = directed.iter().map(|&(a, b, _)| (a, b)).collect();
        let (ptr, neighbors) = compressed(n_users, &keys);
        let times = match time_source {
            TimeSource::None => vec![None; directed.len()],
            _ => directed.iter().map(|&(_, _, t)| t).collect(),
        };
        Self {
            n_users,
            ptr,
            neighbors,
            times,
            time_source,
        }
    }

    /// A social matrix over `n_users` with no relations.
    pub fn empty(n_users: usize) -> Self {
        Self::from_pairs(n_users, &BTreeMap::new(), TimeSource::None)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// Number of stored directed relations (twice the undirected count).
    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn time_source(&self) -> TimeSource {
        self.time_source
    }

    pub fn neighbors(&self, user: usize) -> &[u32] {
        &self.neighbors[self.ptr[user]..self.ptr[user + 1]]
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Undirected relations `(a, b, time)` with `a < b`.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32, Option<i64>)> + '_ {
        (0..self.n_users).flat_map(move |a| {
            let lo = self.ptr[a];
            self.neighbors(a)
                .iter()
                .enumerate()
                .filter(move |(_, &b)| b as usize > a)
                .map(move |(off, &b)| (a as u32, b, self.times[lo + off]))
        })
    }

    fn pair_map(&self) -> BTreeMap<(u32, u32), Option<i64>> {
        self.pairs().map(|(a, b, t)| ((a, b), t)).collect()
    }

    /// Fills edge times from per-user first-activity times: an edge is
    /// dated at the earlier of its endpoints' first activity. Matrices that
    /// already carry native times are returned unchanged.
    pub fn with_activity_proxy(&self, first_activity: &[Option<i64>]) -> SocialMatrix {
        if self.time_source == TimeSource::Native {
            return self.clone();
        }
        let pairs = self
            .pairs()
            .map(|(a, b, _)| {
                let t = match (first_activity[a as usize], first_activity[b as usize]) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                };
                ((a, b), t)
            })
            .collect();
        Self::from_pairs(self.n_users, &pairs, TimeSource::ActivityProxy)
    }

    /// Sorted times of the dated undirected relations.
    pub fn pair_times(&self) -> Vec<i64> {
        let mut t: Vec<i64> = self.pairs().filter_map(|(_, _, t)| t).collect();
        t.sort_unstable();
        t
    }

    /// Nearest-rank quantile of the relation times, `q` in `[0, 1]`.
    pub fn time_quantile(&self, q: f64) -> Option<i64> {
        let t = self.pair_times();
        if t.is_empty() {
            return None;
        }
        let rank = libm::ceil(q.clamp(0.0, 1.0) * t.len() as f64) as usize;
        Some(t[rank.max(1) - 1])
    }

    /// Keeps relations dated at or before `cutoff`. Undated relations
    /// survive only the infinite cutoff.
    pub fn filter_by_time(&self, cutoff: Cutoff) -> Result<SocialMatrix, CorpusError> {
        if self.time_source == TimeSource::None {
            return Err(CorpusError::NoTimestamps);
        }
        let pairs = self
            .pairs()
            .filter(|&(_, _, t)| cutoff.admits(t))
            .map(|(a, b, t)| ((a, b), t))
            .collect();
        Ok(Self::from_pairs(self.n_users, &pairs, self.time_source))
    }

    /// Checks that every stored relation has its mirror.
    pub fn check_symmetry(&self) -> Result<(), CorpusError> {
        for a in 0..self.n_users {
            for &b in self.neighbors(a) {
                if b as usize == a || !self.contains(b as usize, a) {
                    return Err(CorpusError::Asymmetric(a as u32, b));
                }
            }
        }
        Ok(())
    }

    fn restrict(&self, keep: &[Option<u32>], n_users: usize) -> SocialMatrix {
        let pairs = self
            .pair_map()
            .into_iter()
            .filter_map(|((a, b), t)| {
                let (x, y) = (keep[a as usize]?, keep[b as usize]?);
                Some(((x.min(y), x.max(y)), t))
            })
            .collect();
        Self::from_pairs(n_users, &pairs, self.time_source)
    }
}

/// Symmetrizes friendship rows into a [`SocialMatrix`] over `users`.
///
/// Rows naming unknown users and self-loops are dropped and counted. A
/// relation listed in both directions keeps the earlier of its times.
pub fn build_social(edges: &[SocialEdge], users: &IdMap) -> (SocialMatrix, SocialStats) {
    let mut stats = SocialStats::default();
    let mut pairs: BTreeMap<(u32, u32), Option<i64>> = BTreeMap::new();
    let mut dated = false;
    for e in edges {
        let (Some(a), Some(b)) = (users.index_of(e.user), users.index_of(e.friend)) else {
            stats.unknown_users += 1;
            continue;
        };
        if a == b {
            stats.self_loops += 1;
            continue;
        }
        dated |= e.timestamp.is_some();
        let slot = pairs.entry((a.min(b), a.max(b))).or_insert(e.timestamp);
        *slot = match (*slot, e.timestamp) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
    }
    if stats.unknown_users > 0 {
        warn!("dropped {} social rows naming unknown users", stats.unknown_users);
    }
    if stats.self_loops > 0 {
        warn!("dropped {} social self-loops", stats.self_loops);
    }
    let source = if dated {
        TimeSource::Native
    } else {
        TimeSource::None
    };
    (SocialMatrix::from_pairs(users.len(), &pairs, source), stats)
}

/// Bag of words for one item: `(word index, count)` ascending by word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Document {
    words: Vec<(u32, u32)>,
}

impl Document {
    /// Merges repeated words and drops zero counts.
    pub fn from_counts<I: IntoIterator<Item = (u32, u32)>>(counts: I) -> Self {
        let mut merged: BTreeMap<u32, u32> = BTreeMap::new();
        for (w, c) in counts {
            if c > 0 {
                *merged.entry(w).or_default() += c;
            }
        }
        Self {
            words: merged.into_iter().collect(),
        }
    }

    pub fn words(&self) -> &[(u32, u32)] {
        &self.words
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of distinct words.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// Number of tokens.
    pub fn total(&self) -> u64 {
        self.words.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Per-item documents over a shared vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Corpus {
    vocabulary: Vec<String>,
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(vocabulary: Vec<String>, documents: Vec<Document>) -> Result<Self, CorpusError> {
        for (item, doc) in documents.iter().enumerate() {
            for &(w, c) in doc.words() {
                if w as usize >= vocabulary.len() {
                    return Err(CorpusError::WordOutOfRange {
                        word: w,
                        vocabulary: vocabulary.len(),
                    });
                }
                if c == 0 {
                    return Err(CorpusError::ZeroCount { item });
                }
            }
        }
        Ok(Self {
            vocabulary,
            documents,
        })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, item: usize) -> &Document {
        &self.documents[item]
    }

    pub fn n_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.documents.iter().map(Document::total).sum()
    }
}

/// Integer-looking tags sort numerically and ahead of free text.
fn tag_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DocumentStats {
    pub assignments: usize,
    pub unknown_items: usize,
}

/// Builds one document per item in `items`: the multiset of every tag any
/// user applied to it. The vocabulary is every distinct tag seen in the
/// assignments (plus `catalog`, when given) in a fixed order.
pub fn build_documents(
    tags: &[TagEvent],
    items: &IdMap,
    catalog: Option<&[String]>,
) -> (Corpus, DocumentStats) {
    let mut distinct: BTreeSet<&str> = tags.iter().map(|t| t.tag.as_str()).collect();
    if let Some(cat) = catalog {
        distinct.extend(cat.iter().map(String::as_str));
    }
    let mut vocabulary: Vec<&str> = distinct.into_iter().collect();
    vocabulary.sort_by(|a, b| tag_order(a, b));
    let index: BTreeMap<&str, u32> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i as u32))
        .collect();

    let mut stats = DocumentStats {
        assignments: tags.len(),
        unknown_items: 0,
    };
    let mut counts: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); items.len()];
    for t in tags {
        match items.index_of(t.item) {
            Some(j) => *counts[j as usize].entry(index[t.tag.as_str()]).or_default() += 1,
            None => stats.unknown_items += 1,
        }
    }
    if stats.unknown_items > 0 {
        warn!(
            "{} tag assignments name items without interactions; left out of documents",
            stats.unknown_items
        );
    }
    let documents = counts.into_iter().map(Document::from_counts).collect();
    let vocabulary = vocabulary.into_iter().map(String::from).collect();
    (
        Corpus {
            vocabulary,
            documents,
        },
        stats,
    )
}

/// First dated tagging activity per user index.
pub fn first_activity(tags: &[TagEvent], users: &IdMap) -> Vec<Option<i64>> {
    let mut first: Vec<Option<i64>> = vec![None; users.len()];
    for t in tags {
        if let (Some(u), Some(ts)) = (users.index_of(t.user), t.timestamp) {
            let slot = &mut first[u as usize];
            *slot = Some(slot.map_or(ts, |cur| cur.min(ts)));
        }
    }
    first
}

/// Percentage of empty cells in a `users x items` matrix with `nnz` entries.
pub fn sparsity_percent(users: usize, items: usize, nnz: usize) -> f64 {
    100.0 * (1.0 - nnz as f64 / (users as f64 * items as f64))
}

/// 128-bit digest identifying a dataset's id maps (and subsampling).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Fingerprint(pub [u8; 16]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Densest-first subsampling request.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Subsample {
    pub max_users: Option<usize>,
    pub max_items: Option<usize>,
}

/// Table-1 style counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IngestStats {
    pub users: usize,
    pub items: usize,
    pub tags: usize,
    /// Friendship rows as listed in the input (after subsampling: kept
    /// directed relations).
    pub relations: usize,
    pub tag_assignments: usize,
    pub interactions: usize,
    pub social: SocialStats,
    pub unknown_tag_items: usize,
}

impl IngestStats {
    pub fn sparsity_percent(&self) -> f64 {
        sparsity_percent(self.users, self.items, self.interactions)
    }
}

/// Raw rows handed to [`Dataset::assemble`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Sources<'a> {
    pub interactions: &'a [InteractionEvent],
    pub friendships: Option<&'a [SocialEdge]>,
    pub tags: Option<&'a [TagEvent]>,
    pub tag_catalog: Option<&'a [String]>,
}

/// A fully ingested dataset.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Dataset {
    pub users: IdMap,
    pub items: IdMap,
    pub ratings: InteractionMatrix,
    pub social: Option<SocialMatrix>,
    pub corpus: Option<Corpus>,
    pub stats: IngestStats,
    pub subsample: Option<Subsample>,
}

impl Dataset {
    /// Users and items come from the interaction rows; friendships and tags
    /// are mapped onto them. Undated friendships get activity-proxy times
    /// when the tag rows carry timestamps.
    pub fn assemble(src: Sources<'_>) -> Result<Self, CorpusError> {
        let Binarized {
            users,
            items,
            matrix,
        } = binarize(src.interactions)?;
        let mut stats = IngestStats {
            users: users.len(),
            items: items.len(),
            interactions: matrix.nnz(),
            ..IngestStats::default()
        };
        let mut social = src.friendships.map(|edges| {
            let (s, st) = build_social(edges, &users);
            stats.social = st;
            stats.relations = edges.len();
            s
        });
        let corpus = src.tags.map(|tags| {
            let (c, st) = build_documents(tags, &items, src.tag_catalog);
            stats.tags = c.vocabulary_size();
            stats.tag_assignments = st.assignments;
            stats.unknown_tag_items = st.unknown_items;
            c
        });
        if let (Some(s), Some(tags)) = (social.as_mut(), src.tags) {
            if s.time_source() == TimeSource::None && tags.iter().any(|t| t.timestamp.is_some()) {
                *s = s.with_activity_proxy(&first_activity(tags, &users));
            }
        }
        Ok(Self {
            users,
            items,
            ratings: matrix,
            social,
            corpus,
            stats,
            subsample: None,
        })
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Sha256::new();
        h.update(b"users");
        h.update((self.users.len() as u64).to_le_bytes());
        for id in self.users.ids() {
            h.update(id.to_le_bytes());
        }
        h.update(b"items");
        h.update((self.items.len() as u64).to_le_bytes());
        for id in self.items.ids() {
            h.update(id.to_le_bytes());
        }
        if let Some(s) = self.subsample {
            h.update(b"subsample");
            for v in [s.max_users, s.max_items] {
                h.update(v.map_or(u64::MAX, |x| x as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&digest[..16]);
        Fingerprint(out)
    }

    /// Keeps the `max_users` users with the most interactions, then the
    /// `max_items` items most rated by those users. Ties go to the lower
    /// index. Documents and the vocabulary are pruned to what survives.
    pub fn subsample(&self, spec: Subsample) -> Result<Dataset, CorpusError> {
        let r = &self.ratings;
        let mut users: Vec<usize> = (0..r.n_users()).collect();
        users.sort_by_key(|&u| (core::cmp::Reverse(r.items_of(u).len()), u));
        users.truncate(spec.max_users.unwrap_or(usize::MAX));
        users.sort_unstable();

        let mut item_degree = vec![0usize; r.n_items()];
        for &u in &users {
            for &i in r.items_of(u) {
                item_degree[i as usize] += 1;
            }
        }
        let mut items: Vec<usize> = (0..r.n_items()).filter(|&i| item_degree[i] > 0).collect();
        items.sort_by_key(|&i| (core::cmp::Reverse(item_degree[i]), i));
        items.truncate(spec.max_items.unwrap_or(usize::MAX));
        items.sort_unstable();

        let mut user_map = vec![None; r.n_users()];
        for (new, &old) in users.iter().enumerate() {
            user_map[old] = Some(new as u32);
        }
        let mut item_map = vec![None; r.n_items()];
        for (new, &old) in items.iter().enumerate() {
            item_map[old] = Some(new as u32);
        }
        let entries: Vec<(u32, u32)> = r
            .entries()
            .filter_map(|(u, i)| Some((user_map[u as usize]?, item_map[i as usize]?)))
            .collect();
        let ratings = InteractionMatrix::from_entries(users.len(), items.len(), &entries)?;
        let social = self
            .social
            .as_ref()
            .map(|s| s.restrict(&user_map, users.len()));
        let corpus = match &self.corpus {
            Some(c) => {
                let mut used = vec![false; c.vocabulary_size()];
                for &j in &items {
                    for &(w, _) in c.document(j).words() {
                        used[w as usize] = true;
                    }
                }
                let mut word_map = vec![None; used.len()];
                let mut vocabulary = Vec::new();
                for (w, _) in used.iter().enumerate().filter(|(_, &u)| u) {
                    word_map[w] = Some(vocabulary.len() as u32);
                    vocabulary.push(c.vocabulary()[w].clone());
                }
                let documents = items
                    .iter()
                    .map(|&j| {
                        Document::from_counts(
                            c.document(j)
                                .words()
                                .iter()
                                .map(|&(w, n)| (word_map[w as usize].unwrap(), n)),
                        )
                    })
                    .collect();
                Some(Corpus::new(vocabulary, documents)?)
            }
            None => None,
        };
        let stats = IngestStats {
            users: users.len(),
            items: items.len(),
            tags: corpus.as_ref().map_or(0, Corpus::vocabulary_size),
            relations: social.as_ref().map_or(0, SocialMatrix::edge_count),
            tag_assignments: corpus.as_ref().map_or(0, |c| c.total_tokens() as usize),
            interactions: ratings.nnz(),
            ..self.stats
        };
        Ok(Dataset {
            users: IdMap {
                ids: users.iter().map(|&u| self.users.external(u as u32)).collect(),
            },
            items: IdMap {
                ids: items.iter().map(|&i| self.items.external(i as u32)).collect(),
            },
            ratings,
            social,
            corpus,
            stats,
            subsample: Some(spec),
        })
    }

    /// Splits the observed ratings; the split remembers this dataset's
    /// fingerprint.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<SplitDataset, CorpusError> {
        let mut s = split(&self.ratings, test_fraction, seed)?;
        s.fingerprint = Some(self.fingerprint());
        Ok(s)
    }
}

/// Disjoint train/test partition of the observed ratings.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionMatrix,
    pub test: InteractionMatrix,
    pub seed: u64,
    pub test_fraction: f64,
    /// Test entries whose item has no remaining training rating.
    pub relaxed: usize,
    pub fingerprint: Option<Fingerprint>,
}

/// Entry-level random split with `round(fraction * nnz)` test entries.
///
/// Entries are visited in a seeded random order and moved to the test side
/// only while their item keeps at least one training rating. If that leaves
/// the test side short, the remaining quota is filled from the skipped
/// entries and counted in [`SplitDataset::relaxed`].
pub fn split(
    matrix: &InteractionMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDataset, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::BadFraction(test_fraction));
    }
    let mut entries: Vec<(u32, u32)> = matrix.entries().collect();
    let target = (libm::round(test_fraction * entries.len() as f64) as usize).min(entries.len());
    entries.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT));

    let mut remaining: Vec<usize> = (0..matrix.n_items())
        .map(|i| matrix.users_of(i).len())
        .collect();
    let mut to_test = vec![false; entries.len()];
    let mut n_test = 0;
    for (k, &(_, i)) in entries.iter().enumerate() {
        if n_test == target {
            break;
        }
        if remaining[i as usize] > 1 {
            remaining[i as usize] -= 1;
            to_test[k] = true;
            n_test += 1;
        }
    }
    let relaxed = target - n_test;
    if relaxed > 0 {
        warn!("{relaxed} test entries have no other training rating for their item");
        for flag in to_test.iter_mut().filter(|f| !**f).take(relaxed) {
            *flag = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = entries
        .iter()
        .zip(&to_test)
        .partition(|(_, &t)| t);
    let test: Vec<(u32, u32)> = test.into_iter().map(|(&e, _)| e).collect();
    let train: Vec<(u32, u32)> = train.into_iter().map(|(&e, _)| e).collect();
    Ok(SplitDataset {
        train: InteractionMatrix::from_entries(matrix.n_users(), matrix.n_items(), &train)?,
        test: InteractionMatrix::from_entries(matrix.n_users(), matrix.n_items(), &test)?,
        seed,
        test_fraction,
        relaxed,
        fingerprint: None,
    })
}
